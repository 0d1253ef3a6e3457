//! Greedy search over decoding indicator matrices.
//!
//! With the precoder fixed, each strict-upper-triangle entry of the decoding
//! matrix is flipped once in row-major order.  Flips that raise the max-min
//! rate are kept in the working matrix; the best of them is remembered as
//! the good candidate.  Flips that lower it are reverted, but each may still
//! be recorded as the bad candidate with probability `min(xi * T, 1)`, where
//! `T` is the annealing temperature.  The chosen candidate then replaces the
//! incumbent under a Metropolis test, so early iterations (high `T`) can
//! escape local optima while late iterations become purely greedy.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rates::{min_rate, DecodingMatrix, Precoder, UserOrder};
use crate::stochastic::RngStream;

#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub m: DecodingMatrix,
    /// max-min rate of the returned matrix
    pub rate: f64,
    /// number of rate evaluations spent on flips, always `K(K-1)/2`
    pub evaluations: usize,
}

/// One annealed greedy pass; returns the accepted decoding matrix.
pub fn greedy_search(
    h: &DMatrix<Complex64>,
    w: &Precoder,
    order: &UserOrder,
    sigma2: f64,
    m_prev: &DecodingMatrix,
    temperature: f64,
    xi: f64,
    rng: &mut RngStream,
) -> Result<GreedyResult> {
    let kk = order.n_users();
    if m_prev.n_users() != kk || h.ncols() != kk {
        return Err(Error::DimensionMismatch(
            "decoding matrix size does not match channel".into(),
        ));
    }
    if temperature < 0.0 || xi < 0.0 {
        return Err(Error::param("temperature/xi", "must be non-negative"));
    }
    let rate_prev = min_rate(h, w, m_prev, order, sigma2);

    let mut working = m_prev.clone();
    let mut rate_working = rate_prev;
    let mut good: Option<(f64, DecodingMatrix)> = None;
    let mut bad: Option<(f64, DecodingMatrix)> = None;
    let mut evaluations = 0;

    for k in 0..kk {
        for j in (k + 1)..kk {
            working.flip(k, j);
            let rate = min_rate(h, w, &working, order, sigma2);
            evaluations += 1;
            if rate > rate_working {
                rate_working = rate;
                if good.as_ref().map_or(true, |(r, _)| rate > *r) {
                    good = Some((rate, working.clone()));
                }
            } else {
                if rng.uniform_unit() < (xi * temperature).min(1.0)
                    && bad.as_ref().map_or(true, |(r, _)| rate > *r)
                {
                    bad = Some((rate, working.clone()));
                }
                working.flip(k, j);
            }
        }
    }

    let (rate_cand, m_cand) = match (good, bad) {
        (Some(g), _) => g,
        (None, Some(b)) => b,
        (None, None) => {
            return Ok(GreedyResult {
                m: m_prev.clone(),
                rate: rate_prev,
                evaluations,
            })
        }
    };

    // Metropolis acceptance against the incumbent
    let accept = if rate_cand >= rate_prev {
        true
    } else if temperature > 0.0 {
        rng.uniform_unit() < ((rate_cand - rate_prev) / temperature).exp()
    } else {
        false
    };
    if accept {
        Ok(GreedyResult {
            m: m_cand,
            rate: rate_cand,
            evaluations,
        })
    } else {
        Ok(GreedyResult {
            m: m_prev.clone(),
            rate: rate_prev,
            evaluations,
        })
    }
}

/// Enumerates every valid decoding matrix; only tractable for small `K`.
pub fn exhaustive_search(
    h: &DMatrix<Complex64>,
    w: &Precoder,
    order: &UserOrder,
    sigma2: f64,
) -> Result<(DecodingMatrix, f64)> {
    let kk = order.n_users();
    if kk > 5 {
        return Err(Error::Precondition(format!(
            "exhaustive search limited to K <= 5, got K = {kk}"
        )));
    }
    let entries: Vec<(usize, usize)> = (0..kk)
        .flat_map(|k| ((k + 1)..kk).map(move |j| (k, j)))
        .collect();
    let mut best_m = DecodingMatrix::identity(kk);
    let mut best_rate = f64::NEG_INFINITY;
    for mask in 0..(1u64 << entries.len()) {
        let mut m = DecodingMatrix::identity(kk);
        for (bit, &(k, j)) in entries.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                m.flip(k, j);
            }
        }
        let rate = min_rate(h, w, &m, order, sigma2);
        if rate > best_rate {
            best_rate = rate;
            best_m = m;
        }
    }
    Ok((best_m, best_rate))
}
