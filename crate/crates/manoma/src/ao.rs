//! Alternating optimization of the precoder and the decoding matrix.
//!
//! For a fixed channel, the inner loop alternates one convex precoding step
//! with one annealed greedy pass over the decoding matrix, cooling the
//! temperature geometrically until it falls below a threshold or the
//! max-min rate stops changing.  The channel is normalized by the noise
//! standard deviation up front so the convex subproblems are solved at unit
//! noise power regardless of how small the physical noise is.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::decoding_search::greedy_search;
use crate::error::{Error, Result};
use crate::precoding::{random_precoder, sca_step};
use crate::rates::{min_rate, order_users, DecodingMatrix, Precoder, UserOrder};
use crate::stochastic::RngStream;

#[derive(Debug, Clone, Copy)]
pub struct AoParams {
    /// initial annealing temperature
    pub t0: f64,
    /// geometric temperature decay per iteration
    pub alpha: f64,
    /// temperature threshold ending the loop
    pub eps1: f64,
    /// rate-change threshold ending the loop
    pub eps2: f64,
    /// bad-flip acceptance scale in the greedy pass
    pub xi: f64,
    /// hard cap on iterations
    pub max_iters: usize,
}

impl Default for AoParams {
    fn default() -> Self {
        AoParams {
            t0: 5.0,
            alpha: 0.8,
            eps1: 1e-3,
            eps2: 1e-3,
            xi: 0.1,
            max_iters: 100,
        }
    }
}

impl AoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0) {
            return Err(Error::param("t0", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1)"));
        }
        if !(self.eps1 > 0.0) || !(self.eps2 > 0.0) {
            return Err(Error::param("eps1/eps2", "must be positive"));
        }
        if self.xi < 0.0 {
            return Err(Error::param("xi", "must be non-negative"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AoResult {
    /// max-min achievable rate, bps/Hz
    pub rate: f64,
    pub precoder: Precoder,
    pub decoding: DecodingMatrix,
    pub order: UserOrder,
    /// max-min rate after each completed iteration
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// count of convex precoding steps that failed and were skipped
    pub solver_failures: usize,
}

/// Runs the inner loop from a random precoder.
pub fn ao_solve(
    h: &DMatrix<Complex64>,
    sigma2: f64,
    p_max: f64,
    params: &AoParams,
    rng: &mut RngStream,
) -> Result<AoResult> {
    let n = h.nrows();
    let k = h.ncols();
    let w0 = random_precoder(n, k, p_max, rng)?.w;
    ao_solve_from(h, sigma2, p_max, &w0, params, rng)
}

/// Runs the inner loop from a caller-supplied starting precoder (warm
/// start for repeated solves on nearby channels).
pub fn ao_solve_from(
    h: &DMatrix<Complex64>,
    sigma2: f64,
    p_max: f64,
    w_start: &DMatrix<Complex64>,
    params: &AoParams,
    rng: &mut RngStream,
) -> Result<AoResult> {
    params.validate()?;
    if sigma2 <= 0.0 || p_max <= 0.0 {
        return Err(Error::param("sigma2/p_max", "must be positive"));
    }
    let k = h.ncols();
    if w_start.nrows() != h.nrows() || w_start.ncols() != k {
        return Err(Error::DimensionMismatch(
            "starting precoder does not match channel".into(),
        ));
    }
    // unit-noise normalization keeps the convex subproblems well scaled
    let hn = h.map(|v| v / Complex64::new(sigma2.sqrt(), 0.0));
    let order = order_users(&hn);

    let mut m = DecodingMatrix::identity(k);
    let mut w = w_start.clone();
    let mut f_prev = min_rate(
        &hn,
        &Precoder {
            w: w.clone(),
            power_budget: p_max,
        },
        &m,
        &order,
        1.0,
    );
    let mut trace = Vec::new();
    let mut t_step = 1usize;
    let mut temperature = params.t0;
    let mut solver_failures = 0usize;

    while temperature > params.eps1 && t_step <= params.max_iters {
        let mut step_failed = false;
        match sca_step(&hn, &order, &m, &w, p_max, 1.0) {
            Ok((w_new, _)) => w = w_new,
            Err(Error::SolverFailure(_)) => {
                solver_failures += 1;
                step_failed = true;
            }
            Err(e) => return Err(e),
        }
        let prec = Precoder {
            w: w.clone(),
            power_budget: p_max,
        };
        let g = greedy_search(&hn, &prec, &order, 1.0, &m, temperature, params.xi, rng)?;
        m = g.m;
        let f = g.rate;
        trace.push(f);
        // a failed precoding step leaves the iterate unchanged; treating
        // that as convergence would lock in the starting precoder
        if !step_failed && (f - f_prev).abs() < params.eps2 {
            break;
        }
        f_prev = f;
        t_step += 1;
        temperature = params.alpha.powi(t_step as i32) * params.t0;
    }

    let precoder = Precoder {
        w,
        power_budget: p_max,
    };
    let rate = min_rate(&hn, &precoder, &m, &order, 1.0);
    Ok(AoResult {
        rate,
        precoder,
        decoding: m,
        order,
        trace,
        iterations: t_step,
        solver_failures,
    })
}
