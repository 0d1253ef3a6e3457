//! Adaptive-SIC SINR and achievable-rate computation.
//!
//! All decoding quantities are expressed in gain order: `pi[k]` is the
//! natural index of the user with the `k`-th largest channel gain, and the
//! decoding indicator matrix is indexed in that order throughout.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Permutation of users by descending squared channel norm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserOrder {
    /// `pi[k]` = natural user index with the `k`-th largest gain (0-based).
    pub pi: Vec<usize>,
}

impl UserOrder {
    pub fn identity(k: usize) -> Self {
        UserOrder {
            pi: (0..k).collect(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.pi.len()
    }
}

/// Sorts users by descending squared column norm; ties broken by lower
/// natural index first.
pub fn order_users(h: &DMatrix<Complex64>) -> UserOrder {
    let gains: Vec<f64> = (0..h.ncols()).map(|k| h.column(k).norm_squared()).collect();
    let mut pi: Vec<usize> = (0..h.ncols()).collect();
    pi.sort_by(|&a, &b| {
        gains[b]
            .partial_cmp(&gains[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    UserOrder { pi }
}

/// Binary upper-triangular decoding indicator matrix with unit diagonal,
/// indexed in gain order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodingMatrix {
    m: Vec<Vec<u8>>,
}

impl DecodingMatrix {
    /// SDMA: each user decodes only its own signal.
    pub fn identity(k: usize) -> Self {
        let mut m = vec![vec![0u8; k]; k];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1;
        }
        DecodingMatrix { m }
    }

    /// Conventional fixed-SIC NOMA: all upper-triangle entries set.
    pub fn full_sic(k: usize) -> Self {
        let mut m = vec![vec![0u8; k]; k];
        for (i, row) in m.iter_mut().enumerate() {
            for j in i..k {
                row[j] = 1;
            }
        }
        DecodingMatrix { m }
    }

    pub fn from_rows(m: Vec<Vec<u8>>) -> Result<Self> {
        let dm = DecodingMatrix { m };
        dm.validate()?;
        Ok(dm)
    }

    pub fn n_users(&self) -> usize {
        self.m.len()
    }

    /// Entry `m[pi_k, pi_j]` by order positions `k`, `j`.
    pub fn get(&self, k: usize, j: usize) -> u8 {
        self.m[k][j]
    }

    /// Toggles a strict-upper-triangle entry.
    pub fn flip(&mut self, k: usize, j: usize) {
        assert!(k < j, "only strict upper triangle entries are mutable");
        self.m[k][j] = 1 - self.m[k][j];
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.m.len();
        for (i, row) in self.m.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch("ragged decoding matrix".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::Precondition("decoding entries must be binary".into()));
                }
                if i == j && v != 1 {
                    return Err(Error::Precondition("decoding diagonal must be 1".into()));
                }
                if i > j && v != 0 {
                    return Err(Error::Precondition(
                        "strict lower triangle must be 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Precoding matrix with a total-power budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Precoder {
    /// `N x K`; column `k` serves user `k` in natural index.
    pub w: DMatrix<Complex64>,
    /// Watts
    pub power_budget: f64,
}

impl Precoder {
    pub fn total_power(&self) -> f64 {
        self.w.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn satisfies_budget(&self, tol: f64) -> bool {
        self.total_power() <= self.power_budget + tol
    }
}

/// Per-user rates in gain order plus the supporting SINR table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateResult {
    /// `R_j` in gain order, bps/Hz.
    pub per_user_rates: Vec<f64>,
    pub min_rate: f64,
    /// `gamma_{pi_k -> pi_j}` for `k <= j`; entries below the diagonal are 0.
    pub sinr_table: Vec<Vec<f64>>,
}

fn cross_power(h: &DMatrix<Complex64>, w: &DMatrix<Complex64>, user: usize, col: usize) -> f64 {
    h.column(user).dotc(&w.column(col)).norm_sqr()
}

/// SINR at user `pi_k` decoding its own message (order position `k`).
pub fn sinr_self(
    h: &DMatrix<Complex64>,
    w: &Precoder,
    m: &DecodingMatrix,
    order: &UserOrder,
    sigma2: f64,
    k: usize,
) -> f64 {
    let uk = order.pi[k];
    let num = cross_power(h, &w.w, uk, uk);
    let mut den = sigma2;
    for i in 0..order.n_users() {
        if m.get(k, i) == 0 {
            den += cross_power(h, &w.w, uk, order.pi[i]);
        }
    }
    num / den
}

/// SINR at user `pi_k` decoding the message of user `pi_j`, `k < j`.
pub fn sinr_cross(
    h: &DMatrix<Complex64>,
    w: &Precoder,
    m: &DecodingMatrix,
    order: &UserOrder,
    sigma2: f64,
    k: usize,
    j: usize,
) -> Result<f64> {
    if k >= j || j >= order.n_users() {
        return Err(Error::IndexError(format!(
            "sinr_cross requires k < j < K, got k={k}, j={j}"
        )));
    }
    let uk = order.pi[k];
    let num = cross_power(h, &w.w, uk, order.pi[j]);
    let mut den = sigma2;
    for i in 0..j {
        den += cross_power(h, &w.w, uk, order.pi[i]);
    }
    for i in j..order.n_users() {
        if m.get(k, i) == 0 {
            den += cross_power(h, &w.w, uk, order.pi[i]);
        }
    }
    Ok(num / den)
}

/// Rates under adaptive SIC: `R_j = log2(1 + min over decoders of gamma)`,
/// where the decoder set `{k <= j : m[k][j] = 1}` always contains `j`.
pub fn achievable_rates(
    h: &DMatrix<Complex64>,
    w: &Precoder,
    m: &DecodingMatrix,
    order: &UserOrder,
    sigma2: f64,
) -> RateResult {
    let kk = order.n_users();
    let mut table = vec![vec![0.0; kk]; kk];
    for k in 0..kk {
        table[k][k] = sinr_self(h, w, m, order, sigma2, k);
        for j in (k + 1)..kk {
            table[k][j] = sinr_cross(h, w, m, order, sigma2, k, j).expect("k < j by loop bounds");
        }
    }
    let mut rates = Vec::with_capacity(kk);
    for j in 0..kk {
        let gamma = (0..=j)
            .filter(|&k| m.get(k, j) == 1)
            .map(|k| table[k][j])
            .fold(f64::INFINITY, f64::min);
        rates.push((1.0 + gamma).log2());
    }
    let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
    RateResult {
        per_user_rates: rates,
        min_rate,
        sinr_table: table,
    }
}

/// `f(W, M | u) = min_j R_j`.
pub fn min_rate(
    h: &DMatrix<Complex64>,
    w: &Precoder,
    m: &DecodingMatrix,
    order: &UserOrder,
    sigma2: f64,
) -> f64 {
    achievable_rates(h, w, m, order, sigma2).min_rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RngStream;

    fn random_instance(
        rng: &mut RngStream,
        n: usize,
        k: usize,
    ) -> (DMatrix<Complex64>, Precoder, DecodingMatrix, UserOrder) {
        let h = DMatrix::from_fn(n, k, |_, _| rng.cscg(1.0).unwrap());
        let w = DMatrix::from_fn(n, k, |_, _| rng.cscg(1.0).unwrap());
        let order = order_users(&h);
        let mut m = DecodingMatrix::identity(k);
        for a in 0..k {
            for b in (a + 1)..k {
                if rng.uniform_unit() < 0.5 {
                    m.flip(a, b);
                }
            }
        }
        (
            h,
            Precoder {
                w,
                power_budget: f64::INFINITY,
            },
            m,
            order,
        )
    }

    /// Independent double-loop oracle for the full SINR table.
    fn sinr_oracle(
        h: &DMatrix<Complex64>,
        w: &Precoder,
        m: &DecodingMatrix,
        order: &UserOrder,
        sigma2: f64,
        k: usize,
        j: usize,
    ) -> f64 {
        let kk = order.n_users();
        let p = |user: usize, col: usize| -> f64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..h.nrows() {
                acc += h[(a, user)].conj() * w.w[(a, col)];
            }
            acc.norm_sqr()
        };
        let uk = order.pi[k];
        let num = p(uk, order.pi[j]);
        let mut den = sigma2;
        if k == j {
            for i in 0..kk {
                if m.get(k, i) == 0 {
                    den += p(uk, order.pi[i]);
                }
            }
        } else {
            for i in 0..kk {
                if i < j || m.get(k, i) == 0 {
                    den += p(uk, order.pi[i]);
                }
            }
        }
        num / den
    }

    #[test]
    fn order_users_sorts_by_gain() {
        // gains (3, 1, 2) -> order (0, 2, 1)
        let h = DMatrix::from_row_slice(
            1,
            3,
            &[
                Complex64::new(3f64.sqrt(), 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(2f64.sqrt(), 0.0),
            ],
        );
        assert_eq!(order_users(&h).pi, vec![0, 2, 1]);

        let single = DMatrix::from_element(2, 1, Complex64::new(1.0, 0.0));
        assert_eq!(order_users(&single).pi, vec![0]);
    }

    #[test]
    fn order_users_ties_broken_by_index() {
        let h = DMatrix::from_element(2, 3, Complex64::new(1.0, 0.0));
        assert_eq!(order_users(&h).pi, vec![0, 1, 2]);
    }

    #[test]
    fn order_users_matches_reference_sort() {
        let mut rng = RngStream::new(21, 0);
        for _ in 0..50 {
            let h = DMatrix::from_fn(3, 5, |_, _| rng.cscg(1.0).unwrap());
            let got = order_users(&h).pi;
            // reference: repeatedly extract the max
            let mut gains: Vec<(usize, f64)> = (0..5)
                .map(|k| (k, h.column(k).norm_squared()))
                .collect();
            let mut want = Vec::new();
            while !gains.is_empty() {
                let mut best = 0;
                for i in 1..gains.len() {
                    if gains[i].1 > gains[best].1 {
                        best = i;
                    }
                }
                want.push(gains.remove(best).0);
            }
            assert_eq!(got, want);
        }
    }

    #[test]
    fn sinr_self_direct_arithmetic() {
        // |h^H w_self|^2 = 1, one interferer contributing 0.5 with m = 0,
        // sigma2 = 0.5 -> gamma = 1
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        let w = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.5f64.sqrt(), 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        let p = Precoder {
            w,
            power_budget: f64::INFINITY,
        };
        let order = UserOrder::identity(2);
        let m = DecodingMatrix::identity(2);
        let g = sinr_self(&h, &p, &m, &order, 0.5, 0);
        assert!((g - 1.0).abs() < 1e-12, "gamma = {g}");
    }

    #[test]
    fn sinr_self_interference_free_with_all_ones_row() {
        let mut rng = RngStream::new(22, 0);
        let (h, w, _, order) = random_instance(&mut rng, 3, 3);
        let m = DecodingMatrix::full_sic(3);
        let sigma2 = 0.7;
        let g = sinr_self(&h, &w, &m, &order, sigma2, 0);
        let u = order.pi[0];
        let want = h.column(u).dotc(&w.w.column(u)).norm_sqr() / sigma2;
        assert!((g - want).abs() < 1e-12 * want);
    }

    #[test]
    fn sinr_matches_oracle_on_random_instances() {
        let mut rng = RngStream::new(23, 0);
        for _ in 0..100 {
            let (h, w, m, order) = random_instance(&mut rng, 3, 4);
            let sigma2 = 0.3;
            for k in 0..4 {
                let g = sinr_self(&h, &w, &m, &order, sigma2, k);
                let o = sinr_oracle(&h, &w, &m, &order, sigma2, k, k);
                assert!((g - o).abs() <= 1e-12 * o.abs().max(1e-300));
                for j in (k + 1)..4 {
                    let g = sinr_cross(&h, &w, &m, &order, sigma2, k, j).unwrap();
                    let o = sinr_oracle(&h, &w, &m, &order, sigma2, k, j);
                    assert!((g - o).abs() <= 1e-12 * o.abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn sinr_cross_rejects_bad_indices() {
        let mut rng = RngStream::new(24, 0);
        let (h, w, m, order) = random_instance(&mut rng, 2, 3);
        assert!(sinr_cross(&h, &w, &m, &order, 1.0, 1, 1).is_err());
        assert!(sinr_cross(&h, &w, &m, &order, 1.0, 2, 1).is_err());
    }

    #[test]
    fn single_user_unit_snr_gives_one_bps() {
        let h = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let w = Precoder {
            w: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            power_budget: 1.0,
        };
        let r = achievable_rates(&h, &w, &DecodingMatrix::identity(1), &UserOrder::identity(1), 1.0);
        assert!((r.per_user_rates[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.min_rate, r.per_user_rates[0]);
    }

    #[test]
    fn identity_decoding_degenerates_to_sdma() {
        let mut rng = RngStream::new(25, 0);
        let (h, w, _, order) = random_instance(&mut rng, 3, 3);
        let m = DecodingMatrix::identity(3);
        let sigma2 = 0.5;
        let r = achievable_rates(&h, &w, &m, &order, sigma2);
        for j in 0..3 {
            let want = (1.0 + sinr_self(&h, &w, &m, &order, sigma2, j)).log2();
            assert!((r.per_user_rates[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rates_match_decoder_set_enumeration() {
        let mut rng = RngStream::new(26, 0);
        for _ in 0..50 {
            let (h, w, m, order) = random_instance(&mut rng, 2, 3);
            let sigma2 = 0.4;
            let r = achievable_rates(&h, &w, &m, &order, sigma2);
            for j in 0..3 {
                let mut gamma = f64::INFINITY;
                for k in 0..=j {
                    if m.get(k, j) == 1 {
                        gamma = gamma.min(sinr_oracle(&h, &w, &m, &order, sigma2, k, j));
                    }
                }
                assert!((r.per_user_rates[j] - (1.0 + gamma).log2()).abs() < 1e-12);
            }
            assert!(
                (min_rate(&h, &w, &m, &order, sigma2)
                    - r.per_user_rates.iter().copied().fold(f64::INFINITY, f64::min))
                .abs()
                    < 1e-15
            );
        }
    }

    #[test]
    fn min_rate_is_minimum() {
        let rates = [2.0, 1.0, 3.0];
        assert_eq!(rates.iter().copied().fold(f64::INFINITY, f64::min), 1.0);
    }

    #[test]
    fn scaling_invariance() {
        let mut rng = RngStream::new(27, 0);
        let (h, w, m, order) = random_instance(&mut rng, 3, 3);
        let sigma2 = 0.9;
        let c = 3.7;
        let h2 = h.map(|v| v * c);
        let r1 = achievable_rates(&h, &w, &m, &order, sigma2);
        let r2 = achievable_rates(&h2, &w, &m, &order, sigma2 * c * c);
        for (a, b) in r1.per_user_rates.iter().zip(r2.per_user_rates.iter()) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn decoding_flip_never_decreases_self_sinr() {
        let mut rng = RngStream::new(28, 0);
        for _ in 0..50 {
            let (h, w, _, order) = random_instance(&mut rng, 3, 4);
            let sigma2 = 0.2;
            let mut m = DecodingMatrix::identity(4);
            for k in 0..4 {
                for j in (k + 1)..4 {
                    let before = sinr_self(&h, &w, &m, &order, sigma2, k);
                    m.flip(k, j);
                    let after = sinr_self(&h, &w, &m, &order, sigma2, k);
                    assert!(after >= before - 1e-15);
                    m.flip(k, j);
                }
            }
        }
    }

    #[test]
    fn full_sic_matches_fixed_sic_formula() {
        let mut rng = RngStream::new(29, 0);
        for _ in 0..30 {
            let (h, w, _, order) = random_instance(&mut rng, 3, 4);
            let sigma2 = 0.6;
            let m = DecodingMatrix::full_sic(4);
            for k in 0..4 {
                for j in k..4 {
                    let got = if k == j {
                        sinr_self(&h, &w, &m, &order, sigma2, k)
                    } else {
                        sinr_cross(&h, &w, &m, &order, sigma2, k, j).unwrap()
                    };
                    // separately coded conventional fixed-SIC SINR: only
                    // earlier-decoded (i < j) signals interfere
                    let uk = order.pi[k];
                    let num = h.column(uk).dotc(&w.w.column(order.pi[j])).norm_sqr();
                    let mut den = sigma2;
                    for i in 0..j {
                        den += h.column(uk).dotc(&w.w.column(order.pi[i])).norm_sqr();
                    }
                    let want = num / den;
                    assert!((got - want).abs() < 1e-12 * want.max(1e-300));
                }
            }
        }
    }

    #[test]
    fn sinr_table_finite_nonnegative() {
        let mut rng = RngStream::new(30, 0);
        let (h, w, m, order) = random_instance(&mut rng, 2, 4);
        let r = achievable_rates(&h, &w, &m, &order, 1e-3);
        for row in &r.sinr_table {
            for &v in row {
                assert!(v.is_finite() && v >= 0.0);
            }
        }
        for &v in &r.per_user_rates {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn decoding_matrix_invariants() {
        let m = DecodingMatrix::full_sic(3);
        m.validate().unwrap();
        assert!(DecodingMatrix::from_rows(vec![vec![0, 1], vec![0, 1]]).is_err());
        assert!(DecodingMatrix::from_rows(vec![vec![1, 0], vec![1, 1]]).is_err());
        assert!(DecodingMatrix::from_rows(vec![vec![1, 2], vec![0, 1]]).is_err());
    }
}
