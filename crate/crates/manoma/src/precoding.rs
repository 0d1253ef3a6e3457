//! Max-min precoding by successive convex approximation.
//!
//! For a fixed channel matrix and decoding indicator matrix, the max-min
//! rate precoding problem is solved by iterating convex subproblems: each
//! per-user SINR target `q_j` is kept below every decoder's SINR by a
//! second-order cone constraint in which the concave quotient
//! `|h^H w|^2 / q` is replaced with its first-order Taylor lower bound
//! around the previous iterate.  Each subproblem is feasible at the
//! expansion point, so the max-min objective never degrades across steps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rates::{achievable_rates, DecodingMatrix, Precoder, UserOrder};
use crate::socp::{self, SocConstraint, SocpProblem, SolveStatus};
use crate::stochastic::RngStream;

/// First-order Taylor lower bound of `|h^H w|^2 / q` around `(w_bar, q_bar)`:
/// `2 Re(w_bar^H h h^H w) / q_bar - |h^H w_bar|^2 q / q_bar^2`.
pub fn taylor_lower_bound(
    h: &DVector<Complex64>,
    w: &DVector<Complex64>,
    q: f64,
    w_bar: &DVector<Complex64>,
    q_bar: f64,
) -> f64 {
    let a = h.dotc(w); // h^H w
    let a_bar = h.dotc(w_bar);
    2.0 * (a_bar.conj() * a).re / q_bar - a_bar.norm_sqr() * q / (q_bar * q_bar)
}

/// Variable layout of the convex subproblem:
/// `x = [Re/Im of W (2NK), q_1..q_K (gain order), t]`.
#[derive(Debug, Clone, Copy)]
pub struct ScaLayout {
    pub n: usize,
    pub k: usize,
}

impl ScaLayout {
    pub fn nvars(&self) -> usize {
        2 * self.n * self.k + self.k + 1
    }

    /// Index of `Re(W[ant, user])`; `user` is the natural column index.
    pub fn re_idx(&self, user: usize, ant: usize) -> usize {
        2 * self.n * user + ant
    }

    /// Index of `Im(W[ant, user])`.
    pub fn im_idx(&self, user: usize, ant: usize) -> usize {
        2 * self.n * user + self.n + ant
    }

    /// Index of the SINR target of the user at order position `j`.
    pub fn q_idx(&self, j: usize) -> usize {
        2 * self.n * self.k + j
    }

    pub fn t_idx(&self) -> usize {
        2 * self.n * self.k + self.k
    }

    pub fn extract_w(&self, x: &DVector<f64>) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.k, |a, u| {
            Complex64::new(x[self.re_idx(u, a)], x[self.im_idx(u, a)])
        })
    }
}

/// Adds the affine coefficients of `Re(h_u^H w_c)` (and of the imaginary
/// part when `im` is set) into `row`.
fn inner_product_row(
    layout: &ScaLayout,
    h: &DMatrix<Complex64>,
    user: usize,
    col: usize,
    im: bool,
    scale: f64,
    row: &mut [f64],
) {
    for a in 0..layout.n {
        let hv = h[(a, user)];
        if im {
            // Im(h^H w) = sum Re(h) v - Im(h) u
            row[layout.re_idx(col, a)] += -scale * hv.im;
            row[layout.im_idx(col, a)] += scale * hv.re;
        } else {
            // Re(h^H w) = sum Re(h) u + Im(h) v
            row[layout.re_idx(col, a)] += scale * hv.re;
            row[layout.im_idx(col, a)] += scale * hv.im;
        }
    }
}

/// Order positions whose transmissions interfere when user `pi_k` decodes
/// the message of the user at order position `j`.
fn interference_set(m: &DecodingMatrix, kk: usize, k: usize, j: usize) -> Vec<usize> {
    let mut set = Vec::new();
    for i in 0..kk {
        if i == j {
            continue;
        }
        let interferes = if k == j {
            m.get(j, i) == 0
        } else {
            i < j || m.get(k, i) == 0
        };
        if interferes {
            set.push(i);
        }
    }
    set
}

/// Builds the convex subproblem around the expansion point `w_bar`, whose
/// SINR table supplies the per-pair expansion values.
pub fn build_sca_socp(
    h: &DMatrix<Complex64>,
    order: &UserOrder,
    m: &DecodingMatrix,
    w_bar: &DMatrix<Complex64>,
    p_max: f64,
    sigma2: f64,
) -> Result<(SocpProblem, ScaLayout)> {
    let n = h.nrows();
    let kk = h.ncols();
    if w_bar.nrows() != n || w_bar.ncols() != kk {
        return Err(Error::DimensionMismatch(format!(
            "w_bar is {}x{}, expected {n}x{kk}",
            w_bar.nrows(),
            w_bar.ncols()
        )));
    }
    if order.n_users() != kk || m.n_users() != kk {
        return Err(Error::DimensionMismatch(
            "order/decoding size does not match channel".into(),
        ));
    }
    if p_max <= 0.0 || sigma2 <= 0.0 {
        return Err(Error::param("p_max/sigma2", "must be positive"));
    }
    let layout = ScaLayout { n, k: kk };
    let nv = layout.nvars();

    let mut objective = DVector::zeros(nv);
    objective[layout.t_idx()] = 1.0;
    let mut p = SocpProblem::new(nv, objective)?;

    // t <= q_j and q_j >= 0
    for j in 0..kk {
        let mut c = DVector::zeros(nv);
        c[layout.q_idx(j)] = 1.0;
        c[layout.t_idx()] = -1.0;
        p.add_cone(SocConstraint::linear(c, 0.0))?;
        let mut c = DVector::zeros(nv);
        c[layout.q_idx(j)] = 1.0;
        p.add_cone(SocConstraint::linear(c, 0.0))?;
    }

    // total power: ||vec(W)|| <= sqrt(p_max)
    let wvars = 2 * n * kk;
    let mut a = DMatrix::zeros(wvars, nv);
    for i in 0..wvars {
        a[(i, i)] = 1.0;
    }
    p.add_cone(SocConstraint {
        a,
        b: DVector::zeros(wvars),
        c: DVector::zeros(nv),
        d: p_max.sqrt(),
    })?;

    // per-pair expansion values from the current iterate
    let bar = achievable_rates(
        h,
        &Precoder {
            w: w_bar.clone(),
            power_budget: p_max,
        },
        m,
        order,
        sigma2,
    );

    // SINR cones: q_j <= gamma_{pi_k -> pi_j} for every decoder k of j
    for j in 0..kk {
        for k in 0..=j {
            if k != j && m.get(k, j) == 0 {
                continue;
            }
            let uk = order.pi[k];
            let uj = order.pi[j];
            let q_bar = bar.sinr_table[k][j].max(1e-8);
            let a_bar = h.column(uk).dotc(&w_bar.column(uj));

            // Taylor bound coefficients (affine, zero offset)
            let mut t_row = vec![0.0; nv];
            inner_product_row(&layout, h, uk, uj, false, 2.0 * a_bar.re / q_bar, &mut t_row);
            inner_product_row(&layout, h, uk, uj, true, 2.0 * a_bar.im / q_bar, &mut t_row);
            t_row[layout.q_idx(j)] -= a_bar.norm_sqr() / (q_bar * q_bar);

            // sum of interference powers + sigma2 <= T, as
            // || [2 h^H w_i (re, im) ...; 2 sigma; T - 1] || <= T + 1
            let interf = interference_set(m, kk, k, j);
            let rows = 2 * interf.len() + 2;
            let mut a = DMatrix::zeros(rows, nv);
            let mut b = DVector::zeros(rows);
            let mut r = 0;
            for &i in &interf {
                let ui = order.pi[i];
                let mut row = vec![0.0; nv];
                inner_product_row(&layout, h, uk, ui, false, 2.0, &mut row);
                for (cidx, v) in row.iter().enumerate() {
                    a[(r, cidx)] = *v;
                }
                let mut row = vec![0.0; nv];
                inner_product_row(&layout, h, uk, ui, true, 2.0, &mut row);
                for (cidx, v) in row.iter().enumerate() {
                    a[(r + 1, cidx)] = *v;
                }
                r += 2;
            }
            b[r] = 2.0 * sigma2.sqrt();
            r += 1;
            for (cidx, v) in t_row.iter().enumerate() {
                a[(r, cidx)] = *v;
            }
            b[r] = -1.0;
            p.add_cone(SocConstraint {
                a,
                b,
                c: DVector::from_vec(t_row),
                d: 1.0,
            })?;
        }
    }
    Ok((p, layout))
}

/// One convex step: solves the subproblem around `w_bar` and returns the
/// new precoding matrix together with the attained max-min SINR target.
pub fn sca_step(
    h: &DMatrix<Complex64>,
    order: &UserOrder,
    m: &DecodingMatrix,
    w_bar: &DMatrix<Complex64>,
    p_max: f64,
    sigma2: f64,
) -> Result<(DMatrix<Complex64>, f64)> {
    let (p, layout) = build_sca_socp(h, order, m, w_bar, p_max, sigma2)?;
    let report = socp::solve_default(&p)?;
    // degenerate optima (e.g. symmetric channels) can stall the interior
    // point just short of full precision; a near-feasible iterate with a
    // small remaining gap is still far tighter than the outer tolerances
    let near_optimal = report.status == SolveStatus::MaxIterations
        && report.primal_residual <= 1e-7
        && report.dual_gap_estimate <= 1e-4 * (1.0 + report.objective_value.abs());
    if report.status != SolveStatus::Optimal && !near_optimal {
        return Err(Error::SolverFailure(format!(
            "sca subproblem ended with {:?} (residual {:.3e})",
            report.status, report.primal_residual
        )));
    }
    let mut w = layout.extract_w(&report.x);
    // numerical tolerance can leave the power a hair over budget
    let power: f64 = w.iter().map(|v| v.norm_sqr()).sum();
    if power > p_max {
        w *= Complex64::new((p_max / power).sqrt(), 0.0);
    }
    Ok((w, report.x[layout.t_idx()]))
}

#[derive(Debug, Clone, Copy)]
pub struct ScaOptions {
    pub max_iters: usize,
    /// stop when the max-min target improves by less than this
    pub tol: f64,
}

impl Default for ScaOptions {
    fn default() -> Self {
        ScaOptions {
            max_iters: 30,
            tol: 1e-5,
        }
    }
}

/// Iterates [`sca_step`] to convergence from the given starting matrix.
pub fn sca_precoding(
    h: &DMatrix<Complex64>,
    order: &UserOrder,
    m: &DecodingMatrix,
    w_start: &DMatrix<Complex64>,
    p_max: f64,
    sigma2: f64,
    opts: ScaOptions,
) -> Result<(Precoder, f64)> {
    let mut w = w_start.clone();
    let mut t_prev = f64::NEG_INFINITY;
    let mut t = 0.0;
    for it in 0..opts.max_iters {
        let (w_new, t_new) = match sca_step(h, order, m, &w, p_max, sigma2) {
            Ok(r) => r,
            // a stalled subproblem after at least one accepted step keeps
            // the last iterate; every accepted iterate is feasible
            Err(Error::SolverFailure(_)) if it > 0 => break,
            Err(e) => return Err(e),
        };
        w = w_new;
        t = t_new;
        if (t - t_prev).abs() < opts.tol {
            break;
        }
        t_prev = t;
    }
    Ok((
        Precoder {
            w,
            power_budget: p_max,
        },
        t,
    ))
}

/// Random CSCG precoding matrix scaled to use the full power budget.
pub fn random_precoder(
    n: usize,
    k: usize,
    p_max: f64,
    rng: &mut RngStream,
) -> Result<Precoder> {
    if n == 0 || k == 0 || p_max <= 0.0 {
        return Err(Error::param("n/k/p_max", "must be positive"));
    }
    let mut w = DMatrix::from_fn(n, k, |_, _| rng.cscg(1.0).unwrap());
    let power: f64 = w.iter().map(|v| v.norm_sqr()).sum();
    w *= Complex64::new((p_max / power).sqrt(), 0.0);
    Ok(Precoder {
        w,
        power_budget: p_max,
    })
}

/// Zero-forcing baseline `D = H (H^H H + delta I)^{-1}` with SNR-equalizing
/// power loading; `delta = sigma2 K / p_max` regularizes the inverse when
/// `K > N`, otherwise 0.
pub fn zf_precoder(
    h: &DMatrix<Complex64>,
    p_max: f64,
    sigma2: f64,
) -> Result<Precoder> {
    let n = h.nrows();
    let kk = h.ncols();
    if p_max <= 0.0 || sigma2 <= 0.0 {
        return Err(Error::param("p_max/sigma2", "must be positive"));
    }
    let delta = if kk > n { sigma2 * kk as f64 / p_max } else { 0.0 };
    let mut gram = h.adjoint() * h;
    for i in 0..kk {
        gram[(i, i)] += Complex64::new(delta, 0.0);
    }
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::SolverFailure("singular channel Gram matrix".into()))?;
    let d = h * inv;

    // unit-norm directions, then power loading p_j ~ 1 / |h_j^H d_j|^2
    let mut dirs = Vec::with_capacity(kk);
    let mut inv_gain_sum = 0.0;
    let mut inv_gains = Vec::with_capacity(kk);
    for j in 0..kk {
        let col = d.column(j);
        let norm = col.norm();
        if norm < 1e-15 {
            return Err(Error::SolverFailure("degenerate zero-forcing direction".into()));
        }
        let dir = col / Complex64::new(norm, 0.0);
        let gain = h.column(j).dotc(&dir).norm_sqr();
        if gain < 1e-30 {
            return Err(Error::SolverFailure("zero effective channel gain".into()));
        }
        inv_gains.push(1.0 / gain);
        inv_gain_sum += 1.0 / gain;
        dirs.push(dir);
    }
    let c = p_max / inv_gain_sum;
    let mut w = DMatrix::zeros(n, kk);
    for j in 0..kk {
        let p_j = c * inv_gains[j];
        w.set_column(j, &(&dirs[j] * Complex64::new(p_j.sqrt(), 0.0)));
    }
    Ok(Precoder {
        w,
        power_budget: p_max,
    })
}
