//! Second-order cone programming over real variables.
//!
//! Problems are stated as `maximize c'x` subject to cone constraints
//! `||A_i x + b_i|| <= c_i'x + d_i` and optional box bounds.  The solver is
//! a primal-dual interior-point method with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector step, operating on the conic form
//! `min f'x  s.t.  Gx + s = h, s in K` with `K` a product of second-order
//! cones (dimension-1 cones double as linear inequalities).
//!
//! Complex data is handled by the callers through the fixed stacking
//! convention `z -> [Re z; Im z]`, so `|z|^2 = ||stack(z)||^2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FEAS_TOL: f64 = 1e-8;
pub const DEFAULT_GAP_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 200;

/// One cone constraint `||a x + b|| <= c'x + d`.  `a` may have zero rows, in
/// which case the constraint is the linear inequality `c'x + d >= 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SocConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl SocConstraint {
    /// Linear inequality `c'x + d >= 0` as a degenerate cone.
    pub fn linear(c: DVector<f64>, d: f64) -> Self {
        let n = c.len();
        SocConstraint {
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            c,
            d,
        }
    }

    /// Cone slack `(c'x + d) - ||a x + b||` at a point.
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        let lhs = (&self.a * x + &self.b).norm();
        self.c.dot(x) + self.d - lhs
    }
}

/// Cone program in inequality form; objective is maximized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SocpProblem {
    pub nvars: usize,
    /// maximize `objective . x`
    pub objective: DVector<f64>,
    pub cones: Vec<SocConstraint>,
    /// per-variable `(lo, hi)`; `None` leaves a side unbounded
    pub bounds: Option<Vec<(Option<f64>, Option<f64>)>>,
}

impl SocpProblem {
    pub fn new(nvars: usize, objective: DVector<f64>) -> Result<Self> {
        if objective.len() != nvars {
            return Err(Error::DimensionMismatch(format!(
                "objective has length {}, expected {nvars}",
                objective.len()
            )));
        }
        Ok(SocpProblem {
            nvars,
            objective,
            cones: Vec::new(),
            bounds: None,
        })
    }

    pub fn add_cone(&mut self, cone: SocConstraint) -> Result<()> {
        if cone.a.ncols() != self.nvars && cone.a.nrows() > 0 {
            return Err(Error::DimensionMismatch(format!(
                "cone A has {} columns, expected {}",
                cone.a.ncols(),
                self.nvars
            )));
        }
        if cone.a.nrows() != cone.b.len() {
            return Err(Error::DimensionMismatch(format!(
                "cone A has {} rows but b has length {}",
                cone.a.nrows(),
                cone.b.len()
            )));
        }
        if cone.c.len() != self.nvars {
            return Err(Error::DimensionMismatch(format!(
                "cone c has length {}, expected {}",
                cone.c.len(),
                self.nvars
            )));
        }
        self.cones.push(cone);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.cones.is_empty() && self.bounds.is_none() {
            return Err(Error::Precondition(
                "problem must have at least one constraint".into(),
            ));
        }
        if let Some(b) = &self.bounds {
            if b.len() != self.nvars {
                return Err(Error::DimensionMismatch(format!(
                    "bounds has length {}, expected {}",
                    b.len(),
                    self.nvars
                )));
            }
        }
        Ok(())
    }

    /// Primal violation (max over cones of `||Ax+b|| - (c'x+d)` clipped at 0)
    /// and the per-cone slacks.
    pub fn residuals(&self, x: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.nvars {
            return Err(Error::DimensionMismatch(format!(
                "x has length {}, expected {}",
                x.len(),
                self.nvars
            )));
        }
        let slacks: Vec<f64> = self.cones.iter().map(|c| c.slack(x)).collect();
        let mut viol = slacks.iter().fold(0.0f64, |m, &s| m.max(-s));
        if let Some(bounds) = &self.bounds {
            for (i, (lo, hi)) in bounds.iter().enumerate() {
                if let Some(lo) = lo {
                    viol = viol.max(lo - x[i]);
                }
                if let Some(hi) = hi {
                    viol = viol.max(x[i] - hi);
                }
            }
        }
        Ok((viol.max(0.0), slacks))
    }

    /// Plain-text dump for offline cross-checking against external solvers.
    pub fn dump(&self) -> String {
        let mut out = String::from("SOCP 1\n");
        out.push_str(&format!("nvars {}\n", self.nvars));
        out.push_str("objective");
        for v in self.objective.iter() {
            out.push_str(&format!(" {v:?}"));
        }
        out.push('\n');
        for cone in &self.cones {
            out.push_str(&format!("cone {}\n", cone.a.nrows()));
            for r in 0..cone.a.nrows() {
                out.push('a');
                for j in 0..cone.a.ncols() {
                    out.push_str(&format!(" {:?}", cone.a[(r, j)]));
                }
                out.push('\n');
            }
            out.push('b');
            for v in cone.b.iter() {
                out.push_str(&format!(" {v:?}"));
            }
            out.push('\n');
            out.push('c');
            for v in cone.c.iter() {
                out.push_str(&format!(" {v:?}"));
            }
            out.push('\n');
            out.push_str(&format!("d {:?}\n", cone.d));
        }
        if let Some(bounds) = &self.bounds {
            for (i, (lo, hi)) in bounds.iter().enumerate() {
                if lo.is_some() || hi.is_some() {
                    let fmt = |v: &Option<f64>| {
                        v.map(|x| format!("{x:?}")).unwrap_or_else(|| "-".into())
                    };
                    out.push_str(&format!("bound {i} {} {}\n", fmt(lo), fmt(hi)));
                }
            }
        }
        out.push_str("end\n");
        out
    }

    /// Parses the [`dump`](Self::dump) format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
        if header.trim() != "SOCP 1" {
            return Err(Error::Parse("bad header".into()));
        }
        let parse_f64 = |tok: &str| -> Result<f64> {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::Parse("non-finite number".into()));
            }
            Ok(v)
        };
        let parse_vec = |toks: &[&str]| -> Result<Vec<f64>> {
            toks.iter().map(|t| parse_f64(t)).collect()
        };

        let mut nvars: Option<usize> = None;
        let mut objective: Option<DVector<f64>> = None;
        let mut cones = Vec::new();
        let mut bounds_entries: Vec<(usize, Option<f64>, Option<f64>)> = Vec::new();
        let mut saw_end = false;

        const MAX_DIM: usize = 100_000;

        while let Some(line) = lines.next() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.first().copied() {
                None => continue,
                Some("nvars") => {
                    if toks.len() != 2 {
                        return Err(Error::Parse("nvars takes one argument".into()));
                    }
                    let n: usize = toks[1]
                        .parse()
                        .map_err(|_| Error::Parse("bad nvars".into()))?;
                    if n == 0 || n > MAX_DIM {
                        return Err(Error::Parse("nvars out of range".into()));
                    }
                    nvars = Some(n);
                }
                Some("objective") => {
                    let n = nvars.ok_or_else(|| Error::Parse("objective before nvars".into()))?;
                    let v = parse_vec(&toks[1..])?;
                    if v.len() != n {
                        return Err(Error::Parse("objective length mismatch".into()));
                    }
                    objective = Some(DVector::from_vec(v));
                }
                Some("cone") => {
                    let n = nvars.ok_or_else(|| Error::Parse("cone before nvars".into()))?;
                    if toks.len() != 2 {
                        return Err(Error::Parse("cone takes one argument".into()));
                    }
                    let rows: usize = toks[1]
                        .parse()
                        .map_err(|_| Error::Parse("bad cone row count".into()))?;
                    if rows > MAX_DIM {
                        return Err(Error::Parse("cone too large".into()));
                    }
                    let mut a = DMatrix::zeros(rows, n);
                    for r in 0..rows {
                        let l = lines.next().ok_or_else(|| Error::Parse("truncated cone".into()))?;
                        let t: Vec<&str> = l.split_whitespace().collect();
                        if t.first() != Some(&"a") || t.len() != n + 1 {
                            return Err(Error::Parse("bad cone row".into()));
                        }
                        for (j, v) in parse_vec(&t[1..])?.into_iter().enumerate() {
                            a[(r, j)] = v;
                        }
                    }
                    let bline = lines.next().ok_or_else(|| Error::Parse("truncated cone".into()))?;
                    let bt: Vec<&str> = bline.split_whitespace().collect();
                    if bt.first() != Some(&"b") || bt.len() != rows + 1 {
                        return Err(Error::Parse("bad cone b".into()));
                    }
                    let b = DVector::from_vec(parse_vec(&bt[1..])?);
                    let cline = lines.next().ok_or_else(|| Error::Parse("truncated cone".into()))?;
                    let ct: Vec<&str> = cline.split_whitespace().collect();
                    if ct.first() != Some(&"c") || ct.len() != n + 1 {
                        return Err(Error::Parse("bad cone c".into()));
                    }
                    let c = DVector::from_vec(parse_vec(&ct[1..])?);
                    let dline = lines.next().ok_or_else(|| Error::Parse("truncated cone".into()))?;
                    let dt: Vec<&str> = dline.split_whitespace().collect();
                    if dt.first() != Some(&"d") || dt.len() != 2 {
                        return Err(Error::Parse("bad cone d".into()));
                    }
                    cones.push(SocConstraint {
                        a,
                        b,
                        c,
                        d: parse_f64(dt[1])?,
                    });
                }
                Some("bound") => {
                    if toks.len() != 4 {
                        return Err(Error::Parse("bound takes three arguments".into()));
                    }
                    let i: usize = toks[1]
                        .parse()
                        .map_err(|_| Error::Parse("bad bound index".into()))?;
                    let side = |t: &str| -> Result<Option<f64>> {
                        if t == "-" {
                            Ok(None)
                        } else {
                            parse_f64(t).map(Some)
                        }
                    };
                    bounds_entries.push((i, side(toks[2])?, side(toks[3])?));
                }
                Some("end") => {
                    saw_end = true;
                    break;
                }
                Some(other) => return Err(Error::Parse(format!("unknown directive `{other}`"))),
            }
        }
        if !saw_end {
            return Err(Error::Parse("missing end marker".into()));
        }
        let nvars = nvars.ok_or_else(|| Error::Parse("missing nvars".into()))?;
        let objective = objective.ok_or_else(|| Error::Parse("missing objective".into()))?;
        let bounds = if bounds_entries.is_empty() {
            None
        } else {
            let mut b = vec![(None, None); nvars];
            for (i, lo, hi) in bounds_entries {
                if i >= nvars {
                    return Err(Error::Parse("bound index out of range".into()));
                }
                b[i] = (lo, hi);
            }
            Some(b)
        };
        let mut p = SocpProblem {
            nvars,
            objective,
            cones: Vec::new(),
            bounds,
        };
        for cone in cones {
            p.add_cone(cone)?;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_gap_estimate: f64,
    pub iterations: usize,
}

// ---------------------------------------------------------------------------
// Jordan-algebra operations on a single second-order cone block.
// ---------------------------------------------------------------------------

/// `u o v = (u.v, u0*v1 + v0*u1)` on one cone block.
fn jprod(u: &[f64], v: &[f64], out: &mut [f64]) {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    out[0] = dot;
    for i in 1..u.len() {
        out[i] = u[0] * v[i] + v[0] * u[i];
    }
}

/// Solves `lam o x = d` for `x` on one cone block.
fn jdiv(lam: &[f64], d: &[f64], out: &mut [f64]) {
    let l0 = lam[0];
    let l1_norm2: f64 = lam[1..].iter().map(|v| v * v).sum();
    let det = l0 * l0 - l1_norm2;
    let l1_dot_d1: f64 = lam[1..].iter().zip(&d[1..]).map(|(a, b)| a * b).sum();
    let x0 = (l0 * d[0] - l1_dot_d1) / det;
    out[0] = x0;
    for i in 1..lam.len() {
        out[i] = (d[i] - x0 * lam[i]) / l0;
    }
}

/// Largest `alpha >= 0` with `lam + alpha * delta` still in the cone
/// (`f64::INFINITY` when the ray never exits).
fn step_to_boundary(lam: &[f64], delta: &[f64]) -> f64 {
    let l0 = lam[0];
    let d0 = delta[0];
    if lam.len() == 1 {
        return if d0 < 0.0 { l0 / (-d0) } else { f64::INFINITY };
    }
    let l1d1: f64 = lam[1..].iter().zip(&delta[1..]).map(|(a, b)| a * b).sum();
    let d1n2: f64 = delta[1..].iter().map(|v| v * v).sum();
    let l1n2: f64 = lam[1..].iter().map(|v| v * v).sum();
    let a = d0 * d0 - d1n2;
    let b = l0 * d0 - l1d1;
    let c = l0 * l0 - l1n2;
    // p(alpha) = a*alpha^2 + 2*b*alpha + c, with c > 0 at an interior point
    if a < 0.0 {
        let disc = (b * b - a * c).max(0.0);
        return (b + disc.sqrt()) / (-a);
    }
    if b >= 0.0 {
        return f64::INFINITY;
    }
    // clamp guards the near-tangent case, where roundoff pushes the
    // discriminant slightly negative although the ray grazes the boundary
    let disc = (b * b - a * c).max(0.0);
    if a == 0.0 {
        return -c / (2.0 * b);
    }
    (-b - disc.sqrt()) / a
}

/// Nesterov-Todd scaling block for one cone: `W z = W^{-1} s = lambda`.
struct NtScaling {
    eta: f64,
    /// normalized scaling point, `w0^2 - ||w1||^2 = 1`
    w0: f64,
    w1: Vec<f64>,
}

impl NtScaling {
    fn compute(s: &[f64], z: &[f64]) -> Option<NtScaling> {
        let dim = s.len();
        if dim == 1 {
            if s[0] <= 0.0 || z[0] <= 0.0 {
                return None;
            }
            return Some(NtScaling {
                eta: (s[0] / z[0]).sqrt(),
                w0: 1.0,
                w1: Vec::new(),
            });
        }
        let jnorm = |v: &[f64]| -> f64 {
            let rest: f64 = v[1..].iter().map(|x| x * x).sum();
            v[0] * v[0] - rest
        };
        let zs = jnorm(s);
        let zz = jnorm(z);
        if zs <= 0.0 || zz <= 0.0 || s[0] <= 0.0 || z[0] <= 0.0 {
            return None;
        }
        let zs = zs.sqrt();
        let zz = zz.sqrt();
        let dot: f64 = s.iter().zip(z).map(|(a, b)| a * b).sum();
        let gamma = ((1.0 + dot / (zs * zz)) / 2.0).sqrt();
        let mut w1 = vec![0.0; dim - 1];
        let w0 = (s[0] / zs + z[0] / zz) / (2.0 * gamma);
        for i in 1..dim {
            w1[i - 1] = (s[i] / zs - z[i] / zz) / (2.0 * gamma);
        }
        Some(NtScaling {
            eta: (zs / zz).sqrt(),
            w0,
            w1,
        })
    }

    /// `W v` with `W = eta * [[w0, w1'], [w1, I + w1 w1'/(1+w0)]]`.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        if self.w1.is_empty() {
            out[0] = self.eta * v[0];
            return;
        }
        let w1v: f64 = self.w1.iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
        out[0] = self.eta * (self.w0 * v[0] + w1v);
        let coef = v[0] + w1v / (1.0 + self.w0);
        for i in 1..v.len() {
            out[i] = self.eta * (v[i] + coef * self.w1[i - 1]);
        }
    }

    /// `W^{-1} v`.
    fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        if self.w1.is_empty() {
            out[0] = v[0] / self.eta;
            return;
        }
        let w1v: f64 = self.w1.iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
        out[0] = (self.w0 * v[0] - w1v) / self.eta;
        let coef = -v[0] + w1v / (1.0 + self.w0);
        for i in 1..v.len() {
            out[i] = (v[i] + coef * self.w1[i - 1]) / self.eta;
        }
    }
}

/// Conic-form data: `min f'x  s.t.  Gx + s = h, s in K`.
struct ConicForm {
    f: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    /// cone block dimensions (each >= 1)
    dims: Vec<usize>,
}

fn to_conic(p: &SocpProblem) -> ConicForm {
    let n = p.nvars;
    let mut dims = Vec::new();
    let mut rows = 0usize;
    for cone in &p.cones {
        dims.push(cone.a.nrows() + 1);
        rows += cone.a.nrows() + 1;
    }
    let mut bound_rows = Vec::new();
    if let Some(bounds) = &p.bounds {
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if let Some(lo) = lo {
                bound_rows.push((i, 1.0, -lo)); // x_i - lo >= 0
            }
            if let Some(hi) = hi {
                bound_rows.push((i, -1.0, *hi)); // hi - x_i >= 0
            }
        }
        rows += bound_rows.len();
        dims.extend(std::iter::repeat(1).take(bound_rows.len()));
    }
    let mut g = DMatrix::zeros(rows, n);
    let mut h = DVector::zeros(rows);
    let mut r = 0usize;
    for cone in &p.cones {
        // s0 = c'x + d  ->  row -c', h = d
        for j in 0..n {
            g[(r, j)] = -cone.c[j];
        }
        h[r] = cone.d;
        r += 1;
        // s1 = A x + b  ->  rows -A, h = b ... sign: s = h - Gx
        for i in 0..cone.a.nrows() {
            for j in 0..n {
                g[(r, j)] = -cone.a[(i, j)];
            }
            h[r] = cone.b[i];
            r += 1;
        }
    }
    for (i, coef, offset) in bound_rows {
        g[(r, i)] = -coef;
        h[r] = offset;
        r += 1;
    }
    ConicForm {
        f: -p.objective.clone(),
        g,
        h,
        dims,
    }
}

/// Splits a stacked cone vector into per-block slices.
fn blocks<'a>(v: &'a DVector<f64>, dims: &[usize]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(dims.len());
    let mut off = 0;
    for &d in dims {
        out.push(&v.as_slice()[off..off + d]);
        off += d;
    }
    out
}

fn blocks_mut<'a>(v: &'a mut DVector<f64>, dims: &[usize]) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(dims.len());
    let mut rest = v.as_mut_slice();
    for &d in dims {
        let (head, tail) = rest.split_at_mut(d);
        out.push(head);
        rest = tail;
    }
    out
}

/// Shifts `v` into the interior of the cone product.
fn push_interior(v: &mut DVector<f64>, dims: &[usize]) {
    let mut off = 0;
    for &d in dims {
        let block = &mut v.as_mut_slice()[off..off + d];
        let tail_norm: f64 = block[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if block[0] <= tail_norm + 1e-8 {
            block[0] = tail_norm + 1.0;
        }
        off += d;
    }
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

pub fn solve(
    p: &SocpProblem,
    feas_tol: f64,
    gap_tol: f64,
    max_iters: usize,
) -> Result<SolveReport> {
    solve_with_start(p, feas_tol, gap_tol, max_iters, None)
}

pub fn solve_default(p: &SocpProblem) -> Result<SolveReport> {
    solve(p, DEFAULT_FEAS_TOL, DEFAULT_GAP_TOL, DEFAULT_MAX_ITERS)
}

/// Interior-point solve.  A warm-start point, when given, seeds the primal
/// iterate; it may change the iteration count but not the converged
/// objective beyond `gap_tol`.
pub fn solve_with_start(
    p: &SocpProblem,
    feas_tol: f64,
    gap_tol: f64,
    max_iters: usize,
    warm_x: Option<&DVector<f64>>,
) -> Result<SolveReport> {
    p.validate()?;
    let cf = to_conic(p);
    let n = p.nvars;
    let m = cf.g.nrows();
    let ncones = cf.dims.len();

    // initialization: primal from (warm-started) least squares, dual from
    // the stationarity system, both shifted into the cone interior
    let mut x = match warm_x {
        Some(x0) if x0.len() == n => x0.clone(),
        _ => least_squares(&cf.g, &cf.h),
    };
    if !x.iter().all(|v| v.is_finite()) {
        x = DVector::zeros(n);
    }
    let mut s = &cf.h - &cf.g * &x;
    push_interior(&mut s, &cf.dims);
    let mut z = least_squares(&cf.g.transpose(), &(-&cf.f));
    if z.len() != m || !z.iter().all(|v| v.is_finite()) {
        z = DVector::zeros(m);
    }
    push_interior(&mut z, &cf.dims);

    let h_norm = cf.h.norm().max(1.0);
    let f_norm = cf.f.norm().max(1.0);

    let mut best: Option<(f64, DVector<f64>, f64, f64, usize)> = None;
    let mut status = SolveStatus::MaxIterations;
    let mut iters_done = 0;

    for iter in 0..max_iters {
        iters_done = iter;
        let rx = &cf.f + cf.g.transpose() * &z;
        let rz = &cf.g * &x + &s - &cf.h;
        let gap = s.dot(&z);
        let pres = rz.norm() / h_norm;
        let dres = rx.norm() / f_norm;
        let pcost = cf.f.dot(&x);
        let relgap = gap.abs() / pcost.abs().max(1.0);

        let score = pres.max(dres).max(relgap);
        if best.as_ref().map_or(true, |(bs, ..)| score < *bs) {
            best = Some((score, x.clone(), pres, relgap, iter));
        }

        if pres <= feas_tol && dres <= feas_tol && (gap <= gap_tol || relgap <= gap_tol) {
            status = SolveStatus::Optimal;
            break;
        }

        // Farkas-style primal infeasibility certificate
        let hz = cf.h.dot(&z);
        if hz < -1e-10 {
            let cert = (cf.g.transpose() * &z).norm() / (-hz);
            if cert <= feas_tol {
                status = SolveStatus::Infeasible;
                break;
            }
        }

        let mu = gap / ncones as f64;

        // NT scaling per cone block
        let s_blocks = blocks(&s, &cf.dims);
        let z_blocks = blocks(&z, &cf.dims);
        let mut scalings = Vec::with_capacity(ncones);
        let mut ok = true;
        for i in 0..ncones {
            match NtScaling::compute(s_blocks[i], z_blocks[i]) {
                Some(w) => scalings.push(w),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }

        // lambda = W z (per block)
        let mut lambda = DVector::zeros(m);
        {
            let zb = blocks(&z, &cf.dims);
            let lb = blocks_mut(&mut lambda, &cf.dims);
            for ((w, zi), li) in scalings.iter().zip(zb).zip(lb) {
                w.apply(zi, li);
            }
        }

        // G scaled: rows of G transformed by W^{-1} per block
        let mut g_s = DMatrix::zeros(m, n);
        {
            let mut off = 0;
            for (bi, &d) in cf.dims.iter().enumerate() {
                let mut tmp_in = vec![0.0; d];
                let mut tmp_out = vec![0.0; d];
                for col in 0..n {
                    for r in 0..d {
                        tmp_in[r] = cf.g[(off + r, col)];
                    }
                    scalings[bi].apply_inv(&tmp_in, &mut tmp_out);
                    for r in 0..d {
                        g_s[(off + r, col)] = tmp_out[r];
                    }
                }
                off += d;
            }
        }
        let mut normal = g_s.transpose() * &g_s;
        for i in 0..n {
            normal[(i, i)] += 1e-12;
        }
        let chol = match normal.cholesky() {
            Some(c) => c,
            None => break,
        };

        // W^{-1} rz (per block), reused by both solves
        let mut winv_rz = DVector::zeros(m);
        {
            let rzb = blocks(&rz, &cf.dims);
            let ob = blocks_mut(&mut winv_rz, &cf.dims);
            for ((w, ri), oi) in scalings.iter().zip(rzb).zip(ob) {
                w.apply_inv(ri, oi);
            }
        }

        // solves the scaled KKT system for a given complementarity target
        let solve_kkt = |d_s: &DVector<f64>| {
            // t1 = lambda \ d_s
            let mut t1 = DVector::zeros(m);
            {
                let lb = blocks(&lambda, &cf.dims);
                let db = blocks(d_s, &cf.dims);
                let tb = blocks_mut(&mut t1, &cf.dims);
                for ((li, di), ti) in lb.iter().zip(db).zip(tb) {
                    jdiv(li, di, ti);
                }
            }
            let rhs_z = &winv_rz - &t1;
            let rhs_x = -&rx - g_s.transpose() * &rhs_z;
            let dx = chol.solve(&rhs_x);
            let v = &g_s * &dx + &rhs_z; // scaled dz
            let mut dz = DVector::zeros(m);
            {
                let vb = blocks(&v, &cf.dims);
                let ob = blocks_mut(&mut dz, &cf.dims);
                for ((w, vi), oi) in scalings.iter().zip(vb).zip(ob) {
                    w.apply_inv(vi, oi);
                }
            }
            let ds_scaled = -(&t1 + &v);
            let mut ds = DVector::zeros(m);
            {
                let sb = blocks(&ds_scaled, &cf.dims);
                let ob = blocks_mut(&mut ds, &cf.dims);
                for ((w, si), oi) in scalings.iter().zip(sb).zip(ob) {
                    w.apply(si, oi);
                }
            }
            (dx, dz, ds, ds_scaled, v)
        };

        // affine (predictor) direction: d_s = lambda o lambda
        let mut d_aff = DVector::zeros(m);
        {
            let lb = blocks(&lambda, &cf.dims);
            let ob = blocks_mut(&mut d_aff, &cf.dims);
            for (li, oi) in lb.iter().zip(ob) {
                jprod(li, li, oi);
            }
        }
        let (_, _, _, dsa_s, dza_s) = solve_kkt(&d_aff);

        let max_step = |dv: &DVector<f64>| -> f64 {
            let lb = blocks(&lambda, &cf.dims);
            let db = blocks(dv, &cf.dims);
            lb.iter()
                .zip(db)
                .map(|(li, di)| step_to_boundary(li, di))
                .fold(f64::INFINITY, f64::min)
        };
        let alpha_aff = max_step(&dsa_s).min(max_step(&dza_s)).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector: d_s = lambda o lambda + dsa_s o dza_s - sigma*mu*e
        let mut d_comb = DVector::zeros(m);
        {
            let ab = blocks(&dsa_s, &cf.dims);
            let bb = blocks(&dza_s, &cf.dims);
            let lb = blocks(&lambda, &cf.dims);
            let ob = blocks_mut(&mut d_comb, &cf.dims);
            for (((ai, bi), li), oi) in ab.iter().zip(bb).zip(lb).zip(ob) {
                let mut cross = vec![0.0; ai.len()];
                jprod(ai, bi, &mut cross);
                let mut ll = vec![0.0; ai.len()];
                jprod(li, li, &mut ll);
                for r in 0..ai.len() {
                    oi[r] = ll[r] + cross[r];
                }
                oi[0] -= sigma * mu;
            }
        }
        let (dx, dz, ds, ds_s, dz_s) = solve_kkt(&d_comb);
        let alpha = (0.99 * max_step(&ds_s).min(max_step(&dz_s))).min(1.0);
        if !alpha.is_finite() || alpha <= 0.0 {
            break;
        }
        // backtrack if roundoff in the unscaled directions still lands a
        // block outside its cone
        let interior = |v: &DVector<f64>| -> bool {
            let mut off = 0;
            for &d in &cf.dims {
                let blk = &v.as_slice()[off..off + d];
                let tail: f64 = blk[1..].iter().map(|t| t * t).sum::<f64>().sqrt();
                if blk[0] <= tail {
                    return false;
                }
                off += d;
            }
            true
        };
        let mut alpha = alpha;
        let mut stepped = false;
        for _ in 0..30 {
            let s_try = &s + alpha * &ds;
            let z_try = &z + alpha * &dz;
            if interior(&s_try) && interior(&z_try) {
                x += alpha * &dx;
                s = s_try;
                z = z_try;
                stepped = true;
                break;
            }
            alpha *= 0.9;
        }
        if !stepped {
            break;
        }
    }

    let converged = status == SolveStatus::Optimal;
    let (best_score, best_x, best_pres, best_relgap, _) =
        best.unwrap_or((f64::INFINITY, x.clone(), f64::INFINITY, f64::INFINITY, 0));
    // numerical breakdown right at the central-path limit still counts as
    // solved when the best iterate is within a small multiple of the targets
    if status == SolveStatus::MaxIterations && best_score <= 100.0 * feas_tol.max(gap_tol) {
        status = SolveStatus::Optimal;
    }
    let (x_out, pres_out, gap_out) = if converged {
        let rz = &cf.g * &x + &s - &cf.h;
        let gap = s.dot(&z).abs() / cf.f.dot(&x).abs().max(1.0);
        (x, rz.norm() / h_norm, gap)
    } else {
        (best_x, best_pres, best_relgap)
    };
    Ok(SolveReport {
        objective_value: p.objective.dot(&x_out),
        x: x_out,
        status,
        primal_residual: pres_out,
        dual_gap_estimate: gap_out,
        iterations: iters_done + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RngStream;

    fn unit_ball_problem() -> SocpProblem {
        // maximize -x1 s.t. ||x|| <= 1
        let mut p = SocpProblem::new(2, DVector::from_vec(vec![-1.0, 0.0])).unwrap();
        p.add_cone(SocConstraint {
            a: DMatrix::identity(2, 2),
            b: DVector::zeros(2),
            c: DVector::zeros(2),
            d: 1.0,
        })
        .unwrap();
        p
    }

    #[test]
    fn unit_ball_extreme_point() {
        let r = solve_default(&unit_ball_problem()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective_value - 1.0).abs() < 1e-6, "obj={}", r.objective_value);
        assert!((r.x[0] + 1.0).abs() < 1e-5);
        assert!(r.x[1].abs() < 1e-5);
    }

    #[test]
    fn shifted_cone_sqrt3() {
        // maximize x s.t. ||[x, 1]|| <= 2  ->  x = sqrt(3)
        let mut p = SocpProblem::new(1, DVector::from_vec(vec![1.0])).unwrap();
        p.add_cone(SocConstraint {
            a: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            b: DVector::from_vec(vec![0.0, 1.0]),
            c: DVector::zeros(1),
            d: 2.0,
        })
        .unwrap();
        let r = solve_default(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective_value - 3f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn linear_program_via_degenerate_cones() {
        // maximize x + y s.t. x <= 2, y <= 3, x + y <= 4, x,y >= 0
        let mut p = SocpProblem::new(2, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        p.add_cone(SocConstraint::linear(DVector::from_vec(vec![-1.0, 0.0]), 2.0))
            .unwrap();
        p.add_cone(SocConstraint::linear(DVector::from_vec(vec![0.0, -1.0]), 3.0))
            .unwrap();
        p.add_cone(SocConstraint::linear(DVector::from_vec(vec![-1.0, -1.0]), 4.0))
            .unwrap();
        p.add_cone(SocConstraint::linear(DVector::from_vec(vec![1.0, 0.0]), 0.0))
            .unwrap();
        p.add_cone(SocConstraint::linear(DVector::from_vec(vec![0.0, 1.0]), 0.0))
            .unwrap();
        let r = solve_default(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective_value - 4.0).abs() < 1e-6);
    }

    #[test]
    fn box_bounds() {
        let mut p = SocpProblem::new(2, DVector::from_vec(vec![1.0, -1.0])).unwrap();
        p.add_cone(SocConstraint::linear(DVector::from_vec(vec![0.0, 0.0]), 1.0))
            .unwrap();
        p.bounds = Some(vec![(Some(-1.0), Some(2.5)), (Some(0.5), Some(7.0))]);
        let r = solve_default(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 2.5).abs() < 1e-6);
        assert!((r.x[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn infeasible_detected() {
        // x >= 1 and x <= -1
        let mut p = SocpProblem::new(1, DVector::from_vec(vec![1.0])).unwrap();
        p.add_cone(SocConstraint::linear(DVector::from_vec(vec![1.0]), -1.0))
            .unwrap();
        p.add_cone(SocConstraint::linear(DVector::from_vec(vec![-1.0]), -1.0))
            .unwrap();
        let r = solve_default(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn residuals_cases() {
        let p = unit_ball_problem();
        // interior point
        let (v, slacks) = p.residuals(&DVector::from_vec(vec![0.2, 0.1])).unwrap();
        assert_eq!(v, 0.0);
        assert!(slacks[0] > 0.0);
        // boundary point
        let (v, _) = p.residuals(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(v.abs() < 1e-12);
        // infeasible point matches hand-computed norm difference
        let x = DVector::from_vec(vec![3.0, 4.0]);
        let (v, slacks) = p.residuals(&x).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        assert!((slacks[0] + 4.0).abs() < 1e-12);
        // dimension mismatch
        assert!(p.residuals(&DVector::zeros(3)).is_err());
    }

    /// Plants an optimum via KKT construction: pick x*, make some cones
    /// active with positive multipliers, then synthesize the objective from
    /// stationarity.
    pub(crate) fn kkt_planted(
        rng: &mut RngStream,
        nvars: usize,
        n_active: usize,
        n_inactive: usize,
    ) -> (SocpProblem, DVector<f64>, f64) {
        let xstar = DVector::from_fn(nvars, |_, _| rng.uniform(-1.0, 1.0).unwrap());
        let mut p = SocpProblem::new(nvars, DVector::zeros(nvars)).unwrap();
        let mut objective = DVector::zeros(nvars);
        for _ in 0..n_active {
            let rows = 1 + rng.uniform_index(3);
            let a = DMatrix::from_fn(rows, nvars, |_, _| rng.uniform(-1.0, 1.0).unwrap());
            let b = DVector::from_fn(rows, |_, _| rng.uniform(-1.0, 1.0).unwrap());
            let c = DVector::from_fn(nvars, |_, _| rng.uniform(-1.0, 1.0).unwrap());
            let v = &a * &xstar + &b;
            let vn = v.norm().max(1e-6);
            let d = vn - c.dot(&xstar);
            let tau = rng.uniform(0.5, 2.0).unwrap();
            objective -= tau * (&c - a.transpose() * (&v / vn));
            p.add_cone(SocConstraint { a, b, c, d }).unwrap();
        }
        for _ in 0..n_inactive {
            let rows = 1 + rng.uniform_index(3);
            let a = DMatrix::from_fn(rows, nvars, |_, _| rng.uniform(-1.0, 1.0).unwrap());
            let b = DVector::from_fn(rows, |_, _| rng.uniform(-1.0, 1.0).unwrap());
            let c = DVector::from_fn(nvars, |_, _| rng.uniform(-1.0, 1.0).unwrap());
            let slack = rng.uniform(0.5, 2.0).unwrap();
            let d = (&a * &xstar + &b).norm() - c.dot(&xstar) + slack;
            p.add_cone(SocConstraint { a, b, c, d }).unwrap();
        }
        p.objective = objective.clone();
        let value = objective.dot(&xstar);
        (p, xstar, value)
    }

    #[test]
    fn kkt_planted_problems_solved() {
        let mut rng = RngStream::new(31, 0);
        for trial in 0..50 {
            let nvars = 4 + rng.uniform_index(4);
            let (p, _xstar, value) = kkt_planted(&mut rng, nvars, 2, 2);
            let r = solve(&p, 1e-8, 1e-8, 200).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal, "trial {trial}");
            let rel = (r.objective_value - value).abs() / value.abs().max(1.0);
            assert!(rel < 1e-6, "trial {trial}: rel err {rel}");
            let (viol, _) = p.residuals(&r.x).unwrap();
            assert!(viol <= 1e-6, "trial {trial}: viol {viol}");
        }
    }

    #[test]
    fn optimal_never_below_feasible_witness() {
        let mut rng = RngStream::new(32, 0);
        for _ in 0..20 {
            let (p, xstar, _) = kkt_planted(&mut rng, 5, 2, 3);
            let r = solve_default(&p).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            // x* is feasible, so the optimum must not be below its value
            assert!(r.objective_value >= p.objective.dot(&xstar) - 1e-6);
        }
    }

    #[test]
    fn warm_start_same_objective() {
        let mut rng = RngStream::new(33, 0);
        let (p, xstar, _) = kkt_planted(&mut rng, 5, 2, 2);
        let cold = solve_default(&p).unwrap();
        let warm = solve_with_start(&p, 1e-8, 1e-8, 200, Some(&xstar)).unwrap();
        assert_eq!(warm.status, SolveStatus::Optimal);
        assert!((cold.objective_value - warm.objective_value).abs() < 1e-6);
    }

    #[test]
    fn solver_is_deterministic() {
        let mut rng = RngStream::new(34, 0);
        let (p, _, _) = kkt_planted(&mut rng, 6, 2, 2);
        let r1 = solve_default(&p).unwrap();
        let r2 = solve_default(&p).unwrap();
        assert_eq!(r1.x, r2.x);
        assert_eq!(r1.iterations, r2.iterations);
    }

    #[test]
    fn dump_parse_round_trip() {
        let mut rng = RngStream::new(35, 0);
        let (mut p, _, _) = kkt_planted(&mut rng, 4, 2, 1);
        p.bounds = Some(vec![
            (Some(-10.0), Some(10.0)),
            (None, None),
            (None, Some(3.5)),
            (Some(0.25), None),
        ]);
        let text = p.dump();
        let q = SocpProblem::parse(&text).unwrap();
        assert_eq!(q.nvars, p.nvars);
        assert!((&q.objective - &p.objective).norm() == 0.0);
        assert_eq!(q.cones.len(), p.cones.len());
        for (a, b) in p.cones.iter().zip(q.cones.iter()) {
            assert_eq!(a.a, b.a);
            assert_eq!(a.b, b.b);
            assert_eq!(a.c, b.c);
            assert_eq!(a.d, b.d);
        }
        assert_eq!(q.bounds, p.bounds);
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(SocpProblem::parse("").is_err());
        assert!(SocpProblem::parse("SOCP 1\nend\n").is_err());
        assert!(SocpProblem::parse("SOCP 1\nnvars 2\nobjective 1\nend\n").is_err());
        assert!(SocpProblem::parse("SOCP 1\nnvars 2\nobjective 1 nan\nend\n").is_err());
        assert!(SocpProblem::parse("SOCP 1\nnvars 2\nobjective 1 2\ncone 1\na 1 2\nend\n").is_err());
    }

    #[test]
    fn nt_scaling_identities() {
        let mut rng = RngStream::new(36, 0);
        for dim in [1usize, 2, 3, 6] {
            for _ in 0..20 {
                let mut s = vec![0.0; dim];
                let mut z = vec![0.0; dim];
                for i in 1..dim {
                    s[i] = rng.uniform(-1.0, 1.0).unwrap();
                    z[i] = rng.uniform(-1.0, 1.0).unwrap();
                }
                let sn: f64 = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                let zn: f64 = z[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                s[0] = sn + rng.uniform(0.1, 2.0).unwrap();
                z[0] = zn + rng.uniform(0.1, 2.0).unwrap();
                let w = NtScaling::compute(&s, &z).unwrap();
                // W z == W^{-1} s
                let mut wz = vec![0.0; dim];
                let mut winvs = vec![0.0; dim];
                w.apply(&z, &mut wz);
                w.apply_inv(&s, &mut winvs);
                for i in 0..dim {
                    assert!((wz[i] - winvs[i]).abs() < 1e-10, "dim {dim}");
                }
                // W W^{-1} == I
                let mut back = vec![0.0; dim];
                w.apply_inv(&wz, &mut back);
                for i in 0..dim {
                    assert!((back[i] - z[i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn step_to_boundary_cases() {
        // staying inside forever
        assert_eq!(step_to_boundary(&[1.0, 0.0], &[1.0, 0.0]), f64::INFINITY);
        // shrink towards origin: boundary at alpha = 1
        let a = step_to_boundary(&[1.0, 0.0], &[-1.0, 0.0]);
        assert!((a - 1.0).abs() < 1e-12);
        // sideways exit
        let a = step_to_boundary(&[1.0, 0.0], &[0.0, 2.0]);
        assert!((a - 0.5).abs() < 1e-12);
    }
}
