//! Hippopotamus optimization over a box-constrained search space.
//!
//! Population-based maximizer used for the antenna position vectors.  Each
//! iteration splits the herd into stronger and weaker halves; stronger
//! members move relative to the global best (male/female candidate moves),
//! weaker members are repelled or attracted by a randomly placed predator
//! with Levy-flight perturbations, and every member finishes with a local
//! search whose radius shrinks as `1/i`.  Candidates are clamped to the box
//! and accepted only on strict fitness improvement, so the best fitness is
//! monotone over iterations.
//!
//! The improved variant splits the herd by fitness; the original variant
//! splits by index, which is kept for convergence comparisons.

use crate::error::{Error, Result};
use crate::stochastic::RngStream;

#[derive(Debug, Clone, Copy)]
pub struct HoParams {
    pub n_hippos: usize,
    pub max_iters: usize,
    /// Levy flight exponent
    pub beta: f64,
    /// half-width of the search box `[-bound, bound]^dim`
    pub bound: f64,
    pub dim: usize,
    /// split the herd by fitness (improved) instead of by index (original)
    pub fitness_split: bool,
    /// seed member 0 at the origin instead of a random position
    pub include_origin: bool,
}

impl HoParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_hippos < 2 {
            return Err(Error::param("n_hippos", "population needs at least 2 members"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        if !(self.bound > 0.0) {
            return Err(Error::param("bound", "must be positive"));
        }
        if !(self.beta > 0.0 && self.beta <= 2.0) {
            return Err(Error::param("beta", "must lie in (0, 2]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HoResult {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    /// best fitness after initialization and after each iteration
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Projects every coordinate onto `[-bound, bound]`.
pub fn clamp_region(x: &mut [f64], bound: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(-bound, bound);
    }
}

/// Indices of the stronger and weaker halves.  With `by_fitness` the
/// stronger half holds the `ceil(n/2)` highest fitness values (ties broken
/// by lower index); otherwise the split is by index order.
pub fn split_population(fitness: &[f64], by_fitness: bool) -> (Vec<usize>, Vec<usize>) {
    let n = fitness.len();
    let n_strong = n.div_ceil(2);
    if by_fitness {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            fitness[b]
                .partial_cmp(&fitness[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut strong = idx[..n_strong].to_vec();
        let mut weak = idx[n_strong..].to_vec();
        strong.sort_unstable();
        weak.sort_unstable();
        (strong, weak)
    } else {
        ((0..n_strong).collect(), (n_strong..n).collect())
    }
}

fn uniform_vec(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.uniform_unit()).collect()
}

/// One draw from the female-phase event set: a random vector whose range
/// depends on which of the four events is selected.
fn female_event(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    match rng.uniform_index(4) {
        0 => {
            let i2 = 1 + rng.uniform_index(2);
            let rho = rng.uniform_index(2);
            let r = uniform_vec(rng, dim);
            r.iter().map(|v| i2 as f64 * v + rho as f64).collect()
        }
        1 => uniform_vec(rng, dim).iter().map(|v| 2.0 * v - 1.0).collect(),
        2 => uniform_vec(rng, dim),
        _ => {
            let r5 = rng.uniform_unit();
            vec![r5; dim]
        }
    }
}

/// One draw from the local-search event set.
fn local_event(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    match rng.uniform_index(3) {
        0 => uniform_vec(rng, dim).iter().map(|v| 2.0 * v - 1.0).collect(),
        1 => {
            let r12 = rng.uniform_unit();
            vec![r12; dim]
        }
        _ => {
            let r13 = rng.standard_normal();
            vec![r13; dim]
        }
    }
}

/// Mean position of a randomly chosen subset of the herd (subset size is
/// uniform over `1..=n`, members drawn without replacement).
fn mean_group(rng: &mut RngStream, positions: &[Vec<f64>]) -> Vec<f64> {
    let n = positions.len();
    let dim = positions[0].len();
    let size = 1 + rng.uniform_index(n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = i + rng.uniform_index(n - i);
        idx.swap(i, j);
    }
    let mut mean = vec![0.0; dim];
    for &i in &idx[..size] {
        for (m, v) in mean.iter_mut().zip(&positions[i]) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= size as f64;
    }
    mean
}

/// Runs the optimizer.  `fitness(x, member, iteration)` is maximized; the
/// member index and iteration number let callers derive per-evaluation
/// random streams deterministically.
pub fn optimize<F>(params: &HoParams, rng: &mut RngStream, mut fitness: F) -> Result<HoResult>
where
    F: FnMut(&[f64], usize, usize) -> f64,
{
    params.validate()?;
    let nh = params.n_hippos;
    let dim = params.dim;
    let bl = -params.bound;
    let bu = params.bound;
    let span = bu - bl;
    let mut evaluations = 0usize;

    let mut pos: Vec<Vec<f64>> = (0..nh)
        .map(|n| {
            if n == 0 && params.include_origin {
                vec![0.0; dim]
            } else {
                (0..dim).map(|_| bl + rng.uniform_unit() * span).collect()
            }
        })
        .collect();
    let mut fit: Vec<f64> = pos
        .iter()
        .enumerate()
        .map(|(n, x)| {
            evaluations += 1;
            fitness(x, n, 0)
        })
        .collect();

    let best_of = |fit: &[f64]| -> usize {
        let mut b = 0;
        for i in 1..fit.len() {
            if fit[i] > fit[b] {
                b = i;
            }
        }
        b
    };
    let mut history = Vec::with_capacity(params.max_iters + 1);
    history.push(fit[best_of(&fit)]);

    for iter in 1..=params.max_iters {
        let (strong, weak) = split_population(&fit, params.fitness_split);
        let gbest = pos[best_of(&fit)].clone();

        // phase 1: river/pond updates for the stronger half
        let p_i = (-(iter as f64) / params.max_iters as f64).exp();
        for &n in &strong {
            let r1 = rng.uniform_unit();
            let i1 = (1 + rng.uniform_index(2)) as f64;
            let mut male: Vec<f64> = pos[n]
                .iter()
                .zip(&gbest)
                .map(|(u, g)| u + r1 * (g - i1 * u))
                .collect();
            clamp_region(&mut male, params.bound);

            let mut female: Vec<f64> = if p_i > 0.6 {
                let ev = female_event(rng, dim);
                let i2 = (1 + rng.uniform_index(2)) as f64;
                let mg = mean_group(rng, &pos);
                pos[n]
                    .iter()
                    .zip(ev.iter().zip(gbest.iter().zip(&mg)))
                    .map(|(u, (e, (g, m)))| u + e * (g - i2 * m))
                    .collect()
            } else if rng.uniform_unit() > 0.5 {
                let ev = female_event(rng, dim);
                let mg = mean_group(rng, &pos);
                pos[n]
                    .iter()
                    .zip(ev.iter().zip(gbest.iter().zip(&mg)))
                    .map(|(u, (e, (g, m)))| u + e * (m - g))
                    .collect()
            } else {
                let r7 = rng.uniform_unit();
                vec![bl + r7 * span; dim]
            };
            clamp_region(&mut female, params.bound);

            let f_male = {
                evaluations += 1;
                fitness(&male, n, iter)
            };
            let f_female = {
                evaluations += 1;
                fitness(&female, n, iter)
            };
            if f_male > fit[n].max(f_female) {
                pos[n] = male;
                fit[n] = f_male;
            } else if f_female > fit[n].max(f_male) {
                pos[n] = female;
                fit[n] = f_female;
            }
        }

        // phase 2: predator defense for the weaker half
        let levy = rng.levy_matrix(dim, nh, params.beta)?;
        for &n in &weak {
            let predator: Vec<f64> = (0..dim).map(|_| bl + rng.uniform_unit() * span).collect();
            let f_pred = {
                evaluations += 1;
                fitness(&predator, n, iter)
            };
            let dist: Vec<f64> = predator
                .iter()
                .zip(&pos[n])
                .map(|(p, u)| (p - u).abs())
                .collect();
            let rb = rng.uniform(2.0, 4.0)?;
            let rc = rng.uniform(1.0, 1.5)?;
            let rd = rng.uniform(2.0, 3.0)?;
            let rg = rng.uniform(-1.0, 1.0)?;
            let coef = rb / (rc - rd * (2.0 * std::f64::consts::PI * rg).cos());
            let close = f_pred > fit[n];
            let r9 = uniform_vec(rng, dim);
            let mut cand: Vec<f64> = (0..dim)
                .map(|e| {
                    let denom = if close {
                        dist[e].max(1e-12)
                    } else {
                        (2.0 * dist[e] + r9[e]).max(1e-12)
                    };
                    levy[(e, n)] * predator[e] + coef / denom
                })
                .collect();
            clamp_region(&mut cand, params.bound);
            let f_cand = {
                evaluations += 1;
                fitness(&cand, n, iter)
            };
            if f_cand > fit[n] {
                pos[n] = cand;
                fit[n] = f_cand;
            }
        }

        // phase 3: shrinking local search for everyone
        let bl_local = bl / iter as f64;
        let bu_local = bu / iter as f64;
        for n in 0..nh {
            let r10 = rng.uniform_unit();
            let ev = local_event(rng, dim);
            let mut cand: Vec<f64> = pos[n]
                .iter()
                .zip(&ev)
                .map(|(u, e)| u + r10 * (bl_local + e * (bu_local - bl_local)))
                .collect();
            clamp_region(&mut cand, params.bound);
            let f_cand = {
                evaluations += 1;
                fitness(&cand, n, iter)
            };
            if f_cand > fit[n] {
                pos[n] = cand;
                fit[n] = f_cand;
            }
        }

        history.push(fit[best_of(&fit)]);
    }

    let b = best_of(&fit);
    Ok(HoResult {
        best: pos[b].clone(),
        best_fitness: fit[b],
        history,
        evaluations,
    })
}
