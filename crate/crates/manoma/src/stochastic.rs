//! Seeded random-number streams and the special distributions used by the
//! position-search metaheuristic.
//!
//! Every random quantity in the simulator is drawn from an [`RngStream`],
//! which couples a global seed with a 64-bit stream id.  Streams with the
//! same `(seed, stream_id)` replay identical sequences; distinct stream ids
//! give statistically independent sequences, so parallel fitness evaluations
//! can each own a derived stream without changing results.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Mixes a parent key and a child index into a new sub-stream key.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible random stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Creates an independent stream for a child task.  The derivation is a
    /// pure function of `(stream_id, child)`, so it does not consume state
    /// from `self` and is stable under any evaluation order.
    pub fn derive(&self, child: u64) -> RngStream {
        let sub = splitmix64(self.stream_id ^ splitmix64(child));
        RngStream::new(self.seed, sub)
    }

    /// Uniform draw on `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if lo > hi {
            return Err(Error::InvalidRange { lo, hi });
        }
        if lo == hi {
            // keep the stream position consistent with the non-degenerate case
            let _ = self.rng.gen::<f64>();
            return Ok(lo);
        }
        Ok(lo + self.rng.gen::<f64>() * (hi - lo))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform_unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Circularly symmetric complex Gaussian with the given total variance:
    /// real and imaginary parts are independent `N(0, variance/2)`.
    pub fn cscg(&mut self, variance: f64) -> Result<Complex64> {
        if variance < 0.0 {
            return Err(Error::param("variance", format!("must be >= 0, got {variance}")));
        }
        let s = (variance / 2.0).sqrt();
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        Ok(Complex64::new(s * re, s * im))
    }

    /// Matrix of heavy-tailed Levy steps: `0.05 * (R_u * sigma_u) / |R_v|^(1/beta)`
    /// elementwise, with `R_u`, `R_v` uniform on `(0,1)`.
    pub fn levy_matrix(&mut self, rows: usize, cols: usize, beta: f64) -> Result<DMatrix<f64>> {
        if !(beta > 0.0 && beta <= 2.0) {
            return Err(Error::param("beta", format!("must be in (0, 2], got {beta}")));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::param("rows/cols", "must be >= 1"));
        }
        let sigma_u = levy_sigma(beta);
        let mut out = DMatrix::<f64>::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                let ru = self.rng.gen::<f64>();
                let rv = self.rng.gen::<f64>();
                // |R_v|^(1/beta) can be arbitrarily close to 0; floor it
                let denom = rv.abs().powf(1.0 / beta).max(f64::EPSILON);
                out[(r, c)] = 0.05 * (ru * sigma_u) / denom;
            }
        }
        Ok(out)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Scale factor for the Levy step distribution; depends only on `beta`.
pub fn levy_sigma(beta: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let num = gamma(1.0 + beta) * (std::f64::consts::PI * beta / 2.0).sin();
    let den = gamma((1.0 + beta) / 2.0) * beta * 2f64.powf((beta - 1.0) / 2.0);
    (num / den).powf(1.0 / beta)
}
