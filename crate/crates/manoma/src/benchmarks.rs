//! Benchmark schemes: antenna placement and multiple-access variants.
//!
//! Six schemes share one scenario: movable antennas with adaptive SIC,
//! movable antennas with a fixed SIC order, per-user positions maximizing
//! channel power, fixed positions, and the SDMA (no SIC) counterparts of
//! the movable and fixed cases.  A robustness experiment re-scores a frozen
//! solution on a perturbed copy of the channel state.

use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ao::{ao_solve, AoParams, AoResult};
use crate::channel::{channel_vector, perturb_fri, Apv, Scenario};
use crate::error::{Error, Result};
use crate::ho::{optimize, HoParams, HoResult};
use crate::precoding::{random_precoder, sca_precoding, ScaOptions};
use crate::rates::{min_rate, order_users, DecodingMatrix, Precoder, UserOrder};
use crate::stochastic::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// movable antennas, NOMA with annealed decoding search
    MaNoma,
    /// movable antennas, NOMA with the full fixed SIC order
    MaNomaFixedSic,
    /// per-user positions maximizing channel power, then NOMA
    McpNoma,
    /// fixed antennas at the region center, NOMA
    FpaNoma,
    /// movable antennas, no SIC
    MaSdma,
    /// fixed antennas, no SIC
    FpaSdma,
}

impl Scheme {
    pub fn all() -> [Scheme; 6] {
        [
            Scheme::MaNoma,
            Scheme::MaNomaFixedSic,
            Scheme::McpNoma,
            Scheme::FpaNoma,
            Scheme::MaSdma,
            Scheme::FpaSdma,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::MaNoma => "ma-noma",
            Scheme::MaNomaFixedSic => "ma-noma-fixed-sic",
            Scheme::McpNoma => "mcp-noma",
            Scheme::FpaNoma => "fpa-noma",
            Scheme::MaSdma => "ma-sdma",
            Scheme::FpaSdma => "fpa-sdma",
        }
    }

    /// True when the scheme searches over antenna positions.
    pub fn is_movable(&self) -> bool {
        matches!(
            self,
            Scheme::MaNoma | Scheme::MaNomaFixedSic | Scheme::MaSdma
        )
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scheme> {
        Scheme::all()
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme `{s}`")))
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the decoding matrix is chosen inside the precoding loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DecodingPolicy {
    Adaptive,
    FixedSic,
    NoSic,
}

impl Scheme {
    fn policy(&self) -> DecodingPolicy {
        match self {
            Scheme::MaNoma | Scheme::McpNoma | Scheme::FpaNoma => DecodingPolicy::Adaptive,
            Scheme::MaNomaFixedSic => DecodingPolicy::FixedSic,
            Scheme::MaSdma | Scheme::FpaSdma => DecodingPolicy::NoSic,
        }
    }
}

/// Knobs shared by every scheme run.
#[derive(Debug, Clone)]
pub struct BenchParams {
    /// transmit power budget, Watts
    pub p_max: f64,
    pub ao: AoParams,
    /// herd size for the position search
    pub n_hippos: usize,
    /// iterations of the position search
    pub ho_iters: usize,
    /// Levy flight exponent
    pub beta: f64,
    /// grid step for channel-power placement, meters
    pub mcp_step: f64,
    /// seed herd member 0 at the region center
    pub include_origin: bool,
}

impl BenchParams {
    pub fn validate(&self) -> Result<()> {
        if self.p_max <= 0.0 {
            return Err(Error::param("p_max", "must be positive"));
        }
        if self.mcp_step <= 0.0 {
            return Err(Error::param("mcp_step", "must be positive"));
        }
        self.ao.validate()
    }
}

#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub scheme: Scheme,
    /// max-min achievable rate, bps/Hz
    pub rate: f64,
    pub apv: Apv,
    pub precoder: Precoder,
    pub decoding: DecodingMatrix,
    pub order: UserOrder,
    /// best fitness per iteration of the position search, when one ran
    pub ho_history: Option<Vec<f64>>,
    /// rate evaluations spent in the position search
    pub position_evaluations: usize,
}

/// Precoding (and, when adaptive, decoding) for a fixed channel matrix.
fn inner_solve(
    h: &DMatrix<Complex64>,
    sigma2: f64,
    p_max: f64,
    policy: DecodingPolicy,
    ao: &AoParams,
    rng: &mut RngStream,
) -> Result<AoResult> {
    if policy == DecodingPolicy::Adaptive {
        return ao_solve(h, sigma2, p_max, ao, rng);
    }
    let k = h.ncols();
    let hn = h.map(|v| v / Complex64::new(sigma2.sqrt(), 0.0));
    let order = order_users(&hn);
    let m = match policy {
        DecodingPolicy::FixedSic => DecodingMatrix::full_sic(k),
        _ => DecodingMatrix::identity(k),
    };
    let w0 = random_precoder(h.nrows(), k, p_max, rng)?;
    let opts = ScaOptions {
        max_iters: ao.max_iters,
        tol: ao.eps2,
    };
    let (precoder, _) = sca_precoding(&hn, &order, &m, &w0.w, p_max, 1.0, opts)?;
    let rate = min_rate(&hn, &precoder, &m, &order, 1.0);
    Ok(AoResult {
        rate,
        precoder,
        decoding: m,
        order,
        trace: Vec::new(),
        iterations: 0,
        solver_failures: 0,
    })
}

/// Stream key derived from the position vector (FNV-1a over the raw f64
/// bits).  Keying the fitness stream by position instead of by evaluation
/// slot makes the fitness a deterministic function of the position, so the
/// final solve at the best position reproduces the search's best value.
fn apv_stream_key(x: &[f64]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in x {
        for byte in v.to_bits().to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

/// Per-user grid search over the movable region maximizing the channel
/// power of that user alone.  Deterministic; ties keep the first grid point
/// in x-then-y-then-z scan order.
pub fn mcp_positions(sc: &Scenario, step: f64) -> Result<Apv> {
    if step <= 0.0 {
        return Err(Error::param("mcp_step", "must be positive"));
    }
    let half = sc.region_half;
    let n_steps = (2.0 * half / step).floor() as usize + 1;
    let mut positions = Vec::with_capacity(sc.n_users());
    for fr in &sc.users {
        let mut best = [0.0f64; 3];
        let mut best_gain = f64::NEG_INFINITY;
        for iz in 0..n_steps {
            for iy in 0..n_steps {
                for ix in 0..n_steps {
                    let u = [
                        (-half + ix as f64 * step).min(half),
                        (-half + iy as f64 * step).min(half),
                        (-half + iz as f64 * step).min(half),
                    ];
                    let gain = channel_vector(&u, fr, sc.geometry.wavelength).norm_squared();
                    if gain > best_gain {
                        best_gain = gain;
                        best = u;
                    }
                }
            }
        }
        positions.push(best);
    }
    Ok(Apv {
        positions,
        region_half: half,
    })
}

/// Runs one scheme end to end on a sampled scenario.
pub fn run_scheme(
    sc: &Scenario,
    scheme: Scheme,
    params: &BenchParams,
    rng: &mut RngStream,
) -> Result<SchemeResult> {
    params.validate()?;
    let k = sc.n_users();
    let policy = scheme.policy();

    let (apv, ho_history, position_evaluations) = if scheme.is_movable() {
        let ho = position_search(sc, policy, params, rng)?;
        (
            Apv::from_flat(&ho.best, sc.region_half)?,
            Some(ho.history),
            ho.evaluations,
        )
    } else if scheme == Scheme::McpNoma {
        (mcp_positions(sc, params.mcp_step)?, None, 0)
    } else {
        (Apv::origin(k, sc.region_half), None, 0)
    };

    let h = sc.channel_matrix(&apv)?;
    let mut final_rng = rng.derive(FITNESS_TAG).derive(apv_stream_key(&apv.to_flat()));
    let inner = inner_solve(
        &h,
        sc.noise_power,
        params.p_max,
        policy,
        &params.ao,
        &mut final_rng,
    )?;
    Ok(SchemeResult {
        scheme,
        rate: inner.rate,
        apv,
        precoder: inner.precoder,
        decoding: inner.decoding,
        order: inner.order,
        ho_history,
        position_evaluations,
    })
}

const FITNESS_TAG: u64 = 0x6f70;

/// Population search over the stacked antenna positions.  Each fitness call
/// gets its own derived random stream keyed by the evaluated position so
/// the search is reproducible regardless of evaluation order.
fn position_search(
    sc: &Scenario,
    policy: DecodingPolicy,
    params: &BenchParams,
    rng: &mut RngStream,
) -> Result<HoResult> {
    let k = sc.n_users();
    let ho_params = HoParams {
        n_hippos: params.n_hippos,
        max_iters: params.ho_iters,
        beta: params.beta,
        bound: sc.region_half,
        dim: 3 * k,
        fitness_split: true,
        include_origin: params.include_origin,
    };
    let fitness_base = rng.derive(FITNESS_TAG);
    let mut search_rng = rng.derive(0x6873);
    optimize(&ho_params, &mut search_rng, |x, _member, _iter| {
        let apv = match Apv::from_flat(x, sc.region_half) {
            Ok(a) => a,
            Err(_) => return f64::NEG_INFINITY,
        };
        let h = match sc.channel_matrix(&apv) {
            Ok(h) => h,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut frng = fitness_base.derive(apv_stream_key(x));
        match inner_solve(
            &h,
            sc.noise_power,
            params.p_max,
            policy,
            &params.ao,
            &mut frng,
        ) {
            Ok(r) => r.rate,
            Err(_) => f64::NEG_INFINITY,
        }
    })
}

/// Re-scores a frozen solution on a perturbed copy of the scenario:
/// positions, precoder, decoding matrix, and user order all stay fixed while
/// the field-response information is perturbed with angle spread `mu` and
/// path-gain error variance `nu`.
pub fn fri_experiment(
    sc: &Scenario,
    result: &SchemeResult,
    mu: f64,
    nu: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    let perturbed = perturb_fri(sc, mu, nu, rng)?;
    let h = perturbed.channel_matrix(&result.apv)?;
    Ok(min_rate(
        &h,
        &result.precoder,
        &result.decoding,
        &result.order,
        perturbed.noise_power,
    ))
}
