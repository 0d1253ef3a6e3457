//! Multi-path field-response channel model.
//!
//! A user's channel is `h(u) = (f(u)^H * Sigma * G)^T`, where `f(u)` is the
//! receive field-response vector at antenna position `u`, `Sigma` the
//! path-response matrix, and `G` the transmit field-response matrix of the
//! base-station array.  Moving the antenna only changes per-path phases in
//! `f(u)`; angles, amplitudes, and `G` stay fixed within the movable region.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::RngStream;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Fixed-position array at the base station.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Local coordinates of each fixed antenna, meters.
    pub fpa_positions: Vec<[f64; 3]>,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
}

impl ArrayGeometry {
    /// Uniform planar array with half-wavelength spacing in the x-y plane,
    /// `n1 x n2` with `n1 = ceil(sqrt(n))`, truncated to `n` elements.
    pub fn upa(n: usize, wavelength: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n_antennas", "must be >= 1"));
        }
        if wavelength <= 0.0 {
            return Err(Error::param("wavelength", "must be > 0"));
        }
        let n1 = (n as f64).sqrt().ceil() as usize;
        let n2 = n.div_ceil(n1);
        let d = wavelength / 2.0;
        let mut fpa_positions = Vec::with_capacity(n);
        'outer: for i2 in 0..n2 {
            for i1 in 0..n1 {
                if fpa_positions.len() == n {
                    break 'outer;
                }
                fpa_positions.push([
                    (i1 as f64 - (n1 as f64 - 1.0) / 2.0) * d,
                    (i2 as f64 - (n2 as f64 - 1.0) / 2.0) * d,
                    0.0,
                ]);
            }
        }
        Ok(ArrayGeometry {
            fpa_positions,
            wavelength,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.fpa_positions.len()
    }
}

/// Direction cosines of a propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualAngle {
    pub vtheta: f64,
    pub vphi: f64,
    pub vomega: f64,
}

/// Virtual angle from physical elevation/azimuth, both in `[-pi/2, pi/2]`.
pub fn virtual_angles(theta: f64, phi: f64) -> VirtualAngle {
    VirtualAngle {
        vtheta: theta.cos() * phi.cos(),
        vphi: theta.cos() * phi.sin(),
        vomega: theta.sin(),
    }
}

/// Propagation distance difference between `pos` and the local origin along
/// the path direction.
pub fn propagation_delta(pos: &[f64; 3], angle: &VirtualAngle) -> f64 {
    pos[0] * angle.vtheta + pos[1] * angle.vphi + pos[2] * angle.vomega
}

/// Per-user multi-path descriptor: receive angles, path-response matrix, and
/// the precomputed transmit field-response matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldResponse {
    /// Receive virtual angles, one per receive path.
    pub rx_angles: Vec<VirtualAngle>,
    /// Physical receive (elevation, azimuth) pairs, radians.
    pub rx_aoa: Vec<(f64, f64)>,
    /// Physical transmit (elevation, azimuth) pairs, radians.
    pub tx_aod: Vec<(f64, f64)>,
    /// Path-response matrix, `L_r x L_t`.
    pub prm: DMatrix<Complex64>,
    /// Transmit field-response matrix, `L_t x N`.
    pub tx_frm: DMatrix<Complex64>,
    /// BS-to-user distance, meters.
    pub distance: f64,
}

impl FieldResponse {
    pub fn n_rx_paths(&self) -> usize {
        self.rx_angles.len()
    }
}

/// Receive field-response vector at antenna position `u`: entry `j` is
/// `exp(j * 2*pi/lambda * rho_j(u))`, unit modulus.
pub fn receive_frv(u: &[f64; 3], fr: &FieldResponse, wavelength: f64) -> DVector<Complex64> {
    DVector::from_iterator(
        fr.rx_angles.len(),
        fr.rx_angles.iter().map(|a| {
            let phase = TWO_PI / wavelength * propagation_delta(u, a);
            Complex64::from_polar(1.0, phase)
        }),
    )
}

/// Channel vector `h(u) = (f^H Sigma G)^T` for one user.
pub fn channel_vector(u: &[f64; 3], fr: &FieldResponse, wavelength: f64) -> DVector<Complex64> {
    let f = receive_frv(u, fr, wavelength);
    let row = f.adjoint() * &fr.prm * &fr.tx_frm; // 1 x N
    row.transpose()
}

/// Stacked positions of all users' movable antennas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Apv {
    pub positions: Vec<[f64; 3]>,
    /// Half side length of the cubic movable region (`A/2`).
    pub region_half: f64,
}

impl Apv {
    pub fn origin(n_users: usize, region_half: f64) -> Self {
        Apv {
            positions: vec![[0.0; 3]; n_users],
            region_half,
        }
    }

    pub fn from_flat(flat: &[f64], region_half: f64) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "APV length {} is not a multiple of 3",
                flat.len()
            )));
        }
        Ok(Apv {
            positions: flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            region_half,
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.positions.iter().flatten().copied().collect()
    }

    pub fn n_users(&self) -> usize {
        self.positions.len()
    }

    pub fn in_region(&self) -> bool {
        let b = self.region_half + 1e-12;
        self.positions
            .iter()
            .all(|p| p.iter().all(|c| c.abs() <= b))
    }
}

/// Physical parameters for scenario sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n_antennas: usize,
    pub n_users: usize,
    pub n_paths: usize,
    /// meters
    pub wavelength: f64,
    /// linear reference gain at 1 m
    pub g0: f64,
    /// path-loss exponent
    pub zeta: f64,
    /// Watts
    pub noise_power: f64,
    /// side length of the movable cube, meters
    pub region_a: f64,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 {
            return Err(Error::param("n_antennas", "must be >= 1"));
        }
        if self.n_users == 0 {
            return Err(Error::param("n_users", "must be >= 1"));
        }
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", "must be >= 1"));
        }
        if self.wavelength <= 0.0 {
            return Err(Error::param("wavelength", "must be > 0"));
        }
        if self.g0 <= 0.0 {
            return Err(Error::param("g0", "must be > 0 (linear)"));
        }
        if self.noise_power <= 0.0 {
            return Err(Error::param("noise_power", "must be > 0"));
        }
        if self.region_a < 0.0 {
            return Err(Error::param("region_a", "must be >= 0"));
        }
        Ok(())
    }
}

/// A fully sampled propagation environment, immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub users: Vec<FieldResponse>,
    /// Watts
    pub noise_power: f64,
    /// linear reference gain
    pub g0: f64,
    pub path_loss_exp: f64,
    /// Half side of the movable cube (`A/2`), meters.
    pub region_half: f64,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.geometry.n_antennas()
    }

    /// Channel matrix with column `k = h_k(u_k)`.
    pub fn channel_matrix(&self, apv: &Apv) -> Result<DMatrix<Complex64>> {
        if apv.n_users() != self.n_users() {
            return Err(Error::DimensionMismatch(format!(
                "APV has {} users, scenario has {}",
                apv.n_users(),
                self.n_users()
            )));
        }
        if !apv.in_region() {
            return Err(Error::Precondition(
                "APV outside the movable region".to_string(),
            ));
        }
        let n = self.n_antennas();
        let mut h = DMatrix::<Complex64>::zeros(n, self.n_users());
        for (k, fr) in self.users.iter().enumerate() {
            h.set_column(
                k,
                &channel_vector(&apv.positions[k], fr, self.geometry.wavelength),
            );
        }
        Ok(h)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        sc.check_consistent()?;
        Ok(sc)
    }

    /// Structural validation after deserialization from untrusted input.
    pub fn check_consistent(&self) -> Result<()> {
        if self.geometry.n_antennas() == 0 {
            return Err(Error::Parse("empty antenna array".into()));
        }
        if !(self.geometry.wavelength > 0.0 && self.geometry.wavelength.is_finite()) {
            return Err(Error::Parse("wavelength must be positive and finite".into()));
        }
        if self.users.is_empty() {
            return Err(Error::Parse("scenario has no users".into()));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::Parse("noise power must be positive and finite".into()));
        }
        if !self.region_half.is_finite() || self.region_half < 0.0 {
            return Err(Error::Parse("region_half must be nonnegative".into()));
        }
        let n = self.geometry.n_antennas();
        for (k, fr) in self.users.iter().enumerate() {
            let lr = fr.rx_angles.len();
            if lr == 0 {
                return Err(Error::Parse(format!("user {k}: no receive paths")));
            }
            if fr.prm.nrows() != lr {
                return Err(Error::Parse(format!(
                    "user {k}: PRM has {} rows, expected {lr}",
                    fr.prm.nrows()
                )));
            }
            if fr.tx_frm.nrows() != fr.prm.ncols() || fr.tx_frm.ncols() != n {
                return Err(Error::Parse(format!(
                    "user {k}: FRM is {}x{}, expected {}x{n}",
                    fr.tx_frm.nrows(),
                    fr.tx_frm.ncols(),
                    fr.prm.ncols()
                )));
            }
            for v in fr.prm.iter().chain(fr.tx_frm.iter()) {
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::Parse(format!("user {k}: non-finite channel entry")));
                }
            }
            for a in &fr.rx_angles {
                if !(a.vtheta.is_finite() && a.vphi.is_finite() && a.vomega.is_finite()) {
                    return Err(Error::Parse(format!("user {k}: non-finite angle")));
                }
            }
        }
        Ok(())
    }
}

/// Draws an elevation angle with density proportional to `cos(theta)` on
/// `[-pi/2, pi/2]` via the inverse CDF `sin(theta) = 2r - 1`.
fn sample_elevation(rng: &mut RngStream) -> f64 {
    (2.0 * rng.uniform_unit() - 1.0).asin()
}

/// Samples a random scenario: distances `U[20, 100]` m, diagonal PRM entries
/// `CSCG(0, c_k^2 / L)` with `c_k^2 = g0 * d_k^(-zeta)`, angles from the
/// half-space density `cos(theta) / (2*pi)`.
pub fn sample_scenario(params: &ScenarioParams, rng: &mut RngStream) -> Result<Scenario> {
    params.validate()?;
    let geometry = ArrayGeometry::upa(params.n_antennas, params.wavelength)?;
    let l = params.n_paths;
    let n = params.n_antennas;
    let mut users = Vec::with_capacity(params.n_users);
    for _ in 0..params.n_users {
        let distance = rng.uniform(20.0, 100.0)?;
        let ck2 = params.g0 * distance.powf(-params.zeta);
        let mut rx_aoa = Vec::with_capacity(l);
        let mut rx_angles = Vec::with_capacity(l);
        for _ in 0..l {
            let theta = sample_elevation(rng);
            let phi = rng.uniform(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)?;
            rx_aoa.push((theta, phi));
            rx_angles.push(virtual_angles(theta, phi));
        }
        let mut tx_aod = Vec::with_capacity(l);
        let mut tx_frm = DMatrix::<Complex64>::zeros(l, n);
        for i in 0..l {
            let theta = sample_elevation(rng);
            let phi = rng.uniform(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)?;
            tx_aod.push((theta, phi));
            let va = virtual_angles(theta, phi);
            for (j, v) in geometry.fpa_positions.iter().enumerate() {
                let phase = TWO_PI / params.wavelength * propagation_delta(v, &va);
                tx_frm[(i, j)] = Complex64::from_polar(1.0, phase);
            }
        }
        let mut prm = DMatrix::<Complex64>::zeros(l, l);
        for i in 0..l {
            prm[(i, i)] = rng.cscg(ck2 / l as f64)?;
        }
        users.push(FieldResponse {
            rx_angles,
            rx_aoa,
            tx_aod,
            prm,
            tx_frm,
            distance,
        });
    }
    Ok(Scenario {
        geometry,
        users,
        noise_power: params.noise_power,
        g0: params.g0,
        path_loss_exp: params.zeta,
        region_half: params.region_a / 2.0,
    })
}

/// Applies field-response estimation errors to the receive side of a
/// scenario: each receive virtual-angle component is shifted independently by
/// `U[-mu/2, mu/2]` and each path coefficient `s` is replaced by
/// `s - |s| * e` with `e ~ CSCG(0, nu)`.  The transmit side is untouched.
///
/// The perturbed virtual angles generally no longer lie on the unit sphere;
/// the components are shifted independently on purpose.
pub fn perturb_fri(sc: &Scenario, mu: f64, nu: f64, rng: &mut RngStream) -> Result<Scenario> {
    if mu < 0.0 {
        return Err(Error::param("mu", "must be >= 0"));
    }
    if nu < 0.0 {
        return Err(Error::param("nu", "must be >= 0"));
    }
    let mut out = sc.clone();
    for fr in &mut out.users {
        for a in &mut fr.rx_angles {
            a.vtheta += rng.uniform(-mu / 2.0, mu / 2.0)?;
            a.vphi += rng.uniform(-mu / 2.0, mu / 2.0)?;
            a.vomega += rng.uniform(-mu / 2.0, mu / 2.0)?;
        }
        for v in fr.prm.iter_mut() {
            let err = rng.cscg(nu)?;
            *v -= v.norm() * err;
        }
    }
    Ok(out)
}
