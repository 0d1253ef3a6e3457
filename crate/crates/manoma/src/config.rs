//! Simulation configuration: physical units in, linear units out.
//!
//! Config files and CLI flags carry human-friendly units (dB, dBm,
//! wavelengths); conversion to linear Watts and meters happens exactly once,
//! in [`SimConfig::scenario_params`] and [`SimConfig::bench_params`].  All
//! fields have defaults so a TOML file only needs to list overrides.

use serde::{Deserialize, Serialize};

use crate::ao::AoParams;
use crate::benchmarks::BenchParams;
use crate::channel::ScenarioParams;
use crate::error::{Error, Result};

/// Power ratio from decibels.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Watts from dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// transmit antennas at the base station
    pub n_antennas: usize,
    /// users, one movable receive antenna each
    pub n_users: usize,
    /// propagation paths per link side
    pub n_paths: usize,
    /// carrier wavelength, meters
    pub wavelength_m: f64,
    /// reference channel gain at 1 m, dB
    pub g0_db: f64,
    /// path-loss exponent
    pub zeta: f64,
    /// receiver noise power, dBm
    pub noise_dbm: f64,
    /// movable-region side length, in wavelengths
    pub region_wavelengths: f64,
    /// transmit power budget, dBm
    pub p_max_dbm: f64,

    /// bad-flip acceptance scale of the decoding search
    pub xi: f64,
    /// annealing decay
    pub alpha: f64,
    /// initial annealing temperature
    pub t0: f64,
    /// temperature threshold ending the inner loop
    pub eps1: f64,
    /// rate-change threshold ending the inner loop
    pub eps2: f64,
    /// hard cap on inner-loop iterations
    pub ao_max_iters: usize,

    /// herd size of the position search
    pub n_hippos: usize,
    /// iterations of the position search
    pub ho_iters: usize,
    /// Levy flight exponent
    pub beta: f64,
    /// seed one herd member at the region center
    pub include_origin: bool,

    /// channel-power placement grid step, in wavelengths
    pub mcp_step_wavelengths: f64,

    /// independent scenario draws per data point
    pub trials: usize,
    /// master random seed
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_antennas: 4,
            n_users: 6,
            n_paths: 10,
            wavelength_m: 0.01,
            g0_db: -40.0,
            zeta: 2.8,
            noise_dbm: -80.0,
            region_wavelengths: 2.0,
            p_max_dbm: 30.0,
            xi: 0.1,
            alpha: 0.8,
            t0: 5.0,
            eps1: 1e-3,
            eps2: 1e-3,
            ao_max_iters: 100,
            n_hippos: 50,
            ho_iters: 100,
            beta: 1.5,
            include_origin: false,
            mcp_step_wavelengths: 0.05,
            trials: 100,
            seed: 1,
        }
    }
}

impl SimConfig {
    /// Full-size defaults.
    pub fn full() -> Self {
        SimConfig::default()
    }

    /// Scaled-down profile for quick desk runs.
    pub fn desk() -> Self {
        SimConfig {
            n_antennas: 2,
            n_users: 3,
            n_paths: 4,
            n_hippos: 8,
            ho_iters: 25,
            trials: 20,
            ..SimConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, reason: &str| {
            Err(Error::Config {
                field: name.to_string(),
                reason: reason.to_string(),
            })
        };
        if self.n_antennas == 0 {
            return field("n_antennas", "must be >= 1");
        }
        if self.n_users == 0 {
            return field("n_users", "must be >= 1");
        }
        if self.n_paths == 0 {
            return field("n_paths", "must be >= 1");
        }
        if !(self.wavelength_m > 0.0 && self.wavelength_m.is_finite()) {
            return field("wavelength_m", "must be positive and finite");
        }
        if !self.g0_db.is_finite() {
            return field("g0_db", "must be finite");
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return field("zeta", "must be non-negative and finite");
        }
        if !self.noise_dbm.is_finite() {
            return field("noise_dbm", "must be finite");
        }
        if !(self.region_wavelengths >= 0.0 && self.region_wavelengths.is_finite()) {
            return field("region_wavelengths", "must be non-negative and finite");
        }
        if !self.p_max_dbm.is_finite() {
            return field("p_max_dbm", "must be finite");
        }
        if self.xi < 0.0 {
            return field("xi", "must be non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return field("alpha", "must lie in (0, 1)");
        }
        if !(self.t0 > 0.0) {
            return field("t0", "must be positive");
        }
        if !(self.eps1 > 0.0) {
            return field("eps1", "must be positive");
        }
        if !(self.eps2 > 0.0) {
            return field("eps2", "must be positive");
        }
        if self.ao_max_iters == 0 {
            return field("ao_max_iters", "must be >= 1");
        }
        if self.n_hippos < 2 {
            return field("n_hippos", "must be >= 2");
        }
        if self.ho_iters == 0 {
            return field("ho_iters", "must be >= 1");
        }
        if !(self.beta > 0.0 && self.beta <= 2.0) {
            return field("beta", "must lie in (0, 2]");
        }
        if !(self.mcp_step_wavelengths > 0.0) {
            return field("mcp_step_wavelengths", "must be positive");
        }
        if self.trials == 0 {
            return field("trials", "must be >= 1");
        }
        Ok(())
    }

    /// Physical scenario parameters in linear units.
    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            n_antennas: self.n_antennas,
            n_users: self.n_users,
            n_paths: self.n_paths,
            wavelength: self.wavelength_m,
            g0: db_to_linear(self.g0_db),
            zeta: self.zeta,
            noise_power: dbm_to_watts(self.noise_dbm),
            region_a: self.region_wavelengths * self.wavelength_m,
        }
    }

    pub fn ao_params(&self) -> AoParams {
        AoParams {
            t0: self.t0,
            alpha: self.alpha,
            eps1: self.eps1,
            eps2: self.eps2,
            xi: self.xi,
            max_iters: self.ao_max_iters,
        }
    }

    /// Scheme-runner parameters in linear units.
    pub fn bench_params(&self) -> BenchParams {
        BenchParams {
            p_max: dbm_to_watts(self.p_max_dbm),
            ao: self.ao_params(),
            n_hippos: self.n_hippos,
            ho_iters: self.ho_iters,
            beta: self.beta,
            mcp_step: self.mcp_step_wavelengths * self.wavelength_m,
            include_origin: self.include_origin,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_conversions() {
        assert!((db_to_linear(0.0) - 1.0).abs() < 1e-15);
        assert!((db_to_linear(-40.0) - 1e-4).abs() < 1e-18);
        assert!((db_to_linear(3.0) - 1.9952623149688795).abs() < 1e-12);
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        assert!((dbm_to_watts(-80.0) - 1e-11).abs() < 1e-24);
    }

    #[test]
    fn defaults_convert_to_expected_linear_values() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        let sp = cfg.scenario_params();
        assert_eq!(sp.n_antennas, 4);
        assert_eq!(sp.n_users, 6);
        assert_eq!(sp.n_paths, 10);
        assert!((sp.g0 - 1e-4).abs() < 1e-18);
        assert!((sp.noise_power - 1e-11).abs() < 1e-24);
        assert!((sp.region_a - 0.02).abs() < 1e-15);
        let bp = cfg.bench_params();
        assert!((bp.p_max - 1.0).abs() < 1e-12);
        assert!((bp.mcp_step - 0.0005).abs() < 1e-15);
        assert_eq!(bp.n_hippos, 50);
    }

    #[test]
    fn desk_profile_is_smaller_but_same_physics() {
        let desk = SimConfig::desk();
        desk.validate().unwrap();
        let full = SimConfig::full();
        assert!(desk.n_users < full.n_users);
        assert!(desk.n_hippos < full.n_hippos);
        assert_eq!(desk.noise_dbm, full.noise_dbm);
        assert_eq!(desk.p_max_dbm, full.p_max_dbm);
    }

    #[test]
    fn toml_overrides_only_named_fields() {
        let cfg = SimConfig::from_toml("n_users = 4\np_max_dbm = 20.0\n").unwrap();
        assert_eq!(cfg.n_users, 4);
        assert!((cfg.bench_params().p_max - 0.1).abs() < 1e-12);
        assert_eq!(cfg.n_antennas, 4);
    }

    #[test]
    fn toml_rejects_unknown_and_invalid_fields() {
        assert!(SimConfig::from_toml("n_userz = 4\n").is_err());
        let err = SimConfig::from_toml("alpha = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpha"), "message should name the field: {msg}");
    }

    #[test]
    fn validate_names_offending_field() {
        let mut cfg = SimConfig::default();
        cfg.n_hippos = 1;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("n_hippos"), "{msg}");
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SimConfig::desk();
        let text = toml::to_string(&cfg).unwrap();
        let back = SimConfig::from_toml(&text).unwrap();
        assert_eq!(back.n_users, cfg.n_users);
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.noise_dbm, cfg.noise_dbm);
    }
}
