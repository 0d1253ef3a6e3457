//! Movable-antenna NOMA downlink simulator.
//!
//! A base station with a fixed planar array serves single-antenna users whose
//! antennas can move inside a small cube.  The library jointly optimizes the
//! antenna positions (hippopotamus search), the precoding matrix (successive
//! convex approximation over second-order cone programs), and the adaptive
//! SIC decoding indicator matrix (greedy search with annealed acceptance),
//! maximizing the minimum achievable rate across users.

pub mod ao;
pub mod benchmarks;
pub mod channel;
pub mod config;
pub mod decoding_search;
pub mod error;
pub mod ho;
pub mod precoding;
pub mod rates;
pub mod socp;
pub mod stochastic;

pub use error::{Error, Result};
