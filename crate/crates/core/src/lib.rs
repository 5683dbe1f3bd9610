//! Discrete-event simulator for a traffic-predicting, resource-slicing random
//! access protocol serving mixed URLLC/mMTC populations.
//!
//! The crate is organised the way a frame flows through the system:
//!
//! - [`traffic`] draws per-frame arrivals and keeps the backlog counts.
//! - [`predictor`] estimates next-frame backlog from channel observations
//!   (from-scratch LSTM, a moment-inversion baseline, and a ground-truth oracle).
//! - [`slicer`] packs URLLC/mMTC channels into the time-frequency grid.
//! - [`access`] computes access class barring factors and thins contenders.
//! - [`engine`] runs frames, realizations and Monte-Carlo batches.
//! - [`metrics`] turns frame records into throughput, loading and MSE figures.
//! - [`config`] and [`scenario`] load configuration and orchestrate sweeps.

pub mod access;
pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod predictor;
pub mod scenario;
pub mod slicer;
pub mod traffic;

pub use error::{Error, Result};

/// The two service classes sharing the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UseMode {
    Urllc,
    Mmtc,
}

impl UseMode {
    pub const ALL: [UseMode; 2] = [UseMode::Urllc, UseMode::Mmtc];

    pub fn as_str(self) -> &'static str {
        match self {
            UseMode::Urllc => "urllc",
            UseMode::Mmtc => "mmtc",
        }
    }
}

impl std::fmt::Display for UseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
