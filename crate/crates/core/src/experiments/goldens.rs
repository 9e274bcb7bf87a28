//! Calibration-derived thresholds, versioned alongside the code.
//!
//! The values live in `goldens.toml` at the crate root and are regenerated
//! by `cargo run --release --example calibrate`.

use serde::Deserialize;

use crate::error::{Error, Result};

const GOLDENS_TOML: &str = include_str!("../../goldens.toml");

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Goldens {
    pub version: u32,
    /// Seeds of the calibration runs.
    pub calibration_seeds: Vec<u64>,
    /// Exploration multiplier `c`.
    pub beta_scale: f64,
    /// Largest `|ψᵀω − Q*|` at the first episode on BD-2 with 10⁴ episodes.
    pub bd2_offline_fit_tol: f64,
    /// Largest `|ψᵀω₁ − V*_{h+½}|` at the first episode on FD-2 with 10⁴ episodes.
    pub fd2_stage1_fit_tol: f64,
    /// Floor on the naive learner's tail regret on TRAP-2-H2.
    pub trap_naive_floor: f64,
}

impl Goldens {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("goldens: {e}")))
    }
}

/// The goldens compiled into this build.
pub fn goldens() -> Goldens {
    Goldens::parse(GOLDENS_TOML).expect("bundled goldens.toml is well formed")
}
