//! Instances, datasets, sweeps and plots.

pub mod data;
pub mod gallery;
pub mod goldens;
pub mod plot;
pub mod replay;
pub mod stats;
pub mod sweep;

use crate::config::{AlgoConfig, Mode};
use crate::dovi::{run_baseline, run_dovi};
use crate::dovi_plus::run_dovi_plus;
use crate::error::{Error, Result};
use crate::mdp::{AdjustmentMode, ConfoundedMdp, Trajectory};
use crate::report::RegretReport;

pub use data::{DatasetHeader, OfflineDataset};
pub use gallery::{gallery, GALLERY};
pub use goldens::Goldens;
pub use sweep::{run_sweep, SweepOutcome, SweepSpec};

/// Whether `mode` can run on an instance of the given variant.
pub fn mode_supported(mode: Mode, variant: AdjustmentMode) -> bool {
    matches!(
        (mode, variant),
        (Mode::Dovi | Mode::NaiveConfounded | Mode::OnlineOnly, AdjustmentMode::Backdoor)
            | (Mode::DoviPlus | Mode::OnlineOnly, AdjustmentMode::Frontdoor)
    )
}

/// One run of `mode` with `offline` as the observational data. `cfg.mode`
/// is overridden by `mode`.
pub fn run_cell(mdp: &ConfoundedMdp, mode: Mode, offline: &[Trajectory], cfg: &AlgoConfig) -> Result<RegretReport> {
    if !mode_supported(mode, mdp.mode()) {
        return Err(Error::Config(format!(
            "mode {mode} is not available on {} instance {}",
            mdp.mode(),
            mdp.name()
        )));
    }
    let cfg = AlgoConfig { mode, ..cfg.clone() };
    match (mode, mdp.mode()) {
        (Mode::Dovi, _) => run_dovi(mdp, offline, &cfg),
        (_, AdjustmentMode::Frontdoor) => run_dovi_plus(mdp, offline, &cfg),
        _ => run_baseline(mdp, offline, &cfg),
    }
}
