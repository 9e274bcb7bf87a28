use std::time::Duration;

use crate::config::Mode;
use crate::mdp::Trajectory;

/// Information-gain factor of a run: `Δ_H` for the backdoor learner,
/// `(Δ_{1,H}, Δ_{2,H})` for the two-stage learner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Delta {
    Single(f64),
    Split(f64, f64),
}

impl Delta {
    pub fn total(&self) -> f64 {
        match *self {
            Delta::Single(d) => d,
            Delta::Split(a, b) => a + b,
        }
    }
}

/// `Σ_h √(log det Λ_h^end − log det Λ_h^start) / √(d H²)`. Negative
/// increments (rounding only) count as zero.
pub fn delta_factor(increments: impl IntoIterator<Item = f64>, dim: usize, horizon: usize) -> f64 {
    let sum: f64 = increments.into_iter().map(|g| g.max(0.0).sqrt()).sum();
    sum / ((dim * horizon * horizon) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AuditCounts {
    pub checks: u64,
    /// `ι > tol`: the estimate fell below the backup of its own next-step value.
    pub above_zero: u64,
    /// `ι < −2Γ − tol`: the estimate overshot by more than twice its bonus.
    pub below_floor: u64,
}

impl AuditCounts {
    pub fn record(&mut self, iota: f64, bonus: f64, tol: f64) {
        self.checks += 1;
        if iota > tol {
            self.above_zero += 1;
        }
        if iota < -2.0 * bonus - tol {
            self.below_floor += 1;
        }
    }

    pub fn above_zero_rate(&self) -> f64 {
        ratio(self.above_zero, self.checks)
    }

    pub fn below_floor_rate(&self) -> f64 {
        ratio(self.below_floor, self.checks)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Empirical optimism check of the model prediction error
/// `ι = R + P V^k_{h+1} − Q^k_h` over every `(k, h, s, a)`; `half` covers
/// `ι_{h+½} = P_{h+½} V^k_{h+1} − V^k_{h+½}` for the two-stage learner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OptimismAudit {
    pub action: AuditCounts,
    pub half: Option<AuditCounts>,
}

/// Audit tolerance on `ι`.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub k: usize,
    pub initial_state: usize,
    /// `V*_1(s₁) − V^{π^k}_1(s₁)`, exact.
    pub regret: f64,
    pub cum_regret: f64,
    /// Information-gain factor after the episode's data are absorbed.
    pub delta: Delta,
    pub realized_return: f64,
}

#[derive(Clone, Debug)]
pub struct RegretReport {
    pub instance: String,
    pub mode: Mode,
    pub n_offline: usize,
    pub seed: u64,
    pub beta: f64,
    pub beta_scale: f64,
    pub lambda: f64,
    pub zeta: f64,
    pub dim: usize,
    pub horizon: usize,
    pub episodes: Vec<EpisodeRecord>,
    pub delta: Delta,
    pub audit: OptimismAudit,
    /// Online trajectories in episode order.
    pub trajectories: Vec<Trajectory>,
    pub wall_clock: Duration,
}

impl RegretReport {
    pub fn cumulative_regret(&self) -> f64 {
        self.episodes.last().map_or(0.0, |e| e.cum_regret)
    }

    /// Mean per-episode regret over the last `window` episodes.
    pub fn tail_mean_regret(&self, window: usize) -> f64 {
        let n = self.episodes.len().min(window);
        if n == 0 {
            return 0.0;
        }
        self.episodes[self.episodes.len() - n..]
            .iter()
            .map(|e| e.regret)
            .sum::<f64>()
            / n as f64
    }

    /// Largest gap between recorded cumulative regret and a fresh prefix sum.
    pub fn prefix_sum_error(&self) -> f64 {
        let mut acc = 0.0;
        self.episodes
            .iter()
            .map(|e| {
                acc += e.regret;
                (acc - e.cum_regret).abs()
            })
            .fold(0.0, f64::max)
    }
}
