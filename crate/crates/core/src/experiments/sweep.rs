//! Grid runs over modes, observational sizes and seeds.
//!
//! Output files, all comma-separated with a header row:
//!
//! * `results.csv`: one row per episode per cell; columns `instance, mode,
//!   n, seed, k, regret_k, cum_regret`, then `delta_h` (backdoor) or
//!   `delta1, delta2` (frontdoor), then `beta`.
//! * `summary.csv`: per `(mode, n)` means and 95% half-widths over seeds.
//! * `replay.csv`: `Δ` of one reference online stream per seed, replayed
//!   over every observational size in the grid.
//! * `failures.csv`: cells that returned an error.
//! * `manifest.json`: the sweep spec, generator name and crate version.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AlgoConfig, Mode};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{AdjustmentMode, ConfoundedMdp};
use crate::report::{Delta, RegretReport};
use crate::rng::PRNG_NAME;

use super::data::OfflineDataset;
use super::replay::replay_delta;
use super::stats::MeanCi;
use super::{gallery, mode_supported, run_cell};

/// Episodes averaged for the tail-regret column of the summary.
pub const TAIL_WINDOW: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSpec {
    pub instance: String,
    pub modes: Vec<Mode>,
    pub ns: Vec<usize>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Template for every cell; `mode`, `seed` and `episodes` are overridden.
    pub algo: AlgoConfig,
    pub workers: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("mode list is empty".into()));
        }
        if self.ns.is_empty() {
            return Err(Error::Config("observational size list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("worker count must be positive".into()));
        }
        self.algo.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellId {
    pub mode: Mode,
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct CellFailure {
    pub cell: CellId,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayRow {
    pub seed: u64,
    pub n: usize,
    pub delta: Delta,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub spec: SweepSpec,
    pub variant: AdjustmentMode,
    /// Successful cells sorted by `(mode, n, seed)`.
    pub cells: Vec<(CellId, RegretReport)>,
    pub failures: Vec<CellFailure>,
    /// Sorted by `(seed, n)`.
    pub replay: Vec<ReplayRow>,
}

/// Runs every `(mode, n, seed)` cell on up to `spec.workers` threads. A
/// failing cell is recorded and the rest still run; only invalid specs and
/// unknown instances are errors.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let mdp = gallery(&spec.instance)?;
    for &mode in &spec.modes {
        if !mode_supported(mode, mdp.mode()) {
            return Err(Error::Config(format!(
                "mode {mode} is not available on {} instance {}",
                mdp.mode(),
                spec.instance
            )));
        }
    }
    let mut ns = spec.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut ids = Vec::new();
    for &mode in &spec.modes {
        for &n in &ns {
            for &seed in &spec.seeds {
                ids.push(CellId { mode, n, seed });
            }
        }
    }
    ids.sort();
    ids.dedup();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<(CellId, Result<RegretReport>)> = pool.install(|| {
        ids.par_iter()
            .map(|id| (id.clone(), run_one(&mdp, spec, id)))
            .collect()
    });
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (id, res) in results {
        match res {
            Ok(report) => cells.push((id, report)),
            Err(e) => failures.push(CellFailure {
                cell: id,
                message: e.to_string(),
            }),
        }
    }
    let replay = pool.install(|| replay_rows(&mdp, spec, &ns, &cells))?;
    Ok(SweepOutcome {
        spec: spec.clone(),
        variant: mdp.mode(),
        cells,
        failures,
        replay,
    })
}

fn run_one(mdp: &ConfoundedMdp, spec: &SweepSpec, id: &CellId) -> Result<RegretReport> {
    let data = OfflineDataset::generate(mdp, id.n, mdp.mode(), id.seed)?;
    let cfg = AlgoConfig {
        seed: id.seed,
        episodes: spec.episodes,
        ..spec.algo.clone()
    };
    run_cell(mdp, id.mode, &data.episodes, &cfg)
}

/// The reference stream of a seed is its run of the first learner mode in
/// the spec (or the first mode if there is none) at the smallest size.
fn replay_rows(
    mdp: &ConfoundedMdp,
    spec: &SweepSpec,
    ns: &[usize],
    cells: &[(CellId, RegretReport)],
) -> Result<Vec<ReplayRow>> {
    let reference_mode = spec
        .modes
        .iter()
        .copied()
        .find(|m| matches!(m, Mode::Dovi | Mode::DoviPlus))
        .unwrap_or(spec.modes[0]);
    let features = FeatureMap::build(mdp)?;
    let max_n = ns.last().copied().unwrap_or(0);
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();
    let rows: Vec<Result<Vec<ReplayRow>>> = seeds
        .par_iter()
        .map(|&seed| {
            let Some((_, reference)) = cells
                .iter()
                .find(|(id, _)| id.mode == reference_mode && id.n == ns[0] && id.seed == seed)
            else {
                return Ok(Vec::new());
            };
            let data = OfflineDataset::generate(mdp, max_n, mdp.mode(), seed)?;
            ns.iter()
                .map(|&n| {
                    let delta = replay_delta(
                        mdp,
                        &features,
                        &data.episodes[..n],
                        &reference.trajectories,
                        spec.algo.lambda,
                    )?;
                    Ok(ReplayRow { seed, n, delta })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

fn delta_header(variant: AdjustmentMode) -> &'static [&'static str] {
    match variant {
        AdjustmentMode::Backdoor => &["delta_h"],
        AdjustmentMode::Frontdoor => &["delta1", "delta2"],
    }
}

fn delta_fields(delta: Delta) -> Vec<String> {
    match delta {
        Delta::Single(d) => vec![d.to_string()],
        Delta::Split(a, b) => vec![a.to_string(), b.to_string()],
    }
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Shape(format!("csv assembly: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Shape(format!("csv assembly: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl SweepOutcome {
    pub fn results_csv(&self) -> Result<String> {
        let mut header = vec!["instance", "mode", "n", "seed", "k", "regret_k", "cum_regret"];
        header.extend_from_slice(delta_header(self.variant));
        header.push("beta");
        let rows = self.cells.iter().flat_map(|(id, rep)| {
            rep.episodes.iter().map(move |e| {
                let mut row = vec![
                    self.spec.instance.clone(),
                    id.mode.to_string(),
                    id.n.to_string(),
                    id.seed.to_string(),
                    e.k.to_string(),
                    e.regret.to_string(),
                    e.cum_regret.to_string(),
                ];
                row.extend(delta_fields(e.delta));
                row.push(rep.beta.to_string());
                row
            })
        });
        write_csv(&header, rows)
    }

    /// Per-`(mode, n)` aggregates, sorted by mode then size.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: BTreeMap<(Mode, usize), Vec<&RegretReport>> = BTreeMap::new();
        for (id, rep) in &self.cells {
            groups.entry((id.mode, id.n)).or_default().push(rep);
        }
        groups
            .into_iter()
            .map(|((mode, n), reps)| {
                let pick = |f: &dyn Fn(&RegretReport) -> f64| -> MeanCi {
                    MeanCi::of(&reps.iter().map(|r| f(r)).collect::<Vec<_>>())
                };
                SummaryRow {
                    mode,
                    n,
                    seeds: reps.len(),
                    beta: reps[0].beta,
                    cum_regret: pick(&|r| r.cumulative_regret()),
                    tail_regret: pick(&|r| r.tail_mean_regret(TAIL_WINDOW)),
                    delta: pick(&|r| r.delta.total()),
                    above_zero_rate: pick(&|r| r.audit.action.above_zero_rate()).mean,
                    below_floor_rate: pick(&|r| r.audit.action.below_floor_rate()).mean,
                }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> Result<String> {
        let header = [
            "instance",
            "mode",
            "n",
            "seeds",
            "episodes",
            "beta",
            "mean_cum_regret",
            "ci95_cum_regret",
            "mean_tail_regret",
            "ci95_tail_regret",
            "mean_delta",
            "ci95_delta",
            "above_zero_rate",
            "below_floor_rate",
        ];
        let rows = self.summary().into_iter().map(|s| {
            vec![
                self.spec.instance.clone(),
                s.mode.to_string(),
                s.n.to_string(),
                s.seeds.to_string(),
                self.spec.episodes.to_string(),
                s.beta.to_string(),
                s.cum_regret.mean.to_string(),
                s.cum_regret.half_width.to_string(),
                s.tail_regret.mean.to_string(),
                s.tail_regret.half_width.to_string(),
                s.delta.mean.to_string(),
                s.delta.half_width.to_string(),
                s.above_zero_rate.to_string(),
                s.below_floor_rate.to_string(),
            ]
        });
        write_csv(&header, rows)
    }

    pub fn replay_csv(&self) -> Result<String> {
        let mut header = vec!["instance", "seed", "n"];
        header.extend_from_slice(delta_header(self.variant));
        let rows = self.replay.iter().map(|r| {
            let mut row = vec![self.spec.instance.clone(), r.seed.to_string(), r.n.to_string()];
            row.extend(delta_fields(r.delta));
            row
        });
        write_csv(&header, rows)
    }

    pub fn failures_csv(&self) -> Result<String> {
        let rows = self.failures.iter().map(|f| {
            vec![
                f.cell.mode.to_string(),
                f.cell.n.to_string(),
                f.cell.seed.to_string(),
                f.message.clone(),
            ]
        });
        write_csv(&["mode", "n", "seed", "error"], rows)
    }

    pub fn manifest_json(&self) -> String {
        let manifest = serde_json::json!({
            "spec": self.spec,
            "variant": self.variant,
            "prng": PRNG_NAME,
            "version": env!("CARGO_PKG_VERSION"),
        });
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"
    }

    /// Writes all output files into `dir`, creating it if needed, and
    /// returns their paths.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("results.csv", self.results_csv()?),
            ("summary.csv", self.summary_csv()?),
            ("replay.csv", self.replay_csv()?),
            ("failures.csv", self.failures_csv()?),
            ("manifest.json", self.manifest_json()),
        ];
        let mut paths = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub mode: Mode,
    pub n: usize,
    pub seeds: usize,
    pub beta: f64,
    pub cum_regret: MeanCi,
    pub tail_regret: MeanCi,
    pub delta: MeanCi,
    pub above_zero_rate: f64,
    pub below_floor_rate: f64,
}
