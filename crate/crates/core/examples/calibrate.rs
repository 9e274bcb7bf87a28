//! Calibration runs behind `goldens.toml`.
//!
//! Prints, for a grid of exploration multipliers, the optimism-audit rates on
//! BD-2 and FD-2; then, at the chosen multiplier, the regret-growth slope,
//! the effect of observational data, the trap gap and the first-episode fit
//! errors. Pass a multiplier as the first argument to skip the grid.

use dovi::experiments::stats::{loglog_slope, MeanCi};
use dovi::experiments::{gallery, run_cell, OfflineDataset};
use dovi::dovi::Dovi;
use dovi::dovi_plus::DoviPlus;
use dovi::features::{build_backdoor_features, build_frontdoor_features};
use dovi::{AlgoConfig, Mode};
use rayon::prelude::*;

const SEEDS: std::ops::Range<u64> = 0..20;

fn reports(instance: &str, mode: Mode, n: usize, episodes: usize, c: f64) -> Vec<dovi::RegretReport> {
    let mdp = gallery(instance).unwrap();
    SEEDS
        .into_par_iter()
        .map(|seed| {
            let data = OfflineDataset::generate(&mdp, n, mdp.mode(), seed).unwrap();
            let cfg = AlgoConfig {
                beta_scale: c,
                episodes,
                seed,
                ..AlgoConfig::default()
            };
            run_cell(&mdp, mode, &data.episodes, &cfg).unwrap()
        })
        .collect()
}

fn audit_line(instance: &str, mode: Mode, c: f64) {
    let reps = reports(instance, mode, 0, 500, c);
    let worst = |f: &dyn Fn(&dovi::RegretReport) -> f64| reps.iter().map(f).fold(0.0, f64::max);
    let above = worst(&|r| r.audit.action.above_zero_rate());
    let below = worst(&|r| r.audit.action.below_floor_rate());
    let half = worst(&|r| r.audit.half.map_or(0.0, |h| h.above_zero_rate().max(h.below_floor_rate())));
    let cum = MeanCi::of(&reps.iter().map(|r| r.cumulative_regret()).collect::<Vec<_>>());
    println!(
        "{instance:10} c={c:<6} above={above:.4} below={below:.4} half={half:.4} cum={:.2}±{:.2}",
        cum.mean, cum.half_width
    );
}

fn main() {
    let chosen: Option<f64> = std::env::args().nth(1).map(|s| s.parse().unwrap());
    if chosen.is_none() {
        for c in [0.01, 0.02, 0.03, 0.04, 0.05, 0.1, 0.2, 0.5] {
            audit_line("BD-2", Mode::Dovi, c);
            audit_line("FD-2", Mode::DoviPlus, c);
        }
        return;
    }
    let c = chosen.unwrap();
    audit_line("BD-2", Mode::Dovi, c);
    audit_line("FD-2", Mode::DoviPlus, c);

    let ks = [125usize, 250, 500, 1000];
    let means: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let reps = reports("BD-2", Mode::Dovi, 0, k, c);
            MeanCi::of(&reps.iter().map(|r| r.cumulative_regret()).collect::<Vec<_>>()).mean
        })
        .collect();
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    println!("BD-2 cum regret by K {means:?} slope {:.3}", loglog_slope(&xs, &means).unwrap());

    for (inst, mode) in [("BD-2", Mode::Dovi), ("FD-2", Mode::DoviPlus)] {
        for n in [0usize, 10_000] {
            let reps = reports(inst, mode, n, 500, c);
            let cum = MeanCi::of(&reps.iter().map(|r| r.cumulative_regret()).collect::<Vec<_>>());
            println!("{inst} n={n} cum={:.3}±{:.3}", cum.mean, cum.half_width);
        }
    }

    for mode in [Mode::NaiveConfounded, Mode::Dovi] {
        let reps = reports("TRAP-2-H2", mode, 100_000, 500, c);
        let tail = MeanCi::of(&reps.iter().map(|r| r.tail_mean_regret(100)).collect::<Vec<_>>());
        let min = reps.iter().map(|r| r.tail_mean_regret(100)).fold(f64::INFINITY, f64::min);
        let max = reps.iter().map(|r| r.tail_mean_regret(100)).fold(0.0, f64::max);
        println!("TRAP-2-H2 {mode} tail={:.4}±{:.4} min={min:.4} max={max:.4}", tail.mean, tail.half_width);
    }

    fit_errors(c);
}

/// First-episode point estimates against the exact optimal values.
fn fit_errors(c: f64) {
    let cfg = AlgoConfig {
        beta_scale: c,
        episodes: 500,
        ..AlgoConfig::default()
    };
    let mdp = gallery("BD-2").unwrap();
    let fm = build_backdoor_features(&mdp).unwrap();
    let opt = mdp.optimal_values();
    let mut worst = 0.0f64;
    for seed in SEEDS {
        let data = OfflineDataset::generate(&mdp, 10_000, mdp.mode(), seed).unwrap();
        let learner = Dovi::new(&mdp, &fm, &data.episodes, &cfg).unwrap();
        let it = learner.fit_episode(1);
        for s in 0..2 {
            for a in 0..2 {
                let est: f64 = fm.psi(0, s, a).iter().zip(&it.omega[0]).map(|(x, w)| x * w).sum();
                worst = worst.max((est - opt.q[0][s * 2 + a]).abs());
            }
        }
    }
    println!("BD-2 first-episode |psi.omega - Q*| max over seeds {worst:.4}");

    let cfg = AlgoConfig { mode: Mode::DoviPlus, ..cfg };
    let mdp = gallery("FD-2").unwrap();
    let fm = build_frontdoor_features(&mdp).unwrap();
    let opt = mdp.optimal_values();
    let half = opt.v_half.unwrap();
    let mut worst = 0.0f64;
    for seed in SEEDS {
        let data = OfflineDataset::generate(&mdp, 10_000, mdp.mode(), seed).unwrap();
        let learner = DoviPlus::new(&mdp, &fm, &data.episodes, &cfg).unwrap();
        let it = learner.fit_episode(1);
        for s in 0..2 {
            for m in 0..2 {
                let est: f64 = fm.psi(0, s, m).iter().zip(&it.omega_mediator[0]).map(|(x, w)| x * w).sum();
                worst = worst.max((est - half[0][s * 2 + m]).abs());
            }
        }
    }
    println!("FD-2 first-episode stage-1 |psi.omega1 - V*_half| max over seeds {worst:.4}");
}
