mod common;

use common::close;
use dovi::dovi::{run_baseline, run_dovi, Dovi};
use dovi::experiments::goldens::goldens;
use dovi::experiments::stats::MeanCi;
use dovi::experiments::{gallery, OfflineDataset};
use dovi::features::build_backdoor_features;
use dovi::mdp::{ConfoundedMdp, Shape};
use dovi::report::Delta;
use dovi::rng::seeded;
use dovi::{AlgoConfig, Error, Mode, RegretReport, ValueCap};
use rayon::prelude::*;

fn cfg(episodes: usize, seed: u64, mode: Mode) -> AlgoConfig {
    AlgoConfig {
        episodes,
        seed,
        mode,
        ..AlgoConfig::default()
    }
}

fn offline(mdp: &ConfoundedMdp, n: usize, seed: u64) -> Vec<dovi::Trajectory> {
    OfflineDataset::generate(mdp, n, mdp.mode(), seed).unwrap().episodes
}

/// β recomputed from its defining formula.
fn beta_oracle(c: f64, d: usize, h: usize, k: usize, n: usize, zeta: f64) -> f64 {
    let arg = (d as f64 * (h * k + n * h) as f64 / zeta).max(std::f64::consts::E);
    c * d as f64 * h as f64 * arg.ln().sqrt()
}

fn same_run(a: &RegretReport, b: &RegretReport) -> bool {
    a.episodes == b.episodes
        && a.trajectories == b.trajectories
        && a.audit == b.audit
        && a.delta == b.delta
        && a.beta.to_bits() == b.beta.to_bits()
}

#[test]
fn first_episode_without_data_is_pure_bonus() {
    let mdp = gallery("BD-2").unwrap();
    let fm = build_backdoor_features(&mdp).unwrap();
    let c = cfg(50, 0, Mode::Dovi);
    let learner = Dovi::new(&mdp, &fm, &[], &c).unwrap();
    let beta = beta_oracle(c.beta_scale, 8, 2, 50, 0, c.zeta);
    assert!(close(learner.beta(), beta, 1e-12));
    let it = learner.fit_episode(1);
    assert!(it.omega.iter().flatten().all(|&w| w == 0.0));
    for h in 0..2 {
        for s in 0..2 {
            for a in 0..2 {
                let psi = fm.psi(h, s, a);
                let sq: f64 = psi.iter().map(|x| x * x).sum();
                let gamma = beta * (sq / c.lambda).ln_1p().sqrt();
                let q = gamma.min((2 - h) as f64);
                assert!(close(it.q[h][s * 2 + a], q, 1e-12));
                assert!(close(it.bonus[h][s * 2 + a], gamma, 1e-12));
            }
        }
    }
}

#[test]
fn verbatim_cap_truncates_one_lower() {
    let mdp = gallery("BD-2").unwrap();
    let fm = build_backdoor_features(&mdp).unwrap();
    let c = AlgoConfig {
        value_cap: ValueCap::Verbatim,
        beta_scale: 10.0,
        ..cfg(10, 0, Mode::Dovi)
    };
    let it = Dovi::new(&mdp, &fm, &[], &c).unwrap().fit_episode(1);
    assert!(it.q[0].iter().all(|&q| q == 1.0));
    assert!(it.q[1].iter().all(|&q| q == 0.0));
}

#[test]
fn offline_data_give_an_accurate_first_fit() {
    let tol = goldens().bd2_offline_fit_tol;
    let mdp = gallery("BD-2").unwrap();
    let fm = build_backdoor_features(&mdp).unwrap();
    let opt = mdp.optimal_values();
    let data = offline(&mdp, 10_000, 0);
    let c = cfg(500, 0, Mode::Dovi);
    let it = Dovi::new(&mdp, &fm, &data, &c).unwrap().fit_episode(1);
    for s in 0..2 {
        for a in 0..2 {
            let est: f64 = fm.psi(0, s, a).iter().zip(&it.omega[0]).map(|(x, w)| x * w).sum();
            assert!((est - opt.q[0][s * 2 + a]).abs() <= tol, "s={s} a={a}: {est}");
        }
    }
}

#[test]
fn zero_rewards_leave_only_the_bonus_at_the_last_step() {
    let mdp = ConfoundedMdp::backdoor(
        "zero",
        Shape {
            horizon: 2,
            n_states: 2,
            n_actions: 2,
            n_confounders: 1,
        },
        vec![0],
        vec![0.5, 0.5],
        vec![1.0; 4],
        vec![0.5; 8],
        vec![0.5; 16],
        vec![0.0; 8],
    )
    .unwrap();
    let fm = build_backdoor_features(&mdp).unwrap();
    let c = cfg(30, 2, Mode::Dovi);
    let data = offline(&mdp, 50, 1);
    let mut learner = Dovi::new(&mdp, &fm, &data, &c).unwrap();
    let mut rng = seeded(4);
    for k in 1..=30 {
        let it = learner.fit_episode(k);
        for sa in 0..4 {
            assert!(it.omega[1].iter().all(|&w| w == 0.0));
            assert_eq!(it.q[1][sa], it.bonus[1][sa].min(1.0));
        }
        for s in 0..2 {
            let row = &it.q[0][s * 2..s * 2 + 2];
            let expected = if row[1] > row[0] { 1 } else { 0 };
            assert_eq!(it.actions[0][s], expected);
        }
        learner.rollout(&it, k % 2, &mut rng).unwrap();
    }
}

#[test]
fn iterates_respect_truncation_greed_and_bonus_monotonicity() {
    for (name, n) in [("BD-2", 0), ("BD-2", 200), ("CH-2", 0), ("TRAP-2-H2", 50)] {
        let mdp = gallery(name).unwrap();
        let fm = build_backdoor_features(&mdp).unwrap();
        let data = offline(&mdp, n, 9);
        let c = cfg(150, 3, Mode::Dovi);
        let mut learner = Dovi::new(&mdp, &fm, &data, &c).unwrap();
        let mut rng = seeded(3);
        let (hh, ns, na) = (mdp.horizon(), mdp.n_states(), mdp.n_actions());
        let mut prev_bonus: Option<Vec<Vec<f64>>> = None;
        for k in 1..=150 {
            let it = learner.fit_episode(k);
            for h in 0..hh {
                for s in 0..ns {
                    let row = &it.q[h][s * na..(s + 1) * na];
                    assert!(row.iter().all(|&q| (0.0..=(hh - h) as f64).contains(&q)));
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let first = row.iter().position(|&q| q == max).unwrap();
                    assert_eq!(it.actions[h][s], first, "{name}");
                    assert_eq!(it.v[h][s], row[first]);
                }
            }
            assert!(it.v[hh].iter().all(|&v| v == 0.0));
            if let Some(prev) = &prev_bonus {
                for (a, b) in it.bonus.iter().flatten().zip(prev.iter().flatten()) {
                    assert!(*a <= b + 1e-12, "{name}: bonus grew {b} -> {a}");
                }
            }
            prev_bonus = Some(it.bonus.clone());
            let t = learner.rollout(&it, mdp.sample_initial_state(&mut rng), &mut rng).unwrap();
            let total: f64 = t.steps.iter().map(|s| s.r).sum();
            assert!((0.0..=hh as f64).contains(&total));
        }
        let pooled = learner.ridge(0).online_pool().len() + learner.ridge(0).offline_pool().len();
        assert_eq!(pooled, 150 + n as u64);
    }
}

#[test]
fn regret_terms_are_exact_and_nonnegative() {
    let mdp = gallery("BD-2").unwrap();
    let report = run_dovi(&mdp, &offline(&mdp, 100, 1), &cfg(200, 1, Mode::Dovi)).unwrap();
    assert_eq!(report.episodes.len(), 200);
    assert!(report.episodes.iter().all(|e| e.regret >= -1e-10));
    assert!(report.prefix_sum_error() <= 1e-9);
    assert_eq!(report.n_offline, 100);
    assert!(close(report.beta, beta_oracle(0.05, 8, 2, 200, 100, 0.1), 1e-12));
    assert_eq!(report.audit.action.checks, 200 * 2 * 4);
    assert!(report.audit.half.is_none());
    let mut prev = 0.0;
    for e in &report.episodes {
        let Delta::Single(d) = e.delta else { panic!("backdoor delta must be single") };
        assert!(d >= prev - 1e-12);
        prev = d;
    }
}

#[test]
fn zero_episodes_give_zero_delta() {
    let mdp = gallery("BD-2").unwrap();
    let report = run_dovi(&mdp, &offline(&mdp, 40, 0), &cfg(0, 0, Mode::Dovi)).unwrap();
    assert!(report.episodes.is_empty());
    assert_eq!(report.delta, Delta::Single(0.0));
    assert_eq!(report.cumulative_regret(), 0.0);
}

#[test]
fn online_only_is_dovi_without_data() {
    let mdp = gallery("BD-2").unwrap();
    let data = offline(&mdp, 300, 5);
    for seed in [0, 7] {
        let a = run_baseline(&mdp, &data, &cfg(120, seed, Mode::OnlineOnly)).unwrap();
        let b = run_dovi(&mdp, &[], &cfg(120, seed, Mode::Dovi)).unwrap();
        assert!(same_run(&a, &b));
        assert_eq!(a.n_offline, 0);
    }
}

#[test]
fn runs_are_deterministic() {
    let mdp = gallery("CH-2").unwrap();
    let data = offline(&mdp, 200, 2);
    for mode in [Mode::Dovi, Mode::NaiveConfounded] {
        let c = cfg(100, 11, mode);
        let run = |c: &AlgoConfig| match mode {
            Mode::Dovi => run_dovi(&mdp, &data, c).unwrap(),
            _ => run_baseline(&mdp, &data, c).unwrap(),
        };
        assert!(same_run(&run(&c), &run(&c)));
        let other = run(&AlgoConfig { seed: 12, ..c.clone() });
        assert!(!same_run(&run(&c), &other));
    }
}

#[test]
fn mode_checks() {
    let bd = gallery("BD-2").unwrap();
    let fd = gallery("FD-2").unwrap();
    assert!(matches!(run_dovi(&fd, &[], &cfg(5, 0, Mode::Dovi)), Err(Error::ModeMismatch { .. })));
    assert!(run_dovi(&bd, &[], &cfg(5, 0, Mode::OnlineOnly)).is_err());
    assert!(run_baseline(&bd, &[], &cfg(5, 0, Mode::Dovi)).is_err());
    assert!(run_baseline(&bd, &[], &cfg(5, 0, Mode::DoviPlus)).is_err());
    let bad = AlgoConfig {
        zeta: 1.5,
        ..cfg(5, 0, Mode::Dovi)
    };
    assert!(matches!(run_dovi(&bd, &[], &bad), Err(Error::Config(_))));
    let fm = build_backdoor_features(&bd).unwrap();
    let fd_data = offline(&fd, 3, 0);
    assert!(Dovi::new(&bd, &fm, &fd_data, &cfg(5, 0, Mode::Dovi)).is_err());
}

#[test]
fn trap_rollouts_have_bounded_rewards() {
    let mdp = gallery("TRAP-2").unwrap();
    let report = run_dovi(&mdp, &offline(&mdp, 20, 0), &cfg(100, 0, Mode::Dovi)).unwrap();
    for t in &report.trajectories {
        assert_eq!(t.steps.len(), 1);
        assert!(t.steps[0].r == 0.0 || t.steps[0].r == 1.0);
    }
    assert!(report.episodes.iter().all(|e| (0.0..=1.0).contains(&e.realized_return)));
}

#[test]
fn naive_matches_dovi_without_confounding() {
    let mdp = gallery("BD-NOCONF").unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    let cum = |mode: Mode| -> Vec<f64> {
        seeds
            .par_iter()
            .map(|&seed| {
                let data = offline(&mdp, 2_000, seed);
                let c = cfg(200, seed, mode);
                let r = if mode == Mode::Dovi {
                    run_dovi(&mdp, &data, &c)
                } else {
                    run_baseline(&mdp, &data, &c)
                };
                r.unwrap().cumulative_regret()
            })
            .collect()
    };
    let dovi = MeanCi::of(&cum(Mode::Dovi));
    let naive = MeanCi::of(&cum(Mode::NaiveConfounded));
    assert!(dovi.overlaps(&naive), "{dovi:?} vs {naive:?}");
}

#[test]
fn initial_schedule_is_cycled() {
    let mdp = gallery("BD-2").unwrap();
    let c = AlgoConfig {
        initial_schedule: Some(vec![1, 0, 0]),
        ..cfg(7, 0, Mode::Dovi)
    };
    let r = run_dovi(&mdp, &[], &c).unwrap();
    let starts: Vec<usize> = r.episodes.iter().map(|e| e.initial_state).collect();
    assert_eq!(starts, vec![1, 0, 0, 1, 0, 0, 1]);
    let bad = AlgoConfig {
        initial_schedule: Some(vec![2]),
        ..c
    };
    assert!(matches!(run_dovi(&mdp, &[], &bad), Err(Error::IndexOutOfRange { .. })));
}
