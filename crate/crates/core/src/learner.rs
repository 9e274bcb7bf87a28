//! Episode loop shared by the backdoor and frontdoor learners.

use std::time::Instant;

use crate::config::{AlgoConfig, Mode};
use crate::error::{check_index, Result};
use crate::mdp::{ConfoundedMdp, Policy, Trajectory};
use crate::report::{Delta, EpisodeRecord, OptimismAudit, RegretReport};
use crate::rng::{seeded, SimRng};

pub(crate) trait EpisodicLearner {
    type Iterate;

    fn fit_episode(&self, k: usize) -> Self::Iterate;
    fn policy(&self, it: &Self::Iterate) -> Policy;
    fn audit(&self, it: &Self::Iterate, audit: &mut OptimismAudit);
    fn rollout(&mut self, it: &Self::Iterate, s1: usize, rng: &mut SimRng) -> Result<Trajectory>;
    fn delta(&self) -> Delta;
    fn beta(&self) -> f64;
    fn dim(&self) -> usize;
    fn n_offline(&self) -> usize;
}

pub(crate) fn drive<L: EpisodicLearner>(
    mdp: &ConfoundedMdp,
    learner: &mut L,
    cfg: &AlgoConfig,
    mode: Mode,
) -> Result<RegretReport> {
    let started = Instant::now();
    let optimal = mdp.optimal_values();
    let mut rng = seeded(cfg.seed);
    let mut audit = OptimismAudit::default();
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut trajectories = Vec::with_capacity(cfg.episodes);
    let mut cum = 0.0;
    for k in 1..=cfg.episodes {
        let it = learner.fit_episode(k);
        if cfg.audit {
            learner.audit(&it, &mut audit);
        }
        let s1 = match cfg.initial_state(k) {
            Some(s) => {
                check_index("initial state", s, mdp.n_states())?;
                s
            }
            None => mdp.sample_initial_state(&mut rng),
        };
        let policy = learner.policy(&it);
        let mut traj = learner.rollout(&it, s1, &mut rng)?;
        traj.episode = k;
        let value = mdp.evaluate_policy(&policy)?;
        let regret = optimal.v[0][s1] - value[0][s1];
        cum += regret;
        episodes.push(EpisodeRecord {
            k,
            initial_state: s1,
            regret,
            cum_regret: cum,
            delta: learner.delta(),
            realized_return: traj.steps.iter().map(|st| st.r).sum(),
        });
        trajectories.push(traj);
    }
    Ok(RegretReport {
        instance: mdp.name().to_string(),
        mode,
        n_offline: learner.n_offline(),
        seed: cfg.seed,
        beta: learner.beta(),
        beta_scale: cfg.beta_scale,
        lambda: cfg.lambda,
        zeta: cfg.zeta,
        dim: learner.dim(),
        horizon: mdp.horizon(),
        episodes,
        delta: learner.delta(),
        audit,
        trajectories,
        wall_clock: started.elapsed(),
    })
}

/// Exact `E[r|s,do(a)]` and `P(·|s,do(a))` tables, `[h][s·A + a]`.
#[derive(Clone, Debug)]
pub(crate) struct Backups {
    pub reward: Vec<Vec<f64>>,
    pub next: Vec<Vec<Vec<f64>>>,
}

impl Backups {
    pub fn new(mdp: &ConfoundedMdp) -> Self {
        let (hh, ns, na) = (mdp.horizon(), mdp.n_states(), mdp.n_actions());
        let mut reward = vec![vec![0.0; ns * na]; hh];
        let mut next = vec![Vec::with_capacity(ns * na); hh];
        for h in 0..hh {
            for s in 0..ns {
                for a in 0..na {
                    let (r, p) = mdp.backup_parts(h, s, a);
                    reward[h][s * na + a] = r;
                    next[h].push(p);
                }
            }
        }
        Self { reward, next }
    }
}
