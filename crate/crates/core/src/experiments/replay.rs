//! Information gain under a fixed online feature stream.
//!
//! A live run changes its trajectories when the observational sample size
//! changes, so its `Δ` is not comparable across sizes. Replaying one
//! recorded online stream on top of different observational prefixes is:
//! adding the same rank-one terms to a larger starting matrix can only
//! raise the log-determinant by less.

use rand::Rng;

use crate::error::Result;
use crate::features::FeatureMap;
use crate::mdp::{ConfoundedMdp, Policy, Step, Trajectory};
use crate::report::{delta_factor, Delta};
use crate::ridge::{Provenance, RidgeState};
use crate::rng::{sample_index, seeded};

use super::data::OfflineDataset;

/// `Δ` obtained by loading `offline` into fresh Gram matrices and then
/// absorbing the online steps of `online`.
pub fn replay_delta(
    mdp: &ConfoundedMdp,
    features: &FeatureMap,
    offline: &[Trajectory],
    online: &[Trajectory],
    lambda: f64,
) -> Result<Delta> {
    let hh = mdp.horizon();
    match features {
        FeatureMap::Backdoor(f) => {
            let mut grams = fresh(hh, f.dim, lambda)?;
            for_each_step(offline, |h, st| {
                let u = st.u.unwrap_or(0);
                grams[h].add(f.phi(h, st.s, st.a, u), (), Provenance::Offline)
            })?;
            let start: Vec<f64> = grams.iter().map(RidgeState::logdet).collect();
            for_each_step(online, |h, st| grams[h].add(f.psi(h, st.s, st.a), (), Provenance::Online))?;
            Ok(Delta::Single(gain(&grams, &start, f.dim, hh)))
        }
        FeatureMap::Frontdoor(f) => {
            let mut stage1 = fresh(hh, f.dim_mediator, lambda)?;
            let mut stage2 = fresh(hh, f.dim_action, lambda)?;
            for_each_step(offline, |h, st| {
                let m = st.m.unwrap_or(0);
                stage1[h].add(f.phi(h, st.s, st.a, m), (), Provenance::Offline)?;
                stage2[h].add(f.gamma(h, st.s, st.a), (), Provenance::Offline)
            })?;
            let start1: Vec<f64> = stage1.iter().map(RidgeState::logdet).collect();
            let start2: Vec<f64> = stage2.iter().map(RidgeState::logdet).collect();
            for_each_step(online, |h, st| {
                let m = st.m.unwrap_or(0);
                stage1[h].add(f.psi(h, st.s, m), (), Provenance::Online)?;
                stage2[h].add(f.gamma(h, st.s, st.a), (), Provenance::Online)
            })?;
            let d = f.dim();
            Ok(Delta::Split(
                gain(&stage1, &start1, d, hh),
                gain(&stage2, &start2, d, hh),
            ))
        }
    }
}

fn fresh(horizon: usize, dim: usize, lambda: f64) -> Result<Vec<RidgeState<()>>> {
    (0..horizon).map(|_| RidgeState::new(dim, lambda)).collect()
}

fn for_each_step(trajs: &[Trajectory], mut f: impl FnMut(usize, &Step) -> Result<()>) -> Result<()> {
    for t in trajs {
        for (h, st) in t.steps.iter().enumerate() {
            f(h, st)?;
        }
    }
    Ok(())
}

fn gain(grams: &[RidgeState<()>], start: &[f64], dim: usize, horizon: usize) -> f64 {
    delta_factor(
        grams.iter().zip(start).map(|(g, s0)| g.logdet() - s0),
        dim,
        horizon,
    )
}

/// Plays `policy` online for `episodes` episodes, drawing initial states
/// from the instance and actions from the policy.
pub fn rollout_policy<R: Rng + ?Sized>(
    mdp: &ConfoundedMdp,
    policy: &Policy,
    episodes: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    policy.check_shape(mdp.horizon(), mdp.n_states(), mdp.n_actions())?;
    let na = mdp.n_actions();
    (1..=episodes)
        .map(|k| {
            let mut s = mdp.sample_initial_state(rng);
            let mut steps = Vec::with_capacity(mdp.horizon());
            for h in 0..mdp.horizon() {
                let support = policy.action_probs(h, s, na);
                let probs: Vec<f64> = support.iter().map(|&(_, p)| p).collect();
                let a = support[sample_index(rng, &probs)].0;
                let out = mdp.sample_online_step(h, s, a, rng)?;
                steps.push(Step {
                    s,
                    a,
                    u: None,
                    m: out.intermediate,
                    r: out.reward,
                    s_next: out.next_state,
                });
                s = out.next_state;
            }
            Ok(Trajectory { episode: k, steps })
        })
        .collect()
}

/// `Δ` after `n` behavior episodes and `episodes` uniformly random online
/// episodes, both drawn from `seed`.
pub fn uniform_exploration_delta(
    mdp: &ConfoundedMdp,
    n: usize,
    episodes: usize,
    seed: u64,
    lambda: f64,
) -> Result<Delta> {
    let features = FeatureMap::build(mdp)?;
    let offline = OfflineDataset::generate(mdp, n, mdp.mode(), seed)?;
    let policy = Policy::uniform(mdp.horizon(), mdp.n_states(), mdp.n_actions());
    let online = rollout_policy(mdp, &policy, episodes, &mut seeded(seed))?;
    replay_delta(mdp, &features, &offline.episodes, &online, lambda)
}

/// Closed-form `Δ` when both data sources spread evenly over the `d`
/// standard basis vectors: `√(d·log(1 + K/(n + d)))·H / √(dH²)` at `λ = 1`.
pub fn canonical_delta(dim: usize, horizon: usize, episodes: usize, n: usize) -> f64 {
    let d = dim as f64;
    let per_step = (d * (1.0 + episodes as f64 / (n as f64 + d)).ln()).sqrt();
    per_step * horizon as f64 / (d * (horizon * horizon) as f64).sqrt()
}
