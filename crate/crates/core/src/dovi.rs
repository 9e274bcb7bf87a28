//! Deconfounded optimistic value iteration (backdoor variant).
//!
//! Each episode fits, backward over steps, a ridge regression of
//! `r + V^k_{h+1}(s')` on the adjusted feature `ψ_h(s,a)` for online samples
//! and on the observed-confounder feature `φ_h(s,a,u)` for observational
//! samples, then adds the log-determinant bonus and truncates. The greedy
//! policy is played online and its samples join the Gram matrices.

use crate::config::{AlgoConfig, Mode};
use crate::error::{check_index, Error, Result};
use crate::features::{build_backdoor_features, BackdoorFeatures};
use crate::learner::{drive, Backups, EpisodicLearner};
use crate::mdp::{dot, greedy, AdjustmentMode, ConfoundedMdp, Policy, Step, Trajectory};
use crate::report::{delta_factor, Delta, OptimismAudit, RegretReport, AUDIT_TOL};
use crate::ridge::{Provenance, RidgeState};
use crate::rng::SimRng;

/// Which feature a stored sample was regressed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackdoorFeature {
    /// `ψ_h(s, a)`.
    Adjusted { s: usize, a: usize },
    /// `φ_h(s, a, u)`.
    Observed { s: usize, a: usize, u: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BackdoorSample {
    pub feature: BackdoorFeature,
    reward_bits: u64,
    pub next: usize,
}

impl BackdoorSample {
    pub fn new(feature: BackdoorFeature, reward: f64, next: usize) -> Self {
        Self {
            feature,
            reward_bits: reward.to_bits(),
            next,
        }
    }

    pub fn reward(&self) -> f64 {
        f64::from_bits(self.reward_bits)
    }
}

/// Fitted optimistic iterate of one episode. Tables are `[h][s·A + a]`
/// (`q`, `bonus`), `[h][s]` (`v`, with `v[H] = 0`) and `[h][s]` (`actions`).
#[derive(Clone, Debug, PartialEq)]
pub struct ValueIterate {
    pub episode: usize,
    pub omega: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub bonus: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
}

impl ValueIterate {
    pub fn policy(&self) -> Policy {
        Policy::Deterministic(self.actions.clone())
    }
}

pub struct Dovi<'a> {
    mdp: &'a ConfoundedMdp,
    features: &'a BackdoorFeatures,
    cfg: &'a AlgoConfig,
    backups: Backups,
    beta: f64,
    n_offline: usize,
    ridges: Vec<RidgeState<BackdoorSample>>,
    start_logdet: Vec<f64>,
}

impl<'a> Dovi<'a> {
    /// Builds per-step Gram matrices with the observational pool absorbed
    /// before the first episode. `cfg.mode` selects how (or whether) the
    /// observational data enter: `Dovi` uses `φ(s,a,u)`, `NaiveConfounded`
    /// uses `ψ(s,a)`, `OnlineOnly` drops them.
    pub fn new(
        mdp: &'a ConfoundedMdp,
        features: &'a BackdoorFeatures,
        offline: &[Trajectory],
        cfg: &'a AlgoConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if mdp.mode() != AdjustmentMode::Backdoor {
            return Err(Error::ModeMismatch {
                expected: AdjustmentMode::Backdoor,
                found: mdp.mode(),
            });
        }
        if features.horizon != mdp.horizon()
            || features.n_states != mdp.n_states()
            || features.n_actions != mdp.n_actions()
        {
            return Err(Error::Shape("feature map does not match the instance".into()));
        }
        let offline = match cfg.mode {
            Mode::Dovi | Mode::NaiveConfounded => offline,
            Mode::OnlineOnly => &[],
            Mode::DoviPlus => {
                return Err(Error::Config("dovi_plus needs a frontdoor instance".into()))
            }
        };
        let hh = mdp.horizon();
        let mut ridges = (0..hh)
            .map(|_| RidgeState::new(features.dim, cfg.lambda))
            .collect::<Result<Vec<_>>>()?;
        for traj in offline {
            if traj.steps.len() != hh {
                return Err(Error::Shape(format!(
                    "offline episode {} has {} steps, expected {hh}",
                    traj.episode,
                    traj.steps.len()
                )));
            }
            for (h, step) in traj.steps.iter().enumerate() {
                check_index("state", step.s, mdp.n_states())?;
                check_index("action", step.a, mdp.n_actions())?;
                check_index("next state", step.s_next, mdp.n_states())?;
                let (feature, x) = if cfg.mode == Mode::NaiveConfounded {
                    (
                        BackdoorFeature::Adjusted { s: step.s, a: step.a },
                        features.psi(h, step.s, step.a),
                    )
                } else {
                    let u = step.u.ok_or_else(|| {
                        Error::Shape("backdoor observational step without observed confounder".into())
                    })?;
                    check_index("observed confounder", u, features.n_observed)?;
                    (
                        BackdoorFeature::Observed { s: step.s, a: step.a, u },
                        features.phi(h, step.s, step.a, u),
                    )
                };
                ridges[h].add(
                    x,
                    BackdoorSample::new(feature, step.r, step.s_next),
                    Provenance::Offline,
                )?;
            }
        }
        let start_logdet = ridges.iter().map(RidgeState::logdet).collect();
        let n_offline = offline.len();
        Ok(Self {
            mdp,
            features,
            cfg,
            backups: Backups::new(mdp),
            beta: cfg.beta(features.dim, hh, n_offline),
            n_offline,
            ridges,
            start_logdet,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ridge(&self, h: usize) -> &RidgeState<BackdoorSample> {
        &self.ridges[h]
    }

    /// Backward optimistic fit for episode `k` against the current pools.
    pub fn fit_episode(&self, k: usize) -> ValueIterate {
        let f = self.features;
        let (hh, ns, na) = (f.horizon, f.n_states, f.n_actions);
        let mut v = vec![vec![0.0; ns]; hh + 1];
        let mut q = vec![vec![0.0; ns * na]; hh];
        let mut bonus = vec![vec![0.0; ns * na]; hh];
        let mut omega = vec![Vec::new(); hh];
        let mut actions = vec![vec![0; ns]; hh];
        for h in (0..hh).rev() {
            let ridge = &self.ridges[h];
            let w = {
                let next = &v[h + 1];
                ridge.solve_with(|key| key.reward() + next[key.next])
            };
            let cap = self.cfg.value_cap.q_cap(hh, h);
            for s in 0..ns {
                for a in 0..na {
                    let x = f.psi(h, s, a);
                    let g = ridge.bonus(x, self.beta);
                    bonus[h][s * na + a] = g;
                    q[h][s * na + a] = (dot(x, &w) + g).min(cap).max(0.0);
                }
                let row = &q[h][s * na..(s + 1) * na];
                let best = greedy(row);
                actions[h][s] = best;
                v[h][s] = row[best];
            }
            omega[h] = w;
        }
        ValueIterate {
            episode: k,
            omega,
            q,
            bonus,
            v,
            actions,
        }
    }

    /// Plays the greedy policy of `vi` for one episode from `s1`, adding
    /// each `(ψ_h(s,a), r, s')` to the step-`h` Gram matrix.
    pub fn rollout(&mut self, vi: &ValueIterate, s1: usize, rng: &mut SimRng) -> Result<Trajectory> {
        let mut s = s1;
        let mut steps = Vec::with_capacity(self.features.horizon);
        for h in 0..self.features.horizon {
            let a = vi.actions[h][s];
            let out = self.mdp.sample_online_step(h, s, a, rng)?;
            self.ridges[h].add(
                self.features.psi(h, s, a),
                BackdoorSample::new(BackdoorFeature::Adjusted { s, a }, out.reward, out.next_state),
                Provenance::Online,
            )?;
            steps.push(Step {
                s,
                a,
                u: None,
                m: None,
                r: out.reward,
                s_next: out.next_state,
            });
            s = out.next_state;
        }
        Ok(Trajectory {
            episode: vi.episode,
            steps,
        })
    }

    /// Records `ι = R + P V^k_{h+1} − Q^k_h` for every `(h, s, a)`.
    pub fn audit(&self, vi: &ValueIterate, audit: &mut OptimismAudit) {
        for h in 0..self.features.horizon {
            for (sa, q) in vi.q[h].iter().enumerate() {
                let iota = self.backups.reward[h][sa] + dot(&self.backups.next[h][sa], &vi.v[h + 1]) - q;
                audit.action.record(iota, vi.bonus[h][sa], AUDIT_TOL);
            }
        }
    }

    /// `Δ_H` of the data absorbed so far.
    pub fn delta(&self) -> f64 {
        delta_factor(
            self.ridges
                .iter()
                .zip(&self.start_logdet)
                .map(|(r, s0)| r.logdet() - s0),
            self.features.dim,
            self.features.horizon,
        )
    }
}

impl EpisodicLearner for Dovi<'_> {
    type Iterate = ValueIterate;

    fn fit_episode(&self, k: usize) -> ValueIterate {
        Dovi::fit_episode(self, k)
    }

    fn policy(&self, it: &ValueIterate) -> Policy {
        it.policy()
    }

    fn audit(&self, it: &ValueIterate, audit: &mut OptimismAudit) {
        Dovi::audit(self, it, audit)
    }

    fn rollout(&mut self, it: &ValueIterate, s1: usize, rng: &mut SimRng) -> Result<Trajectory> {
        Dovi::rollout(self, it, s1, rng)
    }

    fn delta(&self) -> Delta {
        Delta::Single(Dovi::delta(self))
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn dim(&self) -> usize {
        self.features.dim
    }

    fn n_offline(&self) -> usize {
        self.n_offline
    }
}

fn run_backdoor(mdp: &ConfoundedMdp, offline: &[Trajectory], cfg: &AlgoConfig) -> Result<RegretReport> {
    let features = build_backdoor_features(mdp)?;
    let mut learner = Dovi::new(mdp, &features, offline, cfg)?;
    drive(mdp, &mut learner, cfg, cfg.mode)
}

/// Runs the backdoor learner for `cfg.episodes` episodes. `cfg.mode` must
/// be [`Mode::Dovi`].
pub fn run_dovi(mdp: &ConfoundedMdp, offline: &[Trajectory], cfg: &AlgoConfig) -> Result<RegretReport> {
    if cfg.mode != Mode::Dovi {
        return Err(Error::Config(format!("run_dovi called with mode {}", cfg.mode)));
    }
    run_backdoor(mdp, offline, cfg)
}

/// Comparison arms on a backdoor instance: `online_only` or
/// `naive_confounded`.
pub fn run_baseline(mdp: &ConfoundedMdp, offline: &[Trajectory], cfg: &AlgoConfig) -> Result<RegretReport> {
    match cfg.mode {
        Mode::OnlineOnly | Mode::NaiveConfounded => run_backdoor(mdp, offline, cfg),
        other => Err(Error::Config(format!("{other} is not a baseline mode"))),
    }
}
