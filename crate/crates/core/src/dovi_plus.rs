//! Two-stage optimistic value iteration through an intermediate state.
//!
//! Stage 1 fits `V^k_{h+½}(s, m)`, the value of reaching mediator `m`, by
//! regressing `V^k_{h+1}(s')` on `ψ_h(s,m)` (online) and `φ_h(s,a,m)`
//! (observational). Stage 2 regresses `r + V^k_{h+½}(s, m)` on `γ_h(s,a)`
//! for both pools and yields `Q^k_h`.

use crate::config::{AlgoConfig, Mode};
use crate::error::{check_index, Error, Result};
use crate::features::{build_frontdoor_features, FrontdoorFeatures};
use crate::learner::{drive, EpisodicLearner};
use crate::mdp::{dot, greedy, AdjustmentMode, ConfoundedMdp, Policy, Step, Trajectory};
use crate::report::{delta_factor, AuditCounts, Delta, OptimismAudit, RegretReport, AUDIT_TOL};
use crate::ridge::{Provenance, RidgeState};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MediatorFeature {
    /// `ψ_h(s, m)`, online.
    Effect { s: usize, m: usize },
    /// `φ_h(s, a, m)`, observational.
    Conditional { s: usize, a: usize, m: usize },
}

/// Stage-1 sample: feature and next state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MediatorSample {
    pub feature: MediatorFeature,
    pub next: usize,
}

/// Stage-2 sample: `γ_h(s, a)` with the realized mediator and reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ActionSample {
    pub s: usize,
    pub a: usize,
    pub m: usize,
    reward_bits: u64,
}

impl ActionSample {
    pub fn new(s: usize, a: usize, m: usize, reward: f64) -> Self {
        Self {
            s,
            a,
            m,
            reward_bits: reward.to_bits(),
        }
    }

    pub fn reward(&self) -> f64 {
        f64::from_bits(self.reward_bits)
    }
}

/// Fitted iterate of one episode. `v_half`, `bonus_half` are
/// `[h][s·M + m]`; `q`, `bonus` are `[h][s·A + a]`; `v` has `H + 1` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueIteratePlus {
    pub episode: usize,
    pub omega_mediator: Vec<Vec<f64>>,
    pub omega_action: Vec<Vec<f64>>,
    pub v_half: Vec<Vec<f64>>,
    pub bonus_half: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub bonus: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
}

impl ValueIteratePlus {
    pub fn policy(&self) -> Policy {
        Policy::Deterministic(self.actions.clone())
    }
}

/// Exact frontdoor backups used by the audit.
struct FrontdoorBackups {
    /// `[h][s·A + a]`
    reward: Vec<Vec<f64>>,
    /// `[h][s·A + a]` → distribution over `m`
    itrans: Vec<Vec<Vec<f64>>>,
    /// `[h][s·M + m]` → `P(·|s, do(m))`
    effect: Vec<Vec<Vec<f64>>>,
}

impl FrontdoorBackups {
    fn new(mdp: &ConfoundedMdp) -> Result<Self> {
        let (hh, ns, na, nm) = (mdp.horizon(), mdp.n_states(), mdp.n_actions(), mdp.n_intermediate());
        let mut out = Self {
            reward: vec![Vec::with_capacity(ns * na); hh],
            itrans: vec![Vec::with_capacity(ns * na); hh],
            effect: vec![Vec::with_capacity(ns * nm); hh],
        };
        for h in 0..hh {
            for s in 0..ns {
                for a in 0..na {
                    out.reward[h].push(mdp.frontdoor_reward(h, s, a)?);
                    out.itrans[h].push(mdp.intermediate_dist(h, s, a)?);
                }
                for m in 0..nm {
                    out.effect[h].push(mdp.mediator_effect(h, s, m)?);
                }
            }
        }
        Ok(out)
    }
}

pub struct DoviPlus<'a> {
    mdp: &'a ConfoundedMdp,
    features: &'a FrontdoorFeatures,
    cfg: &'a AlgoConfig,
    backups: FrontdoorBackups,
    beta: f64,
    n_offline: usize,
    mediator: Vec<RidgeState<MediatorSample>>,
    action: Vec<RidgeState<ActionSample>>,
    start_mediator: Vec<f64>,
    start_action: Vec<f64>,
}

impl<'a> DoviPlus<'a> {
    /// `cfg.mode` is `DoviPlus`, or `OnlineOnly` to discard `offline`.
    pub fn new(
        mdp: &'a ConfoundedMdp,
        features: &'a FrontdoorFeatures,
        offline: &[Trajectory],
        cfg: &'a AlgoConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if mdp.mode() != AdjustmentMode::Frontdoor {
            return Err(Error::ModeMismatch {
                expected: AdjustmentMode::Frontdoor,
                found: mdp.mode(),
            });
        }
        if features.horizon != mdp.horizon()
            || features.n_states != mdp.n_states()
            || features.n_actions != mdp.n_actions()
            || features.n_intermediate != mdp.n_intermediate()
        {
            return Err(Error::Shape("feature map does not match the instance".into()));
        }
        let offline = match cfg.mode {
            Mode::DoviPlus => offline,
            Mode::OnlineOnly => &[],
            other => {
                return Err(Error::Config(format!(
                    "mode {other} is not available on a frontdoor instance"
                )))
            }
        };
        let hh = mdp.horizon();
        let mut mediator = (0..hh)
            .map(|_| RidgeState::new(features.dim_mediator, cfg.lambda))
            .collect::<Result<Vec<_>>>()?;
        let mut action = (0..hh)
            .map(|_| RidgeState::new(features.dim_action, cfg.lambda))
            .collect::<Result<Vec<_>>>()?;
        for traj in offline {
            if traj.steps.len() != hh {
                return Err(Error::Shape(format!(
                    "offline episode {} has {} steps, expected {hh}",
                    traj.episode,
                    traj.steps.len()
                )));
            }
            for (h, st) in traj.steps.iter().enumerate() {
                check_index("state", st.s, mdp.n_states())?;
                check_index("action", st.a, mdp.n_actions())?;
                check_index("next state", st.s_next, mdp.n_states())?;
                let m = st
                    .m
                    .ok_or_else(|| Error::Shape("frontdoor observational step without intermediate state".into()))?;
                check_index("intermediate state", m, mdp.n_intermediate())?;
                mediator[h].add(
                    features.phi(h, st.s, st.a, m),
                    MediatorSample {
                        feature: MediatorFeature::Conditional { s: st.s, a: st.a, m },
                        next: st.s_next,
                    },
                    Provenance::Offline,
                )?;
                action[h].add(
                    features.gamma(h, st.s, st.a),
                    ActionSample::new(st.s, st.a, m, st.r),
                    Provenance::Offline,
                )?;
            }
        }
        let n_offline = offline.len();
        Ok(Self {
            mdp,
            features,
            cfg,
            backups: FrontdoorBackups::new(mdp)?,
            beta: cfg.beta(features.dim(), hh, n_offline),
            n_offline,
            start_mediator: mediator.iter().map(RidgeState::logdet).collect(),
            start_action: action.iter().map(RidgeState::logdet).collect(),
            mediator,
            action,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mediator_ridge(&self, h: usize) -> &RidgeState<MediatorSample> {
        &self.mediator[h]
    }

    pub fn action_ridge(&self, h: usize) -> &RidgeState<ActionSample> {
        &self.action[h]
    }

    pub fn fit_episode(&self, k: usize) -> ValueIteratePlus {
        let f = self.features;
        let (hh, ns, na, nm) = (f.horizon, f.n_states, f.n_actions, f.n_intermediate);
        let mut it = ValueIteratePlus {
            episode: k,
            omega_mediator: vec![Vec::new(); hh],
            omega_action: vec![Vec::new(); hh],
            v_half: vec![vec![0.0; ns * nm]; hh],
            bonus_half: vec![vec![0.0; ns * nm]; hh],
            q: vec![vec![0.0; ns * na]; hh],
            bonus: vec![vec![0.0; ns * na]; hh],
            v: vec![vec![0.0; ns]; hh + 1],
            actions: vec![vec![0; ns]; hh],
        };
        for h in (0..hh).rev() {
            let ridge1 = &self.mediator[h];
            let w1 = {
                let next = &it.v[h + 1];
                ridge1.solve_with(|key| next[key.next])
            };
            let half_cap = self.cfg.value_cap.half_cap(hh, h);
            for s in 0..ns {
                for m in 0..nm {
                    let x = f.psi(h, s, m);
                    let g = ridge1.bonus(x, self.beta);
                    it.bonus_half[h][s * nm + m] = g;
                    it.v_half[h][s * nm + m] = (dot(x, &w1) + g).min(half_cap).max(0.0);
                }
            }
            let ridge2 = &self.action[h];
            let w2 = {
                let half = &it.v_half[h];
                ridge2.solve_with(|key| key.reward() + half[key.s * nm + key.m])
            };
            let cap = self.cfg.value_cap.q_cap(hh, h);
            for s in 0..ns {
                for a in 0..na {
                    let x = f.gamma(h, s, a);
                    let g = ridge2.bonus(x, self.beta);
                    it.bonus[h][s * na + a] = g;
                    it.q[h][s * na + a] = (dot(x, &w2) + g).min(cap).max(0.0);
                }
                let row = &it.q[h][s * na..(s + 1) * na];
                let best = greedy(row);
                it.actions[h][s] = best;
                it.v[h][s] = row[best];
            }
            it.omega_mediator[h] = w1;
            it.omega_action[h] = w2;
        }
        it
    }

    /// Plays the greedy policy from `s1`; each step adds `ψ_h(s, m)` to the
    /// stage-1 matrix and `γ_h(s, a)` to the stage-2 matrix.
    pub fn rollout(&mut self, it: &ValueIteratePlus, s1: usize, rng: &mut SimRng) -> Result<Trajectory> {
        let f = self.features;
        let mut s = s1;
        let mut steps = Vec::with_capacity(f.horizon);
        for h in 0..f.horizon {
            let a = it.actions[h][s];
            let out = self.mdp.sample_online_step(h, s, a, rng)?;
            let m = out
                .intermediate
                .ok_or_else(|| Error::Shape("frontdoor step without intermediate state".into()))?;
            self.mediator[h].add(
                f.psi(h, s, m),
                MediatorSample {
                    feature: MediatorFeature::Effect { s, m },
                    next: out.next_state,
                },
                Provenance::Online,
            )?;
            self.action[h].add(f.gamma(h, s, a), ActionSample::new(s, a, m, out.reward), Provenance::Online)?;
            steps.push(Step {
                s,
                a,
                u: None,
                m: Some(m),
                r: out.reward,
                s_next: out.next_state,
            });
            s = out.next_state;
        }
        Ok(Trajectory {
            episode: it.episode,
            steps,
        })
    }

    /// Records `ι_{h+½} = P_{h+½} V^k_{h+1} − V^k_{h+½}` on every `(s, m)` and
    /// `ι_h = r + P̆ V^k_{h+½} − Q^k_h` on every `(s, a)`.
    pub fn audit(&self, it: &ValueIteratePlus, audit: &mut OptimismAudit) {
        let nm = self.features.n_intermediate;
        let half = audit.half.get_or_insert_with(AuditCounts::default);
        for h in 0..self.features.horizon {
            for (sm, vh) in it.v_half[h].iter().enumerate() {
                let iota = dot(&self.backups.effect[h][sm], &it.v[h + 1]) - vh;
                half.record(iota, it.bonus_half[h][sm], AUDIT_TOL);
            }
            for (sa, q) in it.q[h].iter().enumerate() {
                let s = sa / self.features.n_actions;
                let iota = self.backups.reward[h][sa]
                    + dot(&self.backups.itrans[h][sa], &it.v_half[h][s * nm..(s + 1) * nm])
                    - q;
                audit.action.record(iota, it.bonus[h][sa], AUDIT_TOL);
            }
        }
    }

    /// `(Δ_{1,H}, Δ_{2,H})`, both normalized by the common dimension.
    pub fn delta(&self) -> (f64, f64) {
        let d = self.features.dim();
        let hh = self.features.horizon;
        let d1 = delta_factor(
            self.mediator.iter().zip(&self.start_mediator).map(|(r, s0)| r.logdet() - s0),
            d,
            hh,
        );
        let d2 = delta_factor(
            self.action.iter().zip(&self.start_action).map(|(r, s0)| r.logdet() - s0),
            d,
            hh,
        );
        (d1, d2)
    }
}

impl EpisodicLearner for DoviPlus<'_> {
    type Iterate = ValueIteratePlus;

    fn fit_episode(&self, k: usize) -> ValueIteratePlus {
        DoviPlus::fit_episode(self, k)
    }

    fn policy(&self, it: &ValueIteratePlus) -> Policy {
        it.policy()
    }

    fn audit(&self, it: &ValueIteratePlus, audit: &mut OptimismAudit) {
        DoviPlus::audit(self, it, audit)
    }

    fn rollout(&mut self, it: &ValueIteratePlus, s1: usize, rng: &mut SimRng) -> Result<Trajectory> {
        DoviPlus::rollout(self, it, s1, rng)
    }

    fn delta(&self) -> Delta {
        let (a, b) = DoviPlus::delta(self);
        Delta::Split(a, b)
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn dim(&self) -> usize {
        self.features.dim()
    }

    fn n_offline(&self) -> usize {
        self.n_offline
    }
}

/// Runs the two-stage learner on a frontdoor instance. `cfg.mode` is
/// `DoviPlus` or `OnlineOnly`.
pub fn run_dovi_plus(mdp: &ConfoundedMdp, offline: &[Trajectory], cfg: &AlgoConfig) -> Result<RegretReport> {
    let features = build_frontdoor_features(mdp)?;
    let mut learner = DoviPlus::new(mdp, &features, offline, cfg)?;
    let mut report = drive(mdp, &mut learner, cfg, cfg.mode)?;
    if report.audit.half.is_none() {
        report.audit.half = Some(AuditCounts::default());
    }
    Ok(report)
}
