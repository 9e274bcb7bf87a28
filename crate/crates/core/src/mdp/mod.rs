//! Tabular confounded MDPs.
//!
//! An instance is a structural causal model over `H` steps. At each step the
//! environment draws a confounder `w ~ P̃_h(·|s)`; offline, the behavior policy
//! acts on it (`a ~ ν_h(·|s, w)`) while online the agent intervenes with
//! `do(a)`. Two variants share the same confounder and behavior tables:
//!
//! * **backdoor**: `s' ~ P_h(·|s, a, w)` and `r = r_h(s, a, w)`; offline data
//!   record the observed part `u = obs_map(w)`.
//! * **frontdoor**: an intermediate state `m ~ P̆_h(·|s, a)` mediates the
//!   action, `s' ~ P_h(·|s, m, w)` and `r = r_h(s, a)`.
//!
//! Everything here is exact enumeration; it is the ground truth the learning
//! code is audited against. Step indices are zero-based (`0..horizon`).

mod format;
mod policy;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use format::{parse_instance, read_instance, render_instance, write_instance, ROW_TOLERANCE};
pub use policy::Policy;

use crate::error::{check_index, Error, Result};
use crate::rng::sample_index;

/// Row-stochasticity tolerance for [`ConfoundedMdp::validate`].
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustmentMode {
    Backdoor,
    Frontdoor,
}

impl std::fmt::Display for AdjustmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdjustmentMode::Backdoor => f.write_str("backdoor"),
            AdjustmentMode::Frontdoor => f.write_str("frontdoor"),
        }
    }
}

impl std::str::FromStr for AdjustmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backdoor" => Ok(AdjustmentMode::Backdoor),
            "frontdoor" => Ok(AdjustmentMode::Frontdoor),
            other => Err(Error::Config(format!("unknown adjustment mode `{other}`"))),
        }
    }
}

/// Mode-specific kernels. Flat row-major tables; index order in comments.
#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    Backdoor {
        /// `P_h(s'|s,a,w)`, `[h][s][a][w][s']`.
        trans: Vec<f64>,
        /// `r_h(s,a,w)`, `[h][s][a][w]`.
        reward: Vec<f64>,
    },
    Frontdoor {
        n_intermediate: usize,
        /// `P̆_h(m|s,a)`, `[h][s][a][m]`.
        itrans: Vec<f64>,
        /// `P_h(s'|s,m,w)`, `[h][s][m][w][s']`.
        ftrans: Vec<f64>,
        /// `r_h(s,a)`, `[h][s][a]`.
        reward: Vec<f64>,
    },
}

/// Sizes shared by both variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_confounders: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfoundedMdp {
    name: String,
    shape: Shape,
    n_observed: usize,
    obs_map: Vec<usize>,
    initial: Vec<f64>,
    /// `P̃_h(w|s)`, `[h][s][w]`.
    conf: Vec<f64>,
    /// `ν_h(a|s,w)`, `[h][s][w][a]`.
    behavior: Vec<f64>,
    dynamics: Dynamics,
}

/// One invariant violation reported by [`ConfoundedMdp::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at {}", self.message, self.location)
    }
}

/// Per-step record. Backdoor offline steps carry `u`, frontdoor steps carry
/// `m`; online steps never carry `u`. The confounder itself is never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub s: usize,
    pub a: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub r: f64,
    pub s_next: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode: usize,
    pub steps: Vec<Step>,
}

/// Outcome of one online interaction under `do(a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnlineStep {
    pub reward: f64,
    pub next_state: usize,
    pub intermediate: Option<usize>,
}

/// Exact optimal values. `v` has `horizon + 1` rows with `v[horizon] = 0`;
/// `q[h][s * n_actions + a]`; `v_half[h][s * n_intermediate + m]` in
/// frontdoor mode.
#[derive(Clone, Debug)]
pub struct OptimalValues {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub v_half: Option<Vec<Vec<f64>>>,
    pub policy: Policy,
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn greedy(values: &[f64]) -> usize {
    argmax_lowest(values)
}

fn check_len(what: &str, table: &[f64], expected: usize) -> Result<()> {
    if table.len() == expected {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{what} has {} entries, expected {expected}",
            table.len()
        )))
    }
}

impl ConfoundedMdp {
    /// Backdoor-variant instance. Only table shapes are checked here; value
    /// invariants are reported by [`validate`](Self::validate).
    #[allow(clippy::too_many_arguments)]
    pub fn backdoor(
        name: impl Into<String>,
        shape: Shape,
        obs_map: Vec<usize>,
        initial: Vec<f64>,
        conf: Vec<f64>,
        behavior: Vec<f64>,
        trans: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        let Shape {
            horizon: h,
            n_states: ns,
            n_actions: na,
            n_confounders: nw,
        } = shape;
        check_len("trans", &trans, h * ns * na * nw * ns)?;
        check_len("reward", &reward, h * ns * na * nw)?;
        Self::assemble(
            name.into(),
            shape,
            obs_map,
            initial,
            conf,
            behavior,
            Dynamics::Backdoor { trans, reward },
        )
    }

    /// Frontdoor-variant instance. The observation map is trivial (`u ≡ 0`),
    /// since confounders are never observed in this variant.
    #[allow(clippy::too_many_arguments)]
    pub fn frontdoor(
        name: impl Into<String>,
        shape: Shape,
        n_intermediate: usize,
        initial: Vec<f64>,
        conf: Vec<f64>,
        behavior: Vec<f64>,
        itrans: Vec<f64>,
        ftrans: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        let Shape {
            horizon: h,
            n_states: ns,
            n_actions: na,
            n_confounders: nw,
        } = shape;
        if n_intermediate == 0 {
            return Err(Error::Shape("n_intermediate must be positive".into()));
        }
        check_len("itrans", &itrans, h * ns * na * n_intermediate)?;
        check_len("ftrans", &ftrans, h * ns * n_intermediate * nw * ns)?;
        check_len("freward", &reward, h * ns * na)?;
        Self::assemble(
            name.into(),
            shape,
            vec![0; nw],
            initial,
            conf,
            behavior,
            Dynamics::Frontdoor {
                n_intermediate,
                itrans,
                ftrans,
                reward,
            },
        )
    }

    fn assemble(
        name: String,
        shape: Shape,
        obs_map: Vec<usize>,
        initial: Vec<f64>,
        conf: Vec<f64>,
        behavior: Vec<f64>,
        dynamics: Dynamics,
    ) -> Result<Self> {
        let Shape {
            horizon: h,
            n_states: ns,
            n_actions: na,
            n_confounders: nw,
        } = shape;
        if h == 0 || ns == 0 || na == 0 || nw == 0 {
            return Err(Error::Shape(format!("all sizes must be positive: {shape:?}")));
        }
        if obs_map.len() != nw {
            return Err(Error::Shape(format!(
                "obs_map has {} entries, expected {nw}",
                obs_map.len()
            )));
        }
        check_len("initial", &initial, ns)?;
        check_len("conf", &conf, h * ns * nw)?;
        check_len("behavior", &behavior, h * ns * nw * na)?;
        let n_observed = obs_map.iter().max().map_or(0, |&u| u + 1);
        Ok(Self {
            name,
            shape,
            n_observed,
            obs_map,
            initial,
            conf,
            behavior,
            dynamics,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn horizon(&self) -> usize {
        self.shape.horizon
    }

    pub fn n_states(&self) -> usize {
        self.shape.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.shape.n_actions
    }

    pub fn n_confounders(&self) -> usize {
        self.shape.n_confounders
    }

    /// Size of the observed-confounder space `U` (image of `obs_map`).
    pub fn n_observed(&self) -> usize {
        self.n_observed
    }

    /// Size of the intermediate-state space; zero for backdoor instances.
    pub fn n_intermediate(&self) -> usize {
        match &self.dynamics {
            Dynamics::Frontdoor { n_intermediate, .. } => *n_intermediate,
            Dynamics::Backdoor { .. } => 0,
        }
    }

    pub fn mode(&self) -> AdjustmentMode {
        match self.dynamics {
            Dynamics::Backdoor { .. } => AdjustmentMode::Backdoor,
            Dynamics::Frontdoor { .. } => AdjustmentMode::Frontdoor,
        }
    }

    pub fn obs_map(&self) -> &[usize] {
        &self.obs_map
    }

    pub fn observe(&self, w: usize) -> usize {
        self.obs_map[w]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn conf_table(&self) -> &[f64] {
        &self.conf
    }

    pub fn behavior_table(&self) -> &[f64] {
        &self.behavior
    }

    /// Replaces the initial-state distribution (length `n_states`).
    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        check_len("initial", &initial, self.shape.n_states)?;
        self.initial = initial;
        Ok(self)
    }

    fn require(&self, expected: AdjustmentMode) -> Result<()> {
        let found = self.mode();
        if found == expected {
            Ok(())
        } else {
            Err(Error::ModeMismatch { expected, found })
        }
    }

    fn check_hsa(&self, h: usize, s: usize, a: usize) -> Result<()> {
        check_index("step", h, self.shape.horizon)?;
        check_index("state", s, self.shape.n_states)?;
        check_index("action", a, self.shape.n_actions)
    }

    /// `P̃_h(·|s)` over confounders.
    pub fn conf(&self, h: usize, s: usize) -> &[f64] {
        let nw = self.shape.n_confounders;
        let start = (h * self.shape.n_states + s) * nw;
        &self.conf[start..start + nw]
    }

    /// `ν_h(·|s, w)` over actions.
    pub fn behavior(&self, h: usize, s: usize, w: usize) -> &[f64] {
        let na = self.shape.n_actions;
        let start = ((h * self.shape.n_states + s) * self.shape.n_confounders + w) * na;
        &self.behavior[start..start + na]
    }

    /// Backdoor kernel row `P_h(·|s, a, w)`.
    fn trans_row(&self, h: usize, s: usize, a: usize, w: usize) -> &[f64] {
        let Shape {
            n_states: ns,
            n_actions: na,
            n_confounders: nw,
            ..
        } = self.shape;
        match &self.dynamics {
            Dynamics::Backdoor { trans, .. } => {
                let start = (((h * ns + s) * na + a) * nw + w) * ns;
                &trans[start..start + ns]
            }
            Dynamics::Frontdoor { .. } => unreachable!("backdoor table on frontdoor instance"),
        }
    }

    /// Backdoor reward `r_h(s, a, w)`.
    fn reward_w(&self, h: usize, s: usize, a: usize, w: usize) -> f64 {
        let Shape {
            n_states: ns,
            n_actions: na,
            n_confounders: nw,
            ..
        } = self.shape;
        match &self.dynamics {
            Dynamics::Backdoor { reward, .. } => reward[((h * ns + s) * na + a) * nw + w],
            Dynamics::Frontdoor { .. } => unreachable!("backdoor table on frontdoor instance"),
        }
    }

    /// Frontdoor `P̆_h(·|s, a)` over intermediate states.
    fn itrans_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        match &self.dynamics {
            Dynamics::Frontdoor {
                n_intermediate: nm,
                itrans,
                ..
            } => {
                let start = ((h * self.shape.n_states + s) * self.shape.n_actions + a) * nm;
                &itrans[start..start + nm]
            }
            Dynamics::Backdoor { .. } => unreachable!("frontdoor table on backdoor instance"),
        }
    }

    /// Frontdoor kernel row `P_h(·|s, m, w)`.
    fn ftrans_row(&self, h: usize, s: usize, m: usize, w: usize) -> &[f64] {
        let Shape {
            n_states: ns,
            n_confounders: nw,
            ..
        } = self.shape;
        match &self.dynamics {
            Dynamics::Frontdoor {
                n_intermediate: nm,
                ftrans,
                ..
            } => {
                let start = (((h * ns + s) * nm + m) * nw + w) * ns;
                &ftrans[start..start + ns]
            }
            Dynamics::Backdoor { .. } => unreachable!("frontdoor table on backdoor instance"),
        }
    }

    /// Raw frontdoor kernel row `P_h(·|s, m, w)`.
    pub fn mediator_kernel(&self, h: usize, s: usize, m: usize, w: usize) -> &[f64] {
        self.ftrans_row(h, s, m, w)
    }

    fn freward(&self, h: usize, s: usize, a: usize) -> f64 {
        match &self.dynamics {
            Dynamics::Frontdoor { reward, .. } => {
                reward[(h * self.shape.n_states + s) * self.shape.n_actions + a]
            }
            Dynamics::Backdoor { .. } => unreachable!("frontdoor table on backdoor instance"),
        }
    }

    /// Lists every invariant violation: row sums off by more than
    /// [`STOCHASTIC_TOL`], negative or non-finite probabilities, rewards
    /// outside `[0, 1]`, and a non-surjective observation map.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let Shape {
            horizon: hh,
            n_states: ns,
            n_actions: na,
            n_confounders: nw,
        } = self.shape;

        check_row(&mut out, "initial".to_string(), &self.initial);
        for h in 0..hh {
            for s in 0..ns {
                check_row(&mut out, format!("conf[{h}][{s}]"), self.conf(h, s));
                for w in 0..nw {
                    check_row(
                        &mut out,
                        format!("behavior[{h}][{s}][{w}]"),
                        self.behavior(h, s, w),
                    );
                }
            }
        }

        match &self.dynamics {
            Dynamics::Backdoor { .. } => {
                for h in 0..hh {
                    for s in 0..ns {
                        for a in 0..na {
                            for w in 0..nw {
                                check_row(
                                    &mut out,
                                    format!("trans[{h}][{s}][{a}][{w}]"),
                                    self.trans_row(h, s, a, w),
                                );
                                check_reward(
                                    &mut out,
                                    format!("reward[{h}][{s}][{a}][{w}]"),
                                    self.reward_w(h, s, a, w),
                                );
                            }
                        }
                    }
                }
            }
            Dynamics::Frontdoor { n_intermediate, .. } => {
                for h in 0..hh {
                    for s in 0..ns {
                        for a in 0..na {
                            check_row(
                                &mut out,
                                format!("itrans[{h}][{s}][{a}]"),
                                self.itrans_row(h, s, a),
                            );
                            check_reward(
                                &mut out,
                                format!("freward[{h}][{s}][{a}]"),
                                self.freward(h, s, a),
                            );
                        }
                        for m in 0..*n_intermediate {
                            for w in 0..nw {
                                check_row(
                                    &mut out,
                                    format!("ftrans[{h}][{s}][{m}][{w}]"),
                                    self.ftrans_row(h, s, m, w),
                                );
                            }
                        }
                    }
                }
            }
        }

        let mut seen = vec![false; self.n_observed];
        for &u in &self.obs_map {
            seen[u] = true;
        }
        for (u, hit) in seen.iter().enumerate() {
            if !hit {
                out.push(Violation {
                    location: "obs_map".into(),
                    message: format!("observed value {u} is not in the image"),
                });
            }
        }
        out
    }

    /// Largest spread of `ν_h(a|s,w)` across confounders sharing an observed
    /// value `u` (restricted to `P̃_h(w|s) > 0`). Zero means `u` blocks every
    /// backdoor path through the behavior policy, so adjusting for `u` is
    /// exact.
    pub fn backdoor_gap(&self) -> f64 {
        let Shape {
            horizon: hh,
            n_states: ns,
            n_actions: na,
            n_confounders: nw,
        } = self.shape;
        let mut gap: f64 = 0.0;
        for h in 0..hh {
            for s in 0..ns {
                let conf = self.conf(h, s);
                for u in 0..self.n_observed {
                    for a in 0..na {
                        let vals: Vec<f64> = (0..nw)
                            .filter(|&w| self.obs_map[w] == u && conf[w] > 0.0)
                            .map(|w| self.behavior(h, s, w)[a])
                            .collect();
                        if let (Some(lo), Some(hi)) = (
                            vals.iter().copied().reduce(f64::min),
                            vals.iter().copied().reduce(f64::max),
                        ) {
                            gap = gap.max(hi - lo);
                        }
                    }
                }
            }
        }
        gap
    }

    // ---------------------------------------------------------------------
    // Sampling
    // ---------------------------------------------------------------------

    pub fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(rng, &self.initial)
    }

    /// One interventional step: `w ~ P̃_h(·|s)` stays hidden, the action is
    /// forced to `a`.
    pub fn sample_online_step<R: Rng + ?Sized>(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<OnlineStep> {
        self.check_hsa(h, s, a)?;
        let w = sample_index(rng, self.conf(h, s));
        Ok(match self.dynamics {
            Dynamics::Backdoor { .. } => OnlineStep {
                reward: self.reward_w(h, s, a, w),
                next_state: sample_index(rng, self.trans_row(h, s, a, w)),
                intermediate: None,
            },
            Dynamics::Frontdoor { .. } => {
                let m = sample_index(rng, self.itrans_row(h, s, a));
                OnlineStep {
                    reward: self.freward(h, s, a),
                    next_state: sample_index(rng, self.ftrans_row(h, s, m, w)),
                    intermediate: Some(m),
                }
            }
        })
    }

    /// One observational episode under the behavior policy, starting from
    /// the instance's initial distribution.
    pub fn sample_offline_episode<R: Rng + ?Sized>(
        &self,
        mode: AdjustmentMode,
        rng: &mut R,
    ) -> Result<Trajectory> {
        self.require(mode)?;
        let mut s = self.sample_initial_state(rng);
        let mut steps = Vec::with_capacity(self.shape.horizon);
        for h in 0..self.shape.horizon {
            let w = sample_index(rng, self.conf(h, s));
            let a = sample_index(rng, self.behavior(h, s, w));
            let step = match self.dynamics {
                Dynamics::Backdoor { .. } => {
                    let r = self.reward_w(h, s, a, w);
                    let s_next = sample_index(rng, self.trans_row(h, s, a, w));
                    Step {
                        s,
                        a,
                        u: Some(self.obs_map[w]),
                        m: None,
                        r,
                        s_next,
                    }
                }
                Dynamics::Frontdoor { .. } => {
                    let r = self.freward(h, s, a);
                    let m = sample_index(rng, self.itrans_row(h, s, a));
                    let s_next = sample_index(rng, self.ftrans_row(h, s, m, w));
                    Step {
                        s,
                        a,
                        u: None,
                        m: Some(m),
                        r,
                        s_next,
                    }
                }
            };
            s = step.s_next;
            steps.push(step);
        }
        Ok(Trajectory { episode: 0, steps })
    }

    // ---------------------------------------------------------------------
    // Backdoor quantities
    // ---------------------------------------------------------------------

    /// `P(s'|s, do(a)) = Σ_w P̃_h(w|s) P_h(s'|s,a,w)`.
    pub fn causal_next_dist(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        self.require(AdjustmentMode::Backdoor)?;
        self.check_hsa(h, s, a)?;
        let mut out = vec![0.0; self.shape.n_states];
        for (w, &pw) in self.conf(h, s).iter().enumerate() {
            axpy(&mut out, pw, self.trans_row(h, s, a, w));
        }
        Ok(out)
    }

    /// The same causal kernel through the observed coordinate:
    /// `Σ_u P(u|s) P(s'|s,a,u)`.
    pub fn causal_next_dist_adjusted(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        self.require(AdjustmentMode::Backdoor)?;
        self.check_hsa(h, s, a)?;
        let pu = self.observed_marginal(h, s);
        let mut out = vec![0.0; self.shape.n_states];
        for (u, &p) in pu.iter().enumerate() {
            if p > 0.0 {
                axpy(&mut out, p, &self.observed_next_dist(h, s, a, u));
            }
        }
        Ok(out)
    }

    /// Observational `P(s'|s, a)`: the behavior-weighted ratio. Errors when
    /// the behavior policy never plays `a` in `s`.
    pub fn conditional_next_dist(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        self.require(AdjustmentMode::Backdoor)?;
        self.check_hsa(h, s, a)?;
        let weights = self.action_posterior(h, s, a)?;
        let mut out = vec![0.0; self.shape.n_states];
        for (w, &pw) in weights.iter().enumerate() {
            axpy(&mut out, pw, self.trans_row(h, s, a, w));
        }
        Ok(out)
    }

    /// `R_h(s, a) = Σ_w P̃_h(w|s) r_h(s,a,w)`.
    pub fn causal_reward(&self, h: usize, s: usize, a: usize) -> Result<f64> {
        self.require(AdjustmentMode::Backdoor)?;
        self.check_hsa(h, s, a)?;
        Ok(self
            .conf(h, s)
            .iter()
            .enumerate()
            .map(|(w, &pw)| pw * self.reward_w(h, s, a, w))
            .sum())
    }

    /// Confounded `E[r | s, a]` as seen in observational data.
    pub fn conditional_reward(&self, h: usize, s: usize, a: usize) -> Result<f64> {
        self.require(AdjustmentMode::Backdoor)?;
        self.check_hsa(h, s, a)?;
        let weights = self.action_posterior(h, s, a)?;
        Ok(weights
            .iter()
            .enumerate()
            .map(|(w, &pw)| pw * self.reward_w(h, s, a, w))
            .sum())
    }

    /// `P(w | s, a)` under the behavior policy.
    fn action_posterior(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        let conf = self.conf(h, s);
        let mut weights: Vec<f64> = (0..self.shape.n_confounders)
            .map(|w| conf[w] * self.behavior(h, s, w)[a])
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::UnsupportedAction {
                step: h,
                state: s,
                action: a,
            });
        }
        weights.iter_mut().for_each(|x| *x /= total);
        Ok(weights)
    }

    /// `P(u | s)` over observed values.
    pub fn observed_marginal(&self, h: usize, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_observed];
        for (w, &pw) in self.conf(h, s).iter().enumerate() {
            out[self.obs_map[w]] += pw;
        }
        out
    }

    /// `P(w | s, a, u)` by Bayes over the confounders mapped to `u`.
    ///
    /// When the behavior policy never plays `a` inside the class the
    /// observational conditional is undefined; the interventional weights
    /// `P̃_h(w|s) 1[obs(w)=u]` are used instead, which coincide with it
    /// whenever `u` satisfies the backdoor criterion. Classes with zero mass
    /// fall back to uniform weights (they carry no probability downstream).
    pub fn observed_posterior(&self, h: usize, s: usize, a: usize, u: usize) -> Vec<f64> {
        let nw = self.shape.n_confounders;
        let conf = self.conf(h, s);
        let in_class = |w: usize| self.obs_map[w] == u;
        let candidates: [Box<dyn Fn(usize) -> f64 + '_>; 3] = [
            Box::new(|w| conf[w] * self.behavior(h, s, w)[a]),
            Box::new(|w| conf[w]),
            Box::new(|_| 1.0),
        ];
        for weight in candidates.iter() {
            let mut out: Vec<f64> = (0..nw)
                .map(|w| if in_class(w) { weight(w) } else { 0.0 })
                .collect();
            let total: f64 = out.iter().sum();
            if total > 0.0 {
                out.iter_mut().for_each(|x| *x /= total);
                return out;
            }
        }
        vec![0.0; nw]
    }

    /// `P(s' | s, a, u)`.
    pub fn observed_next_dist(&self, h: usize, s: usize, a: usize, u: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.n_states];
        for (w, &pw) in self.observed_posterior(h, s, a, u).iter().enumerate() {
            if pw > 0.0 {
                axpy(&mut out, pw, self.trans_row(h, s, a, w));
            }
        }
        out
    }

    /// `E[r | s, a, u]`.
    pub fn observed_reward(&self, h: usize, s: usize, a: usize, u: usize) -> f64 {
        self.observed_posterior(h, s, a, u)
            .iter()
            .enumerate()
            .map(|(w, &pw)| pw * self.reward_w(h, s, a, w))
            .sum()
    }

    // ---------------------------------------------------------------------
    // Frontdoor quantities
    // ---------------------------------------------------------------------

    /// `P̆_h(·|s, a)`.
    pub fn intermediate_dist(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        self.require(AdjustmentMode::Frontdoor)?;
        self.check_hsa(h, s, a)?;
        Ok(self.itrans_row(h, s, a).to_vec())
    }

    /// Deterministic frontdoor reward `r_h(s, a)`.
    pub fn frontdoor_reward(&self, h: usize, s: usize, a: usize) -> Result<f64> {
        self.require(AdjustmentMode::Frontdoor)?;
        self.check_hsa(h, s, a)?;
        Ok(self.freward(h, s, a))
    }

    /// Marginal behavior policy `ν̃_h(·|s) = Σ_w P̃_h(w|s) ν_h(·|s,w)`.
    pub fn behavior_marginal(&self, h: usize, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.n_actions];
        for (w, &pw) in self.conf(h, s).iter().enumerate() {
            axpy(&mut out, pw, self.behavior(h, s, w));
        }
        out
    }

    fn check_support(&self, h: usize, s: usize) -> Result<Vec<f64>> {
        let marginal = self.behavior_marginal(h, s);
        match marginal.iter().position(|&p| p <= 0.0) {
            Some(a) => Err(Error::UnsupportedAction {
                step: h,
                state: s,
                action: a,
            }),
            None => Ok(marginal),
        }
    }

    /// `P(s' | s, do(m)) = Σ_w P̃_h(w|s) P_h(s'|s,m,w)`.
    pub fn mediator_effect(&self, h: usize, s: usize, m: usize) -> Result<Vec<f64>> {
        self.require(AdjustmentMode::Frontdoor)?;
        check_index("step", h, self.shape.horizon)?;
        check_index("state", s, self.shape.n_states)?;
        check_index("intermediate state", m, self.n_intermediate())?;
        Ok(self.mediator_effect_unchecked(h, s, m))
    }

    fn mediator_effect_unchecked(&self, h: usize, s: usize, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.n_states];
        for (w, &pw) in self.conf(h, s).iter().enumerate() {
            axpy(&mut out, pw, self.ftrans_row(h, s, m, w));
        }
        out
    }

    /// Observational `P(s' | s, a, m)`; `m` is independent of `w` given
    /// `(s, a)`, so the posterior over `w` is `P̃ ν / ν̃`.
    pub fn mediator_conditional(&self, h: usize, s: usize, a: usize, m: usize) -> Result<Vec<f64>> {
        self.require(AdjustmentMode::Frontdoor)?;
        self.check_hsa(h, s, a)?;
        check_index("intermediate state", m, self.n_intermediate())?;
        let weights = self.action_posterior(h, s, a)?;
        let mut out = vec![0.0; self.shape.n_states];
        for (w, &pw) in weights.iter().enumerate() {
            axpy(&mut out, pw, self.ftrans_row(h, s, m, w));
        }
        Ok(out)
    }

    /// `P(s' | s, do(a))` in the frontdoor variant, by direct composition of
    /// `P̆_h(m|s,a)` with the mediator effect. Requires full behavior support.
    pub fn frontdoor_next_dist(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        self.require(AdjustmentMode::Frontdoor)?;
        self.check_hsa(h, s, a)?;
        self.check_support(h, s)?;
        Ok(self.mediated_next_dist(h, s, a))
    }

    /// The frontdoor formula over observables only:
    /// `Σ_m P̆(m|s,a) Σ_a' ν̃(a'|s) P(s'|s,a',m)`.
    pub fn frontdoor_next_dist_adjusted(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        self.require(AdjustmentMode::Frontdoor)?;
        self.check_hsa(h, s, a)?;
        let marginal = self.check_support(h, s)?;
        let mut out = vec![0.0; self.shape.n_states];
        for (m, &pm) in self.itrans_row(h, s, a).iter().enumerate() {
            if pm == 0.0 {
                continue;
            }
            for (a2, &pa) in marginal.iter().enumerate() {
                axpy(&mut out, pm * pa, &self.mediator_conditional(h, s, a2, m)?);
            }
        }
        Ok(out)
    }

    fn mediated_next_dist(&self, h: usize, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.n_states];
        for (m, &pm) in self.itrans_row(h, s, a).iter().enumerate() {
            if pm > 0.0 {
                axpy(&mut out, pm, &self.mediator_effect_unchecked(h, s, m));
            }
        }
        out
    }

    // ---------------------------------------------------------------------
    // Either mode
    // ---------------------------------------------------------------------

    /// Interventional kernel `P(·|s, do(a))` in whichever variant this is.
    /// Needs no behavior support.
    pub fn interventional_next_dist(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        self.check_hsa(h, s, a)?;
        match self.dynamics {
            Dynamics::Backdoor { .. } => self.causal_next_dist(h, s, a),
            Dynamics::Frontdoor { .. } => Ok(self.mediated_next_dist(h, s, a)),
        }
    }

    /// Interventional mean reward `E[r | s, do(a)]`.
    pub fn interventional_reward(&self, h: usize, s: usize, a: usize) -> Result<f64> {
        match self.dynamics {
            Dynamics::Backdoor { .. } => self.causal_reward(h, s, a),
            Dynamics::Frontdoor { .. } => self.frontdoor_reward(h, s, a),
        }
    }

    /// Backward induction over the interventional dynamics. Ties go to the
    /// lowest action index.
    pub fn optimal_values(&self) -> OptimalValues {
        let Shape {
            horizon: hh,
            n_states: ns,
            n_actions: na,
            ..
        } = self.shape;
        let nm = self.n_intermediate();
        let mut v = vec![vec![0.0; ns]; hh + 1];
        let mut q = vec![vec![0.0; ns * na]; hh];
        let mut v_half = match self.dynamics {
            Dynamics::Frontdoor { .. } => Some(vec![vec![0.0; ns * nm]; hh]),
            Dynamics::Backdoor { .. } => None,
        };
        let mut actions = vec![vec![0; ns]; hh];
        for h in (0..hh).rev() {
            if let Some(vh) = v_half.as_mut() {
                for s in 0..ns {
                    for m in 0..nm {
                        vh[h][s * nm + m] = dot(&self.mediator_effect_unchecked(h, s, m), &v[h + 1]);
                    }
                }
            }
            for s in 0..ns {
                for a in 0..na {
                    q[h][s * na + a] = match &v_half {
                        None => {
                            self.causal_reward_unchecked(h, s, a)
                                + dot(&self.causal_next_unchecked(h, s, a), &v[h + 1])
                        }
                        Some(vh) => {
                            self.freward(h, s, a)
                                + dot(self.itrans_row(h, s, a), &vh[h][s * nm..(s + 1) * nm])
                        }
                    };
                }
                let row = &q[h][s * na..(s + 1) * na];
                let best = argmax_lowest(row);
                actions[h][s] = best;
                v[h][s] = row[best];
            }
        }
        OptimalValues {
            q,
            v,
            v_half,
            policy: Policy::Deterministic(actions),
        }
    }

    fn causal_reward_unchecked(&self, h: usize, s: usize, a: usize) -> f64 {
        self.conf(h, s)
            .iter()
            .enumerate()
            .map(|(w, &pw)| pw * self.reward_w(h, s, a, w))
            .sum()
    }

    fn causal_next_unchecked(&self, h: usize, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.n_states];
        for (w, &pw) in self.conf(h, s).iter().enumerate() {
            axpy(&mut out, pw, self.trans_row(h, s, a, w));
        }
        out
    }

    /// Exact `V^π_h(s)` for a confounder-independent policy; `horizon + 1`
    /// rows, the last one zero.
    pub fn evaluate_policy(&self, policy: &Policy) -> Result<Vec<Vec<f64>>> {
        let Shape {
            horizon: hh,
            n_states: ns,
            n_actions: na,
            ..
        } = self.shape;
        policy.check_shape(hh, ns, na)?;
        let mut v = vec![vec![0.0; ns]; hh + 1];
        for h in (0..hh).rev() {
            for s in 0..ns {
                let mut total = 0.0;
                for (a, pa) in policy.action_probs(h, s, na) {
                    if pa == 0.0 {
                        continue;
                    }
                    let (r, next) = self.backup_parts(h, s, a);
                    total += pa * (r + dot(&next, &v[h + 1]));
                }
                v[h][s] = total;
            }
        }
        Ok(v)
    }

    /// `(E[r|s,do(a)], P(·|s,do(a)))` without bounds checks.
    pub(crate) fn backup_parts(&self, h: usize, s: usize, a: usize) -> (f64, Vec<f64>) {
        match self.dynamics {
            Dynamics::Backdoor { .. } => (
                self.causal_reward_unchecked(h, s, a),
                self.causal_next_unchecked(h, s, a),
            ),
            Dynamics::Frontdoor { .. } => (self.freward(h, s, a), self.mediated_next_dist(h, s, a)),
        }
    }
}

fn check_row(out: &mut Vec<Violation>, location: String, row: &[f64]) {
    if let Some(bad) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        out.push(Violation {
            location: location.clone(),
            message: format!("invalid probability {bad}"),
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL || !sum.is_finite() {
        out.push(Violation {
            location,
            message: format!("row sum {sum}"),
        });
    }
}

fn check_reward(out: &mut Vec<Violation>, location: String, r: f64) {
    if !(0.0..=1.0).contains(&r) {
        out.push(Violation {
            location,
            message: format!("reward {r} outside [0, 1]"),
        });
    }
}

pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
