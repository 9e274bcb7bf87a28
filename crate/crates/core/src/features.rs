//! Linear embeddings of tabular confounded MDPs.
//!
//! The canonical embedding is one-hot, so every linearity identity the
//! algorithms rely on holds exactly:
//!
//! * backdoor: `φ_h(s,a,u)` is one-hot over `(s,a,u)` with `d = S·A·U`,
//!   `μ_h(s')[(s,a,u)] = P(s'|s,a,u)`, `θ_h[(s,a,u)] = E[r|s,a,u]`, and the
//!   adjusted feature `ψ_h(s,a) = Σ_u P(u|s) φ_h(s,a,u)`;
//! * frontdoor: `ρ_h(s,m,w)` is one-hot over `(s,m,w)` (`d₁ = S·M·W`) with
//!   `μ_h(s')[(s,m,w)] = P(s'|s,m,w)`; `φ_h(s,a,m)` and `ψ_h(s,m)` are the
//!   behavior-weighted and plain `w`-averages of `ρ`; `γ_h(s,a)` is one-hot
//!   over `(s,a)` (`d₂ = S·A`) with `μ̄_h(m)[(s,a)] = P̆(m|s,a)` and
//!   `θ_h[(s,a)] = r_h(s,a)`.
//!
//! The confounder only ever appears inside expectations; learners receive
//! `φ`, `ψ` and `γ`, never `ρ` evaluated at a realized `w`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{dot, AdjustmentMode, ConfoundedMdp};

/// Tolerance for the exact linearity identities.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BackdoorFeatures {
    pub dim: usize,
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_observed: usize,
    /// `[h][(s·A + a)·U + u]`
    pub phi: Vec<Vec<Vec<f64>>>,
    /// `[h][s·A + a]`
    pub psi: Vec<Vec<Vec<f64>>>,
    /// `[h][s']`
    pub mu: Vec<Vec<Vec<f64>>>,
    /// `[h]`
    pub theta: Vec<Vec<f64>>,
}

impl BackdoorFeatures {
    pub fn index(&self, s: usize, a: usize, u: usize) -> usize {
        (s * self.n_actions + a) * self.n_observed + u
    }

    pub fn phi(&self, h: usize, s: usize, a: usize, u: usize) -> &[f64] {
        &self.phi[h][self.index(s, a, u)]
    }

    pub fn psi(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.psi[h][s * self.n_actions + a]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrontdoorFeatures {
    /// Stage-1 dimension `S·M·W`.
    pub dim_mediator: usize,
    /// Stage-2 dimension `S·A`.
    pub dim_action: usize,
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_intermediate: usize,
    pub n_confounders: usize,
    /// `[h][(s·M + m)·W + w]`
    pub rho: Vec<Vec<Vec<f64>>>,
    /// `[h][(s·A + a)·M + m]`
    pub phi: Vec<Vec<Vec<f64>>>,
    /// `[h][s·M + m]`
    pub psi: Vec<Vec<Vec<f64>>>,
    /// `[h][s·A + a]`
    pub gamma: Vec<Vec<Vec<f64>>>,
    /// `[h][s']`, stage-1 space.
    pub mu: Vec<Vec<Vec<f64>>>,
    /// `[h][m]`, stage-2 space.
    pub mubar: Vec<Vec<Vec<f64>>>,
    /// `[h]`, stage-2 space.
    pub theta: Vec<Vec<f64>>,
}

impl FrontdoorFeatures {
    pub fn mediator_index(&self, s: usize, m: usize, w: usize) -> usize {
        (s * self.n_intermediate + m) * self.n_confounders + w
    }

    pub fn action_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn rho(&self, h: usize, s: usize, m: usize, w: usize) -> &[f64] {
        &self.rho[h][self.mediator_index(s, m, w)]
    }

    pub fn phi(&self, h: usize, s: usize, a: usize, m: usize) -> &[f64] {
        &self.phi[h][(s * self.n_actions + a) * self.n_intermediate + m]
    }

    pub fn psi(&self, h: usize, s: usize, m: usize) -> &[f64] {
        &self.psi[h][s * self.n_intermediate + m]
    }

    pub fn gamma(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.gamma[h][self.action_index(s, a)]
    }

    /// Common dimension used for the exploration scale and Δ normalization.
    pub fn dim(&self) -> usize {
        self.dim_mediator.max(self.dim_action)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMap {
    Backdoor(BackdoorFeatures),
    Frontdoor(FrontdoorFeatures),
}

impl FeatureMap {
    pub fn build(mdp: &ConfoundedMdp) -> Result<Self> {
        match mdp.mode() {
            AdjustmentMode::Backdoor => build_backdoor_features(mdp).map(FeatureMap::Backdoor),
            AdjustmentMode::Frontdoor => build_frontdoor_features(mdp).map(FeatureMap::Frontdoor),
        }
    }

    pub fn mode(&self) -> AdjustmentMode {
        match self {
            FeatureMap::Backdoor(_) => AdjustmentMode::Backdoor,
            FeatureMap::Frontdoor(_) => AdjustmentMode::Frontdoor,
        }
    }

    /// Flat text dump; see [`render_dump`](Self::render_dump).
    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render_dump()).map_err(|e| Error::io(path, e))
    }

    /// One line per vector, `<name> <indices...> : <values...>`, in the
    /// index orders documented on the feature structs. Values use shortest
    /// round-trip formatting.
    pub fn render_dump(&self) -> String {
        let mut out = String::new();
        match self {
            FeatureMap::Backdoor(f) => {
                let _ = writeln!(out, "# feature map: backdoor");
                let _ = writeln!(out, "dim = {}", f.dim);
                let _ = writeln!(out, "horizon = {}", f.horizon);
                for h in 0..f.horizon {
                    for s in 0..f.n_states {
                        for a in 0..f.n_actions {
                            for u in 0..f.n_observed {
                                dump_line(&mut out, "phi", &[h, s, a, u], f.phi(h, s, a, u));
                            }
                        }
                    }
                    for s in 0..f.n_states {
                        for a in 0..f.n_actions {
                            dump_line(&mut out, "psi", &[h, s, a], f.psi(h, s, a));
                        }
                    }
                    for (s2, mu) in f.mu[h].iter().enumerate() {
                        dump_line(&mut out, "mu", &[h, s2], mu);
                    }
                    dump_line(&mut out, "theta", &[h], &f.theta[h]);
                }
            }
            FeatureMap::Frontdoor(f) => {
                let _ = writeln!(out, "# feature map: frontdoor");
                let _ = writeln!(out, "dim_mediator = {}", f.dim_mediator);
                let _ = writeln!(out, "dim_action = {}", f.dim_action);
                let _ = writeln!(out, "horizon = {}", f.horizon);
                for h in 0..f.horizon {
                    for s in 0..f.n_states {
                        for m in 0..f.n_intermediate {
                            for w in 0..f.n_confounders {
                                dump_line(&mut out, "rho", &[h, s, m, w], f.rho(h, s, m, w));
                            }
                        }
                    }
                    for s in 0..f.n_states {
                        for a in 0..f.n_actions {
                            for m in 0..f.n_intermediate {
                                dump_line(&mut out, "phi", &[h, s, a, m], f.phi(h, s, a, m));
                            }
                        }
                    }
                    for s in 0..f.n_states {
                        for m in 0..f.n_intermediate {
                            dump_line(&mut out, "psi", &[h, s, m], f.psi(h, s, m));
                        }
                    }
                    for s in 0..f.n_states {
                        for a in 0..f.n_actions {
                            dump_line(&mut out, "gamma", &[h, s, a], f.gamma(h, s, a));
                        }
                    }
                    for (s2, mu) in f.mu[h].iter().enumerate() {
                        dump_line(&mut out, "mu", &[h, s2], mu);
                    }
                    for (m, mu) in f.mubar[h].iter().enumerate() {
                        dump_line(&mut out, "mubar", &[h, m], mu);
                    }
                    dump_line(&mut out, "theta", &[h], &f.theta[h]);
                }
            }
        }
        out
    }
}

pub(crate) fn dump_line(out: &mut String, name: &str, index: &[usize], values: &[f64]) {
    let idx: Vec<String> = index.iter().map(usize::to_string).collect();
    let vals: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
    let _ = writeln!(out, "{name} {} : {}", idx.join(" "), vals.join(" "));
}

fn one_hot(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

pub fn build_backdoor_features(mdp: &ConfoundedMdp) -> Result<BackdoorFeatures> {
    if mdp.mode() != AdjustmentMode::Backdoor {
        return Err(Error::ModeMismatch {
            expected: AdjustmentMode::Backdoor,
            found: mdp.mode(),
        });
    }
    let (hh, ns, na, nu) = (mdp.horizon(), mdp.n_states(), mdp.n_actions(), mdp.n_observed());
    let dim = ns * na * nu;
    let mut f = BackdoorFeatures {
        dim,
        horizon: hh,
        n_states: ns,
        n_actions: na,
        n_observed: nu,
        phi: vec![(0..dim).map(|i| one_hot(dim, i)).collect(); hh],
        psi: Vec::with_capacity(hh),
        mu: Vec::with_capacity(hh),
        theta: Vec::with_capacity(hh),
    };
    for h in 0..hh {
        let mut psi = vec![vec![0.0; dim]; ns * na];
        let mut mu = vec![vec![0.0; dim]; ns];
        let mut theta = vec![0.0; dim];
        for s in 0..ns {
            let pu = mdp.observed_marginal(h, s);
            for a in 0..na {
                for u in 0..nu {
                    let idx = f.index(s, a, u);
                    psi[s * na + a][idx] = pu[u];
                    for (s2, p) in mdp.observed_next_dist(h, s, a, u).into_iter().enumerate() {
                        mu[s2][idx] = p;
                    }
                    theta[idx] = mdp.observed_reward(h, s, a, u);
                }
            }
        }
        f.psi.push(psi);
        f.mu.push(mu);
        f.theta.push(theta);
    }
    Ok(f)
}

pub fn build_frontdoor_features(mdp: &ConfoundedMdp) -> Result<FrontdoorFeatures> {
    if mdp.mode() != AdjustmentMode::Frontdoor {
        return Err(Error::ModeMismatch {
            expected: AdjustmentMode::Frontdoor,
            found: mdp.mode(),
        });
    }
    let (hh, ns, na, nm, nw) = (
        mdp.horizon(),
        mdp.n_states(),
        mdp.n_actions(),
        mdp.n_intermediate(),
        mdp.n_confounders(),
    );
    let d1 = ns * nm * nw;
    let d2 = ns * na;
    let mut f = FrontdoorFeatures {
        dim_mediator: d1,
        dim_action: d2,
        horizon: hh,
        n_states: ns,
        n_actions: na,
        n_intermediate: nm,
        n_confounders: nw,
        rho: vec![(0..d1).map(|i| one_hot(d1, i)).collect(); hh],
        phi: Vec::with_capacity(hh),
        psi: Vec::with_capacity(hh),
        gamma: vec![(0..d2).map(|i| one_hot(d2, i)).collect(); hh],
        mu: Vec::with_capacity(hh),
        mubar: Vec::with_capacity(hh),
        theta: Vec::with_capacity(hh),
    };
    for h in 0..hh {
        let mut phi = vec![vec![0.0; d1]; ns * na * nm];
        let mut psi = vec![vec![0.0; d1]; ns * nm];
        let mut mu = vec![vec![0.0; d1]; ns];
        let mut mubar = vec![vec![0.0; d2]; nm];
        let mut theta = vec![0.0; d2];
        for s in 0..ns {
            let conf = mdp.conf(h, s);
            let marginal = mdp.behavior_marginal(h, s);
            if let Some(a) = marginal.iter().position(|&p| p <= 0.0) {
                return Err(Error::UnsupportedAction {
                    step: h,
                    state: s,
                    action: a,
                });
            }
            for m in 0..nm {
                for w in 0..nw {
                    let idx = f.mediator_index(s, m, w);
                    psi[s * nm + m][idx] = conf[w];
                    for a in 0..na {
                        phi[(s * na + a) * nm + m][idx] =
                            conf[w] * mdp.behavior(h, s, w)[a] / marginal[a];
                    }
                }
            }
            for a in 0..na {
                let idx = f.action_index(s, a);
                for (m, p) in mdp.intermediate_dist(h, s, a)?.into_iter().enumerate() {
                    mubar[m][idx] = p;
                }
                theta[idx] = mdp.frontdoor_reward(h, s, a)?;
            }
        }
        for s in 0..ns {
            for m in 0..nm {
                for w in 0..nw {
                    let idx = f.mediator_index(s, m, w);
                    let row = mdp.mediator_kernel(h, s, m, w);
                    for (s2, p) in row.iter().enumerate() {
                        mu[s2][idx] = *p;
                    }
                }
            }
        }
        f.phi.push(phi);
        f.psi.push(psi);
        f.mu.push(mu);
        f.mubar.push(mubar);
        f.theta.push(theta);
    }
    Ok(f)
}

/// Worst residual of one identity family.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityCheck {
    pub identity: &'static str,
    pub max_residual: f64,
    /// Tuple attaining the maximum, e.g. `h=0 s=1 a=0 u=1 s'=0`.
    pub worst: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RealizabilityReport {
    pub identities: Vec<IdentityCheck>,
    /// Largest feature ℓ₂ norm over all one-hot and adjusted features.
    pub max_feature_norm: f64,
    /// `Σ_i ‖μ_{i,h}‖₁²` per step (stage-1 space in frontdoor mode).
    pub mu_mass: Vec<f64>,
    /// `Σ_i ‖μ̄_{i,h}‖₁²` per step (frontdoor only).
    pub mubar_mass: Vec<f64>,
    /// Largest `‖θ_h‖₂`.
    pub max_theta_norm: f64,
    /// Dimension the mass bounds are compared with.
    pub dim: usize,
}

impl RealizabilityReport {
    pub fn max_residual(&self) -> f64 {
        self.identities
            .iter()
            .map(|c| c.max_residual)
            .fold(0.0, f64::max)
    }

    /// Identity families whose residual exceeds `tol`.
    pub fn violations(&self, tol: f64) -> Vec<&IdentityCheck> {
        self.identities
            .iter()
            .filter(|c| c.max_residual > tol)
            .collect()
    }

    /// Whether `Σ‖μ_i‖₁² ≤ d` and `‖θ‖₂ ≤ √d` hold at every step. Reported,
    /// never enforced.
    pub fn norm_bounds_hold(&self) -> bool {
        let d = self.dim as f64;
        self.max_feature_norm <= 1.0 + IDENTITY_TOL
            && self.mu_mass.iter().chain(&self.mubar_mass).all(|&m| m <= d + 1e-9)
            && self.max_theta_norm <= d.sqrt() + 1e-12
    }
}

struct Tracker {
    identity: &'static str,
    max: f64,
    worst: String,
}

impl Tracker {
    fn new(identity: &'static str) -> Self {
        Self {
            identity,
            max: 0.0,
            worst: String::new(),
        }
    }

    fn observe(&mut self, lhs: f64, rhs: f64, tuple: impl FnOnce() -> String) {
        let r = (lhs - rhs).abs();
        if r > self.max || (r.is_nan() && !self.max.is_nan()) {
            self.max = r;
            self.worst = tuple();
        }
    }

    fn finish(self) -> IdentityCheck {
        IdentityCheck {
            identity: self.identity,
            max_residual: self.max,
            worst: self.worst,
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn l1_mass(rows: &[Vec<f64>], dim: usize) -> f64 {
    (0..dim)
        .map(|i| rows.iter().map(|r| r[i].abs()).sum::<f64>().powi(2))
        .sum()
}

/// Checks every linearity identity over all index tuples against the exact
/// quantities of the instance, including linearity of `Q*` (and `V*_{h+½}`
/// in frontdoor mode) in the adjusted features.
pub fn check_realizability(mdp: &ConfoundedMdp, fm: &FeatureMap) -> Result<RealizabilityReport> {
    if mdp.mode() != fm.mode() {
        return Err(Error::ModeMismatch {
            expected: fm.mode(),
            found: mdp.mode(),
        });
    }
    let opt = mdp.optimal_values();
    match fm {
        FeatureMap::Backdoor(f) => check_backdoor(mdp, f, &opt.v, &opt.q),
        FeatureMap::Frontdoor(f) => check_frontdoor(
            mdp,
            f,
            &opt.v,
            opt.v_half.as_ref().expect("frontdoor values"),
            &opt.q,
        ),
    }
}

fn check_backdoor(
    mdp: &ConfoundedMdp,
    f: &BackdoorFeatures,
    v: &[Vec<f64>],
    q: &[Vec<f64>],
) -> Result<RealizabilityReport> {
    let mut kernel = Tracker::new("kernel <phi, mu> = P(s'|s,a,u)");
    let mut causal = Tracker::new("causal kernel <psi, mu> = P(s'|s,do(a))");
    let mut reward = Tracker::new("reward <phi, theta> = E[r|s,a,u]");
    let mut causal_reward = Tracker::new("causal reward <psi, theta> = E[r|s,do(a)]");
    let mut qlin = Tracker::new("Q* linear in psi");
    let mut report = RealizabilityReport {
        dim: f.dim,
        ..Default::default()
    };
    for h in 0..f.horizon {
        let mut w_star = f.theta[h].clone();
        for (s2, mu) in f.mu[h].iter().enumerate() {
            crate::mdp::axpy(&mut w_star, v[h + 1][s2], mu);
        }
        for s in 0..f.n_states {
            for a in 0..f.n_actions {
                for u in 0..f.n_observed {
                    let phi = f.phi(h, s, a, u);
                    report.max_feature_norm = report.max_feature_norm.max(norm(phi));
                    let truth = mdp.observed_next_dist(h, s, a, u);
                    for (s2, p) in truth.iter().enumerate() {
                        kernel.observe(dot(phi, &f.mu[h][s2]), *p, || {
                            format!("h={h} s={s} a={a} u={u} s'={s2}")
                        });
                    }
                    reward.observe(dot(phi, &f.theta[h]), mdp.observed_reward(h, s, a, u), || {
                        format!("h={h} s={s} a={a} u={u}")
                    });
                }
                let psi = f.psi(h, s, a);
                report.max_feature_norm = report.max_feature_norm.max(norm(psi));
                let truth = mdp.causal_next_dist(h, s, a)?;
                for (s2, p) in truth.iter().enumerate() {
                    causal.observe(dot(psi, &f.mu[h][s2]), *p, || {
                        format!("h={h} s={s} a={a} s'={s2}")
                    });
                }
                causal_reward.observe(dot(psi, &f.theta[h]), mdp.causal_reward(h, s, a)?, || {
                    format!("h={h} s={s} a={a}")
                });
                qlin.observe(dot(psi, &w_star), q[h][s * f.n_actions + a], || {
                    format!("h={h} s={s} a={a}")
                });
            }
        }
        report.mu_mass.push(l1_mass(&f.mu[h], f.dim));
        report.max_theta_norm = report.max_theta_norm.max(norm(&f.theta[h]));
    }
    report.identities = vec![
        kernel.finish(),
        causal.finish(),
        reward.finish(),
        causal_reward.finish(),
        qlin.finish(),
    ];
    Ok(report)
}

fn check_frontdoor(
    mdp: &ConfoundedMdp,
    f: &FrontdoorFeatures,
    v: &[Vec<f64>],
    v_half: &[Vec<f64>],
    q: &[Vec<f64>],
) -> Result<RealizabilityReport> {
    let mut mediator = Tracker::new("mediator kernel <rho, mu> = P(s'|s,m,w)");
    let mut conditional = Tracker::new("conditional kernel <phi, mu> = P(s'|s,a,m)");
    let mut effect = Tracker::new("mediator effect <psi, mu> = P(s'|s,do(m))");
    let mut intermediate = Tracker::new("intermediate <gamma, mubar> = P(m|s,a)");
    let mut reward = Tracker::new("reward <gamma, theta> = r(s,a)");
    let mut vlin = Tracker::new("V*_{h+1/2} linear in psi");
    let mut qlin = Tracker::new("Q* linear in gamma");
    let (ns, na, nm, nw) = (f.n_states, f.n_actions, f.n_intermediate, f.n_confounders);
    let mut report = RealizabilityReport {
        dim: f.dim(),
        ..Default::default()
    };
    for h in 0..f.horizon {
        let mut w1 = vec![0.0; f.dim_mediator];
        for (s2, mu) in f.mu[h].iter().enumerate() {
            crate::mdp::axpy(&mut w1, v[h + 1][s2], mu);
        }
        let mut w2 = f.theta[h].clone();
        for s in 0..ns {
            for a in 0..na {
                let idx = f.action_index(s, a);
                for m in 0..nm {
                    w2[idx] += f.mubar[h][m][idx] * v_half[h][s * nm + m];
                }
            }
        }
        for s in 0..ns {
            for m in 0..nm {
                for w in 0..nw {
                    let rho = f.rho(h, s, m, w);
                    report.max_feature_norm = report.max_feature_norm.max(norm(rho));
                    for (s2, p) in mdp.mediator_kernel(h, s, m, w).iter().enumerate() {
                        mediator.observe(dot(rho, &f.mu[h][s2]), *p, || {
                            format!("h={h} s={s} m={m} w={w} s'={s2}")
                        });
                    }
                }
                let psi = f.psi(h, s, m);
                report.max_feature_norm = report.max_feature_norm.max(norm(psi));
                for (s2, p) in mdp.mediator_effect(h, s, m)?.iter().enumerate() {
                    effect.observe(dot(psi, &f.mu[h][s2]), *p, || {
                        format!("h={h} s={s} m={m} s'={s2}")
                    });
                }
                vlin.observe(dot(psi, &w1), v_half[h][s * nm + m], || {
                    format!("h={h} s={s} m={m}")
                });
                for a in 0..na {
                    let phi = f.phi(h, s, a, m);
                    report.max_feature_norm = report.max_feature_norm.max(norm(phi));
                    for (s2, p) in mdp.mediator_conditional(h, s, a, m)?.iter().enumerate() {
                        conditional.observe(dot(phi, &f.mu[h][s2]), *p, || {
                            format!("h={h} s={s} a={a} m={m} s'={s2}")
                        });
                    }
                }
            }
            for a in 0..na {
                let gamma = f.gamma(h, s, a);
                report.max_feature_norm = report.max_feature_norm.max(norm(gamma));
                for (m, p) in mdp.intermediate_dist(h, s, a)?.iter().enumerate() {
                    intermediate.observe(dot(gamma, &f.mubar[h][m]), *p, || {
                        format!("h={h} s={s} a={a} m={m}")
                    });
                }
                reward.observe(dot(gamma, &f.theta[h]), mdp.frontdoor_reward(h, s, a)?, || {
                    format!("h={h} s={s} a={a}")
                });
                qlin.observe(dot(gamma, &w2), q[h][s * na + a], || format!("h={h} s={s} a={a}"));
            }
        }
        report.mu_mass.push(l1_mass(&f.mu[h], f.dim_mediator));
        report.mubar_mass.push(l1_mass(&f.mubar[h], f.dim_action));
        report.max_theta_norm = report.max_theta_norm.max(norm(&f.theta[h]));
    }
    report.identities = vec![
        mediator.finish(),
        conditional.finish(),
        effect.finish(),
        intermediate.finish(),
        reward.finish(),
        vlin.finish(),
        qlin.finish(),
    ];
    Ok(report)
}
