//! Enumeration oracles written directly against the raw tables.
#![allow(dead_code)]

use dovi::mdp::{ConfoundedMdp, Dynamics, Policy};

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Raw table lookups with explicit index arithmetic.
pub struct Raw<'a> {
    pub mdp: &'a ConfoundedMdp,
    pub h: usize,
    pub ns: usize,
    pub na: usize,
    pub nw: usize,
    pub nm: usize,
}

impl<'a> Raw<'a> {
    pub fn new(mdp: &'a ConfoundedMdp) -> Self {
        Self {
            mdp,
            h: mdp.horizon(),
            ns: mdp.n_states(),
            na: mdp.n_actions(),
            nw: mdp.n_confounders(),
            nm: mdp.n_intermediate(),
        }
    }

    pub fn conf(&self, h: usize, s: usize, w: usize) -> f64 {
        self.mdp.conf_table()[(h * self.ns + s) * self.nw + w]
    }

    pub fn nu(&self, h: usize, s: usize, w: usize, a: usize) -> f64 {
        self.mdp.behavior_table()[((h * self.ns + s) * self.nw + w) * self.na + a]
    }

    pub fn trans(&self, h: usize, s: usize, a: usize, w: usize, s2: usize) -> f64 {
        match self.mdp.dynamics() {
            Dynamics::Backdoor { trans, .. } => {
                trans[(((h * self.ns + s) * self.na + a) * self.nw + w) * self.ns + s2]
            }
            _ => panic!("backdoor table on a frontdoor instance"),
        }
    }

    pub fn reward(&self, h: usize, s: usize, a: usize, w: usize) -> f64 {
        match self.mdp.dynamics() {
            Dynamics::Backdoor { reward, .. } => reward[((h * self.ns + s) * self.na + a) * self.nw + w],
            Dynamics::Frontdoor { reward, .. } => reward[(h * self.ns + s) * self.na + a],
        }
    }

    pub fn itrans(&self, h: usize, s: usize, a: usize, m: usize) -> f64 {
        match self.mdp.dynamics() {
            Dynamics::Frontdoor { itrans, .. } => itrans[((h * self.ns + s) * self.na + a) * self.nm + m],
            _ => panic!("frontdoor table on a backdoor instance"),
        }
    }

    pub fn ftrans(&self, h: usize, s: usize, m: usize, w: usize, s2: usize) -> f64 {
        match self.mdp.dynamics() {
            Dynamics::Frontdoor { ftrans, .. } => {
                ftrans[(((h * self.ns + s) * self.nm + m) * self.nw + w) * self.ns + s2]
            }
            _ => panic!("frontdoor table on a backdoor instance"),
        }
    }

    /// `(w, a, s', probability, reward)` for the observational step from `s`.
    pub fn backdoor_joint(&self, h: usize, s: usize) -> Vec<(usize, usize, usize, f64, f64)> {
        let mut out = Vec::new();
        for w in 0..self.nw {
            for a in 0..self.na {
                for s2 in 0..self.ns {
                    let p = self.conf(h, s, w) * self.nu(h, s, w, a) * self.trans(h, s, a, w, s2);
                    out.push((w, a, s2, p, self.reward(h, s, a, w)));
                }
            }
        }
        out
    }

    /// `(w, a, m, s', probability)` for the observational frontdoor step.
    pub fn frontdoor_joint(&self, h: usize, s: usize) -> Vec<(usize, usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for w in 0..self.nw {
            for a in 0..self.na {
                for m in 0..self.nm {
                    for s2 in 0..self.ns {
                        let p = self.conf(h, s, w)
                            * self.nu(h, s, w, a)
                            * self.itrans(h, s, a, m)
                            * self.ftrans(h, s, m, w, s2);
                        out.push((w, a, m, s2, p));
                    }
                }
            }
        }
        out
    }

    /// `P(s' | s, do(a))` by enumerating the exogenous confounder (and the
    /// mediator in frontdoor mode) with the action forced.
    pub fn do_kernel(&self, h: usize, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.ns];
        for w in 0..self.nw {
            for s2 in 0..self.ns {
                out[s2] += match self.mdp.dynamics() {
                    Dynamics::Backdoor { .. } => self.conf(h, s, w) * self.trans(h, s, a, w, s2),
                    Dynamics::Frontdoor { .. } => (0..self.nm)
                        .map(|m| self.conf(h, s, w) * self.itrans(h, s, a, m) * self.ftrans(h, s, m, w, s2))
                        .sum(),
                };
            }
        }
        out
    }

    pub fn do_reward(&self, h: usize, s: usize, a: usize) -> f64 {
        (0..self.nw).map(|w| self.conf(h, s, w) * self.reward(h, s, a, w)).sum()
    }

    /// Observational `P(s' | s, a)` from the backdoor joint.
    pub fn conditional_kernel(&self, h: usize, s: usize, a: usize) -> Vec<f64> {
        let joint = self.backdoor_joint(h, s);
        let pa: f64 = joint.iter().filter(|j| j.1 == a).map(|j| j.3).sum();
        let mut out = vec![0.0; self.ns];
        for j in joint.iter().filter(|j| j.1 == a) {
            out[j.2] += j.3 / pa;
        }
        out
    }

    /// Observational `E[r | s, a]` from the backdoor joint.
    pub fn conditional_reward(&self, h: usize, s: usize, a: usize) -> f64 {
        let joint = self.backdoor_joint(h, s);
        let pa: f64 = joint.iter().filter(|j| j.1 == a).map(|j| j.3).sum();
        joint.iter().filter(|j| j.1 == a).map(|j| j.3 * j.4).sum::<f64>() / pa
    }

    /// Observational `P(s' | s, a, m)` from the frontdoor joint.
    pub fn frontdoor_conditional(&self, h: usize, s: usize, a: usize, m: usize) -> Vec<f64> {
        let joint = self.frontdoor_joint(h, s);
        let sel: Vec<_> = joint.iter().filter(|j| j.1 == a && j.2 == m).collect();
        let total: f64 = sel.iter().map(|j| j.4).sum();
        let mut out = vec![0.0; self.ns];
        for j in sel {
            out[j.3] += j.4 / total;
        }
        out
    }

    /// Value of a policy from `s` at step `h`, by expanding the full tree of
    /// actions, confounders, mediators and next states.
    pub fn tree_value(&self, policy: &Policy, h: usize, s: usize) -> f64 {
        if h == self.h {
            return 0.0;
        }
        match policy {
            Policy::Deterministic(t) => self.tree_value_at(policy, h, s, t[h][s]),
            Policy::Stochastic(t) => (0..self.na)
                .filter(|&a| t[h][s][a] > 0.0)
                .map(|a| t[h][s][a] * self.tree_value_at(policy, h, s, a))
                .sum(),
        }
    }

    fn tree_value_at(&self, policy: &Policy, h: usize, s: usize, a: usize) -> f64 {
        let mut total = 0.0;
        for w in 0..self.nw {
            let pw = self.conf(h, s, w);
            if pw == 0.0 {
                continue;
            }
            match self.mdp.dynamics() {
                Dynamics::Backdoor { .. } => {
                    total += pw * self.reward(h, s, a, w);
                    for s2 in 0..self.ns {
                        let p = self.trans(h, s, a, w, s2);
                        if p > 0.0 {
                            total += pw * p * self.tree_value(policy, h + 1, s2);
                        }
                    }
                }
                Dynamics::Frontdoor { .. } => {
                    total += pw * self.reward(h, s, a, w);
                    for m in 0..self.nm {
                        for s2 in 0..self.ns {
                            let p = self.itrans(h, s, a, m) * self.ftrans(h, s, m, w, s2);
                            if p > 0.0 {
                                total += pw * p * self.tree_value(policy, h + 1, s2);
                            }
                        }
                    }
                }
            }
        }
        total
    }
}
