use crate::error::{Error, Result};

/// Confounder-independent policy, indexed `[h][s]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    /// `π_h(s)` action table.
    Deterministic(Vec<Vec<usize>>),
    /// `π_h(·|s)` distribution table.
    Stochastic(Vec<Vec<Vec<f64>>>),
}

impl Policy {
    pub fn uniform(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        let row = vec![1.0 / n_actions as f64; n_actions];
        Policy::Stochastic(vec![vec![row; n_states]; horizon])
    }

    /// Every deterministic policy on the given sizes, in lexicographic order
    /// of the flattened `[h][s]` action table. Callers bound the count.
    pub fn enumerate_deterministic(horizon: usize, n_states: usize, n_actions: usize) -> Vec<Policy> {
        let slots = horizon * n_states;
        let total = n_actions.pow(slots as u32);
        (0..total)
            .map(|mut code| {
                let mut table = vec![vec![0; n_states]; horizon];
                for slot in (0..slots).rev() {
                    table[slot / n_states][slot % n_states] = code % n_actions;
                    code /= n_actions;
                }
                Policy::Deterministic(table)
            })
            .collect()
    }

    pub fn action(&self, h: usize, s: usize) -> Option<usize> {
        match self {
            Policy::Deterministic(t) => Some(t[h][s]),
            Policy::Stochastic(_) => None,
        }
    }

    pub(crate) fn action_probs(&self, h: usize, s: usize, n_actions: usize) -> Vec<(usize, f64)> {
        match self {
            Policy::Deterministic(t) => vec![(t[h][s], 1.0)],
            Policy::Stochastic(t) => (0..n_actions).map(|a| (a, t[h][s][a])).collect(),
        }
    }

    pub(crate) fn check_shape(&self, horizon: usize, n_states: usize, n_actions: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Shape(msg));
        match self {
            Policy::Deterministic(t) => {
                if t.len() != horizon || t.iter().any(|row| row.len() != n_states) {
                    return bad(format!("policy table must be {horizon}x{n_states}"));
                }
                if let Some(a) = t.iter().flatten().find(|&&a| a >= n_actions) {
                    return Err(Error::IndexOutOfRange {
                        what: "action",
                        index: *a,
                        bound: n_actions,
                    });
                }
            }
            Policy::Stochastic(t) => {
                if t.len() != horizon
                    || t.iter()
                        .any(|row| row.len() != n_states || row.iter().any(|p| p.len() != n_actions))
                {
                    return bad(format!("policy table must be {horizon}x{n_states}x{n_actions}"));
                }
            }
        }
        Ok(())
    }
}
