//! Fixed instances used by the examples, tests and sweeps.
//!
//! Every backdoor instance observes its confounder fully unless noted, and
//! every table is filled from a closure over its index tuple in the same
//! order as the instance file format.

use crate::error::{Error, Result};
use crate::mdp::{ConfoundedMdp, Shape};

pub struct GalleryEntry {
    pub name: &'static str,
    pub summary: &'static str,
}

pub const GALLERY: &[GalleryEntry] = &[
    GalleryEntry {
        name: "TRAP-2",
        summary: "one step, two arms, reward 1 iff the arm matches a hidden fair coin; behavior matches it 90% of the time",
    },
    GalleryEntry {
        name: "TRAP-2-H2",
        summary: "two steps; the confounded arm looks best observationally but leads to a dead state half the time",
    },
    GalleryEntry {
        name: "BD-2",
        summary: "two steps, two states, two arms, binary observed confounder with small action gaps",
    },
    GalleryEntry {
        name: "BD-NOCONF",
        summary: "BD-2 with a behavior policy that ignores the confounder",
    },
    GalleryEntry {
        name: "BD-COLLAPSE",
        summary: "four confounder values observed through two classes; behavior depends only on the class",
    },
    GalleryEntry {
        name: "BD-EQ",
        summary: "BD-2 dynamics with confounder-free rewards; backdoor twin of FD-EQ",
    },
    GalleryEntry {
        name: "CH-2",
        summary: "two-step chain with a confounded shortcut action",
    },
    GalleryEntry {
        name: "FD-2",
        summary: "two steps, two states, two arms, binary mediator and binary hidden confounder",
    },
    GalleryEntry {
        name: "FD-EQ",
        summary: "BD-EQ routed through a mediator that copies the action",
    },
    GalleryEntry {
        name: "CANON(d,H)",
        summary: "one state, d arms, no confounding; adjusted features are the standard basis",
    },
];

/// Looks up an instance by name. `CANON(d,H)` accepts any positive `d`, `H`.
pub fn gallery(name: &str) -> Result<ConfoundedMdp> {
    let mdp = match name {
        "TRAP-2" => trap2(),
        "TRAP-2-H2" => trap2_h2(),
        "BD-2" => bd2(Behavior::Confounded, RewardKind::Confounded),
        "BD-NOCONF" => bd2(Behavior::Blind, RewardKind::Confounded),
        "BD-EQ" => bd2(Behavior::Confounded, RewardKind::Averaged),
        "BD-COLLAPSE" => bd_collapse(),
        "CH-2" => ch2(),
        "FD-2" => fd2(),
        "FD-EQ" => fd_eq(),
        other => match parse_canon(other) {
            Some((d, h)) => canon(d, h),
            None => return Err(Error::UnknownInstance(other.to_string())),
        },
    }?;
    Ok(mdp.with_name(name))
}

/// Names accepted by [`gallery`], with `CANON(4,2)` standing in for the family.
pub fn names() -> Vec<String> {
    GALLERY
        .iter()
        .map(|e| {
            if e.name.starts_with("CANON") {
                "CANON(4,2)".to_string()
            } else {
                e.name.to_string()
            }
        })
        .collect()
}

fn parse_canon(name: &str) -> Option<(usize, usize)> {
    let inner = name.strip_prefix("CANON(")?.strip_suffix(')')?;
    let (d, h) = inner.split_once(',')?;
    let d = d.trim().parse().ok()?;
    let h = h.trim().parse().ok()?;
    (d > 0 && h > 0).then_some((d, h))
}

/// Row-major table over `dims`, filled by `f(index tuple)`.
fn table(dims: &[usize], f: impl Fn(&[usize]) -> f64) -> Vec<f64> {
    let total: usize = dims.iter().product();
    let mut idx = vec![0; dims.len()];
    let mut out = Vec::with_capacity(total);
    for _ in 0..total {
        out.push(f(&idx));
        for pos in (0..dims.len()).rev() {
            idx[pos] += 1;
            if idx[pos] < dims[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
    out
}

/// Two-point distribution with mass `p` on outcome 1.
fn bernoulli(outcome: usize, p: f64) -> f64 {
    if outcome == 1 {
        p
    } else {
        1.0 - p
    }
}

fn point(outcome: usize, target: usize) -> f64 {
    if outcome == target {
        1.0
    } else {
        0.0
    }
}

fn trap2() -> Result<ConfoundedMdp> {
    let shape = Shape {
        horizon: 1,
        n_states: 1,
        n_actions: 2,
        n_confounders: 2,
    };
    ConfoundedMdp::backdoor(
        "TRAP-2",
        shape,
        vec![0, 1],
        vec![1.0],
        vec![0.5; 2],
        table(&[1, 1, 2, 2], |i| if i[2] == i[3] { 0.9 } else { 0.1 }),
        vec![1.0; 4],
        table(&[1, 1, 2, 2], |i| point(i[2], i[3])),
    )
}

// Step 0 from state 0: arm 0 pays 0.6 and keeps the agent in state 0; arm 1
// pays 1 iff w = 1 and moves to the dead state 1 iff w = 0. Step 1 pays 1 in
// state 0 and nothing in state 1. Causally arm 0 is worth 1.6 and arm 1 only
// 1.0, but conditioned on the behavior choosing arm 1 it looks worth 1.8.
fn trap2_h2() -> Result<ConfoundedMdp> {
    let shape = Shape {
        horizon: 2,
        n_states: 2,
        n_actions: 2,
        n_confounders: 2,
    };
    let trans = table(&[2, 2, 2, 2, 2], |i| {
        let (h, s, a, w, s2) = (i[0], i[1], i[2], i[3], i[4]);
        let target = match (h, s, a) {
            (0, 0, 0) => 0,
            (0, 0, 1) => 1 - w,
            _ => s,
        };
        point(s2, target)
    });
    let reward = table(&[2, 2, 2, 2], |i| {
        let (h, s, a, w) = (i[0], i[1], i[2], i[3]);
        match (h, s, a) {
            (0, 0, 0) => 0.6,
            (0, 0, 1) => point(w, 1),
            (0, 1, _) => 0.0,
            _ => point(s, 0),
        }
    });
    ConfoundedMdp::backdoor(
        "TRAP-2-H2",
        shape,
        vec![0, 1],
        vec![1.0, 0.0],
        vec![0.5; 8],
        table(&[2, 2, 2, 2], |i| if i[2] == i[3] { 0.9 } else { 0.1 }),
        trans,
        reward,
    )
}

#[derive(Clone, Copy, PartialEq)]
enum Behavior {
    Confounded,
    Blind,
}

#[derive(Clone, Copy, PartialEq)]
enum RewardKind {
    Confounded,
    /// `r(s, a, w)` replaced by its `P̃`-average, so it no longer depends on `w`.
    Averaged,
}

const BD2_CONF1: [f64; 2] = [0.5, 0.3];
// P(a = 0 | s, w)
const BD2_BEHAVIOR0: [[f64; 2]; 2] = [[0.9, 0.1], [0.8, 0.3]];
// P(s' = 1 | s, a, w)
const BD2_TRANS1: [[[f64; 2]; 2]; 2] = [[[0.2, 0.8], [0.6, 0.3]], [[0.7, 0.4], [0.3, 0.9]]];
const BD2_REWARD: [[[f64; 2]; 2]; 2] = [[[0.1, 0.5], [0.6, 0.2]], [[0.5, 0.9], [0.8, 0.4]]];

fn bd2_causal_reward(s: usize, a: usize) -> f64 {
    let p1 = BD2_CONF1[s];
    (1.0 - p1) * BD2_REWARD[s][a][0] + p1 * BD2_REWARD[s][a][1]
}

fn bd2(behavior: Behavior, reward: RewardKind) -> Result<ConfoundedMdp> {
    let shape = Shape {
        horizon: 2,
        n_states: 2,
        n_actions: 2,
        n_confounders: 2,
    };
    ConfoundedMdp::backdoor(
        "BD-2",
        shape,
        vec![0, 1],
        vec![0.5, 0.5],
        table(&[2, 2, 2], |i| bernoulli(i[2], BD2_CONF1[i[1]])),
        table(&[2, 2, 2, 2], |i| {
            let p0 = match behavior {
                Behavior::Confounded => BD2_BEHAVIOR0[i[1]][i[2]],
                Behavior::Blind => 0.5,
            };
            bernoulli(1 - i[3], p0)
        }),
        table(&[2, 2, 2, 2, 2], |i| bernoulli(i[4], BD2_TRANS1[i[1]][i[2]][i[3]])),
        table(&[2, 2, 2, 2], |i| match reward {
            RewardKind::Confounded => BD2_REWARD[i[1]][i[2]][i[3]],
            RewardKind::Averaged => bd2_causal_reward(i[1], i[2]),
        }),
    )
}

// Confounders {0, 1} are observed as class 0 and {2, 3} as class 1. The
// behavior policy sees only the class; transitions and rewards depend on the
// full confounder.
fn bd_collapse() -> Result<ConfoundedMdp> {
    let shape = Shape {
        horizon: 2,
        n_states: 2,
        n_actions: 3,
        n_confounders: 4,
    };
    let conf = [[0.1, 0.2, 0.3, 0.4], [0.25, 0.25, 0.4, 0.1]];
    let behavior = [[[0.6, 0.3, 0.1], [0.1, 0.2, 0.7]], [[0.2, 0.5, 0.3], [0.5, 0.25, 0.25]]];
    ConfoundedMdp::backdoor(
        "BD-COLLAPSE",
        shape,
        vec![0, 0, 1, 1],
        vec![0.7, 0.3],
        table(&[2, 2, 4], |i| conf[i[1]][i[2]]),
        table(&[2, 2, 4, 3], |i| behavior[i[1]][i[2] / 2][i[3]]),
        table(&[2, 2, 3, 4, 2], |i| {
            let p1 = 0.1 + 0.2 * i[3] as f64 + 0.05 * (i[1] + i[2]) as f64 - 0.03 * i[0] as f64;
            bernoulli(i[4], p1)
        }),
        table(&[2, 2, 3, 4], |i| {
            ((i[2] + 1) * (i[3] + 2) + i[1] + i[0]) as f64 % 7.0 / 7.0
        }),
    )
}

fn ch2() -> Result<ConfoundedMdp> {
    let shape = Shape {
        horizon: 2,
        n_states: 2,
        n_actions: 2,
        n_confounders: 2,
    };
    // Arm 1 from state 0 is a shortcut to state 1 that works only when w = 1.
    let trans = table(&[2, 2, 2, 2, 2], |i| {
        let (s, a, w, s2) = (i[1], i[2], i[3], i[4]);
        let p1 = match (s, a, w) {
            (0, 0, _) => 0.25,
            (0, 1, 0) => 0.05,
            (0, 1, _) => 0.95,
            (1, 0, _) => 0.9,
            (_, _, w) => 0.5 + 0.2 * w as f64,
        };
        bernoulli(s2, p1)
    });
    let reward = table(&[2, 2, 2, 2], |i| {
        let (h, s, a, w) = (i[0], i[1], i[2], i[3]);
        match (s, a) {
            (0, 0) => 0.3,
            (0, 1) => 0.1 * w as f64,
            (1, 0) => 0.6 + 0.2 * h as f64,
            _ => 0.4 + 0.5 * w as f64,
        }
    });
    ConfoundedMdp::backdoor(
        "CH-2",
        shape,
        vec![0, 1],
        vec![1.0, 0.0],
        table(&[2, 2, 2], |i| bernoulli(i[2], [0.4, 0.6][i[1]])),
        table(&[2, 2, 2, 2], |i| if i[2] == i[3] { 0.8 } else { 0.2 }),
        trans,
        reward,
    )
}

// P(m = 1 | s, a)
const FD2_ITRANS1: [[f64; 2]; 2] = [[0.2, 0.7], [0.6, 0.1]];
// P(s' = 1 | s, m, w)
const FD2_FTRANS1: [[[f64; 2]; 2]; 2] = [[[0.3, 0.7], [0.8, 0.4]], [[0.5, 0.9], [0.2, 0.6]]];

fn fd2() -> Result<ConfoundedMdp> {
    let shape = Shape {
        horizon: 2,
        n_states: 2,
        n_actions: 2,
        n_confounders: 2,
    };
    let behavior0 = [[0.8, 0.3], [0.7, 0.2]];
    let reward = [[0.2, 0.3], [0.7, 0.5]];
    ConfoundedMdp::frontdoor(
        "FD-2",
        shape,
        2,
        vec![0.5, 0.5],
        table(&[2, 2, 2], |i| bernoulli(i[2], [0.5, 0.4][i[1]])),
        table(&[2, 2, 2, 2], |i| bernoulli(1 - i[3], behavior0[i[1]][i[2]])),
        table(&[2, 2, 2, 2], |i| bernoulli(i[3], FD2_ITRANS1[i[1]][i[2]])),
        table(&[2, 2, 2, 2, 2], |i| bernoulli(i[4], FD2_FTRANS1[i[1]][i[2]][i[3]])),
        table(&[2, 2, 2], |i| reward[i[1]][i[2]]),
    )
}

fn fd_eq() -> Result<ConfoundedMdp> {
    let shape = Shape {
        horizon: 2,
        n_states: 2,
        n_actions: 2,
        n_confounders: 2,
    };
    ConfoundedMdp::frontdoor(
        "FD-EQ",
        shape,
        2,
        vec![0.5, 0.5],
        table(&[2, 2, 2], |i| bernoulli(i[2], BD2_CONF1[i[1]])),
        table(&[2, 2, 2, 2], |i| bernoulli(1 - i[3], BD2_BEHAVIOR0[i[1]][i[2]])),
        table(&[2, 2, 2, 2], |i| point(i[3], i[2])),
        table(&[2, 2, 2, 2, 2], |i| bernoulli(i[4], BD2_TRANS1[i[1]][i[2]][i[3]])),
        table(&[2, 2, 2], |i| bd2_causal_reward(i[1], i[2])),
    )
}

fn canon(d: usize, horizon: usize) -> Result<ConfoundedMdp> {
    let shape = Shape {
        horizon,
        n_states: 1,
        n_actions: d,
        n_confounders: 1,
    };
    ConfoundedMdp::backdoor(
        "CANON",
        shape,
        vec![0],
        vec![1.0],
        vec![1.0; horizon],
        vec![1.0 / d as f64; horizon * d],
        vec![1.0; horizon * d],
        table(&[horizon, 1, d, 1], |i| (i[2] + 1) as f64 / (d + 1) as f64),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_instance_is_valid() {
        for name in names() {
            let mdp = gallery(&name).unwrap();
            assert_eq!(mdp.name(), name);
            assert!(mdp.validate().is_empty(), "{name}: {:?}", mdp.validate());
        }
    }

    #[test]
    fn canon_names() {
        assert_eq!(parse_canon("CANON(4,2)"), Some((4, 2)));
        assert_eq!(parse_canon("CANON( 8 , 3 )"), Some((8, 3)));
        assert_eq!(parse_canon("CANON(0,2)"), None);
        assert!(matches!(gallery("CANON(4)"), Err(Error::UnknownInstance(_))));
        assert!(matches!(gallery("nope"), Err(Error::UnknownInstance(_))));
    }

    #[test]
    fn table_order_is_row_major() {
        let t = table(&[2, 3], |i| (i[0] * 10 + i[1]) as f64);
        assert_eq!(t, vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
    }
}
