//! Regularized least squares with an incrementally maintained Gram matrix.
//!
//! `Λ = λI + Σ x xᵀ` is kept together with its Cholesky factor and
//! `log det Λ`. Each rank-one update costs `O(d²)`; the factor is rebuilt
//! from `Λ` every [`REFACTOR_EVERY`] updates to bound drift.
//!
//! Regression targets are not accumulated: they depend on the current value
//! estimate and change every episode, so samples are pooled and the
//! right-hand side `Σ x t` is rebuilt on each solve. Identical samples are
//! stored once with a multiplicity.

pub mod linalg;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::features::dump_line;

pub const REFACTOR_EVERY: usize = 512;

/// Largest feature norm accepted by [`RidgeState::add`].
pub const MAX_FEATURE_NORM: f64 = 1.0 + 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Offline,
    Online,
}

/// A distinct sample: key, feature vector and multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct Group<K> {
    pub key: K,
    pub x: Vec<f64>,
    pub count: u64,
}

/// Multiset of samples keyed by payload. The key must determine the feature
/// vector; insertion order is preserved.
#[derive(Clone, Debug)]
pub struct SamplePool<K> {
    index: HashMap<K, usize>,
    groups: Vec<Group<K>>,
    len: u64,
}

impl<K> Default for SamplePool<K> {
    fn default() -> Self {
        Self {
            index: HashMap::new(),
            groups: Vec::new(),
            len: 0,
        }
    }
}

impl<K: Clone + Eq + Hash> SamplePool<K> {
    fn push(&mut self, key: K, x: &[f64]) {
        self.len += 1;
        if let Some(&i) = self.index.get(&key) {
            self.groups[i].count += 1;
        } else {
            self.index.insert(key.clone(), self.groups.len());
            self.groups.push(Group {
                key,
                x: x.to_vec(),
                count: 1,
            });
        }
    }
}

impl<K> SamplePool<K> {
    /// Number of samples added, counting multiplicity.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn groups(&self) -> &[Group<K>] {
        &self.groups
    }
}

#[derive(Clone, Debug)]
pub struct RidgeState<K> {
    dim: usize,
    lambda: f64,
    gram: Vec<f64>,
    chol: Vec<f64>,
    logdet: f64,
    since_refactor: usize,
    offline: SamplePool<K>,
    online: SamplePool<K>,
}

/// Copy of `Λ` and its log-determinant at one point in time.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeSnapshot {
    pub dim: usize,
    pub gram: Vec<f64>,
    pub logdet: f64,
}

impl RidgeSnapshot {
    /// Text dump: header lines, then one `row <i> : ...` line per row of `Λ`.
    pub fn render_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# gram matrix");
        let _ = writeln!(out, "dim = {}", self.dim);
        let _ = writeln!(out, "logdet = {:?}", self.logdet);
        for i in 0..self.dim {
            dump_line(&mut out, "row", &[i], &self.gram[i * self.dim..(i + 1) * self.dim]);
        }
        out
    }
}

/// `log det Λ_end − log det Λ_start`.
pub fn info_gain(start: &RidgeSnapshot, end: &RidgeSnapshot) -> Result<f64> {
    if start.dim != end.dim {
        return Err(Error::DimensionMismatch {
            expected: start.dim,
            got: end.dim,
        });
    }
    Ok(end.logdet - start.logdet)
}

impl<K: Clone + Eq + Hash> RidgeState<K> {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("ridge dimension must be positive".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("ridge weight must be positive, got {lambda}")));
        }
        let mut gram = vec![0.0; dim * dim];
        let mut chol = vec![0.0; dim * dim];
        for i in 0..dim {
            gram[i * dim + i] = lambda;
            chol[i * dim + i] = lambda.sqrt();
        }
        Ok(Self {
            dim,
            lambda,
            gram,
            chol,
            logdet: dim as f64 * lambda.ln(),
            since_refactor: 0,
            offline: SamplePool::default(),
            online: SamplePool::default(),
        })
    }

    /// `Λ += x xᵀ`, with `log det` advanced by `log(1 + xᵀΛ⁻¹x)` and the
    /// sample recorded in the pool for `provenance`.
    pub fn add(&mut self, x: &[f64], key: K, provenance: Provenance) -> Result<()> {
        self.check_dim(x)?;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > MAX_FEATURE_NORM {
            return Err(Error::Config(format!("feature norm {norm} exceeds 1")));
        }
        if norm > 0.0 {
            self.logdet += self.quad_form(x).ln_1p();
            let d = self.dim;
            for i in 0..d {
                for j in 0..d {
                    self.gram[i * d + j] += x[i] * x[j];
                }
            }
            linalg::rank_one_update(&mut self.chol, x);
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
        match provenance {
            Provenance::Offline => self.offline.push(key, x),
            Provenance::Online => self.online.push(key, x),
        }
        Ok(())
    }
}

impl<K> RidgeState<K> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn offline_pool(&self) -> &SamplePool<K> {
        &self.offline
    }

    pub fn online_pool(&self) -> &SamplePool<K> {
        &self.online
    }

    /// Offline groups followed by online groups; the order targets follow.
    pub fn groups(&self) -> impl Iterator<Item = &Group<K>> {
        self.offline.groups.iter().chain(self.online.groups.iter())
    }

    pub fn group_count(&self) -> usize {
        self.offline.groups.len() + self.online.groups.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            })
        }
    }

    /// Rebuilds the Cholesky factor and `log det` from `Λ`.
    pub fn refactor(&mut self) -> Result<()> {
        self.chol = linalg::cholesky(&self.gram, self.dim)?;
        self.logdet = linalg::logdet_from_factor(&self.chol, self.dim);
        self.since_refactor = 0;
        Ok(())
    }

    /// `log det Λ` from a fresh factorization, leaving the state untouched.
    pub fn recomputed_logdet(&self) -> Result<f64> {
        let l = linalg::cholesky(&self.gram, self.dim)?;
        Ok(linalg::logdet_from_factor(&l, self.dim))
    }

    /// `xᵀ Λ⁻¹ x = ‖L⁻¹x‖²`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let y = linalg::forward_solve(&self.chol, x);
        y.iter().map(|v| v * v).sum()
    }

    /// Exploration bonus `β·√(log det(Λ + xxᵀ) − log det Λ)`, evaluated as
    /// `β·√(log(1 + xᵀΛ⁻¹x))`.
    pub fn bonus(&self, x: &[f64], beta: f64) -> f64 {
        beta * self.quad_form(x).ln_1p().sqrt()
    }

    /// `Λ⁻¹ b` by two triangular solves.
    pub fn solve_rhs(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(b)?;
        let y = linalg::forward_solve(&self.chol, b);
        Ok(linalg::backward_solve_transposed(&self.chol, &y))
    }

    /// `Σ_j count_j · t_j · x_j` with `targets` aligned to [`groups`](Self::groups).
    pub fn rhs(&self, targets: &[f64]) -> Result<Vec<f64>> {
        if targets.len() != self.group_count() {
            return Err(Error::DimensionMismatch {
                expected: self.group_count(),
                got: targets.len(),
            });
        }
        let mut b = vec![0.0; self.dim];
        for (g, &t) in self.groups().zip(targets) {
            let scale = g.count as f64 * t;
            if scale != 0.0 {
                crate::mdp::axpy(&mut b, scale, &g.x);
            }
        }
        Ok(b)
    }

    /// Ridge solution `ω = Λ⁻¹ Σ x t` for per-group targets.
    pub fn solve(&self, targets: &[f64]) -> Result<Vec<f64>> {
        self.solve_rhs(&self.rhs(targets)?)
    }

    /// [`solve`](Self::solve) with targets computed from each group's key.
    pub fn solve_with(&self, mut target: impl FnMut(&K) -> f64) -> Vec<f64> {
        let targets: Vec<f64> = self.groups().map(|g| target(&g.key)).collect();
        self.solve(&targets).expect("targets aligned with groups")
    }

    pub fn snapshot(&self) -> RidgeSnapshot {
        RidgeSnapshot {
            dim: self.dim,
            gram: self.gram.clone(),
            logdet: self.logdet,
        }
    }
}
