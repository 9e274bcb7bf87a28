//! Dense lower-triangular kernels on row-major `d × d` buffers.

use crate::error::{Error, Result};

/// Cholesky factor `L` (lower, row-major) with `A = L Lᵀ`.
pub fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = v / ljj;
        }
    }
    Ok(l)
}

/// In-place update of `L` to the factor of `L Lᵀ + x xᵀ`.
pub fn rank_one_update(l: &mut [f64], x: &[f64]) {
    let d = x.len();
    let mut w = x.to_vec();
    for k in 0..d {
        if w[k] == 0.0 {
            continue;
        }
        let lkk = l[k * d + k];
        let r = lkk.hypot(w[k]);
        let c = r / lkk;
        let s = w[k] / lkk;
        l[k * d + k] = r;
        for i in k + 1..d {
            let lik = (l[i * d + k] + s * w[i]) / c;
            w[i] = c * w[i] - s * lik;
            l[i * d + k] = lik;
        }
    }
}

/// Solves `L y = b`.
pub fn forward_solve(l: &[f64], b: &[f64]) -> Vec<f64> {
    let d = b.len();
    let mut y = b.to_vec();
    for i in 0..d {
        let mut v = y[i];
        for k in 0..i {
            v -= l[i * d + k] * y[k];
        }
        y[i] = v / l[i * d + i];
    }
    y
}

/// Solves `Lᵀ x = y`.
pub fn backward_solve_transposed(l: &[f64], y: &[f64]) -> Vec<f64> {
    let d = y.len();
    let mut x = y.to_vec();
    for i in (0..d).rev() {
        let mut v = x[i];
        for k in i + 1..d {
            v -= l[k * d + i] * x[k];
        }
        x[i] = v / l[i * d + i];
    }
    x
}

/// `log det(L Lᵀ) = 2 Σ log L_ii`.
pub fn logdet_from_factor(l: &[f64], d: usize) -> f64 {
    2.0 * (0..d).map(|i| l[i * d + i].ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_of_known_matrix() {
        // [[4, 2], [2, 3]] = [[2, 0], [1, √2]] · transpose
        let l = cholesky(&[4.0, 2.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(l[0], 2.0);
        assert_eq!(l[1], 0.0);
        assert_eq!(l[2], 1.0);
        assert!((l[3] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite() {
        let err = cholesky(&[1.0, 2.0, 2.0, 1.0], 2).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1, .. }));
    }

    #[test]
    fn update_matches_refactor() {
        let a = [2.0, 0.5, 0.1, 0.5, 3.0, 0.2, 0.1, 0.2, 1.5];
        let x = [0.3, -0.7, 0.4];
        let mut l = cholesky(&a, 3).unwrap();
        rank_one_update(&mut l, &x);
        let mut b = a;
        for i in 0..3 {
            for j in 0..3 {
                b[i * 3 + j] += x[i] * x[j];
            }
        }
        let fresh = cholesky(&b, 3).unwrap();
        for (u, v) in l.iter().zip(&fresh) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn triangular_solves_invert() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        let x = backward_solve_transposed(&l, &forward_solve(&l, &[1.0, 2.0]));
        // A x = b
        assert!((4.0 * x[0] + 2.0 * x[1] - 1.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
    }
}
