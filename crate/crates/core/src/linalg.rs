//! Thin wrappers over nalgebra's dense decompositions with a fixed output order.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Rank-one terms of `K = Σ_k s_k · left_k ⊗ right_k` (no conjugation on
/// `right_k`), sorted by `s_k` descending.
#[derive(Debug, Clone)]
pub struct SingularTriples {
    pub values: Vec<f64>,
    pub left: Vec<Vec<Complex64>>,
    pub right: Vec<Vec<Complex64>>,
}

fn is_real_symmetric(m: &DMatrix<Complex64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            let a = m[(i, j)];
            if a.im != 0.0 || a.re != m[(j, i)].re {
                return false;
            }
        }
    }
    true
}

const FLUSH_RELATIVE: f64 = 1e-40;

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("decomposition produced non-finite values".into()))
    }
}

/// Sorted order of `keys`, largest first; equal keys keep their index order.
fn descending_order(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    order
}

/// Singular triples of a real symmetric matrix via its eigen-decomposition:
/// `K = Σ e_k w_k w_kᵀ = Σ |e_k| w_k (sign(e_k) w_k)ᵀ`.
pub fn symmetric_triples(m: &DMatrix<f64>) -> Result<SingularTriples> {
    let n = m.nrows();
    // nalgebra's implicit QR can return NaN on matrices carrying many
    // near-underflow entries (e.g. Gaussian kernel tails). Entries this far
    // below the largest one cannot affect the spectrum at double precision.
    let floor = m.amax() * FLUSH_RELATIVE;
    let eig = m.map(|v| if v.abs() < floor { 0.0 } else { v }).symmetric_eigen();
    let evals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    check_finite(&evals)?;
    let mags: Vec<f64> = evals.iter().map(|e| e.abs()).collect();
    let order = descending_order(&mags);
    let mut out = SingularTriples {
        values: Vec::with_capacity(n),
        left: Vec::with_capacity(n),
        right: Vec::with_capacity(n),
    };
    for k in order {
        let col: Vec<Complex64> = eig
            .eigenvectors
            .column(k)
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        let sign = if evals[k] < 0.0 { -1.0 } else { 1.0 };
        out.values.push(mags[k]);
        out.right.push(col.iter().map(|v| v * sign).collect());
        out.left.push(col);
    }
    Ok(out)
}

/// Singular triples of a general complex matrix. Real symmetric input is
/// routed through the (much faster) symmetric eigen-solver.
pub fn singular_triples(m: &DMatrix<Complex64>) -> Result<SingularTriples> {
    if is_real_symmetric(m) {
        return symmetric_triples(&m.map(|v| v.re));
    }
    let svd = m.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return left vectors".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right vectors".into()))?;
    let values: Vec<f64> = svd.singular_values.iter().copied().collect();
    check_finite(&values)?;
    let order = descending_order(&values);
    let mut out = SingularTriples {
        values: Vec::with_capacity(values.len()),
        left: Vec::with_capacity(values.len()),
        right: Vec::with_capacity(values.len()),
    };
    for k in order {
        out.values.push(values[k]);
        out.left.push(u.column(k).iter().copied().collect());
        out.right.push(v_t.row(k).iter().copied().collect());
    }
    Ok(out)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let eig = m.clone().symmetric_eigen();
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    check_finite(&values)?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    check_finite(&values)?;
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// `max |A - A†|`.
pub fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_kernel_tails_do_not_break_the_eigensolver() {
        // Regression: unflushed, this kernel gave four NaN eigenvalues.
        let n = 128;
        let q: Vec<f64> = (0..n).map(|j| (j as f64 - 64.0) * std::f64::consts::PI / 7.0710678118654755).collect();
        let (s2, l2) = (2f64.sqrt(), 2f64.sqrt());
        let k = DMatrix::from_fn(n, n, |a, b| {
            (-(q[a] + q[b]).powi(2) / (4.0 * s2 * s2) - 0.25 * l2 * l2 * (q[a] - q[b]).powi(2)).exp()
        });
        let t = symmetric_triples(&k).unwrap();
        let total: f64 = t.values.iter().map(|v| v * v).sum();
        assert!((total - k.norm_squared()).abs() < 1e-12 * total);
    }

    fn reconstruct(t: &SingularTriples, n: usize) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(n, n);
        for k in 0..t.values.len() {
            for j in 0..n {
                for i in 0..n {
                    out[(i, j)] += t.left[k][i] * t.right[k][j] * t.values[k];
                }
            }
        }
        out
    }

    #[test]
    fn symmetric_route_reconstructs_indefinite_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, 2.0, -1.0, 0.3, 0.5, 0.3, 0.2]);
        let t = symmetric_triples(&m).unwrap();
        assert!(t.values.windows(2).all(|w| w[0] >= w[1]));
        let r = reconstruct(&t, 3);
        for j in 0..3 {
            for i in 0..3 {
                assert!((r[(i, j)].re - m[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_route_reconstructs() {
        let m = DMatrix::from_fn(4, 4, |i, j| {
            Complex64::new((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.2 + 0.05)
        });
        let t = singular_triples(&m).unwrap();
        let r = reconstruct(&t, 4);
        assert!((r - m).norm() < 1e-12);
    }

    #[test]
    fn hermitian_eigenvalues_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ]));
        assert_eq!(hermitian_eigenvalues(&m).unwrap(), vec![-1.0, 3.0]);
    }
}
