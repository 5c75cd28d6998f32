//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Largest absolute entry, the `|.|_inf` norm used throughout.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

/// `max_{jk} |a_{jk} - b_{jk}|`. Shapes must agree.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    Ok(a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (&x, &y)| acc.max((x - y).abs())))
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `sum_i x_i x_i^T` over the rows of `x`, accumulated row by row in a
/// fixed order so repeated calls agree bitwise.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    gram_of_rows(&x.transpose(), 0, x.nrows())
}

/// Same as [`gram`] over rows `start..start + len`, taking the transposed
/// (`p x n`, so rows are contiguous) sample matrix.
pub fn gram_of_rows(xt: &DMatrix<f64>, start: usize, len: usize) -> DMatrix<f64> {
    let p = xt.nrows();
    let mut g = DMatrix::zeros(p, p);
    for i in start..start + len {
        let row = xt.column(i);
        for b in 0..p {
            let rb = row[b];
            for a in 0..=b {
                g[(a, b)] += row[a] * rb;
            }
        }
    }
    for b in 0..p {
        for a in 0..b {
            g[(b, a)] = g[(a, b)];
        }
    }
    g
}

/// `|A B - I|_inf`.
pub fn identity_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let prod = a * b;
    let n = prod.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).abs());
        }
    }
    worst
}

/// Inverts a symmetric positive-definite matrix through its Cholesky factor.
///
/// The result is symmetrised and checked against `tolerance` on the
/// `|Omega Sigma - I|_inf` residual.
pub fn spd_inverse(sigma: &DMatrix<f64>, tolerance: f64) -> Result<DMatrix<f64>> {
    if !sigma.is_square() {
        return Err(Error::ShapeMismatch {
            expected: (sigma.nrows(), sigma.nrows()),
            found: sigma.shape(),
        });
    }
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix to invert"));
    }
    let chol = match sigma.clone().cholesky() {
        Some(c) => c,
        None => {
            let (lo, _) = eigen_extremes(sigma);
            return Err(Error::NotInvertible { min_eigenvalue: lo });
        }
    };
    let mut omega = chol.inverse();
    symmetrize(&mut omega);
    let residual = identity_residual(&omega, sigma);
    if !(residual <= tolerance) {
        return Err(Error::InversionResidual {
            residual,
            tolerance,
        });
    }
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_abs_diff_rejects_shape_mismatch() {
        let a = DMatrix::<f64>::zeros(2, 2);
        let b = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            max_abs_diff(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn spd_inverse_reports_smallest_eigenvalue() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match spd_inverse(&s, 1e-10) {
            Err(Error::NotInvertible { min_eigenvalue }) => assert!(min_eigenvalue.abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }
}
