//! Gaussian reference distributions of `|Z|_inf` from a closed-form
//! covariance of `Z`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::linalg;
use crate::rng;
use crate::{Error, Result};

pub const SYMMETRY_TOLERANCE: f64 = 1e-8;
/// Negative eigenvalues down to `-CLIP_RELATIVE * lambda_max` are set to zero.
pub const CLIP_RELATIVE: f64 = 1e-8;
/// Allowed `|F F^T - cov|_inf` relative to the largest diagonal entry.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-6;
const SHARD: usize = 4096;

#[derive(Clone, Debug)]
pub struct GaussianReference {
    pub cov: DMatrix<f64>,
    /// `V diag(sqrt(lambda))` from the clipped eigendecomposition.
    pub factor: DMatrix<f64>,
}

impl GaussianReference {
    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }
}

pub fn build_reference(cov: &DMatrix<f64>) -> Result<GaussianReference> {
    if !cov.is_square() {
        return Err(Error::ShapeMismatch {
            expected: (cov.nrows(), cov.nrows()),
            found: cov.shape(),
        });
    }
    if cov.is_empty() {
        return Err(Error::EmptyInput("reference covariance"));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reference covariance"));
    }
    let asym = linalg::max_asymmetry(cov);
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::Asymmetric(asym));
    }
    let mut sym = cov.clone();
    linalg::symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let hi = eig.eigenvalues.max();
    let lo = eig.eigenvalues.min();
    if lo < -CLIP_RELATIVE * hi.max(0.0) {
        return Err(Error::Indefinite { min_eigenvalue: lo, max_eigenvalue: hi });
    }
    let mut factor = eig.eigenvectors;
    for (mut col, &lambda) in factor.column_iter_mut().zip(eig.eigenvalues.iter()) {
        col *= lambda.max(0.0).sqrt();
    }
    let scale = cov.diagonal().max().max(0.0);
    let residual = linalg::max_abs_diff(&(&factor * factor.transpose()), cov)?;
    if residual > RECONSTRUCTION_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InversionResidual {
            residual,
            tolerance: RECONSTRUCTION_TOLERANCE * scale,
        });
    }
    Ok(GaussianReference { cov: cov.clone(), factor })
}

/// `reps` draws of `|F g|_inf`, `g ~ N(0, I)`. Shards of draws use their own
/// derived streams, so the output depends only on `seed` and `reps`.
pub fn sample_max_abs(reference: &GaussianReference, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let dim = reference.dim();
    let mut out = Vec::with_capacity(reps);
    for (shard, start) in (0..reps).step_by(SHARD).enumerate() {
        let count = SHARD.min(reps - start);
        let mut rng = rng::stream(rng::derive_seed(seed, &[shard as u64]), rng::STREAM_REFERENCE);
        let g = DMatrix::from_fn(dim, count, |_, _| StandardNormal.sample(&mut rng));
        let z = &reference.factor * g;
        out.extend(z.column_iter().map(|c| c.amax()));
    }
    Ok(out)
}
