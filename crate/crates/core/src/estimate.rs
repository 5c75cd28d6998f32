//! Sample covariance and precision estimators.

use nalgebra::DMatrix;

use crate::linalg;
use crate::{Error, Result};

/// Minimum eigenvalue of `Sigma-hat`, relative to its largest diagonal
/// entry, below which inversion is refused.
pub const NEAR_SINGULAR_RELATIVE: f64 = 1e-12;
/// Residual tolerance for `|Omega-hat Sigma-hat - I|_inf`.
pub const SAMPLE_INVERSE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Centering {
    /// The process model has mean zero; no centring.
    #[default]
    None,
    /// Subtract column means first.
    Demean,
}

#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub sigma_hat: DMatrix<f64>,
    pub omega_hat: Option<DMatrix<f64>>,
    pub n: usize,
}

impl EstimateResult {
    /// Fills `omega_hat` when the sample covariance can be inverted.
    pub fn with_precision(mut self) -> Result<Self> {
        self.omega_hat = Some(sample_precision(&self)?);
        Ok(self)
    }
}

/// `Sigma-hat = n^{-1} sum_i X_i X_i^T` over the rows of `x`.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<EstimateResult> {
    sample_covariance_with(x, Centering::None)
}

pub fn sample_covariance_with(x: &DMatrix<f64>, centering: Centering) -> Result<EstimateResult> {
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::EmptyInput("sample matrix"));
    }
    let mut sigma_hat = match centering {
        Centering::None => linalg::gram(x),
        Centering::Demean => {
            let mut centred = x.clone();
            for mut col in centred.column_iter_mut() {
                let mean = col.sum() / n as f64;
                col.add_scalar_mut(-mean);
            }
            linalg::gram(&centred)
        }
    };
    sigma_hat /= n as f64;
    Ok(EstimateResult {
        sigma_hat,
        omega_hat: None,
        n,
    })
}

/// `Omega-hat = Sigma-hat^{-1}`, only in the low-dimensional regime `p < n`.
pub fn sample_precision(result: &EstimateResult) -> Result<DMatrix<f64>> {
    let sigma = &result.sigma_hat;
    let p = sigma.nrows();
    if p >= result.n {
        return Err(Error::HighDimensional { p, n: result.n });
    }
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sample covariance"));
    }
    let max_diag = (0..p).map(|i| sigma[(i, i)]).fold(0.0_f64, f64::max);
    let (lo, hi) = linalg::eigen_extremes(sigma);
    if !(lo > NEAR_SINGULAR_RELATIVE * max_diag) {
        return Err(Error::NearSingular {
            min_eigenvalue: lo,
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    linalg::spd_inverse(sigma, SAMPLE_INVERSE_TOLERANCE)
}

/// `sqrt(n) max_{jk} |estimate_{jk} - truth_{jk}|`.
pub fn max_deviation(estimate: &DMatrix<f64>, truth: &DMatrix<f64>, n: usize) -> Result<f64> {
    Ok((n as f64).sqrt() * linalg::max_abs_diff(estimate, truth)?)
}
