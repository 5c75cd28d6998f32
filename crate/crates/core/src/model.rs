//! Gaussian linear processes `X_i = sum_t A_t eps_{i-t}` and their analytic
//! second-order structure.
//!
//! Autocovariances follow the convention `Gamma_k = E[X_i X_{i+k}^T]
//! = sum_t A_t A_{t+k}^T`, so `Gamma_{-k} = Gamma_k^T`. All sums are taken
//! over the truncated process with `A_t = 0` for `t > truncation`.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::linalg;
use crate::{Error, Result};

/// Residual tolerance for `|Omega Sigma - I|_inf` on analytic truth.
pub const TRUTH_INVERSE_TOLERANCE: f64 = 1e-10;
/// Largest `p` for which `p^2 x p^2` Gaussian-reference covariances are built.
pub const DEFAULT_MAX_LONG_RUN_DIM: usize = 150;
/// Default analytic truncation for scalar (`p = 1`) specs.
pub const DEFAULT_SCALAR_TRUNCATION: usize = 1_000_000;
/// Default analytic truncation for matrix specs.
pub const DEFAULT_MATRIX_TRUNCATION: usize = 10_000;

/// Work threshold (terms times lags) above which lag sums use an FFT.
const DIRECT_ACF_WORK: usize = 20_000_000;

pub type CoefficientFn = Arc<dyn Fn(usize) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub enum Structure {
    /// `(A_t)_{jk} = (t+1)^{-beta} (|j-k|+1)^{-2}`.
    Toeplitz,
    /// Toeplitz entries inside the band `|j-k| <= bandwidth`, zero outside.
    Banded { bandwidth: usize },
    /// Arbitrary `t -> A_t`, which must return a `p x d` matrix.
    Custom(CoefficientFn),
}

impl fmt::Debug for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Structure::Toeplitz => write!(f, "Toeplitz"),
            Structure::Banded { bandwidth } => write!(f, "Banded({bandwidth})"),
            Structure::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Generative description of the coefficient sequence `A_t`.
#[derive(Clone, Debug)]
pub struct CoefficientSpec {
    pub structure: Structure,
    pub beta: f64,
    pub p: usize,
    pub d: usize,
    pub truncation: usize,
}

fn default_truncation(p: usize) -> usize {
    if p == 1 {
        DEFAULT_SCALAR_TRUNCATION
    } else {
        DEFAULT_MATRIX_TRUNCATION
    }
}

impl CoefficientSpec {
    pub fn toeplitz(beta: f64, p: usize) -> Result<Self> {
        Self::validated(Structure::Toeplitz, beta, p, p)
    }

    pub fn banded(beta: f64, p: usize, bandwidth: usize) -> Result<Self> {
        if bandwidth == 0 {
            return Err(Error::InvalidArgument("bandwidth must be positive".into()));
        }
        Self::validated(Structure::Banded { bandwidth }, beta, p, p)
    }

    /// `beta` is only used for regime checks and tail bounds.
    pub fn custom<F>(p: usize, d: usize, beta: f64, f: F) -> Result<Self>
    where
        F: Fn(usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::validated(Structure::Custom(Arc::new(f)), beta, p, d)
    }

    /// `A_0 = I_p`, `A_t = 0` otherwise: an i.i.d. standard Gaussian sequence.
    pub fn white_noise(p: usize) -> Result<Self> {
        let mut spec = Self::custom(p, p, f64::INFINITY, move |t| {
            if t == 0 {
                DMatrix::identity(p, p)
            } else {
                DMatrix::zeros(p, p)
            }
        })?;
        spec.truncation = 1;
        Ok(spec)
    }

    fn validated(structure: Structure, beta: f64, p: usize, d: usize) -> Result<Self> {
        if p == 0 || d == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        Ok(CoefficientSpec {
            structure,
            beta,
            p,
            d,
            truncation: default_truncation(p),
        })
    }

    pub fn with_truncation(mut self, truncation: usize) -> Self {
        self.truncation = truncation.max(1);
        self
    }

    /// For Toeplitz and banded specs `A_t = (t+1)^{-beta} M`; returns `M`.
    pub fn separable_base(&self) -> Option<DMatrix<f64>> {
        let band = match self.structure {
            Structure::Toeplitz => usize::MAX,
            Structure::Banded { bandwidth } => bandwidth,
            Structure::Custom(_) => return None,
        };
        Some(DMatrix::from_fn(self.p, self.d, |j, k| {
            let gap = j.abs_diff(k);
            if gap <= band {
                1.0 / ((gap + 1) * (gap + 1)) as f64
            } else {
                0.0
            }
        }))
    }

    pub(crate) fn decay_weight(&self, t: usize) -> f64 {
        (t as f64 + 1.0).powf(-self.beta)
    }

    /// Largest `|(A_t)_{j.}|_2 (1 v t)^beta` over `t <= min(truncation, horizon)`:
    /// an empirical lower bound on the decay constant `C_0`.
    pub fn decay_constant(&self, horizon: usize) -> Result<f64> {
        let last = self.truncation.min(horizon);
        if let Some(base) = self.separable_base() {
            // (t+1)^{-beta} (1 v t)^beta peaks at t = 0.
            return Ok(max_row_norm(&base));
        }
        let mut worst = 0.0_f64;
        for t in 0..=last {
            let a = coefficient(self, t)?;
            let scale = (t.max(1) as f64).powf(self.beta);
            worst = worst.max(max_row_norm(&a) * scale);
        }
        Ok(worst)
    }

    /// Upper bound on the change in any entry of `Gamma_0` from extending
    /// the truncation to infinity: `C_0^2 sum_{t > T} t^{-2 beta}`.
    pub fn truncation_tail_bound(&self) -> Result<f64> {
        let two_beta = 2.0 * self.beta;
        if two_beta <= 1.0 {
            return Ok(f64::INFINITY);
        }
        if !self.beta.is_finite() {
            return Ok(0.0);
        }
        let c0 = self.decay_constant(10_000)?;
        let t = self.truncation as f64;
        Ok(c0 * c0 * t.powf(1.0 - two_beta) / (two_beta - 1.0))
    }
}

fn max_row_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// The coefficient matrix `A_t` (`p x d`).
pub fn coefficient(spec: &CoefficientSpec, t: usize) -> Result<DMatrix<f64>> {
    match &spec.structure {
        Structure::Custom(f) => {
            let a = f(t);
            if a.shape() != (spec.p, spec.d) {
                return Err(Error::ShapeMismatch {
                    expected: (spec.p, spec.d),
                    found: a.shape(),
                });
            }
            Ok(a)
        }
        _ => {
            let base = spec.separable_base().expect("separable structure");
            Ok(base * spec.decay_weight(t))
        }
    }
}

/// `Gamma_k` for `|k| <= truncation`, by direct summation.
pub fn autocovariance(spec: &CoefficientSpec, k: i64) -> Result<DMatrix<f64>> {
    let lag = k.unsigned_abs() as usize;
    if lag > spec.truncation {
        return Err(Error::TruncationExceeded {
            lag,
            truncation: spec.truncation,
        });
    }
    let gamma = match spec.separable_base() {
        Some(base) => {
            let c = (0..=spec.truncation - lag)
                .rev()
                .map(|t| spec.decay_weight(t) * spec.decay_weight(t + lag))
                .sum::<f64>();
            (&base * base.transpose()) * c
        }
        None => {
            let mut acc = DMatrix::zeros(spec.p, spec.p);
            for t in (0..=spec.truncation - lag).rev() {
                let a = coefficient(spec, t)?;
                let b = coefficient(spec, t + lag)?;
                acc += a * b.transpose();
            }
            acc
        }
    };
    Ok(if k < 0 { gamma.transpose() } else { gamma })
}

/// `sum_{t=0}^{len-1-k} w_t w_{t+k}` for `k = 0..=max_lag`.
pub fn weight_autocorrelation(weights: &[f64], max_lag: usize) -> Vec<f64> {
    let len = weights.len();
    let lags = max_lag.min(len.saturating_sub(1));
    let mut out = vec![0.0; max_lag + 1];
    if len == 0 {
        return out;
    }
    if len.saturating_mul(lags + 1) <= DIRECT_ACF_WORK {
        for (k, slot) in out.iter_mut().enumerate().take(lags + 1) {
            *slot = (0..len - k).rev().map(|t| weights[t] * weights[t + k]).sum();
        }
        return out;
    }
    let size = (len + lags + 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex<f64>> = weights
        .iter()
        .map(|&w| Complex::new(w, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    forward.process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    inverse.process(&mut buf);
    let scale = 1.0 / size as f64;
    for (k, slot) in out.iter_mut().enumerate().take(lags + 1) {
        *slot = buf[k].re * scale;
    }
    out
}

/// `Gamma_0..=Gamma_max_lag`; lags past the truncation are exactly zero.
pub fn autocovariances(spec: &CoefficientSpec, max_lag: usize) -> Result<Vec<DMatrix<f64>>> {
    if let Some(base) = spec.separable_base() {
        let gram = &base * base.transpose();
        let weights: Vec<f64> = (0..=spec.truncation).map(|t| spec.decay_weight(t)).collect();
        let c = weight_autocorrelation(&weights, max_lag);
        return Ok(c.into_iter().map(|ck| &gram * ck).collect());
    }
    let coeffs: Vec<DMatrix<f64>> = (0..=spec.truncation)
        .map(|t| coefficient(spec, t))
        .collect::<Result<_>>()?;
    let nonzero: Vec<usize> = (0..coeffs.len())
        .filter(|&t| coeffs[t].iter().any(|&x| x != 0.0))
        .collect();
    let mut out = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut acc = DMatrix::zeros(spec.p, spec.p);
        for &t in nonzero.iter().rev() {
            if let Some(b) = coeffs.get(t + k) {
                if b.iter().any(|&x| x != 0.0) {
                    acc += &coeffs[t] * b.transpose();
                }
            }
        }
        out.push(acc);
    }
    Ok(out)
}

fn untruncated_scales(spec: &CoefficientSpec, max_lag: usize) -> Vec<f64> {
    let weights: Vec<f64> = (0..=spec.truncation).map(|t| spec.decay_weight(t)).collect();
    weight_autocorrelation(&weights, max_lag)
        .into_iter()
        .enumerate()
        .map(|(k, c)| c + separable_tail(spec.beta, spec.truncation, k))
        .collect()
}

/// `sum_{t > T - k} (t+1)^{-beta} (t+k+1)^{-beta}`: the products dropped
/// from the lag-`k` weight sum when `A_t = 0` for `t > T`. Needs
/// `beta > 1/2`. Summed directly while `k / (t+1)` is not small, then by
/// Euler-Maclaurin with a binomial series for the integral.
pub fn separable_tail(beta: f64, truncation: usize, k: usize) -> f64 {
    if !beta.is_finite() {
        return 0.0;
    }
    let f = |t: f64| (t + 1.0).powf(-beta) * (t + 1.0 + k as f64).powf(-beta);
    let t0 = (truncation + 1).saturating_sub(k);
    let t1 = t0.max(4 * k + 4).max(1000);
    let mut direct = 0.0;
    for t in (t0..t1).rev() {
        direct += f(t as f64);
    }
    let x = t1 as f64;
    let a = x + 1.0;
    let ratio = k as f64 / a;
    // int_a^inf y^{-2 beta} (1 + k/y)^{-beta} dy, expanded in k/y
    let (mut integral, mut coef, mut power) = (0.0, 1.0, 1.0);
    for m in 0..200 {
        let term = coef * power * a.powf(1.0 - 2.0 * beta) / (2.0 * beta + m as f64 - 1.0);
        integral += term;
        if term.abs() <= 1e-17 * integral.abs() {
            break;
        }
        coef *= (-beta - m as f64) / (m as f64 + 1.0);
        power *= ratio;
    }
    let fx = f(x);
    let dfx = fx * (-beta / a - beta / (a + k as f64));
    direct + integral + fx / 2.0 - dfx / 12.0
}

/// `beta~ = (4 beta - 3) ^ (2 beta - 1)`.
pub fn beta_tilde(beta: f64) -> f64 {
    (4.0 * beta - 3.0).min(2.0 * beta - 1.0)
}

/// Analytic ground truth for a coefficient spec.
#[derive(Clone, Debug)]
pub struct ProcessTruth {
    pub spec: CoefficientSpec,
    /// `Gamma_0..=Gamma_K`.
    pub gamma: Vec<DMatrix<f64>>,
    pub sigma: DMatrix<f64>,
    pub omega: Option<DMatrix<f64>>,
    pub beta_tilde: f64,
    separable: Option<SeparableLags>,
    /// Lags past the stored horizon are known to vanish.
    lags_complete: bool,
    /// Separable lags include the pairs dropped by the truncation.
    untruncated: bool,
}

/// `Gamma_k = c_k G` for Toeplitz and banded specs.
#[derive(Clone, Debug)]
struct SeparableLags {
    scales: Vec<f64>,
    gram: DMatrix<f64>,
}

impl ProcessTruth {
    pub fn compute(spec: &CoefficientSpec, max_lag: usize) -> Result<Self> {
        let gamma = autocovariances(spec, max_lag)?;
        let separable = spec.separable_base().map(|base| {
            let weights: Vec<f64> = (0..=spec.truncation).map(|t| spec.decay_weight(t)).collect();
            SeparableLags {
                scales: weight_autocorrelation(&weights, max_lag),
                gram: &base * base.transpose(),
            }
        });
        let complete = max_lag >= spec.truncation;
        Ok(Self::assemble(spec.clone(), gamma, separable, complete))
    }

    /// Separable specs only: `Gamma_k` of the infinite process, i.e. the
    /// truncated sums plus the analytic tail [`separable_tail`].
    pub fn compute_untruncated(spec: &CoefficientSpec, max_lag: usize) -> Result<Self> {
        let base = spec.separable_base().ok_or_else(|| {
            Error::InvalidArgument("untruncated truth needs a separable coefficient spec".into())
        })?;
        if !(2.0 * spec.beta > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "autocovariances diverge for beta = {}",
                spec.beta
            )));
        }
        let gram = &base * base.transpose();
        let scales = untruncated_scales(spec, max_lag);
        let gamma = scales.iter().map(|&c| &gram * c).collect();
        let mut truth = Self::assemble(
            spec.clone(),
            gamma,
            Some(SeparableLags { scales, gram }),
            false,
        );
        truth.untruncated = true;
        Ok(truth)
    }

    /// Truth from explicit lag matrices; unlisted lags are taken as zero.
    pub fn from_autocovariances(spec: CoefficientSpec, gamma: Vec<DMatrix<f64>>) -> Self {
        Self::assemble(spec, gamma, None, true)
    }

    fn assemble(
        spec: CoefficientSpec,
        gamma: Vec<DMatrix<f64>>,
        separable: Option<SeparableLags>,
        lags_complete: bool,
    ) -> Self {
        let mut sigma = gamma[0].clone();
        linalg::symmetrize(&mut sigma);
        let mut truth = ProcessTruth {
            beta_tilde: beta_tilde(spec.beta),
            spec,
            gamma,
            sigma,
            omega: None,
            separable,
            lags_complete,
            untruncated: false,
        };
        truth.omega = true_precision(&truth).ok();
        truth
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn max_lag(&self) -> usize {
        self.gamma.len() - 1
    }

    /// `Gamma_k` for any integer lag covered by the stored horizon.
    pub fn gamma_at(&self, k: i64) -> Option<DMatrix<f64>> {
        let g = self.gamma.get(k.unsigned_abs() as usize)?;
        Some(if k < 0 { g.transpose() } else { g.clone() })
    }

    fn lags_through(&self, max_lag: usize) -> Result<Cow<'_, [DMatrix<f64>]>> {
        if self.gamma.len() > max_lag {
            return Ok(Cow::Borrowed(&self.gamma[..=max_lag]));
        }
        if self.lags_complete {
            let mut lags = self.gamma.clone();
            lags.resize(max_lag + 1, DMatrix::zeros(self.p(), self.p()));
            return Ok(Cow::Owned(lags));
        }
        if let Some(sep) = self.separable.as_ref().filter(|_| self.untruncated) {
            let scales = untruncated_scales(&self.spec, max_lag);
            return Ok(Cow::Owned(scales.iter().map(|&c| &sep.gram * c).collect()));
        }
        Ok(Cow::Owned(autocovariances(&self.spec, max_lag)?))
    }

    fn separable_scales(&self, max_lag: usize) -> Option<(Cow<'_, [f64]>, &DMatrix<f64>)> {
        let sep = self.separable.as_ref()?;
        if sep.scales.len() > max_lag {
            return Some((Cow::Borrowed(&sep.scales[..=max_lag]), &sep.gram));
        }
        if self.untruncated {
            return Some((Cow::Owned(untruncated_scales(&self.spec, max_lag)), &sep.gram));
        }
        let weights: Vec<f64> = (0..=self.spec.truncation)
            .map(|t| self.spec.decay_weight(t))
            .collect();
        Some((Cow::Owned(weight_autocorrelation(&weights, max_lag)), &sep.gram))
    }

    /// Partial sums `sum_{|k| <= K} [(G_k)_ss (G_k)_tt + (G_k)_st (G_k)_ts]`
    /// over the stored lags, minimised over `(s, t)`.
    pub fn condition_g_partial_minimum(&self) -> f64 {
        let p = self.p();
        let mut best = f64::INFINITY;
        for s in 0..p {
            for t in 0..p {
                let mut acc = 0.0;
                for (k, g) in self.gamma.iter().enumerate() {
                    let term = g[(s, s)] * g[(t, t)] + g[(s, t)] * g[(t, s)];
                    acc += if k == 0 { term } else { 2.0 * term };
                }
                best = best.min(acc);
            }
        }
        best
    }
}

/// `Sigma^{-1}` via Cholesky, checked to `|Omega Sigma - I|_inf <= 1e-10`.
pub fn true_precision(truth: &ProcessTruth) -> Result<DMatrix<f64>> {
    linalg::spd_inverse(&truth.sigma, TRUTH_INVERSE_TOLERANCE)
}

/// Closed-form covariance of the Gaussian reference vector `Z` over the
/// column-stacked index `(s, t) -> s + p t`:
///
/// `sum_{|k| < n} (n-|k|)/n [(G_k)_{s1 s2} (G_k)_{t1 t2} + (G_k)_{s1 t2} (G_k)_{t1 s2}]`.
pub fn gaussian_long_run_covariance(truth: &ProcessTruth, n: usize) -> Result<DMatrix<f64>> {
    gaussian_long_run_covariance_capped(truth, n, DEFAULT_MAX_LONG_RUN_DIM)
}

pub fn gaussian_long_run_covariance_capped(
    truth: &ProcessTruth,
    n: usize,
    cap: usize,
) -> Result<DMatrix<f64>> {
    check_long_run_args(truth.p(), n, cap)?;
    if let Some((scales, gram)) = truth.separable_scales(n - 1) {
        return Ok(separable_long_run(&scales, gram, n));
    }
    let lags = truth.lags_through(n - 1)?;
    Ok(long_run_from_lags(&lags, n))
}

/// Covariance of `Z^S`: the same closed form with `Gamma_k` replaced by
/// `Omega Gamma_k Omega`.
pub fn omega_transformed_long_run(truth: &ProcessTruth, n: usize) -> Result<DMatrix<f64>> {
    omega_transformed_long_run_capped(truth, n, DEFAULT_MAX_LONG_RUN_DIM)
}

pub fn omega_transformed_long_run_capped(
    truth: &ProcessTruth,
    n: usize,
    cap: usize,
) -> Result<DMatrix<f64>> {
    check_long_run_args(truth.p(), n, cap)?;
    let omega = truth.omega.as_ref().ok_or(Error::MissingPrecision)?;
    if let Some((scales, gram)) = truth.separable_scales(n - 1) {
        let transformed = omega * gram * omega;
        return Ok(separable_long_run(&scales, &transformed, n));
    }
    let lags = truth.lags_through(n - 1)?;
    let transformed: Vec<DMatrix<f64>> = lags.iter().map(|g| omega * g * omega).collect();
    Ok(long_run_from_lags(&transformed, n))
}

fn check_long_run_args(p: usize, n: usize, cap: usize) -> Result<()> {
    if p > cap {
        return Err(Error::DimensionTooLarge { p, cap });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    Ok(())
}

fn lag_weight(k: usize, n: usize) -> f64 {
    (n - k) as f64 / n as f64
}

/// Long-run covariance for `Gamma_k = c_k G` with `G` symmetric.
fn separable_long_run(scales: &[f64], gram: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let total: f64 = scales
        .iter()
        .enumerate()
        .rev()
        .map(|(k, &c)| {
            let w = lag_weight(k, n) * c * c;
            if k == 0 {
                w
            } else {
                2.0 * w
            }
        })
        .sum();
    let p = gram.nrows();
    let q = p * p;
    let mut out = DMatrix::zeros(q, q);
    for t2 in 0..p {
        for s2 in 0..p {
            let b = s2 + p * t2;
            for t1 in 0..p {
                for s1 in 0..p {
                    let a = s1 + p * t1;
                    out[(a, b)] = total
                        * (gram[(s1, s2)] * gram[(t1, t2)] + gram[(s1, t2)] * gram[(t1, s2)]);
                }
            }
        }
    }
    out
}

/// General long-run covariance from `Gamma_0..=Gamma_{n-1}`.
pub(crate) fn long_run_from_lags(lags: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let p = lags[0].nrows();
    let q = p * p;
    let mut out = DMatrix::zeros(q, q);
    let used = lags.len().min(n);
    for b in 0..q {
        let (s2, t2) = (b % p, b / p);
        for a in 0..=b {
            let (s1, t1) = (a % p, a / p);
            let mut acc = 0.0;
            for k in (0..used).rev() {
                let g = &lags[k];
                let forward = g[(s1, s2)] * g[(t1, t2)] + g[(s1, t2)] * g[(t1, s2)];
                let term = if k == 0 {
                    forward
                } else {
                    forward + g[(s2, s1)] * g[(t2, t1)] + g[(t2, s1)] * g[(s2, t1)]
                };
                acc += lag_weight(k, n) * term;
            }
            out[(a, b)] = acc;
            out[(b, a)] = acc;
        }
    }
    out
}

/// Theoretical rates and block-length exponents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    /// Gaussian-approximation rate `Psi(p, n)`.
    pub psi: f64,
    /// Bootstrap rate `Psi_B(p, n, eps)`.
    pub psi_b: f64,
    /// Block-length exponent on `n`.
    pub phi: f64,
    /// Block-length exponent on `log p`.
    pub psi_exp: f64,
}

pub fn theoretical_rates(beta: f64, n: usize, p: usize, epsilon: f64) -> Result<Rates> {
    if !(beta > 0.75) {
        return Err(Error::OutOfRegime { beta });
    }
    rates_from_beta_tilde(beta_tilde(beta), n, p, epsilon)
}

/// Same as [`theoretical_rates`] but parameterised directly by `beta~ > 0`.
pub fn rates_from_beta_tilde(bt: f64, n: usize, p: usize, epsilon: f64) -> Result<Rates> {
    if !(bt > 0.0) {
        return Err(Error::InvalidArgument(format!("beta tilde must be positive, got {bt}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("n and p must be positive".into()));
    }
    let log_pn = ((p as f64) * (n as f64)).ln();
    let nf = n as f64;
    let psi = log_pn.powf((5.0 * bt + 12.0) / (4.0 * bt + 8.0)) / nf.powf(bt / (4.0 * bt + 8.0));
    let denom_b = (6.0 - 2.0 * epsilon) * bt + 8.0;
    let psi_b = log_pn.powf((5.0 * bt + 12.0) / denom_b) / nf.powf(bt / denom_b);
    let denom_l = (3.0 - epsilon) * bt + 4.0;
    Ok(Rates {
        psi,
        psi_b,
        phi: (2.0 * bt + 4.0) / denom_l,
        psi_exp: (5.0 * bt + 12.0) * (1.0 - epsilon) / denom_l,
    })
}
