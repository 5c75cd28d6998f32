//! Block-bootstrap distributions of the covariance and precision
//! max-deviation statistics, quantiles and simultaneous confidence regions.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimate::{self, EstimateResult};
use crate::linalg;
use crate::model;
use crate::{Error, Result};

/// Windows between full recomputations of the running window sum.
pub const REFRESH_INTERVAL: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Covariance,
    Precision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapDistribution {
    values: Vec<f64>,
    l: usize,
    kind: BlockKind,
}

impl BootstrapDistribution {
    /// Wraps arbitrary nonnegative values, sorting them.
    pub fn from_values(mut values: Vec<f64>, l: usize, kind: BlockKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("bootstrap values"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bootstrap values"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("bootstrap values must be nonnegative".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, l, kind })
    }

    /// Sorted ascending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    /// Empirical CDF `F(u) = #{v <= u} / N`.
    pub fn cdf(&self, u: f64) -> f64 {
        self.values.partition_point(|&v| v <= u) as f64 / self.values.len() as f64
    }
}

/// Per-window statistics `l^{-1/2} |W_i|_inf` in window order `i = l..n`,
/// where `W_i = M_i - l Sigma-hat` (covariance) or
/// `Omega-hat (M_i - l Sigma-hat) Omega-hat` (precision).
pub fn block_statistics(
    x: &DMatrix<f64>,
    l: usize,
    omega: Option<&DMatrix<f64>>,
) -> Result<Vec<f64>> {
    let n = check_window(x, l)?;
    if let Some(o) = omega {
        let p = x.ncols();
        if o.shape() != (p, p) {
            return Err(Error::ShapeMismatch { expected: (p, p), found: o.shape() });
        }
    }
    let xt = x.transpose();
    let g = linalg::gram(x);
    let windows = n - l + 1;
    let chunks: Vec<usize> = (0..windows).step_by(REFRESH_INTERVAL).collect();
    let parts: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|&first| {
            let count = REFRESH_INTERVAL.min(windows - first);
            window_range(&xt, &g, n, l, first, count, omega)
        })
        .collect();
    Ok(parts.concat())
}

/// Statistic for the single window ending at row `i` (1-based, `l <= i <= n`).
pub fn block_statistic_at(
    x: &DMatrix<f64>,
    l: usize,
    i: usize,
    omega: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let n = check_window(x, l)?;
    if i < l || i > n {
        return Err(Error::InvalidArgument(format!("window end {i} outside [{l}, {n}]")));
    }
    let xt = x.transpose();
    let g = linalg::gram(x);
    Ok(window_range(&xt, &g, n, l, i - l, 1, omega)[0])
}

pub fn covariance_blocks(x: &DMatrix<f64>, l: usize) -> Result<BootstrapDistribution> {
    let values = block_statistics(x, l, None)?;
    BootstrapDistribution::from_values(values, l, BlockKind::Covariance)
}

pub fn precision_blocks(x: &DMatrix<f64>, l: usize) -> Result<BootstrapDistribution> {
    check_window(x, l)?;
    let omega = estimate::sample_precision(&estimate::sample_covariance(x)?)?;
    precision_blocks_with(x, l, &omega)
}

/// Precision blocks with a caller-supplied `Omega-hat`.
pub fn precision_blocks_with(
    x: &DMatrix<f64>,
    l: usize,
    omega: &DMatrix<f64>,
) -> Result<BootstrapDistribution> {
    let values = block_statistics(x, l, Some(omega))?;
    BootstrapDistribution::from_values(values, l, BlockKind::Precision)
}

/// Both distributions from one estimate; precision only when `omega_hat` is set.
pub fn distributions(
    x: &DMatrix<f64>,
    l: usize,
    est: &EstimateResult,
) -> Result<(BootstrapDistribution, Option<BootstrapDistribution>)> {
    let cov = covariance_blocks(x, l)?;
    let prec = match &est.omega_hat {
        Some(o) => Some(precision_blocks_with(x, l, o)?),
        None => None,
    };
    Ok((cov, prec))
}

fn check_window(x: &DMatrix<f64>, l: usize) -> Result<usize> {
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::EmptyInput("sample matrix"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample matrix"));
    }
    if l == 0 || l > n {
        return Err(Error::BlockLength { l, n });
    }
    Ok(n)
}

/// Windows with 0-based start rows `first..first + count`. The first window
/// is summed from scratch, the rest slide.
fn window_range(
    xt: &DMatrix<f64>,
    g: &DMatrix<f64>,
    n: usize,
    l: usize,
    first: usize,
    count: usize,
    omega: Option<&DMatrix<f64>>,
) -> Vec<f64> {
    let p = xt.nrows();
    let ratio = l as f64 / n as f64;
    let scale = 1.0 / (l as f64).sqrt();
    let mut m = linalg::gram_of_rows(xt, first, l);
    let mut d = DMatrix::zeros(p, p);
    let mut tmp = DMatrix::zeros(p, p);
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        if w > 0 {
            let add = xt.column(first + w + l - 1);
            let drop = xt.column(first + w - 1);
            for b in 0..p {
                for a in 0..p {
                    m[(a, b)] += add[a] * add[b] - drop[a] * drop[b];
                }
            }
        }
        d.zip_zip_apply(&m, g, |dv, mv, gv| *dv = mv - gv * ratio);
        let value = match omega {
            None => linalg::max_abs(&d),
            Some(o) => {
                tmp.gemm(1.0, o, &d, 0.0);
                d.gemm(1.0, &tmp, o, 0.0);
                linalg::max_abs(&d)
            }
        };
        out.push(value * scale);
    }
    out
}

/// `inf{u : F(u) >= level}`, the `ceil(level N)`-th order statistic.
pub fn quantile(dist: &BootstrapDistribution, level: f64) -> Result<f64> {
    order_statistic_quantile(dist.values(), level)
}

/// Quantile of an ascending slice under the same exact-rank rule.
pub fn order_statistic_quantile(sorted: &[f64], level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Level(level));
    }
    if sorted.is_empty() {
        return Err(Error::EmptyInput("quantile sample"));
    }
    let n = sorted.len();
    // smallest k with k / n >= level; the float comparison avoids the
    // off-by-one of ceil(level * n) when level * n is an integer up to rounding
    let mut k = ((level * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= level {
        k -= 1;
    }
    while k < n && (k as f64 / n as f64) < level {
        k += 1;
    }
    Ok(sorted[k - 1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceRegion {
    pub center: DMatrix<f64>,
    pub half_width: f64,
    pub alpha: f64,
}

impl ConfidenceRegion {
    /// Closed box: `|m - center|_inf <= half_width`.
    pub fn contains(&self, m: &DMatrix<f64>) -> Result<bool> {
        Ok(linalg::max_abs_diff(m, &self.center)? <= self.half_width)
    }
}

pub fn confidence_region(
    center: &DMatrix<f64>,
    dist: &BootstrapDistribution,
    n: usize,
    alpha: f64,
) -> Result<ConfidenceRegion> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Level(alpha));
    }
    if n == 0 {
        return Err(Error::EmptyInput("sample size"));
    }
    let q = quantile(dist, 1.0 - alpha)?;
    Ok(ConfidenceRegion {
        center: center.clone(),
        half_width: q / (n as f64).sqrt(),
        alpha,
    })
}

/// `floor(n^{2/3})`, computed exactly in integers.
pub fn default_block_length(n: usize) -> usize {
    let sq = (n as u128) * (n as u128);
    let mut r = (sq as f64).cbrt() as u128;
    while r * r * r > sq {
        r -= 1;
    }
    while (r + 1) * (r + 1) * (r + 1) <= sq {
        r += 1;
    }
    r as usize
}

/// `round(scale n^phi log^psi(max(p, 2)))` clamped to `[2, n]`.
pub fn theoretical_block_length(
    n: usize,
    p: usize,
    beta: f64,
    epsilon: f64,
    scale: f64,
) -> Result<usize> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("block length scale {scale} must be positive")));
    }
    if n < 2 {
        return Err(Error::BlockLength { l: 2, n });
    }
    let rates = model::theoretical_rates(beta, n, p, epsilon)?;
    let raw = scale * (n as f64).powf(rates.phi) * (p.max(2) as f64).ln().powf(rates.psi_exp);
    Ok((raw.round() as usize).clamp(2, n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockRule {
    /// `floor(n^{2/3})`.
    Default,
    Theoretical {
        epsilon: f64,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
    Fixed(usize),
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for BlockRule {
    fn default() -> Self {
        BlockRule::Default
    }
}

impl BlockRule {
    /// `beta` is required by the theoretical rule only.
    pub fn resolve(&self, n: usize, p: usize, beta: Option<f64>) -> Result<usize> {
        let l = match *self {
            BlockRule::Default => default_block_length(n).max(1),
            BlockRule::Fixed(l) => l,
            BlockRule::Theoretical { epsilon, scale } => {
                let beta = beta.ok_or_else(|| {
                    Error::InvalidArgument("theoretical block rule needs beta".into())
                })?;
                theoretical_block_length(n, p, beta, epsilon, scale)?
            }
        };
        if l == 0 || l > n {
            return Err(Error::BlockLength { l, n });
        }
        Ok(l)
    }
}

impl std::str::FromStr for BlockRule {
    type Err = Error;

    /// `default`, `fixed:<l>` or `theoretical:<epsilon>[:<scale>]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognised block rule `{s}`"));
        let mut parts = s.split(':');
        match parts.next() {
            Some("default") if parts.next().is_none() => Ok(BlockRule::Default),
            Some("fixed") => {
                let l = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(BlockRule::Fixed(l))
            }
            Some("theoretical") => {
                let epsilon = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let scale = match parts.next() {
                    Some(v) => v.parse().map_err(|_| bad())?,
                    None => 1.0,
                };
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(BlockRule::Theoretical { epsilon, scale })
            }
            _ => Err(bad()),
        }
    }
}
