use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bootstrap;
use crate::estimate;
use crate::gaussref;
use crate::metrics;
use crate::model::{self, CoefficientSpec, ProcessTruth, Structure};
use crate::rng;
use crate::simulate::{self, SimulationPlan, DEFAULT_MAX_FFT_LEN};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    CovGa,
    CovBoot,
    PrecGa,
    PrecBoot,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::CovGa, Target::CovBoot, Target::PrecGa, Target::PrecBoot];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::CovGa => "cov_ga",
            Target::CovBoot => "cov_boot",
            Target::PrecGa => "prec_ga",
            Target::PrecBoot => "prec_boot",
        }
    }

    pub fn is_precision(self) -> bool {
        matches!(self, Target::PrecGa | Target::PrecBoot)
    }
}

/// One Monte-Carlo cell.
#[derive(Clone, Debug)]
pub struct Cell {
    pub spec: CoefficientSpec,
    pub n: usize,
    pub replicates: usize,
    pub block_len: usize,
    pub targets: Vec<Target>,
    pub seed: u64,
    /// Process truncation `N`; defaults to `max(n^2, replicates n)`.
    pub truncation_len: Option<usize>,
    pub max_fft_len: usize,
}

impl Cell {
    pub fn new(spec: CoefficientSpec, n: usize, replicates: usize, block_len: usize, seed: u64) -> Self {
        Cell {
            spec,
            n,
            replicates,
            block_len,
            targets: Target::ALL.to_vec(),
            seed,
            truncation_len: None,
            max_fft_len: DEFAULT_MAX_FFT_LEN,
        }
    }

    pub fn truncation(&self) -> usize {
        self.truncation_len
            .unwrap_or_else(|| self.n.saturating_mul(self.n).max(self.replicates.saturating_mul(self.n)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub n: usize,
    pub p: usize,
    pub beta: f64,
    pub kind: Target,
    pub ks: f64,
    pub w1: f64,
    pub runtime_ms: u64,
    pub seed: u64,
}

/// Draws behind one pair of compared distributions.
#[derive(Clone, Debug, Default)]
pub struct CellSamples {
    /// `sqrt(n) |Sigma-hat - Sigma|_inf` per copy.
    pub cov_statistic: Vec<f64>,
    pub cov_ga: Vec<f64>,
    pub cov_boot: Vec<f64>,
    pub prec_statistic: Vec<f64>,
    pub prec_ga: Vec<f64>,
    pub prec_boot: Vec<f64>,
}

impl CellSamples {
    /// `(statistic, comparison)` for a target, when it was computed.
    pub fn pair(&self, target: Target) -> Option<(&[f64], &[f64])> {
        let (a, b) = match target {
            Target::CovGa => (&self.cov_statistic, &self.cov_ga),
            Target::CovBoot => (&self.cov_statistic, &self.cov_boot),
            Target::PrecGa => (&self.prec_statistic, &self.prec_ga),
            Target::PrecBoot => (&self.prec_statistic, &self.prec_boot),
        };
        (!a.is_empty() && !b.is_empty()).then_some((a.as_slice(), b.as_slice()))
    }

    pub fn labelled(&self) -> Vec<(&'static str, &[f64])> {
        [
            ("cov_statistic", &self.cov_statistic),
            ("cov_ga", &self.cov_ga),
            ("cov_boot", &self.cov_boot),
            ("prec_statistic", &self.prec_statistic),
            ("prec_ga", &self.prec_ga),
            ("prec_boot", &self.prec_boot),
        ]
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| (k, v.as_slice()))
        .collect()
    }
}

#[derive(Clone, Debug)]
pub struct CellOutput {
    pub results: Vec<CellResult>,
    pub samples: CellSamples,
    /// Targets that could not be produced, with the reason.
    pub failures: Vec<(Target, String)>,
    pub runtime_ms: u64,
}

/// Simulates the cell's copies once and evaluates every requested target on
/// them. Precision-side errors are reported in `failures` without losing the
/// covariance rows.
pub fn run_cell(cell: &Cell) -> Result<CellOutput> {
    let start = Instant::now();
    let (n, p) = (cell.n, cell.spec.p);
    if cell.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    if cell.block_len == 0 || cell.block_len > n {
        return Err(Error::BlockLength { l: cell.block_len, n });
    }
    let big_n = cell.truncation();
    let spec = match cell.spec.structure {
        Structure::Custom(_) => {
            let t = cell.spec.truncation.min(big_n - 1);
            cell.spec.clone().with_truncation(t)
        }
        _ => cell.spec.clone().with_truncation(big_n - 1),
    };
    let want = |t: Target| cell.targets.contains(&t);
    let want_cov = want(Target::CovGa) || want(Target::CovBoot);
    let want_prec = want(Target::PrecGa) || want(Target::PrecBoot);

    let mut failures = Vec::new();
    let mut prec_ok = want_prec;
    if want_prec && p >= n {
        for t in cell.targets.iter().copied().filter(|t| t.is_precision()) {
            failures.push((t, format!("skipped: precision needs p < n (p = {p}, n = {n})")));
        }
        log::warn!("cell n={n} p={p}: precision targets skipped, p >= n");
        prec_ok = false;
    }
    if !want_cov && !prec_ok {
        return Ok(CellOutput {
            results: Vec::new(),
            samples: CellSamples::default(),
            failures,
            runtime_ms: elapsed_ms(start),
        });
    }

    // The reference is the infinite process; only the simulation truncates.
    let truth = if spec.separable_base().is_some() {
        ProcessTruth::compute_untruncated(&spec, n - 1)?
    } else {
        ProcessTruth::compute(&spec, n - 1)?
    };
    let mut plan = SimulationPlan::new(spec.clone(), n, rng::derive_seed(cell.seed, &[0]), cell.replicates)
        .with_truncation_len(big_n);
    plan.max_fft_len = cell.max_fft_len;
    let batch = simulate::simulate_multidimensional(&plan)?;

    let l = cell.block_len;
    let mut window_rng = rng::stream(cell.seed, rng::STREAM_WINDOWS);
    let windows: Vec<usize> = (0..cell.replicates).map(|_| window_rng.random_range(l..=n)).collect();
    let root_n = (n as f64).sqrt();
    let mut samples = CellSamples::default();

    if want_cov {
        let reference = gaussref::build_reference(&model::gaussian_long_run_covariance(&truth, n)?)?;
        for (x, &i) in batch.copies.iter().zip(&windows) {
            let est = estimate::sample_covariance(x)?;
            samples.cov_statistic.push(root_n * crate::linalg::max_abs_diff(&est.sigma_hat, &truth.sigma)?);
            if want(Target::CovBoot) {
                samples.cov_boot.push(bootstrap::block_statistic_at(x, l, i, None)?);
            }
        }
        if want(Target::CovGa) {
            samples.cov_ga = gaussref::sample_max_abs(&reference, cell.replicates, rng::derive_seed(cell.seed, &[1]))?;
        }
    }

    if prec_ok {
        let outcome = precision_samples(cell, &truth, &batch.copies, &windows, &mut samples);
        if let Err(e) = outcome {
            log::warn!("cell n={n} p={p}: precision targets failed: {e}");
            samples.prec_statistic.clear();
            samples.prec_ga.clear();
            samples.prec_boot.clear();
            for t in cell.targets.iter().copied().filter(|t| t.is_precision()) {
                failures.push((t, e.to_string()));
            }
        }
    }

    let runtime_ms = elapsed_ms(start);
    let mut results = Vec::new();
    for &t in &cell.targets {
        if let Some((a, b)) = samples.pair(t) {
            let report = metrics::compare(a, b)?;
            results.push(CellResult {
                n,
                p,
                beta: cell.spec.beta,
                kind: t,
                ks: report.kolmogorov,
                w1: report.wasserstein1,
                runtime_ms,
                seed: cell.seed,
            });
        }
    }
    Ok(CellOutput { results, samples, failures, runtime_ms })
}

fn precision_samples(
    cell: &Cell,
    truth: &ProcessTruth,
    copies: &[DMatrix<f64>],
    windows: &[usize],
    samples: &mut CellSamples,
) -> Result<()> {
    let n = cell.n;
    let omega = truth.omega.clone().ok_or(Error::MissingPrecision)?;
    let root_n = (n as f64).sqrt();
    for (x, &i) in copies.iter().zip(windows) {
        let est = estimate::sample_covariance(x)?.with_precision()?;
        let omega_hat = est.omega_hat.as_ref().expect("precision was just computed");
        samples.prec_statistic.push(root_n * crate::linalg::max_abs_diff(omega_hat, &omega)?);
        if cell.targets.contains(&Target::PrecBoot) {
            samples.prec_boot.push(bootstrap::block_statistic_at(x, cell.block_len, i, Some(omega_hat))?);
        }
    }
    if cell.targets.contains(&Target::PrecGa) {
        let reference = gaussref::build_reference(&model::omega_transformed_long_run(truth, n)?)?;
        samples.prec_ga = gaussref::sample_max_abs(&reference, cell.replicates, rng::derive_seed(cell.seed, &[2]))?;
    }
    Ok(())
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis().try_into().unwrap_or(u64::MAX)
}
