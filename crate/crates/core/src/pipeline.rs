//! Real-data workflow: ingest per-subject tables, long-memory diagnostics,
//! precision-bootstrap edge tests and group-level graph aggregation.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bootstrap::{self, BlockRule};
use crate::estimate;
use crate::{Error, Result};

pub const DEFAULT_ACF_LAGS: (usize, usize) = (21, 100);
pub const MIN_HURST_LEN: usize = 32;
const MIN_HURST_WINDOW: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectSeries {
    pub id: String,
    /// `n x p`, each column demeaned.
    pub data: DMatrix<f64>,
    pub labels: Vec<String>,
}

/// Reads a subject table: a header of column labels, then numeric rows.
/// The subject id is the file stem.
pub fn ingest(path: &Path) -> Result<SubjectSeries> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_subject(id, file)
}

/// Row numbers in errors are file line numbers, the header being line 1.
pub fn parse_subject<R: Read>(id: impl Into<String>, reader: R) -> Result<SubjectSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::EmptyInput("subject file")),
    };
    let labels: Vec<String> = header.iter().map(str::to_string).collect();
    let p = labels.len();
    if p == 0 || labels.iter().all(String::is_empty) {
        return Err(Error::EmptyInput("subject header"));
    }
    let mut values = Vec::new();
    let mut n = 0;
    for (idx, record) in records.enumerate() {
        let record = record?;
        let row = idx + 2;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != p {
            return Err(Error::RaggedRow { row, found: record.len(), expected: p });
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|e: std::num::ParseFloatError| Error::Parse {
                row,
                column: col + 1,
                message: format!("`{field}`: {e}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, column: col + 1, message: format!("non-finite value `{field}`") });
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyInput("subject data rows"));
    }
    let mut data = DMatrix::from_row_slice(n, p, &values);
    for mut col in data.column_iter_mut() {
        // second pass removes the rounding left by the first
        for _ in 0..2 {
            let mean = col.sum() / n as f64;
            col.add_scalar_mut(-mean);
        }
    }
    Ok(SubjectSeries { id: id.into(), data, labels })
}

/// Rescaled-range estimate of the Hurst exponent: average `R/S` over
/// disjoint windows of sizes `8, 16, ..., <= n/2`, slope of the
/// least-squares fit of `log(R/S)` on `log(w)`, clamped to `[0, 1]`.
pub fn hurst_exponent(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_HURST_LEN {
        return Err(Error::SeriesTooShort { len: n, min: MIN_HURST_LEN });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series"));
    }
    if variance(series) == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut points = Vec::new();
    let mut w = MIN_HURST_WINDOW;
    while w <= n / 2 {
        let ratios: Vec<f64> = series.chunks_exact(w).filter_map(rescaled_range).collect();
        if !ratios.is_empty() {
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            if mean > 0.0 {
                points.push(((w as f64).ln(), mean.ln()));
            }
        }
        w *= 2;
    }
    if points.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    Ok(ols_slope(&points).clamp(0.0, 1.0))
}

fn rescaled_range(window: &[f64]) -> Option<f64> {
    let w = window.len() as f64;
    let mean = window.iter().sum::<f64>() / w;
    let (mut acc, mut lo, mut hi, mut ss) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for &x in window {
        let d = x - mean;
        acc += d;
        lo = lo.min(acc);
        hi = hi.max(acc);
        ss += d * d;
    }
    let s = (ss / w).sqrt();
    (s > 0.0).then(|| (hi - lo) / s)
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn variance(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AcfSignificance {
    pub count: usize,
    pub flag: bool,
}

/// Number of lags in `lag_lo..=lag_hi` whose sample autocorrelation
/// exceeds `1.96 / sqrt(n)` in absolute value.
pub fn acf_significance(series: &[f64], lag_lo: usize, lag_hi: usize) -> Result<AcfSignificance> {
    let n = series.len();
    if lag_lo == 0 || lag_lo > lag_hi || lag_hi >= n {
        return Err(Error::InvalidArgument(format!(
            "lag range [{lag_lo}, {lag_hi}] invalid for a series of length {n}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = centred.iter().map(|x| x * x).sum();
    if denom == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let threshold = 1.96 / (n as f64).sqrt();
    let count = (lag_lo..=lag_hi)
        .filter(|&h| {
            let num: f64 = centred[..n - h].iter().zip(&centred[h..]).map(|(a, b)| a * b).sum();
            (num / denom).abs() > threshold
        })
        .count();
    Ok(AcfSignificance { count, flag: count >= 1 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// `source < target` lexicographically.
    pub source: String,
    pub target: String,
    /// Subjects in which the edge was found (1 at subject level).
    pub count: usize,
    /// Margin `|Omega-hat_jk| - n^{-1/2} q`, summed over subjects.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSet {
    pub labels: Vec<String>,
    pub edges: Vec<Edge>,
}

impl EdgeSet {
    pub fn contains(&self, a: &str, b: &str) -> bool {
        let (s, t) = ordered(a, b);
        self.edges.iter().any(|e| e.source == s && e.target == t)
    }
}

fn ordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b { (a, b) } else { (b, a) }
}

/// Edge `(j, k)` is kept when `|omega_jk|` exceeds `half_width`, i.e. the
/// simultaneous interval around the estimate excludes zero.
pub fn edges_from_precision(omega_hat: &DMatrix<f64>, labels: &[String], half_width: f64) -> Result<EdgeSet> {
    let p = labels.len();
    if omega_hat.shape() != (p, p) {
        return Err(Error::ShapeMismatch { expected: (p, p), found: omega_hat.shape() });
    }
    let mut edges = Vec::new();
    if half_width.is_finite() {
        for j in 0..p {
            for k in j + 1..p {
                let v = omega_hat[(j, k)].abs();
                if v > half_width {
                    let (s, t) = ordered(&labels[j], &labels[k]);
                    edges.push(Edge { source: s.to_string(), target: t.to_string(), count: 1, score: v - half_width });
                }
            }
        }
    }
    sort_edges(&mut edges);
    Ok(EdgeSet { labels: labels.to_vec(), edges })
}

/// Precision bootstrap edge test for one subject.
pub fn subject_graph(subject: &SubjectSeries, alpha: f64, block_rule: &BlockRule) -> Result<EdgeSet> {
    let (n, p) = subject.data.shape();
    if subject.labels.len() != p {
        return Err(Error::ShapeMismatch { expected: (n, subject.labels.len()), found: (n, p) });
    }
    let est = estimate::sample_covariance(&subject.data)?.with_precision()?;
    let omega_hat = est.omega_hat.as_ref().expect("precision was just computed");
    let l = block_rule.resolve(n, p, None)?;
    let dist = bootstrap::precision_blocks_with(&subject.data, l, omega_hat)?;
    let region = bootstrap::confidence_region(omega_hat, &dist, n, alpha)?;
    edges_from_precision(omega_hat, &subject.labels, region.half_width)
}

fn sort_edges(edges: &mut [Edge]) {
    edges.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(b.score.total_cmp(&a.score))
            .then_with(|| (&a.source, &a.target).cmp(&(&b.source, &b.target)))
    });
}

/// Pools edges across subjects and keeps the `ceil(sparsity p(p-1)/2)`
/// strongest by count, then summed score, then label pair.
pub fn aggregate_group(subjects: &[EdgeSet], sparsity: f64) -> Result<EdgeSet> {
    let first = subjects.first().ok_or(Error::EmptyInput("subject edge sets"))?;
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::InvalidArgument(format!("sparsity {sparsity} must lie in (0, 1]")));
    }
    let mut reference = first.labels.clone();
    reference.sort();
    for s in &subjects[1..] {
        let mut labels = s.labels.clone();
        labels.sort();
        if labels != reference {
            return Err(Error::InconsistentLabels);
        }
    }
    let mut pooled: BTreeMap<(String, String), (usize, f64)> = BTreeMap::new();
    for s in subjects {
        for e in &s.edges {
            let (a, b) = ordered(&e.source, &e.target);
            let slot = pooled.entry((a.to_string(), b.to_string())).or_insert((0, 0.0));
            slot.0 += e.count;
            slot.1 += e.score;
        }
    }
    let mut edges: Vec<Edge> = pooled
        .into_iter()
        .map(|((source, target), (count, score))| Edge { source, target, count, score })
        .collect();
    sort_edges(&mut edges);
    let p = first.labels.len();
    let pairs = (p * p.saturating_sub(1) / 2) as f64;
    let keep = (sparsity * pairs - 1e-9).ceil().max(0.0) as usize;
    edges.truncate(keep);
    Ok(EdgeSet { labels: first.labels.clone(), edges })
}

pub fn write_edges<W: Write>(out: W, set: &EdgeSet) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(["source", "target", "count", "score"])?;
    for e in &set.edges {
        w.write_record([e.source.as_str(), e.target.as_str(), &e.count.to_string(), &format!("{}", e.score)])?;
    }
    w.flush().map_err(|e| Error::io("<edges>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub subject: String,
    pub column: String,
    /// NaN when the estimate is undefined for the column.
    pub hurst: f64,
    pub acf_count: Option<usize>,
}

pub fn diagnose(subject: &SubjectSeries, lag_lo: usize, lag_hi: usize) -> Vec<Diagnostic> {
    subject
        .labels
        .iter()
        .zip(subject.data.column_iter())
        .map(|(label, col)| {
            let series: Vec<f64> = col.iter().copied().collect();
            let hurst = hurst_exponent(&series).unwrap_or_else(|e| {
                log::warn!("{}/{label}: no Hurst estimate: {e}", subject.id);
                f64::NAN
            });
            let acf_count = acf_significance(&series, lag_lo, lag_hi.min(series.len().saturating_sub(1)))
                .map(|a| a.count)
                .map_err(|e| log::warn!("{}/{label}: no ACF count: {e}", subject.id))
                .ok();
            Diagnostic { subject: subject.id.clone(), column: label.clone(), hurst, acf_count }
        })
        .collect()
}

pub fn write_diagnostics<W: Write>(out: W, rows: &[Diagnostic]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(["subject", "column", "hurst", "acf_count"])?;
    for d in rows {
        let hurst = if d.hurst.is_finite() { format!("{}", d.hurst) } else { String::new() };
        let acf = d.acf_count.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([d.subject.as_str(), d.column.as_str(), &hurst, &acf])?;
    }
    w.flush().map_err(|e| Error::io("<diagnostics>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub block_rule: BlockRule,
    pub sparsity: f64,
    pub lags: (usize, usize),
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { alpha: 0.05, block_rule: BlockRule::Default, sparsity: 0.02, lags: DEFAULT_ACF_LAGS }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub subjects: Vec<EdgeSet>,
    pub group: EdgeSet,
    pub diagnostics: Vec<Diagnostic>,
}

/// Runs the whole workflow over subject files, writing `diagnostics.csv`,
/// `edges_<subject>.csv` and `group_edges.csv` into `out_dir`.
pub fn run_pipeline(inputs: &[PathBuf], config: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutput> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("subject files"));
    }
    let subjects = inputs.iter().map(|p| ingest(p)).collect::<Result<Vec<_>>>()?;
    let per_subject: Vec<(EdgeSet, Vec<Diagnostic>)> = subjects
        .par_iter()
        .map(|s| {
            let edges = subject_graph(s, config.alpha, &config.block_rule)?;
            Ok((edges, diagnose(s, config.lags.0, config.lags.1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sets, diags): (Vec<EdgeSet>, Vec<Vec<Diagnostic>>) = per_subject.into_iter().unzip();
    let group = aggregate_group(&sets, config.sparsity)?;
    let diagnostics: Vec<Diagnostic> = diags.into_iter().flatten().collect();

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let create = |name: String| -> Result<fs::File> {
        let path = out_dir.join(name);
        fs::File::create(&path).map_err(|e| Error::io(&path, e))
    };
    write_diagnostics(create("diagnostics.csv".into())?, &diagnostics)?;
    for (s, set) in subjects.iter().zip(&sets) {
        write_edges(create(format!("edges_{}.csv", s.id))?, set)?;
    }
    write_edges(create("group_edges.csv".into())?, &group)?;
    Ok(PipelineOutput { subjects: sets, group, diagnostics })
}
