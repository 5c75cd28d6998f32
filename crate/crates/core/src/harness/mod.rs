//! Monte-Carlo experiment driver: grids of cells, CSV tables and plot data.

mod cell;

pub use cell::{run_cell, Cell, CellOutput, CellResult, CellSamples, Target};

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::bootstrap::BlockRule;
use crate::error::Error;
use crate::metrics;
use crate::model::CoefficientSpec;
use crate::rng;
use crate::simulate::DEFAULT_MAX_FFT_LEN;
use crate::Result;

pub const RESULTS_HEADER: &str = "n,p,beta,kind,ks,w1,runtime_ms,seed";
pub const FAILURES_HEADER: &str = "n,p,beta,kind,reason";
/// Points per QQ sidecar.
pub const QQ_POINTS: usize = 99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureConfig {
    Toeplitz,
    Banded { bandwidth: usize },
}

impl StructureConfig {
    pub fn spec(&self, beta: f64, p: usize) -> Result<CoefficientSpec> {
        match *self {
            StructureConfig::Toeplitz => CoefficientSpec::toeplitz(beta, p),
            StructureConfig::Banded { bandwidth } => CoefficientSpec::banded(beta, p, bandwidth),
        }
    }

    fn key(&self) -> u64 {
        match *self {
            StructureConfig::Toeplitz => 0,
            StructureConfig::Banded { bandwidth } => 1 + bandwidth as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid_n: Vec<usize>,
    pub grid_p: Vec<usize>,
    pub betas: Vec<f64>,
    #[serde(default = "default_structure")]
    pub structure: StructureConfig,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub block_rule: BlockRule,
    #[serde(default = "default_targets")]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Wall-clock times make the CSV non-reproducible, so they are written
    /// as 0 unless requested.
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default)]
    pub truncation_len: Option<usize>,
    #[serde(default = "default_max_fft_len")]
    pub max_fft_len: usize,
}

fn default_structure() -> StructureConfig {
    StructureConfig::Toeplitz
}

fn default_replicates() -> usize {
    200
}

fn default_targets() -> Vec<Target> {
    Target::ALL.to_vec()
}

fn default_workers() -> usize {
    1
}

fn default_max_fft_len() -> usize {
    DEFAULT_MAX_FFT_LEN
}

impl ExperimentConfig {
    /// The desk-scale default grid written to `output_dir`.
    pub fn desk_default(output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            grid_n: vec![200, 500, 1000, 2000],
            grid_p: vec![2, 5, 10],
            betas: vec![2.0, 0.9, 0.55],
            structure: default_structure(),
            replicates: default_replicates(),
            block_rule: BlockRule::Default,
            targets: default_targets(),
            seed: 0,
            output_dir: output_dir.into(),
            workers: 1,
            record_runtime: false,
            truncation_len: None,
            max_fft_len: DEFAULT_MAX_FFT_LEN,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.grid_n.contains(&0) || self.grid_p.contains(&0) {
            return bad("grid sizes must be positive".into());
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return bad(format!("beta {b} must be positive and finite"));
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        if self.targets.is_empty() {
            return bad("at least one target is required".into());
        }
        Ok(())
    }

    /// Cell coordinates in output order.
    pub fn grid(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for &n in &self.grid_n {
            for &p in &self.grid_p {
                for &beta in &self.betas {
                    out.push((n, p, beta));
                }
            }
        }
        out
    }

    pub fn cell_seed(&self, n: usize, p: usize, beta: f64) -> u64 {
        rng::derive_seed(self.seed, &[n as u64, p as u64, beta.to_bits(), self.structure.key()])
    }

    pub fn cell(&self, n: usize, p: usize, beta: f64) -> Result<Cell> {
        let spec = self.structure.spec(beta, p)?;
        let block_len = self.block_rule.resolve(n, p, Some(beta))?;
        let mut targets = self.targets.clone();
        targets.sort();
        targets.dedup();
        Ok(Cell {
            spec,
            n,
            replicates: self.replicates,
            block_len,
            targets,
            seed: self.cell_seed(n, p, beta),
            truncation_len: self.truncation_len,
            max_fft_len: self.max_fft_len,
        })
    }
}

/// `%.6g`-style formatting.
pub fn format_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn cell_name(n: usize, p: usize, beta: f64) -> String {
    format!("n{n}_p{p}_beta{}", format_g6(beta))
}

fn result_line(r: &CellResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{}\n",
        r.n,
        r.p,
        format_g6(r.beta),
        r.kind.as_str(),
        format_g6(r.ks),
        format_g6(r.w1),
        r.runtime_ms,
        r.seed
    )
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Summary of a finished grid.
#[derive(Clone, Debug, Default)]
pub struct GridSummary {
    pub rows: Vec<CellResult>,
    pub failures: usize,
    pub results_path: PathBuf,
    pub failures_path: PathBuf,
}

struct Writers {
    dir: PathBuf,
    results: BufWriter<File>,
    failures: BufWriter<File>,
}

impl Writers {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            let header = if name == "results.csv" { RESULTS_HEADER } else { FAILURES_HEADER };
            writeln!(w, "{header}").map_err(|e| Error::io(&path, e))?;
            w.flush().map_err(|e| Error::io(&path, e))?;
            Ok(w)
        };
        Ok(Writers {
            dir: dir.to_path_buf(),
            results: open("results.csv")?,
            failures: open("failures.csv")?,
        })
    }

    fn failure(&mut self, n: usize, p: usize, beta: f64, kind: &str, reason: &str) -> Result<()> {
        let path = self.dir.join("failures.csv");
        let line = format!("{n},{p},{},{kind},{}\n", format_g6(beta), csv_field(reason));
        self.failures.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        self.failures.flush().map_err(|e| Error::io(&path, e))
    }

    fn results(&mut self, rows: &[CellResult]) -> Result<()> {
        let path = self.dir.join("results.csv");
        for r in rows {
            self.results.write_all(result_line(r).as_bytes()).map_err(|e| Error::io(&path, e))?;
        }
        self.results.flush().map_err(|e| Error::io(&path, e))
    }

    fn sidecars(&self, name: &str, out: &CellOutput, targets: &[Target]) -> Result<()> {
        for &t in targets {
            let Some((a, b)) = out.samples.pair(t) else { continue };
            let q = QQ_POINTS.min(a.len().max(b.len())).max(2);
            let mut text = String::from("x,y\n");
            for (x, y) in metrics::qq_pairs(a, b, q)? {
                text.push_str(&format!("{},{}\n", format_g6(x), format_g6(y)));
            }
            let path = self.dir.join(format!("qq_{name}_{}.csv", t.as_str()));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        let labelled = out.samples.labelled();
        if !labelled.is_empty() {
            let mut text = String::from("value,statistic,F\n");
            for (label, values) in labelled {
                for (x, f) in metrics::ecdf_points(values)? {
                    text.push_str(&format!("{},{label},{}\n", format_g6(x), format_g6(f)));
                }
            }
            let path = self.dir.join(format!("ecdf_{name}.csv"));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Runs every cell of the grid. Cells execute on up to `workers` threads;
/// rows are written in grid order as soon as all earlier cells are done.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridSummary> {
    config.validate()?;
    let mut writers = Writers::create(&config.output_dir)?;
    let grid = config.grid();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<(Cell, CellOutput)>)>();
    let mut summary = GridSummary {
        results_path: config.output_dir.join("results.csv"),
        failures_path: config.output_dir.join("failures.csv"),
        ..GridSummary::default()
    };

    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..config.workers.min(grid.len()) {
            let tx = tx.clone();
            let (next, grid) = (&next, &grid);
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(n, p, beta)) = grid.get(idx) else { break };
                log::info!("cell {}/{}: n={n} p={p} beta={beta}", idx + 1, grid.len());
                let outcome = config.cell(n, p, beta).and_then(|cell| {
                    let out = run_cell(&cell)?;
                    Ok((cell, out))
                });
                if tx.send((idx, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut written = 0;
        for (idx, outcome) in rx.iter() {
            pending.insert(idx, outcome);
            while let Some(outcome) = pending.remove(&written) {
                let (n, p, beta) = grid[written];
                written += 1;
                match outcome {
                    Ok((cell, mut out)) => {
                        if !config.record_runtime {
                            out.results.iter_mut().for_each(|r| r.runtime_ms = 0);
                        }
                        writers.results(&out.results)?;
                        for (t, reason) in &out.failures {
                            writers.failure(n, p, beta, t.as_str(), reason)?;
                            summary.failures += 1;
                        }
                        writers.sidecars(&cell_name(n, p, beta), &out, &cell.targets)?;
                        summary.rows.extend(out.results);
                    }
                    Err(e) => {
                        log::warn!("cell n={n} p={p} beta={beta} failed: {e}");
                        writers.failure(n, p, beta, "cell", &e.to_string())?;
                        summary.failures += 1;
                    }
                }
            }
        }
        Ok(())
    })?;
    Ok(summary)
}
