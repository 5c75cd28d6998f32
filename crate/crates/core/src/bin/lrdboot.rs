use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use lrdboot::bootstrap::{self, BlockRule};
use lrdboot::estimate;
use lrdboot::harness::{self, ExperimentConfig, StructureConfig};
use lrdboot::metrics;
use lrdboot::pipeline::{self, PipelineConfig};
use lrdboot::simulate::{self, SimulationPlan};
use lrdboot::{Error, Result};

#[derive(Parser)]
#[command(name = "lrdboot", version, about = "Bootstrap inference for covariance and precision matrices of long-memory Gaussian series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo grid described by a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate copies of the linear process into an LRDSIM1 file.
    Simulate {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        /// `toeplitz` or `banded:<bandwidth>`.
        #[arg(long, default_value = "toeplitz")]
        structure: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        copies: usize,
        /// Truncation length N (default n^2).
        #[arg(long)]
        truncation_len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simultaneous confidence region for the covariance or precision matrix of a CSV table.
    BootstrapCi {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// `default`, `fixed:<l>` or `theoretical:<eps>[:<scale>]`.
        #[arg(long, default_value = "default")]
        block_rule: String,
        /// Needed by the theoretical block rule.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, value_enum, default_value_t = Kind::Covariance)]
        kind: Kind,
        /// Optional CSV of entrywise bounds `row,col,estimate,lower,upper`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kolmogorov and Wasserstein-1 distances between two samples.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Per-subject precision graphs and the aggregated group graph.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.02)]
        sparsity: f64,
        #[arg(long, default_value = "default")]
        block_rule: String,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Covariance,
    Precision,
}

fn parse_structure(s: &str) -> Result<StructureConfig> {
    match s.split_once(':') {
        None if s == "toeplitz" => Ok(StructureConfig::Toeplitz),
        Some(("banded", b)) => b
            .parse()
            .map(|bandwidth| StructureConfig::Banded { bandwidth })
            .map_err(|_| Error::InvalidArgument(format!("bad bandwidth in `{s}`"))),
        _ => Err(Error::InvalidArgument(format!("unknown structure `{s}`"))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Experiment { config } => {
            let config = ExperimentConfig::load(&config)?;
            let summary = harness::run_grid(&config)?;
            println!(
                "{} rows written to {}, {} failures",
                summary.rows.len(),
                summary.results_path.display(),
                summary.failures
            );
        }
        Command::Simulate { beta, n, p, structure, seed, copies, truncation_len, out } => {
            let spec = parse_structure(&structure)?.spec(beta, p)?;
            let mut plan = SimulationPlan::new(spec, n, seed, copies);
            if let Some(len) = truncation_len {
                plan = plan.with_truncation_len(len);
            }
            plan.spec = plan.spec.clone().with_truncation(plan.truncation_len - 1);
            let batch = simulate::simulate_multidimensional(&plan)?;
            fs::write(&out, simulate::encode_batch(&batch)).map_err(|e| Error::Io { path: out.clone(), source: e })?;
        }
        Command::BootstrapCi { data, alpha, block_rule, beta, kind, out } => {
            let rule: BlockRule = block_rule.parse()?;
            let subject = pipeline::ingest(&data)?;
            let (n, p) = subject.data.shape();
            let l = rule.resolve(n, p, beta)?;
            let est = estimate::sample_covariance(&subject.data)?;
            let (center, dist) = match kind {
                Kind::Covariance => (est.sigma_hat.clone(), bootstrap::covariance_blocks(&subject.data, l)?),
                Kind::Precision => {
                    let omega = estimate::sample_precision(&est)?;
                    let dist = bootstrap::precision_blocks_with(&subject.data, l, &omega)?;
                    (omega, dist)
                }
            };
            let region = bootstrap::confidence_region(&center, &dist, n, alpha)?;
            if let Some(path) = out {
                let mut text = String::from("row,col,estimate,lower,upper\n");
                for j in 0..p {
                    for k in 0..p {
                        let c = center[(j, k)];
                        text.push_str(&format!(
                            "{},{},{},{},{}\n",
                            subject.labels[j],
                            subject.labels[k],
                            c,
                            c - region.half_width,
                            c + region.half_width
                        ));
                    }
                }
                fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            }
            let summary = json!({
                "n": n,
                "p": p,
                "l": l,
                "alpha": alpha,
                "quantile": region.half_width * (n as f64).sqrt(),
                "half_width": region.half_width,
                "kind": match kind { Kind::Covariance => "covariance", Kind::Precision => "precision" },
            });
            println!("{summary}");
        }
        Command::Metrics { a, b } => {
            let read = |path: &PathBuf| -> Result<Vec<f64>> {
                let file = fs::File::open(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                metrics::read_sample(file)
            };
            let report = metrics::compare(&read(&a)?, &read(&b)?)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Pipeline { out, alpha, sparsity, block_rule, inputs } => {
            let config = PipelineConfig { alpha, sparsity, block_rule: block_rule.parse()?, ..PipelineConfig::default() };
            let output = pipeline::run_pipeline(&inputs, &config, &out)?;
            println!(
                "{} subjects, {} group edges written to {}",
                output.subjects.len(),
                output.group.edges.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
