use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mapfrd_bench::commands::{calibrate, evaluate, gen_data, mape, runtime};
use mapfrd_bench::{BenchError, ExperimentConfig};
use mapfrd_core::estimator::EstimatorKind;

#[derive(Parser)]
#[command(name = "mapfrd", version, about = "Deadline-aware multi-agent planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Capture LNS plans, simulate them and write a labelled graph dataset.
    GenData(ConfigArgs),
    /// Plan with every estimator and report penalty gaps to the per-instance best.
    Evaluate(ConfigArgs),
    /// Per (map, M, estimator) MAPE on a dataset split.
    Mape(MapeCli),
    /// Graph construction, encoding and estimation times.
    Runtime(ConfigArgs),
    /// Grid search of the deadline scale for a ~50% miss rate.
    Calibrate(ConfigArgs),
}

/// A config file plus per-key overrides; every key may also be given
/// on the command line alone.
#[derive(Args)]
struct ConfigArgs {
    /// `key = value` experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    maps: Option<String>,
    #[arg(long)]
    agents: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    planner: Option<String>,
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long = "k-d")]
    k_d: Option<String>,
    #[arg(long = "k-d-candidates")]
    k_d_candidates: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    neighborhood: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long = "predictor-timeout-s")]
    predictor_timeout_s: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, BenchError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(BenchError::io(path))?;
                ExperimentConfig::parse_unvalidated(&text)?
            }
            None => ExperimentConfig::default(),
        };
        let overrides = [
            ("maps", &self.maps),
            ("agents", &self.agents),
            ("seeds", &self.seeds),
            ("planner", &self.planner),
            ("estimators", &self.estimators),
            ("penalty", &self.penalty),
            ("k_d", &self.k_d),
            ("k_d_candidates", &self.k_d_candidates),
            ("budget", &self.budget),
            ("noise", &self.noise),
            ("neighborhood", &self.neighborhood),
            ("output", &self.output),
            ("predictor", &self.predictor),
            ("predictor_timeout_s", &self.predictor_timeout_s),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v.trim())?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct MapeCli {
    /// Directory written by `gen-data`.
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated estimator kinds.
    #[arg(long, default_value = "const:0.05,sim", value_delimiter = ',')]
    estimators: Vec<EstimatorKind>,
    #[arg(long, default_value = "test")]
    split: mapfrd_bench::manifest::Split,
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long = "predictor-timeout-s", default_value_t = 30.0)]
    predictor_timeout_s: f64,
    /// Output CSV; defaults to `mape.csv` in the dataset directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Number of failed instances, graphs or groups.
fn run(cli: Cli) -> Result<usize, BenchError> {
    let failures = match cli.command {
        Cmd::GenData(a) => {
            let r = gen_data::gen_data(&a.load()?)?;
            println!("{} graphs from {} instances", r.graphs, r.instances);
            r.failures
        }
        Cmd::Evaluate(a) => {
            let r = evaluate::evaluate(&a.load()?)?;
            println!("map,agents,method,instances,mean_penalty,mean_vbs_gap");
            for s in &r.summary {
                println!("{},{},{},{},{:.6},{:.6}", s.map, s.agents, s.method, s.instances, s.mean_penalty, s.mean_gap);
            }
            if !r.excluded.is_empty() {
                println!("excluded: {}", r.excluded.join("; "));
            }
            r.failures
        }
        Cmd::Mape(a) => {
            let r = mape::mape_table(&mape::MapeArgs {
                dataset: a.dataset,
                estimators: a.estimators,
                split: a.split,
                predictor: a.predictor,
                predictor_timeout_s: a.predictor_timeout_s,
                output: a.output,
            })?;
            println!("map,agents,estimator,graphs,mape");
            for row in &r.rows {
                println!("{},{},{},{},{:.2} ± {:.2}", row.map, row.agents, row.estimator, row.graphs, row.mean, row.stderr);
            }
            r.failures
        }
        Cmd::Runtime(a) => {
            let r = runtime::runtime(&a.load()?)?;
            println!("map,agents,seed,nodes,estimator,build_ms,encode_ms,estimate_ms");
            for row in &r.rows {
                println!(
                    "{},{},{},{},{},{:.3},{:.3},{:.3}",
                    row.key.label, row.key.agents, row.key.seed, row.nodes, row.estimator, row.build_ms, row.encode_ms, row.estimate_ms
                );
            }
            r.failures
        }
        Cmd::Calibrate(a) => {
            let r = calibrate::calibrate(&a.load()?)?;
            for row in &r.rows {
                println!("{} M={}: k_d = {}", row.map, row.agents, row.k_d);
            }
            r.failures
        }
    };
    for f in &failures {
        eprintln!("failed: {f}");
    }
    Ok(failures.len())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} failures");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
