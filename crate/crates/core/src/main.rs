use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use causal_alloc::config::{validate_config, ExperimentConfig};
use causal_alloc::eval::Scenario;
use causal_alloc::experiment::{run_experiment, simulate_populations};
use causal_alloc::plot::emit_plot;

#[derive(Debug, Parser)]
#[command(name = "causal-alloc", version, about = "Compare CATE-driven treatment allocations with oracle allocations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the training and test populations of one simulation as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Simulation index.
        #[arg(long, default_value_t = 0)]
        sim: usize,
    },
    /// Run every setting, scenario and budget.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Draw an SVG chart from an aggregate CSV.
    Plot {
        /// Aggregate CSV written by `run`.
        #[arg(long)]
        input: PathBuf,
        /// TOPK or CE.
        #[arg(long, default_value = "TOPK")]
        scenario: String,
        /// Output directory (defaults to the input's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file and print its fully defaulted form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Config file; all defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = one per core (overrides `threads`).
    #[arg(long)]
    threads: Option<usize>,
    /// Use the true effects in place of estimates.
    #[arg(long)]
    oracle_model: bool,
}

impl Common {
    fn load(&self) -> causal_alloc::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => validate_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if self.oracle_model {
            cfg.oracle_model = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> causal_alloc::Result<()> {
    match command {
        Command::Validate { config } => {
            let cfg = validate_config(&config)?;
            print!("{}", cfg.to_text());
        }
        Command::Simulate { common, sim } => {
            let cfg = common.load()?;
            for path in simulate_populations(&cfg, sim, &cfg.output_dir)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Run { common } => {
            let cfg = common.load()?;
            let out = run_experiment(&cfg)?;
            println!(
                "wrote {} records to {} in {:.1} s",
                out.records.len(),
                out.output_dir.display(),
                out.manifest.wall_time_seconds
            );
            if out.manifest.node_limit_hits > 0 {
                eprintln!(
                    "warning: {} knapsack solves hit the node limit; their allocations are the best found",
                    out.manifest.node_limit_hits
                );
            }
        }
        Command::Plot { input, scenario, out } => {
            let scenario: Scenario = scenario.parse()?;
            let dir = out.unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
            let path = dir.join(format!("f1_{}.svg", scenario.as_str().to_lowercase()));
            emit_plot(&input, scenario, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

