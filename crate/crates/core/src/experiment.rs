//! End-to-end runs: every setting × scenario × budget, written to disk.
//!
//! Output files (all written once via write-then-rename):
//! `results.csv`, `aggregate.csv`, `manifest.json`, and optionally
//! `shift_diagnostics.csv` and `models/<setting>_sim<k>.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{aggregate, write_aggregate, write_results, AggregateRow, Study, SweepRecord};
use crate::io::write_atomic;
use crate::shift::write_diagnostics;

pub const MANIFEST_FORMAT: &str = "causal-alloc/manifest";

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub format: &'static str,
    pub code_version: &'static str,
    /// Canonical config text; feeding it back to `run` repeats the run.
    pub config_text: String,
    pub config: ExperimentConfig,
    pub wall_time_seconds: f64,
    pub n_records: usize,
    pub node_limit_hits: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<SweepRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub manifest: Manifest,
    pub output_dir: PathBuf,
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Builds a worker pool of `threads` workers (0 = one per core).
pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Contract(format!("cannot start worker pool: {e}")))
}

/// Runs the experiment and writes its files into `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let pool = thread_pool(config.threads)?;
    let (study, cells) = pool.install(|| -> Result<_> {
        let study = Study::new(config.study_config())?;
        let cells = study.run_all(config.save_models)?;
        Ok((study, cells))
    })?;
    let rows = aggregate(&cells.records)?;

    let dir = &config.output_dir;
    let mut files = vec!["results.csv".to_string(), "aggregate.csv".to_string()];
    write_atomic(&dir.join("results.csv"), &csv_bytes(|b| write_results(b, &cells.records))?)?;
    write_atomic(&dir.join("aggregate.csv"), &csv_bytes(|b| write_aggregate(b, &rows))?)?;
    if config.save_diagnostics {
        let ids: Vec<usize> = (0..study.sigma.len()).collect();
        let bytes = csv_bytes(|b| write_diagnostics(b, &ids, &study.sigma, &study.weights))?;
        write_atomic(&dir.join("shift_diagnostics.csv"), &bytes)?;
        files.push("shift_diagnostics.csv".into());
    }
    for (setting, sim, model) in &cells.models {
        let name = format!("models/{setting}_sim{sim}.json");
        write_atomic(&dir.join(&name), model.to_json()?.as_bytes())?;
        files.push(name);
    }

    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        code_version: env!("CARGO_PKG_VERSION"),
        config_text: config.to_text(),
        config: config.clone(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        n_records: cells.records.len(),
        node_limit_hits: cells.node_limit_hits,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(RunOutput {
        records: cells.records,
        aggregate: rows,
        manifest,
        output_dir: dir.clone(),
    })
}

/// Writes the training and test populations of simulation `sim`.
pub fn simulate_populations(config: &ExperimentConfig, sim: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let pool = thread_pool(config.threads)?;
    let study = pool.install(|| Study::new(config.study_config()))?;
    let mut written = Vec::new();
    for (name, pop) in [
        ("population_train.csv", study.training_population(sim)?),
        ("population_test.csv", study.test_population(sim)?),
    ] {
        let path = dir.join(name);
        write_atomic(&path, &csv_bytes(|b| pop.write_csv_to(b))?)?;
        written.push(path);
    }
    Ok(written)
}
