//! Allocation agreement between estimated and oracle effects.
//!
//! A [`Study`] holds the fixed parts of an experiment (outcome model,
//! training and test cohorts, shift weights). Each simulation redraws
//! training outcomes, treatment and test costs, builds the training set for
//! a setting, fits the X-learner, and scores every scenario and budget by
//! F1 overlap with the allocation made from the true effects.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{
    generate_covariates, sample_coefficients, simulate_population, standardize, CovariateMatrix,
    CovariateSchema, DgpCoefficients, PopulationSample,
};
use crate::error::{Error, Result};
use crate::learners::forest::ForestParams;
use crate::learners::xlearner::{fit_xlearner, predict_cate, XLearnerConfig, XLearnerModel};
use crate::policy::{self, AllocationVector, PolicySpec, SolveStatus};
use crate::seed;
use crate::shift::{fit_domain_classifier, resample_shifted, shift_weights_with, ShiftWeights};

pub const RESULTS_HEADER: [&str; 8] = [
    "setting",
    "scenario",
    "budget_fraction",
    "seed",
    "f1",
    "pehe",
    "n_allocated",
    "oracle_size",
];

pub const AGGREGATE_HEADER: [&str; 8] = [
    "setting",
    "scenario",
    "budget_fraction",
    "f1_mean",
    "f1_sd",
    "pehe_mean",
    "pehe_sd",
    "n_sims",
];

/// Budget fraction recorded for unbudgeted (UC) rows.
pub const UNBUDGETED: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    Baseline,
    Limited,
    Shifted,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::Baseline, Setting::Limited, Setting::Shifted];

    pub fn as_str(&self) -> &'static str {
        match self {
            Setting::Baseline => "baseline",
            Setting::Limited => "limited",
            Setting::Shifted => "shifted",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown setting `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Uc,
    TopK,
    Ce,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Uc, Scenario::TopK, Scenario::Ce];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Uc => "UC",
            Scenario::TopK => "TOPK",
            Scenario::Ce => "CE",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub setting: Setting,
    pub scenario: Scenario,
    pub budget_fraction: f64,
    pub seed: u64,
    pub f1: f64,
    pub pehe: f64,
    pub n_allocated: usize,
    pub oracle_size: usize,
}

/// Applies the policy to the true effects (and true costs).
pub fn oracle_allocation(tau_true: &[f64], costs: Option<&[f64]>, spec: &PolicySpec) -> Result<AllocationVector> {
    policy::allocate(tau_true, costs, spec)
}

/// `2|A ∩ O| / (|A| + |O|)`; 1 when both sets are empty.
pub fn f1_agreement(allocation: &AllocationVector, oracle: &AllocationVector) -> Result<f64> {
    if allocation.len() != oracle.len() {
        return Err(Error::invalid(format!(
            "allocation covers {} units, oracle {}",
            allocation.len(),
            oracle.len()
        )));
    }
    let a = allocation.n_selected();
    let o = oracle.n_selected();
    if a + o == 0 {
        return Ok(1.0);
    }
    let both = allocation
        .decisions
        .iter()
        .zip(&oracle.decisions)
        .filter(|(x, y)| **x && **y)
        .count();
    Ok(2.0 * both as f64 / (a + o) as f64)
}

/// Root mean squared error between estimated and true effects.
pub fn pehe(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64> {
    if tau_hat.is_empty() {
        return Err(Error::invalid("pehe of an empty vector"));
    }
    if tau_hat.len() != tau_true.len() {
        return Err(Error::invalid("effect vectors differ in length"));
    }
    let mse = tau_hat.iter().zip(tau_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / tau_hat.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub setting: Setting,
    pub scenario: Scenario,
    pub budget_fraction: f64,
    pub f1_mean: f64,
    pub f1_sd: f64,
    pub pehe_mean: f64,
    pub pehe_sd: f64,
    pub n_sims: usize,
}

/// Mean and sample standard deviation (0 for one value). Values are sorted
/// first so the result does not depend on input order.
fn mean_sd(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

pub fn aggregate(records: &[SweepRecord]) -> Result<Vec<AggregateRow>> {
    if records.is_empty() {
        return Err(Error::invalid("no records to aggregate"));
    }
    let mut groups: BTreeMap<(Setting, Scenario, u64), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        // nonnegative floats order like their bit patterns
        let key = (r.setting, r.scenario, r.budget_fraction.to_bits());
        let g = groups.entry(key).or_default();
        g.0.push(r.f1);
        g.1.push(r.pehe);
    }
    Ok(groups
        .into_iter()
        .map(|((setting, scenario, bits), (mut f1, mut pe))| {
            let (f1_mean, f1_sd) = mean_sd(&mut f1);
            let (pehe_mean, pehe_sd) = mean_sd(&mut pe);
            AggregateRow {
                setting,
                scenario,
                budget_fraction: f64::from_bits(bits),
                f1_mean,
                f1_sd,
                pehe_mean,
                pehe_sd,
                n_sims: f1.len(),
            }
        })
        .collect())
}

pub fn write_results<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record([
            r.setting.as_str().to_string(),
            r.scenario.as_str().to_string(),
            r.budget_fraction.to_string(),
            r.seed.to_string(),
            r.f1.to_string(),
            r.pehe.to_string(),
            r.n_allocated.to_string(),
            r.oracle_size.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_aggregate<W: Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.setting.as_str().to_string(),
            r.scenario.as_str().to_string(),
            r.budget_fraction.to_string(),
            r.f1_mean.to_string(),
            r.f1_sd.to_string(),
            r.pehe_mean.to_string(),
            r.pehe_sd.to_string(),
            r.n_sims.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing column `{name}`"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse `{raw}` as {name}"),
    })
}

/// Parses an aggregate CSV; errors carry 1-based line numbers.
pub fn read_aggregate<R: Read>(input: R) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != AGGREGATE_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", AGGREGATE_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != AGGREGATE_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", AGGREGATE_HEADER.len(), rec.len()),
            });
        }
        let setting: String = field(&rec, 0, "setting", line)?;
        let scenario: String = field(&rec, 1, "scenario", line)?;
        rows.push(AggregateRow {
            setting: setting.parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?,
            scenario: scenario.parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?,
            budget_fraction: field(&rec, 2, "budget_fraction", line)?,
            f1_mean: field(&rec, 3, "f1_mean", line)?,
            f1_sd: field(&rec, 4, "f1_sd", line)?,
            pehe_mean: field(&rec, 5, "pehe_mean", line)?,
            pehe_sd: field(&rec, 6, "pehe_sd", line)?,
            n_sims: field(&rec, 7, "n_sims", line)?,
        });
    }
    Ok(rows)
}

/// Everything a sweep needs, independent of the config file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Drives outcome simulations, resampling and model fitting.
    pub master_seed: u64,
    /// Drives the fixed cohorts and outcome-model coefficients.
    pub dgp_seed: u64,
    pub n_train: usize,
    pub n_limited: usize,
    pub n_test: usize,
    pub n_sims: usize,
    pub shift_q: u32,
    pub shift_m: usize,
    pub signed_weights: bool,
    pub budget_fractions: Vec<f64>,
    pub drift: Vec<f64>,
    pub noise_sd: f64,
    pub xlearner: XLearnerConfig,
    pub forest: ForestParams,
    pub oracle_model: bool,
    pub node_limit: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            dgp_seed: DEFAULT_DGP_SEED,
            n_train: 5000,
            n_limited: 500,
            n_test: 5000,
            n_sims: 10,
            shift_q: crate::shift::DEFAULT_Q,
            shift_m: 5000,
            signed_weights: false,
            budget_fractions: default_budget_fractions(),
            drift: default_drift(),
            noise_sd: crate::dgp::DEFAULT_NOISE_SD,
            xlearner: XLearnerConfig::default(),
            forest: ForestParams::default(),
            oracle_model: false,
            node_limit: policy::DEFAULT_NODE_LIMIT,
        }
    }
}

pub const DEFAULT_DGP_SEED: u64 = 2016;

/// 0.05, 0.10, ..., 0.95.
pub fn default_budget_fractions() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Test-cohort drift: two years younger, fewer unemployment days and higher
/// income (log-scale shifts for the last two).
pub fn default_drift() -> Vec<f64> {
    let schema = CovariateSchema::jobseekers();
    let mut drift = vec![0.0; schema.len()];
    for (name, v) in [("yearofbirth", 2.0), ("age", -2.0), ("cumul_ue", -0.3), ("income", 0.15)] {
        drift[schema.index_of(name).expect("schema column")] = v;
    }
    drift
}

#[derive(Debug, Clone)]
pub struct CellOutput {
    pub records: Vec<SweepRecord>,
    pub node_limit_hits: usize,
    pub models: Vec<(Setting, usize, XLearnerModel)>,
}

#[derive(Debug, Clone)]
pub struct Study {
    pub config: StudyConfig,
    pub coefficients: DgpCoefficients,
    pub train_x: CovariateMatrix,
    pub test_x: CovariateMatrix,
    /// Domain-classifier probabilities on the training cohort.
    pub sigma: Vec<f64>,
    pub weights: ShiftWeights,
}

impl Study {
    pub fn new(config: StudyConfig) -> Result<Self> {
        let schema = CovariateSchema::jobseekers();
        let d = schema.len();
        if config.budget_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::invalid("budget fractions must lie in (0, 1]"));
        }
        let mut coefficients = sample_coefficients(d, seed::derive(config.dgp_seed, "coefficients", &[]))?;
        coefficients.noise_sd = config.noise_sd;
        let raw_train = generate_covariates(config.n_train, &schema, &vec![0.0; d], seed::derive(config.dgp_seed, "train-cohort", &[]))?;
        let raw_test = generate_covariates(config.n_test, &schema, &config.drift, seed::derive(config.dgp_seed, "test-cohort", &[]))?;
        let train_x = standardize(&raw_train, None)?;
        let test_x = standardize(&raw_test, train_x.stats.as_ref())?;

        let classifier = fit_domain_classifier(
            &train_x.values,
            &test_x.values,
            &config.forest,
            seed::derive(config.master_seed, "domain-classifier", &[]),
        )?;
        let sigma = classifier.predict(&train_x.values)?;
        let weights = shift_weights_with(&sigma, config.shift_q, config.signed_weights)?;
        Ok(Self {
            config,
            coefficients,
            train_x,
            test_x,
            sigma,
            weights,
        })
    }

    pub fn simulation_seed(&self, sim: usize) -> u64 {
        seed::derive(self.config.master_seed, "simulation", &[sim as u64])
    }

    pub fn training_population(&self, sim: usize) -> Result<PopulationSample> {
        simulate_population(&self.coefficients, &self.train_x, seed::derive(self.simulation_seed(sim), "train", &[]))
    }

    pub fn test_population(&self, sim: usize) -> Result<PopulationSample> {
        simulate_population(&self.coefficients, &self.test_x, seed::derive(self.simulation_seed(sim), "test", &[]))
    }

    /// The training set of `setting` for simulation `sim`.
    pub fn training_sample(&self, setting: Setting, sim: usize) -> Result<PopulationSample> {
        let full = self.training_population(sim)?;
        let s = self.simulation_seed(sim);
        match setting {
            Setting::Baseline => Ok(full),
            Setting::Limited => {
                let m = self.config.n_limited;
                if m > full.len() {
                    return Err(Error::invalid(format!("n_limited = {m} exceeds n_train = {}", full.len())));
                }
                let mut idx = index::sample(&mut seed::rng(seed::derive(s, "limited", &[])), full.len(), m).into_vec();
                idx.sort_unstable();
                Ok(full.select(&idx))
            }
            Setting::Shifted => resample_shifted(&full, &self.weights, self.config.shift_m, seed::derive(s, "shifted", &[])),
        }
    }

    pub fn fit_model(&self, setting: Setting, sim: usize) -> Result<XLearnerModel> {
        let train = self.training_sample(setting, sim)?;
        let fit_seed = seed::derive(self.simulation_seed(sim), "fit", &[setting as u64]);
        fit_xlearner(&train, &self.config.xlearner, fit_seed)
    }

    /// Effect estimates on the test cohort, plus the model behind them
    /// (none in oracle mode).
    pub fn estimate_effects(
        &self,
        setting: Setting,
        sim: usize,
        test: &PopulationSample,
    ) -> Result<(Vec<f64>, Option<XLearnerModel>)> {
        if self.config.oracle_model {
            return Ok((test.tau_true.clone(), None));
        }
        let model = self.fit_model(setting, sim)?;
        Ok((predict_cate(&model, &test.x.values)?, Some(model)))
    }

    /// Every scenario and budget for one (setting, simulation) cell.
    pub fn run_cell(&self, setting: Setting, sim: usize) -> Result<CellOutput> {
        self.run_cell_scenarios(setting, sim, &Scenario::ALL)
    }

    fn run_cell_scenarios(&self, setting: Setting, sim: usize, scenarios: &[Scenario]) -> Result<CellOutput> {
        let test = self.test_population(sim)?;
        let (tau_hat, model) = self.estimate_effects(setting, sim, &test)?;
        let err = pehe(&tau_hat, &test.tau_true)?;
        let seed = self.simulation_seed(sim);
        let n = test.len();
        let mut out = CellOutput {
            records: Vec::new(),
            node_limit_hits: 0,
            models: model.map(|m| vec![(setting, sim, m)]).unwrap_or_default(),
        };
        for &scenario in scenarios {
            let specs: Vec<(f64, PolicySpec)> = match scenario {
                Scenario::Uc => vec![(UNBUDGETED, PolicySpec::Unconstrained)],
                Scenario::TopK => self
                    .config
                    .budget_fractions
                    .iter()
                    .map(|&f| (f, PolicySpec::TopK(((f * n as f64).round() as usize).min(n))))
                    .collect(),
                Scenario::Ce => self
                    .config
                    .budget_fractions
                    .iter()
                    .map(|&f| (f, PolicySpec::CostEfficient(f * n as f64)))
                    .collect(),
            };
            for (fraction, spec) in specs {
                let (est, oracle) = match spec {
                    PolicySpec::CostEfficient(budget) => (
                        policy::allocate_cost_efficient_with_limit(&tau_hat, &test.costs, budget, self.config.node_limit)?,
                        policy::allocate_cost_efficient_with_limit(&test.tau_true, &test.costs, budget, self.config.node_limit)?,
                    ),
                    _ => (
                        policy::allocate(&tau_hat, None, &spec)?,
                        oracle_allocation(&test.tau_true, None, &spec)?,
                    ),
                };
                out.node_limit_hits += [&est, &oracle]
                    .iter()
                    .filter(|a| a.status == SolveStatus::NodeLimitHit)
                    .count();
                out.records.push(SweepRecord {
                    setting,
                    scenario,
                    budget_fraction: fraction,
                    seed,
                    f1: f1_agreement(&est, &oracle)?,
                    pehe: err,
                    n_allocated: est.n_selected(),
                    oracle_size: oracle.n_selected(),
                });
            }
        }
        Ok(out)
    }

    /// One scenario across all simulations of a setting.
    pub fn run_scenario(&self, setting: Setting, scenario: Scenario) -> Result<Vec<SweepRecord>> {
        let cells: Vec<Result<CellOutput>> = (0..self.config.n_sims)
            .into_par_iter()
            .map(|sim| self.run_cell_scenarios(setting, sim, &[scenario]))
            .collect();
        let mut records = Vec::new();
        for c in cells {
            records.extend(c?.records);
        }
        Ok(records)
    }

    /// All settings × simulations, in (setting, simulation, scenario, budget)
    /// order. Fitted models are dropped unless `keep_models`. Errors name the
    /// failing cell.
    pub fn run_all(&self, keep_models: bool) -> Result<CellOutput> {
        let cells: Vec<(Setting, usize)> = Setting::ALL
            .iter()
            .flat_map(|&s| (0..self.config.n_sims).map(move |k| (s, k)))
            .collect();
        let outputs: Vec<Result<CellOutput>> = cells
            .par_iter()
            .map(|&(setting, sim)| {
                let cell = self.run_cell(setting, sim).map(|mut c| {
                    if !keep_models {
                        c.models.clear();
                    }
                    c
                });
                cell.map_err(|e| match e {
                    Error::InvalidArgument(m) => Error::InvalidArgument(format!("cell ({setting}, sim {sim}): {m}")),
                    Error::Contract(m) => Error::Contract(format!("cell ({setting}, sim {sim}): {m}")),
                    other => Error::Contract(format!("cell ({setting}, sim {sim}): {other}")),
                })
            })
            .collect();
        let mut total = CellOutput {
            records: Vec::new(),
            node_limit_hits: 0,
            models: Vec::new(),
        };
        for o in outputs {
            let o = o?;
            total.records.extend(o.records);
            total.node_limit_hits += o.node_limit_hits;
            total.models.extend(o.models);
        }
        Ok(total)
    }
}
