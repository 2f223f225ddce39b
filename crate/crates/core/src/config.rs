//! Experiment configuration: a flat `key = value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Every key is optional; unknown or repeated keys are errors.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `master_seed` | 0 | outcome simulations, resampling, fitting |
//! | `dgp_seed` | 2016 | cohorts and outcome-model coefficients |
//! | `n_train` | 5000 | training cohort size |
//! | `n_limited` | 500 | training size in the limited setting |
//! | `n_test` | 5000 | test cohort size |
//! | `n_sims` | 10 | outcome simulations per setting |
//! | `shift_q` | 6 | shift intensity exponent |
//! | `shift_m` | `n_train` | size of the shifted resample |
//! | `signed_weights` | false | weight only target-leaning rows |
//! | `budget_fractions` | 0.05, 0.10, ..., 0.95 | budgets as fractions of `n_test` |
//! | `drift` | see [`default_drift`] | per-covariate test-cohort drift (13 values) |
//! | `noise_sd` | 0.1 | outcome noise |
//! | `gb_learning_rates` | 0.1, 0.3 | boosting grid |
//! | `gb_max_depths` | 3, 5, 8 | boosting grid |
//! | `gb_n_estimators` | 30, 100 | boosting grid |
//! | `logistic_cs` | 0.1, 1, 10, 100 | inverse regularization grid |
//! | `cv_folds` | 5 | cross-validation folds |
//! | `propensity_clip` | 0.01 | treatment-propensity clip |
//! | `forest_trees` | 100 | domain classifier trees |
//! | `forest_max_depth` | 8 | domain classifier depth |
//! | `node_limit` | 10000000 | knapsack search node limit |
//! | `oracle_model` | false | use true effects instead of estimates |
//! | `output_dir` | `results` | where `run` writes its files |
//! | `threads` | all cores | worker threads (`0` = all cores) |
//! | `save_models` | false | write fitted models as JSON |
//! | `save_diagnostics` | true | write per-row shift weights |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgp::{CovariateSchema, N_COVARIATES};
use crate::error::{Error, Result};
use crate::eval::{default_budget_fractions, default_drift, StudyConfig, DEFAULT_DGP_SEED};
use crate::learners::boosting::grid;
use crate::learners::forest::ForestParams;
use crate::learners::logistic::DEFAULT_C_GRID;
use crate::learners::xlearner::XLearnerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub dgp_seed: u64,
    pub n_train: usize,
    pub n_limited: usize,
    pub n_test: usize,
    pub n_sims: usize,
    pub shift_q: u32,
    pub shift_m: Option<usize>,
    pub signed_weights: bool,
    pub budget_fractions: Vec<f64>,
    pub drift: Vec<f64>,
    pub noise_sd: f64,
    pub gb_learning_rates: Vec<f64>,
    pub gb_max_depths: Vec<usize>,
    pub gb_n_estimators: Vec<usize>,
    pub logistic_cs: Vec<f64>,
    pub cv_folds: usize,
    pub propensity_clip: f64,
    pub forest_trees: usize,
    pub forest_max_depth: usize,
    pub node_limit: u64,
    pub oracle_model: bool,
    pub output_dir: PathBuf,
    pub threads: usize,
    pub save_models: bool,
    pub save_diagnostics: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let xl = XLearnerConfig::default();
        let forest = ForestParams::default();
        Self {
            master_seed: 0,
            dgp_seed: DEFAULT_DGP_SEED,
            n_train: 5000,
            n_limited: 500,
            n_test: 5000,
            n_sims: 10,
            shift_q: crate::shift::DEFAULT_Q,
            shift_m: None,
            signed_weights: false,
            budget_fractions: default_budget_fractions(),
            drift: default_drift(),
            noise_sd: crate::dgp::DEFAULT_NOISE_SD,
            gb_learning_rates: vec![0.1, 0.3],
            gb_max_depths: vec![3, 5, 8],
            gb_n_estimators: vec![30, 100],
            logistic_cs: DEFAULT_C_GRID.to_vec(),
            cv_folds: xl.folds,
            propensity_clip: xl.propensity_clip,
            forest_trees: forest.n_trees,
            forest_max_depth: forest.max_depth,
            node_limit: crate::policy::DEFAULT_NODE_LIMIT,
            oracle_model: false,
            output_dir: PathBuf::from("results"),
            threads: 0,
            save_models: false,
            save_diagnostics: true,
        }
    }
}

const KEYS: [&str; 26] = [
    "master_seed",
    "dgp_seed",
    "n_train",
    "n_limited",
    "n_test",
    "n_sims",
    "shift_q",
    "shift_m",
    "signed_weights",
    "budget_fractions",
    "drift",
    "noise_sd",
    "gb_learning_rates",
    "gb_max_depths",
    "gb_n_estimators",
    "logistic_cs",
    "cv_folds",
    "propensity_clip",
    "forest_trees",
    "forest_max_depth",
    "node_limit",
    "oracle_model",
    "output_dir",
    "threads",
    "save_models",
    "save_diagnostics",
];

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn scalar<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| config_error(key, format!("cannot parse `{raw}`")))
}

fn list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    if raw.trim().is_empty() {
        return Err(config_error(key, "empty list"));
    }
    raw.split(',').map(|v| scalar(key, v.trim())).collect()
}

fn boolean(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(config_error(key, format!("expected true or false, found `{raw}`"))),
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults, then range-checks.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_error(&format!("line {line_no}"), "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let known = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| Error::UnknownKey {
                    key: key.to_string(),
                    line: line_no,
                })?;
            if seen.contains(known) {
                return Err(config_error(key, format!("set twice (again on line {line_no})")));
            }
            seen.push(known);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "master_seed" => self.master_seed = scalar(key, v)?,
            "dgp_seed" => self.dgp_seed = scalar(key, v)?,
            "n_train" => self.n_train = scalar(key, v)?,
            "n_limited" => self.n_limited = scalar(key, v)?,
            "n_test" => self.n_test = scalar(key, v)?,
            "n_sims" => self.n_sims = scalar(key, v)?,
            "shift_q" => self.shift_q = scalar(key, v)?,
            "shift_m" => self.shift_m = Some(scalar(key, v)?),
            "signed_weights" => self.signed_weights = boolean(key, v)?,
            "budget_fractions" => self.budget_fractions = list(key, v)?,
            "drift" => self.drift = list(key, v)?,
            "noise_sd" => self.noise_sd = scalar(key, v)?,
            "gb_learning_rates" => self.gb_learning_rates = list(key, v)?,
            "gb_max_depths" => self.gb_max_depths = list(key, v)?,
            "gb_n_estimators" => self.gb_n_estimators = list(key, v)?,
            "logistic_cs" => self.logistic_cs = list(key, v)?,
            "cv_folds" => self.cv_folds = scalar(key, v)?,
            "propensity_clip" => self.propensity_clip = scalar(key, v)?,
            "forest_trees" => self.forest_trees = scalar(key, v)?,
            "forest_max_depth" => self.forest_max_depth = scalar(key, v)?,
            "node_limit" => self.node_limit = scalar(key, v)?,
            "oracle_model" => self.oracle_model = boolean(key, v)?,
            "output_dir" => {
                if v.is_empty() {
                    return Err(config_error(key, "empty path"));
                }
                self.output_dir = PathBuf::from(v)
            }
            "threads" => self.threads = scalar(key, v)?,
            "save_models" => self.save_models = boolean(key, v)?,
            "save_diagnostics" => self.save_diagnostics = boolean(key, v)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_train", self.n_train),
            ("n_limited", self.n_limited),
            ("n_test", self.n_test),
            ("n_sims", self.n_sims),
            ("forest_trees", self.forest_trees),
            ("forest_max_depth", self.forest_max_depth),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(config_error(field, "must be at least 1"));
            }
        }
        if self.n_limited > self.n_train {
            return Err(config_error("n_limited", format!("{} exceeds n_train = {}", self.n_limited, self.n_train)));
        }
        if self.shift_q == 0 {
            return Err(config_error("shift_q", "must be at least 1"));
        }
        if self.shift_q % 2 == 1 && !self.signed_weights {
            return Err(config_error("shift_q", "odd values need signed_weights = true"));
        }
        if self.shift_m == Some(0) {
            return Err(config_error("shift_m", "must be at least 1"));
        }
        if self.budget_fractions.is_empty() {
            return Err(config_error("budget_fractions", "empty list"));
        }
        if let Some(f) = self.budget_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(config_error("budget_fractions", format!("{f} is outside (0, 1]")));
        }
        let mut sorted = self.budget_fractions.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() != self.budget_fractions.len() {
            return Err(config_error("budget_fractions", "contains duplicates"));
        }
        if self.drift.len() != N_COVARIATES {
            return Err(config_error("drift", format!("expected {N_COVARIATES} values, found {}", self.drift.len())));
        }
        let schema = CovariateSchema::jobseekers();
        for (j, v) in self.drift.iter().enumerate() {
            if !v.is_finite() {
                return Err(config_error("drift", format!("value {j} is not finite")));
            }
            if schema.is_categorical(j) && *v != 0.0 {
                return Err(config_error(
                    "drift",
                    format!("categorical covariate `{}` cannot drift", schema.names()[j]),
                ));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(config_error("noise_sd", "must be finite and non-negative"));
        }
        if self.gb_learning_rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(config_error("gb_learning_rates", "values must lie in (0, 1]"));
        }
        if self.gb_max_depths.contains(&0) {
            return Err(config_error("gb_max_depths", "values must be at least 1"));
        }
        if self.gb_n_estimators.contains(&0) {
            return Err(config_error("gb_n_estimators", "values must be at least 1"));
        }
        if self.logistic_cs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(config_error("logistic_cs", "values must be positive and finite"));
        }
        for (field, empty) in [
            ("gb_learning_rates", self.gb_learning_rates.is_empty()),
            ("gb_max_depths", self.gb_max_depths.is_empty()),
            ("gb_n_estimators", self.gb_n_estimators.is_empty()),
            ("logistic_cs", self.logistic_cs.is_empty()),
        ] {
            if empty {
                return Err(config_error(field, "empty list"));
            }
        }
        if self.cv_folds < 2 {
            return Err(config_error("cv_folds", "must be at least 2"));
        }
        if self.n_limited < 2 * self.cv_folds {
            return Err(config_error("n_limited", format!("too small for {} folds per arm", self.cv_folds)));
        }
        if !(self.propensity_clip >= 0.0 && self.propensity_clip < 0.5) {
            return Err(config_error("propensity_clip", "must lie in [0, 0.5)"));
        }
        if self.node_limit == 0 {
            return Err(config_error("node_limit", "must be at least 1"));
        }
        Ok(())
    }

    /// Canonical config text; parsing it yields `self` again.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("master_seed = {}", self.master_seed),
            format!("dgp_seed = {}", self.dgp_seed),
            format!("n_train = {}", self.n_train),
            format!("n_limited = {}", self.n_limited),
            format!("n_test = {}", self.n_test),
            format!("n_sims = {}", self.n_sims),
            format!("shift_q = {}", self.shift_q),
        ];
        if let Some(m) = self.shift_m {
            lines.push(format!("shift_m = {m}"));
        }
        lines.extend([
            format!("signed_weights = {}", self.signed_weights),
            format!("budget_fractions = {}", join(&self.budget_fractions)),
            format!("drift = {}", join(&self.drift)),
            format!("noise_sd = {}", self.noise_sd),
            format!("gb_learning_rates = {}", join(&self.gb_learning_rates)),
            format!("gb_max_depths = {}", join(&self.gb_max_depths)),
            format!("gb_n_estimators = {}", join(&self.gb_n_estimators)),
            format!("logistic_cs = {}", join(&self.logistic_cs)),
            format!("cv_folds = {}", self.cv_folds),
            format!("propensity_clip = {}", self.propensity_clip),
            format!("forest_trees = {}", self.forest_trees),
            format!("forest_max_depth = {}", self.forest_max_depth),
            format!("node_limit = {}", self.node_limit),
            format!("oracle_model = {}", self.oracle_model),
            format!("output_dir = {}", self.output_dir.display()),
            format!("threads = {}", self.threads),
            format!("save_models = {}", self.save_models),
            format!("save_diagnostics = {}", self.save_diagnostics),
        ]);
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }

    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            master_seed: self.master_seed,
            dgp_seed: self.dgp_seed,
            n_train: self.n_train,
            n_limited: self.n_limited,
            n_test: self.n_test,
            n_sims: self.n_sims,
            shift_q: self.shift_q,
            shift_m: self.shift_m.unwrap_or(self.n_train),
            signed_weights: self.signed_weights,
            budget_fractions: self.budget_fractions.clone(),
            drift: self.drift.clone(),
            noise_sd: self.noise_sd,
            xlearner: XLearnerConfig {
                boosting_grid: grid(&self.gb_learning_rates, &self.gb_max_depths, &self.gb_n_estimators),
                logistic_cs: self.logistic_cs.clone(),
                folds: self.cv_folds,
                propensity_clip: self.propensity_clip,
            },
            forest: ForestParams {
                n_trees: self.forest_trees,
                max_depth: self.forest_max_depth,
                max_features: None,
            },
            oracle_model: self.oracle_model,
            node_limit: self.node_limit,
        }
    }
}

/// Reads and checks a config file. All failures are config errors.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error("config", format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.n_train, 5000);
        assert_eq!(c.n_limited, 500);
        assert_eq!(c.shift_q, 6);
        assert_eq!(c.n_sims, 10);
        assert_eq!(c.budget_fractions.len(), 19);
        assert_eq!(c.study_config().xlearner, XLearnerConfig::default());
    }

    #[test]
    fn zero_q_names_field() {
        assert_eq!(field_of(ExperimentConfig::parse("shift_q = 0").unwrap_err()), "shift_q");
    }

    #[test]
    fn misspelled_key_is_unknown() {
        match ExperimentConfig::parse("# comment\nn_trian = 10\n") {
            Err(Error::UnknownKey { key, line }) => {
                assert_eq!(key, "n_trian");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn range_and_syntax_errors() {
        assert_eq!(field_of(ExperimentConfig::parse("budget_fractions = 0.1, 1.5").unwrap_err()), "budget_fractions");
        assert_eq!(field_of(ExperimentConfig::parse("n_sims = 0").unwrap_err()), "n_sims");
        assert_eq!(field_of(ExperimentConfig::parse("n_train = many").unwrap_err()), "n_train");
        assert_eq!(field_of(ExperimentConfig::parse("oracle_model = yes").unwrap_err()), "oracle_model");
        assert_eq!(field_of(ExperimentConfig::parse("drift = 1, 2").unwrap_err()), "drift");
        assert_eq!(field_of(ExperimentConfig::parse("n_sims = 2\nn_sims = 3").unwrap_err()), "n_sims");
        assert_eq!(field_of(ExperimentConfig::parse("just words").unwrap_err()), "line 1");
        assert_eq!(field_of(ExperimentConfig::parse("shift_q = 3").unwrap_err()), "shift_q");
        assert!(ExperimentConfig::parse("shift_q = 3\nsigned_weights = true").is_ok());
        let mut drift = vec!["0"; 13];
        drift[9] = "0.5";
        let text = format!("drift = {}", drift.join(","));
        assert_eq!(field_of(ExperimentConfig::parse(&text).unwrap_err()), "drift");
    }

    #[test]
    fn text_roundtrip() {
        let text = "master_seed = 9\nn_sims = 3\nbudget_fractions = 0.1, 0.25\nshift_m = 700\ngb_max_depths = 2\noracle_model = true\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.budget_fractions, vec![0.1, 0.25]);
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        let d = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn missing_file_is_config_error() {
        let e = validate_config(Path::new("/definitely/not/here.cfg")).unwrap_err();
        assert!(e.is_config_error());
    }
}
