//! X-learner for conditional average treatment effects.
//!
//! 1. `mu0` on controls and `mu1` on treated units (boosting, CV-tuned).
//! 2. Imputed effects: `D1 = Y - mu0(X)` on treated, `D0 = mu1(X) - Y` on controls.
//! 3. `tau1` regresses `D1` on treated covariates, `tau0` regresses `D0` on controls.
//! 4. `g` is a logistic propensity model of `T` on `X` (CV over `C`).
//!
//! The estimate is `g(x)·tau0(x) + (1 - g(x))·tau1(x)` with `g` clipped.

use serde::{Deserialize, Serialize};

use super::boosting::{default_grid, fit_gradient_boosting, BoostingParams, GradientBoostedModel};
use super::cv::{cross_validate, Grid, Targets, DEFAULT_FOLDS};
use super::logistic::{fit_logistic, LogisticModel, DEFAULT_C_GRID};
use crate::dgp::PopulationSample;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Serialization format tag written by [`XLearnerModel::to_json`].
pub const MODEL_FORMAT: &str = "causal-alloc/xlearner";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XLearnerConfig {
    pub boosting_grid: Vec<BoostingParams>,
    pub logistic_cs: Vec<f64>,
    pub folds: usize,
    /// Propensity clip `[clip, 1 - clip]` applied before weighting.
    pub propensity_clip: f64,
}

impl Default for XLearnerConfig {
    fn default() -> Self {
        Self {
            boosting_grid: default_grid(),
            logistic_cs: DEFAULT_C_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
            propensity_clip: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XLearnerModel {
    pub mu0: GradientBoostedModel,
    pub mu1: GradientBoostedModel,
    pub tau0: GradientBoostedModel,
    pub tau1: GradientBoostedModel,
    pub propensity: LogisticModel,
    pub propensity_clip: f64,
    pub n_features: usize,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    model: T,
}

impl XLearnerModel {
    /// Clipped propensity `g(x)`.
    pub fn propensity_row(&self, x: &[f64]) -> f64 {
        let clip = self.propensity_clip;
        self.propensity.predict_proba_row(x).clamp(clip, 1.0 - clip)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Envelope {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope<XLearnerModel> = serde_json::from_str(text)?;
        if env.format != MODEL_FORMAT || env.version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format {} v{}",
                env.format, env.version
            )));
        }
        Ok(env.model)
    }
}

fn fit_tuned_regression(x: &Matrix, y: &[f64], config: &XLearnerConfig, seed: u64) -> Result<GradientBoostedModel> {
    let grid = Grid::Boosting(config.boosting_grid.clone());
    let cv = cross_validate(&grid, x, Targets::Continuous(y), config.folds, seed::derive(seed, "folds", &[]))?;
    let best = config.boosting_grid[cv.best_index];
    fit_gradient_boosting(x, y, &best, seed::derive(seed, "refit", &[]))
}

pub fn fit_xlearner(sample: &PopulationSample, config: &XLearnerConfig, seed: u64) -> Result<XLearnerModel> {
    let x = &sample.x.values;
    let treated: Vec<usize> = (0..sample.len()).filter(|&i| sample.t[i]).collect();
    let controls: Vec<usize> = (0..sample.len()).filter(|&i| !sample.t[i]).collect();
    let required = config.folds;
    if controls.len() < required {
        return Err(Error::InsufficientArm {
            arm: "control",
            size: controls.len(),
            required,
        });
    }
    if treated.len() < required {
        return Err(Error::InsufficientArm {
            arm: "treated",
            size: treated.len(),
            required,
        });
    }
    let x0 = x.select_rows(&controls);
    let x1 = x.select_rows(&treated);
    let y0: Vec<f64> = controls.iter().map(|&i| sample.y[i]).collect();
    let y1: Vec<f64> = treated.iter().map(|&i| sample.y[i]).collect();

    let mu0 = fit_tuned_regression(&x0, &y0, config, seed::derive(seed, "mu0", &[]))?;
    let mu1 = fit_tuned_regression(&x1, &y1, config, seed::derive(seed, "mu1", &[]))?;

    let d1: Vec<f64> = x1.rows().zip(&y1).map(|(r, y)| y - mu0.predict_row(r)).collect();
    let d0: Vec<f64> = x0.rows().zip(&y0).map(|(r, y)| mu1.predict_row(r) - y).collect();
    let tau1 = fit_tuned_regression(&x1, &d1, config, seed::derive(seed, "tau1", &[]))?;
    let tau0 = fit_tuned_regression(&x0, &d0, config, seed::derive(seed, "tau0", &[]))?;

    let grid = Grid::Logistic(config.logistic_cs.clone());
    let cv = cross_validate(
        &grid,
        x,
        Targets::Binary(&sample.t),
        config.folds,
        seed::derive(seed, "g-folds", &[]),
    )?;
    let propensity = fit_logistic(x, &sample.t, config.logistic_cs[cv.best_index])?;

    Ok(XLearnerModel {
        mu0,
        mu1,
        tau0,
        tau1,
        propensity,
        propensity_clip: config.propensity_clip,
        n_features: x.n_cols(),
    })
}

/// `g(x)·tau0(x) + (1 - g(x))·tau1(x)` for a single weight and pair of arms.
#[inline]
pub fn combine(g: f64, tau0: f64, tau1: f64) -> f64 {
    g * tau0 + (1.0 - g) * tau1
}

pub fn predict_cate(model: &XLearnerModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.n_cols() != model.n_features {
        return Err(Error::invalid(format!(
            "model expects {} columns, got {}",
            model.n_features,
            x.n_cols()
        )));
    }
    Ok(x
        .rows()
        .map(|r| combine(model.propensity_row(r), model.tau0.predict_row(r), model.tau1.predict_row(r)))
        .collect())
}
