//! Least-squares gradient boosting over [`RegressionTree`]s.

use serde::{Deserialize, Serialize};

use super::tree::{fit_on_sample, Presorted, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_estimators: usize,
}

impl BoostingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams::with_max_depth(self.max_depth)
    }
}

/// The learning-rate × depth × estimator-count grid searched by default.
pub fn default_grid() -> Vec<BoostingParams> {
    grid(&[0.1, 0.3], &[3, 5, 8], &[30, 100])
}

/// Cartesian grid in nesting order learning rate, depth, estimators.
pub fn grid(rates: &[f64], depths: &[usize], estimators: &[usize]) -> Vec<BoostingParams> {
    let mut out = Vec::new();
    for &learning_rate in rates {
        for &max_depth in depths {
            for &n_estimators in estimators {
                out.push(BoostingParams {
                    learning_rate,
                    max_depth,
                    n_estimators,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostedModel {
    pub init: f64,
    pub params: BoostingParams,
    pub trees: Vec<RegressionTree>,
}

impl GradientBoostedModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.predict_row_staged(x, self.trees.len())
    }

    /// Prediction using only the first `stages` trees.
    pub fn predict_row_staged(&self, x: &[f64], stages: usize) -> f64 {
        self.trees[..stages.min(self.trees.len())]
            .iter()
            .fold(self.init, |acc, t| acc + self.params.learning_rate * t.predict_row(x))
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }

    /// Predictions after each stage count in `checkpoints` (ascending), one
    /// vector per checkpoint.
    pub fn staged_predict(&self, x: &Matrix, checkpoints: &[usize]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(x.n_rows()); checkpoints.len()];
        for row in x.rows() {
            let mut acc = self.init;
            let mut done = 0;
            for (c, &stop) in checkpoints.iter().enumerate() {
                let stop = stop.min(self.trees.len());
                while done < stop {
                    acc += self.params.learning_rate * self.trees[done].predict_row(row);
                    done += 1;
                }
                out[c].push(acc);
            }
        }
        out
    }
}

pub fn fit_gradient_boosting(
    x: &Matrix,
    y: &[f64],
    params: &BoostingParams,
    seed: u64,
) -> Result<GradientBoostedModel> {
    params.validate()?;
    if x.n_rows() == 0 {
        return Err(Error::invalid("cannot boost on an empty sample"));
    }
    if y.len() != x.n_rows() {
        return Err(Error::invalid(format!(
            "{} targets for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    let n = x.n_rows();
    let init = y.iter().sum::<f64>() / n as f64;
    let sorted = Presorted::new(x);
    let sample: Vec<u32> = (0..n as u32).collect();
    let tree_params = params.tree_params();
    let mut fitted = vec![init; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    for stage in 0..params.n_estimators {
        for i in 0..n {
            residual[i] = y[i] - fitted[i];
        }
        let tree = fit_on_sample(x, &residual, &sorted, &sample, &tree_params, seed.wrapping_add(stage as u64))?;
        for (i, row) in x.rows().enumerate() {
            fitted[i] += params.learning_rate * tree.predict_row(row);
        }
        trees.push(tree);
    }
    Ok(GradientBoostedModel {
        init,
        params: *params,
        trees,
    })
}
