//! Bagged probability trees.
//!
//! Each tree is grown on a bootstrap draw with a per-tree random feature
//! subset. Labels are coded 0/1, so the squared-error split criterion
//! coincides with Gini impurity and a leaf value is the positive-class
//! fraction of its bootstrap rows. The forest probability is the mean leaf
//! fraction across trees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_on_sample, Presorted, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features per tree; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityForest {
    trees: Vec<RegressionTree>,
    n_features: usize,
}

impl ProbabilityForest {
    pub fn predict_proba_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_proba_row(r)).collect()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

pub fn fit_forest(x: &Matrix, labels: &[bool], params: &ForestParams, seed: u64) -> Result<ProbabilityForest> {
    if x.n_rows() == 0 {
        return Err(Error::invalid("cannot fit a forest on no rows"));
    }
    if labels.len() != x.n_rows() {
        return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), x.n_rows())));
    }
    if params.n_trees == 0 || params.max_depth == 0 {
        return Err(Error::invalid("forest needs at least one tree of depth >= 1"));
    }
    let n = x.n_rows();
    let d = x.n_cols();
    let k = params
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let sorted = Presorted::new(x);
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        max_features: Some(k),
        ..TreeParams::default()
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seed::derive(seed, "forest-tree", &[t as u64]);
            let mut rng = seed::rng(tree_seed);
            let sample: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            fit_on_sample(x, &y, &sorted, &sample, &tree_params, seed::derive(tree_seed, "features", &[]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilityForest { trees, n_features: d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_classes() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let pos = i % 2 == 0;
            rows.push(vec![if pos { 5.0 } else { -5.0 } + (i as f64) * 0.001, (i % 7) as f64]);
            labels.push(pos);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let params = ForestParams { n_trees: 20, max_depth: 3, max_features: Some(2) };
        let f = fit_forest(&x, &labels, &params, 1).unwrap();
        assert!(f.predict_proba_row(&[5.0, 0.0]) > 0.95);
        assert!(f.predict_proba_row(&[-5.0, 0.0]) < 0.05);
    }

    #[test]
    fn deterministic() {
        let x = Matrix::from_rows(&(0..50).map(|i| vec![i as f64, (i * 3 % 11) as f64]).collect::<Vec<_>>()).unwrap();
        let labels: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        let p = ForestParams { n_trees: 10, ..ForestParams::default() };
        let a = fit_forest(&x, &labels, &p, 7).unwrap();
        let b = fit_forest(&x, &labels, &p, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.predict_proba(&x).iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
