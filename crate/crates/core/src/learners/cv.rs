//! K-fold grid search.
//!
//! Regression candidates are scored by mean held-out MSE, classification
//! candidates by mean held-out log-loss. The lowest score wins; ties go to the
//! earliest grid entry.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::boosting::{fit_gradient_boosting, BoostingParams};
use super::logistic::fit_logistic;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Boosting(Vec<BoostingParams>),
    /// Inverse regularization strengths.
    Logistic(Vec<f64>),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Boosting(g) => g.len(),
            Grid::Logistic(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Continuous(&'a [f64]),
    Binary(&'a [bool]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best_index: usize,
    /// Mean held-out loss per grid entry.
    pub scores: Vec<f64>,
}

/// Shuffled round-robin fold labels.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed));
    let mut out = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        out[p] = i % folds;
    }
    out
}

/// Fold labels dealt round-robin within each class, so every fold sees both
/// classes whenever each class has at least `folds` members.
pub fn stratified_fold_assignment(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut out = vec![0; labels.len()];
    let mut offset = 0;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (k, &i) in members.iter().enumerate() {
            out[i] = (k + offset) % folds;
        }
        offset += members.len();
    }
    out
}

fn split(folds_of: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &f) in folds_of.iter().enumerate() {
        if f == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

fn argmin_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

pub fn cross_validate(grid: &Grid, x: &Matrix, targets: Targets<'_>, folds: usize, seed: u64) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    let n = x.n_rows();
    if n < folds {
        return Err(Error::invalid(format!("{n} rows cannot fill {folds} folds")));
    }
    match (grid, targets) {
        (Grid::Boosting(g), Targets::Continuous(y)) => cv_boosting(g, x, y, folds, seed),
        (Grid::Logistic(cs), Targets::Binary(t)) => cv_logistic(cs, x, t, folds, seed),
        _ => Err(Error::invalid("grid type does not match target type")),
    }
}

fn cv_boosting(grid: &[BoostingParams], x: &Matrix, y: &[f64], folds: usize, seed: u64) -> Result<CvOutcome> {
    if y.len() != x.n_rows() {
        return Err(Error::invalid("target length does not match rows"));
    }
    for p in grid {
        p.validate()?;
    }
    let folds_of = fold_assignment(x.n_rows(), folds, seed);

    // Entries that differ only in n_estimators share one fit; shorter ones
    // are read off as prefixes of the longest.
    let mut groups: Vec<(f64, usize, Vec<usize>)> = Vec::new();
    for (i, p) in grid.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|(lr, depth, _)| lr.to_bits() == p.learning_rate.to_bits() && *depth == p.max_depth)
        {
            Some(g) => g.2.push(i),
            None => groups.push((p.learning_rate, p.max_depth, vec![i])),
        }
    }

    let jobs: Vec<(usize, usize)> = (0..folds).flat_map(|f| (0..groups.len()).map(move |g| (f, g))).collect();
    let fold_losses: Vec<Result<Vec<(usize, f64)>>> = jobs
        .par_iter()
        .map(|&(fold, gi)| {
            let (lr, depth, members) = &groups[gi];
            let (train, test) = split(&folds_of, fold);
            let x_train = x.select_rows(&train);
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let x_test = x.select_rows(&test);
            let longest = members.iter().map(|&m| grid[m].n_estimators).max().unwrap_or(0);
            let params = BoostingParams {
                learning_rate: *lr,
                max_depth: *depth,
                n_estimators: longest,
            };
            let model = fit_gradient_boosting(&x_train, &y_train, &params, seed::derive(seed, "cv-fit", &[fold as u64]))?;
            let checkpoints: Vec<usize> = members.iter().map(|&m| grid[m].n_estimators).collect();
            let mut sorted_cp = checkpoints.clone();
            sorted_cp.sort_unstable();
            sorted_cp.dedup();
            let staged = model.staged_predict(&x_test, &sorted_cp);
            Ok(members
                .iter()
                .map(|&m| {
                    let k = sorted_cp.binary_search(&grid[m].n_estimators).expect("checkpoint present");
                    let mse = staged[k]
                        .iter()
                        .zip(&test)
                        .map(|(p, &i)| (p - y[i]).powi(2))
                        .sum::<f64>()
                        / test.len() as f64;
                    (m, mse)
                })
                .collect())
        })
        .collect();

    let mut scores = vec![0.0; grid.len()];
    for losses in fold_losses {
        for (m, loss) in losses? {
            scores[m] += loss / folds as f64;
        }
    }
    Ok(CvOutcome {
        best_index: argmin_first(&scores),
        scores,
    })
}

fn log_loss(p: f64, t: bool) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    if t {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn cv_logistic(cs: &[f64], x: &Matrix, t: &[bool], folds: usize, seed: u64) -> Result<CvOutcome> {
    if t.len() != x.n_rows() {
        return Err(Error::invalid("label length does not match rows"));
    }
    let folds_of = stratified_fold_assignment(t, folds, seed);
    let jobs: Vec<(usize, usize)> = (0..folds).flat_map(|f| (0..cs.len()).map(move |c| (f, c))).collect();
    let losses: Vec<Result<(usize, f64)>> = jobs
        .par_iter()
        .map(|&(fold, ci)| {
            let (train, test) = split(&folds_of, fold);
            let x_train = x.select_rows(&train);
            let t_train: Vec<bool> = train.iter().map(|&i| t[i]).collect();
            let model = fit_logistic(&x_train, &t_train, cs[ci])?;
            let loss = test
                .iter()
                .map(|&i| log_loss(model.predict_proba_row(x.row(i)), t[i]))
                .sum::<f64>()
                / test.len() as f64;
            Ok((ci, loss))
        })
        .collect();
    let mut scores = vec![0.0; cs.len()];
    for r in losses {
        let (ci, loss) = r?;
        scores[ci] += loss / folds as f64;
    }
    Ok(CvOutcome {
        best_index: argmin_first(&scores),
        scores,
    })
}
