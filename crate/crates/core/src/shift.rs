//! Amplified covariate shift.
//!
//! A forest separates the source cohort (label 0) from the target cohort
//! (label 1). Its probabilities `σ(x)` are turned into weights
//! `w(x) = logit(σ(x))^q` and the source is resampled with replacement in
//! proportion to `w`.

use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::dgp::PopulationSample;
use crate::error::{Error, Result};
use crate::learners::forest::{fit_forest, ForestParams, ProbabilityForest};
use crate::matrix::Matrix;
use crate::seed;

/// Probabilities are clipped to `[P_MIN, 1 - P_MIN]` before the logit.
pub const P_MIN: f64 = 1e-3;

pub const DEFAULT_Q: u32 = 6;

const MIN_DOMAIN_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainClassifier {
    pub forest: ProbabilityForest,
    pub n_source: usize,
    pub n_target: usize,
    pub seed: u64,
}

impl DomainClassifier {
    /// Clipped probability of belonging to the target cohort.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.forest.predict_proba_row(x).clamp(P_MIN, 1.0 - P_MIN)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.forest.n_features() {
            return Err(Error::invalid(format!(
                "classifier expects {} columns, got {}",
                self.forest.n_features(),
                x.n_cols()
            )));
        }
        Ok(x.rows().map(|r| self.predict_row(r)).collect())
    }
}

pub fn fit_domain_classifier(
    source: &Matrix,
    target: &Matrix,
    params: &ForestParams,
    seed: u64,
) -> Result<DomainClassifier> {
    if source.n_cols() != target.n_cols() {
        return Err(Error::invalid(format!(
            "source has {} columns, target has {}",
            source.n_cols(),
            target.n_cols()
        )));
    }
    if source.n_rows() < MIN_DOMAIN_ROWS || target.n_rows() < MIN_DOMAIN_ROWS {
        return Err(Error::invalid(format!(
            "each domain needs at least {MIN_DOMAIN_ROWS} rows"
        )));
    }
    let x = source.vstack(target)?;
    let labels: Vec<bool> = (0..x.n_rows()).map(|i| i >= source.n_rows()).collect();
    let forest = fit_forest(&x, &labels, params, seed)?;
    Ok(DomainClassifier {
        forest,
        n_source: source.n_rows(),
        n_target: target.n_rows(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftWeights {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub q: u32,
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `raw_i = logit(p_i)^q`, normalized to sum to one.
pub fn shift_weights(probabilities: &[f64], q: u32) -> Result<ShiftWeights> {
    shift_weights_with(probabilities, q, false)
}

/// With `signed`, only points leaning toward the target get weight:
/// `raw_i = max(logit(p_i), 0)^q`.
pub fn shift_weights_with(probabilities: &[f64], q: u32, signed: bool) -> Result<ShiftWeights> {
    if q == 0 {
        return Err(Error::invalid("shift intensity q must be at least 1"));
    }
    if probabilities.is_empty() {
        return Err(Error::invalid("no probabilities to weight"));
    }
    if let Some(p) = probabilities.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::invalid(format!("probability {p} outside (0, 1)")));
    }
    let exponent = i32::try_from(q).map_err(|_| Error::invalid("q too large"))?;
    let raw: Vec<f64> = probabilities
        .iter()
        .map(|&p| {
            let l = logit(p);
            let l = if signed { l.max(0.0) } else { l };
            l.powi(exponent)
        })
        .collect();
    if raw.iter().any(|&w| w < 0.0) {
        return Err(Error::invalid(format!(
            "odd q = {q} produced negative weights; use an even q or signed weights"
        )));
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::AllZeroWeights);
    }
    let normalized = raw.iter().map(|w| w / total).collect();
    Ok(ShiftWeights { raw, normalized, q })
}

/// Draws `m` rows of `source` with replacement, row `i` with probability
/// `weights.normalized[i]`. All per-unit fields travel with their row.
pub fn resample_shifted(
    source: &PopulationSample,
    weights: &ShiftWeights,
    m: usize,
    seed: u64,
) -> Result<PopulationSample> {
    let indices = resample_indices(&weights.normalized, source.len(), m, seed)?;
    Ok(source.select(&indices))
}

pub fn resample_indices(probabilities: &[f64], n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if probabilities.len() != n {
        return Err(Error::invalid(format!(
            "{} weights for {} source rows",
            probabilities.len(),
            n
        )));
    }
    if m == 0 {
        return Err(Error::invalid("resample size must be at least 1"));
    }
    let dist = WeightedIndex::new(probabilities).map_err(|e| Error::invalid(format!("bad weights: {e}")))?;
    let mut rng = seed::rng(seed);
    Ok((0..m).map(|_| dist.sample(&mut rng)).collect())
}

/// Area under the ROC curve; tied scores count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie blocks
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Held-out AUC of a fresh forest separating two row multisets drawn from
/// one pool: `negatives` and `positives` are indices into `pool`. Pool rows
/// (with all their copies) are assigned wholly to the training or held-out
/// side, so duplicated rows cannot leak across the split.
pub fn grouped_holdout_auc(
    pool: &Matrix,
    negatives: &[usize],
    positives: &[usize],
    params: &ForestParams,
    holdout_fraction: f64,
    seed: u64,
) -> Result<f64> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::invalid("holdout fraction must lie in (0, 1)"));
    }
    let mut ids: Vec<usize> = (0..pool.n_rows()).collect();
    ids.shuffle(&mut seed::rng(seed::derive(seed, "holdout", &[])));
    let cut = (holdout_fraction * pool.n_rows() as f64).round() as usize;
    let mut held_out = vec![false; pool.n_rows()];
    for &i in &ids[..cut] {
        held_out[i] = true;
    }
    let (mut train_rows, mut train_labels, mut test_rows, mut test_labels) = (vec![], vec![], vec![], vec![]);
    for (rows, label) in [(negatives, false), (positives, true)] {
        for &r in rows {
            if held_out[r] {
                test_rows.push(r);
                test_labels.push(label);
            } else {
                train_rows.push(r);
                train_labels.push(label);
            }
        }
    }
    let forest = fit_forest(&pool.select_rows(&train_rows), &train_labels, params, seed::derive(seed, "forest", &[]))?;
    let scores = forest.predict_proba(&pool.select_rows(&test_rows));
    auc(&scores, &test_labels)
}

pub fn write_diagnostics_csv(path: &Path, unit_ids: &[usize], sigma: &[f64], weights: &ShiftWeights) -> Result<()> {
    let mut buf = Vec::new();
    write_diagnostics(&mut buf, unit_ids, sigma, weights)?;
    crate::io::write_atomic(path, &buf)
}

pub fn write_diagnostics<W: Write>(out: W, unit_ids: &[usize], sigma: &[f64], weights: &ShiftWeights) -> Result<()> {
    if unit_ids.len() != sigma.len() || sigma.len() != weights.raw.len() {
        return Err(Error::invalid("diagnostic columns differ in length"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unit_id", "sigma", "raw_weight", "normalized_weight"])?;
    for i in 0..sigma.len() {
        w.write_record([
            unit_ids[i].to_string(),
            sigma[i].to_string(),
            weights.raw[i].to_string(),
            weights.normalized[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate_covariates, sample_coefficients, simulate_population, standardize, CovariateSchema};
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn pool(n: usize, seed: u64) -> PopulationSample {
        let s = CovariateSchema::jobseekers();
        let x = standardize(&generate_covariates(n, &s, &[0.0; 13], seed).unwrap(), None).unwrap();
        simulate_population(&sample_coefficients(13, seed).unwrap(), &x, seed).unwrap()
    }

    #[test]
    fn weight_examples() {
        let w = shift_weights(&[0.5, E / (1.0 + E), 1.0 / (1.0 + E)], 6).unwrap();
        assert_eq!(w.raw[0], 0.0);
        assert!((w.raw[1] - 1.0).abs() < 1e-12);
        assert!((w.raw[2] - 1.0).abs() < 1e-12);
        assert!((w.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let w = shift_weights(&[0.2689], 6).unwrap();
        // logit(0.2689) = -1.00025
        assert!((w.raw[0] - 1.0).abs() < 2e-3);
    }

    #[test]
    fn all_half_is_an_error() {
        assert!(matches!(shift_weights(&[0.5, 0.5], 6), Err(Error::AllZeroWeights)));
        assert!(shift_weights(&[0.3], 0).is_err());
        assert!(shift_weights(&[0.0, 0.3], 6).is_err());
    }

    #[test]
    fn signed_weights_drop_source_side() {
        let w = shift_weights_with(&[0.2, 0.8], 6, true).unwrap();
        assert_eq!(w.raw[0], 0.0);
        assert_eq!(w.normalized[1], 1.0);
    }

    proptest! {
        #[test]
        fn weights_monotone_in_abs_logit(a in 0.001f64..0.999, b in 0.001f64..0.999) {
            let w = shift_weights(&[a, b, 0.9], 6).unwrap();
            prop_assert!(w.raw.iter().all(|&v| v >= 0.0));
            let (la, lb) = (logit(a).abs(), logit(b).abs());
            if la > lb {
                prop_assert!(w.raw[0] > w.raw[1]);
                prop_assert!(w.normalized[0] > w.normalized[1]);
            }
            prop_assert!((w.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn point_mass_resample() {
        let src = pool(20, 1);
        let mut normalized = vec![0.0; 20];
        normalized[3] = 1.0;
        let w = ShiftWeights { raw: normalized.clone(), normalized, q: 6 };
        let r = resample_shifted(&src, &w, 15, 4).unwrap();
        assert_eq!(r.len(), 15);
        assert!(r.unit_id.iter().all(|&u| u == 3));
        assert!(r.y.iter().all(|&y| y == src.y[3]));
        assert!(r.costs.iter().all(|&c| c == src.costs[3]));
    }

    #[test]
    fn uniform_resample_is_a_bootstrap() {
        let src = pool(4000, 2);
        let n = src.len();
        let w = ShiftWeights { raw: vec![1.0; n], normalized: vec![1.0 / n as f64; n], q: 6 };
        let r = resample_shifted(&src, &w, n, 5).unwrap();
        for j in 0..13 {
            let col = src.x.values.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            let rcol = r.x.values.column(j);
            let rmean = rcol.iter().sum::<f64>() / n as f64;
            assert!((rmean - mean).abs() < 3.0 * sd / (n as f64).sqrt(), "column {j}");
        }
    }

    #[test]
    fn resample_length_mismatch() {
        let src = pool(20, 3);
        let w = ShiftWeights { raw: vec![1.0; 5], normalized: vec![0.2; 5], q: 6 };
        assert!(matches!(resample_shifted(&src, &w, 5, 0), Err(Error::InvalidArgument(_))));
        let w = ShiftWeights { raw: vec![1.0; 20], normalized: vec![0.05; 20], q: 6 };
        assert!(resample_shifted(&src, &w, 0, 0).is_err());
    }

    #[test]
    fn auc_hand_values() {
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4, 0.3, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        // one inversion out of four pairs
        assert_eq!(auc(&[0.1, 0.35, 0.3, 0.8], &[false, false, true, true]).unwrap(), 0.75);
    }

    #[test]
    fn identical_domains_are_indistinguishable() {
        let src = pool(400, 4).x.values;
        let params = ForestParams { n_trees: 50, ..ForestParams::default() };
        let clf = fit_domain_classifier(&src, &src, &params, 1).unwrap();
        let p = clf.predict(&src).unwrap();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
        assert!(p.iter().all(|&v| (P_MIN..=1.0 - P_MIN).contains(&v)));
        let again = fit_domain_classifier(&src, &src, &params, 1).unwrap();
        assert_eq!(again.predict(&src).unwrap(), p);
    }

    #[test]
    fn separated_domains_have_high_holdout_auc() {
        let a = pool(600, 5).x.values;
        let mut b = pool(600, 6).x.values;
        for i in 0..b.n_rows() {
            let v = b.get(i, 1);
            b.set(i, 1, v + 25.0);
        }
        let all = a.vstack(&b).unwrap();
        let neg: Vec<usize> = (0..600).collect();
        let pos: Vec<usize> = (600..1200).collect();
        let v = grouped_holdout_auc(&all, &neg, &pos, &ForestParams::default(), 0.3, 2).unwrap();
        assert!(v > 0.95, "auc {v}");
    }

    #[test]
    fn column_mismatch_rejected() {
        let a = Matrix::zeros(20, 3);
        let b = Matrix::zeros(20, 4);
        assert!(matches!(
            fit_domain_classifier(&a, &b, &ForestParams::default(), 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn diagnostics_header() {
        let w = shift_weights(&[0.3, 0.9], 6).unwrap();
        let mut buf = Vec::new();
        write_diagnostics(&mut buf, &[0, 1], &[0.3, 0.9], &w).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "unit_id,sigma,raw_weight,normalized_weight");
    }
}
