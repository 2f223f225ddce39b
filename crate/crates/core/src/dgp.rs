//! Synthetic jobseeker cohorts and the outcome model.
//!
//! Covariates follow a fixed 13-column schema of mixed numerical and
//! categorical features. Outcomes follow a linear model with one random
//! second-order and one random third-order interaction per covariate; the
//! treatment effect is linear and noise-free:
//!
//! ```text
//! Y0 = c + Σ β_j x_j + Σ β_jk x_j x_k + Σ β_jkl x_j x_k x_l + ε
//! Y1 = Y0 + Σ γ_j x_j
//! ```

use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Number of covariates in the cohort schema.
pub const N_COVARIATES: usize = 13;

/// Probability that a main effect or effect modifier is active.
pub const COEFFICIENT_ACTIVE_PROB: f64 = 0.3;

pub const DEFAULT_NOISE_SD: f64 = 0.1;

/// Cumulative-day counters are bounded by four years.
const DAYS_CAP: f64 = 1461.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NumericalDist {
    Normal { mean: f64, sd: f64 },
    /// `exp(N(mu, sigma))`, optionally truncated from above.
    LogNormal { mu: f64, sigma: f64, cap: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovariateKind {
    Numerical(NumericalDist),
    /// Integer-coded levels `0..probs.len()`.
    Categorical { probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    covariates: Vec<CovariateSpec>,
}

impl Default for CovariateSchema {
    fn default() -> Self {
        Self::jobseekers()
    }
}

impl CovariateSchema {
    /// The 13-covariate jobseeker schema with fixed synthetic marginals.
    pub fn jobseekers() -> Self {
        use NumericalDist::*;
        let num = |name: &str, dist| CovariateSpec {
            name: name.to_string(),
            kind: CovariateKind::Numerical(dist),
        };
        let days = |mu, sigma| LogNormal {
            mu,
            sigma,
            cap: Some(DAYS_CAP),
        };
        let cat = |name: &str, probs: &[f64]| CovariateSpec {
            name: name.to_string(),
            kind: CovariateKind::Categorical {
                probs: probs.to_vec(),
            },
        };
        Self {
            covariates: vec![
                num("yearofbirth", Normal { mean: 1976.0, sd: 11.0 }),
                num("age", Normal { mean: 40.0, sd: 11.0 }),
                num("cumul_ue", days(5.3, 0.9)),
                num("cumul_employed", days(6.3, 0.7)),
                num("cumul_marginal", days(3.5, 0.9)),
                num("cumul_meas", days(3.0, 0.9)),
                num("cumul_benefit", days(5.0, 0.8)),
                num("cumul_train", days(2.0, 0.9)),
                num("income", LogNormal { mu: 4.0, sigma: 0.5, cap: None }),
                cat("gender", &[0.55, 0.45]),
                cat("germancitizen", &[0.2, 0.8]),
                cat("voc_education", &[0.35, 0.45, 0.12, 0.08]),
                cat("school", &[0.10, 0.30, 0.35, 0.25]),
            ],
        }
    }

    pub fn new(covariates: Vec<CovariateSpec>) -> Result<Self> {
        let schema = Self { covariates };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariates.is_empty() {
            return Err(Error::invalid("schema has no covariates"));
        }
        for c in &self.covariates {
            match &c.kind {
                CovariateKind::Numerical(NumericalDist::Normal { sd, .. }) if *sd <= 0.0 => {
                    return Err(Error::invalid(format!("`{}`: sd must be positive", c.name)))
                }
                CovariateKind::Numerical(NumericalDist::LogNormal { sigma, .. })
                    if *sigma <= 0.0 =>
                {
                    return Err(Error::invalid(format!(
                        "`{}`: sigma must be positive",
                        c.name
                    )))
                }
                CovariateKind::Categorical { probs } => {
                    if probs.len() < 2 || probs.iter().any(|p| !(*p >= 0.0)) {
                        return Err(Error::invalid(format!(
                            "`{}`: need at least two nonnegative category probabilities",
                            c.name
                        )));
                    }
                    let total: f64 = probs.iter().sum();
                    if (total - 1.0).abs() > 1e-9 {
                        return Err(Error::invalid(format!(
                            "`{}`: category probabilities sum to {total}",
                            c.name
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    pub fn covariates(&self) -> &[CovariateSpec] {
        &self.covariates
    }

    pub fn names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn is_categorical(&self, j: usize) -> bool {
        matches!(self.covariates[j].kind, CovariateKind::Categorical { .. })
    }

    /// Category count for categorical covariates, `None` for numerical ones.
    pub fn category_count(&self, j: usize) -> Option<usize> {
        match &self.covariates[j].kind {
            CovariateKind::Categorical { probs } => Some(probs.len()),
            CovariateKind::Numerical(_) => None,
        }
    }
}

/// Per-column location and scale used for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ColumnStats {
    /// Sample mean and sample standard deviation (n - 1 denominator).
    pub fn compute(values: &Matrix) -> Self {
        let n = values.n_rows();
        let d = values.n_cols();
        let mut mean = vec![0.0; d];
        for row in values.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut sd = vec![0.0; d];
        for row in values.rows() {
            for j in 0..d {
                let dev = row[j] - mean[j];
                sd[j] += dev * dev;
            }
        }
        let denom = n.saturating_sub(1).max(1) as f64;
        sd.iter_mut().for_each(|s| *s = (*s / denom).sqrt());
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    pub values: Matrix,
    pub names: Vec<String>,
    /// Statistics applied by the last standardization; present iff standardized.
    pub stats: Option<ColumnStats>,
}

impl CovariateMatrix {
    pub fn raw(values: Matrix, names: Vec<String>) -> Result<Self> {
        if names.len() != values.n_cols() {
            return Err(Error::invalid(format!(
                "{} names for {} columns",
                names.len(),
                values.n_cols()
            )));
        }
        Ok(Self {
            values,
            names,
            stats: None,
        })
    }

    pub fn is_standardized(&self) -> bool {
        self.stats.is_some()
    }

    pub fn n_rows(&self) -> usize {
        self.values.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.n_cols()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(indices),
            names: self.names.clone(),
            stats: self.stats.clone(),
        }
    }
}

/// Draws `n` rows of the schema. `drift[j]` shifts the location of covariate
/// `j`: raw value for normal marginals, log-location for log-normal ones.
/// Categorical covariates do not drift and require `drift[j] == 0`.
pub fn generate_covariates(
    n: usize,
    schema: &CovariateSchema,
    drift: &[f64],
    seed: u64,
) -> Result<CovariateMatrix> {
    if n == 0 {
        return Err(Error::invalid("cannot generate an empty cohort"));
    }
    let d = schema.len();
    if drift.len() != d {
        return Err(Error::invalid(format!(
            "drift has length {}, schema has {d} covariates",
            drift.len()
        )));
    }
    schema.validate()?;
    let mut values = Matrix::zeros(n, d);
    for (j, spec) in schema.covariates().iter().enumerate() {
        let mut rng = seed::rng(seed::derive(seed, "covariate", &[j as u64]));
        match &spec.kind {
            CovariateKind::Numerical(NumericalDist::Normal { mean, sd }) => {
                let dist = Normal::new(mean + drift[j], *sd)
                    .map_err(|e| Error::invalid(format!("`{}`: {e}", spec.name)))?;
                for i in 0..n {
                    values.set(i, j, dist.sample(&mut rng));
                }
            }
            CovariateKind::Numerical(NumericalDist::LogNormal { mu, sigma, cap }) => {
                let location = mu + drift[j];
                for i in 0..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let v = (location + sigma * z).exp();
                    values.set(i, j, cap.map_or(v, |c| v.min(c)));
                }
            }
            CovariateKind::Categorical { probs } => {
                if drift[j] != 0.0 {
                    return Err(Error::invalid(format!(
                        "categorical covariate `{}` cannot drift",
                        spec.name
                    )));
                }
                let dist = WeightedIndex::new(probs)
                    .map_err(|e| Error::invalid(format!("`{}`: {e}", spec.name)))?;
                for i in 0..n {
                    values.set(i, j, dist.sample(&mut rng) as f64);
                }
            }
        }
    }
    CovariateMatrix::raw(values, schema.names())
}

/// Z-scores every column. Without `stats` the matrix's own sample statistics
/// are used; with `stats` (training statistics) they are applied as given.
pub fn standardize(x: &CovariateMatrix, stats: Option<&ColumnStats>) -> Result<CovariateMatrix> {
    let d = x.n_cols();
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != d || s.sd.len() != d {
                return Err(Error::invalid(format!(
                    "stats cover {} columns, matrix has {d}",
                    s.mean.len()
                )));
            }
            if let Some(j) = s.sd.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::DegenerateColumn {
                    column: x.names[j].clone(),
                });
            }
            s.clone()
        }
        None => {
            if x.n_rows() < 2 {
                return Err(Error::invalid(
                    "standardizing without stats needs at least two rows",
                ));
            }
            let s = ColumnStats::compute(&x.values);
            if let Some(j) = s.sd.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::DegenerateColumn {
                    column: x.names[j].clone(),
                });
            }
            s
        }
    };
    let mut values = x.values.clone();
    for i in 0..values.n_rows() {
        for j in 0..d {
            values.set(i, j, (x.values.get(i, j) - stats.mean[j]) / stats.sd[j]);
        }
    }
    Ok(CovariateMatrix {
        values,
        names: x.names.clone(),
        stats: Some(stats),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub indices: [usize; 2],
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleTerm {
    pub indices: [usize; 3],
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpCoefficients {
    pub intercept: f64,
    /// β_j ∈ {0, 1}
    pub main_effects: Vec<f64>,
    pub pair_terms: Vec<PairTerm>,
    pub triple_terms: Vec<TripleTerm>,
    /// γ_j ∈ {0, 1}
    pub effect_modifiers: Vec<f64>,
    pub noise_sd: f64,
}

impl DgpCoefficients {
    pub fn dim(&self) -> usize {
        self.main_effects.len()
    }

    /// Noise-free treatment effect `Σ γ_j x_j`.
    pub fn cate(&self, x: &[f64]) -> f64 {
        self.effect_modifiers.iter().zip(x).map(|(g, v)| g * v).sum()
    }

    /// Control outcome without noise.
    pub fn baseline(&self, x: &[f64]) -> f64 {
        let main: f64 = self.main_effects.iter().zip(x).map(|(b, v)| b * v).sum();
        let pairs: f64 = self
            .pair_terms
            .iter()
            .map(|t| t.coef * x[t.indices[0]] * x[t.indices[1]])
            .sum();
        let triples: f64 = self
            .triple_terms
            .iter()
            .map(|t| t.coef * x[t.indices[0]] * x[t.indices[1]] * x[t.indices[2]])
            .sum();
        self.intercept + main + pairs + triples
    }

    /// Drops every interaction term, leaving a main-effects-only model.
    pub fn without_interactions(mut self) -> Self {
        self.pair_terms.clear();
        self.triple_terms.clear();
        self
    }
}

/// Splits a shuffled index list into chunks of `k`. A short final chunk is
/// completed with distinct, uniformly chosen indices from outside it.
fn interaction_chunks<R: Rng>(d: usize, k: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let mut chunks: Vec<Vec<usize>> = perm.chunks(k).map(<[usize]>::to_vec).collect();
    if let Some(last) = chunks.last_mut() {
        if last.len() < k {
            let mut others: Vec<usize> = (0..d).filter(|i| !last.contains(i)).collect();
            others.shuffle(rng);
            let missing = k - last.len();
            last.extend_from_slice(&others[..missing]);
        }
    }
    chunks
}

pub fn sample_coefficients(d: usize, seed: u64) -> Result<DgpCoefficients> {
    if d < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 covariates for third-order terms, got {d}"
        )));
    }
    let mut rng = seed::rng(seed);
    let bern = Bernoulli::new(COEFFICIENT_ACTIVE_PROB).expect("valid probability");
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let main_effects: Vec<f64> = (0..d)
        .map(|_| if bern.sample(&mut rng) { 1.0 } else { 0.0 })
        .collect();
    let effect_modifiers: Vec<f64> = (0..d)
        .map(|_| if bern.sample(&mut rng) { 1.0 } else { 0.0 })
        .collect();
    let intercept = std_normal.sample(&mut rng);
    let pair_terms = interaction_chunks(d, 2, &mut rng)
        .into_iter()
        .map(|c| PairTerm {
            indices: [c[0], c[1]],
            coef: std_normal.sample(&mut rng),
        })
        .collect();
    let triple_terms = interaction_chunks(d, 3, &mut rng)
        .into_iter()
        .map(|c| TripleTerm {
            indices: [c[0], c[1], c[2]],
            coef: std_normal.sample(&mut rng),
        })
        .collect();
    Ok(DgpCoefficients {
        intercept,
        main_effects,
        pair_terms,
        triple_terms,
        effect_modifiers,
        noise_sd: DEFAULT_NOISE_SD,
    })
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Treatment-assignment propensity `1 / (1 + exp(-Σ β_j x_j))`, kept inside
/// the open unit interval when the index is large enough to round to 0 or 1.
pub fn treatment_propensity(coeffs: &DgpCoefficients, x: &[f64]) -> f64 {
    let index: f64 = coeffs.main_effects.iter().zip(x).map(|(b, v)| b * v).sum();
    logistic(index).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub tau_true: Vec<f64>,
    pub noise: Vec<f64>,
}

pub fn simulate_outcomes(
    coeffs: &DgpCoefficients,
    x: &CovariateMatrix,
    seed: u64,
) -> Result<Outcomes> {
    if !x.is_standardized() {
        return Err(Error::Contract(
            "outcomes must be simulated on standardized covariates".into(),
        ));
    }
    if x.n_cols() != coeffs.dim() {
        return Err(Error::invalid(format!(
            "covariates have {} columns, coefficients expect {}",
            x.n_cols(),
            coeffs.dim()
        )));
    }
    if !(coeffs.noise_sd >= 0.0) {
        return Err(Error::invalid("noise_sd must be nonnegative"));
    }
    let mut rng = seed::rng(seed);
    let n = x.n_rows();
    let mut out = Outcomes {
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        tau_true: Vec::with_capacity(n),
        noise: Vec::with_capacity(n),
    };
    for row in x.values.rows() {
        let z: f64 = StandardNormal.sample(&mut rng);
        let eps = coeffs.noise_sd * z;
        let y0 = coeffs.baseline(row) + eps;
        let tau = coeffs.cate(row);
        out.y0.push(y0);
        out.y1.push(y0 + tau);
        out.tau_true.push(tau);
        out.noise.push(eps);
    }
    Ok(out)
}

/// Bernoulli treatment draws and the consistent observed outcome.
pub fn assign_treatment(
    propensity: &[f64],
    y0: &[f64],
    y1: &[f64],
    seed: u64,
) -> Result<(Vec<bool>, Vec<f64>)> {
    if propensity.len() != y0.len() || y0.len() != y1.len() {
        return Err(Error::invalid("propensity and outcome lengths differ"));
    }
    if let Some(p) = propensity.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::invalid(format!("propensity {p} outside (0, 1)")));
    }
    let mut rng = seed::rng(seed);
    let t: Vec<bool> = propensity.iter().map(|&p| rng.random_bool(p)).collect();
    let y = t
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(&ti, (&a, &b))| if ti { b } else { a })
        .collect();
    Ok((t, y))
}

/// Log-normal costs with `ln c ~ N(-0.5, 1)`, so the population mean is 1.
pub fn simulate_costs(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("cannot simulate zero costs"));
    }
    let dist = LogNormal::new(-0.5, 1.0).expect("valid log-normal");
    let mut rng = seed::rng(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

/// One simulated cohort. Rows carry their `unit_id` through subsampling and
/// resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSample {
    pub unit_id: Vec<usize>,
    pub x: CovariateMatrix,
    pub t: Vec<bool>,
    pub y: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub tau_true: Vec<f64>,
    pub costs: Vec<f64>,
    pub propensity: Vec<f64>,
}

impl PopulationSample {
    pub fn len(&self) -> usize {
        self.unit_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit_id.is_empty()
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|&&t| t).count()
    }

    /// Rows in the given order, with repetition allowed.
    pub fn select(&self, indices: &[usize]) -> Self {
        let pick_f = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            unit_id: indices.iter().map(|&i| self.unit_id[i]).collect(),
            x: self.x.select_rows(indices),
            t: indices.iter().map(|&i| self.t[i]).collect(),
            y: pick_f(&self.y),
            y0: pick_f(&self.y0),
            y1: pick_f(&self.y1),
            tau_true: pick_f(&self.tau_true),
            costs: pick_f(&self.costs),
            propensity: pick_f(&self.propensity),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.x.n_cols();
        let mut header = vec!["unit_id".to_string()];
        header.extend((0..d).map(|j| format!("x_{j}")));
        header.extend(
            ["T", "Y", "Y0", "Y1", "tau_true", "cost", "propensity"]
                .iter()
                .map(|s| s.to_string()),
        );
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(self.unit_id[i].to_string());
            rec.extend(self.x.values.row(i).iter().map(|v| v.to_string()));
            rec.push(u8::from(self.t[i]).to_string());
            for v in [
                self.y[i],
                self.y0[i],
                self.y1[i],
                self.tau_true[i],
                self.costs[i],
                self.propensity[i],
            ] {
                rec.push(v.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Simulates outcomes, treatment and costs on standardized covariates.
/// Sub-streams for noise, treatment and costs are derived from `seed`.
pub fn simulate_population(
    coeffs: &DgpCoefficients,
    x: &CovariateMatrix,
    seed: u64,
) -> Result<PopulationSample> {
    let outcomes = simulate_outcomes(coeffs, x, seed::derive(seed, "noise", &[]))?;
    let propensity: Vec<f64> = x
        .values
        .rows()
        .map(|row| treatment_propensity(coeffs, row))
        .collect();
    let (t, y) = assign_treatment(
        &propensity,
        &outcomes.y0,
        &outcomes.y1,
        seed::derive(seed, "treatment", &[]),
    )?;
    let costs = simulate_costs(x.n_rows(), seed::derive(seed, "costs", &[]))?;
    Ok(PopulationSample {
        unit_id: (0..x.n_rows()).collect(),
        x: x.clone(),
        t,
        y,
        y0: outcomes.y0,
        y1: outcomes.y1,
        tau_true: outcomes.tau_true,
        costs,
        propensity,
    })
}
