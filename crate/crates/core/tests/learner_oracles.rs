//! X-learner runs against populations with known effects.

use causal_alloc::dgp::{
    generate_covariates, sample_coefficients, simulate_population, standardize, CovariateSchema,
    PopulationSample,
};
use causal_alloc::learners::xlearner::{fit_xlearner, predict_cate, XLearnerConfig};

fn population(n: usize, seed: u64) -> PopulationSample {
    let schema = CovariateSchema::jobseekers();
    let x = standardize(&generate_covariates(n, &schema, &[0.0; 13], seed).unwrap(), None).unwrap();
    simulate_population(&sample_coefficients(13, seed).unwrap(), &x, seed + 1).unwrap()
}

fn mean_abs(values: &[f64], centre: f64) -> f64 {
    values.iter().map(|v| (v - centre).abs()).sum::<f64>() / values.len() as f64
}

fn constant_effect_estimates() -> Vec<f64> {
    let mut pop = population(5000, 21);
    pop.y = pop.t.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    let model = fit_xlearner(&pop, &XLearnerConfig::default(), 3).unwrap();
    predict_cate(&model, &pop.x.values).unwrap()
}

#[test]
fn outcome_equal_to_treatment_gives_unit_effect() {
    let tau = constant_effect_estimates();
    let err = mean_abs(&tau, 1.0);
    println!("mean |tau_hat - 1| = {err:.3e}");
    assert!(err < 0.05);
}

#[test]
fn null_effect_estimates_are_smaller() {
    let schema = CovariateSchema::jobseekers();
    let x = standardize(&generate_covariates(5000, &schema, &[0.0; 13], 22).unwrap(), None).unwrap();
    let mut coeffs = sample_coefficients(13, 22).unwrap();
    coeffs.effect_modifiers.iter_mut().for_each(|g| *g = 0.0);
    let pop = simulate_population(&coeffs, &x, 23).unwrap();
    assert!(pop.tau_true.iter().all(|&t| t == 0.0));
    let model = fit_xlearner(&pop, &XLearnerConfig::default(), 3).unwrap();
    let null = mean_abs(&predict_cate(&model, &pop.x.values).unwrap(), 0.0);
    let constant = mean_abs(&constant_effect_estimates(), 0.0);
    println!("null mean |tau_hat| = {null:.3}, constant-effect mean |tau_hat| = {constant:.3}");
    assert!(null < constant);
}
