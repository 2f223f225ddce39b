//! Cross-module properties checked through the public API.

use causal_alloc::dgp::{
    generate_covariates, sample_coefficients, simulate_outcomes, standardize, CovariateSchema,
};
use causal_alloc::eval::{aggregate, f1_agreement, oracle_allocation, Scenario, Setting, SweepRecord};
use causal_alloc::learners::xlearner::combine;
use causal_alloc::policy::{allocate_cost_efficient, allocate_topk, AllocationVector, PolicySpec, SolveStatus};
use causal_alloc::shift::{logit, resample_indices, shift_weights};
use proptest::prelude::*;

fn alloc(decisions: Vec<bool>) -> AllocationVector {
    AllocationVector {
        decisions,
        objective_value: 0.0,
        spent: None,
        status: SolveStatus::Optimal,
    }
}

fn cohort(n: usize, seed: u64) -> causal_alloc::dgp::CovariateMatrix {
    let schema = CovariateSchema::jobseekers();
    standardize(&generate_covariates(n, &schema, &[0.0; 13], seed).unwrap(), None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effect_is_additive_and_outcomes_differ_by_it(seed in 0u64..1000) {
        let x = cohort(40, seed);
        let c = sample_coefficients(13, seed).unwrap();
        let o = simulate_outcomes(&c, &x, seed + 1).unwrap();
        for i in 0..40 {
            prop_assert!((o.y1[i] - o.y0[i] - o.tau_true[i]).abs() <= 1e-12 * (1.0 + o.y0[i].abs()));
        }
        for i in 0..39 {
            let (a, b) = (x.values.row(i), x.values.row(i + 1));
            let sum: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + q).collect();
            prop_assert!((c.cate(&sum) - c.cate(a) - c.cate(b)).abs() < 1e-10);
        }
    }

    #[test]
    fn standardizing_twice_is_identity(seed in 0u64..1000) {
        let once = cohort(60, seed);
        let mut raw = once.clone();
        raw.stats = None;
        let twice = standardize(&raw, None).unwrap();
        for (a, b) in once.values.as_slice().iter().zip(twice.values.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_is_symmetric_bounded_and_relabel_invariant(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60),
        rotate in 0usize..60,
    ) {
        let a: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let o: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let f = f1_agreement(&alloc(a.clone()), &alloc(o.clone())).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f, f1_agreement(&alloc(o.clone()), &alloc(a.clone())).unwrap());
        let r = rotate % a.len();
        let (mut a2, mut o2) = (a.clone(), o.clone());
        a2.rotate_left(r);
        o2.rotate_left(r);
        prop_assert_eq!(f, f1_agreement(&alloc(a2), &alloc(o2)).unwrap());
    }

    #[test]
    fn oracle_ce_objective_grows_with_budget(
        items in prop::collection::vec((-1.0f64..2.0, 0.1f64..2.0), 1..14),
        small in 0.0f64..0.5,
        extra in 0.0f64..0.5,
    ) {
        let tau: Vec<f64> = items.iter().map(|i| i.0).collect();
        let costs: Vec<f64> = items.iter().map(|i| i.1).collect();
        let total: f64 = costs.iter().sum();
        let lo = oracle_allocation(&tau, Some(&costs), &PolicySpec::CostEfficient(small * total)).unwrap();
        let hi = oracle_allocation(&tau, Some(&costs), &PolicySpec::CostEfficient((small + extra) * total)).unwrap();
        prop_assert!(hi.objective_value >= lo.objective_value);
        prop_assert!(lo.spent.unwrap() <= small * total);
    }

    #[test]
    fn allocations_are_feasible(
        items in prop::collection::vec((-2.0f64..2.0, 0.05f64..3.0), 1..30),
        frac in 0.0f64..1.0,
        k in 0usize..30,
    ) {
        let tau: Vec<f64> = items.iter().map(|i| i.0).collect();
        let costs: Vec<f64> = items.iter().map(|i| i.1).collect();
        let budget = frac * costs.iter().sum::<f64>();
        let ce = allocate_cost_efficient(&tau, &costs, budget).unwrap();
        let spent: f64 = ce.selected().iter().map(|&i| costs[i]).sum();
        prop_assert!(spent <= budget + 1e-12);
        let k = k.min(tau.len());
        let top = allocate_topk(&tau, k).unwrap();
        prop_assert!(top.n_selected() <= k);
        for a in [&ce, &top] {
            prop_assert!(a.selected().iter().all(|&i| tau[i] > 0.0));
        }
    }

    #[test]
    fn weights_follow_logit_magnitude(ps in prop::collection::vec(0.001f64..0.999, 2..50)) {
        let w = shift_weights(&ps, 6).unwrap();
        prop_assert!(w.raw.iter().all(|&r| r >= 0.0));
        for i in 0..ps.len() {
            for j in 0..ps.len() {
                if logit(ps[i]).abs() > logit(ps[j]).abs() {
                    prop_assert!(w.raw[i] > w.raw[j]);
                }
                if w.raw[i] > w.raw[j] {
                    prop_assert!(w.normalized[i] > w.normalized[j]);
                }
            }
        }
    }

    #[test]
    fn convex_combination_stays_between(g in 0.0f64..=1.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let v = combine(g, a, b);
        prop_assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
    }

    #[test]
    fn aggregate_ignores_record_order(values in prop::collection::vec(0.0f64..=1.0, 2..20), seed in any::<u64>()) {
        let mut records: Vec<SweepRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &f1)| SweepRecord {
                setting: if i % 2 == 0 { Setting::Baseline } else { Setting::Shifted },
                scenario: Scenario::Ce,
                budget_fraction: 0.25,
                seed: i as u64,
                f1,
                pehe: f1 * 2.0,
                n_allocated: i,
                oracle_size: i,
            })
            .collect();
        let before = aggregate(&records).unwrap();
        let n = records.len();
        records.rotate_left((seed % n as u64) as usize);
        records.reverse();
        prop_assert_eq!(before, aggregate(&records).unwrap());
    }
}

#[test]
fn uniform_resampling_matches_bootstrap_mean() {
    let n = 2000;
    let values: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 100.0).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let uniform = vec![1.0 / n as f64; n];
    let m = 20000;
    let idx = resample_indices(&uniform, n, m, 11).unwrap();
    let resampled = idx.iter().map(|&i| values[i]).sum::<f64>() / m as f64;
    assert!((resampled - mean).abs() < 3.0 * sd / (m as f64).sqrt());
    assert_eq!(idx, resample_indices(&uniform, n, m, 11).unwrap());
}

#[test]
fn treated_fraction_tracks_mean_propensity() {
    use causal_alloc::dgp::simulate_population;
    let n = 100_000;
    let x = cohort(n, 3);
    let pop = simulate_population(&sample_coefficients(13, 3).unwrap(), &x, 4).unwrap();
    let p_bar = pop.propensity.iter().sum::<f64>() / n as f64;
    let var = pop.propensity.iter().map(|p| p * (1.0 - p)).sum::<f64>() / n as f64;
    let frac = pop.n_treated() as f64 / n as f64;
    assert!((frac - p_bar).abs() < 3.0 * (var / n as f64).sqrt(), "{frac} vs {p_bar}");
}
