//! Allocation policies over a vector of treatment effects.
//!
//! * unconstrained: treat every unit with a strictly positive effect;
//! * top-k: the `k` largest strictly positive effects, ties to lower index;
//! * cost-efficient: an exact 0-1 knapsack maximizing the summed effect
//!   under a budget on summed costs.
//!
//! The knapsack drops units with nonpositive effect (they never raise the
//! objective), sorts the rest by effect/cost density (ties to lower index)
//! and runs a depth-first branch and bound that tries inclusion before
//! exclusion and prunes with the fractional-relaxation bound. An incumbent
//! is replaced only by a strictly better solution, so among optimal
//! allocations the one first reached in include-first order is returned.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODE_LIMIT: u64 = 10_000_000;

/// Brute-force enumeration refuses larger inputs.
pub const BRUTE_FORCE_MAX_UNITS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicySpec {
    Unconstrained,
    TopK(usize),
    CostEfficient(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Optimal after removing units with nonpositive effect.
    OptimalFiltered,
    /// Node limit exhausted; decisions are the best incumbent found.
    NodeLimitHit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::OptimalFiltered => "optimal-filtered",
            SolveStatus::NodeLimitHit => "node-limit-hit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationVector {
    pub decisions: Vec<bool>,
    /// `Σ π_i τ_i`, summed in unit order.
    pub objective_value: f64,
    /// `Σ π_i c_i` for cost-efficient allocations.
    pub spent: Option<f64>,
    pub status: SolveStatus,
}

impl AllocationVector {
    fn from_decisions(decisions: Vec<bool>, tau: &[f64], costs: Option<&[f64]>, status: SolveStatus) -> Self {
        let objective_value = decisions.iter().zip(tau).filter(|(d, _)| **d).map(|(_, t)| t).sum();
        let spent = costs.map(|c| decisions.iter().zip(c).filter(|(d, _)| **d).map(|(_, c)| c).sum());
        Self {
            decisions,
            objective_value,
            spent,
            status,
        }
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn n_selected(&self) -> usize {
        self.decisions.iter().filter(|&&d| d).count()
    }

    pub fn selected(&self) -> Vec<usize> {
        (0..self.decisions.len()).filter(|&i| self.decisions[i]).collect()
    }
}

pub fn allocate_unconstrained(tau: &[f64]) -> AllocationVector {
    let decisions = tau.iter().map(|&t| t > 0.0).collect();
    AllocationVector::from_decisions(decisions, tau, None, SolveStatus::Optimal)
}

pub fn allocate_topk(tau: &[f64], k: usize) -> Result<AllocationVector> {
    if k > tau.len() {
        return Err(Error::invalid(format!("k = {k} exceeds {} units", tau.len())));
    }
    let mut positive: Vec<usize> = (0..tau.len()).filter(|&i| tau[i] > 0.0).collect();
    positive.sort_by(|&a, &b| tau[b].total_cmp(&tau[a]).then(a.cmp(&b)));
    let mut decisions = vec![false; tau.len()];
    for &i in positive.iter().take(k) {
        decisions[i] = true;
    }
    Ok(AllocationVector::from_decisions(decisions, tau, None, SolveStatus::Optimal))
}

fn check_knapsack_inputs(tau: &[f64], costs: &[f64], budget: f64) -> Result<()> {
    if tau.len() != costs.len() {
        return Err(Error::invalid(format!("{} effects but {} costs", tau.len(), costs.len())));
    }
    if let Some((i, c)) = costs.iter().enumerate().find(|(_, c)| !(**c > 0.0) || !c.is_finite()) {
        return Err(Error::invalid(format!("cost of unit {i} is {c}; costs must be positive")));
    }
    if !(budget >= 0.0) {
        return Err(Error::invalid(format!("budget must be nonnegative, got {budget}")));
    }
    if let Some(t) = tau.iter().find(|t| !t.is_finite()) {
        return Err(Error::invalid(format!("effect {t} is not finite")));
    }
    Ok(())
}

/// Candidates (positive effect, individually affordable) sorted by density.
fn density_order(tau: &[f64], costs: &[f64], budget: f64) -> Vec<usize> {
    let mut items: Vec<usize> = (0..tau.len()).filter(|&i| tau[i] > 0.0 && costs[i] <= budget).collect();
    items.sort_by(|&a, &b| (tau[b] / costs[b]).total_cmp(&(tau[a] / costs[a])).then(a.cmp(&b)));
    items
}

fn filtered_status(tau: &[f64]) -> SolveStatus {
    if tau.iter().any(|&t| t <= 0.0) {
        SolveStatus::OptimalFiltered
    } else {
        SolveStatus::Optimal
    }
}

pub fn allocate_cost_efficient(tau: &[f64], costs: &[f64], budget: f64) -> Result<AllocationVector> {
    allocate_cost_efficient_with_limit(tau, costs, budget, DEFAULT_NODE_LIMIT)
}

pub fn allocate_cost_efficient_with_limit(
    tau: &[f64],
    costs: &[f64],
    budget: f64,
    node_limit: u64,
) -> Result<AllocationVector> {
    check_knapsack_inputs(tau, costs, budget)?;
    let order = density_order(tau, costs, budget);
    let values: Vec<f64> = order.iter().map(|&i| tau[i]).collect();
    let weights: Vec<f64> = order.iter().map(|&i| costs[i]).collect();
    let (chosen, complete) = branch_and_bound(&values, &weights, budget, node_limit);

    let mut decisions = vec![false; tau.len()];
    for (pos, &take) in chosen.iter().enumerate() {
        if take {
            decisions[order[pos]] = true;
        }
    }
    let status = if complete { filtered_status(tau) } else { SolveStatus::NodeLimitHit };
    Ok(AllocationVector::from_decisions(decisions, tau, Some(costs), status))
}

/// Depth-first search over density-sorted items. Returns the incumbent's
/// take/skip vector and whether the search finished within `node_limit`.
fn branch_and_bound(values: &[f64], weights: &[f64], budget: f64, node_limit: u64) -> (Vec<bool>, bool) {
    let n = values.len();
    let mut prefix_w = vec![0.0; n + 1];
    let mut prefix_v = vec![0.0; n + 1];
    for i in 0..n {
        prefix_w[i + 1] = prefix_w[i] + weights[i];
        prefix_v[i + 1] = prefix_v[i] + values[i];
    }
    let mut suffix_min_w = vec![f64::INFINITY; n + 1];
    for i in (0..n).rev() {
        suffix_min_w[i] = suffix_min_w[i + 1].min(weights[i]);
    }

    // Dantzig bound on items i.. with capacity cap, inflated slightly so
    // rounding in the prefix sums never prunes a strictly better branch.
    let bound = |i: usize, cap: f64| -> f64 {
        let limit = prefix_w[i] + cap;
        let b = prefix_w[i..].partition_point(|&w| w <= limit) + i - 1;
        let mut ub = prefix_v[b] - prefix_v[i];
        if b < n {
            let room = cap - (prefix_w[b] - prefix_w[i]);
            ub += values[b] * (room.max(0.0) / weights[b]);
        }
        ub + 1e-9 * (1.0 + ub.abs())
    };

    let mut best_value = 0.0;
    let mut best: Vec<bool> = vec![false; n];
    let mut current = vec![false; n];
    let mut nodes: u64 = 0;

    struct Frame {
        depth: usize,
        cap: f64,
        value: f64,
        take: Option<bool>,
    }
    let mut stack = vec![Frame {
        depth: 0,
        cap: budget,
        value: 0.0,
        take: None,
    }];

    while let Some(frame) = stack.pop() {
        let Frame { depth: i, cap, value, take } = frame;
        if let Some(t) = take {
            current[i - 1] = t;
        }
        nodes += 1;
        if nodes > node_limit {
            return (best, false);
        }

        if i == n || suffix_min_w[i] > cap {
            if value > best_value {
                best_value = value;
                best[..i].copy_from_slice(&current[..i]);
                best[i..].iter_mut().for_each(|b| *b = false);
            }
            continue;
        }
        if prefix_w[n] - prefix_w[i] <= cap {
            // everything left fits; taking all of it is the include-first leaf
            let mut total = value;
            let mut room = cap;
            let mut all_fit = true;
            for k in i..n {
                if weights[k] > room {
                    all_fit = false;
                    break;
                }
                room -= weights[k];
                total += values[k];
            }
            if all_fit {
                if total > best_value {
                    best_value = total;
                    best[..i].copy_from_slice(&current[..i]);
                    best[i..].iter_mut().for_each(|b| *b = true);
                }
                continue;
            }
        }
        if value + bound(i, cap) <= best_value {
            continue;
        }
        stack.push(Frame {
            depth: i + 1,
            cap,
            value,
            take: Some(false),
        });
        if weights[i] <= cap {
            stack.push(Frame {
                depth: i + 1,
                cap: cap - weights[i],
                value: value + values[i],
                take: Some(true),
            });
        }
    }
    (best, true)
}

/// Exhaustive search over every subset of the candidate units, for testing
/// the branch and bound. Uses the same candidate filter, density order,
/// capacity arithmetic and strict-improvement rule.
pub fn knapsack_brute_force(tau: &[f64], costs: &[f64], budget: f64) -> Result<AllocationVector> {
    if tau.len() > BRUTE_FORCE_MAX_UNITS {
        return Err(Error::invalid(format!(
            "brute force limited to {BRUTE_FORCE_MAX_UNITS} units, got {}",
            tau.len()
        )));
    }
    check_knapsack_inputs(tau, costs, budget)?;
    let order = density_order(tau, costs, budget);
    let m = order.len();
    let mut best_value = 0.0;
    let mut best_mask: u64 = 0;
    // Include-first depth-first order visits masks in descending order when
    // the first item is the most significant bit.
    for mask in (0..(1u64 << m)).rev() {
        let mut room = budget;
        let mut value = 0.0;
        let mut feasible = true;
        for pos in 0..m {
            if mask & (1 << (m - 1 - pos)) != 0 {
                let i = order[pos];
                if costs[i] > room {
                    feasible = false;
                    break;
                }
                room -= costs[i];
                value += tau[i];
            }
        }
        if feasible && value > best_value {
            best_value = value;
            best_mask = mask;
        }
    }
    let mut decisions = vec![false; tau.len()];
    for pos in 0..m {
        if best_mask & (1 << (m - 1 - pos)) != 0 {
            decisions[order[pos]] = true;
        }
    }
    Ok(AllocationVector::from_decisions(decisions, tau, Some(costs), filtered_status(tau)))
}

/// Dispatches on the policy variant. `costs` is required for cost-efficient
/// allocations and ignored otherwise.
pub fn allocate(tau: &[f64], costs: Option<&[f64]>, spec: &PolicySpec) -> Result<AllocationVector> {
    match *spec {
        PolicySpec::Unconstrained => Ok(allocate_unconstrained(tau)),
        PolicySpec::TopK(k) => allocate_topk(tau, k),
        PolicySpec::CostEfficient(budget) => {
            let costs = costs.ok_or_else(|| Error::invalid("cost-efficient allocation needs costs"))?;
            allocate_cost_efficient(tau, costs, budget)
        }
    }
}

pub fn write_allocation_csv<W: std::io::Write>(
    out: W,
    allocation: &AllocationVector,
    tau: &[f64],
    costs: &[f64],
    scenario: &str,
    budget: f64,
) -> Result<()> {
    if allocation.len() != tau.len() || tau.len() != costs.len() {
        return Err(Error::invalid("allocation, effects and costs differ in length"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unit_id", "decision", "tau_used", "cost", "scenario", "budget"])?;
    for i in 0..tau.len() {
        w.write_record([
            i.to_string(),
            u8::from(allocation.decisions[i]).to_string(),
            tau[i].to_string(),
            costs[i].to_string(),
            scenario.to_string(),
            budget.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
