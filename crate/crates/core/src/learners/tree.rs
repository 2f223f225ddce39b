//! CART regression trees with squared-error impurity.
//!
//! Split search is an exhaustive scan over sorted unique values of every
//! candidate feature. Columns are sorted once per training matrix
//! ([`Presorted`]) and each node keeps, per feature, a contiguous range of
//! sample slots in value order; children are formed by a stable partition of
//! that range, so no node re-sorts.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features drawn once per tree; `None` uses all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

impl TreeParams {
    pub fn with_max_depth(depth: usize) -> Self {
        Self {
            max_depth: Some(depth),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        if self.max_features == Some(0) {
            return Err(Error::invalid("max_features must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
    params: TreeParams,
}

impl RegressionTree {
    /// Rows with `x[feature] <= threshold` go left.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Row indices of a matrix sorted by each column (ties by row index).
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let order = (0..x.n_cols())
            .map(|j| {
                let mut rows: Vec<u32> = (0..x.n_rows() as u32).collect();
                rows.sort_by(|&a, &b| {
                    x.get(a as usize, j)
                        .total_cmp(&x.get(b as usize, j))
                        .then(a.cmp(&b))
                });
                rows
            })
            .collect();
        Self { order }
    }
}

/// Fits a tree on every row of `x` once.
pub fn fit_regression_tree(x: &Matrix, y: &[f64], params: &TreeParams, seed: u64) -> Result<RegressionTree> {
    let sorted = Presorted::new(x);
    let sample: Vec<u32> = (0..x.n_rows() as u32).collect();
    fit_on_sample(x, y, &sorted, &sample, params, seed)
}

/// Fits a tree on a multiset of rows (`sample` may repeat rows, as in a
/// bootstrap draw). `sorted` must come from the same `x`.
pub fn fit_on_sample(
    x: &Matrix,
    y: &[f64],
    sorted: &Presorted,
    sample: &[u32],
    params: &TreeParams,
    seed: u64,
) -> Result<RegressionTree> {
    params.validate()?;
    if sample.is_empty() || x.n_rows() == 0 {
        return Err(Error::invalid("cannot fit a tree on an empty sample"));
    }
    if y.len() != x.n_rows() {
        return Err(Error::invalid(format!(
            "{} targets for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    let d = x.n_cols();
    let features: Vec<usize> = match params.max_features {
        Some(k) if k < d => {
            let mut rng = seed::rng(seed);
            let mut f = index::sample(&mut rng, d, k).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..d).collect(),
    };

    // Slot s holds row sample[s]. Per feature, list slots in value order.
    let mut multiplicity = vec![0u32; x.n_rows()];
    let mut first_slot = vec![0u32; x.n_rows()];
    {
        let mut seen = vec![false; x.n_rows()];
        let mut by_row: Vec<(u32, u32)> = sample.iter().enumerate().map(|(s, &r)| (r, s as u32)).collect();
        by_row.sort_unstable();
        for (pos, &(r, _)) in by_row.iter().enumerate() {
            let r = r as usize;
            multiplicity[r] += 1;
            if !seen[r] {
                seen[r] = true;
                first_slot[r] = pos as u32;
            }
        }
        // slots renumbered so that copies of a row are consecutive
        let slot_row: Vec<u32> = by_row.iter().map(|&(r, _)| r).collect();
        let orders: Vec<Vec<u32>> = features
            .iter()
            .map(|&f| {
                let mut out = Vec::with_capacity(sample.len());
                for &r in &sorted.order[f] {
                    let m = multiplicity[r as usize];
                    let start = first_slot[r as usize];
                    out.extend(start..start + m);
                }
                out
            })
            .collect();
        let mut builder = Builder {
            x,
            y,
            slot_row: &slot_row,
            features: &features,
            orders,
            goes_left: vec![false; sample.len()],
            scratch: Vec::with_capacity(sample.len()),
            params,
            nodes: Vec::new(),
        };
        builder.grow(0, sample.len(), 0);
        Ok(RegressionTree {
            nodes: builder.nodes,
            n_features: d,
            params: *params,
        })
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    slot_row: &'a [u32],
    features: &'a [usize],
    orders: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    params: &'a TreeParams,
    nodes: Vec<Node>,
}

struct Candidate {
    gain: f64,
    feature_pos: usize,
    threshold: f64,
}

impl Builder<'_> {
    #[inline]
    fn target(&self, slot: u32) -> f64 {
        self.y[self.slot_row[slot as usize] as usize]
    }

    #[inline]
    fn value(&self, slot: u32, feature: usize) -> f64 {
        self.x.get(self.slot_row[slot as usize] as usize, feature)
    }

    fn grow(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });

        let n = end - start;
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &self.orders[0][start..end] {
            let t = self.target(s);
            sum += t;
            lo = lo.min(t);
            hi = hi.max(t);
        }
        let mean = sum / n as f64;

        let depth_ok = self.params.max_depth.is_none_or(|m| depth < m);
        let can_split = depth_ok
            && n >= self.params.min_samples_split
            && n >= 2 * self.params.min_samples_leaf
            && hi > lo;
        let best = if can_split { self.best_split(start, end, sum) } else { None };

        let Some(best) = best else {
            self.nodes[idx] = Node::Leaf { value: mean };
            return idx;
        };

        let feature = self.features[best.feature_pos];
        for k in start..end {
            let s = self.orders[0][k];
            self.goes_left[s as usize] = self.value(s, feature) <= best.threshold;
        }
        let mut mid = start;
        for f in 0..self.orders.len() {
            self.scratch.clear();
            let order = &mut self.orders[f];
            let mut write = start;
            for k in start..end {
                let s = order[k];
                if self.goes_left[s as usize] {
                    order[write] = s;
                    write += 1;
                } else {
                    self.scratch.push(s);
                }
            }
            order[write..end].copy_from_slice(&self.scratch);
            mid = write;
        }

        let left = self.grow(start, mid, depth + 1);
        let right = self.grow(mid, end, depth + 1);
        self.nodes[idx] = Node::Split {
            feature,
            threshold: best.threshold,
            left,
            right,
        };
        idx
    }

    fn best_split(&self, start: usize, end: usize, total: f64) -> Option<Candidate> {
        let n = end - start;
        let min_leaf = self.params.min_samples_leaf;
        let parent = total * total / n as f64;
        let mut best: Option<Candidate> = None;
        for (pos, &feature) in self.features.iter().enumerate() {
            let order = &self.orders[pos][start..end];
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let s = order[k];
                left_sum += self.target(s);
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < min_leaf {
                    continue;
                }
                if n_right < min_leaf {
                    break;
                }
                let v = self.value(s, feature);
                let v_next = self.value(order[k + 1], feature);
                if v_next <= v {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64 - parent;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = 0.5 * (v + v_next);
                    if threshold >= v_next {
                        threshold = v;
                    }
                    best = Some(Candidate {
                        gain,
                        feature_pos: pos,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> Matrix {
        Matrix::new(values.to_vec(), values.len(), 1).unwrap()
    }

    #[test]
    fn constant_target_single_leaf() {
        let x = column(&[1.0, 2.0, 3.0, 4.0]);
        let t = fit_regression_tree(&x, &[0.7; 4], &TreeParams::default(), 0).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict_row(&[100.0]), 0.7);
    }

    #[test]
    fn depth_one_step_function() {
        // feature 0 is noise, feature 1 carries the step
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let x1 = if i % 2 == 0 { -1.0 - i as f64 * 0.01 } else { 1.0 + i as f64 * 0.01 };
            rows.push(vec![(i * 7 % 13) as f64, x1]);
            y.push(if x1 > 0.0 { 1.0 } else { 0.0 });
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let t = fit_regression_tree(&x, &y, &TreeParams::with_max_depth(1), 0).unwrap();
        match &t.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 1);
                assert!(threshold.abs() < 1.1);
            }
            n => panic!("expected split, got {n:?}"),
        }
        assert_eq!(t.predict_row(&[0.0, -2.0]), 0.0);
        assert_eq!(t.predict_row(&[0.0, 2.0]), 1.0);
    }

    #[test]
    fn midpoint_thresholds() {
        let x = column(&[0.0, 1.0, 3.0, 4.0]);
        let t = fit_regression_tree(&x, &[0.0, 0.0, 1.0, 1.0], &TreeParams::with_max_depth(1), 0).unwrap();
        match &t.nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 2.0),
            n => panic!("{n:?}"),
        }
    }

    #[test]
    fn ties_prefer_lower_feature() {
        // two identical columns: the split must use feature 0
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]).unwrap();
        let t = fit_regression_tree(&x, &[0.0, 0.0, 5.0, 5.0], &TreeParams::with_max_depth(1), 0).unwrap();
        assert!(matches!(t.nodes()[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn min_samples_leaf_respected() {
        let x = column(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = [10.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let params = TreeParams { min_samples_leaf: 2, ..TreeParams::default() };
        let t = fit_regression_tree(&x, &y, &params, 0).unwrap();
        let mut counts = std::collections::HashMap::new();
        for i in 0..6 {
            *counts.entry(t.predict_row(&[i as f64]).to_bits()).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 2));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let x = Matrix::zeros(0, 2);
        assert!(matches!(
            fit_regression_tree(&x, &[], &TreeParams::default(), 0),
            Err(Error::InvalidArgument(_))
        ));
        let x = column(&[1.0, 2.0]);
        assert!(fit_regression_tree(&x, &[1.0], &TreeParams::default(), 0).is_err());
    }

    #[test]
    fn bootstrap_sample_with_repeats() {
        let x = column(&[0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 1.0, 1.0];
        let sorted = Presorted::new(&x);
        let t = fit_on_sample(&x, &y, &sorted, &[3, 3, 3, 0], &TreeParams::default(), 0).unwrap();
        assert_eq!(t.predict_row(&[0.0]), 0.0);
        assert_eq!(t.predict_row(&[3.0]), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn memorizes_distinct_rows(rows in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -5.0f64..5.0), 2..60)) {
            let x = Matrix::from_rows(&rows.iter().map(|r| vec![r.0, r.1]).collect::<Vec<_>>()).unwrap();
            let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let mut distinct = rows.iter().map(|r| (r.0.to_bits(), r.1.to_bits())).collect::<Vec<_>>();
            distinct.sort_unstable();
            distinct.dedup();
            prop_assume!(distinct.len() == rows.len());
            let t = fit_regression_tree(&x, &y, &TreeParams::default(), 0).unwrap();
            let pred = t.predict(&x);
            for (p, v) in pred.iter().zip(&y) {
                prop_assert!((p - v).abs() < 1e-9);
            }
        }

        #[test]
        fn invariant_to_row_order(
            rows in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -5.0f64..5.0), 2..50),
            rot in 0usize..50,
            probe in prop::collection::vec((-60.0f64..60.0, -60.0f64..60.0), 10),
        ) {
            let n = rows.len();
            let permuted: Vec<_> = (0..n).map(|i| rows[(i * 7 + rot) % n]).collect();
            let mut seen: Vec<usize> = (0..n).map(|i| (i * 7 + rot) % n).collect();
            seen.sort_unstable();
            seen.dedup();
            prop_assume!(seen.len() == n);
            let mut c0: Vec<u64> = rows.iter().map(|r| r.0.to_bits()).collect();
            let mut c1: Vec<u64> = rows.iter().map(|r| r.1.to_bits()).collect();
            c0.sort_unstable(); c0.dedup(); c1.sort_unstable(); c1.dedup();
            prop_assume!(c0.len() == n && c1.len() == n);
            let fit = |r: &[(f64, f64, f64)]| {
                let x = Matrix::from_rows(&r.iter().map(|v| vec![v.0, v.1]).collect::<Vec<_>>()).unwrap();
                let y: Vec<f64> = r.iter().map(|v| v.2).collect();
                fit_regression_tree(&x, &y, &TreeParams::with_max_depth(4), 0).unwrap()
            };
            let (a, b) = (fit(&rows), fit(&permuted));
            for p in &probe {
                prop_assert_eq!(a.predict_row(&[p.0, p.1]), b.predict_row(&[p.0, p.1]));
            }
        }
    }
}
