//! L2-regularized logistic regression solved by damped Newton iterations.
//!
//! Minimizes `‖w‖² / (2C) + Σ_i [log(1 + e^{z_i}) - t_i z_i]` with
//! `z_i = x_i·w + b`. The intercept `b` is not penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Inverse regularization strength.
    pub c: f64,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_proba_row(r)).collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_inputs(x: &Matrix, t: &[bool], c: f64) -> Result<()> {
    if t.len() != x.n_rows() {
        return Err(Error::invalid(format!("{} labels for {} rows", t.len(), x.n_rows())));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid(format!("C must be positive and finite, got {c}")));
    }
    Ok(())
}

/// Penalized objective at `params = [w..., b]`.
pub fn objective(x: &Matrix, t: &[bool], params: &[f64], c: f64) -> f64 {
    let d = x.n_cols();
    let (w, b) = (&params[..d], params[d]);
    let penalty = w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c);
    let loss: f64 = x
        .rows()
        .zip(t)
        .map(|(row, &ti)| {
            let z = b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
            softplus(z) - if ti { z } else { 0.0 }
        })
        .sum();
    penalty + loss
}

/// Analytic gradient of [`objective`], intercept component last.
pub fn gradient(x: &Matrix, t: &[bool], params: &[f64], c: f64) -> Vec<f64> {
    let d = x.n_cols();
    let (w, b) = (&params[..d], params[d]);
    let mut g = vec![0.0; d + 1];
    for (row, &ti) in x.rows().zip(t) {
        let z = b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
        let r = sigmoid(z) - f64::from(u8::from(ti));
        for j in 0..d {
            g[j] += r * row[j];
        }
        g[d] += r;
    }
    for j in 0..d {
        g[j] += w[j] / c;
    }
    g
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn fit_logistic(x: &Matrix, t: &[bool], c: f64) -> Result<LogisticModel> {
    check_inputs(x, t, c)?;
    let positives = t.iter().filter(|&&v| v).count();
    if positives == 0 || positives == t.len() {
        return Err(Error::DegenerateLabels);
    }
    let n = x.n_rows();
    let d = x.n_cols();
    let tol = GRAD_TOL * (n.max(1) as f64);

    // start from the penalty-free optimum of an intercept-only model
    let base_rate = positives as f64 / n as f64;
    let mut params = vec![0.0; d + 1];
    params[d] = (base_rate / (1.0 - base_rate)).ln();
    let mut f = objective(x, t, &params, c);
    let mut iterations = 0;

    while iterations < MAX_ITER {
        let g = gradient(x, t, &params, c);
        if norm(&g) <= tol {
            break;
        }
        iterations += 1;

        let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
        for row in x.rows() {
            let z = params[d] + params[..d].iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
            let p = sigmoid(z);
            let s = p * (1.0 - p);
            for a in 0..d {
                let sa = s * row[a];
                for bcol in 0..=a {
                    h[(a, bcol)] += sa * row[bcol];
                }
                h[(d, a)] += sa;
            }
            h[(d, d)] += s;
        }
        for a in 0..=d {
            for bcol in 0..a {
                h[(bcol, a)] = h[(a, bcol)];
            }
        }
        for a in 0..d {
            h[(a, a)] += 1.0 / c;
        }
        let gv = DVector::from_vec(g.clone());
        let step = h
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&gv))
            .or_else(|| h.lu().solve(&gv))
            .unwrap_or(gv);

        let slope: f64 = -step.iter().zip(&g).map(|(s, gi)| s * gi).sum::<f64>();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p - alpha * s).collect();
            let ft = objective(x, t, &trial, c);
            if ft <= f + 1e-4 * alpha * slope {
                params = trial;
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no decrease representable at this precision
            break;
        }
    }

    Ok(LogisticModel {
        weights: params[..d].to_vec(),
        intercept: params[d],
        c,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn synthetic(n: usize, s: u64) -> (Matrix, Vec<bool>) {
        let mut rng = seed::rng(s);
        let mut rows = Vec::new();
        let mut t = Vec::new();
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let p = sigmoid(1.5 * a - 0.7 * b + 0.3);
            rows.push(vec![a, b]);
            t.push(rng.random_bool(p));
        }
        (Matrix::from_rows(&rows).unwrap(), t)
    }

    #[test]
    fn symmetric_data_has_zero_intercept() {
        let mut rows = Vec::new();
        let mut t = Vec::new();
        for i in 0..50 {
            let v = 0.1 + i as f64 * 0.05;
            rows.push(vec![v]);
            t.push(i % 3 != 0);
            rows.push(vec![-v]);
            t.push(i % 3 == 0);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let m = fit_logistic(&x, &t, 1.0).unwrap();
        assert!(m.intercept.abs() < 1e-3, "intercept {}", m.intercept);
    }

    #[test]
    fn stronger_penalty_shrinks_weights() {
        let (x, t) = synthetic(400, 1);
        let weak = fit_logistic(&x, &t, 100.0).unwrap();
        let strong = fit_logistic(&x, &t, 1e-4).unwrap();
        assert!(norm(&strong.weights) < norm(&weak.weights));
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let (x, t) = synthetic(500, 2);
        for c in DEFAULT_C_GRID {
            let m = fit_logistic(&x, &t, c).unwrap();
            let mut p = m.weights.clone();
            p.push(m.intercept);
            let g = gradient(&x, &t, &p, c);
            assert!(norm(&g) <= 1e-6 * 500.0, "C={c}: |g|={}", norm(&g));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, t) = synthetic(200, 3);
        let mut rng = seed::rng(4);
        for _ in 0..10 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = gradient(&x, &t, &p, 0.5);
            for k in 0..3 {
                let h = 1e-5;
                let mut up = p.clone();
                let mut down = p.clone();
                up[k] += h;
                down[k] -= h;
                let fd = (objective(&x, &t, &up, 0.5) - objective(&x, &t, &down, 0.5)) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-8);
                assert!(rel < 1e-4, "component {k}: fd {fd} analytic {}", g[k]);
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(fit_logistic(&x, &[true, true], 1.0), Err(Error::DegenerateLabels)));
        assert!(matches!(fit_logistic(&x, &[false, false], 1.0), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn separable_data_stays_finite() {
        let x = Matrix::from_rows(&[vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]]).unwrap();
        let m = fit_logistic(&x, &[false, false, true, true], 100.0).unwrap();
        assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
        let p = m.predict_proba(&x);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
