//! Platt scaling: fit `p = sigmoid(A·d + B)` to decision values.
//!
//! Labels are replaced by the regularized targets `(N₊+1)/(N₊+2)` and
//! `1/(N₋+2)` so that separable training data still yields finite
//! parameters. The negative log-likelihood is minimized by Newton's method
//! with a backtracking line search.

use crate::dataset::Label;
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const MIN_STEP: f64 = 1e-10;
const HESSIAN_RIDGE: f64 = 1e-12;
const GRAD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn probability(&self, decision: f64) -> f64 {
        sigmoid(self.a * decision + self.b)
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

/// `ln(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Per-sample targets used in place of hard labels.
pub fn platt_targets(labels: &[Label]) -> Vec<f64> {
    let pos = labels.iter().filter(|&&l| l == Label::Fight).count() as f64;
    let neg = labels.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    labels.iter().map(|&l| if l == Label::Fight { hi } else { lo }).collect()
}

/// Negative log-likelihood of `(a, b)` against the regularized targets.
pub fn platt_objective(decisions: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    decisions
        .iter()
        .zip(targets)
        .map(|(&d, &t)| {
            let z = a * d + b;
            softplus(z) - t * z
        })
        .sum()
}

pub fn fit_platt(decisions: &[f64], labels: &[Label]) -> Result<PlattParams> {
    if decisions.len() != labels.len() {
        return Err(Error::Calibration(format!(
            "{} decision values but {} labels",
            decisions.len(),
            labels.len()
        )));
    }
    if decisions.iter().any(|d| !d.is_finite()) {
        return Err(Error::Calibration("non-finite decision value".into()));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Fight).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Calibration("both classes are required".into()));
    }

    let t = platt_targets(labels);
    let mut a = 0.0;
    let mut b = ((pos as f64 + 1.0) / (neg as f64 + 1.0)).ln();
    let mut fval = platt_objective(decisions, &t, a, b);

    for _ in 0..MAX_ITER {
        let (mut g1, mut g2) = (0.0, 0.0);
        let (mut h11, mut h22, mut h21) = (HESSIAN_RIDGE, HESSIAN_RIDGE, 0.0);
        for (&d, &ti) in decisions.iter().zip(&t) {
            let p = sigmoid(a * d + b);
            let w = p * (1.0 - p);
            h11 += d * d * w;
            h22 += w;
            h21 += d * w;
            g1 += d * (p - ti);
            g2 += p - ti;
        }
        if g1.abs() < GRAD_EPS && g2.abs() < GRAD_EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let slope = g1 * da + g2 * db;

        let mut step = 1.0;
        let mut accepted = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_objective(decisions, &t, na, nb);
            if nf < fval + 1e-4 * step * slope {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(PlattParams { a, b })
}
