//! Sequential minimal optimization for the soft-margin SVM dual
//!
//! ```text
//! maximize   Σ αᵢ − ½ Σᵢⱼ αᵢ αⱼ yᵢ yⱼ K(xᵢ, xⱼ)
//! subject to 0 ≤ αᵢ ≤ C,  Σ αᵢ yᵢ = 0
//! ```
//!
//! The solver runs in two phases. The first is the simplified SMO sweep:
//! every KKT violator is paired with a randomly drawn partner until
//! `max_passes` consecutive sweeps change nothing. The second repeatedly
//! optimizes the maximal violating pair until the KKT gap is below the
//! tolerance, which certifies convergence regardless of how the random
//! sweeps ended.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Floor for the curvature along the pair direction (duplicate points give 0).
const TAU: f64 = 1e-12;
/// Changes smaller than this do not count as progress in the random sweep.
const MIN_STEP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    pub tolerance: f64,
    pub max_passes: usize,
    pub seed: u64,
    /// Upper bound on pair updates in the certification phase.
    pub max_iterations: usize,
}

/// Row-major symmetric Gram matrix.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn build(n: usize, mut kernel: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = kernel(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self { n, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    /// Largest KKT violation `max(max_low F − min_up F, 0)` at exit.
    pub kkt_gap: f64,
    pub random_sweeps: usize,
    pub certification_steps: usize,
}

struct Solver<'a> {
    gram: &'a GramMatrix,
    y: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    /// `u[k] = Σⱼ αⱼ yⱼ K(j, k)`, the decision value without bias.
    u: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn snap(&self, a: f64) -> f64 {
        let eps = 1e-12 * self.c;
        if a < eps {
            0.0
        } else if a > self.c - eps {
            self.c
        } else {
            a
        }
    }

    /// Jointly optimizes `αᵢ, αⱼ`. Returns the change applied to `αⱼ`.
    fn take_step(&mut self, i: usize, j: usize) -> Option<(f64, f64)> {
        if i == j {
            return None;
        }
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (lo, hi) = if yi != yj {
            ((aj - ai).max(0.0), (self.c + aj - ai).min(self.c))
        } else {
            ((ai + aj - self.c).max(0.0), (ai + aj).min(self.c))
        };
        if hi - lo <= 0.0 {
            return None;
        }
        let ei = self.u[i] - yi;
        let ej = self.u[j] - yj;
        let eta = (2.0 * self.gram.get(i, j) - self.gram.get(i, i) - self.gram.get(j, j)).min(-TAU);
        let aj_new = self.snap((aj - yj * (ei - ej) / eta).clamp(lo, hi));
        if aj_new == aj {
            return None;
        }
        let ai_new = self.snap(ai + yi * yj * (aj - aj_new));
        let (di, dj) = (ai_new - ai, aj_new - aj);
        self.alpha[i] = ai_new;
        self.alpha[j] = aj_new;
        let (ri, rj) = (self.gram.row(i), self.gram.row(j));
        for (k, u) in self.u.iter_mut().enumerate() {
            *u += di * yi * ri[k] + dj * yj * rj[k];
        }
        Some((di, dj))
    }

    /// Indices of the maximal violating pair and their gap.
    fn max_violating_pair(&self) -> Option<(usize, usize, f64)> {
        let mut low: Option<(usize, f64)> = None;
        let mut up: Option<(usize, f64)> = None;
        for k in 0..self.alpha.len() {
            let f = self.y[k] - self.u[k];
            let a = self.alpha[k];
            let positive = self.y[k] > 0.0;
            let in_low = (positive && a < self.c) || (!positive && a > 0.0);
            let in_up = (!positive && a < self.c) || (positive && a > 0.0);
            if in_low && low.is_none_or(|(_, best)| f > best) {
                low = Some((k, f));
            }
            if in_up && up.is_none_or(|(_, best)| f < best) {
                up = Some((k, f));
            }
        }
        match (low, up) {
            (Some((i, fi)), Some((j, fj))) => Some((i, j, fi - fj)),
            _ => None,
        }
    }

    /// Bias from the converged multipliers: mean over free vectors, else the
    /// midpoint of the feasible interval.
    fn final_bias(&self) -> f64 {
        let mut free_sum = 0.0;
        let mut free_count = 0usize;
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for k in 0..self.alpha.len() {
            let f = self.y[k] - self.u[k];
            let a = self.alpha[k];
            if a > 0.0 && a < self.c {
                free_sum += f;
                free_count += 1;
            }
            let positive = self.y[k] > 0.0;
            if (positive && a < self.c) || (!positive && a > 0.0) {
                lower = lower.max(f);
            }
            if (!positive && a < self.c) || (positive && a > 0.0) {
                upper = upper.min(f);
            }
        }
        if free_count > 0 {
            free_sum / free_count as f64
        } else if lower.is_finite() && upper.is_finite() {
            0.5 * (lower + upper)
        } else if lower.is_finite() {
            lower
        } else if upper.is_finite() {
            upper
        } else {
            0.0
        }
    }
}

/// Solves the dual for labels `y ∈ {−1, +1}`.
pub fn solve(gram: &GramMatrix, y: &[f64], params: &SmoParams) -> DualSolution {
    let n = y.len();
    assert_eq!(gram.len(), n, "gram matrix size must match label count");
    let mut s = Solver { gram, y, c: params.c, alpha: vec![0.0; n], u: vec![0.0; n] };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let tol = params.tolerance;

    let mut bias = 0.0;
    let mut passes = 0;
    let mut random_sweeps = 0;
    let sweep_limit = params.max_passes.saturating_mul(100).max(1000);
    while passes < params.max_passes && n >= 2 && random_sweeps < sweep_limit {
        random_sweeps += 1;
        let mut changed = 0;
        for i in 0..n {
            let ei = s.u[i] + bias - y[i];
            let r = y[i] * ei;
            let a = s.alpha[i];
            if !((r < -tol && a < params.c) || (r > tol && a > 0.0)) {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let ej = s.u[j] + bias - y[j];
            let Some((di, dj)) = s.take_step(i, j) else { continue };
            if dj.abs() < MIN_STEP {
                continue;
            }
            let b1 = bias - ei - y[i] * di * gram.get(i, i) - y[j] * dj * gram.get(i, j);
            let b2 = bias - ej - y[i] * di * gram.get(i, j) - y[j] * dj * gram.get(j, j);
            let (ai, aj) = (s.alpha[i], s.alpha[j]);
            bias = if ai > 0.0 && ai < params.c {
                b1
            } else if aj > 0.0 && aj < params.c {
                b2
            } else {
                0.5 * (b1 + b2)
            };
            changed += 1;
        }
        if changed == 0 {
            passes += 1;
        } else {
            passes = 0;
        }
    }

    let mut steps = 0;
    let mut gap = 0.0;
    while steps < params.max_iterations {
        match s.max_violating_pair() {
            Some((i, j, g)) if g > tol => {
                gap = g;
                if s.take_step(i, j).is_none() {
                    break;
                }
                steps += 1;
            }
            Some((_, _, g)) => {
                gap = g.max(0.0);
                break;
            }
            None => {
                gap = 0.0;
                break;
            }
        }
    }
    if steps == params.max_iterations {
        gap = s.max_violating_pair().map_or(0.0, |(_, _, g)| g.max(0.0));
    }

    let bias = s.final_bias();
    DualSolution { alphas: s.alpha, bias, kkt_gap: gap, random_sweeps, certification_steps: steps }
}

/// `Σ αᵢ − ½ Σᵢⱼ αᵢ αⱼ yᵢ yⱼ Kᵢⱼ`.
pub fn dual_objective(gram: &GramMatrix, y: &[f64], alphas: &[f64]) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alphas[i] * alphas[j] * y[i] * y[j] * gram.get(i, j);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_gram(x: &[[f64; 2]]) -> GramMatrix {
        GramMatrix::build(x.len(), |i, j| x[i][0] * x[j][0] + x[i][1] * x[j][1])
    }

    fn params(c: f64) -> SmoParams {
        SmoParams { c, tolerance: 1e-3, max_passes: 10, seed: 0, max_iterations: 100_000 }
    }

    #[test]
    fn two_point_problem_has_analytic_multipliers() {
        let x = [[0.0, 0.0], [2.0, 2.0]];
        let y = [-1.0, 1.0];
        let sol = solve(&linear_gram(&x), &y, &params(1e3));
        assert!((sol.alphas[0] - 0.25).abs() < 1e-9);
        assert!((sol.alphas[1] - 0.25).abs() < 1e-9);
        assert!((sol.bias + 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_constraint_is_preserved() {
        let x = [[0.0, 0.1], [0.3, 0.9], [0.5, 0.2], [0.9, 0.8], [0.2, 0.6], [0.7, 0.4]];
        let y = [-1.0, 1.0, -1.0, 1.0, 1.0, -1.0];
        let sol = solve(&linear_gram(&x), &y, &params(1.0));
        let balance: f64 = sol.alphas.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-9);
        assert!(sol.alphas.iter().all(|&a| (0.0..=1.0).contains(&a)));
        assert!(sol.kkt_gap <= 1e-3);
    }

    #[test]
    fn duplicate_points_with_opposite_labels_terminate() {
        let x = [[0.5, 0.5], [0.5, 0.5], [0.0, 0.0], [1.0, 1.0]];
        let y = [-1.0, 1.0, -1.0, 1.0];
        let sol = solve(&linear_gram(&x), &y, &params(1.0));
        assert!(sol.alphas.iter().all(|a| a.is_finite()));
        assert!(sol.kkt_gap <= 1e-3);
    }
}
