//! Newton–Raphson on the distortion gradient with the analytic tridiagonal
//! Hessian.

use thiserror::Error;

use super::mixture::GaussianMixture;
use super::FixedPointReport;
use crate::matrix::Matrix;

/// Hessians with a larger eigenvalue-magnitude ratio are rejected.
pub const MAX_HESSIAN_CONDITION: f64 = 1e12;

const MAX_HALVINGS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonFailure {
    #[error("Hessian ill-conditioned at iteration {iteration} (condition {condition:.3e})")]
    IllConditioned { iteration: usize, condition: f64 },
    #[error("no ordered step found after {MAX_HALVINGS} halvings at iteration {iteration}")]
    OrderingLost { iteration: usize },
    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("no convergence within {iterations} iterations")]
    NotConverged { iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 200,
        }
    }
}

/// One undamped step `Γ − (∇²D)^{-1} ∇D` together with the Hessian's
/// condition number.
pub fn newton_step(mix: &GaussianMixture, grid: &[f64]) -> (Option<Vec<f64>>, f64) {
    let grad = mix.gradient(grid);
    let (diag, off) = mix.hessian(grid);
    let condition = tridiagonal_condition(&diag, &off);
    let n = grid.len();
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = diag[i];
        if i + 1 < n {
            h[(i, i + 1)] = off[i];
            h[(i + 1, i)] = off[i];
        }
    }
    let rhs = Matrix::from_row_major(n, 1, grad);
    let step = h
        .solve(&rhs)
        .map(|d| grid.iter().zip(d.as_slice()).map(|(g, s)| g - s).collect());
    (step, condition)
}

/// Runs Newton iterations from `grid0`, halving steps that break ordering.
pub fn newton_solve(
    mix: &GaussianMixture,
    grid0: &[f64],
    opts: &NewtonOptions,
) -> Result<FixedPointReport, NewtonFailure> {
    let mut x = grid0.to_vec();
    let mut residuals = Vec::new();
    for iteration in 1..=opts.max_iter {
        let (full, condition) = newton_step(mix, &x);
        if !(condition <= MAX_HESSIAN_CONDITION) {
            return Err(NewtonFailure::IllConditioned { iteration, condition });
        }
        let full = full.ok_or(NewtonFailure::IllConditioned {
            iteration,
            condition: f64::INFINITY,
        })?;
        if full.iter().any(|v| !v.is_finite()) {
            return Err(NewtonFailure::NonFinite { iteration });
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = x.iter().zip(&full).map(|(a, b)| a + lambda * (b - a)).collect();
            if cand.windows(2).all(|w| w[1] > w[0]) {
                accepted = Some(cand);
                break;
            }
            lambda *= 0.5;
        }
        let next = accepted.ok_or(NewtonFailure::OrderingLost { iteration })?;
        let step: f64 = next.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        residuals.push(step);
        x = next;
        if step <= opts.tol {
            return Ok(FixedPointReport {
                solution: x,
                iterations: iteration,
                residuals,
                converged: true,
                safeguard_resets: 0,
                last_weights: vec![1.0],
            });
        }
    }
    Err(NewtonFailure::NotConverged {
        iterations: opts.max_iter,
    })
}

/// Ratio of largest to smallest eigenvalue magnitude of a symmetric
/// tridiagonal matrix, with eigenvalues located by Sturm-sequence bisection.
pub fn tridiagonal_condition(diag: &[f64], off: &[f64]) -> f64 {
    let eig = tridiagonal_eigenvalues(diag, off);
    let max = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// All eigenvalues in ascending order.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return Vec::new();
    }
    // Gershgorin interval.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo, hi);
            loop {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break mid;
                }
                if count_below(diag, off, mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
        })
        .collect()
}

/// Number of eigenvalues strictly below `x` (Sturm count via LDLᵀ pivots).
fn count_below(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let e2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
        q = diag[i] - x - if i > 0 { e2 / q } else { 0.0 };
        if q == 0.0 {
            q = -f64::MIN_POSITIVE;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}
