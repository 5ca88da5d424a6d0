//! Independent oracles shared by the integration and acceptance suites.
//! Nothing here calls the estimators under test.

#![allow(dead_code)]

use backmc_core::chain::ChainApproximation;
use backmc_core::matrix::Matrix;
use backmc_core::pricing::{BoundPayoff, BridgeMode};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Chain with the given slice sizes (slice 0 must be 1), strictly positive
/// random transition rows, increasing grids around 1 and unit-scale step
/// variances.
pub fn random_chain(rng: &mut StdRng, sizes: &[usize], dt: f64) -> ChainApproximation {
    assert_eq!(sizes[0], 1);
    let times: Vec<f64> = (0..sizes.len()).map(|k| k as f64 * dt).collect();
    let grids: Vec<Vec<f64>> = sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            if k == 0 {
                return vec![1.0];
            }
            let mut x = 1.0 - 0.05 * n as f64 / 2.0 + rng.random_range(-0.01..0.01);
            (0..n)
                .map(|_| {
                    x += rng.random_range(0.01..0.06);
                    x
                })
                .collect()
        })
        .collect();
    let forward = sizes
        .windows(2)
        .map(|w| {
            let rows: Vec<Vec<f64>> = (0..w[0])
                .map(|_| {
                    let raw: Vec<f64> = (0..w[1]).map(|_| rng.random_range(0.05..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / s).collect()
                })
                .collect();
            Matrix::from_rows(&rows)
        })
        .collect();
    let step_variance = sizes[..sizes.len() - 1]
        .iter()
        .map(|&n| (0..n).map(|_| rng.random_range(1e-4..4e-3)).collect())
        .collect();
    ChainApproximation::new(times, grids, forward, step_variance)
        .unwrap()
        .with_backward()
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn payoff_of(chain: &ChainApproximation, bound: &BoundPayoff, idx: &[usize]) -> f64 {
    let path: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| chain.grid(k)[i]).collect();
    let variance = |k: usize| chain.step_variance(k)[idx[k]];
    // The expectation bridge draws nothing; the generator is never touched.
    bound.evaluate(&path, variance, BridgeMode::Expectation, &mut seeded(0))
}

/// `Σ_paths Π forward(k)[i_k, i_{k+1}] · F(path)` over every index path.
pub fn forward_enumeration(chain: &ChainApproximation, bound: &BoundPayoff) -> f64 {
    let n = chain.steps();
    let mut idx = vec![0usize; n + 1];
    let mut total = Neumaier::default();
    fn walk(
        chain: &ChainApproximation,
        bound: &BoundPayoff,
        k: usize,
        weight: f64,
        idx: &mut Vec<usize>,
        total: &mut Neumaier,
    ) {
        if k == chain.steps() {
            total.add(weight * payoff_of(chain, bound, idx));
            return;
        }
        let m = chain.forward(k);
        for j in 0..m.cols() {
            idx[k + 1] = j;
            walk(chain, bound, k + 1, weight * m[(idx[k], j)], idx, total);
        }
    }
    walk(chain, bound, 0, 1.0, &mut idx, &mut total);
    total.sum()
}

/// `Σ_j P_j^n Σ_paths→j Π backward(k)[i_{k+1}, i_k] · F(path)`: the backward
/// decomposition, enumerated exactly. Also returns each terminal's
/// conditional expectation.
pub fn backward_enumeration(chain: &ChainApproximation, bound: &BoundPayoff) -> (f64, Vec<f64>) {
    let n = chain.steps();
    let mut conditional = Vec::new();
    let mut total = Neumaier::default();
    fn walk(
        chain: &ChainApproximation,
        bound: &BoundPayoff,
        k: usize,
        weight: f64,
        idx: &mut Vec<usize>,
        acc: &mut Neumaier,
    ) {
        if k == 0 {
            acc.add(weight * payoff_of(chain, bound, idx));
            return;
        }
        let b = chain.backward(k - 1).expect("chain not reversed");
        for i in 0..b.cols() {
            idx[k - 1] = i;
            walk(chain, bound, k - 1, weight * b[(idx[k], i)], idx, acc);
        }
    }
    for j in 0..chain.grid(n).len() {
        let mut idx = vec![0usize; n + 1];
        idx[n] = j;
        let mut acc = Neumaier::default();
        if chain.is_reachable(n, j) {
            walk(chain, bound, n, 1.0, &mut idx, &mut acc);
        }
        conditional.push(acc.sum());
        total.add(chain.marginal(n)[j] * acc.sum());
    }
    (total.sum(), conditional)
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `Σ_{k<terms} A^k / k!` with every entry summed by [`Neumaier`].
pub fn taylor_expm(a: &Matrix, terms: usize) -> Matrix {
    let n = a.rows();
    let mut acc = vec![Neumaier::default(); n * n];
    let mut term = Matrix::identity(n);
    for k in 0..terms {
        if k > 0 {
            term = term.matmul(a).scale(1.0 / k as f64);
        }
        for (s, &t) in acc.iter_mut().zip(term.as_slice()) {
            s.add(t);
        }
    }
    Matrix::from_row_major(n, n, acc.iter().map(Neumaier::sum).collect())
}

/// Random tridiagonal generator (non-negative off-diagonals, zero row sums)
/// scaled so that `‖L‖_∞ = norm`.
pub fn random_tridiagonal_generator(rng: &mut StdRng, n: usize, norm: f64) -> Matrix {
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        let down = if i > 0 { rng.random_range(0.0..1.0) } else { 0.0 };
        let up = if i + 1 < n { rng.random_range(0.0..1.0) } else { 0.0 };
        if i > 0 {
            l[(i, i - 1)] = down;
        }
        if i + 1 < n {
            l[(i, i + 1)] = up;
        }
        l[(i, i)] = -(down + up);
    }
    let current = l.norm_inf();
    if current == 0.0 {
        l
    } else {
        l.scale(norm / current)
    }
}

/// Standard normal CDF through the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn black_scholes_call(spot: f64, strike: f64, rate: f64, vol: f64, maturity: f64) -> f64 {
    let sd = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * maturity) / sd;
    let d2 = d1 - sd;
    spot * normal_cdf(d1) - strike * (-rate * maturity).exp() * normal_cdf(d2)
}
