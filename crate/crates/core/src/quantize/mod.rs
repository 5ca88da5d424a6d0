//! Recursive marginal quantization of the Euler chain: stationary grids slice
//! by slice, plus their marginal and transition probabilities.

mod anderson;
mod mixture;
mod newton;

pub use anderson::{anderson_accelerate, AndersonOptions, FixedPointReport};
pub use mixture::{cell_probabilities, half_cells, CellMoments, GaussianMixture, EMPTY_CELL_MASS};
pub use newton::{
    newton_solve, newton_step, tridiagonal_condition, tridiagonal_eigenvalues, NewtonFailure, NewtonOptions,
    MAX_HESSIAN_CONDITION,
};

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use thiserror::Error;

use crate::chain::{ChainApproximation, ChainError};
use crate::matrix::Matrix;
use crate::model::{ModelError, ModelSpec, TimeGrid};
use crate::normal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("invalid quantization settings: {0}")]
    InvalidConfig(String),
    #[error("solver failed at slice {slice}: {source}")]
    Solver { slice: usize, source: NewtonFailure },
    #[error("grid at slice {slice} collapsed to repeated points")]
    Degenerate { slice: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Lloyd I with Anderson acceleration of the given depth (0 = plain).
    Lloyd {
        depth: usize,
    },
    Newton,
}

/// Starting grid for slice `k+1` built from the stationary grid `Γ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// `Γ_k` itself.
    PrevGrid,
    /// `m_k(γ_i) + v_k(γ_i) z_i` with `z` the N-point standard normal
    /// quantizer.
    EulerOperator,
    /// Average of `PrevGrid` and `EulerOperator`.
    MidPoint,
    /// `m_k(γ_i)`.
    ExpectedValue,
}

impl InitScheme {
    pub const ALL: [InitScheme; 4] = [
        InitScheme::PrevGrid,
        InitScheme::EulerOperator,
        InitScheme::MidPoint,
        InitScheme::ExpectedValue,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmqaConfig {
    pub n_points: usize,
    pub solver: Solver,
    pub init: InitScheme,
    pub tol: f64,
    pub max_iter: usize,
    /// Multiplier applied to the reference normal quantizer wherever an
    /// initialization uses it, slice 1 included (1 = undistorted).
    pub reference_scale: f64,
}

impl Default for RmqaConfig {
    fn default() -> Self {
        Self {
            n_points: 100,
            solver: Solver::Lloyd { depth: 5 },
            init: InitScheme::EulerOperator,
            tol: 1e-5,
            max_iter: 1000,
            reference_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceReport {
    pub slice: usize,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
    pub distortion: f64,
    pub safeguard_resets: usize,
}

#[derive(Debug, Clone)]
pub struct RmqaOutput {
    pub chain: ChainApproximation,
    pub slices: Vec<SliceReport>,
}

/// Stationary `n`-point quantizer of N(0, 1), cached per `n`.
pub fn standard_normal_quantizer(n: usize) -> Vec<f64> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Vec<f64>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&n) {
        return v.clone();
    }
    let grid = compute_standard_normal_quantizer(n);
    cache.lock().unwrap().insert(n, grid.clone());
    grid
}

fn compute_standard_normal_quantizer(n: usize) -> Vec<f64> {
    assert!(n >= 1);
    let mix = GaussianMixture::standard_normal();
    let seeds: Vec<f64> = (1..=n)
        .map(|i| normal::inverse_cdf((i as f64 - 0.5) / n as f64))
        .collect();
    let opts = AndersonOptions {
        depth: 5,
        tol: 1e-13,
        max_iter: 100_000,
    };
    let mut grid = anderson_accelerate(|g| mix.lloyd_map(g), &seeds, is_increasing, &opts).solution;
    // Symmetrize away roundoff asymmetry.
    for i in 0..n / 2 {
        let a = 0.5 * (grid[n - 1 - i] - grid[i]);
        grid[i] = -a;
        grid[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        grid[n / 2] = 0.0;
    }
    grid
}

pub fn is_increasing(g: &[f64]) -> bool {
    g.windows(2).all(|w| w[1] > w[0])
}

/// Solves for a stationary grid of `mix` from `init` with the chosen solver.
pub fn solve_stationary(
    mix: &GaussianMixture,
    init: &[f64],
    solver: Solver,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointReport, NewtonFailure> {
    match solver {
        Solver::Lloyd { depth } => Ok(anderson_accelerate(
            |g| mix.lloyd_map(g),
            init,
            is_increasing,
            &AndersonOptions { depth, tol, max_iter },
        )),
        Solver::Newton => newton_solve(mix, init, &NewtonOptions { tol, max_iter }),
    }
}

/// Initial grid for the next slice according to `scheme`.
pub fn initial_grid(
    model: &ModelSpec,
    t: f64,
    dt: f64,
    prev: &[f64],
    scheme: InitScheme,
    reference: &[f64],
) -> Result<Vec<f64>, ModelError> {
    prev.iter()
        .zip(reference)
        .map(|(&g, &z)| {
            let law = model.conditional_law(t, dt, g)?;
            let euler = law.mean + law.std_dev * z;
            Ok(match scheme {
                InitScheme::PrevGrid => g,
                InitScheme::EulerOperator => euler,
                InitScheme::MidPoint => 0.5 * g + 0.5 * euler,
                InitScheme::ExpectedValue => law.mean,
            })
        })
        .collect()
}

/// Sorts `grid`; if points coincide, replaces it with an evenly spaced
/// lattice centred on the mixture mean so every point is distinct.
fn repair_grid(mut grid: Vec<f64>, mix: &GaussianMixture) -> Vec<f64> {
    grid.sort_by(|a, b| a.total_cmp(b));
    if is_increasing(&grid) && grid.iter().all(|x| x.is_finite()) {
        return grid;
    }
    let n = grid.len();
    let c = mix.mean();
    let h = (4.0 * mix.std_dev() / n as f64).max(1e-3 * c.abs().max(1.0));
    (0..n).map(|i| c + h * (i as f64 - (n / 2) as f64)).collect()
}

/// Builds the quantized chain on the dates of `grid`.
pub fn rmqa_build(model: &ModelSpec, grid: &TimeGrid, cfg: &RmqaConfig) -> Result<RmqaOutput, QuantizeError> {
    if cfg.n_points < 2 {
        return Err(QuantizeError::InvalidConfig("N must be at least 2".into()));
    }
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(QuantizeError::InvalidConfig("tol and max_iter must be positive".into()));
    }
    if !(cfg.reference_scale.is_finite() && cfg.reference_scale > 0.0) {
        return Err(QuantizeError::InvalidConfig("reference scale must be positive".into()));
    }
    let n = cfg.n_points;
    let reference: Vec<f64> = standard_normal_quantizer(n)
        .into_iter()
        .map(|z| z * cfg.reference_scale)
        .collect();
    let times = grid.times().to_vec();
    let mut grids = vec![vec![model.x0()]];
    let mut probs = vec![1.0];
    let mut forward = Vec::with_capacity(grid.steps());
    let mut step_variance = Vec::with_capacity(grid.steps());
    let mut slices = Vec::with_capacity(grid.steps());

    for k in 0..grid.steps() {
        let (t, dt) = (times[k], grid.dt(k));
        let prev = grids.last().unwrap();
        let laws = prev
            .iter()
            .map(|&x| model.conditional_law(t, dt, x))
            .collect::<Result<Vec<_>, _>>()?;
        let mix = GaussianMixture::new(laws.iter().zip(&probs).map(|(l, &p)| (p, l.mean, l.std_dev)));
        let init = if k == 0 {
            let law = laws[0];
            reference.iter().map(|z| law.mean + law.std_dev * z).collect()
        } else {
            initial_grid(model, t, dt, prev, cfg.init, &reference)?
        };
        let init = repair_grid(init, &mix);
        let report = solve_stationary(&mix, &init, cfg.solver, cfg.tol, cfg.max_iter)
            .map_err(|source| QuantizeError::Solver { slice: k + 1, source })?;
        let next = report.solution;
        if !is_increasing(&next) {
            return Err(QuantizeError::Degenerate { slice: k + 1 });
        }

        let mut pi = Matrix::zeros(prev.len(), n);
        for (i, law) in laws.iter().enumerate() {
            pi.row_mut(i)
                .copy_from_slice(&cell_probabilities(law.mean, law.std_dev, &next));
        }
        probs = pi.left_mul_vec(&probs);
        slices.push(SliceReport {
            slice: k + 1,
            iterations: report.iterations,
            converged: report.converged,
            residuals: report.residuals,
            distortion: mix.distortion(&next),
            safeguard_resets: report.safeguard_resets,
        });
        step_variance.push(laws.iter().map(|l| l.std_dev * l.std_dev).collect());
        forward.push(pi);
        grids.push(next);
    }

    let chain = ChainApproximation::new(times, grids, forward, step_variance)?;
    Ok(RmqaOutput { chain, slices })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_quantizer_is_symmetric_and_stationary() {
        let z = standard_normal_quantizer(10);
        assert_eq!(z.len(), 10);
        assert!(is_increasing(&z));
        let mix = GaussianMixture::standard_normal();
        let g = mix.gradient(&z);
        assert!(g.iter().all(|x| x.abs() < 1e-12), "{g:?}");
        let two = standard_normal_quantizer(2);
        assert!((two[1] - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_volatility_chain_tracks_deterministic_path() {
        let model = ModelSpec::cev(1.0, 0.05, 0.0, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let cfg = RmqaConfig {
            n_points: 5,
            ..RmqaConfig::default()
        };
        let out = rmqa_build(&model, &grid, &cfg).unwrap();
        let mut x = 1.0;
        for k in 1..=4 {
            x *= 1.0 + 0.05 * 0.25;
            let p = out.chain.marginal(k);
            let j = p.iter().position(|&v| v == 1.0).expect("unit marginal");
            assert!(p.iter().filter(|&&v| v != 0.0).count() == 1);
            assert!((out.chain.grid(k)[j] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_are_normalized() {
        let model = ModelSpec::cev(1.36, 0.0032, 0.1, 0.5).unwrap();
        let grid = TimeGrid::uniform(0.5, 5).unwrap();
        let cfg = RmqaConfig {
            n_points: 20,
            ..RmqaConfig::default()
        };
        let out = rmqa_build(&model, &grid, &cfg).unwrap();
        for k in 0..=5 {
            assert!((out.chain.marginal(k).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        for k in 0..5 {
            for s in out.chain.forward(k).row_sums() {
                assert!((s - 1.0).abs() < 1e-10);
            }
        }
        assert!(out.slices.iter().all(|s| s.converged));
    }

    #[test]
    fn rejects_bad_settings() {
        let model = ModelSpec::cev(1.0, 0.0, 0.1, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let cfg = RmqaConfig {
            n_points: 1,
            ..RmqaConfig::default()
        };
        assert!(matches!(
            rmqa_build(&model, &grid, &cfg),
            Err(QuantizeError::InvalidConfig(_))
        ));
    }
}
