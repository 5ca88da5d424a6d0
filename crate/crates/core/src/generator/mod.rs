//! Finite-difference Markov generator on a uniform price grid and transition
//! matrices between arbitrary dates by matrix exponentiation.

mod expm;

pub use expm::{expm, squarings, THETA_13};

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{ChainApproximation, ChainError};
use crate::matrix::Matrix;
use crate::model::{ModelError, ModelSpec};

/// Largest tolerated row-sum drift of an exponential before renormalization.
pub const ROW_DRIFT_TOL: f64 = 1e-9;

/// Width of the default grid in units of `σ_ref √T` on each side of `x0` (log
/// scale).
pub const DEFAULT_GRID_WIDTH: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid dates: {0}")]
    InvalidDates(String),
    #[error("drift dominates diffusion at node {node} (x = {x}): lower {lower}, upper {upper}")]
    NotAGenerator {
        node: usize,
        x: f64,
        lower: f64,
        upper: f64,
    },
    #[error("matrix exponential failed: {0}")]
    Exponential(String),
}

/// Tridiagonal generator with reflecting boundary rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalGenerator {
    grid: Vec<f64>,
    spacing: f64,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalGenerator {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Sub-diagonal coefficients; `lower[0]` is 0.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Super-diagonal coefficients; the last entry is 0.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn to_matrix(&self) -> Matrix {
        let n = self.grid.len();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i > 0 {
                m[(i, i - 1)] = self.lower[i];
            }
            if i + 1 < n {
                m[(i, i + 1)] = self.upper[i];
            }
        }
        m
    }
}

/// Checks that `grid` is uniform and returns its spacing.
fn uniform_spacing(grid: &[f64]) -> Result<f64, GeneratorError> {
    if grid.len() < 3 {
        return Err(GeneratorError::InvalidGrid("need at least 3 points".into()));
    }
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(h > 0.0 && h.is_finite()) {
        return Err(GeneratorError::InvalidGrid("grid must be increasing".into()));
    }
    for (i, w) in grid.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(grid[grid.len() - 1].abs()) {
            return Err(GeneratorError::InvalidGrid(format!("spacing not uniform at node {i}")));
        }
    }
    Ok(h)
}

/// Central-difference generator of `model` at time `t` (coefficients frozen
/// within a homogeneous segment).
pub fn build_generator(model: &ModelSpec, t: f64, grid: &[f64]) -> Result<TridiagonalGenerator, GeneratorError> {
    let h = uniform_spacing(grid)?;
    let n = grid.len();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for (i, &x) in grid.iter().enumerate() {
        let b = model.drift(t, x);
        let s = model.diffusion(t, x)?;
        let diff = s * s / (2.0 * h * h);
        let l = -b / (2.0 * h) + diff;
        let u = b / (2.0 * h) + diff;
        let (l, u) = if i == 0 {
            (0.0, u)
        } else if i == n - 1 {
            (l, 0.0)
        } else {
            (l, u)
        };
        if l < 0.0 || u < 0.0 {
            return Err(GeneratorError::NotAGenerator {
                node: i,
                x,
                lower: l,
                upper: u,
            });
        }
        lower[i] = l;
        upper[i] = u;
        diag[i] = if i == 0 {
            -u
        } else if i == n - 1 {
            -l
        } else {
            -2.0 * diff
        };
    }
    Ok(TridiagonalGenerator {
        grid: grid.to_vec(),
        spacing: h,
        lower,
        diag,
        upper,
    })
}

/// `e^{τ L}`, clamped to non-negative entries with rows renormalized.
pub fn expm_transition(gen: &TridiagonalGenerator, tau: f64) -> Result<Matrix, GeneratorError> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(GeneratorError::InvalidDates(format!(
            "duration must be non-negative, got {tau}"
        )));
    }
    let n = gen.grid.len();
    if tau == 0.0 {
        return Ok(Matrix::identity(n));
    }
    let mut e = expm(&gen.to_matrix().scale(tau))
        .ok_or_else(|| GeneratorError::Exponential("singular Padé denominator".into()))?;
    for i in 0..n {
        let row = e.row_mut(i);
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_DRIFT_TOL || !s.is_finite() {
            return Err(GeneratorError::Exponential(format!("row {i} sums to {s}")));
        }
        row.iter_mut().for_each(|x| *x = x.max(0.0));
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    Ok(e)
}

/// Uniform grid over `[x0 e^{−q}, x0 e^{q}]`, `q = 5 σ_ref √T`, shifted so
/// that `x0` is a node.
pub fn default_grid(model: &ModelSpec, maturity: f64, n_points: usize) -> Result<Vec<f64>, GeneratorError> {
    if n_points < 3 {
        return Err(GeneratorError::InvalidGrid("need at least 3 points".into()));
    }
    let x0 = model.x0();
    let mut sigma_ref = model.reference_vol();
    for t in model.segment_breaks(maturity) {
        sigma_ref = sigma_ref.max(model.diffusion(t, x0)? / x0);
    }
    if !(sigma_ref > 0.0) {
        return Err(GeneratorError::InvalidGrid("reference volatility is zero".into()));
    }
    let q = DEFAULT_GRID_WIDTH * sigma_ref * maturity.sqrt();
    let (lo, hi) = (x0 * (-q).exp(), x0 * q.exp());
    let h = (hi - lo) / (n_points - 1) as f64;
    let mut i0 = ((x0 - lo) / h).round() as usize;
    while i0 > 0 && x0 - i0 as f64 * h <= 0.0 {
        i0 -= 1;
    }
    let start = x0 - i0 as f64 * h;
    Ok((0..n_points)
        .map(|i| if i == i0 { x0 } else { start + i as f64 * h })
        .collect())
}

/// Nearest grid node to `x`.
pub fn nearest_node(grid: &[f64], x: f64) -> usize {
    let j = grid.partition_point(|&g| g < x);
    if j == 0 {
        0
    } else if j == grid.len() || (x - grid[j - 1]) <= (grid[j] - x) {
        j - 1
    } else {
        j
    }
}

/// Transition matrix over `[from, to]`, composed from one exponential per
/// homogeneous segment crossed.
fn date_matrix(
    model: &ModelSpec,
    grid: &[f64],
    breaks: &[f64],
    from: f64,
    to: f64,
    cache: &HashMap<(usize, u64), Matrix>,
) -> Result<Matrix, GeneratorError> {
    let mut result: Option<Matrix> = None;
    for (seg, a, b) in pieces(breaks, from, to) {
        let m = match cache.get(&(seg, (b - a).to_bits())) {
            Some(m) => m.clone(),
            None => expm_transition(&build_generator(model, a, grid)?, b - a)?,
        };
        result = Some(match result {
            None => m,
            Some(r) => r.matmul(&m),
        });
    }
    Ok(result.unwrap_or_else(|| Matrix::identity(grid.len())))
}

/// Splits `[from, to]` at segment breaks into `(segment index, start, end)`.
fn pieces(breaks: &[f64], from: f64, to: f64) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    let mut a = from;
    let mut seg = breaks.partition_point(|&b| b <= from);
    for &b in &breaks[seg..] {
        if b >= to {
            break;
        }
        out.push((seg, a, b));
        a = b;
        seg += 1;
    }
    out.push((seg, a, to));
    out
}

/// Builds the chain on observation dates `dates` (starting at 0) over the
/// uniform price `grid`. Slice 0 is `x0`, whose transitions are those of the
/// nearest grid node.
pub fn ltsa_build(model: &ModelSpec, dates: &[f64], grid: &[f64]) -> Result<ChainApproximation, GeneratorError> {
    if dates.len() < 2 || dates[0] != 0.0 || dates.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GeneratorError::InvalidDates(
            "dates must start at 0 and be strictly increasing".into(),
        ));
    }
    uniform_spacing(grid)?;
    let horizon = dates[dates.len() - 1];
    let breaks = model.segment_breaks(horizon);

    // Exponentials of repeated (segment, duration) pieces are computed once.
    let mut wanted: Vec<(usize, f64, f64)> = Vec::new();
    for w in dates.windows(2) {
        for p in pieces(&breaks, w[0], w[1]) {
            if !wanted
                .iter()
                .any(|q| q.0 == p.0 && (q.2 - q.1).to_bits() == (p.2 - p.1).to_bits())
            {
                wanted.push(p);
            }
        }
    }
    let computed: Vec<((usize, u64), Matrix)> = wanted
        .par_iter()
        .map(|&(seg, a, b)| {
            let gen = build_generator(model, a, grid)?;
            Ok(((seg, (b - a).to_bits()), expm_transition(&gen, b - a)?))
        })
        .collect::<Result<_, GeneratorError>>()?;
    let cache: HashMap<_, _> = computed.into_iter().collect();

    let mats: Vec<Matrix> = dates
        .windows(2)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|w| date_matrix(model, grid, &breaks, w[0], w[1], &cache))
        .collect::<Result<_, _>>()?;

    let i0 = nearest_node(grid, model.x0());
    let n = grid.len();
    let mut forward = Vec::with_capacity(mats.len());
    let mut step_variance = Vec::with_capacity(mats.len());
    for (k, m) in mats.into_iter().enumerate() {
        let dt = dates[k + 1] - dates[k];
        if k == 0 {
            forward.push(Matrix::from_row_major(1, n, m.row(i0).to_vec()));
            let s = model.diffusion(0.0, model.x0())?;
            step_variance.push(vec![s * s * dt]);
        } else {
            let var = grid
                .iter()
                .map(|&x| model.diffusion(dates[k], x).map(|s| s * s * dt))
                .collect::<Result<Vec<_>, _>>()?;
            forward.push(m);
            step_variance.push(var);
        }
    }
    let mut grids = vec![vec![model.x0()]];
    grids.extend(std::iter::repeat_n(grid.to_vec(), dates.len() - 1));
    Ok(ChainApproximation::new(dates.to_vec(), grids, forward, step_variance)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Call,
    Put,
}

/// `discount · Σ_i P_i^m payoff(γ_i^m)` at slice `m`.
pub fn vanilla_price(chain: &ChainApproximation, strike: f64, slice: usize, discount: f64, kind: OptionKind) -> f64 {
    let payoff = |x: f64| match kind {
        OptionKind::Call => (x - strike).max(0.0),
        OptionKind::Put => (strike - x).max(0.0),
    };
    discount
        * chain
            .grid(slice)
            .iter()
            .zip(chain.marginal(slice))
            .map(|(&x, &p)| p * payoff(x))
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LvSegment, MonotoneSpline};

    fn flat_lv(eta: f64) -> ModelSpec {
        ModelSpec::local_vol(
            1.0,
            0.0,
            vec![LvSegment {
                end_time: 1.0,
                eta: MonotoneSpline::constant(eta).unwrap(),
            }],
        )
        .unwrap()
    }

    fn uniform(lo: f64, h: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + i as f64 * h).collect()
    }

    #[test]
    fn driftless_coefficients_are_symmetric() {
        let grid = uniform(0.5, 0.1, 6);
        let g = build_generator(&flat_lv(0.3), 0.0, &grid).unwrap();
        for i in 1..5 {
            let s = 0.3 * grid[i];
            let expect = s * s / (2.0 * 0.01);
            assert!((g.lower()[i] - expect).abs() < 1e-12);
            assert!((g.upper()[i] - expect).abs() < 1e-12);
            assert!((g.diag()[i] + 2.0 * expect).abs() < 1e-12);
        }
        for s in g.to_matrix().row_sums() {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn cev_coefficients_at_spot() {
        let m = ModelSpec::cev(1.36, 0.0032, 0.05, 0.5).unwrap();
        let grid = uniform(1.34, 0.01, 5);
        let g = build_generator(&m, 0.0, &grid).unwrap();
        let (b, s2, h) = (0.0032 * 1.36, 0.0025 * 1.36, 0.01);
        assert!((g.lower()[2] - (-b / (2.0 * h) + s2 / (2.0 * h * h))).abs() < 1e-12);
        assert!((g.diag()[2] + s2 / (h * h)).abs() < 1e-12);
        assert!((g.upper()[2] - (b / (2.0 * h) + s2 / (2.0 * h * h))).abs() < 1e-12);
    }

    #[test]
    fn zero_model_gives_zero_generator() {
        let m = ModelSpec::cev(1.0, 0.0, 0.0, 1.0).unwrap();
        let g = build_generator(&m, 0.0, &uniform(0.5, 0.1, 5)).unwrap();
        assert!(g.to_matrix().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn drift_dominated_grid_is_rejected() {
        let m = ModelSpec::cev(1.0, 5.0, 0.01, 1.0).unwrap();
        assert!(matches!(
            build_generator(&m, 0.0, &uniform(0.5, 0.1, 5)),
            Err(GeneratorError::NotAGenerator { .. })
        ));
    }

    #[test]
    fn non_uniform_grid_is_rejected() {
        assert!(build_generator(&flat_lv(0.1), 0.0, &[1.0, 1.1, 1.3]).is_err());
    }

    #[test]
    fn default_grid_contains_spot() {
        let m = ModelSpec::cev(1.36, 0.0032, 0.2, 0.5).unwrap();
        let g = default_grid(&m, 0.5, 100).unwrap();
        assert_eq!(g.len(), 100);
        assert!(g.contains(&1.36));
        assert!(g[0] > 0.0);
        assert_eq!(nearest_node(&g, 1.36), g.iter().position(|&x| x == 1.36).unwrap());
    }

    #[test]
    fn pieces_split_at_breaks() {
        assert_eq!(
            pieces(&[0.25, 0.5], 0.0, 1.0),
            vec![(0, 0.0, 0.25), (1, 0.25, 0.5), (2, 0.5, 1.0)]
        );
        assert_eq!(pieces(&[0.25], 0.25, 0.4), vec![(1, 0.25, 0.4)]);
        assert_eq!(pieces(&[0.25], 0.0, 0.25), vec![(0, 0.0, 0.25)]);
    }

    #[test]
    fn ltsa_single_segment_vanilla_limits() {
        let m = flat_lv(0.2);
        let grid = default_grid(&m, 0.5, 60).unwrap();
        let chain = ltsa_build(&m, &[0.0, 0.5], &grid).unwrap();
        let top = grid[grid.len() - 1];
        assert_eq!(vanilla_price(&chain, top + 1.0, 1, 1.0, OptionKind::Call), 0.0);
        let fwd = vanilla_price(&chain, 0.0, 1, 1.0, OptionKind::Call);
        let mean: f64 = chain.grid(1).iter().zip(chain.marginal(1)).map(|(x, p)| x * p).sum();
        assert!((fwd - mean).abs() < 1e-14);
        // Zero drift: the reflecting chain keeps the mean up to boundary leakage.
        assert!((mean - 1.0).abs() < 1e-6, "{mean}");
    }
}
