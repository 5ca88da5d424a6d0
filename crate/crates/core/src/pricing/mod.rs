//! Monte Carlo estimators: Euler scheme, forward chain and stratified
//! backward chain.

mod payoff;

pub use payoff::{bridge_survival, BoundPayoff, BridgeMode, PayoffKind, PayoffSpec, DATE_TOL};

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{BackwardSampler, ChainApproximation, ChainError, ForwardSampler};
use crate::model::{simulate_euler_blocks, ModelError, ModelSpec, TimeGrid};
use crate::rng::{self, PATH_BLOCK};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),
    #[error("payoff dates do not match the path dates: {0}")]
    DateMismatch(String),
    #[error("plan does not match the chain: {0}")]
    PlanMismatch(String),
    #[error("path budget must be at least 1")]
    EmptyBudget,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Euler,
    Forward,
    Backward,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Euler => "euler",
            Self::Forward => "forward",
            Self::Backward => "backward",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceEstimate {
    pub price: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: usize,
    pub kind: EstimatorKind,
    pub wall_time: Duration,
}

impl PriceEstimate {
    fn new(kind: EstimatorKind, price: f64, std_error: f64, n_paths: usize, started: Instant) -> Self {
        Self {
            price,
            std_error,
            ci_low: price - Z_95 * std_error,
            ci_high: price + Z_95 * std_error,
            n_paths,
            kind,
            wall_time: started.elapsed(),
        }
    }

    /// Whether `value` is within `k` combined standard errors of this
    /// estimate, `other_se` being the error attached to `value`.
    pub fn agrees_with(&self, value: f64, other_se: f64, k: f64) -> bool {
        (self.price - value).abs() <= k * self.std_error.hypot(other_se)
    }
}

/// Streaming mean and sum of squared deviations; merged in a fixed order so
/// block results combine deterministically.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

fn merge_all(parts: &[RunningStats]) -> RunningStats {
    let mut total = RunningStats::default();
    for p in parts {
        total.merge(p);
    }
    total
}

/// Plain Monte Carlo on Euler paths over `grid`. Bridge-corrected barriers
/// use `bridge` (Bernoulli by default in reports).
pub fn price_euler(
    model: &ModelSpec,
    grid: &TimeGrid,
    spec: &PayoffSpec,
    n_mc: usize,
    seed: u64,
    bridge: BridgeMode,
) -> Result<PriceEstimate, PricingError> {
    let started = Instant::now();
    if n_mc == 0 {
        return Err(PricingError::EmptyBudget);
    }
    let bound = spec.bind(grid.times())?;
    let times = grid.times();
    let blocks = simulate_euler_blocks(model, grid, n_mc, seed, RunningStats::default, |acc, path, rng| {
        let variance = |k: usize| {
            let s = model.diffusion(times[k], path[k]).unwrap_or(0.0);
            s * s * grid.dt(k)
        };
        acc.push(bound.evaluate(path, variance, bridge, rng));
    })?;
    let total = merge_all(&blocks);
    Ok(PriceEstimate::new(
        EstimatorKind::Euler,
        total.mean(),
        total.std_error(),
        n_mc,
        started,
    ))
}

/// Plain Monte Carlo on forward chain paths.
pub fn price_forward(
    chain: &ChainApproximation,
    spec: &PayoffSpec,
    n_mc: usize,
    seed: u64,
) -> Result<PriceEstimate, PricingError> {
    let started = Instant::now();
    if n_mc == 0 {
        return Err(PricingError::EmptyBudget);
    }
    let bound = spec.bind(chain.times())?;
    let sampler = ForwardSampler::new(chain)?;
    let len = chain.steps() + 1;
    let blocks: Vec<RunningStats> = (0..n_mc.div_ceil(PATH_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let mut idx = vec![0usize; len];
            let mut path = vec![0.0; len];
            let mut acc = RunningStats::default();
            for _ in 0..PATH_BLOCK.min(n_mc - b * PATH_BLOCK) {
                sampler.sample_path(&mut rng, &mut idx);
                fill_prices(chain, &idx, &mut path);
                let variance = |k: usize| chain.step_variance(k)[idx[k]];
                acc.push(bound.evaluate(&path, variance, BridgeMode::Expectation, &mut rng));
            }
            acc
        })
        .collect();
    let total = merge_all(&blocks);
    Ok(PriceEstimate::new(
        EstimatorKind::Forward,
        total.mean(),
        total.std_error(),
        n_mc,
        started,
    ))
}

fn fill_prices(chain: &ChainApproximation, idx: &[usize], out: &mut [f64]) {
    for (k, (&i, x)) in idx.iter().zip(out.iter_mut()).enumerate() {
        *x = chain.grid(k)[i];
    }
}

/// Terminal strata sampled by the backward estimator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratificationPlan {
    /// Eligible terminal indices, increasing.
    pub strata: Vec<usize>,
    /// Paths per stratum; at least 1.
    pub paths_per_stratum: usize,
    /// Size of the terminal grid the plan was made for.
    pub terminal_size: usize,
}

impl StratificationPlan {
    /// No eligible stratum: the price is 0 with no error.
    pub fn is_degenerate(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn total_paths(&self) -> usize {
        self.strata.len() * self.paths_per_stratum
    }
}

/// Reachable terminal states where the payoff can be non-zero, each given
/// `max(1, ⌊n_mc / N⁺⌋)` paths.
pub fn make_plan(chain: &ChainApproximation, spec: &PayoffSpec, n_mc: usize) -> StratificationPlan {
    let n = chain.steps();
    let grid = chain.grid(n);
    let eligible = |x: f64| match spec.kind() {
        PayoffKind::UpOutBarrierCall { strike, barrier, .. } => *strike <= x && x <= *barrier,
        _ => true,
    };
    let strata: Vec<usize> = (0..grid.len())
        .filter(|&i| chain.is_reachable(n, i) && eligible(grid[i]))
        .collect();
    let paths_per_stratum = if strata.is_empty() {
        0
    } else {
        (n_mc / strata.len()).max(1)
    };
    StratificationPlan {
        strata,
        paths_per_stratum,
        terminal_size: grid.len(),
    }
}

/// Stratified backward estimator: `Σ_i P_i F̂_i` with standard error
/// `√Σ (P_i σ_i)²`, `σ_i` the standard error of stratum `i`'s mean.
pub fn price_backward(
    chain: &ChainApproximation,
    spec: &PayoffSpec,
    plan: &StratificationPlan,
    seed: u64,
) -> Result<PriceEstimate, PricingError> {
    let started = Instant::now();
    let n = chain.steps();
    if plan.terminal_size != chain.grid(n).len() {
        return Err(PricingError::PlanMismatch(format!(
            "plan made for {} terminal states, chain has {}",
            plan.terminal_size,
            chain.grid(n).len()
        )));
    }
    if let Some(&i) = plan.strata.iter().find(|&&i| !chain.is_reachable(n, i)) {
        return Err(PricingError::PlanMismatch(format!("terminal state {i} is unreachable")));
    }
    if plan.is_degenerate() {
        return Ok(PriceEstimate::new(EstimatorKind::Backward, 0.0, 0.0, 0, started));
    }
    let bound = spec.bind(chain.times())?;
    let sampler = BackwardSampler::new(chain)?;
    let per = plan.paths_per_stratum;
    let len = n + 1;
    let strata: Vec<RunningStats> = plan
        .strata
        .par_iter()
        .map(|&terminal| {
            let mut idx = vec![0usize; len];
            let mut path = vec![0.0; len];
            let mut acc = RunningStats::default();
            for b in 0..per.div_ceil(PATH_BLOCK) {
                let mut rng = rng::stream(seed, rng::stratum_stream(terminal, b));
                for _ in 0..PATH_BLOCK.min(per - b * PATH_BLOCK) {
                    sampler.sample_path(terminal, &mut rng, &mut idx)?;
                    fill_prices(chain, &idx, &mut path);
                    let variance = |k: usize| chain.step_variance(k)[idx[k]];
                    acc.push(bound.evaluate(&path, variance, BridgeMode::Expectation, &mut rng));
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, ChainError>>()?;
    let marginal = chain.marginal(n);
    let mut price = 0.0;
    let mut var = 0.0;
    for (&i, s) in plan.strata.iter().zip(&strata) {
        price += marginal[i] * s.mean();
        var += (marginal[i] * s.std_error()).powi(2);
    }
    Ok(PriceEstimate::new(
        EstimatorKind::Backward,
        price,
        var.sqrt(),
        plan.total_paths(),
        started,
    ))
}

/// Estimator the backward error is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Euler,
    Forward,
}

/// One pricing problem for [`error_ratio_report`].
#[derive(Debug, Clone)]
pub struct RatioCase<'a> {
    pub label: String,
    pub model: &'a ModelSpec,
    pub grid: &'a TimeGrid,
    /// Reversed chain on the same dates as `grid` (or the payoff's dates for
    /// a forward baseline).
    pub chain: &'a ChainApproximation,
    pub spec: PayoffSpec,
    pub baseline: Baseline,
}

#[derive(Debug, Clone)]
pub struct RatioRow {
    pub label: String,
    pub seed: u64,
    pub baseline: PriceEstimate,
    pub backward: PriceEstimate,
    /// Baseline standard error over backward standard error.
    pub ratio: f64,
}

/// Runs every case at matched budget `n_mc` for every seed.
pub fn error_ratio_report(cases: &[RatioCase<'_>], n_mc: usize, seeds: &[u64]) -> Result<Vec<RatioRow>, PricingError> {
    let mut rows = Vec::with_capacity(cases.len() * seeds.len());
    for case in cases {
        let plan = make_plan(case.chain, &case.spec, n_mc);
        for &seed in seeds {
            let baseline = match case.baseline {
                Baseline::Euler => price_euler(case.model, case.grid, &case.spec, n_mc, seed, BridgeMode::Bernoulli)?,
                Baseline::Forward => price_forward(case.chain, &case.spec, n_mc, seed)?,
            };
            let backward = price_backward(case.chain, &case.spec, &plan, seed)?;
            rows.push(RatioRow {
                label: case.label.clone(),
                seed,
                ratio: baseline.std_error / backward.std_error,
                baseline,
                backward,
            });
        }
    }
    Ok(rows)
}

/// Median of the finite entries of `xs`; NaN when there are none.
pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
