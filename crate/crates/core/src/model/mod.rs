//! Continuous one-dimensional diffusion models, their Euler–Maruyama
//! discretization and the Gaussian one-step law of the Euler chain.

mod spline;

pub use spline::MonotoneSpline;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{self, StreamRng, PATH_BLOCK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("diffusion evaluated at negative state {0}")]
    NegativeState(f64),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid local volatility knots: {0}")]
    InvalidKnots(String),
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
}

/// One time-homogeneous piece of a local volatility surface, valid up to
/// (excluding) `end_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct LvSegment {
    pub end_time: f64,
    pub eta: MonotoneSpline,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// `dX = r X dt + σ X^α dW`.
    Cev { sigma: f64, alpha: f64 },
    /// `dX = η_j(X) X dW` on the j-th time segment (zero drift).
    LocalVol { segments: Vec<LvSegment> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    x0: f64,
    rate: f64,
    dynamics: Dynamics,
}

/// Mean and standard deviation of one Euler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianStep {
    pub mean: f64,
    pub std_dev: f64,
}

impl ModelSpec {
    pub fn cev(x0: f64, rate: f64, sigma: f64, alpha: f64) -> Result<Self, ModelError> {
        check_spot(x0)?;
        check_finite("rate", rate)?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "CEV sigma must be non-negative, got {sigma}"
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "CEV alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            x0,
            rate,
            dynamics: Dynamics::Cev { sigma, alpha },
        })
    }

    /// Piecewise time-homogeneous local volatility model.
    ///
    /// `rate` only enters payoff discounting; the simulated process is
    /// driftless.
    pub fn local_vol(x0: f64, rate: f64, segments: Vec<LvSegment>) -> Result<Self, ModelError> {
        check_spot(x0)?;
        check_finite("rate", rate)?;
        if segments.is_empty() {
            return Err(ModelError::InvalidParameter(
                "local volatility needs at least one segment".into(),
            ));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.end_time > 0.0) {
                return Err(ModelError::InvalidParameter(format!(
                    "segment {i} end time must be positive"
                )));
            }
            if i > 0 && s.end_time <= segments[i - 1].end_time {
                return Err(ModelError::InvalidParameter(
                    "segment end times must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self {
            x0,
            rate,
            dynamics: Dynamics::LocalVol { segments },
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    /// Same model with the spot replaced.
    pub fn with_x0(&self, x0: f64) -> Result<Self, ModelError> {
        check_spot(x0)?;
        Ok(Self { x0, ..self.clone() })
    }

    pub fn drift(&self, _t: f64, x: f64) -> f64 {
        match self.dynamics {
            Dynamics::Cev { .. } => self.rate * x,
            Dynamics::LocalVol { .. } => 0.0,
        }
    }

    pub fn diffusion(&self, t: f64, x: f64) -> Result<f64, ModelError> {
        if x < 0.0 {
            return Err(ModelError::NegativeState(x));
        }
        Ok(match &self.dynamics {
            Dynamics::Cev { sigma, alpha } => sigma * x.powf(*alpha),
            Dynamics::LocalVol { segments } => segments[segment_index(segments, t)].eta.eval(x) * x,
        })
    }

    /// Law of `X̄_{t+dt}` given `X̄_t = x` under the Euler scheme.
    pub fn conditional_law(&self, t: f64, dt: f64, x: f64) -> Result<GaussianStep, ModelError> {
        if !(dt > 0.0) {
            return Err(ModelError::InvalidParameter(format!("step must be positive, got {dt}")));
        }
        Ok(GaussianStep {
            mean: x + self.drift(t, x) * dt,
            std_dev: self.diffusion(t, x)? * dt.sqrt(),
        })
    }

    /// Times at which the coefficients change, strictly inside `(0, horizon)`.
    pub fn segment_breaks(&self, horizon: f64) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::Cev { .. } => Vec::new(),
            Dynamics::LocalVol { segments } => segments
                .iter()
                .map(|s| s.end_time)
                .take(segments.len() - 1)
                .filter(|&t| t > 0.0 && t < horizon)
                .collect(),
        }
    }

    /// Diffusion divided by the state at the spot, i.e. the at-the-money
    /// lognormal volatility.
    pub fn reference_vol(&self) -> f64 {
        self.diffusion(0.0, self.x0).unwrap_or(0.0) / self.x0
    }
}

fn check_spot(x0: f64) -> Result<(), ModelError> {
    if x0.is_finite() && x0 > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter(format!("x0 must be positive, got {x0}")))
    }
}

fn check_finite(name: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter(format!("{name} must be finite")))
    }
}

/// Segments are half-open `[T_{j-1}, T_j)`; times past the last end use the
/// last segment.
fn segment_index(segments: &[LvSegment], t: f64) -> usize {
    segments.partition_point(|s| s.end_time <= t).min(segments.len() - 1)
}

/// Ordered simulation dates `t_0 = 0 < … < t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(maturity: f64, steps: usize) -> Result<Self, ModelError> {
        if steps == 0 {
            return Err(ModelError::InvalidTimeGrid("need at least one step".into()));
        }
        if !(maturity.is_finite() && maturity > 0.0) {
            return Err(ModelError::InvalidTimeGrid(format!(
                "maturity must be positive, got {maturity}"
            )));
        }
        let dt = maturity / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        times[steps] = maturity;
        Ok(Self { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self, ModelError> {
        if times.len() < 2 {
            return Err(ModelError::InvalidTimeGrid("need at least two dates".into()));
        }
        if times[0] != 0.0 {
            return Err(ModelError::InvalidTimeGrid("first date must be 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite()) {
            return Err(ModelError::InvalidTimeGrid(
                "dates must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn maturity(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }
}

/// Paths stored row by row, each of length `steps + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    n_paths: usize,
    len: usize,
    data: Vec<f64>,
}

impl PathMatrix {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.data[i * self.len..(i + 1) * self.len]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.len)
    }
}

/// Simulates one Euler path into `buf` (length `steps + 1`).
///
/// States are floored at zero, which makes zero absorbing for the CEV model.
pub fn simulate_euler_path(
    model: &ModelSpec,
    grid: &TimeGrid,
    rng: &mut StreamRng,
    buf: &mut [f64],
) -> Result<(), ModelError> {
    debug_assert_eq!(buf.len(), grid.times().len());
    buf[0] = model.x0;
    for k in 0..grid.steps() {
        let step = model.conditional_law(grid.times[k], grid.dt(k), buf[k])?;
        let z: f64 = StandardNormal.sample(rng);
        buf[k + 1] = (step.mean + step.std_dev * z).max(0.0);
    }
    Ok(())
}

/// Runs `visit` on every Euler path, one accumulator per block of
/// [`PATH_BLOCK`] paths. Blocks are returned in order and each uses its own
/// stream, so the output does not depend on the thread count.
pub fn simulate_euler_blocks<T, I, V>(
    model: &ModelSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    init: I,
    visit: V,
) -> Result<Vec<T>, ModelError>
where
    T: Send,
    I: Fn() -> T + Sync,
    V: Fn(&mut T, &[f64], &mut StreamRng) + Sync,
{
    let blocks = n_paths.div_ceil(PATH_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let mut acc = init();
            let mut buf = vec![0.0; grid.times().len()];
            let count = PATH_BLOCK.min(n_paths - b * PATH_BLOCK);
            for _ in 0..count {
                simulate_euler_path(model, grid, &mut rng, &mut buf)?;
                visit(&mut acc, &buf, &mut rng);
            }
            Ok(acc)
        })
        .collect()
}

/// Simulates `n_paths` Euler paths starting at `x0`.
pub fn euler_paths(model: &ModelSpec, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathMatrix, ModelError> {
    if n_paths == 0 {
        return Err(ModelError::InvalidParameter("n_paths must be at least 1".into()));
    }
    let len = grid.times().len();
    let blocks = simulate_euler_blocks(model, grid, n_paths, seed, Vec::new, |acc: &mut Vec<f64>, path, _| {
        acc.extend_from_slice(path)
    })?;
    Ok(PathMatrix {
        n_paths,
        len,
        data: blocks.concat(),
    })
}
