//! Config-driven runs: build the chain once, price every payoff with every
//! requested estimator, write results, diagnostics and a summary.

use std::path::Path;

use backmc_core::chain::ChainApproximation;
use backmc_core::generator::{build_generator, default_grid, expm, ltsa_build, squarings};
use backmc_core::matrix::Matrix;
use backmc_core::model::ModelSpec;
use backmc_core::pricing::{
    make_plan, price_backward, price_euler, price_forward, BridgeMode, EstimatorKind, PriceEstimate,
};
use backmc_core::quantize::rmqa_build;
use serde::Serialize;

use crate::config::{ChainSettings, Experiment};
use crate::output::{estimate_cell, render_table, to_csv, write_atomic};
use crate::CliError;

/// One row of the results CSV. Wall time is left out so repeated runs are
/// byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub model: String,
    pub scenario: String,
    pub payoff: String,
    pub estimator: String,
    pub price: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: usize,
}

/// Per-slice chain diagnostics. For generator chains `iterations` is 0 and
/// `residual`/`distortion` are empty.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRow {
    pub model: String,
    pub slice: usize,
    pub time: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: Option<f64>,
    pub distortion: Option<f64>,
    pub safeguard_resets: usize,
    pub reachable_states: usize,
}

pub struct BuiltChain {
    pub chain: ChainApproximation,
    pub diagnostics: Vec<DiagnosticRow>,
}

fn reachable(chain: &ChainApproximation, k: usize) -> usize {
    (0..chain.grid(k).len()).filter(|&i| chain.is_reachable(k, i)).count()
}

/// Uniform LTSA price grid from explicit bounds or the default width.
pub fn ltsa_grid(
    model: &ModelSpec,
    maturity: f64,
    n_points: usize,
    bounds: Option<[f64; 2]>,
) -> Result<Vec<f64>, CliError> {
    Ok(match bounds {
        Some([lo, hi]) => (0..n_points)
            .map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64)
            .collect(),
        None => default_grid(model, maturity, n_points)?,
    })
}

/// Builds and reverses the chain of `model` under the settings of `exp`;
/// `label` names the model in the diagnostics.
pub fn build_chain(exp: &Experiment, label: &str, model: &ModelSpec) -> Result<BuiltChain, CliError> {
    let times = exp.grid.times();
    match &exp.chain {
        ChainSettings::Rmqa(cfg) => {
            let out = rmqa_build(model, &exp.grid, cfg)?;
            let chain = out.chain.with_backward();
            let diagnostics = out
                .slices
                .iter()
                .map(|s| DiagnosticRow {
                    model: label.into(),
                    slice: s.slice,
                    time: times[s.slice],
                    iterations: s.iterations,
                    converged: s.converged,
                    residual: s.residuals.last().copied(),
                    distortion: Some(s.distortion),
                    safeguard_resets: s.safeguard_resets,
                    reachable_states: reachable(&chain, s.slice),
                })
                .collect();
            Ok(BuiltChain { chain, diagnostics })
        }
        ChainSettings::Ltsa { n_points, bounds } => {
            let grid = ltsa_grid(model, exp.grid.maturity(), *n_points, *bounds)?;
            let chain = ltsa_build(model, times, &grid)?.with_backward();
            let diagnostics = (1..times.len())
                .map(|k| DiagnosticRow {
                    model: label.into(),
                    slice: k,
                    time: times[k],
                    iterations: 0,
                    converged: true,
                    residual: None,
                    distortion: None,
                    safeguard_resets: 0,
                    reachable_states: reachable(&chain, k),
                })
                .collect();
            Ok(BuiltChain { chain, diagnostics })
        }
    }
}

pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub estimates: Vec<(String, PriceEstimate)>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub results_csv: Vec<u8>,
    pub summary: String,
}

/// Runs every model × payoff × estimator triple of `exp` with `seed`.
pub fn run_experiment(exp: &Experiment, seed: u64) -> Result<RunOutput, CliError> {
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    let mut diagnostics = Vec::new();
    for (model_label, model) in &exp.models {
        let built = build_chain(exp, model_label, model)?;
        let chain = &built.chain;
        diagnostics.extend(built.diagnostics);
        for (label, spec) in &exp.payoffs {
            for &kind in &exp.estimators {
                let est = match kind {
                    EstimatorKind::Euler => price_euler(model, &exp.grid, spec, exp.n_mc, seed, BridgeMode::Bernoulli)?,
                    EstimatorKind::Forward => price_forward(chain, spec, exp.n_mc, seed)?,
                    EstimatorKind::Backward => price_backward(chain, spec, &make_plan(chain, spec, exp.n_mc), seed)?,
                };
                rows.push(ResultRow {
                    model: model_label.clone(),
                    scenario: label.clone(),
                    payoff: spec.name().into(),
                    estimator: kind.as_str().into(),
                    price: est.price,
                    std_error: est.std_error,
                    ci_low: est.ci_low,
                    ci_high: est.ci_high,
                    n_paths: est.n_paths,
                });
                estimates.push((label.clone(), est));
            }
        }
    }
    let results_csv = to_csv(&rows)?;
    let header: Vec<String> = ["model", "scenario", "payoff", "estimator", "price (error)", "wall time"]
        .map(String::from)
        .to_vec();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .zip(&estimates)
        .map(|(r, (_, e))| {
            vec![
                r.model.clone(),
                r.scenario.clone(),
                r.payoff.clone(),
                r.estimator.clone(),
                estimate_cell(e),
                format!("{:.3}s", e.wall_time.as_secs_f64()),
            ]
        })
        .collect();
    Ok(RunOutput {
        rows,
        estimates,
        diagnostics,
        results_csv,
        summary: render_table(&header, &cells),
    })
}

/// Writes the three artifacts of a run under `out_dir`.
pub fn write_run(exp: &Experiment, out: &RunOutput, out_dir: &Path) -> Result<(), CliError> {
    write_atomic(&out_dir.join(&exp.results), &out.results_csv)?;
    write_atomic(&out_dir.join(&exp.diagnostics), &to_csv(&out.diagnostics)?)?;
    write_atomic(&out_dir.join(&exp.summary), out.summary.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub model: String,
    pub slice: usize,
    pub time: f64,
    pub index: usize,
    pub point: f64,
    pub marginal: f64,
}

/// Every slice's grid points and marginal probabilities.
pub fn grid_rows(label: &str, chain: &ChainApproximation) -> Vec<GridRow> {
    let mut rows = Vec::new();
    for k in 0..=chain.steps() {
        for (i, (&point, &marginal)) in chain.grid(k).iter().zip(chain.marginal(k)).enumerate() {
            rows.push(GridRow {
                model: label.into(),
                slice: k,
                time: chain.times()[k],
                index: i,
                point,
                marginal,
            });
        }
    }
    rows
}

/// Quality figures for one `e^{τL}` before clamping and renormalization.
#[derive(Debug, Clone, Serialize)]
pub struct ExpmCheckRow {
    pub model: String,
    pub t_from: f64,
    pub t_to: f64,
    pub norm_inf: f64,
    pub squarings: u32,
    pub max_row_drift: f64,
    pub min_entry: f64,
    /// `‖e^{τL} − (e^{τL/2})²‖_max`.
    pub semigroup_gap: f64,
    /// Largest relative error of `Σ_j P_ij γ_j − γ_i` against `b(γ_i) τ` over
    /// the central half of the grid, away from the reflecting edges; empty
    /// when the drift vanishes.
    pub mean_drift_error: Option<f64>,
}

/// Generator diagnostics between consecutive dates of `exp` on the LTSA
/// grid (default grid when the config uses the quantization builder).
pub fn expm_check(exp: &Experiment) -> Result<Vec<ExpmCheckRow>, CliError> {
    let (n_points, bounds) = match &exp.chain {
        ChainSettings::Ltsa { n_points, bounds } => (*n_points, *bounds),
        ChainSettings::Rmqa(c) => (c.n_points, None),
    };
    let times = exp.grid.times();
    let exp_of = |m: &Matrix| expm(m).ok_or_else(|| CliError::Runtime("generator: singular Padé denominator".into()));
    let mut rows = Vec::new();
    for (label, model) in &exp.models {
        let grid = ltsa_grid(model, exp.grid.maturity(), n_points, bounds)?;
        for w in times.windows(2) {
            let tau = w[1] - w[0];
            let l = build_generator(model, w[0], &grid)?.to_matrix();
            let a = l.scale(tau);
            let e = exp_of(&a)?;
            let half = exp_of(&l.scale(0.5 * tau))?;
            let sums = e.row_sums();
            let n = grid.len();
            let mut drift_err: Option<f64> = None;
            for i in n / 4..n - n / 4 {
                let expected = model.drift(w[0], grid[i]) * tau;
                if expected == 0.0 {
                    continue;
                }
                let moved: f64 = e.row(i).iter().zip(&grid).map(|(p, g)| p * g).sum::<f64>() - grid[i];
                let err = ((moved - expected) / expected).abs();
                drift_err = Some(drift_err.map_or(err, |d: f64| d.max(err)));
            }
            rows.push(ExpmCheckRow {
                model: label.clone(),
                t_from: w[0],
                t_to: w[1],
                norm_inf: a.norm_inf(),
                squarings: squarings(&a),
                max_row_drift: sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max),
                min_entry: e.as_slice().iter().copied().fold(f64::INFINITY, f64::min),
                semigroup_gap: e.max_abs_diff(&half.matmul(&half)),
                mean_drift_error: drift_err,
            });
        }
    }
    Ok(rows)
}
