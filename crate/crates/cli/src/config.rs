//! Experiment configuration: JSON schema, defaults and validation.
//!
//! ```json
//! {
//!   "model":   { "type": "cev", "x0": 1.36, "rate": 0.0032, "sigma": 0.1, "alpha": 0.5 },
//!   "time":    { "maturity": 0.5, "steps": 51 },
//!   "chain":   { "builder": "rmqa", "n_points": 100 },
//!   "payoffs": [ { "type": "asian_call", "strike": 1.36 } ],
//!   "run":     { "n_mc": 10000, "seed": 7, "estimators": ["euler", "backward"] }
//! }
//! ```
//!
//! A CEV `sigma` may be a list; every value is then a separate model with its
//! own chain, and results carry the model label.
//!
//! Local-vol models list segments, each with `end_time` and one of `eta`
//! (constant), `knots` (`[[x, eta], ...]`) or `knots_csv` (a file with
//! columns `x,eta`, relative to the config file).

use std::fs;
use std::path::{Path, PathBuf};

use backmc_core::model::{LvSegment, ModelSpec, MonotoneSpline, TimeGrid};
use backmc_core::pricing::{EstimatorKind, PayoffSpec};
use backmc_core::quantize::{InitScheme, RmqaConfig, Solver};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub time: TimeBlock,
    #[serde(default)]
    pub chain: ChainBlock,
    pub payoffs: Vec<PayoffBlock>,
    #[serde(default)]
    pub run: RunBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelBlock {
    Cev {
        x0: f64,
        rate: f64,
        sigma: Sweep,
        alpha: f64,
    },
    LocalVol {
        x0: f64,
        rate: f64,
        segments: Vec<SegmentBlock>,
    },
}

/// One value or a list of values.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    One(f64),
    Many(Vec<f64>),
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::One(v) => vec![*v],
            Sweep::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentBlock {
    pub end_time: f64,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub knots: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub knots_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    /// Required unless `dates` is given.
    #[serde(default)]
    pub maturity: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Explicit observation dates starting at 0; overrides `steps`.
    #[serde(default)]
    pub dates: Option<Vec<f64>>,
}

impl Default for TimeBlock {
    fn default() -> Self {
        Self {
            maturity: None,
            steps: default_steps(),
            dates: None,
        }
    }
}

fn default_steps() -> usize {
    51
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Builder {
    #[default]
    Rmqa,
    Ltsa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    #[default]
    Lloyd,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    PrevGrid,
    #[default]
    EulerOperator,
    MidPoint,
    ExpectedValue,
}

impl From<InitName> for InitScheme {
    fn from(n: InitName) -> Self {
        match n {
            InitName::PrevGrid => InitScheme::PrevGrid,
            InitName::EulerOperator => InitScheme::EulerOperator,
            InitName::MidPoint => InitScheme::MidPoint,
            InitName::ExpectedValue => InitScheme::ExpectedValue,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainBlock {
    #[serde(default)]
    pub builder: Builder,
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default)]
    pub solver: SolverName,
    #[serde(default = "default_depth")]
    pub anderson_depth: usize,
    #[serde(default)]
    pub init: InitName,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_scale")]
    pub reference_scale: f64,
    /// LTSA only: `[low, high]` of the uniform price grid.
    #[serde(default)]
    pub grid_bounds: Option<[f64; 2]>,
}

impl Default for ChainBlock {
    fn default() -> Self {
        Self {
            builder: Builder::default(),
            n_points: default_points(),
            solver: SolverName::default(),
            anderson_depth: default_depth(),
            init: InitName::default(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            reference_scale: default_scale(),
            grid_bounds: None,
        }
    }
}

fn default_points() -> usize {
    100
}
fn default_depth() -> usize {
    5
}
fn default_tol() -> f64 {
    1e-5
}
fn default_max_iter() -> usize {
    1000
}
fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffBlock {
    AsianCall {
        #[serde(default)]
        label: Option<String>,
        strike: f64,
    },
    UpOutBarrierCall {
        #[serde(default)]
        label: Option<String>,
        strike: f64,
        barrier: f64,
        #[serde(default = "yes")]
        bridge_correction: bool,
    },
    AutoCallable {
        #[serde(default)]
        label: Option<String>,
        call_dates: Vec<f64>,
        coupons: Vec<f64>,
        barrier_multiplier: f64,
    },
    VanillaCall {
        #[serde(default)]
        label: Option<String>,
        strike: f64,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    Euler,
    Forward,
    Backward,
}

impl From<EstimatorName> for EstimatorKind {
    fn from(n: EstimatorName) -> Self {
        match n {
            EstimatorName::Euler => EstimatorKind::Euler,
            EstimatorName::Forward => EstimatorKind::Forward,
            EstimatorName::Backward => EstimatorKind::Backward,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorName>,
    #[serde(default = "default_results")]
    pub results: PathBuf,
    #[serde(default = "default_diagnostics")]
    pub diagnostics: PathBuf,
    #[serde(default = "default_summary")]
    pub summary: PathBuf,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            n_mc: default_n_mc(),
            seed: 0,
            estimators: default_estimators(),
            results: default_results(),
            diagnostics: default_diagnostics(),
            summary: default_summary(),
        }
    }
}

fn default_n_mc() -> usize {
    10_000
}
fn default_estimators() -> Vec<EstimatorName> {
    vec![EstimatorName::Euler, EstimatorName::Backward]
}
fn default_results() -> PathBuf {
    "results.csv".into()
}
fn default_diagnostics() -> PathBuf {
    "diagnostics.csv".into()
}
fn default_summary() -> PathBuf {
    "summary.txt".into()
}

/// Parses a config, reporting the JSON path, line and column of any error.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!(
            "{path}: {inner}",
            path = if path == "." { "<root>".into() } else { path },
        ))
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[derive(Debug, Clone)]
pub enum ChainSettings {
    Rmqa(RmqaConfig),
    Ltsa { n_points: usize, bounds: Option<[f64; 2]> },
}

/// A validated experiment ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// Labelled models sharing dates, chain settings and payoffs.
    pub models: Vec<(String, ModelSpec)>,
    pub grid: TimeGrid,
    pub chain: ChainSettings,
    pub payoffs: Vec<(String, PayoffSpec)>,
    pub estimators: Vec<EstimatorKind>,
    pub n_mc: usize,
    pub seed: u64,
    pub results: PathBuf,
    pub diagnostics: PathBuf,
    pub summary: PathBuf,
}

fn config_err(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

/// Loads knots from a two-column `x,eta` CSV with a header row.
pub fn load_knots_csv(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| config_err(&path.display().to_string(), e))?;
    let mut knots = Vec::new();
    for (line, record) in reader.deserialize::<(f64, f64)>().enumerate() {
        let rec = record.map_err(|e| config_err(&format!("{} row {}", path.display(), line + 1), e))?;
        knots.push(rec);
    }
    Ok(knots)
}

impl ExperimentConfig {
    /// Builds model, dates and payoffs; `base` resolves relative knot files.
    pub fn resolve(&self, base: &Path) -> Result<Experiment, CliError> {
        let models = match &self.model {
            ModelBlock::Cev { x0, rate, sigma, alpha } => {
                let sigmas = sigma.values();
                if sigmas.is_empty() {
                    return Err(config_err("model.sigma", "needs at least one value"));
                }
                sigmas
                    .iter()
                    .map(|&s| {
                        let m = ModelSpec::cev(*x0, *rate, s, *alpha).map_err(|e| config_err("model", e))?;
                        Ok((format!("cev sigma={s}"), m))
                    })
                    .collect::<Result<Vec<_>, CliError>>()?
            }
            ModelBlock::LocalVol { x0, rate, segments } => {
                let segs = segments
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let field = format!("model.segments[{i}]");
                        let eta = match (&s.eta, &s.knots, &s.knots_csv) {
                            (Some(v), None, None) => MonotoneSpline::constant(*v),
                            (None, Some(k), None) => {
                                MonotoneSpline::new(&k.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>())
                            }
                            (None, None, Some(p)) => MonotoneSpline::new(&load_knots_csv(&base.join(p))?),
                            _ => return Err(config_err(&field, "give exactly one of eta, knots, knots_csv")),
                        }
                        .map_err(|e| config_err(&field, e))?;
                        Ok(LvSegment {
                            end_time: s.end_time,
                            eta,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                let m = ModelSpec::local_vol(*x0, *rate, segs).map_err(|e| config_err("model", e))?;
                vec![("local_vol".to_string(), m)]
            }
        };

        let grid = match (&self.time.dates, self.time.maturity) {
            (Some(d), m) => {
                if let (Some(m), Some(&last)) = (m, d.last()) {
                    if (m - last).abs() > 1e-12 {
                        return Err(config_err("time.maturity", "must equal the last date"));
                    }
                }
                TimeGrid::from_times(d.clone()).map_err(|e| config_err("time.dates", e))?
            }
            (None, Some(m)) => TimeGrid::uniform(m, self.time.steps).map_err(|e| config_err("time", e))?,
            (None, None) => return Err(config_err("time", "missing field `maturity` (or `dates`)")),
        };
        let maturity = grid.maturity();

        let c = &self.chain;
        if c.n_points < 2 {
            return Err(config_err("chain.n_points", "must be at least 2"));
        }
        let chain = match c.builder {
            Builder::Rmqa => {
                if c.grid_bounds.is_some() {
                    return Err(config_err("chain.grid_bounds", "only used by the ltsa builder"));
                }
                if !(c.tol > 0.0) || c.max_iter == 0 {
                    return Err(config_err("chain", "tol and max_iter must be positive"));
                }
                ChainSettings::Rmqa(RmqaConfig {
                    n_points: c.n_points,
                    solver: match c.solver {
                        SolverName::Lloyd => Solver::Lloyd {
                            depth: c.anderson_depth,
                        },
                        SolverName::Newton => Solver::Newton,
                    },
                    init: c.init.into(),
                    tol: c.tol,
                    max_iter: c.max_iter,
                    reference_scale: c.reference_scale,
                })
            }
            Builder::Ltsa => {
                if let Some([lo, hi]) = c.grid_bounds {
                    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                        return Err(config_err("chain.grid_bounds", "need 0 <= low < high"));
                    }
                }
                ChainSettings::Ltsa {
                    n_points: c.n_points,
                    bounds: c.grid_bounds,
                }
            }
        };

        if self.payoffs.is_empty() {
            return Err(config_err("payoffs", "at least one payoff is required"));
        }
        let rate = models[0].1.rate();
        let payoffs = self
            .payoffs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let field = format!("payoffs[{i}]");
                let (label, spec) = match p {
                    PayoffBlock::AsianCall { label, strike } => {
                        (label, PayoffSpec::asian_call(*strike, rate, maturity))
                    }
                    PayoffBlock::VanillaCall { label, strike } => {
                        (label, PayoffSpec::vanilla_call(*strike, rate, maturity))
                    }
                    PayoffBlock::UpOutBarrierCall {
                        label,
                        strike,
                        barrier,
                        bridge_correction,
                    } => (
                        label,
                        PayoffSpec::up_out_barrier_call(*strike, *barrier, *bridge_correction, rate, maturity),
                    ),
                    PayoffBlock::AutoCallable {
                        label,
                        call_dates,
                        coupons,
                        barrier_multiplier,
                    } => (
                        label,
                        PayoffSpec::auto_callable(
                            call_dates.clone(),
                            coupons.clone(),
                            *barrier_multiplier,
                            rate,
                            maturity,
                        ),
                    ),
                };
                let spec = spec.map_err(|e| config_err(&field, e))?;
                spec.bind(grid.times()).map_err(|e| config_err(&field, e))?;
                let label = label.clone().unwrap_or_else(|| format!("{}_{i}", spec.name()));
                Ok((label, spec))
            })
            .collect::<Result<Vec<_>, CliError>>()?;

        let r = &self.run;
        if r.n_mc == 0 {
            return Err(config_err("run.n_mc", "must be at least 1"));
        }
        if r.estimators.is_empty() {
            return Err(config_err("run.estimators", "at least one estimator is required"));
        }
        Ok(Experiment {
            models,
            grid,
            chain,
            payoffs,
            estimators: r.estimators.iter().map(|&e| e.into()).collect(),
            n_mc: r.n_mc,
            seed: r.seed,
            results: r.results.clone(),
            diagnostics: r.diagnostics.clone(),
            summary: r.summary.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"type": "cev", "x0": 1.36, "rate": 0.0032, "sigma": 0.1, "alpha": 0.5},
        "time": {"maturity": 0.5},
        "payoffs": [{"type": "asian_call", "strike": 1.36}]
    }"#;

    #[test]
    fn defaults_are_filled_in() {
        let cfg = parse_config(MINIMAL).unwrap();
        let exp = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(exp.grid.steps(), 51);
        assert_eq!(exp.n_mc, 10_000);
        match exp.chain {
            ChainSettings::Rmqa(c) => {
                assert_eq!(c.n_points, 100);
                assert_eq!(c.tol, 1e-5);
            }
            _ => panic!("rmqa is the default builder"),
        }
        assert_eq!(exp.payoffs[0].0, "asian_call_0");
        assert_eq!(exp.models.len(), 1);
    }

    #[test]
    fn sigma_list_is_a_sweep() {
        let text = MINIMAL.replace("\"sigma\": 0.1", "\"sigma\": [0.05, 0.1]");
        let exp = parse_config(&text).unwrap().resolve(Path::new(".")).unwrap();
        let labels: Vec<&str> = exp.models.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["cev sigma=0.05", "cev sigma=0.1"]);
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINIMAL.replace("\"x0\": 1.36, ", "");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("x0"), "{err}");
    }

    #[test]
    fn unknown_field_reports_its_path() {
        let text = MINIMAL.replace("\"maturity\": 0.5", "\"maturity\": 0.5, \"stepz\": 3");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("time") && err.contains("stepz"), "{err}");
    }

    #[test]
    fn call_dates_must_be_observation_dates() {
        let text = r#"{
            "model": {"type": "cev", "x0": 1, "rate": 0, "sigma": 0.1, "alpha": 1},
            "time": {"dates": [0, 0.25, 0.5]},
            "chain": {"builder": "ltsa", "n_points": 20},
            "payoffs": [{"type": "auto_callable", "call_dates": [0.3], "coupons": [0.1], "barrier_multiplier": 1}]
        }"#;
        let err = parse_config(text).unwrap().resolve(Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("payoffs[0]"), "{err}");
    }
}
