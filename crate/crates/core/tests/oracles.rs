//! Estimators and chain builders against closed forms, exact enumeration and
//! a compensated Taylor exponential.

mod common;

use backmc_core::generator::{default_grid, expm, ltsa_build, vanilla_price, OptionKind};
use backmc_core::matrix::Matrix;
use backmc_core::model::{ModelSpec, TimeGrid};
use backmc_core::pricing::{make_plan, price_backward, price_forward, PayoffSpec};
use backmc_core::quantize::{rmqa_build, GaussianMixture, RmqaConfig};
use common::*;
use rand::Rng;

fn all_payoffs(times: &[f64]) -> Vec<PayoffSpec> {
    let t = *times.last().unwrap();
    vec![
        PayoffSpec::vanilla_call(1.0, 0.02, t).unwrap(),
        PayoffSpec::asian_call(1.0, 0.02, t).unwrap(),
        PayoffSpec::up_out_barrier_call(0.98, 1.06, true, 0.02, t).unwrap(),
        PayoffSpec::up_out_barrier_call(0.98, 1.06, false, 0.02, t).unwrap(),
        PayoffSpec::auto_callable(times[1..].to_vec(), vec![0.03; times.len() - 1], 1.0, 0.02, t).unwrap(),
    ]
}

#[test]
fn backward_decomposition_matches_forward_enumeration() {
    let mut rng = seeded(11);
    for trial in 0..200 {
        let steps = rng.random_range(1..=3);
        let mut sizes = vec![1];
        sizes.extend((0..steps).map(|_| rng.random_range(1..=4)));
        let chain = random_chain(&mut rng, &sizes, 0.25);
        for spec in all_payoffs(chain.times()) {
            let bound = spec.bind(chain.times()).unwrap();
            let fwd = forward_enumeration(&chain, &bound);
            let (bwd, _) = backward_enumeration(&chain, &bound);
            assert!(
                (fwd - bwd).abs() <= 1e-12,
                "trial {trial} {}: forward {fwd} backward {bwd}",
                spec.name()
            );
        }
    }
}

#[test]
fn stratified_estimate_converges_to_enumerated_price() {
    let chain = random_chain(&mut seeded(5), &[1, 4, 4, 3], 0.25);
    for spec in all_payoffs(chain.times()) {
        let bound = spec.bind(chain.times()).unwrap();
        let exact = forward_enumeration(&chain, &bound);
        let est = price_backward(&chain, &spec, &make_plan(&chain, &spec, 200_000), 3).unwrap();
        assert!(
            (est.price - exact).abs() <= 4.0 * est.std_error + 1e-12,
            "{}: {} ± {} vs {exact}",
            spec.name(),
            est.price,
            est.std_error
        );
        let fwd = price_forward(&chain, &spec, 200_000, 3).unwrap();
        assert!(
            (fwd.price - exact).abs() <= 4.0 * fwd.std_error + 1e-12,
            "{}: forward {} vs {exact}",
            spec.name(),
            fwd.price
        );
    }
}

#[test]
fn expm_matches_compensated_taylor_series() {
    let mut rng = seeded(21);
    for _ in 0..300 {
        let n = rng.random_range(1..=8);
        let norm = rng.random_range(0.0..5.0);
        let a = random_tridiagonal_generator(&mut rng, n, norm);
        let e = expm(&a).unwrap();
        let t = taylor_expm(&a, 60);
        assert!(e.max_abs_diff(&t) <= 1e-11, "n={n} norm={norm}: {}", e.max_abs_diff(&t));
        for s in e.row_sums() {
            assert!((s - 1.0).abs() <= 1e-10);
        }
        let half = expm(&a.scale(0.5)).unwrap();
        assert!(e.max_abs_diff(&half.matmul(&half)) <= 1e-8);
    }
}

#[test]
fn expm_of_dense_matrix_matches_taylor_series() {
    // Outside the generator class: negative and positive entries, no row-sum
    // constraint.
    let a = Matrix::from_rows(&[vec![0.3, -1.2, 0.5], vec![0.8, -0.4, 1.1], vec![-0.6, 0.2, 0.1]]);
    let e = expm(&a).unwrap();
    assert!(e.max_abs_diff(&taylor_expm(&a, 60)) <= 1e-12);
}

#[test]
fn ltsa_vanilla_matches_black_scholes() {
    let model = ModelSpec::cev(1.0, 0.0, 0.2, 1.0).unwrap();
    let grid = default_grid(&model, 0.5, 100).unwrap();
    let chain = ltsa_build(&model, &[0.0, 0.5], &grid).unwrap();
    for k in [0.9, 1.0, 1.1] {
        let chain_price = vanilla_price(&chain, k, 1, 1.0, OptionKind::Call);
        let exact = black_scholes_call(1.0, k, 0.0, 0.2, 0.5);
        assert!((chain_price - exact).abs() <= 1e-3, "K={k}: {chain_price} vs {exact}");
    }
}

#[test]
fn rmqa_vanilla_matches_black_scholes() {
    let model = ModelSpec::cev(1.0, 0.0, 0.2, 1.0).unwrap();
    let grid = TimeGrid::uniform(0.5, 10).unwrap();
    let chain = rmqa_build(
        &model,
        &grid,
        &RmqaConfig {
            n_points: 60,
            ..Default::default()
        },
    )
    .unwrap()
    .chain;
    for k in [0.95, 1.0, 1.05] {
        let chain_price = vanilla_price(&chain, k, 10, 1.0, OptionKind::Call);
        let exact = black_scholes_call(1.0, k, 0.0, 0.2, 0.5);
        assert!((chain_price - exact).abs() <= 1e-3, "K={k}: {chain_price} vs {exact}");
    }
}

/// `Σ_i ∫_{C_i} (x − γ_i)² φ(x) dx` by composite Simpson inside each Voronoi
/// cell, so the integrand is smooth on every panel.
fn quadrature_distortion(grid: &[f64]) -> f64 {
    let mut edges = vec![-12.0];
    edges.extend(grid.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(12.0);
    let m = 20_000;
    let mut s = Neumaier::default();
    for (i, &g) in grid.iter().enumerate() {
        let (a, b) = (edges[i], edges[i + 1]);
        let h = (b - a) / m as f64;
        let f = |x: f64| (x - g) * (x - g) * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        for k in 0..=m {
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s.add(w * f(a + k as f64 * h) * h / 3.0);
        }
    }
    s.sum()
}

#[test]
fn closed_form_distortion_matches_quadrature() {
    let mix = GaussianMixture::standard_normal();
    for grid in [vec![-1.0, 1.0], vec![-1.5, -0.2, 0.4, 2.0], vec![0.0]] {
        let q = quadrature_distortion(&grid);
        assert!(
            (mix.distortion(&grid) - q).abs() <= 1e-12,
            "{grid:?}: {} vs {q}",
            mix.distortion(&grid)
        );
    }
}
