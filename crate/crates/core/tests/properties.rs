mod common;

use backmc_core::chain::AliasTable;
use backmc_core::pricing::{make_plan, price_backward, price_forward, PayoffSpec};
use common::*;
use proptest::prelude::*;

fn sizes() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=5, 1..=3).prop_map(|mut v| {
        v.insert(0, 1);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reversal_satisfies_bayes_identity(seed in any::<u64>(), sizes in sizes()) {
        let chain = random_chain(&mut seeded(seed), &sizes, 0.1);
        for k in 0..chain.steps() {
            let b = chain.backward(k).unwrap();
            let f = chain.forward(k);
            for j in 0..b.rows() {
                let row_sum: f64 = b.row(j).iter().sum();
                prop_assert!((row_sum - 1.0).abs() < 1e-12);
                for i in 0..b.cols() {
                    let lhs = chain.marginal(k + 1)[j] * b[(j, i)];
                    let rhs = chain.marginal(k)[i] * f[(i, j)];
                    prop_assert!((lhs - rhs).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn marginals_are_distributions(seed in any::<u64>(), sizes in sizes()) {
        let chain = random_chain(&mut seeded(seed), &sizes, 0.1);
        for k in 0..=chain.steps() {
            let s: f64 = chain.marginal(k).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alias_table_reproduces_probabilities(weights in prop::collection::vec(0.0f64..10.0, 1..40)) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-9);
        let total: f64 = weights.iter().sum();
        let table = AliasTable::new(&weights).unwrap();
        for (p, w) in table.implied_probabilities().iter().zip(&weights) {
            prop_assert!((p - w / total).abs() <= 1e-12);
        }
    }

    #[test]
    fn budget_never_exceeds_paths_plus_strata(seed in any::<u64>(), sizes in sizes(), n_mc in 1usize..5000) {
        let chain = random_chain(&mut seeded(seed), &sizes, 0.1);
        let t = *chain.times().last().unwrap();
        let spec = PayoffSpec::asian_call(1.0, 0.0, t).unwrap();
        let plan = make_plan(&chain, &spec, n_mc);
        prop_assert!(plan.total_paths() <= n_mc + plan.strata.len());
        prop_assert!(plan.paths_per_stratum >= 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prices_are_monotone_in_strike_and_barrier(seed in any::<u64>(), run in 0u64..1000) {
        // Same seed, same paths: the expectation bridge and the Asian payoff
        // are pathwise monotone, so the estimates are too.
        let chain = random_chain(&mut seeded(seed), &[1, 4, 4, 4], 0.1);
        let t = *chain.times().last().unwrap();
        let barrier = |k: f64, b: f64| PayoffSpec::up_out_barrier_call(k, b, true, 0.01, t).unwrap();
        let fwd = |s: &PayoffSpec| price_forward(&chain, s, 2000, run).unwrap().price;
        prop_assert!(fwd(&barrier(0.95, 1.05)) >= fwd(&barrier(1.0, 1.05)));
        prop_assert!(fwd(&barrier(0.95, 1.1)) >= fwd(&barrier(0.95, 1.05)));
        let asian = |k: f64| PayoffSpec::asian_call(k, 0.01, t).unwrap();
        let bwd = |s: &PayoffSpec| price_backward(&chain, s, &make_plan(&chain, s, 2000), run).unwrap().price;
        prop_assert!(bwd(&asian(0.95)) >= bwd(&asian(1.0)));
        prop_assert!(fwd(&asian(0.95)) >= fwd(&asian(1.0)));
    }

    #[test]
    fn backward_estimate_is_exact_on_single_step_chains(seed in any::<u64>(), n in 1usize..6) {
        // One step: every stratum's conditional payoff is a constant.
        let chain = random_chain(&mut seeded(seed), &[1, n], 0.1);
        let t = *chain.times().last().unwrap();
        for spec in [PayoffSpec::vanilla_call(1.0, 0.01, t).unwrap(), PayoffSpec::asian_call(1.0, 0.01, t).unwrap()] {
            let bound = spec.bind(chain.times()).unwrap();
            let exact = forward_enumeration(&chain, &bound);
            let est = price_backward(&chain, &spec, &make_plan(&chain, &spec, 50), seed).unwrap();
            prop_assert!((est.price - exact).abs() <= 1e-12);
            prop_assert!(est.std_error <= 1e-12);
        }
    }
}
