mod common;

use common::tiny_instance;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use transship::heuristic::{construct, sa_improve, solve, SaConfig};
use transship::oracle::{brute_force, EnumBudget};
use transship::{check_feasibility, evaluate_objective};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn outputs_are_feasible_and_never_worse_than_the_start(spec in tiny_instance(5, 4, 3, 8), seed in any::<u64>()) {
        let inst = spec.build();
        let start = construct(&inst, seed);
        prop_assert!(check_feasibility(&inst, &start).is_feasible());
        let cfg = SaConfig { seed, max_iterations: 2_000, ..SaConfig::default() };
        let out = sa_improve(&inst, start.clone(), &cfg);
        prop_assert!(check_feasibility(&inst, &out.plan).is_feasible());
        prop_assert_eq!(out.objective, evaluate_objective(&inst, &out.plan));
        prop_assert!(out.objective >= evaluate_objective(&inst, &start));
    }
}

#[test]
fn annealing_nearly_always_reaches_the_optimum() {
    let mut runner = TestRunner::new_with_rng(Config::default(), TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let strategy = (tiny_instance(4, 3, 2, 5), any::<u64>());
    let (mut hits, mut runs) = (0, 0);
    for _ in 0..100 {
        let (spec, seed) = strategy.new_tree(&mut runner).unwrap().current();
        let inst = spec.build();
        let opt = brute_force(&inst, EnumBudget { max_assignments: 100_000_000 }).unwrap().objective;
        let cfg = SaConfig { seed, max_iterations: 10_000, ..SaConfig::default() };
        let lb = solve(&inst, &cfg).objective;
        assert!(lb <= opt);
        runs += 1;
        // within 3% of the optimum; an optimum at or below zero must be hit exactly
        if lb >= opt || (opt.micros() > 0 && lb.micros() * 100 >= opt.micros() * 97) {
            hits += 1;
        }
    }
    assert!(hits * 100 >= runs * 95, "{hits} of {runs} runs within 3% of the optimum");
}
