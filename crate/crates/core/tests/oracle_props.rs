mod common;

use common::tiny_instance;
use proptest::prelude::*;
use transship::oracle::{brute_force, EnumBudget};
use transship::{check_feasibility, evaluate_objective};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn independent_evaluators_agree(spec in tiny_instance(4, 3, 2, 5)) {
        let inst = spec.build();
        let sol = brute_force(&inst, EnumBudget { max_assignments: 100_000_000 }).unwrap();
        prop_assert!(check_feasibility(&inst, &sol.plan).is_feasible());
        prop_assert_eq!(sol.objective, evaluate_objective(&inst, &sol.plan));
    }

    #[test]
    fn dropping_caps_never_lowers_the_optimum(spec in tiny_instance(4, 3, 2, 5)) {
        let inst = spec.build();
        let capped = brute_force(&inst, EnumBudget { max_assignments: 100_000_000 }).unwrap();
        let free = brute_force(&inst.uncapacitated(), EnumBudget { max_assignments: 100_000_000 }).unwrap();
        prop_assert!(free.objective >= capped.objective);
    }
}
