mod common;

use std::collections::BTreeSet;

use common::{tiny_instance, TinySpec};
use proptest::prelude::*;
use transship::{check_feasibility, evaluate_objective, implied_sales, Instance, Money, TransferPlan};

fn with_plan(spec: impl Strategy<Value = TinySpec>) -> impl Strategy<Value = (TinySpec, TransferPlan)> {
    spec.prop_flat_map(|spec| {
        let n = spec.stock.len();
        let np = spec.products.len();
        let dest = prop::collection::vec(0..n, n * np);
        (Just(spec), dest).prop_map(move |(spec, dest)| (spec, TransferPlan::from_dest(n, np, dest)))
    })
}

/// Objective for explicit sales `sold` (same layout as the stock tensor).
fn objective_with_sales(inst: &Instance, plan: &TransferPlan, held: &[u32], sold: &[u32]) -> Money {
    let n_skus = inst.n_skus();
    let mut total = Money::ZERO;
    for i in 0..inst.n_stores() {
        for (p, prod) in inst.products().iter().enumerate() {
            if plan.dest(i, p) != i {
                total -= prod.transfer_cost * (inst.stock_total(i, p) as i64);
            }
            for k in 0..prod.sizes {
                let c = i * n_skus + inst.sku_offset(p) + k;
                total += prod.revenue * sold[c] - prod.holding_cost * (held[c] - sold[c]);
            }
        }
    }
    total
}

/// Best objective over every sales vector with `0 <= z <= min(w, d)`.
fn best_sales(inst: &Instance, plan: &TransferPlan, held: &[u32]) -> Money {
    let limits: Vec<u32> = held.iter().zip(inst.demand_flat()).map(|(&w, &d)| w.min(d)).collect();
    let mut z = vec![0u32; limits.len()];
    let mut best = objective_with_sales(inst, plan, held, &z);
    loop {
        let mut pos = 0;
        while pos < z.len() && z[pos] == limits[pos] {
            z[pos] = 0;
            pos += 1;
        }
        if pos == z.len() {
            return best;
        }
        z[pos] += 1;
        best = best.max(objective_with_sales(inst, plan, held, &z));
    }
}

fn permuted(spec: &TinySpec, perm: &[usize]) -> TinySpec {
    let mut out = spec.clone();
    for (i, &to) in perm.iter().enumerate() {
        out.stock[to] = spec.stock[i].clone();
        out.demand[to] = spec.demand[i].clone();
        out.caps[to] = spec.caps[i];
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn implied_sales_are_optimal((spec, plan) in with_plan(tiny_instance(2, 2, 2, 3))) {
        let inst = spec.build();
        let sales = implied_sales(&inst, &plan);
        let implied = objective_with_sales(&inst, &plan, &sales.held, &sales.sold);
        prop_assert_eq!(implied, evaluate_objective(&inst, &plan));
        prop_assert_eq!(implied, best_sales(&inst, &plan, &sales.held));
    }

    #[test]
    fn keep_everything_closed_form(spec in tiny_instance(4, 4, 3, 10)) {
        let inst = spec.build();
        let mut expected = Money::ZERO;
        for i in 0..inst.n_stores() {
            for (p, prod) in inst.products().iter().enumerate() {
                for (&s, &d) in inst.stock(i, p).iter().zip(inst.demand(i, p)) {
                    let sold = s.min(d);
                    expected += prod.revenue * sold - prod.holding_cost * (s - sold);
                }
            }
        }
        prop_assert_eq!(evaluate_objective(&inst, &TransferPlan::keep_all_for(&inst)), expected);
    }

    #[test]
    fn relabelling_stores_preserves_objective_and_feasibility(
        (spec, plan) in with_plan(tiny_instance(4, 3, 2, 5)),
        seed in any::<u64>(),
    ) {
        let n = spec.stock.len();
        let mut perm: Vec<usize> = (0..n).collect();
        // Fisher-Yates driven by the seed
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let inst = spec.build();
        let moved = permuted(&spec, &perm).build();
        let moved_plan = plan.relabel(&perm);
        prop_assert_eq!(evaluate_objective(&inst, &plan), evaluate_objective(&moved, &moved_plan));
        prop_assert_eq!(
            check_feasibility(&inst, &plan).is_feasible(),
            check_feasibility(&moved, &moved_plan).is_feasible()
        );
    }

    #[test]
    fn feasibility_matches_direct_check((spec, plan) in with_plan(tiny_instance(4, 3, 2, 5))) {
        let inst = spec.build();
        let n = spec.stock.len();
        let mut ok = true;
        for i in 0..n {
            let mut units = 0u64;
            let mut dests = BTreeSet::new();
            for p in 0..spec.products.len() {
                let j = plan.dest(i, p);
                if j != i {
                    units += spec.stock[i][p].iter().map(|&q| q as u64).sum::<u64>();
                    dests.insert(j);
                }
            }
            let (a, b) = spec.caps[i];
            ok &= a.is_none_or(|a| units <= a);
            ok &= b.is_none_or(|b| dests.len() as u64 <= b);
        }
        prop_assert_eq!(check_feasibility(&inst, &plan).is_feasible(), ok);
    }
}
