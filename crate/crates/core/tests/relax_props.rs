mod common;

use common::{tiny_instance, TinySpec};
use proptest::prelude::*;
use transship::lp::{solve_lp, LpModel, Relation, Sense};
use transship::oracle::{brute_force, EnumBudget};
use transship::relax::{solve_capacitated_a, solve_capacitated_ab, solve_unconstrained, BnbBudget};
use transship::Instance;

/// Fractional flow LP written directly from the model: ship `x_ijpk` only
/// on pairs `allowed(i, j)`, sell `z <= min(held, d)`, respect `A_i` when
/// `use_caps`. Objective `sum (r+h) z - c shipped - h sum s`.
fn flow_lp(inst: &Instance, allowed: &dyn Fn(usize, usize) -> bool, use_caps: bool) -> f64 {
    let n = inst.n_stores();
    let mut obj = Vec::new();
    let mut ships = Vec::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i && allowed(i, j)) {
            for (p, prod) in inst.products().iter().enumerate() {
                for k in 0..prod.sizes {
                    if inst.stock(i, p)[k] > 0 {
                        ships.push((i, j, p, k, obj.len()));
                        obj.push(-prod.transfer_cost.to_f64());
                    }
                }
            }
        }
    }
    let mut sells = Vec::new();
    let mut constant = 0.0;
    for j in 0..n {
        for (p, prod) in inst.products().iter().enumerate() {
            for k in 0..prod.sizes {
                constant -= prod.holding_cost.to_f64() * inst.stock(j, p)[k] as f64;
                sells.push((j, p, k, obj.len()));
                obj.push((prod.revenue + prod.holding_cost).to_f64());
            }
        }
    }
    let mut lp = LpModel::new(Sense::Maximize, obj);
    for &(j, p, k, v) in &sells {
        lp.set_bounds(v, 0.0, inst.demand(j, p)[k] as f64);
        // z <= s - out + in
        let mut terms = vec![(v, 1.0)];
        for &(a, b, q, r, x) in &ships {
            if q == p && r == k && a == j {
                terms.push((x, 1.0));
            }
            if q == p && r == k && b == j {
                terms.push((x, -1.0));
            }
        }
        lp.add_sparse(&terms, Relation::Le, inst.stock(j, p)[k] as f64);
    }
    for i in 0..n {
        for (p, prod) in inst.products().iter().enumerate() {
            for k in 0..prod.sizes {
                let terms: Vec<_> = ships
                    .iter()
                    .filter(|s| s.0 == i && s.2 == p && s.3 == k)
                    .map(|s| (s.4, 1.0))
                    .collect();
                if !terms.is_empty() {
                    lp.add_sparse(&terms, Relation::Le, inst.stock(i, p)[k] as f64);
                }
            }
        }
        if let (true, Some(a)) = (use_caps, inst.store(i).sku_cap) {
            let terms: Vec<_> = ships.iter().filter(|s| s.0 == i).map(|s| (s.4, 1.0)).collect();
            if !terms.is_empty() {
                lp.add_sparse(&terms, Relation::Le, a as f64);
            }
        }
    }
    solve_lp(&lp).unwrap().objective + constant
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()))
}

fn ge(a: f64, b: f64) -> bool {
    a >= b - 1e-6 * (1.0 + a.abs().max(b.abs()))
}

/// Best destination-capped objective by enumerating every connection set
/// within the caps and solving the flow LP on it.
fn enumerate_connections(inst: &Instance) -> f64 {
    let n = inst.n_stores();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << pairs.len()) {
        let on = |i: usize, j: usize| pairs.iter().position(|&q| q == (i, j)).is_some_and(|b| mask >> b & 1 == 1);
        let within = (0..n).all(|i| {
            let used = (0..n).filter(|&j| j != i && on(i, j)).count() as u64;
            inst.store(i).dest_cap.is_none_or(|b| used <= b)
        });
        if within {
            best = best.max(flow_lp(inst, &on, true));
        }
    }
    best
}

fn relax_spec() -> impl Strategy<Value = TinySpec> {
    tiny_instance(5, 3, 2, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn greedy_matches_flow_lp(spec in relax_spec()) {
        let inst = spec.build().uncapacitated();
        let greedy = solve_unconstrained(&inst).objective;
        let lp = flow_lp(&inst, &|_, _| true, false);
        prop_assert!(close(greedy, lp), "greedy {greedy} lp {lp}");
    }

    #[test]
    fn unit_capped_model_matches_flow_lp(spec in relax_spec()) {
        let inst = spec.build();
        let capped = solve_capacitated_a(&inst).unwrap().objective;
        prop_assert!(close(capped, flow_lp(&inst, &|_, _| true, true)));
    }

    #[test]
    fn dominance_chain(spec in tiny_instance(3, 3, 2, 4)) {
        let inst = spec.build();
        let free = solve_unconstrained(&inst).objective;
        let a = solve_capacitated_a(&inst).unwrap().objective;
        let ab = solve_capacitated_ab(&inst, BnbBudget::default()).unwrap();
        prop_assert!(ab.exact);
        let full = brute_force(&inst, EnumBudget::default()).unwrap().objective.to_f64();
        prop_assert!(ge(free, a) && ge(a, ab.flow.objective) && ge(ab.flow.objective, full),
            "{free} {a} {} {full}", ab.flow.objective);
    }

    #[test]
    fn raising_one_unit_cap_never_hurts(spec in relax_spec(), store in 0usize..5, extra in 1u64..20) {
        let inst = spec.build();
        let i = store % inst.n_stores();
        let mut caps: Vec<_> = inst.stores().iter().map(|s| (s.sku_cap, s.dest_cap)).collect();
        caps[i].0 = caps[i].0.map(|a| a + extra);
        let raised = inst.with_capacities(&caps);
        let before = solve_capacitated_a(&inst).unwrap().objective;
        let after = solve_capacitated_a(&raised).unwrap().objective;
        prop_assert!(ge(after, before), "{after} < {before}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn destination_capped_search_matches_enumeration(
        spec in tiny_instance(3, 2, 2, 5).prop_filter("three stores", |s| s.stock.len() == 3),
        a_caps in prop::collection::vec(prop::option::of(0u64..=20), 3),
    ) {
        // every store may serve one destination
        let caps: Vec<_> = a_caps.into_iter().map(|a| (a, Some(1))).collect();
        let inst = spec.build().with_capacities(&caps);
        let ab = solve_capacitated_ab(&inst, BnbBudget::default()).unwrap();
        prop_assert!(ab.exact);
        let enumerated = enumerate_connections(&inst);
        prop_assert!(close(ab.flow.objective, enumerated), "{} vs {enumerated}", ab.flow.objective);
    }
}
