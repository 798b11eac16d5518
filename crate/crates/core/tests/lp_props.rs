use proptest::prelude::*;
use transship::lp::{solve_lp, LpModel, LpStatus, Relation, Sense};

/// `max c.x s.t. A x <= b, x >= 0` built around a known optimum: `x*`
/// and duals `y*` satisfy complementary slackness by construction.
#[derive(Debug, Clone)]
struct Planted {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    optimum: f64,
}

fn planted() -> impl Strategy<Value = Planted> {
    (2usize..=8, 2usize..=8)
        .prop_flat_map(|(m, n)| {
            (
                prop::collection::vec(prop::collection::vec(-5i32..=10, n), m),
                prop::collection::vec(prop::option::weighted(0.6, 1u32..=10), n),
                prop::collection::vec(prop::option::weighted(0.6, 1u32..=10), m),
                prop::collection::vec(1u32..=5, n),
                prop::collection::vec(1u32..=5, m),
            )
        })
        .prop_map(|(a, x, y, mu, slack)| {
            let a: Vec<Vec<f64>> = a.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
            let x: Vec<f64> = x.iter().map(|v| v.map_or(0.0, f64::from)).collect();
            let y: Vec<f64> = y.iter().map(|v| v.map_or(0.0, f64::from)).collect();
            // rows with a positive dual are tight, the others get slack
            let b: Vec<f64> = a
                .iter()
                .zip(&y)
                .zip(&slack)
                .map(|((row, &yr), &s)| {
                    let ax: f64 = row.iter().zip(&x).map(|(a, x)| a * x).sum();
                    if yr > 0.0 { ax } else { ax + f64::from(s) }
                })
                .collect();
            // c = A^T y - mu with mu = 0 wherever x* > 0
            let c: Vec<f64> = (0..x.len())
                .map(|j| {
                    let aty: f64 = a.iter().zip(&y).map(|(row, yr)| row[j] * yr).sum();
                    if x[j] > 0.0 { aty } else { aty - f64::from(mu[j]) }
                })
                .collect();
            let optimum = c.iter().zip(&x).map(|(c, x)| c * x).sum();
            Planted { a, b, c, optimum }
        })
}

fn model_of(p: &Planted, scale: f64) -> LpModel {
    let mut lp = LpModel::new(Sense::Maximize, p.c.iter().map(|c| c * scale).collect());
    for (row, &b) in p.a.iter().zip(&p.b) {
        lp.add_constraint(row.clone(), Relation::Le, b);
    }
    lp
}

/// Feasible model with mixed row types: rows are built around a known
/// point so phase 1 always succeeds; the objective is bounded by box
/// bounds on every variable.
fn mixed() -> impl Strategy<Value = LpModel> {
    (2usize..=7, 2usize..=7)
        .prop_flat_map(|(m, n)| {
            (
                prop::collection::vec(-10i32..=10, n),
                prop::collection::vec((prop::collection::vec(-6i32..=6, n), 0u8..3, 0u32..=4), m),
                prop::collection::vec(0u32..=6, n),
                prop::bool::ANY,
            )
        })
        .prop_map(|(c, rows, point, minimize)| {
            let sense = if minimize { Sense::Minimize } else { Sense::Maximize };
            let mut lp = LpModel::new(sense, c.into_iter().map(f64::from).collect());
            let point: Vec<f64> = point.into_iter().map(f64::from).collect();
            for v in 0..point.len() {
                lp.set_bounds(v, 0.0, 8.0);
            }
            for (row, kind, slack) in rows {
                let row: Vec<f64> = row.into_iter().map(f64::from).collect();
                let at: f64 = row.iter().zip(&point).map(|(a, x)| a * x).sum();
                let (rel, rhs) = match kind {
                    0 => (Relation::Le, at + f64::from(slack)),
                    1 => (Relation::Ge, at - f64::from(slack)),
                    _ => (Relation::Eq, at),
                };
                lp.add_constraint(row, rel, rhs);
            }
            lp
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn planted_optimum_is_recovered(p in planted()) {
        let sol = solve_lp(&model_of(&p, 1.0)).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!((sol.objective - p.optimum).abs() <= 1e-6 * (1.0 + p.optimum.abs()),
            "{} vs planted {}", sol.objective, p.optimum);
        prop_assert!(sol.duality_residual <= 1e-6 * (1.0 + sol.objective.abs()));
    }

    #[test]
    fn objective_scales_with_costs(p in planted(), scale in 0.01f64..100.0) {
        let base = solve_lp(&model_of(&p, 1.0)).unwrap();
        let scaled = solve_lp(&model_of(&p, scale)).unwrap();
        prop_assert!((scaled.objective - scale * base.objective).abs() <= 1e-6 * (1.0 + scaled.objective.abs()));
    }

    #[test]
    fn optimal_solves_close_the_duality_gap(lp in mixed()) {
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(sol.duality_residual <= 1e-6 * (1.0 + sol.objective.abs()));
        prop_assert!(sol.primal_residual <= 1e-7);
    }
}
