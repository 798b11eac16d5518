//! Exhaustive solver for tiny instances, used as ground truth in tests.
//!
//! Every total single-destination assignment is enumerated; the objective
//! is computed by a separate evaluator that uses flow conservation
//! (`sum w = sum s`) instead of the sales/holding split used by
//! [`crate::model::evaluate_objective`].

use rayon::prelude::*;

use crate::model::{Instance, TransferPlan};
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumBudget {
    pub max_assignments: u64,
}

impl Default for EnumBudget {
    fn default() -> Self {
        EnumBudget {
            max_assignments: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("instance needs {assignments:.3e} assignments, budget is {budget}; shrink the instance")]
    TooLarge { assignments: f64, budget: u64 },
    #[error("exhaustive search supports at most 64 stores, got {0}")]
    TooManyStores(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub plan: TransferPlan,
    pub objective: Money,
    /// Number of total assignments the search space contains.
    pub assignments: u64,
}

/// One assignment of a single product across all stores holding it.
struct Entry {
    value: i64,
    /// Destination of each store (store index when it keeps).
    dest: Vec<usize>,
    shipped: Vec<u64>,
    masks: Vec<u64>,
}

/// Number of total assignments after forcing keeps for empty pairs.
pub fn search_space(instance: &Instance) -> f64 {
    let n = instance.n_stores() as f64;
    (0..instance.n_products())
        .map(|p| {
            let active = (0..instance.n_stores())
                .filter(|&i| instance.stock_total(i, p) > 0)
                .count();
            n.powi(active as i32)
        })
        .product()
}

fn product_value(instance: &Instance, p: usize, dest: &[usize]) -> i64 {
    let prod = instance.product(p);
    let n = instance.n_stores();
    let sizes = prod.sizes;
    let mut held = vec![0i64; n * sizes];
    let mut stock_sum = 0i64;
    let mut shipped_units = 0i64;
    for (i, &j) in dest.iter().enumerate() {
        for (k, &s) in instance.stock(i, p).iter().enumerate() {
            held[j * sizes + k] += s as i64;
            stock_sum += s as i64;
            if j != i {
                shipped_units += s as i64;
            }
        }
    }
    let r = prod.revenue.micros();
    let c = prod.transfer_cost.micros();
    let h = prod.holding_cost.micros();
    let mut sold = 0i64;
    for j in 0..n {
        for (k, &d) in instance.demand(j, p).iter().enumerate() {
            sold += held[j * sizes + k].min(d as i64);
        }
    }
    (r + h) * sold - c * shipped_units - h * stock_sum
}

fn product_table(instance: &Instance, p: usize) -> Vec<Entry> {
    let n = instance.n_stores();
    let active: Vec<usize> = (0..n).filter(|&i| instance.stock_total(i, p) > 0).collect();
    let mut digits = vec![0usize; active.len()];
    let mut table = Vec::new();
    loop {
        let mut dest: Vec<usize> = (0..n).collect();
        for (&i, &d) in active.iter().zip(&digits) {
            dest[i] = d;
        }
        let mut shipped = vec![0u64; n];
        let mut masks = vec![0u64; n];
        let mut feasible = true;
        for &i in &active {
            if dest[i] != i {
                shipped[i] = instance.stock_total(i, p);
                masks[i] = 1u64 << dest[i];
                let store = instance.store(i);
                if store.sku_cap.is_some_and(|a| shipped[i] > a) || store.dest_cap == Some(0) {
                    feasible = false;
                }
            }
        }
        if feasible {
            table.push(Entry {
                value: product_value(instance, p, &dest),
                dest,
                shipped,
                masks,
            });
        }
        // odometer: first active store is the most significant digit
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                return table;
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < n {
                break;
            }
            digits[pos] = 0;
        }
    }
}

struct Search<'a> {
    instance: &'a Instance,
    tables: &'a [Vec<Entry>],
    shipped: Vec<u64>,
    masks: Vec<u64>,
    choice: Vec<usize>,
    best: Option<(i64, Vec<usize>)>,
}

impl Search<'_> {
    fn fits(&self, e: &Entry) -> bool {
        (0..self.instance.n_stores()).all(|i| {
            let store = self.instance.store(i);
            let units_ok = store
                .sku_cap
                .is_none_or(|a| self.shipped[i] + e.shipped[i] <= a);
            let dests_ok = store
                .dest_cap
                .is_none_or(|b| ((self.masks[i] | e.masks[i]).count_ones() as u64) <= b);
            units_ok && dests_ok
        })
    }

    fn descend(&mut self, depth: usize, value: i64) {
        if depth == self.tables.len() {
            if self.best.as_ref().is_none_or(|(v, _)| value > *v) {
                self.best = Some((value, self.choice.clone()));
            }
            return;
        }
        let tables = self.tables;
        for (idx, e) in tables[depth].iter().enumerate() {
            if !self.fits(e) {
                continue;
            }
            let saved: Vec<(u64, u64)> = self.shipped.iter().copied().zip(self.masks.iter().copied()).collect();
            for i in 0..self.instance.n_stores() {
                self.shipped[i] += e.shipped[i];
                self.masks[i] |= e.masks[i];
            }
            self.choice[depth] = idx;
            self.descend(depth + 1, value + e.value);
            for (i, (s, m)) in saved.into_iter().enumerate() {
                self.shipped[i] = s;
                self.masks[i] = m;
            }
        }
    }
}

/// Best feasible plan by exhaustive enumeration. Among equal objectives
/// the plan that comes first in lexicographic (product, store) order of
/// destinations wins.
pub fn brute_force(instance: &Instance, budget: EnumBudget) -> Result<OracleSolution, OracleError> {
    let n = instance.n_stores();
    if n > 64 {
        return Err(OracleError::TooManyStores(n));
    }
    let space = search_space(instance);
    if space > budget.max_assignments as f64 {
        return Err(OracleError::TooLarge {
            assignments: space,
            budget: budget.max_assignments,
        });
    }
    let tables: Vec<Vec<Entry>> = (0..instance.n_products())
        .map(|p| product_table(instance, p))
        .collect();

    // Partition on the first product's assignment; partitions are searched
    // independently and merged in partition order.
    let first = &tables[0];
    let results: Vec<Option<(i64, Vec<usize>)>> = (0..first.len())
        .into_par_iter()
        .map(|idx| {
            let mut search = Search {
                instance,
                tables: &tables,
                shipped: vec![0; n],
                masks: vec![0; n],
                choice: vec![0; tables.len()],
                best: None,
            };
            let e = &first[idx];
            if !search.fits(e) {
                return None;
            }
            for i in 0..n {
                search.shipped[i] = e.shipped[i];
                search.masks[i] = e.masks[i];
            }
            search.choice[0] = idx;
            search.descend(1, e.value);
            search.best
        })
        .collect();
    let (value, choice) = results
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<(i64, Vec<usize>)>, cand| match acc {
            Some(a) if a.0 >= cand.0 => Some(a),
            _ => Some(cand),
        })
        .expect("keep-everything is always feasible");

    let mut plan = TransferPlan::keep_all_for(instance);
    for (p, &idx) in choice.iter().enumerate() {
        for (i, &j) in tables[p][idx].dest.iter().enumerate() {
            plan.set_dest(i, p, j);
        }
    }
    Ok(OracleSolution {
        plan,
        objective: Money::from_micros(value),
        assignments: space as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{product, two_store};
    use crate::model::{check_feasibility, evaluate_objective, Store};

    #[test]
    fn single_store_keeps_everything() {
        let inst = Instance::from_nested(
            vec![Store::unbounded(0)],
            vec![product(0, 2, 1000, 100, 50_000), product(1, 1, 3000, 100, 150_000)],
            &[vec![vec![3, 1], vec![2]]],
            &[vec![vec![1, 1], vec![5]]],
        )
        .unwrap();
        let sol = brute_force(&inst, EnumBudget::default()).unwrap();
        assert_eq!(sol.plan, TransferPlan::keep_all_for(&inst));
        assert_eq!(sol.objective, evaluate_objective(&inst, &sol.plan));
    }

    #[test]
    fn two_store_optimum_ships() {
        let inst = two_store();
        let sol = brute_force(&inst, EnumBudget::default()).unwrap();
        assert_eq!(sol.objective, Money::from_units(45));
        assert_eq!(sol.plan.dest(0, 0), 1);
    }

    #[test]
    fn too_large_is_reported() {
        let inst = crate::instgen::generate(&crate::instgen::GenConfig::new(6, 6, 2, 3));
        let err = brute_force(&inst, EnumBudget { max_assignments: 1000 }).unwrap_err();
        assert!(matches!(err, OracleError::TooLarge { .. }));
    }

    #[test]
    fn respects_capacities() {
        let inst = crate::instgen::generate(&crate::instgen::GenConfig::new(3, 3, 2, 11));
        let capped = crate::instgen::calibrate_capacities(&inst, crate::instgen::CapacityLevel::LOW);
        let free = brute_force(&inst, EnumBudget::default()).unwrap();
        let tight = brute_force(&capped, EnumBudget::default()).unwrap();
        assert!(check_feasibility(&capped, &tight.plan).is_feasible());
        assert!(free.objective >= tight.objective);
        assert_eq!(tight.objective, evaluate_objective(&capped, &tight.plan));
    }
}
