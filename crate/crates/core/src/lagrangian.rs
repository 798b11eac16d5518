//! Upper bounds by Lagrangian relaxation.
//!
//! The sales-supply link `z <= sum_j s_j x_ji` is priced by `alpha[i][p][k]`
//! and the connection link `x_ijp <= y_ij` by `beta[i][j][p]`. What remains
//! separates into three subproblems: sales by inspection, one 0/1 knapsack
//! per origin store over its products, and a top-`B_i` pick per store.
//!
//! Multipliers are kept in integer micro-units so that the bound
//! `Pi_LR(alpha, beta)` is computed exactly; any non-negative multipliers
//! give a valid upper bound on the single-destination optimum.

use std::time::Instant;

use rayon::prelude::*;

use crate::lp::{solve_lp, LpModel, Relation, Sense, WarmLp};
use crate::model::{BoundPoint, BoundReport, Instance, TransferPlan};
use crate::money::Money;

/// Lagrangian multipliers. `alpha` follows the instance's flat SKU layout
/// (store-major); `beta` is dense over `(origin, destination, product)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplierState {
    pub alpha: Vec<Money>,
    pub beta: Vec<Money>,
}

impl MultiplierState {
    /// `alpha = max(0, r + h - c) / 2`, `beta = 0`.
    pub fn initial(instance: &Instance) -> Self {
        let n = instance.n_stores();
        let mut alpha = Vec::with_capacity(instance.stock_flat().len());
        for _ in 0..n {
            for prod in instance.products() {
                let a = (prod.revenue + prod.holding_cost - prod.transfer_cost).max(Money::ZERO);
                let half = Money::from_micros(a.micros() / 2);
                alpha.extend(std::iter::repeat_n(half, prod.sizes));
            }
        }
        MultiplierState {
            alpha,
            beta: vec![Money::ZERO; n * n * instance.n_products()],
        }
    }

    /// All multipliers zero.
    pub fn zero(instance: &Instance) -> Self {
        let n = instance.n_stores();
        MultiplierState {
            alpha: vec![Money::ZERO; instance.stock_flat().len()],
            beta: vec![Money::ZERO; n * n * instance.n_products()],
        }
    }

    pub fn alpha_at(&self, instance: &Instance, i: usize, p: usize) -> &[Money] {
        let lo = i * instance.n_skus() + instance.sku_offset(p);
        &self.alpha[lo..lo + instance.product(p).sizes]
    }

    fn alpha_index(instance: &Instance, i: usize, p: usize, k: usize) -> usize {
        i * instance.n_skus() + instance.sku_offset(p) + k
    }

    pub fn beta_at(&self, instance: &Instance, i: usize, j: usize, p: usize) -> Money {
        self.beta[beta_index(instance, i, j, p)]
    }

    /// Checks `0 <= alpha <= r + h` and `0 <= beta <= beta_max`.
    pub fn within_bounds(&self, instance: &Instance) -> bool {
        let n = instance.n_stores();
        for i in 0..n {
            for (p, prod) in instance.products().iter().enumerate() {
                let cap = prod.revenue + prod.holding_cost;
                if self
                    .alpha_at(instance, i, p)
                    .iter()
                    .any(|&a| a < Money::ZERO || a > cap)
                {
                    return false;
                }
                let bmax = beta_max(instance, i, p);
                for j in 0..n {
                    let b = self.beta_at(instance, i, j, p);
                    if b < Money::ZERO || b > bmax {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn beta_index(instance: &Instance, i: usize, j: usize, p: usize) -> usize {
    (i * instance.n_stores() + j) * instance.n_products() + p
}

/// Upper limit on `beta[i][j][p]`: `max(0, sum_k (r - c - h) s_ipk)`.
pub fn beta_max(instance: &Instance, i: usize, p: usize) -> Money {
    let prod = instance.product(p);
    let margin = prod.revenue - prod.transfer_cost - prod.holding_cost;
    (margin * instance.stock_total(i, p) as i64).max(Money::ZERO)
}

/// Optimal solutions of the three subproblems for one multiplier state.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    /// Sales per SKU cell, flat layout.
    pub z: Vec<u32>,
    pub x: TransferPlan,
    /// Selected connections per origin store, ascending.
    pub y: Vec<Vec<usize>>,
    pub value_z: Money,
    pub value_x: Money,
    pub value_y: Money,
}

/// Sets `z = d` wherever `r + h - alpha > 0`, else `z = 0`.
pub fn solve_subproblem_z(instance: &Instance, state: &MultiplierState) -> (Vec<u32>, Money) {
    let mut z = vec![0u32; instance.demand_flat().len()];
    let mut value = Money::ZERO;
    for i in 0..instance.n_stores() {
        for (p, prod) in instance.products().iter().enumerate() {
            let alpha = state.alpha_at(instance, i, p);
            for (k, &d) in instance.demand(i, p).iter().enumerate() {
                let coef = prod.revenue + prod.holding_cost - alpha[k];
                if coef.is_positive() {
                    z[MultiplierState::alpha_index(instance, i, p, k)] = d;
                    value += coef * d;
                }
            }
        }
    }
    (z, value)
}

/// Keep value, best ship destination and its value for one (store, product).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemChoice {
    pub keep: Money,
    /// `None` when there is no other store.
    pub best: Option<(usize, Money)>,
    pub weight: u64,
}

impl ItemChoice {
    /// Ship value minus keep value; `None` when nothing can be shipped.
    pub fn gain(&self) -> Option<Money> {
        self.best.map(|(_, v)| v - self.keep)
    }
}

fn keep_value(instance: &Instance, state: &MultiplierState, i: usize, p: usize) -> Money {
    let h = instance.product(p).holding_cost;
    instance
        .stock(i, p)
        .iter()
        .zip(state.alpha_at(instance, i, p))
        .map(|(&s, &a)| (a - h) * s)
        .sum()
}

fn ship_value(instance: &Instance, state: &MultiplierState, i: usize, j: usize, p: usize) -> Money {
    let prod = instance.product(p);
    let unit = prod.transfer_cost + prod.holding_cost;
    let v: Money = instance
        .stock(i, p)
        .iter()
        .zip(state.alpha_at(instance, j, p))
        .map(|(&s, &a)| (a - unit) * s)
        .sum();
    v - state.beta_at(instance, i, j, p)
}

pub fn item_choice(instance: &Instance, state: &MultiplierState, i: usize, p: usize) -> ItemChoice {
    let keep = keep_value(instance, state, i, p);
    let mut best: Option<(usize, Money)> = None;
    for j in (0..instance.n_stores()).filter(|&j| j != i) {
        let v = ship_value(instance, state, i, j, p);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    ItemChoice {
        keep,
        best,
        weight: instance.stock_total(i, p),
    }
}

/// 0/1 knapsack maximising total gain within `capacity` (`None` means
/// unbounded). Only items with positive gain are ever selected. Returns
/// the selection mask and its total gain.
pub fn knapsack(gains: &[Money], weights: &[u64], capacity: Option<u64>) -> (Vec<bool>, Money) {
    let candidates: Vec<usize> = (0..gains.len()).filter(|&q| gains[q].is_positive()).collect();
    let mut take = vec![false; gains.len()];
    let total_weight: u64 = candidates.iter().map(|&q| weights[q]).sum();
    let cap = match capacity {
        Some(a) if a < total_weight => a as usize,
        _ => {
            for &q in &candidates {
                take[q] = true;
            }
            let value = candidates.iter().map(|&q| gains[q]).sum();
            return (take, value);
        }
    };
    // best[c] = best gain using capacity at most c over items seen so far
    let mut best = vec![0i64; cap + 1];
    let mut chosen = vec![vec![false; cap + 1]; candidates.len()];
    for (row, &q) in candidates.iter().enumerate() {
        let w = weights[q] as usize;
        if w > cap {
            continue;
        }
        let g = gains[q].micros();
        for c in (w..=cap).rev() {
            let with = best[c - w] + g;
            if with > best[c] {
                best[c] = with;
                chosen[row][c] = true;
            }
        }
    }
    let mut c = cap;
    for (row, &q) in candidates.iter().enumerate().rev() {
        if chosen[row][c] {
            take[q] = true;
            c -= weights[q] as usize;
        }
    }
    (take, Money::from_micros(best[cap]))
}

struct StoreX {
    dest: Vec<usize>,
    value: Money,
}

fn solve_store_x(instance: &Instance, state: &MultiplierState, i: usize) -> StoreX {
    let n_products = instance.n_products();
    let choices: Vec<ItemChoice> = (0..n_products).map(|p| item_choice(instance, state, i, p)).collect();
    let gains: Vec<Money> = choices
        .iter()
        .map(|c| match c.gain() {
            Some(g) if c.weight > 0 => g,
            _ => Money::ZERO,
        })
        .collect();
    let weights: Vec<u64> = choices.iter().map(|c| c.weight).collect();
    let (take, gain) = knapsack(&gains, &weights, instance.store(i).sku_cap);
    let keep: Money = choices.iter().map(|c| c.keep).sum();
    let dest = (0..n_products)
        .map(|p| if take[p] { choices[p].best.unwrap().0 } else { i })
        .collect();
    StoreX {
        dest,
        value: keep + gain,
    }
}

/// Per-store knapsack over products; each product goes to its best
/// destination (lowest index on ties) or stays.
pub fn solve_subproblem_x(instance: &Instance, state: &MultiplierState) -> (TransferPlan, Money) {
    let n = instance.n_stores();
    let per_store: Vec<StoreX> = (0..n)
        .into_par_iter()
        .map(|i| solve_store_x(instance, state, i))
        .collect();
    let mut dest = Vec::with_capacity(n * instance.n_products());
    let mut value = Money::ZERO;
    for s in per_store {
        dest.extend(s.dest);
        value += s.value;
    }
    (TransferPlan::from_dest(n, instance.n_products(), dest), value)
}

/// Indices of the `limit` largest strictly positive scores, lowest index
/// first among equal scores; returned ascending.
pub fn top_positive(scores: &[Money], limit: Option<u64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&j| scores[j].is_positive()).collect();
    order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
    if let Some(b) = limit {
        order.truncate(b as usize);
    }
    order.sort_unstable();
    order
}

/// Per store, connect to the up-to-`B_i` destinations with the largest
/// positive `sum_p beta[i][j][p]`.
pub fn solve_subproblem_y(instance: &Instance, state: &MultiplierState) -> (Vec<Vec<usize>>, Money) {
    let n = instance.n_stores();
    let mut y = Vec::with_capacity(n);
    let mut value = Money::ZERO;
    for i in 0..n {
        let scores: Vec<Money> = (0..n)
            .map(|j| {
                if j == i {
                    Money::ZERO
                } else {
                    (0..instance.n_products())
                        .map(|p| state.beta_at(instance, i, j, p))
                        .sum()
                }
            })
            .collect();
        let picked = top_positive(&scores, instance.store(i).dest_cap);
        value += picked.iter().map(|&j| scores[j]).sum();
        y.push(picked);
    }
    (y, value)
}

pub fn solve_subproblems(instance: &Instance, state: &MultiplierState) -> SubproblemSolution {
    let (z, value_z) = solve_subproblem_z(instance, state);
    let (x, value_x) = solve_subproblem_x(instance, state);
    let (y, value_y) = solve_subproblem_y(instance, state);
    SubproblemSolution {
        z,
        x,
        y,
        value_z,
        value_x,
        value_y,
    }
}

/// `Pi_LR = Pi_z + Pi_x + Pi_y`.
pub fn compute_upper_bound(sub: &SubproblemSolution) -> Money {
    sub.value_z + sub.value_x + sub.value_y
}

/// How a refinement step chooses new multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefineRule {
    /// Minimise the bound over multipliers under which every realised
    /// subproblem choice keeps dominating its alternatives, so the current
    /// subproblem solutions stay optimal and the new bound equals the LP
    /// value.
    Retain,
    /// Price each store's unit capacity, then solve one LP per product over
    /// fractional destination choices; the supply rows' duals become the
    /// new `alpha`. The first prices are the critical ratios of the current
    /// knapsacks; later ones are the capacity duals of a master LP over the
    /// product solutions seen so far.
    #[default]
    Price,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub state: MultiplierState,
    /// Sum of the LP optima plus the fixed terms. Under [`RefineRule::Retain`]
    /// this equals the bound at the new multipliers and never exceeds the
    /// bound at the old ones.
    pub delta: f64,
    /// Products whose LP failed; their multipliers were left unchanged.
    pub conflicts: usize,
}

/// Per-store knapsack status under the old multipliers.
#[derive(Debug, Clone)]
struct StoreStatus {
    /// Every item with positive gain is shipped.
    slack: bool,
    /// Gain per product at the old multipliers (0 when nothing to ship).
    gains: Vec<Money>,
}

fn store_status(instance: &Instance, state: &MultiplierState, x: &TransferPlan, i: usize) -> StoreStatus {
    let gains: Vec<Money> = (0..instance.n_products())
        .map(|p| item_choice(instance, state, i, p).gain().unwrap_or(Money::ZERO))
        .collect();
    let slack = (0..instance.n_products())
        .all(|p| instance.stock_total(i, p) == 0 || !gains[p].is_positive() || x.is_transfer(i, p));
    StoreStatus { slack, gains }
}

/// Linear expression over LP variables plus a constant, in currency units.
#[derive(Debug, Clone, Default)]
struct Expr {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Expr {
    fn var(v: usize) -> Expr {
        Expr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    fn constant(c: f64) -> Expr {
        Expr {
            terms: Vec::new(),
            constant: c,
        }
    }

    fn minus(&self, other: &Expr) -> Expr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|&(v, a)| (v, -a)));
        Expr {
            terms,
            constant: self.constant - other.constant,
        }
    }
}

struct RetentionLp<'a> {
    instance: &'a Instance,
    state: &'a MultiplierState,
    p: usize,
    /// LP variable per (store, size) for alpha, or `None` if fixed.
    alpha_var: Vec<Option<usize>>,
    model: LpModel,
}

impl RetentionLp<'_> {
    fn alpha_term(&self, j: usize, k: usize, weight: f64, e: &mut Expr) {
        let sizes = self.instance.product(self.p).sizes;
        match self.alpha_var[j * sizes + k] {
            Some(v) => e.terms.push((v, weight)),
            None => e.constant += weight * self.state.alpha_at(self.instance, j, self.p)[k].to_f64(),
        }
    }

    fn keep(&self, i: usize) -> Expr {
        let h = self.instance.product(self.p).holding_cost.to_f64();
        let mut e = Expr::default();
        for (k, &s) in self.instance.stock(i, self.p).iter().enumerate() {
            if s > 0 {
                self.alpha_term(i, k, s as f64, &mut e);
                e.constant -= h * s as f64;
            }
        }
        e
    }

    fn ship(&self, i: usize, j: usize) -> Expr {
        let prod = self.instance.product(self.p);
        let unit = (prod.transfer_cost + prod.holding_cost).to_f64();
        let mut e = Expr::default();
        for (k, &s) in self.instance.stock(i, self.p).iter().enumerate() {
            if s > 0 {
                self.alpha_term(j, k, s as f64, &mut e);
                e.constant -= unit * s as f64;
            }
        }
        e.constant -= self.state.beta_at(self.instance, i, j, self.p).to_f64();
        e
    }

    fn le(&mut self, lhs: &Expr, rhs: &Expr) {
        let d = lhs.minus(rhs);
        self.model.add_sparse(&d.terms, Relation::Le, -d.constant);
    }

    fn eq(&mut self, lhs: &Expr, rhs: &Expr) {
        let d = lhs.minus(rhs);
        self.model.add_sparse(&d.terms, Relation::Eq, -d.constant);
    }
}

/// Retention LP for one product. Returns the product's new alpha values
/// (store-major over sizes) and its share of the bound.
fn retain_product(
    instance: &Instance,
    state: &MultiplierState,
    sub: &SubproblemSolution,
    status: &[StoreStatus],
    p: usize,
) -> Option<(Vec<Money>, f64)> {
    let n = instance.n_stores();
    let prod = instance.product(p);
    let sizes = prod.sizes;
    let cap = (prod.revenue + prod.holding_cost).to_f64();

    // alpha cells first, then one value variable per store holding p
    let mut alpha_var = vec![None; n * sizes];
    let mut n_vars = 0;
    for j in 0..n {
        for k in 0..sizes {
            let d = instance.demand(j, p)[k];
            // a cell with demand but no sales sits at alpha = r + h
            let frozen = d > 0 && sub.z[MultiplierState::alpha_index(instance, j, p, k)] == 0;
            if !frozen {
                alpha_var[j * sizes + k] = Some(n_vars);
                n_vars += 1;
            }
        }
    }
    let holders: Vec<usize> = (0..n).filter(|&i| instance.stock_total(i, p) > 0).collect();
    let mut t_var = vec![None; n];
    for &i in &holders {
        t_var[i] = Some(n_vars);
        n_vars += 1;
    }

    let mut objective = vec![0.0; n_vars];
    let mut constant = 0.0;
    for j in 0..n {
        for k in 0..sizes {
            let d = instance.demand(j, p)[k] as f64;
            constant += cap * d;
            match alpha_var[j * sizes + k] {
                Some(v) => objective[v] -= d,
                None => constant -= d * state.alpha_at(instance, j, p)[k].to_f64(),
            }
        }
    }
    for &i in &holders {
        objective[t_var[i].unwrap()] = 1.0;
    }
    let mut lp = RetentionLp {
        instance,
        state,
        p,
        alpha_var,
        model: LpModel::new(Sense::Minimize, objective),
    };
    for v in lp.alpha_var.clone().into_iter().flatten() {
        lp.model.set_bounds(v, 0.0, cap);
    }

    for &i in &holders {
        let tv = t_var[i].unwrap();
        lp.model.set_bounds(tv, f64::NEG_INFINITY, f64::INFINITY);
        let t = Expr::var(tv);
        let keep = lp.keep(i);
        let ships: Vec<(usize, Expr)> = (0..n).filter(|&j| j != i).map(|j| (j, lp.ship(i, j))).collect();
        let dest = sub.x.dest(i, p);
        let g_old = status[i].gains[p].to_f64();
        if dest == i {
            lp.eq(&t, &keep);
            // a slack store keeps p only while no shipment beats keeping;
            // a full knapsack tolerates gains up to the old one
            let allowed = Expr::constant(if status[i].slack { 0.0 } else { g_old.max(0.0) });
            for (_, e) in &ships {
                lp.le(&e.minus(&keep), &allowed);
            }
        } else {
            let chosen = ships.iter().find(|(j, _)| *j == dest).unwrap().1.clone();
            lp.eq(&t, &chosen);
            for (j, e) in &ships {
                if *j != dest {
                    lp.le(e, &chosen);
                }
            }
            let floor = Expr::constant(if status[i].slack { 0.0 } else { g_old });
            lp.le(&floor, &chosen.minus(&keep));
        }
    }

    let sol = solve_lp(&lp.model).ok()?;
    if !sol.is_optimal() {
        return None;
    }
    let cap_money = prod.revenue + prod.holding_cost;
    let mut alpha = Vec::with_capacity(n * sizes);
    for j in 0..n {
        let old = state.alpha_at(instance, j, p);
        for k in 0..sizes {
            alpha.push(match lp.alpha_var[j * sizes + k] {
                Some(v) => Money::from_f64(sol.values[v]).max(Money::ZERO).min(cap_money),
                None => old[k],
            });
        }
    }
    Some((alpha, sol.objective + constant))
}

/// Price per unit shipped from each store: the critical gain/weight ratio
/// of its knapsack when positive-gain items exceed the capacity, else 0.
fn capacity_prices(instance: &Instance, state: &MultiplierState) -> Vec<f64> {
    (0..instance.n_stores())
        .map(|i| {
            let Some(cap) = instance.store(i).sku_cap else {
                return 0.0;
            };
            let mut items: Vec<(f64, u64)> = (0..instance.n_products())
                .filter_map(|p| {
                    let c = item_choice(instance, state, i, p);
                    match c.gain() {
                        Some(g) if g.is_positive() && c.weight > 0 => Some((g.to_f64(), c.weight)),
                        _ => None,
                    }
                })
                .collect();
            if items.iter().map(|&(_, w)| w).sum::<u64>() <= cap {
                return 0.0;
            }
            items.sort_by(|a, b| (b.0 / b.1 as f64).total_cmp(&(a.0 / a.1 as f64)));
            let mut left = cap;
            for (g, w) in items {
                if w > left {
                    return g / w as f64;
                }
                left -= w;
            }
            0.0
        })
        .collect()
}

/// LP over fractional destination choices for one product. Shipping from
/// store `i` is charged `price[i]` per unit; only that part of the objective
/// changes between solves, so the basis is reused.
struct ProductLp {
    lp: WarmLp,
    /// Objective without capacity prices.
    base: Vec<f64>,
    /// `(store, units, shipment variables)` per holder.
    holders: Vec<(usize, f64, Vec<usize>)>,
    /// `(store, size, supply row)` per cell with demand.
    cells: Vec<(usize, usize, usize)>,
}

/// One solution of a product LP: new alpha (supply-row duals), LP optimum,
/// and the column it contributes to the capacity master.
struct PricedProduct {
    alpha: Vec<Money>,
    value: f64,
    /// Objective without capacity prices.
    base_value: f64,
    /// Units shipped per store.
    usage: Vec<(usize, f64)>,
}

impl ProductLp {
    fn build(instance: &Instance, state: &MultiplierState, p: usize) -> Option<ProductLp> {
        let n = instance.n_stores();
        let prod = instance.product(p);
        let (r, c, h) = (
            prod.revenue.to_f64(),
            prod.transfer_cost.to_f64(),
            prod.holding_cost.to_f64(),
        );
        let mut base = Vec::new();
        let mut holders = Vec::new();
        let mut x_var = vec![usize::MAX; n * n];
        for i in (0..n).filter(|&i| instance.stock_total(i, p) > 0) {
            let units = instance.stock_total(i, p) as f64;
            let mut ships = Vec::with_capacity(n - 1);
            for o in 0..n {
                x_var[i * n + o] = base.len();
                if o == i {
                    base.push(-h * units);
                } else {
                    ships.push(base.len());
                    base.push(-(c + h) * units - state.beta_at(instance, i, o, p).to_f64());
                }
            }
            holders.push((i, units, ships));
        }
        let mut z_cells = Vec::new();
        for j in 0..n {
            for (k, &d) in instance.demand(j, p).iter().enumerate() {
                if d > 0 {
                    z_cells.push((j, k, base.len()));
                    base.push(r + h);
                }
            }
        }
        let mut model = LpModel::new(Sense::Maximize, base.clone());
        let mut cells = Vec::with_capacity(z_cells.len());
        for &(j, k, zv) in &z_cells {
            model.set_bounds(zv, 0.0, instance.demand(j, p)[k] as f64);
            let mut terms = vec![(zv, 1.0)];
            for &(i, _, _) in &holders {
                let s = instance.stock(i, p)[k];
                if s > 0 {
                    terms.push((x_var[i * n + j], -(s as f64)));
                }
            }
            cells.push((j, k, model.add_sparse(&terms, Relation::Le, 0.0)));
        }
        for &(i, _, _) in &holders {
            let terms: Vec<(usize, f64)> = (0..n).map(|o| (x_var[i * n + o], 1.0)).collect();
            model.add_sparse(&terms, Relation::Eq, 1.0);
        }
        let lp = WarmLp::new(model).ok()?;
        Some(ProductLp { lp, base, holders, cells })
    }

    fn solve(&mut self, instance: &Instance, p: usize, price: &[f64]) -> Option<PricedProduct> {
        let mut objective = self.base.clone();
        for (i, units, ships) in &self.holders {
            for &v in ships {
                objective[v] -= price[*i] * units;
            }
        }
        self.lp.set_objective(objective);
        let sol = self.lp.solve().ok()?;
        if !sol.is_optimal() {
            return None;
        }
        let prod = instance.product(p);
        let sizes = prod.sizes;
        let cap = prod.revenue + prod.holding_cost;
        let mut alpha = vec![Money::ZERO; instance.n_stores() * sizes];
        for &(j, k, row) in &self.cells {
            alpha[j * sizes + k] = Money::from_f64(sol.duals[row]).max(Money::ZERO).min(cap);
        }
        let usage: Vec<(usize, f64)> = self
            .holders
            .iter()
            .map(|(i, units, ships)| (*i, units * ships.iter().map(|&v| sol.values[v]).sum::<f64>()))
            .collect();
        let charged: f64 = usage.iter().map(|&(i, u)| price[i] * u).sum();
        Some(PricedProduct {
            alpha,
            value: sol.objective,
            base_value: sol.objective + charged,
            usage,
        })
    }

    /// Objective of keeping every unit where it is.
    fn keep_value(&self, instance: &Instance, p: usize) -> f64 {
        let prod = instance.product(p);
        let h = prod.holding_cost.to_f64();
        let held: f64 = self.holders.iter().map(|&(_, units, _)| -h * units).sum();
        let sold: f64 = self
            .cells
            .iter()
            .map(|&(j, k, _)| instance.demand(j, p)[k].min(instance.stock(j, p)[k]) as f64)
            .sum();
        held + (prod.revenue + prod.holding_cost).to_f64() * sold
    }
}

/// Capacity prices from a restricted master LP: choose a convex
/// combination of the product solutions seen so far that respects every
/// store's unit capacity; the capacity rows' duals are the next prices.
struct CapacityMaster {
    /// `(product, value, usage)` per column.
    columns: Vec<(usize, f64, Vec<(usize, f64)>)>,
    /// Value of the last master solve; a lower bound on the LP relaxation.
    value: Option<f64>,
}

impl CapacityMaster {
    fn new() -> Self {
        CapacityMaster {
            columns: Vec::new(),
            value: None,
        }
    }

    fn add(&mut self, p: usize, value: f64, usage: Vec<(usize, f64)>) {
        let usage: Vec<(usize, f64)> = usage.into_iter().filter(|&(_, u)| u > 1e-9).collect();
        let duplicate = self.columns.iter().any(|(q, v, u)| {
            *q == p
                && (v - value).abs() <= 1e-6 * (1.0 + value.abs())
                && u.len() == usage.len()
                && u.iter().zip(&usage).all(|(a, b)| a.0 == b.0 && (a.1 - b.1).abs() <= 1e-6)
        });
        if !duplicate {
            self.columns.push((p, value, usage));
        }
    }

    /// New prices, or `None` when the master could not be solved.
    fn prices(&mut self, instance: &Instance) -> Option<Vec<f64>> {
        let n = instance.n_stores();
        let objective: Vec<f64> = self.columns.iter().map(|c| c.1).collect();
        let mut model = LpModel::new(Sense::Maximize, objective);
        let mut cap_rows = vec![None; n];
        for (i, row) in cap_rows.iter_mut().enumerate() {
            if let Some(a) = instance.store(i).sku_cap {
                let terms: Vec<(usize, f64)> = self
                    .columns
                    .iter()
                    .enumerate()
                    .filter_map(|(c, col)| col.2.iter().find(|u| u.0 == i).map(|u| (c, u.1)))
                    .collect();
                if !terms.is_empty() {
                    *row = Some(model.add_sparse(&terms, Relation::Le, a as f64));
                }
            }
        }
        for p in 0..instance.n_products() {
            let terms: Vec<(usize, f64)> = self
                .columns
                .iter()
                .enumerate()
                .filter(|(_, col)| col.0 == p)
                .map(|(c, _)| (c, 1.0))
                .collect();
            if !terms.is_empty() {
                model.add_sparse(&terms, Relation::Eq, 1.0);
            }
        }
        let sol = solve_lp(&model).ok().filter(|s| s.is_optimal())?;
        self.value = Some(sol.objective);
        Some(cap_rows.iter().map(|r| r.map_or(0.0, |r| sol.duals[r].max(0.0))).collect())
    }
}

/// State carried across [`RefineRule::Price`] steps: warm product LPs and
/// the capacity master.
struct PriceEngine {
    products: Vec<Option<ProductLp>>,
    master: CapacityMaster,
    price: Vec<f64>,
    /// Connection multipliers fixed for the whole run.
    beta: Vec<Money>,
}

impl PriceEngine {
    fn new(instance: &Instance, state: &MultiplierState) -> Self {
        let n = instance.n_stores();
        let mut fixed = state.clone();
        // a store that may not connect anywhere gets the largest allowed
        // connection price on every pair
        for i in (0..n).filter(|&i| instance.store(i).dest_cap == Some(0)) {
            for p in 0..instance.n_products() {
                let bmax = beta_max(instance, i, p);
                for j in (0..n).filter(|&j| j != i) {
                    fixed.beta[beta_index(instance, i, j, p)] = bmax;
                }
            }
        }
        let products: Vec<Option<ProductLp>> = (0..instance.n_products())
            .into_par_iter()
            .map(|p| ProductLp::build(instance, &fixed, p))
            .collect();
        let mut master = CapacityMaster::new();
        for (p, lp) in products.iter().enumerate() {
            if let Some(lp) = lp {
                master.add(p, lp.keep_value(instance, p), Vec::new());
            }
        }
        PriceEngine {
            products,
            master,
            price: capacity_prices(instance, &fixed),
            beta: fixed.beta,
        }
    }

    fn step(&mut self, instance: &Instance, state: &MultiplierState) -> (MultiplierState, Vec<Option<(Vec<Money>, f64)>>, f64) {
        let mut next = state.clone();
        next.beta.clone_from(&self.beta);
        let price = &self.price;
        let priced: Vec<Option<PricedProduct>> = self
            .products
            .par_iter_mut()
            .enumerate()
            .map(|(p, lp)| lp.as_mut().and_then(|lp| lp.solve(instance, p, price)))
            .collect();
        let capacity_term: f64 = (0..instance.n_stores())
            .map(|i| price[i] * instance.store(i).sku_cap.unwrap_or(0) as f64)
            .sum();
        let (_, value_y) = solve_subproblem_y(instance, &next);
        let results = priced
            .into_iter()
            .enumerate()
            .map(|(p, r)| match r {
                Some(r) => {
                    self.master.add(p, r.base_value, r.usage);
                    Some((r.alpha, r.value))
                }
                None => Some((Vec::new(), price_share(instance, &next, price, p))),
            })
            .collect();
        if let Some(price) = self.master.prices(instance) {
            self.price = price;
        }
        (next, results, capacity_term + value_y.to_f64())
    }
}

/// The priced bound estimate for one product at the given multipliers:
/// sales terms plus, per holder, the best of keeping and each shipment
/// net of the capacity price.
fn price_share(instance: &Instance, state: &MultiplierState, price: &[f64], p: usize) -> f64 {
    let prod = instance.product(p);
    let mut total = 0.0;
    for j in 0..instance.n_stores() {
        for (k, &d) in instance.demand(j, p).iter().enumerate() {
            let coef = prod.revenue + prod.holding_cost - state.alpha_at(instance, j, p)[k];
            total += (coef.max(Money::ZERO) * d).to_f64();
        }
        if instance.stock_total(j, p) > 0 {
            let c = item_choice(instance, state, j, p);
            let ship = c
                .best
                .map_or(f64::NEG_INFINITY, |(_, v)| v.to_f64() - price[j] * c.weight as f64);
            total += c.keep.to_f64().max(ship);
        }
    }
    total
}

/// Bound share of product `p` with the realised choices held fixed.
fn retained_share(instance: &Instance, state: &MultiplierState, sub: &SubproblemSolution, p: usize) -> f64 {
    let prod = instance.product(p);
    let mut total = Money::ZERO;
    for j in 0..instance.n_stores() {
        for (k, &d) in instance.demand(j, p).iter().enumerate() {
            let coef = prod.revenue + prod.holding_cost - state.alpha_at(instance, j, p)[k];
            total += coef.max(Money::ZERO) * d;
        }
        if instance.stock_total(j, p) > 0 {
            let dest = sub.x.dest(j, p);
            total += if dest == j {
                keep_value(instance, state, j, p)
            } else {
                ship_value(instance, state, j, dest, p)
            };
        }
    }
    total.to_f64()
}

/// One refinement step from `state`, whose subproblem solutions are `sub`.
/// Products are independent once the connection multipliers and capacity
/// prices are fixed, so one LP is solved per product.
pub fn refine_multipliers(
    instance: &Instance,
    sub: &SubproblemSolution,
    state: &MultiplierState,
    rule: RefineRule,
) -> RefineOutcome {
    let mut engine = (rule == RefineRule::Price).then(|| PriceEngine::new(instance, state));
    refine_step(instance, sub, state, rule, engine.as_mut())
}

fn refine_step(
    instance: &Instance,
    sub: &SubproblemSolution,
    state: &MultiplierState,
    rule: RefineRule,
    engine: Option<&mut PriceEngine>,
) -> RefineOutcome {
    let n = instance.n_stores();
    let (mut next, results, fixed): (MultiplierState, Vec<Option<(Vec<Money>, f64)>>, f64) = match (rule, engine) {
        (RefineRule::Price, Some(engine)) => engine.step(instance, state),
        (RefineRule::Price, None) => PriceEngine::new(instance, state).step(instance, state),
        (RefineRule::Retain, _) => {
            let status: Vec<StoreStatus> = (0..n).map(|i| store_status(instance, state, &sub.x, i)).collect();
            let res = (0..instance.n_products())
                .into_par_iter()
                .map(|p| retain_product(instance, state, sub, &status, p))
                .collect();
            (state.clone(), res, sub.value_y.to_f64())
        }
    };

    let mut delta = fixed;
    let mut conflicts = 0;
    for (p, res) in results.into_iter().enumerate() {
        let sizes = instance.product(p).sizes;
        match res {
            Some((alpha, value)) if !alpha.is_empty() => {
                delta += value;
                for j in 0..n {
                    for k in 0..sizes {
                        next.alpha[MultiplierState::alpha_index(instance, j, p, k)] = alpha[j * sizes + k];
                    }
                }
            }
            Some((_, value)) => {
                conflicts += 1;
                delta += value;
            }
            None => {
                conflicts += 1;
                delta += retained_share(instance, state, sub, p);
            }
        }
    }
    RefineOutcome {
        state: next,
        delta,
        conflicts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianConfig {
    /// Refinement steps after the initial bound.
    pub max_iterations: usize,
    /// Stop when a step improves the bound by less than this fraction.
    pub tolerance: f64,
    pub rule: RefineRule,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        LagrangianConfig {
            max_iterations: 50,
            tolerance: 1e-4,
            rule: RefineRule::Price,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianRun {
    /// Upper bound, timing and the best-so-far bound after each step.
    pub report: BoundReport,
    /// Multipliers attaining the best bound.
    pub best_state: MultiplierState,
    pub iterations: usize,
    /// Product LPs that failed across all steps.
    pub conflicts: usize,
    /// Set when the run stopped on the time limit.
    pub truncated: bool,
}

/// Alternates subproblem solves and refinement steps from the initial
/// multipliers, reporting the lowest bound seen.
pub fn run(instance: &Instance, config: &LagrangianConfig) -> LagrangianRun {
    run_from(instance, MultiplierState::initial(instance), config)
}

pub fn run_from(instance: &Instance, start: MultiplierState, config: &LagrangianConfig) -> LagrangianRun {
    let started = Instant::now();
    let mut state = start;
    let mut sub = solve_subproblems(instance, &state);
    let mut best = compute_upper_bound(&sub);
    let mut best_state = state.clone();
    let mut trace = vec![BoundPoint {
        iteration: 0,
        lower: None,
        upper: Some(best),
    }];
    let mut conflicts = 0;
    let mut truncated = false;
    let mut iterations = 0;
    let mut engine = (config.rule == RefineRule::Price).then(|| PriceEngine::new(instance, &state));
    let mut stalled = 0;
    while iterations < config.max_iterations {
        if config
            .time_limit
            .is_some_and(|limit| started.elapsed().as_secs_f64() >= limit)
        {
            truncated = true;
            break;
        }
        let outcome = refine_step(instance, &sub, &state, config.rule, engine.as_mut());
        iterations += 1;
        conflicts += outcome.conflicts;
        state = outcome.state;
        sub = solve_subproblems(instance, &state);
        let next = compute_upper_bound(&sub);
        let previous = best;
        if next < best {
            best = next;
            best_state = state.clone();
        }
        trace.push(BoundPoint {
            iteration: iterations,
            lower: None,
            upper: Some(best),
        });
        let scale = previous.to_f64().abs().max(1e-9);
        if (previous - best).to_f64() / scale < config.tolerance {
            stalled += 1;
        } else {
            stalled = 0;
        }
        // price steps are not monotone, so they get a few chances to recover
        let patience = match config.rule {
            RefineRule::Retain => 1,
            RefineRule::Price => 8,
        };
        let closed = engine
            .as_ref()
            .and_then(|e| e.master.value)
            .is_some_and(|v| best.to_f64() - v <= config.tolerance * scale);
        if stalled >= patience || closed {
            break;
        }
    }
    LagrangianRun {
        report: BoundReport {
            lower_bound: None,
            upper_bound: Some(best),
            wall_time: started.elapsed().as_secs_f64(),
            trace,
        },
        best_state,
        iterations,
        conflicts,
        truncated,
    }
}
