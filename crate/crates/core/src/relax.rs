//! The three progressively constrained fractional-flow models: plain
//! transportation, plus the per-store unit cap, plus the per-store
//! destination count.

use std::collections::BTreeSet;

use crate::lp::{self, LpError, LpModel, LpSolution, LpStatus, Relation, Sense, WarmLp};
use crate::model::Instance;

/// Units of one SKU moved between two distinct stores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub from: usize,
    pub to: usize,
    pub product: usize,
    pub size: usize,
    pub qty: f64,
}

/// Off-diagonal flows of a relaxed solution; whatever is not shipped stays
/// at its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedFlow {
    pub flows: Vec<Flow>,
    pub objective: f64,
}

impl RelaxedFlow {
    fn from_flows(instance: &Instance, flows: Vec<Flow>) -> Self {
        let objective = evaluate_flows(instance, &flows);
        RelaxedFlow { flows, objective }
    }

    /// Total units shipped out of each store.
    pub fn shipped_units(&self, n_stores: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_stores];
        for f in &self.flows {
            out[f.from] += f.qty;
        }
        out
    }

    /// Distinct destinations used by each store.
    pub fn destinations(&self, n_stores: usize) -> Vec<BTreeSet<usize>> {
        let mut out = vec![BTreeSet::new(); n_stores];
        for f in &self.flows {
            out[f.from].insert(f.to);
        }
        out
    }

    pub fn connections(&self) -> BTreeSet<(usize, usize)> {
        self.flows.iter().map(|f| (f.from, f.to)).collect()
    }

    /// Number of `(product, size, origin -> destination)` triples with
    /// positive flow.
    pub fn sku_triples(&self) -> usize {
        self.flows.iter().filter(|f| f.qty > 1e-9).count()
    }
}

/// Objective of a fractional flow: sales revenue less transfer cost less
/// holding cost on unsold stock, with sales at `min(w, d)`.
pub fn evaluate_flows(instance: &Instance, flows: &[Flow]) -> f64 {
    let n_skus = instance.n_skus();
    let mut held: Vec<f64> = instance.stock_flat().iter().map(|&s| s as f64).collect();
    let mut cost = 0.0;
    for f in flows {
        let col = instance.sku_offset(f.product) + f.size;
        held[f.from * n_skus + col] -= f.qty;
        held[f.to * n_skus + col] += f.qty;
        cost += instance.product(f.product).transfer_cost.to_f64() * f.qty;
    }
    let mut total = -cost;
    for i in 0..instance.n_stores() {
        for (p, prod) in instance.products().iter().enumerate() {
            let base = i * n_skus + instance.sku_offset(p);
            for (k, &d) in instance.demand(i, p).iter().enumerate() {
                let w = held[base + k];
                let z = w.min(d as f64);
                total += prod.revenue.to_f64() * z - prod.holding_cost.to_f64() * (w - z);
            }
        }
    }
    total
}

/// Optimal flow for the uncapacitated model.
///
/// Costs do not depend on the origin-destination pair, so each SKU is
/// independent: local demand is served first, then `min(surplus, deficit)`
/// units move from surplus to deficit stores whenever a moved unit earns
/// `r - c + h > 0`. Surplus and deficit stores are paired in ascending
/// index order, which fixes one optimum among many.
pub fn solve_unconstrained(instance: &Instance) -> RelaxedFlow {
    let n = instance.n_stores();
    let mut flows = Vec::new();
    for (p, prod) in instance.products().iter().enumerate() {
        if !(prod.revenue - prod.transfer_cost + prod.holding_cost).is_positive() {
            continue;
        }
        for k in 0..prod.sizes {
            let mut surplus: Vec<(usize, u32)> = Vec::new();
            let mut deficit: Vec<(usize, u32)> = Vec::new();
            for i in 0..n {
                let s = instance.stock(i, p)[k];
                let d = instance.demand(i, p)[k];
                if s > d {
                    surplus.push((i, s - d));
                } else if d > s {
                    deficit.push((i, d - s));
                }
            }
            let (mut a, mut b) = (0, 0);
            while a < surplus.len() && b < deficit.len() {
                let q = surplus[a].1.min(deficit[b].1);
                flows.push(Flow {
                    from: surplus[a].0,
                    to: deficit[b].0,
                    product: p,
                    size: k,
                    qty: q as f64,
                });
                surplus[a].1 -= q;
                deficit[b].1 -= q;
                if surplus[a].1 == 0 {
                    a += 1;
                }
                if deficit[b].1 == 0 {
                    b += 1;
                }
            }
        }
    }
    RelaxedFlow::from_flows(instance, flows)
}

const INTEGRAL_TOL: f64 = 1e-6;

/// LP of the transportation model plus the per-store unit cap, solved with
/// aggregated per-store out/in variables (costs are pair-independent, so
/// any balanced out/in pattern is realisable by pairwise flows).
pub fn solve_capacitated_a(instance: &Instance) -> Result<RelaxedFlow, LpError> {
    let n = instance.n_stores();
    let n_skus = instance.n_skus();
    let cells = n * n_skus;
    // variables: out[cell], in[cell], z[cell]
    let out_var = |c: usize| c;
    let in_var = |c: usize| cells + c;
    let z_var = |c: usize| 2 * cells + c;

    let mut objective = vec![0.0; 3 * cells];
    let mut lp_model = LpModel::new(Sense::Maximize, vec![]);
    for i in 0..n {
        for (p, prod) in instance.products().iter().enumerate() {
            for k in 0..prod.sizes {
                let c = i * n_skus + instance.sku_offset(p) + k;
                objective[out_var(c)] = -prod.transfer_cost.to_f64();
                objective[z_var(c)] = (prod.revenue + prod.holding_cost).to_f64();
            }
        }
    }
    lp_model.objective = objective;
    lp_model.lower = vec![0.0; 3 * cells];
    lp_model.upper = vec![f64::INFINITY; 3 * cells];
    let stock = instance.stock_flat();
    let demand = instance.demand_flat();
    for c in 0..cells {
        lp_model.upper[out_var(c)] = stock[c] as f64;
        lp_model.upper[z_var(c)] = demand[c] as f64;
        if stock[c] == 0 {
            lp_model.upper[out_var(c)] = 0.0;
        }
        if demand[c] == 0 {
            lp_model.upper[in_var(c)] = 0.0;
        }
        // z <= s - out + in
        lp_model.add_sparse(
            &[(z_var(c), 1.0), (out_var(c), 1.0), (in_var(c), -1.0)],
            Relation::Le,
            stock[c] as f64,
        );
    }
    for sku in 0..n_skus {
        let mut terms = Vec::with_capacity(2 * n);
        for i in 0..n {
            terms.push((out_var(i * n_skus + sku), 1.0));
            terms.push((in_var(i * n_skus + sku), -1.0));
        }
        lp_model.add_sparse(&terms, Relation::Eq, 0.0);
    }
    for i in 0..n {
        if let Some(cap) = instance.store(i).sku_cap {
            let terms: Vec<_> = (0..n_skus).map(|s| (out_var(i * n_skus + s), 1.0)).collect();
            lp_model.add_sparse(&terms, Relation::Le, cap as f64);
        }
    }
    drop_empty_variables(&mut lp_model);
    let sol = lp::solve_lp(&lp_model)?;
    if sol.status != LpStatus::Optimal {
        return Err(LpError::Malformed(format!(
            "capacitated transportation model reported {:?}",
            sol.status
        )));
    }

    let mut flows = Vec::new();
    for (p, prod) in instance.products().iter().enumerate() {
        for k in 0..prod.sizes {
            let sku = instance.sku_offset(p) + k;
            let mut senders = Vec::new();
            let mut receivers = Vec::new();
            for i in 0..n {
                let c = i * n_skus + sku;
                let o = sol.values[out_var(c)];
                let r = sol.values[in_var(c)];
                let net = o - r;
                if net > INTEGRAL_TOL {
                    senders.push((i, net));
                } else if net < -INTEGRAL_TOL {
                    receivers.push((i, -net));
                }
            }
            pair_flows(&mut flows, p, k, senders, receivers);
        }
    }
    Ok(RelaxedFlow::from_flows(instance, flows))
}

fn pair_flows(
    flows: &mut Vec<Flow>,
    product: usize,
    size: usize,
    mut senders: Vec<(usize, f64)>,
    mut receivers: Vec<(usize, f64)>,
) {
    let (mut a, mut b) = (0, 0);
    while a < senders.len() && b < receivers.len() {
        let q = senders[a].1.min(receivers[b].1);
        if q > INTEGRAL_TOL {
            flows.push(Flow {
                from: senders[a].0,
                to: receivers[b].0,
                product,
                size,
                qty: q,
            });
        }
        senders[a].1 -= q;
        receivers[b].1 -= q;
        if senders[a].1 <= INTEGRAL_TOL {
            a += 1;
        }
        if receivers[b].1 <= INTEGRAL_TOL {
            b += 1;
        }
    }
}

/// Variables fixed at zero by their bounds add nothing but pivots; zero
/// their column so the standard form stays equivalent.
fn drop_empty_variables(model: &mut LpModel) {
    for v in 0..model.n_vars() {
        if model.upper[v] == 0.0 && model.lower[v] == 0.0 {
            model.objective[v] = 0.0;
            for row in &mut model.constraints {
                row.coeffs[v] = 0.0;
            }
        }
    }
}

/// Node budget for the connection branch-and-bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbBudget {
    pub max_nodes: usize,
    /// Relative gap below which a node is not explored.
    pub rel_gap: f64,
}

impl Default for BnbBudget {
    fn default() -> Self {
        BnbBudget {
            max_nodes: 20_000,
            rel_gap: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectedFlow {
    pub flow: RelaxedFlow,
    /// Pairs with `y_ij = 1` in the incumbent.
    pub connections: BTreeSet<(usize, usize)>,
    /// `true` when the search closed; otherwise `bound` caps the optimum.
    pub exact: bool,
    pub bound: f64,
    pub nodes: usize,
}

/// Pair-indexed LP template for the destination-count model.
struct AbModel {
    lp: LpModel,
    /// `(from, to, product, size)` per flow variable.
    flow_vars: Vec<(usize, usize, usize, usize)>,
    /// `(from, to)` per connection variable, starting at `y_base`.
    pairs: Vec<(usize, usize)>,
    y_base: usize,
    /// `-sum h s`, left out of the LP objective.
    constant: f64,
    /// Upper limit on the objective change from opening one pair.
    pair_value: Vec<f64>,
}

fn build_ab_model(instance: &Instance) -> AbModel {
    let n = instance.n_stores();
    let n_skus = instance.n_skus();
    let cells = n * n_skus;
    let stock = instance.stock_flat();
    let demand = instance.demand_flat();

    // Flows worth modelling: origin has stock, destination has demand.
    let mut flow_vars = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for (p, prod) in instance.products().iter().enumerate() {
                for k in 0..prod.sizes {
                    let col = instance.sku_offset(p) + k;
                    if stock[i * n_skus + col] > 0 && demand[j * n_skus + col] > 0 {
                        flow_vars.push((i, j, p, k));
                    }
                }
            }
        }
    }
    let pairs: Vec<(usize, usize)> = flow_vars
        .iter()
        .map(|&(i, j, _, _)| (i, j))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let z_base = flow_vars.len();
    let y_base = z_base + cells;
    let n_vars = y_base + pairs.len();

    let mut objective = vec![0.0; n_vars];
    let mut lp_model = LpModel::new(Sense::Maximize, vec![0.0; n_vars]);
    for (v, &(_, _, p, _)) in flow_vars.iter().enumerate() {
        objective[v] = -instance.product(p).transfer_cost.to_f64();
    }
    for i in 0..n {
        for (p, prod) in instance.products().iter().enumerate() {
            for k in 0..prod.sizes {
                let c = i * n_skus + instance.sku_offset(p) + k;
                objective[z_base + c] = (prod.revenue + prod.holding_cost).to_f64();
                lp_model.upper[z_base + c] = demand[c] as f64;
            }
        }
    }
    for y in 0..pairs.len() {
        lp_model.upper[y_base + y] = 1.0;
    }
    lp_model.objective = objective;

    let mut out_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cells];
    let mut in_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cells];
    let mut store_out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut pair_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); pairs.len()];
    for (v, &(i, j, p, k)) in flow_vars.iter().enumerate() {
        let col = instance.sku_offset(p) + k;
        out_terms[i * n_skus + col].push((v, 1.0));
        in_terms[j * n_skus + col].push((v, 1.0));
        store_out[i].push((v, 1.0));
        let y = pairs.binary_search(&(i, j)).unwrap();
        pair_terms[y].push((v, 1.0));
    }
    for c in 0..cells {
        if !out_terms[c].is_empty() {
            lp_model.add_sparse(&out_terms[c], Relation::Le, stock[c] as f64);
        }
        // z + out - in <= s
        let mut terms = vec![(z_base + c, 1.0)];
        terms.extend(out_terms[c].iter().copied());
        terms.extend(in_terms[c].iter().map(|&(v, a)| (v, -a)));
        lp_model.add_sparse(&terms, Relation::Le, stock[c] as f64);
    }
    for i in 0..n {
        if let Some(cap) = instance.store(i).sku_cap {
            if !store_out[i].is_empty() {
                lp_model.add_sparse(&store_out[i], Relation::Le, cap as f64);
            }
        }
        if let Some(cap) = instance.store(i).dest_cap {
            let terms: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(_, &(a, _))| a == i)
                .map(|(y, _)| (y_base + y, 1.0))
                .collect();
            if !terms.is_empty() {
                lp_model.add_sparse(&terms, Relation::Le, cap as f64);
            }
        }
    }
    // Aggregated linking: total flow on (i, j) <= (stock of i) * y_ij.
    let unit_max = instance
        .products()
        .iter()
        .map(|p| (p.revenue + p.holding_cost).to_f64())
        .fold(0.0, f64::max);
    let mut pair_value = Vec::with_capacity(pairs.len());
    for (y, &(i, _)) in pairs.iter().enumerate() {
        let total: u64 = (0..instance.n_products()).map(|p| instance.stock_total(i, p)).sum();
        pair_value.push(total as f64 * unit_max);
        let mut terms = pair_terms[y].clone();
        terms.push((y_base + y, -(total as f64)));
        lp_model.add_sparse(&terms, Relation::Le, 0.0);
    }
    let constant = -(0..n)
        .flat_map(|i| (0..instance.n_products()).map(move |p| (i, p)))
        .map(|(i, p)| instance.product(p).holding_cost.to_f64() * instance.stock_total(i, p) as f64)
        .sum::<f64>();
    AbModel {
        lp: lp_model,
        flow_vars,
        pairs,
        y_base,
        constant,
        pair_value,
    }
}

struct Node {
    fixed: Vec<Option<bool>>,
    parent_bound: f64,
}

/// `false` when the connections fixed open already exceed some `B_i`.
fn fixings_fit(instance: &Instance, pairs: &[(usize, usize)], fixed: &[Option<bool>]) -> bool {
    let mut open = vec![0u64; instance.n_stores()];
    for (&(i, _), f) in pairs.iter().zip(fixed) {
        if *f == Some(true) {
            open[i] += 1;
        }
    }
    (0..instance.n_stores()).all(|i| instance.store(i).dest_cap.is_none_or(|b| open[i] <= b))
}

/// Node relaxation: fixings enter as exact penalties on the connection
/// variables, so every node re-solves from the previous basis without
/// touching the rows. Each penalty exceeds the largest value the pair's
/// linking row can carry. Falls back to a cold solve with fixed bounds if
/// a penalised variable ends off its target. Returns the solution and its
/// bound including the constant term, or `None` when the node is
/// infeasible.
fn node_lp(template: &AbModel, warm: &mut WarmLp, fixed: &[Option<bool>]) -> Result<Option<(LpSolution, f64)>, LpError> {
    let mut objective = template.lp.objective.clone();
    for (y, f) in fixed.iter().enumerate() {
        if let Some(open) = f {
            let penalty = 2.0 * template.pair_value[y] + 1.0;
            objective[template.y_base + y] = if *open { penalty } else { -penalty };
        }
    }
    warm.set_objective(objective);
    let mut sol = warm.solve()?;
    let on_target = sol.status == LpStatus::Optimal
        && fixed.iter().enumerate().all(|(y, f)| {
            let v = sol.values[template.y_base + y];
            match f {
                Some(true) => v >= 1.0 - INTEGRAL_TOL,
                Some(false) => v <= INTEGRAL_TOL,
                None => true,
            }
        });
    if !on_target {
        let mut model = template.lp.clone();
        for (y, f) in fixed.iter().enumerate() {
            if let Some(open) = f {
                let v = if *open { 1.0 } else { 0.0 };
                model.set_bounds(template.y_base + y, v, v);
            }
        }
        sol = lp::solve_lp(&model)?;
        if sol.status != LpStatus::Optimal {
            return Ok(None);
        }
    }
    let value: f64 = template.lp.objective.iter().zip(&sol.values).map(|(c, x)| c * x).sum();
    Ok(Some((sol, value + template.constant)))
}

/// Branch-and-bound over the binary connection variables `y_ij`, bounding
/// each node with the LP relaxation `y in [0, 1]`. Branches on the most
/// fractional `y`, depth-first, jumping to the best open bound every 1000
/// nodes. Nodes whose bound is within `budget.rel_gap` of the incumbent
/// are pruned, and the reported bound still covers them.
pub fn solve_capacitated_ab(instance: &Instance, budget: BnbBudget) -> Result<ConnectedFlow, LpError> {
    let template = build_ab_model(instance);
    let n_pairs = template.pairs.len();
    let mut warm = WarmLp::new(template.lp.clone())?;
    let keep_value = evaluate_flows(instance, &[]);
    let mut incumbent: (f64, Vec<Flow>, BTreeSet<(usize, usize)>) = (keep_value, Vec::new(), BTreeSet::new());
    let mut open = vec![Node {
        fixed: vec![None; n_pairs],
        parent_bound: f64::INFINITY,
    }];
    let mut nodes = 0;
    let strictly = |bound: f64, inc: f64| bound > inc + 1e-9 * (1.0 + inc.abs());
    let improves = |bound: f64, inc: f64| strictly(bound, inc) && bound > inc + budget.rel_gap * inc.abs();
    // largest bound among nodes dropped only by the gap tolerance
    let mut dropped = f64::NEG_INFINITY;

    while let Some(node) = {
        if nodes > 0 && nodes % 1000 == 0 && open.len() > 1 {
            let best = (0..open.len())
                .max_by(|&a, &b| open[a].parent_bound.total_cmp(&open[b].parent_bound))
                .unwrap();
            let last = open.len() - 1;
            open.swap(best, last);
        }
        open.pop()
    } {
        if !improves(node.parent_bound, incumbent.0) {
            if strictly(node.parent_bound, incumbent.0) {
                dropped = dropped.max(node.parent_bound);
            }
            continue;
        }
        if nodes >= budget.max_nodes {
            open.push(node);
            break;
        }
        nodes += 1;
        if !fixings_fit(instance, &template.pairs, &node.fixed) {
            continue;
        }
        let Some((sol, bound)) = node_lp(&template, &mut warm, &node.fixed)? else {
            continue;
        };
        if !improves(bound, incumbent.0) {
            if strictly(bound, incumbent.0) {
                dropped = dropped.max(bound);
            }
            continue;
        }
        let branch = (0..n_pairs)
            .filter(|&y| node.fixed[y].is_none())
            .map(|y| (y, sol.values[template.y_base + y]))
            .filter(|&(_, v)| v > INTEGRAL_TOL && v < 1.0 - INTEGRAL_TOL)
            .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()));
        match branch {
            None => {
                let flows: Vec<Flow> = template
                    .flow_vars
                    .iter()
                    .zip(&sol.values)
                    .filter(|(_, &q)| q > INTEGRAL_TOL)
                    .map(|(&(i, j, p, k), &q)| Flow {
                        from: i,
                        to: j,
                        product: p,
                        size: k,
                        qty: q,
                    })
                    .collect();
                let connections = flows.iter().map(|f| (f.from, f.to)).collect();
                let value = evaluate_flows(instance, &flows);
                if value > incumbent.0 {
                    incumbent = (value, flows, connections);
                }
            }
            Some((y, _)) => {
                let mut down = node.fixed.clone();
                down[y] = Some(false);
                let mut up = node.fixed;
                up[y] = Some(true);
                open.push(Node {
                    fixed: down,
                    parent_bound: bound,
                });
                open.push(Node {
                    fixed: up,
                    parent_bound: bound,
                });
            }
        }
    }

    let open_bound = open
        .iter()
        .map(|n| n.parent_bound)
        .chain([dropped])
        .filter(|&b| strictly(b, incumbent.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let exact = open_bound == f64::NEG_INFINITY;
    let (value, flows, connections) = incumbent;
    Ok(ConnectedFlow {
        flow: RelaxedFlow {
            flows,
            objective: value,
        },
        connections,
        exact,
        bound: if exact { value } else { open_bound.max(value) },
        nodes,
    })
}
