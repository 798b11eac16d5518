//! Lower bounds: a sender/receiver construction heuristic followed by
//! destroy/repair simulated annealing.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{destination_value, Instance, TransferPlan};
use crate::money::Money;

/// A plan together with the bookkeeping needed to score and check single
/// reassignments in time proportional to the number of sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanState<'a> {
    instance: &'a Instance,
    plan: TransferPlan,
    /// Post-transfer holdings per SKU cell, flat layout.
    held: Vec<u32>,
    /// Post-transfer holdings per (store, product), summed over sizes.
    held_total: Vec<u64>,
    /// Incoming transfers per (store, product).
    incoming: Vec<u32>,
    /// Units shipped out per store.
    shipped: Vec<u64>,
    /// Products shipped per (origin, destination) pair.
    links: Vec<u32>,
    /// Distinct destinations per store.
    connections: Vec<u64>,
    objective: Money,
}

impl<'a> PlanState<'a> {
    pub fn new(instance: &'a Instance, plan: TransferPlan) -> Self {
        let n = instance.n_stores();
        let n_products = instance.n_products();
        let mut st = PlanState {
            instance,
            plan: TransferPlan::keep_all(n, n_products),
            held: instance.stock_flat().to_vec(),
            held_total: vec![0; n * n_products],
            incoming: vec![0; n * n_products],
            shipped: vec![0; n],
            links: vec![0; n * n],
            connections: vec![0; n],
            objective: Money::ZERO,
        };
        for j in 0..n {
            for p in 0..n_products {
                st.held_total[j * n_products + p] = instance.stock_total(j, p);
                st.objective += st.value_at(j, p);
            }
        }
        for i in 0..n {
            for p in 0..n_products {
                let j = plan.dest(i, p);
                if j != i {
                    st.apply(i, p, j);
                }
            }
        }
        st
    }

    pub fn plan(&self) -> &TransferPlan {
        &self.plan
    }

    pub fn into_plan(self) -> TransferPlan {
        self.plan
    }

    pub fn objective(&self) -> Money {
        self.objective
    }

    fn cell_range(&self, j: usize, p: usize) -> std::ops::Range<usize> {
        let lo = j * self.instance.n_skus() + self.instance.sku_offset(p);
        lo..lo + self.instance.product(p).sizes
    }

    fn value_at(&self, j: usize, p: usize) -> Money {
        destination_value(
            self.instance.product(p),
            &self.held[self.cell_range(j, p)],
            self.instance.demand(j, p),
        )
    }

    /// Value at `j` for product `p` if `stock` were added (`sign = 1`) or
    /// removed (`sign = -1`).
    fn value_with(&self, j: usize, p: usize, stock: &[u32], sign: i64) -> Money {
        let prod = self.instance.product(p);
        self.held[self.cell_range(j, p)]
            .iter()
            .zip(stock)
            .zip(self.instance.demand(j, p))
            .map(|((&w, &s), &d)| {
                let w = (w as i64 + sign * s as i64) as u32;
                let z = w.min(d);
                prod.revenue * z - prod.holding_cost * (w - z)
            })
            .sum()
    }

    /// Total demand minus total holdings of `p` at `j`.
    pub fn residual(&self, j: usize, p: usize) -> i64 {
        self.instance.demand_total(j, p) as i64 - self.held_total[j * self.instance.n_products() + p] as i64
    }

    /// Post-transfer holdings of `p` at `j`, per size.
    pub fn held(&self, j: usize, p: usize) -> &[u32] {
        &self.held[self.cell_range(j, p)]
    }

    pub fn incoming(&self, j: usize, p: usize) -> u32 {
        self.incoming[j * self.instance.n_products() + p]
    }

    /// Objective change from sending `(i, p)` to `to` instead of its
    /// current destination.
    pub fn move_delta(&self, i: usize, p: usize, to: usize) -> Money {
        let from = self.plan.dest(i, p);
        if from == to {
            return Money::ZERO;
        }
        let stock = self.instance.stock(i, p);
        let units = self.instance.stock_total(i, p) as i64;
        let c = self.instance.product(p).transfer_cost;
        let mut delta = self.value_with(from, p, stock, -1) - self.value_at(from, p)
            + self.value_with(to, p, stock, 1)
            - self.value_at(to, p);
        if from != i {
            delta += c * units;
        }
        if to != i {
            delta -= c * units;
        }
        delta
    }

    /// Whether reassigning `(i, p)` to `to` keeps store `i` within its unit
    /// and destination caps.
    pub fn move_feasible(&self, i: usize, p: usize, to: usize) -> bool {
        let from = self.plan.dest(i, p);
        if from == to {
            return true;
        }
        let store = self.instance.store(i);
        let units = self.instance.stock_total(i, p);
        let n = self.instance.n_stores();
        let mut shipped = self.shipped[i];
        let mut conns = self.connections[i];
        if from != i {
            shipped -= units;
            if self.links[i * n + from] == 1 {
                conns -= 1;
            }
        }
        if to != i {
            shipped += units;
            if self.links[i * n + to] == 0 {
                conns += 1;
            }
        }
        store.sku_cap.is_none_or(|a| shipped <= a) && store.dest_cap.is_none_or(|b| conns <= b)
    }

    /// Whether `i` already ships something to `j`.
    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.links[i * self.instance.n_stores() + j] > 0
    }

    /// Reassigns `(i, p)` to `to` and returns the objective change.
    pub fn apply(&mut self, i: usize, p: usize, to: usize) -> Money {
        let from = self.plan.dest(i, p);
        if from == to {
            return Money::ZERO;
        }
        let delta = self.move_delta(i, p, to);
        let n = self.instance.n_stores();
        let n_products = self.instance.n_products();
        let units = self.instance.stock_total(i, p);
        let (src, dst) = (self.cell_range(from, p).start, self.cell_range(to, p).start);
        for (k, &s) in self.instance.stock(i, p).iter().enumerate() {
            self.held[src + k] -= s;
            self.held[dst + k] += s;
        }
        self.held_total[from * n_products + p] -= units;
        self.held_total[to * n_products + p] += units;
        if from != i {
            self.incoming[from * n_products + p] -= 1;
            self.shipped[i] -= units;
            self.links[i * n + from] -= 1;
            if self.links[i * n + from] == 0 {
                self.connections[i] -= 1;
            }
        }
        if to != i {
            self.incoming[to * n_products + p] += 1;
            self.shipped[i] += units;
            if self.links[i * n + to] == 0 {
                self.connections[i] += 1;
            }
            self.links[i * n + to] += 1;
        }
        self.plan.set_dest(i, p, to);
        self.objective += delta;
        delta
    }
}

fn is_sender(st: &PlanState, i: usize, p: usize) -> bool {
    st.plan.dest(i, p) == i && st.instance.stock_total(i, p) > 0 && st.residual(i, p) < 0
}

/// Best strictly improving feasible destination for `(i, p)` among
/// `candidates`; lowest index on ties.
fn best_destination(
    st: &PlanState,
    i: usize,
    p: usize,
    candidates: impl Iterator<Item = usize>,
) -> Option<(usize, Money)> {
    let mut best: Option<(usize, Money)> = None;
    for j in candidates {
        if j == i || !st.move_feasible(i, p, j) {
            continue;
        }
        let d = st.move_delta(i, p, j);
        if d.is_positive() && best.is_none_or(|(_, b)| d > b) {
            best = Some((j, d));
        }
    }
    best
}

/// Two-step construction. Step 1 repeatedly classifies (store, product)
/// pairs into senders (stock above demand) and receivers (below), visits
/// products in random order and sends each sender's stock to the receiver
/// with the largest profit gain that fits the caps. Step 2 retries senders
/// that lost their best move to the destination cap, this time only
/// towards stores they already ship to.
pub fn construct(instance: &Instance, seed: u64) -> TransferPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = PlanState::new(instance, TransferPlan::keep_all_for(instance));
    let n = instance.n_stores();
    let mut order: Vec<usize> = (0..instance.n_products()).collect();
    let mut blocked: Vec<(usize, usize)> = Vec::new();
    loop {
        order.shuffle(&mut rng);
        let mut improved = false;
        blocked.clear();
        for &p in &order {
            let senders: Vec<usize> = (0..n).filter(|&i| is_sender(&st, i, p)).collect();
            let receivers: Vec<usize> = (0..n).filter(|&j| st.residual(j, p) > 0).collect();
            for i in senders {
                let pick = best_destination(&st, i, p, receivers.iter().copied());
                if let Some((j, _)) = pick {
                    st.apply(i, p, j);
                    improved = true;
                }
                // a better receiver ruled out only by the destination cap
                let unbounded = receivers.iter().copied().filter(|&j| {
                    j != i && {
                        let d = st.move_delta(i, p, j);
                        d.is_positive() && pick.is_none_or(|(_, b)| d > b) && !st.move_feasible(i, p, j)
                    }
                });
                if st.plan.dest(i, p) == i && unbounded.count() > 0 {
                    blocked.push((i, p));
                }
            }
        }
        if !improved {
            break;
        }
    }
    for (i, p) in blocked {
        if st.plan.dest(i, p) != i {
            continue;
        }
        let connected: Vec<usize> = (0..n).filter(|&j| st.connected(i, j)).collect();
        if let Some((j, _)) = best_destination(&st, i, p, connected.into_iter()) {
            st.apply(i, p, j);
        }
    }
    st.into_plan()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cooling {
    /// `T <- T * tau` with a fixed `0 < tau < 1`.
    Geometric { tau: f64 },
    /// `T <- T * clamp(1 / counter, tau_min, tau_max)` where `counter`
    /// counts accepted worsening moves.
    Counter { tau_min: f64, tau_max: f64 },
}

impl Cooling {
    fn factor(self, counter: u64) -> f64 {
        match self {
            Cooling::Geometric { tau } => tau,
            Cooling::Counter { tau_min, tau_max } => {
                let raw = if counter == 0 { tau_max } else { 1.0 / counter as f64 };
                raw.clamp(tau_min, tau_max)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaConfig {
    pub max_iterations: u64,
    /// Seconds.
    pub time_limit: Option<f64>,
    /// Iterations without a new best before restarting.
    pub stagnation_window: u64,
    pub cooling: Cooling,
    pub seed: u64,
    /// Record a trace row every this many iterations (0 disables).
    pub trace_every: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            max_iterations: 200_000,
            time_limit: None,
            stagnation_window: 500,
            cooling: Cooling::Geometric { tau: 0.995 },
            seed: 0,
            trace_every: 1000,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.stagnation_window == 0 {
            return Err("stagnation window must be at least 1".into());
        }
        match self.cooling {
            Cooling::Geometric { tau } if !(tau > 0.0 && tau < 1.0) => {
                Err(format!("cooling rate {tau} must lie in (0, 1)"))
            }
            Cooling::Counter { tau_min, tau_max }
                if !(tau_min > 0.0 && tau_min <= tau_max && tau_max < 1.0) =>
            {
                Err(format!("cooling clamp [{tau_min}, {tau_max}] must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub current: Money,
    pub best: Money,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaOutcome {
    pub plan: TransferPlan,
    pub objective: Money,
    pub iterations: u64,
    pub accepted_worse: u64,
    pub restarts: u64,
    pub trace: Vec<TraceRow>,
}

/// Which removal rule to apply in one destroy step. An assignment
/// `(origin, product)` counts as a transfer even when the origin keeps its
/// stock, so undoing a keep and repairing it starts a new shipment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalRule {
    /// Any assignment, uniformly.
    Random,
    /// An assignment feeding a uniformly drawn over-supplied (store, product).
    Oversupplied,
    /// An assignment feeding the most frequent over-supplied product at its
    /// most frequent store.
    MostFrequent,
}

/// (store, product) pairs holding more units than their demand.
fn oversupplied(st: &PlanState) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..st.instance.n_stores() {
        for p in 0..st.instance.n_products() {
            if st.residual(j, p) < 0 {
                out.push((j, p));
            }
        }
    }
    out
}

fn feeding(st: &PlanState, j: usize, p: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let senders: Vec<usize> = (0..st.instance.n_stores())
        .filter(|&i| st.plan.dest(i, p) == j && st.instance.stock_total(i, p) > 0)
        .collect();
    (*senders.choose(rng).expect("over-supplied pair holds stock"), p)
}

/// Mode of `values` with the lowest value winning ties.
fn mode(values: impl Iterator<Item = usize>, size: usize) -> usize {
    let mut counts = vec![0usize; size];
    for v in values {
        counts[v] += 1;
    }
    let top = *counts.iter().max().unwrap();
    counts.iter().position(|&c| c == top).unwrap()
}

/// Picks the assignment `(origin, product)` to undo, or `None` when no
/// store holds stock. Rules needing an over-supplied pair fall back to a
/// random assignment when there is none.
pub fn select_removal(
    st: &PlanState,
    holders: &[(usize, usize)],
    rule: RemovalRule,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, usize)> {
    if holders.is_empty() {
        return None;
    }
    let over = if rule == RemovalRule::Random {
        Vec::new()
    } else {
        oversupplied(st)
    };
    if over.is_empty() {
        return holders.choose(rng).copied();
    }
    match rule {
        RemovalRule::Random => unreachable!(),
        RemovalRule::Oversupplied => {
            let &(j, p) = over.choose(rng).unwrap();
            Some(feeding(st, j, p, rng))
        }
        RemovalRule::MostFrequent => {
            let p = mode(over.iter().map(|&(_, p)| p), st.instance.n_products());
            let stores: Vec<usize> = over.iter().filter(|&&(_, q)| q == p).map(|&(j, _)| j).collect();
            let freq = |j: usize| over.iter().filter(|&&(s, _)| s == j).count();
            let j = *stores
                .iter()
                .max_by(|&&a, &&b| freq(a).cmp(&freq(b)).then(b.cmp(&a)))
                .unwrap();
            Some(feeding(st, j, p, rng))
        }
    }
}

/// Pairs `(store, product)` with stock, in store-major order.
pub fn holders(instance: &Instance) -> Vec<(usize, usize)> {
    (0..instance.n_stores())
        .flat_map(|i| (0..instance.n_products()).map(move |p| (i, p)))
        .filter(|&(i, p)| instance.stock_total(i, p) > 0)
        .collect()
}

/// New destination for `(i, p)` once its current assignment is undone: a
/// uniformly drawn store other than `i` and `old` with positive residual
/// demand that keeps the caps satisfied, or `i` itself when none exists.
/// Residual demand is read per size here: a store qualifies when some size
/// of `p` would still be short, since product totals can hide a size
/// mismatch that a shipment would fix.
pub fn repair_insert(st: &PlanState, i: usize, p: usize, old: usize, rng: &mut ChaCha8Rng) -> usize {
    let stock = st.instance.stock(i, p);
    let candidates: Vec<usize> = (0..st.instance.n_stores())
        .filter(|&j| j != i && j != old)
        .filter(|&j| {
            // holdings as they would be with (i, p) back at its origin
            let back = st.plan.dest(i, p) == j;
            st.held(j, p)
                .iter()
                .zip(st.instance.demand(j, p))
                .zip(stock)
                .any(|((&w, &d), &s)| w - if back { s } else { 0 } < d)
        })
        .filter(|&j| st.move_feasible(i, p, j))
        .collect();
    candidates.choose(rng).copied().unwrap_or(i)
}

/// Acceptance probability of a move changing the objective by `delta`.
pub fn acceptance_probability(delta: Money, temperature: f64) -> f64 {
    if delta >= Money::ZERO {
        1.0
    } else {
        (delta.to_f64() / temperature).exp()
    }
}

/// Destroy/repair simulated annealing from a feasible `plan`; returns the
/// best plan visited.
pub fn sa_improve(instance: &Instance, plan: TransferPlan, config: &SaConfig) -> SaOutcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut st = PlanState::new(instance, plan);
    let mut best = (st.plan.clone(), st.objective);
    let mut second: Option<(TransferPlan, Money)> = None;
    let mut temperature = st.objective.to_f64().max(1.0);
    let mut counter = 0u64;
    let mut restarts = 0u64;
    let mut since_best = 0u64;
    let mut trace = Vec::new();
    let mut iteration = 0u64;
    let holders = holders(instance);
    const RULES: [RemovalRule; 3] = [RemovalRule::Random, RemovalRule::Oversupplied, RemovalRule::MostFrequent];

    while iteration < config.max_iterations {
        if iteration.is_multiple_of(64)
            && config
                .time_limit
                .is_some_and(|limit| started.elapsed().as_secs_f64() >= limit)
        {
            break;
        }
        iteration += 1;
        let rule = RULES[rng.gen_range(0..3)];
        let mv = select_removal(&st, &holders, rule, &mut rng).map(|(i, p)| {
            let old = st.plan.dest(i, p);
            (i, p, repair_insert(&st, i, p, old, &mut rng))
        });
        if let Some((i, p, j)) = mv.filter(|&(i, p, j)| st.plan.dest(i, p) != j) {
            let delta = st.move_delta(i, p, j);
            let accept = if delta >= Money::ZERO {
                true
            } else if rng.gen::<f64>() < acceptance_probability(delta, temperature) {
                counter += 1;
                true
            } else {
                false
            };
            if accept {
                st.apply(i, p, j);
            }
        }
        temperature = (temperature * config.cooling.factor(counter)).max(1e-9);

        since_best += 1;
        if st.objective > best.1 {
            second = Some(std::mem::replace(&mut best, (st.plan.clone(), st.objective)));
            since_best = 0;
        } else if st.objective < best.1 && second.as_ref().is_none_or(|s| st.objective > s.1) {
            second = Some((st.plan.clone(), st.objective));
        }
        if since_best >= config.stagnation_window {
            let from_second = second.is_some() && rng.gen_bool(0.5);
            let source = if from_second { &second.as_ref().unwrap().0 } else { &best.0 };
            st = PlanState::new(instance, source.clone());
            since_best = 0;
            restarts += 1;
        }
        if config.trace_every > 0 && iteration.is_multiple_of(config.trace_every) {
            trace.push(TraceRow {
                iteration,
                current: st.objective,
                best: best.1,
                temperature,
            });
        }
    }
    if trace.last().is_none_or(|r| r.iteration != iteration) && config.trace_every > 0 {
        trace.push(TraceRow {
            iteration,
            current: st.objective,
            best: best.1,
            temperature,
        });
    }
    SaOutcome {
        plan: best.0,
        objective: best.1,
        iterations: iteration,
        accepted_worse: counter,
        restarts,
        trace,
    }
}

/// Construction followed by annealing with the same seed.
pub fn solve(instance: &Instance, config: &SaConfig) -> SaOutcome {
    let start = construct(instance, config.seed);
    sa_improve(instance, start, config)
}
