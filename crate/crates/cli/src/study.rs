//! The three benchmark studies. Replications run on the rayon pool, each
//! optionally writing its own record file; aggregation is sequential and
//! follows replication order, so reports do not depend on scheduling.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use transship::heuristic::{self, SaConfig};
use transship::instgen::{calibrate_from_maxima, generate, unconstrained_maxima, CapacityLevel, GenConfig};
use transship::lagrangian::{self, LagrangianConfig};
use transship::oracle::{brute_force, search_space, EnumBudget};
use transship::relax::{solve_capacitated_a, solve_capacitated_ab, solve_unconstrained, BnbBudget};
use transship::{evaluate_objective, optimality_gap, Instance, Money, TransferPlan};

use crate::io::{write_json, IoError};

/// Calibrated instance for one replication: seed `seed + rep`, both caps
/// at their levels.
pub fn study_instance(
    stores: usize,
    products: usize,
    sizes: usize,
    seed: u64,
    levels: Option<(CapacityLevel, CapacityLevel)>,
) -> Instance {
    let base = generate(&GenConfig::new(stores, products, sizes, seed));
    match levels {
        Some((a, b)) => calibrate_from_maxima(&base, &unconstrained_maxima(&base), a, b),
        None => base,
    }
}

fn timed<T>(timing: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let started = Instant::now();
    let out = f();
    (out, timing.then(|| started.elapsed().as_secs_f64()))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn fmt_f(x: f64, digits: usize) -> String {
    if x.is_finite() {
        format!("{x:.digits$}")
    } else {
        String::new()
    }
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    x.map_or(String::new(), |x| fmt_f(x, digits))
}

fn record_path(dir: Option<&Path>, name: String) -> Option<PathBuf> {
    dir.map(|d| d.join(name))
}

/// Lower-bound source for the gap study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Baseline {
    Heuristic,
    /// Keep everything, no transfers.
    Keep,
}

#[derive(Debug, Clone)]
pub struct GapStudy {
    pub stores: Vec<usize>,
    pub products: Vec<usize>,
    pub sizes: Vec<usize>,
    pub levels: Vec<CapacityLevel>,
    pub reps: usize,
    pub seed: u64,
    pub sa: SaConfig,
    pub lagrangian: LagrangianConfig,
    pub baseline: Baseline,
    pub timing: bool,
}

impl Default for GapStudy {
    fn default() -> Self {
        GapStudy {
            stores: vec![20],
            products: vec![50],
            sizes: vec![5],
            levels: vec![CapacityLevel::LOW, CapacityLevel::MEDIUM, CapacityLevel::HIGH],
            reps: 10,
            seed: 0,
            sa: SaConfig::default(),
            lagrangian: LagrangianConfig::default(),
            baseline: Baseline::Heuristic,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub stores: usize,
    pub products: usize,
    pub sizes: usize,
    pub level: String,
    pub rep: usize,
    pub seed: u64,
    pub lower_bound: Money,
    pub upper_bound: Money,
    pub gap: Option<f64>,
    pub lb_time: Option<f64>,
    pub ub_time: Option<f64>,
}

impl GapStudy {
    fn cells(&self) -> Vec<(usize, usize, usize, CapacityLevel)> {
        let mut out = Vec::new();
        for &n in &self.stores {
            for &np in &self.products {
                for &k in &self.sizes {
                    for &level in &self.levels {
                        out.push((n, np, k, level));
                    }
                }
            }
        }
        out
    }

    pub fn replicate(&self, (n, np, k, level): (usize, usize, usize, CapacityLevel), rep: usize) -> GapRecord {
        let seed = self.seed + rep as u64;
        let inst = study_instance(n, np, k, seed, Some((level, level)));
        let (lb, lb_time) = timed(self.timing, || match self.baseline {
            Baseline::Heuristic => heuristic::solve(&inst, &SaConfig { seed, ..self.sa }).objective,
            Baseline::Keep => evaluate_objective(&inst, &TransferPlan::keep_all_for(&inst)),
        });
        let (ub, ub_time) = timed(self.timing, || {
            lagrangian::run(&inst, &self.lagrangian)
                .report
                .upper_bound
                .expect("lagrangian run reports a bound")
        });
        GapRecord {
            stores: n,
            products: np,
            sizes: k,
            level: level.label(),
            rep,
            seed,
            lower_bound: lb,
            upper_bound: ub,
            gap: optimality_gap(ub, lb).ok(),
            lb_time,
            ub_time,
        }
    }

    pub fn run(&self, records_dir: Option<&Path>) -> Result<Vec<GapRecord>, IoError> {
        let jobs: Vec<_> = self.cells().into_iter().flat_map(|c| (0..self.reps).map(move |r| (c, r))).collect();
        jobs.into_par_iter()
            .map(|(cell, rep)| {
                let rec = self.replicate(cell, rep);
                let name = format!("gap_{}x{}x{}_{}_rep{rep}.json", rec.stores, rec.products, rec.sizes, rec.level);
                if let Some(path) = record_path(records_dir, name) {
                    write_json(&path, &rec)?;
                }
                Ok(rec)
            })
            .collect()
    }
}

pub const GAP_HEADER: [&str; 12] = [
    "stores", "products", "sizes", "level", "reps", "avg_lb", "avg_ub", "min_gap", "avg_gap", "max_gap", "avg_lb_time",
    "avg_ub_time",
];

/// Gap statistics for one instance size and level.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSummary {
    pub stores: usize,
    pub products: usize,
    pub sizes: usize,
    pub level: String,
    pub reps: usize,
    pub avg_lb: f64,
    pub avg_ub: f64,
    pub min_gap: f64,
    pub avg_gap: f64,
    pub max_gap: f64,
    pub avg_lb_time: Option<f64>,
    pub avg_ub_time: Option<f64>,
}

impl GapSummary {
    pub fn row(&self) -> Vec<String> {
        vec![
            self.stores.to_string(),
            self.products.to_string(),
            self.sizes.to_string(),
            self.level.clone(),
            self.reps.to_string(),
            fmt_f(self.avg_lb, 2),
            fmt_f(self.avg_ub, 2),
            fmt_f(self.min_gap, 6),
            fmt_f(self.avg_gap, 6),
            fmt_f(self.max_gap, 6),
            fmt_opt(self.avg_lb_time, 3),
            fmt_opt(self.avg_ub_time, 3),
        ]
    }
}

/// Groups records by (stores, products, sizes, level) in first-seen order.
/// Replications with an undefined gap are left out of the gap columns.
pub fn summarize_gaps(records: &[GapRecord]) -> Vec<GapSummary> {
    let mut keys: Vec<(usize, usize, usize, String)> = Vec::new();
    for r in records {
        let key = (r.stores, r.products, r.sizes, r.level.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(n, np, k, level)| {
            let group: Vec<&GapRecord> = records
                .iter()
                .filter(|r| (r.stores, r.products, r.sizes) == (n, np, k) && r.level == level)
                .collect();
            let gaps: Vec<f64> = group.iter().filter_map(|r| r.gap).collect();
            let times = |f: fn(&GapRecord) -> Option<f64>| -> Option<f64> {
                group.iter().map(|r| f(r)).collect::<Option<Vec<f64>>>().map(|v| mean(v.into_iter()))
            };
            GapSummary {
                stores: n,
                products: np,
                sizes: k,
                level,
                reps: group.len(),
                avg_lb: mean(group.iter().map(|r| r.lower_bound.to_f64())),
                avg_ub: mean(group.iter().map(|r| r.upper_bound.to_f64())),
                min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
                avg_gap: mean(gaps.iter().copied()),
                max_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                avg_lb_time: times(|r| r.lb_time),
                avg_ub_time: times(|r| r.ub_time),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ConstraintStudy {
    pub stores: usize,
    pub products: usize,
    pub sizes: Vec<usize>,
    pub sku_levels: Vec<CapacityLevel>,
    pub dest_levels: Vec<CapacityLevel>,
    pub reps: usize,
    pub seed: u64,
    pub sa: SaConfig,
    pub oracle: EnumBudget,
    pub bnb: BnbBudget,
}

impl Default for ConstraintStudy {
    fn default() -> Self {
        ConstraintStudy {
            stores: 5,
            products: 6,
            sizes: vec![5, 10],
            sku_levels: vec![CapacityLevel::LOW, CapacityLevel::HIGH],
            dest_levels: vec![CapacityLevel::LOW, CapacityLevel::HIGH],
            reps: 10,
            seed: 0,
            sa: SaConfig::default(),
            oracle: EnumBudget::default(),
            bnb: BnbBudget {
                max_nodes: 500,
                rel_gap: 1e-4,
            },
        }
    }
}

/// Objectives of the four nested models on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub sizes: usize,
    pub sku_level: String,
    pub dest_level: String,
    pub rep: usize,
    pub seed: u64,
    /// Keep-everything objective, the zero point of the gain percentages.
    pub keep: f64,
    pub unconstrained: f64,
    pub unit_capped: f64,
    /// Best connection-capped flow found; `dest_capped_exact` tells
    /// whether the search closed.
    pub dest_capped: f64,
    pub dest_capped_exact: bool,
    /// Upper bound on the connection-capped optimum when the search did
    /// not close, else equal to `dest_capped`.
    pub dest_capped_bound: f64,
    pub full: f64,
    /// `false` when `full` is a heuristic lower bound.
    pub full_exact: bool,
}

impl ChainRecord {
    /// `unconstrained >= unit_capped >= dest-capped >= full`, using the
    /// connection-capped upper bound where the search did not close.
    pub fn dominance_holds(&self) -> bool {
        let ge = |a: f64, b: f64| a >= b - 1e-6 * (1.0 + a.abs().max(b.abs()));
        let ab_upper = if self.dest_capped_exact { self.dest_capped } else { self.dest_capped_bound };
        ge(self.unconstrained, self.unit_capped)
            && ge(self.unit_capped, ab_upper)
            && ge(ab_upper, self.full)
            && (!self.dest_capped_exact || ge(self.dest_capped, self.full))
    }

    fn pct(&self, v: f64) -> f64 {
        100.0 * v / self.unconstrained
    }

    /// Share of the unconstrained transfer gain over keeping everything.
    fn gain_pct(&self, v: f64) -> f64 {
        let room = self.unconstrained - self.keep;
        if room > 0.0 {
            100.0 * (v - self.keep) / room
        } else {
            100.0
        }
    }
}

impl ConstraintStudy {
    fn cells(&self) -> Vec<(usize, CapacityLevel, CapacityLevel)> {
        let mut out = Vec::new();
        for &k in &self.sizes {
            for &a in &self.sku_levels {
                for &b in &self.dest_levels {
                    out.push((k, a, b));
                }
            }
        }
        out
    }

    pub fn replicate(&self, (k, a, b): (usize, CapacityLevel, CapacityLevel), rep: usize) -> ChainRecord {
        let seed = self.seed + rep as u64;
        let inst = study_instance(self.stores, self.products, k, seed, Some((a, b)));
        let keep = evaluate_objective(&inst, &TransferPlan::keep_all_for(&inst)).to_f64();
        let unconstrained = solve_unconstrained(&inst).objective;
        let unit_capped = solve_capacitated_a(&inst).expect("unit-capped LP solves").objective;
        let ab = solve_capacitated_ab(&inst, self.bnb).expect("connection LP solves");
        let (full, full_exact) = if search_space(&inst) <= self.oracle.max_assignments as f64 {
            let sol = brute_force(&inst, self.oracle).expect("within the oracle budget");
            (sol.objective.to_f64(), true)
        } else {
            let out = heuristic::solve(&inst, &SaConfig { seed, ..self.sa });
            (out.objective.to_f64(), false)
        };
        ChainRecord {
            sizes: k,
            sku_level: a.label(),
            dest_level: b.label(),
            rep,
            seed,
            keep,
            unconstrained,
            unit_capped,
            dest_capped: ab.flow.objective,
            dest_capped_exact: ab.exact,
            dest_capped_bound: if ab.exact { ab.flow.objective } else { ab.bound },
            full,
            full_exact,
        }
    }

    pub fn run(&self, records_dir: Option<&Path>) -> Result<Vec<ChainRecord>, IoError> {
        let jobs: Vec<_> = self.cells().into_iter().flat_map(|c| (0..self.reps).map(move |r| (c, r))).collect();
        jobs.into_par_iter()
            .map(|(cell, rep)| {
                let rec = self.replicate(cell, rep);
                let name = format!("chain_k{}_{}_{}_rep{rep}.json", rec.sizes, rec.sku_level, rec.dest_level);
                if let Some(path) = record_path(records_dir, name) {
                    write_json(&path, &rec)?;
                }
                Ok(rec)
            })
            .collect()
    }
}

pub const CHAIN_HEADER: [&str; 16] = [
    "sizes",
    "sku_level",
    "dest_level",
    "reps",
    "unconstrained_pct",
    "unit_capped_pct",
    "dest_capped_pct",
    "full_pct",
    "unit_capped_gain_pct",
    "dest_capped_gain_pct",
    "full_gain_pct",
    "dest_capped_exact",
    "full_exact",
    "dominance_holds",
    "avg_keep",
    "avg_unconstrained",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub sizes: usize,
    pub sku_level: String,
    pub dest_level: String,
    pub reps: usize,
    /// Averages of `[unit_capped, dest_capped, full]` as a percentage of
    /// the unconstrained objective.
    pub pct: [f64; 3],
    /// The same as a percentage of the unconstrained gain over keeping.
    pub gain_pct: [f64; 3],
    pub dest_capped_exact: usize,
    pub full_exact: usize,
    pub dominance_holds: usize,
    pub avg_keep: f64,
    pub avg_unconstrained: f64,
}

impl ChainSummary {
    pub fn row(&self) -> Vec<String> {
        let mut row = vec![
            self.sizes.to_string(),
            self.sku_level.clone(),
            self.dest_level.clone(),
            self.reps.to_string(),
            "100".to_string(),
        ];
        row.extend(self.pct.iter().map(|&x| fmt_f(x, 3)));
        row.extend(self.gain_pct.iter().map(|&x| fmt_f(x, 3)));
        row.push(format!("{}/{}", self.dest_capped_exact, self.reps));
        row.push(format!("{}/{}", self.full_exact, self.reps));
        row.push(format!("{}/{}", self.dominance_holds, self.reps));
        row.push(fmt_f(self.avg_keep, 2));
        row.push(fmt_f(self.avg_unconstrained, 2));
        row
    }
}

pub fn summarize_chain(records: &[ChainRecord]) -> Vec<ChainSummary> {
    let mut keys: Vec<(usize, String, String)> = Vec::new();
    for r in records {
        let key = (r.sizes, r.sku_level.clone(), r.dest_level.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(k, a, b)| {
            let group: Vec<&ChainRecord> = records
                .iter()
                .filter(|r| r.sizes == k && r.sku_level == a && r.dest_level == b)
                .collect();
            let values = |r: &ChainRecord| [r.unit_capped, r.dest_capped, r.full];
            let pct = std::array::from_fn(|q| mean(group.iter().map(|r| r.pct(values(r)[q]))));
            let gain_pct = std::array::from_fn(|q| mean(group.iter().map(|r| r.gain_pct(values(r)[q]))));
            ChainSummary {
                sizes: k,
                sku_level: a,
                dest_level: b,
                reps: group.len(),
                pct,
                gain_pct,
                dest_capped_exact: group.iter().filter(|r| r.dest_capped_exact).count(),
                full_exact: group.iter().filter(|r| r.full_exact).count(),
                dominance_holds: group.iter().filter(|r| r.dominance_holds()).count(),
                avg_keep: mean(group.iter().map(|r| r.keep)),
                avg_unconstrained: mean(group.iter().map(|r| r.unconstrained)),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SizesStudy {
    pub stores: usize,
    pub products: usize,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub sa: SaConfig,
}

impl Default for SizesStudy {
    fn default() -> Self {
        SizesStudy {
            stores: 20,
            products: 100,
            sizes: vec![2, 5, 8, 10, 15],
            reps: 10,
            seed: 0,
            sa: SaConfig {
                max_iterations: 100_000,
                ..SaConfig::default()
            },
        }
    }
}

/// Transfer counts for one capacity-free instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizesRecord {
    pub sizes: usize,
    pub rep: usize,
    pub seed: u64,
    /// `(origin, destination, product)` transfer decisions in the
    /// single-destination solution.
    pub transfers: usize,
    /// `(product, size, origin -> destination)` triples with positive
    /// stock in the same solution.
    pub sku_triples: usize,
    /// Positive-flow triples of the fractional transportation relaxation.
    pub relaxed_triples: usize,
    pub objective: Money,
}

impl SizesStudy {
    pub fn replicate(&self, k: usize, rep: usize) -> SizesRecord {
        let seed = self.seed + rep as u64;
        let inst = study_instance(self.stores, self.products, k, seed, None);
        let out = heuristic::solve(&inst, &SaConfig { seed, ..self.sa });
        let sku_triples = out
            .plan
            .transfers()
            .map(|(i, _, p)| inst.stock(i, p).iter().filter(|&&s| s > 0).count())
            .sum();
        SizesRecord {
            sizes: k,
            rep,
            seed,
            transfers: out.plan.transfer_count(),
            sku_triples,
            relaxed_triples: solve_unconstrained(&inst).sku_triples(),
            objective: out.objective,
        }
    }

    pub fn run(&self, records_dir: Option<&Path>) -> Result<Vec<SizesRecord>, IoError> {
        let jobs: Vec<_> = self.sizes.iter().flat_map(|&k| (0..self.reps).map(move |r| (k, r))).collect();
        jobs.into_par_iter()
            .map(|(k, rep)| {
                let rec = self.replicate(k, rep);
                if let Some(path) = record_path(records_dir, format!("sizes_k{k}_rep{rep}.json")) {
                    write_json(&path, &rec)?;
                }
                Ok(rec)
            })
            .collect()
    }
}

pub const SIZES_HEADER: [&str; 7] = [
    "sizes",
    "reps",
    "avg_transfers",
    "min_transfers",
    "max_transfers",
    "avg_sku_triples",
    "avg_relaxed_triples",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SizesSummary {
    pub sizes: usize,
    pub reps: usize,
    pub avg_transfers: f64,
    pub min_transfers: usize,
    pub max_transfers: usize,
    pub avg_sku_triples: f64,
    pub avg_relaxed_triples: f64,
}

impl SizesSummary {
    pub fn row(&self) -> Vec<String> {
        vec![
            self.sizes.to_string(),
            self.reps.to_string(),
            fmt_f(self.avg_transfers, 1),
            self.min_transfers.to_string(),
            self.max_transfers.to_string(),
            fmt_f(self.avg_sku_triples, 1),
            fmt_f(self.avg_relaxed_triples, 1),
        ]
    }
}

pub fn summarize_sizes(records: &[SizesRecord]) -> Vec<SizesSummary> {
    let mut keys: Vec<usize> = Vec::new();
    for r in records {
        if !keys.contains(&r.sizes) {
            keys.push(r.sizes);
        }
    }
    keys.into_iter()
        .map(|k| {
            let group: Vec<&SizesRecord> = records.iter().filter(|r| r.sizes == k).collect();
            SizesSummary {
                sizes: k,
                reps: group.len(),
                avg_transfers: mean(group.iter().map(|r| r.transfers as f64)),
                min_transfers: group.iter().map(|r| r.transfers).min().unwrap_or(0),
                max_transfers: group.iter().map(|r| r.transfers).max().unwrap_or(0),
                avg_sku_triples: mean(group.iter().map(|r| r.sku_triples as f64)),
                avg_relaxed_triples: mean(group.iter().map(|r| r.relaxed_triples as f64)),
            }
        })
        .collect()
}
