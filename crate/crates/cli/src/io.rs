//! JSON instance and solution files, and CSV writers.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use transship::instgen::GenConfig;
use transship::model::ModelError;
use transship::{check_feasibility, evaluate_objective, Instance, Money, Product, Store, TransferPlan};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("invalid instance: {0}")]
    Model(#[from] ModelError),
    #[error("invalid instance: {0}")]
    Entry(String),
}

/// How an instance was produced.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: Option<u64>,
    pub config: Option<GenConfig>,
    /// Capacity level labels `(unit cap, destination cap)`.
    pub levels: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductRow {
    pub id: usize,
    pub sizes: usize,
    pub r: Money,
    pub c: Money,
    pub h: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct StoreRow {
    pub id: usize,
    pub A: Option<u64>,
    pub B: Option<u64>,
}

/// Instance on disk: stock and demand as sparse `(store, product, size,
/// qty)` triples; absent entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub metadata: Metadata,
    pub products: Vec<ProductRow>,
    pub stores: Vec<StoreRow>,
    pub stock: Vec<(usize, usize, usize, u32)>,
    pub demand: Vec<(usize, usize, usize, u32)>,
}

fn sparse(instance: &Instance, dense: &[u32]) -> Vec<(usize, usize, usize, u32)> {
    let mut out = Vec::new();
    for i in 0..instance.n_stores() {
        for (p, prod) in instance.products().iter().enumerate() {
            let base = i * instance.n_skus() + instance.sku_offset(p);
            for k in 0..prod.sizes {
                if dense[base + k] > 0 {
                    out.push((i, p, k, dense[base + k]));
                }
            }
        }
    }
    out
}

impl InstanceFile {
    pub fn from_instance(instance: &Instance, metadata: Metadata) -> Self {
        InstanceFile {
            metadata,
            products: instance
                .products()
                .iter()
                .map(|p| ProductRow {
                    id: p.id,
                    sizes: p.sizes,
                    r: p.revenue,
                    c: p.transfer_cost,
                    h: p.holding_cost,
                })
                .collect(),
            stores: instance
                .stores()
                .iter()
                .map(|s| StoreRow {
                    id: s.id,
                    A: s.sku_cap,
                    B: s.dest_cap,
                })
                .collect(),
            stock: sparse(instance, instance.stock_flat()),
            demand: sparse(instance, instance.demand_flat()),
        }
    }

    pub fn to_instance(&self) -> Result<Instance, IoError> {
        let products: Vec<Product> = self
            .products
            .iter()
            .map(|p| Product {
                id: p.id,
                sizes: p.sizes,
                revenue: p.r,
                transfer_cost: p.c,
                holding_cost: p.h,
            })
            .collect();
        let stores: Vec<Store> = self
            .stores
            .iter()
            .map(|s| Store {
                id: s.id,
                sku_cap: s.A,
                dest_cap: s.B,
            })
            .collect();
        let n_skus: usize = products.iter().map(|p| p.sizes).sum();
        let mut offsets = vec![0];
        for p in &products {
            offsets.push(offsets.last().unwrap() + p.sizes);
        }
        let dense = |name: &str, triples: &[(usize, usize, usize, u32)]| -> Result<Vec<u32>, IoError> {
            let mut out = vec![0; stores.len() * n_skus];
            for &(i, p, k, q) in triples {
                if i >= stores.len() || p >= products.len() || k >= products[p].sizes {
                    return Err(IoError::Entry(format!("{name} entry ({i}, {p}, {k}) out of range")));
                }
                out[i * n_skus + offsets[p] + k] = q;
            }
            Ok(out)
        };
        let stock = dense("stock", &self.stock)?;
        let demand = dense("demand", &self.demand)?;
        Ok(Instance::new(stores, products, stock, demand)?)
    }
}

/// Solver output. Relaxations also carry their fractional flows; their
/// `transfers` list the `(from, to, product)` pairs with positive flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub method: String,
    pub seed: Option<u64>,
    pub transfers: Vec<(usize, usize, usize)>,
    pub connections: Vec<(usize, usize)>,
    pub objective: Option<Money>,
    pub lower_bound: Option<Money>,
    pub upper_bound: Option<Money>,
    pub gap: Option<f64>,
    pub wall_time: Option<f64>,
    /// `(from, to, product, size, qty)` for fractional relaxations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows: Option<Vec<(usize, usize, usize, usize, f64)>>,
}

impl SolutionFile {
    /// Solution holding a single-destination plan.
    pub fn from_plan(method: &str, seed: Option<u64>, instance: &Instance, plan: &TransferPlan) -> Self {
        let objective = evaluate_objective(instance, plan);
        SolutionFile {
            method: method.into(),
            seed,
            transfers: plan.transfers().collect(),
            connections: plan.connections().into_iter().collect(),
            objective: Some(objective),
            lower_bound: Some(objective),
            upper_bound: None,
            gap: None,
            wall_time: None,
            flows: None,
        }
    }

    pub fn plan(&self, instance: &Instance) -> Result<TransferPlan, IoError> {
        let n = instance.n_stores();
        let mut plan = TransferPlan::keep_all_for(instance);
        for &(i, j, p) in &self.transfers {
            if i >= n || j >= n || p >= instance.n_products() {
                return Err(IoError::Entry(format!("transfer ({i}, {j}, {p}) out of range")));
            }
            plan.set_dest(i, p, j);
        }
        Ok(plan)
    }

    /// Re-evaluates a plan solution against `instance`: the stored
    /// objective must match and the plan must be feasible.
    pub fn verify(&self, instance: &Instance) -> Result<(), String> {
        if self.flows.is_some() {
            return Ok(());
        }
        let Some(stored) = self.objective else {
            return Ok(());
        };
        let plan = self.plan(instance).map_err(|e| e.to_string())?;
        let objective = evaluate_objective(instance, &plan);
        if objective != stored {
            return Err(format!("stored objective {stored} but plan evaluates to {objective}"));
        }
        let derived: BTreeSet<_> = self.connections.iter().copied().collect();
        if derived != plan.connections() {
            return Err("connections do not match the transfers".into());
        }
        let report = check_feasibility(instance, &plan);
        if let Some(v) = report.violations.first() {
            return Err(format!("infeasible plan: {v}"));
        }
        Ok(())
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let file_err = |source| IoError::File {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(file_err)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(file_err)
}

/// Writes `rows` under `header`, preceded by `#`-prefixed comment lines.
pub fn write_csv(path: &Path, notes: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let file_err = |source| IoError::File {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(file_err)?;
    }
    let mut buf = Vec::new();
    for note in notes {
        writeln!(buf, "# {note}").map_err(file_err)?;
    }
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let buf = w.into_inner().map_err(|e| file_err(e.into_error()))?;
    fs::write(path, buf).map_err(file_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use transship::instgen::{calibrate_capacities, generate, CapacityLevel};
    use transship::model::fixtures::two_store;

    #[test]
    fn instance_round_trips_through_json() {
        let cfg = GenConfig::new(4, 5, 3, 11);
        let inst = calibrate_capacities(&generate(&cfg), CapacityLevel::LOW);
        let meta = Metadata {
            seed: Some(11),
            config: Some(cfg),
            levels: Some(("low".into(), "low".into())),
        };
        let file = InstanceFile::from_instance(&inst, meta);
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_instance().unwrap(), inst);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn absent_triples_are_zero() {
        let inst = two_store();
        let mut file = InstanceFile::from_instance(&inst, Metadata::default());
        assert!(file.stock.iter().all(|t| t.3 > 0));
        file.demand.clear();
        let back = file.to_instance().unwrap();
        assert!(back.demand_flat().iter().all(|&d| d == 0));
    }

    #[test]
    fn out_of_range_entry_is_rejected() {
        let mut file = InstanceFile::from_instance(&two_store(), Metadata::default());
        file.stock.push((5, 0, 0, 1));
        assert!(matches!(file.to_instance(), Err(IoError::Entry(_))));
    }

    #[test]
    fn solution_verifies_and_detects_tampering() {
        let inst = two_store();
        let mut plan = TransferPlan::keep_all_for(&inst);
        plan.set_dest(0, 0, 1);
        let mut sol = SolutionFile::from_plan("exact", None, &inst, &plan);
        assert_eq!(sol.verify(&inst), Ok(()));
        sol.objective = Some(sol.objective.unwrap() + Money::from_micros(1));
        assert!(sol.verify(&inst).is_err());
    }
}
