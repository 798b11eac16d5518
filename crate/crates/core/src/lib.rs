//! Capacitated single-destination lateral transshipment between retail
//! stores: exact and relaxed models, a Lagrangian upper-bounding engine, a
//! construction plus simulated-annealing lower-bounding heuristic, and the
//! benchmark studies built on them.

pub mod heuristic;
pub mod instgen;
pub mod lagrangian;
pub mod lp;
pub mod model;
pub mod money;
pub mod oracle;
pub mod relax;

pub use model::{
    check_feasibility, evaluate_objective, implied_sales, optimality_gap, BoundReport, Instance,
    Product, SalesPlan, Store, TransferPlan,
};
pub use money::Money;
