//! Domain types shared by every solver: instances, single-destination
//! transfer plans, the sales they imply, objective evaluation, feasibility
//! checking and gap arithmetic.

use std::collections::BTreeSet;
use std::fmt;

use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("product {product}: {reason}")]
    InvalidProduct { product: usize, reason: &'static str },
    #[error("{tensor} tensor has {actual} entries, expected {expected}")]
    ShapeMismatch {
        tensor: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("instance needs at least one store and one product")]
    Empty,
    #[error("{what} index {index} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Product {
    pub id: usize,
    pub sizes: usize,
    /// Unit net revenue `r_p`.
    pub revenue: Money,
    /// Unit transfer cost `c_p`, independent of origin and destination.
    pub transfer_cost: Money,
    /// Unit holding cost `h_p` for stock left unsold.
    pub holding_cost: Money,
}

impl Product {
    fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason| {
            Err(ModelError::InvalidProduct {
                product: self.id,
                reason,
            })
        };
        if self.sizes == 0 {
            return fail("needs at least one size");
        }
        if !self.revenue.is_positive() {
            return fail("revenue must be positive");
        }
        if self.transfer_cost < Money::ZERO {
            return fail("transfer cost must be non-negative");
        }
        if self.holding_cost < Money::ZERO {
            return fail("holding cost must be non-negative");
        }
        Ok(())
    }
}

/// A store with its outbound limits. `None` means unbounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Store {
    pub id: usize,
    /// Maximum number of units (`A_i`) the store may send out.
    pub sku_cap: Option<u64>,
    /// Maximum number of distinct destinations (`B_i`).
    pub dest_cap: Option<u64>,
}

impl Store {
    pub fn unbounded(id: usize) -> Self {
        Store {
            id,
            sku_cap: None,
            dest_cap: None,
        }
    }
}

/// Stores, products and the ragged stock/demand tensors indexed by
/// (store, product, size). Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    stores: Vec<Store>,
    products: Vec<Product>,
    offsets: Vec<usize>,
    stock: Vec<u32>,
    demand: Vec<u32>,
}

impl Instance {
    /// `stock` and `demand` are flattened store-major, then product, then size.
    pub fn new(
        stores: Vec<Store>,
        products: Vec<Product>,
        stock: Vec<u32>,
        demand: Vec<u32>,
    ) -> Result<Self, ModelError> {
        if stores.is_empty() || products.is_empty() {
            return Err(ModelError::Empty);
        }
        for p in &products {
            p.validate()?;
        }
        let mut offsets = Vec::with_capacity(products.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for p in &products {
            acc += p.sizes;
            offsets.push(acc);
        }
        let expected = stores.len() * acc;
        for (tensor, data) in [("stock", &stock), ("demand", &demand)] {
            if data.len() != expected {
                return Err(ModelError::ShapeMismatch {
                    tensor,
                    expected,
                    actual: data.len(),
                });
            }
        }
        Ok(Instance {
            stores,
            products,
            offsets,
            stock,
            demand,
        })
    }

    /// Builds from nested `[store][product][size]` vectors.
    pub fn from_nested(
        stores: Vec<Store>,
        products: Vec<Product>,
        stock: &[Vec<Vec<u32>>],
        demand: &[Vec<Vec<u32>>],
    ) -> Result<Self, ModelError> {
        let flatten = |nested: &[Vec<Vec<u32>>]| -> Vec<u32> {
            nested.iter().flatten().flatten().copied().collect()
        };
        for (tensor, nested) in [("stock", stock), ("demand", demand)] {
            let shape_ok = nested.len() == stores.len()
                && nested.iter().all(|row| {
                    row.len() == products.len()
                        && row.iter().zip(&products).all(|(sz, p)| sz.len() == p.sizes)
                });
            if !shape_ok {
                return Err(ModelError::ShapeMismatch {
                    tensor,
                    expected: stores.len() * products.iter().map(|p| p.sizes).sum::<usize>(),
                    actual: nested.iter().flatten().flatten().count(),
                });
            }
        }
        Instance::new(stores, products, flatten(stock), flatten(demand))
    }

    pub fn stores(&self) -> &[Store] {
        &self.stores
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn store(&self, i: usize) -> &Store {
        &self.stores[i]
    }

    pub fn product(&self, p: usize) -> &Product {
        &self.products[p]
    }

    pub fn n_stores(&self) -> usize {
        self.stores.len()
    }

    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    /// Number of (product, size) pairs.
    pub fn n_skus(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Offset of product `p`'s first size within one store's SKU row.
    pub fn sku_offset(&self, p: usize) -> usize {
        self.offsets[p]
    }

    fn range(&self, i: usize, p: usize) -> std::ops::Range<usize> {
        let base = i * self.n_skus();
        base + self.offsets[p]..base + self.offsets[p + 1]
    }

    pub fn stock(&self, i: usize, p: usize) -> &[u32] {
        &self.stock[self.range(i, p)]
    }

    pub fn demand(&self, i: usize, p: usize) -> &[u32] {
        &self.demand[self.range(i, p)]
    }

    pub fn stock_total(&self, i: usize, p: usize) -> u64 {
        self.stock(i, p).iter().map(|&q| q as u64).sum()
    }

    pub fn demand_total(&self, i: usize, p: usize) -> u64 {
        self.demand(i, p).iter().map(|&q| q as u64).sum()
    }

    /// Flat store-major stock tensor.
    pub fn stock_flat(&self) -> &[u32] {
        &self.stock
    }

    pub fn demand_flat(&self) -> &[u32] {
        &self.demand
    }

    /// Same data with the given per-store `(sku_cap, dest_cap)` pairs.
    pub fn with_capacities(&self, caps: &[(Option<u64>, Option<u64>)]) -> Instance {
        assert_eq!(caps.len(), self.n_stores(), "one capacity pair per store");
        let mut out = self.clone();
        for (store, &(a, b)) in out.stores.iter_mut().zip(caps) {
            store.sku_cap = a;
            store.dest_cap = b;
        }
        out
    }

    /// Same data with every capacity removed.
    pub fn uncapacitated(&self) -> Instance {
        self.with_capacities(&vec![(None, None); self.n_stores()])
    }

    /// Keeps `sku_cap`, drops `dest_cap`.
    pub fn without_dest_caps(&self) -> Instance {
        let caps: Vec<_> = self.stores.iter().map(|s| (s.sku_cap, None)).collect();
        self.with_capacities(&caps)
    }
}

/// Single-destination assignment: every (store, product) pair goes to
/// exactly one store. Assigning a pair to its own store keeps the stock.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransferPlan {
    n_stores: usize,
    n_products: usize,
    dest: Vec<usize>,
}

impl TransferPlan {
    pub fn keep_all(n_stores: usize, n_products: usize) -> Self {
        let dest = (0..n_stores)
            .flat_map(|i| std::iter::repeat_n(i, n_products))
            .collect();
        TransferPlan {
            n_stores,
            n_products,
            dest,
        }
    }

    pub fn keep_all_for(instance: &Instance) -> Self {
        Self::keep_all(instance.n_stores(), instance.n_products())
    }

    /// `dest` is flattened store-major: `dest[i * n_products + p]`.
    pub fn from_dest(n_stores: usize, n_products: usize, dest: Vec<usize>) -> Self {
        assert_eq!(dest.len(), n_stores * n_products);
        TransferPlan {
            n_stores,
            n_products,
            dest,
        }
    }

    pub fn n_stores(&self) -> usize {
        self.n_stores
    }

    pub fn n_products(&self) -> usize {
        self.n_products
    }

    pub fn dest(&self, i: usize, p: usize) -> usize {
        self.dest[i * self.n_products + p]
    }

    pub fn set_dest(&mut self, i: usize, p: usize, j: usize) {
        self.dest[i * self.n_products + p] = j;
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.dest
    }

    pub fn is_transfer(&self, i: usize, p: usize) -> bool {
        self.dest(i, p) != i
    }

    /// Off-diagonal assignments as `(from, to, product)`, ordered by store
    /// then product.
    pub fn transfers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.dest.iter().enumerate().filter_map(move |(idx, &j)| {
            let i = idx / self.n_products;
            let p = idx % self.n_products;
            (i != j).then_some((i, j, p))
        })
    }

    pub fn transfer_count(&self) -> usize {
        self.transfers().count()
    }

    /// Connected pairs `(i, j)`, i.e. `y_ij = 1`.
    pub fn connections(&self) -> BTreeSet<(usize, usize)> {
        self.transfers().map(|(i, j, _)| (i, j)).collect()
    }

    /// Applies a store permutation: store `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> TransferPlan {
        let mut out = TransferPlan::keep_all(self.n_stores, self.n_products);
        for i in 0..self.n_stores {
            for p in 0..self.n_products {
                out.set_dest(perm[i], p, perm[self.dest(i, p)]);
            }
        }
        out
    }
}

/// Post-transfer holdings `w` and sales `z`, laid out like the instance
/// tensors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SalesPlan {
    pub held: Vec<u32>,
    pub sold: Vec<u32>,
}

/// Holdings and sales implied by a plan. Selling `min(w, d)` is optimal
/// because each sale earns `r_p` and avoids `h_p`, both non-negative.
pub fn implied_sales(instance: &Instance, plan: &TransferPlan) -> SalesPlan {
    let n_skus = instance.n_skus();
    let mut held = vec![0u32; instance.n_stores() * n_skus];
    for i in 0..instance.n_stores() {
        for p in 0..instance.n_products() {
            let j = plan.dest(i, p);
            let base = j * n_skus + instance.sku_offset(p);
            for (k, &s) in instance.stock(i, p).iter().enumerate() {
                held[base + k] += s;
            }
        }
    }
    let sold = held
        .iter()
        .zip(instance.demand_flat())
        .map(|(&w, &d)| w.min(d))
        .collect();
    SalesPlan { held, sold }
}

/// Revenue minus holding cost for one product at one store, given the
/// post-transfer holdings `held` and `demand` over its sizes.
pub fn destination_value(product: &Product, held: &[u32], demand: &[u32]) -> Money {
    held.iter()
        .zip(demand)
        .map(|(&w, &d)| {
            let z = w.min(d);
            product.revenue * z - product.holding_cost * (w - z)
        })
        .sum()
}

/// Total profit: revenue from sales, less transfer cost on shipped stock,
/// less holding cost on unsold stock.
pub fn evaluate_objective(instance: &Instance, plan: &TransferPlan) -> Money {
    let sales = implied_sales(instance, plan);
    let n_skus = instance.n_skus();
    let mut total = Money::ZERO;
    for j in 0..instance.n_stores() {
        for (p, product) in instance.products().iter().enumerate() {
            let lo = j * n_skus + instance.sku_offset(p);
            let hi = lo + product.sizes;
            total += destination_value(product, &sales.held[lo..hi], instance.demand(j, p));
        }
    }
    for (i, _, p) in plan.transfers() {
        total -= instance.product(p).transfer_cost * instance.stock_total(i, p) as i64;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The plan has no valid destination for this pair.
    Totality { store: usize, product: usize },
    SkuCapacity { store: usize, shipped: u64, cap: u64 },
    DestinationCount { store: usize, used: u64, cap: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Totality { store, product } => {
                write!(f, "store {store} product {product} has no valid destination")
            }
            Violation::SkuCapacity { store, shipped, cap } => {
                write!(f, "store {store} ships {shipped} units, cap {cap}")
            }
            Violation::DestinationCount { store, used, cap } => {
                write!(f, "store {store} ships to {used} stores, cap {cap}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every violated totality, unit-capacity and destination-count
/// constraint. Self-assignments never count toward either capacity.
pub fn check_feasibility(instance: &Instance, plan: &TransferPlan) -> FeasibilityReport {
    let n = instance.n_stores();
    let mut violations = Vec::new();
    if plan.n_stores() != n || plan.n_products() != instance.n_products() {
        for i in 0..n {
            for p in 0..instance.n_products() {
                violations.push(Violation::Totality { store: i, product: p });
            }
        }
        return FeasibilityReport { violations };
    }
    for i in 0..n {
        let mut shipped = 0u64;
        let mut dests = BTreeSet::new();
        for p in 0..instance.n_products() {
            let j = plan.dest(i, p);
            if j >= n {
                violations.push(Violation::Totality { store: i, product: p });
                continue;
            }
            if j != i {
                shipped += instance.stock_total(i, p);
                dests.insert(j);
            }
        }
        let store = instance.store(i);
        if let Some(cap) = store.sku_cap {
            if shipped > cap {
                violations.push(Violation::SkuCapacity {
                    store: i,
                    shipped,
                    cap,
                });
            }
        }
        if let Some(cap) = store.dest_cap {
            let used = dests.len() as u64;
            if used > cap {
                violations.push(Violation::DestinationCount { store: i, used, cap });
            }
        }
    }
    FeasibilityReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("gap undefined for non-positive lower bound; absolute difference {difference}")]
pub struct UndefinedGap {
    pub difference: Money,
}

/// Relative optimality gap `(ub - lb) / lb`.
pub fn optimality_gap(ub: Money, lb: Money) -> Result<f64, UndefinedGap> {
    if lb <= Money::ZERO {
        return Err(UndefinedGap { difference: ub - lb });
    }
    Ok((ub - lb).micros() as f64 / lb.micros() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub iteration: usize,
    pub lower: Option<Money>,
    pub upper: Option<Money>,
}

/// Bounds, timing and per-iteration trace for one solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundReport {
    pub lower_bound: Option<Money>,
    pub upper_bound: Option<Money>,
    pub wall_time: f64,
    pub trace: Vec<BoundPoint>,
}

impl BoundReport {
    pub fn gap(&self) -> Option<Result<f64, UndefinedGap>> {
        match (self.upper_bound, self.lower_bound) {
            (Some(ub), Some(lb)) => Some(optimality_gap(ub, lb)),
            _ => None,
        }
    }
}

/// Small hand-checkable instances.
pub mod fixtures {
    use super::*;

    pub fn product(id: usize, sizes: usize, r_cents: i64, c_cents: i64, h_micros: i64) -> Product {
        Product {
            id,
            sizes,
            revenue: Money::from_cents(r_cents),
            transfer_cost: Money::from_cents(c_cents),
            holding_cost: Money::from_micros(h_micros),
        }
    }

    /// Two stores, one product (r=10, c=1, h=0.05); store 0 holds 5 units
    /// nobody wants locally, store 1 wants 5.
    pub fn two_store() -> Instance {
        Instance::from_nested(
            vec![Store::unbounded(0), Store::unbounded(1)],
            vec![product(0, 1, 1000, 100, 50_000)],
            &[vec![vec![5]], vec![vec![0]]],
            &[vec![vec![0]], vec![vec![5]]],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn implied_sales_single_store_keep() {
        let inst = Instance::from_nested(
            vec![Store::unbounded(0)],
            vec![product(0, 1, 1000, 100, 0)],
            &[vec![vec![3]]],
            &[vec![vec![1]]],
        )
        .unwrap();
        let sales = implied_sales(&inst, &TransferPlan::keep_all_for(&inst));
        assert_eq!(sales.held, vec![3]);
        assert_eq!(sales.sold, vec![1]);
    }

    #[test]
    fn implied_sales_full_match() {
        let inst = Instance::from_nested(
            vec![Store::unbounded(0), Store::unbounded(1)],
            vec![product(0, 1, 1000, 100, 0)],
            &[vec![vec![5]], vec![vec![0]]],
            &[vec![vec![0]], vec![vec![5]]],
        )
        .unwrap();
        let mut plan = TransferPlan::keep_all_for(&inst);
        plan.set_dest(0, 0, 1);
        let sales = implied_sales(&inst, &plan);
        assert_eq!(sales.held, vec![0, 5]);
        assert_eq!(sales.sold, vec![0, 5]);
    }

    #[test]
    fn implied_sales_zero_stock() {
        let inst = Instance::from_nested(
            vec![Store::unbounded(0), Store::unbounded(1)],
            vec![product(0, 2, 1000, 100, 0)],
            &[vec![vec![0, 0]], vec![vec![0, 0]]],
            &[vec![vec![4, 1]], vec![vec![0, 2]]],
        )
        .unwrap();
        let mut plan = TransferPlan::keep_all_for(&inst);
        plan.set_dest(1, 0, 0);
        let sales = implied_sales(&inst, &plan);
        assert!(sales.held.iter().all(|&w| w == 0));
        assert!(sales.sold.iter().all(|&z| z == 0));
    }

    #[test]
    fn two_store_objectives() {
        let inst = two_store();
        let keep = TransferPlan::keep_all_for(&inst);
        assert_eq!(evaluate_objective(&inst, &keep), Money::from_micros(-250_000));
        let mut ship = keep.clone();
        ship.set_dest(0, 0, 1);
        assert_eq!(evaluate_objective(&inst, &ship), Money::from_units(45));
    }

    #[test]
    fn keep_plan_is_always_feasible() {
        let inst = two_store().with_capacities(&[(Some(0), Some(0)), (Some(0), Some(0))]);
        assert!(check_feasibility(&inst, &TransferPlan::keep_all_for(&inst)).is_feasible());
    }

    #[test]
    fn sku_capacity_violation() {
        let inst = Instance::from_nested(
            vec![
                Store {
                    id: 0,
                    sku_cap: Some(3),
                    dest_cap: None,
                },
                Store::unbounded(1),
            ],
            vec![product(0, 2, 1000, 100, 0)],
            &[vec![vec![1, 3]], vec![vec![0, 0]]],
            &[vec![vec![0, 0]], vec![vec![2, 2]]],
        )
        .unwrap();
        let mut plan = TransferPlan::keep_all_for(&inst);
        plan.set_dest(0, 0, 1);
        let report = check_feasibility(&inst, &plan);
        assert_eq!(
            report.violations,
            vec![Violation::SkuCapacity {
                store: 0,
                shipped: 4,
                cap: 3
            }]
        );
    }

    #[test]
    fn destination_count_violation() {
        let inst = Instance::from_nested(
            vec![
                Store {
                    id: 0,
                    sku_cap: None,
                    dest_cap: Some(1),
                },
                Store::unbounded(1),
                Store::unbounded(2),
            ],
            vec![product(0, 1, 1000, 100, 0), product(1, 1, 1000, 100, 0)],
            &[
                vec![vec![2], vec![2]],
                vec![vec![0], vec![0]],
                vec![vec![0], vec![0]],
            ],
            &[
                vec![vec![0], vec![0]],
                vec![vec![2], vec![0]],
                vec![vec![0], vec![2]],
            ],
        )
        .unwrap();
        let mut plan = TransferPlan::keep_all_for(&inst);
        plan.set_dest(0, 0, 1);
        plan.set_dest(0, 1, 2);
        let report = check_feasibility(&inst, &plan);
        assert_eq!(
            report.violations,
            vec![Violation::DestinationCount {
                store: 0,
                used: 2,
                cap: 1
            }]
        );
    }

    #[test]
    fn out_of_range_destination_is_a_totality_violation() {
        let inst = two_store();
        let plan = TransferPlan::from_dest(2, 1, vec![7, 1]);
        assert_eq!(
            check_feasibility(&inst, &plan).violations,
            vec![Violation::Totality { store: 0, product: 0 }]
        );
    }

    #[test]
    fn gap_values() {
        let g = optimality_gap(Money::from_units(110), Money::from_units(100)).unwrap();
        assert!((g - 0.10).abs() < 1e-12);
        assert_eq!(optimality_gap(Money::from_units(100), Money::from_units(100)), Ok(0.0));
        let g = optimality_gap(Money::from_f64(387.2), Money::from_units(100)).unwrap();
        assert!((g - 2.872).abs() < 1e-12);
        assert_eq!(
            optimality_gap(Money::from_units(5), Money::ZERO),
            Err(UndefinedGap {
                difference: Money::from_units(5)
            })
        );
    }

    #[test]
    fn rejects_bad_products_and_shapes() {
        let bad = Instance::from_nested(
            vec![Store::unbounded(0)],
            vec![product(0, 1, 0, 0, 0)],
            &[vec![vec![1]]],
            &[vec![vec![1]]],
        );
        assert!(matches!(bad, Err(ModelError::InvalidProduct { .. })));
        let bad = Instance::new(
            vec![Store::unbounded(0)],
            vec![product(0, 2, 100, 0, 0)],
            vec![1],
            vec![1, 1],
        );
        assert!(matches!(bad, Err(ModelError::ShapeMismatch { .. })));
    }
}
