#![allow(dead_code)]

use proptest::prelude::*;
use transship::model::fixtures::product;
use transship::{Instance, Product, Store};

/// Shape and contents of a small random instance.
#[derive(Debug, Clone)]
pub struct TinySpec {
    pub products: Vec<(usize, i64, i64)>,
    pub stock: Vec<Vec<Vec<u32>>>,
    pub demand: Vec<Vec<Vec<u32>>>,
    pub caps: Vec<(Option<u64>, Option<u64>)>,
}

impl TinySpec {
    pub fn build(&self) -> Instance {
        let n = self.stock.len();
        let products: Vec<Product> = self
            .products
            .iter()
            .enumerate()
            // holding cost 0.5% of revenue, in micro-units
            .map(|(id, &(sizes, r, c))| product(id, sizes, r, c, r * 50))
            .collect();
        let stores: Vec<Store> = (0..n).map(Store::unbounded).collect();
        Instance::from_nested(stores, products, &self.stock, &self.demand)
            .unwrap()
            .with_capacities(&self.caps)
    }
}

fn tensor(n: usize, sizes: &[usize], max_qty: u32) -> impl Strategy<Value = Vec<Vec<Vec<u32>>>> {
    let per_store: Vec<_> = sizes
        .iter()
        .map(|&k| prop::collection::vec(0..=max_qty, k))
        .collect();
    prop::collection::vec(per_store, n)
}

fn caps(n: usize, max_a: u64, max_b: u64) -> impl Strategy<Value = Vec<(Option<u64>, Option<u64>)>> {
    prop::collection::vec(
        (
            prop::option::weighted(0.7, 0..=max_a),
            prop::option::weighted(0.7, 0..=max_b),
        ),
        n,
    )
}

/// Random instance with up to `max_stores` stores, `max_products`
/// products, `max_sizes` sizes and entries at most `max_qty`. Prices are
/// 20..50 in cents resolution, transfer costs 0.40..1.50; some caps are
/// unbounded.
pub fn tiny_instance(
    max_stores: usize,
    max_products: usize,
    max_sizes: usize,
    max_qty: u32,
) -> impl Strategy<Value = TinySpec> {
    (1..=max_stores, prop::collection::vec((1..=max_sizes, 2000i64..=5000, 40i64..=150), 1..=max_products))
        .prop_flat_map(move |(n, products)| {
            let sizes: Vec<usize> = products.iter().map(|p| p.0).collect();
            let max_a = (max_qty as u64) * (max_sizes as u64) * (max_products as u64);
            (
                Just(products),
                tensor(n, &sizes, max_qty),
                tensor(n, &sizes, max_qty),
                caps(n, max_a, n as u64),
            )
        })
        .prop_map(|(products, stock, demand, caps)| TinySpec {
            products,
            stock,
            demand,
            caps,
        })
}
