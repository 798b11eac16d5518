//! Random instance generation and capacity calibration.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Instance, Product, Store};
use crate::money::Money;
use crate::relax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_stores: usize,
    pub n_products: usize,
    /// Sizes per product, uniform across the instance.
    pub sizes: usize,
    /// Stock and demand are drawn from `{0, ..., qty_max}`.
    pub qty_max: u32,
    /// Unit revenue range in currency units; draws are rounded to cents.
    pub price_range: (f64, f64),
    pub transfer_cost_range: (f64, f64),
    /// Holding cost as a fraction of unit revenue.
    pub holding_rate: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(n_stores: usize, n_products: usize, sizes: usize, seed: u64) -> Self {
        GenConfig {
            n_stores,
            n_products,
            sizes,
            qty_max: 10,
            price_range: (20.0, 50.0),
            transfer_cost_range: (0.4, 1.5),
            holding_rate: 0.005,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_stores == 0 || self.n_products == 0 || self.sizes == 0 {
            return Err("stores, products and sizes must all be positive".into());
        }
        let (lo, hi) = self.price_range;
        if !(lo > 0.0 && hi > lo) {
            return Err(format!("price range [{lo}, {hi}] must be positive and non-degenerate"));
        }
        let (lo, hi) = self.transfer_cost_range;
        if !(lo >= 0.0 && hi > lo) {
            return Err(format!("transfer cost range [{lo}, {hi}] must be non-degenerate"));
        }
        if !(self.holding_rate >= 0.0) {
            return Err("holding rate must be non-negative".into());
        }
        if self.qty_max == 0 {
            return Err("quantity range must be non-degenerate".into());
        }
        Ok(())
    }
}

fn cents(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> Money {
    let x: f64 = rng.gen_range(lo..=hi);
    Money::from_cents((x * 100.0).round() as i64)
}

/// Draws an uncalibrated instance (all capacities unbounded). The same
/// config always yields the same instance.
pub fn generate(config: &GenConfig) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let products: Vec<Product> = (0..config.n_products)
        .map(|id| {
            let revenue = cents(&mut rng, config.price_range);
            let transfer_cost = cents(&mut rng, config.transfer_cost_range);
            let holding_cost = Money::from_f64(revenue.to_f64() * config.holding_rate);
            Product {
                id,
                sizes: config.sizes,
                revenue,
                transfer_cost,
                holding_cost,
            }
        })
        .collect();
    let stores: Vec<Store> = (0..config.n_stores).map(Store::unbounded).collect();
    let cells = config.n_stores * config.n_products * config.sizes;
    let mut stock = Vec::with_capacity(cells);
    let mut demand = Vec::with_capacity(cells);
    for _ in 0..cells {
        demand.push(rng.gen_range(0..=config.qty_max));
        stock.push(rng.gen_range(0..=config.qty_max));
    }
    Instance::new(stores, products, stock, demand).expect("generated instance is well formed")
}

/// Fraction of the unconstrained maxima granted to each store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CapacityLevel {
    pub num: u32,
    pub den: u32,
}

impl CapacityLevel {
    pub const LOW: CapacityLevel = CapacityLevel { num: 1, den: 3 };
    pub const MEDIUM: CapacityLevel = CapacityLevel { num: 1, den: 2 };
    pub const HIGH: CapacityLevel = CapacityLevel { num: 2, den: 3 };
    pub const FULL: CapacityLevel = CapacityLevel { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self, String> {
        if den == 0 || num == 0 || num > den {
            return Err(format!("capacity fraction {num}/{den} must lie in (0, 1]"));
        }
        Ok(CapacityLevel { num, den })
    }

    pub fn fraction(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `ceil(fraction * max)` in integer arithmetic.
    pub fn scale(self, max: u64) -> u64 {
        (max * self.num as u64).div_ceil(self.den as u64)
    }

    pub fn label(self) -> String {
        match self {
            CapacityLevel::LOW => "low".into(),
            CapacityLevel::MEDIUM => "med".into(),
            CapacityLevel::HIGH => "high".into(),
            CapacityLevel { num, den } => format!("{num}/{den}"),
        }
    }
}

impl fmt::Display for CapacityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for CapacityLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "low" => Ok(CapacityLevel::LOW),
            "med" | "medium" => Ok(CapacityLevel::MEDIUM),
            "high" => Ok(CapacityLevel::HIGH),
            "full" => Ok(CapacityLevel::FULL),
            other => {
                let (n, d) = other
                    .split_once('/')
                    .ok_or_else(|| format!("unknown capacity level `{other}`"))?;
                let num = n.trim().parse().map_err(|_| format!("bad numerator in `{other}`"))?;
                let den = d.trim().parse().map_err(|_| format!("bad denominator in `{other}`"))?;
                CapacityLevel::new(num, den)
            }
        }
    }
}

/// Per-store `(units shipped, distinct destinations)` in the unconstrained
/// optimum returned by [`relax::solve_unconstrained`].
pub fn unconstrained_maxima(instance: &Instance) -> Vec<(u64, u64)> {
    let n = instance.n_stores();
    let flow = relax::solve_unconstrained(instance);
    let units = flow.shipped_units(n);
    let dests = flow.destinations(n);
    units
        .iter()
        .zip(&dests)
        .map(|(&u, d)| (u.round() as u64, d.len() as u64))
        .collect()
}

/// Sets `A_i = ceil(f * maxA_i)` and `B_i = ceil(f * maxB_i)` from the
/// unconstrained optimum. Existing capacities are ignored.
pub fn calibrate_capacities(instance: &Instance, level: CapacityLevel) -> Instance {
    calibrate_from_maxima(instance, &unconstrained_maxima(instance), level, level)
}

/// Calibration with separate levels for the unit cap and the destination cap.
pub fn calibrate_from_maxima(
    instance: &Instance,
    maxima: &[(u64, u64)],
    sku_level: CapacityLevel,
    dest_level: CapacityLevel,
) -> Instance {
    let caps: Vec<_> = maxima
        .iter()
        .map(|&(a, b)| (Some(sku_level.scale(a)), Some(dest_level.scale(b))))
        .collect();
    instance.with_capacities(&caps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::two_store;

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = GenConfig::new(4, 6, 5, 17);
        assert_eq!(generate(&cfg), generate(&cfg));
        let other = GenConfig::new(4, 6, 5, 18);
        assert_ne!(generate(&cfg), generate(&other));
    }

    #[test]
    fn tensor_shapes() {
        let inst = generate(&GenConfig::new(50, 100, 5, 1));
        assert_eq!(inst.n_stores(), 50);
        assert_eq!(inst.n_products(), 100);
        assert!(inst.products().iter().all(|p| p.sizes == 5));
        assert_eq!(inst.stock_flat().len(), 50 * 100 * 5);
        assert_eq!(inst.demand_flat().len(), 50 * 100 * 5);
    }

    #[test]
    fn holding_cost_is_half_percent_of_revenue() {
        let inst = generate(&GenConfig::new(2, 300, 1, 5));
        for p in inst.products() {
            assert_eq!(p.holding_cost.micros() * 200, p.revenue.micros());
        }
    }

    #[test]
    fn parameter_ranges_and_demand_mean() {
        let inst = generate(&GenConfig::new(100, 200, 5, 9));
        assert!(inst.stock_flat().len() >= 100_000);
        assert!(inst.stock_flat().iter().all(|&q| q <= 10));
        assert!(inst.demand_flat().iter().all(|&q| q <= 10));
        let mean =
            inst.demand_flat().iter().map(|&q| q as f64).sum::<f64>() / inst.demand_flat().len() as f64;
        assert!((4.8..=5.2).contains(&mean), "{mean}");
        for p in inst.products() {
            assert!(p.revenue >= Money::from_units(20) && p.revenue <= Money::from_units(50));
            assert!(p.transfer_cost >= Money::from_cents(40) && p.transfer_cost <= Money::from_cents(150));
            assert_eq!(p.revenue.micros() % 10_000, 0);
            assert_eq!(p.transfer_cost.micros() % 10_000, 0);
        }
    }

    #[test]
    fn level_scaling_uses_ceiling() {
        assert_eq!(CapacityLevel::LOW.scale(30), 10);
        assert_eq!(CapacityLevel::LOW.scale(1), 1);
        assert_eq!(CapacityLevel::HIGH.scale(5), 4);
        assert_eq!(CapacityLevel::MEDIUM.scale(0), 0);
        assert_eq!("2/3".parse::<CapacityLevel>(), Ok(CapacityLevel::HIGH));
        assert!("0/3".parse::<CapacityLevel>().is_err());
        assert!("huge".parse::<CapacityLevel>().is_err());
    }

    #[test]
    fn calibration_on_two_store_example() {
        let inst = calibrate_capacities(&two_store(), CapacityLevel::HIGH);
        assert_eq!(inst.store(0).sku_cap, Some(4));
        assert_eq!(inst.store(0).dest_cap, Some(1));
        // store 1 ships nothing
        assert_eq!(inst.store(1).sku_cap, Some(0));
        assert_eq!(inst.store(1).dest_cap, Some(0));
    }

    #[test]
    fn full_level_calibration_is_idempotent() {
        let inst = generate(&GenConfig::new(6, 8, 3, 2));
        let once = calibrate_capacities(&inst, CapacityLevel::FULL);
        let twice = calibrate_capacities(&once, CapacityLevel::FULL);
        assert_eq!(once, twice);
    }
}
