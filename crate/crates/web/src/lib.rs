//! Browser bindings: water-filling curves, price descent trajectories and
//! the overlapping versus single-sub-band comparison.

use femtoshare::experiments::mean;
use femtoshare::follower::{subband_payoff, waterfill_power, AccessMode};
use femtoshare::sim::{run_with, SimOptions};
use femtoshare::ScenarioConfig;
use wasm_bindgen::prelude::*;

/// Flattened `[mu, power, payoff]` triples for `points` prices spread
/// evenly over `(0, mu_max]`.
#[wasm_bindgen]
pub fn waterfill_curve(lambda: f64, h: f64, power_cap: f64, mu_max: f64, points: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * points);
    for i in 1..=points {
        let mu = mu_max * i as f64 / points as f64;
        let p = waterfill_power(lambda, mu, h, power_cap).min(power_cap);
        out.extend([mu, p, subband_payoff(p, mu, lambda, h)]);
    }
    out
}

/// Price history and final figures of one hierarchical game run.
#[wasm_bindgen]
pub struct Trajectory {
    subbands: usize,
    prices: Vec<f64>,
    converged: bool,
    mco_payoff: f64,
    uu_payoff_sum: f64,
    active_uus: usize,
    num_coalitions: usize,
}

impl Trajectory {
    pub fn compute(
        num_uus: usize,
        num_subbands: usize,
        power_cap: f64,
        interference_cap: f64,
        seed: u64,
    ) -> femtoshare::Result<Self> {
        let config = ScenarioConfig {
            power_cap,
            interference_cap,
            seed,
            ..ScenarioConfig::new(num_uus, num_subbands)
        };
        let o = run_with(&config, &SimOptions::default())?;
        Ok(Self {
            subbands: num_subbands,
            prices: o.price_history.iter().flat_map(|p| p.0.iter().copied()).collect(),
            converged: o.converged,
            mco_payoff: o.mco_payoff,
            uu_payoff_sum: o.uu_payoff_sum(),
            active_uus: o.active_uus(),
            num_coalitions: o.num_coalitions(),
        })
    }
}

#[wasm_bindgen]
impl Trajectory {
    pub fn subbands(&self) -> usize {
        self.subbands
    }

    pub fn iterations(&self) -> usize {
        self.prices.len() / self.subbands
    }

    /// Iteration-major: entry `t * subbands + m`.
    pub fn prices(&self) -> Vec<f64> {
        self.prices.clone()
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn mco_payoff(&self) -> f64 {
        self.mco_payoff
    }

    pub fn uu_payoff_sum(&self) -> f64 {
        self.uu_payoff_sum
    }

    pub fn active_uus(&self) -> usize {
        self.active_uus
    }

    pub fn num_coalitions(&self) -> usize {
        self.num_coalitions
    }
}

#[wasm_bindgen]
pub fn price_trajectory(
    num_uus: usize,
    num_subbands: usize,
    power_cap: f64,
    interference_cap: f64,
    seed: u32,
) -> Result<Trajectory, JsError> {
    Trajectory::compute(num_uus, num_subbands, power_cap, interference_cap, seed.into())
        .map_err(|e| JsError::new(&e.to_string()))
}

/// Flattened `[power_cap, overlapping, single]` mean UU payoff sums for power
/// caps 10, 20, ..., 100 over seeds `0..seeds`.
pub fn payoff_comparison(
    num_uus: usize,
    num_subbands: usize,
    interference_cap: f64,
    seeds: u64,
) -> femtoshare::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(30);
    for step in 1..=10 {
        let power_cap = 10.0 * f64::from(step);
        let mut sums = [Vec::new(), Vec::new()];
        for seed in 0..seeds {
            let config = ScenarioConfig {
                power_cap,
                interference_cap,
                seed,
                ..ScenarioConfig::new(num_uus, num_subbands)
            };
            for (i, access) in [AccessMode::Overlapping, AccessMode::SingleSubband].into_iter().enumerate() {
                let options = SimOptions {
                    access,
                    ..SimOptions::default()
                };
                sums[i].push(run_with(&config, &options)?.uu_payoff_sum());
            }
        }
        out.extend([power_cap, mean(&sums[0]), mean(&sums[1])]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn ocf_vs_cf(num_uus: usize, num_subbands: usize, interference_cap: f64, seeds: u32) -> Result<Vec<f64>, JsError> {
    payoff_comparison(num_uus, num_subbands, interference_cap, seeds.into()).map_err(|e| JsError::new(&e.to_string()))
}
