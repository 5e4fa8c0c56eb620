//! Macro-cell operator side: revenue, interference monitoring and the
//! geometric price descent.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::follower::{waterfill_power, PowerAllocation, PriceVector};

/// Prices below this are treated as converged to zero.
pub const PRICE_FLOOR: f64 = 1e-12;

/// Relative tolerance of the bisection oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezeReason {
    /// Interference went above the cap; price reverted to the last feasible one.
    Overshoot,
    /// Revenue fell on the last decrease; price reverted to the previous one.
    RevenuePeak,
    /// Price decayed below [`PRICE_FLOOR`].
    Floor,
}

impl FreezeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FreezeReason::Overshoot => "overshoot",
            FreezeReason::RevenuePeak => "revenue",
            FreezeReason::Floor => "floor",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceState {
    /// Price at which the next interference measurement is taken.
    pub current: PriceVector,
    pub previous: PriceVector,
    pub frozen: Vec<Option<FreezeReason>>,
    /// Revenue measured at `previous`, per sub-band.
    pub last_revenue: Vec<f64>,
    pub iteration: usize,
    pub revenue_guard: bool,
}

impl PriceState {
    pub fn new(initial: PriceVector, revenue_guard: bool) -> Self {
        let m = initial.len();
        Self {
            previous: initial.clone(),
            current: initial,
            frozen: vec![None; m],
            last_revenue: vec![0.0; m],
            iteration: 0,
            revenue_guard,
        }
    }

    pub fn is_frozen(&self, m: usize) -> bool {
        self.frozen[m].is_some()
    }

    pub fn all_frozen(&self) -> bool {
        self.frozen.iter().all(Option::is_some)
    }
}

/// Largest division factor any coalition can hand out on any sub-band.
///
/// Every eigenvalue of a coalition's `GᵀG` is bounded by its trace, which is
/// bounded by the squared Frobenius norm of the full normalized gain matrix.
pub fn lambda_upper_bound(real: &ChannelRealization) -> f64 {
    let k = real.num_uus();
    (0..real.num_subbands())
        .map(|m| {
            (0..k)
                .flat_map(|j| (0..k).map(move |i| (j, i)))
                .map(|(j, i)| real.g(m, j, i).powi(2))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// `v̄ / h̲`: every UU demands zero power at this price.
pub fn price_upper_bound(real: &ChannelRealization, lambda_max: f64) -> Result<f64> {
    let mut h_min = f64::INFINITY;
    for k in 0..real.num_uus() {
        for m in 0..real.num_subbands() {
            let h = real.h(k, m);
            if h > 0.0 && h < h_min {
                h_min = h;
            }
        }
    }
    if !h_min.is_finite() {
        return Err(Error::DegenerateChannel);
    }
    Ok(lambda_max / h_min)
}

/// `Σ_k p[k][m] h[k][m]`.
pub fn aggregate_interference(p: &PowerAllocation, real: &ChannelRealization, m: usize) -> f64 {
    (0..p.num_uus()).map(|k| p.get(k, m) * real.h(k, m)).sum()
}

pub fn interference_vector(p: &PowerAllocation, real: &ChannelRealization) -> Vec<f64> {
    (0..p.num_subbands())
        .map(|m| aggregate_interference(p, real, m))
        .collect()
}

/// `Σ_m μ_m · interference_m`.
pub fn mco_revenue(p: &PowerAllocation, mu: &PriceVector, real: &ChannelRealization) -> f64 {
    (0..p.num_subbands())
        .map(|m| mu[m] * aggregate_interference(p, real, m))
        .sum()
}

/// Reacts to the interference measured at `state.current`.
///
/// Overshooting sub-bands freeze at the previous price. With the revenue guard
/// on, a sub-band whose revenue dropped also freezes at the previous price.
/// Every other unfrozen price decays by `1 - epsilon`, freezing once it falls
/// below [`PRICE_FLOOR`].
pub fn price_step(state: &PriceState, interference: &[f64], q_bar: f64, epsilon: f64) -> PriceState {
    let mut next = state.clone();
    for m in 0..state.current.len() {
        if state.is_frozen(m) {
            continue;
        }
        let mu = state.current[m];
        let revenue = mu * interference[m];
        if interference[m] > q_bar {
            next.current.0[m] = state.previous[m];
            next.frozen[m] = Some(FreezeReason::Overshoot);
        } else if state.revenue_guard && revenue < state.last_revenue[m] {
            next.current.0[m] = state.previous[m];
            next.frozen[m] = Some(FreezeReason::RevenuePeak);
        } else {
            let lowered = (1.0 - epsilon) * mu;
            next.previous.0[m] = mu;
            next.last_revenue[m] = revenue;
            next.current.0[m] = lowered;
            if lowered < PRICE_FLOOR {
                next.frozen[m] = Some(FreezeReason::Floor);
            }
        }
    }
    next.iteration += 1;
    next
}

/// Runs [`price_step`] against a demand model until every sub-band is frozen.
///
/// `measure` returns the aggregate interference per sub-band at a price
/// vector. Returns the final state and whether it finished within `max_iters`.
pub fn descend_prices<F>(
    mut state: PriceState,
    q_bar: f64,
    epsilon: f64,
    max_iters: usize,
    mut measure: F,
) -> (PriceState, bool)
where
    F: FnMut(&PriceVector) -> Vec<f64>,
{
    while !state.all_frozen() {
        if state.iteration >= max_iters {
            return (state, false);
        }
        let interference = measure(&state.current);
        state = price_step(&state, &interference, q_bar, epsilon);
    }
    (state, true)
}

/// Iterations the descent needs to reach the floor from `mu_bar`.
pub fn descent_iteration_bound(mu_bar: f64, epsilon: f64) -> usize {
    if mu_bar <= PRICE_FLOOR {
        return 1;
    }
    ((PRICE_FLOOR / mu_bar).ln() / (1.0 - epsilon).ln()).ceil() as usize
}

/// Interference a fixed set of `(λ, h)` pairs generates at price `mu`.
pub fn fixed_structure_demand(lambdas: &[f64], hs: &[f64], mu: f64, ceiling: f64) -> f64 {
    lambdas
        .iter()
        .zip(hs)
        .filter(|(l, h)| **l > 0.0 && **h > 0.0)
        .map(|(&l, &h)| waterfill_power(l, mu, h, ceiling).min(ceiling) * h)
        .sum()
}

/// Price at which the fixed structure's interference meets `q_bar`, by bisection.
///
/// Returns 0 when even the near-zero-price demand (each UU at `ceiling`)
/// stays within `q_bar`.
pub fn exact_price_oracle(lambdas: &[f64], hs: &[f64], q_bar: f64, ceiling: f64) -> Result<f64> {
    assert_eq!(lambdas.len(), hs.len());
    let pairs: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(hs)
        .filter(|(l, h)| **l > 0.0 && **h > 0.0)
        .map(|(&l, &h)| (l, h))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoPositivePair);
    }
    let saturated: f64 = pairs.iter().map(|(_, h)| ceiling * h).sum();
    if saturated <= q_bar {
        return Ok(0.0);
    }
    let demand = |mu: f64| fixed_structure_demand(lambdas, hs, mu, ceiling);
    // Zero demand above max λ / min h.
    let mut hi = pairs.iter().map(|p| p.0 / p.1).fold(0.0, f64::max);
    let mut lo = hi;
    while demand(lo) <= q_bar {
        lo *= 0.5;
    }
    // demand(lo) > q_bar >= demand(hi)
    while hi - lo > ORACLE_TOLERANCE * hi {
        let mid = 0.5 * (lo + hi);
        if demand(mid) > q_bar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
