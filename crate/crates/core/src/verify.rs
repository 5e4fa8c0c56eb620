//! Brute-force oracles run against the solver at small scale.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{generate_channel, ChannelRealization, ScenarioConfig};
use crate::error::{Error, Result};
use crate::follower::{select_subbands, subset_value, PriceVector};
use crate::leader::{
    descend_prices, descent_iteration_bound, exact_price_oracle, fixed_structure_demand, lambda_upper_bound,
    price_upper_bound, FreezeReason, PriceState,
};
use crate::ocf::{core_check, LambdaCache};
use crate::sim::{bracket_check, run_hierarchical, FEASIBILITY_SLACK};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// The property does not apply to this instance.
    Skip,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// One sub-band of a fixed-structure price descent.
#[derive(Clone, Debug, PartialEq)]
pub struct BandBracket {
    pub subband: usize,
    pub mu_star: f64,
    pub oracle: f64,
    pub interference: f64,
    pub reason: FreezeReason,
    pub ok: bool,
}

/// Freezes prices against the demand of a fixed structure in which every UU
/// sits on every sub-band, then compares each frozen price with the bisection
/// oracle. The oracle must lie in `[μ*(1-ε), μ*]` and the demand at `μ*` must
/// respect the cap.
pub fn fixed_structure_bracket(real: &ChannelRealization, config: &ScenarioConfig) -> Result<Vec<BandBracket>> {
    let k_count = real.num_uus();
    let m_count = real.num_subbands();
    let full = if k_count == 64 { u64::MAX } else { (1u64 << k_count) - 1 };
    let mut cache = LambdaCache::new();
    let mut lambdas = Vec::with_capacity(m_count);
    let mut hs = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut l = vec![0.0; k_count];
        for &(k, v) in cache.lambdas(real, m, full) {
            l[k] = v;
        }
        lambdas.push(l);
        hs.push((0..k_count).map(|k| real.h(k, m)).collect::<Vec<_>>());
    }
    let ceiling = config.power_cap;
    let mu_bar = price_upper_bound(real, lambda_upper_bound(real))?;
    let bound = descent_iteration_bound(mu_bar, config.epsilon);
    let state = PriceState::new(PriceVector::uniform(m_count, mu_bar), false);
    let (state, _) = descend_prices(state, config.interference_cap, config.epsilon, bound + 1, |mu| {
        (0..m_count)
            .map(|m| fixed_structure_demand(&lambdas[m], &hs[m], mu[m], ceiling))
            .collect()
    });

    let mut out = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let Some(reason) = state.frozen[m] else {
            return Err(Error::InvalidConfig(format!(
                "sub-band {m} still unfrozen after {} iterations",
                bound + 1
            )));
        };
        let mu_star = state.current[m];
        let interference = fixed_structure_demand(&lambdas[m], &hs[m], mu_star, ceiling);
        let oracle = match exact_price_oracle(&lambdas[m], &hs[m], config.interference_cap, ceiling) {
            Ok(p) => p,
            Err(Error::NoPositivePair) => 0.0,
            Err(e) => return Err(e),
        };
        let feasible = interference <= config.interference_cap * (1.0 + FEASIBILITY_SLACK) + 1e-15;
        let bracketed = match reason {
            FreezeReason::Overshoot => {
                let slack = 2.0 * crate::leader::ORACLE_TOLERANCE;
                oracle >= mu_star * (1.0 - config.epsilon) * (1.0 - slack) && oracle <= mu_star * (1.0 + slack)
            }
            // The descent never overshot, so the cap is slack all the way down.
            FreezeReason::Floor => oracle <= mu_star,
            FreezeReason::RevenuePeak => false,
        };
        out.push(BandBracket {
            subband: m,
            mu_star,
            oracle,
            interference,
            reason,
            ok: feasible && bracketed,
        });
    }
    Ok(out)
}

/// Every subset of `0..n` in lexicographic order of index lists.
fn lexicographic_subsets(n: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(cur.clone());
        for i in start..n {
            cur.push(i);
            extend(i + 1, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    extend(0, n, &mut Vec::new(), &mut out);
    out.sort();
    out
}

/// Best cap-feasible subset of positive-payoff items by plain enumeration;
/// the lexicographically smallest among equal sums.
pub fn enumerate_best_subset(powers: &[f64], payoffs: &[f64], cap: f64) -> Vec<usize> {
    let items: Vec<usize> = (0..powers.len()).filter(|&i| payoffs[i] > 0.0 && powers[i] > 0.0).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for local in lexicographic_subsets(items.len()) {
        let subset: Vec<usize> = local.iter().map(|&i| items[i]).collect();
        let weight: f64 = subset.iter().map(|&i| powers[i]).sum();
        if weight > cap {
            continue;
        }
        let value = subset_value(payoffs, &subset);
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, subset));
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

/// Random knapsack instances up to `max_items`, each compared against
/// [`enumerate_best_subset`]. Returns the first mismatch.
pub fn subset_equivalence(seed: u64, instances: usize, max_items: usize) -> Result<Option<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let n = rng.random_range(1..=max_items);
        let powers: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let payoffs: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..3.0)).collect();
        let total: f64 = powers.iter().sum();
        let cap = rng.random_range(0.0..total.max(1e-9));
        let got = select_subbands(&powers, &payoffs, cap, max_items)?;
        let want = enumerate_best_subset(&powers, &payoffs, cap);
        let got_value = subset_value(&payoffs, &got.subset);
        let want_value = subset_value(&payoffs, &want);
        if got_value.to_bits() != want_value.to_bits() {
            return Ok(Some(format!(
                "instance {i}: solver {:?} = {got_value}, enumeration {want:?} = {want_value}",
                got.subset
            )));
        }
    }
    Ok(None)
}

/// Runs the oracle suite on one seeded scenario of `k` UUs and `m` sub-bands.
///
/// Fails with [`Error::OracleScale`] beyond the core oracle's limits.
pub fn oracle_suite(seed: u64, k: usize, m: usize) -> Result<Vec<Check>> {
    if k > 5 || m > 4 {
        return Err(Error::OracleScale { uus: k, subbands: m });
    }
    let config = ScenarioConfig {
        seed,
        ..ScenarioConfig::new(k, m)
    };
    config.validate()?;
    let real = generate_channel(&config);
    let outcome = run_hierarchical(&config)?;
    let mut checks = Vec::new();

    checks.push(if outcome.converged {
        let report = core_check(outcome.powers(), &outcome.prices, &real, &config)?;
        let detail = match &report.certificate {
            None => format!(
                "no blocking coalition among {} (support, sub-band) pairs on a {}-point grid",
                report.coalitions_checked, report.grid_points
            ),
            Some(c) => format!(
                "members {:?} on sub-band {} at powers {:?} get {:?} > {:?}",
                c.members, c.subband, c.powers, c.shares, c.current
            ),
        };
        Check {
            name: "core_check",
            status: Status::from_bool(report.in_core),
            detail,
        }
    } else {
        Check {
            name: "core_check",
            status: Status::Skip,
            detail: "outcome carries no equilibrium certificate".into(),
        }
    });

    let bands = fixed_structure_bracket(&real, &config)?;
    let bad: Vec<&BandBracket> = bands.iter().filter(|b| !b.ok).collect();
    checks.push(Check {
        name: "price_bracket",
        status: Status::from_bool(bad.is_empty()),
        detail: match bad.first() {
            None => format!("{} sub-bands, oracle within [mu*(1-eps), mu*]", bands.len()),
            Some(b) => format!(
                "sub-band {}: mu* = {:e}, oracle = {:e}, interference = {:e}",
                b.subband, b.mu_star, b.oracle, b.interference
            ),
        },
    });

    let lowered = bracket_check(&outcome, &real);
    let unjustified: Vec<&(usize, f64)> = lowered.iter().filter(|(_, i)| *i <= config.interference_cap).collect();
    checks.push(Check {
        name: "frozen_price_bracket",
        status: if lowered.is_empty() {
            Status::Skip
        } else {
            Status::from_bool(unjustified.is_empty())
        },
        detail: match unjustified.first() {
            None if lowered.is_empty() => "no sub-band froze on an overshoot".into(),
            None => format!("{} overshoot freezes all exceed the cap one step lower", lowered.len()),
            Some((band, i)) => format!("sub-band {band}: interference {i:e} one step lower is within the cap"),
        },
    });

    let mismatch = subset_equivalence(seed, 200, 10)?;
    checks.push(Check {
        name: "subset_enumeration",
        status: Status::from_bool(mismatch.is_none()),
        detail: mismatch.unwrap_or_else(|| "200 instances match plain enumeration".into()),
    });

    let limit = (1usize << k) - 1;
    let seen = outcome.supports_seen.len();
    checks.push(Check {
        name: "support_count",
        status: Status::from_bool(seen <= limit),
        detail: format!("{seen} distinct supports observed, bound {limit}"),
    });

    Ok(checks)
}
