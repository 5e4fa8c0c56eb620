//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. An optional argument restricts the run to
//! criteria whose name contains it.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use femtoshare::channel::{generate_channel, ScenarioConfig};
use femtoshare::experiments::{mean, preset, run_sweep, sign_test, spearman, Arm, Scale, SweepResult, SweepSpec};
use femtoshare::follower::{subband_payoff, waterfill_power, AccessMode};
use femtoshare::leader::FreezeReason;
use femtoshare::ocf::{
    coalition_value, core_check, cyclic_preference_game, enumerate_supports, negotiate, LambdaCache,
    NegotiationOptions, Termination,
};
use femtoshare::sim::{overhead_report, run_hierarchical, EquilibriumOutcome};
use femtoshare::verify::fixed_structure_bracket;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn water_filling() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let step = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let lambda = rng.random_range(0.1..10.0);
        let mu = rng.random_range(0.5..5.0);
        let h = rng.random_range(0.5..5.0);
        let f = |p: f64| (1.0 + lambda * p).ln() - mu * h * p;
        let top = 10.0 / (mu * h);
        let n = (top / step).round() as usize;
        let grid_best = (0..=n).map(|i| f(i as f64 * step)).fold(f64::NEG_INFINITY, f64::max);
        let p = waterfill_power(lambda, mu, h, f64::INFINITY);
        worst = worst.max((subband_payoff(p, mu, lambda, h) - grid_best).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-6 && within(elapsed, 10),
        format!("max |payoff gap| {worst:.3e} over 10^4 triples in {elapsed:.2?}"),
    )
}

/// `Σ h · min((1/(μh) - 1/λ)⁺, cap)` over positive pairs.
fn demand(lambdas: &[f64], hs: &[f64], mu: f64, cap: f64) -> f64 {
    lambdas
        .iter()
        .zip(hs)
        .filter(|(l, h)| **l > 0.0 && **h > 0.0)
        .map(|(&l, &h)| h * (1.0 / (mu * h) - 1.0 / l).clamp(0.0, cap))
        .sum()
}

fn pricing_bracket() -> Outcome {
    let start = Instant::now();
    let mut bands = 0;
    let mut overshoots = 0;
    let mut failures = Vec::new();
    for seed in 0..100 {
        let config = ScenarioConfig {
            seed,
            ..ScenarioConfig::new(4, 4)
        };
        let real = generate_channel(&config);
        let full = (1u64 << config.num_uus) - 1;
        let mut cache = LambdaCache::new();
        let result = match fixed_structure_bracket(&real, &config) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        for b in result {
            bands += 1;
            let m = b.subband;
            let mut lambdas = vec![0.0; config.num_uus];
            for &(k, l) in cache.lambdas(&real, m, full) {
                lambdas[k] = l;
            }
            let hs: Vec<f64> = (0..config.num_uus).map(|k| real.h(k, m)).collect();
            let at_star = demand(&lambdas, &hs, b.mu_star, config.power_cap);
            let mut ok = b.ok && at_star <= config.interference_cap * (1.0 + 1e-9);
            if b.reason == FreezeReason::Overshoot {
                overshoots += 1;
                ok &= demand(&lambdas, &hs, b.mu_star * (1.0 - config.epsilon), config.power_cap) > config.interference_cap;
            }
            if !ok {
                failures.push(format!(
                    "seed {seed} sub-band {m}: mu* {:e}, oracle {:e}, interference {:e}",
                    b.mu_star, b.oracle, at_star
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        failures.is_empty() && within(elapsed, 30),
        match failures.first() {
            None => format!("{bands} sub-bands over 100 instances ({overshoots} overshoot freezes) in {elapsed:.2?}"),
            Some(f) => format!("{} failures, first: {f}", failures.len()),
        },
    )
}

fn all_frozen(o: &EquilibriumOutcome) -> bool {
    o.freeze.iter().all(Option::is_some)
}

fn termination_bound(runs: &[&EquilibriumOutcome], fig4: &SweepResult) -> Outcome {
    let bad: Vec<&&EquilibriumOutcome> = runs
        .iter()
        .filter(|o| !all_frozen(o) || o.outer_iterations > o.descent_bound)
        .collect();
    let fig4_runs: Vec<&EquilibriumOutcome> = fig4.runs.iter().map(|r| &r.outcome).collect();
    let fig4_max = fig4_runs.iter().map(|o| o.outer_iterations).max().unwrap_or(0);
    let fig4_ok = fig4_runs.iter().all(|o| all_frozen(o) && o.outer_iterations <= 2000);
    let detail = match bad.first() {
        Some(o) => format!(
            "{} of {} runs exceed the bound, e.g. {}: {} iterations, bound {}",
            bad.len(),
            runs.len(),
            o.run_id,
            o.outer_iterations,
            o.descent_bound
        ),
        None => format!(
            "{} runs within the descent bound; fig4 ({} seeds) all frozen, at most {fig4_max} outer iterations",
            runs.len(),
            fig4_runs.len()
        ),
    };
    verdict(bad.is_empty() && fig4_ok, detail)
}

fn support_finiteness(k4: &[EquilibriumOutcome], elapsed: Duration) -> Outcome {
    let at_three = enumerate_supports(3).len();
    let max_seen = k4.iter().map(|o| o.supports_seen.len()).max().unwrap_or(0);
    verdict(
        at_three == 7 && max_seen <= 15 && k4.len() == 100 && within(elapsed, 10),
        format!("{at_three} supports at K=3; at most {max_seen} distinct supports over 100 runs at K=4 in {elapsed:.2?}"),
    )
}

fn core_nonempty(k3: &[EquilibriumOutcome], elapsed: Duration) -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    for o in k3.iter().filter(|o| o.converged) {
        checked += 1;
        let real = generate_channel(&o.config);
        match core_check(o.powers(), &o.prices, &real, &o.config) {
            Ok(r) if r.in_core => {}
            Ok(r) => {
                let c = r.certificate.expect("blocked outcome has a certificate");
                failures.push(format!(
                    "{}: members {:?} on sub-band {} at powers {:?} get {:?} > {:?}",
                    o.run_id, c.members, c.subband, c.powers, c.shares, c.current
                ));
            }
            Err(e) => failures.push(format!("{}: {e}", o.run_id)),
        }
    }
    for f in &failures {
        println!("    blocking certificate {f}");
    }
    verdict(
        failures.is_empty() && checked > 0 && within(elapsed, 300),
        format!(
            "{checked} of {} runs certified, {} blocked on a 33-point grid, {elapsed:.2?}",
            k3.len(),
            failures.len()
        ),
    )
}

fn cycle_handling() -> Outcome {
    let mut with = cyclic_preference_game();
    let on = negotiate(
        &mut with,
        NegotiationOptions {
            tolerance: 1e-9,
            max_rounds: 200,
            use_history: true,
        },
    );
    let mut without = cyclic_preference_game();
    let off = negotiate(
        &mut without,
        NegotiationOptions {
            tolerance: 1e-9,
            max_rounds: 200,
            use_history: false,
        },
    );
    let terminated = on.termination != Termination::ForcedStop;
    verdict(
        terminated && off.revisits > 0,
        format!(
            "with history: {:?} after {} rounds; without: {:?}, {} revisits",
            on.termination, on.rounds, off.termination, off.revisits
        ),
    )
}

fn value_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = 0.0f64;
    let mut cache = LambdaCache::new();
    for i in 0..10_000 {
        let k = rng.random_range(1..=5usize);
        let config = ScenarioConfig {
            seed: i,
            ..ScenarioConfig::new(k, 1)
        };
        let real = generate_channel(&config);
        let mask = rng.random_range(1..1u64 << k);
        let mu = rng.random_range(0.01..5.0);
        let mut lambdas = vec![0.0; k];
        for &(j, l) in cache.lambdas(&real, 0, mask) {
            lambdas[j] = l;
        }
        let powers: Vec<f64> = (0..k)
            .map(|j| if mask >> j & 1 == 1 { rng.random_range(0.0..10.0) } else { 0.0 })
            .collect();
        let hs: Vec<f64> = (0..k).map(|j| real.h(j, 0)).collect();
        let shares: Vec<f64> = (0..k)
            .filter(|&j| powers[j] > 0.0)
            .map(|j| (lambdas[j] * powers[j]).ln_1p() - mu * hs[j] * powers[j])
            .collect();
        let sum: f64 = shares.iter().sum();
        let scale: f64 = shares.iter().map(|s| s.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        let v = coalition_value(&powers, &lambdas, mu, &hs);
        worst = worst.max((v - sum).abs() / scale);
        cache = if cache.len() > 4096 { LambdaCache::new() } else { cache };
    }
    verdict(
        worst <= 8.0 * f64::EPSILON,
        format!("max relative gap {worst:.3e} over 10^4 coalitions"),
    )
}

fn trend_spec(name: &str, swept: &str, values: Vec<f64>, arms: Vec<Arm>) -> SweepSpec {
    SweepSpec {
        preset_name: name.into(),
        base: ScenarioConfig {
            power_cap: 100.0,
            ..ScenarioConfig::new(8, 16)
        },
        swept_name: swept.into(),
        swept_values: values,
        arms,
        seeds: (0..50).collect(),
        record_trace: false,
    }
}

fn non_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0])
}

fn fmt_curve(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

struct Trends {
    a: Outcome,
    b: Outcome,
    c: Outcome,
    d: Outcome,
    e: Outcome,
    f: Outcome,
}

fn trends(q: &SweepResult, m: &SweepResult, elapsed: Duration) -> Trends {
    let qs = &q.spec.swept_values;
    let in_time = within(elapsed, 900);
    let time = format!("sweeps took {elapsed:.1?}");

    let hi = q.values("mean_price", 10.0, 0);
    let lo = q.values("mean_price", 50.0, 0);
    let (pos, n, p) = sign_test(&hi, &lo);
    let a = verdict(
        p < 0.05 && in_time,
        format!(
            "mean price {:.6} at Q=10 vs {:.6} at Q=50; {pos} of {n} untied pairs higher, p = {p:.3e}",
            mean(&hi),
            mean(&lo)
        ),
    );

    let revenue = q.curve("mco_payoff", 0);
    let top = revenue.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let knee = revenue.iter().position(|&r| r >= 0.98 * top).unwrap_or(0);
    let rho = if knee >= 2 {
        spearman(&qs[..=knee], &revenue[..=knee])
    } else {
        f64::NAN
    };
    let flat = &revenue[knee..];
    let flat_min = flat.iter().copied().fold(f64::INFINITY, f64::min);
    let flat_ok = flat.len() >= 2 && top - flat_min <= 0.02 * top;
    let b = verdict(
        rho > 0.9 && flat_ok && in_time,
        format!(
            "MCO payoff {} over Q {:?}; rising to Q={} with rho {rho:.3}, flat within 2% after",
            fmt_curve(&revenue),
            qs,
            qs[knee]
        ),
    );

    let ms = &m.spec.swept_values;
    let k = m.spec.base.num_uus;
    let within_m = m.runs.iter().all(|r| r.outcome.num_coalitions() as f64 <= r.swept_value);
    let coal: Vec<Vec<f64>> = (0..2).map(|arm| m.curve("num_coalitions", arm)).collect();
    let c = verdict(
        within_m && coal.iter().all(|cv| non_decreasing(cv)) && in_time,
        format!(
            "coalitions over M {:?}: Q=10 {}, Q=50 {}; every run <= M: {within_m}",
            ms,
            fmt_curve(&coal[0]),
            fmt_curve(&coal[1])
        ),
    );

    let memb: Vec<Vec<f64>> = (0..2).map(|arm| m.curve("avg_memberships", arm)).collect();
    let d = verdict(
        memb.iter().all(|cv| non_decreasing(cv)) && in_time,
        format!(
            "memberships per UU over M: Q=10 {}, Q=50 {}",
            fmt_curve(&memb[0]),
            fmt_curve(&memb[1])
        ),
    );

    let bounded = m.runs.iter().all(|r| r.outcome.active_uus() <= k);
    let active: Vec<Vec<f64>> = (0..2).map(|arm| m.curve("active_uus", arm)).collect();
    let (a10, a50) = (mean(&active[0]), mean(&active[1]));
    let e = verdict(
        bounded && a50 >= a10 && in_time,
        format!(
            "active UUs over M: Q=10 {}, Q=50 {}; averages {a10:.3} vs {a50:.3}; every run <= K: {bounded}",
            fmt_curve(&active[0]),
            fmt_curve(&active[1])
        ),
    );

    let iters = q.curve("outer_iterations", 0);
    let rho_iters = spearman(qs, &iters);
    let f = verdict(
        rho_iters < -0.9 && in_time,
        format!("outer iterations {} over Q; rho {rho_iters:.3}; {time}", fmt_curve(&iters)),
    );
    Trends { a, b, c, d, e, f }
}

fn ocf_vs_cf(r: &SweepResult) -> Outcome {
    let ocf = r.curve("uu_payoff_sum", 0);
    let cf = r.curve("uu_payoff_sum", 1);
    let every = ocf.iter().zip(&cf).all(|(o, c)| o >= c);
    let last = ocf.last() > cf.last();
    verdict(
        every && last,
        format!("payoff sum over p {:?}: OCF {}, CF {}", r.spec.swept_values, fmt_curve(&ocf), fmt_curve(&cf)),
    )
}

fn overhead(small: &[&EquilibriumOutcome], all: &[&EquilibriumOutcome]) -> Outcome {
    let v = 32;
    let mut worst_bits = 0.0f64;
    let mut bits_ok = true;
    for o in small {
        let r = overhead_report(*o, v, 1.0, 1000.0).expect("positive parameters");
        bits_ok &= r.control_bits as f64 <= r.bound_bits;
        worst_bits = worst_bits.max(r.control_bits as f64 / r.bound_bits);
    }
    let mut worst_ops = 0.0f64;
    let mut ops_ok = true;
    for o in all {
        let r = overhead_report(*o, v, 1.0, 1000.0).expect("positive parameters");
        ops_ok &= r.complexity_ops <= r.complexity_scale;
        if r.complexity_scale > 0 {
            worst_ops = worst_ops.max(r.complexity_ops as f64 / r.complexity_scale as f64);
        }
    }
    verdict(
        bits_ok && ops_ok && !small.is_empty(),
        format!(
            "{} runs at K<=4: control bits at most {worst_bits:.4} of the bound; {} runs: round operations at most {worst_ops:.4} x (K-1)KM",
            small.len(),
            all.len()
        ),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable output dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).expect("under dir").display().to_string();
                out.push((rel, fs::read(&path).expect("readable file")));
            }
        }
    }
    out.sort();
    out
}

fn determinism(first: &SweepResult) -> Outcome {
    let a = tempfile::tempdir().expect("temp dir");
    let b = tempfile::tempdir().expect("temp dir");
    let second = run_sweep(&first.spec).expect("sweep runs");
    first.write(a.path()).expect("writable");
    second.write(b.path()).expect("writable");
    let (x, y) = (dir_bytes(a.path()), dir_bytes(b.path()));
    let traces = x.iter().filter(|(n, _)| n.starts_with("traces")).count();
    verdict(
        x == y && traces == first.runs.len(),
        format!("{} files ({traces} traces) byte-identical across two runs of {}", x.len(), first.spec.preset_name),
    )
}

fn main() -> ExitCode {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wanted = |name: &str| filter.as_deref().is_none_or(|f| name.contains(f));
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };

    if wanted("water_filling") {
        report("water_filling", water_filling());
    }
    if wanted("pricing_bracket") {
        report("pricing_bracket", pricing_bracket());
    }
    if wanted("cycle_handling") {
        report("cycle_handling", cycle_handling());
    }
    if wanted("coalition_value") {
        report("coalition_value", value_exactness());
    }

    let needs_small = ["termination", "support_finiteness", "core", "overhead"].iter().any(|n| wanted(n));
    let needs_trends = ["termination", "trend", "overhead"].iter().any(|n| wanted(n));

    let (k4, k4_time) = if needs_small {
        let start = Instant::now();
        let runs: Vec<EquilibriumOutcome> = (0..100)
            .map(|seed| run_hierarchical(&ScenarioConfig { seed, ..ScenarioConfig::new(4, 4) }).expect("valid config"))
            .collect();
        (runs, start.elapsed())
    } else {
        (Vec::new(), Duration::ZERO)
    };
    let (k3, k3_time) = if needs_small {
        let start = Instant::now();
        let runs: Vec<EquilibriumOutcome> = (0..100)
            .map(|seed| run_hierarchical(&ScenarioConfig { seed, ..ScenarioConfig::new(3, 2) }).expect("valid config"))
            .collect();
        (runs, start.elapsed())
    } else {
        (Vec::new(), Duration::ZERO)
    };
    if wanted("support_finiteness") {
        report("support_finiteness", support_finiteness(&k4, k4_time));
    }
    if wanted("core") {
        let start = Instant::now();
        let o = core_nonempty(&k3, k3_time);
        report("core_nonempty", Outcome { detail: format!("{} (+{:.2?} checking)", o.detail, start.elapsed()), ..o });
    }

    let fig4 = (wanted("termination") || wanted("determinism"))
        .then(|| run_sweep(&preset("fig4", Scale::Desk, None).expect("preset exists")).expect("sweep runs"));

    let sweeps = needs_trends.then(|| {
        let start = Instant::now();
        let q = run_sweep(&trend_spec(
            "qbar",
            "interference_cap",
            vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0],
            vec![Arm::plain()],
        ))
        .expect("sweep runs");
        let m = run_sweep(&trend_spec(
            "subbands",
            "num_subbands",
            vec![4.0, 8.0, 16.0, 32.0],
            vec![
                Arm::with("qbar=10", "interference_cap", "10"),
                Arm::with("qbar=50", "interference_cap", "50"),
            ],
        ))
        .expect("sweep runs");
        (q, m, start.elapsed())
    });

    if let Some((q, m, elapsed)) = &sweeps {
        if wanted("trend") {
            let t = trends(q, m, *elapsed);
            report("trend_a_price_vs_q", t.a);
            report("trend_b_mco_payoff_vs_q", t.b);
            report("trend_c_coalitions_vs_m", t.c);
            report("trend_d_memberships_vs_m", t.d);
            report("trend_e_active_uus", t.e);
            report("trend_f_iterations_vs_q", t.f);
        }
    }

    if wanted("termination") {
        let mut runs: Vec<&EquilibriumOutcome> = k4.iter().chain(&k3).collect();
        if let Some((q, m, _)) = &sweeps {
            runs.extend(q.runs.iter().chain(&m.runs).map(|r| &r.outcome));
        }
        report("termination_bound", termination_bound(&runs, fig4.as_ref().expect("fig4 ran")));
    }

    if wanted("overhead") {
        let small: Vec<&EquilibriumOutcome> = k4.iter().chain(&k3).collect();
        let mut all = small.clone();
        if let Some((q, m, _)) = &sweeps {
            all.extend(q.runs.iter().chain(&m.runs).map(|r| &r.outcome));
        }
        report("overhead_accounting", overhead(&small, &all));
    }

    if wanted("ocf_vs_cf") {
        let spec = SweepSpec {
            preset_name: "ocf_vs_cf".into(),
            base: ScenarioConfig {
                interference_cap: 10.0,
                ..ScenarioConfig::new(8, 16)
            },
            swept_name: "power_cap".into(),
            swept_values: (1..=10).map(|i| 10.0 * i as f64).collect(),
            arms: vec![
                Arm::access("ocf", AccessMode::Overlapping),
                Arm::access("cf", AccessMode::SingleSubband),
            ],
            seeds: (0..50).collect(),
            record_trace: false,
        };
        report("ocf_vs_cf", ocf_vs_cf(&run_sweep(&spec).expect("sweep runs")));
    }

    if wanted("determinism") {
        report("determinism", determinism(fig4.as_ref().expect("fig4 ran")));
    }

    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
