//! Named parameter sweeps with paired seeds, and the rank statistics used to
//! judge their trends.

use std::fs;
use std::path::{Path, PathBuf};

use crate::channel::ScenarioConfig;
use crate::config::set_key;
use crate::error::{Error, Result};
use crate::follower::AccessMode;
use crate::sim::{run_with, EquilibriumOutcome, SimOptions, SUMMARY_HEADER};

pub const SUMMARY_CSV_HEADER: [&str; 7] = [
    "preset",
    "swept_name",
    "swept_value",
    "seed_count",
    "metric_name",
    "mean",
    "stderr",
];

/// Per-run quantities aggregated by sweeps.
pub const METRICS: [&str; 10] = [
    "outer_iterations",
    "inner_iterations_total",
    "mco_payoff",
    "uu_payoff_sum",
    "mean_price",
    "active_uus",
    "num_coalitions",
    "avg_memberships",
    "converged",
    "max_formation_messages",
];

pub fn metric(o: &EquilibriumOutcome, name: &str) -> Option<f64> {
    Some(match name {
        "outer_iterations" => o.outer_iterations as f64,
        "inner_iterations_total" => o.inner_iterations_total as f64,
        "mco_payoff" => o.mco_payoff,
        "uu_payoff_sum" => o.uu_payoff_sum(),
        "mean_price" => o.mean_price(),
        "active_uus" => o.active_uus() as f64,
        "num_coalitions" => o.num_coalitions() as f64,
        "avg_memberships" => o.avg_memberships(),
        "converged" => f64::from(u8::from(o.converged)),
        "max_formation_messages" => o.max_formation_messages as f64,
        _ => return None,
    })
}

/// One compared variant at every sweep point, e.g. `qbar=10` or `cf`.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub label: String,
    pub overrides: Vec<(String, String)>,
    pub access: AccessMode,
}

impl Arm {
    pub fn plain() -> Self {
        Self {
            label: String::new(),
            overrides: Vec::new(),
            access: AccessMode::Overlapping,
        }
    }

    pub fn with(label: &str, key: &str, value: &str) -> Self {
        Self {
            label: label.to_string(),
            overrides: vec![(key.to_string(), value.to_string())],
            access: AccessMode::Overlapping,
        }
    }

    pub fn access(label: &str, access: AccessMode) -> Self {
        Self {
            label: label.to_string(),
            overrides: Vec::new(),
            access,
        }
    }

    pub fn metric_name(&self, metric: &str) -> String {
        if self.label.is_empty() {
            metric.to_string()
        } else {
            format!("{metric}[{}]", self.label)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub preset_name: String,
    pub base: ScenarioConfig,
    pub swept_name: String,
    pub swept_values: Vec<f64>,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    pub record_trace: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.swept_values.is_empty() || self.swept_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "swept values of `{}` must be nonempty and strictly increasing",
                self.swept_name
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one seed".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one arm".into()));
        }
        let mut probe = self.base.clone();
        set_key(&mut probe, &self.swept_name, &self.swept_values[0].to_string())?;
        for arm in &self.arms {
            for (k, v) in &arm.overrides {
                set_key(&mut probe, k, v)?;
            }
        }
        Ok(())
    }

    /// Config and options of a single run.
    pub fn job(&self, value: f64, arm: &Arm, seed: u64) -> Result<(ScenarioConfig, SimOptions)> {
        let mut config = self.base.clone();
        set_key(&mut config, &self.swept_name, &value.to_string())?;
        for (k, v) in &arm.overrides {
            set_key(&mut config, k, v)?;
        }
        config.seed = seed;
        let arm_part = if arm.label.is_empty() {
            String::new()
        } else {
            format!("-{}", arm.label)
        };
        let run_id = format!("{}-{}={}{}-s{}", self.preset_name, self.swept_name, value, arm_part, seed);
        Ok((
            config,
            SimOptions {
                access: arm.access,
                record_trace: self.record_trace,
                run_id: Some(run_id),
            },
        ))
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub swept_value: f64,
    pub arm: usize,
    pub seed: u64,
    pub outcome: EquilibriumOutcome,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Ordered by swept value, then arm, then seed.
    pub runs: Vec<RunRecord>,
}

impl SweepResult {
    /// Metric values at one point, in seed order (paired across arms and points).
    pub fn values(&self, metric_name: &str, swept_value: f64, arm: usize) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.swept_value == swept_value && r.arm == arm)
            .map(|r| metric(&r.outcome, metric_name).expect("known metric"))
            .collect()
    }

    pub fn mean(&self, metric_name: &str, swept_value: f64, arm: usize) -> f64 {
        mean(&self.values(metric_name, swept_value, arm))
    }

    /// Means per swept value for one arm.
    pub fn curve(&self, metric_name: &str, arm: usize) -> Vec<f64> {
        self.spec
            .swept_values
            .iter()
            .map(|&v| self.mean(metric_name, v, arm))
            .collect()
    }

    pub fn summary_rows(&self) -> Vec<[String; 7]> {
        let mut rows = Vec::new();
        for &v in &self.spec.swept_values {
            for (a, arm) in self.spec.arms.iter().enumerate() {
                for m in METRICS {
                    let xs = self.values(m, v, a);
                    rows.push([
                        self.spec.preset_name.clone(),
                        self.spec.swept_name.clone(),
                        v.to_string(),
                        xs.len().to_string(),
                        arm.metric_name(m),
                        mean(&xs).to_string(),
                        stderr(&xs).to_string(),
                    ]);
                }
            }
        }
        rows
    }

    /// Writes `summary.csv`, `runs.csv` and, when recorded, one trace per run.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();

        let summary = dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&summary)?;
        w.write_record(SUMMARY_CSV_HEADER)?;
        for row in self.summary_rows() {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(&summary, e))?;
        written.push(summary);

        let runs = dir.join("runs.csv");
        let mut w = csv::Writer::from_path(&runs)?;
        let mut header = vec!["preset", "swept_name", "swept_value", "arm"];
        header.extend(SUMMARY_HEADER);
        w.write_record(&header)?;
        for r in &self.runs {
            let mut rec = vec![
                self.spec.preset_name.clone(),
                self.spec.swept_name.clone(),
                r.swept_value.to_string(),
                self.spec.arms[r.arm].label.clone(),
            ];
            rec.extend(r.outcome.summary_record());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&runs, e))?;
        written.push(runs);

        if self.spec.record_trace {
            let traces = dir.join("traces");
            fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
            for r in &self.runs {
                let path = traces.join(format!("{}.csv", r.outcome.run_id));
                let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                r.outcome.write_trace(std::io::BufWriter::new(file))?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Runs every (value, arm, seed) combination. Runs are independent and may
/// execute in parallel; results come back in a fixed order.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &v in &spec.swept_values {
        for (a, arm) in spec.arms.iter().enumerate() {
            for &seed in &spec.seeds {
                let (config, options) = spec.job(v, arm, seed)?;
                jobs.push((v, a, seed, config, options));
            }
        }
    }
    let run = |(v, a, seed, config, options): &(f64, usize, u64, ScenarioConfig, SimOptions)| -> Result<RunRecord> {
        Ok(RunRecord {
            swept_value: *v,
            arm: *a,
            seed: *seed,
            outcome: slim(run_with(config, options)?),
        })
    };
    #[cfg(feature = "parallel")]
    let runs = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let runs = jobs.iter().map(run).collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        spec: spec.clone(),
        runs,
    })
}

/// Drops the per-iteration price history, which sweeps never read.
fn slim(mut o: EquilibriumOutcome) -> EquilibriumOutcome {
    o.price_history = Vec::new();
    o
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Large,
}

pub const PRESETS: [&str; 8] = [
    "fig4_convergence",
    "fig5_qbar_speed",
    "fig6_payoff_vs_q",
    "fig7_price_vs_q",
    "fig8_active_uus",
    "fig9_num_coalitions",
    "fig10_avg_memberships",
    "fig11_ocf_vs_cf",
];

/// Accepts full names and short forms such as `fig7`.
pub fn resolve_preset(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .copied()
        .find(|p| *p == name || p.split('_').next() == Some(name))
        .ok_or_else(|| Error::UnknownPreset {
            name: name.to_string(),
            available: PRESETS.join(", "),
        })
}

pub fn default_seeds(preset: &str) -> Vec<u64> {
    match preset {
        "fig4_convergence" => (1..=5).collect(),
        _ => (0..50).collect(),
    }
}

fn trend_base(scale: Scale) -> ScenarioConfig {
    let (k, m) = match scale {
        Scale::Desk => (8, 16),
        Scale::Large => (64, 128),
    };
    ScenarioConfig {
        power_cap: 100.0,
        ..ScenarioConfig::new(k, m)
    }
}

fn qbar_arms() -> Vec<Arm> {
    vec![
        Arm::with("qbar=10", "interference_cap", "10"),
        Arm::with("qbar=50", "interference_cap", "50"),
    ]
}

pub fn preset(name: &str, scale: Scale, seeds: Option<Vec<u64>>) -> Result<SweepSpec> {
    let name = resolve_preset(name)?;
    let seeds = seeds.unwrap_or_else(|| default_seeds(name));
    let base = trend_base(scale);
    let subband_sweep = match scale {
        Scale::Desk => vec![4.0, 8.0, 16.0, 32.0],
        Scale::Large => vec![16.0, 32.0, 64.0, 128.0],
    };
    let spec = |swept: &str, values: Vec<f64>, arms: Vec<Arm>, base: ScenarioConfig, trace: bool| SweepSpec {
        preset_name: name.to_string(),
        base,
        swept_name: swept.to_string(),
        swept_values: values,
        arms,
        seeds: seeds.clone(),
        record_trace: trace,
    };
    Ok(match name {
        "fig4_convergence" => {
            let base = ScenarioConfig {
                num_subbands: 8,
                power_cap: 50.0,
                ..base
            };
            spec("interference_cap", vec![2.0], vec![Arm::plain()], base, true)
        }
        "fig5_qbar_speed" => spec(
            "interference_cap",
            vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            vec![Arm::plain()],
            base,
            false,
        ),
        "fig6_payoff_vs_q" => spec(
            "interference_cap",
            vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0],
            vec![Arm::plain()],
            base,
            false,
        ),
        "fig7_price_vs_q" => spec("interference_cap", vec![10.0, 50.0], vec![Arm::plain()], base, false),
        "fig8_active_uus" | "fig9_num_coalitions" | "fig10_avg_memberships" => {
            spec("num_subbands", subband_sweep, qbar_arms(), base, false)
        }
        "fig11_ocf_vs_cf" => {
            let base = ScenarioConfig {
                interference_cap: 10.0,
                ..base
            };
            spec(
                "power_cap",
                (1..=10).map(|i| 10.0 * i as f64).collect(),
                vec![
                    Arm::access("ocf", AccessMode::Overlapping),
                    Arm::access("cf", AccessMode::SingleSubband),
                ],
                base,
                false,
            )
        }
        _ => unreachable!("resolved above"),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean; zero below two samples.
pub fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return f64::NAN;
    }
    cov / (vx * vy).sqrt()
}

/// Spearman rank correlation; NaN when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    pearson(&ranks(x), &ranks(y))
}

/// One-sided sign test of `a > b` over paired samples, ties dropped.
/// Returns `(positives, nonzero pairs, p-value)`.
pub fn sign_test(a: &[f64], b: &[f64]) -> (usize, usize, f64) {
    assert_eq!(a.len(), b.len());
    let pos = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let neg = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let n = pos + neg;
    (pos, n, binomial_upper_tail(n, pos))
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // log C(n, i) accumulated term by term
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_c = 0.0;
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            total += (ln_c + ln_half_n).exp();
        }
    }
    total.min(1.0)
}
