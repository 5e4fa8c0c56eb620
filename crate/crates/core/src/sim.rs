//! The full hierarchical game: geometric price descent by the operator with a
//! complete coalition formation among UUs after every price broadcast.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use crate::channel::{generate_channel, ChannelRealization, ScenarioConfig};
use crate::error::{Error, Result};
use crate::follower::{AccessMode, PowerAllocation, PriceVector};
use crate::leader::{
    descent_iteration_bound, interference_vector, lambda_upper_bound, mco_revenue, price_step,
    price_upper_bound, FreezeReason, PriceState, PRICE_FLOOR,
};
use crate::ocf::{
    form_coalitions, ChannelGame, CoalitionStructure, Fingerprint, Formation, LambdaCache, NegotiationGame,
    Termination,
};

/// Relative slack allowed on the interference cap when certifying feasibility.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

pub const TRACE_HEADER: [&str; 12] = [
    "run_id",
    "phase",
    "t_outer",
    "t_inner",
    "subband",
    "uu",
    "mu",
    "power",
    "lambda",
    "interference",
    "payoff",
    "frozen_flag",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Price,
    Coalition,
    Final,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Price => "price",
            Phase::Coalition => "coalition",
            Phase::Final => "final",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub phase: Phase,
    pub t_outer: usize,
    pub t_inner: usize,
    pub subband: usize,
    pub uu: Option<usize>,
    pub mu: f64,
    pub power: Option<f64>,
    pub lambda: Option<f64>,
    pub interference: f64,
    pub payoff: Option<f64>,
    pub frozen: bool,
}

/// Post-hoc check of the Stackelberg equilibrium conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct SeCertificate {
    /// Largest `I_m / Q̄` (or raw `I_m` when `Q̄ = 0`).
    pub max_interference_ratio: f64,
    pub feasible: bool,
    pub power_caps_hold: bool,
    /// Largest payoff gain any UU finds in one more best-response round.
    pub max_unilateral_gain: f64,
    pub follower_stable: bool,
    pub all_frozen: bool,
    pub forced_stop: bool,
}

impl SeCertificate {
    pub fn holds(&self) -> bool {
        self.feasible && self.power_caps_hold && self.follower_stable && self.all_frozen && !self.forced_stop
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumOutcome {
    pub run_id: String,
    pub config: ScenarioConfig,
    pub access: AccessMode,
    pub mu_bar: f64,
    pub descent_bound: usize,
    pub prices: PriceVector,
    pub structure: CoalitionStructure,
    pub uu_payoffs: Vec<f64>,
    pub mco_payoff: f64,
    pub interference: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations_total: usize,
    pub inner_iterations_max: usize,
    pub freeze: Vec<Option<FreezeReason>>,
    /// Prices broadcast at each outer iteration, then the final prices.
    pub price_history: Vec<PriceVector>,
    pub total_messages: u64,
    pub max_formation_messages: u64,
    pub max_round_messages: u64,
    /// Formations that hit the round budget.
    pub forced_stops: usize,
    /// Formations that ended with moves blocked by the history rule.
    pub cycle_blocks: usize,
    /// Distinct nonempty supports across every structure the UUs passed through.
    pub supports_seen: BTreeSet<u64>,
    pub certificate: SeCertificate,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl EquilibriumOutcome {
    pub fn powers(&self) -> &PowerAllocation {
        &self.structure.powers
    }

    pub fn uu_payoff_sum(&self) -> f64 {
        self.uu_payoffs.iter().sum()
    }

    pub fn mean_price(&self) -> f64 {
        self.prices.mean()
    }

    pub fn active_uus(&self) -> usize {
        let p = self.powers();
        (0..p.num_uus()).filter(|&k| p.row(k).iter().any(|&x| x > 0.0)).count()
    }

    pub fn num_coalitions(&self) -> usize {
        self.structure.num_coalitions()
    }

    /// Sub-bands joined per UU, averaged over all UUs.
    pub fn avg_memberships(&self) -> f64 {
        let p = self.powers();
        let joined: usize = (0..p.num_uus()).map(|k| p.row(k).iter().filter(|&&x| x > 0.0).count()).sum();
        joined as f64 / p.num_uus() as f64
    }

    pub fn max_subbands_per_uu(&self) -> usize {
        let p = self.powers();
        (0..p.num_uus())
            .map(|k| p.row(k).iter().filter(|&&x| x > 0.0).count())
            .max()
            .unwrap_or(0)
    }

    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        write_trace(&self.run_id, &self.trace, out)
    }
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub access: AccessMode,
    pub record_trace: bool,
    pub run_id: Option<String>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            access: AccessMode::Overlapping,
            record_trace: false,
            run_id: None,
        }
    }
}

pub fn default_run_id(config: &ScenarioConfig) -> String {
    format!("run-s{}", config.seed)
}

/// Overlapping coalition formation under geometric pricing.
pub fn run_hierarchical(config: &ScenarioConfig) -> Result<EquilibriumOutcome> {
    run_with(config, &SimOptions::default())
}

/// Same loop with every UU limited to a single sub-band.
pub fn run_cf_baseline(config: &ScenarioConfig) -> Result<EquilibriumOutcome> {
    run_with(
        config,
        &SimOptions {
            access: AccessMode::SingleSubband,
            ..SimOptions::default()
        },
    )
}

pub fn run_with(config: &ScenarioConfig, options: &SimOptions) -> Result<EquilibriumOutcome> {
    config.validate()?;
    let real = generate_channel(config);
    run_on_channel(config, &real, options)
}

/// Runs the game on a given channel realization.
pub fn run_on_channel(
    config: &ScenarioConfig,
    real: &ChannelRealization,
    options: &SimOptions,
) -> Result<EquilibriumOutcome> {
    config.validate()?;
    let k_count = real.num_uus();
    let m_count = real.num_subbands();
    if k_count != config.num_uus || m_count != config.num_subbands {
        return Err(Error::InvalidConfig(format!(
            "channel is {k_count}x{m_count} but config asks for {}x{}",
            config.num_uus, config.num_subbands
        )));
    }
    let mu_bar = price_upper_bound(real, lambda_upper_bound(real))?;
    let descent_bound = descent_iteration_bound(mu_bar, config.epsilon);
    let max_outer = config.max_outer_iters.unwrap_or(10 * descent_bound);

    let mut cache = LambdaCache::new();
    let mut state = PriceState::new(PriceVector::uniform(m_count, mu_bar), config.revenue_guard);
    let mut stats = FormationStats::default();
    let mut price_history = Vec::new();
    let mut trace = Vec::new();
    let mut last_fp: Option<Fingerprint> = None;

    while !state.all_frozen() && state.iteration < max_outer {
        let t = state.iteration;
        let formation = form_coalitions(&state.current, real, config, options.access, &mut cache);
        stats.absorb(&formation);
        let interference = interference_vector(&formation.structure, real);
        if options.record_trace {
            let fp = Fingerprint::of(&formation.structure);
            if last_fp.as_ref() != Some(&fp) {
                let s = CoalitionStructure::new(formation.structure.clone(), real, &mut cache);
                push_coalition_rows(&mut trace, t, formation.rounds, &s, &state.current, &interference, real);
                last_fp = Some(fp);
            }
        }
        let next = price_step(&state, &interference, config.interference_cap, config.epsilon);
        if options.record_trace {
            for m in 0..m_count {
                trace.push(TraceRow {
                    phase: Phase::Price,
                    t_outer: t,
                    t_inner: formation.rounds,
                    subband: m,
                    uu: None,
                    mu: state.current[m],
                    power: None,
                    lambda: None,
                    interference: interference[m],
                    payoff: None,
                    frozen: next.is_frozen(m),
                });
            }
        }
        price_history.push(state.current.clone());
        state = next;
    }

    let prices = state.current.clone();
    let formation = form_coalitions(&prices, real, config, options.access, &mut cache);
    stats.absorb(&formation);
    price_history.push(prices.clone());
    let structure = CoalitionStructure::new(formation.structure.clone(), real, &mut cache);
    let uu_payoffs = structure.uu_payoffs(&prices, real);
    let interference = interference_vector(&structure.powers, real);
    let mco_payoff = mco_revenue(&structure.powers, &prices, real);

    let certificate = certify(
        &structure.powers,
        &prices,
        &interference,
        real,
        config,
        options.access,
        &mut cache,
        state.all_frozen(),
        formation.termination == Termination::ForcedStop,
    );
    let converged = certificate.holds();

    if options.record_trace {
        for k in 0..k_count {
            for m in 0..m_count {
                trace.push(TraceRow {
                    phase: Phase::Final,
                    t_outer: state.iteration,
                    t_inner: formation.rounds,
                    subband: m,
                    uu: Some(k),
                    mu: prices[m],
                    power: Some(structure.powers.get(k, m)),
                    lambda: Some(structure.division.get(k, m)),
                    interference: interference[m],
                    payoff: Some(uu_payoffs[k]),
                    frozen: state.is_frozen(m),
                });
            }
        }
    }

    Ok(EquilibriumOutcome {
        run_id: options.run_id.clone().unwrap_or_else(|| default_run_id(config)),
        config: config.clone(),
        access: options.access,
        mu_bar,
        descent_bound,
        prices,
        structure,
        uu_payoffs,
        mco_payoff,
        interference,
        outer_iterations: state.iteration,
        inner_iterations_total: stats.rounds_total,
        inner_iterations_max: stats.rounds_max,
        freeze: state.frozen.clone(),
        price_history,
        total_messages: stats.messages_total,
        max_formation_messages: stats.messages_max,
        max_round_messages: stats.round_messages_max,
        forced_stops: stats.forced,
        cycle_blocks: stats.cycle_blocked,
        supports_seen: stats.supports,
        certificate,
        converged,
        trace,
    })
}

#[derive(Default)]
struct FormationStats {
    rounds_total: usize,
    rounds_max: usize,
    messages_total: u64,
    messages_max: u64,
    round_messages_max: u64,
    forced: usize,
    cycle_blocked: usize,
    supports: BTreeSet<u64>,
}

impl FormationStats {
    fn absorb(&mut self, f: &Formation) {
        self.rounds_total += f.rounds;
        self.rounds_max = self.rounds_max.max(f.rounds);
        self.messages_total += f.messages;
        self.messages_max = self.messages_max.max(f.messages);
        self.round_messages_max = self.round_messages_max.max(f.max_round_messages);
        match f.termination {
            Termination::ForcedStop => self.forced += 1,
            Termination::CycleBlocked => self.cycle_blocked += 1,
            Termination::Stable => {}
        }
        self.supports.extend(f.supports_seen());
    }
}

fn push_coalition_rows(
    trace: &mut Vec<TraceRow>,
    t_outer: usize,
    t_inner: usize,
    s: &CoalitionStructure,
    mu: &PriceVector,
    interference: &[f64],
    real: &ChannelRealization,
) {
    let payoffs = s.uu_payoffs(mu, real);
    for m in 0..s.powers.num_subbands() {
        for k in 0..s.powers.num_uus() {
            let p = s.powers.get(k, m);
            if p > 0.0 {
                trace.push(TraceRow {
                    phase: Phase::Coalition,
                    t_outer,
                    t_inner,
                    subband: m,
                    uu: Some(k),
                    mu: mu[m],
                    power: Some(p),
                    lambda: Some(s.division.get(k, m)),
                    interference: interference[m],
                    payoff: Some(payoffs[k]),
                    frozen: false,
                });
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn certify(
    powers: &PowerAllocation,
    prices: &PriceVector,
    interference: &[f64],
    real: &ChannelRealization,
    config: &ScenarioConfig,
    access: AccessMode,
    cache: &mut LambdaCache,
    all_frozen: bool,
    forced_stop: bool,
) -> SeCertificate {
    let q = config.interference_cap;
    let max_interference_ratio = interference
        .iter()
        .map(|&i| if q > 0.0 { i / q } else { i })
        .fold(0.0, f64::max);
    let feasible = interference.iter().all(|&i| i <= q * (1.0 + FEASIBILITY_SLACK) + 1e-15);
    let power_caps_hold = (0..powers.num_uus()).all(|k| powers.row_sum(k) <= config.power_cap * (1.0 + 1e-12) + 1e-15);

    let mut game = ChannelGame {
        real,
        config,
        mu: prices,
        access,
        cache,
    };
    let max_unilateral_gain = (0..powers.num_uus())
        .map(|k| {
            let now = game.payoff(k, powers);
            let (_, best) = game.best_response(k, powers);
            best - now
        })
        .fold(0.0, f64::max);

    SeCertificate {
        max_interference_ratio,
        feasible,
        power_caps_hold,
        max_unilateral_gain,
        follower_stable: max_unilateral_gain <= config.tolerance,
        all_frozen,
        forced_stop,
    }
}

/// Re-runs the inner game with one frozen sub-band's price lowered by `1 - ε`.
///
/// Returns, for every sub-band frozen by an overshoot above the floor, the
/// interference measured on it at the lowered price.
pub fn bracket_check(outcome: &EquilibriumOutcome, real: &ChannelRealization) -> Vec<(usize, f64)> {
    let config = &outcome.config;
    let mut cache = LambdaCache::new();
    (0..outcome.prices.len())
        .filter(|&m| outcome.freeze[m] == Some(FreezeReason::Overshoot) && outcome.prices[m] > PRICE_FLOOR)
        .map(|m| {
            let mut mu = outcome.prices.clone();
            mu.0[m] *= 1.0 - config.epsilon;
            let f = form_coalitions(&mu, real, config, outcome.access, &mut cache);
            (m, interference_vector(&f.structure, real)[m])
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trace<W: Write>(run_id: &str, rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            run_id.to_string(),
            r.phase.as_str().to_string(),
            r.t_outer.to_string(),
            r.t_inner.to_string(),
            r.subband.to_string(),
            r.uu.map(|k| k.to_string()).unwrap_or_default(),
            r.mu.to_string(),
            opt(r.power),
            opt(r.lambda),
            r.interference.to_string(),
            opt(r.payoff),
            u8::from(r.frozen).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

/// Columns of the per-run summary CSV.
pub const SUMMARY_HEADER: [&str; 30] = [
    "run_id",
    "access",
    "num_uus",
    "num_subbands",
    "power_cap",
    "interference_cap",
    "epsilon",
    "seed",
    "noise_floor",
    "fading_scale",
    "max_inner_iters",
    "subset_exact_threshold",
    "tolerance",
    "revenue_guard",
    "mu_bar",
    "descent_bound",
    "outer_iterations",
    "inner_iterations_total",
    "inner_iterations_max",
    "converged",
    "mco_payoff",
    "uu_payoff_sum",
    "mean_price",
    "active_uus",
    "num_coalitions",
    "avg_memberships",
    "total_messages",
    "max_formation_messages",
    "max_round_messages",
    "forced_stops",
];

impl EquilibriumOutcome {
    pub fn summary_record(&self) -> Vec<String> {
        let c = &self.config;
        vec![
            self.run_id.clone(),
            match self.access {
                AccessMode::Overlapping => "ocf",
                AccessMode::SingleSubband => "cf",
            }
            .to_string(),
            c.num_uus.to_string(),
            c.num_subbands.to_string(),
            c.power_cap.to_string(),
            c.interference_cap.to_string(),
            c.epsilon.to_string(),
            c.seed.to_string(),
            c.noise_floor.to_string(),
            c.fading_scale.to_string(),
            c.max_inner_iters.to_string(),
            c.subset_exact_threshold.to_string(),
            c.tolerance.to_string(),
            c.revenue_guard.to_string(),
            self.mu_bar.to_string(),
            self.descent_bound.to_string(),
            self.outer_iterations.to_string(),
            self.inner_iterations_total.to_string(),
            self.inner_iterations_max.to_string(),
            self.converged.to_string(),
            self.mco_payoff.to_string(),
            self.uu_payoff_sum().to_string(),
            self.mean_price().to_string(),
            self.active_uus().to_string(),
            self.num_coalitions().to_string(),
            self.avg_memberships().to_string(),
            self.total_messages.to_string(),
            self.max_formation_messages.to_string(),
            self.max_round_messages.to_string(),
            self.forced_stops.to_string(),
        ]
    }
}

pub fn write_summary<'a, W, I>(outcomes: I, out: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a EquilibriumOutcome>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for o in outcomes {
        w.write_record(o.summary_record())?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverheadReport {
    pub control_bits: u64,
    /// Worst-case bits `[(2^K − 1)(K − 1)KM + 3K − 2]·v`, in floating point.
    pub bound_bits: f64,
    /// `t / (Kτ + t)`.
    pub time_overhead_paper: f64,
    /// `Lτ / (Lτ + t)` with `L` the measured outer iterations.
    pub time_overhead_measured: f64,
    /// Most negotiation messages exchanged in a single round.
    pub complexity_ops: u64,
    /// `(K − 1)KM`.
    pub complexity_scale: u64,
}

/// Figures the overhead analysis needs from one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverheadInputs {
    pub num_uus: usize,
    pub num_subbands: usize,
    pub outer_iterations: usize,
    pub max_formation_messages: u64,
    pub max_round_messages: u64,
}

impl From<&EquilibriumOutcome> for OverheadInputs {
    fn from(o: &EquilibriumOutcome) -> Self {
        Self {
            num_uus: o.config.num_uus,
            num_subbands: o.config.num_subbands,
            outer_iterations: o.outer_iterations,
            max_formation_messages: o.max_formation_messages,
            max_round_messages: o.max_round_messages,
        }
    }
}

/// Control-bit count of the busiest coalition formation against the
/// worst-case bound, plus time overheads of the slot structure.
pub fn overhead_report(inputs: impl Into<OverheadInputs>, v_bits: u64, tau_slot: f64, t_data: f64) -> Result<OverheadReport> {
    if v_bits == 0 || !(tau_slot > 0.0) || !(t_data > 0.0) {
        return Err(Error::InvalidConfig(
            "bits per message, slot length and data time must be positive".into(),
        ));
    }
    let i = inputs.into();
    let k = i.num_uus as f64;
    let m = i.num_subbands as f64;
    let bound_bits = ((2f64.powi(i.num_uus as i32) - 1.0) * (k - 1.0) * k * m + 3.0 * k - 2.0) * v_bits as f64;
    let l = i.outer_iterations as f64;
    Ok(OverheadReport {
        control_bits: i.max_formation_messages * v_bits,
        bound_bits,
        time_overhead_paper: t_data / (k * tau_slot + t_data),
        time_overhead_measured: l * tau_slot / (l * tau_slot + t_data),
        complexity_ops: i.max_round_messages,
        complexity_scale: ((i.num_uus.saturating_sub(1)) * i.num_uus * i.num_subbands) as u64,
    })
}

/// Reads the overhead inputs of `run_id` back from a summary CSV.
pub fn read_overhead_inputs<R: Read>(summary: R, run_id: &str) -> Result<OverheadInputs> {
    let mut r = csv::Reader::from_reader(summary);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("summary CSV lacks column `{name}`")))
    };
    let cols = [
        col("run_id")?,
        col("num_uus")?,
        col("num_subbands")?,
        col("outer_iterations")?,
        col("max_formation_messages")?,
        col("max_round_messages")?,
    ];
    for rec in r.records() {
        let rec = rec?;
        if &rec[cols[0]] != run_id {
            continue;
        }
        let num = |i: usize| -> Result<u64> {
            rec[cols[i]]
                .parse()
                .map_err(|_| Error::Parse(format!("bad integer `{}` in column {}", &rec[cols[i]], &headers[cols[i]])))
        };
        return Ok(OverheadInputs {
            num_uus: num(1)? as usize,
            num_subbands: num(2)? as usize,
            outer_iterations: num(3)? as usize,
            max_formation_messages: num(4)?,
            max_round_messages: num(5)?,
        });
    }
    Err(Error::Parse(format!("run `{run_id}` not found in summary CSV")))
}

/// Distinct run ids in a trace CSV, in order of appearance.
pub fn trace_run_ids<R: Read>(trace: R) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_reader(trace);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::Parse("trace CSV header does not match the trace schema".into()));
    }
    let mut ids: Vec<String> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if ids.last().map(String::as_str) != Some(&rec[0]) && !ids.iter().any(|x| x == &rec[0]) {
            ids.push(rec[0].to_string());
        }
    }
    Ok(ids)
}
