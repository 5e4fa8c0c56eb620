//! Overlapping coalition formation among UUs.
//!
//! A coalition structure is the power matrix itself: column `m` is the
//! partial coalition on sub-band `m`, its support the coalition members.
//! [`negotiate`] runs the sensing/negotiation dynamics over any
//! [`NegotiationGame`]; [`ChannelGame`] is the game induced by a channel
//! realization and a price vector.

use std::collections::BTreeSet;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::channel::{ChannelRealization, ScenarioConfig};
use crate::error::{Error, Result};
use crate::follower::{
    best_response_with_lambdas, subband_payoff, waterfill_power, AccessMode, PowerAllocation, PriceVector,
};
use crate::mimo::{coalition_lambdas, PayoffDivision, Support};

/// Power quantum used when fingerprinting structures.
pub const FINGERPRINT_QUANTUM: f64 = 1e-9;
/// Grid points per member in [`core_check`].
pub const CORE_GRID_POINTS: usize = 33;

/// Memoized division factors per `(sub-band, support mask)`.
#[derive(Debug, Default)]
pub struct LambdaCache {
    bands: Vec<FxHashMap<u64, Vec<(usize, f64)>>>,
}

impl LambdaCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lambdas(&mut self, real: &ChannelRealization, m: usize, mask: u64) -> &[(usize, f64)] {
        if self.bands.len() <= m {
            self.bands.resize_with(m + 1, FxHashMap::default);
        }
        self.bands[m].entry(mask).or_insert_with(|| {
            if mask == 0 {
                Vec::new()
            } else {
                coalition_lambdas(real, &Support::from_mask(m, mask)).expect("nonempty support")
            }
        })
    }

    /// λ of `k` inside the coalition `mask` on sub-band `m` (`k` must be a member).
    pub fn lambda_of(&mut self, real: &ChannelRealization, m: usize, mask: u64, k: usize) -> f64 {
        debug_assert!(mask >> k & 1 == 1);
        self.lambdas(real, m, mask)
            .iter()
            .find(|(i, _)| *i == k)
            .map_or(0.0, |x| x.1)
    }

    pub fn len(&self) -> usize {
        self.bands.iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Power matrix together with the payoff division its supports induce.
#[derive(Clone, Debug, PartialEq)]
pub struct CoalitionStructure {
    pub powers: PowerAllocation,
    pub division: PayoffDivision,
}

impl CoalitionStructure {
    pub fn new(powers: PowerAllocation, real: &ChannelRealization, cache: &mut LambdaCache) -> Self {
        let mut division = PayoffDivision::zeros(powers.num_uus(), powers.num_subbands());
        for m in 0..powers.num_subbands() {
            let mask = powers.support_mask(m);
            division.set_column(m, cache.lambdas(real, m, mask));
        }
        Self { powers, division }
    }

    pub fn supports(&self) -> Vec<Support> {
        (0..self.powers.num_subbands())
            .map(|m| Support::from_mask(m, self.powers.support_mask(m)))
            .collect()
    }

    /// Total payoff of every UU.
    pub fn uu_payoffs(&self, mu: &PriceVector, real: &ChannelRealization) -> Vec<f64> {
        (0..self.powers.num_uus())
            .map(|k| {
                (0..self.powers.num_subbands())
                    .map(|m| subband_payoff(self.powers.get(k, m), mu[m], self.division.get(k, m), real.h(k, m)))
                    .sum()
            })
            .collect()
    }

    /// Number of nonempty partial coalitions.
    pub fn num_coalitions(&self) -> usize {
        (0..self.powers.num_subbands())
            .filter(|&m| self.powers.support_mask(m) != 0)
            .count()
    }
}

/// Value of one partial coalition: members' rates minus their payments.
pub fn coalition_value(powers: &[f64], lambdas: &[f64], mu: f64, hs: &[f64]) -> f64 {
    powers
        .iter()
        .zip(lambdas)
        .zip(hs)
        .filter(|((p, _), _)| **p > 0.0)
        .map(|((&p, &l), &h)| subband_payoff(p, mu, l, h))
        .sum()
}

/// Canonical identity of a structure: supports per sub-band plus quantized powers.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    supports: Vec<u64>,
    powers: Vec<i64>,
}

impl Fingerprint {
    pub fn of(p: &PowerAllocation) -> Self {
        let supports = (0..p.num_subbands()).map(|m| p.support_mask(m)).collect();
        let mut powers = Vec::with_capacity(p.num_uus() * p.num_subbands());
        for k in 0..p.num_uus() {
            for &x in p.row(k) {
                powers.push((x / FINGERPRINT_QUANTUM).round() as i64);
            }
        }
        Self { supports, powers }
    }

    pub fn supports(&self) -> &[u64] {
        &self.supports
    }
}

#[derive(Clone, Debug, Default)]
pub struct StructureHistory {
    seen: FxHashSet<Fingerprint>,
    supports: FxHashSet<Vec<u64>>,
    order: Vec<Fingerprint>,
}

impl StructureHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, fp: &Fingerprint) -> bool {
        self.seen.contains(fp)
    }

    pub fn contains_supports(&self, supports: &[u64]) -> bool {
        self.supports.contains(supports)
    }

    /// Returns false if the fingerprint was already present.
    pub fn insert(&mut self, fp: Fingerprint) -> bool {
        self.supports.insert(fp.supports.clone());
        let fresh = self.seen.insert(fp.clone());
        self.order.push(fp);
        fresh
    }

    /// Whether moving from `from` to `to` would revisit a past structure:
    /// either the exact fingerprint, or a support pattern already left behind.
    pub fn is_revisit(&self, from: &Fingerprint, to: &Fingerprint) -> bool {
        self.contains(to) || (to.supports != from.supports && self.contains_supports(&to.supports))
    }

    pub fn order(&self) -> &[Fingerprint] {
        &self.order
    }
}

/// A game the negotiation dynamics can be run on.
pub trait NegotiationGame {
    fn num_players(&self) -> usize;
    fn num_subbands(&self) -> usize;
    /// Structure formed when every player takes its exclusive-occupancy choice.
    fn sensing(&mut self) -> PowerAllocation;
    fn payoff(&mut self, k: usize, structure: &PowerAllocation) -> f64;
    /// New row for player `k` and the payoff it would earn with it.
    fn best_response(&mut self, k: usize, structure: &PowerAllocation) -> (Vec<f64>, f64);
    /// Control messages player `k` exchanges during its turn.
    fn turn_messages(&self, _k: usize, _structure: &PowerAllocation) -> u64 {
        0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NegotiationOptions {
    pub tolerance: f64,
    pub max_rounds: usize,
    pub use_history: bool,
}

impl NegotiationOptions {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            tolerance: config.tolerance,
            max_rounds: config.max_inner_iters,
            use_history: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// A full round passed without anyone wanting to move.
    Stable,
    /// Every remaining improving move would have recreated a past structure.
    CycleBlocked,
    /// Round budget exhausted.
    ForcedStop,
}

#[derive(Clone, Debug)]
pub struct Formation {
    pub structure: PowerAllocation,
    pub rounds: usize,
    pub applied_moves: usize,
    pub blocked_moves: usize,
    /// Applied structures that repeated an earlier one (only without history).
    pub revisits: usize,
    pub termination: Termination,
    /// Discovery plus negotiation messages.
    pub messages: u64,
    pub max_round_messages: u64,
    /// Smallest payoff gain among applied moves.
    pub min_move_gain: f64,
    pub history: Vec<Fingerprint>,
}

impl Formation {
    pub fn forced(&self) -> bool {
        self.termination == Termination::ForcedStop
    }

    /// Distinct nonempty supports across every applied structure.
    pub fn supports_seen(&self) -> BTreeSet<u64> {
        self.history
            .iter()
            .flat_map(|fp| fp.supports().iter().copied())
            .filter(|&s| s != 0)
            .collect()
    }
}

/// Neighbour discovery messages for `k` players.
pub fn discovery_messages(k: usize) -> u64 {
    (3 * k).saturating_sub(2) as u64
}

/// Sensing, then round-robin negotiation in ascending player order.
///
/// A player's move is applied when it raises its payoff by more than the
/// tolerance. With history on, a move that recreates a previously applied
/// structure, or moves the supports back to a pattern seen before, is
/// discarded and the player passes. Moves that keep every support only
/// retune powers and are always allowed.
pub fn negotiate<G: NegotiationGame + ?Sized>(game: &mut G, options: NegotiationOptions) -> Formation {
    let k_count = game.num_players();
    let mut structure = game.sensing();
    let mut history = StructureHistory::new();
    let mut current_fp = Fingerprint::of(&structure);
    history.insert(current_fp.clone());

    let mut messages = discovery_messages(k_count);
    let mut max_round_messages = 0;
    let mut applied_moves = 0;
    let mut blocked_moves = 0;
    let mut revisits = 0;
    let mut min_move_gain = f64::INFINITY;
    let mut rounds = 0;

    let termination = loop {
        if rounds == options.max_rounds {
            break Termination::ForcedStop;
        }
        rounds += 1;
        let mut applied_this_round = 0;
        let mut blocked_this_round = 0;
        let mut round_messages = 0;
        for k in 0..k_count {
            round_messages += game.turn_messages(k, &structure);
            let current = game.payoff(k, &structure);
            let (row, payoff) = game.best_response(k, &structure);
            let gain = payoff - current;
            if gain <= options.tolerance {
                continue;
            }
            let mut candidate = structure.clone();
            candidate.set_row(k, &row);
            let fp = Fingerprint::of(&candidate);
            if history.is_revisit(&current_fp, &fp) {
                if options.use_history {
                    blocked_this_round += 1;
                    continue;
                }
                revisits += 1;
            }
            history.insert(fp.clone());
            current_fp = fp;
            structure = candidate;
            applied_this_round += 1;
            min_move_gain = min_move_gain.min(gain);
        }
        messages += round_messages;
        max_round_messages = max_round_messages.max(round_messages);
        applied_moves += applied_this_round;
        blocked_moves += blocked_this_round;
        if applied_this_round == 0 {
            break if blocked_this_round == 0 {
                Termination::Stable
            } else {
                Termination::CycleBlocked
            };
        }
    };

    Formation {
        structure,
        rounds,
        applied_moves,
        blocked_moves,
        revisits,
        termination,
        messages,
        max_round_messages,
        min_move_gain,
        history: history.order().to_vec(),
    }
}

/// The coalition game UUs play at fixed prices over a channel realization.
pub struct ChannelGame<'a> {
    pub real: &'a ChannelRealization,
    pub config: &'a ScenarioConfig,
    pub mu: &'a PriceVector,
    pub access: AccessMode,
    pub cache: &'a mut LambdaCache,
}

impl ChannelGame<'_> {
    /// λ player `k` would hold on every sub-band after joining its current coalition.
    fn joining_lambdas(&mut self, k: usize, structure: &PowerAllocation) -> Vec<f64> {
        (0..self.real.num_subbands())
            .map(|m| {
                let mask = structure.support_mask(m) | 1 << k;
                self.cache.lambda_of(self.real, m, mask, k)
            })
            .collect()
    }

    fn respond(&self, k: usize, lambdas: &[f64]) -> (Vec<f64>, f64) {
        let br = best_response_with_lambdas(k, self.mu, lambdas, self.real, self.config, self.access)
            .expect("config validated");
        (br.powers, br.payoff)
    }
}

impl NegotiationGame for ChannelGame<'_> {
    fn num_players(&self) -> usize {
        self.real.num_uus()
    }

    fn num_subbands(&self) -> usize {
        self.real.num_subbands()
    }

    fn sensing(&mut self) -> PowerAllocation {
        let k_count = self.real.num_uus();
        let mut p = PowerAllocation::zeros(k_count, self.real.num_subbands());
        for k in 0..k_count {
            let alone: Vec<f64> = (0..self.real.num_subbands())
                .map(|m| self.cache.lambda_of(self.real, m, 1 << k, k))
                .collect();
            let (row, _) = self.respond(k, &alone);
            p.set_row(k, &row);
        }
        p
    }

    fn payoff(&mut self, k: usize, structure: &PowerAllocation) -> f64 {
        (0..self.real.num_subbands())
            .map(|m| {
                let p = structure.get(k, m);
                if p > 0.0 {
                    let l = self.cache.lambda_of(self.real, m, structure.support_mask(m), k);
                    subband_payoff(p, self.mu[m], l, self.real.h(k, m))
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn best_response(&mut self, k: usize, structure: &PowerAllocation) -> (Vec<f64>, f64) {
        let lambdas = self.joining_lambdas(k, structure);
        self.respond(k, &lambdas)
    }

    /// One message per co-member on each occupied sub-band.
    fn turn_messages(&self, k: usize, structure: &PowerAllocation) -> u64 {
        (0..self.real.num_subbands())
            .map(|m| (structure.support_mask(m) & !(1 << k)).count_ones() as u64)
            .sum()
    }
}

/// Runs coalition formation among UUs at fixed prices.
pub fn form_coalitions(
    mu: &PriceVector,
    real: &ChannelRealization,
    config: &ScenarioConfig,
    access: AccessMode,
    cache: &mut LambdaCache,
) -> Formation {
    let mut game = ChannelGame {
        real,
        config,
        mu,
        access,
        cache,
    };
    negotiate(&mut game, NegotiationOptions::from_config(config))
}

/// Every nonempty subset of `k` UUs as a bitmask.
pub fn enumerate_supports(k: usize) -> Vec<u64> {
    assert!(k < 64);
    (1..1u64 << k).collect()
}

/// Distinct nonempty supports (sub-band agnostic) across a trace of structures.
pub fn count_distinct_supports<'a, I>(trace: I) -> usize
where
    I: IntoIterator<Item = &'a PowerAllocation>,
{
    let mut seen = FxHashSet::default();
    for p in trace {
        for m in 0..p.num_subbands() {
            let s = p.support_mask(m);
            if s != 0 {
                seen.insert(s);
            }
        }
    }
    seen.len()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockingCertificate {
    pub members: Vec<usize>,
    pub subband: usize,
    /// Deviation powers, one per member.
    pub powers: Vec<f64>,
    /// Member payoffs inside the deviating coalition.
    pub shares: Vec<f64>,
    /// Member payoffs in the checked outcome.
    pub current: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoreReport {
    pub in_core: bool,
    pub certificate: Option<BlockingCertificate>,
    pub grid_points: usize,
    pub coalitions_checked: usize,
}

/// Searches for a group of UUs that would all do strictly better by forming
/// their own coalition on one sub-band.
///
/// Each member's deviation power ranges over `CORE_GRID_POINTS` evenly spaced
/// fractions of its clipped water-filling level; the group must respect the
/// interference cap and each member's power cap. A member's share is its own
/// rate minus its own payment, compared against its total payoff in the
/// outcome. Certificates are relative to this grid.
pub fn core_check(
    structure: &PowerAllocation,
    mu: &PriceVector,
    real: &ChannelRealization,
    config: &ScenarioConfig,
) -> Result<CoreReport> {
    let k_count = real.num_uus();
    let m_count = real.num_subbands();
    if k_count > 5 || m_count > 4 {
        return Err(Error::OracleScale {
            uus: k_count,
            subbands: m_count,
        });
    }
    let mut cache = LambdaCache::new();
    let current = CoalitionStructure::new(structure.clone(), real, &mut cache).uu_payoffs(mu, real);
    let steps = CORE_GRID_POINTS - 1;
    let mut checked = 0;

    for mask in enumerate_supports(k_count) {
        for m in 0..m_count {
            checked += 1;
            let lambdas = cache.lambdas(real, m, mask).to_vec();
            let mut powers = Vec::with_capacity(lambdas.len());
            let mut shares = Vec::with_capacity(lambdas.len());
            let mut interference = 0.0;
            let mut blocks = true;
            for &(k, l) in &lambdas {
                let h = real.h(k, m);
                let top = waterfill_power(l, mu[m], h, config.power_cap).min(config.power_cap);
                // Smallest grid power that strictly beats the member's payoff;
                // shares are concave in power so larger points only add interference.
                let hit = (1..=steps).find_map(|i| {
                    let p = top * i as f64 / steps as f64;
                    let share = subband_payoff(p, mu[m], l, h);
                    (share > current[k] + config.tolerance).then_some((p, share))
                });
                match hit {
                    Some((p, share)) => {
                        powers.push(p);
                        shares.push(share);
                        interference += p * h;
                    }
                    None => {
                        blocks = false;
                        break;
                    }
                }
            }
            if blocks && interference <= config.interference_cap {
                let members: Vec<usize> = lambdas.iter().map(|x| x.0).collect();
                let value = shares.iter().sum();
                let current = members.iter().map(|&k| current[k]).collect();
                return Ok(CoreReport {
                    in_core: false,
                    certificate: Some(BlockingCertificate {
                        members,
                        subband: m,
                        powers,
                        shares,
                        current,
                        value,
                    }),
                    grid_points: CORE_GRID_POINTS,
                    coalitions_checked: checked,
                });
            }
        }
    }
    Ok(CoreReport {
        in_core: true,
        certificate: None,
        grid_points: CORE_GRID_POINTS,
        coalitions_checked: checked,
    })
}

/// Players that each sit on exactly one sub-band with unit power and whose
/// payoffs come from a lookup `(player, sub-band, co-member mask) -> payoff`.
pub struct PreferenceTableGame {
    num_players: usize,
    num_subbands: usize,
    table: Box<dyn Fn(usize, usize, u64) -> f64>,
}

impl PreferenceTableGame {
    pub fn new(num_players: usize, num_subbands: usize, table: impl Fn(usize, usize, u64) -> f64 + 'static) -> Self {
        Self {
            num_players,
            num_subbands,
            table: Box::new(table),
        }
    }

    fn band_of(structure: &PowerAllocation, k: usize) -> Option<usize> {
        structure.row(k).iter().position(|&p| p > 0.0)
    }

    fn best_band(&self, k: usize, structure: Option<&PowerAllocation>) -> (usize, f64) {
        (0..self.num_subbands)
            .map(|b| {
                let co = structure.map_or(0, |s| s.support_mask(b) & !(1 << k));
                (b, (self.table)(k, b, co))
            })
            .fold((0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best })
    }

    fn unit_row(&self, band: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.num_subbands];
        row[band] = 1.0;
        row
    }
}

impl NegotiationGame for PreferenceTableGame {
    fn num_players(&self) -> usize {
        self.num_players
    }

    fn num_subbands(&self) -> usize {
        self.num_subbands
    }

    fn sensing(&mut self) -> PowerAllocation {
        let mut p = PowerAllocation::zeros(self.num_players, self.num_subbands);
        for k in 0..self.num_players {
            let (b, _) = self.best_band(k, None);
            p.set_row(k, &self.unit_row(b));
        }
        p
    }

    fn payoff(&mut self, k: usize, structure: &PowerAllocation) -> f64 {
        Self::band_of(structure, k).map_or(0.0, |b| (self.table)(k, b, structure.support_mask(b) & !(1 << k)))
    }

    fn best_response(&mut self, k: usize, structure: &PowerAllocation) -> (Vec<f64>, f64) {
        let (b, v) = self.best_band(k, Some(structure));
        (self.unit_row(b), v)
    }
}

/// Three UUs, two sub-bands, cyclic partner preferences: UU 0 prefers UU 1,
/// UU 1 prefers UU 2 and UU 2 prefers UU 0 as a co-member on either sub-band.
/// Alone, UU 0 prefers sub-band 0 and UUs 1 and 2 prefer sub-band 1.
pub fn cyclic_preference_game() -> PreferenceTableGame {
    PreferenceTableGame::new(3, 2, |k, band, co| {
        let favourite = (k + 1) % 3;
        match co.count_ones() {
            0 => match (k, band) {
                (0, 0) | (1, 1) | (2, 1) => 2.0,
                _ => 1.0,
            },
            1 if co == 1 << favourite => 5.0,
            1 => 0.5,
            _ => 0.3,
        }
    })
}
