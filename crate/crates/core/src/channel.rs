//! Scenario parameters and random channel realizations.
//!
//! A [`ChannelRealization`] holds every gain that stays constant during one
//! time slot: the macro-cell gains `h[k][m]`, the femto-cell gains
//! `g'[m][j][k]` (UU `j` to femto BS `k`) and the interference-plus-noise
//! floor `sigma[m][k]` seen by femto BS `k`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

/// Everything needed to reproduce one simulated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub num_uus: usize,
    pub num_subbands: usize,
    /// Per-device transmit power cap.
    pub power_cap: f64,
    /// Maximum interference the macro-cell receiver tolerates per sub-band.
    pub interference_cap: f64,
    /// Geometric price decay factor of the leader.
    pub epsilon: f64,
    pub seed: u64,
    pub noise_floor: f64,
    /// Mean of the exponential (Rayleigh power) fading draws.
    pub fading_scale: f64,
    /// `None` picks ten times the geometric-descent bound for the run.
    pub max_outer_iters: Option<usize>,
    /// Negotiation rounds allowed per coalition formation.
    pub max_inner_iters: usize,
    /// Largest number of candidate sub-bands searched exhaustively.
    pub subset_exact_threshold: usize,
    /// Payoff improvement a UU needs before it changes its sub-bands.
    pub tolerance: f64,
    /// Stop lowering a sub-band price once the revenue it earns falls.
    pub revenue_guard: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_uus: 4,
            num_subbands: 4,
            power_cap: 10.0,
            interference_cap: 2.0,
            epsilon: 0.01,
            seed: 0,
            noise_floor: 1.0,
            fading_scale: 1.0,
            max_outer_iters: None,
            max_inner_iters: 64,
            subset_exact_threshold: 15,
            tolerance: 1e-6,
            revenue_guard: true,
        }
    }
}

impl ScenarioConfig {
    pub fn new(num_uus: usize, num_subbands: usize) -> Self {
        Self {
            num_uus,
            num_subbands,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_uus == 0 {
            return fail("num_uus must be at least 1".into());
        }
        if self.num_uus > 64 {
            return fail(format!("num_uus must be at most 64, got {}", self.num_uus));
        }
        if self.num_subbands == 0 {
            return fail("num_subbands must be at least 1".into());
        }
        if !(self.power_cap >= 0.0 && self.power_cap.is_finite()) {
            return fail(format!("power_cap must be finite and >= 0, got {}", self.power_cap));
        }
        if !(self.interference_cap >= 0.0 && self.interference_cap.is_finite()) {
            return fail(format!(
                "interference_cap must be finite and >= 0, got {}",
                self.interference_cap
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.noise_floor > 0.0 && self.noise_floor.is_finite()) {
            return fail(format!("noise_floor must be positive, got {}", self.noise_floor));
        }
        if !(self.fading_scale > 0.0 && self.fading_scale.is_finite()) {
            return fail(format!("fading_scale must be positive, got {}", self.fading_scale));
        }
        if self.max_outer_iters == Some(0) {
            return fail("max_outer_iters must be positive".into());
        }
        if self.max_inner_iters == 0 {
            return fail("max_inner_iters must be positive".into());
        }
        if self.subset_exact_threshold == 0 {
            return fail("subset_exact_threshold must be positive".into());
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return fail(format!("tolerance must be positive, got {}", self.tolerance));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    num_uus: usize,
    num_subbands: usize,
    /// `[k * M + m]`
    macro_gains: Vec<f64>,
    /// `[(m * K + j) * K + k]`
    femto_gains: Vec<f64>,
    /// `[m * K + k]`
    noise: Vec<f64>,
}

impl ChannelRealization {
    /// Assembles a realization from explicit gains.
    ///
    /// `macro_gains[k][m]`, `femto_gains[m][j][k]` and `noise[m][k]`.
    pub fn from_parts(
        macro_gains: Vec<Vec<f64>>,
        femto_gains: Vec<Vec<Vec<f64>>>,
        noise: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = macro_gains.len();
        let m = macro_gains.first().map_or(0, Vec::len);
        if k == 0 || m == 0 {
            return Err(Error::InvalidConfig("channel needs K >= 1 and M >= 1".into()));
        }
        let shape_err = |what: &str| Err(Error::InvalidConfig(format!("{what} has the wrong shape")));
        if macro_gains.iter().any(|row| row.len() != m) {
            return shape_err("macro gain matrix");
        }
        if femto_gains.len() != m || femto_gains.iter().any(|g| g.len() != k || g.iter().any(|r| r.len() != k)) {
            return shape_err("femto gain family");
        }
        if noise.len() != m || noise.iter().any(|r| r.len() != k) {
            return shape_err("noise matrix");
        }
        let real = Self {
            num_uus: k,
            num_subbands: m,
            macro_gains: macro_gains.into_iter().flatten().collect(),
            femto_gains: femto_gains.into_iter().flatten().flatten().collect(),
            noise: noise.into_iter().flatten().collect(),
        };
        if real
            .macro_gains
            .iter()
            .chain(&real.femto_gains)
            .any(|g| !(g.is_finite() && *g >= 0.0))
        {
            return Err(Error::InvalidConfig("gains must be finite and nonnegative".into()));
        }
        if real.noise.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig("noise powers must be positive".into()));
        }
        Ok(real)
    }

    pub fn num_uus(&self) -> usize {
        self.num_uus
    }

    pub fn num_subbands(&self) -> usize {
        self.num_subbands
    }

    /// Gain from UU `k` to the macro-cell receiver on sub-band `m`.
    #[inline]
    pub fn h(&self, k: usize, m: usize) -> f64 {
        self.macro_gains[k * self.num_subbands + m]
    }

    /// Gain from UU `j` to femto BS `k` on sub-band `m`.
    #[inline]
    pub fn g_prime(&self, m: usize, j: usize, k: usize) -> f64 {
        self.femto_gains[(m * self.num_uus + j) * self.num_uus + k]
    }

    #[inline]
    pub fn sigma(&self, m: usize, k: usize) -> f64 {
        self.noise[m * self.num_uus + k]
    }

    /// Noise-normalized gain `g'[m][j][k] / sigma[m][k]`.
    #[inline]
    pub fn g(&self, m: usize, j: usize, k: usize) -> f64 {
        self.g_prime(m, j, k) / self.sigma(m, k)
    }

    /// Writes one row per `(uu, subband)` with `h`, `sigma` and the UU's femto gain row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["uu".to_string(), "subband".into(), "h".into(), "sigma".into()];
        header.extend((0..self.num_uus).map(|k| format!("g_to_{k}")));
        wtr.write_record(&header)?;
        for k in 0..self.num_uus {
            for m in 0..self.num_subbands {
                let mut row = vec![
                    k.to_string(),
                    m.to_string(),
                    self.h(k, m).to_string(),
                    self.sigma(m, k).to_string(),
                ];
                row.extend((0..self.num_uus).map(|to| self.g_prime(m, k, to).to_string()));
                wtr.write_record(&row)?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<channel csv>", e))?;
        Ok(())
    }
}

/// Draws every gain i.i.d. from an exponential law with mean `fading_scale`.
///
/// Draw order is fixed (macro gains, then femto gains, sub-band major) so a
/// seed pins the whole realization.
pub fn generate_channel(config: &ScenarioConfig) -> ChannelRealization {
    debug_assert!(config.validate().is_ok());
    let k = config.num_uus;
    let m = config.num_subbands;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fading = Exp::new(1.0 / config.fading_scale).expect("fading_scale validated positive");

    let mut macro_gains = vec![0.0; k * m];
    for sub in 0..m {
        for uu in 0..k {
            macro_gains[uu * m + sub] = fading.sample(&mut rng);
        }
    }
    let femto_gains = (0..m * k * k).map(|_| fading.sample(&mut rng)).collect();

    ChannelRealization {
        num_uus: k,
        num_subbands: m,
        macro_gains,
        femto_gains,
        noise: vec![config.noise_floor; m * k],
    }
}
