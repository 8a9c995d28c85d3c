//! Per-slot control environment for the joint uplink: observations built
//! from normalized channel estimates, decoding of flat `[-1, 1]` action
//! vectors into transmit powers, surface phases, and the denoising factor,
//! reward shaping from the per-round gap penalty with flat constraint
//! penalties, and the benchmark geometry variants.
//!
//! Conventions:
//!
//! - Features are scaled by the inverse square root of the corresponding
//!   link's large-scale gain, which the base station knows from geometry, so
//!   every entry is O(1) regardless of distances.
//! - The observation uses the estimated direct and cascaded links and the
//!   true surface-to-base-station entries (a static, separately measured
//!   link).
//! - The per-round penalty in the reward is normalized by its value under
//!   the channel-inversion baseline on the episode's first realization,
//!   keeping rewards O(1); the raw value is always reported alongside.
//! - Small-scale fading is redrawn every slot; departure angles are redrawn
//!   every episode. Both come from child streams labeled by episode and
//!   slot, so environments sharing a seed face the same fading material at
//!   the same slot even when their surface layouts differ.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, ChannelSampler, PhaseConfig};
use crate::convergence::{bias_bound, psi, variance_bound};
use crate::error::{Error, Result};
use crate::fl::{aligned_estimates, inversion_heuristic};
use crate::phy::{analytic_mse, rates, sic_order, MseBreakdown, PowerAllocation};
use crate::rng::RngStream;
use crate::scenario::{BoundConstants, ScenarioConfig};
use crate::Complex;

/// Smallest denoising factor an action can select.
pub const ETA_MIN: f64 = 1e-14;
/// Largest denoising factor an action can select.
pub const ETA_MAX: f64 = 1.0;
/// Slots per episode unless overridden.
pub const DEFAULT_SLOTS: usize = 100;
/// Default flat penalty for exceeding the aggregation-error tolerance.
pub const DEFAULT_MSE_PENALTY: f64 = -1.0;
/// Default flat penalty for missing a data user's minimum rate.
pub const DEFAULT_RATE_PENALTY: f64 = -1.0;

/// Benchmark geometry variants. All of them reuse the base scenario's total
/// element budget so comparisons at matched seeds are like for like.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Direct links only.
    NoRis,
    /// One surface holding the whole element budget.
    SingleRis,
    /// Three surfaces splitting the element budget as evenly as possible.
    MultiRis,
    /// Multi-surface geometry, but every slot's phases are drawn uniformly
    /// at random instead of taken from the action.
    RandomPhase,
}

const SINGLE_RIS_POSITION: [f64; 3] = [50.0, 0.0, 20.0];
const MULTI_RIS_POSITIONS: [[f64; 3]; 3] =
    [[50.0, 50.0, 10.0], [-50.0, 50.0, 10.0], [0.0, -50.0, 10.0]];

/// Rewrites the surface geometry of `base` for the requested variant,
/// keeping every other scenario field. The total element count is
/// preserved; a variant that would leave a surface empty is rejected.
pub fn apply_variant(base: &ScenarioConfig, variant: Variant) -> Result<ScenarioConfig> {
    let mut cfg = base.clone();
    let total = base.total_elements();
    match variant {
        Variant::NoRis => {
            cfg.ris_elements = Vec::new();
            cfg.ris_positions = Vec::new();
        }
        Variant::SingleRis => {
            if total == 0 {
                return Err(Error::config(
                    "single-surface variant needs a nonzero element budget",
                ));
            }
            cfg.ris_elements = vec![total];
            cfg.ris_positions = vec![SINGLE_RIS_POSITION];
        }
        Variant::MultiRis | Variant::RandomPhase => {
            let surfaces = MULTI_RIS_POSITIONS.len();
            if total < surfaces {
                return Err(Error::config(
                    "multi-surface variant needs at least one element per surface",
                ));
            }
            let each = total / surfaces;
            let extra = total % surfaces;
            cfg.ris_elements = (0..surfaces)
                .map(|x| each + usize::from(x < extra))
                .collect();
            cfg.ris_positions = MULTI_RIS_POSITIONS.to_vec();
        }
    }
    Ok(cfg)
}

/// Flat observation vector; see the module docs for the layout and scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub features: Vec<f64>,
}

impl State {
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// FNV-1a over the feature bit patterns, for compact trajectory logs.
    pub fn feature_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for f in &self.features {
            for b in f.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Per-step diagnostics carried next to the reward.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepInfo {
    /// Achievable rate of every data user, bit/s, in group order.
    pub rates: Vec<f64>,
    /// Closed-form aggregation-error breakdown under the estimates.
    pub mse: MseBreakdown,
    /// Per-round gap penalty before normalization.
    pub psi_raw: f64,
    /// Penalty divided by the episode's baseline value; this is what the
    /// reward uses.
    pub psi_scaled: f64,
    /// The episode's baseline penalty (channel-inversion policy at reset).
    pub psi_ref: f64,
    pub bias_bound: f64,
    pub var_bound: f64,
    /// Aggregation error above the scenario tolerance this slot.
    pub chi_mse: bool,
    /// Some data user below the minimum rate this slot.
    pub chi_rate: bool,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: State,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Environment parameters on top of the radio scenario.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    /// Base scenario; the variant rewrites its surface geometry.
    pub scenario: ScenarioConfig,
    /// Constants for the per-round penalty.
    pub constants: BoundConstants,
    pub variant: Variant,
    pub slots_per_episode: usize,
    pub mse_penalty: f64,
    pub rate_penalty: f64,
}

impl EnvConfig {
    pub fn new(scenario: ScenarioConfig, constants: BoundConstants, variant: Variant) -> Self {
        EnvConfig {
            scenario,
            constants,
            variant,
            slots_per_episode: DEFAULT_SLOTS,
            mse_penalty: DEFAULT_MSE_PENALTY,
            rate_penalty: DEFAULT_RATE_PENALTY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if self.slots_per_episode == 0 {
            return Err(Error::config("slots_per_episode must be at least 1"));
        }
        if !self.mse_penalty.is_finite() || !self.rate_penalty.is_finite() {
            return Err(Error::config("penalty factors must be finite"));
        }
        if self.constants.grad_dim != self.scenario.grad_dim {
            return Err(Error::config(
                "penalty constants and scenario disagree on the gradient dimension",
            ));
        }
        Ok(())
    }
}

/// Clamps a raw `[-1, 1]` vector and decodes it into transmit powers, one
/// phase per surface element, and the denoising factor (log-scaled between
/// [`ETA_MIN`] and [`ETA_MAX`]). The slice length must be the scenario's
/// action dimension.
pub fn decode_action(raw: &[f64], cfg: &ScenarioConfig) -> (PowerAllocation, PhaseConfig) {
    assert_eq!(raw.len(), cfg.action_dim(), "decode_action: action length");
    let unit = |u: f64| (u.clamp(-1.0, 1.0) + 1.0) / 2.0;
    let users = cfg.total_users();
    let power: Vec<f64> = raw[..users].iter().map(|&u| cfg.max_power_w * unit(u)).collect();
    let mut phases = PhaseConfig::zeros(cfg);
    let mut at = users;
    for row in phases.theta.iter_mut() {
        for t in row.iter_mut() {
            *t = PhaseConfig::wrap(2.0 * std::f64::consts::PI * unit(raw[at]));
            at += 1;
        }
    }
    let denoise = ETA_MIN * (ETA_MAX / ETA_MIN).powf(unit(raw[at]));
    (PowerAllocation { power, denoise }, phases)
}

/// Mean of the episode rewards inside the trailing window that ends at
/// episode `e` and reaches back at most 100 episodes (inclusive ends); an
/// earlier episode index averages over what exists.
pub fn avg_reward(episode_rewards: &[f64], e: usize) -> Result<f64> {
    if e >= episode_rewards.len() {
        return Err(Error::invalid("avg_reward: episode index out of range"));
    }
    let start = e.saturating_sub(100);
    let window = &episode_rewards[start..=e];
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

/// The slot-by-slot decision process. One instance is single-threaded;
/// everything it does is determined by the construction seed and the action
/// sequence.
pub struct Environment {
    scenario: ScenarioConfig,
    constants: BoundConstants,
    variant: Variant,
    slots_per_episode: usize,
    mse_penalty: f64,
    rate_penalty: f64,
    sampler: ChannelSampler,
    direct_scale: Vec<f64>,
    ris_scale: Vec<f64>,
    cascaded_scale: Vec<Vec<f64>>,
    stream: RngStream,
    episode_stream: RngStream,
    episode: u64,
    aods: Vec<f64>,
    current: Option<ChannelRealization>,
    slot: usize,
    done: bool,
    psi_ref: f64,
}

impl Environment {
    /// Builds the environment: applies the variant geometry, draws the user
    /// placement once from the seed, and prepares the channel sampler.
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut scenario = apply_variant(&cfg.scenario, cfg.variant)?;
        let mut master = RngStream::from_seed(seed);
        let mut placement = master.child(0);
        let stream = master.child(1);
        scenario.user_positions =
            crate::channel::sample_user_positions(&mut placement, &scenario);
        let sampler = ChannelSampler::new(scenario.clone())?;
        let users = scenario.total_users();
        let direct_scale: Vec<f64> = (0..users)
            .map(|i| 1.0 / sampler.direct_gain(i).sqrt())
            .collect();
        let ris_scale: Vec<f64> = (0..scenario.num_ris())
            .map(|x| 1.0 / sampler.ris_bs_gain(x).sqrt())
            .collect();
        let cascaded_scale: Vec<Vec<f64>> = (0..users)
            .map(|i| {
                (0..scenario.num_ris())
                    .map(|x| 1.0 / sampler.cascaded_gain(i, x).sqrt())
                    .collect()
            })
            .collect();
        Ok(Environment {
            scenario,
            constants: cfg.constants,
            variant: cfg.variant,
            slots_per_episode: cfg.slots_per_episode,
            mse_penalty: cfg.mse_penalty,
            rate_penalty: cfg.rate_penalty,
            sampler,
            direct_scale,
            ris_scale,
            cascaded_scale,
            stream,
            episode_stream: RngStream::from_seed(0),
            episode: 0,
            aods: Vec::new(),
            current: None,
            slot: 0,
            done: true,
            psi_ref: 1.0,
        })
    }

    /// The effective scenario after the variant rewrite.
    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// The fading realization the next step will be evaluated on.
    pub fn realization(&self) -> Option<&ChannelRealization> {
        self.current.as_ref()
    }

    /// The episode's baseline penalty used for reward normalization.
    pub fn psi_reference(&self) -> f64 {
        self.psi_ref
    }

    /// Starts a new episode: fresh departure angles and fading, slot counter
    /// cleared, baseline penalty recomputed.
    ///
    /// All episode randomness comes from child streams labeled by episode
    /// and slot, so environments built on the same seed draw the same raw
    /// fading material at a given slot regardless of how many surfaces the
    /// variant deploys. Variant comparisons therefore run on common random
    /// numbers instead of accumulating unrelated fades.
    pub fn reset(&mut self) -> Result<State> {
        self.episode_stream = self.stream.child(self.episode);
        self.episode += 1;
        let mut aod_rng = self.episode_stream.child(0);
        self.aods = self.sampler.sample_aods(&mut aod_rng);
        let mut slot_rng = self.episode_stream.child(1);
        let real = self.sampler.realize(&mut slot_rng, &self.aods)?;
        let (alloc, phases) = inversion_heuristic(&real, &self.scenario)?;
        let baseline = self.penalty(&real, &alloc, &phases)?.0;
        self.psi_ref = if baseline > 0.0 { baseline } else { 1.0 };
        self.current = Some(real);
        self.slot = 0;
        self.done = false;
        self.build_state()
    }

    /// Applies a raw action vector; see [`decode_action`].
    pub fn step(&mut self, raw: &[f64]) -> Result<StepOutcome> {
        let (alloc, phases) = decode_action(raw, &self.scenario);
        self.step_decoded(alloc, phases)
    }

    /// Applies an already decoded allocation, for scripted policies.
    pub fn step_decoded(
        &mut self,
        alloc: PowerAllocation,
        mut phases: PhaseConfig,
    ) -> Result<StepOutcome> {
        if self.current.is_none() {
            return Err(Error::invalid("step: reset the environment first"));
        }
        if self.done {
            return Err(Error::invalid("step: episode already finished"));
        }
        if self.variant == Variant::RandomPhase {
            let mut phase_rng = self.episode_stream.child(2 + 2 * self.slot as u64);
            for row in phases.theta.iter_mut() {
                for t in row.iter_mut() {
                    *t = phase_rng.range(0.0, 2.0 * std::f64::consts::PI);
                }
            }
        }
        alloc.validate(self.scenario.max_power_w)?;
        phases.validate(&self.scenario)?;
        let real = self.current.as_ref().expect("checked above");
        let k = self.scenario.airfl_users;
        let users = self.scenario.total_users();
        let est_data_gains: Vec<f64> = (k..users)
            .map(|i| real.composite(&phases, i, true).norm_sqr())
            .collect();
        let order = sic_order(&est_data_gains);
        let true_channels: Vec<Complex> = (0..users)
            .map(|i| real.composite(&phases, i, false))
            .collect();
        let user_rates = rates(
            &alloc.power,
            &true_channels,
            k,
            &order,
            self.scenario.sic_residual,
            self.scenario.noise_power_w,
            self.scenario.bandwidth_hz,
        )?;
        let chi_rate = user_rates.iter().any(|&r| r < self.scenario.min_rate_bps);
        let (psi_raw, bias_sq, err_sq, mse) = {
            let real = self.current.as_ref().expect("checked above");
            self.penalty(real, &alloc, &phases)?
        };
        let chi_mse = mse.total > self.scenario.mse_limit;
        let psi_scaled = psi_raw / self.psi_ref;
        let reward = -psi_scaled
            + self.mse_penalty * f64::from(u8::from(chi_mse))
            + self.rate_penalty * f64::from(u8::from(chi_rate));
        self.slot += 1;
        self.done = chi_rate || self.slot >= self.slots_per_episode;
        let mut slot_rng = self.episode_stream.child(1 + 2 * self.slot as u64);
        self.current = Some(self.sampler.realize(&mut slot_rng, &self.aods)?);
        let next_state = self.build_state()?;
        Ok(StepOutcome {
            next_state,
            reward,
            done: self.done,
            info: StepInfo {
                rates: user_rates,
                mse,
                psi_raw,
                psi_scaled,
                psi_ref: self.psi_ref,
                bias_bound: bias_sq,
                var_bound: err_sq,
                chi_mse,
                chi_rate,
            },
        })
    }

    /// Penalty and error diagnostics of one allocation on one realization,
    /// all under the estimated channels after transmitter phase alignment.
    fn penalty(
        &self,
        real: &ChannelRealization,
        alloc: &PowerAllocation,
        phases: &PhaseConfig,
    ) -> Result<(f64, f64, f64, MseBreakdown)> {
        let users = self.scenario.total_users();
        let k = self.scenario.airfl_users;
        let est = aligned_estimates(real, phases, &self.scenario);
        let vars: Vec<f64> = (0..users).map(|i| real.composite_variance(i)).collect();
        let bias_sq = bias_bound(&est, &alloc.power, k, alloc.denoise, &self.constants)?;
        let err_sq = variance_bound(
            &est,
            &vars,
            &alloc.power,
            k,
            alloc.denoise,
            self.scenario.sic_residual,
            self.scenario.noise_power_w,
            &self.constants,
        )?;
        let mse = analytic_mse(
            &est,
            &vars,
            &alloc.power,
            k,
            alloc.denoise,
            self.scenario.sic_residual,
            self.scenario.noise_power_w,
            self.scenario.grad_dim,
        )?;
        Ok((psi(bias_sq, err_sq, &self.constants)?, bias_sq, err_sq, mse))
    }

    /// Observation for the current realization.
    pub fn current_state(&self) -> Result<State> {
        self.build_state()
    }

    fn build_state(&self) -> Result<State> {
        let real = self
            .current
            .as_ref()
            .ok_or_else(|| Error::invalid("state: reset the environment first"))?;
        let users = self.scenario.total_users();
        let mut features = Vec::with_capacity(self.scenario.state_dim());
        for i in 0..users {
            let v = real.est_direct[i] * self.direct_scale[i];
            features.push(v.re);
            features.push(v.im);
        }
        for x in 0..self.scenario.num_ris() {
            for g in &real.ris_bs[x] {
                let v = g * self.ris_scale[x];
                features.push(v.re);
                features.push(v.im);
            }
        }
        for i in 0..users {
            for x in 0..self.scenario.num_ris() {
                for c in &real.est_cascaded[i][x] {
                    let v = c * self.cascaded_scale[i][x];
                    features.push(v.re);
                    features.push(v.im);
                }
            }
        }
        debug_assert_eq!(features.len(), self.scenario.state_dim());
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::invalid("state: non-finite feature"));
        }
        Ok(State { features })
    }
}
