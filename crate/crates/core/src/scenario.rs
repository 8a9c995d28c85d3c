//! Scenario description and its JSON file format.
//!
//! A [`ScenarioConfig`] fixes everything about the radio side of a run:
//! how many devices feed the over-the-air gradient aggregation, how many
//! uplink data users share the band, surface placement and element counts,
//! path-loss law, impairment levels, and the service thresholds that the
//! controller is penalised for violating.
//!
//! All powers are stored linear (watts). The on-disk format carries noise
//! and transmit power in dBm because that is how they are usually quoted;
//! conversion happens at load and save. Unknown keys in a config file are
//! rejected rather than ignored.
//!
//! User indexing convention everywhere in the crate: users `0..airfl_users`
//! are the gradient (aggregation) devices, users `airfl_users..total_users()`
//! are the uplink data users.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convert a dBm figure to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Full radio-side description of a run. Construct via the profile
/// constructors or deserialize from JSON, then call [`ScenarioConfig::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Number of devices whose gradients are aggregated over the air (K).
    pub airfl_users: usize,
    /// Number of uplink data users decoded by interference cancellation (N).
    pub noma_users: usize,
    /// Reflecting elements per surface; the length is the surface count.
    pub ris_elements: Vec<usize>,
    /// Bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// Receiver noise power over the whole band, watts.
    pub noise_power_w: f64,
    /// Per-user transmit power ceiling, watts.
    pub max_power_w: f64,
    /// Fraction of an already-decoded user's power that leaks back into the
    /// residual signal (0 = ideal cancellation, 1 = no cancellation).
    pub sic_residual: f64,
    /// Relative channel-estimation error level; error variance on a link is
    /// this fraction of the link's average power.
    pub csi_error: f64,
    /// Path-loss exponent of the direct user-to-BS links.
    pub pl_exponent_direct: f64,
    /// Path-loss exponent of every surface-assisted hop.
    pub pl_exponent_ris: f64,
    /// Path-loss gain at the 1 m reference distance.
    pub pl_ref_gain: f64,
    /// Rician K-factor of the surface-to-BS links.
    pub rician_factor: f64,
    /// Element spacing over wavelength; the array response assumes 1/2.
    pub element_spacing_ratio: f64,
    /// Per-user rate floor for the data users, bit/s.
    pub min_rate_bps: f64,
    /// Aggregation-error ceiling the controller is penalised for exceeding.
    pub mse_limit: f64,
    /// Dimension of the gradient vector sent in one aggregation round (Q).
    pub grad_dim: usize,
    /// Base-station coordinates, metres.
    pub bs_position: [f64; 3],
    /// Surface coordinates, metres; length must match `ris_elements`.
    pub ris_positions: Vec<[f64; 3]>,
    /// User coordinates, metres. Empty means "draw uniformly on the disc of
    /// `user_disc_radius` around the BS at ground height" when a run starts.
    pub user_positions: Vec<[f64; 3]>,
    /// Radius of the user placement disc, metres.
    pub user_disc_radius: f64,
}

impl ScenarioConfig {
    /// Reference profile: the full-size deployment (14 aggregation devices,
    /// 4 data users, three 20-element surfaces).
    pub fn table_defaults() -> Self {
        ScenarioConfig {
            airfl_users: 14,
            noma_users: 4,
            ris_elements: vec![20, 20, 20],
            bandwidth_hz: 1e6,
            noise_power_w: dbm_to_watts(-114.0),
            max_power_w: dbm_to_watts(10.0),
            sic_residual: 0.04,
            csi_error: 0.02,
            pl_exponent_direct: 3.5,
            pl_exponent_ris: 2.2,
            pl_ref_gain: 1e-3,
            rician_factor: 2.0,
            element_spacing_ratio: 0.5,
            min_rate_bps: 1e6,
            mse_limit: 0.01,
            grad_dim: 10,
            bs_position: [0.0, 0.0, 20.0],
            ris_positions: vec![[50.0, 50.0, 10.0], [-50.0, 50.0, 10.0], [0.0, -50.0, 10.0]],
            user_positions: Vec::new(),
            user_disc_radius: 100.0,
        }
    }

    /// Small profile for quick runs and CI: 4 aggregation devices, 2 data
    /// users, one 8-element surface, same radio constants.
    pub fn desk() -> Self {
        ScenarioConfig {
            airfl_users: 4,
            noma_users: 2,
            ris_elements: vec![8],
            ris_positions: vec![[50.0, 0.0, 20.0]],
            // No rate floor at this scale: with flat per-slot penalties and
            // termination on a rate violation, every reward is negative, so
            // any reachable violation would make the shortest episode the
            // best one and turn training degenerate.
            min_rate_bps: 0.0,
            ..Self::table_defaults()
        }
    }

    pub fn num_ris(&self) -> usize {
        self.ris_elements.len()
    }

    pub fn total_users(&self) -> usize {
        self.airfl_users + self.noma_users
    }

    pub fn total_elements(&self) -> usize {
        self.ris_elements.iter().sum()
    }

    /// True if user index `i` belongs to the aggregation group.
    pub fn is_airfl(&self, i: usize) -> bool {
        i < self.airfl_users
    }

    /// Length of the flat control vector: one power per user, one phase per
    /// element, one denoising scalar.
    pub fn action_dim(&self) -> usize {
        self.total_users() + self.total_elements() + 1
    }

    /// Length of the flat observation vector: re/im of every direct link,
    /// every surface-to-BS entry, and every cascaded per-element link.
    pub fn state_dim(&self) -> usize {
        let i = self.total_users();
        2 * i + 2 * self.total_elements() + 2 * i * self.total_elements()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::config(msg.to_string()));
        if self.airfl_users == 0 {
            return fail("airfl_users must be at least 1");
        }
        if self.ris_positions.len() != self.ris_elements.len() {
            return fail("ris_positions and ris_elements must have the same length");
        }
        if self.ris_elements.contains(&0) {
            return fail("each surface needs at least one element");
        }
        if !(self.bandwidth_hz > 0.0) {
            return fail("bandwidth_hz must be positive");
        }
        if !(self.noise_power_w > 0.0) {
            return fail("noise power must be positive");
        }
        if !(self.max_power_w > 0.0) {
            return fail("max power must be positive");
        }
        if !(0.0..=1.0).contains(&self.sic_residual) {
            return fail("sic_residual must lie in [0, 1]");
        }
        if !(self.csi_error >= 0.0) {
            return fail("csi_error must be non-negative");
        }
        if !(self.pl_exponent_direct > 0.0) || !(self.pl_exponent_ris > 0.0) {
            return fail("path-loss exponents must be positive");
        }
        if !(self.pl_ref_gain > 0.0) {
            return fail("pl_ref_gain must be positive");
        }
        if !(self.rician_factor >= 0.0) {
            return fail("rician_factor must be non-negative");
        }
        if self.element_spacing_ratio != 0.5 {
            return fail("element_spacing_ratio is fixed at 0.5");
        }
        if !(self.min_rate_bps >= 0.0) {
            return fail("min_rate_bps must be non-negative");
        }
        if !(self.mse_limit > 0.0) {
            return fail("mse_limit must be positive");
        }
        if self.grad_dim == 0 {
            return fail("grad_dim must be at least 1");
        }
        if !self.user_positions.is_empty() && self.user_positions.len() != self.total_users() {
            return fail("user_positions must be empty or cover every user");
        }
        if !(self.user_disc_radius > 0.0) {
            return fail("user_disc_radius must be positive");
        }
        Ok(())
    }

    /// Parse from the JSON file format, rejecting unknown keys, and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let cfg = file.into_config();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize to the JSON file format (powers in dBm).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ScenarioFile::from_config(self))?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk twin of [`ScenarioConfig`]; powers in dBm, everything else SI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub airfl_users: usize,
    pub noma_users: usize,
    pub ris_elements: Vec<usize>,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    pub max_power_dbm: f64,
    pub sic_residual: f64,
    pub csi_error: f64,
    pub pl_exponent_direct: f64,
    pub pl_exponent_ris: f64,
    pub pl_ref_gain: f64,
    pub rician_factor: f64,
    pub element_spacing_ratio: f64,
    pub min_rate_bps: f64,
    pub mse_limit: f64,
    pub grad_dim: usize,
    pub bs_position: [f64; 3],
    pub ris_positions: Vec<[f64; 3]>,
    #[serde(default)]
    pub user_positions: Vec<[f64; 3]>,
    pub user_disc_radius: f64,
}

impl ScenarioFile {
    pub fn into_config(self) -> ScenarioConfig {
        ScenarioConfig {
            airfl_users: self.airfl_users,
            noma_users: self.noma_users,
            ris_elements: self.ris_elements,
            bandwidth_hz: self.bandwidth_hz,
            noise_power_w: dbm_to_watts(self.noise_dbm),
            max_power_w: dbm_to_watts(self.max_power_dbm),
            sic_residual: self.sic_residual,
            csi_error: self.csi_error,
            pl_exponent_direct: self.pl_exponent_direct,
            pl_exponent_ris: self.pl_exponent_ris,
            pl_ref_gain: self.pl_ref_gain,
            rician_factor: self.rician_factor,
            element_spacing_ratio: self.element_spacing_ratio,
            min_rate_bps: self.min_rate_bps,
            mse_limit: self.mse_limit,
            grad_dim: self.grad_dim,
            bs_position: self.bs_position,
            ris_positions: self.ris_positions,
            user_positions: self.user_positions,
            user_disc_radius: self.user_disc_radius,
        }
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        ScenarioFile {
            airfl_users: cfg.airfl_users,
            noma_users: cfg.noma_users,
            ris_elements: cfg.ris_elements.clone(),
            bandwidth_hz: cfg.bandwidth_hz,
            noise_dbm: watts_to_dbm(cfg.noise_power_w),
            max_power_dbm: watts_to_dbm(cfg.max_power_w),
            sic_residual: cfg.sic_residual,
            csi_error: cfg.csi_error,
            pl_exponent_direct: cfg.pl_exponent_direct,
            pl_exponent_ris: cfg.pl_exponent_ris,
            pl_ref_gain: cfg.pl_ref_gain,
            rician_factor: cfg.rician_factor,
            element_spacing_ratio: cfg.element_spacing_ratio,
            min_rate_bps: cfg.min_rate_bps,
            mse_limit: cfg.mse_limit,
            grad_dim: cfg.grad_dim,
            bs_position: cfg.bs_position,
            ris_positions: cfg.ris_positions.clone(),
            user_positions: cfg.user_positions.clone(),
            user_disc_radius: cfg.user_disc_radius,
        }
    }
}

/// Constants of one learning task used by the round-error and gap bounds:
/// smoothness and curvature of the objective, the step size, and envelopes
/// on gradient norm and per-coordinate gradient spread.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Smoothness constant of the global objective (largest curvature).
    pub smoothness: f64,
    /// Gradient-dominance constant (smallest curvature for quadratics).
    pub pl_constant: f64,
    /// Step size used by the global update.
    pub learn_rate: f64,
    /// Envelope on any user's squared gradient norm.
    pub grad_norm_sq: f64,
    /// Per-coordinate envelope on the cross-user gradient spread.
    pub grad_var: Vec<f64>,
    /// Gradient dimension.
    pub grad_dim: usize,
}

impl BoundConstants {
    /// Largest step size the gap recursion tolerates.
    pub fn max_learn_rate(smoothness: f64) -> f64 {
        2.0 / (2.0 + smoothness)
    }

    /// Default step size: comfortably inside the recursion's validity range
    /// and never above the inverse smoothness.
    pub fn default_learn_rate(smoothness: f64) -> f64 {
        (0.9 * Self::max_learn_rate(smoothness)).min(1.0 / smoothness)
    }

    /// Sum of the per-coordinate spread envelopes.
    pub fn grad_var_sum(&self) -> f64 {
        self.grad_var.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.smoothness > 0.0) {
            return Err(Error::config("smoothness must be positive"));
        }
        if !(self.pl_constant > 0.0) || self.pl_constant > self.smoothness {
            return Err(Error::config("pl_constant must lie in (0, smoothness]"));
        }
        if !(self.learn_rate > 0.0) || self.learn_rate > Self::max_learn_rate(self.smoothness) {
            return Err(Error::config(
                "learn_rate must lie in (0, 2/(2+smoothness)]",
            ));
        }
        if !(self.grad_norm_sq >= 0.0) {
            return Err(Error::config("grad_norm_sq must be non-negative"));
        }
        if self.grad_var.len() != self.grad_dim {
            return Err(Error::config("grad_var length must equal grad_dim"));
        }
        if self.grad_var.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::config("grad_var entries must be non-negative"));
        }
        Ok(())
    }
}
