//! Experiment descriptions: the JSON config format, profile resolution, and
//! kind-specific validation.
//!
//! A config file is a flat JSON object with a `kind` plus the fields that
//! kind needs; unknown keys are rejected. Resolution layers the pieces in a
//! fixed order: profile defaults, then the optional full `scenario` object,
//! then single-field overrides, then command-line flags. The resolved
//! experiment echoes everything into the run manifest except the output
//! location, so re-running a manifest elsewhere reproduces the artifacts
//! byte for byte.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use airnoma_core::agent::AgentHyper;
use airnoma_core::env::{Variant, DEFAULT_SLOTS};
use airnoma_core::{Error, Result, ScenarioConfig};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// What an experiment does; selects the dispatcher and the artifact set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Closed-form aggregation error against its simulation estimate.
    MseOracle,
    /// Measured optimality gap against the analytic envelope.
    BoundCheck,
    /// Policy training (or a random baseline) with per-episode logs.
    Train,
    /// One metric swept over a scenario axis, per seed plus aggregates.
    Sweep,
    /// Surface-deployment comparison at matched seeds.
    VariantCompare,
    /// Gradient-aggregation training run with a per-round gap trace.
    AirflRun,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MseOracle => "mse_oracle",
            ExperimentKind::BoundCheck => "bound_check",
            ExperimentKind::Train => "train",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::VariantCompare => "variant_compare",
            ExperimentKind::AirflRun => "airfl_run",
        }
    }
}

/// Scenario and hyperparameter bundle to start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Full-size deployment and training schedule.
    Default,
    /// Scaled-down profile for quick runs and CI.
    Desk,
}

impl Profile {
    pub fn scenario(self) -> ScenarioConfig {
        match self {
            Profile::Default => ScenarioConfig::table_defaults(),
            Profile::Desk => ScenarioConfig::desk(),
        }
    }

    pub fn hyper(self) -> AgentHyper {
        match self {
            Profile::Default => AgentHyper::table(),
            Profile::Desk => AgentHyper::desk(),
        }
    }
}

/// Controller driving the environment or aggregation rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Recurrent actor-critic over the state history.
    LstmDdpg,
    /// Dense actor-critic on the latest state only.
    Ddpg,
    /// Uniform random actions.
    Random,
    /// Channel-inversion allocation with greedily co-phased surfaces.
    Heuristic,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::LstmDdpg => "lstm_ddpg",
            PolicyKind::Ddpg => "ddpg",
            PolicyKind::Random => "random",
            PolicyKind::Heuristic => "heuristic",
        }
    }
}

/// Scenario dimension a sweep walks over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Number of aggregation devices.
    AirflUsers,
    /// Per-user transmit power ceiling, dBm.
    MaxPowerDbm,
    /// Relative channel-estimation error level.
    CsiError,
    /// Fraction of decoded power leaking through cancellation.
    SicResidual,
    /// Reflecting elements per surface.
    Elements,
    /// Surface deployment (direct-only, one surface, three surfaces).
    Variant,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::AirflUsers => "airfl_users",
            SweepAxis::MaxPowerDbm => "max_power_dbm",
            SweepAxis::CsiError => "csi_error",
            SweepAxis::SicResidual => "sic_residual",
            SweepAxis::Elements => "elements",
            SweepAxis::Variant => "variant",
        }
    }
}

/// Optional overrides applied on top of the profile's training schedule.
/// Absent fields keep the profile value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverride {
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub batch_size: Option<usize>,
    pub lr_actor: Option<f64>,
    pub lr_critic: Option<f64>,
    pub noise_start: Option<f64>,
    pub noise_end: Option<f64>,
    pub noise_decay_fraction: Option<f64>,
    pub history: Option<usize>,
    pub hidden_size: Option<usize>,
    pub hidden_layers: Option<usize>,
    pub buffer_capacity: Option<usize>,
    pub episodes: Option<usize>,
    pub per_slot_updates: Option<bool>,
}

impl HyperOverride {
    pub fn apply(&self, hyper: &mut AgentHyper) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    hyper.$field = v;
                }
            };
        }
        set!(gamma);
        set!(tau);
        set!(batch_size);
        set!(lr_actor);
        set!(lr_critic);
        set!(noise_start);
        set!(noise_end);
        set!(noise_decay_fraction);
        set!(history);
        set!(hidden_size);
        set!(hidden_layers);
        set!(buffer_capacity);
        set!(episodes);
        set!(per_slot_updates);
    }
}

/// The on-disk experiment description. Everything except `kind` is
/// optional; [`ExperimentSpec::resolve`] fills defaults and rejects
/// combinations the kind cannot use.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub profile: Option<Profile>,
    /// Complete scenario object in the scenario file format; replaces the
    /// profile's scenario entirely.
    #[serde(default)]
    pub scenario: Option<serde_json::Value>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Simulation draws per oracle comparison.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Number of random configurations the oracle sweep visits.
    #[serde(default)]
    pub oracle_configs: Option<usize>,
    /// Standard-error multiple the oracle comparison must stay within.
    #[serde(default)]
    pub tolerance_se: Option<f64>,
    /// Communication rounds for gradient-aggregation experiments.
    #[serde(default)]
    pub rounds: Option<usize>,
    /// Gradient dimension of the synthetic task (overrides the scenario).
    #[serde(default)]
    pub grad_dim: Option<usize>,
    /// Spread of the per-user quadratic objectives.
    #[serde(default)]
    pub heterogeneity: Option<f64>,
    /// Seed for drawing the synthetic task (shared across run seeds).
    #[serde(default)]
    pub task_seed: Option<u64>,
    #[serde(default)]
    pub policy: Option<PolicyKind>,
    #[serde(default)]
    pub episodes: Option<usize>,
    /// Decision slots per episode (train) or rollout length (sweeps).
    #[serde(default)]
    pub slots: Option<usize>,
    /// Surface deployment for train/sweep/aggregation experiments.
    #[serde(default)]
    pub variant: Option<Variant>,
    #[serde(default)]
    pub axis: Option<SweepAxis>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    /// Bypass the channel: exact mean aggregation every round.
    #[serde(default)]
    pub perfect: Option<bool>,
    /// Write a JSON-lines trajectory next to the run's other artifacts.
    #[serde(default)]
    pub log_trajectory: Option<bool>,
    /// Dump every drawn channel link to CSV (aggregation runs only).
    #[serde(default)]
    pub dump_channels: Option<bool>,
    #[serde(default)]
    pub hyper: Option<HyperOverride>,
}

/// Command-line overrides layered on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seeds: Option<Vec<u64>>,
    pub out_dir: Option<PathBuf>,
    pub profile: Option<Profile>,
}

/// A fully determined experiment: every field the dispatchers read.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub kind: ExperimentKind,
    pub profile: Profile,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub hyper: AgentHyper,
    pub variant: Variant,
    pub policy: PolicyKind,
    pub samples: usize,
    pub oracle_configs: usize,
    pub tolerance_se: f64,
    pub rounds: usize,
    pub heterogeneity: f64,
    pub task_seed: u64,
    pub slots: usize,
    pub axis: Option<SweepAxis>,
    pub values: Vec<f64>,
    pub perfect: bool,
    pub log_trajectory: bool,
    pub dump_channels: bool,
}

impl ExperimentSpec {
    /// Layers profile, file fields, and command-line flags into a
    /// [`Resolved`] experiment, rejecting invalid combinations.
    pub fn resolve(&self, cli: &CliOverrides) -> Result<Resolved> {
        let kind = self.kind;
        let profile = cli.profile.or(self.profile).unwrap_or(Profile::Desk);
        let seeds = cli
            .seeds
            .clone()
            .unwrap_or_else(|| self.seeds.clone());
        if seeds.is_empty() {
            return Err(Error::config("experiment needs at least one seed"));
        }
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != seeds.len() {
            return Err(Error::config("seed list contains duplicates"));
        }
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| self.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join(kind.name()));

        let mut scenario = match &self.scenario {
            Some(value) => ScenarioConfig::from_json(&value.to_string())?,
            None => profile.scenario(),
        };
        if let Some(q) = self.grad_dim {
            if q == 0 {
                return Err(Error::config("grad_dim must be at least 1"));
            }
            scenario.grad_dim = q;
        }
        scenario.validate()?;

        let mut hyper = profile.hyper();
        if let Some(over) = &self.hyper {
            over.apply(&mut hyper);
        }
        if let Some(e) = self.episodes {
            hyper.episodes = e;
        }

        let policy = self.policy.unwrap_or(match kind {
            ExperimentKind::Train => PolicyKind::LstmDdpg,
            _ => PolicyKind::Heuristic,
        });
        match kind {
            ExperimentKind::Train => {
                if policy == PolicyKind::Heuristic {
                    return Err(Error::config(
                        "train: policy must be lstm_ddpg, ddpg, or random",
                    ));
                }
            }
            ExperimentKind::Sweep | ExperimentKind::VariantCompare => {
                if !matches!(policy, PolicyKind::Heuristic | PolicyKind::Random) {
                    return Err(Error::config(
                        "rollout experiments support only the heuristic or random policy",
                    ));
                }
            }
            ExperimentKind::MseOracle | ExperimentKind::BoundCheck | ExperimentKind::AirflRun => {
                if policy != PolicyKind::Heuristic {
                    return Err(Error::config(format!(
                        "{}: allocations come from the heuristic policy",
                        kind.name()
                    )));
                }
            }
        }
        // The dense variant is a policy choice, not a separate schedule.
        if policy == PolicyKind::Ddpg {
            hyper = hyper.dense_variant();
        }

        let axis = self.axis;
        let values = match kind {
            ExperimentKind::Sweep => {
                let axis = axis.ok_or_else(|| Error::config("sweep: axis is required"))?;
                if axis == SweepAxis::Variant {
                    if self.values.as_ref().is_some_and(|v| !v.is_empty()) {
                        return Err(Error::config(
                            "sweep: the variant axis takes no numeric values",
                        ));
                    }
                    Vec::new()
                } else {
                    let values = self
                        .values
                        .clone()
                        .ok_or_else(|| Error::config("sweep: values are required"))?;
                    if values.is_empty() {
                        return Err(Error::config("sweep: value list is empty"));
                    }
                    if values.iter().any(|v| !v.is_finite()) {
                        return Err(Error::config("sweep: values must be finite"));
                    }
                    values
                }
            }
            _ => {
                if self.values.is_some() || axis.is_some() {
                    return Err(Error::config(format!(
                        "{}: axis/values apply only to sweeps",
                        kind.name()
                    )));
                }
                Vec::new()
            }
        };

        // The simulation estimator refuses fewer draws than this; reject
        // early so the run directory is never created.
        let samples = self.samples.unwrap_or(200_000);
        if samples < 1000 {
            return Err(Error::config("samples must be at least 1000"));
        }
        let oracle_configs = self.oracle_configs.unwrap_or(10);
        if kind == ExperimentKind::MseOracle && oracle_configs == 0 {
            return Err(Error::config("mse_oracle: needs at least one configuration"));
        }
        // The oracle comparison is a two-sided test over many configs, so it
        // gets a wider default band than the one-sided ordering checks.
        let tolerance_se = self.tolerance_se.unwrap_or(match kind {
            ExperimentKind::MseOracle => 3.0,
            _ => 2.0,
        });
        if !(tolerance_se > 0.0) {
            return Err(Error::config("tolerance_se must be positive"));
        }
        let rounds = self.rounds.unwrap_or(200);
        if rounds == 0 {
            return Err(Error::config("rounds must be at least 1"));
        }
        let heterogeneity = self.heterogeneity.unwrap_or(3.0);
        if !(heterogeneity >= 0.0) {
            return Err(Error::config("heterogeneity must be non-negative"));
        }
        let slots = self.slots.unwrap_or(match kind {
            ExperimentKind::Train => DEFAULT_SLOTS,
            _ => 200,
        });
        if slots == 0 {
            return Err(Error::config("slots must be at least 1"));
        }
        let perfect = self.perfect.unwrap_or(false);
        if perfect && !matches!(kind, ExperimentKind::BoundCheck | ExperimentKind::AirflRun)
        {
            return Err(Error::config(
                "perfect aggregation applies only to gradient-aggregation experiments",
            ));
        }
        let dump_channels = self.dump_channels.unwrap_or(false);
        if dump_channels && kind != ExperimentKind::AirflRun {
            return Err(Error::config(
                "channel dumps are produced by aggregation runs only",
            ));
        }

        Ok(Resolved {
            kind,
            profile,
            seeds,
            out_dir,
            scenario,
            hyper,
            variant: self.variant.unwrap_or(Variant::SingleRis),
            policy,
            samples,
            oracle_configs,
            tolerance_se,
            rounds,
            heterogeneity,
            task_seed: self.task_seed.unwrap_or(7),
            slots,
            axis,
            values,
            perfect,
            log_trajectory: self.log_trajectory.unwrap_or(false),
            dump_channels,
        })
    }
}

impl Resolved {
    /// The run manifest: the full resolved configuration minus the output
    /// location, so identical experiments yield identical manifests no
    /// matter where their artifacts land.
    pub fn manifest(&self) -> Result<serde_json::Value> {
        let scenario: serde_json::Value = serde_json::from_str(&self.scenario.to_json()?)?;
        let mut m = serde_json::Map::new();
        m.insert("code_version".into(), CODE_VERSION.into());
        m.insert("kind".into(), serde_json::to_value(self.kind)?);
        m.insert("profile".into(), serde_json::to_value(self.profile)?);
        m.insert("seeds".into(), serde_json::to_value(&self.seeds)?);
        m.insert("scenario".into(), scenario);
        m.insert("hyper".into(), serde_json::to_value(&self.hyper)?);
        m.insert("variant".into(), serde_json::to_value(self.variant)?);
        m.insert("policy".into(), serde_json::to_value(self.policy)?);
        m.insert("samples".into(), self.samples.into());
        m.insert("oracle_configs".into(), self.oracle_configs.into());
        m.insert("tolerance_se".into(), self.tolerance_se.into());
        m.insert("rounds".into(), self.rounds.into());
        m.insert("heterogeneity".into(), self.heterogeneity.into());
        m.insert("task_seed".into(), self.task_seed.into());
        m.insert("slots".into(), self.slots.into());
        m.insert("axis".into(), serde_json::to_value(self.axis)?);
        m.insert("values".into(), serde_json::to_value(&self.values)?);
        m.insert("perfect".into(), self.perfect.into());
        m.insert("log_trajectory".into(), self.log_trajectory.into());
        m.insert("dump_channels".into(), self.dump_channels.into());
        Ok(serde_json::Value::Object(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind: &str) -> ExperimentSpec {
        let text = format!(r#"{{"kind": "{kind}", "seeds": [1]}}"#);
        serde_json::from_str(&text).expect("minimal spec parses")
    }

    #[test]
    fn test_unknown_keys_rejected() {
        let text = r#"{"kind": "train", "seeds": [1], "bogus": 3}"#;
        let err = serde_json::from_str::<ExperimentSpec>(text);
        assert!(err.is_err(), "unknown key accepted");
    }

    #[test]
    fn test_unknown_kind_rejected() {
        let text = r#"{"kind": "dance", "seeds": [1]}"#;
        assert!(serde_json::from_str::<ExperimentSpec>(text).is_err());
    }

    #[test]
    fn test_empty_seed_list_rejected() {
        let mut spec = minimal("train");
        spec.seeds.clear();
        let err = spec.resolve(&CliOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("seed"), "got {err}");
    }

    #[test]
    fn test_duplicate_seeds_rejected() {
        let mut spec = minimal("train");
        spec.seeds = vec![3, 3];
        assert!(spec.resolve(&CliOverrides::default()).is_err());
    }

    #[test]
    fn test_sweep_requires_axis_and_values() {
        let spec = minimal("sweep");
        assert!(spec.resolve(&CliOverrides::default()).is_err(), "missing axis");
        let mut spec = minimal("sweep");
        spec.axis = Some(SweepAxis::Elements);
        assert!(spec.resolve(&CliOverrides::default()).is_err(), "missing values");
        spec.values = Some(Vec::new());
        assert!(spec.resolve(&CliOverrides::default()).is_err(), "empty values");
        spec.values = Some(vec![8.0, 16.0]);
        assert!(spec.resolve(&CliOverrides::default()).is_ok());
    }

    #[test]
    fn test_variant_axis_rejects_numeric_values() {
        let mut spec = minimal("sweep");
        spec.axis = Some(SweepAxis::Variant);
        spec.values = Some(vec![1.0]);
        assert!(spec.resolve(&CliOverrides::default()).is_err());
        spec.values = None;
        assert!(spec.resolve(&CliOverrides::default()).is_ok());
    }

    #[test]
    fn test_axis_outside_sweep_rejected() {
        let mut spec = minimal("train");
        spec.axis = Some(SweepAxis::Elements);
        assert!(spec.resolve(&CliOverrides::default()).is_err());
    }

    #[test]
    fn test_cli_overrides_win() {
        let spec = minimal("train");
        let cli = CliOverrides {
            seeds: Some(vec![9, 10]),
            out_dir: Some(PathBuf::from("/tmp/somewhere")),
            profile: Some(Profile::Default),
        };
        let r = spec.resolve(&cli).unwrap();
        assert_eq!(r.seeds, vec![9, 10]);
        assert_eq!(r.out_dir, PathBuf::from("/tmp/somewhere"));
        assert_eq!(r.scenario.airfl_users, 14, "full profile selected");
        assert_eq!(r.hyper.episodes, 2200);
    }

    #[test]
    fn test_desk_is_the_fallback_profile() {
        let r = minimal("train").resolve(&CliOverrides::default()).unwrap();
        assert_eq!(r.profile, Profile::Desk);
        assert_eq!(r.scenario.airfl_users, 4);
        assert_eq!(r.hyper.hidden_size, 32);
    }

    #[test]
    fn test_ddpg_policy_drops_the_recurrent_stage() {
        let mut spec = minimal("train");
        spec.policy = Some(PolicyKind::Ddpg);
        let r = spec.resolve(&CliOverrides::default()).unwrap();
        assert!(!r.hyper.recurrent);
        assert_eq!(r.hyper.history, 1);
    }

    #[test]
    fn test_train_rejects_heuristic_policy() {
        let mut spec = minimal("train");
        spec.policy = Some(PolicyKind::Heuristic);
        assert!(spec.resolve(&CliOverrides::default()).is_err());
    }

    #[test]
    fn test_hyper_override_applies_fieldwise() {
        let mut spec = minimal("train");
        spec.hyper = Some(HyperOverride {
            hidden_size: Some(8),
            batch_size: Some(4),
            ..HyperOverride::default()
        });
        spec.episodes = Some(2);
        let r = spec.resolve(&CliOverrides::default()).unwrap();
        assert_eq!(r.hyper.hidden_size, 8);
        assert_eq!(r.hyper.batch_size, 4);
        assert_eq!(r.hyper.episodes, 2);
        assert_eq!(r.hyper.gamma, 0.8, "untouched fields keep profile values");
    }

    #[test]
    fn test_scenario_override_replaces_profile() {
        let mut spec = minimal("variant_compare");
        let mut scenario = ScenarioConfig::desk();
        scenario.airfl_users = 6;
        spec.scenario = Some(
            serde_json::from_str(&scenario.to_json().unwrap()).unwrap(),
        );
        let r = spec.resolve(&CliOverrides::default()).unwrap();
        assert_eq!(r.scenario.airfl_users, 6);
    }

    #[test]
    fn test_manifest_excludes_output_location() {
        let mut a = minimal("bound_check");
        a.out_dir = Some(PathBuf::from("/tmp/a"));
        let mut b = minimal("bound_check");
        b.out_dir = Some(PathBuf::from("/tmp/b"));
        let cli = CliOverrides::default();
        let ma = a.resolve(&cli).unwrap().manifest().unwrap();
        let mb = b.resolve(&cli).unwrap().manifest().unwrap();
        assert_eq!(ma, mb, "output location leaked into the manifest");
    }

    #[test]
    fn test_dump_channels_limited_to_aggregation_runs() {
        let mut spec = minimal("train");
        spec.dump_channels = Some(true);
        assert!(spec.resolve(&CliOverrides::default()).is_err());
        let mut spec = minimal("airfl_run");
        spec.dump_channels = Some(true);
        assert!(spec.resolve(&CliOverrides::default()).is_ok());
    }
}
