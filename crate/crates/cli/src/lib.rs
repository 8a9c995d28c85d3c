//! Experiment harness around the simulation library: JSON experiment
//! descriptions in, a run directory out.
//!
//! Every run writes a `manifest.json` (the complete resolved configuration
//! plus the code version and seed list), its CSV metrics, and a
//! `summary.json` with named PASS/FAIL checks. Artifacts are deterministic
//! functions of the manifest; runs that fail partway remove whatever they
//! had written so partial outputs never masquerade as results.

// Validation code rejects NaN by negating comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiments;
pub mod output;
pub mod spec;

use std::path::{Path, PathBuf};

use airnoma_core::{Error, Result};

use experiments::Summary;
use output::ArtifactSet;
use spec::{CliOverrides, ExperimentSpec, Resolved};

/// A finished run: where it wrote and what it concluded.
#[derive(Debug)]
pub struct RunOutcome {
    pub resolved: Resolved,
    pub summary: Summary,
    pub out_dir: PathBuf,
}

/// Loads a config file, applies command-line overrides, and runs it.
pub fn execute_file(config_path: &Path, overrides: &CliOverrides) -> Result<RunOutcome> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::config(format!("{}: {e}", config_path.display())))?;
    let spec: ExperimentSpec = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", config_path.display())))?;
    run_resolved(spec.resolve(overrides)?)
}

/// Runs a resolved experiment, rolling its artifacts back on failure.
pub fn run_resolved(resolved: Resolved) -> Result<RunOutcome> {
    let mut artifacts = ArtifactSet::new(&resolved.out_dir)?;
    match attempt(&resolved, &mut artifacts) {
        Ok(summary) => Ok(RunOutcome {
            out_dir: artifacts.dir().to_path_buf(),
            resolved,
            summary,
        }),
        Err(e) => {
            artifacts.discard_all();
            Err(e)
        }
    }
}

fn attempt(r: &Resolved, artifacts: &mut ArtifactSet) -> Result<Summary> {
    artifacts.write_json("manifest.json", &r.manifest()?)?;
    let summary = experiments::dispatch(r, artifacts)?;
    artifacts.write_json("summary.json", &summary)?;
    Ok(summary)
}
