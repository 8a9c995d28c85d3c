//! End-to-end runs of every experiment kind on scaled-down configurations:
//! artifact layout, determinism across reruns, config rejection, and the
//! rollback of partial outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use airnoma_cli::spec::{CliOverrides, ExperimentSpec, Profile};
use airnoma_cli::{execute_file, RunOutcome};
use airnoma_core::nn::load_checkpoint;
use airnoma_core::ScenarioConfig;

fn write_config(dir: &Path, body: &serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(body).expect("encode config"))
        .expect("write config");
    path
}

fn run(dir: &Path, body: serde_json::Value) -> RunOutcome {
    let config = write_config(dir, &body);
    execute_file(&config, &CliOverrides::default()).expect("experiment runs")
}

fn read(outcome: &RunOutcome, name: &str) -> String {
    fs::read_to_string(outcome.out_dir.join(name))
        .unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// Training overrides small enough for test runs.
fn tiny_hyper() -> serde_json::Value {
    serde_json::json!({
        "batch_size": 4,
        "buffer_capacity": 64,
        "hidden_size": 6,
        "history": 2
    })
}

#[test]
fn test_mse_oracle_run_produces_passing_artifacts() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let outcome = run(
        tmp.path(),
        serde_json::json!({
            "kind": "mse_oracle",
            "seeds": [1, 2],
            "oracle_configs": 2,
            "samples": 4000,
            "tolerance_se": 6.0,
            "out_dir": tmp.path().join("out"),
        }),
    );
    assert!(outcome.summary.pass, "oracle comparison failed");
    let csv = read(&outcome, "oracle.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("config,seed,analytic,estimate,std_error,z_abs,pass"),
        "unexpected oracle header"
    );
    assert_eq!(lines.count(), 4, "one row per config and seed");
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&outcome, "manifest.json")).expect("manifest parses");
    assert_eq!(manifest["kind"], "mse_oracle");
    assert_eq!(manifest["samples"], 4000);
    let summary: serde_json::Value =
        serde_json::from_str(&read(&outcome, "summary.json")).expect("summary parses");
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["checks"][0]["name"], "mse_within_tolerance");
}

#[test]
fn test_bound_check_traces_have_the_fixed_columns() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let outcome = run(
        tmp.path(),
        serde_json::json!({
            "kind": "bound_check",
            "seeds": [1, 2, 3],
            "rounds": 30,
            "grad_dim": 4,
            "out_dir": tmp.path().join("out"),
        }),
    );
    assert!(outcome.summary.pass, "bound check failed: {:?}", outcome.summary);
    let csv = read(&outcome, "gap_trace.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,gap,omega_t,psi_t,bias_bound,var_bound,mse_total"),
        "gap trace header drifted"
    );
    assert_eq!(lines.count(), 30, "one row per round");
    let by_seed = read(&outcome, "gap_trace_by_seed.csv");
    assert!(
        by_seed.starts_with("seed,t,gap,omega_t,psi_t,bias_bound,var_bound,mse_total\n"),
        "per-seed trace header drifted"
    );
    assert_eq!(by_seed.lines().count(), 1 + 3 * 30);
}

#[test]
fn test_bound_check_perfect_mode_is_exact() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let outcome = run(
        tmp.path(),
        serde_json::json!({
            "kind": "bound_check",
            "seeds": [1],
            "rounds": 25,
            "grad_dim": 3,
            "perfect": true,
            "out_dir": tmp.path().join("out"),
        }),
    );
    assert!(outcome.summary.pass, "noise-free run failed: {:?}", outcome.summary);
    let csv = read(&outcome, "gap_trace.csv");
    let psis: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|line| line.split(',').nth(3).expect("psi column").parse().expect("psi"))
        .collect();
    assert!(psis[0] > 0.0, "heterogeneity keeps the penalty positive");
    assert!(
        psis.iter().all(|&p| p == psis[0]),
        "noise-free penalty must be the same constant every round"
    );
}

#[test]
fn test_train_writes_logs_checkpoints_and_trajectories() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let outcome = run(
        tmp.path(),
        serde_json::json!({
            "kind": "train",
            "seeds": [1, 2],
            "episodes": 2,
            "slots": 5,
            "hyper": tiny_hyper(),
            "log_trajectory": true,
            "out_dir": tmp.path().join("out"),
        }),
    );
    assert!(outcome.summary.pass);
    let log = read(&outcome, "training_log.csv");
    let mut lines = log.lines();
    assert_eq!(
        lines.next(),
        Some(
            "seed,episode,reward,avg_reward,critic_loss,actor_objective,\
             mse_violations,rate_violations,noise_sigma"
        ),
        "training log header drifted"
    );
    assert_eq!(lines.count(), 4, "two seeds, two episodes each");
    for seed in [1, 2] {
        let ckpt = load_checkpoint(&outcome.out_dir.join(format!("checkpoint_seed{seed}.json")))
            .expect("checkpoint loads");
        assert!(
            ckpt.entries.iter().any(|e| e.name.starts_with("actor.")),
            "checkpoint missing actor weights"
        );
        let first = read(&outcome, &format!("trajectory_seed{seed}.jsonl"))
            .lines()
            .next()
            .expect("trajectory has steps")
            .to_string();
        let record: serde_json::Value = serde_json::from_str(&first).expect("record parses");
        for key in ["seed", "slot", "state_hash", "action", "reward", "info"] {
            assert!(record.get(key).is_some(), "trajectory record missing {key}");
        }
    }
}

#[test]
fn test_random_policy_training_logs_without_checkpoints() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let outcome = run(
        tmp.path(),
        serde_json::json!({
            "kind": "train",
            "seeds": [4],
            "policy": "random",
            "episodes": 3,
            "slots": 4,
            "out_dir": tmp.path().join("out"),
        }),
    );
    assert!(outcome.summary.pass);
    let log = read(&outcome, "training_log.csv");
    assert_eq!(log.lines().count(), 1 + 3);
    let row = log.lines().nth(1).expect("first data row");
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells[4], "", "random policy has no critic loss");
    assert_eq!(cells[5], "", "random policy has no actor objective");
    assert!(
        !outcome.out_dir.join("checkpoint_seed4.json").exists(),
        "random policy must not write weights"
    );
}

#[test]
fn test_sweep_rows_and_default_tagging() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let outcome = run(
        tmp.path(),
        serde_json::json!({
            "kind": "sweep",
            "seeds": [1, 2],
            "axis": "sic_residual",
            "values": [0.0, 0.04],
            "slots": 6,
            "out_dir": tmp.path().join("out"),
        }),
    );
    assert!(outcome.summary.pass);
    let csv = read(&outcome, "sweep.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("axis,value,stat,seed,mean_reward,mean_psi,mean_mse,default"),
        "sweep header drifted"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * (2 + 2), "per-seed plus mean and std per value");
    let defaults: Vec<bool> = rows
        .iter()
        .map(|row| row.ends_with(",true"))
        .collect();
    assert_eq!(
        defaults.iter().filter(|&&d| d).count(),
        4,
        "exactly the profile value's rows are tagged as default"
    );
    let tagged_value = rows
        .iter()
        .find(|row| row.ends_with(",true"))
        .expect("a tagged row")
        .split(',')
        .nth(1)
        .expect("value column")
        .parse::<f64>()
        .expect("numeric value");
    assert_eq!(tagged_value, 0.04, "profile leak level is the tagged row");
}

#[test]
fn test_sweep_rejects_unknown_axis_and_empty_values() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let bad_axis = write_config(
        tmp.path(),
        &serde_json::json!({
            "kind": "sweep",
            "seeds": [1],
            "axis": "carrier_frequency",
            "values": [1.0],
        }),
    );
    let err = execute_file(&bad_axis, &CliOverrides::default()).unwrap_err();
    assert!(
        err.to_string().contains("carrier_frequency") || err.to_string().contains("unknown"),
        "unhelpful axis diagnostic: {err}"
    );
    let empty = write_config(
        tmp.path(),
        &serde_json::json!({
            "kind": "sweep",
            "seeds": [1],
            "axis": "elements",
            "values": [],
        }),
    );
    assert!(execute_file(&empty, &CliOverrides::default()).is_err());
}

#[test]
fn test_variant_compare_orders_and_logs_trajectory() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let outcome = run(
        tmp.path(),
        serde_json::json!({
            "kind": "variant_compare",
            "seeds": [1, 2, 3],
            "slots": 6,
            "log_trajectory": true,
            "out_dir": tmp.path().join("out"),
        }),
    );
    assert!(outcome.summary.pass, "ordering checks failed: {:?}", outcome.summary);
    let csv = read(&outcome, "variant_compare.csv");
    assert!(
        csv.starts_with("variant,stat,seed,mean_reward,mean_psi,mean_mse\n"),
        "comparison header drifted"
    );
    assert_eq!(csv.lines().count(), 1 + 3 * (3 + 2));
    let names: Vec<&str> = outcome.summary.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(
        names,
        ["single_not_worse_than_none", "multi_not_worse_than_single"]
    );
    let first = read(&outcome, "trajectory.jsonl");
    let record: serde_json::Value =
        serde_json::from_str(first.lines().next().expect("steps logged")).expect("parses");
    assert_eq!(record["variant"], "no_ris");
    assert!(record["state_hash"].is_u64(), "hash serialized as integer");
    assert_eq!(
        first.lines().count(),
        3 * 3 * 6,
        "one record per variant, seed, and slot"
    );
}

#[test]
fn test_airfl_run_dumps_channels_and_checks_identity() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let outcome = run(
        tmp.path(),
        serde_json::json!({
            "kind": "airfl_run",
            "seeds": [1],
            "rounds": 5,
            "grad_dim": 3,
            "dump_channels": true,
            "out_dir": tmp.path().join("out"),
        }),
    );
    assert!(outcome.summary.pass, "aggregation run failed: {:?}", outcome.summary);
    let csv = read(&outcome, "channels_seed1.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("slot,link_id,re,im"), "dump header drifted");
    let desk = ScenarioConfig::desk();
    let users = desk.total_users();
    let elements: usize = desk.ris_elements.iter().sum();
    let per_slot = users + elements + users * elements;
    assert_eq!(lines.count(), 5 * per_slot, "one row per link per round");
    assert!(csv.contains("direct_u0,"), "direct links labelled");
    assert!(csv.contains("surface0_bs_m0,"), "surface feeder links labelled");
    assert!(csv.contains("user0_surface0_m0,"), "user-side links labelled");
}

#[test]
fn test_reruns_are_byte_identical_across_directories() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let body = |out: PathBuf| {
        serde_json::json!({
            "kind": "sweep",
            "seeds": [1, 2],
            "axis": "csi_error",
            "values": [0.0, 0.1],
            "slots": 5,
            "out_dir": out,
        })
    };
    let a = run(tmp.path(), body(tmp.path().join("a")));
    let b = run(tmp.path(), body(tmp.path().join("b")));
    for name in ["manifest.json", "sweep.csv", "summary.json"] {
        assert_eq!(
            read(&a, name),
            read(&b, name),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn test_training_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let body = |out: PathBuf| {
        serde_json::json!({
            "kind": "train",
            "seeds": [1, 2],
            "episodes": 2,
            "slots": 4,
            "hyper": tiny_hyper(),
            "out_dir": out,
        })
    };
    let a = run(tmp.path(), body(tmp.path().join("a")));
    let b = run(tmp.path(), body(tmp.path().join("b")));
    for name in ["training_log.csv", "checkpoint_seed1.json", "checkpoint_seed2.json"] {
        assert_eq!(
            read(&a, name),
            read(&b, name),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn test_failed_run_removes_partial_outputs() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = tmp.path().join("out");
    let config = write_config(
        tmp.path(),
        &serde_json::json!({
            "kind": "train",
            "seeds": [1],
            "episodes": 2,
            "slots": 4,
            "hyper": {"buffer_capacity": 2},
            "out_dir": out,
        }),
    );
    let err = execute_file(&config, &CliOverrides::default()).unwrap_err();
    assert!(
        err.to_string().contains("buffer"),
        "expected the replay-buffer diagnostic, got: {err}"
    );
    assert!(!out.exists(), "failed run left artifacts behind");
}

#[test]
fn test_unknown_config_key_rejected_before_any_writes() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = tmp.path().join("out");
    let config = write_config(
        tmp.path(),
        &serde_json::json!({
            "kind": "train",
            "seeds": [1],
            "episodess": 5,
            "out_dir": out,
        }),
    );
    assert!(execute_file(&config, &CliOverrides::default()).is_err());
    assert!(!out.exists(), "rejected config still created a run directory");
}

#[test]
fn test_cli_override_flags_reach_the_manifest() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        &serde_json::json!({
            "kind": "bound_check",
            "seeds": [1, 2],
            "rounds": 5,
            "grad_dim": 3,
        }),
    );
    let overrides = CliOverrides {
        seeds: Some(vec![9]),
        out_dir: Some(tmp.path().join("flagged")),
        profile: Some(Profile::Desk),
    };
    let outcome = execute_file(&config, &overrides).expect("run succeeds");
    assert_eq!(outcome.out_dir, tmp.path().join("flagged"));
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&outcome, "manifest.json")).expect("manifest parses");
    assert_eq!(manifest["seeds"], serde_json::json!([9]));
    assert_eq!(manifest["profile"], "desk");
}

#[test]
fn test_spec_type_round_trips_from_file() {
    let text = r#"{"kind": "sweep", "seeds": [1], "axis": "elements", "values": [4, 8]}"#;
    let spec: ExperimentSpec = serde_json::from_str(text).expect("parses");
    let resolved = spec.resolve(&CliOverrides::default()).expect("resolves");
    assert_eq!(resolved.values, vec![4.0, 8.0]);
}

#[test]
fn test_binary_reports_checks_and_exit_codes() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        &serde_json::json!({
            "kind": "mse_oracle",
            "seeds": [1],
            "oracle_configs": 1,
            "samples": 2000,
            "tolerance_se": 8.0,
        }),
    );
    let bin = env!("CARGO_BIN_EXE_airnoma");
    let ok = Command::new(bin)
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("ok"))
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(ok.status.code(), Some(0), "stdout: {stdout}");
    assert!(
        stdout.contains("PASS mse_within_tolerance"),
        "missing check line: {stdout}"
    );

    let failing = write_config(
        &tmp.path().join("."),
        &serde_json::json!({
            "kind": "mse_oracle",
            "seeds": [1],
            "oracle_configs": 2,
            "samples": 2000,
            "tolerance_se": 1e-6,
        }),
    );
    let fail = Command::new(bin)
        .args(["run"])
        .arg(&failing)
        .arg("--out")
        .arg(tmp.path().join("fail"))
        .output()
        .expect("binary runs");
    assert_eq!(fail.status.code(), Some(1), "failing checks exit with 1");
    assert!(String::from_utf8_lossy(&fail.stdout).contains("FAIL"));

    let missing = Command::new(bin)
        .args(["run", "no-such-config.json"])
        .output()
        .expect("binary runs");
    assert_eq!(missing.status.code(), Some(2), "config errors exit with 2");
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
}

#[test]
fn test_seed_list_flag_splits_on_commas() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        &serde_json::json!({
            "kind": "bound_check",
            "seeds": [1],
            "rounds": 4,
            "grad_dim": 3,
        }),
    );
    let bin = env!("CARGO_BIN_EXE_airnoma");
    let out = tmp.path().join("seeded");
    let status = Command::new(bin)
        .args(["run"])
        .arg(&config)
        .args(["--seed-list", "3,5"])
        .arg("--out")
        .arg(&out)
        .output()
        .expect("binary runs");
    assert_eq!(status.status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("manifest.json")).expect("manifest written"),
    )
    .expect("manifest parses");
    assert_eq!(manifest["seeds"], serde_json::json!([3, 5]));
}
