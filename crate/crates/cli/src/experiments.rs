//! The six experiment runners and their shared plumbing.
//!
//! Every runner takes a resolved experiment and an artifact set, fans seeds
//! out across worker threads (one environment and policy per worker, results
//! merged back in seed order), writes its CSV artifacts, and returns a
//! machine-readable summary with one named check per claim it verified.

use std::thread;

use serde::Serialize;

use airnoma_core::agent::{random_policy, run_random_baseline, Agent, History, TrainRow};
use airnoma_core::channel::{
    sample_user_positions, ChannelRealization, ChannelSampler, PhaseConfig,
};
use airnoma_core::convergence::{contraction, omega_trace};
use airnoma_core::env::{apply_variant, decode_action, EnvConfig, Environment, Variant};
use airnoma_core::fl::{
    aligned_estimates, estimate_constants, inversion_heuristic, run_airfl, AggregationPolicy,
    AirFLRun, QuadraticTask,
};
use airnoma_core::phy::{analytic_mse, monte_carlo_mse};
use airnoma_core::scenario::{dbm_to_watts, watts_to_dbm};
use airnoma_core::stats::{mean_var, std_error};
use airnoma_core::{BoundConstants, Error, Result, RngStream, ScenarioConfig};

use crate::output::{fmt_float, ArtifactSet, Table};
use crate::spec::{ExperimentKind, PolicyKind, Resolved, SweepAxis};

/// Seed the oracle sweep derives its random configurations from; fixed so
/// configuration `c` means the same radio setup in every run.
pub const ORACLE_SCENARIO_SEED: u64 = 0x0A11_D0C5;

/// Exact-equality tolerance for the deterministic recursion check.
pub const EXACT_TOL: f64 = 1e-10;

/// One verified claim in a run summary.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

/// Machine-readable run verdict: the overall flag is the conjunction of the
/// per-check flags.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub kind: &'static str,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl Summary {
    fn new(kind: ExperimentKind, checks: Vec<Check>) -> Self {
        Summary {
            kind: kind.name(),
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }
}

/// Runs `job` once per seed on its own thread and returns the results in
/// seed order regardless of completion order.
fn per_seed<T, F>(seeds: &[u64], job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    thread::scope(|scope| {
        let job = &job;
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| scope.spawn(move || job(seed)))
            .collect();
        let mut out = Vec::with_capacity(handles.len());
        for handle in handles {
            match handle.join() {
                Ok(result) => out.push(result?),
                Err(_) => return Err(Error::invalid("experiment worker panicked")),
            }
        }
        Ok(out)
    })
}

/// Draws the learning task from the experiment's task seed (shared across
/// run seeds so every seed trains on the same objective) and estimates the
/// bound constants along a clean descent run.
fn build_task(
    scenario: &ScenarioConfig,
    r: &Resolved,
) -> Result<(QuadraticTask, Vec<f64>, BoundConstants)> {
    let mut rng = RngStream::from_seed(r.task_seed);
    let task = QuadraticTask::sample(
        &mut rng,
        scenario.airfl_users,
        scenario.grad_dim,
        r.heterogeneity,
    )?;
    let w0 = vec![0.5; task.dim()];
    let constants = estimate_constants(&task, &w0, 50)?;
    Ok((task, w0, constants))
}

pub fn dispatch(r: &Resolved, artifacts: &mut ArtifactSet) -> Result<Summary> {
    match r.kind {
        ExperimentKind::MseOracle => run_mse_oracle(r, artifacts),
        ExperimentKind::BoundCheck => run_bound_check(r, artifacts),
        ExperimentKind::Train => run_train(r, artifacts),
        ExperimentKind::Sweep => run_sweep(r, artifacts),
        ExperimentKind::VariantCompare => run_variant_compare(r, artifacts),
        ExperimentKind::AirflRun => run_airfl_run(r, artifacts),
    }
}

// ---------------------------------------------------------------------------
// Closed-form error against its simulation estimate.

struct OracleRow {
    analytic: f64,
    estimate: f64,
    std_error: f64,
    z_abs: f64,
}

/// Deterministic random radio setup for oracle configuration `index`:
/// user counts, surface count and sizes, and impairment levels all vary.
pub fn oracle_scenario(index: u64) -> Result<ScenarioConfig> {
    let mut rng = RngStream::from_seed(ORACLE_SCENARIO_SEED).child(index);
    let mut cfg = ScenarioConfig::table_defaults();
    cfg.airfl_users = 2 + rng.below(13);
    cfg.noma_users = 1 + rng.below(4);
    let surfaces = rng.below(4);
    cfg.ris_positions.truncate(surfaces);
    cfg.ris_elements = (0..surfaces).map(|_| 4 + rng.below(17)).collect();
    cfg.sic_residual = rng.range(0.0, 0.2);
    cfg.csi_error = rng.range(0.0, 0.1);
    cfg.validate()?;
    Ok(cfg)
}

fn oracle_eval(r: &Resolved, config_index: usize, seed: u64) -> Result<OracleRow> {
    let mut scenario = oracle_scenario(config_index as u64)?;
    let mut rng = RngStream::from_seed(seed).child(config_index as u64);
    scenario.user_positions = sample_user_positions(&mut rng, &scenario);
    let sampler = ChannelSampler::new(scenario.clone())?;
    let aods = sampler.sample_aods(&mut rng);
    let real = sampler.realize(&mut rng, &aods)?;
    let mut phases = PhaseConfig::zeros(&scenario);
    for row in phases.theta.iter_mut() {
        for theta in row.iter_mut() {
            *theta = rng.range(0.0, std::f64::consts::TAU);
        }
    }
    let est = aligned_estimates(&real, &phases, &scenario);
    let vars: Vec<f64> = (0..scenario.total_users())
        .map(|i| real.composite_variance(i))
        .collect();
    let powers: Vec<f64> = (0..scenario.total_users())
        .map(|_| scenario.max_power_w * rng.range(0.1, 1.0))
        .collect();
    let min_gain = est
        .iter()
        .take(scenario.airfl_users)
        .map(|h| h.norm_sqr())
        .fold(f64::INFINITY, f64::min);
    let denoise = scenario.max_power_w * min_gain * rng.range(0.5, 2.0);
    let analytic = analytic_mse(
        &est,
        &vars,
        &powers,
        scenario.airfl_users,
        denoise,
        scenario.sic_residual,
        scenario.noise_power_w,
        1,
    )?;
    let (estimate, se) = monte_carlo_mse(
        &mut rng,
        &est,
        &vars,
        &powers,
        scenario.airfl_users,
        denoise,
        scenario.sic_residual,
        scenario.noise_power_w,
        r.samples,
    )?;
    let z_abs = if se > 0.0 {
        (estimate - analytic.total).abs() / se
    } else if estimate == analytic.total {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(OracleRow {
        analytic: analytic.total,
        estimate,
        std_error: se,
        z_abs,
    })
}

fn run_mse_oracle(r: &Resolved, artifacts: &mut ArtifactSet) -> Result<Summary> {
    let per: Vec<Vec<OracleRow>> = per_seed(&r.seeds, |seed| {
        (0..r.oracle_configs)
            .map(|c| oracle_eval(r, c, seed))
            .collect()
    })?;
    let mut table = Table::new(vec![
        "config",
        "seed",
        "analytic",
        "estimate",
        "std_error",
        "z_abs",
        "pass",
    ]);
    let mut worst: f64 = 0.0;
    let mut failures = 0usize;
    for c in 0..r.oracle_configs {
        for (rows, &seed) in per.iter().zip(&r.seeds) {
            let row = &rows[c];
            let pass = row.z_abs <= r.tolerance_se;
            if !pass {
                failures += 1;
            }
            worst = worst.max(row.z_abs);
            table.push(vec![
                c.to_string(),
                seed.to_string(),
                fmt_float(row.analytic),
                fmt_float(row.estimate),
                fmt_float(row.std_error),
                fmt_float(row.z_abs),
                pass.to_string(),
            ]);
        }
    }
    artifacts.write_text("oracle.csv", &table.to_csv())?;
    let total = r.oracle_configs * r.seeds.len();
    let checks = vec![Check::new(
        "mse_within_tolerance",
        failures == 0,
        format!(
            "{total} comparisons at {} draws, max |z| = {:.3}, tolerance {} standard errors, {failures} outside",
            r.samples, worst, r.tolerance_se
        ),
    )];
    Ok(Summary::new(r.kind, checks))
}

// ---------------------------------------------------------------------------
// Gradient-aggregation runs and the gap envelope.

/// One aggregation training run on the seed's own channel draw. The user
/// placement comes from the seed's first child stream and everything else
/// from the second, mirroring the control environment's layout.
fn airfl_for_seed(
    r: &Resolved,
    task: &QuadraticTask,
    constants: &BoundConstants,
    w0: &[f64],
    seed: u64,
    dump: Option<&mut Table>,
) -> Result<AirFLRun> {
    let mut master = RngStream::from_seed(seed);
    let mut placement = master.child(0);
    let mut rng = master.child(1);
    if r.perfect {
        return run_airfl(
            &mut rng,
            task,
            None,
            AggregationPolicy::Perfect,
            constants,
            r.rounds,
            w0,
        );
    }
    let mut scenario = apply_variant(&r.scenario, r.variant)?;
    scenario.user_positions = sample_user_positions(&mut placement, &scenario);
    let sampler = ChannelSampler::new(scenario)?;
    match dump {
        None => run_airfl(
            &mut rng,
            task,
            Some(&sampler),
            AggregationPolicy::Heuristic,
            constants,
            r.rounds,
            w0,
        ),
        Some(rows) => {
            let mut round = 0usize;
            let mut policy = |real: &ChannelRealization, cfg: &ScenarioConfig| {
                dump_channel_rows(rows, round, real);
                round += 1;
                inversion_heuristic(real, cfg)
            };
            run_airfl(
                &mut rng,
                task,
                Some(&sampler),
                AggregationPolicy::Custom(&mut policy),
                constants,
                r.rounds,
                w0,
            )
        }
    }
}

fn dump_channel_rows(table: &mut Table, slot: usize, real: &ChannelRealization) {
    for (i, h) in real.direct.iter().enumerate() {
        table.push(vec![
            slot.to_string(),
            format!("direct_u{i}"),
            fmt_float(h.re),
            fmt_float(h.im),
        ]);
    }
    for (x, v) in real.ris_bs.iter().enumerate() {
        for (m, h) in v.iter().enumerate() {
            table.push(vec![
                slot.to_string(),
                format!("surface{x}_bs_m{m}"),
                fmt_float(h.re),
                fmt_float(h.im),
            ]);
        }
    }
    for (i, per_surface) in real.user_ris.iter().enumerate() {
        for (x, v) in per_surface.iter().enumerate() {
            for (m, h) in v.iter().enumerate() {
                table.push(vec![
                    slot.to_string(),
                    format!("user{i}_surface{x}_m{m}"),
                    fmt_float(h.re),
                    fmt_float(h.im),
                ]);
            }
        }
    }
}

fn channel_dump_header() -> Vec<&'static str> {
    vec!["slot", "link_id", "re", "im"]
}

/// Per-round means across seeds plus the envelope on the mean penalties,
/// written as the run's two gap-trace CSVs.
fn write_gap_traces(
    r: &Resolved,
    artifacts: &mut ArtifactSet,
    runs: &[AirFLRun],
    constants: &BoundConstants,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut by_seed = Table::new(vec![
        "seed",
        "t",
        "gap",
        "omega_t",
        "psi_t",
        "bias_bound",
        "var_bound",
        "mse_total",
    ]);
    for (run, &seed) in runs.iter().zip(&r.seeds) {
        for rec in &run.records {
            by_seed.push(vec![
                seed.to_string(),
                (rec.round + 1).to_string(),
                fmt_float(rec.gap),
                fmt_float(rec.omega),
                fmt_float(rec.psi),
                fmt_float(rec.bias_bound),
                fmt_float(rec.var_bound),
                fmt_float(rec.mse_total),
            ]);
        }
    }
    artifacts.write_text("gap_trace_by_seed.csv", &by_seed.to_csv())?;

    let rounds = r.rounds;
    let collect = |f: &dyn Fn(&airnoma_core::fl::RoundRecord) -> f64| -> Vec<f64> {
        (0..rounds)
            .map(|t| runs.iter().map(|run| f(&run.records[t])).sum::<f64>() / runs.len() as f64)
            .collect()
    };
    let mean_gap = collect(&|rec| rec.gap);
    let mean_psi = collect(&|rec| rec.psi);
    let mean_bias = collect(&|rec| rec.bias_bound);
    let mean_var = collect(&|rec| rec.var_bound);
    let mean_mse = collect(&|rec| rec.mse_total);
    let omega = omega_trace(runs[0].initial_gap, &mean_psi, constants)?;

    let mut mean_table = Table::new(vec![
        "t",
        "gap",
        "omega_t",
        "psi_t",
        "bias_bound",
        "var_bound",
        "mse_total",
    ]);
    for t in 0..rounds {
        mean_table.push(vec![
            (t + 1).to_string(),
            fmt_float(mean_gap[t]),
            fmt_float(omega[t]),
            fmt_float(mean_psi[t]),
            fmt_float(mean_bias[t]),
            fmt_float(mean_var[t]),
            fmt_float(mean_mse[t]),
        ]);
    }
    artifacts.write_text("gap_trace.csv", &mean_table.to_csv())?;
    Ok((mean_gap, omega, mean_psi))
}

/// Seed standard error of the gap at round `t`; zero for single-seed runs.
fn gap_se(runs: &[AirFLRun], t: usize) -> Result<f64> {
    let xs: Vec<f64> = runs.iter().map(|run| run.records[t].gap).collect();
    std_error(&xs)
}

fn run_bound_check(r: &Resolved, artifacts: &mut ArtifactSet) -> Result<Summary> {
    let (task, w0, constants) = build_task(&r.scenario, r)?;
    let runs: Vec<AirFLRun> =
        per_seed(&r.seeds, |seed| airfl_for_seed(r, &task, &constants, &w0, seed, None))?;
    let (mean_gap, omega, _) = write_gap_traces(r, artifacts, &runs, &constants)?;

    let mut dominated = true;
    let mut worst_margin = f64::NEG_INFINITY;
    for t in 0..r.rounds {
        let slack = r.tolerance_se * gap_se(&runs, t)?;
        let margin = mean_gap[t] - (omega[t] + slack);
        worst_margin = worst_margin.max(margin);
        if margin > 0.0 {
            dominated = false;
        }
    }
    let mut checks = vec![Check::new(
        "gap_dominated",
        dominated,
        format!(
            "mean gap vs envelope over {} rounds, worst margin {:.3e} (negative means inside)",
            r.rounds, worst_margin
        ),
    )];

    let rho = contraction(&constants)?;
    if r.perfect {
        // With exact aggregation the only remaining penalty term is the
        // constant data-heterogeneity one, so the recursion must hold
        // deterministically round by round.
        let mut exact = true;
        let mut worst = f64::NEG_INFINITY;
        for run in &runs {
            let mut prev = run.initial_gap;
            for rec in &run.records {
                let d = rec.gap - rho * prev - rec.psi;
                worst = worst.max(d);
                if d > EXACT_TOL {
                    exact = false;
                }
                prev = rec.gap;
            }
        }
        checks.push(Check::new(
            "recursion_holds",
            exact,
            format!(
                "noise-free recursion, worst excess {worst:.3e} against tolerance {EXACT_TOL:.0e}"
            ),
        ));
    } else {
        let mut holds = true;
        let mut worst_z = f64::NEG_INFINITY;
        for t in 0..r.rounds {
            let diffs: Vec<f64> = runs
                .iter()
                .map(|run| {
                    let prev = if t == 0 {
                        run.initial_gap
                    } else {
                        run.records[t - 1].gap
                    };
                    let rec = &run.records[t];
                    rec.gap - rho * prev - rec.psi
                })
                .collect();
            let (mean, _) = mean_var(&diffs)?;
            let slack = r.tolerance_se * std_error(&diffs)?;
            worst_z = worst_z.max(mean - slack);
            if mean > slack {
                holds = false;
            }
        }
        checks.push(Check::new(
            "recursion_holds",
            holds,
            format!(
                "per-round inequality across {} seeds, worst slack excess {:.3e}",
                r.seeds.len(),
                worst_z
            ),
        ));
    }
    Ok(Summary::new(r.kind, checks))
}

fn run_airfl_run(r: &Resolved, artifacts: &mut ArtifactSet) -> Result<Summary> {
    let (task, w0, constants) = build_task(&r.scenario, r)?;
    let results: Vec<(AirFLRun, Option<Table>)> = per_seed(&r.seeds, |seed| {
        let mut dump = r
            .dump_channels
            .then(|| Table::new(channel_dump_header()));
        let run = airfl_for_seed(r, &task, &constants, &w0, seed, dump.as_mut())?;
        Ok((run, dump))
    })?;
    let runs: Vec<AirFLRun> = results.iter().map(|(run, _)| run.clone()).collect();
    for ((_, dump), &seed) in results.iter().zip(&r.seeds) {
        if let Some(table) = dump {
            artifacts.write_text(&format!("channels_seed{seed}.csv"), &table.to_csv())?;
        }
    }
    write_gap_traces(r, artifacts, &runs, &constants)?;

    let mut identity = true;
    for run in &runs {
        for rec in &run.records {
            for j in 0..rec.err.len() {
                let expect = rec.agg[j] - rec.grad[j];
                if rec.err[j].to_bits() != expect.to_bits() {
                    identity = false;
                }
            }
        }
    }
    let final_gaps: Vec<f64> = runs.iter().map(|run| run.records[r.rounds - 1].gap).collect();
    let (mean_final, _) = mean_var(&final_gaps)?;
    let all_finite = final_gaps.iter().all(|g| g.is_finite());
    let checks = vec![
        Check::new(
            "error_identity",
            identity,
            "recorded aggregation error equals aggregate minus exact mean, bit for bit".to_string(),
        ),
        Check::new(
            "run_completed",
            runs.iter().all(|run| run.records.len() == r.rounds) && all_finite,
            format!(
                "{} seeds x {} rounds, mean final gap {:.6e}",
                r.seeds.len(),
                r.rounds,
                mean_final
            ),
        ),
    ];
    Ok(Summary::new(r.kind, checks))
}

// ---------------------------------------------------------------------------
// Policy training.

struct TrainOutcome {
    rows: Vec<TrainRow>,
    checkpoint: Option<airnoma_core::nn::Checkpoint>,
    trajectory: Option<Vec<String>>,
}

fn greedy_trajectory(agent: &mut Agent, env: &mut Environment, seed: u64) -> Result<Vec<String>> {
    let mut state = env.reset()?;
    let mut history = History::start(agent.hyper().history, &state.features);
    let mut lines = Vec::new();
    loop {
        let slot = env.slot();
        let raw = agent.act(history.frames(), 0.0);
        let out = env.step(&raw)?;
        lines.push(serde_json::to_string(&serde_json::json!({
            "seed": seed,
            "slot": slot,
            "state_hash": state.feature_hash(),
            "action": raw,
            "reward": out.reward,
            "info": out.info,
        }))?);
        if out.done {
            break;
        }
        state = out.next_state;
        history.push(&state.features);
    }
    Ok(lines)
}

fn run_train(r: &Resolved, artifacts: &mut ArtifactSet) -> Result<Summary> {
    let (_, _, constants) = build_task(&r.scenario, r)?;
    let results: Vec<TrainOutcome> = per_seed(&r.seeds, |seed| {
        let mut streams = RngStream::from_seed(seed);
        let env_seed = streams.next_u64();
        let policy_seed = streams.next_u64();
        let mut cfg = EnvConfig::new(r.scenario.clone(), constants.clone(), r.variant);
        cfg.slots_per_episode = r.slots;
        let mut env = Environment::new(cfg, env_seed)?;
        if r.policy == PolicyKind::Random {
            let rows = run_random_baseline(&mut env, r.hyper.episodes, policy_seed)?;
            return Ok(TrainOutcome {
                rows,
                checkpoint: None,
                trajectory: None,
            });
        }
        let state_dim = env.scenario().state_dim();
        let action_dim = env.scenario().action_dim();
        let mut agent = Agent::new(state_dim, action_dim, r.hyper.clone(), policy_seed)?;
        let rows = agent.train(&mut env)?;
        let trajectory = if r.log_trajectory {
            Some(greedy_trajectory(&mut agent, &mut env, seed)?)
        } else {
            None
        };
        Ok(TrainOutcome {
            rows,
            checkpoint: Some(agent.to_checkpoint()),
            trajectory,
        })
    })?;

    let mut table = Table::new(vec![
        "seed",
        "episode",
        "reward",
        "avg_reward",
        "critic_loss",
        "actor_objective",
        "mse_violations",
        "rate_violations",
        "noise_sigma",
    ]);
    let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    for (outcome, &seed) in results.iter().zip(&r.seeds) {
        for row in &outcome.rows {
            table.push(vec![
                seed.to_string(),
                row.episode.to_string(),
                fmt_float(row.reward),
                fmt_float(row.avg_reward),
                opt(row.critic_loss),
                opt(row.actor_objective),
                row.mse_violations.to_string(),
                row.rate_violations.to_string(),
                fmt_float(row.noise_sigma),
            ]);
        }
    }
    artifacts.write_text("training_log.csv", &table.to_csv())?;
    for (outcome, &seed) in results.iter().zip(&r.seeds) {
        if let Some(ckpt) = &outcome.checkpoint {
            let text = serde_json::to_string(ckpt)
                .map_err(|e| Error::config(format!("serializing checkpoint: {e}")))?;
            artifacts.write_text(&format!("checkpoint_seed{seed}.json"), &format!("{text}\n"))?;
        }
        if let Some(lines) = &outcome.trajectory {
            let mut body = lines.join("\n");
            body.push('\n');
            artifacts.write_text(&format!("trajectory_seed{seed}.jsonl"), &body)?;
        }
    }

    let complete = results
        .iter()
        .all(|o| o.rows.len() == r.hyper.episodes);
    let finite = results
        .iter()
        .flat_map(|o| o.rows.iter())
        .all(|row| row.reward.is_finite() && row.avg_reward.is_finite());
    let last_avg: Vec<f64> = results
        .iter()
        .filter_map(|o| o.rows.last().map(|row| row.avg_reward))
        .collect();
    let (mean_last, _) = mean_var(&last_avg)?;
    let checks = vec![
        Check::new(
            "training_completed",
            complete,
            format!(
                "{} seeds x {} episodes with policy {}",
                r.seeds.len(),
                r.hyper.episodes,
                r.policy.name()
            ),
        ),
        Check::new(
            "rewards_finite",
            finite,
            format!("final windowed reward averaged over seeds: {mean_last:.6e}"),
        ),
    ];
    Ok(Summary::new(r.kind, checks))
}

// ---------------------------------------------------------------------------
// Scripted rollouts: sweeps and the deployment comparison.

#[derive(Debug, Clone, Copy)]
struct RolloutStats {
    mean_reward: f64,
    mean_psi: f64,
    mean_mse: f64,
}

/// Sink for per-step rollout records, labelled with where they came from.
struct RolloutLog {
    label: String,
    seed: u64,
    lines: Vec<String>,
}

/// Steps `slots` decisions under a scripted policy, resetting and carrying
/// on whenever an episode terminates early, and averages the per-step
/// reward, raw penalty, and aggregation error.
fn rollout(
    env: &mut Environment,
    policy: PolicyKind,
    slots: usize,
    rng: &mut RngStream,
    mut log: Option<&mut RolloutLog>,
) -> Result<RolloutStats> {
    let mut state = env.reset()?;
    let mut reward_sum = 0.0;
    let mut psi_sum = 0.0;
    let mut mse_sum = 0.0;
    for _ in 0..slots {
        if env.is_done() {
            state = env.reset()?;
        }
        let (alloc, phases) = match policy {
            PolicyKind::Heuristic => {
                let real = env
                    .realization()
                    .ok_or_else(|| Error::invalid("rollout: no realization"))?;
                inversion_heuristic(real, env.scenario())?
            }
            PolicyKind::Random => {
                let raw = random_policy(rng, env.scenario().action_dim());
                decode_action(&raw, env.scenario())
            }
            _ => return Err(Error::invalid("rollout: policy must be scripted")),
        };
        let action_json = log.as_ref().map(|_| {
            serde_json::json!({
                "power": alloc.power,
                "denoise": alloc.denoise,
                "theta": phases.theta,
            })
        });
        let slot = env.slot();
        let out = env.step_decoded(alloc, phases)?;
        reward_sum += out.reward;
        psi_sum += out.info.psi_raw;
        mse_sum += out.info.mse.total;
        if let Some(sink) = log.as_deref_mut() {
            sink.lines.push(serde_json::to_string(&serde_json::json!({
                "variant": sink.label,
                "seed": sink.seed,
                "slot": slot,
                "state_hash": state.feature_hash(),
                "action": action_json,
                "reward": out.reward,
                "info": out.info,
            }))?);
        }
        state = out.next_state;
    }
    let n = slots as f64;
    Ok(RolloutStats {
        mean_reward: reward_sum / n,
        mean_psi: psi_sum / n,
        mean_mse: mse_sum / n,
    })
}

fn variant_label(v: Variant) -> &'static str {
    match v {
        Variant::NoRis => "no_ris",
        Variant::SingleRis => "single_ris",
        Variant::MultiRis => "multi_ris",
        Variant::RandomPhase => "random_phase",
    }
}

/// One swept point: either a numeric scenario value or a deployment.
enum AxisPoint {
    Number(f64),
    Deployment(Variant),
}

fn sweep_points(r: &Resolved, axis: SweepAxis) -> Vec<AxisPoint> {
    if axis == SweepAxis::Variant {
        [
            Variant::NoRis,
            Variant::SingleRis,
            Variant::MultiRis,
            Variant::RandomPhase,
        ]
        .into_iter()
        .map(AxisPoint::Deployment)
        .collect()
    } else {
        r.values.iter().copied().map(AxisPoint::Number).collect()
    }
}

fn integer_value(axis: SweepAxis, v: f64) -> Result<usize> {
    let rounded = v.round();
    if (v - rounded).abs() > 1e-9 || rounded < 1.0 {
        return Err(Error::config(format!(
            "sweep: {} takes positive integers, got {v}",
            axis.name()
        )));
    }
    Ok(rounded as usize)
}

fn scenario_for_value(base: &ScenarioConfig, axis: SweepAxis, v: f64) -> Result<ScenarioConfig> {
    let mut s = base.clone();
    match axis {
        SweepAxis::AirflUsers => s.airfl_users = integer_value(axis, v)?,
        SweepAxis::MaxPowerDbm => s.max_power_w = dbm_to_watts(v),
        SweepAxis::CsiError => s.csi_error = v,
        SweepAxis::SicResidual => s.sic_residual = v,
        SweepAxis::Elements => {
            let m = integer_value(axis, v)?;
            s.ris_elements = vec![m; s.ris_elements.len()];
        }
        SweepAxis::Variant => unreachable!("variant points carry no number"),
    }
    s.validate()?;
    Ok(s)
}

/// Whether a swept value matches the base scenario, for the audit column
/// that marks which row reflects the untouched profile.
fn is_profile_value(base: &ScenarioConfig, axis: SweepAxis, v: f64) -> bool {
    let current = match axis {
        SweepAxis::AirflUsers => base.airfl_users as f64,
        SweepAxis::MaxPowerDbm => watts_to_dbm(base.max_power_w),
        SweepAxis::CsiError => base.csi_error,
        SweepAxis::SicResidual => base.sic_residual,
        SweepAxis::Elements => base.ris_elements.first().copied().unwrap_or(0) as f64,
        SweepAxis::Variant => return false,
    };
    (v - current).abs() <= 1e-9 * current.abs().max(1.0)
}

fn push_stat_rows(
    table: &mut Table,
    axis_name: &str,
    value_label: &str,
    seeds: &[u64],
    stats: &[RolloutStats],
    is_default: bool,
) -> Result<()> {
    let default = is_default.to_string();
    for (st, &seed) in stats.iter().zip(seeds) {
        table.push(vec![
            axis_name.to_string(),
            value_label.to_string(),
            "seed".to_string(),
            seed.to_string(),
            fmt_float(st.mean_reward),
            fmt_float(st.mean_psi),
            fmt_float(st.mean_mse),
            default.clone(),
        ]);
    }
    let rewards: Vec<f64> = stats.iter().map(|s| s.mean_reward).collect();
    let psis: Vec<f64> = stats.iter().map(|s| s.mean_psi).collect();
    let mses: Vec<f64> = stats.iter().map(|s| s.mean_mse).collect();
    for (stat, pick) in [("mean", 0usize), ("std", 1usize)] {
        let grab = |xs: &[f64]| -> Result<f64> {
            let (m, var) = mean_var(xs)?;
            Ok(if pick == 0 { m } else { var.sqrt() })
        };
        table.push(vec![
            axis_name.to_string(),
            value_label.to_string(),
            stat.to_string(),
            String::new(),
            fmt_float(grab(&rewards)?),
            fmt_float(grab(&psis)?),
            fmt_float(grab(&mses)?),
            default.clone(),
        ]);
    }
    Ok(())
}

fn run_sweep(r: &Resolved, artifacts: &mut ArtifactSet) -> Result<Summary> {
    let axis = r.axis.expect("resolve requires an axis for sweeps");
    let points = sweep_points(r, axis);
    let mut table = Table::new(vec![
        "axis",
        "value",
        "stat",
        "seed",
        "mean_reward",
        "mean_psi",
        "mean_mse",
        "default",
    ]);
    let mut details = Vec::new();
    for point in &points {
        let (scenario, variant, label, is_default) = match point {
            AxisPoint::Number(v) => (
                scenario_for_value(&r.scenario, axis, *v)?,
                r.variant,
                fmt_float(*v),
                is_profile_value(&r.scenario, axis, *v),
            ),
            AxisPoint::Deployment(var) => (
                r.scenario.clone(),
                *var,
                variant_label(*var).to_string(),
                *var == r.variant,
            ),
        };
        let (_, _, constants) = build_task(&scenario, r)?;
        let stats: Vec<RolloutStats> = per_seed(&r.seeds, |seed| {
            let mut cfg = EnvConfig::new(scenario.clone(), constants.clone(), variant);
            cfg.slots_per_episode = r.slots;
            let mut env = Environment::new(cfg, seed)?;
            let mut policy_rng = RngStream::from_seed(seed).child(2);
            rollout(&mut env, r.policy, r.slots, &mut policy_rng, None)
        })?;
        push_stat_rows(&mut table, axis.name(), &label, &r.seeds, &stats, is_default)?;
        let psis: Vec<f64> = stats.iter().map(|s| s.mean_psi).collect();
        let (mean_psi, _) = mean_var(&psis)?;
        details.push(format!("{label}: mean penalty {mean_psi:.6e}"));
    }
    artifacts.write_text("sweep.csv", &table.to_csv())?;
    let expected = points.len() * (r.seeds.len() + 2);
    let checks = vec![Check::new(
        "sweep_completed",
        table.len() == expected,
        format!("axis {} over {}", axis.name(), details.join("; ")),
    )];
    Ok(Summary::new(r.kind, checks))
}

/// Paired one-sided comparison: passes when `better` is no worse than
/// `worse` up to the tolerance band on the paired differences.
fn ordering_check(name: &str, worse: &[f64], better: &[f64], tol: f64) -> Result<Check> {
    let diffs: Vec<f64> = worse.iter().zip(better).map(|(w, b)| w - b).collect();
    let (mean, _) = mean_var(&diffs)?;
    let slack = tol * std_error(&diffs)?;
    Ok(Check::new(
        name,
        mean >= -slack,
        format!("paired mean improvement {mean:.6e}, allowed slack {slack:.6e}"),
    ))
}

fn run_variant_compare(r: &Resolved, artifacts: &mut ArtifactSet) -> Result<Summary> {
    let variants = [Variant::NoRis, Variant::SingleRis, Variant::MultiRis];
    let (_, _, constants) = build_task(&r.scenario, r)?;
    let mut table = Table::new(vec![
        "variant",
        "stat",
        "seed",
        "mean_reward",
        "mean_psi",
        "mean_mse",
    ]);
    let mut per_variant: Vec<Vec<RolloutStats>> = Vec::new();
    let mut trajectory_lines: Vec<String> = Vec::new();
    for &variant in &variants {
        let results: Vec<(RolloutStats, Vec<String>)> = per_seed(&r.seeds, |seed| {
            let mut cfg = EnvConfig::new(r.scenario.clone(), constants.clone(), variant);
            cfg.slots_per_episode = r.slots;
            let mut env = Environment::new(cfg, seed)?;
            let mut policy_rng = RngStream::from_seed(seed).child(2);
            let mut log = r.log_trajectory.then(|| RolloutLog {
                label: variant_label(variant).to_string(),
                seed,
                lines: Vec::new(),
            });
            let stats = rollout(&mut env, r.policy, r.slots, &mut policy_rng, log.as_mut())?;
            Ok((stats, log.map(|l| l.lines).unwrap_or_default()))
        })?;
        let stats: Vec<RolloutStats> = results.iter().map(|(s, _)| *s).collect();
        for (_, lines) in &results {
            trajectory_lines.extend(lines.iter().cloned());
        }
        let label = variant_label(variant);
        for (st, &seed) in stats.iter().zip(&r.seeds) {
            table.push(vec![
                label.to_string(),
                "seed".to_string(),
                seed.to_string(),
                fmt_float(st.mean_reward),
                fmt_float(st.mean_psi),
                fmt_float(st.mean_mse),
            ]);
        }
        let rewards: Vec<f64> = stats.iter().map(|s| s.mean_reward).collect();
        let psis: Vec<f64> = stats.iter().map(|s| s.mean_psi).collect();
        let mses: Vec<f64> = stats.iter().map(|s| s.mean_mse).collect();
        for (stat, pick) in [("mean", 0usize), ("std", 1usize)] {
            let grab = |xs: &[f64]| -> Result<f64> {
                let (m, var) = mean_var(xs)?;
                Ok(if pick == 0 { m } else { var.sqrt() })
            };
            table.push(vec![
                label.to_string(),
                stat.to_string(),
                String::new(),
                fmt_float(grab(&rewards)?),
                fmt_float(grab(&psis)?),
                fmt_float(grab(&mses)?),
            ]);
        }
        per_variant.push(stats);
    }
    artifacts.write_text("variant_compare.csv", &table.to_csv())?;
    if r.log_trajectory {
        let mut body = trajectory_lines.join("\n");
        body.push('\n');
        artifacts.write_text("trajectory.jsonl", &body)?;
    }

    let psi_of = |idx: usize| -> Vec<f64> { per_variant[idx].iter().map(|s| s.mean_psi).collect() };
    let none = psi_of(0);
    let single = psi_of(1);
    let multi = psi_of(2);
    let checks = vec![
        ordering_check("single_not_worse_than_none", &none, &single, r.tolerance_se)?,
        ordering_check("multi_not_worse_than_single", &single, &multi, r.tolerance_se)?,
    ];
    Ok(Summary::new(r.kind, checks))
}
