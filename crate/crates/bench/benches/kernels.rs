//! Benchmarks for the per-slot hot paths: channel realization, the
//! closed-form error, the channel-inversion policy, the recurrent network,
//! and one full agent update.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use airnoma_bench::table_fixture;
use airnoma_core::agent::{Agent, AgentHyper, History, ReplayBuffer, Transition};
use airnoma_core::channel::PhaseConfig;
use airnoma_core::fl::{aligned_estimates, inversion_heuristic};
use airnoma_core::nn::{Lstm, Tensor2};
use airnoma_core::phy::analytic_mse;
use airnoma_core::RngStream;

fn bench_channel_realize(c: &mut Criterion) {
    let (_, sampler, _) = table_fixture();
    let mut rng = RngStream::from_seed(12);
    let aods = sampler.sample_aods(&mut rng);
    c.bench_function("channel_realize_full_size", |b| {
        b.iter(|| sampler.realize(&mut rng, black_box(&aods)).expect("realize"))
    });
}

fn bench_analytic_mse(c: &mut Criterion) {
    let (scenario, _, real) = table_fixture();
    let phases = PhaseConfig::zeros(&scenario);
    let est = aligned_estimates(&real, &phases, &scenario);
    let vars: Vec<f64> = (0..scenario.total_users())
        .map(|i| real.composite_variance(i))
        .collect();
    let powers = vec![scenario.max_power_w * 0.5; scenario.total_users()];
    let min_gain = est
        .iter()
        .take(scenario.airfl_users)
        .map(|h| h.norm_sqr())
        .fold(f64::INFINITY, f64::min);
    let denoise = scenario.max_power_w * min_gain;
    c.bench_function("analytic_mse_full_size", |b| {
        b.iter(|| {
            analytic_mse(
                black_box(&est),
                &vars,
                &powers,
                scenario.airfl_users,
                denoise,
                scenario.sic_residual,
                scenario.noise_power_w,
                scenario.grad_dim,
            )
            .expect("closed form")
        })
    });
}

fn bench_inversion_heuristic(c: &mut Criterion) {
    let (scenario, _, real) = table_fixture();
    c.bench_function("inversion_heuristic_full_size", |b| {
        b.iter(|| inversion_heuristic(black_box(&real), &scenario).expect("heuristic"))
    });
}

fn bench_lstm_forward_backward(c: &mut Criterion) {
    let input_dim = 124;
    let hidden = 64;
    let frames = 8;
    let batch = 64;
    let mut rng = RngStream::from_seed(13);
    let lstm = Lstm::new(&mut rng, input_dim, hidden);
    let history: Vec<Tensor2> = (0..frames)
        .map(|_| Tensor2::uniform(&mut rng, batch, input_dim, 1.0))
        .collect();
    c.bench_function("lstm_forward_64x8", |b| {
        b.iter(|| lstm.forward(black_box(&history)))
    });
    let (out, cache) = lstm.forward(&history);
    let d_out = Tensor2::uniform(&mut rng, out.rows, out.cols, 1.0);
    c.bench_function("lstm_backward_64x8", |b| {
        b.iter(|| {
            let mut grad = lstm.grad_zeros();
            lstm.backward(black_box(&cache), &d_out, &mut grad)
        })
    });
}

fn bench_agent_update(c: &mut Criterion) {
    let state_dim = 124;
    let action_dim = 15;
    let mut hyper = AgentHyper::desk();
    hyper.batch_size = 64;
    let depth = hyper.history;
    let mut agent = Agent::new(state_dim, action_dim, hyper, 14).expect("agent builds");
    let mut rng = RngStream::from_seed(15);
    let mut buffer = ReplayBuffer::new(256);
    for _ in 0..128 {
        let state: Vec<f64> = (0..state_dim).map(|_| rng.range(-1.0, 1.0)).collect();
        let next: Vec<f64> = (0..state_dim).map(|_| rng.range(-1.0, 1.0)).collect();
        let action: Vec<f64> = (0..action_dim).map(|_| rng.range(-1.0, 1.0)).collect();
        buffer.push(Transition {
            history: History::start(depth, &state).snapshot(),
            action,
            reward: rng.range(-1.0, 0.0),
            next_history: History::start(depth, &next).snapshot(),
            done: false,
        });
    }
    let mut sample_rng = RngStream::from_seed(16);
    c.bench_function("agent_update_batch64", |b| {
        b.iter(|| {
            let batch: Vec<Transition> = buffer
                .sample(&mut sample_rng, 64)
                .expect("sample")
                .into_iter()
                .cloned()
                .collect();
            let critic_loss = agent.critic_update(black_box(&batch));
            let actor_objective = agent.actor_update(&batch);
            (critic_loss, actor_objective)
        })
    });
}

criterion_group!(
    benches,
    bench_channel_realize,
    bench_analytic_mse,
    bench_inversion_heuristic,
    bench_lstm_forward_backward,
    bench_agent_update
);
criterion_main!(benches);
