//! Replay buffer, exploration, and the DDPG / LSTM-DDPG training loop over
//! the slot-level environment, with soft target updates and a random-action
//! baseline.
//!
//! Conventions:
//! - Networks update once per episode after the slot loop; a per-slot update
//!   mode exists but is off by default.
//! - The actor and critic share one trunk layout: an optional LSTM front end
//!   over the J-frame state history, then dense layers. The critic
//!   concatenates the raw action to the extracted features before its dense
//!   stack. The recurrent variant replaces the first hidden layer with the
//!   LSTM; the dense variant reads only the latest frame.
//! - State histories are zero-padded at episode start and shared between
//!   consecutive transitions, so the buffer stores each frame window once.
//! - The learning-curve metric for an episode is its mean slot reward;
//!   summed rewards would favour episodes that terminate early, because
//!   every slot reward is non-positive.

use std::sync::Arc;

use crate::env::{avg_reward, Environment};
use crate::error::{Error, Result};
use crate::nn::{
    soft_update, Activation, AdamState, Checkpoint, Dense, DenseCache, DenseGrad, Lstm,
    LstmCache, LstmGrad, ParamNet, Tensor2,
};
use crate::rng::RngStream;

/// Training hyperparameters for both network variants.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AgentHyper {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Exploration noise scale at episode 0.
    pub noise_start: f64,
    /// Exploration noise scale after the decay window.
    pub noise_end: f64,
    /// Fraction of the episode budget over which the noise decays linearly.
    pub noise_decay_fraction: f64,
    /// Frames of state history fed to the networks (J).
    pub history: usize,
    /// Neurons per hidden layer and LSTM units.
    pub hidden_size: usize,
    /// Hidden layers counting the LSTM when present.
    pub hidden_layers: usize,
    pub buffer_capacity: usize,
    pub episodes: usize,
    /// LSTM front end when true; dense-only otherwise.
    pub recurrent: bool,
    /// Update after every slot instead of once per episode.
    pub per_slot_updates: bool,
}

impl AgentHyper {
    /// Full-scale configuration.
    pub fn table() -> Self {
        AgentHyper {
            gamma: 0.8,
            tau: 0.001,
            batch_size: 64,
            lr_actor: 5e-4,
            lr_critic: 1e-4,
            noise_start: 0.2,
            noise_end: 0.01,
            noise_decay_fraction: 0.8,
            history: 8,
            hidden_size: 512,
            hidden_layers: 2,
            buffer_capacity: 600_000,
            episodes: 2200,
            recurrent: true,
            per_slot_updates: false,
        }
    }

    /// Scaled-down configuration that trains in minutes on one core.
    pub fn desk() -> Self {
        AgentHyper {
            hidden_size: 32,
            episodes: 300,
            ..Self::table()
        }
    }

    /// Same schedule without the LSTM: dense layers over the latest frame.
    pub fn dense_variant(mut self) -> Self {
        self.recurrent = false;
        self.history = 1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::config(format!("agent hyper: {msg}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail("tau outside [0, 1]");
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1");
        }
        if self.buffer_capacity < self.batch_size {
            return fail("buffer smaller than one batch");
        }
        if !(self.lr_actor > 0.0) || !(self.lr_critic > 0.0) {
            return fail("learning rates must be positive");
        }
        if !(self.noise_start >= 0.0) || !(self.noise_end >= 0.0) {
            return fail("noise scales must be non-negative");
        }
        if !(self.noise_decay_fraction > 0.0) || self.noise_decay_fraction > 1.0 {
            return fail("noise decay fraction outside (0, 1]");
        }
        if self.history == 0 {
            return fail("history depth must be at least 1");
        }
        if self.hidden_size == 0 || self.hidden_layers == 0 {
            return fail("network needs at least one hidden layer and unit");
        }
        if self.episodes == 0 {
            return fail("episode budget must be positive");
        }
        Ok(())
    }

    /// Exploration noise scale for an episode: linear from `noise_start` to
    /// `noise_end` over the first `noise_decay_fraction` of the budget, then
    /// flat.
    pub fn noise_sigma(&self, episode: usize) -> f64 {
        let horizon = (self.episodes as f64 * self.noise_decay_fraction).max(1.0);
        let frac = episode as f64 / horizon;
        if frac >= 1.0 {
            return self.noise_end;
        }
        self.noise_start + (self.noise_end - self.noise_start) * frac
    }
}

/// One stored interaction. Histories are the J frames ending at the acted-on
/// state and at its successor; consecutive transitions share them.
#[derive(Debug, Clone)]
pub struct Transition {
    pub history: Arc<Vec<Vec<f64>>>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_history: Arc<Vec<Vec<f64>>>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions with strict oldest-first eviction.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    write: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs positive capacity");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            write: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.write] = t;
            self.write = (self.write + 1) % self.capacity;
        }
    }

    /// Uniform sample of `count` distinct stored transitions.
    pub fn sample(&self, rng: &mut RngStream, count: usize) -> Result<Vec<&Transition>> {
        let n = self.items.len();
        if count == 0 {
            return Err(Error::invalid("replay sample: empty batch requested"));
        }
        if count > n {
            return Err(Error::invalid(format!(
                "replay sample: requested {count} of {n} stored transitions"
            )));
        }
        // Floyd's algorithm: each index enters with probability count/n
        // without building a full permutation.
        let mut picked: Vec<usize> = Vec::with_capacity(count);
        for j in (n - count)..n {
            let t = rng.below(j + 1);
            if picked.contains(&t) {
                picked.push(j);
            } else {
                picked.push(t);
            }
        }
        Ok(picked.iter().map(|&i| &self.items[i]).collect())
    }
}

/// Actor/critic trunk: optional LSTM over the frame history, dense head.
/// `aux_dim > 0` marks a critic, whose action enters after the features.
#[derive(Debug, Clone)]
pub struct Network {
    lstm: Option<Lstm>,
    stack: Vec<Dense>,
    feat_dim: usize,
    aux_dim: usize,
}

/// Forward-pass record for [`Network::backward`].
#[derive(Debug)]
pub struct NetworkEval {
    pub output: Tensor2,
    lstm: Option<LstmCache>,
    dense: Vec<DenseCache>,
}

/// Gradient accumulator mirroring [`Network`].
#[derive(Debug)]
pub struct NetworkGrad {
    lstm: Option<LstmGrad>,
    stack: Vec<DenseGrad>,
}

impl NetworkGrad {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(l) = &self.lstm {
            out.extend(l.slices());
        }
        for d in &self.stack {
            out.extend(d.slices());
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        if let Some(l) = &mut self.lstm {
            l.scale(s);
        }
        for d in &mut self.stack {
            d.scale(s);
        }
    }
}

fn concat_cols(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    assert_eq!(a.rows, b.rows, "concat: row mismatch");
    let mut out = Tensor2::zeros(a.rows, a.cols + b.cols);
    for r in 0..a.rows {
        let row = out.row_mut(r);
        row[..a.cols].copy_from_slice(a.row(r));
        row[a.cols..].copy_from_slice(b.row(r));
    }
    out
}

fn split_cols(t: &Tensor2, at: usize) -> (Tensor2, Tensor2) {
    assert!(at <= t.cols, "split: point beyond width");
    let mut left = Tensor2::zeros(t.rows, at);
    let mut right = Tensor2::zeros(t.rows, t.cols - at);
    for r in 0..t.rows {
        left.row_mut(r).copy_from_slice(&t.row(r)[..at]);
        right.row_mut(r).copy_from_slice(&t.row(r)[at..]);
    }
    (left, right)
}

impl Network {
    /// History in, action out through a tanh layer.
    pub fn actor(
        rng: &mut RngStream,
        state_dim: usize,
        action_dim: usize,
        hyper: &AgentHyper,
    ) -> Self {
        Self::build(rng, state_dim, 0, action_dim, Activation::Tanh, hyper)
    }

    /// History and action in, scalar value out through a linear layer.
    pub fn critic(
        rng: &mut RngStream,
        state_dim: usize,
        action_dim: usize,
        hyper: &AgentHyper,
    ) -> Self {
        Self::build(rng, state_dim, action_dim, 1, Activation::Identity, hyper)
    }

    fn build(
        rng: &mut RngStream,
        state_dim: usize,
        aux_dim: usize,
        out_dim: usize,
        out_act: Activation,
        hyper: &AgentHyper,
    ) -> Self {
        assert!(state_dim > 0 && out_dim > 0, "network dims must be positive");
        let (lstm, feat_dim) = if hyper.recurrent {
            (
                Some(Lstm::new(rng, state_dim, hyper.hidden_size)),
                hyper.hidden_size,
            )
        } else {
            (None, state_dim)
        };
        let dense_hidden = if lstm.is_some() {
            hyper.hidden_layers - 1
        } else {
            hyper.hidden_layers
        };
        let mut stack = Vec::with_capacity(dense_hidden + 1);
        let mut dim = feat_dim + aux_dim;
        for _ in 0..dense_hidden {
            stack.push(Dense::new(rng, dim, hyper.hidden_size, Activation::Relu));
            dim = hyper.hidden_size;
        }
        stack.push(Dense::new(rng, dim, out_dim, out_act));
        Network {
            lstm,
            stack,
            feat_dim,
            aux_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.stack.last().expect("nonempty stack").output_dim()
    }

    pub fn grad_zeros(&self) -> NetworkGrad {
        NetworkGrad {
            lstm: self.lstm.as_ref().map(Lstm::grad_zeros),
            stack: self.stack.iter().map(Dense::grad_zeros).collect(),
        }
    }

    /// Runs the trunk. `history` holds J frames oldest first; `aux` is the
    /// action batch for critics and must be absent for actors.
    pub fn forward(&self, history: &[Tensor2], aux: Option<&Tensor2>) -> NetworkEval {
        assert_eq!(
            aux.is_some(),
            self.aux_dim > 0,
            "network forward: action input presence mismatch"
        );
        let (features, lstm_cache) = match &self.lstm {
            Some(l) => {
                let (h, cache) = l.forward(history);
                (h, Some(cache))
            }
            None => (
                history.last().expect("nonempty history").clone(),
                None,
            ),
        };
        let mut x = match aux {
            Some(a) => {
                assert_eq!(a.cols, self.aux_dim, "network forward: action dim mismatch");
                concat_cols(&features, a)
            }
            None => features,
        };
        let mut caches = Vec::with_capacity(self.stack.len());
        for layer in &self.stack {
            let (y, cache) = layer.forward(&x);
            caches.push(cache);
            x = y;
        }
        NetworkEval {
            output: x,
            lstm: lstm_cache,
            dense: caches,
        }
    }

    /// Backpropagates `d_out`, accumulating parameter gradients into `grad`.
    /// Returns the gradient with respect to the action input for critics.
    pub fn backward(
        &self,
        eval: &NetworkEval,
        d_out: &Tensor2,
        grad: &mut NetworkGrad,
    ) -> Option<Tensor2> {
        let mut d = d_out.clone();
        for i in (0..self.stack.len()).rev() {
            d = self.stack[i].backward(&eval.dense[i], &d, &mut grad.stack[i]);
        }
        let (d_feat, d_aux) = if self.aux_dim > 0 {
            let (f, a) = split_cols(&d, self.feat_dim);
            (f, Some(a))
        } else {
            (d, None)
        };
        if let (Some(l), Some(cache), Some(g)) = (&self.lstm, &eval.lstm, grad.lstm.as_mut()) {
            l.backward(cache, &d_feat, g);
        }
        d_aux
    }

    /// Entry names and shapes aligned with [`ParamNet::params`] order.
    fn param_entries(&self, prefix: &str) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        if let Some(l) = &self.lstm {
            let w_shape = vec![l.hidden_dim(), l.input_dim() + l.hidden_dim()];
            let b_shape = vec![l.hidden_dim()];
            for name in ["w_forget", "w_input", "w_output", "w_cell"] {
                out.push((format!("{prefix}.lstm.{name}"), w_shape.clone()));
            }
            for name in ["b_forget", "b_input", "b_output", "b_cell"] {
                out.push((format!("{prefix}.lstm.{name}"), b_shape.clone()));
            }
        }
        for (i, d) in self.stack.iter().enumerate() {
            out.push((
                format!("{prefix}.dense{i}.weights"),
                vec![d.output_dim(), d.input_dim()],
            ));
            out.push((format!("{prefix}.dense{i}.bias"), vec![d.output_dim()]));
        }
        out
    }

    fn save_into(&self, ckpt: &mut Checkpoint, prefix: &str) {
        let entries = self.param_entries(prefix);
        for ((name, shape), data) in entries.into_iter().zip(self.params()) {
            ckpt.push(&name, shape, data.to_vec());
        }
    }

    fn load_from(&mut self, ckpt: &Checkpoint, prefix: &str) -> Result<()> {
        let entries = self.param_entries(prefix);
        let mut fresh: Vec<Vec<f64>> = Vec::with_capacity(entries.len());
        for (name, shape) in &entries {
            fresh.push(ckpt.take(name, shape)?.to_vec());
        }
        for (slot, data) in self.params_mut().into_iter().zip(fresh.iter()) {
            slot.copy_from_slice(data);
        }
        Ok(())
    }
}

impl ParamNet for Network {
    fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(l) = &self.lstm {
            out.extend(l.params());
        }
        for d in &self.stack {
            out.extend(d.params());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(l) = &mut self.lstm {
            out.extend(l.params_mut());
        }
        for d in &mut self.stack {
            out.extend(d.params_mut());
        }
        out
    }
}

/// Rolling J-frame window of flattened states, zero-padded after reset.
#[derive(Debug, Clone)]
pub struct History {
    frames: Vec<Vec<f64>>,
}

impl History {
    pub fn start(depth: usize, state: &[f64]) -> Self {
        assert!(depth >= 1, "history depth must be at least 1");
        let mut frames = vec![vec![0.0; state.len()]; depth - 1];
        frames.push(state.to_vec());
        History { frames }
    }

    pub fn push(&mut self, state: &[f64]) {
        assert_eq!(
            state.len(),
            self.frames[0].len(),
            "history push: state dim changed"
        );
        self.frames.remove(0);
        self.frames.push(state.to_vec());
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn snapshot(&self) -> Arc<Vec<Vec<f64>>> {
        Arc::new(self.frames.clone())
    }
}

/// Per-update diagnostics, both measured before their parameter step.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

/// One training-log row; `reward` is the episode's mean slot reward.
#[derive(Debug, Clone)]
pub struct TrainRow {
    pub episode: usize,
    pub reward: f64,
    pub total_reward: f64,
    pub slots: usize,
    pub avg_reward: f64,
    pub critic_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    pub mse_violations: usize,
    pub rate_violations: usize,
    pub noise_sigma: f64,
}

/// DDPG agent: online and target networks, Adam states, replay buffer, and
/// its own exploration stream.
pub struct Agent {
    hyper: AgentHyper,
    state_dim: usize,
    action_dim: usize,
    actor: Network,
    critic: Network,
    target_actor: Network,
    target_critic: Network,
    adam_actor: AdamState,
    adam_critic: AdamState,
    buffer: ReplayBuffer,
    stream: RngStream,
}

impl Agent {
    pub fn new(state_dim: usize, action_dim: usize, hyper: AgentHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::config("agent: state and action dims must be positive"));
        }
        let mut master = RngStream::from_seed(seed);
        let mut actor_rng = master.child(0);
        let mut critic_rng = master.child(1);
        let stream = master.child(2);
        let actor = Network::actor(&mut actor_rng, state_dim, action_dim, &hyper);
        let critic = Network::critic(&mut critic_rng, state_dim, action_dim, &hyper);
        let target_actor = actor.clone();
        let target_critic = critic.clone();
        let adam_actor = AdamState::new(&actor, hyper.lr_actor);
        let adam_critic = AdamState::new(&critic, hyper.lr_critic);
        let buffer = ReplayBuffer::new(hyper.buffer_capacity);
        Ok(Agent {
            hyper,
            state_dim,
            action_dim,
            actor,
            critic,
            target_actor,
            target_critic,
            adam_actor,
            adam_critic,
            buffer,
            stream,
        })
    }

    pub fn hyper(&self) -> &AgentHyper {
        &self.hyper
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    fn frames_single(&self, history: &[Vec<f64>]) -> Vec<Tensor2> {
        assert_eq!(
            history.len(),
            self.hyper.history,
            "act: history depth mismatch"
        );
        history
            .iter()
            .map(|f| {
                assert_eq!(f.len(), self.state_dim, "act: state dim mismatch");
                Tensor2::from_rows(vec![f.clone()])
            })
            .collect()
    }

    fn batch_frames(&self, batch: &[Transition], next: bool) -> Vec<Tensor2> {
        (0..self.hyper.history)
            .map(|j| {
                Tensor2::from_rows(
                    batch
                        .iter()
                        .map(|t| {
                            let h = if next { &t.next_history } else { &t.history };
                            assert_eq!(h.len(), self.hyper.history, "stored history depth");
                            h[j].clone()
                        })
                        .collect(),
                )
            })
            .collect()
    }

    /// Policy action for one history window, plus exploration noise of scale
    /// `sigma`, clamped back into the unit box.
    pub fn act(&mut self, history: &[Vec<f64>], sigma: f64) -> Vec<f64> {
        let frames = self.frames_single(history);
        let eval = self.actor.forward(&frames, None);
        let mut action = eval.output.row(0).to_vec();
        if sigma > 0.0 {
            for a in action.iter_mut() {
                *a = (*a + self.stream.normal(0.0, sigma)).clamp(-1.0, 1.0);
            }
        }
        action
    }

    /// Bootstrapped regression targets: `r + gamma * Q'(s', pi'(s'))`, or the
    /// bare reward on terminal transitions.
    pub fn td_targets(&self, batch: &[Transition]) -> Vec<f64> {
        let next = self.batch_frames(batch, true);
        let next_actions = self.target_actor.forward(&next, None);
        let q_next = self.target_critic.forward(&next, Some(&next_actions.output));
        batch
            .iter()
            .enumerate()
            .map(|(b, t)| {
                if t.done {
                    t.reward
                } else {
                    t.reward + self.hyper.gamma * q_next.output.row(b)[0]
                }
            })
            .collect()
    }

    /// One Adam step on the critic's mean squared TD error; returns the loss
    /// before the step.
    pub fn critic_update(&mut self, batch: &[Transition]) -> f64 {
        let targets = self.td_targets(batch);
        let frames = self.batch_frames(batch, false);
        let actions = Tensor2::from_rows(batch.iter().map(|t| t.action.clone()).collect());
        let eval = self.critic.forward(&frames, Some(&actions));
        let h = batch.len() as f64;
        let mut loss = 0.0;
        let mut d_q = Tensor2::zeros(batch.len(), 1);
        for b in 0..batch.len() {
            let err = eval.output.row(b)[0] - targets[b];
            loss += err * err / h;
            d_q.row_mut(b)[0] = 2.0 * err / h;
        }
        let mut grad = self.critic.grad_zeros();
        self.critic.backward(&eval, &d_q, &mut grad);
        self.adam_critic.step(&mut self.critic, &grad.slices());
        loss
    }

    /// One Adam ascent step on the mean critic value of the actor's own
    /// actions; returns the objective before the step. Critic parameters are
    /// read but not modified.
    pub fn actor_update(&mut self, batch: &[Transition]) -> f64 {
        let frames = self.batch_frames(batch, false);
        let actor_eval = self.actor.forward(&frames, None);
        let critic_eval = self.critic.forward(&frames, Some(&actor_eval.output));
        let h = batch.len() as f64;
        let objective = critic_eval.output.data.iter().sum::<f64>() / h;
        let mut d_q = Tensor2::zeros(batch.len(), 1);
        for b in 0..batch.len() {
            d_q.row_mut(b)[0] = 1.0 / h;
        }
        let mut scratch = self.critic.grad_zeros();
        let d_action = self
            .critic
            .backward(&critic_eval, &d_q, &mut scratch)
            .expect("critic returns an action gradient");
        let mut grad = self.actor.grad_zeros();
        self.actor.backward(&actor_eval, &d_action, &mut grad);
        // Adam minimizes; flip the ascent direction.
        grad.scale(-1.0);
        self.adam_actor.step(&mut self.actor, &grad.slices());
        objective
    }

    /// Samples a batch and runs critic step, actor step, and soft target
    /// updates, in that order. Returns `None` while the buffer holds fewer
    /// transitions than one batch.
    pub fn update(&mut self) -> Option<UpdateStats> {
        if self.buffer.len() < self.hyper.batch_size {
            return None;
        }
        let batch: Vec<Transition> = self
            .buffer
            .sample(&mut self.stream, self.hyper.batch_size)
            .expect("size checked above")
            .into_iter()
            .cloned()
            .collect();
        let critic_loss = self.critic_update(&batch);
        let actor_objective = self.actor_update(&batch);
        soft_update(&mut self.target_actor, &self.actor, self.hyper.tau);
        soft_update(&mut self.target_critic, &self.critic, self.hyper.tau);
        Some(UpdateStats {
            critic_loss,
            actor_objective,
        })
    }

    /// Runs the full training schedule on `env`: act with decaying noise,
    /// store transitions, update per episode (or per slot when configured),
    /// and log one row per episode.
    pub fn train(&mut self, env: &mut Environment) -> Result<Vec<TrainRow>> {
        if env.scenario().state_dim() != self.state_dim
            || env.scenario().action_dim() != self.action_dim
        {
            return Err(Error::dimension("train: environment shape mismatch"));
        }
        let episodes = self.hyper.episodes;
        let mut log = Vec::with_capacity(episodes);
        let mut episode_rewards = Vec::with_capacity(episodes);
        for episode in 0..episodes {
            let sigma = self.hyper.noise_sigma(episode);
            let first = env.reset()?;
            let mut history = History::start(self.hyper.history, &first.features);
            let mut total = 0.0;
            let mut slots = 0usize;
            let mut mse_violations = 0usize;
            let mut rate_violations = 0usize;
            let mut stats = None;
            loop {
                let window = history.snapshot();
                let action = self.act(&window, sigma);
                let out = env.step(&action)?;
                history.push(&out.next_state.features);
                self.buffer.push(Transition {
                    history: window,
                    action,
                    reward: out.reward,
                    next_history: history.snapshot(),
                    done: out.done,
                });
                total += out.reward;
                slots += 1;
                mse_violations += usize::from(out.info.chi_mse);
                rate_violations += usize::from(out.info.chi_rate);
                if self.hyper.per_slot_updates {
                    stats = self.update().or(stats);
                }
                if out.done {
                    break;
                }
            }
            if !self.hyper.per_slot_updates {
                stats = self.update();
            }
            let reward = total / slots as f64;
            episode_rewards.push(reward);
            log.push(TrainRow {
                episode,
                reward,
                total_reward: total,
                slots,
                avg_reward: avg_reward(&episode_rewards, episode)?,
                critic_loss: stats.map(|s| s.critic_loss),
                actor_objective: stats.map(|s| s.actor_objective),
                mse_violations,
                rate_violations,
                noise_sigma: sigma,
            });
        }
        Ok(log)
    }

    /// All four networks as one checkpoint. Optimizer state is not saved;
    /// a loaded agent resumes with fresh Adam moments.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        self.actor.save_into(&mut ckpt, "actor");
        self.critic.save_into(&mut ckpt, "critic");
        self.target_actor.save_into(&mut ckpt, "target_actor");
        self.target_critic.save_into(&mut ckpt, "target_critic");
        ckpt
    }

    /// Restores all four networks from `ckpt`; shapes must match this
    /// agent's architecture exactly.
    pub fn load_weights(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.actor.load_from(ckpt, "actor")?;
        self.critic.load_from(ckpt, "critic")?;
        self.target_actor.load_from(ckpt, "target_actor")?;
        self.target_critic.load_from(ckpt, "target_critic")?;
        Ok(())
    }
}

/// Uniform action on the unit box.
pub fn random_policy(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.range(-1.0, 1.0)).collect()
}

/// Rolls out uniformly random actions and logs the same per-episode rows as
/// training, with no learning diagnostics.
pub fn run_random_baseline(
    env: &mut Environment,
    episodes: usize,
    seed: u64,
) -> Result<Vec<TrainRow>> {
    let mut rng = RngStream::from_seed(seed);
    let dim = env.scenario().action_dim();
    let mut log = Vec::with_capacity(episodes);
    let mut episode_rewards = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        env.reset()?;
        let mut total = 0.0;
        let mut slots = 0usize;
        let mut mse_violations = 0usize;
        let mut rate_violations = 0usize;
        loop {
            let out = env.step(&random_policy(&mut rng, dim))?;
            total += out.reward;
            slots += 1;
            mse_violations += usize::from(out.info.chi_mse);
            rate_violations += usize::from(out.info.chi_rate);
            if out.done {
                break;
            }
        }
        let reward = total / slots as f64;
        episode_rewards.push(reward);
        log.push(TrainRow {
            episode,
            reward,
            total_reward: total,
            slots,
            avg_reward: avg_reward(&episode_rewards, episode)?,
            critic_loss: None,
            actor_objective: None,
            mse_violations,
            rate_violations,
            noise_sigma: 0.0,
        });
    }
    Ok(log)
}
