//! Federated training over the analog uplink: a synthetic quadratic task
//! with per-user objectives, over-the-air aggregation of raw gradients
//! through the channel model, global updates, estimation of the constants
//! the gap bounds need, and a channel-inversion baseline policy.
//!
//! Conventions of the aggregation round:
//!
//! - Aggregation users transmit their gradient entries unnormalized; the
//!   envelope constant on gradient norms is estimated from a reference run
//!   rather than enforced by scaling.
//! - Each aggregation user pre-rotates its transmission by the conjugate
//!   phase of its channel estimate, so its estimated coefficient is real
//!   non-negative and only the magnitude needs power control. The rotation
//!   is imperfect exactly to the extent the estimate is; the rotated
//!   estimation error keeps its circular Gaussian law, so every closed-form
//!   error expression applies verbatim with the aligned estimate.
//! - Gradients are real but ride a complex channel; the receiver scales the
//!   superposed sample by `1 / (K * sqrt(eta))` and keeps the real part.
//! - Each data user's interfering stream carries unit energy per
//!   aggregation block, so one block leaks `eps_b * p_n * |h_n|^2` of power
//!   in total regardless of the gradient dimension. This matches the
//!   leakage accounting of the closed-form error breakdown.

use crate::channel::{ChannelRealization, ChannelSampler, PhaseConfig};
use crate::convergence::{bias_bound, contraction, psi, variance_bound};
use crate::error::{Error, Result};
use crate::nn::Tensor2;
use crate::phy::{analytic_mse, PowerAllocation};
use crate::rng::RngStream;
use crate::scenario::{BoundConstants, ScenarioConfig};
use crate::Complex;

fn matvec(a: &Tensor2, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.cols, x.len(), "matvec: dimension mismatch");
    (0..a.rows)
        .map(|r| a.row(r).iter().zip(x.iter()).map(|(m, v)| m * v).sum())
        .collect()
}

fn matvec_transpose(a: &Tensor2, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.rows, x.len(), "matvec_transpose: dimension mismatch");
    let mut out = vec![0.0; a.cols];
    for r in 0..a.rows {
        for (o, m) in out.iter_mut().zip(a.row(r).iter()) {
            *o += m * x[r];
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the second return.
pub fn jacobi_eigen(mat: &Tensor2) -> Result<(Vec<f64>, Tensor2)> {
    let n = mat.rows;
    if mat.cols != n {
        return Err(Error::dimension("jacobi_eigen: matrix must be square"));
    }
    let frob: f64 = mat.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    for p in 0..n {
        for q in (p + 1)..n {
            if (mat.row(p)[q] - mat.row(q)[p]).abs() > 1e-9 * frob.max(1.0) {
                return Err(Error::invalid("jacobi_eigen: matrix is not symmetric"));
            }
        }
    }
    let mut a = mat.clone();
    let mut v = Tensor2::zeros(n, n);
    for i in 0..n {
        v.row_mut(i)[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.row(p)[q] * a.row(p)[q];
            }
        }
        if off.sqrt() <= 1e-14 * frob.max(1e-300) {
            break;
        }
        for p in 0..(n.saturating_sub(1)) {
            for q in (p + 1)..n {
                let apq = a.row(p)[q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a.row(q)[q] - a.row(p)[p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a.row(i)[p];
                    let aiq = a.row(i)[q];
                    a.row_mut(i)[p] = c * aip - s * aiq;
                    a.row_mut(i)[q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a.row(p)[i];
                    let aqi = a.row(q)[i];
                    a.row_mut(p)[i] = c * api - s * aqi;
                    a.row_mut(q)[i] = s * api + c * aqi;
                }
                for i in 0..n {
                    let vip = v.row(i)[p];
                    let viq = v.row(i)[q];
                    v.row_mut(i)[p] = c * vip - s * viq;
                    v.row_mut(i)[q] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.row(i)[i].partial_cmp(&a.row(j)[j]).unwrap());
    let eigs: Vec<f64> = order.iter().map(|&i| a.row(i)[i]).collect();
    let mut vecs = Tensor2::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for i in 0..n {
            vecs.row_mut(i)[col] = v.row(i)[src];
        }
    }
    Ok((eigs, vecs))
}

/// Least-squares learning task split across users: user `k` owns the
/// objective `0.5 * ||A_k w - b_k||^2` and the global objective is the
/// average. The Hessian, extreme curvatures, and exact optimum are computed
/// once at construction.
#[derive(Debug, Clone)]
pub struct QuadraticTask {
    mats: Vec<Tensor2>,
    targets: Vec<Vec<f64>>,
    dim: usize,
    hessian: Tensor2,
    eigenvalues: Vec<f64>,
    w_opt: Vec<f64>,
    f_opt: f64,
}

impl QuadraticTask {
    pub fn from_matrices(mats: Vec<Tensor2>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if mats.is_empty() || mats.len() != targets.len() {
            return Err(Error::dimension(
                "quadratic task: need one matrix and target per user",
            ));
        }
        let dim = mats[0].cols;
        for (a, b) in mats.iter().zip(targets.iter()) {
            if a.cols != dim || a.rows != b.len() || a.rows == 0 {
                return Err(Error::dimension("quadratic task: inconsistent shapes"));
            }
        }
        let users = mats.len() as f64;
        let mut hessian = Tensor2::zeros(dim, dim);
        let mut rhs = vec![0.0; dim];
        for (a, b) in mats.iter().zip(targets.iter()) {
            for i in 0..dim {
                for j in 0..dim {
                    let mut acc = 0.0;
                    for r in 0..a.rows {
                        acc += a.row(r)[i] * a.row(r)[j];
                    }
                    hessian.row_mut(i)[j] += acc / users;
                }
            }
            for (o, v) in rhs.iter_mut().zip(matvec_transpose(a, b).iter()) {
                *o += v / users;
            }
        }
        let (eigenvalues, vectors) = jacobi_eigen(&hessian)?;
        let l = *eigenvalues.last().unwrap();
        if !(eigenvalues[0] > 1e-12 * l.max(1.0)) {
            return Err(Error::invalid(
                "quadratic task: averaged Hessian is singular, no unique optimum",
            ));
        }
        let mut w_opt = vec![0.0; dim];
        for col in 0..dim {
            let mut proj = 0.0;
            for i in 0..dim {
                proj += vectors.row(i)[col] * rhs[i];
            }
            proj /= eigenvalues[col];
            for i in 0..dim {
                w_opt[i] += vectors.row(i)[col] * proj;
            }
        }
        let mut task = QuadraticTask {
            mats,
            targets,
            dim,
            hessian,
            eigenvalues,
            w_opt,
            f_opt: 0.0,
        };
        task.f_opt = task.value(&task.w_opt.clone());
        Ok(task)
    }

    /// Random task with controlled cross-user heterogeneity: every user fits
    /// a shifted copy of the same reference point, with the shifts scaled by
    /// `heterogeneity` and centred so they cancel in the mean. Larger shifts
    /// make local gradients disagree more while the average stays tame.
    pub fn sample(
        rng: &mut RngStream,
        users: usize,
        dim: usize,
        heterogeneity: f64,
    ) -> Result<Self> {
        if users == 0 || dim == 0 {
            return Err(Error::invalid("quadratic task: empty task"));
        }
        let w_ref: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let mut shifts: Vec<Vec<f64>> = (0..users)
            .map(|_| (0..dim).map(|_| rng.standard_normal()).collect())
            .collect();
        for i in 0..dim {
            let mean = shifts.iter().map(|s| s[i]).sum::<f64>() / users as f64;
            for s in shifts.iter_mut() {
                s[i] = (s[i] - mean) * heterogeneity;
            }
        }
        let mut mats = Vec::with_capacity(users);
        let mut targets = Vec::with_capacity(users);
        let off_scale = 0.1 / (dim as f64).sqrt();
        for shift in &shifts {
            let mut a = Tensor2::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    a.row_mut(i)[j] = if i == j {
                        rng.range(0.8, 2.0)
                    } else {
                        off_scale * rng.standard_normal()
                    };
                }
            }
            let point: Vec<f64> = w_ref.iter().zip(shift.iter()).map(|(w, u)| w + u).collect();
            targets.push(matvec(&a, &point));
            mats.push(a);
        }
        Self::from_matrices(mats, targets)
    }

    /// Task whose users all hold the same data, so local gradients agree
    /// exactly and the cross-user spread is zero.
    pub fn homogeneous(rng: &mut RngStream, users: usize, dim: usize) -> Result<Self> {
        let single = Self::sample(rng, 1, dim, 0.0)?;
        let mats = vec![single.mats[0].clone(); users];
        let targets = vec![single.targets[0].clone(); users];
        Self::from_matrices(mats, targets)
    }

    pub fn users(&self) -> usize {
        self.mats.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hessian(&self) -> &Tensor2 {
        &self.hessian
    }

    /// Eigenvalues of the averaged Hessian, ascending.
    pub fn curvatures(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn optimum(&self) -> &[f64] {
        &self.w_opt
    }

    pub fn optimal_value(&self) -> f64 {
        self.f_opt
    }

    /// Global objective value at `w`.
    pub fn value(&self, w: &[f64]) -> f64 {
        let users = self.mats.len() as f64;
        let mut total = 0.0;
        for (a, b) in self.mats.iter().zip(self.targets.iter()) {
            let r = matvec(a, w);
            total += 0.5
                * r.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>();
        }
        total / users
    }

    /// Gap to the optimal value; tiny negative values can appear from
    /// rounding right at the optimum.
    pub fn optimality_gap(&self, w: &[f64]) -> f64 {
        self.value(w) - self.f_opt
    }

    /// Gradient of user `k`'s objective at `w`.
    pub fn local_gradient(&self, k: usize, w: &[f64]) -> Vec<f64> {
        let a = &self.mats[k];
        let mut r = matvec(a, w);
        for (x, y) in r.iter_mut().zip(self.targets[k].iter()) {
            *x -= y;
        }
        matvec_transpose(a, &r)
    }

    /// Gradient of the global objective: exactly the arithmetic mean of the
    /// local gradients.
    pub fn global_gradient(&self, w: &[f64]) -> Vec<f64> {
        let users = self.mats.len() as f64;
        let mut out = vec![0.0; self.dim];
        for k in 0..self.mats.len() {
            for (o, g) in out.iter_mut().zip(self.local_gradient(k, w).iter()) {
                *o += g / users;
            }
        }
        out
    }
}

/// Estimates the constants the gap bounds need: extreme curvatures from the
/// Hessian, the default step size, and envelopes on gradient norm and
/// cross-user spread measured along a clean gradient-descent run of
/// `rounds` steps from `w0` (with a 1.5x safety factor on both envelopes).
pub fn estimate_constants(
    task: &QuadraticTask,
    w0: &[f64],
    rounds: usize,
) -> Result<BoundConstants> {
    if w0.len() != task.dim() {
        return Err(Error::dimension("estimate_constants: w0 dimension"));
    }
    let smoothness = *task.curvatures().last().unwrap();
    let pl_constant = task.curvatures()[0];
    if !(pl_constant > 0.0) {
        return Err(Error::invalid(
            "estimate_constants: task has no strong curvature",
        ));
    }
    let learn_rate = BoundConstants::default_learn_rate(smoothness);
    let users = task.users();
    let mut w = w0.to_vec();
    let mut max_norm_sq = 0.0_f64;
    let mut max_spread = vec![0.0_f64; task.dim()];
    for _ in 0..=rounds {
        let grads: Vec<Vec<f64>> = (0..users).map(|k| task.local_gradient(k, &w)).collect();
        let mut mean = vec![0.0; task.dim()];
        for g in &grads {
            let norm_sq: f64 = g.iter().map(|x| x * x).sum();
            max_norm_sq = max_norm_sq.max(norm_sq);
            for (m, x) in mean.iter_mut().zip(g.iter()) {
                *m += x / users as f64;
            }
        }
        for i in 0..task.dim() {
            let var = grads
                .iter()
                .map(|g| (g[i] - mean[i]) * (g[i] - mean[i]))
                .sum::<f64>()
                / users as f64;
            max_spread[i] = max_spread[i].max(var);
        }
        for (wi, m) in w.iter_mut().zip(mean.iter()) {
            *wi -= learn_rate * m;
        }
    }
    let constants = BoundConstants {
        smoothness,
        pl_constant,
        learn_rate,
        grad_norm_sq: 1.5 * max_norm_sq,
        grad_var: max_spread.iter().map(|v| 1.5 * v).collect(),
        grad_dim: task.dim(),
    };
    constants.validate()?;
    Ok(constants)
}

/// One global step: `w - lr * g`.
pub fn global_update(w: &[f64], agg_gradient: &[f64], learn_rate: f64) -> Vec<f64> {
    assert_eq!(w.len(), agg_gradient.len(), "global_update: dimension mismatch");
    w.iter()
        .zip(agg_gradient.iter())
        .map(|(wi, gi)| wi - learn_rate * gi)
        .collect()
}

/// Unit-modulus rotation a transmitter applies so that its estimated
/// composite channel, seen from the receiver, becomes real non-negative.
///
/// Returns exactly `1` when the estimate is already real non-negative or
/// zero, so purely real test channels pass through bit-identically.
pub fn phase_alignment(est: Complex) -> Complex {
    if est.im == 0.0 && est.re >= 0.0 {
        Complex::new(1.0, 0.0)
    } else {
        est.conj() / est.norm()
    }
}

/// Estimated composite channels as the receiver effectively sees them:
/// aggregation users are phase-aligned to real non-negative magnitudes,
/// data users keep their raw complex estimates.
pub fn aligned_estimates(
    realization: &ChannelRealization,
    phases: &PhaseConfig,
    cfg: &ScenarioConfig,
) -> Vec<Complex> {
    let k = cfg.airfl_users;
    (0..cfg.total_users())
        .map(|i| {
            let est = realization.composite(phases, i, true);
            if i < k {
                Complex::new(est.norm(), 0.0)
            } else {
                est
            }
        })
        .collect()
}

/// Sends the local gradients through one superposed uplink block and
/// recovers the receiver's estimate of their average.
///
/// Per dimension, every aggregation user contributes its gradient entry
/// through its true composite channel (phase-aligned against the user's
/// estimate) at its allocated power, every data user leaks a
/// `sqrt(sic_residual)`-weighted interfering symbol (unit energy per
/// block), and thermal noise is added; the receiver scales by
/// `1 / (K * sqrt(eta))` and keeps the real part.
pub fn ota_aggregate(
    rng: &mut RngStream,
    gradients: &[Vec<f64>],
    realization: &ChannelRealization,
    phases: &PhaseConfig,
    alloc: &PowerAllocation,
    cfg: &ScenarioConfig,
) -> Result<Vec<f64>> {
    let k = cfg.airfl_users;
    let total = cfg.total_users();
    if gradients.len() != k {
        return Err(Error::dimension(
            "ota_aggregate: one gradient per aggregation user",
        ));
    }
    let dim = gradients.first().map_or(0, |g| g.len());
    if dim == 0 || gradients.iter().any(|g| g.len() != dim) {
        return Err(Error::dimension("ota_aggregate: ragged gradient dimensions"));
    }
    if alloc.power.len() != total {
        return Err(Error::dimension("ota_aggregate: power vector length"));
    }
    alloc.validate(cfg.max_power_w)?;
    let channels: Vec<Complex> = (0..total)
        .map(|i| {
            let truth = realization.composite(phases, i, false);
            if i < k {
                truth * phase_alignment(realization.composite(phases, i, true))
            } else {
                truth
            }
        })
        .collect();
    let weights: Vec<Complex> = channels
        .iter()
        .zip(alloc.power.iter())
        .map(|(h, p)| h * p.sqrt())
        .collect();
    let leak = cfg.sic_residual.sqrt();
    let block_energy = 1.0 / dim as f64;
    let scale = 1.0 / (k as f64 * alloc.denoise.sqrt());
    let mut out = Vec::with_capacity(dim);
    for q in 0..dim {
        let mut y = Complex::new(0.0, 0.0);
        for (user, g) in gradients.iter().enumerate() {
            y += weights[user] * g[q];
        }
        for weight in weights.iter().take(total).skip(k) {
            y += leak * weight * rng.cscg(block_energy);
        }
        y += rng.cscg(cfg.noise_power_w);
        out.push((y * scale).re);
    }
    Ok(out)
}

/// Non-learned baseline allocation: co-phase each surface toward the
/// currently weakest aggregation user, invert the resulting channel
/// magnitudes within the power budget, and give the data users the largest
/// common power that keeps the closed-form aggregation error within the
/// scenario's tolerance.
pub fn inversion_heuristic(
    realization: &ChannelRealization,
    cfg: &ScenarioConfig,
) -> Result<(PowerAllocation, PhaseConfig)> {
    let k = cfg.airfl_users;
    let total = cfg.total_users();
    if k == 0 {
        return Err(Error::invalid("inversion_heuristic: no aggregation users"));
    }
    let mut phases = PhaseConfig::zeros(cfg);
    let mut partial: Vec<Complex> = realization.est_direct.clone();
    if partial.len() != total {
        return Err(Error::dimension("inversion_heuristic: user count mismatch"));
    }
    for x in 0..cfg.num_ris() {
        let weakest = (0..k)
            .min_by(|&a, &b| {
                partial[a]
                    .norm_sqr()
                    .partial_cmp(&partial[b].norm_sqr())
                    .unwrap()
            })
            .unwrap();
        let base_arg = if partial[weakest].norm_sqr() > 0.0 {
            partial[weakest].arg()
        } else {
            0.0
        };
        for m in 0..cfg.ris_elements[x] {
            let phi = realization.est_cascaded[weakest][x][m];
            phases.theta[x][m] = PhaseConfig::wrap(base_arg - phi.arg());
        }
        for (i, p) in partial.iter_mut().enumerate() {
            for (m, phi) in realization.est_cascaded[i][x].iter().enumerate() {
                *p += Complex::from_polar(1.0, phases.theta[x][m]) * phi;
            }
        }
    }
    let gains: Vec<f64> = partial.iter().map(|h| h.norm_sqr()).collect();
    let min_gain = gains[..k].iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_gain > 0.0) {
        return Err(Error::invalid(
            "inversion_heuristic: an aggregation user has a zero channel",
        ));
    }
    let denoise = cfg.max_power_w * min_gain;
    let mut power = vec![0.0; total];
    for i in 0..k {
        power[i] = (denoise / gains[i]).min(cfg.max_power_w);
    }
    let vars: Vec<f64> = (0..total).map(|i| realization.composite_variance(i)).collect();
    let aligned: Vec<Complex> = partial
        .iter()
        .enumerate()
        .map(|(i, h)| if i < k { Complex::new(h.norm(), 0.0) } else { *h })
        .collect();
    let base = analytic_mse(
        &aligned,
        &vars,
        &power,
        k,
        denoise,
        cfg.sic_residual,
        cfg.noise_power_w,
        cfg.grad_dim,
    )?;
    let budget = cfg.mse_limit - base.total;
    let k2eta = (k as f64) * (k as f64) * denoise;
    let leak_per_watt: f64 = cfg.sic_residual
        * (k..total).map(|n| gains[n] + vars[n]).sum::<f64>()
        / k2eta;
    let data_power = if budget >= 0.0 {
        if leak_per_watt > 0.0 {
            (budget / leak_per_watt).min(cfg.max_power_w)
        } else {
            cfg.max_power_w
        }
    } else {
        cfg.max_power_w / 10.0
    };
    for p in power.iter_mut().take(total).skip(k) {
        *p = data_power;
    }
    Ok((PowerAllocation { power, denoise }, phases))
}

/// How an aggregation round picks its allocation and phase shifts.
pub enum AggregationPolicy<'a> {
    /// Bypass the channel entirely: the receiver gets the exact mean.
    Perfect,
    /// [`inversion_heuristic`] on each round's realization.
    Heuristic,
    /// The same fixed allocation every round.
    Fixed(PowerAllocation, PhaseConfig),
    /// Caller-supplied policy, e.g. a trained agent.
    #[allow(clippy::type_complexity)]
    Custom(
        &'a mut dyn FnMut(
            &ChannelRealization,
            &ScenarioConfig,
        ) -> Result<(PowerAllocation, PhaseConfig)>,
    ),
}

/// Everything recorded about one communication round.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    /// Iterate entering the round.
    pub w: Vec<f64>,
    /// Exact mean gradient at `w`.
    pub grad: Vec<f64>,
    /// Aggregated gradient the update actually used.
    pub agg: Vec<f64>,
    /// Aggregation error, exactly `agg - grad`.
    pub err: Vec<f64>,
    /// Optimality gap after the round's update.
    pub gap: f64,
    pub psi: f64,
    /// Gap envelope after this round.
    pub omega: f64,
    pub bias_bound: f64,
    pub var_bound: f64,
    pub mse_total: f64,
}

/// A full training run and its per-round trace.
#[derive(Debug, Clone)]
pub struct AirFLRun {
    pub initial_gap: f64,
    pub records: Vec<RoundRecord>,
    pub final_w: Vec<f64>,
}

/// Runs `rounds` communication rounds: local gradients, one channel
/// realization per round (departure angles drawn once), the policy's
/// allocation, over-the-air aggregation, and the global update — recording
/// the measured gap next to the bound terms. `sampler` may be `None` only
/// for the perfect-aggregation policy.
pub fn run_airfl(
    rng: &mut RngStream,
    task: &QuadraticTask,
    sampler: Option<&ChannelSampler>,
    mut policy: AggregationPolicy,
    constants: &BoundConstants,
    rounds: usize,
    w0: &[f64],
) -> Result<AirFLRun> {
    constants.validate()?;
    let rho = contraction(constants)?;
    if w0.len() != task.dim() {
        return Err(Error::dimension("run_airfl: w0 dimension"));
    }
    if constants.grad_dim != task.dim() {
        return Err(Error::dimension("run_airfl: constants built for another task"));
    }
    if let Some(s) = sampler {
        if s.config().airfl_users != task.users() {
            return Err(Error::config(
                "run_airfl: scenario and task disagree on aggregation users",
            ));
        }
    } else if !matches!(policy, AggregationPolicy::Perfect) {
        return Err(Error::config(
            "run_airfl: a channel sampler is required unless aggregation is perfect",
        ));
    }
    let aods = sampler.map(|s| s.sample_aods(rng));
    let initial_gap = task.optimality_gap(w0).max(0.0);
    let mut omega = initial_gap;
    let mut w = w0.to_vec();
    let mut records = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let grads: Vec<Vec<f64>> = (0..task.users())
            .map(|k| task.local_gradient(k, &w))
            .collect();
        let mut grad = vec![0.0; task.dim()];
        for g in &grads {
            for (m, x) in grad.iter_mut().zip(g.iter()) {
                *m += x / task.users() as f64;
            }
        }
        let (agg, bias_sq, err_sq, mse_total) = match policy {
            AggregationPolicy::Perfect => (grad.clone(), 0.0, 0.0, 0.0),
            ref mut other => {
                let sampler = sampler.expect("checked above");
                let cfg = sampler.config();
                let real = sampler.realize(rng, aods.as_ref().expect("aods drawn"))?;
                let (alloc, phases) = match other {
                    AggregationPolicy::Heuristic => inversion_heuristic(&real, cfg)?,
                    AggregationPolicy::Fixed(a, p) => (a.clone(), p.clone()),
                    AggregationPolicy::Custom(f) => f(&real, cfg)?,
                    AggregationPolicy::Perfect => unreachable!(),
                };
                phases.validate(cfg)?;
                let est = aligned_estimates(&real, &phases, cfg);
                let vars: Vec<f64> = (0..cfg.total_users())
                    .map(|i| real.composite_variance(i))
                    .collect();
                let bias_sq = bias_bound(
                    &est,
                    &alloc.power,
                    cfg.airfl_users,
                    alloc.denoise,
                    constants,
                )?;
                let err_sq = variance_bound(
                    &est,
                    &vars,
                    &alloc.power,
                    cfg.airfl_users,
                    alloc.denoise,
                    cfg.sic_residual,
                    cfg.noise_power_w,
                    constants,
                )?;
                let mse = analytic_mse(
                    &est,
                    &vars,
                    &alloc.power,
                    cfg.airfl_users,
                    alloc.denoise,
                    cfg.sic_residual,
                    cfg.noise_power_w,
                    cfg.grad_dim,
                )?;
                let agg = ota_aggregate(rng, &grads, &real, &phases, &alloc, cfg)?;
                (agg, bias_sq, err_sq, mse.total)
            }
        };
        let err: Vec<f64> = agg.iter().zip(grad.iter()).map(|(a, g)| a - g).collect();
        let psi_t = psi(bias_sq, err_sq, constants)?;
        omega = rho * omega + psi_t;
        w = global_update(&w, &agg, constants.learn_rate);
        records.push(RoundRecord {
            round,
            w: w.clone(),
            grad,
            agg,
            err,
            gap: task.optimality_gap(&w),
            psi: psi_t,
            omega,
            bias_bound: bias_sq,
            var_bound: err_sq,
            mse_total,
        });
    }
    Ok(AirFLRun {
        initial_gap,
        records,
        final_w: w,
    })
}
