//! Optimality-gap accounting for training over a noisy aggregation channel.
//!
//! One aggregation round perturbs the ideal gradient average by an error
//! whose first and second moments are bounded in closed form from the
//! receiver's channel estimates ([`bias_bound`], [`variance_bound`]). Those
//! two moments, together with the task constants, give a per-round penalty
//! [`psi`]; the penalties accumulate through the geometric recursion
//!
//! ```text
//! gap(t+1) <= (1 - lr * pl) * gap(t) + psi(t)
//! ```
//!
//! whose unrolled form [`omega_trace`] is an envelope on the expected gap
//! after every round. [`recursion_check`] tests the one-step inequality on
//! measured values. The recursion is valid for step sizes up to
//! `2 / (2 + smoothness)`; the constructors reject anything larger.

use crate::error::{Error, Result};
use crate::scenario::BoundConstants;
use crate::Complex;

/// Upper bound on the squared norm of the aggregation error's mean, given
/// the channel estimates and powers of the aggregation users.
pub fn bias_bound(
    est_channels: &[Complex],
    powers: &[f64],
    airfl_count: usize,
    denoise: f64,
    constants: &BoundConstants,
) -> Result<f64> {
    if est_channels.len() != powers.len() || est_channels.len() < airfl_count {
        return Err(Error::dimension("bias_bound: per-user inputs disagree"));
    }
    if !(denoise > 0.0) {
        return Err(Error::invalid("bias_bound: denoise must be positive"));
    }
    let k = airfl_count as f64;
    let inv_sqrt_eta = 1.0 / denoise.sqrt();
    let mut sum = 0.0;
    for i in 0..airfl_count {
        sum += (est_channels[i] * powers[i].sqrt() * inv_sqrt_eta - 1.0).norm_sqr();
    }
    Ok(sum * constants.grad_norm_sq / (k * k))
}

/// Upper bound on the expected squared norm of the aggregation error:
/// misalignment and estimation error of the aggregation users scaled by the
/// gradient envelope, leakage of the data users, and noise.
#[allow(clippy::too_many_arguments)]
pub fn variance_bound(
    est_channels: &[Complex],
    err_vars: &[f64],
    powers: &[f64],
    airfl_count: usize,
    denoise: f64,
    sic_residual: f64,
    noise_power: f64,
    constants: &BoundConstants,
) -> Result<f64> {
    if est_channels.len() != err_vars.len() || est_channels.len() != powers.len() {
        return Err(Error::dimension("variance_bound: per-user inputs disagree"));
    }
    if airfl_count == 0 || airfl_count > est_channels.len() {
        return Err(Error::invalid("variance_bound: bad airfl_count"));
    }
    if !(denoise > 0.0) {
        return Err(Error::invalid("variance_bound: denoise must be positive"));
    }
    if !(0.0..=1.0).contains(&sic_residual) {
        return Err(Error::invalid("variance_bound: sic_residual outside [0, 1]"));
    }
    let k = airfl_count as f64;
    let k2 = k * k;
    let inv_sqrt_eta = 1.0 / denoise.sqrt();

    let mut agg = 0.0;
    for i in 0..airfl_count {
        let misalign = (est_channels[i] * powers[i].sqrt() * inv_sqrt_eta - 1.0).norm_sqr();
        agg += misalign + err_vars[i] * powers[i] / denoise;
    }
    let mut leak = 0.0;
    for i in airfl_count..est_channels.len() {
        leak += (est_channels[i].norm_sqr() + err_vars[i]) * powers[i];
    }
    Ok(agg * constants.grad_norm_sq / k2
        + leak * sic_residual / (k2 * denoise)
        + constants.grad_dim as f64 * noise_power / (k2 * denoise))
}

/// Per-round gap penalty from the two error moments and the task constants.
///
/// Rejects step sizes beyond the recursion's validity range.
pub fn psi(bias_sq: f64, err_sq: f64, constants: &BoundConstants) -> Result<f64> {
    constants.validate()?;
    if !(bias_sq >= 0.0) || !(err_sq >= 0.0) {
        return Err(Error::invalid("psi: negative error moment"));
    }
    let l = constants.smoothness;
    let lr = constants.learn_rate;
    Ok(0.5 * l * lr * lr * constants.grad_var_sum()
        + 0.5 * (1.0 + l * l * lr * lr) * bias_sq
        + 0.5 * l * lr * lr * err_sq)
}

/// Contraction factor of the gap recursion.
pub fn contraction(constants: &BoundConstants) -> Result<f64> {
    let rho = 1.0 - constants.learn_rate * constants.pl_constant;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(
            "contraction: learn_rate * pl_constant must lie in (0, 1)",
        ));
    }
    Ok(rho)
}

/// Envelope on the expected gap after each round: entry `t` bounds the gap
/// after applying rounds `0..=t` of `psis` to `initial_gap`.
pub fn omega_trace(
    initial_gap: f64,
    psis: &[f64],
    constants: &BoundConstants,
) -> Result<Vec<f64>> {
    constants.validate()?;
    if !(initial_gap >= 0.0) {
        return Err(Error::invalid("omega_trace: negative initial gap"));
    }
    let rho = contraction(constants)?;
    let mut trace = Vec::with_capacity(psis.len());
    let mut omega = initial_gap;
    for &p in psis {
        if !(p >= 0.0) {
            return Err(Error::invalid("omega_trace: negative psi"));
        }
        omega = rho * omega + p;
        trace.push(omega);
    }
    Ok(trace)
}

/// One-step recursion test on measured gaps: passes when
/// `gap_next <= (1 - lr*pl) * gap_prev + psi + slack`.
pub fn recursion_check(
    gap_prev: f64,
    gap_next: f64,
    psi_value: f64,
    constants: &BoundConstants,
    slack: f64,
) -> Result<bool> {
    let rho = contraction(constants)?;
    Ok(gap_next <= rho * gap_prev + psi_value + slack)
}
