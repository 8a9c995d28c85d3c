//! Uplink physical layer: decoding order, per-user rates, and the
//! closed-form error of over-the-air gradient aggregation.
//!
//! Two user groups transmit at once. The aggregation group (first
//! `airfl_count` users) sends analog gradient symbols that the receiver
//! wants summed; the data group (remaining users) sends ordinary symbols
//! that the receiver decodes one by one, strongest first, subtracting each
//! decoded signal with a residual leakage factor `sic_residual`. What the
//! aggregation path sees afterwards is the superposed gradient signal, the
//! leakage of all data users, and thermal noise; scaling by the denoising
//! factor gives the estimate of the symbol average.
//!
//! The mean-square error of that estimate splits into five named parts:
//! power-control misalignment, data-user leakage, channel-estimation error,
//! the cross term of the two, and noise. [`analytic_mse`] evaluates the
//! closed form; [`monte_carlo_mse`] estimates the same quantity by
//! simulation and is the oracle the closed form is tested against.
//!
//! Rates and interference always use true channels; decoding order and all
//! error formulas use the receiver's estimates, which is all it has.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::Complex;

/// Transmit powers (watts, one per user, aggregation group first) plus the
/// common denoising factor applied by the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub power: Vec<f64>,
    pub denoise: f64,
}

impl PowerAllocation {
    pub fn validate(&self, max_power: f64) -> Result<()> {
        if self.power.iter().any(|p| !(*p >= 0.0) || *p > max_power * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!(
                "power allocation outside [0, {max_power}]"
            )));
        }
        if !(self.denoise > 0.0) {
            return Err(Error::invalid("denoise factor must be positive"));
        }
        Ok(())
    }
}

/// Five-part decomposition of the aggregation mean-square error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseBreakdown {
    /// Power-control misalignment of the aggregation users.
    pub misalignment: f64,
    /// Leakage of imperfectly cancelled data users.
    pub sic_error: f64,
    /// Channel-estimation error of the aggregation users.
    pub csi_error: f64,
    /// Estimation error riding on the data-user leakage.
    pub sic_csi_error: f64,
    /// Thermal noise after denoising.
    pub noise_error: f64,
    /// Sum of the five parts.
    pub total: f64,
}

impl MseBreakdown {
    fn assemble(
        misalignment: f64,
        sic_error: f64,
        csi_error: f64,
        sic_csi_error: f64,
        noise_error: f64,
    ) -> Self {
        MseBreakdown {
            misalignment,
            sic_error,
            csi_error,
            sic_csi_error,
            noise_error,
            total: misalignment + sic_error + csi_error + sic_csi_error + noise_error,
        }
    }
}

/// Decoding order of the data users: ascending estimated channel gain, so
/// the receiver decodes the last (strongest) entry first. Ties break on the
/// lower index for determinism. Indices are local to the data group.
pub fn sic_order(est_gains: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..est_gains.len()).collect();
    order.sort_by(|&a, &b| {
        est_gains[a]
            .partial_cmp(&est_gains[b])
            .expect("channel gains must not be NaN")
            .then(a.cmp(&b))
    });
    order
}

/// Post-cancellation SINR of the data user at position `rank` of the
/// ascending `order` (rank 0 is the weakest, decoded last).
///
/// The denominator carries the full power of every aggregation user, the
/// full power of weaker data users (not yet decoded), `sic_residual` times
/// the power of stronger data users (already decoded, imperfectly
/// subtracted), and noise. `channels` and `powers` cover all users,
/// aggregation group first; `order` indexes the data group locally.
pub fn sinr_noma(
    powers: &[f64],
    channels: &[Complex],
    airfl_count: usize,
    order: &[usize],
    rank: usize,
    sic_residual: f64,
    noise_power: f64,
) -> Result<f64> {
    if powers.len() != channels.len() {
        return Err(Error::dimension("sinr_noma: powers vs channels"));
    }
    if rank >= order.len() {
        return Err(Error::invalid("sinr_noma: rank out of range"));
    }
    if !(0.0..=1.0).contains(&sic_residual) {
        return Err(Error::invalid("sinr_noma: sic_residual outside [0, 1]"));
    }
    if !(noise_power > 0.0) {
        return Err(Error::invalid("sinr_noma: noise power must be positive"));
    }
    let rx = |user: usize| powers[user] * channels[user].norm_sqr();

    let mut denom = noise_power;
    for k in 0..airfl_count {
        denom += rx(k);
    }
    for (r, &local) in order.iter().enumerate() {
        if r == rank {
            continue;
        }
        let user = airfl_count + local;
        if r < rank {
            denom += rx(user);
        } else {
            denom += sic_residual * rx(user);
        }
    }
    Ok(rx(airfl_count + order[rank]) / denom)
}

/// Achievable rate of every data user, bit/s, indexed by the user's position
/// inside the data group (not by decoding rank).
pub fn rates(
    powers: &[f64],
    channels: &[Complex],
    airfl_count: usize,
    order: &[usize],
    sic_residual: f64,
    noise_power: f64,
    bandwidth: f64,
) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("rates: bandwidth must be positive"));
    }
    let mut out = vec![0.0; order.len()];
    for rank in 0..order.len() {
        let gamma = sinr_noma(
            powers,
            channels,
            airfl_count,
            order,
            rank,
            sic_residual,
            noise_power,
        )?;
        out[order[rank]] = bandwidth * (1.0 + gamma).log2();
    }
    Ok(out)
}

/// Which superposition [`received_signal`] forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalMode {
    /// Everything as transmitted: all users at full weight.
    Full,
    /// After cancellation of the data users: aggregation users at full
    /// weight, data users scaled by `sqrt(sic_residual)`.
    Residual,
}

/// One draw of the superposed baseband sample at the BS.
#[allow(clippy::too_many_arguments)]
pub fn received_signal(
    rng: &mut RngStream,
    symbols: &[Complex],
    channels: &[Complex],
    powers: &[f64],
    airfl_count: usize,
    sic_residual: f64,
    noise_power: f64,
    mode: SignalMode,
) -> Result<Complex> {
    if symbols.len() != channels.len() || powers.len() != channels.len() {
        return Err(Error::dimension("received_signal: per-user inputs disagree"));
    }
    if airfl_count > channels.len() {
        return Err(Error::invalid("received_signal: airfl_count too large"));
    }
    let leak = sic_residual.sqrt();
    let mut y = rng.cscg(noise_power);
    for i in 0..channels.len() {
        let weight = match mode {
            SignalMode::Full => 1.0,
            SignalMode::Residual if i < airfl_count => 1.0,
            SignalMode::Residual => leak,
        };
        y += weight * channels[i] * powers[i].sqrt() * symbols[i];
    }
    Ok(y)
}

fn check_mse_inputs(
    est_channels: &[Complex],
    err_vars: &[f64],
    powers: &[f64],
    airfl_count: usize,
    denoise: f64,
    sic_residual: f64,
    noise_power: f64,
) -> Result<()> {
    if est_channels.len() != err_vars.len() || est_channels.len() != powers.len() {
        return Err(Error::dimension("mse: per-user inputs disagree"));
    }
    if airfl_count == 0 || airfl_count > est_channels.len() {
        return Err(Error::invalid("mse: need at least one aggregation user"));
    }
    if !(denoise > 0.0) {
        return Err(Error::invalid("mse: denoise factor must be positive"));
    }
    if !(0.0..=1.0).contains(&sic_residual) {
        return Err(Error::invalid("mse: sic_residual outside [0, 1]"));
    }
    if !(noise_power >= 0.0) {
        return Err(Error::invalid("mse: negative noise power"));
    }
    if err_vars.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("mse: negative error variance"));
    }
    if powers.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid("mse: negative power"));
    }
    Ok(())
}

/// Closed-form aggregation mean-square error for fixed channel estimates.
///
/// `est_channels`, `err_vars`, and `powers` cover all users, aggregation
/// group first. `grad_dim` scales only the noise part: it is the number of
/// symbol dimensions one aggregation round occupies. With `grad_dim = 1`
/// this is exactly the per-symbol error that [`monte_carlo_mse`] estimates.
#[allow(clippy::too_many_arguments)]
pub fn analytic_mse(
    est_channels: &[Complex],
    err_vars: &[f64],
    powers: &[f64],
    airfl_count: usize,
    denoise: f64,
    sic_residual: f64,
    noise_power: f64,
    grad_dim: usize,
) -> Result<MseBreakdown> {
    check_mse_inputs(
        est_channels,
        err_vars,
        powers,
        airfl_count,
        denoise,
        sic_residual,
        noise_power,
    )?;
    if grad_dim == 0 {
        return Err(Error::invalid("mse: grad_dim must be at least 1"));
    }
    let k = airfl_count as f64;
    let k2 = k * k;
    let inv_sqrt_eta = 1.0 / denoise.sqrt();

    let mut misalignment = 0.0;
    let mut csi = 0.0;
    for i in 0..airfl_count {
        misalignment +=
            (est_channels[i] * powers[i].sqrt() * inv_sqrt_eta - 1.0).norm_sqr();
        csi += powers[i] * err_vars[i];
    }
    misalignment /= k2;
    csi /= k2 * denoise;

    let mut sic = 0.0;
    let mut sic_csi = 0.0;
    for i in airfl_count..est_channels.len() {
        sic += powers[i] * est_channels[i].norm_sqr();
        sic_csi += powers[i] * err_vars[i];
    }
    sic *= sic_residual / (k2 * denoise);
    sic_csi *= sic_residual / (k2 * denoise);

    let noise = grad_dim as f64 * noise_power / (k2 * denoise);

    Ok(MseBreakdown::assemble(misalignment, sic, csi, sic_csi, noise))
}

/// Simulation estimate of the per-symbol aggregation error, with its
/// standard error. Symbols, estimation errors, and noise are redrawn each
/// sample; the channel estimates stay fixed. The expectation equals
/// [`analytic_mse`] with `grad_dim = 1`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_mse(
    rng: &mut RngStream,
    est_channels: &[Complex],
    err_vars: &[f64],
    powers: &[f64],
    airfl_count: usize,
    denoise: f64,
    sic_residual: f64,
    noise_power: f64,
    samples: usize,
) -> Result<(f64, f64)> {
    check_mse_inputs(
        est_channels,
        err_vars,
        powers,
        airfl_count,
        denoise,
        sic_residual,
        noise_power,
    )?;
    if samples < 1_000 {
        return Err(Error::invalid("monte_carlo_mse: need at least 1000 samples"));
    }
    let users = est_channels.len();
    let k = airfl_count as f64;
    let scale = 1.0 / (k * denoise.sqrt());
    let leak = sic_residual.sqrt();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut y = rng.cscg(noise_power);
        let mut target = Complex::new(0.0, 0.0);
        for i in 0..users {
            let s = rng.cscg(1.0);
            let h = est_channels[i] + rng.cscg(err_vars[i]);
            let weight = if i < airfl_count { 1.0 } else { leak };
            y += weight * h * powers[i].sqrt() * s;
            if i < airfl_count {
                target += s;
            }
        }
        let err = (y * scale - target / k).norm_sqr();
        sum += err;
        sum_sq += err * err;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    Ok((mean, (var.max(0.0) / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Reference sort used as an independent oracle for `sic_order`.
    fn reference_order(gains: &[f64]) -> Vec<usize> {
        let mut pairs: Vec<(f64, usize)> =
            gains.iter().copied().zip(0..gains.len()).collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pairs.into_iter().map(|(_, i)| i).collect()
    }

    #[test]
    fn test_sic_order_ascending() {
        assert_eq!(sic_order(&[4.0, 1.0, 2.25]), vec![1, 2, 0]);
    }

    #[test]
    fn test_sic_order_ties_break_on_index() {
        assert_eq!(sic_order(&[2.0, 1.0, 2.0, 1.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn test_sic_order_matches_reference_sort() {
        let mut rng = RngStream::from_seed(2);
        for _ in 0..200 {
            let n = 1 + rng.below(8);
            let gains: Vec<f64> = (0..n).map(|_| (rng.uniform() * 4.0).round()).collect();
            assert_eq!(sic_order(&gains), reference_order(&gains), "gains {gains:?}");
        }
    }

    #[test]
    fn test_sinr_single_user_noise_limited() {
        // One data user, aggregation user silent: SINR = p |h|^2 / noise.
        let powers = [0.0, 0.5];
        let channels = [cx(1.0, 0.0), cx(0.0, 2.0)];
        let got = sinr_noma(&powers, &channels, 1, &[0], 0, 0.04, 0.1).unwrap();
        assert!((got - 0.5 * 4.0 / 0.1).abs() < 1e-12);
    }

    #[test]
    fn test_sinr_residual_extremes() {
        let powers = [0.2, 0.5, 0.7];
        let channels = [cx(0.5, 0.5), cx(1.0, 0.0), cx(0.0, 2.0)];
        let order = sic_order(&[1.0, 4.0]);
        assert_eq!(order, vec![0, 1]);
        let agg = 0.2 * 0.5;

        // Ideal cancellation: the weakest user sees no trace of the stronger.
        let weak0 = sinr_noma(&powers, &channels, 1, &order, 0, 0.0, 0.01).unwrap();
        assert!((weak0 - 0.5 / (agg + 0.01)).abs() < 1e-12);

        // No cancellation: every other user interferes at full power.
        let weak1 = sinr_noma(&powers, &channels, 1, &order, 0, 1.0, 0.01).unwrap();
        assert!((weak1 - 0.5 / (agg + 0.7 * 4.0 + 0.01)).abs() < 1e-12);
        let strong1 = sinr_noma(&powers, &channels, 1, &order, 1, 1.0, 0.01).unwrap();
        assert!((strong1 - 0.7 * 4.0 / (agg + 0.5 + 0.01)).abs() < 1e-12);

        // In between, the already-decoded stronger user leaks a fraction.
        let weak_mid = sinr_noma(&powers, &channels, 1, &order, 0, 0.25, 0.01).unwrap();
        assert!((weak_mid - 0.5 / (agg + 0.25 * 0.7 * 4.0 + 0.01)).abs() < 1e-12);
    }

    #[test]
    fn test_strongest_user_sees_all_weaker_interference() {
        let powers = [0.1, 0.3, 0.4, 0.2];
        let channels = [cx(1.0, 0.0), cx(1.0, 0.0), cx(0.0, 1.0), cx(3.0, 0.0)];
        let order = sic_order(&[1.0, 1.0, 9.0]);
        let strongest = sinr_noma(&powers, &channels, 1, &order, 2, 0.0, 0.01).unwrap();
        let expect = 0.2 * 9.0 / (0.1 + 0.3 + 0.4 + 0.01);
        assert!((strongest - expect).abs() < 1e-12);
    }

    #[test]
    fn test_rates_unit_sinr() {
        // SINR of exactly 1 at 1 MHz is 1 Mbit/s.
        let powers = [0.0, 1.0];
        let channels = [cx(1.0, 0.0), cx(1.0, 0.0)];
        let r = rates(&powers, &channels, 1, &[0], 0.0, 1.0, 1e6).unwrap();
        assert!((r[0] - 1e6).abs() < 1e-6);
    }

    #[test]
    fn test_received_signal_power_budget() {
        let mut rng = RngStream::from_seed(19);
        let channels = [cx(0.8, 0.2), cx(0.1, -0.5), cx(-0.3, 0.4)];
        let powers = [0.9, 0.6, 0.5];
        let noise = 0.05;
        let eps_b = 0.16;
        let n = 200_000;
        let mut full = 0.0;
        let mut residual = 0.0;
        for _ in 0..n {
            let symbols: Vec<Complex64> = (0..3).map(|_| rng.cscg(1.0)).collect();
            full += received_signal(
                &mut rng, &symbols, &channels, &powers, 1, eps_b, noise, SignalMode::Full,
            )
            .unwrap()
            .norm_sqr();
            let symbols: Vec<Complex64> = (0..3).map(|_| rng.cscg(1.0)).collect();
            residual += received_signal(
                &mut rng, &symbols, &channels, &powers, 1, eps_b, noise, SignalMode::Residual,
            )
            .unwrap()
            .norm_sqr();
        }
        let rx: Vec<f64> = (0..3).map(|i| powers[i] * channels[i].norm_sqr()).collect();
        let full_expect = rx.iter().sum::<f64>() + noise;
        let res_expect = rx[0] + eps_b * (rx[1] + rx[2]) + noise;
        assert!(
            (full / n as f64 / full_expect - 1.0).abs() < 0.02,
            "full-mode power {} vs {full_expect}",
            full / n as f64
        );
        assert!(
            (residual / n as f64 / res_expect - 1.0).abs() < 0.02,
            "residual-mode power {} vs {res_expect}",
            residual / n as f64
        );
    }

    #[test]
    fn test_analytic_mse_noise_only() {
        // Two perfectly aligned users, no impairments: only noise survives.
        let est = [cx(1.0, 0.0), cx(1.0, 0.0)];
        let vars = [0.0, 0.0];
        let powers = [1.0, 1.0];
        let b = analytic_mse(&est, &vars, &powers, 2, 1.0, 0.0, 0.04, 1).unwrap();
        assert_eq!(b.misalignment, 0.0);
        assert_eq!(b.sic_error, 0.0);
        assert_eq!(b.csi_error, 0.0);
        assert_eq!(b.sic_csi_error, 0.0);
        assert!((b.noise_error - 0.01).abs() < 1e-18);
        assert!((b.total - 0.01).abs() < 1e-18);
    }

    #[test]
    fn test_analytic_mse_perfect_inversion_kills_misalignment() {
        let est = [cx(0.3, 0.4), cx(-0.2, 0.6)];
        let denoise = 0.7;
        // Power with the channel's phase cannot be realised; use real-positive
        // channels so magnitude inversion is exact.
        let est = [cx(est[0].norm(), 0.0), cx(est[1].norm(), 0.0)];
        let powers: Vec<f64> = est.iter().map(|h| denoise / h.norm_sqr()).collect();
        let b = analytic_mse(&est, &[0.0, 0.0], &powers, 2, denoise, 0.0, 0.0, 1).unwrap();
        assert!(b.misalignment < 1e-28, "misalignment {}", b.misalignment);
        assert_eq!(b.total, b.misalignment);
    }

    #[test]
    fn test_analytic_mse_matches_monte_carlo() {
        let mut rng = RngStream::from_seed(47);
        for trial in 0..3 {
            let k = 3 + trial;
            let n = 2;
            let users = k + n;
            let est: Vec<Complex64> = (0..users).map(|_| rng.cscg(1e-10)).collect();
            let vars: Vec<f64> = (0..users).map(|_| 0.02e-10 * rng.uniform()).collect();
            let powers: Vec<f64> = (0..users).map(|_| 0.01 * rng.uniform()).collect();
            let denoise = 1e-12 * (0.5 + rng.uniform());
            let noise = 4e-15;
            let analytic =
                analytic_mse(&est, &vars, &powers, k, denoise, 0.04, noise, 1).unwrap();
            let (mc, se) = monte_carlo_mse(
                &mut rng, &est, &vars, &powers, k, denoise, 0.04, noise, 100_000,
            )
            .unwrap();
            assert!(
                (mc - analytic.total).abs() <= 3.0 * se,
                "trial {trial}: closed form {} vs simulated {mc} (se {se})",
                analytic.total
            );
        }
    }

    #[test]
    fn test_monte_carlo_standard_error_scaling() {
        let mut rng = RngStream::from_seed(53);
        let est = [cx(1.0, 0.2), cx(0.4, -0.8), cx(0.2, 0.1)];
        let vars = [0.01, 0.02, 0.005];
        let powers = [0.7, 0.8, 0.3];
        let (_, se_small) =
            monte_carlo_mse(&mut rng, &est, &vars, &powers, 2, 0.9, 0.1, 0.05, 4_000).unwrap();
        let (_, se_big) =
            monte_carlo_mse(&mut rng, &est, &vars, &powers, 2, 0.9, 0.1, 0.05, 256_000).unwrap();
        let ratio = se_small / se_big;
        assert!(
            (ratio - 8.0).abs() < 2.5,
            "standard error should shrink like 1/sqrt(samples), got ratio {ratio}"
        );
    }

    #[test]
    fn test_monte_carlo_rejects_tiny_sample_count() {
        let mut rng = RngStream::from_seed(5);
        let est = [cx(1.0, 0.0)];
        assert!(
            monte_carlo_mse(&mut rng, &est, &[0.0], &[1.0], 1, 1.0, 0.0, 0.1, 10).is_err()
        );
    }

    #[test]
    fn test_analytic_mse_rejects_bad_domain() {
        let est = [cx(1.0, 0.0)];
        assert!(analytic_mse(&est, &[0.0], &[1.0], 1, 0.0, 0.0, 0.1, 1).is_err());
        assert!(analytic_mse(&est, &[-0.1], &[1.0], 1, 1.0, 0.0, 0.1, 1).is_err());
        assert!(analytic_mse(&est, &[0.0], &[1.0], 1, 1.0, 1.5, 0.1, 1).is_err());
        assert!(analytic_mse(&est, &[0.0], &[1.0], 1, 1.0, 0.0, 0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn prop_total_is_sum_of_parts(
            seed in 0u64..1000,
            k in 1usize..5,
            n in 0usize..4,
        ) {
            let mut rng = RngStream::from_seed(seed);
            let users = k + n;
            let est: Vec<Complex64> = (0..users).map(|_| rng.cscg(1.0)).collect();
            let vars: Vec<f64> = (0..users).map(|_| rng.uniform() * 0.1).collect();
            let powers: Vec<f64> = (0..users).map(|_| rng.uniform()).collect();
            let b = analytic_mse(&est, &vars, &powers, k, 0.5, 0.2, 0.01, 3).unwrap();
            let sum = b.misalignment + b.sic_error + b.csi_error + b.sic_csi_error + b.noise_error;
            prop_assert!((b.total - sum).abs() <= 1e-15 * sum.max(1.0));
            prop_assert!(b.total >= 0.0);
        }

        #[test]
        fn prop_mse_monotone_in_sic_residual(seed in 0u64..1000) {
            let mut rng = RngStream::from_seed(seed);
            let est: Vec<Complex64> = (0..4).map(|_| rng.cscg(1.0)).collect();
            let vars = vec![0.01; 4];
            let powers = vec![0.5; 4];
            let lo = analytic_mse(&est, &vars, &powers, 2, 0.7, 0.1, 0.01, 1).unwrap();
            let hi = analytic_mse(&est, &vars, &powers, 2, 0.7, 0.4, 0.01, 1).unwrap();
            prop_assert!(hi.total >= lo.total);
        }

        #[test]
        fn prop_sic_order_is_permutation(gains in proptest::collection::vec(0.0f64..10.0, 1..10)) {
            let order = sic_order(&gains);
            let mut seen = vec![false; gains.len()];
            for &i in &order {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
            for w in order.windows(2) {
                prop_assert!(gains[w[0]] <= gains[w[1]]);
            }
        }
    }
}
