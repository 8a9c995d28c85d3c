//! Central finite-difference verification of analytic gradients.

use super::ParamNet;

/// Compares `analytic` (flattened like `net.params()`) against central
/// finite differences of `loss` at the checked `indices`, returning the
/// worst relative error.
///
/// The relative error divides by `max(|fd| + |analytic|, 1e-3)`; the floor
/// keeps finite-difference noise on near-zero gradients from dominating
/// the report. Parameters are restored after probing.
pub fn finite_diff_max_rel_err<N: ParamNet>(
    net: &mut N,
    analytic: &[f64],
    indices: &[usize],
    step: f64,
    mut loss: impl FnMut(&N) -> f64,
) -> f64 {
    assert!(step > 0.0, "gradcheck: step must be positive");
    assert_eq!(
        analytic.len(),
        net.n_params(),
        "gradcheck: analytic gradient length mismatch"
    );
    let mut worst = 0.0_f64;
    for &idx in indices {
        let orig = net.get_param(idx);
        net.set_param(idx, orig + step);
        let up = loss(net);
        net.set_param(idx, orig - step);
        let down = loss(net);
        net.set_param(idx, orig);
        let fd = (up - down) / (2.0 * step);
        let denom = (fd.abs() + analytic[idx].abs()).max(1e-3);
        worst = worst.max((fd - analytic[idx]).abs() / denom);
    }
    worst
}
