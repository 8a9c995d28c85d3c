//! Fading links, cascaded surface paths, and channel estimation error.
//!
//! Three link families make up the model:
//!
//! - direct user-to-BS links `r_i`: Rayleigh, variance set by a power-law
//!   path loss with the "direct" exponent;
//! - surface-to-BS links `G_x`: Rician, a line-of-sight steering vector mixed
//!   with a scattered component, path loss with the "surface" exponent;
//! - user-to-surface links `h_{i,x}`: Rayleigh with the surface exponent.
//!
//! The per-element cascaded link through surface `x` is
//! `phi_{i,x,m} = conj(G_{x,m}) * h_{i,x,m}`, and with per-element phase
//! shifts `theta` the end-to-end channel of user `i` becomes
//!
//! ```text
//! hbar_i = r_i + sum_x sum_m exp(j*theta_{x,m}) * phi_{i,x,m}
//! ```
//!
//! Estimation error is additive complex Gaussian on `r_i` and on each
//! cascaded element, with variance equal to the scenario's `csi_error` times
//! the link's average power; truth = estimate + error. The composite estimate
//! therefore carries a total error variance of
//! `var(r_i) + sum_x M_x * var(phi_{i,x,m})`, which [`composite_variance`]
//! reports and downstream error formulas consume.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scenario::ScenarioConfig;
use crate::{Complex, ComplexVec};

/// Power-law path loss at `distance` metres.
///
/// Distances below the 1 m reference are outside the model's validity and
/// are rejected.
pub fn path_loss(distance: f64, exponent: f64, ref_gain: f64) -> Result<f64> {
    if !(distance >= 1.0) {
        return Err(Error::invalid(format!(
            "path_loss: distance {distance} below the 1 m reference"
        )));
    }
    Ok(ref_gain * distance.powf(-exponent))
}

/// Uniform-linear-array steering vector of `len` elements for departure
/// angle `aod`, at the given element spacing over wavelength.
pub fn los_steering(len: usize, aod: f64, spacing_ratio: f64) -> ComplexVec {
    (0..len)
        .map(|m| {
            Complex64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * spacing_ratio * m as f64 * aod.sin(),
            )
        })
        .collect()
}

/// Euclidean distance between two points.
fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Draw `count` user positions uniformly on the placement disc (ground
/// height, centred under the BS).
pub fn sample_user_positions(rng: &mut RngStream, cfg: &ScenarioConfig) -> Vec<[f64; 3]> {
    (0..cfg.total_users())
        .map(|_| {
            let radius = cfg.user_disc_radius * rng.uniform().sqrt();
            let angle = rng.range(0.0, 2.0 * std::f64::consts::PI);
            [
                cfg.bs_position[0] + radius * angle.cos(),
                cfg.bs_position[1] + radius * angle.sin(),
                0.0,
            ]
        })
        .collect()
}

/// One Rician surface-to-BS vector with the departure angle drawn inside.
pub fn sample_ris_bs(
    rng: &mut RngStream,
    len: usize,
    distance: f64,
    rician_factor: f64,
    exponent: f64,
    ref_gain: f64,
    spacing_ratio: f64,
) -> Result<ComplexVec> {
    let aod = rng.range(0.0, 2.0 * std::f64::consts::PI);
    sample_ris_bs_with_aod(
        rng,
        len,
        distance,
        rician_factor,
        exponent,
        ref_gain,
        spacing_ratio,
        aod,
    )
}

/// One Rician surface-to-BS vector for a fixed departure angle. The angle is
/// a slow variable (redrawn per episode), while the scattered part is fast
/// fading (redrawn per slot).
#[allow(clippy::too_many_arguments)]
pub fn sample_ris_bs_with_aod(
    rng: &mut RngStream,
    len: usize,
    distance: f64,
    rician_factor: f64,
    exponent: f64,
    ref_gain: f64,
    spacing_ratio: f64,
    aod: f64,
) -> Result<ComplexVec> {
    if rician_factor < 0.0 {
        return Err(Error::invalid("sample_ris_bs: negative rician_factor"));
    }
    let gain = path_loss(distance, exponent, ref_gain)?;
    let los_scale = (gain * rician_factor / (rician_factor + 1.0)).sqrt();
    let nlos_var = gain / (rician_factor + 1.0);
    let los = los_steering(len, aod, spacing_ratio);
    Ok(los
        .into_iter()
        .map(|l| los_scale * l + rng.cscg(nlos_var))
        .collect())
}

/// Per-element phase shifts of every surface, radians in `[0, 2*pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub theta: Vec<Vec<f64>>,
}

impl PhaseConfig {
    pub fn zeros(cfg: &ScenarioConfig) -> Self {
        PhaseConfig {
            theta: cfg.ris_elements.iter().map(|&m| vec![0.0; m]).collect(),
        }
    }

    /// Wrap an angle into `[0, 2*pi)`.
    pub fn wrap(angle: f64) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut a = angle % two_pi;
        if a < 0.0 {
            a += two_pi;
        }
        a
    }

    pub fn validate(&self, cfg: &ScenarioConfig) -> Result<()> {
        if self.theta.len() != cfg.num_ris() {
            return Err(Error::dimension("phase config: wrong surface count"));
        }
        for (x, row) in self.theta.iter().enumerate() {
            if row.len() != cfg.ris_elements[x] {
                return Err(Error::dimension(format!(
                    "phase config: surface {x} expects {} elements, got {}",
                    cfg.ris_elements[x],
                    row.len()
                )));
            }
            if row
                .iter()
                .any(|t| !t.is_finite() || *t < 0.0 || *t >= 2.0 * std::f64::consts::PI)
            {
                return Err(Error::invalid(format!(
                    "phase config: surface {x} has an angle outside [0, 2*pi)"
                )));
            }
        }
        Ok(())
    }
}

/// All links of one coherence slot: truth, estimates, and the estimation
/// error variances the estimates were drawn with.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// True direct links, one per user.
    pub direct: ComplexVec,
    /// True surface-to-BS vectors, `[surface][element]`.
    pub ris_bs: Vec<ComplexVec>,
    /// True user-to-surface vectors, `[user][surface][element]`.
    pub user_ris: Vec<Vec<ComplexVec>>,
    /// True cascaded per-element links, `[user][surface][element]`.
    pub cascaded: Vec<Vec<ComplexVec>>,
    /// Estimated direct links.
    pub est_direct: ComplexVec,
    /// Estimated cascaded links, same shape as `cascaded`.
    pub est_cascaded: Vec<Vec<ComplexVec>>,
    /// Estimation-error variance of each direct link.
    pub var_direct: Vec<f64>,
    /// Per-element estimation-error variance of the cascaded links,
    /// `[user][surface]`.
    pub var_cascaded: Vec<Vec<f64>>,
    /// Departure angles the surface-to-BS links were drawn with.
    pub aod: Vec<f64>,
}

impl ChannelRealization {
    /// End-to-end channel of user `i` under the given phase shifts, from
    /// true links (`use_estimates = false`) or estimated ones.
    pub fn composite(&self, phases: &PhaseConfig, i: usize, use_estimates: bool) -> Complex {
        let (direct, cascaded) = if use_estimates {
            (&self.est_direct, &self.est_cascaded)
        } else {
            (&self.direct, &self.cascaded)
        };
        let mut h = direct[i];
        for (x, row) in cascaded[i].iter().enumerate() {
            for (m, phi) in row.iter().enumerate() {
                h += Complex64::from_polar(1.0, phases.theta[x][m]) * phi;
            }
        }
        h
    }

    /// Total estimation-error variance of user `i`'s composite channel.
    pub fn composite_variance(&self, i: usize) -> f64 {
        self.var_direct[i]
            + self
                .var_cascaded[i]
                .iter()
                .zip(self.cascaded[i].iter())
                .map(|(v, row)| v * row.len() as f64)
                .sum::<f64>()
    }
}

/// Draws channel realizations for a fixed scenario and user placement.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    cfg: ScenarioConfig,
    d_direct: Vec<f64>,
    d_bs_ris: Vec<f64>,
    d_user_ris: Vec<Vec<f64>>,
}

impl ChannelSampler {
    /// Build from a scenario whose user positions are already resolved.
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.user_positions.len() != cfg.total_users() {
            return Err(Error::config(
                "channel sampler needs resolved user positions",
            ));
        }
        let d_direct: Vec<f64> = cfg
            .user_positions
            .iter()
            .map(|&u| dist(u, cfg.bs_position))
            .collect();
        let d_bs_ris: Vec<f64> = cfg
            .ris_positions
            .iter()
            .map(|&r| dist(r, cfg.bs_position))
            .collect();
        let d_user_ris: Vec<Vec<f64>> = cfg
            .user_positions
            .iter()
            .map(|&u| cfg.ris_positions.iter().map(|&r| dist(u, r)).collect())
            .collect();
        for &d in d_direct
            .iter()
            .chain(d_bs_ris.iter())
            .chain(d_user_ris.iter().flatten())
        {
            if d < 1.0 {
                return Err(Error::config(format!(
                    "link distance {d} below the 1 m path-loss reference"
                )));
            }
        }
        Ok(ChannelSampler {
            cfg,
            d_direct,
            d_bs_ris,
            d_user_ris,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Average power of user `i`'s direct link.
    pub fn direct_gain(&self, i: usize) -> f64 {
        path_loss(
            self.d_direct[i],
            self.cfg.pl_exponent_direct,
            self.cfg.pl_ref_gain,
        )
        .expect("validated at construction")
    }

    /// Average power of one surface-to-BS entry.
    pub fn ris_bs_gain(&self, x: usize) -> f64 {
        path_loss(
            self.d_bs_ris[x],
            self.cfg.pl_exponent_ris,
            self.cfg.pl_ref_gain,
        )
        .expect("validated at construction")
    }

    /// Average power of one cascaded element of user `i` through surface `x`.
    pub fn cascaded_gain(&self, i: usize, x: usize) -> f64 {
        self.ris_bs_gain(x)
            * path_loss(
                self.d_user_ris[i][x],
                self.cfg.pl_exponent_ris,
                self.cfg.pl_ref_gain,
            )
            .expect("validated at construction")
    }

    /// Total composite estimation-error variance of user `i`; constant
    /// across slots because it only depends on link geometry.
    pub fn composite_variance(&self, i: usize) -> f64 {
        let mut v = self.cfg.csi_error * self.direct_gain(i);
        for x in 0..self.cfg.num_ris() {
            v += self.cfg.csi_error
                * self.cascaded_gain(i, x)
                * self.cfg.ris_elements[x] as f64;
        }
        v
    }

    /// Draw the slow per-episode variables: one departure angle per surface.
    pub fn sample_aods(&self, rng: &mut RngStream) -> Vec<f64> {
        (0..self.cfg.num_ris())
            .map(|_| rng.range(0.0, 2.0 * std::f64::consts::PI))
            .collect()
    }

    /// Draw one full realization (fast fading plus estimates) for fixed
    /// departure angles.
    pub fn realize(&self, rng: &mut RngStream, aods: &[f64]) -> Result<ChannelRealization> {
        if aods.len() != self.cfg.num_ris() {
            return Err(Error::dimension("realize: one departure angle per surface"));
        }
        let users = self.cfg.total_users();

        let direct: ComplexVec = (0..users)
            .map(|i| rng.cscg(self.direct_gain(i)))
            .collect();

        let mut ris_bs = Vec::with_capacity(self.cfg.num_ris());
        for (x, &aod) in aods.iter().enumerate() {
            ris_bs.push(sample_ris_bs_with_aod(
                rng,
                self.cfg.ris_elements[x],
                self.d_bs_ris[x],
                self.cfg.rician_factor,
                self.cfg.pl_exponent_ris,
                self.cfg.pl_ref_gain,
                self.cfg.element_spacing_ratio,
                aod,
            )?);
        }

        let mut user_ris = Vec::with_capacity(users);
        let mut cascaded = Vec::with_capacity(users);
        for i in 0..users {
            let mut per_ris = Vec::with_capacity(self.cfg.num_ris());
            let mut per_ris_cascaded = Vec::with_capacity(self.cfg.num_ris());
            for x in 0..self.cfg.num_ris() {
                let gain = path_loss(
                    self.d_user_ris[i][x],
                    self.cfg.pl_exponent_ris,
                    self.cfg.pl_ref_gain,
                )?;
                let h: ComplexVec = rng.cscg_vec(gain, self.cfg.ris_elements[x]);
                let phi: ComplexVec = h
                    .iter()
                    .zip(ris_bs[x].iter())
                    .map(|(hm, gm)| gm.conj() * hm)
                    .collect();
                per_ris.push(h);
                per_ris_cascaded.push(phi);
            }
            user_ris.push(per_ris);
            cascaded.push(per_ris_cascaded);
        }

        let mut real = ChannelRealization {
            direct,
            ris_bs,
            user_ris,
            cascaded,
            est_direct: Vec::new(),
            est_cascaded: Vec::new(),
            var_direct: Vec::new(),
            var_cascaded: Vec::new(),
            aod: aods.to_vec(),
        };
        self.apply_csi_error(rng, &mut real);
        Ok(real)
    }

    /// Decorate a realization with estimates: each estimate is the true link
    /// minus a complex Gaussian error whose variance is `csi_error` times the
    /// link's average power. With `csi_error == 0` the estimates equal the
    /// truth exactly.
    pub fn apply_csi_error(&self, rng: &mut RngStream, real: &mut ChannelRealization) {
        let eps = self.cfg.csi_error;
        real.var_direct = (0..self.cfg.total_users())
            .map(|i| eps * self.direct_gain(i))
            .collect();
        real.est_direct = real
            .direct
            .iter()
            .zip(real.var_direct.iter())
            .map(|(h, &v)| h - rng.cscg(v))
            .collect();

        real.var_cascaded = (0..self.cfg.total_users())
            .map(|i| {
                (0..self.cfg.num_ris())
                    .map(|x| eps * self.cascaded_gain(i, x))
                    .collect()
            })
            .collect();
        real.est_cascaded = real
            .cascaded
            .iter()
            .enumerate()
            .map(|(i, per_ris)| {
                per_ris
                    .iter()
                    .enumerate()
                    .map(|(x, row)| {
                        let v = real.var_cascaded[i][x];
                        row.iter().map(|phi| phi - rng.cscg(v)).collect()
                    })
                    .collect()
            })
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_var;

    fn desk_sampler(seed: u64) -> (ChannelSampler, RngStream) {
        let mut rng = RngStream::from_seed(seed);
        let mut cfg = ScenarioConfig::desk();
        cfg.user_positions = sample_user_positions(&mut rng, &cfg);
        (ChannelSampler::new(cfg).unwrap(), rng)
    }

    #[test]
    fn test_path_loss_reference_case() {
        let l = path_loss(10.0, 2.0, 1e-3).unwrap();
        assert!((l - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn test_path_loss_rejects_subreference_distance() {
        assert!(path_loss(0.5, 2.0, 1e-3).is_err());
    }

    #[test]
    fn test_los_steering_broadside_is_all_ones() {
        let v = los_steering(4, 0.0, 0.5);
        for z in v {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn test_los_steering_unit_modulus() {
        let v = los_steering(16, 1.1, 0.5);
        for z in v {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn test_rician_moments_match_gain() {
        let mut rng = RngStream::from_seed(5);
        let (len, d, kappa, alpha, rho) = (8, 50.0, 2.0, 2.2, 1e-3);
        let gain = path_loss(d, alpha, rho).unwrap();
        let aod = 0.7;
        let n = 20_000;
        let mut pow = vec![0.0; len];
        let mut mean = vec![Complex64::new(0.0, 0.0); len];
        for _ in 0..n {
            let g =
                sample_ris_bs_with_aod(&mut rng, len, d, kappa, alpha, rho, 0.5, aod).unwrap();
            for (m, z) in g.iter().enumerate() {
                pow[m] += z.norm_sqr();
                mean[m] += z;
            }
        }
        let los = los_steering(len, aod, 0.5);
        let los_scale = (gain * kappa / (kappa + 1.0)).sqrt();
        for m in 0..len {
            let avg_pow = pow[m] / n as f64;
            assert!(
                (avg_pow / gain - 1.0).abs() < 0.05,
                "element {m} power {avg_pow} vs gain {gain}"
            );
            let avg = mean[m] / n as f64;
            assert!(
                (avg - los_scale * los[m]).norm() < 0.1 * los_scale,
                "element {m} mean should sit on the line-of-sight component"
            );
        }
    }

    #[test]
    fn test_direct_links_rayleigh_power() {
        let (sampler, mut rng) = desk_sampler(17);
        let aods = sampler.sample_aods(&mut rng);
        let n = 20_000;
        let mut pow = 0.0;
        for _ in 0..n {
            let real = sampler.realize(&mut rng, &aods).unwrap();
            pow += real.direct[0].norm_sqr();
        }
        let expected = sampler.direct_gain(0);
        assert!(
            (pow / n as f64 / expected - 1.0).abs() < 0.05,
            "direct link power off: {} vs {expected}",
            pow / n as f64
        );
    }

    #[test]
    fn test_estimate_plus_error_recovers_truth_statistics() {
        let (sampler, mut rng) = desk_sampler(23);
        let aods = sampler.sample_aods(&mut rng);
        let mut errs = Vec::new();
        for _ in 0..5_000 {
            let real = sampler.realize(&mut rng, &aods).unwrap();
            errs.push((real.direct[1] - real.est_direct[1]).re);
            errs.push((real.direct[1] - real.est_direct[1]).im);
        }
        let (m, v) = mean_var(&errs).unwrap();
        let real = sampler.realize(&mut rng, &aods).unwrap();
        let expected = real.var_direct[1] / 2.0;
        assert!(m.abs() < 0.3 * expected.sqrt(), "error mean should vanish");
        assert!(
            (v / expected - 1.0).abs() < 0.1,
            "error variance {v} vs expected {expected}"
        );
    }

    #[test]
    fn test_zero_csi_error_makes_estimates_exact() {
        let mut rng = RngStream::from_seed(29);
        let mut cfg = ScenarioConfig::desk();
        cfg.csi_error = 0.0;
        cfg.user_positions = sample_user_positions(&mut rng, &cfg);
        let sampler = ChannelSampler::new(cfg).unwrap();
        let aods = sampler.sample_aods(&mut rng);
        let real = sampler.realize(&mut rng, &aods).unwrap();
        assert_eq!(real.direct, real.est_direct);
        assert_eq!(real.cascaded, real.est_cascaded);
        assert_eq!(real.composite_variance(0), 0.0);
    }

    #[test]
    fn test_composite_with_zero_phases_is_plain_sum() {
        let (sampler, mut rng) = desk_sampler(31);
        let aods = sampler.sample_aods(&mut rng);
        let real = sampler.realize(&mut rng, &aods).unwrap();
        let phases = PhaseConfig::zeros(sampler.config());
        let manual: Complex64 =
            real.direct[2] + real.cascaded[2][0].iter().sum::<Complex64>();
        let h = real.composite(&phases, 2, false);
        assert!((h - manual).norm() < 1e-15);
    }

    #[test]
    fn test_coherent_phases_beat_exhaustive_grid() {
        // Independent oracle for the phase convention: with two elements,
        // sweep a fine grid of both angles and confirm that per-element
        // alignment to the direct link's phase is at least as good as every
        // grid point.
        let mut rng = RngStream::from_seed(37);
        let mut cfg = ScenarioConfig::desk();
        cfg.ris_elements = vec![2];
        cfg.user_positions = sample_user_positions(&mut rng, &cfg);
        let sampler = ChannelSampler::new(cfg).unwrap();
        let aods = sampler.sample_aods(&mut rng);
        let real = sampler.realize(&mut rng, &aods).unwrap();

        let i = 0;
        let r = real.direct[i];
        let aligned = PhaseConfig {
            theta: vec![real.cascaded[i][0]
                .iter()
                .map(|phi| PhaseConfig::wrap(r.arg() - phi.arg()))
                .collect()],
        };
        let best_aligned = real.composite(&aligned, i, false).norm();

        let steps = 64;
        let mut best_grid = 0.0f64;
        for a in 0..steps {
            for b in 0..steps {
                let phases = PhaseConfig {
                    theta: vec![vec![
                        2.0 * std::f64::consts::PI * a as f64 / steps as f64,
                        2.0 * std::f64::consts::PI * b as f64 / steps as f64,
                    ]],
                };
                best_grid = best_grid.max(real.composite(&phases, i, false).norm());
            }
        }
        assert!(
            best_aligned >= best_grid - 1e-9,
            "aligned {best_aligned} vs grid maximum {best_grid}"
        );
        let expected = r.norm() + real.cascaded[i][0].iter().map(|p| p.norm()).sum::<f64>();
        assert!((best_aligned - expected).abs() < 1e-12);
    }

    #[test]
    fn test_composite_variance_matches_link_budget() {
        let (sampler, mut rng) = desk_sampler(41);
        let aods = sampler.sample_aods(&mut rng);
        let real = sampler.realize(&mut rng, &aods).unwrap();
        let i = 3;
        let manual = real.var_direct[i]
            + real.var_cascaded[i][0] * sampler.config().ris_elements[0] as f64;
        assert!((real.composite_variance(i) - manual).abs() < 1e-25);
        assert!((sampler.composite_variance(i) - manual).abs() < 1e-25);
    }

    #[test]
    fn test_user_positions_inside_disc() {
        let mut rng = RngStream::from_seed(43);
        let cfg = ScenarioConfig::table_defaults();
        let pos = sample_user_positions(&mut rng, &cfg);
        assert_eq!(pos.len(), cfg.total_users());
        for p in pos {
            let dx = p[0] - cfg.bs_position[0];
            let dy = p[1] - cfg.bs_position[1];
            assert!(dx * dx + dy * dy <= cfg.user_disc_radius.powi(2) + 1e-9);
            assert_eq!(p[2], 0.0);
        }
    }

    #[test]
    fn test_phase_config_validation() {
        let cfg = ScenarioConfig::desk();
        let mut phases = PhaseConfig::zeros(&cfg);
        phases.validate(&cfg).unwrap();
        phases.theta[0][0] = 7.0;
        assert!(phases.validate(&cfg).is_err(), "angle above 2*pi rejected");
    }
}
