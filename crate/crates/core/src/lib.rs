//! Simulation and learning library for an uplink in which a base station
//! serves two groups at once over the same band: conventional uplink users
//! decoded by successive interference cancellation, and a fleet of devices
//! whose locally computed gradients are aggregated over the air by analog
//! superposition. One or more reconfigurable reflecting surfaces sit between
//! the users and the base station and their per-element phase shifts are part
//! of the control problem.
//!
//! The crate is organised bottom-up:
//!
//! - [`rng`] and [`stats`]: seeded random streams and small statistics helpers.
//! - [`scenario`]: the scenario description (geometry, radio constants,
//!   impairment levels) and its JSON file format.
//! - [`channel`]: fading models, cascaded surface links, and channel
//!   estimation error.
//! - [`phy`]: decoding order, per-user rates, and the closed-form breakdown of
//!   the aggregation error.
//! - [`convergence`]: bias/variance bounds for a noisy gradient round and the
//!   resulting optimality-gap envelope.
//! - [`nn`]: a small dense/LSTM network toolkit with hand-written reverse-mode
//!   gradients and Adam.
//! - [`fl`]: a synthetic quadratic learning task, over-the-air aggregation of
//!   its gradients, and a channel-inversion baseline policy.
//! - [`env`]: the per-slot control environment (state, action decoding,
//!   reward shaping).
//! - [`agent`]: deterministic policy-gradient agents (dense and recurrent)
//!   with a replay buffer and soft target updates.
//!
//! All randomness flows through [`rng::RngStream`]; a run is reproducible
//! byte-for-byte from its seed.

// Validation code rejects NaN by negating comparisons, and numeric kernels
// index several arrays from one loop counter on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod agent;
pub mod channel;
pub mod convergence;
pub mod env;
pub mod error;
pub mod fl;
pub mod nn;
pub mod phy;
pub mod rng;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use scenario::{BoundConstants, ScenarioConfig};

/// Complex scalar used for all baseband quantities.
pub type Complex = num_complex::Complex64;

/// A vector of complex baseband coefficients.
pub type ComplexVec = Vec<Complex>;
