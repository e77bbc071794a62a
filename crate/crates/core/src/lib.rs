//! Effective capacity of ultra-dense small-cell networks with unsaturated
//! traffic.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: layouts, path loss, link gains and instantaneous SINR.
//! - [`quad`]: adaptive Gauss–Kronrod quadrature used by the analytics.
//! - [`analytics`]: effective bandwidth, SINR densities, effective capacity,
//!   idle and violation probabilities.
//! - [`solver`]: the coupled QoS-exponent fixed point and the per-SBS
//!   maximum arrival rate.
//! - [`game`]: the traffic-saturation game and best-response iteration.
//! - [`sim`]: slot-level Monte Carlo simulator of the coupled queues.
//! - [`experiments`]: configurable sweeps emitting self-describing CSV.
//!
//! Everything downstream of [`model::LinkGainMatrix`] works in linear units.

// `!(x > 0.0)` is how NaN gets rejected; quadrature nodes keep all digits
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod analytics;
pub mod error;
pub mod experiments;
pub mod game;
pub mod model;
pub mod quad;
pub mod sim;
pub mod solver;

pub use analytics::{Channel, IdleProfile, QosSpec, TrafficModel};
pub use error::{Error, Result};
pub use model::{FadingDraw, LinkGainMatrix, NetworkLayout, RadioParams};
pub use solver::{InterferenceModel, SolveResult, SolverConfig};
