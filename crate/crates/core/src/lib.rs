//! Simulation and verification toolkit for speed scaling on tandem servers.
//!
//! The worst-case wing runs unit-job arrival traces through a deterministic
//! event-driven simulator of K servers in series under pluggable speed
//! policies, computes offline lower bounds (a closed form and the
//! enhanced-OPT relaxation solved as a convex program), and numerically
//! audits the drift potential behind the competitive-ratio analysis: the
//! running inequality between events, the budget on upward jumps, and the
//! integrated cost bound. The stochastic wing covers layered parallel
//! networks under random routing with gated static speeds: closed-form
//! per-layer costs, two policy-independent lower bounds, workload-free
//! competitive-ratio certificates, and a Monte-Carlo validator.
//!
//! All numerics are generic over the scalar type via [`scalar::Real`];
//! the `*64` aliases below fix `f64`, which the CLI and tests use.

pub mod engine;
pub mod offline;
pub mod policies;
pub mod potential;
pub mod power;
pub mod scalar;
pub mod stochastic;
pub mod workload;

pub use scalar::Real;

/// Monomial power curve over `f64`.
pub type PowerFunction64 = power::PowerFunction<f64>;
/// Affine power curve over `f64`.
pub type AffinePower64 = power::AffinePower<f64>;
/// Arrival trace over `f64`.
pub type Trace64 = workload::Trace<f64>;
/// Simulation record over `f64`.
pub type Trajectory64 = engine::Trajectory<f64>;
/// Enhanced-OPT schedule over `f64`.
pub type OptSchedule64 = offline::OptSchedule<f64>;
/// Layered-network parameters over `f64`.
pub type NetworkConfig64 = stochastic::NetworkConfig<f64>;
/// Stochastic simulation report over `f64`.
pub type StochasticReport64 = stochastic::StochasticReport<f64>;
