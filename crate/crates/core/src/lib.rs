//! Simulation and closed-form analysis of finite-buffer LCFS status-update
//! queues, measuring peak age of information and the error of
//! reconstructing a Wiener trajectory from the delivered samples.
//!
//! - [`stochastic`]: distributions and reproducible random streams
//! - [`des`]: the event-driven queue simulator
//! - [`policies`]: Keep-Old, Keep-Fresh and the inter-arrival-aware rules
//! - [`metrics`]: peak age and reconstruction error of a delivery trace
//! - [`analytic`]: closed forms and the heavy-traffic invariant measure
//! - [`wiener`]: path sampling and Monte Carlo reconstruction error
//! - [`experiment`]: sweeps, replications and CSV output

// `!(x > 0.0)` is used on purpose so NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod des;
pub mod experiment;
pub mod metrics;
pub mod par;
pub mod policies;
pub mod stochastic;
pub mod wiener;
