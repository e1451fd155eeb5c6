//! Position, velocity and attitude estimation from an IMU plus one range
//! measurement per ranging tick, with the anchor for each tick chosen to
//! maximize the drop in covariance trace.
//!
//! - [`so3`]: rotation helpers.
//! - [`sim`]: truth trajectories and synthetic sensors.
//! - [`ekf`]: the error-state filter.
//! - [`select`]: anchor scoring and selection policies.
//! - [`harness`]: scenarios, single runs and Monte Carlo ensembles.
//! - [`validate`]: dense-arithmetic cross-checks.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ekf;
pub mod harness;
pub mod select;
pub mod sim;
pub mod so3;
pub mod validate;
