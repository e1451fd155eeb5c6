//! Ground-truth trajectories and synthetic IMU / range measurements.

mod sensors;
mod stream;
mod trajectory;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::so3::{Rotation, Vec3};

pub use sensors::{draw_range_noise, range_from_noise, synth_imu, synth_range, NoiseStreams};
pub use stream::write_streams;
pub use trajectory::{generate_trajectory, Segment, TrajectoryProfile};

/// Magnitude of gravitational acceleration, m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Gravity in the z-up world frame.
pub fn gravity() -> Vec3 {
    Vec3::new(0.0, 0.0, -STANDARD_GRAVITY)
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("velocity jumps by {jump:.6} m/s at t = {t:.3} s (segment {index})")]
    DiscontinuousVelocity { index: usize, t: f64, jump: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorId(pub u32);

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A ranging radio at a fixed, known world position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub id: AnchorId,
    pub position: Vec3,
}

impl Anchor {
    pub fn new(id: u32, x: f64, y: f64, z: f64) -> Self {
        Anchor {
            id: AnchorId(id),
            position: Vec3::new(x, y, z),
        }
    }
}

/// Per-axis standard deviations of the sensor noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Accelerometer, m/s².
    pub sigma_alpha: f64,
    /// Rate gyro, rad/s.
    pub sigma_gamma: f64,
    /// Range, m.
    pub sigma_rho: f64,
}

impl NoiseParams {
    pub fn zero() -> Self {
        NoiseParams {
            sigma_alpha: 0.0,
            sigma_gamma: 0.0,
            sigma_rho: 0.0,
        }
    }

    /// Range noise variance `r`, m².
    pub fn range_variance(&self) -> f64 {
        self.sigma_rho * self.sigma_rho
    }

    pub fn is_valid(&self) -> bool {
        [self.sigma_alpha, self.sigma_gamma, self.sigma_rho]
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0)
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            sigma_alpha: 0.5,
            sigma_gamma: 0.01,
            sigma_rho: 0.1,
        }
    }
}

/// True rigid-body state at one instant.
///
/// `acceleration` and `angular_velocity` are held constant over the step that
/// starts at `t`, so integrating them exactly reproduces the next sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthState {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub attitude: Rotation,
    pub angular_velocity: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force in the body frame, m/s².
    pub specific_force: Vec3,
    /// Body angular rate, rad/s.
    pub angular_rate: Vec3,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.specific_force.iter().all(|x| x.is_finite())
            && self.angular_rate.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeMeasurement {
    pub t: f64,
    pub anchor_id: AnchorId,
    pub range: f64,
}
