use serde::{Deserialize, Serialize};

use super::{SimError, TruthState};
use crate::so3::{rotvec_to_rotation, Rotation, Vec3};

const CONTINUITY_TOL: f64 = 1e-9;

/// One piece of a scripted flight. Every kind except `cruise` starts and ends at rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    Hover {
        duration_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        yaw_deg: Option<f64>,
    },
    /// Vertical climb to `height` above the current position's z.
    Takeoff {
        height: f64,
        duration_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        yaw_deg: Option<f64>,
    },
    /// Descent to z = 0, optionally moving horizontally to `to` = [x, y].
    Land {
        duration_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        yaw_deg: Option<f64>,
    },
    /// Straight rest-to-rest move with smooth velocity ramps.
    Line {
        to: [f64; 3],
        duration_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        yaw_deg: Option<f64>,
    },
    /// Straight move at constant velocity; neighbours must match that velocity.
    Cruise {
        to: [f64; 3],
        duration_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        yaw_deg: Option<f64>,
    },
}

impl Segment {
    fn duration(&self) -> f64 {
        match *self {
            Segment::Hover { duration_s, .. }
            | Segment::Takeoff { duration_s, .. }
            | Segment::Land { duration_s, .. }
            | Segment::Line { duration_s, .. }
            | Segment::Cruise { duration_s, .. } => duration_s,
        }
    }

    fn yaw_deg(&self) -> Option<f64> {
        match *self {
            Segment::Hover { yaw_deg, .. }
            | Segment::Takeoff { yaw_deg, .. }
            | Segment::Land { yaw_deg, .. }
            | Segment::Line { yaw_deg, .. }
            | Segment::Cruise { yaw_deg, .. } => yaw_deg,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryProfile {
    #[serde(default)]
    pub start: [f64; 3],
    #[serde(default)]
    pub start_yaw_deg: f64,
    pub segments: Vec<Segment>,
}

impl TrajectoryProfile {
    /// A single hover at `position` lasting `duration_s`.
    pub fn hover(position: [f64; 3], duration_s: f64) -> Self {
        TrajectoryProfile {
            start: position,
            start_yaw_deg: 0.0,
            segments: vec![Segment::Hover {
                duration_s,
                yaw_deg: None,
            }],
        }
    }

    /// Takeoff to 2 m, 2 s hover, 8 s sweep along y in the x = 0 plane, then land at the origin.
    pub fn default_flight() -> Self {
        TrajectoryProfile {
            start: [0.0, 0.0, 0.0],
            start_yaw_deg: 0.0,
            segments: vec![
                Segment::Takeoff {
                    height: 2.0,
                    duration_s: 1.0,
                    yaw_deg: None,
                },
                Segment::Hover {
                    duration_s: 2.0,
                    yaw_deg: None,
                },
                Segment::Line {
                    to: [0.0, 1.5, 2.0],
                    duration_s: 2.0,
                    yaw_deg: None,
                },
                Segment::Line {
                    to: [0.0, -1.5, 2.0],
                    duration_s: 4.0,
                    yaw_deg: None,
                },
                Segment::Line {
                    to: [0.0, 0.0, 2.0],
                    duration_s: 2.0,
                    yaw_deg: None,
                },
                Segment::Land {
                    duration_s: 1.0,
                    to: Some([0.0, 0.0]),
                    yaw_deg: None,
                },
            ],
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    /// Start time of segment `index`.
    pub fn segment_start(&self, index: usize) -> f64 {
        self.segments[..index].iter().map(Segment::duration).sum()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        Compiled::new(self).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shape {
    Smooth,
    Linear,
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    t0: f64,
    duration: f64,
    from: Vec3,
    to: Vec3,
    shape: Shape,
    yaw_from: f64,
    yaw_to: f64,
}

/// Quintic rest-to-rest blend: returns (h, dh/ds).
fn quintic(s: f64) -> (f64, f64) {
    let s = s.clamp(0.0, 1.0);
    let s2 = s * s;
    let s3 = s2 * s;
    (
        s3 * (10.0 - 15.0 * s + 6.0 * s2),
        30.0 * s2 * (1.0 - 2.0 * s + s2),
    )
}

impl Piece {
    fn velocity_at(&self, s: f64) -> Vec3 {
        let delta = self.to - self.from;
        match self.shape {
            Shape::Smooth => delta * (quintic(s).1 / self.duration),
            Shape::Linear => delta / self.duration,
        }
    }

    fn eval(&self, t: f64) -> (Vec3, Vec3, f64) {
        let s = ((t - self.t0) / self.duration).clamp(0.0, 1.0);
        let delta = self.to - self.from;
        let (h, _) = quintic(s);
        let pos = match self.shape {
            Shape::Smooth => self.from + delta * h,
            Shape::Linear => self.from + delta * s,
        };
        let yaw = self.yaw_from + (self.yaw_to - self.yaw_from) * h;
        (pos, self.velocity_at(s), yaw)
    }
}

struct Compiled {
    pieces: Vec<Piece>,
    end: Vec3,
    end_yaw: f64,
    start: Vec3,
    start_yaw: f64,
}

impl Compiled {
    fn new(profile: &TrajectoryProfile) -> Result<Self, SimError> {
        let start = Vec3::from(profile.start);
        let start_yaw = profile.start_yaw_deg.to_radians();
        if !start.iter().all(|x| x.is_finite()) || !start_yaw.is_finite() {
            return Err(SimError::InvalidSegment {
                index: 0,
                reason: "non-finite start pose".into(),
            });
        }
        let mut pieces = Vec::with_capacity(profile.segments.len());
        let mut t0 = 0.0;
        let mut here = start;
        let mut yaw = start_yaw;
        for (index, seg) in profile.segments.iter().enumerate() {
            let duration = seg.duration();
            if !(duration.is_finite() && duration > 0.0) {
                return Err(SimError::InvalidSegment {
                    index,
                    reason: format!("duration must be positive, got {duration}"),
                });
            }
            let (to, shape) = match *seg {
                Segment::Hover { .. } => (here, Shape::Smooth),
                Segment::Takeoff { height, .. } => (here + Vec3::new(0.0, 0.0, height), Shape::Smooth),
                Segment::Land { to, .. } => {
                    let [x, y] = to.unwrap_or([here.x, here.y]);
                    (Vec3::new(x, y, 0.0), Shape::Smooth)
                }
                Segment::Line { to, .. } => (Vec3::from(to), Shape::Smooth),
                Segment::Cruise { to, .. } => (Vec3::from(to), Shape::Linear),
            };
            if !to.iter().all(|x| x.is_finite()) {
                return Err(SimError::InvalidSegment {
                    index,
                    reason: "non-finite target".into(),
                });
            }
            let yaw_to = seg.yaw_deg().map_or(yaw, f64::to_radians);
            pieces.push(Piece {
                t0,
                duration,
                from: here,
                to,
                shape,
                yaw_from: yaw,
                yaw_to,
            });
            t0 += duration;
            here = to;
            yaw = yaw_to;
        }

        // velocity must be continuous, starting and ending at rest
        let mut prev_end = Vec3::zeros();
        for (index, piece) in pieces.iter().enumerate() {
            let jump = (piece.velocity_at(0.0) - prev_end).norm();
            if jump > CONTINUITY_TOL {
                return Err(SimError::DiscontinuousVelocity {
                    index,
                    t: piece.t0,
                    jump,
                });
            }
            prev_end = piece.velocity_at(1.0);
        }
        if prev_end.norm() > CONTINUITY_TOL {
            return Err(SimError::DiscontinuousVelocity {
                index: pieces.len().saturating_sub(1),
                t: t0,
                jump: prev_end.norm(),
            });
        }

        Ok(Compiled {
            pieces,
            end: here,
            end_yaw: yaw,
            start,
            start_yaw,
        })
    }

    /// Position, velocity, and yaw at time `t`; the flight holds its final pose afterwards.
    fn eval(&self, t: f64) -> (Vec3, Vec3, f64) {
        if t <= 0.0 || self.pieces.is_empty() {
            return match self.pieces.first() {
                Some(p) => p.eval(0.0),
                None => (self.start, Vec3::zeros(), self.start_yaw),
            };
        }
        let idx = self.pieces.partition_point(|p| p.t0 + p.duration <= t);
        match self.pieces.get(idx) {
            Some(p) => p.eval(t),
            None => (self.end, Vec3::zeros(), self.end_yaw),
        }
    }
}

/// Samples the profile every `dt` seconds over `[0, duration]`.
///
/// Velocity samples are exact. Each sample's acceleration and angular velocity
/// are the averages over the following step, and position and attitude are
/// obtained by integrating those exactly, so a strapdown integrator fed the
/// same quantities reproduces the truth to rounding.
pub fn generate_trajectory(
    profile: &TrajectoryProfile,
    dt: f64,
    duration: f64,
) -> Result<Vec<TruthState>, SimError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::InvalidStep(dt));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(SimError::InvalidStep(duration));
    }
    let compiled = Compiled::new(profile)?;
    let n = (duration / dt).round() as usize;

    let mut out = Vec::with_capacity(n + 1);
    let (mut position, _, yaw0) = compiled.eval(0.0);
    let mut attitude = Rotation::about_z(yaw0);
    for k in 0..=n {
        let t = k as f64 * dt;
        let (_, velocity, yaw) = compiled.eval(t);
        let (_, next_velocity, next_yaw) = compiled.eval(t + dt);
        let acceleration = (next_velocity - velocity) / dt;
        let angular_velocity = Vec3::new(0.0, 0.0, (next_yaw - yaw) / dt);
        out.push(TruthState {
            t,
            position,
            velocity,
            acceleration,
            attitude,
            angular_velocity,
        });
        position += velocity * dt + acceleration * (0.5 * dt * dt);
        attitude = attitude * rotvec_to_rotation(&(angular_velocity * dt));
    }
    Ok(out)
}
