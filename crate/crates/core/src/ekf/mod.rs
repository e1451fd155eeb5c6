//! Nine-state error-state EKF driven by IMU samples and scalar range measurements.
//!
//! The stochastic state is `(x, v, δ)`: position, velocity, and a small
//! body-frame attitude error about a reference rotation, so the attitude
//! estimate is `R_ref (I + ⌊δ⌋×)`. Angular velocity is not estimated; the gyro
//! output drives the reference attitude directly. After every measurement
//! update `δ` is folded into `R_ref` and zeroed, with the covariance carried
//! through the reset Jacobian.

mod covariance;

use serde::{Deserialize, Serialize};

use crate::sim::{gravity, Anchor, AnchorId, ImuSample, NoiseParams, RangeMeasurement};
use crate::so3::{rotvec_to_rotation, skew, Mat3, Rotation, Vec3};

pub use covariance::{Block, Covariance, CovarianceDefect, Mat9, Vec9, HEALTH_TOL, STATE_DIM};

/// Range updates are refused when the estimate is this close to the anchor, m.
pub const MIN_ANCHOR_DISTANCE: f64 = 1e-6;

/// Attitude errors larger than this (rad) are outside the small-angle regime.
pub const LARGE_RESET_ANGLE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EkfError {
    #[error("IMU sample at t = {0} has non-finite values")]
    NonFiniteImu(f64),
    #[error("prediction step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("estimate within {distance:e} m of anchor {anchor}; range direction undefined")]
    AnchorCoincident { anchor: AnchorId, distance: f64 },
    #[error("innovation variance for anchor {anchor} is {variance:e}")]
    DegenerateInnovation { anchor: AnchorId, variance: f64 },
    #[error("anchor {anchor} innovation {normalized:.2} sigma exceeds gate")]
    Gated { anchor: AnchorId, normalized: f64 },
    #[error("range measurement is for anchor {measured}, not {expected}")]
    AnchorMismatch { measured: AnchorId, expected: AnchorId },
}

/// One-sigma initial uncertainties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSigmas {
    pub position: f64,
    pub velocity: f64,
    pub roll_pitch: f64,
    pub yaw: f64,
}

impl Default for InitialSigmas {
    fn default() -> Self {
        InitialSigmas {
            position: 0.5,
            velocity: 0.1,
            roll_pitch: 0.1,
            yaw: 1.0,
        }
    }
}

impl InitialSigmas {
    pub fn covariance(&self) -> Covariance {
        let sq = |s: f64| s * s;
        Covariance::from_variances(
            Vec3::repeat(sq(self.position)),
            Vec3::repeat(sq(self.velocity)),
            Vec3::new(sq(self.roll_pitch), sq(self.roll_pitch), sq(self.yaw)),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams {
    /// Assumed sensor noise; accelerometer and gyro terms become process noise,
    /// `sigma_rho²` is the range variance `r`.
    pub noise: NoiseParams,
    pub initial: InitialSigmas,
    pub gravity: Vec3,
    /// Reject range updates whose innovation exceeds this many sigmas. Off when `None`.
    pub gate_sigmas: Option<f64>,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            noise: NoiseParams::default(),
            initial: InitialSigmas::default(),
            gravity: gravity(),
            gate_sigmas: None,
        }
    }
}

impl FilterParams {
    pub fn range_variance(&self) -> f64 {
        self.noise.range_variance()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateEstimate {
    pub position: Vec3,
    pub velocity: Vec3,
    pub reference: Rotation,
    /// Zero outside of an update; see [`reset_attitude`].
    pub attitude_error: Vec3,
}

impl StateEstimate {
    pub fn new(position: Vec3, velocity: Vec3, reference: Rotation) -> Self {
        StateEstimate {
            position,
            velocity,
            reference,
            attitude_error: Vec3::zeros(),
        }
    }
}

/// `R_ref (I + ⌊δ⌋×)`, projected back onto SO(3). Returns `R_ref` exactly when `δ = 0`.
pub fn composed_attitude(state: &StateEstimate) -> Rotation {
    if state.attitude_error == Vec3::zeros() {
        return state.reference;
    }
    let m = state.reference.matrix() * (Mat3::identity() + skew(&state.attitude_error));
    Rotation::orthonormalize(&m)
}

type Blocks = [[Mat3; 3]; 3];

fn blocks(cov: &Covariance) -> Blocks {
    use Block::*;
    let b = |r, c| cov.block(r, c);
    [
        [b(Position, Position), b(Position, Velocity), b(Position, Attitude)],
        [b(Velocity, Position), b(Velocity, Velocity), b(Velocity, Attitude)],
        [b(Attitude, Position), b(Attitude, Velocity), b(Attitude, Attitude)],
    ]
}

fn from_blocks(p: &Blocks) -> Covariance {
    let mut m = Mat9::zeros();
    for (i, row) in p.iter().enumerate() {
        for (j, blk) in row.iter().enumerate() {
            m.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(blk);
        }
    }
    Covariance::from_matrix(m)
}

/// Propagates mean and covariance over one IMU interval of length `dt`.
///
/// The mean uses constant-acceleration kinematics and the exponential map for
/// attitude. The covariance uses the first-order transition
/// `F = I + A dt` with `∂ẋ/∂v = I`, `∂v̇/∂δ = −R̂⌊α⌋×`, `∂δ̇/∂δ = −⌊γ⌋×`,
/// and adds `σ_α² dt²` to the velocity block and `σ_γ² dt²` to the attitude
/// block (one independent noise draw per IMU sample).
pub fn predict(
    state: &StateEstimate,
    cov: &Covariance,
    imu: &ImuSample,
    dt: f64,
    params: &FilterParams,
) -> Result<(StateEstimate, Covariance), EkfError> {
    if !imu.is_finite() {
        return Err(EkfError::NonFiniteImu(imu.t));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(EkfError::InvalidStep(dt));
    }

    let attitude = composed_attitude(state);
    let accel = attitude * imu.specific_force + params.gravity;
    let next = StateEstimate {
        position: state.position + state.velocity * dt + accel * (0.5 * dt * dt),
        velocity: state.velocity + accel * dt,
        reference: state.reference * rotvec_to_rotation(&(imu.angular_rate * dt)),
        attitude_error: state.attitude_error,
    };

    // F = [[I, I dt, 0], [0, I, B], [0, 0, C]]
    let b = -(attitude.matrix() * skew(&imu.specific_force)) * dt;
    let c = Mat3::identity() - skew(&imu.angular_rate) * dt;
    let p = blocks(cov);

    // M = F P
    let mut m: Blocks = [[Mat3::zeros(); 3]; 3];
    for j in 0..3 {
        m[0][j] = p[0][j] + p[1][j] * dt;
        m[1][j] = p[1][j] + b * p[2][j];
        m[2][j] = c * p[2][j];
    }
    // F P Fᵀ = M Fᵀ
    let (bt, ct) = (b.transpose(), c.transpose());
    let mut out: Blocks = [[Mat3::zeros(); 3]; 3];
    for i in 0..3 {
        out[i][0] = m[i][0] + m[i][1] * dt;
        out[i][1] = m[i][1] + m[i][2] * bt;
        out[i][2] = m[i][2] * ct;
    }

    // R diag(σ²) Rᵀ = σ² I for isotropic accelerometer noise
    let q_vel = params.noise.sigma_alpha.powi(2) * dt * dt;
    let q_att = params.noise.sigma_gamma.powi(2) * dt * dt;
    out[1][1] += Mat3::identity() * q_vel;
    out[2][2] += Mat3::identity() * q_att;

    let mut next_cov = from_blocks(&out);
    next_cov.symmetrize();
    Ok((next, next_cov))
}

/// Unit vector from `anchor` towards `position`, and the distance.
pub fn range_direction(position: &Vec3, anchor: &Anchor) -> Result<(Vec3, f64), EkfError> {
    let d = position - anchor.position;
    let distance = d.norm();
    if !(distance > MIN_ANCHOR_DISTANCE) {
        return Err(EkfError::AnchorCoincident {
            anchor: anchor.id,
            distance,
        });
    }
    Ok((d / distance, distance))
}

/// `Σ Hᵀ` for `H = [eᵀ, 0, 0]`: the stacked columns `Σ_xx e`, `Σ_vx e`, `Σ_δx e`.
pub fn cross_column(cov: &Covariance, e: &Vec3) -> Vec9 {
    let mut u = Vec9::zeros();
    u.fixed_rows_mut::<3>(0).copy_from(&(cov.xx() * e));
    u.fixed_rows_mut::<3>(3).copy_from(&(cov.xv().transpose() * e));
    u.fixed_rows_mut::<3>(6).copy_from(&(cov.xd().transpose() * e));
    u
}

/// Scalar Kalman covariance update for a range along `e` with variance `r`.
///
/// Returns `(I − K H) Σ` (symmetrized), the gain `K`, and the innovation
/// variance `H Σ Hᵀ + r`.
pub fn covariance_update(cov: &Covariance, e: &Vec3, r: f64) -> Option<(Covariance, Vec9, f64)> {
    let u = cross_column(cov, e);
    let s = e.dot(&u.fixed_rows::<3>(0)) + r;
    if !(s > 0.0 && s.is_finite()) {
        return None;
    }
    let gain = u / s;
    // H Σ = [eᵀΣ_xx, eᵀΣ_xv, eᵀΣ_xδ]
    let h_sigma = cov.matrix().fixed_rows::<3>(0).tr_mul(e);
    let mut next = Covariance::from_matrix(cov.matrix() - gain * h_sigma.transpose());
    next.symmetrize();
    Some((next, gain, s))
}

/// Diagnostics from one accepted range update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateInfo {
    pub predicted_range: f64,
    pub innovation: f64,
    pub innovation_variance: f64,
}

/// Scalar EKF update with one range to `anchor`, followed by [`reset_attitude`].
pub fn range_update(
    state: &StateEstimate,
    cov: &Covariance,
    meas: &RangeMeasurement,
    anchor: &Anchor,
    params: &FilterParams,
) -> Result<(StateEstimate, Covariance, UpdateInfo), EkfError> {
    if meas.anchor_id != anchor.id {
        return Err(EkfError::AnchorMismatch {
            measured: meas.anchor_id,
            expected: anchor.id,
        });
    }
    let (e, predicted_range) = range_direction(&state.position, anchor)?;
    let r = params.range_variance();
    let (next_cov, gain, s) = covariance_update(cov, &e, r).ok_or(EkfError::DegenerateInnovation {
        anchor: anchor.id,
        variance: e.dot(&(cov.xx() * e)) + r,
    })?;
    let innovation = meas.range - predicted_range;
    if let Some(gate) = params.gate_sigmas {
        let normalized = innovation.abs() / s.sqrt();
        if normalized > gate {
            return Err(EkfError::Gated {
                anchor: anchor.id,
                normalized,
            });
        }
    }

    let dx = gain * innovation;
    let corrected = StateEstimate {
        position: state.position + dx.fixed_rows::<3>(0),
        velocity: state.velocity + dx.fixed_rows::<3>(3),
        reference: state.reference,
        attitude_error: state.attitude_error + dx.fixed_rows::<3>(6),
    };
    let (state, cov) = reset_attitude(&corrected, &next_cov);
    Ok((
        state,
        cov,
        UpdateInfo {
            predicted_range,
            innovation,
            innovation_variance: s,
        },
    ))
}

/// First-order Jacobian of the attitude-error reset, `I − ½⌊δ⌋×`.
pub fn reset_jacobian(delta: &Vec3) -> Mat3 {
    Mat3::identity() - skew(delta) * 0.5
}

/// Folds `δ` into the reference attitude and zeroes it.
///
/// The new error is `log(exp(−δ̂) exp(δ))`, which to first order is
/// `(I − ½⌊δ̂⌋×)(δ − δ̂)`, so the attitude rows and columns of `Σ` are
/// transformed by that Jacobian.
pub fn reset_attitude(state: &StateEstimate, cov: &Covariance) -> (StateEstimate, Covariance) {
    let delta = state.attitude_error;
    if delta == Vec3::zeros() {
        return (*state, *cov);
    }
    if delta.norm() > LARGE_RESET_ANGLE {
        log::warn!("attitude reset of {:.3} rad exceeds small-angle regime", delta.norm());
    }
    let g = reset_jacobian(&delta);
    let mut next = *cov;
    next.set_block(Block::Position, Block::Attitude, &(cov.xd() * g.transpose()));
    next.set_block(Block::Velocity, Block::Attitude, &(cov.vd() * g.transpose()));
    next.set_block(Block::Attitude, Block::Attitude, &(g * cov.dd() * g.transpose()));
    next.symmetrize();
    let reset = StateEstimate {
        reference: state.reference * rotvec_to_rotation(&delta),
        attitude_error: Vec3::zeros(),
        ..*state
    };
    (reset, next)
}

/// Logging view of the filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Rotation,
    pub covariance: Covariance,
}

/// Owns one filter's state, covariance, and parameters.
#[derive(Clone, Debug)]
pub struct RangeEkf {
    state: StateEstimate,
    cov: Covariance,
    params: FilterParams,
}

impl RangeEkf {
    /// Starts at `state` with the covariance given by `params.initial`.
    pub fn new(state: StateEstimate, params: FilterParams) -> Self {
        let cov = params.initial.covariance();
        Self::with_covariance(state, cov, params)
    }

    pub fn with_covariance(state: StateEstimate, cov: Covariance, params: FilterParams) -> Self {
        RangeEkf { state, cov, params }
    }

    pub fn state(&self) -> &StateEstimate {
        &self.state
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            position: self.state.position,
            velocity: self.state.velocity,
            attitude: composed_attitude(&self.state),
            covariance: self.cov,
        }
    }

    pub fn predict(&mut self, imu: &ImuSample, dt: f64) -> Result<(), EkfError> {
        let (state, cov) = predict(&self.state, &self.cov, imu, dt, &self.params)?;
        self.state = state;
        self.cov = cov;
        Ok(())
    }

    /// On error the filter is left untouched.
    pub fn range_update(&mut self, meas: &RangeMeasurement, anchor: &Anchor) -> Result<UpdateInfo, EkfError> {
        let (state, cov, info) = range_update(&self.state, &self.cov, meas, anchor, &self.params)?;
        self.state = state;
        self.cov = cov;
        Ok(info)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quiet_params() -> FilterParams {
        FilterParams {
            noise: NoiseParams::zero(),
            ..FilterParams::default()
        }
    }

    fn imu(specific_force: Vec3, angular_rate: Vec3) -> ImuSample {
        ImuSample {
            t: 0.0,
            specific_force,
            angular_rate,
        }
    }

    #[test]
    fn hover_keeps_mean() {
        let s = StateEstimate::new(Vec3::new(1.0, 2.0, 3.0), Vec3::zeros(), Rotation::identity());
        let cov = InitialSigmas::default().covariance();
        let (next, _) = predict(&s, &cov, &imu(Vec3::new(0.0, 0.0, 9.81), Vec3::zeros()), 0.002, &quiet_params()).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn free_fall_kinematics() {
        let s = StateEstimate::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Rotation::identity());
        let cov = Covariance::zeros();
        let (next, _) = predict(&s, &cov, &imu(Vec3::zeros(), Vec3::zeros()), 0.1, &quiet_params()).unwrap();
        assert_abs_diff_eq!(next.position, Vec3::new(0.1, 0.0, -0.04905), epsilon = 1e-12);
        assert_abs_diff_eq!(next.velocity, Vec3::new(1.0, 0.0, -0.981), epsilon = 1e-12);
    }

    #[test]
    fn predict_rejects_bad_input() {
        let s = StateEstimate::new(Vec3::zeros(), Vec3::zeros(), Rotation::identity());
        let cov = Covariance::zeros();
        let p = quiet_params();
        let nan = imu(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::zeros());
        assert!(matches!(predict(&s, &cov, &nan, 0.01, &p), Err(EkfError::NonFiniteImu(_))));
        let ok = imu(Vec3::zeros(), Vec3::zeros());
        assert_eq!(predict(&s, &cov, &ok, 0.0, &p), Err(EkfError::InvalidStep(0.0)));
        assert_eq!(predict(&s, &cov, &ok, -1.0, &p), Err(EkfError::InvalidStep(-1.0)));
    }

    #[test]
    fn gyro_rotates_reference() {
        let s = StateEstimate::new(Vec3::zeros(), Vec3::zeros(), Rotation::identity());
        let (next, _) = predict(
            &s,
            &Covariance::zeros(),
            &imu(Vec3::new(0.0, 0.0, 9.81), Vec3::new(0.0, 0.0, 1.0)),
            0.5,
            &quiet_params(),
        )
        .unwrap();
        assert_abs_diff_eq!(next.reference.yaw_pitch_roll().0, 0.5, epsilon = 1e-12);
        assert_eq!(next.attitude_error, Vec3::zeros());
    }

    #[test]
    fn zero_innovation_only_shrinks_covariance() {
        let anchor = Anchor::new(1, 0.0, 0.0, 0.0);
        let s = StateEstimate::new(Vec3::new(3.0, 4.0, 0.0), Vec3::zeros(), Rotation::identity());
        let cov = InitialSigmas::default().covariance();
        let (e, rho_hat) = range_direction(&s.position, &anchor).unwrap();
        assert_eq!(rho_hat, 5.0);
        assert_abs_diff_eq!(e, Vec3::new(0.6, 0.8, 0.0), epsilon = 1e-15);
        let meas = RangeMeasurement {
            t: 0.0,
            anchor_id: anchor.id,
            range: 5.0,
        };
        let (next, next_cov, info) = range_update(&s, &cov, &meas, &anchor, &FilterParams::default()).unwrap();
        assert_eq!(info.innovation, 0.0);
        assert_eq!(next, s);
        assert!(next_cov.trace() < cov.trace());
    }

    #[test]
    fn block_diagonal_prior_only_touches_position() {
        let anchor = Anchor::new(2, 1.0, -2.0, 0.0);
        let s = StateEstimate::new(Vec3::new(0.5, 0.5, 2.0), Vec3::new(0.1, 0.2, 0.3), Rotation::identity());
        let cov = InitialSigmas::default().covariance();
        let meas = RangeMeasurement {
            t: 0.0,
            anchor_id: anchor.id,
            range: 3.7,
        };
        let (next, next_cov, _) = range_update(&s, &cov, &meas, &anchor, &FilterParams::default()).unwrap();
        assert_eq!(next.velocity, s.velocity);
        assert_eq!(next.reference, s.reference);
        assert_ne!(next.position, s.position);
        assert_eq!(next_cov.vv(), cov.vv());
        assert_eq!(next_cov.dd(), cov.dd());
        assert_eq!(next_cov.xv(), Mat3::zeros());
        assert_eq!(next_cov.xd(), Mat3::zeros());
    }

    #[test]
    fn coincident_anchor_rejected() {
        let anchor = Anchor::new(3, 1.0, 1.0, 1.0);
        let s = StateEstimate::new(Vec3::new(1.0, 1.0, 1.0), Vec3::zeros(), Rotation::identity());
        let meas = RangeMeasurement {
            t: 0.0,
            anchor_id: anchor.id,
            range: 0.0,
        };
        let cov = InitialSigmas::default().covariance();
        assert!(matches!(
            range_update(&s, &cov, &meas, &anchor, &FilterParams::default()),
            Err(EkfError::AnchorCoincident { .. })
        ));
    }

    #[test]
    fn degenerate_innovation_rejected() {
        let anchor = Anchor::new(3, 0.0, 0.0, 0.0);
        let s = StateEstimate::new(Vec3::new(1.0, 0.0, 0.0), Vec3::zeros(), Rotation::identity());
        let meas = RangeMeasurement {
            t: 0.0,
            anchor_id: anchor.id,
            range: 1.0,
        };
        assert!(matches!(
            range_update(&s, &Covariance::zeros(), &meas, &anchor, &quiet_params()),
            Err(EkfError::DegenerateInnovation { .. })
        ));
    }

    #[test]
    fn gate_rejects_outlier() {
        let anchor = Anchor::new(1, 0.0, 0.0, 0.0);
        let s = StateEstimate::new(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros(), Rotation::identity());
        let cov = InitialSigmas::default().covariance();
        let params = FilterParams {
            gate_sigmas: Some(3.0),
            ..FilterParams::default()
        };
        let meas = RangeMeasurement {
            t: 0.0,
            anchor_id: anchor.id,
            range: 12.0,
        };
        assert!(matches!(
            range_update(&s, &cov, &meas, &anchor, &params),
            Err(EkfError::Gated { .. })
        ));
        let near = RangeMeasurement { range: 2.1, ..meas };
        assert!(range_update(&s, &cov, &near, &anchor, &params).is_ok());
    }

    #[test]
    fn reset_identity_case() {
        let s = StateEstimate::new(Vec3::new(1.0, 0.0, 0.0), Vec3::zeros(), Rotation::about_z(0.3));
        let cov = InitialSigmas::default().covariance();
        assert_eq!(reset_attitude(&s, &cov), (s, cov));
    }

    #[test]
    fn composed_attitude_small_yaw() {
        let mut s = StateEstimate::new(Vec3::zeros(), Vec3::zeros(), Rotation::identity());
        assert_eq!(composed_attitude(&s), s.reference);
        let theta = 1e-3;
        s.attitude_error = Vec3::new(0.0, 0.0, theta);
        let r = composed_attitude(&s);
        assert!(r.is_valid(1e-12));
        let err = crate::so3::rotation_angle_deg(&r, &Rotation::about_z(theta)).to_radians();
        assert!(err < theta * theta);
    }

    #[test]
    fn filter_wrapper_leaves_state_on_error() {
        let anchor = Anchor::new(1, 0.0, 0.0, 0.0);
        let mut f = RangeEkf::new(StateEstimate::new(Vec3::zeros(), Vec3::zeros(), Rotation::identity()), FilterParams::default());
        let before = f.snapshot();
        let meas = RangeMeasurement {
            t: 0.0,
            anchor_id: anchor.id,
            range: 1.0,
        };
        assert!(f.range_update(&meas, &anchor).is_err());
        assert_eq!(f.snapshot(), before);
        let wrong = RangeMeasurement { anchor_id: AnchorId(9), ..meas };
        assert!(matches!(f.range_update(&wrong, &anchor), Err(EkfError::AnchorMismatch { .. })));
    }
}
