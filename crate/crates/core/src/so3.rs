//! Small 3D vector, matrix, and rotation helpers shared by the simulator and the filter.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

/// Three-component real vector (m, m/s, rad, ... depending on context).
pub type Vec3 = Vector3<f64>;
/// Row-major 3x3 real matrix.
pub type Mat3 = Matrix3<f64>;

/// Below this rotation angle the exponential map switches to its Taylor series.
pub const SMALL_ANGLE: f64 = 1e-7;

/// Tolerance used when checking orthonormality and determinant of a [`Rotation`].
pub const ROTATION_TOL: f64 = 1e-9;

/// Skew-symmetric matrix such that `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A proper rotation matrix, mapping body-frame coordinates to the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps `m` after checking `mᵀm = I` and `det(m) = +1` within [`ROTATION_TOL`].
    pub fn from_matrix(m: Mat3) -> Option<Self> {
        let r = Rotation(m);
        r.is_valid(ROTATION_TOL).then_some(r)
    }

    /// Wraps `m` without any check. The caller guarantees `m ∈ SO(3)`.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Projects an arbitrary nonsingular matrix onto the closest rotation (polar decomposition).
    pub fn orthonormalize(m: &Mat3) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            // flip the axis belonging to the smallest singular value
            let mut u = u;
            let k = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(2);
            u.column_mut(k).neg_mut();
            r = u * v_t;
        }
        Rotation(r)
    }

    /// Rotation by `angle` radians about the world z axis.
    pub fn about_z(angle: f64) -> Self {
        rotvec_to_rotation(&Vec3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Same as [`transpose`](Self::transpose).
    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let m = &self.0;
        if !m.iter().all(|x| x.is_finite()) {
            return false;
        }
        let defect = m.transpose() * m - Mat3::identity();
        defect.amax() <= tol && (m.determinant() - 1.0).abs() <= tol
    }

    /// Z-Y-X Euler angles `(yaw, pitch, roll)` in radians.
    pub fn yaw_pitch_roll(&self) -> (f64, f64, f64) {
        let m = &self.0;
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        (yaw, pitch, roll)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Exponential map from a rotation vector (axis times angle, rad) to a rotation matrix.
///
/// Uses the closed-form Rodrigues formula, or its second-order series when the
/// angle is below [`SMALL_ANGLE`].
pub fn rotvec_to_rotation(phi: &Vec3) -> Rotation {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    let k2 = k * k;
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation(Mat3::identity() + k * a + k2 * b)
}

/// Geodesic angle between two rotations, in degrees within `[0, 180]`.
pub fn rotation_angle_deg(ra: &Rotation, rb: &Rotation) -> f64 {
    let rel = ra.0.transpose() * rb.0;
    // atan2 keeps precision near 0 where acos of the trace does not
    let sin_vec = Vec3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]);
    let s = 0.5 * sin_vec.norm();
    let c = 0.5 * (rel.trace() - 1.0);
    s.atan2(c).to_degrees()
}
