use nalgebra::{SMatrix, SVector};

use crate::so3::{Mat3, Vec3};

pub const STATE_DIM: usize = 9;
pub type Mat9 = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type Vec9 = SVector<f64, STATE_DIM>;

/// Relative tolerance for symmetry and the PSD eigenvalue floor.
pub const HEALTH_TOL: f64 = 1e-9;

/// 3-state groups of the error state, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Position = 0,
    Velocity = 1,
    Attitude = 2,
}

impl Block {
    fn offset(self) -> usize {
        3 * self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum CovarianceDefect {
    #[error("covariance has non-finite entries")]
    NonFinite,
    #[error("covariance asymmetric: relative defect {0:e}")]
    Asymmetric(f64),
    #[error("covariance not PSD: eigenvalue {min_eigenvalue:e} below floor {floor:e}")]
    NotPsd { min_eigenvalue: f64, floor: f64 },
}

/// Symmetric 9x9 covariance of the error state `(x, v, δ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Covariance(Mat9);

impl Covariance {
    pub fn zeros() -> Self {
        Covariance(Mat9::zeros())
    }

    pub fn from_matrix(m: Mat9) -> Self {
        Covariance(m)
    }

    /// Block-diagonal covariance from per-axis variances.
    pub fn from_variances(position: Vec3, velocity: Vec3, attitude: Vec3) -> Self {
        let mut m = Mat9::zeros();
        for i in 0..3 {
            m[(i, i)] = position[i];
            m[(3 + i, 3 + i)] = velocity[i];
            m[(6 + i, 6 + i)] = attitude[i];
        }
        Covariance(m)
    }

    pub fn matrix(&self) -> &Mat9 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat9 {
        self.0
    }

    pub fn block(&self, row: Block, col: Block) -> Mat3 {
        self.0.fixed_view::<3, 3>(row.offset(), col.offset()).into_owned()
    }

    /// Writes `m` at `(row, col)` and `mᵀ` at `(col, row)`.
    pub fn set_block(&mut self, row: Block, col: Block, m: &Mat3) {
        self.0.fixed_view_mut::<3, 3>(row.offset(), col.offset()).copy_from(m);
        if row != col {
            self.0
                .fixed_view_mut::<3, 3>(col.offset(), row.offset())
                .copy_from(&m.transpose());
        }
    }

    pub fn xx(&self) -> Mat3 {
        self.block(Block::Position, Block::Position)
    }
    pub fn xv(&self) -> Mat3 {
        self.block(Block::Position, Block::Velocity)
    }
    pub fn xd(&self) -> Mat3 {
        self.block(Block::Position, Block::Attitude)
    }
    pub fn vv(&self) -> Mat3 {
        self.block(Block::Velocity, Block::Velocity)
    }
    pub fn vd(&self) -> Mat3 {
        self.block(Block::Velocity, Block::Attitude)
    }
    pub fn dd(&self) -> Mat3 {
        self.block(Block::Attitude, Block::Attitude)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Square roots of the diagonal (negative entries reported as 0).
    pub fn std_devs(&self) -> [f64; STATE_DIM] {
        std::array::from_fn(|i| self.0[(i, i)].max(0.0).sqrt())
    }

    pub fn symmetrize(&mut self) {
        self.0 = (self.0 + self.0.transpose()) * 0.5;
    }

    /// `max|Σ − Σᵀ| / max|Σ|`, zero for the zero matrix.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.0.amax();
        if scale == 0.0 {
            return 0.0;
        }
        (self.0 - self.0.transpose()).amax() / scale
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.0 + self.0.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    /// Checks finiteness, symmetry, and `λ_min ≥ −HEALTH_TOL · tr(Σ)`.
    ///
    /// The eigenvalue floor is tested with a Cholesky factorization of the
    /// shifted matrix; the eigen-decomposition only runs to report a failure.
    pub fn check_health(&self) -> Result<(), CovarianceDefect> {
        if !self.0.iter().all(|x| x.is_finite()) {
            return Err(CovarianceDefect::NonFinite);
        }
        let asym = self.asymmetry();
        if asym > HEALTH_TOL {
            return Err(CovarianceDefect::Asymmetric(asym));
        }
        let floor = HEALTH_TOL * self.trace().abs();
        let shifted = (self.0 + self.0.transpose()) * 0.5 + Mat9::identity() * floor;
        if shifted.cholesky().is_none() {
            let min_eigenvalue = self.min_eigenvalue();
            if min_eigenvalue < -floor {
                return Err(CovarianceDefect::NotPsd {
                    min_eigenvalue,
                    floor: -floor,
                });
            }
        }
        Ok(())
    }
}
