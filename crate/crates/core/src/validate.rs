//! Self-checks comparing the structured filter and selector against dense 9×9 arithmetic.
//!
//! Each check draws random well-conditioned covariances from a fixed seed and
//! reports the worst relative error it saw.

use std::fmt;

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ekf::{covariance_update, predict, Covariance, FilterParams, Mat9, StateEstimate, Vec9};
use crate::select::{score_anchor, select_anchor, SelectionPolicy};
use crate::sim::{Anchor, ImuSample, NoiseParams};
use crate::so3::{rotvec_to_rotation, skew, Mat3, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub trials: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} trials={:<5} worst={:.3e} tol={:.0e}",
            if self.passed() { "ok  " } else { "FAIL" },
            self.name,
            self.trials,
            self.worst,
            self.tolerance
        )
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_vec3(rng: &mut impl Rng, scale: f64) -> Vec3 {
    Vec3::new(normal(rng), normal(rng), normal(rng)) * scale
}

/// `A Aᵀ + εI` with `A` Gaussian, so all blocks are dense and asymmetric.
pub fn random_covariance(rng: &mut impl Rng) -> Covariance {
    let a = Mat9::from_fn(|_, _| normal(rng));
    Covariance::from_matrix(a * a.transpose() / 9.0 + Mat9::identity() * 1e-3)
}

fn rel_err(a: &Mat9, b: &Mat9) -> f64 {
    (a - b).abs().max() / b.abs().max().max(1e-300)
}

/// Full transition matrix and process noise, written out densely.
pub fn dense_transition(attitude: &Mat3, imu: &ImuSample, dt: f64, noise: &NoiseParams) -> (Mat9, Mat9) {
    let mut f = Mat9::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Mat3::identity() * dt));
    f.fixed_view_mut::<3, 3>(3, 6)
        .copy_from(&(-attitude * skew(&imu.specific_force) * dt));
    f.fixed_view_mut::<3, 3>(6, 6)
        .copy_from(&(Mat3::identity() - skew(&imu.angular_rate) * dt));
    let mut q = Mat9::zeros();
    for i in 3..6 {
        q[(i, i)] = noise.sigma_alpha.powi(2) * dt * dt;
    }
    for i in 6..9 {
        q[(i, i)] = noise.sigma_gamma.powi(2) * dt * dt;
    }
    (f, q)
}

fn range_row(e: &Vec3) -> SMatrix<f64, 1, 9> {
    let mut h = SMatrix::<f64, 1, 9>::zeros();
    h.fixed_columns_mut::<3>(0).copy_from(&e.transpose());
    h
}

/// Joseph-form scalar update.
pub fn dense_joseph(p: &Mat9, e: &Vec3, r: f64) -> Mat9 {
    let h = range_row(e);
    let s = (h * p * h.transpose())[(0, 0)] + r;
    let k: Vec9 = p * h.transpose() / s;
    let a = Mat9::identity() - k * h;
    a * p * a.transpose() + k * k.transpose() * r
}

fn dense_trace_after(p: &Mat9, e: &Vec3, r: f64) -> f64 {
    let h = range_row(e);
    let s = (h * p * h.transpose())[(0, 0)] + r;
    let u: SVector<f64, 9> = p * h.transpose();
    (p - u * u.transpose() / s).trace()
}

fn unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = random_vec3(rng, 1.0);
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

fn check_score(rng: &mut ChaCha8Rng, trials: usize) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let cov = random_covariance(rng);
        let x = random_vec3(rng, 2.0);
        let anchor = Anchor::new(1, 0.0, 0.0, 0.0);
        let anchor = Anchor {
            position: x + unit(rng) * (0.5 + 4.0 * rng.random::<f64>()),
            ..anchor
        };
        let r = 10f64.powf(rng.random_range(-4.0..0.0));
        let score = score_anchor(&cov, &x, &anchor, r).expect("anchor is away from x");
        let e = (x - anchor.position).normalize();
        let dense = dense_trace_after(cov.matrix(), &e, r) - cov.trace();
        worst = worst.max((score.trace_delta - dense).abs() / dense.abs().max(1e-300));
    }
    CheckResult {
        name: "score vs dense trace change",
        trials,
        worst,
        tolerance: 1e-9,
    }
}

fn check_greedy(rng: &mut ChaCha8Rng, trials: usize) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let cov = random_covariance(rng);
        let x = random_vec3(rng, 1.0);
        let anchors: Vec<Anchor> = (1..=5)
            .map(|id| {
                let p = x + unit(rng) * (0.5 + 4.0 * rng.random::<f64>());
                Anchor::new(id, p.x, p.y, p.z)
            })
            .collect();
        let r = 0.01;
        let chosen = select_anchor(&cov, &x, &anchors, r, &SelectionPolicy::Greedy, 0).expect("anchors are valid");
        let traces: Vec<f64> = anchors
            .iter()
            .map(|a| {
                let e = (x - a.position).normalize();
                covariance_update(&cov, &e, r).expect("positive variance").0.trace()
            })
            .collect();
        let best = traces.iter().copied().fold(f64::INFINITY, f64::min);
        let idx = anchors.iter().position(|a| a.id == chosen).unwrap();
        worst = worst.max((traces[idx] - best) / cov.trace());
    }
    CheckResult {
        name: "greedy picks the best anchor",
        trials,
        worst,
        tolerance: 1e-12,
    }
}

fn check_predict(rng: &mut ChaCha8Rng, trials: usize) -> CheckResult {
    let mut worst = 0.0f64;
    let params = FilterParams::default();
    for _ in 0..trials {
        let cov = random_covariance(rng);
        let reference = rotvec_to_rotation(&random_vec3(rng, 1.0));
        let state = StateEstimate::new(random_vec3(rng, 1.0), random_vec3(rng, 1.0), reference);
        let imu = ImuSample {
            t: 0.0,
            specific_force: random_vec3(rng, 5.0) + Vec3::new(0.0, 0.0, 9.81),
            angular_rate: random_vec3(rng, 1.0),
        };
        let dt = 10f64.powf(rng.random_range(-3.5..-1.0));
        let (_, next) = predict(&state, &cov, &imu, dt, &params).expect("finite input");
        let (f, q) = dense_transition(reference.matrix(), &imu, dt, &params.noise);
        let dense = f * cov.matrix() * f.transpose() + q;
        worst = worst.max(rel_err(next.matrix(), &dense));
    }
    CheckResult {
        name: "predict vs dense F P Fᵀ + Q",
        trials,
        worst,
        tolerance: 1e-12,
    }
}

fn check_update(rng: &mut ChaCha8Rng, trials: usize) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let cov = random_covariance(rng);
        let e = unit(rng);
        let r = 10f64.powf(rng.random_range(-4.0..0.0));
        let (next, _, _) = covariance_update(&cov, &e, r).expect("positive variance");
        worst = worst.max(rel_err(next.matrix(), &dense_joseph(cov.matrix(), &e, r)));
    }
    CheckResult {
        name: "update vs Joseph form",
        trials,
        worst,
        tolerance: 1e-9,
    }
}

/// Runs every check with a fixed seed.
pub fn run_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        check_score(&mut rng, 1000),
        check_greedy(&mut rng, 100),
        check_predict(&mut rng, 200),
        check_update(&mut rng, 200),
    ]
}
