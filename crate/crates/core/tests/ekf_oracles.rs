use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rangenav::ekf::{
    composed_attitude, covariance_update, predict, range_update, reset_attitude, Covariance, FilterParams, Mat9,
    RangeEkf, StateEstimate, Vec9,
};
use rangenav::harness::{simulate, Scenario};
use rangenav::sim::{Anchor, AnchorId, ImuSample, NoiseParams, RangeMeasurement};
use rangenav::so3::{rotation_angle_deg, rotvec_to_rotation, skew, Mat3, Rotation, Vec3};

fn gaussian_cov(rng: &mut ChaCha8Rng) -> Covariance {
    let g = Mat9::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    Covariance::from_matrix(g * g.transpose())
}

fn rvec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * s)
}

/// F and Q assembled entry by entry.
fn dense_f_q(r_hat: &Mat3, alpha: &Vec3, gamma: &Vec3, dt: f64, n: &NoiseParams) -> (Mat9, Mat9) {
    let mut a = Mat9::zeros();
    for i in 0..3 {
        a[(i, 3 + i)] = 1.0;
    }
    let b = -r_hat * skew(alpha);
    let c = -skew(gamma);
    for i in 0..3 {
        for j in 0..3 {
            a[(3 + i, 6 + j)] = b[(i, j)];
            a[(6 + i, 6 + j)] = c[(i, j)];
        }
    }
    let f = Mat9::identity() + a * dt;
    let mut q = Mat9::zeros();
    for i in 0..3 {
        q[(3 + i, 3 + i)] = (n.sigma_alpha * dt).powi(2);
        q[(6 + i, 6 + i)] = (n.sigma_gamma * dt).powi(2);
    }
    (f, q)
}

#[test]
fn predict_matches_dense_propagation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = FilterParams::default();
    for _ in 0..200 {
        let cov = gaussian_cov(&mut rng);
        let reference = rotvec_to_rotation(&rvec(&mut rng, 1.0));
        let state = StateEstimate::new(rvec(&mut rng, 1.0), rvec(&mut rng, 1.0), reference);
        let imu = ImuSample {
            t: 0.0,
            specific_force: rvec(&mut rng, 3.0),
            angular_rate: rvec(&mut rng, 0.5),
        };
        let dt = 0.002;
        let (_, next) = predict(&state, &cov, &imu, dt, &params).unwrap();
        let (f, q) = dense_f_q(reference.matrix(), &imu.specific_force, &imu.angular_rate, dt, &params.noise);
        let fpf = f * cov.matrix() * f.transpose();
        let dense = fpf + q;
        let scale = dense.abs().max();
        assert!((next.matrix() - dense).abs().max() <= 1e-12 * scale);
        assert!(next.trace() >= fpf.trace());
    }
}

#[test]
fn predict_examples() {
    let params = FilterParams {
        noise: NoiseParams::zero(),
        ..FilterParams::default()
    };
    let cov = params.initial.covariance();
    let hover = StateEstimate::new(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros(), Rotation::identity());
    let imu = ImuSample {
        t: 0.0,
        specific_force: Vec3::new(0.0, 0.0, 9.81),
        angular_rate: Vec3::zeros(),
    };
    let (s, _) = predict(&hover, &cov, &imu, 0.002, &params).unwrap();
    assert_eq!(s, hover);

    let moving = StateEstimate::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Rotation::identity());
    let free = ImuSample {
        specific_force: Vec3::zeros(),
        ..imu
    };
    let (s, _) = predict(&moving, &cov, &free, 0.1, &params).unwrap();
    assert_abs_diff_eq!(s.position, Vec3::new(0.1, 0.0, -0.04905), epsilon = 1e-12);
    assert_abs_diff_eq!(s.velocity, Vec3::new(1.0, 0.0, -0.981), epsilon = 1e-12);
}

fn joseph(p: &Mat9, e: &Vec3, r: f64) -> Mat9 {
    let mut h = Vec9::zeros();
    h.fixed_rows_mut::<3>(0).copy_from(e);
    let s = (h.transpose() * p * h)[(0, 0)] + r;
    let k = p * h / s;
    let a = Mat9::identity() - k * h.transpose();
    a * p * a.transpose() + k * k.transpose() * r
}

#[test]
fn update_matches_joseph_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let cov = gaussian_cov(&mut rng);
        let e = rvec(&mut rng, 1.0).normalize();
        let r = 0.01;
        let (next, _, _) = covariance_update(&cov, &e, r).unwrap();
        let oracle = joseph(cov.matrix(), &e, r);
        assert!((next.matrix() - oracle).abs().max() <= 1e-9 * oracle.abs().max());
    }
}

#[test]
fn zero_innovation_update_leaves_mean_and_shrinks_trace() {
    let params = FilterParams::default();
    let cov = params.initial.covariance();
    let state = StateEstimate::new(Vec3::new(3.0, 4.0, 0.0), Vec3::zeros(), Rotation::identity());
    let anchor = Anchor::new(1, 0.0, 0.0, 0.0);
    let meas = RangeMeasurement {
        t: 0.0,
        anchor_id: AnchorId(1),
        range: 5.0,
    };
    let (next, post, info) = range_update(&state, &cov, &meas, &anchor, &params).unwrap();
    assert_eq!(info.predicted_range, 5.0);
    assert_eq!(next.position, state.position);
    assert_eq!(next.velocity, state.velocity);
    assert!(post.trace() < cov.trace());
    // block-diagonal prior: only Σ_xx changes
    assert_eq!(post.vv(), cov.vv());
    assert_eq!(post.dd(), cov.dd());
    assert_eq!(post.xv(), Mat3::zeros());
}

#[test]
fn reset_preserves_composed_attitude() {
    let reference = rotvec_to_rotation(&Vec3::new(0.2, -0.1, 0.7));
    let mut state = StateEstimate::new(Vec3::zeros(), Vec3::zeros(), reference);
    state.attitude_error = Vec3::new(0.0, 0.0, 0.01);
    let before = composed_attitude(&state);
    let (after, cov) = reset_attitude(&state, &FilterParams::default().initial.covariance());
    assert_eq!(after.attitude_error, Vec3::zeros());
    assert!(rotation_angle_deg(&before, &after.reference) < 0.01);
    assert!(cov.check_health().is_ok());
    // R_ref rotated by 0.01 rad about body z
    let expected = reference * Rotation::about_z(0.01);
    assert!(rotation_angle_deg(&expected, &after.reference) < 1e-9);
}

#[test]
fn zero_noise_flight_tracks_truth() {
    let scenario = Scenario::bundled().noiseless();
    let mut worst_pos = 0.0f64;
    let mut worst_att = 0.0f64;
    simulate(&scenario, |step| {
        let snap = step.filter.snapshot();
        worst_pos = worst_pos.max((snap.position - step.truth.position).norm());
        worst_att = worst_att.max(rotation_angle_deg(&snap.attitude, &step.truth.attitude));
    })
    .unwrap();
    assert!(worst_pos < 1e-3, "position error {worst_pos}");
    assert!(worst_att < 0.01, "attitude error {worst_att}");
}

#[test]
fn hover_keeps_yaw_variance_with_noise_free_sensors() {
    // Without horizontal specific force the yaw error does not reach velocity,
    // so ranges carry no yaw information.
    let mut scenario = Scenario::bundled().noiseless();
    scenario.filter.noise = Some(NoiseParams::default());
    scenario.filter.perturb_initial_position = false;
    let mut at_hover_start = None;
    let mut at_hover_end = None;
    simulate(&scenario, |step| {
        let t = step.truth.t;
        let yaw_var = step.filter.covariance().dd()[(2, 2)];
        if (t - 1.0).abs() < 1e-9 {
            at_hover_start = Some(yaw_var);
        }
        if (t - 3.0).abs() < 1e-9 {
            at_hover_end = Some(yaw_var);
        }
    })
    .unwrap();
    let ratio = at_hover_end.unwrap() / at_hover_start.unwrap();
    assert!(ratio > 0.9 && ratio <= 1.01, "ratio {ratio}");
}

#[test]
fn coincident_anchor_is_rejected_without_change() {
    let mut ekf = RangeEkf::new(StateEstimate::new(Vec3::zeros(), Vec3::zeros(), Rotation::identity()), FilterParams::default());
    let before = ekf.snapshot();
    let meas = RangeMeasurement {
        t: 0.0,
        anchor_id: AnchorId(1),
        range: 0.0,
    };
    assert!(ekf.range_update(&meas, &Anchor::new(1, 0.0, 0.0, 0.0)).is_err());
    assert_eq!(ekf.snapshot(), before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_stays_psd_through_interleaving(seed in 0u64..10_000, steps in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = FilterParams::default();
        let mut ekf = RangeEkf::new(
            StateEstimate::new(rvec(&mut rng, 1.0), rvec(&mut rng, 0.5), rotvec_to_rotation(&rvec(&mut rng, 0.3))),
            params,
        );
        let anchors = [Anchor::new(1, -3.0, -3.0, 0.0), Anchor::new(2, 3.0, -3.0, 0.0), Anchor::new(3, 0.0, 3.0, 0.0)];
        for k in 0..steps {
            let imu = ImuSample {
                t: k as f64 * 0.002,
                specific_force: Vec3::new(0.0, 0.0, 9.81) + rvec(&mut rng, 1.0),
                angular_rate: rvec(&mut rng, 0.3),
            };
            ekf.predict(&imu, 0.002).unwrap();
            if rng.random_bool(0.3) {
                let a = &anchors[rng.random_range(0..anchors.len())];
                let rho = (ekf.state().position - a.position).norm() + rng.sample::<f64, _>(StandardNormal) * 0.1;
                let meas = RangeMeasurement { t: imu.t, anchor_id: a.id, range: rho.max(0.0) };
                ekf.range_update(&meas, a).unwrap();
            }
            prop_assert!(ekf.covariance().check_health().is_ok());
        }
    }
}
