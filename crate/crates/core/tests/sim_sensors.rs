use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rangenav::sim::{
    generate_trajectory, synth_imu, synth_range, Anchor, NoiseParams, NoiseStreams, TrajectoryProfile, TruthState,
};
use rangenav::so3::{Rotation, Vec3};

fn at(position: Vec3) -> TruthState {
    TruthState {
        t: 0.0,
        position,
        velocity: Vec3::zeros(),
        acceleration: Vec3::zeros(),
        attitude: Rotation::identity(),
        angular_velocity: Vec3::zeros(),
    }
}

#[test]
fn range_noise_sample_stddev() {
    let noise = NoiseParams {
        sigma_rho: 0.1,
        ..NoiseParams::zero()
    };
    let truth = at(Vec3::new(0.0, 0.0, 2.0));
    let anchor = Anchor::new(1, 3.0, 4.0, 0.0);
    let distance = (truth.position - anchor.position).norm();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 100_000;
    let errs: Vec<f64> = (0..n)
        .map(|_| synth_range(&truth, &anchor, &noise, &mut rng).range - distance)
        .collect();
    let mean = errs.iter().sum::<f64>() / n as f64;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((var.sqrt() - 0.1).abs() < 0.005, "stddev {}", var.sqrt());
    assert!(mean.abs() < 0.002, "mean {mean}");
}

#[test]
fn zero_noise_ranges_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = synth_range(&at(Vec3::new(3.0, 4.0, 0.0)), &Anchor::new(2, 0.0, 0.0, 0.0), &NoiseParams::zero(), &mut rng);
    assert_eq!(m.range, 5.0);
}

#[test]
fn finite_difference_position_matches_velocity() {
    let dt = 0.002;
    let truth = generate_trajectory(&TrajectoryProfile::default_flight(), dt, 12.0).unwrap();
    let mut worst = 0.0f64;
    for w in truth.windows(3) {
        let fd = (w[2].position - w[0].position) / (2.0 * dt);
        worst = worst.max((fd - w[1].velocity).norm());
    }
    // central difference of a quintic: error O(dt²·jerk) plus the held-acceleration step
    assert!(worst < 10.0 * dt, "worst {worst}");
}

#[test]
fn default_flight_shape() {
    let truth = generate_trajectory(&TrajectoryProfile::default_flight(), 0.002, 12.0).unwrap();
    assert_eq!(truth.len(), 6001);
    assert!(truth.iter().all(|s| s.position.x == 0.0));
    let top = truth.iter().map(|s| s.position.z).fold(f64::MIN, f64::max);
    assert_abs_diff_eq!(top, 2.0, epsilon = 1e-9);
    let last = truth.last().unwrap();
    assert_abs_diff_eq!(last.position, Vec3::zeros(), epsilon = 1e-9);
    assert!(truth.iter().all(|s| s.attitude.is_valid(1e-9)));
    let ys: Vec<f64> = truth.iter().map(|s| s.position.y).collect();
    assert_abs_diff_eq!(ys.iter().cloned().fold(f64::MIN, f64::max), 1.5, epsilon = 1e-9);
    assert_abs_diff_eq!(ys.iter().cloned().fold(f64::MAX, f64::min), -1.5, epsilon = 1e-9);
}

#[test]
fn streams_are_reproducible_and_independent() {
    let truth = at(Vec3::new(0.0, 0.0, 2.0));
    let noise = NoiseParams::default();
    let mut a = NoiseStreams::from_seed(9);
    let mut b = NoiseStreams::from_seed(9);
    for _ in 0..100 {
        assert_eq!(synth_imu(&truth, &noise, &mut a.imu), synth_imu(&truth, &noise, &mut b.imu));
    }
    // drawing from the IMU stream does not shift the range stream
    let mut c = NoiseStreams::from_seed(9);
    let anchor = Anchor::new(1, 1.0, 0.0, 0.0);
    assert_eq!(
        synth_range(&truth, &anchor, &noise, &mut a.range),
        synth_range(&truth, &anchor, &noise, &mut c.range)
    );
}

#[test]
fn hover_imu_reads_gravity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let imu = synth_imu(&at(Vec3::new(0.0, 0.0, 2.0)), &NoiseParams::zero(), &mut rng);
    assert_eq!(imu.specific_force, Vec3::new(0.0, 0.0, 9.81));
    assert_eq!(imu.angular_rate, Vec3::zeros());
}
