use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{gravity, Anchor, ImuSample, NoiseParams, RangeMeasurement, TruthState};
use crate::so3::Vec3;

fn normal3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// Accelerometer and gyro outputs for `truth`.
///
/// Always consumes six standard-normal draws (accelerometer xyz, then gyro xyz),
/// whatever the noise levels.
pub fn synth_imu<R: Rng + ?Sized>(truth: &TruthState, noise: &NoiseParams, rng: &mut R) -> ImuSample {
    let accel_noise = normal3(rng) * noise.sigma_alpha;
    let gyro_noise = normal3(rng) * noise.sigma_gamma;
    let proper = truth.attitude.transpose() * (truth.acceleration - gravity());
    ImuSample {
        t: truth.t,
        specific_force: proper + accel_noise,
        angular_rate: truth.angular_velocity + gyro_noise,
    }
}

/// One range-noise realization, m. Consumes exactly one standard-normal draw.
pub fn draw_range_noise<R: Rng + ?Sized>(noise: &NoiseParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * noise.sigma_rho
}

/// Range to `anchor` corrupted by a given noise value, clamped at zero.
pub fn range_from_noise(truth: &TruthState, anchor: &Anchor, noise_value: f64) -> RangeMeasurement {
    let distance = (truth.position - anchor.position).norm();
    RangeMeasurement {
        t: truth.t,
        anchor_id: anchor.id,
        range: (distance + noise_value).max(0.0),
    }
}

pub fn synth_range<R: Rng + ?Sized>(
    truth: &TruthState,
    anchor: &Anchor,
    noise: &NoiseParams,
    rng: &mut R,
) -> RangeMeasurement {
    range_from_noise(truth, anchor, draw_range_noise(noise, rng))
}

/// Independent random streams for one simulated run.
///
/// Each noise source gets its own ChaCha stream derived from the run seed, so
/// two runs with the same seed see identical IMU noise and identical range
/// noise per ranging tick regardless of which anchor is polled.
#[derive(Clone, Debug)]
pub struct NoiseStreams {
    pub imu: ChaCha8Rng,
    pub range: ChaCha8Rng,
    pub init: ChaCha8Rng,
}

impl NoiseStreams {
    pub fn from_seed(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        NoiseStreams {
            imu: stream(1),
            range: stream(2),
            init: stream(3),
        }
    }
}
