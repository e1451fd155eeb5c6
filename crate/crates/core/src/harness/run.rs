use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{HarnessError, Scenario};
use crate::ekf::{composed_attitude, EkfError, RangeEkf, StateEstimate, UpdateInfo, STATE_DIM};
use crate::select::select_anchor;
use crate::sim::{
    draw_range_noise, generate_trajectory, range_from_noise, synth_imu, AnchorId, ImuSample, NoiseStreams,
    RangeMeasurement, TruthState,
};
use crate::so3::{rotation_angle_deg, Rotation, Vec3};

/// What happened at one ranging tick.
#[derive(Clone, Debug, PartialEq)]
pub enum RangeOutcome {
    Applied(UpdateInfo),
    /// The measurement was taken but not fused (coincident anchor or gate).
    Rejected(String),
    /// No anchor could be selected; the noise draw was still consumed.
    NoAnchor(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeEvent {
    /// Index of this ranging tick, counting from 0.
    pub tick: usize,
    pub measurement: Option<RangeMeasurement>,
    /// The range-noise draw for this tick, m.
    pub noise: f64,
    pub outcome: RangeOutcome,
}

impl RangeEvent {
    pub fn applied(&self) -> bool {
        matches!(self.outcome, RangeOutcome::Applied(_))
    }
}

/// View handed to a [`simulate`] observer after every IMU tick (and once before the first).
pub struct Step<'a> {
    pub index: usize,
    pub truth: &'a TruthState,
    pub imu: Option<&'a ImuSample>,
    pub filter: &'a RangeEkf,
    pub range: Option<&'a RangeEvent>,
}

/// Summary statistics of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub rmse_position: f64,
    pub rmse_velocity: f64,
    /// Geodesic attitude error, deg.
    pub rmse_attitude: f64,
    pub rmse_position_axes: [f64; 3],
    pub mean_trace: f64,
    pub anchor_histogram: BTreeMap<AnchorId, usize>,
    pub updates_applied: usize,
    pub updates_rejected: usize,
    pub samples: usize,
}

#[derive(Default)]
struct Accumulator {
    pos_sq: f64,
    pos_axes_sq: [f64; 3],
    vel_sq: f64,
    att_sq: f64,
    trace: f64,
    n: usize,
    histogram: BTreeMap<AnchorId, usize>,
    applied: usize,
    rejected: usize,
}

impl Accumulator {
    fn add(&mut self, step: &Step<'_>) {
        let snap = step.filter.snapshot();
        let dp = snap.position - step.truth.position;
        self.pos_sq += dp.norm_squared();
        for i in 0..3 {
            self.pos_axes_sq[i] += dp[i] * dp[i];
        }
        self.vel_sq += (snap.velocity - step.truth.velocity).norm_squared();
        self.att_sq += rotation_angle_deg(&snap.attitude, &step.truth.attitude).powi(2);
        self.trace += snap.covariance.trace();
        self.n += 1;
        if let Some(ev) = step.range {
            match (&ev.outcome, &ev.measurement) {
                (RangeOutcome::Applied(_), Some(m)) => {
                    *self.histogram.entry(m.anchor_id).or_default() += 1;
                    self.applied += 1;
                }
                (RangeOutcome::Rejected(_), _) => self.rejected += 1,
                _ => {}
            }
        }
    }

    fn finish(self) -> RunMetrics {
        let n = self.n.max(1) as f64;
        RunMetrics {
            rmse_position: (self.pos_sq / n).sqrt(),
            rmse_velocity: (self.vel_sq / n).sqrt(),
            rmse_attitude: (self.att_sq / n).sqrt(),
            rmse_position_axes: self.pos_axes_sq.map(|s| (s / n).sqrt()),
            mean_trace: self.trace / n,
            anchor_histogram: self.histogram,
            updates_applied: self.applied,
            updates_rejected: self.rejected,
            samples: self.n,
        }
    }
}

/// IMU tick index of ranging tick `n` (1-based), rounded to the nearest tick.
fn range_tick_index(n: usize, imu_hz: f64, range_hz: f64) -> usize {
    (n as f64 * imu_hz / range_hz).round() as usize
}

/// Runs one flight, calling `observer` after every IMU tick.
///
/// At each tick the IMU is synthesized from the truth and the filter predicts
/// to the next tick. On ranging ticks the policy picks an anchor from the
/// predicted covariance, one range-noise value is drawn, and the range is
/// fused. Every ranging tick draws exactly one noise value whichever anchor is
/// picked, so two policies run with the same seed see the same noise.
pub fn simulate<F>(scenario: &Scenario, mut observer: F) -> Result<RunMetrics, HarnessError>
where
    F: FnMut(&Step<'_>),
{
    scenario.validate()?;
    let dt = scenario.imu_dt();
    let truth = generate_trajectory(&scenario.trajectory, dt, scenario.duration_s).map_err(super::ScenarioError::from)?;
    let params = scenario.filter_params();
    let r = params.range_variance();
    let mut rngs = NoiseStreams::from_seed(scenario.seed);

    let start = &truth[0];
    let mut position = start.position;
    if scenario.filter.perturb_initial_position {
        let sigma = params.initial.position;
        for i in 0..3 {
            let z: f64 = rngs.init.sample(StandardNormal);
            position[i] += sigma * z;
        }
    }
    let mut filter = RangeEkf::new(StateEstimate::new(position, Vec3::zeros(), Rotation::identity()), params);

    let mut acc = Accumulator::default();
    let first = Step {
        index: 0,
        truth: start,
        imu: None,
        filter: &filter,
        range: None,
    };
    acc.add(&first);
    observer(&first);

    let mut range_n = 1;
    let mut next_range = range_tick_index(range_n, scenario.rates.imu_hz, scenario.rates.range_hz);
    for k in 0..truth.len() - 1 {
        let imu = synth_imu(&truth[k], &scenario.noise, &mut rngs.imu);
        filter
            .predict(&imu, dt)
            .map_err(|source| HarnessError::Filter { t: truth[k].t, source })?;

        let now = &truth[k + 1];
        let mut event = None;
        if k + 1 == next_range {
            let tick = range_n - 1;
            range_n += 1;
            next_range = range_tick_index(range_n, scenario.rates.imu_hz, scenario.rates.range_hz);

            let noise = draw_range_noise(&scenario.noise, &mut rngs.range);
            let x_hat = filter.state().position;
            let ev = match select_anchor(filter.covariance(), &x_hat, &scenario.anchors, r, &scenario.policy, tick) {
                Err(e) => RangeEvent {
                    tick,
                    measurement: None,
                    noise,
                    outcome: RangeOutcome::NoAnchor(e.to_string()),
                },
                Ok(id) => {
                    let anchor = scenario
                        .anchor(id)
                        .ok_or(HarnessError::UnknownAnchor { t: now.t, anchor: id })?;
                    let meas = range_from_noise(now, anchor, noise);
                    let outcome = match filter.range_update(&meas, anchor) {
                        Ok(info) => RangeOutcome::Applied(info),
                        Err(e @ (EkfError::AnchorCoincident { .. } | EkfError::Gated { .. })) => {
                            log::debug!("t = {:.3}: {e}", now.t);
                            RangeOutcome::Rejected(e.to_string())
                        }
                        Err(source) => return Err(HarnessError::Filter { t: now.t, source }),
                    };
                    RangeEvent {
                        tick,
                        measurement: Some(meas),
                        noise,
                        outcome,
                    }
                }
            };
            event = Some(ev);
        }

        filter
            .covariance()
            .check_health()
            .map_err(|defect| HarnessError::Covariance { t: now.t, defect })?;

        let step = Step {
            index: k + 1,
            truth: now,
            imu: Some(&imu),
            filter: &filter,
            range: event.as_ref(),
        };
        acc.add(&step);
        observer(&step);
    }
    Ok(acc.finish())
}

/// One row of the time-series log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub truth_position: Vec3,
    pub truth_velocity: Vec3,
    pub truth_attitude: Rotation,
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Rotation,
    /// Square roots of the covariance diagonal.
    pub std_devs: [f64; STATE_DIM],
    pub range: Option<RangeEvent>,
}

/// Everything recorded during [`run_scenario`].
#[derive(Clone, Debug, Default)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub truth: Vec<TruthState>,
    pub imu: Vec<ImuSample>,
    pub ranges: Vec<RangeMeasurement>,
}

pub const TIMESERIES_HEADER: [&str; 32] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "yaw_deg", "pitch_deg", "roll_deg", "est_x", "est_y", "est_z", "est_vx",
    "est_vy", "est_vz", "est_yaw_deg", "est_pitch_deg", "est_roll_deg", "att_err_deg", "sd_x", "sd_y", "sd_z",
    "sd_vx", "sd_vy", "sd_vz", "sd_dx", "sd_dy", "sd_dz", "anchor", "rho", "applied",
];

impl RunLog {
    /// Writes `timeseries.csv` content: one row per IMU tick, columns as in [`TIMESERIES_HEADER`].
    /// Angles are Z-Y-X Euler angles in degrees; the last three columns are
    /// empty on ticks without a range measurement.
    pub fn write_timeseries<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TIMESERIES_HEADER)?;
        let euler = |r: &Rotation| {
            let (y, p, rl) = r.yaw_pitch_roll();
            [y.to_degrees(), p.to_degrees(), rl.to_degrees()]
        };
        for row in &self.rows {
            let mut f: Vec<String> = Vec::with_capacity(TIMESERIES_HEADER.len());
            f.push(row.t.to_string());
            let nums = row
                .truth_position
                .iter()
                .chain(row.truth_velocity.iter())
                .copied()
                .chain(euler(&row.truth_attitude))
                .chain(row.position.iter().copied())
                .chain(row.velocity.iter().copied())
                .chain(euler(&row.attitude))
                .chain([rotation_angle_deg(&row.attitude, &row.truth_attitude)])
                .chain(row.std_devs);
            f.extend(nums.map(|x| x.to_string()));
            match row.range.as_ref().and_then(|ev| ev.measurement.as_ref().map(|m| (ev, m))) {
                Some((ev, m)) => {
                    f.push(m.anchor_id.to_string());
                    f.push(m.range.to_string());
                    f.push(if ev.applied() { "1" } else { "0" }.to_string());
                }
                None => f.extend(["", "", ""].map(String::from)),
            }
            w.write_record(&f)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_streams<W: Write>(&self, writer: W) -> csv::Result<()> {
        crate::sim::write_streams(writer, &self.truth, &self.imu, &self.ranges)
    }
}

/// Runs one flight and keeps the full log.
pub fn run_scenario(scenario: &Scenario) -> Result<(RunMetrics, RunLog), HarnessError> {
    let mut log = RunLog::default();
    let metrics = simulate(scenario, |step| {
        let snap = step.filter.snapshot();
        debug_assert_eq!(snap.attitude, composed_attitude(step.filter.state()));
        log.truth.push(*step.truth);
        if let Some(imu) = step.imu {
            log.imu.push(*imu);
        }
        if let Some(m) = step.range.and_then(|ev| ev.measurement) {
            log.ranges.push(m);
        }
        log.rows.push(LogRow {
            t: step.truth.t,
            truth_position: step.truth.position,
            truth_velocity: step.truth.velocity,
            truth_attitude: step.truth.attitude,
            position: snap.position,
            velocity: snap.velocity,
            attitude: snap.attitude,
            std_devs: snap.covariance.std_devs(),
            range: step.range.cloned(),
        });
    })?;
    Ok((metrics, log))
}

/// Runs one flight keeping only the metrics.
pub fn run_metrics(scenario: &Scenario) -> Result<RunMetrics, HarnessError> {
    simulate(scenario, |_| {})
}
