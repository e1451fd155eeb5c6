use std::io::Write;

use super::{ImuSample, RangeMeasurement, TruthState};

/// Dumps truth, IMU, and range streams as one time-ordered CSV.
///
/// Rows are variable length: `t,kind,payload...` where the payload is
/// `x,y,z,vx,vy,vz` for `truth`, `ax,ay,az,gx,gy,gz` for `imu`, and
/// `anchor_id,rho` for `range`. At equal times the order is truth, imu, range.
pub fn write_streams<W: Write>(
    writer: W,
    truth: &[TruthState],
    imu: &[ImuSample],
    ranges: &[RangeMeasurement],
) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    w.write_record(["t", "kind", "payload"])?;

    let mut rows: Vec<(f64, u8, Vec<String>)> = Vec::with_capacity(truth.len() + imu.len() + ranges.len());
    for s in truth {
        let mut f = vec![s.t.to_string(), "truth".to_string()];
        f.extend(s.position.iter().chain(s.velocity.iter()).map(f64::to_string));
        rows.push((s.t, 0, f));
    }
    for s in imu {
        let mut f = vec![s.t.to_string(), "imu".to_string()];
        f.extend(s.specific_force.iter().chain(s.angular_rate.iter()).map(f64::to_string));
        rows.push((s.t, 1, f));
    }
    for m in ranges {
        rows.push((
            m.t,
            2,
            vec![m.t.to_string(), "range".to_string(), m.anchor_id.to_string(), m.range.to_string()],
        ));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (_, _, fields) in rows {
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
