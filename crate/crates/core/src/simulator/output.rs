use std::io::Write;

use super::{AuditSummary, Trajectory};

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "NaN".to_owned()
    }
}

/// Writes recorded samples as CSV, keeping every `stride`-th row (the last
/// row is always written). Floats carry 17 significant digits.
pub fn write_csv<W: Write>(traj: &Trajectory, mut out: W, stride: usize) -> std::io::Result<()> {
    let stride = stride.max(1);
    writeln!(out, "# units: t [s], lambda [rad], omega [rad/s], u [pu power], V [pu energy]")?;
    let m = traj.states.first().map_or(0, |s| s.lambda.len());
    let mut header = vec!["t".to_owned()];
    header.extend((1..=m).map(|k| format!("lambda_{k}")));
    header.extend(traj.bus_ids.iter().map(|id| format!("omega_{id}")));
    header.extend(traj.controlled_ids.iter().map(|id| format!("u_{id}")));
    header.push("V".to_owned());
    writeln!(out, "{}", header.join(","))?;
    let last = traj.states.len().saturating_sub(1);
    for (k, s) in traj.states.iter().enumerate() {
        if k % stride != 0 && k != last {
            continue;
        }
        let mut row = Vec::with_capacity(header.len());
        row.push(num(s.t));
        row.extend(s.lambda.iter().map(|&x| num(x)));
        row.extend(s.omega.iter().map(|&x| num(x)));
        row.extend(traj.inputs[k].iter().map(|&x| num(x)));
        row.push(num(traj.energy[k]));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_audit_json<W: Write>(audit: &AuditSummary, out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(out, audit).map_err(std::io::Error::other)
}
