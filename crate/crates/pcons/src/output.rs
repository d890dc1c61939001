//! CSV trajectories, metric series and run summaries.

use std::io::{self, Write};

use pcons_core::sim::{Metrics, Trajectory};

/// 17 significant digits, enough to round-trip every `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t, s_*, x{i}_*, xhat{i}_* (per agent), u{i}_*, cons_err, est_err`.
pub fn trajectory_header(m: usize, n: usize, p: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=m).map(|k| format!("s_{k}")));
    for i in 1..=n {
        cols.extend((1..=m).map(|k| format!("x{i}_{k}")));
        cols.extend((1..=m).map(|k| format!("xhat{i}_{k}")));
    }
    for i in 1..=n {
        cols.extend((1..=p).map(|k| format!("u{i}_{k}")));
    }
    cols.push("cons_err".into());
    cols.push("est_err".into());
    cols.join(",")
}

pub fn write_trajectory<W: Write>(out: &mut W, traj: &Trajectory, metrics: &Metrics) -> io::Result<()> {
    let Some(first) = traj.states.first() else {
        return Ok(());
    };
    let m = traj.leader[0].len();
    let n = first.len();
    let p = traj.controls[0].first().map_or(0, |u| u.len());
    writeln!(out, "{}", trajectory_header(m, n, p))?;
    let mut row: Vec<String> = Vec::new();
    for k in 0..traj.len() {
        row.clear();
        row.push(num(traj.times[k]));
        row.extend(traj.leader[k].iter().map(|&v| num(v)));
        for i in 0..n {
            row.extend(traj.states[k][i].iter().map(|&v| num(v)));
            row.extend(traj.estimates[k][i].iter().map(|&v| num(v)));
        }
        for u in &traj.controls[k] {
            row.extend(u.iter().map(|&v| num(v)));
        }
        row.push(num(metrics.consensus[k]));
        row.push(num(metrics.estimation[k]));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_metrics<W: Write>(out: &mut W, traj: &Trajectory, metrics: &Metrics) -> io::Result<()> {
    writeln!(out, "t,cons_err,est_err,pairwise_err")?;
    for k in 0..traj.len() {
        writeln!(
            out,
            "{},{},{},{}",
            num(traj.times[k]),
            num(metrics.consensus[k]),
            num(metrics.estimation[k]),
            num(metrics.pairwise[k])
        )?;
    }
    Ok(())
}

fn peak(series: &[f64]) -> f64 {
    series.iter().copied().fold(0.0, f64::max)
}

/// Plain `key: value` lines.
pub fn summary(name: &str, traj: &Trajectory, metrics: &Metrics, runtime_s: f64) -> String {
    let last = |s: &[f64]| s.last().copied().unwrap_or(0.0);
    let g_induced = traj.violations.iter().filter(|v| v.g_induced).count();
    let mut s = String::new();
    s.push_str(&format!("scenario: {name}\n"));
    s.push_str(&format!("samples: {}\n", traj.len()));
    s.push_str(&format!("final_time: {}\n", traj.times.last().copied().unwrap_or(0.0)));
    s.push_str(&format!("final_consensus_error: {:.6e}\n", last(&metrics.consensus)));
    s.push_str(&format!("peak_consensus_error: {:.6e}\n", peak(&metrics.consensus)));
    s.push_str(&format!("final_estimation_error: {:.6e}\n", last(&metrics.estimation)));
    s.push_str(&format!("peak_estimation_error: {:.6e}\n", peak(&metrics.estimation)));
    s.push_str(&format!("final_pairwise_error: {:.6e}\n", last(&metrics.pairwise)));
    s.push_str(&format!(
        "positivity_violations: {} (g-induced {g_induced}, worst {:.6e})\n",
        metrics.violation_count, metrics.worst_violation
    ));
    for v in &traj.violations {
        s.push_str(&format!(
            "  violation {:?} agent {} component {}: t in [{}, {}], worst {:.6e} at {}{}\n",
            v.series,
            v.agent + 1,
            v.component + 1,
            v.start,
            v.end,
            v.worst_value,
            v.worst_time,
            if v.g_induced { " (g-induced)" } else { "" }
        ));
    }
    s.push_str(&format!("clamp_events: {}\n", traj.clamps.len()));
    s.push_str(&format!("runtime_s: {runtime_s:.3}\n"));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(
            trajectory_header(2, 2, 1),
            "t,s_1,s_2,x1_1,x1_2,xhat1_1,xhat1_2,x2_1,x2_2,xhat2_1,xhat2_2,u1_1,u2_1,cons_err,est_err"
        );
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 12345.678901234567] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.0), "0.0000000000000000e0");
    }
}
