//! Comma-separated logs. Every file has a header naming each column with its
//! unit, one record per line, and floats written in shortest round-trip form.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::control::{ControlInput, ControlSequence};
use crate::error::{Error, Result};
use crate::mppi::IterationLog;
use crate::tvlqr::GainSchedule;
use crate::vehicle::{Trajectory, VehicleState};

pub const STATE_COLUMNS: [&str; 6] = ["x_m", "z_m", "theta_rad", "xdot_m_s", "zdot_m_s", "thetadot_rad_s"];

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new().from_writer(File::create(path)?))
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Columns: time, planar state, sweep (both sides), elevator, commands,
/// aerodynamic force and moment, then one particle count per slice.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    let slices = traj.records.first().map_or(0, |r| r.particle_counts.len());
    let mut header: Vec<String> = vec!["time_s".into()];
    header.extend(STATE_COLUMNS.iter().map(|s| s.to_string()));
    header.extend(
        [
            "sweep_left_rad",
            "sweep_right_rad",
            "elevator_rad",
            "elevator_cmd_rad",
            "sweep_cmd_rad",
            "force_x_N",
            "force_z_N",
            "moment_N_m",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    header.extend((0..slices).map(|k| format!("particles_slice{k}_count")));
    w.write_record(&header)?;
    for r in &traj.records {
        let s = &r.state;
        let mut row = vec![f(r.time)];
        row.extend(s.planar().iter().map(|&v| f(v)));
        row.extend(
            [
                s.sweep_left,
                s.sweep_right,
                s.elevator,
                r.control.elevator_cmd,
                r.control.sweep_cmd,
                r.force.x,
                r.force.z,
                r.moment,
            ]
            .iter()
            .map(|&v| f(v)),
        );
        row.extend(r.particle_counts.iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read the planar state and sweep/elevator columns back from a trajectory log.
pub fn read_trajectory_states(path: &Path) -> Result<Vec<(f64, VehicleState)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format_error(path, format!("bad value in column {i}")))
        };
        let state = VehicleState {
            x: v(1)?,
            z: v(2)?,
            theta: v(3)?,
            xdot: v(4)?,
            zdot: v(5)?,
            thetadot: v(6)?,
            sweep_left: v(7)?,
            sweep_right: v(8)?,
            elevator: v(9)?,
        };
        out.push((v(0)?, state));
    }
    Ok(out)
}

/// Columns: step, time, slice index, strength, position.
pub fn write_wake(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["step", "time_s", "slice", "strength_m2_s", "x_m", "z_m"])?;
    for snap in &traj.snapshots {
        for (k, slice) in snap.slices.iter().enumerate() {
            for p in slice {
                w.write_record([
                    snap.step.to_string(),
                    f(snap.time),
                    k.to_string(),
                    f(p.strength),
                    f(p.position.x),
                    f(p.position.z),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns: knot index, knot start time, elevator and sweep commands.
pub fn write_plan(path: &Path, seq: &ControlSequence) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["knot", "time_s", "elevator_cmd_rad", "sweep_cmd_rad"])?;
    for (k, u) in seq.knots.iter().enumerate() {
        w.write_record([
            k.to_string(),
            f(k as f64 * seq.knot_spacing),
            f(u.elevator_cmd),
            f(u.sweep_cmd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Read a file written by [`write_plan`]. The knot spacing is taken from
/// the time column, or `default_spacing` when there are fewer than two knots.
pub fn read_plan(path: &Path, default_spacing: f64) -> Result<ControlSequence> {
    let mut r = csv::Reader::from_path(path)?;
    let mut times = Vec::new();
    let mut knots = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let v = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| format_error(path, format!("row {}: bad value in column {c}", i + 1)))
        };
        times.push(v(1)?);
        knots.push(ControlInput::new(v(2)?, v(3)?));
    }
    let knot_spacing = if times.len() >= 2 {
        times[1] - times[0]
    } else {
        default_spacing
    };
    let seq = ControlSequence { knot_spacing, knots };
    seq.validate().map_err(|e| format_error(path, e.to_string()))?;
    for (k, t) in times.iter().enumerate() {
        if (t - k as f64 * knot_spacing).abs() > 1e-9 * (1.0 + t.abs()) {
            return Err(format_error(path, format!("knot {k} is not on a uniform grid")));
        }
    }
    Ok(seq)
}

/// Columns: knot, knot time, control channel, then one gain per planar state.
pub fn write_gains(path: &Path, schedule: &GainSchedule, channels: &[usize]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["knot".to_string(), "time_s".into(), "channel".into()];
    let units = [
        "rad_per_m",
        "rad_per_m",
        "rad_per_rad",
        "rad_s_per_m",
        "rad_s_per_m",
        "rad_s_per_rad",
    ];
    header.extend(
        STATE_COLUMNS
            .iter()
            .zip(units)
            .map(|(c, u)| format!("k_{}_{u}", c.split('_').next().unwrap())),
    );
    w.write_record(&header)?;
    for (k, (t, g)) in schedule.times.iter().zip(&schedule.gains).enumerate() {
        for (row, &c) in channels.iter().enumerate() {
            let mut rec = vec![
                k.to_string(),
                f(*t),
                if c == 0 { "elevator" } else { "sweep" }.to_string(),
            ];
            rec.extend((0..g.ncols()).map(|j| f(g[(row, j)])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns: iteration, nominal cost, min and mean sample cost, diverged
/// sample count, best cost so far. Costs are dimensionless mixes of m² and rad².
pub fn write_convergence(path: &Path, log: &[IterationLog]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "iteration",
        "nominal_cost",
        "min_sample_cost",
        "mean_sample_cost",
        "diverged_samples",
        "best_cost",
    ])?;
    for l in log {
        w.write_record([
            l.iteration.to_string(),
            f(l.nominal_cost),
            f(l.min_sample_cost),
            f(l.mean_sample_cost),
            l.diverged.to_string(),
            f(l.best_cost),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text file with a trailing newline.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = File::create(path)?;
    file.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        file.write_all(b"\n")?;
    }
    Ok(())
}
