use std::sync::Arc;

use vortex_perch::control::ControlSequence;
use vortex_perch::io::{read_trajectory_states, write_trajectory, write_wake};
use vortex_perch::vehicle::{SimConfig, Simulator, VehicleState};

#[test]
fn trajectory_log_has_one_record_per_step_plus_one() {
    let cfg = Arc::new(SimConfig {
        snapshot_stride: Some(7),
        ..SimConfig::default()
    });
    let steps = 40;
    let traj = Simulator::new(cfg, VehicleState::launch(7.0))
        .unwrap()
        .run(&mut ControlSequence::zeros(0.05, 4), steps)
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trajectory.csv");
    write_trajectory(&path, &traj).unwrap();
    let rows = read_trajectory_states(&path).unwrap();
    assert_eq!(rows.len(), steps + 1);
    assert!(rows.windows(2).all(|w| w[1].0 > w[0].0));
    for ((t, s), r) in rows.iter().zip(&traj.records) {
        assert_eq!(*t, r.time);
        assert_eq!(*s, r.state);
    }

    let text = std::fs::read_to_string(&path).unwrap();
    let header = text.lines().next().unwrap();
    for col in header.split(',') {
        assert!(
            col.ends_with("_s")
                || col.ends_with("_m")
                || col.ends_with("_rad")
                || col.ends_with("_N")
                || col.ends_with("_m_s")
                || col.ends_with("_N_m")
                || col.ends_with("_count")
                || col.ends_with("_rad_s"),
            "column `{col}` carries no unit"
        );
    }

    let wake = dir.path().join("wake.csv");
    write_wake(&wake, &traj).unwrap();
    let wake_text = std::fs::read_to_string(&wake).unwrap();
    assert_eq!(
        wake_text.lines().next().unwrap(),
        "step,time_s,slice,strength_m2_s,x_m,z_m"
    );
    let snapshot_steps: std::collections::BTreeSet<usize> = wake_text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(snapshot_steps.iter().all(|s| s % 7 == 0));
    assert!(snapshot_steps.len() >= 5);
}
