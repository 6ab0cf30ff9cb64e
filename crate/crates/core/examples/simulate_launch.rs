//! A 1.5 s glide from the launcher with centred controls, timed, with the
//! trajectory written to a temporary directory.

use std::sync::Arc;
use std::time::Instant;

use vortex_perch::control::ControlSequence;
use vortex_perch::io::write_trajectory;
use vortex_perch::vehicle::{SimConfig, Simulator, VehicleState};

fn main() -> vortex_perch::error::Result<()> {
    let config = Arc::new(SimConfig::default());
    let steps = (1.5 / config.dt).round() as usize;
    let mut controls = ControlSequence::zeros_for_horizon(0.05, 1.5);
    let start = Instant::now();
    let traj = Simulator::new(config, VehicleState::launch(7.0))?.run(&mut controls, steps)?;
    let elapsed = start.elapsed();
    println!("{steps} steps in {:.1} ms", elapsed.as_secs_f64() * 1e3);
    println!(
        "{:>6} {:>8} {:>8} {:>8} {:>8} {:>30}",
        "t (s)", "x (m)", "z (m)", "θ (°)", "speed", "particles per slice"
    );
    for r in traj.records.iter().step_by(30) {
        let s = &r.state;
        println!(
            "{:>6.2} {:>8.3} {:>8.3} {:>8.2} {:>8.3} {:>30}",
            r.time,
            s.x,
            s.z,
            s.theta.to_degrees(),
            s.velocity().norm(),
            format!("{:?}", r.particle_counts)
        );
    }
    let dir = std::env::temp_dir().join("vortex-perch-example");
    std::fs::create_dir_all(&dir)?;
    write_trajectory(&dir.join("trajectory.csv"), &traj)?;
    println!("wrote {}", dir.join("trajectory.csv").display());
    Ok(())
}
