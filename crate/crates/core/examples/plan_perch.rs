//! MPPI perch plan from the launcher. Pass `full` for the default
//! 128 × 50 budget; the default run uses 32 × 10.

use std::sync::Arc;
use std::time::Instant;

use vortex_perch::config::ScenarioConfig;
use vortex_perch::mppi::{closest_approach, plan, RolloutModel};

fn main() -> vortex_perch::error::Result<()> {
    let mut cfg = ScenarioConfig::default();
    if std::env::args().nth(1).as_deref() != Some("full") {
        cfg.planner.samples = 32;
        cfg.planner.iterations = 10;
    }
    let model = RolloutModel::new(Arc::new(cfg.sim_config()?), cfg.initial_state(), cfg.planner.horizon);
    let start = Instant::now();
    let p = plan(&model, &cfg.target, &cfg.planner)?;
    println!(
        "{} samples × {} iterations in {:.1} s",
        cfg.planner.samples,
        cfg.planner.iterations,
        start.elapsed().as_secs_f64()
    );
    println!(
        "{:>5} {:>10} {:>10} {:>10} {:>9}",
        "iter", "nominal", "min", "best", "diverged"
    );
    for l in &p.log {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>10.4} {:>9}",
            l.iteration, l.nominal_cost, l.min_sample_cost, l.best_cost, l.diverged
        );
    }
    println!(
        "zero-control cost {:.4}, best {:.4}, ratio {:.3}",
        p.zero_control_cost,
        p.cost,
        p.cost / p.zero_control_cost
    );
    if let Some((i, _)) = closest_approach(p.trajectory.states(), &cfg.target) {
        let r = &p.trajectory.records[i];
        println!(
            "closest approach at t = {:.3} s: x {:.3} m, z {:.3} m, θ {:.1}°, ẋ {:.2} m/s, ż {:.2} m/s",
            r.time,
            r.state.x,
            r.state.z,
            r.state.theta.to_degrees(),
            r.state.xdot,
            r.state.zdot
        );
    }
    Ok(())
}
