//! Plan a perch with a reduced budget, build the TVLQR policy around it and
//! fly both the open-loop plan and the policy from launches with a slower or
//! faster launcher.

use vortex_perch::commands::{execute, plan_and_stabilize};
use vortex_perch::config::ScenarioConfig;

fn main() -> vortex_perch::error::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.planner.samples = 32;
    cfg.planner.iterations = 10;
    let s = plan_and_stabilize(&cfg, cfg.mode, 0)?;
    println!(
        "nominal cost {:.4}, {} knots",
        s.plan.cost,
        s.policy.schedule.gains.len()
    );
    let k0 = &s.policy.schedule.gains[0];
    println!("first elevator gain row: {:.3?}", k0.row(0).iter().collect::<Vec<_>>());
    println!("{:>10} {:>10} {:>10}", "Δẋ (m/s)", "open", "closed");
    for dv in [-0.2, -0.1, 0.0, 0.1, 0.2] {
        let mut x0 = cfg.initial_state();
        x0.xdot += dv;
        let open = execute(&cfg, s.mode, x0, &mut s.plan.sequence.clone())?;
        let closed = execute(&cfg, s.mode, x0, &mut s.policy.clone())?;
        let f = |c: Option<f64>| c.map_or("diverged".to_string(), |c| format!("{c:.4}"));
        println!("{dv:>10.2} {:>10} {:>10}", f(open), f(closed));
    }
    Ok(())
}
