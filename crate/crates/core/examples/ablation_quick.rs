//! The four wing/model configurations with a reduced planning budget and
//! three perturbed launches each.

use vortex_perch::commands::ablation;
use vortex_perch::config::ScenarioConfig;

fn main() -> vortex_perch::error::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.planner.samples = 16;
    cfg.planner.iterations = 5;
    cfg.ablation.seeds = 3;
    let report = ablation(&cfg, 1)?;
    print!("{}", report.table());
    Ok(())
}
