//! Parse a scenario, show the validation error for a bad one, and print the
//! fully defaulted document.

use vortex_perch::config::ScenarioConfig;

const SCENARIO: &str = r#"
[mode]
wing = "fixed"
model = "quasi-steady"

[launch]
speed = 6.5

[planner]
samples = 64
"#;

fn main() -> vortex_perch::error::Result<()> {
    let cfg = ScenarioConfig::parse(SCENARIO)?;
    println!(
        "mode {}, launch {} m/s, {} samples",
        cfg.mode.label(),
        cfg.launch.speed,
        cfg.planner.samples
    );
    match ScenarioConfig::parse("[fluid]\nrho = -1.0\n") {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    match ScenarioConfig::parse("[fluid]\nviscosity = 1e-5\n") {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    let text = cfg.to_toml();
    assert_eq!(ScenarioConfig::parse(&text)?, cfg);
    println!("--- defaults filled in ---\n{text}");
    Ok(())
}
