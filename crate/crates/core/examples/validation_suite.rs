//! Run every reference case and print one line per check.

fn main() -> vortex_perch::error::Result<()> {
    let checks = vortex_perch::validation::suite()?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} passed", checks.len() - failed, checks.len());
    Ok(())
}
