//! Velocity induced by one vortex, with and without a core, and the speed of
//! a counter-rotating pair against Γ/(2πd).

use vortex_perch::kernel::{induced_velocity_regularized, induced_velocity_singular, KernelConfig, VortexParticle};
use vortex_perch::validation::vortex_pair;
use vortex_perch::vec2::Vec2;

fn main() -> vortex_perch::error::Result<()> {
    let v = VortexParticle::wake(1.0, Vec2::ZERO);
    let core = KernelConfig::new(0.01)?;
    println!("{:>8} {:>14} {:>14}", "r (m)", "singular", "cored");
    for r in [0.002, 0.005, 0.01, 0.02, 0.05, 0.1] {
        let p = Vec2::new(r, 0.0);
        let s = induced_velocity_singular(&v, p)?.norm();
        let c = induced_velocity_regularized(&v, p, &core).norm();
        println!("{r:>8} {s:>14.6} {c:>14.6}");
    }

    let pair = vortex_pair(0.1, 1e-4, 0.002, 0.2)?;
    println!();
    println!("pair speed, Γ = 1, d = 0.1 m");
    println!("  expected      {:.9}", pair.expected);
    println!("  dt            {:.9}", pair.coarse);
    println!("  dt/2          {:.9}", pair.fine);
    println!("  extrapolated  {:.9}", pair.extrapolated);
    Ok(())
}
