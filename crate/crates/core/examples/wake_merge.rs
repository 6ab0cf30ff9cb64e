//! One merge pass over a random wake behind a plate: particle count, the
//! velocity change it causes at the control points, and total circulation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vortex_perch::kernel::KernelConfig;
use vortex_perch::vec2::Vec2;
use vortex_perch::wake::{merge_pass, MergeConfig, Wake};

fn main() -> vortex_perch::error::Result<()> {
    let kernel = KernelConfig::new(0.01)?;
    let control: Vec<Vec2> = (0..16).map(|i| Vec2::new((i as f64 + 0.75) / 16.0, 0.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let wake = Wake::from_particles((0..500).map(|_| {
        vortex_perch::kernel::VortexParticle::wake(
            rng.gen_range(-64..=64) as f64 / 1024.0,
            Vec2::new(rng.gen_range(1.2..6.0), rng.gen_range(-0.8..0.8)),
        )
    }));
    let cfg = MergeConfig {
        velocity_threshold: 0.01,
        candidate_radius: 0.1,
        exclusion_radius: 0.5,
        radius_growth: 0.5,
    };
    let merged = merge_pass(&wake, &control, &cfg, &kernel);
    let worst = control
        .iter()
        .map(|&p| (merged.velocity_at(p, kernel.core4()) - wake.velocity_at(p, kernel.core4())).norm())
        .fold(0.0, f64::max);
    println!("particles      {} -> {}", wake.len(), merged.len());
    println!(
        "velocity change at control points {worst:.3e} m/s (threshold {})",
        cfg.velocity_threshold
    );
    println!(
        "ΣΓ             {} -> {}",
        wake.total_strength(),
        merged.total_strength()
    );
    Ok(())
}
