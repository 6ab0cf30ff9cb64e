//! An impulsively started plate at 5° against Wagner's lift growth, and the
//! same plate at 45° where the wake keeps the lift fluctuating.

use vortex_perch::validation::{run_plate, stalled_plate, wagner, PlateCase};

fn main() -> vortex_perch::error::Result<()> {
    let alpha = 5f64.to_radians();
    let case = PlateCase::desk_scale(alpha, 0);
    let case = PlateCase {
        steps: case.steps_for_chords(10.0),
        ..case
    };
    let run = run_plate(&case)?;
    let steady = 2.0 * std::f64::consts::PI * alpha.sin();
    println!("5° plate, {} steps, 2π sin α = {steady:.4}", case.steps);
    println!("{:>8} {:>10} {:>10}", "chords", "CL", "CL/steady");
    let per_chord = case.steps as f64 / 10.0;
    for (i, cl) in run.lift.iter().enumerate().step_by(4) {
        println!("{:>8.2} {:>10.4} {:>10.4}", i as f64 / per_chord, cl, cl / steady);
    }
    let w = wagner(alpha)?;
    println!(
        "CL(0+)/CL(∞) = {:.3}, CL(10 chords)/2π sin α = {:.3}",
        w.cl_initial / w.cl_final,
        w.cl_final / w.thin_airfoil
    );

    let s = stalled_plate(45f64.to_radians(), 1000)?;
    println!();
    println!("45° plate over 1000 steps");
    println!(
        "  lift mean {:.4}, std {:.4} ({:.1}% of mean)",
        s.lift_mean,
        s.lift_std,
        100.0 * s.lift_std / s.lift_mean
    );
    println!(
        "  Kelvin drift {:.2e}, boundary residual {:.2e} m/s",
        s.max_kelvin_drift, s.max_residual
    );
    println!("  {} wake particles", s.particles);
    Ok(())
}
