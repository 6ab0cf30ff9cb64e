//! Acceptance criteria, one line per criterion. Run with
//! `cargo test --release --test acceptance -- --nocapture` to see the lines
//! as they finish; the full run plans the perch five times.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use vortex_perch::commands::{self, closed_loop_trials, plan_and_stabilize, Stabilized};
use vortex_perch::config::{Mode, ScenarioConfig, WingMode};
use vortex_perch::control::ControlSequence;
use vortex_perch::validation::{lqr_pipeline_error, merge_audit, stalled_plate, vortex_pair, wagner};
use vortex_perch::vehicle::{AeroModel, Simulator};

const CONSERVATION_DRIFT: f64 = 1e-9;
const BOUNDARY_RESIDUAL: f64 = 1e-10;
const CONSERVATION_SECONDS: f64 = 30.0;
const WAGNER_LIFT_TOL: f64 = 0.15;
const WAGNER_INITIAL_RATIO: f64 = 0.5;
const WAGNER_INITIAL_TOL: f64 = 0.15;
const WAGNER_SECONDS: f64 = 10.0;
const UNSTEADY_STD_FRACTION: f64 = 0.05;
const PAIR_TOL: f64 = 0.01;
const MERGE_SEEDS: u64 = 100;
const MERGE_PARTICLES: usize = 500;
const REALTIME_HORIZON: f64 = 1.5;
const PLAN_COST_RATIO: f64 = 0.2;
const PLAN_SECONDS: f64 = 300.0;
const LQR_GAIN_TOL: f64 = 1e-6;
const TRACKING_TRIALS: usize = 10;
const TRACKING_WINS: usize = 9;
const TRACKING_SPEED_OFFSET: f64 = 0.2;
const ABLATION_SEEDS: usize = 10;
const ABLATION_SECONDS: f64 = 7200.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn report(id: usize, name: &str, o: &Outcome, failures: &mut Vec<usize>) {
    println!("{} [{id}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    if !o.passed {
        failures.push(id);
    }
}

fn conservation() -> Outcome {
    let start = Instant::now();
    let s = stalled_plate(45f64.to_radians(), 1000).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        passed: s.max_kelvin_drift <= CONSERVATION_DRIFT
            && s.max_residual <= BOUNDARY_RESIDUAL
            && secs <= CONSERVATION_SECONDS,
        detail: format!(
            "drift {:.2e} (≤ {CONSERVATION_DRIFT:e}), residual {:.2e} m/s (≤ {BOUNDARY_RESIDUAL:e}), {secs:.2} s (≤ {CONSERVATION_SECONDS})",
            s.max_kelvin_drift, s.max_residual
        ),
    }
}

fn wagner_oracle() -> Outcome {
    let start = Instant::now();
    let w = wagner(5f64.to_radians()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let long = w.cl_final / w.thin_airfoil;
    let initial = w.cl_initial / w.cl_final;
    Outcome {
        passed: (long - 1.0).abs() <= WAGNER_LIFT_TOL
            && (initial - WAGNER_INITIAL_RATIO).abs() <= WAGNER_INITIAL_TOL
            && secs <= WAGNER_SECONDS,
        detail: format!(
            "CL/2π sin α {long:.4} (1 ± {WAGNER_LIFT_TOL}), CL(0+)/CL(∞) {initial:.4} ({WAGNER_INITIAL_RATIO} ± {WAGNER_INITIAL_TOL}), {secs:.3} s (≤ {WAGNER_SECONDS})"
        ),
    }
}

fn unsteadiness() -> Outcome {
    let s = stalled_plate(45f64.to_radians(), 1000).unwrap();
    let ratio = s.lift_std / s.lift_mean.abs();
    Outcome {
        passed: ratio >= UNSTEADY_STD_FRACTION,
        detail: format!(
            "lift std/mean over the second half {ratio:.4} (≥ {UNSTEADY_STD_FRACTION}), mean CL {:.4}",
            s.lift_mean
        ),
    }
}

fn pair() -> Outcome {
    let p = vortex_pair(0.1, 0.005, 1e-3, 0.05).unwrap();
    let err = (p.extrapolated - p.expected).abs() / p.expected;
    Outcome {
        passed: err <= PAIR_TOL,
        detail: format!(
            "extrapolated {:.9} vs Γ/(2πd) {:.9}, relative error {err:.2e} (≤ {PAIR_TOL})",
            p.extrapolated, p.expected
        ),
    }
}

fn merging() -> Outcome {
    let m = merge_audit(MERGE_SEEDS, MERGE_PARTICLES).unwrap();
    Outcome {
        passed: m.worst_velocity_ratio <= 1.0 && m.worst_circulation_change == 0.0 && m.total_merges > 0,
        detail: format!(
            "worst velocity change / threshold {:.4} (≤ 1), worst |ΔΣΓ| {:e} (= 0), {} merges over {MERGE_SEEDS} wakes",
            m.worst_velocity_ratio, m.worst_circulation_change, m.total_merges
        ),
    }
}

fn realtime(nominal: &ControlSequence) -> Outcome {
    let cfg = ScenarioConfig::default();
    let sim = Arc::new(cfg.sim_config().unwrap());
    let steps = (REALTIME_HORIZON / sim.dt).round() as usize;
    let mut worst: f64 = 0.0;
    for seq in [
        ControlSequence::zeros_for_horizon(0.05, REALTIME_HORIZON),
        nominal.clone(),
    ] {
        let start = Instant::now();
        Simulator::new(sim.clone(), cfg.initial_state())
            .unwrap()
            .run(&mut seq.clone(), steps)
            .unwrap();
        worst = worst.max(start.elapsed().as_secs_f64());
    }
    Outcome {
        passed: worst < REALTIME_HORIZON,
        detail: format!("slowest of zero-control and perch-nominal runs {worst:.3} s (< {REALTIME_HORIZON} s)"),
    }
}

fn planner(s: &Stabilized, secs: f64) -> Outcome {
    let ratio = s.plan.cost / s.plan.zero_control_cost;
    let monotone = s.plan.log.windows(2).all(|w| w[1].best_cost <= w[0].best_cost);
    Outcome {
        passed: ratio <= PLAN_COST_RATIO && monotone && secs <= PLAN_SECONDS,
        detail: format!(
            "best {:.4} / zero-control {:.4} = {ratio:.4} (≤ {PLAN_COST_RATIO}), best cost non-increasing {monotone}, plan {secs:.1} s (≤ {PLAN_SECONDS})",
            s.plan.cost, s.plan.zero_control_cost
        ),
    }
}

fn tvlqr(cfg: &ScenarioConfig, s: &Stabilized) -> Outcome {
    let gain_err = lqr_pipeline_error().unwrap();
    let trials = closed_loop_trials(cfg, s, 8, TRACKING_TRIALS, TRACKING_SPEED_OFFSET).unwrap();
    let wins = trials
        .iter()
        .filter(|(_, open, closed)| closed.unwrap_or(f64::INFINITY) < open.unwrap_or(f64::INFINITY))
        .count();
    let pairs: Vec<String> = trials
        .iter()
        .map(|(dv, o, c)| format!("{dv:+.3}:{:.3}/{:.3}", o.unwrap_or(f64::NAN), c.unwrap_or(f64::NAN)))
        .collect();
    Outcome {
        passed: gain_err <= LQR_GAIN_TOL && wins >= TRACKING_WINS,
        detail: format!(
            "linear-plant gain error {gain_err:.2e} (≤ {LQR_GAIN_TOL:e}); closed beats open in {wins}/{TRACKING_TRIALS} (≥ {TRACKING_WINS}) [Δẋ:open/closed {}]",
            pairs.join(" ")
        ),
    }
}

fn ablation_direction() -> Outcome {
    let mut cfg = ScenarioConfig::default();
    cfg.ablation.seeds = ABLATION_SEEDS;
    let start = Instant::now();
    let report = commands::ablation(&cfg, 0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mean = |wing, model| report.normalized(Mode { wing, model }).map(|m| m.0);
    let fqs = mean(WingMode::Fixed, AeroModel::QuasiSteady);
    let fus = mean(WingMode::Fixed, AeroModel::Unsteady);
    let mqs = mean(WingMode::Morphing, AeroModel::QuasiSteady);
    let mus = mean(WingMode::Morphing, AeroModel::Unsteady);
    let passed = match (fqs, fus, mqs, mus) {
        (Some(fqs), Some(fus), Some(mqs), Some(mus)) => {
            mqs > mus && mus <= fus && fus <= fqs && secs <= ABLATION_SECONDS
        }
        _ => false,
    };
    let f = |v: Option<f64>| v.map_or("failed".to_string(), |v| format!("{v:.3}"));
    Outcome {
        passed,
        detail: format!(
            "normalized means fixed/QS {} fixed/unsteady {} morphing/QS {} morphing/unsteady {}; need morphing/QS > morphing/unsteady ≤ fixed/unsteady ≤ fixed/QS; {secs:.0} s (≤ {ABLATION_SECONDS})",
            f(fqs),
            f(fus),
            f(mqs),
            f(mus)
        ),
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let mut cfg = ScenarioConfig::default();
    cfg.planner.samples = 12;
    cfg.planner.iterations = 3;
    cfg.planner.horizon = 0.5;
    cfg.ablation.seeds = 2;
    let mut different = Vec::new();
    let mut files = 0;
    for command in ["simulate", "plan", "ablation", "validate"] {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let out = dir.path();
                match command {
                    "simulate" => {
                        commands::simulate(&cfg, None, 5, out, Some(10)).unwrap();
                    }
                    "plan" => {
                        commands::cmd_plan(&cfg, 5, out, Some(10)).unwrap();
                    }
                    "ablation" => commands::ablation(&cfg, 5).unwrap().write(out).unwrap(),
                    _ => {
                        commands::validate(Some(out)).unwrap();
                    }
                }
                read_all(out)
            })
            .collect();
        files += runs[0].len();
        if runs[0] != runs[1] || runs[0].is_empty() {
            different.push(command);
        }
    }
    Outcome {
        passed: different.is_empty(),
        detail: format!("{files} files from simulate, plan, ablation and validate; differing commands {different:?}"),
    }
}

fn main() {
    let mut failures = Vec::new();
    report(1, "conservation", &conservation(), &mut failures);
    report(2, "wagner oracle", &wagner_oracle(), &mut failures);
    report(3, "unsteady loads at 45°", &unsteadiness(), &mut failures);
    report(4, "vortex pair", &pair(), &mut failures);
    report(5, "merging audit", &merging(), &mut failures);

    let cfg = ScenarioConfig::default();
    let start = Instant::now();
    let perch = plan_and_stabilize(&cfg, cfg.mode, 0).unwrap();
    let plan_secs = start.elapsed().as_secs_f64();

    report(
        6,
        "faster than real time",
        &realtime(&perch.plan.sequence),
        &mut failures,
    );
    report(7, "planner convergence", &planner(&perch, plan_secs), &mut failures);
    report(8, "tvlqr pipeline", &tvlqr(&cfg, &perch), &mut failures);
    report(9, "ablation direction", &ablation_direction(), &mut failures);
    report(10, "determinism", &determinism(), &mut failures);

    if !failures.is_empty() {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
