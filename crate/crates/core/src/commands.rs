//! The command-line workflows as library calls: simulate a control file,
//! plan and stabilize a maneuver, run the four-mode ablation, and run the
//! reference cases. Every file they write depends only on the config and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Mode, ScenarioConfig};
use crate::control::{ControlPolicy, ControlSequence};
use crate::error::{Error, Result};
use crate::io;
use crate::mppi::{plan, trajectory_cost, Plan, RolloutModel};
use crate::tvlqr::{synthesize, LinearizationKnot, TvlqrPolicy};
use crate::validation::{self, Check};
use crate::vehicle::{AeroModel, SimConfig, Simulator, Trajectory, VehicleState};

fn steps_for(horizon: f64, dt: f64) -> usize {
    (horizon / dt).round() as usize
}

fn with_stride(config: SimConfig, stride: Option<usize>) -> Arc<SimConfig> {
    Arc::new(SimConfig {
        snapshot_stride: stride,
        ..config
    })
}

/// Run `policy` and return the trajectory, or the partial one on divergence.
fn run_logged(
    config: Arc<SimConfig>,
    initial: VehicleState,
    policy: &mut dyn ControlPolicy,
    steps: usize,
) -> Result<(Trajectory, Option<Error>)> {
    match Simulator::new(config, initial)?.run(policy, steps) {
        Ok(t) => Ok((t, None)),
        Err(Error::Diverged { time, partial }) => Ok((
            partial.map(|p| *p).unwrap_or_default(),
            Some(Error::Diverged { time, partial: None }),
        )),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub steps: usize,
    pub trajectory: Trajectory,
    pub cost: f64,
    pub files: Vec<PathBuf>,
}

/// Fly the controls in `controls` (all zeros over the planner horizon when
/// absent) and write `trajectory.csv`, plus `wake.csv` when a snapshot
/// stride is set. The run lasts as long as the control sequence. A diverged
/// run still writes its partial log before returning the error.
///
/// The simulation draws no random numbers; `seed` only appears in the summary.
pub fn simulate(
    cfg: &ScenarioConfig,
    controls: Option<&Path>,
    seed: u64,
    out: &Path,
    snapshot_stride: Option<usize>,
) -> Result<SimulateSummary> {
    let sim = with_stride(cfg.sim_config()?, snapshot_stride);
    let mut seq = match controls {
        Some(p) => io::read_plan(p, cfg.planner.knot_spacing)?,
        None => ControlSequence::zeros_for_horizon(cfg.planner.knot_spacing, cfg.planner.horizon),
    };
    let steps = steps_for(seq.horizon(), sim.dt);
    let (trajectory, failure) = run_logged(sim, cfg.initial_state(), &mut seq, steps)?;
    std::fs::create_dir_all(out)?;
    let mut files = vec![out.join("trajectory.csv")];
    io::write_trajectory(&files[0], &trajectory)?;
    if snapshot_stride.is_some() {
        files.push(out.join("wake.csv"));
        io::write_wake(&files[1], &trajectory)?;
    }
    let cost = trajectory_cost(&trajectory, &cfg.target);
    let mut summary = String::new();
    writeln!(summary, "mode = {}", cfg.mode.label()).unwrap();
    writeln!(summary, "seed = {seed}").unwrap();
    writeln!(summary, "steps = {steps}").unwrap();
    writeln!(summary, "cost = {cost}").unwrap();
    writeln!(summary, "diverged = {}", failure.is_some()).unwrap();
    files.push(out.join("summary.txt"));
    io::write_text(files.last().unwrap(), &summary)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(SimulateSummary {
            steps,
            trajectory,
            cost,
            files,
        }),
    }
}

/// A planned nominal and the feedback policy built around it.
#[derive(Debug, Clone)]
pub struct Stabilized {
    pub mode: Mode,
    pub plan: Plan,
    pub policy: TvlqrPolicy,
    pub knots: Vec<LinearizationKnot>,
}

/// Plan from the scenario launch with `mode`'s aerodynamic model and wing,
/// then linearize that same model along the plan for the feedback gains.
pub fn plan_and_stabilize(cfg: &ScenarioConfig, mode: Mode, seed: u64) -> Result<Stabilized> {
    let sim = Arc::new(cfg.sim_config_for(mode)?);
    let initial = cfg.initial_state();
    let model = RolloutModel::new(sim.clone(), initial, cfg.planner.horizon);
    let params = crate::mppi::MppiParams { seed, ..cfg.planner };
    let plan = plan(&model, &cfg.target, &params)?;
    let (policy, knots) = synthesize(sim, initial, &plan.sequence, cfg.planner.horizon, &cfg.feedback)?;
    Ok(Stabilized {
        mode,
        plan,
        policy,
        knots,
    })
}

/// Plan with the scenario's mode and write `plan.csv`, `gains.csv`,
/// `trajectory.csv` (the nominal), `convergence.csv` and `summary.txt`.
pub fn cmd_plan(cfg: &ScenarioConfig, seed: u64, out: &Path, snapshot_stride: Option<usize>) -> Result<Stabilized> {
    let s = plan_and_stabilize(cfg, cfg.mode, seed)?;
    std::fs::create_dir_all(out)?;
    io::write_plan(&out.join("plan.csv"), &s.plan.sequence)?;
    io::write_gains(&out.join("gains.csv"), &s.policy.schedule, &s.policy.channels)?;
    io::write_convergence(&out.join("convergence.csv"), &s.plan.log)?;
    let nominal = if snapshot_stride.is_some() {
        let sim = with_stride(cfg.sim_config()?, snapshot_stride);
        let steps = steps_for(cfg.planner.horizon, sim.dt);
        let t = Simulator::new(sim, cfg.initial_state())?.run(&mut s.plan.sequence.clone(), steps)?;
        io::write_wake(&out.join("wake.csv"), &t)?;
        t
    } else {
        s.plan.trajectory.clone()
    };
    io::write_trajectory(&out.join("trajectory.csv"), &nominal)?;
    let mut summary = String::new();
    writeln!(summary, "mode = {}", cfg.mode.label()).unwrap();
    writeln!(summary, "seed = {seed}").unwrap();
    writeln!(summary, "zero_control_cost = {}", s.plan.zero_control_cost).unwrap();
    writeln!(summary, "best_cost = {}", s.plan.cost).unwrap();
    writeln!(summary, "cost_ratio = {}", s.plan.cost / s.plan.zero_control_cost).unwrap();
    writeln!(summary, "lambda = {}", s.plan.lambda).unwrap();
    writeln!(summary, "floored_knots = {:?}", s.policy.schedule.floored).unwrap();
    writeln!(
        summary,
        "linearization_retries = {}",
        s.knots.iter().map(|k| k.retries).sum::<usize>()
    )
    .unwrap();
    io::write_text(&out.join("summary.txt"), &summary)?;
    Ok(s)
}

/// Launch `index` of a perturbed set: position offsets in x and z uniform in
/// ±`position_jitter`, launch speed offset uniform in ±`speed_jitter`.
pub fn perturbed_launch(cfg: &ScenarioConfig, seed: u64, index: usize) -> VehicleState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let a = &cfg.ablation;
    let jitter = |rng: &mut ChaCha8Rng, h: f64| if h > 0.0 { rng.gen_range(-h..=h) } else { 0.0 };
    let dx = jitter(&mut rng, a.position_jitter);
    let dz = jitter(&mut rng, a.position_jitter);
    let dv = jitter(&mut rng, a.speed_jitter);
    let mut launch = cfg.clone();
    launch.launch.x += dx;
    launch.launch.z += dz;
    launch.launch.speed += dv;
    launch.initial_state()
}

/// Closest-approach cost of flying `policy` from `initial` on the unsteady
/// model with `mode`'s wing; `None` if the run diverged.
pub fn execute(
    cfg: &ScenarioConfig,
    mode: Mode,
    initial: VehicleState,
    policy: &mut dyn ControlPolicy,
) -> Result<Option<f64>> {
    let truth = Mode {
        model: AeroModel::Unsteady,
        ..mode
    };
    let sim = Arc::new(cfg.sim_config_for(truth)?);
    let steps = steps_for(cfg.planner.horizon, sim.dt);
    let (t, failure) = run_logged(sim, initial, policy, steps)?;
    Ok(failure.is_none().then(|| trajectory_cost(&t, &cfg.target)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRow {
    pub mode: Mode,
    /// Closest-approach cost per launch; `None` marks a diverged run.
    pub costs: Vec<Option<f64>>,
    /// Cost of the plan on the mode's own model.
    pub plan_cost: Option<f64>,
    /// Planning or feedback synthesis error, if any.
    pub failure: Option<String>,
}

impl ModeRow {
    pub fn finite(&self) -> Vec<f64> {
        self.costs.iter().flatten().copied().collect()
    }

    pub fn diverged(&self) -> usize {
        self.costs.iter().filter(|c| c.is_none()).count()
    }

    /// Mean and population standard deviation over runs that did not diverge.
    pub fn mean_std(&self) -> Option<(f64, f64)> {
        let v = self.finite();
        if v.is_empty() {
            return None;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / v.len() as f64;
        Some((m, var.sqrt()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub seed: u64,
    pub rows: Vec<ModeRow>,
}

impl AblationReport {
    /// Mean of the fixed-wing quasi-steady row, the normalizer.
    pub fn baseline_mean(&self) -> Option<f64> {
        self.rows.first().and_then(|r| r.mean_std()).map(|m| m.0)
    }

    /// Normalized mean and standard deviation of `mode`.
    pub fn normalized(&self, mode: Mode) -> Option<(f64, f64)> {
        let base = self.baseline_mean()?;
        let row = self.rows.iter().find(|r| r.mode == mode)?;
        row.mean_std().map(|(m, s)| (m / base, s / base))
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<24} {:>5} {:>8} {:>12} {:>12} {:>22}",
            "mode", "runs", "diverged", "mean", "std", "normalized mean ± std"
        )
        .unwrap();
        for r in &self.rows {
            let norm = self.normalized(r.mode);
            let (mean, std) = r.mean_std().map_or(("failed".to_string(), "-".to_string()), |(m, s)| {
                (format!("{m:.6}"), format!("{s:.6}"))
            });
            let n = norm.map_or("n/a".to_string(), |(m, s)| format!("{m:.4} ± {s:.4}"));
            writeln!(
                s,
                "{:<24} {:>5} {:>8} {:>12} {:>12} {:>22}",
                r.mode.label(),
                r.costs.len(),
                r.diverged(),
                mean,
                std,
                n
            )
            .unwrap();
        }
        s
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_path(out.join("ablation.csv"))?;
        w.write_record(["mode", "launch", "cost", "normalized_cost"])?;
        let base = self.baseline_mean();
        for r in &self.rows {
            for (i, c) in r.costs.iter().enumerate() {
                let norm = match (c, base) {
                    (Some(c), Some(b)) => format!("{}", c / b),
                    _ => String::new(),
                };
                w.write_record([
                    r.mode.label().to_string(),
                    i.to_string(),
                    c.map_or(String::new(), |c| format!("{c}")),
                    norm,
                ])?;
            }
        }
        w.flush()?;
        io::write_text(&out.join("ablation.txt"), &self.table())
    }
}

/// Plan and stabilize each of the four modes with its own model, then fly
/// every mode's policy from the same perturbed launches on the unsteady
/// model. A mode whose planning fails keeps an empty row.
pub fn ablation(cfg: &ScenarioConfig, seed: u64) -> Result<AblationReport> {
    let launches: Vec<VehicleState> = (0..cfg.ablation.seeds)
        .map(|i| perturbed_launch(cfg, seed, i))
        .collect();
    let mut rows = Vec::with_capacity(4);
    for mode in Mode::ALL {
        let stabilized = match plan_and_stabilize(cfg, mode, seed) {
            Ok(s) => s,
            Err(e) => {
                rows.push(ModeRow {
                    mode,
                    costs: Vec::new(),
                    plan_cost: None,
                    failure: Some(e.to_string()),
                });
                continue;
            }
        };
        let costs = launches
            .par_iter()
            .map(|&x0| execute(cfg, mode, x0, &mut stabilized.policy.clone()))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ModeRow {
            mode,
            costs,
            plan_cost: Some(stabilized.plan.cost),
            failure: None,
        });
    }
    Ok(AblationReport { seed, rows })
}

/// Open- and closed-loop costs of `s` from launches whose forward speed is
/// offset by a seeded uniform draw in ±`speed_offset`.
pub fn closed_loop_trials(
    cfg: &ScenarioConfig,
    s: &Stabilized,
    seed: u64,
    trials: usize,
    speed_offset: f64,
) -> Result<Vec<(f64, Option<f64>, Option<f64>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<f64> = (0..trials)
        .map(|_| rng.gen_range(-speed_offset..=speed_offset))
        .collect();
    offsets
        .par_iter()
        .map(|&dv| {
            let mut x0 = cfg.initial_state();
            x0.xdot += dv;
            let open = execute(cfg, s.mode, x0, &mut s.plan.sequence.clone())?;
            let closed = execute(cfg, s.mode, x0, &mut s.policy.clone())?;
            Ok((dv, open, closed))
        })
        .collect()
}

/// Run the reference cases and write `validation.txt`.
pub fn validate(out: Option<&Path>) -> Result<Vec<Check>> {
    let checks = validation::suite()?;
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        let text: String = checks.iter().map(|c| c.line() + "\n").collect();
        io::write_text(&out.join("validation.txt"), &text)?;
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.mode.model = AeroModel::QuasiSteady;
        cfg.planner.samples = 6;
        cfg.planner.iterations = 2;
        cfg.planner.horizon = 0.2;
        cfg.ablation.seeds = 2;
        cfg
    }

    #[test]
    fn perturbed_launches_stay_in_the_box_and_repeat() {
        let cfg = ScenarioConfig::default();
        let nominal = cfg.initial_state();
        for i in 0..20 {
            let a = perturbed_launch(&cfg, 3, i);
            assert_eq!(a, perturbed_launch(&cfg, 3, i));
            assert!((a.x - nominal.x).abs() <= 0.05 && (a.z - nominal.z).abs() <= 0.05);
            assert!((a.xdot - nominal.xdot).abs() <= 0.3);
        }
        assert_ne!(perturbed_launch(&cfg, 3, 0), perturbed_launch(&cfg, 3, 1));
        assert_ne!(perturbed_launch(&cfg, 3, 0), perturbed_launch(&cfg, 4, 0));
    }

    #[test]
    fn empty_control_file_gives_single_record() {
        let dir = tempfile::tempdir().unwrap();
        let plan = dir.path().join("plan.csv");
        io::write_plan(&plan, &ControlSequence::zeros(0.05, 0)).unwrap();
        let s = simulate(&ScenarioConfig::default(), Some(&plan), 0, dir.path(), None).unwrap();
        assert_eq!(s.steps, 0);
        assert_eq!(s.trajectory.records.len(), 1);
        let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn baseline_row_normalizes_to_one() {
        let report = AblationReport {
            seed: 0,
            rows: Mode::ALL
                .iter()
                .enumerate()
                .map(|(i, &mode)| ModeRow {
                    mode,
                    costs: vec![Some(1.0 + i as f64), Some(3.0 + i as f64), None],
                    plan_cost: None,
                    failure: None,
                })
                .collect(),
        };
        assert_eq!(report.normalized(Mode::ALL[0]).unwrap().0, 1.0);
        assert_eq!(report.normalized(Mode::ALL[3]).unwrap().0, 5.0 / 2.0);
        assert!(report.table().contains("fixed/quasi-steady"));
    }

    #[test]
    fn failed_mode_still_yields_a_table() {
        let report = AblationReport {
            seed: 0,
            rows: vec![ModeRow {
                mode: Mode::ALL[0],
                costs: vec![None, None],
                plan_cost: None,
                failure: None,
            }],
        };
        assert!(report.normalized(Mode::ALL[0]).is_none());
        assert!(report.table().contains("failed"));
    }

    #[test]
    fn quick_ablation_runs_every_mode() {
        let report = ablation(&quick(), 1).unwrap();
        assert_eq!(report.rows.len(), 4);
        for r in &report.rows {
            assert_eq!(r.costs.len(), 2, "{:?}", r.failure);
        }
        let (m, _) = report.normalized(Mode::ALL[0]).unwrap();
        assert!((m - 1.0).abs() < 1e-15);
    }
}
