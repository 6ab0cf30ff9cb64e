use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use vortex_perch::commands;
use vortex_perch::config::ScenarioConfig;
use vortex_perch::error::Result;

#[derive(Parser)]
#[command(
    name = "vortex-perch",
    version,
    about = "Planar vortex-particle perching simulator and planner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Record a wake snapshot every n steps.
    #[arg(long)]
    snapshot_stride: Option<usize>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fly a control file (or zero controls) and log the trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Plan file as written by `plan`.
        #[arg(long)]
        controls: Option<PathBuf>,
    },
    /// Plan a maneuver and build its feedback gains.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the four wing/model configurations from perturbed launches.
    Ablation {
        #[command(flatten)]
        common: Common,
    },
    /// Run the reference cases.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    match &common.config {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Simulate { common, controls } => {
            let cfg = load(&common)?;
            let s = commands::simulate(
                &cfg,
                controls.as_deref(),
                common.seed,
                &common.out,
                common.snapshot_stride,
            )?;
            println!("{} steps, cost {:.6}, wrote {}", s.steps, s.cost, common.out.display());
        }
        Command::Plan { common } => {
            let cfg = load(&common)?;
            let start = Instant::now();
            let s = commands::cmd_plan(&cfg, common.seed, &common.out, common.snapshot_stride)?;
            println!(
                "best cost {:.6} ({:.4} of zero-control), {:.1} s, wrote {}",
                s.plan.cost,
                s.plan.cost / s.plan.zero_control_cost,
                start.elapsed().as_secs_f64(),
                common.out.display()
            );
        }
        Command::Ablation { common } => {
            let cfg = load(&common)?;
            let report = commands::ablation(&cfg, common.seed)?;
            report.write(&common.out)?;
            print!("{}", report.table());
        }
        Command::Validate { common } => {
            let checks = commands::validate(Some(&common.out))?;
            for c in &checks {
                println!("{}", c.line());
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Simulate { common, .. }
        | Command::Plan { common }
        | Command::Ablation { common }
        | Command::Validate { common } => common.threads,
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
