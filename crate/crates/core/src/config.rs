//! Scenario files: one TOML document holding the vehicle, fluid, launch,
//! target, planner, feedback and ablation settings plus the aerodynamic mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::mppi::{MppiParams, TargetSpec};
use crate::section::{FluidParams, MergeSettings};
use crate::tvlqr::LqrWeights;
use crate::vehicle::{AeroModel, SimConfig, VehicleGeometry, VehicleState, DEFAULT_MERGE};
use crate::wake::Integrator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WingMode {
    Fixed,
    #[default]
    Morphing,
}

/// Wing configuration × aerodynamic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mode {
    pub wing: WingMode,
    pub model: AeroModel,
}

impl Mode {
    /// The four configurations, baseline first.
    pub const ALL: [Mode; 4] = [
        Mode {
            wing: WingMode::Fixed,
            model: AeroModel::QuasiSteady,
        },
        Mode {
            wing: WingMode::Fixed,
            model: AeroModel::Unsteady,
        },
        Mode {
            wing: WingMode::Morphing,
            model: AeroModel::QuasiSteady,
        },
        Mode {
            wing: WingMode::Morphing,
            model: AeroModel::Unsteady,
        },
    ];

    pub fn label(&self) -> &'static str {
        match (self.wing, self.model) {
            (WingMode::Fixed, AeroModel::QuasiSteady) => "fixed/quasi-steady",
            (WingMode::Fixed, AeroModel::Unsteady) => "fixed/unsteady",
            (WingMode::Morphing, AeroModel::QuasiSteady) => "morphing/quasi-steady",
            (WingMode::Morphing, AeroModel::Unsteady) => "morphing/unsteady",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeBlock {
    pub enabled: bool,
    /// Largest induced-velocity change per pass at any control point (m/s).
    pub velocity_threshold: f64,
    /// Base pair radius (m).
    pub candidate_radius: f64,
    /// No merging within this many chords of a control point.
    pub exclusion_chords: f64,
    /// Extra pair radius per metre from the nearest control point.
    pub radius_growth: f64,
}

impl Default for MergeBlock {
    fn default() -> Self {
        Self {
            enabled: true,
            velocity_threshold: DEFAULT_MERGE.velocity_threshold,
            candidate_radius: DEFAULT_MERGE.candidate_radius,
            exclusion_chords: DEFAULT_MERGE.exclusion_chords,
            radius_growth: DEFAULT_MERGE.radius_growth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidBlock {
    /// Air density (kg/m³).
    pub rho: f64,
    /// Vortex core radius (m); defaults to 5% of the wing chord.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub core_radius: Option<f64>,
    pub n_bound: usize,
    /// Time step (s).
    pub dt: f64,
    pub shed_fraction: f64,
    pub integrator: Integrator,
    pub merge: MergeBlock,
}

impl Default for FluidBlock {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            rho: sim.fluid.rho,
            core_radius: None,
            n_bound: sim.n_bound,
            dt: sim.dt,
            shed_fraction: sim.fluid.shed_fraction,
            integrator: sim.fluid.integrator,
            merge: MergeBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaunchBlock {
    /// Launch speed along the body axis (m/s).
    pub speed: f64,
    pub x: f64,
    pub z: f64,
    /// Launch pitch (rad); the velocity follows it.
    pub theta: f64,
}

impl Default for LaunchBlock {
    fn default() -> Self {
        Self {
            speed: 7.0,
            x: 0.0,
            z: 0.0,
            theta: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationBlock {
    /// Perturbed launches per mode.
    pub seeds: usize,
    /// Half-width of the uniform launch position perturbation in x and z (m).
    pub position_jitter: f64,
    /// Half-width of the uniform launch speed perturbation (m/s).
    pub speed_jitter: f64,
}

impl Default for AblationBlock {
    fn default() -> Self {
        Self {
            seeds: 10,
            position_jitter: 0.05,
            speed_jitter: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub vehicle: VehicleGeometry,
    pub fluid: FluidBlock,
    pub launch: LaunchBlock,
    pub target: TargetSpec,
    pub planner: MppiParams,
    pub feedback: LqrWeights,
    pub ablation: AblationBlock,
}

/// 1-based line of byte offset `pos` in `text`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].matches('\n').count() + 1
}

/// Line of the first `key = ...` assignment for the last path segment of `field`.
fn line_of_key(text: &str, field: &str) -> Option<usize> {
    let key = field.rsplit('.').next()?;
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

impl ScenarioConfig {
    /// Parse and validate. Missing keys take their defaults; unknown keys
    /// and invalid values are errors with a line reference where possible.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::Config {
                line: line_of_key(text, name),
                message: format!("`{name}` {reason}"),
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            line: None,
            message: format!("cannot read `{}`: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.fluid;
        if !(f.rho > 0.0 && f.rho.is_finite()) {
            return Err(Error::invalid("fluid.rho", "must be positive"));
        }
        if let Some(rc) = f.core_radius {
            if !(rc > 0.0 && rc.is_finite()) {
                return Err(Error::invalid("fluid.core_radius", "must be positive"));
            }
        }
        if !(f.dt > 0.0 && f.dt.is_finite()) {
            return Err(Error::invalid("fluid.dt", "must be positive"));
        }
        if f.n_bound < 2 {
            return Err(Error::invalid("fluid.n_bound", "must be at least 2"));
        }
        if !(f.shed_fraction > 0.0 && f.shed_fraction < 1.0) {
            return Err(Error::invalid("fluid.shed_fraction", "must lie in (0, 1)"));
        }
        let m = &f.merge;
        for (name, v) in [
            ("fluid.merge.velocity_threshold", m.velocity_threshold),
            ("fluid.merge.candidate_radius", m.candidate_radius),
            ("fluid.merge.exclusion_chords", m.exclusion_chords),
            ("fluid.merge.radius_growth", m.radius_growth),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        let l = &self.launch;
        if !(l.speed > 0.0 && l.speed.is_finite()) {
            return Err(Error::invalid("launch.speed", "must be positive"));
        }
        if ![l.x, l.z, l.theta].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("launch.x", "launch pose must be finite"));
        }
        let a = &self.ablation;
        if a.seeds == 0 {
            return Err(Error::invalid("ablation.seeds", "must be at least 1"));
        }
        if !(a.position_jitter >= 0.0 && a.speed_jitter >= 0.0 && a.speed_jitter < l.speed) {
            return Err(Error::invalid(
                "ablation.speed_jitter",
                "jitters must be non-negative and below the launch speed",
            ));
        }
        self.vehicle.validate()?;
        self.target.validate()?;
        self.planner.validate()?;
        self.feedback.validate()?;
        self.sim_config()?.validate()
    }

    /// Simulator settings for this scenario's own mode.
    pub fn sim_config(&self) -> Result<SimConfig> {
        self.sim_config_for(self.mode)
    }

    pub fn sim_config_for(&self, mode: Mode) -> Result<SimConfig> {
        let f = &self.fluid;
        let core = f.core_radius.unwrap_or(0.05 * self.vehicle.wing_chord);
        let merge = f.merge.enabled.then_some(MergeSettings {
            velocity_threshold: f.merge.velocity_threshold,
            candidate_radius: f.merge.candidate_radius,
            exclusion_chords: f.merge.exclusion_chords,
            radius_growth: f.merge.radius_growth,
        });
        Ok(SimConfig {
            geometry: self.vehicle.clone(),
            fluid: FluidParams {
                kernel: KernelConfig::new(core)?,
                rho: f.rho,
                shed_fraction: f.shed_fraction,
                integrator: f.integrator,
                merge,
                audit: false,
            },
            n_bound: f.n_bound,
            dt: f.dt,
            model: mode.model,
            sweep_enabled: mode.wing == WingMode::Morphing,
            snapshot_stride: None,
        })
    }

    /// Launch state: level body axis along the launch pitch, actuators centred.
    pub fn initial_state(&self) -> VehicleState {
        let l = &self.launch;
        VehicleState {
            x: l.x,
            z: l.z,
            theta: l.theta,
            xdot: l.speed * l.theta.cos(),
            zdot: l.speed * l.theta.sin(),
            ..VehicleState::default()
        }
    }
}
