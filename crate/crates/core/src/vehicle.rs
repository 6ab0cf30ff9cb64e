//! Planar rigid-body vehicle built from independent 2D wing slices.
//!
//! World frame: x downrange, z up. Body frame: x toward the nose, z up, origin
//! at the centre of mass. Pitch `theta` rotates body to world
//! counterclockwise (nose-up positive). The wing is represented by slices of
//! one half-wing; in planar flight the other half is its mirror image, so each
//! wing slice's loads count twice. The tail is a single all-moving slice.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{ControlInput, ControlPolicy};
use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, VortexParticle};
use crate::section::{self, FluidParams, MergeSettings, SectionFluid};
use crate::vec2::Vec2;
use crate::wake::Integrator;
use crate::wing::{SectionLoads, SectionMotion, SectionPose, WingSection};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub z: f64,
    /// Pitch (rad), nose-up positive.
    pub theta: f64,
    pub xdot: f64,
    pub zdot: f64,
    pub thetadot: f64,
    /// Wing sweep (rad); 0 = leading edge square to the fuselage, negative = aft.
    pub sweep_left: f64,
    pub sweep_right: f64,
    /// Elevator deflection (rad), trailing edge down positive.
    pub elevator: f64,
}

impl VehicleState {
    pub const PLANAR_DIM: usize = 6;

    /// Level flight at `speed` from the origin with actuators centred.
    pub fn launch(speed: f64) -> Self {
        Self {
            xdot: speed,
            ..Self::default()
        }
    }

    /// `[x, z, θ, ẋ, ż, θ̇]`
    pub fn planar(&self) -> [f64; 6] {
        [self.x, self.z, self.theta, self.xdot, self.zdot, self.thetadot]
    }

    pub fn set_planar(&mut self, p: &[f64]) {
        self.x = p[0];
        self.z = p[1];
        self.theta = p[2];
        self.xdot = p[3];
        self.zdot = p[4];
        self.thetadot = p[5];
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.z)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.xdot, self.zdot)
    }

    pub fn sweep(&self) -> f64 {
        0.5 * (self.sweep_left + self.sweep_right)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.z,
            self.theta,
            self.xdot,
            self.zdot,
            self.thetadot,
            self.sweep_left,
            self.sweep_right,
            self.elevator,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// World position of a body-frame point.
    pub fn body_to_world(&self, b: Vec2) -> Vec2 {
        self.position() + b.rotate(self.theta)
    }

    /// World velocity of a body-frame point that itself moves at `b_rate` in the body frame.
    pub fn point_velocity(&self, b: Vec2, b_rate: Vec2) -> Vec2 {
        let r = b.rotate(self.theta);
        self.velocity() + r.perp() * self.thetadot + b_rate.rotate(self.theta)
    }
}

/// Which aerodynamic model drives the lifting surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AeroModel {
    #[default]
    Unsteady,
    QuasiSteady,
}

/// One spanwise strip of the half-wing, described unswept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WingSlice {
    /// Spanwise distance of the strip centre from the sweep pivot (m).
    pub station: f64,
    /// Strip width (m).
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailGeometry {
    pub chord: f64,
    pub span: f64,
    /// Body x of the tail quarter chord (m).
    pub quarter_chord_x: f64,
    /// Rigging incidence relative to the body axis (rad).
    pub incidence: f64,
}

/// Non-lifting surface treated with a quasi-steady drag coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DragSurface {
    /// Body x of the reference point (m).
    pub x: f64,
    pub area: f64,
    pub drag_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleGeometry {
    pub mass: f64,
    pub inertia_yy: f64,
    pub wing_chord: f64,
    /// Body x of the wing root quarter chord, which is also the sweep pivot (m).
    pub wing_quarter_chord_x: f64,
    pub wing_incidence: f64,
    /// Strips of one half-wing; mirrored for the other half.
    pub wing_slices: Vec<WingSlice>,
    pub tail: TailGeometry,
    pub elevator_limit: f64,
    /// Elevator slew rate (rad/s).
    pub elevator_rate_limit: f64,
    pub sweep_min: f64,
    pub sweep_max: f64,
    /// Time to traverse the full sweep range at the rate limit (s).
    pub sweep_travel_time: f64,
    /// Sweep beyond which the streamwise chord stops growing (rad).
    pub chord_sweep_cap: f64,
    pub drag_surfaces: Vec<DragSurface>,
    pub gravity: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        let semispan = 0.35;
        let n = 4;
        let width = semispan / n as f64;
        Self {
            mass: 0.200,
            inertia_yy: 0.004,
            wing_chord: 0.16,
            wing_quarter_chord_x: 0.02,
            wing_incidence: 0.0,
            wing_slices: (0..n)
                .map(|i| WingSlice {
                    station: (i as f64 + 0.5) * width,
                    width,
                })
                .collect(),
            tail: TailGeometry {
                chord: 0.08,
                span: 0.24,
                quarter_chord_x: -0.42,
                incidence: -0.06,
            },
            elevator_limit: 0.5,
            elevator_rate_limit: 10.0,
            sweep_min: -std::f64::consts::FRAC_PI_2,
            sweep_max: std::f64::consts::FRAC_PI_6,
            sweep_travel_time: 0.2,
            chord_sweep_cap: 60f64.to_radians(),
            drag_surfaces: vec![
                DragSurface {
                    x: -0.1,
                    area: 0.006,
                    drag_coefficient: 0.5,
                },
                DragSurface {
                    x: -0.42,
                    area: 0.01,
                    drag_coefficient: 0.1,
                },
            ],
            gravity: GRAVITY,
        }
    }
}

impl VehicleGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("inertia_yy", self.inertia_yy),
            ("wing_chord", self.wing_chord),
            ("tail.chord", self.tail.chord),
            ("tail.span", self.tail.span),
            ("elevator_limit", self.elevator_limit),
            ("elevator_rate_limit", self.elevator_rate_limit),
            ("sweep_travel_time", self.sweep_travel_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.wing_slices.is_empty() {
            return Err(Error::invalid("wing_slices", "need at least one slice"));
        }
        for s in &self.wing_slices {
            if !(s.width > 0.0 && s.station.is_finite()) {
                return Err(Error::invalid("wing_slices", "widths must be positive"));
            }
        }
        for d in &self.drag_surfaces {
            if !(d.area >= 0.0 && d.drag_coefficient >= 0.0 && d.x.is_finite()) {
                return Err(Error::invalid(
                    "drag_surfaces",
                    "area and coefficient must be non-negative",
                ));
            }
        }
        if !(self.sweep_min < self.sweep_max) {
            return Err(Error::invalid("sweep_min", "must be below sweep_max"));
        }
        if !(self.chord_sweep_cap > 0.0 && self.chord_sweep_cap < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("chord_sweep_cap", "must lie in (0, π/2)"));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(Error::invalid("gravity", "must be non-negative"));
        }
        Ok(())
    }

    /// Sweep slew rate (rad/s): the full range in `sweep_travel_time`.
    pub fn sweep_rate_limit(&self) -> f64 {
        (self.sweep_max - self.sweep_min) / self.sweep_travel_time
    }

    /// Number of simulated sections: the half-wing slices plus the tail.
    pub fn section_count(&self) -> usize {
        self.wing_slices.len() + 1
    }
}

/// Where one simulated section sits this step and how its loads are weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePlacement {
    pub chord: f64,
    pub pose: SectionPose,
    pub motion: SectionMotion,
    /// Strip width normal to the flight plane (m).
    pub span: f64,
    /// 2 for a half-wing strip standing in for its mirror image, 1 for the tail.
    pub multiplicity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceLayout {
    pub slices: Vec<SlicePlacement>,
    /// True when the state's sweep was outside the limits and was clamped.
    pub sweep_clamped: bool,
}

/// Section poses and motions for the current state. Wing slices come first,
/// the tail last. `sweep_rate` is the actuator rate this step.
///
/// Sweeping by Λ about the root pivot moves a strip at unswept station `s`
/// to spanwise position `s·cos Λ` and shifts its quarter chord forward by
/// `s·sin Λ` (aft for negative Λ), i.e. `y·tan Λ` at its new station `y`.
/// The streamwise chord becomes `c / cos Λ` (Λ capped at `chord_sweep_cap`)
/// and the strip width `w·cos Λ`, which keeps strip area constant.
pub fn assemble_slices(geometry: &VehicleGeometry, state: &VehicleState, sweep_rate: f64) -> SliceLayout {
    let raw = state.sweep();
    let sweep = raw.clamp(geometry.sweep_min, geometry.sweep_max);
    let sweep_clamped = sweep != raw;
    let sweep_rate = if sweep_clamped { 0.0 } else { sweep_rate };
    let capped = sweep.clamp(-geometry.chord_sweep_cap, geometry.chord_sweep_cap);
    let chord = geometry.wing_chord / capped.cos();
    let incidence = state.theta + geometry.wing_incidence;
    let mut slices = Vec::with_capacity(geometry.section_count());
    for s in &geometry.wing_slices {
        let offset = s.station * sweep.sin();
        let offset_rate = s.station * sweep.cos() * sweep_rate;
        let b = Vec2::new(geometry.wing_quarter_chord_x + offset, 0.0);
        let pivot = state.body_to_world(b);
        slices.push(SlicePlacement {
            chord,
            pose: SectionPose {
                pivot,
                pivot_station: 0.25 * chord,
                incidence,
            },
            motion: SectionMotion {
                velocity: state.point_velocity(b, Vec2::new(offset_rate, 0.0)),
                angular_rate: state.thetadot,
            },
            span: s.width * sweep.cos().max(0.0),
            multiplicity: 2.0,
        });
    }
    let t = &geometry.tail;
    let b = Vec2::new(t.quarter_chord_x, 0.0);
    slices.push(SlicePlacement {
        chord: t.chord,
        pose: SectionPose {
            pivot: state.body_to_world(b),
            pivot_station: 0.25 * t.chord,
            incidence: state.theta + t.incidence + state.elevator,
        },
        motion: SectionMotion {
            velocity: state.point_velocity(b, Vec2::ZERO),
            angular_rate: state.thetadot,
        },
        span: t.span,
        multiplicity: 1.0,
    });
    SliceLayout { slices, sweep_clamped }
}

/// Force (N) and pitching moment about the centre of mass (N·m, nose-up positive).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyLoads {
    pub force: Vec2,
    pub moment: f64,
}

impl BodyLoads {
    fn add_at(&mut self, arm: Vec2, force: Vec2, moment: f64) {
        self.force += force;
        self.moment += moment + arm.cross(force);
    }
}

/// Quasi-steady drag of the non-lifting surfaces, each `½ρ|v|²·A·C_d` along
/// `−v` at its reference point, in still air.
pub fn quasi_steady_contribution(state: &VehicleState, geometry: &VehicleGeometry, rho: f64) -> BodyLoads {
    let mut loads = BodyLoads::default();
    for d in &geometry.drag_surfaces {
        let b = Vec2::new(d.x, 0.0);
        let v = state.point_velocity(b, Vec2::ZERO);
        let speed = v.norm();
        if speed == 0.0 {
            continue;
        }
        let f = v * (-0.5 * rho * speed * d.area * d.drag_coefficient);
        loads.add_at(b.rotate(state.theta), f, 0.0);
    }
    loads
}

/// Post-stall cap on the quasi-steady lift coefficient.
pub const QS_LIFT_CAP: f64 = 1.2;
/// Zero-incidence drag coefficient of the quasi-steady plate.
pub const QS_DRAG_ZERO: f64 = 0.02;

/// Flat-plate quasi-steady lift and drag coefficients at angle of attack `alpha`.
pub fn flat_plate_coefficients(alpha: f64) -> (f64, f64) {
    let cl = (2.0 * std::f64::consts::PI * alpha.sin() * alpha.cos()).clamp(-QS_LIFT_CAP, QS_LIFT_CAP);
    let cd = QS_DRAG_ZERO + 2.0 * alpha.sin().powi(2);
    (cl, cd)
}

/// Quasi-steady surrogate loads for one strip in still air.
///
/// The angle of attack comes from the strip's motion at three-quarter chord;
/// the force acts at `c·(0.25 + 0.25·|sin α|)` aft of the leading edge, which
/// walks the centre of pressure toward midchord as the plate stalls.
/// Moment is about the section pivot, like the unsteady section loads.
pub fn quasi_steady_section_loads(placement: &SlicePlacement, rho: f64) -> SectionLoads {
    let c = placement.chord;
    let tangent = -Vec2::from_angle(placement.pose.incidence);
    let at = |station: f64| placement.pose.pivot + tangent * (station - placement.pose.pivot_station);
    let p34 = at(0.75 * c);
    let u = placement.motion.velocity + (p34 - placement.pose.pivot).perp() * placement.motion.angular_rate;
    let speed = u.norm();
    if speed == 0.0 || placement.span == 0.0 {
        return SectionLoads::default();
    }
    let forward = -tangent;
    let alpha = u.cross(forward).atan2(u.dot(forward));
    let (cl, cd) = flat_plate_coefficients(alpha);
    let uhat = u * (1.0 / speed);
    let q = 0.5 * rho * speed * speed * c * placement.span;
    let force = (uhat.perp() * cl - uhat * cd) * q;
    let cp = at(c * (0.25 + 0.25 * alpha.sin().abs()));
    SectionLoads {
        force,
        moment: (cp - placement.pose.pivot).cross(force),
    }
}

/// One wake per simulated section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FluidState {
    pub slices: Vec<SectionFluid>,
}

impl FluidState {
    /// Still air with zero circulation around every section.
    pub fn at_rest(geometry: &VehicleGeometry) -> Self {
        Self {
            slices: vec![SectionFluid::default(); geometry.section_count()],
        }
    }

    pub fn particle_counts(&self) -> Vec<usize> {
        self.slices.iter().map(|s| s.wake.len()).collect()
    }

    /// Carry every wake and trailing-edge marker rigidly from the body pose
    /// of `from` to that of `to`, so the fluid keeps its place relative to
    /// the wings.
    pub fn carry(&mut self, from: &VehicleState, to: &VehicleState) {
        let dtheta = to.theta - from.theta;
        let (p0, p1) = (from.position(), to.position());
        let f = |p: Vec2| p1 + (p - p0).rotate(dtheta);
        for s in &mut self.slices {
            s.wake.map_positions(f);
            if let Some(t) = s.last_trailing.as_mut() {
                *t = f(*t);
            }
        }
    }

    /// Max over sections of |ΣΓ(now) − ΣΓ(initial)| / max(1, max|Γ|).
    pub fn kelvin_drift(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| (s.total_circulation() - s.initial_circulation).abs() / s.max_abs_strength().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Everything about a simulation that does not change while it runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub geometry: VehicleGeometry,
    pub fluid: FluidParams,
    pub n_bound: usize,
    pub dt: f64,
    pub model: AeroModel,
    /// False freezes the wings unswept regardless of the command.
    pub sweep_enabled: bool,
    /// Keep a wake snapshot every this many steps (`None` keeps none).
    pub snapshot_stride: Option<usize>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if self.n_bound < 2 {
            return Err(Error::invalid("n_bound", "need at least two bound vortices"));
        }
        if !(self.fluid.rho >= 0.0 && self.fluid.rho.is_finite()) {
            return Err(Error::invalid("rho", "must be non-negative"));
        }
        if let Some(0) = self.snapshot_stride {
            return Err(Error::invalid("snapshot_stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// Logged quantities for one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub time: f64,
    pub state: VehicleState,
    /// Command applied over the step that starts at `time` (the last record repeats the previous one).
    pub control: ControlInput,
    /// Total aerodynamic force (N) and moment about the centre of mass (N·m) over that step.
    pub force: Vec2,
    pub moment: f64,
    pub particle_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WakeSnapshot {
    pub step: usize,
    pub time: f64,
    pub slices: Vec<Vec<VortexParticle>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub snapshots: Vec<WakeSnapshot>,
}

impl Trajectory {
    pub fn states(&self) -> impl Iterator<Item = &VehicleState> {
        self.records.iter().map(|r| &r.state)
    }

    pub fn final_state(&self) -> Option<&VehicleState> {
        self.records.last().map(|r| &r.state)
    }
}

/// Outcome of a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub aero: BodyLoads,
    pub applied: ControlInput,
    pub sweep_clamped: bool,
}

/// A vehicle and its per-section fluid, advanced together.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub config: Arc<SimConfig>,
    pub state: VehicleState,
    pub fluid: FluidState,
    pub step_index: usize,
}

impl Simulator {
    pub fn new(config: Arc<SimConfig>, state: VehicleState) -> Result<Self> {
        config.validate()?;
        let fluid = FluidState::at_rest(&config.geometry);
        Ok(Self {
            config,
            state,
            fluid,
            step_index: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.config.dt
    }

    fn actuate(&self, input: ControlInput) -> (f64, f64, f64) {
        let g = &self.config.geometry;
        let dt = self.config.dt;
        let s = &self.state;
        let de_max = g.elevator_rate_limit * dt;
        let elevator = s.elevator
            + (input.elevator_cmd.clamp(-g.elevator_limit, g.elevator_limit) - s.elevator).clamp(-de_max, de_max);
        let sweep_cmd = if self.config.sweep_enabled {
            input.sweep_cmd.clamp(g.sweep_min, g.sweep_max)
        } else {
            0.0
        };
        let ds_max = g.sweep_rate_limit() * dt;
        let sweep = s.sweep() + (sweep_cmd - s.sweep()).clamp(-ds_max, ds_max);
        (elevator, sweep, (sweep - s.sweep()) / dt)
    }

    /// Advance one step under `input`.
    ///
    /// Actuators slew toward the command first, then every section is solved
    /// at the resulting pose, loads are summed with the body drag and gravity,
    /// the rigid body takes a semi-implicit Euler step, and each wake sheds,
    /// convects and merges.
    pub fn step(&mut self, input: ControlInput) -> Result<StepOutput> {
        let cfg = self.config.clone();
        let g = &cfg.geometry;
        let dt = cfg.dt;
        let (elevator, sweep, sweep_rate) = self.actuate(input);
        self.state.elevator = elevator;
        self.state.sweep_left = sweep;
        self.state.sweep_right = sweep;

        let layout = assemble_slices(g, &self.state, sweep_rate);
        let cg = self.state.position();
        let mut aero = BodyLoads::default();
        let rho = cfg.fluid.rho;
        for (k, placement) in layout.slices.iter().enumerate() {
            let loads = match cfg.model {
                AeroModel::QuasiSteady => quasi_steady_section_loads(placement, rho),
                AeroModel::Unsteady => {
                    let section = WingSection::new(placement.chord, cfg.n_bound, placement.pose, placement.motion)?;
                    let out = section::advance_section(
                        &section,
                        &mut self.fluid.slices[k],
                        Vec2::ZERO,
                        dt,
                        placement.span,
                        &cfg.fluid,
                    )
                    .map_err(|e| match e {
                        Error::SingularSystem { .. } => Error::Diverged {
                            time: self.time(),
                            partial: None,
                        },
                        other => other,
                    })?;
                    out.loads
                }
            };
            let m = placement.multiplicity;
            aero.add_at(placement.pose.pivot - cg, loads.force * m, loads.moment * m);
        }
        let body = quasi_steady_contribution(&self.state, g, rho);
        aero.add_at(Vec2::ZERO, body.force, body.moment);

        let s = &mut self.state;
        let acc = aero.force * (1.0 / g.mass) - Vec2::new(0.0, g.gravity);
        let alpha = aero.moment / g.inertia_yy;
        s.xdot += acc.x * dt;
        s.zdot += acc.z * dt;
        s.thetadot += alpha * dt;
        s.x += s.xdot * dt;
        s.z += s.zdot * dt;
        s.theta += s.thetadot * dt;
        self.step_index += 1;
        if !self.state.is_finite() || self.state.velocity().norm() > DIVERGENCE_SPEED {
            return Err(Error::Diverged {
                time: self.time(),
                partial: None,
            });
        }
        Ok(StepOutput {
            aero,
            applied: input,
            sweep_clamped: layout.sweep_clamped,
        })
    }

    fn snapshot(&self) -> WakeSnapshot {
        WakeSnapshot {
            step: self.step_index,
            time: self.time(),
            slices: self.fluid.slices.iter().map(|s| s.wake.particles().collect()).collect(),
        }
    }

    /// Run `steps` steps under `policy`, logging every state.
    ///
    /// The trajectory holds `steps + 1` records. On divergence the error
    /// carries everything logged up to the failing step.
    pub fn run(&mut self, policy: &mut dyn ControlPolicy, steps: usize) -> Result<Trajectory> {
        let mut traj = Trajectory::default();
        let stride = self.config.snapshot_stride;
        let mut last = ControlInput::ZERO;
        let mut last_loads = BodyLoads::default();
        for _ in 0..steps {
            let t = self.time();
            let cmd = policy.command(t, &self.state);
            let before = self.state;
            if let Some(k) = stride {
                if self.step_index % k == 0 {
                    traj.snapshots.push(self.snapshot());
                }
            }
            let counts = self.fluid.particle_counts();
            match self.step(cmd) {
                Ok(out) => {
                    traj.records.push(Record {
                        time: t,
                        state: before,
                        control: cmd,
                        force: out.aero.force,
                        moment: out.aero.moment,
                        particle_counts: counts,
                    });
                    last = cmd;
                    last_loads = out.aero;
                }
                Err(Error::Diverged { time, .. }) => {
                    traj.records.push(Record {
                        time: t,
                        state: before,
                        control: cmd,
                        force: Vec2::ZERO,
                        moment: 0.0,
                        particle_counts: counts,
                    });
                    return Err(Error::Diverged {
                        time,
                        partial: Some(Box::new(traj)),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(k) = stride {
            if self.step_index % k == 0 {
                traj.snapshots.push(self.snapshot());
            }
        }
        traj.records.push(Record {
            time: self.time(),
            state: self.state,
            control: last,
            force: last_loads.force,
            moment: last_loads.moment,
            particle_counts: self.fluid.particle_counts(),
        });
        Ok(traj)
    }
}

/// Speeds above this (m/s) are treated as a blown-up simulation.
pub const DIVERGENCE_SPEED: f64 = 200.0;

/// Convenience: simulate from `initial` for `steps` steps.
pub fn run(
    config: Arc<SimConfig>,
    initial: VehicleState,
    policy: &mut dyn ControlPolicy,
    steps: usize,
) -> Result<Trajectory> {
    Simulator::new(config, initial)?.run(policy, steps)
}

/// Default merge thresholds for the desk-scale vehicle.
pub const DEFAULT_MERGE: MergeSettings = MergeSettings {
    velocity_threshold: 0.005,
    candidate_radius: 0.02,
    exclusion_chords: 1.0,
    radius_growth: 0.5,
};

impl Default for SimConfig {
    fn default() -> Self {
        let geometry = VehicleGeometry::default();
        let core = 0.05 * geometry.wing_chord;
        Self {
            geometry,
            fluid: FluidParams {
                kernel: KernelConfig { core_radius: core },
                rho: 1.225,
                shed_fraction: 1.0 / 3.0,
                integrator: Integrator::Euler,
                merge: Some(DEFAULT_MERGE),
                audit: false,
            },
            n_bound: 16,
            dt: 0.005,
            model: AeroModel::Unsteady,
            sweep_enabled: true,
            snapshot_stride: None,
        }
    }
}
