//! One coupled fluid step for a single 2D section and its own wake.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, VortexParticle};
use crate::vec2::Vec2;
use crate::wake::{self, ExternalField, Integrator, MergeConfig, Wake};
use crate::wing::{self, BoundSolution, SectionLoads, WingSection};

/// Numerical settings shared by every section of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub kernel: KernelConfig,
    /// Air density (kg/m³).
    pub rho: f64,
    /// Fraction of the way from an edge toward its previous shed particle.
    pub shed_fraction: f64,
    pub integrator: Integrator,
    /// Merge settings; the exclusion radius is `merge_exclusion_chords × chord`.
    pub merge: Option<MergeSettings>,
    /// Evaluate the boundary residual directly after every solve.
    pub audit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeSettings {
    pub velocity_threshold: f64,
    pub candidate_radius: f64,
    pub exclusion_chords: f64,
    pub radius_growth: f64,
}

impl MergeSettings {
    pub fn for_chord(&self, chord: f64) -> MergeConfig {
        MergeConfig {
            velocity_threshold: self.velocity_threshold,
            candidate_radius: self.candidate_radius,
            exclusion_radius: self.exclusion_chords * chord,
            radius_growth: self.radius_growth,
        }
    }
}

/// Fluid state owned by one section: its wake plus the bookkeeping the
/// pressure rate term and the shedding rule need from the previous step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SectionFluid {
    pub wake: Wake,
    pub initial_circulation: f64,
    /// Bound circulation from the last solve.
    pub bound_strengths: Vec<f64>,
    pub(crate) previous_cumulative: Option<Vec<f64>>,
    pub(crate) last_trailing: Option<Vec2>,
}

impl SectionFluid {
    /// Σ Γ of bound and wake vortices.
    pub fn total_circulation(&self) -> f64 {
        self.bound_strengths.iter().sum::<f64>() + self.wake.total_strength()
    }

    /// Largest |Γ| carried by any vortex in this section.
    pub fn max_abs_strength(&self) -> f64 {
        self.bound_strengths
            .iter()
            .chain(self.wake.strengths())
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct SectionStep {
    pub solution: BoundSolution,
    pub pressure: Vec<f64>,
    pub loads: SectionLoads,
    /// Directly evaluated max |normal relative velocity| at the control points, when audited.
    pub boundary_residual: Option<f64>,
}

/// Solve, load, shed, convect and merge for one section over `dt`.
///
/// `section` must already be at the pose and motion for the start of the
/// step; loads are per `span` metres of strip width.
pub fn advance_section(
    section: &WingSection,
    fluid: &mut SectionFluid,
    ambient: Vec2,
    dt: f64,
    span: f64,
    params: &FluidParams,
) -> Result<SectionStep> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let core4 = params.kernel.core4();
    let edge_flow = [section.leading_edge(), section.trailing_edge()]
        .map(|p| ambient + fluid.wake.velocity_at(p, core4) - section.surface_velocity(p));
    let shed = wing::shed_edge_particles(section, fluid.last_trailing, edge_flow, dt, params.shed_fraction);
    let system = wing::assemble_system(
        section,
        &fluid.wake,
        shed,
        ambient,
        &params.kernel,
        fluid.initial_circulation,
    );
    let solution = wing::solve_bound_strengths(&system)?.with_rates(fluid.previous_cumulative.as_deref(), dt);
    let boundary_residual = if params.audit {
        Some(wing::boundary_residual(
            section,
            &solution,
            &fluid.wake,
            shed,
            ambient,
            &params.kernel,
        )?)
    } else {
        None
    };
    let rel = wing::relative_flow_at_bound(section, &solution, &fluid.wake, shed, ambient, &params.kernel);
    let pressure = wing::pressure_distribution(section, &solution, &rel, params.rho);
    let loads = wing::integrate_loads(section, &pressure, span);

    let mut wake = std::mem::take(&mut fluid.wake);
    wake.push(solution.new_le_strength, shed[0]);
    wake.push(solution.new_te_strength, shed[1]);
    let bound: Vec<VortexParticle> = section
        .bound_positions
        .iter()
        .zip(&solution.bound_strengths)
        .map(|(&p, &g)| VortexParticle::bound(g, p))
        .collect();
    let field = ExternalField { ambient, bound: &bound };
    let moved = wake::convect(&wake, &field, dt, &params.kernel, params.integrator)?;
    let n = moved.len();
    fluid.last_trailing = Some(moved.positions()[n - 1]);
    fluid.wake = match &params.merge {
        Some(m) => {
            // The newest pair sits at the edges and is always inside the
            // exclusion radius, so it keeps its place at the end of the wake.
            wake::merge_pass(
                &moved,
                &section.control_points,
                &m.for_chord(section.chord),
                &params.kernel,
            )
        }
        None => moved,
    };
    fluid.bound_strengths = solution.bound_strengths.clone();
    // The particle that is newest now will be an old wake particle next step,
    // with a frozen strength, so only the bound part carries over.
    fluid.previous_cumulative = Some(
        solution
            .cumulative
            .iter()
            .map(|c| c - solution.new_le_strength)
            .collect(),
    );

    Ok(SectionStep {
        solution,
        pressure,
        loads,
        boundary_residual,
    })
}
