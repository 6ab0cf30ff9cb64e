//! Discretized thin flat-plate section.
//!
//! A section is `n` equal panels with a bound vortex at each panel centre.
//! Control points sit midway between neighbouring bound vortices plus one on
//! each edge, giving `n + 1` no-through-flow conditions. Together with the
//! Kelvin closure they fix the `n` bound strengths and the strengths of the
//! two particles shed from the edges this step.
//!
//! Orientation: `incidence` is the angle of the chord line's forward
//! direction (trailing edge to leading edge) counterclockwise from +x. The
//! tangent `t` points leading edge to trailing edge and the normal is `t`
//! rotated by +90°. Pressure jumps are `p(−n side) − p(+n side)`, so a
//! positive jump pushes along `n`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelConfig};
use crate::vec2::Vec2;
use crate::wake::Wake;

/// World placement of a section: a pivot on the chord line plus incidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionPose {
    pub pivot: Vec2,
    /// Chordwise distance of the pivot aft of the leading edge (m).
    pub pivot_station: f64,
    pub incidence: f64,
}

/// Rigid motion of a section: velocity of its pivot and angular rate (CCW positive).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SectionMotion {
    pub velocity: Vec2,
    pub angular_rate: f64,
}

#[derive(Debug, Clone)]
pub struct WingSection {
    pub chord: f64,
    pub n_bound: usize,
    /// Chordwise stations of the bound vortices, measured from the leading edge.
    pub bound_stations: Vec<f64>,
    /// Chordwise stations of the `n_bound + 1` control points.
    pub control_stations: Vec<f64>,
    pub panel_lengths: Vec<f64>,
    pub pose: SectionPose,
    pub motion: SectionMotion,
    pub bound_positions: Vec<Vec2>,
    pub control_points: Vec<Vec2>,
    pub control_velocities: Vec<Vec2>,
    pub bound_velocities: Vec<Vec2>,
    pub tangent: Vec2,
    pub normal: Vec2,
}

impl WingSection {
    /// Uniform panels with bound vortices at panel centres, placed at `pose`.
    pub fn new(chord: f64, n_bound: usize, pose: SectionPose, motion: SectionMotion) -> Result<Self> {
        if !(chord > 0.0 && chord.is_finite()) {
            return Err(Error::invalid("chord", "must be positive"));
        }
        if n_bound < 1 {
            return Err(Error::invalid("n_bound", "need at least one bound vortex"));
        }
        let dl = chord / n_bound as f64;
        let bound_stations: Vec<f64> = (0..n_bound).map(|i| (i as f64 + 0.5) * dl).collect();
        let mut control_stations = Vec::with_capacity(n_bound + 1);
        control_stations.push(0.0);
        control_stations.extend(bound_stations.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        control_stations.push(chord);
        let mut s = Self {
            chord,
            n_bound,
            bound_stations,
            control_stations,
            panel_lengths: vec![dl; n_bound],
            pose,
            motion,
            bound_positions: Vec::new(),
            control_points: Vec::new(),
            control_velocities: Vec::new(),
            bound_velocities: Vec::new(),
            tangent: Vec2::ZERO,
            normal: Vec2::ZERO,
        };
        s.refresh();
        Ok(s)
    }

    pub fn leading_edge(&self) -> Vec2 {
        self.control_points[0]
    }

    pub fn trailing_edge(&self) -> Vec2 {
        self.control_points[self.n_bound]
    }

    /// World position of a chordwise station.
    pub fn point_at(&self, station: f64) -> Vec2 {
        self.pose.pivot + self.tangent * (station - self.pose.pivot_station)
    }

    /// Rigid-body velocity of a world point attached to the section.
    pub fn surface_velocity(&self, point: Vec2) -> Vec2 {
        self.motion.velocity + (point - self.pose.pivot).perp() * self.motion.angular_rate
    }

    /// Distance from `p` to the chord segment.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let le = self.leading_edge();
        let s = (p - le).dot(self.tangent).clamp(0.0, self.chord);
        (p - (le + self.tangent * s)).norm()
    }

    fn refresh(&mut self) {
        self.tangent = -Vec2::from_angle(self.pose.incidence);
        self.normal = self.tangent.perp();
        self.bound_positions = self.bound_stations.iter().map(|&s| self.point_at(s)).collect();
        self.control_points = self.control_stations.iter().map(|&s| self.point_at(s)).collect();
        self.control_velocities = self.control_points.iter().map(|&p| self.surface_velocity(p)).collect();
        self.bound_velocities = self.bound_positions.iter().map(|&p| self.surface_velocity(p)).collect();
    }
}

/// Move `section` to a new pose and motion, recomputing world-frame quantities.
pub fn geometry_update(section: &WingSection, pose: SectionPose, motion: SectionMotion) -> WingSection {
    let mut s = section.clone();
    s.pose = pose;
    s.motion = motion;
    s.refresh();
    s
}

/// The `(n_bound + 2)`-square boundary-condition system.
///
/// Unknown ordering: bound strengths `0..n`, then the new leading-edge and
/// trailing-edge particle strengths.
#[derive(Debug, Clone)]
pub struct BoundSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub shed_positions: [Vec2; 2],
}

/// Build the no-through-flow rows and the Kelvin closure row.
pub fn assemble_system(
    section: &WingSection,
    wake: &Wake,
    shed_positions: [Vec2; 2],
    ambient: Vec2,
    kernel: &KernelConfig,
    initial_circulation: f64,
) -> BoundSystem {
    let n = section.n_bound;
    let core4 = kernel.core4();
    let size = n + 2;
    let mut matrix = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    let normal = section.normal;
    for (i, &cp) in section.control_points.iter().enumerate() {
        for (j, &bp) in section.bound_positions.iter().enumerate() {
            matrix[(i, j)] = kernel::unit_influence(bp, cp, true, core4).dot(normal);
        }
        for (j, &sp) in shed_positions.iter().enumerate() {
            matrix[(i, n + j)] = kernel::unit_influence(sp, cp, false, core4).dot(normal);
        }
        let known = ambient + wake.velocity_at(cp, core4) - section.control_velocities[i];
        rhs[i] = -known.dot(normal);
    }
    for j in 0..size {
        matrix[(n + 1, j)] = 1.0;
    }
    rhs[n + 1] = initial_circulation - wake.total_strength();
    BoundSystem {
        matrix,
        rhs,
        shed_positions,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSolution {
    pub bound_strengths: Vec<f64>,
    pub new_le_strength: f64,
    pub new_te_strength: f64,
    /// Circulation summed from the new leading-edge particle through bound vortex `i`.
    pub cumulative: Vec<f64>,
    /// d/dt of `cumulative`, filled by [`BoundSolution::with_rates`].
    pub strength_rates: Vec<f64>,
    /// Max |A·x − b| over all rows of the solved system.
    pub algebraic_residual: f64,
}

impl BoundSolution {
    /// Backward-difference rates against the previous step's cumulative sums.
    /// Without a previous step the fluid is taken to start from rest.
    pub fn with_rates(mut self, previous: Option<&[f64]>, dt: f64) -> Self {
        self.strength_rates = match previous {
            Some(prev) => self.cumulative.iter().zip(prev).map(|(c, p)| (c - p) / dt).collect(),
            None => self.cumulative.iter().map(|c| c / dt).collect(),
        };
        self
    }

    pub fn total_unknown_strength(&self) -> f64 {
        self.bound_strengths.iter().sum::<f64>() + self.new_le_strength + self.new_te_strength
    }
}

/// In-place LU with partial pivoting on a row-major `size × size` matrix,
/// then forward and back substitution into `rhs`. Returns the largest and
/// smallest pivot magnitudes.
fn lu_solve_in_place(a: &mut [f64], rhs: &mut [f64], size: usize) -> (f64, f64) {
    let mut max_piv = 0.0f64;
    let mut min_piv = f64::INFINITY;
    for col in 0..size {
        let (p, best) = (col..size)
            .map(|row| (row, a[row * size + col].abs()))
            .fold((col, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        max_piv = max_piv.max(best);
        min_piv = min_piv.min(best);
        if best == 0.0 {
            return (max_piv, 0.0);
        }
        if p != col {
            let (top, bottom) = a.split_at_mut(p * size);
            top[col * size..(col + 1) * size].swap_with_slice(&mut bottom[..size]);
            rhs.swap(col, p);
        }
        let (upper, lower) = a.split_at_mut((col + 1) * size);
        let pivot_row = &upper[col * size + col..(col + 1) * size];
        let inv = 1.0 / pivot_row[0];
        let r = rhs[col];
        for (row, target) in lower.chunks_exact_mut(size).enumerate() {
            let target = &mut target[col..];
            let f = target[0] * inv;
            if f == 0.0 {
                continue;
            }
            target[0] = f;
            for (t, &p) in target[1..].iter_mut().zip(&pivot_row[1..]) {
                *t -= f * p;
            }
            rhs[col + 1 + row] -= f * r;
        }
    }
    for row in (0..size).rev() {
        let coeffs = &a[row * size..(row + 1) * size];
        let acc: f64 = rhs[row]
            - coeffs[row + 1..]
                .iter()
                .zip(&rhs[row + 1..])
                .map(|(c, x)| c * x)
                .sum::<f64>();
        rhs[row] = acc / coeffs[row];
    }
    (max_piv, min_piv)
}

/// Dense LU solve of the boundary system.
pub fn solve_bound_strengths(system: &BoundSystem) -> Result<BoundSolution> {
    let size = system.rhs.len();
    let n = size - 2;
    let mut a: Vec<f64> = system.matrix.transpose().as_slice().to_vec();
    let mut x: Vec<f64> = system.rhs.as_slice().to_vec();
    let (max_piv, min_piv) = lu_solve_in_place(&mut a, &mut x, size);
    if !(min_piv > 1e-13 * max_piv) {
        return Err(Error::SingularSystem {
            condition: max_piv / min_piv,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem {
            condition: max_piv / min_piv,
        });
    }
    let xv = DVector::from_column_slice(&x);
    let residual = (&system.matrix * &xv - &system.rhs).amax();
    let bound_strengths: Vec<f64> = x.iter().take(n).copied().collect();
    let new_le_strength = x[n];
    let mut acc = new_le_strength;
    let cumulative = bound_strengths
        .iter()
        .map(|g| {
            acc += g;
            acc
        })
        .collect();
    Ok(BoundSolution {
        bound_strengths,
        new_le_strength,
        new_te_strength: x[n + 1],
        cumulative,
        strength_rates: Vec::new(),
        algebraic_residual: residual,
    })
}

/// Placement of the two particles shed this step, `[leading, trailing]`.
///
/// The leading-edge particle sits upstream of the edge on the extended chord
/// line, `fraction · |v_rel| · dt` from it. The trailing-edge particle goes a
/// `fraction` of the way from the edge toward the previous trailing-edge
/// particle; on the first step, or once the edge has moved past that particle
/// (a stretching chord), it is offset along the local relative flow by
/// `fraction · |v_rel| · dt`. When that offset would not leave the edge
/// downstream (still or reversed flow) both edges fall back to a fraction of
/// the end panel length along the chord line.
pub fn shed_edge_particles(
    section: &WingSection,
    previous_trailing: Option<Vec2>,
    edge_relative_flow: [Vec2; 2],
    dt: f64,
    fraction: f64,
) -> [Vec2; 2] {
    let le = section.leading_edge();
    let te = section.trailing_edge();
    let still = 1e-9 * section.chord;
    let le_offset = fraction * dt * edge_relative_flow[0].norm();
    let le_distance = if le_offset > still {
        le_offset
    } else {
        fraction * section.panel_lengths[0]
    };
    let leading = le - section.tangent * le_distance;
    let behind = |p: Vec2| (p - te).dot(section.tangent) > still;
    let trailing = match previous_trailing {
        Some(prev) if behind(prev) => te + (prev - te) * fraction,
        _ => {
            let offset = edge_relative_flow[1] * (fraction * dt);
            if behind(te + offset) {
                te + offset
            } else {
                te + section.tangent * (fraction * section.panel_lengths[section.n_bound - 1])
            }
        }
    };
    [leading, trailing]
}

/// Velocity of the fluid relative to the section at each bound vortex.
///
/// Includes the ambient flow, the wake, the two new particles and every other
/// bound vortex (a point vortex induces no velocity at its own location).
pub fn relative_flow_at_bound(
    section: &WingSection,
    solution: &BoundSolution,
    wake: &Wake,
    shed_positions: [Vec2; 2],
    ambient: Vec2,
    kernel: &KernelConfig,
) -> Vec<Vec2> {
    let core4 = kernel.core4();
    let shed = [solution.new_le_strength, solution.new_te_strength];
    section
        .bound_positions
        .iter()
        .enumerate()
        .map(|(i, &bp)| {
            let mut v = ambient + wake.velocity_at(bp, core4);
            for (k, &sp) in shed_positions.iter().enumerate() {
                v += kernel::unit_influence(sp, bp, false, core4) * shed[k];
            }
            for (j, &other) in section.bound_positions.iter().enumerate() {
                if j != i {
                    v += kernel::unit_influence(other, bp, true, core4) * solution.bound_strengths[j];
                }
            }
            v - section.bound_velocities[i]
        })
        .collect()
}

/// Pressure jump across the surface at each bound vortex (Pa).
///
/// `Δp_i = ρ [ (v_rel,i · t) Γ_i / Δl_i + d/dt Σ_{j=0..i} Γ_j ]` where the sum
/// starts at the newest leading-edge particle. `solution` must carry rates.
pub fn pressure_distribution(
    section: &WingSection,
    solution: &BoundSolution,
    relative_flow: &[Vec2],
    rho: f64,
) -> Vec<f64> {
    (0..section.n_bound)
        .map(|i| {
            let steady = relative_flow[i].dot(section.tangent) * solution.bound_strengths[i] / section.panel_lengths[i];
            rho * (steady + solution.strength_rates[i])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SectionLoads {
    /// World-frame force (N).
    pub force: Vec2,
    /// Moment about the section pivot (N·m, CCW positive).
    pub moment: f64,
}

/// Integrate pressure jumps over the panels; `span` is the strip width (m).
pub fn integrate_loads(section: &WingSection, pressure: &[f64], span: f64) -> SectionLoads {
    let mut force = Vec2::ZERO;
    let mut moment = 0.0;
    for (i, &dp) in pressure.iter().enumerate() {
        let f = section.normal * (dp * section.panel_lengths[i] * span);
        force += f;
        moment += (section.bound_positions[i] - section.pose.pivot).cross(f);
    }
    SectionLoads { force, moment }
}

/// Max |normal relative velocity| over the control points after a solve,
/// evaluated directly from every particle in the flow.
pub fn boundary_residual(
    section: &WingSection,
    solution: &BoundSolution,
    wake: &Wake,
    shed_positions: [Vec2; 2],
    ambient: Vec2,
    kernel: &KernelConfig,
) -> Result<f64> {
    use crate::kernel::VortexParticle;
    let mut sources: Vec<VortexParticle> = wake.particles().collect();
    sources.extend(
        section
            .bound_positions
            .iter()
            .zip(&solution.bound_strengths)
            .map(|(&p, &g)| VortexParticle::bound(g, p)),
    );
    sources.push(VortexParticle::wake(solution.new_le_strength, shed_positions[0]));
    sources.push(VortexParticle::wake(solution.new_te_strength, shed_positions[1]));
    let induced = kernel::total_induced_velocity(&sources, &section.control_points, kernel)?;
    Ok(induced
        .iter()
        .zip(&section.control_velocities)
        .map(|(&v, &vs)| (ambient + v - vs).dot(section.normal).abs())
        .fold(0.0, f64::max))
}
