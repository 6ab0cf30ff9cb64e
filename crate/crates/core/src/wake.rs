//! Free wake particles: convection and induced-velocity-bounded merging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelConfig, VortexParticle};
use crate::vec2::Vec2;

/// Ordered wake particles stored as parallel strength/position arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Wake {
    strengths: Vec<f64>,
    positions: Vec<Vec2>,
}

impl Wake {
    pub fn from_particles(particles: impl IntoIterator<Item = VortexParticle>) -> Self {
        let mut w = Wake::default();
        for p in particles {
            debug_assert!(!p.is_bound);
            w.push(p.strength, p.position);
        }
        w
    }

    pub fn push(&mut self, strength: f64, position: Vec2) {
        self.strengths.push(strength);
        self.positions.push(position);
    }

    /// Move every particle through `f`, keeping strengths.
    pub fn map_positions(&mut self, f: impl Fn(Vec2) -> Vec2) {
        for p in &mut self.positions {
            *p = f(*p);
        }
    }

    pub fn len(&self) -> usize {
        self.strengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strengths.is_empty()
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> VortexParticle {
        VortexParticle::wake(self.strengths[i], self.positions[i])
    }

    pub fn particles(&self) -> impl Iterator<Item = VortexParticle> + '_ {
        self.strengths
            .iter()
            .zip(&self.positions)
            .map(|(&g, &p)| VortexParticle::wake(g, p))
    }

    /// Σ Γ in storage order.
    pub fn total_strength(&self) -> f64 {
        self.strengths.iter().sum()
    }

    /// Cored velocity the whole wake induces at `target`.
    pub fn velocity_at(&self, target: Vec2, core4: f64) -> Vec2 {
        kernel::wake_velocity_at(&self.strengths, &self.positions, target, core4)
    }

    /// Wake-on-wake velocities, visiting each pair once.
    fn self_induced(&self, positions: &[Vec2], core4: f64, out: &mut [Vec2]) {
        let n = positions.len();
        let xs: Vec<f64> = positions.iter().map(|p| p.x).collect();
        let zs: Vec<f64> = positions.iter().map(|p| p.z).collect();
        let mut ox = vec![0.0; n];
        let mut oz = vec![0.0; n];
        for i in 0..n {
            let (ax, az) = pair_row(i, &self.strengths, &xs, &zs, core4, &mut ox, &mut oz);
            ox[i] += ax;
            oz[i] += az;
        }
        let inv = 0.5 / std::f64::consts::PI;
        for ((o, x), z) in out.iter_mut().zip(&ox).zip(&oz) {
            o.x += inv * x;
            o.z += inv * z;
        }
    }
}

/// Interactions of particle `i` with every `j > i`: returns the velocity on
/// `i` and applies the reaction to `j` (both without the 1/2π factor).
#[inline]
fn pair_row(i: usize, g: &[f64], xs: &[f64], zs: &[f64], core4: f64, ox: &mut [f64], oz: &mut [f64]) -> (f64, f64) {
    let n = xs.len();
    let (pix, piz, gi) = (xs[i], zs[i], g[i]);
    let mut j = i + 1;
    let (mut ax, mut az) = (0.0, 0.0);
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::*;
        let (g, xs, zs) = (&g[..n], &xs[..n], &zs[..n]);
        let (ox, oz) = (&mut ox[..n], &mut oz[..n]);
        // SAFETY: SSE2 is always available on x86_64; every access covers
        // indices j, j + 1 < n.
        unsafe {
            let px = _mm_set1_pd(pix);
            let pz = _mm_set1_pd(piz);
            let gi2 = _mm_set1_pd(gi);
            let c4 = _mm_set1_pd(core4);
            let mut vx = _mm_setzero_pd();
            let mut vz = _mm_setzero_pd();
            while j + 1 < n {
                let dx = _mm_sub_pd(px, _mm_loadu_pd(xs.as_ptr().add(j)));
                let dz = _mm_sub_pd(pz, _mm_loadu_pd(zs.as_ptr().add(j)));
                let r2 = _mm_add_pd(_mm_mul_pd(dx, dx), _mm_mul_pd(dz, dz));
                let s = _mm_div_pd(_mm_set1_pd(1.0), _mm_sqrt_pd(_mm_add_pd(_mm_mul_pd(r2, r2), c4)));
                let sdz = _mm_mul_pd(s, dz);
                let sdx = _mm_mul_pd(s, dx);
                let gj = _mm_loadu_pd(g.as_ptr().add(j));
                vx = _mm_add_pd(vx, _mm_mul_pd(gj, sdz));
                vz = _mm_sub_pd(vz, _mm_mul_pd(gj, sdx));
                let oxp = ox.as_mut_ptr().add(j);
                let ozp = oz.as_mut_ptr().add(j);
                _mm_storeu_pd(oxp, _mm_sub_pd(_mm_loadu_pd(oxp), _mm_mul_pd(gi2, sdz)));
                _mm_storeu_pd(ozp, _mm_add_pd(_mm_loadu_pd(ozp), _mm_mul_pd(gi2, sdx)));
                j += 2;
            }
            let mut x = [0.0; 2];
            let mut z = [0.0; 2];
            _mm_storeu_pd(x.as_mut_ptr(), vx);
            _mm_storeu_pd(z.as_mut_ptr(), vz);
            ax += x[0] + x[1];
            az += z[0] + z[1];
        }
    }
    while j < n {
        let dx = pix - xs[j];
        let dz = piz - zs[j];
        let r2 = dx * dx + dz * dz;
        let s = 1.0 / (r2 * r2 + core4).sqrt();
        ax += g[j] * s * dz;
        az -= g[j] * s * dx;
        ox[j] -= gi * s * dz;
        oz[j] += gi * s * dx;
        j += 1;
    }
    (ax, az)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    Euler,
    Midpoint,
}

/// Velocity field the wake moves in, apart from its own self-induction.
pub struct ExternalField<'a> {
    pub ambient: Vec2,
    /// Surface-bound sources, evaluated with the singular kernel.
    pub bound: &'a [VortexParticle],
}

impl ExternalField<'_> {
    /// Velocity at every point of `points`, skipping a bound source that
    /// coincides with the point.
    fn at_all(&self, points: &[Vec2]) -> Vec<Vec2> {
        let g: Vec<f64> = self.bound.iter().map(|b| b.strength).collect();
        let bx: Vec<f64> = self.bound.iter().map(|b| b.position.x).collect();
        let bz: Vec<f64> = self.bound.iter().map(|b| b.position.z).collect();
        points
            .iter()
            .map(|&p| {
                let (vx, vz) = singular_sum(&g, &bx, &bz, p);
                self.ambient + Vec2::new(vx, vz) * (0.5 / std::f64::consts::PI)
            })
            .collect()
    }
}

/// Σ Γ·M·d/|d|² over sources in parallel arrays, without the 1/2π factor.
#[inline]
fn singular_sum(g: &[f64], xs: &[f64], zs: &[f64], p: Vec2) -> (f64, f64) {
    let n = g.len().min(xs.len()).min(zs.len());
    let mut j = 0;
    let (mut vx, mut vz) = (0.0, 0.0);
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::*;
        // SAFETY: SSE2 is always available on x86_64; loads cover j, j + 1 < n.
        unsafe {
            let px = _mm_set1_pd(p.x);
            let pz = _mm_set1_pd(p.z);
            let zero = _mm_setzero_pd();
            let mut ax = zero;
            let mut az = zero;
            while j + 1 < n {
                let dx = _mm_sub_pd(px, _mm_loadu_pd(xs.as_ptr().add(j)));
                let dz = _mm_sub_pd(pz, _mm_loadu_pd(zs.as_ptr().add(j)));
                let r2 = _mm_add_pd(_mm_mul_pd(dx, dx), _mm_mul_pd(dz, dz));
                let s = _mm_and_pd(_mm_cmpgt_pd(r2, zero), _mm_div_pd(_mm_loadu_pd(g.as_ptr().add(j)), r2));
                ax = _mm_add_pd(ax, _mm_mul_pd(s, dz));
                az = _mm_sub_pd(az, _mm_mul_pd(s, dx));
                j += 2;
            }
            let mut x = [0.0; 2];
            let mut z = [0.0; 2];
            _mm_storeu_pd(x.as_mut_ptr(), ax);
            _mm_storeu_pd(z.as_mut_ptr(), az);
            vx += x[0] + x[1];
            vz += z[0] + z[1];
        }
    }
    while j < n {
        let dx = p.x - xs[j];
        let dz = p.z - zs[j];
        let r2 = dx * dx + dz * dz;
        if r2 > 0.0 {
            let s = g[j] / r2;
            vx += s * dz;
            vz -= s * dx;
        }
        j += 1;
    }
    (vx, vz)
}

/// Advance every wake particle by `dt` in the local flow. Strengths are untouched.
pub fn convect(
    wake: &Wake,
    field: &ExternalField<'_>,
    dt: f64,
    kernel: &KernelConfig,
    integrator: Integrator,
) -> Result<Wake> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let core4 = kernel.core4();
    let velocities = |positions: &[Vec2]| {
        let mut v = field.at_all(positions);
        wake.self_induced(positions, core4, &mut v);
        v
    };
    let v0 = velocities(&wake.positions);
    let positions = match integrator {
        Integrator::Euler => wake.positions.iter().zip(&v0).map(|(&p, &v)| p + v * dt).collect(),
        Integrator::Midpoint => {
            let half: Vec<Vec2> = wake
                .positions
                .iter()
                .zip(&v0)
                .map(|(&p, &v)| p + v * (0.5 * dt))
                .collect();
            let vm = velocities(&half);
            wake.positions.iter().zip(&vm).map(|(&p, &v)| p + v * dt).collect()
        }
    };
    Ok(Wake {
        strengths: wake.strengths.clone(),
        positions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Largest induced-velocity change a whole pass may cause at any control point (m/s).
    pub velocity_threshold: f64,
    /// Pairs farther apart than this are never considered (m).
    pub candidate_radius: f64,
    /// Particles closer than this to any control point are left alone (m).
    pub exclusion_radius: f64,
    /// Extra candidate radius per metre of distance from the nearest control
    /// point, so the far wake coarsens faster than the near wake.
    pub radius_growth: f64,
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.velocity_threshold > 0.0) {
            return Err(Error::invalid("velocity_threshold", "must be positive"));
        }
        if !(self.candidate_radius > 0.0) {
            return Err(Error::invalid("candidate_radius", "must be positive"));
        }
        if !(self.exclusion_radius >= 0.0) {
            return Err(Error::invalid("exclusion_radius", "must be non-negative"));
        }
        if !(self.radius_growth >= 0.0 && self.radius_growth.is_finite()) {
            return Err(Error::invalid("radius_growth", "must be non-negative"));
        }
        Ok(())
    }
}

/// Strength and |Γ|-weighted position of a merged pair, or `None` when the
/// strengths cancel and the weighted position is meaningless.
pub fn merged_particle(a: VortexParticle, b: VortexParticle) -> Option<VortexParticle> {
    let strength = a.strength + b.strength;
    let wa = a.strength.abs();
    let wb = b.strength.abs();
    if strength.abs() < 1e-12 * wa.max(wb) || wa + wb == 0.0 {
        return None;
    }
    let position = (a.position * wa + b.position * wb) * (1.0 / (wa + wb));
    Some(VortexParticle::wake(strength, position))
}

/// Greedy nearest-first merging under a per-pass velocity-error budget.
///
/// Candidates are same-sign pairs (or exactly coincident pairs) closer than
/// both particles' candidate radii, `candidate_radius + radius_growth·d`
/// with `d` the particle's distance to the nearest control point, both outside `exclusion_radius` of every control
/// point. A merge is accepted only if the accumulated change in induced
/// velocity stays within `velocity_threshold` at every control point. Each
/// particle merges at most once per pass; the merged particle takes the
/// lower index and survivors keep their order.
pub fn merge_pass(wake: &Wake, control_points: &[Vec2], cfg: &MergeConfig, kernel: &KernelConfig) -> Wake {
    let n = wake.len();
    if n < 2 {
        return wake.clone();
    }
    let core4 = kernel.core4();
    let excl2 = cfg.exclusion_radius * cfg.exclusion_radius;
    let mut radius = vec![0.0; n];
    let mut eligible: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let p = wake.positions[i];
        let d2 = control_points
            .iter()
            .map(|&c| (p - c).norm_squared())
            .fold(f64::INFINITY, f64::min);
        if d2 > excl2 {
            radius[i] = cfg.candidate_radius + cfg.radius_growth * d2.sqrt();
            eligible.push(i);
        }
    }
    if eligible.len() < 2 {
        return wake.clone();
    }

    // Sweep along x to collect pairs within the candidate radius.
    eligible.sort_unstable_by(|&a, &b| wake.positions[a].x.total_cmp(&wake.positions[b].x).then(a.cmp(&b)));
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (k, &i) in eligible.iter().enumerate() {
        let pi = wake.positions[i];
        let ri = radius[i];
        for &j in &eligible[k + 1..] {
            let pj = wake.positions[j];
            if pj.x - pi.x > ri {
                break;
            }
            let rad = ri.min(radius[j]);
            let d2 = (pj - pi).norm_squared();
            if d2 > rad * rad {
                continue;
            }
            let (gi, gj) = (wake.strengths[i], wake.strengths[j]);
            if d2 == 0.0 || gi * gj > 0.0 {
                pairs.push((d2, i.min(j), i.max(j)));
            }
        }
    }
    if pairs.is_empty() {
        return wake.clone();
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let limit2 = (cfg.velocity_threshold * (1.0 - 1e-9)).powi(2);
    let mut used = vec![false; n];
    let mut replacement: Vec<Option<VortexParticle>> = vec![None; n];
    let mut spent = vec![Vec2::ZERO; control_points.len()];
    let mut trial = vec![Vec2::ZERO; control_points.len()];
    for (_, i, j) in pairs {
        if used[i] || used[j] {
            continue;
        }
        let (a, b) = (wake.particle(i), wake.particle(j));
        let Some(m) = merged_particle(a, b) else {
            continue;
        };
        let mut ok = true;
        for (k, &c) in control_points.iter().enumerate() {
            let delta = kernel::unit_influence(m.position, c, false, core4) * m.strength
                - kernel::unit_influence(a.position, c, false, core4) * a.strength
                - kernel::unit_influence(b.position, c, false, core4) * b.strength;
            let total = spent[k] + delta;
            if total.norm_squared() > limit2 {
                ok = false;
                break;
            }
            trial[k] = total;
        }
        if ok {
            spent.copy_from_slice(&trial);
            used[i] = true;
            used[j] = true;
            replacement[i] = Some(m);
        }
    }

    let mut out = Wake::default();
    for i in 0..n {
        match (used[i], replacement[i]) {
            (true, Some(m)) => out.push(m.strength, m.position),
            (true, None) => {}
            (false, _) => out.push(wake.strengths[i], wake.positions[i]),
        }
    }
    out
}
