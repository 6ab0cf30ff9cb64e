//! Vortex particles and their induced velocity.
//!
//! Sign convention: with x to the right and z up, the kernel
//! `v = Γ/(2π r²) · [[0, 1], [-1, 0]] · Δx` makes a positive strength induce
//! clockwise flow. A wing flying toward +x therefore carries negative bound
//! circulation when lifting upward.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::vec2::Vec2;

const INV_TWO_PI: f64 = 0.5 / PI;

/// A Lagrangian circulation carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VortexParticle {
    /// Circulation Γ (m²/s).
    pub strength: f64,
    pub position: Vec2,
    /// Surface-bound vortices use the singular kernel, wake vortices the cored one.
    pub is_bound: bool,
}

impl VortexParticle {
    pub fn wake(strength: f64, position: Vec2) -> Self {
        Self {
            strength,
            position,
            is_bound: false,
        }
    }

    pub fn bound(strength: f64, position: Vec2) -> Self {
        Self {
            strength,
            position,
            is_bound: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Vortex core radius (m).
    pub core_radius: f64,
}

impl KernelConfig {
    pub fn new(core_radius: f64) -> Result<Self> {
        if !(core_radius > 0.0 && core_radius.is_finite()) {
            return Err(Error::invalid("core_radius", "must be positive and finite"));
        }
        Ok(Self { core_radius })
    }

    /// r_core⁴, the only form the cored kernel needs.
    #[inline]
    pub fn core4(&self) -> f64 {
        let c2 = self.core_radius * self.core_radius;
        c2 * c2
    }
}

/// Point-vortex velocity at `target`. Errors when `target` coincides with the vortex.
pub fn induced_velocity_singular(vortex: &VortexParticle, target: Vec2) -> Result<Vec2> {
    let d = target - vortex.position;
    let r2 = d.norm_squared();
    if r2 == 0.0 {
        return Err(Error::Singularity {
            x: target.x,
            z: target.z,
        });
    }
    Ok(singular_unchecked(vortex.strength, d, r2))
}

/// Cored vortex velocity at `target`; defined everywhere and zero at the vortex itself.
///
/// The point-vortex result scaled by `(r/rc)² / sqrt(1 + (r/rc)⁴)`, which
/// simplifies to `Γ/(2π) · MΔx / sqrt(r⁴ + rc⁴)`.
pub fn induced_velocity_regularized(vortex: &VortexParticle, target: Vec2, cfg: &KernelConfig) -> Vec2 {
    let d = target - vortex.position;
    let r2 = d.norm_squared();
    regularized_unchecked(vortex.strength, d, r2, cfg.core4())
}

#[inline(always)]
pub(crate) fn singular_unchecked(strength: f64, d: Vec2, r2: f64) -> Vec2 {
    let s = strength * INV_TWO_PI / r2;
    Vec2::new(s * d.z, -s * d.x)
}

#[inline(always)]
pub(crate) fn regularized_unchecked(strength: f64, d: Vec2, r2: f64, core4: f64) -> Vec2 {
    let s = strength * INV_TWO_PI / (r2 * r2 + core4).sqrt();
    Vec2::new(s * d.z, -s * d.x)
}

/// Velocity a unit-strength particle at `source` induces at `target`.
#[inline]
pub(crate) fn unit_influence(source: Vec2, target: Vec2, bound: bool, core4: f64) -> Vec2 {
    let d = target - source;
    let r2 = d.norm_squared();
    if bound {
        singular_unchecked(1.0, d, r2)
    } else {
        regularized_unchecked(1.0, d, r2, core4)
    }
}

/// Velocity induced by one particle at `target`, dispatching on `is_bound`.
pub fn induced_velocity(vortex: &VortexParticle, target: Vec2, cfg: &KernelConfig) -> Result<Vec2> {
    if vortex.is_bound {
        induced_velocity_singular(vortex, target)
    } else {
        Ok(induced_velocity_regularized(vortex, target, cfg))
    }
}

/// Superposed velocity of all `sources` at each target.
///
/// Sources are summed in slice order for every target, so results do not
/// depend on how callers batch or parallelise over targets.
pub fn total_induced_velocity(sources: &[VortexParticle], targets: &[Vec2], cfg: &KernelConfig) -> Result<Vec<Vec2>> {
    let core4 = cfg.core4();
    targets
        .iter()
        .map(|&t| {
            let mut v = Vec2::ZERO;
            for s in sources {
                let d = t - s.position;
                let r2 = d.norm_squared();
                if s.is_bound {
                    if r2 == 0.0 {
                        return Err(Error::Singularity { x: t.x, z: t.z });
                    }
                    v += singular_unchecked(s.strength, d, r2);
                } else {
                    v += regularized_unchecked(s.strength, d, r2, core4);
                }
            }
            Ok(v)
        })
        .collect()
}

/// Velocity at `target` from cored particles stored as parallel arrays.
#[inline]
pub(crate) fn wake_velocity_at(strengths: &[f64], positions: &[Vec2], target: Vec2, core4: f64) -> Vec2 {
    #[cfg(target_arch = "x86_64")]
    let (vx, vz) = wake_sum_sse2(strengths, positions, target, core4);
    #[cfg(not(target_arch = "x86_64"))]
    let (vx, vz) = wake_sum_scalar(strengths, positions, target, core4);
    Vec2::new(vx * INV_TWO_PI, vz * INV_TWO_PI)
}

#[inline]
fn wake_sum_scalar(strengths: &[f64], positions: &[Vec2], target: Vec2, core4: f64) -> (f64, f64) {
    let mut vx = 0.0;
    let mut vz = 0.0;
    for (g, p) in strengths.iter().zip(positions) {
        let dx = target.x - p.x;
        let dz = target.z - p.z;
        let r2 = dx * dx + dz * dz;
        let s = g / (r2 * r2 + core4).sqrt();
        vx += s * dz;
        vz -= s * dx;
    }
    (vx, vz)
}

/// Two particles per packed sqrt/div; SSE2 is part of the x86_64 baseline.
#[cfg(target_arch = "x86_64")]
#[inline]
fn wake_sum_sse2(strengths: &[f64], positions: &[Vec2], target: Vec2, core4: f64) -> (f64, f64) {
    use std::arch::x86_64::*;
    let n = strengths.len().min(positions.len());
    let pairs = n / 2;
    // SAFETY: SSE2 is always available on x86_64 and every load is in bounds.
    let (mut vx, mut vz) = unsafe {
        let tx = _mm_set1_pd(target.x);
        let tz = _mm_set1_pd(target.z);
        let c4 = _mm_set1_pd(core4);
        let mut ax = _mm_setzero_pd();
        let mut az = _mm_setzero_pd();
        for i in 0..pairs {
            let p0 = positions[2 * i];
            let p1 = positions[2 * i + 1];
            let dx = _mm_sub_pd(tx, _mm_set_pd(p1.x, p0.x));
            let dz = _mm_sub_pd(tz, _mm_set_pd(p1.z, p0.z));
            let r2 = _mm_add_pd(_mm_mul_pd(dx, dx), _mm_mul_pd(dz, dz));
            let den = _mm_sqrt_pd(_mm_add_pd(_mm_mul_pd(r2, r2), c4));
            let s = _mm_div_pd(_mm_loadu_pd(strengths.as_ptr().add(2 * i)), den);
            ax = _mm_add_pd(ax, _mm_mul_pd(s, dz));
            az = _mm_sub_pd(az, _mm_mul_pd(s, dx));
        }
        let mut x = [0.0; 2];
        let mut z = [0.0; 2];
        _mm_storeu_pd(x.as_mut_ptr(), ax);
        _mm_storeu_pd(z.as_mut_ptr(), az);
        (x[0] + x[1], z[0] + z[1])
    };
    let (rx, rz) = wake_sum_scalar(&strengths[2 * pairs..n], &positions[2 * pairs..n], target, core4);
    vx += rx;
    vz += rz;
    (vx, vz)
}
