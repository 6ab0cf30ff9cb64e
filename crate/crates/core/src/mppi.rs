//! Sampling-based planner: perturb a nominal control sequence, roll every
//! sample out on the simulator and replace the nominal with the
//! exponentially weighted average of the samples.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlInput, ControlSequence};
use crate::error::{Error, Result};
use crate::vehicle::{SimConfig, Simulator, Trajectory, VehicleGeometry, VehicleState};

/// Weight on the velocity terms of the closest-approach cost.
pub const VELOCITY_WEIGHT: f64 = 0.2;

/// Desired state at the end of the maneuver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSpec {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
    pub xdot: f64,
    pub zdot: f64,
    pub thetadot: f64,
}

impl Default for TargetSpec {
    /// Perch 3.5 m downrange at launch height: 45° nose-up, 0.5 m/s forward
    /// and 0.5 m/s down, no pitch rate.
    fn default() -> Self {
        Self {
            x: 3.5,
            z: 0.0,
            theta: PI / 4.0,
            xdot: 0.5,
            zdot: -0.5,
            thetadot: 0.0,
        }
    }
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("target.x", self.x),
            ("target.z", self.z),
            ("target.theta", self.theta),
            ("target.xdot", self.xdot),
            ("target.zdot", self.zdot),
            ("target.thetadot", self.thetadot),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// The target matching `state` exactly.
    pub fn at(state: &VehicleState) -> Self {
        Self {
            x: state.x,
            z: state.z,
            theta: state.theta,
            xdot: state.xdot,
            zdot: state.zdot,
            thetadot: state.thetadot,
        }
    }
}

/// Wrap an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// `‖(Δx, Δz, Δθ)‖² + 0.2·‖(Δẋ, Δż, Δθ̇)‖²` with the pitch error wrapped.
/// Metres and radians are mixed with unit weights.
pub fn state_cost(s: &VehicleState, target: &TargetSpec) -> f64 {
    let dth = wrap_angle(s.theta - target.theta);
    let pose = (s.x - target.x).powi(2) + (s.z - target.z).powi(2) + dth * dth;
    let rates =
        (s.xdot - target.xdot).powi(2) + (s.zdot - target.zdot).powi(2) + (s.thetadot - target.thetadot).powi(2);
    pose + VELOCITY_WEIGHT * rates
}

/// Index and cost of the state that comes closest to the target.
pub fn closest_approach<'a>(
    states: impl IntoIterator<Item = &'a VehicleState>,
    target: &TargetSpec,
) -> Option<(usize, f64)> {
    states
        .into_iter()
        .map(|s| state_cost(s, target))
        .enumerate()
        .fold(None, |best, (i, c)| match best {
            Some((_, b)) if b <= c => best,
            _ => Some((i, c)),
        })
}

/// Closest-approach cost of a trajectory; infinite when it holds no states.
pub fn trajectory_cost(traj: &Trajectory, target: &TargetSpec) -> f64 {
    closest_approach(traj.states(), target).map_or(f64::INFINITY, |(_, c)| c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MppiParams {
    /// Rollouts per iteration.
    pub samples: usize,
    pub iterations: usize,
    /// Per-knot perturbation standard deviation (rad).
    pub sigma_elevator: f64,
    pub sigma_sweep: f64,
    /// λ as a multiple of the all-zeros sequence's cost.
    pub temperature_scale: f64,
    pub knot_spacing: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for MppiParams {
    fn default() -> Self {
        Self {
            samples: 128,
            iterations: 50,
            sigma_elevator: 5f64.to_radians(),
            sigma_sweep: 10f64.to_radians(),
            temperature_scale: 0.05,
            knot_spacing: 0.05,
            horizon: 1.5,
            seed: 0,
        }
    }
}

impl MppiParams {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::invalid("planner.samples", "need at least one sample"));
        }
        for (name, v) in [
            ("planner.sigma_elevator", self.sigma_elevator),
            ("planner.sigma_sweep", self.sigma_sweep),
            ("planner.temperature_scale", self.temperature_scale),
            ("planner.knot_spacing", self.knot_spacing),
            ("planner.horizon", self.horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Actuator command limits used to clamp samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorBounds {
    pub elevator: f64,
    pub sweep_min: f64,
    pub sweep_max: f64,
}

impl ActuatorBounds {
    pub fn of(geometry: &VehicleGeometry) -> Self {
        Self {
            elevator: geometry.elevator_limit,
            sweep_min: geometry.sweep_min,
            sweep_max: geometry.sweep_max,
        }
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            elevator_cmd: u.elevator_cmd.clamp(-self.elevator, self.elevator),
            sweep_cmd: u.sweep_cmd.clamp(self.sweep_min, self.sweep_max),
        }
    }
}

/// `count` copies of `nominal` with i.i.d. zero-mean normal noise added to
/// every knot of every channel whose σ is positive, then clamped. Channels
/// with σ = 0 are copied unchanged.
pub fn sample_perturbations<R: Rng + ?Sized>(
    nominal: &ControlSequence,
    sigma: [f64; 2],
    bounds: &ActuatorBounds,
    count: usize,
    rng: &mut R,
) -> Vec<ControlSequence> {
    let normals = sigma.map(|s| (s > 0.0).then(|| Normal::new(0.0, s).expect("finite positive σ")));
    (0..count)
        .map(|_| {
            let knots = nominal
                .knots
                .iter()
                .map(|&u| {
                    let mut p = u;
                    for (c, n) in normals.iter().enumerate() {
                        if let Some(n) = n {
                            *p.channel_mut(c) += n.sample(rng);
                        }
                    }
                    bounds.clamp(p)
                })
                .collect();
            ControlSequence {
                knot_spacing: nominal.knot_spacing,
                knots,
            }
        })
        .collect()
}

/// Softmin weights `exp(−(c − c_min)/λ)` normalised to sum to one;
/// non-finite costs get zero weight.
pub fn softmin_weights(costs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let min = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::AllRolloutsDiverged { samples: costs.len() });
    }
    let raw: Vec<f64> = costs
        .iter()
        .map(|&c| {
            if c.is_finite() {
                (-(c - min) / lambda).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Per-knot, per-channel weighted average of the samples.
pub fn weighted_average(samples: &[ControlSequence], costs: &[f64], lambda: f64) -> Result<ControlSequence> {
    let weights = softmin_weights(costs, lambda)?;
    let first = &samples[0];
    let mut knots = vec![ControlInput::ZERO; first.len()];
    for (s, &w) in samples.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        for (k, u) in knots.iter_mut().zip(&s.knots) {
            k.elevator_cmd += w * u.elevator_cmd;
            k.sweep_cmd += w * u.sweep_cmd;
        }
    }
    Ok(ControlSequence {
        knot_spacing: first.knot_spacing,
        knots,
    })
}

/// The simulator setup every rollout starts from.
#[derive(Debug, Clone)]
pub struct RolloutModel {
    pub config: Arc<SimConfig>,
    pub initial: VehicleState,
    pub steps: usize,
}

impl RolloutModel {
    pub fn new(config: Arc<SimConfig>, initial: VehicleState, horizon: f64) -> Self {
        let steps = (horizon / config.dt).round() as usize;
        Self { config, initial, steps }
    }

    pub fn rollout(&self, seq: &ControlSequence) -> Result<Trajectory> {
        let mut policy = seq.clone();
        Simulator::new(self.config.clone(), self.initial)?.run(&mut policy, self.steps)
    }

    /// Closest-approach cost; a diverged rollout costs infinity.
    pub fn cost(&self, seq: &ControlSequence, target: &TargetSpec) -> Result<f64> {
        match self.rollout(seq) {
            Ok(t) => Ok(trajectory_cost(&t, target)),
            Err(Error::Diverged { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    /// Costs of many sequences, evaluated in parallel and returned in input order.
    pub fn costs(&self, seqs: &[ControlSequence], target: &TargetSpec) -> Result<Vec<f64>> {
        seqs.par_iter().map(|s| self.cost(s, target)).collect()
    }

    /// Perturbation σ per channel, zero for a channel the vehicle cannot use.
    pub fn sigma(&self, params: &MppiParams) -> [f64; 2] {
        let sweep = if self.config.sweep_enabled {
            params.sigma_sweep
        } else {
            0.0
        };
        [params.sigma_elevator, sweep]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub min_sample_cost: f64,
    /// Mean over rollouts that did not diverge.
    pub mean_sample_cost: f64,
    pub diverged: usize,
    pub best_sample: usize,
}

/// One update: sample, roll out, average. On error the caller keeps its nominal.
pub fn mppi_iterate<R: Rng + ?Sized>(
    model: &RolloutModel,
    nominal: &ControlSequence,
    target: &TargetSpec,
    sigma: [f64; 2],
    samples: usize,
    lambda: f64,
    rng: &mut R,
) -> Result<(ControlSequence, Vec<ControlSequence>, Vec<f64>, IterationStats)> {
    let bounds = ActuatorBounds::of(&model.config.geometry);
    let seqs = sample_perturbations(nominal, sigma, &bounds, samples, rng);
    let costs = model.costs(&seqs, target)?;
    let next = weighted_average(&seqs, &costs, lambda)?;
    let finite: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
    let (best_sample, min_sample_cost) =
        costs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, c)| if c < b.1 { (i, c) } else { b });
    let stats = IterationStats {
        min_sample_cost,
        mean_sample_cost: finite.iter().sum::<f64>() / finite.len() as f64,
        diverged: costs.len() - finite.len(),
        best_sample,
    };
    Ok((next, seqs, costs, stats))
}

/// Convergence record for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// Cost of the averaged nominal after this iteration.
    pub nominal_cost: f64,
    pub min_sample_cost: f64,
    pub mean_sample_cost: f64,
    pub diverged: usize,
    /// Lowest cost seen so far over every evaluated sequence.
    pub best_cost: f64,
}

#[derive(Debug, Clone)]
pub struct Plan {
    /// Best sequence found.
    pub sequence: ControlSequence,
    pub cost: f64,
    pub zero_control_cost: f64,
    pub lambda: f64,
    pub log: Vec<IterationLog>,
    /// Rollout of `sequence`.
    pub trajectory: Trajectory,
}

/// Plan from an all-zeros nominal for `params.iterations` iterations and
/// return the best sequence seen. λ is fixed from the all-zeros cost.
pub fn plan(model: &RolloutModel, target: &TargetSpec, params: &MppiParams) -> Result<Plan> {
    params.validate()?;
    target.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut nominal = ControlSequence::zeros_for_horizon(params.knot_spacing, params.horizon);
    let zero_control_cost = model.cost(&nominal, target)?;
    let lambda = params.temperature_scale * zero_control_cost.max(f64::MIN_POSITIVE);
    if !lambda.is_finite() {
        return Err(Error::AllRolloutsDiverged { samples: 1 });
    }
    let sigma = model.sigma(params);
    let mut best = (nominal.clone(), zero_control_cost);
    let mut log = Vec::with_capacity(params.iterations);
    for iteration in 0..params.iterations {
        let (next, seqs, costs, stats) =
            mppi_iterate(model, &nominal, target, sigma, params.samples, lambda, &mut rng)?;
        if stats.min_sample_cost < best.1 {
            best = (seqs[stats.best_sample].clone(), costs[stats.best_sample]);
        }
        nominal = next;
        let nominal_cost = model.cost(&nominal, target)?;
        if nominal_cost < best.1 {
            best = (nominal.clone(), nominal_cost);
        }
        log.push(IterationLog {
            iteration,
            nominal_cost,
            min_sample_cost: stats.min_sample_cost,
            mean_sample_cost: stats.mean_sample_cost,
            diverged: stats.diverged,
            best_cost: best.1,
        });
    }
    let trajectory = model.rollout(&best.0)?;
    Ok(Plan {
        sequence: best.0,
        cost: best.1,
        zero_control_cost,
        lambda,
        log,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn seq(values: &[(f64, f64)]) -> ControlSequence {
        ControlSequence {
            knot_spacing: 0.05,
            knots: values.iter().map(|&(e, s)| ControlInput::new(e, s)).collect(),
        }
    }

    fn bounds() -> ActuatorBounds {
        ActuatorBounds::of(&VehicleGeometry::default())
    }

    #[test]
    fn exact_target_costs_nothing() {
        let s = VehicleState {
            x: 1.0,
            theta: 0.3,
            zdot: -2.0,
            ..VehicleState::default()
        };
        assert_eq!(state_cost(&s, &TargetSpec::at(&s)), 0.0);
    }

    #[test]
    fn unit_offsets_cost_their_weights() {
        let t = TargetSpec::at(&VehicleState::default());
        let dx = VehicleState {
            x: 1.0,
            ..VehicleState::default()
        };
        let dv = VehicleState {
            xdot: 1.0,
            ..VehicleState::default()
        };
        let dth = VehicleState {
            theta: 1.0,
            ..VehicleState::default()
        };
        assert_eq!(state_cost(&dx, &t), 1.0);
        assert_relative_eq!(state_cost(&dv, &t), 0.2);
        assert_eq!(state_cost(&dth, &t), 1.0);
    }

    #[test]
    fn pitch_error_wraps() {
        let t = TargetSpec {
            theta: PI - 0.1,
            ..TargetSpec::at(&VehicleState::default())
        };
        let s = VehicleState {
            theta: -PI + 0.1,
            ..VehicleState::default()
        };
        assert_relative_eq!(state_cost(&s, &t), 0.04, epsilon = 1e-12);
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI + 0.5), -PI + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_sigma_reproduces_nominal() {
        let nominal = seq(&[(0.1, -0.2), (0.0, 0.0), (-0.3, -1.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in sample_perturbations(&nominal, [0.0, 0.0], &bounds(), 5, &mut rng) {
            assert_eq!(s, nominal);
        }
    }

    #[test]
    fn masked_channel_is_never_perturbed() {
        let nominal = ControlSequence::zeros(0.05, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = sample_perturbations(&nominal, [0.1, 0.0], &bounds(), 50, &mut rng);
        assert!(samples.iter().flat_map(|s| &s.knots).all(|u| u.sweep_cmd == 0.0));
        assert!(samples.iter().flat_map(|s| &s.knots).any(|u| u.elevator_cmd != 0.0));
    }

    #[test]
    fn sampling_is_seeded() {
        let nominal = ControlSequence::zeros(0.05, 10);
        let a = sample_perturbations(&nominal, [0.1, 0.2], &bounds(), 4, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_perturbations(&nominal, [0.1, 0.2], &bounds(), 4, &mut ChaCha8Rng::seed_from_u64(9));
        let c = sample_perturbations(&nominal, [0.1, 0.2], &bounds(), 4, &mut ChaCha8Rng::seed_from_u64(10));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_mean_is_near_zero() {
        // Wide bounds so clamping does not bias the sample.
        let wide = ActuatorBounds {
            elevator: 1e9,
            sweep_min: -1e9,
            sweep_max: 1e9,
        };
        let n = 100_000;
        let sigma = 0.1;
        let nominal = ControlSequence::zeros(0.05, n);
        let s = &sample_perturbations(&nominal, [sigma, 0.0], &wide, 1, &mut ChaCha8Rng::seed_from_u64(5))[0];
        let mean = s.knots.iter().map(|u| u.elevator_cmd).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn samples_respect_actuator_limits() {
        let b = bounds();
        let nominal = ControlSequence::zeros(0.05, 30);
        let samples = sample_perturbations(&nominal, [5.0, 5.0], &b, 20, &mut ChaCha8Rng::seed_from_u64(2));
        for u in samples.iter().flat_map(|s| &s.knots) {
            assert!(u.elevator_cmd.abs() <= b.elevator);
            assert!(u.sweep_cmd >= b.sweep_min && u.sweep_cmd <= b.sweep_max);
        }
    }

    #[test]
    fn single_sample_becomes_the_nominal() {
        let s = seq(&[(0.1, -0.2), (0.3, 0.1)]);
        let avg = weighted_average(std::slice::from_ref(&s), &[4.2], 0.1).unwrap();
        assert_eq!(avg, s);
    }

    #[test]
    fn equal_costs_average_evenly() {
        let a = seq(&[(0.1, -0.2), (0.3, 0.1)]);
        let b = seq(&[(0.3, 0.0), (-0.1, 0.5)]);
        let avg = weighted_average(&[a, b], &[2.0, 2.0], 0.5).unwrap();
        assert_relative_eq!(avg.knots[0].elevator_cmd, 0.2, epsilon = 1e-15);
        assert_relative_eq!(avg.knots[1].sweep_cmd, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn cold_temperature_picks_the_best_sample() {
        let a = seq(&[(0.1, -0.2)]);
        let b = seq(&[(0.3, 0.0)]);
        let avg = weighted_average(&[a, b.clone()], &[2.0, 1.0], 1e-6).unwrap();
        assert_eq!(avg, b);
    }

    #[test]
    fn diverged_samples_get_no_weight() {
        let w = softmin_weights(&[f64::INFINITY, 1.0, 2.0], 1.0).unwrap();
        assert_eq!(w[0], 0.0);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0);
        assert!(matches!(
            softmin_weights(&[f64::INFINITY; 3], 1.0),
            Err(Error::AllRolloutsDiverged { .. })
        ));
    }

    #[test]
    fn closest_approach_picks_minimum() {
        let t = TargetSpec::at(&VehicleState::default());
        let states = [1.0, 0.5, 2.0].map(|x| VehicleState {
            x,
            ..VehicleState::default()
        });
        assert_eq!(closest_approach(&states, &t), Some((1, 0.25)));
        assert_eq!(closest_approach(&[], &t), None);
    }

    #[test]
    fn trivial_target_is_met_immediately() {
        let mut cfg = SimConfig::default();
        cfg.model = crate::vehicle::AeroModel::QuasiSteady;
        let initial = VehicleState::launch(7.0);
        let model = RolloutModel::new(Arc::new(cfg), initial, 0.2);
        let params = MppiParams {
            samples: 4,
            iterations: 2,
            horizon: 0.2,
            ..MppiParams::default()
        };
        let p = plan(&model, &TargetSpec::at(&initial), &params).unwrap();
        assert_eq!(p.cost, 0.0);
        assert!(p.log.iter().all(|l| l.best_cost == 0.0));
    }

    proptest! {
        #[test]
        fn average_stays_in_the_sample_hull(
            values in prop::collection::vec((-0.5f64..0.5, -1.5f64..0.5), 2..8),
            costs in prop::collection::vec(0.0f64..10.0, 8),
            lambda in 1e-3f64..10.0,
        ) {
            let samples: Vec<ControlSequence> = values.iter().map(|&v| seq(&[v, (v.1, v.0)])).collect();
            let costs = &costs[..samples.len()];
            let w = softmin_weights(costs, lambda).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let avg = weighted_average(&samples, costs, lambda).unwrap();
            for k in 0..2 {
                for c in 0..2 {
                    let vals: Vec<f64> = samples.iter().map(|s| s.knots[k].channel(c)).collect();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let a = avg.knots[k].channel(c);
                    prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn cost_ignores_states_other_than_the_minimiser(
            xs in prop::collection::vec(-5.0f64..5.0, 1..20),
            extra in 0.0f64..1.0,
        ) {
            let t = TargetSpec::at(&VehicleState::default());
            let states: Vec<VehicleState> = xs.iter().map(|&x| VehicleState { x, ..VehicleState::default() }).collect();
            let (i, c) = closest_approach(&states, &t).unwrap();
            let mut thinned = vec![states[i]];
            thinned.extend(states.iter().filter(|s| state_cost(s, &t) >= c + extra).copied());
            prop_assert_eq!(closest_approach(&thinned, &t).unwrap().1, c);
        }
    }
}
