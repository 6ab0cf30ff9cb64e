//! Finite-difference linearization along a nominal trajectory and a
//! backward discrete Riccati recursion for time-varying feedback gains.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlInput, ControlPolicy, ControlSequence};
use crate::error::{Error, Result};
use crate::mppi::{wrap_angle, ActuatorBounds};
use crate::vehicle::{SimConfig, Simulator, Trajectory, VehicleState};

/// Discrete-time dynamics sampled on a knot grid around a nominal.
pub trait Plant {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Number of knot intervals; knots run `0..=intervals`.
    fn intervals(&self) -> usize;
    fn knot_time(&self, k: usize) -> f64;
    fn nominal_state(&self, k: usize) -> DVector<f64>;
    fn nominal_control(&self, k: usize) -> DVector<f64>;
    /// State at knot `k + 1` starting from `x` at knot `k` under control `u`.
    fn propagate(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationKnot {
    pub time: f64,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub state: DVector<f64>,
    pub control: DVector<f64>,
    /// Step-size reductions needed before every perturbed rollout succeeded.
    pub retries: usize,
}

/// Perturbation for channel value `v`: `eps·max(1, |v|)`.
fn step_size(eps: f64, v: f64) -> f64 {
    eps * v.abs().max(1.0)
}

fn is_recoverable(e: &Error) -> bool {
    matches!(e, Error::Diverged { .. } | Error::SingularSystem { .. })
}

/// Central difference of `f` around `centre` along every coordinate.
fn central_columns(
    centre: &DVector<f64>,
    eps: f64,
    rows: usize,
    f: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, centre.len());
    for j in 0..centre.len() {
        let h = step_size(eps, centre[j]);
        let mut plus = centre.clone();
        let mut minus = centre.clone();
        plus[j] += h;
        minus[j] -= h;
        let d = (f(&plus)? - f(&minus)?) / (2.0 * h);
        if !d.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                time: 0.0,
                partial: None,
            });
        }
        m.set_column(j, &d);
    }
    Ok(m)
}

/// Central-difference A and B at every knot but the last.
///
/// A failed or non-finite perturbed rollout is retried once with `eps / 10`;
/// a second failure is a linearization error for that knot. Knots are
/// independent and linearized in parallel.
pub fn linearize_fd<P: Plant + Sync>(plant: &P, eps: f64) -> Result<Vec<LinearizationKnot>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", "must be positive"));
    }
    let n = plant.state_dim();
    (0..plant.intervals())
        .into_par_iter()
        .map(|k| {
            let x = plant.nominal_state(k);
            let u = plant.nominal_control(k);
            let mut e = eps;
            for retries in 0..2 {
                let a = central_columns(&x, e, n, |xp| plant.propagate(k, xp, &u));
                let b = a.and_then(|a| central_columns(&u, e, n, |up| plant.propagate(k, &x, up)).map(|b| (a, b)));
                match b {
                    Ok((a, b)) => {
                        return Ok(LinearizationKnot {
                            time: plant.knot_time(k),
                            a,
                            b,
                            state: x,
                            control: u,
                            retries,
                        })
                    }
                    Err(err) if is_recoverable(&err) => e /= 10.0,
                    Err(err) => return Err(err),
                }
            }
            Err(Error::Linearization {
                knot: k,
                time: plant.knot_time(k),
            })
        })
        .collect()
}

/// Quadratic weights, stored as diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrWeights {
    /// Running state weight over (x, z, θ, ẋ, ż, θ̇).
    pub q: Vec<f64>,
    /// Control weight over (elevator, sweep); only the active channels are used.
    pub r: Vec<f64>,
    /// Terminal state weight.
    pub qf: Vec<f64>,
    /// Knot spacing of the gain schedule (s).
    pub knot_spacing: f64,
    /// Relative finite-difference step.
    pub eps: f64,
    /// Feed back through sweep as well as elevator (morphing wings only).
    pub sweep_feedback: bool,
}

impl Default for LqrWeights {
    fn default() -> Self {
        let q = vec![10.0, 10.0, 10.0, 1.0, 1.0, 1.0];
        Self {
            qf: q.iter().map(|v| 10.0 * v).collect(),
            q,
            r: vec![0.1, 1.0],
            knot_spacing: 0.05,
            eps: 1e-4,
            sweep_feedback: false,
        }
    }
}

impl LqrWeights {
    pub fn validate(&self) -> Result<()> {
        if self.q.len() != 6 || self.qf.len() != 6 {
            return Err(Error::invalid("feedback.q", "q and qf need six entries"));
        }
        if self.r.len() != 2 {
            return Err(Error::invalid("feedback.r", "r needs two entries"));
        }
        if self.q.iter().chain(&self.qf).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("feedback.q", "entries must be non-negative"));
        }
        if self.r.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("feedback.r", "entries must be positive"));
        }
        if !(self.knot_spacing > 0.0 && self.knot_spacing.is_finite()) {
            return Err(Error::invalid("feedback.knot_spacing", "must be positive"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("feedback.eps", "must be positive"));
        }
        Ok(())
    }

    pub fn matrices(&self, channels: &[usize]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let r: Vec<f64> = channels.iter().map(|&c| self.r[c]).collect();
        (
            DMatrix::from_diagonal(&DVector::from_vec(self.q.clone())),
            DMatrix::from_diagonal(&DVector::from_vec(r)),
            DMatrix::from_diagonal(&DVector::from_vec(self.qf.clone())),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub times: Vec<f64>,
    /// `control_dim × state_dim` gain per knot, held until the next knot.
    pub gains: Vec<DMatrix<f64>>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    /// Cost-to-go S at every knot, the last entry being `qf`.
    pub cost_to_go: Vec<DMatrix<f64>>,
    /// Knots where S needed an eigenvalue floor to stay positive semidefinite.
    pub floored: Vec<usize>,
}

fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// Backward recursion `S_N = Q_f`, `K_k = (R + BᵀSB)⁻¹BᵀSA`,
/// `S_k = Q + AᵀS(A − BK_k)`, symmetrised every step.
pub fn riccati_backward(
    knots: &[LinearizationKnot],
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    qf: &DMatrix<f64>,
) -> Result<GainSchedule> {
    if r.clone().cholesky().is_none() {
        return Err(Error::invalid("r", "must be positive definite"));
    }
    let mut s = symmetrize(qf);
    let mut gains = vec![DMatrix::zeros(r.nrows(), q.nrows()); knots.len()];
    let mut cost_to_go = vec![s.clone(); knots.len() + 1];
    let mut floored = Vec::new();
    for (k, knot) in knots.iter().enumerate().rev() {
        let (a, b) = (&knot.a, &knot.b);
        let bts = b.transpose() * &s;
        let lhs = r + &bts * b;
        let gain = lhs
            .cholesky()
            .ok_or(Error::SingularSystem {
                condition: f64::INFINITY,
            })?
            .solve(&(&bts * a));
        s = symmetrize(&(q + a.transpose() * &s * (a - b * &gain)));
        let eig = s.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < 0.0) {
            let clipped = eig.eigenvalues.map(|l| l.max(0.0));
            s = symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()));
            floored.push(k);
        }
        gains[k] = gain;
        cost_to_go[k] = s.clone();
    }
    floored.reverse();
    Ok(GainSchedule {
        times: knots.iter().map(|k| k.time).collect(),
        gains,
        q: q.clone(),
        r: r.clone(),
        qf: qf.clone(),
        cost_to_go,
        floored,
    })
}

/// The coupled simulator seen as a plant on the planar states, with a
/// deep copy of the simulator (vehicle and every wake) stored at each knot.
///
/// Perturbed rollouts start from those copies with merging switched off, so
/// `+` and `−` runs see identical particle sets. A perturbed position or
/// pitch carries the fluid with the body, so a displaced vehicle does not
/// land on its own newly shed particles.
pub struct VehiclePlant {
    pub snapshots: Vec<Simulator>,
    pub sequence: ControlSequence,
    /// Control channels fed back (0 = elevator, 1 = sweep).
    pub channels: Vec<usize>,
    pub steps_per_knot: usize,
    pub knot_spacing: f64,
    perturb_config: Arc<SimConfig>,
}

impl VehiclePlant {
    /// Simulate the nominal and store a snapshot at every knot. Sweep is fed
    /// back only when `sweep_feedback` is set and the wing can sweep.
    pub fn new(
        config: Arc<SimConfig>,
        initial: VehicleState,
        sequence: &ControlSequence,
        knot_spacing: f64,
        horizon: f64,
        sweep_feedback: bool,
    ) -> Result<Self> {
        let ratio = knot_spacing / config.dt;
        let steps_per_knot = ratio.round() as usize;
        if steps_per_knot == 0 || (ratio - steps_per_knot as f64).abs() > 1e-6 {
            return Err(Error::invalid(
                "feedback.knot_spacing",
                "must be a whole number of time steps",
            ));
        }
        let intervals = ((horizon / knot_spacing) - 1e-9).ceil().max(1.0) as usize;
        let mut sim = Simulator::new(config.clone(), initial)?;
        let mut policy = sequence.clone();
        let mut snapshots = Vec::with_capacity(intervals + 1);
        for _ in 0..intervals {
            snapshots.push(sim.clone());
            sim.run(&mut policy, steps_per_knot)?;
        }
        snapshots.push(sim);
        let mut perturb = (*config).clone();
        perturb.fluid.merge = None;
        perturb.snapshot_stride = None;
        let channels = if config.sweep_enabled && sweep_feedback {
            vec![0, 1]
        } else {
            vec![0]
        };
        Ok(Self {
            snapshots,
            sequence: sequence.clone(),
            channels,
            steps_per_knot,
            knot_spacing,
            perturb_config: Arc::new(perturb),
        })
    }

    /// Nominal planar state at every simulation step covered by the knots.
    pub fn nominal_states(&self) -> Vec<[f64; 6]> {
        self.snapshots.iter().map(|s| s.state.planar()).collect()
    }
}

impl Plant for VehiclePlant {
    fn state_dim(&self) -> usize {
        VehicleState::PLANAR_DIM
    }

    fn control_dim(&self) -> usize {
        self.channels.len()
    }

    fn intervals(&self) -> usize {
        self.snapshots.len() - 1
    }

    fn knot_time(&self, k: usize) -> f64 {
        self.snapshots[k].time()
    }

    fn nominal_state(&self, k: usize) -> DVector<f64> {
        DVector::from_row_slice(&self.snapshots[k].state.planar())
    }

    fn nominal_control(&self, k: usize) -> DVector<f64> {
        let u = self.sequence.at(self.knot_time(k));
        DVector::from_iterator(self.channels.len(), self.channels.iter().map(|&c| u.channel(c)))
    }

    /// The control perturbation `u − u_nominal(k)` is added to the nominal
    /// sequence over the whole interval.
    fn propagate(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut sim = self.snapshots[k].clone();
        sim.config = self.perturb_config.clone();
        let from = sim.state;
        sim.state.set_planar(x.as_slice());
        sim.fluid.carry(&from, &sim.state);
        let delta = u - self.nominal_control(k);
        for _ in 0..self.steps_per_knot {
            let mut cmd = self.sequence.at(sim.time());
            for (i, &c) in self.channels.iter().enumerate() {
                *cmd.channel_mut(c) += delta[i];
            }
            sim.step(cmd)?;
        }
        Ok(DVector::from_row_slice(&sim.state.planar()))
    }
}

/// Nominal plus feedback: `u = u_nom(t) − K(t)·(x − x_nom(t))`, clamped.
///
/// The gain is held between knots and the nominal state is the planned
/// trajectory at the same simulation step. Past the last knot the last gain
/// is held and `beyond_horizon` is set.
#[derive(Debug, Clone)]
pub struct TvlqrPolicy {
    pub sequence: ControlSequence,
    pub nominal: Vec<[f64; 6]>,
    pub dt: f64,
    pub schedule: GainSchedule,
    pub knot_spacing: f64,
    pub channels: Vec<usize>,
    pub bounds: ActuatorBounds,
    pub beyond_horizon: bool,
}

impl TvlqrPolicy {
    pub fn new(
        sequence: ControlSequence,
        nominal: &Trajectory,
        dt: f64,
        schedule: GainSchedule,
        knot_spacing: f64,
        channels: Vec<usize>,
        bounds: ActuatorBounds,
    ) -> Self {
        Self {
            sequence,
            nominal: nominal.states().map(|s| s.planar()).collect(),
            dt,
            schedule,
            knot_spacing,
            channels,
            bounds,
            beyond_horizon: false,
        }
    }
}

/// One feedback evaluation. Returns the command and whether `t` fell past
/// the gain schedule.
pub fn feedback_command(
    state: &VehicleState,
    nominal_state: &[f64; 6],
    nominal_control: ControlInput,
    gain: &DMatrix<f64>,
    channels: &[usize],
    bounds: &ActuatorBounds,
) -> ControlInput {
    let x = state.planar();
    let mut err = DVector::from_iterator(6, x.iter().zip(nominal_state).map(|(a, b)| a - b));
    err[2] = wrap_angle(err[2]);
    let du = -(gain * err);
    let mut u = nominal_control;
    for (i, &c) in channels.iter().enumerate() {
        *u.channel_mut(c) += du[i];
    }
    bounds.clamp(u)
}

impl ControlPolicy for TvlqrPolicy {
    fn command(&mut self, time: f64, state: &VehicleState) -> ControlInput {
        let n = self.schedule.gains.len();
        let k = (time / self.knot_spacing + 1e-9).floor().max(0.0) as usize;
        if k >= n {
            self.beyond_horizon = true;
        }
        let step = ((time / self.dt).round().max(0.0) as usize).min(self.nominal.len() - 1);
        let u_nom = self.sequence.at(time);
        match self.schedule.gains.get(k.min(n.wrapping_sub(1))) {
            Some(gain) => feedback_command(state, &self.nominal[step], u_nom, gain, &self.channels, &self.bounds),
            None => self.bounds.clamp(u_nom),
        }
    }
}

/// Linearize the simulator along `sequence` from `initial` and build the
/// closed-loop policy.
pub fn synthesize(
    config: Arc<SimConfig>,
    initial: VehicleState,
    sequence: &ControlSequence,
    horizon: f64,
    weights: &LqrWeights,
) -> Result<(TvlqrPolicy, Vec<LinearizationKnot>)> {
    weights.validate()?;
    let plant = VehiclePlant::new(
        config.clone(),
        initial,
        sequence,
        weights.knot_spacing,
        horizon,
        weights.sweep_feedback,
    )?;
    let knots = linearize_fd(&plant, weights.eps)?;
    let (q, r, qf) = weights.matrices(&plant.channels);
    let schedule = riccati_backward(&knots, &q, &r, &qf)?;
    let steps = (horizon / config.dt).round() as usize;
    let nominal = Simulator::new(config.clone(), initial)?.run(&mut sequence.clone(), steps)?;
    let policy = TvlqrPolicy::new(
        sequence.clone(),
        &nominal,
        config.dt,
        schedule,
        weights.knot_spacing,
        plant.channels.clone(),
        ActuatorBounds::of(&config.geometry),
    );
    Ok((policy, knots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn knot(a: DMatrix<f64>, b: DMatrix<f64>) -> LinearizationKnot {
        let n = a.nrows();
        let m = b.ncols();
        LinearizationKnot {
            time: 0.0,
            a,
            b,
            state: DVector::zeros(n),
            control: DVector::zeros(m),
            retries: 0,
        }
    }

    #[test]
    fn identity_one_step_gain_is_half() {
        let i = DMatrix::<f64>::identity(2, 2);
        let s = riccati_backward(&[knot(i.clone(), i.clone())], &i, &i, &i).unwrap();
        assert_relative_eq!(s.gains[0], i * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_cost_gives_zero_gains() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
        let z = DMatrix::zeros(2, 2);
        let r = DMatrix::identity(1, 1);
        let knots = vec![knot(a, b); 5];
        let s = riccati_backward(&knots, &z, &r, &z).unwrap();
        assert!(s.gains.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn indefinite_r_is_rejected() {
        let i = DMatrix::<f64>::identity(1, 1);
        let err = riccati_backward(&[knot(i.clone(), i.clone())], &i, &(-&i), &i);
        assert!(err.is_err());
    }

    #[test]
    fn zero_gain_passes_the_nominal_through() {
        let b = ActuatorBounds::of(&crate::vehicle::VehicleGeometry::default());
        let s = VehicleState {
            x: 3.0,
            theta: 0.4,
            ..VehicleState::default()
        };
        let u = ControlInput::new(-0.2, -0.4);
        let out = feedback_command(&s, &[0.0; 6], u, &DMatrix::zeros(2, 6), &[0, 1], &b);
        assert_eq!(out, u);
        let g = DMatrix::from_element(2, 6, 0.3);
        let out = feedback_command(&s, &s.planar(), u, &g, &[0, 1], &b);
        assert_eq!(out, u);
    }

    #[test]
    fn feedback_wraps_pitch_error_and_clamps() {
        let b = ActuatorBounds::of(&crate::vehicle::VehicleGeometry::default());
        let s = VehicleState {
            theta: std::f64::consts::PI - 0.05,
            ..VehicleState::default()
        };
        let nominal = [0.0, 0.0, -std::f64::consts::PI + 0.05, 0.0, 0.0, 0.0];
        let mut g = DMatrix::zeros(1, 6);
        g[(0, 2)] = 1.0;
        let out = feedback_command(&s, &nominal, ControlInput::ZERO, &g, &[0], &b);
        assert_relative_eq!(out.elevator_cmd, 0.1, epsilon = 1e-12);
        g[(0, 2)] = 100.0;
        let out = feedback_command(&s, &nominal, ControlInput::ZERO, &g, &[0], &b);
        assert_eq!(out.elevator_cmd, b.elevator);
    }

    /// `ẋ = A₀x + B₀u` integrated with RK4 between knots.
    struct LinearPlant {
        a0: DMatrix<f64>,
        b0: DMatrix<f64>,
        h: f64,
        intervals: usize,
        t0: f64,
    }

    impl LinearPlant {
        fn oscillator() -> Self {
            Self {
                a0: DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -2.0, -0.3, 0.5, 0.1, 0.0, -1.0]),
                b0: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.2, 1.0]),
                h: 0.05,
                intervals: 40,
                t0: 0.0,
            }
        }

        /// Zero-order-hold discretization from the augmented matrix exponential.
        fn exact(&self) -> (DMatrix<f64>, DMatrix<f64>) {
            let (n, m) = (self.a0.nrows(), self.b0.ncols());
            let mut aug = DMatrix::zeros(n + m, n + m);
            aug.view_mut((0, 0), (n, n)).copy_from(&self.a0);
            aug.view_mut((0, n), (n, m)).copy_from(&self.b0);
            let e = (aug * self.h).exp();
            (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
        }
    }

    impl Plant for LinearPlant {
        fn state_dim(&self) -> usize {
            self.a0.nrows()
        }
        fn control_dim(&self) -> usize {
            self.b0.ncols()
        }
        fn intervals(&self) -> usize {
            self.intervals
        }
        fn knot_time(&self, k: usize) -> f64 {
            self.t0 + k as f64 * self.h
        }
        fn nominal_state(&self, k: usize) -> DVector<f64> {
            DVector::from_fn(self.state_dim(), |i, _| 0.1 * (i + k) as f64)
        }
        fn nominal_control(&self, k: usize) -> DVector<f64> {
            DVector::from_fn(self.control_dim(), |i, _| 0.05 * i as f64 - 0.01 * k as f64)
        }
        fn propagate(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
            let f = |x: &DVector<f64>| &self.a0 * x + &self.b0 * u;
            let sub = 100;
            let dt = self.h / sub as f64;
            let mut x = x.clone();
            for _ in 0..sub {
                let k1 = f(&x);
                let k2 = f(&(&x + &k1 * (0.5 * dt)));
                let k3 = f(&(&x + &k2 * (0.5 * dt)));
                let k4 = f(&(&x + &k3 * dt));
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
            Ok(x)
        }
    }

    /// Finite-horizon LQR written out with explicit inverses.
    fn textbook_gains(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        qf: &DMatrix<f64>,
        steps: usize,
    ) -> Vec<DMatrix<f64>> {
        let mut p = qf.clone();
        let mut out = vec![DMatrix::zeros(b.ncols(), a.nrows()); steps];
        for k in (0..steps).rev() {
            let inv = (r + b.transpose() * &p * b).try_inverse().unwrap();
            let gain = &inv * b.transpose() * &p * a;
            p = q + a.transpose() * &p * a - a.transpose() * &p * b * &inv * b.transpose() * &p * a;
            out[k] = gain;
        }
        out
    }

    /// Infinite-horizon solution of the discrete algebraic Riccati equation
    /// by the structured doubling algorithm.
    fn dare_doubling(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let i = DMatrix::<f64>::identity(n, n);
        let (mut ak, mut g, mut h) = (
            a.clone(),
            b * r.clone().try_inverse().unwrap() * b.transpose(),
            q.clone(),
        );
        for _ in 0..60 {
            let w = (&i + &g * &h).try_inverse().unwrap();
            let a_next = &ak * &w * &ak;
            let g_next = &g + &ak * &w * &g * ak.transpose();
            let h_next = &h + ak.transpose() * &h * &w * &ak;
            ak = a_next;
            g = g_next;
            h = h_next;
        }
        h
    }

    #[test]
    fn fd_recovers_zero_order_hold_discretization() {
        let plant = LinearPlant::oscillator();
        let (ad, bd) = plant.exact();
        let knots = linearize_fd(&plant, 1e-4).unwrap();
        assert_eq!(knots.len(), plant.intervals);
        for k in &knots {
            assert!((&k.a - &ad).amax() < 1e-6, "{}", (&k.a - &ad).amax());
            assert!((&k.b - &bd).amax() < 1e-6);
            assert_eq!(k.retries, 0);
        }
    }

    #[test]
    fn pipeline_matches_textbook_lqr_on_linear_plant() {
        let plant = LinearPlant::oscillator();
        let (ad, bd) = plant.exact();
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0, 3.0]));
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5]));
        let qf = &q * 10.0;
        let knots = linearize_fd(&plant, 1e-4).unwrap();
        let schedule = riccati_backward(&knots, &q, &r, &qf).unwrap();
        let expected = textbook_gains(&ad, &bd, &q, &r, &qf, plant.intervals);
        for (g, e) in schedule.gains.iter().zip(&expected) {
            assert!((g - e).amax() < 1e-6, "{}", (g - e).amax());
        }
        assert!(schedule.floored.is_empty());
        for s in &schedule.cost_to_go {
            assert!((s - s.transpose()).amax() <= 1e-12);
        }
    }

    #[test]
    fn long_horizon_gain_reaches_algebraic_riccati_gain() {
        let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.2, 0.0, 0.95]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1) * 0.1;
        let x = dare_doubling(&a, &b, &q, &r);
        let k_inf = (&r + b.transpose() * &x * &b).try_inverse().unwrap() * b.transpose() * &x * &a;
        let knots = vec![knot(a, b); 2000];
        let s = riccati_backward(&knots, &q, &r, &DMatrix::zeros(2, 2)).unwrap();
        assert!((&s.gains[0] - &k_inf).amax() < 1e-6, "{} vs {}", s.gains[0], k_inf);
    }

    /// `x' = (x₀ + h x₁, x₁ + h(u − sin x₀))`, with a closed-form Jacobian.
    struct PendulumMap;

    impl Plant for PendulumMap {
        fn state_dim(&self) -> usize {
            2
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn intervals(&self) -> usize {
            1
        }
        fn knot_time(&self, _k: usize) -> f64 {
            0.0
        }
        fn nominal_state(&self, _k: usize) -> DVector<f64> {
            DVector::from_vec(vec![0.7, -0.4])
        }
        fn nominal_control(&self, _k: usize) -> DVector<f64> {
            DVector::from_vec(vec![0.2])
        }
        fn propagate(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
            let h = 0.1;
            Ok(DVector::from_vec(vec![x[0] + h * x[1], x[1] + h * (u[0] - x[0].sin())]))
        }
    }

    #[test]
    fn central_difference_error_is_second_order() {
        let exact = -0.1 * 0.7f64.cos();
        let err = |eps: f64| (linearize_fd(&PendulumMap, eps).unwrap()[0].a[(1, 0)] - exact).abs();
        let ratio = err(2e-2) / err(1e-2);
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
    }

    struct FailingPlant {
        fail_above: f64,
    }

    impl Plant for FailingPlant {
        fn state_dim(&self) -> usize {
            1
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn intervals(&self) -> usize {
            1
        }
        fn knot_time(&self, _k: usize) -> f64 {
            0.0
        }
        fn nominal_state(&self, _k: usize) -> DVector<f64> {
            DVector::from_vec(vec![0.0])
        }
        fn nominal_control(&self, _k: usize) -> DVector<f64> {
            DVector::from_vec(vec![0.0])
        }
        fn propagate(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
            if x[0].abs() > self.fail_above {
                return Err(Error::Diverged {
                    time: 0.0,
                    partial: None,
                });
            }
            Ok(x * 2.0 + u)
        }
    }

    #[test]
    fn failed_perturbation_retries_once_with_smaller_step() {
        let k = linearize_fd(&FailingPlant { fail_above: 5e-4 }, 1e-3).unwrap();
        assert_eq!(k[0].retries, 1);
        assert_relative_eq!(k[0].a[(0, 0)], 2.0, epsilon = 1e-9);
        let err = linearize_fd(&FailingPlant { fail_above: 5e-5 }, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Linearization { knot: 0, .. }));
    }

    #[test]
    fn gains_do_not_depend_on_knot_time_origin() {
        let plant = LinearPlant::oscillator();
        let shifted = LinearPlant {
            t0: 3.7,
            ..LinearPlant::oscillator()
        };
        let q = DMatrix::identity(3, 3);
        let r = DMatrix::identity(2, 2);
        let a = riccati_backward(&linearize_fd(&plant, 1e-4).unwrap(), &q, &r, &q).unwrap();
        let b = riccati_backward(&linearize_fd(&shifted, 1e-4).unwrap(), &q, &r, &q).unwrap();
        assert_eq!(a.gains, b.gains);
        assert_relative_eq!(b.times[0], 3.7);
    }

    fn ballistic_config() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.fluid.rho = 0.0;
        cfg.model = crate::vehicle::AeroModel::QuasiSteady;
        cfg
    }

    #[test]
    fn gravity_only_vehicle_is_a_double_integrator() {
        let cfg = Arc::new(ballistic_config());
        let seq = ControlSequence::zeros_for_horizon(0.05, 0.2);
        let plant = VehiclePlant::new(cfg, VehicleState::launch(7.0), &seq, 0.05, 0.2, true).unwrap();
        let knots = linearize_fd(&plant, 1e-4).unwrap();
        let h = 0.05;
        let mut a = DMatrix::<f64>::identity(6, 6);
        for i in 0..3 {
            a[(i, i + 3)] = h;
        }
        for k in &knots {
            assert!((&k.a - &a).amax() < 1e-9, "{}", k.a);
            assert!(k.b.amax() < 1e-9);
        }
    }

    #[test]
    fn displaced_vehicle_carries_its_wake() {
        let cfg = Arc::new(SimConfig::default());
        let seq = ControlSequence::zeros_for_horizon(0.05, 0.3);
        let plant = VehiclePlant::new(cfg, VehicleState::launch(7.0), &seq, 0.05, 0.3, false).unwrap();
        let knots = linearize_fd(&plant, 1e-4).unwrap();
        let e = DMatrix::<f64>::identity(6, 6);
        for k in &knots {
            assert!((k.a.columns(0, 2) - e.columns(0, 2)).amax() < 1e-9, "{}", k.a);
        }
    }

    #[test]
    fn sweep_is_fed_back_only_on_request() {
        let cfg = Arc::new(SimConfig::default());
        let seq = ControlSequence::zeros_for_horizon(0.05, 0.1);
        let off = VehiclePlant::new(cfg.clone(), VehicleState::launch(7.0), &seq, 0.05, 0.1, false).unwrap();
        let on = VehiclePlant::new(cfg, VehicleState::launch(7.0), &seq, 0.05, 0.1, true).unwrap();
        assert_eq!(off.channels, vec![0]);
        assert_eq!(on.channels, vec![0, 1]);
    }

    #[test]
    fn riccati_floors_negative_cost_to_go() {
        let i = DMatrix::<f64>::identity(1, 1);
        let s = riccati_backward(&[knot(i.clone(), i.clone())], &(-&i * 5.0), &i, &i).unwrap();
        assert_eq!(s.floored, vec![0]);
        assert!(s.cost_to_go[0][(0, 0)] >= 0.0);
    }

    #[test]
    fn height_error_calls_for_nose_down_elevator() {
        let cfg = Arc::new(SimConfig::default());
        let seq = ControlSequence::zeros_for_horizon(0.05, 0.5);
        let weights = LqrWeights::default();
        let (policy, knots) = synthesize(cfg, VehicleState::launch(7.0), &seq, 0.5, &weights).unwrap();
        // Positive elevator (trailing edge down) pitches the nose down.
        assert!(knots[0].b[(5, 0)] < 0.0, "{}", knots[0].b);
        // Above the nominal, the correction is positive elevator.
        let gain = &policy.schedule.gains[0];
        assert!(gain[(0, 1)] < 0.0, "{gain}");
    }
}
