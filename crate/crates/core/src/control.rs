//! Control inputs, zero-order-hold control sequences and the policy interface
//! the simulator queries every step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::VehicleState;

/// Actuator commands (rad). Positive elevator is trailing edge down
/// (nose-down); negative sweep is aft.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub elevator_cmd: f64,
    pub sweep_cmd: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        elevator_cmd: 0.0,
        sweep_cmd: 0.0,
    };

    pub fn new(elevator_cmd: f64, sweep_cmd: f64) -> Self {
        Self {
            elevator_cmd,
            sweep_cmd,
        }
    }

    pub fn channel(&self, i: usize) -> f64 {
        match i {
            0 => self.elevator_cmd,
            1 => self.sweep_cmd,
            _ => panic!("control channel {i} out of range"),
        }
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.elevator_cmd,
            1 => &mut self.sweep_cmd,
            _ => panic!("control channel {i} out of range"),
        }
    }
}

/// Controls on a uniform knot grid starting at t = 0, held constant between
/// knots. Times past the last knot hold the last value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    pub knot_spacing: f64,
    pub knots: Vec<ControlInput>,
}

impl ControlSequence {
    pub fn zeros(knot_spacing: f64, count: usize) -> Self {
        Self {
            knot_spacing,
            knots: vec![ControlInput::ZERO; count],
        }
    }

    /// Enough knots to cover `horizon` seconds.
    pub fn zeros_for_horizon(knot_spacing: f64, horizon: f64) -> Self {
        Self::zeros(knot_spacing, knot_count(knot_spacing, horizon))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.knot_spacing > 0.0 && self.knot_spacing.is_finite()) {
            return Err(Error::invalid("knot_spacing", "must be positive"));
        }
        if self
            .knots
            .iter()
            .any(|k| !k.elevator_cmd.is_finite() || !k.sweep_cmd.is_finite())
        {
            return Err(Error::invalid("knots", "non-finite control value"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.knot_spacing * self.knots.len() as f64
    }

    pub fn knot_index(&self, t: f64) -> usize {
        let k = (t / self.knot_spacing + 1e-9).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.knots.len().saturating_sub(1))
        }
    }

    pub fn at(&self, t: f64) -> ControlInput {
        if self.knots.is_empty() {
            ControlInput::ZERO
        } else {
            self.knots[self.knot_index(t)]
        }
    }
}

/// Number of knots of spacing `dt_knot` needed to cover `horizon`.
pub fn knot_count(dt_knot: f64, horizon: f64) -> usize {
    ((horizon / dt_knot) - 1e-9).ceil().max(1.0) as usize
}

/// Anything that can produce a command from the current time and state.
pub trait ControlPolicy {
    fn command(&mut self, time: f64, state: &VehicleState) -> ControlInput;
}

impl ControlPolicy for ControlSequence {
    fn command(&mut self, time: f64, _state: &VehicleState) -> ControlInput {
        self.at(time)
    }
}

impl<F: FnMut(f64, &VehicleState) -> ControlInput> ControlPolicy for F {
    fn command(&mut self, time: f64, state: &VehicleState) -> ControlInput {
        self(time, state)
    }
}
