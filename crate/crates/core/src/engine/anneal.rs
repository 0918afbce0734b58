use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{HmeError, Result};

/// How the schedule behaves once the geometric decay crosses the terminal value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnealingMode {
    /// Decay geometrically until `switch_iteration`, then jump to `terminal`.
    Literal,
    /// Decay geometrically but never pass `terminal`.
    Clamped,
}

/// Inverse-temperature schedule applied to the expert likelihood term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub initial: f64,
    pub decay: f64,
    pub switch_iteration: usize,
    pub terminal: f64,
    pub mode: AnnealingMode,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        AnnealingSchedule {
            initial: 5.85,
            decay: 0.97,
            switch_iteration: 200,
            terminal: 1.0,
            mode: AnnealingMode::Literal,
        }
    }
}

impl AnnealingSchedule {
    /// No annealing: the data term is always scaled by `value`.
    pub fn constant(value: f64) -> Self {
        AnnealingSchedule {
            initial: value,
            decay: 1.0,
            switch_iteration: 0,
            terminal: value,
            mode: AnnealingMode::Literal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("initial", self.initial), ("decay", self.decay), ("terminal", self.terminal)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HmeError::InvalidArgument(format!(
                    "annealing {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn inverse_temperature(&self, iteration: usize) -> f64 {
        if iteration >= self.switch_iteration {
            return self.terminal;
        }
        let decayed = self.initial * libm::pow(self.decay, iteration as f64);
        match self.mode {
            AnnealingMode::Literal => decayed,
            AnnealingMode::Clamped if self.initial >= self.terminal => decayed.max(self.terminal),
            AnnealingMode::Clamped => decayed.min(self.terminal),
        }
    }

    pub fn is_terminal(&self, iteration: usize) -> bool {
        self.inverse_temperature(iteration) == self.terminal
    }
}

/// Inverse temperature at `iteration` under `schedule`.
pub fn annealing_schedule(iteration: usize, schedule: &AnnealingSchedule) -> Result<f64> {
    schedule.validate()?;
    Ok(schedule.inverse_temperature(iteration))
}
