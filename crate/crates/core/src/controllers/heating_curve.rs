use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rule-based supply setpoint: `base + slope·(20 °C - T_amb)`, clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatingCurve {
    pub base: f64,
    pub slope: f64,
    pub clamp: (f64, f64),
}

impl Default for HeatingCurve {
    fn default() -> Self {
        Self {
            base: 28.0,
            slope: 1.0,
            clamp: (20.0, 55.0),
        }
    }
}

impl HeatingCurve {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope >= 0.0) {
            return Err(Error::param("slope", "must be non-negative"));
        }
        if !(self.clamp.0 < self.clamp.1) {
            return Err(Error::param("clamp", "min must be below max"));
        }
        Ok(())
    }

    pub fn act(&self, t_amb_observed: f64) -> f64 {
        (self.base + self.slope * (20.0 - t_amb_observed)).clamp(self.clamp.0, self.clamp.1)
    }
}
