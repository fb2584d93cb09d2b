//! Building + heat pump over one control interval.
//!
//! The heat pump cannot cool: within every substep the effective supply is
//! `max(setpoint, T_hp_ret)`, so a setpoint at or below the return
//! temperature switches the unit off and lets the loop water circulate
//! without heat input.

use crate::building::Building;
use crate::error::Result;
use crate::thermal::{integrate_with, BuildingState, DisturbanceSample};

/// Result of simulating one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalOutcome {
    pub state: BuildingState,
    /// Mean thermal power over the interval, W.
    pub q_th: f64,
    /// Mean electrical power over the interval, W.
    pub p_el: f64,
    /// Interval COP (`q_th / p_el`), 0 when idle.
    pub cop: f64,
}

pub fn simulate_interval(
    building: &Building,
    state: &BuildingState,
    dist: &DisturbanceSample,
    setpoint: f64,
    dt: f64,
    substep: f64,
) -> Result<IntervalOutcome> {
    let mut heat_j = 0.0;
    let mut energy_j = 0.0;
    let next = integrate_with(state, dist, building.variant, &building.params, dt, substep, |x, h| {
        let pw = building
            .heat_pump
            .hp_power(&building.params, setpoint, x.t_hp_ret, dist.t_amb);
        heat_j += pw.q_th * h;
        energy_j += pw.p_el * h;
        setpoint.max(x.t_hp_ret)
    })?;
    let cop = if energy_j > 0.0 { heat_j / energy_j } else { 0.0 };
    Ok(IntervalOutcome {
        state: next,
        q_th: heat_j / dt,
        p_el: energy_j / dt,
        cop,
    })
}
