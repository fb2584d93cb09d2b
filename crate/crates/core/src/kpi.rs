//! Evaluation KPIs over an episode.

use serde::{Deserialize, Serialize};

use crate::env::{EpisodeRow, Transition};
use crate::error::{Error, Result};

/// Comfort thresholds a run must stay under to pass.
pub const PASS_AVG_DEV_K: f64 = 0.05;
pub const PASS_MAX_DEV_K: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    /// Electrical energy, kWh.
    pub energy_kwh: f64,
    /// Mean absolute room-temperature deviation from the reference, K.
    pub avg_dev_k: f64,
    /// Largest absolute deviation, K.
    pub max_dev_k: f64,
    /// Largest deviation below the reference, K (0 if never below).
    pub max_underheat_k: f64,
    /// Steps with the room below the reference.
    pub violation_steps: usize,
    pub pass_comfort: bool,
}

/// KPIs of a logged episode. `dt` is the step length in seconds.
pub fn compute_kpis(rows: &[EpisodeRow], t_ref: f64, dt: f64) -> Result<KpiReport> {
    if rows.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mut energy_kwh = 0.0;
    let mut dev_sum = 0.0;
    let mut max_dev_k = 0.0f64;
    let mut max_underheat_k = 0.0f64;
    let mut violation_steps = 0;
    for r in rows {
        energy_kwh += r.p_el_w * dt / 3.6e6;
        let dev = r.t_room - t_ref;
        dev_sum += dev.abs();
        max_dev_k = max_dev_k.max(dev.abs());
        if dev < 0.0 {
            violation_steps += 1;
            max_underheat_k = max_underheat_k.max(-dev);
        }
    }
    let avg_dev_k = dev_sum / rows.len() as f64;
    Ok(KpiReport {
        energy_kwh,
        avg_dev_k,
        max_dev_k,
        max_underheat_k,
        violation_steps,
        pass_comfort: avg_dev_k < PASS_AVG_DEV_K && max_dev_k < PASS_MAX_DEV_K,
    })
}

pub fn kpis_from_transitions(transitions: &[Transition], t_ref: f64, dt: f64) -> Result<KpiReport> {
    let rows: Vec<EpisodeRow> = transitions.iter().map(EpisodeRow::from).collect();
    compute_kpis(&rows, t_ref, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t_room: f64, p_el_w: f64) -> EpisodeRow {
        EpisodeRow {
            step: 0,
            t_amb: 0.0,
            t_room,
            t_wall: t_room,
            t_hp_ret: 30.0,
            t_hp_sup: 35.0,
            p_el_w,
            cop: 0.0,
            reward: 0.0,
            cost: 0.0,
        }
    }

    #[test]
    fn constant_comfortable_room() {
        let rows = vec![row(20.0, 0.0); 10];
        let k = compute_kpis(&rows, 20.0, 900.0).unwrap();
        assert_eq!(k.energy_kwh, 0.0);
        assert_eq!((k.avg_dev_k, k.max_dev_k, k.violation_steps), (0.0, 0.0, 0));
        assert!(k.pass_comfort);
    }

    #[test]
    fn deviation_arithmetic() {
        let rows = vec![row(20.0, 0.0), row(20.1, 0.0), row(19.8, 0.0)];
        let k = compute_kpis(&rows, 20.0, 900.0).unwrap();
        assert!((k.avg_dev_k - 0.1).abs() < 1e-12);
        assert!((k.max_dev_k - 0.2).abs() < 1e-12);
        assert!((k.max_underheat_k - 0.2).abs() < 1e-12);
        assert_eq!(k.violation_steps, 1);
        assert!(!k.pass_comfort);
    }

    #[test]
    fn one_day_at_one_kilowatt() {
        let rows = vec![row(20.0, 1000.0); 96];
        assert_eq!(compute_kpis(&rows, 20.0, 900.0).unwrap().energy_kwh, 24.0);
        assert!(compute_kpis(&[], 20.0, 900.0).is_err());
    }
}
