//! Receding-horizon MPC on the ground-truth building model.
//!
//! Each solve minimizes, over a sequence of supply setpoints,
//!
//! ```text
//!   J(u) = Σ_k E_el(k) [kWh] + w · Σ_k max(0, y_min - T_room(k+1))²
//! ```
//!
//! by projected gradient descent with backtracking. Gradients come from a
//! reverse (adjoint) sweep through the Euler-discretized dynamics. Inside the
//! heat pump's dead zone (setpoint below the return temperature) the exact
//! derivative with respect to the setpoint is zero; there the sweep uses the
//! derivative of the switched-on branch instead, so a cold plan can still
//! find its way back into the heating region. Iterates are only accepted
//! when `J` does not increase, so the objective is monotone regardless.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::building::Building;
use crate::error::{Error, Result};
use crate::thermal::{substep_lengths, BuildingState, DisturbanceSample, LinearSystem};

const J_PER_KWH: f64 = 3.6e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon, control intervals.
    pub horizon: usize,
    /// Weight on the squared comfort slack, per K².
    pub slack_weight: f64,
    /// Gradient iterations per solve.
    pub iters: usize,
    /// Largest setpoint move per iteration, °C. Halved on increase.
    pub step_size: f64,
    /// Backtracking stops below this move, °C.
    pub min_step: f64,
    pub u_bounds: (f64, f64),
    /// Lower comfort bound on the room temperature, °C.
    pub y_min: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            slack_weight: 0.1,
            iters: 200,
            step_size: 0.5,
            min_step: 1e-3,
            u_bounds: (20.0, 60.0),
            y_min: 20.0,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        if !(self.slack_weight > 0.0) {
            return Err(Error::param("slack_weight", "must be positive"));
        }
        if !(self.u_bounds.0 < self.u_bounds.1) {
            return Err(Error::param("u_bounds", "min must be below max"));
        }
        if !(self.step_size > 0.0 && self.min_step > 0.0) {
            return Err(Error::param("step_size", "must be positive"));
        }
        Ok(())
    }

    fn project(&self, u: f64) -> f64 {
        u.clamp(self.u_bounds.0, self.u_bounds.1)
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    /// Optimized setpoints, one per horizon step, °C.
    pub controls: Vec<f64>,
    /// Objective of the starting sequence.
    pub initial_objective: f64,
    /// Objective of every accepted iterate, starting with the initial one.
    pub history: Vec<f64>,
}

impl MpcPlan {
    pub fn objective(&self) -> f64 {
        *self.history.last().expect("history starts with the initial objective")
    }

    pub fn is_monotone(&self) -> bool {
        self.history.windows(2).all(|w| w[1] <= w[0])
    }
}

/// The optimization problem for one solve.
pub struct MpcProblem<'a> {
    cfg: &'a MpcConfig,
    building: &'a Building,
    lin: LinearSystem,
    substeps: Vec<f64>,
    x0: BuildingState,
    forecast: &'a [DisturbanceSample],
}

struct Trajectory {
    /// State before every substep, step-major.
    states: Vec<[f64; 3]>,
    objective: f64,
}

impl<'a> MpcProblem<'a> {
    pub fn new(
        cfg: &'a MpcConfig,
        building: &'a Building,
        dt: f64,
        substep: f64,
        x0: BuildingState,
        forecast: &'a [DisturbanceSample],
    ) -> Result<Self> {
        cfg.validate()?;
        if forecast.len() < cfg.horizon {
            return Err(Error::ForecastTooShort {
                needed: cfg.horizon,
                got: forecast.len(),
            });
        }
        Ok(Self {
            cfg,
            building,
            lin: LinearSystem::new(building.variant, &building.params),
            substeps: substep_lengths(dt, substep),
            x0,
            forecast: &forecast[..cfg.horizon],
        })
    }

    fn power(&self, u: f64, t_ret: f64, t_amb: f64) -> f64 {
        self.building
            .heat_pump
            .hp_power(&self.building.params, u, t_ret, t_amb)
            .p_el
    }

    fn rollout(&self, controls: &[f64], keep: bool) -> Trajectory {
        let mut states = Vec::new();
        if keep {
            states.reserve(controls.len() * self.substeps.len());
        }
        let mut x = self.x0.to_array();
        let mut energy_kwh = 0.0;
        let mut slack = 0.0;
        for (u, dist) in controls.iter().zip(self.forecast) {
            for &h in &self.substeps {
                if keep {
                    states.push(x);
                }
                energy_kwh += self.power(*u, x[2], dist.t_amb) * h / J_PER_KWH;
                let dx = self.lin.eval(x, u.max(x[2]), dist);
                for i in 0..3 {
                    x[i] += h * dx[i];
                }
            }
            let under = (self.cfg.y_min - x[0]).max(0.0);
            slack += under * under;
        }
        Trajectory {
            states,
            objective: energy_kwh + self.cfg.slack_weight * slack,
        }
    }

    pub fn objective(&self, controls: &[f64]) -> f64 {
        self.rollout(controls, false).objective
    }

    /// Objective and its (surrogate in the dead zone) gradient.
    pub fn gradient(&self, controls: &[f64]) -> (f64, Vec<f64>) {
        let traj = self.rollout(controls, true);
        let hp = &self.building.heat_pump;
        let p = &self.building.params;
        let mc = p.loop_conductance();
        let b_ret = self.lin.b_sup[2];
        let a = &self.lin.a;
        let n_sub = self.substeps.len();
        let mut grad = vec![0.0; controls.len()];
        // Adjoint of the state after the current position in the sweep.
        let mut lam = [0.0f64; 3];
        for k in (0..controls.len()).rev() {
            let u = controls[k];
            let dist = &self.forecast[k];
            let t_src = hp.source.temperature(dist.t_amb);
            // Comfort slack on the room temperature at the end of step k.
            let x_end = if k + 1 < controls.len() {
                traj.states[(k + 1) * n_sub]
            } else {
                self.end_state(&traj, controls)
            };
            let under = (self.cfg.y_min - x_end[0]).max(0.0);
            lam[0] += -2.0 * self.cfg.slack_weight * under;
            for j in (0..n_sub).rev() {
                let h = self.substeps[j];
                let x = traj.states[k * n_sub + j];
                let on = u > x[2];
                let mut next = lam;
                for i in 0..3 {
                    next[i] += h * (a[0][i] * lam[0] + a[1][i] * lam[1] + a[2][i] * lam[2]);
                }
                let (cop, dcop) = hp.cop_extended(u.max(x[2]), t_src);
                if on {
                    let lift = u - x[2];
                    let dp_du = mc / cop - mc * lift * dcop / (cop * cop);
                    let dp_dt = -mc / cop;
                    next[2] += h * dp_dt / J_PER_KWH;
                    grad[k] += h * b_ret * lam[2] + h * dp_du / J_PER_KWH;
                } else {
                    // Supply follows the return temperature while idle.
                    next[2] += h * b_ret * lam[2];
                    grad[k] += h * b_ret * lam[2] + h * (mc / cop) / J_PER_KWH;
                }
                lam = next;
            }
        }
        (traj.objective, grad)
    }

    fn end_state(&self, traj: &Trajectory, controls: &[f64]) -> [f64; 3] {
        let k = controls.len() - 1;
        let n_sub = self.substeps.len();
        let mut x = traj.states[k * n_sub + n_sub - 1];
        let h = self.substeps[n_sub - 1];
        let dx = self.lin.eval(x, controls[k].max(x[2]), &self.forecast[k]);
        for i in 0..3 {
            x[i] += h * dx[i];
        }
        x
    }

    /// Projected gradient descent from `start`.
    pub fn solve(&self, start: Vec<f64>) -> MpcPlan {
        let mut u: Vec<f64> = start.into_iter().map(|v| self.cfg.project(v)).collect();
        let initial = self.objective(&u);
        let mut history = vec![initial];
        let mut current = initial;
        for _ in 0..self.cfg.iters {
            let (_, g) = self.gradient(&u);
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale == 0.0 || !scale.is_finite() {
                break;
            }
            let mut step = self.cfg.step_size;
            let mut accepted = false;
            while step >= self.cfg.min_step {
                let trial: Vec<f64> = u
                    .iter()
                    .zip(&g)
                    .map(|(ui, gi)| self.cfg.project(ui - step * gi / scale))
                    .collect();
                if trial == u {
                    break;
                }
                let value = self.objective(&trial);
                if value <= current {
                    u = trial;
                    current = value;
                    history.push(value);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        MpcPlan {
            controls: u,
            initial_objective: initial,
            history,
        }
    }
}

/// Solve one MPC problem. Without a warm start every setpoint starts at the
/// middle of `u_bounds`.
pub fn mpc_plan(
    cfg: &MpcConfig,
    building: &Building,
    dt: f64,
    substep: f64,
    measured: BuildingState,
    forecast: &[DisturbanceSample],
    warm_start: Option<&[f64]>,
) -> Result<MpcPlan> {
    let problem = MpcProblem::new(cfg, building, dt, substep, measured, forecast)?;
    let start = match warm_start {
        Some(w) if w.len() == cfg.horizon => w.to_vec(),
        Some(w) => {
            return Err(Error::LengthMismatch {
                what: "warm start vs horizon",
                left: w.len(),
                right: cfg.horizon,
            })
        }
        None => vec![0.5 * (cfg.u_bounds.0 + cfg.u_bounds.1); cfg.horizon],
    };
    let plan = problem.solve(start);
    assert!(plan.is_monotone(), "MPC objective increased across accepted iterates");
    Ok(plan)
}

/// Stateful receding-horizon controller that warm-starts every solve from
/// the previous plan shifted by one step.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub cfg: MpcConfig,
    building: Arc<Building>,
    dt: f64,
    substep: f64,
    last_plan: Option<Vec<f64>>,
    last_solve: Option<MpcPlan>,
}

impl MpcController {
    pub fn new(cfg: MpcConfig, building: Arc<Building>, dt: f64, substep: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            building,
            dt,
            substep,
            last_plan: None,
            last_solve: None,
        })
    }

    /// Warm start for the next solve: previous plan advanced by one step with
    /// its last entry repeated.
    pub fn warm_start(&self) -> Option<Vec<f64>> {
        self.last_plan.as_ref().map(|p| {
            let mut w: Vec<f64> = p[1..].to_vec();
            w.push(*p.last().expect("non-empty plan"));
            w
        })
    }

    pub fn last_solve(&self) -> Option<&MpcPlan> {
        self.last_solve.as_ref()
    }

    pub fn reset(&mut self) {
        self.last_plan = None;
        self.last_solve = None;
    }

    /// Plan from a measured state and apply the first setpoint.
    pub fn act(&mut self, measured: BuildingState, forecast: &[DisturbanceSample]) -> Result<f64> {
        let warm = self.warm_start();
        let plan = mpc_plan(
            &self.cfg,
            &self.building,
            self.dt,
            self.substep,
            measured,
            forecast,
            warm.as_deref(),
        )?;
        let first = plan.controls[0];
        self.last_plan = Some(plan.controls.clone());
        self.last_solve = Some(plan);
        Ok(first)
    }
}
