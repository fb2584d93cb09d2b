//! Reference controllers and a common closed-loop runner.

pub mod heating_curve;
pub mod mpc;

pub use heating_curve::HeatingCurve;
pub use mpc::{mpc_plan, MpcConfig, MpcController, MpcPlan};

use crate::crl::Mlp;
use crate::crl::policy::{normalize_obs, policy_deterministic};
use crate::env::{Env, Mode, Observation, Transition, OBS_DIM};
use crate::error::Result;
use crate::thermal::BuildingState;

/// Anything that maps an observation to a normalized action.
#[derive(Debug, Clone)]
pub enum Controller {
    HeatingCurve(HeatingCurve),
    Mpc(Box<MpcController>),
    /// Deterministic mode of a trained actor.
    Policy(Mlp),
}

impl Controller {
    pub fn label(&self) -> &'static str {
        match self {
            Controller::HeatingCurve(_) => "heating_curve",
            Controller::Mpc(_) => "mpc",
            Controller::Policy(_) => "policy",
        }
    }

    pub fn reset(&mut self) {
        if let Controller::Mpc(m) = self {
            m.reset();
        }
    }

    /// Normalized action for the current observation. The MPC reads its
    /// forecast from the env's disturbance series, starting at the env's
    /// current index.
    pub fn act(&mut self, env: &Env, obs: &Observation) -> Result<f64> {
        let cfg = env.config();
        Ok(match self {
            Controller::HeatingCurve(c) => cfg.supply_to_action(c.act(obs[0])),
            Controller::Mpc(m) => {
                let measured = BuildingState::new(obs[1], obs[2], obs[3]);
                let forecast = env.series().window(env.index(), m.cfg.horizon);
                cfg.supply_to_action(m.act(measured, &forecast)?)
            }
            Controller::Policy(actor) => {
                let x = normalize_obs(obs);
                let view = ndarray::ArrayView2::from_shape((1, OBS_DIM), &x).expect("one row");
                policy_deterministic(actor, view)[0]
            }
        })
    }
}

/// Run one episode of `env` in `mode` under `ctl`.
pub fn run_episode(env: &mut Env, ctl: &mut Controller, mode: Mode) -> Result<Vec<Transition>> {
    ctl.reset();
    let mut obs = env.reset(mode, None);
    let mut out = Vec::with_capacity(env.episode_len());
    loop {
        let a = ctl.act(env, &obs)?;
        let tr = env.step(a)?;
        obs = tr.obs;
        let done = tr.done;
        out.push(tr);
        if done {
            return Ok(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::building::shipped;
    use crate::disturbance::synth_weather;
    use crate::env::EnvConfig;
    use std::sync::Arc;

    #[test]
    fn heating_curve_episode_tracks_observed_ambient() {
        let b = shipped("building1").unwrap();
        let series = b.disturbances(synth_weather(1, 2).unwrap()).unwrap();
        let cfg = EnvConfig {
            eval_len: 96,
            ..Default::default()
        };
        let mut env = Env::new(Arc::new(b), Arc::new(series.clone()), cfg, 0).unwrap();
        let curve = HeatingCurve::default();
        let mut ctl = Controller::HeatingCurve(curve);
        let tr = run_episode(&mut env, &mut ctl, Mode::Eval).unwrap();
        assert_eq!(tr.len(), 96);
        for (k, t) in tr.iter().enumerate() {
            assert!((t.info.t_hp_sup - curve.act(series.t_amb[k])).abs() < 1e-9);
        }
    }
}
