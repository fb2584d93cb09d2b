//! Constrained-MDP environment around the building simulator.
//!
//! One step is one 900 s control interval. The single action is a normalized
//! supply-temperature setpoint in `[-1, 1]`. The reward is the negative
//! electrical energy of the step in kWh, the cost is the underheating of the
//! true (noise-free) room temperature below the reference in K. Observation
//! noise never reaches reward, cost or logged state.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::building::Building;
use crate::disturbance::{DisturbanceSeries, YEAR_STEPS};
use crate::error::{Error, Result};
use crate::plant::simulate_interval;
use crate::thermal::BuildingState;

/// `[t_amb, t_room, t_wall, t_hp_ret, q_other_kw]`.
pub const OBS_DIM: usize = 5;
pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Room set-point, °C.
    pub t_ref: f64,
    /// Standard deviation of the temperature observation noise, K.
    pub noise_sigma: f64,
    /// Training episode length, steps.
    pub episode_len: usize,
    /// Evaluation episode length, steps.
    pub eval_len: usize,
    /// Supply setpoint range mapped from the normalized action, °C.
    pub action_bounds: (f64, f64),
    pub gamma: f64,
    /// Budget on the expected discounted cost.
    pub cost_limit_d: f64,
    pub rng_seed: u64,
    /// Control interval, s.
    pub dt: f64,
    /// Euler substep, s.
    pub substep: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            t_ref: 20.0,
            noise_sigma: 0.0,
            episode_len: 96,
            eval_len: YEAR_STEPS,
            action_bounds: (20.0, 60.0),
            gamma: 0.99,
            cost_limit_d: 10.0,
            rng_seed: 0,
            dt: 900.0,
            substep: 60.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_len == 0 || self.eval_len == 0 {
            return Err(Error::param("episode_len", "must be at least 1"));
        }
        if !(self.action_bounds.0 < self.action_bounds.1) {
            return Err(Error::param("action_bounds", "min must be below max"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise_sigma", "must be non-negative"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::param("gamma", "must lie in (0, 1]"));
        }
        if !(self.dt > 0.0 && self.substep > 0.0) {
            return Err(Error::param("dt/substep", "must be positive"));
        }
        Ok(())
    }

    /// Supply setpoint for a normalized action (clipped to `[-1, 1]`).
    pub fn action_to_supply(&self, action: f64) -> f64 {
        let (lo, hi) = self.action_bounds;
        let a = action.clamp(-1.0, 1.0);
        0.5 * (lo + hi) + a * 0.5 * (hi - lo)
    }

    /// Inverse of [`EnvConfig::action_to_supply`], clipped.
    pub fn supply_to_action(&self, t_sup: f64) -> f64 {
        let (lo, hi) = self.action_bounds;
        ((t_sup - 0.5 * (lo + hi)) / (0.5 * (hi - lo))).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Ground truth attached to a transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Index of the step within the episode, starting at 0.
    pub step: usize,
    /// True state after the step.
    pub state: BuildingState,
    pub t_amb: f64,
    pub q_gain: f64,
    /// Supply setpoint, °C.
    pub t_hp_sup: f64,
    /// Mean electrical power, W.
    pub p_el: f64,
    pub q_th: f64,
    pub cop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Observation after the step (noisy).
    pub obs: Observation,
    /// Normalized action actually applied.
    pub action: f64,
    /// Negative electrical energy, kWh.
    pub reward: f64,
    /// Underheating of the true room temperature, K.
    pub cost: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A single environment instance with its own RNG stream.
#[derive(Debug, Clone)]
pub struct Env {
    building: Arc<Building>,
    series: Arc<DisturbanceSeries>,
    cfg: EnvConfig,
    stream: u64,
    rng: ChaCha8Rng,
    state: BuildingState,
    index: usize,
    step_in_episode: usize,
    episode_len: usize,
    ready: bool,
}

impl Env {
    /// `stream` selects an independent RNG stream for the seed in `cfg`, so
    /// that several envs sharing a seed never share random numbers.
    pub fn new(
        building: Arc<Building>,
        series: Arc<DisturbanceSeries>,
        cfg: EnvConfig,
        stream: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        series.validate()?;
        let rng = Self::make_rng(cfg.rng_seed, stream);
        Ok(Self {
            building,
            series,
            episode_len: cfg.episode_len,
            cfg,
            stream,
            rng,
            state: BuildingState::uniform(20.0),
            index: 0,
            step_in_episode: 0,
            ready: false,
        })
    }

    fn make_rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn building(&self) -> &Building {
        &self.building
    }

    pub fn series(&self) -> &DisturbanceSeries {
        &self.series
    }

    /// True state (for controllers that are allowed to see it and for tests).
    pub fn state(&self) -> BuildingState {
        self.state
    }

    /// Absolute index into the disturbance series of the next step.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn episode_len(&self) -> usize {
        self.episode_len
    }

    pub fn needs_reset(&self) -> bool {
        !self.ready
    }

    /// Start a new episode. A `seed` re-seeds this env's stream first.
    pub fn reset(&mut self, mode: Mode, seed: Option<u64>) -> Observation {
        if let Some(seed) = seed {
            self.rng = Self::make_rng(seed, self.stream);
        }
        match mode {
            Mode::Train => {
                self.index = self.rng.random_range(0..self.series.len());
                let t_room = self.rng.random_range(15.0..25.0);
                let t_ret = self.rng.random_range(20.0..40.0);
                self.state = BuildingState::new(t_room, t_room, t_ret);
                self.episode_len = self.cfg.episode_len;
            }
            Mode::Eval => {
                self.index = 0;
                self.state = BuildingState::new(20.0, 20.0, 25.0);
                self.episode_len = self.cfg.eval_len;
            }
        }
        self.step_in_episode = 0;
        self.ready = true;
        self.observe()
    }

    fn observe(&mut self) -> Observation {
        let d = self.series.sample(self.index);
        let s = self.state;
        let mut obs = [d.t_amb, s.t_room, s.t_wall, s.t_hp_ret, d.q_gain / 1000.0];
        let noise = Normal::new(0.0, self.cfg.noise_sigma).expect("validated sigma");
        for v in obs.iter_mut().take(4) {
            *v += noise.sample(&mut self.rng);
        }
        obs
    }

    pub fn step(&mut self, action: f64) -> Result<Transition> {
        if !self.ready {
            return Err(Error::NeedsReset);
        }
        if !action.is_finite() {
            return Err(Error::NonFiniteAction(action));
        }
        let action = action.clamp(-1.0, 1.0);
        let t_hp_sup = self.cfg.action_to_supply(action);
        let d = self.series.sample(self.index);
        let out = simulate_interval(
            &self.building,
            &self.state,
            &d,
            t_hp_sup,
            self.cfg.dt,
            self.cfg.substep,
        )?;
        self.state = out.state;
        self.index += 1;
        let step = self.step_in_episode;
        self.step_in_episode += 1;
        let done = self.step_in_episode >= self.episode_len;
        if done {
            self.ready = false;
        }
        let reward = -out.p_el * self.cfg.dt / 3600.0 / 1000.0;
        let cost = (self.cfg.t_ref - out.state.t_room).max(0.0);
        let obs = self.observe();
        Ok(Transition {
            obs,
            action,
            reward,
            cost,
            done,
            info: StepInfo {
                step,
                state: out.state,
                t_amb: d.t_amb,
                q_gain: d.q_gain,
                t_hp_sup,
                p_el: out.p_el,
                q_th: out.q_th,
                cop: out.cop,
            },
        })
    }
}

/// Step every env with its action. Runs in parallel; results are identical
/// to stepping the envs one after the other.
pub fn batch_step(envs: &mut [Env], actions: &[f64]) -> Result<Vec<Transition>> {
    if envs.len() != actions.len() {
        return Err(Error::LengthMismatch {
            what: "envs vs actions",
            left: envs.len(),
            right: actions.len(),
        });
    }
    envs.par_iter_mut()
        .zip(actions.par_iter())
        .map(|(env, &a)| env.step(a))
        .collect()
}

/// One row of an episode log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub step: usize,
    pub t_amb: f64,
    pub t_room: f64,
    pub t_wall: f64,
    pub t_hp_ret: f64,
    pub t_hp_sup: f64,
    pub p_el_w: f64,
    pub cop: f64,
    pub reward: f64,
    pub cost: f64,
}

impl From<&Transition> for EpisodeRow {
    fn from(t: &Transition) -> Self {
        Self {
            step: t.info.step,
            t_amb: t.info.t_amb,
            t_room: t.info.state.t_room,
            t_wall: t.info.state.t_wall,
            t_hp_ret: t.info.state.t_hp_ret,
            t_hp_sup: t.info.t_hp_sup,
            p_el_w: t.info.p_el,
            cop: t.info.cop,
            reward: t.reward,
            cost: t.cost,
        }
    }
}

pub const EPISODE_HEADER: [&str; 10] = [
    "step", "t_amb", "t_room", "t_wall", "t_hp_ret", "t_hp_sup", "p_el_w", "cop", "reward", "cost",
];

/// 17 significant digits: enough to round-trip any f64.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn log_episode(transitions: &[Transition], path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<EpisodeRow> = transitions.iter().map(EpisodeRow::from).collect();
    write_episode_rows(&rows, path)
}

pub fn write_episode_rows(rows: &[EpisodeRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(EPISODE_HEADER)?;
    for r in rows {
        let mut rec = vec![r.step.to_string()];
        rec.extend(
            [r.t_amb, r.t_room, r.t_wall, r.t_hp_ret, r.t_hp_sup, r.p_el_w, r.cop, r.reward, r.cost]
                .into_iter()
                .map(fmt_f64),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_episode_log(path: impl AsRef<Path>) -> Result<Vec<EpisodeRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != EPISODE_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("unexpected episode header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::building::shipped;
    use crate::disturbance::synth_weather;

    fn make_env(cfg: EnvConfig, stream: u64) -> Env {
        let b = shipped("building1").unwrap();
        let series = b.disturbances(synth_weather(1, 365).unwrap()).unwrap();
        Env::new(Arc::new(b), Arc::new(series), cfg, stream).unwrap()
    }

    #[test]
    fn eval_reset_uses_fixed_state() {
        let mut env = make_env(
            EnvConfig {
                noise_sigma: 0.5,
                ..Default::default()
            },
            0,
        );
        let obs = env.reset(Mode::Eval, Some(3));
        assert_eq!(env.state().t_room, 20.0);
        assert_eq!(env.index(), 0);
        assert_eq!(env.episode_len(), 35_040);
        assert!((obs[1] - 20.0).abs() <= 4.0 * 0.5);
        assert!((obs[3] - 25.0).abs() <= 4.0 * 0.5);
    }

    #[test]
    fn train_reset_is_seeded() {
        let mut env = make_env(EnvConfig::default(), 0);
        env.reset(Mode::Train, Some(11));
        let (i, s) = (env.index(), env.state());
        env.reset(Mode::Train, None);
        assert!(env.index() != i || env.state() != s);
        env.reset(Mode::Train, Some(11));
        assert_eq!((env.index(), env.state()), (i, s));
        assert!((15.0..25.0).contains(&s.t_room));
        assert!((20.0..40.0).contains(&s.t_hp_ret));
        assert_eq!(s.t_wall, s.t_room);
    }

    #[test]
    fn step_semantics() {
        let mut env = make_env(EnvConfig::default(), 0);
        assert!(matches!(env.step(0.0), Err(Error::NeedsReset)));
        env.reset(Mode::Eval, None);
        assert!(matches!(env.step(f64::NAN), Err(Error::NonFiniteAction(_))));
        // Fully closed setpoint (20 °C) is below the 25 °C return: idle.
        let tr = env.step(-1.0).unwrap();
        assert_eq!(tr.info.t_hp_sup, 20.0);
        assert_eq!(tr.info.p_el, 0.0);
        assert_eq!(tr.reward, 0.0);
        assert_eq!(tr.cost, (20.0 - tr.info.state.t_room).max(0.0));
        let tr = env.step(7.0).unwrap();
        assert_eq!(tr.action, 1.0);
        assert_eq!(tr.info.t_hp_sup, 60.0);
        assert!((tr.reward + tr.info.p_el * 0.25 / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn episode_truncates() {
        let mut env = make_env(
            EnvConfig {
                episode_len: 3,
                ..Default::default()
            },
            0,
        );
        env.reset(Mode::Train, Some(1));
        assert!(!env.step(0.0).unwrap().done);
        assert!(!env.step(0.0).unwrap().done);
        assert!(env.step(0.0).unwrap().done);
        assert!(env.step(0.0).is_err());
    }

    #[test]
    fn action_mapping_round_trips() {
        let cfg = EnvConfig::default();
        assert_eq!(cfg.action_to_supply(-1.0), 20.0);
        assert_eq!(cfg.action_to_supply(0.0), 40.0);
        assert_eq!(cfg.action_to_supply(1.0), 60.0);
        assert_eq!(cfg.action_to_supply(-3.0), 20.0);
        assert!((cfg.supply_to_action(47.0) - 0.35).abs() < 1e-12);
    }

    #[test]
    fn batch_length_mismatch() {
        let mut envs = vec![make_env(EnvConfig::default(), 0)];
        assert!(matches!(
            batch_step(&mut envs, &[0.0, 0.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn log_round_trip_is_lossless() {
        let mut env = make_env(
            EnvConfig {
                noise_sigma: 0.5,
                ..Default::default()
            },
            2,
        );
        env.reset(Mode::Train, Some(5));
        let mut trs = Vec::new();
        for i in 0..96 {
            trs.push(env.step((i as f64 * 0.37).sin()).unwrap());
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ep.csv");
        log_episode(&trs, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 97);
        let rows = read_episode_log(&p).unwrap();
        let expected: Vec<EpisodeRow> = trs.iter().map(EpisodeRow::from).collect();
        assert_eq!(rows, expected);
    }

    #[test]
    fn idle_episode_logs_zero_power() {
        // Setpoints far below any reachable return temperature keep the unit off.
        let mut env = make_env(
            EnvConfig {
                action_bounds: (-20.0, -10.0),
                ..Default::default()
            },
            0,
        );
        env.reset(Mode::Train, Some(9));
        let trs: Vec<_> = (0..96).map(|_| env.step(-1.0).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("idle.csv");
        log_episode(&trs, &p).unwrap();
        assert!(read_episode_log(&p).unwrap().iter().all(|r| r.p_el_w == 0.0));
        assert!(log_episode(&trs, dir.path().join("no/such/dir/x.csv")).is_err());
    }
}
