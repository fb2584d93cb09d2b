//! Training loop and deterministic evaluation.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{ActorStats, Agent, Algorithm, TrainerConfig};
use super::checkpoint::{save_checkpoint, RngState};
use super::mlp::Mlp;
use super::policy::normalize_obs;
use super::replay::{Record, ReplayBuffer};
use crate::env::{log_episode, Env, Mode, Transition, OBS_DIM};
use crate::error::{Error, Result};
use crate::kpi::{kpis_from_transitions, KpiReport};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "agent.bin";
pub const LAST_GOOD_FILE: &str = "last_good.bin";
pub const EVAL_LOG_FILE: &str = "eval_episode.csv";

/// One row per evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub env_steps: usize,
    pub eval_energy_kwh: f64,
    pub eval_avg_dev_k: f64,
    pub eval_max_dev_k: f64,
    pub eval_max_underheat_k: f64,
    pub eval_violation_steps: usize,
    /// Mean multiplier over the updates since the previous row.
    pub mean_beta: f64,
    /// Mean fraction of batch samples with an active barrier gradient.
    pub barrier_active_rate: f64,
    pub alpha: f64,
    /// Mean undiscounted return and cost of the training episodes since the
    /// previous row (unshaped reward).
    pub train_return: f64,
    pub train_cost: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: KpiReport,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub metrics: Vec<MetricsRow>,
    pub last_eval: Evaluation,
    pub env_steps: usize,
    pub updates: usize,
}

/// Run the deterministic policy over one evaluation episode of `env`.
pub fn evaluate(actor: &Mlp, env: &mut Env) -> Result<Evaluation> {
    let mut obs = env.reset(Mode::Eval, None);
    let mut transitions = Vec::with_capacity(env.episode_len());
    loop {
        let x = normalize_obs(&obs);
        let view = ndarray::ArrayView2::from_shape((1, OBS_DIM), &x).expect("one row");
        let action = actor.predict(view)[[0, 0]].tanh();
        let tr = env.step(action)?;
        obs = tr.obs;
        let done = tr.done;
        transitions.push(tr);
        if done {
            break;
        }
    }
    let cfg = env.config();
    let report = kpis_from_transitions(&transitions, cfg.t_ref, cfg.dt)?;
    Ok(Evaluation { report, transitions })
}

#[derive(Default)]
struct Window {
    beta: f64,
    active: f64,
    updates: usize,
    ret: f64,
    cost: f64,
    episodes: usize,
}

impl Window {
    fn add(&mut self, s: &ActorStats) {
        self.beta += s.beta;
        self.active += s.active_frac;
        self.updates += 1;
    }

    fn mean(sum: f64, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

fn rng_state(cfg: &TrainerConfig, rng: &ChaCha8Rng) -> RngState {
    RngState {
        seed: cfg.seed,
        stream: rng.get_stream(),
        word_pos: rng.get_word_pos(),
    }
}

pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Train for `episodes` episodes on `env`. Evaluations run on a clone of
/// `env` in evaluation mode. With `out_dir`, metrics, the final evaluation
/// log and a checkpoint are written there; on divergence the networks from
/// the last successful evaluation are saved as `last_good.bin`.
pub fn train(cfg: &TrainerConfig, env: &mut Env, episodes: usize, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(Error::param("episodes", "must be at least 1"));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Agent::new(cfg.clone(), &mut rng)?;
    let mut replay = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut eval_env = env.clone();
    let mut metrics = Vec::new();
    let mut last_good = (agent.clone(), 0usize);
    let mut last_eval = None;
    let mut window = Window::default();
    let mut env_steps = 0usize;
    let mut updates = 0usize;

    let diverged = |reason: String, step: usize, good: &(Agent, usize), rng: &ChaCha8Rng| -> Error {
        if let Some(dir) = out_dir {
            // Best effort: the divergence itself is the error to report.
            let _ = save_checkpoint(&dir.join(LAST_GOOD_FILE), &good.0, good.1, step, rng_state(cfg, rng));
            let dump = serde_json::json!({
                "step": step,
                "reason": reason,
                "last_good_episode": good.1,
                "algorithm": cfg.algorithm.label(),
            });
            let _ = fs::write(dir.join("divergence.json"), dump.to_string());
        }
        Error::Divergence { step, reason }
    };

    for episode in 1..=episodes {
        let mut obs = env.reset(Mode::Train, None);
        loop {
            let action = if env_steps < cfg.warmup_steps {
                rng.random_range(-1.0..=1.0)
            } else {
                agent.act_stochastic(&normalize_obs(&obs), &mut rng)
            };
            let tr = match env.step(action) {
                Ok(tr) => tr,
                Err(e @ (Error::NonFiniteAction(_) | Error::SimulationBlowup { .. })) => {
                    return Err(diverged(e.to_string(), env_steps, &last_good, &rng))
                }
                Err(e) => return Err(e),
            };
            replay.push(Record {
                obs,
                action: tr.action,
                reward: cfg.algorithm.shape_reward(tr.reward, tr.cost),
                cost: tr.cost,
                next_obs: tr.obs,
            });
            window.ret += tr.reward;
            window.cost += tr.cost;
            obs = tr.obs;
            env_steps += 1;
            if env_steps >= cfg.warmup_steps && env_steps.is_multiple_of(cfg.update_every) {
                let batch = replay.sample(cfg.batch_size, &mut rng)?;
                let stats = agent
                    .critic_update(&batch, &mut rng)
                    .and_then(|_| agent.actor_update(&batch, &mut rng));
                match stats {
                    Ok(s) => window.add(&s),
                    Err(Error::Divergence { reason, .. }) => {
                        return Err(diverged(reason, env_steps, &last_good, &rng));
                    }
                    Err(e) => return Err(e),
                }
                updates += 1;
            }
            if tr.done {
                break;
            }
        }
        window.episodes += 1;

        if episode % cfg.eval_every == 0 || episode == episodes {
            let ev = evaluate(&agent.actor, &mut eval_env)?;
            let r = ev.report;
            metrics.push(MetricsRow {
                episode,
                env_steps,
                eval_energy_kwh: r.energy_kwh,
                eval_avg_dev_k: r.avg_dev_k,
                eval_max_dev_k: r.max_dev_k,
                eval_max_underheat_k: r.max_underheat_k,
                eval_violation_steps: r.violation_steps,
                mean_beta: if cfg.algorithm == Algorithm::SacLag {
                    Window::mean(window.beta, window.updates)
                } else {
                    0.0
                },
                barrier_active_rate: Window::mean(window.active, window.updates),
                alpha: agent.alpha(),
                train_return: Window::mean(window.ret, window.episodes),
                train_cost: Window::mean(window.cost, window.episodes),
            });
            window = Window::default();
            last_good = (agent.clone(), episode);
            if let Some(dir) = out_dir {
                write_metrics(&metrics, &dir.join(METRICS_FILE))?;
            }
            last_eval = Some(ev);
        }
    }

    let last_eval = last_eval.expect("the final episode always evaluates");
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join(CHECKPOINT_FILE), &agent, episodes, env_steps, rng_state(cfg, &rng))?;
        log_episode(&last_eval.transitions, dir.join(EVAL_LOG_FILE))?;
    }
    Ok(TrainOutcome {
        agent,
        metrics,
        last_eval,
        env_steps,
        updates,
    })
}
