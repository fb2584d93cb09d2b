//! Soft actor-critic with twin reward critics, optional twin cost critics,
//! and three ways of handling the comfort constraint.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::optim::{Adam, AdamParams, ScalarAdam};
use super::policy::{draw_eps, squash, SquashedSample};
use super::replay::Batch;
use crate::barrier::{beta_loss, psi_star, softplus, softplus_inv, BarrierParams};
use crate::env::OBS_DIM;
use crate::error::{Error, Result};

/// How the constraint enters training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Algorithm {
    /// Plain SAC on `r - penalty·1[cost > 0]`.
    SacPenalty { penalty: f64 },
    /// Learned Lagrange multiplier on the cost critic.
    SacLag,
    /// Shifted smoothed log barrier on the cost critic.
    CsacLb {
        #[serde(default = "default_mu")]
        mu: f64,
    },
}

fn default_mu() -> f64 {
    BarrierParams::default().mu
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Algorithm::SacPenalty { penalty } => format!("sac_penalty_{penalty}"),
            Algorithm::SacLag => "sac_lag".into(),
            Algorithm::CsacLb { .. } => "csac_lb".into(),
        }
    }

    pub fn uses_cost_critics(&self) -> bool {
        !matches!(self, Algorithm::SacPenalty { .. })
    }

    /// Reward seen by the learner.
    pub fn shape_reward(&self, reward: f64, cost: f64) -> f64 {
        match self {
            Algorithm::SacPenalty { penalty } if cost > 0.0 => reward - penalty,
            _ => reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    /// Hidden layer widths shared by actor and critics.
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub gamma: f64,
    pub lr: f64,
    pub tau: f64,
    /// Uniform-random env steps before the first update.
    pub warmup_steps: usize,
    /// Env steps per gradient update.
    pub update_every: usize,
    pub buffer_capacity: usize,
    pub init_alpha: f64,
    pub target_entropy: f64,
    pub init_beta: f64,
    /// Budget `d` on the discounted cost.
    pub cost_limit_d: f64,
    /// Evaluate after every this many episodes (and after the last).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::CsacLb { mu: default_mu() },
            hidden: vec![256, 256],
            batch_size: 256,
            gamma: 0.99,
            lr: 1e-3,
            tau: 0.005,
            warmup_steps: 100,
            update_every: 1,
            buffer_capacity: 3_000_000,
            init_alpha: 1.0,
            target_entropy: -1.0,
            init_beta: 1.0,
            cost_limit_d: 10.0,
            eval_every: 10,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param("hidden", "need at least one positive width"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", "must lie in [0, 1]"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::param("lr", "must be positive"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::param("tau", "must lie in (0, 1]"));
        }
        if self.update_every == 0 || self.eval_every == 0 || self.buffer_capacity == 0 {
            return Err(Error::param("update_every/eval_every/buffer_capacity", "must be at least 1"));
        }
        if !(self.init_alpha > 0.0) || !(self.init_beta > 0.0) {
            return Err(Error::param("init_alpha/init_beta", "must be positive"));
        }
        match self.algorithm {
            Algorithm::SacPenalty { penalty } if !(penalty >= 0.0) => {
                return Err(Error::param("algorithm.penalty", "must be non-negative"))
            }
            Algorithm::CsacLb { mu } => BarrierParams { mu, d: self.cost_limit_d }.validate_shifted()?,
            _ => {}
        }
        Ok(())
    }

    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(&self.hidden);
        s.push(output);
        s
    }
}

/// Reward-critic target `r + γ·(min(q1, q2) - α·logp')`.
pub fn reward_target(r: f64, q1: f64, q2: f64, logp_next: f64, alpha: f64, gamma: f64) -> f64 {
    r + gamma * (q1.min(q2) - alpha * logp_next)
}

/// Cost-critic target `c + γ·max(q1, q2)`, without an entropy term.
pub fn cost_target(c: f64, q1: f64, q2: f64, gamma: f64) -> f64 {
    c + gamma * q1.max(q2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLosses {
    pub reward: [f64; 2],
    pub cost: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorStats {
    pub loss: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mean_logp: f64,
    pub mean_qc: f64,
    /// Fraction of samples where the constraint term has a nonzero gradient.
    pub active_frac: f64,
}

/// Actor loss and gradient at fixed reparameterization noise.
#[derive(Debug, Clone)]
pub struct ActorEval {
    pub loss: f64,
    pub grads: Mlp,
    pub samples: Vec<SquashedSample>,
    pub qc: Option<Vec<f64>>,
    pub active_frac: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: TrainerConfig,
    pub actor: Mlp,
    pub qr: [Mlp; 2],
    pub qr_target: [Mlp; 2],
    pub qc: Option<([Mlp; 2], [Mlp; 2])>,
    actor_opt: Adam,
    qr_opt: [Adam; 2],
    qc_opt: Option<[Adam; 2]>,
    pub log_alpha: f64,
    alpha_opt: ScalarAdam,
    pub beta_raw: f64,
    beta_opt: ScalarAdam,
}

fn critic_input(obs: ArrayView2<f64>, action: impl Iterator<Item = f64>) -> Array2<f64> {
    let n = obs.nrows();
    let mut x = Array2::zeros((n, OBS_DIM + 1));
    x.slice_mut(s![.., ..OBS_DIM]).assign(&obs);
    for (dst, a) in x.column_mut(OBS_DIM).iter_mut().zip(action) {
        *dst = a;
    }
    x
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            step: 0,
            reason: format!("{what} is {v}"),
        })
    }
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(cfg: TrainerConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let actor = Mlp::new(&cfg.sizes(OBS_DIM, 2), rng)?;
        let critic_sizes = cfg.sizes(OBS_DIM + 1, 1);
        let qr = [Mlp::new(&critic_sizes, rng)?, Mlp::new(&critic_sizes, rng)?];
        let qc = if cfg.algorithm.uses_cost_critics() {
            let online = [Mlp::new(&critic_sizes, rng)?, Mlp::new(&critic_sizes, rng)?];
            Some((online.clone(), online))
        } else {
            None
        };
        let hp = AdamParams::with_lr(cfg.lr);
        Ok(Self {
            actor_opt: Adam::new(hp, &actor),
            qr_opt: [Adam::new(hp, &qr[0]), Adam::new(hp, &qr[1])],
            qc_opt: qc.as_ref().map(|(o, _)| [Adam::new(hp, &o[0]), Adam::new(hp, &o[1])]),
            qr_target: qr.clone(),
            qr,
            qc,
            actor,
            log_alpha: cfg.init_alpha.ln(),
            alpha_opt: ScalarAdam::new(hp),
            beta_raw: softplus_inv(cfg.init_beta),
            beta_opt: ScalarAdam::new(hp),
            cfg,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn beta(&self) -> f64 {
        softplus(self.beta_raw)
    }

    /// Critic targets for a batch, given the next-action noise.
    pub fn targets(&self, batch: &Batch, eps_next: &[f64]) -> (Array1<f64>, Option<Array1<f64>>) {
        let gamma = self.cfg.gamma;
        let alpha = self.alpha();
        let out = self.actor.predict(batch.next_obs.view());
        let next: Vec<SquashedSample> = out
            .rows()
            .into_iter()
            .zip(eps_next)
            .map(|(r, &e)| squash(r[0], r[1], e))
            .collect();
        let x_next = critic_input(batch.next_obs.view(), next.iter().map(|s| s.action));
        let q1 = self.qr_target[0].predict(x_next.view());
        let q2 = self.qr_target[1].predict(x_next.view());
        let yr = Array1::from_shape_fn(batch.len(), |i| {
            reward_target(batch.reward[i], q1[[i, 0]], q2[[i, 0]], next[i].logp, alpha, gamma)
        });
        let yc = self.qc.as_ref().map(|(_, target)| {
            let c1 = target[0].predict(x_next.view());
            let c2 = target[1].predict(x_next.view());
            Array1::from_shape_fn(batch.len(), |i| cost_target(batch.cost[i], c1[[i, 0]], c2[[i, 0]], gamma))
        });
        (yr, yc)
    }

    /// One regression step for every critic, then Polyak averaging of the
    /// targets.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<CriticLosses> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let eps = draw_eps(batch.len(), rng);
        let (yr, yc) = self.targets(batch, &eps);
        let x = critic_input(batch.obs.view(), batch.action.iter().copied());
        let mut reward = [0.0; 2];
        for ((r, net), opt) in reward.iter_mut().zip(&mut self.qr).zip(&mut self.qr_opt) {
            *r = regress(net, opt, &x, &yr);
            check_finite("reward critic loss", *r)?;
        }
        let mut cost = None;
        if let (Some((online, _)), Some(opts), Some(yc)) = (self.qc.as_mut(), self.qc_opt.as_mut(), yc.as_ref()) {
            let mut l = [0.0; 2];
            for k in 0..2 {
                l[k] = regress(&mut online[k], &mut opts[k], &x, yc);
                check_finite("cost critic loss", l[k])?;
            }
            cost = Some(l);
        }
        self.polyak();
        Ok(CriticLosses { reward, cost })
    }

    pub fn polyak(&mut self) {
        let tau = self.cfg.tau;
        for k in 0..2 {
            self.qr_target[k].polyak_from(&self.qr[k], tau);
        }
        if let Some((online, target)) = self.qc.as_mut() {
            for k in 0..2 {
                target[k].polyak_from(&online[k], tau);
            }
        }
    }

    /// Actor loss and its gradient with respect to the actor parameters for
    /// fixed noise `eps`. Critics, α and β are held constant.
    pub fn actor_loss_grad(&self, obs: ArrayView2<f64>, eps: &[f64]) -> ActorEval {
        let n = obs.nrows();
        let inv_n = 1.0 / n as f64;
        let alpha = self.alpha();
        let (out, cache) = self.actor.forward(obs);
        let samples: Vec<SquashedSample> = out
            .rows()
            .into_iter()
            .zip(eps)
            .map(|(r, &e)| squash(r[0], r[1], e))
            .collect();
        let x = critic_input(obs, samples.iter().map(|s| s.action));

        // Reward part: -min(q1, q2), gradient through the smaller critic.
        let (q1, c1) = self.qr[0].forward(x.view());
        let (q2, c2) = self.qr[1].forward(x.view());
        let pick_first: Vec<bool> = (0..n).map(|i| q1[[i, 0]] <= q2[[i, 0]]).collect();
        let qr: Vec<f64> = (0..n).map(|i| q1[[i, 0]].min(q2[[i, 0]])).collect();
        let mut dl_da = vec![0.0; n];
        accumulate_action_grad(&self.qr[0], &c1, &pick_first, true, &vec![-inv_n; n], &mut dl_da);
        accumulate_action_grad(&self.qr[1], &c2, &pick_first, false, &vec![-inv_n; n], &mut dl_da);

        let mut loss_terms: Vec<f64> = (0..n).map(|i| alpha * samples[i].logp - qr[i]).collect();
        let mut qc_out = None;
        let mut active = 0usize;
        if let Some((online, _)) = self.qc.as_ref() {
            let (k1, kc1) = online[0].forward(x.view());
            let (k2, kc2) = online[1].forward(x.view());
            let first_max: Vec<bool> = (0..n).map(|i| k1[[i, 0]] >= k2[[i, 0]]).collect();
            let qc: Vec<f64> = (0..n).map(|i| k1[[i, 0]].max(k2[[i, 0]])).collect();
            let d = self.cfg.cost_limit_d;
            let weights: Option<Vec<f64>> = match self.cfg.algorithm {
                Algorithm::SacPenalty { .. } => None,
                Algorithm::SacLag => {
                    let beta = self.beta();
                    for (t, q) in loss_terms.iter_mut().zip(&qc) {
                        *t += beta * q;
                    }
                    Some(vec![beta; n])
                }
                Algorithm::CsacLb { mu } => {
                    let mut w = Vec::with_capacity(n);
                    for (t, &q) in loss_terms.iter_mut().zip(&qc) {
                        let vg = psi_star(q, mu, d);
                        *t += vg.value;
                        w.push(vg.grad);
                    }
                    Some(w)
                }
            };
            if let Some(w) = weights {
                active = w.iter().filter(|&&v| v != 0.0).count();
                // Skip the backward pass entirely when the constraint term is
                // flat on this batch, so the update matches plain SAC exactly.
                if active > 0 {
                    let scaled: Vec<f64> = w.iter().map(|v| v * inv_n).collect();
                    accumulate_action_grad(&online[0], &kc1, &first_max, true, &scaled, &mut dl_da);
                    accumulate_action_grad(&online[1], &kc2, &first_max, false, &scaled, &mut dl_da);
                }
            }
            qc_out = Some(qc);
        }

        let mut g_out = Array2::zeros((n, 2));
        for (i, s) in samples.iter().enumerate() {
            g_out[[i, 0]] = alpha * s.dlogp_dmean * inv_n + dl_da[i] * s.da_dmean;
            g_out[[i, 1]] = alpha * s.dlogp_dlogstd * inv_n + dl_da[i] * s.da_dlogstd;
        }
        let (grads, _) = self.actor.backward(&cache, &g_out, true);
        ActorEval {
            loss: loss_terms.iter().sum::<f64>() * inv_n,
            grads: grads.expect("requested"),
            samples,
            qc: qc_out,
            active_frac: active as f64 * inv_n,
        }
    }

    /// Policy step, then the temperature step and (for the Lagrangian
    /// variant) the multiplier step.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<ActorStats> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let eps = draw_eps(batch.len(), rng);
        let eval = self.actor_loss_grad(batch.obs.view(), &eps);
        check_finite("actor loss", eval.loss)?;
        self.actor_opt.step(&mut self.actor, &eval.grads);
        let n = batch.len() as f64;
        let mean_logp = eval.samples.iter().map(|s| s.logp).sum::<f64>() / n;
        let alpha = self.alpha();
        let grad_log_alpha = -(mean_logp + self.cfg.target_entropy);
        self.alpha_opt.step(&mut self.log_alpha, grad_log_alpha);
        let mut mean_qc = 0.0;
        if let Some(qc) = eval.qc.as_ref() {
            mean_qc = qc.iter().sum::<f64>() / n;
            if self.cfg.algorithm == Algorithm::SacLag {
                self.beta_step(qc)?;
            }
        }
        Ok(ActorStats {
            loss: eval.loss,
            alpha,
            beta: self.beta(),
            mean_logp,
            mean_qc,
            active_frac: eval.active_frac,
        })
    }

    /// One descent step on the multiplier loss `mean β·(d - qc)`.
    pub fn beta_step(&mut self, qc: &[f64]) -> Result<f64> {
        let bl = beta_loss(self.beta_raw, self.cfg.cost_limit_d, qc)?;
        self.beta_opt.step(&mut self.beta_raw, bl.grad_raw);
        Ok(self.beta())
    }

    /// Mean action for a single normalized observation.
    pub fn act_deterministic(&self, obs: &[f64; OBS_DIM]) -> f64 {
        let x = ArrayView2::from_shape((1, OBS_DIM), obs).expect("one row");
        self.actor.predict(x)[[0, 0]].tanh()
    }

    pub fn act_stochastic<R: Rng + ?Sized>(&self, obs: &[f64; OBS_DIM], rng: &mut R) -> f64 {
        let x = ArrayView2::from_shape((1, OBS_DIM), obs).expect("one row");
        let out = self.actor.predict(x);
        let eps = draw_eps(1, rng)[0];
        squash(out[[0, 0]], out[[0, 1]], eps).action
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = self.actor.is_finite() && self.qr.iter().chain(&self.qr_target).all(Mlp::is_finite);
        if let Some((o, t)) = &self.qc {
            ok &= o.iter().chain(t).all(Mlp::is_finite);
        }
        ok && self.log_alpha.is_finite() && self.beta_raw.is_finite()
    }
}

/// Mean-squared regression step of `net` toward `y`; returns the loss.
fn regress(net: &mut Mlp, opt: &mut Adam, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let n = y.len() as f64;
    let (q, cache) = net.forward(x.view());
    let resid = &q.index_axis(Axis(1), 0) - y;
    let loss = resid.mapv(|r| r * r).sum() / n;
    let g = resid.mapv(|r| 2.0 * r / n).insert_axis(Axis(1));
    let (grads, _) = net.backward(&cache, &g, true);
    opt.step(net, &grads.expect("requested"));
    loss
}

/// Add `w_i · ∂q/∂a` for the samples routed to this critic.
fn accumulate_action_grad(
    net: &Mlp,
    cache: &super::mlp::MlpCache,
    route: &[bool],
    this_is_first: bool,
    w: &[f64],
    dl_da: &mut [f64],
) {
    let n = route.len();
    let g = Array2::from_shape_fn((n, 1), |(i, _)| if route[i] == this_is_first { w[i] } else { 0.0 });
    if g.iter().all(|&v| v == 0.0) {
        return;
    }
    let (_, gx) = net.backward(cache, &g, false);
    for i in 0..n {
        if route[i] == this_is_first {
            dl_da[i] += gx[[i, OBS_DIM]];
        }
    }
}
