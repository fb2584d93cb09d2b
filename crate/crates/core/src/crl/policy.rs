//! Tanh-squashed Gaussian policy head.
//!
//! The actor network outputs `(mean, raw log-std)` per sample. The raw
//! log-std is clamped to `[LOG_STD_MIN, LOG_STD_MAX]`; the action is
//! `tanh(mean + std·ε)` with `ε ~ N(0, 1)`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::Mlp;
use crate::barrier::softplus;
use crate::env::{Observation, OBS_DIM};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Fixed affine observation scaling: temperatures `(x - 20)/20`, gains (kW)
/// divided by 5.
pub fn normalize_obs(obs: &Observation) -> [f64; OBS_DIM] {
    [
        (obs[0] - 20.0) / 20.0,
        (obs[1] - 20.0) / 20.0,
        (obs[2] - 20.0) / 20.0,
        (obs[3] - 20.0) / 20.0,
        obs[4] / 5.0,
    ]
}

pub fn obs_batch<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> Array2<f64> {
    let rows: Vec<f64> = obs.into_iter().flat_map(normalize_obs).collect();
    let n = rows.len() / OBS_DIM;
    Array2::from_shape_vec((n, OBS_DIM), rows).expect("rows are OBS_DIM wide")
}

/// `ln(1 - tanh(x)²)` without cancellation for large `|x|`.
pub fn log_one_minus_tanh_sq(x: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - x - softplus(-2.0 * x))
}

/// One reparameterized draw together with the partial derivatives needed by
/// the actor update. Derivatives are with respect to the network outputs
/// (mean and raw log-std) at fixed `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquashedSample {
    pub action: f64,
    pub logp: f64,
    pub pre_tanh: f64,
    pub eps: f64,
    pub dlogp_dmean: f64,
    pub dlogp_dlogstd: f64,
    pub da_dmean: f64,
    pub da_dlogstd: f64,
}

pub fn squash(mean: f64, log_std_raw: f64, eps: f64) -> SquashedSample {
    let log_std = log_std_raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
    let clamp_pass = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&log_std_raw) { 1.0 } else { 0.0 };
    let std = log_std.exp();
    let pre = mean + std * eps;
    let action = pre.tanh();
    let logp = -0.5 * eps * eps - HALF_LN_2PI - log_std - log_one_minus_tanh_sq(pre);
    // d/dpre of -ln(1 - tanh²) is 2·tanh(pre).
    let dlogp_dpre = 2.0 * action;
    let da_dpre = 1.0 - action * action;
    SquashedSample {
        action,
        logp,
        pre_tanh: pre,
        eps,
        dlogp_dmean: dlogp_dpre,
        dlogp_dlogstd: clamp_pass * (-1.0 + dlogp_dpre * std * eps),
        da_dmean: da_dpre,
        da_dlogstd: clamp_pass * da_dpre * std * eps,
    }
}

/// Draw `n` standard-normal noises.
pub fn draw_eps<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Stochastic actions for a batch of normalized observations.
pub fn policy_sample<R: Rng + ?Sized>(actor: &Mlp, obs: ArrayView2<f64>, rng: &mut R) -> Vec<SquashedSample> {
    let out = actor.predict(obs);
    let eps = draw_eps(out.nrows(), rng);
    out.rows()
        .into_iter()
        .zip(eps)
        .map(|(r, e)| squash(r[0], r[1], e))
        .collect()
}

/// Mean actions `tanh(mean)`.
pub fn policy_deterministic(actor: &Mlp, obs: ArrayView2<f64>) -> Vec<f64> {
    actor.predict(obs).column(0).iter().map(|m| m.tanh()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logp_matches_change_of_variables() {
        let (m, l, e) = (0.3, -0.4, 0.8);
        let s = squash(m, l, e);
        let std = l.exp();
        let pre: f64 = m + std * e;
        let gauss = -0.5 * ((pre - m) / std).powi(2) - (std * (2.0 * std::f64::consts::PI).sqrt()).ln();
        let expect = gauss - (1.0 - pre.tanh().powi(2)).ln();
        assert!((s.logp - expect).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for &(m, l, e) in &[(0.3, -0.4, 0.8), (-1.2, 0.5, -0.3), (2.0, -2.0, 1.5)] {
            let s = squash(m, l, e);
            let fd = |f: &dyn Fn(f64, f64) -> f64, dm: f64, dl: f64| {
                (f(m + dm * h, l + dl * h) - f(m - dm * h, l - dl * h)) / (2.0 * h)
            };
            let logp = |m, l| squash(m, l, e).logp;
            let act = |m, l| squash(m, l, e).action;
            assert!((fd(&logp, 1.0, 0.0) - s.dlogp_dmean).abs() < 1e-7);
            assert!((fd(&logp, 0.0, 1.0) - s.dlogp_dlogstd).abs() < 1e-7);
            assert!((fd(&act, 1.0, 0.0) - s.da_dmean).abs() < 1e-7);
            assert!((fd(&act, 0.0, 1.0) - s.da_dlogstd).abs() < 1e-7);
        }
        let clamped = squash(0.1, 5.0, 0.4);
        assert_eq!((clamped.dlogp_dlogstd, clamped.da_dlogstd), (0.0, 0.0));
    }

    #[test]
    fn saturated_action_has_finite_logp() {
        let s = squash(40.0, 2.0, 3.0);
        assert_eq!(s.action, 1.0);
        assert!(s.logp.is_finite());
        assert!(squash(-40.0, -25.0, -3.0).logp.is_finite());
    }

    #[test]
    fn zero_network_is_symmetric() {
        let actor = Mlp::zeros(&[OBS_DIM, 4, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs = Array2::zeros((10_000, OBS_DIM));
        let draws = policy_sample(&actor, obs.view(), &mut rng);
        let mean = draws.iter().map(|s| s.action).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.05, "{mean}");
        let det = policy_deterministic(&actor, obs.view());
        assert!(det.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_obs(&[20.0, 40.0, 0.0, 30.0, 2.5]), [0.0, 1.0, -1.0, 0.5, 0.5]);
        let b = obs_batch([&[20.0; 5], &[0.0; 5]]);
        assert_eq!(b.dim(), (2, OBS_DIM));
    }
}
