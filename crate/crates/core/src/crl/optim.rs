//! Adam optimizer for networks and for single scalar parameters.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn corrections(&self, t: i32) -> (f64, f64) {
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub hp: AdamParams,
    t: i32,
    m: Mlp,
    v: Mlp,
}

impl Adam {
    pub fn new(hp: AdamParams, like: &Mlp) -> Self {
        Self {
            hp,
            t: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp) {
        self.t += 1;
        let hp = self.hp;
        let (c1, c2) = hp.corrections(self.t);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            *p -= hp.lr * (*m / c1) / ((*v / c2).sqrt() + hp.eps);
        };
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            Zip::from(&mut p.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(update);
            Zip::from(&mut p.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(update);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub hp: AdamParams,
    t: i32,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(hp: AdamParams) -> Self {
        Self { hp, t: 0, m: 0.0, v: 0.0 }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        self.t += 1;
        let hp = self.hp;
        let (c1, c2) = hp.corrections(self.t);
        self.m = hp.beta1 * self.m + (1.0 - hp.beta1) * grad;
        self.v = hp.beta2 * self.v + (1.0 - hp.beta2) * grad * grad;
        *param -= hp.lr * (self.m / c1) / ((self.v / c2).sqrt() + hp.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut opt = ScalarAdam::new(AdamParams::with_lr(1e-3));
        let mut x = 0.5;
        opt.step(&mut x, 3.0);
        assert!((x - (0.5 - 1e-3)).abs() < 1e-10);
        let mut y = 0.5;
        ScalarAdam::new(AdamParams::with_lr(1e-3)).step(&mut y, -0.01);
        assert!(y > 0.5);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut opt = ScalarAdam::new(AdamParams::with_lr(0.05));
        let mut x = 3.0;
        for _ in 0..2000 {
            let g = 2.0 * (x - 1.0);
            opt.step(&mut x, g);
        }
        assert!((x - 1.0).abs() < 1e-3);
    }

    #[test]
    fn network_step_matches_scalar_rule() {
        let mut p = Mlp::zeros(&[1, 1]).unwrap();
        let mut g = p.zeros_like();
        g.layers[0].w[[0, 0]] = 2.0;
        g.layers[0].b[0] = -1.0;
        let mut opt = Adam::new(AdamParams::with_lr(0.1), &p);
        let mut w = 0.0;
        let mut b = 0.0;
        let mut sw = ScalarAdam::new(AdamParams::with_lr(0.1));
        let mut sb = ScalarAdam::new(AdamParams::with_lr(0.1));
        for _ in 0..3 {
            opt.step(&mut p, &g);
            sw.step(&mut w, 2.0);
            sb.step(&mut b, -1.0);
        }
        assert_eq!(p.layers[0].w[[0, 0]], w);
        assert_eq!(p.layers[0].b[0], b);
        assert_eq!(opt.steps(), 3);
    }
}
