//! Feed-forward network with ReLU hidden layers, a linear output layer and
//! hand-written reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

/// One affine layer `y = x·W + b`, with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// A network. The same type doubles as the gradient buffer, so parameters
/// and gradients always share shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept by [`Mlp::forward`] for the backward pass: the input of
/// every layer.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Layers sized `sizes[0] → sizes[1] → … → sizes[n]`, initialized
    /// uniformly in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|s| {
                let bound = 1.0 / (s[0] as f64).sqrt();
                Dense {
                    w: Array2::from_shape_simple_fn((s[0], s[1]), || rng.random_range(-bound..bound)),
                    b: Array1::from_shape_simple_fn(s[1], || rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Self {
            layers: sizes
                .windows(2)
                .map(|s| Dense {
                    w: Array2::zeros((s[0], s[1])),
                    b: Array1::zeros(s[1]),
                })
                .collect(),
        })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::param("layer sizes", format!("need at least two positive sizes, got {sizes:?}")));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").w.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Forward pass on a batch (`rows = samples`).
    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.w);
            z += &l.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        (h, MlpCache { inputs })
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h: Array2<f64> = x.dot(&self.layers[0].w) + &self.layers[0].b;
        for l in &self.layers[1..] {
            h.mapv_inplace(|v| v.max(0.0));
            h = h.dot(&l.w);
            h += &l.b;
        }
        h
    }

    /// Reverse pass for the output gradient `grad_out`. Returns parameter
    /// gradients (skipped when `param_grads` is false) and the gradient with
    /// respect to the input batch.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>, param_grads: bool) -> (Option<Mlp>, Array2<f64>) {
        let mut grads = param_grads.then(|| self.zeros_like());
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            if let Some(grads) = grads.as_mut() {
                grads.layers[i].w = input.t().dot(&g);
                grads.layers[i].b = g.sum_axis(Axis(0));
            }
            let mut g_in = g.dot(&self.layers[i].w.t());
            if i > 0 {
                // ReLU mask: the layer input is the previous activation.
                Zip::from(&mut g_in).and(input).for_each(|gv, &a| {
                    if a <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            g = g_in;
        }
        (grads, g)
    }

    /// `self ← self + scale·other`.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            l.w.scaled_add(scale, &o.w);
            l.b.scaled_add(scale, &o.b);
        }
    }

    /// Polyak averaging `self ← (1-τ)·self + τ·online`.
    pub fn polyak_from(&mut self, online: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.w).and(&o.w).for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
            Zip::from(&mut t.b).and(&o.b).for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
        }
    }

    /// All parameters, layer by layer, weights row-major then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.w.iter().copied());
            out.extend(l.b.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                what: "flat parameters vs network",
                left: flat.len(),
                right: self.num_params(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            l.b.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }

    pub fn distance(&self, other: &Mlp) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_bias() {
        let mut m = Mlp::zeros(&[3, 4, 2]).unwrap();
        m.layers[1].b = array![0.7, -1.5];
        let y = m.predict(array![[0.0, 0.0, 0.0]].view());
        assert_eq!(y, array![[0.7, -1.5]]);
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::zeros(&[3, 0, 1]).is_err());
    }

    #[test]
    fn forward_and_predict_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mlp::new(&[4, 8, 8, 2], &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let (y, _) = m.forward(x.view());
        assert_eq!(y, m.predict(x.view()));
        assert_eq!(m.sizes(), vec![4, 8, 8, 2]);
        assert_eq!(m.num_params(), 4 * 8 + 8 + 8 * 8 + 8 + 8 * 2 + 2);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Mlp::new(&[3, 5, 4, 2], &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        let loss = |net: &Mlp, x: &Array2<f64>| (net.predict(x.view()) * &w).sum();
        let (_, cache) = m.forward(x.view());
        let (grads, gx) = m.backward(&cache, &w, true);
        let grads = grads.unwrap().to_flat();
        let base = m.to_flat();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let mut up = m.clone();
            up.set_flat(&p).unwrap();
            p[i] -= 2.0 * h;
            let mut dn = m.clone();
            dn.set_flat(&p).unwrap();
            let fd = (loss(&up, &x) - loss(&dn, &x)) / (2.0 * h);
            assert!((fd - grads[i]).abs() < 1e-6, "param {i}: {fd} vs {}", grads[i]);
        }
        for r in 0..4 {
            for c in 0..3 {
                let mut up = x.clone();
                up[[r, c]] += h;
                let mut dn = x.clone();
                dn[[r, c]] -= h;
                let fd = (loss(&m, &up) - loss(&m, &dn)) / (2.0 * h);
                assert!((fd - gx[[r, c]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn polyak_shrinks_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let online = Mlp::new(&[2, 3, 1], &mut rng).unwrap();
        let mut target = Mlp::new(&[2, 3, 1], &mut rng).unwrap();
        let d0 = target.distance(&online);
        let tau = 0.005;
        for _ in 0..50 {
            target.polyak_from(&online, tau);
        }
        let expect = d0 * (1.0f64 - tau).powi(50);
        assert!((target.distance(&online) - expect).abs() < 1e-12 * d0);
    }
}
