use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::param::{Param, Parameterized};

/// Fully connected layer over a batch of row vectors.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::he(format!("{name}.weight"), &[out_dim, in_dim], in_dim, rng),
            bias: Param::zeros(format!("{name}.bias"), &[out_dim]),
            in_dim,
            out_dim,
        }
    }

    /// Small-std init for output layers.
    pub fn new_output<R: Rng>(name: &str, in_dim: usize, out_dim: usize, std: f64, rng: &mut R) -> Self {
        Self {
            weight: Param::normal(format!("{name}.weight"), &[out_dim, in_dim], std, rng),
            bias: Param::zeros(format!("{name}.bias"), &[out_dim]),
            in_dim,
            out_dim,
        }
    }

    fn w(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.out_dim, self.in_dim), &self.weight.value).expect("linear shape")
    }

    pub fn forward(&self, x: &Array2<f32>) -> Array2<f32> {
        let mut y = x.dot(&self.w().t());
        for mut row in y.axis_iter_mut(Axis(0)) {
            for (v, b) in row.iter_mut().zip(&self.bias.value) {
                *v += b;
            }
        }
        y
    }

    pub fn backward(&mut self, x: &Array2<f32>, dy: &Array2<f32>) -> Array2<f32> {
        let dw = dy.t().dot(x);
        for (g, d) in self.weight.grad.iter_mut().zip(dw.iter()) {
            *g += d;
        }
        for row in dy.axis_iter(Axis(0)) {
            for (g, d) in self.bias.grad.iter_mut().zip(row.iter()) {
                *g += d;
            }
        }
        dy.dot(&self.w())
    }
}

/// Linear layers with ReLU between them (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f32>>,
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn new<R: Rng>(name: &str, dims: &[usize], rng: &mut R) -> Self {
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let lname = format!("{name}.{i}");
                if i + 1 == n {
                    Linear::new_output(&lname, dims[i], dims[i + 1], 0.01, rng)
                } else {
                    Linear::new(&lname, dims[i], dims[i + 1], rng)
                }
            })
            .collect();
        Self { layers }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, x: &Array2<f32>) -> (Array2<f32>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            inputs.push(cur.clone());
            cur = l.forward(&cur);
            if i + 1 < self.layers.len() {
                cur.mapv_inplace(|v| v.max(0.0));
            }
        }
        (cur, MlpCache { inputs })
    }

    pub fn backward(&mut self, cache: &MlpCache, dy: &Array2<f32>) -> Array2<f32> {
        let mut d = dy.clone();
        let n = self.layers.len();
        for i in (0..n).rev() {
            if i + 1 < n {
                // relu mask from the next layer's input, which is this layer's activated output
                d.zip_mut_with(&cache.inputs[i + 1], |g, a| {
                    if *a <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            d = self.layers[i].backward(&cache.inputs[i], &d);
        }
        d
    }
}

impl Parameterized for Linear {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

impl Parameterized for Mlp {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.layers.iter().for_each(|l| l.visit_params(f));
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.layers.iter_mut().for_each(|l| l.visit_params_mut(f));
    }
}
