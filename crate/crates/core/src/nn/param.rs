use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// Gaussian init with standard deviation `sqrt(2 / fan_in)`.
    pub fn he<R: Rng>(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        Self::normal(name, shape, (2.0 / fan_in as f64).sqrt(), rng)
    }

    pub fn normal<R: Rng>(name: impl Into<String>, shape: &[usize], std: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(name, shape);
        for v in &mut p.value {
            let z: f64 = rng.sample(StandardNormal);
            *v = (z * std) as f32;
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything that owns parameters, visited in a fixed order.
pub trait Parameterized {
    fn visit_params(&self, f: &mut dyn FnMut(&Param));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.zero_grad());
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    /// Flattened gradients in visit order.
    fn grads(&self) -> Vec<Vec<f32>> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push(p.grad.clone()));
        out
    }

    /// Adds `grads` (in visit order) onto the current gradients.
    fn accumulate_grads(&mut self, grads: &[Vec<f32>]) {
        let mut i = 0;
        self.visit_params_mut(&mut |p| {
            for (g, d) in p.grad.iter_mut().zip(&grads[i]) {
                *g += d;
            }
            i += 1;
        });
    }

    fn scale_grads(&mut self, s: f32) {
        self.visit_params_mut(&mut |p| p.grad.iter_mut().for_each(|g| *g *= s));
    }

    fn to_tensors(&self) -> Vec<TensorRecord> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push(TensorRecord::from_param(p)));
        out
    }

    /// Loads values from serialized tensors, checking names and shapes.
    fn load_tensors(&mut self, tensors: &[TensorRecord]) -> Result<()> {
        let mut count = 0;
        self.visit_params(&mut |_| count += 1);
        if count != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {count} tensors, found {}",
                tensors.len()
            )));
        }
        let mut err = None;
        let mut i = 0;
        self.visit_params_mut(&mut |p| {
            if err.is_none() {
                match tensors[i].decode_into(p) {
                    Ok(()) => {}
                    Err(e) => err = Some(e),
                }
            }
            i += 1;
        });
        err.map_or(Ok(()), Err)
    }
}

/// Serialized parameter: little-endian f32 bytes in base64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

impl TensorRecord {
    pub fn from_param(p: &Param) -> Self {
        let bytes: Vec<u8> = p.value.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            name: p.name.clone(),
            shape: p.shape.clone(),
            data: B64.encode(bytes),
        }
    }

    fn decode_into(&self, p: &mut Param) -> Result<()> {
        if self.name != p.name || self.shape != p.shape {
            return Err(Error::Checkpoint(format!(
                "tensor mismatch: checkpoint has {} {:?}, model expects {} {:?}",
                self.name, self.shape, p.name, p.shape
            )));
        }
        let bytes = B64
            .decode(&self.data)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", self.name)))?;
        if bytes.len() != p.len() * 4 {
            return Err(Error::Checkpoint(format!(
                "{}: expected {} bytes, found {}",
                self.name,
                p.len() * 4,
                bytes.len()
            )));
        }
        for (v, chunk) in p.value.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    step: i32,
    moments: Vec<(Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step<M: Parameterized + ?Sized>(&mut self, model: &mut M) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps, lr, wd) = (self.beta1, self.beta2, self.eps, self.lr, self.weight_decay);
        let moments = &mut self.moments;
        let mut i = 0;
        model.visit_params_mut(&mut |p| {
            if moments.len() <= i {
                moments.push((vec![0.0; p.len()], vec![0.0; p.len()]));
            }
            let (m, v) = &mut moments[i];
            for k in 0..p.value.len() {
                let g = p.grad[k] + wd * p.value[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p.value[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
            i += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct One(Param);
    impl Parameterized for One {
        fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
            f(&self.0)
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
            f(&mut self.0)
        }
    }

    #[test]
    fn tensor_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = One(Param::he("w", &[3, 4], 4, &mut rng));
        let mut b = One(Param::zeros("w", &[3, 4]));
        b.load_tensors(&a.to_tensors()).unwrap();
        assert_eq!(
            a.0.value.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.0.value.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let mut c = One(Param::zeros("w", &[4, 3]));
        assert!(c.load_tensors(&a.to_tensors()).is_err());
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut m = One(Param::zeros("x", &[2]));
        m.0.value = vec![3.0, -2.0];
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            m.zero_grad();
            let v = m.0.value.clone();
            m.0.grad = v.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut m);
        }
        assert!(m.0.value.iter().all(|v| v.abs() < 1e-2), "{:?}", m.0.value);
    }
}
