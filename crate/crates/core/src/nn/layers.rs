use ndarray::Array3;

use super::conv::{out_size, Conv2d, ConvCache};
use super::param::{Param, Parameterized};

#[derive(Debug, Clone, Copy)]
pub struct MaxPool {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl MaxPool {
    fn forward(&self, x: &Array3<f32>) -> (Array3<f32>, Vec<usize>) {
        let (c, h, w) = x.dim();
        let oh = out_size(h, self.kernel, self.stride, self.pad);
        let ow = out_size(w, self.kernel, self.stride, self.pad);
        let mut y = Array3::<f32>::from_elem((c, oh, ow), f32::NEG_INFINITY);
        let mut arg = vec![0usize; c * oh * ow];
        let xs = x.as_slice().expect("contiguous input");
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = (ci * h + iy as usize) * w + ix as usize;
                            if xs[idx] > best || best_i == usize::MAX {
                                best = xs[idx];
                                best_i = idx;
                            }
                        }
                    }
                    y[[ci, oy, ox]] = best;
                    arg[(ci * oh + oy) * ow + ox] = best_i;
                }
            }
        }
        (y, arg)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    Relu,
    MaxPool(MaxPool),
    Residual(Box<Residual>),
}

/// `relu(body(x) + shortcut(x))`, identity shortcut when `shortcut` is `None`.
#[derive(Debug, Clone)]
pub struct Residual {
    pub body: Vec<Layer>,
    pub shortcut: Option<Conv2d>,
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Conv(ConvCache),
    Relu(Array3<f32>),
    MaxPool { argmax: Vec<usize>, in_dim: (usize, usize, usize) },
    Residual {
        body: Vec<LayerCache>,
        shortcut: Option<ConvCache>,
        out: Array3<f32>,
    },
}

fn relu(mut x: Array3<f32>) -> Array3<f32> {
    x.mapv_inplace(|v| v.max(0.0));
    x
}

fn relu_backward(out: &Array3<f32>, dy: &Array3<f32>) -> Array3<f32> {
    let mut dx = dy.clone();
    dx.zip_mut_with(out, |d, o| {
        if *o <= 0.0 {
            *d = 0.0
        }
    });
    dx
}

impl Layer {
    pub fn forward(&self, x: &Array3<f32>) -> (Array3<f32>, LayerCache) {
        match self {
            Layer::Conv(c) => {
                let (y, cache) = c.forward(x);
                (y, LayerCache::Conv(cache))
            }
            Layer::Relu => {
                let y = relu(x.clone());
                (y.clone(), LayerCache::Relu(y))
            }
            Layer::MaxPool(p) => {
                let x = x.as_standard_layout();
                let (y, argmax) = p.forward(&x.to_owned());
                (
                    y,
                    LayerCache::MaxPool {
                        argmax,
                        in_dim: x.dim(),
                    },
                )
            }
            Layer::Residual(r) => {
                let (body_out, body) = run_forward(&r.body, x);
                let (skip, shortcut) = match &r.shortcut {
                    Some(c) => {
                        let (y, cache) = c.forward(x);
                        (y, Some(cache))
                    }
                    None => (x.clone(), None),
                };
                let out = relu(body_out + skip);
                (
                    out.clone(),
                    LayerCache::Residual {
                        body,
                        shortcut,
                        out,
                    },
                )
            }
        }
    }

    pub fn backward(&mut self, cache: &LayerCache, dy: &Array3<f32>) -> Array3<f32> {
        match (self, cache) {
            (Layer::Conv(c), LayerCache::Conv(cc)) => c.backward(cc, dy),
            (Layer::Relu, LayerCache::Relu(out)) => relu_backward(out, dy),
            (Layer::MaxPool(_), LayerCache::MaxPool { argmax, in_dim }) => {
                let mut dx = Array3::<f32>::zeros(*in_dim);
                let dxs = dx.as_slice_mut().expect("contiguous");
                for (g, &i) in dy.iter().zip(argmax) {
                    dxs[i] += g;
                }
                dx
            }
            (Layer::Residual(r), LayerCache::Residual { body, shortcut, out }) => {
                let d = relu_backward(out, dy);
                let mut dx = run_backward(&mut r.body, body, &d);
                match (&mut r.shortcut, shortcut) {
                    (Some(c), Some(cc)) => dx += &c.backward(cc, &d),
                    _ => dx += &d,
                }
                dx
            }
            _ => unreachable!("layer/cache mismatch"),
        }
    }

    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        match self {
            Layer::Conv(c) => {
                f(&c.weight);
                f(&c.bias);
            }
            Layer::Residual(r) => {
                r.body.iter().for_each(|l| l.visit(f));
                if let Some(c) = &r.shortcut {
                    f(&c.weight);
                    f(&c.bias);
                }
            }
            _ => {}
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            Layer::Conv(c) => {
                f(&mut c.weight);
                f(&mut c.bias);
            }
            Layer::Residual(r) => {
                r.body.iter_mut().for_each(|l| l.visit_mut(f));
                if let Some(c) = &mut r.shortcut {
                    f(&mut c.weight);
                    f(&mut c.bias);
                }
            }
            _ => {}
        }
    }
}

pub(crate) fn run_forward(layers: &[Layer], x: &Array3<f32>) -> (Array3<f32>, Vec<LayerCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for l in layers {
        let (y, c) = l.forward(&cur);
        caches.push(c);
        cur = y;
    }
    (cur, caches)
}

pub(crate) fn run_backward(
    layers: &mut [Layer],
    caches: &[LayerCache],
    dy: &Array3<f32>,
) -> Array3<f32> {
    let mut d = dy.clone();
    for (l, c) in layers.iter_mut().zip(caches).rev() {
        d = l.backward(c, &d);
    }
    d
}

/// A feed-forward stack of layers mapping an image to a feature map.
#[derive(Debug, Clone)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn forward(&self, x: &Array3<f32>) -> (Array3<f32>, Vec<LayerCache>) {
        run_forward(&self.layers, x)
    }

    pub fn backward(&mut self, caches: &[LayerCache], dy: &Array3<f32>) -> Array3<f32> {
        run_backward(&mut self.layers, caches, dy)
    }
}

impl Parameterized for Sequential {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.layers.iter().for_each(|l| l.visit(f));
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

/// Spatial mean over `(H, W)`, giving one value per channel.
pub fn global_avg_pool(x: &Array3<f32>) -> Vec<f32> {
    let (_, h, w) = x.dim();
    let n = (h * w) as f32;
    x.outer_iter().map(|ch| ch.sum() / n).collect()
}

pub fn global_avg_pool_backward(dy: &[f32], dim: (usize, usize, usize)) -> Array3<f32> {
    let (c, h, w) = dim;
    let n = (h * w) as f32;
    Array3::from_shape_fn((c, h, w), |(ci, _, _)| dy[ci] / n)
}
