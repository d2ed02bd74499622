use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use super::param::Param;

/// 2D convolution over a single `(C, H, W)` feature map, via im2col.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Values saved by [`Conv2d::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Array2<f32>,
    in_hw: (usize, usize),
}

pub(crate) fn out_size(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad).saturating_sub(k) / stride + 1
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        Self {
            weight: Param::he(format!("{name}.weight"), &[out_ch, fan_in], fan_in, rng),
            bias: Param::zeros(format!("{name}.bias"), &[out_ch]),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        }
    }

    /// Like [`Conv2d::new`] with weights scaled by `gain`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_gain<R: Rng>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        gain: f32,
        rng: &mut R,
    ) -> Self {
        let mut c = Self::new(name, in_ch, out_ch, kernel, stride, pad, rng);
        c.weight.value.iter_mut().for_each(|w| *w *= gain);
        c
    }

    fn im2col(&self, x: &Array3<f32>) -> Array2<f32> {
        let (c, h, w) = x.dim();
        let k = self.kernel;
        let oh = out_size(h, k, self.stride, self.pad);
        let ow = out_size(w, k, self.stride, self.pad);
        let mut cols = Array2::<f32>::zeros((c * k * k, oh * ow));
        let pad = self.pad as isize;
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let mut out_row = cols.row_mut(row);
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            out_row[oy * ow + ox] = x[[ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f32>, in_hw: (usize, usize)) -> Array3<f32> {
        let (h, w) = in_hw;
        let k = self.kernel;
        let oh = out_size(h, k, self.stride, self.pad);
        let ow = out_size(w, k, self.stride, self.pad);
        let mut dx = Array3::<f32>::zeros((self.in_ch, h, w));
        let pad = self.pad as isize;
        for ci in 0..self.in_ch {
            for ky in 0..k {
                for kx in 0..k {
                    let row = dcols.row((ci * k + ky) * k + kx);
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            dx[[ci, iy as usize, ix as usize]] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
        dx
    }

    fn weight_matrix(&self) -> ndarray::ArrayView2<'_, f32> {
        ndarray::ArrayView2::from_shape((self.out_ch, self.in_ch * self.kernel * self.kernel), &self.weight.value)
            .expect("conv weight shape")
    }

    pub fn forward(&self, x: &Array3<f32>) -> (Array3<f32>, ConvCache) {
        let (_, h, w) = x.dim();
        let oh = out_size(h, self.kernel, self.stride, self.pad);
        let ow = out_size(w, self.kernel, self.stride, self.pad);
        let cols = self.im2col(x);
        let mut y = self.weight_matrix().dot(&cols);
        for (mut row, b) in y.axis_iter_mut(Axis(0)).zip(&self.bias.value) {
            row += *b;
        }
        let y = y.into_shape_with_order((self.out_ch, oh, ow)).expect("conv output shape");
        (y, ConvCache { cols, in_hw: (h, w) })
    }

    pub fn forward_inference(&self, x: &Array3<f32>) -> Array3<f32> {
        self.forward(x).0
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &ConvCache, dy: &Array3<f32>) -> Array3<f32> {
        let (oc, oh, ow) = dy.dim();
        let dy2 = dy
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((oc, oh * ow))
            .expect("conv grad shape");
        let dw = dy2.dot(&cache.cols.t());
        for (g, d) in self.weight.grad.iter_mut().zip(dw.iter()) {
            *g += d;
        }
        for (g, row) in self.bias.grad.iter_mut().zip(dy2.axis_iter(Axis(0))) {
            *g += row.sum();
        }
        let dcols = self.weight_matrix().t().dot(&dy2);
        self.col2im(&dcols, cache.in_hw)
    }
}
