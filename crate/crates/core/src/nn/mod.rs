//! Minimal CPU neural-network building blocks with explicit backward passes.
//!
//! Feature maps are single-image `(C, H, W)` arrays; dense layers work on
//! `(batch, features)` rows. Gradients accumulate into [`Param::grad`] until
//! cleared, so per-image passes can be summed into one optimizer step.

mod backbone;
mod conv;
mod layers;
mod linear;
mod param;
mod roi_align;

pub use backbone::{Backbone, BackboneKind};
pub use conv::{Conv2d, ConvCache};
pub use layers::{
    global_avg_pool, global_avg_pool_backward, Layer, LayerCache, MaxPool, Residual, Sequential,
};
pub use linear::{Linear, Mlp, MlpCache};
pub use param::{Adam, Param, Parameterized, TensorRecord};
pub use roi_align::RoiAlign;

use image::RgbImage;
use ndarray::Array3;

/// RGB image to a `(3, H, W)` tensor with values centered on zero.
pub fn image_to_tensor(img: &RgbImage) -> Array3<f32> {
    let (w, h) = img.dimensions();
    let mut t = Array3::<f32>::zeros((3, h as usize, w as usize));
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            t[[c, y as usize, x as usize]] = px[c] as f32 / 255.0 - 0.5;
        }
    }
    t
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
