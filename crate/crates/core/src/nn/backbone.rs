use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::Conv2d;
use super::layers::{Layer, LayerCache, MaxPool, Residual, Sequential};
use super::param::{Param, Parameterized};
use crate::error::{Error, Result};

/// Registered backbone architectures.
///
/// Every variant satisfies the same contract: an RGB `(3, H, W)` tensor in,
/// a `(channels, H / stride, W / stride)` feature map out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackboneKind {
    /// Three 3x3 convs with two 2x2 pools; stride 4, 32 channels.
    Tiny,
    /// Basic-block residual network (2-2-2-2) through the last stage; stride 32, 512 channels.
    Resnet18,
    /// Bottleneck residual network (3-4-23) cut after the third stage; stride 16, 1024 channels.
    Resnet101C4,
}

impl BackboneKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "tiny" => Ok(Self::Tiny),
            "resnet18" => Ok(Self::Resnet18),
            "resnet101" | "resnet101-c4" => Ok(Self::Resnet101C4),
            other => Err(Error::InvalidArgument(format!("unknown backbone {other:?}"))),
        }
    }

    pub fn stride(self) -> usize {
        match self {
            Self::Tiny => 4,
            Self::Resnet18 => 32,
            Self::Resnet101C4 => 16,
        }
    }

    pub fn channels(self) -> usize {
        match self {
            Self::Tiny => 32,
            Self::Resnet18 => 512,
            Self::Resnet101C4 => 1024,
        }
    }

    /// Smallest input side the backbone accepts.
    pub fn min_input(self) -> usize {
        self.stride() * 2
    }
}

#[derive(Debug, Clone)]
pub struct Backbone {
    pub kind: BackboneKind,
    net: Sequential,
}

fn conv(name: &str, i: usize, o: usize, k: usize, s: usize, p: usize, rng: &mut impl Rng) -> Layer {
    Layer::Conv(Conv2d::new(name, i, o, k, s, p, rng))
}

fn basic_block(name: &str, i: usize, o: usize, stride: usize, rng: &mut impl Rng) -> Layer {
    let body = vec![
        conv(&format!("{name}.conv1"), i, o, 3, stride, 1, rng),
        Layer::Relu,
        Layer::Conv(Conv2d::with_gain(&format!("{name}.conv2"), o, o, 3, 1, 1, 0.5, rng)),
    ];
    let shortcut = (stride != 1 || i != o)
        .then(|| Conv2d::new(&format!("{name}.down"), i, o, 1, stride, 0, rng));
    Layer::Residual(Box::new(Residual { body, shortcut }))
}

fn bottleneck(name: &str, i: usize, mid: usize, o: usize, stride: usize, rng: &mut impl Rng) -> Layer {
    let body = vec![
        conv(&format!("{name}.conv1"), i, mid, 1, 1, 0, rng),
        Layer::Relu,
        conv(&format!("{name}.conv2"), mid, mid, 3, stride, 1, rng),
        Layer::Relu,
        Layer::Conv(Conv2d::with_gain(&format!("{name}.conv3"), mid, o, 1, 1, 0, 0.2, rng)),
    ];
    let shortcut = (stride != 1 || i != o)
        .then(|| Conv2d::new(&format!("{name}.down"), i, o, 1, stride, 0, rng));
    Layer::Residual(Box::new(Residual { body, shortcut }))
}

fn resnet_stem(rng: &mut impl Rng) -> Vec<Layer> {
    vec![
        conv("stem.conv", 3, 64, 7, 2, 3, rng),
        Layer::Relu,
        Layer::MaxPool(MaxPool {
            kernel: 3,
            stride: 2,
            pad: 1,
        }),
    ]
}

impl Backbone {
    pub fn new<R: Rng>(kind: BackboneKind, rng: &mut R) -> Self {
        let pool = Layer::MaxPool(MaxPool {
            kernel: 2,
            stride: 2,
            pad: 0,
        });
        let layers = match kind {
            BackboneKind::Tiny => vec![
                conv("backbone.conv1", 3, 16, 3, 1, 1, rng),
                Layer::Relu,
                pool.clone(),
                conv("backbone.conv2", 16, 32, 3, 1, 1, rng),
                Layer::Relu,
                pool,
                conv("backbone.conv3", 32, 32, 3, 1, 1, rng),
                Layer::Relu,
            ],
            BackboneKind::Resnet18 => {
                let mut layers = resnet_stem(rng);
                let mut inp = 64;
                for (stage, &out) in [64, 128, 256, 512].iter().enumerate() {
                    for block in 0..2 {
                        let stride = if stage > 0 && block == 0 { 2 } else { 1 };
                        layers.push(basic_block(&format!("layer{}.{block}", stage + 1), inp, out, stride, rng));
                        inp = out;
                    }
                }
                layers
            }
            BackboneKind::Resnet101C4 => {
                let mut layers = resnet_stem(rng);
                let mut inp = 64;
                for (stage, (&blocks, &mid)) in [3usize, 4, 23].iter().zip(&[64usize, 128, 256]).enumerate() {
                    for block in 0..blocks {
                        let stride = if stage > 0 && block == 0 { 2 } else { 1 };
                        let name = format!("layer{}.{block}", stage + 1);
                        layers.push(bottleneck(&name, inp, mid, mid * 4, stride, rng));
                        inp = mid * 4;
                    }
                }
                layers
            }
        };
        Self {
            kind,
            net: Sequential { layers },
        }
    }

    pub fn stride(&self) -> usize {
        self.kind.stride()
    }

    pub fn channels(&self) -> usize {
        self.kind.channels()
    }

    pub fn forward(&self, x: &Array3<f32>) -> (Array3<f32>, Vec<LayerCache>) {
        self.net.forward(x)
    }

    pub fn backward(&mut self, caches: &[LayerCache], dy: &Array3<f32>) -> Array3<f32> {
        self.net.backward(caches, dy)
    }
}

impl Parameterized for Backbone {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.net.visit_params(f)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.net.visit_params_mut(f)
    }
}
