use std::collections::HashMap;
use std::path::PathBuf;

use image::RgbImage;
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DetectorModel, LossDict, TrainConfig};
use crate::data_model::ImageRecord;
use crate::error::{Error, Result};
use crate::nn::{image_to_tensor, Adam, Parameterized};

/// Resolves an `image_id` to pixels.
pub trait ImageProvider: Sync {
    fn load(&self, image_id: &str) -> Result<RgbImage>;
}

/// Reads `<dir>/<image_id>.png`.
#[derive(Debug, Clone)]
pub struct DirImageProvider {
    pub dir: PathBuf,
}

impl DirImageProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl ImageProvider for DirImageProvider {
    fn load(&self, image_id: &str) -> Result<RgbImage> {
        let path = self.dir.join(format!("{image_id}.png"));
        if !path.exists() {
            return Err(Error::UnresolvedImage(image_id.to_string()));
        }
        image::open(&path)
            .map(|img| img.to_rgb8())
            .map_err(|e| Error::Image {
                image: image_id.to_string(),
                message: e.to_string(),
            })
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryImageProvider {
    pub images: HashMap<String, RgbImage>,
}

impl MemoryImageProvider {
    pub fn insert(&mut self, image_id: impl Into<String>, img: RgbImage) {
        self.images.insert(image_id.into(), img);
    }
}

impl ImageProvider for MemoryImageProvider {
    fn load(&self, image_id: &str) -> Result<RgbImage> {
        self.images
            .get(image_id)
            .cloned()
            .ok_or_else(|| Error::UnresolvedImage(image_id.to_string()))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    /// Batch-mean losses, one entry per optimizer step.
    pub losses: Vec<LossDict>,
}

fn image_seed(seed: u64, iteration: usize, slot: usize) -> u64 {
    seed ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (slot as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Trains a detector from scratch. Deterministic for a fixed config and
/// seed regardless of thread count. Aborts on the first non-finite loss.
pub fn train(
    set: &[ImageRecord],
    images: &dyn ImageProvider,
    cfg: &TrainConfig,
    mut progress: Option<&mut dyn FnMut(usize, &LossDict)>,
) -> Result<(DetectorModel, TrainReport)> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Empty("training set has no images".into()));
    }
    let tensors: Vec<Array3<f32>> = set
        .iter()
        .map(|rec| {
            let img = images.load(&rec.image_id)?;
            if img.dimensions() != (rec.width, rec.height) {
                return Err(Error::Image {
                    image: rec.image_id.clone(),
                    message: format!(
                        "pixel size {:?} differs from annotated {}x{}",
                        img.dimensions(),
                        rec.width,
                        rec.height
                    ),
                });
            }
            Ok(image_to_tensor(&img))
        })
        .collect::<Result<_>>()?;

    let mut model = DetectorModel::new(cfg.model.clone(), cfg.seed);
    let mut opt = Adam::new(cfg.learning_rate as f32);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut report = TrainReport::default();
    let limit = cfg.max_iterations.unwrap_or(usize::MAX);

    'outer: for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut order_rng);
        for batch in order.chunks(cfg.batch_size) {
            if report.iterations >= limit {
                break 'outer;
            }
            let it = report.iterations;
            model.zero_grad();
            let results: Vec<Result<(Vec<Vec<f32>>, LossDict)>> = if batch.len() == 1 {
                let mut rng = ChaCha8Rng::seed_from_u64(image_seed(cfg.seed, it, 0));
                let r = model.accumulate_image(&tensors[batch[0]], &set[batch[0]], cfg, &mut rng);
                vec![r.map(|l| (Vec::new(), l))]
            } else {
                let base = &model;
                batch
                    .par_iter()
                    .enumerate()
                    .map(|(slot, &i)| {
                        let mut local = base.clone();
                        let mut rng = ChaCha8Rng::seed_from_u64(image_seed(cfg.seed, it, slot));
                        let l = local.accumulate_image(&tensors[i], &set[i], cfg, &mut rng)?;
                        Ok((local.grads(), l))
                    })
                    .collect()
            };
            let mut mean = LossDict::default();
            for r in results {
                let (grads, l) = r.map_err(|e| match e {
                    Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss {
                        iteration: it,
                        detail,
                    },
                    other => other,
                })?;
                if !grads.is_empty() {
                    model.accumulate_grads(&grads);
                }
                mean += l;
            }
            let inv = 1.0 / batch.len() as f64;
            for v in [
                &mut mean.l_det,
                &mut mean.l_side,
                &mut mean.l_state,
                &mut mean.l_ori,
                &mut mean.l_mag,
                &mut mean.total,
            ] {
                *v *= inv;
            }
            model.scale_grads(inv as f32);
            opt.step(&mut model);
            if let Some(cb) = progress.as_mut() {
                cb(it, &mean);
            }
            report.losses.push(mean);
            report.iterations += 1;
        }
    }
    Ok((model, report))
}
