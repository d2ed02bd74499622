use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ImageRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be positive, got {r:?}"
            )));
        }
        if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must sum to 1, got {r:?}"
            )));
        }
        Ok(())
    }
}

/// Partitions images into train/val/test so that each uploader lands in
/// exactly one split.
///
/// Uploaders are sorted, shuffled with `seed`, and cut at the rounded
/// cumulative ratios. Image order within each split follows the input.
pub fn split_by_uploader(
    set: &[ImageRecord],
    ratios: SplitRatios,
    seed: u64,
) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>, Vec<ImageRecord>)> {
    ratios.validate()?;
    if set.is_empty() {
        return Err(Error::Empty("cannot split an empty annotation set".into()));
    }
    let uploaders: BTreeSet<&str> = set.iter().map(|r| r.uploader_id.as_str()).collect();
    let mut order: Vec<&str> = uploaders.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = order.len() as f64;
    let n_train = (n * ratios.train).round() as usize;
    let n_train_val = ((n * (ratios.train + ratios.val)).round() as usize).max(n_train);

    let assignment: HashMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let split = if i < n_train {
                0
            } else if i < n_train_val {
                1
            } else {
                2
            };
            (*u, split)
        })
        .collect();

    let mut splits = (Vec::new(), Vec::new(), Vec::new());
    for rec in set {
        match assignment[rec.uploader_id.as_str()] {
            0 => splits.0.push(rec.clone()),
            1 => splits.1.push(rec.clone()),
            _ => splits.2.push(rec.clone()),
        }
    }
    Ok(splits)
}
