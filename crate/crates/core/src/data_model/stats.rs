use serde::{Deserialize, Serialize};

use super::ImageRecord;
use crate::error::{Error, Result};

/// Dataset summary: hand-size distribution and contact-state counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Counts over uniform bins of `[0, sqrt(2)]` of hand diagonal / image diagonal.
    pub hand_size_histogram: Vec<usize>,
    pub bin_edges: Vec<f64>,
    /// Counts indexed by contact-state code.
    pub state_histogram: [usize; 5],
    pub n_images: usize,
    pub n_hands: usize,
    pub n_objects: usize,
}

/// Hand size as a fraction of the image diagonal.
pub fn relative_hand_size(rec: &ImageRecord, hand_diag: f64) -> f64 {
    hand_diag / rec.diagonal()
}

pub fn compute_stats(set: &[ImageRecord], n_bins: usize) -> Result<DatasetStats> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    let max = std::f64::consts::SQRT_2;
    let width = max / n_bins as f64;
    let mut hist = vec![0usize; n_bins];
    let mut states = [0usize; 5];
    let mut n_hands = 0;
    let mut n_objects = 0;
    for rec in set {
        n_objects += rec.objects.len();
        for hand in &rec.hands {
            n_hands += 1;
            states[hand.state.code() as usize] += 1;
            let size = relative_hand_size(rec, hand.bbox.diagonal()).clamp(0.0, max);
            let bin = ((size / width) as usize).min(n_bins - 1);
            hist[bin] += 1;
        }
    }
    Ok(DatasetStats {
        hand_size_histogram: hist,
        bin_edges: (0..=n_bins).map(|i| i as f64 * width).collect(),
        state_histogram: states,
        n_images: set.len(),
        n_hands,
        n_objects,
    })
}
