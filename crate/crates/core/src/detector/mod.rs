//! Two-stage hand/object detector with per-ROI auxiliary heads for hand
//! side, contact state and a factored hand-to-object offset.

mod anchors;
mod checkpoint;
pub mod loss;
mod model;
mod targets;
mod train;

pub use anchors::{decode_box, encode_box, nms};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use model::{DetectorModel, ModelConfig};
pub use targets::{compute_losses, encode_offset, AuxGrads, RoiAuxOutput};
pub use train::{train, DirImageProvider, ImageProvider, MemoryImageProvider, TrainReport};

use serde::{Deserialize, Serialize};

use crate::data_model::{BBox, ContactState, HandSide};

/// A detected hand with its soft side/state predictions and offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandDetection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    pub side_probs: [f64; 2],
    pub state_probs: [f64; 5],
    /// Unit vector from the hand center toward the contacted object.
    pub offset_dir: [f64; 2],
    /// Offset length as a fraction of the image diagonal.
    pub offset_mag: f64,
}

impl HandDetection {
    pub fn side(&self) -> HandSide {
        if self.side_probs[1] > self.side_probs[0] {
            HandSide::Right
        } else {
            HandSide::Left
        }
    }

    /// Argmax contact state; ties resolve to the lower code.
    pub fn state(&self) -> ContactState {
        let mut best = 0;
        for i in 1..5 {
            if self.state_probs[i] > self.state_probs[best] {
                best = i;
            }
        }
        ContactState::ALL[best]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectDetection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

/// Ground-truth offset for one hand: direction and diagonal-normalized length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetTarget {
    pub dir: [f64; 2],
    pub mag: f64,
    pub valid: bool,
}

/// Per-image (or per-batch) losses.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossDict {
    pub l_det: f64,
    pub l_side: f64,
    pub l_state: f64,
    pub l_ori: f64,
    pub l_mag: f64,
    pub total: f64,
}

impl LossDict {
    pub fn with_total(mut self, w: &LossWeights) -> Self {
        self.total = self.l_det
            + w.side * self.l_side
            + w.state * self.l_state
            + w.ori * self.l_ori
            + w.mag * self.l_mag;
        self
    }

    pub fn is_finite(&self) -> bool {
        [self.l_det, self.l_side, self.l_state, self.l_ori, self.l_mag, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl std::ops::AddAssign for LossDict {
    fn add_assign(&mut self, o: Self) {
        self.l_det += o.l_det;
        self.l_side += o.l_side;
        self.l_state += o.l_state;
        self.l_ori += o.l_ori;
        self.l_mag += o.l_mag;
        self.total += o.total;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub side: f64,
    pub state: f64,
    pub ori: f64,
    pub mag: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            side: 0.1,
            state: 0.1,
            ori: 0.1,
            mag: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Stop after this many optimizer steps, if set.
    pub max_iterations: Option<usize>,
    /// Anchors sampled per image for the proposal loss.
    pub rpn_batch: usize,
    /// ROIs sampled per image for the second stage.
    pub roi_batch: usize,
    pub roi_fg_fraction: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            learning_rate: 1e-3,
            batch_size: 1,
            weights: LossWeights::default(),
            seed: 0,
            max_iterations: None,
            rpn_batch: 64,
            roi_batch: 64,
            roi_fg_fraction: 0.25,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let w = &self.weights;
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.rpn_batch > 0
            && self.roi_batch > 0
            && (0.0..=1.0).contains(&self.roi_fg_fraction)
            && [w.side, w.state, w.ori, w.mag].iter().all(|v| *v >= 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidArgument(format!("invalid training config {self:?}")))
        }
    }
}
