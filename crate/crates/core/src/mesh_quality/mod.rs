//! Self-supervised quality assessment of hand-mesh reconstructions.
//!
//! A crop is reconstructed from several rotated copies; joints are rotated
//! back and their disagreement becomes a consistency score. The most and
//! least consistent fractions label a training set for a classifier over
//! pose parameters.

mod classifier;
mod crop;

pub use classifier::{
    train_quality_mlp, GaussianScorer, MlpTrainConfig, NaiveBayes, QualityClassifier,
};
pub use crop::{EquivariantStub, KeypointCrop, NoisyStub, Serialized};

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{read_json_lines, write_json_lines, BBox, HandSide, Point};
use crate::error::{Error, Result};

pub const DEFAULT_ANGLES: [f64; 6] = [-30.0, -20.0, -10.0, 10.0, 20.0, 30.0];
pub const DEFAULT_THETA_DIM: usize = 45;
pub const DEFAULT_JOINTS: usize = 21;

/// Output of a mesh reconstructor for one crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRecord {
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// Projected joints in crop pixels.
    pub joints_2d: Vec<[f64; 2]>,
    pub side: HandSide,
}

impl MeshRecord {
    pub fn validate(&self) -> Result<()> {
        let finite = self.theta.iter().all(|v| v.is_finite())
            && self.beta.iter().flatten().all(|v| v.is_finite())
            && self.joints_2d.iter().flatten().all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidArgument("mesh record has non-finite entries".into()))
        }
    }
}

/// Image-like input that can be padded to a square and rotated about its
/// center. Rotation by `deg` maps a point `p` to `c + R(deg) (p - c)` with
/// `R = [[cos, -sin], [sin, cos]]` in pixel coordinates (y down), which is
/// clockwise on screen.
pub trait RotatableCrop: Sized {
    fn size(&self) -> (f64, f64);
    fn pad_square(&self) -> Self;
    fn rotated(&self, deg: f64) -> Self;
}

/// A hand-mesh reconstructor. Must be deterministic for fixed inputs.
pub trait Reconstructor<C> {
    fn reconstruct(&self, crop: &C, side: HandSide) -> std::result::Result<MeshRecord, String>;
}

pub fn rotate_point(p: Point, center: Point, deg: f64) -> Point {
    let (s, c) = deg.to_radians().sin_cos();
    let (dx, dy) = (p.x - center.x, p.y - center.y);
    Point::new(center.x + c * dx - s * dy, center.y + s * dx + c * dy)
}

/// Joint sets observed on rotated copies, each rotated back by its angle
/// about `center`; returns the mean over unordered pairs of the mean
/// per-joint distance, divided by `diagonal`.
pub fn consistency_from_views(
    views: &[(f64, Vec<[f64; 2]>)],
    center: Point,
    diagonal: f64,
) -> Result<f64> {
    if views.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 views, got {}",
            views.len()
        )));
    }
    let n_joints = views[0].1.len();
    if n_joints == 0 {
        return Err(Error::Empty("reconstruction has no joints".into()));
    }
    let back: Vec<Vec<Point>> = views
        .iter()
        .map(|(angle, joints)| {
            if joints.len() != n_joints {
                return Err(Error::DimensionMismatch {
                    expected: n_joints,
                    actual: joints.len(),
                });
            }
            Ok(joints
                .iter()
                .map(|j| rotate_point(Point::new(j[0], j[1]), center, -angle))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..back.len() {
        for b in a + 1..back.len() {
            let d: f64 = back[a].iter().zip(&back[b]).map(|(p, q)| p.distance(*q)).sum();
            total += d / n_joints as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64 / diagonal)
}

/// Rotation-consistency score of one crop. The crop is padded to a square
/// first so rotation keeps its content.
pub fn consistency_score<C, R>(crop: &C, side: HandSide, recon: &R, angles: &[f64]) -> Result<f64>
where
    C: RotatableCrop,
    R: Reconstructor<C> + ?Sized,
{
    if angles.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 rotation angles".into()));
    }
    let square = crop.pad_square();
    let (w, h) = square.size();
    let center = Point::new(w / 2.0, h / 2.0);
    let views = angles
        .iter()
        .map(|&angle| {
            let mesh = recon
                .reconstruct(&square.rotated(angle), side)
                .map_err(|message| Error::Reconstructor { angle, message })?;
            Ok((angle, mesh.joints_2d))
        })
        .collect::<Result<Vec<_>>>()?;
    consistency_from_views(&views, center, w.hypot(h))
}

/// Scores many crops in parallel; output order follows input.
pub fn score_crops<C, R>(crops: &[(C, HandSide)], recon: &R, angles: &[f64]) -> Result<Vec<f64>>
where
    C: RotatableCrop + Sync,
    R: Reconstructor<C> + Sync + ?Sized,
{
    crops
        .par_iter()
        .map(|(c, side)| consistency_score(c, *side, recon, angles))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QualityLabel {
    Positive,
    Negative,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityLabelSet<T> {
    pub items: Vec<(T, f64, QualityLabel)>,
}

impl<T> QualityLabelSet<T> {
    pub fn labeled(&self) -> impl Iterator<Item = (&T, bool)> {
        self.items.iter().filter_map(|(t, _, l)| match l {
            QualityLabel::Positive => Some((t, true)),
            QualityLabel::Negative => Some((t, false)),
            QualityLabel::Unlabeled => None,
        })
    }
}

/// Labels the `top_frac` most consistent items (smallest scores) positive
/// and the `bottom_frac` least consistent negative. Counts are floored;
/// equal scores keep input order. Items come back in input order.
pub fn make_labels<T>(scored: Vec<(T, f64)>, top_frac: f64, bottom_frac: f64) -> Result<QualityLabelSet<T>> {
    let valid = |f: f64| (0.0..=1.0).contains(&f);
    if !valid(top_frac) || !valid(bottom_frac) || top_frac + bottom_frac > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "label fractions {top_frac} + {bottom_frac} must lie in [0, 1]"
        )));
    }
    if scored.is_empty() {
        return Err(Error::Empty("no scored items to label".into()));
    }
    let n = scored.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scored[a].1.total_cmp(&scored[b].1));
    // the epsilon keeps products like 10 * 0.3 from flooring to 2
    let n_pos = (n as f64 * top_frac + 1e-9).floor() as usize;
    let n_neg = (n as f64 * bottom_frac + 1e-9).floor() as usize;
    let mut labels = vec![QualityLabel::Unlabeled; n];
    for &i in &order[..n_pos] {
        labels[i] = QualityLabel::Positive;
    }
    for &i in &order[n - n_neg..] {
        labels[i] = QualityLabel::Negative;
    }
    Ok(QualityLabelSet {
        items: scored
            .into_iter()
            .zip(labels)
            .map(|((t, s), l)| (t, s, l))
            .collect(),
    })
}

/// Area under the ROC curve: the probability a random positive outscores a
/// random negative, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("auroc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // walk tie groups in ascending order, counting negatives below
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let pos = group.iter().filter(|&&k| labels[k]).count();
        let neg = group.len() - pos;
        wins += pos as f64 * (neg_below as f64 + 0.5 * neg as f64);
        neg_below += neg;
        i = j;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// One line of the scored-record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub side: HandSide,
    pub consistency: f64,
    pub theta: Vec<f64>,
    pub label: QualityLabel,
}

/// Reconstructions of one crop under each rotation, as recorded by an
/// external reconstructor. Input to the mesh-score command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedViews {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub side: HandSide,
    /// Side of the square-padded crop the joints refer to.
    pub crop_size: f64,
    /// Reconstruction of the unrotated crop.
    pub mesh: MeshRecord,
    pub views: Vec<RecordedView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedView {
    pub angle: f64,
    pub joints_2d: Vec<[f64; 2]>,
}

impl RecordedViews {
    pub fn consistency(&self) -> Result<f64> {
        if !(self.crop_size > 0.0) {
            return Err(Error::Validation {
                image_id: self.image_id.clone(),
                field: "crop_size".into(),
                message: "must be positive".into(),
            });
        }
        let views: Vec<(f64, Vec<[f64; 2]>)> = self
            .views
            .iter()
            .map(|v| (v.angle, v.joints_2d.clone()))
            .collect();
        let c = self.crop_size / 2.0;
        consistency_from_views(&views, Point::new(c, c), self.crop_size * 2f64.sqrt())
    }
}

pub fn read_recorded_views<R: BufRead>(reader: R) -> Result<Vec<RecordedViews>> {
    Ok(read_json_lines(reader)?.into_iter().map(|(_, r)| r).collect())
}

pub fn load_recorded_views(path: impl AsRef<Path>) -> Result<Vec<RecordedViews>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_recorded_views(BufReader::new(file))
}

pub fn write_scored_records<W: Write>(w: W, records: &[ScoredRecord]) -> std::io::Result<()> {
    write_json_lines(w, records)
}

pub fn read_scored_records<R: BufRead>(reader: R) -> Result<Vec<ScoredRecord>> {
    Ok(read_json_lines(reader)?.into_iter().map(|(_, r)| r).collect())
}
