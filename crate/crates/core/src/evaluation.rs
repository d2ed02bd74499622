//! VOC-style average precision with compound true-positive criteria,
//! pose-estimator comparison criteria and scale-binned analysis.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::association::ImageParse;
use crate::data_model::{BBox, ImageRecord, Point};
use crate::error::{Error, Result};

pub const IOU_THRESH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EvalCriterion {
    Hand,
    Obj,
    HSide,
    HState,
    HO,
    All,
}

impl EvalCriterion {
    pub const ALL: [EvalCriterion; 6] = [
        EvalCriterion::Hand,
        EvalCriterion::Obj,
        EvalCriterion::HSide,
        EvalCriterion::HState,
        EvalCriterion::HO,
        EvalCriterion::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalCriterion::Hand => "HAND",
            EvalCriterion::Obj => "OBJ",
            EvalCriterion::HSide => "H_SIDE",
            EvalCriterion::HState => "H_STATE",
            EvalCriterion::HO => "H_O",
            EvalCriterion::All => "ALL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for EvalCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// One scored detection for matching; `image` indexes the per-image GT lists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub image: usize,
    pub bbox: BBox,
    pub score: f64,
}

/// Ranks detections by descending score (ties by input order) and flags
/// each as TP or FP.
///
/// A detection targets the ground truth it overlaps most. It is a TP if that
/// overlap reaches `iou_thresh`, the target is not yet consumed and
/// `predicate(detection_index, gt_index)` holds; only TPs consume their
/// target. Returns `(input index, is_tp)` in rank order.
pub fn match_detections(
    dets: &[ScoredBox],
    gts: &[Vec<BBox>],
    iou_thresh: f64,
    mut predicate: impl FnMut(usize, usize) -> bool,
) -> Vec<(usize, bool)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    order
        .into_iter()
        .map(|i| {
            let d = &dets[i];
            let mut best: Option<(f64, usize)> = None;
            for (g, gb) in gts.get(d.image).map(|v| v.as_slice()).unwrap_or(&[]).iter().enumerate() {
                let v = d.bbox.iou(gb);
                if best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, g));
                }
            }
            let tp = match best {
                Some((v, g)) if v >= iou_thresh && !used[d.image][g] && predicate(i, g) => {
                    used[d.image][g] = true;
                    true
                }
                _ => false,
            };
            (i, tp)
        })
        .collect()
}

/// Ranked precision/recall points and their all-point interpolated AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub ap: f64,
    pub n_pos: usize,
}

impl PRCurve {
    pub fn from_flags(flags: &[bool], n_pos: usize) -> Self {
        let mut tp = 0usize;
        let mut precision = Vec::with_capacity(flags.len());
        let mut recall = Vec::with_capacity(flags.len());
        for (k, &f) in flags.iter().enumerate() {
            tp += f as usize;
            precision.push(tp as f64 / (k + 1) as f64);
            recall.push(if n_pos == 0 { 0.0 } else { tp as f64 / n_pos as f64 });
        }
        Self {
            precision,
            recall,
            ap: average_precision(flags, n_pos),
            n_pos,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W, label: &str) -> std::io::Result<()> {
        for (k, (p, r)) in self.precision.iter().zip(&self.recall).enumerate() {
            writeln!(w, "{label},{},{p},{r}", k + 1)?;
        }
        Ok(())
    }
}

/// All-point interpolated AP of ranked TP/FP flags.
///
/// With no positives the AP is 1.0 when there are also no detections and 0
/// otherwise.
pub fn average_precision(flags: &[bool], n_pos: usize) -> f64 {
    if n_pos == 0 {
        return if flags.is_empty() { 1.0 } else { 0.0 };
    }
    let mut prec = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (k, &f) in flags.iter().enumerate() {
        tp += f as usize;
        prec.push(tp as f64 / (k + 1) as f64);
    }
    // precision envelope, then one recall step of 1/n_pos per true positive;
    // dividing once at the end keeps a perfect ranking at exactly 1.0
    for k in (0..prec.len().saturating_sub(1)).rev() {
        prec[k] = prec[k].max(prec[k + 1]);
    }
    let total = flags.iter().zip(&prec).filter(|(f, _)| **f).fold(0.0, |acc, (_, p)| acc + p);
    total / n_pos as f64
}

/// Per-criterion score floors applied before ranking.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreThresholds(pub HashMap<EvalCriterion, f64>);

impl ScoreThresholds {
    pub fn get(&self, c: EvalCriterion) -> f64 {
        self.0.get(&c).copied().unwrap_or(0.0)
    }
}

fn align<'a>(parses: &'a [ImageParse], gt: &'a [ImageRecord]) -> Result<Vec<(&'a ImageParse, &'a ImageRecord)>> {
    let by_id: HashMap<&str, &ImageParse> = parses.iter().map(|p| (p.image_id.as_str(), p)).collect();
    if by_id.len() != parses.len() {
        return Err(Error::InvalidArgument("duplicate image_id in predictions".into()));
    }
    let mut out = Vec::with_capacity(gt.len());
    for g in gt {
        let p = by_id
            .get(g.image_id.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("no prediction for image {}", g.image_id)))?;
        out.push((*p, g));
    }
    if out.len() != parses.len() {
        let known: std::collections::HashSet<&str> = gt.iter().map(|g| g.image_id.as_str()).collect();
        let extra = parses.iter().find(|p| !known.contains(p.image_id.as_str())).expect("extra");
        return Err(Error::InvalidArgument(format!(
            "prediction for unknown image {}",
            extra.image_id
        )));
    }
    Ok(out)
}

/// Whether predicted hand `hi` of `p` satisfies `crit` against GT hand `gi`.
fn hand_predicate(crit: EvalCriterion, p: &ImageParse, hi: usize, g: &ImageRecord, gi: usize) -> bool {
    let ph = &p.hands[hi];
    let gh = &g.hands[gi];
    let link_ok = || match (p.linked_object(hi), g.linked_object(gh)) {
        (None, None) => true,
        (Some(po), Some(go)) => po.bbox.iou(go) >= IOU_THRESH,
        _ => false,
    };
    match crit {
        EvalCriterion::Hand | EvalCriterion::Obj => true,
        EvalCriterion::HSide => ph.side == gh.side,
        EvalCriterion::HState => ph.state == gh.state,
        EvalCriterion::HO => link_ok(),
        EvalCriterion::All => ph.side == gh.side && ph.state == gh.state && link_ok(),
    }
}

/// PR curve for one criterion over aligned predictions and ground truth.
pub fn criterion_curve(
    pairs: &[(&ImageParse, &ImageRecord)],
    crit: EvalCriterion,
    score_floor: f64,
) -> PRCurve {
    let mut dets = Vec::new();
    let mut owners = Vec::new();
    let gts: Vec<Vec<BBox>>;
    if crit == EvalCriterion::Obj {
        gts = pairs.iter().map(|(_, g)| g.objects.clone()).collect();
        for (img, (p, _)) in pairs.iter().enumerate() {
            for o in p.objects.iter().filter(|o| o.score >= score_floor) {
                dets.push(ScoredBox { image: img, bbox: o.bbox, score: o.score });
            }
        }
    } else {
        gts = pairs.iter().map(|(_, g)| g.hands.iter().map(|h| h.bbox).collect()).collect();
        for (img, (p, _)) in pairs.iter().enumerate() {
            for (hi, h) in p.hands.iter().enumerate() {
                if h.detection.score >= score_floor {
                    dets.push(ScoredBox { image: img, bbox: h.detection.bbox, score: h.detection.score });
                    owners.push(hi);
                }
            }
        }
    }
    let n_pos = gts.iter().map(Vec::len).sum();
    let matched = match_detections(&dets, &gts, IOU_THRESH, |di, gi| {
        if crit == EvalCriterion::Obj {
            return true;
        }
        let (p, g) = pairs[dets[di].image];
        hand_predicate(crit, p, owners[di], g, gi)
    });
    let flags: Vec<bool> = matched.into_iter().map(|(_, tp)| tp).collect();
    PRCurve::from_flags(&flags, n_pos)
}

/// AP (with curve) for each requested criterion.
pub fn evaluate_state(
    parses: &[ImageParse],
    gt: &[ImageRecord],
    criteria: &[EvalCriterion],
    thresholds: &ScoreThresholds,
) -> Result<Vec<(EvalCriterion, PRCurve)>> {
    let pairs = align(parses, gt)?;
    Ok(criteria
        .iter()
        .map(|&c| (c, criterion_curve(&pairs, c, thresholds.get(c))))
        .collect())
}

/// Keypoint-detector hand test: the point `w + 0.2 (w - e)` extrapolated
/// from wrist `w` and elbow `e` must fall inside the GT box doubled about
/// its center.
pub fn pose_hand_criterion(wrist: Point, elbow: Point, gt_box: &BBox) -> bool {
    let est = Point::new(wrist.x + 0.2 * (wrist.x - elbow.x), wrist.y + 0.2 * (wrist.y - elbow.y));
    gt_box.scaled(2.0).contains(est)
}

/// Detection center inside the GT box (boundary included).
pub fn center_in_box_criterion(det_box: &BBox, gt_box: &BBox) -> bool {
    gt_box.contains(det_box.center())
}

/// AP where a detection matches a GT box through `hit` instead of IoU.
/// Greedy by score; each GT consumed once; the first unconsumed GT (in
/// input order) satisfying `hit` is taken.
pub fn point_criterion_ap<T>(
    dets: &[(usize, T, f64)],
    gts: &[Vec<BBox>],
    hit: impl Fn(&T, &BBox) -> bool,
) -> PRCurve {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].2.total_cmp(&dets[a].2));
    let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let flags: Vec<bool> = order
        .into_iter()
        .map(|i| {
            let (img, ref d, _) = dets[i];
            let Some(boxes) = gts.get(img) else { return false };
            match (0..boxes.len()).find(|&g| !used[img][g] && hit(d, &boxes[g])) {
                Some(g) => {
                    used[img][g] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    PRCurve::from_flags(&flags, gts.iter().map(Vec::len).sum())
}

/// `sqrt(mean hand area / image area)`; `None` for images without hands.
pub fn image_hand_size(rec: &ImageRecord) -> Option<f64> {
    if rec.hands.is_empty() {
        return None;
    }
    let mean = rec.hands.iter().map(|h| h.bbox.area()).sum::<f64>() / rec.hands.len() as f64;
    Some((mean / rec.area()).sqrt())
}

/// Per-bin AP for `crit`, images binned by [`image_hand_size`]. Bin `i`
/// covers `[edges[i], edges[i+1])`, the last bin closed. Bins without
/// images (or with hand-less images only) report `None`.
pub fn scale_binned_ap(
    parses: &[ImageParse],
    gt: &[ImageRecord],
    bin_edges: &[f64],
    crit: EvalCriterion,
) -> Result<Vec<Option<f64>>> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("bin edges must increase".into()));
    }
    let pairs = align(parses, gt)?;
    let n_bins = bin_edges.len() - 1;
    let mut bins: Vec<Vec<(&ImageParse, &ImageRecord)>> = vec![Vec::new(); n_bins];
    for pair in pairs {
        let Some(s) = image_hand_size(pair.1) else { continue };
        let last = bin_edges[n_bins];
        let idx = if s == last {
            Some(n_bins - 1)
        } else {
            (0..n_bins).find(|&b| s >= bin_edges[b] && s < bin_edges[b + 1])
        };
        if let Some(b) = idx {
            bins[b].push(pair);
        }
    }
    Ok(bins
        .iter()
        .map(|b| (!b.is_empty()).then(|| criterion_curve(b, crit, 0.0).ap))
        .collect())
}

/// Evaluation output written by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_images: usize,
    pub ap: Vec<(EvalCriterion, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scale_bins: Vec<ScaleBin>,
    pub curves: Vec<(EvalCriterion, PRCurve)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleBin {
    pub lo: f64,
    pub hi: f64,
    pub ap: Option<f64>,
}

impl EvalReport {
    pub fn build(
        parses: &[ImageParse],
        gt: &[ImageRecord],
        criteria: &[EvalCriterion],
        thresholds: &ScoreThresholds,
        bin_edges: Option<&[f64]>,
    ) -> Result<Self> {
        let curves = evaluate_state(parses, gt, criteria, thresholds)?;
        let scale_bins = match bin_edges {
            Some(edges) => scale_binned_ap(parses, gt, edges, EvalCriterion::Hand)?
                .into_iter()
                .enumerate()
                .map(|(i, ap)| ScaleBin { lo: edges[i], hi: edges[i + 1], ap })
                .collect(),
            None => Vec::new(),
        };
        Ok(Self {
            n_images: gt.len(),
            ap: curves.iter().map(|(c, pr)| (*c, pr.ap)).collect(),
            scale_bins,
            curves,
        })
    }

    pub fn write_curves_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "criterion,rank,precision,recall")?;
        for (c, pr) in &self.curves {
            pr.write_csv(&mut w, c.name())?;
        }
        Ok(())
    }
}

/// Cross-dataset table: `ap[i][j]` is the AP of a model trained on dataset
/// `i` tested on dataset `j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossDatasetTable {
    pub names: Vec<String>,
    pub ap: Vec<Vec<f64>>,
}

impl CrossDatasetTable {
    /// For each training set, the worst AP across test sets.
    pub fn worst_case(&self) -> Vec<f64> {
        self.ap
            .iter()
            .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Each entry divided by the best AP any model reaches on that test set.
    pub fn relative_to_best(&self) -> Vec<Vec<f64>> {
        let cols = self.names.len();
        let best: Vec<f64> = (0..cols)
            .map(|j| self.ap.iter().map(|r| r[j]).fold(0.0, f64::max))
            .collect();
        self.ap
            .iter()
            .map(|r| r.iter().zip(&best).map(|(v, b)| if *b > 0.0 { v / b } else { 0.0 }).collect())
            .collect()
    }
}
