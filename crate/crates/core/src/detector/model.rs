use image::RgbImage;
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::anchors::{decode_box, encode_box, grid_anchors, nms};
use super::loss::{bce_with_logit, cross_entropy_with_grad, normalize_dir, smooth_l1};
use super::targets::{compute_losses_with_grads, RoiAuxOutput};
use super::{HandDetection, LossDict, ObjectDetection, TrainConfig};
use crate::data_model::{BBox, ImageRecord};
use crate::error::{Error, Result};
use crate::nn::{
    image_to_tensor, Backbone, BackboneKind, Conv2d, ConvCache, Linear, Mlp, MlpCache, Param,
    Parameterized, RoiAlign,
};

const RPN_BOX_WEIGHTS: [f64; 4] = [1.0, 1.0, 1.0, 1.0];
const ROI_BOX_WEIGHTS: [f64; 4] = [10.0, 10.0, 5.0, 5.0];
const CLASS_HAND: usize = 1;
const CLASS_OBJECT: usize = 2;
const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    pub anchor_sizes: Vec<f64>,
    pub anchor_ratios: Vec<f64>,
    /// ROI-align output side.
    pub roi_pool: usize,
    /// A second, enlarged ROI (this factor around the box) is pooled for context.
    pub context_scale: f64,
    pub hidden: usize,
    pub aux_hidden: usize,
    pub pre_nms_top: usize,
    pub post_nms_top: usize,
    pub rpn_nms: f64,
    pub det_nms: f64,
    /// Detections scoring below this are not emitted.
    pub score_floor: f64,
    pub max_detections: usize,
    pub min_box: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::Tiny,
            anchor_sizes: vec![12.0, 20.0, 32.0],
            anchor_ratios: vec![0.5, 1.0, 2.0],
            roi_pool: 4,
            context_scale: 2.5,
            hidden: 128,
            aux_hidden: 64,
            pre_nms_top: 300,
            post_nms_top: 64,
            rpn_nms: 0.7,
            det_nms: 0.3,
            score_floor: 0.05,
            max_detections: 50,
            min_box: 2.0,
        }
    }
}

/// Second-stage heads. Every head reads the same pooled ROI feature.
#[derive(Debug, Clone)]
struct RoiHeads {
    box_head: Mlp,
    cls: Linear,
    bbox: Linear,
    side: Mlp,
    state: Mlp,
    dir: Mlp,
    mag: Mlp,
}

#[derive(Debug, Clone)]
pub struct DetectorModel {
    pub config: ModelConfig,
    backbone: Backbone,
    rpn_conv: Conv2d,
    rpn_cls: Conv2d,
    rpn_box: Conv2d,
    heads: RoiHeads,
}

struct RpnOut {
    hidden: Array3<f32>,
    hidden_cache: ConvCache,
    cls: Array3<f32>,
    cls_cache: ConvCache,
    deltas: Array3<f32>,
    deltas_cache: ConvCache,
}

struct RoiOut {
    pooled: Array2<f32>,
    head_cache: MlpCache,
    feature: Array2<f32>,
    cls: Array2<f32>,
    bbox: Array2<f32>,
    side: (Array2<f32>, MlpCache),
    state: (Array2<f32>, MlpCache),
    dir: (Array2<f32>, MlpCache),
    mag: (Array2<f32>, MlpCache),
}

fn softmax64(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Stable sort of indices by descending score.
fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

impl DetectorModel {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backbone = Backbone::new(config.backbone, &mut rng);
        let c = backbone.channels();
        let a = config.anchor_sizes.len() * config.anchor_ratios.len();
        let feat_dim = 2 * c * config.roi_pool * config.roi_pool;
        let (h, ah) = (config.hidden, config.aux_hidden);
        let mut out_conv = |name: &str, o: usize| {
            let mut conv = Conv2d::new(name, c, o, 1, 1, 0, &mut rng);
            conv.weight.value.iter_mut().for_each(|w| *w *= 0.1);
            conv
        };
        let rpn_cls = out_conv("rpn.cls", a);
        let rpn_box = out_conv("rpn.box", 4 * a);
        let rpn_conv = Conv2d::new("rpn.conv", c, c, 3, 1, 1, &mut rng);
        let heads = RoiHeads {
            box_head: Mlp::new("roi.fc", &[feat_dim, h, h], &mut rng),
            cls: Linear::new_output("roi.cls", h, NUM_CLASSES, 0.01, &mut rng),
            bbox: Linear::new_output("roi.bbox", h, 4 * (NUM_CLASSES - 1), 0.001, &mut rng),
            side: Mlp::new("aux.side", &[h, ah, 2], &mut rng),
            state: Mlp::new("aux.state", &[h, ah, 5], &mut rng),
            dir: Mlp::new("aux.dir", &[h, ah, 2], &mut rng),
            mag: Mlp::new("aux.mag", &[h, ah, 1], &mut rng),
        };
        Self {
            config,
            backbone,
            rpn_conv,
            rpn_cls,
            rpn_box,
            heads,
        }
    }

    fn roi_align(&self) -> RoiAlign {
        RoiAlign {
            out: self.config.roi_pool,
            samples: 2,
            scale: 1.0 / self.backbone.stride() as f32,
        }
    }

    fn check_size(&self, x: &Array3<f32>) -> Result<()> {
        let (c, h, w) = x.dim();
        let min = self.backbone.kind.min_input();
        if c != 3 || h < min || w < min {
            return Err(Error::InvalidArgument(format!(
                "input {c}x{h}x{w} below backbone minimum 3x{min}x{min}"
            )));
        }
        Ok(())
    }

    fn rpn(&self, feat: &Array3<f32>) -> RpnOut {
        let (mut hidden, hidden_cache) = self.rpn_conv.forward(feat);
        hidden.mapv_inplace(|v| v.max(0.0));
        let (cls, cls_cache) = self.rpn_cls.forward(&hidden);
        let (deltas, deltas_cache) = self.rpn_box.forward(&hidden);
        RpnOut {
            hidden,
            hidden_cache,
            cls,
            cls_cache,
            deltas,
            deltas_cache,
        }
    }

    fn anchors(&self, feat: &Array3<f32>) -> Vec<BBox> {
        let (_, fh, fw) = feat.dim();
        grid_anchors(
            fh,
            fw,
            self.backbone.stride(),
            &self.config.anchor_sizes,
            &self.config.anchor_ratios,
        )
    }

    fn anchor_delta(rpn: &RpnOut, i: usize, fh: usize, fw: usize) -> [f64; 4] {
        let (a, rem) = (i / (fh * fw), i % (fh * fw));
        let (y, x) = (rem / fw, rem % fw);
        let mut d = [0.0; 4];
        for (k, v) in d.iter_mut().enumerate() {
            *v = rpn.deltas[[a * 4 + k, y, x]] as f64;
        }
        d
    }

    fn proposals(&self, rpn: &RpnOut, anchors: &[BBox], img_w: f64, img_h: f64) -> Vec<BBox> {
        let (_, fh, fw) = rpn.cls.dim();
        let logits = rpn.cls.as_standard_layout();
        let logits = logits.as_slice().expect("contiguous");
        let mut boxes = Vec::new();
        let mut scores = Vec::new();
        for (i, anchor) in anchors.iter().enumerate() {
            let raw = decode_box(anchor, Self::anchor_delta(rpn, i, fh, fw), RPN_BOX_WEIGHTS);
            let Ok(b) = BBox::try_from(raw) else { continue };
            let Some(b) = b.clamp_to(img_w, img_h) else { continue };
            if b.width() < self.config.min_box || b.height() < self.config.min_box {
                continue;
            }
            boxes.push(b);
            scores.push(logits[i] as f64);
        }
        let mut order = rank_desc(&scores);
        order.truncate(self.config.pre_nms_top);
        let mut keep = nms(&boxes, &order, self.config.rpn_nms);
        keep.truncate(self.config.post_nms_top);
        keep.into_iter().map(|i| boxes[i]).collect()
    }

    fn pool_rois(&self, feat: &Array3<f32>, rois: &[BBox]) -> Array2<f32> {
        let ra = self.roi_align();
        let c = feat.dim().0;
        let part = c * ra.out * ra.out;
        let mut pooled = Array2::<f32>::zeros((rois.len(), 2 * part));
        for (i, b) in rois.iter().enumerate() {
            let mut row = pooled.row_mut(i);
            let inner = ra.forward(feat, f32_box(b));
            let ctx = ra.forward(feat, f32_box(&b.scaled(self.config.context_scale)));
            for (k, v) in inner.into_iter().chain(ctx).enumerate() {
                row[k] = v;
            }
        }
        pooled
    }

    fn roi_forward(&self, feat: &Array3<f32>, rois: &[BBox]) -> RoiOut {
        let pooled = self.pool_rois(feat, rois);
        let (mut feature, head_cache) = self.heads.box_head.forward(&pooled);
        feature.mapv_inplace(|v| v.max(0.0));
        RoiOut {
            cls: self.heads.cls.forward(&feature),
            bbox: self.heads.bbox.forward(&feature),
            side: self.heads.side.forward(&feature),
            state: self.heads.state.forward(&feature),
            dir: self.heads.dir.forward(&feature),
            mag: self.heads.mag.forward(&feature),
            pooled,
            head_cache,
            feature,
        }
    }

    /// Detects hands and objects in one `(3, H, W)` image tensor.
    pub fn forward(&self, x: &Array3<f32>) -> Result<(Vec<HandDetection>, Vec<ObjectDetection>)> {
        self.check_size(x)?;
        let (_, img_h, img_w) = x.dim();
        let (img_w, img_h) = (img_w as f64, img_h as f64);
        let (feat, _) = self.backbone.forward(x);
        let rpn = self.rpn(&feat);
        let anchors = self.anchors(&feat);
        let proposals = self.proposals(&rpn, &anchors, img_w, img_h);
        if proposals.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let out = self.roi_forward(&feat, &proposals);

        let mut cand: [Vec<(BBox, f64, usize)>; 2] = [Vec::new(), Vec::new()];
        for (i, prop) in proposals.iter().enumerate() {
            let probs = softmax64(out.cls.row(i).as_slice().expect("row"));
            for (slot, class) in [CLASS_HAND, CLASS_OBJECT].into_iter().enumerate() {
                let score = probs[class];
                if score < self.config.score_floor {
                    continue;
                }
                let mut d = [0.0; 4];
                for (k, v) in d.iter_mut().enumerate() {
                    *v = out.bbox[[i, slot * 4 + k]] as f64;
                }
                let raw = decode_box(prop, d, ROI_BOX_WEIGHTS);
                let Some(b) = BBox::try_from(raw).ok().and_then(|b| b.clamp_to(img_w, img_h)) else {
                    continue;
                };
                cand[slot].push((b, score, i));
            }
        }
        let kept = |c: &Vec<(BBox, f64, usize)>| -> Vec<(BBox, f64, usize)> {
            let boxes: Vec<BBox> = c.iter().map(|t| t.0).collect();
            let scores: Vec<f64> = c.iter().map(|t| t.1).collect();
            let mut keep = nms(&boxes, &rank_desc(&scores), self.config.det_nms);
            keep.truncate(self.config.max_detections);
            keep.into_iter().map(|k| c[k]).collect()
        };

        let hands = kept(&cand[0])
            .into_iter()
            .map(|(bbox, score, i)| {
                let side = softmax64(out.side.0.row(i).as_slice().expect("row"));
                let state = softmax64(out.state.0.row(i).as_slice().expect("row"));
                let dir = normalize_dir([out.dir.0[[i, 0]] as f64, out.dir.0[[i, 1]] as f64]);
                HandDetection {
                    bbox,
                    score,
                    side_probs: [side[0], side[1]],
                    state_probs: [state[0], state[1], state[2], state[3], state[4]],
                    offset_dir: dir,
                    offset_mag: (out.mag.0[[i, 0]] as f64).max(0.0),
                }
            })
            .collect();
        let objects = kept(&cand[1])
            .into_iter()
            .map(|(bbox, score, _)| ObjectDetection { bbox, score })
            .collect();
        Ok((hands, objects))
    }

    pub fn detect(&self, img: &RgbImage) -> Result<(Vec<HandDetection>, Vec<ObjectDetection>)> {
        self.forward(&image_to_tensor(img))
    }

    /// Runs [`DetectorModel::forward`] over a batch; output order follows input.
    pub fn forward_batch(
        &self,
        images: &[Array3<f32>],
    ) -> Result<Vec<(Vec<HandDetection>, Vec<ObjectDetection>)>> {
        images.par_iter().map(|x| self.forward(x)).collect()
    }

    /// One forward/backward pass on a single training image. Gradients of
    /// the weighted total loss accumulate into the parameters.
    pub(crate) fn accumulate_image(
        &mut self,
        x: &Array3<f32>,
        gt: &ImageRecord,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossDict> {
        self.check_size(x)?;
        let (_, img_h, img_w) = x.dim();
        let (img_w, img_h) = (img_w as f64, img_h as f64);
        let gt_boxes: Vec<(BBox, usize)> = gt
            .hands
            .iter()
            .map(|h| (h.bbox, CLASS_HAND))
            .chain(gt.objects.iter().map(|o| (*o, CLASS_OBJECT)))
            .collect();

        let (feat, bb_cache) = self.backbone.forward(x);
        let rpn = self.rpn(&feat);
        let anchors = self.anchors(&feat);
        let (_, fh, fw) = feat.dim();

        // proposal stage
        let mut d_cls = Array3::<f32>::zeros(rpn.cls.dim());
        let mut d_deltas = Array3::<f32>::zeros(rpn.deltas.dim());
        let (rpn_cls_loss, rpn_box_loss) =
            self.rpn_targets(&rpn, &anchors, &gt_boxes, cfg, rng, (fh, fw), &mut d_cls, &mut d_deltas);

        // second stage
        let mut rois = self.proposals(&rpn, &anchors, img_w, img_h);
        rois.extend(gt_boxes.iter().map(|g| g.0));
        let (rois, labels) = sample_rois(&rois, &gt_boxes, cfg, rng);
        let out = self.roi_forward(&feat, &rois);
        let r = rois.len() as f64;

        let mut d_cls_roi = Array2::<f32>::zeros(out.cls.dim());
        let mut d_bbox = Array2::<f32>::zeros(out.bbox.dim());
        let mut roi_cls_loss = 0.0;
        let mut roi_box_loss = 0.0;
        let mut aux = Vec::with_capacity(rois.len());
        for (i, (roi, label)) in rois.iter().zip(&labels).enumerate() {
            let logits: Vec<f64> = out.cls.row(i).iter().map(|&v| v as f64).collect();
            let class = label.map_or(0, |g| gt_boxes[g].1);
            let (l, g) = cross_entropy_with_grad(&logits, class);
            roi_cls_loss += l / r;
            for k in 0..NUM_CLASSES {
                d_cls_roi[[i, k]] = (g[k] / r) as f32;
            }
            if let Some(gi) = label {
                let slot = if class == CLASS_HAND { 0 } else { 1 };
                let target = encode_box(roi, &gt_boxes[*gi].0, ROI_BOX_WEIGHTS);
                for k in 0..4 {
                    let (l, g) = smooth_l1(out.bbox[[i, slot * 4 + k]] as f64 - target[k], 1.0);
                    roi_box_loss += l / r;
                    d_bbox[[i, slot * 4 + k]] = (g / r) as f32;
                }
            }
            let row = |a: &Array2<f32>| -> Vec<f64> { a.row(i).iter().map(|&v| v as f64).collect() };
            let (side, state, dir) = (row(&out.side.0), row(&out.state.0), row(&out.dir.0));
            aux.push(RoiAuxOutput {
                side_logits: [side[0], side[1]],
                state_logits: [state[0], state[1], state[2], state[3], state[4]],
                dir_raw: [dir[0], dir[1]],
                mag: out.mag.0[[i, 0]] as f64,
                matched_hand: label.filter(|&g| gt_boxes[g].1 == CLASS_HAND),
            });
        }
        let l_det = rpn_cls_loss + rpn_box_loss + roi_cls_loss + roi_box_loss;
        let (losses, aux_grads) = compute_losses_with_grads(&aux, gt, l_det, &cfg.weights)?;
        if !losses.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: 0,
                detail: format!("image {}: {losses:?}", gt.image_id),
            });
        }

        let w = &cfg.weights;
        let n = rois.len();
        let mut d_side = Array2::<f32>::zeros((n, 2));
        let mut d_state = Array2::<f32>::zeros((n, 5));
        let mut d_dir = Array2::<f32>::zeros((n, 2));
        let mut d_mag = Array2::<f32>::zeros((n, 1));
        for (i, g) in aux_grads.iter().enumerate() {
            for k in 0..2 {
                d_side[[i, k]] = (w.side * g.side[k]) as f32;
                d_dir[[i, k]] = (w.ori * g.dir[k]) as f32;
            }
            for k in 0..5 {
                d_state[[i, k]] = (w.state * g.state[k]) as f32;
            }
            d_mag[[i, 0]] = (w.mag * g.mag) as f32;
        }

        let heads = &mut self.heads;
        let mut d_feature = heads.cls.backward(&out.feature, &d_cls_roi);
        d_feature += &heads.bbox.backward(&out.feature, &d_bbox);
        d_feature += &heads.side.backward(&out.side.1, &d_side);
        d_feature += &heads.state.backward(&out.state.1, &d_state);
        d_feature += &heads.dir.backward(&out.dir.1, &d_dir);
        d_feature += &heads.mag.backward(&out.mag.1, &d_mag);
        d_feature.zip_mut_with(&out.feature, |g, a| {
            if *a <= 0.0 {
                *g = 0.0
            }
        });
        let d_pooled = heads.box_head.backward(&out.head_cache, &d_feature);
        debug_assert_eq!(d_pooled.dim(), out.pooled.dim());

        let mut d_feat = Array3::<f32>::zeros(feat.dim());
        let ra = self.roi_align();
        let part = feat.dim().0 * ra.out * ra.out;
        for (i, b) in rois.iter().enumerate() {
            let row = d_pooled.row(i);
            let row = row.as_slice().expect("row");
            ra.backward(&mut d_feat, f32_box(b), &row[..part]);
            ra.backward(&mut d_feat, f32_box(&b.scaled(self.config.context_scale)), &row[part..]);
        }

        let mut d_hidden = self.rpn_cls.backward(&rpn.cls_cache, &d_cls);
        d_hidden += &self.rpn_box.backward(&rpn.deltas_cache, &d_deltas);
        d_hidden.zip_mut_with(&rpn.hidden, |g, a| {
            if *a <= 0.0 {
                *g = 0.0
            }
        });
        d_feat += &self.rpn_conv.backward(&rpn.hidden_cache, &d_hidden);
        self.backbone.backward(&bb_cache, &d_feat);
        Ok(losses)
    }

    #[allow(clippy::too_many_arguments)]
    fn rpn_targets(
        &self,
        rpn: &RpnOut,
        anchors: &[BBox],
        gt_boxes: &[(BBox, usize)],
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
        (fh, fw): (usize, usize),
        d_cls: &mut Array3<f32>,
        d_deltas: &mut Array3<f32>,
    ) -> (f64, f64) {
        // 1 = positive, 0 = negative, -1 = ignored
        let mut label = vec![-1i8; anchors.len()];
        let mut best_gt = vec![0usize; anchors.len()];
        let mut best_for_gt = vec![0.0f64; gt_boxes.len()];
        let mut ious = vec![0.0f64; anchors.len() * gt_boxes.len().max(1)];
        for (i, a) in anchors.iter().enumerate() {
            let mut best = 0.0;
            for (g, (gb, _)) in gt_boxes.iter().enumerate() {
                let v = a.iou(gb);
                ious[i * gt_boxes.len() + g] = v;
                if v > best {
                    best = v;
                    best_gt[i] = g;
                }
                if v > best_for_gt[g] {
                    best_for_gt[g] = v;
                }
            }
            if best >= 0.7 {
                label[i] = 1;
            } else if best < 0.3 {
                label[i] = 0;
            }
        }
        for (g, &best) in best_for_gt.iter().enumerate() {
            if best <= 0.0 {
                continue;
            }
            for i in 0..anchors.len() {
                if ious[i * gt_boxes.len() + g] == best {
                    label[i] = 1;
                    best_gt[i] = g;
                }
            }
        }
        let mut pos: Vec<usize> = (0..anchors.len()).filter(|&i| label[i] == 1).collect();
        let mut neg: Vec<usize> = (0..anchors.len()).filter(|&i| label[i] == 0).collect();
        pos.shuffle(rng);
        neg.shuffle(rng);
        pos.truncate(cfg.rpn_batch / 2);
        neg.truncate(cfg.rpn_batch - pos.len());
        let n = (pos.len() + neg.len()).max(1) as f64;

        let at = |i: usize| (i / (fh * fw), (i % (fh * fw)) / fw, i % fw);
        let mut cls_loss = 0.0;
        let mut box_loss = 0.0;
        for (&i, target) in pos.iter().map(|i| (i, 1.0)).chain(neg.iter().map(|i| (i, 0.0))) {
            let (a, y, x) = at(i);
            let (l, g) = bce_with_logit(rpn.cls[[a, y, x]] as f64, target);
            cls_loss += l / n;
            d_cls[[a, y, x]] = (g / n) as f32;
        }
        for &i in &pos {
            let (a, y, x) = at(i);
            let t = encode_box(&anchors[i], &gt_boxes[best_gt[i]].0, RPN_BOX_WEIGHTS);
            for k in 0..4 {
                let (l, g) = smooth_l1(rpn.deltas[[a * 4 + k, y, x]] as f64 - t[k], 1.0 / 9.0);
                box_loss += l / n;
                d_deltas[[a * 4 + k, y, x]] = (g / n) as f32;
            }
        }
        (cls_loss, box_loss)
    }
}

/// Samples second-stage ROIs; returns boxes and matched ground-truth
/// indices (`None` for background).
fn sample_rois(
    rois: &[BBox],
    gt_boxes: &[(BBox, usize)],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<BBox>, Vec<Option<usize>>) {
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (i, r) in rois.iter().enumerate() {
        let mut best = (0.0, 0usize);
        for (g, (gb, _)) in gt_boxes.iter().enumerate() {
            let v = r.iou(gb);
            if v > best.0 {
                best = (v, g);
            }
        }
        if best.0 >= 0.5 {
            fg.push((i, Some(best.1)));
        } else {
            bg.push((i, None));
        }
    }
    fg.shuffle(rng);
    bg.shuffle(rng);
    let max_fg = ((cfg.roi_batch as f64 * cfg.roi_fg_fraction).round() as usize).max(1);
    fg.truncate(max_fg);
    bg.truncate(cfg.roi_batch.saturating_sub(fg.len()));
    let mut picked: Vec<(usize, Option<usize>)> = fg.into_iter().chain(bg).collect();
    // fixed order so loss sums do not depend on the shuffle
    picked.sort_by_key(|p| p.0);
    picked.into_iter().map(|(i, g)| (rois[i], g)).unzip()
}

fn f32_box(b: &BBox) -> [f32; 4] {
    let a = b.to_array();
    [a[0] as f32, a[1] as f32, a[2] as f32, a[3] as f32]
}

impl Parameterized for DetectorModel {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.backbone.visit_params(f);
        for c in [&self.rpn_conv, &self.rpn_cls, &self.rpn_box] {
            f(&c.weight);
            f(&c.bias);
        }
        let h = &self.heads;
        h.box_head.visit_params(f);
        h.cls.visit_params(f);
        h.bbox.visit_params(f);
        for m in [&h.side, &h.state, &h.dir, &h.mag] {
            m.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.backbone.visit_params_mut(f);
        for c in [&mut self.rpn_conv, &mut self.rpn_cls, &mut self.rpn_box] {
            f(&mut c.weight);
            f(&mut c.bias);
        }
        let h = &mut self.heads;
        h.box_head.visit_params_mut(f);
        h.cls.visit_params_mut(f);
        h.bbox.visit_params_mut(f);
        for m in [&mut h.side, &mut h.state, &mut h.dir, &mut h.mag] {
            m.visit_params_mut(f);
        }
    }
}
