use super::loss::{cross_entropy_with_grad, magnitude_with_grad, orientation_raw_with_grad};
use super::{LossDict, LossWeights, OffsetTarget};
use crate::data_model::{BBox, ImageRecord};
use crate::error::{Error, Result};

/// Offset target from a hand box to its object box.
///
/// Direction is the unit vector between box centers; magnitude is the
/// center distance over the image diagonal. Centers closer than `1e-6` of
/// the diagonal give an invalid target with direction `(1, 0)` and magnitude 0.
pub fn encode_offset(hand: &BBox, object: &BBox, image_size: (u32, u32)) -> Result<OffsetTarget> {
    let (w, h) = image_size;
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate image size {w}x{h}"
        )));
    }
    let diag = (w as f64).hypot(h as f64);
    let hc = hand.center();
    let oc = object.center();
    let (dx, dy) = (oc.x - hc.x, oc.y - hc.y);
    let dist = dx.hypot(dy);
    if dist < 1e-6 * diag {
        return Ok(OffsetTarget {
            dir: [1.0, 0.0],
            mag: 0.0,
            valid: false,
        });
    }
    Ok(OffsetTarget {
        dir: [dx / dist, dy / dist],
        mag: dist / diag,
        valid: true,
    })
}

/// Raw auxiliary outputs of one ROI plus its ground-truth assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiAuxOutput {
    pub side_logits: [f64; 2],
    pub state_logits: [f64; 5],
    /// Unnormalized direction output; normalized before the loss.
    pub dir_raw: [f64; 2],
    pub mag: f64,
    /// Index of the ground-truth hand this ROI was matched to, if any.
    pub matched_hand: Option<usize>,
}

/// Gradients of the *unweighted, averaged* auxiliary losses per ROI.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuxGrads {
    pub side: [f64; 2],
    pub state: [f64; 5],
    pub dir: [f64; 2],
    pub mag: f64,
}

/// Auxiliary losses for one image given ROI-to-hand matches.
///
/// Side and state losses average over ROIs matched to ground-truth hands;
/// orientation and magnitude average over the subset whose hand is in
/// contact with a boxed entity and has a valid offset target. Empty masks
/// give zero. `l_det` is passed through from the base detector.
pub fn compute_losses(
    rois: &[RoiAuxOutput],
    gt: &ImageRecord,
    l_det: f64,
    weights: &LossWeights,
) -> Result<LossDict> {
    compute_losses_with_grads(rois, gt, l_det, weights).map(|(l, _)| l)
}

pub(crate) fn compute_losses_with_grads(
    rois: &[RoiAuxOutput],
    gt: &ImageRecord,
    l_det: f64,
    weights: &LossWeights,
) -> Result<(LossDict, Vec<AuxGrads>)> {
    let mut grads = vec![AuxGrads::default(); rois.len()];
    let mut targets = Vec::with_capacity(rois.len());
    let (mut n_cls, mut n_off) = (0usize, 0usize);
    for roi in rois {
        let target = match roi.matched_hand {
            Some(i) => {
                let hand = gt.hands.get(i).ok_or_else(|| {
                    Error::InvalidArgument(format!("ROI matched to missing hand {i}"))
                })?;
                n_cls += 1;
                let off = if hand.state.has_object() {
                    gt.linked_object(hand)
                        .map(|obj| encode_offset(&hand.bbox, obj, (gt.width, gt.height)))
                        .transpose()?
                        .filter(|t| t.valid)
                } else {
                    None
                };
                if off.is_some() {
                    n_off += 1;
                }
                Some((hand, off))
            }
            None => None,
        };
        targets.push(target);
    }

    let mut loss = LossDict {
        l_det,
        ..Default::default()
    };
    for (roi, (target, g)) in rois.iter().zip(targets.iter().zip(grads.iter_mut())) {
        let Some((hand, off)) = target else { continue };
        let inv = 1.0 / n_cls as f64;
        let (l, d) = cross_entropy_with_grad(&roi.side_logits, hand.side.code() as usize);
        loss.l_side += l * inv;
        g.side = [d[0] * inv, d[1] * inv];
        let (l, d) = cross_entropy_with_grad(&roi.state_logits, hand.state.code() as usize);
        loss.l_state += l * inv;
        for k in 0..5 {
            g.state[k] = d[k] * inv;
        }
        if let Some(t) = off {
            let inv = 1.0 / n_off as f64;
            let (l, d) = orientation_raw_with_grad(roi.dir_raw, t.dir);
            loss.l_ori += l * inv;
            g.dir = [d[0] * inv, d[1] * inv];
            let (l, d) = magnitude_with_grad(roi.mag, t.mag);
            loss.l_mag += l * inv;
            g.mag = d * inv;
        }
    }
    Ok((loss.with_total(weights), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{ContactState, HandAnnotation, HandSide};

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn encode_offset_examples() {
        let t = encode_offset(&b(0., 0., 10., 10.), &b(20., 0., 30., 10.), (100, 100)).unwrap();
        assert!(t.valid);
        assert_eq!(t.dir, [1.0, 0.0]);
        assert!((t.mag - 0.141421356).abs() < 1e-8);

        let same = encode_offset(&b(0., 0., 10., 10.), &b(0., 0., 10., 10.), (100, 100)).unwrap();
        assert!(!same.valid);
        assert_eq!(same.mag, 0.0);

        let below = encode_offset(&b(0., 0., 10., 10.), &b(0., 37., 10., 47.), (100, 100)).unwrap();
        assert_eq!(below.dir, [0.0, 1.0]);
        assert!((below.mag - 37.0 / 100f64.hypot(100.0)).abs() < 1e-12);

        assert!(encode_offset(&b(0., 0., 1., 1.), &b(2., 2., 3., 3.), (0, 10)).is_err());
    }

    fn scene() -> ImageRecord {
        ImageRecord {
            image_id: "s".into(),
            uploader_id: "u".into(),
            width: 100,
            height: 100,
            hands: vec![
                HandAnnotation {
                    bbox: b(0., 0., 10., 10.),
                    side: HandSide::Left,
                    state: ContactState::PortableObject,
                    object_index: Some(0),
                },
                HandAnnotation {
                    bbox: b(50., 50., 60., 60.),
                    side: HandSide::Right,
                    state: ContactState::NoContact,
                    object_index: None,
                },
            ],
            // object directly below hand 0
            objects: vec![b(0., 20., 10., 30.)],
        }
    }

    fn roi(matched: Option<usize>, dir: [f64; 2], mag: f64) -> RoiAuxOutput {
        RoiAuxOutput {
            side_logits: [0.0, 0.0],
            state_logits: [0.0; 5],
            dir_raw: dir,
            mag,
            matched_hand: matched,
        }
    }

    #[test]
    fn zero_hands_give_zero_aux_losses() {
        let mut gt = scene();
        gt.hands.clear();
        gt.objects.clear();
        let l = compute_losses(&[roi(None, [1.0, 0.0], 0.3)], &gt, 0.5, &LossWeights::default()).unwrap();
        assert_eq!((l.l_side, l.l_state, l.l_ori, l.l_mag), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(l.total, 0.5);
    }

    #[test]
    fn one_contacted_hand_orthogonal_direction() {
        let gt = scene();
        let m_gt = 20.0 / 100f64.hypot(100.0);
        // target direction is (0,1); predict (1,0)
        let l = compute_losses(&[roi(Some(0), [1.0, 0.0], m_gt)], &gt, 0.0, &LossWeights::default()).unwrap();
        assert!((l.l_ori - 2.0).abs() < 1e-12);
        assert!(l.l_mag.abs() < 1e-15);
    }

    #[test]
    fn exact_predictions_give_zero_aux_loss() {
        let gt = scene();
        let m_gt = 20.0 / 100f64.hypot(100.0);
        let big = 60.0;
        let mut r0 = roi(Some(0), [0.0, 3.0], m_gt);
        r0.side_logits = [big, -big];
        r0.state_logits = [-big, -big, -big, big, -big];
        let mut r1 = roi(Some(1), [0.3, 0.1], 0.7);
        r1.side_logits = [-big, big];
        r1.state_logits = [big, -big, -big, -big, -big];
        let l = compute_losses(&[r0, r1], &gt, 0.0, &LossWeights::default()).unwrap();
        assert!(l.l_side < 1e-20 && l.l_state < 1e-20);
        assert_eq!((l.l_ori, l.l_mag), (0.0, 0.0));
    }

    #[test]
    fn unmatched_rois_do_not_change_aux_losses() {
        let gt = scene();
        let base = vec![roi(Some(0), [0.2, 0.9], 0.1), roi(Some(1), [0.5, 0.5], 0.4)];
        let a = compute_losses(&base, &gt, 0.0, &LossWeights::default()).unwrap();
        let mut more = base.clone();
        more.insert(1, roi(None, [-1.0, 0.0], 9.0));
        more.push(roi(None, [0.0, -1.0], 3.0));
        let b = compute_losses(&more, &gt, 0.0, &LossWeights::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weights_exclude_terms_from_total() {
        let gt = scene();
        let w = LossWeights {
            side: 0.1,
            state: 0.1,
            ori: 0.0,
            mag: 0.0,
        };
        let l = compute_losses(&[roi(Some(0), [1.0, 0.0], 0.9)], &gt, 1.0, &w).unwrap();
        assert!(l.l_ori > 0.0 && l.l_mag > 0.0);
        assert!((l.total - (1.0 + 0.1 * l.l_side + 0.1 * l.l_state)).abs() < 1e-12);
    }
}
