use crate::data_model::BBox;

/// Largest log-scale change applied when decoding deltas.
const MAX_LOG_SCALE: f64 = 4.135_166_556_742_356; // ln(1000 / 16)

/// Regression target `(dx, dy, dw, dh)` taking `from` onto `to`, divided by
/// per-coordinate `weights`.
pub fn encode_box(from: &BBox, to: &BBox, weights: [f64; 4]) -> [f64; 4] {
    let (fc, tc) = (from.center(), to.center());
    [
        weights[0] * (tc.x - fc.x) / from.width(),
        weights[1] * (tc.y - fc.y) / from.height(),
        weights[2] * (to.width() / from.width()).ln(),
        weights[3] * (to.height() / from.height()).ln(),
    ]
}

/// Inverse of [`encode_box`]. Returns raw coordinates, possibly degenerate
/// after clipping; callers validate.
pub fn decode_box(from: &BBox, d: [f64; 4], weights: [f64; 4]) -> [f64; 4] {
    let c = from.center();
    let dx = d[0] / weights[0];
    let dy = d[1] / weights[1];
    let dw = (d[2] / weights[2]).clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE);
    let dh = (d[3] / weights[3]).clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE);
    let cx = c.x + dx * from.width();
    let cy = c.y + dy * from.height();
    let w = from.width() * dw.exp();
    let h = from.height() * dh.exp();
    [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]
}

/// Greedy non-maximum suppression. `order` must already be sorted by
/// descending score; returns kept positions into `boxes`.
pub fn nms(boxes: &[BBox], order: &[usize], iou_thresh: f64) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for &i in order {
        if keep.iter().all(|&k| boxes[k].iou(&boxes[i]) <= iou_thresh) {
            keep.push(i);
        }
    }
    keep
}

/// Anchor boxes for every feature-map cell, ordered `(anchor, y, x)` to
/// match the channel layout of the proposal head.
pub(crate) fn grid_anchors(
    fh: usize,
    fw: usize,
    stride: usize,
    sizes: &[f64],
    ratios: &[f64],
) -> Vec<BBox> {
    let shapes: Vec<(f64, f64)> = sizes
        .iter()
        .flat_map(|&s| ratios.iter().map(move |&r| (s / r.sqrt(), s * r.sqrt())))
        .collect();
    let mut out = Vec::with_capacity(shapes.len() * fh * fw);
    for &(w, h) in &shapes {
        for y in 0..fh {
            for x in 0..fw {
                let cx = (x as f64 + 0.5) * stride as f64;
                let cy = (y as f64 + 0.5) * stride as f64;
                out.push(
                    BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
                        .expect("positive anchor size"),
                );
            }
        }
    }
    out
}
