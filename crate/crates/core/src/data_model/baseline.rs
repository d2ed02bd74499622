use super::{BBox, HandSide, ImageRecord};
use crate::error::{Error, Result};

/// Median hand box(es) in normalized `[0,1]^2` image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MedianBoxes {
    All(BBox),
    PerSide { left: BBox, right: BBox },
}

impl MedianBoxes {
    /// The box to predict for a hand of the given side.
    pub fn for_side(&self, side: HandSide) -> BBox {
        match (self, side) {
            (MedianBoxes::All(b), _) => *b,
            (MedianBoxes::PerSide { left, .. }, HandSide::Left) => *left,
            (MedianBoxes::PerSide { right, .. }, HandSide::Right) => *right,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn coordinate_median(boxes: &[BBox]) -> Result<BBox> {
    let mut coords: [Vec<f64>; 4] = Default::default();
    for b in boxes {
        for (k, v) in b.to_array().into_iter().enumerate() {
            coords[k].push(v);
        }
    }
    let m = coords.map(|mut c| median(&mut c));
    // k-th order statistics of x1 stay below those of x2, so this cannot fail
    BBox::try_from(m).map_err(Error::InvalidArgument)
}

/// Coordinate-wise median of all hand boxes after normalizing each to its
/// image frame. Even counts use the mean of the two central values.
pub fn median_box(set: &[ImageRecord], per_side: bool) -> Result<MedianBoxes> {
    let normalized = |side: Option<HandSide>| -> Vec<BBox> {
        set.iter()
            .flat_map(|rec| {
                rec.hands
                    .iter()
                    .filter(move |h| side.map_or(true, |s| h.side == s))
                    .map(move |h| h.bbox.normalized(rec.width as f64, rec.height as f64))
            })
            .collect()
    };
    let group = |side: Option<HandSide>| -> Result<BBox> {
        let boxes = normalized(side);
        if boxes.is_empty() {
            let what = side.map_or("hands".to_string(), |s| format!("{s} hands"));
            return Err(Error::Empty(format!("no {what} for median box")));
        }
        coordinate_median(&boxes)
    };
    if per_side {
        Ok(MedianBoxes::PerSide {
            left: group(Some(HandSide::Left))?,
            right: group(Some(HandSide::Right))?,
        })
    } else {
        Ok(MedianBoxes::All(group(None)?))
    }
}
