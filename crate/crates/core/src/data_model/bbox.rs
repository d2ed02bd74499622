use serde::{Deserialize, Serialize};

/// A 2D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned box `(x1, y1, x2, y2)` with `x1 < x2` and `y1 < y2`.
///
/// Serialized as a four-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = String;

    fn try_from(v: [f64; 4]) -> Result<Self, String> {
        let b = BBox {
            x1: v[0],
            y1: v[1],
            x2: v[2],
            y2: v[3],
        };
        b.validate()?;
        Ok(b)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, String> {
        Self::try_from([x1, y1, x2, y2])
    }

    /// Box of the given size centered on `c`.
    pub fn from_center(c: Point, w: f64, h: f64) -> Result<Self, String> {
        Self::new(c.x - w / 2.0, c.y - h / 2.0, c.x + w / 2.0, c.y + h / 2.0)
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let v = self.to_array();
        if v.iter().any(|c| !c.is_finite()) {
            return Err(format!("non-finite box coordinates {v:?}"));
        }
        if !(self.x1 < self.x2 && self.y1 < self.y2) {
            return Err(format!("degenerate box {v:?}"));
        }
        Ok(())
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Closed-box containment: points on the boundary count as inside.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x1 && p.x <= self.x2 && p.y >= self.y1 && p.y <= self.y2
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union, in `[0, 1]`.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Box with the same center and each side scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> BBox {
        let c = self.center();
        let (hw, hh) = (self.width() * factor / 2.0, self.height() * factor / 2.0);
        BBox {
            x1: c.x - hw,
            y1: c.y - hh,
            x2: c.x + hw,
            y2: c.y + hh,
        }
    }

    /// Clamps to `[0, w] x [0, h]`; `None` when nothing of the box remains.
    pub fn clamp_to(&self, w: f64, h: f64) -> Option<BBox> {
        BBox::new(
            self.x1.clamp(0.0, w),
            self.y1.clamp(0.0, h),
            self.x2.clamp(0.0, w),
            self.y2.clamp(0.0, h),
        )
        .ok()
    }

    /// Maps the box into the unit square of a `w x h` image.
    pub fn normalized(&self, w: f64, h: f64) -> BBox {
        BBox {
            x1: self.x1 / w,
            y1: self.y1 / h,
            x2: self.x2 / w,
            y2: self.y2 / h,
        }
    }

    /// Inverse of [`BBox::normalized`].
    pub fn denormalized(&self, w: f64, h: f64) -> BBox {
        BBox {
            x1: self.x1 * w,
            y1: self.y1 * h,
            x2: self.x2 * w,
            y2: self.y2 * h,
        }
    }

    /// Axis-aligned hull of a quadrilateral (or any polygon).
    pub fn from_polygon(points: &[Point]) -> Result<BBox, String> {
        if points.is_empty() {
            return Err("empty polygon".into());
        }
        let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&Point) -> f64| {
            points.iter().map(sel).fold(init, f)
        };
        BBox::new(
            fold(f64::min, f64::INFINITY, |p| p.x),
            fold(f64::min, f64::INFINITY, |p| p.y),
            fold(f64::max, f64::NEG_INFINITY, |p| p.x),
            fold(f64::max, f64::NEG_INFINITY, |p| p.y),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_examples() {
        assert_eq!(b(0., 0., 10., 10.).iou(&b(0., 0., 10., 10.)), 1.0);
        assert_eq!(b(0., 0., 10., 10.).iou(&b(20., 20., 30., 30.)), 0.0);
        let v = b(0., 0., 10., 10.).iou(&b(5., 0., 15., 10.));
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_and_non_finite() {
        assert!(BBox::new(1.0, 0.0, 1.0, 5.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 5.0).is_err());
        assert!(serde_json::from_str::<BBox>("[5,5,1,1]").is_err());
    }

    #[test]
    fn corner_clamp_is_never_empty_when_overlapping() {
        let c = b(-5.0, -5.0, 5.0, 5.0).clamp_to(100.0, 100.0).unwrap();
        assert_eq!(c.to_array(), [0.0, 0.0, 5.0, 5.0]);
        assert!(b(120.0, 0.0, 130.0, 5.0).clamp_to(100.0, 100.0).is_none());
    }

    #[test]
    fn polygon_hull() {
        let q = [
            Point::new(2.0, 0.0),
            Point::new(4.0, 2.0),
            Point::new(2.0, 4.0),
            Point::new(0.0, 2.0),
        ];
        assert_eq!(BBox::from_polygon(&q).unwrap().to_array(), [0.0, 0.0, 4.0, 4.0]);
    }
}
