//! Drawing parses onto images and precision-recall curves onto a canvas.

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_rect_mut, draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

use handstate::association::ImageParse;
use handstate::data_model::{BBox, HandSide};
use handstate::evaluation::{EvalCriterion, PRCurve};

pub const LEFT_HAND: Rgb<u8> = Rgb([40, 110, 255]);
pub const RIGHT_HAND: Rgb<u8> = Rgb([255, 70, 40]);
pub const OBJECT: Rgb<u8> = Rgb([255, 210, 0]);
pub const LINK: Rgb<u8> = Rgb([0, 255, 0]);

/// 3x5 glyphs, one byte per row, low three bits used (bit 2 = left column).
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        'L' => [0b100, 0b100, 0b100, 0b100, 0b111],
        'R' => [0b110, 0b101, 0b110, 0b101, 0b101],
        'N' => [0b101, 0b111, 0b111, 0b111, 0b101],
        'S' => [0b111, 0b100, 0b111, 0b001, 0b111],
        'O' => [0b111, 0b101, 0b101, 0b101, 0b111],
        'P' => [0b111, 0b101, 0b111, 0b100, 0b100],
        'F' => [0b111, 0b100, 0b110, 0b100, 0b100],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        _ => return None,
    })
}

/// Draws `text` with its top-left corner at `(x, y)`, clipped to the image.
pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, scale: u32, color: Rgb<u8>) {
    let s = scale.max(1) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    for (i, ch) in text.chars().enumerate() {
        let Some(rows) = glyph(ch) else { continue };
        let gx = x + i as i64 * 4 * s;
        for (r, bits) in rows.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for dy in 0..s {
                    for dx in 0..s {
                        let px = gx + col * s + dx;
                        let py = y + r as i64 * s + dy;
                        if (0..w).contains(&px) && (0..h).contains(&py) {
                            img.put_pixel(px as u32, py as u32, color);
                        }
                    }
                }
            }
        }
    }
}

fn outline(img: &mut RgbImage, b: &BBox, thickness: u32, color: Rgb<u8>) {
    for t in 0..thickness.max(1) as i32 {
        let x = b.x1().round() as i32 + t;
        let y = b.y1().round() as i32 + t;
        let w = b.width().round() as i32 - 2 * t;
        let h = b.height().round() as i32 - 2 * t;
        if w < 1 || h < 1 {
            break;
        }
        draw_hollow_rect_mut(img, Rect::at(x, y).of_size(w as u32, h as u32), color);
    }
}

pub fn hand_color(side: HandSide) -> Rgb<u8> {
    match side {
        HandSide::Left => LEFT_HAND,
        HandSide::Right => RIGHT_HAND,
    }
}

/// Objects, then hands with a `side-state` label above the box, then one
/// link segment per linked hand from its center to the object center.
pub fn render_parse(img: &RgbImage, parse: &ImageParse, thickness: u32, font_scale: u32) -> RgbImage {
    let mut out = img.clone();
    for o in &parse.objects {
        outline(&mut out, &o.bbox, thickness, OBJECT);
    }
    for h in &parse.hands {
        let color = hand_color(h.side);
        let b = &h.detection.bbox;
        outline(&mut out, b, thickness, color);
        let label = format!("{}-{}", h.side.abbrev(), h.state.abbrev());
        let text_h = 5 * font_scale.max(1) as i64;
        let y = b.y1().round() as i64 - text_h - 2;
        let y = if y < 0 { b.y1().round() as i64 + thickness as i64 + 1 } else { y };
        draw_text(&mut out, b.x1().round() as i64, y, &label, font_scale, color);
    }
    for (i, h) in parse.hands.iter().enumerate() {
        if let Some(o) = parse.linked_object(i) {
            let (a, c) = (h.detection.bbox.center(), o.bbox.center());
            draw_line_segment_mut(&mut out, (a.x as f32, a.y as f32), (c.x as f32, c.y as f32), LINK);
        }
    }
    out
}

const CURVE_COLORS: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
];

/// Precision (up) against recall (right) on a white square, one color per
/// criterion in [`EvalCriterion::ALL`] order.
pub fn render_pr_plot(curves: &[(EvalCriterion, PRCurve)], size: u32) -> RgbImage {
    let size = size.max(32);
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    let m = 16.0f32;
    let span = size as f32 - 2.0 * m;
    let to_px = |r: f64, p: f64| (m + r as f32 * span, size as f32 - m - p as f32 * span);
    let black = Rgb([0, 0, 0]);
    draw_line_segment_mut(&mut img, to_px(0.0, 0.0), to_px(1.0, 0.0), black);
    draw_line_segment_mut(&mut img, to_px(0.0, 0.0), to_px(0.0, 1.0), black);
    for (c, pr) in curves {
        let idx = EvalCriterion::ALL.iter().position(|x| x == c).unwrap_or(0);
        let color = CURVE_COLORS[idx % CURVE_COLORS.len()];
        let pts: Vec<(f32, f32)> = pr.recall.iter().zip(&pr.precision).map(|(&r, &p)| to_px(r, p)).collect();
        for w in pts.windows(2) {
            draw_line_segment_mut(&mut img, w[0], w[1], color);
        }
        if let [only] = pts[..] {
            draw_filled_rect_mut(&mut img, Rect::at(only.0 as i32 - 1, only.1 as i32 - 1).of_size(3, 3), color);
        }
    }
    img
}
