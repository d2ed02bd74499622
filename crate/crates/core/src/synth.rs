//! Synthetic scenes with hands and objects rendered as flat-colored boxes.
//!
//! Hand color encodes side and a center patch encodes contact state, so a
//! small detector can learn every output head from a handful of images.

use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rand_distr::{Distribution, Normal};

use crate::association::{ImageParse, ParsedHand};
use crate::data_model::{BBox, ContactState, HandAnnotation, HandSide, ImageRecord, Point};
use crate::detector::{HandDetection, ObjectDetection};
use crate::grasp_mining::GraspSample;
use crate::mesh_quality::KeypointCrop;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub max_hands: usize,
    pub hand_size: (f64, f64),
    pub object_size: (f64, f64),
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 96,
            max_hands: 2,
            hand_size: (18.0, 26.0),
            object_size: (14.0, 22.0),
        }
    }
}

const BACKGROUND: [u8; 3] = [70, 70, 70];

pub fn hand_color(side: HandSide) -> [u8; 3] {
    match side {
        HandSide::Left => [245, 205, 120],
        HandSide::Right => [235, 120, 100],
    }
}

pub fn state_color(state: ContactState) -> [u8; 3] {
    match state {
        ContactState::NoContact => [0, 0, 0],
        ContactState::SelfContact => [255, 255, 255],
        ContactState::OtherPerson => [255, 0, 255],
        ContactState::PortableObject => [0, 230, 230],
        ContactState::NonPortableObject => [0, 110, 0],
    }
}

fn object_color(state: ContactState) -> [u8; 3] {
    match state {
        ContactState::OtherPerson => [150, 60, 200],
        ContactState::NonPortableObject => [60, 180, 60],
        _ => [50, 90, 230],
    }
}

pub fn fill_rect(img: &mut RgbImage, b: &BBox, color: [u8; 3]) {
    let (w, h) = img.dimensions();
    let x1 = b.x1().round().max(0.0) as u32;
    let y1 = b.y1().round().max(0.0) as u32;
    let x2 = (b.x2().round() as u32).min(w);
    let y2 = (b.y2().round() as u32).min(h);
    for y in y1..y2 {
        for x in x1..x2 {
            img.put_pixel(x, y, Rgb(color));
        }
    }
}

fn rand_box(rng: &mut impl Rng, cfg: &SceneConfig, size: (f64, f64)) -> BBox {
    let w = rng.gen_range(size.0..=size.1).round();
    let h = rng.gen_range(size.0..=size.1).round();
    let x = rng.gen_range(0.0..=(cfg.width as f64 - w)).round();
    let y = rng.gen_range(0.0..=(cfg.height as f64 - h)).round();
    BBox::new(x, y, x + w, y + h).expect("positive size")
}

/// Object box touching `hand` on a random side, or `None` if it would not fit.
fn adjacent_box(rng: &mut impl Rng, cfg: &SceneConfig, hand: &BBox) -> Option<BBox> {
    let w = rng.gen_range(cfg.object_size.0..=cfg.object_size.1).round();
    let h = rng.gen_range(cfg.object_size.0..=cfg.object_size.1).round();
    let c = hand.center();
    let gap = 2.0;
    let (x, y) = match rng.gen_range(0..4) {
        0 => (hand.x2() + gap, c.y - h / 2.0),
        1 => (hand.x1() - gap - w, c.y - h / 2.0),
        2 => (c.x - w / 2.0, hand.y2() + gap),
        _ => (c.x - w / 2.0, hand.y1() - gap - h),
    };
    let (x, y) = (x.round(), y.round());
    if x < 0.0 || y < 0.0 || x + w > cfg.width as f64 || y + h > cfg.height as f64 {
        return None;
    }
    BBox::new(x, y, x + w, y + h).ok()
}

fn separated(a: &BBox, taken: &[BBox]) -> bool {
    taken.iter().all(|t| a.scaled(1.15).intersection_area(t) == 0.0)
}

/// Renders one scene. `states` fixes the contact state per hand, else
/// states and hand count are drawn at random.
pub fn generate_scene(
    rng: &mut impl Rng,
    cfg: &SceneConfig,
    image_id: &str,
    uploader_id: &str,
    states: Option<&[ContactState]>,
) -> (ImageRecord, RgbImage) {
    let wanted: Vec<ContactState> = match states {
        Some(s) => s.to_vec(),
        None => {
            let n = rng.gen_range(1..=cfg.max_hands.max(1));
            (0..n).map(|_| ContactState::ALL[rng.gen_range(0..5)]).collect()
        }
    };
    let mut hands = Vec::new();
    let mut objects: Vec<BBox> = Vec::new();
    let mut taken: Vec<BBox> = Vec::new();
    let mut object_states = Vec::new();
    for state in wanted {
        for _attempt in 0..200 {
            let hb = rand_box(rng, cfg, cfg.hand_size);
            if !separated(&hb, &taken) {
                continue;
            }
            let ob = if state.has_object() {
                match adjacent_box(rng, cfg, &hb) {
                    Some(ob) if separated(&ob, &taken) => Some(ob),
                    _ => continue,
                }
            } else {
                None
            };
            taken.push(hb);
            let object_index = ob.map(|ob| {
                taken.push(ob);
                objects.push(ob);
                object_states.push(state);
                objects.len() - 1
            });
            hands.push(HandAnnotation {
                bbox: hb,
                side: if rng.gen_bool(0.5) { HandSide::Left } else { HandSide::Right },
                state,
                object_index,
            });
            break;
        }
    }

    let mut img = RgbImage::new(cfg.width, cfg.height);
    for px in img.pixels_mut() {
        let n: i16 = rng.gen_range(-8..=8);
        *px = Rgb(BACKGROUND.map(|c| (c as i16 + n).clamp(0, 255) as u8));
    }
    for (ob, st) in objects.iter().zip(&object_states) {
        fill_rect(&mut img, ob, object_color(*st));
    }
    for h in &hands {
        fill_rect(&mut img, &h.bbox, hand_color(h.side));
        let patch = h.bbox.scaled(0.45);
        fill_rect(&mut img, &patch, state_color(h.state));
    }
    let record = ImageRecord {
        image_id: image_id.to_string(),
        uploader_id: uploader_id.to_string(),
        width: cfg.width,
        height: cfg.height,
        hands,
        objects,
    };
    (record, img)
}

/// `n` scenes from one seed; image ids are `synth_<i>` and every image gets
/// its own uploader.
pub fn generate_dataset(n: usize, seed: u64, cfg: &SceneConfig) -> Vec<(ImageRecord, RgbImage)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| generate_scene(&mut rng, cfg, &format!("synth_{i:04}"), &format!("u{i}"), None))
        .collect()
}

/// Crops for the mesh-quality pipeline with a hidden per-sample quality bit.
///
/// Good samples get little joint noise and a pose vector shifted by `+2`
/// along the first axis; bad samples get more noise and a `-2` shift. The
/// pooled distribution is symmetric about zero, so a single density model
/// ranks both classes alike while a classifier separates them.
pub fn quality_fixture(n: usize, theta_dim: usize, seed: u64) -> Vec<(KeypointCrop, bool)> {
    assert!(theta_dim >= 1, "quality fixture needs a pose dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|i| {
            let good = rng.gen_bool(0.5);
            let mut theta: Vec<f64> = (0..theta_dim).map(|_| unit.sample(&mut rng)).collect();
            theta[0] += if good { 2.0 } else { -2.0 };
            let side = rng.gen_range(48.0..96.0f64);
            let joints = (0..crate::mesh_quality::DEFAULT_JOINTS)
                .map(|_| Point::new(rng.gen_range(0.25..0.75) * side, rng.gen_range(0.25..0.75) * side))
                .collect();
            let mut crop = KeypointCrop::new(side, side * rng.gen_range(0.7..1.0), joints, i as u64);
            crop.theta = theta;
            crop.sigma = if good { 0.005 } else { 0.03 };
            (crop, good)
        })
        .collect()
}

/// Parses of a `n_frames` video with `n_hands` (at most 3) hands that each
/// stay in their own lane and jitter by a few pixels. States are drawn
/// uniformly per hand and frame; contacted objects sit right of the hand and
/// are linked. Returns the frames and the per-hand state sequences.
pub fn contact_video(
    rng: &mut impl Rng,
    n_frames: usize,
    n_hands: usize,
) -> (Vec<ImageParse>, Vec<Vec<ContactState>>) {
    assert!(n_hands <= 3, "contact_video has three lanes");
    let sides: Vec<HandSide> = (0..n_hands)
        .map(|_| if rng.gen_bool(0.5) { HandSide::Left } else { HandSide::Right })
        .collect();
    let mut states = vec![Vec::with_capacity(n_frames); n_hands];
    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let mut parse = ImageParse {
            image_id: format!("frame_{t:05}"),
            width: 320,
            height: 240,
            hands: Vec::new(),
            objects: Vec::new(),
        };
        for (i, &side) in sides.iter().enumerate() {
            let state = ContactState::ALL[rng.gen_range(0..5)];
            states[i].push(state);
            let x = 20.0 + 100.0 * i as f64 + rng.gen_range(-2.0..=2.0);
            let y = 100.0 + rng.gen_range(-2.0..=2.0);
            let bbox = BBox::new(x, y, x + 40.0, y + 40.0).expect("positive size");
            let object_link = state.has_object().then(|| {
                let ob = BBox::new(x + 45.0, y + 5.0, x + 75.0, y + 35.0).expect("positive size");
                parse.objects.push(ObjectDetection { bbox: ob, score: 0.9 });
                parse.objects.len() - 1
            });
            let mut side_probs = [0.0; 2];
            side_probs[side.code() as usize] = 1.0;
            let mut state_probs = [0.0; 5];
            state_probs[state.code() as usize] = 1.0;
            parse.hands.push(ParsedHand {
                detection: HandDetection {
                    bbox,
                    score: 0.95,
                    side_probs,
                    state_probs,
                    offset_dir: [1.0, 0.0],
                    offset_mag: 0.15,
                },
                side,
                state,
                object_link,
            });
        }
        frames.push(parse);
    }
    (frames, states)
}

const GRASP_PALETTE: [[u8; 3]; 10] = [
    [220, 40, 40],
    [40, 200, 40],
    [40, 60, 220],
    [230, 220, 40],
    [200, 40, 200],
    [40, 210, 210],
    [240, 140, 30],
    [120, 70, 30],
    [150, 150, 150],
    [20, 20, 20],
];

/// Four-code version of [`grasp_crops_with_codes`].
pub fn grasp_crops(n: usize, seed: u64) -> Vec<GraspSample> {
    grasp_crops_with_codes(n, 4, seed)
}

/// Object crops whose grasp code is their color (codes cycle through the
/// first `min(n_codes, 10)` palette entries). Side is marked by a white or
/// black top-left quarter; the pose target is `[code, -code]`.
pub fn grasp_crops_with_codes(n: usize, n_codes: usize, seed: u64) -> Vec<GraspSample> {
    let n_codes = n_codes.clamp(1, GRASP_PALETTE.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let code = i % n_codes;
            let (w, h) = (rng.gen_range(20..60), rng.gen_range(20..60));
            let mut crop = RgbImage::from_fn(w, h, |_, _| {
                let j: i16 = rng.gen_range(-20..=20);
                Rgb(GRASP_PALETTE[code].map(|c| (c as i16 + j).clamp(0, 255) as u8))
            });
            let side = if rng.gen_bool(0.5) { HandSide::Right } else { HandSide::Left };
            let mark = if side == HandSide::Right { 255 } else { 0 };
            for y in 0..h / 2 {
                for x in 0..w / 2 {
                    crop.put_pixel(x, y, Rgb([mark; 3]));
                }
            }
            GraspSample {
                crop,
                code,
                side,
                theta: Some(vec![code as f64, -(code as f64)]),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_validate() {
        for (rec, img) in generate_dataset(30, 7, &SceneConfig::default()) {
            rec.validate().unwrap();
            assert_eq!(img.dimensions(), (rec.width, rec.height));
            assert!(!rec.hands.is_empty());
        }
    }

    #[test]
    fn fixed_states_are_honored() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states = [ContactState::PortableObject, ContactState::NoContact];
        let (rec, _) = generate_scene(&mut rng, &SceneConfig::default(), "a", "u", Some(&states));
        let got: Vec<_> = rec.hands.iter().map(|h| h.state).collect();
        assert_eq!(got, states);
        assert_eq!(rec.objects.len(), 1);
    }
}
