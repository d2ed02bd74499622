//! Mining contact onsets from per-frame video parses.
//!
//! Hands are tracked across frames, every NO_CONTACT to object-contact
//! transition inside a track becomes a [`ContactEvent`], and filters drop
//! events with crowded or moving objects. Kept events pair a pre-contact
//! object crop with the post-contact hand pose, which [`codebook`] quantizes
//! into grasp classes for [`classifier`].

pub mod classifier;
pub mod codebook;

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::association::{ImageParse, ParsedHand};
use crate::data_model::{read_json_lines, write_json_lines, BBox, ContactState, HandSide};
use crate::detector::ImageProvider;
use crate::error::{Error, Result};
use crate::mesh_quality::MeshRecord;

pub use classifier::{
    load_grasp_model, save_grasp_model, train_grasp_classifier, EpochStats, GraspConfig, GraspMode,
    GraspModel, GraspPrediction, GraspSample,
};
pub use codebook::{
    assign_code, build_codebook, kmeans, load_codebook, read_codebook, save_codebook, write_codebook,
    Codebook, KMeansRun,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    pub frame: usize,
    pub hand: ParsedHand,
    /// Box of the hand's linked object in this frame.
    pub object: Option<BBox>,
}

/// One hand followed through a video.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: usize,
    entries: Vec<TrackEntry>,
}

impl Track {
    pub fn new(track_id: usize, entries: Vec<TrackEntry>) -> Result<Self> {
        if let Some(w) = entries.windows(2).find(|w| w[0].frame >= w[1].frame) {
            return Err(Error::InvalidArgument(format!(
                "track {track_id}: frame {} follows frame {}",
                w[1].frame, w[0].frame
            )));
        }
        Ok(Self { track_id, entries })
    }

    pub fn entries(&self) -> &[TrackEntry] {
        &self.entries
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.entries.last().map(|e| e.frame)
    }
}

/// Links hands of consecutive frames into tracks.
pub trait HandTracker {
    /// `frames[t]` is the parse of frame `t`.
    fn track(&self, frames: &[ImageParse]) -> Vec<Track>;
}

/// Greedy frame-to-frame IoU matching. Each frame, candidate (track, hand)
/// pairs at or above `iou_thresh` are taken best first; unmatched hands open
/// new tracks and a track closes after `max_missed` frames without a match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyIouTracker {
    pub iou_thresh: f64,
    pub max_missed: usize,
}

impl Default for GreedyIouTracker {
    fn default() -> Self {
        Self {
            iou_thresh: 0.3,
            max_missed: 5,
        }
    }
}

struct OpenTrack {
    id: usize,
    entries: Vec<TrackEntry>,
    missed: usize,
}

fn entry(frame: usize, parse: &ImageParse, i: usize) -> TrackEntry {
    TrackEntry {
        frame,
        hand: parse.hands[i].clone(),
        object: parse.linked_object(i).map(|o| o.bbox),
    }
}

impl HandTracker for GreedyIouTracker {
    fn track(&self, frames: &[ImageParse]) -> Vec<Track> {
        let mut open: Vec<OpenTrack> = Vec::new();
        let mut closed: Vec<OpenTrack> = Vec::new();
        let mut next_id = 0;
        for (t, parse) in frames.iter().enumerate() {
            let mut pairs = Vec::new();
            for (ti, tr) in open.iter().enumerate() {
                let last = &tr.entries.last().expect("open tracks are non-empty").hand;
                for (hi, h) in parse.hands.iter().enumerate() {
                    let iou = last.detection.bbox.iou(&h.detection.bbox);
                    if iou >= self.iou_thresh {
                        pairs.push((iou, ti, hi));
                    }
                }
            }
            // best IoU first, older track and lower hand index on ties
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut track_used = vec![false; open.len()];
            let mut hand_used = vec![false; parse.hands.len()];
            for (_, ti, hi) in pairs {
                if track_used[ti] || hand_used[hi] {
                    continue;
                }
                track_used[ti] = true;
                hand_used[hi] = true;
                open[ti].entries.push(entry(t, parse, hi));
                open[ti].missed = 0;
            }
            for (tr, used) in open.iter_mut().zip(&track_used) {
                if !used {
                    tr.missed += 1;
                }
            }
            let (still, done): (Vec<_>, Vec<_>) =
                open.into_iter().partition(|tr| tr.missed < self.max_missed);
            open = still;
            closed.extend(done);
            for hi in (0..parse.hands.len()).filter(|&hi| !hand_used[hi]) {
                open.push(OpenTrack {
                    id: next_id,
                    entries: vec![entry(t, parse, hi)],
                    missed: 0,
                });
                next_id += 1;
            }
        }
        closed.extend(open);
        closed.sort_by_key(|tr| tr.id);
        closed
            .into_iter()
            .map(|tr| Track {
                track_id: tr.id,
                entries: tr.entries,
            })
            .collect()
    }
}

/// A hand going from no contact to holding or touching an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub track_id: usize,
    pub t_before: usize,
    pub t_after: usize,
    /// Linked object at `t_after`.
    pub object_box: BBox,
    /// The tracked hand at `t_before`.
    pub hand_box: BBox,
    pub hand_side: HandSide,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<usize>,
}

pub fn find_contact_events(track: &Track) -> Vec<ContactEvent> {
    track
        .entries
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let onset = a.hand.state == ContactState::NoContact && b.hand.state.is_object_contact();
            if !onset {
                return None;
            }
            Some(ContactEvent {
                track_id: track.track_id,
                t_before: a.frame,
                t_after: b.frame,
                object_box: b.object?,
                hand_box: a.hand.detection.bbox,
                hand_side: b.hand.side,
                mesh: None,
                quality: None,
                code: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Drop when another hand overlaps the object above this IoU at `t_before`.
    pub overlap_thresh: f64,
    /// Drop when the object crop changes by more than this between frames.
    pub move_thresh: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            overlap_thresh: 0.1,
            move_thresh: 0.25,
        }
    }
}

pub const APPEARANCE_SIZE: u32 = 64;

/// Pixel rectangle `(x, y, w, h)` covering `b` inside a `w x h` image, or
/// `None` when the box misses the image.
fn pixel_rect(b: &BBox, w: u32, h: u32) -> Option<(u32, u32, u32, u32)> {
    let c = b.clamp_to(w as f64, h as f64)?;
    let x1 = (c.x1().floor() as u32).min(w - 1);
    let y1 = (c.y1().floor() as u32).min(h - 1);
    let x2 = (c.x2().ceil() as u32).clamp(x1 + 1, w);
    let y2 = (c.y2().ceil() as u32).clamp(y1 + 1, h);
    Some((x1, y1, x2 - x1, y2 - y1))
}

fn appearance_patch(img: &RgbImage, b: &BBox) -> Option<Vec<f32>> {
    let (x, y, w, h) = pixel_rect(b, img.width(), img.height())?;
    let gray: GrayImage = imageops::grayscale(&imageops::crop_imm(img, x, y, w, h).to_image());
    let small = imageops::resize(&gray, APPEARANCE_SIZE, APPEARANCE_SIZE, FilterType::Triangle);
    let v: Vec<f32> = small.pixels().map(|p| p[0] as f32).collect();
    let (lo, hi) = v.iter().fold((f32::MAX, f32::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    Some(
        v.into_iter()
            .map(|x| if range > 0.0 { (x - lo) / range } else { 0.0 })
            .collect(),
    )
}

/// Mean absolute difference of the two grayscale crops of `b`, each resized
/// to 64x64 and stretched to `[0, 1]`. Returns 1 (the maximum) when the box
/// misses either image.
pub fn appearance_distance(a: &RgbImage, b: &RgbImage, bbox: &BBox) -> f64 {
    match (appearance_patch(a, bbox), appearance_patch(b, bbox)) {
        (Some(pa), Some(pb)) => {
            let s: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs() as f64).sum();
            s / pa.len() as f64
        }
        _ => 1.0,
    }
}

fn frame<'a>(frames: &'a [ImageParse], t: usize) -> Result<&'a ImageParse> {
    frames
        .get(t)
        .ok_or_else(|| Error::InvalidArgument(format!("frame {t} out of range for {} frames", frames.len())))
}

fn other_hand_overlaps(parse: &ImageParse, ev: &ContactEvent, thresh: f64) -> bool {
    let own = parse.hands.iter().position(|h| h.detection.bbox == ev.hand_box);
    parse
        .hands
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != own)
        .any(|(_, h)| h.detection.bbox.iou(&ev.object_box) > thresh)
}

/// Keeps the events that pass both filters, in input order.
pub fn filter_events(
    events: &[ContactEvent],
    frames: &[ImageParse],
    images: &dyn ImageProvider,
    params: &FilterParams,
) -> Result<Vec<ContactEvent>> {
    let mut kept = Vec::new();
    for ev in events {
        let before = frame(frames, ev.t_before)?;
        let after = frame(frames, ev.t_after)?;
        if other_hand_overlaps(before, ev, params.overlap_thresh) {
            continue;
        }
        let a = images.load(&before.image_id)?;
        let b = images.load(&after.image_id)?;
        if appearance_distance(&a, &b, &ev.object_box) > params.move_thresh {
            continue;
        }
        kept.push(ev.clone());
    }
    Ok(kept)
}

/// Tracks, finds events and filters them for one video.
pub fn mine_video(
    frames: &[ImageParse],
    images: &dyn ImageProvider,
    tracker: &dyn HandTracker,
    params: &FilterParams,
) -> Result<Vec<ContactEvent>> {
    let events: Vec<ContactEvent> = tracker.track(frames).iter().flat_map(find_contact_events).collect();
    filter_events(&events, frames, images, params)
}

pub const CROP_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoMesh,
    NoQuality,
    BelowQualityFloor,
}

impl SkipReason {
    pub fn code(self) -> &'static str {
        match self {
            Self::NoMesh => "no_mesh",
            Self::NoQuality => "no_quality",
            Self::BelowQualityFloor => "below_quality_floor",
        }
    }
}

#[derive(Debug, Clone)]
pub enum PairOutcome {
    Pair { crop: RgbImage, target: MeshRecord },
    Skipped(SkipReason),
}

/// Crop of the pre-contact frame at the object box grown by 20% per side
/// length and clamped to the image.
pub fn pre_contact_crop(img: &RgbImage, object_box: &BBox) -> Option<RgbImage> {
    let grown = object_box.scaled(1.0 + CROP_MARGIN);
    let (x, y, w, h) = pixel_rect(&grown, img.width(), img.height())?;
    Some(imageops::crop_imm(img, x, y, w, h).to_image())
}

/// Training pair for one kept event, or the reason it is skipped.
pub fn extract_pair(
    ev: &ContactEvent,
    frames: &[ImageParse],
    images: &dyn ImageProvider,
    quality_floor: f64,
) -> Result<PairOutcome> {
    let Some(mesh) = &ev.mesh else {
        return Ok(PairOutcome::Skipped(SkipReason::NoMesh));
    };
    match ev.quality {
        None => return Ok(PairOutcome::Skipped(SkipReason::NoQuality)),
        Some(q) if q < quality_floor => return Ok(PairOutcome::Skipped(SkipReason::BelowQualityFloor)),
        _ => {}
    }
    let before = frame(frames, ev.t_before)?;
    let img = images.load(&before.image_id)?;
    let crop = pre_contact_crop(&img, &ev.object_box).ok_or_else(|| Error::Image {
        image: before.image_id.clone(),
        message: format!("object box {:?} lies outside the frame", ev.object_box.to_array()),
    })?;
    Ok(PairOutcome::Pair {
        crop,
        target: mesh.clone(),
    })
}

/// One line of an events file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub video: String,
    pub image_before: String,
    pub image_after: String,
    #[serde(flatten)]
    pub event: ContactEvent,
}

pub fn write_events<W: Write>(writer: W, events: &[EventRecord]) -> std::io::Result<()> {
    write_json_lines(writer, events)
}

pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<EventRecord>> {
    let lines: Vec<(usize, EventRecord)> = read_json_lines(reader)?;
    lines
        .into_iter()
        .map(|(line, r)| {
            if r.event.t_before >= r.event.t_after {
                return Err(Error::Parse {
                    line,
                    message: format!("t_before {} not before t_after {}", r.event.t_before, r.event.t_after),
                });
            }
            Ok(r)
        })
        .collect()
}

pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(BufReader::new(file))
}
