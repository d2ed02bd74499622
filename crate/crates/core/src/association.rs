//! Turning soft detections into a discrete parse: confident hands with side
//! and state labels, each contacted hand linked to one object.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::{
    read_json_lines, write_json_lines, AnnotationRecordLine, ContactState, HandLine, HandSide,
    Point,
};
use crate::detector::{HandDetection, ObjectDetection};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseThresholds {
    pub hand: f64,
    pub object: f64,
}

impl Default for ParseThresholds {
    fn default() -> Self {
        Self {
            hand: 0.5,
            object: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedHand {
    pub detection: HandDetection,
    pub side: HandSide,
    pub state: ContactState,
    /// Index into [`ImageParse::objects`].
    pub object_link: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageParse {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub hands: Vec<ParsedHand>,
    pub objects: Vec<ObjectDetection>,
}

/// Hand-box center displaced by the predicted offset (magnitude scaled back
/// by the image diagonal).
pub fn predict_target_point(hand: &HandDetection, image_size: (u32, u32)) -> Point {
    let diag = (image_size.0 as f64).hypot(image_size.1 as f64);
    let c = hand.bbox.center();
    let len = hand.offset_mag * diag;
    Point::new(c.x + len * hand.offset_dir[0], c.y + len * hand.offset_dir[1])
}

/// Keeps detections at or above the thresholds and links every kept hand
/// whose state involves a boxed entity to the kept object whose center is
/// nearest its predicted target point. Ties go to the higher-scoring
/// object, then the lower index.
pub fn parse(
    hands: &[HandDetection],
    objects: &[ObjectDetection],
    thresholds: ParseThresholds,
    image_size: (u32, u32),
) -> ImageParse {
    let objects: Vec<ObjectDetection> = objects
        .iter()
        .filter(|o| o.score >= thresholds.object)
        .copied()
        .collect();
    let centers: Vec<Point> = objects.iter().map(|o| o.bbox.center()).collect();
    let hands = hands
        .iter()
        .filter(|h| h.score >= thresholds.hand)
        .map(|h| {
            let state = h.state();
            let object_link = if state.has_object() {
                let target = predict_target_point(h, image_size);
                let mut best: Option<(f64, usize)> = None;
                for (j, c) in centers.iter().enumerate() {
                    let d = c.distance(target);
                    let better = match best {
                        None => true,
                        Some((bd, bj)) => {
                            d < bd || (d == bd && objects[j].score > objects[bj].score)
                        }
                    };
                    if better {
                        best = Some((d, j));
                    }
                }
                best.map(|(_, j)| j)
            } else {
                None
            };
            ParsedHand {
                detection: h.clone(),
                side: h.side(),
                state,
                object_link,
            }
        })
        .collect();
    ImageParse {
        image_id: String::new(),
        width: image_size.0,
        height: image_size.1,
        hands,
        objects,
    }
}

impl ImageParse {
    pub fn with_image_id(mut self, id: impl Into<String>) -> Self {
        self.image_id = id.into();
        self
    }

    /// Object box linked to hand `i`, if any.
    pub fn linked_object(&self, i: usize) -> Option<&ObjectDetection> {
        self.hands[i].object_link.map(|j| &self.objects[j])
    }

    pub fn to_record(&self) -> AnnotationRecordLine {
        AnnotationRecordLine {
            image_id: self.image_id.clone(),
            uploader_id: String::new(),
            width: self.width,
            height: self.height,
            hands: self
                .hands
                .iter()
                .map(|h| HandLine {
                    bbox: h.detection.bbox,
                    side: h.side,
                    state: h.state,
                    object_index: h.object_link,
                    score: Some(h.detection.score),
                })
                .collect(),
            objects: self.objects.iter().map(|o| o.bbox).collect(),
            object_scores: Some(self.objects.iter().map(|o| o.score).collect()),
        }
    }

    /// Rebuilds a parse from a record. Missing scores read as 1.0 so plain
    /// annotation files can be evaluated as perfect predictions. The soft
    /// outputs are not stored: probabilities become one-hot and the offset
    /// points at the linked object, if any.
    pub fn from_record(r: &AnnotationRecordLine) -> Result<Self> {
        let scores = r.object_scores.clone().unwrap_or_else(|| vec![1.0; r.objects.len()]);
        if scores.len() != r.objects.len() {
            return Err(Error::Validation {
                image_id: r.image_id.clone(),
                field: "object_scores".into(),
                message: format!("{} scores for {} objects", scores.len(), r.objects.len()),
            });
        }
        let objects: Vec<ObjectDetection> = r
            .objects
            .iter()
            .zip(scores)
            .map(|(&bbox, score)| ObjectDetection { bbox, score })
            .collect();
        let diag = (r.width as f64).hypot(r.height as f64);
        let mut hands = Vec::with_capacity(r.hands.len());
        for h in &r.hands {
            if let Some(j) = h.object_index {
                if j >= objects.len() {
                    return Err(Error::Validation {
                        image_id: r.image_id.clone(),
                        field: "object_index".into(),
                        message: format!("link {j} out of range for {} objects", objects.len()),
                    });
                }
            }
            let mut side_probs = [0.0; 2];
            side_probs[h.side.code() as usize] = 1.0;
            let mut state_probs = [0.0; 5];
            state_probs[h.state.code() as usize] = 1.0;
            let (mut offset_dir, mut offset_mag) = ([1.0, 0.0], 0.0);
            if let Some(j) = h.object_index {
                let (a, b) = (h.bbox.center(), objects[j].bbox.center());
                let d = a.distance(b);
                if d > 0.0 && diag > 0.0 {
                    offset_dir = [(b.x - a.x) / d, (b.y - a.y) / d];
                    offset_mag = d / diag;
                }
            }
            hands.push(ParsedHand {
                detection: HandDetection {
                    bbox: h.bbox,
                    score: h.score.unwrap_or(1.0),
                    side_probs,
                    state_probs,
                    offset_dir,
                    offset_mag,
                },
                side: h.side,
                state: h.state,
                object_link: h.object_index,
            });
        }
        Ok(ImageParse {
            image_id: r.image_id.clone(),
            width: r.width,
            height: r.height,
            hands,
            objects,
        })
    }
}

pub fn write_parses<W: Write>(writer: W, parses: &[ImageParse]) -> std::io::Result<()> {
    write_json_lines(writer, parses.iter().map(ImageParse::to_record))
}

pub fn read_parses<R: BufRead>(reader: R) -> Result<Vec<ImageParse>> {
    let lines: Vec<(usize, AnnotationRecordLine)> = read_json_lines(reader)?;
    lines
        .iter()
        .map(|(lineno, r)| {
            ImageParse::from_record(r).map_err(|e| Error::Parse {
                line: *lineno,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_parses(path: impl AsRef<Path>) -> Result<Vec<ImageParse>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_parses(BufReader::new(file))
}
