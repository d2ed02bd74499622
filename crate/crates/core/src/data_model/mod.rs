//! Ground-truth annotation types and dataset-level utilities.
//!
//! Boxes are stored in absolute pixel coordinates with the origin at the
//! top-left corner. Operations that need a resolution-independent frame
//! (median box, hand-size statistics) normalize internally.

mod baseline;
mod bbox;
mod io;
mod split;
mod stats;

pub use baseline::{median_box, MedianBoxes};
pub use bbox::{BBox, Point};
pub use io::{load_annotations, read_annotations, write_annotations, AnnotationRecordLine, HandLine};
pub(crate) use io::{read_json_lines, write_json_lines};
pub use split::{split_by_uploader, SplitRatios};
pub use stats::{compute_stats, DatasetStats};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Five-way contact state of a hand. Integer codes follow declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContactState {
    NoContact = 0,
    SelfContact = 1,
    OtherPerson = 2,
    PortableObject = 3,
    NonPortableObject = 4,
}

impl ContactState {
    pub const ALL: [ContactState; 5] = [
        ContactState::NoContact,
        ContactState::SelfContact,
        ContactState::OtherPerson,
        ContactState::PortableObject,
        ContactState::NonPortableObject,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// States whose contacted entity is boxed in the object list.
    pub fn has_object(self) -> bool {
        !matches!(self, ContactState::NoContact | ContactState::SelfContact)
    }

    /// Contact with an object (portable or not), the trigger for contact events.
    pub fn is_object_contact(self) -> bool {
        matches!(
            self,
            ContactState::PortableObject | ContactState::NonPortableObject
        )
    }

    /// One-letter abbreviation used in rendered labels.
    pub fn abbrev(self) -> char {
        match self {
            ContactState::NoContact => 'N',
            ContactState::SelfContact => 'S',
            ContactState::OtherPerson => 'O',
            ContactState::PortableObject => 'P',
            ContactState::NonPortableObject => 'F',
        }
    }
}

impl Serialize for ContactState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for ContactState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = u8::deserialize(d)?;
        ContactState::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid contact state code {code}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HandSide {
    Left = 0,
    Right = 1,
}

impl HandSide {
    pub const ALL: [HandSide; 2] = [HandSide::Left, HandSide::Right];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn abbrev(self) -> char {
        match self {
            HandSide::Left => 'L',
            HandSide::Right => 'R',
        }
    }
}

impl Serialize for HandSide {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for HandSide {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = u8::deserialize(d)?;
        HandSide::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid hand side code {code}")))
    }
}

impl fmt::Display for HandSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HandSide::Left => "left",
            HandSide::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandAnnotation {
    pub bbox: BBox,
    pub side: HandSide,
    pub state: ContactState,
    /// Index into the owning image's object list. Present iff the state
    /// boxes its contacted entity (anything but no-contact / self-contact).
    pub object_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub uploader_id: String,
    pub width: u32,
    pub height: u32,
    pub hands: Vec<HandAnnotation>,
    pub objects: Vec<BBox>,
}

impl ImageRecord {
    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    pub fn area(&self) -> f64 {
        self.width as f64 * self.height as f64
    }

    /// The object box a hand is linked to, if any.
    pub fn linked_object(&self, hand: &HandAnnotation) -> Option<&BBox> {
        hand.object_index.and_then(|i| self.objects.get(i))
    }

    /// Checks every record-level invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Error::Validation {
            image_id: self.image_id.clone(),
            field: field.to_string(),
            message: msg,
        };
        if self.width == 0 || self.height == 0 {
            return Err(bad(
                "width/height",
                format!("image size must be positive, got {}x{}", self.width, self.height),
            ));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            obj.validate()
                .map_err(|m| bad(&format!("objects[{i}]"), m))?;
        }
        let mut referenced = HashSet::new();
        for (i, hand) in self.hands.iter().enumerate() {
            hand.bbox
                .validate()
                .map_err(|m| bad(&format!("hands[{i}].box"), m))?;
            match (hand.state.has_object(), hand.object_index) {
                (true, None) => {
                    return Err(bad(
                        &format!("hands[{i}].object_index"),
                        format!("state {} requires an object_index", hand.state.code()),
                    ))
                }
                (false, Some(_)) => {
                    return Err(bad(
                        &format!("hands[{i}].object_index"),
                        format!("state {} must not carry an object_index", hand.state.code()),
                    ))
                }
                (true, Some(idx)) => {
                    if idx >= self.objects.len() {
                        return Err(bad(
                            &format!("hands[{i}].object_index"),
                            format!(
                                "dangling object_index {idx} ({} objects)",
                                self.objects.len()
                            ),
                        ));
                    }
                    referenced.insert(idx);
                }
                (false, None) => {}
            }
        }
        if let Some(orphan) = (0..self.objects.len()).find(|i| !referenced.contains(i)) {
            return Err(bad(
                &format!("objects[{orphan}]"),
                "object not referenced by any hand".to_string(),
            ));
        }
        Ok(())
    }
}

/// An ordered collection of image records.
pub type AnnotationSet = Vec<ImageRecord>;

/// Checks record invariants plus image-id uniqueness.
pub fn validate_set(set: &[ImageRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for rec in set {
        rec.validate()?;
        if !seen.insert(rec.image_id.as_str()) {
            return Err(Error::Validation {
                image_id: rec.image_id.clone(),
                field: "image_id".into(),
                message: "duplicate image_id".into(),
            });
        }
    }
    Ok(())
}
