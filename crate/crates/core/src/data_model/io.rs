use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_set, BBox, ContactState, HandAnnotation, HandSide, ImageRecord};
use crate::error::{Error, Result};

/// On-disk shape of one hand entry. `score` is only present in parse files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandLine {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub side: HandSide,
    pub state: ContactState,
    pub object_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// On-disk shape of one record line. Parse files reuse it with the optional
/// score fields filled in, so either kind can be fed to the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecordLine {
    pub image_id: String,
    #[serde(default)]
    pub uploader_id: String,
    pub width: u32,
    pub height: u32,
    pub hands: Vec<HandLine>,
    pub objects: Vec<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_scores: Option<Vec<f64>>,
}

impl From<&ImageRecord> for AnnotationRecordLine {
    fn from(r: &ImageRecord) -> Self {
        AnnotationRecordLine {
            image_id: r.image_id.clone(),
            uploader_id: r.uploader_id.clone(),
            width: r.width,
            height: r.height,
            hands: r
                .hands
                .iter()
                .map(|h| HandLine {
                    bbox: h.bbox,
                    side: h.side,
                    state: h.state,
                    object_index: h.object_index,
                    score: None,
                })
                .collect(),
            objects: r.objects.clone(),
            object_scores: None,
        }
    }
}

impl From<AnnotationRecordLine> for ImageRecord {
    fn from(l: AnnotationRecordLine) -> Self {
        ImageRecord {
            image_id: l.image_id,
            uploader_id: l.uploader_id,
            width: l.width,
            height: l.height,
            hands: l
                .hands
                .into_iter()
                .map(|h| HandAnnotation {
                    bbox: h.bbox,
                    side: h.side,
                    state: h.state,
                    object_index: h.object_index,
                })
                .collect(),
            objects: l.objects,
        }
    }
}

/// Parses newline-delimited JSON records into `T`, skipping blank lines.
pub(crate) fn read_json_lines<T, R>(reader: R) -> Result<Vec<(usize, T)>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        out.push((lineno, rec));
    }
    Ok(out)
}

pub(crate) fn write_json_lines<T: Serialize, W: Write>(
    mut writer: W,
    items: impl IntoIterator<Item = T>,
) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, &item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Reads and validates records from any buffered reader.
pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<ImageRecord>> {
    let lines: Vec<(usize, AnnotationRecordLine)> = read_json_lines(reader)?;
    let mut set = Vec::with_capacity(lines.len());
    for (lineno, line) in lines {
        let rec = ImageRecord::from(line);
        rec.validate().map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        set.push(rec);
    }
    validate_set(&set)?;
    Ok(set)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_annotations(BufReader::new(file))
}

pub fn write_annotations<W: Write>(writer: W, set: &[ImageRecord]) -> std::io::Result<()> {
    write_json_lines(writer, set.iter().map(AnnotationRecordLine::from))
}
