//! Triad records and the JSONL dataset format.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blendshape::BlendshapeVector;
use crate::emotion::{EmotionClass, EmotionDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Presentation variant of a primitive emotion face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presentation {
    A,
    B,
}

/// One dataset record: description, optional image, blendshapes and emotion label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triad {
    pub id: String,
    pub text: String,
    pub image_path: Option<String>,
    pub blendshapes: BlendshapeVector,
    pub emotion: EmotionDistribution,
    pub split: Split,
    /// Intensity level 1..=3 for primitive emotion faces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation: Option<Presentation>,
}

impl Triad {
    pub fn class(&self) -> EmotionClass {
        self.emotion.dominant()
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.trim().is_empty() {
            return Err("empty text".into());
        }
        if let Some(i) = self.intensity {
            if !(1..=3).contains(&i) {
                return Err(format!("intensity {i} outside 1..=3"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {id:?}: {message}")]
    Validation { id: String, message: String },
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

// Parsed in two stages so that invariant violations can be attributed to a record id.
#[derive(Deserialize)]
struct RawTriad {
    id: String,
    text: String,
    image_path: Option<String>,
    blendshapes: Vec<f64>,
    emotion: Vec<f64>,
    split: Split,
    #[serde(default)]
    intensity: Option<u8>,
    #[serde(default)]
    presentation: Option<Presentation>,
}

impl RawTriad {
    fn into_triad(self) -> Result<Triad, DatasetError> {
        let invalid = |message: String| DatasetError::Validation { id: self.id.clone(), message };
        let blendshapes = BlendshapeVector::new(&self.blendshapes).map_err(|e| invalid(e.to_string()))?;
        let emotion = EmotionDistribution::from_slice(&self.emotion).map_err(|e| invalid(e.to_string()))?;
        let triad = Triad {
            id: self.id.clone(),
            text: self.text,
            image_path: self.image_path,
            blendshapes,
            emotion,
            split: self.split,
            intensity: self.intensity,
            presentation: self.presentation,
        };
        triad.validate().map_err(invalid)?;
        Ok(triad)
    }
}

/// Parses and validates JSONL records from any reader.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Vec<Triad>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawTriad =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse { line: line_no, message: e.to_string() })?;
        let triad = raw.into_triad()?;
        if !seen.insert(triad.id.clone()) {
            return Err(DatasetError::Validation { id: triad.id, message: "duplicate id".into() });
        }
        out.push(triad);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Triad>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let triads = parse_dataset(BufReader::new(file))?;
    let counts = split_counts(&triads);
    log::info!(
        "loaded {} triads from {} (train {}, val {}, test {})",
        triads.len(),
        path.display(),
        counts.get(&Split::Train).unwrap_or(&0),
        counts.get(&Split::Val).unwrap_or(&0),
        counts.get(&Split::Test).unwrap_or(&0),
    );
    Ok(triads)
}

pub fn write_dataset_to<W: Write>(mut writer: W, triads: &[Triad]) -> std::io::Result<()> {
    for t in triads {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_dataset(path: impl AsRef<Path>, triads: &[Triad]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    write_dataset_to(BufWriter::new(file), triads).map_err(|e| DatasetError::io(path, e))
}

pub fn split_counts(triads: &[Triad]) -> BTreeMap<Split, usize> {
    let mut counts = BTreeMap::new();
    for s in Split::ALL {
        counts.insert(s, 0);
    }
    for t in triads {
        *counts.entry(t.split).or_insert(0) += 1;
    }
    counts
}

pub fn filter_split(triads: &[Triad], split: Split) -> Vec<Triad> {
    triads.iter().filter(|t| t.split == split).cloned().collect()
}

/// A training record with the image decoded in memory.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub text: String,
    pub blendshapes: BlendshapeVector,
    pub emotion: Option<EmotionDistribution>,
    pub image: Option<RgbImage>,
}

/// Builds training examples, decoding images relative to `image_root`.
///
/// With no root, image references are ignored.
pub fn load_examples(triads: &[Triad], image_root: Option<&Path>) -> Result<Vec<TrainingExample>, DatasetError> {
    triads
        .iter()
        .map(|t| {
            let image = match (image_root, &t.image_path) {
                (Some(root), Some(rel)) => {
                    let path = root.join(rel);
                    let img = image::open(&path).map_err(|e| DatasetError::Validation {
                        id: t.id.clone(),
                        message: format!("cannot decode {}: {e}", path.display()),
                    })?;
                    Some(img.to_rgb8())
                }
                _ => None,
            };
            Ok(TrainingExample {
                text: t.text.clone(),
                blendshapes: t.blendshapes.clone(),
                emotion: Some(t.emotion),
                image,
            })
        })
        .collect()
}
