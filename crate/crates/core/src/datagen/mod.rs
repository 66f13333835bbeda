//! The dataset construction pipeline.
//!
//! Descriptions come from a text generator, emotion labels from a second
//! prompt to the same generator, images from an image generator and
//! blendshapes from a face tracker run on each image. Every external service
//! sits behind a trait with offline implementations, so whole runs can be
//! replayed byte for byte.

mod client;
mod lexicon;
#[cfg(feature = "live")]
mod live;
mod pipeline;
mod templates;
mod tracker;

use std::path::PathBuf;

use thiserror::Error;

pub use client::{
    CachedImageClient, CachedTextClient, ClientError, ImageGenClient, ImageRequest, RateLimited, RetryPolicy,
    StubImageClient, StubTextClient, SyntheticImageClient, SyntheticTextClient, TextGenClient, TextRequest,
    TokenBucket,
};
pub use lexicon::{nearest_words, EmotionLexicon};
#[cfg(feature = "live")]
pub use live::{LiveImageClient, LiveTextClient, IMAGE_API_KEY_ENV, TEXT_API_KEY_ENV};
pub use pipeline::{
    assign_split, build_triads, extract_emotion_distribution, generate_descriptions, primitive_face_items,
    run_pipeline, triad_id, BuildConfig, BuildReport, Counts, DatagenManifest, Extraction, LabeledText, PipelineConfig,
    SkipRecord, DATAGEN_FORMAT_VERSION,
};
pub use templates::{PromptTemplates, Template, DESCRIBE_TEMPLATE, DISTRIBUTION_TEMPLATE};
pub use tracker::{extract_blendshapes, BlendshapeTracker, CommandTracker, PixelCodeTracker, PlantedTracker};

use crate::dataset::DatasetError;
use crate::emotion::DistributionError;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("client {client} failed after {attempts} attempt(s): {message}")]
    Client { client: String, attempts: usize, message: String },
    #[error("could not generate {wanted} distinct {class} descriptions: {message}")]
    Generation { class: String, wanted: usize, message: String },
    #[error("cannot parse response ({message}); raw payload: {raw:?}")]
    Parse { message: String, raw: String },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("no face detected")]
    NoFace,
    #[error("tracker failed: {0}")]
    Tracker(String),
    #[error("{failed} of {total} items failed, above the allowed rate {cap}")]
    Pipeline { failed: usize, total: usize, cap: f64 },
    #[error("word {0:?} is not in the lexicon")]
    Lookup(String),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl DatagenError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}
