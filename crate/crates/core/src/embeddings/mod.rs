//! Text and image encoders that share one embedding space.
//!
//! Every encoder returns L2-normalized `f32` vectors of a fixed dimension.
//! [`MockBackend`] and [`MockLanguageModel`] are deterministic hash-seeded
//! stand-ins that need no weights; [`CommandBackend`] drives a pretrained
//! encoder running in another process.

pub(crate) mod cache;
mod command;
mod mock;

use image::RgbImage;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CachedBackend, EmbeddingCache, Modality, CACHE_DIR_ENV};
pub use command::CommandBackend;
pub use mock::{MockBackend, MockLanguageModel, Pooling};

/// Default joint-space dimensionality.
pub const DEFAULT_CLIP_DIM: usize = 512;
/// Sentence-embedding width of the language-model baselines.
pub const LM_DIM: usize = 768;

pub type Embedding = Vec<f32>;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("backend unavailable: {0}")]
    Backend(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("invalid image: {0}")]
    Image(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("item {index}: {source}")]
    Item { index: usize, source: Box<EmbeddingError> },
    #[error("cache error: {0}")]
    Cache(String),
}

pub trait TextEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Embedding, EmbeddingError>;

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        batch(texts, |t| self.embed_text(t))
    }
}

pub trait ImageEncoder: Send + Sync {
    fn embed_image(&self, image: &RgbImage) -> Result<Embedding, EmbeddingError>;

    fn embed_images(&self, images: &[&RgbImage]) -> Result<Vec<Embedding>, EmbeddingError> {
        batch(images, |i| self.embed_image(i))
    }
}

/// An encoder pair mapping text and images into one space.
pub trait EmbeddingBackend: TextEncoder + ImageEncoder {}

impl<T: TextEncoder + ImageEncoder> EmbeddingBackend for T {}

impl<T: TextEncoder + ?Sized> TextEncoder for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_text(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        (**self).embed_text(text)
    }
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        (**self).embed_texts(texts)
    }
}

impl<T: ImageEncoder + ?Sized> ImageEncoder for std::sync::Arc<T> {
    fn embed_image(&self, image: &RgbImage) -> Result<Embedding, EmbeddingError> {
        (**self).embed_image(image)
    }
    fn embed_images(&self, images: &[&RgbImage]) -> Result<Vec<Embedding>, EmbeddingError> {
        (**self).embed_images(images)
    }
}

fn batch<T, F>(items: &[T], mut f: F) -> Result<Vec<Embedding>, EmbeddingError>
where
    F: FnMut(&T) -> Result<Embedding, EmbeddingError>,
{
    if items.is_empty() {
        return Err(EmbeddingError::EmptyBatch);
    }
    items
        .iter()
        .enumerate()
        .map(|(index, item)| f(item).map_err(|e| EmbeddingError::Item { index, source: Box::new(e) }))
        .collect()
}

/// Scales to unit length in f64 before narrowing.
pub fn l2_normalize(v: &[f64]) -> Embedding {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.iter().map(|&x| x as f32).collect();
    }
    v.iter().map(|&x| (x / norm) as f32).collect()
}

/// Content hash of an image: dimensions followed by raw RGB bytes.
pub fn image_digest(image: &RgbImage) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(image.width().to_le_bytes());
    h.update(image.height().to_le_bytes());
    h.update(image.as_raw());
    h.finalize().into()
}

pub fn text_digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

pub(crate) fn check_image(image: &RgbImage) -> Result<(), EmbeddingError> {
    if image.width() == 0 || image.height() == 0 {
        return Err(EmbeddingError::Image(format!("zero-sized image {}x{}", image.width(), image.height())));
    }
    Ok(())
}

pub fn embedding_to_f64(e: &[f32]) -> Vec<f64> {
    e.iter().map(|&x| x as f64).collect()
}
