//! Emo3D: an emotion-aware evaluation metric for text-to-3D facial expression
//! generation, the baseline models it was introduced with, and the tooling to
//! build and analyse emotion description corpora.
//!
//! The crate is organised bottom-up:
//!
//! * [`emotion`], [`blendshape`], [`math`] and [`dataset`] hold the domain types
//!   and pure functions everything else builds on.
//! * [`embeddings`] provides text and image encoders sharing one space.
//! * [`renderer`] turns blendshape weights into a frontal image.
//! * [`metric`] scores models; [`models`] trains them.
//! * [`datagen`] and [`analysis`] create and describe corpora.

pub mod analysis;
pub mod blendshape;
pub mod datagen;
pub mod dataset;
pub mod embeddings;
pub mod emotion;
pub mod math;
pub mod metric;
pub mod models;
mod process;
pub mod renderer;
pub mod synthetic;

/// Version of this library, recorded in manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use blendshape::{BlendshapeVector, CHANNEL_NAMES, NUM_BLENDSHAPES};
pub use dataset::{load_dataset, Split, Triad};
pub use emotion::{normalize_distribution, EmotionClass, EmotionDistribution, NUM_EMOTIONS};
pub use math::{cosine_similarity, kl_divergence, mse, one_hot};
