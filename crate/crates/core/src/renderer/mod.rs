//! Turning blendshape weights into frontal face images.
//!
//! [`RigRenderer`] deforms a [`FaceRig`] with the linear blendshape model and
//! rasterizes it in software. [`PixelCodeRenderer`] skips geometry entirely
//! and writes the weights into pixels, which is what metric tests pair with
//! the planted-pair mock encoder.

mod pixel_code;
mod raster;
mod rig;

use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

use crate::blendshape::BlendshapeVector;

pub use pixel_code::{decode_pixel_code, stamp_pixel_code, PixelCodeRenderer, PIXEL_CODE_NAME};
pub use raster::{render_frontal, RenderConfig, BACKGROUND};
pub use rig::{FaceRig, Region, CANONICAL_RIG_NAME};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("invalid render config: {0}")]
    Config(String),
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub trait FaceRenderer: Send + Sync {
    /// Identifier recorded in reports.
    fn name(&self) -> &str;
    fn render(&self, weights: &BlendshapeVector) -> Result<RgbImage, RenderError>;
}

/// Rasterizes a deformed rig with a fixed frontal camera.
#[derive(Debug, Clone)]
pub struct RigRenderer {
    rig: Arc<FaceRig>,
    config: RenderConfig,
}

impl RigRenderer {
    pub fn new(rig: Arc<FaceRig>, config: RenderConfig) -> Result<Self, RenderError> {
        config.validate()?;
        Ok(Self { rig, config })
    }

    pub fn canonical() -> Self {
        Self { rig: Arc::new(FaceRig::canonical()), config: RenderConfig::default() }
    }

    pub fn rig(&self) -> &FaceRig {
        &self.rig
    }

    pub fn config(&self) -> &RenderConfig {
        &self.config
    }
}

impl FaceRenderer for RigRenderer {
    fn name(&self) -> &str {
        &self.rig.name
    }

    fn render(&self, weights: &BlendshapeVector) -> Result<RgbImage, RenderError> {
        let vertices = self.rig.apply_blendshapes(weights);
        render_frontal(&vertices, &self.rig.faces, &self.rig.face_colors(), &self.config)
    }
}
