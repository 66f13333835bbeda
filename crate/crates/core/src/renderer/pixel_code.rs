use image::{Rgb, RgbImage};

use super::{FaceRenderer, RenderConfig, RenderError, BACKGROUND};
use crate::blendshape::{BlendshapeVector, NUM_BLENDSHAPES};

pub const PIXEL_CODE_NAME: &str = "pixel-code";

const MAGIC: [u8; 3] = *b"E3D";
const CHECK: u8 = 0x5a;

/// Writes the weights into the first row of pixels instead of drawing a face.
///
/// Pixel 0 holds a magic marker; pixel `1 + i` holds channel `i` quantized to
/// 16 bits (high byte, low byte, checksum). Distinct weight vectors map to
/// distinct images down to a resolution of 1/65535.
#[derive(Debug, Clone)]
pub struct PixelCodeRenderer {
    config: RenderConfig,
}

impl PixelCodeRenderer {
    pub fn new(config: RenderConfig) -> Result<Self, RenderError> {
        config.validate()?;
        if (config.width as usize) < NUM_BLENDSHAPES + 1 {
            return Err(RenderError::Config(format!("pixel code needs width >= {}", NUM_BLENDSHAPES + 1)));
        }
        Ok(Self { config })
    }
}

impl Default for PixelCodeRenderer {
    fn default() -> Self {
        Self { config: RenderConfig { width: 64, height: 64 } }
    }
}

impl FaceRenderer for PixelCodeRenderer {
    fn name(&self) -> &str {
        PIXEL_CODE_NAME
    }

    fn render(&self, weights: &BlendshapeVector) -> Result<RgbImage, RenderError> {
        let mut img = RgbImage::from_pixel(self.config.width, self.config.height, Rgb(BACKGROUND));
        stamp_pixel_code(&mut img, weights)?;
        Ok(img)
    }
}

/// Overwrites the first pixel row of `img` with the code for `weights`.
pub fn stamp_pixel_code(img: &mut RgbImage, weights: &BlendshapeVector) -> Result<(), RenderError> {
    if (img.width() as usize) < NUM_BLENDSHAPES + 1 || img.height() == 0 {
        return Err(RenderError::Config(format!("pixel code needs width >= {}", NUM_BLENDSHAPES + 1)));
    }
    img.put_pixel(0, 0, Rgb(MAGIC));
    for (i, &w) in weights.weights().iter().enumerate() {
        let q = (w * 65535.0).round() as u16;
        let [hi, lo] = q.to_be_bytes();
        img.put_pixel(i as u32 + 1, 0, Rgb([hi, lo, hi ^ lo ^ CHECK]));
    }
    Ok(())
}

/// Recovers weights from a [`PixelCodeRenderer`] image, or `None` if the image carries no code.
pub fn decode_pixel_code(img: &RgbImage) -> Option<BlendshapeVector> {
    if (img.width() as usize) < NUM_BLENDSHAPES + 1 || img.height() == 0 || img.get_pixel(0, 0).0 != MAGIC {
        return None;
    }
    let mut w = [0.0; NUM_BLENDSHAPES];
    for (i, slot) in w.iter_mut().enumerate() {
        let [hi, lo, check] = img.get_pixel(i as u32 + 1, 0).0;
        if hi ^ lo ^ CHECK != check {
            return None;
        }
        *slot = u16::from_be_bytes([hi, lo]) as f64 / 65535.0;
    }
    BlendshapeVector::new(&w).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_within_quantization() {
        let w: Vec<f64> = (0..NUM_BLENDSHAPES).map(|i| i as f64 / 51.0).collect();
        let v = BlendshapeVector::new(&w).unwrap();
        let img = PixelCodeRenderer::default().render(&v).unwrap();
        let back = decode_pixel_code(&img).unwrap();
        for (a, b) in v.weights().iter().zip(back.weights()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn plain_images_carry_no_code() {
        assert!(decode_pixel_code(&RgbImage::new(64, 64)).is_none());
        assert!(decode_pixel_code(&RgbImage::new(8, 8)).is_none());
    }

    #[test]
    fn distinct_vectors_give_distinct_images() {
        let r = PixelCodeRenderer::default();
        let a = r.render(&BlendshapeVector::zeros()).unwrap();
        let b = r.render(&BlendshapeVector::basis(7)).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, r.render(&BlendshapeVector::zeros()).unwrap());
    }

    #[test]
    fn narrow_config_rejected() {
        assert!(PixelCodeRenderer::new(RenderConfig { width: 32, height: 32 }).is_err());
    }
}
