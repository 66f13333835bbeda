use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::RenderError;

pub const BACKGROUND: [u8; 3] = [128, 128, 128];

// Direction toward the light, camera looks down -z.
const LIGHT: [f64; 3] = [-0.35, 0.45, 0.82];
const AMBIENT: f64 = 0.35;
const DIFFUSE: f64 = 0.65;
// Model units visible across the shorter image side.
const VIEW_EXTENT: f64 = 2.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { width: 224, height: 224 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width < 16 || self.height < 16 {
            return Err(RenderError::Config(format!("{}x{} is below the 16x16 minimum", self.width, self.height)));
        }
        Ok(())
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 0.0).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

/// Orthographic frontal render with flat shading, a fixed directional light and a z-buffer.
pub fn render_frontal(
    vertices: &[[f64; 3]],
    faces: &[[u32; 3]],
    colors: &[[u8; 3]],
    config: &RenderConfig,
) -> Result<RgbImage, RenderError> {
    config.validate()?;
    if vertices.is_empty() {
        return Err(RenderError::DegenerateMesh("no vertices".into()));
    }
    if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
        return Err(RenderError::DegenerateMesh("non-finite vertex".into()));
    }
    if colors.len() != faces.len() {
        return Err(RenderError::DegenerateMesh(format!("{} colors for {} faces", colors.len(), faces.len())));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in vertices {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    if hi[0] - lo[0] < 1e-12 && hi[1] - lo[1] < 1e-12 {
        return Err(RenderError::DegenerateMesh("all vertices coincide".into()));
    }

    let (w, h) = (config.width as usize, config.height as usize);
    let scale = w.min(h) as f64 / VIEW_EXTENT;
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let project = |v: &[f64; 3]| [cx + v[0] * scale, cy - v[1] * scale, v[2]];
    let light = normalize(LIGHT).expect("light direction");

    let mut img = RgbImage::from_pixel(config.width, config.height, Rgb(BACKGROUND));
    let mut depth = vec![f64::NEG_INFINITY; w * h];

    for (face, color) in faces.iter().zip(colors) {
        let idx = face.map(|i| i as usize);
        if idx.iter().any(|&i| i >= vertices.len()) {
            return Err(RenderError::DegenerateMesh(format!("face {face:?} out of range")));
        }
        let [a, b, c] = idx.map(|i| vertices[i]);
        let Some(mut n) = normalize(cross(sub(b, a), sub(c, a))) else { continue };
        if n[2] < 0.0 {
            n = [-n[0], -n[1], -n[2]];
        }
        let lambert = (n[0] * light[0] + n[1] * light[1] + n[2] * light[2]).max(0.0);
        let shade = AMBIENT + DIFFUSE * lambert;
        let rgb = Rgb(color.map(|ch| (ch as f64 * shade).round().clamp(0.0, 255.0) as u8));

        let [p0, p1, p2] = [project(&a), project(&b), project(&c)];
        let area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = p0[0].min(p1[0]).min(p2[0]).floor().max(0.0) as usize;
        let max_x = (p0[0].max(p1[0]).max(p2[0]).ceil() as isize).clamp(0, w as isize) as usize;
        let min_y = p0[1].min(p1[1]).min(p2[1]).floor().max(0.0) as usize;
        let max_y = (p0[1].max(p1[1]).max(p2[1]).ceil() as isize).clamp(0, h as isize) as usize;

        for py in min_y..max_y {
            let sy = py as f64 + 0.5;
            for px in min_x..max_x {
                let sx = px as f64 + 0.5;
                let w0 = ((p1[0] - sx) * (p2[1] - sy) - (p1[1] - sy) * (p2[0] - sx)) / area;
                let w1 = ((p2[0] - sx) * (p0[1] - sy) - (p2[1] - sy) * (p0[0] - sx)) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * p0[2] + w1 * p1[2] + w2 * p2[2];
                let slot = &mut depth[py * w + px];
                if z > *slot {
                    *slot = z;
                    img.put_pixel(px as u32, py as u32, rgb);
                }
            }
        }
    }
    Ok(img)
}
