use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::blendshape::{BlendshapeVector, CHANNEL_NAMES, NUM_BLENDSHAPES};

pub const CANONICAL_RIG_NAME: &str = "canonical-grid-v1";

const MANIFEST_FILE: &str = "rig.json";

/// Material of a triangle; decides its base color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Skin,
    Brow,
    Sclera,
    Iris,
    Lips,
    Mouth,
}

impl Region {
    const ALL: [Region; 6] = [Region::Skin, Region::Brow, Region::Sclera, Region::Iris, Region::Lips, Region::Mouth];

    pub fn color(self) -> [u8; 3] {
        match self {
            Region::Skin => [224, 184, 158],
            Region::Brow => [72, 52, 38],
            Region::Sclera => [238, 238, 232],
            Region::Iris => [58, 42, 32],
            Region::Lips => [176, 74, 78],
            Region::Mouth => [44, 18, 24],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Region::Skin => "skin",
            Region::Brow => "brow",
            Region::Sclera => "sclera",
            Region::Iris => "iris",
            Region::Lips => "lips",
            Region::Mouth => "mouth",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

/// A neutral mesh plus one vertex-offset field per blendshape channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceRig {
    pub name: String,
    pub neutral: Vec<[f64; 3]>,
    /// One offset per neutral vertex, for each of the 52 channels in canonical order.
    pub deltas: Vec<Vec<[f64; 3]>>,
    pub faces: Vec<[u32; 3]>,
    pub regions: Vec<Region>,
}

#[derive(Serialize, Deserialize)]
struct RigManifest {
    name: String,
    neutral: String,
    deltas_dir: String,
    channels: Vec<String>,
}

impl FaceRig {
    pub fn validate(&self) -> Result<(), RenderError> {
        let invalid = |m: String| Err(RenderError::InvalidRig(m));
        let v = self.neutral.len();
        if v == 0 {
            return invalid("no vertices".into());
        }
        if self.deltas.len() != NUM_BLENDSHAPES {
            return invalid(format!("{} delta targets, expected {NUM_BLENDSHAPES}", self.deltas.len()));
        }
        for (i, d) in self.deltas.iter().enumerate() {
            if d.len() != v {
                return invalid(format!("delta {} has {} vertices, neutral has {v}", CHANNEL_NAMES[i], d.len()));
            }
        }
        let finite = |p: &[f64; 3]| p.iter().all(|c| c.is_finite());
        if !self.neutral.iter().all(finite) || !self.deltas.iter().flatten().all(finite) {
            return invalid("non-finite coordinate".into());
        }
        if self.regions.len() != self.faces.len() {
            return invalid("one region per face required".into());
        }
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i as usize >= v)) {
            return invalid(format!("face {f:?} references a missing vertex"));
        }
        Ok(())
    }

    /// `neutral + sum_i w_i * delta_i`, per vertex.
    pub fn apply_blendshapes(&self, weights: &BlendshapeVector) -> Vec<[f64; 3]> {
        let mut out = self.neutral.clone();
        for (w, delta) in weights.weights().iter().zip(&self.deltas) {
            if *w == 0.0 {
                continue;
            }
            for (o, d) in out.iter_mut().zip(delta) {
                o[0] += w * d[0];
                o[1] += w * d[1];
                o[2] += w * d[2];
            }
        }
        out
    }

    pub fn face_colors(&self) -> Vec<[u8; 3]> {
        self.regions.iter().map(|r| r.color()).collect()
    }

    /// The bundled procedural face: an elliptical height-field grid with
    /// painted brows, eyes and lips, and a hand-tuned offset field per channel.
    pub fn canonical() -> Self {
        canonical::build()
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, RenderError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: RigManifest = serde_json::from_str(&read(&manifest_path)?)
            .map_err(|e| RenderError::InvalidRig(format!("{}: {e}", manifest_path.display())))?;
        let neutral_path = dir.join(&manifest.neutral);
        let (neutral, faces, regions) = parse_obj(&read(&neutral_path)?, true)
            .map_err(|m| RenderError::InvalidRig(format!("{}: {m}", neutral_path.display())))?;

        let mut deltas: Vec<Option<Vec<[f64; 3]>>> = vec![None; NUM_BLENDSHAPES];
        for channel in &manifest.channels {
            let idx = crate::blendshape::channel_index(channel)
                .ok_or_else(|| RenderError::InvalidRig(format!("unknown channel {channel:?}")))?;
            let path = dir.join(&manifest.deltas_dir).join(format!("{channel}.obj"));
            let (verts, _, _) = parse_obj(&read(&path)?, false)
                .map_err(|m| RenderError::InvalidRig(format!("{}: {m}", path.display())))?;
            deltas[idx] = Some(verts);
        }
        let deltas = deltas
            .into_iter()
            .enumerate()
            .map(|(i, d)| d.ok_or_else(|| RenderError::InvalidRig(format!("missing channel {}", CHANNEL_NAMES[i]))))
            .collect::<Result<Vec<_>, _>>()?;

        let rig = Self { name: manifest.name, neutral, deltas, faces, regions };
        rig.validate()?;
        Ok(rig)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<(), RenderError> {
        let dir = dir.as_ref();
        let deltas_dir = dir.join("deltas");
        fs::create_dir_all(&deltas_dir).map_err(|e| io_err(&deltas_dir, e))?;
        let manifest = RigManifest {
            name: self.name.clone(),
            neutral: "neutral.obj".into(),
            deltas_dir: "deltas".into(),
            channels: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        write(&dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;

        let mut obj = String::from("# neutral face mesh\n");
        push_vertices(&mut obj, &self.neutral);
        let mut current = None;
        for (f, r) in self.faces.iter().zip(&self.regions) {
            if current != Some(*r) {
                let _ = writeln!(obj, "usemtl {}", r.name());
                current = Some(*r);
            }
            let _ = writeln!(obj, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        write(&dir.join("neutral.obj"), &obj)?;

        for (name, delta) in CHANNEL_NAMES.iter().zip(&self.deltas) {
            let mut s = format!("# per-vertex offsets for {name}\n");
            push_vertices(&mut s, delta);
            write(&deltas_dir.join(format!("{name}.obj")), &s)?;
        }
        Ok(())
    }
}

fn push_vertices(out: &mut String, verts: &[[f64; 3]]) {
    for v in verts {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
}

type ObjMesh = (Vec<[f64; 3]>, Vec<[u32; 3]>, Vec<Region>);

fn parse_obj(text: &str, with_faces: bool) -> Result<ObjMesh, String> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    let mut regions = Vec::new();
    let mut region = Region::Skin;
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let c: Vec<f64> = parts
                    .map(|p| p.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1)))
                    .collect::<Result<_, _>>()?;
                if c.len() < 3 {
                    return Err(format!("line {}: vertex needs 3 coordinates", n + 1));
                }
                verts.push([c[0], c[1], c[2]]);
            }
            Some("f") if with_faces => {
                let idx: Vec<u32> = parts
                    .map(|p| {
                        let first = p.split('/').next().unwrap_or(p);
                        first
                            .parse::<u32>()
                            .ok()
                            .filter(|&i| i > 0)
                            .map(|i| i - 1)
                            .ok_or_else(|| format!("line {}: bad face index {p:?}", n + 1))
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(format!("line {}: face needs 3 vertices", n + 1));
                }
                // fan-triangulate polygons
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                    regions.push(region);
                }
            }
            Some("usemtl") => {
                let name = parts.next().unwrap_or("");
                region = Region::parse(name).unwrap_or(Region::Skin);
            }
            _ => {}
        }
    }
    Ok((verts, faces, regions))
}

fn io_err(path: &Path, e: std::io::Error) -> RenderError {
    RenderError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn read(path: &Path) -> Result<String, RenderError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), RenderError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

mod canonical {
    use super::{FaceRig, Region, CANONICAL_RIG_NAME};
    use crate::blendshape::{channel_index, CHANNEL_NAMES, NUM_BLENDSHAPES};

    const COLS: usize = 49;
    const ROWS: usize = 63;
    const HALF_W: f64 = 1.0;
    const HALF_H: f64 = 1.3;
    const STEP_X: f64 = 2.0 * HALF_W / (COLS - 1) as f64;
    const STEP_Y: f64 = 2.0 * HALF_H / (ROWS - 1) as f64;

    const EYE_Y: f64 = 0.22;
    const EYE_X: f64 = 0.38;
    const EYE_RX: f64 = 0.19;
    const EYE_RY: f64 = 0.09;
    const IRIS_R: f64 = 0.07;
    const BROW_Y: f64 = 0.47;
    const LIP_RX: f64 = 0.32;
    const LIP_RY: f64 = 0.12;

    // Halfway between two grid rows so the mouth slit is exactly one cell tall.
    fn mouth_y() -> f64 {
        let row = ((-0.55 + HALF_H) / STEP_Y).floor();
        -HALF_H + (row + 0.5) * STEP_Y
    }

    fn gauss(x: f64, y: f64, cx: f64, cy: f64, sx: f64, sy: f64) -> f64 {
        let dx = (x - cx) / sx;
        let dy = (y - cy) / sy;
        (-0.5 * (dx * dx + dy * dy)).exp()
    }

    fn inside_face(x: f64, y: f64) -> bool {
        (x / HALF_W).powi(2) + (y / HALF_H).powi(2) <= 1.0 + 1e-9
    }

    fn depth(x: f64, y: f64) -> f64 {
        let r = 1.0 - (x / HALF_W).powi(2) - (y / HALF_H).powi(2);
        let shell = 0.6 * r.max(0.0).sqrt();
        let nose = 0.22 * gauss(x, y, 0.0, -0.1, 0.09, 0.2);
        shell + nose
    }

    fn region_at(x: f64, y: f64) -> Region {
        let my = mouth_y();
        for side in [-1.0, 1.0] {
            let ex = side * EYE_X;
            let dx = x - ex;
            let dy = y - EYE_Y;
            if dx * dx + dy * dy <= IRIS_R * IRIS_R {
                return Region::Iris;
            }
            if (dx / EYE_RX).powi(2) + (dy / EYE_RY).powi(2) <= 1.0 {
                return Region::Sclera;
            }
            let bx = (x - side * 0.4) / 0.26;
            if bx.abs() <= 1.0 {
                let arc = BROW_Y + 0.05 * (1.0 - bx * bx);
                if (y - arc).abs() <= 0.045 {
                    return Region::Brow;
                }
            }
        }
        let lip = (x / LIP_RX).powi(2) + ((y - my) / LIP_RY).powi(2);
        if lip <= 1.0 {
            if (y - my).abs() < STEP_Y * 0.5 && x.abs() < LIP_RX * 0.9 {
                return Region::Mouth;
            }
            return Region::Lips;
        }
        Region::Skin
    }

    fn smoothstep(e0: f64, e1: f64, v: f64) -> f64 {
        let t = ((v - e0) / (e1 - e0)).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }

    /// Offset of a neutral vertex for one channel at unit weight.
    fn channel_offset(name: &str, p: [f64; 3]) -> [f64; 3] {
        let [x, y, _] = p;
        let my = mouth_y();
        // +1 for the subject's left (viewer's right), -1 for the right.
        let side = if name.ends_with("Left") {
            1.0
        } else if name.ends_with("Right") {
            -1.0
        } else {
            0.0
        };
        let ex = side * EYE_X;
        let eye_mask = |scale: f64| {
            let r = ((x - ex) / (EYE_RX * scale)).powi(2) + ((y - EYE_Y) / (EYE_RY * scale)).powi(2);
            (1.0 - r).clamp(0.0, 1.0)
        };
        let iris_mask = gauss(x, y, ex, EYE_Y, IRIS_R * 0.8, IRIS_R * 0.8);
        let lip_mask = gauss(x, y, 0.0, my, LIP_RX * 0.8, LIP_RY * 1.2);
        let side_lip = gauss(x, y, side * 0.2, my, 0.14, LIP_RY * 1.2);
        let corner = gauss(x, y, side * LIP_RX, my, 0.1, 0.09);
        let below_mouth = if y < my { 1.0 } else { 0.0 };
        let above_mouth = 1.0 - below_mouth;
        let jaw = below_mouth * gauss(x, 0.0, 0.0, 0.0, 0.5, 1.0);

        match name {
            "_neutral" => [0.0, 0.0, 0.0],
            "browDownLeft" | "browDownRight" => {
                let g = gauss(x, y, side * 0.36, BROW_Y, 0.18, 0.09);
                [-side * 0.03 * g, -0.08 * g, 0.0]
            }
            "browInnerUp" => {
                let g = gauss(x, y, -0.18, BROW_Y, 0.1, 0.09) + gauss(x, y, 0.18, BROW_Y, 0.1, 0.09);
                [0.0, 0.09 * g, 0.0]
            }
            "browOuterUpLeft" | "browOuterUpRight" => {
                let g = gauss(x, y, side * 0.58, BROW_Y, 0.12, 0.09);
                [0.0, 0.09 * g, 0.0]
            }
            "cheekPuff" => {
                let gl = gauss(x, y, 0.55, -0.3, 0.18, 0.2);
                let gr = gauss(x, y, -0.55, -0.3, 0.18, 0.2);
                [0.07 * (gl - gr), 0.0, 0.12 * (gl + gr)]
            }
            "cheekSquintLeft" | "cheekSquintRight" => {
                let g = gauss(x, y, side * 0.45, -0.02, 0.16, 0.1);
                [0.0, 0.05 * g, 0.02 * g]
            }
            "eyeBlinkLeft" | "eyeBlinkRight" => [0.0, -(y - EYE_Y) * 0.92 * eye_mask(1.35), 0.0],
            "eyeSquintLeft" | "eyeSquintRight" => [0.0, -(y - EYE_Y) * 0.45 * eye_mask(1.35), 0.0],
            "eyeWideLeft" | "eyeWideRight" => [0.0, (y - EYE_Y) * 0.6 * eye_mask(1.35), 0.0],
            "eyeLookDownLeft" | "eyeLookDownRight" => [0.0, -0.045 * iris_mask, 0.0],
            "eyeLookUpLeft" | "eyeLookUpRight" => [0.0, 0.045 * iris_mask, 0.0],
            // "in" points toward the nose
            "eyeLookInLeft" | "eyeLookInRight" => [-side * 0.07 * iris_mask, 0.0, 0.0],
            "eyeLookOutLeft" | "eyeLookOutRight" => [side * 0.07 * iris_mask, 0.0, 0.0],
            "jawForward" => [0.0, 0.0, 0.1 * smoothstep(-0.3, -0.8, y) * gauss(x, 0.0, 0.0, 0.0, 0.5, 1.0)],
            "jawLeft" | "jawRight" => [side * 0.09 * jaw, 0.0, 0.0],
            "jawOpen" => [0.0, -0.3 * jaw, -0.04 * jaw],
            "mouthClose" => [0.0, 0.03 * below_mouth * lip_mask, 0.0],
            "mouthDimpleLeft" | "mouthDimpleRight" => [side * 0.04 * corner, 0.0, -0.03 * corner],
            "mouthFrownLeft" | "mouthFrownRight" => [0.0, -0.09 * corner, 0.0],
            "mouthFunnel" => [-x * 0.2 * lip_mask, (y - my) * 0.8 * lip_mask, 0.05 * lip_mask],
            "mouthLeft" | "mouthRight" => [side * 0.1 * lip_mask, 0.0, 0.0],
            "mouthLowerDownLeft" | "mouthLowerDownRight" => [0.0, -0.08 * below_mouth * side_lip, 0.0],
            "mouthPressLeft" | "mouthPressRight" => [0.0, -(y - my) * 0.4 * side_lip, 0.0],
            "mouthPucker" => [-x * 0.35 * lip_mask, 0.0, 0.06 * lip_mask],
            "mouthRollLower" => [0.0, -(y - my) * 0.5 * below_mouth * lip_mask, -0.02 * below_mouth * lip_mask],
            "mouthRollUpper" => [0.0, -(y - my) * 0.5 * above_mouth * lip_mask, -0.02 * above_mouth * lip_mask],
            "mouthShrugLower" => [0.0, 0.05 * below_mouth * lip_mask, 0.0],
            "mouthShrugUpper" => [0.0, 0.05 * above_mouth * lip_mask, 0.0],
            "mouthSmileLeft" | "mouthSmileRight" => [side * 0.06 * corner, 0.11 * corner, 0.0],
            "mouthStretchLeft" | "mouthStretchRight" => [side * 0.1 * corner, -0.02 * corner, 0.0],
            "mouthUpperUpLeft" | "mouthUpperUpRight" => [0.0, 0.07 * above_mouth * side_lip, 0.0],
            "noseSneerLeft" | "noseSneerRight" => {
                let g = gauss(x, y, side * 0.1, -0.12, 0.07, 0.1);
                [0.0, 0.05 * g, 0.02 * g]
            }
            other => unreachable!("no offset field for channel {other}"),
        }
    }

    pub(super) fn build() -> FaceRig {
        let mut index = vec![vec![None; COLS]; ROWS];
        let mut neutral = Vec::new();
        for (r, row) in index.iter_mut().enumerate() {
            let y = -HALF_H + r as f64 * STEP_Y;
            for (c, slot) in row.iter_mut().enumerate() {
                let x = -HALF_W + c as f64 * STEP_X;
                if inside_face(x, y) {
                    *slot = Some(neutral.len() as u32);
                    neutral.push([x, y, depth(x, y)]);
                }
            }
        }

        let mut faces = Vec::new();
        let mut regions = Vec::new();
        let mut push = |tri: [u32; 3], faces: &mut Vec<[u32; 3]>| {
            let c = tri.iter().fold([0.0, 0.0], |acc, &i| {
                let p = neutral[i as usize];
                [acc[0] + p[0] / 3.0, acc[1] + p[1] / 3.0]
            });
            faces.push(tri);
            regions.push(region_at(c[0], c[1]));
        };
        for r in 0..ROWS - 1 {
            for c in 0..COLS - 1 {
                let (a, b, d, e) = (index[r][c], index[r][c + 1], index[r + 1][c], index[r + 1][c + 1]);
                match (a, b, d, e) {
                    (Some(a), Some(b), Some(d), Some(e)) => {
                        push([a, b, e], &mut faces);
                        push([a, e, d], &mut faces);
                    }
                    (Some(a), Some(b), None, Some(e)) => push([a, b, e], &mut faces),
                    (Some(a), Some(b), Some(d), None) => push([a, b, d], &mut faces),
                    (Some(a), None, Some(d), Some(e)) => push([a, e, d], &mut faces),
                    (None, Some(b), Some(d), Some(e)) => push([b, e, d], &mut faces),
                    _ => {}
                }
            }
        }

        let mut deltas = vec![Vec::new(); NUM_BLENDSHAPES];
        for name in CHANNEL_NAMES {
            let idx = channel_index(name).expect("canonical channel");
            deltas[idx] = neutral.iter().map(|&p| channel_offset(name, p)).collect();
        }

        FaceRig { name: CANONICAL_RIG_NAME.to_string(), neutral, deltas, faces, regions }
    }
}
