//! Face trackers that turn an image into blendshape scores.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use base64::Engine;
use image::RgbImage;
use serde::Deserialize;
use serde_json::json;

use super::DatagenError;
use crate::blendshape::{channel_index, BlendshapeVector, NUM_BLENDSHAPES};
use crate::embeddings::image_digest;
use crate::process::JsonLinesProcess;
use crate::renderer::decode_pixel_code;

pub trait BlendshapeTracker: Send + Sync {
    /// Identifier recorded in dataset manifests.
    fn id(&self) -> &str;
    /// Scores for the most prominent face, or [`DatagenError::NoFace`].
    fn track(&self, image: &RgbImage) -> Result<BlendshapeVector, DatagenError>;
}

/// Runs `tracker` on `image` after rejecting empty frames.
pub fn extract_blendshapes(
    tracker: &dyn BlendshapeTracker,
    image: &RgbImage,
) -> Result<BlendshapeVector, DatagenError> {
    if image.width() == 0 || image.height() == 0 {
        return Err(DatagenError::Tracker(format!("empty {}x{} image", image.width(), image.height())));
    }
    tracker.track(image)
}

/// Returns planted scores for known images and finds no face anywhere else.
#[derive(Debug, Default)]
pub struct PlantedTracker {
    planted: HashMap<[u8; 32], BlendshapeVector>,
}

impl PlantedTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn plant(&mut self, image: &RgbImage, weights: BlendshapeVector) {
        self.planted.insert(image_digest(image), weights);
    }
}

impl BlendshapeTracker for PlantedTracker {
    fn id(&self) -> &str {
        "planted"
    }

    fn track(&self, image: &RgbImage) -> Result<BlendshapeVector, DatagenError> {
        self.planted.get(&image_digest(image)).cloned().ok_or(DatagenError::NoFace)
    }
}

/// Reads weights back from images that carry a pixel code.
#[derive(Debug, Default, Clone, Copy)]
pub struct PixelCodeTracker;

impl BlendshapeTracker for PixelCodeTracker {
    fn id(&self) -> &str {
        "pixel-code"
    }

    fn track(&self, image: &RgbImage) -> Result<BlendshapeVector, DatagenError> {
        decode_pixel_code(image).ok_or(DatagenError::NoFace)
    }
}

/// A tracker in a separate process speaking JSON lines.
///
/// Request: `{"width": w, "height": h, "rgb": "<base64>"}`. Reply: either
/// `{"blendshapes": {"browDownLeft": 0.1, ...}}` with all 52 channels,
/// `{"no_face": true}`, or `{"error": "..."}`.
pub struct CommandTracker {
    id: String,
    pipe: Mutex<JsonLinesProcess>,
}

#[derive(Deserialize)]
struct TrackReply {
    blendshapes: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    no_face: bool,
    error: Option<String>,
}

impl CommandTracker {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, DatagenError> {
        let pipe = JsonLinesProcess::spawn(program, args).map_err(DatagenError::Tracker)?;
        let id = std::iter::once(program).chain(args.iter().map(String::as_str)).collect::<Vec<_>>().join(" ");
        Ok(Self { id: format!("command:{id}"), pipe: Mutex::new(pipe) })
    }
}

fn parse_reply(line: &str) -> Result<BlendshapeVector, DatagenError> {
    let reply: TrackReply =
        serde_json::from_str(line).map_err(|e| DatagenError::Tracker(format!("bad reply {:?}: {e}", line.trim())))?;
    if let Some(msg) = reply.error {
        return Err(DatagenError::Tracker(msg));
    }
    if reply.no_face {
        return Err(DatagenError::NoFace);
    }
    let scores = reply.blendshapes.ok_or_else(|| DatagenError::Tracker("reply has no blendshapes".into()))?;
    let mut w = [f64::NAN; NUM_BLENDSHAPES];
    for (name, v) in scores {
        let i = channel_index(&name).ok_or_else(|| DatagenError::Tracker(format!("unknown channel {name:?}")))?;
        w[i] = v;
    }
    if let Some(i) = w.iter().position(|v| v.is_nan()) {
        return Err(DatagenError::Tracker(format!("channel {} missing from reply", crate::CHANNEL_NAMES[i])));
    }
    // Landmark tools can overshoot by float noise.
    let w: Vec<f64> = w
        .iter()
        .map(|&v| {
            if (-1e-6..0.0).contains(&v) {
                0.0
            } else if v > 1.0 && v < 1.0 + 1e-6 {
                1.0
            } else {
                v
            }
        })
        .collect();
    BlendshapeVector::new(&w).map_err(|e| DatagenError::Tracker(e.to_string()))
}

impl BlendshapeTracker for CommandTracker {
    fn id(&self) -> &str {
        &self.id
    }

    fn track(&self, image: &RgbImage) -> Result<BlendshapeVector, DatagenError> {
        let rgb = base64::engine::general_purpose::STANDARD.encode(image.as_raw());
        let line = self
            .pipe
            .lock()
            .map_err(|_| DatagenError::Tracker("tracker pipe poisoned".into()))?
            .call(&json!({"width": image.width(), "height": image.height(), "rgb": rgb}))
            .map_err(DatagenError::Tracker)?;
        parse_reply(&line)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renderer::{FaceRenderer, PixelCodeRenderer};
    use crate::CHANNEL_NAMES;

    #[test]
    fn planted_tracker_returns_the_planted_vector() {
        let img = RgbImage::from_pixel(8, 8, image::Rgb([1, 2, 3]));
        let w = BlendshapeVector::basis(5);
        let mut t = PlantedTracker::new();
        t.plant(&img, w.clone());
        assert_eq!(extract_blendshapes(&t, &img).unwrap(), w);
        let other = RgbImage::from_pixel(8, 8, image::Rgb([0, 0, 0]));
        assert!(matches!(t.track(&other), Err(DatagenError::NoFace)));
    }

    #[test]
    fn pixel_code_tracker_inverts_the_mock_renderer() {
        let w = crate::synthetic::class_signature(crate::EmotionClass::Fear);
        let img = PixelCodeRenderer::default().render(&w).unwrap();
        let got = PixelCodeTracker.track(&img).unwrap();
        for (a, b) in got.weights().iter().zip(w.weights()) {
            assert!((a - b).abs() <= 0.5 / 65535.0);
        }
        let blank = RgbImage::new(64, 64);
        assert!(matches!(PixelCodeTracker.track(&blank), Err(DatagenError::NoFace)));
        assert!(matches!(extract_blendshapes(&PixelCodeTracker, &RgbImage::new(0, 0)), Err(DatagenError::Tracker(_))));
    }

    #[test]
    fn reply_parsing() {
        let full: BTreeMap<&str, f64> = CHANNEL_NAMES.iter().map(|&n| (n, 0.25)).collect();
        let line = json!({ "blendshapes": full }).to_string();
        assert_eq!(parse_reply(&line).unwrap(), BlendshapeVector::splat(0.25).unwrap());
        assert!(matches!(parse_reply(r#"{"no_face": true}"#), Err(DatagenError::NoFace)));
        assert!(matches!(parse_reply(r#"{"error": "boom"}"#), Err(DatagenError::Tracker(m)) if m == "boom"));
        let mut partial = full.clone();
        partial.remove("jawOpen");
        let line = json!({ "blendshapes": partial }).to_string();
        assert!(matches!(parse_reply(&line), Err(DatagenError::Tracker(m)) if m.contains("jawOpen")));
    }

    // Reports a face only when the image is not a single flat colour.
    const FAKE: &str = r#"
import sys, json, base64
names = sys.argv[1].split(",")
for line in sys.stdin:
    r = json.loads(line)
    raw = base64.b64decode(r["rgb"])
    if len(set(raw[i:i+3] for i in range(0, len(raw), 3))) == 1:
        print(json.dumps({"no_face": True}))
    else:
        print(json.dumps({"blendshapes": {n: (sum(raw) % 7) / 10 for n in names}}))
    sys.stdout.flush()
"#;

    #[test]
    fn command_tracker_protocol() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("tracker.py");
        std::fs::write(&script, FAKE).unwrap();
        let Ok(t) = CommandTracker::spawn("python3", &[script.display().to_string(), CHANNEL_NAMES.join(",")]) else {
            eprintln!("python3 unavailable; skipping");
            return;
        };
        let blank = RgbImage::from_pixel(16, 16, image::Rgb([200, 200, 200]));
        assert!(matches!(t.track(&blank), Err(DatagenError::NoFace)));
        let mut face = blank.clone();
        face.put_pixel(3, 3, image::Rgb([0, 0, 0]));
        let w = t.track(&face).unwrap();
        assert!(w.weights().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
