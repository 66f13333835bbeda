//! Browser bindings for three interactive pieces of the library: rendering a
//! face from blendshape weights, scoring a prompt against retrieved emotion
//! distributions, and looking up emotionally similar words.
//!
//! Every export is a thin wrapper over a plain Rust function so the logic can
//! be tested natively; only the wrappers touch JavaScript types.

use std::sync::{Arc, OnceLock};

use emo3d::datagen::{nearest_words, EmotionLexicon};
use emo3d::metric::emo3d_score;
use emo3d::renderer::{FaceRenderer, FaceRig, RenderConfig, RigRenderer};
use emo3d::{BlendshapeVector, EmotionClass, EmotionDistribution, CHANNEL_NAMES, NUM_EMOTIONS};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const LEXICON: &str = include_str!("lexicon.tsv");
const MAX_SIZE: u32 = 512;

fn rig() -> Arc<FaceRig> {
    static RIG: OnceLock<Arc<FaceRig>> = OnceLock::new();
    RIG.get_or_init(|| Arc::new(FaceRig::canonical())).clone()
}

fn lexicon() -> &'static EmotionLexicon {
    static LEX: OnceLock<EmotionLexicon> = OnceLock::new();
    LEX.get_or_init(|| EmotionLexicon::parse(LEXICON.as_bytes()).expect("bundled lexicon parses"))
}

/// RGBA pixels, row-major, of the canonical face deformed by `weights`.
pub fn render_rgba(weights: &[f64], size: u32) -> Result<Vec<u8>, String> {
    if size > MAX_SIZE {
        return Err(format!("size {size} exceeds {MAX_SIZE}"));
    }
    let weights = BlendshapeVector::new(weights).map_err(|e| e.to_string())?;
    let renderer = RigRenderer::new(rig(), RenderConfig { width: size, height: size }).map_err(|e| e.to_string())?;
    let img = renderer.render(&weights).map_err(|e| e.to_string())?;
    let mut rgba = Vec::with_capacity(img.as_raw().len() / 3 * 4);
    for px in img.pixels() {
        rgba.extend_from_slice(&[px[0], px[1], px[2], 255]);
    }
    Ok(rgba)
}

#[derive(Debug, Serialize)]
pub struct Explained {
    pub prompt: [f64; NUM_EMOTIONS],
    pub retrieved_mean: [f64; NUM_EMOTIONS],
    pub kl: f64,
    pub score: f64,
}

/// Scores a prompt distribution against `retrieved`, a flat list of raw
/// 8-value rows. Rows are normalized first, so sliders need not sum to one.
pub fn explain_score(prompt: &[f64], retrieved: &[f64], eps: f64) -> Result<Explained, String> {
    if retrieved.is_empty() || !retrieved.len().is_multiple_of(NUM_EMOTIONS) {
        return Err(format!("retrieved rows must be a non-empty multiple of {NUM_EMOTIONS} values"));
    }
    let phi = EmotionDistribution::normalize(prompt).map_err(|e| format!("prompt: {e}"))?;
    let rows = retrieved
        .chunks(NUM_EMOTIONS)
        .enumerate()
        .map(|(i, row)| EmotionDistribution::normalize(row).map_err(|e| format!("retrieved row {}: {e}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = EmotionDistribution::mean(&rows).map_err(|e| e.to_string())?;
    let s = emo3d_score(&phi, &rows, eps).map_err(|e| e.to_string())?;
    Ok(Explained { prompt: *phi.values(), retrieved_mean: *mean.values(), kl: s.kl, score: s.score })
}

#[derive(Debug, Serialize)]
pub struct Neighbour {
    pub word: String,
    pub similarity: f64,
    pub dominant: &'static str,
}

pub fn neighbours(word: &str, k: usize) -> Result<Vec<Neighbour>, String> {
    let lex = lexicon();
    let found = nearest_words(lex, &word.trim().to_lowercase(), k).map_err(|e| e.to_string())?;
    Ok(found
        .into_iter()
        .map(|(w, similarity)| {
            let dominant = lex.get(&w).map(|d| d.dominant().name()).unwrap_or("neutral");
            Neighbour { word: w, similarity, dominant }
        })
        .collect())
}

fn js_err(message: String) -> JsError {
    JsError::new(&message)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = channelNames)]
pub fn channel_names() -> Vec<String> {
    CHANNEL_NAMES.iter().map(|s| s.to_string()).collect()
}

#[wasm_bindgen(js_name = emotionNames)]
pub fn emotion_names() -> Vec<String> {
    EmotionClass::ALL.iter().map(|c| c.name().to_string()).collect()
}

#[wasm_bindgen(js_name = lexiconWords)]
pub fn lexicon_words() -> Vec<String> {
    lexicon().iter().map(|(w, _)| w.to_string()).collect()
}

#[wasm_bindgen(js_name = renderFace)]
pub fn render_face(weights: &[f64], size: u32) -> Result<Vec<u8>, JsError> {
    render_rgba(weights, size).map_err(js_err)
}

/// JSON `{prompt, retrieved_mean, kl, score}`.
#[wasm_bindgen(js_name = scoreExplorer)]
pub fn score_explorer(prompt: &[f64], retrieved: &[f64], eps: f64) -> Result<String, JsError> {
    to_json(&explain_score(prompt, retrieved, eps).map_err(js_err)?)
}

/// JSON list of `{word, similarity, dominant}`.
#[wasm_bindgen(js_name = nearestWords)]
pub fn nearest_words_json(word: &str, k: usize) -> Result<String, JsError> {
    to_json(&neighbours(word, k).map_err(js_err)?)
}
