//! Encoders running in a separate process.
//!
//! The child reads one JSON request per line on stdin and answers with one
//! JSON line on stdout:
//!
//! ```text
//! {"op": "info"}                                          -> {"name": "...", "dim": 512}
//! {"op": "text", "text": "..."}                           -> {"embedding": [...]}
//! {"op": "image", "width": w, "height": h, "rgb": "<b64>"} -> {"embedding": [...]}
//! ```
//!
//! Any response may instead be `{"error": "..."}`. Requests are serialized,
//! so one child serves all threads.

use std::sync::Mutex;

use base64::Engine;
use image::RgbImage;
use serde::Deserialize;
use serde_json::json;

use super::{check_image, l2_normalize, Embedding, EmbeddingError, ImageEncoder, TextEncoder};
use crate::process::JsonLinesProcess;

pub struct CommandBackend {
    name: String,
    dim: usize,
    pipe: Mutex<JsonLinesProcess>,
}

#[derive(Deserialize)]
struct Info {
    name: String,
    dim: usize,
}

#[derive(Deserialize)]
struct Reply {
    embedding: Option<Vec<f64>>,
    error: Option<String>,
}

fn backend_err(e: impl std::fmt::Display) -> EmbeddingError {
    EmbeddingError::Backend(e.to_string())
}

impl CommandBackend {
    /// Starts `program` and asks it for its name and dimension.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, EmbeddingError> {
        let mut pipe = JsonLinesProcess::spawn(program, args).map_err(EmbeddingError::Backend)?;
        let reply = pipe.call(&json!({"op": "info"})).map_err(EmbeddingError::Backend)?;
        let info: Info = serde_json::from_str(&reply)
            .map_err(|e| EmbeddingError::Backend(format!("bad info reply {reply:?}: {e}")))?;
        if info.dim == 0 {
            return Err(EmbeddingError::Backend("encoder reported dimension 0".into()));
        }
        log::info!("started encoder {} (dim {})", info.name, info.dim);
        Ok(Self { name: info.name, dim: info.dim, pipe: Mutex::new(pipe) })
    }

    fn embed(&self, request: serde_json::Value) -> Result<Embedding, EmbeddingError> {
        let reply = self
            .pipe
            .lock()
            .map_err(|_| backend_err("encoder pipe poisoned"))?
            .call(&request)
            .map_err(EmbeddingError::Backend)?;
        let parsed: Reply = serde_json::from_str(&reply)
            .map_err(|e| EmbeddingError::Backend(format!("bad reply {:?}: {e}", reply.trim())))?;
        if let Some(msg) = parsed.error {
            return Err(EmbeddingError::Backend(msg));
        }
        let v = parsed.embedding.ok_or_else(|| backend_err("reply has neither embedding nor error"))?;
        if v.len() != self.dim || v.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::Backend(format!(
                "expected {} finite values, got {} values",
                self.dim,
                v.len()
            )));
        }
        Ok(l2_normalize(&v))
    }
}

impl TextEncoder for CommandBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        if text.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        self.embed(json!({"op": "text", "text": text}))
    }
}

impl ImageEncoder for CommandBackend {
    fn embed_image(&self, image: &RgbImage) -> Result<Embedding, EmbeddingError> {
        check_image(image)?;
        let rgb = base64::engine::general_purpose::STANDARD.encode(image.as_raw());
        self.embed(json!({"op": "image", "width": image.width(), "height": image.height(), "rgb": rgb}))
    }
}
