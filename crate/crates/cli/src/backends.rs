//! Backend, encoder and renderer selection from command-line specs.
//!
//! Specs: `mock` or `mock:<dim>` for the hash-seeded stand-ins, and
//! `command:<program> [args...]` for an external JSON-lines encoder
//! (arguments are split on whitespace; no shell quoting).

use std::path::Path;
use std::sync::Arc;

use emo3d::embeddings::{
    CachedBackend, CommandBackend, EmbeddingBackend, EmbeddingCache, MockBackend, MockLanguageModel, DEFAULT_CLIP_DIM,
    LM_DIM,
};
use emo3d::models::{CheckpointManifest, ModelKind, SharedEncoder};
use emo3d::renderer::{FaceRenderer, FaceRig, PixelCodeRenderer, RenderConfig, RigRenderer};

use crate::error::CliError;

pub const CANONICAL: &str = "canonical";

enum Spec {
    Mock(Option<String>),
    Command(String, Vec<String>),
}

fn parse(spec: &str) -> Result<Spec, CliError> {
    if spec == "mock" {
        return Ok(Spec::Mock(None));
    }
    if let Some(rest) = spec.strip_prefix("mock:") {
        return Ok(Spec::Mock(Some(rest.to_string())));
    }
    if let Some(rest) = spec.strip_prefix("command:") {
        let mut parts = rest.split_whitespace().map(str::to_string);
        let program = parts.next().ok_or_else(|| CliError::Usage("command: spec needs a program".into()))?;
        return Ok(Spec::Command(program, parts.collect()));
    }
    Err(CliError::Usage(format!("unknown backend {spec:?}; expected mock, mock:<arg> or command:<program>")))
}

fn cached(inner: CommandBackend, cache_dir: Option<&Path>) -> Arc<dyn EmbeddingBackend> {
    match cache_dir {
        Some(dir) => Arc::new(CachedBackend::new(inner, EmbeddingCache::new(dir.join("embeddings")))),
        None => Arc::new(inner),
    }
}

/// A joint text-image backend. The mock is also returned concretely so
/// callers can plant image-prompt pairs on it.
pub struct Joint {
    pub backend: Arc<dyn EmbeddingBackend>,
    pub mock: Option<Arc<MockBackend>>,
}

pub fn joint_backend(spec: &str, cache_dir: Option<&Path>) -> Result<Joint, CliError> {
    match parse(spec)? {
        Spec::Mock(arg) => {
            let dim = match arg {
                None => DEFAULT_CLIP_DIM,
                Some(d) => d
                    .parse()
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| CliError::Usage(format!("bad mock dimension {d:?}")))?,
            };
            let mock = Arc::new(MockBackend::new(dim));
            Ok(Joint { backend: mock.clone(), mock: Some(mock) })
        }
        Spec::Command(program, args) => {
            Ok(Joint { backend: cached(CommandBackend::spawn(&program, &args)?, cache_dir), mock: None })
        }
    }
}

/// Default mock language model name for a text-only baseline.
pub fn mock_lm_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::BertMlp => "mock-bert",
        _ => "mock-xlm",
    }
}

/// A sentence encoder for the language-model baselines.
pub fn text_encoder(spec: &str, kind: ModelKind, cache_dir: Option<&Path>) -> Result<SharedEncoder, CliError> {
    match parse(spec)? {
        Spec::Mock(name) => {
            Ok(Arc::new(MockLanguageModel::new(name.unwrap_or_else(|| mock_lm_name(kind).to_string()), LM_DIM)))
        }
        Spec::Command(program, args) => {
            let backend: SharedEncoder = match cache_dir {
                Some(dir) => Arc::new(CachedBackend::new(
                    CommandBackend::spawn(&program, &args)?,
                    EmbeddingCache::new(dir.join("embeddings")),
                )),
                None => Arc::new(CommandBackend::spawn(&program, &args)?),
            };
            Ok(backend)
        }
    }
}

/// The encoder a checkpoint needs at inference time.
///
/// Image-aware models use the evaluation backend; language-model baselines
/// use `--encoder` when given, else the mock they were trained with.
pub fn checkpoint_encoder(
    manifest: &CheckpointManifest,
    encoder_spec: Option<&str>,
    joint: &Joint,
    cache_dir: Option<&Path>,
) -> Result<SharedEncoder, CliError> {
    if manifest.model_type.needs_joint_backend() {
        return Ok(joint.backend.clone());
    }
    match encoder_spec {
        Some(spec) => text_encoder(spec, manifest.model_type, cache_dir),
        None if manifest.backend_name.starts_with("mock") => {
            Ok(Arc::new(MockLanguageModel::new(manifest.backend_name.clone(), manifest.input_dim)))
        }
        None => Err(CliError::Usage(format!(
            "checkpoint was trained with encoder {:?}; pass --encoder to supply it",
            manifest.backend_name
        ))),
    }
}

pub fn load_rig(rig: &str) -> Result<FaceRig, CliError> {
    if rig == CANONICAL {
        Ok(FaceRig::canonical())
    } else {
        Ok(FaceRig::load_dir(rig)?)
    }
}

/// `rig` draws the mesh; `pixel-code` writes the weights into the image for planted mocks.
pub fn renderer(kind: &str, rig: &str, size: u32) -> Result<Box<dyn FaceRenderer>, CliError> {
    let config = RenderConfig { width: size, height: size };
    match kind {
        "rig" => Ok(Box::new(RigRenderer::new(Arc::new(load_rig(rig)?), config)?)),
        "pixel-code" => Ok(Box::new(PixelCodeRenderer::new(config)?)),
        other => Err(CliError::Usage(format!("unknown renderer {other:?}; expected rig or pixel-code"))),
    }
}
