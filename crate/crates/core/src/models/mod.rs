//! Text-to-blendshape models.
//!
//! Four trainable baselines share one [`FegModel`] contract: a plain MLP
//! regressor over sentence embeddings (`bert_mlp`, `xlm_mlp`), the same
//! regressor trained on text and image embeddings (`clip_mlp`), a regressor
//! with an emotion-extractor head (`emotion_xlm`), and a blendshape
//! autoencoder whose latent is aligned with the joint text-image space
//! (`autoencoder_clip`).

mod autoencoder;
mod checkpoint;
mod emotion_xlm;
pub mod nn;
mod regressor;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blendshape::{BlendshapeVector, NUM_BLENDSHAPES};
use crate::embeddings::{embedding_to_f64, EmbeddingError, TextEncoder};

pub use autoencoder::{
    alignment_loss, train_blendshape_autoencoder, AutoencoderBatch, AutoencoderGrad, AutoencoderLoss,
    BlendshapeAutoencoder,
};
pub use checkpoint::{load_model, read_manifest, save_model, CheckpointManifest, NetworkEntry, CHECKPOINT_VERSION};
pub use emotion_xlm::{train_emotion_xlm, EmotionXlm, XlmGrad, XlmLoss, REGRESSOR_INPUT_DIM};
pub use nn::OptimizerKind;
pub use regressor::{train_clip_regressor, train_text_regressor, TextRegressor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("loss became non-finite in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("training data: {0}")]
    Data(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("model is not trained")]
    State,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Anything that turns an emotion description into blendshape weights.
pub trait FegModel: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, text: &str) -> Result<BlendshapeVector, ModelError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BertMlp,
    XlmMlp,
    EmotionXlm,
    ClipMlp,
    AutoencoderClip,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::BertMlp, ModelKind::XlmMlp, ModelKind::EmotionXlm, ModelKind::ClipMlp, ModelKind::AutoencoderClip];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BertMlp => "bert_mlp",
            ModelKind::XlmMlp => "xlm_mlp",
            ModelKind::EmotionXlm => "emotion_xlm",
            ModelKind::ClipMlp => "clip_mlp",
            ModelKind::AutoencoderClip => "autoencoder_clip",
        }
    }

    /// Whether the model needs image embeddings from a joint backend.
    pub fn needs_joint_backend(self) -> bool {
        matches!(self, ModelKind::ClipMlp | ModelKind::AutoencoderClip)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| ModelError::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the blendshape term in the emotion-extractor model.
    pub lambda1: f64,
    /// Weight of the emotion term in the emotion-extractor model.
    pub lambda2: f64,
    pub lambda_text: f64,
    pub lambda_image: f64,
    pub teacher_forcing_ratio: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerKind,
    /// Sample the autoencoder latent and add a weighted prior term.
    pub variational: bool,
    pub prior_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda_text: 1.0,
            lambda_image: 1.0,
            teacher_forcing_ratio: 0.5,
            seed: 0,
            hidden: vec![256, 256],
            optimizer: OptimizerKind::Adam,
            variational: false,
            prior_weight: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        // Zero loss weights are allowed: they switch a term off.
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda_text", self.lambda_text),
            ("lambda_image", self.lambda_image),
            ("prior_weight", self.prior_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::Config(format!("{name} must be a non-negative number")));
            }
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing_ratio) {
            return bad("teacher_forcing_ratio must lie in [0, 1]");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }
}

/// What happened during training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Input/target pairs the network saw per epoch.
    pub pair_count: usize,
    pub batches: usize,
    /// Batches that fed ground-truth emotion to the regressor.
    pub teacher_forced_batches: usize,
    /// Batches that fed the extractor's own output to the regressor.
    pub extractor_batches: usize,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// A trained baseline of any kind.
pub enum Baseline {
    Regressor(TextRegressor),
    EmotionXlm(EmotionXlm),
    Autoencoder(BlendshapeAutoencoder),
}

impl Baseline {
    pub fn kind(&self) -> ModelKind {
        match self {
            Baseline::Regressor(m) => m.kind(),
            Baseline::EmotionXlm(_) => ModelKind::EmotionXlm,
            Baseline::Autoencoder(_) => ModelKind::AutoencoderClip,
        }
    }
}

impl FegModel for Baseline {
    fn name(&self) -> &str {
        self.kind().name()
    }

    fn predict(&self, text: &str) -> Result<BlendshapeVector, ModelError> {
        match self {
            Baseline::Regressor(m) => m.predict(text),
            Baseline::EmotionXlm(m) => m.predict(text),
            Baseline::Autoencoder(m) => m.predict(text),
        }
    }
}

/// Returns stored blendshapes for known texts. Useful as an upper bound and in tests.
#[derive(Debug, Clone, Default)]
pub struct LookupModel {
    name: String,
    table: HashMap<String, BlendshapeVector>,
}

impl LookupModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), table: HashMap::new() }
    }

    pub fn from_pairs<I: IntoIterator<Item = (String, BlendshapeVector)>>(name: impl Into<String>, pairs: I) -> Self {
        Self { name: name.into(), table: pairs.into_iter().collect() }
    }

    pub fn insert(&mut self, text: impl Into<String>, weights: BlendshapeVector) {
        self.table.insert(text.into(), weights);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl FegModel for LookupModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, text: &str) -> Result<BlendshapeVector, ModelError> {
        if self.table.is_empty() {
            return Err(ModelError::State);
        }
        self.table.get(text).cloned().ok_or_else(|| ModelError::Data(format!("no stored blendshapes for {text:?}")))
    }
}

/// Always predicts the same weights.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    pub name: String,
    pub weights: BlendshapeVector,
}

impl FegModel for ConstantModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, _text: &str) -> Result<BlendshapeVector, ModelError> {
        Ok(self.weights.clone())
    }
}

pub(crate) fn embed_row(encoder: &dyn TextEncoder, text: &str) -> Result<Array2<f64>, ModelError> {
    let e = embedding_to_f64(&encoder.embed_text(text)?);
    let n = e.len();
    Ok(Array2::from_shape_vec((1, n), e).expect("row shape"))
}

pub(crate) fn embed_rows(encoder: &dyn TextEncoder, texts: &[&str]) -> Result<Array2<f64>, ModelError> {
    let rows: Vec<Vec<f64>> = encoder.embed_texts(texts)?.iter().map(|e| embedding_to_f64(e)).collect();
    Ok(nn::rows_from(&rows))
}

pub(crate) fn output_to_blendshapes(row: ndarray::ArrayView1<f64>) -> Result<BlendshapeVector, ModelError> {
    debug_assert_eq!(row.len(), NUM_BLENDSHAPES);
    let w: Vec<f64> = row.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    BlendshapeVector::new(&w).map_err(|e| ModelError::Data(format!("invalid model output: {e}")))
}

/// Shuffled mini-batches of `0..n`.
pub(crate) fn batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub(crate) fn check_encoder_dim(encoder: &dyn TextEncoder, expected: usize) -> Result<(), ModelError> {
    if encoder.dim() != expected {
        return Err(ModelError::Config(format!(
            "backend {} has dimension {} but the model expects {expected}",
            encoder.name(),
            encoder.dim()
        )));
    }
    Ok(())
}

pub(crate) fn log_epoch(model: &str, epoch: usize, epochs: usize, loss: f64) {
    if epoch == 0 || (epoch + 1).is_multiple_of((epochs / 10).max(1)) || epoch + 1 == epochs {
        log::info!("{model}: epoch {}/{epochs} loss {loss:.6}", epoch + 1);
    } else {
        log::debug!("{model}: epoch {}/{epochs} loss {loss:.6}", epoch + 1);
    }
}

pub type SharedEncoder = Arc<dyn TextEncoder>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("gpt".parse::<ModelKind>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig { teacher_forcing_ratio: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        c.teacher_forcing_ratio = 1.0;
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let c = TrainConfig { lambda2: 0.0, ..Default::default() };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn config_from_partial_toml_like_json() {
        let c: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "optimizer": "sgd"}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.optimizer, OptimizerKind::Sgd);
        assert_eq!(c.hidden, vec![256, 256]);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn lookup_model_passes_through() {
        let mut m = LookupModel::new("oracle");
        assert!(matches!(m.predict("x"), Err(ModelError::State)));
        m.insert("smile", BlendshapeVector::basis(3));
        assert_eq!(m.predict("smile").unwrap(), BlendshapeVector::basis(3));
        assert!(m.predict("frown").is_err());
    }
}
