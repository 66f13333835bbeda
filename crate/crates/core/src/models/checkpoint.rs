//! Checkpoint directory: `manifest.json` plus a little-endian `f64` weight blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::nn::{Mlp, MlpSpec};
use super::{
    check_encoder_dim, Baseline, BlendshapeAutoencoder, EmotionXlm, ModelError, ModelKind, SharedEncoder,
    TextRegressor, TrainConfig,
};
use crate::embeddings::cache::hex;

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const WEIGHTS: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub name: String,
    pub spec: MlpSpec,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub model_type: ModelKind,
    pub backend_name: String,
    pub input_dim: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub networks: Vec<NetworkEntry>,
    pub weights_file: String,
    pub weights_sha256: String,
    pub crate_version: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io { path: path.display().to_string(), source }
}

fn parts(model: &Baseline) -> (SharedEncoder, &TrainConfig, Vec<(&'static str, &Mlp)>) {
    match model {
        Baseline::Regressor(m) => (m.encoder().clone(), m.config(), vec![("regressor", &m.net)]),
        Baseline::EmotionXlm(m) => {
            (m.encoder().clone(), m.config(), vec![("extractor", &m.extractor), ("regressor", &m.regressor)])
        }
        Baseline::Autoencoder(m) => {
            (m.backend().clone(), m.config(), vec![("encoder", &m.encoder), ("decoder", &m.decoder)])
        }
    }
}

/// Writes `model` to `dir`, creating it if needed.
pub fn save_model(model: &Baseline, dir: impl AsRef<Path>) -> Result<CheckpointManifest, ModelError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (encoder, config, nets) = parts(model);
    let mut blob = Vec::new();
    let mut networks = Vec::new();
    for (name, net) in nets {
        let params = net.params();
        for p in &params {
            blob.extend_from_slice(&p.to_le_bytes());
        }
        networks.push(NetworkEntry { name: name.to_string(), spec: net.spec(), params: params.len() });
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        model_type: model.kind(),
        backend_name: encoder.name().to_string(),
        input_dim: encoder.dim(),
        seed: config.seed,
        config: config.clone(),
        networks,
        weights_file: WEIGHTS.to_string(),
        weights_sha256: hex(&Sha256::digest(&blob)),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let weights = dir.join(WEIGHTS);
    fs::write(&weights, &blob).map_err(io_err(&weights))?;
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<CheckpointManifest, ModelError> {
    let path = dir.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "format version {} is not supported (expected {CHECKPOINT_VERSION})",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

/// Loads a checkpoint, attaching `encoder` for inference.
///
/// The encoder must have the dimension the model was trained with.
pub fn load_model(dir: impl AsRef<Path>, encoder: SharedEncoder) -> Result<Baseline, ModelError> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    check_encoder_dim(encoder.as_ref(), manifest.input_dim)?;
    if encoder.name() != manifest.backend_name {
        log::warn!("checkpoint was trained with {:?}, loading with {:?}", manifest.backend_name, encoder.name());
    }
    let path = dir.join(&manifest.weights_file);
    let blob = fs::read(&path).map_err(io_err(&path))?;
    if hex(&Sha256::digest(&blob)) != manifest.weights_sha256 {
        return Err(ModelError::Checkpoint(format!("{} does not match its recorded checksum", path.display())));
    }
    if blob.len() % 8 != 0 {
        return Err(ModelError::Checkpoint("weight blob is not a whole number of f64 values".into()));
    }
    let values: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut offset = 0;
    let mut nets = Vec::new();
    for entry in &manifest.networks {
        let slice = values
            .get(offset..offset + entry.params)
            .ok_or_else(|| ModelError::Checkpoint(format!("weight blob too short for {}", entry.name)))?;
        offset += entry.params;
        let net = Mlp::from_spec(&entry.spec, slice)
            .ok_or_else(|| ModelError::Checkpoint(format!("network {} does not match its shape", entry.name)))?;
        nets.push(net);
    }
    if offset != values.len() {
        return Err(ModelError::Checkpoint("weight blob has trailing values".into()));
    }
    let expect = |n: usize| -> Result<(), ModelError> {
        if nets.len() != n {
            return Err(ModelError::Checkpoint(format!("{} needs {n} networks", manifest.model_type)));
        }
        Ok(())
    };
    let config = manifest.config.clone();
    let model = match manifest.model_type {
        kind @ (ModelKind::BertMlp | ModelKind::XlmMlp | ModelKind::ClipMlp) => {
            expect(1)?;
            Baseline::Regressor(TextRegressor::from_parts(kind, encoder, nets.remove(0), config))
        }
        ModelKind::EmotionXlm => {
            expect(2)?;
            let extractor = nets.remove(0);
            Baseline::EmotionXlm(EmotionXlm::from_parts(encoder, extractor, nets.remove(0), config))
        }
        ModelKind::AutoencoderClip => {
            expect(2)?;
            let enc = nets.remove(0);
            Baseline::Autoencoder(BlendshapeAutoencoder::from_parts(encoder, enc, nets.remove(0), config))
        }
    };
    Ok(model)
}
