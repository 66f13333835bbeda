use std::path::PathBuf;

use clap::Args;
use emo3d::dataset::{filter_split, load_examples};
use emo3d::models::{
    save_model, train_blendshape_autoencoder, train_clip_regressor, train_emotion_xlm, train_text_regressor, Baseline,
    ModelKind, OptimizerKind, TrainConfig,
};
use emo3d::Split;
use serde::{Deserialize, Serialize};

use super::{image_root, load_recorded};
use crate::backends::{joint_backend, text_encoder};
use crate::config::flag;
use crate::error::CliError;
use crate::manifest::{write_file, RunManifest, RUN_MANIFEST};
use crate::Globals;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// bert_mlp, xlm_mlp, emotion_xlm, clip_mlp or autoencoder_clip.
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    /// Joint text-image backend for clip_mlp and autoencoder_clip.
    #[arg(long)]
    backend: Option<String>,
    /// Sentence encoder for the language-model baselines.
    #[arg(long)]
    encoder: Option<String>,
    /// Root for relative image paths; defaults to the dataset's directory.
    #[arg(long)]
    images: Option<PathBuf>,
    /// With the mock backend, make each training image embed like its description.
    #[arg(long)]
    plant: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Hidden layer widths, e.g. 256,256.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// adam or sgd.
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    teacher_forcing_ratio: Option<f64>,
    /// Sample the autoencoder latent and add a prior term.
    #[arg(long)]
    variational: bool,
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown optimizer {s:?}"))
}

/// The `[train]` config table: training hyperparameters plus backend choices.
#[derive(Debug, Clone, Serialize)]
pub struct TrainOptions {
    pub backend: String,
    pub encoder: String,
    #[serde(flatten)]
    pub hyper: TrainConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { backend: "mock".into(), encoder: "mock".into(), hyper: TrainConfig::default() }
    }
}

impl TrainOptions {
    /// Backend keys are taken out first so typos in hyperparameter names are still caught.
    fn from_table(mut table: serde_json::Map<String, serde_json::Value>) -> Result<Self, CliError> {
        let mut opts = Self::default();
        for (key, slot) in [("backend", &mut opts.backend), ("encoder", &mut opts.encoder)] {
            if let Some(v) = table.remove(key) {
                *slot =
                    v.as_str().ok_or_else(|| CliError::Usage(format!("[train] {key} must be a string")))?.to_string();
            }
        }
        opts.hyper = TrainConfig::deserialize(serde_json::Value::Object(table))
            .map_err(|e| CliError::Usage(format!("config table [train]: {e}")))?;
        Ok(opts)
    }
}

pub fn run(args: TrainArgs, globals: &Globals) -> Result<(), CliError> {
    let mut opts = TrainOptions::from_table(globals.config.table("train"))?;
    flag(&mut opts.backend, args.backend);
    flag(&mut opts.encoder, args.encoder);
    let h = &mut opts.hyper;
    flag(&mut h.epochs, args.epochs);
    flag(&mut h.batch_size, args.batch_size);
    flag(&mut h.learning_rate, args.learning_rate);
    flag(&mut h.hidden, args.hidden);
    flag(&mut h.optimizer, args.optimizer);
    flag(&mut h.teacher_forcing_ratio, args.teacher_forcing_ratio);
    if args.variational {
        h.variational = true;
    }
    h.seed = globals.seed;
    h.validate()?;

    let mut manifest = RunManifest::new("train", globals.seed, &opts);
    let triads = load_recorded(&args.dataset, &mut manifest)?;
    let train = filter_split(&triads, Split::Train);
    if train.is_empty() {
        return Err(CliError::Data(format!("{} has no train split", args.dataset.display())));
    }
    let cache = globals.cache_dir.as_deref();
    let kind = args.model;
    let uses_images = kind.needs_joint_backend();
    let root = uses_images.then(|| image_root(&args.dataset, args.images.as_deref()));
    let examples = load_examples(&train, root.as_deref())?;
    log::info!("training {kind} on {} examples", examples.len());

    let (model, log) = if uses_images {
        let joint = joint_backend(&opts.backend, cache)?;
        manifest.backend = Some(joint.backend.name().to_string());
        if args.plant {
            let mock = joint.mock.as_ref().ok_or_else(|| CliError::Usage("--plant needs the mock backend".into()))?;
            for e in &examples {
                if let Some(img) = &e.image {
                    mock.plant(img, &e.text);
                }
            }
        }
        if kind == ModelKind::ClipMlp {
            let (m, log) = train_clip_regressor(joint.backend, &examples, &opts.hyper)?;
            (Baseline::Regressor(m), log)
        } else {
            let (m, log) = train_blendshape_autoencoder(joint.backend, &examples, &opts.hyper)?;
            (Baseline::Autoencoder(m), log)
        }
    } else {
        let encoder = text_encoder(&opts.encoder, kind, cache)?;
        manifest.backend = Some(encoder.name().to_string());
        if kind == ModelKind::EmotionXlm {
            let (m, log) = train_emotion_xlm(encoder, &examples, &opts.hyper)?;
            (Baseline::EmotionXlm(m), log)
        } else {
            let (m, log) = train_text_regressor(kind, encoder, &examples, &opts.hyper)?;
            (Baseline::Regressor(m), log)
        }
    };
    if let Some(loss) = log.final_loss() {
        log::info!("{kind}: final training loss {loss:.6} over {} pairs", log.pair_count);
    }

    let checkpoint = save_model(&model, &args.out)?;
    manifest.output(&args.out.join("manifest.json"));
    manifest.output(&args.out.join(&checkpoint.weights_file));
    let log_path = args.out.join("train_log.json");
    let mut text = serde_json::to_string_pretty(&log).expect("log serializes");
    text.push('\n');
    write_file(&log_path, text.as_bytes())?;
    manifest.output(&log_path);
    manifest.write(&args.out.join(RUN_MANIFEST))
}
