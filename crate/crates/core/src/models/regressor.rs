use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nn::{mse_loss, rows_from, select_rows, Activation, Mlp, MlpGrad, Optimizer};
use super::{
    batches, check_encoder_dim, embed_row, log_epoch, output_to_blendshapes, ModelError, ModelKind, SharedEncoder,
    TrainConfig, TrainLog,
};
use crate::blendshape::{BlendshapeVector, NUM_BLENDSHAPES};
use crate::dataset::TrainingExample;
use crate::embeddings::{embedding_to_f64, EmbeddingBackend, LM_DIM};

/// Sentence embedding to blendshapes through one MLP.
pub struct TextRegressor {
    kind: ModelKind,
    encoder: SharedEncoder,
    pub(crate) net: Mlp,
    pub(crate) trained: bool,
    pub(crate) config: TrainConfig,
}

impl TextRegressor {
    /// Freshly initialized and untrained.
    pub fn new(kind: ModelKind, encoder: SharedEncoder, config: &TrainConfig) -> Result<Self, ModelError> {
        if !matches!(kind, ModelKind::BertMlp | ModelKind::XlmMlp | ModelKind::ClipMlp) {
            return Err(ModelError::Config(format!("{kind} is not a plain regressor")));
        }
        config.validate()?;
        let mut sizes = vec![encoder.dim()];
        sizes.extend(&config.hidden);
        sizes.push(NUM_BLENDSHAPES);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = Mlp::new(&sizes, Activation::Tanh, Activation::Sigmoid, &mut rng);
        Ok(Self { kind, encoder, net, trained: false, config: config.clone() })
    }

    pub(crate) fn from_parts(kind: ModelKind, encoder: SharedEncoder, net: Mlp, config: TrainConfig) -> Self {
        Self { kind, encoder, net, trained: true, config }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn encoder(&self) -> &SharedEncoder {
        &self.encoder
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn predict(&self, text: &str) -> Result<BlendshapeVector, ModelError> {
        if !self.trained {
            return Err(ModelError::State);
        }
        let out = self.net.forward(&embed_row(self.encoder.as_ref(), text)?);
        output_to_blendshapes(out.row(0))
    }

    /// MSE against `targets` and its gradient for inputs `x`.
    pub fn loss_and_grad(&self, x: &Array2<f64>, targets: &Array2<f64>) -> (f64, MlpGrad) {
        regression_step(&self.net, x, targets)
    }
}

fn regression_step(net: &Mlp, x: &Array2<f64>, targets: &Array2<f64>) -> (f64, MlpGrad) {
    let (pred, cache) = net.forward_cached(x);
    let (loss, g) = mse_loss(&pred, targets);
    (loss, net.backward(&cache, g).0)
}

/// Mini-batch regression of `targets` on `inputs`.
fn fit(
    net: &mut Mlp,
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    config: &TrainConfig,
    name: &str,
) -> Result<TrainLog, ModelError> {
    let n = inputs.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate);
    let mut log = TrainLog { pair_count: n, ..Default::default() };
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for batch in batches(n, config.batch_size, &mut rng) {
            let x = select_rows(inputs, &batch);
            let y = select_rows(targets, &batch);
            let (loss, grad) = regression_step(net, &x, &y);
            if !loss.is_finite() {
                return Err(ModelError::Divergence { epoch });
            }
            total += loss * batch.len() as f64;
            opt.begin_step();
            net.apply_update(&grad, &mut opt, 0);
            log.batches += 1;
        }
        let mean = total / n as f64;
        log_epoch(name, epoch, config.epochs, mean);
        log.epoch_losses.push(mean);
    }
    Ok(log)
}

fn targets_of(examples: &[TrainingExample]) -> Array2<f64> {
    rows_from(&examples.iter().map(|e| e.blendshapes.weights().to_vec()).collect::<Vec<_>>())
}

/// Trains the language-model baseline on `(sentence embedding, blendshapes)` pairs.
pub fn train_text_regressor(
    kind: ModelKind,
    encoder: SharedEncoder,
    examples: &[TrainingExample],
    config: &TrainConfig,
) -> Result<(TextRegressor, TrainLog), ModelError> {
    if !matches!(kind, ModelKind::BertMlp | ModelKind::XlmMlp) {
        return Err(ModelError::Config(format!("{kind} is not a language-model regressor")));
    }
    if examples.is_empty() {
        return Err(ModelError::Data("no training examples".into()));
    }
    check_encoder_dim(encoder.as_ref(), LM_DIM)?;
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    let inputs = super::embed_rows(encoder.as_ref(), &texts)?;
    let targets = targets_of(examples);
    let mut model = TextRegressor::new(kind, encoder, config)?;
    let log = fit(&mut model.net, &inputs, &targets, config, kind.name())?;
    model.trained = true;
    Ok((model, log))
}

/// Trains on text embeddings and, where an image exists, image embeddings of the same target.
///
/// Prediction only ever sees text.
pub fn train_clip_regressor(
    backend: Arc<dyn EmbeddingBackend>,
    examples: &[TrainingExample],
    config: &TrainConfig,
) -> Result<(TextRegressor, TrainLog), ModelError> {
    let (inputs, targets) = clip_pairs(backend.as_ref(), examples)?;
    if inputs.nrows() == 0 {
        return Err(ModelError::Data("no usable text or image pairs".into()));
    }
    log::info!("clip_mlp: {} pairs from {} examples", inputs.nrows(), examples.len());
    let mut model = TextRegressor::new(ModelKind::ClipMlp, backend, config)?;
    let log = fit(&mut model.net, &inputs, &targets, config, ModelKind::ClipMlp.name())?;
    model.trained = true;
    Ok((model, log))
}

/// Text pairs followed by image pairs.
pub(crate) fn clip_pairs(
    backend: &dyn EmbeddingBackend,
    examples: &[TrainingExample],
) -> Result<(Array2<f64>, Array2<f64>), ModelError> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    if !examples.is_empty() {
        let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
        for (e, v) in examples.iter().zip(backend.embed_texts(&texts)?) {
            rows.push(embedding_to_f64(&v));
            targets.push(e.blendshapes.weights().to_vec());
        }
    }
    let with_image: Vec<&TrainingExample> = examples.iter().filter(|e| e.image.is_some()).collect();
    if !with_image.is_empty() {
        let images: Vec<_> = with_image.iter().map(|e| e.image.as_ref().expect("filtered")).collect();
        for (e, v) in with_image.iter().zip(backend.embed_images(&images)?) {
            rows.push(embedding_to_f64(&v));
            targets.push(e.blendshapes.weights().to_vec());
        }
    }
    if rows.is_empty() {
        return Ok((Array2::zeros((0, backend.dim())), Array2::zeros((0, NUM_BLENDSHAPES))));
    }
    Ok((rows_from(&rows), rows_from(&targets)))
}

impl super::FegModel for TextRegressor {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn predict(&self, text: &str) -> Result<BlendshapeVector, ModelError> {
        TextRegressor::predict(self, text)
    }
}
