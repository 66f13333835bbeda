use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{hstack, mse_loss, rows_from, select_rows, Activation, Mlp, MlpGrad, Optimizer};
use super::{
    batches, check_encoder_dim, embed_row, embed_rows, log_epoch, output_to_blendshapes, ModelError, ModelKind,
    SharedEncoder, TrainConfig, TrainLog,
};
use crate::blendshape::{BlendshapeVector, NUM_BLENDSHAPES};
use crate::dataset::TrainingExample;
use crate::embeddings::LM_DIM;
use crate::emotion::NUM_EMOTIONS;
use crate::math::one_hot;

/// Sentence embedding, emotion vector and its one-hot code, concatenated.
pub const REGRESSOR_INPUT_DIM: usize = LM_DIM + 2 * NUM_EMOTIONS;

/// Regressor conditioned on an emotion estimate from a separate extractor head.
///
/// The extractor maps the sentence embedding to `v` in `[0,1]^8`; the
/// regressor sees `[b, v, one_hot(v)]`. During training a per-batch coin
/// decides whether `v` comes from the extractor or from the label.
pub struct EmotionXlm {
    encoder: SharedEncoder,
    pub(crate) extractor: Mlp,
    pub(crate) regressor: Mlp,
    pub(crate) trained: bool,
    pub(crate) config: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XlmLoss {
    pub blendshape: f64,
    pub emotion: f64,
    pub total: f64,
}

pub struct XlmGrad {
    pub extractor: MlpGrad,
    pub regressor: MlpGrad,
}

impl XlmGrad {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.extractor.flatten();
        v.extend(self.regressor.flatten());
        v
    }
}

fn one_hot_rows(v: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(v.raw_dim());
    for (r, row) in v.rows().into_iter().enumerate() {
        let arr: [f64; NUM_EMOTIONS] = row.to_vec().try_into().expect("8 columns");
        for (c, x) in one_hot(&arr).into_iter().enumerate() {
            out[[r, c]] = x;
        }
    }
    out
}

impl EmotionXlm {
    pub fn new(encoder: SharedEncoder, config: &TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let dim = encoder.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ext = vec![dim];
        ext.extend(&config.hidden);
        ext.push(NUM_EMOTIONS);
        let mut reg = vec![dim + 2 * NUM_EMOTIONS];
        reg.extend(&config.hidden);
        reg.push(NUM_BLENDSHAPES);
        let extractor = Mlp::new(&ext, Activation::Tanh, Activation::Sigmoid, &mut rng);
        let regressor = Mlp::new(&reg, Activation::Tanh, Activation::Sigmoid, &mut rng);
        Ok(Self { encoder, extractor, regressor, trained: false, config: config.clone() })
    }

    pub(crate) fn from_parts(encoder: SharedEncoder, extractor: Mlp, regressor: Mlp, config: TrainConfig) -> Self {
        Self { encoder, extractor, regressor, trained: true, config }
    }

    pub fn encoder(&self) -> &SharedEncoder {
        &self.encoder
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn regressor_input_dim(&self) -> usize {
        self.regressor.input_dim()
    }

    pub fn extractor(&self) -> &Mlp {
        &self.extractor
    }

    pub fn regressor(&self) -> &Mlp {
        &self.regressor
    }

    /// The extractor's emotion estimate for one text.
    pub fn extract_emotion(&self, text: &str) -> Result<[f64; NUM_EMOTIONS], ModelError> {
        if !self.trained {
            return Err(ModelError::State);
        }
        let v = self.extractor.forward(&embed_row(self.encoder.as_ref(), text)?);
        Ok(v.row(0).to_vec().try_into().expect("8 outputs"))
    }

    pub fn predict(&self, text: &str) -> Result<BlendshapeVector, ModelError> {
        if !self.trained {
            return Err(ModelError::State);
        }
        let b = embed_row(self.encoder.as_ref(), text)?;
        let v = self.extractor.forward(&b);
        let x = hstack(&[&b, &v, &one_hot_rows(&v)]);
        output_to_blendshapes(self.regressor.forward(&x).row(0))
    }

    /// Blendshape and emotion losses with gradients for every parameter.
    ///
    /// With `teacher_forced` the regressor is fed `labels`, so the extractor
    /// only receives the emotion-loss gradient.
    pub fn loss_and_grad(
        &self,
        b: &Array2<f64>,
        labels: &Array2<f64>,
        targets: &Array2<f64>,
        teacher_forced: bool,
        lambda1: f64,
        lambda2: f64,
    ) -> (XlmLoss, XlmGrad) {
        let (v, ext_cache) = self.extractor.forward_cached(b);
        let fed = if teacher_forced { labels } else { &v };
        let x = hstack(&[b, fed, &one_hot_rows(fed)]);
        let (pred, reg_cache) = self.regressor.forward_cached(&x);
        let (blend, g_pred) = mse_loss(&pred, targets);
        let (emo, g_v) = mse_loss(&v, labels);
        let (reg_grad, g_x) = self.regressor.backward(&reg_cache, g_pred * lambda1);
        let mut g_ext = g_v * lambda2;
        if !teacher_forced {
            // one_hot is piecewise constant, so only the v block carries gradient
            let d = b.ncols();
            g_ext += &g_x.slice(s![.., d..d + NUM_EMOTIONS]);
        }
        let (ext_grad, _) = self.extractor.backward(&ext_cache, g_ext);
        let loss = XlmLoss { blendshape: blend, emotion: emo, total: lambda1 * blend + lambda2 * emo };
        (loss, XlmGrad { extractor: ext_grad, regressor: reg_grad })
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.extractor.params();
        p.extend(self.regressor.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let n = self.extractor.param_count();
        self.extractor.set_params(&p[..n]);
        self.regressor.set_params(&p[n..]);
    }
}

/// Trains extractor and regressor jointly.
pub fn train_emotion_xlm(
    encoder: SharedEncoder,
    examples: &[TrainingExample],
    config: &TrainConfig,
) -> Result<(EmotionXlm, TrainLog), ModelError> {
    if examples.is_empty() {
        return Err(ModelError::Data("no training examples".into()));
    }
    check_encoder_dim(encoder.as_ref(), LM_DIM)?;
    let labels: Vec<Vec<f64>> = examples
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.emotion
                .map(|d| d.values().to_vec())
                .ok_or_else(|| ModelError::Data(format!("example {i} has no emotion label")))
        })
        .collect::<Result<_, _>>()?;
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    let inputs = embed_rows(encoder.as_ref(), &texts)?;
    let labels = rows_from(&labels);
    let targets = rows_from(&examples.iter().map(|e| e.blendshapes.weights().to_vec()).collect::<Vec<_>>());

    let mut model = EmotionXlm::new(encoder, config)?;
    let n = inputs.nrows();
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut coin_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate);
    let mut log = TrainLog { pair_count: n, ..Default::default() };
    let reg_slot = model.extractor.slot_count();
    let name = ModelKind::EmotionXlm.name();
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for batch in batches(n, config.batch_size, &mut order_rng) {
            let teacher = coin_rng.gen_bool(config.teacher_forcing_ratio);
            let (loss, grad) = model.loss_and_grad(
                &select_rows(&inputs, &batch),
                &select_rows(&labels, &batch),
                &select_rows(&targets, &batch),
                teacher,
                config.lambda1,
                config.lambda2,
            );
            if !loss.total.is_finite() {
                return Err(ModelError::Divergence { epoch });
            }
            total += loss.total * batch.len() as f64;
            opt.begin_step();
            model.extractor.apply_update(&grad.extractor, &mut opt, 0);
            model.regressor.apply_update(&grad.regressor, &mut opt, reg_slot);
            log.batches += 1;
            if teacher {
                log.teacher_forced_batches += 1;
            } else {
                log.extractor_batches += 1;
            }
        }
        let mean = total / n as f64;
        log_epoch(name, epoch, config.epochs, mean);
        log.epoch_losses.push(mean);
    }
    model.trained = true;
    Ok((model, log))
}

impl super::FegModel for EmotionXlm {
    fn name(&self) -> &str {
        ModelKind::EmotionXlm.name()
    }

    fn predict(&self, text: &str) -> Result<BlendshapeVector, ModelError> {
        EmotionXlm::predict(self, text)
    }
}
