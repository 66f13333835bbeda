use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::{hstack, mse_loss, rows_from, select_rows, Activation, Mlp, MlpGrad, Optimizer};
use super::{
    batches, embed_row, log_epoch, output_to_blendshapes, ModelError, ModelKind, SharedEncoder, TrainConfig, TrainLog,
};
use crate::blendshape::{BlendshapeVector, NUM_BLENDSHAPES};
use crate::dataset::TrainingExample;
use crate::embeddings::{embedding_to_f64, EmbeddingBackend};

const NORM_FLOOR: f64 = 1e-12;

/// `1 - cos(target, z)`: 0 when aligned, 1 when orthogonal.
pub fn alignment_loss(target: &[f64], z: &[f64]) -> f64 {
    let dot: f64 = target.iter().zip(z).map(|(a, b)| a * b).sum();
    let nt = target.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
    let nz = z.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
    1.0 - dot / (nt * nz)
}

/// Loss terms, each already multiplied by its weight; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderLoss {
    pub reconstruction: f64,
    pub text_alignment: f64,
    pub image_alignment: f64,
    /// Zero unless the variational mode is on with a positive prior weight.
    pub prior: f64,
    pub total: f64,
}

pub struct AutoencoderGrad {
    pub encoder: MlpGrad,
    pub decoder: MlpGrad,
}

impl AutoencoderGrad {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.encoder.flatten();
        v.extend(self.decoder.flatten());
        v
    }
}

/// One training batch for [`BlendshapeAutoencoder::loss_and_grad`].
pub struct AutoencoderBatch<'a> {
    pub blendshapes: &'a Array2<f64>,
    pub text: &'a Array2<f64>,
    /// Rows without an image are ignored through `has_image`.
    pub image: &'a Array2<f64>,
    pub has_image: &'a [bool],
    /// Standard-normal draws for the variational latent; `None` uses the mean.
    pub noise: Option<&'a Array2<f64>>,
}

/// Blendshapes to a latent in the joint text-image space and back.
///
/// The decoder always reads the unit-normalized latent, so at inference time a
/// (unit) text embedding can stand in for the latent directly.
pub struct BlendshapeAutoencoder {
    backend: SharedEncoder,
    pub(crate) encoder: Mlp,
    pub(crate) decoder: Mlp,
    pub(crate) variational: bool,
    pub(crate) trained: bool,
    pub(crate) config: TrainConfig,
}

fn normalize_rows(z: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(NORM_FLOOR));
    let zn = z / &norms.view().insert_axis(Axis(1));
    (zn, norms)
}

/// Adds the gradient of `weight * mean_i (1 - cos(t_i, z_i))` over the masked rows to `g`.
fn alignment_term(
    targets: &Array2<f64>,
    z: &Array2<f64>,
    norms: &Array1<f64>,
    mask: Option<&[bool]>,
    weight: f64,
    g: &mut Array2<f64>,
) -> f64 {
    let b = z.nrows() as f64;
    let mut loss = 0.0;
    for i in 0..z.nrows() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let t = targets.row(i);
        let nt = t.dot(&t).sqrt().max(NORM_FLOOR);
        let zi = z.row(i);
        let nz = norms[i];
        let cos = t.dot(&zi) / (nt * nz);
        loss += 1.0 - cos;
        let scale = -weight / b;
        let mut gi = g.row_mut(i);
        gi.scaled_add(scale / (nt * nz), &t);
        gi.scaled_add(-scale * cos / (nz * nz), &zi);
    }
    weight * loss / b
}

impl BlendshapeAutoencoder {
    pub fn new(backend: SharedEncoder, config: &TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let d = backend.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut enc = vec![NUM_BLENDSHAPES];
        enc.extend(&config.hidden);
        enc.push(if config.variational { 2 * d } else { d });
        let mut dec = vec![d];
        dec.extend(config.hidden.iter().rev());
        dec.push(NUM_BLENDSHAPES);
        let encoder = Mlp::new(&enc, Activation::Tanh, Activation::Identity, &mut rng);
        let decoder = Mlp::new(&dec, Activation::Tanh, Activation::Sigmoid, &mut rng);
        Ok(Self { backend, encoder, decoder, variational: config.variational, trained: false, config: config.clone() })
    }

    pub(crate) fn from_parts(backend: SharedEncoder, encoder: Mlp, decoder: Mlp, config: TrainConfig) -> Self {
        Self { backend, variational: config.variational, encoder, decoder, trained: true, config }
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_dim()
    }

    pub fn backend(&self) -> &SharedEncoder {
        &self.backend
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Latent (the mean, in variational mode) of one blendshape vector.
    pub fn latent(&self, l: &BlendshapeVector) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, NUM_BLENDSHAPES), l.weights().to_vec()).expect("row");
        let h = self.encoder.forward(&x);
        h.slice(s![0, ..self.latent_dim()]).to_vec()
    }

    /// Decodes a latent after unit normalization.
    pub fn decode(&self, z: ArrayView1<f64>) -> Result<BlendshapeVector, ModelError> {
        let row = z.to_owned().insert_axis(Axis(0));
        let (zn, _) = normalize_rows(&row);
        output_to_blendshapes(self.decoder.forward(&zn).row(0))
    }

    pub fn reconstruct(&self, l: &BlendshapeVector) -> Result<BlendshapeVector, ModelError> {
        self.decode(Array1::from_vec(self.latent(l)).view())
    }

    pub fn predict(&self, text: &str) -> Result<BlendshapeVector, ModelError> {
        if !self.trained {
            return Err(ModelError::State);
        }
        let t = embed_row(self.backend.as_ref(), text)?;
        self.decode(t.row(0))
    }

    pub fn loss_and_grad(&self, batch: &AutoencoderBatch<'_>) -> (AutoencoderLoss, AutoencoderGrad) {
        let cfg = &self.config;
        let d = self.latent_dim();
        let rows = batch.blendshapes.nrows() as f64;
        let (h, enc_cache) = self.encoder.forward_cached(batch.blendshapes);
        let (z, mu, logvar) = if self.variational {
            let mu = h.slice(s![.., ..d]).to_owned();
            let lv = h.slice(s![.., d..]).to_owned();
            let z = match batch.noise {
                Some(eps) => &mu + &(lv.mapv(|v| (0.5 * v).exp()) * eps),
                None => mu.clone(),
            };
            (z, Some(mu), Some(lv))
        } else {
            (h.clone(), None, None)
        };

        let (zn, norms) = normalize_rows(&z);
        let (pred, dec_cache) = self.decoder.forward_cached(&zn);
        let (reconstruction, g_pred) = mse_loss(&pred, batch.blendshapes);
        let (dec_grad, g_zn) = self.decoder.backward(&dec_cache, g_pred);

        // back through z / |z|
        let proj = (&g_zn * &zn).sum_axis(Axis(1)).insert_axis(Axis(1));
        let mut g_z = (&g_zn - &(&zn * &proj)) / norms.view().insert_axis(Axis(1));

        let text_alignment = alignment_term(batch.text, &z, &norms, None, cfg.lambda_text, &mut g_z);
        let image_alignment =
            alignment_term(batch.image, &z, &norms, Some(batch.has_image), cfg.lambda_image, &mut g_z);

        let mut prior = 0.0;
        let g_h = match (mu, logvar) {
            (Some(mu), Some(lv)) => {
                let beta = cfg.prior_weight;
                prior = beta / rows * mu.iter().zip(&lv).map(|(m, v)| -0.5 * (1.0 + v - m * m - v.exp())).sum::<f64>();
                let g_mu = &g_z + &(&mu * (beta / rows));
                let mut g_lv = lv.mapv(|v| -0.5 * beta / rows * (1.0 - v.exp()));
                if let Some(eps) = batch.noise {
                    g_lv += &(&g_z * eps * &lv.mapv(|v| 0.5 * (0.5 * v).exp()));
                }
                hstack(&[&g_mu, &g_lv])
            }
            _ => g_z,
        };
        let (enc_grad, _) = self.encoder.backward(&enc_cache, g_h);
        let total = reconstruction + text_alignment + image_alignment + prior;
        (
            AutoencoderLoss { reconstruction, text_alignment, image_alignment, prior, total },
            AutoencoderGrad { encoder: enc_grad, decoder: dec_grad },
        )
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let n = self.encoder.param_count();
        self.encoder.set_params(&p[..n]);
        self.decoder.set_params(&p[n..]);
    }
}

/// Trains the autoencoder with its latent pulled towards the text and image embeddings.
pub fn train_blendshape_autoencoder(
    backend: Arc<dyn EmbeddingBackend>,
    examples: &[TrainingExample],
    config: &TrainConfig,
) -> Result<(BlendshapeAutoencoder, TrainLog), ModelError> {
    if examples.is_empty() {
        return Err(ModelError::Data("no training examples".into()));
    }
    let d = backend.dim();
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    let text = rows_from(&backend.embed_texts(&texts)?.iter().map(|v| embedding_to_f64(v)).collect::<Vec<_>>());
    let has_image: Vec<bool> = examples.iter().map(|e| e.image.is_some()).collect();
    let mut image = Array2::zeros((examples.len(), d));
    let imgs: Vec<_> = examples.iter().filter_map(|e| e.image.as_ref()).collect();
    if !imgs.is_empty() {
        let embedded = backend.embed_images(&imgs)?;
        let rows = has_image.iter().enumerate().filter(|(_, &h)| h).map(|(i, _)| i);
        for (i, v) in rows.zip(embedded) {
            image.row_mut(i).assign(&Array1::from_vec(embedding_to_f64(&v)));
        }
    }
    let targets = rows_from(&examples.iter().map(|e| e.blendshapes.weights().to_vec()).collect::<Vec<_>>());

    let mut model = BlendshapeAutoencoder::new(backend, config)?;
    let n = examples.len();
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(3));
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate);
    let dec_slot = model.encoder.slot_count();
    let mut log = TrainLog { pair_count: n, ..Default::default() };
    let name = ModelKind::AutoencoderClip.name();
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for idx in batches(n, config.batch_size, &mut order_rng) {
            let l = select_rows(&targets, &idx);
            let t = select_rows(&text, &idx);
            let im = select_rows(&image, &idx);
            let mask: Vec<bool> = idx.iter().map(|&i| has_image[i]).collect();
            let noise = model
                .variational
                .then(|| Array2::from_shape_simple_fn((idx.len(), d), || StandardNormal.sample(&mut noise_rng)));
            let batch =
                AutoencoderBatch { blendshapes: &l, text: &t, image: &im, has_image: &mask, noise: noise.as_ref() };
            let (loss, grad) = model.loss_and_grad(&batch);
            if !loss.total.is_finite() {
                return Err(ModelError::Divergence { epoch });
            }
            total += loss.total * idx.len() as f64;
            opt.begin_step();
            model.encoder.apply_update(&grad.encoder, &mut opt, 0);
            model.decoder.apply_update(&grad.decoder, &mut opt, dec_slot);
            log.batches += 1;
        }
        let mean = total / n as f64;
        log_epoch(name, epoch, config.epochs, mean);
        log.epoch_losses.push(mean);
    }
    model.trained = true;
    Ok((model, log))
}

impl super::FegModel for BlendshapeAutoencoder {
    fn name(&self) -> &str {
        ModelKind::AutoencoderClip.name()
    }

    fn predict(&self, text: &str) -> Result<BlendshapeVector, ModelError> {
        BlendshapeAutoencoder::predict(self, text)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::embeddings::MockBackend;
    use crate::models::nn::check_gradient;

    #[test]
    fn alignment_identity_and_orthogonal_cases() {
        let t = [0.6, 0.8, 0.0];
        assert!(alignment_loss(&t, &t).abs() < 1e-15);
        assert!((alignment_loss(&t, &[0.0, 0.0, 2.0]) - 1.0).abs() < 1e-15);
    }

    struct Fixture {
        l: Array2<f64>,
        t: Array2<f64>,
        im: Array2<f64>,
        mask: Vec<bool>,
        noise: Array2<f64>,
    }

    fn fixture(d: usize) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        Fixture {
            l: Array2::from_shape_simple_fn((4, NUM_BLENDSHAPES), || rng.gen_range(0.0..1.0)),
            t: Array2::from_shape_simple_fn((4, d), || rng.gen_range(-1.0..1.0)),
            im: Array2::from_shape_simple_fn((4, d), || rng.gen_range(-1.0..1.0)),
            mask: vec![true, false, true, false],
            noise: Array2::from_shape_simple_fn((4, d), || StandardNormal.sample(&mut rng)),
        }
    }

    fn model(variational: bool) -> BlendshapeAutoencoder {
        let cfg = TrainConfig {
            hidden: vec![8, 8],
            lambda_text: 0.8,
            lambda_image: 1.3,
            variational,
            prior_weight: if variational { 0.4 } else { 0.0 },
            ..Default::default()
        };
        BlendshapeAutoencoder::new(Arc::new(MockBackend::new(6)), &cfg).unwrap()
    }

    #[test]
    fn loss_is_the_sum_of_its_parts() {
        let f = fixture(6);
        for variational in [false, true] {
            let m = model(variational);
            let b = AutoencoderBatch {
                blendshapes: &f.l,
                text: &f.t,
                image: &f.im,
                has_image: &f.mask,
                noise: Some(&f.noise),
            };
            let (loss, _) = m.loss_and_grad(&b);
            let sum = loss.reconstruction + loss.text_alignment + loss.image_alignment + loss.prior;
            assert!((loss.total - sum).abs() <= 1e-9);
            assert_eq!(loss.prior == 0.0, !variational);
        }
    }

    #[test]
    fn autoencoder_gradient_matches_finite_differences() {
        let f = fixture(6);
        for variational in [false, true] {
            let mut m = model(variational);
            let b = AutoencoderBatch {
                blendshapes: &f.l,
                text: &f.t,
                image: &f.im,
                has_image: &f.mask,
                noise: Some(&f.noise),
            };
            let (_, grad) = m.loss_and_grad(&b);
            let analytic = grad.flatten();
            let base = m.params();
            check_gradient(&base, &analytic, 20, 21, |p| {
                m.set_params(p);
                m.loss_and_grad(&b).0.total
            })
            .unwrap();
        }
    }

    #[test]
    fn missing_images_contribute_nothing() {
        let f = fixture(6);
        let m = model(false);
        let none = vec![false; 4];
        let b = AutoencoderBatch { blendshapes: &f.l, text: &f.t, image: &f.im, has_image: &none, noise: None };
        assert_eq!(m.loss_and_grad(&b).0.image_alignment, 0.0);
    }
}
