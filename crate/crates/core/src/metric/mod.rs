//! The Emo3D metric and the blendshape MSE evaluation.
//!
//! For every prompt in a class-stratified bank, the model's blendshapes are
//! rendered, the image is embedded, the `k` most similar bank prompts are
//! retrieved, and the KL divergence between the prompt's emotion distribution
//! and the mean distribution of the retrieved prompts is squashed with a
//! logistic function. Scores live in `[0.5, 1)`; lower is better.

mod bank;
mod report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Triad;
use crate::embeddings::{EmbeddingBackend, EmbeddingError};
use crate::emotion::{DistributionError, EmotionDistribution};
use crate::math::{cosine_similarity_f32, kl_divergence, mse, sigmoid, VectorError};
use crate::models::{FegModel, ModelError};
use crate::renderer::{FaceRenderer, RenderError};

pub use bank::{select_prompt_bank, BankPrompt, PromptBank};
pub use report::{format_table, rank_rows, read_report_csv, write_report_csv, ReportRow};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_BANK_SIZE: usize = 400;
/// Evaluation aborts when more than this fraction of predictions fail.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("not enough test prompts for a stratified bank: {}", format_deficits(.deficits))]
    Stratification { deficits: Vec<(String, usize, usize)> },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{failures} of {total} predictions failed")]
    Evaluation { failures: usize, total: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

fn format_deficits(d: &[(String, usize, usize)]) -> String {
    d.iter().map(|(c, have, need)| format!("{c} has {have}, needs {need}")).collect::<Vec<_>>().join("; ")
}

/// Indices of the `k` bank rows most similar to `query`, best first; ties go to the lower index.
pub fn retrieve_top_k(query: &[f32], bank: &PromptBank, k: usize) -> Result<Vec<usize>, MetricError> {
    let n = bank.len();
    if k == 0 || k > n {
        return Err(MetricError::Parameter(format!("k = {k} must lie in 1..={n}")));
    }
    let mut scored: Vec<(f64, usize)> = bank
        .embeddings
        .iter()
        .enumerate()
        .map(|(i, row)| cosine_similarity_f32(query, row).map(|s| (s, i)))
        .collect::<Result<_, _>>()?;
    let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < n {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    Ok(scored.into_iter().map(|(_, i)| i).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emo3dScore {
    pub kl: f64,
    pub score: f64,
}

/// Logistic-squashed KL between `phi` and the mean of `retrieved`.
pub fn emo3d_score(
    phi: &EmotionDistribution,
    retrieved: &[EmotionDistribution],
    eps: f64,
) -> Result<Emo3dScore, MetricError> {
    if retrieved.is_empty() {
        return Err(MetricError::Parameter("no retrieved distributions".into()));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(MetricError::Parameter(format!("eps = {eps} must be positive")));
    }
    let mean = EmotionDistribution::mean(retrieved)?;
    let kl = kl_divergence(phi, &mean, eps);
    Ok(Emo3dScore { kl, score: sigmoid(kl) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptScore {
    pub prompt_id: String,
    pub kl: f64,
    pub emo3d: f64,
    pub retrieved: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFailure {
    pub prompt_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub per_prompt: Vec<PromptScore>,
    pub failed: Vec<PromptFailure>,
    pub mean_emo3d: f64,
    pub mean_mse: Option<f64>,
    pub k: usize,
    pub n: usize,
    pub backend_name: String,
    pub rig_name: String,
}

impl MetricResult {
    pub fn failures(&self) -> usize {
        self.failed.len()
    }

    pub fn to_row(&self, model: &str) -> ReportRow {
        ReportRow {
            model: model.to_string(),
            mse: self.mean_mse,
            emo3d: self.mean_emo3d,
            k: self.k,
            n: self.n,
            backend: self.backend_name.clone(),
            rig: self.rig_name.clone(),
            failures: self.failures(),
        }
    }
}

/// Sum in ascending order so the result does not depend on input order.
pub fn order_independent_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

enum Outcome {
    Scored(PromptScore),
    Failed(PromptFailure),
}

/// Runs the full predict, render, embed, retrieve and score loop over the bank.
pub fn evaluate_emo3d<B>(
    model: &dyn FegModel,
    bank: &PromptBank,
    renderer: &dyn FaceRenderer,
    backend: &B,
    k: usize,
    eps: f64,
) -> Result<MetricResult, MetricError>
where
    B: EmbeddingBackend + ?Sized,
{
    if backend.name() != bank.backend_name {
        return Err(MetricError::Parameter(format!(
            "bank was embedded with {:?} but evaluation uses {:?}",
            bank.backend_name,
            backend.name()
        )));
    }
    if k == 0 || k > bank.len() {
        return Err(MetricError::Parameter(format!("k = {k} must lie in 1..={}", bank.len())));
    }

    let run = |prompt: &BankPrompt| -> Result<Outcome, MetricError> {
        let weights = match model.predict(&prompt.text) {
            Ok(w) => w,
            Err(e) => {
                log::warn!("prediction failed for {}: {e}", prompt.id);
                return Ok(Outcome::Failed(PromptFailure { prompt_id: prompt.id.clone(), message: e.to_string() }));
            }
        };
        let image = renderer.render(&weights)?;
        let embedding = backend.embed_image(&image)?;
        let retrieved = retrieve_top_k(&embedding, bank, k)?;
        let dists: Vec<EmotionDistribution> = retrieved.iter().map(|&i| bank.prompts[i].emotion).collect();
        let s = emo3d_score(&prompt.emotion, &dists, eps)?;
        Ok(Outcome::Scored(PromptScore { prompt_id: prompt.id.clone(), kl: s.kl, emo3d: s.score, retrieved }))
    };

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Outcome> = {
        use rayon::prelude::*;
        bank.prompts.par_iter().map(run).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Outcome> = bank.prompts.iter().map(run).collect::<Result<_, _>>()?;

    let mut per_prompt = Vec::new();
    let mut failed = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Scored(s) => per_prompt.push(s),
            Outcome::Failed(f) => failed.push(f),
        }
    }
    let total = bank.len();
    if per_prompt.is_empty() || failed.len() as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(MetricError::Evaluation { failures: failed.len(), total });
    }
    if !failed.is_empty() {
        log::warn!("{} of {total} prompts excluded after prediction failures", failed.len());
    }
    let scores: Vec<f64> = per_prompt.iter().map(|p| p.emo3d).collect();
    Ok(MetricResult {
        mean_emo3d: order_independent_mean(&scores),
        per_prompt,
        failed,
        mean_mse: None,
        k,
        n: total,
        backend_name: bank.backend_name.clone(),
        rig_name: renderer.name().to_string(),
    })
}

/// Mean blendshape MSE of the model's predictions over `testset`.
pub fn evaluate_mse(model: &dyn FegModel, testset: &[Triad]) -> Result<f64, MetricError> {
    if testset.is_empty() {
        return Err(MetricError::Parameter("empty test set".into()));
    }
    let errors: Vec<f64> =
        testset.iter().map(|t| model.predict(&t.text).map(|p| mse(&p, &t.blendshapes))).collect::<Result<_, _>>()?;
    Ok(order_independent_mean(&errors))
}

/// Paired bootstrap of `mean(b - a)`: returns the observed gap and its standard error.
pub fn paired_bootstrap(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<(f64, f64), MetricError> {
    if a.len() != b.len() || a.is_empty() || resamples < 2 {
        return Err(MetricError::Parameter("paired bootstrap needs equal non-empty samples and >= 2 resamples".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = diffs.len();
    let gap = diffs.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> =
        (0..resamples).map(|_| (0..n).map(|_| diffs[rng.gen_range(0..n)]).sum::<f64>() / n as f64).collect();
    let m = means.iter().sum::<f64>() / resamples as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    Ok((gap, var.sqrt()))
}

#[cfg(test)]
mod tests;
