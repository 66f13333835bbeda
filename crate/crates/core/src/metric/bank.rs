use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::dataset::{Split, Triad};
use crate::embeddings::{Embedding, TextEncoder};
use crate::emotion::{EmotionClass, EmotionDistribution, NUM_EMOTIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankPrompt {
    pub id: String,
    pub text: String,
    pub emotion: EmotionDistribution,
}

/// Evaluation prompts with their text embeddings; row `i` of `embeddings` belongs to prompt `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    pub prompts: Vec<BankPrompt>,
    pub embeddings: Vec<Embedding>,
    pub backend_name: String,
}

impl PromptBank {
    pub fn new<E: TextEncoder + ?Sized>(prompts: Vec<BankPrompt>, encoder: &E) -> Result<Self, MetricError> {
        if prompts.is_empty() {
            return Err(MetricError::Parameter("empty prompt bank".into()));
        }
        let texts: Vec<&str> = prompts.iter().map(|p| p.text.as_str()).collect();
        let embeddings = encoder.embed_texts(&texts)?;
        Ok(Self { prompts, embeddings, backend_name: encoder.name().to_string() })
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }
}

/// Per-class quotas: `n / 8` each, remainder to the lowest class indices.
pub(crate) fn class_quotas(n: usize) -> [usize; NUM_EMOTIONS] {
    let mut q = [n / NUM_EMOTIONS; NUM_EMOTIONS];
    for slot in q.iter_mut().take(n % NUM_EMOTIONS) {
        *slot += 1;
    }
    q
}

/// Draws a class-stratified bank of `n` prompts from the test split.
///
/// Prompts are grouped by dominant emotion and sampled uniformly without
/// replacement inside each class. The bank lists classes in canonical order
/// and keeps dataset order within a class.
pub fn select_prompt_bank<E: TextEncoder + ?Sized>(
    dataset: &[Triad],
    n: usize,
    seed: u64,
    encoder: &E,
) -> Result<PromptBank, MetricError> {
    if n == 0 {
        return Err(MetricError::Parameter("bank size must be positive".into()));
    }
    let mut by_class: [Vec<&Triad>; NUM_EMOTIONS] = Default::default();
    for t in dataset.iter().filter(|t| t.split == Split::Test) {
        by_class[t.class().index()].push(t);
    }
    let quotas = class_quotas(n);
    let deficits: Vec<(String, usize, usize)> = EmotionClass::ALL
        .iter()
        .filter(|c| by_class[c.index()].len() < quotas[c.index()])
        .map(|c| (c.name().to_string(), by_class[c.index()].len(), quotas[c.index()]))
        .collect();
    if !deficits.is_empty() {
        return Err(MetricError::Stratification { deficits });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prompts = Vec::with_capacity(n);
    for class in EmotionClass::ALL {
        let pool = &by_class[class.index()];
        let mut picked = sample(&mut rng, pool.len(), quotas[class.index()]).into_vec();
        picked.sort_unstable();
        prompts.extend(picked.into_iter().map(|i| BankPrompt {
            id: pool[i].id.clone(),
            text: pool[i].text.clone(),
            emotion: pool[i].emotion,
        }));
    }
    PromptBank::new(prompts, encoder)
}
