use std::collections::HashMap;
use std::sync::RwLock;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{check_image, image_digest, l2_normalize, Embedding, EmbeddingError, ImageEncoder, TextEncoder};

fn seeded_unit_vector(domain: &[u8], payload: &[&[u8]], dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(domain);
    for p in payload {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let seed: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Hash-seeded joint text/image encoder.
///
/// Each input maps to a pseudo-random unit vector drawn from a generator
/// seeded by the SHA-256 of its bytes. Images can be *planted*: a planted
/// image embeds to exactly the text embedding of its paired prompt, which
/// makes retrieval outcomes known in advance.
#[derive(Debug)]
pub struct MockBackend {
    name: String,
    dim: usize,
    planted: RwLock<HashMap<[u8; 32], String>>,
}

impl MockBackend {
    pub fn new(dim: usize) -> Self {
        Self::named(format!("mock-{dim}"), dim)
    }

    pub fn named(name: impl Into<String>, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { name: name.into(), dim, planted: RwLock::new(HashMap::new()) }
    }

    /// Makes `image` embed to the text embedding of `prompt`.
    pub fn plant(&self, image: &RgbImage, prompt: &str) {
        self.planted.write().expect("planted table poisoned").insert(image_digest(image), prompt.to_string());
    }

    pub fn planted_count(&self) -> usize {
        self.planted.read().expect("planted table poisoned").len()
    }
}

impl TextEncoder for MockBackend {
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
        Ok(l2_normalize(&seeded_unit_vector(b"mock-text", &[text.as_bytes()], self.dim)))
    }
}

impl ImageEncoder for MockBackend {
    fn embed_image(&self, image: &RgbImage) -> Result<Embedding, EmbeddingError> {
        check_image(image)?;
        let digest = image_digest(image);
        let planted = self.planted.read().expect("planted table poisoned").get(&digest).cloned();
        match planted {
            Some(prompt) => self.embed_text(&prompt),
            None => Ok(l2_normalize(&seeded_unit_vector(b"mock-image", &[&digest], self.dim))),
        }
    }
}

/// How token vectors are pooled into a sentence embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    First,
}

/// Hash-seeded stand-in for a transformer language model.
///
/// Every lower-cased token gets its own pseudo-random vector; the sentence
/// embedding pools those vectors, so texts that share words land close to
/// each other.
#[derive(Debug, Clone)]
pub struct MockLanguageModel {
    name: String,
    dim: usize,
    pooling: Pooling,
}

impl MockLanguageModel {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self { name: name.into(), dim, pooling: Pooling::Mean }
    }

    pub fn with_pooling(mut self, pooling: Pooling) -> Self {
        self.pooling = pooling;
        self
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        seeded_unit_vector(b"mock-lm-token", &[self.name.as_bytes(), token.as_bytes()], self.dim)
    }
}

impl TextEncoder for MockLanguageModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let tokens: Vec<String> = text
            .split_whitespace()
            .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let pooled = match self.pooling {
            Pooling::First => self.token_vector(&tokens[0]),
            Pooling::Mean => {
                let mut acc = vec![0.0; self.dim];
                for t in &tokens {
                    for (a, v) in acc.iter_mut().zip(self.token_vector(t)) {
                        *a += v;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= tokens.len() as f64);
                acc
            }
        };
        Ok(l2_normalize(&pooled))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::cosine_similarity_f32;

    #[test]
    fn text_embedding_is_deterministic_unit_vector() {
        let b = MockBackend::new(64);
        let v = b.embed_text("happy face").unwrap();
        assert_eq!(v.len(), 64);
        assert_eq!(v, b.embed_text("happy face").unwrap());
        let norm: f64 = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_ne!(v, b.embed_text("sad face").unwrap());
        assert!(matches!(b.embed_text(""), Err(EmbeddingError::EmptyText)));
    }

    #[test]
    fn black_image_is_deterministic() {
        let b = MockBackend::new(32);
        let img = RgbImage::new(16, 16);
        assert_eq!(b.embed_image(&img).unwrap(), b.embed_image(&img).unwrap());
    }

    #[test]
    fn distinct_images_differ() {
        let b = MockBackend::new(32);
        let mut seen: Vec<Embedding> = Vec::new();
        for shade in 0..20u8 {
            let img = RgbImage::from_pixel(8, 8, image::Rgb([shade, 0, 0]));
            let e = b.embed_image(&img).unwrap();
            assert!(seen.iter().all(|s| s != &e), "collision at shade {shade}");
            seen.push(e);
        }
        let wide = RgbImage::new(16, 4);
        let tall = RgbImage::new(4, 16);
        assert_ne!(b.embed_image(&wide).unwrap(), b.embed_image(&tall).unwrap());
    }

    #[test]
    fn planted_image_matches_prompt() {
        let b = MockBackend::new(48);
        let img = RgbImage::from_pixel(4, 4, image::Rgb([1, 2, 3]));
        let before = b.embed_image(&img).unwrap();
        b.plant(&img, "a scowl");
        let after = b.embed_image(&img).unwrap();
        assert_ne!(before, after);
        assert_eq!(after, b.embed_text("a scowl").unwrap());
    }

    #[test]
    fn zero_sized_image_rejected() {
        let b = MockBackend::new(8);
        assert!(matches!(b.embed_image(&RgbImage::new(0, 3)), Err(EmbeddingError::Image(_))));
    }

    #[test]
    fn batch_equals_single_calls() {
        let b = MockBackend::new(16);
        let texts = ["one", "two", "three"];
        let batch = b.embed_texts(&texts).unwrap();
        for (t, e) in texts.iter().zip(&batch) {
            assert_eq!(&b.embed_text(t).unwrap(), e);
        }
        assert_eq!(b.embed_texts(&texts[..1]).unwrap()[0], b.embed_text("one").unwrap());
        assert!(matches!(b.embed_texts(&[]), Err(EmbeddingError::EmptyBatch)));
        match b.embed_texts(&["ok", ""]) {
            Err(EmbeddingError::Item { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn language_model_shares_words() {
        let lm = MockLanguageModel::new("mock-bert", 768);
        let a = lm.embed_text("wide smile, bright eyes").unwrap();
        let b = lm.embed_text("Wide smile and narrow eyes").unwrap();
        let c = lm.embed_text("clenched jaw").unwrap();
        assert_eq!(a.len(), 768);
        let ab = cosine_similarity_f32(&a, &b).unwrap();
        let ac = cosine_similarity_f32(&a, &c).unwrap();
        assert!(ab > ac + 0.3, "{ab} vs {ac}");
        assert!(matches!(lm.embed_text("  ...  "), Err(EmbeddingError::EmptyText)));

        let first = lm.clone().with_pooling(Pooling::First);
        assert_eq!(first.embed_text("smile now").unwrap(), first.embed_text("smile later").unwrap());
    }

    #[test]
    fn language_models_with_different_names_differ() {
        let a = MockLanguageModel::new("mock-bert", 32).embed_text("calm").unwrap();
        let b = MockLanguageModel::new("mock-xlm", 32).embed_text("calm").unwrap();
        assert_ne!(a, b);
    }
}
