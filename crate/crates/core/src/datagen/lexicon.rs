//! Word-level emotion lexicon and nearest-word queries.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use super::DatagenError;
use crate::emotion::{EmotionDistribution, NUM_EMOTIONS};
use crate::math::cosine_similarity;

/// Word to emotion distribution, normalized on load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmotionLexicon {
    words: BTreeMap<String, EmotionDistribution>,
    skipped: Vec<String>,
}

impl EmotionLexicon {
    /// Normalizes each raw vector. Words with no emotional mass cannot be
    /// normalized and are set aside (see [`Self::skipped`]).
    pub fn from_entries<I, S>(entries: I) -> Result<Self, DatagenError>
    where
        I: IntoIterator<Item = (S, [f64; NUM_EMOTIONS])>,
        S: Into<String>,
    {
        let mut lex = Self::default();
        for (i, (word, raw)) in entries.into_iter().enumerate() {
            lex.add(i + 1, word.into(), &raw)?;
        }
        Ok(lex)
    }

    fn add(&mut self, line: usize, word: String, raw: &[f64]) -> Result<(), DatagenError> {
        let bad = |message: String| DatagenError::Lexicon { line, message };
        if word.is_empty() {
            return Err(bad("empty word".into()));
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(bad(format!("invalid scores for {word:?}")));
        }
        if raw.iter().sum::<f64>() == 0.0 {
            self.skipped.push(word);
            return Ok(());
        }
        let d = EmotionDistribution::normalize(raw).map_err(|e| bad(e.to_string()))?;
        if self.words.insert(word.clone(), d).is_some() {
            return Err(bad(format!("duplicate word {word:?}")));
        }
        Ok(())
    }

    /// Reads `word<TAB>8 scores` lines; blank lines and `#` comments are ignored.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, DatagenError> {
        let mut lex = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| DatagenError::Lexicon { line: i + 1, message: e.to_string() })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (word, rest) = trimmed
                .split_once('\t')
                .ok_or_else(|| DatagenError::Lexicon { line: i + 1, message: "expected word<TAB>scores".into() })?;
            let scores: Result<Vec<f64>, _> =
                rest.split(['\t', ' ']).filter(|s| !s.is_empty()).map(str::parse).collect();
            let scores = scores.map_err(|e| DatagenError::Lexicon { line: i + 1, message: e.to_string() })?;
            if scores.len() != NUM_EMOTIONS {
                return Err(DatagenError::Lexicon {
                    line: i + 1,
                    message: format!("expected {NUM_EMOTIONS} scores, found {}", scores.len()),
                });
            }
            lex.add(i + 1, word.trim().to_lowercase(), &scores)?;
        }
        if !lex.skipped.is_empty() {
            log::info!("lexicon: {} words without emotional mass skipped", lex.skipped.len());
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatagenError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| DatagenError::io(path, e))?;
        Self::parse(std::io::BufReader::new(f))
    }

    pub fn get(&self, word: &str) -> Option<&EmotionDistribution> {
        self.words.get(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmotionDistribution)> {
        self.words.iter().map(|(w, d)| (w.as_str(), d))
    }

    /// Words dropped on load because all their scores were zero.
    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }
}

/// The `k` words most similar to `word` by cosine similarity of their
/// emotion vectors, best first, ties in lexicographic order.
pub fn nearest_words(lexicon: &EmotionLexicon, word: &str, k: usize) -> Result<Vec<(String, f64)>, DatagenError> {
    let query = lexicon.get(word).ok_or_else(|| DatagenError::Lookup(word.to_string()))?;
    let others = lexicon.len() - 1;
    if k > others {
        return Err(DatagenError::Config(format!("k = {k} but only {others} other words in the lexicon")));
    }
    let mut scored: Vec<(String, f64)> = lexicon
        .iter()
        .filter(|(w, _)| *w != word)
        .map(|(w, d)| (w.to_string(), cosine_similarity(query.values(), d.values()).expect("same length")))
        .collect();
    // Iteration is already lexicographic, so a stable sort keeps ties in word order.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
    scored.truncate(k);
    Ok(scored)
}
