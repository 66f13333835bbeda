//! Corpus statistics: class assignment, per-class text statistics and frequent words.
//!
//! Text rules are fixed so that numbers are comparable between runs:
//!
//! - words are whitespace-separated tokens with punctuation stripped from
//!   both ends; tokens that are all punctuation are dropped
//! - word length counts the characters of the stripped token
//! - a sentence is a run of text ending at `.`, `!` or `?` (or at the end of
//!   the text) that holds at least one word, so average sentence length is
//!   words per sentence
//! - uniqueness and frequency counts are case-folded
//! - the word-count histogram uses bins of two words: bin `i` counts texts
//!   with `2i` or `2i + 1` words

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Triad;
use crate::emotion::{EmotionClass, NUM_EMOTIONS};

pub const HISTOGRAM_BIN_WIDTH: usize = 2;

const STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("the dataset is empty")]
    EmptyDataset,
    #[error("no triads are assigned to {0}")]
    EmptyClass(EmotionClass),
}

/// The class with the largest share of the triad's distribution; ties go to the lower index.
pub fn assign_class(triad: &Triad) -> EmotionClass {
    triad.emotion.dominant()
}

fn is_edge_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '«' | '»' | '—' | '–' | '…')
}

/// Words of `text` after stripping edge punctuation, original case.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().map(|t| t.trim_matches(is_edge_punctuation)).filter(|t| !t.is_empty()).collect()
}

/// Number of sentences in `text` that contain at least one word.
pub fn count_sentences(text: &str) -> usize {
    text.split(['.', '!', '?']).filter(|s| !tokenize(s).is_empty()).count()
}

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: usize,
    /// `counts[i]` covers word counts `i * bin_width .. (i + 1) * bin_width`.
    pub counts: Vec<usize>,
}

impl Histogram {
    fn add(&mut self, words: usize) {
        let bin = words / self.bin_width;
        if self.counts.len() <= bin {
            self.counts.resize(bin + 1, 0);
        }
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Text and label statistics of the triads assigned to one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: EmotionClass,
    pub num_triads: usize,
    pub num_words: usize,
    pub num_unique_words: usize,
    pub avg_word_len: f64,
    pub avg_sentence_len: f64,
    pub emotion_mean: [f64; NUM_EMOTIONS],
    /// Population standard deviation per emotion.
    pub emotion_std: [f64; NUM_EMOTIONS],
    pub word_count_histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_triads: usize,
    /// Every class, in canonical order, including empty ones.
    pub classes: Vec<ClassStats>,
    pub word_count_histogram: Histogram,
}

impl DatasetStats {
    pub fn class(&self, class: EmotionClass) -> &ClassStats {
        &self.classes[class.index()]
    }
}

fn class_stats(class: EmotionClass, triads: &[&Triad]) -> ClassStats {
    let mut num_words = 0;
    let mut chars = 0;
    let mut sentences = 0;
    let mut unique = HashSet::new();
    let mut histogram = Histogram { bin_width: HISTOGRAM_BIN_WIDTH, counts: Vec::new() };
    for t in triads {
        let words = tokenize(&t.text);
        num_words += words.len();
        chars += words.iter().map(|w| w.chars().count()).sum::<usize>();
        sentences += count_sentences(&t.text);
        unique.extend(words.iter().map(|w| w.to_lowercase()));
        histogram.add(words.len());
    }
    let n = triads.len() as f64;
    let mut mean = [0.0; NUM_EMOTIONS];
    let mut std = [0.0; NUM_EMOTIONS];
    if !triads.is_empty() {
        for (i, m) in mean.iter_mut().enumerate() {
            *m = triads.iter().map(|t| t.emotion.values()[i]).sum::<f64>() / n;
        }
        for (i, s) in std.iter_mut().enumerate() {
            *s = (triads.iter().map(|t| (t.emotion.values()[i] - mean[i]).powi(2)).sum::<f64>() / n).sqrt();
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    ClassStats {
        class,
        num_triads: triads.len(),
        num_words,
        num_unique_words: unique.len(),
        avg_word_len: ratio(chars, num_words),
        avg_sentence_len: ratio(num_words, sentences),
        emotion_mean: mean,
        emotion_std: std,
        word_count_histogram: histogram,
    }
}

fn by_class(dataset: &[Triad]) -> Vec<Vec<&Triad>> {
    let mut groups = vec![Vec::new(); NUM_EMOTIONS];
    for t in dataset {
        groups[assign_class(t).index()].push(t);
    }
    groups
}

pub fn compute_stats(dataset: &[Triad]) -> Result<DatasetStats, AnalysisError> {
    if dataset.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    let classes: Vec<ClassStats> =
        by_class(dataset).iter().zip(EmotionClass::ALL).map(|(group, class)| class_stats(class, group)).collect();
    let mut histogram = Histogram { bin_width: HISTOGRAM_BIN_WIDTH, counts: Vec::new() };
    for t in dataset {
        histogram.add(tokenize(&t.text).len());
    }
    Ok(DatasetStats { num_triads: dataset.len(), classes, word_count_histogram: histogram })
}

/// Most frequent non-stopwords among the texts assigned to `class`, highest
/// count first, ties in lexicographic order.
pub fn frequent_words(
    dataset: &[Triad],
    class: EmotionClass,
    top_n: usize,
) -> Result<Vec<(String, usize)>, AnalysisError> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut members = 0;
    for t in dataset.iter().filter(|t| assign_class(t) == class) {
        members += 1;
        for w in tokenize(&t.text) {
            let w = w.to_lowercase();
            if !stopwords().contains(w.as_str()) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    if members == 0 {
        return Err(AnalysisError::EmptyClass(class));
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    Ok(ranked)
}

/// Triad count per class, in canonical order.
pub fn class_counts(dataset: &[Triad]) -> BTreeMap<EmotionClass, usize> {
    let mut out: BTreeMap<EmotionClass, usize> = EmotionClass::ALL.iter().map(|&c| (c, 0)).collect();
    for t in dataset {
        *out.get_mut(&assign_class(t)).expect("all classes present") += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blendshape::BlendshapeVector;
    use crate::dataset::Split;
    use crate::emotion::EmotionDistribution;
    use proptest::prelude::*;

    fn triad(text: &str, emotion: &[f64]) -> Triad {
        Triad {
            id: format!("t-{text}"),
            text: text.to_string(),
            image_path: None,
            blendshapes: BlendshapeVector::zeros(),
            emotion: EmotionDistribution::normalize(emotion).unwrap(),
            split: Split::Train,
            intensity: None,
            presentation: None,
        }
    }

    const SAD: [f64; 8] = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];

    #[test]
    fn class_assignment_examples() {
        assert_eq!(assign_class(&triad("x", &SAD)), EmotionClass::Sadness);
        assert_eq!(assign_class(&triad("x", &[1.0; 8])), EmotionClass::Happiness);
        assert_eq!(assign_class(&triad("x", &[0.4, 0.35, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0])), EmotionClass::Happiness);
    }

    #[test]
    fn hand_counted_fixture() {
        let stats = compute_stats(&[triad("Calm face. Quiet eyes.", &SAD)]).unwrap();
        let s = stats.class(EmotionClass::Sadness);
        assert_eq!(s.num_words, 4);
        assert_eq!(s.num_unique_words, 4);
        assert_eq!(s.avg_sentence_len, 2.0);
        assert_eq!(s.avg_word_len, 4.25);
        assert_eq!(s.emotion_std, [0.0; 8]);
        assert_eq!(s.emotion_mean, SAD);
        assert_eq!(s.word_count_histogram.counts, [0, 0, 1]);
        let empty = stats.class(EmotionClass::Fear);
        assert_eq!((empty.num_triads, empty.num_words, empty.avg_word_len), (0, 0, 0.0));
    }

    #[test]
    fn tokenization_rules() {
        assert_eq!(tokenize("  \"Wide-eyed,\" she gasped... (again)! - "), ["Wide-eyed", "she", "gasped", "again"]);
        assert_eq!(count_sentences("One. Two! Three? ..."), 3);
        assert_eq!(count_sentences("no terminal punctuation"), 1);
        assert_eq!(count_sentences(""), 0);
    }

    #[test]
    fn unique_words_are_case_folded() {
        let stats = compute_stats(&[triad("Eyes eyes EYES wide.", &SAD)]).unwrap();
        assert_eq!(stats.class(EmotionClass::Sadness).num_unique_words, 2);
    }

    #[test]
    fn population_std() {
        let data = [triad("a", &[0.25, 0.0, 0.0, 0.75, 0.0, 0.0, 0.0, 0.0]), triad("b", &SAD)];
        let s = compute_stats(&data).unwrap().classes[3].clone();
        assert_eq!(s.num_triads, 2);
        assert_eq!(s.emotion_mean[0], 0.125);
        assert_eq!(s.emotion_std[0], 0.125);
        assert_eq!(s.emotion_std[3], 0.125);
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(compute_stats(&[]), Err(AnalysisError::EmptyDataset));
        let data = [triad("a", &SAD)];
        assert_eq!(frequent_words(&data, EmotionClass::Fear, 3), Err(AnalysisError::EmptyClass(EmotionClass::Fear)));
    }

    #[test]
    fn planted_frequency_ranks_first() {
        let data = [
            triad("Eyes wide, eyes wet.", &SAD),
            triad("The eyes close; a tear falls.", &SAD),
            triad("Her eyes and her lips tremble.", &SAD),
            triad("Eyes down, lips tight.", &SAD),
        ];
        let top = frequent_words(&data, EmotionClass::Sadness, 2).unwrap();
        assert_eq!(top, [("eyes".to_string(), 5), ("lips".to_string(), 2)]);
        let all = frequent_words(&data, EmotionClass::Sadness, 1000).unwrap();
        assert!(all.iter().all(|(w, _)| !stopwords().contains(w.as_str())));
        // Ties in lexicographic order.
        let ones: Vec<&str> = all.iter().filter(|(_, c)| *c == 1).map(|(w, _)| w.as_str()).collect();
        let mut sorted = ones.clone();
        sorted.sort();
        assert_eq!(ones, sorted);
    }

    fn arb_triads() -> impl Strategy<Value = Vec<Triad>> {
        let word = prop::sample::select(vec!["calm", "Eyes", "the", "brow,", "smile.", "fear!", "a", "jaw?", "tense"]);
        let text = prop::collection::vec(word, 1..12).prop_map(|w| w.join(" "));
        let emotion = prop::array::uniform8(0.0f64..1.0).prop_map(|mut v| {
            v[0] += 0.01;
            v
        });
        prop::collection::vec((text, emotion), 1..25).prop_map(|items| items.iter().map(|(t, e)| triad(t, e)).collect())
    }

    proptest! {
        #[test]
        fn assignment_is_total(data in arb_triads()) {
            let stats = compute_stats(&data).unwrap();
            prop_assert_eq!(stats.classes.iter().map(|c| c.num_triads).sum::<usize>(), data.len());
            prop_assert_eq!(class_counts(&data).values().sum::<usize>(), data.len());
            prop_assert_eq!(stats.word_count_histogram.total(), data.len());
        }

        #[test]
        fn word_counts_add_over_concatenation(a in arb_triads(), b in arb_triads()) {
            let joined: Vec<Triad> = a.iter().chain(&b).cloned().collect();
            let (sa, sb, sj) = (compute_stats(&a).unwrap(), compute_stats(&b).unwrap(), compute_stats(&joined).unwrap());
            for i in 0..NUM_EMOTIONS {
                prop_assert_eq!(sj.classes[i].num_words, sa.classes[i].num_words + sb.classes[i].num_words);
            }
        }

        #[test]
        fn frequency_ranking_never_increases(data in arb_triads()) {
            for class in EmotionClass::ALL {
                if let Ok(ranked) = frequent_words(&data, class, 100) {
                    for pair in ranked.windows(2) {
                        prop_assert!(pair[0].1 > pair[1].1 || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0));
                    }
                }
            }
        }

        #[test]
        fn averages_are_non_negative(data in arb_triads()) {
            for c in compute_stats(&data).unwrap().classes {
                prop_assert!(c.avg_word_len >= 0.0 && c.avg_sentence_len >= 0.0);
                prop_assert!(c.emotion_std.iter().all(|s| *s >= 0.0));
            }
        }
    }
}
