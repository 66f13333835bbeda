//! Description generation, labelling and triad assembly.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{encode_png, ImageGenClient, ImageRequest, RetryPolicy, TextGenClient, TextRequest};
use super::lexicon::EmotionLexicon;
use super::templates::PromptTemplates;
use super::tracker::{extract_blendshapes, BlendshapeTracker};
use super::DatagenError;
use crate::blendshape::BlendshapeVector;
use crate::dataset::{write_dataset_to, Presentation, Split, Triad};
use crate::embeddings::cache::hex;
use crate::emotion::{normalize_distribution, EmotionClass, EmotionDistribution, NUM_EMOTIONS};

pub const DATAGEN_FORMAT_VERSION: u32 = 1;

const TEMPLATE_ORIGIN: &str = "project-authored; the original generation prompts are unpublished";

/// Asks for `count` distinct descriptions of `class`.
///
/// Each request carries a running number, so a replacement for a duplicate is
/// a new request rather than a cache hit.
pub fn generate_descriptions(
    client: &dyn TextGenClient,
    templates: &PromptTemplates,
    class: EmotionClass,
    count: usize,
    policy: &RetryPolicy,
) -> Result<Vec<String>, DatagenError> {
    if count == 0 {
        return Err(DatagenError::Config("count must be at least 1".into()));
    }
    policy.validate()?;
    let mut out = Vec::with_capacity(count);
    let mut seen = HashSet::new();
    let mut rejected = 0;
    let mut n = 0usize;
    while out.len() < count {
        let vars =
            BTreeMap::from([("emotion".to_string(), class.name().to_string()), ("n".to_string(), n.to_string())]);
        n += 1;
        let request = TextRequest::new(&templates.describe, vars);
        let text = policy.run(client.id(), || client.complete(&request))?.trim().to_string();
        if text.is_empty() || !seen.insert(text.clone()) {
            rejected += 1;
            log::debug!("{class}: rejected duplicate or empty description {text:?}");
            if rejected > policy.duplicate_cap {
                return Err(DatagenError::Generation {
                    class: class.name().to_string(),
                    wanted: count,
                    message: format!(
                        "{rejected} duplicate or empty responses exceed the cap of {}",
                        policy.duplicate_cap
                    ),
                });
            }
            continue;
        }
        out.push(text);
    }
    Ok(out)
}

/// A parsed distribution together with the response it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub distribution: EmotionDistribution,
    pub raw: String,
}

// Pulls every decimal number out of free text.
fn scan_numbers(raw: &str) -> Result<Vec<f64>, String> {
    let b = raw.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let starts = b[i].is_ascii_digit()
            || (matches!(b[i], b'-' | b'.') && b.get(i + 1).is_some_and(|c| c.is_ascii_digit() || *c == b'.'));
        if !starts {
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
            i += 1;
        }
        if i < b.len() && matches!(b[i], b'e' | b'E') {
            let mut j = i + 1;
            if j < b.len() && matches!(b[j], b'+' | b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let token = &raw[start..i];
        out.push(token.parse().map_err(|_| format!("malformed number {token:?}"))?);
    }
    Ok(out)
}

/// Asks the client for the emotion distribution of `text` and normalizes the answer.
pub fn extract_emotion_distribution(
    client: &dyn TextGenClient,
    templates: &PromptTemplates,
    text: &str,
    policy: &RetryPolicy,
) -> Result<Extraction, DatagenError> {
    if text.trim().is_empty() {
        return Err(DatagenError::Config("cannot label an empty text".into()));
    }
    let request = TextRequest::new(&templates.distribution, BTreeMap::from([("text".to_string(), text.to_string())]));
    let raw = policy.run(client.id(), || client.complete(&request))?;
    let values = scan_numbers(&raw).map_err(|message| DatagenError::Parse { message, raw: raw.clone() })?;
    if values.len() != NUM_EMOTIONS {
        return Err(DatagenError::Parse {
            message: format!("expected {NUM_EMOTIONS} numbers, found {}", values.len()),
            raw,
        });
    }
    Ok(Extraction { distribution: normalize_distribution(&values)?, raw })
}

/// A description with its emotion label, ready for image generation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledText {
    pub text: String,
    pub emotion: EmotionDistribution,
    pub intensity: Option<u8>,
    pub presentation: Option<Presentation>,
}

impl LabeledText {
    pub fn new(text: impl Into<String>, emotion: EmotionDistribution) -> Self {
        Self { text: text.into(), emotion, intensity: None, presentation: None }
    }
}

/// Stable identifier of one image of `item`.
pub fn triad_id(item: &LabeledText, variant: u32) -> String {
    let mut h = Sha256::new();
    h.update(item.text.as_bytes());
    h.update([0x1f]);
    h.update(format!("{:?}/{:?}", item.intensity, item.presentation).as_bytes());
    format!("{}-{variant}", &hex(&h.finalize())[..16])
}

/// Maps the id hash to [0, 1) and compares it with the cumulative ratios.
pub fn assign_split(id: &str, ratios: [f64; 3]) -> Split {
    let digest = Sha256::digest(id.as_bytes());
    let x = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
    let u = x as f64 / 2f64.powi(64);
    if u < ratios[0] {
        Split::Train
    } else if u < ratios[0] + ratios[1] {
        Split::Val
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    /// Images requested per description; every image that yields a face becomes a triad.
    pub images_per_text: u32,
    /// Train, val and test shares.
    pub split_ratios: [f64; 3],
    /// Largest tolerated share of failed items before the run is abandoned.
    pub max_failure_rate: f64,
    pub retry: RetryPolicy,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            images_per_text: 1,
            split_ratios: [0.8, 0.1, 0.1],
            max_failure_rate: 0.25,
            retry: RetryPolicy::default(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.images_per_text == 0 {
            return Err(DatagenError::Config("images_per_text must be at least 1".into()));
        }
        let r = self.split_ratios;
        if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatagenError::Config(format!("split ratios {r:?} must be non-negative and sum to 1")));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(DatagenError::Config(format!("max_failure_rate {} outside [0, 1]", self.max_failure_rate)));
        }
        self.retry.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub id: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub texts: usize,
    pub images_requested: usize,
    pub triads: usize,
    pub skipped: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Everything needed to audit or repeat a run. Contains no timestamps, so
/// replays are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub template_sha256: BTreeMap<String, String>,
    pub template_origin: String,
    pub text_client: Option<String>,
    pub image_client: String,
    pub tracker: String,
    pub images_per_text: u32,
    pub split_ratios: [f64; 3],
    pub max_failure_rate: f64,
    pub generation: Option<serde_json::Value>,
    pub counts: Counts,
    pub skips: Vec<SkipRecord>,
    pub dataset_sha256: String,
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub triads: Vec<Triad>,
    pub dataset_path: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: DatagenManifest,
}

// What happened before image generation, for the manifest and failure rate.
#[derive(Default)]
struct Upstream {
    text_client: Option<String>,
    templates: BTreeMap<String, String>,
    generation: Option<serde_json::Value>,
    texts: usize,
    skips: Vec<SkipRecord>,
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Generates images for labelled texts, tracks them and writes
/// `dataset.jsonl`, `images/<sha256>.png` and `manifest.json` under `out_dir`.
///
/// Items whose image generation or face tracking fails are skipped and
/// logged; the run fails when the skipped share exceeds the configured cap.
pub fn build_triads(
    items: &[LabeledText],
    image_client: &dyn ImageGenClient,
    tracker: &dyn BlendshapeTracker,
    out_dir: &Path,
    config: &BuildConfig,
) -> Result<BuildReport, DatagenError> {
    let upstream = Upstream { texts: items.len(), ..Upstream::default() };
    build_inner(items, image_client, tracker, out_dir, config, upstream)
}

struct Unit<'a> {
    item: &'a LabeledText,
    variant: u32,
    id: String,
}

type UnitOutput = Result<(Vec<u8>, BlendshapeVector), SkipRecord>;

fn build_inner(
    items: &[LabeledText],
    image_client: &dyn ImageGenClient,
    tracker: &dyn BlendshapeTracker,
    out_dir: &Path,
    config: &BuildConfig,
    upstream: Upstream,
) -> Result<BuildReport, DatagenError> {
    config.validate()?;
    if items.is_empty() && upstream.skips.is_empty() {
        return Err(DatagenError::Config("nothing to build: no labelled texts".into()));
    }
    let mut units = Vec::with_capacity(items.len() * config.images_per_text as usize);
    let mut ids = HashSet::new();
    for item in items {
        if item.text.trim().is_empty() {
            return Err(DatagenError::Config("labelled text is empty".into()));
        }
        for variant in 0..config.images_per_text {
            let id = triad_id(item, variant);
            if !ids.insert(id.clone()) {
                return Err(DatagenError::Config(format!("duplicate item {:?}", item.text)));
            }
            units.push(Unit { item, variant, id });
        }
    }

    let outputs: Vec<UnitOutput> = par_map(&units, |u| {
        let skip = |stage: &str, reason: String| SkipRecord { id: u.id.clone(), stage: stage.into(), reason };
        let request = ImageRequest { prompt: u.item.text.clone(), variant: u.variant };
        let image = config
            .retry
            .run(image_client.id(), || image_client.generate(&request))
            .map_err(|e| skip("image", e.to_string()))?;
        let weights = extract_blendshapes(tracker, &image).map_err(|e| skip("tracker", e.to_string()))?;
        Ok((encode_png(&image), weights))
    });

    let mut skips = upstream.skips;
    let total = upstream.texts - items.len() + units.len();
    let failed = skips.len() + outputs.iter().filter(|o| o.is_err()).count();
    for o in &outputs {
        if let Err(s) = o {
            log::warn!("skipped {} at {}: {}", s.id, s.stage, s.reason);
        }
    }
    if failed as f64 > config.max_failure_rate * total as f64 {
        return Err(DatagenError::Pipeline { failed, total, cap: config.max_failure_rate });
    }

    let image_dir = out_dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| DatagenError::io(&image_dir, e))?;
    let mut triads = Vec::new();
    let mut counts = Counts { texts: upstream.texts, images_requested: units.len(), ..Counts::default() };
    for (unit, output) in units.iter().zip(outputs) {
        let (png, blendshapes) = match output {
            Ok(v) => v,
            Err(s) => {
                skips.push(s);
                continue;
            }
        };
        let name = format!("{}.png", hex(&Sha256::digest(&png)));
        let path = image_dir.join(&name);
        if !path.exists() {
            std::fs::write(&path, &png).map_err(|e| DatagenError::io(&path, e))?;
        }
        let split = assign_split(&unit.id, config.split_ratios);
        match split {
            Split::Train => counts.train += 1,
            Split::Val => counts.val += 1,
            Split::Test => counts.test += 1,
        }
        triads.push(Triad {
            id: unit.id.clone(),
            text: unit.item.text.clone(),
            image_path: Some(format!("images/{name}")),
            blendshapes,
            emotion: unit.item.emotion,
            split,
            intensity: unit.item.intensity,
            presentation: unit.item.presentation,
        });
    }
    counts.triads = triads.len();
    counts.skipped = skips.len();

    let mut bytes = Vec::new();
    write_dataset_to(&mut bytes, &triads).expect("writing to memory");
    let dataset_path = out_dir.join("dataset.jsonl");
    std::fs::write(&dataset_path, &bytes).map_err(|e| DatagenError::io(&dataset_path, e))?;

    let manifest = DatagenManifest {
        format_version: DATAGEN_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        template_origin: if upstream.templates.is_empty() { String::new() } else { TEMPLATE_ORIGIN.to_string() },
        template_sha256: upstream.templates,
        text_client: upstream.text_client,
        image_client: image_client.id().to_string(),
        tracker: tracker.id().to_string(),
        images_per_text: config.images_per_text,
        split_ratios: config.split_ratios,
        max_failure_rate: config.max_failure_rate,
        generation: upstream.generation,
        counts,
        skips,
        dataset_sha256: hex(&Sha256::digest(&bytes)),
    };
    let manifest_path = out_dir.join("manifest.json");
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    std::fs::write(&manifest_path, json).map_err(|e| DatagenError::io(&manifest_path, e))?;
    log::info!(
        "wrote {} triads ({} skipped) to {}",
        manifest.counts.triads,
        manifest.counts.skipped,
        dataset_path.display()
    );
    Ok(BuildReport { triads, dataset_path, manifest_path, manifest })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub per_class: usize,
    pub classes: Vec<EmotionClass>,
    pub build: BuildConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { per_class: 10, classes: EmotionClass::ALL.to_vec(), build: BuildConfig::default() }
    }
}

/// The whole pipeline: descriptions per class, emotion labels, images, blendshapes.
pub fn run_pipeline(
    text_client: &dyn TextGenClient,
    image_client: &dyn ImageGenClient,
    tracker: &dyn BlendshapeTracker,
    templates: &PromptTemplates,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<BuildReport, DatagenError> {
    config.build.validate()?;
    if config.classes.is_empty() {
        return Err(DatagenError::Config("no emotion classes requested".into()));
    }
    let mut texts = Vec::new();
    let mut seen = HashSet::new();
    for &class in &config.classes {
        for text in generate_descriptions(text_client, templates, class, config.per_class, &config.build.retry)? {
            if seen.insert(text.clone()) {
                texts.push(text);
            } else {
                log::info!("dropping {text:?}: already generated for another class");
            }
        }
    }
    let labels = par_map(&texts, |t| extract_emotion_distribution(text_client, templates, t, &config.build.retry));
    let mut items = Vec::new();
    let mut skips = Vec::new();
    for (text, label) in texts.iter().zip(labels) {
        match label {
            Ok(x) => items.push(LabeledText::new(text.clone(), x.distribution)),
            Err(e) => {
                let id = triad_id(&LabeledText::new(text.clone(), EmotionDistribution::uniform()), 0);
                log::warn!("no emotion label for {text:?}: {e}");
                skips.push(SkipRecord { id, stage: "emotion".into(), reason: e.to_string() });
            }
        }
    }
    let upstream = Upstream {
        text_client: Some(text_client.id().to_string()),
        templates: templates.hashes(),
        generation: Some(serde_json::json!({
            "per_class": config.per_class,
            "classes": config.classes,
        })),
        texts: texts.len(),
        skips,
    };
    build_inner(&items, image_client, tracker, out_dir, &config.build, upstream)
}

const INTENSITY_WORDS: [&str; 3] = ["slight", "clear", "intense"];

/// Primitive emotion face prompts: each word at three intensities for two
/// presenters, labelled with the word's lexicon distribution.
pub fn primitive_face_items(lexicon: &EmotionLexicon, words: &[&str]) -> Result<Vec<LabeledText>, DatagenError> {
    let mut out = Vec::with_capacity(words.len() * 6);
    for &word in words {
        let emotion = lexicon.get(word).ok_or_else(|| DatagenError::Lookup(word.to_string()))?;
        for (level, adj) in (1u8..).zip(INTENSITY_WORDS) {
            for (presentation, person) in [(Presentation::A, "man"), (Presentation::B, "woman")] {
                out.push(LabeledText {
                    text: format!("A close-up photo of a {person} whose face shows {adj} {word}."),
                    emotion: *emotion,
                    intensity: Some(level),
                    presentation: Some(presentation),
                });
            }
        }
    }
    Ok(out)
}
