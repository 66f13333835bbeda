//! Small synthetic corpora with a known structure.
//!
//! Every emotion class gets its own blendshape signature, so a model or a
//! metric that works must separate the classes. These sets drive the test
//! suites, the demo and offline dry runs of the pipeline.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blendshape::{BlendshapeVector, NUM_BLENDSHAPES};
use crate::dataset::{Split, TrainingExample, Triad};
use crate::embeddings::MockBackend;
use crate::emotion::{EmotionClass, EmotionDistribution, NUM_EMOTIONS};
use crate::renderer::{FaceRenderer, RenderError};

/// Channels driven by each class signature.
const CHANNELS_PER_CLASS: usize = 6;
const ACTIVE: f64 = 0.8;
const REST: f64 = 0.05;

/// Weight pattern that identifies `class`: six class-specific channels high, the rest low.
pub fn class_signature(class: EmotionClass) -> BlendshapeVector {
    let mut w = [REST; NUM_BLENDSHAPES];
    let start = 1 + class.index() * CHANNELS_PER_CLASS;
    for slot in &mut w[start..start + CHANNELS_PER_CLASS] {
        *slot = ACTIVE;
    }
    BlendshapeVector::new(&w).expect("signature in range")
}

/// A distribution peaked on `class` with the rest spread at random.
pub fn peaked_distribution<R: Rng>(class: EmotionClass, rng: &mut R) -> EmotionDistribution {
    let mut v = [0.0; NUM_EMOTIONS];
    for (i, slot) in v.iter_mut().enumerate() {
        *slot = if i == class.index() { 0.5 + rng.gen_range(0.0..0.3) } else { rng.gen_range(0.0..0.07) };
    }
    EmotionDistribution::normalize(&v).expect("positive mass")
}

const WORDS: [(&[&str], &[&str]); NUM_EMOTIONS] = [
    (
        &["joyful", "beaming", "cheerful", "delighted"],
        &["a wide smile", "raised cheeks", "crinkled eyes", "a bright grin"],
    ),
    (
        &["furious", "irritated", "hostile", "enraged"],
        &["a clenched jaw", "lowered brows", "flared nostrils", "pressed lips"],
    ),
    (
        &["astonished", "startled", "amazed", "stunned"],
        &["wide open eyes", "a dropped jaw", "lifted brows", "a rounded mouth"],
    ),
    (
        &["sorrowful", "gloomy", "tearful", "downcast"],
        &["drooping lips", "heavy eyelids", "a trembling chin", "inner brows raised"],
    ),
    (
        &["repulsed", "revolted", "sickened", "nauseated"],
        &["a wrinkled nose", "a raised upper lip", "squinted eyes", "a curled mouth"],
    ),
    (
        &["scornful", "smug", "dismissive", "sneering"],
        &["a one sided smirk", "a tilted gaze", "a half raised lip", "narrowed eyes"],
    ),
    (
        &["terrified", "anxious", "panicked", "frightened"],
        &["stretched lips", "tense brows", "staring eyes", "a gaping mouth"],
    ),
    (&["calm", "composed", "blank", "relaxed"], &["still features", "level brows", "a closed mouth", "a steady gaze"]),
];

const SUBJECTS: [&str; 4] = ["face", "person", "man", "woman"];

fn sentence<R: Rng>(class: EmotionClass, rng: &mut R) -> String {
    let (adjs, features) = WORDS[class.index()];
    let adj = adjs.choose(rng).expect("non-empty");
    let subject = SUBJECTS.choose(rng).expect("non-empty");
    let mut picked: Vec<&&str> = features.choose_multiple(rng, 2).collect();
    picked.sort();
    format!("A {adj} {subject} with {} and {}.", picked[0], picked[1])
}

const SETTINGS: [&str; 8] = [
    "",
    " at the window",
    " in the rain",
    " on a crowded train",
    " under a streetlight",
    " at the kitchen table",
    " in a quiet hallway",
    " beside an open door",
];

/// A one-sentence description in the style of the synthetic corpus, with a setting.
pub fn synthetic_description<R: Rng>(class: EmotionClass, rng: &mut R) -> String {
    let base = sentence(class, rng);
    let setting = SETTINGS.choose(rng).expect("non-empty");
    format!("{}{setting}.", base.trim_end_matches('.'))
}

const STEMS: [&str; NUM_EMOTIONS] = ["happ", "anger", "surpris", "sad", "disgust", "contempt", "fear", "neutral"];

/// The class whose vocabulary (or name) appears first in `text`, if any.
///
/// Only meant for texts built from the synthetic vocabulary.
pub fn guess_class(text: &str) -> Option<EmotionClass> {
    let lower = text.to_lowercase();
    let mut best: Option<(usize, EmotionClass)> = None;
    for class in EmotionClass::ALL {
        let (adjs, features) = WORDS[class.index()];
        let stem = STEMS[class.index()];
        for needle in adjs.iter().chain(features.iter()).copied().chain(std::iter::once(stem)) {
            if let Some(pos) = lower.find(needle) {
                if best.is_none_or(|(p, _)| pos < p) {
                    best = Some((pos, class));
                }
            }
        }
    }
    best.map(|(_, c)| c)
}

/// `per_class` triads for each class, all in `split`.
///
/// Texts are unique, blendshapes are the class signature plus small noise,
/// and emotion labels peak on the class.
pub fn synthetic_dataset(per_class: usize, split: Split, seed: u64) -> Vec<Triad> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(per_class * NUM_EMOTIONS);
    for class in EmotionClass::ALL {
        let signature = class_signature(class);
        for i in 0..per_class {
            let mut text = sentence(class, &mut rng);
            let mut attempt = 0;
            while !seen.insert(text.clone()) {
                attempt += 1;
                text = if attempt < 20 {
                    sentence(class, &mut rng)
                } else {
                    format!("{} Take {i}.", sentence(class, &mut rng))
                };
            }
            let weights: Vec<f64> =
                signature.weights().iter().map(|w| (w + rng.gen_range(-0.04..0.04)).clamp(0.0, 1.0)).collect();
            out.push(Triad {
                id: format!("{}-{i:04}", class.name()),
                text,
                image_path: None,
                blendshapes: BlendshapeVector::new(&weights).expect("clamped"),
                emotion: peaked_distribution(class, &mut rng),
                split,
                intensity: None,
                presentation: None,
            });
        }
    }
    out
}

/// One training example per class with exact class signatures.
pub fn planted_fixture() -> Vec<Triad> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    EmotionClass::ALL
        .iter()
        .map(|&class| Triad {
            id: format!("planted-{}", class.name()),
            text: sentence(class, &mut rng),
            image_path: None,
            blendshapes: class_signature(class),
            emotion: peaked_distribution(class, &mut rng),
            split: Split::Train,
            intensity: None,
            presentation: None,
        })
        .collect()
}

/// Renders each triad's blendshapes and plants the image on its text, so the
/// rendered face embeds exactly like the description.
pub fn plant_rendered<'a, I>(backend: &MockBackend, renderer: &dyn FaceRenderer, pairs: I) -> Result<(), RenderError>
where
    I: IntoIterator<Item = (&'a BlendshapeVector, &'a str)>,
{
    for (weights, text) in pairs {
        backend.plant(&renderer.render(weights)?, text);
    }
    Ok(())
}

/// Training examples with planted images attached, for the image-aware baselines.
pub fn planted_examples(
    triads: &[Triad],
    backend: &MockBackend,
    renderer: &dyn FaceRenderer,
) -> Result<Vec<TrainingExample>, RenderError> {
    triads
        .iter()
        .map(|t| {
            let image = renderer.render(&t.blendshapes)?;
            backend.plant(&image, &t.text);
            Ok(TrainingExample {
                text: t.text.clone(),
                blendshapes: t.blendshapes.clone(),
                emotion: Some(t.emotion),
                image: Some(image),
            })
        })
        .collect()
}
