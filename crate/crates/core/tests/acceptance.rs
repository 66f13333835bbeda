//! End-to-end acceptance checks. Each test prints one PASS/FAIL line
//! (visible with `--nocapture`) and fails if its check does not hold.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use emo3d::analysis::{class_counts, compute_stats, tokenize};
use emo3d::datagen::{
    run_pipeline, BuildConfig, PipelineConfig, PixelCodeTracker, PromptTemplates, RetryPolicy, SyntheticImageClient,
    SyntheticTextClient,
};
use emo3d::dataset::TrainingExample;
use emo3d::embeddings::{MockBackend, MockLanguageModel, LM_DIM};
use emo3d::math::DEFAULT_KL_EPS;
use emo3d::metric::{
    emo3d_score, evaluate_emo3d, evaluate_mse, paired_bootstrap, rank_rows, retrieve_top_k, select_prompt_bank,
    BankPrompt, MetricResult, PromptBank, ReportRow, DEFAULT_K,
};
use emo3d::models::nn::check_gradient;
use emo3d::models::{
    train_blendshape_autoencoder, train_clip_regressor, train_emotion_xlm, train_text_regressor, AutoencoderBatch,
    BlendshapeAutoencoder, EmotionXlm, FegModel, LookupModel, ModelKind, SharedEncoder, TrainConfig,
    REGRESSOR_INPUT_DIM,
};
use emo3d::renderer::{FaceRig, PixelCodeRenderer, RenderConfig};
use emo3d::synthetic::{plant_rendered, planted_examples, planted_fixture, synthetic_dataset};
use emo3d::{BlendshapeVector, EmotionClass, EmotionDistribution, Split, Triad, NUM_BLENDSHAPES, NUM_EMOTIONS};

type Outcome = Result<String, String>;

// Written to the raw stderr handle so the verdicts show up without --nocapture.
fn report(name: &str, outcome: Outcome) {
    let line = match &outcome {
        Ok(detail) => format!("PASS  {name}: {detail}\n"),
        Err(why) => format!("FAIL  {name}: {why}\n"),
    };
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    if let Err(why) = outcome {
        panic!("{name}: {why}");
    }
}

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

/// Test-split synthetic data with every rendered face planted on its description.
struct World {
    data: Vec<Triad>,
    backend: MockBackend,
    renderer: PixelCodeRenderer,
}

impl World {
    fn new(per_class: usize, seed: u64) -> Self {
        let data = synthetic_dataset(per_class, Split::Test, seed);
        let backend = MockBackend::new(64);
        let renderer = PixelCodeRenderer::default();
        plant_rendered(&backend, &renderer, data.iter().map(|t| (&t.blendshapes, t.text.as_str()))).unwrap();
        Self { data, backend, renderer }
    }

    fn oracle(&self) -> LookupModel {
        LookupModel::from_pairs("oracle", self.data.iter().map(|t| (t.text.clone(), t.blendshapes.clone())))
    }

    fn evaluate(&self, model: &dyn FegModel, bank: &PromptBank, k: usize) -> Result<MetricResult, String> {
        evaluate_emo3d(model, bank, &self.renderer, &self.backend, k, DEFAULT_KL_EPS).map_err(|e| e.to_string())
    }
}

#[test]
fn oracle_model_scores_exactly_one_half() {
    report(
        "metric identity",
        (|| {
            let start = Instant::now();
            let world = World::new(8, 17);
            let bank = select_prompt_bank(&world.data, 64, 5, &world.backend).map_err(|e| e.to_string())?;
            ensure(bank.len() == 64, || format!("bank has {} prompts", bank.len()))?;
            let result = world.evaluate(&world.oracle(), &bank, 1)?;
            let worst = result.per_prompt.iter().map(|p| p.kl).fold(0.0, f64::max);
            ensure(result.per_prompt.len() == 64, || format!("{} prompts scored", result.per_prompt.len()))?;
            ensure(worst <= 1e-9, || format!("largest per-prompt KL {worst:e}"))?;
            ensure((result.mean_emo3d - 0.5).abs() <= 1e-9, || format!("mean Emo3D {}", result.mean_emo3d))?;
            let elapsed = start.elapsed();
            within(elapsed, Duration::from_secs(10))?;
            Ok(format!("max KL {worst:.1e}, mean Emo3D {:.12}, {elapsed:.2?}", result.mean_emo3d))
        })(),
    );
}

#[test]
fn point_mass_against_uniform_has_closed_form_kl() {
    report(
        "closed-form KL",
        (|| {
            let phi = EmotionDistribution::point(EmotionClass::Happiness);
            let psi = EmotionDistribution::uniform();
            let got = emo3d_score(&phi, &[psi], 1e-12).map_err(|e| e.to_string())?;
            // Direct summation over the non-zero entries of phi.
            let summed: f64 =
                phi.values().iter().zip(psi.values()).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * (p / q).ln()).sum();
            let ln8 = 8f64.ln();
            ensure((summed - ln8).abs() < 1e-12, || format!("summation oracle gave {summed}"))?;
            ensure((got.kl - summed).abs() <= 1e-6, || format!("kl {} vs {summed}", got.kl))?;
            ensure((got.score - 8.0 / 9.0).abs() <= 1e-6, || format!("score {} vs {}", got.score, 8.0 / 9.0))?;
            Ok(format!("kl {:.9} (ln 8 = {ln8:.9}), score {:.9}", got.kl, got.score))
        })(),
    );
}

fn argsort_oracle(query: &[f32], rows: &[Vec<f32>], k: usize) -> Vec<usize> {
    let norm = |v: &[f32]| v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    let nq = norm(query);
    let mut all: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let dot: f64 = query.iter().zip(r).map(|(a, b)| *a as f64 * *b as f64).sum();
            ((dot / (nq * norm(r))).clamp(-1.0, 1.0), i)
        })
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

#[test]
fn retrieval_agrees_with_exhaustive_argsort() {
    report(
        "retrieval oracle equivalence",
        (|| {
            let mut rng = ChaCha8Rng::seed_from_u64(200);
            let mut compared = 0;
            for instance in 0..200 {
                let n = rng.gen_range(1..=500);
                let d = rng.gen_range(1..=64);
                let mut rows: Vec<Vec<f32>> =
                    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect();
                // Every fourth instance copies rows to force exact ties.
                if instance % 4 == 0 && n > 1 {
                    for _ in 0..n / 4 {
                        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                        rows[b] = rows[a].clone();
                    }
                }
                let query: Vec<f32> = if rng.gen_bool(0.5) {
                    rows[rng.gen_range(0..n)].clone()
                } else {
                    (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
                };
                let k = rng.gen_range(1..=n);
                let prompts = (0..n)
                    .map(|i| BankPrompt {
                        id: format!("p{i}"),
                        text: format!("t{i}"),
                        emotion: EmotionDistribution::uniform(),
                    })
                    .collect();
                let bank = PromptBank { prompts, embeddings: rows, backend_name: "random".into() };
                let got = retrieve_top_k(&query, &bank, k).map_err(|e| e.to_string())?;
                let want = argsort_oracle(&query, &bank.embeddings, k);
                ensure(got == want, || format!("instance {instance} (n {n}, d {d}, k {k}) disagrees"))?;
                compared += k;
            }
            Ok(format!("200 instances, {compared} ranked indices identical"))
        })(),
    );
}

/// Maps every description to a face from another class, chosen by a seeded derangement.
fn class_shuffled_adversary(data: &[Triad], seed: u64) -> LookupModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..NUM_EMOTIONS).collect();
    while perm.iter().enumerate().any(|(i, &p)| i == p) {
        perm.shuffle(&mut rng);
    }
    let mut pools: Vec<Vec<&Triad>> = vec![Vec::new(); NUM_EMOTIONS];
    for t in data {
        pools[t.class().index()].push(t);
    }
    LookupModel::from_pairs(
        "adversary",
        data.iter().map(|t| {
            let pool = &pools[perm[t.class().index()]];
            (t.text.clone(), pool[rng.gen_range(0..pool.len())].blendshapes.clone())
        }),
    )
}

#[test]
fn oracle_beats_class_shuffled_adversary() {
    report(
        "directional metric validity",
        (|| {
            let start = Instant::now();
            let world = World::new(10, 23);
            let bank = select_prompt_bank(&world.data, 50, 9, &world.backend).map_err(|e| e.to_string())?;
            let oracle = world.evaluate(&world.oracle(), &bank, DEFAULT_K)?;
            let adversary = world.evaluate(&class_shuffled_adversary(&world.data, 4), &bank, DEFAULT_K)?;
            let a: Vec<f64> = oracle.per_prompt.iter().map(|p| p.emo3d).collect();
            let b: Vec<f64> = adversary.per_prompt.iter().map(|p| p.emo3d).collect();
            ensure(a.len() == 50 && b.len() == 50, || "not every prompt was scored".into())?;
            let (gap, se) = paired_bootstrap(&a, &b, 2000, 31).map_err(|e| e.to_string())?;
            ensure(oracle.mean_emo3d < adversary.mean_emo3d, || {
                format!("oracle {} not below adversary {}", oracle.mean_emo3d, adversary.mean_emo3d)
            })?;
            ensure(gap > 3.0 * se, || format!("gap {gap} within 3 standard errors ({se})"))?;
            let elapsed = start.elapsed();
            within(elapsed, Duration::from_secs(60))?;
            Ok(format!(
                "oracle {:.4} vs adversary {:.4}, gap {gap:.4} = {:.1} SE, {elapsed:.2?}",
                oracle.mean_emo3d,
                adversary.mean_emo3d,
                gap / se
            ))
        })(),
    );
}

fn overfit_config() -> TrainConfig {
    TrainConfig { epochs: 500, batch_size: 8, learning_rate: 1e-3, seed: 7, ..TrainConfig::default() }
}

fn text_examples(triads: &[Triad]) -> Vec<TrainingExample> {
    triads
        .iter()
        .map(|t| TrainingExample {
            text: t.text.clone(),
            blendshapes: t.blendshapes.clone(),
            emotion: Some(t.emotion),
            image: None,
        })
        .collect()
}

fn predictions(model: &dyn FegModel, triads: &[Triad]) -> Result<Vec<BlendshapeVector>, String> {
    triads.iter().map(|t| model.predict(&t.text).map_err(|e| e.to_string())).collect()
}

/// Trains twice, then checks train MSE and that both runs predict identically.
fn overfit<F>(name: &str, train: F) -> Outcome
where
    F: Fn() -> Result<Box<dyn FegModel>, String>,
{
    let fixture = planted_fixture();
    ensure(fixture.len() == 8, || format!("fixture has {} samples", fixture.len()))?;
    let start = Instant::now();
    let first = train()?;
    let per_model = start.elapsed();
    let second = train()?;
    let mse = evaluate_mse(first.as_ref(), &fixture).map_err(|e| e.to_string())?;
    ensure(mse < 1e-3, || format!("{name}: train MSE {mse:e}"))?;
    ensure(predictions(first.as_ref(), &fixture)? == predictions(second.as_ref(), &fixture)?, || {
        format!("{name}: two runs with the same seed disagree")
    })?;
    within(per_model, Duration::from_secs(120))?;
    Ok(format!("{name} train MSE {mse:.2e}, deterministic, {per_model:.2?} per run"))
}

#[test]
fn bert_regressor_overfits_planted_fixture() {
    report(
        "overfit bert_mlp",
        overfit("bert_mlp", || {
            let encoder: SharedEncoder = Arc::new(MockLanguageModel::new("bert-mock", LM_DIM));
            let (m, _) = train_text_regressor(
                ModelKind::BertMlp,
                encoder,
                &text_examples(&planted_fixture()),
                &overfit_config(),
            )
            .map_err(|e| e.to_string())?;
            Ok(Box::new(m))
        }),
    );
}

#[test]
fn emotion_xlm_overfits_planted_fixture() {
    report(
        "overfit emotion_xlm",
        overfit("emotion_xlm", || {
            let encoder: SharedEncoder = Arc::new(MockLanguageModel::new("xlm-mock", LM_DIM));
            let (m, _) = train_emotion_xlm(encoder, &text_examples(&planted_fixture()), &overfit_config())
                .map_err(|e| e.to_string())?;
            Ok(Box::new(m))
        }),
    );
}

#[test]
fn clip_regressor_overfits_planted_fixture() {
    report(
        "overfit clip_mlp",
        overfit("clip_mlp", || {
            let backend = Arc::new(MockBackend::new(64));
            let examples = planted_examples(&planted_fixture(), &backend, &PixelCodeRenderer::default())
                .map_err(|e| e.to_string())?;
            let (m, _) = train_clip_regressor(backend, &examples, &overfit_config()).map_err(|e| e.to_string())?;
            Ok(Box::new(m))
        }),
    );
}

#[test]
fn autoencoder_overfits_planted_fixture() {
    report(
        "overfit autoencoder_clip",
        overfit("autoencoder_clip", || {
            let backend = Arc::new(MockBackend::new(64));
            let examples = planted_examples(&planted_fixture(), &backend, &PixelCodeRenderer::default())
                .map_err(|e| e.to_string())?;
            let (m, _) =
                train_blendshape_autoencoder(backend, &examples, &overfit_config()).map_err(|e| e.to_string())?;
            Ok(Box::new(m))
        }),
    );
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(lo..hi))
}

fn distribution_rows(rng: &mut ChaCha8Rng, rows: usize) -> Array2<f64> {
    let mut m = random_rows(rng, rows, NUM_EMOTIONS, 0.01, 1.0);
    for mut r in m.rows_mut() {
        let s = r.sum();
        r /= s;
    }
    m
}

#[test]
fn analytic_gradients_match_finite_differences() {
    report(
        "gradient correctness",
        (|| {
            let mut rng = ChaCha8Rng::seed_from_u64(61);
            let config = TrainConfig { hidden: vec![8, 8], seed: 3, ..TrainConfig::default() };
            let mut worst: f64 = 0.0;

            let mut xlm =
                EmotionXlm::new(Arc::new(MockLanguageModel::new("tiny", 16)), &config).map_err(|e| e.to_string())?;
            let b = random_rows(&mut rng, 5, 16, -1.0, 1.0);
            let labels = distribution_rows(&mut rng, 5);
            let targets = random_rows(&mut rng, 5, NUM_BLENDSHAPES, 0.0, 1.0);
            for teacher in [true, false] {
                let (_, grad) = xlm.loss_and_grad(&b, &labels, &targets, teacher, 0.7, 1.3);
                let base = xlm.params();
                worst = worst.max(
                    check_gradient(&base, &grad.flatten(), 20, 5, |p| {
                        xlm.set_params(p);
                        xlm.loss_and_grad(&b, &labels, &targets, teacher, 0.7, 1.3).0.total
                    })
                    .map_err(|e| format!("combined loss (teacher forced: {teacher}): {e}"))?,
                );
            }

            let d = 6;
            let l = random_rows(&mut rng, 5, NUM_BLENDSHAPES, 0.0, 1.0);
            let text = random_rows(&mut rng, 5, d, -1.0, 1.0);
            let image = random_rows(&mut rng, 5, d, -1.0, 1.0);
            let noise = random_rows(&mut rng, 5, d, -1.0, 1.0);
            let has_image = [true, false, true, true, false];
            for variational in [false, true] {
                let cfg =
                    TrainConfig { variational, prior_weight: if variational { 0.1 } else { 0.0 }, ..config.clone() };
                let mut ae =
                    BlendshapeAutoencoder::new(Arc::new(MockBackend::new(d)), &cfg).map_err(|e| e.to_string())?;
                let batch = AutoencoderBatch {
                    blendshapes: &l,
                    text: &text,
                    image: &image,
                    has_image: &has_image,
                    noise: Some(&noise),
                };
                let (_, grad) = ae.loss_and_grad(&batch);
                let base = ae.params();
                worst = worst.max(
                    check_gradient(&base, &grad.flatten(), 20, 9, |p| {
                        ae.set_params(p);
                        ae.loss_and_grad(&batch).0.total
                    })
                    .map_err(|e| format!("autoencoder loss (variational: {variational}): {e}"))?,
                );
            }
            Ok(format!("4 checks x 20 probes, worst relative error {worst:.2e}"))
        })(),
    );
}

#[test]
fn emotion_xlm_contracts_hold() {
    report(
        "emotion-xlm contracts",
        (|| {
            let encoder: SharedEncoder = Arc::new(MockLanguageModel::new("xlm-mock", LM_DIM));
            let config =
                TrainConfig { epochs: 125, batch_size: 1, hidden: vec![8], seed: 13, ..TrainConfig::default() };
            let model = EmotionXlm::new(encoder.clone(), &config).map_err(|e| e.to_string())?;
            ensure(REGRESSOR_INPUT_DIM == 784 && model.regressor_input_dim() == 784, || {
                format!("regressor input {} / {}", REGRESSOR_INPUT_DIM, model.regressor_input_dim())
            })?;
            let (_, log) =
                train_emotion_xlm(encoder, &text_examples(&planted_fixture()), &config).map_err(|e| e.to_string())?;
            ensure(log.batches == 1000, || format!("{} batches", log.batches))?;
            ensure(log.teacher_forced_batches + log.extractor_batches == log.batches, || {
                "batch counts do not add up".into()
            })?;
            let ratio = log.teacher_forced_batches as f64 / log.batches as f64;
            ensure((0.45..=0.55).contains(&ratio), || format!("teacher forcing used on {ratio} of batches"))?;
            Ok(format!("input dim 784, ground truth fed on {ratio:.3} of {} batches", log.batches))
        })(),
    );
}

#[test]
fn clip_regressor_trains_on_texts_plus_images() {
    report(
        "clip-regressor doubling",
        (|| {
            let backend = Arc::new(MockBackend::new(32));
            let full = planted_examples(&planted_fixture(), &backend, &PixelCodeRenderer::default())
                .map_err(|e| e.to_string())?;
            let mut partial = full.clone();
            for i in [1, 4, 6] {
                partial[i].image = None;
            }
            let text_only: Vec<TrainingExample> =
                full.iter().cloned().map(|e| TrainingExample { image: None, ..e }).collect();
            let config = TrainConfig { epochs: 1, hidden: vec![8], ..TrainConfig::default() };
            let mut counts = Vec::new();
            for examples in [&full, &partial, &text_only] {
                let images = examples.iter().filter(|e| e.image.is_some()).count();
                let (_, log) = train_clip_regressor(backend.clone(), examples, &config).map_err(|e| e.to_string())?;
                ensure(log.pair_count == examples.len() + images, || {
                    format!("{} pairs from {} texts and {images} images", log.pair_count, examples.len())
                })?;
                counts.push(log.pair_count);
            }
            Ok(format!("pair counts {counts:?} for 8 texts with 8, 5 and 0 images"))
        })(),
    );
}

#[test]
fn rig_deformation_is_linear() {
    report(
        "blendshape linearity",
        (|| {
            let rig = FaceRig::canonical();
            let zero = rig.apply_blendshapes(&BlendshapeVector::zeros());
            ensure(zero == rig.neutral, || "zero weights moved the neutral mesh".into())?;
            let mut rng = ChaCha8Rng::seed_from_u64(100);
            let mut worst: f64 = 0.0;
            let offset = |mesh: &[[f64; 3]]| -> Vec<f64> {
                mesh.iter().zip(&rig.neutral).flat_map(|(v, n)| (0..3).map(move |i| v[i] - n[i])).collect()
            };
            for _ in 0..100 {
                let a: Vec<f64> = (0..NUM_BLENDSHAPES).map(|_| rng.gen_range(0.0..0.5)).collect();
                let b: Vec<f64> = (0..NUM_BLENDSHAPES).map(|_| rng.gen_range(0.0..0.5)).collect();
                let alpha: f64 = rng.gen_range(0.0..1.0);
                let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                let scaled: Vec<f64> = a.iter().map(|x| alpha * x).collect();
                let mesh = |w: &[f64]| offset(&rig.apply_blendshapes(&BlendshapeVector::new(w).expect("in range")));
                let (da, db, dsum, dscaled) = (mesh(&a), mesh(&b), mesh(&sum), mesh(&scaled));
                for i in 0..da.len() {
                    worst = worst.max((dsum[i] - da[i] - db[i]).abs());
                    worst = worst.max((dscaled[i] - alpha * da[i]).abs());
                }
            }
            ensure(worst <= 1e-9, || format!("largest deviation from linearity {worst:e}"))?;
            Ok(format!("100 pairs, largest deviation {worst:.1e}; zero weights give the neutral mesh exactly"))
        })(),
    );
}

#[test]
fn report_ranks_published_rows() {
    report(
        "report ordering",
        (|| {
            let row = |model: &str, mse: f64, emo3d: f64| ReportRow {
                model: model.into(),
                mse: Some(mse),
                emo3d,
                k: DEFAULT_K,
                n: 400,
                backend: "published".into(),
                rig: "published".into(),
                failures: 0,
            };
            let rows = vec![
                row("BERT", 0.03, 0.796),
                row("XLMRoBERTa", 0.04, 0.789),
                row("Autoencoder CLIP", 0.002, 0.776),
                row("Emotion-XLM", 0.035, 0.756),
                row("CLIP", 0.014, 0.737),
            ];
            let ranked = rank_rows(&rows).map_err(|e| e.to_string())?;
            let order: Vec<&str> = ranked.iter().map(|r| r.model.as_str()).collect();
            ensure(order.first() == Some(&"CLIP") && order.last() == Some(&"BERT"), || format!("ranked {order:?}"))?;
            Ok(format!("ranked {}", order.join(" < ")))
        })(),
    );
}

fn replay_once(out: &std::path::Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let text = SyntheticTextClient::new(41);
    let image = SyntheticImageClient::new(41, RenderConfig { width: 64, height: 64 }).map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        per_class: 3,
        classes: EmotionClass::ALL.to_vec(),
        build: BuildConfig { images_per_text: 2, retry: RetryPolicy::immediate(3), ..BuildConfig::default() },
    };
    run_pipeline(&text, &image, &PixelCodeTracker, &PromptTemplates::default(), &config, out)
        .map_err(|e| e.to_string())?;
    let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| format!("{f}: {e}"));
    Ok((read("dataset.jsonl")?, read("manifest.json")?))
}

#[test]
fn datagen_replay_is_byte_identical() {
    report(
        "pipeline replay",
        (|| {
            let (a, b) =
                (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
            let (data_a, manifest_a) = replay_once(a.path())?;
            let (data_b, manifest_b) = replay_once(b.path())?;
            ensure(!data_a.is_empty(), || "empty dataset".into())?;
            ensure(data_a == data_b, || "dataset.jsonl differs between runs".into())?;
            ensure(manifest_a == manifest_b, || "manifest.json differs between runs".into())?;
            let lines = data_a.iter().filter(|&&c| c == b'\n').count();
            Ok(format!("{lines} triads, dataset and manifest byte-identical"))
        })(),
    );
}

fn stats_fixture() -> Vec<Triad> {
    let texts = [
        (EmotionClass::Happiness, "A bright smile lights up her face."),
        (EmotionClass::Happiness, "Joyful eyes crinkle. The cheeks rise high!"),
        (EmotionClass::Happiness, "He grins, wide and warm; pure delight."),
        (EmotionClass::Anger, "Brows pulled down hard, jaw clenched tight."),
        (EmotionClass::Anger, "Furious glare. Lips pressed thin. Nostrils flare!"),
        (EmotionClass::Anger, "\"Rage\" burns in the narrowed eyes..."),
        (EmotionClass::Surprise, "Eyebrows shoot up and the mouth falls open."),
        (EmotionClass::Surprise, "Wide eyes! A sudden gasp?"),
        (EmotionClass::Sadness, "Downturned lips and heavy, tired eyes."),
        (EmotionClass::Sadness, "Tears well up. The gaze drops to the floor."),
        (EmotionClass::Sadness, "a quiet, sorrowful look"),
        (EmotionClass::Disgust, "The nose wrinkles; the upper lip curls."),
        (EmotionClass::Disgust, "Revulsion twists the face. Eyes Squint."),
        (EmotionClass::Contempt, "One corner of the mouth lifts in a sneer."),
        (EmotionClass::Contempt, "A cold, dismissive half-smile."),
        (EmotionClass::Fear, "Eyes wide, brows raised and drawn together."),
        (EmotionClass::Fear, "Lips stretch back in terror! Breath held."),
        (EmotionClass::Fear, "Pale face, trembling chin (frozen)."),
        (EmotionClass::Neutral, "A calm, relaxed face with a steady gaze."),
        (EmotionClass::Neutral, "Expressionless. Still. Calm calm CALM."),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    texts
        .iter()
        .enumerate()
        .map(|(i, &(class, text))| {
            let mut raw = [0.0; NUM_EMOTIONS];
            for v in raw.iter_mut() {
                *v = rng.gen_range(0.0..0.5);
            }
            raw[class.index()] = 2.0;
            Triad {
                id: format!("fx-{i:02}"),
                text: text.to_string(),
                image_path: None,
                blendshapes: BlendshapeVector::zeros(),
                emotion: EmotionDistribution::normalize(&raw).expect("positive mass"),
                split: Split::Train,
                intensity: None,
                presentation: None,
            }
        })
        .collect()
}

/// Character-level recount of the table columns, independent of the library tokenizer.
struct BruteCounts {
    triads: usize,
    words: usize,
    unique: usize,
    chars: usize,
    sentences: usize,
}

fn brute_counts(texts: &[&str]) -> BruteCounts {
    let edge = |c: char| c.is_ascii_punctuation();
    let mut out = BruteCounts { triads: texts.len(), words: 0, unique: 0, chars: 0, sentences: 0 };
    let mut seen: Vec<String> = Vec::new();
    for text in texts {
        let mut sentence_has_word = false;
        let mut token = String::new();
        for c in text.chars().chain(std::iter::once(' ')) {
            if matches!(c, '.' | '!' | '?') {
                if sentence_has_word {
                    out.sentences += 1;
                }
                sentence_has_word = false;
            } else if !edge(c) && !c.is_whitespace() {
                sentence_has_word = true;
            }
            if c.is_whitespace() {
                let mut chars: Vec<char> = token.chars().collect();
                while chars.first().is_some_and(|&ch| edge(ch)) {
                    chars.remove(0);
                }
                while chars.last().is_some_and(|&ch| edge(ch)) {
                    chars.pop();
                }
                if !chars.is_empty() {
                    out.words += 1;
                    out.chars += chars.len();
                    let lower: String = chars.iter().collect::<String>().to_lowercase();
                    if !seen.contains(&lower) {
                        seen.push(lower);
                    }
                }
                token.clear();
            } else {
                token.push(c);
            }
        }
        if sentence_has_word {
            out.sentences += 1;
        }
    }
    out.unique = seen.len();
    out
}

#[test]
fn corpus_statistics_match_brute_force() {
    report(
        "stats oracle",
        (|| {
            let fixture = stats_fixture();
            let stats = compute_stats(&fixture).map_err(|e| e.to_string())?;
            let counts = class_counts(&fixture);
            let assigned: usize = counts.values().sum();
            ensure(assigned == fixture.len() && stats.num_triads == fixture.len(), || {
                format!("{assigned} triads assigned out of {}", fixture.len())
            })?;
            for class in EmotionClass::ALL {
                let members: Vec<&Triad> = fixture.iter().filter(|t| t.emotion.dominant() == class).collect();
                let texts: Vec<&str> = members.iter().map(|t| t.text.as_str()).collect();
                let want = brute_counts(&texts);
                let got = stats.class(class);
                let name = class.name();
                ensure(
                    counts.get(&class).copied().unwrap_or(0) == want.triads && got.num_triads == want.triads,
                    || format!("{name}: {} triads, expected {}", got.num_triads, want.triads),
                )?;
                ensure(got.num_words == want.words, || {
                    format!("{name}: {} words, expected {}", got.num_words, want.words)
                })?;
                ensure(got.num_unique_words == want.unique, || {
                    format!("{name}: {} unique words, expected {}", got.num_unique_words, want.unique)
                })?;
                let word_len = want.chars as f64 / want.words as f64;
                ensure(got.avg_word_len == word_len, || {
                    format!("{name}: word length {} vs {word_len}", got.avg_word_len)
                })?;
                let sentence_len = want.words as f64 / want.sentences as f64;
                ensure(got.avg_sentence_len == sentence_len, || {
                    format!("{name}: sentence length {} vs {sentence_len}", got.avg_sentence_len)
                })?;
                for i in 0..NUM_EMOTIONS {
                    let mean = members.iter().map(|t| t.emotion.values()[i]).sum::<f64>() / members.len() as f64;
                    ensure((got.emotion_mean[i] - mean).abs() <= 1e-12, || format!("{name}: emotion mean {i}"))?;
                }
                // Cross-check the tokenizer itself against the brute-force word count.
                let lib_words: usize = texts.iter().map(|t| tokenize(t).len()).sum();
                ensure(lib_words == want.words, || format!("{name}: tokenizer found {lib_words} words"))?;
            }
            Ok("20 triads over 8 classes, all columns identical".to_string())
        })(),
    );
}
