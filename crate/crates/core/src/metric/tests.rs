use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::blendshape::BlendshapeVector;
use crate::dataset::Split;
use crate::embeddings::{MockBackend, TextEncoder};
use crate::emotion::EmotionClass;
use crate::math::tests::arb_dist;
use crate::math::DEFAULT_KL_EPS;
use crate::models::{ConstantModel, LookupModel};
use crate::renderer::PixelCodeRenderer;
use crate::synthetic::{plant_rendered, synthetic_dataset};

fn bank_from_rows(rows: Vec<Vec<f32>>) -> PromptBank {
    let prompts = (0..rows.len())
        .map(|i| BankPrompt { id: format!("p{i}"), text: format!("t{i}"), emotion: EmotionDistribution::uniform() })
        .collect();
    PromptBank { prompts, embeddings: rows, backend_name: "rows".into() }
}

fn argsort_oracle(query: &[f32], rows: &[Vec<f32>], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let dot: f64 = query.iter().zip(r).map(|(a, b)| *a as f64 * *b as f64).sum();
            let nq: f64 = query.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            let nr: f64 = r.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            ((dot / (nq * nr)).clamp(-1.0, 1.0), i)
        })
        .collect();
    // stable sort by descending similarity keeps lower indices first on ties
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Oracle model, planted mocks and a bank over a synthetic test split.
struct World {
    data: Vec<crate::dataset::Triad>,
    backend: MockBackend,
    renderer: PixelCodeRenderer,
}

impl World {
    fn new(per_class: usize) -> Self {
        let data = synthetic_dataset(per_class, Split::Test, 17);
        let backend = MockBackend::new(64);
        let renderer = PixelCodeRenderer::default();
        plant_rendered(&backend, &renderer, data.iter().map(|t| (&t.blendshapes, t.text.as_str()))).unwrap();
        Self { data, backend, renderer }
    }

    fn oracle(&self) -> LookupModel {
        LookupModel::from_pairs("oracle", self.data.iter().map(|t| (t.text.clone(), t.blendshapes.clone())))
    }

    /// Predicts the blendshapes of a triad from the next class.
    fn adversary(&self) -> LookupModel {
        let mut by_class: HashMap<EmotionClass, Vec<&crate::dataset::Triad>> = HashMap::new();
        for t in &self.data {
            by_class.entry(t.class()).or_default().push(t);
        }
        let pairs = self.data.iter().enumerate().map(|(i, t)| {
            let next = EmotionClass::from_index((t.class().index() + 1) % 8).unwrap();
            let pool = &by_class[&next];
            (t.text.clone(), pool[i % pool.len()].blendshapes.clone())
        });
        LookupModel::from_pairs("adversary", pairs)
    }
}

#[test]
fn bank_is_stratified_and_seeded() {
    let w = World::new(4);
    let bank = select_prompt_bank(&w.data, 16, 3, &w.backend).unwrap();
    let mut counts = [0; 8];
    for p in &bank.prompts {
        counts[p.emotion.dominant().index()] += 1;
    }
    assert_eq!(counts, [2; 8]);
    assert_eq!(bank, select_prompt_bank(&w.data, 16, 3, &w.backend).unwrap());
    assert_ne!(bank.prompts, select_prompt_bank(&w.data, 16, 4, &w.backend).unwrap().prompts);
    for (p, e) in bank.prompts.iter().zip(&bank.embeddings) {
        assert_eq!(e, &w.backend.embed_text(&p.text).unwrap());
    }
}

#[test]
fn empty_class_fails_stratification() {
    let w = World::new(2);
    let without_fear: Vec<_> = w.data.iter().filter(|t| t.class() != EmotionClass::Fear).cloned().collect();
    match select_prompt_bank(&without_fear, 8, 0, &w.backend) {
        Err(MetricError::Stratification { deficits }) => {
            assert_eq!(deficits, vec![("fear".to_string(), 0, 1)]);
        }
        other => panic!("expected stratification error, got {other:?}"),
    }
    let train_only = synthetic_dataset(3, Split::Train, 1);
    assert!(matches!(select_prompt_bank(&train_only, 8, 0, &w.backend), Err(MetricError::Stratification { .. })));
}

#[test]
fn retrieval_identity_and_full_ranking() {
    let w = World::new(2);
    let bank = select_prompt_bank(&w.data, 16, 0, &w.backend).unwrap();
    for j in 0..bank.len() {
        assert_eq!(retrieve_top_k(&bank.embeddings[j], &bank, 1).unwrap(), vec![j]);
    }
    let all = retrieve_top_k(&bank.embeddings[3], &bank, bank.len()).unwrap();
    assert_eq!(all, argsort_oracle(&bank.embeddings[3], &bank.embeddings, bank.len()));
    assert!(matches!(retrieve_top_k(&bank.embeddings[0], &bank, 17), Err(MetricError::Parameter(_))));
    assert!(retrieve_top_k(&bank.embeddings[0], &bank, 0).is_err());
}

#[test]
fn retrieval_ties_go_to_lower_index() {
    let bank = bank_from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]);
    assert_eq!(retrieve_top_k(&[1.0, 0.0], &bank, 2).unwrap(), vec![1, 2]);
    assert_eq!(retrieve_top_k(&[1.0, 0.0], &bank, 4).unwrap(), vec![1, 2, 3, 0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retrieval_matches_argsort(
        n in 1usize..120,
        d in 1usize..24,
        seed in any::<u64>(),
        kf in 0.0f64..1.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // coarse values make exact ties common
        let mut row = || -> Vec<f32> {
            loop {
                let r: Vec<f32> = (0..d).map(|_| rng.gen_range(-2i32..=2) as f32).collect();
                if r.iter().any(|x| *x != 0.0) { return r; }
            }
        };
        let rows: Vec<Vec<f32>> = (0..n).map(|_| row()).collect();
        let q = row();
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let bank = bank_from_rows(rows.clone());
        prop_assert_eq!(retrieve_top_k(&q, &bank, k).unwrap(), argsort_oracle(&q, &rows, k));
    }

    #[test]
    // KL is at most ln((1 + 8 eps) / eps), about 13.8 nats at the default eps
    fn score_is_bounded_and_monotone(a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let (sa, sb) = (sigmoid(a), sigmoid(b));
        prop_assert!((0.5..1.0).contains(&sa));
        if a + 1e-6 < b { prop_assert!(sa < sb); }
    }

    #[test]
    fn score_is_half_only_at_zero_kl(p in arb_dist(), q in arb_dist()) {
        let s = emo3d_score(&p, &[q], DEFAULT_KL_EPS).unwrap();
        prop_assert!((0.5..1.0).contains(&s.score));
        if s.kl > 1e-6 { prop_assert!(s.score > 0.5); }
        let same = emo3d_score(&p, &[p], DEFAULT_KL_EPS).unwrap();
        prop_assert!(same.kl <= 1e-9 && (same.score - 0.5).abs() <= 1e-9);
    }
}

#[test]
fn emo3d_closed_forms() {
    let p = EmotionDistribution::new([0.3, 0.2, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05]).unwrap();
    let s = emo3d_score(&p, &[p], 1e-6).unwrap();
    assert!(s.kl <= 1e-9);
    assert!((s.score - 0.5).abs() <= 1e-9);
    assert!((emo3d_score(&p, &[p, p, p], 1e-6).unwrap().kl - s.kl).abs() < 1e-15);

    let point = EmotionDistribution::point(EmotionClass::Happiness);
    let s = emo3d_score(&point, &[EmotionDistribution::uniform()], 1e-12).unwrap();
    assert!((s.kl - 8f64.ln()).abs() < 1e-6);
    assert!((s.score - 8.0 / 9.0).abs() < 1e-6);

    assert!(emo3d_score(&p, &[], 1e-6).is_err());
    assert!(emo3d_score(&p, &[p], 0.0).is_err());
}

#[test]
fn oracle_model_scores_exactly_one_half() {
    let w = World::new(8);
    let bank = select_prompt_bank(&w.data, 64, 5, &w.backend).unwrap();
    let r = evaluate_emo3d(&w.oracle(), &bank, &w.renderer, &w.backend, 1, 1e-6).unwrap();
    assert_eq!(r.per_prompt.len(), 64);
    assert!(r.per_prompt.iter().all(|p| p.kl <= 1e-9));
    assert!((r.mean_emo3d - 0.5).abs() <= 1e-9);
    assert_eq!((r.k, r.n, r.backend_name.as_str(), r.rig_name.as_str()), (1, 64, "mock-64", "pixel-code"));
}

#[test]
fn adversarial_model_scores_worse() {
    let w = World::new(8);
    let bank = select_prompt_bank(&w.data, 64, 5, &w.backend).unwrap();
    let oracle = evaluate_emo3d(&w.oracle(), &bank, &w.renderer, &w.backend, 1, 1e-6).unwrap();
    let adv = evaluate_emo3d(&w.adversary(), &bank, &w.renderer, &w.backend, 1, 1e-6).unwrap();
    assert!(adv.mean_emo3d > oracle.mean_emo3d);

    // with k = 1 each adversarial prompt retrieves the triad it copied; recompute that by hand
    let adversary = w.adversary();
    let index: HashMap<&str, &crate::dataset::Triad> = w.data.iter().map(|t| (t.text.as_str(), t)).collect();
    let by_weights = |b: &BlendshapeVector| w.data.iter().find(|t| &t.blendshapes == b).unwrap();
    let expected: Vec<f64> = bank
        .prompts
        .iter()
        .map(|p| {
            let copied = by_weights(&adversary.predict(&p.text).unwrap());
            let target = index[p.text.as_str()];
            sigmoid(crate::math::kl_divergence(&target.emotion, &copied.emotion, 1e-6))
        })
        .collect();
    assert!((adv.mean_emo3d - order_independent_mean(&expected)).abs() < 1e-12);
}

#[test]
fn mean_ignores_bank_order() {
    let w = World::new(4);
    let bank = select_prompt_bank(&w.data, 24, 2, &w.backend).unwrap();
    let model = w.adversary();
    let a = evaluate_emo3d(&model, &bank, &w.renderer, &w.backend, 3, 1e-6).unwrap();
    let mut order: Vec<usize> = (0..bank.len()).collect();
    order.reverse();
    order.rotate_left(5);
    let shuffled = PromptBank {
        prompts: order.iter().map(|&i| bank.prompts[i].clone()).collect(),
        embeddings: order.iter().map(|&i| bank.embeddings[i].clone()).collect(),
        backend_name: bank.backend_name.clone(),
    };
    let b = evaluate_emo3d(&model, &shuffled, &w.renderer, &w.backend, 3, 1e-6).unwrap();
    assert_eq!(a.mean_emo3d, b.mean_emo3d);
}

#[test]
fn failures_are_counted_then_fatal() {
    let w = World::new(4);
    let bank = select_prompt_bank(&w.data, 32, 2, &w.backend).unwrap();
    let missing: Vec<String> = bank.prompts.iter().take(3).map(|p| p.text.clone()).collect();
    let mut partial = LookupModel::new("partial");
    for t in &w.data {
        if !missing.contains(&t.text) {
            partial.insert(t.text.clone(), t.blendshapes.clone());
        }
    }
    let r = evaluate_emo3d(&partial, &bank, &w.renderer, &w.backend, 1, 1e-6).unwrap();
    assert_eq!(r.failures(), 3);
    assert_eq!(r.per_prompt.len(), 29);
    assert_eq!(r.to_row("partial").failures, 3);

    // 4 of 32 is above the 10% cap
    let gone: Vec<String> = bank.prompts.iter().take(4).map(|p| p.text.clone()).collect();
    let sparse = LookupModel::from_pairs(
        "sparse",
        w.data.iter().filter(|t| !gone.contains(&t.text)).map(|t| (t.text.clone(), t.blendshapes.clone())),
    );
    assert!(matches!(
        evaluate_emo3d(&sparse, &bank, &w.renderer, &w.backend, 1, 1e-6),
        Err(MetricError::Evaluation { failures: 4, total: 32 })
    ));
}

#[test]
fn backend_mismatch_is_rejected() {
    let w = World::new(2);
    let bank = select_prompt_bank(&w.data, 16, 0, &w.backend).unwrap();
    let other = MockBackend::named("other", 64);
    assert!(matches!(evaluate_emo3d(&w.oracle(), &bank, &w.renderer, &other, 1, 1e-6), Err(MetricError::Parameter(_))));
}

#[test]
fn mse_examples() {
    let w = World::new(1);
    assert_eq!(evaluate_mse(&w.oracle(), &w.data).unwrap(), 0.0);

    let mut tenth = w.data.clone();
    for t in &mut tenth {
        t.blendshapes = BlendshapeVector::splat(0.1).unwrap();
    }
    let zero = ConstantModel { name: "zero".into(), weights: BlendshapeVector::zeros() };
    assert!((evaluate_mse(&zero, &tenth).unwrap() - 0.01).abs() < 1e-15);

    let five: Vec<_> = w.data.iter().take(5).cloned().collect();
    let c = ConstantModel { name: "c".into(), weights: BlendshapeVector::splat(0.3).unwrap() };
    let mut oracle = 0.0;
    for t in &five {
        let mut s = 0.0;
        for w in t.blendshapes.weights() {
            s += (0.3 - w) * (0.3 - w);
        }
        oracle += s / 52.0;
    }
    oracle /= 5.0;
    assert!((evaluate_mse(&c, &five).unwrap() - oracle).abs() < 1e-12);
    assert!(matches!(evaluate_mse(&c, &[]), Err(MetricError::Parameter(_))));
}

#[test]
fn bootstrap_gap_and_error() {
    let a = vec![0.5; 40];
    let b: Vec<f64> = (0..40).map(|i| 0.6 + 0.01 * (i % 5) as f64).collect();
    let (gap, se) = paired_bootstrap(&a, &b, 500, 1).unwrap();
    assert!((gap - 0.12).abs() < 1e-12);
    assert!(se > 0.0 && se < 0.01);
    assert!(paired_bootstrap(&a, &b[..3], 10, 1).is_err());
}
