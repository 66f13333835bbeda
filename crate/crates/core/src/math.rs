//! Scalar primitives shared by the metric and the models.

use thiserror::Error;

use crate::blendshape::{BlendshapeVector, NUM_BLENDSHAPES};
use crate::emotion::{argmax, EmotionDistribution, NUM_EMOTIONS};

/// Default additive smoothing applied in KL.
pub const DEFAULT_KL_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VectorError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Kullback-Leibler divergence `KL(phi || psi)` in nats.
///
/// Both arguments are smoothed as `(x + eps) / (1 + 8 eps)`, so zeros in the
/// reference never produce infinities and `KL(p || p)` is exactly zero even
/// when `p` has empty classes. As `eps` goes to zero this is plain KL.
pub fn kl_divergence(phi: &EmotionDistribution, psi: &EmotionDistribution, eps: f64) -> f64 {
    let denom = 1.0 + NUM_EMOTIONS as f64 * eps;
    let mut kl = 0.0;
    for (&p, &q) in phi.values().iter().zip(psi.values()) {
        let p = (p + eps) / denom;
        if p > 0.0 {
            let q = (q + eps) / denom;
            kl += p * (p / q).ln();
        }
    }
    kl.max(0.0)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, VectorError> {
    if a.len() != b.len() {
        return Err(VectorError::DimensionMismatch { left: a.len(), right: b.len() });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(VectorError::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Same as [`cosine_similarity`] for single-precision embeddings, accumulated in f64.
pub fn cosine_similarity_f32(a: &[f32], b: &[f32]) -> Result<f64, VectorError> {
    if a.len() != b.len() {
        return Err(VectorError::DimensionMismatch { left: a.len(), right: b.len() });
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(VectorError::ZeroNorm);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// 1 at the argmax (lowest index on ties), 0 elsewhere.
pub fn one_hot(v: &[f64; NUM_EMOTIONS]) -> [f64; NUM_EMOTIONS] {
    let mut out = [0.0; NUM_EMOTIONS];
    out[argmax(v)] = 1.0;
    out
}

pub fn mse(a: &BlendshapeVector, b: &BlendshapeVector) -> f64 {
    let sum: f64 = a.weights().iter().zip(b.weights()).map(|(x, y)| (x - y) * (x - y)).sum();
    sum / NUM_BLENDSHAPES as f64
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(v: [f64; 8]) -> EmotionDistribution {
        EmotionDistribution::new(v).unwrap()
    }

    // Independent summation with the smoothing written out term by term.
    fn kl_oracle(phi: [f64; 8], psi: [f64; 8], eps: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..8 {
            let a = (phi[i] + eps) / (1.0 + 8.0 * eps);
            let b = (psi[i] + eps) / (1.0 + 8.0 * eps);
            if a > 0.0 {
                total += a * (a.ln() - b.ln());
            }
        }
        total
    }

    #[test]
    fn kl_of_sparse_distribution_with_itself_is_zero() {
        let p = dist([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(kl_divergence(&p, &p, DEFAULT_KL_EPS), 0.0);
    }

    #[test]
    fn kl_identity_is_zero() {
        let u = EmotionDistribution::uniform();
        assert!(kl_divergence(&u, &u, DEFAULT_KL_EPS) <= 1e-12);
    }

    #[test]
    fn kl_point_vs_uniform_is_ln8() {
        let phi = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let kl = kl_divergence(&dist(phi), &EmotionDistribution::uniform(), 1e-12);
        assert!((kl - 8f64.ln()).abs() < 1e-9);
        assert!((kl - kl_oracle(phi, [0.125; 8], 1e-12)).abs() < 1e-12);
        assert!((kl_oracle(phi, [0.125; 8], 0.0) - 8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_uniform_vs_point_is_large_but_finite() {
        let psi = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let kl = kl_divergence(&EmotionDistribution::uniform(), &dist(psi), 1e-6);
        let expected = kl_oracle([0.125; 8], psi, 1e-6);
        assert!(kl.is_finite());
        assert!(kl > 10.0);
        assert!((kl - expected).abs() < 1e-9, "{kl} vs {expected}");
        // 7/8 * ln(0.125 (1 + 8e-6) / 1e-6) + 1/8 * ln(0.125 (1 + 8e-6) / (1 + 1e-6))
        assert!((expected - 10.009_138_071_5).abs() < 1e-9, "{expected}");
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[3.0, -1.0, 2.0], &[3.0, -1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), Err(VectorError::ZeroNorm));
        assert!(matches!(cosine_similarity(&[1.0], &[1.0, 1.0]), Err(VectorError::DimensionMismatch { .. })));
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(&[0.1, 0.7, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0]), [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(one_hot(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(one_hot(&[0.125; 8]), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn mse_examples() {
        let z = BlendshapeVector::zeros();
        assert_eq!(mse(&z, &z), 0.0);
        let t = BlendshapeVector::splat(0.1).unwrap();
        assert!((mse(&z, &t) - 0.01).abs() < 1e-15);
    }

    /// Random distributions, often with empty classes.
    pub(crate) fn arb_dist() -> impl Strategy<Value = EmotionDistribution> {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 8)
            .prop_filter_map("zero mass", |v| EmotionDistribution::normalize(&v).ok())
    }

    fn arb_blend() -> impl Strategy<Value = BlendshapeVector> {
        prop::collection::vec(0.0f64..=1.0, NUM_BLENDSHAPES).prop_map(|v| BlendshapeVector::new(&v).unwrap())
    }

    proptest! {
        #[test]
        fn kl_self_is_near_zero(p in arb_dist()) {
            prop_assert!(kl_divergence(&p, &p, DEFAULT_KL_EPS) <= 1e-9);
        }

        #[test]
        fn kl_is_non_negative(p in arb_dist(), q in arb_dist()) {
            prop_assert!(kl_divergence(&p, &q, DEFAULT_KL_EPS) >= 0.0);
        }

        #[test]
        fn kl_matches_oracle(p in arb_dist(), q in arb_dist()) {
            let got = kl_divergence(&p, &q, DEFAULT_KL_EPS);
            let want = kl_oracle(*p.values(), *q.values(), DEFAULT_KL_EPS).max(0.0);
            prop_assert!((got - want).abs() <= 1e-9);
        }

        #[test]
        fn one_hot_has_single_unit_entry(v in prop::array::uniform8(-5.0f64..5.0)) {
            let o = one_hot(&v);
            prop_assert_eq!(o.iter().sum::<f64>(), 1.0);
            prop_assert_eq!(o.iter().filter(|&&x| x != 0.0).count(), 1);
        }

        #[test]
        fn cosine_is_scale_invariant(a in prop::collection::vec(-10.0f64..10.0, 1..32), c in 0.001f64..1000.0) {
            prop_assume!(l2_norm(&a) > 1e-6);
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            prop_assert!((cosine_similarity(&a, &scaled).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn mse_is_symmetric(a in arb_blend(), b in arb_blend()) {
            prop_assert_eq!(mse(&a, &b), mse(&b, &a));
        }

        #[test]
        fn mse_matches_summation_oracle(a in arb_blend(), b in arb_blend()) {
            let mut acc = 0.0;
            for i in 0..NUM_BLENDSHAPES {
                let d = a.weights()[i] - b.weights()[i];
                acc += d * d;
            }
            prop_assert!((mse(&a, &b) - acc / 52.0).abs() < 1e-12);
        }
    }
}
