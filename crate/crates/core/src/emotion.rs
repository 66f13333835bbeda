//! Emotion classes and eight-way emotion distributions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of emotion classes.
pub const NUM_EMOTIONS: usize = 8;

/// Entries this far below zero are treated as rounding noise and clamped.
pub const NEGATIVE_TOLERANCE: f64 = 1e-6;

/// Allowed deviation of a stored distribution's mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("expected {expected} values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("entry {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("entry {index} is negative ({value})")]
    NegativeMass { index: usize, value: f64 },
    #[error("distribution has zero total mass")]
    ZeroMass,
    #[error("distribution sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("unknown emotion class {0:?}")]
    UnknownClass(String),
}

/// One of the eight emotion categories, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmotionClass {
    Happiness,
    Anger,
    Surprise,
    Sadness,
    Disgust,
    Contempt,
    Fear,
    Neutral,
}

impl EmotionClass {
    pub const ALL: [EmotionClass; NUM_EMOTIONS] = [
        EmotionClass::Happiness,
        EmotionClass::Anger,
        EmotionClass::Surprise,
        EmotionClass::Sadness,
        EmotionClass::Disgust,
        EmotionClass::Contempt,
        EmotionClass::Fear,
        EmotionClass::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionClass::Happiness => "happiness",
            EmotionClass::Anger => "anger",
            EmotionClass::Surprise => "surprise",
            EmotionClass::Sadness => "sadness",
            EmotionClass::Disgust => "disgust",
            EmotionClass::Contempt => "contempt",
            EmotionClass::Fear => "fear",
            EmotionClass::Neutral => "neutral",
        }
    }
}

impl fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionClass {
    type Err = DistributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == lower)
            .ok_or_else(|| DistributionError::UnknownClass(s.to_string()))
    }
}

impl Serialize for EmotionClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EmotionClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A probability vector over the eight emotion classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionDistribution([f64; NUM_EMOTIONS]);

impl EmotionDistribution {
    /// Validates an already-normalized vector. Tiny negative entries are clamped to zero.
    pub fn new(values: [f64; NUM_EMOTIONS]) -> Result<Self, DistributionError> {
        let clamped = clamp_negatives(&values)?;
        let sum: f64 = clamped.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(DistributionError::NotNormalized { sum });
        }
        Ok(Self(clamped))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, DistributionError> {
        Self::new(to_array(values)?)
    }

    /// Rescales a non-negative vector to unit mass.
    pub fn normalize(raw: &[f64]) -> Result<Self, DistributionError> {
        let clamped = clamp_negatives(&to_array(raw)?)?;
        let sum: f64 = clamped.iter().sum();
        if sum <= 0.0 {
            return Err(DistributionError::ZeroMass);
        }
        let mut out = [0.0; NUM_EMOTIONS];
        for (o, v) in out.iter_mut().zip(clamped) {
            *o = v / sum;
        }
        Ok(Self(out))
    }

    pub fn uniform() -> Self {
        Self([1.0 / NUM_EMOTIONS as f64; NUM_EMOTIONS])
    }

    /// All mass on a single class.
    pub fn point(class: EmotionClass) -> Self {
        let mut v = [0.0; NUM_EMOTIONS];
        v[class.index()] = 1.0;
        Self(v)
    }

    pub fn values(&self) -> &[f64; NUM_EMOTIONS] {
        &self.0
    }

    pub fn get(&self, class: EmotionClass) -> f64 {
        self.0[class.index()]
    }

    /// The dominant class (argmax, ties to lowest index).
    pub fn dominant(&self) -> EmotionClass {
        EmotionClass::ALL[argmax(&self.0)]
    }

    /// Arithmetic mean of several distributions, renormalized to unit mass.
    pub fn mean<'a, I>(items: I) -> Result<Self, DistributionError>
    where
        I: IntoIterator<Item = &'a EmotionDistribution>,
    {
        let mut acc = [0.0; NUM_EMOTIONS];
        let mut count = 0usize;
        for d in items {
            for (a, v) in acc.iter_mut().zip(d.0) {
                *a += v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(DistributionError::ZeroMass);
        }
        for a in acc.iter_mut() {
            *a /= count as f64;
        }
        Self::normalize(&acc)
    }
}

/// Rescales `raw` to a unit-mass emotion distribution.
pub fn normalize_distribution(raw: &[f64]) -> Result<EmotionDistribution, DistributionError> {
    EmotionDistribution::normalize(raw)
}

fn to_array(values: &[f64]) -> Result<[f64; NUM_EMOTIONS], DistributionError> {
    values.try_into().map_err(|_| DistributionError::WrongLength { expected: NUM_EMOTIONS, got: values.len() })
}

fn clamp_negatives(values: &[f64; NUM_EMOTIONS]) -> Result<[f64; NUM_EMOTIONS], DistributionError> {
    let mut out = *values;
    for (index, v) in out.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(DistributionError::NonFinite { index, value: *v });
        }
        if *v < -NEGATIVE_TOLERANCE {
            return Err(DistributionError::NegativeMass { index, value: *v });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(out)
}

impl Serialize for EmotionDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EmotionDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        Self::from_slice(&v).map_err(serde::de::Error::custom)
    }
}
