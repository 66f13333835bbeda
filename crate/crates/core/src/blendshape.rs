//! The 52-channel blendshape weight vector.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const NUM_BLENDSHAPES: usize = 52;

/// Values this far outside `[0, 1]` are clamped on ingestion.
pub const RANGE_TOLERANCE: f64 = 1e-6;

/// Channel names in the order emitted by the MediaPipe face landmarker.
pub const CHANNEL_NAMES: [&str; NUM_BLENDSHAPES] = [
    "_neutral",
    "browDownLeft",
    "browDownRight",
    "browInnerUp",
    "browOuterUpLeft",
    "browOuterUpRight",
    "cheekPuff",
    "cheekSquintLeft",
    "cheekSquintRight",
    "eyeBlinkLeft",
    "eyeBlinkRight",
    "eyeLookDownLeft",
    "eyeLookDownRight",
    "eyeLookInLeft",
    "eyeLookInRight",
    "eyeLookOutLeft",
    "eyeLookOutRight",
    "eyeLookUpLeft",
    "eyeLookUpRight",
    "eyeSquintLeft",
    "eyeSquintRight",
    "eyeWideLeft",
    "eyeWideRight",
    "jawForward",
    "jawLeft",
    "jawOpen",
    "jawRight",
    "mouthClose",
    "mouthDimpleLeft",
    "mouthDimpleRight",
    "mouthFrownLeft",
    "mouthFrownRight",
    "mouthFunnel",
    "mouthLeft",
    "mouthLowerDownLeft",
    "mouthLowerDownRight",
    "mouthPressLeft",
    "mouthPressRight",
    "mouthPucker",
    "mouthRight",
    "mouthRollLower",
    "mouthRollUpper",
    "mouthShrugLower",
    "mouthShrugUpper",
    "mouthSmileLeft",
    "mouthSmileRight",
    "mouthStretchLeft",
    "mouthStretchRight",
    "mouthUpperUpLeft",
    "mouthUpperUpRight",
    "noseSneerLeft",
    "noseSneerRight",
];

pub fn channel_index(name: &str) -> Option<usize> {
    CHANNEL_NAMES.iter().position(|&c| c == name)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlendshapeError {
    #[error("expected {NUM_BLENDSHAPES} blendshape weights, got {0}")]
    WrongLength(usize),
    #[error("blendshape {channel} = {value} is outside [0, 1]")]
    OutOfRange { channel: usize, value: f64 },
}

/// 52 activation weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendshapeVector(Box<[f64; NUM_BLENDSHAPES]>);

impl BlendshapeVector {
    /// Validates weights, clamping values that stray from `[0, 1]` by at most [`RANGE_TOLERANCE`].
    pub fn new(weights: &[f64]) -> Result<Self, BlendshapeError> {
        if weights.len() != NUM_BLENDSHAPES {
            return Err(BlendshapeError::WrongLength(weights.len()));
        }
        let mut out = Box::new([0.0; NUM_BLENDSHAPES]);
        for (channel, (&value, o)) in weights.iter().zip(out.iter_mut()).enumerate() {
            if !(-RANGE_TOLERANCE..=1.0 + RANGE_TOLERANCE).contains(&value) {
                return Err(BlendshapeError::OutOfRange { channel, value });
            }
            *o = value.clamp(0.0, 1.0);
        }
        Ok(Self(out))
    }

    /// Clamps arbitrary finite values into range. NaN maps to 0.
    pub fn saturating(weights: &[f64]) -> Result<Self, BlendshapeError> {
        if weights.len() != NUM_BLENDSHAPES {
            return Err(BlendshapeError::WrongLength(weights.len()));
        }
        let mut out = Box::new([0.0; NUM_BLENDSHAPES]);
        for (o, &v) in out.iter_mut().zip(weights) {
            *o = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self(out))
    }

    pub fn zeros() -> Self {
        Self(Box::new([0.0; NUM_BLENDSHAPES]))
    }

    pub fn splat(value: f64) -> Result<Self, BlendshapeError> {
        Self::new(&[value; NUM_BLENDSHAPES])
    }

    /// Unit weight on one channel.
    pub fn basis(channel: usize) -> Self {
        let mut v = Self::zeros();
        v.0[channel] = 1.0;
        v
    }

    pub fn weights(&self) -> &[f64; NUM_BLENDSHAPES] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        channel_index(name).map(|i| self.0[i])
    }
}

impl Serialize for BlendshapeVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BlendshapeVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        Self::new(&v).map_err(serde::de::Error::custom)
    }
}
