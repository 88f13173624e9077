use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const RATING_MIN: f64 = 0.0;
pub const RATING_MAX: f64 = 100.0;
pub const DIMENSIONS: [&str; 3] = ["roughness", "valence", "arousal"];

/// Perceptual ratings on the 0 to 100 slider scale. Serialized with the
/// short keys `r`, `v`, `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingTriple {
    #[serde(rename = "r")]
    pub roughness: f64,
    #[serde(rename = "v")]
    pub valence: f64,
    #[serde(rename = "a")]
    pub arousal: f64,
}

impl RatingTriple {
    pub fn new(roughness: f64, valence: f64, arousal: f64) -> Self {
        Self {
            roughness,
            valence,
            arousal,
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.roughness, self.valence, self.arousal]
    }

    pub fn clamped(self) -> Self {
        Self::from_array(self.to_array().map(|v| v.clamp(RATING_MIN, RATING_MAX)))
    }

    /// Checks that every value is finite and on the rating scale.
    pub fn check_bounds(self) -> Result<Self> {
        for (name, v) in DIMENSIONS.iter().zip(self.to_array()) {
            if !(RATING_MIN..=RATING_MAX).contains(&v) {
                return Err(Error::Data(format!("{name} rating {v} outside [0, 100]")));
            }
        }
        Ok(self)
    }
}
