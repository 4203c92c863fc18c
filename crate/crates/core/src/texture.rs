//! Surface textures: SQUAL statistics while in contact and the SQUAL versus
//! lens-lift distance mapping used for contact and press sensing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lift distance at which the reference SQUAL is quoted, mm.
pub const REF_DISTANCE_MM: f64 = 2.4;
/// Distance beyond which the sensor no longer sees the surface, mm.
pub const MAX_LIFT_MM: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Texture {
    Mousepad,
    Wood,
    Jeans,
}

impl Texture {
    pub const ALL: [Texture; 3] = [Texture::Mousepad, Texture::Wood, Texture::Jeans];

    pub fn name(self) -> &'static str {
        match self {
            Texture::Mousepad => "mousepad",
            Texture::Wood => "wood",
            Texture::Jeans => "jeans",
        }
    }

    pub fn model(self) -> TextureModel {
        match self {
            Texture::Mousepad => TextureModel {
                squal_mean: 70.0,
                squal_jitter: 4.0,
                slip_sigma_counts: 0.35,
                dropout_prob: 0.0,
                squal_at_ref_distance: 40.0,
            },
            Texture::Wood => TextureModel {
                squal_mean: 60.0,
                squal_jitter: 4.0,
                slip_sigma_counts: 0.35,
                dropout_prob: 0.0,
                squal_at_ref_distance: 34.0,
            },
            Texture::Jeans => TextureModel {
                squal_mean: 55.0,
                squal_jitter: 3.0,
                slip_sigma_counts: 0.35,
                dropout_prob: 0.0,
                squal_at_ref_distance: 31.0,
            },
        }
    }
}

impl fmt::Display for Texture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Texture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Texture::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config("texture", "texture must be one of mousepad,wood,jeans"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureModel {
    /// Mean SQUAL while the sensor rests on the surface.
    pub squal_mean: f64,
    /// Per-frame SQUAL standard deviation while in contact.
    pub squal_jitter: f64,
    /// Per-frame optical slip noise, counts (standard deviation).
    pub slip_sigma_counts: f64,
    /// Probability that a moving frame reports no motion.
    pub dropout_prob: f64,
    /// SQUAL observed at the 2.4 mm reference lift distance.
    pub squal_at_ref_distance: f64,
}

impl TextureModel {
    pub fn validate(&self) -> Result<()> {
        if !(50.0..=90.0).contains(&self.squal_mean) {
            return Err(Error::config("squal_mean", "must lie in [50, 90]"));
        }
        if !(self.squal_jitter >= 0.0 && self.slip_sigma_counts >= 0.0) {
            return Err(Error::config("squal_jitter", "noise terms must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::config("dropout_prob", "must lie in [0, 1]"));
        }
        if !(self.squal_at_ref_distance > 0.0) {
            return Err(Error::config("squal_at_ref_distance", "must be > 0"));
        }
        Ok(())
    }

    fn slope(&self) -> f64 {
        self.squal_at_ref_distance / (MAX_LIFT_MM - REF_DISTANCE_MM)
    }

    /// SQUAL at contact (zero lift).
    pub fn squal_at_contact(&self) -> f64 {
        (self.slope() * MAX_LIFT_MM).min(f64::from(crate::wire::SQUAL_MAX))
    }
}

/// SQUAL expected at a lens-to-surface distance. Linear fall-off that
/// reaches zero at the 5 mm lift limit; farther away the surface is not
/// seen at all.
pub fn distance_to_squal(distance_mm: f64, model: &TextureModel) -> Result<f64> {
    if !(distance_mm.is_finite() && distance_mm >= 0.0) {
        return Err(Error::DistanceOutOfRange(distance_mm));
    }
    if distance_mm >= MAX_LIFT_MM {
        return Ok(0.0);
    }
    let s = model.slope() * (MAX_LIFT_MM - distance_mm);
    Ok(s.min(f64::from(crate::wire::SQUAL_MAX)))
}

/// Inverse of [`distance_to_squal`] on its monotone range.
pub fn squal_to_distance(squal: f64, model: &TextureModel) -> f64 {
    let s = squal.clamp(0.0, model.squal_at_contact());
    MAX_LIFT_MM - s / model.slope()
}
