//! Free-space optical channel: geometric beam-spread loss and Beer-Lambert
//! atmospheric attenuation.
//!
//! The beam leaves a transmitter aperture of diameter `dt_mm`, diverges at
//! `divergence_mrad`, and is collected by a receiver aperture `dr_mm` after
//! `length_m` of propagation. With mrad and meters, the beam diameter at the
//! receiver is `dt_mm + divergence_mrad * length_m` millimeters. The
//! geometric transmittance is the aperture-to-beam area ratio, capped at 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Transmittance;

/// Interpretation of the attenuation coefficient `alpha_per_km`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaUnit {
    /// Natural-exponent coefficient: T_atm = exp(-alpha * L_km).
    #[default]
    Natural,
    /// Decibel coefficient: T_atm = 10^(-alpha * L_km / 10).
    Db,
}

/// Geometry and attenuation of one line-of-sight link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Transmitter aperture diameter (mm).
    pub dt_mm: f64,
    /// Receiver aperture diameter (mm).
    pub dr_mm: f64,
    /// Full-angle beam divergence (mrad).
    pub divergence_mrad: f64,
    /// Atmospheric attenuation coefficient (per km); see [`AlphaUnit`].
    pub alpha_per_km: f64,
    /// Link length (m).
    pub length_m: f64,
    /// How `alpha_per_km` is interpreted; set from the top-level config key.
    #[serde(skip)]
    pub alpha_unit: AlphaUnit,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            dt_mm: 10.0,
            dr_mm: 10.0,
            divergence_mrad: 0.025,
            alpha_per_km: 0.1,
            length_m: 10.0,
            alpha_unit: AlphaUnit::Natural,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.dt_mm, "channel.dt_mm", "dt > 0 and finite", self.dt_mm > 0.0),
            (self.dr_mm, "channel.dr_mm", "dr > 0 and finite", self.dr_mm > 0.0),
            (
                self.divergence_mrad,
                "channel.divergence_mrad",
                "divergence >= 0 and finite",
                self.divergence_mrad >= 0.0,
            ),
            (
                self.alpha_per_km,
                "channel.alpha_per_km",
                "alpha >= 0 and finite",
                self.alpha_per_km >= 0.0,
            ),
            (self.length_m, "channel.length_m", "length >= 0 and finite", self.length_m >= 0.0),
        ];
        for (value, name, constraint, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::OutOfRange { name, value, constraint });
            }
        }
        Ok(())
    }

    /// Convenience constructor for a link of `length_m` with otherwise
    /// default geometry.
    pub fn with_length(length_m: f64) -> Self {
        Self { length_m, ..Self::default() }
    }
}

/// Aperture-ratio transmittance [dr / (dt + divergence * L)]^2, capped at 1
/// when the receiver aperture exceeds the beam diameter.
pub fn geometric_transmittance(p: &ChannelParams) -> Result<Transmittance> {
    p.validate()?;
    let beam_mm = p.dt_mm + p.divergence_mrad * p.length_m;
    let ratio = p.dr_mm / beam_mm;
    Transmittance::new((ratio * ratio).min(1.0))
}

/// Beer-Lambert atmospheric transmittance over the link length.
pub fn atmospheric_transmittance(p: &ChannelParams) -> Result<Transmittance> {
    p.validate()?;
    let alpha_l = p.alpha_per_km * p.length_m / 1000.0;
    let t = match p.alpha_unit {
        AlphaUnit::Natural => (-alpha_l).exp(),
        AlphaUnit::Db => 10f64.powf(-alpha_l / 10.0),
    };
    Transmittance::new(t)
}

/// Total channel transmittance: geometric times atmospheric.
pub fn total_transmittance(p: &ChannelParams) -> Result<Transmittance> {
    let geo = geometric_transmittance(p)?;
    let atm = atmospheric_transmittance(p)?;
    Transmittance::new(geo.value() * atm.value())
}
