//! TOML run configuration: one document carrying every model parameter,
//! with defaults for anything omitted.
//!
//! An empty document is a valid config and reproduces the built-in
//! defaults exactly. Parsing is strict: unknown keys are rejected rather
//! than silently ignored, and every section is validated after parsing.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bbm92::{EcInefficiency, EntangledSourceParams};
use crate::channel::{AlphaUnit, ChannelParams};
use crate::e91::{AnalyzerConfig, ArmSplit};
use crate::error::{Error, Result};
use crate::single_photon::DeviceParams;

/// Full run configuration. Scalar knobs live at the top level; the
/// `[channel]`, `[device]`, `[source]`, and `[analyzer]` tables mirror the
/// corresponding parameter structs field by field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// How `channel.alpha_per_km` is interpreted; copied into the channel
    /// section on parse (the channel table does not carry its own copy).
    pub alpha_unit: AlphaUnit,
    /// How a total transmittance is split across the two arms of an
    /// entanglement link.
    pub arm_split: ArmSplit,
    /// Source/pulse rate nu_s (1/s).
    pub nu_s: f64,
    /// Error-correction inefficiency table as (Q, f) knots; empty means the
    /// conventional flat 1.2.
    pub fq_table: Vec<(f64, f64)>,
    /// Default output path for sweep artifacts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    pub channel: ChannelParams,
    pub device: DeviceParams,
    pub source: EntangledSourceParams,
    pub analyzer: AnalyzerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha_unit: AlphaUnit::default(),
            arm_split: ArmSplit::default(),
            nu_s: 0.64e6,
            fq_table: Vec::new(),
            output_path: None,
            channel: ChannelParams::default(),
            device: DeviceParams::default(),
            source: EntangledSourceParams::default(),
            analyzer: AnalyzerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu_s > 0.0 && self.nu_s.is_finite()) {
            return Err(Error::OutOfRange {
                name: "nu_s",
                value: self.nu_s,
                constraint: "nu_s > 0 and finite",
            });
        }
        self.channel.validate()?;
        self.device.validate()?;
        self.source.validate()?;
        self.analyzer.validate()?;
        self.ec_inefficiency()?;
        Ok(())
    }

    /// The channel section with the top-level alpha interpretation applied.
    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams { alpha_unit: self.alpha_unit, ..self.channel }
    }

    /// The f(Q) model built from `fq_table` (flat 1.2 when empty).
    pub fn ec_inefficiency(&self) -> Result<EcInefficiency> {
        EcInefficiency::from_table(self.fq_table.clone())
    }
}

/// Parses and validates a TOML config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg: RunConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.channel.alpha_unit = cfg.alpha_unit;
    cfg.validate()?;
    Ok(cfg)
}

/// Renders a config back to TOML. `parse_config(&render_config(c)?)`
/// reproduces `c` exactly.
pub fn render_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))
}
