//! Experiment configuration: TOML with dotted sections, layered as
//! preset <- file <- command line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{QkdError, Result};
use crate::receiver::{DetectorParams, ReceiverParams};
use crate::transmitter::TransmitterParams;

use super::presets;

/// Serde adapter for floats that may be `+inf` (written as the string `"inf"`).
pub mod extended_f64 {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                    other => other.parse().map_err(|_| E::custom(format!("not a number: {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Bb84,
    Cow,
    Dps,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Bb84, Protocol::Cow, Protocol::Dps];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Bb84 => "bb84",
            Protocol::Cow => "cow",
            Protocol::Dps => "dps",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Montecarlo,
    Analytic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonlines,
}

/// Detector settings as configured; the per-slot dark probability follows
/// from the rate and the receiver's slot window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub efficiency: f64,
    /// Dark count rate in Hz.
    pub dark_count_rate: f64,
    pub jitter_sigma: f64,
    pub dead_time: f64,
}

impl DetectorConfig {
    pub fn params(&self, slot_window: f64) -> DetectorParams {
        DetectorParams {
            efficiency: self.efficiency,
            dark_count_prob_per_slot: (self.dark_count_rate * slot_window).min(1.0),
            jitter_sigma: self.jitter_sigma,
            dead_time: self.dead_time,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub mode: Mode,
    pub seed: u64,
    /// Frames to simulate (BB84 states, COW pairs, DPS pulses).
    pub frames: u64,
    /// Error correction inefficiency `f`.
    pub ec_efficiency: f64,
    pub transmitter: TransmitterParams,
    pub channel: ChannelParams,
    pub receiver: ReceiverParams,
    pub detector: DetectorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Smallest Monte Carlo run accepted.
pub const MIN_MONTECARLO_FRAMES: u64 = 10_000;

impl ExperimentConfig {
    /// Reads a config file layered over its preset.
    ///
    /// The base preset is `preset_override`, else the file's `preset` key,
    /// else `<protocol>-table1` for the file's protocol (default BB84).
    pub fn load(path: Option<&Path>, preset_override: Option<&str>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|source| QkdError::Io { path: p.to_path_buf(), source })?;
                text.parse::<toml::Table>()
                    .map_err(|e| QkdError::config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let file_preset = match table.remove("preset") {
            Some(toml::Value::String(s)) => Some(s),
            Some(other) => return Err(QkdError::config(format!("preset must be a string, got {other}"))),
            None => None,
        };
        let name = match (preset_override, file_preset) {
            (Some(n), _) => n.to_owned(),
            (None, Some(n)) => n,
            (None, None) => {
                let proto = match table.get("protocol") {
                    Some(v) => Protocol::deserialize(v.clone())
                        .map_err(|e| QkdError::config(format!("protocol: {e}")))?,
                    None => Protocol::Bb84,
                };
                format!("{proto}-table1")
            }
        };
        let base = presets::preset(&name)?;
        let cfg = base.overlay(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Deep-merges a TOML table over this config. Arrays are replaced whole.
    pub fn overlay(&self, patch: toml::Table) -> Result<Self> {
        let toml::Value::Table(mut base) = toml::Value::try_from(self)
            .map_err(|e| QkdError::config(format!("cannot serialise config: {e}")))?
        else {
            return Err(QkdError::config("config did not serialise to a table"));
        };
        merge(&mut base, patch);
        toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| QkdError::config(e.to_string()))
    }

    /// Parses TOML text and overlays it (used by tests and the CLI).
    pub fn overlay_str(&self, text: &str) -> Result<Self> {
        let t = text.parse::<toml::Table>().map_err(|e| QkdError::config(e.to_string()))?;
        self.overlay(t)
    }

    pub fn detector_params(&self) -> DetectorParams {
        self.detector.params(self.receiver.slot_window)
    }

    /// Slot crosstalk actually applied.
    pub fn crosstalk(&self) -> f64 {
        self.receiver.crosstalk(
            &self.detector_params(),
            self.transmitter.pulse_fwhm,
            self.transmitter.bin_separation,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let tx = &self.transmitter;
        tx.validate()?;
        self.receiver.validate()?;
        self.detector_params().validate()?;
        if !(self.detector.dark_count_rate >= 0.0 && self.detector.dark_count_rate.is_finite()) {
            return Err(QkdError::config("detector.dark_count_rate must be finite and >= 0"));
        }
        if !(self.ec_efficiency >= 1.0 && self.ec_efficiency.is_finite()) {
            return Err(QkdError::config("ec_efficiency must be >= 1"));
        }
        if self.mode == Mode::Montecarlo && self.frames < MIN_MONTECARLO_FRAMES {
            return Err(QkdError::config(format!(
                "montecarlo mode needs at least {MIN_MONTECARLO_FRAMES} frames, got {}",
                self.frames
            )));
        }
        if self.frames == 0 {
            return Err(QkdError::config("frames must be positive"));
        }
        let sep = tx.bin_separation;
        if self.receiver.delay_bins(sep)? != 1 {
            return Err(QkdError::config("the AMZI delay must span exactly one time bin"));
        }
        if self.receiver.slot_window > sep {
            return Err(QkdError::config("receiver.slot_window exceeds the bin separation"));
        }
        let period = tx.frame_period();
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b;
        match self.protocol {
            Protocol::Bb84 => {
                if tx.intensity_classes.len() != 3 {
                    return Err(QkdError::config(
                        "BB84 needs three intensity classes: signal, weak decoy, vacuum",
                    ));
                }
                if period - 2.0 * sep < self.receiver.slot_window {
                    return Err(QkdError::config(
                        "BB84 frame period leaves no room between the late slot and the next frame",
                    ));
                }
            }
            Protocol::Cow => {
                if !rel(2.0 * sep, period) {
                    return Err(QkdError::config("COW bin separation must be half the frame period"));
                }
            }
            Protocol::Dps => {
                if !rel(sep, period) {
                    return Err(QkdError::config("DPS bin separation must equal the pulse period"));
                }
            }
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, patch: toml::Table) {
    for (k, v) in patch {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl FromStr for Protocol {
    type Err = QkdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb84" => Ok(Protocol::Bb84),
            "cow" => Ok(Protocol::Cow),
            "dps" => Ok(Protocol::Dps),
            _ => Err(QkdError::config(format!("unknown protocol {s:?}"))),
        }
    }
}
