//! Emulated fibre link.

use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};
use crate::model::{db_to_power, PulseFrame};

/// Distance-equivalent attenuation plus a lumped excess loss.
///
/// The power transmission is cached and recomputed whenever a field changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelSpec", into = "ChannelSpec")]
pub struct ChannelParams {
    length_km: f64,
    atten_db_per_km: f64,
    excess_loss_db: f64,
    transmission: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSpec {
    length_km: f64,
    atten_db_per_km: f64,
    #[serde(default)]
    excess_loss_db: f64,
}

impl TryFrom<ChannelSpec> for ChannelParams {
    type Error = QkdError;

    fn try_from(s: ChannelSpec) -> Result<Self> {
        ChannelParams::new(s.length_km, s.atten_db_per_km, s.excess_loss_db)
    }
}

impl From<ChannelParams> for ChannelSpec {
    fn from(c: ChannelParams) -> Self {
        ChannelSpec {
            length_km: c.length_km,
            atten_db_per_km: c.atten_db_per_km,
            excess_loss_db: c.excess_loss_db,
        }
    }
}

impl ChannelParams {
    pub fn new(length_km: f64, atten_db_per_km: f64, excess_loss_db: f64) -> Result<Self> {
        for (v, what) in [
            (length_km, "channel.length_km"),
            (atten_db_per_km, "channel.atten_db_per_km"),
            (excess_loss_db, "channel.excess_loss_db"),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(QkdError::config(format!("{what} must be finite and >= 0, got {v}")));
            }
        }
        let mut c = ChannelParams { length_km, atten_db_per_km, excess_loss_db, transmission: 1.0 };
        c.refresh();
        Ok(c)
    }

    fn refresh(&mut self) {
        self.transmission = db_to_power(self.total_loss_db());
    }

    pub fn length_km(&self) -> f64 {
        self.length_km
    }

    pub fn atten_db_per_km(&self) -> f64 {
        self.atten_db_per_km
    }

    pub fn excess_loss_db(&self) -> f64 {
        self.excess_loss_db
    }

    pub fn total_loss_db(&self) -> f64 {
        self.length_km * self.atten_db_per_km + self.excess_loss_db
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    pub fn set_length_km(&mut self, km: f64) -> Result<()> {
        *self = ChannelParams::new(km, self.atten_db_per_km, self.excess_loss_db)?;
        Ok(())
    }

    pub fn set_excess_loss_db(&mut self, db: f64) -> Result<()> {
        *self = ChannelParams::new(self.length_km, self.atten_db_per_km, db)?;
        Ok(())
    }
}

/// Scales every bin amplitude by `sqrt(transmission)`; phases are untouched.
pub fn apply_channel(frame: PulseFrame, ch: &ChannelParams) -> PulseFrame {
    scale_power(frame, ch.transmission)
}

pub(crate) fn scale_power(mut frame: PulseFrame, power: f64) -> PulseFrame {
    if power != 1.0 {
        let s = power.sqrt();
        for b in &mut frame.bins {
            *b *= s;
        }
    }
    frame
}
