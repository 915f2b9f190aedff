//! Passive decoding receiver and single-photon detection.
//!
//! The optical chain is: front-end insertion loss, tunable beamsplitter
//! (data line vs interferometer), loss-balanced asymmetric Mach-Zehnder with a
//! stepped delay line, then one detector per output.

mod detector;
mod optics;

pub use detector::{
    assign_slot, click_probability, detect, timing_acceptance, DetectionEvent, DetectorParams,
    DetectorState, SlotDrive,
};
pub use optics::{
    amzi_transform, apply_slot_crosstalk, derived_slot_crosstalk, route_tbs, AmziOutput,
    DELAY_STEP, DELAY_TOLERANCE, MAX_DELAY_STEPS,
};

use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};

/// Output slot names of a two-bin frame behind a one-bin AMZI.
pub const EARLY: u16 = 0;
pub const MIDDLE: u16 = 1;
pub const LATE: u16 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverParams {
    /// Fraction of the input power the tunable beamsplitter sends to the
    /// interferometer (monitor) arm; the rest goes to the data line.
    pub tbs_monitor_fraction: f64,
    /// Delay line setting in 300 ps steps (0..=7).
    pub amzi_delay_steps: u8,
    /// Interferometer phase in radians; 0 is the calibrated setting.
    pub amzi_phase: f64,
    /// Extra loss of the delayed arm relative to the short arm.
    pub amzi_arm_imbalance_db: f64,
    /// Chip insertion loss ahead of the detectors on the key path.
    pub insertion_loss_db: f64,
    /// Width of each detection window in seconds.
    pub slot_window: f64,
    /// Probability that a photon lands in an adjacent slot. `None` derives it
    /// from detector jitter and pulse width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_crosstalk_prob: Option<f64>,
}

impl ReceiverParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tbs_monitor_fraction) {
            return Err(QkdError::config("receiver.tbs_monitor_fraction outside [0,1]"));
        }
        if self.amzi_delay_steps > MAX_DELAY_STEPS {
            return Err(QkdError::config(format!(
                "receiver.amzi_delay_steps {} exceeds {MAX_DELAY_STEPS}",
                self.amzi_delay_steps
            )));
        }
        if !self.amzi_phase.is_finite() {
            return Err(QkdError::config("receiver.amzi_phase must be finite"));
        }
        for (v, what) in [
            (self.amzi_arm_imbalance_db, "receiver.amzi_arm_imbalance_db"),
            (self.insertion_loss_db, "receiver.insertion_loss_db"),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(QkdError::config(format!("{what} must be finite and >= 0")));
            }
        }
        if !(self.slot_window > 0.0 && self.slot_window.is_finite()) {
            return Err(QkdError::config("receiver.slot_window must be positive"));
        }
        if let Some(x) = self.slot_crosstalk_prob {
            if !(0.0..=1.0).contains(&x) {
                return Err(QkdError::config("receiver.slot_crosstalk_prob outside [0,1]"));
            }
        }
        Ok(())
    }

    pub fn delay(&self) -> f64 {
        f64::from(self.amzi_delay_steps) * DELAY_STEP
    }

    /// Number of bins the delay line spans for the given bin spacing.
    pub fn delay_bins(&self, bin_separation: f64) -> Result<usize> {
        let bins = (self.delay() / bin_separation).round();
        let mismatch = (bins * bin_separation - self.delay()).abs();
        if mismatch > DELAY_TOLERANCE {
            return Err(QkdError::config(format!(
                "delay line {:.0} ps does not match a whole number of {:.0} ps bins",
                self.delay() * 1e12,
                bin_separation * 1e12
            )));
        }
        Ok(bins as usize)
    }

    /// Effective crosstalk: the configured value or the jitter-derived default.
    pub fn crosstalk(&self, det: &DetectorParams, pulse_fwhm: f64, bin_separation: f64) -> f64 {
        self.slot_crosstalk_prob.unwrap_or_else(|| {
            derived_slot_crosstalk(det.jitter_sigma, pulse_fwhm, bin_separation, self.slot_window)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn bb84_receiver() -> ReceiverParams {
        ReceiverParams {
            tbs_monitor_fraction: 1.0,
            amzi_delay_steps: 2,
            amzi_phase: 0.0,
            amzi_arm_imbalance_db: 0.0,
            insertion_loss_db: 9.0,
            slot_window: 400e-12,
            slot_crosstalk_prob: None,
        }
    }

    #[test]
    fn delay_grid() {
        let r = bb84_receiver();
        assert_eq!(r.delay_bins(600e-12).unwrap(), 1);
        assert_eq!(r.delay_bins(580e-12).unwrap(), 1);
        assert_eq!(r.delay_bins(1.0 / 1.76e9).unwrap(), 1);
        assert!(r.delay_bins(450e-12).is_err());
        let r = ReceiverParams { amzi_delay_steps: 8, ..bb84_receiver() };
        assert!(r.validate().is_err());
    }
}
