use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{QkdError, Result};
use crate::model::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_count_prob_per_slot: f64,
    /// Gaussian timing jitter (standard deviation) in seconds.
    pub jitter_sigma: f64,
    pub dead_time: f64,
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(QkdError::config("detector efficiency outside [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.dark_count_prob_per_slot) {
            return Err(QkdError::config("dark count probability outside [0,1]"));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(QkdError::config("detector jitter must be finite and >= 0"));
        }
        if !(self.dead_time >= 0.0 && self.dead_time.is_finite()) {
            return Err(QkdError::config("detector dead time must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One examined time slot on one detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotDrive {
    pub frame_index: u64,
    pub slot: u16,
    /// Nominal slot centre in seconds.
    pub time: f64,
    pub mean_photons: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub detector: u8,
    pub frame_index: u64,
    pub slot: u16,
    pub timestamp: f64,
    pub is_dark: bool,
}

/// Dead-time clock of one detector.
#[derive(Clone, Copy, Debug)]
pub struct DetectorState {
    last_click: f64,
}

impl Default for DetectorState {
    fn default() -> Self {
        DetectorState { last_click: f64::NEG_INFINITY }
    }
}

impl DetectorState {
    pub fn last_click(&self) -> Option<f64> {
        self.last_click.is_finite().then_some(self.last_click)
    }
}

/// Click probability of a slot holding `mean_photons` on average.
///
/// Photon and dark clicks are independent: `1 - e^{-ηm} (1 - p_dc)`.
#[inline]
pub fn click_probability(mean_photons: f64, efficiency: f64, dark_prob: f64) -> f64 {
    let photon = -(-efficiency * mean_photons).exp_m1();
    1.0 - (1.0 - photon) * (1.0 - dark_prob)
}

/// Fraction of jittered arrivals that stay inside their own slot window.
pub fn timing_acceptance(jitter_sigma: f64, slot_window: f64) -> f64 {
    if jitter_sigma == 0.0 {
        return 1.0;
    }
    erf(slot_window / (2.0 * std::f64::consts::SQRT_2 * jitter_sigma))
}

/// Runs one detector over slots given in time order.
///
/// Clicks are drawn per slot, timestamped with Gaussian jitter and dropped if
/// they fall within the dead time of the previous registered click. Surviving
/// events are appended to `out` carrying their nominal slot.
pub fn detect(
    drives: &[SlotDrive],
    detector: u8,
    det: &DetectorParams,
    state: &mut DetectorState,
    rng: &mut RngStream,
    out: &mut Vec<DetectionEvent>,
) {
    for d in drives {
        let photon = -(-det.efficiency * d.mean_photons).exp_m1();
        let total = 1.0 - (1.0 - photon) * (1.0 - det.dark_count_prob_per_slot);
        let u = rng.next_uniform();
        if u >= total {
            continue;
        }
        let is_dark = u >= photon;
        let timestamp = if det.jitter_sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            d.time + det.jitter_sigma * z
        } else {
            d.time
        };
        if timestamp - state.last_click < det.dead_time {
            continue;
        }
        state.last_click = timestamp;
        out.push(DetectionEvent {
            detector,
            frame_index: d.frame_index,
            slot: d.slot,
            timestamp,
            is_dark,
        });
    }
}

/// Maps a timestamp onto a slot of a grid starting at `start`.
///
/// Returns the slot whose centre lies within `±window/2`; anything else
/// (including the dead zone between windows) is discarded.
pub fn assign_slot(
    timestamp: f64,
    start: f64,
    bin_separation: f64,
    n_slots: usize,
    window: f64,
) -> Option<u16> {
    let rel = timestamp - start;
    let k = (rel / bin_separation).round();
    if k < 0.0 || k >= n_slots as f64 {
        return None;
    }
    if (rel - k * bin_separation).abs() <= window / 2.0 {
        Some(k as u16)
    } else {
        None
    }
}
