use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};

/// Error rate of vacuum and dark-count clicks.
pub const VACUUM_ERROR_RATE: f64 = 0.5;

/// Measured gain and error rate of one intensity class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassObservation {
    pub intensity: f64,
    pub gain: f64,
    pub error_rate: f64,
}

/// Signal, weak decoy and (near-)vacuum classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoyInput {
    pub signal: ClassObservation,
    pub weak: ClassObservation,
    pub vacuum: ClassObservation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoyEstimate {
    /// Lower bound on the vacuum yield.
    pub y0: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub q1_lower: f64,
    /// Signal intensity the single-photon gain refers to.
    pub mu: f64,
}

/// Vacuum + weak decoy bounds on the single-photon yield and error rate.
///
/// The "vacuum" class may carry a small intensity ω. Its gain then also
/// contains single-photon clicks, so `Y0` is bounded from below by combining
/// it with the weak class, and the single-photon yield uses the two-decoy
/// form. At ω = 0 both reduce to the textbook vacuum+weak expressions.
pub fn decoy_estimate(input: &DecoyInput) -> Result<DecoyEstimate> {
    let (s, w, v) = (input.signal, input.weak, input.vacuum);
    let (mu, nu, om) = (s.intensity, w.intensity, v.intensity);
    if !(om >= 0.0 && nu > om && mu > nu + om) {
        return Err(QkdError::domain(format!(
            "decoy intensities must satisfy mu > nu + omega, nu > omega >= 0 (got {mu}, {nu}, {om})"
        )));
    }
    for (name, c) in [("signal", s), ("weak", w), ("vacuum", v)] {
        if !(0.0..=1.0).contains(&c.gain) || !(0.0..=1.0).contains(&c.error_rate) {
            return Err(QkdError::domain(format!("{name} gain/error rate outside [0,1]")));
        }
    }
    if !(s.gain > 0.0 && w.gain > 0.0) {
        return Err(QkdError::DecoyFailed("signal or weak class saw no detections".into()));
    }

    let qs = s.gain * mu.exp();
    let qw = w.gain * nu.exp();
    let qv = v.gain * om.exp();

    let y0 = ((nu * qv - om * qw) / (nu - om)).clamp(0.0, 1.0);
    let denom = mu * nu - mu * om - nu * nu + om * om;
    let y1 = mu / denom * (qw - qv - (nu * nu - om * om) / (mu * mu) * (qs - y0));
    if !(y1 > 0.0) {
        return Err(QkdError::DecoyFailed(format!(
            "single-photon yield bound {y1:.3e} is not positive"
        )));
    }
    let y1 = y1.min(1.0);
    let e1 = ((w.error_rate * qw - VACUUM_ERROR_RATE * y0) / (nu * y1)).clamp(0.0, 1.0);
    Ok(DecoyEstimate { y0, y1_lower: y1, e1_upper: e1, q1_lower: y1 * mu * (-mu).exp(), mu })
}
