//! Protocol encoders for the pulse-carving transmitter.
//!
//! Pulse shape is not traced sample by sample: a frame is a list of complex
//! bin amplitudes. Timing spread from the finite pulse width is folded into
//! the receiver's slot crosstalk.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};
use crate::model::{db_to_power, Basis, ClassId, CowSymbol, PulseFrame, RngStream, Symbol};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityClass {
    pub name: String,
    pub mean_photons: f64,
    pub probability: f64,
}

impl IntensityClass {
    pub fn new(name: &str, mean_photons: f64, probability: f64) -> Self {
        IntensityClass { name: name.to_string(), mean_photons, probability }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterParams {
    /// Frame (state) rate in Hz: BB84 states, COW pairs, DPS pulses.
    pub clock_rate: f64,
    /// Spacing of adjacent time bins in seconds.
    pub bin_separation: f64,
    pub pulse_fwhm: f64,
    /// On/off intensity ratio of the pulse carver; `inf` disables leakage.
    #[serde(with = "crate::harness::config::extended_f64")]
    pub extinction_db: f64,
    pub intensity_classes: Vec<IntensityClass>,
    pub phase_randomize: bool,
    /// Probability that a COW frame carries the two-pulse decoy.
    pub cow_decoy_probability: f64,
    /// Pulses per coherent DPS train.
    pub dps_train_pulses: usize,
}

impl TransmitterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(QkdError::config(format!("{what} must be positive and finite, got {v}")))
            }
        };
        positive(self.clock_rate, "transmitter.clock_rate")?;
        positive(self.bin_separation, "transmitter.bin_separation")?;
        positive(self.pulse_fwhm, "transmitter.pulse_fwhm")?;
        if !(self.extinction_db > 0.0) {
            return Err(QkdError::config(format!(
                "transmitter.extinction_db must be > 0, got {}",
                self.extinction_db
            )));
        }
        if self.intensity_classes.is_empty() {
            return Err(QkdError::config("at least one intensity class is required"));
        }
        let mut total = 0.0;
        for c in &self.intensity_classes {
            if !(c.mean_photons >= 0.0 && c.mean_photons.is_finite()) {
                return Err(QkdError::config(format!(
                    "class {} has invalid mean photon number {}",
                    c.name, c.mean_photons
                )));
            }
            if !(0.0..=1.0).contains(&c.probability) {
                return Err(QkdError::config(format!(
                    "class {} has invalid probability {}",
                    c.name, c.probability
                )));
            }
            total += c.probability;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(QkdError::config(format!(
                "intensity class probabilities sum to {total}, expected 1"
            )));
        }
        if !(0.0..=1.0).contains(&self.cow_decoy_probability) {
            return Err(QkdError::config("transmitter.cow_decoy_probability outside [0,1]"));
        }
        if self.dps_train_pulses < 2 {
            return Err(QkdError::config("transmitter.dps_train_pulses must be at least 2"));
        }
        Ok(())
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.clock_rate
    }

    pub fn class_index(&self, name: &str) -> Option<ClassId> {
        self.intensity_classes.iter().position(|c| c.name == name)
    }

    pub fn class(&self, id: ClassId) -> Result<&IntensityClass> {
        self.intensity_classes
            .get(id)
            .ok_or_else(|| QkdError::config(format!("unknown intensity class {id}")))
    }

    /// Picks a class by inverse CDF of the emission probabilities.
    pub fn sample_class(&self, u: f64) -> ClassId {
        let mut acc = 0.0;
        for (i, c) in self.intensity_classes.iter().enumerate() {
            acc += c.probability;
            if u < acc {
                return i;
            }
        }
        self.intensity_classes.len() - 1
    }

    pub fn sample_cow_symbol(&self, u: f64) -> CowSymbol {
        let pd = self.cow_decoy_probability;
        if u < pd {
            CowSymbol::Decoy
        } else if u < pd + (1.0 - pd) / 2.0 {
            CowSymbol::Bit0
        } else {
            CowSymbol::Bit1
        }
    }
}

fn random_phase(params: &TransmitterParams, rng: &mut RngStream) -> f64 {
    if params.phase_randomize {
        TAU * rng.next_uniform()
    } else {
        0.0
    }
}

/// Time-bin BB84 state with a uniformly random global phase when enabled.
pub fn encode_bb84_frame(
    bit: u8,
    basis: Basis,
    class: ClassId,
    params: &TransmitterParams,
    rng: &mut RngStream,
) -> Result<PulseFrame> {
    let phase = random_phase(params, rng);
    encode_bb84_frame_with_phase(bit, basis, class, params, phase)
}

/// [`encode_bb84_frame`] with an explicit global phase.
///
/// X-basis states split the class intensity over both bins so that all four
/// states carry the same mean photon number.
pub fn encode_bb84_frame_with_phase(
    bit: u8,
    basis: Basis,
    class: ClassId,
    params: &TransmitterParams,
    phase: f64,
) -> Result<PulseFrame> {
    let mu = params.class(class)?.mean_photons;
    let zero = Complex64::new(0.0, 0.0);
    let bins = match (basis, bit) {
        (Basis::Z, 0) => vec![Complex64::new(mu.sqrt(), 0.0), zero],
        (Basis::Z, 1) => vec![zero, Complex64::new(mu.sqrt(), 0.0)],
        (Basis::X, 0) => {
            let a = (mu / 2.0).sqrt();
            vec![Complex64::new(a, 0.0), Complex64::new(a, 0.0)]
        }
        (Basis::X, 1) => {
            let a = (mu / 2.0).sqrt();
            vec![Complex64::new(a, 0.0), Complex64::new(-a, 0.0)]
        }
        (_, b) => return Err(QkdError::domain(format!("BB84 bit must be 0 or 1, got {b}"))),
    };
    let frame = PulseFrame::new(
        bins,
        params.bin_separation,
        params.frame_period(),
        class,
        Symbol::Bb84 { bit, basis },
    )?;
    Ok(frame.with_reference_phase(phase, params.phase_randomize))
}

/// COW pair on the shared (unrandomized) phase reference.
///
/// The frame period is two bins, so consecutive frames tile into one coherent
/// pulse stream.
pub fn encode_cow_frame(symbol: CowSymbol, params: &TransmitterParams) -> Result<PulseFrame> {
    let amp = Complex64::new(params.class(0)?.mean_photons.sqrt(), 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let bins = match symbol {
        CowSymbol::Bit0 => vec![amp, zero],
        CowSymbol::Bit1 => vec![zero, amp],
        CowSymbol::Decoy => vec![amp, amp],
    };
    PulseFrame::new(bins, params.bin_separation, 2.0 * params.bin_separation, 0, Symbol::Cow(symbol))
}

/// DPS train: `bits.len() + 1` equal pulses whose consecutive phase steps are
/// `π * bit`.
pub fn encode_dps_train(
    bits: &[u8],
    params: &TransmitterParams,
    rng: &mut RngStream,
) -> Result<PulseFrame> {
    let phase = random_phase(params, rng);
    encode_dps_train_with_phase(bits, params, phase)
}

pub fn encode_dps_train_with_phase(
    bits: &[u8],
    params: &TransmitterParams,
    phase: f64,
) -> Result<PulseFrame> {
    if bits.is_empty() {
        return Err(QkdError::domain("DPS train needs at least one bit"));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(QkdError::domain(format!("DPS bit must be 0 or 1, got {b}")));
    }
    let amp = params.class(0)?.mean_photons.sqrt();
    let mut bins = Vec::with_capacity(bits.len() + 1);
    // Track the phase as a parity so that 2π wraps exactly.
    let mut odd = false;
    bins.push(Complex64::new(amp, 0.0));
    for &b in bits {
        odd ^= b == 1;
        bins.push(Complex64::new(if odd { -amp } else { amp }, 0.0));
    }
    let period = bins.len() as f64 * params.bin_separation;
    let frame = PulseFrame::new(
        bins,
        params.bin_separation,
        period,
        0,
        Symbol::Dps { bits: bits.to_vec() },
    )?;
    Ok(frame.with_reference_phase(phase, params.phase_randomize))
}

/// Adds carver leakage to nominally empty bins.
///
/// Each zero-amplitude bin receives `max_occupied * 10^(-extinction/10)` mean
/// photons on the frame's reference phase. An infinite extinction or an
/// all-vacuum frame passes through untouched.
pub fn apply_extinction(mut frame: PulseFrame, extinction_db: f64) -> PulseFrame {
    debug_assert!(extinction_db > 0.0);
    if !extinction_db.is_finite() {
        return frame;
    }
    let peak = frame.bins.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
    if peak == 0.0 {
        return frame;
    }
    let leak = Complex64::from_polar((peak * db_to_power(extinction_db)).sqrt(), frame.reference_phase);
    for b in frame.bins.iter_mut().filter(|b| b.re == 0.0 && b.im == 0.0) {
        *b = leak;
    }
    frame
}

/// Phase step between consecutive bins, folded into `[0, 2π)`.
pub fn phase_steps(frame: &PulseFrame) -> Vec<f64> {
    frame
        .bins
        .windows(2)
        .map(|w| (w[1] * w[0].conj()).arg().rem_euclid(TAU))
        .collect()
}

/// Recovers DPS bits from bin phase steps (nearest of 0 and π).
pub fn dps_bits_from_phases(frame: &PulseFrame) -> Vec<u8> {
    phase_steps(frame)
        .into_iter()
        .map(|d| u8::from((d - PI).abs() < PI / 2.0))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn bb84_params() -> TransmitterParams {
        TransmitterParams {
            clock_rate: 560e6,
            bin_separation: 600e-12,
            pulse_fwhm: 136e-12,
            extinction_db: 30.0,
            intensity_classes: vec![
                IntensityClass::new("signal", 0.45, 0.8),
                IntensityClass::new("decoy", 0.1, 0.15),
                IntensityClass::new("vacuum", 5e-4, 0.05),
            ],
            phase_randomize: true,
            cow_decoy_probability: 0.05,
            dps_train_pulses: 1024,
        }
    }

    fn cow_params() -> TransmitterParams {
        TransmitterParams {
            clock_rate: 860e6,
            bin_separation: 1.0 / (2.0 * 860e6),
            intensity_classes: vec![IntensityClass::new("signal", 0.28, 1.0)],
            phase_randomize: false,
            ..bb84_params()
        }
    }

    #[test]
    fn bb84_states() {
        let p = bb84_params();
        let z0 = encode_bb84_frame_with_phase(0, Basis::Z, 0, &p, 0.0).unwrap();
        assert_eq!(z0.mean_photons(), vec![0.45, 0.0]);

        let xm = encode_bb84_frame_with_phase(1, Basis::X, 0, &p, 0.0).unwrap();
        let m = xm.mean_photons();
        assert_abs_diff_eq!(m[0], 0.225, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.225, epsilon = 1e-15);
        assert_abs_diff_eq!(phase_steps(&xm)[0], PI, epsilon = 1e-12);

        let xp = encode_bb84_frame_with_phase(0, Basis::X, 0, &p, 1.3).unwrap();
        assert_abs_diff_eq!(phase_steps(&xp)[0], 0.0, epsilon = 1e-12);

        assert!(encode_bb84_frame_with_phase(2, Basis::Z, 0, &p, 0.0).is_err());
        assert!(encode_bb84_frame_with_phase(0, Basis::Z, 7, &p, 0.0).is_err());
    }

    #[test]
    fn bb84_total_photons_match_class_intensity() {
        let p = bb84_params();
        for class in 0..3 {
            let mu = p.intensity_classes[class].mean_photons;
            for basis in [Basis::Z, Basis::X] {
                for bit in 0..2 {
                    let f = encode_bb84_frame_with_phase(bit, basis, class, &p, 2.1).unwrap();
                    assert!((f.total_mean_photons() - mu).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn cow_symbols() {
        let p = cow_params();
        let f = encode_cow_frame(CowSymbol::Bit0, &p).unwrap();
        assert_eq!(f.mean_photons(), vec![0.28, 0.0]);
        let f = encode_cow_frame(CowSymbol::Bit1, &p).unwrap();
        assert_eq!(f.mean_photons(), vec![0.0, 0.28]);
        let d = encode_cow_frame(CowSymbol::Decoy, &p).unwrap();
        let m = d.mean_photons();
        assert_abs_diff_eq!(m[0], 0.28, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.28, epsilon = 1e-15);

        // Occupied bins across a stream share phase 0.
        let stream = PulseFrame::concat(&[
            encode_cow_frame(CowSymbol::Bit1, &p).unwrap(),
            encode_cow_frame(CowSymbol::Decoy, &p).unwrap(),
            encode_cow_frame(CowSymbol::Bit0, &p).unwrap(),
        ])
        .unwrap();
        for a in stream.bins().iter().filter(|a| a.norm_sqr() > 0.0) {
            assert_eq!(a.arg(), 0.0);
        }
    }

    #[test]
    fn dps_trains() {
        let p = TransmitterParams {
            intensity_classes: vec![IntensityClass::new("signal", 0.28, 1.0)],
            phase_randomize: false,
            ..bb84_params()
        };
        let mut rng = RngStream::new(3, 0);
        let one = encode_dps_train(&[0], &p, &mut rng).unwrap();
        assert_eq!(one.bins().len(), 2);
        assert_eq!(phase_steps(&one), vec![0.0]);

        let t = encode_dps_train(&[1, 0, 1], &p, &mut rng).unwrap();
        let phases: Vec<f64> = t.bins().iter().map(|a| a.arg().rem_euclid(TAU)).collect();
        assert_eq!(phases, vec![0.0, PI, PI, 0.0]);
        assert!(t.mean_photons().iter().all(|&m| (m - 0.28).abs() < 1e-15));
        assert_abs_diff_eq!(t.total_mean_photons(), 4.0 * 0.28, epsilon = 1e-12);

        assert!(encode_dps_train(&[], &p, &mut rng).is_err());
    }

    #[test]
    fn extinction_leakage() {
        let p = bb84_params();
        let z0 = encode_bb84_frame_with_phase(0, Basis::Z, 0, &p, 0.7).unwrap();
        let leaked = apply_extinction(z0.clone(), 30.0);
        let m = leaked.mean_photons();
        assert_eq!(m[0], z0.mean_photons()[0]);
        assert_abs_diff_eq!(m[1], 4.5e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(leaked.bins()[1].arg(), 0.7, epsilon = 1e-12);

        assert_eq!(apply_extinction(z0.clone(), f64::INFINITY), z0);

        let vac = PulseFrame::new(
            vec![Complex64::new(0.0, 0.0); 2],
            600e-12,
            1.2e-9,
            0,
            Symbol::Cow(CowSymbol::Bit0),
        )
        .unwrap();
        assert_eq!(apply_extinction(vac.clone(), 30.0), vac);
    }

    #[test]
    fn class_frequencies_match_probabilities() {
        let p = bb84_params();
        let mut rng = RngStream::new(11, 4);
        let n = 1_000_000;
        let mut counts = [0u64; 3];
        for _ in 0..n {
            counts[p.sample_class(rng.next_uniform())] += 1;
        }
        for (c, cls) in counts.iter().zip(&p.intensity_classes) {
            let q = cls.probability;
            let sigma = (n as f64 * q * (1.0 - q)).sqrt();
            assert!((*c as f64 - n as f64 * q).abs() < 3.0 * sigma, "{c} vs {q}");
        }
    }

    #[test]
    fn randomized_global_phase_has_no_preferred_direction() {
        let p = bb84_params();
        let mut rng = RngStream::new(5, 9);
        let n = 100_000;
        let mut acc = Complex64::new(0.0, 0.0);
        for _ in 0..n {
            let f = encode_bb84_frame(0, Basis::Z, 0, &p, &mut rng).unwrap();
            acc += Complex64::from_polar(1.0, f.reference_phase());
        }
        assert!((acc / n as f64).norm() < 0.02);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = bb84_params();
        p.intensity_classes[0].probability = 0.7;
        assert!(p.validate().is_err());
        let mut p = bb84_params();
        p.extinction_db = 0.0;
        assert!(p.validate().is_err());
        let mut p = bb84_params();
        p.intensity_classes[1].mean_photons = -0.1;
        assert!(p.validate().is_err());
        assert!(bb84_params().validate().is_ok());
    }

    proptest! {
        #[test]
        fn dps_bits_round_trip(bits in proptest::collection::vec(0u8..2, 1..64), phase in 0.0f64..TAU) {
            let p = TransmitterParams {
                intensity_classes: vec![IntensityClass::new("signal", 0.28, 1.0)],
                ..bb84_params()
            };
            let t = encode_dps_train_with_phase(&bits, &p, phase).unwrap();
            prop_assert_eq!(dps_bits_from_phases(&t), bits);
        }
    }
}
