use num_complex::Complex64;
use statrs::function::erf::erf;

use crate::channel::scale_power;
use crate::error::{QkdError, Result};
use crate::model::{ComplexAmplitude, PulseFrame};

/// Delay line granularity.
pub const DELAY_STEP: f64 = 300e-12;
pub const MAX_DELAY_STEPS: u8 = 7;
/// Largest accepted mismatch between the delay line and the bin spacing.
pub const DELAY_TOLERANCE: f64 = 50e-12;

/// Tunable beamsplitter: `(data_line, interferometer)`.
///
/// The interferometer arm receives power fraction `amzi_fraction`, the data
/// line the remainder.
pub fn route_tbs(frame: PulseFrame, amzi_fraction: f64) -> (PulseFrame, PulseFrame) {
    debug_assert!((0.0..=1.0).contains(&amzi_fraction));
    let data = scale_power(frame.clone(), 1.0 - amzi_fraction);
    let amzi = scale_power(frame, amzi_fraction);
    (data, amzi)
}

/// Port amplitudes of the AMZI, one entry per output slot.
///
/// Port 0 (`+`) is constructive for equal-phase neighbours at zero
/// interferometer phase, port 1 (`-`) destructive.
#[derive(Clone, Debug, PartialEq)]
pub struct AmziOutput {
    pub ports: [Vec<ComplexAmplitude>; 2],
}

impl AmziOutput {
    pub fn slot_count(&self) -> usize {
        self.ports[0].len()
    }

    pub fn mean_photons(&self, port: usize) -> Vec<f64> {
        self.ports[port].iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn total_mean_photons(&self) -> f64 {
        self.ports.iter().flatten().map(|a| a.norm_sqr()).sum()
    }
}

/// Asymmetric Mach-Zehnder with a delay of `delay_bins` bins.
///
/// Output slot `s` of an `n`-bin input (`n + delay_bins` slots in total)
/// carries `(g1 a[s] ± e^{iφ} g2 a[s - delay_bins]) / 2`, with out-of-range
/// bins empty and the delayed arm attenuated by `imbalance_db`.
pub fn amzi_transform(
    frame: &PulseFrame,
    delay_bins: usize,
    phase: f64,
    imbalance_db: f64,
) -> Result<AmziOutput> {
    let delay = delay_bins as f64 * frame.bin_separation();
    let steps = (delay / DELAY_STEP).round();
    if steps > f64::from(MAX_DELAY_STEPS) || (steps * DELAY_STEP - delay).abs() > DELAY_TOLERANCE {
        return Err(QkdError::config(format!(
            "AMZI delay of {delay_bins} bins ({:.0} ps) is off the 300 ps delay-line grid",
            delay * 1e12
        )));
    }
    let n = frame.bins().len();
    let g_long = 10f64.powf(-imbalance_db / 20.0);
    let rot = Complex64::from_polar(0.5 * g_long, phase);
    let mut plus = Vec::with_capacity(n + delay_bins);
    let mut minus = Vec::with_capacity(n + delay_bins);
    let bins = frame.bins();
    for s in 0..n + delay_bins {
        let short = if s < n { bins[s] * 0.5 } else { Complex64::new(0.0, 0.0) };
        let long = if s >= delay_bins && s - delay_bins < n {
            bins[s - delay_bins] * rot
        } else {
            Complex64::new(0.0, 0.0)
        };
        plus.push(short + long);
        minus.push(short - long);
    }
    Ok(AmziOutput { ports: [plus, minus] })
}

/// Moves a fraction `prob` of each slot's mean photon number to its
/// neighbours, half to each side.
///
/// For Poissonian light this is the same as reassigning every photon to an
/// adjacent slot with probability `prob`. Light pushed past either end of the
/// slice is lost.
pub fn apply_slot_crosstalk(means: &mut [f64], prob: f64) {
    if prob == 0.0 || means.is_empty() {
        return;
    }
    let half = 0.5 * prob;
    let mut prev = 0.0;
    let n = means.len();
    for s in 0..n {
        let cur = means[s];
        let next = if s + 1 < n { means[s + 1] } else { 0.0 };
        means[s] = (1.0 - prob) * cur + half * (prev + next);
        prev = cur;
    }
}

/// Probability that an arrival lands in a neighbouring slot's window.
///
/// Arrival time spread combines detector jitter with the Gaussian-equivalent
/// width of the optical pulse.
pub fn derived_slot_crosstalk(
    jitter_sigma: f64,
    pulse_fwhm: f64,
    bin_separation: f64,
    slot_window: f64,
) -> f64 {
    let pulse_sigma = pulse_fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
    let sigma = jitter_sigma.hypot(pulse_sigma);
    if sigma == 0.0 {
        return 0.0;
    }
    let cdf = |x: f64| 0.5 * (1.0 + erf(x / (sigma * std::f64::consts::SQRT_2)));
    let lo = bin_separation - slot_window / 2.0;
    let hi = bin_separation + slot_window / 2.0;
    2.0 * (cdf(hi) - cdf(lo))
}
