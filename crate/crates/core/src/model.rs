//! Domain primitives shared by every stage of the link.

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};

/// Field amplitude of one time bin; the mean photon number is `|a|²`.
pub type ComplexAmplitude = Complex64;

/// Mean photon number carried by an amplitude.
#[inline]
pub fn mean_photons(a: ComplexAmplitude) -> f64 {
    a.norm_sqr()
}

/// Index into a transmitter's list of intensity classes.
pub type ClassId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// Time of arrival: `|0⟩` early bin, `|1⟩` late bin.
    Z,
    /// Relative phase between the two bins: `|+⟩` 0, `|−⟩` π.
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CowSymbol {
    Bit0,
    Bit1,
    Decoy,
}

impl CowSymbol {
    /// Key bit carried by the symbol; decoys carry none.
    pub fn bit(self) -> Option<u8> {
        match self {
            CowSymbol::Bit0 => Some(0),
            CowSymbol::Bit1 => Some(1),
            CowSymbol::Decoy => None,
        }
    }

    pub fn first_bin_occupied(self) -> bool {
        matches!(self, CowSymbol::Bit0 | CowSymbol::Decoy)
    }

    pub fn second_bin_occupied(self) -> bool {
        matches!(self, CowSymbol::Bit1 | CowSymbol::Decoy)
    }
}

/// The symbol a frame was prepared with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Symbol {
    Bb84 { bit: u8, basis: Basis },
    Cow(CowSymbol),
    /// Phase-difference bits of a DPS train; bit `i` lives between bins `i` and `i + 1`.
    Dps { bits: Vec<u8> },
}

/// A run of time bins emitted as one unit (a BB84 or COW frame, a DPS train).
#[derive(Clone, Debug, PartialEq)]
pub struct PulseFrame {
    pub(crate) bins: Vec<ComplexAmplitude>,
    pub(crate) bin_separation: f64,
    pub(crate) frame_period: f64,
    pub(crate) global_phase_randomized: bool,
    /// Phase of the frame's optical reference; leakage light is emitted with it.
    pub(crate) reference_phase: f64,
    pub(crate) intensity_class: ClassId,
    pub(crate) truth: Symbol,
}

impl PulseFrame {
    pub fn new(
        bins: Vec<ComplexAmplitude>,
        bin_separation: f64,
        frame_period: f64,
        intensity_class: ClassId,
        truth: Symbol,
    ) -> Result<Self> {
        if bins.is_empty() {
            return Err(QkdError::domain("pulse frame needs at least one bin"));
        }
        if !(bin_separation > 0.0 && bin_separation.is_finite()) {
            return Err(QkdError::domain(format!(
                "bin separation must be positive, got {bin_separation}"
            )));
        }
        // Relative slack absorbs period = n * separation computed in floating point.
        let span = bins.len() as f64 * bin_separation;
        if !(frame_period >= span * (1.0 - 1e-9)) {
            return Err(QkdError::domain(format!(
                "frame period {frame_period:e} s shorter than {} bins x {bin_separation:e} s",
                bins.len()
            )));
        }
        if bins.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(QkdError::domain("non-finite amplitude in pulse frame"));
        }
        Ok(PulseFrame {
            bins,
            bin_separation,
            frame_period,
            global_phase_randomized: false,
            reference_phase: 0.0,
            intensity_class,
            truth,
        })
    }

    pub(crate) fn with_reference_phase(mut self, phase: f64, randomized: bool) -> Self {
        let rot = Complex64::from_polar(1.0, phase);
        for b in &mut self.bins {
            *b *= rot;
        }
        self.reference_phase = phase;
        self.global_phase_randomized = randomized;
        self
    }

    pub fn bins(&self) -> &[ComplexAmplitude] {
        &self.bins
    }

    pub fn bin_separation(&self) -> f64 {
        self.bin_separation
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn global_phase_randomized(&self) -> bool {
        self.global_phase_randomized
    }

    pub fn reference_phase(&self) -> f64 {
        self.reference_phase
    }

    pub fn intensity_class(&self) -> ClassId {
        self.intensity_class
    }

    pub fn truth(&self) -> &Symbol {
        &self.truth
    }

    pub fn mean_photons(&self) -> Vec<f64> {
        self.bins.iter().map(|&a| mean_photons(a)).collect()
    }

    pub fn total_mean_photons(&self) -> f64 {
        self.bins.iter().map(|&a| mean_photons(a)).sum()
    }

    /// Concatenates frames emitted back to back into one continuous stream.
    ///
    /// All frames must share the bin separation and tile time without gaps,
    /// i.e. each frame period equals its bin count times the separation.
    pub fn concat(frames: &[PulseFrame]) -> Result<PulseFrame> {
        let first = frames
            .first()
            .ok_or_else(|| QkdError::domain("cannot concatenate zero frames"))?;
        let sep = first.bin_separation;
        let mut bins = Vec::with_capacity(frames.iter().map(|f| f.bins.len()).sum());
        for f in frames {
            if (f.bin_separation - sep).abs() > 1e-9 * sep {
                return Err(QkdError::domain("frames with differing bin separation"));
            }
            bins.extend_from_slice(&f.bins);
        }
        let period = bins.len() as f64 * sep;
        let mut out = PulseFrame::new(bins, sep, period, first.intensity_class, first.truth.clone())?;
        out.global_phase_randomized = first.global_phase_randomized;
        out.reference_phase = first.reference_phase;
        Ok(out)
    }
}

/// Reproducible uniform random stream keyed by `(seed, stream_id)`.
///
/// Backed by the ChaCha8 counter-mode generator: the stream id selects an
/// independent keystream, so batches can be drawn in any order or on any
/// worker and still reproduce bit for bit.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Value-style advance: returns the draw together with the advanced stream.
    pub fn advance(mut self) -> (f64, Self) {
        let u = self.next_uniform();
        (u, self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Shannon entropy of a Bernoulli(x) variable, in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(QkdError::domain(format!("binary entropy needs x in [0,1], got {x}")));
    }
    Ok(h2(x))
}

/// Unchecked binary entropy for inputs already known to be probabilities.
#[inline]
pub(crate) fn h2(x: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    term(x) + term(1.0 - x)
}

/// Power transmission of a loss given in decibels.
pub fn db_to_transmission(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(QkdError::domain(format!("loss must be non-negative, got {loss_db} dB")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Same as [`db_to_transmission`] for values validated upstream.
#[inline]
pub(crate) fn db_to_power(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}
