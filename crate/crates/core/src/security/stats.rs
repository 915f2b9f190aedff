use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};

/// Counts are held as `f64` so that the analytic mode can fill the same
/// structure with expected counts. Integer counts stay exact up to 2^53.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BasisCounts {
    pub sifted: f64,
    pub errors: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    /// Frames (or key-bearing slots) sent in this class.
    pub frames: f64,
    /// Frames with at least one labelled detection.
    pub detections: f64,
    /// Frames kept after sifting.
    pub sifted: f64,
    pub errors: f64,
    pub z: BasisCounts,
    pub x: BasisCounts,
}

impl ClassCounts {
    fn merge(&mut self, o: &ClassCounts) {
        self.frames += o.frames;
        self.detections += o.detections;
        self.sifted += o.sifted;
        self.errors += o.errors;
        self.z.sifted += o.z.sifted;
        self.z.errors += o.z.errors;
        self.x.sifted += o.x.sifted;
        self.x.errors += o.x.errors;
    }

    pub fn gain(&self) -> Estimate {
        Estimate::binomial(self.detections, self.frames)
    }

    pub fn error_rate(&self) -> Estimate {
        Estimate::binomial(self.errors, self.sifted)
    }

    pub fn sifted_fraction(&self) -> Estimate {
        Estimate::binomial(self.sifted, self.detections)
    }
}

/// Interference maxima and minima seen by the phase monitor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InterferenceCounts {
    pub constructive: f64,
    pub destructive: f64,
}

/// Mergeable tallies of one batch (or one analytic evaluation).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SiftedStats {
    pub classes: Vec<ClassCounts>,
    /// Every frame emitted, key-bearing or not.
    pub frames_sent: f64,
    /// Frames with at least one key-line detection.
    pub raw_detections: f64,
    /// Frames discarded for carrying more than one detection.
    pub multi_event_frames: f64,
    pub interference: InterferenceCounts,
}

impl SiftedStats {
    pub fn with_classes(n: usize) -> Self {
        SiftedStats { classes: vec![ClassCounts::default(); n], ..Default::default() }
    }

    /// Adds another tally; the operation is associative and commutative.
    pub fn merge(&mut self, other: &SiftedStats) {
        if self.classes.len() < other.classes.len() {
            self.classes.resize(other.classes.len(), ClassCounts::default());
        }
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.merge(b);
        }
        self.frames_sent += other.frames_sent;
        self.raw_detections += other.raw_detections;
        self.multi_event_frames += other.multi_event_frames;
        self.interference.constructive += other.interference.constructive;
        self.interference.destructive += other.interference.destructive;
    }

    pub fn total(&self) -> ClassCounts {
        let mut t = ClassCounts::default();
        for c in &self.classes {
            t.merge(c);
        }
        t
    }

    /// Checks `errors <= sifted <= detections <= frames` for every class.
    pub fn check(&self) -> Result<()> {
        // Expected counts carry rounding noise; integers compare exactly.
        let le = |a: f64, b: f64| a <= b + 1e-9 * b.abs().max(1.0);
        for (i, c) in self.classes.iter().enumerate() {
            if !(le(c.errors, c.sifted) && le(c.sifted, c.detections) && le(c.detections, c.frames)) {
                return Err(QkdError::Estimation(format!("inconsistent counts in class {i}: {c:?}")));
            }
        }
        Ok(())
    }
}

/// A fraction with its binomial standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    /// `k / n` with the Wald standard error; zero trials give zero.
    pub fn binomial(k: f64, n: f64) -> Self {
        if n <= 0.0 {
            return Estimate::default();
        }
        let p = k / n;
        Estimate { value: p, std_err: (p * (1.0 - p) / n).max(0.0).sqrt() }
    }

    /// Half-width of the symmetric interval at `z` standard errors.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.value - z * self.std_err, self.value + z * self.std_err)
    }
}
