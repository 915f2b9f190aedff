//! Deterministic optics shared by the Monte Carlo and analytic runners:
//! encoder, extinction, fibre, receiver front end, AMZI and slot crosstalk,
//! ending in per-detector slot means.

use num_complex::Complex64;

use crate::channel::{apply_channel, scale_power, ChannelParams};
use crate::error::{QkdError, Result};
use crate::model::{db_to_power, Basis, ClassId, CowSymbol, PulseFrame, Symbol};
use crate::receiver::{
    amzi_transform, apply_slot_crosstalk, route_tbs, timing_acceptance, DetectorParams,
    ReceiverParams,
};
use crate::security::Bb84Truth;
use crate::transmitter::{
    apply_extinction, encode_bb84_frame_with_phase, encode_cow_frame, TransmitterParams,
};

use super::config::{ExperimentConfig, Protocol};

pub(crate) struct Link {
    pub protocol: Protocol,
    pub tx: TransmitterParams,
    pub channel: ChannelParams,
    pub rx: ReceiverParams,
    pub det: DetectorParams,
    pub crosstalk: f64,
    /// Probability that a jittered click stays inside its slot window.
    pub acceptance: f64,
}

/// What a frame type was prepared as, in the form its sifting rule needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum TypeTruth {
    Bb84(Bb84Truth),
    Cow { prev: Option<CowSymbol>, cur: CowSymbol },
    Dps(Option<u8>),
}

/// One kind of frame with its emission probability and slot means,
/// indexed `[detector][slot]`.
#[derive(Clone, Debug)]
pub(crate) struct FrameType {
    pub prob: f64,
    pub means: Vec<Vec<f64>>,
    pub truth: TypeTruth,
}

/// A stationary frame source: frames of `period` with slots at
/// `slot_offsets`, drawn from `types`.
#[derive(Clone, Debug)]
pub(crate) struct TypeTable {
    pub period: f64,
    pub slot_offsets: Vec<f64>,
    pub types: Vec<FrameType>,
}

pub(crate) const COW_SYMBOLS: [CowSymbol; 3] = [CowSymbol::Bit0, CowSymbol::Bit1, CowSymbol::Decoy];

pub(crate) fn cow_index(s: Option<CowSymbol>) -> usize {
    match s {
        Some(CowSymbol::Bit0) => 0,
        Some(CowSymbol::Bit1) => 1,
        Some(CowSymbol::Decoy) => 2,
        None => 3,
    }
}

impl Link {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let det = cfg.detector_params();
        Ok(Link {
            protocol: cfg.protocol,
            tx: cfg.transmitter.clone(),
            channel: cfg.channel.clone(),
            rx: cfg.receiver.clone(),
            crosstalk: cfg.crosstalk(),
            acceptance: timing_acceptance(det.jitter_sigma, cfg.receiver.slot_window),
            det,
        })
    }

    pub fn sep(&self) -> f64 {
        self.tx.bin_separation
    }

    /// Fibre and receiver insertion loss.
    fn front(&self, frame: PulseFrame) -> PulseFrame {
        scale_power(apply_channel(frame, &self.channel), db_to_power(self.rx.insertion_loss_db))
    }

    /// Both AMZI ports after crosstalk, all output slots.
    fn interfere(&self, frame: &PulseFrame) -> Result<[Vec<f64>; 2]> {
        let out = amzi_transform(frame, 1, self.rx.amzi_phase, self.rx.amzi_arm_imbalance_db)?;
        let mut ports = [out.mean_photons(0), out.mean_photons(1)];
        for p in &mut ports {
            apply_slot_crosstalk(p, self.crosstalk);
        }
        Ok(ports)
    }

    /// Slot means `[port][early, middle, late]` of one BB84 state.
    pub fn bb84_means(&self, class: ClassId, basis: Basis, bit: u8, phase: f64) -> Result<[[f64; 3]; 2]> {
        let f = encode_bb84_frame_with_phase(bit, basis, class, &self.tx, phase)?;
        let f = self.front(apply_extinction(f, self.tx.extinction_db));
        let (_, amzi) = route_tbs(f, self.rx.tbs_monitor_fraction);
        let ports = self.interfere(&amzi)?;
        let mut m = [[0.0; 3]; 2];
        for (d, p) in ports.iter().enumerate() {
            m[d].copy_from_slice(&p[..3]);
        }
        Ok(m)
    }

    /// Slot means `[detector][slot]` of the middle frame of a COW triple.
    ///
    /// `None` neighbours are empty frames (stream edges). Detector 0 is the
    /// data line, 1 and 2 the constructive and destructive monitor ports.
    pub fn cow_means(
        &self,
        prev: Option<CowSymbol>,
        cur: CowSymbol,
        next: Option<CowSymbol>,
    ) -> Result<[[f64; 2]; 3]> {
        let frame = |s: Option<CowSymbol>| -> Result<PulseFrame> {
            match s {
                Some(s) => Ok(apply_extinction(encode_cow_frame(s, &self.tx)?, self.tx.extinction_db)),
                None => PulseFrame::new(
                    vec![Complex64::new(0.0, 0.0); 2],
                    self.sep(),
                    2.0 * self.sep(),
                    0,
                    Symbol::Cow(cur),
                ),
            }
        };
        let stream = PulseFrame::concat(&[frame(prev)?, frame(Some(cur))?, frame(next)?])?;
        let (data, amzi) = route_tbs(self.front(stream), self.rx.tbs_monitor_fraction);
        let mut key = data.mean_photons();
        apply_slot_crosstalk(&mut key, self.crosstalk);
        // AMZI slot w holds bins w and w-1: slot 2 straddles the frame
        // boundary, slot 3 the pair itself.
        let ports = self.interfere(&amzi)?;
        Ok([[key[2], key[3]], [ports[0][2], ports[0][3]], [ports[1][2], ports[1][3]]])
    }

    /// Port means of a DPS slot whose pulse pair has phase factor `steps[1]`,
    /// with neighbouring slots at `steps[0]` and `steps[2]` feeding crosstalk.
    pub fn dps_window_means(&self, steps: [Complex64; 3]) -> Result<[f64; 2]> {
        let amp = self.tx.class(0)?.mean_photons.sqrt();
        let mut bins = vec![Complex64::new(amp, 0.0)];
        for s in steps {
            let last = *bins.last().unwrap_or(&Complex64::new(amp, 0.0));
            bins.push(last * s);
        }
        let n = bins.len() as f64;
        let f = PulseFrame::new(bins, self.sep(), n * self.sep(), 0, Symbol::Dps { bits: Vec::new() })?;
        let (_, amzi) = route_tbs(self.front(f), self.rx.tbs_monitor_fraction);
        let ports = self.interfere(&amzi)?;
        Ok([ports[0][2], ports[1][2]])
    }

    /// Port means for every slot of a DPS train.
    ///
    /// Slot `j` interferes bins `j-1` and `j`; slot 0 pairs the first bin with
    /// `prev_last`, the last bin of the preceding train. `next_first` only
    /// feeds crosstalk into the final slot.
    pub fn dps_train_means(
        &self,
        prev_last: Complex64,
        train: &PulseFrame,
        next_first: Complex64,
    ) -> Result<[Vec<f64>; 2]> {
        let l = train.bins().len();
        let mut bins = Vec::with_capacity(l + 2);
        bins.push(prev_last);
        bins.extend_from_slice(train.bins());
        bins.push(next_first);
        let n = bins.len() as f64;
        let f = PulseFrame::new(bins, self.sep(), n * self.sep(), 0, Symbol::Dps { bits: Vec::new() })?;
        let (_, amzi) = route_tbs(self.front(f), self.rx.tbs_monitor_fraction);
        let [mut p0, mut p1] = self.interfere(&amzi)?;
        // Window slot j + 1 is train slot j.
        p0.truncate(l + 1);
        p0.remove(0);
        p1.truncate(l + 1);
        p1.remove(0);
        Ok([p0, p1])
    }

    pub fn table(&self) -> Result<TypeTable> {
        match self.protocol {
            Protocol::Bb84 => self.bb84_table(),
            Protocol::Cow => self.cow_table(),
            Protocol::Dps => self.dps_table(),
        }
    }

    /// Index `class * 4 + basis * 2 + bit`.
    pub fn bb84_table(&self) -> Result<TypeTable> {
        let mut types = Vec::with_capacity(self.tx.intensity_classes.len() * 4);
        for (class, c) in self.tx.intensity_classes.iter().enumerate() {
            for basis in [Basis::Z, Basis::X] {
                for bit in 0..2u8 {
                    let m = self.bb84_means(class, basis, bit, 0.0)?;
                    types.push(FrameType {
                        prob: c.probability * 0.25,
                        means: m.iter().map(|r| r.to_vec()).collect(),
                        truth: TypeTruth::Bb84(Bb84Truth { class, basis, bit }),
                    });
                }
            }
        }
        let sep = self.sep();
        Ok(TypeTable { period: self.tx.frame_period(), slot_offsets: vec![0.0, sep, 2.0 * sep], types })
    }

    /// All symbol triples of an endless stream.
    pub fn cow_table(&self) -> Result<TypeTable> {
        let p = |s: CowSymbol| {
            let pd = self.tx.cow_decoy_probability;
            if s == CowSymbol::Decoy {
                pd
            } else {
                (1.0 - pd) / 2.0
            }
        };
        let mut types = Vec::with_capacity(27);
        for prev in COW_SYMBOLS {
            for cur in COW_SYMBOLS {
                for next in COW_SYMBOLS {
                    let m = self.cow_means(Some(prev), cur, Some(next))?;
                    types.push(FrameType {
                        prob: p(prev) * p(cur) * p(next),
                        means: m.iter().map(|r| r.to_vec()).collect(),
                        truth: TypeTruth::Cow { prev: Some(prev), cur },
                    });
                }
            }
        }
        Ok(TypeTable { period: self.tx.frame_period(), slot_offsets: vec![0.0, self.sep()], types })
    }

    /// Interior slots by phase-bit triple, plus the train edge slot.
    ///
    /// The edge slot sees a uniformly random phase step; averaging the steps
    /// `±π/2` reproduces its phase-averaged means exactly. Crosstalk between
    /// the edge and its neighbours is approximated by interior values.
    pub fn dps_table(&self) -> Result<TypeTable> {
        let l = self.tx.dps_train_pulses as f64;
        let sign = |b: u8| Complex64::new(if b == 1 { -1.0 } else { 1.0 }, 0.0);
        let mut types = Vec::with_capacity(10);
        for code in 0..8u8 {
            let bits = [code & 1, (code >> 1) & 1, (code >> 2) & 1];
            let m = self.dps_window_means(bits.map(sign))?;
            types.push(FrameType {
                prob: (l - 1.0) / l / 8.0,
                means: m.iter().map(|&x| vec![x]).collect(),
                truth: TypeTruth::Dps(Some(bits[1])),
            });
        }
        for s in [Complex64::i(), -Complex64::i()] {
            let m = self.dps_window_means([sign(0), s, sign(0)])?;
            types.push(FrameType {
                prob: 1.0 / l / 2.0,
                means: m.iter().map(|&x| vec![x]).collect(),
                truth: TypeTruth::Dps(None),
            });
        }
        Ok(TypeTable { period: self.sep(), slot_offsets: vec![0.0], types })
    }
}

impl TypeTable {
    pub fn check(&self) -> Result<()> {
        let total: f64 = self.types.iter().map(|t| t.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(QkdError::Estimation(format!("frame type probabilities sum to {total}")));
        }
        Ok(())
    }
}
