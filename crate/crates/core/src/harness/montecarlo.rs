//! Event-level simulation of one batch of frames.
//!
//! Each batch owns an independent random stream `(seed, batch)` and a fresh
//! set of detector clocks. Batches are laid out on one global timeline with
//! an idle gap longer than the dead time between them, so the per-detector
//! dead-time guarantee holds across the whole run.

use num_complex::Complex64;
use rand::RngCore;

use crate::error::Result;
use crate::model::{Basis, CowSymbol, RngStream};
use crate::receiver::{assign_slot, detect, DetectionEvent, DetectorState, SlotDrive};
use crate::security::{sift_bb84, sift_cow, sift_dps, Bb84Truth, SiftedStats, COW_DATA};
use crate::transmitter::encode_dps_train;

use super::config::Protocol;
use super::link::{cow_index, Link, COW_SYMBOLS};

/// Frames per batch (DPS: slots, rounded down to whole trains).
pub const BATCH_FRAMES: u64 = 1 << 16;

pub(crate) struct BatchOutput {
    pub stats: SiftedStats,
    /// Every registered click, labelled or not, when requested.
    pub events: Vec<DetectionEvent>,
}

/// Precomputed slot means for the frame-level protocols.
pub(crate) enum Tables {
    Bb84(Vec<[[f64; 3]; 2]>),
    /// `[prev][cur][next]`, neighbours including "none" at index 3.
    Cow(Vec<[[f64; 2]; 3]>),
    Dps,
}

impl Tables {
    pub fn new(link: &Link) -> Result<Self> {
        Ok(match link.protocol {
            Protocol::Bb84 => {
                let mut t = Vec::new();
                for class in 0..link.tx.intensity_classes.len() {
                    for basis in [Basis::Z, Basis::X] {
                        for bit in 0..2 {
                            t.push(link.bb84_means(class, basis, bit, 0.0)?);
                        }
                    }
                }
                Tables::Bb84(t)
            }
            Protocol::Cow => {
                let mut t = Vec::with_capacity(48);
                let neighbours = [Some(COW_SYMBOLS[0]), Some(COW_SYMBOLS[1]), Some(COW_SYMBOLS[2]), None];
                for prev in neighbours {
                    for cur in COW_SYMBOLS {
                        for next in neighbours {
                            t.push(link.cow_means(prev, cur, next)?);
                        }
                    }
                }
                Tables::Cow(t)
            }
            Protocol::Dps => Tables::Dps,
        })
    }
}

/// Frames held by batch `b` of a run of `total` frames.
pub(crate) fn batch_span(link: &Link, total: u64, b: u64) -> (u64, u64) {
    let size = batch_size(link);
    let first = b * size;
    (first, size.min(total.saturating_sub(first)))
}

pub(crate) fn batch_size(link: &Link) -> u64 {
    match link.protocol {
        Protocol::Dps => {
            let l = link.tx.dps_train_pulses as u64;
            (BATCH_FRAMES / l).max(1) * l
        }
        _ => BATCH_FRAMES,
    }
}

/// Frames actually simulated for a request of `frames` (DPS rounds up to whole trains).
pub(crate) fn simulated_frames(link: &Link, frames: u64) -> u64 {
    match link.protocol {
        Protocol::Dps => {
            let l = link.tx.dps_train_pulses as u64;
            frames.div_ceil(l) * l
        }
        _ => frames,
    }
}

fn batch_origin(link: &Link, period: f64, b: u64) -> f64 {
    let guard = 2.0 * link.det.dead_time + 16.0 * period + 1e-9;
    b as f64 * (batch_size(link) as f64 * period + guard)
}

pub(crate) fn run_batch(
    link: &Link,
    tables: &Tables,
    seed: u64,
    b: u64,
    total: u64,
    collect: bool,
) -> Result<BatchOutput> {
    let (first, n) = batch_span(link, total, b);
    let mut rng = RngStream::new(seed, b);
    match tables {
        Tables::Bb84(t) => bb84(link, t, &mut rng, b, first, n, collect),
        Tables::Cow(t) => cow(link, t, &mut rng, b, first, n, collect),
        Tables::Dps => dps(link, &mut rng, b, first, n, collect),
    }
}

/// Runs one detector over a frame's slots, then labels what it registered.
#[allow(clippy::too_many_arguments)]
#[inline]
fn detect_frame(
    link: &Link,
    drives: &[SlotDrive],
    detector: u8,
    state: &mut DetectorState,
    rng: &mut RngStream,
    frame_start: f64,
    scratch: &mut Vec<DetectionEvent>,
    labelled: &mut Vec<DetectionEvent>,
    all: Option<&mut Vec<DetectionEvent>>,
) {
    scratch.clear();
    detect(drives, detector, &link.det, state, rng, scratch);
    if scratch.is_empty() {
        return;
    }
    if let Some(all) = all {
        all.extend_from_slice(scratch);
    }
    for e in scratch.iter() {
        if let Some(slot) =
            assign_slot(e.timestamp, frame_start, link.sep(), drives.len(), link.rx.slot_window)
        {
            labelled.push(DetectionEvent { slot, ..*e });
        }
    }
}

fn bb84(
    link: &Link,
    table: &[[[f64; 3]; 2]],
    rng: &mut RngStream,
    b: u64,
    first: u64,
    n: u64,
    collect: bool,
) -> Result<BatchOutput> {
    let period = link.tx.frame_period();
    let sep = link.sep();
    let t0 = batch_origin(link, period, b);
    let mut truths = Vec::with_capacity(n as usize);
    let mut labelled = Vec::new();
    let mut all = Vec::new();
    let mut scratch = Vec::with_capacity(4);
    let mut states = [DetectorState::default(); 2];
    for i in 0..n {
        let class = link.tx.sample_class(rng.next_uniform());
        let coin = rng.next_u64();
        let basis = if coin & 1 == 0 { Basis::Z } else { Basis::X };
        let bit = ((coin >> 1) & 1) as u8;
        truths.push(Bb84Truth { class, basis, bit });
        let means = &table[class * 4 + (coin & 1) as usize * 2 + bit as usize];
        let k = first + i;
        let start = t0 + i as f64 * period;
        for d in 0..2 {
            let drives: [SlotDrive; 3] = std::array::from_fn(|s| SlotDrive {
                frame_index: k,
                slot: s as u16,
                time: start + s as f64 * sep,
                mean_photons: means[d][s],
            });
            detect_frame(
                link,
                &drives,
                d as u8,
                &mut states[d],
                rng,
                start,
                &mut scratch,
                &mut labelled,
                collect.then_some(&mut all),
            );
        }
    }
    let stats = sift_bb84(&truths, first, &labelled, link.tx.intensity_classes.len())?;
    Ok(BatchOutput { stats, events: all })
}

fn cow(
    link: &Link,
    table: &[[[f64; 2]; 3]],
    rng: &mut RngStream,
    b: u64,
    first: u64,
    n: u64,
    collect: bool,
) -> Result<BatchOutput> {
    let period = link.tx.frame_period();
    let sep = link.sep();
    let t0 = batch_origin(link, period, b);
    let symbols: Vec<CowSymbol> =
        (0..n).map(|_| link.tx.sample_cow_symbol(rng.next_uniform())).collect();
    let mut data = Vec::new();
    let mut monitor = Vec::new();
    let mut all = Vec::new();
    let mut scratch = Vec::with_capacity(4);
    let mut states = [DetectorState::default(); 3];
    for (i, &cur) in symbols.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| symbols[j]);
        let next = symbols.get(i + 1).copied();
        let means = &table[(cow_index(prev) * 3 + cow_index(Some(cur))) * 4 + cow_index(next)];
        let k = first + i as u64;
        let start = t0 + i as f64 * period;
        for d in 0..3 {
            let drives: [SlotDrive; 2] = std::array::from_fn(|s| SlotDrive {
                frame_index: k,
                slot: s as u16,
                time: start + s as f64 * sep,
                mean_photons: means[d][s],
            });
            let out = if d as u8 == COW_DATA { &mut data } else { &mut monitor };
            detect_frame(
                link,
                &drives,
                d as u8,
                &mut states[d],
                rng,
                start,
                &mut scratch,
                out,
                collect.then_some(&mut all),
            );
        }
    }
    let stats = sift_cow(&symbols, first, None, &data, &monitor)?;
    Ok(BatchOutput { stats, events: all })
}

fn dps(
    link: &Link,
    rng: &mut RngStream,
    b: u64,
    first: u64,
    n: u64,
    collect: bool,
) -> Result<BatchOutput> {
    let sep = link.sep();
    let l = link.tx.dps_train_pulses;
    let t0 = batch_origin(link, sep, b);
    let amp = link.tx.class(0)?.mean_photons.sqrt();
    let trains = (n as usize) / l;
    let mut truths: Vec<Option<u8>> = Vec::with_capacity(n as usize);
    let mut labelled = Vec::new();
    let mut all = Vec::new();
    let mut train_events = Vec::new();
    let mut scratch = Vec::with_capacity(4);
    let mut states = [DetectorState::default(); 2];
    let mut drives = Vec::with_capacity(l);

    let random_pulse =
        |rng: &mut RngStream| Complex64::from_polar(amp, std::f64::consts::TAU * rng.next_uniform());
    let make_train = |rng: &mut RngStream| {
        let bits: Vec<u8> = (0..l - 1).map(|_| (rng.next_u64() & 1) as u8).collect();
        encode_dps_train(&bits, &link.tx, rng).map(|f| (bits, f))
    };

    let mut prev_last = random_pulse(rng);
    let mut cur = if trains > 0 { Some(make_train(rng)?) } else { None };
    for t in 0..trains {
        let (bits, train) = cur.take().expect("train generated ahead");
        let upcoming = if t + 1 < trains { Some(make_train(rng)?) } else { None };
        let next_first = match &upcoming {
            Some((_, f)) => f.bins()[0],
            None => random_pulse(rng),
        };
        let means = link.dps_train_means(prev_last, &train, next_first)?;
        truths.push(None);
        truths.extend(bits.iter().map(|&bit| Some(bit)));

        let base = first + (t * l) as u64;
        let train_start = t0 + (t * l) as f64 * sep;
        train_events.clear();
        for (d, port) in means.iter().enumerate() {
            drives.clear();
            drives.extend(port.iter().enumerate().map(|(j, &m)| SlotDrive {
                frame_index: base + j as u64,
                slot: 0,
                time: train_start + j as f64 * sep,
                mean_photons: m,
            }));
            scratch.clear();
            detect(&drives, d as u8, &link.det, &mut states[d], rng, &mut scratch);
            if collect {
                all.extend_from_slice(&scratch);
            }
            for e in &scratch {
                let centre = train_start + (e.frame_index - base) as f64 * sep;
                if assign_slot(e.timestamp, centre, sep, 1, link.rx.slot_window).is_some() {
                    train_events.push(*e);
                }
            }
        }
        train_events.sort_by_key(|e| (e.frame_index, e.detector));
        labelled.extend_from_slice(&train_events);
        prev_last = *train.bins().last().expect("train is non-empty");
        cur = upcoming;
    }
    let stats = sift_dps(&truths, first, &labelled)?;
    Ok(BatchOutput { stats, events: all })
}
