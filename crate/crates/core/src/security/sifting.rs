use crate::error::{QkdError, Result};
use crate::model::{Basis, ClassId, CowSymbol};
use crate::receiver::{DetectionEvent, EARLY, LATE, MIDDLE};

use super::stats::{Estimate, SiftedStats};

/// COW detector ids: data line, then the two monitor interferometer ports.
pub const COW_DATA: u8 = 0;
pub const COW_MONITOR_PLUS: u8 = 1;
pub const COW_MONITOR_MINUS: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bb84Truth {
    pub class: ClassId,
    pub basis: Basis,
    pub bit: u8,
}

/// Splits frame-ordered events into per-frame groups.
fn by_frame(events: &[DetectionEvent]) -> impl Iterator<Item = &[DetectionEvent]> {
    events.chunk_by(|a, b| a.frame_index == b.frame_index)
}

fn local_index(frame_index: u64, first_frame: u64, len: usize) -> Result<usize> {
    frame_index
        .checked_sub(first_frame)
        .map(|i| i as usize)
        .filter(|&i| i < len)
        .ok_or_else(|| QkdError::Estimation(format!("event for unknown frame {frame_index}")))
}

/// BB84 sifting with passive basis choice.
///
/// `truths[i]` describes frame `first_frame + i`; `events` carry slot labels
/// and must be sorted by frame. Early/late slots measure Z (bit = slot),
/// the middle slot measures X (bit = detector). Frames with more than one
/// event are discarded.
pub fn sift_bb84(
    truths: &[Bb84Truth],
    first_frame: u64,
    events: &[DetectionEvent],
    n_classes: usize,
) -> Result<SiftedStats> {
    let mut st = SiftedStats::with_classes(n_classes);
    st.frames_sent = truths.len() as f64;
    for t in truths {
        st.classes
            .get_mut(t.class)
            .ok_or_else(|| QkdError::Estimation(format!("class {} out of range", t.class)))?
            .frames += 1.0;
    }
    for group in by_frame(events) {
        let truth = truths[local_index(group[0].frame_index, first_frame, truths.len())?];
        let c = &mut st.classes[truth.class];
        c.detections += 1.0;
        st.raw_detections += 1.0;
        if group.len() > 1 {
            st.multi_event_frames += 1.0;
            continue;
        }
        let ev = group[0];
        let (basis, bit) = match ev.slot {
            EARLY => (Basis::Z, 0),
            LATE => (Basis::Z, 1),
            MIDDLE => (Basis::X, ev.detector),
            _ => continue,
        };
        if basis != truth.basis {
            continue;
        }
        let wrong = f64::from(u8::from(bit != truth.bit));
        c.sifted += 1.0;
        c.errors += wrong;
        let b = if basis == Basis::Z { &mut c.z } else { &mut c.x };
        b.sifted += 1.0;
        b.errors += wrong;
        // An X-basis result at the port the state should exit is an
        // interference maximum; the other port sees the minimum.
        if basis == Basis::X {
            if bit == truth.bit {
                st.interference.constructive += 1.0;
            } else {
                st.interference.destructive += 1.0;
            }
        }
    }
    Ok(st)
}

/// COW sifting: key from the data line, coherence from the monitor.
///
/// Class 0 counts bit frames, class 1 decoy frames. Data-line events in bin
/// `k` decode to bit `k`; decoy frames are excluded from the key. Monitor
/// events are tallied only in slots where both interfering pulses were
/// emitted: the inner slot of a decoy and the boundary between a pair ending
/// in a pulse and a pair starting with one. `previous` is the symbol sent
/// just before `first_frame`, if any.
pub fn sift_cow(
    truths: &[CowSymbol],
    first_frame: u64,
    previous: Option<CowSymbol>,
    data_events: &[DetectionEvent],
    monitor_events: &[DetectionEvent],
) -> Result<SiftedStats> {
    let mut st = SiftedStats::with_classes(2);
    st.frames_sent = truths.len() as f64;
    for t in truths {
        st.classes[usize::from(*t == CowSymbol::Decoy)].frames += 1.0;
    }
    for group in by_frame(data_events) {
        let sym = truths[local_index(group[0].frame_index, first_frame, truths.len())?];
        let c = &mut st.classes[usize::from(sym == CowSymbol::Decoy)];
        c.detections += 1.0;
        st.raw_detections += 1.0;
        if group.len() > 1 {
            st.multi_event_frames += 1.0;
            continue;
        }
        let Some(bit) = sym.bit() else { continue };
        let wrong = f64::from(u8::from(group[0].slot != u16::from(bit)));
        c.sifted += 1.0;
        c.errors += wrong;
        c.z.sifted += 1.0;
        c.z.errors += wrong;
    }
    for ev in monitor_events {
        let k = local_index(ev.frame_index, first_frame, truths.len())?;
        let sym = truths[k];
        let interfering = match ev.slot {
            0 => {
                let prev = if k == 0 { previous } else { Some(truths[k - 1]) };
                prev.is_some_and(|p| p.second_bin_occupied()) && sym.first_bin_occupied()
            }
            1 => sym == CowSymbol::Decoy,
            _ => false,
        };
        if !interfering {
            continue;
        }
        match ev.detector {
            COW_MONITOR_PLUS => st.interference.constructive += 1.0,
            COW_MONITOR_MINUS => st.interference.destructive += 1.0,
            _ => {}
        }
    }
    Ok(st)
}

/// DPS sifting: one key bit per interior slot, read from the detector port.
///
/// `truths[i]` is the phase bit decoded in slot `first_frame + i`, or `None`
/// for train-edge slots that carry no key. Edge detections still count
/// toward the raw rate.
pub fn sift_dps(
    truths: &[Option<u8>],
    first_frame: u64,
    events: &[DetectionEvent],
) -> Result<SiftedStats> {
    let mut st = SiftedStats::with_classes(1);
    st.frames_sent = truths.len() as f64;
    st.classes[0].frames = truths.iter().filter(|t| t.is_some()).count() as f64;
    for group in by_frame(events) {
        st.raw_detections += 1.0;
        let Some(bit) = truths[local_index(group[0].frame_index, first_frame, truths.len())?] else {
            continue;
        };
        let c = &mut st.classes[0];
        c.detections += 1.0;
        if group.len() > 1 {
            st.multi_event_frames += 1.0;
            continue;
        }
        let wrong = group[0].detector != bit;
        c.sifted += 1.0;
        c.x.sifted += 1.0;
        if wrong {
            c.errors += 1.0;
            c.x.errors += 1.0;
            st.interference.destructive += 1.0;
        } else {
            st.interference.constructive += 1.0;
        }
    }
    Ok(st)
}

/// Interference visibility `(max - min) / (max + min)` with its binomial error.
pub fn estimate_visibility(max_counts: f64, min_counts: f64) -> Result<Estimate> {
    let n = max_counts + min_counts;
    if !(n > 0.0) || max_counts < 0.0 || min_counts < 0.0 {
        return Err(QkdError::Estimation(format!(
            "visibility needs positive counts, got max {max_counts} min {min_counts}"
        )));
    }
    let p_min = Estimate::binomial(min_counts, n);
    Ok(Estimate { value: (max_counts - min_counts) / n, std_err: 2.0 * p_min.std_err })
}
