//! Expected counts in closed form.
//!
//! Every frame type's slot means come from the same optics as the Monte
//! Carlo. Detector clicks are Poissonian; dead time is folded in through a
//! stationary model: a detector is dead at a slot with the probability that
//! one of its registered clicks from earlier frames lies within the dead
//! time, and within a frame only the first live click registers. Detectors
//! are taken as independent given the frame type. Each resulting outcome is
//! pushed through the protocol's sifting rule and weighted by its
//! probability, so both modes share one analysis layer.

use statrs::function::erf::erfc;

use crate::error::{QkdError, Result};
use crate::receiver::{click_probability, DetectionEvent};
use crate::security::SiftedStats;

use super::link::{Link, TypeTable, TypeTruth};

/// Per-detector outcome within one frame: the labelled slots and their probability.
struct Pattern {
    prob: f64,
    slots: Vec<u16>,
}

/// Probability that a click `gap` seconds after a registered one falls
/// inside the dead time, given jitter on both timestamps.
fn blocked(gap: f64, dead_time: f64, jitter: f64) -> f64 {
    if jitter == 0.0 {
        return if gap < dead_time { 1.0 } else { 0.0 };
    }
    // P(gap + σ(z2 - z1) < τ) with z2 - z1 ~ N(0, 2).
    0.5 * erfc((gap - dead_time) / (2.0 * jitter))
}

/// Registration probabilities `[type][detector][slot]` under dead time.
fn registrations(link: &Link, table: &TypeTable, clicks: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let (tau, sigma) = (link.det.dead_time, link.det.jitter_sigma);
    let n_det = clicks[0].len();
    let n_slots = table.slot_offsets.len();
    let reach = tau + 12.0 * sigma;
    let frames_back = (reach / table.period).ceil() as usize + 1;

    let mut mean: Vec<Vec<f64>> = vec![vec![0.0; n_slots]; n_det];
    for (t, c) in table.types.iter().zip(clicks) {
        for d in 0..n_det {
            for s in 0..n_slots {
                mean[d][s] += t.prob * c[d][s];
            }
        }
    }
    let mut regs = Vec::new();
    for _ in 0..200 {
        let live: Vec<Vec<f64>> = (0..n_det)
            .map(|d| {
                (0..n_slots)
                    .map(|s| {
                        let mut dead = 0.0;
                        for k in 1..=frames_back {
                            for (u, &cu) in mean[d].iter().enumerate() {
                                let gap = k as f64 * table.period + table.slot_offsets[s]
                                    - table.slot_offsets[u];
                                dead += cu * blocked(gap, tau, sigma);
                            }
                        }
                        (1.0 - dead).clamp(0.0, 1.0)
                    })
                    .collect()
            })
            .collect();
        regs = clicks
            .iter()
            .map(|c| {
                (0..n_det)
                    .map(|d| {
                        // First live click of the frame registers; live
                        // probability grows through the frame.
                        let mut out = vec![0.0; n_slots];
                        let mut prev_live = 0.0;
                        let mut reach_s = 0.0;
                        for s in 0..n_slots {
                            let l = live[d][s].max(prev_live);
                            reach_s += l - prev_live;
                            prev_live = l;
                            out[s] = reach_s * c[d][s];
                            reach_s *= 1.0 - c[d][s];
                        }
                        out
                    })
                    .collect::<Vec<Vec<f64>>>()
            })
            .collect::<Vec<_>>();
        let mut next = vec![vec![0.0; n_slots]; n_det];
        for (t, r) in table.types.iter().zip(&regs) {
            for d in 0..n_det {
                for s in 0..n_slots {
                    next[d][s] += t.prob * r[d][s];
                }
            }
        }
        let change = next
            .iter()
            .flatten()
            .zip(mean.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        mean = next;
        if change < 1e-17 {
            break;
        }
    }
    regs
}

/// Labelled-slot patterns of one detector in one frame.
fn patterns(reg: &[f64], acceptance: f64, blocking: bool) -> Vec<Pattern> {
    if blocking {
        let mut out = Vec::with_capacity(reg.len() + 1);
        let mut none = 1.0;
        for (s, &r) in reg.iter().enumerate() {
            let p = r * acceptance;
            none -= p;
            if p > 0.0 {
                out.push(Pattern { prob: p, slots: vec![s as u16] });
            }
        }
        out.push(Pattern { prob: none.max(0.0), slots: Vec::new() });
        out
    } else {
        // No dead time: slots click independently.
        let n = reg.len();
        (0..1u32 << n)
            .filter_map(|mask| {
                let mut prob = 1.0;
                let mut slots = Vec::new();
                for (s, &r) in reg.iter().enumerate() {
                    let p = r * acceptance;
                    if mask & (1 << s) != 0 {
                        prob *= p;
                        slots.push(s as u16);
                    } else {
                        prob *= 1.0 - p;
                    }
                }
                (prob > 0.0).then_some(Pattern { prob, slots })
            })
            .collect()
    }
}

/// Expected sifting statistics for `frames` frames drawn from `table`.
///
/// `sift` applies the protocol's rule to a single frame of the given type
/// carrying the listed labelled events (all with frame index 0).
pub(crate) fn expected_stats(
    link: &Link,
    table: &TypeTable,
    frames: f64,
    sift: impl Fn(&TypeTruth, &[DetectionEvent]) -> Result<SiftedStats>,
) -> Result<SiftedStats> {
    table.check()?;
    let det = &link.det;
    let span = table.slot_offsets.last().copied().unwrap_or(0.0) - table.slot_offsets[0];
    let blocking = det.dead_time > 0.0;
    if blocking && det.dead_time < span + 12.0 * det.jitter_sigma {
        return Err(QkdError::config(
            "analytic mode needs a dead time of zero or longer than a frame",
        ));
    }
    let clicks: Vec<Vec<Vec<f64>>> = table
        .types
        .iter()
        .map(|t| {
            t.means
                .iter()
                .map(|row| {
                    row.iter().map(|&m| click_probability(m, det.efficiency, det.dark_count_prob_per_slot)).collect()
                })
                .collect()
        })
        .collect();
    let regs = if blocking { registrations(link, table, &clicks) } else { clicks };

    let mut total = SiftedStats::default();
    for (t, reg) in table.types.iter().zip(&regs) {
        if t.prob == 0.0 {
            continue;
        }
        let per_det: Vec<Vec<Pattern>> =
            reg.iter().map(|r| patterns(r, link.acceptance, blocking)).collect();
        // Walk the cartesian product of per-detector patterns.
        let mut idx = vec![0usize; per_det.len()];
        let mut events = Vec::new();
        loop {
            let mut prob = t.prob;
            events.clear();
            for (d, (pats, &i)) in per_det.iter().zip(&idx).enumerate() {
                prob *= pats[i].prob;
                for &slot in &pats[i].slots {
                    events.push(DetectionEvent {
                        detector: d as u8,
                        frame_index: 0,
                        slot,
                        timestamp: 0.0,
                        is_dark: false,
                    });
                }
            }
            if prob > 0.0 {
                let st = sift(&t.truth, &events)?;
                total.merge(&scaled(&st, prob));
            }
            // Advance the mixed-radix counter; wrap-around ends the walk.
            let mut d = 0;
            while d < idx.len() {
                idx[d] += 1;
                if idx[d] < per_det[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == idx.len() {
                break;
            }
        }
    }
    Ok(scaled(&total, frames))
}

pub(crate) fn scaled(st: &SiftedStats, w: f64) -> SiftedStats {
    let mut out = st.clone();
    for c in &mut out.classes {
        c.frames *= w;
        c.detections *= w;
        c.sifted *= w;
        c.errors *= w;
        c.z.sifted *= w;
        c.z.errors *= w;
        c.x.sifted *= w;
        c.x.errors *= w;
    }
    out.frames_sent *= w;
    out.raw_detections *= w;
    out.multi_event_frames *= w;
    out.interference.constructive *= w;
    out.interference.destructive *= w;
    out
}
