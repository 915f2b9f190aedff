use std::time::Instant;

use rayon::prelude::*;

use crate::error::{QkdError, Result};
use crate::receiver::DetectionEvent;
use crate::security::{
    decoy_estimate, estimate_visibility, key_rate_bb84, key_rate_cow, key_rate_dps, sift_bb84,
    sift_cow, sift_dps, ClassObservation, DecoyEstimate, DecoyInput, DistributedPhaseInputs,
    Estimate, KeyRateReport, OptimisticDefault, SiftedStats, COW_DATA,
};

use super::analytic::expected_stats;
use super::config::{ExperimentConfig, Mode, Protocol};
use super::link::{Link, TypeTruth};
use super::montecarlo::{batch_size, run_batch, simulated_frames, Tables};
use super::report::{ClassReport, RunReport};

/// Worker threads: `QKDBENCH_THREADS` if set, else all cores.
pub fn worker_count() -> usize {
    std::env::var("QKDBENCH_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_experiment_with(cfg, worker_count())
}

/// Runs with an explicit worker count. Output does not depend on it.
pub fn run_experiment_with(cfg: &ExperimentConfig, workers: usize) -> Result<RunReport> {
    execute(cfg, workers, false).map(|(r, _)| r)
}

/// Like [`run_experiment_with`], also returning every registered click of a
/// Monte Carlo run (empty in analytic mode).
pub fn run_with_events(cfg: &ExperimentConfig, workers: usize) -> Result<(RunReport, Vec<DetectionEvent>)> {
    execute(cfg, workers, true)
}

fn execute(cfg: &ExperimentConfig, workers: usize, collect: bool) -> Result<(RunReport, Vec<DetectionEvent>)> {
    let link = Link::new(cfg)?;
    let start = Instant::now();
    let frames = simulated_frames(&link, cfg.frames);
    let (stats, events) = match cfg.mode {
        Mode::Analytic => (analytic_stats(&link, frames as f64)?, Vec::new()),
        Mode::Montecarlo => simulate(&link, cfg.seed, frames, workers, collect)?,
    };
    let wall = start.elapsed().as_secs_f64().max(1e-9);
    let report = analyse(cfg, &link, stats, frames, wall)?;
    Ok((report, events))
}

fn simulate(
    link: &Link,
    seed: u64,
    frames: u64,
    workers: usize,
    collect: bool,
) -> Result<(SiftedStats, Vec<DetectionEvent>)> {
    let tables = Tables::new(link)?;
    let batches = frames.div_ceil(batch_size(link));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| QkdError::config(format!("cannot start worker pool: {e}")))?;
    let outs = pool.install(|| {
        (0..batches)
            .into_par_iter()
            .map(|b| run_batch(link, &tables, seed, b, frames, collect))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut stats = SiftedStats::default();
    let mut events = Vec::new();
    for o in outs {
        stats.merge(&o.stats);
        events.extend(o.events);
    }
    Ok((stats, events))
}

fn analytic_stats(link: &Link, frames: f64) -> Result<SiftedStats> {
    let table = link.table()?;
    match link.protocol {
        Protocol::Bb84 => {
            let n = link.tx.intensity_classes.len();
            expected_stats(link, &table, frames, |truth, events| match truth {
                TypeTruth::Bb84(t) => sift_bb84(&[*t], 0, events, n),
                _ => unreachable!("BB84 table holds BB84 truths"),
            })
        }
        Protocol::Cow => expected_stats(link, &table, frames, |truth, events| match truth {
            TypeTruth::Cow { prev, cur } => {
                let (data, monitor): (Vec<DetectionEvent>, Vec<DetectionEvent>) =
                    events.iter().partition(|e| e.detector == COW_DATA);
                sift_cow(&[*cur], 0, *prev, &data, &monitor)
            }
            _ => unreachable!("COW table holds COW truths"),
        }),
        Protocol::Dps => expected_stats(link, &table, frames, |truth, events| match truth {
            TypeTruth::Dps(t) => sift_dps(&[*t], 0, events),
            _ => unreachable!("DPS table holds DPS truths"),
        }),
    }
}

fn analyse(cfg: &ExperimentConfig, link: &Link, stats: SiftedStats, frames: u64, wall: f64) -> Result<RunReport> {
    stats.check()?;
    let tx = &cfg.transmitter;
    let clock = tx.clock_rate;
    let f = cfg.ec_efficiency;
    let mut decoy = None;
    let mut monitor = None;
    let class_names: Vec<(String, f64)> = match cfg.protocol {
        Protocol::Bb84 => tx.intensity_classes.iter().map(|c| (c.name.clone(), c.mean_photons)).collect(),
        Protocol::Cow => vec![("data".into(), tx.intensity_classes[0].mean_photons), ("decoy".into(), tx.intensity_classes[0].mean_photons)],
        Protocol::Dps => vec![("signal".into(), tx.intensity_classes[0].mean_photons)],
    };
    let rates = match cfg.protocol {
        Protocol::Bb84 => {
            let obs = |i: usize| ClassObservation {
                intensity: tx.intensity_classes[i].mean_photons,
                gain: stats.classes[i].gain().value,
                error_rate: stats.classes[i].error_rate().value,
            };
            let d: DecoyEstimate = decoy_estimate(&DecoyInput { signal: obs(0), weak: obs(1), vacuum: obs(2) })?;
            decoy = Some(d);
            if stats.interference.constructive + stats.interference.destructive > 0.0 {
                monitor = Some(estimate_visibility(stats.interference.constructive, stats.interference.destructive)?);
            }
            key_rate_bb84(&stats, &d, 0, f, clock)?
        }
        Protocol::Cow | Protocol::Dps => {
            if !(stats.frames_sent > 0.0) {
                return Err(QkdError::Estimation("no frames sent".into()));
            }
            let per_frame = clock / stats.frames_sent;
            let key = &stats.classes[0];
            let inp = DistributedPhaseInputs {
                raw_rate: stats.raw_detections * per_frame,
                sifted_rate: key.sifted * per_frame,
                qber: key.error_rate().value,
                mu: tx.intensity_classes[0].mean_photons,
                transmission: link.channel.transmission(),
                ec_efficiency: f,
            };
            if cfg.protocol == Protocol::Cow {
                let v: Estimate = estimate_visibility(stats.interference.constructive, stats.interference.destructive)?;
                monitor = Some(v);
                key_rate_cow(&inp, v.value, &OptimisticDefault)?
            } else {
                key_rate_dps(&inp, &OptimisticDefault)?
            }
        }
    };
    check_rates(&rates)?;
    let classes = stats
        .classes
        .iter()
        .zip(class_names)
        .map(|(c, (name, mu))| ClassReport {
            name,
            mean_photons: mu,
            frames: c.frames,
            gain: c.gain(),
            error_rate: c.error_rate(),
            sifted_fraction: c.sifted_fraction(),
        })
        .collect();
    Ok(RunReport {
        config: cfg.clone(),
        frames,
        classes,
        monitor_visibility: monitor,
        rates,
        decoy,
        stats,
        wall_time_s: wall,
        frames_per_sec: frames as f64 / wall,
    })
}

fn check_rates(r: &KeyRateReport) -> Result<()> {
    let ok = r.raw_rate >= 0.0
        && r.sifted_rate >= 0.0
        && r.sifted_rate <= r.raw_rate * (1.0 + 1e-12)
        && r.secret_rate >= 0.0
        && r.secret_rate <= r.sifted_rate;
    if ok {
        Ok(())
    } else {
        Err(QkdError::Estimation(format!("inconsistent rates {r:?}")))
    }
}

/// One distance of a sweep; a failed point keeps its error and the sweep moves on.
#[derive(Debug)]
pub struct SweepPoint {
    pub distance_km: f64,
    pub outcome: Result<RunReport>,
}

pub fn sweep_distance(cfg: &ExperimentConfig, distances: &[f64]) -> Result<Vec<SweepPoint>> {
    sweep_distance_with(cfg, distances, worker_count())
}

pub fn sweep_distance_with(cfg: &ExperimentConfig, distances: &[f64], workers: usize) -> Result<Vec<SweepPoint>> {
    if distances.is_empty() {
        return Err(QkdError::config("a sweep needs at least one distance"));
    }
    Ok(distances
        .iter()
        .map(|&d| {
            let outcome = (|| {
                let mut c = cfg.clone();
                c.channel.set_length_km(d)?;
                run_experiment_with(&c, workers)
            })();
            SweepPoint { distance_km: d, outcome }
        })
        .collect())
}
