//! Run reports and their CSV / JSON-lines files.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};
use crate::security::{DecoyEstimate, Estimate, KeyRateReport, SiftedStats};

use super::config::{ExperimentConfig, OutputFormat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub mean_photons: f64,
    pub frames: f64,
    pub gain: Estimate,
    pub error_rate: Estimate,
    pub sifted_fraction: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    /// Frames actually run (DPS rounds up to whole trains).
    pub frames: u64,
    pub classes: Vec<ClassReport>,
    /// Visibility seen by the interference monitor, where there is one.
    pub monitor_visibility: Option<Estimate>,
    pub rates: KeyRateReport,
    pub decoy: Option<DecoyEstimate>,
    pub stats: SiftedStats,
    pub wall_time_s: f64,
    pub frames_per_sec: f64,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "protocol", "distance_km", "clock_hz", "mu_signal", "raw_bps", "sifted_bps", "secret_bps",
    "qber_time", "qber_phase", "visibility", "y1_lower", "e1_upper", "frames", "seed",
];

#[derive(Serialize)]
struct CsvRow<'a> {
    protocol: &'a str,
    distance_km: f64,
    clock_hz: f64,
    mu_signal: f64,
    raw_bps: f64,
    sifted_bps: f64,
    secret_bps: f64,
    qber_time: Option<f64>,
    qber_phase: f64,
    visibility: f64,
    y1_lower: Option<f64>,
    e1_upper: Option<f64>,
    frames: u64,
    seed: u64,
}

impl<'a> From<&'a RunReport> for CsvRow<'a> {
    fn from(r: &'a RunReport) -> Self {
        let c = &r.config;
        CsvRow {
            protocol: c.protocol.name(),
            distance_km: c.channel.length_km(),
            clock_hz: c.transmitter.clock_rate,
            mu_signal: c.transmitter.intensity_classes[0].mean_photons,
            raw_bps: r.rates.raw_rate,
            sifted_bps: r.rates.sifted_rate,
            secret_bps: r.rates.secret_rate,
            qber_time: r.rates.qber_time,
            qber_phase: r.rates.qber_phase,
            visibility: r.rates.visibility,
            y1_lower: r.decoy.map(|d| d.y1_lower),
            e1_upper: r.decoy.map(|d| d.e1_upper),
            frames: r.frames,
            seed: c.seed,
        }
    }
}

fn csv_err(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

/// Header plus one row per report. An empty slice gives just the header.
pub fn write_csv<W: Write>(reports: &[RunReport], w: W) -> std::io::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in reports {
        out.serialize(CsvRow::from(r)).map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_jsonlines<W: Write>(reports: &[RunReport], mut w: W) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonlines<R: BufRead>(r: R) -> std::io::Result<Vec<RunReport>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Writes `reports` to `dir/<stem>.csv` or `dir/<stem>.jsonl`, creating `dir`.
pub fn emit_report(reports: &[RunReport], format: OutputFormat, dir: &Path, stem: &str) -> Result<PathBuf> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| QkdError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(match format {
        OutputFormat::Csv => format!("{stem}.csv"),
        OutputFormat::Jsonlines => format!("{stem}.jsonl"),
    });
    let file = BufWriter::new(File::create(&path).map_err(io(&path))?);
    match format {
        OutputFormat::Csv => write_csv(reports, file),
        OutputFormat::Jsonlines => write_jsonlines(reports, file),
    }
    .map_err(io(&path))?;
    Ok(path)
}
