use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qkdbench::harness::{
    emit_report, preset, run_experiment, run_experiment_with, sweep_distance, write_csv,
    write_jsonlines, ExperimentConfig, Mode, OutputFormat, RunReport, PRESET_NAMES,
};
use qkdbench::{QkdError, Result};

#[derive(Parser)]
#[command(name = "qkdbench", version, about = "Weak-coherent-pulse QKD link simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment.
    Run(Common),
    /// Run one experiment per distance.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma separated distances in km.
        #[arg(long, default_value = "0,10,20,30,40,50,60")]
        distances: String,
    },
    /// Compare Monte Carlo counts against the analytic expectation.
    Oracle(Common),
    /// List presets, or print one as TOML.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
    /// Single-threaded BB84 Monte Carlo throughput.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Output directory; without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), self.preset.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.frames {
            cfg.frames = f;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(d) = &self.out {
            cfg.output.dir = Some(d.clone());
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(cfg: &ExperimentConfig, reports: &[RunReport], stem: &str) -> Result<()> {
    match &cfg.output.dir {
        Some(dir) => {
            let path = emit_report(reports, cfg.output.format, dir, stem)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            let stdout = std::io::stdout().lock();
            match cfg.output.format {
                OutputFormat::Csv => write_csv(reports, stdout),
                OutputFormat::Jsonlines => write_jsonlines(reports, stdout),
            }
            .map_err(|source| QkdError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn summary(r: &RunReport) {
    let k = &r.rates;
    eprintln!(
        "{} {:>6.1} km  raw {:.4e} b/s  sifted {:.4e} b/s  secret {:.4e} b/s  qber_time {}  qber_phase {:.4}%  ({} frames, {:.3} s)",
        r.config.protocol,
        r.config.channel.length_km(),
        k.raw_rate,
        k.sifted_rate,
        k.secret_rate,
        k.qber_time.map_or("-".to_string(), |q| format!("{:.4}%", 100.0 * q)),
        100.0 * k.qber_phase,
        r.frames,
        r.wall_time_s,
    );
}

fn parse_distances(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| QkdError::Config(format!("bad distance {t:?}"))))
        .collect()
}

fn oracle(cfg: &ExperimentConfig) -> Result<()> {
    let mut mc = cfg.clone();
    mc.mode = Mode::Montecarlo;
    let mut an = cfg.clone();
    an.mode = Mode::Analytic;
    let m = run_experiment(&mc)?;
    let a = run_experiment(&an)?;
    println!("quantity,class,montecarlo,std_err,analytic,z");
    let line = |q: &str, class: &str, mv: f64, se: f64, av: f64| {
        let z = if se > 0.0 { (mv - av) / se } else { 0.0 };
        println!("{q},{class},{mv:.6e},{se:.3e},{av:.6e},{z:+.2}");
    };
    for (mc, an) in m.classes.iter().zip(&a.classes) {
        line("gain", &mc.name, mc.gain.value, mc.gain.std_err, an.gain.value);
        line("error_rate", &mc.name, mc.error_rate.value, mc.error_rate.std_err, an.error_rate.value);
        line("sifted_fraction", &mc.name, mc.sifted_fraction.value, mc.sifted_fraction.std_err, an.sifted_fraction.value);
    }
    Ok(())
}

fn bench(cfg: &ExperimentConfig, threads: usize) -> Result<()> {
    let mut c = cfg.clone();
    c.mode = Mode::Montecarlo;
    let r = run_experiment_with(&c, threads)?;
    println!(
        "{} montecarlo: {} frames in {:.3} s on {} thread(s): {:.3e} frames/s, {:.3e} frames/s/core",
        c.protocol,
        r.frames,
        r.wall_time_s,
        threads,
        r.frames_per_sec,
        r.frames_per_sec / threads as f64
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run(common) => {
            let cfg = common.config()?;
            let r = run_experiment(&cfg)?;
            summary(&r);
            emit(&cfg, &[r], &format!("{}-run", cfg.protocol))
        }
        Cmd::Sweep { common, distances } => {
            let cfg = common.config()?;
            let points = sweep_distance(&cfg, &parse_distances(&distances)?)?;
            let total = points.len();
            let mut reports = Vec::new();
            let mut last_err = None;
            for p in points {
                match p.outcome {
                    Ok(r) => {
                        summary(&r);
                        reports.push(r);
                    }
                    Err(e) => {
                        eprintln!("{} {:>6.1} km  failed: {e}", cfg.protocol, p.distance_km);
                        last_err = Some(e);
                    }
                }
            }
            emit(&cfg, &reports, &format!("{}-sweep", cfg.protocol))?;
            match last_err {
                Some(e) if reports.is_empty() && total > 0 => Err(e),
                _ => Ok(()),
            }
        }
        Cmd::Oracle(common) => oracle(&common.config()?),
        Cmd::Presets { show } => {
            match show {
                Some(name) => {
                    let cfg = preset(&name)?;
                    let text = toml::to_string(&cfg).map_err(|e| QkdError::Config(e.to_string()))?;
                    print!("{text}");
                }
                None => {
                    for name in PRESET_NAMES {
                        println!("{name}");
                    }
                }
            }
            Ok(())
        }
        Cmd::Bench { common, threads } => {
            let mut cfg = common.config()?;
            if common.config.is_none() && common.preset.is_none() {
                cfg = preset("bb84-table1")?;
                cfg.frames = common.frames.unwrap_or(10_000_000);
            }
            bench(&cfg, threads.max(1))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
