//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails. Criteria run one after another so the timing limits
//! are measured on an otherwise idle process.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qkdbench::harness::{
    preset, run_experiment, run_experiment_with, run_with_events, table1_target, write_csv,
    ExperimentConfig, Mode, Protocol, RunReport,
};
use qkdbench::model::{binary_entropy, Basis, PulseFrame, Symbol};
use qkdbench::receiver::{amzi_transform, MIDDLE};
use qkdbench::security::{
    decoy_estimate, key_rate_cow, key_rate_dps, ClassObservation, DecoyInput,
    DistributedPhaseInputs, OptimisticDefault,
};

/// Written straight to stderr so the lines survive output capture.
fn line(s: String) {
    let _ = writeln!(std::io::stderr().lock(), "{s}");
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(id: &str, o: &Outcome) -> bool {
    line(format!("{} criterion {id}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail));
    o.pass
}

fn cfg(name: &str, patch: &str) -> ExperimentConfig {
    preset(name).unwrap().overlay_str(patch).unwrap()
}

fn c1_bb84_table1() -> Outcome {
    let start = Instant::now();
    let r = run_experiment(&cfg("bb84-table1", "mode = \"analytic\"")).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let k = &r.rates;
    let target = 345e3;
    let within = (k.secret_rate / target - 1.0).abs() <= 0.20;
    // The calibrated operating point must actually be the Table 1 one.
    let calibrated = (k.raw_rate / 1.51e6 - 1.0).abs() < 1e-3
        && (k.qber_time.unwrap() / 0.0117 - 1.0).abs() < 1e-3
        && (k.qber_phase / 0.0092 - 1.0).abs() < 1e-3;
    Outcome {
        pass: within && calibrated && secs < 1.0,
        detail: format!(
            "secret {:.1} kbps (target 345 ± 20%), raw {:.4} Mbps, qber_time {:.3}%, qber_phase {:.3}%, {:.3} s",
            k.secret_rate / 1e3,
            k.raw_rate / 1e6,
            100.0 * k.qber_time.unwrap(),
            100.0 * k.qber_phase,
            secs
        ),
    }
}

/// Beamsplitter channel: an n-photon pulse clicks with `1 - (1-y0)(1-eta)^n`;
/// signal clicks err with `ed`, background clicks with one half.
fn bs_class(intensity: f64, eta: f64, y0: f64, ed: f64) -> ClassObservation {
    let miss = (-eta * intensity).exp();
    let gain = 1.0 - (1.0 - y0) * miss;
    let errors = ed * (1.0 - miss) + 0.5 * y0 * miss;
    ClassObservation { intensity, gain, error_rate: errors / gain }
}

fn c2_decoy_soundness() -> Outcome {
    let start = Instant::now();
    let base = preset("bb84-table1").unwrap();
    let d = base.detector_params();
    // Receiver throughput and per-frame background of the preset link.
    let rx_db = base.channel.excess_loss_db() + base.receiver.insertion_loss_db;
    let y0 = 1.0 - (1.0 - d.dark_count_prob_per_slot).powi(6);
    let (mut cases, mut ok) = (0, 0);
    let mut worst = String::new();
    for mu in [0.2, 0.3, 0.45, 0.6] {
        for km in [0.0, 10.0, 20.0, 40.0, 60.0] {
            for ed in [0.0, 0.01, 0.03] {
                let eta = d.efficiency * 10f64.powf(-(0.2 * km + rx_db) / 10.0);
                let input = DecoyInput {
                    signal: bs_class(mu, eta, y0, ed),
                    weak: bs_class(0.1, eta, y0, ed),
                    vacuum: bs_class(5e-4, eta, y0, ed),
                };
                let y1 = y0 + eta - y0 * eta;
                let e1 = (ed * eta + 0.5 * y0 * (1.0 - eta)) / y1;
                cases += 1;
                match decoy_estimate(&input) {
                    Ok(est) if est.y1_lower <= y1 && est.e1_upper >= e1 => ok += 1,
                    Ok(est) => {
                        worst = format!(
                            "mu {mu} {km} km ed {ed}: Y1L {:.4e} vs {y1:.4e}, e1U {:.4e} vs {e1:.4e}",
                            est.y1_lower, est.e1_upper
                        )
                    }
                    Err(e) => worst = format!("mu {mu} {km} km ed {ed}: {e}"),
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: ok == cases && secs < 1.0,
        detail: format!("{ok}/{cases} sweep points conservative, {secs:.3} s {worst}"),
    }
}

fn z(mc: f64, an: f64, n: f64) -> f64 {
    let se = (an * (1.0 - an) / n).sqrt();
    if se == 0.0 {
        if mc == an { 0.0 } else { f64::INFINITY }
    } else {
        (mc - an) / se
    }
}

fn oracle_pair(name: &str) -> (RunReport, RunReport) {
    let mc = run_experiment(&cfg(name, "frames = 10000000")).unwrap();
    let an = run_experiment(&cfg(name, "frames = 10000000\nmode = \"analytic\"")).unwrap();
    (mc, an)
}

fn c3_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut checks: Vec<(String, f64)> = Vec::new();

    let (mc, an) = oracle_pair("bb84-table1");
    let (ms, as_) = (&mc.stats.classes[0], &an.stats.classes[0]);
    let (mw, aw) = (&mc.stats.classes[1], &an.stats.classes[1]);
    checks.push(("bb84 Q_mu".into(), z(ms.gain().value, as_.gain().value, ms.frames)));
    checks.push(("bb84 Q_nu".into(), z(mw.gain().value, aw.gain().value, mw.frames)));
    checks.push(("bb84 E_mu".into(), z(ms.error_rate().value, as_.error_rate().value, ms.sifted)));
    checks.push((
        "bb84 sifted fraction".into(),
        z(ms.sifted_fraction().value, as_.sifted_fraction().value, ms.detections),
    ));
    for name in ["cow-table1", "dps-table1"] {
        let (mc, an) = oracle_pair(name);
        for (i, (m, a)) in mc.stats.classes.iter().zip(&an.stats.classes).enumerate() {
            checks.push((format!("{} gain[{i}]", &name[..3]), z(m.gain().value, a.gain().value, m.frames)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = checks.iter().map(|(_, z)| z.abs()).fold(0.0, f64::max);
    let list: Vec<String> = checks.iter().map(|(n, z)| format!("{n} z={z:+.2}")).collect();
    Outcome {
        pass: worst <= 3.0 && secs < 120.0,
        detail: format!("{}; {secs:.1} s", list.join(", ")),
    }
}

/// Least-squares slope of log10(rate) against distance.
fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, r)| (a + x, b + r.log10()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, r) in points {
        sxy += (x - mx) * (r.log10() - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

fn c4_attenuation_law() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in Protocol::ALL {
        let base = cfg(&format!("{p}-table1"), "frames = 1000000");
        let pts: Vec<(f64, f64)> = (0..=6)
            .map(|i| {
                let km = 10.0 * i as f64;
                let mut c = base.clone();
                c.channel.set_length_km(km).unwrap();
                (km, run_experiment(&c).unwrap().rates.raw_rate)
            })
            .collect();
        let slope = log_slope(&pts);
        let rel = slope / -0.02 - 1.0;
        pass &= rel.abs() <= 0.02;
        parts.push(format!("{p} slope {slope:.5}/km ({:+.2}%)", 100.0 * rel));
    }
    let secs = start.elapsed().as_secs_f64();
    // Same sweep without detector saturation, to separate dead time from the fibre law.
    for p in Protocol::ALL {
        let base = cfg(&format!("{p}-table1"), "mode = \"analytic\"");
        let slope_for = |dead: f64| {
            let pts: Vec<(f64, f64)> = (0..=6)
                .map(|i| {
                    let mut c = base.clone();
                    c.detector.dead_time = dead;
                    c.channel.set_length_km(10.0 * i as f64).unwrap();
                    (10.0 * i as f64, run_experiment(&c).unwrap().rates.raw_rate)
                })
                .collect();
            log_slope(&pts)
        };
        line(format!(
            "INFO criterion 4: {p} analytic slope {:.5}/km with 10 ns dead time, {:.5}/km with none",
            slope_for(base.detector.dead_time),
            slope_for(0.0)
        ));
    }
    Outcome { pass: pass && secs < 120.0, detail: format!("{}; {secs:.1} s", parts.join(", ")) }
}

fn c5_amzi_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=8);
        let bins: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(rng.random::<f64>().sqrt(), std::f64::consts::TAU * rng.random::<f64>()))
            .collect();
        let f = PulseFrame::new(bins, 600e-12, n as f64 * 600e-12, 0, Symbol::Dps { bits: Vec::new() }).unwrap();
        let phase = std::f64::consts::TAU * rng.random::<f64>();
        let out = amzi_transform(&f, 1, phase, 0.0).unwrap();
        worst = worst.max((out.total_mean_photons() - f.total_mean_photons()).abs());
    }
    let a = Complex64::new((0.45f64 / 2.0).sqrt(), 0.0);
    let plus = PulseFrame::new(vec![a, a], 600e-12, 1.0 / 560e6, 0, Symbol::Bb84 { bit: 0, basis: Basis::X }).unwrap();
    let dark = amzi_transform(&plus, 1, 0.0, 0.0).unwrap().mean_photons(1)[MIDDLE as usize];
    Outcome {
        pass: worst <= 1e-12 && dark <= 1e-12,
        detail: format!("max |out - in| = {worst:.2e} over 10^4 frames, |+> destructive middle = {dark:.2e}"),
    }
}

fn c6_extinction_floor() -> Outcome {
    let c = cfg(
        "bb84-table1",
        "detector.dark_count_rate = 0.0\nreceiver.slot_crosstalk_prob = 0.0\n\
         receiver.amzi_phase = 0.0\nchannel.length_km = 0.0\nchannel.excess_loss_db = 0.0\n\
         transmitter.extinction_db = 30.0\nframes = 30000000",
    );
    let r = run_experiment(&c).unwrap();
    let zb = r.stats.total().z;
    let expect = 1e-3 / (1.0 + 1e-3);
    let got = zb.errors / zb.sifted;
    let sigma = (expect * (1.0 - expect) / zb.sifted).sqrt();
    Outcome {
        pass: (got - expect).abs() <= 3.0 * sigma,
        detail: format!(
            "Z QBER {got:.4e} vs {expect:.4e} ± {:.2e} (3σ, {} sifted Z)",
            3.0 * sigma,
            zb.sifted
        ),
    }
}

fn c7_dead_time_and_determinism() -> Outcome {
    let mut violations = 0usize;
    let mut min_gap = f64::INFINITY;
    let mut clicks = 0usize;
    let mut identical = true;
    for p in Protocol::ALL {
        let c = cfg(&format!("{p}-table1"), "frames = 10000000\nchannel.length_km = 0.0");
        let tau = c.detector.dead_time;
        let (_, events) = run_with_events(&c, 4).unwrap();
        clicks += events.len();
        for d in 0..3u8 {
            let mut t: Vec<f64> = events.iter().filter(|e| e.detector == d).map(|e| e.timestamp).collect();
            t.sort_by(f64::total_cmp);
            for w in t.windows(2) {
                let gap = w[1] - w[0];
                min_gap = min_gap.min(gap);
                if gap < tau {
                    violations += 1;
                }
            }
        }
        let csv = |workers: usize| {
            let mut buf = Vec::new();
            write_csv(&[run_experiment_with(&c, workers).unwrap()], &mut buf).unwrap();
            buf
        };
        let one = csv(1);
        identical &= csv(4) == one && csv(8) == one;
    }
    Outcome {
        pass: violations == 0 && identical,
        detail: format!(
            "{clicks} clicks, min same-detector gap {:.3} ns, {violations} violations; CSV identical at 1/4/8 workers: {identical}",
            min_gap * 1e9
        ),
    }
}

fn c8_distributed_phase() -> Outcome {
    let f = 1.2;
    let inp = |qber: f64| DistributedPhaseInputs {
        raw_rate: 2e6,
        sifted_rate: 1e6,
        qber,
        mu: 0.28,
        transmission: 1.0,
        ec_efficiency: f,
    };
    let b = OptimisticDefault;
    let mut pass = true;
    for q in [0.0, 0.01, 0.05] {
        let r = key_rate_cow(&inp(q), 1.0, &b).unwrap();
        pass &= r.secret_rate == 1e6 * (1.0 - f * binary_entropy(q).unwrap());
        pass &= key_rate_cow(&inp(q), 0.5, &b).unwrap().secret_rate == 0.0;
    }
    pass &= key_rate_dps(&inp(0.0), &b).unwrap().secret_rate == 1e6;
    pass &= key_rate_dps(&inp(0.25), &b).unwrap().secret_rate == 0.0;

    for p in [Protocol::Cow, Protocol::Dps] {
        let r = run_experiment(&cfg(&format!("{p}-table1"), "mode = \"analytic\"")).unwrap();
        let t = table1_target(p);
        line(format!(
            "INFO criterion 8: {p} analytic secret {:.0} kbps vs Table 1 {:.0} kbps ({:+.0}%) under the {} bound; not scored until the collective-attack bound is transcribed",
            r.rates.secret_rate / 1e3,
            t.secret_bps / 1e3,
            100.0 * (r.rates.secret_rate / t.secret_bps - 1.0),
            r.rates.eve_bound.as_deref().unwrap_or("?"),
        ));
    }
    Outcome {
        pass,
        detail: "collective-attack bound not transcribed; limiting contract (V=1,t=1 -> 1 - f h2(Q); V=1/2 -> 0) holds exactly for COW and DPS".into(),
    }
}

fn c9_throughput() -> Outcome {
    let c = cfg("bb84-table1", "frames = 10000000");
    assert_eq!(c.mode, Mode::Montecarlo);
    let r = run_experiment_with(&c, 1).unwrap();
    Outcome {
        pass: r.frames_per_sec >= 1e6,
        detail: format!("{:.3e} BB84 frames/s on one core ({} frames in {:.3} s)", r.frames_per_sec, r.frames, r.wall_time_s),
    }
}

#[test]
fn acceptance_criteria() {
    line(String::new());
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1", c1_bb84_table1),
        ("2", c2_decoy_soundness),
        ("3", c3_oracle_equivalence),
        ("4", c4_attenuation_law),
        ("5", c5_amzi_conservation),
        ("6", c6_extinction_floor),
        ("7", c7_dead_time_and_determinism),
        ("8", c8_distributed_phase),
        ("9", c9_throughput),
    ];
    let failed: Vec<&str> = criteria
        .iter()
        .filter_map(|(id, run)| (!verdict(id, &run())).then_some(*id))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
