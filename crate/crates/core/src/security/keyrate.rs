use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};
use crate::model::{h2, ClassId};

use super::decoy::DecoyEstimate;
use super::stats::SiftedStats;

/// Information an eavesdropper may hold per sifted bit, given the observed
/// visibility, the mean photon number and the channel transmission.
pub trait EveBound: Send + Sync {
    fn eve_information(&self, visibility: f64, mu: f64, transmission: f64) -> f64;
    /// Name written into every report that used the bound.
    fn label(&self) -> &str;
}

/// `h2((1 + ε)/2)` with `ε = 2V - 1`.
///
/// Zero leakage at V = 1, a full bit at V = ½. It ignores beam-splitting
/// attacks entirely, so the rates it yields are upper estimates.
#[derive(Clone, Copy, Debug, Default)]
pub struct OptimisticDefault;

impl EveBound for OptimisticDefault {
    fn eve_information(&self, visibility: f64, _mu: f64, _transmission: f64) -> f64 {
        let eps = (2.0 * visibility - 1.0).clamp(0.0, 1.0);
        h2((1.0 + eps) / 2.0)
    }

    fn label(&self) -> &str {
        "optimistic-default"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub raw_rate: f64,
    pub sifted_rate: f64,
    /// Absent for DPS, which has no time-basis measurement.
    pub qber_time: Option<f64>,
    pub qber_phase: f64,
    pub visibility: f64,
    pub secret_rate: f64,
    pub ec_efficiency: f64,
    /// Eavesdropper bound used for COW and DPS.
    pub eve_bound: Option<String>,
}

/// Secret fraction of the sifted signal key.
///
/// `-f h2(E_μ) + (Q1/Q_μ)(1 - h2(e1))`, clamped at zero. Error rates above
/// one half are treated as one half.
pub fn bb84_secret_fraction(e_mu: f64, q_mu: f64, decoy: &DecoyEstimate, f: f64) -> f64 {
    if !(q_mu > 0.0) {
        return 0.0;
    }
    let single = decoy.q1_lower / q_mu * (1.0 - h2(decoy.e1_upper.min(0.5)));
    (single - f * h2(e_mu.min(0.5))).clamp(0.0, 1.0)
}

/// BB84 rates from merged statistics.
///
/// Everything is a fraction of frames sent times the clock, so scaling all
/// counts by a common factor leaves the report unchanged.
pub fn key_rate_bb84(
    stats: &SiftedStats,
    decoy: &DecoyEstimate,
    signal: ClassId,
    f: f64,
    clock: f64,
) -> Result<KeyRateReport> {
    if !(f >= 1.0) {
        return Err(QkdError::domain(format!("error correction efficiency {f} < 1")));
    }
    let s = stats
        .classes
        .get(signal)
        .ok_or_else(|| QkdError::Estimation(format!("no signal class {signal}")))?;
    if !(stats.frames_sent > 0.0) {
        return Err(QkdError::Estimation("no frames sent".into()));
    }
    let per_frame = clock / stats.frames_sent;
    let raw_rate = stats.raw_detections * per_frame;
    let sifted_rate = s.sifted * per_frame;
    let qber_time = s.z.errors / s.z.sifted.max(f64::MIN_POSITIVE);
    let qber_phase = s.x.errors / s.x.sifted.max(f64::MIN_POSITIVE);
    let fraction = bb84_secret_fraction(s.error_rate().value, s.gain().value, decoy, f);
    Ok(KeyRateReport {
        raw_rate,
        sifted_rate,
        qber_time: Some(qber_time),
        qber_phase,
        visibility: 1.0 - 2.0 * qber_phase,
        secret_rate: sifted_rate * fraction,
        ec_efficiency: f,
        eve_bound: None,
    })
}

/// Rate inputs shared by the COW and DPS key rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistributedPhaseInputs {
    pub raw_rate: f64,
    pub sifted_rate: f64,
    /// Key error rate: time-of-arrival errors for COW, wrong-port counts for DPS.
    pub qber: f64,
    pub mu: f64,
    pub transmission: f64,
    pub ec_efficiency: f64,
}

fn distributed_phase(
    inp: &DistributedPhaseInputs,
    visibility: f64,
    bound: &dyn EveBound,
) -> Result<f64> {
    if !(inp.ec_efficiency >= 1.0) {
        return Err(QkdError::domain(format!("error correction efficiency {} < 1", inp.ec_efficiency)));
    }
    for (name, x) in [("qber", inp.qber), ("visibility", visibility), ("transmission", inp.transmission)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(QkdError::domain(format!("{name} {x} outside [0,1]")));
        }
    }
    let leak = bound.eve_information(visibility, inp.mu, inp.transmission);
    Ok((1.0 - inp.ec_efficiency * h2(inp.qber.min(0.5)) - leak).max(0.0))
}

pub fn key_rate_cow(
    inp: &DistributedPhaseInputs,
    visibility: f64,
    bound: &dyn EveBound,
) -> Result<KeyRateReport> {
    let fraction = distributed_phase(inp, visibility, bound)?;
    Ok(KeyRateReport {
        raw_rate: inp.raw_rate,
        sifted_rate: inp.sifted_rate,
        qber_time: Some(inp.qber),
        qber_phase: (1.0 - visibility) / 2.0,
        visibility,
        secret_rate: inp.sifted_rate * fraction,
        ec_efficiency: inp.ec_efficiency,
        eve_bound: Some(bound.label().to_owned()),
    })
}

/// DPS uses the key errors themselves as the coherence witness: `V = 1 - 2 qber`.
pub fn key_rate_dps(inp: &DistributedPhaseInputs, bound: &dyn EveBound) -> Result<KeyRateReport> {
    let visibility = (1.0 - 2.0 * inp.qber).max(0.0);
    let fraction = distributed_phase(inp, visibility, bound)?;
    Ok(KeyRateReport {
        raw_rate: inp.raw_rate,
        sifted_rate: inp.sifted_rate,
        qber_time: None,
        qber_phase: inp.qber,
        visibility,
        secret_rate: inp.sifted_rate * fraction,
        ec_efficiency: inp.ec_efficiency,
        eve_bound: Some(bound.label().to_owned()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::stats::{BasisCounts, ClassCounts};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dp(sifted: f64, qber: f64, t: f64) -> DistributedPhaseInputs {
        DistributedPhaseInputs { raw_rate: 2.0 * sifted, sifted_rate: sifted, qber, mu: 0.28, transmission: t, ec_efficiency: 1.2 }
    }

    fn perfect(q_mu: f64) -> DecoyEstimate {
        DecoyEstimate { y0: 0.0, y1_lower: 1.0, e1_upper: 0.0, q1_lower: q_mu, mu: 0.45 }
    }

    #[test]
    fn bb84_fraction_limits() {
        assert_eq!(bb84_secret_fraction(0.0, 0.3, &perfect(0.3), 1.2), 1.0);
        let leaky = DecoyEstimate { e1_upper: 0.5, ..perfect(0.3) };
        assert_eq!(bb84_secret_fraction(0.0, 0.3, &leaky, 1.2), 0.0);
        let worse = DecoyEstimate { e1_upper: 0.7, ..perfect(0.3) };
        assert_eq!(bb84_secret_fraction(0.01, 0.3, &worse, 1.2), 0.0);
    }

    fn bb84_stats(scale: f64) -> SiftedStats {
        let mut st = SiftedStats::with_classes(3);
        st.classes[0] = ClassCounts {
            frames: 8000.0 * scale,
            detections: 200.0 * scale,
            sifted: 90.0 * scale,
            errors: 1.0 * scale,
            z: BasisCounts { sifted: 60.0 * scale, errors: 0.7 * scale },
            x: BasisCounts { sifted: 30.0 * scale, errors: 0.3 * scale },
        };
        st.frames_sent = 10_000.0 * scale;
        st.raw_detections = 240.0 * scale;
        st
    }

    #[test]
    fn bb84_rate_is_scale_invariant() {
        let d = DecoyEstimate { y0: 1e-6, y1_lower: 0.02, e1_upper: 0.02, q1_lower: 0.02 * 0.45 * (-0.45f64).exp(), mu: 0.45 };
        let a = key_rate_bb84(&bb84_stats(1.0), &d, 0, 1.2, 560e6).unwrap();
        let b = key_rate_bb84(&bb84_stats(37.0), &d, 0, 1.2, 560e6).unwrap();
        for (x, y) in [(a.raw_rate, b.raw_rate), (a.sifted_rate, b.sifted_rate), (a.secret_rate, b.secret_rate)] {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9 * x.abs().max(1.0));
        }
        assert_abs_diff_eq!(a.raw_rate, 560e6 * 0.024, epsilon = 1e-6);
        assert!(a.secret_rate >= 0.0 && a.secret_rate <= a.sifted_rate);
        assert_abs_diff_eq!(a.qber_time.unwrap(), 0.7 / 60.0, epsilon = 1e-15);
    }

    #[test]
    fn limiting_contract() {
        let r = key_rate_cow(&dp(1e6, 0.0, 1.0), 1.0, &OptimisticDefault).unwrap();
        assert_eq!(r.secret_rate, 1e6);
        let q = 0.02;
        let r = key_rate_cow(&dp(1e6, q, 1.0), 1.0, &OptimisticDefault).unwrap();
        assert_eq!(r.secret_rate, 1e6 * (1.0 - 1.2 * h2(q)));
        let r = key_rate_cow(&dp(1e6, 0.0, 1.0), 0.5, &OptimisticDefault).unwrap();
        assert_eq!(r.secret_rate, 0.0);
        assert_eq!(OptimisticDefault.eve_information(0.5, 0.28, 0.3), 1.0);
        assert_eq!(OptimisticDefault.eve_information(1.0, 0.28, 1.0), 0.0);
        assert_eq!(r.eve_bound.as_deref(), Some("optimistic-default"));

        let r = key_rate_dps(&dp(1e6, 0.0, 1.0), &OptimisticDefault).unwrap();
        assert_eq!(r.secret_rate, 1e6);
        assert_eq!(r.visibility, 1.0);
        let r = key_rate_dps(&dp(1e6, 0.25, 1.0), &OptimisticDefault).unwrap();
        assert_eq!(r.visibility, 0.5);
        assert_eq!(r.secret_rate, 0.0);
    }

    #[test]
    fn bad_inputs() {
        assert!(key_rate_cow(&dp(1.0, 1.5, 1.0), 1.0, &OptimisticDefault).is_err());
        let mut inp = dp(1.0, 0.0, 1.0);
        inp.ec_efficiency = 0.9;
        assert!(key_rate_dps(&inp, &OptimisticDefault).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_errors(q in 0.0f64..0.5, dq in 0.0f64..0.1, v in 0.5f64..1.0, dv in 0.0f64..0.2) {
            let b = &OptimisticDefault;
            let base = key_rate_cow(&dp(1e6, q, 0.1), v, b).unwrap().secret_rate;
            let more_q = key_rate_cow(&dp(1e6, (q + dq).min(1.0), 0.1), v, b).unwrap().secret_rate;
            let less_v = key_rate_cow(&dp(1e6, q, 0.1), (v - dv).max(0.0), b).unwrap().secret_rate;
            prop_assert!(more_q <= base);
            prop_assert!(less_v <= base);
            prop_assert!((0.0..=1e6).contains(&base));

            let d = key_rate_dps(&dp(1e6, q, 0.1), b).unwrap().secret_rate;
            let d2 = key_rate_dps(&dp(1e6, (q + dq).min(1.0), 0.1), b).unwrap().secret_rate;
            prop_assert!(d2 <= d);
        }
    }
}
