//! Queueing-based QoS translation: minimum service rates from delay-tail
//! targets and mean downlink sojourn times, both on an M/M/1 model of the
//! per-vehicle transmission queue.
//!
//! For service rate r bits/s and packets of L bits arriving at λ/s, the
//! sojourn time is exponential with parameter r/L − λ, so
//! P(delay > D) = exp(−(r/L − λ)·D). Inverting the tail bound ε gives the
//! effective-bandwidth style requirement r ≥ L·(λ + ln(1/ε)/D).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float;
use crate::scenario::{ApplicationProfile, AvId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateSource {
    EffectiveBandwidth,
    RateThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRequirement {
    pub av_id: AvId,
    pub min_rate_bps: f64,
    pub source: RateSource,
}

/// Delay budget of one vehicle's task: processing at the server plus
/// downlink transmission, against its response and latency thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBudget {
    pub av_id: AvId,
    pub processing_s: f64,
    pub transmission_s: f64,
    pub response_threshold_s: f64,
    pub latency_threshold_s: Option<f64>,
}

/// Minimum downlink rate for a profile.
///
/// Delay-sensitive traffic gets the delay-tail requirement above;
/// delay-tolerant traffic gets its configured threshold, defaulting to the
/// mean load λ·L.
pub fn required_rate(av_id: AvId, app: &ApplicationProfile) -> Result<RateRequirement> {
    match app {
        ApplicationProfile::DelaySensitive {
            arrival_rate_pps,
            packet_size_bits,
            delay_bound_s,
            violation_prob,
        } => {
            if !(*delay_bound_s > 0.0) {
                return Err(Error::QosDomain("delay bound must be positive".into()));
            }
            if !(*violation_prob > 0.0 && *violation_prob < 1.0) {
                return Err(Error::QosDomain(alloc::format!(
                    "violation probability {violation_prob} outside (0, 1)"
                )));
            }
            let min_rate_bps = packet_size_bits
                * (arrival_rate_pps + float::ln(1.0 / violation_prob) / delay_bound_s);
            Ok(RateRequirement { av_id, min_rate_bps, source: RateSource::EffectiveBandwidth })
        }
        ApplicationProfile::DelayTolerant {
            arrival_rate_pps,
            packet_size_bits,
            rate_threshold_bps,
        } => {
            let min_rate_bps =
                rate_threshold_bps.unwrap_or(arrival_rate_pps * packet_size_bits);
            Ok(RateRequirement { av_id, min_rate_bps, source: RateSource::RateThreshold })
        }
    }
}

/// Mean M/M/1 sojourn time at the given service rate, seconds. Returns
/// `+inf` when the queue is unstable (rate at or below the mean load).
pub fn transmission_delay(rate_bps: f64, app: &ApplicationProfile) -> f64 {
    let lambda = app.arrival_rate_pps();
    let l = app.packet_size_bits();
    let mu = rate_bps / l;
    if mu <= lambda {
        return f64::INFINITY;
    }
    1.0 / (mu - lambda)
}

/// Smallest rate whose mean sojourn stays within `max_sojourn_s`:
/// the inverse of [`transmission_delay`].
pub fn rate_for_sojourn(app: &ApplicationProfile, max_sojourn_s: f64) -> f64 {
    if !(max_sojourn_s > 0.0) {
        return f64::INFINITY;
    }
    let lambda = app.arrival_rate_pps();
    let l = app.packet_size_bits();
    l * (lambda + 1.0 / max_sojourn_s)
}

/// True when processing plus transmission fits the response threshold and,
/// when present, the latency threshold. Boundaries are inclusive.
pub fn check_delay_constraints(b: &DelayBudget) -> bool {
    let total = b.processing_s + b.transmission_s;
    if total > b.response_threshold_s {
        return false;
    }
    match b.latency_threshold_s {
        Some(lth) => total <= lth,
        None => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn safety(delay_bound_s: f64, violation_prob: f64) -> ApplicationProfile {
        ApplicationProfile::DelaySensitive {
            arrival_rate_pps: 4.0,
            packet_size_bits: 1048.0,
            delay_bound_s,
            violation_prob,
        }
    }

    fn hd_map(rate_threshold_bps: Option<f64>) -> ApplicationProfile {
        ApplicationProfile::DelayTolerant {
            arrival_rate_pps: 20.0,
            packet_size_bits: 9000.0,
            rate_threshold_bps,
        }
    }

    #[test]
    fn safety_profile_requirement() {
        let r = required_rate(AvId(0), &safety(0.1, 1e-3)).unwrap();
        // 1048 × (4 + ln(1000)/0.1)
        let expected = 1048.0 * (4.0 + (1000.0f64).ln() / 0.1);
        assert!((r.min_rate_bps - expected).abs() < 1e-9);
        assert!((r.min_rate_bps - 76_586.0).abs() < 1.0, "rate {}", r.min_rate_bps);
        assert_eq!(r.source, RateSource::EffectiveBandwidth);
    }

    #[test]
    fn tolerant_profile_defaults_to_mean_load() {
        let r = required_rate(AvId(1), &hd_map(None)).unwrap();
        assert_eq!(r.min_rate_bps, 180_000.0);
        assert_eq!(r.source, RateSource::RateThreshold);
        let r = required_rate(AvId(1), &hd_map(Some(250_000.0))).unwrap();
        assert_eq!(r.min_rate_bps, 250_000.0);
    }

    #[test]
    fn requirement_degenerates_to_stability() {
        // ε → 1 leaves only the stability term λ·L.
        let r = required_rate(AvId(0), &safety(0.1, 1.0 - 1e-12)).unwrap();
        assert!((r.min_rate_bps - 4.0 * 1048.0).abs() < 1.0);
    }

    #[test]
    fn domain_errors() {
        assert!(required_rate(AvId(0), &safety(0.0, 1e-3)).is_err());
        assert!(required_rate(AvId(0), &safety(0.1, 1.0)).is_err());
        assert!(required_rate(AvId(0), &safety(0.1, 0.0)).is_err());
    }

    #[test]
    fn sojourn_spot_values() {
        let app = safety(0.1, 1e-3);
        let rate = required_rate(AvId(0), &app).unwrap().min_rate_bps;
        let sojourn = transmission_delay(rate, &app);
        assert!((sojourn - 0.01448).abs() < 1e-4, "sojourn {sojourn}");
        // rate = 2λL gives sojourn exactly 1/λ.
        let app = hd_map(None);
        let sojourn = transmission_delay(2.0 * 180_000.0, &app);
        assert!((sojourn - 1.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn unstable_queue_is_infinite() {
        let app = hd_map(None);
        assert_eq!(transmission_delay(180_000.0, &app), f64::INFINITY);
        assert_eq!(transmission_delay(10.0, &app), f64::INFINITY);
    }

    #[test]
    fn rate_for_sojourn_inverts_delay() {
        let app = safety(0.1, 1e-3);
        for target in [0.01, 0.05, 0.2] {
            let rate = rate_for_sojourn(&app, target);
            let back = transmission_delay(rate, &app);
            assert!((back - target).abs() < 1e-9);
        }
        assert_eq!(rate_for_sojourn(&app, 0.0), f64::INFINITY);
    }

    #[test]
    fn delay_constraint_examples() {
        assert!(check_delay_constraints(&DelayBudget {
            av_id: AvId(0),
            processing_s: 0.02,
            transmission_s: 0.014,
            response_threshold_s: 10.0,
            latency_threshold_s: Some(0.1),
        }));
        assert!(!check_delay_constraints(&DelayBudget {
            av_id: AvId(0),
            processing_s: 0.09,
            transmission_s: 0.02,
            response_threshold_s: 10.0,
            latency_threshold_s: Some(0.1),
        }));
        // Inclusive boundary on the response threshold.
        assert!(check_delay_constraints(&DelayBudget {
            av_id: AvId(0),
            processing_s: 0.6,
            transmission_s: 0.4,
            response_threshold_s: 1.0,
            latency_threshold_s: None,
        }));
    }

    proptest! {
        #[test]
        fn requirement_monotone(
            lambda in 0.5..50.0f64,
            l in 100.0..20_000.0f64,
            d in 0.01..1.0f64,
            eps in 1e-6..0.5f64,
        ) {
            let base = required_rate(AvId(0), &ApplicationProfile::DelaySensitive {
                arrival_rate_pps: lambda,
                packet_size_bits: l,
                delay_bound_s: d,
                violation_prob: eps,
            }).unwrap().min_rate_bps;
            // Tightening ε or D never lowers the requirement.
            let tighter_eps = required_rate(AvId(0), &ApplicationProfile::DelaySensitive {
                arrival_rate_pps: lambda,
                packet_size_bits: l,
                delay_bound_s: d,
                violation_prob: eps / 2.0,
            }).unwrap().min_rate_bps;
            prop_assert!(tighter_eps >= base);
            let tighter_d = required_rate(AvId(0), &ApplicationProfile::DelaySensitive {
                arrival_rate_pps: lambda,
                packet_size_bits: l,
                delay_bound_s: d / 2.0,
                violation_prob: eps,
            }).unwrap().min_rate_bps;
            prop_assert!(tighter_d >= base);
            // More load never lowers it either.
            let more_load = required_rate(AvId(0), &ApplicationProfile::DelaySensitive {
                arrival_rate_pps: lambda * 2.0,
                packet_size_bits: l,
                delay_bound_s: d,
                violation_prob: eps,
            }).unwrap().min_rate_bps;
            prop_assert!(more_load >= base);
        }

        #[test]
        fn sojourn_strictly_decreasing_above_stability(
            lambda in 0.5..50.0f64,
            l in 100.0..20_000.0f64,
            margin in 0.01..10.0f64,
        ) {
            let app = ApplicationProfile::DelayTolerant {
                arrival_rate_pps: lambda,
                packet_size_bits: l,
                rate_threshold_bps: None,
            };
            let r1 = l * (lambda + margin);
            let r2 = r1 * 1.1;
            prop_assert!(transmission_delay(r2, &app) < transmission_delay(r1, &app));
        }
    }
}
