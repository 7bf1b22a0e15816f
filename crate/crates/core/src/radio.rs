//! Downlink propagation: log-distance pathloss, received power, SINR under
//! a bandwidth-reuse pattern, and per-link spectral efficiency.
//!
//! A reuse pattern carries one dedicated slice per eNB plus one slice shared
//! by all Wi-Fi APs. An AP additionally transmits on an eNB's slice when
//! their reuse disks are disjoint; such owner/reuser pairs are spatially
//! separated by construction and therefore do not interfere with each
//! other, while reusers of the same slice still do.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float;
use crate::scenario::{BaseStation, BsId, BsKind, MecServer, Scenario};
use crate::units::{dbm_to_mw, distance_m, mw_to_dbm};

/// Distance floor: the log-distance model diverges as d approaches zero.
pub const DISTANCE_FLOOR_M: f64 = 1.0;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SliceId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDef {
    pub id: SliceId,
    pub ratio: f64,
    /// The eNB holding this slice; `None` for the shared Wi-Fi slice.
    pub owner: Option<BsId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReusePattern {
    pub slices: Vec<SliceDef>,
    pub bs_slices: BTreeMap<BsId, BTreeSet<SliceId>>,
    /// A co-channel transmitter interferes within `factor × its range`.
    pub interference_factor: f64,
}

impl ReusePattern {
    /// Number of slices a pattern over this server's stations will have:
    /// one per eNB plus a shared slice when any AP is present.
    pub fn slice_count(s: &Scenario, server: &MecServer) -> usize {
        let mut enbs = 0;
        let mut aps = 0;
        for id in &server.bs_ids {
            match s.bs(*id).map(|b| b.kind) {
                Ok(BsKind::Enb) => enbs += 1,
                Ok(BsKind::WifiAp) => aps += 1,
                Err(_) => {}
            }
        }
        enbs + usize::from(aps > 0)
    }

    /// Build the pattern for one server from slicing ratios and geometry.
    /// `beta` must match [`ReusePattern::slice_count`] and sum to one;
    /// eNB slices come first in ascending station id, the shared Wi-Fi
    /// slice last.
    pub fn build(
        s: &Scenario,
        server: &MecServer,
        beta: &[f64],
        interference_factor: f64,
    ) -> Result<Self> {
        let mut enbs: Vec<&BaseStation> = Vec::new();
        let mut aps: Vec<&BaseStation> = Vec::new();
        for id in &server.bs_ids {
            let bs = s.bs(*id)?;
            match bs.kind {
                BsKind::Enb => enbs.push(bs),
                BsKind::WifiAp => aps.push(bs),
            }
        }
        let expected = enbs.len() + usize::from(!aps.is_empty());
        if beta.len() != expected {
            return Err(Error::Validation(alloc::format!(
                "expected {expected} slicing ratios, got {}",
                beta.len()
            )));
        }
        let sum: f64 = beta.iter().sum();
        if beta.iter().any(|b| *b < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation("slicing ratios must lie on the simplex".into()));
        }

        let mut slices = Vec::with_capacity(expected);
        let mut bs_slices: BTreeMap<BsId, BTreeSet<SliceId>> = BTreeMap::new();
        for (i, enb) in enbs.iter().enumerate() {
            let id = SliceId(i as u32);
            slices.push(SliceDef { id, ratio: beta[i], owner: Some(enb.id) });
            bs_slices.entry(enb.id).or_default().insert(id);
        }
        if !aps.is_empty() {
            let wifi = SliceId(enbs.len() as u32);
            slices.push(SliceDef { id: wifi, ratio: beta[enbs.len()], owner: None });
            for ap in &aps {
                let entry = bs_slices.entry(ap.id).or_default();
                entry.insert(wifi);
                for (i, enb) in enbs.iter().enumerate() {
                    let centers = distance_m(ap.position_m, enb.position_m);
                    if centers > ap.reuse_disk() + enb.reuse_disk() {
                        entry.insert(SliceId(i as u32));
                    }
                }
            }
        }
        Ok(Self { slices, bs_slices, interference_factor })
    }

    pub fn slice(&self, id: SliceId) -> Result<&SliceDef> {
        self.slices
            .iter()
            .find(|sl| sl.id == id)
            .ok_or_else(|| Error::UnknownId(alloc::format!("slice {}", id.0)))
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.slices.iter().map(|sl| sl.ratio).collect()
    }

    fn transmits(&self, bs: BsId, slice: SliceId) -> bool {
        self.bs_slices.get(&bs).is_some_and(|set| set.contains(&slice))
    }

    /// Check that every AP sharing an eNB slice keeps a disjoint reuse disk
    /// from that eNB.
    pub fn check_reuse_legality(&self, s: &Scenario) -> Result<()> {
        for sl in &self.slices {
            let Some(owner_id) = sl.owner else { continue };
            let owner = s.bs(owner_id)?;
            for (bs_id, set) in &self.bs_slices {
                if *bs_id == owner_id || !set.contains(&sl.id) {
                    continue;
                }
                let reuser = s.bs(*bs_id)?;
                let centers = distance_m(reuser.position_m, owner.position_m);
                if centers <= reuser.reuse_disk() + owner.reuse_disk() {
                    return Err(Error::Validation(alloc::format!(
                        "{bs_id} reuses slice {} but overlaps owner {owner_id}",
                        sl.id.0
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Log-distance pathloss in dB (a negative gain): `a + b·log10(d)` with the
/// distance floored at [`DISTANCE_FLOOR_M`].
pub fn pathloss_db(bs: &BaseStation, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::NonPositiveDistance { distance_m });
    }
    let d = distance_m.max(DISTANCE_FLOOR_M);
    Ok(bs.pathloss_a_db + bs.pathloss_b_db * float::log10(d))
}

/// Downlink received power in dBm at the given distance.
pub fn received_power_dbm(bs: &BaseStation, distance_m: f64) -> Result<f64> {
    Ok(bs.tx_power_dbm + pathloss_db(bs, distance_m)?)
}

/// Linear SINR of the `bs → av` link on one slice.
///
/// Interference sums the received power of every other station transmitting
/// on the slice within its interference radius, except the sanctioned
/// owner/reuser counterpart (see module docs). Co-channel stations are
/// modeled as always transmitting.
pub fn sinr(s: &Scenario, rp: &ReusePattern, bs_id: BsId, av_id: crate::scenario::AvId, slice_id: SliceId) -> Result<f64> {
    let bs = s.bs(bs_id)?;
    let av = s.vehicle(av_id)?;
    if !bs.covers(av.position_m) {
        return Err(Error::OutOfCoverage { bs: bs_id.0, av: av_id.0 });
    }
    if !rp.transmits(bs_id, slice_id) {
        return Err(Error::SliceNotAssigned { bs: bs_id.0, slice: slice_id.0 });
    }
    let slice = rp.slice(slice_id)?;

    let signal_mw = dbm_to_mw(received_power_dbm(bs, distance_m(bs.position_m, av.position_m))?);
    let mut interference_mw = 0.0;
    for other in &s.base_stations {
        if other.id == bs_id || !rp.transmits(other.id, slice_id) {
            continue;
        }
        // Owner/reuser pairs of this slice are sanctioned as disjoint.
        if slice.owner == Some(other.id) || slice.owner == Some(bs_id) {
            continue;
        }
        let d = distance_m(other.position_m, av.position_m);
        if d > rp.interference_factor * other.range_m {
            continue;
        }
        interference_mw += dbm_to_mw(received_power_dbm(other, d)?);
    }
    let noise_mw = dbm_to_mw(s.noise_dbm);
    Ok(signal_mw / (noise_mw + interference_mw))
}

/// Spectral efficiency in bits/s/Hz: `mac_efficiency × log2(1 + SINR)`.
pub fn spectral_efficiency(
    s: &Scenario,
    rp: &ReusePattern,
    bs_id: BsId,
    av_id: crate::scenario::AvId,
    slice_id: SliceId,
) -> Result<f64> {
    let ratio = sinr(s, rp, bs_id, av_id, slice_id)?;
    let bs = s.bs(bs_id)?;
    Ok(bs.mac_efficiency * float::log2(1.0 + ratio))
}

/// Per-link quality across every slice the station transmits on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkQuality {
    pub bs_id: BsId,
    pub av_id: crate::scenario::AvId,
    pub sinr_db_per_slice: BTreeMap<SliceId, f64>,
    pub spectral_eff_per_slice: BTreeMap<SliceId, f64>,
}

impl LinkQuality {
    /// Rate this link would deliver on one slice if it had the entire
    /// slice to itself, bits/s. The full-band reading of link quality, as
    /// opposed to the per-Hz spectral efficiency.
    pub fn full_band_rate_bps(&self, slice: SliceId, ratio: f64, bandwidth_hz: f64) -> f64 {
        self.spectral_eff_per_slice
            .get(&slice)
            .map(|eff| eff * ratio * bandwidth_hz)
            .unwrap_or(0.0)
    }
}

pub fn link_quality(
    s: &Scenario,
    rp: &ReusePattern,
    bs_id: BsId,
    av_id: crate::scenario::AvId,
) -> Result<LinkQuality> {
    let mut sinr_db_per_slice = BTreeMap::new();
    let mut spectral_eff_per_slice = BTreeMap::new();
    if let Some(slices) = rp.bs_slices.get(&bs_id) {
        for slice in slices {
            let ratio = sinr(s, rp, bs_id, av_id, *slice)?;
            sinr_db_per_slice.insert(*slice, 10.0 * float::log10(ratio));
            spectral_eff_per_slice.insert(*slice, {
                let bs = s.bs(bs_id)?;
                bs.mac_efficiency * float::log2(1.0 + ratio)
            });
        }
    }
    Ok(LinkQuality { bs_id, av_id, sinr_db_per_slice, spectral_eff_per_slice })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::scenario::{generate_case_study, AvId};

    fn case(seed: u64) -> Scenario {
        generate_case_study(0.12, seed, &ScenarioConfig::case_study()).unwrap()
    }

    fn enb(s: &Scenario) -> &BaseStation {
        s.base_stations.iter().find(|b| b.kind == BsKind::Enb).unwrap()
    }

    fn ap(s: &Scenario) -> &BaseStation {
        s.base_stations.iter().find(|b| b.kind == BsKind::WifiAp).unwrap()
    }

    #[test]
    fn pathloss_spot_values() {
        let s = case(1);
        assert!((pathloss_db(enb(&s), 1.0).unwrap() - (-30.0)).abs() < 0.01);
        assert!((pathloss_db(enb(&s), 100.0).unwrap() - (-100.0)).abs() < 0.01);
        let ap_pl = pathloss_db(ap(&s), 50.0).unwrap();
        assert!((ap_pl - (-99.464)).abs() < 0.01, "ap pathloss {ap_pl}");
    }

    #[test]
    fn received_power_spot_values() {
        let s = case(1);
        assert!((received_power_dbm(enb(&s), 100.0).unwrap() - (-60.0)).abs() < 0.01);
        let rx = received_power_dbm(ap(&s), 50.0).unwrap();
        assert!((rx - (-71.01)).abs() < 0.01, "ap rx {rx}");
    }

    #[test]
    fn nonpositive_distance_is_domain_error() {
        let s = case(1);
        assert!(matches!(
            pathloss_db(enb(&s), 0.0),
            Err(Error::NonPositiveDistance { .. })
        ));
        assert!(pathloss_db(enb(&s), -3.0).is_err());
    }

    #[test]
    fn distance_floor_prevents_positive_gain() {
        let s = case(1);
        let at_floor = pathloss_db(enb(&s), 1.0).unwrap();
        let below = pathloss_db(enb(&s), 0.01).unwrap();
        assert_eq!(at_floor, below);
    }

    /// Single-station scenario: SINR at 100 m from an eNB is 44 dB over
    /// the -104 dBm noise floor.
    #[test]
    fn single_enb_snr_44db() {
        let mut s = case(2);
        s.base_stations.truncate(1);
        s.mec_servers[0].bs_ids = [BsId(0)].into_iter().collect();
        let enb_pos = s.base_stations[0].position_m;
        s.vehicles[0].position_m = [enb_pos[0] + 100.0, enb_pos[1]];
        let av = s.vehicles[0].id;
        let server = s.mec_servers[0].clone();
        let rp = ReusePattern::build(&s, &server, &[1.0], 2.0).unwrap();
        let ratio = sinr(&s, &rp, BsId(0), av, SliceId(0)).unwrap();
        assert!((10.0 * ratio.log10() - 44.0).abs() < 1e-9);
        let eff = spectral_efficiency(&s, &rp, BsId(0), av, SliceId(0)).unwrap();
        assert!((eff - 14.62).abs() < 0.01, "efficiency {eff}");
    }

    #[test]
    fn equidistant_twin_aps_approach_zero_db() {
        let mut s = case(3);
        // Two co-channel APs, vehicle exactly between them.
        s.base_stations = alloc::vec![
            BaseStation {
                id: BsId(0),
                kind: BsKind::WifiAp,
                position_m: [400.0, -10.0],
                tx_power_dbm: 28.45,
                range_m: 180.0,
                pathloss_a_db: -40.0,
                pathloss_b_db: -35.0,
                mac_efficiency: 0.8,
                reuse_disk_m: None,
            },
            BaseStation {
                id: BsId(1),
                kind: BsKind::WifiAp,
                position_m: [600.0, -10.0],
                tx_power_dbm: 28.45,
                range_m: 180.0,
                pathloss_a_db: -40.0,
                pathloss_b_db: -35.0,
                mac_efficiency: 0.8,
                reuse_disk_m: None,
            },
        ];
        s.mec_servers[0].bs_ids = [BsId(0), BsId(1)].into_iter().collect();
        s.vehicles[0].position_m = [500.0, -10.0];
        let av = s.vehicles[0].id;
        let server = s.mec_servers[0].clone();
        let rp = ReusePattern::build(&s, &server, &[1.0], 2.0).unwrap();
        let ratio = sinr(&s, &rp, BsId(0), av, SliceId(0)).unwrap();
        // P/(N+P) is just under one, so just under 0 dB.
        assert!(ratio < 1.0);
        assert!(10.0 * ratio.log10() > -0.1);
        let eff = spectral_efficiency(&s, &rp, BsId(0), av, SliceId(0)).unwrap();
        assert!((eff - 0.8).abs() < 0.01);
    }

    #[test]
    fn case_study_reuse_sets_match_geometry() {
        let s = case(4);
        let server = s.mec_servers[0].clone();
        let rp = ReusePattern::build(&s, &server, &[0.3, 0.3, 0.4], 2.0).unwrap();
        rp.check_reuse_legality(&s).unwrap();
        // APs near eNB 1 (x = 585, 750, 915) reuse eNB 0's slice and
        // vice versa; no AP reuses the slice of the eNB it sits near.
        let wifi = SliceId(2);
        for (ap, expected_extra) in [
            (BsId(2), SliceId(1)),
            (BsId(3), SliceId(1)),
            (BsId(4), SliceId(1)),
            (BsId(5), SliceId(0)),
            (BsId(6), SliceId(0)),
            (BsId(7), SliceId(0)),
        ] {
            let slices = &rp.bs_slices[&ap];
            assert!(slices.contains(&wifi), "{ap} missing wifi slice");
            assert!(slices.contains(&expected_extra), "{ap} missing reused slice");
            assert_eq!(slices.len(), 2, "{ap} has unexpected slices");
        }
        assert_eq!(rp.bs_slices[&BsId(0)].len(), 1);
        assert_eq!(rp.bs_slices[&BsId(1)].len(), 1);
    }

    /// Reusing an eNB slice is sanctioned by disjoint disks, so the owner
    /// is excluded from the interference sum on that slice.
    #[test]
    fn sanctioned_owner_excluded_from_interference() {
        let s = case(5);
        let server = s.mec_servers[0].clone();
        let rp = ReusePattern::build(&s, &server, &[0.3, 0.3, 0.4], 2.0).unwrap();
        // Vehicle near AP 5 (x = 585), which reuses eNB 0's slice 0.
        let mut s = s;
        s.vehicles[0].position_m = [585.0, 1.75];
        let av = s.vehicles[0].id;
        let on_reused = sinr(&s, &rp, BsId(5), av, SliceId(0)).unwrap();
        // Same link on the wifi slice sees strictly more interference:
        // all other APs transmit there.
        let on_wifi = sinr(&s, &rp, BsId(5), av, SliceId(2)).unwrap();
        assert!(on_reused > on_wifi);

        // Manual check: slice 0 interference comes from APs 6 and 7 only.
        let p = |bs: BsId| {
            let b = s.bs(bs).unwrap();
            dbm_to_mw(
                received_power_dbm(b, distance_m(b.position_m, s.vehicles[0].position_m))
                    .unwrap(),
            )
        };
        let noise = dbm_to_mw(s.noise_dbm);
        let expected = p(BsId(5)) / (noise + p(BsId(6)) + p(BsId(7)));
        assert!((on_reused - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn querying_unassigned_slice_is_contract_violation() {
        let s = case(6);
        let server = s.mec_servers[0].clone();
        let rp = ReusePattern::build(&s, &server, &[0.3, 0.3, 0.4], 2.0).unwrap();
        let mut s = s;
        s.vehicles[0].position_m = [250.0, 1.75];
        let av = s.vehicles[0].id;
        // eNB 0 does not transmit on the wifi slice.
        assert!(matches!(
            sinr(&s, &rp, BsId(0), av, SliceId(2)),
            Err(Error::SliceNotAssigned { .. })
        ));
    }

    #[test]
    fn added_interferer_never_raises_sinr() {
        for seed in 0..10 {
            let mut s = case(seed);
            s.vehicles.truncate(8);
            let server = s.mec_servers[0].clone();
            let rp = ReusePattern::build(&s, &server, &[0.3, 0.3, 0.4], 2.0).unwrap();
            // Baseline SINR on the wifi slice from AP 2 for covered AVs.
            let mut baseline = BTreeMap::new();
            for v in &s.vehicles {
                if s.bs(BsId(2)).unwrap().covers(v.position_m) {
                    baseline.insert(v.id, sinr(&s, &rp, BsId(2), v.id, SliceId(2)).unwrap());
                }
            }
            // Add one more co-channel AP near the middle of the road.
            let mut grown = s.clone();
            grown.base_stations.push(BaseStation {
                id: BsId(99),
                kind: BsKind::WifiAp,
                position_m: [500.0, -10.0],
                tx_power_dbm: 28.45,
                range_m: 180.0,
                pathloss_a_db: -40.0,
                pathloss_b_db: -35.0,
                mac_efficiency: 0.8,
                reuse_disk_m: None,
            });
            grown.mec_servers[0].bs_ids.insert(BsId(99));
            let server = grown.mec_servers[0].clone();
            let rp2 = ReusePattern::build(&grown, &server, &[0.3, 0.3, 0.4], 2.0).unwrap();
            for (av, before) in baseline {
                let after = sinr(&grown, &rp2, BsId(2), av, SliceId(2)).unwrap();
                assert!(after <= before + 1e-15, "sinr rose from {before} to {after}");
            }
        }
    }

    #[test]
    fn efficiency_vanishes_with_signal() {
        let s = case(7);
        let bs = ap(&s).clone();
        // log2(1 + x) → 0 as x → 0.
        let eff = bs.mac_efficiency * (1.0f64 + 1e-12).log2();
        assert!(eff < 1e-11);
    }

    #[test]
    fn zero_ratio_slice_still_transmits_for_membership() {
        let s = case(8);
        let server = s.mec_servers[0].clone();
        let rp = ReusePattern::build(&s, &server, &[0.5, 0.5, 0.0], 2.0).unwrap();
        assert!(rp.bs_slices[&BsId(2)].contains(&SliceId(2)));
    }

    #[test]
    fn beta_off_simplex_rejected() {
        let s = case(9);
        let server = s.mec_servers[0].clone();
        assert!(ReusePattern::build(&s, &server, &[0.5, 0.4, 0.2], 2.0).is_err());
        assert!(ReusePattern::build(&s, &server, &[0.5, 0.5], 2.0).is_err());
    }
}
