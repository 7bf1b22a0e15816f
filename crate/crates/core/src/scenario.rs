//! Immutable per-time-slot snapshots of the road network: vehicles,
//! base stations, and the edge servers behind them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::float;
use crate::rng::DetRng;
use crate::units::distance_m;

pub const DENSITY_MIN: f64 = 0.12;
pub const DENSITY_MAX: f64 = 0.40;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct BsId(pub u32);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AvId(pub u32);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ServerId(pub u32);

impl core::fmt::Display for BsId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "bs{}", self.0)
    }
}

impl core::fmt::Display for AvId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "av{}", self.0)
    }
}

impl core::fmt::Display for ServerId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "mec{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    pub length_m: f64,
    pub lanes: u32,
    pub lane_width_m: f64,
}

impl RoadGeometry {
    /// Lateral center of the given lane, with the roadside at y = 0.
    pub fn lane_center_y(&self, lane: u32) -> f64 {
        (f64::from(lane) + 0.5) * self.lane_width_m
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_m > 0.0) {
            return Err(Error::Validation(format!(
                "road length {} must be positive",
                self.length_m
            )));
        }
        if self.lanes < 1 {
            return Err(Error::Validation("road must have at least one lane".into()));
        }
        if !(self.lane_width_m > 0.0) {
            return Err(Error::Validation("lane width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BsKind {
    #[serde(rename = "ENB")]
    Enb,
    #[serde(rename = "WIFI_AP")]
    WifiAp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: BsId,
    pub kind: BsKind,
    pub position_m: [f64; 2],
    pub tx_power_dbm: f64,
    pub range_m: f64,
    pub pathloss_a_db: f64,
    pub pathloss_b_db: f64,
    pub mac_efficiency: f64,
    /// Disk radius used when deciding whether this station's dedicated
    /// bandwidth may be reused elsewhere. Defaults to `range_m`; the
    /// case-study eNBs shrink it so spatially separated APs qualify.
    #[serde(default)]
    pub reuse_disk_m: Option<f64>,
}

impl BaseStation {
    pub fn reuse_disk(&self) -> f64 {
        self.reuse_disk_m.unwrap_or(self.range_m)
    }

    pub fn covers(&self, point: [f64; 2]) -> bool {
        distance_m(self.position_m, point) <= self.range_m
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range_m > 0.0) {
            return Err(Error::Validation(format!("{}: range must be positive", self.id)));
        }
        if !(self.mac_efficiency > 0.0 && self.mac_efficiency <= 1.0) {
            return Err(Error::Validation(format!(
                "{}: mac efficiency {} outside (0, 1]",
                self.id, self.mac_efficiency
            )));
        }
        if self.kind == BsKind::Enb && self.mac_efficiency != 1.0 {
            return Err(Error::Validation(format!(
                "{}: eNB mac efficiency must be 1.0",
                self.id
            )));
        }
        if let Some(r) = self.reuse_disk_m {
            if !(r > 0.0) {
                return Err(Error::Validation(format!(
                    "{}: reuse disk must be positive",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Traffic profile of the single application a vehicle runs in this slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ApplicationProfile {
    #[serde(rename = "DELAY_SENSITIVE")]
    DelaySensitive {
        arrival_rate_pps: f64,
        packet_size_bits: f64,
        delay_bound_s: f64,
        violation_prob: f64,
    },
    #[serde(rename = "DELAY_TOLERANT")]
    DelayTolerant {
        arrival_rate_pps: f64,
        packet_size_bits: f64,
        #[serde(default)]
        rate_threshold_bps: Option<f64>,
    },
}

impl ApplicationProfile {
    pub fn is_delay_sensitive(&self) -> bool {
        matches!(self, ApplicationProfile::DelaySensitive { .. })
    }

    pub fn arrival_rate_pps(&self) -> f64 {
        match self {
            ApplicationProfile::DelaySensitive { arrival_rate_pps, .. }
            | ApplicationProfile::DelayTolerant { arrival_rate_pps, .. } => *arrival_rate_pps,
        }
    }

    pub fn packet_size_bits(&self) -> f64 {
        match self {
            ApplicationProfile::DelaySensitive { packet_size_bits, .. }
            | ApplicationProfile::DelayTolerant { packet_size_bits, .. } => *packet_size_bits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate_pps() > 0.0) {
            return Err(Error::Validation("arrival rate must be positive".into()));
        }
        if !(self.packet_size_bits() > 0.0) {
            return Err(Error::Validation("packet size must be positive".into()));
        }
        match self {
            ApplicationProfile::DelaySensitive { delay_bound_s, violation_prob, .. } => {
                if !(*delay_bound_s > 0.0) {
                    return Err(Error::QosDomain("delay bound must be positive".into()));
                }
                if !(*violation_prob > 0.0 && *violation_prob < 1.0) {
                    return Err(Error::QosDomain(format!(
                        "violation probability {violation_prob} outside (0, 1)"
                    )));
                }
            }
            ApplicationProfile::DelayTolerant { rate_threshold_bps, .. } => {
                if let Some(r) = rate_threshold_bps {
                    if !(*r > 0.0) {
                        return Err(Error::Validation("rate threshold must be positive".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: AvId,
    pub position_m: [f64; 2],
    pub lane: u32,
    pub app: ApplicationProfile,
    /// Required computing allocation, cycles per second. Zero when the
    /// vehicle has no computing task this slot.
    pub compute_demand: f64,
    /// Required storage, bytes.
    pub storage_demand: f64,
    /// Size of the computing task, cycles.
    pub workload_cycles: f64,
    /// Response must arrive before the vehicle leaves the service area.
    pub response_threshold_s: f64,
    /// Hard latency bound, present for delay-sensitive vehicles.
    #[serde(default)]
    pub latency_threshold_s: Option<f64>,
}

impl Vehicle {
    pub fn validate(&self) -> Result<()> {
        self.app.validate()?;
        if self.compute_demand < 0.0 || self.storage_demand < 0.0 || self.workload_cycles < 0.0 {
            return Err(Error::Validation(format!("{}: demands must be nonnegative", self.id)));
        }
        if (self.compute_demand == 0.0) != (self.workload_cycles == 0.0) {
            return Err(Error::Validation(format!(
                "{}: compute demand and workload must be zero together",
                self.id
            )));
        }
        if let Some(lth) = self.latency_threshold_s {
            if lth > self.response_threshold_s {
                return Err(Error::Validation(format!(
                    "{}: latency threshold exceeds response threshold",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MecServer {
    pub id: ServerId,
    /// Total computing resources, cycles per second.
    pub compute_capacity: f64,
    /// Total storing resources, bytes.
    pub storage_capacity: f64,
    /// Aggregate sliceable bandwidth across this server's stations, Hz.
    pub bandwidth_hz: f64,
    pub bs_ids: BTreeSet<BsId>,
    /// One-hop backhaul delay charged to tasks served away from home.
    pub backhaul_delay_s: f64,
}

impl MecServer {
    pub fn validate(&self) -> Result<()> {
        if !(self.compute_capacity > 0.0 && self.storage_capacity > 0.0 && self.bandwidth_hz > 0.0)
        {
            return Err(Error::Validation(format!("{}: capacities must be positive", self.id)));
        }
        if self.bs_ids.is_empty() {
            return Err(Error::Validation(format!(
                "{}: must serve at least one base station",
                self.id
            )));
        }
        if self.backhaul_delay_s < 0.0 {
            return Err(Error::Validation(format!(
                "{}: backhaul delay must be nonnegative",
                self.id
            )));
        }
        Ok(())
    }
}

/// One immutable time-slot snapshot. Safe to share read-only across
/// parallel workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub road: RoadGeometry,
    pub vehicles: Vec<Vehicle>,
    pub base_stations: Vec<BaseStation>,
    pub mec_servers: Vec<MecServer>,
    pub noise_dbm: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn bs(&self, id: BsId) -> Result<&BaseStation> {
        self.base_stations
            .iter()
            .find(|b| b.id == id)
            .ok_or_else(|| Error::UnknownId(format!("{id}")))
    }

    pub fn vehicle(&self, id: AvId) -> Result<&Vehicle> {
        self.vehicles
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| Error::UnknownId(format!("{id}")))
    }

    pub fn server(&self, id: ServerId) -> Result<&MecServer> {
        self.mec_servers
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::UnknownId(format!("{id}")))
    }

    /// The server whose service area contains the given station.
    pub fn server_of_bs(&self, bs: BsId) -> Result<&MecServer> {
        self.mec_servers
            .iter()
            .find(|m| m.bs_ids.contains(&bs))
            .ok_or_else(|| Error::UnknownId(format!("no server owns {bs}")))
    }

    pub fn enb_count(&self) -> usize {
        self.base_stations.iter().filter(|b| b.kind == BsKind::Enb).count()
    }

    pub fn ap_count(&self) -> usize {
        self.base_stations.iter().filter(|b| b.kind == BsKind::WifiAp).count()
    }

    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        for bs in &self.base_stations {
            bs.validate()?;
        }
        for m in &self.mec_servers {
            m.validate()?;
            for bs in &m.bs_ids {
                self.bs(*bs)?;
            }
        }
        // Every station belongs to exactly one server.
        for bs in &self.base_stations {
            let owners =
                self.mec_servers.iter().filter(|m| m.bs_ids.contains(&bs.id)).count();
            if owners != 1 {
                return Err(Error::Validation(format!(
                    "{} must belong to exactly one MEC server, found {owners}",
                    bs.id
                )));
            }
        }
        for v in &self.vehicles {
            v.validate()?;
            if v.position_m[0] < 0.0 || v.position_m[0] > self.road.length_m {
                return Err(Error::Validation(format!("{} lies outside the road", v.id)));
            }
            if coverage_set(self, v).is_empty() {
                return Err(Error::Validation(format!("{} is not covered by any station", v.id)));
            }
        }
        Ok(())
    }
}

/// All stations whose range (inclusive boundary) reaches the vehicle.
pub fn coverage_set(s: &Scenario, v: &Vehicle) -> BTreeSet<BsId> {
    s.base_stations
        .iter()
        .filter(|bs| bs.covers(v.position_m))
        .map(|bs| bs.id)
        .collect()
}

/// Measured coverage statistics of a snapshot: the fraction of vehicles
/// inside at least one station of each kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub ap_coverage_rate: f64,
    pub enb_coverage_rate: f64,
}

pub fn coverage_stats(s: &Scenario) -> CoverageStats {
    let n = s.vehicles.len().max(1) as f64;
    let mut ap = 0usize;
    let mut enb = 0usize;
    for v in &s.vehicles {
        let covered_by = |kind: BsKind| {
            s.base_stations.iter().any(|b| b.kind == kind && b.covers(v.position_m))
        };
        if covered_by(BsKind::WifiAp) {
            ap += 1;
        }
        if covered_by(BsKind::Enb) {
            enb += 1;
        }
    }
    CoverageStats {
        ap_coverage_rate: ap as f64 / n,
        enb_coverage_rate: enb as f64 / n,
    }
}

/// Sample `n` sorted positions uniformly over `[0, length]` conditioned on
/// consecutive gaps of at least `min_gap`, via the spacing transform:
/// uniform order statistics on the free length plus accumulated gaps.
fn sample_spaced_positions(
    rng: &mut DetRng,
    n: usize,
    length: f64,
    min_gap: f64,
    lane: u32,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let free = length - (n - 1) as f64 * min_gap;
    if free < 0.0 {
        return Err(Error::SpacingInfeasible { lane, count: n, length_m: length });
    }
    let mut offsets: Vec<f64> = (0..n).map(|_| rng.uniform() * free).collect();
    offsets.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in offsets"));
    Ok(offsets
        .iter()
        .enumerate()
        .map(|(i, u)| u + i as f64 * min_gap)
        .collect())
}

/// Generate the case-study topology at the given vehicle density.
///
/// Vehicle count is `round(density × road length)`, split as evenly as
/// possible across lanes. Positions are uniform per lane subject to the
/// configured minimum spacing; each vehicle independently draws the
/// delay-sensitive profile with the configured probability. Identical
/// `(density, seed, config)` inputs reproduce the snapshot bit for bit.
pub fn generate_case_study(
    density_av_per_m: f64,
    seed: u64,
    config: &ScenarioConfig,
) -> Result<Scenario> {
    if !(DENSITY_MIN..=DENSITY_MAX).contains(&density_av_per_m) {
        return Err(Error::DensityOutOfRange {
            density: density_av_per_m,
            min: DENSITY_MIN,
            max: DENSITY_MAX,
        });
    }
    config.validate()?;

    let road = config.road;
    let total = float::round(density_av_per_m * road.length_m) as usize;
    let lanes = road.lanes as usize;
    let mut rng = DetRng::new(seed);

    let mut vehicles = Vec::with_capacity(total);
    let mut next_id = 0u32;
    for lane in 0..lanes {
        let count = total / lanes + usize::from(lane < total % lanes);
        let xs = sample_spaced_positions(
            &mut rng,
            count,
            road.length_m,
            config.min_spacing_m,
            lane as u32,
        )?;
        let y = road.lane_center_y(lane as u32);
        for x in xs {
            vehicles.push((next_id, [x, y], lane as u32));
            next_id += 1;
        }
    }

    let vehicles = vehicles
        .into_iter()
        .map(|(id, position_m, lane)| {
            let sensitive = rng.bernoulli(config.delay_sensitive_prob);
            let app = config.qos.profile(sensitive);
            let demand = config.demands.for_kind(sensitive);
            let dwell = (road.length_m - position_m[0]) / config.nominal_speed_mps;
            Vehicle {
                id: AvId(id),
                position_m,
                lane,
                app,
                compute_demand: demand.compute_cps,
                storage_demand: demand.storage_bytes,
                workload_cycles: demand.workload_cycles,
                response_threshold_s: dwell,
                latency_threshold_s: sensitive.then_some(config.latency_threshold_s),
            }
        })
        .collect();

    let scenario = Scenario {
        road,
        vehicles,
        base_stations: config.base_stations.clone(),
        mec_servers: config.mec_servers.clone(),
        noise_dbm: config.noise_dbm,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Pin each vehicle to the server owning its strongest covering station
/// (by received power, ties to the lower station id). Slicing and task
/// placement both treat this as the vehicle's home domain.
pub fn home_servers(s: &Scenario) -> Result<BTreeMap<AvId, ServerId>> {
    let mut homes = BTreeMap::new();
    for v in &s.vehicles {
        let mut best: Option<(f64, BsId)> = None;
        for bs in &s.base_stations {
            if !bs.covers(v.position_m) {
                continue;
            }
            let rx = crate::radio::received_power_dbm(
                bs,
                distance_m(bs.position_m, v.position_m),
            )?;
            let better = match best {
                None => true,
                Some((best_rx, best_id)) => {
                    rx > best_rx || (rx == best_rx && bs.id < best_id)
                }
            };
            if better {
                best = Some((rx, bs.id));
            }
        }
        let (_, bs_id) =
            best.ok_or_else(|| Error::Validation(format!("{} has no covering station", v.id)))?;
        homes.insert(v.id, s.server_of_bs(bs_id)?.id);
    }
    Ok(homes)
}
