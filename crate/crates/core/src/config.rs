//! Declarative configuration: topology, default demands, QoS table, and
//! solver knobs. Everything the generator and solvers consume lives here
//! so nothing is hard-coded.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{
    ApplicationProfile, BaseStation, BsId, BsKind, MecServer, RoadGeometry, ServerId, DENSITY_MAX,
    DENSITY_MIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    /// Computing allocation, cycles per second.
    pub compute_cps: f64,
    /// Storage footprint, bytes.
    pub storage_bytes: f64,
    /// Task size, cycles.
    pub workload_cycles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandDefaults {
    pub delay_sensitive: DemandProfile,
    pub delay_tolerant: DemandProfile,
}

impl DemandDefaults {
    pub fn for_kind(&self, sensitive: bool) -> DemandProfile {
        if sensitive {
            self.delay_sensitive
        } else {
            self.delay_tolerant
        }
    }
}

/// Safety-message traffic parameters (delay-sensitive vehicles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyTraffic {
    pub arrival_rate_pps: f64,
    pub packet_size_bits: f64,
    pub delay_bound_s: f64,
    pub violation_prob: f64,
}

/// Map-download traffic parameters (delay-tolerant vehicles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapTraffic {
    pub arrival_rate_pps: f64,
    pub packet_size_bits: f64,
    #[serde(default)]
    pub rate_threshold_bps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosTable {
    pub safety: SafetyTraffic,
    pub hd_map: MapTraffic,
}

impl QosTable {
    pub fn profile(&self, sensitive: bool) -> ApplicationProfile {
        if sensitive {
            ApplicationProfile::DelaySensitive {
                arrival_rate_pps: self.safety.arrival_rate_pps,
                packet_size_bits: self.safety.packet_size_bits,
                delay_bound_s: self.safety.delay_bound_s,
                violation_prob: self.safety.violation_prob,
            }
        } else {
            ApplicationProfile::DelayTolerant {
                arrival_rate_pps: self.hd_map.arrival_rate_pps,
                packet_size_bits: self.hd_map.packet_size_bits,
                rate_threshold_bps: self.hd_map.rate_threshold_bps,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Resolution of the slicing-ratio simplex grid.
    pub grid_step: f64,
    /// Cap on alternating slicing/assignment rounds.
    pub max_iters: u32,
    /// Migration-cost weight.
    pub kappa: f64,
    pub weight_compute: f64,
    pub weight_storage: f64,
    /// Fixed ratios for the max-SINR baseline; equal split when absent.
    #[serde(default)]
    pub baseline_beta: Option<Vec<f64>>,
    /// A co-channel transmitter interferes within `factor × range`.
    pub interference_factor: f64,
    /// Extra delay for tasks served from the core-network cloud.
    pub cloud_delay_s: f64,
    /// Backhaul hops charged per migrated task (results return via the
    /// home server; 1.0 charges the hop once).
    pub backhaul_hops: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.02,
            max_iters: 10,
            kappa: 0.5,
            weight_compute: 1.0,
            weight_storage: 1.0,
            baseline_beta: None,
            interference_factor: 2.0,
            cloud_delay_s: 0.05,
            backhaul_hops: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0 && self.grid_step <= 0.5) {
            return Err(Error::Validation(format!(
                "grid step {} outside (0, 0.5]",
                self.grid_step
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("max iterations must be at least 1".into()));
        }
        if self.kappa < 0.0 || self.weight_compute < 0.0 || self.weight_storage < 0.0 {
            return Err(Error::Validation("weights must be nonnegative".into()));
        }
        if !(self.interference_factor > 0.0) {
            return Err(Error::Validation("interference factor must be positive".into()));
        }
        if self.cloud_delay_s < 0.0 || self.backhaul_hops < 0.0 {
            return Err(Error::Validation("delays must be nonnegative".into()));
        }
        if let Some(beta) = &self.baseline_beta {
            let sum: f64 = beta.iter().sum();
            if beta.iter().any(|b| *b < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation("baseline ratios must lie on the simplex".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub densities: Vec<f64>,
    pub replications: u32,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub road: RoadGeometry,
    pub min_spacing_m: f64,
    pub base_stations: Vec<BaseStation>,
    pub mec_servers: Vec<MecServer>,
    pub noise_dbm: f64,
    pub delay_sensitive_prob: f64,
    pub nominal_speed_mps: f64,
    /// Latency bound applied to delay-sensitive vehicles.
    pub latency_threshold_s: f64,
    pub demands: DemandDefaults,
    pub qos: QosTable,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
}

impl ScenarioConfig {
    /// The reference topology: two eNBs and six Wi-Fi APs on one side of a
    /// 1 km four-lane one-way road, all behind a single MEC server. The
    /// eNB reuse disks are shrunk so the AP triplet far from each eNB may
    /// share its slice while remaining disjoint from it.
    pub fn case_study() -> Self {
        let enb = |id: u32, x: f64| BaseStation {
            id: BsId(id),
            kind: BsKind::Enb,
            position_m: [x, -10.0],
            tx_power_dbm: 40.0,
            range_m: 600.0,
            pathloss_a_db: -30.0,
            pathloss_b_db: -35.0,
            mac_efficiency: 1.0,
            reuse_disk_m: Some(150.0),
        };
        let ap = |id: u32, x: f64| BaseStation {
            id: BsId(id),
            kind: BsKind::WifiAp,
            position_m: [x, -10.0],
            tx_power_dbm: 28.45,
            range_m: 180.0,
            pathloss_a_db: -40.0,
            pathloss_b_db: -35.0,
            mac_efficiency: 0.8,
            reuse_disk_m: None,
        };
        let base_stations = vec![
            enb(0, 250.0),
            enb(1, 750.0),
            ap(2, 85.0),
            ap(3, 250.0),
            ap(4, 415.0),
            ap(5, 585.0),
            ap(6, 750.0),
            ap(7, 915.0),
        ];
        let bs_ids: BTreeSet<BsId> = base_stations.iter().map(|b| b.id).collect();
        Self {
            road: RoadGeometry { length_m: 1000.0, lanes: 4, lane_width_m: 3.5 },
            min_spacing_m: 5.0,
            base_stations,
            mec_servers: vec![MecServer {
                id: ServerId(0),
                compute_capacity: 2.0e10,
                storage_capacity: 1.6e10,
                bandwidth_hz: 25.0e6,
                bs_ids,
                backhaul_delay_s: 0.01,
            }],
            noise_dbm: -104.0,
            delay_sensitive_prob: 0.8,
            nominal_speed_mps: 20.0,
            latency_threshold_s: 0.1,
            demands: DemandDefaults {
                delay_sensitive: DemandProfile {
                    compute_cps: 1.0e8,
                    storage_bytes: 1.0e7,
                    workload_cycles: 5.0e6,
                },
                delay_tolerant: DemandProfile {
                    compute_cps: 0.0,
                    storage_bytes: 5.0e7,
                    workload_cycles: 0.0,
                },
            },
            qos: QosTable {
                safety: SafetyTraffic {
                    arrival_rate_pps: 4.0,
                    packet_size_bits: 1048.0,
                    delay_bound_s: 0.1,
                    violation_prob: 1.0e-3,
                },
                hd_map: MapTraffic {
                    arrival_rate_pps: 20.0,
                    packet_size_bits: 9000.0,
                    rate_threshold_bps: None,
                },
            },
            solver: SolverConfig::default(),
            sweep: SweepConfig {
                densities: vec![0.12, 0.14, 0.16, 0.18, 0.20, 0.22, 0.24],
                replications: 20,
                base_seed: 0x5DC0_FFEE,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        self.solver.validate()?;
        if !(self.min_spacing_m > 0.0) {
            return Err(Error::Validation("minimum spacing must be positive".into()));
        }
        if !(self.delay_sensitive_prob >= 0.0 && self.delay_sensitive_prob <= 1.0) {
            return Err(Error::Validation("delay-sensitive probability outside [0, 1]".into()));
        }
        if !(self.nominal_speed_mps > 0.0) {
            return Err(Error::Validation("nominal speed must be positive".into()));
        }
        if !(self.latency_threshold_s > 0.0) {
            return Err(Error::Validation("latency threshold must be positive".into()));
        }
        if self.base_stations.is_empty() {
            return Err(Error::Validation("at least one base station required".into()));
        }
        for bs in &self.base_stations {
            bs.validate()?;
        }
        for m in &self.mec_servers {
            m.validate()?;
            for id in &m.bs_ids {
                if !self.base_stations.iter().any(|b| b.id == *id) {
                    return Err(Error::UnknownId(format!("{id} referenced by {}", m.id)));
                }
            }
        }
        for bs in &self.base_stations {
            let owners = self.mec_servers.iter().filter(|m| m.bs_ids.contains(&bs.id)).count();
            if owners != 1 {
                return Err(Error::Validation(format!(
                    "{} must belong to exactly one MEC server, found {owners}",
                    bs.id
                )));
            }
        }
        if self.sweep.replications < 1 {
            return Err(Error::Validation("replications must be at least 1".into()));
        }
        for d in &self.sweep.densities {
            if !(DENSITY_MIN..=DENSITY_MAX).contains(d) {
                return Err(Error::DensityOutOfRange {
                    density: *d,
                    min: DENSITY_MIN,
                    max: DENSITY_MAX,
                });
            }
        }
        self.qos.profile(true).validate()?;
        self.qos.profile(false).validate()?;
        Ok(())
    }
}
