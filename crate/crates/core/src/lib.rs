//! Resource-management core for a multi-access-edge vehicular network:
//! scenario snapshots of a road served by eNBs and Wi-Fi APs, a downlink
//! SINR/pathloss model with controlled bandwidth reuse, queueing-based QoS
//! rate requirements, a two-level bandwidth-slicing utility maximizer with
//! a max-SINR baseline, and a compute/storage task-assignment solver with
//! migration cost, coupled through shared delay budgets.
//!
//! Everything in this crate is deterministic: generation and solving are
//! pure functions of a seed plus configuration, collections are ordered,
//! and no system entropy or threading is used.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod config;
pub mod error;
mod float;
pub mod mec;
pub mod qos;
pub mod radio;
pub mod rng;
pub mod scenario;
pub mod slicing;
pub mod units;

pub use config::{ScenarioConfig, SolverConfig};
pub use error::Error;
pub use mec::{JointSolution, MecAssignment, MecWeights, Placement, TaskDemand};
pub use radio::{LinkQuality, ReusePattern, SliceId};
pub use scenario::{
    ApplicationProfile, AvId, BaseStation, BsId, BsKind, MecServer, RoadGeometry, Scenario,
    ServerId, Vehicle,
};
pub use slicing::SlicingSolution;
