//! Compute/storage task placement across MEC servers with migration cost,
//! and the alternating joint solve that couples placement delays with the
//! bandwidth-slicing rates through the shared delay budgets.
//!
//! Placement utility per server is its demand-weighted utilization; serving
//! a task away from its home server earns the utilization credit there but
//! pays a migration penalty, while the core-network cloud is a free sink
//! with no utilization credit and extra delay. Compute and storage placements
//! are independent problems and are solved as such.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::Result;
use crate::qos::{
    check_delay_constraints, rate_for_sojourn, required_rate, transmission_delay, DelayBudget,
};
use crate::scenario::{home_servers, AvId, MecServer, Scenario, ServerId};
use crate::slicing::{solve_num_with_min_rates, SlicingSolution};

const ACCEPT_EPS: f64 = 1e-9;
const CAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    #[serde(rename = "CLOUD")]
    Cloud,
    Server(ServerId),
}

impl Placement {
    pub fn is_cloud(&self) -> bool {
        matches!(self, Placement::Cloud)
    }
}

/// One vehicle's resource demand bundle for the current slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDemand {
    pub av_id: AvId,
    pub home_server: ServerId,
    /// Required computing allocation, cycles/s (zero: no compute task).
    pub compute: f64,
    /// Required storage, bytes (zero: no storage task).
    pub storage: f64,
    pub workload_cycles: f64,
    pub response_threshold_s: f64,
    pub latency_threshold_s: Option<f64>,
    /// Downlink transmission delay from the current slicing solution.
    pub downlink_delay_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MecWeights {
    pub compute: f64,
    pub storage: f64,
    pub kappa: f64,
}

impl From<&SolverConfig> for MecWeights {
    fn from(cfg: &SolverConfig) -> Self {
        Self { compute: cfg.weight_compute, storage: cfg.weight_storage, kappa: cfg.kappa }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MecAssignment {
    pub compute_server: BTreeMap<AvId, Placement>,
    pub storage_server: BTreeMap<AvId, Placement>,
    pub per_server_compute_util: BTreeMap<ServerId, f64>,
    pub per_server_storage_util: BTreeMap<ServerId, f64>,
    /// Capacity-normalized volume of migrated tasks.
    pub migrated_volume: f64,
    pub utility: f64,
    /// Vehicles whose final placement cannot meet their delay budget.
    pub infeasible_avs: BTreeSet<AvId>,
}

impl MecAssignment {
    pub fn empty() -> Self {
        Self {
            compute_server: BTreeMap::new(),
            storage_server: BTreeMap::new(),
            per_server_compute_util: BTreeMap::new(),
            per_server_storage_util: BTreeMap::new(),
            migrated_volume: 0.0,
            utility: 0.0,
            infeasible_avs: BTreeSet::new(),
        }
    }
}

fn backhaul_of(home: ServerId, servers: &[MecServer]) -> f64 {
    servers.iter().find(|m| m.id == home).map(|m| m.backhaul_delay_s).unwrap_or(0.0)
}

/// Extra delay a placement adds on top of pure processing: nothing at
/// home, the home backhaul (times the configured hop count) to a sibling
/// server, the cloud penalty in the core network.
fn placement_extra_delay(
    home: ServerId,
    placement: Placement,
    servers: &[MecServer],
    cfg: &SolverConfig,
) -> f64 {
    match placement {
        Placement::Cloud => cfg.cloud_delay_s,
        Placement::Server(id) if id == home => 0.0,
        Placement::Server(_) => backhaul_of(home, servers) * cfg.backhaul_hops,
    }
}

/// Task processing delay at a placement: workload over the allocated rate,
/// plus any migration or cloud penalty.
pub fn processing_delay(
    t: &TaskDemand,
    placement: Placement,
    servers: &[MecServer],
    cfg: &SolverConfig,
) -> f64 {
    let base = if t.compute > 0.0 { t.workload_cycles / t.compute } else { 0.0 };
    base + placement_extra_delay(t.home_server, placement, servers, cfg)
}

/// Retrieval delay of a stored object: no processing, only migration or
/// cloud penalties.
pub fn storage_delay(
    t: &TaskDemand,
    placement: Placement,
    servers: &[MecServer],
    cfg: &SolverConfig,
) -> f64 {
    placement_extra_delay(t.home_server, placement, servers, cfg)
}

fn mean(servers: &[MecServer], f: impl Fn(&MecServer) -> f64) -> f64 {
    servers.iter().map(f).sum::<f64>() / servers.len().max(1) as f64
}

/// Objective value of a pair of placement maps: demand-weighted server
/// utilizations minus the migration penalty. Cloud placements contribute
/// nothing on either side.
pub fn assignment_utility(
    compute: &BTreeMap<AvId, Placement>,
    storage: &BTreeMap<AvId, Placement>,
    tasks: &[TaskDemand],
    servers: &[MecServer],
    weights: &MecWeights,
) -> f64 {
    let mean_c = mean(servers, |m| m.compute_capacity);
    let mean_s = mean(servers, |m| m.storage_capacity);
    let mut util = 0.0;
    let mut migrated = 0.0;
    for t in tasks {
        if t.compute > 0.0 {
            if let Some(Placement::Server(id)) = compute.get(&t.av_id) {
                let cap = servers.iter().find(|m| m.id == *id).map(|m| m.compute_capacity);
                if let Some(cap) = cap {
                    util += weights.compute * t.compute / cap;
                }
                if *id != t.home_server {
                    migrated += t.compute / mean_c;
                }
            }
        }
        if t.storage > 0.0 {
            if let Some(Placement::Server(id)) = storage.get(&t.av_id) {
                let cap = servers.iter().find(|m| m.id == *id).map(|m| m.storage_capacity);
                if let Some(cap) = cap {
                    util += weights.storage * t.storage / cap;
                }
                if *id != t.home_server {
                    migrated += t.storage / mean_s;
                }
            }
        }
    }
    util - weights.kappa * migrated
}

// ---------------------------------------------------------------------------
// Per-resource placement search.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum Resource {
    Compute,
    Storage,
}

/// One resource type's placement instance: per-task demands, per-placement
/// values (cloud last), capacities, and delay legality.
struct ResourceProblem {
    task_idx: Vec<usize>,
    demands: Vec<f64>,
    caps: Vec<f64>,
    /// [task][placement]; placement m = cloud.
    values: Vec<Vec<f64>>,
    delay_ok: Vec<Vec<bool>>,
}

impl ResourceProblem {
    fn build(
        resource: Resource,
        tasks: &[TaskDemand],
        servers: &[MecServer],
        weights: &MecWeights,
        cfg: &SolverConfig,
    ) -> Self {
        let m = servers.len();
        let (w, mean_cap) = match resource {
            Resource::Compute => (weights.compute, mean(servers, |s| s.compute_capacity)),
            Resource::Storage => (weights.storage, mean(servers, |s| s.storage_capacity)),
        };
        let mut task_idx = Vec::new();
        let mut demands = Vec::new();
        let mut values = Vec::new();
        let mut delay_ok = Vec::new();
        for (ti, t) in tasks.iter().enumerate() {
            let demand = match resource {
                Resource::Compute => t.compute,
                Resource::Storage => t.storage,
            };
            if demand <= 0.0 {
                continue;
            }
            task_idx.push(ti);
            demands.push(demand);
            let mut value = Vec::with_capacity(m + 1);
            let mut ok = Vec::with_capacity(m + 1);
            for s in servers.iter() {
                let cap = match resource {
                    Resource::Compute => s.compute_capacity,
                    Resource::Storage => s.storage_capacity,
                };
                let migrated = s.id != t.home_server;
                value.push(w * demand / cap - if migrated { weights.kappa * demand / mean_cap } else { 0.0 });
                ok.push(placement_delay_ok(resource, t, Placement::Server(s.id), servers, cfg));
            }
            value.push(0.0);
            ok.push(placement_delay_ok(resource, t, Placement::Cloud, servers, cfg));
            values.push(value);
            delay_ok.push(ok);
        }
        let caps = servers
            .iter()
            .map(|s| match resource {
                Resource::Compute => s.compute_capacity,
                Resource::Storage => s.storage_capacity,
            })
            .collect();
        Self { task_idx, demands, caps, values, delay_ok }
    }

    fn cloud(&self) -> usize {
        self.caps.len()
    }

    fn fits(&self, loads: &[f64], placement: usize, demand: f64) -> bool {
        placement == self.cloud() || loads[placement] + demand <= self.caps[placement] + CAP_EPS
    }
}

fn placement_delay_ok(
    resource: Resource,
    t: &TaskDemand,
    placement: Placement,
    servers: &[MecServer],
    cfg: &SolverConfig,
) -> bool {
    let processing_s = match resource {
        Resource::Compute => processing_delay(t, placement, servers, cfg),
        Resource::Storage => storage_delay(t, placement, servers, cfg),
    };
    check_delay_constraints(&DelayBudget {
        av_id: t.av_id,
        processing_s,
        transmission_s: t.downlink_delay_s,
        response_threshold_s: t.response_threshold_s,
        latency_threshold_s: t.latency_threshold_s,
    })
}

/// Greedy seed: home when legal, otherwise the best legal value, cloud as
/// the fallback sink. `order` gives the task visiting order.
fn seed_greedy(
    prob: &ResourceProblem,
    homes: &[usize],
    order: &[usize],
    home_first: bool,
) -> Vec<usize> {
    let cloud = prob.cloud();
    let mut place = vec![cloud; prob.demands.len()];
    let mut loads = vec![0.0; prob.caps.len()];
    for &k in order {
        let d = prob.demands[k];
        let home = homes[k];
        let mut chosen = None;
        if home_first && prob.delay_ok[k][home] && prob.fits(&loads, home, d) {
            chosen = Some(home);
        }
        if chosen.is_none() {
            let mut best: Option<(f64, usize)> = None;
            for p in 0..=prob.caps.len() {
                if !prob.delay_ok[k][p] || !prob.fits(&loads, p, d) {
                    continue;
                }
                let v = prob.values[k][p];
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, p));
                }
            }
            chosen = best.map(|(_, p)| p);
        }
        let p = chosen.unwrap_or(cloud);
        place[k] = p;
        if p != cloud {
            loads[p] += d;
        }
    }
    place
}

fn local_search(prob: &ResourceProblem, place: &mut [usize]) -> f64 {
    let cloud = prob.cloud();
    let n = place.len();
    let mut loads = vec![0.0; prob.caps.len()];
    for (k, &p) in place.iter().enumerate() {
        if p != cloud {
            loads[p] += prob.demands[k];
        }
    }
    let mut total: f64 = place.iter().enumerate().map(|(k, &p)| prob.values[k][p]).sum();
    loop {
        let mut improved = false;
        // Relocations.
        for k in 0..n {
            let from = place[k];
            for to in 0..=prob.caps.len() {
                if to == from || !prob.delay_ok[k][to] {
                    continue;
                }
                let d = prob.demands[k];
                if !prob.fits(&loads, to, d) {
                    continue;
                }
                let delta = prob.values[k][to] - prob.values[k][from];
                if delta > ACCEPT_EPS {
                    if from != cloud {
                        loads[from] -= d;
                    }
                    if to != cloud {
                        loads[to] += d;
                    }
                    place[k] = to;
                    total += delta;
                    improved = true;
                    break;
                }
            }
        }
        // Pairwise exchanges; useful when capacities block both directions.
        for i in 0..n {
            for j in (i + 1)..n {
                let (pi, pj) = (place[i], place[j]);
                if pi == pj || !prob.delay_ok[i][pj] || !prob.delay_ok[j][pi] {
                    continue;
                }
                let (di, dj) = (prob.demands[i], prob.demands[j]);
                let fits_i = pj == cloud || loads[pj] - dj + di <= prob.caps[pj] + CAP_EPS;
                let fits_j = pi == cloud || loads[pi] - di + dj <= prob.caps[pi] + CAP_EPS;
                if !fits_i || !fits_j {
                    continue;
                }
                let delta = prob.values[i][pj] + prob.values[j][pi]
                    - prob.values[i][pi]
                    - prob.values[j][pj];
                if delta > ACCEPT_EPS {
                    if pi != cloud {
                        loads[pi] += dj - di;
                    }
                    if pj != cloud {
                        loads[pj] += di - dj;
                    }
                    place.swap(i, j);
                    total += delta;
                    improved = true;
                }
            }
        }
        if !improved {
            return total;
        }
    }
}

fn solve_resource(prob: &ResourceProblem, tasks: &[TaskDemand], servers: &[MecServer]) -> Vec<usize> {
    let n = prob.demands.len();
    if n == 0 {
        return Vec::new();
    }
    let homes: Vec<usize> = prob
        .task_idx
        .iter()
        .map(|&ti| {
            servers.iter().position(|s| s.id == tasks[ti].home_server).unwrap_or(0)
        })
        .collect();

    let ascending: Vec<usize> = (0..n).collect();
    let mut by_demand = ascending.clone();
    by_demand.sort_by(|&a, &b| {
        prob.demands[b].partial_cmp(&prob.demands[a]).unwrap().then(a.cmp(&b))
    });

    let mut best: Option<(f64, Vec<usize>)> = None;
    let seeds = [
        seed_greedy(prob, &homes, &ascending, true),
        seed_greedy(prob, &homes, &by_demand, true),
        seed_greedy(prob, &homes, &by_demand, false),
        vec![prob.cloud(); n],
    ];
    for mut place in seeds {
        let total = local_search(prob, &mut place);
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, place));
        }
    }
    best.expect("at least one seed").1
}

/// Place every compute and storage task on exactly one server or the
/// cloud, maximizing utilization-minus-migration utility under capacity
/// and delay constraints. Deterministic: fixed seed portfolio, fixed scan
/// orders, improving moves only.
pub fn solve_assignment(
    tasks: &[TaskDemand],
    servers: &[MecServer],
    weights: &MecWeights,
    cfg: &SolverConfig,
) -> MecAssignment {
    let mut out = MecAssignment::empty();
    for s in servers {
        out.per_server_compute_util.insert(s.id, 0.0);
        out.per_server_storage_util.insert(s.id, 0.0);
    }

    for resource in [Resource::Compute, Resource::Storage] {
        let prob = ResourceProblem::build(resource, tasks, servers, weights, cfg);
        let placement = solve_resource(&prob, tasks, servers);
        for (k, &p) in placement.iter().enumerate() {
            let t = &tasks[prob.task_idx[k]];
            let placed = if p == prob.cloud() {
                Placement::Cloud
            } else {
                Placement::Server(servers[p].id)
            };
            if !prob.delay_ok[k][p] {
                out.infeasible_avs.insert(t.av_id);
            }
            match resource {
                Resource::Compute => {
                    out.compute_server.insert(t.av_id, placed);
                    if let Placement::Server(id) = placed {
                        *out.per_server_compute_util.get_mut(&id).unwrap() +=
                            t.compute / prob.caps[p];
                    }
                }
                Resource::Storage => {
                    out.storage_server.insert(t.av_id, placed);
                    if let Placement::Server(id) = placed {
                        *out.per_server_storage_util.get_mut(&id).unwrap() +=
                            t.storage / prob.caps[p];
                    }
                }
            }
        }
    }

    for util in out
        .per_server_compute_util
        .values()
        .chain(out.per_server_storage_util.values())
    {
        debug_assert!(*util <= 1.0 + 1e-9, "capacity keeps utilization at or below one");
    }

    let mean_c = mean(servers, |m| m.compute_capacity);
    let mean_s = mean(servers, |m| m.storage_capacity);
    let mut migrated = 0.0;
    for t in tasks {
        if let Some(Placement::Server(id)) = out.compute_server.get(&t.av_id) {
            if *id != t.home_server {
                migrated += t.compute / mean_c;
            }
        }
        if let Some(Placement::Server(id)) = out.storage_server.get(&t.av_id) {
            if *id != t.home_server {
                migrated += t.storage / mean_s;
            }
        }
    }
    out.migrated_volume = migrated;
    out.utility =
        assignment_utility(&out.compute_server, &out.storage_server, tasks, servers, weights);
    out
}

// ---------------------------------------------------------------------------
// Joint solve.
// ---------------------------------------------------------------------------

/// Combined slicing and placement result for one scenario. Slicing is
/// solved per MEC server over the vehicles pinned to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSolution {
    pub slicing: BTreeMap<ServerId, SlicingSolution>,
    pub assignment: MecAssignment,
    pub converged: bool,
    pub iterations: u32,
    pub slicing_utility: f64,
    pub feasible: bool,
}

impl JointSolution {
    pub fn total_utility(&self) -> f64 {
        self.slicing_utility + self.assignment.utility
    }

    pub fn rate(&self, av: AvId) -> f64 {
        self.slicing.values().map(|sol| sol.rate(av)).fold(0.0, f64::max)
    }

    pub fn association(&self) -> BTreeMap<AvId, crate::scenario::BsId> {
        let mut out = BTreeMap::new();
        for sol in self.slicing.values() {
            out.extend(sol.association.iter().map(|(&a, &b)| (a, b)));
        }
        out
    }
}

/// Materialize each vehicle's demand bundle with the given downlink delays.
pub fn build_tasks(
    s: &Scenario,
    homes: &BTreeMap<AvId, ServerId>,
    downlink: &BTreeMap<AvId, f64>,
) -> Vec<TaskDemand> {
    s.vehicles
        .iter()
        .map(|v| TaskDemand {
            av_id: v.id,
            home_server: homes.get(&v.id).copied().unwrap_or(s.mec_servers[0].id),
            compute: v.compute_demand,
            storage: v.storage_demand,
            workload_cycles: v.workload_cycles,
            response_threshold_s: v.response_threshold_s,
            latency_threshold_s: v.latency_threshold_s,
            downlink_delay_s: downlink.get(&v.id).copied().unwrap_or(f64::INFINITY),
        })
        .collect()
}

/// The tightest sojourn budget a vehicle's tasks leave for the downlink,
/// given per-task processing delays. `None` means no task constrains it;
/// a non-positive budget means the vehicle cannot be served in time at
/// those placements.
fn sojourn_budget(v: &crate::scenario::Vehicle, d_compute: f64, d_storage: f64) -> Option<f64> {
    let cap = |d: f64| {
        let mut t = v.response_threshold_s - d;
        if let Some(lth) = v.latency_threshold_s {
            t = t.min(lth - d);
        }
        t
    };
    let mut budget: Option<f64> = None;
    if v.compute_demand > 0.0 {
        budget = Some(cap(d_compute));
    }
    if v.storage_demand > 0.0 {
        let b = cap(d_storage);
        budget = Some(budget.map_or(b, |x| x.min(b)));
    }
    budget
}

fn coupled_min_rates(
    s: &Scenario,
    delays: &BTreeMap<AvId, (f64, f64)>,
) -> Result<BTreeMap<AvId, f64>> {
    let mut rates = BTreeMap::new();
    for v in &s.vehicles {
        let base = required_rate(v.id, &v.app)?.min_rate_bps;
        let (dc, ds) = delays.get(&v.id).copied().unwrap_or((0.0, 0.0));
        let rate = match sojourn_budget(v, dc, ds) {
            // A task that cannot make its deadline even with an instant
            // downlink is flagged by the assignment instead of poisoning
            // the slicing problem.
            Some(budget) if budget > 0.0 => base.max(rate_for_sojourn(&v.app, budget)),
            _ => base,
        };
        rates.insert(v.id, rate);
    }
    Ok(rates)
}

/// Alternate bandwidth slicing and task placement until the per-vehicle
/// rate requirements they exchange stop changing, or the iteration cap is
/// hit (in which case the best iterate by combined utility is returned
/// with `converged = false`).
pub fn joint_solve(s: &Scenario, cfg: &SolverConfig) -> Result<JointSolution> {
    let homes = home_servers(s)?;
    let weights = MecWeights::from(cfg);

    // Optimistic first round: every task at home.
    let mut delays: BTreeMap<AvId, (f64, f64)> = s
        .vehicles
        .iter()
        .map(|v| {
            let dc = if v.compute_demand > 0.0 { v.workload_cycles / v.compute_demand } else { 0.0 };
            (v.id, (dc, 0.0))
        })
        .collect();
    let mut min_rates = coupled_min_rates(s, &delays)?;

    let mut best: Option<JointSolution> = None;
    for it in 1..=cfg.max_iters {
        let mut slicing = BTreeMap::new();
        let mut slicing_utility = 0.0;
        let mut feasible = true;
        for server in &s.mec_servers {
            let sol = solve_num_with_min_rates(s, server, cfg, &min_rates)?;
            feasible &= sol.feasible;
            slicing_utility += sol.utility;
            slicing.insert(server.id, sol);
        }

        let mut downlink = BTreeMap::new();
        for v in &s.vehicles {
            let rate = slicing
                .values()
                .map(|sol| sol.rate(v.id))
                .fold(0.0, f64::max);
            downlink.insert(v.id, transmission_delay(rate, &v.app));
        }
        let tasks = build_tasks(s, &homes, &downlink);
        let assignment = solve_assignment(&tasks, &s.mec_servers, &weights, cfg);

        // Recompute the coupling from the actual placements.
        for t in &tasks {
            let dc = match t.compute > 0.0 {
                true => processing_delay(
                    t,
                    *t_placement(&assignment.compute_server, t.av_id),
                    &s.mec_servers,
                    cfg,
                ),
                false => 0.0,
            };
            let ds = match t.storage > 0.0 {
                true => storage_delay(
                    t,
                    *t_placement(&assignment.storage_server, t.av_id),
                    &s.mec_servers,
                    cfg,
                ),
                false => 0.0,
            };
            delays.insert(t.av_id, (dc, ds));
        }
        let next_rates = coupled_min_rates(s, &delays)?;

        let converged = next_rates.iter().all(|(av, r)| {
            let old = min_rates.get(av).copied().unwrap_or(0.0);
            (r - old).abs() <= 1e-9 * old.max(1.0)
        });
        let iterate = JointSolution {
            slicing,
            assignment,
            converged,
            iterations: it,
            slicing_utility,
            feasible,
        };
        if best
            .as_ref()
            .is_none_or(|b| iterate.total_utility() > b.total_utility())
        {
            best = Some(iterate.clone());
        }
        if converged {
            return Ok(iterate);
        }
        min_rates = next_rates;
    }
    Ok(best.expect("at least one iterate"))
}

fn t_placement(map: &BTreeMap<AvId, Placement>, av: AvId) -> &Placement {
    map.get(&av).unwrap_or(&Placement::Cloud)
}
