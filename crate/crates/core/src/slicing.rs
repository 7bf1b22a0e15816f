//! Two-level bandwidth allocation for one MEC server: a grid search over
//! slicing ratios, an association search per candidate ratio (greedy
//! insertion plus one-move local search), and the closed-form per-station
//! split of a slice among its attached vehicles. A max-SINR association
//! with fixed ratios serves as the baseline scheme.
//!
//! With logarithmic rate utility the optimal split of one station's
//! bandwidth is an equal share, except that vehicles whose minimum
//! fraction exceeds the share get pinned to their minimum and the rest is
//! split equally; the solver exploits this closed form everywhere.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::float;
use crate::qos::required_rate;
use crate::radio::{link_quality, ReusePattern, SliceId};
use crate::scenario::{home_servers, AvId, BsId, MecServer, Scenario};

/// Tolerance for simplex sums and fraction budgets.
pub const SIMPLEX_EPS: f64 = 1e-9;
/// A relocation must improve utility by at least this much to be applied.
const ACCEPT_EPS: f64 = 1e-9;
/// Feasible solutions deliver at least `min_rate - RATE_EPS` to every AV.
pub const RATE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicingSolution {
    pub pattern: ReusePattern,
    pub association: BTreeMap<AvId, BsId>,
    #[serde(with = "fraction_map")]
    pub fractions: BTreeMap<(BsId, AvId), f64>,
    pub rates_bps: BTreeMap<AvId, f64>,
    pub utility: f64,
    pub feasible: bool,
    pub diagnostics: Vec<String>,
}

impl SlicingSolution {
    pub fn rate(&self, av: AvId) -> f64 {
        self.rates_bps.get(&av).copied().unwrap_or(0.0)
    }
}

mod fraction_map {
    use super::*;
    use serde::de::Deserializer;
    use serde::ser::Serializer;

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(BsId, AvId), f64>,
        ser: S,
    ) -> core::result::Result<S::Ok, S::Error> {
        let rows: Vec<(BsId, AvId, f64)> =
            map.iter().map(|(&(bs, av), &f)| (bs, av, f)).collect();
        serde::Serialize::serialize(&rows, ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> core::result::Result<BTreeMap<(BsId, AvId), f64>, D::Error> {
        let rows: Vec<(BsId, AvId, f64)> = serde::Deserialize::deserialize(de)?;
        Ok(rows.into_iter().map(|(bs, av, f)| ((bs, av), f)).collect())
    }
}

/// Split one station's bandwidth among attached vehicles with per-vehicle
/// minimum fractions: maximize Σ ln(fᵢ) subject to Σ fᵢ = 1, fᵢ ≥ minᵢ.
///
/// Vehicles whose minimum exceeds the running equal share are pinned to
/// their minimum (largest first); everyone else splits the remainder
/// equally. Returns `None` when the minima alone exceed the budget.
pub fn optimal_fractions(minima: &BTreeMap<AvId, f64>) -> Option<BTreeMap<AvId, f64>> {
    let n = minima.len();
    if n == 0 {
        return Some(BTreeMap::new());
    }
    let total: f64 = minima.values().sum();
    if total > 1.0 + SIMPLEX_EPS {
        return None;
    }
    let mut by_min: Vec<(AvId, f64)> = minima.iter().map(|(&av, &m)| (av, m)).collect();
    by_min.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut pinned_sum = 0.0;
    let mut pinned = 0usize;
    while pinned < n {
        let share = (1.0 - pinned_sum) / (n - pinned) as f64;
        if share >= by_min[pinned].1 {
            break;
        }
        pinned_sum += by_min[pinned].1;
        pinned += 1;
    }
    let share = if pinned == n { 0.0 } else { (1.0 - pinned_sum) / (n - pinned) as f64 };

    let mut out = BTreeMap::new();
    for (i, (av, m)) in by_min.into_iter().enumerate() {
        out.insert(av, if i < pinned { m } else { share });
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Precomputed per-(scenario, server) link data shared across grid points.
// ---------------------------------------------------------------------------

struct SliceProblem {
    av_ids: Vec<AvId>,
    bs_ids: Vec<BsId>,
    /// Candidate station indices per vehicle (covering, ascending id).
    cover: Vec<Vec<usize>>,
    /// Spectral efficiency, flat [av × bs × slice]; zero when the station
    /// does not cover the vehicle or does not transmit on the slice.
    eff: Vec<f64>,
    /// Linear SINR, same layout; zero when absent.
    sinr: Vec<f64>,
    min_rate: Vec<f64>,
    n_slices: usize,
    bandwidth: f64,
    /// ln(k) for k in 0..=n_avs, ln(0) stored as 0 and never used.
    ln_int: Vec<f64>,
}

impl SliceProblem {
    fn idx(&self, av: usize, bs: usize, slice: usize) -> usize {
        (av * self.bs_ids.len() + bs) * self.n_slices + slice
    }

    fn build(
        s: &Scenario,
        server: &MecServer,
        cfg: &SolverConfig,
        min_rates: &BTreeMap<AvId, f64>,
    ) -> Result<Self> {
        let homes = home_servers(s)?;
        let av_ids: Vec<AvId> = s
            .vehicles
            .iter()
            .filter(|v| homes.get(&v.id) == Some(&server.id))
            .map(|v| v.id)
            .collect();
        let bs_ids: Vec<BsId> = server.bs_ids.iter().copied().collect();
        let n_slices = ReusePattern::slice_count(s, server);
        // Membership and SINR do not depend on the ratios, so a uniform
        // reference pattern supplies both for the whole grid.
        let reference = equal_beta(n_slices);
        let rp = ReusePattern::build(s, server, &reference, cfg.interference_factor)?;

        let n_av = av_ids.len();
        let n_bs = bs_ids.len();
        let mut eff = vec![0.0; n_av * n_bs * n_slices];
        let mut sinr = vec![0.0; n_av * n_bs * n_slices];
        let mut cover = vec![Vec::new(); n_av];
        let mut min_rate = vec![0.0; n_av];

        for (ai, &av) in av_ids.iter().enumerate() {
            let v = s.vehicle(av)?;
            min_rate[ai] = match min_rates.get(&av) {
                Some(r) => *r,
                None => required_rate(av, &v.app)?.min_rate_bps,
            };
            for (bi, &bs_id) in bs_ids.iter().enumerate() {
                let bs = s.bs(bs_id)?;
                if !bs.covers(v.position_m) {
                    continue;
                }
                cover[ai].push(bi);
                let lq = link_quality(s, &rp, bs_id, av)?;
                for (slice, e) in &lq.spectral_eff_per_slice {
                    let si = slice.0 as usize;
                    let flat = (ai * n_bs + bi) * n_slices + si;
                    eff[flat] = *e;
                    sinr[flat] = lq
                        .sinr_db_per_slice
                        .get(slice)
                        .map(|db| float::powf(10.0, db / 10.0))
                        .unwrap_or(0.0);
                }
            }
        }

        let mut ln_int = vec![0.0; n_av + 2];
        for (k, slot) in ln_int.iter_mut().enumerate().skip(1) {
            *slot = float::ln(k as f64);
        }

        Ok(Self {
            av_ids,
            bs_ids,
            cover,
            eff,
            sinr,
            min_rate,
            n_slices,
            bandwidth: server.bandwidth_hz,
            ln_int,
        })
    }

    /// Rate at full fraction for each (av, bs) under the given ratios.
    fn denominators(&self, beta: &[f64]) -> Vec<f64> {
        let n_bs = self.bs_ids.len();
        let mut denom = vec![0.0; self.av_ids.len() * n_bs];
        for av in 0..self.av_ids.len() {
            for &bs in &self.cover[av] {
                let mut pooled = 0.0;
                for (si, b) in beta.iter().enumerate() {
                    pooled += b * self.eff[self.idx(av, bs, si)];
                }
                denom[av * n_bs + bs] = pooled * self.bandwidth;
            }
        }
        denom
    }

    /// Max-SINR level of each (av, bs) pair counting only slices with a
    /// positive ratio. Zero when the pair is unusable.
    fn sinr_levels(&self, beta: &[f64]) -> Vec<f64> {
        let n_bs = self.bs_ids.len();
        let mut level = vec![0.0; self.av_ids.len() * n_bs];
        for av in 0..self.av_ids.len() {
            for &bs in &self.cover[av] {
                let mut best = 0.0f64;
                for (si, b) in beta.iter().enumerate() {
                    if *b > 0.0 {
                        best = best.max(self.sinr[self.idx(av, bs, si)]);
                    }
                }
                level[av * n_bs + bs] = best;
            }
        }
        level
    }
}

fn equal_beta(k: usize) -> Vec<f64> {
    if k == 0 {
        return Vec::new();
    }
    let mut beta = vec![1.0 / k as f64; k];
    // Make the vector sum to exactly 1.0.
    let sum: f64 = beta.iter().take(k - 1).sum();
    beta[k - 1] = 1.0 - sum;
    beta
}

/// Enumerate the simplex grid at the given resolution in lexicographically
/// ascending order.
fn simplex_grid(k: usize, grid_step: f64) -> Vec<Vec<f64>> {
    let steps = float::round(1.0 / grid_step) as u32;
    let mut out = Vec::new();
    let mut current = vec![0u32; k];
    fn rec(k: usize, remaining: u32, steps: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<f64>>) {
        if k == 1 {
            current.push(remaining);
            out.push(current.iter().map(|c| f64::from(*c) / f64::from(steps)).collect());
            current.pop();
            return;
        }
        for c in 0..=remaining {
            current.push(c);
            rec(k - 1, remaining - c, steps, current, out);
            current.pop();
        }
    }
    if k > 0 {
        current.clear();
        rec(k, steps, steps, &mut current, &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// Incremental per-station state for the association search.
// ---------------------------------------------------------------------------

/// Aggregate view of one station's attached set, supporting O(1) utility
/// queries in the common unpinned case and O(n) otherwise.
#[derive(Clone)]
struct BsState {
    n: usize,
    sum_ln_denom: f64,
    sum_fmin: f64,
    /// Minimum fractions as a bits → count multiset (all values ≥ 0, so
    /// bit order equals numeric order).
    fmins: BTreeMap<u64, u32>,
    cached_utility: f64,
}

impl BsState {
    fn new() -> Self {
        Self {
            n: 0,
            sum_ln_denom: 0.0,
            sum_fmin: 0.0,
            fmins: BTreeMap::new(),
            cached_utility: 0.0,
        }
    }

    fn can_take(&self, fmin: f64) -> bool {
        fmin <= 1.0 + SIMPLEX_EPS && self.sum_fmin + fmin <= 1.0 + SIMPLEX_EPS
    }

    fn insert(&mut self, fmin: f64, ln_denom: f64, ln_int: &[f64]) {
        self.n += 1;
        self.sum_ln_denom += ln_denom;
        self.sum_fmin += fmin;
        *self.fmins.entry(fmin.to_bits()).or_insert(0) += 1;
        self.cached_utility = self.utility_adjusted(None, None, ln_int);
    }

    fn remove(&mut self, fmin: f64, ln_denom: f64, ln_int: &[f64]) {
        self.n -= 1;
        self.sum_ln_denom -= ln_denom;
        self.sum_fmin -= fmin;
        let bits = fmin.to_bits();
        let count = self.fmins.get_mut(&bits).expect("fmin present");
        *count -= 1;
        if *count == 0 {
            self.fmins.remove(&bits);
        }
        self.cached_utility = self.utility_adjusted(None, None, ln_int);
    }

    fn max_fmin(&self, add: Option<f64>, remove: Option<f64>) -> f64 {
        let mut base = None;
        for (&bits, &count) in self.fmins.iter().rev() {
            let v = f64::from_bits(bits);
            if remove == Some(v) && count == 1 {
                continue;
            }
            base = Some(v);
            break;
        }
        match (base, add) {
            (Some(b), Some(a)) => b.max(a),
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => 0.0,
        }
    }

    /// Visit the multiset in descending order with one optional extra value
    /// and one optional skipped value; stop when the callback returns false.
    fn for_each_desc(
        &self,
        add: Option<f64>,
        remove: Option<f64>,
        mut f: impl FnMut(f64) -> bool,
    ) {
        let mut add = add;
        let mut remove = remove;
        for (&bits, &count) in self.fmins.iter().rev() {
            let v = f64::from_bits(bits);
            if let Some(a) = add {
                if a > v {
                    if !f(a) {
                        return;
                    }
                    add = None;
                }
            }
            let mut c = count;
            if remove == Some(v) {
                c -= 1;
                remove = None;
            }
            for _ in 0..c {
                if !f(v) {
                    return;
                }
            }
        }
        if let Some(a) = add {
            let _ = f(a);
        }
    }

    /// Station utility after hypothetically applying the adjustments.
    /// `add`/`remove` carry (fmin, ln_denom).
    fn utility_adjusted(
        &self,
        add: Option<(f64, f64)>,
        remove: Option<(f64, f64)>,
        ln_int: &[f64],
    ) -> f64 {
        let n = self.n + usize::from(add.is_some()) - usize::from(remove.is_some());
        if n == 0 {
            return 0.0;
        }
        let s = self.sum_ln_denom + add.map_or(0.0, |a| a.1) - remove.map_or(0.0, |r| r.1);
        let max_f = self.max_fmin(add.map(|a| a.0), remove.map(|r| r.0));
        if max_f * n as f64 <= 1.0 {
            // Equal split satisfies every minimum.
            return s - n as f64 * ln_int[n];
        }
        // Pin the largest minima until the equal share of the remainder
        // clears the next one.
        let mut pinned_sum = 0.0;
        let mut ln_pinned = 0.0;
        let mut pinned = 0usize;
        self.for_each_desc(add.map(|a| a.0), remove.map(|r| r.0), |fmin| {
            let share = (1.0 - pinned_sum) / (n - pinned) as f64;
            if share >= fmin {
                return false;
            }
            pinned_sum += fmin;
            ln_pinned += float::ln(fmin);
            pinned += 1;
            pinned < n
        });
        if pinned == n {
            return s + ln_pinned;
        }
        let share = (1.0 - pinned_sum) / (n - pinned) as f64;
        s + ln_pinned + (n - pinned) as f64 * float::ln(share)
    }
}

// ---------------------------------------------------------------------------
// Association search for one candidate ratio vector.
// ---------------------------------------------------------------------------

struct Candidate {
    assoc: Vec<usize>,
    utility: f64,
}

fn search_association(prob: &SliceProblem, denom: &[f64], refine: bool) -> Option<Candidate> {
    let n_av = prob.av_ids.len();
    let n_bs = prob.bs_ids.len();
    let ln_denom: Vec<f64> =
        denom.iter().map(|d| if *d > 0.0 { float::ln(*d) } else { f64::NEG_INFINITY }).collect();
    let fmin: Vec<f64> = (0..n_av * n_bs)
        .map(|i| {
            let d = denom[i];
            if d > 0.0 {
                prob.min_rate[i / n_bs] / d
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let mut states: Vec<BsState> = (0..n_bs).map(|_| BsState::new()).collect();
    let mut assoc = vec![usize::MAX; n_av];

    // Greedy best-marginal-utility insertion in vehicle-id order.
    for av in 0..n_av {
        let mut best: Option<(f64, usize)> = None;
        for &bs in &prob.cover[av] {
            let i = av * n_bs + bs;
            if !states[bs].can_take(fmin[i]) {
                continue;
            }
            let delta = states[bs].utility_adjusted(Some((fmin[i], ln_denom[i])), None, &prob.ln_int)
                - states[bs].cached_utility;
            if best.is_none_or(|(b, _)| delta > b) {
                best = Some((delta, bs));
            }
        }
        let (_, bs) = best?;
        let i = av * n_bs + bs;
        states[bs].insert(fmin[i], ln_denom[i], &prob.ln_int);
        assoc[av] = bs;
    }

    // One-move local search: relocate a vehicle to another covering
    // station whenever that improves total utility.
    if refine {
        let mut total: f64 = states.iter().map(|st| st.cached_utility).sum();
        let mut passes = 0;
        loop {
            passes += 1;
            let mut improved = false;
            for av in 0..n_av {
                let from = assoc[av];
                let fi = av * n_bs + from;
                for &to in &prob.cover[av] {
                    if to == from {
                        continue;
                    }
                    let ti = av * n_bs + to;
                    if !states[to].can_take(fmin[ti]) {
                        continue;
                    }
                    let delta = states[from]
                        .utility_adjusted(None, Some((fmin[fi], ln_denom[fi])), &prob.ln_int)
                        + states[to].utility_adjusted(
                            Some((fmin[ti], ln_denom[ti])),
                            None,
                            &prob.ln_int,
                        )
                        - states[from].cached_utility
                        - states[to].cached_utility;
                    if delta > ACCEPT_EPS {
                        states[from].remove(fmin[fi], ln_denom[fi], &prob.ln_int);
                        states[to].insert(fmin[ti], ln_denom[ti], &prob.ln_int);
                        assoc[av] = to;
                        let new_total: f64 = states.iter().map(|st| st.cached_utility).sum();
                        debug_assert!(new_total > total, "local search must be monotone");
                        total = new_total;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved || passes > 10_000 {
                break;
            }
        }
    }

    let utility = states.iter().map(|st| st.cached_utility).sum();
    Some(Candidate { assoc, utility })
}

/// Association by highest SINR among covering stations, ties to the lower
/// station id. Returns `None` for a vehicle with no usable station.
fn max_sinr_association(prob: &SliceProblem, beta: &[f64]) -> Option<Vec<usize>> {
    let n_bs = prob.bs_ids.len();
    let levels = prob.sinr_levels(beta);
    let mut assoc = vec![usize::MAX; prob.av_ids.len()];
    for av in 0..prob.av_ids.len() {
        let mut best: Option<(f64, usize)> = None;
        for &bs in &prob.cover[av] {
            let level = levels[av * n_bs + bs];
            if level <= 0.0 {
                continue;
            }
            if best.is_none_or(|(b, _)| level > b) {
                best = Some((level, bs));
            }
        }
        assoc[av] = best?.1;
    }
    Some(assoc)
}

/// Utility of a fixed association under the given denominators, or `None`
/// when some station cannot cover its minima.
fn fixed_association_utility(
    prob: &SliceProblem,
    denom: &[f64],
    assoc: &[usize],
) -> Option<f64> {
    let n_bs = prob.bs_ids.len();
    let mut states: Vec<BsState> = (0..n_bs).map(|_| BsState::new()).collect();
    for (av, &bs) in assoc.iter().enumerate() {
        let i = av * n_bs + bs;
        let d = denom[i];
        if !(d > 0.0) {
            return None;
        }
        let fmin = prob.min_rate[av] / d;
        if !states[bs].can_take(fmin) {
            return None;
        }
        states[bs].insert(fmin, float::ln(d), &prob.ln_int);
    }
    Some(states.iter().map(|st| st.cached_utility).sum())
}

// ---------------------------------------------------------------------------
// Public entry points.
// ---------------------------------------------------------------------------

/// Score one `(ratios, association)` pair: build the reuse pattern,
/// compute per-vehicle pooled rates, split each station's bandwidth with
/// [`optimal_fractions`], and sum log utilities. Infeasibility (minimum
/// fractions exceeding a station's budget, or an unmet rate requirement)
/// is reported on the solution, not as an error.
pub fn evaluate(
    s: &Scenario,
    server: &MecServer,
    beta: &[f64],
    association: &BTreeMap<AvId, BsId>,
    cfg: &SolverConfig,
) -> Result<SlicingSolution> {
    let min_rates = base_min_rates(s, server, association)?;
    evaluate_with_min_rates(s, server, beta, association, cfg, &min_rates)
}

fn base_min_rates(
    s: &Scenario,
    _server: &MecServer,
    association: &BTreeMap<AvId, BsId>,
) -> Result<BTreeMap<AvId, f64>> {
    let mut rates = BTreeMap::new();
    for av in association.keys() {
        let v = s.vehicle(*av)?;
        rates.insert(*av, required_rate(*av, &v.app)?.min_rate_bps);
    }
    Ok(rates)
}

pub fn evaluate_with_min_rates(
    s: &Scenario,
    server: &MecServer,
    beta: &[f64],
    association: &BTreeMap<AvId, BsId>,
    cfg: &SolverConfig,
    min_rates: &BTreeMap<AvId, f64>,
) -> Result<SlicingSolution> {
    let pattern = ReusePattern::build(s, server, beta, cfg.interference_factor)?;
    let mut diagnostics = Vec::new();
    let mut feasible = true;

    // Group vehicles by station and derive minimum fractions.
    let mut groups: BTreeMap<BsId, BTreeMap<AvId, f64>> = BTreeMap::new();
    let mut denom_by_av: BTreeMap<AvId, f64> = BTreeMap::new();
    for (&av, &bs_id) in association {
        let v = s.vehicle(av)?;
        let bs = s.bs(bs_id)?;
        if !bs.covers(v.position_m) {
            return Err(Error::OutOfCoverage { bs: bs_id.0, av: av.0 });
        }
        let lq = link_quality(s, &pattern, bs_id, av)?;
        let mut pooled = 0.0;
        for slice in &pattern.slices {
            if let Some(eff) = lq.spectral_eff_per_slice.get(&slice.id) {
                pooled += slice.ratio * eff * server.bandwidth_hz;
            }
        }
        denom_by_av.insert(av, pooled);
        let min_rate = min_rates.get(&av).copied().unwrap_or(0.0);
        if pooled <= 0.0 {
            feasible = false;
            diagnostics.push(format!("{av} on {bs_id}: zero pooled bandwidth"));
            groups.entry(bs_id).or_default().insert(av, f64::INFINITY);
        } else {
            groups.entry(bs_id).or_default().insert(av, min_rate / pooled);
        }
    }

    let mut fractions = BTreeMap::new();
    let mut rates_bps = BTreeMap::new();
    let mut utility = 0.0;
    for (bs_id, minima) in &groups {
        match optimal_fractions(minima) {
            Some(split) => {
                for (av, f) in split {
                    let rate = f * denom_by_av[&av];
                    if rate > 0.0 {
                        utility += float::ln(rate);
                    }
                    if rate < min_rates.get(&av).copied().unwrap_or(0.0) - RATE_EPS {
                        feasible = false;
                        diagnostics.push(format!("{av}: rate {rate:.1} below requirement"));
                    }
                    fractions.insert((*bs_id, av), f);
                    rates_bps.insert(av, rate);
                }
            }
            None => {
                feasible = false;
                let need: f64 = minima.values().sum();
                diagnostics.push(format!(
                    "{bs_id}: sum of minimum fractions {need:.3} exceeds 1"
                ));
                for (&av, &m) in minima {
                    fractions.insert((*bs_id, av), m.min(1.0));
                    rates_bps.insert(av, 0.0);
                }
            }
        }
    }

    Ok(SlicingSolution {
        pattern,
        association: association.clone(),
        fractions,
        rates_bps,
        utility,
        feasible,
        diagnostics,
    })
}

/// Maximize aggregate log-rate utility over the ratio grid and the
/// vehicle–station association, with per-vehicle rate requirements from
/// the QoS model.
pub fn solve_num(s: &Scenario, server: &MecServer, cfg: &SolverConfig) -> Result<SlicingSolution> {
    let min_rates = all_base_min_rates(s)?;
    solve_num_with_min_rates(s, server, cfg, &min_rates)
}

fn all_base_min_rates(s: &Scenario) -> Result<BTreeMap<AvId, f64>> {
    s.vehicles
        .iter()
        .map(|v| Ok((v.id, required_rate(v.id, &v.app)?.min_rate_bps)))
        .collect()
}

pub fn solve_num_with_min_rates(
    s: &Scenario,
    server: &MecServer,
    cfg: &SolverConfig,
    min_rates: &BTreeMap<AvId, f64>,
) -> Result<SlicingSolution> {
    let prob = SliceProblem::build(s, server, cfg, min_rates)?;
    if prob.av_ids.is_empty() {
        let beta = equal_beta(prob.n_slices);
        return evaluate_with_min_rates(s, server, &beta, &BTreeMap::new(), cfg, min_rates);
    }

    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    for beta in simplex_grid(prob.n_slices, cfg.grid_step) {
        let denom = prob.denominators(&beta);
        let Some(cand) = search_association(&prob, &denom, true) else { continue };
        if best.as_ref().is_none_or(|(u, _, _)| cand.utility > *u) {
            best = Some((cand.utility, beta, cand.assoc));
        }
    }

    // The baseline operating point (fixed ratios, max-SINR association)
    // is always a candidate, so the optimized scheme can never fall below
    // the baseline on the same instance.
    let fixed = baseline_beta(cfg, prob.n_slices);
    if let Some(assoc) = max_sinr_association(&prob, &fixed) {
        let denom = prob.denominators(&fixed);
        if let Some(u) = fixed_association_utility(&prob, &denom, &assoc) {
            if best.as_ref().is_none_or(|(b, _, _)| u > *b) {
                best = Some((u, fixed, assoc));
            }
        }
    }

    match best {
        Some((_, beta, assoc)) => {
            let association = assoc_map(&prob, &assoc);
            evaluate_with_min_rates(s, server, &beta, &association, cfg, min_rates)
        }
        None => {
            // Nothing on the grid is feasible; report the binding
            // constraints at equal ratios under max-SINR association.
            let beta = equal_beta(prob.n_slices);
            let assoc = max_sinr_association(&prob, &beta);
            let association = match assoc {
                Some(a) => assoc_map(&prob, &a),
                None => BTreeMap::new(),
            };
            let mut sol =
                evaluate_with_min_rates(s, server, &beta, &association, cfg, min_rates)?;
            sol.feasible = false;
            if sol.diagnostics.is_empty() {
                sol.diagnostics.push("no feasible ratio vector on the grid".into());
            }
            Ok(sol)
        }
    }
}

fn assoc_map(prob: &SliceProblem, assoc: &[usize]) -> BTreeMap<AvId, BsId> {
    assoc
        .iter()
        .enumerate()
        .map(|(av, &bs)| (prob.av_ids[av], prob.bs_ids[bs]))
        .collect()
}

fn baseline_beta(cfg: &SolverConfig, k: usize) -> Vec<f64> {
    match &cfg.baseline_beta {
        Some(beta) if beta.len() == k => beta.clone(),
        _ => equal_beta(k),
    }
}

/// Baseline scheme: fixed ratios, every vehicle on its highest-SINR
/// covering station, bandwidth split per station as usual.
pub fn solve_max_sinr(
    s: &Scenario,
    server: &MecServer,
    cfg: &SolverConfig,
) -> Result<SlicingSolution> {
    let min_rates = all_base_min_rates(s)?;
    solve_max_sinr_with_min_rates(s, server, cfg, &min_rates)
}

pub fn solve_max_sinr_with_min_rates(
    s: &Scenario,
    server: &MecServer,
    cfg: &SolverConfig,
    min_rates: &BTreeMap<AvId, f64>,
) -> Result<SlicingSolution> {
    let prob = SliceProblem::build(s, server, cfg, min_rates)?;
    let beta = baseline_beta(cfg, prob.n_slices);
    if prob.av_ids.is_empty() {
        return evaluate_with_min_rates(s, server, &beta, &BTreeMap::new(), cfg, min_rates);
    }
    match max_sinr_association(&prob, &beta) {
        Some(assoc) => {
            let association = assoc_map(&prob, &assoc);
            evaluate_with_min_rates(s, server, &beta, &association, cfg, min_rates)
        }
        None => {
            let mut sol =
                evaluate_with_min_rates(s, server, &beta, &BTreeMap::new(), cfg, min_rates)?;
            sol.feasible = false;
            sol.diagnostics.push("some vehicle has no usable covering station".into());
            Ok(sol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::scenario::{generate_case_study, BaseStation, BsKind, ServerId};

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::case_study()
    }

    #[test]
    fn equal_split_without_minima() {
        let minima: BTreeMap<AvId, f64> = [(AvId(0), 0.0), (AvId(1), 0.0)].into();
        let f = optimal_fractions(&minima).unwrap();
        assert_eq!(f[&AvId(0)], 0.5);
        assert_eq!(f[&AvId(1)], 0.5);
    }

    #[test]
    fn single_vehicle_takes_everything() {
        let minima: BTreeMap<AvId, f64> = [(AvId(3), 0.2)].into();
        let f = optimal_fractions(&minima).unwrap();
        assert_eq!(f[&AvId(3)], 1.0);
    }

    #[test]
    fn pinning_matches_kkt_example() {
        let minima: BTreeMap<AvId, f64> =
            [(AvId(0), 0.6), (AvId(1), 0.0), (AvId(2), 0.0)].into();
        let f = optimal_fractions(&minima).unwrap();
        assert!((f[&AvId(0)] - 0.6).abs() < 1e-12);
        assert!((f[&AvId(1)] - 0.2).abs() < 1e-12);
        assert!((f[&AvId(2)] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn overcommitted_minima_infeasible() {
        let minima: BTreeMap<AvId, f64> = [(AvId(0), 0.7), (AvId(1), 0.5)].into();
        assert!(optimal_fractions(&minima).is_none());
    }

    /// Brute-force cross-check of the pinning closed form on a 0.001 grid.
    #[test]
    fn pinning_beats_grid_enumeration() {
        let cases: [&[f64]; 4] = [
            &[0.6, 0.0, 0.0],
            &[0.35, 0.3, 0.0],
            &[0.2, 0.2, 0.2],
            &[0.45, 0.1, 0.05],
        ];
        for minima_vec in cases {
            let minima: BTreeMap<AvId, f64> = minima_vec
                .iter()
                .enumerate()
                .map(|(i, m)| (AvId(i as u32), *m))
                .collect();
            let f = optimal_fractions(&minima).unwrap();
            let closed: f64 = f.values().map(|x| x.ln()).sum();
            // Exhaustive 0.001-step search over (f0, f1), f2 = remainder.
            let mut best = f64::NEG_INFINITY;
            for i in 0..=1000 {
                for j in 0..=(1000 - i) {
                    let f0 = i as f64 / 1000.0;
                    let f1 = j as f64 / 1000.0;
                    let f2 = 1.0 - f0 - f1;
                    if f0 < minima_vec[0] || f1 < minima_vec[1] || f2 < minima_vec[2] - 1e-12 {
                        continue;
                    }
                    if f0 > 0.0 && f1 > 0.0 && f2 > 0.0 {
                        best = best.max(f0.ln() + f1.ln() + f2.ln());
                    }
                }
            }
            assert!(closed >= best - 1e-6, "closed {closed} vs grid {best}");
        }
    }

    fn single_enb_scenario() -> (Scenario, MecServer) {
        let mut s = generate_case_study(0.12, 3, &cfg()).unwrap();
        s.base_stations.truncate(1);
        s.base_stations[0].reuse_disk_m = None;
        s.mec_servers[0].bs_ids = [BsId(0)].into_iter().collect();
        s.vehicles.truncate(4);
        let server = s.mec_servers[0].clone();
        (s, server)
    }

    #[test]
    fn degenerate_single_station() {
        let (s, server) = single_enb_scenario();
        let solver = SolverConfig::default();
        let sol = solve_num(&s, &server, &solver).unwrap();
        assert!(sol.feasible);
        // One slice, ratio one; fractions equal split across the 4 AVs.
        assert_eq!(sol.pattern.slices.len(), 1);
        assert_eq!(sol.pattern.slices[0].ratio, 1.0);
        for f in sol.fractions.values() {
            assert!((f - 0.25).abs() < 1e-12);
        }
        // Rate equals fraction × pooled bandwidth, utility is the ln-sum.
        let manual: f64 = sol.rates_bps.values().map(|r| r.ln()).sum();
        assert!((manual - sol.utility).abs() < 1e-9);
    }

    #[test]
    fn one_vehicle_gets_full_band() {
        let (mut s, server) = single_enb_scenario();
        s.vehicles.truncate(1);
        let solver = SolverConfig::default();
        let sol = solve_num(&s, &server, &solver).unwrap();
        let av = s.vehicles[0].id;
        assert_eq!(sol.fractions[&(BsId(0), av)], 1.0);
        let lq = link_quality(&s, &sol.pattern, BsId(0), av).unwrap();
        let expected = lq.spectral_eff_per_slice[&SliceId(0)] * server.bandwidth_hz;
        assert!((sol.rate(av) - expected).abs() < 1e-6);
        assert!((sol.utility - expected.ln()).abs() < 1e-9);
    }

    #[test]
    fn simplex_grid_shape() {
        let grid = simplex_grid(3, 0.05);
        assert_eq!(grid.len(), 231);
        for beta in &grid {
            let sum: f64 = beta.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // Lexicographically ascending.
        for w in grid.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(simplex_grid(1, 0.02), alloc::vec![alloc::vec![1.0]]);
    }

    #[test]
    fn solver_output_invariants() {
        let s = generate_case_study(0.14, 17, &cfg()).unwrap();
        let server = s.mec_servers[0].clone();
        let solver = SolverConfig { grid_step: 0.1, ..SolverConfig::default() };
        let sol = solve_num(&s, &server, &solver).unwrap();
        assert!(sol.feasible);
        let ratio_sum: f64 = sol.pattern.slices.iter().map(|sl| sl.ratio).sum();
        assert!((ratio_sum - 1.0).abs() < SIMPLEX_EPS);
        let mut per_bs: BTreeMap<BsId, f64> = BTreeMap::new();
        for (&(bs, _), &f) in &sol.fractions {
            assert!((0.0..=1.0 + SIMPLEX_EPS).contains(&f));
            *per_bs.entry(bs).or_default() += f;
        }
        for (bs, sum) in per_bs {
            assert!(sum <= 1.0 + 1e-6, "{bs}: fractions sum {sum}");
        }
        // Rate requirements hold for every vehicle.
        for v in &s.vehicles {
            let need = required_rate(v.id, &v.app).unwrap().min_rate_bps;
            assert!(sol.rate(v.id) >= need - RATE_EPS, "{} starved", v.id);
        }
        // Association respects coverage.
        for (&av, &bs) in &sol.association {
            let v = s.vehicle(av).unwrap();
            assert!(s.bs(bs).unwrap().covers(v.position_m));
        }
    }

    #[test]
    fn proposed_never_below_baseline() {
        for seed in [1u64, 5, 9, 23] {
            let s = generate_case_study(0.16, seed, &cfg()).unwrap();
            let server = s.mec_servers[0].clone();
            let solver = SolverConfig { grid_step: 0.1, ..SolverConfig::default() };
            let num = solve_num(&s, &server, &solver).unwrap();
            let base = solve_max_sinr(&s, &server, &solver).unwrap();
            assert!(num.feasible && base.feasible);
            assert!(
                num.utility >= base.utility - 1e-9,
                "seed {seed}: {} < {}",
                num.utility,
                base.utility
            );
        }
    }

    #[test]
    fn max_sinr_prefers_enb_at_moderate_distance() {
        // eNB at 100 m (44 dB SNR) versus an AP at 50 m whose co-channel
        // twin sits beyond its interference radius: the eNB wins.
        let mut s = generate_case_study(0.12, 7, &cfg()).unwrap();
        s.vehicles.truncate(1);
        s.vehicles[0].position_m = [515.0, -10.0];
        let ap = BaseStation {
            id: BsId(20),
            kind: BsKind::WifiAp,
            position_m: [565.0, -10.0],
            tx_power_dbm: 28.45,
            range_m: 180.0,
            pathloss_a_db: -40.0,
            pathloss_b_db: -35.0,
            mac_efficiency: 0.8,
            reuse_disk_m: None,
        };
        let far_ap = BaseStation {
            id: BsId(21),
            kind: BsKind::WifiAp,
            position_m: [565.0 + 365.0, -10.0],
            ..ap.clone()
        };
        let enb = BaseStation {
            id: BsId(22),
            kind: BsKind::Enb,
            position_m: [415.0, -10.0],
            tx_power_dbm: 40.0,
            range_m: 600.0,
            pathloss_a_db: -30.0,
            pathloss_b_db: -35.0,
            mac_efficiency: 1.0,
            reuse_disk_m: Some(150.0),
        };
        s.base_stations = alloc::vec![ap, far_ap, enb];
        s.mec_servers[0].bs_ids = [BsId(20), BsId(21), BsId(22)].into_iter().collect();
        let server = s.mec_servers[0].clone();
        let solver = SolverConfig::default();
        let sol = solve_max_sinr(&s, &server, &solver).unwrap();
        assert_eq!(sol.association[&s.vehicles[0].id], BsId(22));
    }

    #[test]
    fn max_sinr_tie_breaks_to_lower_id() {
        let mut s = generate_case_study(0.12, 7, &cfg()).unwrap();
        s.vehicles.truncate(1);
        s.vehicles[0].position_m = [500.0, -10.0];
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
        s.base_stations = alloc::vec![ap(4, 450.0), ap(9, 550.0)];
        s.mec_servers[0].bs_ids = [BsId(4), BsId(9)].into_iter().collect();
        let server = s.mec_servers[0].clone();
        let sol = solve_max_sinr(&s, &server, &SolverConfig::default()).unwrap();
        assert_eq!(sol.association[&s.vehicles[0].id], BsId(4));
    }

    #[test]
    fn association_invariant_under_common_power_offset() {
        let s = generate_case_study(0.14, 31, &cfg()).unwrap();
        let server = s.mec_servers[0].clone();
        let solver = SolverConfig::default();
        let base = solve_max_sinr(&s, &server, &solver).unwrap();
        let mut shifted = s.clone();
        for bs in &mut shifted.base_stations {
            bs.tx_power_dbm += 7.0;
        }
        shifted.noise_dbm += 7.0;
        let server = shifted.mec_servers[0].clone();
        let moved = solve_max_sinr(&shifted, &server, &solver).unwrap();
        assert_eq!(base.association, moved.association);
    }

    #[test]
    fn zero_wifi_ratio_starves_unreused_ap() {
        // One AP whose disk overlaps the eNB's reuse disk gets only the
        // wifi slice; with that ratio at zero its vehicle has no bandwidth.
        let mut s = generate_case_study(0.12, 11, &cfg()).unwrap();
        s.vehicles.truncate(1);
        s.vehicles[0].position_m = [250.0, 1.75];
        s.base_stations.retain(|b| matches!(b.id, BsId(0) | BsId(3)));
        s.mec_servers[0].bs_ids = [BsId(0), BsId(3)].into_iter().collect();
        let server = s.mec_servers[0].clone();
        let solver = SolverConfig::default();
        let assoc: BTreeMap<AvId, BsId> = [(s.vehicles[0].id, BsId(3))].into();
        let sol = evaluate(&s, &server, &[1.0, 0.0], &assoc, &solver).unwrap();
        assert!(!sol.feasible);
        assert!(!sol.diagnostics.is_empty());
    }

    #[test]
    fn empty_server_domain_is_trivially_feasible() {
        let mut s = generate_case_study(0.12, 13, &cfg()).unwrap();
        s.vehicles.clear();
        let server = s.mec_servers[0].clone();
        let sol = solve_num(&s, &server, &SolverConfig::default()).unwrap();
        assert!(sol.feasible);
        assert_eq!(sol.utility, 0.0);
        assert!(sol.association.is_empty());
    }

    #[test]
    fn solution_round_trips_through_json() {
        let (s, server) = single_enb_scenario();
        let sol = solve_num(&s, &server, &SolverConfig::default()).unwrap();
        let text = serde_json::to_string(&sol).unwrap();
        let back: SlicingSolution = serde_json::from_str(&text).unwrap();
        assert_eq!(sol, back);
    }
}
