//! Runtime insertion of extra authentications into platform slack.
//!
//! A sample that the periodic policy leaves unauthenticated can still be
//! signed, sent with its MAC and verified when the sending ECU, the bus and the
//! receiving ECU all absorb the extra work without any periodic job missing its
//! deadline. Candidates are visited in sample order. Samples taken at the same
//! instant compete by reward, the value of closing the largest hole in the
//! authentication pattern.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edf_sim::{check_transaction_timing, jobs_of, simulate_jobs, Job, SimError, Trace};
use crate::model::{ControlTransaction, ModelError, QocCurve, Resource, SystemModel, TaskId};
use crate::time::Tick;

/// Task id carried by sporadic non-real-time frames in bus traces.
pub const SPORADIC_TASK: TaskId = TaskId::MAX;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum OpportunisticError {
    #[error("time {t} lies outside the authentication bracket [{prev:?}, {next}]")]
    OutsideBracket { t: Tick, prev: Option<Tick>, next: Tick },
    #[error("{got} weights for {expected} transactions")]
    WeightCount { expected: usize, got: usize },
    #[error("periodic workload already misses {misses} deadline(s) on {resource:?}")]
    InfeasibleBaseline { resource: Resource, misses: usize },
    #[error("sporadic traffic: {0}")]
    Traffic(String),
    #[error("{plant}: curve has no series for f = {f}")]
    NoSeries { plant: String, f: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Sporadic non-real-time bus frames competing with the periodic messages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SporadicTrafficModel {
    pub min_interarrival: Tick,
    pub frame_time: Tick,
    /// Upper bound on the fraction of bus time the frames may take.
    pub bandwidth_cap: f64,
    pub seed: u64,
}

impl SporadicTrafficModel {
    pub fn none() -> Self {
        SporadicTrafficModel { min_interarrival: 1, frame_time: 1, bandwidth_cap: 0.0, seed: 0 }
    }

    /// Arrival instants in `[0, horizon)`. Gaps are drawn from
    /// `[g, 1.5·g]` with `g = max(min_interarrival, frame_time / cap)`, so
    /// both the spacing and the bandwidth cap hold by construction.
    pub fn arrivals(&self, horizon: Tick, seed: u64) -> Result<Vec<Tick>, OpportunisticError> {
        if !(0.0..=1.0).contains(&self.bandwidth_cap) {
            return Err(OpportunisticError::Traffic(alloc::format!("cap {} outside [0, 1]", self.bandwidth_cap)));
        }
        if self.bandwidth_cap == 0.0 {
            return Ok(Vec::new());
        }
        if self.min_interarrival < 1 || self.frame_time < 1 {
            return Err(OpportunisticError::Traffic("inter-arrival and frame time must be positive".into()));
        }
        let by_cap = libm::ceil(self.frame_time as f64 / self.bandwidth_cap) as Tick;
        let gap = self.min_interarrival.max(by_cap);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ seed.rotate_left(32));
        let mut out = Vec::new();
        let mut t = rng.random_range(0..gap);
        while t < horizon {
            out.push(t);
            t += gap + rng.random_range(0..=gap / 2);
        }
        Ok(out)
    }
}

/// `ω·J(Δl, f)` with `Δl = ⌊min(t − prev, next − t) / p⌋`.
///
/// Before the first authentication (`prev = None`) only the distance to `next`
/// counts. `Δl` outside the tabulated range of the `f` series is clamped to
/// its ends, so distances shorter than one block read the block's own bound.
pub fn compute_reward(
    t: Tick,
    prev_auth: Option<Tick>,
    next_auth: Tick,
    p: Tick,
    curve: &QocCurve,
    f: u32,
    weight: f64,
) -> Result<f64, OpportunisticError> {
    if t > next_auth || prev_auth.is_some_and(|prev| t < prev) {
        return Err(OpportunisticError::OutsideBracket { t, prev: prev_auth, next: next_auth });
    }
    let gap = match prev_auth {
        Some(prev) => (t - prev).min(next_auth - t),
        None => next_auth - t,
    };
    let dl = gap / p;
    if dl == 0 {
        return Ok(0.0);
    }
    let series = curve.series(f);
    let (Some(&(lo, _)), Some(&(hi, _))) = (series.first(), series.last()) else {
        return Err(OpportunisticError::NoSeries { plant: curve.plant_id.clone(), f });
    };
    let l = u32::try_from(dl).unwrap_or(u32::MAX).clamp(lo, hi);
    let j = series.iter().take_while(|&&(x, _)| x <= l).last().map_or(0.0, |&(_, j)| j);
    Ok(weight * j)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpportunisticOptions {
    /// One weight per transaction; all ones when empty.
    #[serde(default)]
    pub weights: Vec<f64>,
    /// Smallest `Δl` worth an extra authentication.
    #[serde(default = "one")]
    pub min_gain: u32,
    pub horizon: Tick,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantMetrics {
    pub transaction: u32,
    pub plant_id: String,
    pub l: u32,
    pub f: u32,
    /// Samples whose control deadline lies inside the horizon.
    pub samples: u64,
    pub periodic_blocks: usize,
    pub opportunistic: usize,
    /// Mean distance in periods between consecutive authentication events.
    pub mean_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpportunisticMetrics {
    pub plants: Vec<PlantMetrics>,
    pub bus_utilization_delta: f64,
    pub ecu_utilization_delta: BTreeMap<u32, f64>,
    pub sporadic_utilization: f64,
    pub periodic_misses: usize,
    pub timing_violations: usize,
    pub valid: bool,
}

/// An accepted extra authentication: sample `sample` of transaction `transaction`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Insertion {
    pub transaction: u32,
    pub sample: u64,
    pub time: Tick,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpportunisticRun {
    pub metrics: OpportunisticMetrics,
    pub insertions: Vec<Insertion>,
    pub traces: Vec<(Resource, Trace)>,
}

/// Mean gap between the first and last of `events` (sorted sample indices),
/// or `fallback` with fewer than two events.
pub fn mean_distance(events: &[u64], fallback: f64) -> f64 {
    match (events.first(), events.last()) {
        (Some(&a), Some(&b)) if events.len() >= 2 => (b - a) as f64 / (events.len() - 1) as f64,
        _ => fallback,
    }
}

struct Lane {
    resource: Resource,
    jobs: Vec<Job>,
    at: BTreeMap<(TaskId, u64), usize>,
}

impl Lane {
    fn misses(&self, horizon: Tick) -> usize {
        simulate_jobs(&self.jobs, horizon, self.resource != Resource::Bus).miss_count()
    }
}

struct Plan<'a> {
    tx: &'a ControlTransaction,
    weight: f64,
    curve: Option<&'a QocCurve>,
    samples: u64,
    extra: BTreeSet<u64>,
}

impl Plan<'_> {
    fn authenticated(&self, k: u64) -> bool {
        self.tx.sens.is_extended(k) || self.extra.contains(&k)
    }

    fn sample_time(&self, k: u64) -> Tick {
        self.tx.sens.phi.unwrap_or(0) + k as Tick * self.tx.p
    }

    /// Next periodic authentication at or after `k`, beyond the horizon if need be.
    fn next_periodic(&self, k: u64) -> u64 {
        let s = u64::from(self.tx.policy.s.unwrap_or(0));
        let l = u64::from(self.tx.policy.l);
        if k <= s {
            s
        } else if self.tx.sens.is_extended(k) {
            k
        } else {
            s + (k - s).div_ceil(l) * l
        }
    }

    fn reward(&self, k: u64) -> Result<f64, OpportunisticError> {
        let prev = (0..k).rev().find(|&j| self.authenticated(j));
        let next = self.next_periodic(k);
        let t = self.sample_time(k);
        let (prev_t, next_t) = (prev.map(|j| self.sample_time(j)), self.sample_time(next));
        match self.curve {
            Some(c) if !c.series(self.tx.policy.f).is_empty() => {
                compute_reward(t, prev_t, next_t, self.tx.p, c, self.tx.policy.f, self.weight)
            }
            _ => {
                let gap = prev_t.map_or(next_t - t, |pt| (t - pt).min(next_t - t));
                Ok(self.weight * (gap / self.tx.p) as f64)
            }
        }
    }

    fn gain(&self, k: u64) -> u64 {
        let next = self.next_periodic(k);
        match (0..k).rev().find(|&j| self.authenticated(j)) {
            Some(prev) => (k - prev).min(next - k),
            None => next - k,
        }
    }

    fn events(&self) -> Vec<u64> {
        let s = u64::from(self.tx.policy.s.unwrap_or(0));
        let l = u64::from(self.tx.policy.l);
        (0..self.samples)
            .filter(|&k| (k >= s && (k - s) % l == 0) || self.extra.contains(&k))
            .collect()
    }
}

/// Inserts extra authentications into the slack of a fully parameterized
/// system and replays the result.
///
/// Transactions without a curve in `curves` rank their samples by `ω·Δl`.
/// Sporadic frames are non-real-time and may not exceed the bus blocking
/// budget the analysis already accounts for.
pub fn run_opportunistic(
    system: &SystemModel,
    curves: &[QocCurve],
    sporadic: &SporadicTrafficModel,
    opts: &OpportunisticOptions,
) -> Result<OpportunisticRun, OpportunisticError> {
    let n = system.transactions.len();
    if !opts.weights.is_empty() && opts.weights.len() != n {
        return Err(OpportunisticError::WeightCount { expected: n, got: opts.weights.len() });
    }
    let horizon = opts.horizon;

    let mut lanes: Vec<Lane> = Vec::new();
    for r in system.resources() {
        let jobs = jobs_of(&system.tasks_on(r), horizon)?;
        lanes.push(Lane { resource: r, jobs, at: BTreeMap::new() });
    }
    let arrivals = sporadic.arrivals(horizon, opts.seed)?;
    if !arrivals.is_empty() {
        let budget = system.bus_blocking();
        if sporadic.frame_time > budget {
            return Err(OpportunisticError::Traffic(alloc::format!(
                "frame time {} exceeds the bus blocking budget {budget}",
                sporadic.frame_time
            )));
        }
        let bus = match lanes.iter_mut().find(|l| l.resource == Resource::Bus) {
            Some(bus) => bus,
            None => {
                lanes.push(Lane { resource: Resource::Bus, jobs: Vec::new(), at: BTreeMap::new() });
                lanes.last_mut().unwrap()
            }
        };
        for (i, &t) in arrivals.iter().enumerate() {
            bus.jobs.push(Job { task: SPORADIC_TASK, index: i as u64, release: t, deadline: None, cost: sporadic.frame_time });
        }
    }
    for lane in &mut lanes {
        lane.at = lane.jobs.iter().enumerate().map(|(i, j)| ((j.task, j.index), i)).collect();
        let misses = lane.misses(horizon);
        if misses > 0 {
            return Err(OpportunisticError::InfeasibleBaseline { resource: lane.resource, misses });
        }
    }
    let lane_index: BTreeMap<Resource, usize> = lanes.iter().enumerate().map(|(i, l)| (l.resource, i)).collect();

    let mut plans: Vec<Plan> = Vec::with_capacity(n);
    for (i, tx) in system.transactions.iter().enumerate() {
        if !tx.tasks().iter().all(|t| t.is_complete()) {
            return Err(ModelError::Unset { task: tx.sens.id, field: "phi/d/s" }.into());
        }
        let lag = u64::from(tx.link.sensing_lag);
        let ctrl_phi = tx.ctrl.phi.unwrap_or(0);
        let ctrl_d = tx.ctrl.d.unwrap_or(tx.p);
        // samples whose whole chain is judged inside the horizon
        let last = horizon - ctrl_phi - ctrl_d;
        let samples = if last < 0 { 0 } else { (last / tx.p + 1) as u64 }.saturating_sub(lag);
        plans.push(Plan {
            tx,
            weight: opts.weights.get(i).copied().unwrap_or(1.0),
            curve: curves.iter().find(|c| c.plant_id == tx.plant_id),
            samples,
            extra: BTreeSet::new(),
        });
    }

    // candidates grouped by sampling instant
    let mut by_time: BTreeMap<Tick, Vec<(usize, u64)>> = BTreeMap::new();
    for (i, plan) in plans.iter().enumerate() {
        for k in 0..plan.samples {
            if !plan.tx.sens.is_extended(k) {
                by_time.entry(plan.sample_time(k)).or_default().push((i, k));
            }
        }
    }

    let mut insertions = Vec::new();
    let mut bus_extra: Tick = 0;
    let mut ecu_extra: BTreeMap<u32, Tick> = system.ecus.iter().map(|e| (e.id, 0)).collect();
    for (time, group) in by_time {
        let mut ranked = Vec::new();
        for (i, k) in group {
            if plans[i].gain(k) >= u64::from(opts.min_gain.max(1)) {
                ranked.push((plans[i].reward(k)?, i, k));
            }
        }
        ranked.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| plans[a.1].tx.plant_id.cmp(&plans[b.1].tx.plant_id))
                .then(a.1.cmp(&b.1))
        });
        for (reward, i, k) in ranked {
            if reward <= 0.0 {
                continue;
            }
            let tx = plans[i].tx;
            let j = k + u64::from(tx.link.sensing_lag);
            let mut edits = Vec::new();
            for (task, job) in [(&tx.sens, k), (&tx.net, j), (&tx.ctrl, j)] {
                let r = system.resource_of(task.id).ok_or(ModelError::Transaction(alloc::format!("task {} is unmapped", task.id)))?;
                let li = *lane_index.get(&r).ok_or(SimError::MissingTrace(r))?;
                let Some(&ji) = lanes[li].at.get(&(task.id, job)) else { continue };
                edits.push((li, ji, lanes[li].jobs[ji].cost, task.c_ext, r));
            }
            if edits.len() < 3 {
                continue;
            }
            for &(li, ji, _, ext, _) in &edits {
                lanes[li].jobs[ji].cost = ext;
            }
            let touched: BTreeSet<usize> = edits.iter().map(|e| e.0).collect();
            if touched.iter().all(|&li| lanes[li].misses(horizon) == 0) {
                for &(_, _, old, ext, r) in &edits {
                    match r {
                        Resource::Bus => bus_extra += ext - old,
                        Resource::Ecu(e) => *ecu_extra.entry(e).or_default() += ext - old,
                    }
                }
                plans[i].extra.insert(k);
                insertions.push(Insertion { transaction: tx.id, sample: k, time, reward });
            } else {
                for &(li, ji, old, _, _) in &edits {
                    lanes[li].jobs[ji].cost = old;
                }
            }
        }
    }

    let traces: Vec<(Resource, Trace)> = lanes
        .iter()
        .map(|l| (l.resource, simulate_jobs(&l.jobs, horizon, l.resource != Resource::Bus)))
        .collect();
    let periodic_misses = traces.iter().map(|(_, t)| t.miss_count()).sum();
    let timing_violations = check_transaction_timing(system, &traces)?.violations.len();

    let h = horizon as f64;
    let plants = plans
        .iter()
        .map(|plan| {
            let l = plan.tx.policy.l;
            PlantMetrics {
                transaction: plan.tx.id,
                plant_id: plan.tx.plant_id.clone(),
                l,
                f: plan.tx.policy.f,
                samples: plan.samples,
                periodic_blocks: plan.events().len() - plan.extra.len(),
                opportunistic: plan.extra.len(),
                mean_distance: mean_distance(&plan.events(), f64::from(l)),
            }
        })
        .collect();
    let metrics = OpportunisticMetrics {
        plants,
        bus_utilization_delta: bus_extra as f64 / h,
        ecu_utilization_delta: ecu_extra.into_iter().map(|(e, x)| (e, x as f64 / h)).collect(),
        sporadic_utilization: arrivals.len() as f64 * sporadic.frame_time as f64 / h,
        periodic_misses,
        timing_violations,
        valid: periodic_misses == 0 && timing_violations == 0,
    };
    Ok(OpportunisticRun { metrics, insertions, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AuthPolicy, ControlTransaction, Ecu, Link, SecureTask, TaskKind};
    use crate::time::Resolution;
    use alloc::vec;

    const MS: Tick = 10_000;

    fn acc() -> QocCurve {
        QocCurve::from_points("ACC", [(2, 2, 0.34904), (3, 2, 0.5), (4, 2, 0.7), (5, 2, 0.9)]).unwrap()
    }

    #[test]
    fn reward_of_a_midpoint_sample() {
        let r = compute_reward(40 * MS, Some(0), 100 * MS, 20 * MS, &acc(), 2, 1.0).unwrap();
        assert!((r - 0.34904).abs() < 1e-12);
        let doubled = compute_reward(40 * MS, Some(0), 100 * MS, 20 * MS, &acc(), 2, 2.0).unwrap();
        assert!((doubled - 2.0 * r).abs() < 1e-12);
    }

    #[test]
    fn reward_vanishes_at_an_authentication() {
        assert_eq!(compute_reward(0, Some(0), 100 * MS, 20 * MS, &acc(), 2, 1.0).unwrap(), 0.0);
        assert_eq!(compute_reward(99 * MS, Some(0), 100 * MS, 20 * MS, &acc(), 2, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn reward_outside_the_bracket_is_an_error() {
        let e = compute_reward(120 * MS, Some(0), 100 * MS, 20 * MS, &acc(), 2, 1.0);
        assert!(matches!(e, Err(OpportunisticError::OutsideBracket { .. })));
        assert!(compute_reward(5, Some(10), 100, 20, &acc(), 2, 1.0).is_err());
    }

    #[test]
    fn reward_before_the_first_authentication_uses_the_next_one() {
        let r = compute_reward(0, None, 60 * MS, 20 * MS, &acc(), 2, 1.0).unwrap();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn reward_is_monotone_in_the_distance() {
        let c = acc();
        let mut last = 0.0;
        for k in 0..=5 {
            let r = compute_reward(k * 20 * MS, Some(0), 200 * MS, 20 * MS, &c, 2, 1.0).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    /// One transaction on two otherwise idle ECUs, period 10, every stage 1 tick
    /// regular and 2 ticks extended.
    fn idle(l: u32, net_cost: (Tick, Tick), background: Vec<SecureTask>) -> SystemModel {
        let sens = SecureTask::new(0, TaskKind::Sensing, 1, 10).with_ext(2).with_offset(0).with_deadline(3);
        let net = SecureTask::new(1, TaskKind::Message, net_cost.0, 10).with_ext(net_cost.1).with_offset(3).with_deadline(4);
        let ctrl = SecureTask::new(2, TaskKind::Control, 1, 10).with_ext(2).with_offset(7).with_deadline(3);
        let tx = ControlTransaction::assemble(0, "ACC", sens, net, ctrl, AuthPolicy::new(0, 1, l), Link::default()).unwrap();
        let mut bus = vec![1];
        bus.extend(background.iter().map(|t| t.id));
        SystemModel {
            resolution: Resolution::default(),
            ecus: vec![Ecu { id: 0, tasks: vec![0] }, Ecu { id: 1, tasks: vec![2] }],
            bus,
            transactions: vec![tx],
            background,
            c_max_nrt: 0,
        }
    }

    fn opts(horizon: Tick) -> OpportunisticOptions {
        OpportunisticOptions { weights: Vec::new(), min_gain: 1, horizon, seed: 0 }
    }

    #[test]
    fn idle_platform_authenticates_the_gaps() {
        let sys = idle(4, (1, 2), Vec::new());
        let run = run_opportunistic(&sys, &[], &SporadicTrafficModel::none(), &opts(400)).unwrap();
        let m = &run.metrics.plants[0];
        assert!(m.mean_distance <= 2.0, "{m:?}");
        assert_eq!(m.mean_distance, 1.0);
        assert!(run.metrics.valid);

        let midpoints = OpportunisticOptions { min_gain: 2, ..opts(400) };
        let run = run_opportunistic(&sys, &[], &SporadicTrafficModel::none(), &midpoints).unwrap();
        assert_eq!(run.metrics.plants[0].mean_distance, 2.0);
        assert!(run.insertions.iter().all(|x| x.sample % 4 == 2));
    }

    #[test]
    fn saturated_bus_keeps_the_periodic_distance() {
        // every bus window [10k + 3, 10k + 7) is full, with the periodic MAC included
        let mut fill = vec![SecureTask::new(9, TaskKind::Background, 2, 10).with_offset(3).with_deadline(4)];
        for (i, phi) in [13, 23, 33].into_iter().enumerate() {
            fill.push(SecureTask::new(10 + i as u32, TaskKind::Background, 1, 40).with_offset(phi).with_deadline(4));
        }
        let sys = idle(4, (1, 2), fill);
        let run = run_opportunistic(&sys, &[], &SporadicTrafficModel::none(), &opts(400)).unwrap();
        assert!(run.insertions.is_empty());
        assert_eq!(run.metrics.plants[0].mean_distance, 4.0);
        assert_eq!(run.metrics.bus_utilization_delta, 0.0);
    }

    #[test]
    fn weight_count_must_match() {
        let sys = idle(4, (1, 2), Vec::new());
        let o = OpportunisticOptions { weights: vec![1.0, 1.0], ..opts(100) };
        assert!(matches!(
            run_opportunistic(&sys, &[], &SporadicTrafficModel::none(), &o),
            Err(OpportunisticError::WeightCount { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn overloaded_baseline_is_rejected() {
        let hog = SecureTask::new(9, TaskKind::Background, 4, 10).with_offset(3).with_deadline(4);
        let sys = idle(4, (1, 2), vec![hog]);
        assert!(matches!(
            run_opportunistic(&sys, &[], &SporadicTrafficModel::none(), &opts(100)),
            Err(OpportunisticError::InfeasibleBaseline { resource: Resource::Bus, .. })
        ));
    }

    #[test]
    fn sporadic_arrivals_respect_spacing_and_cap() {
        let m = SporadicTrafficModel { min_interarrival: 100, frame_time: 10, bandwidth_cap: 0.05, seed: 3 };
        let a = m.arrivals(100_000, 1).unwrap();
        assert!(a.windows(2).all(|w| w[1] - w[0] >= 200));
        assert!(a.len() as f64 * 10.0 / 100_000.0 <= 0.05);
        assert_eq!(a, m.arrivals(100_000, 1).unwrap());
        assert_ne!(a, m.arrivals(100_000, 2).unwrap());
    }

    #[test]
    fn mean_distance_is_the_average_gap() {
        assert_eq!(mean_distance(&[0, 3, 4, 5], 9.0), 5.0 / 3.0);
        assert_eq!(mean_distance(&[7], 9.0), 9.0);
    }
}
