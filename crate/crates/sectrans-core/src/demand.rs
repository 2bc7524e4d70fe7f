//! Frame counting, demand functions and EDF schedulability verdicts.
//!
//! Job `k` of a task arrives at `φ + k·p` and is due at `φ + d + k·p`. The
//! demand of a task over `[t1, t2]` is the cost of its jobs that arrive at or
//! after `t1` and are due at or before `t2`.

use alloc::vec;
use alloc::vec::Vec;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::model::{t_max, ModelError, Resource, SecureTask, SystemModel, TaskId};
use crate::time::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub t1: Tick,
    pub t2: Tick,
}

impl Interval {
    pub fn new(t1: Tick, t2: Tick) -> Self {
        Interval { t1, t2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Schedulable,
    /// A sufficient test could not prove schedulability.
    Rejected,
    /// An exact test found a violation.
    NotSchedulable,
}

/// An interval on which demand exceeds the available supply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub interval: Interval,
    pub demand: Tick,
    pub supply: Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl Verdict {
    pub fn schedulable() -> Self {
        Verdict { status: Status::Schedulable, witness: None }
    }

    pub fn is_schedulable(&self) -> bool {
        self.status == Status::Schedulable
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DemandError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("task {0} has an offset; the sporadic test ignores offsets")]
    OffsetPresent(TaskId),
    #[error("task {task}: jitter {jitter} is not below deadline {d}")]
    JitterTooLarge { task: TaskId, jitter: Tick, d: Tick },
    #[error("expected {expected} jitter values, got {got}")]
    JitterCount { expected: usize, got: usize },
}

fn phi_d(t: &SecureTask) -> Result<(Tick, Tick), ModelError> {
    let phi = t.phi.ok_or(ModelError::Unset { task: t.id, field: "phi" })?;
    let d = t.d.ok_or(ModelError::Unset { task: t.id, field: "d" })?;
    Ok((phi, d))
}

/// Jobs with `arrival >= t1` and `deadline <= t2`, for the grid `first + j·step`, `j >= 0`.
fn grid_count(t1: Tick, t2: Tick, first_arrival: Tick, d: Tick, step: Tick) -> Tick {
    let last = Integer::div_floor(&(t2 - first_arrival - d), &step);
    let first = 0.max(Integer::div_ceil(&(t1 - first_arrival), &step));
    0.max(last - first + 1)
}

/// Number of jobs of `t` inside `iv`, regular and extended alike.
pub fn count_regular(t: &SecureTask, iv: Interval) -> Result<Tick, ModelError> {
    let (phi, d) = phi_d(t)?;
    Ok(grid_count(iv.t1, iv.t2, phi, d, t.p))
}

/// Number of extended jobs of `t` inside `iv`: one grid of stride `l·p` per
/// position `m` in the authentication block.
pub fn count_extended(t: &SecureTask, iv: Interval) -> Result<Tick, ModelError> {
    let (phi, d) = phi_d(t)?;
    let Some(l) = t.l else { return Ok(0) };
    let s = t.s.ok_or(ModelError::Unset { task: t.id, field: "s" })?;
    let stride = Tick::from(l) * t.p;
    Ok((0..t.f)
        .map(|m| grid_count(iv.t1, iv.t2, phi + Tick::from(s + m) * t.p, d, stride))
        .sum())
}

pub fn demand(t: &SecureTask, iv: Interval) -> Result<Tick, ModelError> {
    let regular = count_regular(t, iv)?;
    let extended = if t.delta_c() == 0 { 0 } else { count_extended(t, iv)? };
    Ok(t.c_reg * regular + t.delta_c() * extended)
}

pub fn total_demand(tasks: &[SecureTask], iv: Interval) -> Result<Tick, ModelError> {
    tasks.iter().map(|t| demand(t, iv)).sum()
}

/// Sorted, deduplicated arrival and absolute-deadline instants up to `t_max`.
pub fn testing_sets(tasks: &[SecureTask]) -> Result<(Vec<Tick>, Vec<Tick>), ModelError> {
    let horizon = t_max(tasks)?;
    let mut arr = Vec::new();
    let mut dead = Vec::new();
    for t in tasks {
        let (phi, d) = phi_d(t)?;
        let mut a = phi;
        while a <= horizon {
            arr.push(a);
            if a + d <= horizon {
                dead.push(a + d);
            }
            a += t.p;
        }
    }
    arr.sort_unstable();
    arr.dedup();
    dead.sort_unstable();
    dead.dedup();
    Ok((arr, dead))
}

/// Range-add / max tree over the arrival instants, used by the sweep.
struct MaxTree {
    n: usize,
    max: Vec<Tick>,
    lazy: Vec<Tick>,
}

impl MaxTree {
    fn new(values: &[Tick]) -> Self {
        let n = values.len();
        let mut tree = MaxTree { n, max: vec![0; 4 * n.max(1)], lazy: vec![0; 4 * n.max(1)] };
        if n > 0 {
            tree.build(1, 0, n - 1, values);
        }
        tree
    }

    fn build(&mut self, node: usize, lo: usize, hi: usize, values: &[Tick]) {
        if lo == hi {
            self.max[node] = values[lo];
            return;
        }
        let mid = (lo + hi) / 2;
        self.build(2 * node, lo, mid, values);
        self.build(2 * node + 1, mid + 1, hi, values);
        self.max[node] = self.max[2 * node].max(self.max[2 * node + 1]);
    }

    /// Adds `v` to every position in `0..=end`.
    fn add_prefix(&mut self, end: usize, v: Tick) {
        self.add(1, 0, self.n - 1, end, v);
    }

    fn add(&mut self, node: usize, lo: usize, hi: usize, end: usize, v: Tick) {
        if lo > end {
            return;
        }
        if hi <= end {
            self.max[node] += v;
            self.lazy[node] += v;
            return;
        }
        let mid = (lo + hi) / 2;
        self.add(2 * node, lo, mid, end, v);
        self.add(2 * node + 1, mid + 1, hi, end, v);
        self.max[node] = self.max[2 * node].max(self.max[2 * node + 1]) + self.lazy[node];
    }

    /// Largest position `< len` whose value exceeds `bound`.
    fn last_above(&self, len: usize, bound: Tick) -> Option<usize> {
        if len == 0 {
            return None;
        }
        self.find(1, 0, self.n - 1, len - 1, bound, 0)
    }

    fn find(&self, node: usize, lo: usize, hi: usize, end: usize, bound: Tick, carried: Tick) -> Option<usize> {
        if lo > end || self.max[node] + carried <= bound {
            return None;
        }
        if lo == hi {
            return Some(lo);
        }
        let mid = (lo + hi) / 2;
        let carried = carried + self.lazy[node];
        self.find(2 * node + 1, mid + 1, hi, end, bound, carried)
            .or_else(|| self.find(2 * node, lo, mid, end, bound, carried))
    }
}

/// Checks `Σ df(t1, t2) <= t2 - t1 - blocking` for every arrival `t1` and
/// deadline `t2` with `t1 < t2 <= t_max` whose interval holds at least one job.
/// An interval without jobs cannot end in a miss, so the blocking term is not
/// charged to it.
///
/// Returns the violating interval with the earliest `t2`, and for that `t2`
/// the latest `t1`, so the reported interval is the shortest one ending at
/// the first point where demand overtakes supply.
pub fn first_violation(tasks: &[SecureTask], blocking: Tick) -> Result<Option<Witness>, ModelError> {
    if tasks.is_empty() {
        return Ok(None);
    }
    for t in tasks {
        if t.l.is_some() && t.delta_c() != 0 && t.s.is_none() {
            return Err(ModelError::Unset { task: t.id, field: "s" });
        }
    }
    let horizon = t_max(tasks)?;
    let (arr, dead) = testing_sets(tasks)?;

    let mut jobs: Vec<(Tick, Tick, Tick)> = Vec::new();
    for t in tasks {
        let (phi, d) = phi_d(t)?;
        let mut k = 0u64;
        let mut a = phi;
        while a + d <= horizon {
            jobs.push((a + d, a, t.cost_of_job(k)));
            k += 1;
            a += t.p;
        }
    }
    jobs.sort_unstable();

    // Position i holds t1_i + (demand of jobs inside [t1_i, current t2]).
    let mut tree = MaxTree::new(&arr);
    let mut next_job = 0;
    // Arrivals that precede some counted job; only those intervals carry demand.
    let mut busy = 0;
    for &t2 in &dead {
        while next_job < jobs.len() && jobs[next_job].0 <= t2 {
            let (_, a, c) = jobs[next_job];
            let idx = arr.partition_point(|&x| x <= a) - 1;
            tree.add_prefix(idx, c);
            busy = busy.max(idx + 1);
            next_job += 1;
        }
        let below = arr.partition_point(|&x| x < t2).min(busy);
        if let Some(i) = tree.last_above(below, t2 - blocking) {
            let interval = Interval::new(arr[i], t2);
            let demand = total_demand(tasks, interval)?;
            return Ok(Some(Witness { interval, demand, supply: t2 - arr[i] - blocking }));
        }
    }
    Ok(None)
}

/// Long-run utilization as an exact fraction `(num, den)`, or `None` on overflow.
fn exact_utilization(tasks: &[SecureTask]) -> Option<(i128, i128)> {
    let mut num: i128 = 0;
    let mut den: i128 = 1;
    for t in tasks {
        let (tn, td) = match (t.l, t.delta_c()) {
            (Some(l), dc) if dc != 0 => {
                let l = i128::from(l);
                (i128::from(t.c_reg) * l + i128::from(dc) * i128::from(t.f), l * i128::from(t.p))
            }
            _ => (i128::from(t.c_reg), i128::from(t.p)),
        };
        let g = den.gcd(&td);
        let new_den = (den / g).checked_mul(td)?;
        num = num.checked_mul(new_den / den)?.checked_add(tn.checked_mul(new_den / td)?)?;
        den = new_den;
        let r = num.gcd(&den).max(1);
        num /= r;
        den /= r;
    }
    Some((num, den))
}

pub fn utilization(tasks: &[SecureTask]) -> f64 {
    tasks
        .iter()
        .map(|t| match (t.l, t.delta_c()) {
            (Some(l), dc) if dc != 0 => {
                (t.c_reg as f64 * f64::from(l) + dc as f64 * f64::from(t.f)) / (f64::from(l) * t.p as f64)
            }
            _ => t.c_reg as f64 / t.p as f64,
        })
        .sum()
}

/// Whether long-run utilization exceeds one, compared exactly when it fits in `i128`.
pub fn overloaded(tasks: &[SecureTask]) -> bool {
    match exact_utilization(tasks) {
        Some((num, den)) => num > den,
        None => utilization(tasks) > 1.0,
    }
}

fn verdict(tasks: &[SecureTask], blocking: Tick, failure: Status) -> Result<Verdict, ModelError> {
    let witness = first_violation(tasks, blocking)?;
    if witness.is_some() || overloaded(tasks) {
        Ok(Verdict { status: failure, witness })
    } else {
        Ok(Verdict::schedulable())
    }
}

/// Exact preemptive EDF test for fully parameterized tasks on one processor.
pub fn edf_preemptive_schedulable(tasks: &[SecureTask]) -> Result<Verdict, ModelError> {
    verdict(tasks, 0, Status::NotSchedulable)
}

/// Longest transmission that can block a message: the longest extended
/// frame in the set or the longest non-real-time frame.
pub fn blocking_time(msgs: &[SecureTask], c_max_nrt: Tick) -> Tick {
    msgs.iter().map(|m| m.c_ext).max().unwrap_or(0).max(c_max_nrt)
}

/// Sufficient non-preemptive EDF test: the preemptive condition with the
/// supply reduced by the longest blocking transmission.
pub fn edf_nonpreemptive_schedulable(msgs: &[SecureTask], c_max_nrt: Tick) -> Result<Verdict, ModelError> {
    verdict(msgs, blocking_time(msgs, c_max_nrt), Status::Rejected)
}

/// Sporadic message test with `(c, p, d)` triples. Offsets are not allowed.
fn sporadic_test(items: &[(Tick, Tick, Tick)], c_max_nrt: Tick) -> Verdict {
    if items.is_empty() {
        return Verdict::schedulable();
    }
    let not = |witness| Verdict { status: Status::NotSchedulable, witness };
    let c_m = items.iter().map(|x| x.0).max().unwrap_or(0).max(c_max_nrt);

    let (mut num, mut den): (i128, i128) = (0, 1);
    for &(c, p, _) in items {
        let g = den.gcd(&i128::from(p));
        let nd = den / g * i128::from(p);
        num = num * (nd / den) + i128::from(c) * (nd / i128::from(p));
        den = nd;
    }
    if num > den {
        return not(None);
    }

    let max_d = items.iter().map(|x| x.2).max().unwrap_or(0);
    let horizon = if num == den {
        let periods: Vec<Tick> = items.iter().map(|x| x.1).collect();
        let h = periods.iter().fold(1, |acc: Tick, &p| acc.lcm(&p));
        2 * h + max_d
    } else {
        let u = num as f64 / den as f64;
        let slack: f64 = items.iter().map(|&(c, p, d)| (1.0 - d as f64 / p as f64) * c as f64).sum();
        let bound = (c_m as f64 + slack) / (1.0 - u);
        max_d.max(libm::floor(bound) as Tick)
    };

    let mut points = Vec::new();
    for &(_, p, d) in items {
        let mut t = d;
        while t <= horizon {
            points.push(t);
            t += p;
        }
    }
    points.sort_unstable();
    points.dedup();
    for t in points {
        let load: Tick = items.iter().map(|&(c, p, d)| 0.max(Integer::div_floor(&(t - d), &p) + 1) * c).sum();
        if load + c_m > t {
            return not(Some(Witness { interval: Interval::new(0, t), demand: load + c_m, supply: t }));
        }
    }
    Verdict::schedulable()
}

/// Utilization plus processor-demand test for sporadic messages under
/// non-preemptive EDF. Each message contributes its extended transmission
/// time as `c`, which is exact for messages without authentication overhead.
pub fn edf_sporadic_np_schedulable(msgs: &[SecureTask], c_max_nrt: Tick) -> Result<Verdict, DemandError> {
    let mut items = Vec::with_capacity(msgs.len());
    for m in msgs {
        if matches!(m.phi, Some(phi) if phi != 0) {
            return Err(DemandError::OffsetPresent(m.id));
        }
        let d = m.d.ok_or(ModelError::Unset { task: m.id, field: "d" })?;
        items.push((m.c_ext, m.p, d));
    }
    Ok(sporadic_test(&items, c_max_nrt))
}

/// The sporadic test with every relative deadline replaced by `φ + d`.
///
/// This variant is unsound for strictly periodic messages with offsets. It is
/// kept to reproduce a counterexample, not for analysis.
pub fn offset_extended_np_test(msgs: &[SecureTask]) -> Result<Verdict, ModelError> {
    let mut items = Vec::with_capacity(msgs.len());
    for m in msgs {
        let (phi, d) = phi_d(m)?;
        items.push((m.c_ext, m.p, phi + d));
    }
    Ok(sporadic_test(&items, 0))
}

/// Shortens each deadline by the matching worst-case release jitter.
pub fn apply_jitter(tasks: &[SecureTask], jitters: &[Tick]) -> Result<Vec<SecureTask>, DemandError> {
    if tasks.len() != jitters.len() {
        return Err(DemandError::JitterCount { expected: tasks.len(), got: jitters.len() });
    }
    tasks
        .iter()
        .zip(jitters)
        .map(|(t, &j)| {
            let d = t.d.ok_or(ModelError::Unset { task: t.id, field: "d" })?;
            if j >= d || j < 0 {
                return Err(DemandError::JitterTooLarge { task: t.id, jitter: j, d });
            }
            let mut out = t.clone();
            out.d = Some(d - j);
            Ok(out)
        })
        .collect()
}

/// Verdicts for every ECU (preemptive) and the bus (non-preemptive).
pub fn analyze_system(system: &SystemModel) -> Result<Vec<(Resource, Verdict)>, ModelError> {
    let mut out = Vec::new();
    for r in system.resources() {
        let tasks = system.tasks_on(r);
        let v = match r {
            Resource::Ecu(_) => edf_preemptive_schedulable(&tasks)?,
            Resource::Bus => edf_nonpreemptive_schedulable(&tasks, system.c_max_nrt)?,
        };
        out.push((r, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskKind;

    fn task(id: u32, c: Tick, p: Tick, phi: Tick, d: Tick) -> SecureTask {
        SecureTask::new(id, TaskKind::Background, c, p).with_offset(phi).with_deadline(d)
    }

    fn alternating_set() -> Vec<SecureTask> {
        vec![
            SecureTask::implicit(1, TaskKind::Sensing, 2, 10).with_ext(4).with_auth(2, 1, 0),
            SecureTask::implicit(2, TaskKind::Sensing, 2, 10).with_ext(4).with_auth(2, 1, 1),
            SecureTask::implicit(3, TaskKind::Control, 4, 20).with_ext(7).with_auth(1, 1, 0),
        ]
    }

    fn offset_counterexample() -> Vec<SecureTask> {
        vec![
            SecureTask::new(1, TaskKind::Message, 20, 50).with_offset(20).with_deadline(30),
            SecureTask::new(2, TaskKind::Message, 21, 100).with_offset(10).with_deadline(100),
        ]
    }

    #[test]
    fn regular_counts() {
        assert_eq!(count_regular(&task(1, 1, 10, 0, 10), Interval::new(0, 20)), Ok(2));
        assert_eq!(count_regular(&task(1, 1, 5, 2, 3), Interval::new(2, 5)), Ok(1));
        assert_eq!(count_regular(&task(1, 1, 5, 0, 3), Interval::new(0, 2)), Ok(0));
    }

    #[test]
    fn extended_counts() {
        let t = SecureTask::implicit(1, TaskKind::Sensing, 1, 10).with_ext(2).with_auth(2, 2, 0);
        assert_eq!(count_extended(&t, Interval::new(0, 40)), Ok(4));
        let t = SecureTask::implicit(1, TaskKind::Sensing, 1, 10).with_ext(2).with_auth(2, 1, 1);
        assert_eq!(count_extended(&t, Interval::new(0, 20)), Ok(1));
        assert_eq!(count_extended(&task(1, 1, 10, 0, 10), Interval::new(0, 40)), Ok(0));
    }

    #[test]
    fn unset_offset_is_an_error() {
        let t = SecureTask::new(4, TaskKind::Background, 1, 10).with_deadline(10);
        assert_eq!(count_regular(&t, Interval::new(0, 10)), Err(ModelError::Unset { task: 4, field: "phi" }));
    }

    #[test]
    fn alternating_set_demand() {
        let set = alternating_set();
        assert_eq!(demand(&set[0], Interval::new(0, 20)), Ok(6));
        assert_eq!(demand(&task(9, 5, 10, 0, 10), Interval::new(0, 10)), Ok(5));
        assert_eq!(total_demand(&set, Interval::new(0, 20)), Ok(19));
    }

    #[test]
    fn testing_set_examples() {
        let (arr, dead) = testing_sets(&[task(1, 1, 5, 0, 3)]).unwrap();
        assert_eq!(arr, vec![0, 5, 10]);
        assert_eq!(dead, vec![3, 8, 13]);
        let (arr, _) = testing_sets(&alternating_set()).unwrap();
        assert_eq!(arr, vec![0, 10, 20, 30, 40, 50, 60]);
        assert_eq!(testing_sets(&[]), Err(ModelError::EmptyTaskSet));
    }

    #[test]
    fn all_extended_set_is_overloaded() {
        let set = [
            SecureTask::implicit(1, TaskKind::Sensing, 2, 10).with_ext(4).with_auth(1, 1, 0),
            SecureTask::implicit(2, TaskKind::Sensing, 2, 10).with_ext(4).with_auth(1, 1, 0),
            SecureTask::implicit(3, TaskKind::Control, 4, 20).with_ext(7).with_auth(1, 1, 0),
        ];
        assert!((utilization(&set) - 1.15).abs() < 1e-12);
        let v = edf_preemptive_schedulable(&set).unwrap();
        assert_eq!(v.status, Status::NotSchedulable);
        assert!(v.witness.is_some());
    }

    #[test]
    fn alternating_set_is_schedulable() {
        assert!(edf_preemptive_schedulable(&alternating_set()).unwrap().is_schedulable());
        assert!(edf_preemptive_schedulable(&[]).unwrap().is_schedulable());
    }

    #[test]
    fn early_long_frame_is_rejected_on_shortest_interval() {
        let v = edf_nonpreemptive_schedulable(&offset_counterexample(), 0).unwrap();
        assert_eq!(v.status, Status::Rejected);
        assert_eq!(v.witness, Some(Witness { interval: Interval::new(20, 50), demand: 20, supply: 9 }));
    }

    #[test]
    fn single_message_needs_twice_its_length() {
        let ok = [task(1, 3, 10, 0, 6)];
        let tight = [task(1, 3, 10, 0, 5)];
        assert!(edf_nonpreemptive_schedulable(&ok, 0).unwrap().is_schedulable());
        assert_eq!(edf_nonpreemptive_schedulable(&tight, 0).unwrap().status, Status::Rejected);
        assert!(edf_nonpreemptive_schedulable(&[], 0).unwrap().is_schedulable());
    }

    #[test]
    fn sporadic_examples() {
        let single = [SecureTask::new(1, TaskKind::Message, 2, 5).with_deadline(5)];
        assert!(edf_sporadic_np_schedulable(&single, 0).unwrap().is_schedulable());

        let heavy = [
            SecureTask::new(1, TaskKind::Message, 4, 5).with_deadline(5),
            SecureTask::new(2, TaskKind::Message, 2, 5).with_deadline(5),
        ];
        let v = edf_sporadic_np_schedulable(&heavy, 0).unwrap();
        assert_eq!(v, Verdict { status: Status::NotSchedulable, witness: None });

        assert_eq!(edf_sporadic_np_schedulable(&offset_counterexample(), 0), Err(DemandError::OffsetPresent(1)));
    }

    #[test]
    fn sporadic_verdict_of_stripped_counterexample() {
        let stripped: Vec<SecureTask> = offset_counterexample()
            .into_iter()
            .map(|mut m| {
                m.phi = None;
                m
            })
            .collect();
        let v = edf_sporadic_np_schedulable(&stripped, 0).unwrap();
        assert_eq!(v.status, Status::NotSchedulable);
        assert_eq!(v.witness.unwrap().interval, Interval::new(0, 30));
    }

    #[test]
    fn offset_extended_test_accepts_counterexample() {
        assert!(offset_extended_np_test(&offset_counterexample()).unwrap().is_schedulable());
        assert!(offset_extended_np_test(&[]).unwrap().is_schedulable());
        assert!(offset_extended_np_test(&[task(1, 2, 5, 0, 5)]).unwrap().is_schedulable());
    }

    #[test]
    fn jitter_shortens_deadlines() {
        let t = task(1, 1, 10, 0, 10);
        assert_eq!(apply_jitter(&[t.clone()], &[2]).unwrap()[0].d, Some(8));
        assert_eq!(apply_jitter(&[t.clone()], &[0]).unwrap()[0], t);
        assert!(matches!(
            apply_jitter(&[task(1, 1, 10, 0, 3)], &[3]),
            Err(DemandError::JitterTooLarge { .. })
        ));
    }
}
