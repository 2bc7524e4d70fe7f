//! Discrete-event EDF simulators used as ground truth for the analyses.
//!
//! Both simulators start all tasks synchronously at `t = 0` (offsets are
//! relative to it) and run over `[0, horizon]`. Jobs are released at
//! `φ + k·p < horizon`. Events at one instant are emitted in the order
//! completion, deadline miss, release, then the scheduling decision.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, Resource, SecureTask, SystemModel, TaskId};
use crate::time::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Release,
    Start,
    Preempt,
    Resume,
    Complete,
    DeadlineMiss,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Release => "release",
            EventKind::Start => "start",
            EventKind::Preempt => "preempt",
            EventKind::Resume => "resume",
            EventKind::Complete => "complete",
            EventKind::DeadlineMiss => "deadline_miss",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub time: Tick,
    pub task: TaskId,
    pub job: u64,
    pub kind: EventKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub horizon: Tick,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn misses(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::DeadlineMiss)
    }

    pub fn miss_count(&self) -> usize {
        self.misses().count()
    }

    pub fn first_miss(&self) -> Option<&Event> {
        self.misses().next()
    }

    /// Completion instant of every job that completed within the horizon.
    pub fn completions(&self) -> BTreeMap<(TaskId, u64), Tick> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Complete)
            .map(|e| ((e.task, e.job), e.time))
            .collect()
    }
}

/// One job instance. Jobs without a deadline are non-real-time and run only
/// when no real-time job is pending.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Job {
    pub task: TaskId,
    pub index: u64,
    pub release: Tick,
    pub deadline: Option<Tick>,
    pub cost: Tick,
}

/// Jobs of `tasks` released before `horizon`, with extended frames placed by
/// each task's authentication pattern.
pub fn jobs_of(tasks: &[SecureTask], horizon: Tick) -> Result<Vec<Job>, ModelError> {
    let mut jobs = Vec::new();
    for t in tasks {
        let phi = t.phi.ok_or(ModelError::Unset { task: t.id, field: "phi" })?;
        let d = t.d.ok_or(ModelError::Unset { task: t.id, field: "d" })?;
        if t.l.is_some() && t.delta_c() != 0 && t.s.is_none() {
            return Err(ModelError::Unset { task: t.id, field: "s" });
        }
        let mut k = 0u64;
        let mut r = phi;
        while r < horizon {
            jobs.push(Job { task: t.id, index: k, release: r, deadline: Some(r + d), cost: t.cost_of_job(k) });
            k += 1;
            r += t.p;
        }
    }
    Ok(jobs)
}

// Non-real-time jobs sort after every real-time job, first come first served.
type Key = (Tick, Tick, TaskId, u64);

fn key(j: &Job) -> Key {
    match j.deadline {
        Some(d) => (d, 0, j.task, j.index),
        None => (Tick::MAX, j.release, j.task, j.index),
    }
}

/// Runs EDF over an explicit job list. Ties go to the lower task id.
pub fn simulate_jobs(jobs: &[Job], horizon: Tick, preemptive: bool) -> Trace {
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&i| (jobs[i].release, jobs[i].task, jobs[i].index));

    let mut events = Vec::new();
    let mut remaining: Vec<Tick> = jobs.iter().map(|j| j.cost).collect();
    let mut done = alloc::vec![false; jobs.len()];
    let mut started = alloc::vec![false; jobs.len()];
    let mut pending: BTreeSet<(Key, usize)> = BTreeSet::new();
    let mut deadlines: BinaryHeap<Reverse<(Tick, TaskId, u64, usize)>> = BinaryHeap::new();
    let mut running: Option<(usize, Tick)> = None; // (job, instant it (re)started)
    let mut next_release = 0;
    let mut t = 0;

    let emit = |events: &mut Vec<Event>, time, i: usize, kind| {
        events.push(Event { time, task: jobs[i].task, job: jobs[i].index, kind });
    };

    loop {
        if let Some((i, since)) = running {
            if since + remaining[i] == t {
                remaining[i] = 0;
                done[i] = true;
                emit(&mut events, t, i, EventKind::Complete);
                running = None;
            }
        }
        while let Some(&Reverse((d, _, _, i))) = deadlines.peek() {
            if d > t {
                break;
            }
            deadlines.pop();
            if !done[i] && d <= horizon {
                emit(&mut events, t, i, EventKind::DeadlineMiss);
            }
        }
        while next_release < order.len() && jobs[order[next_release]].release == t {
            let i = order[next_release];
            next_release += 1;
            emit(&mut events, t, i, EventKind::Release);
            if remaining[i] == 0 {
                done[i] = true;
                emit(&mut events, t, i, EventKind::Complete);
                continue;
            }
            pending.insert((key(&jobs[i]), i));
            if let Some(d) = jobs[i].deadline {
                deadlines.push(Reverse((d, jobs[i].task, jobs[i].index, i)));
            }
        }

        if let Some(&(best_key, best)) = pending.first() {
            let take = match running {
                None => true,
                Some((cur, _)) => preemptive && best_key < key(&jobs[cur]),
            };
            if take {
                if let Some((cur, since)) = running.take() {
                    remaining[cur] -= t - since;
                    emit(&mut events, t, cur, EventKind::Preempt);
                    pending.insert((key(&jobs[cur]), cur));
                }
                pending.remove(&(best_key, best));
                let kind = if started[best] { EventKind::Resume } else { EventKind::Start };
                started[best] = true;
                emit(&mut events, t, best, kind);
                running = Some((best, t));
            }
        }

        let mut next = Tick::MAX;
        if let Some((i, since)) = running {
            next = next.min(since + remaining[i]);
        }
        if next_release < order.len() {
            next = next.min(jobs[order[next_release]].release);
        }
        if let Some(&Reverse((d, ..))) = deadlines.peek() {
            next = next.min(d);
        }
        if next == Tick::MAX || next > horizon {
            break;
        }
        t = next;
    }
    Trace { horizon, events }
}

/// Preemptive EDF on one processor.
pub fn simulate_ecu(tasks: &[SecureTask], horizon: Tick) -> Result<Trace, ModelError> {
    Ok(simulate_jobs(&jobs_of(tasks, horizon)?, horizon, true))
}

/// Non-preemptive EDF on the bus.
pub fn simulate_network(msgs: &[SecureTask], horizon: Tick) -> Result<Trace, ModelError> {
    Ok(simulate_jobs(&jobs_of(msgs, horizon)?, horizon, false))
}

/// Runs every ECU and the bus of `system` over `[0, horizon]`.
pub fn simulate_system(system: &SystemModel, horizon: Tick) -> Result<Vec<(Resource, Trace)>, ModelError> {
    system
        .resources()
        .into_iter()
        .map(|r| {
            let tasks = system.tasks_on(r);
            let trace = match r {
                Resource::Ecu(_) => simulate_ecu(&tasks, horizon)?,
                Resource::Bus => simulate_network(&tasks, horizon)?,
            };
            Ok((r, trace))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TimingIssue {
    /// Offsets and deadlines themselves break the precedence order.
    Static { message: String },
    SensingLate { period: u64, completion: Tick, message_release: Tick },
    MessageLate { period: u64, completion: Tick, control_release: Tick },
    ControlLate { period: u64, completion: Tick, bound: Tick },
    Incomplete { period: u64, task: TaskId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingViolation {
    pub transaction: u32,
    #[serde(flatten)]
    pub issue: TimingIssue,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingReport {
    pub violations: Vec<TimingViolation>,
}

impl TimingReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no trace for {0:?}")]
    MissingTrace(Resource),
}

/// Checks the sensing → message → control order of every transaction job
/// chain whose control deadline lies inside the traced horizon.
pub fn check_transaction_timing(
    system: &SystemModel,
    traces: &[(Resource, Trace)],
) -> Result<TimingReport, SimError> {
    let mut report = TimingReport::default();
    let mut completions: BTreeMap<TaskId, BTreeMap<u64, Tick>> = BTreeMap::new();
    let mut horizon = Tick::MAX;

    for tx in &system.transactions {
        for t in tx.tasks() {
            let r = system.resource_of(t.id).ok_or(ModelError::Transaction(alloc::format!("task {} is unmapped", t.id)))?;
            let (_, trace) = traces.iter().find(|(x, _)| *x == r).ok_or(SimError::MissingTrace(r))?;
            horizon = horizon.min(trace.horizon);
            let per_task = completions.entry(t.id).or_default();
            for ((task, job), time) in trace.completions() {
                if task == t.id {
                    per_task.insert(job, time);
                }
            }
        }
    }

    for tx in &system.transactions {
        for message in tx.precedence_violations() {
            report.violations.push(TimingViolation { transaction: tx.id, issue: TimingIssue::Static { message } });
        }
        let (sens, net, ctrl) = (&tx.sens, &tx.net, &tx.ctrl);
        let (Some(ps), Some(pn), Some(pc), Some(dc)) = (sens.phi, net.phi, ctrl.phi, ctrl.d) else {
            return Err(ModelError::Unset { task: sens.id, field: "phi" }.into());
        };
        let lag = u64::from(tx.link.sensing_lag);
        let mut k = 0u64;
        loop {
            let j = k + lag;
            let ctrl_release = pc + j as Tick * tx.p;
            if ctrl_release + dc > horizon {
                break;
            }
            let sens_release = ps + k as Tick * tx.p;
            let net_release = pn + j as Tick * tx.p;
            let done = |task: &SecureTask, job: u64| completions.get(&task.id).and_then(|m| m.get(&job)).copied();
            let chain = [(sens, k), (net, j), (ctrl, j)];
            let missing = chain.iter().find(|(t, job)| done(t, *job).is_none());
            if let Some((t, _)) = missing {
                report.violations.push(TimingViolation {
                    transaction: tx.id,
                    issue: TimingIssue::Incomplete { period: k, task: t.id },
                });
                k += 1;
                continue;
            }
            let (cs, cn, cc) = (done(sens, k).unwrap(), done(net, j).unwrap(), done(ctrl, j).unwrap());
            if cs > net_release {
                report.violations.push(TimingViolation {
                    transaction: tx.id,
                    issue: TimingIssue::SensingLate { period: k, completion: cs, message_release: net_release },
                });
            }
            if cn > ctrl_release {
                report.violations.push(TimingViolation {
                    transaction: tx.id,
                    issue: TimingIssue::MessageLate { period: k, completion: cn, control_release: ctrl_release },
                });
            }
            let bound = ((j as Tick + 1) * tx.p).min(sens_release + tx.e2e_bound());
            if cc > bound {
                report.violations.push(TimingViolation {
                    transaction: tx.id,
                    issue: TimingIssue::ControlLate { period: k, completion: cc, bound },
                });
            }
            k += 1;
        }
    }
    Ok(report)
}
