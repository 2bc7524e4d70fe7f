use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::time::Tick;

pub type TaskId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Sensing,
    Message,
    Control,
    Background,
}

/// A periodic task or message with two frame sizes.
///
/// Job `k` (counting from zero) is an extended frame when an authentication
/// distance `l` is set, `k >= s` and `(k - s) mod l < f`. Every other job is a
/// regular frame. `phi`, `d` and `s` may be unset while the system is still
/// incomplete.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecureTask {
    pub id: TaskId,
    pub kind: TaskKind,
    pub c_reg: Tick,
    pub c_ext: Tick,
    pub p: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
    #[serde(default = "one")]
    pub f: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
}

fn one() -> u32 {
    1
}

impl SecureTask {
    /// A task without authentication overhead and with nothing but WCET and period set.
    pub fn new(id: TaskId, kind: TaskKind, c: Tick, p: Tick) -> Self {
        SecureTask { id, kind, c_reg: c, c_ext: c, p, phi: None, d: None, l: None, f: 1, s: None }
    }

    /// Shorthand for `T(c, p)`: zero offset and implicit deadline.
    pub fn implicit(id: TaskId, kind: TaskKind, c: Tick, p: Tick) -> Self {
        SecureTask::new(id, kind, c, p).with_offset(0).with_deadline(p)
    }

    pub fn with_ext(mut self, c_ext: Tick) -> Self {
        self.c_ext = c_ext;
        self
    }

    pub fn with_offset(mut self, phi: Tick) -> Self {
        self.phi = Some(phi);
        self
    }

    pub fn with_deadline(mut self, d: Tick) -> Self {
        self.d = Some(d);
        self
    }

    pub fn with_auth(mut self, l: u32, f: u32, s: u32) -> Self {
        self.l = Some(l);
        self.f = f;
        self.s = Some(s);
        self
    }

    pub fn delta_c(&self) -> Tick {
        self.c_ext - self.c_reg
    }

    pub fn is_authenticated(&self) -> bool {
        self.l.is_some()
    }

    /// Whether job `k` carries the authentication overhead. Unset `s` counts as no overhead.
    pub fn is_extended(&self, k: u64) -> bool {
        match (self.l, self.s) {
            (Some(l), Some(s)) => {
                let s = u64::from(s);
                k >= s && (k - s) % u64::from(l) < u64::from(self.f)
            }
            _ => false,
        }
    }

    pub fn cost_of_job(&self, k: u64) -> Tick {
        if self.is_extended(k) {
            self.c_ext
        } else {
            self.c_reg
        }
    }

    /// Length of the repeating frame pattern: `l * p`, or `p` without authentication.
    pub fn pattern_period(&self) -> Tick {
        match self.l {
            Some(l) if self.c_ext != self.c_reg => self.p * Tick::from(l),
            _ => self.p,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.phi.is_some() && self.d.is_some() && (self.l.is_none() || self.s.is_some())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IssueKind {
    NonPositiveWcet,
    ExtendedBelowRegular,
    NonPositivePeriod,
    DeadlineBelowOne,
    DeadlineAbovePeriod,
    NegativeOffset,
    OverheadWithoutAuthentication,
    ZeroBlockLength,
    BlockLongerThanDistance,
    AuthOffsetTooLarge { s: u32, max: u32 },
    UnknownTask,
    Unmapped,
    MappedTwice,
    WrongResource,
    DuplicateId,
    Transaction(String),
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IssueKind::NonPositiveWcet => write!(f, "regular WCET must be positive"),
            IssueKind::ExtendedBelowRegular => write!(f, "extended WCET below regular WCET"),
            IssueKind::NonPositivePeriod => write!(f, "period must be positive"),
            IssueKind::DeadlineBelowOne => write!(f, "deadline below 1 tick"),
            IssueKind::DeadlineAbovePeriod => write!(f, "deadline exceeds period"),
            IssueKind::NegativeOffset => write!(f, "negative offset"),
            IssueKind::OverheadWithoutAuthentication => {
                write!(f, "extended WCET differs from regular but no authentication distance is set")
            }
            IssueKind::ZeroBlockLength => write!(f, "block length must be at least 1"),
            IssueKind::BlockLongerThanDistance => write!(f, "f > l"),
            IssueKind::AuthOffsetTooLarge { s, max } => write!(f, "s > l − f ({s} > {max})"),
            IssueKind::UnknownTask => write!(f, "mapping references an unknown task"),
            IssueKind::Unmapped => write!(f, "task is not mapped to any resource"),
            IssueKind::MappedTwice => write!(f, "task is mapped more than once"),
            IssueKind::WrongResource => write!(f, "task kind does not match its resource"),
            IssueKind::DuplicateId => write!(f, "duplicate task id"),
            IssueKind::Transaction(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub task: Option<TaskId>,
    pub kind: IssueKind,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.task {
            Some(id) => write!(f, "task {id}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn push(&mut self, task: Option<TaskId>, kind: IssueKind) {
        self.issues.push(Issue { task, kind });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.issues.extend(other.issues);
    }

    pub fn has(&self, kind: &IssueKind) -> bool {
        self.issues.iter().any(|i| &i.kind == kind)
    }
}

/// Lists every violated per-task invariant. An empty report means the task is well formed.
pub fn validate_task(t: &SecureTask) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut flag = |kind| report.push(Some(t.id), kind);
    if t.c_reg <= 0 {
        flag(IssueKind::NonPositiveWcet);
    }
    if t.c_ext < t.c_reg {
        flag(IssueKind::ExtendedBelowRegular);
    }
    if t.p <= 0 {
        flag(IssueKind::NonPositivePeriod);
    }
    if let Some(d) = t.d {
        if d < 1 {
            flag(IssueKind::DeadlineBelowOne);
        }
        if d > t.p {
            flag(IssueKind::DeadlineAbovePeriod);
        }
    }
    if matches!(t.phi, Some(phi) if phi < 0) {
        flag(IssueKind::NegativeOffset);
    }
    match t.l {
        None => {
            if t.c_ext != t.c_reg {
                flag(IssueKind::OverheadWithoutAuthentication);
            }
        }
        Some(l) => {
            if t.f == 0 {
                flag(IssueKind::ZeroBlockLength);
            }
            if t.f > l {
                flag(IssueKind::BlockLongerThanDistance);
            } else if t.kind == TaskKind::Sensing {
                if let Some(s) = t.s {
                    if s > l - t.f {
                        flag(IssueKind::AuthOffsetTooLarge { s, max: l - t.f });
                    }
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_other_period_task_is_valid() {
        let t = SecureTask::implicit(1, TaskKind::Sensing, 2, 10).with_ext(4).with_auth(2, 1, 0);
        assert!(validate_task(&t).is_valid());
    }

    #[test]
    fn zero_deadline_is_reported() {
        let t = SecureTask::new(1, TaskKind::Background, 2, 10).with_deadline(0);
        let report = validate_task(&t);
        assert!(report.has(&IssueKind::DeadlineBelowOne));
        assert_eq!(alloc::format!("{}", report.issues[0].kind), "deadline below 1 tick");
    }

    #[test]
    fn sensing_offset_past_last_block_start_is_reported() {
        let t = SecureTask::implicit(1, TaskKind::Sensing, 2, 10).with_ext(4).with_auth(2, 1, 2);
        let report = validate_task(&t);
        assert!(report.has(&IssueKind::AuthOffsetTooLarge { s: 2, max: 1 }));
        assert!(alloc::format!("{}", report.issues[0].kind).starts_with("s > l − f"));
    }

    #[test]
    fn overhead_needs_a_distance() {
        let t = SecureTask::implicit(3, TaskKind::Background, 2, 10).with_ext(3);
        assert!(validate_task(&t).has(&IssueKind::OverheadWithoutAuthentication));
    }

    #[test]
    fn extended_pattern_follows_block_layout() {
        // l = 4, f = 2, s = 1: jobs 1, 2, 5, 6, 9, 10, ...
        let t = SecureTask::implicit(1, TaskKind::Sensing, 1, 5).with_ext(2).with_auth(4, 2, 1);
        let ext: Vec<u64> = (0..12).filter(|&k| t.is_extended(k)).collect();
        assert_eq!(ext, alloc::vec![1, 2, 5, 6, 9, 10]);
    }
}
