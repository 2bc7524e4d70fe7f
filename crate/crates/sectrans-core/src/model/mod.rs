//! Domain types for secure control transactions and their validation.

mod curve;
mod system;
mod task;
mod transaction;

use alloc::string::String;

pub use curve::{policy_from_qoc, QocCurve};
pub use system::{Ecu, Resource, SystemModel};
pub use task::{validate_task, Issue, IssueKind, SecureTask, TaskId, TaskKind, ValidationReport};
pub use transaction::{assemble_transaction, AuthPolicy, ControlTransaction, Link};

use crate::time::Tick;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("empty task set")]
    EmptyTaskSet,
    #[error("task {task}: {field} is not set")]
    Unset { task: TaskId, field: &'static str },
    #[error("periods differ: sensing {sens}, message {net}, control {ctrl}")]
    PeriodMismatch { sens: Tick, net: Tick, ctrl: Tick },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("{0}")]
    Transaction(String),
    #[error("invalid curve: {0}")]
    Curve(String),
    #[error("time arithmetic overflowed")]
    Overflow,
}

fn lcm_of<I: IntoIterator<Item = Tick>>(periods: I) -> Result<Tick, ModelError> {
    let mut acc: Option<Tick> = None;
    for p in periods {
        acc = Some(match acc {
            None => p,
            Some(a) => {
                let g = num_integer::gcd(a, p);
                (a / g).checked_mul(p).ok_or(ModelError::Overflow)?
            }
        });
    }
    acc.ok_or(ModelError::EmptyTaskSet)
}

/// Least common multiple of the task periods.
pub fn hyperperiod(tasks: &[SecureTask]) -> Result<Tick, ModelError> {
    lcm_of(tasks.iter().map(|t| t.p))
}

/// Least common multiple of the frame-pattern periods (`l * p` for tasks with
/// authentication overhead, `p` otherwise). The job sequence, costs included,
/// repeats with this period.
pub fn pattern_hyperperiod(tasks: &[SecureTask]) -> Result<Tick, ModelError> {
    lcm_of(tasks.iter().map(SecureTask::pattern_period))
}

/// Instant from which the job sequence of `t` (costs included) is periodic:
/// its offset, moved past any leading jobs that stay regular only because
/// authentication starts later than one pattern period allows.
pub fn pattern_start(t: &SecureTask) -> Result<Tick, ModelError> {
    let phi = t.phi.ok_or(ModelError::Unset { task: t.id, field: "phi" })?;
    let late = match (t.l, t.s) {
        (Some(l), Some(s)) if t.c_ext != t.c_reg => s.saturating_sub(l.saturating_sub(t.f)),
        _ => 0,
    };
    Ok(phi + Tick::from(late) * t.p)
}

/// Horizon up to which demand must be checked: latest pattern start plus
/// largest deadline plus two pattern hyperperiods.
///
/// For tasks without authentication overhead this is `max φ + max d + 2·lcm(p)`.
/// With overhead the frame pattern repeats only every `l·p`, so that period
/// enters the lcm instead.
pub fn t_max(tasks: &[SecureTask]) -> Result<Tick, ModelError> {
    let mut start = 0;
    let mut max_d = 0;
    for t in tasks {
        start = start.max(pattern_start(t)?);
        max_d = max_d.max(t.d.ok_or(ModelError::Unset { task: t.id, field: "d" })?);
    }
    let h = pattern_hyperperiod(tasks)?;
    h.checked_mul(2)
        .and_then(|x| x.checked_add(start + max_d))
        .ok_or(ModelError::Overflow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periods(ps: &[Tick]) -> alloc::vec::Vec<SecureTask> {
        ps.iter().enumerate().map(|(i, &p)| SecureTask::implicit(i as u32, TaskKind::Background, 1, p)).collect()
    }

    #[test]
    fn hyperperiod_examples() {
        assert_eq!(hyperperiod(&periods(&[10, 10, 20])), Ok(20));
        assert_eq!(hyperperiod(&periods(&[6, 4])), Ok(12));
        assert_eq!(hyperperiod(&periods(&[7])), Ok(7));
        assert_eq!(hyperperiod(&[]), Err(ModelError::EmptyTaskSet));
    }

    #[test]
    fn t_max_examples() {
        assert_eq!(t_max(&periods(&[5])), Ok(15));
        let mut ts = periods(&[5, 5]);
        ts[1].phi = Some(3);
        assert_eq!(t_max(&ts), Ok(18));
        ts[0].d = None;
        assert_eq!(t_max(&ts), Err(ModelError::Unset { task: 0, field: "d" }));
    }

    #[test]
    fn t_max_of_alternating_set_spans_two_patterns() {
        let ts = [
            SecureTask::implicit(1, TaskKind::Sensing, 2, 10).with_ext(4).with_auth(2, 1, 0),
            SecureTask::implicit(2, TaskKind::Sensing, 2, 10).with_ext(4).with_auth(2, 1, 1),
            SecureTask::implicit(3, TaskKind::Control, 4, 20).with_ext(7).with_auth(1, 1, 0),
        ];
        assert_eq!(t_max(&ts), Ok(60));
    }

    #[test]
    fn late_authentication_start_delays_the_horizon() {
        // l = 4, f = 1, s = 4: jobs 0..3 regular, then every fourth job
        let t = SecureTask::implicit(1, TaskKind::Message, 1, 10).with_ext(2).with_auth(4, 1, 4);
        assert_eq!(pattern_start(&t), Ok(10));
        assert_eq!(t_max(&[t]), Ok(10 + 10 + 80));
    }

    #[test]
    fn t_max_grows_with_authentication_distance() {
        let ts = [SecureTask::implicit(1, TaskKind::Sensing, 1, 10).with_ext(2).with_auth(4, 1, 0)];
        assert_eq!(t_max(&ts), Ok(10 + 80));
    }
}
