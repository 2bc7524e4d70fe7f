use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::task::{SecureTask, TaskKind};
use super::ModelError;
use crate::time::Tick;

/// Periodic cumulative authentication: blocks of `f` authenticated samples every
/// `l` periods, the first block starting `s` periods in. `s` may be left open for
/// synthesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
    pub f: u32,
    pub l: u32,
}

impl AuthPolicy {
    pub fn new(s: u32, f: u32, l: u32) -> Self {
        AuthPolicy { s: Some(s), f, l }
    }

    pub fn open(f: u32, l: u32) -> Self {
        AuthPolicy { s: None, f, l }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.f == 0 || self.l == 0 {
            return Err(ModelError::InvalidPolicy("f and l must be at least 1".into()));
        }
        if self.f > self.l {
            return Err(ModelError::InvalidPolicy(format!("f = {} exceeds l = {}", self.f, self.l)));
        }
        if let Some(s) = self.s {
            if s > self.l - self.f {
                return Err(ModelError::InvalidPolicy(format!(
                    "s = {s} exceeds l − f = {}",
                    self.l - self.f
                )));
            }
        }
        Ok(())
    }
}

/// How the three stages of a transaction line up in time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    /// Bound on sampling-to-actuation delay; the period when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2e_bound: Option<Tick>,
    /// Sensing job `k` feeds message job `k + 1`: the sample is taken in the
    /// period before the message is released. Used when all messages are
    /// released at period boundaries.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub sensing_lag: bool,
}

/// Sensing task, network message and control task for one plant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlTransaction {
    pub id: u32,
    pub plant_id: String,
    pub p: Tick,
    pub sens: SecureTask,
    pub net: SecureTask,
    pub ctrl: SecureTask,
    pub policy: AuthPolicy,
    #[serde(default, flatten)]
    pub link: Link,
}

/// Builds a transaction with default identity and link settings.
pub fn assemble_transaction(
    sens: SecureTask,
    net: SecureTask,
    ctrl: SecureTask,
    policy: AuthPolicy,
) -> Result<ControlTransaction, ModelError> {
    ControlTransaction::assemble(0, "", sens, net, ctrl, policy, Link::default())
}

impl ControlTransaction {
    /// Derives `l`, `f` and `s` on all three tasks from the policy and checks
    /// every transaction invariant that the given parameters allow checking.
    pub fn assemble(
        id: u32,
        plant_id: &str,
        mut sens: SecureTask,
        mut net: SecureTask,
        mut ctrl: SecureTask,
        mut policy: AuthPolicy,
        link: Link,
    ) -> Result<ControlTransaction, ModelError> {
        for (task, kind) in [(&sens, TaskKind::Sensing), (&net, TaskKind::Message), (&ctrl, TaskKind::Control)] {
            if task.kind != kind {
                return Err(ModelError::Transaction(format!("task {} should be {:?}", task.id, kind)));
            }
        }
        if sens.p != net.p || sens.p != ctrl.p {
            return Err(ModelError::PeriodMismatch { sens: sens.p, net: net.p, ctrl: ctrl.p });
        }
        match (policy.s, sens.s) {
            (None, Some(s)) => policy.s = Some(s),
            (Some(a), Some(b)) if a != b => {
                return Err(ModelError::InvalidPolicy(format!("policy s = {a} but sensing task has s = {b}")));
            }
            _ => {}
        }
        policy.check()?;

        let lag = u32::from(link.sensing_lag);
        sens.l = Some(policy.l);
        net.l = Some(policy.l);
        ctrl.l = Some(policy.l);
        sens.f = policy.f;
        net.f = 1;
        ctrl.f = 1;
        sens.s = policy.s;
        net.s = policy.s.map(|s| s + policy.f - 1 + lag);
        ctrl.s = net.s;

        let tx = ControlTransaction { id, plant_id: plant_id.into(), p: sens.p, sens, net, ctrl, policy, link };
        let broken = tx.precedence_violations();
        if let Some(first) = broken.into_iter().next() {
            return Err(ModelError::Transaction(first));
        }
        Ok(tx)
    }

    /// Re-runs [`ControlTransaction::assemble`] on this transaction's own parts.
    pub fn reassemble(&self) -> Result<ControlTransaction, ModelError> {
        ControlTransaction::assemble(
            self.id,
            &self.plant_id,
            self.sens.clone(),
            self.net.clone(),
            self.ctrl.clone(),
            self.policy,
            self.link,
        )
    }

    pub fn e2e_bound(&self) -> Tick {
        self.link.e2e_bound.unwrap_or(self.p)
    }

    pub fn tasks(&self) -> [&SecureTask; 3] {
        [&self.sens, &self.net, &self.ctrl]
    }

    pub fn tasks_mut(&mut self) -> [&mut SecureTask; 3] {
        [&mut self.sens, &mut self.net, &mut self.ctrl]
    }

    /// Precedence and end-to-end inequalities that fail for the parameters set so far.
    pub fn precedence_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let lag = if self.link.sensing_lag { self.p } else { 0 };
        let (sens, net, ctrl) = (&self.sens, &self.net, &self.ctrl);
        if let (Some(ps), Some(ds), Some(pn)) = (sens.phi, sens.d, net.phi) {
            if pn + lag < ps + ds {
                out.push(format!("message offset {pn} precedes sensing deadline {}", ps + ds - lag));
            }
        }
        if let (Some(pn), Some(dn), Some(pc)) = (net.phi, net.d, ctrl.phi) {
            if pc < pn + dn {
                out.push(format!("control offset {pc} precedes message deadline {}", pn + dn));
            }
        }
        if let (Some(pc), Some(dc)) = (ctrl.phi, ctrl.d) {
            if pc + dc > self.p {
                out.push(format!("control deadline {} is past the period end {}", pc + dc, self.p));
            }
            if let Some(ps) = sens.phi {
                let delay = pc + dc + lag - ps;
                if delay > self.e2e_bound() {
                    out.push(format!("sampling-to-actuation delay {delay} exceeds {}", self.e2e_bound()));
                }
            }
        }
        out
    }
}
