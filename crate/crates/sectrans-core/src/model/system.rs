use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::task::{validate_task, IssueKind, SecureTask, TaskId, TaskKind, ValidationReport};
use super::transaction::ControlTransaction;
use crate::time::{Resolution, Tick};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ecu {
    pub id: u32,
    pub tasks: Vec<TaskId>,
}

/// ECUs with their task sets, one shared bus, the control transactions and all
/// non-QoC workload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemModel {
    #[serde(default)]
    pub resolution: Resolution,
    pub ecus: Vec<Ecu>,
    pub bus: Vec<TaskId>,
    #[serde(default)]
    pub transactions: Vec<ControlTransaction>,
    #[serde(default)]
    pub background: Vec<SecureTask>,
    /// Longest non-real-time frame that may block the bus.
    #[serde(default)]
    pub c_max_nrt: Tick,
}

/// Where a task runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Ecu(u32),
    Bus,
}

impl SystemModel {
    pub fn all_tasks(&self) -> impl Iterator<Item = &SecureTask> {
        self.transactions.iter().flat_map(|tx| tx.tasks()).chain(self.background.iter())
    }

    pub fn task(&self, id: TaskId) -> Option<&SecureTask> {
        self.all_tasks().find(|t| t.id == id)
    }

    pub fn task_mut(&mut self, id: TaskId) -> Option<&mut SecureTask> {
        for tx in &mut self.transactions {
            for t in tx.tasks_mut() {
                if t.id == id {
                    return Some(t);
                }
            }
        }
        self.background.iter_mut().find(|t| t.id == id)
    }

    pub fn resource_of(&self, id: TaskId) -> Option<Resource> {
        if self.bus.contains(&id) {
            return Some(Resource::Bus);
        }
        self.ecus.iter().find(|e| e.tasks.contains(&id)).map(|e| Resource::Ecu(e.id))
    }

    pub fn resources(&self) -> Vec<Resource> {
        let mut out: Vec<Resource> = self.ecus.iter().map(|e| Resource::Ecu(e.id)).collect();
        out.push(Resource::Bus);
        out
    }

    /// Tasks mapped to `resource`, in mapping order. Unknown ids are skipped.
    pub fn tasks_on(&self, resource: Resource) -> Vec<SecureTask> {
        let ids: &[TaskId] = match resource {
            Resource::Bus => &self.bus,
            Resource::Ecu(e) => match self.ecus.iter().find(|x| x.id == e) {
                Some(ecu) => &ecu.tasks,
                None => &[],
            },
        };
        ids.iter().filter_map(|&id| self.task(id).cloned()).collect()
    }

    pub fn bus_messages(&self) -> Vec<SecureTask> {
        self.tasks_on(Resource::Bus)
    }

    pub fn transaction_of(&self, id: TaskId) -> Option<&ControlTransaction> {
        self.transactions.iter().find(|tx| tx.tasks().iter().any(|t| t.id == id))
    }

    /// Longest transmission that may block a bus frame: the longest extended
    /// message or the longest non-real-time frame.
    pub fn bus_blocking(&self) -> Tick {
        self.bus_messages().iter().map(|m| m.c_ext).max().unwrap_or(0).max(self.c_max_nrt)
    }

    /// Structural checks plus per-task and per-transaction invariants.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut seen = BTreeSet::new();
        for t in self.all_tasks() {
            if !seen.insert(t.id) {
                report.push(Some(t.id), IssueKind::DuplicateId);
            }
            report.merge(validate_task(t));
        }

        let mut placed: BTreeMap<TaskId, usize> = BTreeMap::new();
        for ecu in &self.ecus {
            for &id in &ecu.tasks {
                *placed.entry(id).or_default() += 1;
                match self.task(id) {
                    None => report.push(Some(id), IssueKind::UnknownTask),
                    Some(t) if t.kind == TaskKind::Message => report.push(Some(id), IssueKind::WrongResource),
                    _ => {}
                }
            }
        }
        for &id in &self.bus {
            *placed.entry(id).or_default() += 1;
            match self.task(id) {
                None => report.push(Some(id), IssueKind::UnknownTask),
                Some(t) if !matches!(t.kind, TaskKind::Message | TaskKind::Background) => {
                    report.push(Some(id), IssueKind::WrongResource)
                }
                _ => {}
            }
        }
        for t in self.all_tasks() {
            match placed.get(&t.id).copied().unwrap_or(0) {
                0 => report.push(Some(t.id), IssueKind::Unmapped),
                1 => {}
                _ => report.push(Some(t.id), IssueKind::MappedTwice),
            }
        }

        for tx in &self.transactions {
            match tx.reassemble() {
                Ok(again) if again == *tx => {}
                Ok(_) => report.push(
                    Some(tx.sens.id),
                    IssueKind::Transaction(format!("transaction {} has inconsistent derived fields", tx.id)),
                ),
                Err(e) => report.push(Some(tx.sens.id), IssueKind::Transaction(format!("transaction {}: {e}", tx.id))),
            }
        }
        report
    }
}
