//! Parameter synthesis for offsets, deadlines and authentication offsets.
//!
//! A [`SynthesisProblem`] describes each task's offset, deadline and first
//! authenticated period as affine expressions over integer decision
//! variables, plus linear guards (precedence, end-to-end delay). It can be
//! solved directly by [`solve_feasibility`] or turned into a big-M MILP with
//! [`encode`] / [`prune`] for external solvers.

mod decompose;
mod encode;
mod instance;
mod lp;
mod search;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, Resource, SecureTask, TaskId};
use crate::time::Tick;

pub use decompose::{
    apply_solution, problem_from_system, synthesize_decomposed, DecomposeOptions, StageLog, Strategy,
};
pub use encode::{encode, encode_ecu, encode_network, encode_with, prune, EncodeStats};
pub use instance::{
    choose_big_m_epsilon, AuxDef, BigM, Constraint, MilpInstance, Objective, Sense, Tolerances, VarKind, Variable,
};
pub use lp::render_lp;
pub use search::{exact_check, solve, solve_feasibility, ObjectiveMode};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MilpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("variable {0} has an empty domain")]
    EmptyDomain(String),
    #[error("variable {0} is unbounded")]
    Unbounded(String),
    #[error("task {0} has no positive WCET")]
    MissingWcet(TaskId),
    #[error("no epsilon satisfies the tolerance rule for M = {m}")]
    NoEpsilon { m: f64 },
    #[error("invalid limits: {0}")]
    Limits(&'static str),
    #[error("strategy {strategy:?} cannot be applied: {reason}")]
    Strategy { strategy: Strategy, reason: String },
}

/// Integer affine expression `constant + Σ coeff · var`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lin {
    pub constant: i64,
    /// Sorted by variable index, no zero coefficients.
    pub terms: Vec<(usize, i64)>,
}

impl Lin {
    pub fn constant(c: i64) -> Self {
        Lin { constant: c, terms: Vec::new() }
    }

    pub fn var(v: usize) -> Self {
        Lin { constant: 0, terms: alloc::vec![(v, 1)] }
    }

    pub fn term(v: usize, coeff: i64) -> Self {
        Lin::var(v).scale(coeff)
    }

    pub fn plus(&self, other: &Lin) -> Lin {
        let mut acc: BTreeMap<usize, i64> = self.terms.iter().copied().collect();
        for &(v, c) in &other.terms {
            *acc.entry(v).or_default() += c;
        }
        Lin { constant: self.constant + other.constant, terms: acc.into_iter().filter(|&(_, c)| c != 0).collect() }
    }

    pub fn minus(&self, other: &Lin) -> Lin {
        self.plus(&other.scale(-1))
    }

    pub fn scale(&self, k: i64) -> Lin {
        if k == 0 {
            return Lin::default();
        }
        Lin { constant: self.constant * k, terms: self.terms.iter().map(|&(v, c)| (v, c * k)).collect() }
    }

    pub fn offset(&self, c: i64) -> Lin {
        Lin { constant: self.constant + c, terms: self.terms.clone() }
    }

    pub fn coeff(&self, v: usize) -> i64 {
        self.terms.iter().find(|t| t.0 == v).map_or(0, |t| t.1)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Value under a partial assignment, if every variable in it is assigned.
    pub fn eval(&self, values: &[Option<i64>]) -> Option<i64> {
        self.terms.iter().try_fold(self.constant, |acc, &(v, c)| values[v].map(|x| acc + c * x))
    }

    /// Tightest interval given per-variable `(lo, hi)` domains.
    pub fn bounds(&self, domains: &[(i64, i64)]) -> (i64, i64) {
        self.terms.iter().fold((self.constant, self.constant), |(lo, hi), &(v, c)| {
            let (a, b) = domains[v];
            if c >= 0 {
                (lo + c * a, hi + c * b)
            } else {
                (lo + c * b, hi + c * a)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarClass {
    AuthOffset,
    Offset,
    Deadline,
}

/// A free integer parameter with domain `lo, lo + step, ..., <= hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionVar {
    pub name: String,
    pub class: VarClass,
    pub lo: i64,
    pub hi: i64,
    #[serde(default = "one")]
    pub step: i64,
    /// Objective weight (minimized). Zero for pure feasibility.
    #[serde(default)]
    pub weight: f64,
}

fn one() -> i64 {
    1
}

impl DecisionVar {
    pub fn new(name: &str, class: VarClass, lo: i64, hi: i64) -> Self {
        DecisionVar { name: name.into(), class, lo, hi, step: 1, weight: 0.0 }
    }

    pub fn weighted(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// A task whose timing parameters are affine in the decision variables.
/// `task` supplies WCETs, period and the authentication pattern; its own
/// `phi`, `d` and `s` fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTask {
    pub task: SecureTask,
    pub phi: Lin,
    pub d: Lin,
    /// First authenticated period; `None` for tasks without authentication overhead.
    pub s: Option<Lin>,
    /// Every job stays inside its own period (`φ + d <= p`), which lets the
    /// encoder fix indicators outside each job's period window.
    pub windowed: bool,
}

impl BoundTask {
    pub fn fixed(task: &SecureTask) -> Result<Self, ModelError> {
        let phi = task.phi.ok_or(ModelError::Unset { task: task.id, field: "phi" })?;
        let d = task.d.ok_or(ModelError::Unset { task: task.id, field: "d" })?;
        let s = if task.l.is_some() && task.delta_c() != 0 {
            Some(Lin::constant(i64::from(task.s.ok_or(ModelError::Unset { task: task.id, field: "s" })?)))
        } else {
            None
        };
        Ok(BoundTask { task: task.clone(), phi: Lin::constant(phi), d: Lin::constant(d), s, windowed: phi + d <= task.p })
    }

    /// The concrete task under a full assignment.
    pub fn instantiate(&self, values: &[Option<i64>]) -> Option<SecureTask> {
        let mut t = self.task.clone();
        t.phi = Some(self.phi.eval(values)?);
        t.d = Some(self.d.eval(values)?);
        t.s = match &self.s {
            Some(s) => Some(u32::try_from(s.eval(values)?).ok()?),
            None => {
                if t.delta_c() != 0 {
                    t.c_ext = t.c_reg;
                    t.l = None;
                }
                None
            }
        };
        Some(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ResourceKind {
    Preemptive,
    NonPreemptive { blocking: Tick },
}

impl ResourceKind {
    pub fn blocking(self) -> Tick {
        match self {
            ResourceKind::Preemptive => 0,
            ResourceKind::NonPreemptive { blocking } => blocking,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceProblem {
    pub resource: Resource,
    pub kind: ResourceKind,
    pub tasks: Vec<BoundTask>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardSense {
    /// `expr <= 0`
    NonPositive,
    /// `expr == 0`
    Zero,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub name: String,
    pub expr: Lin,
    pub sense: GuardSense,
}

impl Guard {
    /// `lhs <= rhs`
    pub fn le(name: &str, lhs: &Lin, rhs: &Lin) -> Self {
        Guard { name: name.into(), expr: lhs.minus(rhs), sense: GuardSense::NonPositive }
    }

    /// `lhs == rhs`
    pub fn eq(name: &str, lhs: &Lin, rhs: &Lin) -> Self {
        Guard { name: name.into(), expr: lhs.minus(rhs), sense: GuardSense::Zero }
    }

    pub fn holds(&self, values: &[Option<i64>]) -> Option<bool> {
        let v = self.expr.eval(values)?;
        Some(match self.sense {
            GuardSense::NonPositive => v <= 0,
            GuardSense::Zero => v == 0,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisProblem {
    pub vars: Vec<DecisionVar>,
    pub resources: Vec<ResourceProblem>,
    pub guards: Vec<Guard>,
}

impl SynthesisProblem {
    pub fn add_var(&mut self, var: DecisionVar) -> usize {
        self.vars.push(var);
        self.vars.len() - 1
    }

    pub fn domains(&self) -> Vec<(i64, i64)> {
        self.vars.iter().map(|v| (v.lo, v.hi)).collect()
    }

    pub fn check_domains(&self) -> Result<(), MilpError> {
        for v in &self.vars {
            if v.step <= 0 {
                return Err(MilpError::Unbounded(v.name.clone()));
            }
            if v.lo > v.hi {
                return Err(MilpError::EmptyDomain(v.name.clone()));
            }
        }
        for r in &self.resources {
            for t in &r.tasks {
                if t.task.c_reg <= 0 {
                    return Err(MilpError::MissingWcet(t.task.id));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SynthesisStatus {
    Feasible,
    Infeasible,
    Timeout,
}

/// Per-task parameters chosen by synthesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskParams {
    pub phi: Tick,
    pub d: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisStats {
    pub variables: usize,
    pub constraints: usize,
    /// Domain values excluded by propagation and relaxed demand checks.
    pub pruned_values: u64,
    pub nodes: u64,
    pub oracle_calls: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl SynthesisStats {
    fn absorb(&mut self, other: &SynthesisStats) {
        self.variables += other.variables;
        self.constraints += other.constraints;
        self.pruned_values += other.pruned_values;
        self.nodes += other.nodes;
        self.oracle_calls += other.oracle_calls;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub status: SynthesisStatus,
    pub assignment: BTreeMap<TaskId, TaskParams>,
    /// Decision variable values by name.
    pub values: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    /// False when a limit stopped branch-and-bound with an incumbent in hand.
    pub proven_optimal: bool,
    pub stats: SynthesisStats,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageLog>,
    /// Link setting imposed by a decomposition strategy, applied with the parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing_lag: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_nodes: u64,
    pub max_oracle_calls: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_nodes: 2_000_000, max_oracle_calls: 2_000_000 }
    }
}
