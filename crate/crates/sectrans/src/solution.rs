//! Solution files: export of synthesis results, import of values found by an
//! external MILP solver, and re-verification of either.

use std::collections::BTreeMap;

use serde::Serialize;

use sectrans_core::demand::{analyze_system, Status};
use sectrans_core::edf_sim::{check_transaction_timing, simulate_system, Trace, TimingReport};
use sectrans_core::milp::{
    apply_solution, problem_from_system, MilpError, SynthesisResult, SynthesisStats, SynthesisStatus, TaskParams,
};
use sectrans_core::model::{t_max, Resource, SystemModel};
use sectrans_core::time::Tick;

use crate::report::ResourceVerdict;
use crate::schema::{FormatError, SolutionDoc, SCHEMA_VERSION};

/// Values further than this from an integer are rejected on import.
pub const INTEGRALITY: f64 = 1e-6;

pub fn to_doc(result: &SynthesisResult) -> SolutionDoc {
    SolutionDoc { schema_version: SCHEMA_VERSION, result: result.clone() }
}

/// Reads `name value` lines as written by common solvers (`.sol`); lines
/// starting with `#` and anything after the second column are ignored.
pub fn parse_sol(text: &str) -> Result<BTreeMap<String, f64>, FormatError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let (Some(name), Some(value)) = (cols.next(), cols.next()) else {
            return Err(FormatError::Lp(format!("solution line {}: expected `name value`", i + 1)));
        };
        let value: f64 =
            value.parse().map_err(|_| FormatError::Lp(format!("solution line {}: bad value {value:?}", i + 1)))?;
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("no value for decision variable {0}")]
    Missing(String),
    #[error("value {value} of {name} is not integral")]
    Fractional { name: String, value: f64 },
    #[error("value {value} of {name} is outside [{lo}, {hi}]")]
    OutOfDomain { name: String, value: i64, lo: i64, hi: i64 },
}

/// Turns decision-variable values into a synthesis result for `system`.
/// Auxiliary variables of the encoding are ignored; the parameters are
/// re-verified separately, so nothing here trusts the solver's feasibility claim.
pub fn import_values(system: &SystemModel, values: &BTreeMap<String, f64>) -> Result<SynthesisResult, ImportError> {
    let problem = problem_from_system(system)?;
    let mut point = Vec::with_capacity(problem.vars.len());
    let mut named = BTreeMap::new();
    for v in &problem.vars {
        let raw = *values.get(&v.name).ok_or_else(|| ImportError::Missing(v.name.clone()))?;
        let x = raw.round();
        if (raw - x).abs() > INTEGRALITY {
            return Err(ImportError::Fractional { name: v.name.clone(), value: raw });
        }
        let x = x as i64;
        if x < v.lo || x > v.hi || (x - v.lo) % v.step != 0 {
            return Err(ImportError::OutOfDomain { name: v.name.clone(), value: x, lo: v.lo, hi: v.hi });
        }
        point.push(Some(x));
        named.insert(v.name.clone(), x);
    }
    let mut assignment = BTreeMap::new();
    for r in &problem.resources {
        for bt in &r.tasks {
            let t = bt.instantiate(&point).expect("every variable has a value");
            let params = TaskParams { phi: t.phi.unwrap_or(0), d: t.d.unwrap_or(t.p), s: t.s };
            assignment.insert(t.id, params);
        }
    }
    Ok(SynthesisResult {
        status: SynthesisStatus::Feasible,
        assignment,
        values: named,
        objective: None,
        proven_optimal: false,
        stats: SynthesisStats { variables: problem.vars.len(), ..SynthesisStats::default() },
        stages: Vec::new(),
        sensing_lag: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verification {
    pub horizon: Tick,
    pub analysis: Vec<ResourceVerdict>,
    pub misses: usize,
    pub timing: TimingReport,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.misses == 0 && self.timing.is_clean() && self.analysis.iter().all(|v| v.status == Status::Schedulable)
    }
}

/// Applies `result` to `system`, then checks it by demand analysis on every
/// resource and by simulation over `horizon` (default: the analysis horizon).
pub fn verify(
    system: &SystemModel,
    result: &SynthesisResult,
    horizon: Option<Tick>,
) -> anyhow::Result<(SystemModel, Verification, Vec<(Resource, Trace)>)> {
    let applied = apply_solution(system, result)?;
    let analysis = analyze_system(&applied)?
        .into_iter()
        .map(|(r, v)| ResourceVerdict::new(&applied, r, &v))
        .collect();
    let all: Vec<_> = applied.all_tasks().cloned().collect();
    let horizon = match horizon {
        Some(h) => h,
        None => t_max(&all)?,
    };
    let traces = simulate_system(&applied, horizon)?;
    let misses = traces.iter().map(|(_, t)| t.miss_count()).sum();
    let timing = check_transaction_timing(&applied, &traces)?;
    Ok((applied, Verification { horizon, analysis, misses, timing }, traces))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sol_files_skip_comments() {
        let v = parse_sol("# Objective value = 0\nphi_1 3\n\nd_1 7.0000000001\n").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v["phi_1"], 3.0);
        assert!(parse_sol("phi_1\n").is_err());
        assert!(parse_sol("phi_1 x\n").is_err());
    }
}
