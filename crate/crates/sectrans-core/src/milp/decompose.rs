//! Turning a system into synthesis problems, and the two-stage decomposition.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::search::{solve, ObjectiveMode};
use super::{
    BoundTask, DecisionVar, Guard, Limits, Lin, MilpError, ResourceKind, ResourceProblem, SynthesisProblem,
    SynthesisResult, SynthesisStats, SynthesisStatus, VarClass,
};
use crate::model::{ControlTransaction, Resource, SecureTask, SystemModel, TaskId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Bus first with every message released at the period start, then all ECUs.
    #[default]
    NetworkFirst,
    /// ECUs first with sensing at the period start, then a bus check.
    EcuFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    pub strategy: Strategy,
    pub limits: Limits,
    pub mode: ObjectiveMode,
    /// ECU-first objective: weight on each sensing deadline (minimized).
    pub sensing_deadline_weight: f64,
    /// ECU-first objective: weight on each control offset (maximized).
    pub control_offset_weight: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            strategy: Strategy::NetworkFirst,
            limits: Limits::default(),
            mode: ObjectiveMode::Lexicographic,
            sensing_deadline_weight: 1.0,
            control_offset_weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: String,
    pub status: SynthesisStatus,
    pub proven_optimal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    pub stats: SynthesisStats,
}

fn var(p: &mut SynthesisProblem, name: String, class: VarClass, lo: i64, hi: i64, weight: f64) -> Lin {
    Lin::var(p.add_var(DecisionVar::new(&name, class, lo, hi).weighted(weight)))
}

fn known_or_var(p: &mut SynthesisProblem, value: Option<i64>, name: String, class: VarClass, lo: i64, hi: i64) -> Lin {
    match value {
        Some(x) => Lin::constant(x),
        None => var(p, name, class, lo, hi, 0.0),
    }
}

fn bind(task: &SecureTask, phi: Lin, d: Lin, s: &Lin) -> BoundTask {
    let s = (task.l.is_some() && task.delta_c() != 0).then(|| s.clone());
    BoundTask { task: task.clone(), phi, d, s, windowed: true }
}

/// Authentication offsets of the sensing task and of the message and control task.
fn offsets(tx: &ControlTransaction, s: &Lin, lag: bool) -> (Lin, Lin) {
    let shift = i64::from(tx.policy.f) - 1 + i64::from(lag);
    (s.clone(), s.offset(shift))
}

fn auth_var(p: &mut SynthesisProblem, tx: &ControlTransaction, fixed: Option<u32>) -> Lin {
    match fixed.or(tx.policy.s) {
        Some(s) => Lin::constant(i64::from(s)),
        None => var(p, format!("s_{}", tx.id), VarClass::AuthOffset, 0, i64::from(tx.policy.l - tx.policy.f), 0.0),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    Ecus,
    Bus,
    All,
}

fn resources(system: &SystemModel, bound: &BTreeMap<TaskId, BoundTask>, scope: Scope) -> Result<Vec<ResourceProblem>, MilpError> {
    let mut out = Vec::new();
    for r in system.resources() {
        let wanted = match r {
            Resource::Bus => scope != Scope::Ecus,
            Resource::Ecu(_) => scope != Scope::Bus,
        };
        let tasks = system.tasks_on(r);
        if !wanted || tasks.is_empty() {
            continue;
        }
        let kind = match r {
            Resource::Bus => ResourceKind::NonPreemptive { blocking: system.bus_blocking() },
            Resource::Ecu(_) => ResourceKind::Preemptive,
        };
        let tasks = tasks
            .iter()
            .map(|t| match bound.get(&t.id) {
                Some(bt) => Ok(bt.clone()),
                None => BoundTask::fixed(t),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(ResourceProblem { resource: r, kind, tasks });
    }
    Ok(out)
}

/// The whole synthesis problem: every unset offset, deadline and initial
/// authentication offset of the transactions becomes a variable, tied together
/// by precedence, period windows and the end-to-end delay bound.
pub fn problem_from_system(system: &SystemModel) -> Result<SynthesisProblem, MilpError> {
    let mut p = SynthesisProblem::default();
    let mut bound = BTreeMap::new();
    for tx in &system.transactions {
        let lag = tx.link.sensing_lag;
        let s = auth_var(&mut p, tx, None);
        let (s_sens, s_rest) = offsets(tx, &s, lag);
        let mut params = Vec::new();
        for t in tx.tasks() {
            let phi = known_or_var(&mut p, t.phi, format!("phi_{}", t.id), VarClass::Offset, 0, tx.p - 1);
            let d = known_or_var(&mut p, t.d, format!("d_{}", t.id), VarClass::Deadline, 1, tx.p);
            params.push((phi, d));
        }
        let [(ps, ds), (pn, dn), (pc, dc)] = [params[0].clone(), params[1].clone(), params[2].clone()];
        let lag_ticks = if lag { tx.p } else { 0 };
        p.guards.push(Guard::le(&format!("tx{}_sens_before_net", tx.id), &ps.plus(&ds), &pn.offset(lag_ticks)));
        p.guards.push(Guard::le(&format!("tx{}_net_before_ctrl", tx.id), &pn.plus(&dn), &pc));
        let delay = pc.plus(&dc).offset(lag_ticks).minus(&ps);
        p.guards.push(Guard::le(&format!("tx{}_e2e", tx.id), &delay, &Lin::constant(tx.e2e_bound())));
        if [&tx.sens, &tx.net, &tx.ctrl].iter().any(|t| t.d.is_none()) {
            let sum = ds.plus(&dn).plus(&dc);
            p.guards.push(Guard::eq(&format!("tx{}_deadline_sum", tx.id), &sum, &Lin::constant(tx.e2e_bound())));
        }
        bound.insert(tx.sens.id, bind(&tx.sens, ps, ds, &s_sens));
        bound.insert(tx.net.id, bind(&tx.net, pn, dn, &s_rest));
        bound.insert(tx.ctrl.id, bind(&tx.ctrl, pc, dc, &s_rest));
    }
    p.resources = resources(system, &bound, Scope::All)?;
    Ok(p)
}

fn strategy_error(strategy: Strategy, reason: String) -> MilpError {
    MilpError::Strategy { strategy, reason }
}

fn no_preset(strategy: Strategy, t: &SecureTask, phi: bool, d: bool) -> Result<(), MilpError> {
    if (phi && t.phi.is_some()) || (d && t.d.is_some()) {
        return Err(strategy_error(strategy, format!("task {} has preset timing that this strategy derives", t.id)));
    }
    Ok(())
}

struct Stage {
    name: &'static str,
    problem: SynthesisProblem,
}

fn run_stage(stage: &Stage, opts: &DecomposeOptions, out: &mut SynthesisResult) -> Result<bool, MilpError> {
    let r = solve(&stage.problem, opts.limits, opts.mode)?;
    out.stats.absorb(&r.stats);
    out.stages.push(StageLog {
        stage: stage.name.to_string(),
        status: r.status,
        proven_optimal: r.proven_optimal,
        objective: r.objective,
        stats: r.stats.clone(),
    });
    out.status = r.status;
    out.proven_optimal &= r.proven_optimal;
    out.values.extend(r.values.iter().map(|(k, v)| (k.clone(), *v)));
    out.assignment.extend(r.assignment.iter().map(|(k, v)| (*k, *v)));
    Ok(r.status == SynthesisStatus::Feasible)
}

fn infeasible_stage(name: &str, out: &mut SynthesisResult) {
    out.status = SynthesisStatus::Infeasible;
    out.stages.push(StageLog {
        stage: name.to_string(),
        status: SynthesisStatus::Infeasible,
        proven_optimal: true,
        objective: None,
        stats: SynthesisStats::default(),
    });
}

/// Two-stage synthesis. The first stage's answer is fixed for the second;
/// there is no backtracking between stages, so a second-stage failure is
/// reported as infeasible with that stage named in the log.
pub fn synthesize_decomposed(system: &SystemModel, opts: &DecomposeOptions) -> Result<SynthesisResult, MilpError> {
    let mut out = SynthesisResult {
        status: SynthesisStatus::Infeasible,
        assignment: BTreeMap::new(),
        values: BTreeMap::new(),
        objective: None,
        proven_optimal: true,
        stats: SynthesisStats::default(),
        stages: Vec::new(),
        sensing_lag: None,
    };
    match opts.strategy {
        Strategy::NetworkFirst => network_first(system, opts, &mut out)?,
        Strategy::EcuFirst => ecu_first(system, opts, &mut out)?,
    }
    let tx_tasks: Vec<TaskId> = system.transactions.iter().flat_map(|tx| tx.tasks().map(|t| t.id)).collect();
    out.assignment.retain(|id, _| tx_tasks.contains(id));
    if out.status != SynthesisStatus::Feasible {
        out.assignment.clear();
    }
    Ok(out)
}

fn network_first(system: &SystemModel, opts: &DecomposeOptions, out: &mut SynthesisResult) -> Result<(), MilpError> {
    let strategy = Strategy::NetworkFirst;
    out.sensing_lag = Some(true);
    for tx in &system.transactions {
        if matches!(tx.net.phi, Some(phi) if phi != 0) {
            return Err(strategy_error(strategy, format!("message {} has offset {}", tx.net.id, tx.net.phi.unwrap_or(0))));
        }
        no_preset(strategy, &tx.sens, true, true)?;
        no_preset(strategy, &tx.ctrl, true, true)?;
    }

    // stage 1: the bus, messages released at the period start
    let mut p = SynthesisProblem::default();
    let mut bound = BTreeMap::new();
    for tx in &system.transactions {
        let s = auth_var(&mut p, tx, None);
        let (_, s_net) = offsets(tx, &s, true);
        let room = tx.p.min(tx.e2e_bound()) - tx.sens.c_ext - tx.ctrl.c_ext;
        if room < 1 {
            infeasible_stage("network", out);
            return Ok(());
        }
        let d = match tx.net.d {
            Some(d) => Lin::constant(d),
            None => var(&mut p, format!("d_{}", tx.net.id), VarClass::Deadline, 1, room, 1.0),
        };
        bound.insert(tx.net.id, bind(&tx.net, Lin::constant(0), d, &s_net));
    }
    p.resources = resources(system, &bound, Scope::Bus)?;
    if !run_stage(&Stage { name: "network", problem: p }, opts, out)? {
        return Ok(());
    }

    // stage 2: every ECU, sensing ending at the period end, control starting at the message deadline
    let mut p = SynthesisProblem::default();
    let mut bound = BTreeMap::new();
    for tx in &system.transactions {
        let s_val = tx.policy.s.or_else(|| out.values.get(&format!("s_{}", tx.id)).map(|&x| x as u32));
        let s = auth_var(&mut p, tx, s_val);
        let (s_sens, s_rest) = offsets(tx, &s, true);
        let d_net = tx.net.d.or_else(|| out.values.get(&format!("d_{}", tx.net.id)).copied()).unwrap_or(1);
        let e2e = tx.e2e_bound();
        let hi = e2e - d_net - 1;
        if hi < 1 {
            infeasible_stage("ecu", out);
            return Ok(());
        }
        let d_s = var(&mut p, format!("d_{}", tx.sens.id), VarClass::Deadline, 1, hi, 0.0);
        let phi_s = Lin::constant(tx.p).minus(&d_s);
        let d_c = Lin::constant(e2e - d_net).minus(&d_s);
        bound.insert(tx.sens.id, bind(&tx.sens, phi_s, d_s, &s_sens));
        bound.insert(tx.ctrl.id, bind(&tx.ctrl, Lin::constant(d_net), d_c, &s_rest));
    }
    p.resources = resources(system, &bound, Scope::Ecus)?;
    run_stage(&Stage { name: "ecu", problem: p }, opts, out)?;
    Ok(())
}

fn ecu_first(system: &SystemModel, opts: &DecomposeOptions, out: &mut SynthesisResult) -> Result<(), MilpError> {
    let strategy = Strategy::EcuFirst;
    out.sensing_lag = Some(false);
    for tx in &system.transactions {
        if matches!(tx.sens.phi, Some(phi) if phi != 0) {
            return Err(strategy_error(strategy, format!("sensing task {} has a nonzero offset", tx.sens.id)));
        }
        no_preset(strategy, &tx.sens, false, true)?;
        no_preset(strategy, &tx.ctrl, true, true)?;
        no_preset(strategy, &tx.net, true, true)?;
    }

    // stage 1: every ECU, sensing from the period start, control ending at the delay bound
    let mut p = SynthesisProblem::default();
    let mut bound = BTreeMap::new();
    for tx in &system.transactions {
        let s = auth_var(&mut p, tx, None);
        let (s_sens, s_rest) = offsets(tx, &s, false);
        let e2e = tx.e2e_bound();
        let d_s = var(&mut p, format!("d_{}", tx.sens.id), VarClass::Deadline, 1, tx.p, opts.sensing_deadline_weight);
        let phi_c = var(&mut p, format!("phi_{}", tx.ctrl.id), VarClass::Offset, 0, tx.p - 1, -opts.control_offset_weight);
        p.guards.push(Guard::le(&format!("tx{}_message_room", tx.id), &d_s.offset(tx.net.c_ext), &phi_c));
        let d_c = Lin::constant(e2e).minus(&phi_c);
        bound.insert(tx.sens.id, bind(&tx.sens, Lin::constant(0), d_s, &s_sens));
        bound.insert(tx.ctrl.id, bind(&tx.ctrl, phi_c, d_c, &s_rest));
    }
    p.resources = resources(system, &bound, Scope::Ecus)?;
    if !run_stage(&Stage { name: "ecu", problem: p }, opts, out)? {
        return Ok(());
    }

    // stage 2: the bus, each message filling the gap between sensing and control
    let mut p = SynthesisProblem::default();
    let mut bound = BTreeMap::new();
    for tx in &system.transactions {
        let s_val = tx.policy.s.or_else(|| out.values.get(&format!("s_{}", tx.id)).map(|&x| x as u32));
        let s = auth_var(&mut p, tx, s_val);
        let (_, s_net) = offsets(tx, &s, false);
        let d_s = out.values.get(&format!("d_{}", tx.sens.id)).copied().unwrap_or(1);
        let phi_c = out.values.get(&format!("phi_{}", tx.ctrl.id)).copied().unwrap_or(0);
        bound.insert(tx.net.id, bind(&tx.net, Lin::constant(d_s), Lin::constant(phi_c - d_s), &s_net));
    }
    p.resources = resources(system, &bound, Scope::Bus)?;
    run_stage(&Stage { name: "network", problem: p }, opts, out)?;
    Ok(())
}

/// Writes synthesized offsets, deadlines and initial authentication offsets
/// into a copy of `system` and re-derives every transaction.
pub fn apply_solution(system: &SystemModel, result: &SynthesisResult) -> Result<SystemModel, MilpError> {
    let mut out = system.clone();
    for tx in &mut out.transactions {
        if let Some(lag) = result.sensing_lag {
            tx.link.sensing_lag = lag;
        }
        if let Some(&s) = result.values.get(&format!("s_{}", tx.id)) {
            let s = u32::try_from(s).map_err(|_| MilpError::EmptyDomain(format!("s_{}", tx.id)))?;
            tx.policy.s = Some(s);
            tx.sens.s = Some(s);
        }
        for t in tx.tasks_mut() {
            if let Some(params) = result.assignment.get(&t.id) {
                t.phi = Some(params.phi);
                t.d = Some(params.d);
            }
        }
        *tx = tx.reassemble()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{analyze_system, edf_nonpreemptive_schedulable};
    use crate::milp::exact_check;
    use crate::model::{AuthPolicy, Ecu, Link, TaskKind};
    use crate::time::Resolution;
    use alloc::vec;

    /// Sensing on ECU 0, control on ECU 1, one message each on the bus.
    fn system(specs: &[(i64, i64, i64, i64, u32, u32)], c_max_nrt: i64) -> SystemModel {
        let mut transactions = Vec::new();
        for (i, &(cs, cn, cc, p, f, l)) in specs.iter().enumerate() {
            let id = 3 * i as u32;
            let sens = SecureTask::new(id, TaskKind::Sensing, cs, p).with_ext(cs + (cs + 1) / 2);
            let net = SecureTask::new(id + 1, TaskKind::Message, cn, p).with_ext(2 * cn);
            let ctrl = SecureTask::new(id + 2, TaskKind::Control, cc, p).with_ext(cc + (cc + 1) / 2);
            let tx = ControlTransaction::assemble(i as u32, "plant", sens, net, ctrl, AuthPolicy::open(f, l), Link::default())
                .unwrap();
            transactions.push(tx);
        }
        SystemModel {
            resolution: Resolution::default(),
            ecus: vec![
                Ecu { id: 0, tasks: transactions.iter().map(|t| t.sens.id).collect() },
                Ecu { id: 1, tasks: transactions.iter().map(|t| t.ctrl.id).collect() },
            ],
            bus: transactions.iter().map(|t| t.net.id).collect(),
            transactions,
            background: Vec::new(),
            c_max_nrt,
        }
    }

    fn verified(system: &SystemModel, result: &SynthesisResult) -> SystemModel {
        assert_eq!(result.status, SynthesisStatus::Feasible);
        let solved = apply_solution(system, result).unwrap();
        assert!(solved.validate().is_valid(), "{:?}", solved.validate());
        for tx in &solved.transactions {
            assert!(tx.precedence_violations().is_empty());
            assert!(tx.tasks().iter().all(|t| t.is_complete()));
        }
        for (r, v) in analyze_system(&solved).unwrap() {
            assert!(v.is_schedulable(), "{r:?}: {v:?}");
        }
        solved
    }

    #[test]
    fn network_first_finds_a_verified_assignment() {
        let sys = system(&[(2, 2, 3, 40, 1, 2), (3, 2, 2, 60, 2, 3)], 2);
        let r = synthesize_decomposed(&sys, &DecomposeOptions::default()).unwrap();
        assert_eq!(r.stages.iter().map(|s| s.stage.as_str()).collect::<Vec<_>>(), ["network", "ecu"]);
        let solved = verified(&sys, &r);
        for tx in &solved.transactions {
            assert!(tx.link.sensing_lag);
            assert_eq!(tx.net.phi, Some(0));
            assert_eq!(tx.sens.phi.unwrap() + tx.sens.d.unwrap(), tx.p);
            assert_eq!(tx.sens.d.unwrap() + tx.net.d.unwrap() + tx.ctrl.d.unwrap(), tx.p);
        }
    }

    #[test]
    fn ecu_first_finds_a_verified_assignment() {
        let sys = system(&[(2, 2, 3, 40, 1, 2), (3, 2, 2, 60, 2, 3)], 2);
        let opts = DecomposeOptions { strategy: Strategy::EcuFirst, ..DecomposeOptions::default() };
        let r = synthesize_decomposed(&sys, &opts).unwrap();
        assert_eq!(r.stages.iter().map(|s| s.stage.as_str()).collect::<Vec<_>>(), ["ecu", "network"]);
        let solved = verified(&sys, &r);
        for tx in &solved.transactions {
            assert!(!tx.link.sensing_lag);
            assert_eq!(tx.sens.phi, Some(0));
            assert_eq!(tx.net.phi, tx.sens.d);
            assert_eq!(tx.ctrl.phi.unwrap() + tx.ctrl.d.unwrap(), tx.p);
        }
    }

    #[test]
    fn overloaded_bus_fails_in_the_network_stage() {
        let sys = system(&[(1, 6, 1, 10, 1, 1), (1, 6, 1, 10, 1, 1)], 0);
        let r = synthesize_decomposed(&sys, &DecomposeOptions::default()).unwrap();
        assert_eq!(r.status, SynthesisStatus::Infeasible);
        assert_eq!(r.stages.len(), 1);
        assert_eq!(r.stages[0].stage, "network");
        assert!(r.assignment.is_empty());
    }

    #[test]
    fn single_message_gets_the_smallest_feasible_deadline() {
        let sys = system(&[(2, 3, 2, 30, 1, 2)], 0);
        let r = synthesize_decomposed(&sys, &DecomposeOptions::default()).unwrap();
        verified(&sys, &r);
        let tx = &sys.transactions[0];
        let oracle = (1..=30)
            .find(|&d| {
                (0..=1).any(|s| {
                    let m = tx.net.clone().with_offset(0).with_deadline(d).with_auth(2, 1, s + 1);
                    edf_nonpreemptive_schedulable(&[m], 0).unwrap().is_schedulable()
                })
            })
            .unwrap();
        assert_eq!(r.assignment[&tx.net.id].d, oracle);
    }

    #[test]
    fn preset_message_offset_is_rejected() {
        let mut sys = system(&[(2, 3, 2, 30, 1, 2)], 0);
        sys.transactions[0].net.phi = Some(4);
        let err = synthesize_decomposed(&sys, &DecomposeOptions::default()).unwrap_err();
        assert!(matches!(err, MilpError::Strategy { strategy: Strategy::NetworkFirst, .. }));
    }

    #[test]
    fn fully_specified_system_has_no_variables() {
        let sys = system(&[(2, 2, 3, 40, 1, 2), (3, 2, 2, 60, 2, 3)], 2);
        let r = synthesize_decomposed(&sys, &DecomposeOptions::default()).unwrap();
        let solved = apply_solution(&sys, &r).unwrap();
        let p = problem_from_system(&solved).unwrap();
        assert!(p.vars.is_empty());
        assert!(exact_check(&p, &[]).unwrap());
        let open = problem_from_system(&sys).unwrap();
        assert_eq!(open.vars.len(), 2 * 7);
    }
}
