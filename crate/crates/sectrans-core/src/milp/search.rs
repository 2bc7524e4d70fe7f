//! Exact depth-first search over the decision variables.
//!
//! Variables are branched in (authentication offset, offset, deadline) order.
//! Every node propagates the guards to bounds and runs a relaxed demand check
//! per resource: each task gets the earliest arrival and the latest deadline
//! its expressions allow, and tasks with an open authentication offset lose
//! their overhead. A failed relaxed check means every completion fails, and
//! a leaf where all checks pass is an exact schedulability proof.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use super::{
    BoundTask, GuardSense, Lin, Limits, MilpError, ResourceProblem, SynthesisProblem, SynthesisResult, SynthesisStats,
    SynthesisStatus, TaskParams,
};
use crate::demand::{first_violation, overloaded};
use crate::model::SecureTask;

/// How weights steer the search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    /// Branch-and-bound on `Σ weight · value`; ties go to the smaller assignment.
    #[default]
    Weighted,
    /// Minimize (or, for negative weights, maximize) each variable in branching
    /// order. The first feasible leaf is the answer.
    Lexicographic,
}

/// Solves with [`ObjectiveMode::Weighted`]; with all weights zero this is the
/// lexicographically smallest feasible assignment.
pub fn solve_feasibility(problem: &SynthesisProblem, limits: Limits) -> Result<SynthesisResult, MilpError> {
    solve(problem, limits, ObjectiveMode::Weighted)
}

pub fn solve(problem: &SynthesisProblem, limits: Limits, mode: ObjectiveMode) -> Result<SynthesisResult, MilpError> {
    if limits.max_nodes == 0 || limits.max_oracle_calls == 0 {
        return Err(MilpError::Limits("node and oracle limits must be positive"));
    }
    problem.check_domains()?;
    let mut s = Search::new(problem, limits, mode);
    let overload = problem.resources.iter().any(|r| overloaded(&r.tasks.iter().map(utilization_view).collect::<Vec<_>>()));
    if !overload {
        let root = problem.domains();
        s.dfs(0, root, None);
    }
    Ok(s.finish())
}

/// Whether a full assignment meets every guard and every resource's demand condition.
pub fn exact_check(problem: &SynthesisProblem, values: &[i64]) -> Result<bool, MilpError> {
    if values.len() != problem.vars.len() {
        return Err(MilpError::Limits("one value per decision variable is required"));
    }
    let known: Vec<Option<i64>> = values.iter().map(|&x| Some(x)).collect();
    for (v, &x) in problem.vars.iter().zip(values) {
        if x < v.lo || x > v.hi || (x - v.lo) % v.step != 0 {
            return Ok(false);
        }
    }
    if all_guards(problem).iter().any(|g| g.holds(&known) != Some(true)) {
        return Ok(false);
    }
    for r in &problem.resources {
        let mut tasks = Vec::with_capacity(r.tasks.len());
        for bt in &r.tasks {
            match bt.instantiate(&known) {
                Some(t) => tasks.push(t),
                None => return Ok(false),
            }
        }
        if overloaded(&tasks) || first_violation(&tasks, r.kind.blocking())?.is_some() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn utilization_view(bt: &BoundTask) -> SecureTask {
    let mut t = bt.task.clone();
    if bt.s.is_none() {
        t.c_ext = t.c_reg;
        t.l = None;
    }
    t
}

/// Problem guards plus `d >= 1`, `φ >= 0`, `s >= 0` and the period window for every task.
fn all_guards(problem: &SynthesisProblem) -> Vec<super::Guard> {
    let mut out = problem.guards.clone();
    for r in &problem.resources {
        for bt in &r.tasks {
            out.push(super::Guard { name: "d_min".into(), expr: Lin::constant(1).minus(&bt.d), sense: GuardSense::NonPositive });
            out.push(super::Guard { name: "phi_min".into(), expr: bt.phi.scale(-1), sense: GuardSense::NonPositive });
            if let Some(s) = &bt.s {
                out.push(super::Guard { name: "s_min".into(), expr: s.scale(-1), sense: GuardSense::NonPositive });
            }
            if bt.windowed {
                let cap = bt.phi.plus(&bt.d).offset(-bt.task.p);
                out.push(super::Guard { name: "window".into(), expr: cap, sense: GuardSense::NonPositive });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Effect {
    None,
    /// Larger values only widen job windows.
    Relaxing,
    /// Larger values only narrow job windows.
    Tightening,
    Mixed,
}

impl Effect {
    fn join(self, other: Effect) -> Effect {
        match (self, other) {
            (Effect::None, x) | (x, Effect::None) => x,
            (a, b) if a == b => a,
            _ => Effect::Mixed,
        }
    }

    fn of(bt: &BoundTask, v: usize) -> Effect {
        if bt.s.as_ref().is_some_and(|s| s.coeff(v) != 0) {
            return Effect::Mixed;
        }
        let c_phi = bt.phi.coeff(v);
        let c_end = c_phi + bt.d.coeff(v);
        match (c_phi, c_end) {
            (0, 0) => Effect::None,
            (a, b) if a <= 0 && b >= 0 => Effect::Relaxing,
            (a, b) if a >= 0 && b <= 0 => Effect::Tightening,
            _ => Effect::Mixed,
        }
    }
}

/// Why a subtree holds no solution.
#[derive(Clone, Debug, Default)]
struct Causes {
    resources: BTreeSet<usize>,
    guard: bool,
    /// Cut by the objective bound or a limit rather than proven infeasible.
    inexact: bool,
}

impl Causes {
    fn merge(&mut self, other: &Causes) {
        self.resources.extend(other.resources.iter().copied());
        self.guard |= other.guard;
        self.inexact |= other.inexact;
    }
}

enum Outcome {
    Found,
    Failed(Causes),
    Stop,
}

struct Search<'a> {
    problem: &'a SynthesisProblem,
    limits: Limits,
    mode: ObjectiveMode,
    guards: Vec<super::Guard>,
    order: Vec<usize>,
    effects: Vec<Vec<Effect>>,
    /// Resources whose tasks mention each variable.
    touches: Vec<Vec<usize>>,
    coupled: Vec<bool>,
    weighted: bool,
    best: Option<(f64, Vec<i64>)>,
    stats: SynthesisStats,
    stopped: bool,
}

impl<'a> Search<'a> {
    fn new(problem: &'a SynthesisProblem, limits: Limits, mode: ObjectiveMode) -> Self {
        let n = problem.vars.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| (problem.vars[v].class, v));
        let guards = all_guards(problem);
        let mut effects = alloc::vec![alloc::vec![Effect::None; problem.resources.len()]; n];
        let mut touches = alloc::vec![Vec::new(); n];
        for (r, res) in problem.resources.iter().enumerate() {
            for (v, row) in effects.iter_mut().enumerate() {
                let e = res.tasks.iter().fold(Effect::None, |acc, bt| acc.join(Effect::of(bt, v)));
                row[r] = e;
                if e != Effect::None {
                    touches[v].push(r);
                }
            }
        }
        let mut coupled = alloc::vec![false; n];
        for g in &guards {
            if g.expr.terms.len() > 1 {
                for &(v, _) in &g.expr.terms {
                    coupled[v] = true;
                }
            }
        }
        let weighted = problem.vars.iter().any(|v| v.weight != 0.0);
        let stats = SynthesisStats { variables: n, constraints: guards.len() + problem.resources.len(), ..Default::default() };
        Search { problem, limits, mode, guards, order, effects, touches, coupled, weighted, best: None, stats, stopped: false }
    }

    fn finish(self) -> SynthesisResult {
        let (status, proven) = match (&self.best, self.stopped) {
            (Some(_), stopped) => (SynthesisStatus::Feasible, !stopped),
            (None, true) => (SynthesisStatus::Timeout, false),
            (None, false) => (SynthesisStatus::Infeasible, true),
        };
        let mut result = SynthesisResult {
            status,
            assignment: BTreeMap::new(),
            values: BTreeMap::new(),
            objective: None,
            proven_optimal: proven,
            stats: self.stats,
            stages: Vec::new(),
            sensing_lag: None,
        };
        if let Some((obj, values)) = self.best {
            let known: Vec<Option<i64>> = values.iter().map(|&x| Some(x)).collect();
            for (v, &x) in self.problem.vars.iter().zip(&values) {
                result.values.insert(v.name.clone(), x);
            }
            for r in &self.problem.resources {
                for bt in &r.tasks {
                    if let Some(t) = bt.instantiate(&known) {
                        result.assignment.insert(t.id, TaskParams { phi: t.phi.unwrap_or(0), d: t.d.unwrap_or(0), s: t.s });
                    }
                }
            }
            if self.weighted {
                result.objective = Some(obj);
            }
        }
        result
    }

    /// Guard bounds propagation to a fixpoint; `false` on an empty domain.
    fn propagate(&mut self, dom: &mut [(i64, i64)]) -> bool {
        let vars = &self.problem.vars;
        let snap = |v: usize, lo: i64, hi: i64| {
            let var = &vars[v];
            (
                var.lo + Integer::div_ceil(&(lo - var.lo), &var.step) * var.step,
                var.lo + Integer::div_floor(&(hi - var.lo), &var.step) * var.step,
            )
        };
        let mut pruned = 0u64;
        let mut feasible = true;
        'fix: for _ in 0..1000 {
            let mut changed = false;
            for g in &self.guards {
                let negated = g.expr.scale(-1);
                let sides: &[&Lin] = match g.sense {
                    GuardSense::NonPositive => &[&g.expr],
                    GuardSense::Zero => &[&g.expr, &negated],
                };
                for expr in sides {
                    for &(v, c) in &expr.terms {
                        let (lo, hi) = dom[v];
                        let own_min = if c > 0 { c * lo } else { c * hi };
                        let room = -(expr.bounds(dom).0 - own_min);
                        // c·x <= room
                        let (nlo, nhi) = if c > 0 {
                            snap(v, lo, hi.min(Integer::div_floor(&room, &c)))
                        } else {
                            snap(v, lo.max(Integer::div_ceil(&room, &c)), hi)
                        };
                        if nlo > nhi {
                            feasible = false;
                            break 'fix;
                        }
                        if (nlo, nhi) != (lo, hi) {
                            pruned += ((nlo - lo) + (hi - nhi)).unsigned_abs() / vars[v].step as u64;
                            dom[v] = (nlo, nhi);
                            changed = true;
                        }
                    }
                    if expr.bounds(dom).0 > 0 {
                        feasible = false;
                        break 'fix;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        self.stats.pruned_values += pruned;
        feasible
    }

    fn relaxed_ok(&mut self, r: usize, dom: &[(i64, i64)]) -> bool {
        self.stats.oracle_calls += 1;
        if self.stats.oracle_calls > self.limits.max_oracle_calls {
            self.stopped = true;
        }
        let res: &ResourceProblem = &self.problem.resources[r];
        let mut tasks = Vec::with_capacity(res.tasks.len());
        for bt in &res.tasks {
            let (phi, _) = bt.phi.bounds(dom);
            let (_, end) = bt.phi.plus(&bt.d).bounds(dom);
            if end - phi < 1 {
                return false;
            }
            let mut t = bt.task.clone();
            t.phi = Some(phi);
            t.d = Some(end - phi);
            t.s = None;
            let fixed_s = bt.s.as_ref().map(|s| s.bounds(dom)).filter(|(lo, hi)| lo == hi);
            match fixed_s {
                Some((s, _)) if s >= 0 => t.s = u32::try_from(s).ok(),
                Some(_) => return false,
                None => {
                    t.c_ext = t.c_reg;
                    t.l = None;
                }
            }
            tasks.push(t);
        }
        matches!(first_violation(&tasks, res.kind.blocking()), Ok(None))
    }

    fn with_value(dom: &[(i64, i64)], v: usize, x: i64) -> Vec<(i64, i64)> {
        let mut d = dom.to_vec();
        d[v] = (x, x);
        d
    }

    /// Shrinks the domain of `v` with binary searches over the resources on
    /// which it acts monotonically.
    fn narrow(&mut self, v: usize, dom: &mut [(i64, i64)], causes: &mut Causes) -> bool {
        let step = self.problem.vars[v].step;
        for effect in [Effect::Relaxing, Effect::Tightening] {
            let rs: Vec<usize> = self.touches[v].iter().copied().filter(|&r| self.effects[v][r] == effect).collect();
            if rs.is_empty() {
                continue;
            }
            let (lo, hi) = dom[v];
            let ok = |s: &mut Self, x: i64| {
                let d = Self::with_value(dom, v, x);
                rs.iter().all(|&r| s.relaxed_ok(r, &d))
            };
            // relaxing resources accept a suffix of the domain, tightening ones a prefix
            let (best_end, other_end) = if effect == Effect::Relaxing { (hi, lo) } else { (lo, hi) };
            if !ok(self, best_end) {
                causes.resources.extend(rs.iter().copied());
                return false;
            }
            if ok(self, other_end) {
                continue;
            }
            // first index (in steps from other_end toward best_end) that passes
            let span = (best_end - other_end).abs() / step;
            let dir = if effect == Effect::Relaxing { step } else { -step };
            let (mut bad, mut good) = (0i64, span);
            while good - bad > 1 {
                let mid = bad + (good - bad) / 2;
                if ok(self, other_end + mid * dir) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            let edge = other_end + good * dir;
            self.stats.pruned_values += good as u64;
            dom[v] = if effect == Effect::Relaxing { (edge, hi) } else { (lo, edge) };
            causes.resources.extend(rs.iter().copied());
        }
        true
    }

    fn bound(&self, dom: &[(i64, i64)]) -> f64 {
        self.problem
            .vars
            .iter()
            .zip(dom)
            .map(|(v, &(lo, hi))| if v.weight >= 0.0 { v.weight * lo as f64 } else { v.weight * hi as f64 })
            .sum()
    }

    fn record(&mut self, dom: &[(i64, i64)]) {
        let values: Vec<i64> = dom.iter().map(|d| d.0).collect();
        let obj: f64 = self.problem.vars.iter().zip(&values).map(|(v, &x)| v.weight * x as f64).sum();
        let better = match &self.best {
            None => true,
            Some((b, vals)) => {
                obj < b - 1e-9 || ((obj - b).abs() <= 1e-9 && self.in_order(&values) < self.in_order(vals))
            }
        };
        if better {
            self.best = Some((obj, values));
        }
    }

    fn in_order(&self, values: &[i64]) -> Vec<i64> {
        self.order.iter().map(|&v| values[v]).collect()
    }

    /// `changed`: the variable assigned by the parent, whose resources need a
    /// fresh relaxed check. `None` checks everything.
    fn dfs(&mut self, depth: usize, mut dom: Vec<(i64, i64)>, changed: Option<usize>) -> Outcome {
        self.stats.nodes += 1;
        if self.stats.nodes > self.limits.max_nodes {
            self.stopped = true;
        }
        if self.stopped {
            return Outcome::Stop;
        }
        let before = dom.clone();
        if !self.propagate(&mut dom) {
            return Outcome::Failed(Causes { guard: true, ..Default::default() });
        }
        // Propagation may carry the parent's value into other domains; a
        // failure found below then depends on that value through the guards.
        let propagated = before.iter().zip(&dom).enumerate().any(|(v, (a, b))| a != b && Some(v) != changed);
        let mut dirty: BTreeSet<usize> = BTreeSet::new();
        match changed {
            None => dirty.extend(0..self.problem.resources.len()),
            Some(v) => dirty.extend(self.touches[v].iter().copied()),
        }
        for (v, (a, b)) in before.iter().zip(&dom).enumerate() {
            if a != b {
                dirty.extend(self.touches[v].iter().copied());
            }
        }
        for r in dirty {
            if !self.relaxed_ok(r, &dom) {
                let mut c = Causes { guard: propagated, ..Default::default() };
                c.resources.insert(r);
                return Outcome::Failed(c);
            }
        }
        if self.stopped {
            return Outcome::Stop;
        }
        if self.weighted && self.mode == ObjectiveMode::Weighted {
            if let Some((best, _)) = &self.best {
                if self.bound(&dom) > best + 1e-9 {
                    return Outcome::Failed(Causes { inexact: true, ..Default::default() });
                }
            }
        }
        if depth == self.order.len() {
            self.record(&dom);
            return Outcome::Found;
        }

        let v = self.order[depth];
        let mut causes = Causes { guard: propagated, ..Default::default() };
        if !self.narrow(v, &mut dom, &mut causes) {
            return Outcome::Failed(causes);
        }
        if self.stopped {
            return Outcome::Stop;
        }
        let step = self.problem.vars[v].step;
        let ascending = self.problem.vars[v].weight >= 0.0;
        let (lo, hi) = dom[v];
        let count = (hi - lo) / step + 1;
        let mut found = false;
        for k in 0..count {
            let x = if ascending { lo + k * step } else { hi - k * step };
            match self.dfs(depth + 1, Self::with_value(&dom, v, x), Some(v)) {
                Outcome::Stop => return if found { Outcome::Found } else { Outcome::Stop },
                Outcome::Found => {
                    found = true;
                    if !self.weighted || self.mode == ObjectiveMode::Lexicographic {
                        return Outcome::Found;
                    }
                    causes.inexact = true;
                }
                Outcome::Failed(c) => {
                    causes.merge(&c);
                    if self.skip_rest(v, &c, ascending) {
                        self.stats.pruned_values += (count - k - 1) as u64;
                        break;
                    }
                }
            }
        }
        if found {
            Outcome::Found
        } else {
            Outcome::Failed(causes)
        }
    }

    /// Whether the failure of `v = x` carries over to every later value in branching order.
    fn skip_rest(&self, v: usize, c: &Causes, ascending: bool) -> bool {
        if c.inexact || (c.guard && self.coupled[v]) {
            return false;
        }
        let carries = if ascending { Effect::Tightening } else { Effect::Relaxing };
        c.resources.iter().all(|&r| matches!(self.effects[v][r], Effect::None) || self.effects[v][r] == carries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{DecisionVar, Guard, ResourceKind, VarClass};
    use crate::model::{Resource, TaskKind};

    fn ecu(tasks: Vec<BoundTask>) -> ResourceProblem {
        ResourceProblem { resource: Resource::Ecu(0), kind: ResourceKind::Preemptive, tasks }
    }

    fn three_tasks_free_s(l: [u32; 3]) -> SynthesisProblem {
        let spec = [(1, 2, 4, 10), (2, 2, 4, 10), (3, 4, 7, 20)];
        let mut p = SynthesisProblem::default();
        let mut tasks = Vec::new();
        for (i, &(id, c, ce, per)) in spec.iter().enumerate() {
            let t = SecureTask::implicit(id, TaskKind::Sensing, c, per).with_ext(ce).with_auth(l[i], 1, 0);
            let v = p.add_var(DecisionVar::new(&alloc::format!("s{id}"), VarClass::AuthOffset, 0, i64::from(l[i]) - 1));
            let mut bt = BoundTask::fixed(&t).unwrap();
            bt.s = Some(Lin::var(v));
            tasks.push(bt);
        }
        p.resources.push(ecu(tasks));
        p
    }

    #[test]
    fn first_feasible_offsets_are_lexicographically_smallest() {
        for l in [[2, 2, 1], [2, 4, 2], [1, 4, 2]] {
            let p = three_tasks_free_s(l);
            let r = solve_feasibility(&p, Limits::default()).unwrap();
            let mut all = Vec::new();
            for s1 in 0..i64::from(l[0]) {
                for s2 in 0..i64::from(l[1]) {
                    for s3 in 0..i64::from(l[2]) {
                        all.push([s1, s2, s3]);
                    }
                }
            }
            let expect = all.into_iter().find(|v| exact_check(&p, v).unwrap());
            let got = (r.status == SynthesisStatus::Feasible).then(|| [r.values["s1"], r.values["s2"], r.values["s3"]]);
            assert_eq!(got, expect, "l = {l:?}");
        }
    }

    #[test]
    fn authenticating_every_period_is_infeasible() {
        let r = solve_feasibility(&three_tasks_free_s([1, 1, 1]), Limits::default()).unwrap();
        assert_eq!(r.status, SynthesisStatus::Infeasible);
    }

    #[test]
    fn no_free_variables_is_decided_at_the_root() {
        let t = SecureTask::implicit(1, TaskKind::Background, 1, 5);
        let p = SynthesisProblem { resources: alloc::vec![ecu(alloc::vec![BoundTask::fixed(&t).unwrap()])], ..Default::default() };
        let r = solve_feasibility(&p, Limits::default()).unwrap();
        assert_eq!(r.status, SynthesisStatus::Feasible);
        assert_eq!(r.stats.nodes, 1);
    }

    #[test]
    fn smallest_deadline_is_lexicographically_first() {
        let mut p = SynthesisProblem::default();
        let d = p.add_var(DecisionVar::new("d", VarClass::Deadline, 1, 10));
        let t = SecureTask::new(1, TaskKind::Message, 3, 10).with_offset(0);
        let bt = BoundTask { task: t, phi: Lin::constant(0), d: Lin::var(d), s: None, windowed: true };
        p.resources.push(ResourceProblem { resource: Resource::Bus, kind: ResourceKind::NonPreemptive { blocking: 3 }, tasks: alloc::vec![bt] });
        let r = solve_feasibility(&p, Limits::default()).unwrap();
        assert_eq!(r.values["d"], 6);
        assert!(exact_check(&p, &[6]).unwrap());
        assert!(!exact_check(&p, &[5]).unwrap());
    }

    #[test]
    fn weighted_search_prefers_larger_values_with_negative_weight() {
        let mut p = SynthesisProblem::default();
        let phi = p.add_var(DecisionVar::new("phi", VarClass::Offset, 0, 9).weighted(-1.0));
        let t = SecureTask::new(1, TaskKind::Control, 2, 10).with_deadline(1);
        let bt = BoundTask { task: t, phi: Lin::var(phi), d: Lin::constant(10).minus(&Lin::var(phi)), s: None, windowed: true };
        p.resources.push(ecu(alloc::vec![bt]));
        let r = solve_feasibility(&p, Limits::default()).unwrap();
        assert_eq!(r.values["phi"], 8);
        assert_eq!(r.objective, Some(-8.0));
        assert!(r.proven_optimal);
    }

    #[test]
    fn guards_propagate_into_domains() {
        let mut p = SynthesisProblem::default();
        let a = p.add_var(DecisionVar::new("a", VarClass::Deadline, 1, 10));
        let b = p.add_var(DecisionVar::new("b", VarClass::Deadline, 1, 10));
        p.guards.push(Guard::eq("sum", &Lin::var(a).plus(&Lin::var(b)), &Lin::constant(10)));
        p.guards.push(Guard::le("a_big", &Lin::constant(7), &Lin::var(a)));
        let r = solve_feasibility(&p, Limits::default()).unwrap();
        assert_eq!((r.values["a"], r.values["b"]), (7, 3));
    }

    /// An offset on one ECU feeds a message deadline through a guard; the
    /// smallest offsets starve the message, larger ones do not.
    #[test]
    fn failures_reached_through_guards_do_not_cut_siblings() {
        let mut p = SynthesisProblem::default();
        let d = p.add_var(DecisionVar::new("d", VarClass::Deadline, 1, 8));
        let phi = p.add_var(DecisionVar::new("phi", VarClass::Offset, 0, 7));
        let msg = SecureTask::new(1, TaskKind::Message, 2, 8).with_offset(2);
        let ctrl = SecureTask::new(2, TaskKind::Control, 2, 8).with_deadline(2);
        let bus = BoundTask { task: msg, phi: Lin::constant(2), d: Lin::var(d), s: None, windowed: true };
        let ecu_task = BoundTask { task: ctrl, phi: Lin::var(phi), d: Lin::constant(2), s: None, windowed: true };
        p.resources.push(ecu(alloc::vec![ecu_task]));
        p.resources.push(ResourceProblem { resource: Resource::Bus, kind: ResourceKind::NonPreemptive { blocking: 2 }, tasks: alloc::vec![bus] });
        p.guards.push(Guard::le("msg_before_ctrl", &Lin::var(d).offset(2), &Lin::var(phi)));
        let r = solve(&p, Limits::default(), ObjectiveMode::Lexicographic).unwrap();
        assert_eq!(r.status, SynthesisStatus::Feasible);
        assert_eq!((r.values["phi"], r.values["d"]), (6, 4));
    }

    #[test]
    fn tiny_limits_time_out() {
        let r = solve_feasibility(&three_tasks_free_s([2, 4, 2]), Limits { max_nodes: 1, max_oracle_calls: 1000 }).unwrap();
        assert_eq!(r.status, SynthesisStatus::Timeout);
        assert!(solve_feasibility(&three_tasks_free_s([2, 2, 1]), Limits { max_nodes: 0, max_oracle_calls: 1 }).is_err());
    }
}
