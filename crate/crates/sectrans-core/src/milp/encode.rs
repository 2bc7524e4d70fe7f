//! Big-M MILP encoding of the demand condition with affine task parameters.
//!
//! For every pair of testing instants `(t1, t2)` (a job arrival and a job
//! deadline) the encoding counts, per task, the jobs inside `[t1, t2]` as
//! `#(deadline <= t2) − #(arrival < t1)` clipped at zero. Both counts come from
//! binary indicators on the sign of `instant − job time`. An enabling binary
//! switches the demand constraint off when `t2 <= t1`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use super::instance::{choose_big_m_epsilon, AuxDef, BigM, MilpInstance, Objective, Sense, Tolerances, VarKind};
use super::{BoundTask, DecisionVar, GuardSense, Lin, MilpError, ResourceKind, ResourceProblem, SynthesisProblem};
use crate::demand::overloaded;
use crate::model::{Resource, SecureTask};
use crate::time::Tick;

const FAR: i64 = i64::MAX / 4;

/// Size summary of an encoded instance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeStats {
    pub variables: usize,
    pub decisions: usize,
    pub binaries: usize,
    pub integers: usize,
    pub constraints: usize,
}

impl EncodeStats {
    pub fn of(inst: &MilpInstance) -> Self {
        EncodeStats {
            variables: inst.variables.len(),
            decisions: inst.decisions,
            binaries: inst.count(VarKind::Binary),
            integers: inst.count(VarKind::Integer),
            constraints: inst.constraints.len(),
        }
    }
}

/// Unpruned encoding: every indicator, count and enabling variable is kept.
pub fn encode(problem: &SynthesisProblem) -> Result<MilpInstance, MilpError> {
    Builder::run(problem, false, Tolerances::default())
}

/// Encoding with every indicator whose value follows from the variable
/// domains and period windows replaced by its constant.
pub fn prune(problem: &SynthesisProblem) -> Result<MilpInstance, MilpError> {
    Builder::run(problem, true, Tolerances::default())
}

/// Encoding for a solver with the given tolerances. Long horizons need a
/// large M, which in turn needs a tight integrality tolerance.
pub fn encode_with(problem: &SynthesisProblem, pruned: bool, tolerances: Tolerances) -> Result<MilpInstance, MilpError> {
    Builder::run(problem, pruned, tolerances)
}

/// Preemptive single-processor encoding.
pub fn encode_ecu(vars: &[DecisionVar], tasks: &[BoundTask]) -> Result<MilpInstance, MilpError> {
    encode(&single(vars, tasks, Resource::Ecu(0), ResourceKind::Preemptive))
}

/// Non-preemptive bus encoding; the supply of every interval shrinks by `c_max`.
pub fn encode_network(vars: &[DecisionVar], msgs: &[BoundTask], c_max: Tick) -> Result<MilpInstance, MilpError> {
    encode(&single(vars, msgs, Resource::Bus, ResourceKind::NonPreemptive { blocking: c_max }))
}

fn single(vars: &[DecisionVar], tasks: &[BoundTask], resource: Resource, kind: ResourceKind) -> SynthesisProblem {
    let resources = if tasks.is_empty() {
        Vec::new()
    } else {
        alloc::vec![ResourceProblem { resource, kind, tasks: tasks.to_vec() }]
    };
    SynthesisProblem { vars: vars.to_vec(), resources, guards: Vec::new() }
}

fn resource_tag(r: Resource) -> String {
    match r {
        Resource::Ecu(id) => format!("ecu{id}"),
        Resource::Bus => "bus".into(),
    }
}

/// LP-safe identifier: letters, digits and underscores, not starting with a
/// digit or an exponent-like `e`.
fn lp_name(raw: &str) -> String {
    let mut out: String = raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if out.is_empty() || out.starts_with(|c: char| c.is_ascii_digit() || c == 'e' || c == 'E') {
        out.insert_str(0, "x_");
    }
    out
}

/// A time point `expr` that is also known to lie in `win`.
#[derive(Clone, Debug)]
struct Point {
    expr: Lin,
    win: (i64, i64),
}

struct Job {
    arr: Point,
    dl: Point,
}

struct TaskJobs {
    c_reg: i64,
    dc: i64,
    regular: Vec<Job>,
    /// One job list per position in the authentication block.
    ext: Vec<Vec<Job>>,
}

#[derive(Clone, Copy)]
enum Bit {
    Const(bool),
    Var(usize),
}

struct Builder<'a> {
    problem: &'a SynthesisProblem,
    domains: Vec<(i64, i64)>,
    pruned: bool,
    inst: MilpInstance,
    infeasible: Option<usize>,
}

impl<'a> Builder<'a> {
    fn run(problem: &'a SynthesisProblem, pruned: bool, tolerances: Tolerances) -> Result<MilpInstance, MilpError> {
        problem.check_domains()?;
        let domains = problem.domains();
        let mut b = Builder { problem, domains, pruned, inst: MilpInstance::new(BigM { m: 1.0, epsilon: 0.5 }), infeasible: None };

        let mut plans = Vec::new();
        let mut scale: i64 = 1;
        for r in &problem.resources {
            let plan = b.plan(r)?;
            scale = scale.max(plan.scale);
            plans.push(plan);
        }
        for g in &problem.guards {
            let (lo, hi) = g.expr.bounds(&b.domains);
            scale = scale.max(lo.abs()).max(hi.abs());
        }
        b.inst.meta = choose_big_m_epsilon(scale as f64, tolerances)?;

        b.decisions();
        b.guards();
        for (r, plan) in problem.resources.iter().zip(plans) {
            b.resource(r, plan);
        }
        Ok(b.inst)
    }

    fn decisions(&mut self) {
        let mut seen = BTreeMap::new();
        for v in &self.problem.vars {
            let mut name = lp_name(&v.name);
            let n = seen.entry(name.clone()).or_insert(0usize);
            *n += 1;
            if *n > 1 {
                name = format!("{name}_{n}");
            }
            self.inst.add_var(name, VarKind::Integer, v.lo as f64, v.hi as f64);
        }
        self.inst.decisions = self.problem.vars.len();
        for (i, v) in self.problem.vars.iter().enumerate() {
            if v.step > 1 {
                let k = self.inst.add_var(format!("{}_k", self.inst.variables[i].name), VarKind::Integer, 0.0, ((v.hi - v.lo) / v.step) as f64);
                self.inst.add_constraint(format!("step_{i}"), alloc::vec![(i, 1.0), (k, -(v.step as f64))], Sense::Eq, v.lo as f64);
                self.inst.aux.push(AuxDef::Step { var: k, of: i, lo: v.lo, step: v.step });
            }
        }
        let terms: Vec<(usize, f64)> =
            self.problem.vars.iter().enumerate().filter(|(_, v)| v.weight != 0.0).map(|(i, v)| (i, v.weight)).collect();
        if !terms.is_empty() {
            self.inst.objective = Some(Objective { minimize: true, terms });
        }
    }

    /// `expr <= 0` (or `== 0`); constant ones are checked here instead of emitted.
    fn linear(&mut self, name: String, expr: &Lin, sense: GuardSense) {
        if expr.is_constant() {
            let ok = match sense {
                GuardSense::NonPositive => expr.constant <= 0,
                GuardSense::Zero => expr.constant == 0,
            };
            if !ok {
                self.mark_infeasible(&name);
            }
            return;
        }
        let terms = expr.terms.iter().map(|&(v, c)| (v, c as f64)).collect();
        let sense = match sense {
            GuardSense::NonPositive => Sense::Le,
            GuardSense::Zero => Sense::Eq,
        };
        self.inst.add_constraint(name, terms, sense, -(expr.constant as f64));
    }

    fn mark_infeasible(&mut self, reason: &str) {
        let v = match self.infeasible {
            Some(v) => v,
            None => {
                let v = self.inst.add_var("infeasible".into(), VarKind::Integer, 0.0, 0.0);
                self.infeasible = Some(v);
                v
            }
        };
        self.inst.add_constraint(format!("infeasible_{}", lp_name(reason)), alloc::vec![(v, 1.0)], Sense::Ge, 1.0);
    }

    fn guards(&mut self) {
        let problem = self.problem;
        for (i, g) in problem.guards.iter().enumerate() {
            self.linear(format!("guard{i}_{}", lp_name(&g.name)), &g.expr, g.sense);
        }
    }

    fn plan(&self, r: &ResourceProblem) -> Result<Plan, MilpError> {
        let dom = &self.domains;
        let mut start = 0;
        let mut max_d = 0;
        let mut periods = Vec::new();
        for bt in &r.tasks {
            let t = &bt.task;
            let (_, phi_hi) = bt.phi.bounds(dom);
            let (_, d_hi) = bt.d.bounds(dom);
            let late = match overhead(bt) {
                Some((l, f, s)) => 0.max(s.bounds(dom).1 - (l - f)),
                None => 0,
            };
            start = start.max(phi_hi + late * t.p);
            max_d = max_d.max(d_hi);
            periods.push(if overhead(bt).is_some() { t.pattern_period() } else { t.p });
        }
        let lcm = periods.iter().try_fold(1i64, |acc, &p| (acc / acc.gcd(&p)).checked_mul(p)).ok_or(crate::model::ModelError::Overflow)?;
        let horizon = start + max_d + 2 * lcm;

        let mut tasks = Vec::new();
        let mut extent = 0i64;
        for bt in &r.tasks {
            let t = &bt.task;
            let (phi_lo, phi_hi) = bt.phi.bounds(dom);
            let end = bt.phi.plus(&bt.d);
            let (end_lo, end_hi) = end.bounds(dom);
            extent = extent.max(phi_lo.abs()).max(phi_hi.abs()).max(end_lo.abs()).max(end_hi.abs());
            let window = |first: i64, last: i64| -> ((i64, i64), (i64, i64)) {
                if bt.windowed {
                    ((first * t.p, last * t.p + t.p - 1), (first * t.p + 1, last * t.p + t.p))
                } else {
                    ((-FAR, FAR), (-FAR, FAR))
                }
            };
            let mut regular = Vec::new();
            let mut h = 0;
            while phi_lo + h * t.p <= horizon {
                let (aw, dw) = window(h, h);
                regular.push(Job {
                    arr: Point { expr: bt.phi.offset(h * t.p), win: aw },
                    dl: Point { expr: end.offset(h * t.p), win: dw },
                });
                h += 1;
            }
            let mut ext = Vec::new();
            let mut dc = 0;
            if let Some((l, f, s)) = overhead(bt) {
                dc = t.delta_c();
                let (s_lo, s_hi) = s.bounds(dom);
                let phi_s = bt.phi.plus(&s.scale(t.p));
                for m in 0..f {
                    let mut jobs = Vec::new();
                    let mut j = 0;
                    while phi_lo + (s_lo + m + j * l) * t.p <= horizon {
                        let shift = (m + j * l) * t.p;
                        let (aw, dw) = window(s_lo + m + j * l, s_hi + m + j * l);
                        jobs.push(Job {
                            arr: Point { expr: phi_s.offset(shift), win: aw },
                            dl: Point { expr: phi_s.plus(&bt.d).offset(shift), win: dw },
                        });
                        j += 1;
                    }
                    ext.push(jobs);
                }
            }
            tasks.push(TaskJobs { c_reg: t.c_reg, dc, regular, ext });
        }
        let blocking = r.kind.blocking();
        let scale = (horizon + extent).saturating_mul(2) + blocking;
        Ok(Plan { tasks, scale })
    }

    fn range(&self, x: &Point, y: &Point) -> (i64, i64) {
        let (lo, hi) = x.expr.minus(&y.expr).bounds(&self.domains);
        let wlo = x.win.0.saturating_sub(y.win.1);
        let whi = x.win.1.saturating_sub(y.win.0);
        (lo.max(wlo), hi.min(whi))
    }

    /// Binary that is 1 iff `x − y >= 0` (`> 0` when strict).
    fn indicator(&mut self, name: String, x: &Point, y: &Point, strict: bool) -> Bit {
        let (lo, hi) = self.range(x, y);
        if self.pruned {
            let threshold = i64::from(strict);
            if lo >= threshold {
                return Bit::Const(true);
            }
            if hi < threshold {
                return Bit::Const(false);
            }
        }
        let expr = x.expr.minus(&y.expr);
        let BigM { m, epsilon } = self.inst.meta;
        let v = self.inst.add_var(name.clone(), VarKind::Binary, 0.0, 1.0);
        let mut neg: Vec<(usize, f64)> = expr.terms.iter().map(|&(i, c)| (i, -(c as f64))).collect();
        neg.push((v, m));
        let mut pos: Vec<(usize, f64)> = expr.terms.iter().map(|&(i, c)| (i, c as f64)).collect();
        pos.push((v, -m));
        let c = expr.constant as f64;
        if strict {
            self.inst.add_constraint(format!("{name}_on"), neg, Sense::Le, m - epsilon + c);
            self.inst.add_constraint(format!("{name}_off"), pos, Sense::Le, -c);
        } else {
            self.inst.add_constraint(format!("{name}_on"), neg, Sense::Le, m + c);
            self.inst.add_constraint(format!("{name}_off"), pos, Sense::Le, -epsilon - c);
        }
        self.inst.aux.push(AuxDef::Indicator { var: v, expr, strict });
        Bit::Var(v)
    }

    fn resource(&mut self, r: &ResourceProblem, plan: Plan) {
        let tag = resource_tag(r.resource);
        for bt in &r.tasks {
            let id = bt.task.id;
            self.linear(format!("{tag}_t{id}_dmin"), &Lin::constant(1).minus(&bt.d), GuardSense::NonPositive);
            self.linear(format!("{tag}_t{id}_phimin"), &bt.phi.scale(-1), GuardSense::NonPositive);
            if bt.windowed {
                let cap = bt.phi.plus(&bt.d).offset(-bt.task.p);
                self.linear(format!("{tag}_t{id}_window"), &cap, GuardSense::NonPositive);
            }
        }
        let concrete: Vec<SecureTask> = r.tasks.iter().map(with_pattern).collect();
        if overloaded(&concrete) {
            self.mark_infeasible(&format!("{tag}_utilization"));
        }

        let mut starts: Vec<Point> = Vec::new();
        let mut ends: Vec<Point> = Vec::new();
        for tj in &plan.tasks {
            for job in &tj.regular {
                push_point(&mut starts, &job.arr);
                push_point(&mut ends, &job.dl);
            }
        }

        // deadline-side bits per (t2, task, job) and arrival-side bits per (t1, task, job)
        let mut dl_bits: BTreeMap<(usize, usize, usize, usize), Bit> = BTreeMap::new();
        let mut arr_bits: BTreeMap<(usize, usize, usize, usize), Bit> = BTreeMap::new();
        let blocking = r.kind.blocking();
        for (k1, t1) in starts.iter().enumerate() {
            for (k2, t2) in ends.iter().enumerate() {
                let on = self.indicator(format!("on_{tag}_{k1}_{k2}"), t2, t1, true);
                if matches!(on, Bit::Const(false)) {
                    continue;
                }
                let mut lhs: Vec<(usize, f64)> = Vec::new();
                let mut constant: i64 = 0;
                // regular-job counts decide whether the interval holds any job
                let mut held_const = false;
                let mut held: Vec<(usize, usize)> = Vec::new();
                for (i, tj) in plan.tasks.iter().enumerate() {
                    let groups = core::iter::once((0usize, &tj.regular, tj.c_reg, "n"))
                        .chain(tj.ext.iter().enumerate().map(|(m, jobs)| (m + 1, jobs, tj.dc, "x")));
                    for (g, jobs, cost, prefix) in groups {
                        if cost == 0 || jobs.is_empty() {
                            continue;
                        }
                        let mut plus = Vec::new();
                        let mut minus = Vec::new();
                        let mut fixed = 0i64;
                        for (h, job) in jobs.iter().enumerate() {
                            let key = (k2, i, g, h);
                            let bit = match dl_bits.get(&key) {
                                Some(&b) => b,
                                None => {
                                    let b = self.indicator(format!("b_{tag}_{k2}_{i}_{g}_{h}"), t2, &job.dl, false);
                                    dl_bits.insert(key, b);
                                    b
                                }
                            };
                            match bit {
                                Bit::Const(true) => fixed += 1,
                                Bit::Const(false) => {}
                                Bit::Var(v) => plus.push(v),
                            }
                            let key = (k1, i, g, h);
                            let bit = match arr_bits.get(&key) {
                                Some(&b) => b,
                                None => {
                                    let b = self.indicator(format!("g_{tag}_{k1}_{i}_{g}_{h}"), t1, &job.arr, true);
                                    arr_bits.insert(key, b);
                                    b
                                }
                            };
                            match bit {
                                Bit::Const(true) => fixed -= 1,
                                Bit::Const(false) => {}
                                Bit::Var(v) => minus.push(v),
                            }
                        }
                        if self.pruned && plus.is_empty() && minus.is_empty() {
                            constant += cost * fixed.max(0);
                            held_const |= g == 0 && fixed > 0;
                            continue;
                        }
                        if self.pruned && plus.is_empty() && fixed <= 0 {
                            // the count can only be zero
                            continue;
                        }
                        let n = self.inst.add_var(
                            format!("{prefix}_{tag}_{k1}_{k2}_{i}_{g}"),
                            VarKind::Integer,
                            0.0,
                            jobs.len() as f64,
                        );
                        let mut terms = alloc::vec![(n, 1.0)];
                        terms.extend(plus.iter().map(|&v| (v, -1.0)));
                        terms.extend(minus.iter().map(|&v| (v, 1.0)));
                        self.inst.add_constraint(format!("cnt_{tag}_{k1}_{k2}_{i}_{g}"), terms, Sense::Ge, fixed as f64);
                        self.inst.aux.push(AuxDef::Count { var: n, plus, minus, constant: fixed });
                        lhs.push((n, cost as f64));
                        if g == 0 {
                            held.push((n, jobs.len()));
                        }
                    }
                }
                // an interval without jobs cannot end in a miss, so blocking only counts when one is inside
                let mut blocking = blocking;
                if blocking > 0 && !held_const {
                    if !held.is_empty() {
                        let z = self.inst.add_var(format!("held_{tag}_{k1}_{k2}"), VarKind::Binary, 0.0, 1.0);
                        let cap: usize = held.iter().map(|h| h.1).sum();
                        let mut terms: Vec<(usize, f64)> = held.iter().map(|h| (h.0, 1.0)).collect();
                        terms.push((z, -(cap as f64)));
                        self.inst.add_constraint(format!("held_{tag}_{k1}_{k2}"), terms, Sense::Le, 0.0);
                        self.inst.aux.push(AuxDef::Positive { var: z, of: held.iter().map(|h| h.0).collect() });
                        lhs.push((z, blocking as f64));
                    }
                    blocking = 0;
                }
                // Σ cost·count + t1 − t2 + blocking <= M·(1 − on)
                let gap = t1.expr.minus(&t2.expr);
                lhs.extend(gap.terms.iter().map(|&(v, c)| (v, c as f64)));
                let fixed_part = constant + gap.constant + blocking;
                let name = format!("dem_{tag}_{k1}_{k2}");
                match on {
                    Bit::Var(e) => {
                        let m = self.inst.meta.m;
                        lhs.push((e, m));
                        self.inst.add_constraint(name, lhs, Sense::Le, m - fixed_part as f64);
                    }
                    Bit::Const(_) => {
                        if lhs.is_empty() {
                            if fixed_part > 0 {
                                self.mark_infeasible(&name);
                            }
                        } else {
                            self.inst.add_constraint(name, lhs, Sense::Le, -(fixed_part as f64));
                        }
                    }
                }
            }
        }
    }
}

struct Plan {
    tasks: Vec<TaskJobs>,
    scale: i64,
}

/// `(l, f, s)` for tasks whose authenticated jobs cost more than regular ones.
fn overhead(bt: &BoundTask) -> Option<(i64, i64, &Lin)> {
    match (&bt.s, bt.task.l) {
        (Some(s), Some(l)) if bt.task.delta_c() != 0 => Some((i64::from(l), i64::from(bt.task.f), s)),
        _ => None,
    }
}

/// The task as its long-run utilization sees it.
fn with_pattern(bt: &BoundTask) -> SecureTask {
    let mut t = bt.task.clone();
    if overhead(bt).is_none() {
        t.c_ext = t.c_reg;
        t.l = None;
    }
    t
}

fn push_point(points: &mut Vec<Point>, p: &Point) {
    match points.iter_mut().find(|q| q.expr == p.expr) {
        Some(q) => q.win = (q.win.0.max(p.win.0), q.win.1.min(p.win.1)),
        None => points.push(p.clone()),
    }
}
