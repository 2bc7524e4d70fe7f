use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Lin, MilpError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * point[v]).sum()
    }

    pub fn holds(&self, point: &[f64], tol: f64) -> bool {
        let lhs = self.lhs(point);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub minimize: bool,
    pub terms: Vec<(usize, f64)>,
}

/// Big-M constant and the margin that replaces strict inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigM {
    pub m: f64,
    pub epsilon: f64,
}

/// Integrality and constraint feasibility tolerances of the target solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub integrality: f64,
    pub feasibility: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { integrality: 1e-5, feasibility: 1e-6 }
    }
}

/// Smallest power of ten at least ten times `scale`, and an epsilon in the
/// middle of the window `(M·δ_int + δ_constr, 1 − M·δ_int − δ_constr)`.
/// Within that window a solver cannot round a fractional indicator into a
/// wrong strict inequality.
pub fn choose_big_m_epsilon(scale: f64, tol: Tolerances) -> Result<BigM, MilpError> {
    let digits = libm::ceil(libm::log10(scale.abs() + 1.0)) + 1.0;
    let m = libm::pow(10.0, digits.max(1.0));
    let lo = m * tol.integrality + tol.feasibility;
    let hi = 1.0 - m * tol.integrality - tol.feasibility;
    if tol.integrality <= 0.0 || tol.feasibility <= 0.0 || lo >= hi {
        return Err(MilpError::NoEpsilon { m });
    }
    Ok(BigM { m, epsilon: (lo + hi) / 2.0 })
}

/// How an auxiliary variable is determined by the decision variables, used to
/// complete a decision point into a full MILP point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AuxDef {
    /// `var = 1` iff `expr >= 0` (`expr > 0` when strict).
    Indicator { var: usize, expr: Lin, strict: bool },
    /// `var = max(0, constant + Σ plus − Σ minus)`.
    Count { var: usize, plus: Vec<usize>, minus: Vec<usize>, constant: i64 },
    /// `var = (of − lo) / step` for stepped decision domains.
    Step { var: usize, of: usize, lo: i64, step: i64 },
    /// `var = 1` iff any of `of` is positive.
    Positive { var: usize, of: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilpInstance {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<Objective>,
    pub meta: BigM,
    /// The first `decisions` variables are the synthesis parameters.
    pub decisions: usize,
    #[serde(default)]
    pub aux: Vec<AuxDef>,
}

impl MilpInstance {
    pub fn new(meta: BigM) -> Self {
        MilpInstance { variables: Vec::new(), constraints: Vec::new(), objective: None, meta, decisions: 0, aux: Vec::new() }
    }

    pub fn add_var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable { name, kind, lower, upper });
        self.variables.len() - 1
    }

    pub fn add_constraint(&mut self, name: String, mut terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        terms.retain(|t| t.1 != 0.0);
        self.constraints.push(Constraint { name, terms, sense, rhs });
    }

    pub fn count(&self, kind: VarKind) -> usize {
        self.variables.iter().filter(|v| v.kind == kind).count()
    }

    /// Extends decision values to every variable using the auxiliary definitions.
    pub fn complete(&self, decisions: &[i64]) -> Vec<f64> {
        let mut point = alloc::vec![0.0; self.variables.len()];
        for (i, &x) in decisions.iter().enumerate().take(self.decisions) {
            point[i] = x as f64;
        }
        let known: Vec<Option<i64>> = decisions.iter().map(|&x| Some(x)).collect();
        for def in &self.aux {
            match def {
                AuxDef::Indicator { var, expr, strict } => {
                    let v = expr.eval(&known).unwrap_or(0);
                    point[*var] = f64::from(u8::from(if *strict { v > 0 } else { v >= 0 }));
                }
                AuxDef::Count { var, plus, minus, constant } => {
                    let sum: f64 = plus.iter().map(|&i| point[i]).sum::<f64>() - minus.iter().map(|&i| point[i]).sum::<f64>();
                    point[*var] = (sum + *constant as f64).max(0.0);
                }
                AuxDef::Step { var, of, lo, step } => {
                    point[*var] = ((decisions[*of] - lo) / step) as f64;
                }
                AuxDef::Positive { var, of } => {
                    point[*var] = f64::from(u8::from(of.iter().any(|&i| point[i] > 0.0)));
                }
            }
        }
        point
    }

    /// Whether a full point satisfies bounds, integrality and every constraint.
    pub fn is_feasible_point(&self, point: &[f64]) -> bool {
        const TOL: f64 = 1e-9;
        let bounded = self.variables.iter().zip(point).all(|(v, &x)| {
            x >= v.lower - TOL
                && x <= v.upper + TOL
                && (v.kind == VarKind::Continuous || (x - libm::round(x)).abs() <= TOL)
        });
        bounded && self.constraints.iter().all(|c| c.holds(point, TOL))
    }

    /// Whether the decision values extend to a feasible point.
    pub fn check_point(&self, decisions: &[i64]) -> bool {
        self.is_feasible_point(&self.complete(decisions))
    }
}
