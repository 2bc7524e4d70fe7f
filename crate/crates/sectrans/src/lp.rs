//! Reader for the CPLEX LP subset written by `render_lp`.
//!
//! It exists so exported files can be checked without an external solver:
//! parsing an export must give back the same variables, constraints and
//! coefficients, by name.

use std::collections::BTreeMap;

use sectrans_core::milp::{MilpInstance, Sense, VarKind};

use crate::schema::FormatError;

#[derive(Clone, Debug, PartialEq)]
pub struct LpConstraint {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpVariable {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpModel {
    pub minimize: bool,
    pub objective: Vec<(String, f64)>,
    pub constraints: Vec<LpConstraint>,
    pub variables: BTreeMap<String, LpVariable>,
}

impl LpModel {
    pub fn variable(&self, name: &str) -> Option<&LpVariable> {
        self.variables.get(name)
    }

    pub fn count(&self, kind: VarKind) -> usize {
        self.variables.values().filter(|v| v.kind == kind).count()
    }

    /// The same view of an in-memory instance, for comparisons.
    pub fn of_instance(inst: &MilpInstance) -> Self {
        let named = |terms: &[(usize, f64)]| -> Vec<(String, f64)> {
            terms.iter().map(|&(v, c)| (inst.variables[v].name.clone(), c)).collect()
        };
        let (minimize, objective) = match &inst.objective {
            Some(o) if !o.terms.is_empty() => (o.minimize, named(&o.terms)),
            _ => (true, Vec::new()),
        };
        LpModel {
            minimize,
            objective,
            constraints: inst
                .constraints
                .iter()
                .map(|c| LpConstraint { name: c.name.clone(), terms: named(&c.terms), sense: c.sense, rhs: c.rhs })
                .collect(),
            variables: inst
                .variables
                .iter()
                .map(|v| (v.name.clone(), LpVariable { kind: v.kind, lower: v.lower, upper: v.upper }))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Objective,
    Constraints,
    Bounds,
    General,
    Binary,
    End,
}

fn err(line: usize, msg: impl std::fmt::Display) -> FormatError {
    FormatError::Lp(format!("line {line}: {msg}"))
}

fn number(tok: &str, line: usize) -> Result<f64, FormatError> {
    match tok {
        "+inf" | "inf" | "+infinity" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| err(line, format!("expected a number, found {tok:?}"))),
    }
}

/// `[-] [c] x (+|-) [c] y ...`
fn linear(tokens: &[&str], line: usize) -> Result<Vec<(String, f64)>, FormatError> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut coeff: Option<f64> = None;
    for &tok in tokens {
        match tok {
            "+" | "-" if coeff.is_none() => {
                if tok == "-" {
                    sign = -sign;
                }
            }
            _ if coeff.is_none() && tok.parse::<f64>().is_ok() => coeff = Some(number(tok, line)?),
            _ => {
                out.push((tok.to_string(), sign * coeff.unwrap_or(1.0)));
                sign = 1.0;
                coeff = None;
            }
        }
    }
    if coeff.is_some() || sign < 0.0 {
        return Err(err(line, "dangling coefficient"));
    }
    Ok(out)
}

fn mention<'a>(model: &'a mut LpModel, name: &str) -> &'a mut LpVariable {
    model
        .variables
        .entry(name.to_string())
        .or_insert(LpVariable { kind: VarKind::Continuous, lower: 0.0, upper: f64::INFINITY })
}

fn sense(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" => Some(Sense::Le),
        ">=" | "=>" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

pub fn parse_lp(text: &str) -> Result<LpModel, FormatError> {
    let mut model = LpModel { minimize: true, ..LpModel::default() };
    let mut section: Option<Section> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('\\').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let header = match body.to_ascii_lowercase().as_str() {
            "minimize" | "minimise" | "min" => Some((Section::Objective, Some(true))),
            "maximize" | "maximise" | "max" => Some((Section::Objective, Some(false))),
            "subject to" | "st" | "s.t." => Some((Section::Constraints, None)),
            "bounds" => Some((Section::Bounds, None)),
            "general" | "generals" | "gen" => Some((Section::General, None)),
            "binary" | "binaries" | "bin" => Some((Section::Binary, None)),
            "end" => Some((Section::End, None)),
            _ => None,
        };
        if let Some((s, minimize)) = header {
            if let Some(m) = minimize {
                model.minimize = m;
            }
            section = Some(s);
            continue;
        }
        match section {
            None => return Err(err(line, "content before the objective section")),
            Some(Section::End) => return Err(err(line, "content after End")),
            Some(Section::Objective) => {
                let rest = body.split_once(':').map_or(body, |(_, r)| r);
                let tokens: Vec<&str> = rest.split_whitespace().collect();
                for (name, c) in linear(&tokens, line)? {
                    mention(&mut model, &name);
                    if c != 0.0 {
                        model.objective.push((name, c));
                    }
                }
            }
            Some(Section::Constraints) => {
                let (name, rest) = body.split_once(':').ok_or_else(|| err(line, "constraint without a name"))?;
                let tokens: Vec<&str> = rest.split_whitespace().collect();
                let at = tokens.iter().position(|t| sense(t).is_some()).ok_or_else(|| err(line, "no relation"))?;
                if at + 2 != tokens.len() {
                    return Err(err(line, "expected a single right-hand side"));
                }
                let terms = linear(&tokens[..at], line)?;
                for (v, _) in &terms {
                    mention(&mut model, v);
                }
                model.constraints.push(LpConstraint {
                    name: name.trim().to_string(),
                    terms,
                    sense: sense(tokens[at]).unwrap(),
                    rhs: number(tokens[at + 1], line)?,
                });
            }
            Some(Section::Bounds) => {
                let tokens: Vec<&str> = body.split_whitespace().collect();
                match tokens.as_slice() {
                    [lo, "<=", name, "<=", hi] => {
                        let (lo, hi) = (number(lo, line)?, number(hi, line)?);
                        let v = mention(&mut model, name);
                        v.lower = lo;
                        v.upper = hi;
                    }
                    [name, "=", v] => {
                        let x = number(v, line)?;
                        let v = mention(&mut model, name);
                        v.lower = x;
                        v.upper = x;
                    }
                    [name, "free"] => {
                        mention(&mut model, name).lower = f64::NEG_INFINITY;
                    }
                    _ => return Err(err(line, format!("unsupported bound {body:?}"))),
                }
            }
            Some(s @ (Section::General | Section::Binary)) => {
                for name in body.split_whitespace() {
                    let v = mention(&mut model, name);
                    if s == Section::Binary {
                        v.kind = VarKind::Binary;
                        v.lower = 0.0;
                        v.upper = 1.0;
                    } else {
                        v.kind = VarKind::Integer;
                    }
                }
            }
        }
    }
    if section != Some(Section::End) {
        return Err(FormatError::Lp("missing End".into()));
    }
    Ok(model)
}
