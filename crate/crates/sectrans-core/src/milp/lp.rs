use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::instance::{MilpInstance, VarKind};

/// Shortest decimal that reads back to `x`; integral values print without a fraction.
pub(crate) fn number(x: f64) -> String {
    if x == libm::trunc(x) && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn linear(inst: &MilpInstance, terms: &[(usize, f64)]) -> String {
    let mut out = String::new();
    for (k, &(v, c)) in terms.iter().enumerate() {
        let name = &inst.variables[v].name;
        let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
        if k == 0 {
            if sign == "-" {
                out.push_str("- ");
            }
        } else {
            let _ = write!(out, " {sign} ");
        }
        if mag != 1.0 {
            let _ = write!(out, "{} ", number(mag));
        }
        out.push_str(name);
    }
    out
}

/// CPLEX LP text. Strict inequalities were already turned into non-strict
/// ones by the encoder. Binary variables carry their bounds implicitly;
/// sections without entries are left out.
pub fn render_lp(inst: &MilpInstance) -> String {
    let mut out = String::new();
    match &inst.objective {
        Some(obj) if !obj.terms.is_empty() => {
            out.push_str(if obj.minimize { "Minimize\n" } else { "Maximize\n" });
            let _ = writeln!(out, " obj: {}", linear(inst, &obj.terms));
        }
        _ => {
            out.push_str("Minimize\n");
            match inst.variables.first() {
                Some(v) => {
                    let _ = writeln!(out, " obj: 0 {}", v.name);
                }
                None => out.push_str(" obj:\n"),
            }
        }
    }
    out.push_str("Subject To\n");
    for c in &inst.constraints {
        let _ = writeln!(out, " {}: {} {} {}", c.name, linear(inst, &c.terms), c.sense.symbol(), number(c.rhs));
    }

    let bounded: Vec<_> = inst.variables.iter().filter(|v| v.kind != VarKind::Binary).collect();
    if !bounded.is_empty() {
        out.push_str("Bounds\n");
        for v in bounded {
            if v.lower == v.upper {
                let _ = writeln!(out, " {} = {}", v.name, number(v.lower));
            } else {
                let lo = if v.lower.is_finite() { number(v.lower) } else { "-inf".into() };
                let hi = if v.upper.is_finite() { number(v.upper) } else { "+inf".into() };
                let _ = writeln!(out, " {lo} <= {} <= {hi}", v.name);
            }
        }
    }
    for (kind, header) in [(VarKind::Integer, "General"), (VarKind::Binary, "Binary")] {
        let names: Vec<&str> = inst.variables.iter().filter(|v| v.kind == kind).map(|v| v.name.as_str()).collect();
        if !names.is_empty() {
            let _ = writeln!(out, "{header}");
            for n in names {
                let _ = writeln!(out, " {n}");
            }
        }
    }
    out.push_str("End\n");
    out
}
