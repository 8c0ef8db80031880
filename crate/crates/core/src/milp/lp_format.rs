use std::fmt::Write as _;
use std::io::{self, Write};

use super::{MilpModel, VarId, VarKind};

const TERMS_PER_LINE: usize = 6;

fn push_terms(out: &mut String, model: &MilpModel, terms: impl Iterator<Item = (VarId, f64)>) {
    let mut written = 0;
    for (v, a) in terms {
        if a == 0.0 {
            continue;
        }
        if written > 0 && written % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {} {} {}", sign, a.abs(), model.vars()[v.0].name);
        written += 1;
    }
    if written == 0 {
        out.push_str(" 0");
    }
}

/// Writes `model` in CPLEX LP format. Debugging aid only; there is no
/// reader.
pub fn write_lp<W: Write>(model: &MilpModel, mut w: W) -> io::Result<()> {
    let mut out = String::new();
    if let Some(name) = &model.meta.instance {
        let _ = writeln!(out, "\\ instance {name}");
    }
    if let Some(kind) = model.meta.kind {
        let _ = writeln!(out, "\\ model {kind}");
    }
    if let Some(lambda) = model.meta.lambda {
        let _ = writeln!(out, "\\ lambda {lambda}");
    }
    out.push_str("Minimize\n obj:");
    push_terms(
        &mut out,
        model,
        model.objective().iter().enumerate().map(|(i, &c)| (VarId(i), c)),
    );
    out.push_str("\nSubject To\n");
    for c in model.constraints() {
        let _ = write!(out, " {}:", c.name);
        push_terms(&mut out, model, c.terms.iter().copied());
        let _ = writeln!(out, " {} {}", c.sense.symbol(), c.rhs);
    }
    out.push_str("Bounds\n");
    for v in model.vars() {
        let (lb, ub) = v.kind.bounds();
        match (lb.is_finite(), ub.is_finite()) {
            (true, true) => {
                let _ = writeln!(out, " {} <= {} <= {}", lb, v.name, ub);
            }
            (true, false) => {
                let _ = writeln!(out, " {} >= {}", v.name, lb);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {} <= {}", v.name, ub);
            }
            (false, false) => {
                let _ = writeln!(out, " {} free", v.name);
            }
        }
    }
    let generals: Vec<&str> = model
        .vars()
        .iter()
        .filter(|v| matches!(v.kind, VarKind::Integer { .. }))
        .map(|v| v.name.as_str())
        .collect();
    if !generals.is_empty() {
        out.push_str("General\n");
        for chunk in generals.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    let binaries: Vec<&str> = model
        .vars()
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n");
        for chunk in binaries.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    w.write_all(out.as_bytes())
}
