//! CPLEX-style LP text dump, for debugging models with external tools.

use std::io::{self, Write};

use super::{LinearModel, Relation};

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_.[]".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_terms<W: Write>(w: &mut W, terms: impl Iterator<Item = (String, f64)>) -> io::Result<()> {
    let mut first = true;
    for (name, a) in terms {
        if first {
            write!(w, " {} {}", a, name)?;
            first = false;
        } else if a < 0.0 {
            write!(w, " - {} {}", -a, name)?;
        } else {
            write!(w, " + {} {}", a, name)?;
        }
    }
    if first {
        write!(w, " 0")?;
    }
    Ok(())
}

pub(super) fn write_lp<W: Write>(model: &LinearModel, w: &mut W) -> io::Result<()> {
    let names: Vec<String> = model.vars().iter().map(|v| sanitize(&v.name)).collect();
    writeln!(w, "\\ objective constant {}", model.objective_constant())?;
    writeln!(w, "Minimize")?;
    write!(w, " obj:")?;
    write_terms(
        w,
        model
            .vars()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.cost != 0.0)
            .map(|(j, v)| (names[j].clone(), v.cost)),
    )?;
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for row in model.rows() {
        write!(w, " {}:", sanitize(&row.name))?;
        write_terms(w, row.coefs.iter().map(|&(v, a)| (names[v.0].clone(), a)))?;
        let op = match row.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        writeln!(w, " {} {}", op, row.rhs)?;
    }
    writeln!(w, "Bounds")?;
    for (v, name) in model.vars().iter().zip(&names) {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) => writeln!(w, " {} <= {} <= {}", v.lower, name, v.upper)?,
            (true, false) => writeln!(w, " {} >= {}", name, v.lower)?,
            (false, true) => writeln!(w, " -inf <= {} <= {}", name, v.upper)?,
            (false, false) => writeln!(w, " {} free", name)?,
        }
    }
    let ints: Vec<&String> = model
        .vars()
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.integer)
        .map(|(_, n)| n)
        .collect();
    if !ints.is_empty() {
        writeln!(w, "Generals")?;
        for n in ints {
            writeln!(w, " {}", n)?;
        }
    }
    writeln!(w, "End")
}
