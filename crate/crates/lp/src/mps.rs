//! Fixed-format MPS export for cross-checking a model with external solvers.
//!
//! Columns are named `C0000000…` and rows `R0000000…` by index so every name
//! fits the eight-character fields; the model's own names are listed in
//! comment lines at the top of the file.

use std::io::{self, Write};

use crate::model::{LpModel, Relation};
use crate::Scalar;

fn number<F: Scalar>(x: F) -> String {
    let v = x.as_f64();
    let plain = format!("{v}");
    if plain.len() <= 12 {
        plain
    } else {
        format!("{v:.5E}")
    }
}

fn col_name(j: usize) -> String {
    format!("C{j:07}")
}

fn row_name(r: usize) -> String {
    format!("R{r:07}")
}

pub fn write_fixed_mps<F: Scalar, W: Write>(model: &LpModel<F>, name: &str, out: &mut W) -> io::Result<()> {
    for v in model.vars() {
        writeln!(out, "* {} {}", col_name(v.index()), model.var_name(v))?;
    }
    if model.objective_offset() != F::zero() {
        writeln!(out, "* objective offset {}", number(model.objective_offset()))?;
    }
    let short: String = name.chars().take(8).collect();
    writeln!(out, "NAME          {short}")?;
    writeln!(out, "ROWS")?;
    writeln!(out, " N  COST")?;
    for con in model.cons() {
        let kind = match model.relation(con) {
            Relation::Le => 'L',
            Relation::Eq => 'E',
            Relation::Ge => 'G',
        };
        writeln!(out, " {kind}  {}", row_name(con.index()))?;
    }

    // Transpose rows into columns.
    let n = model.num_vars();
    let mut columns: Vec<Vec<(usize, F)>> = vec![Vec::new(); n];
    for con in model.cons() {
        let (idx, val) = model.row(con);
        for (&j, &a) in idx.iter().zip(val) {
            columns[j].push((con.index(), a));
        }
    }
    writeln!(out, "COLUMNS")?;
    for v in model.vars() {
        let j = v.index();
        let mut entries: Vec<(String, F)> = Vec::new();
        if model.cost(v) != F::zero() {
            entries.push(("COST".into(), model.cost(v)));
        }
        entries.extend(columns[j].iter().map(|&(r, a)| (row_name(r), a)));
        if entries.is_empty() {
            // Keep the column declared even without coefficients.
            entries.push(("COST".into(), F::zero()));
        }
        for pair in entries.chunks(2) {
            write!(out, "    {:<8}  {:<8}  {:>12}", col_name(j), pair[0].0, number(pair[0].1))?;
            if let Some((r, a)) = pair.get(1) {
                write!(out, "   {:<8}  {:>12}", r, number(*a))?;
            }
            writeln!(out)?;
        }
    }
    writeln!(out, "RHS")?;
    for con in model.cons() {
        let rhs = model.rhs(con);
        if rhs != F::zero() {
            writeln!(out, "    RHS       {:<8}  {:>12}", row_name(con.index()), number(rhs))?;
        }
    }
    writeln!(out, "BOUNDS")?;
    for v in model.vars() {
        let (lo, hi) = model.bounds(v);
        let c = col_name(v.index());
        if lo == hi {
            writeln!(out, " FX BND       {c:<8}  {:>12}", number(lo))?;
            continue;
        }
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => writeln!(out, " FR BND       {c:<8}")?,
            (false, true) => {
                writeln!(out, " MI BND       {c:<8}")?;
                writeln!(out, " UP BND       {c:<8}  {:>12}", number(hi))?;
            }
            (true, _) => {
                if lo != F::zero() {
                    writeln!(out, " LO BND       {c:<8}  {:>12}", number(lo))?;
                }
                if hi.is_finite() {
                    writeln!(out, " UP BND       {c:<8}  {:>12}", number(hi))?;
                }
            }
        }
    }
    writeln!(out, "ENDATA")
}
