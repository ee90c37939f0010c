use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::fmt_g9;

/// A sparse constraint `lo ≤ Σ a_j x_j ≤ hi`. Infinite sides are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub coefs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        (self.lo - a).max(a - self.hi).max(0.0)
    }
}

// keeps lines well below the length limit of LP-format readers
const TERMS_PER_LINE: usize = 6;

/// `min cᵀx + offset` subject to rows and variable bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub names: Vec<String>,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
    pub offset: f64,
}

impl LinearProgram {
    pub fn add_var(&mut self, name: String, cost: f64, lower: f64, upper: f64) -> usize {
        self.names.push(name);
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.len() - 1
    }

    pub fn add_row(&mut self, name: String, coefs: Vec<(usize, f64)>, lo: f64, hi: f64) {
        self.rows.push(Row { name, coefs, lo, hi });
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.offset + self.cost.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest violation over rows and bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = (0..x.len())
            .map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Writes the program in CPLEX LP text format. The constant objective offset is
    /// recorded in a comment because the format has no portable slot for it.
    pub fn write_lp_format<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "\\ objective offset: {}", fmt_g9(self.offset))?;
        writeln!(out, "Minimize")?;
        write!(out, " obj:")?;
        let mut any = false;
        let mut terms = 0;
        for (j, &c) in self.cost.iter().enumerate() {
            if c != 0.0 {
                if terms > 0 && terms % TERMS_PER_LINE == 0 {
                    write!(out, "\n ")?;
                }
                write_term(&mut out, c, &self.names[j], !any)?;
                any = true;
                terms += 1;
            }
        }
        if !any {
            write!(out, " 0 {}", self.names.first().map(String::as_str).unwrap_or("x"))?;
        }
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for row in &self.rows {
            let mut body = Vec::new();
            for (i, &(j, a)) in row.coefs.iter().enumerate() {
                if i > 0 && i % TERMS_PER_LINE == 0 {
                    write!(body, "\n ")?;
                }
                write_term(&mut body, a, &self.names[j], i == 0)?;
            }
            let body = String::from_utf8(body).map_err(|e| Error::Solver(e.to_string()))?;
            if row.lo == row.hi {
                writeln!(out, " {}:{} = {}", row.name, body, fmt_g9(row.hi))?;
            } else {
                if row.hi.is_finite() {
                    writeln!(out, " {}:{} <= {}", row.name, body, fmt_g9(row.hi))?;
                }
                if row.lo.is_finite() {
                    let suffix = if row.hi.is_finite() { "_lo" } else { "" };
                    writeln!(out, " {}{}:{} >= {}", row.name, suffix, body, fmt_g9(row.lo))?;
                }
            }
        }
        writeln!(out, "Bounds")?;
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            let name = &self.names[j];
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) if lo == hi => writeln!(out, " {name} = {}", fmt_g9(lo))?,
                (true, true) => writeln!(out, " {} <= {name} <= {}", fmt_g9(lo), fmt_g9(hi))?,
                (true, false) => writeln!(out, " {name} >= {}", fmt_g9(lo))?,
                (false, true) => writeln!(out, " -inf <= {name} <= {}", fmt_g9(hi))?,
                (false, false) => writeln!(out, " {name} free")?,
            }
        }
        writeln!(out, "End")?;
        Ok(())
    }
}

fn write_term<W: Write>(out: &mut W, coef: f64, name: &str, first: bool) -> std::io::Result<()> {
    let sign = if coef < 0.0 { "-" } else if first { "" } else { "+" };
    let mag = coef.abs();
    if mag == 1.0 {
        write!(out, " {sign} {name}")
    } else {
        write!(out, " {sign} {} {name}", fmt_g9(mag))
    }
}
