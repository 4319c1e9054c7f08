use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LpError;

/// Index of a variable inside a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Index of a constraint row inside a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LowerBound {
    /// `x >= 0`
    Zero,
    /// unrestricted in sign
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: LowerBound,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }
}

/// A maximisation problem `max c'x  s.t.  A x (<=|=) b`, every variable either
/// non-negative or free.
///
/// Dual convention: `<=` rows carry non-negative duals, `=` rows free duals, and
/// an optimal dual `y` satisfies `A'y >= c` on non-negative columns and
/// `A'y = c` on free columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    var_names: HashMap<String, VarId>,
    row_names: HashMap<String, RowId>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: LowerBound,
        objective: f64,
    ) -> Result<VarId, LpError> {
        let name = name.into();
        if !objective.is_finite() {
            return Err(LpError::NonFinite(name));
        }
        if self.var_names.contains_key(&name) {
            return Err(LpError::DuplicateName(name));
        }
        let id = VarId(self.variables.len());
        self.var_names.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            lower,
            objective,
        });
        Ok(id)
    }

    /// Adds a row. Repeated variables in `terms` are merged and exact zeros dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<RowId, LpError> {
        let name = name.into();
        if self.row_names.contains_key(&name) {
            return Err(LpError::DuplicateName(name));
        }
        if !rhs.is_finite() {
            return Err(LpError::NonFinite(name));
        }
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        for (v, a) in terms {
            if v.0 >= self.variables.len() {
                return Err(LpError::UnknownVariable { row: name, var: v.0 });
            }
            if !a.is_finite() {
                return Err(LpError::NonFinite(name));
            }
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(entry) => entry.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        let id = RowId(self.constraints.len());
        self.row_names.insert(name.clone(), id);
        self.constraints.push(Constraint {
            name,
            terms: merged,
            relation,
            rhs,
        });
        Ok(id)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.var_names.get(name).copied()
    }

    pub fn row(&self, name: &str) -> Option<RowId> {
        self.row_names.get(name).copied()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .map(|(v, xi)| v.objective * xi)
            .sum()
    }

    /// `b'y`
    pub fn dual_objective_value(&self, y: &[f64]) -> f64 {
        self.constraints.iter().zip(y).map(|(c, yi)| c.rhs * yi).sum()
    }

    /// Column view `A'`: for every variable the list of `(row, coefficient)`.
    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.variables.len()];
        for (i, row) in self.constraints.iter().enumerate() {
            for &(v, a) in &row.terms {
                cols[v.0].push((i, a));
            }
        }
        cols
    }
}

fn fmt_term(f: &mut fmt::Formatter<'_>, first: bool, a: f64, name: &str) -> fmt::Result {
    let op = match (first, a < 0.0) {
        (true, false) => "",
        (true, true) => "-",
        (false, false) => " + ",
        (false, true) => " - ",
    };
    if a.abs() == 1.0 {
        write!(f, "{op}{name}")
    } else {
        write!(f, "{op}{} {name}", a.abs())
    }
}

/// Text listing, one constraint per line, used for diffing built models.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "maximize ")?;
        let mut first = true;
        for v in self.variables.iter().filter(|v| v.objective != 0.0) {
            fmt_term(f, first, v.objective, &v.name)?;
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        writeln!(f)?;
        writeln!(f, "subject to")?;
        for c in &self.constraints {
            write!(f, "  {}: ", c.name)?;
            if c.terms.is_empty() {
                write!(f, "0")?;
            }
            for (k, &(v, a)) in c.terms.iter().enumerate() {
                fmt_term(f, k == 0, a, &self.variables[v.0].name)?;
            }
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
            };
            writeln!(f, " {rel} {}", c.rhs)?;
        }
        writeln!(f, "bounds")?;
        for v in &self.variables {
            match v.lower {
                LowerBound::Zero => writeln!(f, "  {} >= 0", v.name)?,
                LowerBound::Free => writeln!(f, "  {} free", v.name)?,
            }
        }
        Ok(())
    }
}
