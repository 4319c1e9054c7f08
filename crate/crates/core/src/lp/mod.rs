//! Linear programs in the max form used throughout the crate, an embedded
//! revised simplex solver, and a solver-independent certificate checker.

mod certificate;
mod lu;
mod model;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use certificate::{check_certificate, CertificateReport};
pub use model::{Constraint, LinearProgram, LowerBound, Relation, RowId, VarId, Variable};

/// Absolute tolerance used when the caller has no better idea.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("row `{row}` references undeclared variable #{var}")]
    UnknownVariable { row: String, var: usize },
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
    #[error("simplex did not terminate after {pivots} pivots")]
    IterationLimit { pivots: usize },
    #[error("numerical breakdown after {pivots} pivots: {detail}")]
    Numerical { pivots: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// one value per variable, in declaration order; zeros unless optimal
    pub primal: Vec<f64>,
    /// one value per constraint, in declaration order; zeros unless optimal
    pub duals: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }

    pub fn dual(&self, r: RowId) -> f64 {
        self.duals[r.0]
    }
}

/// Solves `lp` to optimality (or proves infeasibility/unboundedness).
///
/// Optimal solutions are re-checked with [`check_certificate`] at `tol`; a
/// certificate that fails there is reported as [`LpError::Numerical`].
pub fn solve(lp: &LinearProgram, tol: f64) -> Result<LpSolution, LpError> {
    let sol = simplex::Simplex::new(lp).run()?;
    if sol.is_optimal() {
        let report = check_certificate(lp, &sol, tol);
        if !report.pass {
            return Err(LpError::Numerical {
                pivots: sol.iterations,
                detail: format!("certificate rejected: {report}"),
            });
        }
    }
    Ok(sol)
}
