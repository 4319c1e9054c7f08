use std::fmt;

use serde::{Deserialize, Serialize};

use super::model::{LinearProgram, LowerBound, Relation};
use super::LpSolution;

/// Optimality residuals of a primal/dual pair, recomputed from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub complementary_slackness: f64,
    pub duality_gap: f64,
    pub pass: bool,
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "primal {:.3e}, dual {:.3e}, slackness {:.3e}, gap {:.3e} ({})",
            self.primal_infeasibility,
            self.dual_infeasibility,
            self.complementary_slackness,
            self.duality_gap,
            if self.pass { "pass" } else { "fail" }
        )
    }
}

/// Checks `sol` against `lp` using only the two of them: primal rows and sign
/// bounds, the dual rows `A'y >= c` (`= c` for free columns), dual signs,
/// both complementary-slackness families, and `|c'x - b'y|`.
pub fn check_certificate(lp: &LinearProgram, sol: &LpSolution, tol: f64) -> CertificateReport {
    let x = &sol.primal;
    let y = &sol.duals;
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut cs: f64 = 0.0;

    for (v, &xj) in lp.variables().iter().zip(x) {
        if v.lower == LowerBound::Zero {
            primal = primal.max(-xj);
        }
    }
    for (c, &yi) in lp.constraints().iter().zip(y) {
        let slack = c.rhs - c.activity(x);
        match c.relation {
            Relation::Le => {
                primal = primal.max(-slack);
                dual = dual.max(-yi);
                cs = cs.max((yi * slack).abs());
            }
            Relation::Eq => primal = primal.max(slack.abs()),
        }
    }

    let mut aty = vec![0.0; lp.num_vars()];
    for (c, &yi) in lp.constraints().iter().zip(y) {
        for &(v, a) in &c.terms {
            aty[v.0] += a * yi;
        }
    }
    for ((v, &xj), &s) in lp.variables().iter().zip(x).zip(&aty) {
        let reduced = s - v.objective;
        match v.lower {
            LowerBound::Zero => {
                dual = dual.max(-reduced);
                cs = cs.max((xj * reduced).abs());
            }
            LowerBound::Free => dual = dual.max(reduced.abs()),
        }
    }

    let gap = (lp.objective_value(x) - lp.dual_objective_value(y)).abs();
    let pass = primal <= tol && dual <= tol && cs <= tol && gap <= tol;
    CertificateReport {
        primal_infeasibility: primal,
        dual_infeasibility: dual,
        complementary_slackness: cs,
        duality_gap: gap,
        pass,
    }
}
