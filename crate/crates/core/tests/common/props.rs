//! The community-level properties every cleared scenario must satisfy.

use microgrid_market::market::{clear_market, standalone_profits};
use microgrid_market::scenario::Scenario;
use microgrid_market::sharing::{solve_sharing, SharingError};
use microgrid_market::verify::verify_all;

#[derive(Debug)]
pub enum Verdict {
    Pass,
    /// the lower level verified but no Pareto-superior split exists (the upper
    /// level is infeasible)
    SharingInfeasible,
    Fail(String),
}

pub fn community_properties(s: &Scenario, tol: f64) -> Verdict {
    let out = match clear_market(s, tol) {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(format!("clearing: {e}")),
    };
    let su = match standalone_profits(s, tol) {
        Ok(p) => p,
        Err(e) => return Verdict::Fail(format!("standalone: {e}")),
    };
    if out.welfare < su.total() - tol {
        return Verdict::Fail(format!("J* {} below sum of J_SU {}", out.welfare, su.total()));
    }
    let lower = verify_all(s, &out, None, tol);
    if !lower.passed() {
        return Verdict::Fail(format!("lower level failed verification:\n{lower}"));
    }
    let sh = match solve_sharing(&out, &su, s, tol) {
        Ok(sh) => sh,
        Err(SharingError::Infeasible { .. }) => return Verdict::SharingInfeasible,
        Err(e) => return Verdict::Fail(format!("sharing: {e}")),
    };
    if (sh.total() - out.welfare).abs() > tol {
        return Verdict::Fail(format!("sum of J_u {} vs J* {}", sh.total(), out.welfare));
    }
    let min_gain = sh.entities.iter().map(|e| e.gain()).fold(f64::INFINITY, f64::min);
    if sh.alpha < -tol || (sh.alpha - min_gain).abs() > tol {
        return Verdict::Fail(format!("alpha {} vs min gain {min_gain}", sh.alpha));
    }
    let report = verify_all(s, &out, Some((&sh, &su)), tol);
    if !report.passed() {
        return Verdict::Fail(format!("verification failed:\n{report}"));
    }
    Verdict::Pass
}
