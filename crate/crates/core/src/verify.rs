//! Independent audit of a cleared outcome.
//!
//! Everything here is recomputed from the scenario and the reported primal and
//! dual values, straight from the model equations; nothing is read back from
//! the LP that produced them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::market::{DeviceState, EntityOutcome, MarketOutcome, StandaloneProfits};
use crate::scenario::{DeviceSpec, Entity, Scenario};
use crate::sharing::SharingOutcome;

pub const PRIMAL_FEASIBILITY: &str = "primal_feasibility";
pub const DUAL_FEASIBILITY: &str = "dual_feasibility";
pub const STRONG_DUALITY: &str = "strong_duality";
pub const COMPLEMENTARY_SLACKNESS: &str = "complementary_slackness";
pub const COST_IDENTITY: &str = "cost_identity";
pub const FLOW_GRID: &str = "flow_exclusivity/grid";
pub const FLOW_COMMUNITY: &str = "flow_exclusivity/community";
pub const FLOW_STORAGE: &str = "flow_exclusivity/storage";
pub const TWICE_FEE: &str = "price_relations/twice_fee";
pub const STORAGE_CHAIN: &str = "price_relations/storage_chain";
pub const PEAK_PRICE: &str = "price_relations/peak_price";
pub const SHARING: &str = "sharing";

const CERTIFICATE: [&str; 4] = [
    PRIMAL_FEASIBILITY,
    DUAL_FEASIBILITY,
    STRONG_DUALITY,
    COMPLEMENTARY_SLACKNESS,
];

const WORST_KEPT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Warn,
    Skipped,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Warn => "warn",
            CheckStatus::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub max_residual: f64,
    /// the largest violations as `(residual, location)`
    pub worst: Vec<(f64, String)>,
    /// number of instances evaluated (relations: activated patterns)
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.get(name).map(|c| c.status)
    }

    /// No check failed (warnings allowed).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    /// Primal and dual feasibility, complementary slackness and zero gap.
    pub fn certificate_valid(&self) -> bool {
        CERTIFICATE
            .iter()
            .all(|n| self.status(n) == Some(CheckStatus::Pass))
    }

    /// The derived price relations hold wherever their pattern is active.
    pub fn relations_matched(&self) -> bool {
        [TWICE_FEE, STORAGE_CHAIN, PEAK_PRICE]
            .iter()
            .all(|n| self.status(n) != Some(CheckStatus::Fail))
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .collect()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<32} {:>8} {:>12} {:>6}  worst", "check", "status", "residual", "n")?;
        for c in &self.checks {
            let worst = c.worst.first().map(|(_, l)| l.as_str()).unwrap_or("");
            writeln!(
                f,
                "{:<32} {:>8} {:>12.3e} {:>6}  {}",
                c.name, c.status.to_string(), c.max_residual, c.evaluated, worst
            )?;
        }
        Ok(())
    }
}

/// Running maximum of residuals with the few worst locations.
#[derive(Debug, Default)]
struct Residuals {
    max: f64,
    worst: Vec<(f64, String)>,
    count: usize,
}

impl Residuals {
    fn push(&mut self, r: f64, at: impl FnOnce() -> String) {
        self.count += 1;
        let r = if r.is_nan() { f64::INFINITY } else { r };
        if r <= 0.0 {
            return;
        }
        self.max = self.max.max(r);
        if self.worst.len() < WORST_KEPT || r > self.worst[self.worst.len() - 1].0 {
            self.worst.push((r, at()));
            self.worst.sort_by(|a, b| b.0.total_cmp(&a.0));
            self.worst.truncate(WORST_KEPT);
        }
    }

    fn finish(self, name: &str, tol: f64, on_violation: CheckStatus) -> Check {
        let status = if self.count == 0 {
            CheckStatus::Skipped
        } else if self.max > tol {
            on_violation
        } else {
            CheckStatus::Pass
        };
        Check {
            name: name.to_string(),
            status,
            max_residual: self.max,
            worst: self.worst,
            evaluated: self.count,
        }
    }
}

fn loc(family: &str, u: &str, d: &str, t: usize) -> String {
    format!("{family}/{u}/{d}/{}", t + 1)
}

/// Structural mismatch between the outcome and the scenario.
fn shape_error(s: &Scenario, out: &MarketOutcome) -> Option<String> {
    let t = s.periods();
    if out.entities.len() != s.entities.len() {
        return Some(format!(
            "{} entities in outcome, {} in scenario",
            out.entities.len(),
            s.entities.len()
        ));
    }
    for v in [&out.price_bus, &out.phi_peak, &out.rho_inc, &out.rho_dec] {
        if v.len() != t {
            return Some("community series of wrong length".into());
        }
    }
    for (e, o) in s.entities.iter().zip(&out.entities) {
        if e.id != o.id || e.devices.len() != o.devices.len() {
            return Some(format!("entity `{}` does not match `{}`", o.id, e.id));
        }
        for v in [
            &o.export_grid,
            &o.import_grid,
            &o.export_com,
            &o.import_com,
            &o.price_com,
            &o.phi_export_cap,
            &o.phi_import_cap,
        ] {
            if v.len() != t {
                return Some(format!("entity `{}` series of wrong length", e.id));
            }
        }
        for (d, od) in e.devices.iter().zip(&o.devices) {
            let ok = match (&d.spec, &od.state) {
                (DeviceSpec::NonFlexibleLoad { .. } | DeviceSpec::NonSteerableGen { .. }, DeviceState::Passive) => true,
                (DeviceSpec::SheddableLoad { .. }, DeviceState::Sheddable { shed, phi_shed }) => {
                    shed.len() == t && phi_shed.len() == t
                }
                (DeviceSpec::SteerableGen { .. }, DeviceState::Steerable { steer, phi_steer }) => {
                    steer.len() == t && phi_steer.len() == t
                }
                (DeviceSpec::Storage(_), DeviceState::Storage(b)) => [
                    &b.charge,
                    &b.discharge,
                    &b.soc,
                    &b.reserve_up,
                    &b.reserve_down,
                    &b.phi_charge,
                    &b.phi_discharge,
                    &b.phi_soc_up,
                    &b.phi_soc_lo,
                    &b.sigma,
                    &b.kappa_up,
                    &b.kappa_down,
                    &b.phi_res_up,
                    &b.phi_res_down,
                ]
                .iter()
                .all(|v| v.len() == t),
                _ => false,
            };
            if !ok {
                return Some(format!("device `{}/{}` does not match its kind", e.id, d.id));
            }
        }
    }
    None
}

fn shape_failure(names: &[&str], why: &str) -> Vec<Check> {
    names
        .iter()
        .map(|n| Check {
            name: n.to_string(),
            status: CheckStatus::Fail,
            max_residual: f64::INFINITY,
            worst: vec![(f64::INFINITY, why.to_string())],
            evaluated: 0,
        })
        .collect()
}

struct Ctx<'a> {
    s: &'a Scenario,
    out: &'a MarketOutcome,
}

impl<'a> Ctx<'a> {
    fn pairs(&self) -> impl Iterator<Item = (&'a Entity, &'a EntityOutcome)> {
        self.s.entities.iter().zip(&self.out.entities)
    }

    fn cap(cap: &Option<Vec<f64>>, t: usize) -> Option<f64> {
        cap.as_ref().map(|c| c[t])
    }
}

/// A row of the clearing problem: `slack = rhs - lhs` (must be >= 0 for
/// inequalities, 0 for equalities), its dual and its right-hand side.
struct RowEval {
    at: String,
    equality: bool,
    slack: f64,
    dual: f64,
    rhs: f64,
}

/// A column: its value, whether it is sign-free, and `A'y - c`.
struct ColEval {
    at: String,
    free: bool,
    value: f64,
    reduced: f64,
}

fn rows(cx: &Ctx) -> Vec<RowEval> {
    let s = cx.s;
    let out = cx.out;
    let dt = s.delta();
    let periods = s.periods();
    let mut r = Vec::new();
    let mut le = |at: String, lhs: f64, rhs: f64, dual: f64| {
        r.push(RowEval {
            at,
            equality: false,
            slack: rhs - lhs,
            dual,
            rhs,
        })
    };
    let mut eqs: Vec<RowEval> = Vec::new();
    let mut eq = |at: String, lhs: f64, rhs: f64, dual: f64| {
        eqs.push(RowEval {
            at,
            equality: true,
            slack: rhs - lhs,
            dual,
            rhs,
        })
    };

    for (e, o) in cx.pairs() {
        let u = e.id.as_str();
        for t in 0..periods {
            // entity balance: fixed production minus fixed demand on the right
            let mut lhs = o.export_grid[t] - o.import_grid[t] + o.export_com[t] - o.import_com[t];
            let mut rhs = 0.0;
            for (d, od) in e.devices.iter().zip(&o.devices) {
                match (&d.spec, &od.state) {
                    (DeviceSpec::NonFlexibleLoad { consumption }, _) => rhs -= dt * consumption[t],
                    (DeviceSpec::NonSteerableGen { production }, _) => rhs += dt * production[t],
                    (DeviceSpec::SheddableLoad { consumption, .. }, DeviceState::Sheddable { shed, .. }) => {
                        rhs -= dt * consumption[t];
                        lhs -= dt * consumption[t] * shed[t];
                    }
                    (DeviceSpec::SteerableGen { production, .. }, DeviceState::Steerable { steer, .. }) => {
                        lhs -= dt * production[t] * steer[t];
                    }
                    (DeviceSpec::Storage(b), DeviceState::Storage(st)) => {
                        lhs += dt * (b.p_charge * st.charge[t] - b.p_discharge * st.discharge[t]);
                    }
                    _ => {}
                }
            }
            eq(loc("balance", u, "-", t), lhs, rhs, o.price_com[t]);
            let net_export = (o.export_grid[t] - o.import_grid[t]) / dt;
            if let Some(c) = Ctx::cap(&e.export_cap, t) {
                le(loc("export_cap", u, "-", t), net_export, c, o.phi_export_cap[t]);
            } else if o.phi_export_cap[t] != 0.0 {
                le(loc("export_cap", u, "-", t), 0.0, f64::INFINITY, o.phi_export_cap[t]);
            }
            if let Some(c) = Ctx::cap(&e.import_cap, t) {
                le(loc("import_cap", u, "-", t), -net_export, c, o.phi_import_cap[t]);
            } else if o.phi_import_cap[t] != 0.0 {
                le(loc("import_cap", u, "-", t), 0.0, f64::INFINITY, o.phi_import_cap[t]);
            }

            for (d, od) in e.devices.iter().zip(&o.devices) {
                let dv = d.id.as_str();
                match (&d.spec, &od.state) {
                    (DeviceSpec::SheddableLoad { .. }, DeviceState::Sheddable { shed, phi_shed }) => {
                        le(loc("she_max", u, dv, t), shed[t], 1.0, phi_shed[t]);
                    }
                    (DeviceSpec::SteerableGen { .. }, DeviceState::Steerable { steer, phi_steer }) => {
                        le(loc("ste_max", u, dv, t), steer[t], 1.0, phi_steer[t]);
                    }
                    (DeviceSpec::Storage(b), DeviceState::Storage(st)) => {
                        le(loc("cha_max", u, dv, t), st.charge[t], 1.0, st.phi_charge[t]);
                        le(loc("dis_max", u, dv, t), st.discharge[t], 1.0, st.phi_discharge[t]);
                        le(loc("soc_max", u, dv, t), st.soc[t], b.cap_max, st.phi_soc_up[t]);
                        le(loc("soc_min", u, dv, t), -st.soc[t], -b.cap_min, st.phi_soc_lo[t]);
                        let prev = if t == 0 { 0.0 } else { st.soc[t - 1] };
                        let flow = dt
                            * (b.p_charge * b.eff_charge * st.charge[t]
                                - b.p_discharge / b.eff_discharge * st.discharge[t]);
                        let init = if t == 0 { b.soc_init } else { 0.0 };
                        eq(loc("soc_dyn", u, dv, t), st.soc[t] - prev - flow, init, st.sigma[t]);
                        // storage reserve, written as r - (coef * s) <= rhs
                        let up = b.eff_discharge / dt;
                        let down = 1.0 / (b.eff_charge * dt);
                        le(
                            loc("r_up_soc", u, dv, t),
                            st.reserve_up[t] - up * st.soc[t],
                            -up * b.cap_min,
                            st.kappa_up[t],
                        );
                        le(
                            loc("r_up_pow", u, dv, t),
                            st.reserve_up[t] + b.p_discharge * st.discharge[t],
                            b.p_discharge,
                            st.phi_res_up[t],
                        );
                        le(
                            loc("r_down_soc", u, dv, t),
                            st.reserve_down[t] + down * st.soc[t],
                            down * b.cap_max,
                            st.kappa_down[t],
                        );
                        le(
                            loc("r_down_pow", u, dv, t),
                            st.reserve_down[t] + b.p_charge * st.charge[t],
                            b.p_charge,
                            st.phi_res_down[t],
                        );
                    }
                    _ => {}
                }
            }
        }
        for (d, od) in e.devices.iter().zip(&o.devices) {
            if let (DeviceSpec::Storage(b), DeviceState::Storage(st)) = (&d.spec, &od.state) {
                eq(
                    format!("soc_end/{u}/{}/-", d.id),
                    st.soc[periods - 1],
                    b.soc_final,
                    st.zeta,
                );
            }
        }
    }

    for t in 0..periods {
        if !s.entities.is_empty() {
            let lhs: f64 = out.entities.iter().map(|o| o.import_com[t] - o.export_com[t]).sum();
            eq(loc("community", "-", "-", t), lhs, 0.0, out.price_bus[t]);
        }
        let net: f64 = out
            .entities
            .iter()
            .map(|o| (o.import_grid[t] - o.export_grid[t]) / dt)
            .sum();
        le(loc("peak_def", "-", "-", t), net - out.peak, 0.0, out.phi_peak[t]);

        let mut up = 0.0;
        let mut down = 0.0;
        let mut fixed = 0.0;
        for (e, o) in cx.pairs() {
            for (d, od) in e.devices.iter().zip(&o.devices) {
                match (&d.spec, &od.state) {
                    (DeviceSpec::SheddableLoad { consumption, .. }, DeviceState::Sheddable { shed, .. }) => {
                        up -= consumption[t] * shed[t];
                        fixed += consumption[t];
                        down += consumption[t] * shed[t];
                    }
                    (DeviceSpec::SteerableGen { production, .. }, DeviceState::Steerable { steer, .. }) => {
                        up -= production[t] * steer[t];
                        fixed += production[t];
                        down += production[t] * steer[t];
                    }
                    (DeviceSpec::Storage(_), DeviceState::Storage(st)) => {
                        up += st.reserve_up[t];
                        down += st.reserve_down[t];
                    }
                    _ => {}
                }
            }
        }
        // r_sym - (variable headroom) <= fixed headroom
        le(loc("r_sym_inc", "-", "-", t), out.reserve_sym - up, fixed, out.rho_inc[t]);
        le(loc("r_sym_dec", "-", "-", t), out.reserve_sym - down, 0.0, out.rho_dec[t]);
    }
    r.extend(eqs);
    r
}

fn columns(cx: &Ctx) -> Vec<ColEval> {
    let s = cx.s;
    let out = cx.out;
    let dt = s.delta();
    let tf = &s.tariffs;
    let fee = tf.operator_fee;
    let periods = s.periods();
    let mut c = Vec::new();
    let mut col = |at: String, free: bool, value: f64, reduced: f64| {
        c.push(ColEval {
            at,
            free,
            value,
            reduced,
        })
    };
    let has_community = !s.entities.is_empty();

    for (e, o) in cx.pairs() {
        let u = e.id.as_str();
        for t in 0..periods {
            let pi = o.price_com[t];
            let caps = (o.phi_export_cap[t] - o.phi_import_cap[t]) / dt;
            let peak = out.phi_peak[t] / dt;
            col(loc("e_gri", u, "-", t), false, o.export_grid[t], pi - peak + caps - tf.export[t]);
            col(loc("i_gri", u, "-", t), false, o.import_grid[t], -pi + peak - caps + tf.import[t]);
            if has_community {
                let mu = out.price_bus[t];
                col(loc("e_com", u, "-", t), false, o.export_com[t], pi - mu + fee);
                col(loc("i_com", u, "-", t), false, o.import_com[t], -pi + mu + fee);
            }
            let rho = out.rho_inc[t] - out.rho_dec[t];
            for (d, od) in e.devices.iter().zip(&o.devices) {
                let dv = d.id.as_str();
                match (&d.spec, &od.state) {
                    (
                        DeviceSpec::SheddableLoad {
                            consumption,
                            shed_cost,
                        },
                        DeviceState::Sheddable { shed, phi_shed },
                    ) => {
                        let cc = consumption[t];
                        col(
                            loc("a_she", u, dv, t),
                            false,
                            shed[t],
                            phi_shed[t] - pi * dt * cc + cc * rho + shed_cost[t] * cc * dt,
                        );
                    }
                    (
                        DeviceSpec::SteerableGen {
                            production,
                            gen_cost,
                        },
                        DeviceState::Steerable { steer, phi_steer },
                    ) => {
                        let p = production[t];
                        col(
                            loc("a_ste", u, dv, t),
                            false,
                            steer[t],
                            phi_steer[t] - pi * dt * p + p * rho + gen_cost[t] * p * dt,
                        );
                    }
                    (DeviceSpec::Storage(b), DeviceState::Storage(st)) => {
                        let (pc, pd) = (b.p_charge, b.p_discharge);
                        let (ec, ed) = (b.eff_charge, b.eff_discharge);
                        let g = b.usage_fee;
                        col(
                            loc("a_cha", u, dv, t),
                            false,
                            st.charge[t],
                            st.phi_charge[t] - dt * pc * ec * st.sigma[t]
                                + dt * pc * pi
                                + pc * st.phi_res_down[t]
                                + g * dt * pc * ec,
                        );
                        col(
                            loc("a_dis", u, dv, t),
                            false,
                            st.discharge[t],
                            st.phi_discharge[t] + dt * pd / ed * st.sigma[t] - dt * pd * pi
                                + pd * st.phi_res_up[t]
                                + g * dt * pd / ed,
                        );
                        let next = if t + 1 < periods {
                            -st.sigma[t + 1]
                        } else {
                            st.zeta
                        };
                        col(
                            loc("soc", u, dv, t),
                            true,
                            st.soc[t],
                            st.phi_soc_up[t] - st.phi_soc_lo[t] + st.sigma[t] + next
                                - st.kappa_up[t] * ed / dt
                                + st.kappa_down[t] / (ec * dt),
                        );
                        col(
                            loc("r_up", u, dv, t),
                            false,
                            st.reserve_up[t],
                            st.kappa_up[t] + st.phi_res_up[t] - out.rho_inc[t],
                        );
                        col(
                            loc("r_down", u, dv, t),
                            false,
                            st.reserve_down[t],
                            st.kappa_down[t] + st.phi_res_down[t] - out.rho_dec[t],
                        );
                    }
                    _ => {}
                }
            }
        }
    }
    let rho: f64 = out.rho_inc.iter().chain(&out.rho_dec).sum();
    col("r_sym/-/-/-".into(), false, out.reserve_sym, rho - tf.reserve);
    let phi: f64 = out.phi_peak.iter().sum();
    col("peak/-/-/-".into(), false, out.peak, -phi + tf.peak);
    c
}

/// Welfare recomputed from executed quantities.
pub fn primal_objective(s: &Scenario, out: &MarketOutcome) -> f64 {
    let fee = s.tariffs.operator_fee;
    let energy: f64 = s
        .entities
        .iter()
        .zip(&out.entities)
        .map(|(e, o)| crate::market::energy_terms(s, e, o, Some(fee)))
        .sum();
    energy + s.tariffs.reserve * out.reserve_sym - s.tariffs.peak * out.peak
}

/// Dual objective: right-hand sides weighted by the reported duals.
pub fn dual_objective(s: &Scenario, out: &MarketOutcome) -> f64 {
    let cx = Ctx { s, out };
    rows(&cx)
        .iter()
        .filter(|r| r.rhs.is_finite())
        .map(|r| r.rhs * r.dual)
        .sum()
}

pub fn check_primal_feasibility(s: &Scenario, out: &MarketOutcome, tol: f64) -> Check {
    let cx = Ctx { s, out };
    let mut acc = Residuals::default();
    for r in rows(&cx) {
        let v = if r.equality { r.slack.abs() } else { -r.slack };
        acc.push(v, || r.at.clone());
    }
    for c in columns(&cx) {
        if !c.free {
            acc.push(-c.value, || c.at.clone());
        }
    }
    acc.finish(PRIMAL_FEASIBILITY, tol, CheckStatus::Fail)
}

pub fn check_dual_feasibility(s: &Scenario, out: &MarketOutcome, tol: f64) -> Check {
    let cx = Ctx { s, out };
    let mut acc = Residuals::default();
    for r in rows(&cx) {
        if !r.equality {
            acc.push(-r.dual, || format!("sign of dual {}", r.at));
        }
    }
    for c in columns(&cx) {
        let v = if c.free { c.reduced.abs() } else { -c.reduced };
        acc.push(v, || format!("dual row of {}", c.at));
    }
    acc.finish(DUAL_FEASIBILITY, tol, CheckStatus::Fail)
}

pub fn check_strong_duality(s: &Scenario, out: &MarketOutcome, tol: f64) -> Check {
    let mut acc = Residuals::default();
    let primal = primal_objective(s, out);
    let dual = dual_objective(s, out);
    acc.push((primal - dual).abs(), || format!("primal {primal} vs dual {dual}"));
    acc.push((out.welfare - primal).abs(), || {
        format!("reported welfare {} vs recomputed {primal}", out.welfare)
    });
    acc.finish(STRONG_DUALITY, tol, CheckStatus::Fail)
}

pub fn check_complementary_slackness(s: &Scenario, out: &MarketOutcome, tol: f64) -> Check {
    let cx = Ctx { s, out };
    let mut acc = Residuals::default();
    for r in rows(&cx) {
        if !r.equality {
            let slack = if r.slack.is_finite() { r.slack } else { 1.0 };
            acc.push((r.dual * slack).abs(), || r.at.clone());
        }
    }
    for c in columns(&cx) {
        if !c.free {
            acc.push((c.value * c.reduced).abs(), || c.at.clone());
        }
    }
    acc.finish(COMPLEMENTARY_SLACKNESS, tol, CheckStatus::Fail)
}

pub fn check_cost_identity(s: &Scenario, out: &MarketOutcome, tol: f64) -> Check {
    let fee = s.tariffs.operator_fee;
    let mut fee_side = 0.0;
    let mut price_side = 0.0;
    for o in &out.entities {
        for t in 0..s.periods() {
            fee_side += fee * (o.export_com[t] + o.import_com[t]);
            price_side -= o.price_com[t] * (o.export_com[t] - o.import_com[t]);
        }
    }
    let mut acc = Residuals::default();
    acc.push((fee_side - price_side).abs(), || {
        format!("fees {fee_side} vs price flows {price_side}")
    });
    acc.finish(COST_IDENTITY, tol, CheckStatus::Fail)
}

/// Grid, community and storage exclusivity; the storage one only warns.
pub fn check_flow_exclusivity(s: &Scenario, out: &MarketOutcome, tol: f64) -> Vec<Check> {
    let tf = &s.tariffs;
    let mut grid = Residuals::default();
    let mut com = Residuals::default();
    let mut sto = Residuals::default();
    let fee_active = tf.operator_fee != 0.0;
    for o in &out.entities {
        for t in 0..s.periods() {
            if tf.import[t] != tf.export[t] {
                grid.push(o.export_grid[t] * o.import_grid[t], || loc("grid", &o.id, "-", t));
            }
            if fee_active {
                com.push(o.export_com[t] * o.import_com[t], || loc("community", &o.id, "-", t));
            }
        }
        for d in &o.devices {
            if let DeviceState::Storage(b) = &d.state {
                for t in 0..s.periods() {
                    sto.push(b.charge[t] * b.discharge[t], || loc("storage", &o.id, &d.id, t));
                }
            }
        }
    }
    let t2 = tol * tol;
    vec![
        grid.finish(FLOW_GRID, t2, CheckStatus::Fail),
        com.finish(FLOW_COMMUNITY, t2, CheckStatus::Fail),
        sto.finish(FLOW_STORAGE, t2, CheckStatus::Warn),
    ]
}

/// Price relations that follow from complementary slackness, each checked only
/// where its activation pattern is present.
pub fn check_price_relations(s: &Scenario, out: &MarketOutcome, tol: f64) -> Vec<Check> {
    let periods = s.periods();
    let dt = s.delta();
    let fee = s.tariffs.operator_fee;

    // exporter/importer pairs trading through the community
    let mut twice = Residuals::default();
    for t in 0..periods {
        for a in out.entities.iter().filter(|o| o.export_com[t] > tol) {
            for b in out.entities.iter().filter(|o| o.import_com[t] > tol) {
                let r = (b.price_com[t] - a.price_com[t] - 2.0 * fee).abs();
                twice.push(r, || format!("{} -> {} at t={}", a.id, b.id, t + 1));
            }
        }
    }

    // charge at t, discharge at t' > t, with no binding state-of-charge row in between
    let mut chain = Residuals::default();
    let zero = |v: f64| v.abs() <= tol;
    for (e, o) in s.entities.iter().zip(&out.entities) {
        for (d, od) in e.devices.iter().zip(&o.devices) {
            let (DeviceSpec::Storage(b), DeviceState::Storage(st)) = (&d.spec, &od.state) else {
                continue;
            };
            let (ec, ed) = (b.eff_charge, b.eff_discharge);
            for t in 0..periods {
                if !(st.charge[t] > tol && zero(st.phi_charge[t]) && zero(st.phi_res_down[t])) {
                    continue;
                }
                let mut k = t;
                while k + 1 < periods
                    && zero(st.phi_soc_up[k])
                    && zero(st.phi_soc_lo[k])
                    && zero(st.kappa_up[k])
                    && zero(st.kappa_down[k])
                {
                    let t2 = k + 1;
                    if st.discharge[t2] > tol && zero(st.phi_discharge[t2]) && zero(st.phi_res_up[t2]) {
                        let expect = o.price_com[t] / (ec * ed) + 2.0 * b.usage_fee / ed;
                        let r = (o.price_com[t2] - expect).abs();
                        chain.push(r, || {
                            format!("{}/{} charge t={} discharge t={}", e.id, d.id, t + 1, t2 + 1)
                        });
                    }
                    k += 1;
                }
            }
        }
    }

    // grid importers at every priced peak period share the peak tariff
    let mut peak = Residuals::default();
    if out.peak > tol {
        let binding: Vec<usize> = (0..periods).filter(|&t| out.phi_peak[t] > tol).collect();
        let importers: Option<Vec<(usize, &EntityOutcome)>> = binding
            .iter()
            .map(|&t| {
                out.entities
                    .iter()
                    .find(|o| o.import_grid[t] > tol && zero(o.phi_import_cap[t]) && zero(o.phi_export_cap[t]))
                    .map(|o| (t, o))
            })
            .collect();
        if let Some(imp) = importers.filter(|v| !v.is_empty()) {
            let lhs: f64 = imp.iter().map(|(t, o)| o.price_com[*t]).sum();
            let rhs: f64 = s.tariffs.peak / dt + imp.iter().map(|(t, _)| s.tariffs.import[*t]).sum::<f64>();
            peak.push((lhs - rhs).abs(), || {
                let who: Vec<String> = imp.iter().map(|(t, o)| format!("{}@{}", o.id, t + 1)).collect();
                format!("peak periods {}", who.join(", "))
            });
        }
    }

    vec![
        twice.finish(TWICE_FEE, tol, CheckStatus::Fail),
        chain.finish(STORAGE_CHAIN, tol, CheckStatus::Fail),
        peak.finish(PEAK_PRICE, tol, CheckStatus::Fail),
    ]
}

/// Every invariant of a sharing outcome.
pub fn check_sharing(
    sh: &SharingOutcome,
    out: &MarketOutcome,
    su: &StandaloneProfits,
    s: &Scenario,
    tol: f64,
) -> Check {
    let mut acc = Residuals::default();
    let tf = &s.tariffs;
    if sh.entities.len() != s.entities.len() {
        acc.push(f64::INFINITY, || "entity count differs from scenario".into());
        return acc.finish(SHARING, tol, CheckStatus::Fail);
    }
    acc.push(-sh.alpha, || "alpha >= 0".into());
    let total: f64 = sh.entities.iter().map(|e| e.j_total).sum();
    acc.push((total - out.welfare).abs(), || format!("sum of J_u {total} vs J* {}", out.welfare));
    let r_sum: f64 = sh.entities.iter().map(|e| e.reserve_share).sum();
    acc.push((r_sum - out.reserve_sym).abs(), || "reserve shares sum to r_sym".into());
    let p_sum: f64 = sh.entities.iter().map(|e| e.peak_share).sum();
    acc.push((p_sum - out.peak).abs(), || "peak shares sum to peak".into());

    let mut min_gain = f64::INFINITY;
    for ((e, o), share) in s.entities.iter().zip(&out.entities).zip(&sh.entities) {
        let u = e.id.as_str();
        if share.id != e.id {
            acc.push(f64::INFINITY, || format!("entity order: `{}` vs `{u}`", share.id));
            continue;
        }
        let energy = crate::market::energy_terms(s, e, o, None);
        acc.push((share.j_energy - energy).abs(), || format!("{u}: J_energy"));
        acc.push((share.j_reserve - tf.reserve * share.reserve_share).abs(), || {
            format!("{u}: J_reserve")
        });
        acc.push((share.j_peak + tf.peak * share.peak_share).abs(), || format!("{u}: J_peak"));
        acc.push(
            (share.j_total - share.j_energy - share.j_reserve - share.j_peak).abs(),
            || format!("{u}: J decomposition"),
        );
        acc.push(-share.reserve_share, || format!("{u}: reserve share >= 0"));
        acc.push(-share.peak_share, || format!("{u}: peak share >= 0"));
        match su.get(u) {
            Some(p) => {
                acc.push((share.j_su - p.j_su).abs(), || format!("{u}: J_SU"));
                acc.push(p.j_su + sh.alpha - share.j_total, || format!("{u}: J >= J_SU + alpha"));
                min_gain = min_gain.min(share.j_total - p.j_su);
            }
            None => acc.push(f64::INFINITY, || format!("{u}: no standalone profit")),
        }
        for t in 0..s.periods() {
            let (mut up, mut down) = (0.0, 0.0);
            for (d, od) in e.devices.iter().zip(&o.devices) {
                match (&d.spec, &od.state) {
                    (DeviceSpec::SheddableLoad { consumption, .. }, DeviceState::Sheddable { shed, .. }) => {
                        up += consumption[t] * (1.0 - shed[t]);
                        down += consumption[t] * shed[t];
                    }
                    (DeviceSpec::SteerableGen { production, .. }, DeviceState::Steerable { steer, .. }) => {
                        up += production[t] * (1.0 - steer[t]);
                        down += production[t] * steer[t];
                    }
                    (DeviceSpec::Storage(_), DeviceState::Storage(b)) => {
                        up += b.reserve_up[t];
                        down += b.reserve_down[t];
                    }
                    _ => {}
                }
            }
            acc.push(share.reserve_share - 0.5 * (up + down), || loc("one_half", u, "-", t));
        }
    }
    if min_gain.is_finite() {
        acc.push((sh.alpha - min_gain).abs(), || format!("alpha {} vs min gain {min_gain}", sh.alpha));
    }
    acc.finish(SHARING, tol, CheckStatus::Fail)
}

/// Runs every check once. Without a sharing outcome the sharing check is skipped.
pub fn verify_all(
    s: &Scenario,
    out: &MarketOutcome,
    sharing: Option<(&SharingOutcome, &StandaloneProfits)>,
    tol: f64,
) -> VerificationReport {
    let names = [
        PRIMAL_FEASIBILITY,
        DUAL_FEASIBILITY,
        STRONG_DUALITY,
        COMPLEMENTARY_SLACKNESS,
        COST_IDENTITY,
        FLOW_GRID,
        FLOW_COMMUNITY,
        FLOW_STORAGE,
        TWICE_FEE,
        STORAGE_CHAIN,
        PEAK_PRICE,
        SHARING,
    ];
    if let Some(why) = shape_error(s, out) {
        return VerificationReport {
            checks: shape_failure(&names, &why),
        };
    }
    let mut checks = vec![
        check_primal_feasibility(s, out, tol),
        check_dual_feasibility(s, out, tol),
        check_strong_duality(s, out, tol),
        check_complementary_slackness(s, out, tol),
        check_cost_identity(s, out, tol),
    ];
    checks.extend(check_flow_exclusivity(s, out, tol));
    checks.extend(check_price_relations(s, out, tol));
    checks.push(match sharing {
        Some((sh, su)) => check_sharing(sh, out, su, s, tol),
        None => Residuals::default().finish(SHARING, tol, CheckStatus::Fail),
    });
    VerificationReport { checks }
}
