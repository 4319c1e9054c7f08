//! Upper level: split reserve revenue and peak cost so that every entity gains
//! at least `alpha` over acting alone, with `alpha` as large as possible.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LinearProgram, LowerBound, LpError, LpStatus, Relation, VarId};
use crate::market::{energy_terms, key, DeviceState, MarketOutcome, StandaloneProfits};
use crate::scenario::{DeviceSpec, Scenario};

#[derive(Debug, Error)]
pub enum SharingError {
    #[error("no Pareto-superior sharing exists; {}", describe(.shortfalls))]
    Infeasible { shortfalls: Vec<(String, f64)> },
    #[error("outcome and scenario disagree: {0}")]
    Mismatch(String),
    #[error("sharing problem: {0}")]
    Solver(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityShare {
    pub id: String,
    pub j_total: f64,
    pub j_energy: f64,
    pub j_reserve: f64,
    pub j_peak: f64,
    pub j_su: f64,
    /// assigned part of the community symmetric reserve, kW
    pub reserve_share: f64,
    /// assigned part of the community peak, kW
    pub peak_share: f64,
    pub reserve_up: Vec<f64>,
    pub reserve_down: Vec<f64>,
}

impl EntityShare {
    pub fn gain(&self) -> f64 {
        self.j_total - self.j_su
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingOutcome {
    pub alpha: f64,
    pub entities: Vec<EntityShare>,
}

impl SharingOutcome {
    pub fn entity(&self, id: &str) -> Option<&EntityShare> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn total(&self) -> f64 {
        self.entities.iter().map(|e| e.j_total).sum()
    }

    /// One row per entity, in the layout of the usual cost/revenue summary.
    pub fn ledger_csv(&self) -> String {
        let mut out = String::from("entity,j,j_su,gain,j_energy,j_reserve,j_peak,reserve_share,peak_share,alpha\n");
        for e in &self.entities {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                e.id,
                e.j_total,
                e.j_su,
                e.gain(),
                e.j_energy,
                e.j_reserve,
                e.j_peak,
                e.reserve_share,
                e.peak_share,
                self.alpha
            );
        }
        out
    }
}

fn describe(shortfalls: &[(String, f64)]) -> String {
    if shortfalls.is_empty() {
        return "no single entity falls short on its own, the shares cannot cover all of them at once".into();
    }
    let each: Vec<String> = shortfalls.iter().map(|(u, v)| format!("{u}: {v:.6}")).collect();
    format!("shortfall per entity: {}", each.join(", "))
}

fn entity_pair<'a>(
    out: &'a MarketOutcome,
    s: &'a Scenario,
) -> Result<Vec<(&'a crate::scenario::Entity, &'a crate::market::EntityOutcome)>, SharingError> {
    if out.entities.len() != s.entities.len() {
        return Err(SharingError::Mismatch(format!(
            "{} entities in outcome, {} in scenario",
            out.entities.len(),
            s.entities.len()
        )));
    }
    s.entities
        .iter()
        .zip(&out.entities)
        .map(|(e, o)| {
            if e.id != o.id || e.devices.len() != o.devices.len() {
                Err(SharingError::Mismatch(format!("entity `{}` vs `{}`", e.id, o.id)))
            } else {
                Ok((e, o))
            }
        })
        .collect()
}

/// Energy profit of entity `u` with community trades valued at its internal price.
pub fn energy_profit(out: &MarketOutcome, s: &Scenario, u: &str) -> Result<f64, SharingError> {
    let e = s
        .entity(u)
        .ok_or_else(|| SharingError::Mismatch(format!("unknown entity `{u}`")))?;
    let o = out
        .entity(u)
        .ok_or_else(|| SharingError::Mismatch(format!("entity `{u}` missing from outcome")))?;
    Ok(energy_terms(s, e, o, None))
}

/// Per entity, then per period.
pub type PerEntitySeries = Vec<Vec<f64>>;

/// Upward and downward reserve each entity actually offers per period:
/// `(r_inc[u][t], r_dec[u][t])`.
pub fn reserve_contributions(
    out: &MarketOutcome,
    s: &Scenario,
) -> Result<(PerEntitySeries, PerEntitySeries), SharingError> {
    let periods = s.periods();
    let mut inc = Vec::new();
    let mut dec = Vec::new();
    for (e, o) in entity_pair(out, s)? {
        let mut up = vec![0.0; periods];
        let mut down = vec![0.0; periods];
        for (d, dout) in e.devices.iter().zip(&o.devices) {
            for t in 0..periods {
                match (&d.spec, &dout.state) {
                    (DeviceSpec::SheddableLoad { consumption, .. }, DeviceState::Sheddable { shed, .. }) => {
                        up[t] += consumption[t] * (1.0 - shed[t]);
                        down[t] += consumption[t] * shed[t];
                    }
                    (DeviceSpec::SteerableGen { production, .. }, DeviceState::Steerable { steer, .. }) => {
                        up[t] += production[t] * (1.0 - steer[t]);
                        down[t] += production[t] * steer[t];
                    }
                    (DeviceSpec::Storage(_), DeviceState::Storage(b)) => {
                        up[t] += b.reserve_up[t];
                        down[t] += b.reserve_down[t];
                    }
                    _ => {}
                }
            }
        }
        inc.push(up);
        dec.push(down);
    }
    Ok((inc, dec))
}

/// Solves the sharing LP for a cleared outcome and the standalone profits.
pub fn solve_sharing(
    out: &MarketOutcome,
    su: &StandaloneProfits,
    s: &Scenario,
    tol: f64,
) -> Result<SharingOutcome, SharingError> {
    let pairs = entity_pair(out, s)?;
    let (inc, dec) = reserve_contributions(out, s)?;
    let mut energy = Vec::with_capacity(pairs.len());
    let mut j_su = Vec::with_capacity(pairs.len());
    for (e, o) in &pairs {
        energy.push(energy_terms(s, e, o, None));
        j_su.push(
            su.get(&e.id)
                .ok_or_else(|| SharingError::Mismatch(format!("no standalone profit for `{}`", e.id)))?
                .j_su,
        );
    }
    let pi_res = s.tariffs.reserve;
    let pi_peak = s.tariffs.peak;
    let periods = s.periods();

    if pairs.is_empty() {
        return Ok(SharingOutcome {
            alpha: 0.0,
            entities: Vec::new(),
        });
    }

    let mut lp = LinearProgram::new();
    let var = |lp: &mut LinearProgram, name: String, obj: f64| -> VarId {
        lp.add_var(name, LowerBound::Zero, obj).expect("unique names")
    };
    let alpha = var(&mut lp, "alpha/-/-/-".into(), 1.0);
    let mut r_sym = Vec::new();
    let mut p_bar = Vec::new();
    let mut r_inc = Vec::new();
    let mut r_dec = Vec::new();
    for (e, _) in &pairs {
        r_sym.push(var(&mut lp, key("r_sym", &e.id, "-", None), 0.0));
        p_bar.push(var(&mut lp, key("peak", &e.id, "-", None), 0.0));
        r_inc.push(
            (0..periods)
                .map(|t| var(&mut lp, key("r_inc", &e.id, "-", Some(t)), 0.0))
                .collect::<Vec<_>>(),
        );
        r_dec.push(
            (0..periods)
                .map(|t| var(&mut lp, key("r_dec", &e.id, "-", Some(t)), 0.0))
                .collect::<Vec<_>>(),
        );
    }
    let row = |lp: &mut LinearProgram, name: String, terms: Vec<(VarId, f64)>, rel, rhs| {
        lp.add_constraint(name, terms, rel, rhs).expect("declared variables");
    };
    row(
        &mut lp,
        "reserve_sharing/-/-/-".into(),
        r_sym.iter().map(|&v| (v, 1.0)).collect(),
        Relation::Eq,
        out.reserve_sym,
    );
    row(
        &mut lp,
        "peak_sharing/-/-/-".into(),
        p_bar.iter().map(|&v| (v, 1.0)).collect(),
        Relation::Eq,
        out.peak,
    );
    for (k, (e, _)) in pairs.iter().enumerate() {
        let u = e.id.as_str();
        for t in 0..periods {
            row(&mut lp, key("r_inc_def", u, "-", Some(t)), vec![(r_inc[k][t], 1.0)], Relation::Eq, inc[k][t]);
            row(&mut lp, key("r_dec_def", u, "-", Some(t)), vec![(r_dec[k][t], 1.0)], Relation::Eq, dec[k][t]);
            row(
                &mut lp,
                key("one_half", u, "-", Some(t)),
                vec![(r_sym[k], 1.0), (r_inc[k][t], -0.5), (r_dec[k][t], -0.5)],
                Relation::Le,
                0.0,
            );
        }
        // alpha <= J_energy + pi_res r_u - pi_peak p_u - J_SU
        row(
            &mut lp,
            key("pareto", u, "-", None),
            vec![(alpha, 1.0), (r_sym[k], -pi_res), (p_bar[k], pi_peak)],
            Relation::Le,
            energy[k] - j_su[k],
        );
    }

    let sol = lp::solve(&lp, tol)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Unbounded => {
            return Err(SharingError::Mismatch("sharing problem unbounded".into()));
        }
        LpStatus::Infeasible => {
            let shortfalls = pairs
                .iter()
                .enumerate()
                .filter_map(|(k, (e, _))| {
                    let cap = (0..periods)
                        .map(|t| 0.5 * (inc[k][t] + dec[k][t]))
                        .fold(f64::INFINITY, f64::min)
                        .min(out.reserve_sym);
                    let best = energy[k] + pi_res * cap.max(0.0);
                    let short = j_su[k] - best;
                    (short > tol).then(|| (e.id.clone(), short))
                })
                .collect();
            return Err(SharingError::Infeasible { shortfalls });
        }
    }

    let entities = pairs
        .iter()
        .enumerate()
        .map(|(k, (e, _))| {
            let reserve_share = sol.value(r_sym[k]);
            let peak_share = sol.value(p_bar[k]);
            let j_reserve = pi_res * reserve_share;
            let j_peak = -pi_peak * peak_share;
            EntityShare {
                id: e.id.clone(),
                j_total: energy[k] + j_reserve + j_peak,
                j_energy: energy[k],
                j_reserve,
                j_peak,
                j_su: j_su[k],
                reserve_share,
                peak_share,
                reserve_up: inc[k].clone(),
                reserve_down: dec[k].clone(),
            }
        })
        .collect();
    Ok(SharingOutcome {
        alpha: sol.value(alpha),
        entities,
    })
}
