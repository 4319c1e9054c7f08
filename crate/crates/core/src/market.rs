//! Lower-level market clearing and the standalone entity problems.
//!
//! Every variable and row is named `family/entity/device/t` (a `-` marks a part
//! that does not apply, `t` counts from 1); `sharing` and `verify` only rely on
//! the typed outcome, but the names make LP dumps and dual exports readable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LinearProgram, LowerBound, LpError, LpStatus, Relation, RowId, VarId};
use crate::scenario::{DeviceSpec, Entity, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum MarketError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{problem} is infeasible{}", hint_suffix(.hints))]
    Infeasible { problem: String, hints: Vec<String> },
    #[error("{problem} is unbounded")]
    Unbounded { problem: String },
    #[error("{problem}: {source}")]
    Solver {
        problem: String,
        #[source]
        source: LpError,
    },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
}

fn hint_suffix(h: &[String]) -> String {
    if h.is_empty() {
        String::new()
    } else {
        format!(" (check: {})", h.join("; "))
    }
}

pub(crate) fn key(family: &str, entity: &str, device: &str, t: Option<usize>) -> String {
    match t {
        Some(t) => format!("{family}/{entity}/{device}/{}", t + 1),
        None => format!("{family}/{entity}/{device}/-"),
    }
}

#[derive(Debug, Clone)]
pub struct StorageIndex {
    pub charge: Vec<VarId>,
    pub discharge: Vec<VarId>,
    pub soc: Vec<VarId>,
    pub reserve_up: Vec<VarId>,
    pub reserve_down: Vec<VarId>,
    pub charge_max: Vec<RowId>,
    pub discharge_max: Vec<RowId>,
    pub soc_max: Vec<RowId>,
    pub soc_min: Vec<RowId>,
    pub dynamics: Vec<RowId>,
    pub terminal: RowId,
    pub kappa_up: Vec<RowId>,
    pub phi_res_up: Vec<RowId>,
    pub kappa_down: Vec<RowId>,
    pub phi_res_down: Vec<RowId>,
}

#[derive(Debug, Clone)]
pub enum DeviceIndex {
    Passive,
    Sheddable { shed: Vec<VarId>, bound: Vec<RowId> },
    Steerable { steer: Vec<VarId>, bound: Vec<RowId> },
    Storage(Box<StorageIndex>),
}

#[derive(Debug, Clone)]
pub struct EntityIndex {
    pub export_grid: Vec<VarId>,
    pub import_grid: Vec<VarId>,
    /// absent in standalone problems
    pub export_com: Option<Vec<VarId>>,
    pub import_com: Option<Vec<VarId>>,
    pub balance: Vec<RowId>,
    pub export_cap: Vec<Option<RowId>>,
    pub import_cap: Vec<Option<RowId>>,
    pub devices: Vec<DeviceIndex>,
}

/// Where each quantity of the scenario lives inside the built LP.
#[derive(Debug, Clone)]
pub struct LowerLevelIndex {
    /// positions into `Scenario::entities`
    pub members: Vec<usize>,
    pub entities: Vec<EntityIndex>,
    pub peak: VarId,
    pub reserve_sym: VarId,
    pub community: Vec<Option<RowId>>,
    pub peak_def: Vec<RowId>,
    pub reserve_inc: Vec<RowId>,
    pub reserve_dec: Vec<RowId>,
}

fn add_var(lp: &mut LinearProgram, name: String, lower: LowerBound, obj: f64) -> VarId {
    lp.add_var(name, lower, obj)
        .expect("generated names are unique and coefficients finite")
}

fn add_row(
    lp: &mut LinearProgram,
    name: String,
    terms: Vec<(VarId, f64)>,
    rel: Relation,
    rhs: f64,
) -> RowId {
    lp.add_constraint(name, terms, rel, rhs)
        .expect("generated rows reference declared variables")
}

/// Builds the clearing LP over `members`. With `community == false` the single
/// member is solved alone: no community flows, and the peak and reserve
/// variables are that entity's own.
fn build(s: &Scenario, members: &[usize], community: bool) -> (LinearProgram, LowerLevelIndex) {
    let periods = s.periods();
    let dt = s.delta();
    let tf = &s.tariffs;
    let fee = tf.operator_fee;
    let mut lp = LinearProgram::new();
    let mut entities = Vec::with_capacity(members.len());

    // columns and device rows entity by entity; coupling rows afterwards
    for &ui in members {
        let e: &Entity = &s.entities[ui];
        let u = e.id.as_str();
        let per_t = |lp: &mut LinearProgram, fam: &str, obj: &dyn Fn(usize) -> f64| -> Vec<VarId> {
            (0..periods)
                .map(|t| add_var(lp, key(fam, u, "-", Some(t)), LowerBound::Zero, obj(t)))
                .collect()
        };
        let export_grid = per_t(&mut lp, "e_gri", &|t| tf.export[t]);
        let import_grid = per_t(&mut lp, "i_gri", &|t| -tf.import[t]);
        let (export_com, import_com) = if community {
            (
                Some(per_t(&mut lp, "e_com", &|_| -fee)),
                Some(per_t(&mut lp, "i_com", &|_| -fee)),
            )
        } else {
            (None, None)
        };

        let mut devices = Vec::with_capacity(e.devices.len());
        for d in &e.devices {
            let dev = d.id.as_str();
            let idx = match &d.spec {
                DeviceSpec::NonFlexibleLoad { .. } | DeviceSpec::NonSteerableGen { .. } => {
                    DeviceIndex::Passive
                }
                DeviceSpec::SheddableLoad {
                    consumption,
                    shed_cost,
                } => {
                    let shed: Vec<VarId> = (0..periods)
                        .map(|t| {
                            add_var(
                                &mut lp,
                                key("a_she", u, dev, Some(t)),
                                LowerBound::Zero,
                                -shed_cost[t] * consumption[t] * dt,
                            )
                        })
                        .collect();
                    let bound = (0..periods)
                        .map(|t| {
                            add_row(&mut lp, key("she_max", u, dev, Some(t)), vec![(shed[t], 1.0)], Relation::Le, 1.0)
                        })
                        .collect();
                    DeviceIndex::Sheddable { shed, bound }
                }
                DeviceSpec::SteerableGen {
                    production,
                    gen_cost,
                } => {
                    let steer: Vec<VarId> = (0..periods)
                        .map(|t| {
                            add_var(
                                &mut lp,
                                key("a_ste", u, dev, Some(t)),
                                LowerBound::Zero,
                                -gen_cost[t] * production[t] * dt,
                            )
                        })
                        .collect();
                    let bound = (0..periods)
                        .map(|t| {
                            add_row(&mut lp, key("ste_max", u, dev, Some(t)), vec![(steer[t], 1.0)], Relation::Le, 1.0)
                        })
                        .collect();
                    DeviceIndex::Steerable { steer, bound }
                }
                DeviceSpec::Storage(b) => {
                    let cha_w = b.p_charge * b.eff_charge;
                    let dis_w = b.p_discharge / b.eff_discharge;
                    let v = |lp: &mut LinearProgram, fam: &str, lower, obj: f64| -> Vec<VarId> {
                        (0..periods)
                            .map(|t| add_var(lp, key(fam, u, dev, Some(t)), lower, obj))
                            .collect()
                    };
                    let charge = v(&mut lp, "a_cha", LowerBound::Zero, -b.usage_fee * dt * cha_w);
                    let discharge = v(&mut lp, "a_dis", LowerBound::Zero, -b.usage_fee * dt * dis_w);
                    let soc = v(&mut lp, "soc", LowerBound::Free, 0.0);
                    let reserve_up = v(&mut lp, "r_up", LowerBound::Zero, 0.0);
                    let reserve_down = v(&mut lp, "r_down", LowerBound::Zero, 0.0);
                    let mut rows = |fam: &str, f: &dyn Fn(usize) -> (Vec<(VarId, f64)>, f64)| -> Vec<RowId> {
                        (0..periods)
                            .map(|t| {
                                let (terms, rhs) = f(t);
                                add_row(&mut lp, key(fam, u, dev, Some(t)), terms, Relation::Le, rhs)
                            })
                            .collect()
                    };
                    let charge_max = rows("cha_max", &|t| (vec![(charge[t], 1.0)], 1.0));
                    let discharge_max = rows("dis_max", &|t| (vec![(discharge[t], 1.0)], 1.0));
                    let soc_max = rows("soc_max", &|t| (vec![(soc[t], 1.0)], b.cap_max));
                    let soc_min = rows("soc_min", &|t| (vec![(soc[t], -1.0)], -b.cap_min));
                    let up = b.eff_discharge / dt;
                    let down = 1.0 / (b.eff_charge * dt);
                    let kappa_up = rows("r_up_soc", &|t| {
                        (vec![(reserve_up[t], 1.0), (soc[t], -up)], -b.cap_min * up)
                    });
                    let phi_res_up = rows("r_up_pow", &|t| {
                        (vec![(reserve_up[t], 1.0), (discharge[t], b.p_discharge)], b.p_discharge)
                    });
                    let kappa_down = rows("r_down_soc", &|t| {
                        (vec![(reserve_down[t], 1.0), (soc[t], down)], b.cap_max * down)
                    });
                    let phi_res_down = rows("r_down_pow", &|t| {
                        (vec![(reserve_down[t], 1.0), (charge[t], b.p_charge)], b.p_charge)
                    });
                    let dynamics = (0..periods)
                        .map(|t| {
                            let mut terms = vec![
                                (soc[t], 1.0),
                                (charge[t], -dt * cha_w),
                                (discharge[t], dt * dis_w),
                            ];
                            let rhs = if t == 0 {
                                b.soc_init
                            } else {
                                terms.push((soc[t - 1], -1.0));
                                0.0
                            };
                            add_row(&mut lp, key("soc_dyn", u, dev, Some(t)), terms, Relation::Eq, rhs)
                        })
                        .collect();
                    let terminal = add_row(
                        &mut lp,
                        key("soc_end", u, dev, None),
                        vec![(soc[periods - 1], 1.0)],
                        Relation::Eq,
                        b.soc_final,
                    );
                    DeviceIndex::Storage(Box::new(StorageIndex {
                        charge,
                        discharge,
                        soc,
                        reserve_up,
                        reserve_down,
                        charge_max,
                        discharge_max,
                        soc_max,
                        soc_min,
                        dynamics,
                        terminal,
                        kappa_up,
                        phi_res_up,
                        kappa_down,
                        phi_res_down,
                    }))
                }
            };
            devices.push(idx);
        }

        // balance: exports and consumption on the left, imports and production
        // moved to the right; the fixed parts form the right-hand side
        let balance = (0..periods)
            .map(|t| {
                let mut terms = vec![(export_grid[t], 1.0), (import_grid[t], -1.0)];
                if let (Some(ec), Some(ic)) = (&export_com, &import_com) {
                    terms.push((ec[t], 1.0));
                    terms.push((ic[t], -1.0));
                }
                let mut rhs = 0.0;
                for (d, idx) in e.devices.iter().zip(&devices) {
                    match (&d.spec, idx) {
                        (DeviceSpec::NonFlexibleLoad { consumption }, _) => rhs -= dt * consumption[t],
                        (DeviceSpec::NonSteerableGen { production }, _) => rhs += dt * production[t],
                        (DeviceSpec::SheddableLoad { consumption, .. }, DeviceIndex::Sheddable { shed, .. }) => {
                            rhs -= dt * consumption[t];
                            terms.push((shed[t], -dt * consumption[t]));
                        }
                        (DeviceSpec::SteerableGen { production, .. }, DeviceIndex::Steerable { steer, .. }) => {
                            terms.push((steer[t], -dt * production[t]));
                        }
                        (DeviceSpec::Storage(b), DeviceIndex::Storage(si)) => {
                            terms.push((si.charge[t], dt * b.p_charge));
                            terms.push((si.discharge[t], -dt * b.p_discharge));
                        }
                        _ => unreachable!("device index follows device kind"),
                    }
                }
                add_row(&mut lp, key("balance", u, "-", Some(t)), terms, Relation::Eq, rhs)
            })
            .collect();
        let cap_rows = |lp: &mut LinearProgram, fam: &str, cap: &Option<Vec<f64>>, sign: f64| -> Vec<Option<RowId>> {
            (0..periods)
                .map(|t| {
                    cap.as_ref().map(|c| {
                        add_row(
                            lp,
                            key(fam, u, "-", Some(t)),
                            vec![(export_grid[t], sign / dt), (import_grid[t], -sign / dt)],
                            Relation::Le,
                            c[t],
                        )
                    })
                })
                .collect()
        };
        let export_cap = cap_rows(&mut lp, "export_cap", &e.export_cap, 1.0);
        let import_cap = cap_rows(&mut lp, "import_cap", &e.import_cap, -1.0);
        entities.push(EntityIndex {
            export_grid,
            import_grid,
            export_com,
            import_com,
            balance,
            export_cap,
            import_cap,
            devices,
        });
    }

    let owner = if community {
        "-".to_string()
    } else {
        s.entities[members[0]].id.clone()
    };
    let peak = add_var(&mut lp, key("peak", &owner, "-", None), LowerBound::Zero, -tf.peak);
    let reserve_sym = add_var(&mut lp, key("r_sym", &owner, "-", None), LowerBound::Zero, tf.reserve);

    let community_rows = (0..periods)
        .map(|t| {
            if !community || entities.is_empty() {
                return None;
            }
            let mut terms = Vec::new();
            for ix in &entities {
                terms.push((ix.import_com.as_ref().unwrap()[t], 1.0));
                terms.push((ix.export_com.as_ref().unwrap()[t], -1.0));
            }
            Some(add_row(&mut lp, key("community", "-", "-", Some(t)), terms, Relation::Eq, 0.0))
        })
        .collect();
    let peak_def = (0..periods)
        .map(|t| {
            let mut terms = Vec::new();
            for ix in &entities {
                terms.push((ix.import_grid[t], 1.0 / dt));
                terms.push((ix.export_grid[t], -1.0 / dt));
            }
            terms.push((peak, -1.0));
            add_row(&mut lp, key("peak_def", &owner, "-", Some(t)), terms, Relation::Le, 0.0)
        })
        .collect();

    // r_sym <= sum of upward (resp. downward) headroom
    let mut reserve_inc = Vec::with_capacity(periods);
    let mut reserve_dec = Vec::with_capacity(periods);
    for t in 0..periods {
        let mut inc = vec![(reserve_sym, 1.0)];
        let mut dec = vec![(reserve_sym, 1.0)];
        let mut inc_rhs = 0.0;
        for (&ui, ix) in members.iter().zip(&entities) {
            for (d, idx) in s.entities[ui].devices.iter().zip(&ix.devices) {
                match (&d.spec, idx) {
                    (DeviceSpec::SheddableLoad { consumption, .. }, DeviceIndex::Sheddable { shed, .. }) => {
                        inc.push((shed[t], consumption[t]));
                        inc_rhs += consumption[t];
                        dec.push((shed[t], -consumption[t]));
                    }
                    (DeviceSpec::SteerableGen { production, .. }, DeviceIndex::Steerable { steer, .. }) => {
                        inc.push((steer[t], production[t]));
                        inc_rhs += production[t];
                        dec.push((steer[t], -production[t]));
                    }
                    (DeviceSpec::Storage(_), DeviceIndex::Storage(si)) => {
                        inc.push((si.reserve_up[t], -1.0));
                        dec.push((si.reserve_down[t], -1.0));
                    }
                    _ => {}
                }
            }
        }
        reserve_inc.push(add_row(&mut lp, key("r_sym_inc", &owner, "-", Some(t)), inc, Relation::Le, inc_rhs));
        reserve_dec.push(add_row(&mut lp, key("r_sym_dec", &owner, "-", Some(t)), dec, Relation::Le, 0.0));
    }

    let index = LowerLevelIndex {
        members: members.to_vec(),
        entities,
        peak,
        reserve_sym,
        community: community_rows,
        peak_def,
        reserve_inc,
        reserve_dec,
    };
    (lp, index)
}

/// The community clearing LP and the map from scenario quantities to its columns and rows.
pub fn build_lower_level(s: &Scenario) -> (LinearProgram, LowerLevelIndex) {
    let members: Vec<usize> = (0..s.entities.len()).collect();
    build(s, &members, true)
}

/// The problem entity `u` would solve alone.
pub fn build_individual(s: &Scenario, u: &str) -> Result<(LinearProgram, LowerLevelIndex), MarketError> {
    let ui = s
        .entity_index(u)
        .ok_or_else(|| MarketError::UnknownEntity(u.to_string()))?;
    Ok(build(s, &[ui], false))
}

// ---------------------------------------------------------------------------
// outcome

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceState {
    Passive,
    Sheddable {
        shed: Vec<f64>,
        phi_shed: Vec<f64>,
    },
    Steerable {
        steer: Vec<f64>,
        phi_steer: Vec<f64>,
    },
    Storage(Box<StorageState>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageState {
    pub charge: Vec<f64>,
    pub discharge: Vec<f64>,
    pub soc: Vec<f64>,
    pub reserve_up: Vec<f64>,
    pub reserve_down: Vec<f64>,
    pub phi_charge: Vec<f64>,
    pub phi_discharge: Vec<f64>,
    pub phi_soc_up: Vec<f64>,
    pub phi_soc_lo: Vec<f64>,
    /// duals of the state-of-charge dynamics, `t = 1` being the initial condition
    pub sigma: Vec<f64>,
    pub zeta: f64,
    pub kappa_up: Vec<f64>,
    pub kappa_down: Vec<f64>,
    pub phi_res_up: Vec<f64>,
    pub phi_res_down: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceOutcome {
    pub id: String,
    pub state: DeviceState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityOutcome {
    pub id: String,
    pub export_grid: Vec<f64>,
    pub import_grid: Vec<f64>,
    pub export_com: Vec<f64>,
    pub import_com: Vec<f64>,
    /// dual of the entity balance: the price the entity trades at internally
    pub price_com: Vec<f64>,
    pub phi_export_cap: Vec<f64>,
    pub phi_import_cap: Vec<f64>,
    pub devices: Vec<DeviceOutcome>,
}

/// Primal and dual optimum of a clearing problem (community or standalone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    /// optimal objective `J*`
    pub welfare: f64,
    pub peak: f64,
    pub reserve_sym: f64,
    /// community-balance dual per period
    pub price_bus: Vec<f64>,
    pub phi_peak: Vec<f64>,
    pub rho_inc: Vec<f64>,
    pub rho_dec: Vec<f64>,
    pub entities: Vec<EntityOutcome>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MarketOutcome {
    pub fn entity(&self, id: &str) -> Option<&EntityOutcome> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// All primal values keyed by the naming scheme.
    pub fn named_primal(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert(key("peak", "-", "-", None), self.peak);
        m.insert(key("r_sym", "-", "-", None), self.reserve_sym);
        for e in &self.entities {
            let u = e.id.as_str();
            for (fam, v) in [
                ("e_gri", &e.export_grid),
                ("i_gri", &e.import_grid),
                ("e_com", &e.export_com),
                ("i_com", &e.import_com),
            ] {
                insert_series(&mut m, fam, u, "-", v);
            }
            for d in &e.devices {
                let dev = d.id.as_str();
                match &d.state {
                    DeviceState::Passive => {}
                    DeviceState::Sheddable { shed, .. } => insert_series(&mut m, "a_she", u, dev, shed),
                    DeviceState::Steerable { steer, .. } => insert_series(&mut m, "a_ste", u, dev, steer),
                    DeviceState::Storage(b) => {
                        for (fam, v) in [
                            ("a_cha", &b.charge),
                            ("a_dis", &b.discharge),
                            ("soc", &b.soc),
                            ("r_up", &b.reserve_up),
                            ("r_down", &b.reserve_down),
                        ] {
                            insert_series(&mut m, fam, u, dev, v);
                        }
                    }
                }
            }
        }
        m
    }

    /// All dual values keyed by the name of the row they price.
    pub fn named_duals(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        insert_series(&mut m, "community", "-", "-", &self.price_bus);
        insert_series(&mut m, "peak_def", "-", "-", &self.phi_peak);
        insert_series(&mut m, "r_sym_inc", "-", "-", &self.rho_inc);
        insert_series(&mut m, "r_sym_dec", "-", "-", &self.rho_dec);
        for e in &self.entities {
            let u = e.id.as_str();
            insert_series(&mut m, "balance", u, "-", &e.price_com);
            insert_series(&mut m, "export_cap", u, "-", &e.phi_export_cap);
            insert_series(&mut m, "import_cap", u, "-", &e.phi_import_cap);
            for d in &e.devices {
                let dev = d.id.as_str();
                match &d.state {
                    DeviceState::Passive => {}
                    DeviceState::Sheddable { phi_shed, .. } => insert_series(&mut m, "she_max", u, dev, phi_shed),
                    DeviceState::Steerable { phi_steer, .. } => insert_series(&mut m, "ste_max", u, dev, phi_steer),
                    DeviceState::Storage(b) => {
                        for (fam, v) in [
                            ("cha_max", &b.phi_charge),
                            ("dis_max", &b.phi_discharge),
                            ("soc_max", &b.phi_soc_up),
                            ("soc_min", &b.phi_soc_lo),
                            ("soc_dyn", &b.sigma),
                            ("r_up_soc", &b.kappa_up),
                            ("r_up_pow", &b.phi_res_up),
                            ("r_down_soc", &b.kappa_down),
                            ("r_down_pow", &b.phi_res_down),
                        ] {
                            insert_series(&mut m, fam, u, dev, v);
                        }
                        m.insert(key("soc_end", u, dev, None), b.zeta);
                    }
                }
            }
        }
        m
    }
}

fn insert_series(m: &mut BTreeMap<String, f64>, fam: &str, u: &str, d: &str, v: &[f64]) {
    for (t, x) in v.iter().enumerate() {
        m.insert(key(fam, u, d, Some(t)), *x);
    }
}

fn problem_name(s: &Scenario, ix: &LowerLevelIndex, community: bool) -> String {
    if community {
        "community clearing problem".to_string()
    } else {
        format!("standalone problem of entity `{}`", s.entities[ix.members[0]].id)
    }
}

/// Arithmetic suspects for an infeasible instance (finite caps too tight for the
/// fixed load or production).
fn infeasibility_hints(s: &Scenario, members: &[usize]) -> Vec<String> {
    let mut hints = Vec::new();
    for &ui in members {
        let e = &s.entities[ui];
        for t in 0..s.periods() {
            let mut must_import = 0.0;
            let mut can_cover = 0.0;
            for d in &e.devices {
                match &d.spec {
                    DeviceSpec::NonFlexibleLoad { consumption } => must_import += consumption[t],
                    DeviceSpec::NonSteerableGen { production } => must_import -= production[t],
                    DeviceSpec::SheddableLoad { consumption, .. } => can_cover += consumption[t],
                    DeviceSpec::SteerableGen { production, .. } => can_cover += production[t],
                    DeviceSpec::Storage(b) => can_cover += b.p_discharge.max(b.p_charge),
                }
            }
            if let Some(cap) = &e.import_cap {
                if must_import - can_cover > cap[t] + 1e-9 {
                    hints.push(format!("entity `{}` period {}: import cap {} below net load", e.id, t + 1, cap[t]));
                }
            }
            if let Some(cap) = &e.export_cap {
                if -must_import - can_cover > cap[t] + 1e-9 {
                    hints.push(format!("entity `{}` period {}: export cap {} below surplus", e.id, t + 1, cap[t]));
                }
            }
        }
        for d in &e.devices {
            if let DeviceSpec::Storage(b) = &d.spec {
                hints.push(format!(
                    "storage `{}/{}` must move from {} to {} kWh",
                    e.id, d.id, b.soc_init, b.soc_final
                ));
            }
        }
    }
    hints
}

fn solve_built(
    s: &Scenario,
    lp: &LinearProgram,
    ix: &LowerLevelIndex,
    community: bool,
    tol: f64,
) -> Result<MarketOutcome, MarketError> {
    let sol = lp::solve(lp, tol).map_err(|source| MarketError::Solver {
        problem: problem_name(s, ix, community),
        source,
    })?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(MarketError::Infeasible {
                problem: problem_name(s, ix, community),
                hints: infeasibility_hints(s, &ix.members),
            })
        }
        LpStatus::Unbounded => {
            return Err(MarketError::Unbounded {
                problem: problem_name(s, ix, community),
            })
        }
    }
    let x = |v: VarId| sol.primal[v.0];
    let y = |r: RowId| sol.duals[r.0];
    let xs = |v: &[VarId]| v.iter().map(|&v| x(v)).collect::<Vec<_>>();
    let ys = |r: &[RowId]| r.iter().map(|&r| y(r)).collect::<Vec<_>>();
    let yo = |r: &[Option<RowId>]| r.iter().map(|r| r.map_or(0.0, y)).collect::<Vec<_>>();
    let periods = s.periods();

    let mut entities = Vec::with_capacity(ix.members.len());
    for (&ui, ex) in ix.members.iter().zip(&ix.entities) {
        let e = &s.entities[ui];
        let devices = e
            .devices
            .iter()
            .zip(&ex.devices)
            .map(|(d, di)| DeviceOutcome {
                id: d.id.clone(),
                state: match di {
                    DeviceIndex::Passive => DeviceState::Passive,
                    DeviceIndex::Sheddable { shed, bound } => DeviceState::Sheddable {
                        shed: xs(shed),
                        phi_shed: ys(bound),
                    },
                    DeviceIndex::Steerable { steer, bound } => DeviceState::Steerable {
                        steer: xs(steer),
                        phi_steer: ys(bound),
                    },
                    DeviceIndex::Storage(si) => DeviceState::Storage(Box::new(StorageState {
                        charge: xs(&si.charge),
                        discharge: xs(&si.discharge),
                        soc: xs(&si.soc),
                        reserve_up: xs(&si.reserve_up),
                        reserve_down: xs(&si.reserve_down),
                        phi_charge: ys(&si.charge_max),
                        phi_discharge: ys(&si.discharge_max),
                        phi_soc_up: ys(&si.soc_max),
                        phi_soc_lo: ys(&si.soc_min),
                        sigma: ys(&si.dynamics),
                        zeta: y(si.terminal),
                        kappa_up: ys(&si.kappa_up),
                        kappa_down: ys(&si.kappa_down),
                        phi_res_up: ys(&si.phi_res_up),
                        phi_res_down: ys(&si.phi_res_down),
                    })),
                },
            })
            .collect();
        entities.push(EntityOutcome {
            id: e.id.clone(),
            export_grid: xs(&ex.export_grid),
            import_grid: xs(&ex.import_grid),
            export_com: ex.export_com.as_deref().map_or(vec![0.0; periods], &xs),
            import_com: ex.import_com.as_deref().map_or(vec![0.0; periods], &xs),
            price_com: ys(&ex.balance),
            phi_export_cap: yo(&ex.export_cap),
            phi_import_cap: yo(&ex.import_cap),
            devices,
        });
    }

    let mut reserve_sym = x(ix.reserve_sym);
    if s.tariffs.reserve == 0.0 {
        // r_sym has no value then; report the (still optimal) zero reserve
        reserve_sym = 0.0;
    }
    let mut out = MarketOutcome {
        welfare: sol.objective_value,
        peak: x(ix.peak),
        reserve_sym,
        price_bus: yo(&ix.community),
        phi_peak: ys(&ix.peak_def),
        rho_inc: ys(&ix.reserve_inc),
        rho_dec: ys(&ix.reserve_dec),
        entities,
        warnings: s.warnings(),
    };
    out.warnings.extend(simultaneous_storage(&out, 1e-9));
    Ok(out)
}

fn simultaneous_storage(out: &MarketOutcome, tol: f64) -> Vec<String> {
    let mut w = Vec::new();
    for e in &out.entities {
        for d in &e.devices {
            if let DeviceState::Storage(b) = &d.state {
                for (t, (c, dis)) in b.charge.iter().zip(&b.discharge).enumerate() {
                    if c * dis > tol * tol {
                        w.push(format!(
                            "storage `{}/{}` charges ({c:.6}) and discharges ({dis:.6}) in period {}",
                            e.id,
                            d.id,
                            t + 1
                        ));
                    }
                }
            }
        }
    }
    w
}

/// Solves the community clearing problem.
pub fn clear_market(s: &Scenario, tol: f64) -> Result<MarketOutcome, MarketError> {
    s.validate()?;
    let (lp, ix) = build_lower_level(s);
    solve_built(s, &lp, &ix, true, tol)
}

/// Solves entity `u`'s standalone problem; the outcome has one entity and
/// zero community flows.
pub fn clear_individual(s: &Scenario, u: &str, tol: f64) -> Result<MarketOutcome, MarketError> {
    let (lp, ix) = build_individual(s, u)?;
    solve_built(s, &lp, &ix, false, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandaloneProfit {
    pub j_su: f64,
    pub j_su_energy: f64,
    pub j_su_peak: f64,
    pub j_su_reserve: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandaloneProfits {
    /// `(entity id, profit)` in scenario order
    pub entities: Vec<(String, StandaloneProfit)>,
}

impl StandaloneProfits {
    pub fn get(&self, id: &str) -> Option<&StandaloneProfit> {
        self.entities.iter().find(|(u, _)| u == id).map(|(_, p)| p)
    }

    pub fn total(&self) -> f64 {
        self.entities.iter().map(|(_, p)| p.j_su).sum()
    }
}

/// Energy part of an entity's profit for given executed quantities, with
/// community exchanges valued at `price_com` (pass fee-inclusive costs instead
/// by setting `fee`).
pub(crate) fn energy_terms(s: &Scenario, e: &Entity, o: &EntityOutcome, fee: Option<f64>) -> f64 {
    let dt = s.delta();
    let tf = &s.tariffs;
    let mut j = 0.0;
    for t in 0..s.periods() {
        j += tf.export[t] * o.export_grid[t] - tf.import[t] * o.import_grid[t];
        j += match fee {
            Some(g) => -g * (o.export_com[t] + o.import_com[t]),
            None => o.price_com[t] * (o.export_com[t] - o.import_com[t]),
        };
        for (d, dout) in e.devices.iter().zip(&o.devices) {
            match (&d.spec, &dout.state) {
                (DeviceSpec::SheddableLoad { consumption, shed_cost }, DeviceState::Sheddable { shed, .. }) => {
                    j -= shed_cost[t] * consumption[t] * dt * shed[t];
                }
                (DeviceSpec::SteerableGen { production, gen_cost }, DeviceState::Steerable { steer, .. }) => {
                    j -= gen_cost[t] * production[t] * dt * steer[t];
                }
                (DeviceSpec::Storage(b), DeviceState::Storage(st)) => {
                    j -= b.usage_fee
                        * dt
                        * (b.p_charge * b.eff_charge * st.charge[t]
                            + b.p_discharge / b.eff_discharge * st.discharge[t]);
                }
                _ => {}
            }
        }
    }
    j
}

/// `J^SU` of every entity, split into energy, peak and reserve parts.
pub fn standalone_profits(s: &Scenario, tol: f64) -> Result<StandaloneProfits, MarketError> {
    s.validate()?;
    let mut entities = Vec::with_capacity(s.entities.len());
    for e in &s.entities {
        let out = clear_individual(s, &e.id, tol)?;
        let energy = energy_terms(s, e, &out.entities[0], Some(0.0));
        let peak = -s.tariffs.peak * out.peak;
        let reserve = s.tariffs.reserve * out.reserve_sym;
        entities.push((
            e.id.clone(),
            StandaloneProfit {
                j_su: out.welfare,
                j_su_energy: energy,
                j_su_peak: peak,
                j_su_reserve: reserve,
            },
        ));
    }
    Ok(StandaloneProfits { entities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{TimeGrid, Tariffs};

    fn excess_generation() -> Scenario {
        Scenario {
            time: TimeGrid {
                periods: 1,
                delta_hours: 1.0,
            },
            tariffs: Tariffs {
                import: vec![0.15],
                export: vec![0.035],
                peak: 0.15,
                reserve: 0.0,
                operator_fee: 0.01,
            },
            entities: vec![
                Entity::new("1").with_device("load", DeviceSpec::NonFlexibleLoad { consumption: vec![3.0] }),
                Entity::new("2").with_device("gen", DeviceSpec::NonSteerableGen { production: vec![5.0] }),
            ],
        }
    }

    #[test]
    fn lower_level_shape() {
        let (lp, ix) = build_lower_level(&excess_generation());
        for u in ["1", "2"] {
            for fam in ["e_gri", "i_gri", "e_com", "i_com"] {
                assert!(lp.var(&key(fam, u, "-", Some(0))).is_some());
            }
            assert!(lp.row(&key("balance", u, "-", Some(0))).is_some());
        }
        assert!(lp.var("peak/-/-/-").is_some());
        assert!(lp.row("community/-/-/1").is_some());
        assert!(lp.row("peak_def/-/-/1").is_some());
        // 8 flows + peak + reserve; 2 balances, community, peak, two reserve rows
        assert_eq!(lp.num_vars(), 10);
        assert_eq!(lp.num_rows(), 6);
        assert!(ix.entities[0].export_cap[0].is_none());
    }

    #[test]
    fn standalone_has_no_community_flows() {
        let s = excess_generation();
        let (lp, _) = build_individual(&s, "1").unwrap();
        assert!(lp.var("e_com/1/-/1").is_none());
        assert!(lp.row("community/-/-/1").is_none());
        assert!(lp.var("peak/1/-/-").is_some());
        assert!(matches!(build_individual(&s, "9"), Err(MarketError::UnknownEntity(_))));
    }

    #[test]
    fn energy_balance_listing() {
        let (lp, _) = build_lower_level(&excess_generation());
        let text = lp.to_string();
        assert!(
            text.contains("balance/1/-/1: e_gri/1/-/1 - i_gri/1/-/1 + e_com/1/-/1 - i_com/1/-/1 = -3"),
            "{text}"
        );
    }
}
