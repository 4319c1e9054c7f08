use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use microgrid_market::market::{
    clear_market, standalone_profits, DeviceState, MarketError, MarketOutcome, StandaloneProfits,
};
use microgrid_market::scenario::{load_scenario, split_days, DeviceSpec, Scenario};
use microgrid_market::sharing::{solve_sharing, SharingError, SharingOutcome};
use microgrid_market::verify::{verify_all, VerificationReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, write_monthly_csv};
use crate::files::{create_dir, csv_text, write_atomic, write_json};
use crate::CliError;

/// Process exit status; the numeric codes are part of the CLI contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exit {
    Ok = 0,
    Infeasible = 1,
    VerificationFailed = 2,
    Input = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub out_dir: PathBuf,
    pub tol: f64,
    pub emit_duals: bool,
    pub verify: bool,
    /// split the horizon into this many days of equal length
    pub days: Option<usize>,
    /// day-boundary state of charge as a fraction of each storage's capacity
    pub soc_fraction: f64,
    /// worker threads; `None` uses one per core
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(scenario: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            scenario: scenario.into(),
            out_dir: out_dir.into(),
            tol: microgrid_market::lp::DEFAULT_TOL,
            emit_duals: false,
            verify: false,
            days: None,
            soc_fraction: 0.5,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayStatus {
    Ok,
    /// clearing or sharing has no feasible solution
    Infeasible,
    /// the solver gave up (iteration limit or numerical failure)
    SolverFailed,
    VerificationFailed,
}

impl DayStatus {
    pub fn exit(self) -> Exit {
        match self {
            DayStatus::Ok => Exit::Ok,
            DayStatus::Infeasible | DayStatus::SolverFailed => Exit::Infeasible,
            DayStatus::VerificationFailed => Exit::VerificationFailed,
        }
    }
}

/// Per-entity money flows that are not part of the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCosts {
    pub id: String,
    pub storage_cost: f64,
    pub operator_fee: f64,
}

/// Everything produced for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    /// 1-based day number within the horizon
    pub day: usize,
    pub status: DayStatus,
    pub error: Option<String>,
    pub outcome: Option<MarketOutcome>,
    pub standalone: Option<StandaloneProfits>,
    pub sharing: Option<SharingOutcome>,
    pub costs: Vec<EntityCosts>,
    pub verification: Option<VerificationReport>,
    pub duals: Option<BTreeMap<String, f64>>,
}

impl DayRecord {
    fn failed(day: usize, status: DayStatus, error: String) -> Self {
        DayRecord {
            day,
            status,
            error: Some(error),
            outcome: None,
            standalone: None,
            sharing: None,
            costs: Vec::new(),
            verification: None,
            duals: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<DayRecord>,
    pub exit: Exit,
}

fn market_status(e: &MarketError) -> DayStatus {
    match e {
        MarketError::Infeasible { .. } | MarketError::Unbounded { .. } => DayStatus::Infeasible,
        _ => DayStatus::SolverFailed,
    }
}

fn costs(s: &Scenario, out: &MarketOutcome) -> Vec<EntityCosts> {
    let dt = s.delta();
    let fee = s.tariffs.operator_fee;
    s.entities
        .iter()
        .zip(&out.entities)
        .map(|(e, o)| {
            let mut storage_cost = 0.0;
            for (d, od) in e.devices.iter().zip(&o.devices) {
                if let (DeviceSpec::Storage(b), DeviceState::Storage(st)) = (&d.spec, &od.state) {
                    for t in 0..s.periods() {
                        storage_cost += b.usage_fee
                            * dt
                            * (b.p_charge * b.eff_charge * st.charge[t]
                                + b.p_discharge / b.eff_discharge * st.discharge[t]);
                    }
                }
            }
            let traded: f64 = o.export_com.iter().chain(&o.import_com).sum();
            EntityCosts {
                id: e.id.clone(),
                storage_cost,
                operator_fee: fee * traded,
            }
        })
        .collect()
}

/// The full cascade for one day: standalone problems, clearing, sharing and
/// (optionally) verification.
pub fn solve_day(s: &Scenario, day: usize, tol: f64, verify: bool, emit_duals: bool) -> DayRecord {
    let su = match standalone_profits(s, tol) {
        Ok(su) => su,
        Err(e) => return DayRecord::failed(day, market_status(&e), e.to_string()),
    };
    let out = match clear_market(s, tol) {
        Ok(out) => out,
        Err(e) => return DayRecord::failed(day, market_status(&e), e.to_string()),
    };
    let (sharing, mut status, error) = match solve_sharing(&out, &su, s, tol) {
        Ok(sh) => (Some(sh), DayStatus::Ok, None),
        Err(e @ SharingError::Infeasible { .. }) => (None, DayStatus::Infeasible, Some(e.to_string())),
        Err(e) => (None, DayStatus::SolverFailed, Some(e.to_string())),
    };
    let verification = verify.then(|| verify_all(s, &out, sharing.as_ref().map(|sh| (sh, &su)), tol));
    if status == DayStatus::Ok && verification.as_ref().is_some_and(|r| !r.passed()) {
        status = DayStatus::VerificationFailed;
    }
    DayRecord {
        day,
        status,
        error,
        costs: costs(s, &out),
        duals: emit_duals.then(|| out.named_duals()),
        outcome: Some(out),
        standalone: Some(su),
        sharing,
        verification,
    }
}

pub fn day_file(day: usize) -> String {
    format!("day_{day:03}.json")
}

const LEDGER_HEADER: [&str; 11] = [
    "day",
    "entity",
    "j",
    "j_su",
    "gain",
    "j_energy",
    "j_reserve",
    "j_peak",
    "reserve_share",
    "peak_share",
    "alpha",
];

fn ledger_csv(records: &[DayRecord]) -> Vec<u8> {
    let rows = records.iter().flat_map(|r| {
        r.sharing.iter().flat_map(move |sh| {
            sh.entities.iter().map(move |e| {
                vec![
                    r.day.to_string(),
                    e.id.clone(),
                    e.j_total.to_string(),
                    e.j_su.to_string(),
                    e.gain().to_string(),
                    e.j_energy.to_string(),
                    e.j_reserve.to_string(),
                    e.j_peak.to_string(),
                    e.reserve_share.to_string(),
                    e.peak_share.to_string(),
                    sh.alpha.to_string(),
                ]
            })
        })
    });
    csv_text(&LEDGER_HEADER, rows)
}

fn write_outputs(out_dir: &Path, records: &[DayRecord]) -> Result<(), CliError> {
    for r in records {
        write_json(&out_dir.join(day_file(r.day)), r)?;
    }
    write_atomic(&out_dir.join("ledger.csv"), &ledger_csv(records))?;
    let agg = aggregate(records);
    write_monthly_csv(&out_dir.join("monthly.csv"), &agg)?;
    write_json(&out_dir.join("summary.json"), &agg)
}

/// Solves every day of `config.scenario` and writes all artifacts. A failing
/// day does not stop the others; it only raises the exit status.
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    let scenario = load_scenario(&config.scenario)?;
    let days = match config.days {
        Some(n) => split_days(&scenario, n, config.soc_fraction)?,
        None => vec![scenario],
    };
    create_dir(&config.out_dir)?;
    let solve = || -> Vec<DayRecord> {
        days.par_iter()
            .enumerate()
            .map(|(i, s)| solve_day(s, i + 1, config.tol, config.verify, config.emit_duals))
            .collect()
    };
    let records = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(solve),
        None => solve(),
    };
    write_outputs(&config.out_dir, &records)?;
    let exit = records.iter().map(|r| r.status.exit()).max().unwrap_or(Exit::Ok);
    Ok(RunSummary { records, exit })
}
