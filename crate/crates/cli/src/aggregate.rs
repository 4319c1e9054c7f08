//! Monthly and yearly summaries over a horizon of day records.
//!
//! Days are laid on a calendar of 365-day years starting on January 1st.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::files::{csv_text, read_json, write_atomic};
use crate::run::DayRecord;
use crate::CliError;

/// Row key used for the whole community.
pub const COMMUNITY: &str = "community";

const MONTH_DAYS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// `(year, month)`, both 1-based, of 1-based day `day`.
pub fn calendar(day: usize) -> (usize, usize) {
    let d = day - 1;
    let year = d / 365 + 1;
    let mut left = d % 365;
    for (m, len) in MONTH_DAYS.iter().enumerate() {
        if left < *len {
            return (year, m + 1);
        }
        left -= len;
    }
    unreachable!("day of year below 365")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRow {
    pub year: usize,
    /// `None` for yearly rows
    pub month: Option<usize>,
    pub entity: String,
    pub gain: f64,
    pub storage_cost: f64,
    pub operator_fee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyGain {
    pub day: usize,
    pub entity: String,
    pub j: f64,
    pub j_su: f64,
    pub gain: f64,
    /// relative to `|J_SU|`; undefined when the standalone profit is zero
    pub percent_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub monthly: Vec<PeriodRow>,
    pub yearly: Vec<PeriodRow>,
    pub daily: Vec<DailyGain>,
    /// days without a complete cascade, left out of every sum
    pub skipped_days: Vec<usize>,
}

#[derive(Default, Clone, Copy)]
struct Sums {
    gain: f64,
    storage_cost: f64,
    operator_fee: f64,
}

fn percent(gain: f64, j_su: f64) -> Option<f64> {
    (j_su != 0.0).then(|| 100.0 * gain / j_su.abs())
}

pub fn aggregate(records: &[DayRecord]) -> Aggregate {
    let mut sorted: Vec<&DayRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.day);
    // keyed by (year, month, entity order, entity); community sorts last
    let mut months: BTreeMap<(usize, usize, usize, String), Sums> = BTreeMap::new();
    let mut daily = Vec::new();
    let mut skipped_days = Vec::new();
    for r in sorted {
        let Some(sh) = &r.sharing else {
            skipped_days.push(r.day);
            continue;
        };
        let (year, month) = calendar(r.day);
        let mut community = Sums::default();
        let (mut j_all, mut su_all) = (0.0, 0.0);
        for (k, e) in sh.entities.iter().enumerate() {
            let c = r.costs.iter().find(|c| c.id == e.id);
            let sums = Sums {
                gain: e.gain(),
                storage_cost: c.map_or(0.0, |c| c.storage_cost),
                operator_fee: c.map_or(0.0, |c| c.operator_fee),
            };
            let slot = months.entry((year, month, k, e.id.clone())).or_default();
            slot.gain += sums.gain;
            slot.storage_cost += sums.storage_cost;
            slot.operator_fee += sums.operator_fee;
            community.gain += sums.gain;
            community.storage_cost += sums.storage_cost;
            community.operator_fee += sums.operator_fee;
            j_all += e.j_total;
            su_all += e.j_su;
            daily.push(DailyGain {
                day: r.day,
                entity: e.id.clone(),
                j: e.j_total,
                j_su: e.j_su,
                gain: e.gain(),
                percent_gain: percent(e.gain(), e.j_su),
            });
        }
        let slot = months
            .entry((year, month, usize::MAX, COMMUNITY.to_string()))
            .or_default();
        slot.gain += community.gain;
        slot.storage_cost += community.storage_cost;
        slot.operator_fee += community.operator_fee;
        daily.push(DailyGain {
            day: r.day,
            entity: COMMUNITY.to_string(),
            j: j_all,
            j_su: su_all,
            gain: j_all - su_all,
            percent_gain: percent(j_all - su_all, su_all),
        });
    }

    let mut years: BTreeMap<(usize, usize, String), Sums> = BTreeMap::new();
    let mut monthly = Vec::with_capacity(months.len());
    for ((year, month, k, entity), s) in months {
        let y = years.entry((year, k, entity.clone())).or_default();
        y.gain += s.gain;
        y.storage_cost += s.storage_cost;
        y.operator_fee += s.operator_fee;
        monthly.push(PeriodRow {
            year,
            month: Some(month),
            entity,
            gain: s.gain,
            storage_cost: s.storage_cost,
            operator_fee: s.operator_fee,
        });
    }
    let yearly = years
        .into_iter()
        .map(|((year, _, entity), s)| PeriodRow {
            year,
            month: None,
            entity,
            gain: s.gain,
            storage_cost: s.storage_cost,
            operator_fee: s.operator_fee,
        })
        .collect();
    Aggregate {
        monthly,
        yearly,
        daily,
        skipped_days,
    }
}

/// Plot-ready monthly table.
pub fn write_monthly_csv(path: &Path, agg: &Aggregate) -> Result<(), CliError> {
    let rows = agg.monthly.iter().map(|r| {
        vec![
            r.year.to_string(),
            r.month.map(|m| m.to_string()).unwrap_or_default(),
            r.entity.clone(),
            r.gain.to_string(),
            r.storage_cost.to_string(),
            r.operator_fee.to_string(),
        ]
    });
    let header = ["year", "month", "entity", "gain", "storage_cost", "operator_fee"];
    write_atomic(path, &csv_text(&header, rows))
}

/// Reads every `day_*.json` record in `dir`.
pub fn read_records(dir: &Path) -> Result<Vec<DayRecord>, CliError> {
    let entries = fs::read_dir(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| CliError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("day_") && name.ends_with(".json") {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| read_json(p)).collect()
}

pub fn aggregate_dir(dir: &Path) -> Result<Aggregate, CliError> {
    Ok(aggregate(&read_records(dir)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calendar_months() {
        assert_eq!(calendar(1), (1, 1));
        assert_eq!(calendar(31), (1, 1));
        assert_eq!(calendar(32), (1, 2));
        assert_eq!(calendar(59), (1, 2));
        assert_eq!(calendar(60), (1, 3));
        assert_eq!(calendar(365), (1, 12));
        assert_eq!(calendar(366), (2, 1));
    }

    #[test]
    fn percent_undefined_without_standalone_profit() {
        assert_eq!(percent(0.3, 0.0), None);
        assert_eq!(percent(0.5, -2.0), Some(25.0));
    }
}
