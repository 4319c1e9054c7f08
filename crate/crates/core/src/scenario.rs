//! Community description: time grid, tariffs, entities and their devices.
//!
//! Scenario files are JSON; any time series may be written inline, as a
//! constant, or as `{"csv": file, "column": name}` pointing into a CSV table
//! next to the scenario file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub periods: usize,
    pub delta_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariffs {
    /// grid purchase price per period, €/kWh
    pub import: Vec<f64>,
    /// grid sale price per period, €/kWh
    pub export: Vec<f64>,
    /// €/kW on the community peak
    pub peak: f64,
    /// €/kW of symmetric reserve
    pub reserve: f64,
    /// €/kWh charged on every community import and export
    pub operator_fee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub cap_max: f64,
    pub cap_min: f64,
    pub p_charge: f64,
    pub p_discharge: f64,
    pub eff_charge: f64,
    pub eff_discharge: f64,
    pub usage_fee: f64,
    pub soc_init: f64,
    pub soc_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DeviceSpec {
    #[serde(rename = "nfl")]
    NonFlexibleLoad { consumption: Vec<f64> },
    #[serde(rename = "she")]
    SheddableLoad {
        consumption: Vec<f64>,
        shed_cost: Vec<f64>,
    },
    #[serde(rename = "nst")]
    NonSteerableGen { production: Vec<f64> },
    #[serde(rename = "ste")]
    SteerableGen {
        production: Vec<f64>,
        gen_cost: Vec<f64>,
    },
    #[serde(rename = "sto")]
    Storage(StorageSpec),
}

impl DeviceSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            DeviceSpec::NonFlexibleLoad { .. } => "nfl",
            DeviceSpec::SheddableLoad { .. } => "she",
            DeviceSpec::NonSteerableGen { .. } => "nst",
            DeviceSpec::SteerableGen { .. } => "ste",
            DeviceSpec::Storage(_) => "sto",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    #[serde(flatten)]
    pub spec: DeviceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    /// kW per period; `None` means unbounded
    pub export_cap: Option<Vec<f64>>,
    pub import_cap: Option<Vec<f64>>,
    pub devices: Vec<Device>,
}

impl Entity {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            export_cap: None,
            import_cap: None,
            devices: Vec::new(),
        }
    }

    pub fn with_device(mut self, id: impl Into<String>, spec: DeviceSpec) -> Self {
        self.devices.push(Device {
            id: id.into(),
            spec,
        });
        self
    }

    pub fn storages(&self) -> impl Iterator<Item = (&Device, &StorageSpec)> {
        self.devices.iter().filter_map(|d| match &d.spec {
            DeviceSpec::Storage(s) => Some((d, s)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub time: TimeGrid,
    pub tariffs: Tariffs,
    pub entities: Vec<Entity>,
}

impl Scenario {
    pub fn periods(&self) -> usize {
        self.time.periods
    }

    pub fn delta(&self) -> f64 {
        self.time.delta_hours
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn entity_index(&self, id: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.id == id)
    }

    /// Checks every invariant and returns all violations at once.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let errors = self.violations();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errors))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut err = Vec::new();
        let t = self.time.periods;
        if t == 0 {
            err.push("time.periods must be at least 1".into());
        }
        if !(self.time.delta_hours > 0.0 && self.time.delta_hours.is_finite()) {
            err.push(format!(
                "time.delta_hours must be positive, got {}",
                self.time.delta_hours
            ));
        }
        series(&mut err, "tariffs.import", &self.tariffs.import, t);
        series(&mut err, "tariffs.export", &self.tariffs.export, t);
        scalar(&mut err, "tariffs.peak", self.tariffs.peak);
        scalar(&mut err, "tariffs.reserve", self.tariffs.reserve);
        scalar(&mut err, "tariffs.operator_fee", self.tariffs.operator_fee);

        let mut ids = HashSet::new();
        for e in &self.entities {
            if e.id.is_empty() || e.id.contains('/') || e.id == "-" {
                err.push(format!("entity id `{}` must be non-empty, not `-`, and free of `/`", e.id));
            }
            if !ids.insert(e.id.as_str()) {
                err.push(format!("duplicate entity id `{}`", e.id));
            }
            if let Some(cap) = &e.export_cap {
                series(&mut err, &format!("{}.export_cap", e.id), cap, t);
            }
            if let Some(cap) = &e.import_cap {
                series(&mut err, &format!("{}.import_cap", e.id), cap, t);
            }
            let mut dev_ids = HashSet::new();
            for d in &e.devices {
                let at = format!("{}/{}", e.id, d.id);
                if d.id.is_empty() || d.id.contains('/') || d.id == "-" {
                    err.push(format!("device id `{at}` must be non-empty, not `-`, and free of `/`"));
                }
                if !dev_ids.insert(d.id.as_str()) {
                    err.push(format!("duplicate device id `{at}`"));
                }
                match &d.spec {
                    DeviceSpec::NonFlexibleLoad { consumption } => {
                        series(&mut err, &format!("{at}.consumption"), consumption, t);
                    }
                    DeviceSpec::SheddableLoad {
                        consumption,
                        shed_cost,
                    } => {
                        series(&mut err, &format!("{at}.consumption"), consumption, t);
                        series(&mut err, &format!("{at}.shed_cost"), shed_cost, t);
                    }
                    DeviceSpec::NonSteerableGen { production } => {
                        series(&mut err, &format!("{at}.production"), production, t);
                    }
                    DeviceSpec::SteerableGen {
                        production,
                        gen_cost,
                    } => {
                        series(&mut err, &format!("{at}.production"), production, t);
                        series(&mut err, &format!("{at}.gen_cost"), gen_cost, t);
                    }
                    DeviceSpec::Storage(s) => storage(&mut err, &at, s, t, self.time.delta_hours),
                }
            }
        }
        err
    }

    /// Conditions the model accepts but that void some of the guarantees.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        for (t, (i, e)) in self
            .tariffs
            .import
            .iter()
            .zip(&self.tariffs.export)
            .enumerate()
        {
            if i <= e {
                w.push(format!(
                    "period {}: import price {i} does not exceed export price {e}; simultaneous grid import and export are not excluded",
                    t + 1
                ));
            }
        }
        w
    }
}

fn scalar(err: &mut Vec<String>, what: &str, v: f64) {
    if !(v.is_finite() && v >= 0.0) {
        err.push(format!("{what} must be finite and non-negative, got {v}"));
    }
}

fn series(err: &mut Vec<String>, what: &str, v: &[f64], t: usize) {
    if v.len() != t {
        err.push(format!("{what} has {} entries, expected {t}", v.len()));
    }
    if let Some((k, x)) = v
        .iter()
        .enumerate()
        .find(|(_, x)| !(x.is_finite() && **x >= 0.0))
    {
        err.push(format!(
            "{what}[{}] must be finite and non-negative, got {x}",
            k + 1
        ));
    }
}

fn storage(err: &mut Vec<String>, at: &str, s: &StorageSpec, t: usize, delta: f64) {
    for (name, v) in [
        ("cap_max", s.cap_max),
        ("cap_min", s.cap_min),
        ("p_charge", s.p_charge),
        ("p_discharge", s.p_discharge),
        ("usage_fee", s.usage_fee),
        ("soc_init", s.soc_init),
        ("soc_final", s.soc_final),
    ] {
        scalar(err, &format!("{at}.{name}"), v);
    }
    for (name, v) in [
        ("eff_charge", s.eff_charge),
        ("eff_discharge", s.eff_discharge),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            err.push(format!("{at}.{name} must lie in (0, 1], got {v}"));
        }
    }
    if s.cap_min > s.cap_max {
        err.push(format!(
            "{at}: cap_min {} exceeds cap_max {}",
            s.cap_min, s.cap_max
        ));
    }
    for (name, v) in [("soc_init", s.soc_init), ("soc_final", s.soc_final)] {
        if v < s.cap_min || v > s.cap_max {
            err.push(format!(
                "{at}.{name} = {v} outside [{}, {}]",
                s.cap_min, s.cap_max
            ));
        }
    }
    let horizon = t as f64 * delta;
    if s.eff_charge > 0.0 && s.eff_discharge > 0.0 {
        let rise = s.soc_final - s.soc_init;
        let max_rise = horizon * s.p_charge * s.eff_charge;
        let max_fall = horizon * s.p_discharge / s.eff_discharge;
        if rise > max_rise + 1e-9 {
            err.push(format!(
                "{at}: soc_final {} unreachable from soc_init {} (at most +{max_rise} kWh over the horizon)",
                s.soc_final, s.soc_init
            ));
        }
        if -rise > max_fall + 1e-9 {
            err.push(format!(
                "{at}: soc_final {} unreachable from soc_init {} (at most -{max_fall} kWh over the horizon)",
                s.soc_final, s.soc_init
            ));
        }
    }
}

// ---------------------------------------------------------------------------
// file format

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Series {
    Values(Vec<f64>),
    Constant(f64),
    Csv { csv: String, column: String },
}

#[derive(Debug, Deserialize)]
struct RawScenario {
    time: TimeGrid,
    tariffs: RawTariffs,
    #[serde(default)]
    entities: Vec<RawEntity>,
}

#[derive(Debug, Deserialize)]
struct RawTariffs {
    import: Series,
    export: Series,
    #[serde(default)]
    peak: f64,
    #[serde(default)]
    reserve: f64,
    #[serde(default)]
    operator_fee: f64,
}

#[derive(Debug, Deserialize)]
struct RawEntity {
    id: String,
    #[serde(default)]
    export_cap: Option<Series>,
    #[serde(default)]
    import_cap: Option<Series>,
    #[serde(default)]
    devices: Vec<RawDevice>,
}

#[derive(Debug, Deserialize)]
struct RawDevice {
    #[serde(default)]
    id: Option<String>,
    #[serde(flatten)]
    spec: RawSpec,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind")]
enum RawSpec {
    #[serde(rename = "nfl")]
    NonFlexibleLoad { consumption: Series },
    #[serde(rename = "she")]
    SheddableLoad { consumption: Series, shed_cost: Series },
    #[serde(rename = "nst")]
    NonSteerableGen { production: Series },
    #[serde(rename = "ste")]
    SteerableGen { production: Series, gen_cost: Series },
    #[serde(rename = "sto")]
    Storage(StorageSpec),
}

struct Resolver<'a> {
    base: &'a Path,
    periods: usize,
    tables: HashMap<PathBuf, BTreeMap<String, Vec<f64>>>,
}

impl Resolver<'_> {
    fn resolve(&mut self, s: Series) -> Result<Vec<f64>, ScenarioError> {
        match s {
            Series::Values(v) => Ok(v),
            Series::Constant(c) => Ok(vec![c; self.periods]),
            Series::Csv { csv, column } => {
                let path = self.base.join(csv);
                if !self.tables.contains_key(&path) {
                    let table = read_csv_table(&path)?;
                    self.tables.insert(path.clone(), table);
                }
                self.tables[&path]
                    .get(&column)
                    .cloned()
                    .ok_or_else(|| ScenarioError::Parse {
                        path: path.clone(),
                        message: format!("no column `{column}`"),
                    })
            }
        }
    }
}

fn read_csv_table(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, ScenarioError> {
    let parse_err = |message: String| ScenarioError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => ScenarioError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        },
        _ => parse_err(e.to_string()),
    })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                parse_err(format!(
                    "line {}, column `{}`: `{field}` is not a number",
                    line + 2,
                    headers.get(k).map(String::as_str).unwrap_or("?")
                ))
            })?;
            if let Some(c) = cols.get_mut(k) {
                c.push(v);
            }
        }
    }
    Ok(headers.into_iter().zip(cols).collect())
}

/// Reads, resolves and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let scenario = parse_scenario(&text, base).map_err(|e| match e {
        ScenarioError::Parse { path: p, message } if p.as_os_str().is_empty() => {
            ScenarioError::Parse {
                path: path.to_path_buf(),
                message,
            }
        }
        other => other,
    })?;
    Ok(scenario)
}

/// Parses scenario JSON; CSV references are resolved against `base`.
pub fn parse_scenario(text: &str, base: &Path) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: PathBuf::new(),
        message: e.to_string(),
    })?;
    let mut r = Resolver {
        base,
        periods: raw.time.periods,
        tables: HashMap::new(),
    };
    let tariffs = Tariffs {
        import: r.resolve(raw.tariffs.import)?,
        export: r.resolve(raw.tariffs.export)?,
        peak: raw.tariffs.peak,
        reserve: raw.tariffs.reserve,
        operator_fee: raw.tariffs.operator_fee,
    };
    let mut entities = Vec::with_capacity(raw.entities.len());
    for e in raw.entities {
        let mut devices = Vec::with_capacity(e.devices.len());
        for (k, d) in e.devices.into_iter().enumerate() {
            let spec = match d.spec {
                RawSpec::NonFlexibleLoad { consumption } => DeviceSpec::NonFlexibleLoad {
                    consumption: r.resolve(consumption)?,
                },
                RawSpec::SheddableLoad {
                    consumption,
                    shed_cost,
                } => DeviceSpec::SheddableLoad {
                    consumption: r.resolve(consumption)?,
                    shed_cost: r.resolve(shed_cost)?,
                },
                RawSpec::NonSteerableGen { production } => DeviceSpec::NonSteerableGen {
                    production: r.resolve(production)?,
                },
                RawSpec::SteerableGen {
                    production,
                    gen_cost,
                } => DeviceSpec::SteerableGen {
                    production: r.resolve(production)?,
                    gen_cost: r.resolve(gen_cost)?,
                },
                RawSpec::Storage(s) => DeviceSpec::Storage(s),
            };
            let id = d.id.unwrap_or_else(|| format!("{}{}", spec.tag(), k + 1));
            devices.push(Device { id, spec });
        }
        entities.push(Entity {
            id: e.id,
            export_cap: e.export_cap.map(|s| r.resolve(s)).transpose()?,
            import_cap: e.import_cap.map(|s| r.resolve(s)).transpose()?,
            devices,
        });
    }
    let scenario = Scenario {
        time: raw.time,
        tariffs,
        entities,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Writes `s` as self-contained JSON (all series inline).
pub fn write_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(s).expect("scenario serialises");
    fs::write(path, text + "\n").map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Cuts a horizon into `days` independent scenarios of equal length. Every
/// storage starts and ends each day at `soc_fraction` of its maximum capacity
/// (clamped to its admissible range).
pub fn split_days(s: &Scenario, days: usize, soc_fraction: f64) -> Result<Vec<Scenario>, ScenarioError> {
    let periods = s.periods();
    if days == 0 || !periods.is_multiple_of(days) {
        return Err(ScenarioError::Invalid(vec![format!(
            "{periods} periods cannot be split into {days} equal days"
        )]));
    }
    let d = periods / days;
    let part = |v: &[f64], k: usize| v[k * d..(k + 1) * d].to_vec();
    let day = |k: usize| {
        let entities = s
            .entities
            .iter()
            .map(|e| Entity {
                id: e.id.clone(),
                export_cap: e.export_cap.as_ref().map(|c| part(c, k)),
                import_cap: e.import_cap.as_ref().map(|c| part(c, k)),
                devices: e
                    .devices
                    .iter()
                    .map(|dev| Device {
                        id: dev.id.clone(),
                        spec: match &dev.spec {
                            DeviceSpec::NonFlexibleLoad { consumption } => DeviceSpec::NonFlexibleLoad {
                                consumption: part(consumption, k),
                            },
                            DeviceSpec::SheddableLoad { consumption, shed_cost } => DeviceSpec::SheddableLoad {
                                consumption: part(consumption, k),
                                shed_cost: part(shed_cost, k),
                            },
                            DeviceSpec::NonSteerableGen { production } => DeviceSpec::NonSteerableGen {
                                production: part(production, k),
                            },
                            DeviceSpec::SteerableGen { production, gen_cost } => DeviceSpec::SteerableGen {
                                production: part(production, k),
                                gen_cost: part(gen_cost, k),
                            },
                            DeviceSpec::Storage(b) => {
                                let soc = (soc_fraction * b.cap_max).clamp(b.cap_min, b.cap_max);
                                DeviceSpec::Storage(StorageSpec {
                                    soc_init: soc,
                                    soc_final: soc,
                                    ..b.clone()
                                })
                            }
                        },
                    })
                    .collect(),
            })
            .collect();
        Scenario {
            time: TimeGrid {
                periods: d,
                delta_hours: s.time.delta_hours,
            },
            tariffs: Tariffs {
                import: part(&s.tariffs.import, k),
                export: part(&s.tariffs.export, k),
                ..s.tariffs.clone()
            },
            entities,
        }
    };
    Ok((0..days).map(day).collect())
}
