//! Seeded synthetic load/generation profiles matching target summary statistics.
//!
//! Each series is i.i.d. per period: `clip(m + s * z_t, min, max)` with `z_t`
//! standard normal. `(m, s)` are tuned by nested bisection so the *clipped*
//! sample hits the requested mean and standard deviation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Device, DeviceSpec, Entity, Scenario, StorageSpec, Tariffs, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileStats {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{device}: infeasible statistics ({reason})")]
    Infeasible { device: String, reason: String },
}

impl ProfileStats {
    pub fn check(&self, device: &str) -> Result<(), SynthError> {
        let bad = |reason: String| {
            Err(SynthError::Infeasible {
                device: device.to_string(),
                reason,
            })
        };
        let ProfileStats {
            max,
            min,
            mean,
            std,
        } = *self;
        if ![max, min, mean, std].iter().all(|v| v.is_finite()) {
            return bad("non-finite value".into());
        }
        if max < min {
            return bad(format!("max {max} < min {min}"));
        }
        if mean < min || mean > max {
            return bad(format!("mean {mean} outside [{min}, {max}]"));
        }
        if std < 0.0 {
            return bad(format!("negative std {std}"));
        }
        // a distribution on [min, max] with this mean has at most this spread
        let limit = ((mean - min) * (max - mean)).sqrt();
        if std > limit * (1.0 + 1e-12) {
            return bad(format!(
                "std {std} exceeds {limit:.4}, the largest possible on [{min}, {max}] with mean {mean}"
            ));
        }
        Ok(())
    }
}

/// Generates `periods` values for `stats` using the PRNG stream `stream` of `seed`.
pub fn synth_series(
    seed: u64,
    stream: u64,
    stats: &ProfileStats,
    periods: usize,
    device: &str,
) -> Result<Vec<f64>, SynthError> {
    stats.check(device)?;
    let ProfileStats {
        max,
        min,
        mean,
        std,
    } = *stats;
    if periods == 0 {
        return Ok(Vec::new());
    }
    if std == 0.0 || max == min {
        return Ok(vec![mean; periods]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let z: Vec<f64> = (0..periods)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();

    let clip = |m: f64, s: f64| -> Vec<f64> { z.iter().map(|&zi| (m + s * zi).clamp(min, max)).collect() };
    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std_of = |v: &[f64]| {
        let mu = mean_of(v);
        (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let width = max - min;
    // clipped sample mean is monotone in the location for a fixed scale
    let location_for = |s: f64| -> f64 {
        let (mut lo, mut hi) = (min - 20.0 * s - width, max + 20.0 * s + width);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mean_of(&clip(mid, s)) < mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let (mut lo, mut hi) = (0.0, std);
    while std_of(&clip(location_for(hi), hi)) < std && hi < 1e6 * (width + std) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if std_of(&clip(location_for(mid), mid)) < std {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    Ok(clip(location_for(s), s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DeviceTemplate {
    #[serde(rename = "nfl")]
    Load { id: String, stats: ProfileStats },
    #[serde(rename = "nst")]
    Generator { id: String, stats: ProfileStats },
    #[serde(rename = "sto")]
    Storage { id: String, spec: StorageSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityTemplate {
    pub id: String,
    pub devices: Vec<DeviceTemplate>,
}

/// Tariffs are constant over the horizon in synthetic scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatTariffs {
    pub import: f64,
    pub export: f64,
    pub peak: f64,
    pub reserve: f64,
    pub operator_fee: f64,
}

/// Everything `synth_profiles` needs besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub time: TimeGrid,
    pub tariffs: FlatTariffs,
    pub entities: Vec<EntityTemplate>,
}

pub fn synth_profiles(seed: u64, spec: &SynthSpec) -> Result<Scenario, SynthError> {
    let t = spec.time.periods;
    let mut stream = 0u64;
    let mut entities = Vec::with_capacity(spec.entities.len());
    for e in &spec.entities {
        let mut entity = Entity::new(e.id.clone());
        for d in &e.devices {
            let device = match d {
                DeviceTemplate::Load { id, stats } => Device {
                    id: id.clone(),
                    spec: DeviceSpec::NonFlexibleLoad {
                        consumption: synth_series(seed, stream, stats, t, &format!("{}/{id}", e.id))?,
                    },
                },
                DeviceTemplate::Generator { id, stats } => Device {
                    id: id.clone(),
                    spec: DeviceSpec::NonSteerableGen {
                        production: synth_series(seed, stream, stats, t, &format!("{}/{id}", e.id))?,
                    },
                },
                DeviceTemplate::Storage { id, spec } => Device {
                    id: id.clone(),
                    spec: DeviceSpec::Storage(spec.clone()),
                },
            };
            stream += 1;
            entity.devices.push(device);
        }
        entities.push(entity);
    }
    let f = spec.tariffs;
    Ok(Scenario {
        time: spec.time,
        tariffs: Tariffs {
            import: vec![f.import; t],
            export: vec![f.export; t],
            peak: f.peak,
            reserve: f.reserve,
            operator_fee: f.operator_fee,
        },
        entities,
    })
}

/// Four entities shaped like the MeryGrid pilot: a load, a load with PV, a load
/// with a hydro plant, and a 270 kWh battery; 15-minute periods.
pub fn merygrid_like(periods: usize) -> SynthSpec {
    let stats = |max, min, mean, std| ProfileStats {
        max,
        min,
        mean,
        std,
    };
    SynthSpec {
        time: TimeGrid {
            periods,
            delta_hours: 0.25,
        },
        tariffs: FlatTariffs {
            import: 0.15,
            export: 0.035,
            peak: 0.15,
            reserve: 0.0,
            operator_fee: 0.01,
        },
        entities: vec![
            EntityTemplate {
                id: "e1".into(),
                devices: vec![DeviceTemplate::Load {
                    id: "load".into(),
                    stats: stats(288.40, 0.00, 23.13, 29.84),
                }],
            },
            EntityTemplate {
                id: "e2".into(),
                devices: vec![
                    DeviceTemplate::Load {
                        id: "load".into(),
                        stats: stats(91.20, 0.00, 16.76, 17.94),
                    },
                    DeviceTemplate::Generator {
                        id: "pv".into(),
                        stats: stats(68.96, 0.00, 3.66, 9.63),
                    },
                ],
            },
            EntityTemplate {
                id: "e3".into(),
                devices: vec![
                    DeviceTemplate::Load {
                        id: "load".into(),
                        stats: stats(271.64, 0.00, 9.02, 24.86),
                    },
                    DeviceTemplate::Generator {
                        id: "hydro".into(),
                        stats: stats(189.82, 0.00, 74.64, 51.86),
                    },
                ],
            },
            EntityTemplate {
                id: "e4".into(),
                devices: vec![DeviceTemplate::Storage {
                    id: "bat".into(),
                    spec: StorageSpec {
                        cap_max: 270.0,
                        cap_min: 0.0,
                        p_charge: 150.0,
                        p_discharge: 300.0,
                        eff_charge: 0.95,
                        eff_discharge: 0.95,
                        usage_fee: 0.04,
                        soc_init: 135.0,
                        soc_final: 135.0,
                    },
                }],
            },
        ],
    }
}
