//! Random small community scenarios. Grid exchanges are unbounded or capped
//! generously, so every draw is feasible.

use microgrid_market::scenario::{Device, DeviceSpec, Entity, Scenario, StorageSpec, Tariffs, TimeGrid};
use proptest::prelude::*;

fn series(t: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(prop_oneof![1 => Just(0.0), 4 => lo..hi], t)
}

fn storage() -> impl Strategy<Value = StorageSpec> {
    (1.0..20.0f64, 0.0..0.3f64, 1.0..10.0f64, 1.0..10.0f64, 0.8..=1.0f64, 0.8..=1.0f64, 0.0..0.05f64, 0.0..=1.0f64)
        .prop_map(|(cap, min_frac, pc, pd, ec, ed, fee, level)| {
            let cap_min = cap * min_frac;
            let soc = cap_min + level * (cap - cap_min);
            StorageSpec {
                cap_max: cap,
                cap_min,
                p_charge: pc,
                p_discharge: pd,
                eff_charge: ec,
                eff_discharge: ed,
                usage_fee: fee,
                soc_init: soc,
                soc_final: soc,
            }
        })
}

fn device(t: usize) -> impl Strategy<Value = DeviceSpec> {
    prop_oneof![
        series(t, 0.0, 10.0).prop_map(|consumption| DeviceSpec::NonFlexibleLoad { consumption }),
        (series(t, 0.0, 10.0), series(t, 0.0, 0.5))
            .prop_map(|(consumption, shed_cost)| DeviceSpec::SheddableLoad { consumption, shed_cost }),
        series(t, 0.0, 10.0).prop_map(|production| DeviceSpec::NonSteerableGen { production }),
        (series(t, 0.0, 10.0), series(t, 0.0, 0.3))
            .prop_map(|(production, gen_cost)| DeviceSpec::SteerableGen { production, gen_cost }),
        storage().prop_map(DeviceSpec::Storage),
    ]
}

fn entity(t: usize, k: usize) -> impl Strategy<Value = Entity> {
    (proptest::collection::vec(device(t), 1..=3), prop::bool::weighted(0.2)).prop_map(move |(specs, capped)| {
        let mut e = Entity::new(format!("u{}", k + 1));
        for (i, spec) in specs.into_iter().enumerate() {
            e.devices.push(Device {
                id: format!("{}{}", spec.tag(), i + 1),
                spec,
            });
        }
        if capped {
            // enough headroom for any schedule of the entity's own devices
            let mut worst = 0.0;
            for d in &e.devices {
                worst += match &d.spec {
                    DeviceSpec::NonFlexibleLoad { consumption } | DeviceSpec::SheddableLoad { consumption, .. } => {
                        consumption.iter().cloned().fold(0.0, f64::max)
                    }
                    DeviceSpec::NonSteerableGen { production } | DeviceSpec::SteerableGen { production, .. } => {
                        production.iter().cloned().fold(0.0, f64::max)
                    }
                    DeviceSpec::Storage(b) => b.p_charge.max(b.p_discharge),
                };
            }
            e.export_cap = Some(vec![worst + 1.0; t]);
            e.import_cap = Some(vec![worst + 1.0; t]);
        }
        e
    })
}

fn optional(hi: f64) -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 2 => 0.0..hi]
}

pub fn scenario() -> impl Strategy<Value = Scenario> {
    (1usize..=8, 1usize..=4, prop::sample::select(vec![0.25, 0.5, 1.0])).prop_flat_map(|(t, n, delta)| {
        let entities = (0..n).map(|k| entity(t, k)).collect::<Vec<_>>();
        let prices = proptest::collection::vec((0.1..0.3f64, 0.0..=1.0f64), t);
        (entities, prices, optional(0.3), optional(0.3), optional(0.05)).prop_map(
            move |(entities, prices, peak, reserve, fee)| Scenario {
                time: TimeGrid {
                    periods: t,
                    delta_hours: delta,
                },
                tariffs: Tariffs {
                    import: prices.iter().map(|p| p.0).collect(),
                    export: prices.iter().map(|p| p.0 * p.1).collect(),
                    peak,
                    reserve,
                    operator_fee: fee,
                },
                entities,
            },
        )
    })
}
