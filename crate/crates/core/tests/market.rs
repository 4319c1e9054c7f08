mod common;

use common::{close, Cascade};
use microgrid_market::market::{build_individual, build_lower_level, clear_market, standalone_profits, MarketError};
use microgrid_market::scenario::{DeviceSpec, Entity, StorageSpec};

const TOL: f64 = 1e-6;

#[test]
fn zero_series_clear_to_nothing() {
    let mut s = common::example("flexible");
    for e in &mut s.entities {
        for d in &mut e.devices {
            match &mut d.spec {
                DeviceSpec::SheddableLoad { consumption, .. } => consumption.fill(0.0),
                DeviceSpec::SteerableGen { production, .. } => production.fill(0.0),
                _ => {}
            }
        }
    }
    let c = Cascade::run(s);
    assert_eq!(c.out.welfare, 0.0);
    assert!(c.sh.entities.iter().all(|e| e.j_total == 0.0 && e.j_su == 0.0));
}

#[test]
fn lone_storage_earns_nothing() {
    let mut s = common::example("storage");
    let bat = s.entities.remove(2);
    s.entities = vec![bat];
    let su = standalone_profits(&s, TOL).unwrap();
    assert_eq!(su.get("3").unwrap().j_su, 0.0);
}

#[test]
fn storage_gains_only_inside_the_community() {
    let c = Cascade::example("storage");
    assert_eq!(c.su.get("3").unwrap().j_su, 0.0);
    assert!(c.gain("3") >= 0.0);
    assert!(close(c.sh.total(), c.out.welfare, TOL));
}

#[test]
fn standalone_problem_has_no_community_rows() {
    let s = common::example("storage");
    let (full, _) = build_lower_level(&s);
    let (alone, _) = build_individual(&s, "3").unwrap();
    assert!(alone.num_vars() < full.num_vars());
    assert!(alone.constraints().iter().all(|r| !r.name.starts_with("community/")));
    assert!(matches!(build_individual(&s, "9"), Err(MarketError::UnknownEntity(_))));
}

#[test]
fn unreachable_terminal_charge_is_infeasible() {
    let mut s = common::example("storage");
    if let DeviceSpec::Storage(b) = &mut s.entities[2].devices[0].spec {
        // one period of 6 kW at 90 % cannot lift 0 to 12 kWh
        *b = StorageSpec {
            soc_final: b.cap_max,
            ..b.clone()
        };
    }
    s.time.periods = 1;
    for e in &mut s.entities {
        for d in &mut e.devices {
            match &mut d.spec {
                DeviceSpec::NonFlexibleLoad { consumption } => consumption.truncate(1),
                DeviceSpec::NonSteerableGen { production } => production.truncate(1),
                _ => {}
            }
        }
    }
    s.tariffs.import.truncate(1);
    s.tariffs.export.truncate(1);
    let err = clear_market(&s, TOL).unwrap_err();
    assert!(matches!(err, MarketError::Infeasible { .. } | MarketError::Scenario(_)), "{err}");
}

#[test]
fn entity_without_devices_is_inert() {
    let mut s = common::example("excess_generation");
    s.entities.push(Entity::new("idle"));
    let c = Cascade::run(s);
    let idle = c.sh.entity("idle").unwrap();
    assert_eq!(idle.j_energy, 0.0);
    assert!(close(c.out.welfare, 0.01, TOL));
}
