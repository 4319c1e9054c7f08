//! The six two-entity and three-entity worked examples.

mod common;

use common::{close, Cascade};
use microgrid_market::market::DeviceState;
use microgrid_market::sharing::SharingOutcome;
use microgrid_market::verify::{self, verify_all, CheckStatus};

const TOL: f64 = 1e-6;

fn assert_close(what: &str, got: f64, want: f64, tol: f64) {
    assert!(close(got, want, tol), "{what}: got {got}, want {want} (±{tol})");
}

fn assert_verified(c: &Cascade) {
    let report = verify_all(&c.s, &c.out, Some((&c.sh, &c.su)), TOL);
    assert!(report.passed() && report.certificate_valid() && report.relations_matched(), "{report}");
}

/// The same cascade with the peak and reserve shares replaced.
fn reallocated(c: &Cascade, peak: &[(&str, f64)], reserve: &[(&str, f64)]) -> SharingOutcome {
    let tf = &c.s.tariffs;
    let mut sh = c.sh.clone();
    for e in &mut sh.entities {
        if let Some((_, p)) = peak.iter().find(|(u, _)| *u == e.id) {
            e.peak_share = *p;
            e.j_peak = -tf.peak * p;
        }
        if let Some((_, r)) = reserve.iter().find(|(u, _)| *u == e.id) {
            e.reserve_share = *r;
            e.j_reserve = tf.reserve * r;
        }
        e.j_total = e.j_energy + e.j_reserve + e.j_peak;
    }
    sh
}

#[test]
fn excess_generation_is_sold_inside_first() {
    let c = Cascade::example("excess_generation");
    let gen = c.out.entity("2").unwrap();
    assert_close("e_com 2", gen.export_com[0], 3.0, TOL);
    assert_close("e_gri 2", gen.export_grid[0], 2.0, TOL);
    assert_close("price 1", c.price("1", 1), 0.055, TOL);
    assert_close("price 2", c.price("2", 1), 0.035, TOL);
    assert_close("J 1", c.j("1"), -0.165, TOL);
    assert_close("J 2", c.j("2"), 0.175, TOL);
    assert_close("J_SU 1", c.su.get("1").unwrap().j_su, -0.9, TOL);
    assert_close("J_SU 2", c.su.get("2").unwrap().j_su, 0.175, TOL);
    assert_close("J*", c.out.welfare, 0.01, TOL);
    let cost = verify::check_cost_identity(&c.s, &c.out, TOL);
    assert_eq!(cost.status, CheckStatus::Pass);
    let dual = verify::check_dual_feasibility(&c.s, &c.out, TOL);
    assert!(dual.max_residual <= 1e-12, "{dual:?}");
    assert_verified(&c);
}

#[test]
fn shortage_makes_the_grid_marginal() {
    let c = Cascade::example("shortage");
    assert_close("price 1", c.price("1", 1), 0.30, TOL);
    assert_close("J 1", c.j("1"), -1.95, TOL);
    assert_close("J 2", c.j("2"), 0.95, TOL);
    let peak: f64 = c.sh.entities.iter().map(|e| e.j_peak).sum();
    assert_close("peak cost", peak, -0.45, TOL);
    assert_close("peak cost of 2", c.sh.entity("2").unwrap().j_peak, -0.45, TOL);
    assert_verified(&c);
}

#[test]
fn storage_arbitrage_sets_the_second_price() {
    let c = Cascade::example("storage");
    let bat = c.out.entity("3").unwrap();
    assert_close("i_com 3 at 1", bat.import_com[0], 3.51, 0.01);
    assert_close("price 1 at 2", c.price("1", 2), 0.169, 0.001);
    assert_close("J*", c.out.welfare, -0.331, 0.001);
    // minimum selling price covering charge price, losses and usage fees
    assert_close("price 3 at 2", c.price("3", 2), 0.055 / 0.855 + 0.08 / 0.95, TOL);
    assert_verified(&c);
}

#[test]
fn small_storage_interior_split_is_alpha_optimal() {
    let c = Cascade::example("storage_small");
    assert_verified(&c);
    // entity 2 gains nothing whatever the split, so alpha is pinned at 0 and the
    // peak cost may be moved between entities 1 and 3 freely
    assert_close("alpha", c.sh.alpha, 0.0, TOL);
    let bat = c.sh.entity("3").unwrap();
    let p3 = (bat.j_energy - bat.j_su - 0.159) / c.s.tariffs.peak;
    assert!(p3 > 0.0 && p3 < c.out.peak, "peak share {p3} of {}", c.out.peak);
    let alt = reallocated(&c, &[("1", c.out.peak - p3), ("3", p3)], &[]);
    let check = verify::check_sharing(&alt, &c.out, &c.su, &c.s, TOL);
    assert_eq!(check.status, CheckStatus::Pass, "{check:?}");
    assert_close("alt gain 3", alt.entity("3").unwrap().gain(), 0.159, 1e-9);
}

#[test]
fn shared_peak_prices_solve_the_four_relations() {
    let c = Cascade::example("storage_shared_peak");
    for t in 0..2 {
        let import: f64 = c.out.entities.iter().map(|e| e.import_grid[t]).sum();
        assert_close("grid import", import, 1.3127, 0.001);
    }
    let (p21, p31, p32, p12) = (c.price("2", 1), c.price("3", 1), c.price("3", 2), c.price("1", 2));
    let fee = c.s.tariffs.operator_fee;
    assert_close("twice fee at 1", p31 - p21, 2.0 * fee, TOL);
    assert_close("twice fee at 2", p12 - p32, 2.0 * fee, TOL);
    assert_close("storage chain", p32, p31 / (0.9 * 0.95) + 0.08 / 0.95, TOL);
    assert_close("peak pair", p31 + p12, 0.2 + 0.15 + 0.15, TOL);
    assert_close("J 1", c.j("1"), -1.63, 0.001);
    assert_close("J 2", c.j("2"), 0.487, 0.001);
    assert_close("J 3", c.j("3"), 0.0426, 0.001);
    assert_verified(&c);
}

#[test]
fn cheap_flexibility_is_used_first() {
    let c = Cascade::example("flexible");
    match &c.out.entity("1").unwrap().devices[0].state {
        DeviceState::Sheddable { shed, .. } => assert_close("shed", shed[0], 1.0, TOL),
        other => panic!("unexpected {other:?}"),
    }
    assert_close("price 3", c.price("3", 1), 0.25, TOL);
    assert_close("price 2", c.price("2", 1), 0.27, TOL);
    assert_close("gain 2", c.gain("2"), 0.09, TOL);
    assert_close("gain 1", c.gain("1"), 0.0, TOL);
    assert_close("gain 3", c.gain("3"), 0.0, TOL);
    let cost = verify::check_cost_identity(&c.s, &c.out, TOL);
    assert_eq!(cost.status, CheckStatus::Pass);
    assert_verified(&c);
}

#[test]
fn reserve_revenue_lifts_every_entity() {
    let c = Cascade::example("reserve");
    assert_close("price 2", c.price("2", 1), 0.225, TOL);
    assert_close("price 3", c.price("3", 1), 0.225, TOL);
    for u in ["1", "2", "3"] {
        assert!(c.gain(u) > TOL, "entity {u} gain {}", c.gain(u));
    }
    assert_verified(&c);
    // an interior split is just as alpha-optimal as the vertex
    let pi = c.s.tariffs.reserve;
    let mut alt = reallocated(&c, &[], &[("1", 0.0), ("2", 0.278 / pi), ("3", 0.722 / pi)]);
    // absorb the rounding of the printed values
    let total = alt.entities.iter().map(|e| e.reserve_share).sum::<f64>();
    let fix = c.out.reserve_sym - total;
    alt.entities[2].reserve_share += fix;
    alt.entities[2].j_reserve += pi * fix;
    alt.entities[2].j_total += pi * fix;
    let check = verify::check_sharing(&alt, &c.out, &c.su, &c.s, TOL);
    assert_eq!(check.status, CheckStatus::Pass, "{check:?}");
}
