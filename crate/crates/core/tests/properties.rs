mod common;

use common::gen::scenario;
use common::props::{community_properties, Verdict};
use microgrid_market::market::clear_market;
use microgrid_market::scenario::Scenario;
use microgrid_market::sharing::solve_sharing;
use microgrid_market::market::standalone_profits;
use proptest::prelude::*;

const TOL: f64 = 1e-6;

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, max_global_rejects: 4096, ..ProptestConfig::default() })]

    #[test]
    fn cascade_invariants(s in scenario()) {
        match community_properties(&s, TOL) {
            Verdict::Pass => {}
            Verdict::SharingInfeasible => prop_assume!(false, "no Pareto-superior split"),
            Verdict::Fail(why) => prop_assert!(false, "{}", why),
        }
    }

    #[test]
    fn zero_reserve_price_pays_no_reserve(s in scenario()) {
        let s = Scenario { tariffs: microgrid_market::scenario::Tariffs { reserve: 0.0, ..s.tariffs.clone() }, ..s };
        let out = clear_market(&s, TOL).unwrap();
        let su = standalone_profits(&s, TOL).unwrap();
        if let Ok(sh) = solve_sharing(&out, &su, &s, TOL) {
            prop_assert!(sh.entities.iter().all(|e| e.j_reserve == 0.0));
            prop_assert!((sh.total() - out.welfare).abs() <= TOL);
        }
    }

    #[test]
    fn clearing_is_deterministic(s in scenario()) {
        let a = serde_json::to_string(&clear_market(&s, TOL).unwrap()).unwrap();
        let b = serde_json::to_string(&clear_market(&s, TOL).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}
