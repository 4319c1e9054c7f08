#![allow(dead_code)]

pub mod gen;
pub mod oracle;
pub mod props;

use std::path::PathBuf;

use microgrid_market::scenario::{load_scenario, Scenario};

/// Loads one of the worked-example scenarios shipped in `scenarios/`.
pub fn example(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"));
    load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

use microgrid_market::market::{clear_market, standalone_profits, MarketOutcome, StandaloneProfits};
use microgrid_market::sharing::{solve_sharing, SharingOutcome};

/// Both levels of the market for one scenario.
pub struct Cascade {
    pub s: Scenario,
    pub out: MarketOutcome,
    pub su: StandaloneProfits,
    pub sh: SharingOutcome,
}

impl Cascade {
    pub fn run(s: Scenario) -> Self {
        let out = clear_market(&s, 1e-6).expect("clearing");
        let su = standalone_profits(&s, 1e-6).expect("standalone");
        let sh = solve_sharing(&out, &su, &s, 1e-6).expect("sharing");
        Cascade { s, out, su, sh }
    }

    pub fn example(name: &str) -> Self {
        Self::run(example(name))
    }

    pub fn price(&self, u: &str, t: usize) -> f64 {
        self.out.entity(u).unwrap().price_com[t - 1]
    }

    pub fn j(&self, u: &str) -> f64 {
        self.sh.entity(u).unwrap().j_total
    }

    pub fn gain(&self, u: &str) -> f64 {
        self.sh.entity(u).unwrap().gain()
    }
}
