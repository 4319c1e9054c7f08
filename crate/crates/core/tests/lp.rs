mod common;

use common::oracle::{small_lp, Oracle};
use microgrid_market::lp::{
    check_certificate, solve, LinearProgram, LowerBound, LpError, LpStatus, Relation,
};
use proptest::prelude::*;

fn single_bound() -> LinearProgram {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", LowerBound::Zero, 1.0).unwrap();
    lp.add_constraint("cap", [(x, 1.0)], Relation::Le, 2.0).unwrap();
    lp
}

#[test]
fn single_bound_lp() {
    let lp = single_bound();
    let sol = solve(&lp, 1e-9).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert_eq!(sol.primal, vec![2.0]);
    assert_eq!(sol.duals, vec![1.0]);
    assert_eq!(sol.objective_value, 2.0);
    let report = check_certificate(&lp, &sol, 1e-12);
    assert!(report.pass, "{report}");
    assert_eq!(report.duality_gap, 0.0);
    assert_eq!(report.dual_infeasibility, 0.0);
}

#[test]
fn perturbed_dual_is_rejected() {
    let lp = single_bound();
    let mut sol = solve(&lp, 1e-9).unwrap();
    sol.duals[0] -= 0.5;
    let report = check_certificate(&lp, &sol, 1e-6);
    assert!(!report.pass);
    assert!((report.dual_infeasibility - 0.5).abs() < 1e-12, "{report}");
}

#[test]
fn polygon_lp_has_expected_duals() {
    // vertices (0,0), (2,0), (2,2), (0,4): best is (2,2) with value 10
    let mut lp = LinearProgram::new();
    let a = lp.add_var("a", LowerBound::Zero, 3.0).unwrap();
    let b = lp.add_var("b", LowerBound::Zero, 2.0).unwrap();
    lp.add_constraint("total", [(a, 1.0), (b, 1.0)], Relation::Le, 4.0)
        .unwrap();
    lp.add_constraint("a_cap", [(a, 1.0)], Relation::Le, 2.0).unwrap();
    let sol = solve(&lp, 1e-9).unwrap();
    assert!((sol.objective_value - 10.0).abs() < 1e-12);
    assert!((sol.duals[0] - 2.0).abs() < 1e-12);
    assert!((sol.duals[1] - 1.0).abs() < 1e-12);
}

#[test]
fn empty_feasible_set() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", LowerBound::Zero, 1.0).unwrap();
    lp.add_constraint("neg", [(x, 1.0)], Relation::Le, -1.0).unwrap();
    assert_eq!(solve(&lp, 1e-9).unwrap().status, LpStatus::Infeasible);
}

#[test]
fn unbounded_ray() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", LowerBound::Zero, 1.0).unwrap();
    let y = lp.add_var("y", LowerBound::Free, 0.0).unwrap();
    lp.add_constraint("link", [(x, 1.0), (y, -1.0)], Relation::Le, 1.0)
        .unwrap();
    assert_eq!(solve(&lp, 1e-9).unwrap().status, LpStatus::Unbounded);
}

#[test]
fn free_variable_goes_negative() {
    // max -y  s.t.  y >= -6 written as -y <= 6, y = 2x - 5, x <= 1
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", LowerBound::Zero, 0.0).unwrap();
    let y = lp.add_var("y", LowerBound::Free, -1.0).unwrap();
    lp.add_constraint("floor", [(y, -1.0)], Relation::Le, 6.0).unwrap();
    lp.add_constraint("def", [(y, 1.0), (x, -2.0)], Relation::Eq, -5.0)
        .unwrap();
    lp.add_constraint("x_cap", [(x, 1.0)], Relation::Le, 1.0).unwrap();
    let sol = solve(&lp, 1e-9).unwrap();
    assert!((sol.primal[1] + 5.0).abs() < 1e-12, "{:?}", sol.primal);
    assert!((sol.objective_value - 5.0).abs() < 1e-12);
    assert!(check_certificate(&lp, &sol, 1e-12).pass);
}

#[test]
fn no_rows() {
    let mut lp = LinearProgram::new();
    lp.add_var("x", LowerBound::Zero, -1.0).unwrap();
    let sol = solve(&lp, 1e-9).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert_eq!(sol.objective_value, 0.0);
    lp.add_var("y", LowerBound::Zero, 1.0).unwrap();
    assert_eq!(solve(&lp, 1e-9).unwrap().status, LpStatus::Unbounded);
}

#[test]
fn same_input_same_output() {
    // highly degenerate: many rows through the optimum
    let mut lp = LinearProgram::new();
    let v: Vec<_> = (0..4)
        .map(|j| lp.add_var(format!("x{j}"), LowerBound::Zero, 1.0).unwrap())
        .collect();
    for i in 0..8 {
        let terms = v.iter().enumerate().map(|(j, &x)| (x, ((i + j) % 3) as f64 + 1.0));
        lp.add_constraint(format!("r{i}"), terms, Relation::Le, 0.0).unwrap();
    }
    let a = solve(&lp, 1e-9).unwrap();
    let b = solve(&lp, 1e-9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.objective_value, 0.0);
}

#[test]
fn errors_are_named() {
    let e = LpError::IterationLimit { pivots: 42 };
    assert!(e.to_string().contains("42"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn matches_vertex_enumeration(small in small_lp()) {
        let lp = small.to_lp();
        let sol = solve(&lp, 1e-9).unwrap();
        match small.brute_force() {
            Oracle::Optimal(best) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective_value - best).abs() <= 1e-9,
                    "solver {} vs oracle {}", sol.objective_value, best);
                let report = check_certificate(&lp, &sol, 1e-9);
                prop_assert!(report.pass, "{}", report);
                // weak duality against every primal-feasible vertex
                let dual_obj = lp.dual_objective_value(&sol.duals);
                for x in small.feasible_vertices() {
                    prop_assert!(dual_obj >= lp.objective_value(&x) - 1e-9);
                }
            }
            Oracle::Infeasible => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Oracle::Unbounded => prop_assert_eq!(sol.status, LpStatus::Unbounded),
        }
    }
}
