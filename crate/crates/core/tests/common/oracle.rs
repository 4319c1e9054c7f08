//! Brute-force reference for tiny LPs: enumerate every basic solution of the
//! split (all variables non-negative) problem and keep the best feasible one.

use microgrid_market::lp::{LinearProgram, LowerBound, Relation};
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub struct SmallLp {
    pub objective: Vec<i32>,
    pub free: Vec<bool>,
    pub rows: Vec<SmallRow>,
}

#[derive(Debug, Clone)]
pub struct SmallRow {
    pub coef: Vec<i32>,
    pub equality: bool,
    pub rhs: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

impl SmallLp {
    pub fn to_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::new();
        let vars: Vec<_> = self
            .objective
            .iter()
            .zip(&self.free)
            .enumerate()
            .map(|(j, (&c, &free))| {
                let lower = if free { LowerBound::Free } else { LowerBound::Zero };
                lp.add_var(format!("x{j}"), lower, c as f64).unwrap()
            })
            .collect();
        for (i, r) in self.rows.iter().enumerate() {
            let rel = if r.equality { Relation::Eq } else { Relation::Le };
            let terms = vars.iter().zip(&r.coef).map(|(&v, &a)| (v, a as f64));
            lp.add_constraint(format!("r{i}"), terms, rel, r.rhs as f64)
                .unwrap();
        }
        lp
    }

    /// Columns after replacing each free variable by a difference of two
    /// non-negative ones.
    fn split(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut c = Vec::new();
        let mut map: Vec<(usize, f64)> = Vec::new();
        for (j, &cj) in self.objective.iter().enumerate() {
            c.push(cj as f64);
            map.push((j, 1.0));
            if self.free[j] {
                c.push(-(cj as f64));
                map.push((j, -1.0));
            }
        }
        let rows = self
            .rows
            .iter()
            .map(|r| map.iter().map(|&(j, s)| s * r.coef[j] as f64).collect())
            .collect();
        (c, rows)
    }

    pub fn brute_force(&self) -> Oracle {
        let (c, a) = self.split();
        let n = c.len();
        let eq: Vec<(Vec<f64>, f64)> = self
            .rows
            .iter()
            .zip(&a)
            .filter(|(r, _)| r.equality)
            .map(|(r, row)| (row.clone(), r.rhs as f64))
            .collect();
        let mut ineq: Vec<(Vec<f64>, f64)> = self
            .rows
            .iter()
            .zip(&a)
            .filter(|(r, _)| !r.equality)
            .map(|(r, row)| (row.clone(), r.rhs as f64))
            .collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = -1.0;
            ineq.push((e, 0.0));
        }
        let Some(best) = best_vertex(&c, &eq, &ineq) else {
            return Oracle::Infeasible;
        };
        // recession cone normalised to a simplex: any direction improving c is a ray
        let mut cone_eq: Vec<(Vec<f64>, f64)> = eq.iter().map(|(r, _)| (r.clone(), 0.0)).collect();
        cone_eq.push((vec![1.0; n], 1.0));
        let cone_ineq: Vec<(Vec<f64>, f64)> = ineq.iter().map(|(r, _)| (r.clone(), 0.0)).collect();
        match best_vertex(&c, &cone_eq, &cone_ineq) {
            Some(ray) if ray > 1e-9 => Oracle::Unbounded,
            _ => Oracle::Optimal(best),
        }
    }

    /// Objective values of all feasible vertices (for weak-duality spot checks).
    pub fn feasible_vertices(&self) -> Vec<Vec<f64>> {
        let (c, a) = self.split();
        let n = c.len();
        let mut all: Vec<(Vec<f64>, f64, bool)> = self
            .rows
            .iter()
            .zip(&a)
            .map(|(r, row)| (row.clone(), r.rhs as f64, r.equality))
            .collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = -1.0;
            all.push((e, 0.0, false));
        }
        let mut out = Vec::new();
        enumerate(&all, n, |x| {
            // fold split columns back onto the original variables
            let mut orig = vec![0.0; self.objective.len()];
            let mut k = 0;
            for (j, o) in orig.iter_mut().enumerate() {
                *o += x[k];
                k += 1;
                if self.free[j] {
                    *o -= x[k];
                    k += 1;
                }
            }
            out.push(orig);
        });
        out
    }
}

fn best_vertex(c: &[f64], eq: &[(Vec<f64>, f64)], ineq: &[(Vec<f64>, f64)]) -> Option<f64> {
    let n = c.len();
    let all: Vec<(Vec<f64>, f64, bool)> = eq
        .iter()
        .map(|(r, b)| (r.clone(), *b, true))
        .chain(ineq.iter().map(|(r, b)| (r.clone(), *b, false)))
        .collect();
    let mut best: Option<f64> = None;
    enumerate(&all, n, |x| {
        let v: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    });
    best
}

/// Calls `f` on every feasible point determined by all equalities plus a subset
/// of the inequalities taken as active, whenever that system has a unique solution.
fn enumerate(all: &[(Vec<f64>, f64, bool)], n: usize, mut f: impl FnMut(&[f64])) {
    let eqs: Vec<usize> = (0..all.len()).filter(|&i| all[i].2).collect();
    let ineqs: Vec<usize> = (0..all.len()).filter(|&i| !all[i].2).collect();
    let k = ineqs.len();
    for mask in 0u32..(1u32 << k) {
        let size = mask.count_ones() as usize;
        if size + eqs.len() < n || size > n {
            continue;
        }
        let mut rows: Vec<usize> = eqs.clone();
        rows.extend((0..k).filter(|b| mask & (1 << b) != 0).map(|b| ineqs[b]));
        let Some(x) = solve_unique(all, &rows, n) else {
            continue;
        };
        let feasible = all.iter().all(|(r, b, e)| {
            let s: f64 = r.iter().zip(&x).map(|(a, v)| a * v).sum();
            if *e {
                (s - b).abs() <= 1e-9
            } else {
                s <= b + 1e-9
            }
        });
        if feasible {
            f(&x);
        }
    }
}

fn solve_unique(all: &[(Vec<f64>, f64, bool)], rows: &[usize], n: usize) -> Option<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| {
            let mut r = all[i].0.clone();
            r.push(all[i].1);
            r
        })
        .collect();
    let mut rank = 0;
    let mut pivot_cols = Vec::new();
    for col in 0..n {
        let Some(p) = (rank..m.len())
            .filter(|&r| m[r][col].abs() > 1e-10)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
        else {
            continue;
        };
        m.swap(rank, p);
        let piv = m[rank][col];
        for v in m[rank].iter_mut() {
            *v /= piv;
        }
        let pivot_row = m[rank].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != rank && row[col] != 0.0 {
                let factor = row[col];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        pivot_cols.push(col);
        rank += 1;
    }
    if rank < n {
        return None;
    }
    if m[rank..].iter().any(|r| r[n].abs() > 1e-9) {
        return None;
    }
    let mut x = vec![0.0; n];
    for (r, &col) in pivot_cols.iter().enumerate() {
        x[col] = m[r][n];
    }
    Some(x)
}

fn coefficient() -> impl Strategy<Value = i32> {
    prop_oneof![2 => Just(0), 5 => -5i32..=5]
}

pub fn small_lp() -> impl Strategy<Value = SmallLp> {
    (1usize..=6, 0usize..=6).prop_flat_map(|(n, m)| {
        let objective = proptest::collection::vec(-5i32..=5, n);
        let free = proptest::collection::vec(prop::bool::weighted(0.2), n).prop_map(|mut f| {
            // at most two free columns keeps the split problem small
            let mut seen = 0;
            for v in f.iter_mut() {
                if *v {
                    seen += 1;
                    if seen > 2 {
                        *v = false;
                    }
                }
            }
            f
        });
        let row = (
            proptest::collection::vec(coefficient(), n),
            prop::bool::weighted(0.25),
            -5i32..=5,
        )
            .prop_map(|(coef, equality, rhs)| SmallRow {
                coef,
                equality,
                rhs,
            });
        let rows = proptest::collection::vec(row, m);
        (objective, free, rows).prop_map(|(objective, free, rows)| SmallLp {
            objective,
            free,
            rows,
        })
    })
}
