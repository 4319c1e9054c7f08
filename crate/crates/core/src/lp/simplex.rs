//! Two-phase revised primal simplex.
//!
//! Every row is brought to `a x (+ s) = b` with `b >= 0` by negation; `<=` rows
//! get a slack, and rows whose slack cannot start basic get an artificial.
//! Free structural variables never leave the basis once they enter.

use super::lu::{BasisInverse, SparseCol};
use super::model::{LinearProgram, LowerBound, Relation};
use super::{LpError, LpSolution, LpStatus};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-10;
const ZERO_CLEAN: f64 = 1e-12;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_TRIP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pricing {
    Dantzig,
    Bland,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

pub(crate) struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n: usize,
    cols: Vec<SparseCol>,
    kind: Vec<Kind>,
    free: Vec<bool>,
    cost: Vec<f64>,
    /// +1 or -1 per row, applied so that `rhs >= 0`
    row_sign: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// position in `basis`, or `usize::MAX` when nonbasic
    pos: Vec<usize>,
    x_b: Vec<f64>,
    inv: Option<BasisInverse>,
    pricing: Pricing,
    degenerate_run: usize,
    pivots: usize,
    max_pivots: usize,
}

impl<'a> Simplex<'a> {
    pub fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let row_sign: Vec<f64> = lp
            .constraints()
            .iter()
            .map(|c| if c.rhs < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let rhs: Vec<f64> = lp
            .constraints()
            .iter()
            .zip(&row_sign)
            .map(|(c, s)| c.rhs * s)
            .collect();

        let mut cols: Vec<SparseCol> = vec![SparseCol::default(); n];
        for (i, c) in lp.constraints().iter().enumerate() {
            for &(v, a) in &c.terms {
                cols[v.0].idx.push(i);
                cols[v.0].val.push(a * row_sign[i]);
            }
        }
        let mut kind = vec![Kind::Structural; n];
        let mut free: Vec<bool> = lp
            .variables()
            .iter()
            .map(|v| v.lower == LowerBound::Free)
            .collect();
        let mut cost: Vec<f64> = lp.variables().iter().map(|v| v.objective).collect();

        let mut basis = vec![usize::MAX; m];
        for (i, c) in lp.constraints().iter().enumerate() {
            if c.relation == Relation::Le {
                let j = cols.len();
                cols.push(SparseCol::unit(i, row_sign[i]));
                kind.push(Kind::Slack);
                free.push(false);
                cost.push(0.0);
                if row_sign[i] > 0.0 {
                    basis[i] = j;
                }
            }
        }
        for (i, b) in basis.iter_mut().enumerate() {
            if *b == usize::MAX {
                *b = cols.len();
                cols.push(SparseCol::unit(i, 1.0));
                kind.push(Kind::Artificial);
                free.push(false);
                cost.push(0.0);
            }
        }
        let mut pos = vec![usize::MAX; cols.len()];
        for (p, &j) in basis.iter().enumerate() {
            pos[j] = p;
        }
        let max_pivots = 50_000 + 50 * (m + cols.len());
        Simplex {
            lp,
            m,
            n,
            cols,
            kind,
            free,
            cost,
            row_sign,
            x_b: rhs.clone(),
            rhs,
            basis,
            pos,
            inv: None,
            pricing: Pricing::Dantzig,
            degenerate_run: 0,
            pivots: 0,
            max_pivots,
        }
    }

    pub fn run(mut self) -> Result<LpSolution, LpError> {
        self.refactor()?;
        let has_artificials = self.basis.iter().any(|&j| self.kind[j] == Kind::Artificial);
        if has_artificials {
            let phase1: Vec<f64> = self
                .kind
                .iter()
                .map(|k| if *k == Kind::Artificial { -1.0 } else { 0.0 })
                .collect();
            if let Step::Unbounded = self.optimize(&phase1, true)? {
                return Err(self.numerical("phase one reported an unbounded ray"));
            }
            let infeasibility: f64 = self
                .basis
                .iter()
                .zip(&self.x_b)
                .filter(|(&j, _)| self.kind[j] == Kind::Artificial)
                .map(|(_, &x)| x.max(0.0))
                .sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeasibility > FEAS_TOL * scale {
                return Ok(self.empty(LpStatus::Infeasible));
            }
        }
        let cost = self.cost.clone();
        match self.optimize(&cost, false)? {
            Step::Unbounded => Ok(self.empty(LpStatus::Unbounded)),
            _ => Ok(self.extract()),
        }
    }

    fn numerical(&self, detail: &str) -> LpError {
        LpError::Numerical {
            pivots: self.pivots,
            detail: detail.to_string(),
        }
    }

    fn empty(&self, status: LpStatus) -> LpSolution {
        LpSolution {
            status,
            primal: vec![0.0; self.n],
            duals: vec![0.0; self.m],
            objective_value: 0.0,
            iterations: self.pivots,
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        if self.m == 0 {
            return Ok(());
        }
        let refs: Vec<&SparseCol> = self.basis.iter().map(|&j| &self.cols[j]).collect();
        let inv = BasisInverse::new(self.m, &refs).map_err(|e| LpError::Numerical {
            pivots: self.pivots,
            detail: format!("singular basis at elimination step {}", e.step),
        })?;
        let mut x = self.rhs.clone();
        let mut inv = inv;
        inv.ftran(&mut x);
        self.x_b = x;
        self.inv = Some(inv);
        Ok(())
    }

    fn inverse(&mut self) -> &mut BasisInverse {
        self.inv.as_mut().expect("basis factorised before use")
    }

    fn duals_for(&mut self, cost: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
        if self.m > 0 {
            self.inverse().btran(&mut y);
        }
        y
    }

    fn reduced_cost(&self, j: usize, cost: &[f64], y: &[f64]) -> f64 {
        cost[j] - self.cols[j].iter().map(|(i, a)| a * y[i]).sum::<f64>()
    }

    /// Entering candidate and direction (+1 increases the variable, -1 decreases
    /// a free one).
    fn price(&self, cost: &[f64], y: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.cols.len() {
            if self.pos[j] != usize::MAX || self.kind[j] == Kind::Artificial {
                continue;
            }
            let d = self.reduced_cost(j, cost, y);
            let (score, dir) = if d > OPT_TOL {
                (d, 1.0)
            } else if self.free[j] && d < -OPT_TOL {
                (-d, -1.0)
            } else {
                continue;
            };
            match self.pricing {
                Pricing::Bland => return Some((j, dir)),
                Pricing::Dantzig => {
                    if best.is_none_or(|(_, s, _)| score > s) {
                        best = Some((j, score, dir));
                    }
                }
            }
        }
        best.map(|(j, _, dir)| (j, dir))
    }

    /// Leaving basis position for entering direction `alpha * dir`, with the
    /// step length.
    fn ratio_test(&self, alpha: &[f64], dir: f64, phase1: bool) -> Option<(usize, f64)> {
        let blocks = |p: usize| -> Option<f64> {
            let j = self.basis[p];
            if self.free[j] {
                return None;
            }
            let a = alpha[p] * dir;
            if !phase1 && self.kind[j] == Kind::Artificial && alpha[p].abs() > PIVOT_TOL {
                // artificials stay at zero once feasibility is reached
                return Some(a.abs());
            }
            if a > PIVOT_TOL {
                Some(a)
            } else {
                None
            }
        };
        let value = |p: usize| -> f64 {
            let j = self.basis[p];
            if !phase1 && self.kind[j] == Kind::Artificial {
                0.0
            } else {
                self.x_b[p].max(0.0)
            }
        };
        match self.pricing {
            Pricing::Bland => {
                let mut best: Option<(usize, f64)> = None;
                for p in 0..self.m {
                    let Some(a) = blocks(p) else { continue };
                    let r = value(p) / a;
                    best = match best {
                        None => Some((p, r)),
                        Some((q, s)) => {
                            if r < s - ZERO_CLEAN
                                || (r <= s + ZERO_CLEAN && self.basis[p] < self.basis[q])
                            {
                                Some((p, r))
                            } else {
                                Some((q, s))
                            }
                        }
                    };
                }
                best
            }
            Pricing::Dantzig => {
                // Harris two pass: loosen bounds to find the step cap, then take the
                // largest pivot among rows that block within it
                let mut cap = f64::INFINITY;
                for p in 0..self.m {
                    if let Some(a) = blocks(p) {
                        cap = cap.min((value(p) + HARRIS_TOL) / a);
                    }
                }
                if cap == f64::INFINITY {
                    return None;
                }
                let mut best: Option<(usize, f64, f64)> = None;
                for p in 0..self.m {
                    let Some(a) = blocks(p) else { continue };
                    let r = value(p) / a;
                    if r <= cap {
                        let better = match best {
                            None => true,
                            Some((q, _, aq)) => a > aq || (a == aq && self.basis[p] < self.basis[q]),
                        };
                        if better {
                            best = Some((p, r, a));
                        }
                    }
                }
                best.map(|(p, r, _)| (p, r))
            }
        }
    }

    fn optimize(&mut self, cost: &[f64], phase1: bool) -> Result<Step, LpError> {
        self.pricing = Pricing::Dantzig;
        self.degenerate_run = 0;
        let mut confirmed = false;
        loop {
            let y = self.duals_for(cost);
            let Some((enter, dir)) = self.price(cost, &y) else {
                if confirmed {
                    return Ok(Step::Optimal);
                }
                // refactor and re-price before declaring optimality
                self.refactor()?;
                confirmed = true;
                continue;
            };
            confirmed = false;
            if let Step::Unbounded = self.pivot(enter, dir, phase1)? {
                return Ok(Step::Unbounded);
            }
            if phase1 && self.artificial_sum() <= 0.0 {
                // feasible: nothing left for phase one to improve
                return Ok(Step::Optimal);
            }
        }
    }

    fn artificial_sum(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.x_b)
            .filter(|(&j, _)| self.kind[j] == Kind::Artificial)
            .map(|(_, &x)| x.max(0.0))
            .sum()
    }

    fn pivot(&mut self, enter: usize, dir: f64, phase1: bool) -> Result<Step, LpError> {
        if self.pivots >= self.max_pivots {
            return Err(LpError::IterationLimit {
                pivots: self.pivots,
            });
        }
        let mut alpha = vec![0.0; self.m];
        for (i, a) in self.cols[enter].iter() {
            alpha[i] = a;
        }
        if self.m > 0 {
            self.inverse().ftran(&mut alpha);
        }
        let Some((leave_pos, theta)) = self.ratio_test(&alpha, dir, phase1) else {
            return Ok(Step::Unbounded);
        };
        let theta = theta.max(0.0);
        for (x, a) in self.x_b.iter_mut().zip(&alpha) {
            *x -= theta * dir * a;
        }
        self.x_b[leave_pos] = theta * dir;
        let leave = self.basis[leave_pos];
        self.pos[leave] = usize::MAX;
        self.basis[leave_pos] = enter;
        self.pos[enter] = leave_pos;
        self.pivots += 1;

        if theta <= ZERO_CLEAN {
            self.degenerate_run += 1;
            if self.degenerate_run >= DEGENERATE_TRIP {
                self.pricing = Pricing::Bland;
            }
        } else {
            self.degenerate_run = 0;
            self.pricing = Pricing::Dantzig;
        }

        let refactor = {
            let inv = self.inverse();
            inv.update(leave_pos, &alpha);
            inv.updates() >= REFACTOR_EVERY
        };
        if refactor {
            self.refactor()?;
        }
        Ok(Step::Pivoted)
    }

    fn extract(&mut self) -> LpSolution {
        let mut primal = vec![0.0; self.n];
        for (p, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                primal[j] = self.x_b[p];
            }
        }
        for (j, x) in primal.iter_mut().enumerate() {
            if x.abs() < ZERO_CLEAN || (!self.free[j] && *x < 0.0 && *x > -FEAS_TOL) {
                *x = 0.0;
            }
        }
        let cost = self.cost.clone();
        let y = self.duals_for(&cost);
        let duals: Vec<f64> = y
            .iter()
            .zip(&self.row_sign)
            .map(|(v, s)| {
                let d = v * s;
                if d.abs() < ZERO_CLEAN {
                    0.0
                } else {
                    d
                }
            })
            .collect();
        let objective_value = self.lp.objective_value(&primal);
        LpSolution {
            status: LpStatus::Optimal,
            primal,
            duals,
            objective_value,
            iterations: self.pivots,
        }
    }
}
