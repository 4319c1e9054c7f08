//! Sparse left-looking LU factorisation of a simplex basis plus a product-form
//! eta file for the column replacements between refactorisations.

/// Sparse column, row indices ascending is not required.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseCol {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseCol {
    pub fn unit(row: usize, v: f64) -> Self {
        Self {
            idx: vec![row],
            val: vec![v],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }
}

#[derive(Debug)]
pub(crate) struct Singular {
    pub step: usize,
}

/// `B Q = L U` where step `k` eliminated basis position `col[k]` on row `row[k]`.
#[derive(Debug)]
pub(crate) struct LuFactors {
    m: usize,
    /// basis position eliminated at each step
    col: Vec<usize>,
    /// pivot row of each step
    row: Vec<usize>,
    /// below-diagonal multipliers of each step, indexed by original row
    lower: Vec<SparseCol>,
    /// above-diagonal entries of each step's column, indexed by step
    upper: Vec<SparseCol>,
    diag: Vec<f64>,
}

const PIVOT_THRESHOLD: f64 = 0.01;
const SINGULAR_TOL: f64 = 1e-11;

impl LuFactors {
    /// Factorises the `m x m` matrix whose columns are `cols`.
    pub fn factorize(m: usize, cols: &[&SparseCol]) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut row_count = vec![0usize; m];
        for c in cols {
            for &i in &c.idx {
                row_count[i] += 1;
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&j| (cols[j].nnz(), j));

        let mut step_of_row = vec![usize::MAX; m];
        let mut lu = LuFactors {
            m,
            col: Vec::with_capacity(m),
            row: Vec::with_capacity(m),
            lower: Vec::with_capacity(m),
            upper: Vec::with_capacity(m),
            diag: Vec::with_capacity(m),
        };
        let mut work = vec![0.0; m];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; m];

        for (k, &j) in order.iter().enumerate() {
            for (i, v) in cols[j].iter() {
                if !mark[i] {
                    mark[i] = true;
                    touched.push(i);
                }
                work[i] += v;
            }
            // eliminate with every earlier step whose pivot row is hit
            let mut upper = SparseCol::default();
            for s in 0..k {
                let r = lu.row[s];
                let v = work[r];
                if v == 0.0 {
                    continue;
                }
                upper.idx.push(s);
                upper.val.push(v);
                work[r] = 0.0;
                for (i, l) in lu.lower[s].iter() {
                    if !mark[i] {
                        mark[i] = true;
                        touched.push(i);
                    }
                    work[i] -= l * v;
                }
            }
            let mut best = 0.0f64;
            for &i in &touched {
                if step_of_row[i] == usize::MAX {
                    best = best.max(work[i].abs());
                }
            }
            if best < SINGULAR_TOL {
                return Err(Singular { step: k });
            }
            let mut pivot = usize::MAX;
            let mut pivot_key = (usize::MAX, usize::MAX);
            for &i in &touched {
                if step_of_row[i] == usize::MAX && work[i].abs() >= PIVOT_THRESHOLD * best {
                    let key = (row_count[i], i);
                    if key < pivot_key {
                        pivot_key = key;
                        pivot = i;
                    }
                }
            }
            let d = work[pivot];
            let mut lower = SparseCol::default();
            for &i in &touched {
                if i != pivot && step_of_row[i] == usize::MAX && work[i] != 0.0 {
                    lower.idx.push(i);
                    lower.val.push(work[i] / d);
                }
            }
            for &i in &touched {
                work[i] = 0.0;
                mark[i] = false;
            }
            touched.clear();
            step_of_row[pivot] = k;
            lu.col.push(j);
            lu.row.push(pivot);
            lu.lower.push(lower);
            lu.upper.push(upper);
            lu.diag.push(d);
        }
        Ok(lu)
    }

    /// Overwrites `rhs` (indexed by row) with `B^-1 rhs` (indexed by basis position).
    pub fn ftran(&self, rhs: &mut [f64], scratch: &mut [f64]) {
        let m = self.m;
        // forward solve in step space: z[k]
        for k in 0..m {
            let z = rhs[self.row[k]];
            scratch[k] = z;
            if z != 0.0 {
                for (i, l) in self.lower[k].iter() {
                    rhs[i] -= l * z;
                }
            }
        }
        for k in (0..m).rev() {
            let z = scratch[k] / self.diag[k];
            scratch[k] = z;
            if z != 0.0 {
                for (s, u) in self.upper[k].iter() {
                    scratch[s] -= u * z;
                }
            }
        }
        for k in 0..m {
            rhs[self.col[k]] = scratch[k];
        }
    }

    /// Overwrites `rhs` (indexed by basis position) with `B^-T rhs` (indexed by row).
    pub fn btran(&self, rhs: &mut [f64], scratch: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let mut v = rhs[self.col[k]];
            for (s, u) in self.upper[k].iter() {
                v -= u * scratch[s];
            }
            scratch[k] = v / self.diag[k];
        }
        for k in (0..m).rev() {
            let mut v = scratch[k];
            for (i, l) in self.lower[k].iter() {
                v -= l * rhs[i];
            }
            rhs[self.row[k]] = v;
        }
    }
}

/// Elementary column transformation replacing basis position `pos`.
#[derive(Debug)]
struct Eta {
    pos: usize,
    pivot: f64,
    /// off-pivot entries of the FTRAN column that entered
    col: SparseCol,
}

/// Basis inverse represented as `E_k ... E_1 (LU)^-1`.
#[derive(Debug)]
pub(crate) struct BasisInverse {
    lu: LuFactors,
    etas: Vec<Eta>,
    scratch: Vec<f64>,
}

impl BasisInverse {
    pub fn new(m: usize, cols: &[&SparseCol]) -> Result<Self, Singular> {
        Ok(Self {
            lu: LuFactors::factorize(m, cols)?,
            etas: Vec::new(),
            scratch: vec![0.0; m],
        })
    }

    pub fn updates(&self) -> usize {
        self.etas.len()
    }

    pub fn ftran(&mut self, v: &mut [f64]) {
        self.lu.ftran(v, &mut self.scratch);
        for e in &self.etas {
            let xp = v[e.pos];
            if xp == 0.0 {
                continue;
            }
            let t = xp / e.pivot;
            v[e.pos] = t;
            for (i, a) in e.col.iter() {
                v[i] -= a * t;
            }
        }
    }

    pub fn btran(&mut self, v: &mut [f64]) {
        for e in self.etas.iter().rev() {
            let mut s = v[e.pos];
            for (i, a) in e.col.iter() {
                s -= a * v[i];
            }
            v[e.pos] = s / e.pivot;
        }
        self.lu.btran(v, &mut self.scratch);
    }

    /// Records that basis position `pos` was replaced by a column whose FTRAN is `alpha`.
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let mut col = SparseCol::default();
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a.abs() > 1e-14 {
                col.idx.push(i);
                col.val.push(a);
            }
        }
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            col,
        });
    }
}
