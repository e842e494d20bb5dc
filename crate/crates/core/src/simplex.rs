//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Problems are `maximize c·x` subject to linear rows and `x ≥ 0`. Phase 1
//! can be run once and its feasible basis reused for many objectives over
//! the same constraint set ([`FeasibleBasis`]).

use thiserror::Error;

/// Pivot, feasibility and optimality tolerance.
pub const LP_TOL: f64 = 1e-9;

const MAX_PIVOTS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    LessEq,
    GreaterEq,
    Equal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }
}

/// `maximize objective·x` subject to `constraints`, `x ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub pivots: usize,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LpError {
    #[error("infeasible (phase-1 residual {0:.3e})")]
    Infeasible(f64),
    #[error("unbounded objective")]
    Unbounded,
    #[error("pivot limit reached")]
    IterationLimit,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl LinearProgram {
    pub fn maximize(&self) -> Result<LpSolution, LpError> {
        FeasibleBasis::find(self.objective.len(), &self.constraints)?.maximize(&self.objective)
    }
}

#[derive(Clone, Debug)]
struct Tableau {
    /// Row-major, `m × (cols + 1)`, last column is the right-hand side.
    a: Vec<f64>,
    m: usize,
    cols: usize,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn stride(&self) -> usize {
        self.cols + 1
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.stride() + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.a[i * self.stride() + self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize, z: &mut [f64]) {
        let s = self.stride();
        let p = self.a[row * s + col];
        for v in &mut self.a[row * s..(row + 1) * s] {
            *v /= p;
        }
        let (before, rest) = self.a.split_at_mut(row * s);
        let (prow, after) = rest.split_at_mut(s);
        for other in before.chunks_exact_mut(s).chain(after.chunks_exact_mut(s)) {
            let f = other[col];
            if f != 0.0 {
                for (o, pv) in other.iter_mut().zip(prow.iter()) {
                    *o -= f * pv;
                }
                other[col] = 0.0;
            }
        }
        let f = z[col];
        if f != 0.0 {
            for (o, pv) in z.iter_mut().zip(prow.iter()) {
                *o -= f * pv;
            }
            z[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Reduced-cost row for `cost` (length `cols`); last entry is `-c_B·b`.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.stride());
        z.extend_from_slice(cost);
        z.push(0.0);
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                let row = &self.a[i * self.stride()..(i + 1) * self.stride()];
                for (zj, rj) in z.iter_mut().zip(row) {
                    *zj -= cb * rj;
                }
            }
        }
        z
    }

    /// Primal simplex from a feasible basis, Bland's rule. `allowed` limits
    /// which columns may enter.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<usize, LpError> {
        let mut z = self.reduced_costs(cost);
        let mut pivots = 0;
        loop {
            let Some(col) = (0..allowed).find(|&j| z[j] > LP_TOL) else {
                return Ok(pivots);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let t = self.at(i, col);
                if t > LP_TOL {
                    let ratio = self.rhs(i).max(0.0) / t;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - LP_TOL
                                || (ratio <= best + LP_TOL && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio.min(best)))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col, &mut z);
            pivots += 1;
            if pivots > MAX_PIVOTS {
                return Err(LpError::IterationLimit);
            }
        }
    }
}

/// A basic feasible solution of a constraint system with artificial columns
/// removed, ready to be optimised against any objective.
#[derive(Clone, Debug)]
pub struct FeasibleBasis {
    n_vars: usize,
    tableau: Tableau,
    phase1_pivots: usize,
}

impl FeasibleBasis {
    pub fn find(n_vars: usize, constraints: &[Constraint]) -> Result<Self, LpError> {
        let mut rows = Vec::with_capacity(constraints.len());
        for (k, c) in constraints.iter().enumerate() {
            if c.coeffs.len() != n_vars {
                return Err(LpError::Dimension(format!(
                    "row {k} has {} coefficients, expected {n_vars}",
                    c.coeffs.len()
                )));
            }
            let flip = c.rhs < 0.0 || (c.rhs == 0.0 && c.relation == Relation::GreaterEq);
            let sign = if flip { -1.0 } else { 1.0 };
            let relation = match (c.relation, flip) {
                (Relation::LessEq, true) => Relation::GreaterEq,
                (Relation::GreaterEq, true) => Relation::LessEq,
                (r, _) => r,
            };
            rows.push((
                c.coeffs.iter().map(|v| sign * v).collect::<Vec<_>>(),
                relation,
                sign * c.rhs,
            ));
        }

        let n_slack = rows.iter().filter(|r| r.1 != Relation::Equal).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::LessEq).count();
        let cols = n_vars + n_slack + n_art;
        let m = rows.len();
        let stride = cols + 1;
        let mut a = vec![0.0; m * stride];
        let mut basis = vec![0; m];
        let (mut s, mut r) = (n_vars, n_vars + n_slack);
        for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
            let row = &mut a[i * stride..(i + 1) * stride];
            row[..n_vars].copy_from_slice(coeffs);
            row[cols] = *rhs;
            match rel {
                Relation::LessEq => {
                    row[s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Relation::GreaterEq => {
                    row[s] = -1.0;
                    s += 1;
                    row[r] = 1.0;
                    basis[i] = r;
                    r += 1;
                }
                Relation::Equal => {
                    row[r] = 1.0;
                    basis[i] = r;
                    r += 1;
                }
            }
        }
        let mut t = Tableau { a, m, cols, basis };
        let real_cols = n_vars + n_slack;

        let mut phase1_pivots = 0;
        if n_art > 0 {
            let mut cost = vec![0.0; cols];
            cost[real_cols..].iter_mut().for_each(|c| *c = -1.0);
            phase1_pivots = t.optimize(&cost, cols)?;
            let residual: f64 = (0..m)
                .filter(|&i| t.basis[i] >= real_cols)
                .map(|i| t.rhs(i))
                .sum();
            if residual > LP_TOL * (1.0 + m as f64) {
                return Err(LpError::Infeasible(residual));
            }
            // Drive zero-level artificials out; rows where that is impossible
            // are linearly dependent and dropped.
            let mut z = vec![0.0; cols + 1];
            let mut keep = vec![true; m];
            for i in 0..m {
                if t.basis[i] >= real_cols {
                    match (0..real_cols).find(|&j| t.at(i, j).abs() > LP_TOL) {
                        Some(j) => {
                            t.pivot(i, j, &mut z);
                            phase1_pivots += 1;
                        }
                        None => keep[i] = false,
                    }
                }
            }
            let new_stride = real_cols + 1;
            let mut a = Vec::with_capacity(m * new_stride);
            let mut basis = Vec::with_capacity(m);
            for i in (0..m).filter(|&i| keep[i]) {
                let row = &t.a[i * stride..(i + 1) * stride];
                a.extend_from_slice(&row[..real_cols]);
                a.push(row[cols]);
                basis.push(t.basis[i]);
            }
            t = Tableau {
                m: basis.len(),
                a,
                cols: real_cols,
                basis,
            };
        }
        Ok(Self {
            n_vars,
            tableau: t,
            phase1_pivots,
        })
    }

    /// Independent rows retained after phase 1.
    pub fn rank(&self) -> usize {
        self.tableau.m
    }

    pub fn phase1_pivots(&self) -> usize {
        self.phase1_pivots
    }

    pub fn maximize(&self, objective: &[f64]) -> Result<LpSolution, LpError> {
        if objective.len() != self.n_vars {
            return Err(LpError::Dimension(format!(
                "objective has {} entries, expected {}",
                objective.len(),
                self.n_vars
            )));
        }
        let mut t = self.tableau.clone();
        let mut cost = vec![0.0; t.cols];
        cost[..self.n_vars].copy_from_slice(objective);
        let pivots = t.optimize(&cost, t.cols)?;
        let mut x = vec![0.0; self.n_vars];
        for (i, &bv) in t.basis.iter().enumerate() {
            if bv < self.n_vars {
                x[bv] = t.rhs(i).max(0.0);
            }
        }
        let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { value, x, pivots })
    }
}
