//! Dense-tableau two-phase simplex for small and medium linear programs.
//!
//! Maximizes `c·x` subject to linear rows and `x ≥ 0`. Pivoting uses
//! Dantzig's rule and falls back to Bland's rule after a run of degenerate
//! pivots, which guarantees termination.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub n_vars: usize,
    /// Maximized objective.
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_EPS: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self { n_vars, objective: vec![0.0; n_vars], rows: Vec::new() }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, cmp: Cmp, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n_vars);
        self.rows.push(Row { coeffs, cmp, rhs });
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    m: usize,
    /// Structural + slack/surplus columns.
    n_real: usize,
    /// Total columns without the right-hand side.
    n_cols: usize,
    n_vars: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
    /// Tolerance scale for reduced costs and feasibility.
    tol: f64,
}

impl Tableau {
    fn width(&self) -> usize {
        self.n_cols + 1
    }

    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n_slack = lp.rows.iter().filter(|r| r.cmp != Cmp::Eq).count();
        let n_real = lp.n_vars + n_slack;
        // Rows with rhs normalized to be nonnegative.
        let norm: Vec<(Vec<f64>, Cmp, f64)> = lp
            .rows
            .iter()
            .map(|r| {
                if r.rhs < 0.0 {
                    let cmp = match r.cmp {
                        Cmp::Le => Cmp::Ge,
                        Cmp::Ge => Cmp::Le,
                        Cmp::Eq => Cmp::Eq,
                    };
                    (r.coeffs.iter().map(|v| -v).collect(), cmp, -r.rhs)
                } else {
                    (r.coeffs.clone(), r.cmp, r.rhs)
                }
            })
            .collect();
        let n_art = norm.iter().filter(|r| r.1 != Cmp::Le).count();
        let n_cols = n_real + n_art;
        let w = n_cols + 1;
        let mut a = vec![0.0; m * w];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (lp.n_vars, n_real);
        let mut scale: f64 = 1.0;
        for (i, (coeffs, cmp, rhs)) in norm.iter().enumerate() {
            let row = &mut a[i * w..(i + 1) * w];
            row[..lp.n_vars].copy_from_slice(coeffs);
            row[n_cols] = *rhs;
            scale = scale.max(rhs.abs());
            match cmp {
                Cmp::Le => {
                    row[slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Cmp::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Cmp::Eq => {
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self { m, n_real, n_cols, n_vars: lp.n_vars, a, basis, tol: 1e-9 * scale }
    }

    fn pivot(&mut self, obj: &mut [f64], r: usize, c: usize) {
        let w = self.width();
        let p = self.a[r * w + c];
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.a[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f != 0.0 {
                let row = &mut self.a[i * w..(i + 1) * w];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Reduced-cost row for maximizing `cost` over the current basis.
    /// Entry `j` is the gain per unit of column `j`; the last entry is `-value`.
    fn objective_row(&self, cost: &[f64]) -> Vec<f64> {
        let w = self.width();
        let mut obj = vec![0.0; w];
        obj[..cost.len()].copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for (v, a) in obj.iter_mut().zip(&self.a[i * w..(i + 1) * w]) {
                    *v -= cb * a;
                }
            }
        }
        obj
    }

    /// Runs simplex iterations over columns `< allowed`.
    /// Returns false when unbounded.
    fn iterate(&mut self, obj: &mut [f64], allowed: usize) -> Result<bool> {
        let w = self.width();
        let rc_tol = 1e-10 * obj[..allowed].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut degenerate = 0;
        let max_iter = 50 * (self.m + self.n_cols) + 1000;
        for _ in 0..max_iter {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = rc_tol;
            for (j, &rc) in obj[..allowed].iter().enumerate() {
                if rc > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(c) = enter else { return Ok(true) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let aic = self.a[i * w + c];
                if aic > PIVOT_EPS {
                    let ratio = self.a[i * w + self.n_cols] / aic;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Ok(false) };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(obj, r, c);
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }

    fn run(mut self, cost: &[f64]) -> Result<LpOutcome> {
        let w = self.width();
        // Phase 1: maximize minus the sum of artificials.
        if self.n_cols > self.n_real {
            let mut c1 = vec![0.0; self.n_cols];
            for v in &mut c1[self.n_real..] {
                *v = -1.0;
            }
            let mut obj = self.objective_row(&c1);
            self.iterate(&mut obj, self.n_cols)?;
            if -obj[self.n_cols] < -self.tol {
                return Ok(LpOutcome::Infeasible);
            }
            // Drive remaining artificials out of the basis.
            let mut i = 0;
            while i < self.m {
                if self.basis[i] >= self.n_real {
                    let row = &self.a[i * w..(i + 1) * w];
                    let col = (0..self.n_real).find(|&j| row[j].abs() > 1e-9);
                    match col {
                        Some(c) => {
                            let mut dummy = vec![0.0; w];
                            self.pivot(&mut dummy, i, c);
                        }
                        None => {
                            self.a.drain(i * w..(i + 1) * w);
                            self.basis.remove(i);
                            self.m -= 1;
                            continue;
                        }
                    }
                }
                i += 1;
            }
        }
        let mut obj = self.objective_row(cost);
        if !self.iterate(&mut obj, self.n_real)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.n_vars];
        for i in 0..self.m {
            if self.basis[i] < self.n_vars {
                x[self.basis[i]] = self.a[i * w + self.n_cols].max(0.0);
            }
        }
        let value = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal { x, value })
    }
}
