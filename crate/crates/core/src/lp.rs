//! Dense two-phase primal simplex for `maximize c.z  s.t.  A z <= b`.
//!
//! Variables are either nonnegative or free; free variables are split into a
//! difference of two nonnegative columns. Pivot selection uses Dantzig's rule
//! and switches to Bland's rule after any degenerate pivot, which rules out
//! cycling. Elimination skips zero entries of the pivot row and column, which
//! is where the 0/1 pattern constraints of the learning problems pay off.

use crate::error::LpError;

/// Largest dense tableau (entries) the solver will allocate.
const MAX_TABLEAU_ENTRIES: usize = 150_000_000;

/// `maximize objective . z` subject to `matrix z <= rhs`, with `z_j >= 0`
/// wherever `nonneg[j]` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    matrix: Vec<f64>,
    rhs: Vec<f64>,
    nonneg: Vec<bool>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, nonneg: Vec<bool>) -> Result<Self, LpError> {
        if objective.is_empty() {
            return Err(LpError::Shape("at least one variable is required".into()));
        }
        if objective.len() != nonneg.len() {
            return Err(LpError::Shape(format!(
                "objective has {} entries but mask has {}",
                objective.len(),
                nonneg.len()
            )));
        }
        if objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        Ok(Self {
            objective,
            matrix: Vec::new(),
            rhs: Vec::new(),
            nonneg,
        })
    }

    pub fn from_dense(
        objective: Vec<f64>,
        rows: &[Vec<f64>],
        rhs: Vec<f64>,
        nonneg: Vec<bool>,
    ) -> Result<Self, LpError> {
        if rows.len() != rhs.len() {
            return Err(LpError::Shape(format!(
                "{} rows but {} right-hand sides",
                rows.len(),
                rhs.len()
            )));
        }
        let mut lp = Self::new(objective, nonneg)?;
        for (row, &b) in rows.iter().zip(&rhs) {
            lp.add_constraint(row, b)?;
        }
        Ok(lp)
    }

    pub fn add_constraint(&mut self, coeffs: &[f64], rhs: f64) -> Result<(), LpError> {
        if coeffs.len() != self.num_vars() {
            return Err(LpError::Shape(format!(
                "constraint has {} coefficients, expected {}",
                coeffs.len(),
                self.num_vars()
            )));
        }
        if coeffs.iter().any(|a| !a.is_finite()) {
            return Err(LpError::NonFinite("constraint matrix"));
        }
        if !rhs.is_finite() {
            return Err(LpError::NonFinite("right-hand side"));
        }
        self.matrix.extend_from_slice(coeffs);
        self.rhs.push(rhs);
        Ok(())
    }

    /// Adds a row given as `(column, coefficient)` terms; repeated columns accumulate.
    pub fn add_sparse_constraint(&mut self, terms: &[(usize, f64)], rhs: f64) -> Result<(), LpError> {
        let mut row = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            if j >= row.len() {
                return Err(LpError::Shape(format!("column {j} out of range")));
            }
            row[j] += a;
        }
        self.add_constraint(&row, rhs)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.num_vars();
        &self.matrix[i * d..(i + 1) * d]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn nonneg_mask(&self) -> &[bool] {
        &self.nonneg
    }

    /// Largest constraint or sign violation of `z` (zero when feasible).
    pub fn infeasibility(&self, z: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (i, &b) in self.rhs.iter().enumerate() {
            let lhs: f64 = self
                .row(i)
                .iter()
                .zip(z)
                .filter(|(a, _)| **a != 0.0)
                .map(|(a, x)| a * x)
                .sum();
            worst = worst.max(lhs - b);
        }
        for (x, &nn) in z.iter().zip(&self.nonneg) {
            if nn {
                worst = worst.max(-x);
            }
        }
        worst
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, x)| c * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub point: Option<Vec<f64>>,
    pub value: Option<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            point: None,
            value: None,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Phase-one residual accepted as feasible.
    pub feasibility_tol: f64,
    /// Reduced costs above this value are still improving.
    pub optimality_tol: f64,
    /// Smallest admissible pivot element.
    pub pivot_tol: f64,
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: None,
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with(lp, &SolverOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    // Column layout: structural (free variables split), slacks, artificials.
    let mut columns_of = Vec::with_capacity(lp.num_vars());
    let mut structural = 0;
    for &nn in lp.nonneg_mask() {
        if nn {
            columns_of.push((structural, None));
            structural += 1;
        } else {
            columns_of.push((structural, Some(structural + 1)));
            structural += 2;
        }
    }
    let rows = lp.num_constraints();
    let slack_start = structural;
    let art_start = slack_start + rows;
    let negative_rows: Vec<usize> = (0..rows).filter(|&i| lp.rhs()[i] < 0.0).collect();
    let width = art_start + negative_rows.len();
    if rows.saturating_mul(width + 1) > MAX_TABLEAU_ENTRIES {
        return Err(LpError::TooLarge { rows, cols: width });
    }

    let mut t = Tableau::new(rows, width);
    let mut art = art_start;
    for i in 0..rows {
        let sign = if lp.rhs()[i] < 0.0 { -1.0 } else { 1.0 };
        {
            let row = t.row_mut(i);
            for (j, &a) in lp.row(i).iter().enumerate() {
                if a != 0.0 {
                    let (pos, neg) = columns_of[j];
                    row[pos] = sign * a;
                    if let Some(neg) = neg {
                        row[neg] = -sign * a;
                    }
                }
            }
            row[slack_start + i] = sign;
            row[width] = sign * lp.rhs()[i];
        }
        if sign < 0.0 {
            t.row_mut(i)[art] = 1.0;
            t.basis[i] = art;
            art += 1;
        } else {
            t.basis[i] = slack_start + i;
        }
    }

    let max_iter = opts
        .max_iterations
        .unwrap_or(10_000 + 100 * (rows + width));
    let mut iterations = 0;

    if !negative_rows.is_empty() {
        let mut cost = vec![0.0; width];
        cost[art_start..].iter_mut().for_each(|c| *c = -1.0);
        t.set_costs(&cost);
        match t.run(opts, &mut iterations, max_iter)? {
            Outcome::Optimal => {}
            // The phase-one objective is bounded above by zero.
            Outcome::Unbounded => return Ok(LpSolution::without_point(LpStatus::Infeasible, iterations)),
        }
        let scale = lp.rhs().iter().fold(1.0_f64, |m, b| m.max(b.abs()));
        if t.value < -opts.feasibility_tol * scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, iterations));
        }
        // Drive zero-level artificials out of the basis where possible;
        // rows where that fails are redundant and keep a frozen artificial.
        for i in 0..rows {
            if t.basis[i] >= art_start {
                let row = t.row(i);
                let best = (0..art_start)
                    .filter(|&j| row[j].abs() > opts.pivot_tol)
                    .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
                if let Some(j) = best {
                    t.pivot(i, j);
                }
            }
        }
        for j in art_start..width {
            t.blocked[j] = true;
        }
    }

    let mut cost = vec![0.0; width];
    for (j, &(pos, neg)) in columns_of.iter().enumerate() {
        cost[pos] = lp.objective()[j];
        if let Some(neg) = neg {
            cost[neg] = -lp.objective()[j];
        }
    }
    t.set_costs(&cost);
    if let Outcome::Unbounded = t.run(opts, &mut iterations, max_iter)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, iterations));
    }

    let mut x = vec![0.0; width];
    for (i, &b) in t.basis.iter().enumerate() {
        x[b] = t.row(i)[width].max(0.0);
    }
    let point: Vec<f64> = columns_of
        .iter()
        .map(|&(pos, neg)| x[pos] - neg.map_or(0.0, |n| x[n]))
        .collect();
    let value = lp.evaluate(&point);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        point: Some(point),
        value: Some(value),
        iterations,
    })
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Tableau {
    width: usize,
    /// Row-major, `width + 1` entries per row; the last one is the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs of the current phase.
    cost: Vec<f64>,
    value: f64,
    blocked: Vec<bool>,
}

impl Tableau {
    fn new(rows: usize, width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; rows * (width + 1)],
            basis: vec![0; rows],
            cost: vec![0.0; width],
            value: 0.0,
            blocked: vec![false; width],
        }
    }

    fn rows(&self) -> usize {
        self.basis.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        let w = self.width + 1;
        &self.data[i * w..(i + 1) * w]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.width + 1;
        &mut self.data[i * w..(i + 1) * w]
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.cost.copy_from_slice(cost);
        self.value = 0.0;
        for i in 0..self.rows() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let w = self.width;
                let start = i * (w + 1);
                let row = &self.data[start..start + w + 1];
                for (c, &a) in self.cost.iter_mut().zip(&row[..w]) {
                    *c -= cb * a;
                }
                self.value += cb * row[w];
            }
        }
        for &b in &self.basis {
            self.cost[b] = 0.0;
        }
    }

    fn run(&mut self, opts: &SolverOptions, iterations: &mut usize, max_iter: usize) -> Result<Outcome, LpError> {
        let mut degenerate = false;
        loop {
            let entering = if degenerate {
                (0..self.width).find(|&j| !self.blocked[j] && self.cost[j] > opts.optimality_tol)
            } else {
                (0..self.width)
                    .filter(|&j| !self.blocked[j] && self.cost[j] > opts.optimality_tol)
                    .max_by(|&a, &b| self.cost[a].total_cmp(&self.cost[b]).then(b.cmp(&a)))
            };
            let Some(e) = entering else {
                return Ok(Outcome::Optimal);
            };
            let Some((r, ratio)) = self.ratio_test(e, opts.pivot_tol, degenerate) else {
                return Ok(Outcome::Unbounded);
            };
            *iterations += 1;
            if *iterations > max_iter {
                return Err(LpError::IterationLimit(max_iter));
            }
            degenerate = ratio <= 1e-12;
            self.pivot(r, e);
        }
    }

    fn ratio_test(&self, e: usize, pivot_tol: f64, bland: bool) -> Option<(usize, f64)> {
        let w = self.width;
        let mut min_ratio = f64::INFINITY;
        for i in 0..self.rows() {
            let row = self.row(i);
            if row[e] > pivot_tol {
                min_ratio = min_ratio.min(row[w] / row[e]);
            }
        }
        if !min_ratio.is_finite() {
            return None;
        }
        let slack = 1e-12 * min_ratio.abs().max(1.0);
        let candidates = (0..self.rows()).filter(|&i| {
            let row = self.row(i);
            row[e] > pivot_tol && row[w] / row[e] <= min_ratio + slack
        });
        let r = if bland {
            candidates.min_by_key(|&i| self.basis[i])
        } else {
            candidates.max_by(|&a, &b| {
                self.row(a)[e]
                    .total_cmp(&self.row(b)[e])
                    .then(self.basis[b].cmp(&self.basis[a]))
            })
        }?;
        Some((r, min_ratio.max(0.0)))
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let stride = w + 1;
        let piv = self.data[r * stride + e];
        {
            let row = &mut self.data[r * stride..(r + 1) * stride];
            for a in row.iter_mut() {
                *a /= piv;
            }
            row[e] = 1.0;
        }
        let nz: Vec<usize> = (0..=w).filter(|&j| self.data[r * stride + j] != 0.0).collect();
        let pivot_row: Vec<f64> = nz.iter().map(|&j| self.data[r * stride + j]).collect();

        for i in 0..self.rows() {
            if i == r {
                continue;
            }
            let start = i * stride;
            let factor = self.data[start + e];
            if factor == 0.0 {
                continue;
            }
            let row = &mut self.data[start..start + stride];
            for (&j, &p) in nz.iter().zip(&pivot_row) {
                row[j] -= factor * p;
            }
            row[e] = 0.0;
            if row[w].abs() < 1e-13 {
                row[w] = 0.0;
            }
        }

        let de = self.cost[e];
        if de != 0.0 {
            for (&j, &p) in nz.iter().zip(&pivot_row) {
                if j < w {
                    self.cost[j] -= de * p;
                } else {
                    self.value += de * p;
                }
            }
        }
        self.cost[e] = 0.0;
        self.basis[r] = e;
    }
}
