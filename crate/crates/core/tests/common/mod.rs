//! Independent LP oracles built on `minilp`, formulated directly over `p`.

use lpc::phi::PatternTable;
use lpc::uncertainty::UncertaintyInterval;
use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};

fn membership(table: &PatternTable, interval: &UncertaintyInterval, objective: &[f64]) -> (Problem, Vec<Variable>) {
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let p: Vec<Variable> = objective
        .iter()
        .map(|&c| problem.add_var(c, (0.0, f64::INFINITY)))
        .collect();
    let mut total = LinearExpr::empty();
    for &v in &p {
        total.add(v, 1.0);
    }
    problem.add_constraint(total, ComparisonOp::Eq, 1.0);
    let labels = table.num_labels();
    for c in 0..table.dim() {
        let mut expr = LinearExpr::empty();
        let mut any = false;
        for i in 0..table.len() {
            for y in 0..labels {
                if table.column(i, y) == c {
                    expr.add(p[i * labels + y], 1.0);
                    any = true;
                }
            }
        }
        if any {
            let mut upper = LinearExpr::empty();
            for i in 0..table.len() {
                for y in 0..labels {
                    if table.column(i, y) == c {
                        upper.add(p[i * labels + y], 1.0);
                    }
                }
            }
            problem.add_constraint(expr, ComparisonOp::Ge, interval.a[c]);
            problem.add_constraint(upper, ComparisonOp::Le, interval.b[c]);
        } else {
            assert!(
                interval.a[c] <= 0.0 && interval.b[c] >= 0.0,
                "component {c} is never hit but its interval excludes zero"
            );
        }
    }
    (problem, p)
}

/// `min_{p in U} p.q`, or `None` when `U` is empty.
pub fn min_linear(table: &PatternTable, interval: &UncertaintyInterval, q: &[f64]) -> Option<f64> {
    let (problem, _) = membership(table, interval, q);
    problem.solve().ok().map(|s| s.objective())
}

/// `min_{p in U} sum_i max_y p(i, y)`.
pub fn min_norm(table: &PatternTable, interval: &UncertaintyInterval) -> Option<f64> {
    let cells = table.num_cells();
    let labels = table.num_labels();
    let (mut problem, p) = membership(table, interval, &vec![0.0; cells]);
    for i in 0..table.len() {
        let t = problem.add_var(1.0, (0.0, f64::INFINITY));
        for y in 0..labels {
            let mut expr = LinearExpr::empty();
            expr.add(t, 1.0);
            expr.add(p[i * labels + y], -1.0);
            problem.add_constraint(expr, ComparisonOp::Ge, 0.0);
        }
    }
    problem.solve().ok().map(|s| s.objective())
}

/// Worst-case expected 0-1 loss of the rule `h` over `U`.
pub fn max_loss(table: &PatternTable, interval: &UncertaintyInterval, h: &[f64]) -> Option<f64> {
    min_linear(table, interval, h).map(|v| 1.0 - v)
}
