//! Lower and upper bounds on the expected loss over the uncertainty set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{LpcError, Result};
use crate::learning::{learn, LpcModel};
use crate::lp::{solve_with, LinearProgram, LpStatus, SolverOptions};
use crate::phi::PatternTable;
use crate::uncertainty::UncertaintyInterval;

fn check(table: &PatternTable, interval: &UncertaintyInterval, q: &[f64]) -> Result<()> {
    if interval.dim() != table.dim() {
        return Err(LpcError::DimensionMismatch {
            expected: table.dim(),
            got: interval.dim(),
        });
    }
    if q.len() != table.num_cells() {
        return Err(LpcError::DimensionMismatch {
            expected: table.num_cells(),
            got: q.len(),
        });
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(LpcError::InvalidArgument("q must be finite".into()));
    }
    Ok(())
}

/// `max a.alpha - b.beta + gamma` subject to
/// `(alpha - beta)[col(i, y)] + gamma <= q(i, y)` for every cell.
/// Equals `min_{p in U} p.q` whenever the uncertainty set is nonempty.
pub fn kappa(table: &PatternTable, interval: &UncertaintyInterval, q: &[f64]) -> Result<f64> {
    kappa_with(table, interval, q, &SolverOptions::default())
}

pub fn kappa_with(
    table: &PatternTable,
    interval: &UncertaintyInterval,
    q: &[f64],
    opts: &SolverOptions,
) -> Result<f64> {
    check(table, interval, q)?;
    let m = table.dim();
    let mut objective = interval.a.clone();
    objective.extend(interval.b.iter().map(|b| -b));
    objective.push(1.0);
    let mut nonneg = vec![true; 2 * m];
    nonneg.push(false);
    let mut lp = LinearProgram::new(objective, nonneg)?;
    let labels = table.num_labels();
    for i in 0..table.len() {
        for y in 0..labels {
            let c = table.column(i, y);
            lp.add_sparse_constraint(&[(c, 1.0), (m + c, -1.0), (2 * m, 1.0)], q[i * labels + y])?;
        }
    }
    let sol = solve_with(&lp, opts)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.value.expect("optimal solutions carry a value")),
        LpStatus::Unbounded => Err(LpcError::EmptyUncertaintySet),
        LpStatus::Infeasible => Err(LpcError::Numerical("kappa problem reported infeasible".into())),
    }
}

/// Adds `sum p = 1` and `a <= Phi p <= b` over the first `num_cells` variables.
fn add_membership_rows(lp: &mut LinearProgram, table: &PatternTable, interval: &UncertaintyInterval) -> Result<()> {
    let cells = table.num_cells();
    let labels = table.num_labels();
    let all: Vec<(usize, f64)> = (0..cells).map(|j| (j, 1.0)).collect();
    let neg: Vec<(usize, f64)> = (0..cells).map(|j| (j, -1.0)).collect();
    lp.add_sparse_constraint(&all, 1.0)?;
    lp.add_sparse_constraint(&neg, -1.0)?;
    let mut hits: Vec<Vec<usize>> = vec![Vec::new(); table.dim()];
    for i in 0..table.len() {
        for y in 0..labels {
            hits[table.column(i, y)].push(i * labels + y);
        }
    }
    for (c, cells_at) in hits.iter().enumerate() {
        let up: Vec<(usize, f64)> = cells_at.iter().map(|&j| (j, 1.0)).collect();
        let down: Vec<(usize, f64)> = cells_at.iter().map(|&j| (j, -1.0)).collect();
        lp.add_sparse_constraint(&up, interval.b[c])?;
        lp.add_sparse_constraint(&down, -interval.a[c])?;
    }
    Ok(())
}

fn primal_point(lp: &LinearProgram, opts: &SolverOptions) -> Result<Vec<f64>> {
    let sol = solve_with(lp, opts)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.point.expect("optimal solutions carry a point")),
        LpStatus::Infeasible => Err(LpcError::EmptyUncertaintySet),
        LpStatus::Unbounded => Err(LpcError::Numerical("bounded primal reported unbounded".into())),
    }
}

/// A distribution in the uncertainty set minimizing `p.q`, with its value.
pub fn primal_min(table: &PatternTable, interval: &UncertaintyInterval, q: &[f64]) -> Result<(f64, Vec<f64>)> {
    primal_min_with(table, interval, q, &SolverOptions::default())
}

pub fn primal_min_with(
    table: &PatternTable,
    interval: &UncertaintyInterval,
    q: &[f64],
    opts: &SolverOptions,
) -> Result<(f64, Vec<f64>)> {
    check(table, interval, q)?;
    let cells = table.num_cells();
    let mut lp = LinearProgram::new(q.iter().map(|v| -v).collect(), vec![true; cells])?;
    add_membership_rows(&mut lp, table, interval)?;
    let p = primal_point(&lp, opts)?;
    let value = p.iter().zip(q).map(|(p, q)| p * q).sum();
    Ok((value, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    MaxLoss,
    MinLoss,
}

/// Distribution in the uncertainty set attaining the largest or smallest
/// expected loss of the rule `h` (cells flattened as `i * |Y| + y`).
pub fn worst_case_distribution(
    table: &PatternTable,
    interval: &UncertaintyInterval,
    h: &[f64],
    direction: Direction,
) -> Result<Vec<f64>> {
    let q: Vec<f64> = match direction {
        Direction::MaxLoss => h.to_vec(),
        Direction::MinLoss => h.iter().map(|v| -v).collect(),
    };
    Ok(primal_min(table, interval, &q)?.1)
}

/// Distribution in the uncertainty set minimizing `sum_i max_y p(i, y)`; its
/// value is `1 - R`.
pub fn least_favorable_distribution(table: &PatternTable, interval: &UncertaintyInterval) -> Result<(f64, Vec<f64>)> {
    least_favorable_distribution_with(table, interval, &SolverOptions::default())
}

pub fn least_favorable_distribution_with(
    table: &PatternTable,
    interval: &UncertaintyInterval,
    opts: &SolverOptions,
) -> Result<(f64, Vec<f64>)> {
    if interval.dim() != table.dim() {
        return Err(LpcError::DimensionMismatch {
            expected: table.dim(),
            got: interval.dim(),
        });
    }
    let cells = table.num_cells();
    let labels = table.num_labels();
    let r = table.len();
    let mut objective = vec![0.0; cells];
    objective.extend(std::iter::repeat_n(-1.0, r));
    let mut lp = LinearProgram::new(objective, vec![true; cells + r])?;
    add_membership_rows(&mut lp, table, interval)?;
    for i in 0..r {
        for y in 0..labels {
            lp.add_sparse_constraint(&[(i * labels + y, 1.0), (cells + i, -1.0)], 0.0)?;
        }
    }
    let z = primal_point(&lp, opts)?;
    let p = z[..cells].to_vec();
    let value = p
        .chunks_exact(labels)
        .map(|g| g.iter().copied().fold(0.0, f64::max))
        .sum();
    Ok((value, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSandwich {
    /// `1 + kappa(-h)`.
    pub lower_l: f64,
    /// `1 - kappa(h)`.
    pub upper_r: f64,
    pub kappa_h: f64,
    pub kappa_neg_h: f64,
}

/// Bounds on the expected loss of the rule `h` over every distribution in
/// the uncertainty set.
pub fn risk_sandwich(table: &PatternTable, interval: &UncertaintyInterval, h: &[f64]) -> Result<RiskSandwich> {
    let kappa_h = kappa(table, interval, h)?;
    let neg: Vec<f64> = h.iter().map(|v| -v).collect();
    let kappa_neg_h = kappa(table, interval, &neg)?;
    Ok(RiskSandwich {
        lower_l: 1.0 + kappa_neg_h,
        upper_r: 1.0 - kappa_h,
        kappa_h,
        kappa_neg_h,
    })
}

pub fn model_sandwich(model: &LpcModel) -> Result<RiskSandwich> {
    risk_sandwich(model.patterns(), model.interval(), &model.rule_table())
}

pub fn lower_bound(model: &LpcModel) -> Result<f64> {
    Ok(model_sandwich(model)?.lower_l)
}

/// `M * c_norm2 * sqrt((ln m + ln(2/delta)) / (2 n))`.
pub fn deviation_term(m: usize, n: usize, delta: f64, c_norm2: f64, big_m: f64) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(LpcError::InvalidArgument("m and n must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LpcError::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(c_norm2 >= 0.0 && big_m >= 0.0) || !c_norm2.is_finite() || !big_m.is_finite() {
        return Err(LpcError::InvalidArgument("c_norm2 and M must be finite and >= 0".into()));
    }
    Ok(big_m * c_norm2 * (((m as f64).ln() + (2.0 / delta).ln()) / (2.0 * n as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationBound {
    pub m: usize,
    pub n: usize,
    pub delta: f64,
    pub c_norm2: f64,
    pub m_estimate: f64,
    /// Set when `m_estimate` comes from the sampling heuristic, which can only
    /// under-estimate the true constant.
    pub optimistic: bool,
    pub term: f64,
}

impl DeviationBound {
    pub fn new(m: usize, n: usize, delta: f64, c_norm2: f64, m_estimate: f64, optimistic: bool) -> Result<Self> {
        Ok(Self {
            term: deviation_term(m, n, delta, c_norm2, m_estimate)?,
            m,
            n,
            delta,
            c_norm2,
            m_estimate,
            optimistic,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MEstimate {
    /// Largest `||lambda||_2` seen; a lower bound on the true constant.
    pub value: f64,
    pub solved: usize,
    pub skipped: usize,
}

/// Running maximum of `||lambda||_2` over point-form solutions at the
/// anchors and at `num_samples` random convex combinations of the table's
/// one-hot vertices. Sample `s` uses its own random stream, so a larger
/// `num_samples` only extends the sequence.
pub fn estimate_m_heuristic(
    table: &PatternTable,
    num_samples: usize,
    seed: u64,
    anchors: &[Vec<f64>],
) -> Result<MEstimate> {
    let mut vertices: Vec<usize> = (0..table.len()).flat_map(|i| table.columns(i).to_vec()).collect();
    vertices.sort_unstable();
    vertices.dedup();
    let opts = SolverOptions::default();
    let mut est = MEstimate {
        value: 0.0,
        solved: 0,
        skipped: 0,
    };
    let consider = |tau: Vec<f64>, est: &mut MEstimate| -> Result<()> {
        let interval = UncertaintyInterval::point(tau)?;
        match learn(table, &interval, &opts) {
            Ok(dual) => {
                let norm = dual.lambda.iter().map(|l| l * l).sum::<f64>().sqrt();
                est.value = est.value.max(norm);
                est.solved += 1;
            }
            Err(LpcError::EmptyUncertaintySet) => est.skipped += 1,
            Err(e) => return Err(e),
        }
        Ok(())
    };
    for anchor in anchors {
        if anchor.len() != table.dim() {
            return Err(LpcError::DimensionMismatch {
                expected: table.dim(),
                got: anchor.len(),
            });
        }
        consider(anchor.clone(), &mut est)?;
    }
    for s in 0..num_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let w: Vec<f64> = vertices.iter().map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        let mut tau = vec![0.0; table.dim()];
        for (&v, wv) in vertices.iter().zip(&w) {
            tau[v] = wv / total;
        }
        consider(tau, &mut est)?;
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{solve_learning, LpForm};
    use crate::prediction::{expected_loss, rule_table};

    fn label_table(n: usize) -> PatternTable {
        PatternTable::enumerate(n, 0).unwrap()
    }

    #[test]
    fn kappa_of_constants() {
        let t = PatternTable::enumerate(2, 1).unwrap();
        let iv = UncertaintyInterval::manual(vec![0.4, 0.1, 0.2, 0.3], 100, 0.5).unwrap();
        assert!(kappa(&t, &iv, &[0.0; 4]).unwrap().abs() < 1e-9);
        assert!((kappa(&t, &iv, &[1.0; 4]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kappa_of_trained_rule_is_one_minus_risk() {
        let t = PatternTable::enumerate(3, 1).unwrap();
        let tau: Vec<f64> = vec![0.2, 0.05, 0.05, 0.1, 0.15, 0.05, 0.05, 0.05, 0.3];
        let iv = UncertaintyInterval::manual(tau, 200, 0.4).unwrap();
        let d = solve_learning(&t, &iv, LpForm::Interval).unwrap();
        let h = rule_table(&t, &d.lambda, d.gamma);
        let k = kappa(&t, &iv, &h).unwrap();
        assert!((k - (1.0 - d.minimax_risk)).abs() < 1e-8);
        let s = risk_sandwich(&t, &iv, &h).unwrap();
        assert!(s.lower_l <= s.upper_r + 1e-12);
        assert!(s.lower_l >= -1e-9 && s.upper_r <= 1.0 + 1e-9);

        let p = worst_case_distribution(&t, &iv, &h, Direction::MaxLoss).unwrap();
        assert!((expected_loss(&h, &p).unwrap() - s.upper_r).abs() < 1e-8);
        assert!(iv.contains(&t.push_forward(&p), 1e-9));
        let p = worst_case_distribution(&t, &iv, &h, Direction::MinLoss).unwrap();
        assert!((expected_loss(&h, &p).unwrap() - s.lower_l).abs() < 1e-8);

        let (v, p) = least_favorable_distribution(&t, &iv).unwrap();
        assert!((v - (1.0 - d.minimax_risk)).abs() < 1e-8);
        assert!(iv.contains(&t.push_forward(&p), 1e-9));
    }

    #[test]
    fn singleton_set_pins_both_bounds() {
        let t = label_table(2);
        let iv = UncertaintyInterval::point(vec![0.6, 0.4]).unwrap();
        let h = vec![0.7, 0.3];
        let s = risk_sandwich(&t, &iv, &h).unwrap();
        assert!((s.lower_l - 0.46).abs() < 1e-9);
        assert!((s.upper_r - 0.46).abs() < 1e-9);
        for dir in [Direction::MaxLoss, Direction::MinLoss] {
            let p = worst_case_distribution(&t, &iv, &h, dir).unwrap();
            assert!((p[0] - 0.6).abs() < 1e-9 && (p[1] - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn unconstrained_uniform_rule_has_chance_bounds() {
        let t = label_table(3);
        let iv = UncertaintyInterval::from_bounds(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let s = risk_sandwich(&t, &iv, &[1.0 / 3.0; 3]).unwrap();
        assert!((s.lower_l - 2.0 / 3.0).abs() < 1e-9);
        assert!((s.upper_r - 2.0 / 3.0).abs() < 1e-9);
        let s = risk_sandwich(&t, &iv, &[1.0, 0.0, 0.0]).unwrap();
        assert!(s.lower_l.abs() < 1e-9);
        assert!((s.upper_r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_set_is_reported() {
        let t = label_table(2);
        let iv = UncertaintyInterval::point(vec![0.3, 0.3]).unwrap();
        assert_eq!(kappa(&t, &iv, &[0.5, 0.5]).unwrap_err(), LpcError::EmptyUncertaintySet);
        assert_eq!(
            worst_case_distribution(&t, &iv, &[0.5, 0.5], Direction::MaxLoss).unwrap_err(),
            LpcError::EmptyUncertaintySet
        );
        assert_eq!(
            least_favorable_distribution(&t, &iv).unwrap_err(),
            LpcError::EmptyUncertaintySet
        );
    }

    #[test]
    fn deviation_examples() {
        let v = deviation_term(81, 10_000, 0.05, 9.0, 1.0).unwrap();
        let expected = 9.0 * ((81f64.ln() + 40f64.ln()) / 2.0).sqrt() / 100.0;
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.18094).abs() < 1e-5);
        let quarter = deviation_term(81, 40_000, 0.05, 9.0, 1.0).unwrap();
        assert!((quarter - 0.5 * v).abs() < 1e-15);
        assert_eq!(deviation_term(81, 100, 0.05, 9.0, 0.0).unwrap(), 0.0);
        assert!(deviation_term(81, 100, 1.5, 9.0, 1.0).is_err());
        assert!(deviation_term(81, 0, 0.5, 9.0, 1.0).is_err());
        let b = DeviationBound::new(81, 10_000, 0.05, 9.0, 1.0, true).unwrap();
        assert_eq!(b.term, v);
    }

    #[test]
    fn m_heuristic_properties() {
        let single = label_table(3);
        let once = estimate_m_heuristic(&single, 1, 4, &[]).unwrap();
        assert_eq!(once, estimate_m_heuristic(&single, 1, 4, &[]).unwrap());
        assert_eq!(once.solved, 1);

        let t = PatternTable::enumerate(2, 2).unwrap();
        let mut last = 0.0;
        for n in [0, 1, 3, 8, 20] {
            let est = estimate_m_heuristic(&t, n, 9, &[]).unwrap();
            assert!(est.value >= last);
            last = est.value;
        }
        let anchor = vec![0.3, 0.0, 0.1, 0.1, 0.0, 0.2, 0.1, 0.2];
        let own = learn(&t, &UncertaintyInterval::point(anchor.clone()).unwrap(), &SolverOptions::default()).unwrap();
        let own_norm = own.lambda.iter().map(|l| l * l).sum::<f64>().sqrt();
        let est = estimate_m_heuristic(&t, 5, 9, &[anchor]).unwrap();
        assert!(est.value >= own_norm);
    }
}
