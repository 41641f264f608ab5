//! The randomized minimax rule and its losses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{uniform_draw, LabeledDataset};
use crate::error::{LpcError, Result};
use crate::learning::LpcModel;
use crate::phi::{pattern_matrix, PatternTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub probs: Vec<f64>,
}

impl LabelDistribution {
    /// Inverse-CDF sample for a uniform draw `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (y, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        // rounding left u above the final partial sum
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Most probable label, ties to the smallest index.
    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (y, &p)| if p > best.1 { (y, p) } else { best })
            .0
    }
}

/// `h(y) = (score_y + gamma)^+ + (1 - sum_y (score_y + gamma)^+) / |Y|`.
///
/// When the clipped sum exceeds one, which the learning constraints rule out
/// for every pattern in the table, the clipped scores are normalized instead.
pub fn rule_from_scores(scores: &[f64], gamma: f64) -> Vec<f64> {
    let clipped: Vec<f64> = scores.iter().map(|s| (s + gamma).max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    if sum > 1.0 {
        return clipped.iter().map(|c| c / sum).collect();
    }
    let rest = (1.0 - sum) / scores.len() as f64;
    clipped.iter().map(|c| c + rest).collect()
}

/// Rule values for every (pattern, label) cell, flattened as `i * |Y| + y`.
pub fn rule_table(table: &PatternTable, lambda: &[f64], gamma: f64) -> Vec<f64> {
    (0..table.len())
        .flat_map(|i| rule_from_scores(&table.scores(i, lambda), gamma))
        .collect()
}

/// `1 - p.h` for a distribution `p` over the same cells as `h`.
pub fn expected_loss(h: &[f64], p: &[f64]) -> Result<f64> {
    if h.len() != p.len() {
        return Err(LpcError::DimensionMismatch {
            expected: h.len(),
            got: p.len(),
        });
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v >= -1e-12)) || (total - 1.0).abs() > 1e-9 {
        return Err(LpcError::InvalidArgument("p is not a probability distribution".into()));
    }
    Ok(1.0 - h.iter().zip(p).map(|(h, p)| h * p).sum::<f64>())
}

impl LpcModel {
    /// Label scores `phi_x^T lambda` for a prediction tuple.
    pub fn pattern_scores(&self, pattern: &[usize]) -> Result<Vec<f64>> {
        let columns = match self.patterns().find(pattern) {
            Some(i) => self.patterns().columns(i).to_vec(),
            None => pattern_matrix(self.num_labels(), pattern)?,
        };
        Ok(columns.iter().map(|&c| self.lambda()[c]).collect())
    }

    pub fn rule_for_pattern(&self, pattern: &[usize]) -> Result<LabelDistribution> {
        Ok(LabelDistribution {
            probs: rule_from_scores(&self.pattern_scores(pattern)?, self.gamma()),
        })
    }

    pub fn rule_probabilities(&self, x: &[f64]) -> Result<LabelDistribution> {
        self.rule_for_pattern(&self.gf().pattern(x)?)
    }

    /// Sampled label; reproducible for a fixed `(seed, draw_index)`.
    pub fn predict(&self, x: &[f64], seed: u64, draw_index: u64) -> Result<usize> {
        Ok(self.rule_probabilities(x)?.sample(uniform_draw(seed, draw_index)))
    }

    pub fn predict_deterministic(&self, x: &[f64]) -> Result<usize> {
        Ok(self.rule_probabilities(x)?.argmax())
    }

    /// Rule values over the model's own pattern table.
    pub fn rule_table(&self) -> Vec<f64> {
        rule_table(self.patterns(), self.lambda(), self.gamma())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    /// Mean of `1 - h(x_i, y_i)`, free of sampling noise.
    Exact,
    Randomized { seed: u64 },
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub exact: f64,
    pub randomized: f64,
    pub argmax: f64,
    pub n: usize,
}

fn rules_for(model: &LpcModel, dataset: &LabeledDataset) -> Result<Vec<LabelDistribution>> {
    if dataset.is_empty() {
        return Err(LpcError::EmptyDataset);
    }
    if dataset.num_labels() > model.num_labels() {
        return Err(LpcError::LabelOutOfRange {
            label: dataset.num_labels() - 1,
            num_labels: model.num_labels(),
        });
    }
    dataset
        .features()
        .par_iter()
        .map(|x| model.rule_probabilities(x))
        .collect()
}

pub fn empirical_error(model: &LpcModel, dataset: &LabeledDataset, mode: ErrorMode) -> Result<f64> {
    let rules = rules_for(model, dataset)?;
    let n = dataset.len() as f64;
    let labels = dataset.labels();
    let loss: f64 = match mode {
        ErrorMode::Exact => rules.iter().zip(labels).map(|(h, &y)| 1.0 - h.probs[y]).sum(),
        ErrorMode::Randomized { seed } => rules
            .iter()
            .zip(labels)
            .enumerate()
            .filter(|(i, (h, &y))| h.sample(uniform_draw(seed, *i as u64)) != y)
            .count() as f64,
        ErrorMode::Deterministic => rules
            .iter()
            .zip(labels)
            .filter(|(h, &y)| h.argmax() != y)
            .count() as f64,
    };
    Ok(loss / n)
}

/// All three error measures from one pass over the dataset.
pub fn evaluate(model: &LpcModel, dataset: &LabeledDataset, seed: u64) -> Result<ErrorReport> {
    let rules = rules_for(model, dataset)?;
    let mut exact = 0.0;
    let mut randomized = 0usize;
    let mut argmax = 0usize;
    for (i, (h, &y)) in rules.iter().zip(dataset.labels()).enumerate() {
        exact += 1.0 - h.probs[y];
        randomized += usize::from(h.sample(uniform_draw(seed, i as u64)) != y);
        argmax += usize::from(h.argmax() != y);
    }
    let n = dataset.len();
    Ok(ErrorReport {
        exact: exact / n as f64,
        randomized: randomized as f64 / n as f64,
        argmax: argmax as f64 / n as f64,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{BaseClassifier, ClassifierKind};
    use crate::learning::{train, TrainMode};
    use crate::phi::GeneratingFunction;
    use crate::uncertainty::UncertaintyInterval;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn rule_examples() {
        assert!(close(&rule_from_scores(&[-1.0, -0.5, -2.0], 0.0), &[1.0 / 3.0; 3]));
        assert!(close(&rule_from_scores(&[0.6, 0.4], 0.0), &[0.6, 0.4]));
        assert!(close(&rule_from_scores(&[0.3, -0.1], 0.2), &[0.7, 0.3]));
        // clipped sum above one falls back to normalization
        assert!(close(&rule_from_scores(&[1.0, 1.0], 0.0), &[0.5, 0.5]));
    }

    #[test]
    fn argmax_examples() {
        let d = |p: Vec<f64>| LabelDistribution { probs: p };
        assert_eq!(d(vec![0.7, 0.3]).argmax(), 0);
        assert_eq!(d(vec![0.5, 0.5]).argmax(), 0);
        assert_eq!(d(vec![0.25; 4]).argmax(), 0);
        assert_eq!(d(vec![0.2, 0.5, 0.3]).argmax(), 1);
    }

    #[test]
    fn sampling_examples() {
        let point = LabelDistribution { probs: vec![1.0, 0.0, 0.0] };
        for i in 0..100 {
            assert_eq!(point.sample(uniform_draw(3, i)), 0);
        }
        let uniform = LabelDistribution { probs: vec![0.5, 0.5] };
        let run = |seed| (0..50).map(|i| uniform.sample(uniform_draw(seed, i))).collect::<Vec<_>>();
        assert_eq!(run(17), run(17));
        assert_ne!(run(17), run(18));
        assert_eq!(LabelDistribution { probs: vec![0.3, 0.7, 0.0] }.sample(1.0 - 1e-17), 1);
    }

    #[test]
    fn sampled_frequencies_match() {
        let h = LabelDistribution { probs: vec![0.2, 0.5, 0.3] };
        let mut counts = [0usize; 3];
        let draws = 100_000;
        for i in 0..draws {
            counts[h.sample(uniform_draw(42, i))] += 1;
        }
        for (c, p) in counts.iter().zip(&h.probs) {
            assert!((*c as f64 / draws as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn expected_loss_examples() {
        let uniform = vec![1.0 / 3.0; 6];
        let p = vec![0.1, 0.2, 0.3, 0.1, 0.2, 0.1];
        assert!((expected_loss(&uniform, &p).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(expected_loss(&[0.0, 1.0], &[0.0, 1.0]).unwrap().abs() < 1e-15);
        assert!((expected_loss(&[0.7, 0.3], &[0.6, 0.4]).unwrap() - 0.46).abs() < 1e-12);
        assert!(expected_loss(&[0.5, 0.5], &[0.6, 0.6]).is_err());
        assert!(expected_loss(&[0.5, 0.5], &[1.2, -0.2]).is_err());
    }

    fn lookup_model(tau: Vec<f64>) -> (LpcModel, LabeledDataset) {
        let train_set = LabeledDataset::with_num_labels(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0, 1, 2],
            3,
        )
        .unwrap();
        let c = BaseClassifier::fit(ClassifierKind::Knn { k: 1 }, &train_set).unwrap();
        let gf = GeneratingFunction::new(3, vec![c]).unwrap();
        let model = train(gf, UncertaintyInterval::point(tau).unwrap(), TrainMode::Exact).unwrap();
        (model, train_set)
    }

    #[test]
    fn correct_deterministic_rule_has_zero_error() {
        // all mass where the label equals the classifier output
        let mut tau = vec![0.0; 9];
        for y in 0..3 {
            tau[4 * y] = 1.0 / 3.0;
        }
        let (model, d) = lookup_model(tau);
        let report = evaluate(&model, &d, 0).unwrap();
        assert!(report.exact.abs() < 1e-9);
        assert_eq!(report.argmax, 0.0);
        assert_eq!(report.randomized, 0.0);
        assert!(model.minimax_risk().abs() < 1e-9);
    }

    #[test]
    fn uniform_rule_has_chance_error() {
        let (model, d) = lookup_model(vec![1.0 / 9.0; 9]);
        for x in d.features() {
            assert!(close(&model.rule_probabilities(x).unwrap().probs, &[1.0 / 3.0; 3]));
        }
        let e = empirical_error(&model, &d, ErrorMode::Exact).unwrap();
        assert!((e - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_error_equals_loss_under_empirical_distribution() {
        let mut tau = vec![0.05; 9];
        tau[0] = 0.35;
        tau[4] = 0.2;
        tau[8] = 0.15;
        let (model, _) = lookup_model(tau);
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![(i % 3) as f64]).collect();
        let ys: Vec<usize> = (0..12).map(|i| (i * 7 / 3) % 3).collect();
        let d = LabeledDataset::with_num_labels(xs, ys, 3).unwrap();
        // empirical distribution over the model's (pattern, label) cells
        let mut p = vec![0.0; model.patterns().num_cells()];
        for (x, &y) in d.features().iter().zip(d.labels()) {
            let i = model.patterns().find(&model.gf().pattern(x).unwrap()).unwrap();
            p[i * 3 + y] += 1.0 / 12.0;
        }
        let loss = expected_loss(&model.rule_table(), &p).unwrap();
        let exact = empirical_error(&model, &d, ErrorMode::Exact).unwrap();
        assert!((loss - exact).abs() < 1e-12);

        let many: Vec<usize> = (0..100_000).collect();
        let big = d.subset(&many.iter().map(|i| i % 12).collect::<Vec<_>>());
        let randomized = empirical_error(&model, &big, ErrorMode::Randomized { seed: 5 }).unwrap();
        assert!((randomized - exact).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn rule_is_a_distribution_above_clipped_scores(
            scores in proptest::collection::vec(-2.0f64..1.0, 1..6),
            gamma in -1.0f64..0.5,
        ) {
            let clipped: Vec<f64> = scores.iter().map(|s| (s + gamma).max(0.0)).collect();
            prop_assume!(clipped.iter().sum::<f64>() <= 1.0);
            let h = rule_from_scores(&scores, gamma);
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (hv, c) in h.iter().zip(&clipped) {
                prop_assert!(*hv >= c - 1e-12);
            }
        }
    }
}
