//! Randomized invariant suites over small instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::bounds::{kappa_with, least_favorable_distribution_with, primal_min_with};
use crate::classifiers::{BaseClassifier, ClassifierKind};
use crate::data::SyntheticSpec;
use crate::error::{LpcError, Result};
use crate::learning::{learn, solve_learning_with, LpForm};
use crate::lp::SolverOptions;
use crate::phi::{GeneratingFunction, PatternTable};
use crate::prediction::{expected_loss, rule_table};
use crate::uncertainty::UncertaintyInterval;

/// A random pattern table with a distribution `p0` supported on its cells and
/// an interval around `Phi p0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub table: PatternTable,
    pub p0: Vec<f64>,
    pub interval: UncertaintyInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    /// `a = b = Phi p0`.
    Point,
    /// `a = Phi p0 - u`, `b = Phi p0 + v` with random nonnegative `u, v`.
    Interval,
}

pub const MAX_PATTERNS: usize = 6;
pub const MAX_LABELS: usize = 3;
pub const MAX_DIM: usize = 9;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Normalized exponential weights, i.e. a flat Dirichlet draw.
pub fn random_simplex(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

fn random_table(rng: &mut ChaCha8Rng) -> PatternTable {
    let labels = rng.random_range(2..=MAX_LABELS);
    let dim = rng.random_range(labels..=MAX_DIM);
    let want = rng.random_range(1..=MAX_PATTERNS);
    let mut columns: Vec<Vec<usize>> = Vec::new();
    for _ in 0..50 {
        if columns.len() == want {
            break;
        }
        let mut cols: Vec<usize> = (0..dim).collect();
        for i in 0..labels {
            let j = rng.random_range(i..dim);
            cols.swap(i, j);
        }
        cols.truncate(labels);
        if !columns.contains(&cols) {
            columns.push(cols);
        }
    }
    PatternTable::from_columns(labels, dim, columns).expect("generated table is valid")
}

/// Instance number `index` of the stream for `seed`.
pub fn random_instance(seed: u64, index: u64, kind: InstanceKind) -> Instance {
    let mut rng = stream_rng(seed, index);
    let table = random_table(&mut rng);
    let cells = table.num_cells();
    let mut support: Vec<bool> = (0..cells).map(|_| rng.random_bool(0.7)).collect();
    if !support.iter().any(|&s| s) {
        support[rng.random_range(0..cells)] = true;
    }
    let w = random_simplex(&mut rng, cells);
    let total: f64 = w.iter().zip(&support).filter(|(_, &s)| s).map(|(w, _)| w).sum();
    let p0: Vec<f64> = w
        .iter()
        .zip(&support)
        .map(|(w, &s)| if s { w / total } else { 0.0 })
        .collect();
    let center = table.push_forward(&p0);
    let interval = match kind {
        InstanceKind::Point => UncertaintyInterval::point(center).expect("finite"),
        InstanceKind::Interval => {
            let mut width = || {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0.0..0.15)
                }
            };
            let a = center.iter().map(|c| c - width()).collect::<Vec<_>>();
            let b = center.iter().map(|c| c + width()).collect::<Vec<_>>();
            UncertaintyInterval::from_bounds(a, b).expect("a <= b by construction")
        }
    };
    Instance { table, p0, interval }
}

/// A random rule: one label distribution per pattern, flattened by cell.
pub fn random_rule(rng: &mut ChaCha8Rng, table: &PatternTable) -> Vec<f64> {
    (0..table.len())
        .flat_map(|_| {
            if rng.random_bool(0.25) {
                let mut h = vec![0.0; table.num_labels()];
                h[rng.random_range(0..table.num_labels())] = 1.0;
                h
            } else {
                random_simplex(rng, table.num_labels())
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub invariant: String,
    pub checked: usize,
    pub failures: usize,
    /// Largest violation seen, in the units of the invariant.
    pub worst: f64,
    pub first_failure: Option<String>,
}

impl SuiteResult {
    fn new(name: &str, invariant: &str) -> Self {
        Self {
            name: name.into(),
            invariant: invariant.into(),
            checked: 0,
            failures: 0,
            worst: 0.0,
            first_failure: None,
        }
    }

    /// Records one check whose violation is `excess` (passes when `<= 0`).
    fn record(&mut self, excess: f64, what: impl FnOnce() -> String) {
        self.checked += 1;
        let excess = if excess.is_nan() { f64::INFINITY } else { excess };
        self.worst = self.worst.max(excess);
        if excess > 0.0 {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
    }

    fn record_error(&mut self, e: &LpcError, what: &str) {
        self.checked += 1;
        self.failures += 1;
        self.worst = f64::INFINITY;
        if self.first_failure.is_none() {
            self.first_failure = Some(format!("{what}: {e}"));
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckConfig {
    pub seed: u64,
    pub duality_instances: usize,
    pub alternative_rules: usize,
    pub sandwich_triples: usize,
    pub coverage_resamples: usize,
    pub coverage_n: usize,
    pub coverage_delta: f64,
    pub coverage_mc_samples: usize,
    #[serde(skip)]
    pub solver: SolverOptions,
}

impl Default for SelfcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            duality_instances: 100,
            alternative_rules: 20,
            sandwich_triples: 200,
            coverage_resamples: 200,
            coverage_n: 200,
            coverage_delta: 0.1,
            coverage_mc_samples: 1_000_000,
            solver: SolverOptions::default(),
        }
    }
}

pub const SUITES: [&str; 4] = ["duality", "minimax", "sandwich", "coverage"];

/// Dual value `1 - R` equals the primal `min_{p in U} ||p||_{inf,1}`.
pub fn duality_suite(config: &SelfcheckConfig) -> SuiteResult {
    let mut suite = SuiteResult::new("duality", "dual optimum equals primal min over the uncertainty set (tol 1e-6)");
    for i in 0..config.duality_instances {
        let inst = random_instance(config.seed, i as u64, InstanceKind::Point);
        let dual = learn(&inst.table, &inst.interval, &config.solver);
        let primal = primal_min_norm(&inst, &config.solver);
        match (dual, primal) {
            (Ok(d), Ok(p)) => suite.record((d.value - p).abs() - 1e-6, || {
                format!("instance {i}: dual {} vs primal {}", d.value, p)
            }),
            (Err(e), _) | (_, Err(e)) => suite.record_error(&e, &format!("instance {i}")),
        }
    }
    suite
}

fn primal_min_norm(inst: &Instance, opts: &SolverOptions) -> Result<f64> {
    Ok(least_favorable_distribution_with(&inst.table, &inst.interval, opts)?.0)
}

/// Worst-case loss of the learned rule equals `R`; no other rule does better.
pub fn minimax_suite(config: &SelfcheckConfig) -> SuiteResult {
    let mut suite = SuiteResult::new(
        "minimax",
        "max loss of h* equals R (tol 1e-6) and alternatives reach at least R - 1e-8",
    );
    for i in 0..config.duality_instances {
        let inst = random_instance(config.seed, i as u64, InstanceKind::Point);
        let run = |suite: &mut SuiteResult| -> Result<()> {
            let d = learn(&inst.table, &inst.interval, &config.solver)?;
            let h = rule_table(&inst.table, &d.lambda, d.gamma);
            let (min_ph, _) = primal_min_with(&inst.table, &inst.interval, &h, &config.solver)?;
            let worst = 1.0 - min_ph;
            suite.record((worst - d.minimax_risk).abs() - 1e-6, || {
                format!("instance {i}: worst-case loss {worst} vs R {}", d.minimax_risk)
            });
            let mut rng = stream_rng(config.seed ^ 0x5EED, i as u64);
            for j in 0..config.alternative_rules {
                let alt = random_rule(&mut rng, &inst.table);
                let (min_alt, _) = primal_min_with(&inst.table, &inst.interval, &alt, &config.solver)?;
                let alt_worst = 1.0 - min_alt;
                suite.record(d.minimax_risk - 1e-8 - alt_worst, || {
                    format!("instance {i} rule {j}: worst-case loss {alt_worst} below R {}", d.minimax_risk)
                });
            }
            Ok(())
        };
        if let Err(e) = run(&mut suite) {
            suite.record_error(&e, &format!("instance {i}"));
        }
    }
    suite
}

/// `0 <= 1 + kappa(-h) <= loss(h, p) <= 1 - kappa(h) <= 1` for feasible `p`.
pub fn sandwich_suite(config: &SelfcheckConfig) -> SuiteResult {
    let mut suite = SuiteResult::new("sandwich", "0 <= L <= loss(h, p) <= R <= 1 for p in U (slack 1e-8)");
    for i in 0..config.sandwich_triples {
        let inst = random_instance(config.seed.wrapping_add(1), i as u64, InstanceKind::Interval);
        let mut rng = stream_rng(config.seed ^ 0xB0B, i as u64);
        let run = |suite: &mut SuiteResult, rng: &mut ChaCha8Rng| -> Result<()> {
            let p = random_feasible(&inst, rng, &config.solver)?;
            let h = random_rule(rng, &inst.table);
            let loss = expected_loss(&h, &p)?;
            let k_h = kappa_with(&inst.table, &inst.interval, &h, &config.solver)?;
            let neg: Vec<f64> = h.iter().map(|v| -v).collect();
            let k_neg = kappa_with(&inst.table, &inst.interval, &neg, &config.solver)?;
            let (lower, upper) = (1.0 + k_neg, 1.0 - k_h);
            let chain = [0.0, lower, loss, upper, 1.0];
            let excess = chain.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
            suite.record(excess - 1e-8, || format!("triple {i}: chain {chain:?}"));
            Ok(())
        };
        if let Err(e) = run(&mut suite, &mut rng) {
            suite.record_error(&e, &format!("triple {i}"));
        }
    }
    suite
}

/// A point of the uncertainty set: a random mixture of `p0` and two vertices
/// found with random objectives.
pub fn random_feasible(inst: &Instance, rng: &mut ChaCha8Rng, opts: &SolverOptions) -> Result<Vec<f64>> {
    let cells = inst.table.num_cells();
    let mut parts = vec![inst.p0.clone()];
    for _ in 0..2 {
        let q: Vec<f64> = (0..cells).map(|_| rng.random_range(-1.0..1.0)).collect();
        parts.push(primal_min_with(&inst.table, &inst.interval, &q, opts)?.1);
    }
    let w = random_simplex(rng, parts.len());
    Ok((0..cells)
        .map(|j| parts.iter().zip(&w).map(|(p, w)| w * p[j]).sum::<f64>().max(0.0))
        .collect())
}

/// Expectation of `phi` under the synthetic distribution, estimated from
/// `samples` draws in chunks.
pub fn mc_expectation(gf: &GeneratingFunction, spec: &SyntheticSpec, samples: usize, seed: u64) -> Result<Vec<f64>> {
    const CHUNK: usize = 100_000;
    let mut counts = vec![0usize; gf.m()];
    let mut done = 0;
    let mut chunk = 0u64;
    while done < samples {
        let size = CHUNK.min(samples - done);
        let d = spec.generate(size, seed.wrapping_add(chunk))?;
        for (x, &y) in d.features().iter().zip(d.labels()) {
            counts[gf.phi_evaluate(x, y)?.index] += 1;
        }
        done += size;
        chunk += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / samples as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub resamples: usize,
    pub covered: usize,
    pub frequency: f64,
    pub target: f64,
}

/// Fraction of fresh samples of size `n` whose Hoeffding interval contains
/// the population expectation of a fixed one-classifier map.
pub fn hoeffding_coverage(
    n: usize,
    delta: f64,
    resamples: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<CoverageResult> {
    let spec = SyntheticSpec::default();
    let fit_set = spec.generate(1000, seed ^ 0xC0FFEE)?;
    let qda = BaseClassifier::fit(ClassifierKind::Qda, &fit_set)?;
    let gf = GeneratingFunction::new(spec.num_labels(), vec![qda])?;
    let tau_inf = mc_expectation(&gf, &spec, mc_samples, seed.wrapping_add(7_000_000))?;
    let mut covered = 0;
    for r in 0..resamples {
        let sample = spec.generate(n, seed.wrapping_add(1 + r as u64))?;
        let mut tau = vec![0.0; gf.m()];
        for (x, &y) in sample.features().iter().zip(sample.labels()) {
            tau[gf.phi_evaluate(x, y)?.index] += 1.0 / n as f64;
        }
        let iv = UncertaintyInterval::hoeffding(tau, n, delta, &gf.range_c())?;
        if iv.contains(&tau_inf, 0.0) {
            covered += 1;
        }
    }
    Ok(CoverageResult {
        resamples,
        covered,
        frequency: covered as f64 / resamples as f64,
        target: 1.0 - delta,
    })
}

pub fn coverage_suite(config: &SelfcheckConfig) -> SuiteResult {
    let mut suite = SuiteResult::new(
        "coverage",
        "Hoeffding interval covers the population expectation with frequency >= 1 - delta - 0.05",
    );
    match hoeffding_coverage(
        config.coverage_n,
        config.coverage_delta,
        config.coverage_resamples,
        config.coverage_mc_samples,
        config.seed,
    ) {
        Ok(c) => suite.record(c.target - 0.05 - c.frequency, || {
            format!("coverage {} below {}", c.frequency, c.target - 0.05)
        }),
        Err(e) => suite.record_error(&e, "coverage"),
    }
    suite
}

pub fn run_suite(name: &str, config: &SelfcheckConfig) -> Result<SuiteResult> {
    Ok(match name {
        "duality" => duality_suite(config),
        "minimax" => minimax_suite(config),
        "sandwich" => sandwich_suite(config),
        "coverage" => coverage_suite(config),
        other => return Err(LpcError::InvalidArgument(format!("unknown suite {other:?}"))),
    })
}

pub fn run(config: &SelfcheckConfig, suites: &[&str]) -> Result<SelfcheckReport> {
    let suites = suites
        .iter()
        .map(|s| run_suite(s, config))
        .collect::<Result<Vec<_>>>()?;
    let passed = suites.iter().all(SuiteResult::passed);
    Ok(SelfcheckReport { suites, passed })
}

/// Point-form and interval-form optima agree when `a == b`.
pub fn form_gap(inst: &Instance, opts: &SolverOptions) -> Result<f64> {
    let a = solve_learning_with(&inst.table, &inst.interval, LpForm::Interval, opts)?;
    let b = solve_learning_with(&inst.table, &inst.interval, LpForm::Point, opts)?;
    Ok((a.minimax_risk - b.minimax_risk).abs())
}
