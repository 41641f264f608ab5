mod common;

use proptest::prelude::*;

use lpc::bounds::{kappa, risk_sandwich};
use lpc::learning::{learn, solve_learning, LpForm};
use lpc::lp::SolverOptions;
use lpc::prediction::{expected_loss, rule_table};
use lpc::selfcheck::{random_feasible, random_instance, random_rule, stream_rng, InstanceKind};
use lpc::uncertainty::UncertaintyInterval;

fn kind() -> impl Strategy<Value = InstanceKind> {
    prop_oneof![Just(InstanceKind::Point), Just(InstanceKind::Interval)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_value_matches_oracle_min_norm(seed in any::<u64>(), index in 0u64..1000, kind in kind()) {
        let inst = random_instance(seed, index, kind);
        let d = learn(&inst.table, &inst.interval, &SolverOptions::default()).unwrap();
        let primal = common::min_norm(&inst.table, &inst.interval).unwrap();
        prop_assert!((d.value - primal).abs() <= 1e-6, "dual {} primal {}", d.value, primal);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&d.minimax_risk));
    }

    #[test]
    fn trained_rule_attains_r_in_the_worst_case(seed in any::<u64>(), index in 0u64..1000, kind in kind()) {
        let inst = random_instance(seed, index, kind);
        let d = learn(&inst.table, &inst.interval, &SolverOptions::default()).unwrap();
        let h = rule_table(&inst.table, &d.lambda, d.gamma);
        let worst = common::max_loss(&inst.table, &inst.interval, &h).unwrap();
        prop_assert!((worst - d.minimax_risk).abs() <= 1e-6);
        let k = kappa(&inst.table, &inst.interval, &h).unwrap();
        prop_assert!((k - (1.0 - d.minimax_risk)).abs() <= 1e-8);
    }

    #[test]
    fn kappa_matches_oracle_linear_minimum(seed in any::<u64>(), index in 0u64..1000, q_seed in any::<u64>()) {
        let inst = random_instance(seed, index, InstanceKind::Interval);
        let mut rng = stream_rng(q_seed, 0);
        let q = random_rule(&mut rng, &inst.table);
        let k = kappa(&inst.table, &inst.interval, &q).unwrap();
        let oracle = common::min_linear(&inst.table, &inst.interval, &q).unwrap();
        prop_assert!((k - oracle).abs() <= 1e-6, "kappa {k} oracle {oracle}");
    }

    #[test]
    fn loss_of_feasible_points_is_sandwiched(seed in any::<u64>(), index in 0u64..1000, rng_seed in any::<u64>()) {
        let inst = random_instance(seed, index, InstanceKind::Interval);
        let mut rng = stream_rng(rng_seed, 1);
        let p = random_feasible(&inst, &mut rng, &SolverOptions::default()).unwrap();
        let h = random_rule(&mut rng, &inst.table);
        let loss = expected_loss(&h, &p).unwrap();
        let s = risk_sandwich(&inst.table, &inst.interval, &h).unwrap();
        prop_assert!(s.lower_l >= -1e-8);
        prop_assert!(s.lower_l <= loss + 1e-8);
        prop_assert!(loss <= s.upper_r + 1e-8);
        prop_assert!(s.upper_r <= 1.0 + 1e-8);
    }

    #[test]
    fn point_and_interval_forms_agree(seed in any::<u64>(), index in 0u64..1000) {
        let inst = random_instance(seed, index, InstanceKind::Point);
        let a = solve_learning(&inst.table, &inst.interval, LpForm::Interval).unwrap();
        let b = solve_learning(&inst.table, &inst.interval, LpForm::Point).unwrap();
        prop_assert!((a.minimax_risk - b.minimax_risk).abs() <= 1e-8);
    }

    #[test]
    fn shrinking_the_interval_never_raises_r(seed in any::<u64>(), index in 0u64..1000, t in 0.0f64..1.0) {
        let inst = random_instance(seed, index, InstanceKind::Interval);
        let center = inst.table.push_forward(&inst.p0);
        let iv = &inst.interval;
        let a: Vec<f64> = iv.a.iter().zip(&center).map(|(a, c)| a + t * (c - a)).collect();
        let b: Vec<f64> = iv.b.iter().zip(&center).map(|(b, c)| b - t * (b - c)).collect();
        let inner = UncertaintyInterval::from_bounds(a, b).unwrap();
        let outer_r = learn(&inst.table, iv, &SolverOptions::default()).unwrap().minimax_risk;
        let inner_r = learn(&inst.table, &inner, &SolverOptions::default()).unwrap().minimax_risk;
        prop_assert!(inner_r <= outer_r + 1e-9);
    }
}
