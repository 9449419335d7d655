mod common;

use std::sync::Arc;

use privclean_core::accountant::{AccountantMode, PrivacyParams};
use privclean_core::cleaners::*;
use privclean_core::engine::{QueryInterface, Session};
use privclean_core::formula::Shape;
use privclean_core::quality::Task;
use privclean_core::similarity::{Similarity, Transformation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_model() -> CleanerModel {
    CleanerModel {
        attributes: AttributeCount::All,
        transformations: vec![Transformation::QGram(2)],
        similarities: vec![Similarity::Jaccard],
        theta_low: 0.3,
        theta_high: 0.9,
        theta_count: 3,
        theta_order: ThresholdOrder::Descending,
        nesting: [
            Dimension::Attribute,
            Dimension::Transformation,
            Dimension::Similarity,
            Dimension::Threshold,
        ],
        match_fraction: 0.3,
        nonmatch_fraction: 0.1,
        relaxation: 2,
        style: TrustStyle::Neutral,
    }
}

#[test]
fn exact_answers_give_full_recall_on_toy_table() {
    for kind in [
        StrategyKind::Bs1,
        StrategyKind::Bs2,
        StrategyKind::Ms1,
        StrategyKind::Ms2,
    ] {
        let data = common::toy_binding();
        let mut oracle = common::ExactOracle::new(data.clone());
        let out =
            run_strategy(kind, &toy_model(), &mut oracle, &StrategyConfig::new(1e-6)).unwrap();
        assert!(!out.partial);
        assert!(oracle.asked > 0);
        let run = StrategyRun::evaluate(out, &data).unwrap();
        assert_eq!(run.quality.recall, 1.0, "{kind:?}");
        if kind.is_blocking() {
            assert!(
                run.quality.cost <= 0.55,
                "{kind:?} cost {}",
                run.quality.cost
            );
        } else {
            assert_eq!(run.quality.f1, 1.0, "{kind:?}");
        }
    }
}

#[test]
fn output_shapes_follow_the_task() {
    let data = common::toy_binding();
    for kind in [StrategyKind::Bs1, StrategyKind::Ms1] {
        let mut oracle = common::ExactOracle::new(data.clone());
        let out =
            run_strategy(kind, &toy_model(), &mut oracle, &StrategyConfig::new(1e-6)).unwrap();
        let unique: std::collections::HashSet<_> = out.predicates.iter().collect();
        assert_eq!(unique.len(), out.predicates.len());
        let f = out.formula().unwrap();
        let want = if kind.is_blocking() {
            Shape::Disjunction
        } else {
            Shape::Conjunction
        };
        assert_eq!(f.shape(), want);
        assert_eq!(
            out.task(),
            if kind.is_blocking() {
                Task::Blocking
            } else {
                Task::Matching
            }
        );
    }
}

fn synthetic() -> Arc<privclean_core::query::DataBinding> {
    Arc::new(
        SynthConfig::default()
            .generate()
            .unwrap()
            .binding()
            .unwrap(),
    )
}

fn session(data: &Arc<privclean_core::query::DataBinding>, budget: f64, seed: u64) -> Session {
    let privacy = PrivacyParams::new(budget, (-15f64).exp()).unwrap();
    Session::open(
        "s",
        "synthetic",
        data.clone(),
        privacy,
        AccountantMode::moments(),
        seed,
    )
    .unwrap()
}

#[test]
fn budget_below_one_query_gives_empty_partial_output() {
    let data = synthetic();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = sample_cleaner(StrategyKind::Bs1, &mut rng);
    let mut s = session(&data, 0.004, 1);
    let out = run_strategy(StrategyKind::Bs1, &model, &mut s, &StrategyConfig::new(8.0)).unwrap();
    assert!(out.partial);
    assert!(out.predicates.is_empty());
    assert_eq!(out.queries.answered, 0);
    assert_eq!(s.spent(), 0.0);
    let run = StrategyRun::evaluate(out, &data).unwrap();
    assert_eq!(run.quality.recall, 0.0);
}

#[test]
fn strategy_runs_are_deterministic() {
    let data = synthetic();
    for kind in [
        StrategyKind::Bs1,
        StrategyKind::Bs2,
        StrategyKind::Ms1,
        StrategyKind::Ms2,
    ] {
        let model = sample_cleaner(kind, &mut ChaCha8Rng::seed_from_u64(9));
        let go = || {
            let mut s = session(&data, f64::INFINITY, 77);
            let out = run_strategy(kind, &model, &mut s, &StrategyConfig::new(4.0)).unwrap();
            (serde_json::to_string(&out).unwrap(), s.status())
        };
        assert_eq!(go(), go());
    }
}

#[test]
fn strategies_only_see_public_metadata() {
    let data = synthetic();
    let s = session(&data, 1.0, 0);
    let meta = s.metadata();
    let json = serde_json::to_value(&meta).unwrap();
    let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["base_tables", "pairs", "positives", "schema"]);
}

#[test]
fn tiny_tolerance_blocking_recall() {
    // alpha = 0.001 |D_t| with no budget limit
    let mut cfg = SweepConfig::new(StrategyKind::Bs1, vec![0.001], vec![f64::INFINITY], 20);
    cfg.robot = RobotChoice::PerRun;
    let res = run_sweep(&cfg).unwrap();
    let good = res.rows.iter().filter(|r| r.recall >= 0.9).count();
    assert!(good >= 18, "only {good} of 20 runs reached recall 0.9");
}

#[test]
fn sweep_is_reproducible_and_serializes() {
    let mut cfg = SweepConfig::new(
        StrategyKind::Ms1,
        vec![0.04, 0.16],
        vec![0.5, f64::INFINITY],
        3,
    );
    cfg.robot = RobotChoice::PerRun;
    let a = run_sweep(&cfg).unwrap();
    let b = run_sweep(&cfg).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.cells.len(), 4);
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12);
    assert!(csv.starts_with("cell,t,alpha,budget"));
    let mut json = Vec::new();
    a.write_json(&mut json).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert!(v["config"]["budgetGrid"][1].is_null());
}

#[test]
fn single_cell_single_run() {
    let res = run_sweep(&SweepConfig::new(
        StrategyKind::Bs2,
        vec![0.08],
        vec![0.1],
        1,
    ))
    .unwrap();
    assert_eq!(res.rows.len(), 1);
    assert_eq!(res.cells.len(), 1);
}
