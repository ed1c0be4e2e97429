use bagged_gmia::allocator::{allocate_reference, allocate_target_halves};
use bagged_gmia::attacks::{train_class_attacks, train_point_attacks, ClassAttacks, LogRegConfig, PointAttacks};
use bagged_gmia::dataset::{synth_gaussian_mixture, LabeledDataset, MixtureParams};
use bagged_gmia::eval::{
    run_attack_validation, CoinFlipScorer, ConstantScorer, EvaluationReport, OracleScorer, DEFAULT_THRESHOLDS,
};
use bagged_gmia::farm::{extract_confidence_tensor, train_model_set, ModelSet};
use bagged_gmia::modelkit::{Architecture, ModelSpec};
use bagged_gmia::Error;

fn data(per_class: usize) -> LabeledDataset {
    synth_gaussian_mixture(MixtureParams {
        class_count: 2,
        per_class,
        dim: 3,
        separation: 1.0,
        seed: 2,
    })
    .unwrap()
}

fn quick_targets(d: &LabeledDataset, pairs: usize) -> ModelSet {
    let plan = allocate_target_halves(d.len(), pairs, 13).unwrap();
    let spec = ModelSpec {
        architecture: Architecture::SoftmaxRegression,
        epochs: 1,
        batch_size: 64,
        learning_rate: 0.01,
        l2_penalty: 0.0,
        seed: 1,
    };
    train_model_set(&plan, &spec, d, 4).unwrap()
}

fn assert_bookkeeping(report: &EvaluationReport, pairs: usize) {
    for o in &report.outcomes {
        assert_eq!(o.tp + o.fn_ + o.tn + o.fp, 2 * pairs);
        assert_eq!(o.tp + o.fn_, pairs);
    }
    assert_eq!(report.histogram.iter().sum::<usize>(), report.n_points());
    let mean: f64 = report.per_target_auc.iter().sum::<f64>() / report.per_target_auc.len() as f64;
    assert_eq!(mean, report.mean_auc());
}

#[test]
fn oracle_scorer_is_perfect() {
    let d = data(50);
    let targets = quick_targets(&d, 5);
    let report = run_attack_validation(&OracleScorer { plan: &targets.plan }, &targets, &d, &DEFAULT_THRESHOLDS).unwrap();
    assert!(report.per_target_auc.iter().all(|&a| a == 1.0));
    assert!(report.outcomes.iter().all(|o| o.accuracy_pct == 100.0));
    assert!(report.summary.threshold_counts.iter().all(|c| c.count == 100));
    assert_bookkeeping(&report, 5);
}

#[test]
fn constant_scorer_says_in_everywhere() {
    let d = data(50);
    let targets = quick_targets(&d, 5);
    let report = run_attack_validation(&ConstantScorer(0.5), &targets, &d, &DEFAULT_THRESHOLDS).unwrap();
    assert!(report.per_target_auc.iter().all(|&a| a == 0.5));
    for o in &report.outcomes {
        assert_eq!(o.tp + o.fp, 10);
        assert_eq!(o.accuracy_pct, 50.0);
    }
    assert!(report.summary.threshold_counts.iter().all(|c| c.count == 0));
    assert_bookkeeping(&report, 5);
}

#[test]
fn coin_flip_scorer_is_near_chance() {
    let d = data(1000);
    let targets = quick_targets(&d, 50);
    let report = run_attack_validation(&CoinFlipScorer(3), &targets, &d, &DEFAULT_THRESHOLDS).unwrap();
    let mean_acc: f64 = report.outcomes.iter().map(|o| o.accuracy_pct).sum::<f64>() / 2000.0;
    assert!((mean_acc - 50.0).abs() < 1.0, "{mean_acc}");
    assert!((report.mean_auc() - 0.5).abs() < 0.01, "{}", report.mean_auc());
    assert_bookkeeping(&report, 50);
}

#[test]
fn reference_plan_is_rejected_as_targets() {
    let d = data(10);
    let plan = allocate_reference(d.len(), 4, 2, 0).unwrap();
    let spec = ModelSpec {
        architecture: Architecture::SoftmaxRegression,
        epochs: 1,
        ..ModelSpec::default()
    };
    let set = train_model_set(&plan, &spec, &d, 1).unwrap();
    assert!(matches!(
        run_attack_validation(&ConstantScorer(0.5), &set, &d, &DEFAULT_THRESHOLDS),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn trained_attacks_validate_and_report_roundtrips() {
    let d = data(30);
    let refs_plan = allocate_reference(d.len(), 10, 3, 6).unwrap();
    let spec = ModelSpec {
        architecture: Architecture::Mlp { hidden_width: 8 },
        epochs: 30,
        batch_size: 16,
        learning_rate: 0.01,
        l2_penalty: 0.0,
        seed: 4,
    };
    let refs = train_model_set(&refs_plan, &spec, &d, 4).unwrap();
    let tensor = extract_confidence_tensor(&refs, &d).unwrap();
    let config = LogRegConfig::default();

    let point = PointAttacks::new("gmia", train_point_attacks(&tensor, &config).unwrap());
    let class_models = train_class_attacks(&tensor, &d, &config).unwrap();
    assert_eq!(class_models.len(), 2);
    for m in &class_models {
        assert_eq!(m.in_count + m.out_count, 30 * 10);
    }
    let class = ClassAttacks::new("class-based", class_models);

    let targets = quick_targets(&d, 4);
    for report in [
        run_attack_validation(&point, &targets, &d, &DEFAULT_THRESHOLDS).unwrap(),
        run_attack_validation(&class, &targets, &d, &DEFAULT_THRESHOLDS).unwrap(),
    ] {
        assert_bookkeeping(&report, 4);
        let dir = tempfile::tempdir().unwrap();
        report.save(dir.path(), "r").unwrap();
        assert_eq!(EvaluationReport::load(dir.path(), "r").unwrap(), report);
    }
}

#[test]
fn identical_pooled_rows_give_identical_class_weights() {
    use bagged_gmia::farm::ConfidenceTensor;
    // one pair of targets: every row is [In, Out] or [Out, In]
    let plan = allocate_target_halves(4, 1, 0).unwrap();
    let pattern = |i: usize| usize::from(plan.is_member(i, 0));
    // first point of each pattern is class 0, the second class 1
    let labels: Vec<usize> = (0..4).map(|i| usize::from((0..i).any(|j| pattern(j) == pattern(i)))).collect();
    let d = LabeledDataset::new(vec![0.0; 4], labels, 1, 2).unwrap();
    let values: Vec<f32> = (0..4)
        .flat_map(|i| {
            let shift = 0.1 * pattern(i) as f32;
            [0.3 + shift, 0.7 - shift, 0.6 - shift, 0.4 + shift]
        })
        .collect();
    let tensor = ConfidenceTensor::new(values, 2, plan.clone()).unwrap();
    let models = train_class_attacks(&tensor, &d, &LogRegConfig::default()).unwrap();
    for (a, b) in models[0].weights.iter().zip(&models[1].weights) {
        assert!((a - b).abs() < 1e-12);
    }
}
