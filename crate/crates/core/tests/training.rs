mod common;

use common::{overfit, synthetic_examples};
use murmur_core::model::Topology;
use murmur_core::pipeline::{cross_validate, train_fold, CvConfig, Example, TrainConfig};

fn refs(v: &[Example]) -> Vec<&Example> {
    v.iter().collect()
}

#[test]
fn overfits_eight_segments() {
    let ex = synthetic_examples(4, 4.0, 500);
    assert_eq!(ex.len(), 8);
    let t = std::time::Instant::now();
    let run = overfit(&ex, 3, 300);
    eprintln!("reached at {:?} after {:?}", run.reached_at, t.elapsed());
    assert!(run.reached_at.is_some());
}

#[test]
fn smoke_config_loss_decreases_and_orders_are_paired() {
    let ex = synthetic_examples(4, 4.0, 600);
    let config = TrainConfig {
        epochs: 10,
        batch_size: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    let (_, log) = train_fold(&refs(&ex), &config).unwrap();
    let losses: Vec<f64> = log.epochs.iter().map(|e| e.loss).collect();
    eprintln!("{losses:?}");
    assert_eq!(losses.len(), 10);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{losses:?}");
    }
    assert_eq!(log.spec_orders, log.ceps_orders);
    assert_eq!(log.spec_orders.len(), 10);
    assert_ne!(log.spec_orders[0], log.spec_orders[1]);
}

#[test]
fn training_is_bitwise_reproducible() {
    let ex = synthetic_examples(3, 4.0, 700);
    let config = TrainConfig {
        epochs: 2,
        batch_size: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let (a, log_a) = train_fold(&refs(&ex), &config).unwrap();
    let (b, log_b) = train_fold(&refs(&ex), &config).unwrap();
    let bits = |m: &murmur_core::model::ModelParams| -> Vec<u64> {
        m.tensors().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(log_a, log_b);
    let (c, _) = train_fold(&refs(&ex), &TrainConfig { seed: 10, ..config }).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn small_cross_validation_is_deterministic_and_disjoint() {
    let ex = synthetic_examples(3, 4.0, 800);
    let config = CvConfig {
        k: 3,
        train: TrainConfig {
            epochs: 1,
            batch_size: 4,
            seed: 2,
            topology: Topology::with_branches(murmur_core::model::Branches::CnnOnly),
            ..TrainConfig::default()
        },
    };
    let a = cross_validate(&ex, &config).unwrap();
    let b = cross_validate(&ex, &config).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.folds.len(), 3);
    let tested: usize = a.report.folds.iter().map(|f| f.confusion.total()).sum();
    assert_eq!(tested, ex.len());
    for fold in &a.plan.folds {
        assert!(fold.test.iter().all(|id| !fold.train.contains(id)));
    }
    assert_eq!(a.models.len(), 3);
}
