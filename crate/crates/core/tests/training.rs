mod common;

use proptest::prelude::*;
use report_kg::classifier::{parameter_count_formula, BoundClassifier, GraphClassifier};
use report_kg::corpus::split_corpus;
use report_kg::graph::AblationConfig;
use report_kg::labels::Labels;
use report_kg::params::Parameters;
use report_kg::pipeline::{Pipeline, Sample};
use report_kg::sample;
use report_kg::tensor::gradcheck::check_sampled;
use report_kg::tensor::rng::stream;
use report_kg::tensor::{Checkpoint, Tensor};
use report_kg::trainer::{evaluate_samples, train, EpochRecord, TrainConfig};

fn samples(n: usize, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let o = sample::ontology();
    let e = sample::embeddings();
    let p = Pipeline::new(&o, &e, AblationConfig::FULL);
    let split = split_corpus(&common::corpus(n, seed, false), [0.8, 0.2, 0.0], seed).unwrap();
    (p.samples(&split.train).unwrap(), p.samples(&split.val).unwrap())
}

fn quick_config(workers: usize) -> TrainConfig {
    TrainConfig {
        hidden: 16,
        n_layers: 2,
        max_epochs: 3,
        batch_size: 8,
        lr: 1e-3,
        dropout: 0.1,
        workers,
        ..TrainConfig::default()
    }
}

fn without_timing(records: &[EpochRecord]) -> Vec<(usize, f64, f64)> {
    records.iter().map(|r| (r.epoch, r.train_loss, r.val_macro_auc)).collect()
}

#[test]
fn training_is_reproducible_and_independent_of_worker_count() {
    let (tr, va) = samples(150, 1);
    let a = train(&quick_config(1), &tr, &va).unwrap();
    let b = train(&quick_config(1), &tr, &va).unwrap();
    let c = train(&quick_config(2), &tr, &va).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.model, c.model);
    assert_eq!(without_timing(&a.records), without_timing(&c.records));
    assert_eq!((a.best_epoch, a.best_val_auc), (c.best_epoch, c.best_val_auc));
}

#[test]
fn saved_best_model_reproduces_its_validation_score() {
    let (tr, va) = samples(150, 2);
    let out = train(&quick_config(1), &tr, &va).unwrap();
    let mut bytes = Vec::new();
    out.model.to_checkpoint().write_to(&mut bytes).unwrap();
    let back = GraphClassifier::from_checkpoint(&Checkpoint::read_from(&bytes[..]).unwrap()).unwrap();
    let report = evaluate_samples(&back, &va, 0.5, 1).unwrap();
    assert_eq!(report.macro_auc, out.best_val_auc);
    let best = out.records.iter().map(|r| r.val_macro_auc).fold(f64::MIN, f64::max);
    assert_eq!(best, out.best_val_auc);
}

#[test]
fn training_loss_falls() {
    let (tr, va) = samples(200, 3);
    let cfg = TrainConfig {
        max_epochs: 4,
        patience: 10,
        ..quick_config(1)
    };
    let out = train(&cfg, &tr, &va).unwrap();
    let first = out.records.first().unwrap().train_loss;
    let last = out.records.last().unwrap().train_loss;
    assert!(last < first, "loss {first} -> {last}");
    assert!(out.best_val_auc > 0.6);
}

#[test]
fn empty_splits_are_rejected() {
    let (tr, _) = samples(40, 4);
    assert!(train(&quick_config(1), &tr, &[]).is_err());
    assert!(train(&quick_config(1), &[], &tr).is_err());
}

#[test]
fn classifier_loss_gradient_matches_finite_differences() {
    let gs = common::graphs(6, 5);
    for (i, g) in gs.iter().enumerate().filter(|(_, g)| g.node_count() <= 12) {
        let model = GraphClassifier::new(g.feature_dim(), 6, 2, &mut stream(i as u64, &[]));
        let inputs: Vec<Tensor> = model.tensors().into_iter().cloned().collect();
        let mut labels = Labels::default();
        labels.set(i % 14, true);
        let targets = labels.to_f64();
        let r = check_sampled(&inputs, 1e-5, 60, i as u64, |tape, vars| {
            let b = BoundClassifier::from_vars(&model, vars);
            let mut r = stream(0, &[]);
            b.logits(tape, g, &mut r, false).unwrap().bce_with_logits(&targets)
        })
        .unwrap();
        assert!(r.max_rel_err <= 1e-4, "graph {i}: {r:?}");
    }
}

#[test]
fn parameter_count_formula_matches_instantiated_models() {
    let mut rng = stream(6, &[]);
    for (input, hidden, layers) in [(200, 8, 1), (7, 16, 3), (200, 32, 2), (5, 1, 4)] {
        let m = GraphClassifier::new(input, hidden, layers, &mut rng);
        assert_eq!(m.parameter_count(), parameter_count_formula(input, hidden, layers));
    }
}

proptest! {
    #[test]
    fn parameter_count_grows_with_depth_and_width(hidden in 1usize..3000, layers in 1usize..20) {
        let n = parameter_count_formula(200, hidden, layers);
        prop_assert!(parameter_count_formula(200, hidden, layers + 1) > n);
        prop_assert!(parameter_count_formula(200, hidden + 1, layers) > n);
    }
}
