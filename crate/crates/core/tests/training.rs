use lipode::datagen::{build_dataset, DataConfig, Dataset};
use lipode::dynamics::lookup;
use lipode::train::{run_alpha_sweep, sig3, train, Optimizer, StopReason, StopRule, TrainConfig};

fn small_xcosx() -> Dataset<f64> {
    let mut sys = lookup::<f64>("xcosx").unwrap();
    sys.n_ic = 40;
    build_dataset(&sys, &DataConfig::default()).unwrap()
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        layers: 3,
        width: 12,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn both_optimizers_reduce_the_loss() {
    let ds = small_xcosx();
    for (optimizer, momentum, factor) in [(Optimizer::Adam, 0.0, 0.5), (Optimizer::Sgd, 0.0, 0.95), (Optimizer::Sgd, 0.9, 0.8)] {
        let cfg = TrainConfig {
            optimizer,
            momentum,
            ..small_cfg()
        };
        let out = train(&cfg, &ds, StopRule::Epochs(15)).unwrap();
        let last = out.record.last().unwrap();
        assert!(last.train_mse < factor * out.record.initial_train_mse, "{optimizer:?} {momentum}: {} vs {}", last.train_mse, out.record.initial_train_mse);
        assert_eq!(out.record.stop, StopReason::CompletedEpochs);
        assert_eq!(out.record.epochs.len(), 15);
    }
}

#[test]
fn training_is_bitwise_reproducible() {
    let ds = small_xcosx();
    let cfg = TrainConfig {
        alpha: 0.005,
        ..small_cfg()
    };
    let a = train(&cfg, &ds, StopRule::Epochs(4)).unwrap();
    let b = train(&cfg, &ds, StopRule::Epochs(4)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.record.to_csv(), b.record.to_csv());
    let other = TrainConfig {
        seeds: lipode::train::TrainSeeds {
            shuffle: 1,
            ..cfg.seeds
        },
        ..cfg.clone()
    };
    assert_ne!(train(&other, &ds, StopRule::Epochs(4)).unwrap().params, a.params);
}

#[test]
fn regularized_epochs_record_the_estimate() {
    let ds = small_xcosx();
    let cfg = TrainConfig {
        alpha: 0.01,
        ..small_cfg()
    };
    let out = train(&cfg, &ds, StopRule::Epochs(3)).unwrap();
    for e in &out.record.epochs {
        let lip = e.lip_estimate.unwrap();
        assert!((e.loss - (e.train_mse + 0.01 * lip)).abs() < 1e-12);
    }
    assert!(out.record.lip_evaluations > 0);
    let plain = train(&small_cfg(), &ds, StopRule::Epochs(3)).unwrap();
    assert!(plain.record.epochs.iter().all(|e| e.lip_estimate.is_none()));
    assert_eq!(plain.record.lip_evaluations, 0);
}

#[test]
fn schedule_is_a_staircase() {
    let cfg = TrainConfig {
        lr0: 1e-2,
        decay_factor: 0.1,
        decay_period: 7,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.learning_rate(1), 1e-2);
    assert_eq!(cfg.learning_rate(7), 1e-2);
    assert!((cfg.learning_rate(8) - 1e-3).abs() < 1e-18);
    assert!((cfg.learning_rate(15) - 1e-4).abs() < 1e-19);
    assert_eq!(cfg.layer_sizes(2, 1), vec![2, 30, 30, 30, 30, 30, 30, 30, 1]);
}

#[test]
fn sweep_matches_or_flags_every_weight() {
    let ds = small_xcosx();
    let alphas = [0.0, 0.01, 0.001];
    let runs = run_alpha_sweep(&ds, &small_cfg(), &alphas).unwrap();
    assert_eq!(runs.iter().map(|r| r.alpha).collect::<Vec<_>>(), alphas);
    let target = runs[1].record.last().unwrap().train_rel_mse_pct;
    assert_eq!(runs[1].record.epochs.len(), 10);
    for r in &runs {
        let got = r.record.last().map_or(f64::NAN, |e| e.train_rel_mse_pct);
        assert!(r.flagged() || sig3(got) == sig3(target), "alpha {}: {got} vs {target}", r.alpha);
    }
    assert!(run_alpha_sweep(&ds, &small_cfg(), &[0.0, 0.5]).is_err());
}

#[test]
fn single_precision_training() {
    let mut sys = lookup::<f32>("xcosx").unwrap();
    sys.n_ic = 40;
    let ds = build_dataset(&sys, &DataConfig::default()).unwrap();
    let out = train(&small_cfg(), &ds, StopRule::Epochs(10)).unwrap();
    assert!(out.params.is_finite());
    assert!(out.record.last().unwrap().train_mse < out.record.initial_train_mse);
}

#[test]
fn sig3_format() {
    assert_eq!(sig3(0.051349), "5.13e-2");
    assert_eq!(sig3(0.051351), "5.14e-2");
    assert_eq!(sig3(12.0), "1.20e1");
}
