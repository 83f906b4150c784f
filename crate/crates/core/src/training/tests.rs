use super::*;
use crate::dataset::{split_train_test, synthetic};
use crate::numerics::{finite_difference, max_relative_error};

fn tiny_problem(seed: u64) -> (AelModel, GatingNetwork, InteractionMatrix) {
    let mut rng = Rng::new(seed);
    let mut model = AelModel::new(3, 6, HiddenDims([4, 3, 2]), &mut rng).unwrap();
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.uniform(-0.3, 0.3);
        }
    }
    let mut gate = GatingNetwork::new(6, NUM_EXPERTS, 2).unwrap();
    for w in gate.w_gate.iter_mut() {
        *w = rng.uniform(-1.0, 1.0);
    }
    for w in gate.w_noise.iter_mut() {
        *w = rng.uniform(-0.5, 0.5);
    }
    let rows = vec![vec![0, 2, 3], vec![1, 4], vec![0, 1, 2, 5]];
    let data = InteractionMatrix::from_rows(3, 6, rows).unwrap();
    (model, gate, data)
}

fn set_flat(model: &AelModel, gate: &GatingNetwork, flat: &[f64]) -> (AelModel, GatingNetwork) {
    let (mut m, mut g) = (model.clone(), gate.clone());
    let mut it = flat.iter();
    for t in m.tensors_mut().into_iter().chain(g.tensors_mut()) {
        for v in t.iter_mut() {
            *v = *it.next().unwrap();
        }
    }
    (m, g)
}

#[test]
fn corruption_only_removes_positives() {
    let mut rng = Rng::new(1);
    let x: Vec<f64> = (0..10_000).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let y = corrupt(&x, 0.3, &mut rng);
    assert!(x.iter().zip(&y).all(|(a, b)| *b == 0.0 || b == a));
    let kept = y.iter().sum::<f64>() / x.iter().sum::<f64>();
    assert!((kept - 0.7).abs() < 0.02, "{kept}");
    assert_eq!(corrupt(&x, 0.0, &mut rng), x);
    assert!(corrupt(&x, 1.0, &mut rng).iter().all(|&v| v == 0.0));
}

#[test]
fn regularizer_matches_loop() {
    let (model, gate, _) = tiny_problem(2);
    let mut sq = 0.0;
    for t in model.tensors().into_iter().chain(gate.tensors()) {
        for v in t {
            sq += v * v;
        }
    }
    let got = l2_regularizer(&model, Some(&gate), 0.2);
    assert!((got - 0.1 * sq).abs() < 1e-12);
    assert_eq!(l2_regularizer(&model, None, 0.0), 0.0);
}

#[test]
fn batch_gradient_matches_finite_differences() {
    for (seed, k) in [(3, 2), (4, 1), (5, 3)] {
        let (model, mut gate, data) = tiny_problem(seed);
        gate.set_k(k).unwrap();
        let cfg = TrainConfig {
            k,
            l2_lambda: 1e-3,
            w_importance: 0.5,
            w_load: 0.5,
            ..TrainConfig::default()
        };
        let batch = [0, 2];
        let rng = Rng::new(seed * 10);
        let (_, grads) = batch_loss_and_grads(&model, &gate, &batch, &data, &cfg, &mut rng.clone()).unwrap();
        let analytic: Vec<f64> = grads.tensors().concat();
        let flat: Vec<f64> = model.tensors().into_iter().chain(gate.tensors()).collect::<Vec<_>>().concat();
        let numeric = finite_difference(
            |p| {
                let (m, g) = set_flat(&model, &gate, p);
                batch_loss(&m, &g, &batch, &data, &cfg, &mut rng.clone()).unwrap().0
            },
            &flat,
            1e-6,
        );
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "k={k}: {err}");
    }
}

#[test]
fn loss_components_sum_to_total() {
    let (model, gate, data) = tiny_problem(6);
    let cfg = TrainConfig::default();
    let (total, c) = batch_loss(&model, &gate, &[0, 1, 2], &data, &cfg, &mut Rng::new(1)).unwrap();
    assert_eq!(total, c.total());
    assert!(c.reconstruction > 0.0 && c.regularizer > 0.0);
    assert!(batch_loss(&model, &gate, &[], &data, &cfg, &mut Rng::new(1)).is_err());
    assert!(batch_loss(&model, &gate, &[3], &data, &cfg, &mut Rng::new(1)).is_err());
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = [
        TrainConfig { k: 0, ..TrainConfig::default() },
        TrainConfig { k: 4, ..TrainConfig::default() },
        TrainConfig { corruption: 1.5, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { pretrain_batch_size: 0, ..TrainConfig::default() },
        TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
        TrainConfig { validation_fraction: 1.0, ..TrainConfig::default() },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}

fn small_split(users: usize, items: usize, seed: u64) -> SplitDataset {
    let data = synthetic(users, items, seed).unwrap();
    split_train_test(&data, 0.8, seed).unwrap()
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 6,
        batch_size: 32,
        learning_rate: 1e-2,
        expert_learning_rate: 1e-2,
        hidden_dims: HiddenDims([16, 8, 4]),
        pretrain_epochs: 0,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn validation_carve_out_partitions_training_rows() {
    let data = synthetic(40, 30, 14).unwrap();
    let cfg = TrainConfig::default();
    let v = validation_split(&data, &cfg).unwrap();
    for u in 0..data.num_users() {
        let (fit_row, held) = (v.train.row(u), v.test.row(u));
        let len = data.row(u).len();
        assert_eq!(fit_row.len() + held.len(), len);
        assert!(held.iter().all(|i| data.contains(u, *i) && !fit_row.contains(i)));
        if len >= 2 {
            assert_eq!(held.len(), ((len as f64 * 0.1).floor() as usize).max(1));
        }
    }
    assert_eq!(v, validation_split(&data, &cfg).unwrap());
}

#[test]
fn training_reduces_reconstruction_loss() {
    let split = small_split(80, 40, 7);
    let trained = fit(&split, &quick_config(7)).unwrap();
    let epochs = &trained.report.epochs;
    assert!(!epochs.is_empty());
    assert!(epochs.last().unwrap().components.reconstruction < epochs[0].components.reconstruction);
    for e in epochs {
        let share: f64 = e.importance_share.iter().sum();
        assert!((share - 1.0).abs() < 1e-9);
        assert!(e.val_recall_at_5.is_some());
    }
}

#[test]
fn training_is_deterministic() {
    let split = small_split(60, 30, 8);
    let a = fit(&split, &quick_config(3)).unwrap();
    let b = fit(&split, &quick_config(3)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.gating, b.gating);
    assert_eq!(a.report.epochs, b.report.epochs);
    let c = fit(&split, &quick_config(4)).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn best_epoch_parameters_are_restored() {
    let split = small_split(60, 30, 9);
    let cfg = quick_config(5);
    let trained = fit(&split, &cfg).unwrap();
    let validation = validation_split(&split.train, &cfg).unwrap();
    let recall = validation_recall(&trained.model, &trained.gating, &validation).unwrap();
    assert_eq!(recall, trained.report.best_val_recall);
}

#[test]
fn early_stopping_halts_before_the_budget() {
    let split = small_split(60, 30, 10);
    let cfg = TrainConfig {
        epochs: 200,
        early_stop_patience: 2,
        ..quick_config(6)
    };
    let report = fit(&split, &cfg).unwrap().report;
    assert!(report.stopped_early);
    assert!(report.epochs.len() < 200);
    assert_eq!(report.epochs.len(), report.best_epoch + 2);
}

#[test]
fn training_log_layout() {
    let split = small_split(40, 20, 11);
    let cfg = TrainConfig { epochs: 2, ..quick_config(1) };
    let csv = fit(&split, &cfg).unwrap().report.log_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], TrainReport::LOG_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));
    assert_eq!(lines[1].split(',').count(), 9);
}

#[test]
fn large_stage_pretraining_loss_decreases() {
    let data = synthetic(50, 40, 12).unwrap();
    let mut model = AelModel::new(50, 40, HiddenDims([16, 8, 4]), &mut Rng::new(12)).unwrap();
    let cfg = TrainConfig {
        pretrain_epochs: 5,
        ..TrainConfig::default()
    };
    let stages = pretrain_layerwise(&mut model, &data, &cfg).unwrap();
    assert_eq!(stages.len(), 3);
    let large = &stages[0].losses;
    assert_eq!(large.len(), 5);
    assert!(large.windows(2).all(|w| w[1] <= w[0]), "{large:?}");
}

#[test]
fn later_pretraining_stages_freeze_earlier_levels() {
    let data = synthetic(30, 20, 13).unwrap();
    let mut model = AelModel::new(30, 20, HiddenDims([8, 4, 2]), &mut Rng::new(13)).unwrap();
    let cfg = TrainConfig {
        pretrain_epochs: 2,
        ..TrainConfig::default()
    };
    let mut rng = Rng::new(1);
    pretrain_level(&mut model, &data, Level::Large, &cfg, &mut rng).unwrap();
    let large = model.level(Level::Large).clone();
    let medium = model.level(Level::Medium).clone();
    pretrain_level(&mut model, &data, Level::Medium, &cfg, &mut rng).unwrap();
    assert_eq!(model.level(Level::Large), &large);
    assert_ne!(model.level(Level::Medium), &medium);

    let medium = model.level(Level::Medium).clone();
    pretrain_level(&mut model, &data, Level::Small, &cfg, &mut rng).unwrap();
    assert_eq!(model.level(Level::Large), &large);
    assert_eq!(model.level(Level::Medium), &medium);
}

#[test]
fn zero_epoch_budgets_change_nothing() {
    let data = synthetic(20, 15, 15).unwrap();
    let mut model = AelModel::new(20, 15, HiddenDims([6, 4, 2]), &mut Rng::new(15)).unwrap();
    let before = model.clone();
    let cfg = TrainConfig {
        pretrain_epochs: 0,
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(pretrain_layerwise(&mut model, &data, &cfg).unwrap().is_empty());
    assert_eq!(model, before);

    let split = split_train_test(&data, 0.8, 15).unwrap();
    let mut gate = GatingNetwork::new(15, NUM_EXPERTS, 2).unwrap();
    let report = train(&mut model, &mut gate, &split, &cfg).unwrap();
    assert!(report.epochs.is_empty());
    assert_eq!(report.best_epoch, 0);
    assert_eq!(model, before);
}

fn epoch_losses(report: &TrainReport) -> Vec<f64> {
    report.epochs.iter().map(|e| e.components.total()).collect()
}

#[test]
fn smoke_training_loss_does_not_increase_early() {
    let split = small_split(50, 40, 16);
    let cfg = TrainConfig {
        epochs: 3,
        early_stop_patience: 0,
        pretrain_epochs: 0,
        seed: 16,
        ..TrainConfig::default()
    };
    let losses = epoch_losses(&fit(&split, &cfg).unwrap().report);
    assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
}

#[test]
fn balancing_losses_even_out_expert_usage() {
    let split = small_split(200, 60, 17);
    let base = TrainConfig {
        epochs: 10,
        early_stop_patience: 0,
        pretrain_epochs: 5,
        seed: 17,
        ..TrainConfig::default()
    };
    let unbalanced = TrainConfig {
        w_importance: 0.0,
        w_load: 0.0,
        ..base.clone()
    };
    let cv = |cfg: &TrainConfig| fit(&split, cfg).unwrap().report.epochs.last().unwrap().importance_cv;
    let (with, without) = (cv(&base), cv(&unbalanced));
    assert!(with < without, "{with} vs {without}");
}
