use csiaug::learner::{
    evaluate_rmse, rank_difficulty, train, transfer, MlpConfig, Model, Normalization, TrainConfig, TrainTrace,
    TransferMode,
};
use csiaug::rng::complex_normal;
use csiaug::{ComplexVec, CsiSample, CsiTensor, Dataset, DatasetMeta, Label2D, RngStream};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn meta(m: usize) -> DatasetMeta {
    DatasetMeta {
        n_subcarriers: m,
        n_ap: 1,
        n_rx: 1,
        bandwidth_hz: 40e6,
        carrier_hz: 5e9,
        created_from: "test".into(),
    }
}

fn random_dataset(n: usize, m: usize, seed: u64) -> Dataset {
    let mut g = RngStream::new(seed).generator();
    let samples = (0..n)
        .map(|_| {
            let link = ComplexVec::new((0..m).map(|_| complex_normal(&mut g, 1.0)).collect()).unwrap();
            let label = Label2D::new(g.random_range(0.0..10.0), g.random_range(0.0..10.0)).unwrap();
            CsiSample::measured(CsiTensor::new(1, 1, vec![link]).unwrap(), label)
        })
        .collect();
    Dataset::new(meta(m), samples).unwrap()
}

fn tiny_config(input_dim: usize) -> MlpConfig {
    MlpConfig {
        input_dim,
        hidden_layers: 2,
        hidden_width: 4,
        dropout_p: 0.2,
        feature_extractor_depth: 1,
    }
}

fn random_model(cfg: MlpConfig, seed: u64) -> Model {
    let mut g = RngStream::new(seed).generator();
    let params = (0..cfg.n_params()).map(|_| g.random_range(-1.0..1.0)).collect();
    let dim = cfg.input_dim;
    Model::from_parts(cfg, Normalization::identity(dim), params).unwrap()
}

/// A model that ignores its input and always predicts `at`.
fn constant_model(input_dim: usize, at: Label2D) -> Model {
    let cfg = tiny_config(input_dim);
    let mut params = vec![0.0; cfg.n_params()];
    let n = params.len();
    params[n - 2] = at.x;
    params[n - 1] = at.y;
    Model::from_parts(cfg, Normalization::identity(input_dim), params).unwrap()
}

fn labelled(labels: &[Label2D]) -> Dataset {
    let base = random_dataset(labels.len(), 4, 77);
    let samples = base
        .samples()
        .iter()
        .zip(labels)
        .map(|(s, &l)| CsiSample::measured(s.tensor().clone(), l))
        .collect();
    Dataset::new(meta(4), samples).unwrap()
}

fn quick(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 1e-3,
        weight_decay: 1e-5,
        batch_size: 8,
        seed,
    }
}

#[test]
fn gradient_matches_central_differences() {
    let ds = random_dataset(6, 4, 1);
    for seed in 0..4 {
        let model = random_model(tiny_config(8), 10 + seed);
        let (_, grad) = model.loss_and_gradient(&ds).unwrap();
        let h = 1e-3;
        let base = model.params().to_vec();
        let loss_at = |p: Vec<f64>| {
            let m = Model::from_parts(model.config().clone(), model.normalization().clone(), p).unwrap();
            m.loss_and_gradient(&ds).unwrap().0
        };
        let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        for k in 0..base.len() {
            let mut up = base.clone();
            let mut down = base.clone();
            up[k] += h;
            down[k] -= h;
            let numeric = (loss_at(up) - loss_at(down)) / (2.0 * h);
            let err = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-3 * scale);
            assert!(err <= 1e-4, "seed {seed} param {k}: analytic {} numeric {numeric}", grad[k]);
        }
    }
}

#[test]
fn singleton_is_memorised() {
    let ds = random_dataset(1, 4, 3);
    let mut cfg = tiny_config(8);
    cfg.dropout_p = 0.0;
    let (model, trace) = train(&ds, &ds.with_samples(vec![]).unwrap(), &cfg, &quick(500, 1)).unwrap();
    assert!(*trace.epoch_train_loss.last().unwrap() < 1e-3);
    assert!(evaluate_rmse(&model, &ds).unwrap().powi(2) < 1e-3);
}

#[test]
fn training_is_deterministic_per_seed() {
    let ds = random_dataset(40, 4, 5);
    let val = random_dataset(10, 4, 6);
    let cfg = tiny_config(8);
    let (a, ta) = train(&ds, &val, &cfg, &quick(5, 2)).unwrap();
    let (b, tb) = train(&ds, &val, &cfg, &quick(5, 2)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_eq!(ta.per_sample_avg_loss.len(), 40);
    let (c, _) = train(&ds, &val, &cfg, &quick(5, 3)).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn rmse_closed_forms() {
    let at = Label2D { x: 4.0, y: 6.0 };
    let model = constant_model(8, at);
    let exact = labelled(&[at, at, at]);
    assert_eq!(evaluate_rmse(&model, &exact).unwrap(), 0.0);
    let offset: Vec<Label2D> = (0..5).map(|_| Label2D { x: 3.0, y: 6.0 }).collect();
    assert!((evaluate_rmse(&model, &labelled(&offset)).unwrap() - 1.0).abs() < 1e-12);
    let three = labelled(&[Label2D { x: 1.0, y: 2.0 }, at, at]);
    let want = (25.0f64 / 3.0).sqrt();
    assert!((evaluate_rmse(&model, &three).unwrap() - want).abs() < 1e-12);
}

#[test]
fn rmse_ignores_sample_order() {
    let ds = random_dataset(50, 4, 8);
    let model = random_model(tiny_config(8), 4);
    let want = evaluate_rmse(&model, &ds).unwrap();
    let mut order: Vec<usize> = (0..50).collect();
    for seed in 0..5 {
        order.shuffle(&mut RngStream::new(seed).generator());
        assert_eq!(evaluate_rmse(&model, &ds.subset(&order).unwrap()).unwrap(), want);
    }
}

#[test]
fn transfer_modes_touch_the_right_parameters() {
    let source = random_dataset(40, 4, 11);
    let target = random_dataset(20, 4, 12);
    let empty = target.with_samples(vec![]).unwrap();
    let (src, _) = train(&source, &empty, &tiny_config(8), &quick(3, 1)).unwrap();

    let (tuned, _) = transfer(&src, &target, &empty, TransferMode::FullFineTune, &quick(2, 4)).unwrap();
    assert_ne!(tuned.feature_params(), src.feature_params());
    assert_eq!(tuned.normalization(), src.normalization());

    let (frozen, _) = transfer(&src, &target, &empty, TransferMode::FreezeFeatures, &quick(2, 4)).unwrap();
    assert_eq!(frozen.feature_params(), src.feature_params());
    assert_ne!(frozen.head_params(), src.head_params());
}

fn trace(losses: Vec<f64>) -> TrainTrace {
    TrainTrace {
        per_sample_avg_loss: losses,
        epoch_train_loss: vec![],
        epoch_val_loss: vec![],
        best_epoch: None,
    }
}

#[test]
fn ranking_examples() {
    let (hard, easy) = rank_difficulty(&trace(vec![5.0, 1.0, 3.0, 2.0]), 0.5).unwrap();
    assert_eq!(hard, vec![0, 2]);
    assert_eq!(easy, vec![1, 3]);
    let (hard, _) = rank_difficulty(&trace(vec![1.0; 10]), 0.25).unwrap();
    assert_eq!(hard, vec![0, 1, 2]);
    assert!(rank_difficulty(&trace(vec![1.0; 4]), 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ranking_partitions_indices(losses in prop::collection::vec(0.0f64..100.0, 1..200), rho in 0.01f64..=1.0) {
        let n = losses.len();
        let (hard, easy) = rank_difficulty(&trace(losses.clone()), rho).unwrap();
        prop_assert_eq!(hard.len(), (n as f64 * rho - 1e-9).ceil() as usize);
        let mut all: Vec<usize> = hard.iter().chain(&easy).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let floor = hard.iter().map(|&i| losses[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(easy.iter().all(|&i| losses[i] <= floor));
    }
}
