use std::collections::BTreeMap;

use chanest_neural::checkpoint;
use chanest_neural::gan::{Gan, GanSpec};
use chanest_neural::refine::Refiner;
use chanest_neural::train::{train_cnn, train_gan, PlaneSet, TrainConfig};
use chanest_neural::{Cnn, CnnSpec, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smooth_pairs(n: usize, rows: usize, cols: usize, noise: f64, seed: u64) -> PlaneSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = PlaneSet::new(rows, cols);
    for _ in 0..n {
        let f = rng.random_range(0.05..0.3);
        let ph = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = rng.random_range(0.3..0.9);
        let label: Vec<f64> = (0..rows * cols).map(|i| amp * ((i / cols) as f64 * f + ph).sin()).collect();
        let input: Vec<f64> = label.iter().map(|v| v + noise * rng.random_range(-1.0..1.0)).collect();
        set.push(&input, &label).unwrap();
    }
    set
}

fn flat<N: Network<f32>>(n: &N) -> Vec<f32> {
    n.params().iter().flat_map(|p| p.value.data().to_vec()).collect()
}

#[test]
fn cnn_overfits_one_sample() {
    let mut data = smooth_pairs(1, 12, 14, 0.3, 1);
    let mut cnn = Cnn::<f32>::new(CnnSpec::default(), 1).unwrap();
    let cfg = TrainConfig { epochs: 200, batch_size: 1, ..TrainConfig::cnn_default() };
    let hist = train_cnn(&mut cnn, &mut data, &cfg).unwrap();
    assert!(hist.iter().all(|v| v.is_finite()));
    assert!(hist[0] / hist[199] >= 100.0, "loss {} -> {}", hist[0], hist[199]);
}

#[test]
fn cnn_training_is_deterministic() {
    let run = || {
        let mut data = smooth_pairs(6, 12, 14, 0.2, 2);
        let mut cnn = Cnn::<f32>::new(CnnSpec::default(), 3).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, seed: 5, ..TrainConfig::cnn_default() };
        let hist = train_cnn(&mut cnn, &mut data, &cfg).unwrap();
        (hist, flat(&cnn))
    };
    assert_eq!(run(), run());
}

#[test]
fn fully_frozen_cnn_does_not_move() {
    let mut data = smooth_pairs(4, 12, 14, 0.2, 3);
    let mut cnn = Cnn::<f32>::new(CnnSpec::default(), 4).unwrap();
    cnn.set_trainable_by_tag(&|_| false);
    let before = flat(&cnn);
    let cfg = TrainConfig { epochs: 4, batch_size: 4, ..TrainConfig::cnn_default() };
    let hist = train_cnn(&mut cnn, &mut data, &cfg).unwrap();
    assert_eq!(flat(&cnn), before);
    // Only the f32 summation order changes with the shuffle.
    assert!(hist.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-6 * w[0]), "{hist:?}");
}

#[test]
fn partially_frozen_cnn_keeps_frozen_blocks() {
    let mut data = smooth_pairs(4, 12, 14, 0.2, 3);
    let mut cnn = Cnn::<f32>::new(CnnSpec::default(), 4).unwrap();
    cnn.set_trainable_by_tag(&|t| t == "block5" || t == "block6");
    let frozen = |c: &Cnn<f32>| -> Vec<f32> {
        c.params().iter().filter(|p| !p.trainable).flat_map(|p| p.value.data().to_vec()).collect()
    };
    let before = frozen(&cnn);
    let running: Vec<f32> = cnn.buffers().iter().flat_map(|b| b.value.data().to_vec()).collect();
    let all_before = flat(&cnn);
    train_cnn(&mut cnn, &mut data, &TrainConfig { epochs: 2, batch_size: 2, ..TrainConfig::cnn_default() }).unwrap();
    assert_eq!(frozen(&cnn), before);
    assert_eq!(cnn.buffers().iter().flat_map(|b| b.value.data().to_vec()).collect::<Vec<_>>(), running);
    assert_ne!(flat(&cnn), all_before);
}

fn mean_l1(gan: &mut Gan<f32>, set: &PlaneSet) -> f64 {
    let idx: Vec<usize> = (0..set.len()).collect();
    let (x, y): (Tensor<f32>, Tensor<f32>) = set.batch(&idx);
    let out = gan.refine_planes(&x).unwrap();
    out.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / out.len() as f64
}

#[test]
fn gan_with_dominant_l1_behaves_like_regression() {
    let mut train = smooth_pairs(32, 12, 14, 0.2, 6);
    let val = smooth_pairs(8, 12, 14, 0.2, 7);
    let mut gan = Gan::<f32>::new(GanSpec::for_grid(12, 14), 8).unwrap();
    let before = mean_l1(&mut gan, &val);
    let cfg = TrainConfig { epochs: 4, l1_weight: 1e6, ..TrainConfig::gan_default() };
    let hist = train_gan(&mut gan, &mut train, &cfg).unwrap();
    let after = mean_l1(&mut gan, &val);
    assert!(after < before, "validation L1 {before} -> {after}");
    assert!(hist.last().unwrap().l1 < hist[0].l1, "{hist:?}");
}

#[test]
fn gan_training_is_deterministic() {
    let run = || {
        let mut data = smooth_pairs(8, 12, 14, 0.2, 9);
        let mut gan = Gan::<f32>::new(GanSpec::for_grid(12, 14), 10).unwrap();
        let cfg = TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::gan_default() };
        train_gan(&mut gan, &mut data, &cfg).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gan.ckpt");
    let mut gan = Gan::<f32>::new(GanSpec::for_grid(12, 14), 11).unwrap();
    let mut data = smooth_pairs(2, 12, 14, 0.2, 1);
    train_gan(&mut gan, &mut data, &TrainConfig { epochs: 1, batch_size: 2, ..TrainConfig::gan_default() }).unwrap();
    let meta = BTreeMap::from([("input".to_string(), "li".to_string())]);
    checkpoint::save(&gan, &meta, &path).unwrap();
    let (mut back, manifest): (Gan<f32>, _) = checkpoint::load(&path).unwrap();
    assert_eq!(manifest.metadata, meta);
    assert_eq!(flat(&back), flat(&gan));
    assert_eq!(back.gen_optimizer.step, 1);
    let val = smooth_pairs(2, 12, 14, 0.2, 2);
    assert_eq!(mean_l1(&mut back, &val), mean_l1(&mut gan, &val));
}

#[test]
fn rejects_bad_config() {
    let mut data = smooth_pairs(1, 12, 14, 0.2, 1);
    let mut cnn = Cnn::<f32>::new(CnnSpec::default(), 1).unwrap();
    let bad = TrainConfig { batch_size: 0, ..TrainConfig::cnn_default() };
    assert!(train_cnn(&mut cnn, &mut data, &bad).is_err());
    let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::cnn_default() };
    assert!(train_cnn(&mut cnn, &mut data, &bad).is_err());
    assert!(train_cnn(&mut cnn, &mut PlaneSet::new(12, 14), &TrainConfig::cnn_default()).is_err());
}
