use chanest_adapt::{finetune_cnn, finetune_gan, freeze_for_transfer, FreezeMask, TransferKind};
use chanest_neural::gan::{Gan, GanSpec};
use chanest_neural::refine::Refiner;
use chanest_neural::train::{train_cnn, PlaneSet, TrainConfig};
use chanest_neural::{Cnn, CnnSpec, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pairs(n: usize, freq: (f64, f64), noise: f64, seed: u64) -> PlaneSet {
    let (rows, cols) = (12, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = PlaneSet::new(rows, cols);
    for _ in 0..n {
        let f = rng.random_range(freq.0..freq.1);
        let ph = rng.random_range(0.0..std::f64::consts::TAU);
        let label: Vec<f64> = (0..rows * cols).map(|i| 0.7 * ((i / cols) as f64 * f + ph).sin()).collect();
        let input: Vec<f64> = label.iter().map(|v| v + noise * rng.random_range(-1.0..1.0)).collect();
        set.push(&input, &label).unwrap();
    }
    set
}

fn nmse(model: &mut impl Refiner<f32>, set: &PlaneSet) -> f64 {
    let idx: Vec<usize> = (0..set.len()).collect();
    let (x, y) = set.batch::<f32>(&idx);
    let out = model.refine_planes(&x).unwrap();
    let num: f64 = out.data().iter().zip(y.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
    let den: f64 = y.data().iter().map(|b| (*b as f64).powi(2)).sum();
    num / den
}

fn small_cnn(seed: u64) -> Cnn<f32> {
    let spec = CnnSpec { kernels: vec![9, 5, 5, 5, 5, 5, 5], widths: vec![16, 16, 16, 8, 8, 4, 1] };
    Cnn::new(spec, seed).unwrap()
}

#[test]
fn frozen_cnn_blocks_survive_finetuning() {
    let mut cnn = small_cnn(1);
    let mut data = pairs(8, (0.05, 0.2), 0.2, 1);
    train_cnn(&mut cnn, &mut data, &TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::cnn_default() }).unwrap();
    let mask = freeze_for_transfer(TransferKind::Cnn, &cnn);
    let before = mask.frozen_checksum(&cnn);
    let mut target = pairs(8, (0.5, 0.9), 0.2, 2);
    finetune_cnn(&mut cnn, &mut target, &TrainConfig { epochs: 3, batch_size: 2, ..TrainConfig::cnn_default() }, &mask).unwrap();
    assert_eq!(mask.frozen_checksum(&cnn), before);
    assert_eq!(cnn.optimizer.step, 12);
}

#[test]
fn frozen_gan_layers_survive_finetuning() {
    let mut gan = Gan::<f32>::new(GanSpec::for_grid(12, 14), 2).unwrap();
    let mask = freeze_for_transfer(TransferKind::Gan, &gan);
    let before = mask.frozen_checksum(&gan);
    let everything = FreezeMask { flags: mask.flags.keys().map(|k| (k.clone(), false)).collect() }.frozen_checksum(&gan);
    let mut target = pairs(4, (0.5, 0.9), 0.2, 3);
    finetune_gan(&mut gan, &mut target, &TrainConfig { epochs: 2, batch_size: 2, ..TrainConfig::gan_default() }, &mask).unwrap();
    assert_eq!(mask.frozen_checksum(&gan), before);
    let after_all = FreezeMask { flags: mask.flags.keys().map(|k| (k.clone(), false)).collect() }.frozen_checksum(&gan);
    assert_ne!(after_all, everything, "trainable layers should have moved");
}

#[test]
fn finetuning_on_source_with_tiny_lr_is_a_no_op() {
    let mut cnn = small_cnn(3);
    let mut source = pairs(32, (0.05, 0.3), 0.3, 4);
    let val = pairs(16, (0.05, 0.3), 0.3, 5);
    train_cnn(&mut cnn, &mut source, &TrainConfig { epochs: 6, batch_size: 8, ..TrainConfig::cnn_default() }).unwrap();
    let pre = nmse(&mut cnn, &val);
    let mask = freeze_for_transfer(TransferKind::Cnn, &cnn);
    let cfg = TrainConfig { epochs: 2, batch_size: 8, learning_rate: 1e-7, ..TrainConfig::cnn_default() };
    finetune_cnn(&mut cnn, &mut source, &cfg, &mask).unwrap();
    let post = nmse(&mut cnn, &val);
    assert!((post - pre).abs() <= 0.05 * pre, "{pre} -> {post}");
}

#[test]
fn finetuning_improves_on_shifted_domain() {
    let mut cnn = small_cnn(4);
    let mut source = pairs(32, (0.02, 0.1), 0.3, 6);
    train_cnn(&mut cnn, &mut source, &TrainConfig { epochs: 6, batch_size: 8, ..TrainConfig::cnn_default() }).unwrap();
    let mut target = pairs(32, (0.6, 1.0), 0.3, 7);
    let val = pairs(16, (0.6, 1.0), 0.3, 8);
    let before = nmse(&mut cnn, &val);
    let mask = freeze_for_transfer(TransferKind::Cnn, &cnn);
    finetune_cnn(&mut cnn, &mut target, &TrainConfig { epochs: 10, batch_size: 8, ..TrainConfig::cnn_default() }, &mask).unwrap();
    let after = nmse(&mut cnn, &val);
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn all_trainable_mask_keeps_every_flag() {
    let cnn = small_cnn(0);
    let mask = FreezeMask::all_trainable(&cnn);
    assert!(mask.flags.values().all(|&t| t));
    assert_eq!(mask.trainable_count(&cnn), cnn.param_count());
}
