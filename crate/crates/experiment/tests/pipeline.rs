use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chanest_core::channel_models::{grid_to_impulse, ChannelGrid};
use chanest_core::estimators::nmse;
use chanest_core::CMatrix;
use chanest_experiment::config::{Domain, ExperimentConfig, Method, Split};
use chanest_experiment::dataset::{generate_dataset, Dataset, Record};
use chanest_experiment::error::Error;
use chanest_experiment::histogram::histogram_magnitudes;
use chanest_experiment::link::{noise_seed, run_link, LinkContext};
use chanest_experiment::pipeline::{
    evaluate_sweep, finetune_target, run_experiment, source_copy_path, train_source, write_results_csv, Model,
    BASELINE, CSV_HEADER,
};
use chanest_neural::train::Precision;
use num_complex::Complex64;

/// Desk grid with a handful of samples and one training epoch.
fn tiny(source: usize, target: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.source.samples = source;
    c.target.samples = target;
    c.splits.source_train = Split::new(0, source / 2).unwrap();
    c.splits.source_val = Split::new(source / 2, source).unwrap();
    c.splits.target_finetune = Split::new(0, target / 2).unwrap();
    c.splits.target_val = Split::new(target / 2, target).unwrap();
    c.snr_db = vec![0.0, 10.0];
    c.cnn_train.epochs = 1;
    c.cnn_finetune.epochs = 1;
    c
}

fn columns_identical(g: &CMatrix) -> bool {
    let first = g.column(0);
    g.columns().into_iter().all(|c| c == first)
}

fn file_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.insert(rel, fs::read(&entry).unwrap());
    }
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files.sort();
    files
}

#[test]
fn source_dataset_of_3077_quasi_static_records() {
    let c = ExperimentConfig::desk();
    let mut c = c;
    c.source.samples = 3077;
    c.splits.source_val = Split::new(448, 3077).unwrap();
    let ds = generate_dataset(&c, Domain::Source).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("source.ds");
    ds.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back.len(), 3077);
    assert_eq!(back.domain, Domain::Source);
    assert!(back.records.iter().all(|r| columns_identical(&r.channel.values)));
}

#[test]
fn target_dataset_of_1000_records_without_doppler() {
    let mut c = ExperimentConfig::desk();
    c.target.samples = 1000;
    c.splits.target_val = Split::new(64, 1000).unwrap();
    let ds = generate_dataset(&c, Domain::Target).unwrap();
    assert_eq!(ds.len(), 1000);
    assert!(ds.outage_count() < 1000);
    for r in &ds.records {
        assert!(columns_identical(&r.channel.values));
        assert_eq!(r.outage, r.channel.values.iter().all(|v| v.norm() == 0.0));
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let c = tiny(40, 40);
    for domain in [Domain::Source, Domain::Target] {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        generate_dataset(&c, domain).unwrap().write(&mut a).unwrap();
        generate_dataset(&c, domain).unwrap().write(&mut b).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn ls_error_does_not_shrink_as_snr_drops() {
    let c = tiny(100, 4);
    let ds = generate_dataset(&c, Domain::Source).unwrap();
    let ctx = LinkContext::new(&c.grid, &c.pilots).unwrap();
    let mut previous = 0.0;
    for snr in [30.0, 20.0, 10.0, 0.0, -10.0] {
        let mut err = 0.0;
        for (i, r) in ds.records.iter().enumerate() {
            let out = run_link(&ctx, &r.channel, snr, noise_seed(7, Domain::Source, i, snr, 0)).unwrap();
            let (mut e, mut n) = (0.0, 0.0);
            for p in &ctx.pilots {
                let h = r.channel.values[[p.subcarrier, p.symbol]];
                e += (out.ls.values[[p.subcarrier, p.symbol]] - h).norm_sqr();
                n += h.norm_sqr();
            }
            err += e / n;
        }
        let mean = err / ds.len() as f64;
        assert!(mean >= previous, "pilot error {mean} at {snr} dB below {previous}");
        let expected = 10f64.powf(-snr / 10.0);
        assert!((mean / expected - 1.0).abs() < 0.1, "pilot NMSE {mean} vs 1/SNR {expected}");
        previous = mean;
    }
}

#[test]
fn noiseless_link_recovers_pilots_on_generated_channels() {
    let c = tiny(8, 8);
    let ctx = LinkContext::new(&c.grid, &c.pilots).unwrap();
    for domain in [Domain::Source, Domain::Target] {
        let ds = generate_dataset(&c, domain).unwrap();
        // Taps beyond the CP cause genuine inter-symbol interference.
        let within_cp = |ch: &ChannelGrid| {
            let taps = grid_to_impulse(ch, c.grid.sample_rate_hz()).taps;
            let peak = taps.iter().map(|v| v.norm()).fold(0.0, f64::max);
            (c.grid.cp_len..taps.nrows()).all(|n| taps.row(n).iter().all(|v| v.norm() < 1e-9 * peak))
        };
        let usable: Vec<_> = ds.records.iter().filter(|r| !r.outage && within_cp(&r.channel)).collect();
        assert!(!usable.is_empty());
        for r in usable {
            let out = run_link(&ctx, &r.channel, f64::INFINITY, 0).unwrap();
            let scale = r.channel.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for p in &ctx.pilots {
                let d = out.ls.values[[p.subcarrier, p.symbol]] - r.channel.values[[p.subcarrier, p.symbol]];
                assert!(d.norm() < 1e-9 * scale);
            }
        }
    }
}

fn flat_dataset(c: &ExperimentConfig, domain: Domain) -> Dataset {
    let (k, m) = c.grid.shape();
    let records = (0..c.samples(domain))
        .map(|i| Record {
            channel: ChannelGrid {
                values: CMatrix::from_elem((k, m), Complex64::from_polar(1e-5 * (1.0 + i as f64), 0.3 * i as f64)),
            },
            outage: false,
            paths: None,
        })
        .collect();
    Dataset {
        domain,
        rows: k,
        cols: m,
        config_hash: c.dataset_hash(domain).unwrap(),
        records,
    }
}

#[test]
fn baseline_is_exact_on_flat_channels() {
    let mut c = tiny(8, 8);
    c.snr_db = vec![400.0];
    c.models.clear();
    let ds = flat_dataset(&c, Domain::Source);
    let dir = tempfile::tempdir().unwrap();
    let eval = evaluate_sweep(&c, &ds, dir.path(), false).unwrap();
    assert_eq!(eval.rows.len(), 1);
    assert!(eval.rows[0].nmse_linear < 1e-18, "{}", eval.rows[0].nmse_linear);

    let ctx = LinkContext::new(&c.grid, &c.pilots).unwrap();
    for r in &ds.records {
        let out = run_link(&ctx, &r.channel, f64::INFINITY, 0).unwrap();
        assert!(nmse(&out.li.values, &r.channel).unwrap() < 1e-18);
    }
}

fn untrained_checkpoints(c: &ExperimentConfig, dir: &Path, with_copies: bool) {
    let meta = BTreeMap::from([("grid".to_string(), "72x14".to_string())]);
    for &m in &c.models {
        let model = Model::new(m, c, Precision::F32).unwrap();
        model.save(&meta, &dir.join(format!("{m}.ckpt"))).unwrap();
        if with_copies {
            model.save(&meta, &source_copy_path(dir, m)).unwrap();
        }
    }
}

#[test]
fn csv_has_one_row_per_snr_and_method_and_is_reproducible() {
    let c = tiny(8, 8);
    let ds = generate_dataset(&c, Domain::Target).unwrap();
    let dir = tempfile::tempdir().unwrap();
    untrained_checkpoints(&c, dir.path(), true);

    let eval = evaluate_sweep(&c, &ds, dir.path(), true).unwrap();
    assert!(eval.missing.is_empty());
    let methods = 1 + 2 * c.models.len();
    assert_eq!(eval.rows.len(), c.snr_db.len() * methods);
    assert!(eval.rows.iter().all(|r| r.n_samples > 0));
    assert!(eval.rows.iter().any(|r| r.method == "li_cnn_noft"));

    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_results_csv(&eval.rows, &mut a).unwrap();
    let again = evaluate_sweep(&c, &ds, dir.path(), true).unwrap();
    write_results_csv(&again.rows, &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(text.lines().count(), 1 + eval.rows.len());
}

#[test]
fn missing_checkpoint_is_listed_and_others_still_run() {
    let mut c = tiny(8, 8);
    let ds = generate_dataset(&c, Domain::Source).unwrap();
    let dir = tempfile::tempdir().unwrap();
    c.models = vec![Method::LsCnn];
    untrained_checkpoints(&c, dir.path(), false);
    c.models = vec![Method::LsCnn, Method::LiCnn];

    let eval = evaluate_sweep(&c, &ds, dir.path(), false).unwrap();
    assert_eq!(eval.missing.len(), 1);
    assert_eq!(eval.missing[0].0, "li_cnn");
    let names: Vec<_> = eval.rows.iter().filter(|r| r.snr_db == 0.0).map(|r| r.method.as_str()).collect();
    assert_eq!(names, [BASELINE, "ls_cnn"]);
}

#[test]
fn histogram_counts_and_zero_dataset() {
    let c = tiny(10, 4);
    let ds = generate_dataset(&c, Domain::Source).unwrap();
    let h = histogram_magnitudes(&c, &ds, None, 30, None).unwrap();
    assert_eq!(h.total(), (72 * 14 * 10) as u64);
    let noisy = histogram_magnitudes(&c, &ds, Some(0.0), 30, None).unwrap();
    assert_eq!(noisy.total(), (72 * 14 * 10) as u64);

    let mut zero = ds.clone();
    for r in &mut zero.records {
        r.channel.values.fill(Complex64::new(0.0, 0.0));
        r.outage = true;
    }
    let hz = histogram_magnitudes(&c, &zero, None, 8, None).unwrap();
    assert_eq!(hz.counts[0], hz.total());
    assert_eq!(hz.total(), (72 * 14 * 10) as u64);
}

#[test]
fn histogram_support_scales_with_amplitude() {
    let base = tiny(60, 4);
    let mut loud = base.clone();
    loud.source.amplitude_scale = 4.0;
    let a = generate_dataset(&base, Domain::Source).unwrap();
    let b = generate_dataset(&loud, Domain::Source).unwrap();
    let top = b.records.iter().flat_map(|r| r.channel.values.iter().map(|v| v.norm())).fold(0.0, f64::max);
    let ha = histogram_magnitudes(&base, &a, None, 400, Some(top)).unwrap();
    let hb = histogram_magnitudes(&loud, &b, None, 400, Some(top)).unwrap();
    let ratio = hb.support() / ha.support();
    assert!((ratio - 4.0).abs() < 0.05, "support ratio {ratio}");
}

#[test]
fn hash_mismatch_aborts_before_training() {
    let c = tiny(8, 8);
    let ds = generate_dataset(&c, Domain::Source).unwrap();
    let other = c.clone().with_seed(5);
    let dir = tempfile::tempdir().unwrap();
    let err = train_source(&other, &ds, dir.path()).unwrap_err();
    assert!(matches!(err, Error::HashMismatch { .. }));
    assert_eq!(err.exit_code(), 2);
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn overlapping_finetune_split_is_rejected() {
    let c = tiny(8, 8);
    let target = generate_dataset(&c, Domain::Target).unwrap();
    let mut bad = c.clone();
    bad.splits.target_val = Split::new(2, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = finetune_target(&bad, &target, dir.path(), dir.path()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn domains_are_not_interchangeable() {
    let c = tiny(8, 8);
    let target = generate_dataset(&c, Domain::Target).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(train_source(&c, &target, dir.path()).is_err());
}

#[test]
fn full_pipeline_reruns_byte_identical() {
    let c = tiny(16, 12);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&c, a.path()).unwrap();
    run_experiment(&c, b.path()).unwrap();
    let (fa, fb) = (file_bytes(a.path()), file_bytes(b.path()));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs between runs");
    }
    assert!(fa.contains_key("target/li_cnn.source.ckpt"));
    assert_eq!(ra.target_eval.rows.len(), c.snr_db.len() * (1 + 2 * c.models.len()));
}

mod properties {
    use super::*;
    use chanest_core::channel_models::{PathSet, RayPath};
    use proptest::prelude::*;
    use rand::Rng;

    fn record(values: Vec<(f64, f64)>, rows: usize, cols: usize, with_paths: bool, delay: f64) -> Record {
        let channel = ChannelGrid {
            values: CMatrix::from_shape_vec((rows, cols), values.into_iter().map(|(r, i)| Complex64::new(r, i)).collect()).unwrap(),
        };
        let outage = channel.values.iter().all(|v| v.norm_sqr() == 0.0);
        let paths = with_paths.then(|| {
            let mut p = PathSet::new(if outage { vec![] } else { vec![RayPath::new(1e-4, 0.3, delay)] });
            p.ue_position = [delay, -delay, 1.5];
            p
        });
        Record { channel, outage, paths }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dataset_bytes_round_trip(
            rows in 1usize..6,
            cols in 1usize..4,
            n in 1usize..5,
            with_paths: bool,
            seed in any::<u64>(),
            zero_first: bool,
        ) {
            let mut rng = chanest_core::rng::stream(seed, 0, 0);
            let records: Vec<Record> = (0..n)
                .map(|i| {
                    let values = (0..rows * cols)
                        .map(|_| if zero_first && i == 0 { (0.0, 0.0) } else { (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) })
                        .collect();
                    record(values, rows, cols, with_paths, rng.random_range(0.0..1e-6))
                })
                .collect();
            let ds = Dataset { domain: if with_paths { Domain::Target } else { Domain::Source }, rows, cols, config_hash: [seed as u8; 32], records };
            let mut bytes = Vec::new();
            ds.write(&mut bytes).unwrap();
            let back = Dataset::read(bytes.as_slice()).unwrap();
            prop_assert_eq!(&back, &ds);
            let mut again = Vec::new();
            back.write(&mut again).unwrap();
            prop_assert_eq!(again, bytes.clone());
            prop_assert!(Dataset::read(&bytes[..bytes.len() - 1]).is_err());
        }

        #[test]
        fn split_overlap_is_symmetric(a in 0usize..50, la in 1usize..20, b in 0usize..50, lb in 1usize..20) {
            let (x, y) = (Split::new(a, a + la).unwrap(), Split::new(b, b + lb).unwrap());
            prop_assert_eq!(x.overlaps(&y), y.overlaps(&x));
            let shared = x.indices().any(|i| y.indices().contains(&i));
            prop_assert_eq!(x.overlaps(&y), shared);
        }
    }
}
