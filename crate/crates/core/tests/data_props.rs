use std::collections::HashMap;
use std::fs;

use churnlab::data::*;
use churnlab::harness::{initial_params, run_training, ExperimentConfig};
use churnlab::tensor::{LrSchedule, Matrix};
use churnlab::Error;
use proptest::prelude::*;

#[test]
fn four_element_orders_are_uniform() {
    let draws = 100_000u64;
    let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
    for seed in 0..draws {
        *counts.entry(epoch_order(seed, 0, 4)).or_default() += 1;
    }
    assert_eq!(counts.len(), 24);
    let p = 1.0 / 24.0;
    let expected = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for (perm, &c) in &counts {
        let z = (c as f64 - expected) / sigma;
        assert!(z.abs() < 5.0, "{perm:?}: {c} draws, z = {z:.2}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 23 degrees of freedom; the 0.9999 quantile is about 56.
    assert!(chi2 < 56.0, "chi2 = {chi2}");
}

#[test]
fn augment_noise_has_requested_std() {
    let batch = Matrix::zeros(1000, 10);
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut n = 0.0;
    for b in 0..100 {
        for &v in augment(&batch, 3, 0, b, 0.1).data() {
            sum += v;
            sq += v * v;
            n += 1.0;
        }
    }
    assert_eq!(n, 1e6);
    let mean = sum / n;
    let std = (sq / n - mean * mean).sqrt();
    assert!((std - 0.1).abs() <= 0.001, "{std}");
}

#[test]
fn augment_is_keyed_on_every_coordinate() {
    let x = Matrix::zeros(4, 3);
    let base = augment(&x, 1, 2, 3, 0.5);
    assert_eq!(base, augment(&x, 1, 2, 3, 0.5));
    assert_ne!(base, augment(&x, 2, 2, 3, 0.5));
    assert_ne!(base, augment(&x, 1, 3, 3, 0.5));
    assert_ne!(base, augment(&x, 1, 2, 4, 0.5));
}

#[test]
fn seed_channels_are_isolated() {
    let cfg = ExperimentConfig::default();
    let init = |b| initial_params(&cfg, b).unwrap().digest();
    let base = SeedBundle::new(5, 5, 5);
    assert_eq!(init(base), init(SeedBundle::new(5, 99, 5)));
    assert_eq!(init(base), init(SeedBundle::new(5, 5, 99)));
    assert_ne!(init(base), init(SeedBundle::new(6, 5, 5)));
    for epoch in 0..5 {
        assert_ne!(epoch_order(5, epoch, 480), epoch_order(6, epoch, 480));
    }
}

#[test]
fn epoch_order_is_stateless() {
    let late = epoch_order(11, 37, 100);
    for e in 0..37 {
        let _ = epoch_order(11, e, 100);
    }
    assert_eq!(late, epoch_order(11, 37, 100));
    assert_eq!(epoch_order(11, 0, 1), vec![0]);
}

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn load_csv_reads_well_formed_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.csv", "label,f0,f1\n0,1.5,-2\n1,0,3.25\n2,1e-3,4\n");
    let d = load_csv(&p).unwrap();
    assert_eq!((d.len(), d.dim(), d.k()), (3, 2, 3));
    assert_eq!(d.labels(), &[0, 1, 2]);
    assert_eq!(d.features().data(), &[1.5, -2.0, 0.0, 3.25, 1e-3, 4.0]);
}

#[test]
fn load_csv_names_the_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "bad.csv", "label,f0,f1\n0,abc,1\n1,2,3\n");
    match load_csv(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn load_csv_rejects_ragged_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "ragged.csv", "label,f0,f1\n0,1,2\n1,2\n");
    assert!(matches!(load_csv(&p), Err(Error::Schema { .. })));
    let p = write(&dir, "header.csv", "y,a\n0,1\n");
    assert!(matches!(load_csv(&p), Err(Error::Schema { .. })));
}

#[test]
fn near_zero_spread_is_learned_perfectly() {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.spread = 1e-3;
    cfg.hidden = vec![16];
    cfg.total_steps = 200;
    cfg.augment_sigma = 0.0;
    cfg.schedule = LrSchedule { warmup_steps: 20, decay_steps: vec![], ..LrSchedule::default() };
    let art = run_training(&cfg, SeedBundle::uniform(0)).unwrap();
    assert_eq!(art.steps, 200);
    assert_eq!(art.accuracy, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_export_import_is_bit_exact(n in 1usize..20, k in 2usize..5, d in 1usize..4, spread in 0.01f64..5.0, seed in any::<u64>()) {
        let data = gen_blobs(n, k, d, spread, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        data.write_csv(&p).unwrap();
        let back = load_csv(&p).unwrap();
        prop_assert_eq!(back.digest(), data.digest());
        prop_assert!(back.features().data().iter().zip(data.features().data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn blobs_are_deterministic(seed in any::<u64>(), k in 2usize..6) {
        let a = gen_blobs(10, k, 3, 1.0, seed).unwrap();
        let b = gen_blobs(10, k, 3, 1.0, seed).unwrap();
        prop_assert_eq!(a.digest(), b.digest());
        let (tx, _) = a.train();
        let (ex, _) = a.eval();
        prop_assert_eq!(tx.rows() + ex.rows(), a.len());
        prop_assert_eq!(ex.rows(), a.len() / 5);
    }

    #[test]
    fn epoch_order_is_a_permutation(seed in any::<u64>(), epoch in any::<u64>(), n in 1usize..200) {
        let mut p = epoch_order(seed, epoch, n);
        p.sort_unstable();
        prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
    }
}
