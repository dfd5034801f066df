use dsvd_core::analysis::{compression_report, fidelity_report};
use dsvd_core::delta::{cumulative_energy, factorize_layer, fingerprint, select_rank, Factorization};
use dsvd_core::synthetic::{is_matrix_like, mixed_layers, perturb_dense, perturb_low_rank, random_checkpoint};
use dsvd_core::{
    compress_checkpoint, load_archive, matmul, reconstruct_checkpoint, save_archive, svd, Checkpoint, CompressOptions,
    DeltaArchive, EnergyMode, LayerPayload, Matrix, MismatchPolicy, TensorRecord,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn low_rank_matrix(rng: &mut impl Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    matmul(&random_matrix(rng, rows, rank), &random_matrix(rng, rank, cols)).unwrap()
}

fn square_error(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn matrix_layers(count: usize, rows: usize, cols: usize) -> Vec<(String, Vec<usize>)> {
    (0..count).map(|i| (format!("layer{i:02}.weight"), vec![rows, cols])).collect()
}

#[test]
fn low_rank_synthetic_recovers_exact_rank() {
    let base = random_checkpoint(&matrix_layers(10, 64, 48), 1).unwrap();
    let ft = perturb_low_rank(&base, |_| true, 2, 0.05, 2).unwrap();
    let archive = compress_checkpoint(&base, &ft, &CompressOptions::new(0.999)).unwrap();
    for layer in archive.layers.values() {
        match &layer.payload {
            LayerPayload::Factors { rank, .. } => assert_eq!(*rank, 2, "{}", layer.name),
            other => panic!("{}: {other:?}", layer.name),
        }
    }
    let rebuilt = reconstruct_checkpoint(&base, &archive, false).unwrap();
    assert!(fidelity_report(&rebuilt, &ft).unwrap().max_rel_error <= 1e-5);
}

#[test]
fn full_energy_is_lossless_to_storage_precision() {
    let base = random_checkpoint(&mixed_layers(), 3).unwrap();
    let ft = perturb_dense(&base, |_| true, 0.1, 4).unwrap();
    let archive = compress_checkpoint(&base, &ft, &CompressOptions::new(1.0)).unwrap();
    let rebuilt = reconstruct_checkpoint(&base, &archive, false).unwrap();
    let report = fidelity_report(&rebuilt, &ft).unwrap();
    assert!(report.max_rel_error <= 1e-6, "{report:?}");
}

#[test]
fn save_load_round_trip_and_file_size() {
    let base = random_checkpoint(&matrix_layers(6, 256, 200), 5).unwrap();
    let ft = perturb_low_rank(&base, |_| true, 8, 0.1, 6).unwrap();
    let archive = compress_checkpoint(&base, &ft, &CompressOptions::new(0.9)).unwrap();
    assert!(archive.layers.values().all(|l| matches!(l.payload, LayerPayload::Factors { .. })));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("delta.dsvd");
    save_archive(&archive, &path).unwrap();
    let loaded = load_archive(&path).unwrap();
    assert_eq!(loaded.tau, archive.tau);
    assert_eq!(loaded.base_fingerprint, archive.base_fingerprint);
    assert_eq!(loaded.stats, archive.stats);
    for (name, layer) in &archive.layers {
        let original = layer.delta_values().unwrap().unwrap();
        let back = loaded.layers[name].delta_values().unwrap().unwrap();
        let scale = original.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in original.iter().zip(&back) {
            assert!((x - y).abs() <= 1e-6 * scale.max(1.0));
        }
    }

    let report = compression_report(&archive);
    let size = std::fs::metadata(&path).unwrap().len() as f64;
    let expected = report.estimated_file_bytes as f64;
    assert!((size - expected).abs() <= 0.05 * expected, "file {size} vs estimate {expected}");
}

#[test]
fn fingerprint_guards_reconstruction() {
    let base = random_checkpoint(&matrix_layers(2, 16, 12), 7).unwrap();
    let ft = perturb_low_rank(&base, |_| true, 1, 0.1, 8).unwrap();
    let archive = compress_checkpoint(&base, &ft, &CompressOptions::new(0.9)).unwrap();
    let other = random_checkpoint(&matrix_layers(2, 16, 12), 9).unwrap();
    assert_eq!(reconstruct_checkpoint(&other, &archive, false).unwrap_err().code(), "FingerprintMismatch");
    assert!(reconstruct_checkpoint(&other, &archive, true).is_ok());

    let fp = fingerprint(&base).unwrap();
    assert_eq!(fp.len(), 64);
    assert!(fp.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    let mut with_meta = base.clone();
    with_meta.metadata.insert("k".into(), "v".into());
    assert_eq!(fingerprint(&with_meta).unwrap(), fp);
}

#[test]
fn layer_set_and_shape_checks() {
    let base = random_checkpoint(&matrix_layers(3, 8, 6), 1).unwrap();
    let mut ft = perturb_dense(&base, |_| true, 0.1, 2).unwrap();
    ft.insert(TensorRecord::from_f32("extra.bias", vec![4], &[1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    ft.tensors.remove("layer00.weight");

    let strict = compress_checkpoint(&base, &ft, &CompressOptions::new(0.5)).unwrap_err();
    assert_eq!(strict.code(), "LayerSetMismatch");

    let options = CompressOptions {
        policy: MismatchPolicy::Skip,
        ..CompressOptions::new(0.5)
    };
    let archive = compress_checkpoint(&base, &ft, &options).unwrap();
    assert_eq!(
        archive.mismatched.iter().cloned().collect::<Vec<_>>(),
        ["extra.bias", "layer00.weight"]
    );
    let rebuilt = reconstruct_checkpoint(&base, &archive, false).unwrap();
    assert_eq!(rebuilt.get("extra.bias"), ft.get("extra.bias"));
    assert_eq!(rebuilt.get("layer00.weight"), base.get("layer00.weight"));

    let mut reshaped = base.clone();
    reshaped.tensors.insert(
        "layer01.weight".into(),
        TensorRecord::from_f32("layer01.weight", vec![6, 8], &[0.0; 48]).unwrap(),
    );
    assert_eq!(
        compress_checkpoint(&base, &reshaped, &CompressOptions::new(0.5)).unwrap_err().code(),
        "ShapeMismatch"
    );
    for tau in [0.0, -0.1, 1.5, f64::NAN] {
        assert_eq!(compress_checkpoint(&base, &base, &CompressOptions::new(tau)).unwrap_err().code(), "InvalidTau");
    }
}

#[test]
fn identical_checkpoints_compress_to_nothing() {
    let base = random_checkpoint(&mixed_layers(), 2).unwrap();
    let archive = compress_checkpoint(&base, &base, &CompressOptions::new(0.5)).unwrap();
    assert!(archive.layers.values().all(|l| l.payload == LayerPayload::Unchanged));
    assert_eq!(archive.stats.stored_param_count, 0);
    assert_eq!(archive.stats.ratio(), None);
    assert_eq!(reconstruct_checkpoint(&base, &archive, false).unwrap(), base);
}

#[test]
fn layer_order_does_not_matter() {
    let base = random_checkpoint(&mixed_layers(), 10).unwrap();
    let ft = perturb_low_rank(&base, is_matrix_like, 3, 0.2, 11).unwrap();
    let options = CompressOptions::new(0.8);
    let whole = compress_checkpoint(&base, &ft, &options).unwrap();
    // Each layer compressed on its own, visited in reverse order.
    for name in base.tensors.keys().rev() {
        let single = |c: &Checkpoint| {
            let mut out = Checkpoint::new();
            out.insert(c.get(name).unwrap().clone()).unwrap();
            out
        };
        let alone: DeltaArchive = compress_checkpoint(&single(&base), &single(&ft), &options).unwrap();
        assert_eq!(alone.layers[name], whole.layers[name], "{name}");
    }
}

#[test]
fn energy_mode_changes_selected_rank() {
    let m = Matrix::from_rows(&[[4.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]);
    let sigma = svd(&m).unwrap().sigma;
    let linear = cumulative_energy(&sigma).unwrap();
    // Linear: 4/7 = 0.571; squared: 16/21 = 0.762.
    assert_eq!(select_rank(&linear, 0.6).unwrap(), 2);
    let squared = dsvd_core::delta::cumulative_energy_with(&sigma, EnergyMode::Squared).unwrap();
    assert_eq!(select_rank(&squared, 0.6).unwrap(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn truncation_error_is_the_discarded_tail(rows in 4usize..24, cols in 4usize..24, tau in 0.05f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = 1 + rows.min(cols) / 4;
        let delta = low_rank_matrix(&mut rng, rows, cols, rank);
        let sigma = svd(&delta).unwrap().sigma;
        if let Factorization::Factors { a, b, rank: t } = factorize_layer(&delta, tau, EnergyMode::Linear).unwrap() {
            let tail: f64 = sigma[t..].iter().map(|s| s * s).sum();
            let total: f64 = sigma.iter().map(|s| s * s).sum();
            let err = square_error(&matmul(&a, &b).unwrap(), &delta);
            prop_assert!((err - tail).abs() <= 1e-9 * total, "err {err} tail {tail}");
        }
    }

    #[test]
    fn full_energy_is_lossless_before_narrowing(rows in 2usize..24, cols in 2usize..24, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = 1 + rows.min(cols) / 3;
        let delta = low_rank_matrix(&mut rng, rows, cols, rank);
        let rebuilt = match factorize_layer(&delta, 1.0, EnergyMode::Linear).unwrap() {
            Factorization::Factors { a, b, .. } => matmul(&a, &b).unwrap(),
            Factorization::Dense(m) => m,
            Factorization::Unchanged => panic!("nonzero delta reported unchanged"),
        };
        let norm: f64 = delta.as_slice().iter().map(|v| v * v).sum();
        prop_assert!(square_error(&rebuilt, &delta).sqrt() <= 1e-10 * norm.sqrt());
    }

    #[test]
    fn rank_grows_with_tau(rows in 2usize..20, cols in 2usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = svd(&random_matrix(&mut rng, rows, cols)).unwrap().sigma;
        let profile = cumulative_energy(&sigma).unwrap();
        let mut last = 0;
        for tau in [0.01, 0.06, 0.2, 0.35, 0.5, 0.8, 0.95, 1.0] {
            let t = select_rank(&profile, tau).unwrap();
            prop_assert!(t >= last && t >= 1 && t <= sigma.len());
            last = t;
        }
        prop_assert_eq!(last, sigma.iter().filter(|&&s| s > 0.0).count());
    }

    #[test]
    fn stored_never_exceeds_dense(tau in 0.05f64..=1.0, seed in 0u64..1000) {
        let base = random_checkpoint(&mixed_layers(), seed).unwrap();
        let ft = perturb_low_rank(&base, |_| true, 5, 0.1, seed + 1).unwrap();
        let archive = compress_checkpoint(&base, &ft, &CompressOptions::new(tau)).unwrap();
        prop_assert!(archive.stats.stored_param_count <= archive.stats.dense_param_count);
        for layer in archive.layers.values() {
            prop_assert!(layer.stored_params() <= layer.dense_params());
        }
    }
}
