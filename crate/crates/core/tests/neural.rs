mod common;

use mirrornet::dataset::{self, Dataset, GenerateConfig};
use mirrornet::env::WorldConfig;
use mirrornet::neural::sweep::{self, SweepManifest};
use mirrornet::neural::train::{mean_loss, TrainManifest, MANIFEST_FILE};
use mirrornet::neural::{train, Hyperparams, Network, Timestamp};
use mirrornet::oracle::OracleConfig;

fn data(rows: usize, seed: u64) -> (Dataset, Dataset) {
    let all = dataset::generate(
        rows,
        WorldConfig::default(),
        &OracleConfig::default(),
        &GenerateConfig::default(),
        seed,
    )
    .unwrap();
    dataset::holdout(&all, 0.2, seed + 1).unwrap()
}

fn hp(seed: u64) -> Hyperparams {
    Hyperparams {
        learning_rate: 1e-3,
        neurons_per_layer: 8,
        max_epochs: 3,
        seed,
        ..Hyperparams::default()
    }
}

#[test]
fn gradients_match_central_differences() {
    for (dims, seed) in [
        (vec![100, 10, 4], 1),
        (vec![100, 8, 6, 4], 2),
        (vec![30, 7, 5, 6, 4], 3),
    ] {
        let r = common::gradient_check(&dims, seed, 1e-5);
        assert!(r.max_rel_err < 1e-4, "{:?}: {}", r.dims, r.max_rel_err);
    }
}

#[test]
fn naive_loss_agrees_with_forward() {
    let net = Network::he_uniform(
        &[100, 12, 4],
        &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4),
    )
    .unwrap();
    let input: Vec<f64> = (0..100).map(|i| (i % 3) as f64 * 0.5).collect();
    let p = net.forward(&input, None).unwrap().probabilities;
    for (label, prob) in p.iter().enumerate() {
        let expected = common::naive_loss(net.layers(), &input, label);
        assert!((-prob.ln() - expected).abs() < 1e-12);
    }
}

#[test]
fn training_is_bit_reproducible() {
    let (tr, va) = data(1500, 3);
    let stamp = Timestamp::epoch();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let hp = Hyperparams {
        dropout_rate: 0.2,
        ..hp(9)
    };
    let ra = train(&tr, &va, &hp, a.path(), &stamp).unwrap();
    let rb = train(&tr, &va, &hp, b.path(), &stamp).unwrap();
    assert_eq!(ra.epochs.len(), 3);
    for (x, y) in ra.epochs.iter().zip(&rb.epochs) {
        assert_eq!(x.path.file_name(), y.path.file_name());
        assert_eq!(
            std::fs::read(&x.path).unwrap(),
            std::fs::read(&y.path).unwrap()
        );
    }
    assert_eq!(
        std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
        std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
    );
}

#[test]
fn training_lowers_validation_loss_and_records_best() {
    let (tr, va) = data(2000, 5);
    let dir = tempfile::tempdir().unwrap();
    let hp = Hyperparams {
        max_epochs: 4,
        ..hp(1)
    };
    let start = mean_loss(
        &mirrornet::neural::train::initial_network(&hp).unwrap(),
        &va,
    );
    let run = train(&tr, &va, &hp, dir.path(), &Timestamp::epoch()).unwrap();
    assert!(
        run.best_val_loss < start,
        "{} !< {start}",
        run.best_val_loss
    );
    let best = run
        .epochs
        .iter()
        .map(|e| e.checkpoint.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(run.best_val_loss, best);
    assert_eq!(run.best().checkpoint.epoch, run.best_epoch);
    let manifest: TrainManifest = dataset::read_json(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.epochs.len(), run.epochs.len());
    assert_eq!(manifest.epochs.iter().filter(|e| e.best).count(), 1);
    for e in &manifest.epochs {
        assert!(dir.path().join(&e.checkpoint).exists());
    }
}

#[test]
fn sweep_writes_a_readable_manifest() {
    let (tr, va) = data(1200, 8);
    let dir = tempfile::tempdir().unwrap();
    let grid = vec![
        hp(1),
        Hyperparams {
            hidden_layers: 2,
            ..hp(2)
        },
    ];
    let m = sweep::sweep(&grid, &tr, &va, dir.path(), &Timestamp::epoch()).unwrap();
    assert_eq!(m.rows.len(), 2);
    assert_eq!(m.successful().count(), 2);
    let back = SweepManifest::read_csv(&dir.path().join(sweep::MANIFEST_FILE)).unwrap();
    assert_eq!(back, m);
    for row in &m.rows {
        assert_eq!(row.checkpoint_paths().len(), row.epochs_run);
        for p in row.checkpoint_paths() {
            assert!(dir.path().join(p).exists(), "{p}");
        }
    }
}

#[test]
fn invalid_hyperparameters_fail_before_training() {
    let (tr, va) = data(300, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = Hyperparams {
        batch_size: 64,
        ..hp(1)
    };
    assert!(train(&tr, &va, &bad, dir.path(), &Timestamp::epoch()).is_err());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}
