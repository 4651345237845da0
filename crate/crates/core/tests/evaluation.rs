mod common;

use common::{constant_net, one_hot_dataset, perfect_net};
use mirrornet::dataset::Dataset;
use mirrornet::evalreport::{self, evaluate, CmniEntry, FlagThresholds, MirrorFlag, ReportError};
use mirrornet::neural::sweep::{RunStatus, SweepManifest, SweepRow};
use mirrornet::neural::Network;

fn reconciles(r: &evalreport::EvalResult, data: &Dataset) {
    let hist = data.histogram();
    for (a, &count) in hist.iter().enumerate() {
        let column: u64 = (0..4).map(|p| r.confusion[p][a]).sum();
        assert_eq!(column, count as u64);
    }
    let rows: u64 = r.confusion.iter().flatten().sum();
    assert_eq!(rows, r.total);
    assert_eq!(r.total, data.len() as u64);
}

#[test]
fn perfect_predictor() {
    let data = one_hot_dataset([40, 40, 10, 10]);
    let r = evaluate(&perfect_net(), &data).unwrap();
    assert_eq!(r.accuracy, 1.0);
    for p in 0..4 {
        for a in 0..4 {
            if p != a {
                assert_eq!(r.confusion[p][a], 0);
            }
        }
    }
    reconciles(&r, &data);
}

#[test]
fn constant_hop_on_balanced_set() {
    let data = one_hot_dataset([40_000, 40_000, 10_000, 10_000]);
    let r = evaluate(&constant_net(0), &data).unwrap();
    assert_eq!(r.accuracy, 0.40);
    assert_eq!(r.confusion[0], [40_000, 40_000, 10_000, 10_000]);
    assert_eq!(r.precision[0], Some(0.4));
    assert_eq!(r.precision[1], None);
    assert_eq!(r.recall, [Some(1.0), Some(0.0), Some(0.0), Some(0.0)]);
    reconciles(&r, &data);
}

#[test]
fn ties_go_to_the_lowest_action() {
    let data = one_hot_dataset([4, 4, 1, 1]);
    let r = evaluate(&Network::zeros(&[100, 6, 4]).unwrap(), &data).unwrap();
    assert_eq!(r.confusion[0].iter().sum::<u64>(), 10);
    assert_eq!(r.accuracy, 0.4);
}

#[test]
fn bad_inputs() {
    assert!(matches!(
        evaluate(&perfect_net(), &Dataset::default()),
        Err(ReportError::EmptyTest)
    ));
    let wrong = Network::zeros(&[50, 4, 4]).unwrap();
    assert!(evaluate(&wrong, &one_hot_dataset([1, 1, 1, 1])).is_err());
}

fn row(config: &str, checkpoints: &[&str]) -> SweepRow {
    SweepRow {
        config: config.into(),
        status: RunStatus::Ok,
        learning_rate: 5e-5,
        hidden_layers: 2,
        neurons_per_layer: 11,
        batch_size: 25,
        dropout_rate: 0.0,
        seed: 1,
        epochs_run: checkpoints.len(),
        best_epoch: Some(1),
        best_val_loss: Some(0.057),
        best_checkpoint: checkpoints[0].into(),
        checkpoints: checkpoints.join(";"),
        error: String::new(),
    }
}

fn entry(checkpoint: &str, epoch: usize, val_loss: f64, cmni: f64) -> CmniEntry {
    CmniEntry {
        checkpoint: checkpoint.into(),
        epoch,
        val_loss,
        mne: cmni * 26.0,
        n_neurons: 26,
        cmni,
    }
}

#[test]
fn empty_manifest_gives_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let b = evalreport::report(
        &SweepManifest::default(),
        &[],
        &[],
        &FlagThresholds::default(),
        dir.path(),
    )
    .unwrap();
    assert!(b.checkpoints.is_empty() && b.trend.is_empty() && b.evals.is_empty());
    for f in [
        evalreport::CHECKPOINTS_FILE,
        evalreport::TREND_FILE,
        evalreport::EVAL_FILE,
    ] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().count(), 1, "{f}");
    }
    assert_eq!(
        std::fs::read_to_string(dir.path().join(evalreport::TREND_FILE)).unwrap(),
        "config,epoch,val_loss,cmni\n"
    );
}

#[test]
fn report_flags_and_trend() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = SweepManifest {
        rows: vec![
            row("config-00", &["config-00/a.json", "config-00/b.json"]),
            row("config-01", &["config-01/c.json"]),
        ],
    };
    let cmni = [
        entry("config-00/b.json", 2, 0.070, 0.003),
        entry("config-00/a.json", 1, 0.057, 0.012),
        entry("config-01/c.json", 1, 0.080, 0.0003),
    ];
    let evals = [(
        "config-00/a.json".to_string(),
        evaluate(&perfect_net(), &one_hot_dataset([2, 2, 1, 1])).unwrap(),
    )];
    let b = evalreport::report(
        &manifest,
        &cmni,
        &evals,
        &FlagThresholds::default(),
        dir.path(),
    )
    .unwrap();
    let flags: Vec<MirrorFlag> = b.checkpoints.iter().map(|r| r.flag).collect();
    assert_eq!(
        flags,
        [
            MirrorFlag::Positive,
            MirrorFlag::Neutral,
            MirrorFlag::Negative
        ]
    );
    assert_eq!(b.mirror_positive().count(), 1);
    assert_eq!(
        b.trend.iter().map(|t| t.epoch).collect::<Vec<_>>(),
        [1, 2, 1]
    );
    let csv = std::fs::read_to_string(dir.path().join(evalreport::CHECKPOINTS_FILE)).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",mirror-positive"));
    assert!(csv.lines().nth(3).unwrap().ends_with(",mirror-negative"));
    let summary = std::fs::read_to_string(dir.path().join(evalreport::SUMMARY_FILE)).unwrap();
    assert!(summary.contains("mirror-positive: 1"));
}

#[test]
fn report_rejects_unknown_and_duplicate_ids() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = SweepManifest {
        rows: vec![row("config-00", &["config-00/a.json"])],
    };
    let f = FlagThresholds::default();
    let unknown = [entry("config-09/z.json", 1, 0.1, 0.0)];
    assert!(matches!(
        evalreport::report(&manifest, &unknown, &[], &f, dir.path()),
        Err(ReportError::UnknownCheckpoint(_))
    ));
    let dup = [
        entry("config-00/a.json", 1, 0.1, 0.0),
        entry("config-00/a.json", 1, 0.1, 0.0),
    ];
    assert!(matches!(
        evalreport::report(&manifest, &dup, &[], &f, dir.path()),
        Err(ReportError::DuplicateCheckpoint(_))
    ));
    let e = evaluate(&perfect_net(), &one_hot_dataset([1, 1, 1, 1])).unwrap();
    let bad_eval = [("nope.json".to_string(), e)];
    assert!(evalreport::report(&manifest, &[], &bad_eval, &f, dir.path()).is_err());
}
