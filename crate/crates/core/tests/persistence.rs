use std::io::Write;

use realcil::analytic::{AnalyticClassifier, BufferLayer};
use realcil::error::{Error, FormatErrorKind};
use realcil::io::checkpoint::{decode_checkpoint, encode_checkpoint, ModelBundle, CHECKPOINT_MAGIC};
use realcil::io::dataset::{decode_dataset, encode_dataset};
use realcil::io::{load_checkpoint, load_csv, load_dataset, save_checkpoint, save_dataset, RunConfig};
use realcil::numkit::{gaussian_matrix, DenseMatrix};
use realcil::synth::{generate, SynthConfig};
use realcil::{MlpBackbone, RngSeed};

fn small_suite() -> realcil::synth::SyntheticSuite {
    generate(&SynthConfig {
        classes: 6,
        dim: 5,
        train_per_class: 8,
        test_per_class: 3,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn dataset_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let suite = small_suite();
    let path = dir.path().join("train.rlfv");
    save_dataset(&path, &suite.train).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, suite.train);
    for (a, b) in back.features.data().iter().zip(suite.train.features.data()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(std::fs::read(&path).unwrap(), encode_dataset(&back).unwrap());
    assert_eq!(
        std::fs::metadata(&path).unwrap().len(),
        18 + 4 * 48 * 5 + 4 * 48
    );
}

#[test]
fn csv_import_matches_binary() {
    let dir = tempfile::tempdir().unwrap();
    let suite = small_suite();
    let csv_path = dir.path().join("train.csv");
    let mut f = std::fs::File::create(&csv_path).unwrap();
    writeln!(f, "f0,f1,f2,f3,f4,label").unwrap();
    for i in 0..suite.train.len() {
        let row: Vec<String> = suite.train.features.row(i).iter().map(|v| (*v as f32).to_string()).collect();
        writeln!(f, "{},{}", row.join(","), suite.train.labels[i]).unwrap();
    }
    drop(f);
    let from_csv = load_csv(&csv_path, Some(6)).unwrap();
    let bin = dir.path().join("train.rlfv");
    save_dataset(&bin, &suite.train).unwrap();
    assert_eq!(from_csv, load_dataset(&bin).unwrap());
}

#[test]
fn csv_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "a,b,label\n1,2,0\n1,x,1\n").unwrap();
    match load_csv(&p, None).unwrap_err() {
        Error::Data { row, .. } => assert_eq!(row, 1),
        e => panic!("{e}"),
    }
}

#[test]
fn every_truncation_reports_the_file_length() {
    let bytes = encode_dataset(&small_suite().test).unwrap();
    for cut in [6, 17, 18, 19, 100, bytes.len() - 1] {
        match decode_dataset(&bytes[..cut]).unwrap_err() {
            Error::Format { kind, offset } => {
                assert_eq!(kind, FormatErrorKind::Truncated, "cut {cut}");
                assert_eq!(offset, cut as u64);
            }
            e => panic!("cut {cut}: {e}"),
        }
    }
    assert_eq!(decode_dataset(&bytes[..3]).unwrap_err().kind(), "bad_magic");
}

fn bundle() -> ModelBundle {
    let mut backbone = MlpBackbone::new(&[5, 7, 4], RngSeed(3)).unwrap();
    backbone.freeze();
    let buffer = BufferLayer::new(4, 12, 0.5, RngSeed(4)).unwrap();
    let x = gaussian_matrix(20, 12, 1.0, RngSeed(5)).unwrap();
    let y = DenseMatrix::one_hot(&(0..20).map(|i| i % 3).collect::<Vec<_>>(), 3).unwrap();
    ModelBundle {
        backbone: Some(backbone),
        buffer: Some(buffer),
        classifier: Some(AnalyticClassifier::ainit(&x, &y, 0.1).unwrap()),
    }
}

#[test]
fn any_flipped_byte_after_the_magic_is_detected() {
    let bytes = encode_checkpoint(&bundle());
    for i in CHECKPOINT_MAGIC.len()..bytes.len() {
        let mut bad = bytes.clone();
        bad[i] ^= 0x20;
        let err = decode_checkpoint(&bad).unwrap_err();
        assert_eq!(err.kind(), "checksum", "byte {i}");
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rlck");
    let b = bundle();
    save_checkpoint(&path, &b).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, b);
    assert!(back.backbone.unwrap().is_frozen());
}

#[test]
fn resumed_run_matches_unbroken_run() {
    // Three incremental phases; checkpoint after the first, resume from disk.
    let d = 24;
    let phases: Vec<(DenseMatrix, Vec<usize>)> = (0..4)
        .map(|p| {
            let x = gaussian_matrix(40, d, 1.0, RngSeed(10 + p)).unwrap();
            let labels = (0..40).map(|i| 2 * p as usize + i % 2).collect();
            (x, labels)
        })
        .collect();
    let step = |clf: AnalyticClassifier, p: usize| {
        let (x, l) = &phases[p];
        clf.expand_classes(2)
            .phase_update(x, &DenseMatrix::one_hot(l, 2 * (p + 1)).unwrap())
            .unwrap()
    };
    let base = AnalyticClassifier::ainit(&phases[0].0, &DenseMatrix::one_hot(&phases[0].1, 2).unwrap(), 0.01).unwrap();
    let unbroken = step(step(step(base.clone(), 1), 2), 3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.rlck");
    save_checkpoint(
        &path,
        &ModelBundle {
            classifier: Some(step(base, 1)),
            ..ModelBundle::default()
        },
    )
    .unwrap();
    let resumed = load_checkpoint(&path).unwrap().classifier.unwrap();
    assert_eq!(resumed.phase_index(), 1);
    let resumed = step(step(resumed, 2), 3);
    assert!(resumed.weight().max_abs_diff(unbroken.weight()) <= 1e-12);
    assert!(resumed.memory().max_abs_diff(unbroken.memory()) <= 1e-12);
    assert_eq!(resumed, unbroken);
}

#[test]
fn config_file_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    let mut cfg = RunConfig::default();
    cfg.set("red.lambda", "0.7", 0).unwrap();
    cfg.set("seed.buffer", "99", 0).unwrap();
    std::fs::write(&path, cfg.to_text()).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);

    std::fs::write(&path, "red.lambda = 0.5\nred.lamda = 0.5\n").unwrap();
    match RunConfig::load(&path).unwrap_err() {
        Error::Config { line, msg } => {
            assert_eq!(line, 2);
            assert!(msg.contains("red.lamda"));
        }
        e => panic!("{e}"),
    }
}
