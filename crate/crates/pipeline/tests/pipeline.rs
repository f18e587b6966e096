use std::fs;
use std::path::Path;

use segbench::calibrate::{CURVE_FILE, THRESHOLD_FILE};
use segbench::evaluate::split_label;
use segbench::report::{render_text, DETERMINISTIC_FILES};
use segbench::{
    calibrate, evaluate, make_dataset, resolve_methods, thread_pool, write_calibration, write_report, Calibration,
    CaseLoader, DatasetSpec, Manifest, Split, ThresholdArg,
};
use segbench_core::phantom::PhantomSampler;
use segbench_core::segmentation::PredictorHandle;

/// Small noiseless phantoms: two intensity values, sharp boundary.
fn two_valued(n_val: usize, n_test: usize, seed: u64) -> DatasetSpec {
    let mut spec = DatasetSpec::new(1, n_val, n_test, seed);
    spec.sampler = PhantomSampler {
        extent_range_mm: (32.0, 36.0),
        diameter_range_mm: (10.1, 14.0),
        speckle_sigma: 0.0,
        boundary_blur_sigma: 0.0,
        ..PhantomSampler::default()
    };
    spec
}

fn files_equal(a: &Path, b: &Path) {
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{} vs {}", a.display(), b.display());
}

#[test]
fn dataset_split_sizes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec = two_valued(2, 3, 11);
    let m = make_dataset(dir.path().join("a"), &spec).unwrap();
    assert_eq!(m.cases.len(), 1 + 2 + 3);
    assert_eq!(m.count(Split::Train), 1);
    assert_eq!(m.count(Split::Validation), 2);
    assert_eq!(m.count(Split::TestRetro), 3);
    assert_eq!(Split::ALL.iter().map(|s| m.count(*s)).sum::<usize>(), m.cases.len());

    make_dataset(dir.path().join("b"), &spec).unwrap();
    files_equal(&dir.path().join("a/manifest.json"), &dir.path().join("b/manifest.json"));
    for c in &m.cases {
        for f in ["volume.nrrd", "gt.nrrd", "phantom.json"] {
            let rel = Path::new("cases").join(&c.case_id).join(f);
            files_equal(&dir.path().join("a").join(&rel), &dir.path().join("b").join(&rel));
        }
    }

    let reloaded = Manifest::load(dir.path().join("a/manifest.json")).unwrap();
    assert_eq!(reloaded.cases, m.cases);
    for c in &reloaded.cases {
        let v = CaseLoader::new().volume(&reloaded, c).unwrap();
        assert!(c.tumor_box.intersection(&v.grid().extent()).is_some());
    }
}

#[test]
fn single_test_case_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = two_valued(0, 1, 3);
    spec.n_train = 0;
    let m = make_dataset(dir.path(), &spec).unwrap();
    assert_eq!(m.cases.len(), 1);
    assert_eq!(m.cases[0].split, Split::TestRetro);
}

#[test]
fn calibration_separates_two_valued_phantoms_and_reads_only_validation() {
    let dir = tempfile::tempdir().unwrap();
    let m = make_dataset(dir.path().join("ds"), &two_valued(2, 2, 5)).unwrap();
    let h: PredictorHandle = "threshold_model".parse().unwrap();
    let loader = CaseLoader::new();
    let pool = thread_pool(2).unwrap();
    let (cal, curve) = calibrate(&m, &h, &loader, &pool).unwrap();
    assert_eq!(cal.f1, 1.0);
    assert_eq!(cal.auc_roc, 1.0);
    assert_eq!(cal.n_cases, 2);

    let validation: Vec<_> = m.split(Split::Validation).map(|c| c.case_id.as_str()).collect();
    let accessed = loader.accessed();
    assert_eq!(accessed.len(), 2 * validation.len());
    for p in &accessed {
        assert!(validation.iter().any(|id| p.to_string_lossy().contains(id)), "{}", p.display());
    }

    let out = dir.path().join("cal");
    write_calibration(&out, &cal, &curve).unwrap();
    let first = fs::read(out.join(THRESHOLD_FILE)).unwrap();
    let (cal2, curve2) = calibrate(&m, &h, &CaseLoader::new(), &pool).unwrap();
    write_calibration(&out, &cal2, &curve2).unwrap();
    assert_eq!(fs::read(out.join(THRESHOLD_FILE)).unwrap(), first);
    assert_eq!(Calibration::load(out.join(THRESHOLD_FILE)).unwrap(), cal);
}

#[test]
fn single_perfect_validation_case_has_unit_roc_auc() {
    let dir = tempfile::tempdir().unwrap();
    let m = make_dataset(dir.path().join("ds"), &two_valued(1, 0, 8)).unwrap();
    let h: PredictorHandle = "threshold_model:spacing=1".parse().unwrap();
    let (cal, curve) = calibrate(&m, &h, &CaseLoader::new(), &thread_pool(1).unwrap()).unwrap();
    write_calibration(&dir.path().join("cal"), &cal, &curve).unwrap();
    let summary = fs::read_to_string(dir.path().join("cal/calibration_summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[6], "1");
    let csv = fs::read_to_string(dir.path().join("cal").join(CURVE_FILE)).unwrap();
    assert!(csv.starts_with("threshold,precision,recall,fpr,tpr,f1\n"));
    assert!(csv.lines().skip(1).any(|l| l.ends_with(",1")));
}

#[test]
fn oracle_and_null_predictors() {
    let dir = tempfile::tempdir().unwrap();
    let m = make_dataset(dir.path().join("ds"), &two_valued(0, 3, 21)).unwrap();
    let methods = resolve_methods(
        &[
            "oracle=threshold_model:spacing=1;tau=0.5".to_owned(),
            format!("null=external:cmd={} predict-stub zeros {{input}} {{output}}", env!("CARGO_BIN_EXE_segbench")),
        ],
        None,
    )
    .unwrap();
    let report = evaluate(&m, Split::TestRetro, &methods, &CaseLoader::new(), &thread_pool(1).unwrap(), 0.05).unwrap();
    assert_eq!(report.n_cases, 3);
    assert_eq!(report.n_comparisons, 1);
    assert_eq!(report.cases.len(), 6);
    for c in report.cases_of("oracle") {
        assert_eq!((c.dice, c.rvd, c.hd95_mm, c.detected), (1.0, 0.0, Some(0.0), true), "{c:?}");
    }
    for c in report.cases_of("null") {
        assert_eq!((c.dice, c.rvd, c.hd95_mm, c.detected), (0.0, 1.0, None, false), "{c:?}");
        assert!(c.error.is_none());
    }
    assert_eq!(report.n_failures(), 0);
    assert_eq!(report.method("null").unwrap().sensitivity, 0.0);
    let text = render_text(&report);
    assert!(text.contains("25%") && text.contains("Med.") && text.contains("75%"));
    assert_eq!(report.timing.len(), 6);
}

#[test]
fn failures_are_scored_as_misses() {
    let dir = tempfile::tempdir().unwrap();
    let m = make_dataset(dir.path().join("ds"), &two_valued(0, 2, 4)).unwrap();
    let bin = env!("CARGO_BIN_EXE_segbench");
    let methods = resolve_methods(
        &[
            "region_growing".to_owned(),
            format!("broken=external:cmd={bin} predict-stub fail {{input}} {{output}}"),
            format!("wrong=external:cmd={bin} predict-stub wrong-grid {{input}} {{output}}"),
        ],
        None,
    )
    .unwrap();
    let report = evaluate(&m, Split::TestRetro, &methods, &CaseLoader::new(), &thread_pool(1).unwrap(), 0.05).unwrap();
    assert_eq!(report.n_failures(), 4);
    assert_eq!(report.n_comparisons, 3);
    for label in ["broken", "wrong"] {
        for c in report.cases_of(label) {
            assert_eq!((c.dice, c.rvd, c.detected), (0.0, 1.0, false));
            assert!(c.error.is_some());
        }
    }
    assert!(report.cases_of("wrong").all(|c| c.error.as_deref().unwrap().contains("grid mismatch")));
    assert!(render_text(&report).contains("Failed cases"));
}

#[test]
fn reports_are_deterministic_and_rerenderable() {
    let dir = tempfile::tempdir().unwrap();
    let m = make_dataset(dir.path().join("ds"), &two_valued(0, 3, 9)).unwrap();
    let methods = resolve_methods(&["threshold_model".into(), "region_growing".into()], Some(&ThresholdArg::Value(0.4)))
        .unwrap();
    assert_eq!(methods[0].tau, 0.4);
    assert_eq!(methods[0].tau_source, "cli");
    for (run, workers) in [("a", 1), ("b", 3)] {
        let r = evaluate(&m, Split::TestRetro, &methods, &CaseLoader::new(), &thread_pool(workers).unwrap(), 0.05)
            .unwrap();
        write_report(&dir.path().join(run), &r).unwrap();
    }
    for f in DETERMINISTIC_FILES {
        files_equal(&dir.path().join("a").join(f), &dir.path().join("b").join(f));
    }
    let back = segbench::report::read_report(&dir.path().join("a/report.json")).unwrap();
    write_report(&dir.path().join("c"), &back).unwrap();
    for f in DETERMINISTIC_FILES {
        files_equal(&dir.path().join("a").join(f), &dir.path().join("c").join(f));
    }
}

#[test]
fn threshold_resolution_order() {
    let cal = Calibration {
        predictor: "threshold_model:polarity=bright".into(),
        threshold: 0.3,
        f1: 1.0,
        precision: 1.0,
        recall: 1.0,
        auc_pr: 1.0,
        auc_roc: 1.0,
        n_cases: 1,
        n_voxels: 10,
        case_ids: vec!["a".into()],
    };
    let arg = ThresholdArg::Calibrated(cal);
    let ms = resolve_methods(
        &[
            "threshold_model:polarity=bright".into(),
            "threshold_model:polarity=bright;tau=0.7".into(),
            "threshold_model".into(),
            "region_growing".into(),
        ],
        Some(&arg),
    )
    .unwrap();
    let got: Vec<(&str, f64, &str)> = ms.iter().map(|m| (m.label.as_str(), m.tau, m.tau_source)).collect();
    assert_eq!(
        got,
        vec![
            ("threshold_model", 0.3, "calibration"),
            ("threshold_model#2", 0.7, "spec"),
            ("threshold_model#3", 0.5, "default"),
            ("region_growing", 0.5, "binary"),
        ]
    );
    assert!(resolve_methods(&["threshold_model".into()], Some(&ThresholdArg::Value(1.5))).is_err());
    assert!(resolve_methods(&[], None).is_err());
}

#[test]
fn predictor_labels() {
    assert_eq!(split_label("threshold_model"), (None, "threshold_model"));
    assert_eq!(split_label("region_growing:tolerance=0.3"), (None, "region_growing:tolerance=0.3"));
    assert_eq!(split_label("null=external:cmd=x {input} {output}"), (Some("null"), "external:cmd=x {input} {output}"));
}
