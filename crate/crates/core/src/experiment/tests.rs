use super::*;
use crate::simulator::{builtin_config, generate_dataset};

fn small_dataset(seed: u64) -> ExperimentData {
    let sim = generate_dataset(&builtin_config(1).unwrap(), 150, seed).unwrap();
    ExperimentData::from_simulated("dataset-1-small", &sim)
}

fn quick_config(reps: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("dataset-1-small", reps, seed);
    cfg.k_max = 6;
    cfg
}

fn strip_timings(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("_seconds"));
            map.values_mut().for_each(strip_timings);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

#[test]
fn model_names_parse() {
    assert_eq!("P3LS".parse::<ModelKind>().unwrap(), ModelKind::P3ls);
    assert_eq!(" cen".parse::<ModelKind>().unwrap(), ModelKind::Cen);
    assert!("central".parse::<ModelKind>().is_err());
}

#[test]
fn config_validation() {
    let data = small_dataset(1);
    let mut cfg = quick_config(0, 1);
    assert!(matches!(run_experiment(&cfg, &data), Err(ExperimentError::InvalidConfig(_))));
    cfg.repetitions = 1;
    cfg.k_max = 0;
    assert!(matches!(run_experiment(&cfg, &data), Err(ExperimentError::InvalidConfig(_))));
    assert!(ExperimentData::new("x", vec![], data.y.clone()).is_err());
    assert!(ExperimentData::new("x", vec![data.blocks[0].rows(0, 3).into_owned()], data.y.clone()).is_err());
}

#[test]
fn federated_model_matches_centralized_and_beats_local() {
    let data = small_dataset(2);
    let report = run_experiment(&quick_config(2, 5), &data).unwrap();
    for rep in &report.repetitions {
        let cen = &rep.results[&ModelKind::Cen];
        let fed = &rep.results[&ModelKind::P3ls];
        assert_eq!(cen.k, fed.k);
        assert!((cen.r2_test - fed.r2_test).abs() < 1e-8);
        let d = rep.distances.as_ref().unwrap();
        assert!(d.max() < 1e-12, "{d:?}");
        assert_eq!(rep.contributions.len(), 3);
        assert_eq!(rep.split, [90, 30, 30]);
        for r in rep.results.values() {
            assert!(r.fit_seconds >= 0.0 && r.inference_seconds >= 0.0);
        }
    }
    let fed = report.summary_for(ModelKind::P3ls).unwrap().mean_r2;
    let local = report.summary_for(ModelKind::Local).unwrap().mean_r2;
    assert!(fed > local, "p3ls {fed} vs local {local}");
    assert!(report.mean_distances.as_ref().unwrap().max() < 1e-12);
}

#[test]
fn data_assignment_follows_ownership() {
    let data = small_dataset(3);
    let report = run_experiment(&quick_config(1, 9), &data).unwrap();
    let reads = |model: ModelKind| report.access.iter().filter(move |a| a.model == model);
    assert!(reads(ModelKind::Local).all(|a| a.reader == "LC" && (a.block == "X3" || a.block == "Y")));
    assert!(reads(ModelKind::Local).any(|a| a.block == "X3"));
    for a in reads(ModelKind::P3ls) {
        match a.block.as_str() {
            "Y" => assert_eq!(a.reader, "LC"),
            x => assert_eq!(a.reader, format!("FC-{}", &x[1..])),
        }
    }
    assert_eq!(reads(ModelKind::P3ls).count(), 4);
}

#[test]
fn single_repetition_is_reproducible() {
    let data = small_dataset(4);
    let cfg = quick_config(1, 77);
    let a = run_experiment(&cfg, &data).unwrap();
    let b = run_experiment(&cfg, &data).unwrap();
    let mut ja = serde_json::to_value(&a).unwrap();
    let mut jb = serde_json::to_value(&b).unwrap();
    strip_timings(&mut ja);
    strip_timings(&mut jb);
    assert_eq!(ja, jb);
    let c = run_experiment(&quick_config(1, 78), &data).unwrap();
    assert_ne!(a.repetitions[0].seed, c.repetitions[0].seed);
}

#[test]
fn empty_model_list_gives_an_empty_but_valid_report() {
    let data = small_dataset(5);
    let mut cfg = quick_config(2, 1);
    cfg.models.clear();
    let report = run_experiment(&cfg, &data).unwrap();
    assert!(report.summary.is_empty());
    assert!(report.repetitions.iter().all(|r| r.results.is_empty()));
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&report, dir.path()).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths.json).unwrap()).unwrap();
    assert!(parsed.is_object());
    assert_eq!(load_report(&paths.json).unwrap(), report);
}

#[test]
fn report_files_round_trip() {
    let data = small_dataset(6);
    let mut cfg = quick_config(2, 3);
    cfg.models = vec![ModelKind::Local, ModelKind::Cen];
    let report = run_experiment(&cfg, &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&report, &dir.path().join("nested")).unwrap();
    assert_eq!(load_report(&paths.json).unwrap(), report);
    let rows: Vec<SummaryRow> =
        csv::Reader::from_path(&paths.csv).unwrap().deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].model, ModelKind::Local);
    assert_eq!(rows[1].repetitions, 2);
    assert_eq!(rows[1].mean_r2, report.summary_for(ModelKind::Cen).unwrap().mean_r2);
}

#[test]
fn missing_report_surfaces_the_path() {
    let err = load_report(std::path::Path::new("/nonexistent/report.json")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/report.json"));
}

#[test]
fn failed_repetition_carries_context() {
    let data = ExperimentData::new("tiny", vec![RealMatrix::zeros(8, 2)], RealMatrix::zeros(8, 1)).unwrap();
    assert!(matches!(run_experiment(&quick_config(1, 1), &data), Err(ExperimentError::TooFewRows { rows: 8, .. })));
    let data = ExperimentData::new(
        "flat",
        vec![RealMatrix::from_element(12, 2, 1.0)],
        RealMatrix::from_fn(12, 1, |i, _| i as f64),
    )
    .unwrap();
    match run_experiment(&quick_config(1, 1), &data) {
        Err(ExperimentError::Repetition { index: 0, stage, .. }) => assert_eq!(stage, "cen"),
        other => panic!("unexpected {other:?}"),
    }
}
