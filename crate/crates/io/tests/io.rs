mod common;

use std::fs;
use std::path::Path;

use common::{gaussian, write_csv};
use streamad::{build_detector, run_stream, DetectorSpec};
use streamad_io::dataset::{load_csv, load_dataset, load_labels};
use streamad_io::grid::{run_grid, score_path};
use streamad_io::report::Metric;
use streamad_io::scores::{read_scores, write_scores, ScoreRow};
use streamad_io::{IoError, RunManifest};

fn data_error(err: IoError) -> (Option<u64>, String) {
    match err {
        IoError::Data { line, reason, .. } => (line, reason),
        other => panic!("expected a data error, got {other}"),
    }
}

fn csv(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn rows(n: usize) -> String {
    (1..=n).map(|i| format!("{i},{}.5\n", i % 7)).collect()
}

#[test]
fn malformed_files_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = format!("timestamp,value\n{}", rows(30));
    body = body.replacen("5,5.5", "5,abc", 1);
    let (line, reason) = data_error(load_csv(csv(dir.path(), "a.csv", &body)).unwrap_err());
    assert_eq!(line, Some(6));
    assert!(reason.contains("abc"));

    let body = format!("timestamp,value\n{}", rows(30)).replacen("9,2.5", "9,NaN", 1);
    let (line, _) = data_error(load_csv(csv(dir.path(), "b.csv", &body)).unwrap_err());
    assert_eq!(line, Some(10));

    let body = format!("timestamp,value\n{}", rows(30)).replacen("12,5.5", "3,5.5", 1);
    let (line, reason) = data_error(load_csv(csv(dir.path(), "c.csv", &body)).unwrap_err());
    assert_eq!(line, Some(13));
    assert!(reason.contains("does not follow"));

    let (_, reason) = data_error(load_csv(csv(dir.path(), "d.csv", &format!("timestamp,value\n{}", rows(19)))).unwrap_err());
    assert!(reason.contains("at least 20"));

    let body = format!("timestamp,value\n{}2014-01-01 00:00:00,1\n", rows(25));
    let (line, reason) = data_error(load_csv(csv(dir.path(), "e.csv", &body)).unwrap_err());
    assert_eq!(line, Some(27));
    assert!(reason.contains("mixed"));

    assert!(matches!(load_csv(dir.path().join("missing.csv")), Err(IoError::Io { .. })));
}

#[test]
fn datetime_series_with_sidecar_labels() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("realTraffic");
    fs::create_dir(&sub).unwrap();
    let mut body = String::from("timestamp,value\n");
    for i in 0..40 {
        body.push_str(&format!("2015-09-01 {:02}:{:02}:00,{}\n", i / 12, (i % 12) * 5, i as f64 * 0.5));
    }
    let path = csv(&sub, "speed.csv", &body);
    let labels = csv(
        dir.path(),
        "labels.json",
        r#"{"realTraffic/speed.csv": ["2015-09-01 01:10:00", "2015-09-01 02:00:00.000000"]}"#,
    );
    let labels = load_labels(labels).unwrap();
    let d = load_dataset(&path, Some(&labels)).unwrap();
    assert_eq!(d.name, "realTraffic/speed");
    assert_eq!(d.truth.anomalies, vec![15, 25]);
    assert_eq!(d.points[14].timestamp, 15);
    assert_eq!(d.raw_timestamps[14].to_string(), "2015-09-01 01:10:00");

    let bad = csv(dir.path(), "bad.json", r#"{"realTraffic/speed.csv": ["2015-09-01 01:11:00"]}"#);
    let (_, reason) = data_error(load_dataset(&path, Some(&load_labels(bad).unwrap())).unwrap_err());
    assert!(reason.contains("does not match"));
}

#[test]
fn label_column_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_csv(dir.path(), "x", &gaussian(1, 50), &[10, 11, 40]);
    let d = load_csv(p).unwrap();
    assert_eq!(d.truth.anomalies, vec![10, 11, 40]);
    // width ⌊5/3⌋ = 1 keeps adjacent labels apart
    assert_eq!(d.windows().len(), 3);
}

#[test]
fn score_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let values = gaussian(2, 400);
    for spec in ["SW-NN", "ARES-FREQ"] {
        let config = spec.parse::<DetectorSpec>().unwrap().config();
        let mut d = build_detector::<f64>(&config, values.len()).unwrap();
        let points = values.iter().enumerate().map(|(i, &v)| streamad::StreamPoint::new(i as i64 + 1, v));
        let records = run_stream(&mut d, points).unwrap();
        let path = dir.path().join("nested").join(format!("{spec}.csv"));
        write_scores(&path, &records).unwrap();
        let back = read_scores(&path).unwrap();
        let expected: Vec<ScoreRow> = records.iter().map(|r| ScoreRow::from(r).quantized()).collect();
        assert_eq!(back, expected);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("timestamp,nonconformity,p_value,final_score,flagged\n"));
    }
    let bad = csv(dir.path(), "bad.csv", "timestamp,score\n1,0.5\n");
    assert!(read_scores(bad).is_err());
}

fn manifest(dir: &Path, parallelism: usize, out: &str) -> RunManifest {
    let text = format!(
        "datasets = [\"data\"]\noutput = \"{out}\"\nparallelism = {parallelism}\n\
         metrics = [\"roc_auc\", \"nab_standard\", \"nab_low_fp\", \"nab_low_fn\"]\n\
         [[groups]]\nname = \"split\"\ngroup1 = [\"one\"]\ngroup2 = [\"two\"]\n"
    );
    RunManifest::parse(&text, &dir.join("grid.toml")).unwrap()
}

#[test]
fn grid_writes_every_pair_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    let mut shifted = gaussian(4, 300);
    for v in &mut shifted[200..230] {
        *v += 5.0;
    }
    write_csv(&data, "one", &gaussian(3, 300), &[150]);
    write_csv(&data, "two", &shifted, &(201..=230).collect::<Vec<_>>());

    let a = run_grid(&manifest(dir.path(), 1, "out1")).unwrap();
    run_grid(&manifest(dir.path(), 4, "out2")).unwrap();
    assert!(!a.is_partial());
    assert_eq!(a.score_files.len(), 40);
    assert_eq!(a.report.runs.len(), 40);
    for spec in DetectorSpec::all() {
        for ds in ["one", "two"] {
            let p1 = score_path(&dir.path().join("out1"), ds, spec, 0);
            let p2 = score_path(&dir.path().join("out2"), ds, spec, 0);
            assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap(), "{}", p1.display());
        }
    }
    for f in ["report.json", "report.txt"] {
        assert_eq!(
            fs::read(dir.path().join("out1").join(f)).unwrap(),
            fs::read(dir.path().join("out2").join(f)).unwrap()
        );
    }

    // each dataset contributes at most one win per metric, none on ties
    for m in Metric::ALL {
        let wins: usize = a.report.wins[&m].values().sum();
        assert!(wins <= 2);
    }
    let delta = &a.report.deltas[0];
    assert_eq!(delta.deltas.len(), 20);
    assert_eq!(a.report.datasets.len(), 2);
    assert!(a.report.datasets[1].clusteredness.is_some());
}

#[test]
fn jobs_that_cannot_run_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    // 60 points: probation of 9 leaves no SAX word for FREQ
    write_csv(&data, "short", &gaussian(5, 60), &[40]);
    let text = "datasets = [\"data\"]\noutput = \"out\"\ndetectors = [\"SW-NN\", \"SW-FREQ\"]\n\
                [defaults]\nrepresentation = { window = 3 }\nmeasure = { k = 2 }\n\
                [overrides.\"SW-FREQ\"]\nrepresentation = { kind = \"sax\", window = 16, segments = 4, alphabet = 4 }\n";
    let m = RunManifest::parse(text, &dir.path().join("m.toml")).unwrap();
    let out = run_grid(&m).unwrap();
    assert!(out.is_partial());
    assert_eq!(out.report.runs.len(), 1);
    assert_eq!(out.report.failures.len(), 1);
    assert_eq!(out.report.failures[0].detector.to_string(), "SW-FREQ");
    assert!(out.report.failures[0].error.contains("probation"), "{}", out.report.failures[0].error);
}

#[test]
fn invalid_overrides_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = "datasets = [\"d\"]\noutput = \"o\"\n[overrides.\"SW-NN\"]\nmeasure = { k = 0 }\n";
    let m = RunManifest::parse(text, &dir.path().join("m.toml")).unwrap();
    let err = m.detector_config("SW-NN".parse().unwrap(), 0).unwrap_err();
    assert!(err.is_config(), "{err}");
    let text = "datasets = [\"d\"]\noutput = \"o\"\nmetrics = [\"f1\"]\n";
    assert!(RunManifest::parse(text, &dir.path().join("m.toml")).unwrap_err().is_config());
}
