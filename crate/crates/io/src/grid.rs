//! Running a detector grid over a corpus.
//!
//! Jobs run in parallel; results are collected in (dataset, detector, seed)
//! order so every output file is identical across runs and thread counts.
//! Timings are the one exception and go to `timings.csv`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use streamad::{build_detector, run_stream, DetectorConfig, DetectorSpec, ScoreRecord};

use crate::dataset::{collect_csv_files, load_dataset, load_labels, DatasetBundle};
use crate::error::{IoError, Result};
use crate::manifest::RunManifest;
use crate::report::{build_report, EvalReport, Metric, RunFailure, RunResult};
use crate::scores::write_scores;

pub struct GridOutcome {
    pub report: EvalReport,
    /// Score files written, in job order.
    pub score_files: Vec<PathBuf>,
    pub report_files: Vec<PathBuf>,
}

impl GridOutcome {
    pub fn is_partial(&self) -> bool {
        !self.report.failures.is_empty()
    }
}

/// `<output>/scores/<dataset>/<detector>-seed<seed>.csv`
pub fn score_path(output: &Path, dataset: &str, spec: DetectorSpec, seed: u64) -> PathBuf {
    output
        .join("scores")
        .join(dataset)
        .join(format!("{spec}-seed{seed}.csv"))
}

/// Load every dataset named by the manifest, applying sidecar labels.
pub fn load_corpus(manifest: &RunManifest) -> Result<Vec<DatasetBundle>> {
    let labels = manifest
        .labels
        .as_ref()
        .map(|p| load_labels(manifest.resolve(p)))
        .transpose()?;
    let mut files = Vec::new();
    for d in &manifest.datasets {
        let found = collect_csv_files(&manifest.resolve(d))?;
        if found.is_empty() {
            return Err(IoError::data(manifest.resolve(d), None, "no CSV files found"));
        }
        files.extend(found);
    }
    files.sort();
    files.dedup();
    let bundles: Vec<DatasetBundle> = files
        .iter()
        .map(|f| load_dataset(f, labels.as_ref()))
        .collect::<Result<_>>()?;
    let mut names: Vec<&str> = bundles.iter().map(|b| b.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(IoError::data(
            manifest.resolve(&manifest.datasets[0]),
            None,
            format!("two datasets are named `{}`", w[0]),
        ));
    }
    Ok(bundles)
}

struct Job<'a> {
    dataset: &'a DatasetBundle,
    spec: DetectorSpec,
    seed: u64,
    config: DetectorConfig,
}

enum JobOutcome {
    Done(RunResult, Vec<ScoreRecord>),
    Failed(RunFailure),
}

fn run_job(job: &Job<'_>, metrics: &[Metric]) -> JobOutcome {
    let fail = |error: String| {
        JobOutcome::Failed(RunFailure {
            dataset: job.dataset.name.clone(),
            detector: job.spec,
            seed: job.seed,
            error,
        })
    };
    let start = Instant::now();
    let mut detector = match build_detector::<f64>(&job.config, job.dataset.len()) {
        Ok(d) => d,
        Err(e) => return fail(e.to_string()),
    };
    match run_stream(&mut detector, job.dataset.points.iter().copied()) {
        Ok(records) => {
            let seconds = start.elapsed().as_secs_f64();
            let result = RunResult::from_records(job.dataset, job.spec, job.seed, &records, metrics, seconds);
            JobOutcome::Done(result, records)
        }
        Err(e) => fail(e.to_string()),
    }
}

/// Run every (dataset, detector, seed) job of `manifest` on `datasets`.
///
/// Configuration errors are fatal. A job whose detector cannot be built for
/// a dataset (for example a probation too short for the measure) or that
/// fails while running becomes a [`RunFailure`] and the grid continues.
pub fn run_grid_on(manifest: &RunManifest, datasets: &[DatasetBundle]) -> Result<GridOutcome> {
    let specs = manifest.detector_specs();
    let mut jobs = Vec::new();
    for dataset in datasets {
        for &spec in &specs {
            for &seed in &manifest.seeds {
                jobs.push(Job {
                    dataset,
                    spec,
                    seed,
                    config: manifest.detector_config(spec, seed)?,
                });
            }
        }
    }

    let threads = manifest
        .parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool starts");
    let output = manifest.resolve(&manifest.output);
    let write = manifest.write_scores;
    let outcomes: Vec<(JobOutcome, Option<PathBuf>)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let outcome = run_job(job, &manifest.metrics);
                let file = match (&outcome, write) {
                    (JobOutcome::Done(_, records), true) => {
                        let path = score_path(&output, &job.dataset.name, job.spec, job.seed);
                        Some(write_scores(&path, records).map(|()| path))
                    }
                    _ => None,
                };
                match file.transpose() {
                    Ok(f) => (outcome, f),
                    Err(e) => (
                        JobOutcome::Failed(RunFailure {
                            dataset: job.dataset.name.clone(),
                            detector: job.spec,
                            seed: job.seed,
                            error: e.to_string(),
                        }),
                        None,
                    ),
                }
            })
            .collect()
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut score_files = Vec::new();
    for (outcome, file) in outcomes {
        match outcome {
            JobOutcome::Done(r, _) => runs.push(r),
            JobOutcome::Failed(f) => failures.push(f),
        }
        score_files.extend(file);
    }

    let timings = timings_csv(&runs);
    let report = build_report(&manifest.metrics, &specs, datasets, runs, failures, &manifest.groups);
    fs::create_dir_all(&output).map_err(|e| IoError::io(&output, e))?;
    let mut report_files = Vec::new();
    for (name, text) in [
        ("report.json", report.to_json()),
        ("report.txt", report.to_text()),
        ("timings.csv", timings),
    ] {
        let path = output.join(name);
        fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
        report_files.push(path);
    }
    Ok(GridOutcome {
        report,
        score_files,
        report_files,
    })
}

/// Load the manifest's corpus and run the grid on it.
pub fn run_grid(manifest: &RunManifest) -> Result<GridOutcome> {
    let datasets = load_corpus(manifest)?;
    run_grid_on(manifest, &datasets)
}

fn timings_csv(runs: &[RunResult]) -> String {
    let mut s = String::from("dataset,detector,seed,points,seconds,us_per_point\n");
    for r in runs {
        s.push_str(&format!(
            "{},{},{},{},{:.6},{:.3}\n",
            r.dataset,
            r.detector,
            r.seed,
            r.points,
            r.seconds,
            r.micros_per_point()
        ));
    }
    s
}
