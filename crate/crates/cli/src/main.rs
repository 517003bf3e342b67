//! `streamad` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 grid finished with failed jobs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use streamad::{build_detector, run_stream, DetectorConfig, DetectorSpec, ScoreRecord, StreamPoint32};
use streamad_io::config::{default_config_toml, load_config, REFERENCE_CONFIG};
use streamad_io::dataset::{load_dataset, load_labels, DatasetBundle};
use streamad_io::manifest::{GroupSplit, RunManifest};
use streamad_io::report::{DatasetDescriptor, EvalReport, Metric};
use streamad_io::{read_scores, run_grid, write_scores, IoError};

#[derive(Parser)]
#[command(name = "streamad", version, about = "Streaming anomaly detection with conformal scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Run one detector over one series and write its score file.
    Run {
        /// Input CSV (timestamp, value[, is_anomaly]).
        input: PathBuf,
        /// Grid entry such as SW-NN; ignored when --config is given.
        #[arg(short, long, default_value = "SW-NN")]
        detector: DetectorSpec,
        /// Detector configuration (TOML).
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Score file to write.
        #[arg(short, long)]
        output: PathBuf,
        /// Sidecar labels (JSON: file key to anomaly timestamps).
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "f64")]
        precision: Precision,
    },
    /// Run a detector grid described by a manifest.
    Grid {
        manifest: PathBuf,
        /// Override the manifest's thread count.
        #[arg(short = 'j', long)]
        jobs: Option<usize>,
    },
    /// Evaluate an existing score file against a labeled series.
    Score {
        scores: PathBuf,
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Print descriptors of labeled series.
    Characterize {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Render a report.json as text, optionally with new group splits.
    Report {
        report: PathBuf,
        /// Manifest whose `groups` replace the report's.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Print a configuration file with defaults.
    Config {
        /// Print the defaults of this grid entry instead of the commented reference.
        #[arg(short, long)]
        detector: Option<DetectorSpec>,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Partial,
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        if e.is_config() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Partial) => ExitCode::from(3),
    }
}

fn dataset(input: &Path, labels: Option<&PathBuf>) -> Result<DatasetBundle, Failure> {
    let labels = labels.map(load_labels).transpose()?;
    Ok(load_dataset(input, labels.as_ref())?)
}

fn print_metrics(records: &[ScoreRecord], data: &DatasetBundle) {
    for m in Metric::ALL {
        match m.evaluate(records, data) {
            Some(v) => println!("{:<13} {v:.4}", m.name()),
            None => println!("{:<13} -", m.name()),
        }
    }
    let flagged = records.iter().filter(|r| r.flagged).count();
    println!("{:<13} {flagged} of {}", "flagged", records.len());
}

fn detect(config: &DetectorConfig, data: &DatasetBundle, precision: Precision) -> Result<Vec<ScoreRecord>, Failure> {
    let at = |e: streamad::Error| IoError::from(e);
    Ok(match precision {
        Precision::F64 => {
            let mut d = build_detector::<f64>(config, data.len()).map_err(at)?;
            run_stream(&mut d, data.points.iter().copied()).map_err(at)?
        }
        Precision::F32 => {
            let mut d = build_detector::<f32>(config, data.len()).map_err(at)?;
            let points = data
                .points
                .iter()
                .map(|p| StreamPoint32::new(p.timestamp, p.value as f32));
            run_stream(&mut d, points).map_err(at)?
        }
    })
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            input,
            detector,
            config,
            seed,
            output,
            labels,
            precision,
        } => {
            let mut config = match config {
                Some(path) => load_config(path)?,
                None => detector.config(),
            };
            if let Some(s) = seed {
                config.seed = s;
            }
            let data = dataset(&input, labels.as_ref())?;
            let records = detect(&config, &data, precision)?;
            write_scores(&output, &records)?;
            println!("{} on {}: {} records -> {}", config.spec(), data.name, records.len(), output.display());
            print_metrics(&records, &data);
        }
        Command::Grid { manifest, jobs } => {
            let mut m = RunManifest::load(&manifest)?;
            if jobs == Some(0) {
                return Err(Failure::Usage("--jobs must be at least 1".into()));
            }
            if jobs.is_some() {
                m.parallelism = jobs;
            }
            let outcome = run_grid(&m)?;
            print!("{}", outcome.report.to_text());
            for f in &outcome.report_files {
                println!("wrote {}", f.display());
            }
            println!("wrote {} score files", outcome.score_files.len());
            if outcome.is_partial() {
                eprintln!("{} jobs failed", outcome.report.failures.len());
                return Err(Failure::Partial);
            }
        }
        Command::Score { scores, input, labels } => {
            let data = dataset(&input, labels.as_ref())?;
            let records: Vec<ScoreRecord> = read_scores(&scores)?.iter().map(|r| r.to_record()).collect();
            if let Some(r) = records.iter().find(|r| r.timestamp < 1 || r.timestamp > data.len() as i64) {
                return Err(Failure::Data(format!(
                    "{}: timestamp {} is outside 1..={}",
                    scores.display(),
                    r.timestamp,
                    data.len()
                )));
            }
            print_metrics(&records, &data);
        }
        Command::Characterize { inputs, labels } => {
            if inputs.is_empty() {
                return Err(Failure::Usage("no input files".into()));
            }
            println!("{:<32} {:>8} {:>9} {:>7} {:>8} {:>9}", "name", "points", "anomalies", "windows", "nc", "clustered");
            for input in &inputs {
                let d = DatasetDescriptor::of_data(&dataset(input, labels.as_ref())?);
                let (nc, clustered) = d
                    .clusteredness
                    .map_or(("-".into(), "-".into()), |c| (format!("{:+.3}", c.nc), c.clustered.to_string()));
                println!(
                    "{:<32} {:>8} {:>9} {:>7} {nc:>8} {clustered:>9}",
                    d.name, d.points, d.anomalies, d.windows
                );
            }
        }
        Command::Report { report, groups, json } => {
            let text = std::fs::read_to_string(&report).map_err(|e| Failure::Data(format!("{}: {e}", report.display())))?;
            let mut r = EvalReport::from_json(&text).map_err(|e| Failure::Data(format!("{}: {e}", report.display())))?;
            if let Some(g) = groups {
                let splits: Vec<GroupSplit> = RunManifest::load(&g)?.groups;
                r = r.with_groups(&splits);
            }
            if json {
                println!("{}", r.to_json());
            } else {
                print!("{}", r.to_text());
            }
        }
        Command::Config { detector } => match detector {
            Some(spec) => print!("{}", default_config_toml(spec)),
            None => print!("{REFERENCE_CONFIG}"),
        },
    }
    Ok(())
}
