//! File formats and batch evaluation for `streamad`: CSV corpora with
//! labels, detector configuration files, score files, grid manifests and
//! evaluation reports.

pub mod config;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod manifest;
pub mod report;
pub mod scores;

pub use config::{load_config, parse_config, REFERENCE_CONFIG};
pub use dataset::{load_csv, load_dataset, load_labels, DatasetBundle, LabelMap};
pub use error::{IoError, Result};
pub use grid::{run_grid, run_grid_on, GridOutcome};
pub use manifest::RunManifest;
pub use report::{EvalReport, Metric, RunResult};
pub use scores::{read_scores, write_scores, ScoreRow};
