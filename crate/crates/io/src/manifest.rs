//! Grid manifests (TOML).
//!
//! ```toml
//! datasets = ["data"]                 # CSV files or directories
//! labels = "labels.json"              # optional sidecar labels
//! detectors = "all"                   # or ["SW-NN", "ARES-CC"]
//! seeds = [0]
//! output = "out"
//! metrics = ["roc_auc", "nab_standard"]
//! parallelism = 4                     # default: available cores
//!
//! [defaults]                          # merged into every detector config
//! scoring = { ks_window = 30 }
//!
//! [overrides."SW-NN"]                 # merged after `defaults`
//! measure = { k = 8 }
//!
//! [[groups]]                          # dataset splits for delta tables
//! name = "noise"
//! group1 = ["low_noise_a", "low_noise_b"]
//! group2 = ["high_noise_a"]
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamad::{DetectorConfig, DetectorSpec};

use crate::config::apply_overrides;
use crate::error::{IoError, Result};
use crate::report::Metric;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetectorSelection {
    /// `"all"`: the 20-entry grid.
    Named(String),
    List(Vec<DetectorSpec>),
}

impl Default for DetectorSelection {
    fn default() -> Self {
        DetectorSelection::Named("all".into())
    }
}

/// Two dataset groups compared by a delta table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSplit {
    pub name: String,
    pub group1: Vec<String>,
    pub group2: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub datasets: Vec<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub detectors: DetectorSelection,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub parallelism: Option<usize>,
    /// Write one score file per run.
    #[serde(default = "yes")]
    pub write_scores: bool,
    #[serde(default)]
    pub defaults: toml::Table,
    #[serde(default)]
    pub overrides: BTreeMap<String, toml::Table>,
    #[serde(default)]
    pub groups: Vec<GroupSplit>,
    /// Where the manifest was read from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::RocAuc, Metric::NabStandard]
}

fn yes() -> bool {
    true
}

impl RunManifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut m: RunManifest =
            toml::from_str(text).map_err(|e| IoError::config(origin, e.to_string()))?;
        m.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check(origin)?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text, path)
    }

    fn check(&self, origin: &Path) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(IoError::config(origin, "`datasets` is empty"));
        }
        if self.seeds.is_empty() {
            return Err(IoError::config(origin, "`seeds` is empty"));
        }
        if self.metrics.is_empty() {
            return Err(IoError::config(origin, "`metrics` is empty"));
        }
        if self.parallelism == Some(0) {
            return Err(IoError::config(origin, "`parallelism` must be at least 1"));
        }
        if let DetectorSelection::Named(n) = &self.detectors {
            if !n.eq_ignore_ascii_case("all") && !n.eq_ignore_ascii_case("all-20") {
                return Err(IoError::config(
                    origin,
                    format!("`detectors` must be \"all\" or a list, got \"{n}\""),
                ));
            }
        }
        let specs = self.detector_specs();
        for key in self.overrides.keys() {
            let spec: DetectorSpec = key.parse().map_err(|e| {
                IoError::config(origin, format!("override `{key}`: {e}"))
            })?;
            if !specs.contains(&spec) {
                return Err(IoError::config(
                    origin,
                    format!("override `{key}` names a detector outside the grid"),
                ));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn detector_specs(&self) -> Vec<DetectorSpec> {
        match &self.detectors {
            DetectorSelection::Named(_) => DetectorSpec::all(),
            DetectorSelection::List(list) => list.clone(),
        }
    }

    /// Configuration of `spec` with `defaults` and its override applied.
    pub fn detector_config(&self, spec: DetectorSpec, seed: u64) -> Result<DetectorConfig> {
        let origin = self.base_dir.join("<manifest>");
        let mut patches = vec![&self.defaults];
        let key = spec.to_string();
        if let Some(o) = self
            .overrides
            .iter()
            .find(|(k, _)| k.parse::<DetectorSpec>().ok() == Some(spec))
            .map(|(_, v)| v)
        {
            patches.push(o);
        }
        let mut config = apply_overrides(&spec.config(), &patches, &origin)
            .map_err(|e| IoError::config(&origin, format!("{key}: {e}")))?;
        if config.spec() != spec {
            return Err(IoError::config(
                &origin,
                format!("{key}: overrides changed the detector to {}", config.spec()),
            ));
        }
        config.seed = seed;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_example() {
        let text = r#"
datasets = ["data"]
detectors = ["SW-NN", "ARES-CC"]
seeds = [1, 2]
output = "out"
metrics = ["roc_auc", "nab_low_fp"]

[defaults]
scoring = { ks_window = 40 }

[overrides."SW-NN"]
measure = { k = 8 }
"#;
        let m = RunManifest::parse(text, Path::new("/tmp/grid.toml")).unwrap();
        assert_eq!(m.detector_specs().len(), 2);
        assert_eq!(m.resolve(Path::new("data")), PathBuf::from("/tmp/data"));
        let c = m.detector_config("SW-NN".parse().unwrap(), 2).unwrap();
        assert_eq!(c.measure, streamad::MeasureConfig::Knn { k: 8 });
        assert_eq!(c.scoring.ks_window, 40);
        assert_eq!(c.seed, 2);
        let c = m.detector_config("ARES-CC".parse().unwrap(), 1).unwrap();
        assert_eq!(c.scoring.ks_window, 40);
    }

    #[test]
    fn all_means_twenty() {
        let m = RunManifest::parse("datasets = [\"d\"]\noutput = \"o\"", Path::new("m.toml")).unwrap();
        assert_eq!(m.detector_specs().len(), 20);
        assert!(RunManifest::parse("datasets = [\"d\"]\noutput = \"o\"\ndetectors = \"some\"", Path::new("m")).is_err());
        assert!(RunManifest::parse(
            "datasets = [\"d\"]\noutput = \"o\"\ndetectors = [\"SW-NN\"]\n[overrides.\"FR-NN\"]\nseed = 1",
            Path::new("m")
        )
        .is_err());
    }
}
