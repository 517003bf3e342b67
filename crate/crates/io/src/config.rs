//! Detector configuration files (TOML, one section per component).

use std::fs;
use std::path::Path;

use streamad::{DetectorConfig, DetectorSpec};

use crate::error::{IoError, Result};

/// Every option with its default, for `SW-NN`.
pub const REFERENCE_CONFIG: &str = r#"# streamad detector configuration. Values shown are the defaults.

# Seed for reservoir sampling and k-means initialization.
seed = 0
# "incremental" reads the measure's maintained caches after each update;
# "exact" recomputes every reference score from scratch (slow, for checking).
maintenance = "incremental"

[representation]
# "mean-std": (mean, population std) of the last `window` values.
# "sax": SAX word of the last `window` values with `segments` symbols from an
#        alphabet of `alphabet` letters (2..=26); `window` must be divisible
#        by `segments`. Default for FREQ: window = 16, segments = 4,
#        alphabet = 4.
kind = "mean-std"
window = 10

[strategy]
# FR (fixed reference), LW (landmark window), SW (sliding window),
# URES (uniform reservoir), ARES (anomaly-aware reservoir).
kind = "SW"
# Reference group size w. Defaults to the probationary length p.
# window = 750
# ARES decay: sampling weight exp(-decay * score), in (0, 1].
decay = 0.96

[measure]
# NN: mean distance to the k nearest members.
# DEN: local outlier factor with k neighbors; reach = "standard" | "literal".
# CC: distance to the nearest of k centroids, re-clustered when the mean
#     member-to-centroid distance drifts by more than `epsilon` (relative).
# FREQ: inverse SAX-word frequency (requires the "sax" representation).
kind = "NN"
k = 5

[scoring]
# Number of recent p-values in the Kolmogorov-Smirnov test.
ks_window = 30
# Run the test every `test_period` points, holding the score in between.
test_period = 1
# Points with a final score >= threshold are flagged, in (0, 1).
threshold = 0.9

[probation]
# Fraction of the stream used only to warm up, in (0, 1).
fraction = 0.15
# Absolute probationary length; overrides `fraction` when set.
# points = 500
"#;

pub fn parse_config(text: &str, origin: &Path) -> Result<DetectorConfig> {
    let config: DetectorConfig =
        toml::from_str(text).map_err(|e| IoError::config(origin, e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<DetectorConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_config(&text, path)
}

pub fn config_to_toml(config: &DetectorConfig) -> String {
    toml::to_string(config).expect("detector config serializes")
}

/// Default configuration of a grid entry, as TOML.
pub fn default_config_toml(spec: DetectorSpec) -> String {
    config_to_toml(&spec.config())
}

/// Deep-merge `patch` into `base`; tables merge key by key, other values
/// replace. A `kind` change in a component section replaces the section.
pub fn merge(base: &mut toml::Table, patch: &toml::Table) {
    for (key, value) in patch {
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => {
                if p.get("kind").is_some_and(|k| b.get("kind") != Some(k)) {
                    *b = p.clone();
                } else {
                    merge(b, p);
                }
            }
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

/// `base` with `patches` applied in order.
pub fn apply_overrides(base: &DetectorConfig, patches: &[&toml::Table], origin: &Path) -> Result<DetectorConfig> {
    let mut table = toml::Table::try_from(base).expect("detector config is a table");
    for p in patches {
        merge(&mut table, p);
    }
    let config: DetectorConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| IoError::config(origin, e.to_string()))?;
    config.validate()?;
    Ok(config)
}
