//! Labeled time series in NAB or Yahoo CSV layout.
//!
//! Streams are indexed by 1-based position: the point at row `i` has
//! timestamp `i`, whatever the file's timestamp column holds. The original
//! timestamps are kept for mapping labels and for display.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use streamad::evaluation::{GroundTruth, Window};
use streamad::StreamPoint;

use crate::error::{IoError, Result};

/// Shortest stream accepted.
pub const MIN_LENGTH: usize = 20;

/// A timestamp as found in the file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RawTimestamp {
    Integer(i64),
    DateTime(NaiveDateTime),
}

impl RawTimestamp {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Ok(i) = s.parse::<i64>() {
            return Some(RawTimestamp::Integer(i));
        }
        const FORMATS: [&str; 4] = [
            "%Y-%m-%d %H:%M:%S%.f",
            "%Y-%m-%dT%H:%M:%S%.f",
            "%Y-%m-%d %H:%M",
            "%Y-%m-%dT%H:%M",
        ];
        for f in FORMATS {
            if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
                return Some(RawTimestamp::DateTime(t));
            }
        }
        if let Ok(t) = DateTime::parse_from_rfc3339(s) {
            return Some(RawTimestamp::DateTime(t.naive_utc()));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .ok()
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .map(RawTimestamp::DateTime)
    }

    fn same_kind(&self, other: &Self) -> bool {
        matches!(
            (self, other),
            (RawTimestamp::Integer(_), RawTimestamp::Integer(_))
                | (RawTimestamp::DateTime(_), RawTimestamp::DateTime(_))
        )
    }
}

impl fmt::Display for RawTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawTimestamp::Integer(i) => write!(f, "{i}"),
            RawTimestamp::DateTime(t) => write!(f, "{}", t.format("%Y-%m-%d %H:%M:%S")),
        }
    }
}

/// A univariate series with ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub path: PathBuf,
    /// Timestamps are positions `1..=T`.
    pub points: Vec<StreamPoint>,
    pub raw_timestamps: Vec<RawTimestamp>,
    pub truth: GroundTruth,
}

impl DatasetBundle {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.value)
    }

    pub fn windows(&self) -> &[Window] {
        &self.truth.windows
    }

    /// `⌊fraction·T⌋`.
    pub fn probation_end(&self, fraction: f64) -> usize {
        (fraction * self.len() as f64).floor() as usize
    }

    /// Replace the ground truth with anomalies given as raw timestamps.
    pub fn set_labels(&mut self, labels: &[String]) -> Result<()> {
        let mut anomalies = Vec::with_capacity(labels.len());
        for label in labels {
            let ts = RawTimestamp::parse(label).ok_or_else(|| {
                IoError::data(&self.path, None, format!("label `{label}` is not a timestamp"))
            })?;
            let pos = self.raw_timestamps.binary_search(&ts).map_err(|_| {
                IoError::data(
                    &self.path,
                    None,
                    format!("label `{label}` does not match any timestamp in the series"),
                )
            })?;
            anomalies.push(pos as i64 + 1);
        }
        self.truth = GroundTruth::new(self.len(), anomalies);
        Ok(())
    }

    /// Build a bundle from values; positions double as raw timestamps.
    pub fn from_values(name: impl Into<String>, values: &[f64], anomalies: Vec<i64>) -> Self {
        let points = values
            .iter()
            .enumerate()
            .map(|(i, &v)| StreamPoint::new(i as i64 + 1, v))
            .collect();
        Self {
            name: name.into(),
            path: PathBuf::new(),
            points,
            raw_timestamps: (1..=values.len() as i64).map(RawTimestamp::Integer).collect(),
            truth: GroundTruth::new(values.len(), anomalies),
        }
    }
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim() {
        "0" | "0.0" | "false" | "False" => Some(false),
        "1" | "1.0" | "true" | "True" => Some(true),
        _ => None,
    }
}

/// Load a CSV with a header and columns `timestamp, value[, is_anomaly]`.
///
/// Columns are found by name (`timestamp`, `value`, `is_anomaly`/`label`),
/// else by position. Timestamps are integers or ISO-8601 datetimes and must
/// strictly increase.
pub fn load_csv(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IoError::data(path, Some(1), e.to_string()))?
        .clone();
    let ts_col = column(&headers, &["timestamp", "time", "date"]).unwrap_or(0);
    let value_col = column(&headers, &["value"]).unwrap_or(1);
    let label_col = column(&headers, &["is_anomaly", "label", "anomaly"])
        .or_else(|| (headers.len() > 2 && column(&headers, &["value"]).is_none()).then_some(2));
    if headers.len() < 2 {
        return Err(IoError::data(path, Some(1), "expected at least two columns"));
    }

    let mut points = Vec::new();
    let mut raw = Vec::new();
    let mut anomalies = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| IoError::data(path, Some(line), e.to_string()))?;
        let field = |c: usize, what: &str| {
            row.get(c)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| IoError::data(path, Some(line), format!("missing {what}")))
        };
        let ts_text = field(ts_col, "timestamp")?;
        let ts = RawTimestamp::parse(ts_text).ok_or_else(|| {
            IoError::data(path, Some(line), format!("unparseable timestamp `{ts_text}`"))
        })?;
        if let Some(prev) = raw.last() {
            if !ts.same_kind(prev) {
                return Err(IoError::data(path, Some(line), "mixed timestamp formats"));
            }
            if ts <= *prev {
                return Err(IoError::data(
                    path,
                    Some(line),
                    format!("timestamp {ts} does not follow {prev}"),
                ));
            }
        }
        let value_text = field(value_col, "value")?;
        let value: f64 = value_text.parse().map_err(|_| {
            IoError::data(path, Some(line), format!("unparseable value `{value_text}`"))
        })?;
        if !value.is_finite() {
            return Err(IoError::data(path, Some(line), format!("non-finite value `{value_text}`")));
        }
        let position = points.len() as i64 + 1;
        if let Some(c) = label_col {
            let text = field(c, "label")?;
            let label = parse_label(text).ok_or_else(|| {
                IoError::data(path, Some(line), format!("label `{text}` is not 0 or 1"))
            })?;
            if label {
                anomalies.push(position);
            }
        }
        raw.push(ts);
        points.push(StreamPoint::new(position, value));
    }
    if points.len() < MIN_LENGTH {
        return Err(IoError::data(
            path,
            None,
            format!("{} points; at least {MIN_LENGTH} required", points.len()),
        ));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(DatasetBundle {
        name,
        path: path.to_path_buf(),
        truth: GroundTruth::new(points.len(), anomalies),
        points,
        raw_timestamps: raw,
    })
}

/// Sidecar labels: dataset key (usually a relative path) to anomaly timestamps.
pub type LabelMap = BTreeMap<String, Vec<String>>;

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::data(path, Some(e.line() as u64), e.to_string()))
}

/// Key of `labels` naming `path`: the longest key that is a suffix of it.
pub fn label_key<'a>(labels: &'a LabelMap, path: &Path) -> Option<&'a str> {
    let normalized = path.to_string_lossy().replace('\\', "/");
    labels
        .keys()
        .filter(|k| {
            let k = k.replace('\\', "/");
            normalized == k || normalized.ends_with(&format!("/{k}"))
        })
        .max_by_key(|k| k.len())
        .map(String::as_str)
}

/// Load a CSV and, if `labels` names it, replace its ground truth and take
/// the label key as its name.
pub fn load_dataset(path: impl AsRef<Path>, labels: Option<&LabelMap>) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let mut bundle = load_csv(path)?;
    if let Some(labels) = labels {
        if let Some(key) = label_key(labels, path) {
            bundle.set_labels(&labels[key])?;
            bundle.name = key.trim_end_matches(".csv").to_string();
        }
    }
    Ok(bundle)
}

/// CSV files under `path` (recursively, sorted), or `path` itself.
pub fn collect_csv_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| IoError::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| IoError::io(&dir, e))?;
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}
