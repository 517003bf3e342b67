//! Aggregation of grid runs into an evaluation report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use streamad::evaluation::{
    self, clusteredness_of, difficulty_diversity, flagged_timestamps, nab_score, normalize_nab,
    roc_auc_records, Clusteredness, NabProfile,
};
use streamad::{DetectorSpec, ScoreRecord};

use crate::dataset::DatasetBundle;
use crate::manifest::GroupSplit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RocAuc,
    NabStandard,
    NabLowFp,
    NabLowFn,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::RocAuc, Metric::NabStandard, Metric::NabLowFp, Metric::NabLowFn];

    pub fn name(self) -> &'static str {
        match self {
            Metric::RocAuc => "roc_auc",
            Metric::NabStandard => "nab_standard",
            Metric::NabLowFp => "nab_low_fp",
            Metric::NabLowFn => "nab_low_fn",
        }
    }

    pub fn profile(self) -> Option<NabProfile> {
        match self {
            Metric::RocAuc => None,
            Metric::NabStandard => Some(NabProfile::STANDARD),
            Metric::NabLowFp => Some(NabProfile::LOW_FP),
            Metric::NabLowFn => Some(NabProfile::LOW_FN),
        }
    }

    /// Value of the metric for `records` on `dataset`; `None` when undefined.
    pub fn evaluate(self, records: &[ScoreRecord], dataset: &DatasetBundle) -> Option<f64> {
        match self.profile() {
            None => roc_auc_records(records, &dataset.truth.anomalies),
            Some(profile) => {
                let windows = dataset.windows();
                let raw = nab_score(&flagged_timestamps(records), windows, dataset.len(), &profile);
                normalize_nab(raw, windows.len(), &profile)
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Outcome of one (detector, dataset, seed) job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub detector: DetectorSpec,
    pub seed: u64,
    pub points: usize,
    pub records: usize,
    pub flagged: usize,
    pub metrics: BTreeMap<Metric, Option<f64>>,
    /// Final scores at the true anomalies that received a record.
    pub anomaly_scores: Vec<f64>,
    /// Wall time; not serialized so reports are reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl RunResult {
    pub fn from_records(
        dataset: &DatasetBundle,
        detector: DetectorSpec,
        seed: u64,
        records: &[ScoreRecord],
        metrics: &[Metric],
        seconds: f64,
    ) -> Self {
        let anomaly_scores = records
            .iter()
            .filter(|r| dataset.truth.is_anomaly(r.timestamp))
            .map(|r| r.final_score)
            .collect();
        Self {
            dataset: dataset.name.clone(),
            detector,
            seed,
            points: dataset.len(),
            records: records.len(),
            flagged: records.iter().filter(|r| r.flagged).count(),
            metrics: metrics.iter().map(|&m| (m, m.evaluate(records, dataset))).collect(),
            anomaly_scores,
            seconds,
        }
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        self.metrics.get(&m).copied().flatten()
    }

    pub fn micros_per_point(&self) -> f64 {
        self.seconds * 1e6 / self.points.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub dataset: String,
    pub detector: DetectorSpec,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            mean: evaluation::mean(values)?,
            std: evaluation::population_std(values)?,
            n: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub points: usize,
    pub anomalies: usize,
    pub windows: usize,
    pub clusteredness: Option<Clusteredness>,
    /// Mean final score at true anomalies over all detectors; low means hard.
    pub mean_anomaly_score: Option<f64>,
    /// `1 - mean_anomaly_score`.
    pub difficulty: Option<f64>,
    /// Population std of the per-detector metric values.
    pub diversity: BTreeMap<Metric, Option<f64>>,
}

impl DatasetDescriptor {
    /// Descriptors that need only the data.
    pub fn of_data(dataset: &DatasetBundle) -> Self {
        let (anomalous, normal): (Vec<f64>, Vec<f64>) = dataset
            .points
            .iter()
            .map(|p| p.value)
            .zip(dataset.points.iter().map(|p| dataset.truth.is_anomaly(p.timestamp)))
            .fold((Vec::new(), Vec::new()), |(mut a, mut n), (v, is_anomaly)| {
                if is_anomaly { a.push(v) } else { n.push(v) }
                (a, n)
            });
        Self {
            name: dataset.name.clone(),
            points: dataset.len(),
            anomalies: dataset.truth.anomalies.len(),
            windows: dataset.truth.windows.len(),
            clusteredness: clusteredness_of(&normal, &anomalous),
            mean_anomaly_score: None,
            difficulty: None,
            diversity: BTreeMap::new(),
        }
    }
}

/// Delta table of one group split: detector → metric → Δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub split: GroupSplit,
    pub deltas: BTreeMap<DetectorSpec, BTreeMap<Metric, Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<Metric>,
    pub runs: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
    /// detector → metric → mean ± std over datasets (seeds averaged first).
    pub summary: BTreeMap<DetectorSpec, BTreeMap<Metric, Option<MeanStd>>>,
    /// metric → detector → datasets where it was the unique best.
    pub wins: BTreeMap<Metric, BTreeMap<DetectorSpec, usize>>,
    /// metric → detector → dataset → Rel.
    pub relative: BTreeMap<Metric, BTreeMap<DetectorSpec, BTreeMap<String, f64>>>,
    pub deltas: Vec<DeltaTable>,
    pub datasets: Vec<DatasetDescriptor>,
}

type Cell = BTreeMap<(DetectorSpec, String), Vec<f64>>;

fn cells(runs: &[RunResult], metric: Metric) -> Cell {
    let mut out: Cell = BTreeMap::new();
    for r in runs {
        if let Some(v) = r.metric(metric) {
            out.entry((r.detector, r.dataset.clone())).or_default().push(v);
        }
    }
    out
}

/// Aggregate runs into a report. `datasets` supplies descriptors; `detectors`
/// fixes the row set so detectors without results still appear.
pub fn build_report(
    metrics: &[Metric],
    detectors: &[DetectorSpec],
    datasets: &[DatasetBundle],
    runs: Vec<RunResult>,
    failures: Vec<RunFailure>,
    groups: &[GroupSplit],
) -> EvalReport {
    let names: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();
    let mut summary: BTreeMap<DetectorSpec, BTreeMap<Metric, Option<MeanStd>>> = BTreeMap::new();
    let mut wins = BTreeMap::new();
    let mut relative = BTreeMap::new();

    for &metric in metrics {
        let cell = cells(&runs, metric);
        let seed_mean = |d: DetectorSpec, name: &str| {
            cell.get(&(d, name.to_string())).and_then(|v| evaluation::mean(v))
        };
        for &d in detectors {
            let per_dataset: Vec<f64> = names.iter().filter_map(|n| seed_mean(d, n)).collect();
            summary.entry(d).or_default().insert(metric, MeanStd::of(&per_dataset));
        }

        let mut metric_wins: BTreeMap<DetectorSpec, usize> = detectors.iter().map(|&d| (d, 0)).collect();
        for n in &names {
            let scored: Vec<(DetectorSpec, f64)> = detectors
                .iter()
                .filter_map(|&d| seed_mean(d, n).map(|v| (d, v)))
                .collect();
            let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            let top: Vec<_> = scored.iter().filter(|s| s.1 == best).collect();
            if let [only] = top.as_slice() {
                *metric_wins.entry(only.0).or_default() += 1;
            }
        }
        wins.insert(metric, metric_wins);

        let mut rel: BTreeMap<DetectorSpec, BTreeMap<String, f64>> = BTreeMap::new();
        for n in &names {
            for &d in detectors {
                let Some(own) = cell.get(&(d, n.clone())) else {
                    continue;
                };
                let others: Vec<f64> = detectors
                    .iter()
                    .filter(|&&o| o != d)
                    .filter_map(|&o| cell.get(&(o, n.clone())))
                    .flatten()
                    .copied()
                    .collect();
                if let Some(r) = evaluation::relative_performance(own, &others) {
                    rel.entry(d).or_default().insert(n.clone(), r);
                }
            }
        }
        relative.insert(metric, rel);
    }

    let descriptors = datasets
        .iter()
        .map(|ds| {
            let mut desc = DatasetDescriptor::of_data(ds);
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.dataset == ds.name).collect();
            let anomaly_scores: Vec<Vec<f64>> = detectors
                .iter()
                .map(|&d| {
                    mine.iter()
                        .filter(|r| r.detector == d)
                        .flat_map(|r| r.anomaly_scores.iter().copied())
                        .collect()
                })
                .collect();
            for &metric in metrics {
                let per_detector: Vec<f64> = detectors
                    .iter()
                    .filter_map(|&d| {
                        let v: Vec<f64> = mine
                            .iter()
                            .filter(|r| r.detector == d)
                            .filter_map(|r| r.metric(metric))
                            .collect();
                        evaluation::mean(&v)
                    })
                    .collect();
                let dd = difficulty_diversity(&anomaly_scores, &per_detector);
                desc.mean_anomaly_score = dd.mean_anomaly_score;
                desc.difficulty = dd.difficulty();
                desc.diversity.insert(metric, dd.diversity);
            }
            desc
        })
        .collect();

    EvalReport {
        metrics: metrics.to_vec(),
        runs,
        failures,
        summary,
        wins,
        relative,
        deltas: Vec::new(),
        datasets: descriptors,
    }
    .with_groups(groups)
}

impl EvalReport {
    pub fn detectors(&self) -> Vec<DetectorSpec> {
        self.summary.keys().copied().collect()
    }

    pub fn dataset_names(&self) -> BTreeSet<String> {
        self.datasets.iter().map(|d| d.name.clone()).collect()
    }

    /// Recompute delta tables for new group splits.
    pub fn with_groups(mut self, groups: &[GroupSplit]) -> Self {
        self.deltas = groups
            .iter()
            .map(|split| {
                let mut table: BTreeMap<DetectorSpec, BTreeMap<Metric, Option<f64>>> = BTreeMap::new();
                for &metric in &self.metrics {
                    for d in self.detectors() {
                        let rels = self.relative.get(&metric).and_then(|m| m.get(&d));
                        let pick = |group: &[String]| -> Vec<f64> {
                            group
                                .iter()
                                .filter_map(|n| rels.and_then(|r| r.get(n)).copied())
                                .collect()
                        };
                        table.entry(d).or_default().insert(
                            metric,
                            evaluation::delta_performance(&pick(&split.group1), &pick(&split.group2)),
                        );
                    }
                }
                DeltaTable {
                    split: split.clone(),
                    deltas: table,
                }
            })
            .collect();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Human-readable tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Mean ± std over datasets");
        let _ = write!(s, "{:<11}", "detector");
        for m in &self.metrics {
            let _ = write!(s, " {:>20}", m.name());
        }
        let _ = writeln!(s);
        for (d, row) in &self.summary {
            let _ = write!(s, "{:<11}", d.to_string());
            for m in &self.metrics {
                let cell = match row.get(m).copied().flatten() {
                    Some(ms) => format!("{:.3} ± {:.3}", ms.mean, ms.std),
                    None => "-".into(),
                };
                let _ = write!(s, " {cell:>20}");
            }
            let _ = writeln!(s);
        }

        let _ = writeln!(s, "\nWins (unique best per dataset)");
        let _ = write!(s, "{:<11}", "detector");
        for m in &self.metrics {
            let _ = write!(s, " {:>14}", m.name());
        }
        let _ = writeln!(s);
        for d in self.detectors() {
            let _ = write!(s, "{:<11}", d.to_string());
            for m in &self.metrics {
                let w = self.wins.get(m).and_then(|w| w.get(&d)).copied().unwrap_or(0);
                let _ = write!(s, " {w:>14}");
            }
            let _ = writeln!(s);
        }

        for table in &self.deltas {
            let _ = writeln!(
                s,
                "\nRelative performance difference: {} ({} vs {} datasets)",
                table.split.name,
                table.split.group1.len(),
                table.split.group2.len()
            );
            for (d, row) in &table.deltas {
                let _ = write!(s, "{:<11}", d.to_string());
                for m in &self.metrics {
                    let cell = row
                        .get(m)
                        .copied()
                        .flatten()
                        .map_or("-".into(), |v| format!("{v:+.3}"));
                    let _ = write!(s, " {cell:>14}");
                }
                let _ = writeln!(s);
            }
        }

        let _ = writeln!(s, "\nDatasets");
        let _ = writeln!(
            s,
            "{:<32} {:>8} {:>9} {:>8} {:>10} {:>10}",
            "name", "points", "anomalies", "nc", "difficulty", "diversity"
        );
        let first = self.metrics.first().copied();
        for d in &self.datasets {
            let nc = d.clusteredness.map_or("-".into(), |c| format!("{:+.3}", c.nc));
            let diff = d.difficulty.map_or("-".into(), |v| format!("{v:.3}"));
            let div = first
                .and_then(|m| d.diversity.get(&m).copied().flatten())
                .map_or("-".into(), |v| format!("{v:.3}"));
            let _ = writeln!(
                s,
                "{:<32} {:>8} {:>9} {:>8} {:>10} {:>10}",
                d.name, d.points, d.anomalies, nc, diff, div
            );
        }

        if !self.failures.is_empty() {
            let _ = writeln!(s, "\nFailures");
            for f in &self.failures {
                let _ = writeln!(s, "{} on {} (seed {}): {}", f.detector, f.dataset, f.seed, f.error);
            }
        }
        s
    }
}
