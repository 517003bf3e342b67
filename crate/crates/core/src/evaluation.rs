//! Detector evaluation: ROC-AUC, windowed NAB scoring, relative performance
//! and dataset descriptors.

use serde::{Deserialize, Serialize};

use crate::pipeline::ScoreRecord;

/// Area under the ROC curve: the probability that an anomaly outscores a
/// nominal point, ties counting one half. `None` when either class is empty.
pub fn roc_auc(anomalies: &[f64], nominals: &[f64]) -> Option<f64> {
    if anomalies.is_empty() || nominals.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = anomalies
        .iter()
        .map(|&s| (s, true))
        .chain(nominals.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the midrank sum keeps every quantity an integer
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let positives = all[i..j].iter().filter(|e| e.1).count() as u128;
        // ranks i+1 ..= j, midrank (i+1+j)/2
        rank_sum2 += positives * (i as u128 + 1 + j as u128);
        i = j;
    }
    let na = anomalies.len() as u128;
    let nn = nominals.len() as u128;
    // 2U = 2R - na(na+1)
    let u2 = rank_sum2 - na * (na + 1);
    Some(u2 as f64 / (2 * na * nn) as f64)
}

/// ROC-AUC of emitted records against a set of anomalous timestamps.
pub fn roc_auc_records(records: &[ScoreRecord], anomalies: &[i64]) -> Option<f64> {
    let (pos, neg): (Vec<&ScoreRecord>, Vec<&ScoreRecord>) = records
        .iter()
        .partition(|r| anomalies.binary_search(&r.timestamp).is_ok());
    let pos: Vec<f64> = pos.iter().map(|r| r.final_score).collect();
    let neg: Vec<f64> = neg.iter().map(|r| r.final_score).collect();
    roc_auc(&pos, &neg)
}

/// Inclusive interval of stream positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub start: i64,
    pub end: i64,
}

impl Window {
    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t <= self.end
    }

    /// `end - start`, at least 1, used to scale positions.
    pub fn span(&self) -> f64 {
        (self.end - self.start).max(1) as f64
    }
}

/// True anomalies and their windows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub anomalies: Vec<i64>,
    pub windows: Vec<Window>,
}

impl GroundTruth {
    /// Windows derived from `anomalies` (any order, deduplicated).
    pub fn new(length: usize, mut anomalies: Vec<i64>) -> Self {
        anomalies.sort_unstable();
        anomalies.dedup();
        let windows = make_windows(length, &anomalies);
        Self { anomalies, windows }
    }

    pub fn is_anomaly(&self, t: i64) -> bool {
        self.anomalies.binary_search(&t).is_ok()
    }
}

/// Width `⌊0.1·T / m⌋` (at least 1) per anomaly, centred, clipped to
/// `[1, T]`, overlapping windows merged.
pub fn make_windows(length: usize, anomalies: &[i64]) -> Vec<Window> {
    if anomalies.is_empty() || length == 0 {
        return Vec::new();
    }
    let width = ((0.1 * length as f64 / anomalies.len() as f64).floor() as i64).max(1);
    let half = width / 2;
    let mut sorted = anomalies.to_vec();
    sorted.sort_unstable();
    let mut windows: Vec<Window> = Vec::new();
    for a in sorted {
        let w = Window {
            start: (a - half).max(1),
            end: (a + half).min(length as i64),
        };
        match windows.last_mut() {
            Some(last) if w.start <= last.end => last.end = last.end.max(w.end),
            _ => windows.push(w),
        }
    }
    windows
}

/// Weights of one NAB application profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NabProfile {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl NabProfile {
    pub const STANDARD: NabProfile = NabProfile {
        tp: 1.0,
        fp: 0.11,
        fn_: 1.0,
    };
    pub const LOW_FP: NabProfile = NabProfile {
        tp: 1.0,
        fp: 0.22,
        fn_: 1.0,
    };
    pub const LOW_FN: NabProfile = NabProfile {
        tp: 1.0,
        fp: 0.11,
        fn_: 2.0,
    };

    pub fn named(name: &str) -> Option<NabProfile> {
        match name {
            "standard" => Some(Self::STANDARD),
            "low-fp" | "reward_low_FP_rate" => Some(Self::LOW_FP),
            "low-fn" | "reward_low_FN_rate" => Some(Self::LOW_FN),
            _ => None,
        }
    }

    pub fn scaled(&self, factor: f64) -> NabProfile {
        NabProfile {
            tp: self.tp * factor,
            fp: self.fp * factor,
            fn_: self.fn_ * factor,
        }
    }
}

/// `2 / (1 + e^(5y)) - 1`: +0.987 at `y = -1`, 0 at the window edge, toward
/// -1 far past it.
pub fn scaled_sigmoid(y: f64) -> f64 {
    2.0 / (1.0 + (5.0 * y).exp()) - 1.0
}

/// True-positive credit for relative position `y ∈ [-1, 0]`, normalized so
/// the first point of a window earns exactly 1.
pub fn tp_credit(y: f64) -> f64 {
    scaled_sigmoid(y) / scaled_sigmoid(-1.0)
}

/// Raw NAB score of sorted `flags` (stream positions).
///
/// The earliest flag inside a window earns `tp · tp_credit(y)`; later flags in
/// that window are ignored. A flag outside every window costs
/// `fp · scaled_sigmoid(y)` with `y` its distance past the preceding window's
/// end over that window's span; before the first window the distance counts
/// from the stream start and the span is the first window's (or `⌊0.1·T⌋`
/// without windows). Each window without a flag costs `fn`.
pub fn nab_score(flags: &[i64], windows: &[Window], length: usize, profile: &NabProfile) -> f64 {
    debug_assert!(flags.windows(2).all(|w| w[0] <= w[1]));
    let lead_span = windows
        .first()
        .map(Window::span)
        .unwrap_or_else(|| (0.1 * length as f64).floor().max(1.0));
    let mut detected = vec![false; windows.len()];
    let mut score = 0.0;
    for &f in flags {
        // index of the first window ending at or after f
        let i = windows.partition_point(|w| w.end < f);
        if let Some(w) = windows.get(i).filter(|w| w.contains(f)) {
            if !detected[i] {
                detected[i] = true;
                let y = (f - w.end) as f64 / w.span();
                score += profile.tp * tp_credit(y);
            }
            continue;
        }
        let y = match i.checked_sub(1).map(|j| &windows[j]) {
            Some(prev) => (f - prev.end) as f64 / prev.span(),
            None => f as f64 / lead_span,
        };
        score += profile.fp * scaled_sigmoid(y);
    }
    let missed = detected.iter().filter(|d| !**d).count();
    score - profile.fn_ * missed as f64
}

/// `(raw - null) / (perfect - null)`; `None` without windows.
pub fn normalize_nab(raw: f64, windows: usize, profile: &NabProfile) -> Option<f64> {
    if windows == 0 {
        return None;
    }
    let perfect = windows as f64 * profile.tp;
    let null = -(windows as f64) * profile.fn_.abs();
    Some((raw - null) / (perfect - null))
}

/// Flagged positions of emitted records.
pub fn flagged_timestamps(records: &[ScoreRecord]) -> Vec<i64> {
    records.iter().filter(|r| r.flagged).map(|r| r.timestamp).collect()
}

/// Mean over `own` of the summed differences to every score in `others`,
/// divided by the range of all scores. Zero when the range is empty; `None`
/// when either list is empty.
pub fn relative_performance(own: &[f64], others: &[f64]) -> Option<f64> {
    if own.is_empty() || others.is_empty() {
        return None;
    }
    let (lo, hi) = own
        .iter()
        .chain(others)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let range = hi - lo;
    if range == 0.0 {
        return Some(0.0);
    }
    let total: f64 = own
        .iter()
        .map(|s| others.iter().map(|o| s - o).sum::<f64>() / range)
        .sum();
    Some(total / own.len() as f64)
}

/// Mean of `group1` minus mean of `group2`.
pub fn delta_performance(group1: &[f64], group2: &[f64]) -> Option<f64> {
    Some(mean(group1)? - mean(group2)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clusteredness {
    pub nc: f64,
    pub clustered: bool,
}

/// `nc = ln(σn² / σa²)`; clustered iff `nc > 0`.
pub fn clusteredness(normal_variance: f64, anomaly_variance: f64) -> Option<Clusteredness> {
    if !(normal_variance > 0.0 && anomaly_variance > 0.0) {
        return None;
    }
    let nc = (normal_variance / anomaly_variance).ln();
    Some(Clusteredness {
        nc,
        clustered: nc > 0.0,
    })
}

/// Clusteredness from raw values split by labels (sample variances).
pub fn clusteredness_of(normal: &[f64], anomalous: &[f64]) -> Option<Clusteredness> {
    clusteredness(sample_variance(normal)?, sample_variance(anomalous)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyDiversity {
    /// Mean anomaly score over detectors and anomalies; low means hard.
    pub mean_anomaly_score: Option<f64>,
    /// Population standard deviation of the per-detector metric.
    pub diversity: Option<f64>,
}

impl DifficultyDiversity {
    /// `1 - mean`, read as difficulty.
    pub fn difficulty(&self) -> Option<f64> {
        self.mean_anomaly_score.map(|m| 1.0 - m)
    }
}

/// `anomaly_scores[d]` holds detector `d`'s scores at the true anomalies;
/// `metrics[d]` its dataset-level metric.
pub fn difficulty_diversity(anomaly_scores: &[Vec<f64>], metrics: &[f64]) -> DifficultyDiversity {
    let flat: Vec<f64> = anomaly_scores.iter().flatten().copied().collect();
    DifficultyDiversity {
        mean_anomaly_score: mean(&flat),
        diversity: if metrics.len() >= 2 {
            population_std(metrics)
        } else {
            None
        },
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn population_std(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / values.len() as f64).sqrt())
}

/// Unbiased sample variance; `None` below two values.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some(ss / (values.len() - 1) as f64)
}
