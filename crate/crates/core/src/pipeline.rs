//! Detector assembly and the per-point loop.
//!
//! Stream positions are 1-based. Positions `1..=p` form the probationary
//! period: features feed the learning strategy and nothing is emitted. At
//! `t = p` the leave-one-out scores of the group seed the scorer. Every later
//! position yields one [`ScoreRecord`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{GroupUpdate, ReferenceGroup, Strategy, StrategyKind};
use crate::nonconformity::{MeasureConfig, MeasureKind, NonconformityMeasure};
use crate::representation::{FeatureVector, Representation, RepresentationConfig};
use crate::scalar::Scalar;
use crate::scoring::Scorer;

pub const DEFAULT_PROBATIONARY_FRACTION: f64 = 0.15;
pub const DEFAULT_DECAY: f64 = 0.96;
pub const DEFAULT_THRESHOLD: f64 = 0.9;
pub const DEFAULT_TEST_PERIOD: usize = 1;
/// Default K-S window. Short windows keep consecutive significances from
/// being near-duplicates, so the unifier's running moments settle quickly.
pub const DEFAULT_KS_WINDOW: usize = 30;
pub const DEFAULT_MEANSTD_WINDOW: usize = 10;
pub const DEFAULT_SAX_WINDOW: usize = 16;
pub const DEFAULT_SAX_SEGMENTS: usize = 4;
pub const DEFAULT_SAX_ALPHABET: usize = 4;

/// One raw observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamPoint<F> {
    pub timestamp: i64,
    pub value: F,
}

impl<F> StreamPoint<F> {
    pub fn new(timestamp: i64, value: F) -> Self {
        Self { timestamp, value }
    }
}

/// How reference nonconformity scores are refreshed after each update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Maintenance {
    /// Read the caches maintained by the measure's index.
    #[default]
    Incremental,
    /// Recompute every leave-one-out score from scratch.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Group size `w`; defaults to the probationary length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default = "default_decay")]
    pub decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    #[serde(default = "default_ks_window")]
    pub ks_window: usize,
    #[serde(default = "default_test_period")]
    pub test_period: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            ks_window: DEFAULT_KS_WINDOW,
            test_period: DEFAULT_TEST_PERIOD,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbationConfig {
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Absolute length; overrides `fraction` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl Default for ProbationConfig {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_PROBATIONARY_FRACTION,
            points: None,
        }
    }
}

fn default_decay() -> f64 {
    DEFAULT_DECAY
}

fn default_ks_window() -> usize {
    DEFAULT_KS_WINDOW
}

fn default_test_period() -> usize {
    DEFAULT_TEST_PERIOD
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_fraction() -> f64 {
    DEFAULT_PROBATIONARY_FRACTION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub representation: RepresentationConfig,
    pub strategy: StrategyConfig,
    pub measure: MeasureConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub probation: ProbationConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub maintenance: Maintenance,
}

/// Parameters fixed once the stream length is known.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub probation_end: u64,
    pub window: usize,
}

impl DetectorConfig {
    /// Configuration of a grid entry with default parameters.
    pub fn for_spec(spec: DetectorSpec) -> Self {
        let representation = if spec.measure.needs_symbolic() {
            RepresentationConfig::Sax {
                window: DEFAULT_SAX_WINDOW,
                segments: DEFAULT_SAX_SEGMENTS,
                alphabet: DEFAULT_SAX_ALPHABET,
            }
        } else {
            RepresentationConfig::MeanStd {
                window: DEFAULT_MEANSTD_WINDOW,
            }
        };
        Self {
            representation,
            strategy: StrategyConfig {
                kind: spec.strategy,
                window: None,
                decay: DEFAULT_DECAY,
            },
            measure: spec.measure.default_config(),
            scoring: ScoringConfig::default(),
            probation: ProbationConfig::default(),
            seed: 0,
            maintenance: Maintenance::Incremental,
        }
    }

    pub fn spec(&self) -> DetectorSpec {
        DetectorSpec {
            strategy: self.strategy.kind,
            measure: self.measure.kind(),
        }
    }

    /// Checks that do not depend on the stream length.
    pub fn validate(&self) -> Result<()> {
        self.representation.validate()?;
        self.measure.validate()?;
        let kind = self.measure.kind();
        if kind.needs_symbolic() != self.representation.is_symbolic() {
            return Err(Error::IncompatibleRepresentation {
                measure: kind.code(),
                required: if kind.needs_symbolic() {
                    "symbolic"
                } else {
                    "numeric"
                },
            });
        }
        let f = self.probation.fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config("probation.fraction", "must lie in (0, 1)"));
        }
        if self.probation.points == Some(0) {
            return Err(Error::config("probation.points", "must be at least 1"));
        }
        if self.strategy.window == Some(0) {
            return Err(Error::config("strategy.window", "must be at least 1"));
        }
        let d = self.strategy.decay;
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::config("strategy.decay", "must lie in (0, 1]"));
        }
        if self.scoring.ks_window == 0 {
            return Err(Error::config("scoring.ks_window", "must be at least 1"));
        }
        if self.scoring.test_period == 0 {
            return Err(Error::config("scoring.test_period", "must be at least 1"));
        }
        let th = self.scoring.threshold;
        if !(th > 0.0 && th < 1.0) {
            return Err(Error::config("scoring.threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Resolve `p` and `w` for a stream of `stream_len` points.
    pub fn resolve(&self, stream_len: usize) -> Result<ResolvedParams> {
        self.validate()?;
        let p = match self.probation.points {
            Some(p) => p,
            None => (self.probation.fraction * stream_len as f64).floor() as usize,
        };
        if p == 0 {
            return Err(Error::config(
                "probation",
                format!("probationary period is empty for a stream of {stream_len} points"),
            ));
        }
        let window = self.strategy.window.unwrap_or(p);
        let n = self.representation.window();
        let features = (p + 1).saturating_sub(n);
        let group = match self.strategy.kind {
            StrategyKind::Fixed | StrategyKind::Landmark => features,
            _ => features.min(window),
        };
        let need = self.measure.min_group();
        if group < need {
            return Err(Error::config(
                "probation",
                format!(
                    "the reference group holds {group} features at the end of probation \
                     (p = {p}, representation window {n}, w = {window}); {} needs {need}",
                    self.measure.kind()
                ),
            ));
        }
        Ok(ResolvedParams {
            probation_end: p as u64,
            window,
        })
    }
}

/// Per-point output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub timestamp: i64,
    pub nonconformity: f64,
    pub p_value: f64,
    pub ks_significance: f64,
    pub final_score: f64,
    pub flagged: bool,
}

/// One assembled detector.
#[derive(Debug)]
pub struct Detector<F: Scalar> {
    config: DetectorConfig,
    params: ResolvedParams,
    representation: Representation<F>,
    strategy: Strategy,
    group: ReferenceGroup<F>,
    measure: Box<dyn NonconformityMeasure<F>>,
    scorer: Scorer,
    reference_scores: Vec<F>,
    t: u64,
    last_timestamp: Option<i64>,
    last_weight: Option<f64>,
}

/// Assemble a detector for a stream of `stream_len` points.
pub fn build_detector<F: Scalar>(config: &DetectorConfig, stream_len: usize) -> Result<Detector<F>> {
    Detector::new(config.clone(), stream_len)
}

impl<F: Scalar> Detector<F> {
    pub fn new(config: DetectorConfig, stream_len: usize) -> Result<Self> {
        let params = config.resolve(stream_len)?;
        let strategy = Strategy::new(
            config.strategy.kind,
            params.window,
            params.probation_end,
            config.strategy.decay,
            config.seed,
        )?;
        let group = strategy.new_group();
        // independent stream for k-means seeding
        let measure = config.measure.build(config.seed ^ 0x9e37_79b9_7f4a_7c15)?;
        Ok(Self {
            representation: Representation::new(config.representation.clone())?,
            scorer: Scorer::new(config.scoring.ks_window, config.scoring.test_period)?,
            strategy,
            group,
            measure,
            reference_scores: Vec::new(),
            t: 0,
            last_timestamp: None,
            last_weight: None,
            params,
            config,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn params(&self) -> ResolvedParams {
        self.params
    }

    pub fn name(&self) -> String {
        self.config.spec().to_string()
    }

    /// Points consumed so far.
    pub fn position(&self) -> u64 {
        self.t
    }

    pub fn in_probation(&self) -> bool {
        self.t < self.params.probation_end
    }

    pub fn group(&self) -> &ReferenceGroup<F> {
        &self.group
    }

    pub fn measure(&self) -> &dyn NonconformityMeasure<F> {
        self.measure.as_ref()
    }

    pub fn reference_scores(&self) -> &[F] {
        &self.reference_scores
    }

    pub fn scorer(&self) -> &Scorer {
        &self.scorer
    }

    /// Weight the anomaly-aware reservoir gave the last offered feature.
    pub fn last_weight(&self) -> Option<f64> {
        self.last_weight
    }

    /// Retained items: group members, p-values and raw buffer.
    pub fn memory_footprint(&self) -> usize {
        self.group.len()
            + self.measure.len()
            + self.reference_scores.len()
            + self.scorer.window().len()
            + self.representation.buffered()
    }

    pub fn process_point(&mut self, point: StreamPoint<F>) -> Result<Option<ScoreRecord>> {
        if let Some(previous) = self.last_timestamp {
            if point.timestamp <= previous {
                return Err(Error::NonMonotoneTimestamp {
                    previous,
                    got: point.timestamp,
                });
            }
        }
        if !point.value.is_finite() {
            return Err(Error::NonFinite {
                timestamp: point.timestamp,
            });
        }
        self.last_timestamp = Some(point.timestamp);
        self.t += 1;
        let t = self.t;
        let feature = self.representation.push(point.value);
        let p = self.params.probation_end;

        if t <= p {
            if let Some(x) = feature {
                let update = self.strategy.update(&mut self.group, x.clone(), t, 0.0)?;
                self.apply(update, x)?;
            }
            if t == p {
                self.measure.refresh()?;
                self.refresh_reference_scores()?;
                self.scorer.bootstrap(&self.reference_scores)?;
            }
            return Ok(None);
        }

        let x = feature.ok_or_else(|| {
            Error::Contract("representation buffer not full after probation".into())
        })?;
        let a = self.measure.score(&x)?;
        let step = self.scorer.step(a, &self.reference_scores)?;
        let update = self
            .strategy
            .update(&mut self.group, x.clone(), t, step.final_score)?;
        self.apply(update, x)?;
        self.measure.refresh()?;
        self.refresh_reference_scores()?;
        Ok(Some(ScoreRecord {
            timestamp: point.timestamp,
            nonconformity: a.as_f64(),
            p_value: step.p_value,
            ks_significance: step.significance,
            final_score: step.final_score,
            flagged: step.final_score >= self.config.scoring.threshold,
        }))
    }

    fn apply(&mut self, update: GroupUpdate<F>, x: FeatureVector<F>) -> Result<()> {
        self.last_weight = update.weight;
        if let Some(evicted) = update.evicted {
            self.measure.remove(evicted.arrival)?;
        }
        if let Some(id) = update.admitted {
            self.measure.insert(id, &x)?;
        }
        Ok(())
    }

    fn refresh_reference_scores(&mut self) -> Result<()> {
        self.reference_scores = match self.config.maintenance {
            Maintenance::Incremental => self.measure.reference_scores()?,
            Maintenance::Exact => self.measure.reference_scores_exact()?,
        };
        Ok(())
    }
}

/// Fold [`Detector::process_point`] over `points`, attaching the timestamp
/// to any error.
pub fn run_stream<F: Scalar>(
    detector: &mut Detector<F>,
    points: impl IntoIterator<Item = StreamPoint<F>>,
) -> Result<Vec<ScoreRecord>> {
    let mut records = Vec::new();
    for point in points {
        match detector.process_point(point) {
            Ok(Some(r)) => records.push(r),
            Ok(None) => {}
            Err(e) => {
                return Err(Error::AtTimestamp {
                    timestamp: point.timestamp,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(records)
}

/// A (strategy, measure) pair of the detector grid, named like `SW-NN`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectorSpec {
    pub strategy: StrategyKind,
    pub measure: MeasureKind,
}

impl DetectorSpec {
    pub fn new(strategy: StrategyKind, measure: MeasureKind) -> Self {
        Self { strategy, measure }
    }

    /// All 20 combinations, strategies outermost.
    pub fn all() -> Vec<DetectorSpec> {
        StrategyKind::ALL
            .into_iter()
            .flat_map(|s| MeasureKind::ALL.into_iter().map(move |m| DetectorSpec::new(s, m)))
            .collect()
    }

    pub fn config(self) -> DetectorConfig {
        DetectorConfig::for_spec(self)
    }
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.strategy, self.measure)
    }
}

impl FromStr for DetectorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (strategy, measure) = s
            .split_once('-')
            .ok_or_else(|| Error::config("detector", format!("`{s}` is not STRATEGY-MEASURE")))?;
        Ok(Self::new(strategy.parse()?, measure.parse()?))
    }
}

impl Serialize for DetectorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DetectorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(values: impl IntoIterator<Item = f64>) -> Vec<StreamPoint<f64>> {
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| StreamPoint::new(i as i64 + 1, v))
            .collect()
    }

    fn wave(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.37).sin() + 0.01 * (i % 7) as f64).collect()
    }

    #[test]
    fn grid_has_twenty_valid_entries() {
        let all = DetectorSpec::all();
        assert_eq!(all.len(), 20);
        for spec in all {
            let c = spec.config();
            c.validate().unwrap();
            assert_eq!(spec.to_string().parse::<DetectorSpec>().unwrap(), spec);
            Detector::<f64>::new(c, 1000).unwrap();
        }
    }

    #[test]
    fn pairing_rule() {
        let ok = "ARES-FREQ".parse::<DetectorSpec>().unwrap().config();
        assert!(ok.representation.is_symbolic());
        ok.validate().unwrap();
        "FR-NN".parse::<DetectorSpec>().unwrap().config().validate().unwrap();

        let mut bad = "SW-NN".parse::<DetectorSpec>().unwrap().config();
        bad.measure = MeasureConfig::Frequency;
        assert!(matches!(
            bad.validate(),
            Err(Error::IncompatibleRepresentation { measure: "FREQ", .. })
        ));
    }

    #[test]
    fn invalid_fields_are_named() {
        let base = "SW-NN".parse::<DetectorSpec>().unwrap().config();
        let cases: Vec<(DetectorConfig, &str)> = vec![
            ({ let mut c = base.clone(); c.probation.fraction = 1.0; c }, "probation.fraction"),
            ({ let mut c = base.clone(); c.strategy.window = Some(0); c }, "strategy.window"),
            ({ let mut c = base.clone(); c.strategy.decay = 0.0; c }, "strategy.decay"),
            ({ let mut c = base.clone(); c.scoring.threshold = 1.0; c }, "scoring.threshold"),
            ({ let mut c = base.clone(); c.measure = MeasureConfig::Knn { k: 0 }; c }, "measure.k"),
        ];
        for (c, field) in cases {
            match c.validate() {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: {other:?}"),
            }
        }
    }

    #[test]
    fn record_count_and_timestamps() {
        let mut c = "SW-NN".parse::<DetectorSpec>().unwrap().config();
        c.probation.points = Some(30);
        let mut d = Detector::<f64>::new(c, 200).unwrap();
        let mut emitted = 0;
        for (i, pt) in points(wave(200)).into_iter().enumerate() {
            let r = d.process_point(pt).unwrap();
            assert_eq!(r.is_some(), i >= 30);
            if let Some(r) = r {
                assert_eq!(r.timestamp, i as i64 + 1);
                emitted += 1;
            }
        }
        assert_eq!(emitted, 170);
    }

    #[test]
    fn short_stream_yields_nothing() {
        let c = "LW-CC".parse::<DetectorSpec>().unwrap().config();
        let mut d = Detector::<f64>::new(c, 200).unwrap();
        assert!(run_stream(&mut d, points(wave(30))).unwrap().is_empty());
    }

    #[test]
    fn fold_equals_point_by_point() {
        let c = "URES-DEN".parse::<DetectorSpec>().unwrap().config();
        let data = points(wave(400));
        let mut a = Detector::<f64>::new(c.clone(), 400).unwrap();
        let folded = run_stream(&mut a, data.clone()).unwrap();
        let mut b = Detector::<f64>::new(c, 400).unwrap();
        let stepped: Vec<_> = data
            .into_iter()
            .filter_map(|p| b.process_point(p).unwrap())
            .collect();
        assert_eq!(folded, stepped);
    }

    #[test]
    fn constant_stream_never_flags() {
        for spec in ["SW-NN", "ARES-CC", "URES-DEN", "LW-FREQ"] {
            let c = spec.parse::<DetectorSpec>().unwrap().config();
            let mut d = Detector::<f64>::new(c, 1000).unwrap();
            let records = run_stream(&mut d, points(vec![3.5; 1000])).unwrap();
            assert_eq!(records.len(), 850);
            assert!(records.iter().all(|r| !r.flagged && r.final_score < 0.9), "{spec}");
        }
    }

    #[test]
    fn rejects_bad_points() {
        let c = "SW-NN".parse::<DetectorSpec>().unwrap().config();
        let mut d = Detector::<f64>::new(c, 100).unwrap();
        d.process_point(StreamPoint::new(5, 1.0)).unwrap();
        assert!(matches!(
            d.process_point(StreamPoint::new(5, 1.0)),
            Err(Error::NonMonotoneTimestamp { previous: 5, got: 5 })
        ));
        assert!(matches!(
            d.process_point(StreamPoint::new(6, f64::NAN)),
            Err(Error::NonFinite { timestamp: 6 })
        ));
        let mut d = Detector::<f64>::new("SW-NN".parse::<DetectorSpec>().unwrap().config(), 100).unwrap();
        let err = run_stream(&mut d, vec![StreamPoint::new(1, 0.0), StreamPoint::new(2, f64::INFINITY)])
            .unwrap_err();
        assert!(matches!(err, Error::AtTimestamp { timestamp: 2, .. }));
    }

    #[test]
    fn probation_too_short_for_measure() {
        let mut c = "SW-DEN".parse::<DetectorSpec>().unwrap().config();
        c.probation.points = Some(12);
        assert!(matches!(
            Detector::<f64>::new(c, 1000),
            Err(Error::Config { field: "probation", .. })
        ));
    }

    #[test]
    fn ares_weight_matches_emitted_score() {
        let c = "ARES-NN".parse::<DetectorSpec>().unwrap().config();
        let mut d = Detector::<f64>::new(c, 600).unwrap();
        let mut data = wave(600);
        data[400] += 8.0;
        for pt in points(data) {
            if let Some(r) = d.process_point(pt).unwrap() {
                let w = d.last_weight().unwrap();
                assert_eq!(w, (-DEFAULT_DECAY * r.final_score).exp());
            } else {
                assert_eq!(d.last_weight().unwrap_or(1.0), 1.0);
            }
        }
    }
}
