//! Reference-group maintenance: fixed reference, landmark window, sliding
//! window, uniform reservoir and anomaly-aware reservoir.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::representation::FeatureVector;
use crate::scalar::Scalar;

/// One member of the reference group.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceEntry<F> {
    pub feature: FeatureVector<F>,
    pub arrival: u64,
    /// Sampling priority; present only for reservoir strategies.
    pub priority: Option<f64>,
}

/// Entries ordered by arrival time (oldest first).
#[derive(Clone, Debug)]
pub struct ReferenceGroup<F> {
    entries: VecDeque<ReferenceEntry<F>>,
    capacity: Option<usize>,
}

impl<F: Scalar> ReferenceGroup<F> {
    /// `capacity = None` means unbounded (landmark window).
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &ReferenceEntry<F>> + '_ {
        self.entries.iter()
    }

    pub fn arrivals(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.arrival).collect()
    }

    fn push(&mut self, entry: ReferenceEntry<F>) {
        debug_assert!(self.entries.back().is_none_or(|e| e.arrival < entry.arrival));
        self.entries.push_back(entry);
    }

    fn remove_at(&mut self, index: usize) -> ReferenceEntry<F> {
        self.entries.remove(index).expect("index in bounds")
    }
}

/// What an update did to the group; consumed by nonconformity indices.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupUpdate<F> {
    /// Arrival time of the admitted feature, if it was admitted.
    pub admitted: Option<u64>,
    pub evicted: Option<ReferenceEntry<F>>,
    /// Weight applied to the incoming sample (anomaly-aware reservoir only).
    pub weight: Option<f64>,
}

impl<F> GroupUpdate<F> {
    fn unchanged() -> Self {
        Self {
            admitted: None,
            evicted: None,
            weight: None,
        }
    }

    fn admitted(t: u64) -> Self {
        Self {
            admitted: Some(t),
            evicted: None,
            weight: None,
        }
    }
}

/// Fixed reference: admit while `t <= p`.
pub fn fr_update<F: Scalar>(
    group: &mut ReferenceGroup<F>,
    x: FeatureVector<F>,
    t: u64,
    probation_end: u64,
) -> GroupUpdate<F> {
    if t > probation_end {
        return GroupUpdate::unchanged();
    }
    group.push(ReferenceEntry {
        feature: x,
        arrival: t,
        priority: None,
    });
    GroupUpdate::admitted(t)
}

/// Landmark window: admit everything after the landmark, never evict.
pub fn lw_update<F: Scalar>(
    group: &mut ReferenceGroup<F>,
    x: FeatureVector<F>,
    t: u64,
    landmark: u64,
) -> GroupUpdate<F> {
    if t <= landmark {
        return GroupUpdate::unchanged();
    }
    group.push(ReferenceEntry {
        feature: x,
        arrival: t,
        priority: None,
    });
    GroupUpdate::admitted(t)
}

/// Sliding window of the `w` most recent features.
pub fn sw_update<F: Scalar>(
    group: &mut ReferenceGroup<F>,
    x: FeatureVector<F>,
    t: u64,
    w: usize,
) -> GroupUpdate<F> {
    let evicted = if group.len() >= w {
        Some(group.remove_at(0))
    } else {
        None
    };
    group.push(ReferenceEntry {
        feature: x,
        arrival: t,
        priority: None,
    });
    GroupUpdate {
        admitted: Some(t),
        evicted,
        weight: None,
    }
}

/// Classic reservoir sampling. `t` is the 1-based count of features offered.
pub fn ures_update<F: Scalar, R: Rng + ?Sized>(
    group: &mut ReferenceGroup<F>,
    x: FeatureVector<F>,
    t: u64,
    w: usize,
    rng: &mut R,
) -> GroupUpdate<F> {
    reservoir_step(group, x, t, t, w, rng)
}

/// Reservoir step where the entry key (`arrival`) may differ from the number
/// of items offered so far (`offered`).
fn reservoir_step<F: Scalar, R: Rng + ?Sized>(
    group: &mut ReferenceGroup<F>,
    x: FeatureVector<F>,
    arrival: u64,
    offered: u64,
    w: usize,
    rng: &mut R,
) -> GroupUpdate<F> {
    let u: f64 = Open01.sample(rng);
    let entry = ReferenceEntry {
        feature: x,
        arrival,
        priority: Some(u),
    };
    if offered <= w as u64 && group.len() < w {
        group.push(entry);
        return GroupUpdate::admitted(arrival);
    }
    if u < w as f64 / offered as f64 {
        let victim = rng.random_range(0..group.len());
        let evicted = group.remove_at(victim);
        group.push(entry);
        GroupUpdate {
            admitted: Some(arrival),
            evicted: Some(evicted),
            weight: None,
        }
    } else {
        GroupUpdate::unchanged()
    }
}

/// Sampling weight `exp(-decay * score)`.
pub fn ares_weight(score: f64, decay: f64) -> Result<f64> {
    if !(score >= 0.0) {
        return Err(Error::Contract(format!(
            "anomaly score must be non-negative, got {score}"
        )));
    }
    Ok((-decay * score).exp())
}

/// Anomaly-aware reservoir step.
///
/// The incoming sample gets priority `u^(1/weight)`. While the reservoir is
/// filling it is always admitted; afterwards it replaces the *oldest* entry
/// whose priority is strictly below its own, if any.
pub fn ares_update<F: Scalar, R: Rng + ?Sized>(
    group: &mut ReferenceGroup<F>,
    x: FeatureVector<F>,
    t: u64,
    score: f64,
    w: usize,
    decay: f64,
    rng: &mut R,
) -> Result<GroupUpdate<F>> {
    let weight = ares_weight(score, decay)?;
    let u: f64 = Open01.sample(rng);
    let priority = u.powf(1.0 / weight);
    Ok(ares_admit(group, x, t, priority, w, weight))
}

/// Admission rule of the anomaly-aware reservoir for a given priority.
pub fn ares_admit<F: Scalar>(
    group: &mut ReferenceGroup<F>,
    x: FeatureVector<F>,
    t: u64,
    priority: f64,
    w: usize,
    weight: f64,
) -> GroupUpdate<F> {
    let entry = ReferenceEntry {
        feature: x,
        arrival: t,
        priority: Some(priority),
    };
    if group.len() < w {
        group.push(entry);
        return GroupUpdate {
            admitted: Some(t),
            evicted: None,
            weight: Some(weight),
        };
    }
    // entries are arrival-ordered, so the first candidate is the oldest one
    let oldest = group
        .entries
        .iter()
        .position(|e| e.priority.unwrap_or(0.0) < priority);
    match oldest {
        Some(i) => {
            let evicted = group.remove_at(i);
            group.push(entry);
            GroupUpdate {
                admitted: Some(t),
                evicted: Some(evicted),
                weight: Some(weight),
            }
        }
        None => GroupUpdate {
            admitted: None,
            evicted: None,
            weight: Some(weight),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "FR")]
    Fixed,
    #[serde(rename = "LW")]
    Landmark,
    #[serde(rename = "SW")]
    Sliding,
    #[serde(rename = "URES")]
    UniformReservoir,
    #[serde(rename = "ARES")]
    AnomalyAware,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Fixed,
        StrategyKind::Landmark,
        StrategyKind::Sliding,
        StrategyKind::UniformReservoir,
        StrategyKind::AnomalyAware,
    ];

    pub fn code(self) -> &'static str {
        match self {
            StrategyKind::Fixed => "FR",
            StrategyKind::Landmark => "LW",
            StrategyKind::Sliding => "SW",
            StrategyKind::UniformReservoir => "URES",
            StrategyKind::AnomalyAware => "ARES",
        }
    }

    /// Whether the group is bounded by the window size `w`.
    pub fn is_bounded(self) -> bool {
        !matches!(self, StrategyKind::Landmark)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("strategy", format!("unknown strategy `{s}`")))
    }
}

/// A learning strategy instance with its own RNG.
#[derive(Clone, Debug)]
pub struct Strategy {
    kind: StrategyKind,
    window: usize,
    probation_end: u64,
    landmark: u64,
    decay: f64,
    offered: u64,
    rng: ChaCha8Rng,
}

impl Strategy {
    pub fn new(kind: StrategyKind, window: usize, probation_end: u64, decay: f64, seed: u64) -> Result<Self> {
        if window == 0 {
            return Err(Error::config("strategy.window", "must be at least 1"));
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::config("strategy.decay", "must lie in (0, 1]"));
        }
        Ok(Self {
            kind,
            window,
            probation_end,
            landmark: 0,
            decay,
            offered: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn new_group<F: Scalar>(&self) -> ReferenceGroup<F> {
        ReferenceGroup::new(self.kind.is_bounded().then_some(self.window))
    }

    /// Offer `x` observed at stream position `t`. `score` is the final anomaly
    /// score emitted for `x` (0 during probation); only ARES uses it.
    pub fn update<F: Scalar>(
        &mut self,
        group: &mut ReferenceGroup<F>,
        x: FeatureVector<F>,
        t: u64,
        score: f64,
    ) -> Result<GroupUpdate<F>> {
        self.offered += 1;
        Ok(match self.kind {
            StrategyKind::Fixed => fr_update(group, x, t, self.probation_end),
            StrategyKind::Landmark => lw_update(group, x, t, self.landmark),
            StrategyKind::Sliding => sw_update(group, x, t, self.window),
            StrategyKind::UniformReservoir => {
                reservoir_step(group, x, t, self.offered, self.window, &mut self.rng)
            }
            StrategyKind::AnomalyAware => {
                ares_update(group, x, t, score, self.window, self.decay, &mut self.rng)?
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(v: f64) -> FeatureVector<f64> {
        FeatureVector::Numeric(vec![v])
    }

    #[test]
    fn fixed_reference_stops_after_probation() {
        let mut g = ReferenceGroup::new(None);
        assert!(fr_update(&mut g, x(1.0), 5, 30).admitted.is_some());
        assert_eq!(g.len(), 1);
        assert!(fr_update(&mut g, x(1.0), 31, 30).admitted.is_none());
        assert_eq!(g.len(), 1);

        let mut g = ReferenceGroup::new(None);
        for t in 1..=200 {
            fr_update(&mut g, x(t as f64), t, 30);
        }
        assert_eq!(g.len(), 30);
    }

    #[test]
    fn landmark_never_evicts() {
        let mut g = ReferenceGroup::new(None);
        for t in 1..=500 {
            let u = lw_update(&mut g, x(0.0), t, 0);
            assert!(u.evicted.is_none());
        }
        assert_eq!(g.len(), 500);
        let mut g = ReferenceGroup::new(None);
        assert!(lw_update(&mut g, x(0.0), 3, 5).admitted.is_none());
        assert!(g.is_empty());
    }

    #[test]
    fn sliding_window_keeps_most_recent() {
        let mut g = ReferenceGroup::new(Some(3));
        for t in 1..=5 {
            let u = sw_update(&mut g, x(t as f64), t, 3);
            assert!(g.len() <= 3);
            if t <= 3 {
                assert!(u.evicted.is_none());
            } else {
                assert_eq!(u.evicted.unwrap().arrival, t - 3);
            }
        }
        assert_eq!(g.arrivals(), vec![3, 4, 5]);
    }

    #[test]
    fn reservoir_fills_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = ReferenceGroup::new(Some(10));
        for t in 1..=10 {
            assert_eq!(ures_update(&mut g, x(0.0), t, 10, &mut rng).admitted, Some(t));
        }
        assert_eq!(g.len(), 10);
    }

    #[test]
    fn ares_weight_examples() {
        assert_eq!(ares_weight(0.0, 0.96).unwrap(), 1.0);
        assert!((ares_weight(5.0, 0.96).unwrap() - 0.0082297).abs() < 1e-7);
        assert!((ares_weight(10.0, 0.96).unwrap() - 6.7729e-5).abs() < 1e-9);
        assert!(ares_weight(-1.0, 0.96).is_err());
    }

    #[test]
    fn ares_evicts_oldest_candidate() {
        let mut g = ReferenceGroup::new(Some(3));
        for (t, p) in [(3u64, 0.2), (5, 0.9), (7, 0.5)] {
            ares_admit(&mut g, x(0.0), t, p, 3, 1.0);
        }
        let u = ares_admit(&mut g, x(0.0), 9, 0.6, 3, 1.0);
        assert_eq!(u.evicted.unwrap().arrival, 3);
        assert_eq!(g.arrivals(), vec![5, 7, 9]);
    }

    #[test]
    fn ares_ties_keep_incumbent() {
        let mut g = ReferenceGroup::new(Some(1));
        ares_admit(&mut g, x(0.0), 1, 0.5, 1, 1.0);
        let u = ares_admit(&mut g, x(0.0), 2, 0.5, 1, 1.0);
        assert!(u.admitted.is_none());
        assert_eq!(g.arrivals(), vec![1]);
    }

    #[test]
    fn ares_zero_score_priority_is_uniform_draw() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = a.clone();
        let mut g = ReferenceGroup::new(Some(4));
        ares_update(&mut g, x(0.0), 1, 0.0, 4, 0.96, &mut a).unwrap();
        let u: f64 = Open01.sample(&mut b);
        assert_eq!(g.entries().next().unwrap().priority, Some(u));
    }

    #[test]
    fn strategy_parse_roundtrip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.code().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("XX".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn uniform_strategy_uses_stream_time_as_arrival() {
        let mut s = Strategy::new(StrategyKind::UniformReservoir, 2, 0, 0.96, 3).unwrap();
        let mut g = s.new_group();
        for t in [10u64, 20, 30, 40, 50] {
            s.update(&mut g, x(t as f64), t, 0.0).unwrap();
        }
        assert!(g.arrivals().iter().all(|a| a % 10 == 0));
        let mut sorted = g.arrivals();
        sorted.sort();
        assert_eq!(sorted, g.arrivals());
    }
}
