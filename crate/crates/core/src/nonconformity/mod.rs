//! Nonconformity measures `a_t = A(x_t, R_t)`.
//!
//! Each measure owns an index mirroring the reference group. The pipeline
//! forwards every admission and eviction, then asks for the score of the
//! incoming feature and for the reference score of every member.

mod cluster;
mod frequency;
mod neighbors;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cluster::{
    cc_score, kmeans_seeds, lloyd, nearest_centroid, ClusterModel, KMeans, DEFAULT_MAX_ITERATIONS,
};
pub use frequency::{freq_score, FrequencyTable};
pub use neighbors::{knn_score, lof_score, Affected, NeighborIndex, ReachDistance, REACH_FLOOR};

use crate::error::{Error, Result};
use crate::representation::FeatureVector;
use crate::scalar::Scalar;

pub const DEFAULT_CLUSTERS: usize = 5;
pub const DEFAULT_EPSILON: f64 = 0.25;
pub const DEFAULT_NEIGHBORS: usize = 5;

/// A nonconformity measure backed by an index over the reference group.
pub trait NonconformityMeasure<F: Scalar>: Send + fmt::Debug {
    fn kind(&self) -> MeasureKind;

    fn insert(&mut self, id: u64, feature: &FeatureVector<F>) -> Result<()>;

    fn remove(&mut self, id: u64) -> Result<()>;

    /// Settle derived state after a batch of inserts and removes.
    fn refresh(&mut self) -> Result<()> {
        Ok(())
    }

    /// Nonconformity of a feature that is not a member.
    fn score(&self, x: &FeatureVector<F>) -> Result<F>;

    /// Leave-one-out score of each member from the maintained caches,
    /// ascending id order.
    fn reference_scores(&self) -> Result<Vec<F>>;

    /// Same scores recomputed from scratch.
    fn reference_scores_exact(&self) -> Result<Vec<F>>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    #[serde(rename = "NN")]
    Knn,
    #[serde(rename = "DEN")]
    Density,
    #[serde(rename = "CC")]
    Cluster,
    #[serde(rename = "FREQ")]
    Frequency,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 4] = [
        MeasureKind::Knn,
        MeasureKind::Density,
        MeasureKind::Cluster,
        MeasureKind::Frequency,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MeasureKind::Knn => "NN",
            MeasureKind::Density => "DEN",
            MeasureKind::Cluster => "CC",
            MeasureKind::Frequency => "FREQ",
        }
    }

    pub fn needs_symbolic(self) -> bool {
        matches!(self, MeasureKind::Frequency)
    }

    /// Configuration with the default parameters for this measure.
    pub fn default_config(self) -> MeasureConfig {
        match self {
            MeasureKind::Knn => MeasureConfig::Knn {
                k: DEFAULT_NEIGHBORS,
            },
            MeasureKind::Density => MeasureConfig::Lof {
                k: DEFAULT_NEIGHBORS,
                reach: ReachDistance::Standard,
            },
            MeasureKind::Cluster => MeasureConfig::Cluster {
                k: DEFAULT_CLUSTERS,
                epsilon: DEFAULT_EPSILON,
            },
            MeasureKind::Frequency => MeasureConfig::Frequency,
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("measure", format!("unknown measure `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum MeasureConfig {
    /// Average distance to the `k` nearest members.
    #[serde(rename = "NN")]
    Knn { k: usize },
    /// Local outlier factor with `k` neighbors.
    #[serde(rename = "DEN")]
    Lof {
        k: usize,
        #[serde(default)]
        reach: ReachDistance,
    },
    /// Distance to the nearest of `k` incremental k-means centroids.
    #[serde(rename = "CC")]
    Cluster { k: usize, epsilon: f64 },
    /// Inverse SAX-word frequency.
    #[serde(rename = "FREQ")]
    Frequency,
}

impl MeasureConfig {
    pub fn kind(&self) -> MeasureKind {
        match self {
            MeasureConfig::Knn { .. } => MeasureKind::Knn,
            MeasureConfig::Lof { .. } => MeasureKind::Density,
            MeasureConfig::Cluster { .. } => MeasureKind::Cluster,
            MeasureConfig::Frequency => MeasureKind::Frequency,
        }
    }

    /// Smallest reference group for which leave-one-out scores are defined.
    pub fn min_group(&self) -> usize {
        match *self {
            MeasureConfig::Knn { k } | MeasureConfig::Lof { k, .. } => k + 1,
            MeasureConfig::Cluster { .. } | MeasureConfig::Frequency => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MeasureConfig::Knn { k } | MeasureConfig::Lof { k, .. } | MeasureConfig::Cluster { k, .. } => {
                if k == 0 {
                    return Err(Error::config("measure.k", "must be at least 1"));
                }
            }
            MeasureConfig::Frequency => {}
        }
        if let MeasureConfig::Cluster { epsilon, .. } = *self {
            if !(epsilon > 0.0) || !epsilon.is_finite() {
                return Err(Error::config("measure.epsilon", "must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn build<F: Scalar>(&self, seed: u64) -> Result<Box<dyn NonconformityMeasure<F>>> {
        self.validate()?;
        Ok(match *self {
            MeasureConfig::Knn { k } => Box::new(KnnMeasure(NeighborIndex::new(k)?)),
            MeasureConfig::Lof { k, reach } => {
                Box::new(LofMeasure(NeighborIndex::with_density(k, reach)?))
            }
            MeasureConfig::Cluster { k, epsilon } => Box::new(ClusterModel::new(k, epsilon, seed)?),
            MeasureConfig::Frequency => Box::new(FrequencyTable::new()),
        })
    }
}

fn numeric<F: Scalar>(kind: MeasureKind, x: &FeatureVector<F>) -> Result<&[F]> {
    x.as_numeric().ok_or(Error::IncompatibleRepresentation {
        measure: kind.code(),
        required: "numeric",
    })
}

fn symbolic<F: Scalar>(x: &FeatureVector<F>) -> Result<&crate::representation::SaxWord> {
    x.as_symbolic().ok_or(Error::IncompatibleRepresentation {
        measure: "FREQ",
        required: "symbolic",
    })
}

/// Average k-NN distance.
#[derive(Clone, Debug)]
pub struct KnnMeasure<F>(pub NeighborIndex<F>);

impl<F: Scalar> NonconformityMeasure<F> for KnnMeasure<F> {
    fn kind(&self) -> MeasureKind {
        MeasureKind::Knn
    }

    fn insert(&mut self, id: u64, feature: &FeatureVector<F>) -> Result<()> {
        let p = numeric(MeasureKind::Knn, feature)?.to_vec();
        self.0.insert(id, p).map(drop)
    }

    fn remove(&mut self, id: u64) -> Result<()> {
        self.0.remove(id).map(drop)
    }

    fn score(&self, x: &FeatureVector<F>) -> Result<F> {
        self.0.knn_score(numeric(MeasureKind::Knn, x)?)
    }

    fn reference_scores(&self) -> Result<Vec<F>> {
        self.0.member_knn_scores()
    }

    fn reference_scores_exact(&self) -> Result<Vec<F>> {
        let mut fresh = self.0.clone();
        fresh.rebuild();
        fresh.member_knn_scores()
    }

    fn len(&self) -> usize {
        self.0.len()
    }
}

/// Local outlier factor, maintained incrementally.
#[derive(Clone, Debug)]
pub struct LofMeasure<F>(pub NeighborIndex<F>);

impl<F: Scalar> NonconformityMeasure<F> for LofMeasure<F> {
    fn kind(&self) -> MeasureKind {
        MeasureKind::Density
    }

    fn insert(&mut self, id: u64, feature: &FeatureVector<F>) -> Result<()> {
        let p = numeric(MeasureKind::Density, feature)?.to_vec();
        self.0.insert(id, p).map(drop)
    }

    fn remove(&mut self, id: u64) -> Result<()> {
        self.0.remove(id).map(drop)
    }

    fn score(&self, x: &FeatureVector<F>) -> Result<F> {
        self.0.lof_score(numeric(MeasureKind::Density, x)?)
    }

    fn reference_scores(&self) -> Result<Vec<F>> {
        Ok(self.0.member_lofs())
    }

    fn reference_scores_exact(&self) -> Result<Vec<F>> {
        let mut fresh = self.0.clone();
        fresh.rebuild();
        Ok(fresh.member_lofs())
    }

    fn len(&self) -> usize {
        self.0.len()
    }
}

impl<F: Scalar> NonconformityMeasure<F> for ClusterModel<F> {
    fn kind(&self) -> MeasureKind {
        MeasureKind::Cluster
    }

    fn insert(&mut self, id: u64, feature: &FeatureVector<F>) -> Result<()> {
        let p = numeric(MeasureKind::Cluster, feature)?.to_vec();
        self.add(id, p)
    }

    fn remove(&mut self, id: u64) -> Result<()> {
        ClusterModel::remove(self, id)
    }

    fn refresh(&mut self) -> Result<()> {
        ClusterModel::refresh(self);
        Ok(())
    }

    fn score(&self, x: &FeatureVector<F>) -> Result<F> {
        ClusterModel::score(self, numeric(MeasureKind::Cluster, x)?)
    }

    fn reference_scores(&self) -> Result<Vec<F>> {
        self.member_scores()
    }

    fn reference_scores_exact(&self) -> Result<Vec<F>> {
        let centroids: Vec<Vec<F>> = self
            .centroids()
            .iter()
            .zip(self.counts())
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| c.clone())
            .collect();
        self.points().iter().map(|p| cc_score(p, &centroids)).collect()
    }

    fn len(&self) -> usize {
        ClusterModel::len(self)
    }
}

impl<F: Scalar> NonconformityMeasure<F> for FrequencyTable {
    fn kind(&self) -> MeasureKind {
        MeasureKind::Frequency
    }

    fn insert(&mut self, id: u64, feature: &FeatureVector<F>) -> Result<()> {
        FrequencyTable::insert(self, id, symbolic(feature)?.clone())
    }

    fn remove(&mut self, id: u64) -> Result<()> {
        FrequencyTable::remove(self, id)
    }

    fn score(&self, x: &FeatureVector<F>) -> Result<F> {
        FrequencyTable::score(self, symbolic(x)?)
    }

    fn reference_scores(&self) -> Result<Vec<F>> {
        if self.total() < 2 {
            return Err(Error::DegenerateGroup(
                "frequency reference scores need at least 2 members".into(),
            ));
        }
        Ok(self.member_scores())
    }

    fn reference_scores_exact(&self) -> Result<Vec<F>> {
        let counts = self.recount();
        let total = self.total();
        if total < 2 {
            return Err(Error::DegenerateGroup(
                "frequency reference scores need at least 2 members".into(),
            ));
        }
        // x_i's word seen f - 1 times among the others, at group size |R|
        self.words().map(|w| freq_score(counts[w] - 1, total)).collect()
    }

    fn len(&self) -> usize {
        self.total()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::SaxWord;

    #[test]
    fn pairing_rules() {
        let mut nn = MeasureConfig::Knn { k: 1 }.build::<f64>(0).unwrap();
        let word = FeatureVector::<f64>::Symbolic(SaxWord(vec![0]));
        assert!(matches!(
            nn.insert(1, &word),
            Err(Error::IncompatibleRepresentation { .. })
        ));
        let mut freq = MeasureConfig::Frequency.build::<f64>(0).unwrap();
        assert!(freq.insert(1, &FeatureVector::Numeric(vec![1.0])).is_err());
    }

    #[test]
    fn frequency_reference_scores() {
        let mut m = MeasureConfig::Frequency.build::<f64>(0).unwrap();
        for (i, w) in [vec![0u8], vec![0], vec![1], vec![0]].into_iter().enumerate() {
            m.insert(i as u64, &FeatureVector::Symbolic(SaxWord(w))).unwrap();
        }
        // words a,a,b,a: 4/(2+1) for a, 4/(0+1) for b
        let third = 4.0 / 3.0;
        assert_eq!(m.reference_scores().unwrap(), vec![third, third, 4.0, third]);
        assert_eq!(m.reference_scores_exact().unwrap(), m.reference_scores().unwrap());
    }

    #[test]
    fn measure_codes_roundtrip() {
        for k in MeasureKind::ALL {
            assert_eq!(k.code().parse::<MeasureKind>().unwrap(), k);
            assert_eq!(k.default_config().kind(), k);
        }
    }
}
