//! Incremental k-means: members join the nearest centroid as they arrive and
//! leave symmetrically; a full Lloyd recomputation runs whenever the mean
//! member-to-centroid distance drifts by more than `epsilon` relative to the
//! value measured at the last recomputation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{euclidean, Scalar};

pub const DEFAULT_MAX_ITERATIONS: usize = 100;

/// Result of a batch k-means run.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeans<F> {
    pub centroids: Vec<Vec<F>>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

/// Indices of up to `k` points with pairwise distinct values, in the order of
/// a uniform random shuffle.
pub fn kmeans_seeds<F: Scalar>(points: &[Vec<F>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(rng);
    let mut seeds: Vec<usize> = Vec::with_capacity(k);
    for i in order {
        if seeds.len() == k {
            break;
        }
        if seeds.iter().all(|&s| points[s] != points[i]) {
            seeds.push(i);
        }
    }
    seeds
}

/// Index of the nearest centroid; ties resolve to the lowest index.
pub fn nearest_centroid<F: Scalar>(x: &[F], centroids: &[Vec<F>]) -> (usize, F) {
    let mut best = (0, F::infinity());
    for (i, c) in centroids.iter().enumerate() {
        let d = euclidean(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd iterations from the given seed points until assignments stop
/// changing or `max_iterations` is reached. Empty clusters keep their
/// previous centroid.
pub fn lloyd<F: Scalar>(points: &[Vec<F>], seeds: &[usize], max_iterations: usize) -> KMeans<F> {
    let mut centroids: Vec<Vec<F>> = seeds.iter().map(|&s| points[s].clone()).collect();
    let mut assignment = vec![usize::MAX; points.len()];
    let dim = points.first().map_or(0, Vec::len);
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let mut changed = false;
        for (p, a) in points.iter().zip(assignment.iter_mut()) {
            let (c, _) = nearest_centroid(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![F::zero(); dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s = *s + *v;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                let nf = F::of(n as f64);
                *c = s.into_iter().map(|v| v / nf).collect();
            }
        }
        if !changed {
            break;
        }
    }
    KMeans {
        centroids,
        assignment,
        iterations,
    }
}

#[derive(Clone, Debug)]
struct Member<F> {
    point: Vec<F>,
    cluster: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ClusterModel<F> {
    k: usize,
    epsilon: f64,
    max_iterations: usize,
    members: BTreeMap<u64, Member<F>>,
    centroids: Vec<Vec<F>>,
    sums: Vec<Vec<F>>,
    counts: Vec<usize>,
    baseline: Option<F>,
    recomputations: u64,
    rng: ChaCha8Rng,
}

impl<F: Scalar> ClusterModel<F> {
    pub fn new(k: usize, epsilon: f64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("measure.k", "must be at least 1"));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::config("measure.epsilon", "must be positive and finite"));
        }
        Ok(Self {
            k,
            epsilon,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            members: BTreeMap::new(),
            centroids: Vec::new(),
            sums: Vec::new(),
            counts: Vec::new(),
            baseline: None,
            recomputations: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn centroids(&self) -> &[Vec<F>] {
        &self.centroids
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Number of full Lloyd recomputations run so far.
    pub fn recomputations(&self) -> u64 {
        self.recomputations
    }

    pub fn baseline(&self) -> Option<F> {
        self.baseline
    }

    /// Snapshot of the recompute RNG; lets callers replay the next seeding.
    pub fn rng_state(&self) -> ChaCha8Rng {
        self.rng.clone()
    }

    /// Member points in ascending id order.
    pub fn points(&self) -> Vec<Vec<F>> {
        self.members.values().map(|m| m.point.clone()).collect()
    }

    /// Add a member, assigning it to the nearest current centroid.
    pub fn add(&mut self, id: u64, point: Vec<F>) -> Result<()> {
        if self.members.contains_key(&id) {
            return Err(Error::Consistency(format!("id {id} already clustered")));
        }
        let cluster = if self.centroids.is_empty() {
            None
        } else {
            let (c, _) = nearest_centroid(&point, &self.centroids);
            self.counts[c] += 1;
            for (s, v) in self.sums[c].iter_mut().zip(&point) {
                *s = *s + *v;
            }
            self.refresh_centroid(c);
            Some(c)
        };
        self.members.insert(id, Member { point, cluster });
        Ok(())
    }

    /// Remove a member from its cluster.
    pub fn remove(&mut self, id: u64) -> Result<()> {
        let m = self
            .members
            .remove(&id)
            .ok_or_else(|| Error::Consistency(format!("id {id} is not clustered")))?;
        if let Some(c) = m.cluster {
            self.counts[c] -= 1;
            for (s, v) in self.sums[c].iter_mut().zip(&m.point) {
                *s = *s - *v;
            }
            self.refresh_centroid(c);
        }
        Ok(())
    }

    fn refresh_centroid(&mut self, c: usize) {
        let n = self.counts[c];
        if n > 0 {
            let nf = F::of(n as f64);
            self.centroids[c] = self.sums[c].iter().map(|&s| s / nf).collect();
        }
    }

    /// Mean distance from each assigned member to its centroid.
    pub fn mean_distance(&self) -> F {
        let mut total = F::zero();
        let mut n = 0usize;
        for m in self.members.values() {
            if let Some(c) = m.cluster {
                total = total + euclidean(&m.point, &self.centroids[c]);
                n += 1;
            }
        }
        if n == 0 {
            F::zero()
        } else {
            total / F::of(n as f64)
        }
    }

    /// Whether the drift of the mean distance warrants a full recompute.
    pub fn needs_recompute(&self) -> bool {
        if self.members.is_empty() {
            return false;
        }
        if self.centroids.is_empty() || self.members.values().any(|m| m.cluster.is_none()) {
            return true;
        }
        let Some(base) = self.baseline else {
            return true;
        };
        let current = self.mean_distance();
        let base = base.as_f64();
        let current = current.as_f64();
        if base == 0.0 {
            return current > 0.0;
        }
        (current - base).abs() > self.epsilon * base
    }

    /// Full Lloyd run on the current members; resets the drift baseline.
    pub fn recompute(&mut self) {
        if self.members.is_empty() {
            self.centroids.clear();
            self.sums.clear();
            self.counts.clear();
            self.baseline = None;
            return;
        }
        let points = self.points();
        let seeds = kmeans_seeds(&points, self.k, &mut self.rng);
        let km = lloyd(&points, &seeds, self.max_iterations);
        let dim = points[0].len();
        self.sums = vec![vec![F::zero(); dim]; km.centroids.len()];
        self.counts = vec![0; km.centroids.len()];
        for (m, &a) in self.members.values_mut().zip(&km.assignment) {
            m.cluster = Some(a);
            self.counts[a] += 1;
            for (s, v) in self.sums[a].iter_mut().zip(&m.point) {
                *s = *s + *v;
            }
        }
        self.centroids = km.centroids;
        for c in 0..self.centroids.len() {
            self.refresh_centroid(c);
        }
        self.recomputations += 1;
        self.baseline = Some(self.mean_distance());
    }

    /// One maintenance step: optional add, optional remove, then a recompute
    /// if the drift trigger fires. Returns whether a recompute ran.
    pub fn maintain(&mut self, added: Option<(u64, Vec<F>)>, removed: Option<u64>) -> Result<bool> {
        if let Some(id) = removed {
            self.remove(id)?;
        }
        if let Some((id, p)) = added {
            self.add(id, p)?;
        }
        Ok(self.refresh())
    }

    /// Recompute if triggered. Returns whether a recompute ran.
    pub fn refresh(&mut self) -> bool {
        if self.needs_recompute() {
            self.recompute();
            true
        } else {
            false
        }
    }

    /// Distance from `x` to the nearest non-empty centroid.
    pub fn score(&self, x: &[F]) -> Result<F> {
        self.centroids
            .iter()
            .zip(&self.counts)
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| euclidean(x, c))
            .fold(None, |acc: Option<F>, d| Some(acc.map_or(d, |a| a.min(d))))
            .ok_or_else(|| Error::DegenerateGroup("cluster model has no centroids".into()))
    }

    /// Nearest-centroid distance of every member, ascending id order.
    pub fn member_scores(&self) -> Result<Vec<F>> {
        self.members.values().map(|m| self.score(&m.point)).collect()
    }
}

/// Distance from `x` to the nearest of `centroids`.
pub fn cc_score<F: Scalar>(x: &[F], centroids: &[Vec<F>]) -> Result<F> {
    if centroids.is_empty() {
        return Err(Error::DegenerateGroup("no centroids".into()));
    }
    Ok(nearest_centroid(x, centroids).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cc_examples() {
        assert_eq!(cc_score(&[3.0, 4.0], &[vec![0.0, 0.0]]).unwrap(), 5.0);
        assert_eq!(cc_score(&[1.0, 1.0], &[vec![1.0, 1.0]]).unwrap(), 0.0);
        assert_eq!(
            cc_score(&[6.0, 0.0], &[vec![0.0, 0.0], vec![10.0, 0.0]]).unwrap(),
            4.0
        );
        assert!(cc_score::<f64>(&[0.0], &[]).is_err());
    }

    fn model_with(points: &[(f64, f64)], k: usize, eps: f64) -> ClusterModel<f64> {
        let mut m = ClusterModel::new(k, eps, 11).unwrap();
        for (i, &(a, b)) in points.iter().enumerate() {
            m.add(i as u64, vec![a, b]).unwrap();
        }
        m.refresh();
        m
    }

    #[test]
    fn adding_point_at_centroid_does_not_recompute() {
        let mut m = model_with(&[(0.0, 0.0), (2.0, 0.0), (10.0, 10.0), (12.0, 10.0)], 2, 0.25);
        assert_eq!(m.recomputations(), 1);
        let c = m.centroids()[0].clone();
        let before = m.mean_distance();
        assert!(!m.maintain(Some((100, c)), None).unwrap());
        assert!(m.mean_distance() <= before);
    }

    #[test]
    fn doubling_mean_distance_triggers_recompute() {
        let mut m = model_with(&[(-1.0, 0.0), (1.0, 0.0)], 1, 0.25);
        assert_eq!(m.baseline(), Some(1.0));
        // spread the group so the mean distance exceeds 2x
        m.remove(0).unwrap();
        m.remove(1).unwrap();
        m.add(2, vec![-2.0, 0.0]).unwrap();
        m.add(3, vec![2.0, 0.0]).unwrap();
        assert!(m.needs_recompute());
        assert!(m.refresh());
        assert_eq!(m.recomputations(), 2);
    }

    #[test]
    fn counts_sum_to_members() {
        let m = model_with(&[(0.0, 0.0), (0.1, 0.0), (5.0, 5.0), (5.1, 5.0), (9.0, 0.0)], 3, 0.25);
        assert_eq!(m.counts().iter().sum::<usize>(), m.len());
    }

    #[test]
    fn seeds_are_distinct_values() {
        let pts = vec![vec![1.0], vec![1.0], vec![1.0], vec![2.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seeds = kmeans_seeds(&pts, 3, &mut rng);
        assert_eq!(seeds.len(), 2);
    }
}
