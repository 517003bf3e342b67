//! Exact k-nearest-neighbor index with incrementally maintained LOF caches.
//!
//! Every member keeps its `k` nearest other members ordered by
//! `(distance, id)`. In density mode the index also caches each member's
//! local reachability density and local outlier factor. Inserting or
//! removing a member touches only the members whose caches actually depend on
//! it:
//!
//! 1. members whose neighbor list changed (`A`);
//! 2. members with a neighbor whose k-distance changed, which need a new LRD;
//! 3. members with a neighbor whose LRD changed, which need a new LOF.
//!
//! Sums are always taken in neighbor-list order, so the incremental caches are
//! bit-identical to a from-scratch rebuild on the same members.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cmp, euclidean, Scalar};

/// Smallest reachability distance; keeps LRD finite for coincident points.
pub const REACH_FLOOR: f64 = 1e-12;

/// Which point's k-distance bounds the reachability distance
/// `reach(x_i, x_j) = max(kdist(?), d(x_i, x_j))`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReachDistance {
    /// k-distance of the neighbor `x_j` (classic LOF).
    #[default]
    Standard,
    /// k-distance of the point itself, `x_i`.
    Literal,
}

type Neighbor<F> = (F, u64);

#[inline]
fn neighbor_order<F: Scalar>(a: &Neighbor<F>, b: &Neighbor<F>) -> Ordering {
    cmp(&a.0, &b.0).then(a.1.cmp(&b.1))
}

#[derive(Clone, Debug)]
struct Node<F> {
    point: Vec<F>,
    neighbors: Vec<Neighbor<F>>,
    lrd: F,
    lof: F,
}

impl<F: Scalar> Node<F> {
    fn kdist(&self) -> F {
        self.neighbors.last().map_or(F::zero(), |n| n.0)
    }
}

/// Ids whose caches were recomputed by one insert or remove.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Affected {
    pub neighbors_changed: BTreeSet<u64>,
    pub lrd_updated: BTreeSet<u64>,
    pub lof_updated: BTreeSet<u64>,
}

#[derive(Clone, Debug)]
pub struct NeighborIndex<F> {
    k: usize,
    density: Option<ReachDistance>,
    nodes: BTreeMap<u64, Node<F>>,
}

impl<F: Scalar> NeighborIndex<F> {
    /// Plain k-NN index (no density caches).
    pub fn new(k: usize) -> Result<Self> {
        Self::build(k, None)
    }

    /// Index maintaining LRD and LOF of every member.
    pub fn with_density(k: usize, reach: ReachDistance) -> Result<Self> {
        Self::build(k, Some(reach))
    }

    fn build(k: usize, density: Option<ReachDistance>) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("measure.k", "must be at least 1"));
        }
        Ok(Self {
            k,
            density,
            nodes: BTreeMap::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.nodes.keys().copied()
    }

    pub fn point(&self, id: u64) -> Option<&[F]> {
        self.nodes.get(&id).map(|n| n.point.as_slice())
    }

    /// Cached `(distance, id)` neighbor list of a member.
    pub fn neighbors(&self, id: u64) -> Option<&[(F, u64)]> {
        self.nodes.get(&id).map(|n| n.neighbors.as_slice())
    }

    pub fn k_distance(&self, id: u64) -> Option<F> {
        self.nodes.get(&id).map(Node::kdist)
    }

    pub fn lrd(&self, id: u64) -> Option<F> {
        self.density?;
        self.nodes.get(&id).map(|n| n.lrd)
    }

    pub fn lof(&self, id: u64) -> Option<F> {
        self.density?;
        self.nodes.get(&id).map(|n| n.lof)
    }

    /// The `k` nearest members of `x` (fewer if the index is smaller).
    pub fn nearest(&self, x: &[F]) -> Vec<(F, u64)> {
        self.nearest_excluding(x, None, self.k)
    }

    fn nearest_excluding(&self, x: &[F], skip: Option<u64>, k: usize) -> Vec<Neighbor<F>> {
        let mut all: Vec<Neighbor<F>> = self
            .nodes
            .iter()
            .filter(|(id, _)| Some(**id) != skip)
            .map(|(id, n)| (euclidean(x, &n.point), *id))
            .collect();
        if all.len() > k {
            all.select_nth_unstable_by(k, neighbor_order);
            all.truncate(k);
        }
        all.sort_by(neighbor_order);
        all
    }

    /// Insert a member and repair every dependent cache.
    pub fn insert(&mut self, id: u64, point: Vec<F>) -> Result<Affected> {
        if self.nodes.contains_key(&id) {
            return Err(Error::Consistency(format!("id {id} is already indexed")));
        }
        let mut affected = Affected::default();
        let mut kdist_changed = BTreeSet::new();
        let k = self.k;
        for (&oid, node) in self.nodes.iter_mut() {
            let candidate = (euclidean(&point, &node.point), id);
            let full = node.neighbors.len() == k;
            if full && neighbor_order(&candidate, node.neighbors.last().unwrap()) != Ordering::Less {
                continue;
            }
            let before = node.kdist();
            let at = node
                .neighbors
                .partition_point(|n| neighbor_order(n, &candidate) == Ordering::Less);
            node.neighbors.insert(at, candidate);
            node.neighbors.truncate(k);
            affected.neighbors_changed.insert(oid);
            if node.kdist() != before || !full {
                kdist_changed.insert(oid);
            }
        }
        let neighbors = self.nearest_excluding(&point, None, k);
        self.nodes.insert(
            id,
            Node {
                point,
                neighbors,
                lrd: F::zero(),
                lof: F::one(),
            },
        );
        affected.neighbors_changed.insert(id);
        kdist_changed.insert(id);
        self.repair_density(&mut affected, &kdist_changed);
        Ok(affected)
    }

    /// Remove a member and repair every dependent cache.
    pub fn remove(&mut self, id: u64) -> Result<Affected> {
        if self.nodes.remove(&id).is_none() {
            return Err(Error::Consistency(format!("id {id} is not indexed")));
        }
        let mut affected = Affected::default();
        let mut kdist_changed = BTreeSet::new();
        let dependents: Vec<u64> = self
            .nodes
            .iter()
            .filter(|(_, n)| n.neighbors.iter().any(|&(_, j)| j == id))
            .map(|(&oid, _)| oid)
            .collect();
        for oid in dependents {
            let point = self.nodes[&oid].point.clone();
            let fresh = self.nearest_excluding(&point, Some(oid), self.k);
            let node = self.nodes.get_mut(&oid).unwrap();
            let before = (node.kdist(), node.neighbors.len());
            node.neighbors = fresh;
            if (node.kdist(), node.neighbors.len()) != before {
                kdist_changed.insert(oid);
            }
            affected.neighbors_changed.insert(oid);
        }
        self.repair_density(&mut affected, &kdist_changed);
        Ok(affected)
    }

    fn repair_density(&mut self, affected: &mut Affected, kdist_changed: &BTreeSet<u64>) {
        let Some(reach) = self.density else {
            return;
        };
        let mut lrd_set = affected.neighbors_changed.clone();
        if !kdist_changed.is_empty() {
            for (&oid, node) in &self.nodes {
                if node.neighbors.iter().any(|(_, j)| kdist_changed.contains(j)) {
                    lrd_set.insert(oid);
                }
            }
        }
        let mut lrd_changed = BTreeSet::new();
        for &oid in &lrd_set {
            let lrd = self.compute_lrd(oid, reach);
            let node = self.nodes.get_mut(&oid).unwrap();
            if node.lrd != lrd {
                node.lrd = lrd;
                lrd_changed.insert(oid);
            }
        }
        let mut lof_set = lrd_set.clone();
        if !lrd_changed.is_empty() {
            for (&oid, node) in &self.nodes {
                if node.neighbors.iter().any(|(_, j)| lrd_changed.contains(j)) {
                    lof_set.insert(oid);
                }
            }
        }
        for &oid in &lof_set {
            let lof = self.compute_lof(oid);
            self.nodes.get_mut(&oid).unwrap().lof = lof;
        }
        affected.lrd_updated = lrd_set;
        affected.lof_updated = lof_set;
    }

    fn compute_lrd(&self, id: u64, reach: ReachDistance) -> F {
        let node = &self.nodes[&id];
        let own_kdist = node.kdist();
        lrd_from(&node.neighbors, |j| match reach {
            ReachDistance::Standard => self.nodes[&j].kdist(),
            ReachDistance::Literal => own_kdist,
        })
    }

    fn compute_lof(&self, id: u64) -> F {
        let node = &self.nodes[&id];
        lof_from(node.lrd, node.neighbors.iter().map(|(_, j)| self.nodes[j].lrd))
    }

    /// Drop all caches and rebuild them from the stored points.
    pub fn rebuild(&mut self) {
        let ids: Vec<u64> = self.nodes.keys().copied().collect();
        for &id in &ids {
            let point = self.nodes[&id].point.clone();
            let fresh = self.nearest_excluding(&point, Some(id), self.k);
            self.nodes.get_mut(&id).unwrap().neighbors = fresh;
        }
        if let Some(reach) = self.density {
            for &id in &ids {
                let lrd = self.compute_lrd(id, reach);
                self.nodes.get_mut(&id).unwrap().lrd = lrd;
            }
            for &id in &ids {
                let lof = self.compute_lof(id);
                self.nodes.get_mut(&id).unwrap().lof = lof;
            }
        }
    }

    /// Average distance from `x` to its `k` nearest members.
    pub fn knn_score(&self, x: &[F]) -> Result<F> {
        if self.nodes.len() < self.k {
            return Err(Error::DegenerateGroup(format!(
                "k-NN needs at least k = {} members, group has {}",
                self.k,
                self.nodes.len()
            )));
        }
        let nn = self.nearest(x);
        Ok(mean_distance(&nn))
    }

    /// LOF of an outside query point against the indexed members.
    pub fn lof_score(&self, x: &[F]) -> Result<F> {
        let reach = self.density.ok_or_else(|| {
            Error::Contract("lof_score requires an index built with density caches".into())
        })?;
        if self.nodes.len() < self.k + 1 {
            return Err(Error::DegenerateGroup(format!(
                "LOF needs at least k + 1 = {} members, group has {}",
                self.k + 1,
                self.nodes.len()
            )));
        }
        let nn = self.nearest(x);
        let own_kdist = nn.last().map_or(F::zero(), |n| n.0);
        let lrd = lrd_from(&nn, |j| match reach {
            ReachDistance::Standard => self.nodes[&j].kdist(),
            ReachDistance::Literal => own_kdist,
        });
        Ok(lof_from(lrd, nn.iter().map(|(_, j)| self.nodes[j].lrd)))
    }

    /// Leave-one-out k-NN score of every member, ascending id order.
    pub fn member_knn_scores(&self) -> Result<Vec<F>> {
        self.nodes
            .values()
            .map(|n| {
                if n.neighbors.len() < self.k {
                    Err(Error::DegenerateGroup(format!(
                        "k-NN reference scores need at least k + 1 = {} members",
                        self.k + 1
                    )))
                } else {
                    Ok(mean_distance(&n.neighbors))
                }
            })
            .collect()
    }

    /// Cached LOF of every member, ascending id order.
    pub fn member_lofs(&self) -> Vec<F> {
        self.nodes.values().map(|n| n.lof).collect()
    }
}

fn mean_distance<F: Scalar>(nn: &[Neighbor<F>]) -> F {
    nn.iter().map(|n| n.0).sum::<F>() / F::of(nn.len() as f64)
}

fn lrd_from<F: Scalar>(nn: &[Neighbor<F>], kdist_of: impl Fn(u64) -> F) -> F {
    if nn.is_empty() {
        return F::one() / F::of(REACH_FLOOR);
    }
    let floor = F::of(REACH_FLOOR);
    let total: F = nn.iter().map(|&(d, j)| kdist_of(j).max(d).max(floor)).sum();
    F::one() / (total / F::of(nn.len() as f64))
}

fn lof_from<F: Scalar>(lrd: F, neighbor_lrds: impl ExactSizeIterator<Item = F>) -> F {
    let m = neighbor_lrds.len();
    if m == 0 {
        return F::one();
    }
    let mean = neighbor_lrds.sum::<F>() / F::of(m as f64);
    mean / lrd
}

/// Average k-NN distance of `x` against `group` (brute force).
pub fn knn_score<F: Scalar>(x: &[F], group: &[Vec<F>], k: usize) -> Result<F> {
    let mut index = NeighborIndex::new(k)?;
    for (i, p) in group.iter().enumerate() {
        index.insert(i as u64, p.clone())?;
    }
    index.knn_score(x)
}

/// LOF of `x` against `group` with classic reachability distance.
pub fn lof_score<F: Scalar>(x: &[F], group: &[Vec<F>], k: usize) -> Result<F> {
    let mut index = NeighborIndex::with_density(k, ReachDistance::Standard)?;
    for (i, p) in group.iter().enumerate() {
        index.insert(i as u64, p.clone())?;
    }
    index.lof_score(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(a, b)| vec![a, b]).collect()
    }

    #[test]
    fn knn_examples() {
        let g = pts(&[(1.0, 0.0), (0.0, 1.0), (2.0, 0.0)]);
        assert_eq!(knn_score(&[0.0, 0.0], &g, 2).unwrap(), 1.0);
        assert_eq!(knn_score(&[1.0, 0.0], &g, 1).unwrap(), 0.0);
        assert_eq!(knn_score(&[0.0, 0.0], &pts(&[(3.0, 4.0)]), 1).unwrap(), 5.0);
        assert!(matches!(
            knn_score(&[0.0, 0.0], &pts(&[(3.0, 4.0)]), 2),
            Err(Error::DegenerateGroup(_))
        ));
    }

    #[test]
    fn lof_grid_interior_is_one() {
        let mut g = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                g.push(vec![i as f64, j as f64]);
            }
        }
        let lof = lof_score(&[4.5, 4.5], &g, 4).unwrap();
        assert!((lof - 1.0).abs() < 0.05, "{lof}");
    }

    #[test]
    fn lof_coincident_points_is_one() {
        let g = vec![vec![2.0, 2.0]; 6];
        assert_eq!(lof_score(&[2.0, 2.0], &g, 3).unwrap(), 1.0);
    }

    #[test]
    fn far_outlier_touches_only_itself() {
        let mut idx = NeighborIndex::with_density(3, ReachDistance::Standard).unwrap();
        for i in 0..20u64 {
            let a = i as f64 * 0.3;
            idx.insert(i, vec![a.cos() * 0.1, a.sin() * 0.1]).unwrap();
        }
        let before: Vec<f64> = idx.member_lofs();
        let affected = idx.insert(100, vec![50.0, 50.0]).unwrap();
        assert_eq!(affected.neighbors_changed, BTreeSet::from([100]));
        assert_eq!(affected.lof_updated, BTreeSet::from([100]));
        let after = idx.member_lofs();
        assert_eq!(&after[..20], &before[..]);
    }

    #[test]
    fn duplicate_ids_and_missing_removals_are_errors() {
        let mut idx = NeighborIndex::<f64>::new(1).unwrap();
        idx.insert(1, vec![0.0]).unwrap();
        assert!(matches!(idx.insert(1, vec![1.0]), Err(Error::Consistency(_))));
        assert!(matches!(idx.remove(7), Err(Error::Consistency(_))));
    }

    #[test]
    fn remove_then_reinsert_restores_caches() {
        let mut idx: NeighborIndex<f64> = NeighborIndex::with_density(2, ReachDistance::Standard).unwrap();
        let points = [(0.0, 0.0), (1.0, 0.2), (0.3, 1.1), (2.0, 2.0), (0.5, 0.5), (3.0, 0.1)];
        for (i, &(a, b)) in points.iter().enumerate() {
            idx.insert(i as u64, vec![a, b]).unwrap();
        }
        let before = idx.member_lofs();
        idx.remove(4).unwrap();
        idx.insert(4, vec![0.5, 0.5]).unwrap();
        let after = idx.member_lofs();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn literal_reach_uses_own_kdistance() {
        let g = pts(&[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
        let mut idx = NeighborIndex::with_density(2, ReachDistance::Literal).unwrap();
        for (i, p) in g.iter().enumerate() {
            idx.insert(i as u64, p.clone()).unwrap();
        }
        // symmetric square: every member has identical caches
        let lofs = idx.member_lofs();
        assert!(lofs.iter().all(|&l| (l - 1.0).abs() < 1e-12));
        assert!(idx.lof_score(&[5.0, 5.0]).unwrap() > 1.0);
    }
}
