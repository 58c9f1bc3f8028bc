//! Ground-truth anomaly planting for test snapshots.
//!
//! Structural anomalies are cliques over randomly chosen nodes. Attributive
//! anomalies swap a node's features for those of the most distant node in a
//! random candidate pool. Both kinds are planted in equal numbers per test
//! snapshot over disjoint node sets.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_store::{DynamicGraph, NodeLabels, Snapshot};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionConfig {
    /// Nodes per clique (N_p).
    pub clique_size: usize,
    /// Cliques per snapshot (q).
    pub clique_count: usize,
    /// Candidate pool size for attribute swaps (k).
    pub candidate_pool: usize,
    pub seed: u64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            clique_size: 15,
            clique_count: 1,
            candidate_pool: 50,
            seed: 0,
        }
    }
}

impl InjectionConfig {
    /// Anomalies of each kind per snapshot.
    pub fn targets_per_kind(&self) -> usize {
        self.clique_size * self.clique_count
    }

    pub fn validate(&self) -> Result<()> {
        if self.clique_size < 2 {
            return Err(Error::Config(format!(
                "clique size must be at least 2, got {}",
                self.clique_size
            )));
        }
        if self.clique_count < 1 {
            return Err(Error::Config("clique count must be at least 1".into()));
        }
        if self.candidate_pool < 1 {
            return Err(Error::Config("candidate pool must be at least 1".into()));
        }
        Ok(())
    }

    /// Checks that both kinds of targets fit into a snapshot of `n` nodes.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if 2 * self.targets_per_kind() > n {
            return Err(Error::Config(format!(
                "injection capacity exceeded: 2·{}·{} targets > {n} nodes",
                self.clique_size, self.clique_count
            )));
        }
        Ok(())
    }
}

/// Plants `q` disjoint cliques of `N_p` nodes. Returns the augmented snapshot
/// and the chosen nodes, grouped by clique.
pub fn inject_structural(
    snapshot: &Snapshot,
    cfg: &InjectionConfig,
    rng: &mut impl Rng,
) -> Result<(Snapshot, Vec<Vec<usize>>)> {
    cfg.validate()?;
    let n = snapshot.node_count();
    let total = cfg.targets_per_kind();
    if total > n {
        return Err(Error::Config(format!(
            "injection capacity exceeded: {total} clique nodes > {n} nodes"
        )));
    }
    let chosen = sample(rng, n, total).into_vec();
    let groups: Vec<Vec<usize>> = chosen
        .chunks(cfg.clique_size)
        .map(|c| {
            let mut g = c.to_vec();
            g.sort_unstable();
            g
        })
        .collect();
    let mut extra = Vec::new();
    for g in &groups {
        for (a, &u) in g.iter().enumerate() {
            for &v in &g[a + 1..] {
                extra.push((u, v));
            }
        }
    }
    Ok((snapshot.with_added_edges(extra)?, groups))
}

/// Index into `candidates` of the feature row farthest (Euclidean) from
/// `target`; ties go to the lowest node index.
pub fn farthest_candidate(snapshot: &Snapshot, target: usize, candidates: &[usize]) -> usize {
    let x = snapshot.features();
    let t = x.row(target);
    let mut best: Option<(usize, f64)> = None;
    for &c in candidates {
        let d: f64 = x.row(c).iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        best = match best {
            Some((bc, bd)) if bd > d || (bd == d && bc < c) => Some((bc, bd)),
            _ => Some((c, d)),
        };
    }
    best.expect("non-empty candidate pool").0
}

/// Replaces the features of `N_p·q` random nodes (outside `exclude`) with the
/// farthest of `k` sampled candidates. Candidates are drawn from nodes that
/// are neither excluded nor targeted, and are read from the original
/// features. Returns the modified snapshot and the targets.
pub fn inject_attribute(
    snapshot: &Snapshot,
    cfg: &InjectionConfig,
    exclude: &BTreeSet<usize>,
    rng: &mut impl Rng,
) -> Result<(Snapshot, Vec<usize>)> {
    cfg.validate()?;
    let n = snapshot.node_count();
    let total = cfg.targets_per_kind();
    if cfg.candidate_pool > n.saturating_sub(1) {
        return Err(Error::Config(format!(
            "candidate pool too large: k={} but only {} other nodes",
            cfg.candidate_pool,
            n.saturating_sub(1)
        )));
    }
    let free: Vec<usize> = (0..n).filter(|v| !exclude.contains(v)).collect();
    if total > free.len() {
        return Err(Error::Config(format!(
            "injection capacity exceeded: {total} attribute targets but {} unlabeled nodes",
            free.len()
        )));
    }
    let mut targets: Vec<usize> = sample(rng, free.len(), total)
        .into_iter()
        .map(|i| free[i])
        .collect();
    targets.sort_unstable();
    let targeted: BTreeSet<usize> = targets.iter().copied().collect();
    let pool: Vec<usize> = free.iter().copied().filter(|v| !targeted.contains(v)).collect();
    if cfg.candidate_pool > pool.len() {
        return Err(Error::Config(format!(
            "candidate pool too large: k={} but only {} unlabeled candidates",
            cfg.candidate_pool,
            pool.len()
        )));
    }
    let mut x = snapshot.features().clone();
    for &target in &targets {
        let candidates: Vec<usize> = sample(rng, pool.len(), cfg.candidate_pool)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        let source = farthest_candidate(snapshot, target, &candidates);
        x.row_mut(target).copy_from_slice(snapshot.features().row(source));
    }
    Ok((snapshot.with_features(x)?, targets))
}

/// Plants both anomaly kinds into every listed snapshot. Each snapshot draws
/// from its own RNG stream derived from the seed and its timestamp.
pub fn inject_all(
    graph: &DynamicGraph,
    test_timestamps: &[usize],
    cfg: &InjectionConfig,
) -> Result<(DynamicGraph, NodeLabels)> {
    let mut labels = NodeLabels::new();
    if test_timestamps.is_empty() {
        return Ok((graph.clone(), labels));
    }
    cfg.validate_for(graph.node_count())?;
    let mut out = graph.clone();
    for &t in test_timestamps {
        if t >= graph.num_snapshots() {
            return Err(Error::Config(format!("test timestamp {t} out of range")));
        }
        let mut rng = snapshot_rng(cfg.seed, t);
        let (structural, groups) = inject_structural(graph.snapshot(t), cfg, &mut rng)?;
        let clique_nodes: BTreeSet<usize> = groups.iter().flatten().copied().collect();
        let (attributed, targets) = inject_attribute(&structural, cfg, &clique_nodes, &mut rng)?;
        labels.mark_timestamp(t);
        for &v in clique_nodes.iter().chain(&targets) {
            labels.insert(v, t);
        }
        out = out.with_snapshot(attributed)?;
    }
    Ok((out, labels))
}

fn snapshot_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    fn empty(n: usize, d: usize) -> Snapshot {
        let x = Matrix::from_fn(n, d, |i, j| ((i * 7 + j * 3) % 11) as f64);
        Snapshot::new(0, n, [], x).unwrap()
    }

    fn cfg(np: usize, q: usize, k: usize) -> InjectionConfig {
        InjectionConfig {
            clique_size: np,
            clique_count: q,
            candidate_pool: k,
            seed: 3,
        }
    }

    #[test]
    fn single_clique_on_empty_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (s, groups) = inject_structural(&empty(100, 2), &cfg(15, 1, 50), &mut rng).unwrap();
        assert_eq!(s.edge_count(), 105);
        let deg = s.degrees();
        for &v in &groups[0] {
            assert_eq!(deg[v], 14);
        }
        assert_eq!(deg.iter().filter(|&&d| d > 0).count(), 15);
    }

    #[test]
    fn smallest_clique_is_one_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (s, groups) = inject_structural(&empty(10, 2), &cfg(2, 1, 5), &mut rng).unwrap();
        assert_eq!(s.edge_count(), 1);
        assert_eq!(groups[0].len(), 2);
        assert!(s.has_edge(groups[0][0], groups[0][1]));
    }

    #[test]
    fn structural_capacity_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = inject_structural(&empty(100, 2), &cfg(15, 10, 5), &mut rng).unwrap_err();
        assert!(err.to_string().contains("injection capacity exceeded"));
    }

    #[test]
    fn existing_edges_survive() {
        let base = Snapshot::new(0, 30, [(0, 1), (5, 9)], Matrix::zeros(30, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (s, _) = inject_structural(&base, &cfg(4, 2, 5), &mut rng).unwrap();
        assert!(s.has_edge(0, 1) && s.has_edge(5, 9));
    }

    #[test]
    fn farthest_candidate_hand_case() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [3.0, 4.0]]);
        let s = Snapshot::new(0, 3, [], x).unwrap();
        assert_eq!(farthest_candidate(&s, 0, &[1, 2]), 2);
        assert_eq!(farthest_candidate(&s, 0, &[2, 1]), 2);
        assert_eq!(farthest_candidate(&s, 0, &[1]), 1);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let x = Matrix::from_rows(&[[0.0], [2.0], [-2.0], [1.0]]);
        let s = Snapshot::new(0, 4, [], x).unwrap();
        assert_eq!(farthest_candidate(&s, 0, &[2, 1, 3]), 1);
    }

    #[test]
    fn identical_candidates_leave_features_but_label() {
        let s = Snapshot::new(0, 6, [], Matrix::filled(6, 3, 1.5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (out, targets) = inject_attribute(&s, &cfg(2, 1, 2), &BTreeSet::new(), &mut rng).unwrap();
        assert_eq!(targets.len(), 2);
        assert_eq!(out.features(), s.features());
    }

    #[test]
    fn pool_of_one_takes_the_sampled_node() {
        let s = empty(20, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (out, targets) = inject_attribute(&s, &cfg(2, 1, 1), &BTreeSet::new(), &mut rng).unwrap();
        for &t in &targets {
            let row = out.features().row(t);
            let matches = (0..20)
                .filter(|v| !targets.contains(v))
                .any(|v| s.features().row(v) == row);
            assert!(matches, "target {t} must carry some non-target node's features");
        }
    }

    #[test]
    fn oversized_pool_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let err = inject_attribute(&empty(10, 2), &cfg(2, 1, 10), &BTreeSet::new(), &mut rng).unwrap_err();
        assert!(err.to_string().contains("candidate pool too large"));
    }

    #[test]
    fn attribute_targets_avoid_excluded_nodes() {
        let exclude: BTreeSet<usize> = (0..10).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (_, targets) = inject_attribute(&empty(30, 2), &cfg(5, 2, 5), &exclude, &mut rng).unwrap();
        assert!(targets.iter().all(|t| !exclude.contains(t)));
    }

    #[test]
    fn inject_all_counts_and_determinism() {
        let snaps = (0..4)
            .map(|t| {
                Snapshot::new(t, 40, [(0, 1)], Matrix::from_fn(40, 2, |i, j| (i + t + j) as f64)).unwrap()
            })
            .collect();
        let g = DynamicGraph::new("g", snaps).unwrap();
        let c = cfg(3, 2, 5);
        let (a, la) = inject_all(&g, &[2, 3], &c).unwrap();
        let (b, lb) = inject_all(&g, &[2, 3], &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.count_at(2), 12);
        assert_eq!(la.count_at(3), 12);
        assert_eq!(la.count_at(0), 0);
        assert_eq!(a.snapshot(0), g.snapshot(0));

        let (same, empty_labels) = inject_all(&g, &[], &c).unwrap();
        assert_eq!(same, g);
        assert!(empty_labels.is_empty());
    }
}
