//! Synthetic dynamic graphs with community structure.
//!
//! Nodes belong to `communities` groups. Each snapshot has about
//! `nodes · avg_degree / 2` edges, a fraction `intra` of them inside a
//! community; a share `persistence` of the previous snapshot's edges is
//! carried over. Features are the community centroid plus a fixed per-node
//! offset plus fresh noise, with centroids drifting between snapshots.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_store::{DynamicGraph, Snapshot};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub nodes: usize,
    pub snapshots: usize,
    pub avg_degree: f64,
    pub feature_dim: usize,
    pub communities: usize,
    /// Probability that a sampled edge stays inside a community.
    pub intra: f64,
    /// Share of edges kept from the previous snapshot.
    pub persistence: f64,
    /// Spread of per-node offsets around the centroid.
    pub node_spread: f64,
    /// Standard deviation of per-snapshot feature noise.
    pub noise: f64,
    /// Standard deviation of the centroid random walk per snapshot.
    pub drift: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nodes: 500,
            snapshots: 8,
            avg_degree: 10.0,
            feature_dim: 16,
            communities: 5,
            intra: 0.9,
            persistence: 0.8,
            node_spread: 0.3,
            noise: 0.1,
            drift: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synthetic graph: {m}")));
        if self.nodes < 2 || self.snapshots == 0 || self.feature_dim == 0 {
            return fail("needs at least two nodes, one snapshot and one feature");
        }
        if self.communities == 0 || self.communities > self.nodes {
            return fail("community count must lie in 1..=nodes");
        }
        if !(self.avg_degree >= 0.0 && self.avg_degree <= (self.nodes - 1) as f64 / 2.0) {
            return fail("average degree must lie in [0, (nodes - 1) / 2]");
        }
        for (name, p) in [("intra", self.intra), ("persistence", self.persistence)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("synthetic graph: {name} must lie in [0, 1]")));
            }
        }
        if [self.node_spread, self.noise, self.drift].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return fail("spreads must be finite and nonnegative");
        }
        Ok(())
    }
}

/// Community of node `i`.
pub fn community_of(cfg: &SyntheticConfig, node: usize) -> usize {
    node % cfg.communities
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn generate(cfg: &SyntheticConfig) -> Result<DynamicGraph> {
    cfg.validate()?;
    let n = cfg.nodes;
    let c = cfg.communities;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let members: Vec<Vec<usize>> = (0..c).map(|k| (k..n).step_by(c).collect()).collect();
    let mut centroids = gaussian_matrix(c, cfg.feature_dim, 1.0, &mut rng);
    let offsets = gaussian_matrix(n, cfg.feature_dim, cfg.node_spread, &mut rng);
    let target = (n as f64 * cfg.avg_degree / 2.0).round() as usize;

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut snapshots = Vec::with_capacity(cfg.snapshots);
    for t in 0..cfg.snapshots {
        if t > 0 {
            edges.retain(|_| rng.gen::<f64>() < cfg.persistence);
            let walk = gaussian_matrix(c, cfg.feature_dim, cfg.drift, &mut rng);
            centroids.add_assign(&walk);
        }
        let mut attempts = 0usize;
        while edges.len() < target {
            attempts += 1;
            if attempts > 100 * target + 10_000 {
                return Err(Error::Config("synthetic graph: cannot place the requested edges".into()));
            }
            let u = rng.gen_range(0..n);
            let v = if rng.gen::<f64>() < cfg.intra {
                let group = &members[community_of(cfg, u)];
                group[rng.gen_range(0..group.len())]
            } else {
                rng.gen_range(0..n)
            };
            if u != v {
                edges.insert((u.min(v), u.max(v)));
            }
        }
        let features = Matrix::from_fn(n, cfg.feature_dim, |i, j| {
            centroids.get(community_of(cfg, i), j) + offsets.get(i, j)
        });
        let noise = gaussian_matrix(n, cfg.feature_dim, cfg.noise, &mut rng);
        snapshots.push(Snapshot::new(t, n, edges.iter().copied(), features.add(&noise))?);
    }
    DynamicGraph::new(format!("synthetic-{n}"), snapshots)
}
