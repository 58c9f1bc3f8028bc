//! Dynamic graph model, on-disk dataset format, temporal splitting and
//! window extraction.
//!
//! Dataset directory layout:
//!
//! ```text
//! manifest.json          {"name", "num_snapshots", "num_nodes", "feature_dim"}
//! snapshots/t<k>.edges   "src,dst" per line, each undirected edge once
//! features/t<k>.csv      N rows of D comma-separated floats
//! labels.csv             optional, header "node,timestamp,label"
//! ```
//!
//! All snapshots share one node universe; a node with no edges at some
//! timestamp is simply isolated there.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Matrix;

/// The graph at one timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    t: usize,
    node_count: usize,
    /// Directed adjacency entries, both directions of every undirected edge,
    /// sorted and free of duplicates and self-loops.
    edges: Vec<(usize, usize)>,
    features: Matrix,
}

impl Snapshot {
    /// Validates and symmetrizes. Self-loops are dropped and repeated edges
    /// collapse to one.
    pub fn new(
        t: usize,
        node_count: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
    ) -> Result<Self> {
        if features.rows() != node_count {
            return Err(Error::Dataset(format!(
                "row-count mismatch at t={t}: features have {} rows, expected {node_count}",
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Dataset(format!("non-finite attribute value at t={t}")));
        }
        let mut edges = Vec::new();
        for (u, v) in pairs {
            if u >= node_count || v >= node_count {
                return Err(Error::Dataset(format!(
                    "out-of-range node index in edge ({u}, {v}) at t={t} (N={node_count})"
                )));
            }
            if u != v {
                edges.push((u, v));
                edges.push((v, u));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            t,
            node_count,
            edges,
            features,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Both directions of every edge.
    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied().filter(|&(u, v)| u < v)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u, v)).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &(u, _) in &self.edges {
            deg[u] += 1;
        }
        deg
    }

    pub fn dense_adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.node_count, self.node_count);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
        }
        a
    }

    /// Copy with additional undirected edges.
    pub fn with_added_edges(&self, extra: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = self.undirected_edges().chain(extra).collect();
        Snapshot::new(self.t, self.node_count, pairs, self.features.clone())
    }

    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        Snapshot::new(self.t, self.node_count, self.undirected_edges(), features)
    }

    pub fn with_timestamp(mut self, t: usize) -> Self {
        self.t = t;
        self
    }
}

/// Ordered sequence of snapshots over a shared node universe.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicGraph {
    name: String,
    node_count: usize,
    feature_dim: usize,
    snapshots: Vec<Arc<Snapshot>>,
}

impl DynamicGraph {
    pub fn new(name: impl Into<String>, snapshots: Vec<Snapshot>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::Dataset("a dynamic graph needs at least one snapshot".into()))?;
        let (node_count, feature_dim) = (first.node_count(), first.feature_dim());
        for (k, s) in snapshots.iter().enumerate() {
            if s.t() != k {
                return Err(Error::Dataset(format!(
                    "snapshot timestamps must be 0..T-1 in order; position {k} holds t={}",
                    s.t()
                )));
            }
            if s.feature_dim() != feature_dim {
                return Err(Error::Dataset(format!(
                    "feature dimension {} at t={k} differs from {feature_dim}",
                    s.feature_dim()
                )));
            }
            if s.node_count() != node_count {
                return Err(Error::Dataset(format!(
                    "node count {} at t={k} differs from {node_count}",
                    s.node_count()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            node_count,
            feature_dim,
            snapshots: snapshots.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// T
    pub fn num_snapshots(&self) -> usize {
        self.snapshots.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// D
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn snapshot(&self, t: usize) -> &Snapshot {
        &self.snapshots[t]
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter().map(|s| s.as_ref())
    }

    /// Copy with snapshot `t` swapped out.
    pub fn with_snapshot(&self, snapshot: Snapshot) -> Result<Self> {
        let t = snapshot.t();
        let mut snaps: Vec<Snapshot> = self.snapshots().cloned().collect();
        if t >= snaps.len() {
            return Err(Error::Dataset(format!("no snapshot at t={t}")));
        }
        snaps[t] = snapshot;
        DynamicGraph::new(self.name.clone(), snaps)
    }

    pub(crate) fn shared(&self, t: usize) -> Arc<Snapshot> {
        Arc::clone(&self.snapshots[t])
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃(i,i) = Σ_j (A + I)(i, j)`.
pub fn normalize_adjacency(snapshot: &Snapshot) -> CsrMatrix {
    normalize_edges(snapshot.node_count(), snapshot.directed_edges())
}

/// Normalized adjacency of `n` nodes from a symmetric directed edge list.
pub fn normalize_edges(n: usize, edges: &[(usize, usize)]) -> CsrMatrix {
    let mut degree = vec![1.0f64; n];
    for &(u, _) in edges {
        degree[u] += 1.0;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut trip = Vec::with_capacity(edges.len() + n);
    for (i, s) in inv_sqrt.iter().enumerate() {
        trip.push((i, i, s * s));
    }
    for &(u, v) in edges {
        trip.push((u, v, inv_sqrt[u] * inv_sqrt[v]));
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

/// τ consecutive snapshots ending at `end_t`, with their normalized
/// adjacencies precomputed.
#[derive(Clone, Debug)]
pub struct GraphWindow {
    end_t: usize,
    snapshots: Vec<Arc<Snapshot>>,
    norm_adjs: Vec<Arc<CsrMatrix>>,
}

impl GraphWindow {
    pub fn end_t(&self) -> usize {
        self.end_t
    }

    pub fn tau(&self) -> usize {
        self.snapshots.len()
    }

    pub fn start_t(&self) -> usize {
        self.end_t + 1 - self.tau()
    }

    pub fn node_count(&self) -> usize {
        self.snapshots[0].node_count()
    }

    pub fn snapshot(&self, offset: usize) -> &Snapshot {
        &self.snapshots[offset]
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter().map(|s| s.as_ref())
    }

    pub fn norm_adj(&self, offset: usize) -> &Arc<CsrMatrix> {
        &self.norm_adjs[offset]
    }

    /// Builds a window directly from snapshots (they need not belong to a
    /// [`DynamicGraph`]).
    pub fn from_snapshots(snapshots: Vec<Snapshot>) -> Result<Self> {
        let last = snapshots
            .last()
            .ok_or_else(|| Error::Config("window needs at least one snapshot".into()))?;
        let end_t = last.t();
        if end_t + 1 < snapshots.len() {
            return Err(Error::Config("window timestamps underflow".into()));
        }
        let norm_adjs = snapshots
            .iter()
            .map(|s| Arc::new(normalize_adjacency(s)))
            .collect();
        Ok(Self {
            end_t,
            snapshots: snapshots.into_iter().map(Arc::new).collect(),
            norm_adjs,
        })
    }

    /// Copy whose propagation operators use only a random subset of edges;
    /// each undirected edge is kept with probability `1 - p`. The snapshots
    /// (and therefore the reconstruction targets) are untouched.
    pub fn with_edge_dropout(&self, p: f64, rng: &mut impl Rng) -> GraphWindow {
        let norm_adjs = self
            .snapshots
            .iter()
            .map(|s| {
                let mut kept = Vec::with_capacity(s.directed_edges().len());
                for (u, v) in s.undirected_edges() {
                    if rng.gen::<f64>() >= p {
                        kept.push((u, v));
                        kept.push((v, u));
                    }
                }
                Arc::new(normalize_edges(s.node_count(), &kept))
            })
            .collect();
        GraphWindow {
            end_t: self.end_t,
            snapshots: self.snapshots.clone(),
            norm_adjs,
        }
    }
}

pub fn extract_window(graph: &DynamicGraph, end_t: usize, tau: usize) -> Result<GraphWindow> {
    if tau == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    if end_t + 1 < tau {
        return Err(Error::Config(format!(
            "insufficient history: window of {tau} cannot end at t={end_t}"
        )));
    }
    if end_t >= graph.num_snapshots() {
        return Err(Error::Config(format!(
            "window end t={end_t} beyond last snapshot {}",
            graph.num_snapshots() - 1
        )));
    }
    let ts = end_t + 1 - tau..=end_t;
    let snapshots: Vec<Arc<Snapshot>> = ts.clone().map(|t| graph.shared(t)).collect();
    let norm_adjs = snapshots
        .iter()
        .map(|s| Arc::new(normalize_adjacency(s)))
        .collect();
    Ok(GraphWindow {
        end_t,
        snapshots,
        norm_adjs,
    })
}

/// Earliest `⌈ratio·T⌉` timestamps train, the rest test.
pub fn split_temporal(
    graph: &DynamicGraph,
    train_ratio: f64,
    tau: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    split_timestamps(graph.num_snapshots(), train_ratio, tau)
}

pub fn split_timestamps(
    num_snapshots: usize,
    train_ratio: f64,
    tau: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::Config(format!(
            "train ratio must lie strictly between 0 and 1, got {train_ratio}"
        )));
    }
    // Guard against 0.3 * 10 = 3.0000000000000004 rounding up to 4.
    let n_train = ((train_ratio * num_snapshots as f64) - 1e-9).ceil().max(0.0) as usize;
    let n_train = n_train.min(num_snapshots);
    if n_train < tau {
        return Err(Error::Config(format!(
            "window cannot be formed: {n_train} training snapshots < window size {tau}"
        )));
    }
    Ok(((0..n_train).collect(), (n_train..num_snapshots).collect()))
}

/// Ground-truth anomaly flags for labeled (test) timestamps. Nodes not
/// listed at a labeled timestamp are normal.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeLabels {
    anomalies: BTreeMap<usize, BTreeSet<usize>>,
}

impl NodeLabels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `t` as a labeled timestamp without adding anomalies.
    pub fn mark_timestamp(&mut self, t: usize) {
        self.anomalies.entry(t).or_default();
    }

    pub fn insert(&mut self, node: usize, t: usize) {
        self.anomalies.entry(t).or_default().insert(node);
    }

    pub fn extend(&mut self, other: &NodeLabels) {
        for (&t, nodes) in &other.anomalies {
            self.anomalies.entry(t).or_default().extend(nodes.iter().copied());
        }
    }

    pub fn label(&self, node: usize, t: usize) -> u8 {
        u8::from(self.anomalies.get(&t).is_some_and(|s| s.contains(&node)))
    }

    pub fn anomalies_at(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.anomalies.get(&t).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn count_at(&self, t: usize) -> usize {
        self.anomalies.get(&t).map_or(0, BTreeSet::len)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = usize> + '_ {
        self.anomalies.keys().copied()
    }

    /// Total anomalous (node, timestamp) pairs.
    pub fn total(&self) -> usize {
        self.anomalies.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// `(node, timestamp)` pairs flagged abnormal, ordered by timestamp then node.
    pub fn positives(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.anomalies
            .iter()
            .flat_map(|(&t, nodes)| nodes.iter().map(move |&n| (n, t)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub num_snapshots: usize,
    pub num_nodes: usize,
    pub feature_dim: usize,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Dataset(format!("{}: {e}", path.display()))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DynamicGraph> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::Dataset(format!("missing manifest at {}", manifest_path.display())));
    }
    let manifest: Manifest = serde_json::from_str(&read_to_string(&manifest_path)?)
        .map_err(|e| Error::Dataset(format!("malformed manifest: {e}")))?;
    let mut snapshots = Vec::with_capacity(manifest.num_snapshots);
    for t in 0..manifest.num_snapshots {
        let features = read_features(&dir.join("features").join(format!("t{t}.csv")), &manifest, t)?;
        let edges = read_edges(&dir.join("snapshots").join(format!("t{t}.edges")))?;
        snapshots.push(Snapshot::new(t, manifest.num_nodes, edges, features)?);
    }
    DynamicGraph::new(manifest.name, snapshots)
}

fn read_features(path: &Path, manifest: &Manifest, t: usize) -> Result<Matrix> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::with_capacity(manifest.num_nodes * manifest.feature_dim);
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != manifest.feature_dim {
            return Err(Error::Dataset(format!(
                "{}: row {rows} has {} columns, expected {}",
                path.display(),
                rec.len(),
                manifest.feature_dim
            )));
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Dataset(format!("{}: unparsable value {field:?}", path.display()))
            })?;
            if !v.is_finite() {
                return Err(Error::Dataset(format!(
                    "{}: non-finite attribute value in row {rows}",
                    path.display()
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != manifest.num_nodes {
        return Err(Error::Dataset(format!(
            "row-count mismatch at t={t}: {} has {rows} rows, manifest declares {}",
            path.display(),
            manifest.num_nodes
        )));
    }
    Ok(Matrix::from_vec(rows, manifest.feature_dim, data))
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize::<(usize, usize)>()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

/// Reads `labels.csv` if present.
pub fn load_labels(dir: impl AsRef<Path>) -> Result<Option<NodeLabels>> {
    let path = dir.as_ref().join("labels.csv");
    if !path.exists() {
        return Ok(None);
    }
    #[derive(Deserialize)]
    struct Row {
        node: usize,
        timestamp: usize,
        label: u8,
    }
    let text = read_to_string(&path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut labels = NodeLabels::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| csv_error(&path, e))?;
        match row.label {
            0 => labels.mark_timestamp(row.timestamp),
            1 => labels.insert(row.node, row.timestamp),
            other => {
                return Err(Error::Dataset(format!(
                    "{}: label must be 0 or 1, got {other}",
                    path.display()
                )))
            }
        }
    }
    Ok(Some(labels))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes a graph (and optionally its labels) in the dataset layout.
/// Output is byte-deterministic for a given graph.
pub fn save_dataset(graph: &DynamicGraph, labels: Option<&NodeLabels>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["snapshots", "features"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let manifest = Manifest {
        name: graph.name().to_string(),
        num_snapshots: graph.num_snapshots(),
        num_nodes: graph.node_count(),
        feature_dim: graph.feature_dim(),
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    for s in graph.snapshots() {
        let path = dir.join("snapshots").join(format!("t{}.edges", s.t()));
        let mut w = create(&path)?;
        for (u, v) in s.undirected_edges() {
            writeln!(w, "{u},{v}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("features").join(format!("t{}.csv", s.t()));
        let mut w = create(&path)?;
        let x = s.features();
        for i in 0..x.rows() {
            let line: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    let labels_path = dir.join("labels.csv");
    match labels {
        Some(labels) => {
            let mut w = create(&labels_path)?;
            writeln!(w, "node,timestamp,label").map_err(|e| Error::io(&labels_path, e))?;
            for (node, t) in labels.positives() {
                writeln!(w, "{node},{t},1").map_err(|e| Error::io(&labels_path, e))?;
            }
            w.flush().map_err(|e| Error::io(&labels_path, e))?;
        }
        None if labels_path.exists() => {
            fs::remove_file(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
        }
        None => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(t: usize, n: usize, edges: &[(usize, usize)]) -> Snapshot {
        Snapshot::new(t, n, edges.iter().copied(), Matrix::zeros(n, 2)).unwrap()
    }

    fn line_graph(t_count: usize) -> DynamicGraph {
        let snaps = (0..t_count).map(|t| snap(t, 3, &[(0, 1)])).collect();
        DynamicGraph::new("toy", snaps).unwrap()
    }

    #[test]
    fn reverse_duplicate_edges_collapse() {
        let s = snap(0, 3, &[(0, 1), (1, 0), (1, 1)]);
        assert_eq!(s.edge_count(), 1);
        assert!(s.has_edge(0, 1) && s.has_edge(1, 0));
        assert!(!s.has_edge(1, 1));
    }

    #[test]
    fn rejects_out_of_range_and_bad_features() {
        assert!(Snapshot::new(0, 2, [(0, 2)], Matrix::zeros(2, 1)).is_err());
        let err = Snapshot::new(0, 3, [], Matrix::zeros(2, 1)).unwrap_err();
        assert!(err.to_string().contains("row-count mismatch"));
        let mut x = Matrix::zeros(2, 1);
        x.set(1, 0, f64::NAN);
        assert!(Snapshot::new(0, 2, [], x).is_err());
    }

    #[test]
    fn normalization_hand_cases() {
        let single = normalize_adjacency(&snap(0, 1, &[]));
        assert_eq!(single.to_dense(), Matrix::from_rows(&[[1.0]]));

        let pair = normalize_adjacency(&snap(0, 2, &[(0, 1)])).to_dense();
        assert!(pair.max_abs_diff(&Matrix::filled(2, 2, 0.5)) < 1e-15);

        let path = normalize_adjacency(&snap(0, 3, &[(0, 1), (1, 2)]));
        assert!((path.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((path.get(0, 1) - 0.408_25).abs() < 1e-5);
    }

    #[test]
    fn window_extraction() {
        let g = line_graph(10);
        let w = extract_window(&g, 2, 3).unwrap();
        let ts: Vec<usize> = w.snapshots().map(Snapshot::t).collect();
        assert_eq!(ts, vec![0, 1, 2]);
        let err = extract_window(&g, 1, 3).unwrap_err();
        assert!(err.to_string().contains("insufficient history"));
        let w = extract_window(&g, 0, 1).unwrap();
        assert_eq!(w.tau(), 1);
        assert!(extract_window(&g, 10, 1).is_err());
    }

    #[test]
    fn windows_cover_each_end_once() {
        let g = line_graph(7);
        let tau = 3;
        let ends: Vec<usize> = (0..g.num_snapshots())
            .filter_map(|e| extract_window(&g, e, tau).ok())
            .map(|w| w.end_t())
            .collect();
        assert_eq!(ends, (tau - 1..7).collect::<Vec<_>>());
    }

    #[test]
    fn temporal_split() {
        let g = line_graph(10);
        let (tr, te) = split_temporal(&g, 0.5, 3).unwrap();
        assert_eq!(tr, (0..5).collect::<Vec<_>>());
        assert_eq!(te, (5..10).collect::<Vec<_>>());
        let (tr, te) = split_temporal(&g, 0.3, 3).unwrap();
        assert_eq!(tr, vec![0, 1, 2]);
        assert_eq!(te, (3..10).collect::<Vec<_>>());
        let err = split_temporal(&g, 0.3, 4).unwrap_err();
        assert!(err.to_string().contains("window cannot be formed"));
        assert!(split_temporal(&g, 1.0, 1).is_err());
        assert!(split_temporal(&g, 0.0, 1).is_err());
    }

    #[test]
    fn graph_requires_consistent_snapshots() {
        let a = snap(0, 3, &[]);
        let b = Snapshot::new(1, 3, [], Matrix::zeros(3, 5)).unwrap();
        assert!(DynamicGraph::new("x", vec![a.clone(), b]).is_err());
        assert!(DynamicGraph::new("x", vec![a.clone(), a]).is_err());
        assert!(DynamicGraph::new("x", vec![]).is_err());
    }

    #[test]
    fn labels_bookkeeping() {
        let mut l = NodeLabels::new();
        l.mark_timestamp(4);
        l.insert(2, 5);
        l.insert(1, 5);
        assert_eq!(l.label(2, 5), 1);
        assert_eq!(l.label(2, 4), 0);
        assert_eq!(l.timestamps().collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(l.positives().collect::<Vec<_>>(), vec![(1, 5), (2, 5)]);
        assert_eq!(l.total(), 2);
    }
}
