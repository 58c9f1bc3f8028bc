//! Reconstruction, compactness and separateness terms.
//!
//! The graph helpers return raw sums; the forward pass applies the
//! configured normalization. Nearest and second-nearest items are chosen
//! from forward values and held fixed for differentiation.

use std::sync::Arc;

use crate::autograd::{Graph, Var};
use crate::decoder::{Reconstruction, StructureOutput};
use crate::error::{Error, Result};
use crate::graph_store::{GraphWindow, Snapshot};
use crate::tensor::Matrix;

/// Target entries for one decoded structure.
pub(crate) enum StructureTarget<'a> {
    Dense(&'a Snapshot),
    /// One target per sampled pair.
    Sampled {
        pairs: &'a [(usize, usize)],
        targets: Vec<f64>,
    },
}

impl StructureTarget<'_> {
    pub(crate) fn sampled<'a>(snapshot: &Snapshot, pairs: &'a [(usize, usize)]) -> StructureTarget<'a> {
        let targets = pairs
            .iter()
            .map(|&(i, j)| if snapshot.has_edge(i, j) { 1.0 } else { 0.0 })
            .collect();
        StructureTarget::Sampled { pairs, targets }
    }
}

/// `α‖X̂ − X‖_F + (1 − α)‖Â − A‖_F` for one snapshot, with the per-node
/// `α‖x̂_i − x_i‖ + (1 − α)‖â_i − a_i‖`. In sampled mode each pair's error
/// counts toward both endpoints.
pub(crate) fn reconstruction_g(
    g: &mut Graph,
    x_hat: Var,
    x: &Matrix,
    a_hat: Var,
    target: &StructureTarget,
    alpha: f64,
) -> (Var, Vec<f64>) {
    let n = x.rows();
    let xc = g.constant(x.clone());
    let dx = g.sub(x_hat, xc);
    let fx = g.frobenius_norm(dx);
    let attr_rows = g.value(dx).row_norms();

    let (da, struct_rows) = match target {
        StructureTarget::Dense(s) => {
            let ac = g.constant(s.dense_adjacency());
            let da = g.sub(a_hat, ac);
            let rows = g.value(da).row_norms();
            (da, rows)
        }
        StructureTarget::Sampled { pairs, targets } => {
            let tc = g.constant(Matrix::from_vec(targets.len(), 1, targets.clone()));
            let da = g.sub(a_hat, tc);
            let mut sq = vec![0.0; n];
            for (&(i, j), e) in pairs.iter().zip(g.value(da).data()) {
                sq[i] += e * e;
                if i != j {
                    sq[j] += e * e;
                }
            }
            (da, sq.into_iter().map(f64::sqrt).collect())
        }
    };
    let fa = g.frobenius_norm(da);
    let wx = g.scale(fx, alpha);
    let wa = g.scale(fa, 1.0 - alpha);
    let total = g.add(wx, wa);
    let per_node = attr_rows
        .iter()
        .zip(&struct_rows)
        .map(|(a, s)| alpha * a + (1.0 - alpha) * s)
        .collect();
    (total, per_node)
}

/// Indices of the nearest and second-nearest item for every feature row by
/// Euclidean distance; ties go to the lower index. A single item is its
/// own second-nearest.
pub(crate) fn nearest_two(features: &Matrix, items: &Matrix) -> Vec<(usize, usize)> {
    let dists = squared_distances(features, items);
    let p = items.rows();
    (0..features.rows())
        .map(|i| {
            let row = &dists[i * p..(i + 1) * p];
            let mut best = (usize::MAX, usize::MAX);
            for j in 0..p {
                if best.0 == usize::MAX || row[j] < row[best.0] {
                    best = (j, best.0);
                } else if best.1 == usize::MAX || row[j] < row[best.1] {
                    best.1 = j;
                }
            }
            if best.1 == usize::MAX {
                best.1 = best.0;
            }
            best
        })
        .collect()
}

fn squared_distances(f: &Matrix, m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.rows() * m.rows());
    for i in 0..f.rows() {
        let a = f.row(i);
        for j in 0..m.rows() {
            out.push(a.iter().zip(m.row(j)).map(|(x, y)| (x - y) * (x - y)).sum());
        }
    }
    out
}

/// Compactness and separateness against one item matrix.
pub(crate) struct MemoryTerms {
    pub com: Var,
    pub sep: Var,
    /// Distance of each feature row to its nearest item.
    pub per_row: Vec<f64>,
}

pub(crate) fn memory_terms_g(g: &mut Graph, features: Var, items: Var, margin: f64) -> MemoryTerms {
    let pairs = nearest_two(g.value(features), g.value(items));
    let first: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let second: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let m1 = g.gather_rows(items, first);
    let diff1 = g.sub(features, m1);
    let d1 = g.row_norms(diff1);
    let per_row = g.value(d1).data().to_vec();
    let com = g.sum(d1);
    let m2 = g.gather_rows(items, second);
    let diff2 = g.sub(features, m2);
    let d2 = g.row_norms(diff2);
    let gap = g.sub(d1, d2);
    let shifted = g.add_scalar(gap, margin);
    let hinge = g.relu(shifted);
    let sep = g.sum(hinge);
    MemoryTerms { com, sep, per_row }
}

/// Raw reconstruction loss of a decoded window against its snapshots, with
/// per-node values summed over the decoded offsets.
pub fn loss_reconstruction(recon: &Reconstruction, window: &GraphWindow, alpha: f64) -> Result<(f64, Vec<f64>)> {
    let n = window.node_count();
    let mut total = 0.0;
    let mut per_node = vec![0.0; n];
    for ((&offset, x_hat), a_hat) in recon.offsets.iter().zip(&recon.attributes).zip(&recon.structure) {
        if offset >= window.tau() {
            return Err(Error::Shape(format!("offset {offset} outside window of {}", window.tau())));
        }
        let s = window.snapshot(offset);
        if x_hat.shape() != s.features().shape() {
            return Err(Error::Shape("reconstructed attributes do not match snapshot".into()));
        }
        let mut g = Graph::new();
        let xh = g.constant(x_hat.clone());
        let (ah, target) = match a_hat {
            StructureOutput::Dense(m) => {
                if m.shape() != (n, n) {
                    return Err(Error::Shape("reconstructed structure is not N×N".into()));
                }
                (g.constant(m.clone()), StructureTarget::Dense(s))
            }
            StructureOutput::Sampled { pairs, values } => {
                if pairs.iter().any(|&(i, j)| i >= n || j >= n) {
                    return Err(Error::Shape("sampled pair out of range".into()));
                }
                let v = g.constant(Matrix::from_vec(values.len(), 1, values.clone()));
                (v, StructureTarget::sampled(s, pairs))
            }
        };
        let (loss, rows) = reconstruction_g(&mut g, xh, s.features(), ah, &target, alpha);
        total += g.scalar(loss);
        per_node.iter_mut().zip(rows).for_each(|(a, b)| *a += b);
    }
    Ok((total, per_node))
}

/// Raw compactness of every feature matrix against its item matrix:
/// `features[r]` is matched with `items[r]`. Returns the sum and the
/// per-row distances of each feature matrix.
pub fn loss_compactness(features: &[Matrix], items: &[Matrix]) -> Result<(f64, Vec<Vec<f64>>)> {
    check_pairs(features, items, 1)?;
    let mut total = 0.0;
    let mut rows = Vec::with_capacity(features.len());
    for (f, m) in features.iter().zip(items) {
        let mut g = Graph::new();
        let (fv, mv) = (g.constant(f.clone()), g.constant(m.clone()));
        let t = memory_terms_g(&mut g, fv, mv, 0.0);
        total += g.scalar(t.com);
        rows.push(t.per_row);
    }
    Ok((total, rows))
}

/// Raw separateness `Σ [d_nearest − d_second + γ]₊`.
pub fn loss_separateness(features: &[Matrix], items: &[Matrix], margin: f64) -> Result<f64> {
    check_pairs(features, items, 2)?;
    let mut total = 0.0;
    for (f, m) in features.iter().zip(items) {
        let mut g = Graph::new();
        let (fv, mv) = (g.constant(f.clone()), g.constant(m.clone()));
        let t = memory_terms_g(&mut g, fv, mv, margin);
        total += g.scalar(t.sep);
    }
    Ok(total)
}

fn check_pairs(features: &[Matrix], items: &[Matrix], min_items: usize) -> Result<()> {
    if features.len() != items.len() {
        return Err(Error::Shape("one item matrix is needed per feature matrix".into()));
    }
    for (f, m) in features.iter().zip(items) {
        if m.rows() < min_items {
            return Err(Error::Config(format!("memory needs at least {min_items} items")));
        }
        if f.cols() != m.cols() {
            return Err(Error::Shape("feature and item widths differ".into()));
        }
    }
    Ok(())
}

/// Sampled structure pairs: every undirected edge `(u, v)` with `u < v`
/// followed by as many distinct non-edges drawn uniformly.
pub(crate) fn sample_pairs(snapshot: &Snapshot, rng: &mut impl rand::Rng) -> Arc<Vec<(usize, usize)>> {
    let n = snapshot.node_count();
    let mut pairs: Vec<(usize, usize)> = snapshot.undirected_edges().collect();
    let positives = pairs.len();
    let capacity = n * n.saturating_sub(1) / 2 - positives;
    let want = positives.min(capacity);
    let mut seen = std::collections::HashSet::with_capacity(want);
    while seen.len() < want {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let p = (u.min(v), u.max(v));
        if !snapshot.has_edge(p.0, p.1) && seen.insert(p) {
            pairs.push(p);
        }
    }
    Arc::new(pairs)
}
