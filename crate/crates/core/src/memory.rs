//! Prototype memory banks.
//!
//! Reading is mutual attention: keys are projected items `m_p W_K`, queries
//! are projected features `h_i W_Q`, and the readout for a feature is the
//! softmax-weighted average of the raw items. Writing moves every item toward
//! the projected values `h_i W_V` of its `top_k` best-matching features,
//! weighted by a softmax over features that is renormalized over the kept
//! ones.

use crate::autograd::{Graph, Var};
use crate::encoder::{SpatialEmbeddings, TemporalEmbeddings};
use crate::error::{Error, Result};
use crate::model::TensorInfo;
use crate::tensor::Matrix;

/// A memory bank of `items.len()` sub-banks, each a `P × D'` matrix, sharing
/// one set of key/query/value projections. The spatial bank has one
/// sub-bank per window offset; the temporal bank has a single one.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank<T = Matrix> {
    pub items: Vec<T>,
    pub w_k: T,
    pub w_q: T,
    pub w_v: T,
    pub top_k: usize,
    /// Rescale items to unit norm after each write.
    pub renormalize: bool,
}

impl<T> MemoryBank<T> {
    pub fn tensors(&self) -> Vec<&T> {
        self.items
            .iter()
            .chain([&self.w_k, &self.w_q, &self.w_v])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        self.items
            .iter_mut()
            .chain([&mut self.w_k, &mut self.w_q, &mut self.w_v])
            .collect()
    }

    pub(crate) fn from_iter(
        sub_banks: usize,
        top_k: usize,
        renormalize: bool,
        it: &mut impl Iterator<Item = T>,
    ) -> Self {
        let mut next = || it.next().expect("memory tensor");
        let items = (0..sub_banks).map(|_| next()).collect();
        Self {
            items,
            w_k: next(),
            w_q: next(),
            w_v: next(),
            top_k,
            renormalize,
        }
    }

    pub(crate) fn layout(prefix: &str, sub_banks: usize, items: usize, dim: usize) -> Vec<TensorInfo> {
        let mut out: Vec<TensorInfo> = (0..sub_banks)
            .map(|r| TensorInfo::new(format!("{prefix}.items.{r}"), &[items, dim]))
            .collect();
        for w in ["w_k", "w_q", "w_v"] {
            out.push(TensorInfo::new(format!("{prefix}.{w}"), &[dim, dim]));
        }
        out
    }
}

impl MemoryBank {
    fn check(&self, offset: usize, queries: &Matrix) -> Result<()> {
        let items = self.items.get(offset).ok_or_else(|| {
            Error::Shape(format!("memory has {} sub-banks, asked for {offset}", self.items.len()))
        })?;
        if items.rows() == 0 {
            return Err(Error::Shape("memory sub-bank is empty".into()));
        }
        let d = items.cols();
        if queries.cols() != d || self.w_k.shape() != (d, d) || self.w_q.shape() != (d, d) || self.w_v.shape() != (d, d) {
            return Err(Error::Shape(format!(
                "memory of width {d} cannot serve queries of width {}",
                queries.cols()
            )));
        }
        Ok(())
    }

    fn bind(&self, g: &mut Graph) -> MemoryBank<Var> {
        MemoryBank {
            items: self.items.iter().map(|m| g.constant(m.clone())).collect(),
            w_k: g.constant(self.w_k.clone()),
            w_q: g.constant(self.w_q.clone()),
            w_v: g.constant(self.w_v.clone()),
            top_k: self.top_k,
            renormalize: self.renormalize,
        }
    }
}

/// Attention readout and the read weights (one probability row per query).
#[derive(Clone, Debug, PartialEq)]
pub struct ReadResult {
    pub readout: Matrix,
    pub weights: Matrix,
}

/// Scaled logits `q_i · k_pᵀ / √D'` shared by read and write.
pub(crate) struct Attention {
    /// `Q × P`
    pub logits: Var,
}

pub(crate) fn attend(g: &mut Graph, queries: Var, items: Var, w_k: Var, w_q: Var) -> Attention {
    let d = g.value(items).cols() as f64;
    let keys = g.matmul(items, w_k);
    let q = g.matmul(queries, w_q);
    let raw = g.matmul_nt(q, keys);
    Attention {
        logits: g.scale(raw, 1.0 / d.sqrt()),
    }
}

/// Returns `(readout, weights)`.
pub(crate) fn read_g(g: &mut Graph, att: &Attention, items: Var) -> (Var, Var) {
    let w = g.softmax_rows(att.logits, None);
    (g.matmul(w, items), w)
}

/// Per-item mask of the `top_k` largest logits over features; ties keep the
/// lower feature index. `logits_t` is `P × Q`.
pub(crate) fn top_k_mask(logits_t: &Matrix, top_k: usize) -> Vec<bool> {
    let (p, q) = logits_t.shape();
    let k = top_k.min(q);
    let mut mask = vec![false; p * q];
    let mut order: Vec<usize> = (0..q).collect();
    for item in 0..p {
        let row = logits_t.row(item);
        let cmp = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
        if k < q {
            order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
            order.select_nth_unstable_by(k - 1, cmp);
        }
        for &i in &order[..k] {
            mask[item * q + i] = true;
        }
    }
    mask
}

/// Updated items after one write from `features`.
pub(crate) fn update_g(
    g: &mut Graph,
    att: &Attention,
    features: Var,
    items: Var,
    w_v: Var,
    top_k: usize,
    renormalize: bool,
) -> Var {
    let logits_t = g.transpose(att.logits);
    let mask = top_k_mask(g.value(logits_t), top_k);
    let mu = g.softmax_rows(logits_t, Some(&mask));
    let values = g.matmul(features, w_v);
    let delta = g.matmul(mu, values);
    let moved = g.add(items, delta);
    if renormalize {
        g.normalize_rows(moved)
    } else {
        moved
    }
}

/// Softmax-attention read of sub-bank `offset`.
pub fn attention_read(queries: &Matrix, bank: &MemoryBank, offset: usize) -> Result<ReadResult> {
    bank.check(offset, queries)?;
    let mut g = Graph::new();
    let b = bank.bind(&mut g);
    let q = g.constant(queries.clone());
    let att = attend(&mut g, q, b.items[offset], b.w_k, b.w_q);
    let (readout, weights) = read_g(&mut g, &att, b.items[offset]);
    Ok(ReadResult {
        readout: g.value(readout).clone(),
        weights: g.value(weights).clone(),
    })
}

/// Bank after writing `features` into sub-bank `offset`.
pub fn memory_update(features: &Matrix, bank: &MemoryBank, offset: usize) -> Result<MemoryBank> {
    bank.check(offset, features)?;
    if features.rows() == 0 {
        return Err(Error::Shape("memory update needs at least one feature".into()));
    }
    let mut g = Graph::new();
    let b = bank.bind(&mut g);
    let f = g.constant(features.clone());
    let att = attend(&mut g, f, b.items[offset], b.w_k, b.w_q);
    let new = update_g(&mut g, &att, f, b.items[offset], b.w_v, bank.top_k, bank.renormalize);
    let mut out = bank.clone();
    out.items[offset] = g.value(new).clone();
    Ok(out)
}

/// Reads sub-bank `r` with `H[r]` for every offset; with `train`, each
/// sub-bank is written after its read.
pub fn spatial_memory_pass(h: &SpatialEmbeddings, bank: &mut MemoryBank, train: bool) -> Result<Vec<Matrix>> {
    if h.len() != bank.items.len() {
        return Err(Error::Shape(format!(
            "spatial memory has {} sub-banks but the window has {} snapshots",
            bank.items.len(),
            h.len()
        )));
    }
    let mut out = Vec::with_capacity(h.len());
    for (r, hr) in h.0.iter().enumerate() {
        out.push(attention_read(hr, bank, r)?.readout);
        if train {
            *bank = memory_update(hr, bank, r)?;
        }
    }
    Ok(out)
}

/// Reads the temporal bank with all `τ'·N` temporal features at once; with
/// `train`, writes them afterwards.
pub fn temporal_memory_pass(z: &TemporalEmbeddings, bank: &mut MemoryBank, train: bool) -> Result<Vec<Matrix>> {
    if z.is_empty() {
        return Ok(Vec::new());
    }
    let n = z.0[0].rows();
    let parts: Vec<&Matrix> = z.0.iter().collect();
    let flat = Matrix::concat_rows(&parts);
    let read = attention_read(&flat, bank, 0)?;
    if train {
        *bank = memory_update(&flat, bank, 0)?;
    }
    Ok((0..z.len())
        .map(|s| read.readout.slice_rows(s * n, (s + 1) * n))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(items: Matrix) -> MemoryBank {
        let d = items.cols();
        MemoryBank {
            items: vec![items],
            w_k: Matrix::identity(d),
            w_q: Matrix::identity(d),
            w_v: Matrix::identity(d),
            top_k: 32,
            renormalize: true,
        }
    }

    #[test]
    fn single_item_reads_itself() {
        let b = bank(Matrix::from_rows(&[[0.6, 0.8]]));
        let q = Matrix::from_rows(&[[1.0, -2.0], [3.0, 0.5]]);
        let r = attention_read(&q, &b, 0).unwrap();
        for i in 0..2 {
            assert_eq!(r.weights.get(i, 0), 1.0);
            assert_eq!(r.readout.row(i), &[0.6, 0.8]);
        }
    }

    #[test]
    fn identical_items_get_uniform_weights() {
        let b = bank(Matrix::filled(4, 2, 0.5));
        let r = attention_read(&Matrix::from_rows(&[[1.0, 2.0]]), &b, 0).unwrap();
        assert!(r.weights.data().iter().all(|&w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn scalar_softmax_case() {
        let b = bank(Matrix::from_rows(&[[1.0], [-1.0]]));
        let r = attention_read(&Matrix::from_rows(&[[2.0]]), &b, 0).unwrap();
        let w0 = 1.0 / (1.0 + (-4f64).exp());
        assert!((r.weights.get(0, 0) - w0).abs() < 1e-15);
        assert!((r.weights.get(0, 0) - 0.9820).abs() < 1e-4);
        assert!((r.weights.get(0, 1) - 0.0180).abs() < 1e-4);
        assert!((r.readout.get(0, 0) - 0.9641).abs() < 1e-4);
    }

    #[test]
    fn single_feature_update_adds_value_then_normalizes() {
        let mut b = bank(Matrix::from_rows(&[[1.0, 0.0]]));
        b.top_k = 1;
        let out = memory_update(&Matrix::from_rows(&[[0.0, 1.0]]), &b, 0).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!(out.items[0].max_abs_diff(&Matrix::from_rows(&[[s, s]])) < 1e-15);
    }

    #[test]
    fn zero_value_projection_leaves_unit_items() {
        let mut b = bank(Matrix::from_rows(&[[0.6, 0.8], [1.0, 0.0]]));
        b.w_v = Matrix::zeros(2, 2);
        let out = memory_update(&Matrix::from_rows(&[[3.0, 1.0], [-1.0, 2.0]]), &b, 0).unwrap();
        assert!(out.items[0].max_abs_diff(&b.items[0]) < 1e-15);
    }

    #[test]
    fn top_k_renormalizes_kept_weights() {
        // One item with key [1]; features chosen so μ = (0.5, 0.3, 0.2).
        let mu = [0.5f64, 0.3, 0.2];
        let feats = Matrix::from_rows(&mu.map(|m| [m.ln()]));
        let mut b = bank(Matrix::from_rows(&[[1.0]]));
        b.top_k = 2;
        b.renormalize = false;
        let out = memory_update(&feats, &b, 0).unwrap();
        let want = 1.0 + 0.625 * mu[0].ln() + 0.375 * mu[1].ln();
        assert!((out.items[0].get(0, 0) - want).abs() < 1e-12);
    }

    #[test]
    fn top_k_mask_ties_prefer_low_index() {
        let l = Matrix::from_rows(&[[1.0, 3.0, 3.0, 0.0], [2.0, 2.0, 2.0, 2.0]]);
        let m = top_k_mask(&l, 2);
        assert_eq!(m, vec![false, true, true, false, true, true, false, false]);
        let all = top_k_mask(&l, 10);
        assert!(all.iter().all(|&b| b));
    }

    #[test]
    fn passes_respect_train_flag() {
        let items = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let mut sp = MemoryBank {
            items: vec![items.clone(), items.clone()],
            ..bank(items.clone())
        };
        let h = SpatialEmbeddings(vec![
            Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]),
            Matrix::from_rows(&[[2.0, 0.5], [1.0, 1.0]]),
        ]);
        let before = sp.clone();
        let a = spatial_memory_pass(&h, &mut sp, false).unwrap();
        let b = spatial_memory_pass(&h, &mut sp, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(sp, before);
        let manual: Vec<Matrix> = (0..2)
            .map(|r| attention_read(&h.0[r], &before, r).unwrap().readout)
            .collect();
        assert_eq!(a, manual);
        spatial_memory_pass(&h, &mut sp, true).unwrap();
        assert_ne!(sp, before);

        let mut tp = bank(items);
        let frozen = tp.clone();
        let z = TemporalEmbeddings(vec![Matrix::from_rows(&[[0.3, 0.1]])]);
        temporal_memory_pass(&z, &mut tp, false).unwrap();
        assert_eq!(tp, frozen);
        assert!(spatial_memory_pass(&SpatialEmbeddings(vec![z.0[0].clone()]), &mut sp, false).is_err());
    }
}
