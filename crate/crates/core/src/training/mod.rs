//! Forward pass over one window, exact gradients, and the training loop.

mod checkpoint;
mod loss;
mod optim;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, read_header, save_checkpoint, CheckpointHeader, Precision,
    TensorEntry, CHECKPOINT_VERSION,
};
pub use loss::{loss_compactness, loss_reconstruction, loss_separateness};
pub use optim::{Adam, AdamConfig};

use crate::autograd::{Graph, Var};
use crate::decoder::{
    decode_attributes_g, decode_structure_g, fuse_g, temporal_decode_g, Reconstruction, StructureMode,
    StructureOutput,
};
use crate::encoder::{spatial_encode_g, temporal_encode_g, SpatialEmbeddings, TemporalEmbeddings};
use crate::error::{Error, Result};
use crate::graph_store::{extract_window, DynamicGraph, GraphWindow};
use crate::memory::{attend, read_g, update_g, MemoryBank};
use crate::model::{layout, LossNormalization, ModelConfig, ModelParameters};
use crate::tensor::Matrix;
use loss::{memory_terms_g, reconstruction_g, sample_pairs, StructureTarget};

/// Loss values for one window. Aggregate terms follow the configured
/// normalization; per-node vectors are raw sums.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub com: f64,
    pub sep: f64,
    pub total: f64,
    /// Per-node reconstruction error summed over decoded offsets.
    pub per_node_rec: Vec<f64>,
    /// Per-node nearest-item distance summed over all features of the node.
    pub per_node_com: Vec<f64>,
    /// `τ × N` reconstruction error by window offset (zero where not decoded).
    pub offset_rec: Vec<Vec<f64>>,
    /// `τ × N` nearest-item distances by window offset; the temporal feature
    /// at reduced position `s` counts toward offset `s + τ − τ'`.
    pub offset_com: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub reconstruction: Reconstruction,
    pub loss: LossBreakdown,
    pub spatial: SpatialEmbeddings,
    pub temporal: TemporalEmbeddings,
    pub spatial_readout: Vec<Matrix>,
    pub temporal_readout: Vec<Matrix>,
    /// Memory items after the write step; unchanged unless training.
    pub spatial_items: Vec<Matrix>,
    pub temporal_items: Vec<Matrix>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Apply memory writes.
    pub train: bool,
    /// Varies the negative pairs drawn for sampled structure decoding.
    pub salt: u64,
}

struct Tape {
    graph: Graph,
    vars: ModelParameters<Var>,
    total: Var,
    output: ForwardOutput,
}

fn check_window(cfg: &ModelConfig, window: &GraphWindow) -> Result<()> {
    if window.tau() != cfg.window {
        return Err(Error::Shape(format!(
            "window has {} snapshots, model expects {}",
            window.tau(),
            cfg.window
        )));
    }
    let d = window.snapshot(0).feature_dim();
    if d != cfg.input_dim {
        return Err(Error::Shape(format!("window has {d} features, model expects {}", cfg.input_dim)));
    }
    Ok(())
}

fn structure_rng(cfg: &ModelConfig, salt: u64, end_t: usize, offset: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(((end_t as u64) << 16) | offset as u64);
    rng
}

fn sum_vars(g: &mut Graph, vars: &[Var]) -> Var {
    let mut acc = g.constant(Matrix::zeros(1, 1));
    for &v in vars {
        acc = g.add(acc, v);
    }
    acc
}

fn build(params: &ModelParameters, window: &GraphWindow, opts: ForwardOptions, track: bool) -> Result<Tape> {
    let cfg = &params.config;
    check_window(cfg, window)?;
    let tau = cfg.window;
    let tau_r = cfg.reduced_len().ok_or_else(|| Error::Config("window too short for temporal stack".into()))?;
    let n = window.node_count();
    let h_dim = cfg.hidden_dim;
    let ab = cfg.ablation;

    let mut g = Graph::new();
    let (sp_items, tp_items) = params.item_ranges();
    let frozen = |i: usize| {
        (sp_items.contains(&i) && (ab.no_spatial_memory || !cfg.item_gradients))
            || (tp_items.contains(&i) && (ab.no_temporal_memory || !cfg.item_gradients))
    };
    let bound: Vec<Var> = params
        .tensors()
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            if track && !frozen(i) {
                g.param(m.clone())
            } else {
                g.constant(m.clone())
            }
        })
        .collect();
    let p = ModelParameters::from_tensors(cfg.clone(), bound);

    let mut com_terms = Vec::new();
    let mut sep_terms = Vec::new();
    let mut memory_rows = 0usize;
    let mut offset_com = vec![vec![0.0; n]; tau];

    // Spatial encoding and spatial memory, one sub-bank per offset.
    let h = spatial_encode_g(&mut g, window, &p.encoder);
    let mut m_sp = Vec::with_capacity(tau);
    let mut new_sp = Vec::with_capacity(tau);
    for r in 0..tau {
        let items = p.spatial_bank.items[r];
        if ab.no_spatial_memory {
            m_sp.push(g.constant(Matrix::zeros(n, h_dim)));
            new_sp.push(items);
            continue;
        }
        let bank = &p.spatial_bank;
        let att = attend(&mut g, h[r], items, bank.w_k, bank.w_q);
        let (readout, _) = read_g(&mut g, &att, items);
        let updated = if opts.train {
            update_g(&mut g, &att, h[r], items, bank.w_v, bank.top_k, bank.renormalize)
        } else {
            items
        };
        let t = memory_terms_g(&mut g, h[r], updated, cfg.margin);
        com_terms.push(t.com);
        sep_terms.push(t.sep);
        memory_rows += n;
        offset_com[r] = t.per_row;
        m_sp.push(readout);
        new_sp.push(updated);
    }

    // Temporal encoding and the temporal memory over all τ'·N features.
    let z = temporal_encode_g(&mut g, &h, &p.encoder)?;
    debug_assert_eq!(z.len(), tau_r);
    let mut new_tp = p.temporal_bank.items[0];
    let m_tp: Vec<Var> = if ab.no_temporal_memory {
        (0..tau_r).map(|_| g.constant(Matrix::zeros(n, h_dim))).collect()
    } else {
        let bank = &p.temporal_bank;
        let flat = if tau_r == 1 { z[0] } else { g.concat_rows(&z) };
        let att = attend(&mut g, flat, bank.items[0], bank.w_k, bank.w_q);
        let (readout, _) = read_g(&mut g, &att, bank.items[0]);
        if opts.train {
            new_tp = update_g(&mut g, &att, flat, bank.items[0], bank.w_v, bank.top_k, bank.renormalize);
        }
        let t = memory_terms_g(&mut g, flat, new_tp, cfg.margin);
        com_terms.push(t.com);
        sep_terms.push(t.sep);
        memory_rows += tau_r * n;
        for (s, chunk) in t.per_row.chunks(n).enumerate() {
            let row = &mut offset_com[s + tau - tau_r];
            row.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
        }
        (0..tau_r).map(|s| g.slice_rows(readout, s * n, (s + 1) * n)).collect()
    };

    // Decoding and reconstruction.
    let z_hat = temporal_decode_g(&mut g, &z, &m_tp, &p.decoder)?;
    let offsets: Vec<usize> = if cfg.last_only { vec![tau - 1] } else { (0..tau).collect() };
    let mut rec_terms = Vec::with_capacity(offsets.len());
    let mut offset_rec = vec![vec![0.0; n]; tau];
    let mut attr_vars = Vec::with_capacity(offsets.len());
    let mut struct_vars = Vec::with_capacity(offsets.len());
    for &r in &offsets {
        let snapshot = window.snapshot(r);
        let h_hat = fuse_g(&mut g, m_sp[r], z_hat[r], &p.decoder);
        let x_hat = decode_attributes_g(&mut g, window.norm_adj(r), h_hat, &p.decoder);
        let mode = if n <= cfg.dense_cap {
            StructureMode::Dense
        } else {
            let mut rng = structure_rng(cfg, opts.salt, window.end_t(), r);
            StructureMode::Sampled(sample_pairs(snapshot, &mut rng))
        };
        let a_hat = decode_structure_g(&mut g, h_hat, p.decoder.structure, &mode);
        let target = match &mode {
            StructureMode::Dense => StructureTarget::Dense(snapshot),
            StructureMode::Sampled(pairs) => StructureTarget::sampled(snapshot, pairs),
        };
        let (term, rows) = reconstruction_g(&mut g, x_hat, snapshot.features(), a_hat, &target, cfg.alpha);
        rec_terms.push(term);
        offset_rec[r] = rows;
        attr_vars.push(x_hat);
        struct_vars.push((a_hat, mode));
    }

    let rec_raw = sum_vars(&mut g, &rec_terms);
    let com_raw = sum_vars(&mut g, &com_terms);
    let sep_raw = sum_vars(&mut g, &sep_terms);
    let (rec, com, sep) = match cfg.loss_normalization {
        LossNormalization::Sum => (rec_raw, com_raw, sep_raw),
        LossNormalization::Mean => {
            let rec = g.scale(rec_raw, 1.0 / (offsets.len() * n) as f64);
            let per = 1.0 / memory_rows.max(1) as f64;
            (rec, g.scale(com_raw, per), g.scale(sep_raw, per))
        }
    };
    let rc = g.add(rec, com);
    let total = g.add(rc, sep);

    let value = |v: Var| g.value(v).clone();
    let sum_rows = |rows: &[Vec<f64>]| {
        let mut out = vec![0.0; n];
        for row in rows {
            out.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        out
    };
    let loss = LossBreakdown {
        rec: g.scalar(rec),
        com: g.scalar(com),
        sep: g.scalar(sep),
        total: g.scalar(total),
        per_node_rec: sum_rows(&offset_rec),
        per_node_com: sum_rows(&offset_com),
        offset_rec,
        offset_com,
    };
    let structure = struct_vars
        .into_iter()
        .map(|(v, mode)| match mode {
            StructureMode::Dense => StructureOutput::Dense(value(v)),
            StructureMode::Sampled(pairs) => StructureOutput::Sampled {
                pairs: Arc::clone(&pairs),
                values: value(v).into_vec(),
            },
        })
        .collect();
    let output = ForwardOutput {
        reconstruction: Reconstruction {
            offsets,
            attributes: attr_vars.iter().map(|&v| value(v)).collect(),
            structure,
        },
        loss,
        spatial: SpatialEmbeddings(h.iter().map(|&v| value(v)).collect()),
        temporal: TemporalEmbeddings(z.iter().map(|&v| value(v)).collect()),
        spatial_readout: m_sp.iter().map(|&v| value(v)).collect(),
        temporal_readout: m_tp.iter().map(|&v| value(v)).collect(),
        spatial_items: new_sp.iter().map(|&v| value(v)).collect(),
        temporal_items: vec![value(new_tp)],
    };
    Ok(Tape {
        graph: g,
        vars: p,
        total,
        output,
    })
}

/// Runs the model on one window. With `train`, memory writes are applied
/// (to the returned items only; `params` is never modified).
pub fn forward(params: &ModelParameters, window: &GraphWindow, train: bool) -> Result<ForwardOutput> {
    forward_with(params, window, ForwardOptions { train, salt: 0 })
}

pub fn forward_with(params: &ModelParameters, window: &GraphWindow, opts: ForwardOptions) -> Result<ForwardOutput> {
    Ok(build(params, window, opts, false)?.output)
}

/// Forward pass plus the gradient of the total loss with respect to every
/// parameter in flat order. Frozen tensors get zero gradient.
pub fn gradients_with(
    params: &ModelParameters,
    window: &GraphWindow,
    opts: ForwardOptions,
) -> Result<(ForwardOutput, Vec<f64>)> {
    let tape = build(params, window, opts, true)?;
    let grads = tape.graph.backward(tape.total);
    let infos = layout(&params.config);
    let mut flat = Vec::with_capacity(params.num_parameters());
    for ((&var, m), info) in tape.vars.tensors().into_iter().zip(params.tensors()).zip(&infos) {
        match grads.get(var) {
            Some(gm) => {
                if !gm.is_finite() {
                    return Err(Error::Numeric(format!("non-finite gradient in tensor {}", info.name)));
                }
                flat.extend_from_slice(gm.data());
            }
            None => flat.extend(std::iter::repeat_n(0.0, m.len())),
        }
    }
    Ok((tape.output, flat))
}

/// Gradient of the training-mode loss on one window.
pub fn gradients(params: &ModelParameters, window: &GraphWindow) -> Result<Vec<f64>> {
    Ok(gradients_with(params, window, ForwardOptions { train: true, salt: 0 })?.1)
}

/// Sum of per-window gradients, all taken at the same parameters.
pub fn gradients_batch(params: &ModelParameters, windows: &[GraphWindow]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; params.num_parameters()];
    for w in windows {
        for (a, g) in acc.iter_mut().zip(gradients(params, w)?) {
            *a += g;
        }
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            epochs: 20,
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
        }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("optimizer settings out of range".into()))
        }
    }
}

/// One optimizer step's losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub window_end_t: usize,
    pub rec: f64,
    pub com: f64,
    pub sep: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    pub history: Vec<LossRecord>,
}

impl TrainOutcome {
    /// Mean total loss of each epoch.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in &self.history {
            if sums.len() <= r.epoch {
                sums.resize(r.epoch + 1, (0.0, 0));
            }
            sums[r.epoch].0 += r.total;
            sums[r.epoch].1 += 1;
        }
        sums.into_iter().map(|(s, c)| s / c.max(1) as f64).collect()
    }
}

/// Initializes from `model.seed` and trains on windows ending at the given
/// timestamps.
pub fn train(graph: &DynamicGraph, train_ts: &[usize], model: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if model.input_dim != graph.feature_dim() {
        return Err(Error::Config(format!(
            "model input dimension {} does not match dataset feature dimension {}",
            model.input_dim,
            graph.feature_dim()
        )));
    }
    train_from(graph, train_ts, ModelParameters::init(model)?, cfg)
}

/// Continues training from `params`. Each epoch visits the windows in
/// temporal order with one optimizer step per window: forward with memory
/// writes, backward, write the updated items, Adam step, item renormalization.
pub fn train_from(
    graph: &DynamicGraph,
    train_ts: &[usize],
    mut params: ModelParameters,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = params.config.clone();
    let windows: Vec<GraphWindow> = train_ts
        .iter()
        .filter(|&&t| t + 1 >= model.window)
        .map(|&t| extract_window(graph, t, model.window))
        .collect::<Result<_>>()?;
    if windows.is_empty() {
        return Err(Error::Config(format!(
            "no training window of size {} can be formed",
            model.window
        )));
    }
    cfg.validate()?;
    let mut adam = Adam::new(cfg.optimizer(), params.num_parameters());
    let mut history = Vec::with_capacity(cfg.epochs * windows.len());
    for epoch in 0..cfg.epochs {
        for w in &windows {
            let opts = ForwardOptions { train: true, salt: epoch as u64 + 1 };
            let (out, grads) = gradients_with(&params, w, opts)?;
            let l = &out.loss;
            if !l.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, window ending at {} (rec {}, com {}, sep {})",
                    w.end_t(),
                    l.rec,
                    l.com,
                    l.sep
                )));
            }
            history.push(LossRecord {
                epoch,
                window_end_t: w.end_t(),
                rec: l.rec,
                com: l.com,
                sep: l.sep,
                total: l.total,
            });
            if !model.ablation.no_spatial_memory {
                params.spatial_bank.items = out.spatial_items;
            }
            if !model.ablation.no_temporal_memory {
                params.temporal_bank.items = out.temporal_items;
            }
            let mut flat = params.to_flat();
            adam.step(&mut flat, &grads);
            params.set_flat(&flat);
            if model.mem_renorm {
                renormalize_items(&mut params.spatial_bank);
                renormalize_items(&mut params.temporal_bank);
            }
            if !params.is_finite() {
                return Err(Error::Numeric(format!(
                    "parameters became non-finite at epoch {epoch}, window ending at {}",
                    w.end_t()
                )));
            }
        }
        let n = windows.len();
        let mean = history[history.len() - n..].iter().map(|r| r.total).sum::<f64>() / n as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
    }
    Ok(TrainOutcome { params, history })
}

fn renormalize_items(bank: &mut MemoryBank) {
    for items in &mut bank.items {
        for (i, norm) in items.row_norms().into_iter().enumerate() {
            if norm > 0.0 {
                items.row_mut(i).iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
}

/// Writes `epoch,window_end_t,rec,com,sep,total` rows.
pub fn write_loss_history(history: &[LossRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in history {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_store::Snapshot;
    use crate::model::Ablation;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            hidden_dim: 4,
            window: 3,
            kernel_width: 2,
            spatial_items: 2,
            temporal_items: 2,
            ..ModelConfig::default()
        }
    }

    fn tiny_graph(t: usize) -> DynamicGraph {
        let snaps = (0..t)
            .map(|ti| {
                let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (ti % 6, (ti + 3) % 6)];
                let x = Matrix::from_fn(6, 3, |i, j| ((i * 3 + j + ti) as f64 * 0.7).sin());
                Snapshot::new(ti, 6, edges, x).unwrap()
            })
            .collect();
        DynamicGraph::new("tiny", snaps).unwrap()
    }

    #[test]
    fn inference_is_deterministic_and_total_is_sum() {
        let p = ModelParameters::init(&tiny_cfg()).unwrap();
        let w = extract_window(&tiny_graph(4), 3, 3).unwrap();
        let a = forward(&p, &w, false).unwrap();
        let b = forward(&p, &w, false).unwrap();
        assert_eq!(a.loss, b.loss);
        let l = &a.loss;
        assert!((l.total - (l.rec + l.com + l.sep)).abs() < 1e-9);
        assert!(l.rec >= 0.0 && l.com >= 0.0 && l.sep >= 0.0);
        assert_eq!(a.spatial_items, p.spatial_bank.items);
        assert_eq!(a.reconstruction.attributes.len(), 3);
    }

    #[test]
    fn last_only_decodes_one_offset() {
        let cfg = ModelConfig { last_only: true, ..tiny_cfg() };
        let p = ModelParameters::init(&cfg).unwrap();
        let w = extract_window(&tiny_graph(4), 3, 3).unwrap();
        let out = forward(&p, &w, false).unwrap();
        assert_eq!(out.reconstruction.offsets, vec![2]);
        assert!(out.loss.offset_rec[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spatial_ablation_zeroes_readout_and_freezes_bank() {
        let cfg = ModelConfig {
            ablation: Ablation { no_spatial_memory: true, ..Ablation::default() },
            ..tiny_cfg()
        };
        let p = ModelParameters::init(&cfg).unwrap();
        let w = extract_window(&tiny_graph(4), 3, 3).unwrap();
        let (out, grads) = gradients_with(&p, &w, ForwardOptions { train: true, salt: 0 }).unwrap();
        assert!(out.spatial_readout.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
        assert_eq!(out.spatial_items, p.spatial_bank.items);
        let (sp, _) = p.item_ranges();
        let start: usize = p.tensors()[..sp.start].iter().map(|m| m.len()).sum();
        let bank_len: usize = p.spatial_bank.tensors().iter().map(|m| m.len()).sum();
        assert!(grads[start..start + bank_len].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_window_doubles_gradient() {
        let p = ModelParameters::init(&tiny_cfg()).unwrap();
        let w = extract_window(&tiny_graph(4), 3, 3).unwrap();
        let one = gradients(&p, &w).unwrap();
        let two = gradients_batch(&p, &[w.clone(), w]).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((2.0 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let g = tiny_graph(5);
        let cfg = tiny_cfg();
        let out = train(&g, &[0, 1, 2, 3], &cfg, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
        assert_eq!(out.params, ModelParameters::init(&cfg).unwrap());
        assert!(out.history.is_empty());
    }

    #[test]
    fn training_is_seeded() {
        let g = tiny_graph(5);
        let cfg = tiny_cfg();
        let tc = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let a = train(&g, &[0, 1, 2, 3], &cfg, &tc).unwrap();
        let b = train(&g, &[0, 1, 2, 3], &cfg, &tc).unwrap();
        assert_eq!(
            checkpoint_bytes(&a.params, Precision::F64),
            checkpoint_bytes(&b.params, Precision::F64)
        );
        assert_eq!(a.history.len(), 4);
        for items in a.params.spatial_bank.items.iter().chain(&a.params.temporal_bank.items) {
            assert!(items.row_norms().iter().all(|n| (n - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn too_short_history_is_rejected() {
        let err = train(&tiny_graph(5), &[0, 1], &tiny_cfg(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn sampled_mode_matches_dense_entries() {
        let dense_cfg = tiny_cfg();
        let sampled_cfg = ModelConfig { dense_cap: 1, ..tiny_cfg() };
        let p = ModelParameters::init(&dense_cfg).unwrap();
        let mut q = p.clone();
        q.config = sampled_cfg;
        let w = extract_window(&tiny_graph(4), 3, 3).unwrap();
        let d = forward(&p, &w, false).unwrap();
        let s = forward(&q, &w, false).unwrap();
        for (dm, sm) in d.reconstruction.structure.iter().zip(&s.reconstruction.structure) {
            let StructureOutput::Sampled { pairs, values } = sm else { panic!("expected sampled") };
            for (&(i, j), &v) in pairs.iter().zip(values) {
                assert!((dm.get(i, j).unwrap() - v).abs() < 1e-14);
            }
        }
    }
}
