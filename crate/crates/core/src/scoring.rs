//! Per-node anomaly scores on test windows and ranking/threshold metrics.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_store::{extract_window, DynamicGraph, NodeLabels};
use crate::model::{Ablation, ModelConfig, ModelParameters};
use crate::training::{forward_with, ForwardOptions};

/// Which window offsets contribute to the score of `(node, t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreAttribution {
    /// Only the final offset of the window ending at `t`.
    #[default]
    WindowEnd,
    /// Every decoded offset of every scored window; duplicate `(node, t)`
    /// values are averaged.
    AllOffsets,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Rounds averaged per window (R).
    pub rounds: usize,
    /// Edge dropout probability applied to rounds after the first.
    pub edge_dropout: f64,
    pub attribution: ScoreAttribution,
    pub seed: u64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            rounds: 1,
            edge_dropout: 0.0,
            attribution: ScoreAttribution::WindowEnd,
            seed: 0,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("at least one scoring round is required".into()));
        }
        if !(0.0..1.0).contains(&self.edge_dropout) {
            return Err(Error::Config(format!("edge dropout {} outside [0, 1)", self.edge_dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub node: usize,
    pub timestamp: usize,
    pub score: f64,
    pub rec_part: f64,
    pub com_part: f64,
}

/// Rows ordered by `(timestamp, node)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn labels(&self, labels: &NodeLabels) -> Vec<u8> {
        self.rows.iter().map(|r| labels.label(r.node, r.timestamp)).collect()
    }

    pub fn timestamps(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = self.rows.iter().map(|r| r.timestamp).collect();
        ts.dedup();
        ts
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ScoreRow>, _>>()
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        Ok(Self { rows })
    }
}

/// Scores every node at every test timestamp that ends a full window.
/// Memory banks are read but never written.
/// Window end with its offset reconstruction and compactness rows (averaged
/// over rounds) and the decoded offsets.
type WindowScores = (usize, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<usize>);

pub fn score_nodes(params: &ModelParameters, graph: &DynamicGraph, test_ts: &[usize], cfg: &ScoreConfig) -> Result<ScoreTable> {
    cfg.validate()?;
    let model = &params.config;
    if model.input_dim != graph.feature_dim() {
        return Err(Error::Config(format!(
            "model input dimension {} does not match dataset feature dimension {}",
            model.input_dim,
            graph.feature_dim()
        )));
    }
    let tau = model.window;
    let mut test: Vec<usize> = test_ts.to_vec();
    test.sort_unstable();
    test.dedup();
    let ends: Vec<usize> = test.iter().copied().filter(|&t| t + 1 >= tau).collect();
    if ends.len() < test.len() {
        log::warn!("{} test timestamps lack a full window and are not scored", test.len() - ends.len());
    }

    let per_window: Vec<WindowScores> = ends
        .par_iter()
        .map(|&end| -> Result<_> {
            let window = extract_window(graph, end, tau)?;
            let mut rec: Vec<Vec<f64>> = Vec::new();
            let mut com: Vec<Vec<f64>> = Vec::new();
            let mut offsets = Vec::new();
            let perturb = cfg.edge_dropout > 0.0;
            let rounds = if perturb { cfg.rounds } else { 1 };
            for round in 0..rounds {
                let w = if round == 0 {
                    window.clone()
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(((end as u64) << 20) | round as u64);
                    window.with_edge_dropout(cfg.edge_dropout, &mut rng)
                };
                let out = forward_with(params, &w, ForwardOptions { train: false, salt: 0 })?;
                let k = (round + 1) as f64;
                if round == 0 {
                    rec = out.loss.offset_rec;
                    com = out.loss.offset_com;
                    offsets = out.reconstruction.offsets;
                } else {
                    for (acc, new) in rec.iter_mut().zip(&out.loss.offset_rec).chain(com.iter_mut().zip(&out.loss.offset_com)) {
                        acc.iter_mut().zip(new).for_each(|(a, x)| *a += (x - *a) / k);
                    }
                }
            }
            Ok((end, rec, com, offsets))
        })
        .collect::<Result<_>>()?;

    let test_set: std::collections::BTreeSet<usize> = test.iter().copied().collect();
    let n = graph.node_count();
    // (timestamp) -> per-node (rec sum, com sum, count)
    let mut acc: BTreeMap<usize, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for (end, rec, com, offsets) in &per_window {
        let start = end + 1 - tau;
        let chosen: Vec<usize> = match cfg.attribution {
            ScoreAttribution::WindowEnd => vec![tau - 1],
            ScoreAttribution::AllOffsets => offsets.clone(),
        };
        for o in chosen {
            let t = start + o;
            if !test_set.contains(&t) {
                continue;
            }
            let e = acc.entry(t).or_insert_with(|| (vec![0.0; n], vec![0.0; n], 0));
            e.0.iter_mut().zip(&rec[o]).for_each(|(a, b)| *a += b);
            e.1.iter_mut().zip(&com[o]).for_each(|(a, b)| *a += b);
            e.2 += 1;
        }
    }
    let mut rows = Vec::with_capacity(acc.len() * n);
    for (t, (rec, com, count)) in acc {
        let c = count as f64;
        for node in 0..n {
            let (r, m) = (rec[node] / c, com[node] / c);
            rows.push(ScoreRow {
                node,
                timestamp: t,
                score: r + m,
                rec_part: r,
                com_part: m,
            });
        }
    }
    Ok(ScoreTable { rows })
}

fn class_counts(labels: &[u8]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&l| l != 0).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Eval("metrics need both anomalous and normal labels".into()));
    }
    Ok((pos, neg))
}

/// ROC-AUC by the Mann–Whitney rank statistic with midranks for ties.
pub fn compute_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Eval("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Eval("NaN score".into()));
    }
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Doubled ranks keep midranks integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let doubled = (i + 1 + j) as u128;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k] != 0).count() as u128;
        rank_sum2 += doubled * tied_pos;
        i = j;
    }
    let pos2 = pos as u128;
    let u2 = rank_sum2 - pos2 * (pos2 + 1);
    Ok(u2 as f64 / (2 * pos as u128 * neg as u128) as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// Flag the k highest scores, k being the number of true anomalies.
    #[default]
    TopK,
    /// Threshold maximizing macro-F1 over all distinct scores.
    BestF1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub rule: ThresholdRule,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let d = 2 * tp + fp + fn_;
    if d == 0 {
        0.0
    } else {
        2.0 * tp as f64 / d as f64
    }
}

fn metrics_from(rule: ThresholdRule, threshold: f64, predicted: &[bool], labels: &[u8]) -> ThresholdMetrics {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &l) in predicted.iter().zip(labels) {
        match (p, l != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: u64, b: u64| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    ThresholdMetrics {
        rule,
        threshold,
        precision: ratio(tp, fp),
        recall: ratio(tp, fn_),
        macro_f1: 0.5 * (f1(tp, fp, fn_) + f1(tn, fn_, fp)),
        tp,
        fp,
        fn_,
        tn,
    }
}

/// Binarizes scores by `rule` and reports precision of the anomalous class
/// and macro-F1 over both classes.
pub fn compute_threshold_metrics(scores: &[f64], labels: &[u8], rule: ThresholdRule) -> Result<ThresholdMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::Eval("scores and labels differ in length".into()));
    }
    let (pos, _) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    match rule {
        ThresholdRule::TopK => {
            let k = pos as usize;
            let mut predicted = vec![false; scores.len()];
            order[..k].iter().for_each(|&i| predicted[i] = true);
            Ok(metrics_from(rule, scores[order[k - 1]], &predicted, labels))
        }
        ThresholdRule::BestF1 => {
            let total_pos = pos;
            let total_neg = scores.len() as u64 - pos;
            let (mut tp, mut fp) = (0u64, 0u64);
            let mut best: Option<(f64, usize)> = None;
            let mut i = 0;
            while i < order.len() {
                let s = scores[order[i]];
                while i < order.len() && scores[order[i]] == s {
                    if labels[order[i]] != 0 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                    i += 1;
                }
                let fn_ = total_pos - tp;
                let tn = total_neg - fp;
                let m = 0.5 * (f1(tp, fp, fn_) + f1(tn, fn_, fp));
                if best.is_none_or(|(b, _)| m > b) {
                    best = Some((m, i));
                }
            }
            let (_, cut) = best.expect("nonempty scores");
            let mut predicted = vec![false; scores.len()];
            order[..cut].iter().for_each(|&k| predicted[k] = true);
            Ok(metrics_from(rule, scores[order[cut - 1]], &predicted, labels))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub train_s: f64,
    pub score_s: f64,
}

/// Metrics for one scored run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub precision: f64,
    pub macro_f1: f64,
    pub threshold_rule: ThresholdRule,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub best_f1: ThresholdMetrics,
    pub scored: usize,
    pub anomalies: usize,
    pub timings: Timings,
    pub config: serde_json::Value,
}

pub fn evaluate(table: &ScoreTable, labels: &NodeLabels, rule: ThresholdRule) -> Result<EvalReport> {
    let scores = table.scores();
    let y = table.labels(labels);
    let auc = compute_auc(&scores, &y)?;
    let main = compute_threshold_metrics(&scores, &y, rule)?;
    let best = compute_threshold_metrics(&scores, &y, ThresholdRule::BestF1)?;
    Ok(EvalReport {
        auc,
        precision: main.precision,
        macro_f1: main.macro_f1,
        threshold_rule: rule,
        tp: main.tp,
        fp: main.fp,
        fn_: main.fn_,
        tn: main.tn,
        best_f1: best,
        scored: scores.len(),
        anomalies: y.iter().filter(|&&l| l != 0).count(),
        timings: Timings::default(),
        config: serde_json::Value::Null,
    })
}

/// Model variants compared in ablation runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    /// α = 0: structure reconstruction only.
    NoAttribute,
    /// α = 1: attribute reconstruction only.
    NoStructure,
    /// τ = 1 with no temporal convolution.
    NoTemporary,
    NoSPrototype,
    NoTPrototype,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoAttribute,
        Variant::NoStructure,
        Variant::NoTemporary,
        Variant::NoSPrototype,
        Variant::NoTPrototype,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAttribute => "no-attribute",
            Variant::NoStructure => "no-structure",
            Variant::NoTemporary => "no-temporary",
            Variant::NoSPrototype => "no-s-prototype",
            Variant::NoTPrototype => "no-t-prototype",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation variant {s:?}")))
    }

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoAttribute => c.alpha = 0.0,
            Variant::NoStructure => c.alpha = 1.0,
            Variant::NoTemporary => {
                c.window = 1;
                c.temporal_layers = 0;
            }
            Variant::NoSPrototype => c.ablation = Ablation { no_spatial_memory: true, ..c.ablation },
            Variant::NoTPrototype => c.ablation = Ablation { no_temporal_memory: true, ..c.ablation },
        }
        c
    }
}
