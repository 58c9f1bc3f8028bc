//! End-to-end runs: split, train, score, evaluate.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph_store::{split_temporal, DynamicGraph, NodeLabels};
use crate::inject::{inject_all, InjectionConfig};
use crate::model::{ModelConfig, ModelParameters};
use crate::scoring::{evaluate, score_nodes, EvalReport, ScoreConfig, ScoreTable, ThresholdRule, Variant};
use crate::synthetic::{generate, SyntheticConfig};
use crate::training::{train, LossRecord, TrainConfig};

/// Everything needed to train and score one model.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub score: ScoreConfig,
    pub train_ratio: f64,
    pub threshold_rule: ThresholdRule,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            score: ScoreConfig::default(),
            train_ratio: 0.5,
            threshold_rule: ThresholdRule::TopK,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub params: ModelParameters,
    pub history: Vec<LossRecord>,
    pub table: ScoreTable,
    /// Present when labels cover the scored rows with both classes.
    pub report: Option<EvalReport>,
}

/// Trains on the leading share of snapshots and scores the rest.
pub fn run_experiment(graph: &DynamicGraph, labels: Option<&NodeLabels>, exp: &Experiment) -> Result<ExperimentResult> {
    let (train_ts, test_ts) = split_temporal(graph, exp.train_ratio, exp.model.window)?;
    let started = Instant::now();
    let outcome = train(graph, &train_ts, &exp.model, &exp.train)?;
    let train_s = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let table = score_nodes(&outcome.params, graph, &test_ts, &exp.score)?;
    let score_s = started.elapsed().as_secs_f64();
    let report = match labels {
        Some(l) => {
            let mut r = evaluate(&table, l, exp.threshold_rule)?;
            r.timings.train_s = train_s;
            r.timings.score_s = score_s;
            r.config = serde_json::json!({
                "model": exp.model,
                "train": exp.train,
                "score": exp.score,
                "train_ratio": exp.train_ratio,
            });
            Some(r)
        }
        None => None,
    };
    Ok(ExperimentResult {
        params: outcome.params,
        history: outcome.history,
        table,
        report,
    })
}

/// A generated graph with anomalies planted in its test snapshots.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub graph: DynamicGraph,
    pub labels: NodeLabels,
    pub train_ts: Vec<usize>,
    pub test_ts: Vec<usize>,
}

pub fn synthetic_benchmark(syn: &SyntheticConfig, inj: &InjectionConfig, train_ratio: f64, tau: usize) -> Result<Benchmark> {
    let clean = generate(syn)?;
    let (train_ts, test_ts) = split_temporal(&clean, train_ratio, tau)?;
    let (graph, labels) = inject_all(&clean, &test_ts, inj)?;
    Ok(Benchmark {
        graph,
        labels,
        train_ts,
        test_ts,
    })
}

/// Runs each variant under the same seeds and reports its metrics.
pub fn ablation_suite(
    graph: &DynamicGraph,
    labels: &NodeLabels,
    base: &Experiment,
    variants: &[Variant],
) -> Result<Vec<(Variant, EvalReport)>> {
    if variants.is_empty() {
        return Err(Error::Config("no ablation variants selected".into()));
    }
    variants
        .iter()
        .map(|&v| {
            let exp = Experiment {
                model: v.apply(&base.model),
                ..base.clone()
            };
            let result = run_experiment(graph, Some(labels), &exp)?;
            let report = result
                .report
                .ok_or_else(|| Error::Eval("ablation run produced no report".into()))?;
            log::info!("variant {}: auc {:.4}", v.name(), report.auc);
            Ok((v, report))
        })
        .collect()
}
