//! Scaling benchmark: one training epoch and one scoring pass on synthetic
//! graphs of growing size at fixed average degree.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_store::split_temporal;
use crate::model::{ModelConfig, ModelParameters};
use crate::scoring::{score_nodes, ScoreConfig};
use crate::synthetic::{generate, SyntheticConfig};
use crate::training::{train_from, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Node counts to time.
    pub ladder: Vec<usize>,
    pub avg_degree: f64,
    pub snapshots: usize,
    pub feature_dim: usize,
    /// Each timing is the minimum over this many runs.
    pub repeats: usize,
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ladder: vec![1000, 2000, 4000, 8000],
            avg_degree: 10.0,
            snapshots: 8,
            feature_dim: 16,
            repeats: 5,
            train_ratio: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub train_s: f64,
    pub infer_s: f64,
}

/// Least-squares fit `time = slope · n + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub train_fit: LinearFit,
    pub infer_fit: LinearFit,
    /// `time(n_{i+1}) / time(n_i)` for consecutive ladder entries.
    pub train_ratios: Vec<f64>,
    pub infer_ratios: Vec<f64>,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit { slope, intercept, r2 }
}

fn ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Times each ladder entry. Structure decoding is always sampled so that
/// per-snapshot cost stays proportional to nodes plus edges.
pub fn run_bench(cfg: &BenchConfig, model: &ModelConfig) -> Result<BenchReport> {
    if cfg.ladder.is_empty() || cfg.repeats == 0 {
        return Err(Error::Config("benchmark needs a nonempty ladder and at least one repeat".into()));
    }
    let model = ModelConfig {
        input_dim: cfg.feature_dim,
        dense_cap: 0,
        ..model.clone()
    };
    model.validate()?;
    let mut cases = Vec::with_capacity(cfg.ladder.len());
    for &n in &cfg.ladder {
        let syn = SyntheticConfig {
            nodes: n,
            snapshots: cfg.snapshots,
            avg_degree: cfg.avg_degree,
            feature_dim: cfg.feature_dim,
            seed: cfg.seed,
            ..SyntheticConfig::default()
        };
        let graph = generate(&syn)?;
        let (train_ts, test_ts) = split_temporal(&graph, cfg.train_ratio, model.window)?;
        cases.push((graph, train_ts, test_ts));
    }
    let init = ModelParameters::init(&model)?;
    let one_epoch = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let mut rows: Vec<BenchRow> = cfg
        .ladder
        .iter()
        .map(|&n| BenchRow { n, train_s: f64::INFINITY, infer_s: f64::INFINITY })
        .collect();
    // Repeats cycle through the ladder so that a slow stretch of machine time
    // is spread over all sizes rather than landing on one of them.
    for _ in 0..cfg.repeats {
        for ((graph, train_ts, test_ts), row) in cases.iter().zip(&mut rows) {
            let started = Instant::now();
            let trained = train_from(graph, train_ts, init.clone(), &one_epoch)?;
            row.train_s = row.train_s.min(started.elapsed().as_secs_f64());
            let started = Instant::now();
            score_nodes(&trained.params, graph, test_ts, &ScoreConfig::default())?;
            row.infer_s = row.infer_s.min(started.elapsed().as_secs_f64());
        }
    }
    for r in &rows {
        log::info!("n={}: train {:.3}s, inference {:.3}s", r.n, r.train_s, r.infer_s);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ts: Vec<f64> = rows.iter().map(|r| r.train_s).collect();
    let is: Vec<f64> = rows.iter().map(|r| r.infer_s).collect();
    Ok(BenchReport {
        train_fit: linear_fit(&xs, &ts),
        infer_fit: linear_fit(&xs, &is),
        train_ratios: ratios(&ts),
        infer_ratios: ratios(&is),
        rows,
    })
}

pub fn write_bench_csv(report: &BenchReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in &report.rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_line() {
        let f = linear_fit(&[1.0, 2.0, 4.0], &[3.0, 5.0, 9.0]);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert_eq!(ratios(&[1.0, 2.0, 3.0]), vec![2.0, 1.5]);
    }

    #[test]
    fn tiny_ladder_produces_positive_rows() {
        let cfg = BenchConfig {
            ladder: vec![40, 80],
            snapshots: 6,
            feature_dim: 4,
            repeats: 1,
            ..BenchConfig::default()
        };
        let model = ModelConfig { hidden_dim: 8, spatial_items: 2, temporal_items: 2, ..ModelConfig::default() };
        let r = run_bench(&cfg, &model).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|r| r.train_s > 0.0 && r.infer_s > 0.0));
    }
}
