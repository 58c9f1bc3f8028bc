use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stgad_core::graph_store::{load_dataset, load_labels, save_dataset, split_temporal, NodeLabels};
use stgad_core::inject::{inject_all, inject_structural, InjectionConfig};
use stgad_core::model::ModelConfig;
use stgad_core::scoring::{score_nodes, ScoreConfig};
use stgad_core::synthetic::{generate, SyntheticConfig};
use stgad_core::training::{train, TrainConfig};

fn small_model(seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim: 16,
        hidden_dim: 32,
        seed,
        ..ModelConfig::default()
    }
}

#[test]
fn dataset_with_labels_survives_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(&SyntheticConfig { nodes: 120, snapshots: 6, seed: 2, ..SyntheticConfig::default() }).unwrap();
    let (_, test) = split_temporal(&g, 0.5, 3).unwrap();
    let inj = InjectionConfig { clique_size: 4, clique_count: 2, candidate_pool: 20, seed: 2 };
    let (g, labels) = inject_all(&g, &test, &inj).unwrap();
    save_dataset(&g, Some(&labels), dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.num_snapshots(), g.num_snapshots());
    for (a, b) in back.snapshots().zip(g.snapshots()) {
        assert_eq!(a.directed_edges(), b.directed_edges());
        // Features are written with full round-trip precision.
        assert_eq!(a.features(), b.features());
    }
    assert_eq!(load_labels(dir.path()).unwrap().unwrap(), labels);
}

#[test]
fn training_lowers_the_loss_across_seeds() {
    let g = generate(&SyntheticConfig { nodes: 200, snapshots: 6, seed: 8, ..SyntheticConfig::default() }).unwrap();
    let (train_ts, _) = split_temporal(&g, 0.5, 3).unwrap();
    let cfg = TrainConfig { epochs: 15, learning_rate: 3e-3, ..TrainConfig::default() };
    for seed in 0..3 {
        let means = train(&g, &train_ts, &small_model(seed), &cfg).unwrap().epoch_means();
        let (first, last) = (means[0], *means.last().unwrap());
        assert!(last < first, "seed {seed}: loss rose from {first} to {last}");
    }
}

#[test]
fn planted_clique_scores_above_normal_nodes() {
    for seed in 0..3u64 {
        let clean = generate(&SyntheticConfig { nodes: 300, snapshots: 6, seed, ..SyntheticConfig::default() }).unwrap();
        let (train_ts, test_ts) = split_temporal(&clean, 0.5, 3).unwrap();
        let t = test_ts[1];
        let cfg = InjectionConfig { clique_size: 20, clique_count: 1, candidate_pool: 50, seed };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (planted, groups) = inject_structural(clean.snapshot(t), &cfg, &mut rng).unwrap();
        let graph = clean.with_snapshot(planted).unwrap();
        let mut labels = NodeLabels::new();
        labels.mark_timestamp(t);
        for &v in &groups[0] {
            labels.insert(v, t);
        }

        // The default width; at D' = 32 the structure decoder stays too coarse
        // for a 20-node clique to stand out after 20 epochs.
        let model = ModelConfig { input_dim: 16, seed, ..ModelConfig::default() };
        let outcome = train(&graph, &train_ts, &model, &TrainConfig::default()).unwrap();
        let table = score_nodes(&outcome.params, &graph, &[t], &ScoreConfig::default()).unwrap();
        let (mut anomalous, mut normal) = (Vec::new(), Vec::new());
        for r in &table.rows {
            if labels.label(r.node, r.timestamp) == 1 {
                anomalous.push(r.score);
            } else {
                normal.push(r.score);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert_eq!(anomalous.len(), 20);
        assert!(
            mean(&anomalous) > mean(&normal),
            "seed {seed}: clique mean {} vs normal mean {}",
            mean(&anomalous),
            mean(&normal)
        );
    }
}

#[test]
fn extra_rounds_without_dropout_change_nothing() {
    let g = generate(&SyntheticConfig { nodes: 100, snapshots: 6, seed: 5, ..SyntheticConfig::default() }).unwrap();
    let (train_ts, test_ts) = split_temporal(&g, 0.5, 3).unwrap();
    let tcfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let params = train(&g, &train_ts, &small_model(5), &tcfg).unwrap().params;
    let one = score_nodes(&params, &g, &test_ts, &ScoreConfig::default()).unwrap();
    let five = score_nodes(&params, &g, &test_ts, &ScoreConfig { rounds: 5, ..ScoreConfig::default() }).unwrap();
    assert_eq!(one, five);
    let dropped = ScoreConfig { rounds: 5, edge_dropout: 0.2, seed: 1, ..ScoreConfig::default() };
    assert_ne!(score_nodes(&params, &g, &test_ts, &dropped).unwrap(), one);
}
