use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stgad_core::decoder::transposed_conv;
use stgad_core::encoder::{gcn_layer, temporal_conv};
use stgad_core::graph_store::{normalize_edges, split_timestamps, DynamicGraph, Snapshot};
use stgad_core::inject::{inject_all, inject_structural, InjectionConfig};
use stgad_core::memory::{attention_read, memory_update, MemoryBank};
use stgad_core::model::{ModelConfig, ModelParameters};
use stgad_core::scoring::compute_auc;
use stgad_core::tensor::Matrix;
use stgad_core::training::{checkpoint_bytes, loss_separateness, parse_checkpoint, Precision};

fn matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn edges(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                out.push((u, v));
            }
        }
    }
    out
}

fn symmetric(undirected: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut d: Vec<(usize, usize)> = undirected.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect();
    d.sort_unstable();
    d
}

fn bank(items: usize, d: usize, renormalize: bool, rng: &mut ChaCha8Rng) -> MemoryBank {
    MemoryBank {
        items: vec![matrix(items, d, rng)],
        w_k: matrix(d, d, rng),
        w_q: matrix(d, d, rng),
        w_v: matrix(d, d, rng),
        top_k: rng.gen_range(1..6),
        renormalize,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_adjacency_matches_dense_formula(seed in any::<u64>(), n in 1usize..30, p in 0.0f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let und = edges(n, p, &mut rng);
        let got = normalize_edges(n, &symmetric(&und)).to_dense();
        let mut a = Matrix::identity(n);
        for &(u, v) in &und {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
        let want = Matrix::from_fn(n, n, |i, j| a.get(i, j) / (deg[i] * deg[j]).sqrt());
        prop_assert!(got.max_abs_diff(&want) < 1e-14);
        prop_assert!(got.max_abs_diff(&got.transpose()) == 0.0);
    }

    #[test]
    fn gcn_layer_is_permutation_equivariant(seed in any::<u64>(), n in 1usize..25, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let und = edges(n, 0.3, &mut rng);
        let h = matrix(n, d, &mut rng);
        let theta = matrix(d, 3, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let out = gcn_layer(&normalize_edges(n, &symmetric(&und)), &h, &theta).unwrap();
        // Node i is renamed perm[i].
        let pund: Vec<(usize, usize)> = und.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut ph = Matrix::zeros(n, d);
        for i in 0..n {
            ph.row_mut(perm[i]).copy_from_slice(h.row(i));
        }
        let pout = gcn_layer(&normalize_edges(n, &symmetric(&pund)), &ph, &theta).unwrap();
        for i in 0..n {
            for (a, b) in out.row(i).iter().zip(pout.row(perm[i])) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn read_weights_are_distributions(seed in any::<u64>(), q in 1usize..20, p in 1usize..8, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = bank(p, d, true, &mut rng);
        let r = attention_read(&matrix(q, d, &mut rng), &b, 0).unwrap();
        prop_assert_eq!(r.weights.shape(), (q, p));
        for i in 0..q {
            prop_assert!(r.weights.row(i).iter().all(|&w| w >= 0.0));
            prop_assert!((r.weights.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn renormalized_items_have_unit_norm(seed in any::<u64>(), q in 1usize..20, p in 1usize..8, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = bank(p, d, true, &mut rng);
        let updated = memory_update(&matrix(q, d, &mut rng), &b, 0).unwrap();
        for norm in updated.items[0].row_norms() {
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms_and_flips(seed in any::<u64>(), n in 2usize..150) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<bool>())).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..12) as f64 * 0.25).collect();
        let auc = compute_auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
        prop_assert_eq!(compute_auc(&squashed, &labels).unwrap(), auc);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((compute_auc(&negated, &labels).unwrap() - (1.0 - auc)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&auc));
    }

    #[test]
    fn separateness_is_zero_without_margin_and_nonnegative_with(seed in any::<u64>(), margin in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(1..5);
        let f = vec![matrix(rng.gen_range(1..15), d, &mut rng)];
        let m = vec![matrix(rng.gen_range(2..6), d, &mut rng)];
        prop_assert_eq!(loss_separateness(&f, &m, 0.0).unwrap(), 0.0);
        prop_assert!(loss_separateness(&f, &m, margin).unwrap() >= 0.0);
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv(seed in any::<u64>(), len in 1usize..6, k in 1usize..4, n in 1usize..6) {
        prop_assume!(len >= k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c_in, c_out) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let kernel = matrix(k * c_in, c_out, &mut rng);
        let x: Vec<Matrix> = (0..len).map(|_| matrix(n, c_in, &mut rng)).collect();
        let y: Vec<Matrix> = (0..len + 1 - k).map(|_| matrix(n, c_out, &mut rng)).collect();
        // Block b of the transposed kernel is block b of the kernel, transposed.
        let mut t = Matrix::zeros(k * c_out, c_in);
        for b in 0..k {
            for i in 0..c_in {
                for o in 0..c_out {
                    t.set(b * c_out + o, i, kernel.get(b * c_in + i, o));
                }
            }
        }
        let cx = temporal_conv(&x, &kernel).unwrap();
        let ty = transposed_conv(&y, &t).unwrap();
        prop_assert_eq!(ty.len(), len);
        let lhs: f64 = cx.iter().zip(&y).map(|(a, b)| a.hadamard(b).sum()).sum();
        let rhs: f64 = x.iter().zip(&ty).map(|(a, b)| a.hadamard(b).sum()).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn injection_plants_complete_cliques_and_labels(seed in any::<u64>(), np in 2usize..6, q in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let snaps = (0..4)
            .map(|t| Snapshot::new(t, n, edges(n, 0.05, &mut rng), matrix(n, 3, &mut rng)).unwrap())
            .collect();
        let g = DynamicGraph::new("p", snaps).unwrap();
        let cfg = InjectionConfig { clique_size: np, clique_count: q, candidate_pool: 10, seed };
        let (out, labels) = inject_all(&g, &[2, 3], &cfg).unwrap();
        for t in [2, 3] {
            prop_assert_eq!(labels.count_at(t), 2 * np * q);
            prop_assert!(out.snapshot(t).edge_count() >= g.snapshot(t).edge_count());
        }
        prop_assert_eq!(out.snapshot(0), g.snapshot(0));
        let (planted, groups) = inject_structural(g.snapshot(2), &cfg, &mut rng).unwrap();
        prop_assert_eq!(groups.len(), q);
        let mut seen = std::collections::BTreeSet::new();
        for group in &groups {
            prop_assert_eq!(group.len(), np);
            for (i, &u) in group.iter().enumerate() {
                prop_assert!(seen.insert(u), "node {} reused across cliques", u);
                for &v in &group[i + 1..] {
                    prop_assert!(planted.has_edge(u, v) && planted.has_edge(v, u));
                }
            }
        }
    }

    #[test]
    fn f64_checkpoints_round_trip_exactly(seed in any::<u64>(), h in 1usize..6, bias in any::<bool>()) {
        let cfg = ModelConfig { input_dim: 3, hidden_dim: h, spatial_items: 2, temporal_items: 3, use_bias: bias, seed, ..ModelConfig::default() };
        let p = ModelParameters::init(&cfg).unwrap();
        let back = parse_checkpoint(&checkpoint_bytes(&p, Precision::F64)).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn temporal_split_partitions_timestamps(t in 1usize..40, ratio in 0.01f64..0.99, tau in 1usize..5) {
        if let Ok((train, test)) = split_timestamps(t, ratio, tau) {
            prop_assert!(train.len() >= tau);
            let all: Vec<usize> = train.iter().chain(&test).copied().collect();
            prop_assert_eq!(all, (0..t).collect::<Vec<_>>());
        }
    }
}
