mod common;

use common::{data_dir, random_graph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenwalk_core::dataset::{load_dataset, load_graph, make_split, save_dataset, Dataset, Split};
use tokenwalk_core::graph::{
    build_graph, compute_metrics, is_bipartite, k_hop_neighborhood, Graph,
};
use tokenwalk_core::walk::{
    apportion, generate_mixed_walks, njw_transition, sample_walk, uniform_transition,
    MixedWalkConfig, StepModel, WalkKind,
};
use tokenwalk_nn::Tensor2;

fn floyd_warshall(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (u, row) in d.iter_mut().enumerate() {
        row[u] = 0;
        for v in g.neighbors(u) {
            row[*v] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

#[test]
fn eccentricities_match_floyd_warshall() {
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=64);
        let p = rng.random_range(0.02..0.2);
        let g = random_graph(n, p, seed);
        let d = floyd_warshall(&g);
        let m = compute_metrics(&g);
        let inf = usize::MAX / 4;
        for v in 0..n {
            let ecc = d[v].iter().filter(|x| **x < inf).max().copied().unwrap();
            assert_eq!(m.eccentricities[v], ecc, "seed {seed} node {v}");
        }
        let largest = g.largest_component();
        let eccs: Vec<usize> = largest.iter().map(|v| m.eccentricities[*v]).collect();
        assert_eq!(m.radius, *eccs.iter().min().unwrap());
        assert_eq!(m.diameter, *eccs.iter().max().unwrap());
        if m.is_connected {
            assert!(m.radius <= m.diameter && m.diameter <= 2 * m.radius);
        }
    }
}

/// Odd cycle exists iff some odd power `k ≤ n` of the adjacency matrix has a
/// positive diagonal entry.
fn has_odd_closed_walk(g: &Graph) -> bool {
    let n = g.node_count();
    let a: Vec<Vec<bool>> = (0..n)
        .map(|u| (0..n).map(|v| g.has_edge(u, v)).collect())
        .collect();
    let mut pow = a.clone();
    for k in 1..=n {
        if k % 2 == 1 && (0..n).any(|v| pow[v][v]) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = (0..n).any(|l| pow[i][l] && a[l][j]);
            }
        }
        pow = next;
    }
    false
}

#[test]
fn bipartiteness_matches_odd_cycle_search() {
    for seed in 0..300 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=10);
        let g = random_graph(n, rng.random_range(0.1..0.6), seed);
        assert_eq!(is_bipartite(&g), !has_odd_closed_walk(&g), "seed {seed}");
    }
}

#[test]
fn karate_club_degrees_and_neighborhoods() {
    let g = load_graph(&data_dir().join("karate/edges.tsv")).unwrap();
    assert_eq!((g.node_count(), g.edge_count()), (34, 78));
    assert_eq!(g.degree(0), 16);
    assert_eq!(k_hop_neighborhood(&g, 0, 1).unwrap().len(), 16);
    let m = compute_metrics(&g);
    assert_eq!((m.radius, m.diameter), (3, 5));
    assert!(m.is_connected && !m.is_bipartite);
}

#[test]
fn cora_statistics() {
    let ds = load_dataset(&data_dir().join("cora")).unwrap();
    assert_eq!(ds.graph.node_count(), 2708);
    assert_eq!(ds.graph.edge_count(), 5278);
    assert_eq!(ds.num_classes, 7);
    assert_eq!(ds.feature_dim(), 1433);
    let m = compute_metrics(&ds.graph);
    assert_eq!(m.diameter, 19);
    assert!(!m.is_connected);
    let s = make_split(2708, (0.6, 0.2, 0.2), &ds.labels, 0).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1626, 541, 541));
}

#[test]
fn citeseer_statistics_when_present() {
    let dir = data_dir().join("citeseer");
    if !dir.join("edges.tsv").exists() {
        eprintln!("data/citeseer not present; skipping");
        return;
    }
    let ds = load_dataset(&dir).unwrap();
    assert_eq!(ds.graph.node_count(), 3327);
    assert_eq!(ds.graph.edge_count(), 4522);
    assert_eq!(ds.num_classes, 6);
    assert_eq!(ds.feature_dim(), 3703);
    assert_eq!(compute_metrics(&ds.graph).diameter, 28);
}

fn toy() -> Dataset {
    let g = build_graph(&[(0, 1), (1, 2)], 3).unwrap();
    let x = Tensor2::from_vec(3, 2, vec![1.0, 0.0, 0.5, 0.5, 0.0, 1.0]);
    Dataset::new(g, x, vec![0, 1, 0]).unwrap()
}

#[test]
fn dataset_directory_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&toy(), dir.path()).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    assert_eq!(
        (ds.graph.node_count(), ds.feature_dim(), ds.num_classes),
        (3, 2, 2)
    );
    assert_eq!(ds.features, toy().features);

    std::fs::write(dir.path().join("labels.csv"), "0\n1\n").unwrap();
    let err = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("labels.csv has 2"), "{err}");

    std::fs::write(dir.path().join("labels.csv"), "0\n1\n0\n").unwrap();
    std::fs::write(dir.path().join("features.csv"), "1,0\n0.5,abc\n0,1\n").unwrap();
    let err = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("features.csv:2"), "{err}");

    std::fs::remove_file(dir.path().join("edges.tsv")).unwrap();
    std::fs::write(dir.path().join("features.csv"), "1,0\n0.5,0\n0,1\n").unwrap();
    let err = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("edges.tsv"), "{err}");
}

#[test]
fn split_json_round_trip_and_determinism() {
    let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
    let a = make_split(50, (0.6, 0.2, 0.2), &labels, 4).unwrap();
    assert_eq!(a, make_split(50, (0.6, 0.2, 0.2), &labels, 4).unwrap());
    assert_ne!(a, make_split(50, (0.6, 0.2, 0.2), &labels, 5).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("split.json");
    a.save(&p).unwrap();
    assert_eq!(Split::load(&p).unwrap(), a);
}

/// Dense oracle: `Σ_{s=1..k} P^s`, self column zeroed, rows renormalized.
fn njw_oracle(g: &Graph, k: usize) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let p: Vec<Vec<f64>> = (0..n)
        .map(|u| {
            (0..n)
                .map(|v| {
                    if g.has_edge(u, v) {
                        1.0 / g.degree(u) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut pow = p.clone();
    let mut acc = vec![vec![0.0; n]; n];
    for s in 1..=k {
        for i in 0..n {
            for j in 0..n {
                acc[i][j] += pow[i][j];
            }
        }
        if s < k {
            let mut next = vec![vec![0.0; n]; n];
            for i in 0..n {
                for l in 0..n {
                    for j in 0..n {
                        next[i][j] += pow[i][l] * p[l][j];
                    }
                }
            }
            pow = next;
        }
    }
    for (i, row) in acc.iter_mut().enumerate() {
        row[i] = 0.0;
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            for v in row.iter_mut() {
                *v /= total;
            }
        }
    }
    acc
}

#[test]
fn jump_model_matches_dense_oracle() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=8);
        let g = random_graph(n, rng.random_range(0.2..0.8), 1000 + seed);
        for k in 1..=4 {
            let m = njw_transition(&g, k).unwrap().to_dense();
            let o = njw_oracle(&g, k);
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((m[i][j] - o[i][j]).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-12, "max abs difference {worst:e}");
}

#[test]
fn jump_radius_one_is_uniform_and_rows_are_stochastic() {
    for seed in 0..20 {
        let g = random_graph(30, 0.1, seed);
        let u = uniform_transition(&g).to_dense();
        let j1 = njw_transition(&g, 1).unwrap().to_dense();
        let j3 = njw_transition(&g, 3).unwrap();
        for v in 0..30 {
            for w in 0..30 {
                assert!((u[v][w] - j1[v][w]).abs() <= 1e-12);
            }
            let (_, p) = j3.row(v);
            if g.degree(v) > 0 {
                assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                assert!(p.iter().all(|x| *x >= 0.0));
            } else {
                assert!(p.is_empty());
            }
        }
    }
}

#[test]
fn uniform_first_steps_from_karate_hub_are_uniform() {
    let g = load_graph(&data_dir().join("karate/edges.tsv")).unwrap();
    let m = uniform_transition(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let trials = 100_000;
    let mut counts = vec![0usize; 34];
    for _ in 0..trials {
        let w = sample_walk(StepModel::Node(&m), 0, 1, false, &mut rng).unwrap();
        counts[w.nodes[1]] += 1;
    }
    let p = 1.0 / 16.0;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for v in 0..34 {
        if g.has_edge(0, v) {
            let dev = counts[v] as f64 - trials as f64 * p;
            assert!(dev.abs() < 3.5 * sigma, "node {v}: {} draws", counts[v]);
            chi2 += dev * dev / (trials as f64 * p);
        } else {
            assert_eq!(counts[v], 0);
        }
    }
    // 15 degrees of freedom, 0.999 quantile is about 37.7
    assert!(chi2 < 37.7, "chi-square {chi2}");
}

#[test]
fn masked_jump_draws_follow_the_renormalized_row() {
    let g = load_graph(&data_dir().join("karate/edges.tsv")).unwrap();
    let jump = njw_transition(&g, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (prev, cur) = (0usize, 1usize);
    let (targets, probs) = jump.row(cur);
    let p_prev = jump.prob(cur, prev);
    let trials = 200_000;
    let mut counts = vec![0usize; 34];
    for _ in 0..trials {
        let w = sample_walk_from(&jump, prev, cur, &mut rng);
        counts[w] += 1;
    }
    assert_eq!(counts[prev], 0);
    let mut chi2 = 0.0;
    let mut dof = 0;
    for (t, p) in targets.iter().zip(probs) {
        if *t == prev {
            continue;
        }
        let expected = trials as f64 * p / (1.0 - p_prev);
        chi2 += (counts[*t] as f64 - expected).powi(2) / expected;
        dof += 1;
    }
    // generous bound: mean dof, sd sqrt(2 dof)
    assert!(
        chi2 < dof as f64 + 5.0 * (2.0 * dof as f64).sqrt(),
        "chi2 {chi2} dof {dof}"
    );
}

/// Second node of a non-backtracking jump walk that is conditioned to have
/// come from `prev` to `cur`.
fn sample_walk_from(
    jump: &tokenwalk_core::walk::NodeTransitionModel,
    prev: usize,
    cur: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    loop {
        let w = sample_walk(StepModel::Node(jump), prev, 2, true, rng).unwrap();
        if w.nodes[1] == cur {
            return w.nodes[2];
        }
    }
}

#[test]
fn nbrw_walks_never_backtrack_except_at_leaves() {
    let mut steps = 0usize;
    let mut seed = 0;
    while steps < 100_000 {
        let g = random_graph(40, 0.08, 500 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for start in 0..40 {
            let w = sample_walk(StepModel::Edge(&g), start, 30, true, &mut rng).unwrap();
            for i in 1..w.nodes.len().saturating_sub(1) {
                if w.nodes[i - 1] == w.nodes[i + 1] {
                    assert_eq!(g.degree(w.nodes[i]), 1, "backtrack at non-leaf");
                }
            }
            steps += w.len();
        }
        seed += 1;
    }
}

#[test]
fn mixed_corpus_counts_and_thread_independence() {
    let g = load_graph(&data_dir().join("karate/edges.tsv")).unwrap();
    let cfg = MixedWalkConfig {
        walks_per_node: 10,
        walk_length: 6,
        ratios: [0.4, 0.3, 0.2, 0.1],
        seed: 21,
        ..Default::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| generate_mixed_walks(&g, &cfg).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(8));
    for v in 0..34 {
        let walks = a.walks(v);
        assert_eq!(walks.len(), 10);
        let per_kind: Vec<usize> = WalkKind::ALL
            .iter()
            .map(|k| walks.iter().filter(|w| w.kind == *k).count())
            .collect();
        assert_eq!(per_kind, vec![4, 3, 2, 1]);
        assert!(walks.iter().all(|w| w.start() == v && w.len() == 6));
    }
    assert_eq!(a.to_text(), run(4).to_text());
}

proptest! {
    #[test]
    fn k_hop_neighborhoods_are_nested(seed in 0u64..500, k in 1usize..5) {
        let g = random_graph(25, 0.1, seed);
        for v in 0..25 {
            let a = k_hop_neighborhood(&g, v, k).unwrap();
            let b = k_hop_neighborhood(&g, v, k + 1).unwrap();
            prop_assert!(a.iter().all(|x| b.binary_search(x).is_ok()));
            prop_assert!(!a.contains(&v));
        }
    }

    #[test]
    fn edge_order_does_not_change_the_graph(seed in 0u64..500) {
        let g = random_graph(20, 0.2, seed);
        let mut edges: Vec<(usize, usize)> = g.edges().into_iter().map(|(u, v)| if (u + v) % 2 == 0 { (v, u) } else { (u, v) }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::seq::SliceRandom;
        edges.shuffle(&mut rng);
        edges.push(edges[0]);
        prop_assert_eq!(build_graph(&edges, 20).unwrap(), g);
    }

    #[test]
    fn splits_are_disjoint_and_cover(n in 3usize..400, seed in 0u64..100, a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let labels = vec![0; n];
        let s = make_split(n, (1.0 - a - b, a, b), &labels, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(s.val.len(), (a * n as f64).floor() as usize);
    }

    #[test]
    fn apportionment_sums_to_total(m in 0usize..500, r in proptest::array::uniform4(0.0f64..1.0)) {
        let sum: f64 = r.iter().sum();
        prop_assume!(sum > 1e-6);
        let ratios = [r[0] / sum, r[1] / sum, r[2] / sum, r[3] / sum];
        let c = apportion(m, &ratios);
        prop_assert_eq!(c.iter().sum::<usize>(), m);
        for i in 0..4 {
            prop_assert!((c[i] as f64 - ratios[i] * m as f64).abs() < 1.0 + 1e-9);
        }
    }
}
