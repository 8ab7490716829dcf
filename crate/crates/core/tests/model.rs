mod common;

use common::{random_graph, two_block_sbm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenwalk_core::dataset::{make_split, Dataset, Split};
use tokenwalk_core::graph::{build_graph, Graph};
use tokenwalk_core::model::{
    evaluate, hop_features, pe_scale, train, write_eval_csv, HopNorm, ModelConfig, TokenInputs,
    TokenModel, TrainConfig, WalkPooling, EVAL_CSV_HEADER,
};
use tokenwalk_core::walk::{generate_mixed_walks, MixedWalkConfig, Walk, WalkCorpus, WalkKind};
use tokenwalk_nn::gradcheck::check_gradients;
use tokenwalk_nn::{sinusoidal_positions, Dropout, ParamStore, Tape, Tensor2};

fn random_features(n: usize, d: usize, seed: u64) -> Tensor2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor2::from_vec(
        n,
        d,
        (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    )
}

/// Dense `Â` built independently of the sparse code path.
fn dense_propagation(g: &Graph, norm: HopNorm) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for (u, row) in a.iter_mut().enumerate() {
        for v in 0..n {
            if g.has_edge(u, v) {
                row[v] = 1.0;
            }
        }
    }
    match norm {
        HopNorm::Raw => a,
        HopNorm::Row => a
            .iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.iter()
                    .map(|x| if s > 0.0 { x / s } else { 0.0 })
                    .collect()
            })
            .collect(),
        HopNorm::Symmetric => {
            for (u, row) in a.iter_mut().enumerate() {
                row[u] += 1.0;
            }
            let d: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
            (0..n)
                .map(|u| (0..n).map(|v| a[u][v] / (d[u] * d[v]).sqrt()).collect())
                .collect()
        }
    }
}

fn dense_power_times(a: &[Vec<f64>], k: usize, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut cur = x.to_vec();
    for _ in 0..k {
        cur = a
            .iter()
            .map(|row| {
                (0..x[0].len())
                    .map(|c| row.iter().zip(&cur).map(|(w, r)| w * r[c]).sum())
                    .collect()
            })
            .collect();
    }
    cur
}

#[test]
fn hop_features_match_dense_matrix_powers() {
    let mut worst = 0.0f64;
    for seed in 0..60 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=8);
        let g = random_graph(n, rng.random_range(0.1..0.9), seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let xt = Tensor2::from_rows(&x);
        for norm in [HopNorm::Raw, HopNorm::Row, HopNorm::Symmetric] {
            let a = dense_propagation(&g, norm);
            let hops = hop_features(&g, &xt, 4, norm);
            assert_eq!(hops.len(), 5);
            for (k, h) in hops.iter().enumerate() {
                let want = dense_power_times(&a, k, &x);
                for u in 0..n {
                    for c in 0..3 {
                        worst = worst.max((h.get(u, c) - want[u][c]).abs());
                    }
                }
            }
        }
    }
    assert!(worst <= 1e-10, "max abs error {worst:e}");
}

#[test]
fn hop_feature_examples() {
    let p3 = build_graph(&[(0, 1), (1, 2)], 3).unwrap();
    let x = Tensor2::from_rows(&[vec![1.0, 0.0], vec![5.0, 5.0], vec![3.0, 4.0]]);
    let hops = hop_features(&p3, &x, 1, HopNorm::Row);
    assert_eq!(hops[1].row(1), &[2.0, 2.0]);

    let g = build_graph(&[(0, 1)], 3).unwrap();
    let x = Tensor2::from_rows(&[vec![1.0], vec![2.0], vec![7.0]]);
    for h in hop_features(&g, &x, 3, HopNorm::Symmetric) {
        assert_eq!(h.get(2, 0), 7.0);
    }
    assert_eq!(hop_features(&g, &x, 0, HopNorm::Symmetric).len(), 1);
}

fn corpus_from(walks: Vec<Vec<Vec<usize>>>) -> WalkCorpus {
    WalkCorpus {
        seed: 0,
        per_node: walks
            .into_iter()
            .map(|ws| {
                ws.into_iter()
                    .map(|nodes| Walk {
                        nodes,
                        kind: WalkKind::Urw,
                        truncated: false,
                    })
                    .collect()
            })
            .collect(),
    }
}

fn small_model(
    cfg: &ModelConfig,
    d_f: usize,
    classes: usize,
    seed: u64,
) -> (TokenModel, ParamStore<f64>) {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = TokenModel::new(&mut store, cfg, d_f, classes, &mut rng).unwrap();
    (model, store)
}

#[test]
fn hop_tokens_are_projected_propagated_features() {
    let g = random_graph(7, 0.4, 3);
    let x = random_features(7, 5, 3);
    let cfg = ModelConfig {
        d_h: 4,
        use_sgpm: false,
        use_walk: false,
        n_hop: 3,
        ..ModelConfig::default()
    };
    let inputs = TokenInputs::<f64>::new(&g, &x, None, None, &cfg).unwrap();
    let (model, store) = small_model(&cfg, 5, 2, 1);
    let nodes = [4, 0, 6];
    let mut tape = Tape::new();
    let h = model.hop_tokens(&mut tape, &store, &inputs, &nodes, 0, 4);
    let hops = hop_features(&g, &x.cast::<f64>(), 3, HopNorm::Symmetric);
    let (w, b) = (store.get(model.hop.w), store.get(model.hop.b));
    for (i, v) in nodes.iter().enumerate() {
        for (k, hk) in hops.iter().enumerate() {
            let want = Tensor2::from_vec(1, 5, hk.row(*v).to_vec()).matmul(w);
            for c in 0..4 {
                let got = tape.value(h).get(i * 4 + k, c);
                assert!((got - want.get(0, c) - b.get(0, c)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn walk_token_examples() {
    let g = build_graph(&[(0, 1), (1, 2), (2, 3)], 4).unwrap();
    let x = random_features(4, 3, 8);
    let cfg = ModelConfig {
        d_h: 6,
        use_sgpm: false,
        ..ModelConfig::default()
    };
    let inputs = TokenInputs::<f64>::new(
        &g,
        &x,
        Some(&corpus_from(vec![vec![vec![0]]; 4])),
        None,
        &cfg,
    )
    .unwrap();
    let (model, store) = small_model(&cfg, 3, 2, 2);
    let walks: [&[usize]; 5] = [&[2], &[0, 1, 2], &[2, 1, 0], &[1, 2, 1], &[1, 2, 1]];
    let mut tape = Tape::new();
    let t = model.walk_tokens(&mut tape, &store, &inputs, &walks);
    let t = tape.value(t).clone();

    let xw = x.cast::<f64>().matmul(store.get(model.walk.w));
    let pe = sinusoidal_positions::<f64>(1, 6);
    for c in 0..6 {
        let want = (xw.get(2, c) + store.get(model.walk.b).get(0, c) + pe_scale(6) * pe.get(0, c))
            .max(0.0);
        assert!((t.get(0, c) - want).abs() < 1e-12);
    }
    assert_eq!(t.row(3), t.row(4));

    // Only channel 0 carries node signal, so the ReLU clips node 0 differently at positions 0 and 2.
    let x = Tensor2::from_rows(&[
        vec![-0.35f32, 0.0, 0.0],
        vec![0.0; 3],
        vec![0.1, 0.0, 0.0],
        vec![0.0; 3],
    ]);
    let inputs = TokenInputs::<f64>::new(
        &g,
        &x,
        Some(&corpus_from(vec![vec![vec![0]]; 4])),
        None,
        &cfg,
    )
    .unwrap();
    let (model, mut store) = small_model(&cfg, 3, 2, 2);
    *store.get_mut(model.walk.w) = Tensor2::zeros(3, 6);
    store.get_mut(model.walk.w).set(0, 0, 1.0);
    *store.get_mut(model.walk.b) = Tensor2::zeros(1, 6);
    let mut tape = Tape::new();
    let t = model.walk_tokens(&mut tape, &store, &inputs, &walks);
    let t = tape.value(t);
    let s = pe_scale(6);
    let pe = sinusoidal_positions::<f64>(3, 6);
    let forward = ((-0.35f64).max(0.0) + s * pe.get(1, 0) + 0.1 + s * pe.get(2, 0)) / 3.0;
    let backward = (0.1 + s * pe.get(1, 0) + (-0.35 + s * pe.get(2, 0)).max(0.0)) / 3.0;
    assert!(
        (t.get(1, 0) - forward).abs() < 1e-7,
        "{} vs {forward}",
        t.get(1, 0)
    );
    assert!(
        (t.get(2, 0) - backward).abs() < 1e-7,
        "{} vs {backward}",
        t.get(2, 0)
    );
    assert!((forward - backward).abs() > 0.1);

    let mean_cfg = ModelConfig {
        walk_pooling: WalkPooling::Mean,
        ..cfg.clone()
    };
    let (mean_model, store) = small_model(&mean_cfg, 3, 2, 2);
    let mut tape = Tape::new();
    let t = mean_model.walk_tokens(&mut tape, &store, &inputs, &walks);
    let t = tape.value(t);
    for c in 0..6 {
        assert!((t.get(1, c) - t.get(2, c)).abs() < 1e-12);
    }
}

#[test]
fn sequence_layout_and_ablations() {
    let g = two_block_sbm(12, 0.5, 0.1, 1);
    let x = random_features(12, 4, 1);
    let corpus = generate_mixed_walks(
        &g,
        &MixedWalkConfig {
            walks_per_node: 5,
            walk_length: 3,
            ..MixedWalkConfig::default()
        },
    )
    .unwrap();
    let sgpm = random_features(12, 8, 2);
    let nodes = [0, 5, 11];
    for (use_sgpm, use_hop, use_walk, k) in [
        (true, true, true, 1 + 4 + 5),
        (false, true, true, 10),
        (true, false, true, 6),
        (true, true, false, 5),
        (false, false, false, 1),
    ] {
        let cfg = ModelConfig {
            d_h: 8,
            use_sgpm,
            use_hop,
            use_walk,
            ..ModelConfig::default()
        };
        let inputs = TokenInputs::<f64>::new(&g, &x, Some(&corpus), Some(&sgpm), &cfg).unwrap();
        let (model, store) = small_model(&cfg, 4, 2, 0);
        assert_eq!(model.seq_len(&inputs), k);
        let mut tape = Tape::new();
        let h = model.assemble(&mut tape, &store, &inputs, &nodes);
        assert_eq!(tape.value(h).shape(), (3 * k, 8));
        if use_sgpm {
            assert_eq!(tape.value(h).row(k), sgpm.cast::<f64>().row(5));
        }
        let (_, logits) = model.forward(&mut tape, &store, &inputs, &nodes, &mut Dropout::eval());
        assert_eq!(tape.value(logits).shape(), (3, 2));
        assert!(tape.value(logits).is_finite());
    }
    // without the pre-trained token, position 0 repeats the hop-0 token
    let cfg = ModelConfig {
        d_h: 8,
        use_sgpm: false,
        ..ModelConfig::default()
    };
    let inputs = TokenInputs::<f64>::new(&g, &x, Some(&corpus), None, &cfg).unwrap();
    let (model, store) = small_model(&cfg, 4, 2, 0);
    let mut tape = Tape::new();
    let h = model.assemble(&mut tape, &store, &inputs, &nodes);
    assert_eq!(tape.value(h).row(0), tape.value(h).row(1));
    assert_eq!(ModelConfig::default().seq_len(100), 105);

    // without the hop-0 token: hops 1..=3 follow the anchor, which stays
    // the projected own feature
    let no_self = ModelConfig {
        hop_self: false,
        use_walk: false,
        ..cfg.clone()
    };
    let inputs = TokenInputs::<f64>::new(&g, &x, None, None, &no_self).unwrap();
    let (model, store) = small_model(&no_self, 4, 2, 0);
    assert_eq!(model.seq_len(&inputs), 1 + 3);
    let mut tape = Tape::new();
    let h = model.assemble(&mut tape, &store, &inputs, &nodes);
    let all = model.hop_tokens(&mut tape, &store, &inputs, &nodes, 0, 4);
    let (h, all) = (tape.value(h), tape.value(all));
    for i in 0..nodes.len() {
        assert_eq!(h.row(4 * i), all.row(4 * i));
        for k in 1..4 {
            assert_eq!(h.row(4 * i + k), all.row(4 * i + k));
        }
    }
    let bare = ModelConfig {
        n_hop: 0,
        hop_self: false,
        use_walk: false,
        ..cfg
    };
    let inputs = TokenInputs::<f64>::new(&g, &x, None, None, &bare).unwrap();
    let (model, store) = small_model(&bare, 4, 2, 0);
    assert_eq!(model.seq_len(&inputs), 1);
    let mut tape = Tape::new();
    let (_, logits) = model.forward(&mut tape, &store, &inputs, &nodes, &mut Dropout::eval());
    assert_eq!(tape.value(logits).shape(), (3, 2));
}

#[test]
fn missing_walks_name_the_node() {
    let g = build_graph(&[(0, 1), (1, 2)], 3).unwrap();
    let x = random_features(3, 2, 0);
    let corpus = corpus_from(vec![
        vec![vec![0, 1]; 2],
        vec![vec![1, 0]],
        vec![vec![2, 1]; 2],
    ]);
    let cfg = ModelConfig {
        use_sgpm: false,
        ..ModelConfig::default()
    };
    let err = TokenInputs::<f32>::new(&g, &x, Some(&corpus), None, &cfg).unwrap_err();
    assert!(err.to_string().contains("node 1"), "{err}");
    let full = corpus_from(vec![vec![vec![0, 1]; 2]; 3]);
    let err =
        TokenInputs::<f32>::new(&g, &x, Some(&full), None, &ModelConfig::default()).unwrap_err();
    assert!(err.to_string().contains("pretrain"), "{err}");
}

#[test]
fn encoder_identity_and_permutation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = 6;
    let h0 = Tensor2::from_vec(
        k,
        8,
        (0..k * 8).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let cfg0 = ModelConfig {
        d_h: 8,
        layers: 0,
        ..ModelConfig::default()
    };
    let (m0, s0) = small_model(&cfg0, 3, 2, 0);
    let mut tape = Tape::new();
    let x = tape.constant(h0.clone());
    let y = m0.encode(&mut tape, &s0, x, k, &mut Dropout::eval());
    assert_eq!(tape.value(y), &h0);

    let cfg = ModelConfig {
        d_h: 8,
        layers: 2,
        heads: 2,
        ..ModelConfig::default()
    };
    let (m, s) = small_model(&cfg, 3, 2, 0);
    let perm = [0, 1, 2, 5, 3, 4];
    let mut permuted = Tensor2::zeros(k, 8);
    for (i, p) in perm.iter().enumerate() {
        permuted.row_mut(i).copy_from_slice(h0.row(*p));
    }
    let mut tape = Tape::new();
    let a = tape.constant(h0.clone());
    let a = m.encode(&mut tape, &s, a, k, &mut Dropout::eval());
    let b = tape.constant(permuted);
    let b = m.encode(&mut tape, &s, b, k, &mut Dropout::eval());
    for (i, p) in perm.iter().enumerate() {
        for c in 0..8 {
            assert!((tape.value(b).get(i, c) - tape.value(a).get(*p, c)).abs() < 1e-12);
        }
    }

    // a single token attends to itself with weight 1
    let mut tape = Tape::new();
    let one = tape.constant(Tensor2::from_vec(1, 8, h0.row(0).to_vec()));
    let q = tape.constant(Tensor2::from_vec(1, 8, h0.row(1).to_vec()));
    let att = tape.attention(q, one, one, 1, 2, None);
    assert_eq!(tape.attention_probs(att), &[1.0, 1.0]);
    assert_eq!(tape.value(att).row(0), h0.row(0));
}

#[test]
fn readout_examples() {
    let d = 3;
    let row = [0.3f64, -1.0, 2.0];
    let mut tape = Tape::<f64>::new();
    let h = tape.constant(Tensor2::from_rows(&vec![row.to_vec(); 4]));
    let wa = tape.constant(Tensor2::from_vec(
        1,
        2 * d,
        vec![0.5, 0.1, -0.3, 1.0, 2.0, -1.0],
    ));
    let r = tape.readout(h, wa, 4);
    assert!(tape
        .readout_alpha(r)
        .iter()
        .all(|a| (a - 0.25).abs() < 1e-12));
    for c in 0..d {
        assert!((tape.value(r).get(0, c) - row[c]).abs() < 1e-12);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let hs = Tensor2::from_vec(
        5,
        d,
        (0..5 * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let h = tape.constant(hs);
    let zero = tape.constant(Tensor2::zeros(1, 2 * d));
    let r = tape.readout(h, zero, 5);
    assert!(tape
        .readout_alpha(r)
        .iter()
        .all(|a| (a - 0.2).abs() < 1e-12));

    // logits (0, ln 3) through the token half of W_a
    let h = tape.constant(Tensor2::from_rows(&[
        vec![0.0, 1.0, 2.0],
        vec![3f64.ln(), 4.0, 6.0],
    ]));
    let wa = tape.constant(Tensor2::from_vec(
        1,
        2 * d,
        vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    ));
    let r = tape.readout(h, wa, 2);
    let alpha = tape.readout_alpha(r);
    assert!((alpha[0] - 0.25).abs() < 1e-12 && (alpha[1] - 0.75).abs() < 1e-12);
    let want = [
        0.25 * 0.0 + 0.75 * 3f64.ln(),
        0.25 * 1.0 + 0.75 * 4.0,
        0.25 * 2.0 + 0.75 * 6.0,
    ];
    for c in 0..d {
        assert!((tape.value(r).get(0, c) - want[c]).abs() < 1e-12);
    }
}

#[test]
fn readout_weights_sum_to_one_and_argmax_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (k, d) = (7, 4);
    for _ in 0..50 {
        let hs = Tensor2::from_vec(
            3 * k,
            d,
            (0..3 * k * d)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        );
        let w: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = rng.random_range(0.1..10.0);
        let mut tape = Tape::new();
        let h = tape.constant(hs);
        let wa = tape.constant(Tensor2::from_vec(1, 2 * d, w.clone()));
        let wc = tape.constant(Tensor2::from_vec(
            1,
            2 * d,
            w.iter().map(|x| x * c).collect(),
        ));
        let r1 = tape.readout(h, wa, k);
        let r2 = tape.readout(h, wc, k);
        let (a1, a2) = (
            tape.readout_alpha(r1).to_vec(),
            tape.readout_alpha(r2).to_vec(),
        );
        let argmax = |a: &[f64]| (0..a.len()).fold(0, |b, i| if a[i] > a[b] { i } else { b });
        for b in 0..3 {
            let (s1, s2) = (&a1[b * k..(b + 1) * k], &a2[b * k..(b + 1) * k]);
            assert!((s1.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert_eq!(argmax(s1), argmax(s2));
        }
    }
}

#[test]
fn end_to_end_gradients() {
    let g = build_graph(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)], 5).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let x = random_features(5, 3, seed);
        let corpus = generate_mixed_walks(
            &g,
            &MixedWalkConfig {
                walks_per_node: 2,
                walk_length: 3,
                seed,
                ..MixedWalkConfig::default()
            },
        )
        .unwrap();
        let sgpm = random_features(5, 8, seed + 100);
        for use_sgpm in [false, true] {
            let cfg = ModelConfig {
                d_h: 8,
                heads: 2,
                n_hop: 2,
                use_sgpm,
                ..ModelConfig::default()
            };
            let inputs = TokenInputs::<f64>::new(&g, &x, Some(&corpus), Some(&sgpm), &cfg).unwrap();
            let (model, store) = small_model(&cfg, 3, 3, seed);
            assert!(model.seq_len(&inputs) <= 8);
            let nodes = [0, 2, 3, 4];
            let targets = [0, 1, 1, 2];
            let report = check_gradients(&store, 1e-4, 24, |tape, s| {
                let (_, logits) = model.forward(tape, s, &inputs, &nodes, &mut Dropout::eval());
                tape.cross_entropy(logits, &targets)
            });
            assert!(
                report.max_rel_err() < 1e-4,
                "seed {seed} sgpm {use_sgpm}: {:?}",
                report.worst()
            );
            assert_eq!(report.groups.len(), store.len());
            worst = worst.max(report.max_rel_err());
        }
    }
    println!("end-to-end max rel err {worst:.2e}");
}

/// Two dense blocks with block-indicator features.
fn separable_toy() -> (Dataset, Split, WalkCorpus) {
    let n = 40;
    let g = two_block_sbm(n, 0.4, 0.02, 5);
    let labels: Vec<usize> = (0..n).map(|v| v * 2 / n).collect();
    let mut x = Tensor2::zeros(n, 2);
    for (v, l) in labels.iter().enumerate() {
        x.set(v, *l, 1.0);
    }
    let split = make_split(n, (0.6, 0.2, 0.2), &labels, 0).unwrap();
    let corpus = generate_mixed_walks(
        &g,
        &MixedWalkConfig {
            walks_per_node: 4,
            ..MixedWalkConfig::default()
        },
    )
    .unwrap();
    (Dataset::new(g, x, labels).unwrap(), split, corpus)
}

fn toy_cfg() -> (ModelConfig, TrainConfig) {
    (
        ModelConfig {
            d_h: 16,
            use_sgpm: false,
            ..ModelConfig::default()
        },
        TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        },
    )
}

#[test]
fn separable_toy_reaches_full_training_accuracy() {
    let (ds, split, corpus) = separable_toy();
    let (mcfg, tcfg) = toy_cfg();
    let inputs = TokenInputs::new(&ds.graph, &ds.features, Some(&corpus), None, &mcfg).unwrap();
    let t = train(&ds, &split, &inputs, &mcfg, &tcfg, 0).unwrap();
    assert!(t.history.len() <= 50);
    assert_eq!(t.train_acc, 1.0);

    let seeds: Vec<u64> = (0..10).collect();
    let s = evaluate(&ds, &split, &inputs, &mcfg, &tcfg, &seeds).unwrap();
    assert_eq!((s.mean, s.std), (1.0, 0.0));
    let one = evaluate(&ds, &split, &inputs, &mcfg, &tcfg, &[3]).unwrap();
    assert_eq!(one.std, 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eval.csv");
    write_eval_csv(&path, &[("toy".into(), "h123".into(), s)]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], EVAL_CSV_HEADER);
    assert_eq!(lines[1], "toy,h123,1.000000,0.000000,0;1;2;3;4;5;6;7;8;9");
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let (ds, split, corpus) = separable_toy();
    let (mcfg, tcfg) = toy_cfg();
    let inputs = TokenInputs::new(&ds.graph, &ds.features, Some(&corpus), None, &mcfg).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| train(&ds, &split, &inputs, &mcfg, &tcfg, 7).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.history, b.history);
    assert_eq!(
        tokenwalk_nn::checkpoint::to_bytes(&a.store),
        tokenwalk_nn::checkpoint::to_bytes(&b.store)
    );
}
