use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use tokenwalk_nn::gradcheck::{check_gradients, GradCheckReport};
use tokenwalk_nn::{
    AttentionParams, Dropout, EncoderLayerParams, FfnParams, Init, LayerNormParams, LinearParams,
    ParamStore, SparseRows, Tape, Tensor2, Var,
};

const SEEDS: u64 = 20;
const H: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2<f64> {
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
}

/// Reduces an output to a scalar through fixed random weights so that no
/// gradient is trivially zero.
fn probe(tape: &mut Tape<f64>, y: Var, seed: u64) -> Var {
    let (r, c) = tape.value(y).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let w = tape.constant(random(&mut rng, c, 1));
    let z = tape.matmul(y, w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    let w2 = tape.constant(random(&mut rng, 1, r));
    let s = tape.matmul(w2, z);
    tape.sum(s)
}

fn assert_report(what: &str, seed: u64, report: &GradCheckReport) {
    let worst = report.worst().unwrap();
    if worst.rel_err >= TOL {
        eprintln!("{report:#?}");
    }
    assert!(
        report.max_rel_err() < TOL,
        "{what} seed {seed}: group {} rel err {:.3e}",
        worst.name,
        worst.rel_err
    );
    assert!(report.checked() > 0, "{what} seed {seed}: nothing checked");
}

#[test]
fn linear_and_matmul() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", random(&mut rng, 5, 4));
        let lin = LinearParams::new(&mut store, "lin", 4, 3, &mut rng);
        let m = store.add("m", random(&mut rng, 3, 2));
        store
            .get_mut(lin.b)
            .data_mut()
            .copy_from_slice(&[0.1, -0.2, 0.3]);
        let report = check_gradients(&store, H, 64, |t, s| {
            let xv = t.param(s, x);
            let y = lin.forward(t, s, xv);
            let mv = t.param(s, m);
            let z = t.matmul(y, mv);
            probe(t, z, seed)
        });
        assert_report("linear", seed, &report);
    }
}

#[test]
fn sparse_linear() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let mut dense = random(&mut rng, 6, 10);
        for v in dense.data_mut() {
            if *v < 0.3 {
                *v = 0.0;
            }
        }
        let sp = Arc::new(SparseRows::from_dense(&dense));
        let lin = LinearParams::new(&mut store, "lin", 10, 4, &mut rng);
        let report = check_gradients(&store, H, 64, |t, s| {
            let y = lin.forward_sparse(t, s, sp.clone());
            probe(t, y, seed)
        });
        assert_report("sparse_linear", seed, &report);
    }
}

#[test]
fn elementwise_ops() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", random(&mut rng, 4, 3));
        let b = store.add("b", random(&mut rng, 4, 3));
        let r = store.add("r", random(&mut rng, 1, 3));
        let report = check_gradients(&store, H, 64, |t, s| {
            let (av, bv, rv) = (t.param(s, a), t.param(s, b), t.param(s, r));
            let x = t.add(av, bv);
            let x = t.add_row(x, rv);
            let x = t.scale(x, 1.7);
            let x = t.relu(x);
            let x = t.softmax_rows(x);
            probe(t, x, seed)
        });
        assert_report("elementwise", seed, &report);
    }
}

#[test]
fn layer_norm() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", random(&mut rng, 3, 6));
        let ln = LayerNormParams::new(&mut store, "ln", 6, &mut rng);
        *store.get_mut(ln.gain) = random(&mut rng, 1, 6);
        *store.get_mut(ln.bias) = random(&mut rng, 1, 6);
        let report = check_gradients(&store, H, 64, |t, s| {
            let xv = t.param(s, x);
            let y = ln.forward(t, s, xv);
            probe(t, y, seed)
        });
        assert_report("layer_norm", seed, &report);
    }
}

#[test]
fn multi_head_attention_with_mask() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", random(&mut rng, 8, 6));
        let attn = AttentionParams::new(&mut store, "attn", 6, 2, &mut rng).unwrap();
        let mask = Arc::new(vec![true, true, true, false, true, false, true, true]);
        let report = check_gradients(&store, H, 48, |t, s| {
            let xv = t.param(s, x);
            let y = attn.forward(t, s, xv, 4, Some(mask.clone()));
            probe(t, y, seed)
        });
        assert_report("attention", seed, &report);
    }
}

#[test]
fn feed_forward() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", random(&mut rng, 5, 4));
        let ffn = FfnParams::new(&mut store, "ffn", 4, &mut rng);
        let report = check_gradients(&store, H, 48, |t, s| {
            let xv = t.param(s, x);
            let y = ffn.forward(t, s, xv, &mut Dropout::eval());
            probe(t, y, seed)
        });
        assert_report("ffn", seed, &report);
    }
}

#[test]
fn readout() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let h = store.add("h", random(&mut rng, 12, 5));
        let wa = store.add("wa", random(&mut rng, 1, 10));
        let report = check_gradients(&store, H, 64, |t, s| {
            let (hv, wv) = (t.param(s, h), t.param(s, wa));
            let y = t.readout(hv, wv, 4);
            probe(t, y, seed)
        });
        assert_report("readout", seed, &report);
    }
}

/// Token embedding, hop projection, sequence assembly, a full encoder layer,
/// readout, a two-layer head and the classification loss in one graph.
#[test]
fn full_token_model() {
    let (blocks, walks, walk_len, d, classes) = (3usize, 2usize, 3usize, 8usize, 3usize);
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let feats = random(&mut rng, 7, 5);
        let sparse = Arc::new(SparseRows::from_dense(&feats));
        let anchor = store.add_init("anchor", blocks, d, Init::Normal(0.5), &mut rng);
        let hop = LinearParams::new(&mut store, "hop", 5, d, &mut rng);
        let walk = LinearParams::new(&mut store, "walk", 5, d, &mut rng);
        let pos = store.add_init("pos", walk_len, d, Init::Normal(0.3), &mut rng);
        let enc = EncoderLayerParams::new(&mut store, "enc", d, 2, &mut rng).unwrap();
        let out_norm = LayerNormParams::new(&mut store, "out_norm", d, &mut rng);
        let wa = store.add_init("wa", 1, 2 * d, Init::Normal(0.5), &mut rng);
        let head1 = LinearParams::new(&mut store, "head1", d, d / 2, &mut rng);
        let head2 = LinearParams::new(&mut store, "head2", d / 2, classes, &mut rng);
        let hop_rows: Vec<usize> = (0..blocks * 2).map(|_| rng.random_range(0..7)).collect();
        let walk_nodes: Vec<usize> = (0..blocks * walks * walk_len)
            .map(|_| rng.random_range(0..7))
            .collect();
        // unbalanced targets keep the head bias gradient away from an exact
        // zero, where central differences only see truncation error
        let targets: Vec<usize> = (0..blocks).map(|b| (b * b) % classes).collect();
        let seq = 1 + 2 + walks;

        let report = check_gradients(&store, H, 24, |t, s| {
            let a = t.param(s, anchor);
            let hop_in = t.constant(feats.clone());
            let hop_all = hop.forward(t, s, hop_in);
            let hop_tok = t.gather_rows(hop_all, &hop_rows);
            let wx = walk.forward_sparse(t, s, Arc::new(sparse.select_rows(&walk_nodes)));
            let p = t.param(s, pos);
            let pos_ids = (0..walk_nodes.len()).map(|i| Some(i % walk_len)).collect();
            let pe = t.gather(p, pos_ids);
            let wx = t.add(wx, pe);
            let wx = t.relu(wx);
            let offsets = (0..=blocks * walks).map(|i| i * walk_len).collect();
            let walk_tok = t.segment_mean(wx, offsets);
            let h = t.assemble(vec![(a, 1), (hop_tok, 2), (walk_tok, walks)], blocks);
            let h = enc.forward(t, s, h, seq, None, &mut Dropout::eval());
            let h = out_norm.forward(t, s, h);
            let w = t.param(s, wa);
            let r = t.readout(h, w, seq);
            let z = head1.forward(t, s, r);
            let z = t.relu(z);
            let logits = head2.forward(t, s, z);
            t.cross_entropy(logits, &targets)
        });
        assert_report("full model", seed, &report);
        worst = worst.max(report.max_rel_err());
    }
    println!("full model worst relative error over {SEEDS} seeds: {worst:.3e}");
}
