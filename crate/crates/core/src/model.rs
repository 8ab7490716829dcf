//! The token-sequence node classifier: hop tokens, walk tokens and a
//! pre-trained anchor token per node, a pre-norm transformer encoder,
//! attention readout and an MLP head.

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;
use crate::walk::WalkCorpus;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use tokenwalk_nn::{
    sinusoidal_positions, AdamW, Dropout, EncoderLayerParams, Init, LayerNormParams, LinearParams,
    ParamId, ParamStore, Scalar, SparseRows, Tape, Tensor2, Var,
};

/// Adjacency normalization used to propagate hop features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopNorm {
    /// `A`.
    Raw,
    /// `D⁻¹A`.
    Row,
    /// `D̃^{-1/2}(A + I)D̃^{-1/2}`.
    #[default]
    Symmetric,
}

/// How the visited nodes of a walk are pooled into one token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkPooling {
    /// `mean_i ReLU(x_i W + b + PE_i)`: order-sensitive.
    #[default]
    Positional,
    /// `mean_i (x_i W + b)`: order-insensitive.
    Mean,
}

/// Sparse propagation matrix `Â` for one normalization flavor.
pub fn propagation_matrix<T: Scalar>(g: &Graph, norm: HopNorm) -> SparseRows<T> {
    let n = g.node_count();
    let deg = g.degrees();
    let entries: Vec<Vec<(usize, T)>> = (0..n)
        .map(|u| match norm {
            HopNorm::Raw => g.neighbors(u).iter().map(|v| (*v, T::one())).collect(),
            HopNorm::Row => {
                let w = T::one() / T::of(deg[u].max(1) as f64);
                g.neighbors(u).iter().map(|v| (*v, w)).collect()
            }
            HopNorm::Symmetric => {
                let du = (deg[u] + 1) as f64;
                let mut row: Vec<(usize, T)> = g
                    .neighbors(u)
                    .iter()
                    .map(|v| (*v, T::of(1.0 / (du * (deg[*v] + 1) as f64).sqrt())))
                    .collect();
                row.push((u, T::of(1.0 / du)));
                row.sort_unstable_by_key(|e| e.0);
                row
            }
        })
        .collect();
    SparseRows::from_row_entries(n, &entries)
}

/// Unprojected hop features `[X, ÂX, …, Â^{n_hop}X]`.
pub fn hop_features<T: Scalar>(
    g: &Graph,
    x: &Tensor2<T>,
    n_hop: usize,
    norm: HopNorm,
) -> Vec<Tensor2<T>> {
    let a = propagation_matrix::<T>(g, norm);
    let mut hops = vec![x.clone()];
    for _ in 0..n_hop {
        let next = a.matmul(hops.last().unwrap());
        hops.push(next);
    }
    hops
}

/// Scale of the sinusoidal walk-position code. Unit-amplitude codes would
/// swamp projected sparse features (entries of order `1/sqrt(d_h)`) and the
/// ReLU would then mostly clip feature information.
pub fn pe_scale(d_h: usize) -> f64 {
    1.0 / (d_h as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_h: usize,
    pub layers: usize,
    pub heads: usize,
    pub n_hop: usize,
    /// Include the hop-0 (own feature) token; off leaves hops `1..=n_hop`.
    pub hop_self: bool,
    pub hop_norm: HopNorm,
    pub walk_pooling: WalkPooling,
    /// Position 0 holds the pre-trained token; otherwise the hop-0 token.
    pub use_sgpm: bool,
    pub use_hop: bool,
    pub use_walk: bool,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_h: 64,
            layers: 1,
            heads: 1,
            n_hop: 3,
            hop_self: true,
            hop_norm: HopNorm::Symmetric,
            walk_pooling: WalkPooling::Positional,
            use_sgpm: true,
            use_hop: true,
            use_walk: true,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.d_h < 2 || self.heads == 0 || self.d_h % self.heads != 0 {
            errs.push(format!(
                "d_h {} must be >= 2 and a multiple of heads {}",
                self.d_h, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            errs.push(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    pub fn hop_tokens(&self) -> usize {
        if self.use_hop {
            self.n_hop + usize::from(self.hop_self)
        } else {
            0
        }
    }

    /// Sequence length `1 + (n_hop + 1) + m` with disabled kinds removed;
    /// without the hop-0 token there are `n_hop` hop tokens.
    pub fn seq_len(&self, m: usize) -> usize {
        1 + self.hop_tokens() + if self.use_walk { m } else { 0 }
    }
}

/// Per-node inputs computed before training.
#[derive(Clone, Debug)]
pub struct TokenInputs<T> {
    pub features: Arc<SparseRows<T>>,
    pub propagation: Arc<SparseRows<T>>,
    /// `m` walks (visited node lists) per node.
    pub walks: Vec<Vec<Vec<usize>>>,
    pub walks_per_node: usize,
    pub sgpm: Option<Tensor2<T>>,
    positions: Tensor2<T>,
}

impl<T: Scalar> TokenInputs<T> {
    pub fn new(
        g: &Graph,
        features: &Tensor2<f32>,
        corpus: Option<&WalkCorpus>,
        sgpm: Option<&Tensor2<f32>>,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let n = g.node_count();
        if features.rows() != n {
            return Err(Error::input(
                "features",
                format!("{} rows for {n} nodes", features.rows()),
            ));
        }
        let (walks, m) = match (cfg.use_walk, corpus) {
            (false, _) => (vec![Vec::new(); n], 0),
            (true, None) => {
                return Err(Error::Config(
                    "walk tokens need a walk corpus (run `walks`)".into(),
                ))
            }
            (true, Some(c)) => {
                if c.node_count() != n {
                    return Err(Error::input(
                        "walk corpus",
                        format!("{} nodes, graph has {n}", c.node_count()),
                    ));
                }
                let m = c.walks(0).len();
                let mut walks = Vec::with_capacity(n);
                for v in 0..n {
                    let ws = c.walks(v);
                    if ws.len() != m {
                        return Err(Error::input(
                            "walk corpus",
                            format!("node {v} has {} walks, expected {m}", ws.len()),
                        ));
                    }
                    walks.push(ws.iter().map(|w| w.nodes.clone()).collect());
                }
                (walks, m)
            }
        };
        let sgpm = match (cfg.use_sgpm, sgpm) {
            (false, _) => None,
            (true, None) => return Err(Error::Config(
                "the anchor token needs pre-trained tokens (run `pretrain` or disable use_sgpm)"
                    .into(),
            )),
            (true, Some(t)) => {
                if t.shape() != (n, cfg.d_h) {
                    return Err(Error::input(
                        "sgpm tokens",
                        format!("shape {:?}, expected ({n}, {})", t.shape(), cfg.d_h),
                    ));
                }
                Some(t.cast())
            }
        };
        let longest = walks.iter().flatten().map(Vec::len).max().unwrap_or(1);
        let mut positions = sinusoidal_positions::<T>(longest, cfg.d_h);
        positions.scale(T::of(pe_scale(cfg.d_h)));
        Ok(Self {
            features: Arc::new(SparseRows::from_dense(&features.cast())),
            propagation: Arc::new(propagation_matrix(g, cfg.hop_norm)),
            walks,
            walks_per_node: m,
            sgpm,
            positions,
        })
    }

    pub fn node_count(&self) -> usize {
        self.walks.len()
    }
}

/// Parameter layout of the classifier.
#[derive(Clone, Debug)]
pub struct TokenModel {
    pub cfg: ModelConfig,
    pub hop: LinearParams,
    pub walk: LinearParams,
    pub layers: Vec<EncoderLayerParams>,
    pub norm: LayerNormParams,
    pub readout: ParamId,
    pub head1: LinearParams,
    pub head2: LinearParams,
}

impl TokenModel {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        feature_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_h;
        Ok(Self {
            cfg: cfg.clone(),
            hop: LinearParams::new(store, "model.hop", feature_dim, d, rng),
            walk: LinearParams::new(store, "model.walk", feature_dim, d, rng),
            layers: (0..cfg.layers)
                .map(|l| {
                    EncoderLayerParams::new(store, &format!("model.layer{l}"), d, cfg.heads, rng)
                })
                .collect::<tokenwalk_nn::Result<Vec<_>>>()?,
            norm: LayerNormParams::new(store, "model.norm", d, rng),
            readout: store.add_init("model.readout", 1, 2 * d, Init::XavierUniform, rng),
            head1: LinearParams::new(store, "model.head1", d, d / 2, rng),
            head2: LinearParams::new(store, "model.head2", d / 2, classes, rng),
        })
    }

    /// Hop tokens `first..first + hops` of `nodes`, `nodes.len() · hops`
    /// rows, node-major. The shared projection is applied before
    /// propagation, which equals projecting `Â^k X` since both maps are
    /// linear.
    pub fn hop_tokens<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        inputs: &TokenInputs<T>,
        nodes: &[usize],
        first: usize,
        hops: usize,
    ) -> Var {
        let w = tape.param(store, self.hop.w);
        let mut z = tape.sparse_linear(inputs.features.clone(), w, None);
        for _ in 0..first {
            z = tape.sparse_linear(inputs.propagation.clone(), z, None);
        }
        let mut levels = vec![(z, 1)];
        for _ in 1..hops {
            z = tape.sparse_linear(inputs.propagation.clone(), z, None);
            levels.push((z, 1));
        }
        let all = tape.assemble(levels, inputs.node_count());
        let rows: Vec<usize> = nodes
            .iter()
            .flat_map(|v| (0..hops).map(move |k| v * hops + k))
            .collect();
        let tokens = tape.gather_rows(all, &rows);
        let b = tape.param(store, self.hop.b);
        tape.add_row(tokens, b)
    }

    /// One token per walk, `walks.len()` rows.
    pub fn walk_tokens<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        inputs: &TokenInputs<T>,
        walks: &[&[usize]],
    ) -> Var {
        let proj = self
            .walk
            .forward_sparse(tape, store, inputs.features.clone());
        let visited: Vec<usize> = walks.iter().flat_map(|w| w.iter().copied()).collect();
        let mut offsets = vec![0];
        for w in walks {
            assert!(!w.is_empty(), "walks must visit at least their start node");
            offsets.push(offsets.last().unwrap() + w.len());
        }
        let x = tape.gather_rows(proj, &visited);
        let x = match self.cfg.walk_pooling {
            WalkPooling::Mean => x,
            WalkPooling::Positional => {
                let longest = walks.iter().map(|w| w.len()).max().unwrap_or(0);
                let table = if longest > inputs.positions.rows() {
                    let mut t = sinusoidal_positions::<T>(longest, self.cfg.d_h);
                    t.scale(T::of(pe_scale(self.cfg.d_h)));
                    Cow::Owned(t)
                } else {
                    Cow::Borrowed(&inputs.positions)
                };
                let mut pe = Tensor2::zeros(visited.len(), self.cfg.d_h);
                let mut r = 0;
                for w in walks {
                    for i in 0..w.len() {
                        pe.row_mut(r).copy_from_slice(table.row(i));
                        r += 1;
                    }
                }
                let pe = tape.constant(pe);
                let x = tape.add(x, pe);
                tape.relu(x)
            }
        };
        tape.segment_mean(x, offsets)
    }

    /// Token sequences of `nodes`, `nodes.len() · K` rows.
    pub fn assemble<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        inputs: &TokenInputs<T>,
        nodes: &[usize],
    ) -> Var {
        let cfg = &self.cfg;
        let mut parts = Vec::new();
        let hop_count = cfg.hop_tokens();
        let first = usize::from(!cfg.hop_self);
        let hops =
            (hop_count > 0).then(|| self.hop_tokens(tape, store, inputs, nodes, first, hop_count));
        let anchor = match &inputs.sgpm {
            Some(table) if cfg.use_sgpm => {
                let mut t = Tensor2::zeros(nodes.len(), cfg.d_h);
                for (r, v) in nodes.iter().enumerate() {
                    t.row_mut(r).copy_from_slice(table.row(*v));
                }
                tape.constant(t)
            }
            _ => match hops.filter(|_| cfg.hop_self) {
                Some(h) => {
                    let rows: Vec<usize> = (0..nodes.len()).map(|r| r * hop_count).collect();
                    tape.gather_rows(h, &rows)
                }
                None => self.hop_tokens(tape, store, inputs, nodes, 0, 1),
            },
        };
        parts.push((anchor, 1));
        if let Some(h) = hops {
            parts.push((h, hop_count));
        }
        if cfg.use_walk && inputs.walks_per_node > 0 {
            let walks: Vec<&[usize]> = nodes
                .iter()
                .flat_map(|v| inputs.walks[*v].iter().map(Vec::as_slice))
                .collect();
            let w = self.walk_tokens(tape, store, inputs, &walks);
            parts.push((w, inputs.walks_per_node));
        }
        tape.assemble(parts, nodes.len())
    }

    pub fn seq_len<T>(&self, inputs: &TokenInputs<T>) -> usize {
        self.cfg.seq_len(inputs.walks_per_node)
    }

    /// The encoder layers alone (no final normalization).
    pub fn encode<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        h: Var,
        seq_len: usize,
        dropout: &mut Dropout,
    ) -> Var {
        self.layers.iter().fold(h, |h, layer| {
            layer.forward(tape, store, h, seq_len, None, dropout)
        })
    }

    /// Returns `(readout, logits)` for `nodes`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        inputs: &TokenInputs<T>,
        nodes: &[usize],
        dropout: &mut Dropout,
    ) -> (Var, Var) {
        let k = self.seq_len(inputs);
        let h = self.assemble(tape, store, inputs, nodes);
        let h = self.encode(tape, store, h, k, dropout);
        let h = self.norm.forward(tape, store, h);
        let wa = tape.param(store, self.readout);
        let r = tape.readout(h, wa, k);
        let z = self.head1.forward(tape, store, r);
        let z = tape.relu(z);
        let z = dropout.apply(tape, z);
        let logits = self.head2.forward(tape, store, z);
        (r, logits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Nodes per mini-batch.
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            weight_decay: 1e-5,
            batch_size: 2000,
            epochs: 500,
            patience: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.lr > 0.0) {
            errs.push(format!("lr {} must be > 0", self.lr));
        }
        if self.weight_decay < 0.0 {
            errs.push(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: TokenModel,
    /// Parameters of the best validation epoch.
    pub store: ParamStore<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Loss and accuracy of `nodes` in evaluation mode.
pub fn evaluate_nodes(
    model: &TokenModel,
    store: &ParamStore<f32>,
    inputs: &TokenInputs<f32>,
    labels: &[usize],
    nodes: &[usize],
    batch_size: usize,
) -> (f64, f64) {
    if nodes.is_empty() {
        return (0.0, 0.0);
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in nodes.chunks(batch_size) {
        let mut tape = Tape::new();
        let (_, logits) = model.forward(&mut tape, store, inputs, chunk, &mut Dropout::eval());
        let targets: Vec<usize> = chunk.iter().map(|v| labels[*v]).collect();
        correct += count_correct(tape.value(logits), &targets);
        let l = tape.cross_entropy(logits, &targets);
        loss += tape.value(l).item() as f64 * chunk.len() as f64;
    }
    (
        loss / nodes.len() as f64,
        correct as f64 / nodes.len() as f64,
    )
}

fn count_correct<T: Scalar>(logits: &Tensor2<T>, targets: &[usize]) -> usize {
    (0..logits.rows())
        .filter(|r| {
            let row = logits.row(*r);
            let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            best == targets[*r]
        })
        .count()
}

/// Trains with early stopping on validation accuracy (ties broken by lower
/// validation loss) and reports accuracies of the best epoch.
pub fn train(
    ds: &Dataset,
    split: &Split,
    inputs: &TokenInputs<f32>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::Config("the split has no training nodes".into()));
    }
    let mut store = ParamStore::<f32>::new();
    let model = TokenModel::new(
        &mut store,
        model_cfg,
        ds.feature_dim(),
        ds.num_classes,
        &mut rng::stream(seed, rng::INIT, 1, 0),
    )?;
    let opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut best = store.clone();
    let mut best_key = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut order = split.train.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng::stream(seed, rng::SHUFFLE, epoch as u64, 1));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut dropout = Dropout::new(
                model_cfg.dropout,
                true,
                rng::stream(seed, rng::DROPOUT, epoch as u64, b as u64),
            );
            let mut tape = Tape::new();
            let (_, logits) = model.forward(&mut tape, &store, inputs, chunk, &mut dropout);
            let targets: Vec<usize> = chunk.iter().map(|v| ds.labels[*v]).collect();
            correct += count_correct(tape.value(logits), &targets);
            let loss = tape.cross_entropy(logits, &targets);
            let value = tape.value(loss).item() as f64;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}, batch {b} (lr {}); lower the learning rate",
                    cfg.lr
                )));
            }
            loss_sum += value * chunk.len() as f64;
            let grads = tape.backward(loss);
            opt.step(&mut store, &grads);
        }
        let (val_loss, val_acc) = evaluate_nodes(
            &model,
            &store,
            inputs,
            &ds.labels,
            &split.val,
            cfg.batch_size,
        );
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_acc: correct as f64 / order.len() as f64,
            val_loss,
            val_acc,
        };
        log::debug!("epoch {epoch}: {record:?}");
        history.push(record);
        let key = (val_acc, -val_loss);
        if key > best_key || split.val.is_empty() {
            best_key = key;
            best_epoch = epoch;
            best = store.clone();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let acc = |nodes: &[usize]| {
        evaluate_nodes(&model, &best, inputs, &ds.labels, nodes, cfg.batch_size).1
    };
    Ok(Trained {
        train_acc: acc(&split.train),
        val_acc: acc(&split.val),
        test_acc: acc(&split.test),
        model,
        store: best,
        history,
        best_epoch,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub seeds: Vec<u64>,
    pub test_acc: Vec<f64>,
    pub val_acc: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Retrains once per seed and summarizes test accuracy.
pub fn evaluate(
    ds: &Dataset,
    split: &Split,
    inputs: &TokenInputs<f32>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<EvalSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one seed".into()));
    }
    let mut test_acc = Vec::new();
    let mut val_acc = Vec::new();
    for seed in seeds {
        let t = train(ds, split, inputs, model_cfg, cfg, *seed)?;
        log::info!(
            "seed {seed}: test {:.4} val {:.4} (best epoch {})",
            t.test_acc,
            t.val_acc,
            t.best_epoch
        );
        test_acc.push(t.test_acc);
        val_acc.push(t.val_acc);
    }
    let (mean, std) = mean_std(&test_acc);
    Ok(EvalSummary {
        seeds: seeds.to_vec(),
        test_acc,
        val_acc,
        mean,
        std,
    })
}

pub const EVAL_CSV_HEADER: &str = "dataset,config_hash,mean,std,seeds";

/// One CSV row: `dataset,config_hash,mean,std,seeds` with seeds joined by `;`.
pub fn eval_csv_row(dataset: &str, config_hash: &str, s: &EvalSummary) -> String {
    let seeds: Vec<String> = s.seeds.iter().map(u64::to_string).collect();
    format!(
        "{dataset},{config_hash},{:.6},{:.6},{}",
        s.mean,
        s.std,
        seeds.join(";")
    )
}

/// Writes the header and one row per summary.
pub fn write_eval_csv(path: &Path, rows: &[(String, String, EvalSummary)]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = format!("{EVAL_CSV_HEADER}\n");
    for (ds, hash, s) in rows {
        text.push_str(&eval_csv_row(ds, hash, s));
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_lengths() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.seq_len(100), 105);
        let cfg = ModelConfig {
            n_hop: 0,
            ..ModelConfig::default()
        };
        assert_eq!(cfg.seq_len(0), 2);
        let cfg = ModelConfig {
            use_walk: false,
            ..ModelConfig::default()
        };
        assert_eq!(cfg.seq_len(16), 5);
    }

    #[test]
    fn mean_std_single_and_many() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_row_format() {
        let s = EvalSummary {
            seeds: vec![0, 1],
            test_acc: vec![0.5, 1.0],
            val_acc: vec![0.5, 1.0],
            mean: 0.75,
            std: 0.25,
        };
        assert_eq!(
            eval_csv_row("cora", "abc", &s),
            "cora,abc,0.750000,0.250000,0;1"
        );
    }
}
