//! Masked-token pre-training of a bidirectional encoder over the graph
//! document, and export of per-node pre-trained tokens.

use crate::doc::{
    encode_sentence, input_representation, EncodedSentence, GraphDocument, InputTables, NodeInputs,
    Vocabulary, CLS, MASK,
};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use tokenwalk_nn::{
    AdamW, Dropout, EncoderLayerParams, Init, LayerNormParams, LinearParams, ParamStore, Scalar,
    Tape, Tensor2, Var,
};

/// Positions replaced by MASK in one sentence and the tokens they held.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskingPlan {
    pub positions: Vec<usize>,
    pub targets: Vec<usize>,
}

impl MaskingPlan {
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Token ids with the planned positions replaced by MASK.
    pub fn apply(&self, sentence: &EncodedSentence) -> Vec<usize> {
        let mut ids = sentence.ids.clone();
        for p in &self.positions {
            ids[*p] = MASK;
        }
        ids
    }
}

/// Masks `round(rate · real)` real tokens, sampled without replacement.
/// With `min_one`, sentences with at least one real token get one mask.
pub fn plan_masking<R: Rng>(
    sentence: &EncodedSentence,
    rate: f64,
    min_one: bool,
    rng: &mut R,
) -> MaskingPlan {
    assert!(
        (0.0..=1.0).contains(&rate),
        "mask rate {rate} outside [0, 1]"
    );
    let real = sentence.real_tokens();
    let mut count = (rate * real as f64).round() as usize;
    if min_one && real > 0 {
        count = count.max(1);
    }
    let mut positions: Vec<usize> = rand::seq::index::sample(rng, real, count.min(real))
        .into_iter()
        .map(|i| i + 1)
        .collect();
    positions.sort_unstable();
    MaskingPlan {
        targets: positions.iter().map(|p| sentence.ids[*p]).collect(),
        positions,
    }
}

/// How pre-trained tokens are read out of the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportMode {
    /// Fused input embedding of the node token at position 1.
    #[default]
    Input,
    /// Mean final hidden state at position 1 over the node's validation
    /// sentences.
    Contextual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgpmConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub mask_rate: f64,
    pub min_one_mask: bool,
    pub epochs: usize,
    /// Sentences per mini-batch.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub export: ExportMode,
}

impl Default for SgpmConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            width: 64,
            heads: 1,
            mask_rate: 0.15,
            min_one_mask: true,
            epochs: 50,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 1e-5,
            dropout: 0.1,
            export: ExportMode::Input,
        }
    }
}

impl SgpmConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            errs.push(format!(
                "width {} must be a positive multiple of heads {}",
                self.width, self.heads
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            errs.push(format!("mask_rate {} outside [0, 1]", self.mask_rate));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be >= 1".into());
        }
        if !(self.lr > 0.0) {
            errs.push(format!("lr {} must be > 0", self.lr));
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
}

/// Parameter layout of the pre-training model. The ids index a
/// [`ParamStore`] of any scalar type built by [`SgpmNet::new`].
#[derive(Clone, Debug)]
pub struct SgpmNet {
    pub tables: InputTables,
    pub layers: Vec<EncoderLayerParams>,
    pub norm: LayerNormParams,
    pub out: LinearParams,
    pub vocab: Vocabulary,
    pub max_len: usize,
}

impl SgpmNet {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        vocab: Vocabulary,
        max_len: usize,
        feature_dim: usize,
        cfg: &SgpmConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let d = cfg.width;
        let tables = InputTables::new(store, vocab.size(), max_len, feature_dim, d, rng);
        let layers = (0..cfg.layers)
            .map(|l| EncoderLayerParams::new(store, &format!("sgpm.layer{l}"), d, cfg.heads, rng))
            .collect::<tokenwalk_nn::Result<Vec<_>>>()?;
        let norm = LayerNormParams::new(store, "sgpm.norm", d, rng);
        // small output weights keep the untrained prediction near uniform
        let out = LinearParams {
            w: store.add_init("sgpm.out.w", d, vocab.size(), Init::Normal(0.02), rng),
            b: store.add_init("sgpm.out.b", 1, vocab.size(), Init::Zeros, rng),
        };
        Ok(Self {
            tables,
            layers,
            norm,
            out,
            vocab,
            max_len,
        })
    }

    /// Final normalized hidden states, `sentences.len() · max_len` rows.
    pub fn hidden<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        inputs: &NodeInputs<T>,
        sentences: &[&[usize]],
        mask: Arc<Vec<bool>>,
        dropout: &mut Dropout,
    ) -> Var {
        let x = input_representation(tape, store, &self.tables, &self.vocab, sentences, inputs);
        let mut h = dropout.apply(tape, x);
        for layer in &self.layers {
            h = layer.forward(tape, store, h, self.max_len, Some(mask.clone()), dropout);
        }
        self.norm.forward(tape, store, h)
    }

    /// Mean cross-entropy over all masked positions of a batch; `None` when
    /// no position is masked.
    pub fn mlm_loss<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        inputs: &NodeInputs<T>,
        batch: &[(&EncodedSentence, &MaskingPlan)],
        dropout: &mut Dropout,
    ) -> Option<Var> {
        let (rows, targets) = masked_rows(batch, self.max_len);
        if rows.is_empty() {
            return None;
        }
        let logits = self.logits(tape, store, inputs, batch, &rows, dropout);
        Some(tape.cross_entropy(logits, &targets))
    }

    /// Vocabulary scores at the given rows of the batch.
    pub fn logits<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        inputs: &NodeInputs<T>,
        batch: &[(&EncodedSentence, &MaskingPlan)],
        rows: &[usize],
        dropout: &mut Dropout,
    ) -> Var {
        let ids: Vec<Vec<usize>> = batch.iter().map(|(s, p)| p.apply(s)).collect();
        let refs: Vec<&[usize]> = ids.iter().map(Vec::as_slice).collect();
        let mask: Vec<bool> = batch
            .iter()
            .flat_map(|(s, _)| s.mask.iter().copied())
            .collect();
        let h = self.hidden(tape, store, inputs, &refs, Arc::new(mask), dropout);
        let hm = tape.gather_rows(h, rows);
        self.out.forward(tape, store, hm)
    }
}

/// Flattened row indices and target tokens of every masked position.
pub fn masked_rows(
    batch: &[(&EncodedSentence, &MaskingPlan)],
    max_len: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (b, (_, plan)) in batch.iter().enumerate() {
        for (p, t) in plan.positions.iter().zip(&plan.targets) {
            rows.push(b * max_len + p);
            targets.push(*t);
        }
    }
    (rows, targets)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Result of [`pretrain`]: the best-validation parameters and the curve.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub net: SgpmNet,
    pub store: ParamStore<f32>,
    pub curve: Vec<EpochLoss>,
    pub best_epoch: usize,
    /// Training stopped at a non-finite loss; `store` holds the last good
    /// (best-validation) parameters.
    pub diverged: bool,
}

struct Corpus {
    sentences: Vec<EncodedSentence>,
}

impl Corpus {
    fn new(vocab: &Vocabulary, walks: &[&[usize]], max_len: usize) -> Self {
        Self {
            sentences: walks
                .iter()
                .map(|w| encode_sentence(vocab, w, max_len))
                .collect(),
        }
    }

    fn plans(&self, cfg: &SgpmConfig, seed: u64, round: u64) -> Vec<MaskingPlan> {
        self.sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut r = rng::stream(seed, rng::MASKING, round, i as u64);
                plan_masking(s, cfg.mask_rate, cfg.min_one_mask, &mut r)
            })
            .collect()
    }
}

/// Masked-token loss averaged over every masked position of `order`, in
/// evaluation mode.
fn evaluate_loss(
    net: &SgpmNet,
    store: &ParamStore<f32>,
    inputs: &NodeInputs<f32>,
    corpus: &Corpus,
    plans: &[MaskingPlan],
    batch_size: usize,
) -> f64 {
    let idx: Vec<usize> = (0..corpus.sentences.len()).collect();
    let (mut total, mut count) = (0.0, 0usize);
    for chunk in idx.chunks(batch_size) {
        let batch: Vec<_> = chunk
            .iter()
            .map(|i| (&corpus.sentences[*i], &plans[*i]))
            .collect();
        let mut tape = Tape::new();
        if let Some(loss) = net.mlm_loss(&mut tape, store, inputs, &batch, &mut Dropout::eval()) {
            let n = masked_rows(&batch, net.max_len).0.len();
            total += tape.value(loss).item() as f64 * n as f64;
            count += n;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Pre-trains on the training partition of `doc`, tracking the masked-token
/// loss on the validation partition. Epoch 0 is measured before any update.
pub fn pretrain(
    doc: &GraphDocument,
    inputs: &NodeInputs<f32>,
    vocab: Vocabulary,
    cfg: &SgpmConfig,
    seed: u64,
) -> Result<Pretrained> {
    cfg.validate()?;
    let train_walks = doc.train_sentences();
    if train_walks.is_empty() {
        return Err(Error::input("graph document", "no training sentences"));
    }
    let max_len = doc.meta.max_len();
    let feature_dim = inputs.features.cols();
    let mut store = ParamStore::<f32>::new();
    let net = SgpmNet::new(
        &mut store,
        vocab,
        max_len,
        feature_dim,
        cfg,
        &mut rng::stream(seed, rng::INIT, 0, 0),
    )?;
    let train = Corpus::new(&vocab, &train_walks, max_len);
    let val = Corpus::new(&vocab, &doc.val_sentences(), max_len);
    let truncated = train.sentences.iter().filter(|s| s.truncated).count();
    if truncated > 0 {
        log::warn!("{truncated} training sentences truncated to {max_len} tokens");
    }
    let val_plans = val.plans(cfg, seed, u64::MAX);
    let opt = AdamW::new(cfg.lr, cfg.weight_decay);

    let val_loss = |store: &ParamStore<f32>| {
        if val.sentences.is_empty() {
            f64::NAN
        } else {
            evaluate_loss(&net, store, inputs, &val, &val_plans, cfg.batch_size)
        }
    };
    let epoch0_plans = train.plans(cfg, seed, 0);
    let mut curve = vec![EpochLoss {
        epoch: 0,
        train_loss: evaluate_loss(&net, &store, inputs, &train, &epoch0_plans, cfg.batch_size),
        val_loss: val_loss(&store),
    }];
    let mut best = store.clone();
    let mut best_epoch = 0;
    let mut best_val = curve[0].val_loss;
    let mut diverged = false;

    'epochs: for epoch in 1..=cfg.epochs {
        let plans = train.plans(cfg, seed, epoch as u64);
        let mut order: Vec<usize> = (0..train.sentences.len()).collect();
        order.shuffle(&mut rng::stream(seed, rng::SHUFFLE, epoch as u64, 0));
        let (mut total, mut count) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<_> = chunk
                .iter()
                .map(|i| (&train.sentences[*i], &plans[*i]))
                .collect();
            let mut dropout = Dropout::new(
                cfg.dropout,
                true,
                rng::stream(seed, rng::DROPOUT, epoch as u64, b as u64),
            );
            let mut tape = Tape::new();
            let Some(loss) = net.mlm_loss(&mut tape, &store, inputs, &batch, &mut dropout) else {
                continue;
            };
            let value = tape.value(loss).item() as f64;
            if !value.is_finite() {
                log::error!("non-finite pre-training loss at epoch {epoch}, batch {b}");
                diverged = true;
                break 'epochs;
            }
            let n = masked_rows(&batch, max_len).0.len();
            total += value * n as f64;
            count += n;
            let grads = tape.backward(loss);
            opt.step(&mut store, &grads);
        }
        if !store.is_finite() {
            diverged = true;
            break;
        }
        let v = val_loss(&store);
        let train_loss = if count == 0 {
            0.0
        } else {
            total / count as f64
        };
        log::info!("sgpm epoch {epoch}: train {train_loss:.4} val {v:.4}");
        curve.push(EpochLoss {
            epoch,
            train_loss,
            val_loss: v,
        });
        // without a validation partition the latest parameters are kept
        if v.is_nan() || v < best_val {
            best_val = v;
            best_epoch = epoch;
            best = store.clone();
        }
    }
    Ok(Pretrained {
        net,
        store: best,
        curve,
        best_epoch,
        diverged,
    })
}

/// Per-node pre-trained tokens, `n × width`.
pub fn export_sgpm_tokens(
    pre: &Pretrained,
    inputs: &NodeInputs<f32>,
    doc: Option<&GraphDocument>,
    mode: ExportMode,
) -> Result<Tensor2<f32>> {
    let vocab = pre.net.vocab;
    let n = inputs.buckets.len();
    let width = pre.store.get(pre.net.tables.token).cols();
    match mode {
        ExportMode::Input => {
            let sentences: Vec<[usize; 2]> = (0..n)
                .map(|v| [CLS, vocab.token(v).expect("node in vocabulary")])
                .collect();
            let refs: Vec<&[usize]> = sentences.iter().map(|s| s.as_slice()).collect();
            let mut tape = Tape::new();
            let h = input_representation(
                &mut tape,
                &pre.store,
                &pre.net.tables,
                &vocab,
                &refs,
                inputs,
            );
            let rows: Vec<usize> = (0..n).map(|v| 2 * v + 1).collect();
            let out = tape.gather_rows(h, &rows);
            Ok(tape.value(out).clone())
        }
        ExportMode::Contextual => {
            let doc = doc.ok_or_else(|| {
                Error::Config("contextual export needs the graph document".into())
            })?;
            let max_len = pre.net.max_len;
            let mut sums = Tensor2::<f32>::zeros(n, width);
            let mut counts = vec![0usize; n];
            for v in 0..n {
                let walks = doc.val.walks(v);
                if walks.is_empty() {
                    return Err(Error::Config(format!(
                        "node {v} has no validation sentences for contextual export"
                    )));
                }
                let encoded: Vec<EncodedSentence> = walks
                    .iter()
                    .map(|w| encode_sentence(&vocab, &w.nodes, max_len))
                    .collect();
                let refs: Vec<&[usize]> = encoded.iter().map(|e| e.ids.as_slice()).collect();
                let mask: Vec<bool> = encoded
                    .iter()
                    .flat_map(|e| e.mask.iter().copied())
                    .collect();
                let mut tape = Tape::new();
                let h = pre.net.hidden(
                    &mut tape,
                    &pre.store,
                    inputs,
                    &refs,
                    Arc::new(mask),
                    &mut Dropout::eval(),
                );
                let hv = tape.value(h);
                for b in 0..encoded.len() {
                    for (acc, x) in sums.row_mut(v).iter_mut().zip(hv.row(b * max_len + 1)) {
                        *acc += *x;
                    }
                }
                counts[v] = encoded.len();
            }
            for (v, c) in counts.iter().enumerate() {
                for x in sums.row_mut(v) {
                    *x /= *c as f32;
                }
            }
            Ok(sums)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokensMeta {
    pub n: usize,
    pub d_h: usize,
    pub source_ckpt: String,
}

/// Writes `n · d_h` little-endian f32 values and a JSON sidecar
/// (`<path>.json`).
pub fn save_tokens(path: &Path, tokens: &Tensor2<f32>, source_ckpt: &str) -> Result<()> {
    let bytes: Vec<u8> = tokens.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_file(path, bytes)?;
    let meta = TokensMeta {
        n: tokens.rows(),
        d_h: tokens.cols(),
        source_ckpt: source_ckpt.to_string(),
    };
    write_file(
        &sidecar(path),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )
}

pub fn load_tokens(path: &Path) -> Result<(Tensor2<f32>, TokensMeta)> {
    let side = sidecar(path);
    let meta: TokensMeta =
        serde_json::from_str(&read_to_string(&side)?).map_err(|e| Error::Json {
            path: side,
            source: e,
        })?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.n * meta.d_h * 4 {
        return Err(Error::input(
            path.display().to_string(),
            format!(
                "{} bytes, expected {} for {}×{}",
                bytes.len(),
                meta.n * meta.d_h * 4,
                meta.n,
                meta.d_h
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((Tensor2::from_vec(meta.n, meta.d_h, data), meta))
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
