//! Graph documents: corpora of non-backtracking "sentences" with normally
//! distributed lengths, the node vocabulary, sentence encoding and the fused
//! token input representation.

use crate::error::{read_to_string, write_file, Error, Result};
use crate::graph::Graph;
use crate::rng;
use crate::walk::{sample_walk, StepModel, Walk, WalkCorpus};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use tokenwalk_nn::{Init, ParamId, ParamStore, Scalar, SparseRows, Tape, Var};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const MASK: usize = 4;
pub const NUM_SPECIAL: usize = 5;

/// Largest default sentence-length mean.
pub const MAX_DEFAULT_MU: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub mu: usize,
    pub sigma: f64,
    pub seed: u64,
    pub walks_per_node: usize,
    pub val_walks: usize,
}

impl DocumentMeta {
    /// Longest encoded sentence: `μ + 4σ` node tokens plus CLS and SEP.
    pub fn max_len(&self) -> usize {
        (self.mu as f64 + 4.0 * self.sigma).ceil() as usize + 2
    }
}

/// Training and validation sentences of every node. A sentence is a
/// non-backtracking walk; its length is its number of node tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDocument {
    pub meta: DocumentMeta,
    pub train: WalkCorpus,
    pub val: WalkCorpus,
}

/// Document generation settings; `mu = None` uses the graph radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DocumentConfig {
    pub walks_per_node: usize,
    pub val_walks: usize,
    pub mu: Option<usize>,
    pub sigma: f64,
}

impl Default for DocumentConfig {
    fn default() -> Self {
        Self {
            walks_per_node: 100,
            val_walks: 20,
            mu: None,
            sigma: 1.0,
        }
    }
}

impl DocumentConfig {
    pub fn resolved_mu(&self, radius: usize) -> usize {
        self.mu.unwrap_or_else(|| default_mu(radius))
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.walks_per_node == 0 {
            problems.push("walks_per_node must be >= 1".to_string());
        }
        if self.mu == Some(0) {
            problems.push("mu must be >= 1".to_string());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            problems.push(format!("sigma = {} must be > 0", self.sigma));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Draws `round(Normal(μ, σ²))` clamped to `[1, 4μ]`.
pub fn sentence_length<R: Rng>(mu: usize, sigma: f64, rng: &mut R) -> usize {
    let normal = Normal::new(mu as f64, sigma).expect("sigma > 0 checked by caller");
    let x = normal.sample(rng).round();
    x.clamp(1.0, 4.0 * mu as f64) as usize
}

/// Default sentence-length mean: the graph radius, clamped to `[1, 32]`.
pub fn default_mu(radius: usize) -> usize {
    radius.clamp(1, MAX_DEFAULT_MU)
}

pub fn generate_document(
    g: &Graph,
    walks_per_node: usize,
    val_walks: usize,
    mu: usize,
    sigma: f64,
    seed: u64,
) -> Result<GraphDocument> {
    if mu == 0 {
        return Err(Error::Config("sentence length mean must be >= 1".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "sentence length sigma {sigma} must be > 0"
        )));
    }
    let total = walks_per_node + val_walks;
    let per_node: Vec<Vec<Walk>> = (0..g.node_count())
        .into_par_iter()
        .map(|v| {
            (0..total)
                .map(|i| {
                    let mut rng = rng::stream(seed, rng::DOCUMENT, v as u64, i as u64);
                    let len = sentence_length(mu, sigma, &mut rng);
                    sample_walk(StepModel::Edge(g), v, len - 1, true, &mut rng)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut train, mut val) = (
        Vec::with_capacity(per_node.len()),
        Vec::with_capacity(per_node.len()),
    );
    for mut walks in per_node {
        val.push(walks.split_off(walks_per_node));
        train.push(walks);
    }
    Ok(GraphDocument {
        meta: DocumentMeta {
            mu,
            sigma,
            seed,
            walks_per_node,
            val_walks,
        },
        train: WalkCorpus {
            seed,
            per_node: train,
        },
        val: WalkCorpus {
            seed,
            per_node: val,
        },
    })
}

impl GraphDocument {
    /// Writes `train.txt`, `val.txt` and `meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.train.save(&dir.join("train.txt"))?;
        self.val.save(&dir.join("val.txt"))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        write_file(&dir.join("meta.json"), meta)
    }

    pub fn load(dir: &Path, node_count: usize) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta: DocumentMeta =
            serde_json::from_str(&read_to_string(&meta_path)?).map_err(|e| Error::Json {
                path: meta_path,
                source: e,
            })?;
        Ok(Self {
            train: WalkCorpus::load(&dir.join("train.txt"), node_count)?,
            val: WalkCorpus::load(&dir.join("val.txt"), node_count)?,
            meta,
        })
    }

    /// All training sentences, node-major.
    pub fn train_sentences(&self) -> Vec<&[usize]> {
        self.train
            .per_node
            .iter()
            .flatten()
            .map(|w| w.nodes.as_slice())
            .collect()
    }

    pub fn val_sentences(&self) -> Vec<&[usize]> {
        self.val
            .per_node
            .iter()
            .flatten()
            .map(|w| w.nodes.as_slice())
            .collect()
    }
}

/// Node tokens are `node + 5`; ids `0..5` are the special tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    nodes: usize,
}

pub fn build_vocab(g: &Graph) -> Vocabulary {
    Vocabulary {
        nodes: g.node_count(),
    }
}

impl Vocabulary {
    pub fn new(nodes: usize) -> Self {
        Self { nodes }
    }

    pub fn size(&self) -> usize {
        self.nodes + NUM_SPECIAL
    }

    pub fn token(&self, node: usize) -> Option<usize> {
        (node < self.nodes).then_some(node + NUM_SPECIAL)
    }

    pub fn node(&self, token: usize) -> Option<usize> {
        (NUM_SPECIAL..self.size())
            .contains(&token)
            .then(|| token - NUM_SPECIAL)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    /// `[CLS, tokens…, SEP, PAD…]`, exactly `max_len` long.
    pub ids: Vec<usize>,
    /// `true` for every non-PAD position.
    pub mask: Vec<bool>,
    /// Tokens were dropped to fit `max_len`.
    pub truncated: bool,
    /// Node ids outside the vocabulary, encoded as UNK.
    pub unknown: usize,
}

impl EncodedSentence {
    /// Number of node (or MASK/UNK) tokens between CLS and SEP.
    pub fn real_tokens(&self) -> usize {
        self.mask.iter().filter(|m| **m).count().saturating_sub(2)
    }
}

pub fn encode_sentence(vocab: &Vocabulary, walk: &[usize], max_len: usize) -> EncodedSentence {
    assert!(
        max_len >= 3,
        "max_len must leave room for CLS, one token and SEP"
    );
    let keep = walk.len().min(max_len - 2);
    let mut ids = Vec::with_capacity(max_len);
    let mut unknown = 0;
    ids.push(CLS);
    for node in &walk[..keep] {
        ids.push(vocab.token(*node).unwrap_or_else(|| {
            unknown += 1;
            UNK
        }));
    }
    ids.push(SEP);
    let real = ids.len();
    ids.resize(max_len, PAD);
    if unknown > 0 {
        log::warn!("{unknown} node ids outside the vocabulary encoded as UNK");
    }
    EncodedSentence {
        ids,
        mask: (0..max_len).map(|i| i < real).collect(),
        truncated: keep < walk.len(),
        unknown,
    }
}

/// Node ids of the tokens between CLS and SEP (inverse of [`encode_sentence`]).
pub fn decode_sentence(vocab: &Vocabulary, s: &EncodedSentence) -> Vec<Option<usize>> {
    s.ids
        .iter()
        .skip(1)
        .take_while(|t| **t != SEP)
        .map(|t| vocab.node(*t))
        .collect()
}

/// Degree bucket for the centrality embedding:
/// `{0, 1, 2, 3, 4–7, 8–15, 16–31, 32+}`.
pub fn degree_bucket(degree: usize) -> usize {
    match degree {
        0..=3 => degree,
        4..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        _ => 7,
    }
}

pub const NUM_DEGREE_BUCKETS: usize = 8;

/// Token, learned position, feature-projection and centrality tables whose
/// position-wise sum is the input of the encoder.
#[derive(Clone, Copy, Debug)]
pub struct InputTables {
    pub token: ParamId,
    pub position: ParamId,
    /// Bias-free so that special tokens get no feature contribution.
    pub feature: ParamId,
    pub centrality: ParamId,
    pub width: usize,
}

impl InputTables {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        vocab_size: usize,
        max_len: usize,
        feature_dim: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        let std = 0.02;
        Self {
            token: store.add_init("input.token", vocab_size, width, Init::Normal(std), rng),
            position: store.add_init("input.position", max_len, width, Init::Normal(std), rng),
            feature: store.add_init(
                "input.feature",
                feature_dim,
                width,
                Init::XavierUniform,
                rng,
            ),
            centrality: store.add_init(
                "input.centrality",
                NUM_DEGREE_BUCKETS,
                width,
                Init::Normal(std),
                rng,
            ),
            width,
        }
    }
}

/// Per-node inputs shared by every sentence: sparse features and degrees.
#[derive(Clone, Debug)]
pub struct NodeInputs<T> {
    pub features: Arc<SparseRows<T>>,
    pub buckets: Vec<usize>,
}

impl<T: Scalar> NodeInputs<T> {
    pub fn new(g: &Graph, features: &tokenwalk_nn::Tensor2<f32>) -> Self {
        Self {
            features: Arc::new(SparseRows::from_dense(&features.cast())),
            buckets: g.degrees().into_iter().map(degree_bucket).collect(),
        }
    }
}

/// `h_j = T[id_j] + P[j] + X[node_j]·W + C[bucket(node_j)]` for every
/// position of every sentence (rows are sentence-major). Special tokens
/// (including MASK) contribute neither features nor centrality.
pub fn input_representation<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    tables: &InputTables,
    vocab: &Vocabulary,
    sentences: &[&[usize]],
    inputs: &NodeInputs<T>,
) -> Var {
    let max_len = sentences.first().map_or(0, |s| s.len());
    let mut token_ids = Vec::new();
    let mut positions = Vec::new();
    let mut nodes = Vec::new();
    let mut buckets = Vec::new();
    for s in sentences {
        assert_eq!(s.len(), max_len, "sentences must share one padded length");
        for (pos, id) in s.iter().enumerate() {
            token_ids.push(Some(*id));
            positions.push(Some(pos));
            let node = vocab.node(*id);
            nodes.push(node);
            buckets.push(node.map(|v| inputs.buckets[v]));
        }
    }
    let t = tape.param(store, tables.token);
    let t = tape.gather(t, token_ids);
    let p = tape.param(store, tables.position);
    let p = tape.gather(p, positions);
    let w = tape.param(store, tables.feature);
    let xw = tape.sparse_linear(inputs.features.clone(), w, None);
    let x = tape.gather(xw, nodes);
    let c = tape.param(store, tables.centrality);
    let c = tape.gather(c, buckets);
    let h = tape.add(t, p);
    let h = tape.add(h, x);
    tape.add(h, c)
}
