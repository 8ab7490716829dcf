//! Empirical checks of the walk theory: stationary distributions, degree
//! fingerprints, label-sequence coverage, hop-vs-walk discrimination and
//! encoder cost scaling.

use crate::error::{write_file, Error, Result};
use crate::graph::{is_bipartite, Graph};
use crate::rng;
use crate::walk::{nbrw_next, sample_walk, NodeTransitionModel, StepModel, WalkKind};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;
use tokenwalk_nn::{Dropout, EncoderLayerParams, ParamStore, Tape, Tensor2};

/// Largest number of label sequences a coverage experiment may enumerate.
pub const MAX_INFO_TYPES: usize = 100_000;
/// Largest number of walks a discrimination test may enumerate per root.
pub const MAX_ENUMERATED_WALKS: usize = 1_000_000;

/// `π(v) = d_v / 2|E|`.
pub fn exact_stationary(g: &Graph) -> Result<Vec<f64>> {
    let m = g.edge_count();
    if m == 0 {
        return Err(Error::input(
            "stationary distribution",
            "graph has no edges",
        ));
    }
    let pi: Vec<f64> = (0..g.node_count())
        .map(|v| g.degree(v) as f64 / (2 * m) as f64)
        .collect();
    debug_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    Ok(pi)
}

/// Stationary distribution of the weighted walk `P_ij = w_ij / Σ_k w_ik`:
/// `π_i = Σ_k w_ik / Σ_i Σ_k w_ik`. Edges are undirected and listed once.
pub fn weighted_stationary(n: usize, edges: &[(usize, usize, f64)]) -> Result<Vec<f64>> {
    let mut strength = vec![0.0; n];
    for &(u, v, w) in edges {
        if u >= n || v >= n {
            return Err(Error::input(
                "weighted edges",
                format!("({u}, {v}) is outside 0..{n}"),
            ));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::input(
                "weighted edges",
                format!("weight {w} on ({u}, {v}) must be positive"),
            ));
        }
        strength[u] += w;
        strength[v] += w;
    }
    let total: f64 = strength.iter().sum();
    if total == 0.0 {
        return Err(Error::input(
            "stationary distribution",
            "graph has no edges",
        ));
    }
    Ok(strength.into_iter().map(|s| s / total).collect())
}

/// Total-variation distance `½ Σ |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryReport {
    pub kind: WalkKind,
    pub steps: usize,
    pub burn_in: usize,
    pub exact: Vec<f64>,
    pub empirical: Vec<f64>,
    pub tv: f64,
    /// The graph is bipartite, so `empirical` is a time average rather than
    /// a limit.
    pub bipartite: bool,
}

/// Visit frequencies of one long walk of `steps` transitions, ignoring the
/// first 10% of steps, compared with `d_v / 2|E|`.
pub fn empirical_stationary(
    g: &Graph,
    kind: WalkKind,
    steps: usize,
    seed: u64,
) -> Result<StationaryReport> {
    if kind.is_jump() {
        return Err(Error::Config(format!(
            "{kind} walks do not have a degree-proportional limit; use urw or nbrw"
        )));
    }
    let exact = exact_stationary(g)?;
    let (_, parts) = g.components();
    if parts > 1 {
        return Err(Error::Graph(format!(
            "graph has {parts} connected components; restrict it to the largest component first"
        )));
    }
    if steps == 0 {
        return Err(Error::Config("steps must be >= 1".into()));
    }
    let bipartite = is_bipartite(g);
    if bipartite {
        log::warn!("graph is bipartite: the walk is periodic and only its time average converges");
    }
    let n = g.node_count();
    let mut rng = rng::stream(seed, rng::ANALYSIS, 0, kind.index() as u64);
    let burn_in = steps / 10;
    let mut counts = vec![0u64; n];
    let mut prev = usize::MAX;
    let mut cur = rng.random_range(0..n);
    for step in 1..=steps {
        let next = if prev == usize::MAX || kind == WalkKind::Urw {
            let nb = g.neighbors(cur);
            nb[rng.random_range(0..nb.len())]
        } else {
            nbrw_next(g, prev, cur, &mut rng)?
        };
        prev = cur;
        cur = next;
        if step > burn_in {
            counts[cur] += 1;
        }
    }
    let visits = (steps - burn_in) as f64;
    let empirical: Vec<f64> = counts.iter().map(|c| *c as f64 / visits).collect();
    let tv = total_variation(&exact, &empirical);
    Ok(StationaryReport {
        kind,
        steps,
        burn_in,
        exact,
        empirical,
        tv,
        bipartite,
    })
}

pub const STATIONARY_CSV_HEADER: &str = "kind,node,degree,exact,empirical";

pub fn write_stationary_csv(g: &Graph, reports: &[StationaryReport], path: &Path) -> Result<()> {
    let mut out = String::from(STATIONARY_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for v in 0..r.exact.len() {
            writeln!(
                out,
                "{},{v},{},{:.9},{:.9}",
                r.kind,
                g.degree(v),
                r.exact[v],
                r.empirical[v]
            )
            .unwrap();
        }
    }
    write_file(path, out)
}

/// Sorted multiset of `d_v / 2|E|` (all zeros for an edgeless graph).
pub fn degree_fingerprint(g: &Graph) -> Vec<f64> {
    let denom = (2 * g.edge_count()).max(1) as f64;
    let mut f: Vec<f64> = g.degrees().into_iter().map(|d| d as f64 / denom).collect();
    f.sort_by(f64::total_cmp);
    f
}

/// True when the degree fingerprints differ. Compared exactly by
/// cross-multiplying the integer degrees.
pub fn fingerprints_distinguish(a: &Graph, b: &Graph) -> bool {
    if a.node_count() != b.node_count() {
        return true;
    }
    let sorted = |g: &Graph| {
        let mut d = g.degrees();
        d.sort_unstable();
        d
    };
    let (da, db) = (sorted(a), sorted(b));
    let (ma, mb) = (a.edge_count().max(1), b.edge_count().max(1));
    da.iter().zip(&db).any(|(x, y)| x * mb != y * ma)
}

/// Sparse rows of a sub-stochastic node matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SubStochastic {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SubStochastic {
    pub fn row_sum(&self, v: usize) -> f64 {
        self.rows[v].iter().map(|(_, p)| p).sum()
    }

    /// `x ↦ x · self` for a row vector `x`.
    pub fn left_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (u, row) in self.rows.iter().enumerate() {
            if x[u] != 0.0 {
                for &(v, p) in row {
                    out[v] += x[u] * p;
                }
            }
        }
        out
    }
}

/// `P^(l)`: the transitions of `p` whose target carries label `l`.
pub fn label_limited_transition(
    p: &NodeTransitionModel,
    labels: &[usize],
    l: usize,
) -> SubStochastic {
    assert_eq!(labels.len(), p.node_count(), "one label per node");
    let rows = (0..p.node_count())
        .map(|u| {
            let (t, pr) = p.row(u);
            t.iter()
                .zip(pr)
                .filter(|(v, _)| labels[**v] == l)
                .map(|(v, x)| (*v, *x))
                .collect()
        })
        .collect();
    SubStochastic { rows }
}

/// Probability that a walk from `start` visits labels `ty[0], ty[1], ...` on
/// its successive steps: the `start` row sum of `Π P^(ty[i])`.
pub fn info_type_probability(
    p: &NodeTransitionModel,
    labels: &[usize],
    start: usize,
    ty: &[usize],
) -> Result<f64> {
    if ty.is_empty() {
        return Err(Error::Config("information types have length >= 1".into()));
    }
    if start >= p.node_count() {
        return Err(Error::input(
            "start node",
            format!("{start} is outside 0..{}", p.node_count()),
        ));
    }
    let mut x = vec![0.0; p.node_count()];
    x[start] = 1.0;
    for &l in ty {
        x = label_limited_transition(p, labels, l).left_apply(&x);
    }
    Ok(x.iter().sum())
}

fn label_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Decodes a base-`alphabet` index into a label sequence of length `k`
/// (first label most significant).
pub fn decode_info_type(mut index: usize, alphabet: usize, k: usize) -> Vec<usize> {
    let mut ty = vec![0; k];
    for slot in ty.iter_mut().rev() {
        *slot = index % alphabet;
        index /= alphabet;
    }
    ty
}

/// Exact probabilities of every length-`k` information type from `start`,
/// indexed as in [`decode_info_type`].
pub fn info_type_distribution(
    p: &NodeTransitionModel,
    labels: &[usize],
    start: usize,
    k: usize,
) -> Result<Vec<f64>> {
    let alphabet = label_count(labels);
    check_universe(alphabet, k)?;
    let limited: Vec<SubStochastic> = (0..alphabet)
        .map(|l| label_limited_transition(p, labels, l))
        .collect();
    let mut frontier = vec![{
        let mut x = vec![0.0; p.node_count()];
        x[start] = 1.0;
        x
    }];
    for _ in 0..k {
        frontier = frontier
            .iter()
            .flat_map(|x| limited.iter().map(move |m| m.left_apply(x)))
            .collect();
    }
    Ok(frontier.iter().map(|x| x.iter().sum()).collect())
}

fn check_universe(alphabet: usize, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::Config("information types have length >= 1".into()));
    }
    let size = (alphabet as u128)
        .checked_pow(k as u32)
        .unwrap_or(u128::MAX);
    if size > MAX_INFO_TYPES as u128 {
        return Err(Error::Config(format!(
            "{alphabet}^{k} information types exceed the enumeration limit of {MAX_INFO_TYPES}; use a smaller k"
        )));
    }
    Ok(size as usize)
}

/// Right-hand side of the coverage bound: `exp(-2 ε² n) / n`.
pub fn hoeffding_bound(eps: f64, n: usize) -> f64 {
    (-2.0 * eps * eps * n as f64).exp() / n as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverageReport {
    pub start: usize,
    pub k: usize,
    pub alphabet: usize,
    pub kind: WalkKind,
    pub n_walks: usize,
    pub eps: f64,
    pub seed: u64,
    /// Exact probability of each information type.
    pub exact: Vec<f64>,
    /// Observed frequency `N / n`.
    pub empirical: Vec<f64>,
    /// `|N / n - p|` per type.
    pub deviation: Vec<f64>,
    pub max_deviation: f64,
    pub bound: f64,
    /// Fraction of types with deviation above `eps`.
    pub violation_fraction: f64,
}

/// Samples `n_walks` walks of `k` steps from `start` under `p` and compares
/// label-sequence frequencies with their exact probabilities.
pub fn coverage_experiment(
    p: &NodeTransitionModel,
    labels: &[usize],
    start: usize,
    k: usize,
    n_walks: usize,
    eps: f64,
    seed: u64,
) -> Result<CoverageReport> {
    if n_walks == 0 {
        return Err(Error::Config("coverage needs n_walks >= 1".into()));
    }
    if labels.len() != p.node_count() {
        return Err(Error::input(
            "labels",
            format!("{} labels for {} nodes", labels.len(), p.node_count()),
        ));
    }
    let alphabet = label_count(labels);
    let size = check_universe(alphabet, k)?;
    let exact = info_type_distribution(p, labels, start, k)?;
    let mut counts = vec![0usize; size];
    let mut rng = rng::stream(seed, rng::ANALYSIS, 1, start as u64);
    for _ in 0..n_walks {
        let w = sample_walk(StepModel::Node(p), start, k, false, &mut rng)?;
        if w.truncated {
            continue;
        }
        let index = w.nodes[1..]
            .iter()
            .fold(0, |acc, v| acc * alphabet + labels[*v]);
        counts[index] += 1;
    }
    let empirical: Vec<f64> = counts.iter().map(|c| *c as f64 / n_walks as f64).collect();
    let deviation: Vec<f64> = exact
        .iter()
        .zip(&empirical)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let max_deviation = deviation.iter().copied().fold(0.0, f64::max);
    let violations = deviation.iter().filter(|d| **d > eps).count();
    Ok(CoverageReport {
        start,
        k,
        alphabet,
        kind: p.kind(),
        n_walks,
        eps,
        seed,
        exact,
        empirical,
        deviation,
        max_deviation,
        bound: hoeffding_bound(eps, n_walks),
        violation_fraction: violations as f64 / size as f64,
    })
}

pub const COVERAGE_CSV_HEADER: &str = "seed,start,info_type,exact,empirical,deviation,eps,bound";

pub fn write_coverage_csv(reports: &[CoverageReport], path: &Path) -> Result<()> {
    let mut out = String::from(COVERAGE_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for (i, p) in r.exact.iter().enumerate() {
            let ty: Vec<String> = decode_info_type(i, r.alphabet, r.k)
                .iter()
                .map(usize::to_string)
                .collect();
            writeln!(
                out,
                "{},{},{},{:.9},{:.9},{:.9},{},{:e}",
                r.seed,
                r.start,
                ty.join("-"),
                p,
                r.empirical[i],
                r.deviation[i],
                r.eps,
                r.bound
            )
            .unwrap();
        }
    }
    write_file(path, out)
}

/// A graph with a distinguished root and one feature vector per node.
#[derive(Clone, Debug)]
pub struct RootedGraph {
    pub graph: Graph,
    pub root: usize,
    pub features: Vec<Vec<f64>>,
}

impl RootedGraph {
    /// Every node gets the feature `[1.0]`.
    pub fn constant(graph: Graph, root: usize) -> Self {
        let features = vec![vec![1.0]; graph.node_count()];
        Self {
            graph,
            root,
            features,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let n = self.graph.node_count();
        if self.root >= n {
            return Err(Error::input(
                name,
                format!("root {} is outside 0..{n}", self.root),
            ));
        }
        if self.features.len() != n {
            return Err(Error::input(
                name,
                format!("{} feature rows for {n} nodes", self.features.len()),
            ));
        }
        Ok(())
    }
}

/// Exact distribution over walk signatures. A signature is the sequence of
/// visited features together with the anonymous pattern of the walk (each
/// node replaced by the index of its first visit), so returns are visible
/// even when features are constant.
pub type WalkSignature = BTreeMap<Vec<u64>, f64>;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct WalkVariantReport {
    pub non_backtracking: bool,
    pub length: usize,
    pub return_probability_a: f64,
    pub return_probability_b: f64,
    pub distinguishes: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DiscriminationReport {
    pub depth: usize,
    /// `(A^k X)[root]` for `k = 0..=depth`.
    pub hop_a: Vec<Vec<f64>>,
    pub hop_b: Vec<Vec<f64>>,
    pub hop_distinguishes: bool,
    pub walks: Vec<WalkVariantReport>,
    pub walk_distinguishes: bool,
}

fn hop_aggregates(r: &RootedGraph, depth: usize) -> Vec<Vec<f64>> {
    let g = &r.graph;
    let mut cur = r.features.clone();
    let mut out = vec![cur[r.root].clone()];
    for _ in 0..depth {
        cur = (0..g.node_count())
            .map(|u| {
                let mut s = vec![0.0; cur[u].len()];
                for &w in g.neighbors(u) {
                    for (a, b) in s.iter_mut().zip(&cur[w]) {
                        *a += b;
                    }
                }
                s
            })
            .collect();
        out.push(cur[r.root].clone());
    }
    out
}

fn enumerate_walks(r: &RootedGraph, length: usize, non_backtracking: bool) -> (WalkSignature, f64) {
    let g = &r.graph;
    let mut sig = WalkSignature::new();
    let mut returned = 0.0;
    let mut stack = vec![(vec![r.root], 1.0)];
    while let Some((path, prob)) = stack.pop() {
        if path.len() == length + 1 {
            let mut key = Vec::new();
            let mut first: Vec<usize> = Vec::new();
            for &v in &path {
                let id = first.iter().position(|u| *u == v).unwrap_or_else(|| {
                    first.push(v);
                    first.len() - 1
                });
                key.push(id as u64);
                key.extend(r.features[v].iter().map(|x| (x + 0.0).to_bits()));
            }
            if path[length] == r.root {
                returned += prob;
            }
            *sig.entry(key).or_insert(0.0) += prob;
            continue;
        }
        let cur = *path.last().unwrap();
        let prev = (path.len() >= 2).then(|| path[path.len() - 2]);
        let nb = g.neighbors(cur);
        let options: Vec<usize> = match prev {
            Some(p) if non_backtracking && nb.len() > 1 => {
                nb.iter().copied().filter(|w| *w != p).collect()
            }
            _ => nb.to_vec(),
        };
        for w in &options {
            let mut next = path.clone();
            next.push(*w);
            stack.push((next, prob / options.len() as f64));
        }
    }
    (sig, returned)
}

fn signatures_differ(a: &WalkSignature, b: &WalkSignature) -> bool {
    const TOL: f64 = 1e-12;
    a.keys()
        .chain(b.keys())
        .any(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs() > TOL)
}

/// Compares the hop aggregates and the exact walk distributions (uniform
/// and non-backtracking, lengths `1..=depth`) seen from two roots.
pub fn hop_walk_discrimination(
    a: &RootedGraph,
    b: &RootedGraph,
    depth: usize,
) -> Result<DiscriminationReport> {
    a.validate("first rooted graph")?;
    b.validate("second rooted graph")?;
    for r in [a, b] {
        let branching = (0..r.graph.node_count())
            .map(|v| r.graph.degree(v))
            .max()
            .unwrap_or(0)
            .max(1);
        let total = (branching as u128)
            .checked_pow(depth as u32)
            .unwrap_or(u128::MAX);
        if total > MAX_ENUMERATED_WALKS as u128 {
            return Err(Error::Config(format!(
                "{branching}^{depth} walks exceed the enumeration limit of {MAX_ENUMERATED_WALKS}; use a smaller depth"
            )));
        }
    }
    let hop_a = hop_aggregates(a, depth);
    let hop_b = hop_aggregates(b, depth);
    let hop_distinguishes = hop_a
        .iter()
        .zip(&hop_b)
        .any(|(x, y)| x.len() != y.len() || x.iter().zip(y).any(|(p, q)| (p - q).abs() > 1e-9));
    let mut walks = Vec::new();
    for non_backtracking in [false, true] {
        for length in 1..=depth {
            let (sa, ra) = enumerate_walks(a, length, non_backtracking);
            let (sb, rb) = enumerate_walks(b, length, non_backtracking);
            walks.push(WalkVariantReport {
                non_backtracking,
                length,
                return_probability_a: ra,
                return_probability_b: rb,
                distinguishes: signatures_differ(&sa, &sb),
            });
        }
    }
    let walk_distinguishes = walks.iter().any(|w| w.distinguishes);
    Ok(DiscriminationReport {
        depth,
        hop_a,
        hop_b,
        hop_distinguishes,
        walks,
        walk_distinguishes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexityConfig {
    pub token_counts: Vec<usize>,
    /// Encoder width.
    pub d_f: usize,
    pub heads: usize,
    /// Tokens per timed forward/backward pass; the number of sequences is
    /// `batch_tokens / N_t` so the activation footprint stays comparable.
    pub batch_tokens: usize,
    /// Timed passes per point; the fastest is kept.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            token_counts: vec![16, 32, 64, 128],
            // Attention outweighs the per-token projections once N_t >> 3 d_F.
            d_f: 4,
            heads: 1,
            batch_tokens: 32768,
            repeats: 15,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub n_t: usize,
    pub d_f: usize,
    pub seconds_per_node: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
    /// Least-squares slope of `ln(time)` against `ln(N_t)`.
    pub exponent: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// One encoder layer and a fixed input batch at sequence length `n_t`.
struct EncoderBench {
    store: ParamStore<f32>,
    layer: EncoderLayerParams,
    x: Tensor2<f32>,
    n_t: usize,
    batch_nodes: usize,
}

impl EncoderBench {
    fn new(n_t: usize, d_f: usize, heads: usize, batch_nodes: usize, seed: u64) -> Result<Self> {
        let mut init = rng::stream(seed, rng::ANALYSIS, 2, n_t as u64);
        let mut store = ParamStore::<f32>::new();
        let layer = EncoderLayerParams::new(&mut store, "probe", d_f, heads, &mut init)?;
        let rows = batch_nodes * n_t;
        let x = Tensor2::from_vec(
            rows,
            d_f,
            (0..rows * d_f)
                .map(|_| init.random_range(-1.0f32..1.0))
                .collect(),
        );
        Ok(Self {
            store,
            layer,
            x,
            n_t,
            batch_nodes,
        })
    }

    /// Seconds per node of one forward and backward pass.
    fn time_once(&self) -> f64 {
        let started = Instant::now();
        let mut tape = Tape::new();
        let h = tape.constant(self.x.clone());
        let out = self.layer.forward(
            &mut tape,
            &self.store,
            h,
            self.n_t,
            None,
            &mut Dropout::eval(),
        );
        let loss = tape.sum(out);
        std::hint::black_box(tape.backward(loss));
        started.elapsed().as_secs_f64() / self.batch_nodes as f64
    }
}

/// Wall-clock time per node of one encoder layer's forward and backward
/// pass at sequence length `n_t` and width `d_f` (fastest of `repeats`).
pub fn time_encoder(
    n_t: usize,
    d_f: usize,
    heads: usize,
    batch_nodes: usize,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    let bench = EncoderBench::new(n_t, d_f, heads, batch_nodes, seed)?;
    Ok((0..repeats.max(1))
        .map(|_| bench.time_once())
        .fold(f64::INFINITY, f64::min))
}

/// Times every token count once per round, after one untimed round, and
/// keeps each count's fastest pass. Interleaving keeps slow drift in the
/// machine (clock ramp-up, allocator growth) from landing on one point.
pub fn complexity_probe(cfg: &ComplexityConfig) -> Result<ComplexityReport> {
    let mut counts = cfg.token_counts.clone();
    counts.sort_unstable();
    counts.dedup();
    if counts.len() < 3 || counts[0] == 0 || counts[counts.len() - 1] < 4 * counts[0] {
        return Err(Error::Config(
            "complexity probe needs at least 3 distinct token counts spanning a factor of 4".into(),
        ));
    }
    if cfg.d_f == 0 || cfg.heads == 0 || cfg.d_f % cfg.heads != 0 {
        return Err(Error::Config(
            "complexity probe needs d_f divisible by heads".into(),
        ));
    }
    let benches = cfg
        .token_counts
        .iter()
        .map(|&n_t| {
            let batch = (cfg.batch_tokens / n_t).max(1);
            EncoderBench::new(n_t, cfg.d_f, cfg.heads, batch, cfg.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    for b in &benches {
        b.time_once();
    }
    let mut best = vec![f64::INFINITY; benches.len()];
    for _ in 0..cfg.repeats.max(1) {
        for (b, t) in benches.iter().zip(&mut best) {
            *t = t.min(b.time_once());
        }
    }
    let rows: Vec<ComplexityRow> = benches
        .iter()
        .zip(best)
        .map(|(b, seconds_per_node)| ComplexityRow {
            n_t: b.n_t,
            d_f: cfg.d_f,
            seconds_per_node,
        })
        .collect();
    let exponent = log_log_slope(
        &rows
            .iter()
            .map(|r| (r.n_t as f64, r.seconds_per_node))
            .collect::<Vec<_>>(),
    );
    Ok(ComplexityReport { rows, exponent })
}

pub const COMPLEXITY_CSV_HEADER: &str = "N_t,d_F,seconds_per_node";

pub fn write_complexity_csv(rows: &[ComplexityRow], path: &Path) -> Result<()> {
    let mut out = String::from(COMPLEXITY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{:e}", r.n_t, r.d_f, r.seconds_per_node).unwrap();
    }
    write_file(path, out)
}

/// Runs [`coverage_experiment`] for each seed in parallel.
pub fn coverage_over_seeds(
    p: &NodeTransitionModel,
    labels: &[usize],
    start: usize,
    k: usize,
    n_walks: usize,
    eps: f64,
    seeds: &[u64],
) -> Result<Vec<CoverageReport>> {
    seeds
        .par_iter()
        .map(|s| coverage_experiment(p, labels, start, k, n_walks, eps, *s))
        .collect()
}

/// Settings for the `analyze` stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub stationary_steps: usize,
    pub coverage_k: usize,
    pub coverage_walks: usize,
    pub coverage_eps: f64,
    pub coverage_seeds: usize,
    pub coverage_start: usize,
    /// Node model for coverage walks: `urw` or `njw`.
    pub coverage_kind: WalkKind,
    pub discrimination_depth: usize,
    pub complexity: ComplexityConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            stationary_steps: 1_000_000,
            coverage_k: 3,
            coverage_walks: 2000,
            coverage_eps: 0.1,
            coverage_seeds: 50,
            coverage_start: 0,
            coverage_kind: WalkKind::Urw,
            discrimination_depth: 3,
            complexity: ComplexityConfig::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.stationary_steps == 0 {
            problems.push("stationary_steps must be >= 1".to_string());
        }
        if self.coverage_k == 0 || self.coverage_walks == 0 || self.coverage_seeds == 0 {
            problems.push("coverage_k, coverage_walks and coverage_seeds must be >= 1".to_string());
        }
        if !(self.coverage_eps > 0.0 && self.coverage_eps < 1.0) {
            problems.push(format!(
                "coverage_eps = {} must lie in (0, 1)",
                self.coverage_eps
            ));
        }
        if self.coverage_kind.is_non_backtracking() {
            problems.push("coverage_kind must be a node model (urw or njw)".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
