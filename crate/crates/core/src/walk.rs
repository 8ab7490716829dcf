//! Transition models and samplers for the four walk kinds, and mixed-walk
//! corpus generation.
//!
//! Walk length counts edges: a walk of length `L` visits `L + 1` nodes.

use crate::error::{read_to_string, write_file, Error, Result};
use crate::graph::Graph;
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkKind {
    /// Uniform random walk.
    Urw,
    /// Non-backtracking random walk.
    Nbrw,
    /// Neighborhood jump walk.
    Njw,
    /// Non-backtracking neighborhood jump walk.
    Nbnjw,
}

impl WalkKind {
    pub const ALL: [WalkKind; 4] = [
        WalkKind::Urw,
        WalkKind::Nbrw,
        WalkKind::Njw,
        WalkKind::Nbnjw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WalkKind::Urw => "urw",
            WalkKind::Nbrw => "nbrw",
            WalkKind::Njw => "njw",
            WalkKind::Nbnjw => "nbnjw",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_jump(self) -> bool {
        matches!(self, WalkKind::Njw | WalkKind::Nbnjw)
    }

    pub fn is_non_backtracking(self) -> bool {
        matches!(self, WalkKind::Nbrw | WalkKind::Nbnjw)
    }
}

impl fmt::Display for WalkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for WalkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WalkKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::input("walk kind", format!("unknown kind `{s}`")))
    }
}

/// Row-stochastic sparse transition matrix over nodes.
#[derive(Clone, Debug)]
pub struct NodeTransitionModel {
    kind: WalkKind,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<f64>,
    /// Inclusive prefix sums of `probs` within each row.
    cumulative: Vec<f64>,
}

impl NodeTransitionModel {
    fn from_rows(kind: WalkKind, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut targets = Vec::with_capacity(total);
        let mut probs = Vec::with_capacity(total);
        let mut cumulative = Vec::with_capacity(total);
        for row in rows {
            let mut acc = 0.0;
            for (t, p) in row {
                acc += p;
                targets.push(t);
                probs.push(p);
                cumulative.push(acc);
            }
            offsets.push(targets.len());
        }
        Self {
            kind,
            offsets,
            targets,
            probs,
            cumulative,
        }
    }

    /// [`WalkKind::Urw`] for uniform models, [`WalkKind::Njw`] for jump models.
    pub fn kind(&self) -> WalkKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Targets (ascending) and probabilities of row `v`.
    pub fn row(&self, v: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[v]..self.offsets[v + 1];
        (&self.targets[r.clone()], &self.probs[r])
    }

    pub fn prob(&self, u: usize, v: usize) -> f64 {
        let (t, p) = self.row(u);
        t.binary_search(&v).map_or(0.0, |i| p[i])
    }

    /// Dense `n × n` copy (for small-graph analysis and tests).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.node_count();
        let mut m = vec![vec![0.0; n]; n];
        for (u, row) in m.iter_mut().enumerate() {
            let (t, p) = self.row(u);
            for (v, pv) in t.iter().zip(p) {
                row[*v] = *pv;
            }
        }
        m
    }

    /// Draws a successor of `cur`; with `exclude = Some(prev)` the previous
    /// node's probability is removed and the rest renormalized exactly. If
    /// `prev` carries all of the row's mass the walk is forced back to it.
    fn draw<R: Rng>(&self, cur: usize, exclude: Option<usize>, rng: &mut R) -> Option<usize> {
        let r = self.offsets[cur]..self.offsets[cur + 1];
        if r.is_empty() {
            return None;
        }
        let targets = &self.targets[r.clone()];
        let cum = &self.cumulative[r.clone()];
        let probs = &self.probs[r];
        let total = cum[cum.len() - 1];
        let masked = exclude.and_then(|p| targets.binary_search(&p).ok());
        let pick = |u: f64| cum.partition_point(|c| *c <= u).min(cum.len() - 1);
        match masked {
            None => Some(targets[pick(rng.random::<f64>() * total)]),
            Some(idx) => {
                let p = probs[idx];
                let rest = total - p;
                if rest <= total * 1e-15 {
                    return Some(targets[idx]);
                }
                let mut u = rng.random::<f64>() * rest;
                let before = cum[idx] - p;
                if u >= before {
                    u += p;
                }
                let mut j = pick(u);
                if j == idx {
                    // only reachable through rounding at the boundary
                    j = (idx + 1..targets.len())
                        .chain((0..idx).rev())
                        .find(|k| probs[*k] > 0.0)
                        .expect("rest > 0 implies another positive entry");
                }
                Some(targets[j])
            }
        }
    }
}

/// Uniform random-walk transitions: `1/d_v` to each neighbor.
pub fn uniform_transition(g: &Graph) -> NodeTransitionModel {
    let rows = (0..g.node_count())
        .map(|v| {
            let d = g.degree(v) as f64;
            g.neighbors(v).iter().map(|w| (*w, 1.0 / d)).collect()
        })
        .collect();
    NodeTransitionModel::from_rows(WalkKind::Urw, rows)
}

struct PropagationScratch {
    cur: Vec<f64>,
    next: Vec<f64>,
    acc: Vec<f64>,
    in_acc: Vec<bool>,
}

/// Neighborhood-jump transitions: for each source, sum the step-`s`
/// distributions of the uniform walk for `s = 1..=k`, drop the mass on the
/// source itself and renormalize. `k = 1` gives the uniform model.
pub fn njw_transition(g: &Graph, k: usize) -> Result<NodeTransitionModel> {
    if k == 0 {
        return Err(Error::Config("jump radius must be >= 1".into()));
    }
    let n = g.node_count();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || PropagationScratch {
                cur: vec![0.0; n],
                next: vec![0.0; n],
                acc: vec![0.0; n],
                in_acc: vec![false; n],
            },
            |s, src| {
                let mut frontier = vec![src];
                let mut touched = Vec::new();
                s.cur[src] = 1.0;
                for _ in 0..k {
                    let mut next_frontier = Vec::new();
                    for &u in &frontier {
                        let mass = s.cur[u];
                        let d = g.degree(u);
                        if d == 0 {
                            continue;
                        }
                        let share = mass / d as f64;
                        for &w in g.neighbors(u) {
                            if s.next[w] == 0.0 {
                                next_frontier.push(w);
                            }
                            s.next[w] += share;
                        }
                    }
                    for &u in &frontier {
                        s.cur[u] = 0.0;
                    }
                    for &w in &next_frontier {
                        if !s.in_acc[w] {
                            s.in_acc[w] = true;
                            touched.push(w);
                        }
                        s.acc[w] += s.next[w];
                        s.cur[w] = s.next[w];
                        s.next[w] = 0.0;
                    }
                    frontier = next_frontier;
                }
                for &u in &frontier {
                    s.cur[u] = 0.0;
                }
                touched.sort_unstable();
                let total: f64 = touched
                    .iter()
                    .filter(|w| **w != src)
                    .map(|w| s.acc[*w])
                    .sum();
                let mut row = Vec::with_capacity(touched.len());
                for &w in &touched {
                    if w != src && total > 0.0 {
                        row.push((w, s.acc[w] / total));
                    }
                    s.acc[w] = 0.0;
                    s.in_acc[w] = false;
                }
                row
            },
        )
        .collect();
    Ok(NodeTransitionModel::from_rows(WalkKind::Njw, rows))
}

/// Next node of a non-backtracking walk on edge `(prev, cur)`: uniform over
/// `neighbors(cur) \ {prev}`, or `prev` itself when `cur` is a leaf.
pub fn nbrw_next<R: Rng>(g: &Graph, prev: usize, cur: usize, rng: &mut R) -> Result<usize> {
    let nbrs = g.neighbors(cur);
    let Ok(p) = nbrs.binary_search(&prev) else {
        return Err(Error::Graph(format!("({prev}, {cur}) is not an edge")));
    };
    if nbrs.len() == 1 {
        return Ok(prev);
    }
    let mut j = rng.random_range(0..nbrs.len() - 1);
    if j >= p {
        j += 1;
    }
    Ok(nbrs[j])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walk {
    pub nodes: Vec<usize>,
    pub kind: WalkKind,
    /// The walk stopped early because it reached a node without successors.
    pub truncated: bool,
}

impl Walk {
    pub fn start(&self) -> usize {
        self.nodes[0]
    }

    /// Number of edges traversed.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }
}

/// What drives a walk's transitions.
#[derive(Clone, Copy, Debug)]
pub enum StepModel<'a> {
    /// A node-level transition matrix (uniform or jump).
    Node(&'a NodeTransitionModel),
    /// The non-backtracking rule on directed edges of a graph.
    Edge(&'a Graph),
}

/// Samples a walk of `length` edges from `start`.
///
/// With a node model and `non_backtracking`, each step after the first
/// removes the previous node from the current row and renormalizes.
pub fn sample_walk<R: Rng>(
    model: StepModel<'_>,
    start: usize,
    length: usize,
    non_backtracking: bool,
    rng: &mut R,
) -> Result<Walk> {
    let n = match model {
        StepModel::Node(m) => m.node_count(),
        StepModel::Edge(g) => g.node_count(),
    };
    if start >= n {
        return Err(Error::input(
            "walk start",
            format!("{start} is outside 0..{n}"),
        ));
    }
    let kind = match model {
        StepModel::Edge(_) => WalkKind::Nbrw,
        StepModel::Node(m) => match (m.kind(), non_backtracking) {
            (WalkKind::Njw, true) => WalkKind::Nbnjw,
            (WalkKind::Njw, false) => WalkKind::Njw,
            (_, true) => WalkKind::Nbrw,
            (_, false) => WalkKind::Urw,
        },
    };
    let mut nodes = Vec::with_capacity(length + 1);
    nodes.push(start);
    let mut truncated = false;
    for step in 0..length {
        let cur = nodes[step];
        let prev = if step > 0 {
            Some(nodes[step - 1])
        } else {
            None
        };
        let next = match model {
            StepModel::Node(m) => m.draw(cur, prev.filter(|_| non_backtracking), rng),
            StepModel::Edge(g) => match prev {
                Some(p) => Some(nbrw_next(g, p, cur, rng)?),
                None => {
                    let nb = g.neighbors(cur);
                    (!nb.is_empty()).then(|| nb[rng.random_range(0..nb.len())])
                }
            },
        };
        match next {
            Some(v) => nodes.push(v),
            None => {
                truncated = true;
                break;
            }
        }
    }
    Ok(Walk {
        nodes,
        kind,
        truncated,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixedWalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Fractions of URW, NBRW, NJW and NBNJW walks.
    pub ratios: [f64; 4],
    pub jump_radius: usize,
    pub seed: u64,
}

impl Default for MixedWalkConfig {
    fn default() -> Self {
        Self {
            walks_per_node: 100,
            walk_length: 4,
            ratios: [0.25; 4],
            jump_radius: 3,
            seed: 0,
        }
    }
}

impl MixedWalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config(format!(
                "walk ratios {:?} must be >= 0",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "walk ratios sum to {sum}, expected 1"
            )));
        }
        if self.jump_radius == 0 {
            return Err(Error::Config("jump_radius must be >= 1".into()));
        }
        Ok(())
    }

    /// Walk counts per kind for one node.
    pub fn counts(&self) -> [usize; 4] {
        apportion(self.walks_per_node, &self.ratios)
    }
}

/// Largest-remainder apportionment of `m` items by `ratios`; ties in the
/// remainder go to the earlier index.
pub fn apportion(m: usize, ratios: &[f64; 4]) -> [usize; 4] {
    let sum: f64 = ratios.iter().sum();
    let quotas: Vec<f64> = ratios.iter().map(|r| r / sum * m as f64).collect();
    let mut counts = [0usize; 4];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let left = m - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|a, b| {
        let (ra, rb) = (
            quotas[*a] - quotas[*a].floor(),
            quotas[*b] - quotas[*b].floor(),
        );
        rb.total_cmp(&ra).then(a.cmp(b))
    });
    for i in order.into_iter().take(left) {
        counts[i] += 1;
    }
    counts
}

/// Walks for every node, `walks_per_node` each, grouped by kind in the
/// order URW, NBRW, NJW, NBNJW.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkCorpus {
    pub seed: u64,
    pub per_node: Vec<Vec<Walk>>,
}

impl WalkCorpus {
    pub fn node_count(&self) -> usize {
        self.per_node.len()
    }

    pub fn walks(&self, v: usize) -> &[Walk] {
        &self.per_node[v]
    }

    /// Writes the corpus in `walks.txt` format: for each kind present, a
    /// header line `#kind=<k> seed=<s>` followed by one walk per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for kind in WalkKind::ALL {
            let mut header = false;
            for walks in &self.per_node {
                for w in walks.iter().filter(|w| w.kind == kind) {
                    if !header {
                        out.push_str(&format!("#kind={kind} seed={}\n", self.seed));
                        header = true;
                    }
                    let ids: Vec<String> = w.nodes.iter().map(usize::to_string).collect();
                    out.push_str(&ids.join(" "));
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text())
    }

    /// Parses `walks.txt` text, regrouping walks by start node (kinds keep
    /// their file order within a node).
    pub fn from_text(text: &str, node_count: usize, ctx: &str) -> Result<Self> {
        let mut per_node = vec![Vec::new(); node_count];
        let mut kind = None;
        let mut seed = None;
        for (lineno, line) in text.lines().enumerate() {
            let at = || format!("{ctx}:{}", lineno + 1);
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    if let Some(k) = field.strip_prefix("kind=") {
                        kind = Some(
                            k.parse::<WalkKind>()
                                .map_err(|e| Error::input(at(), e.to_string()))?,
                        );
                    } else if let Some(s) = field.strip_prefix("seed=") {
                        seed = Some(
                            s.parse()
                                .map_err(|_| Error::input(at(), format!("bad seed `{s}`")))?,
                        );
                    }
                }
                continue;
            }
            let kind = kind.ok_or_else(|| Error::input(at(), "walk before any #kind= header"))?;
            let nodes = line
                .split_whitespace()
                .map(|t| match t.parse::<usize>() {
                    Ok(v) if v < node_count => Ok(v),
                    _ => Err(Error::input(at(), format!("bad node id `{t}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            per_node[nodes[0]].push(Walk {
                nodes,
                kind,
                truncated: false,
            });
        }
        Ok(Self {
            seed: seed.unwrap_or(0),
            per_node,
        })
    }

    pub fn load(path: &Path, node_count: usize) -> Result<Self> {
        Self::from_text(
            &read_to_string(path)?,
            node_count,
            &path.display().to_string(),
        )
    }
}

/// Generates the mixed-walk corpus. Walk `i` of node `v` uses its own random
/// stream, so the result depends only on the graph and the config.
pub fn generate_mixed_walks(g: &Graph, cfg: &MixedWalkConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    let counts = cfg.counts();
    let uniform = uniform_transition(g);
    let jump = if counts[2] + counts[3] > 0 {
        Some(njw_transition(g, cfg.jump_radius)?)
    } else {
        None
    };
    let kinds: Vec<WalkKind> = WalkKind::ALL
        .iter()
        .zip(counts)
        .flat_map(|(k, c)| std::iter::repeat_n(*k, c))
        .collect();
    let per_node = (0..g.node_count())
        .into_par_iter()
        .map(|v| {
            kinds
                .iter()
                .enumerate()
                .map(|(i, kind)| {
                    let mut rng = rng::stream(cfg.seed, rng::WALKS, v as u64, i as u64);
                    let (model, nb) = match kind {
                        WalkKind::Urw => (StepModel::Node(&uniform), false),
                        WalkKind::Nbrw => (StepModel::Edge(g), true),
                        WalkKind::Njw => (StepModel::Node(jump.as_ref().unwrap()), false),
                        WalkKind::Nbnjw => (StepModel::Node(jump.as_ref().unwrap()), true),
                    };
                    sample_walk(model, v, cfg.walk_length, nb, &mut rng)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WalkCorpus {
        seed: cfg.seed,
        per_node,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p3() -> Graph {
        build_graph(&[(0, 1), (1, 2)], 3).unwrap()
    }

    fn triangle() -> Graph {
        build_graph(&[(0, 1), (1, 2), (2, 0)], 3).unwrap()
    }

    fn star4() -> Graph {
        build_graph(&[(0, 1), (0, 2), (0, 3), (0, 4)], 5).unwrap()
    }

    #[test]
    fn uniform_rows() {
        let m = uniform_transition(&p3());
        assert_eq!(m.row(1), (&[0, 2][..], &[0.5, 0.5][..]));
        let m = uniform_transition(&triangle());
        assert_eq!(m.row(2).1, &[0.5, 0.5]);
        let m = uniform_transition(&star4());
        assert_eq!(m.row(0).1, &[0.25; 4]);
    }

    #[test]
    fn jump_rows_worked_by_hand() {
        let m = njw_transition(&p3(), 2).unwrap();
        let (t, p) = m.row(0);
        assert_eq!(t, &[1, 2]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let m = njw_transition(&triangle(), 2).unwrap();
        assert_eq!(m.row(0), (&[1, 2][..], &[0.5, 0.5][..]));
    }

    #[test]
    fn nbrw_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(nbrw_next(&triangle(), 0, 1, &mut rng).unwrap(), 2);
        assert_eq!(nbrw_next(&p3(), 1, 0, &mut rng).unwrap(), 1);
        assert!(nbrw_next(&p3(), 0, 2, &mut rng).is_err());
        let g = star4();
        let mut counts = [0usize; 5];
        for _ in 0..30_000 {
            counts[nbrw_next(&g, 1, 0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[1], 0);
        for c in &counts[2..] {
            assert!((*c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.015);
        }
    }

    #[test]
    fn walk_edge_cases() {
        let g = p3();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = sample_walk(StepModel::Edge(&g), 2, 0, true, &mut rng).unwrap();
        assert_eq!(w.nodes, vec![2]);
        let w = sample_walk(StepModel::Edge(&g), 0, 2, true, &mut rng).unwrap();
        assert_eq!(w.nodes, vec![0, 1, 2]);
        let iso = build_graph(&[(0, 1)], 3).unwrap();
        let u = uniform_transition(&iso);
        let w = sample_walk(StepModel::Node(&u), 2, 5, false, &mut rng).unwrap();
        assert_eq!(w.nodes, vec![2]);
        assert!(w.truncated);
        assert!(sample_walk(StepModel::Node(&u), 3, 1, false, &mut rng).is_err());
    }

    #[test]
    fn apportionment() {
        assert_eq!(apportion(100, &[0.25; 4]), [25; 4]);
        assert_eq!(apportion(10, &[0.4, 0.3, 0.2, 0.1]), [4, 3, 2, 1]);
        assert_eq!(apportion(2, &[0.25; 4]), [1, 1, 0, 0]);
        assert_eq!(apportion(7, &[0.0, 0.5, 0.0, 0.5]), [0, 4, 0, 3]);
    }

    #[test]
    fn corpus_text_round_trip() {
        let g = star4();
        let cfg = MixedWalkConfig {
            walks_per_node: 6,
            walk_length: 3,
            seed: 9,
            ..Default::default()
        };
        let c = generate_mixed_walks(&g, &cfg).unwrap();
        let back = WalkCorpus::from_text(&c.to_text(), 5, "walks").unwrap();
        assert_eq!(back.seed, 9);
        for v in 0..5 {
            let a: Vec<_> = c.walks(v).iter().map(|w| (&w.nodes, w.kind)).collect();
            let b: Vec<_> = back.walks(v).iter().map(|w| (&w.nodes, w.kind)).collect();
            assert_eq!(a, b);
        }
    }
}
