//! Node-classification datasets on disk and train/val/test splits.
//!
//! Directory layout:
//!
//! * `edges.tsv`: one undirected edge per line, `u<TAB>v`, 0-based ids,
//!   `#` comment lines allowed;
//! * `features.csv`: `n` lines of `d_F` comma-separated reals;
//! * `labels.csv`: `n` lines with one integer class each.

use crate::error::{read_to_string, write_file, Error, Result};
use crate::graph::{build_graph, Graph};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;
use tokenwalk_nn::Tensor2;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Graph,
    /// `n × d_F` node features.
    pub features: Tensor2<f32>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    /// Validates row counts and that every class id below the maximum occurs.
    pub fn new(graph: Graph, features: Tensor2<f32>, labels: Vec<usize>) -> Result<Self> {
        let n = graph.node_count();
        if features.rows() != n {
            return Err(Error::input(
                "features",
                format!("{} rows for {n} nodes", features.rows()),
            ));
        }
        if labels.len() != n {
            return Err(Error::input(
                "labels",
                format!("{} labels for {n} nodes", labels.len()),
            ));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; num_classes];
        for l in &labels {
            seen[*l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::input(
                "labels",
                format!("class {missing} never occurs (classes must be 0..{num_classes})"),
            ));
        }
        Ok(Self {
            graph,
            features,
            labels,
            num_classes,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }
}

fn parse_edges(text: &str, ctx: &str) -> Result<(Vec<(usize, usize)>, usize)> {
    let mut edges = Vec::new();
    let mut max_id = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut id = || -> Result<usize> {
            let tok = parts.next().ok_or_else(|| {
                Error::input(format!("{ctx}:{}", lineno + 1), "expected two node ids")
            })?;
            tok.parse().map_err(|_| {
                Error::input(
                    format!("{ctx}:{}", lineno + 1),
                    format!("bad node id `{tok}`"),
                )
            })
        };
        let (u, v) = (id()?, id()?);
        max_id = max_id.max(Some(u.max(v)));
        edges.push((u, v));
    }
    Ok((edges, max_id.map_or(0, |m| m + 1)))
}

fn parse_features(text: &str, ctx: &str) -> Result<Tensor2<f32>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            let v: f32 = tok.trim().parse().map_err(|_| {
                Error::input(
                    format!("{ctx}:{}", lineno + 1),
                    format!("non-numeric feature `{}`", tok.trim()),
                )
            })?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::input(
                    format!("{ctx}:{}", lineno + 1),
                    format!("{width} values, expected {c}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    Ok(Tensor2::from_vec(rows, cols.unwrap_or(0), data))
}

fn parse_labels(text: &str, ctx: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, l)| {
            l.trim().parse().map_err(|_| {
                Error::input(
                    format!("{ctx}:{}", lineno + 1),
                    format!("bad label `{}`", l.trim()),
                )
            })
        })
        .collect()
}

/// Loads `edges.tsv`, `features.csv` and `labels.csv` from `dir`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let edges_path = dir.join("edges.tsv");
    let features_path = dir.join("features.csv");
    let labels_path = dir.join("labels.csv");
    let features = parse_features(
        &read_to_string(&features_path)?,
        &features_path.display().to_string(),
    )?;
    let labels = parse_labels(
        &read_to_string(&labels_path)?,
        &labels_path.display().to_string(),
    )?;
    if features.rows() != labels.len() {
        return Err(Error::input(
            dir.display().to_string(),
            format!(
                "features.csv has {} rows but labels.csv has {}",
                features.rows(),
                labels.len()
            ),
        ));
    }
    let n = labels.len();
    let edges_ctx = edges_path.display().to_string();
    let (edges, id_bound) = parse_edges(&read_to_string(&edges_path)?, &edges_ctx)?;
    if id_bound > n {
        return Err(Error::input(
            edges_ctx,
            format!("node id {} but only {n} nodes have features", id_bound - 1),
        ));
    }
    let graph = build_graph(&edges, n)?;
    Dataset::new(graph, features, labels)
}

/// Loads a bare edge list; the node count is one more than the largest id.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let (edges, n) = parse_edges(&read_to_string(path)?, &path.display().to_string())?;
    build_graph(&edges, n)
}

/// Writes a dataset in the directory layout read by [`load_dataset`].
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut edges = String::from("# u\tv\n");
    for (u, v) in ds.graph.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write_file(&dir.join("edges.tsv"), edges)?;
    let mut feats = String::new();
    for r in 0..ds.features.rows() {
        let row: Vec<String> = ds.features.row(r).iter().map(|v| v.to_string()).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    write_file(&dir.join("features.csv"), feats)?;
    let labels: String = ds.labels.iter().map(|l| format!("{l}\n")).collect();
    write_file(&dir.join("labels.csv"), labels)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniform (unstratified) random split. Validation and test get
/// `floor(ratio · n)` nodes each; the remainder goes to training.
pub fn make_split(n: usize, ratios: (f64, f64, f64), labels: &[usize], seed: u64) -> Result<Split> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r)) || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios ({tr}, {va}, {te}) must be in [0, 1] and sum to 1"
        )));
    }
    if labels.len() != n {
        return Err(Error::input(
            "split",
            format!("{} labels for {n} nodes", labels.len()),
        ));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if n < classes {
        return Err(Error::Config(format!(
            "{n} nodes cannot cover {classes} classes"
        )));
    }
    let n_val = (va * n as f64).floor() as usize;
    let n_test = (te * n as f64).floor() as usize;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng::stream(seed, rng::SPLIT, 0, 0));
    let val = ids[..n_val].to_vec();
    let test = ids[n_val..n_val + n_test].to_vec();
    let train = ids[n_val + n_test..].to_vec();
    Ok(Split {
        seed,
        train,
        val,
        test,
    })
}

impl Split {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        write_file(path, text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_floor_with_remainder_to_train() {
        let labels = vec![0; 2708];
        let s = make_split(2708, (0.6, 0.2, 0.2), &labels, 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1626, 541, 541));
        let s = make_split(10, (0.6, 0.2, 0.2), &[0; 10], 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
    }

    #[test]
    fn split_rejects_bad_ratios() {
        assert!(matches!(
            make_split(10, (0.6, 0.2, 0.3), &[0; 10], 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn features_report_line_of_bad_value() {
        let err = parse_features("1,2\n3,x\n", "f.csv").unwrap_err();
        assert!(err.to_string().contains("f.csv:2"), "{err}");
        let err = parse_features("1,2\n3\n", "f.csv").unwrap_err();
        assert!(err.to_string().contains("f.csv:2"), "{err}");
    }

    #[test]
    fn edges_skip_comments() {
        let (e, n) = parse_edges("# header\n0\t1\n\n1\t2\n", "e").unwrap();
        assert_eq!(e, vec![(0, 1), (1, 2)]);
        assert_eq!(n, 3);
    }
}
