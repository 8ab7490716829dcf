//! Pipeline stages. Each stage derives a key from its inputs' content
//! hashes and its config section, skips work when the manifest already
//! holds intact outputs for that key, and records what it wrote.

use crate::config::RunConfig;
use crate::error::{io_err, CliError, CliResult};
use crate::manifest::{sha256_file, stage_key, CacheState, RunLock, RunManifest};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;
use tokenwalk_core::analysis::{
    complexity_probe, coverage_over_seeds, empirical_stationary, hoeffding_bound,
    hop_walk_discrimination, write_complexity_csv, write_coverage_csv, write_stationary_csv,
    RootedGraph,
};
use tokenwalk_core::dataset::{load_dataset, make_split, save_dataset, Dataset, Split};
use tokenwalk_core::doc::{build_vocab, generate_document, GraphDocument, NodeInputs};
use tokenwalk_core::graph::{build_graph, compute_metrics};
use tokenwalk_core::model::{evaluate, train, write_eval_csv, ModelConfig, TokenInputs};
use tokenwalk_core::sgpm::{export_sgpm_tokens, load_tokens, pretrain, save_tokens};
use tokenwalk_core::walk::{
    generate_mixed_walks, njw_transition, uniform_transition, MixedWalkConfig, WalkCorpus, WalkKind,
};
use tokenwalk_core::Error;
use tokenwalk_nn::checkpoint;

const DATASET_FILES: [&str; 3] = ["edges.tsv", "features.csv", "labels.csv"];
const INGEST_DIR: &str = "ingest/dataset";
const SPLIT: &str = "ingest/split.json";
const CORPUS: &str = "walks/walks.txt";
const DOCUMENT_DIR: &str = "document";
const DOCUMENT_FILES: [&str; 3] = ["train.txt", "val.txt", "meta.json"];
const TOKENS: &str = "sgpm/sgpm_tokens.bin";
const TRAIN_METRICS: &str = "train/metrics.csv";
const TRAIN_HISTORY: &str = "train/history.jsonl";
const CHECKPOINT: &str = "sgpm/checkpoint.bin";

/// Which analysis report(s) to produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Analysis {
    Stationary,
    Coverage,
    Discrimination,
    Complexity,
}

impl Analysis {
    pub const ALL: [Analysis; 4] = [
        Analysis::Stationary,
        Analysis::Coverage,
        Analysis::Discrimination,
        Analysis::Complexity,
    ];
}

/// One ablation: remove a token kind or a walk kind, or keep one walk kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    DropSgpm,
    DropHop,
    DropWalk,
    DropKind(WalkKind),
    Only(WalkKind),
}

impl Ablation {
    pub fn label(self) -> String {
        match self {
            Ablation::DropSgpm => "no-sgpm-token".into(),
            Ablation::DropHop => "no-hop-token".into(),
            Ablation::DropWalk => "no-walk-token".into(),
            Ablation::DropKind(k) => format!("no-{k}"),
            Ablation::Only(k) => format!("only-{k}"),
        }
    }

    /// Applies the ablation to copies of the model and walk settings.
    fn apply(self, model: &mut ModelConfig, walk: &mut MixedWalkConfig) -> CliResult<()> {
        match self {
            Ablation::DropSgpm => model.use_sgpm = false,
            Ablation::DropHop => model.use_hop = false,
            Ablation::DropWalk => model.use_walk = false,
            Ablation::DropKind(k) => {
                if !model.use_walk {
                    return Err(CliError::Usage(format!(
                        "cannot drop {k} walks: model.use_walk is off"
                    )));
                }
                walk.ratios[k.index()] = 0.0;
                let sum: f64 = walk.ratios.iter().sum();
                if sum == 0.0 {
                    return Err(CliError::Usage(format!(
                        "dropping {k} leaves no walks in the mix; use --drop walk-token instead"
                    )));
                }
                for r in &mut walk.ratios {
                    *r /= sum;
                }
            }
            Ablation::Only(k) => {
                if !model.use_walk {
                    return Err(CliError::Usage(format!(
                        "cannot restrict walks to {k}: model.use_walk is off"
                    )));
                }
                walk.ratios = [0.0; 4];
                walk.ratios[k.index()] = 1.0;
            }
        }
        Ok(())
    }
}

/// An open run directory: config, manifest and the lock.
pub struct Run {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    config_hash: String,
    _lock: RunLock,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config section serializes")
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).expect("report serializes") + "\n";
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct DatasetStats {
    nodes: usize,
    edges: usize,
    feature_dim: usize,
    classes: usize,
    connected: bool,
    bipartite: bool,
    radius: usize,
    diameter: usize,
    largest_component: usize,
    train: usize,
    val: usize,
    test: usize,
}

#[derive(Serialize)]
struct AblationMetrics {
    label: String,
    seeds: Vec<u64>,
    test_acc: Vec<f64>,
    val_acc: Vec<f64>,
    mean: f64,
    std: f64,
    seq_len: usize,
    baseline_seq_len: usize,
    walks_per_node: usize,
    walk_ratios: [f64; 4],
}

/// Everything training needs.
struct TrainingInputs {
    ds: Dataset,
    split: Split,
    inputs: TokenInputs<f32>,
    /// Corpus sampled for this run rather than read from `walks`.
    sampled: Option<WalkCorpus>,
}

impl Run {
    /// Locks the output directory, writes the resolved config and loads
    /// the manifest.
    pub fn open(cfg: RunConfig) -> CliResult<Self> {
        let dir = cfg.output_dir.clone();
        let lock = RunLock::acquire(&dir)?;
        let resolved = dir.join("config.resolved.json");
        std::fs::write(&resolved, cfg.resolved_json() + "\n").map_err(|e| io_err(&resolved, e))?;
        let config_hash = cfg.hash();
        let manifest = RunManifest::load(&dir, &config_hash);
        manifest.save(&dir)?;
        Ok(Self {
            cfg,
            dir,
            manifest,
            config_hash,
            _lock: lock,
        })
    }

    /// Runs `build` unless the manifest holds intact outputs for `key`.
    /// Returns whether work was done.
    fn stage(
        &mut self,
        name: &str,
        key: &str,
        build: impl FnOnce(&Self) -> CliResult<Vec<PathBuf>>,
    ) -> CliResult<bool> {
        match self.manifest.check(name, key, &self.dir) {
            CacheState::Hit => {
                log::info!("{name}: up to date, skipping");
                return Ok(false);
            }
            CacheState::Tampered(files) => {
                log::warn!(
                    "{name}: {} changed or missing since it was written; rebuilding",
                    files.join(", ")
                );
            }
            CacheState::Miss => log::info!("{name}: building"),
        }
        let start = Instant::now();
        let artifacts = build(self)?;
        let seconds = start.elapsed().as_secs_f64();
        self.manifest
            .record(name, key, &self.dir, &artifacts, seconds)?;
        self.manifest.save(&self.dir)?;
        if self.manifest.check(name, key, &self.dir) != CacheState::Hit {
            return Err(CliError::Core(Error::input(
                name.to_string(),
                "outputs changed while the stage was recording them",
            )));
        }
        log::info!("{name}: done in {seconds:.2}s");
        Ok(true)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Verified hash of an artifact produced by `stage` (built by `command`).
    fn need(&self, stage: &str, rel: &str, command: &'static str) -> CliResult<String> {
        self.manifest.verified_hash(stage, rel, &self.dir, command)
    }

    fn dataset_hashes(&self) -> CliResult<Vec<(&'static str, String)>> {
        let mut parts = Vec::new();
        for (label, f) in ["edges", "features", "labels"]
            .into_iter()
            .zip(DATASET_FILES)
        {
            parts.push((
                label,
                self.need("ingest", &format!("{INGEST_DIR}/{f}"), "ingest")?,
            ));
        }
        Ok(parts)
    }

    fn load_ingested(&self) -> CliResult<(Dataset, Split)> {
        self.need("ingest", SPLIT, "ingest")?;
        self.dataset_hashes()?;
        Ok((
            load_dataset(&self.path(INGEST_DIR))?,
            Split::load(&self.path(SPLIT))?,
        ))
    }

    pub fn ingest(&mut self) -> CliResult<bool> {
        let raw = &self.cfg.dataset;
        let mut parts = Vec::new();
        for f in DATASET_FILES {
            let p = raw.join(f);
            if !p.exists() {
                return Err(CliError::Core(Error::input(
                    raw.display().to_string(),
                    format!(
                        "{f} not found; a dataset directory holds {}",
                        DATASET_FILES.join(", ")
                    ),
                )));
            }
            parts.push(sha256_file(&p)?);
        }
        let key = stage_key(&[
            ("edges", &parts[0]),
            ("features", &parts[1]),
            ("labels", &parts[2]),
            ("split", &json(&self.cfg.split)),
            ("seed", &self.cfg.seed.to_string()),
        ]);
        self.stage("ingest", &key, |run| {
            let ds = load_dataset(&run.cfg.dataset)?;
            save_dataset(&ds, &run.path(INGEST_DIR))?;
            let s = &run.cfg.split;
            let split = make_split(
                ds.graph.node_count(),
                (s.train, s.val, s.test),
                &ds.labels,
                run.cfg.seed,
            )?;
            split.save(&run.path(SPLIT))?;
            let m = compute_metrics(&ds.graph);
            let stats = DatasetStats {
                nodes: ds.graph.node_count(),
                edges: ds.graph.edge_count(),
                feature_dim: ds.feature_dim(),
                classes: ds.num_classes,
                connected: m.is_connected,
                bipartite: m.is_bipartite,
                radius: m.radius,
                diameter: m.diameter,
                largest_component: ds.graph.largest_component().len(),
                train: split.train.len(),
                val: split.val.len(),
                test: split.test.len(),
            };
            log::info!(
                "{} nodes, {} edges, {} features, {} classes",
                stats.nodes,
                stats.edges,
                stats.feature_dim,
                stats.classes
            );
            write_json(&run.path("ingest/stats.json"), &stats)?;
            let mut out: Vec<PathBuf> = DATASET_FILES
                .iter()
                .map(|f| Path::new(INGEST_DIR).join(f))
                .collect();
            out.push(SPLIT.into());
            out.push("ingest/stats.json".into());
            Ok(out)
        })
    }

    pub fn walks(&mut self) -> CliResult<bool> {
        let edges = self.need("ingest", &format!("{INGEST_DIR}/edges.tsv"), "ingest")?;
        let key = stage_key(&[("edges", &edges), ("walk", &json(&self.cfg.walk))]);
        self.stage("walks", &key, |run| {
            let (ds, _) = run.load_ingested()?;
            let corpus = generate_mixed_walks(&ds.graph, &run.cfg.walk)?;
            create_dir(&run.path("walks"))?;
            corpus.save(&run.path(CORPUS))?;
            Ok(vec![CORPUS.into()])
        })
    }

    /// Builds the graph document, then pre-trains and exports the tokens.
    pub fn pretrain(&mut self) -> CliResult<bool> {
        let edges = self.need("ingest", &format!("{INGEST_DIR}/edges.tsv"), "ingest")?;
        let seed = self.cfg.seed.to_string();
        let doc_key = stage_key(&[
            ("edges", &edges),
            ("document", &json(&self.cfg.document)),
            ("seed", &seed),
        ]);
        let built_doc = self.stage("document", &doc_key, |run| {
            let (ds, _) = run.load_ingested()?;
            let d = &run.cfg.document;
            let mu = d.resolved_mu(compute_metrics(&ds.graph).radius);
            let doc = generate_document(
                &ds.graph,
                d.walks_per_node,
                d.val_walks,
                mu,
                d.sigma,
                run.cfg.seed,
            )?;
            doc.save(&run.path(DOCUMENT_DIR))?;
            Ok(DOCUMENT_FILES
                .iter()
                .map(|f| Path::new(DOCUMENT_DIR).join(f))
                .collect())
        })?;
        let mut parts = self.dataset_hashes()?;
        for f in DOCUMENT_FILES {
            parts.push((
                "document",
                self.need("document", &format!("{DOCUMENT_DIR}/{f}"), "pretrain")?,
            ));
        }
        parts.push(("sgpm", json(&self.cfg.sgpm)));
        parts.push(("seed", seed));
        let key = stage_key(&borrow_parts(&parts));
        let built = self.stage("sgpm", &key, |run| {
            let (ds, _) = run.load_ingested()?;
            let doc = GraphDocument::load(&run.path(DOCUMENT_DIR), ds.graph.node_count())?;
            let inputs = NodeInputs::new(&ds.graph, &ds.features);
            let pre = pretrain(
                &doc,
                &inputs,
                build_vocab(&ds.graph),
                &run.cfg.sgpm,
                run.cfg.seed,
            )?;
            if pre.diverged {
                log::warn!(
                    "pre-training hit a non-finite loss; keeping the best epoch {} (lower sgpm.lr)",
                    pre.best_epoch
                );
            }
            create_dir(&run.path("sgpm"))?;
            checkpoint::save(&pre.store, &run.path(CHECKPOINT))?;
            let mut curve = String::from("epoch,train_loss,val_loss\n");
            for e in &pre.curve {
                curve.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
            }
            let curve_path = run.path("sgpm/curve.csv");
            std::fs::write(&curve_path, curve).map_err(|e| io_err(&curve_path, e))?;
            let tokens = export_sgpm_tokens(&pre, &inputs, Some(&doc), run.cfg.sgpm.export)?;
            save_tokens(&run.path(TOKENS), &tokens, CHECKPOINT)?;
            Ok(vec![
                CHECKPOINT.into(),
                "sgpm/curve.csv".into(),
                TOKENS.into(),
                format!("{TOKENS}.json").into(),
            ])
        })?;
        Ok(built_doc || built)
    }

    /// Hashes of everything training with `model` depends on. `walk`
    /// replaces the `walks` stage output by a corpus sampled on the fly.
    fn training_key(
        &self,
        model: &ModelConfig,
        walk: Option<&MixedWalkConfig>,
    ) -> CliResult<Vec<(&'static str, String)>> {
        let mut parts = self.dataset_hashes()?;
        parts.push(("split", self.need("ingest", SPLIT, "ingest")?));
        if model.use_walk {
            match walk {
                Some(w) => parts.push(("walk", json(w))),
                None => parts.push(("corpus", self.need("walks", CORPUS, "walks")?)),
            }
        }
        if model.use_sgpm {
            parts.push(("tokens", self.need("sgpm", TOKENS, "pretrain")?));
            parts.push((
                "tokens_meta",
                self.need("sgpm", &format!("{TOKENS}.json"), "pretrain")?,
            ));
        }
        parts.push(("model", json(model)));
        parts.push(("train", json(&self.cfg.train)));
        Ok(parts)
    }

    /// Loads what [`Self::training_key`] hashed.
    fn training_inputs(
        &self,
        model: &ModelConfig,
        walk: Option<&MixedWalkConfig>,
    ) -> CliResult<TrainingInputs> {
        let (ds, split) = self.load_ingested()?;
        let (corpus, sampled) = match (model.use_walk, walk) {
            (false, _) => (None, false),
            (true, Some(w)) => (Some(generate_mixed_walks(&ds.graph, w)?), true),
            (true, None) => (
                Some(WalkCorpus::load(&self.path(CORPUS), ds.graph.node_count())?),
                false,
            ),
        };
        let tokens = if model.use_sgpm {
            Some(load_tokens(&self.path(TOKENS))?.0)
        } else {
            None
        };
        let inputs = TokenInputs::new(
            &ds.graph,
            &ds.features,
            corpus.as_ref(),
            tokens.as_ref(),
            model,
        )?;
        Ok(TrainingInputs {
            ds,
            split,
            inputs,
            sampled: if sampled { corpus } else { None },
        })
    }

    pub fn train(&mut self) -> CliResult<bool> {
        let mut parts = self.training_key(&self.cfg.model, None)?;
        parts.push(("seed", self.cfg.seed.to_string()));
        let key = stage_key(&borrow_parts(&parts));
        self.stage("train", &key, |run| {
            let cfg = &run.cfg;
            let t = run.training_inputs(&cfg.model, None)?;
            let out = train(&t.ds, &t.split, &t.inputs, &cfg.model, &cfg.train, cfg.seed)?;
            log::info!(
                "test {:.4} val {:.4} train {:.4} (best epoch {})",
                out.test_acc,
                out.val_acc,
                out.train_acc,
                out.best_epoch
            );
            create_dir(&run.path("train"))?;
            checkpoint::save(&out.store, &run.path("train/model.bin"))?;
            let metrics = format!(
                "seed,train_acc,val_acc,test_acc,best_epoch,epochs_run,seq_len\n{},{},{},{},{},{},{}\n",
                cfg.seed,
                out.train_acc,
                out.val_acc,
                out.test_acc,
                out.best_epoch,
                out.history.len(),
                out.model.seq_len(&t.inputs)
            );
            let metrics_path = run.path(TRAIN_METRICS);
            std::fs::write(&metrics_path, metrics).map_err(|e| io_err(&metrics_path, e))?;
            let history: String = out
                .history
                .iter()
                .map(|r| serde_json::to_string(r).expect("epoch record serializes") + "\n")
                .collect();
            let history_path = run.path(TRAIN_HISTORY);
            std::fs::write(&history_path, history).map_err(|e| io_err(&history_path, e))?;
            Ok(vec![
                "train/model.bin".into(),
                TRAIN_METRICS.into(),
                TRAIN_HISTORY.into(),
            ])
        })
    }

    pub fn eval(&mut self, seeds: &[u64]) -> CliResult<bool> {
        let mut parts = self.training_key(&self.cfg.model, None)?;
        parts.push(("seeds", json(&seeds)));
        let key = stage_key(&borrow_parts(&parts));
        self.stage("eval", &key, |run| {
            let cfg = &run.cfg;
            let t = run.training_inputs(&cfg.model, None)?;
            let summary = evaluate(&t.ds, &t.split, &t.inputs, &cfg.model, &cfg.train, seeds)?;
            log::info!(
                "test accuracy {:.4} ± {:.4} over {} seeds",
                summary.mean,
                summary.std,
                seeds.len()
            );
            create_dir(&run.path("eval"))?;
            let rows = [(cfg.dataset_name(), run.config_hash.clone(), summary)];
            write_eval_csv(&run.path("eval/eval.csv"), &rows)?;
            write_json(&run.path("eval/summary.json"), &rows[0].2)?;
            Ok(vec!["eval/eval.csv".into(), "eval/summary.json".into()])
        })
    }

    pub fn analyze(&mut self, which: &[Analysis]) -> CliResult<bool> {
        let mut built = false;
        for a in which {
            built |= match a {
                Analysis::Stationary => self.stationary()?,
                Analysis::Coverage => self.coverage()?,
                Analysis::Discrimination => self.discrimination()?,
                Analysis::Complexity => self.complexity()?,
            };
        }
        Ok(built)
    }

    fn stationary(&mut self) -> CliResult<bool> {
        let edges = self.need("ingest", &format!("{INGEST_DIR}/edges.tsv"), "ingest")?;
        let a = &self.cfg.analysis;
        let key = stage_key(&[
            ("edges", &edges),
            ("steps", &a.stationary_steps.to_string()),
            ("seed", &self.cfg.seed.to_string()),
        ]);
        self.stage("analyze-stationary", &key, |run| {
            let (ds, _) = run.load_ingested()?;
            let largest = ds.graph.largest_component();
            if largest.len() < ds.graph.node_count() {
                log::info!(
                    "stationary analysis uses the largest component ({} of {} nodes)",
                    largest.len(),
                    ds.graph.node_count()
                );
            }
            let g = ds.graph.induced_subgraph(&largest);
            let reports = [WalkKind::Urw, WalkKind::Nbrw]
                .into_iter()
                .map(|k| {
                    empirical_stationary(&g, k, run.cfg.analysis.stationary_steps, run.cfg.seed)
                })
                .collect::<Result<Vec<_>, _>>()?;
            for r in &reports {
                log::info!(
                    "{}: total variation {:.5} after {} steps",
                    r.kind,
                    r.tv,
                    r.steps
                );
            }
            create_dir(&run.path("analysis"))?;
            write_stationary_csv(&g, &reports, &run.path("analysis/stationary.csv"))?;
            Ok(vec!["analysis/stationary.csv".into()])
        })
    }

    fn coverage(&mut self) -> CliResult<bool> {
        let edges = self.need("ingest", &format!("{INGEST_DIR}/edges.tsv"), "ingest")?;
        let labels = self.need("ingest", &format!("{INGEST_DIR}/labels.csv"), "ingest")?;
        let key = stage_key(&[
            ("edges", &edges),
            ("labels", &labels),
            ("analysis", &json(&self.cfg.analysis)),
            ("jump_radius", &self.cfg.walk.jump_radius.to_string()),
        ]);
        self.stage("analyze-coverage", &key, |run| {
            let (ds, _) = run.load_ingested()?;
            let a = &run.cfg.analysis;
            if a.coverage_start >= ds.graph.node_count() {
                return Err(CliError::Config(vec![format!(
                    "analysis.coverage_start = {} but the graph has {} nodes",
                    a.coverage_start,
                    ds.graph.node_count()
                )]));
            }
            let p = match a.coverage_kind {
                WalkKind::Njw => njw_transition(&ds.graph, run.cfg.walk.jump_radius)?,
                _ => uniform_transition(&ds.graph),
            };
            let seeds: Vec<u64> = (0..a.coverage_seeds as u64)
                .map(|s| run.cfg.seed + s)
                .collect();
            let reports = coverage_over_seeds(
                &p,
                &ds.labels,
                a.coverage_start,
                a.coverage_k,
                a.coverage_walks,
                a.coverage_eps,
                &seeds,
            )?;
            let worst = reports
                .iter()
                .map(|r| r.violation_fraction)
                .fold(0.0, f64::max);
            log::info!(
                "worst violation fraction {worst:.4}, bound {:.3e}",
                hoeffding_bound(a.coverage_eps, a.coverage_walks)
            );
            create_dir(&run.path("analysis"))?;
            write_coverage_csv(&reports, &run.path("analysis/coverage.csv"))?;
            Ok(vec!["analysis/coverage.csv".into()])
        })
    }

    fn discrimination(&mut self) -> CliResult<bool> {
        let depth = self.cfg.analysis.discrimination_depth;
        let key = stage_key(&[("depth", &depth.to_string())]);
        self.stage("analyze-discrimination", &key, |run| {
            let cycle =
                |n: usize| build_graph(&(0..n).map(|i| (i, (i + 1) % n)).collect::<Vec<_>>(), n);
            let a = RootedGraph::constant(cycle(3)?, 0);
            let b = RootedGraph::constant(cycle(6)?, 0);
            let report = hop_walk_discrimination(&a, &b, depth)?;
            log::info!(
                "C3 vs C6: hop aggregates distinguish = {}, walks distinguish = {}",
                report.hop_distinguishes,
                report.walk_distinguishes
            );
            create_dir(&run.path("analysis"))?;
            write_json(&run.path("analysis/discrimination.json"), &report)?;
            Ok(vec!["analysis/discrimination.json".into()])
        })
    }

    fn complexity(&mut self) -> CliResult<bool> {
        let key = stage_key(&[("complexity", &json(&self.cfg.analysis.complexity))]);
        self.stage("analyze-complexity", &key, |run| {
            let report = complexity_probe(&run.cfg.analysis.complexity)?;
            log::info!("time per node grows as N_t^{:.3}", report.exponent);
            create_dir(&run.path("analysis"))?;
            write_complexity_csv(&report.rows, &run.path("analysis/complexity.csv"))?;
            Ok(vec!["analysis/complexity.csv".into()])
        })
    }

    pub fn ablate(&mut self, ablation: Ablation, seeds: &[u64]) -> CliResult<bool> {
        let mut model = self.cfg.model.clone();
        let mut walk = self.cfg.walk.clone();
        ablation.apply(&mut model, &mut walk)?;
        let label = ablation.label();
        let baseline_m = if self.cfg.model.use_walk {
            self.cfg.walk.walks_per_node
        } else {
            0
        };
        let resample = (model.use_walk && walk != self.cfg.walk).then_some(&walk);
        let mut parts = self.training_key(&model, resample)?;
        parts.push(("label", label.clone()));
        parts.push(("seeds", json(&seeds)));
        let key = stage_key(&borrow_parts(&parts));
        let stage = format!("ablate-{label}");
        self.stage(&stage, &key, |run| {
            let t = run.training_inputs(&model, resample)?;
            let summary = evaluate(&t.ds, &t.split, &t.inputs, &model, &run.cfg.train, seeds)?;
            let dir = Path::new("ablate").join(&label);
            create_dir(&run.dir.join(&dir))?;
            let mut out = Vec::new();
            if let Some(c) = &t.sampled {
                c.save(&run.dir.join(dir.join("walks.txt")))?;
                out.push(dir.join("walks.txt"));
            }
            let m = if model.use_walk {
                walk.walks_per_node
            } else {
                0
            };
            let metrics = AblationMetrics {
                label: label.clone(),
                seeds: summary.seeds.clone(),
                test_acc: summary.test_acc.clone(),
                val_acc: summary.val_acc.clone(),
                mean: summary.mean,
                std: summary.std,
                seq_len: model.seq_len(m),
                baseline_seq_len: run.cfg.model.seq_len(baseline_m),
                walks_per_node: m,
                walk_ratios: walk.ratios,
            };
            log::info!(
                "{label}: test accuracy {:.4} ± {:.4}, sequence length {} (baseline {})",
                metrics.mean,
                metrics.std,
                metrics.seq_len,
                metrics.baseline_seq_len
            );
            write_json(&run.dir.join(dir.join("metrics.json")), &metrics)?;
            out.push(dir.join("metrics.json"));
            Ok(out)
        })
    }
}

fn borrow_parts<'a>(parts: &'a [(&'static str, String)]) -> Vec<(&'a str, &'a str)> {
    parts.iter().map(|(l, v)| (*l, v.as_str())).collect()
}
