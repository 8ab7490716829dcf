//! The single JSON run configuration.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use tokenwalk_core::analysis::AnalysisConfig;
use tokenwalk_core::doc::DocumentConfig;
use tokenwalk_core::model::{ModelConfig, TrainConfig};
use tokenwalk_core::sgpm::SgpmConfig;
use tokenwalk_core::walk::MixedWalkConfig;

/// Train/validation/test fractions of the node split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory (`edges.tsv`, `features.csv`, `labels.csv`),
    /// relative paths resolved against the config file.
    pub dataset: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seeds the split, walks, documents, pre-training and training.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub walk: MixedWalkConfig,
    #[serde(default)]
    pub document: DocumentConfig,
    #[serde(default)]
    pub sgpm: SgpmConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl RunConfig {
    /// Parses `path`, applies flag overrides, resolves relative paths and
    /// validates every section.
    pub fn load(path: &Path, out: Option<&Path>, seed: Option<u64>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        match out {
            Some(o) => cfg.output_dir = o.to_path_buf(),
            None if cfg.output_dir.is_relative() => cfg.output_dir = base.join(&cfg.output_dir),
            None => {}
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let mut problems = cfg.resolve_seeds();
        if let Err(CliError::Config(more)) = cfg.validate() {
            problems.extend(more);
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Config(problems))
        }
    }

    /// The global seed also drives the walk sampler and the complexity
    /// probe; a conflicting section seed is rejected.
    fn resolve_seeds(&mut self) -> Vec<String> {
        let mut problems = Vec::new();
        for (name, s) in [
            ("walk.seed", &mut self.walk.seed),
            (
                "analysis.complexity.seed",
                &mut self.analysis.complexity.seed,
            ),
        ] {
            if *s != 0 && *s != self.seed {
                problems.push(format!(
                    "{name} = {} conflicts with the global seed {}; set only `seed`",
                    *s, self.seed
                ));
            }
            *s = self.seed;
        }
        problems
    }

    /// Collects every violation across all sections.
    pub fn validate(&self) -> CliResult<()> {
        let mut problems = Vec::new();
        let mut section = |name: &str, r: tokenwalk_core::Result<()>| {
            if let Err(e) = r {
                problems.push(format!("{name}: {e}"));
            }
        };
        section("walk", self.walk.validate());
        section("document", self.document.validate());
        section("sgpm", self.sgpm.validate());
        section("model", self.model.validate());
        section("train", self.train.validate());
        section("analysis", self.analysis.validate());
        let s = &self.split;
        if [s.train, s.val, s.test]
            .iter()
            .any(|r| r.is_nan() || *r < 0.0)
            || (s.train + s.val + s.test - 1.0).abs() > 1e-9
        {
            problems.push(format!(
                "split: fractions {}/{}/{} must be >= 0 and sum to 1",
                s.train, s.val, s.test
            ));
        }
        if s.train == 0.0 {
            problems.push("split: train fraction must be > 0".into());
        }
        if self.model.use_sgpm && self.sgpm.width != self.model.d_h {
            problems.push(format!(
                "sgpm.width {} must equal model.d_h {} when model.use_sgpm is set",
                self.sgpm.width, self.model.d_h
            ));
        }
        if self.model.use_walk && self.walk.walks_per_node == 0 {
            problems.push("walk.walks_per_node must be >= 1 when model.use_walk is set".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }

    /// Pretty JSON with every default materialized.
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hash of the resolved configuration, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(
            serde_json::to_vec(&c).expect("config serializes"),
        ))
    }

    /// Dataset name used in reports: the dataset directory's file name.
    pub fn dataset_name(&self) -> String {
        self.dataset
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }
}
