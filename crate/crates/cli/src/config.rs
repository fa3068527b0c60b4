//! The experiment config file and its resolution.
//!
//! Paths in the file are relative to the file's directory. The resolved form
//! (overrides applied, paths absolute) is what every command snapshots next
//! to its outputs.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Result;
use hfrag_core::bm25::Bm25Params;
use hfrag_core::{FusionConfig, Mode, SourceTag};
use serde::{Deserialize, Serialize};

/// A usage or configuration problem, reported with exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(message: impl Into<String>) -> anyhow::Error {
    ConfigError(message.into()).into()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Majority vote over labeled exemplars, computed in-process.
    #[default]
    Baseline,
    /// Predictions come from an outside process as JSONL.
    External,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labeled: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub claims: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
    /// Directories of `*.run` files for the labeled store.
    pub runs_labeled: Vec<PathBuf>,
    /// Directories of `*.run` files for the unlabeled corpus.
    pub runs_unlabeled: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
    /// Prediction JSONL of an external predictor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub k: usize,
    pub pool_depth: usize,
    pub missing_rank_m: u32,
}

impl Default for FusionSection {
    fn default() -> Self {
        let d = FusionConfig::default();
        FusionSection {
            k: d.k,
            pool_depth: d.pool_depth,
            missing_rank_m: d.missing_rank_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Section {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Section {
    fn default() -> Self {
        let d = Bm25Params::default();
        Bm25Section { k1: d.k1, b: d.b }
    }
}

fn default_mode() -> Mode {
    Mode::HfRag
}

fn default_ndcg_k() -> usize {
    10
}

fn default_sweep_sizes() -> Vec<usize> {
    vec![1, 2, 5, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Ranker used by the single-ranker modes when several are available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranker: Option<String>,
    #[serde(default)]
    pub predictor: PredictorKind,
    #[serde(default = "default_ndcg_k")]
    pub ndcg_k: usize,
    #[serde(default = "default_sweep_sizes")]
    pub sweep_sizes: Vec<usize>,
    pub paths: Paths,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub bm25: Bm25Section,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub ranker: Option<String>,
    pub predictor: Option<PredictorKind>,
    pub output: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn cwd() -> Result<PathBuf> {
    Ok(std::env::current_dir()?)
}

impl PipelineConfig {
    /// Reads `path`, applies `overrides` and validates the result.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| config_error(format!("invalid config {}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        let base = absolute(&cwd()?, &base);
        config.resolve_paths(&base);
        config.apply(overrides)?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.corpus,
            &mut p.labeled,
            &mut p.claims,
            &mut p.qrels,
            &mut p.template,
            &mut p.predictions,
        ]
        .into_iter()
        .flatten()
        {
            *slot = absolute(base, slot);
        }
        for dir in p.runs_labeled.iter_mut().chain(p.runs_unlabeled.iter_mut()) {
            *dir = absolute(base, dir);
        }
        p.output = absolute(base, &p.output);
    }

    fn apply(&mut self, o: &Overrides) -> Result<()> {
        let here = cwd()?;
        if let Some(mode) = o.mode {
            self.mode = mode;
        }
        if let Some(k) = o.k {
            self.fusion.k = k;
        }
        if let Some(alpha) = o.alpha {
            self.alpha = Some(alpha);
        }
        if let Some(ranker) = &o.ranker {
            self.ranker = Some(ranker.clone());
        }
        if let Some(predictor) = o.predictor {
            self.predictor = predictor;
        }
        if let Some(output) = &o.output {
            self.paths.output = absolute(&here, output);
        }
        if let Some(predictions) = &o.predictions {
            self.paths.predictions = Some(absolute(&here, predictions));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion_config()?;
        self.bm25_params()?;
        if let Some(alpha) = self.alpha {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(config_error(format!("alpha {alpha} is outside [0, 1]")));
            }
        }
        if self.mode == Mode::LuRagAlpha && self.alpha.is_none() {
            return Err(config_error("mode lu_rag_alpha requires alpha"));
        }
        if self.ndcg_k == 0 {
            return Err(config_error("ndcg_k must be at least 1"));
        }
        if self.sweep_sizes.contains(&0) {
            return Err(config_error("sweep_sizes must all be at least 1"));
        }
        let p = &self.paths;
        let named = [
            ("corpus", &p.corpus),
            ("labeled", &p.labeled),
            ("claims", &p.claims),
            ("qrels", &p.qrels),
            ("template", &p.template),
        ];
        for (name, path) in named {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(config_error(format!(
                        "{name} path {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        for dir in p.runs_labeled.iter().chain(&p.runs_unlabeled) {
            if !dir.is_dir() {
                return Err(config_error(format!(
                    "run directory {} does not exist",
                    dir.display()
                )));
            }
        }
        Ok(())
    }

    pub fn fusion_config(&self) -> Result<FusionConfig> {
        FusionConfig::new(
            self.fusion.k,
            self.fusion.pool_depth,
            self.fusion.missing_rank_m,
        )
        .map_err(|e| config_error(format!("[fusion] {e}")))
    }

    pub fn bm25_params(&self) -> Result<Bm25Params> {
        Bm25Params::new(self.bm25.k1, self.bm25.b).map_err(|e| config_error(format!("[bm25] {e}")))
    }

    pub fn run_dirs(&self, source: SourceTag) -> &[PathBuf] {
        match source {
            SourceTag::Labeled => &self.paths.runs_labeled,
            SourceTag::Unlabeled => &self.paths.runs_unlabeled,
        }
    }

    /// A required input path, or a config error naming the missing key.
    pub fn require<'a>(&self, name: &str, path: &'a Option<PathBuf>) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| config_error(format!("paths.{name} must be set for this command")))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "claims.jsonl", "");
        let cfg = write(
            dir.path(),
            "c.toml",
            "[paths]\nclaims = \"claims.jsonl\"\noutput = \"out\"\n",
        );
        let c = PipelineConfig::load(&cfg, &Overrides::default()).unwrap();
        assert_eq!(c.mode, Mode::HfRag);
        assert_eq!(c.fusion, FusionSection::default());
        assert_eq!(
            c.paths.claims.as_deref(),
            Some(dir.path().join("claims.jsonl").as_path())
        );
        assert_eq!(c.paths.output, dir.path().join("out"));
    }

    #[test]
    fn missing_path_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(
            dir.path(),
            "c.toml",
            "[paths]\ncorpus = \"nope.jsonl\"\noutput = \"out\"\n",
        );
        let err = PipelineConfig::load(&cfg, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("nope.jsonl"), "{err}");
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn overrides_win_and_alpha_is_required() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(
            dir.path(),
            "c.toml",
            "mode = \"l_rag\"\n[paths]\noutput = \"out\"\n[fusion]\nk = 3\n",
        );
        let o = Overrides {
            mode: Some(Mode::LuRagAlpha),
            ..Default::default()
        };
        assert!(PipelineConfig::load(&cfg, &o).is_err());
        let o = Overrides {
            mode: Some(Mode::LuRagAlpha),
            alpha: Some(0.25),
            k: Some(7),
            ..Default::default()
        };
        let c = PipelineConfig::load(&cfg, &o).unwrap();
        assert_eq!(
            (c.mode, c.alpha, c.fusion.k, c.fusion.pool_depth),
            (Mode::LuRagAlpha, Some(0.25), 7, 50)
        );
    }

    #[test]
    fn snapshot_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(
            dir.path(),
            "c.toml",
            "alpha = 0.5\n[paths]\noutput = \"out\"\n[bm25]\nk1 = 0.9\n",
        );
        let c = PipelineConfig::load(&cfg, &Overrides::default()).unwrap();
        let back: PipelineConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_fusion_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(
            dir.path(),
            "c.toml",
            "[paths]\noutput = \"o\"\n[fusion]\nmissing_rank_m = 20\n",
        );
        let err = PipelineConfig::load(&cfg, &Overrides::default()).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
        let cfg = write(
            dir.path(),
            "d.toml",
            "colour = 1\n[paths]\noutput = \"o\"\n",
        );
        assert!(PipelineConfig::load(&cfg, &Overrides::default()).is_err());
    }
}
