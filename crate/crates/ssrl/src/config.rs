//! Run configuration: one TOML file, overridden by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use ssrl_core::eval::EvalSettings;
use ssrl_core::synth::SynthSpec;
use ssrl_core::{FeatureConfig, SsrlCode};

use crate::error::{CliError, Result};
use crate::formats::{ACTIONS_FILE, CONTEXT_MAP_FILE, EMBEDDINGS_FILE, LABELS_FILE, TRANSCRIPTS_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    /// Precomputed vectors from an embeddings file.
    File,
    #[default]
    Hashing,
}

impl FromStr for EmbedderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "file" => Ok(EmbedderKind::File),
            "hashing" => Ok(EmbedderKind::Hashing),
            other => Err(format!("unknown embedder {other:?}; expected file or hashing")),
        }
    }
}

impl fmt::Display for EmbedderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedderKind::File => "file",
            EmbedderKind::Hashing => "hashing",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    /// HTTP endpoint named by `SSRL_PROVIDER_URL`.
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub transcripts: Option<PathBuf>,
    pub actions: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub context_map: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeSection {
    pub provider: ProviderKind,
    /// Prompt template file; the built-in template when absent.
    pub template: Option<PathBuf>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Requests in flight at once.
    pub concurrency: usize,
}

impl Default for SummarizeSection {
    fn default() -> Self {
        SummarizeSection { provider: ProviderKind::Mock, template: None, timeout_secs: 30, max_retries: 3, concurrency: 4 }
    }
}

/// The config file as written.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub embedder: Option<EmbedderKind>,
    pub dim: Option<usize>,
    pub configs: Option<Vec<FeatureConfig>>,
    pub codes: Option<Vec<SsrlCode>>,
    pub budget: Option<usize>,
    pub jobs: Option<usize>,
    pub outer_folds: Option<usize>,
    pub inner_folds: Option<usize>,
    pub max_epochs: Option<usize>,
    pub resamples: Option<usize>,
    pub paths: PathsSection,
    pub summarize: SummarizeSection,
    pub synth: Option<SynthSpec>,
}

impl ConfigFile {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut file: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        let paths = &mut file.paths;
        for p in [&mut paths.transcripts, &mut paths.actions, &mut paths.labels, &mut paths.context_map, &mut paths.embeddings] {
            rebase(p);
        }
        rebase(&mut file.out);
        rebase(&mut file.summarize.template);
        Ok(file)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub embedder: Option<EmbedderKind>,
    pub dim: Option<usize>,
    pub configs: Option<Vec<FeatureConfig>>,
    pub codes: Option<Vec<SsrlCode>>,
    pub budget: Option<usize>,
    /// Directory holding the standard input file names.
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: PathsSection,
    pub embedder: EmbedderKind,
    /// `None` with the file embedder means "take the width from the file".
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub configs: Vec<FeatureConfig>,
    pub codes: Vec<SsrlCode>,
    pub budget: usize,
    pub jobs: usize,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub max_epochs: usize,
    pub resamples: usize,
    pub out: PathBuf,
    pub summarize: SummarizeSection,
    pub synth: SynthSpec,
}

impl RunConfig {
    pub fn resolve(file: ConfigFile, flags: Overrides) -> Result<Self> {
        let defaults = EvalSettings::default();
        let mut paths = file.paths;
        if let Some(dir) = &flags.data {
            paths.transcripts = Some(dir.join(TRANSCRIPTS_FILE));
            paths.actions = Some(dir.join(ACTIONS_FILE));
            paths.labels = Some(dir.join(LABELS_FILE));
            paths.context_map = Some(dir.join(CONTEXT_MAP_FILE));
            let emb = dir.join(EMBEDDINGS_FILE);
            if emb.exists() {
                paths.embeddings = Some(emb);
            }
        }
        let cfg = RunConfig {
            paths,
            embedder: flags.embedder.or(file.embedder).unwrap_or_default(),
            dim: flags.dim.or(file.dim),
            seed: flags.seed.or(file.seed),
            configs: flags.configs.or(file.configs).unwrap_or_else(|| FeatureConfig::ALL.to_vec()),
            codes: flags.codes.or(file.codes).unwrap_or_else(|| SsrlCode::ALL.to_vec()),
            budget: flags.budget.or(file.budget).unwrap_or(defaults.budget),
            jobs: flags.jobs.or(file.jobs).unwrap_or(1),
            outer_folds: file.outer_folds.unwrap_or(defaults.outer_folds),
            inner_folds: file.inner_folds.unwrap_or(defaults.inner_folds),
            max_epochs: file.max_epochs.unwrap_or(defaults.max_epochs),
            resamples: file.resamples.unwrap_or(defaults.resamples),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            summarize: file.summarize,
            synth: file.synth.unwrap_or_default(),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.configs.is_empty() {
            return bad("no feature configurations selected".into());
        }
        if self.codes.is_empty() {
            return bad("no codes selected".into());
        }
        if self.dim == Some(0) {
            return bad("dim must be positive".into());
        }
        for (name, v) in [("budget", self.budget), ("jobs", self.jobs), ("max_epochs", self.max_epochs), ("resamples", self.resamples)] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return bad("fold counts must be at least 2".into());
        }
        if self.summarize.concurrency == 0 {
            return bad("summarize.concurrency must be positive".into());
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| CliError::Config("a seed is required (--seed or `seed` in the config)".into()))
    }

    /// Path of an input file that must exist.
    pub fn input(&self, name: &str) -> Result<&Path> {
        let p = match name {
            "transcripts" => &self.paths.transcripts,
            "actions" => &self.paths.actions,
            "labels" => &self.paths.labels,
            "context_map" => &self.paths.context_map,
            "embeddings" => &self.paths.embeddings,
            _ => unreachable!("unknown input {name}"),
        };
        let p = p.as_deref().ok_or_else(|| CliError::Config(format!("no {name} path configured")))?;
        if !p.exists() {
            return Err(CliError::Config(format!("{name} file {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn settings(&self, seed: u64) -> EvalSettings {
        EvalSettings {
            outer_folds: self.outer_folds,
            inner_folds: self.inner_folds,
            budget: self.budget,
            max_epochs: self.max_epochs,
            resamples: self.resamples,
            seed,
            ..EvalSettings::default()
        }
    }
}

/// Parses a comma-separated list with `FromStr`.
pub fn comma_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| p.trim().parse().map_err(|e: T::Err| e.to_string())).collect()
}
