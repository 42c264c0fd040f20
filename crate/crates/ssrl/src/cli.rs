//! Argument parsing and the seven commands.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use ssrl_core::features::{FeatureStore, SegmentKey};
use ssrl_core::report::ReportTable;
use ssrl_core::summarizer::{summarize_with, MockProvider, SummaryRequest, TextProvider, DEFAULT_TEMPLATE};
use ssrl_core::synth::{generate, SynthSpec};
use ssrl_core::SsrlCode;

use crate::config::{comma_list, ConfigFile, EmbedderKind, Overrides, ProviderKind, RunConfig};
use crate::error::{CliError, Result};
use crate::evaluate::{evaluate, write_report};
use crate::formats::{
    embedding_line, read_json, write_feature_csv, write_json, write_jsonl, write_text, ACTIONS_FILE,
    CONTEXT_MAP_FILE, EMBEDDINGS_FILE, LABELS_FILE, RESULTS_FILE, SEGMENTS_FILE, SUMMARIES_FILE, TRANSCRIPTS_FILE,
    VALIDATION_FILE,
};
use crate::pipeline::{embedder, load, load_clean, render_report};
use crate::provider::HttpProvider;

#[derive(Debug, Parser)]
#[command(name = "ssrl", version, about = "Detect socially shared regulation in fused dialogue and action logs")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for evaluate.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `file` or `hashing`.
    #[arg(long, global = true)]
    pub embedder: Option<EmbedderKind>,
    /// Embedding width.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Comma-separated feature configurations, e.g. `text_only,log_only`.
    #[arg(long, global = true)]
    pub configs: Option<String>,
    /// Comma-separated SSRL codes, e.g. `OFF_TOPIC,PLANNING`.
    #[arg(long, global = true)]
    pub codes: Option<String>,
    /// Hyperparameter samples per outer fold.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Directory with transcripts.jsonl, actions.jsonl, labels.jsonl and
    /// context_map.json (as written by `synth`).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check the inputs and write a validation report.
    Validate,
    /// Fuse logs and transcripts into labeled segments.
    Segment,
    /// Export embeddings and one feature matrix per configuration.
    Featurize,
    /// Nested cross-validation over the code × configuration grid.
    Evaluate,
    /// Generate a synthetic dataset with planted signal.
    Synth {
        /// TOML file holding a synthesis spec; the config's `[synth]` table otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Summarize every segment with a text-generation provider.
    Summarize {
        /// `mock` or `http`; `http` reads SSRL_PROVIDER_URL and SSRL_PROVIDER_TOKEN.
        #[arg(long)]
        provider: Option<String>,
    },
    /// Render results.json as CSV and aligned text.
    Report {
        /// Results file; defaults to results.json in the output directory.
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Segment => "segment",
            Command::Featurize => "featurize",
            Command::Evaluate => "evaluate",
            Command::Synth { .. } => "synth",
            Command::Summarize { .. } => "summarize",
            Command::Report { .. } => "report",
        }
    }
}

pub fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let config_err = |what: &str, e: String| CliError::Config(format!("--{what}: {e}"));
    let flags = Overrides {
        seed: common.seed,
        jobs: common.jobs,
        out: common.out.clone(),
        embedder: common.embedder,
        dim: common.dim,
        configs: common.configs.as_deref().map(comma_list).transpose().map_err(|e| config_err("configs", e))?,
        codes: common.codes.as_deref().map(comma_list::<SsrlCode>).transpose().map_err(|e| config_err("codes", e))?,
        budget: common.budget,
        data: common.data.clone(),
    };
    RunConfig::resolve(file, flags)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    match &cli.command {
        Command::Validate => cmd_validate(&cfg),
        Command::Segment => cmd_segment(&cfg),
        Command::Featurize => cmd_featurize(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::Synth { spec } => cmd_synth(&cfg, spec.as_deref()),
        Command::Summarize { provider } => cmd_summarize(&cfg, provider.as_deref()),
        Command::Report { results } => cmd_report(&cfg, results.as_deref()),
    }
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<()> {
    let loaded = load(cfg)?;
    let text = render_report(&loaded.report);
    write_text(&cfg.out.join(VALIDATION_FILE), &text)?;
    print!("{text}");
    if !loaded.report.is_clean() {
        return Err(CliError::Data(format!("{} validation error(s)", loaded.report.errors.len())));
    }
    Ok(())
}

pub fn cmd_segment(cfg: &RunConfig) -> Result<()> {
    let loaded = load_clean(cfg)?;
    write_text(&cfg.out.join(VALIDATION_FILE), &render_report(&loaded.report))?;
    write_jsonl(&cfg.out.join(SEGMENTS_FILE), &loaded.segments)?;
    let labeled = loaded.segments.iter().filter(|s| s.label.is_some()).count();
    println!("{} segments ({labeled} labeled) -> {}", loaded.segments.len(), cfg.out.join(SEGMENTS_FILE).display());
    Ok(())
}

/// Exports use every labeled segment; the vocabulary here is fit on all of
/// them, unlike the fold-local fits inside evaluation.
pub fn cmd_featurize(cfg: &RunConfig) -> Result<()> {
    let loaded = load_clean(cfg)?;
    let provider = embedder(cfg)?;
    let store = FeatureStore::new(&loaded.segments, provider.as_ref()).map_err(|e| CliError::Data(e.to_string()))?;
    let lines: Vec<String> = (0..loaded.segments.len())
        .map(|r| embedding_line(&SegmentKey::of(store.segment(r)), store.embedding(r)))
        .collect();
    write_text(&cfg.out.join(EMBEDDINGS_FILE), &lines.iter().map(|l| format!("{l}\n")).collect::<String>())?;

    let rows = store.labeled_rows();
    let codes: Vec<SsrlCode> = rows.iter().filter_map(|&r| store.segment(r).label).collect();
    let vocab = store.fit_vocabulary(&rows);
    for &config in &cfg.configs {
        let matrix = store.matrix(&rows, config, Some(&vocab)).map_err(|e| CliError::Data(e.to_string()))?;
        let path = cfg.out.join(format!("features_{config}.csv"));
        write_feature_csv(&path, &matrix, &codes)?;
        println!("{config}: {} rows x {} columns -> {}", matrix.n_rows(), matrix.width, path.display());
    }
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let evaluation = evaluate(cfg)?;
    print!("{}", evaluation.table.to_text());
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig, spec_path: Option<&std::path::Path>) -> Result<()> {
    let mut spec: SynthSpec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read spec {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => cfg.synth.clone(),
    };
    spec.seed = cfg.require_seed()?;
    let data = generate(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let out = &cfg.out;
    write_jsonl(&out.join(TRANSCRIPTS_FILE), &data.utterances)?;
    write_jsonl(&out.join(ACTIONS_FILE), &data.actions)?;
    write_jsonl(&out.join(LABELS_FILE), &data.labels)?;
    write_json(&out.join(CONTEXT_MAP_FILE), &data.context_map)?;
    write_json(&out.join("synth_spec.json"), &spec)?;
    println!(
        "{} utterances, {} actions, {} labeled segments -> {}",
        data.utterances.len(),
        data.actions.len(),
        data.labels.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_summarize(cfg: &RunConfig, provider: Option<&str>) -> Result<()> {
    let kind = match provider {
        None => cfg.summarize.provider,
        Some("mock") => ProviderKind::Mock,
        Some("http") => ProviderKind::Http,
        Some(other) => return Err(CliError::Config(format!("--provider: unknown provider {other:?}"))),
    };
    let settings = &cfg.summarize;
    let template = match &settings.template {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("template {}: {e}", p.display())))?,
        None => DEFAULT_TEMPLATE.to_string(),
    };
    let client: Box<dyn TextProvider + Sync> = match kind {
        ProviderKind::Mock => Box::new(MockProvider),
        ProviderKind::Http => Box::new(HttpProvider::from_env(Duration::from_secs(settings.timeout_secs))?),
    };
    let backoff = kind == ProviderKind::Http;

    let loaded = load_clean(cfg)?;
    let requests = loaded
        .segments
        .iter()
        .map(|s| SummaryRequest::new(s, &template, client.name(), settings.timeout_secs, settings.max_retries))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let failures = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.concurrency)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    let mut responses: Vec<_> = pool.install(|| {
        requests
            .par_iter()
            .filter_map(|req| {
                let on_retry = |attempt: u32, failure: &_| {
                    eprintln!("{}: retry {attempt} after {failure}", req.key);
                    if backoff {
                        std::thread::sleep(Duration::from_millis(250 << attempt.min(5)));
                    }
                };
                match summarize_with(req, client.as_ref(), on_retry) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        eprintln!("{}: {e}", req.key);
                        failures.fetch_add(1, Ordering::Relaxed);
                        None
                    }
                }
            })
            .collect()
    });
    responses.sort_by(|a, b| a.key.cmp(&b.key));
    write_jsonl(&cfg.out.join(SUMMARIES_FILE), &responses)?;
    let failed = failures.into_inner();
    println!("{} summaries -> {}", responses.len(), cfg.out.join(SUMMARIES_FILE).display());
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} segment(s) could not be summarized")));
    }
    Ok(())
}

pub fn cmd_report(cfg: &RunConfig, results: Option<&std::path::Path>) -> Result<()> {
    let path = results.map(PathBuf::from).unwrap_or_else(|| cfg.out.join(RESULTS_FILE));
    if !path.exists() {
        return Err(CliError::Config(format!("results file {} does not exist; run evaluate first", path.display())));
    }
    let table: ReportTable = read_json(&path)?;
    write_report(&cfg.out, &table)?;
    print!("{}", table.to_text());
    Ok(())
}
