//! The code × configuration grid on a worker pool, and its outputs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssrl_core::eval::{
    check_leakage, labeled_sessions, matrix_cells, plan_folds, run_cell, CellResult, EvalSettings, FoldPlan,
    FoldSummary,
};
use ssrl_core::features::{FeatureStore, SegmentKey};
use ssrl_core::metrics::ConfidenceInterval;
use ssrl_core::report::ReportTable;
use ssrl_core::seed;
use ssrl_core::{FeatureConfig, SsrlCode};

use crate::config::{EmbedderKind, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::{
    write_json, write_predictions_csv, write_text, MANIFEST_FILE, PREDICTIONS_FILE, REPORT_CSV_FILE, REPORT_TEXT_FILE,
    RESULTS_FILE,
};
use crate::pipeline::{embedder, load_clean};

const MEAN_ROW_STREAM: u64 = 0x3ea7;

/// Runs every cell; the result order is the grid order whatever `jobs` is.
pub fn run_grid(
    store: &FeatureStore<'_>,
    plan: &FoldPlan,
    codes: &[SsrlCode],
    configs: &[FeatureConfig],
    settings: &EvalSettings,
    jobs: usize,
) -> Result<Vec<CellResult>> {
    let cells = matrix_cells(codes, configs, settings.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|&cell| {
                let r = run_cell(store, plan, cell, settings);
                match &r.outcome {
                    Ok(e) => eprintln!("{} {}: auc {:.4}", cell.code, cell.config, e.auc),
                    Err(e) => eprintln!("{} {}: n/a ({e})", cell.code, cell.config),
                }
                r
            })
            .collect()
    }))
}

pub fn report_table(results: &[CellResult], settings: &EvalSettings) -> ReportTable {
    ReportTable::from_results(results, settings.resamples, seed::mix(settings.seed, MEAN_ROW_STREAM))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub file_name: String,
    pub bytes: u64,
    pub fnv1a: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub code: SsrlCode,
    pub config: FeatureConfig,
    pub seed: u64,
    /// Report-cell tag when the cell failed.
    pub reason: Option<String>,
    pub error: Option<String>,
    pub auc: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
    pub folds: Vec<FoldSummary>,
    pub leakage_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub settings: EvalSettings,
    pub embedder: EmbedderKind,
    pub dim: usize,
    pub inputs: Vec<InputDigest>,
    pub segments: usize,
    pub labeled_segments: usize,
    pub fold_plan: FoldPlan,
    pub cells: Vec<CellRecord>,
}

fn digest(name: &str, path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputDigest {
        name: name.into(),
        file_name: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        bytes: bytes.len() as u64,
        fnv1a: format!("{:016x}", seed::fnv1a(&bytes)),
    })
}

pub struct Evaluation {
    pub manifest: Manifest,
    pub table: ReportTable,
}

/// Loads, evaluates, and writes the manifest, predictions, results and report,
/// in that order.
pub fn evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    let run_seed = cfg.require_seed()?;
    let settings = cfg.settings(run_seed);
    let loaded = load_clean(cfg)?;
    let provider = embedder(cfg)?;
    let store = FeatureStore::new(&loaded.segments, provider.as_ref()).map_err(|e| CliError::Data(e.to_string()))?;

    let sessions = labeled_sessions(&loaded.segments);
    let plan = plan_folds(&sessions, settings.outer_folds, settings.inner_folds, run_seed)
        .map_err(|e| CliError::Degenerate(format!("cannot plan folds: {e}")))?;
    let results = run_grid(&store, &plan, &cfg.codes, &cfg.configs, &settings, cfg.jobs)?;

    let labeled: Vec<SegmentKey> =
        store.labeled_rows().into_iter().map(|r| SegmentKey::of(store.segment(r))).collect();
    let cell_seeds = matrix_cells(&cfg.codes, &cfg.configs, run_seed);
    let cells: Vec<CellRecord> = results
        .iter()
        .zip(&cell_seeds)
        .map(|(r, spec)| match &r.outcome {
            Ok(e) => CellRecord {
                code: r.code,
                config: r.config,
                seed: spec.seed,
                reason: None,
                error: None,
                auc: Some(e.auc),
                ci: Some(e.ci),
                folds: e.folds.clone(),
                leakage_violations: check_leakage(&plan, e, &labeled).iter().map(ToString::to_string).collect(),
            },
            Err(err) => CellRecord {
                code: r.code,
                config: r.config,
                seed: spec.seed,
                reason: Some(err.reason().into()),
                error: Some(err.to_string()),
                auc: None,
                ci: None,
                folds: Vec::new(),
                leakage_violations: Vec::new(),
            },
        })
        .collect();

    let mut inputs = Vec::new();
    for name in ["transcripts", "actions", "labels", "context_map"] {
        inputs.push(digest(name, cfg.input(name)?)?);
    }
    if cfg.embedder == EmbedderKind::File {
        inputs.push(digest("embeddings", cfg.input("embeddings")?)?);
    }
    let manifest = Manifest {
        seed: run_seed,
        settings: settings.clone(),
        embedder: cfg.embedder,
        dim: store.dim(),
        inputs,
        segments: loaded.segments.len(),
        labeled_segments: labeled.len(),
        fold_plan: plan,
        cells,
    };
    write_json(&cfg.out.join(MANIFEST_FILE), &manifest)?;

    write_predictions_csv(
        &cfg.out.join(PREDICTIONS_FILE),
        results.iter().filter_map(|r| r.outcome.as_ref().ok().map(|e| (r.code, r.config, e.predictions.as_slice()))),
    )?;
    let table = report_table(&results, &settings);
    write_json(&cfg.out.join(RESULTS_FILE), &table)?;
    write_report(&cfg.out, &table)?;

    let violations: usize = manifest.cells.iter().map(|c| c.leakage_violations.len()).sum();
    if violations > 0 {
        return Err(CliError::Runtime(format!("{violations} leakage violation(s); see {MANIFEST_FILE}")));
    }
    if manifest.cells.iter().all(|c| c.auc.is_none()) {
        return Err(CliError::Degenerate("every cell of the grid failed; see the manifest for reasons".into()));
    }
    Ok(Evaluation { manifest, table })
}

/// `report.csv` and `report.txt` under `out`.
pub fn write_report(out: &Path, table: &ReportTable) -> Result<()> {
    write_text(&out.join(REPORT_CSV_FILE), &table.to_csv())?;
    write_text(&out.join(REPORT_TEXT_FILE), &table.to_text())
}
