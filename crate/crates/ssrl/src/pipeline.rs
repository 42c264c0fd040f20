//! Inputs to labeled segments, collecting every finding on the way.

use std::fmt::Write;

use ssrl_core::features::{EmbeddingProvider, HashingEmbedder, DEFAULT_DIM};
use ssrl_core::fusion::{attach_labels, fuse_session, ContextMap};
use ssrl_core::ingestion::{assemble_sessions, Source, Sourced, ValidationReport};
use ssrl_core::{ActionEvent, LabelRecord, Segment, Utterance};

use crate::config::{EmbedderKind, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::{read_context_map, read_embeddings, read_records, LineRecord, ReadError};

pub struct Loaded {
    pub segments: Vec<Segment>,
    pub report: ValidationReport,
}

fn read_or_report<T: LineRecord>(cfg: &RunConfig, name: &str, source: Source, report: &mut ValidationReport) -> Result<Vec<Sourced<T>>> {
    let path = cfg.input(name)?;
    match read_records(path) {
        Ok(records) => Ok(records),
        Err(ReadError::Io(e)) => Err(CliError::io(path, e)),
        Err(ReadError::Ingest(e)) => {
            report.error(source, Some(e.line()), None, e.to_string());
            Ok(Vec::new())
        }
    }
}

/// Parses, assembles, fuses and labels. Problems land in the report; only
/// missing files and IO failures are returned as errors.
pub fn load(cfg: &RunConfig) -> Result<Loaded> {
    let mut report = ValidationReport::default();
    let utterances: Vec<Sourced<Utterance>> = read_or_report(cfg, "transcripts", Source::Transcripts, &mut report)?;
    let actions: Vec<Sourced<ActionEvent>> = read_or_report(cfg, "actions", Source::Actions, &mut report)?;
    let labels: Vec<Sourced<LabelRecord>> = read_or_report(cfg, "labels", Source::Labels, &mut report)?;
    let cmap = match read_context_map(cfg.input("context_map")?) {
        Ok(m) => m,
        Err(CliError::Data(msg)) => {
            report.error(Source::ContextMap, None, None, msg);
            ContextMap::default()
        }
        Err(e) => return Err(e),
    };

    for region in cmap.missing_regions(actions.iter().map(|a| &a.record)) {
        report.error(Source::ContextMap, None, None, format!("region {region:?} is not mapped to a task context"));
    }

    let (bundles, assembly) = assemble_sessions(utterances, actions);
    report.merge(assembly);

    let mut segments = Vec::new();
    for bundle in bundles.iter().filter(|b| !b.actions.is_empty()) {
        match fuse_session(bundle, &cmap) {
            Ok(s) => segments.extend(s),
            Err(e) => report.error(Source::Fusion, None, Some(&bundle.session_id), e.to_string()),
        }
    }

    let labels: Vec<LabelRecord> = labels.into_iter().map(|l| l.record).collect();
    match attach_labels(&mut segments, &labels) {
        Ok(coverage) => {
            for (session, index) in coverage.unlabeled {
                report.warn(Source::Labels, None, Some(&session), format!("segment {index} has no label"));
            }
        }
        Err(e) => report.error(Source::Labels, None, None, e.to_string()),
    }
    Ok(Loaded { segments, report })
}

/// Like [`load`] but fails with a data error unless validation is clean.
pub fn load_clean(cfg: &RunConfig) -> Result<Loaded> {
    let loaded = load(cfg)?;
    if !loaded.report.is_clean() {
        let first = &loaded.report.errors[0];
        return Err(CliError::Data(format!(
            "input validation found {} error(s); first: {}",
            loaded.report.errors.len(),
            finding_line("error", first)
        )));
    }
    Ok(loaded)
}

fn finding_line(level: &str, f: &ssrl_core::ingestion::Finding) -> String {
    let mut s = format!("{level} {}", f.source.as_str());
    if let Some(line) = f.line {
        let _ = write!(s, " line {line}");
    }
    if let Some(session) = &f.session_id {
        let _ = write!(s, " session {session}");
    }
    let _ = write!(s, ": {}", f.message);
    s
}

/// Plain-text report: one finding per line, errors first, then a count line.
pub fn render_report(report: &ValidationReport) -> String {
    let mut out = String::new();
    for f in &report.errors {
        let _ = writeln!(out, "{}", finding_line("error", f));
    }
    for f in &report.warnings {
        let _ = writeln!(out, "{}", finding_line("warning", f));
    }
    let _ = writeln!(out, "{} error(s), {} warning(s)", report.errors.len(), report.warnings.len());
    out
}

pub fn embedder(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider + Sync>> {
    Ok(match cfg.embedder {
        EmbedderKind::Hashing => Box::new(HashingEmbedder::new(cfg.dim.unwrap_or(DEFAULT_DIM))),
        EmbedderKind::File => Box::new(read_embeddings(cfg.input("embeddings")?, cfg.dim)?),
    })
}
