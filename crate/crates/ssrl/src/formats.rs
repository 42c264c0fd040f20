//! On-disk formats: JSON Lines inputs and outputs, the context map, and CSV
//! exports.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use ssrl_core::eval::PooledPrediction;
use ssrl_core::features::{column_names, FeatureMatrix, PrecomputedEmbeddings, SegmentKey};
use ssrl_core::fusion::ContextMap;
use ssrl_core::ingestion::{IngestError, RecordError, Sourced};
use ssrl_core::{ActionEvent, FeatureConfig, LabelRecord, SsrlCode, Utterance};

use crate::error::{CliError, Result};

pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const ACTIONS_FILE: &str = "actions.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const CONTEXT_MAP_FILE: &str = "context_map.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const SEGMENTS_FILE: &str = "segments.jsonl";
pub const SUMMARIES_FILE: &str = "summaries.jsonl";
pub const VALIDATION_FILE: &str = "validation_report.txt";
pub const MANIFEST_FILE: &str = "evaluation_manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const RESULTS_FILE: &str = "results.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";

/// A record type read from JSON Lines.
pub trait LineRecord: DeserializeOwned {
    const REQUIRED: &'static [&'static str];
    const TIMESTAMPS: &'static [&'static str];
    fn check(&self) -> Result<(), RecordError>;
}

impl LineRecord for Utterance {
    const REQUIRED: &'static [&'static str] = &["session_id", "speaker_id", "t_start", "t_end", "text"];
    const TIMESTAMPS: &'static [&'static str] = &["t_start", "t_end"];
    fn check(&self) -> Result<(), RecordError> {
        self.validate()
    }
}

impl LineRecord for ActionEvent {
    const REQUIRED: &'static [&'static str] = &["session_id", "t", "block_id", "raw_action", "connected"];
    const TIMESTAMPS: &'static [&'static str] = &["t"];
    fn check(&self) -> Result<(), RecordError> {
        self.validate()
    }
}

impl LineRecord for LabelRecord {
    const REQUIRED: &'static [&'static str] = &["session_id", "segment_index", "code"];
    const TIMESTAMPS: &'static [&'static str] = &[];
    fn check(&self) -> Result<(), RecordError> {
        if self.session_id.is_empty() {
            return Err(RecordError::Invalid("session_id is empty".into()));
        }
        Ok(())
    }
}

fn parse_line<T: LineRecord>(line: usize, text: &str) -> Result<T, IngestError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| IngestError::MalformedLine { line, reason: e.to_string() })?;
    let Value::Object(fields) = &value else {
        return Err(IngestError::MalformedLine { line, reason: "expected a JSON object".into() });
    };
    if let Some(name) = T::REQUIRED.iter().find(|f| fields.get(**f).is_none_or(Value::is_null)) {
        return Err(IngestError::MissingField { line, name });
    }
    if let Some(field) = T::TIMESTAMPS.iter().find(|f| fields[**f].as_f64().is_some_and(|t| t < 0.0)) {
        return Err(IngestError::NegativeTimestamp { line, field });
    }
    let record: T =
        serde_json::from_value(value).map_err(|e| IngestError::MalformedLine { line, reason: e.to_string() })?;
    record.check().map_err(|e| IngestError::at(line, e))?;
    Ok(record)
}

/// Parses JSON Lines text. Blank lines are skipped but still counted, so
/// errors name the line an editor would show.
pub fn parse_records<T: LineRecord>(text: &str) -> Result<Vec<Sourced<T>>, IngestError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        out.push(Sourced { line: i + 1, record: parse_line(i + 1, raw)? });
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("{0}")]
    Io(std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

pub fn read_records<T: LineRecord>(path: &Path) -> Result<Vec<Sourced<T>>, ReadError> {
    let text = fs::read_to_string(path).map_err(ReadError::Io)?;
    Ok(parse_records(&text)?)
}

fn data_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn read_context_map(path: &Path) -> Result<ContextMap> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| data_error(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingLine {
    key: String,
    vector: Vec<f64>,
}

/// Reads `{"key": "session:index", "vector": [...]}` lines. Without `dim` the
/// width of the first vector is used.
pub fn read_embeddings(path: &Path, dim: Option<usize>) -> Result<PrecomputedEmbeddings> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut store: Option<PrecomputedEmbeddings> = dim.map(PrecomputedEmbeddings::new);
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: EmbeddingLine =
            serde_json::from_str(raw).map_err(|e| data_error(path, format!("line {}: {e}", i + 1)))?;
        line.key.parse::<SegmentKey>().map_err(|e| data_error(path, format!("line {}: {e}", i + 1)))?;
        let store = store.get_or_insert_with(|| PrecomputedEmbeddings::new(line.vector.len()));
        store.insert(line.key, line.vector).map_err(|e| data_error(path, format!("line {}: {e}", i + 1)))?;
    }
    store.ok_or_else(|| data_error(path, "no embeddings and no dimension given"))
}

pub fn embedding_line(key: &SegmentKey, vector: &[f64]) -> String {
    serde_json::to_string(&EmbeddingLine { key: key.to_string(), vector: vector.to_vec() }).expect("serializable")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| CliError::Runtime(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| data_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// One row per labeled segment: key, label, then one column per descriptor.
pub fn write_feature_csv(path: &Path, matrix: &FeatureMatrix, labels: &[SsrlCode]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let header = ["key".to_string(), "code".to_string()].into_iter().chain(column_names(matrix));
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for ((key, row), code) in matrix.row_keys.iter().zip(matrix.rows()).zip(labels) {
        let fields = [key.to_string(), code.as_str().to_string()].into_iter().chain(row.iter().map(f64::to_string));
        w.write_record(fields).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_predictions_csv<'a>(
    path: &Path,
    cells: impl IntoIterator<Item = (SsrlCode, FeatureConfig, &'a [PooledPrediction])>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["code", "config", "session_id", "segment_index", "fold", "label", "score"])
        .map_err(|e| csv_error(path, e))?;
    for (code, config, predictions) in cells {
        for p in predictions {
            w.write_record([
                code.as_str(),
                config.as_str(),
                &p.key.session_id,
                &p.key.index.to_string(),
                &p.fold.to_string(),
                if p.label { "1" } else { "0" },
                &p.score.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
