//! Input records and per-session assembly.
//!
//! Line-level parsing lives with the file formats in the `ssrl` crate; this
//! module owns the record types, their invariants, and the grouping of parsed
//! records into [`SessionBundle`]s.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since the start of a session.
pub type Millis = u64;

/// One diarized transcript line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub session_id: String,
    pub speaker_id: String,
    pub t_start: Millis,
    pub t_end: Millis,
    pub text: String,
}

impl Utterance {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.t_end < self.t_start {
            return Err(RecordError::Invalid(format!(
                "t_end {} precedes t_start {}",
                self.t_end, self.t_start
            )));
        }
        if self.text.trim().is_empty() {
            return Err(RecordError::Invalid("text is empty".to_string()));
        }
        if self.session_id.is_empty() {
            return Err(RecordError::Invalid("session_id is empty".to_string()));
        }
        Ok(())
    }
}

/// Raw event kinds recorded by the block environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawAction {
    Add,
    Remove,
    Edit,
    Move,
    Run,
    OpenGraph,
    OpenTable,
}

impl RawAction {
    pub const ALL: [RawAction; 7] = [
        RawAction::Add,
        RawAction::Remove,
        RawAction::Edit,
        RawAction::Move,
        RawAction::Run,
        RawAction::OpenGraph,
        RawAction::OpenTable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RawAction::Add => "add",
            RawAction::Remove => "remove",
            RawAction::Edit => "edit",
            RawAction::Move => "move",
            RawAction::Run => "run",
            RawAction::OpenGraph => "open_graph",
            RawAction::OpenTable => "open_table",
        }
    }

    /// Runs and graph/table inspections do not touch a model region.
    pub fn needs_region(self) -> bool {
        !matches!(self, RawAction::Run | RawAction::OpenGraph | RawAction::OpenTable)
    }
}

impl FromStr for RawAction {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RawAction::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| RecordError::Invalid(format!("unknown raw_action {s:?}")))
    }
}

/// One raw environment log event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub session_id: String,
    pub t: Millis,
    pub block_id: String,
    pub raw_action: RawAction,
    pub connected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
}

impl ActionEvent {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.session_id.is_empty() {
            return Err(RecordError::Invalid("session_id is empty".to_string()));
        }
        if self.raw_action.needs_region() && self.region.as_deref().is_none_or(str::is_empty) {
            return Err(RecordError::MissingField("region"));
        }
        Ok(())
    }
}

/// The seven SSRL codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SsrlCode {
    Planning,
    Enacting,
    Reflecting,
    EnactingPlanning,
    EnactingMonitoring,
    Assistance,
    OffTopic,
}

impl SsrlCode {
    pub const ALL: [SsrlCode; 7] = [
        SsrlCode::Planning,
        SsrlCode::Enacting,
        SsrlCode::Reflecting,
        SsrlCode::EnactingPlanning,
        SsrlCode::EnactingMonitoring,
        SsrlCode::Assistance,
        SsrlCode::OffTopic,
    ];

    /// Wire name, as used in `labels.jsonl`.
    pub fn as_str(self) -> &'static str {
        match self {
            SsrlCode::Planning => "PLANNING",
            SsrlCode::Enacting => "ENACTING",
            SsrlCode::Reflecting => "REFLECTING",
            SsrlCode::EnactingPlanning => "ENACTING_PLANNING",
            SsrlCode::EnactingMonitoring => "ENACTING_MONITORING",
            SsrlCode::Assistance => "ASSISTANCE",
            SsrlCode::OffTopic => "OFF_TOPIC",
        }
    }

    /// Human-facing name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            SsrlCode::Planning => "PLANNING",
            SsrlCode::Enacting => "ENACTING",
            SsrlCode::Reflecting => "REFLECTING",
            SsrlCode::EnactingPlanning => "ENACTING & PLANNING",
            SsrlCode::EnactingMonitoring => "ENACTING & MONITORING",
            SsrlCode::Assistance => "ASSISTANCE",
            SsrlCode::OffTopic => "OFF-TOPIC",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SsrlCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SsrlCode {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', ' '], "_");
        SsrlCode::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| RecordError::Invalid(format!("unknown SSRL code {s:?}")))
    }
}

/// The code assigned to one segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub session_id: String,
    pub segment_index: usize,
    pub code: SsrlCode,
}

/// A record violation, before a line number is attached.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("negative timestamp in `{0}`")]
    NegativeTimestamp(&'static str),
    #[error("{0}")]
    Invalid(String),
}

/// Parse failure of an input file; always reports the earliest offending line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: missing field `{name}`")]
    MissingField { line: usize, name: &'static str },
    #[error("line {line}: negative timestamp in `{field}`")]
    NegativeTimestamp { line: usize, field: &'static str },
}

impl IngestError {
    pub fn at(line: usize, err: RecordError) -> Self {
        match err {
            RecordError::MissingField(name) => IngestError::MissingField { line, name },
            RecordError::NegativeTimestamp(field) => IngestError::NegativeTimestamp { line, field },
            RecordError::Invalid(reason) => IngestError::MalformedLine { line, reason },
        }
    }

    pub fn line(&self) -> usize {
        match self {
            IngestError::MalformedLine { line, .. }
            | IngestError::MissingField { line, .. }
            | IngestError::NegativeTimestamp { line, .. } => *line,
        }
    }
}

/// A parsed record with the 1-based line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sourced<T> {
    pub line: usize,
    pub record: T,
}

impl<T> Sourced<T> {
    /// Numbers records 1.. in the order given.
    pub fn number(records: Vec<T>) -> Vec<Sourced<T>> {
        records
            .into_iter()
            .enumerate()
            .map(|(i, record)| Sourced { line: i + 1, record })
            .collect()
    }
}

/// Where a validation finding originated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Transcripts,
    Actions,
    Labels,
    ContextMap,
    Fusion,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Transcripts => "transcripts",
            Source::Actions => "actions",
            Source::Labels => "labels",
            Source::ContextMap => "context_map",
            Source::Fusion => "fusion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub source: Source,
    pub line: Option<usize>,
    pub session_id: Option<String>,
    pub message: String,
}

/// Warnings and errors collected while validating inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub warnings: Vec<Finding>,
    pub errors: Vec<Finding>,
}

impl ValidationReport {
    pub fn warn(&mut self, source: Source, line: Option<usize>, session: Option<&str>, message: String) {
        self.warnings.push(Finding {
            source,
            line,
            session_id: session.map(str::to_string),
            message,
        });
    }

    pub fn error(&mut self, source: Source, line: Option<usize>, session: Option<&str>, message: String) {
        self.errors.push(Finding {
            source,
            line,
            session_id: session.map(str::to_string),
            message,
        });
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.warnings.extend(other.warnings);
        self.errors.extend(other.errors);
    }
}

/// All records of one session, each list sorted by time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionBundle {
    pub session_id: String,
    pub utterances: Vec<Utterance>,
    pub actions: Vec<ActionEvent>,
}

/// Groups parsed records by session.
///
/// Sorting is stable, so equal timestamps keep file order. Exact duplicate
/// records are dropped with a warning that names both lines.
pub fn assemble_sessions(
    utterances: Vec<Sourced<Utterance>>,
    actions: Vec<Sourced<ActionEvent>>,
) -> (Vec<SessionBundle>, ValidationReport) {
    let mut report = ValidationReport::default();
    let mut by_session: BTreeMap<String, (Vec<Sourced<Utterance>>, Vec<Sourced<ActionEvent>>)> =
        BTreeMap::new();
    for u in utterances {
        by_session.entry(u.record.session_id.clone()).or_default().0.push(u);
    }
    for a in actions {
        by_session.entry(a.record.session_id.clone()).or_default().1.push(a);
    }

    let mut bundles = Vec::with_capacity(by_session.len());
    for (session_id, (mut us, mut acts)) in by_session {
        us.sort_by_key(|u| u.record.t_start);
        acts.sort_by_key(|a| a.record.t);
        let us = dedup(us, Source::Transcripts, &session_id, &mut report);
        let acts = dedup(acts, Source::Actions, &session_id, &mut report);
        if acts.is_empty() {
            report.warn(
                Source::Actions,
                None,
                Some(&session_id),
                "session has utterances but no actions; it cannot be segmented".to_string(),
            );
        }
        bundles.push(SessionBundle { session_id, utterances: us, actions: acts });
    }
    (bundles, report)
}

/// Drops exact duplicates from a time-sorted list. Equal records share a
/// timestamp, so only the run of equal-time records needs checking.
fn dedup<T: PartialEq + Clone + HasTime>(
    sorted: Vec<Sourced<T>>,
    source: Source,
    session: &str,
    report: &mut ValidationReport,
) -> Vec<T> {
    let mut out: Vec<Sourced<T>> = Vec::with_capacity(sorted.len());
    let mut run_start = 0;
    for item in sorted {
        if out.last().is_none_or(|last| last.record.time() != item.record.time()) {
            run_start = out.len();
        }
        if let Some(first) = out[run_start..].iter().find(|o| o.record == item.record) {
            report.warn(
                source,
                Some(item.line),
                Some(session),
                format!("exact duplicate of line {}; dropped", first.line),
            );
            continue;
        }
        out.push(item);
    }
    out.into_iter().map(|s| s.record).collect()
}

trait HasTime {
    fn time(&self) -> Millis;
}

impl HasTime for Utterance {
    fn time(&self) -> Millis {
        self.t_start
    }
}

impl HasTime for ActionEvent {
    fn time(&self) -> Millis {
        self.t
    }
}
