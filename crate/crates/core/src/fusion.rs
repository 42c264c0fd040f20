//! Mid-fusion of logs and discourse.
//!
//! Raw events become cognitive actions with a task context, a session is cut
//! wherever the context changes, and utterances are attached to the segment
//! whose half-open time range contains their start.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{
    ActionEvent, LabelRecord, Millis, RawAction, RecordError, SessionBundle, SsrlCode, Utterance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CognitiveAction {
    Build,
    Adjust,
    Draft,
    Execute,
    Visualize,
}

impl CognitiveAction {
    pub const ALL: [CognitiveAction; 5] = [
        CognitiveAction::Build,
        CognitiveAction::Adjust,
        CognitiveAction::Draft,
        CognitiveAction::Execute,
        CognitiveAction::Visualize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CognitiveAction::Build => "BUILD",
            CognitiveAction::Adjust => "ADJUST",
            CognitiveAction::Draft => "DRAFT",
            CognitiveAction::Execute => "EXECUTE",
            CognitiveAction::Visualize => "VISUALIZE",
        }
    }

    /// Whether the action touches a model region and so defines a context.
    pub fn bears_context(self) -> bool {
        matches!(self, CognitiveAction::Build | CognitiveAction::Adjust | CognitiveAction::Draft)
    }
}

impl fmt::Display for CognitiveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The part of the computational model being worked on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskContext {
    InitVars,
    UpdateEachStep,
    UpdateUnderCond,
    Conditionals,
}

impl TaskContext {
    pub const ALL: [TaskContext; 4] = [
        TaskContext::InitVars,
        TaskContext::UpdateEachStep,
        TaskContext::UpdateUnderCond,
        TaskContext::Conditionals,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskContext::InitVars => "INIT_VARS",
            TaskContext::UpdateEachStep => "UPDATE_EACH_STEP",
            TaskContext::UpdateUnderCond => "UPDATE_UNDER_COND",
            TaskContext::Conditionals => "CONDITIONALS",
        }
    }

    /// Long name used in prompts.
    pub fn description(self) -> &'static str {
        match self {
            TaskContext::InitVars => "Initializing Variables",
            TaskContext::UpdateEachStep => "Updating Variables, Each Simulation Step",
            TaskContext::UpdateUnderCond => "Updating Variables, Under Conditions",
            TaskContext::Conditionals => "Conditional Statements",
        }
    }
}

impl fmt::Display for TaskContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskContext {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskContext::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| RecordError::Invalid(format!("unknown task context {s:?}")))
    }
}

/// Region key to task context.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextMap {
    regions: BTreeMap<String, TaskContext>,
}

impl ContextMap {
    pub fn new(regions: BTreeMap<String, TaskContext>) -> Self {
        ContextMap { regions }
    }

    pub fn insert(&mut self, region: impl Into<String>, context: TaskContext) {
        self.regions.insert(region.into(), context);
    }

    pub fn get(&self, region: &str) -> Option<TaskContext> {
        self.regions.get(region).copied()
    }

    pub fn regions(&self) -> impl Iterator<Item = (&str, TaskContext)> {
        self.regions.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Region keys used in `actions` that the map does not cover.
    pub fn missing_regions<'a>(&self, actions: impl IntoIterator<Item = &'a ActionEvent>) -> BTreeSet<String> {
        actions
            .into_iter()
            .filter(|a| a.raw_action.needs_region())
            .filter_map(|a| a.region.as_deref())
            .filter(|r| !self.regions.contains_key(*r))
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedAction {
    pub t: Millis,
    pub action: CognitiveAction,
    pub context: TaskContext,
    pub block_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub session_id: String,
    pub index: usize,
    pub context: TaskContext,
    pub t_start: Millis,
    pub t_end: Millis,
    pub actions: Vec<MappedAction>,
    pub utterances: Vec<Utterance>,
    pub label: Option<SsrlCode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FusionError {
    #[error("region {0:?} is not in the context map")]
    UnmappedRegion(String),
    #[error("{raw} event at t={t} has no region")]
    MissingRegion { raw: &'static str, t: Millis },
    #[error("session {0:?} has no actions")]
    EmptySession(String),
    #[error("session {0:?} has no region-bearing action to take a context from")]
    NoContextAction(String),
    #[error("label for {session_id:?} segment {index} is out of range ({count} segments)")]
    IndexOutOfRange { session_id: String, index: usize, count: usize },
    #[error("duplicate label for {session_id:?} segment {index}")]
    DuplicateLabel { session_id: String, index: usize },
}

/// Cognitive action for a raw event kind.
///
/// `remove` of an unconnected block counts as ADJUST; drafting covers only
/// moving or editing unattached blocks.
pub fn classify(raw: RawAction, connected: bool) -> CognitiveAction {
    match raw {
        RawAction::Add => CognitiveAction::Build,
        RawAction::Move | RawAction::Edit if !connected => CognitiveAction::Draft,
        RawAction::Move | RawAction::Edit | RawAction::Remove => CognitiveAction::Adjust,
        RawAction::Run => CognitiveAction::Execute,
        RawAction::OpenGraph | RawAction::OpenTable => CognitiveAction::Visualize,
    }
}

/// Maps one event. Runs and inspections take `inherited` as their context;
/// every other event reads its context from the region map.
pub fn map_action(
    event: &ActionEvent,
    cmap: &ContextMap,
    inherited: Option<TaskContext>,
) -> Result<MappedAction, FusionError> {
    let action = classify(event.raw_action, event.connected);
    let context = if action.bears_context() {
        let region = event
            .region
            .as_deref()
            .ok_or(FusionError::MissingRegion { raw: event.raw_action.as_str(), t: event.t })?;
        cmap.get(region).ok_or_else(|| FusionError::UnmappedRegion(region.to_string()))?
    } else {
        inherited.ok_or_else(|| FusionError::NoContextAction(event.session_id.clone()))?
    };
    Ok(MappedAction { t: event.t, action, context, block_id: event.block_id.clone() })
}

/// Maps a session's time-ordered events.
///
/// Runs and inspections inherit the context of the most recent region-bearing
/// action; those before any such action take the first one that follows.
pub fn map_session_actions(
    session_id: &str,
    events: &[ActionEvent],
    cmap: &ContextMap,
) -> Result<Vec<MappedAction>, FusionError> {
    let mut first_context = None;
    for e in events {
        if classify(e.raw_action, e.connected).bears_context() {
            first_context = Some(map_action(e, cmap, None)?.context);
            break;
        }
    }
    let Some(mut current) = first_context else {
        return Err(FusionError::NoContextAction(session_id.to_string()));
    };
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        let mapped = map_action(e, cmap, Some(current))?;
        current = mapped.context;
        out.push(mapped);
    }
    Ok(out)
}

/// Cuts a session into maximal same-context runs of actions.
///
/// Each segment starts at its first action; it ends where the next begins,
/// and the last one ends at the later of its last action and the last
/// utterance end. Utterances are not attached here.
pub fn segment_session(bundle: &SessionBundle, cmap: &ContextMap) -> Result<Vec<Segment>, FusionError> {
    if bundle.actions.is_empty() {
        return Err(FusionError::EmptySession(bundle.session_id.clone()));
    }
    let mapped = map_session_actions(&bundle.session_id, &bundle.actions, cmap)?;

    let mut segments: Vec<Segment> = Vec::new();
    for m in mapped {
        match segments.last_mut() {
            Some(seg) if seg.context == m.context => seg.actions.push(m),
            _ => segments.push(Segment {
                session_id: bundle.session_id.clone(),
                index: segments.len(),
                context: m.context,
                t_start: m.t,
                t_end: m.t,
                actions: alloc::vec![m],
                utterances: Vec::new(),
                label: None,
            }),
        }
    }

    for i in 1..segments.len() {
        segments[i - 1].t_end = segments[i].t_start;
    }
    let last_action = bundle.actions.last().map_or(0, |a| a.t);
    let last_utt = bundle.utterances.iter().map(|u| u.t_end).max().unwrap_or(0);
    if let Some(last) = segments.last_mut() {
        last.t_end = last_action.max(last_utt);
    }
    Ok(segments)
}

/// Index of the segment owning time `t`: the last one starting at or before
/// `t`, or segment 0 when `t` precedes them all.
fn owning_segment(segments: &[Segment], t: Millis) -> usize {
    segments.partition_point(|s| s.t_start <= t).saturating_sub(1)
}

/// Attaches every utterance to exactly one segment of the same session.
pub fn align_utterances(segments: &mut [Segment], utterances: &[Utterance]) {
    if segments.is_empty() {
        return;
    }
    for u in utterances {
        let k = owning_segment(segments, u.t_start);
        segments[k].utterances.push(u.clone());
    }
}

/// Segments a bundle and aligns its utterances.
pub fn fuse_session(bundle: &SessionBundle, cmap: &ContextMap) -> Result<Vec<Segment>, FusionError> {
    let mut segments = segment_session(bundle, cmap)?;
    align_utterances(&mut segments, &bundle.utterances);
    Ok(segments)
}

/// Keys of segments left without a label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelCoverage {
    pub labeled: usize,
    pub unlabeled: Vec<(String, usize)>,
}

/// Assigns codes to segments. `segments` may span several sessions.
/// Segments without a label stay `None` and are reported back.
pub fn attach_labels(segments: &mut [Segment], labels: &[LabelRecord]) -> Result<LabelCoverage, FusionError> {
    let mut positions: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (pos, s) in segments.iter().enumerate() {
        positions.insert((s.session_id.as_str(), s.index), pos);
        *counts.entry(s.session_id.as_str()).or_default() += 1;
    }

    let mut assigned: Vec<Option<SsrlCode>> = alloc::vec![None; segments.len()];
    for l in labels {
        let Some(&pos) = positions.get(&(l.session_id.as_str(), l.segment_index)) else {
            return Err(FusionError::IndexOutOfRange {
                session_id: l.session_id.clone(),
                index: l.segment_index,
                count: counts.get(l.session_id.as_str()).copied().unwrap_or(0),
            });
        };
        if assigned[pos].is_some() {
            return Err(FusionError::DuplicateLabel {
                session_id: l.session_id.clone(),
                index: l.segment_index,
            });
        }
        assigned[pos] = Some(l.code);
    }

    let mut coverage = LabelCoverage::default();
    for (seg, code) in segments.iter_mut().zip(assigned) {
        seg.label = code;
        match code {
            Some(_) => coverage.labeled += 1,
            None => coverage.unlabeled.push((seg.session_id.clone(), seg.index)),
        }
    }
    Ok(coverage)
}
