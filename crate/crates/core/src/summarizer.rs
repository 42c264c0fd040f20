//! Segment summaries from a pluggable text-generation provider.
//!
//! Summaries are for people reading the segments; nothing here feeds the
//! feature matrices.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::SegmentKey;
use crate::fusion::Segment;
use crate::ingestion::Millis;
use crate::seed::fnv1a;

pub const CONTEXT_SLOT: &str = "{context}";
pub const UTTERANCES_SLOT: &str = "{utterances}";
pub const ACTIONS_SLOT: &str = "{actions}";

pub const DEFAULT_TEMPLATE: &str = "\
Two students are building a computational model together in a block-based \
environment. In this segment they are working on: {context}.

Their conversation, in time order:
{utterances}

Their actions in the environment, in time order:
{actions}

Summarize in two or three sentences what the pair discussed and did in this \
segment, and how their talk relates to their actions.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SummarizerError {
    #[error("template lacks the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("provider timed out on all {attempts} attempts")]
    ProviderTimeout { attempts: u32 },
    #[error("provider error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    ProviderError { status: Option<u16>, message: String },
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: String },
}

fn clock(t: Millis) -> String {
    let s = t / 1000;
    format!("{:02}:{:02}", s / 60, s % 60)
}

fn utterance_lines(segment: &Segment) -> String {
    let mut out = String::new();
    for u in &segment.utterances {
        let _ = writeln!(out, "[{}] {}: {}", clock(u.t_start), u.speaker_id, u.text.trim());
    }
    if out.is_empty() {
        out.push_str("(no talk recorded)\n");
    }
    out.truncate(out.trim_end().len());
    out
}

fn action_lines(segment: &Segment) -> String {
    let mut out = String::new();
    for a in &segment.actions {
        let _ = writeln!(out, "[{}] {} {}", clock(a.t), a.action, a.block_id);
    }
    out.truncate(out.trim_end().len());
    out
}

/// Fills the template's three placeholders from `segment`.
pub fn render_prompt(segment: &Segment, template: &str) -> Result<String, SummarizerError> {
    for slot in [CONTEXT_SLOT, UTTERANCES_SLOT, ACTIONS_SLOT] {
        if !template.contains(slot) {
            return Err(SummarizerError::MissingPlaceholder(slot));
        }
    }
    Ok(template
        .replace(CONTEXT_SLOT, segment.context.description())
        .replace(UTTERANCES_SLOT, &utterance_lines(segment))
        .replace(ACTIONS_SLOT, &action_lines(segment)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRequest {
    pub key: SegmentKey,
    pub context: String,
    pub first_utterance: Option<String>,
    pub action_counts: BTreeMap<String, usize>,
    pub prompt: String,
    pub provider: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl SummaryRequest {
    pub fn new(
        segment: &Segment,
        template: &str,
        provider: &str,
        timeout_secs: u64,
        max_retries: u32,
    ) -> Result<Self, SummarizerError> {
        let mut action_counts = BTreeMap::new();
        for a in &segment.actions {
            *action_counts.entry(a.action.as_str().to_string()).or_insert(0) += 1;
        }
        Ok(SummaryRequest {
            key: SegmentKey::of(segment),
            context: segment.context.as_str().into(),
            first_utterance: segment.utterances.first().map(|u| u.text.trim().to_string()),
            action_counts,
            prompt: render_prompt(segment, template)?,
            provider: provider.into(),
            timeout_secs,
            max_retries,
        })
    }
}

/// What a provider returned for one call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProviderReply {
    pub text: String,
    pub latency_ms: Option<u64>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderFailure {
    Timeout,
    /// Connection reset, overload, and similar; worth retrying.
    Transient(String),
    Status(u16),
}

impl ProviderFailure {
    fn retryable(&self) -> bool {
        match self {
            ProviderFailure::Timeout | ProviderFailure::Transient(_) => true,
            ProviderFailure::Status(s) => *s == 429 || *s >= 500,
        }
    }
}

impl core::fmt::Display for ProviderFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ProviderFailure::Timeout => f.write_str("timeout"),
            ProviderFailure::Transient(m) => write!(f, "transient failure: {m}"),
            ProviderFailure::Status(s) => write!(f, "status {s}"),
        }
    }
}

/// Text in, text out.
pub trait TextProvider {
    fn name(&self) -> &str;
    fn complete(&self, request: &SummaryRequest) -> Result<ProviderReply, ProviderFailure>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryResponse {
    pub key: SegmentKey,
    pub summary: String,
    pub provider: String,
    /// Failed attempts before the one that succeeded.
    pub retries: u32,
    pub latency_ms: Option<u64>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

pub fn summarize(request: &SummaryRequest, provider: &dyn TextProvider) -> Result<SummaryResponse, SummarizerError> {
    summarize_with(request, provider, |_, _| {})
}

/// Like [`summarize`], calling `on_retry(attempt, failure)` before each
/// retry so callers can log and back off.
pub fn summarize_with(
    request: &SummaryRequest,
    provider: &dyn TextProvider,
    mut on_retry: impl FnMut(u32, &ProviderFailure),
) -> Result<SummaryResponse, SummarizerError> {
    let attempts = request.max_retries + 1;
    let mut failures = Vec::new();
    for attempt in 0..attempts {
        match provider.complete(request) {
            Ok(reply) if reply.text.trim().is_empty() => {
                return Err(SummarizerError::ProviderError { status: None, message: "empty response body".into() });
            }
            Ok(reply) => {
                return Ok(SummaryResponse {
                    key: request.key.clone(),
                    summary: reply.text.trim().into(),
                    provider: provider.name().into(),
                    retries: attempt,
                    latency_ms: reply.latency_ms,
                    prompt_tokens: reply.prompt_tokens,
                    completion_tokens: reply.completion_tokens,
                });
            }
            Err(ProviderFailure::Status(s)) if !ProviderFailure::Status(s).retryable() => {
                return Err(SummarizerError::ProviderError { status: Some(s), message: format!("status {s}") });
            }
            Err(failure) => {
                if attempt + 1 < attempts {
                    on_retry(attempt + 1, &failure);
                }
                failures.push(failure);
            }
        }
    }
    if failures.iter().all(|f| *f == ProviderFailure::Timeout) {
        return Err(SummarizerError::ProviderTimeout { attempts });
    }
    let last = failures.last().map(|f| f.to_string()).unwrap_or_default();
    Err(SummarizerError::ExhaustedRetries { attempts, last })
}

/// Offline provider: a fixed digest of the request.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

impl TextProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &SummaryRequest) -> Result<ProviderReply, ProviderFailure> {
        let opening = request.first_utterance.as_deref().unwrap_or("no talk");
        let total: usize = request.action_counts.values().sum();
        let counts: Vec<String> = request.action_counts.iter().map(|(a, n)| format!("{a} x{n}")).collect();
        let text = format!(
            "{} segment opening with \"{}\"; {} action{} ({}); digest {:016x}",
            request.context,
            opening,
            total,
            if total == 1 { "" } else { "s" },
            counts.join(", "),
            fnv1a(request.prompt.as_bytes()),
        );
        Ok(ProviderReply { text, ..ProviderReply::default() })
    }
}
