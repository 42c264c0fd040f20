//! Detection pipeline for socially shared regulation of learning (SSRL) in
//! collaborative block-based modeling sessions.
//!
//! The crate is `no_std` (it only needs `alloc`) and carries every pure part
//! of the pipeline:
//!
//! * [`ingestion`]: transcript, action-log and label records, assembled into
//!   per-session bundles.
//! * [`fusion`]: raw events mapped to cognitive actions and task contexts,
//!   sessions cut into same-context segments, utterances aligned by time.
//! * [`features`]: segment embeddings, ±2 context windows, action n-grams,
//!   fold-local preprocessing.
//! * [`nn`]: two-hidden-layer feed-forward binary classifier trained with Adam.
//! * [`eval`]: nested group-wise cross-validation with randomized search.
//! * [`metrics`]: ROC AUC, bootstrap intervals, Cohen's kappa.
//! * [`synth`]: synthetic sessions with planted modality-specific signal.
//! * [`summarizer`]: prompt rendering and retrying provider client.
//! * [`report`]: the per-code, per-configuration AUC table.
//!
//! File formats, HTTP and the command line live in the `ssrl` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod eval;
pub mod features;
pub mod fusion;
pub mod ingestion;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod seed;
pub mod summarizer;
pub mod synth;

pub use features::FeatureConfig;
pub use fusion::{CognitiveAction, Segment, TaskContext};
pub use ingestion::{ActionEvent, LabelRecord, RawAction, SessionBundle, SsrlCode, Utterance};
