//! Synthetic labeled sessions with planted text or log signal.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{CognitiveAction, ContextMap, TaskContext};
use crate::ingestion::{ActionEvent, LabelRecord, Millis, RawAction, SsrlCode, Utterance};
use crate::seed;

pub const BASE_RATE_BAND: (f64, f64) = (0.07, 0.22);
pub const ACTIONS_PER_SEGMENT: (usize, usize) = (2, 8);
pub const UTTERANCES_PER_SEGMENT: (usize, usize) = (1, 6);
const WORDS_PER_UTTERANCE: (usize, usize) = (4, 10);
const MARKERS_PER_UTTERANCE: usize = 3;
const ACTION_GAP_MS: (Millis, Millis) = (2_000, 12_000);
const UTTERANCE_LEN_MS: (Millis, Millis) = (800, 4_000);

const NEUTRAL_WORDS: &[&str] = &[
    "okay", "so", "the", "block", "value", "then", "we", "need", "this", "one", "here", "wait", "yeah", "right",
    "maybe", "it", "goes", "there", "and", "if", "what", "about", "now", "try", "that", "is", "see", "change",
    "number", "hmm", "look", "put", "under", "over", "again", "next", "variable", "set", "to", "in", "on", "with",
    "like", "thing", "just", "do", "you", "i",
];

/// Which modality carries a code's planted signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Signal {
    Text,
    Log,
    Both,
    #[serde(rename = "NONE")]
    Neutral,
}

impl Signal {
    fn text(self) -> bool {
        matches!(self, Signal::Text | Signal::Both)
    }

    fn log(self) -> bool {
        matches!(self, Signal::Log | Signal::Both)
    }
}

/// Words injected into positive segments of a text-signal code.
pub fn marker_words(code: SsrlCode) -> &'static [&'static str] {
    match code {
        SsrlCode::Planning => &["strategy", "goal", "plan", "approach"],
        SsrlCode::Enacting => &["dragging", "attach", "snap", "placing"],
        SsrlCode::Reflecting => &["realize", "learned", "understand", "because"],
        SsrlCode::EnactingPlanning => &["lets", "add", "afterwards", "build"],
        SsrlCode::EnactingMonitoring => &["check", "working", "correct", "broken"],
        SsrlCode::Assistance => &["help", "teacher", "stuck", "hint"],
        SsrlCode::OffTopic => &["lunch", "weekend", "movie", "pizza"],
    }
}

/// Action run inserted into positive segments of a log-signal code.
pub fn log_pattern(code: SsrlCode) -> &'static [CognitiveAction] {
    use CognitiveAction::*;
    match code {
        SsrlCode::Planning => &[Draft, Draft, Draft],
        SsrlCode::Enacting => &[Build, Build, Build],
        SsrlCode::Reflecting => &[Execute, Visualize, Visualize, Execute, Visualize, Visualize],
        SsrlCode::EnactingPlanning => &[Draft, Build, Draft],
        SsrlCode::EnactingMonitoring => &[Execute, Adjust, Execute],
        SsrlCode::Assistance => &[Visualize, Visualize, Visualize],
        SsrlCode::OffTopic => &[Visualize, Execute, Visualize, Execute],
    }
}

/// Region names written to the context map.
pub fn regions(context: TaskContext) -> &'static [&'static str] {
    match context {
        TaskContext::InitVars => &["green_flag", "init_vars"],
        TaskContext::UpdateEachStep => &["sim_step"],
        TaskContext::UpdateUnderCond => &["cond_update"],
        TaskContext::Conditionals => &["if_blocks"],
    }
}

pub fn context_map() -> ContextMap {
    let mut map = ContextMap::default();
    for c in TaskContext::ALL {
        for r in regions(c) {
            map.insert(*r, c);
        }
    }
    map
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_sessions: usize,
    pub target_segments: usize,
    pub action_mix: BTreeMap<CognitiveAction, f64>,
    pub context_mix: BTreeMap<TaskContext, f64>,
    pub base_rates: BTreeMap<SsrlCode, f64>,
    pub signals: BTreeMap<SsrlCode, Signal>,
    pub strength: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        use CognitiveAction::*;
        use SsrlCode::*;
        use TaskContext::*;
        let rest = [Planning, Enacting, EnactingPlanning, EnactingMonitoring, Assistance];
        SynthSpec {
            n_sessions: 24,
            target_segments: 394,
            action_mix: [(Adjust, 0.32), (Execute, 0.32), (Build, 0.18), (Visualize, 0.09), (Draft, 0.09)].into(),
            // rounded shares summing to 0.99, rescaled to a distribution
            context_mix: [(InitVars, 0.22), (UpdateEachStep, 0.17), (UpdateUnderCond, 0.26), (Conditionals, 0.34)]
                .map(|(c, p)| (c, p / 0.99))
                .into(),
            base_rates: [(OffTopic, 0.08), (Reflecting, 0.08)].into_iter().chain(rest.map(|c| (c, 0.168))).collect(),
            signals: [(OffTopic, Signal::Text), (Reflecting, Signal::Log)]
                .into_iter()
                .chain(rest.map(|c| (c, Signal::Neutral)))
                .collect(),
            strength: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("infeasible synthesis spec: {0}")]
    InfeasibleSpec(String),
}

fn infeasible(msg: String) -> SynthError {
    SynthError::InfeasibleSpec(msg)
}

fn check_distribution<K: core::fmt::Debug>(name: &str, dist: &BTreeMap<K, f64>) -> Result<(), SynthError> {
    if dist.values().any(|&p| !(p.is_finite() && p >= 0.0)) {
        return Err(infeasible(format!("{name} has a negative or non-finite entry")));
    }
    let total: f64 = dist.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(infeasible(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Probabilities for the first action of a segment, which must carry the
/// context, and for the remaining ones, chosen so the overall mix matches
/// `action_mix` when segments average `mean_len` actions.
fn action_schedule(
    mix: &BTreeMap<CognitiveAction, f64>,
    mean_len: f64,
) -> Result<(Vec<(CognitiveAction, f64)>, Vec<(CognitiveAction, f64)>), SynthError> {
    let p = |a: CognitiveAction| mix.get(&a).copied().unwrap_or(0.0);
    let bearing: f64 = CognitiveAction::ALL.iter().filter(|a| a.bears_context()).map(|&a| p(a)).sum();
    if bearing <= 0.0 {
        return Err(infeasible("action mix has no context-bearing action".into()));
    }
    let first: Vec<(CognitiveAction, f64)> = CognitiveAction::ALL
        .iter()
        .filter(|a| a.bears_context())
        .map(|&a| (a, p(a) / bearing))
        .collect();
    let f = 1.0 / mean_len;
    let mut rest = Vec::new();
    for a in CognitiveAction::ALL {
        let q_first = first.iter().find(|(b, _)| *b == a).map_or(0.0, |x| x.1);
        let q = (p(a) - f * q_first) / (1.0 - f);
        if q < -1e-12 {
            return Err(infeasible(format!("{a} share too small for segments averaging {mean_len} actions")));
        }
        rest.push((a, q.max(0.0)));
    }
    Ok((first, rest))
}

/// Largest-remainder integer allocation of `total` by `shares`.
fn quotas<K: Copy + Ord>(shares: &BTreeMap<K, f64>, total: usize) -> BTreeMap<K, usize> {
    let mut out: BTreeMap<K, usize> = shares.iter().map(|(&k, &p)| (k, libm::floor(p * total as f64) as usize)).collect();
    let assigned: usize = out.values().sum();
    let mut by_remainder: Vec<(K, f64)> =
        shares.iter().map(|(&k, &p)| (k, p * total as f64 - libm::floor(p * total as f64))).collect();
    by_remainder.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (k, _) in by_remainder.into_iter().take(total.saturating_sub(assigned)) {
        *out.get_mut(&k).unwrap() += 1;
    }
    out
}

/// Whether counts `r` can be laid out with no two equal neighbours and the
/// first element different from `prev`.
fn arrangeable<K: Copy + Ord>(r: &BTreeMap<K, usize>, prev: Option<K>) -> bool {
    let total: usize = r.values().sum();
    r.iter().all(|(&k, &c)| if Some(k) == prev { 2 * c <= total } else { 2 * c <= total + 1 })
}

/// Random sequence with exact counts and no adjacent repeats.
fn arrange<R: Rng>(counts: &BTreeMap<TaskContext, usize>, rng: &mut R) -> Result<Vec<TaskContext>, SynthError> {
    let mut left = counts.clone();
    if !arrangeable(&left, None) {
        return Err(infeasible("one context is more than half of all segments".into()));
    }
    let total: usize = left.values().sum();
    let mut seq = Vec::with_capacity(total);
    for _ in 0..total {
        let prev = seq.last().copied();
        let options: Vec<(TaskContext, usize)> = left
            .iter()
            .filter(|&(&k, &c)| c > 0 && Some(k) != prev)
            .filter(|&(&k, _)| {
                let mut next = left.clone();
                *next.get_mut(&k).unwrap() -= 1;
                arrangeable(&next, Some(k))
            })
            .map(|(&k, &c)| (k, c))
            .collect();
        let &(pick, _) = options
            .choose_weighted(rng, |o| o.1 as f64)
            .map_err(|_| infeasible("context arrangement dead end".into()))?;
        *left.get_mut(&pick).unwrap() -= 1;
        seq.push(pick);
    }
    Ok(seq)
}

fn sample<R: Rng, T: Copy>(rng: &mut R, dist: &[(T, f64)]) -> T {
    dist.choose_weighted(rng, |d| d.1).expect("distribution has positive mass").0
}

/// Generated records, ready to be written in the ingestion formats.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub utterances: Vec<Utterance>,
    pub actions: Vec<ActionEvent>,
    pub labels: Vec<LabelRecord>,
    pub context_map: ContextMap,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_sessions == 0 || self.target_segments < self.n_sessions {
            return Err(infeasible(format!(
                "{} segments cannot fill {} sessions",
                self.target_segments, self.n_sessions
            )));
        }
        check_distribution("action mix", &self.action_mix)?;
        check_distribution("context mix", &self.context_mix)?;
        check_distribution("base rates", &self.base_rates)?;
        let (lo, hi) = BASE_RATE_BAND;
        if let Some((code, rate)) = self.base_rates.iter().find(|(_, &r)| r > 0.0 && !(lo - 1e-12..=hi + 1e-12).contains(&r))
        {
            return Err(infeasible(format!("base rate {rate} for {code} outside [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(infeasible(format!("signal strength {} outside [0, 1]", self.strength)));
        }
        let mean = (ACTIONS_PER_SEGMENT.0 + ACTIONS_PER_SEGMENT.1) as f64 / 2.0;
        action_schedule(&self.action_mix, mean)?;
        Ok(())
    }

    fn signal(&self, code: SsrlCode) -> Signal {
        self.signals.get(&code).copied().unwrap_or(Signal::Neutral)
    }
}

struct SegmentPlan {
    context: TaskContext,
    code: SsrlCode,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let n = spec.target_segments;
    let mean_len = (ACTIONS_PER_SEGMENT.0 + ACTIONS_PER_SEGMENT.1) as f64 / 2.0;
    let (first_mix, rest_mix) = action_schedule(&spec.action_mix, mean_len)?;

    let mut plan_rng = seed::rng(seed::derive(spec.seed, &[0]));
    let contexts = arrange(&quotas(&spec.context_mix, n), &mut plan_rng)?;
    let mut codes: Vec<SsrlCode> =
        quotas(&spec.base_rates, n).into_iter().flat_map(|(c, k)| core::iter::repeat_n(c, k)).collect();
    codes.shuffle(&mut plan_rng);
    let segments: Vec<SegmentPlan> =
        contexts.into_iter().zip(codes).map(|(context, code)| SegmentPlan { context, code }).collect();

    let base = n / spec.n_sessions;
    let extra = n % spec.n_sessions;
    let mut out = SynthData {
        utterances: Vec::new(),
        actions: Vec::new(),
        labels: Vec::new(),
        context_map: context_map(),
    };
    let width = digits(spec.n_sessions);
    let mut start = 0;
    for s in 0..spec.n_sessions {
        let len = base + usize::from(s < extra);
        let session_id = format!("S{:0width$}", s + 1);
        let mut rng = seed::rng(seed::derive(spec.seed, &[1, s as u64]));
        let gen = SessionGen { spec, first_mix: &first_mix, rest_mix: &rest_mix, session_id: &session_id };
        gen.emit(&segments[start..start + len], &mut rng, &mut out);
        start += len;
    }
    Ok(out)
}

fn digits(n: usize) -> usize {
    let mut d = 1;
    let mut x = n;
    while x >= 10 {
        x /= 10;
        d += 1;
    }
    d.max(3)
}

struct SessionGen<'a> {
    spec: &'a SynthSpec,
    first_mix: &'a [(CognitiveAction, f64)],
    rest_mix: &'a [(CognitiveAction, f64)],
    session_id: &'a str,
}

impl SessionGen<'_> {
    fn emit(&self, plan: &[SegmentPlan], rng: &mut ChaCha8Rng, out: &mut SynthData) {
        let mut t: Millis = rng.random_range(0..5_000);
        let mut speaker_turn = rng.random_bool(0.5);
        for (index, seg) in plan.iter().enumerate() {
            let signal = self.spec.signal(seg.code);
            let mut kinds = self.action_kinds(seg, signal, rng);
            if kinds.is_empty() {
                kinds.push(sample(rng, self.first_mix));
            }
            let seg_start = t;
            for kind in kinds {
                out.actions.push(self.event(kind, seg.context, t, rng));
                t += rng.random_range(ACTION_GAP_MS.0..=ACTION_GAP_MS.1);
            }
            // utterances start strictly inside [seg_start, t), t being the next segment start
            let n_utt = rng.random_range(UTTERANCES_PER_SEGMENT.0..=UTTERANCES_PER_SEGMENT.1);
            let mut starts: Vec<Millis> = (0..n_utt).map(|_| rng.random_range(seg_start..t)).collect();
            starts.sort_unstable();
            starts.dedup();
            let text_marked = signal.text() && rng.random_bool(self.spec.strength);
            for u_start in starts {
                speaker_turn = !speaker_turn;
                out.utterances.push(Utterance {
                    session_id: self.session_id.into(),
                    speaker_id: if speaker_turn { "s1" } else { "s2" }.into(),
                    t_start: u_start,
                    t_end: u_start + rng.random_range(UTTERANCE_LEN_MS.0..=UTTERANCE_LEN_MS.1),
                    text: utterance_text(rng, text_marked.then(|| marker_words(seg.code))),
                });
            }
            out.labels.push(LabelRecord { session_id: self.session_id.into(), segment_index: index, code: seg.code });
        }
    }

    fn action_kinds(&self, seg: &SegmentPlan, signal: Signal, rng: &mut ChaCha8Rng) -> Vec<CognitiveAction> {
        let n = rng.random_range(ACTIONS_PER_SEGMENT.0..=ACTIONS_PER_SEGMENT.1);
        let mut kinds = Vec::with_capacity(n + 4);
        kinds.push(sample(rng, self.first_mix));
        kinds.extend((1..n).map(|_| sample(rng, self.rest_mix)));
        if signal.log() && rng.random_bool(self.spec.strength) {
            let at = rng.random_range(1..=kinds.len());
            kinds.splice(at..at, log_pattern(seg.code).iter().copied());
        }
        kinds
    }

    fn event(&self, kind: CognitiveAction, context: TaskContext, t: Millis, rng: &mut ChaCha8Rng) -> ActionEvent {
        let (raw_action, connected) = match kind {
            CognitiveAction::Build => (RawAction::Add, rng.random_bool(0.5)),
            CognitiveAction::Adjust => match rng.random_range(0..3) {
                0 => (RawAction::Move, true),
                1 => (RawAction::Edit, true),
                _ => (RawAction::Remove, rng.random_bool(0.5)),
            },
            CognitiveAction::Draft => (*[RawAction::Move, RawAction::Edit].choose(rng).unwrap(), false),
            CognitiveAction::Execute => (RawAction::Run, true),
            CognitiveAction::Visualize => (*[RawAction::OpenGraph, RawAction::OpenTable].choose(rng).unwrap(), false),
        };
        let region = kind.bears_context().then(|| regions(context).choose(rng).unwrap().to_string());
        let block_id = match &region {
            Some(r) => format!("{r}-{}", rng.random_range(0..6)),
            None => "sim".into(),
        };
        ActionEvent { session_id: self.session_id.into(), t, block_id, raw_action, connected, region }
    }
}

fn utterance_text(rng: &mut ChaCha8Rng, markers: Option<&[&str]>) -> String {
    let n = rng.random_range(WORDS_PER_UTTERANCE.0..=WORDS_PER_UTTERANCE.1);
    let mut words: Vec<&str> = (0..n).map(|_| *NEUTRAL_WORDS.choose(rng).unwrap()).collect();
    if let Some(m) = markers {
        for _ in 0..MARKERS_PER_UTTERANCE {
            let at = rng.random_range(0..=words.len());
            words.insert(at, m.choose(rng).unwrap());
        }
    }
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{attach_labels, fuse_session, Segment};
    use crate::ingestion::{assemble_sessions, Sourced};

    fn fused(data: &SynthData) -> Vec<Segment> {
        let (bundles, report) =
            assemble_sessions(Sourced::number(data.utterances.clone()), Sourced::number(data.actions.clone()));
        assert!(report.is_clean(), "{report:?}");
        let mut segs: Vec<Segment> = bundles.iter().flat_map(|b| fuse_session(b, &data.context_map).unwrap()).collect();
        let cov = attach_labels(&mut segs, &data.labels).unwrap();
        assert!(cov.unlabeled.is_empty());
        segs
    }

    #[test]
    fn default_spec_round_trips_through_fusion() {
        let data = generate(&SynthSpec::default()).unwrap();
        let segs = fused(&data);
        assert_eq!(segs.len(), 394);
        assert_eq!(data.labels.len(), 394);
        for w in segs.windows(2) {
            if w[0].session_id == w[1].session_id {
                assert_ne!(w[0].context, w[1].context);
            }
        }
        let n_utt: usize = segs.iter().map(|s| s.utterances.len()).sum();
        assert_eq!(n_utt, data.utterances.len());
        let n_act: usize = segs.iter().map(|s| s.actions.len()).sum();
        assert_eq!(n_act, data.actions.len());
    }

    #[test]
    fn labels_match_plan_after_fusion() {
        let spec = SynthSpec { strength: 1.0, ..SynthSpec::default() };
        let data = generate(&spec).unwrap();
        let segs = fused(&data);
        for s in segs.iter().filter(|s| s.label == Some(SsrlCode::OffTopic)) {
            let text: String = s.utterances.iter().map(|u| u.text.as_str()).collect::<Vec<_>>().join(" ");
            assert!(marker_words(SsrlCode::OffTopic).iter().any(|m| text.split(' ').any(|w| w == *m)));
        }
        for s in segs.iter().filter(|s| s.label == Some(SsrlCode::Reflecting)) {
            let acts: Vec<CognitiveAction> = s.actions.iter().map(|a| a.action).collect();
            let pattern = log_pattern(SsrlCode::Reflecting);
            assert!(acts.windows(pattern.len()).any(|w| w == pattern));
        }
    }

    #[test]
    fn rates_within_band() {
        let data = generate(&SynthSpec::default()).unwrap();
        for code in SsrlCode::ALL {
            let k = data.labels.iter().filter(|l| l.code == code).count() as f64 / 394.0;
            assert!((0.07..=0.22).contains(&k), "{code}: {k}");
        }
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec { seed: 17, ..SynthSpec::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_ne!(generate(&spec).unwrap().utterances, generate(&SynthSpec::default()).unwrap().utterances);
    }

    #[test]
    fn strength_zero_matches_mixes() {
        let spec = SynthSpec { strength: 0.0, seed: 5, ..SynthSpec::default() };
        let data = generate(&spec).unwrap();
        let segs = fused(&data);
        let total = segs.iter().map(|s| s.actions.len()).sum::<usize>() as f64;
        for (a, p) in &spec.action_mix {
            let got = segs.iter().flat_map(|s| &s.actions).filter(|m| m.action == *a).count() as f64 / total;
            assert!((got - p).abs() <= 0.03, "{a}: {got} vs {p}");
        }
        for (c, p) in &spec.context_mix {
            let got = segs.iter().filter(|s| s.context == *c).count() as f64 / segs.len() as f64;
            assert!((got - p).abs() <= 0.03, "{c}: {got} vs {p}");
        }
    }

    #[test]
    fn infeasible_specs() {
        let mut spec = SynthSpec::default();
        spec.action_mix.insert(CognitiveAction::Build, 0.0);
        spec.action_mix.insert(CognitiveAction::Adjust, 0.0);
        spec.action_mix.insert(CognitiveAction::Draft, 0.0);
        spec.action_mix.insert(CognitiveAction::Execute, 0.91);
        assert!(matches!(generate(&spec), Err(SynthError::InfeasibleSpec(_))));

        let mut spec = SynthSpec::default();
        spec.base_rates.insert(SsrlCode::OffTopic, 0.30);
        assert!(generate(&spec).is_err());

        let spec = SynthSpec { context_mix: [(TaskContext::InitVars, 0.7), (TaskContext::Conditionals, 0.3)].into(), ..SynthSpec::default() };
        assert!(generate(&spec).is_err());

        // context-bearing share below 1/mean length leaves no room after the first action
        let spec = SynthSpec {
            action_mix: [
                (CognitiveAction::Build, 0.05),
                (CognitiveAction::Adjust, 0.05),
                (CognitiveAction::Execute, 0.81),
                (CognitiveAction::Visualize, 0.09),
            ]
            .into(),
            ..SynthSpec::default()
        };
        assert!(matches!(spec.validate(), Err(SynthError::InfeasibleSpec(_))));
    }

    #[test]
    fn quotas_are_exact() {
        let q = quotas(&SynthSpec::default().context_mix, 394);
        assert_eq!(q.values().sum::<usize>(), 394);
        assert_eq!(q[&TaskContext::Conditionals], 135);
        assert_eq!(q[&TaskContext::InitVars], 88);
    }
}
