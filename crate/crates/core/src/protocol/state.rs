use serde::{Deserialize, Serialize};

use super::action::ActionVerb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    QuestionRefinement,
    #[serde(rename = "KGExploration")]
    KgExploration,
    QueryGeneration,
    ResultsSummarization,
}

impl Stage {
    pub fn abbrev(self) -> &'static str {
        match self {
            Stage::QuestionRefinement => "QR",
            Stage::KgExploration => "KE",
            Stage::QueryGeneration => "QG",
            Stage::ResultsSummarization => "RS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum QrDetail {
    AwaitUser,
    LlmClarifies,
    LlmDeclaresWellFormed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum KeDetail {
    FuzzySearchEntity,
    FetchRelations,
    Traverse,
    IdsComplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum QgDetail {
    FewShotPrompt,
    QueryEmitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RsDetail {
    Executing,
    Summarizing,
    Done,
}

/// A stage together with a detail that can only belong to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "stage", content = "detail")]
pub enum SubState {
    QuestionRefinement(QrDetail),
    #[serde(rename = "KGExploration")]
    KgExploration(KeDetail),
    QueryGeneration(QgDetail),
    ResultsSummarization(RsDetail),
}

impl SubState {
    pub const START: SubState = SubState::QuestionRefinement(QrDetail::AwaitUser);

    pub fn stage(self) -> Stage {
        match self {
            SubState::QuestionRefinement(_) => Stage::QuestionRefinement,
            SubState::KgExploration(_) => Stage::KgExploration,
            SubState::QueryGeneration(_) => Stage::QueryGeneration,
            SubState::ResultsSummarization(_) => Stage::ResultsSummarization,
        }
    }

    pub fn detail(self) -> &'static str {
        match self {
            SubState::QuestionRefinement(d) => match d {
                QrDetail::AwaitUser => "awaitUser",
                QrDetail::LlmClarifies => "llmClarifies",
                QrDetail::LlmDeclaresWellFormed => "llmDeclaresWellFormed",
            },
            SubState::KgExploration(d) => match d {
                KeDetail::FuzzySearchEntity => "fuzzySearchEntity",
                KeDetail::FetchRelations => "fetchRelations",
                KeDetail::Traverse => "traverse",
                KeDetail::IdsComplete => "idsComplete",
            },
            SubState::QueryGeneration(d) => match d {
                QgDetail::FewShotPrompt => "fewShotPrompt",
                QgDetail::QueryEmitted => "queryEmitted",
            },
            SubState::ResultsSummarization(d) => match d {
                RsDetail::Executing => "executing",
                RsDetail::Summarizing => "summarizing",
                RsDetail::Done => "done",
            },
        }
    }
}

impl std::fmt::Display for SubState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.stage().abbrev(), self.detail())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: Stage,
    pub verb: ActionVerb,
    pub to: SubState,
}

const fn t(from: Stage, verb: ActionVerb, to: SubState) -> Transition {
    Transition { from, verb, to }
}

use ActionVerb as V;
use Stage as S;

/// Every legal (stage, action) pair and where it leads. Anything absent is
/// a protocol error that leaves the stage unchanged.
pub const TRANSITIONS: &[Transition] = &[
    t(
        S::QuestionRefinement,
        V::Clarify,
        SubState::QuestionRefinement(QrDetail::LlmClarifies),
    ),
    t(
        S::QuestionRefinement,
        V::WellFormed,
        SubState::KgExploration(KeDetail::FuzzySearchEntity),
    ),
    t(
        S::KgExploration,
        V::Search,
        SubState::KgExploration(KeDetail::FuzzySearchEntity),
    ),
    t(
        S::KgExploration,
        V::Properties,
        SubState::KgExploration(KeDetail::FetchRelations),
    ),
    t(
        S::KgExploration,
        V::Traverse,
        SubState::KgExploration(KeDetail::Traverse),
    ),
    t(
        S::KgExploration,
        V::Stop,
        SubState::KgExploration(KeDetail::IdsComplete),
    ),
    t(
        S::QueryGeneration,
        V::BuildQuery,
        SubState::QueryGeneration(QgDetail::QueryEmitted),
    ),
    t(
        S::QueryGeneration,
        V::Search,
        SubState::KgExploration(KeDetail::FuzzySearchEntity),
    ),
    t(
        S::QueryGeneration,
        V::Properties,
        SubState::KgExploration(KeDetail::FetchRelations),
    ),
    t(
        S::QueryGeneration,
        V::Traverse,
        SubState::KgExploration(KeDetail::Traverse),
    ),
];

pub fn transition(from: Stage, verb: ActionVerb) -> Option<SubState> {
    TRANSITIONS
        .iter()
        .find(|t| t.from == from && t.verb == verb)
        .map(|t| t.to)
}

pub fn legal_verbs(from: Stage) -> Vec<ActionVerb> {
    TRANSITIONS
        .iter()
        .filter(|t| t.from == from)
        .map(|t| t.verb)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    Transition,
    ProtocolError,
    KgError,
    LlmError,
    Hallucination,
    Budget,
    Warning,
    EmptyResults,
    Repair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum PayloadRef {
    /// Index into the session history.
    Message {
        index: usize,
    },
    Query,
    Results,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateEvent {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub sub_state: SubState,
    pub kind: EventKind,
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<PayloadRef>,
}

impl std::fmt::Display for StateEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            EventKind::Transition => String::new(),
            k => format!(
                " [{}]",
                serde_json::to_value(k)
                    .expect("kind")
                    .as_str()
                    .unwrap_or("")
            ),
        };
        write!(f, "#{} {}{}: {}", self.seq, self.sub_state, kind, self.note)
    }
}

/// Stages of an event list with consecutive repeats collapsed.
pub fn stage_trace(events: &[StateEvent]) -> Vec<Stage> {
    let mut out: Vec<Stage> = Vec::new();
    for e in events {
        let s = e.sub_state.stage();
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

/// Whether a finished session's trace has the shape
/// `QR+ KE+ (QG KE*)* QG RS`, allowing exploration after repair back-edges.
pub fn is_complete_trace(events: &[StateEvent]) -> bool {
    let trace = stage_trace(events);
    let mut it = trace.iter().copied().peekable();
    if it.next() != Some(S::QuestionRefinement) {
        return false;
    }
    if it.next() != Some(S::KgExploration) {
        return false;
    }
    let mut last = S::KgExploration;
    for s in it {
        match (last, s) {
            (S::KgExploration, S::QueryGeneration)
            | (S::QueryGeneration, S::KgExploration)
            | (S::QueryGeneration, S::ResultsSummarization) => {}
            _ => return false,
        }
        last = s;
    }
    last == S::ResultsSummarization
}
