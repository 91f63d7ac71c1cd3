//! The staged prompting protocol: question refinement, KG exploration,
//! query generation and results summarization.
//!
//! [`Engine`] drives a [`Session`] one assistant turn at a time. Each turn
//! must end in an [`Action`]; legal actions per stage live in
//! [`TRANSITIONS`]. Everything that happens is appended to
//! [`Session::events`].

mod action;
mod engine;
mod state;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::kg::{EntityRecord, IdSyntax, KgError, SparqlResultTable};
use crate::llm::{ChatMessage, LlmError, Origin};
use crate::sparql::InlineComment;

pub use action::{parse_action, Action, ActionParseError, ActionVerb, ParsedReply};
pub use engine::{Clock, Engine, Outcome, ProtocolConfig, AUTO_REPLY};
pub use state::{
    is_complete_trace, legal_verbs, stage_trace, transition, EventKind, KeDetail, PayloadRef,
    QgDetail, QrDetail, RsDetail, Stage, StateEvent, SubState, Transition, TRANSITIONS,
};

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot {action} at {stage}")]
    NotRunnable { action: String, stage: SubState },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error("could not obtain a usable action: {0}")]
    ActionParse(String),
    #[error("query generation failed: {0}")]
    Generation(String),
    #[error("gave up after {0} steps without reaching a decision point")]
    StepLimit(usize),
}

impl ProtocolError {
    /// Network, endpoint and recording failures, as opposed to the protocol
    /// itself going wrong.
    pub fn is_transport(&self) -> bool {
        match self {
            ProtocolError::Llm(e) => matches!(
                e,
                LlmError::Transport { .. } | LlmError::Auth(_) | LlmError::Cassette { .. }
            ),
            ProtocolError::Kg(e) => matches!(
                e,
                KgError::Transport { .. } | KgError::Timeout(_) | KgError::ReplayMiss { .. }
            ),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratedQuery {
    pub sparql: String,
    pub explanation: String,
    pub inline_comments: Vec<InlineComment>,
    /// False once a person has replaced the query text.
    pub llm_generated: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Counters {
    pub qr_turns: u32,
    pub kg_calls: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub id: String,
    pub question: String,
    pub history: Vec<ChatMessage>,
    pub stage: SubState,
    pub discovered: Vec<EntityRecord>,
    pub generated_query: Option<GeneratedQuery>,
    /// Labels for the ids in the generated query; unresolved rows are
    /// likely hallucinated ids.
    #[serde(default)]
    pub entity_relation_table: Vec<EntityRecord>,
    pub results: Option<SparqlResultTable>,
    pub summary: Option<ChatMessage>,
    pub events: Vec<StateEvent>,
    /// Set after a clarification question until the person replies.
    #[serde(default)]
    pub awaiting_user: bool,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub counters: Counters,
}

impl Session {
    pub fn last_event(&self) -> Option<&StateEvent> {
        self.events.last()
    }

    /// Ids the LLM has legitimately seen: discovered records plus anything
    /// the engine injected into the conversation.
    pub fn known_ids(&self, syntax: &IdSyntax) -> BTreeSet<String> {
        let mut ids: BTreeSet<String> = self.discovered.iter().map(|r| r.id.clone()).collect();
        for m in &self.history {
            if m.origin == Origin::SystemInjected {
                ids.extend(syntax.scan(&m.content));
            }
        }
        ids
    }

    pub fn has_event(&self, kind: EventKind) -> bool {
        self.events.iter().any(|e| e.kind == kind)
    }
}

/// Canned corrections offered next to the chat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PromptWidget {
    WrongData,
    MisunderstoodQuestion,
    NewQuestion,
}

impl PromptWidget {
    /// Starting text for the editable prompt.
    pub fn template(self) -> &'static str {
        match self {
            PromptWidget::WrongData => {
                "The query used the wrong data. Please go back to the knowledge graph and look for different entities or relations that match my question."
            }
            PromptWidget::MisunderstoodQuestion => {
                "You misunderstood my question. What I meant was: "
            }
            PromptWidget::NewQuestion => "I want to ask a different question: ",
        }
    }
}
