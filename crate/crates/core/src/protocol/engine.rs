use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use super::action::{parse_action, Action, ActionVerb, ParsedReply};
use super::state::{
    legal_verbs, transition, EventKind, KeDetail, PayloadRef, QgDetail, QrDetail, RsDetail,
    StateEvent, SubState,
};
use super::{GeneratedQuery, PromptWidget, ProtocolError, Session};
use crate::kg::{EntityRecord, KgBackend, SparqlResultTable};
use crate::llm::{
    assemble_few_shot, assemble_system_prompt, builtin_few_shot, Cassette, ChatMessage,
    FewShotExample, LlmGateway, PROTOCOL_RULES,
};
use crate::sparql::{
    build_entity_relation_table, extract_ids, inline_comments, mentioned_ids, parse_select,
    ParsedQuery,
};

/// What the headless runner says whenever the LLM asks for clarification.
pub const AUTO_REPLY: &str = "Please proceed with your best interpretation of the question.";

const GENERATE_INSTRUCTION: &str = "Write the SPARQL query for the question now. Use only identifiers that appeared in this conversation. Reply with a ```sparql block followed by BUILD_QUERY.";

const SUMMARIZE_INSTRUCTION: &str =
    "Summarize these results for the person in a few sentences. Only state what the results show.";

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub max_qr_turns: u32,
    pub max_kg_calls: u32,
    pub search_limit: usize,
    pub relations_limit: usize,
    pub traverse_limit: usize,
    pub query_timeout: Duration,
    /// Rows of results shown to the LLM for summarization.
    pub summary_rows: usize,
    /// Upper bound on steps inside one [`Engine::advance`] call.
    pub max_steps: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            max_qr_turns: 5,
            max_kg_calls: 15,
            search_limit: 10,
            relations_limit: 50,
            traverse_limit: 20,
            query_timeout: Duration::from_secs(60),
            summary_rows: 50,
            max_steps: 64,
        }
    }
}

/// Event timestamps. `Logical` makes traces reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Logical { epoch_ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The LLM asked a clarifying question.
    NeedsUser,
    /// A query is waiting for the person to run it.
    QueryReady,
    /// Results and summary are in.
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Continue,
    NeedsUser,
    QueryReady,
}

pub struct Engine {
    kg: Arc<dyn KgBackend>,
    llm: Arc<LlmGateway>,
    config: ProtocolConfig,
    clock: Clock,
    system_prompt: ChatMessage,
    few_shot: Vec<ChatMessage>,
}

impl Engine {
    pub fn new(
        kg: Arc<dyn KgBackend>,
        llm: Arc<LlmGateway>,
        config: ProtocolConfig,
    ) -> Result<Self, ProtocolError> {
        let system_prompt = assemble_system_prompt(&kg.describe_schema(), PROTOCOL_RULES)?;
        let bank = builtin_few_shot(kg.name())
            .or_else(|| builtin_few_shot("wikidata"))
            .ok_or_else(|| ProtocolError::Config("no few-shot examples available".into()))?;
        let few_shot = assemble_few_shot(bank)?;
        Ok(Self {
            kg,
            llm,
            config,
            clock: Clock::System,
            system_prompt,
            few_shot,
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_few_shot(mut self, examples: &[FewShotExample]) -> Result<Self, ProtocolError> {
        self.few_shot = assemble_few_shot(examples)?;
        Ok(self)
    }

    pub fn kg(&self) -> &Arc<dyn KgBackend> {
        &self.kg
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn start_session(&self, question: &str) -> Result<Session, ProtocolError> {
        self.start_session_with_id(uuid::Uuid::new_v4().to_string(), question)
    }

    pub fn start_session_with_id(
        &self,
        id: impl Into<String>,
        question: &str,
    ) -> Result<Session, ProtocolError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(ProtocolError::Validation("question is empty".into()));
        }
        let mut session = Session {
            id: id.into(),
            question: question.to_string(),
            history: vec![self.system_prompt.clone(), ChatMessage::user(question)],
            stage: SubState::START,
            discovered: Vec::new(),
            generated_query: None,
            entity_relation_table: Vec::new(),
            results: None,
            summary: None,
            events: Vec::new(),
            awaiting_user: false,
            error: None,
            counters: Default::default(),
        };
        self.emit(
            &mut session,
            EventKind::Transition,
            "question received",
            Some(PayloadRef::Message { index: 1 }),
        );
        Ok(session)
    }

    fn now_ms(&self, session: &Session) -> u64 {
        let last = session.events.last().map_or(0, |e| e.timestamp_ms);
        match self.clock {
            Clock::Logical { epoch_ms } => epoch_ms + session.events.len() as u64,
            Clock::System => {
                let now = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_millis() as u64);
                now.max(last)
            }
        }
    }

    fn emit(
        &self,
        session: &mut Session,
        kind: EventKind,
        note: impl Into<String>,
        payload_ref: Option<PayloadRef>,
    ) {
        let event = StateEvent {
            seq: session.events.len() as u64,
            timestamp_ms: self.now_ms(session),
            sub_state: session.stage,
            kind,
            note: note.into(),
            payload_ref,
        };
        tracing::debug!(session = %session.id, "{event}");
        session.events.push(event);
    }

    fn enter(
        &self,
        session: &mut Session,
        to: SubState,
        note: impl Into<String>,
        payload: Option<PayloadRef>,
    ) {
        session.stage = to;
        self.emit(session, EventKind::Transition, note, payload);
    }

    fn push(session: &mut Session, message: ChatMessage) -> usize {
        session.history.push(message);
        session.history.len() - 1
    }

    /// A message typed by the person in the chat.
    pub fn user_message(&self, session: &mut Session, text: &str) -> Result<(), ProtocolError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(ProtocolError::Validation("message is empty".into()));
        }
        let index = Self::push(session, ChatMessage::user(text));
        session.awaiting_user = false;
        session.error = None;
        let payload = Some(PayloadRef::Message { index });
        match session.stage {
            SubState::QueryGeneration(QgDetail::QueryEmitted)
            | SubState::ResultsSummarization(_) => {
                Self::clear_outputs(session);
                session.counters = Default::default();
                self.enter(session, SubState::START, "follow-up from the user", payload);
            }
            SubState::QuestionRefinement(_) => {
                self.enter(session, SubState::START, "user replied", payload);
            }
            _ => self.emit(session, EventKind::Transition, "user message", payload),
        }
        Ok(())
    }

    fn clear_outputs(session: &mut Session) {
        session.generated_query = None;
        session.entity_relation_table.clear();
        session.results = None;
        session.summary = None;
    }

    pub fn apply_prompt_widget(
        &self,
        session: &mut Session,
        widget: PromptWidget,
        edited_text: Option<&str>,
    ) -> Result<(), ProtocolError> {
        let message = match edited_text.map(str::trim) {
            Some(t) if !t.is_empty() => ChatMessage::user(t),
            _ => ChatMessage::templated_user(widget.template()),
        };
        let text = message.content.clone();
        let index = Self::push(session, message);
        let payload = Some(PayloadRef::Message { index });
        session.awaiting_user = false;
        session.error = None;
        Self::clear_outputs(session);
        match widget {
            PromptWidget::WrongData => {
                self.enter(
                    session,
                    SubState::KgExploration(KeDetail::FuzzySearchEntity),
                    "user reported wrong data; back to exploration",
                    payload,
                );
            }
            PromptWidget::MisunderstoodQuestion => {
                session.counters.qr_turns = 0;
                self.enter(
                    session,
                    SubState::START,
                    "user says the question was misunderstood",
                    payload,
                );
            }
            PromptWidget::NewQuestion => {
                session.counters = Default::default();
                session.question = text;
                self.enter(session, SubState::START, "new question", payload);
            }
        }
        Ok(())
    }

    fn not_runnable(session: &Session, action: &str) -> ProtocolError {
        ProtocolError::NotRunnable {
            action: action.to_string(),
            stage: session.stage,
        }
    }

    async fn complete(
        &self,
        session: &mut Session,
        cassette: &mut Cassette,
        few_shot: bool,
    ) -> Result<usize, ProtocolError> {
        let mut messages = Vec::with_capacity(session.history.len() + self.few_shot.len());
        messages.push(session.history[0].clone());
        if few_shot {
            messages.extend(self.few_shot.iter().cloned());
        }
        messages.extend(session.history[1..].iter().cloned());
        match self.llm.chat_complete(&messages, cassette).await {
            Ok(reply) => Ok(Self::push(session, reply)),
            Err(e) => {
                self.emit(session, EventKind::LlmError, e.to_string(), None);
                Err(e.into())
            }
        }
    }

    /// One assistant turn, with a single reprompt if the reply has no
    /// usable action block.
    async fn turn(
        &self,
        session: &mut Session,
        cassette: &mut Cassette,
        few_shot: bool,
    ) -> Result<(usize, ParsedReply), ProtocolError> {
        let index = self.complete(session, cassette, few_shot).await?;
        match parse_action(&session.history[index].content) {
            Ok(parsed) => Ok((index, parsed)),
            Err(first) => {
                self.emit(
                    session,
                    EventKind::Repair,
                    format!("unusable reply ({first}); restating the action grammar"),
                    Some(PayloadRef::Message { index }),
                );
                let allowed: Vec<&str> = legal_verbs(session.stage.stage())
                    .into_iter()
                    .map(ActionVerb::keyword)
                    .collect();
                Self::push(
                    session,
                    ChatMessage::system(format!(
                        "Your last reply could not be processed: {first}. End every reply with exactly one block of the form\n```action\nVERB \"argument\"\n```\nActions allowed now: {}.",
                        allowed.join(", ")
                    )),
                );
                let index = self.complete(session, cassette, few_shot).await?;
                match parse_action(&session.history[index].content) {
                    Ok(parsed) => Ok((index, parsed)),
                    Err(second) => {
                        let msg = format!("reply still unusable after reprompt: {second}");
                        self.emit(
                            session,
                            EventKind::ProtocolError,
                            msg.clone(),
                            Some(PayloadRef::Message { index }),
                        );
                        session.error = Some(msg.clone());
                        Err(ProtocolError::ActionParse(msg))
                    }
                }
            }
        }
    }

    /// Consume one assistant turn and act on it.
    async fn step(
        &self,
        session: &mut Session,
        cassette: &mut Cassette,
    ) -> Result<Step, ProtocolError> {
        if session.awaiting_user {
            return Err(Self::not_runnable(
                session,
                "continue while waiting for the user",
            ));
        }
        match session.stage {
            SubState::QuestionRefinement(_) => self.refinement_turn(session, cassette).await,
            SubState::KgExploration(KeDetail::IdsComplete)
            | SubState::QueryGeneration(QgDetail::FewShotPrompt) => {
                self.generation_turn(session, cassette).await
            }
            SubState::KgExploration(_) => {
                let (index, parsed) = self.turn(session, cassette, false).await?;
                self.dispatch(session, index, parsed).await
            }
            SubState::QueryGeneration(QgDetail::QueryEmitted) => Err(Self::not_runnable(
                session,
                "step before the query is executed",
            )),
            SubState::ResultsSummarization(_) => {
                Err(Self::not_runnable(session, "step after results"))
            }
        }
    }

    async fn refinement_turn(
        &self,
        session: &mut Session,
        cassette: &mut Cassette,
    ) -> Result<Step, ProtocolError> {
        if session.counters.qr_turns >= self.config.max_qr_turns {
            self.emit(
                session,
                EventKind::Warning,
                format!(
                    "clarification cap of {} turns reached; continuing with the question as stated",
                    self.config.max_qr_turns
                ),
                None,
            );
            Self::push(
                session,
                ChatMessage::system(
                    "Stop clarifying. Explore the knowledge graph for the question as it stands.",
                ),
            );
            self.enter(
                session,
                SubState::KgExploration(KeDetail::FuzzySearchEntity),
                "exploration forced",
                None,
            );
            return Ok(Step::Continue);
        }
        session.counters.qr_turns += 1;
        let (index, parsed) = self.turn(session, cassette, false).await?;
        self.dispatch(session, index, parsed).await
    }

    async fn dispatch(
        &self,
        session: &mut Session,
        index: usize,
        parsed: ParsedReply,
    ) -> Result<Step, ProtocolError> {
        let payload = Some(PayloadRef::Message { index });
        let stage = session.stage.stage();
        let verb = parsed.action.verb();
        let Some(target) = transition(stage, verb) else {
            self.emit(
                session,
                EventKind::ProtocolError,
                format!("{verb} is not allowed during {}", stage.abbrev()),
                payload,
            );
            let allowed: Vec<&str> = legal_verbs(stage)
                .into_iter()
                .map(ActionVerb::keyword)
                .collect();
            Self::push(
                session,
                ChatMessage::system(format!(
                    "{verb} cannot be used at this point. Actions allowed now: {}.",
                    allowed.join(", ")
                )),
            );
            return Ok(Step::Continue);
        };
        match parsed.action {
            Action::Clarify { text } => {
                self.enter(session, target, format!("LLM asks: {text}"), payload);
                session.awaiting_user = true;
                Ok(Step::NeedsUser)
            }
            Action::WellFormed => {
                self.enter(
                    session,
                    SubState::QuestionRefinement(QrDetail::LlmDeclaresWellFormed),
                    "question is well-formed",
                    payload,
                );
                self.enter(session, target, "exploring the knowledge graph", None);
                Ok(Step::Continue)
            }
            Action::Stop { reason } => {
                let note = if reason.is_empty() {
                    "identifiers complete".to_string()
                } else {
                    format!("identifiers complete: {reason}")
                };
                self.enter(session, target, note, payload);
                Ok(Step::Continue)
            }
            Action::Search { .. } | Action::Properties { .. } | Action::Traverse { .. } => {
                self.explore(session, index, parsed.action, target).await
            }
            Action::BuildQuery { .. } => unreachable!("handled by generation_turn"),
        }
    }

    async fn explore(
        &self,
        session: &mut Session,
        index: usize,
        action: Action,
        target: SubState,
    ) -> Result<Step, ProtocolError> {
        if session.counters.kg_calls >= self.config.max_kg_calls {
            self.emit(
                session,
                EventKind::Budget,
                format!(
                    "knowledge graph budget of {} calls used up; moving to query generation",
                    self.config.max_kg_calls
                ),
                Some(PayloadRef::Message { index }),
            );
            Self::push(
                session,
                ChatMessage::system(
                    "The knowledge graph call budget is used up. Write the query with the identifiers found so far.",
                ),
            );
            self.enter(
                session,
                SubState::KgExploration(KeDetail::IdsComplete),
                "identifiers complete (budget)",
                None,
            );
            return Ok(Step::Continue);
        }
        session.counters.kg_calls += 1;
        let (label, result) = match &action {
            Action::Search { term } => {
                let label = format!("SEARCH \"{term}\"");
                self.enter(
                    session,
                    target,
                    label.clone(),
                    Some(PayloadRef::Message { index }),
                );
                (
                    label,
                    self.kg
                        .fuzzy_search_entities(term, self.config.search_limit)
                        .await,
                )
            }
            Action::Properties { id } => {
                let label = format!("PROPERTIES {id}");
                self.enter(
                    session,
                    target,
                    label.clone(),
                    Some(PayloadRef::Message { index }),
                );
                (
                    label,
                    self.kg
                        .get_relations_for_entity(id, self.config.relations_limit)
                        .await,
                )
            }
            Action::Traverse { head, relation } => {
                let label = format!("TRAVERSE {head} {relation}");
                self.enter(
                    session,
                    target,
                    label.clone(),
                    Some(PayloadRef::Message { index }),
                );
                (
                    label,
                    self.kg
                        .traverse(head, relation, self.config.traverse_limit)
                        .await,
                )
            }
            _ => unreachable!("only exploration actions reach here"),
        };
        match result {
            Ok(records) => {
                Self::push(
                    session,
                    ChatMessage::system(format_records(&label, &records)),
                );
                for r in records {
                    if !session.discovered.iter().any(|d| d.id == r.id) {
                        session.discovered.push(r);
                    }
                }
            }
            Err(e) => {
                self.emit(session, EventKind::KgError, format!("{label}: {e}"), None);
                Self::push(session, ChatMessage::system(format!("{label} failed: {e}")));
            }
        }
        Ok(Step::Continue)
    }

    async fn generation_turn(
        &self,
        session: &mut Session,
        cassette: &mut Cassette,
    ) -> Result<Step, ProtocolError> {
        if session.stage == SubState::KgExploration(KeDetail::IdsComplete) {
            let index = Self::push(session, ChatMessage::system(GENERATE_INSTRUCTION));
            self.enter(
                session,
                SubState::QueryGeneration(QgDetail::FewShotPrompt),
                "few-shot examples and query request sent",
                Some(PayloadRef::Message { index }),
            );
        }
        let (index, parsed) = self.turn(session, cassette, true).await?;
        let Action::BuildQuery {
            sparql,
            explanation,
        } = parsed.action
        else {
            return self.dispatch(session, index, parsed).await;
        };
        match parse_query(&sparql) {
            Ok(q) => self.accept_query(session, sparql, explanation, &q).await,
            Err(first) => {
                self.emit(
                    session,
                    EventKind::Repair,
                    format!("generated query rejected ({first}); asking for a repair"),
                    Some(PayloadRef::Message { index }),
                );
                Self::push(
                    session,
                    ChatMessage::system(format!(
                        "The query could not be used: {first}. Reply with a corrected SPARQL SELECT query and BUILD_QUERY."
                    )),
                );
                let (index, parsed) = self.turn(session, cassette, true).await?;
                let failure = match parsed.action {
                    Action::BuildQuery {
                        sparql,
                        explanation,
                    } => match parse_query(&sparql) {
                        Ok(q) => return self.accept_query(session, sparql, explanation, &q).await,
                        Err(e) => e,
                    },
                    other => format!("expected BUILD_QUERY, got {}", other.verb()),
                };
                let msg = format!("repaired query still unusable: {failure}");
                self.emit(
                    session,
                    EventKind::ProtocolError,
                    msg.clone(),
                    Some(PayloadRef::Message { index }),
                );
                session.error = Some(msg.clone());
                Err(ProtocolError::Generation(msg))
            }
        }
    }

    async fn accept_query(
        &self,
        session: &mut Session,
        sparql: String,
        explanation: String,
        parsed: &ParsedQuery,
    ) -> Result<Step, ProtocolError> {
        let comments = inline_comments(&sparql).unwrap_or_default();
        session.generated_query = Some(GeneratedQuery {
            sparql,
            explanation,
            inline_comments: comments,
            llm_generated: true,
        });
        self.enter(
            session,
            SubState::QueryGeneration(QgDetail::QueryEmitted),
            "query emitted; waiting for the user to run it",
            Some(PayloadRef::Query),
        );
        self.check_query(session, parsed).await;
        Ok(Step::QueryReady)
    }

    /// Flags ids the conversation never produced and ids the KG does not know.
    async fn check_query(&self, session: &mut Session, parsed: &ParsedQuery) {
        let known = session.known_ids(self.kg.id_syntax());
        let unseen: Vec<String> = mentioned_ids(parsed)
            .into_iter()
            .filter(|id| !known.contains(id))
            .collect();
        if !unseen.is_empty() {
            self.emit(
                session,
                EventKind::Hallucination,
                format!(
                    "query uses ids never found in the knowledge graph: {}",
                    unseen.join(", ")
                ),
                Some(PayloadRef::Query),
            );
        }
        let ids = extract_ids(parsed).ids;
        match build_entity_relation_table(&ids, self.kg.as_ref()).await {
            Ok(rows) => {
                let missing: Vec<&str> = rows
                    .iter()
                    .filter(|r| !r.resolved)
                    .map(|r| r.id.as_str())
                    .collect();
                if !missing.is_empty() {
                    let note =
                        format!("ids unknown to the knowledge graph: {}", missing.join(", "));
                    self.emit(
                        session,
                        EventKind::Hallucination,
                        note,
                        Some(PayloadRef::Query),
                    );
                }
                session.entity_relation_table = rows;
            }
            Err(e) => {
                self.emit(
                    session,
                    EventKind::KgError,
                    format!("label lookup: {e}"),
                    None,
                );
            }
        }
    }

    /// Replace the generated query with text written by the person.
    pub async fn set_user_query(
        &self,
        session: &mut Session,
        sparql: &str,
    ) -> Result<(), ProtocolError> {
        let parsed = parse_query(sparql).map_err(ProtocolError::Validation)?;
        if !matches!(
            session.stage,
            SubState::QueryGeneration(QgDetail::QueryEmitted) | SubState::ResultsSummarization(_)
        ) {
            return Err(Self::not_runnable(session, "edit the query"));
        }
        session.generated_query = Some(GeneratedQuery {
            sparql: sparql.to_string(),
            explanation: "Edited by the user.".into(),
            inline_comments: inline_comments(sparql).unwrap_or_default(),
            llm_generated: false,
        });
        session.results = None;
        session.summary = None;
        self.enter(
            session,
            SubState::QueryGeneration(QgDetail::QueryEmitted),
            "query edited by the user",
            Some(PayloadRef::Query),
        );
        self.check_query(session, &parsed).await;
        Ok(())
    }

    /// Run the accepted query and have the LLM summarize the results. Only
    /// ever called on an explicit request from the person.
    pub async fn execute_and_summarize(
        &self,
        session: &mut Session,
        cassette: &mut Cassette,
    ) -> Result<(), ProtocolError> {
        let Some(query) = session.generated_query.clone() else {
            return Err(Self::not_runnable(session, "execute without a query"));
        };
        if !matches!(
            session.stage,
            SubState::QueryGeneration(QgDetail::QueryEmitted)
                | SubState::ResultsSummarization(RsDetail::Done)
        ) {
            return Err(Self::not_runnable(session, "execute"));
        }
        self.enter(
            session,
            SubState::ResultsSummarization(RsDetail::Executing),
            "executing query",
            Some(PayloadRef::Query),
        );
        let table = match self
            .kg
            .execute_sparql(&query.sparql, self.config.query_timeout)
            .await
        {
            Ok(t) => t,
            Err(e) => {
                self.emit(
                    session,
                    EventKind::KgError,
                    format!("execution failed: {e}"),
                    None,
                );
                self.enter(
                    session,
                    SubState::QueryGeneration(QgDetail::QueryEmitted),
                    "query kept for editing",
                    Some(PayloadRef::Query),
                );
                return Err(e.into());
            }
        };
        let rows = table.rows.len();
        let shown = render_capped(&table, self.config.summary_rows);
        session.results = Some(table);
        if rows == 0 {
            self.emit(
                session,
                EventKind::EmptyResults,
                "query returned no results",
                Some(PayloadRef::Results),
            );
        }
        Self::push(
            session,
            ChatMessage::system(format!("Query results:\n{shown}\n{SUMMARIZE_INSTRUCTION}")),
        );
        self.enter(
            session,
            SubState::ResultsSummarization(RsDetail::Summarizing),
            format!("summarizing {rows} row(s)"),
            Some(PayloadRef::Results),
        );
        match self.complete(session, cassette, false).await {
            Ok(index) => {
                session.summary = Some(session.history[index].clone());
                self.enter(
                    session,
                    SubState::ResultsSummarization(RsDetail::Done),
                    "summary ready",
                    Some(PayloadRef::Message { index }),
                );
            }
            Err(_) => {
                self.enter(
                    session,
                    SubState::ResultsSummarization(RsDetail::Done),
                    "results ready; summary unavailable",
                    Some(PayloadRef::Results),
                );
            }
        }
        Ok(())
    }

    /// Step until the session needs the person, has a query, or is done.
    /// `observe` sees the session after every step.
    pub async fn advance<F: FnMut(&Session)>(
        &self,
        session: &mut Session,
        cassette: &mut Cassette,
        mut observe: F,
    ) -> Result<Outcome, ProtocolError> {
        for _ in 0..self.config.max_steps {
            if session.awaiting_user {
                return Ok(Outcome::NeedsUser);
            }
            match session.stage {
                SubState::QueryGeneration(QgDetail::QueryEmitted) => {
                    return Ok(Outcome::QueryReady)
                }
                SubState::ResultsSummarization(RsDetail::Done) => return Ok(Outcome::Done),
                SubState::ResultsSummarization(_) => {
                    return Err(Self::not_runnable(session, "advance mid-execution"))
                }
                _ => {}
            }
            let result = self.step(session, cassette).await;
            observe(session);
            match result? {
                Step::Continue => {}
                Step::NeedsUser => return Ok(Outcome::NeedsUser),
                Step::QueryReady => return Ok(Outcome::QueryReady),
            }
        }
        self.emit(
            session,
            EventKind::Warning,
            format!("no decision after {} steps", self.config.max_steps),
            None,
        );
        observe(session);
        Err(ProtocolError::StepLimit(self.config.max_steps))
    }

    /// Run a session to the end without a person: clarifications get
    /// [`AUTO_REPLY`] and the query is executed as soon as it is ready.
    pub async fn run_headless<F: FnMut(&Session)>(
        &self,
        session: &mut Session,
        cassette: &mut Cassette,
        mut observe: F,
    ) -> Result<(), ProtocolError> {
        loop {
            match self.advance(session, cassette, &mut observe).await? {
                Outcome::NeedsUser => {
                    self.user_message(session, AUTO_REPLY)?;
                    observe(session);
                }
                Outcome::QueryReady => {
                    let result = self.execute_and_summarize(session, cassette).await;
                    observe(session);
                    result?;
                }
                Outcome::Done => return Ok(()),
            }
        }
    }
}

fn parse_query(sparql: &str) -> Result<ParsedQuery, String> {
    parse_select(sparql).map_err(|e| e.to_string())
}

fn format_records(label: &str, records: &[EntityRecord]) -> String {
    if records.is_empty() {
        return format!("{label} returned no results.");
    }
    let mut out = format!("{label} returned {} result(s):\n", records.len());
    for r in records {
        if r.description.is_empty() {
            out.push_str(&format!("{} | {}\n", r.id, r.label));
        } else {
            out.push_str(&format!("{} | {} | {}\n", r.id, r.label, r.description));
        }
    }
    out.trim_end().to_string()
}

fn render_capped(table: &SparqlResultTable, cap: usize) -> String {
    if table.rows.len() <= cap {
        return table.render_text();
    }
    let head = SparqlResultTable {
        columns: table.columns.clone(),
        rows: table.rows[..cap].to_vec(),
    };
    format!(
        "{}(first {cap} of {} rows)\n",
        head.render_text(),
        table.rows.len()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capped_rendering() {
        let rows: Vec<_> = (0..60)
            .map(|i| vec![crate::kg::Cell::literal(i.to_string())])
            .collect();
        let t = SparqlResultTable::new(vec!["n".into()], rows).unwrap();
        let text = render_capped(&t, 50);
        assert!(text.contains("(first 50 of 60 rows)"));
        assert!(text.contains("\n49\n"));
        assert!(!text.contains("\n50\n"));
    }

    #[test]
    fn record_listing() {
        let r = EntityRecord::new("Q1", "a", "", crate::kg::RecordKind::Entity);
        assert_eq!(
            format_records("SEARCH \"a\"", &[r]),
            "SEARCH \"a\" returned 1 result(s):\nQ1 | a"
        );
        assert_eq!(format_records("X", &[]), "X returned no results.");
    }
}
