use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, LlmError};
use crate::kg::SchemaSummary;

/// Protocol instructions placed in every system prompt.
pub const PROTOCOL_RULES: &str = r#"You help a person turn a question into a SPARQL query over a knowledge graph. You never answer from memory; every identifier you use must come from the knowledge graph tools below.

Work in four stages:
1. Question refinement. If the question is ambiguous or open-ended, ask one clarifying question with CLARIFY. When it is specific enough to answer with a single query, reply WELLFORMED.
2. Knowledge graph exploration. Find the identifiers you need. SEARCH finds entities by name, PROPERTIES lists the relations on an entity, TRAVERSE follows one relation from an entity. Tool results arrive as system messages. Reply STOP once you have every identifier the query needs.
3. Query generation. You will be shown worked examples, then asked for the query. Reply with a ```sparql block holding one SELECT query, followed by BUILD_QUERY with a short plain-language explanation. Explain non-obvious lines with # comments inside the query. If an identifier is missing, go back to SEARCH, PROPERTIES or TRAVERSE.
4. Results summarization. You will receive the query results and write a short answer for the person.

Every reply in stages 1 to 3 must end with exactly one action block:

```action
VERB "argument" "argument"
```

Arguments are double-quoted; write \" for a quote and \\ for a backslash. The verbs are:
CLARIFY "question for the person"
WELLFORMED
SEARCH "search term"
PROPERTIES "entity id"
TRAVERSE "entity id" "relation id"
STOP "why the identifiers are complete"
BUILD_QUERY "explanation"

Prose before the action block is shown to the person."#;

/// Builds the single system message that opens every conversation.
pub fn assemble_system_prompt(
    schema: &SchemaSummary,
    protocol_rules: &str,
) -> Result<ChatMessage, LlmError> {
    if protocol_rules.trim().is_empty() {
        return Err(LlmError::Validation("protocol rules are empty".into()));
    }
    let mut text = String::new();
    text.push_str(protocol_rules.trim_end());
    text.push_str("\n\n## Knowledge graph: ");
    text.push_str(&schema.backend_name);
    text.push_str("\n\n");
    text.push_str(schema.prose.trim_end());
    text.push('\n');
    let mut listing = |title: &str, records: &[crate::kg::EntityRecord]| {
        if records.is_empty() {
            return;
        }
        text.push_str(&format!("\n{title}:\n"));
        for r in records {
            if r.description.is_empty() {
                text.push_str(&format!("- {} ({})\n", r.id, r.label));
            } else {
                text.push_str(&format!("- {} ({}): {}\n", r.id, r.label, r.description));
            }
        }
    };
    listing("Example entities", &schema.example_entities);
    listing("Example relations", &schema.example_relations);
    Ok(ChatMessage::system(text))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    pub sparql: String,
    #[serde(default)]
    pub explanation: String,
}

fn quote(arg: &str) -> String {
    let mut out = String::with_capacity(arg.len() + 2);
    out.push('"');
    for c in arg.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// An assistant turn in the BUILD_QUERY shape the protocol parser accepts.
pub fn format_build_query(sparql: &str, explanation: &str) -> String {
    format!(
        "```sparql\n{}\n```\n```action\nBUILD_QUERY {}\n```",
        sparql.trim_end(),
        quote(explanation)
    )
}

/// One user/assistant pair per example, in order.
pub fn assemble_few_shot(examples: &[FewShotExample]) -> Result<Vec<ChatMessage>, LlmError> {
    if examples.is_empty() {
        return Err(LlmError::Validation(
            "few-shot example list is empty".into(),
        ));
    }
    let mut out = Vec::with_capacity(examples.len() * 2);
    for ex in examples {
        out.push(ChatMessage::templated_user(ex.question.clone()));
        let explanation = if ex.explanation.trim().is_empty() {
            "Answers the question above."
        } else {
            ex.explanation.as_str()
        };
        out.push(ChatMessage::templated_assistant(format_build_query(
            &ex.sparql,
            explanation,
        )));
    }
    Ok(out)
}

static BANKS: OnceLock<std::collections::BTreeMap<String, Vec<FewShotExample>>> = OnceLock::new();

/// The shipped example bank for a backend name, if there is one.
pub fn builtin_few_shot(backend: &str) -> Option<&'static [FewShotExample]> {
    BANKS
        .get_or_init(|| {
            serde_json::from_str(include_str!("../../data/few_shot.json"))
                .expect("bundled few-shot bank parses")
        })
        .get(backend)
        .map(Vec::as_slice)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityRecord, RecordKind};
    use crate::llm::{Origin, Role};
    use crate::sparql::parse_select;

    fn schema(prose: &str) -> SchemaSummary {
        SchemaSummary {
            backend_name: "stub".into(),
            prose: prose.into(),
            example_entities: vec![EntityRecord::new("Q5", "human", "", RecordKind::Entity)],
            example_relations: vec![],
        }
    }

    #[test]
    fn system_prompt_embeds_schema() {
        let m = assemble_system_prompt(&schema("TEST"), PROTOCOL_RULES).unwrap();
        assert_eq!(m.role, Role::System);
        assert!(m.content.contains("TEST"));
        assert!(m.content.contains("BUILD_QUERY"));
        assert!(m.content.contains("- Q5 (human)"));
        assert_eq!(
            m,
            assemble_system_prompt(&schema("TEST"), PROTOCOL_RULES).unwrap()
        );
        assert!(assemble_system_prompt(&schema("TEST"), "  ").is_err());
    }

    #[test]
    fn few_shot_shape() {
        let bank = builtin_few_shot("wikidata").unwrap();
        let msgs = assemble_few_shot(&bank[..3]).unwrap();
        assert_eq!(msgs.len(), 6);
        for (i, m) in msgs.iter().enumerate() {
            let want = if i % 2 == 0 {
                Role::User
            } else {
                Role::Assistant
            };
            assert_eq!(m.role, want);
            assert_eq!(m.origin, Origin::SystemInjected);
            assert!(!m.llm_generated);
        }
        for (pair, ex) in msgs.chunks(2).zip(bank) {
            assert!(pair[1].content.contains(ex.sparql.trim_end()));
        }
        assert_eq!(assemble_few_shot(&bank[..1]).unwrap().len(), 2);
        assert!(assemble_few_shot(&[]).is_err());
    }

    #[test]
    fn banks_are_large_enough_and_parse() {
        for backend in ["wikidata", "demo"] {
            let bank = builtin_few_shot(backend).unwrap();
            assert!(bank.len() >= 5, "{backend}");
            for ex in bank {
                parse_select(&ex.sparql).unwrap_or_else(|e| panic!("{}: {e}", ex.question));
            }
        }
        assert!(builtin_few_shot("nope").is_none());
    }

    #[test]
    fn quoting_escapes() {
        assert_eq!(quote(r#"a "b" \c"#), r#""a \"b\" \\c""#);
    }
}
