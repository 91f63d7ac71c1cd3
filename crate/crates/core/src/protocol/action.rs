//! The fenced action block an assistant turn must end with.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionVerb {
    Clarify,
    #[serde(rename = "WELLFORMED")]
    WellFormed,
    Search,
    Properties,
    Traverse,
    BuildQuery,
    Stop,
}

impl ActionVerb {
    pub const ALL: [ActionVerb; 7] = [
        ActionVerb::Clarify,
        ActionVerb::WellFormed,
        ActionVerb::Search,
        ActionVerb::Properties,
        ActionVerb::Traverse,
        ActionVerb::BuildQuery,
        ActionVerb::Stop,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ActionVerb::Clarify => "CLARIFY",
            ActionVerb::WellFormed => "WELLFORMED",
            ActionVerb::Search => "SEARCH",
            ActionVerb::Properties => "PROPERTIES",
            ActionVerb::Traverse => "TRAVERSE",
            ActionVerb::BuildQuery => "BUILD_QUERY",
            ActionVerb::Stop => "STOP",
        }
    }

    fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.keyword() == word)
    }
}

impl std::fmt::Display for ActionVerb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Clarify {
        text: String,
    },
    #[serde(rename = "WELLFORMED")]
    WellFormed,
    Search {
        term: String,
    },
    Properties {
        id: String,
    },
    Traverse {
        head: String,
        relation: String,
    },
    BuildQuery {
        sparql: String,
        explanation: String,
    },
    Stop {
        reason: String,
    },
}

impl Action {
    pub fn verb(&self) -> ActionVerb {
        match self {
            Action::Clarify { .. } => ActionVerb::Clarify,
            Action::WellFormed => ActionVerb::WellFormed,
            Action::Search { .. } => ActionVerb::Search,
            Action::Properties { .. } => ActionVerb::Properties,
            Action::Traverse { .. } => ActionVerb::Traverse,
            Action::BuildQuery { .. } => ActionVerb::BuildQuery,
            Action::Stop { .. } => ActionVerb::Stop,
        }
    }
}

/// An assistant turn split into the prose shown to the user and its action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReply {
    pub prose: String,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionParseError {
    #[error("reply has no ```action block")]
    Missing,
    #[error("reply has {0} ```action blocks; exactly one is allowed")]
    Multiple(usize),
    #[error("action block is not closed with ```")]
    Unclosed,
    #[error("action block is empty")]
    Empty,
    #[error("unknown action verb '{0}'")]
    UnknownVerb(String),
    #[error("{verb} takes {expected}, got {got} argument(s)")]
    Arity {
        verb: ActionVerb,
        expected: &'static str,
        got: usize,
    },
    #[error("{verb} argument {index} is empty")]
    EmptyArgument { verb: ActionVerb, index: usize },
    #[error("malformed arguments: {0}")]
    Arguments(String),
    #[error("BUILD_QUERY needs the query in a ```sparql block or as its first argument")]
    MissingSparql,
}

struct Fence<'a> {
    info: &'a str,
    body: &'a str,
    start: usize,
    end: usize,
}

/// Fenced code blocks (``` at line start) in order of appearance.
fn fences(text: &str) -> Result<Vec<Fence<'_>>, ActionParseError> {
    let mut out = Vec::new();
    let mut offset = 0;
    let mut open: Option<(usize, &str, usize)> = None;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(info) = trimmed.strip_prefix("```") {
            match open {
                None => open = Some((offset, info.trim(), offset + line.len())),
                Some((start, info_open, body_start)) if info.trim().is_empty() => {
                    out.push(Fence {
                        info: info_open,
                        body: &text[body_start..offset],
                        start,
                        end: offset + line.len(),
                    });
                    open = None;
                }
                Some(_) => {}
            }
        }
        offset += line.len();
    }
    if let Some((_, info, _)) = open {
        if info == "action" {
            return Err(ActionParseError::Unclosed);
        }
    }
    Ok(out)
}

fn split_args(raw: &str) -> Result<Vec<String>, ActionParseError> {
    let mut args = Vec::new();
    let mut chars = raw.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            None => return Ok(args),
            Some('"') => {
                let mut arg = String::new();
                loop {
                    match chars.next() {
                        None => {
                            return Err(ActionParseError::Arguments(
                                "unterminated quoted argument".into(),
                            ))
                        }
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some('n') => arg.push('\n'),
                            Some('t') => arg.push('\t'),
                            Some(c @ ('"' | '\\')) => arg.push(c),
                            Some(c) => {
                                return Err(ActionParseError::Arguments(format!(
                                    "unknown escape \\{c}"
                                )))
                            }
                            None => {
                                return Err(ActionParseError::Arguments(
                                    "dangling backslash".into(),
                                ))
                            }
                        },
                        Some(c) => arg.push(c),
                    }
                }
                if chars.peek().is_some_and(|c| !c.is_whitespace()) {
                    return Err(ActionParseError::Arguments(
                        "arguments must be separated by whitespace".into(),
                    ));
                }
                args.push(arg);
            }
            Some(c) => {
                return Err(ActionParseError::Arguments(format!(
                    "expected a double-quoted argument, found '{c}'"
                )))
            }
        }
    }
}

fn nonempty(verb: ActionVerb, args: &[String]) -> Result<(), ActionParseError> {
    match args.iter().position(|a| a.trim().is_empty()) {
        Some(i) => Err(ActionParseError::EmptyArgument { verb, index: i + 1 }),
        None => Ok(()),
    }
}

pub fn parse_action(text: &str) -> Result<ParsedReply, ActionParseError> {
    let blocks = fences(text)?;
    let actions: Vec<&Fence> = blocks.iter().filter(|f| f.info == "action").collect();
    let block = match actions.len() {
        0 => return Err(ActionParseError::Missing),
        1 => actions[0],
        n => return Err(ActionParseError::Multiple(n)),
    };
    let body = block.body.trim();
    if body.is_empty() {
        return Err(ActionParseError::Empty);
    }
    let (word, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
    let verb = ActionVerb::from_keyword(word)
        .ok_or_else(|| ActionParseError::UnknownVerb(word.to_string()))?;
    let args = split_args(rest)?;
    nonempty(verb, &args)?;
    let arity = |expected: &'static str| ActionParseError::Arity {
        verb,
        expected,
        got: args.len(),
    };
    let action = match verb {
        ActionVerb::Clarify => match args.as_slice() {
            [text] => Action::Clarify { text: text.clone() },
            _ => return Err(arity("1")),
        },
        ActionVerb::WellFormed => match args.as_slice() {
            [] => Action::WellFormed,
            _ => return Err(arity("0")),
        },
        ActionVerb::Search => match args.as_slice() {
            [term] => Action::Search {
                term: term.trim().to_string(),
            },
            _ => return Err(arity("1")),
        },
        ActionVerb::Properties => match args.as_slice() {
            [id] => Action::Properties {
                id: id.trim().to_string(),
            },
            _ => return Err(arity("1")),
        },
        ActionVerb::Traverse => match args.as_slice() {
            [head, relation] => Action::Traverse {
                head: head.trim().to_string(),
                relation: relation.trim().to_string(),
            },
            _ => return Err(arity("2")),
        },
        ActionVerb::Stop => match args.as_slice() {
            [] => Action::Stop {
                reason: String::new(),
            },
            [reason] => Action::Stop {
                reason: reason.clone(),
            },
            _ => return Err(arity("0 or 1")),
        },
        ActionVerb::BuildQuery => {
            let sparql_blocks: Vec<&Fence> = blocks.iter().filter(|f| f.info == "sparql").collect();
            match (args.as_slice(), sparql_blocks.as_slice()) {
                ([sparql, explanation], _) => Action::BuildQuery {
                    sparql: sparql.trim().to_string(),
                    explanation: explanation.clone(),
                },
                ([explanation], [block]) if !block.body.trim().is_empty() => Action::BuildQuery {
                    sparql: block.body.trim().to_string(),
                    explanation: explanation.clone(),
                },
                ([_], _) => return Err(ActionParseError::MissingSparql),
                _ => return Err(arity("1 or 2")),
            }
        }
    };
    let prose = format!("{}{}", &text[..block.start], &text[block.end..])
        .trim()
        .to_string();
    Ok(ParsedReply { prose, action })
}
