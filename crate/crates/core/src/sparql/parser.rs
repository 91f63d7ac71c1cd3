use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::lexer::{tokenize, RawComment, Tok, Token};
use super::{
    Literal, Modifiers, ParseError, ParsedQuery, PrefixTable, Projection, Term, TriplePattern,
    RDF_TYPE, XSD,
};

/// A `#` comment with the 1-based line it sits on, as shown in the editor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InlineComment {
    pub line: usize,
    pub text: String,
}

/// Comments of a query without parsing it, trimmed.
pub fn inline_comments(query_text: &str) -> Result<Vec<InlineComment>, ParseError> {
    Ok(tokenize(query_text)?
        .comments
        .into_iter()
        .map(|c| InlineComment {
            line: c.line,
            text: c.text.trim().to_string(),
        })
        .collect())
}

pub fn parse_select(query_text: &str) -> Result<ParsedQuery, ParseError> {
    if query_text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let lexed = tokenize(query_text)?;
    let mut parser = Parser {
        src: query_text,
        tokens: lexed.tokens,
        comments: &lexed.comments,
        pos: 0,
        declared: BTreeMap::new(),
        table: PrefixTable::builtin(),
        triples: Vec::new(),
        clauses: Vec::new(),
    };
    let mut parsed = parser.query()?;
    parsed.comments = lexed.comments.iter().map(|c| c.text.clone()).collect();
    Ok(parsed)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    comments: &'a [RawComment],
    pos: usize,
    declared: BTreeMap<String, String>,
    table: PrefixTable,
    triples: Vec<TriplePattern>,
    clauses: Vec<String>,
}

const SOLUTION_KEYWORDS: &[&str] = &["GROUP", "HAVING", "ORDER", "LIMIT", "OFFSET"];
const OTHER_FORMS: &[&str] = &[
    "ASK",
    "CONSTRUCT",
    "DESCRIBE",
    "INSERT",
    "DELETE",
    "LOAD",
    "CLEAR",
    "CREATE",
    "DROP",
    "WITH",
    "COPY",
    "MOVE",
    "ADD",
];

fn is_word(tok: &Tok, kw: &str) -> bool {
    matches!(tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_word(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| is_word(t, kw))
    }

    fn peek_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Tok::Punct(p)) if *p == c)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let (line, column) = match self.tokens.get(self.pos) {
            Some(t) => (t.line, t.column),
            None => end_position(self.src),
        };
        ParseError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn error_at(&self, token: &Token, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: token.line,
            column: token.column,
            message: message.into(),
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<Token, ParseError> {
        if self.peek_punct(c) {
            Ok(self.next().expect("peeked"))
        } else {
            Err(self.error_here(format!("expected '{c}'")))
        }
    }

    /// Source text between two token indices (inclusive), with comments cut
    /// out so that the span reparses to itself.
    fn slice(&self, first: usize, last: usize) -> String {
        let start = self.tokens[first].start;
        let end = self.tokens[last].end;
        let mut out = String::new();
        let mut cursor = start;
        for c in self.comments {
            if c.start >= start && c.end <= end {
                out.push_str(&self.src[cursor..c.start]);
                cursor = c.end;
            }
        }
        out.push_str(&self.src[cursor..end]);
        out
    }

    fn query(&mut self) -> Result<ParsedQuery, ParseError> {
        self.prologue()?;
        let Some(first) = self.peek().cloned() else {
            return Err(self.error_here("expected SELECT"));
        };
        if let Tok::Word(w) = &first {
            let upper = w.to_ascii_uppercase();
            if OTHER_FORMS.contains(&upper.as_str()) {
                return Err(ParseError::UnsupportedForm(upper));
            }
        }
        if !is_word(&first, "SELECT") {
            return Err(self.error_here("expected SELECT"));
        }
        self.next();

        let mut modifiers = Modifiers::default();
        if self.peek_word("DISTINCT") {
            self.next();
            modifiers.distinct = true;
        } else if self.peek_word("REDUCED") {
            self.next();
            modifiers.reduced = true;
        }

        let (mut projection, wildcard) = self.select_clause()?;

        if self.peek_word("FROM") {
            return Err(self.error_here("dataset clauses (FROM) are not supported"));
        }
        if self.peek_word("WHERE") {
            self.next();
        }
        self.expect_punct('{')?;
        self.group_body()?;
        self.solution_modifiers(&mut modifiers)?;
        if self.peek().is_some() {
            return Err(self.error_here("unexpected trailing input"));
        }

        let triples = std::mem::take(&mut self.triples);
        let mut pattern_vars: Vec<String> = Vec::new();
        for t in &triples {
            for term in [&t.subject, &t.predicate, &t.object] {
                if let Some(name) = term.variable_name() {
                    if !pattern_vars.iter().any(|v| v == name) {
                        pattern_vars.push(name.to_string());
                    }
                }
            }
        }
        if wildcard {
            projection = pattern_vars
                .iter()
                .map(|v| Projection {
                    variable: v.clone(),
                    expression: None,
                })
                .collect();
        }
        let bound: BTreeSet<&str> = pattern_vars.iter().map(String::as_str).collect();
        let dangling = projection
            .iter()
            .filter(|p| !bound.contains(p.variable.as_str()))
            .map(|p| p.variable.clone())
            .collect();

        Ok(ParsedQuery {
            projection,
            wildcard,
            triples,
            prefixes: std::mem::take(&mut self.declared),
            modifiers,
            unsupported_clauses: std::mem::take(&mut self.clauses),
            dangling,
            comments: Vec::new(),
        })
    }

    fn prologue(&mut self) -> Result<(), ParseError> {
        loop {
            if self.peek_word("PREFIX") {
                self.next();
                let Some(tok) = self.next() else {
                    return Err(self.error_here("expected prefix name"));
                };
                let prefix = match &tok.tok {
                    Tok::PName { prefix, local } if local.is_empty() => prefix.clone(),
                    _ => return Err(self.error_at(&tok, "expected prefix name ending in ':'")),
                };
                let Some(iri_tok) = self.next() else {
                    return Err(self.error_here("expected IRI after prefix name"));
                };
                let Tok::IriRef(iri) = &iri_tok.tok else {
                    return Err(self.error_at(&iri_tok, "expected <IRI> after prefix name"));
                };
                self.declared.insert(prefix, iri.clone());
                self.table = PrefixTable::with_declared(&self.declared);
            } else if self.peek_word("BASE") {
                return Err(self.error_here("BASE declarations are not supported"));
            } else {
                return Ok(());
            }
        }
    }

    fn select_clause(&mut self) -> Result<(Vec<Projection>, bool), ParseError> {
        if self.peek_punct('*') {
            self.next();
            return Ok((Vec::new(), true));
        }
        let mut items: Vec<Projection> = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Var(name)) => {
                    let name = name.clone();
                    self.next();
                    push_projection(&mut items, name, None, self)?;
                }
                Some(Tok::Punct('(')) => {
                    let open = self.pos;
                    self.next();
                    let expr_start = self.pos;
                    let mut depth = 0usize;
                    loop {
                        match self.peek() {
                            None => {
                                return Err(self.error_here("unterminated projection expression"))
                            }
                            Some(Tok::Punct('(')) => depth += 1,
                            Some(Tok::Punct(')')) if depth == 0 => {
                                return Err(self.error_here("expected AS in projection expression"))
                            }
                            Some(Tok::Punct(')')) => depth -= 1,
                            Some(t) if depth == 0 && is_word(t, "AS") => break,
                            _ => {}
                        }
                        self.next();
                    }
                    if self.pos == expr_start {
                        return Err(self.error_at(&self.tokens[open].clone(), "empty expression"));
                    }
                    let expression = self.slice(expr_start, self.pos - 1);
                    self.next(); // AS
                    let var = match self.next() {
                        Some(Token {
                            tok: Tok::Var(v), ..
                        }) => v,
                        _ => return Err(self.error_here("expected variable after AS")),
                    };
                    self.expect_punct(')')?;
                    push_projection(&mut items, var, Some(expression), self)?;
                }
                _ => break,
            }
        }
        if items.is_empty() {
            return Err(self.error_here("expected projection variables or '*'"));
        }
        Ok((items, false))
    }

    fn group_body(&mut self) -> Result<(), ParseError> {
        loop {
            let Some(tok) = self.peek().cloned() else {
                return Err(self.error_here("expected '}'"));
            };
            match tok {
                Tok::Punct('}') => {
                    self.next();
                    return Ok(());
                }
                Tok::Punct('.') => {
                    self.next();
                }
                Tok::Punct('{') => {
                    let start = self.pos;
                    self.skip_balanced()?;
                    while self.peek_word("UNION") {
                        self.next();
                        if !self.peek_punct('{') {
                            return Err(self.error_here("expected '{' after UNION"));
                        }
                        self.skip_balanced()?;
                    }
                    self.clauses.push(self.slice(start, self.pos - 1));
                }
                Tok::Word(ref w) if is_clause_keyword(w) => self.clause()?,
                _ => self.triples_same_subject()?,
            }
        }
    }

    fn clause(&mut self) -> Result<(), ParseError> {
        let start = self.pos;
        let kw = match self.next() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => w.to_ascii_uppercase(),
            _ => unreachable!("clause called on keyword"),
        };
        match kw.as_str() {
            "FILTER" => match self.peek() {
                Some(Tok::Punct('(')) => self.skip_balanced()?,
                Some(Tok::Word(w)) if w.eq_ignore_ascii_case("NOT") => {
                    self.next();
                    if !self.peek_word("EXISTS") {
                        return Err(self.error_here("expected EXISTS after NOT"));
                    }
                    self.next();
                    self.expect_group_start()?;
                    self.skip_balanced()?;
                }
                Some(Tok::Word(w)) if w.eq_ignore_ascii_case("EXISTS") => {
                    self.next();
                    self.expect_group_start()?;
                    self.skip_balanced()?;
                }
                Some(Tok::Word(_)) | Some(Tok::PName { .. }) | Some(Tok::IriRef(_)) => {
                    self.next();
                    if !self.peek_punct('(') {
                        return Err(self.error_here("expected '(' after function name"));
                    }
                    self.skip_balanced()?;
                }
                _ => return Err(self.error_here("expected constraint after FILTER")),
            },
            "BIND" => {
                if !self.peek_punct('(') {
                    return Err(self.error_here("expected '(' after BIND"));
                }
                self.skip_balanced()?;
            }
            "OPTIONAL" | "MINUS" => {
                self.expect_group_start()?;
                self.skip_balanced()?;
            }
            "SERVICE" | "GRAPH" => {
                if kw == "SERVICE" && self.peek_word("SILENT") {
                    self.next();
                }
                match self.peek() {
                    Some(Tok::IriRef(_)) | Some(Tok::PName { .. }) | Some(Tok::Var(_)) => {
                        self.next();
                    }
                    _ => {
                        return Err(self.error_here(format!("expected IRI or variable after {kw}")))
                    }
                }
                self.expect_group_start()?;
                self.skip_balanced()?;
            }
            "VALUES" => {
                match self.peek() {
                    Some(Tok::Var(_)) => {
                        self.next();
                    }
                    Some(Tok::Punct('(')) => self.skip_balanced()?,
                    _ => return Err(self.error_here("expected variable list after VALUES")),
                }
                self.expect_group_start()?;
                self.skip_balanced()?;
            }
            other => return Err(self.error_here(format!("unexpected keyword {other}"))),
        }
        self.clauses.push(self.slice(start, self.pos - 1));
        Ok(())
    }

    fn expect_group_start(&self) -> Result<(), ParseError> {
        if self.peek_punct('{') {
            Ok(())
        } else {
            Err(self.error_here("expected '{'"))
        }
    }

    /// Consume a bracketed region starting at the current `(`, `{` or `[`.
    fn skip_balanced(&mut self) -> Result<(), ParseError> {
        let open = self.pos;
        let mut depth = 0usize;
        loop {
            let Some(tok) = self.next() else {
                let opener = self.tokens[open].clone();
                return Err(self.error_at(&opener, "unbalanced bracket"));
            };
            match tok.tok {
                Tok::Punct('(' | '{' | '[') => depth += 1,
                Tok::Punct(')' | '}' | ']') => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                _ => {}
            }
        }
    }

    fn triples_same_subject(&mut self) -> Result<(), ParseError> {
        let subject_index = self.pos;
        let subject = self.subject()?;
        loop {
            self.predicate_object_list(&subject, subject_index)?;
            if self.peek_punct(';') {
                while self.peek_punct(';') {
                    self.next();
                }
                // a trailing ';' before '.' or '}' is legal
                if self.peek_punct('.') || self.peek_punct('}') {
                    break;
                }
                continue;
            }
            break;
        }
        match self.peek() {
            Some(Tok::Punct('.')) => {
                self.next();
                Ok(())
            }
            Some(Tok::Punct('}')) => Ok(()),
            Some(Tok::Word(w)) if is_clause_keyword(w) => Ok(()),
            Some(Tok::Punct('{')) => Ok(()),
            _ => Err(self.error_here("expected '.', ';', ',' or '}' after triple")),
        }
    }

    fn subject(&mut self) -> Result<Term, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_here("expected triple subject"));
        };
        match tok {
            Tok::Var(name) => {
                self.next();
                Ok(Term::var(name))
            }
            Tok::IriRef(_) | Tok::PName { .. } => {
                let token = self.next().expect("peeked");
                self.resolve_iri(&token)
            }
            Tok::Punct('[') => Err(self.error_here("blank nodes are not supported")),
            Tok::Str(_) | Tok::Integer(_) | Tok::Decimal(_) | Tok::Double(_) => {
                Err(self.error_here("a literal cannot be a triple subject"))
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("true") || w.eq_ignore_ascii_case("false") => {
                Err(self.error_here("a literal cannot be a triple subject"))
            }
            _ => Err(self.error_here("expected variable or IRI as triple subject")),
        }
    }

    fn predicate_object_list(
        &mut self,
        subject: &Term,
        subject_index: usize,
    ) -> Result<(), ParseError> {
        let verb_start = self.pos;
        let verb = self.verb()?;
        if self.at_path_continuation() || verb.is_none() {
            self.consume_path()?;
            let path_text = self.slice(verb_start, self.pos - 1);
            let subject_text = self.slice(subject_index, subject_index);
            loop {
                let obj_start = self.pos;
                self.object()?;
                let obj_text = self.slice(obj_start, self.pos - 1);
                self.clauses
                    .push(format!("{subject_text} {path_text} {obj_text} ."));
                if self.peek_punct(',') {
                    self.next();
                    continue;
                }
                return Ok(());
            }
        }
        let predicate = verb.expect("checked above");
        loop {
            let object = self.object()?;
            self.triples.push(TriplePattern {
                subject: subject.clone(),
                predicate: predicate.clone(),
                object,
            });
            if self.peek_punct(',') {
                self.next();
                continue;
            }
            return Ok(());
        }
    }

    /// Parses a simple predicate. Returns `None` when the verb starts a
    /// property path (`^`, `(`, `!`), leaving the cursor in place.
    fn verb(&mut self) -> Result<Option<Term>, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_here("expected predicate"));
        };
        match tok {
            Tok::Var(name) => {
                self.next();
                Ok(Some(Term::var(name)))
            }
            Tok::Word(w) if w == "a" => {
                self.next();
                Ok(Some(Term::iri(RDF_TYPE)))
            }
            Tok::IriRef(_) | Tok::PName { .. } => {
                let token = self.next().expect("peeked");
                Ok(Some(self.resolve_iri(&token)?))
            }
            Tok::Punct('^' | '(' | '!') => Ok(None),
            Tok::Str(_) | Tok::Integer(_) | Tok::Decimal(_) | Tok::Double(_) => {
                Err(self.error_here("a literal cannot be a predicate"))
            }
            _ => Err(self.error_here("expected predicate")),
        }
    }

    fn at_path_continuation(&self) -> bool {
        matches!(self.peek(), Some(Tok::Punct('/' | '|' | '*' | '+' | '?')))
    }

    /// Skip the remainder of a property path expression.
    fn consume_path(&mut self) -> Result<(), ParseError> {
        loop {
            match self.peek() {
                Some(Tok::Punct('/' | '|' | '*' | '+' | '?' | '^' | '!')) => {
                    self.next();
                }
                Some(Tok::Punct('(')) => self.skip_balanced()?,
                Some(Tok::IriRef(_)) | Some(Tok::PName { .. }) => {
                    // an IRI directly after another path element is the object
                    let prev = &self.tokens[self.pos - 1].tok;
                    if matches!(prev, Tok::Punct('/' | '|' | '^' | '!')) {
                        self.next();
                    } else {
                        return Ok(());
                    }
                }
                Some(Tok::Word(w)) if w == "a" => {
                    let prev = &self.tokens[self.pos - 1].tok;
                    if matches!(prev, Tok::Punct('/' | '|' | '^' | '!')) {
                        self.next();
                    } else {
                        return Ok(());
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn object(&mut self) -> Result<Term, ParseError> {
        let Some(token) = self.next() else {
            return Err(self.error_here("expected triple object"));
        };
        match &token.tok {
            Tok::Var(name) => Ok(Term::var(name.clone())),
            Tok::IriRef(_) | Tok::PName { .. } => self.resolve_iri(&token),
            Tok::Str(value) => {
                let value = value.clone();
                match self.peek() {
                    Some(Tok::LangTag(tag)) => {
                        let tag = tag.clone();
                        self.next();
                        Ok(Term::Literal(Literal {
                            value,
                            datatype: None,
                            language: Some(tag),
                        }))
                    }
                    Some(Tok::DoubleCaret) => {
                        self.next();
                        let Some(dt) = self.next() else {
                            return Err(self.error_here("expected datatype IRI"));
                        };
                        let Term::Iri { iri } = self.resolve_iri(&dt)? else {
                            unreachable!("resolve_iri returns IRIs")
                        };
                        Ok(Term::Literal(Literal::typed(value, iri)))
                    }
                    _ => Ok(Term::Literal(Literal::plain(value))),
                }
            }
            Tok::Integer(n) => Ok(Term::Literal(Literal::typed(
                n.clone(),
                format!("{XSD}integer"),
            ))),
            Tok::Decimal(n) => Ok(Term::Literal(Literal::typed(
                n.clone(),
                format!("{XSD}decimal"),
            ))),
            Tok::Double(n) => Ok(Term::Literal(Literal::typed(
                n.clone(),
                format!("{XSD}double"),
            ))),
            Tok::Punct(sign @ ('-' | '+')) => {
                let sign = *sign;
                let Some(num) = self.next() else {
                    return Err(self.error_at(&token, "expected number after sign"));
                };
                let (text, kind) = match num.tok {
                    Tok::Integer(n) => (n, "integer"),
                    Tok::Decimal(n) => (n, "decimal"),
                    Tok::Double(n) => (n, "double"),
                    _ => return Err(self.error_at(&num, "expected number after sign")),
                };
                let text = if sign == '-' {
                    format!("-{text}")
                } else {
                    text
                };
                Ok(Term::Literal(Literal::typed(text, format!("{XSD}{kind}"))))
            }
            Tok::Word(w) if w == "true" || w == "false" => Ok(Term::Literal(Literal::typed(
                w.clone(),
                format!("{XSD}boolean"),
            ))),
            Tok::Punct('[') | Tok::Punct('(') => {
                Err(self.error_at(&token, "blank nodes and collections are not supported"))
            }
            _ => Err(self.error_at(&token, "expected triple object")),
        }
    }

    fn resolve_iri(&self, token: &Token) -> Result<Term, ParseError> {
        match &token.tok {
            Tok::IriRef(iri) => Ok(Term::iri(iri.clone())),
            Tok::PName { prefix, local } => self
                .table
                .expand(prefix, local)
                .map(Term::iri)
                .ok_or_else(|| self.error_at(token, format!("unknown prefix '{prefix}:'"))),
            _ => Err(self.error_at(token, "expected IRI")),
        }
    }

    fn solution_modifiers(&mut self, modifiers: &mut Modifiers) -> Result<(), ParseError> {
        if self.peek_word("GROUP") {
            self.next();
            self.expect_word("BY")?;
            modifiers.group_by = Some(self.raw_until_modifier("GROUP BY")?);
        }
        if self.peek_word("HAVING") {
            self.next();
            modifiers.having = Some(self.raw_until_modifier("HAVING")?);
        }
        if self.peek_word("ORDER") {
            self.next();
            self.expect_word("BY")?;
            modifiers.order_by = Some(self.raw_until_modifier("ORDER BY")?);
        }
        for _ in 0..2 {
            if self.peek_word("LIMIT") && modifiers.limit.is_none() {
                self.next();
                modifiers.limit = Some(self.integer("LIMIT")?);
            } else if self.peek_word("OFFSET") && modifiers.offset.is_none() {
                self.next();
                modifiers.offset = Some(self.integer("OFFSET")?);
            }
        }
        Ok(())
    }

    fn expect_word(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.peek_word(kw) {
            self.next();
            Ok(())
        } else {
            Err(self.error_here(format!("expected {kw}")))
        }
    }

    fn integer(&mut self, what: &str) -> Result<u64, ParseError> {
        match self.next() {
            Some(Token {
                tok: Tok::Integer(n),
                ..
            }) => n
                .parse()
                .map_err(|_| self.error_here(format!("{what} value out of range"))),
            _ => Err(self.error_here(format!("expected integer after {what}"))),
        }
    }

    fn raw_until_modifier(&mut self, what: &str) -> Result<String, ParseError> {
        let start = self.pos;
        let mut depth = 0usize;
        while let Some(tok) = self.peek() {
            match tok {
                Tok::Punct('(') => depth += 1,
                Tok::Punct(')') => depth = depth.saturating_sub(1),
                t if depth == 0 && SOLUTION_KEYWORDS.iter().any(|k| is_word(t, k)) => break,
                _ => {}
            }
            self.next();
        }
        if self.pos == start {
            return Err(self.error_here(format!("expected conditions after {what}")));
        }
        Ok(self.slice(start, self.pos - 1))
    }
}

fn push_projection(
    items: &mut Vec<Projection>,
    variable: String,
    expression: Option<String>,
    parser: &Parser<'_>,
) -> Result<(), ParseError> {
    if items.iter().any(|p| p.variable == variable) {
        return Err(parser.error_here(format!("variable ?{variable} projected twice")));
    }
    items.push(Projection {
        variable,
        expression,
    });
    Ok(())
}

fn is_clause_keyword(word: &str) -> bool {
    [
        "FILTER", "OPTIONAL", "BIND", "SERVICE", "MINUS", "VALUES", "GRAPH",
    ]
    .iter()
    .any(|k| word.eq_ignore_ascii_case(k))
}

fn end_position(src: &str) -> (usize, usize) {
    let line = src.matches('\n').count() + 1;
    let last = src.rsplit('\n').next().unwrap_or("");
    (line, last.chars().count() + 1)
}
