//! Tokenizer for the SELECT subset.
//!
//! Every token keeps its byte span so callers can slice raw source text for
//! clauses that are carried through unparsed (FILTER, OPTIONAL, ...).

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Var(String),
    IriRef(String),
    PName {
        prefix: String,
        local: String,
    },
    Str(String),
    LangTag(String),
    DoubleCaret,
    Integer(String),
    Decimal(String),
    Double(String),
    Word(String),
    Punct(char),
    /// Two-character operators (`&&`, `||`, `!=`, `<=`, `>=`).
    Op(&'static str),
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RawComment {
    pub line: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug)]
pub(crate) struct Lexed {
    pub tokens: Vec<Token>,
    pub comments: Vec<RawComment>,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    line_start: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.line_start = self.pos;
        }
        Some(c)
    }

    fn column(&self) -> usize {
        self.src[self.line_start..self.pos].chars().count() + 1
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }
}

fn is_pn_chars_base(c: char) -> bool {
    c.is_alphabetic()
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

pub(crate) fn tokenize(src: &str) -> Result<Lexed, ParseError> {
    let mut cur = Cursor {
        src,
        pos: 0,
        line: 1,
        line_start: 0,
    };
    let mut tokens = Vec::new();
    let mut comments = Vec::new();

    loop {
        while matches!(cur.peek(), Some(c) if c.is_whitespace()) {
            cur.bump();
        }
        let Some(c) = cur.peek() else { break };
        let start = cur.pos;
        let line = cur.line;
        let column = cur.column();

        if c == '#' {
            cur.bump();
            let text_start = cur.pos;
            while matches!(cur.peek(), Some(ch) if ch != '\n') {
                cur.bump();
            }
            let text = src[text_start..cur.pos].trim_end_matches('\r').to_string();
            comments.push(RawComment {
                line,
                start,
                end: cur.pos,
                text,
            });
            continue;
        }

        let tok = match c {
            '?' | '$' => {
                cur.bump();
                let name_start = cur.pos;
                while matches!(cur.peek(), Some(ch) if ch.is_alphanumeric() || ch == '_') {
                    cur.bump();
                }
                if cur.pos == name_start {
                    // a bare `?` is a path modifier
                    Tok::Punct('?')
                } else {
                    Tok::Var(src[name_start..cur.pos].to_string())
                }
            }
            '<' => lex_angle(&mut cur)?,
            '"' | '\'' => Tok::Str(lex_string(&mut cur, c)?),
            '@' => {
                cur.bump();
                let tag_start = cur.pos;
                while matches!(cur.peek(), Some(ch) if ch.is_ascii_alphanumeric() || ch == '-') {
                    cur.bump();
                }
                if cur.pos == tag_start {
                    return Err(cur.error("empty language tag"));
                }
                Tok::LangTag(src[tag_start..cur.pos].to_string())
            }
            '^' if cur.peek_at(1) == Some('^') => {
                cur.bump();
                cur.bump();
                Tok::DoubleCaret
            }
            '0'..='9' => lex_number(&mut cur),
            '.' if matches!(cur.peek_at(1), Some('0'..='9')) => lex_number(&mut cur),
            '&' if cur.peek_at(1) == Some('&') => {
                cur.bump();
                cur.bump();
                Tok::Op("&&")
            }
            '|' if cur.peek_at(1) == Some('|') => {
                cur.bump();
                cur.bump();
                Tok::Op("||")
            }
            '!' if cur.peek_at(1) == Some('=') => {
                cur.bump();
                cur.bump();
                Tok::Op("!=")
            }
            '>' if cur.peek_at(1) == Some('=') => {
                cur.bump();
                cur.bump();
                Tok::Op(">=")
            }
            '{' | '}' | '(' | ')' | '[' | ']' | '.' | ';' | ',' | '*' | '=' | '>' | '!' | '+'
            | '-' | '/' | '|' | '^' => {
                cur.bump();
                Tok::Punct(c)
            }
            ':' => lex_pname(&mut cur, String::new())?,
            c if is_pn_chars_base(c) || c == '_' => {
                while matches!(cur.peek(), Some(ch) if is_name_char(ch) || ch == '.') {
                    // a trailing '.' terminates the triple, not the name
                    if cur.peek() == Some('.')
                        && !matches!(cur.peek_at(1), Some(n) if is_name_char(n))
                    {
                        break;
                    }
                    cur.bump();
                }
                let word = src[start..cur.pos].to_string();
                if cur.peek() == Some(':') {
                    if word.starts_with('_') && word != "_" {
                        return Err(cur.error("blank nodes are not supported"));
                    }
                    lex_pname(&mut cur, word)?
                } else {
                    Tok::Word(word)
                }
            }
            other => return Err(cur.error(format!("unexpected character '{other}'"))),
        };
        tokens.push(Token {
            tok,
            start,
            end: cur.pos,
            line,
            column,
        });
    }

    Ok(Lexed { tokens, comments })
}

fn lex_angle(cur: &mut Cursor<'_>) -> Result<Tok, ParseError> {
    // Either an IRI reference or a comparison operator.
    let rest = &cur.src[cur.pos + 1..];
    let iri_end = rest.find(|ch: char| ch == '>' || ch.is_whitespace() || ch == '<' || ch == '"');
    if let Some(idx) = iri_end {
        if rest[idx..].starts_with('>') && !rest[..idx].contains(['{', '}', '|', '^', '`', '\\']) {
            let iri = rest[..idx].to_string();
            for _ in 0..iri.chars().count() + 2 {
                cur.bump();
            }
            return Ok(Tok::IriRef(iri));
        }
    }
    cur.bump();
    if cur.peek() == Some('=') {
        cur.bump();
        return Ok(Tok::Op("<="));
    }
    Ok(Tok::Punct('<'))
}

fn lex_pname(cur: &mut Cursor<'_>, prefix: String) -> Result<Tok, ParseError> {
    // consume ':'
    cur.bump();
    let local_start = cur.pos;
    while let Some(ch) = cur.peek() {
        let inner_dot = ch == '.' && matches!(cur.peek_at(1), Some(n) if is_name_char(n));
        if is_name_char(ch) || ch == ':' || inner_dot {
            cur.bump();
        } else {
            break;
        }
    }
    Ok(Tok::PName {
        prefix,
        local: cur.src[local_start..cur.pos].to_string(),
    })
}

fn lex_string(cur: &mut Cursor<'_>, quote: char) -> Result<String, ParseError> {
    let long = cur.peek_at(1) == Some(quote) && cur.peek_at(2) == Some(quote);
    let delim_len = if long { 3 } else { 1 };
    for _ in 0..delim_len {
        cur.bump();
    }
    let mut out = String::new();
    loop {
        let Some(ch) = cur.bump() else {
            return Err(cur.error("unterminated string literal"));
        };
        if ch == '\\' {
            let Some(esc) = cur.bump() else {
                return Err(cur.error("unterminated escape"));
            };
            out.push(match esc {
                't' => '\t',
                'n' => '\n',
                'r' => '\r',
                'b' => '\u{8}',
                'f' => '\u{c}',
                '"' => '"',
                '\'' => '\'',
                '\\' => '\\',
                'u' | 'U' => {
                    let width = if esc == 'u' { 4 } else { 8 };
                    let mut hex = String::new();
                    for _ in 0..width {
                        hex.push(
                            cur.bump()
                                .ok_or_else(|| cur.error("short unicode escape"))?,
                        );
                    }
                    u32::from_str_radix(&hex, 16)
                        .ok()
                        .and_then(char::from_u32)
                        .ok_or_else(|| cur.error("invalid unicode escape"))?
                }
                other => return Err(cur.error(format!("invalid escape '\\{other}'"))),
            });
            continue;
        }
        if ch == quote {
            if !long {
                return Ok(out);
            }
            if cur.peek() == Some(quote) && cur.peek_at(1) == Some(quote) {
                cur.bump();
                cur.bump();
                return Ok(out);
            }
        } else if !long && (ch == '\n' || ch == '\r') {
            return Err(cur.error("newline in short string literal"));
        }
        out.push(ch);
    }
}

fn lex_number(cur: &mut Cursor<'_>) -> Tok {
    let start = cur.pos;
    let mut seen_dot = false;
    let mut seen_exp = false;
    while let Some(ch) = cur.peek() {
        match ch {
            '0'..='9' => {
                cur.bump();
            }
            '.' if !seen_dot && !seen_exp && matches!(cur.peek_at(1), Some('0'..='9')) => {
                seen_dot = true;
                cur.bump();
            }
            'e' | 'E' if !seen_exp => {
                let next = cur.peek_at(1);
                let after = cur.peek_at(2);
                let valid = matches!(next, Some('0'..='9'))
                    || (matches!(next, Some('+' | '-')) && matches!(after, Some('0'..='9')));
                if !valid {
                    break;
                }
                seen_exp = true;
                cur.bump();
                if matches!(cur.peek(), Some('+' | '-')) {
                    cur.bump();
                }
            }
            _ => break,
        }
    }
    let text = cur.src[start..cur.pos].to_string();
    if seen_exp {
        Tok::Double(text)
    } else if seen_dot {
        Tok::Decimal(text)
    } else {
        Tok::Integer(text)
    }
}
