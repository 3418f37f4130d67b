//! Parsing and canonical rendering of assessor responses.
//!
//! A well-formed response is a `<think>...</think>` block followed by a
//! `boxed{...}` (or `\boxed{...}`) answer whose content is a dict literal:
//!
//! ```text
//! {"Whether Normal": False, "Type of Abnormality": {"L2: Abnormal Object Morphology": True,
//!  "L2: Abnormal Human Anatomy": ["L3: Abnormal Human Anatomy"]}}
//! ```
//!
//! Input accepts single or double quotes and both Python (`True`) and JSON
//! (`true`) booleans. Output always uses double quotes and Python booleans.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::taxonomy::{canonical_taxonomy, validate_labelset, L2Entry, L2Label, L3Label, LabelSet};

pub const KEY_NORMAL: &str = "Whether Normal";
pub const KEY_TYPES: &str = "Type of Abnormality";

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const BOXED: &str = "boxed{";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedResponse {
    pub think: String,
    /// Present whenever the answer was structurally readable, even if it then
    /// failed taxonomy validation.
    pub answer: Option<LabelSet>,
    pub format_ok: bool,
    pub violations: Vec<String>,
}

impl ParsedResponse {
    /// The answer, but only when the whole response is well formed.
    pub fn valid_answer(&self) -> Option<&LabelSet> {
        if self.format_ok {
            self.answer.as_ref()
        } else {
            None
        }
    }
}

/// Parses an assessor response. Total: malformed input is reported through
/// `format_ok` and `violations`, never by panicking.
pub fn parse_response(text: &str) -> ParsedResponse {
    let mut out = ParsedResponse::default();

    let after_think = match extract_think(text) {
        Ok((think, rest)) => {
            if think.trim().is_empty() {
                out.violations.push("empty think block".to_string());
            }
            out.think = think.to_string();
            rest
        }
        Err(msg) => {
            out.violations.push(msg.to_string());
            text
        }
    };

    match extract_boxed(after_think) {
        Ok(body) => match parse_answer(body) {
            Ok(set) => {
                let report = validate_labelset(canonical_taxonomy(), &set);
                out.violations
                    .extend(report.violations.iter().map(ToString::to_string));
                out.answer = Some(set);
            }
            Err(e) => out.violations.push(e.to_string()),
        },
        Err(msg) => out.violations.push(msg.to_string()),
    }

    out.format_ok = out.violations.is_empty() && out.answer.is_some();
    out
}

fn extract_think(text: &str) -> Result<(&str, &str), &'static str> {
    let open = text.find(THINK_OPEN).ok_or("missing think block")?;
    let body_start = open + THINK_OPEN.len();
    let close_rel = text[body_start..]
        .find(THINK_CLOSE)
        .ok_or("missing think block")?;
    let body = &text[body_start..body_start + close_rel];
    if body.contains(THINK_OPEN) {
        return Err("nested think block");
    }
    let rest = &text[body_start + close_rel + THINK_CLOSE.len()..];
    if rest.contains(THINK_OPEN) || rest.contains(THINK_CLOSE) {
        return Err("multiple think blocks");
    }
    Ok((body, rest))
}

/// Content of the last `boxed{...}` occurrence, braces balanced with quoted
/// strings skipped.
fn extract_boxed(text: &str) -> Result<&str, &'static str> {
    let start = text.rfind(BOXED).ok_or("missing boxed answer")? + BOXED.len();
    let bytes = text.as_bytes();
    let mut depth = 1usize;
    let mut quote: Option<u8> = None;
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) => {
                if b == b'\\' {
                    i += 1;
                } else if b == q {
                    quote = None;
                }
            }
            None => match b {
                b'"' | b'\'' => quote = Some(b),
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(&text[start..i]);
                    }
                }
                _ => {}
            },
        }
        i += 1;
    }
    Err("unterminated boxed answer")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnswerError {
    #[error("answer syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: &'static str },
    #[error("answer must be a dict")]
    NotADict,
    #[error("duplicate key \"{0}\"")]
    DuplicateKey(String),
    #[error("missing key \"Whether Normal\"")]
    MissingNormal,
    #[error("unknown answer key \"{0}\"")]
    UnknownKey(String),
    #[error("\"{0}\" has the wrong value type")]
    WrongType(String),
    #[error("unknown L2 label \"{0}\"")]
    UnknownL2(String),
    #[error("unknown L3 label \"{0}\"")]
    UnknownL3(String),
    #[error("duplicate L3 label \"{0}\"")]
    DuplicateL3(String),
}

/// Literal values accepted in the answer.
#[derive(Debug, Clone, PartialEq)]
enum Literal {
    Bool(bool),
    Str(String),
    List(Vec<Literal>),
    Dict(Vec<(String, Literal)>),
}

struct Reader<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, msg: &'static str) -> Result<T, AnswerError> {
        Err(AnswerError::Syntax { pos: self.pos, msg })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8, msg: &'static str) -> Result<(), AnswerError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(msg)
        }
    }

    fn value(&mut self) -> Result<Literal, AnswerError> {
        match self.peek() {
            Some(b'{') => self.dict(),
            Some(b'[') => self.list(),
            Some(b'"') | Some(b'\'') => self.string().map(Literal::Str),
            Some(_) => self.word(),
            None => self.err("unexpected end of answer"),
        }
    }

    fn word(&mut self) -> Result<Literal, AnswerError> {
        let rest = &self.src[self.pos..];
        for (w, v) in [
            ("True", true),
            ("true", true),
            ("False", false),
            ("false", false),
        ] {
            if rest.starts_with(w.as_bytes()) {
                let end = self.pos + w.len();
                if self
                    .src
                    .get(end)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                {
                    break;
                }
                self.pos = end;
                return Ok(Literal::Bool(v));
            }
        }
        self.err("expected a string, boolean, list or dict")
    }

    fn string(&mut self) -> Result<String, AnswerError> {
        let quote = self.src[self.pos];
        self.pos += 1;
        let mut buf: Vec<u8> = Vec::new();
        while let Some(&b) = self.src.get(self.pos) {
            self.pos += 1;
            if b == quote {
                return String::from_utf8(buf).or_else(|_| self.err("invalid utf-8 in string"));
            }
            if b == b'\\' {
                let Some(&esc) = self.src.get(self.pos) else {
                    break;
                };
                self.pos += 1;
                match esc {
                    b'n' => buf.push(b'\n'),
                    b't' => buf.push(b'\t'),
                    b'r' => buf.push(b'\r'),
                    b'\\' | b'"' | b'\'' | b'/' => buf.push(esc),
                    _ => return self.err("unsupported escape"),
                }
            } else {
                buf.push(b);
            }
        }
        self.err("unterminated string")
    }

    fn list(&mut self) -> Result<Literal, AnswerError> {
        self.pos += 1;
        let mut items = Vec::new();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(Literal::List(items));
        }
        loop {
            items.push(self.value()?);
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    // trailing comma
                    if self.peek() == Some(b']') {
                        self.pos += 1;
                        return Ok(Literal::List(items));
                    }
                }
                Some(b']') => {
                    self.pos += 1;
                    return Ok(Literal::List(items));
                }
                _ => return self.err("expected ',' or ']'"),
            }
        }
    }

    fn dict(&mut self) -> Result<Literal, AnswerError> {
        self.pos += 1;
        let mut entries: Vec<(String, Literal)> = Vec::new();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(Literal::Dict(entries));
        }
        loop {
            let key = match self.peek() {
                Some(b'"') | Some(b'\'') => self.string()?,
                _ => return self.err("expected a quoted key"),
            };
            self.expect(b':', "expected ':'")?;
            let value = self.value()?;
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(AnswerError::DuplicateKey(key));
            }
            entries.push((key, value));
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    if self.peek() == Some(b'}') {
                        self.pos += 1;
                        return Ok(Literal::Dict(entries));
                    }
                }
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(Literal::Dict(entries));
                }
                _ => return self.err("expected ',' or '}'"),
            }
        }
    }
}

/// Parses the content of a boxed answer into a label set. Performs grammar
/// and vocabulary checks only; taxonomy structure is checked separately.
pub fn parse_answer(body: &str) -> Result<LabelSet, AnswerError> {
    let mut reader = Reader {
        src: body.as_bytes(),
        pos: 0,
    };
    let lit = reader.value()?;
    if reader.peek().is_some() {
        return reader.err("trailing content after answer");
    }
    let Literal::Dict(entries) = lit else {
        return Err(AnswerError::NotADict);
    };

    let mut normal = None;
    let mut types = None;
    for (key, value) in entries {
        match key.as_str() {
            KEY_NORMAL => match value {
                Literal::Bool(b) => normal = Some(b),
                _ => return Err(AnswerError::WrongType(key)),
            },
            KEY_TYPES => match value {
                Literal::Dict(d) => types = Some(d),
                _ => return Err(AnswerError::WrongType(key)),
            },
            _ => return Err(AnswerError::UnknownKey(key)),
        }
    }
    let normal = normal.ok_or(AnswerError::MissingNormal)?;

    let mut l2 = BTreeMap::new();
    for (key, value) in types.unwrap_or_default() {
        let label = L2Label::from_name(&key).ok_or_else(|| AnswerError::UnknownL2(key.clone()))?;
        let entry = match value {
            Literal::Bool(true) => L2Entry::All,
            Literal::List(items) => {
                let mut subs = BTreeSet::new();
                for item in items {
                    let Literal::Str(name) = item else {
                        return Err(AnswerError::WrongType(key));
                    };
                    let l3 = L3Label::from_name(&name)
                        .ok_or_else(|| AnswerError::UnknownL3(name.clone()))?;
                    if !subs.insert(l3) {
                        return Err(AnswerError::DuplicateL3(name));
                    }
                }
                L2Entry::Subtypes(subs)
            }
            _ => return Err(AnswerError::WrongType(key)),
        };
        l2.insert(label, entry);
    }
    Ok(LabelSet { normal, l2 })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot render an invalid label set: {0}")]
pub struct RenderError(pub String);

/// Canonical serialization: double quotes, Python booleans, L2 keys and L3
/// lists in taxonomy order.
pub fn render_answer(set: &LabelSet) -> Result<String, RenderError> {
    let report = validate_labelset(canonical_taxonomy(), set);
    if !report.is_ok() {
        let msgs: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        return Err(RenderError(msgs.join("; ")));
    }
    let mut out = String::new();
    if set.normal {
        out.push_str("{\"Whether Normal\": True}");
        return Ok(out);
    }
    out.push_str("{\"Whether Normal\": False");
    if !set.l2.is_empty() {
        out.push_str(", \"Type of Abnormality\": {");
        for (i, (l2, entry)) in set.l2.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "\"{}\": ", l2.name());
            match entry {
                L2Entry::All => out.push_str("True"),
                L2Entry::Subtypes(s) => {
                    out.push('[');
                    for (j, l3) in s.iter().enumerate() {
                        if j > 0 {
                            out.push_str(", ");
                        }
                        let _ = write!(out, "\"{}\"", l3.name());
                    }
                    out.push(']');
                }
            }
        }
        out.push('}');
    }
    out.push('}');
    Ok(out)
}

/// Wraps a think text and a label set into a full response string.
pub fn wrap_response(think: &str, set: &LabelSet) -> Result<String, RenderError> {
    Ok(format!(
        "{THINK_OPEN}{think}{THINK_CLOSE} boxed{{{}}}",
        render_answer(set)?
    ))
}
