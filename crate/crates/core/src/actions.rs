//! The click/type action space and its two text syntaxes.
//!
//! * record style (canonical): `{"action": "click", "ref": "5"}` and
//!   `{"action": "type", "ref": "3", "text": "hello"}`
//! * functional style: `click(5)` and `type(3, "hello")`
//!
//! Record text escapes `"` and `\` (and control characters) JSON-style.
//! Functional text cannot contain `"`.

use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::dom::Ref;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Function {
    Click,
    Type,
}

impl Function {
    pub fn as_str(self) -> &'static str {
        match self {
            Function::Click => "click",
            Function::Type => "type",
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `function(selector, text)`: a click or a type addressed to an element ref.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Click { target: Ref },
    Type { target: Ref, text: String },
}

impl Action {
    pub fn click(target: Ref) -> Self {
        Action::Click { target }
    }

    pub fn type_text(target: Ref, text: impl Into<String>) -> Self {
        Action::Type { target, text: text.into() }
    }

    pub fn function(&self) -> Function {
        match self {
            Action::Click { .. } => Function::Click,
            Action::Type { .. } => Function::Type,
        }
    }

    pub fn target(&self) -> Ref {
        match self {
            Action::Click { target } | Action::Type { target, .. } => *target,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            Action::Click { .. } => None,
            Action::Type { text, .. } => Some(text),
        }
    }

    /// Canonical record-style text.
    pub fn to_record(&self) -> String {
        let mut out = format!(
            "{{\"action\": \"{}\", \"ref\": \"{}\"",
            self.function(),
            self.target()
        );
        if let Some(text) = self.text() {
            out.push_str(", \"text\": ");
            out.push_str(&Value::String(text.to_string()).to_string());
        }
        out.push('}');
        out
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_record())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionStyle {
    Record,
    Functional,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionParseError {
    #[error("unknown action function {0:?}")]
    UnknownFunction(String),
    #[error("action is missing its ref")]
    MissingRef,
    #[error("ref must be a positive integer, got {0:?}")]
    NonIntegerRef(String),
    #[error("type action needs non-empty text")]
    MissingText,
    #[error("unexpected trailing input {0:?}")]
    TrailingGarbage(String),
    #[error("malformed action: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionFormatError {
    #[error("functional syntax cannot carry a double quote in text {0:?}")]
    QuoteInFunctionalText(String),
}

/// Renders `action` in `style`. Only the functional style can fail, on text
/// containing `"`.
pub fn format_action(action: &Action, style: ActionStyle) -> Result<String, ActionFormatError> {
    match style {
        ActionStyle::Record => Ok(action.to_record()),
        ActionStyle::Functional => match action {
            Action::Click { target } => Ok(format!("click({target})")),
            Action::Type { target, text } => {
                if text.contains('"') {
                    return Err(ActionFormatError::QuoteInFunctionalText(text.clone()));
                }
                Ok(format!("type({target}, \"{text}\")"))
            }
        },
    }
}

/// Accepts either syntax; leading `{` selects the record grammar.
pub fn parse_action(source: &str) -> Result<Action, ActionParseError> {
    let trimmed = source.trim();
    if trimmed.starts_with('{') {
        parse_record(trimmed)
    } else {
        parse_functional(trimmed)
    }
}

fn parse_record(source: &str) -> Result<Action, ActionParseError> {
    let mut stream = serde_json::Deserializer::from_str(source).into_iter::<Value>();
    let value = match stream.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => return Err(ActionParseError::Malformed(e.to_string())),
        None => return Err(ActionParseError::Malformed("empty input".into())),
    };
    let rest = source[stream.byte_offset()..].trim();
    if !rest.is_empty() {
        return Err(ActionParseError::TrailingGarbage(rest.to_string()));
    }
    let Value::Object(mut members) = value else {
        return Err(ActionParseError::Malformed("expected an object".into()));
    };
    let function = match members.remove("action") {
        Some(Value::String(s)) => s,
        Some(other) => return Err(ActionParseError::Malformed(format!("action must be a string, got {other}"))),
        None => return Err(ActionParseError::Malformed("missing \"action\" member".into())),
    };
    let function = match function.as_str() {
        "click" => Function::Click,
        "type" => Function::Type,
        _ => return Err(ActionParseError::UnknownFunction(function)),
    };
    let target = match members.remove("ref") {
        None => return Err(ActionParseError::MissingRef),
        Some(Value::String(s)) => parse_ref(s.trim())?,
        Some(Value::Number(n)) => parse_ref(&n.to_string())?,
        Some(other) => return Err(ActionParseError::NonIntegerRef(other.to_string())),
    };
    let text = members.remove("text");
    reject_extra(&members)?;
    match function {
        Function::Click => match text {
            None => Ok(Action::Click { target }),
            Some(_) => Err(ActionParseError::Malformed("click takes no text".into())),
        },
        Function::Type => match text {
            Some(Value::String(s)) if !s.is_empty() => Ok(Action::Type { target, text: s }),
            Some(Value::String(_)) | None => Err(ActionParseError::MissingText),
            Some(other) => Err(ActionParseError::Malformed(format!("text must be a string, got {other}"))),
        },
    }
}

fn reject_extra(members: &Map<String, Value>) -> Result<(), ActionParseError> {
    match members.keys().next() {
        Some(key) => Err(ActionParseError::Malformed(format!("unexpected member {key:?}"))),
        None => Ok(()),
    }
}

fn parse_ref(s: &str) -> Result<Ref, ActionParseError> {
    if s.is_empty() {
        return Err(ActionParseError::MissingRef);
    }
    if !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ActionParseError::NonIntegerRef(s.to_string()));
    }
    match s.parse::<Ref>() {
        Ok(0) | Err(_) => Err(ActionParseError::NonIntegerRef(s.to_string())),
        Ok(r) => Ok(r),
    }
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        match self.rest.strip_prefix(c) {
            Some(rest) => {
                self.rest = rest;
                true
            }
            None => false,
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        self.skip_ws();
        let end = self.rest.find(|c| !pred(c)).unwrap_or(self.rest.len());
        let (head, tail) = self.rest.split_at(end);
        self.rest = tail;
        head
    }
}

fn parse_functional(source: &str) -> Result<Action, ActionParseError> {
    let mut cur = Cursor { rest: source };
    let name = cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    let function = match name {
        "click" => Function::Click,
        "type" => Function::Type,
        "" => return Err(ActionParseError::Malformed(format!("no function name in {source:?}"))),
        other => return Err(ActionParseError::UnknownFunction(other.to_string())),
    };
    if !cur.eat('(') {
        return Err(ActionParseError::Malformed(format!("expected '(' after {name}")));
    }
    let digits = cur.take_while(|c| !c.is_whitespace() && c != ',' && c != ')');
    let target = parse_ref(digits)?;
    let action = match function {
        Function::Click => Action::Click { target },
        Function::Type => {
            if !cur.eat(',') {
                return Err(ActionParseError::MissingText);
            }
            if !cur.eat('"') {
                return Err(ActionParseError::Malformed("type text must be double-quoted".into()));
            }
            let Some(end) = cur.rest.find('"') else {
                return Err(ActionParseError::Malformed("unterminated text".into()));
            };
            let text = &cur.rest[..end];
            cur.rest = &cur.rest[end + 1..];
            if text.is_empty() {
                return Err(ActionParseError::MissingText);
            }
            Action::Type { target, text: text.to_string() }
        }
    };
    if !cur.eat(')') {
        cur.skip_ws();
        return Err(if cur.rest.is_empty() {
            ActionParseError::Malformed("expected ')'".into())
        } else {
            ActionParseError::TrailingGarbage(cur.rest.to_string())
        });
    }
    cur.skip_ws();
    if !cur.rest.is_empty() {
        return Err(ActionParseError::TrailingGarbage(cur.rest.to_string()));
    }
    Ok(action)
}
