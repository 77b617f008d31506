//! The `.pwx` experiment description format.
//!
//! ```text
//! experiment single_mzi
//! stage 0 basis { +, - }
//! stage 1 basis { L, R }
//! stage 2 basis { +, - }
//! step 0->1 { + -> R2: L, R2: R; - -> R2: L, -R2: R }
//! step 1->2 { L -> R2: +, R2: -; R -> R2: +, -R2: - }
//! init { 1: + }
//! ```
//!
//! Statements: `experiment`, `stage T basis {..}`, `step T->T' {..}`,
//! `filter T keep {..}`, `filter T costate {..}`, `mask T->T' {..}`,
//! `table T->T' {..}`, `init {..}`, `policy flow|table`. Groups inside a
//! step, mask or table are separated by `;`. A filter line defines its own
//! stage from the previous one. `#` starts a comment.

mod lexer;
mod literal;
mod parser;
mod serialize;

use std::fmt;

use crate::error::Error;

pub use parser::parse_experiment;
pub use serialize::serialize_experiment;

/// A located syntax error.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: Vec<String>,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, col: usize, expected: Vec<String>, message: impl Into<String>) -> Self {
        Self {
            line,
            col,
            expected,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Failure to turn source text into an experiment.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DslError {
    #[error("syntax error at {0}")]
    Syntax(ParseError),
    #[error("{line}:{col}: {source}")]
    Invalid { line: usize, col: usize, source: Error },
}

impl DslError {
    /// Position in the source the error points at.
    pub fn location(&self) -> (usize, usize) {
        match self {
            DslError::Syntax(e) => (e.line, e.col),
            DslError::Invalid { line, col, .. } => (*line, *col),
        }
    }
}

impl From<ParseError> for DslError {
    fn from(e: ParseError) -> Self {
        DslError::Syntax(e)
    }
}
