//! Syntax of the calculus: abstract syntax, parser and pretty-printer.
//!
//! Source files use the `.arrc` extension, UTF-8 text with `//` line
//! comments.

pub mod ast;
mod lexer;
mod parser;
mod pretty;

pub use ast::{Annotation, Expr, FunDecl, Modifier, Program, TypeExpr, Value};
pub use parser::{parse, ParseOutcome};
pub use pretty::pretty;

use std::fmt;

/// A positioned, rule-tagged message. Static diagnostics carry the name
/// of the violated typing rule so tooling and tests can match on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: u32,
    pub col: u32,
    pub rule: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(span: ast::Span, rule: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            line: span.line,
            col: span.col,
            rule: rule.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.col, self.rule, self.message)
    }
}
