//! The transition description language.
//!
//! A transition body is a sequence of statements; `wait` and `await` end a
//! segment and suspend the process, `return` finishes it with a list of
//! updates. Macro bodies use the same language in a restricted mode.

pub mod ast;
pub mod check;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod pretty;

use alloc::format;
use alloc::string::String;

pub use ast::{Program, Span};
pub use check::{check, CheckOptions};
pub use parser::parse_program;
pub use pretty::pretty_print;

use crate::model::Severity;

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub fn error(span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            span,
            message: message.into(),
        }
    }

    pub fn warning(span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            span,
            message: message.into(),
        }
    }

    /// `line:col: error: message`
    pub fn render(&self, src: &str) -> String {
        let (line, col) = self.span.line_col(src);
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        format!("{line}:{col}: {level}: {}", self.message)
    }
}
