//! Sandboxed interpreter for the Python-like programs the model writes under
//! `Action: Program`.
//!
//! Programs can only reach the scene through the query API bound as
//! builtins; there is no I/O other than `print`, no imports, no function
//! definitions and no `while`. Every run is bounded by [`EvalLimits`].

pub mod ast;
mod eval;
pub mod lexer;
pub mod parser;
pub mod value;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::api::ToolContext;
pub use ast::Program;

/// Reminder shown when a program runs cleanly but prints nothing.
pub const NO_OUTPUT_FEEDBACK: &str = "Observation: (no output — use print(...) to display values)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub message: String,
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Syntax,
    Name,
    Type,
    Value,
    Attribute,
    Limit,
    Api,
}

impl ErrorKind {
    /// Exception name used when rendering feedback for the model.
    pub fn default_label(self) -> &'static str {
        match self {
            ErrorKind::Syntax => "SyntaxError",
            ErrorKind::Name => "NameError",
            ErrorKind::Type => "TypeError",
            ErrorKind::Value => "ValueError",
            ErrorKind::Attribute => "AttributeError",
            ErrorKind::Limit => "ResourceLimitError",
            ErrorKind::Api => "APIError",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorKind::Syntax => "syntax",
            ErrorKind::Name => "name",
            ErrorKind::Type => "type",
            ErrorKind::Value => "value",
            ErrorKind::Attribute => "attribute",
            ErrorKind::Limit => "limit",
            ErrorKind::Api => "api",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeErrorReport {
    pub kind: ErrorKind,
    /// Python-style exception name, e.g. `ZeroDivisionError` for a value error.
    pub label: String,
    pub message: String,
    pub line: usize,
    /// Output printed before the failure.
    pub partial_output: Vec<String>,
}

impl RuntimeErrorReport {
    pub fn new(kind: ErrorKind, message: impl Into<String>, line: usize) -> Self {
        RuntimeErrorReport {
            kind,
            label: kind.default_label().to_string(),
            message: message.into(),
            line: line.max(1),
            partial_output: Vec::new(),
        }
    }
}

impl fmt::Display for RuntimeErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (line {})", self.label, self.message, self.line)
    }
}

impl std::error::Error for RuntimeErrorReport {}

impl From<SyntaxError> for RuntimeErrorReport {
    fn from(e: SyntaxError) -> Self {
        RuntimeErrorReport::new(ErrorKind::Syntax, e.message, e.line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalLimits {
    pub max_steps: u64,
    pub max_output_chars: usize,
    pub max_collection_len: usize,
}

impl Default for EvalLimits {
    fn default() -> Self {
        EvalLimits { max_steps: 100_000, max_output_chars: 4_096, max_collection_len: 10_000 }
    }
}

impl EvalLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 || self.max_output_chars == 0 || self.max_collection_len == 0 {
            return Err("evaluation limits must all be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub lines: Vec<String>,
    pub truncated: bool,
}

pub type ExecResult = Result<Observation, RuntimeErrorReport>;

/// Parses a program, mapping failures to syntax reports.
pub fn parse(source: &str) -> Result<Program, RuntimeErrorReport> {
    parser::parse(source).map_err(RuntimeErrorReport::from)
}

/// Runs a parsed program against the tool context.
pub fn execute(program: &Program, ctx: &ToolContext<'_>, limits: &EvalLimits) -> ExecResult {
    eval::run(program, ctx, limits)
}

/// Parses and runs `source`.
pub fn run_program(source: &str, ctx: &ToolContext<'_>, limits: &EvalLimits) -> ExecResult {
    let program = parse(source)?;
    execute(&program, ctx, limits)
}

/// Splits captured stdout into lines; a trailing newline does not add an empty line.
pub(crate) fn split_output(out: &str) -> Vec<String> {
    if out.is_empty() {
        return Vec::new();
    }
    let body = out.strip_suffix('\n').unwrap_or(out);
    body.split('\n').map(str::to_string).collect()
}

/// Text returned to the model after a program runs.
pub fn format_feedback(result: &ExecResult) -> String {
    match result {
        Ok(obs) if obs.lines.is_empty() && !obs.truncated => NO_OUTPUT_FEEDBACK.to_string(),
        Ok(obs) => {
            let mut s = format!("Observation: {}", obs.lines.join("\n"));
            if obs.truncated {
                s.push_str("\n... (output truncated)");
            }
            s
        }
        Err(e) => {
            let mut s = String::from("Observation: ");
            for line in &e.partial_output {
                s.push_str(line);
                s.push('\n');
            }
            s.push_str(&e.to_string());
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feedback_formats() {
        let ok: ExecResult = Ok(Observation { lines: vec!["5".into()], truncated: false });
        assert_eq!(format_feedback(&ok), "Observation: 5");
        let empty: ExecResult = Ok(Observation::default());
        assert_eq!(format_feedback(&empty), NO_OUTPUT_FEEDBACK);
        let err: ExecResult = Err(RuntimeErrorReport::new(ErrorKind::Name, "name 'x' is not defined", 2));
        assert_eq!(format_feedback(&err), "Observation: NameError: name 'x' is not defined (line 2)");
    }

    #[test]
    fn output_splitting() {
        assert_eq!(split_output("a\nb\n"), vec!["a", "b"]);
        assert_eq!(split_output("a"), vec!["a"]);
        assert_eq!(split_output("\n"), vec![""]);
        assert!(split_output("").is_empty());
    }
}
