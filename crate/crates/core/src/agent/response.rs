//! Parsing of model responses into Thought / Action / Action Input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Program,
    FinalAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub thought: String,
    pub action: Action,
    pub action_input: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct FormatError(pub String);

impl FormatError {
    /// Feedback that names the problem and restates the valid formats.
    pub fn feedback(&self) -> String {
        format!(
            "Observation: FormatError: {}. ALWAYS adhere to the valid output format:\n\
             Thought: ...\nAction: Final Answer\nAction Input: your final answer with NO MORE THAN 3 words\n\
             or\n\
             Thought: ...\nAction: Program\nAction Input:\n```Python\nYOUR PROGRAM\n```",
            self.0
        )
    }
}

const THOUGHT: &str = "Thought:";
const ACTION: &str = "Action:";
const ACTION_INPUT: &str = "Action Input:";

/// (line start, marker end) byte offsets of `marker` occurring at the start of a line (ignoring
/// leading whitespace and markdown emphasis).
fn line_markers(text: &str, marker: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start_matches([' ', '\t', '*', '#']);
        let lead = line.len() - trimmed.len();
        let stripped = trimmed.strip_prefix("**").unwrap_or(trimmed);
        if stripped.len() >= marker.len() && stripped[..marker.len()].eq_ignore_ascii_case(marker) {
            let start = offset;
            let mut end = offset + lead + (trimmed.len() - stripped.len()) + marker.len();
            end += text[end..].len() - text[end..].trim_start_matches('*').len();
            out.push((start, end));
        }
        offset += line.len();
    }
    out
}

fn parse_action(raw: &str) -> Result<Action, FormatError> {
    let name: String = raw
        .trim()
        .trim_matches(|c: char| c == '*' || c == '`' || c == '"' || c == '\'' || c == '.' || c == '[' || c == ']')
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase();
    match name.as_str() {
        "program" => Ok(Action::Program),
        "final answer" => Ok(Action::FinalAnswer),
        "" => Err(FormatError("the Action line is empty; it should be one of [Final Answer, Program]".into())),
        _ => Err(FormatError(format!(
            "unknown action '{}'; the action should be one of [Final Answer, Program]",
            raw.trim()
        ))),
    }
}

/// Removes a surrounding code fence (```python ... ```), or a bare leading
/// "Python" language line.
pub fn strip_fences(body: &str) -> String {
    let t = body.trim();
    if let Some(open) = t.find("```") {
        let after = &t[open + 3..];
        let content_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let lang = after[..content_start].trim();
        if lang.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            let content = &after[content_start..];
            let inner = match content.find("```") {
                Some(close) => &content[..close],
                None => content,
            };
            return inner.trim_end().trim_start_matches('\n').to_string();
        }
    }
    let mut lines = t.lines();
    if let Some(first) = lines.clone().next() {
        if first.trim().eq_ignore_ascii_case("python") {
            lines.next();
            return lines.collect::<Vec<_>>().join("\n").trim_start_matches('\n').to_string();
        }
    }
    t.to_string()
}

/// Splits a response on its last `Action Input:` marker and the last
/// `Action:` / `Thought:` markers before it.
pub fn parse_response(text: &str) -> Result<ParsedResponse, FormatError> {
    let Some(&(input_start, input_end)) = line_markers(text, ACTION_INPUT).last() else {
        return Err(FormatError("missing 'Action Input:' line".into()));
    };
    let head = &text[..input_start];
    let Some(&(action_start, action_end)) = line_markers(head, ACTION).last() else {
        return Err(FormatError("missing 'Action:' line before 'Action Input:'".into()));
    };
    let Some(&(thought_start, thought_end)) = line_markers(&head[..action_start], THOUGHT).last() else {
        return Err(FormatError("missing 'Thought:' line before 'Action:'".into()));
    };
    let _ = thought_start;
    let thought = head[thought_end..action_start].trim().to_string();
    let action = parse_action(&head[action_end..])?;
    let raw_input = &text[input_end..];
    let action_input = match action {
        Action::Program => strip_fences(raw_input),
        Action::FinalAnswer => {
            strip_fences(raw_input).lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
        }
    };
    if action_input.is_empty() {
        return Err(FormatError("the Action Input is empty".into()));
    }
    Ok(ParsedResponse { thought, action, action_input })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_answer() {
        let p = parse_response("Thought: t\nAction: Final Answer\nAction Input: brown").unwrap();
        assert_eq!(
            p,
            ParsedResponse { thought: "t".into(), action: Action::FinalAnswer, action_input: "brown".into() }
        );
    }

    #[test]
    fn program_fences_are_removed() {
        let text = "Thought: look\nAction: Program\nAction Input:\n```python\nx = 1\nprint(x)\n```\n";
        let p = parse_response(text).unwrap();
        assert_eq!(p.action, Action::Program);
        assert_eq!(p.action_input, "x = 1\nprint(x)");
        let bare = parse_response("Thought: look\nAction: Program\nAction Input:\nPython\nprint(1)").unwrap();
        assert_eq!(bare.action_input, "print(1)");
    }

    #[test]
    fn unknown_action_is_a_format_error() {
        let e = parse_response("Thought: t\nAction: Plan\nAction Input: x").unwrap_err();
        assert!(e.0.contains("unknown action 'Plan'"));
        assert!(e.feedback().starts_with("Observation: FormatError: unknown action 'Plan'"));
    }

    #[test]
    fn missing_markers() {
        assert!(parse_response("just text").is_err());
        assert!(parse_response("Action: Program\nAction Input: x").unwrap_err().0.contains("Thought"));
        assert!(parse_response("Thought: t\nAction Input: x").unwrap_err().0.contains("Action:"));
        assert!(parse_response("Thought: t\nAction: Final Answer\nAction Input:   ").is_err());
    }

    #[test]
    fn markers_inside_programs_do_not_confuse_the_parser() {
        let text = "Thought: old\nAction: Final Answer\nThought: plan\nAction: Program\nAction Input:\n```python\nprint(\"Action: x\")\n```";
        let p = parse_response(text).unwrap();
        assert_eq!(p.thought, "plan");
        assert_eq!(p.action, Action::Program);
        assert_eq!(p.action_input, "print(\"Action: x\")");
    }

    #[test]
    fn bold_markers_and_case() {
        let p = parse_response("**Thought:** fine\n**Action:** final answer\n**Action Input:** two chairs").unwrap();
        assert_eq!(p.action, Action::FinalAnswer);
        assert_eq!(p.action_input, "two chairs");
        assert_eq!(p.thought, "fine");
    }
}
