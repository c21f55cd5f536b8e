//! Parsing of model output and formatting of interpreter feedback.
//!
//! The model speaks a small tag grammar: snippets go inside
//! `<code>```python ... ```</code>` and the final answer inside
//! `<answer>\boxed{...}</answer>`. Execution output returns wrapped in
//! `<interpreter>...</interpreter>`.

use crate::session::{ExecResult, ExecStatus};

const CODE_OPEN: &str = "<code>";
const CODE_CLOSE: &str = "</code>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";
const BOXED_OPEN: &str = "\\boxed{";
const FENCE: &str = "```";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelAction {
    RunCode(Vec<String>),
    FinalAnswer(String),
    Neither,
}

/// Code blocks found in a message plus anything that looked malformed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CodeExtraction {
    pub blocks: Vec<String>,
    pub warnings: Vec<String>,
}

/// Scans for `<code>` regions in document order.
pub fn parse_code_blocks(text: &str) -> CodeExtraction {
    let mut out = CodeExtraction::default();
    let mut cursor = 0;
    while let Some(rel) = text[cursor..].find(CODE_OPEN) {
        let start = cursor + rel + CODE_OPEN.len();
        match text[start..].find(CODE_CLOSE) {
            Some(len) => {
                out.blocks.push(strip_fence(&text[start..start + len]).to_string());
                cursor = start + len + CODE_CLOSE.len();
            }
            None => {
                out.warnings
                    .push(format!("unclosed <code> tag at byte {}", start - CODE_OPEN.len()));
                break;
            }
        }
    }
    out
}

pub fn extract_code_blocks(text: &str) -> Vec<String> {
    parse_code_blocks(text).blocks
}

/// Removes a surrounding triple-backtick fence (with optional language word).
///
/// Text without an opening fence is returned untouched.
fn strip_fence(region: &str) -> &str {
    let lead = region.trim_start_matches([' ', '\t', '\r', '\n']);
    let Some(after_ticks) = lead.strip_prefix(FENCE) else {
        return region;
    };
    let body = match after_ticks.find('\n') {
        Some(nl) => {
            let info = after_ticks[..nl].trim();
            if info.contains(FENCE) || info.contains(char::is_whitespace) {
                // Single-line form such as ```print(1)```.
                after_ticks
            } else {
                &after_ticks[nl + 1..]
            }
        }
        None => after_ticks,
    };
    match body.rfind(FENCE) {
        Some(close) => &body[..close],
        None => body,
    }
}

/// Returns the answer inside the last complete `<answer>` region.
///
/// The `\boxed{}` payload is preferred; without one the trimmed inner text is
/// used. Blank answers count as absent.
pub fn extract_answer(text: &str) -> Option<String> {
    let mut last = None;
    let mut cursor = 0;
    while let Some(rel) = text[cursor..].find(ANSWER_OPEN) {
        let start = cursor + rel + ANSWER_OPEN.len();
        match text[start..].find(ANSWER_CLOSE) {
            Some(len) => {
                last = Some(&text[start..start + len]);
                cursor = start + len + ANSWER_CLOSE.len();
            }
            None => break,
        }
    }
    let inner = last?;
    let answer = extract_boxed(inner).unwrap_or_else(|| inner.trim().to_string());
    if answer.trim().is_empty() {
        None
    } else {
        Some(answer)
    }
}

/// Returns the payload of the last closed `\boxed{...}`.
///
/// Braces are balanced; a backslash escapes the following character so `\{`
/// and `\}` never change depth.
pub fn extract_boxed(text: &str) -> Option<String> {
    let starts: Vec<usize> = text.match_indices(BOXED_OPEN).map(|(i, _)| i).collect();
    starts.iter().rev().find_map(|&i| {
        let body = &text[i + BOXED_OPEN.len()..];
        balanced_prefix(body).map(str::to_string)
    })
}

/// Longest prefix of `s` that ends right before the brace closing an already
/// open `{`.
fn balanced_prefix(s: &str) -> Option<&str> {
    let mut depth = 1usize;
    let mut chars = s.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                chars.next();
            }
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[..i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Decides what the loop should do with one model message.
pub fn classify(text: &str) -> ModelAction {
    if let Some(answer) = extract_answer(text) {
        return ModelAction::FinalAnswer(answer);
    }
    let blocks = extract_code_blocks(text);
    if blocks.is_empty() {
        ModelAction::Neither
    } else {
        ModelAction::RunCode(blocks)
    }
}

/// Formats one execution result as interpreter feedback text.
///
/// Stdout goes in verbatim. When the run failed, or wrote to stderr, a
/// labelled section follows. Images travel as separate message parts.
pub fn wrap_interpreter(result: &ExecResult) -> String {
    let mut out = String::from("<interpreter>");
    out.push_str(&result.stdout);
    let mut section = |label: &str, body: &str| {
        if !out.ends_with('\n') && out.len() > "<interpreter>".len() {
            out.push('\n');
        }
        out.push_str(label);
        out.push('\n');
        out.push_str(body);
        if !body.is_empty() && !body.ends_with('\n') {
            out.push('\n');
        }
    };
    if result.status != ExecStatus::Ok {
        section(&format!("[{}]", result.status.as_str()), &result.error);
    }
    if !result.stderr.is_empty() {
        section("[stderr]", &result.stderr);
    }
    out.push_str("</interpreter>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn python_fence_is_stripped() {
        assert_eq!(
            extract_code_blocks("<code>```python\nprint(1)\n```</code>"),
            vec!["print(1)\n"]
        );
    }

    #[test]
    fn no_tags() {
        assert!(extract_code_blocks("no tags here").is_empty());
    }

    #[test]
    fn blocks_in_document_order() {
        let text = "a <code>```\nx = 1\n```</code> b <code>\n```py\ny = 2\n```\n</code>";
        assert_eq!(extract_code_blocks(text), vec!["x = 1\n", "y = 2\n"]);
    }

    #[test]
    fn unfenced_block_kept_verbatim() {
        assert_eq!(extract_code_blocks("<code>  x=1\n</code>"), vec!["  x=1\n"]);
    }

    #[test]
    fn unclosed_tag_warns() {
        let parsed = parse_code_blocks("<code>```\nx=1\n```</code><code>```\ny");
        assert_eq!(parsed.blocks, vec!["x=1\n"]);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn answer_prefers_boxed() {
        assert_eq!(
            extract_answer("<answer>\\boxed{five nested squares}</answer>").as_deref(),
            Some("five nested squares")
        );
        assert_eq!(extract_answer("<answer>42</answer>").as_deref(), Some("42"));
        assert_eq!(
            extract_answer("<answer>\\boxed{a+\\frac{b}{2}}</answer>").as_deref(),
            Some("a+\\frac{b}{2}")
        );
    }

    #[test]
    fn last_answer_region_wins() {
        let text = "<answer>\\boxed{1}</answer> then <answer>\\boxed{2}</answer>";
        assert_eq!(extract_answer(text).as_deref(), Some("2"));
        assert_eq!(extract_answer("<answer>  </answer>"), None);
        assert_eq!(extract_answer("<answer>open"), None);
    }

    #[test]
    fn boxed_rules() {
        assert_eq!(extract_boxed("... \\boxed{B}").as_deref(), Some("B"));
        assert_eq!(extract_boxed("\\boxed{x} then \\boxed{y}").as_deref(), Some("y"));
        assert_eq!(
            extract_boxed("\\boxed{f(\\{1,2\\})}").as_deref(),
            Some("f(\\{1,2\\})")
        );
        assert_eq!(extract_boxed("no box"), None);
        assert_eq!(extract_boxed("\\boxed{x} and \\boxed{y").as_deref(), Some("x"));
    }

    #[test]
    fn classify_precedence() {
        let code = "<code>```\nprint(1)\n```</code>";
        assert_eq!(classify(code), ModelAction::RunCode(vec!["print(1)\n".into()]));
        let both = format!("{code}<answer>\\boxed{{A}}</answer>");
        assert_eq!(classify(&both), ModelAction::FinalAnswer("A".into()));
        assert_eq!(classify("just prose"), ModelAction::Neither);
    }

    #[test]
    fn interpreter_wrapping() {
        assert_eq!(wrap_interpreter(&ExecResult::ok("2\n")), "<interpreter>2\n</interpreter>");
        assert_eq!(wrap_interpreter(&ExecResult::ok("")), "<interpreter></interpreter>");
        let tb = "Traceback (most recent call last):\nZeroDivisionError: division by zero";
        let wrapped = wrap_interpreter(&ExecResult::failed(ExecStatus::Error, tb));
        assert!(wrapped.starts_with("<interpreter>"));
        assert!(wrapped.ends_with("</interpreter>"));
        assert!(wrapped.contains(tb));
    }
}
