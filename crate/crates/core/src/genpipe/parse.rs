//! Extraction of enumerated sentences from generated replies.

use crate::error::{Error, Result};

/// A non-blank reply line, with its enumeration marker (if any) removed.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Line<'a> {
    number: Option<u32>,
    marked: bool,
    text: &'a str,
}

fn classify(line: &str) -> Line<'_> {
    let t = line.trim();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return Line { number: None, marked: true, text: rest.trim() };
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 && digits <= 3 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                return Line {
                    number: t[..digits].parse().ok(),
                    marked: true,
                    text: rest.trim(),
                };
            }
        }
    }
    Line { number: None, marked: false, text: t }
}

fn content_lines(text: &str) -> Vec<Line<'_>> {
    let lines: Vec<Line<'_>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(classify)
        .collect();
    if lines.iter().any(|l| l.marked) {
        lines.into_iter().filter(|l| l.marked && !l.text.is_empty()).collect()
    } else {
        lines
    }
}

/// Extracts exactly `expected` sentences from an enumerated reply.
///
/// Markers `1.`, `1)`, `-`, `*` are stripped and blank lines dropped. When any
/// line carries a marker, unmarked lines (preambles, trailing remarks) are dropped.
pub fn parse_numbered_list(text: &str, expected: usize) -> Result<Vec<String>> {
    if expected == 0 {
        return Err(Error::validation("expected_count", "must be at least 1"));
    }
    let items: Vec<String> = content_lines(text)
        .into_iter()
        .map(|l| l.text.to_owned())
        .collect();
    if items.len() != expected {
        return Err(Error::ListParse {
            expected,
            raw: text.to_owned(),
        });
    }
    Ok(items)
}

/// Extracts the revised backstory from a revision reply.
///
/// Revision replies carry an evaluation followed by the revised sequence, which
/// may or may not repeat the concluding event. The last run of marked lines
/// restarting at `1` is taken; a fifth item is discarded because the concluding
/// event is never taken from the model.
pub fn parse_revised_sequence(text: &str, backstory_len: usize) -> Result<Vec<String>> {
    let lines = content_lines(text);
    let start = lines
        .iter()
        .rposition(|l| l.number == Some(1))
        .unwrap_or(0);
    let block: Vec<String> = lines[start..].iter().map(|l| l.text.to_owned()).collect();
    match block.len() {
        n if n == backstory_len || n == backstory_len + 1 => {
            Ok(block.into_iter().take(backstory_len).collect())
        }
        _ => Err(Error::ListParse {
            expected: backstory_len,
            raw: text.to_owned(),
        }),
    }
}

/// First non-blank paragraph of a reply, trimmed, with wrapping quotes removed.
pub fn single_sentence(text: &str) -> Option<String> {
    let t = text.trim();
    if t.is_empty() || t.contains('\n') {
        return None;
    }
    let t = t
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(t)
        .trim();
    (!t.is_empty()).then(|| t.to_owned())
}
