//! Steps-to-reproduce extraction: prompt assembly, the model call, and the
//! numbered bracket-list parser.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::entity::{ActionType, BugReport, Direction, EmptyReport, Step, DEFAULT_INPUT_VALUE};
use crate::exemplar::{select_exemplars, ExemplarCorpus, PromptExemplar, SelectionError};
use crate::llm::{LlmClient, LlmError};
use crate::prompt::{Prompt, Segment, SegmentKind};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error(transparent)]
    InvalidReport(#[from] EmptyReport),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("no numbered bracket lines in response")]
    NoStepsFound,
    #[error("malformed step {line:?}: {reason}")]
    MalformedStep { line: String, reason: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl ExtractionError {
    fn malformed(line: &str, reason: impl Into<String>) -> Self {
        ExtractionError::MalformedStep {
            line: line.trim().to_string(),
            reason: reason.into(),
        }
    }
}

/// `Tap, Scroll, Input, Double-tap, Long-tap`
pub fn actions_spec() -> String {
    ActionType::ALL.iter().map(|a| a.label()).collect::<Vec<_>>().join(", ")
}

/// `[Tap] [Component], [Scroll] [Direction], ...`
pub fn primitives_spec() -> String {
    ActionType::ALL
        .iter()
        .map(|&a| {
            let shape = a.arity();
            let mut s = format!("[{}]", a.label());
            if shape.component {
                s.push_str(" [Component]");
            }
            if shape.value {
                s.push_str(" [Value]");
            }
            if shape.direction {
                s.push_str(" [Direction]");
            }
            s
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Assembles actions spec, primitives spec, the selected exemplars and the
/// report under test, in that order.
pub fn build_extraction_prompt(
    report: &BugReport,
    corpus: &ExemplarCorpus,
    budget: usize,
) -> Result<Prompt, ExtractionError> {
    report.validate()?;
    let header = [
        Segment::new(SegmentKind::ActionsSpec, actions_spec()),
        Segment::new(SegmentKind::PrimitivesSpec, primitives_spec()),
    ];
    let test = Segment::new(SegmentKind::TestInput, report.raw_text.trim());
    let fixed = header.iter().chain([&test]).map(Segment::estimated_tokens).sum();
    let chosen = select_exemplars(&corpus.extraction, budget, fixed)?;

    let mut segments = header.to_vec();
    for exemplar in &chosen {
        segments.extend(exemplar.segments());
    }
    segments.push(test);
    Ok(Prompt::new(segments, chosen.len()))
}

fn numbered_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(\d{1,9})\s*[.)]\s*(\[.*)$").expect("static regex"))
}

/// Quote pairs accepted around bracketed free text.
const QUOTES: &[(&str, &[&str])] = &[
    ("``", &["''"]),
    ("\"", &["\"", "\u{201d}"]),
    ("\u{201c}", &["\u{201d}", "\""]),
    ("'", &["'", "\u{2019}"]),
    ("\u{2018}", &["\u{2019}", "'"]),
];

/// Reads one `[...]` token starting at `s[0] == '['`. Returns the token text
/// and the remainder after the closing bracket.
fn bracket_token(s: &str) -> Option<(String, &str)> {
    let inner = s.strip_prefix('[')?;
    let body = inner.trim_start();
    for (open, closers) in QUOTES {
        let Some(quoted) = body.strip_prefix(open) else {
            continue;
        };
        for (i, _) in quoted.char_indices() {
            for closer in *closers {
                if let Some(after) = quoted[i..].strip_prefix(closer) {
                    if let Some(rest) = after.trim_start().strip_prefix(']') {
                        return Some((quoted[..i].to_string(), rest));
                    }
                }
            }
        }
        // unterminated quote: fall back to the plain reading below
        break;
    }
    let end = inner.find(']')?;
    Some((inner[..end].trim().to_string(), &inner[end + 1..]))
}

fn bracket_tokens(mut s: &str) -> Option<Vec<String>> {
    let mut tokens = Vec::new();
    loop {
        s = s.trim_start();
        if !s.starts_with('[') {
            return Some(tokens);
        }
        let (token, rest) = bracket_token(s)?;
        tokens.push(token);
        s = rest;
    }
}

fn step_from_tokens(line: &str, tokens: &[String]) -> Result<Step, ExtractionError> {
    let (first, rest) = tokens
        .split_first()
        .ok_or_else(|| ExtractionError::malformed(line, "no bracket tokens"))?;
    let action = ActionType::normalize(first)
        .ok_or_else(|| ExtractionError::malformed(line, format!("unknown action {first:?}")))?;
    let step = match (action, rest) {
        (ActionType::Scroll, [direction]) => {
            let direction = Direction::normalize(direction)
                .ok_or_else(|| ExtractionError::malformed(line, format!("unknown direction {direction:?}")))?;
            Step::scroll(1, direction)
        }
        (ActionType::Input, [component]) => Step::input(1, component.clone(), DEFAULT_INPUT_VALUE),
        (ActionType::Input, [component, value]) => {
            let value = if value.trim().is_empty() {
                DEFAULT_INPUT_VALUE.to_string()
            } else {
                value.clone()
            };
            Step::input(1, component.clone(), value)
        }
        (ActionType::Tap, [c]) => Step::tap(1, c.clone()),
        (ActionType::DoubleTap, [c]) => Step::double_tap(1, c.clone()),
        (ActionType::LongTap, [c]) => Step::long_tap(1, c.clone()),
        (action, rest) => {
            return Err(ExtractionError::malformed(
                line,
                format!("{action} does not take {} argument(s)", rest.len()),
            ))
        }
    };
    step.validate()
        .map_err(|e| ExtractionError::malformed(line, e.to_string()))?;
    Ok(step)
}

/// Parses a single un-numbered primitive such as `[Tap] ["Sign in"]`.
pub fn parse_primitive(text: &str) -> Result<Step, ExtractionError> {
    let tokens = bracket_tokens(text)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ExtractionError::malformed(text, "unterminated bracket"))?;
    step_from_tokens(text, &tokens)
}

/// Pulls the step list out of a model response.
///
/// Only lines shaped like `N. [Action] [...]` count; surrounding prose is
/// ignored. A numbering reset starts a new list and the last list wins. Input
/// steps without a value get [`DEFAULT_INPUT_VALUE`].
pub fn parse_extraction_response(text: &str) -> Result<Vec<Step>, ExtractionError> {
    // each entry: the source line and its bracket tokens, None if unterminated
    type Entry<'a> = (&'a str, Option<Vec<String>>);
    let mut lists: Vec<Vec<Entry>> = Vec::new();
    let mut last_number = 0u32;
    for line in text.lines() {
        let Some(caps) = numbered_line().captures(line) else {
            continue;
        };
        let number: u32 = caps[1].parse().unwrap_or(0);
        if lists.is_empty() || number <= last_number {
            lists.push(Vec::new());
        }
        last_number = number;
        let tokens = bracket_tokens(caps.get(2).map_or("", |m| m.as_str()));
        lists.last_mut().expect("pushed above").push((line, tokens));
    }
    let list = lists.pop().ok_or(ExtractionError::NoStepsFound)?;
    let mut steps = Vec::with_capacity(list.len());
    for (line, tokens) in list {
        let tokens = tokens.ok_or_else(|| ExtractionError::malformed(line, "unterminated bracket"))?;
        let mut step = step_from_tokens(line, &tokens)?;
        step.index = steps.len() + 1;
        steps.push(step);
    }
    Ok(steps)
}

/// Prompt, call, parse.
pub fn extract_s2r(
    report: &BugReport,
    llm: &dyn LlmClient,
    corpus: &ExemplarCorpus,
    budget: usize,
) -> Result<Vec<Step>, ExtractionError> {
    let prompt = build_extraction_prompt(report, corpus, budget)?;
    let response = llm.complete(&prompt)?;
    parse_extraction_response(&response)
}
