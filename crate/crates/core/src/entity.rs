//! Closed action vocabulary and the typed reproduction step.
//!
//! A [`Step`] is rendered in the bracketed primitive form used by prompts,
//! transcripts and traces, e.g. `[Input] ["name"] ["a"]` or `[Scroll] [Down]`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Value typed into an input field when the report gives none.
pub const DEFAULT_INPUT_VALUE: &str = "test";

/// The five supported GUI actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Tap,
    Scroll,
    Input,
    DoubleTap,
    LongTap,
}

impl ActionType {
    pub const ALL: [ActionType; 5] = [
        ActionType::Tap,
        ActionType::Scroll,
        ActionType::Input,
        ActionType::DoubleTap,
        ActionType::LongTap,
    ];

    /// Canonical spelling used inside brackets.
    pub fn label(self) -> &'static str {
        match self {
            ActionType::Tap => "Tap",
            ActionType::Scroll => "Scroll",
            ActionType::Input => "Input",
            ActionType::DoubleTap => "Double-tap",
            ActionType::LongTap => "Long-tap",
        }
    }

    /// Which optional fields a step of this action must carry.
    pub fn arity(self) -> PrimitiveShape {
        match self {
            ActionType::Tap | ActionType::DoubleTap | ActionType::LongTap => PrimitiveShape {
                component: true,
                value: false,
                direction: false,
            },
            ActionType::Input => PrimitiveShape {
                component: true,
                value: true,
                direction: false,
            },
            ActionType::Scroll => PrimitiveShape {
                component: false,
                value: false,
                direction: true,
            },
        }
    }

    /// True when the action targets an on-screen component.
    pub fn needs_component(self) -> bool {
        self.arity().component
    }

    /// Recognizes the literal action tokens, case-insensitively.
    ///
    /// `double-tap`, `double tap`, `double_tap` and `doubletap` are all
    /// accepted. Semantic synonyms such as "open" or "click" are not: mapping
    /// those is left to the model.
    pub fn normalize(word: &str) -> Option<ActionType> {
        let folded: String = word
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' ' | '\t'))
            .flat_map(char::to_lowercase)
            .collect();
        match folded.as_str() {
            "tap" => Some(ActionType::Tap),
            "scroll" => Some(ActionType::Scroll),
            "input" => Some(ActionType::Input),
            "doubletap" => Some(ActionType::DoubleTap),
            "longtap" => Some(ActionType::LongTap),
            _ => None,
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Free function form of [`ActionType::arity`].
pub fn arity(action: ActionType) -> PrimitiveShape {
    action.arity()
}

/// Free function form of [`ActionType::normalize`].
pub fn normalize_action(word: &str) -> Option<ActionType> {
    ActionType::normalize(word)
}

/// Required-field set of an action primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimitiveShape {
    pub component: bool,
    pub value: bool,
    pub direction: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn label(self) -> &'static str {
        match self {
            Direction::Up => "Up",
            Direction::Down => "Down",
            Direction::Left => "Left",
            Direction::Right => "Right",
        }
    }

    /// Accepts `up`, `upward`, `upwards` and the like for all four axes.
    pub fn normalize(word: &str) -> Option<Direction> {
        let w = word.trim().to_lowercase();
        let base = w.strip_suffix("wards").or_else(|| w.strip_suffix("ward")).unwrap_or(&w);
        match base {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("{action} step requires a component")]
    MissingComponent { action: ActionType },
    #[error("{action} step must not carry a component")]
    UnexpectedComponent { action: ActionType },
    #[error("{action} step requires a value")]
    MissingValue { action: ActionType },
    #[error("{action} step must not carry a value")]
    UnexpectedValue { action: ActionType },
    #[error("{action} step requires a direction")]
    MissingDirection { action: ActionType },
    #[error("{action} step must not carry a direction")]
    UnexpectedDirection { action: ActionType },
    #[error("{field} text is empty")]
    EmptyText { field: &'static str },
    #[error("{field} text cannot be written in bracket form: {text:?}")]
    Unrepresentable { field: &'static str, text: String },
    #[error("step index {found} out of sequence (expected {expected})")]
    IndexOutOfSequence { expected: usize, found: usize },
}

/// One typed reproduction step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    /// 1-based ordinal within its list.
    pub index: usize,
    pub action: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

impl Step {
    pub fn tap(index: usize, component: impl Into<String>) -> Self {
        Self::on_component(index, ActionType::Tap, component)
    }

    pub fn double_tap(index: usize, component: impl Into<String>) -> Self {
        Self::on_component(index, ActionType::DoubleTap, component)
    }

    pub fn long_tap(index: usize, component: impl Into<String>) -> Self {
        Self::on_component(index, ActionType::LongTap, component)
    }

    pub fn input(index: usize, component: impl Into<String>, value: impl Into<String>) -> Self {
        Step {
            index,
            action: ActionType::Input,
            component: Some(component.into()),
            value: Some(value.into()),
            direction: None,
        }
    }

    pub fn scroll(index: usize, direction: Direction) -> Self {
        Step {
            index,
            action: ActionType::Scroll,
            component: None,
            value: None,
            direction: Some(direction),
        }
    }

    fn on_component(index: usize, action: ActionType, component: impl Into<String>) -> Self {
        Step {
            index,
            action,
            component: Some(component.into()),
            value: None,
            direction: None,
        }
    }

    /// Checks the field set against the action's arity and that free text
    /// survives the bracketed textual form.
    pub fn validate(&self) -> Result<(), StepError> {
        let shape = self.action.arity();
        let action = self.action;
        match (shape.component, &self.component) {
            (true, None) => return Err(StepError::MissingComponent { action }),
            (false, Some(_)) => return Err(StepError::UnexpectedComponent { action }),
            (true, Some(text)) => check_text("component", text)?,
            (false, None) => {}
        }
        match (shape.value, &self.value) {
            (true, None) => return Err(StepError::MissingValue { action }),
            (false, Some(_)) => return Err(StepError::UnexpectedValue { action }),
            (true, Some(text)) => check_text("value", text)?,
            (false, None) => {}
        }
        match (shape.direction, self.direction) {
            (true, None) => Err(StepError::MissingDirection { action }),
            (false, Some(_)) => Err(StepError::UnexpectedDirection { action }),
            _ => Ok(()),
        }
    }

    /// Primitive form without the list ordinal, e.g. `[Tap] ["bookmark"]`.
    pub fn primitive(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.action)?;
        if let Some(component) = &self.component {
            write!(f, " [\"{component}\"]")?;
        }
        if let Some(value) = &self.value {
            write!(f, " [\"{value}\"]")?;
        }
        if let Some(direction) = self.direction {
            write!(f, " [{direction}]")?;
        }
        Ok(())
    }
}

/// Free text must be non-empty, single-line, and must not contain a closing
/// quote followed by `]`, which would end the bracket token early.
fn check_text(field: &'static str, text: &str) -> Result<(), StepError> {
    if text.trim().is_empty() {
        return Err(StepError::EmptyText { field });
    }
    if text.contains(['\n', '\r']) || closes_bracket_early(text) {
        return Err(StepError::Unrepresentable {
            field,
            text: text.to_string(),
        });
    }
    Ok(())
}

fn closes_bracket_early(text: &str) -> bool {
    text.char_indices()
        .any(|(i, c)| matches!(c, '"' | '\u{201d}') && text[i + c.len_utf8()..].trim_start().starts_with(']'))
}

/// Checks every step and that indices run 1..=n.
pub fn validate_steps(steps: &[Step]) -> Result<(), StepError> {
    for (i, step) in steps.iter().enumerate() {
        if step.index != i + 1 {
            return Err(StepError::IndexOutOfSequence {
                expected: i + 1,
                found: step.index,
            });
        }
        step.validate()?;
    }
    Ok(())
}

/// Rewrites indices to 1..=n in place.
pub fn renumber(steps: &mut [Step]) {
    for (i, step) in steps.iter_mut().enumerate() {
        step.index = i + 1;
    }
}

/// Numbered list form, one `N. [Action] ...` line per step.
pub fn render_step_list(steps: &[Step]) -> String {
    steps.iter().map(|s| format!("{}. {}\n", s.index, s)).collect()
}

/// A bug report as written by its reporter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    #[serde(rename = "text")]
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bug report {id:?} has no text")]
pub struct EmptyReport {
    pub id: String,
}

impl BugReport {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Result<Self, EmptyReport> {
        let report = BugReport {
            id: id.into(),
            raw_text: raw_text.into(),
        };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<(), EmptyReport> {
        if self.raw_text.trim().is_empty() {
            return Err(EmptyReport { id: self.id.clone() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_matches_primitive_table() {
        let tap = arity(ActionType::Tap);
        assert!(tap.component && !tap.value && !tap.direction);
        let input = arity(ActionType::Input);
        assert!(input.component && input.value && !input.direction);
        let scroll = arity(ActionType::Scroll);
        assert!(!scroll.component && !scroll.value && scroll.direction);
        assert_eq!(arity(ActionType::DoubleTap), tap);
        assert_eq!(arity(ActionType::LongTap), tap);
    }

    #[test]
    fn normalize_literal_tokens() {
        assert_eq!(normalize_action("Tap"), Some(ActionType::Tap));
        assert_eq!(normalize_action("open"), None);
        assert_eq!(normalize_action("click"), None);
        assert_eq!(normalize_action(""), None);

        let spellings = [
            ("double-tap", ActionType::DoubleTap),
            ("double tap", ActionType::DoubleTap),
            ("Double-Tap", ActionType::DoubleTap),
            ("DOUBLE TAP", ActionType::DoubleTap),
            ("doubletap", ActionType::DoubleTap),
            ("double_tap", ActionType::DoubleTap),
            ("long-tap", ActionType::LongTap),
            ("Long tap", ActionType::LongTap),
            ("SCROLL", ActionType::Scroll),
            ("input", ActionType::Input),
        ];
        for (word, expected) in spellings {
            assert_eq!(normalize_action(word), Some(expected), "{word}");
        }
        for action in ActionType::ALL {
            assert_eq!(normalize_action(action.label()), Some(action));
        }
    }

    #[test]
    fn direction_synonyms() {
        assert_eq!(Direction::normalize("upward"), Some(Direction::Up));
        assert_eq!(Direction::normalize("Downwards"), Some(Direction::Down));
        assert_eq!(Direction::normalize("left"), Some(Direction::Left));
        assert_eq!(Direction::normalize("sideways"), None);
        assert_eq!(Direction::normalize("ward"), None);
    }

    #[test]
    fn steps_validate_by_arity() {
        for action in ActionType::ALL {
            let shape = action.arity();
            let exact = Step {
                index: 1,
                action,
                component: shape.component.then(|| "c".to_string()),
                value: shape.value.then(|| "v".to_string()),
                direction: shape.direction.then_some(Direction::Down),
            };
            assert_eq!(exact.validate(), Ok(()), "{action}");

            let mut extra = exact.clone();
            if shape.direction {
                extra.component = Some("c".into());
            } else {
                extra.direction = Some(Direction::Up);
            }
            assert!(extra.validate().is_err(), "{action} with extra field");

            let mut short = exact.clone();
            if shape.direction {
                short.direction = None;
            } else {
                short.component = None;
            }
            assert!(short.validate().is_err(), "{action} with missing field");
        }
        let mut input = Step::input(1, "name", "a");
        input.value = None;
        assert_eq!(
            input.validate(),
            Err(StepError::MissingValue {
                action: ActionType::Input
            })
        );
    }

    #[test]
    fn textual_form() {
        assert_eq!(Step::input(3, "name", "a").to_string(), r#"[Input] ["name"] ["a"]"#);
        assert_eq!(Step::tap(1, "bookmark").to_string(), r#"[Tap] ["bookmark"]"#);
        assert_eq!(Step::scroll(2, Direction::Down).to_string(), "[Scroll] [Down]");
        assert_eq!(Step::long_tap(1, "photo").to_string(), r#"[Long-tap] ["photo"]"#);
        assert_eq!(
            render_step_list(&[Step::tap(1, "a"), Step::double_tap(2, "b")]),
            "1. [Tap] [\"a\"]\n2. [Double-tap] [\"b\"]\n"
        );
    }

    #[test]
    fn unrepresentable_text_rejected() {
        assert!(Step::tap(1, "").validate().is_err());
        assert!(Step::tap(1, "   ").validate().is_err());
        assert!(Step::tap(1, "two\nlines").validate().is_err());
        assert!(Step::tap(1, "x\"] y").validate().is_err());
        assert!(Step::tap(1, "x\u{201d}]").validate().is_err());
        assert_eq!(Step::tap(1, "ends with quote\"").validate(), Ok(()));
        assert_eq!(Step::tap(1, "the \"OK\" button").validate(), Ok(()));
        assert_eq!(Step::tap(1, "list [2]").validate(), Ok(()));
    }

    #[test]
    fn index_sequence_checked() {
        let steps = vec![Step::tap(1, "a"), Step::tap(3, "b")];
        assert_eq!(
            validate_steps(&steps),
            Err(StepError::IndexOutOfSequence { expected: 2, found: 3 })
        );
        let mut steps = steps;
        renumber(&mut steps);
        assert_eq!(validate_steps(&steps), Ok(()));
    }

    #[test]
    fn empty_report_rejected() {
        assert!(BugReport::new("r1", "  \n").is_err());
        assert!(BugReport::new("r1", "1. Open app").is_ok());
    }
}
