//! Per-step component guidance: which element on the current screen should a
//! step act on, or is a step missing?

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{ActionType, Step};
use crate::exemplar::{select_exemplars, wrap_html, ExemplarCorpus, PromptExemplar, SelectionError};
use crate::gui::{encode_gui_with, EncodeOptions, EncodedGui, ViewNode};
use crate::llm::LlmError;
use crate::prompt::{Prompt, Segment, SegmentKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceResult {
    pub component_id: Option<usize>,
    /// The model flagged a missing step; with an id this is an exploratory hop.
    pub missing: bool,
    pub raw: String,
}

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("{0} needs no component and bypasses guidance")]
    NoComponent(ActionType),
    #[error("answer names neither a component id nor a missing step: {raw:?}")]
    NoActionableAnswer { raw: String },
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Wording knobs for the query line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceOptions {
    /// Inserted before the list of already-tried ids.
    pub exclusion_clause: String,
}

impl Default for GuidanceOptions {
    fn default() -> Self {
        GuidanceOptions {
            exclusion_clause: "excluding components".into(),
        }
    }
}

/// Query line with the default wording.
pub fn query_text(step: &Step, excluded: &[usize]) -> String {
    query_text_with(step, excluded, &GuidanceOptions::default())
}

pub fn query_text_with(step: &Step, excluded: &[usize], options: &GuidanceOptions) -> String {
    let mut q = format!("If I need to {step}, which component id should I operate on the GUI");
    if !excluded.is_empty() {
        let ids: Vec<String> = excluded.iter().map(|id| format!("[id={id}]")).collect();
        q.push_str(&format!(", {} {}", options.exclusion_clause, ids.join(" ")));
    }
    q.push('?');
    q
}

/// A guidance prompt and the encoding it shows; answer ids index into `gui`.
#[derive(Debug, Clone)]
pub struct GuidancePrompt {
    pub prompt: Prompt,
    pub gui: EncodedGui,
}

/// Builds the prompt for `step` over `screen`.
///
/// `excluded` holds preorder ids of the full tree. If no exemplar fits next to
/// the full encoding, wrapper divs are elided and selection is retried.
pub fn build_guidance_prompt(
    step: &Step,
    screen: &ViewNode,
    corpus: &ExemplarCorpus,
    budget: usize,
    excluded: &BTreeSet<usize>,
    options: &GuidanceOptions,
) -> Result<GuidancePrompt, GuidanceError> {
    if !step.action.needs_component() {
        return Err(GuidanceError::NoComponent(step.action));
    }
    match assemble(step, screen, corpus, budget, excluded, options, false) {
        Err(GuidanceError::Selection(SelectionError::BudgetUnsatisfiable { .. })) => {
            log::debug!("screen too large for a guidance prompt, eliding wrapper divs");
            assemble(step, screen, corpus, budget, excluded, options, true)
        }
        other => other,
    }
}

fn assemble(
    step: &Step,
    screen: &ViewNode,
    corpus: &ExemplarCorpus,
    budget: usize,
    excluded: &BTreeSet<usize>,
    options: &GuidanceOptions,
    elide_wrappers: bool,
) -> Result<GuidancePrompt, GuidanceError> {
    let gui = encode_gui_with(screen, EncodeOptions { elide_wrappers });
    let shown: Vec<usize> = (0..gui.len())
        .filter(|&id| gui.canonical_id(id).is_some_and(|c| excluded.contains(&c)))
        .collect();
    let test = [
        Segment::new(SegmentKind::TestGui, wrap_html(gui.html())),
        Segment::new(SegmentKind::TestInput, query_text_with(step, &shown, options)),
    ];
    let fixed = test.iter().map(Segment::estimated_tokens).sum();
    let chosen = select_exemplars(&corpus.guidance, budget, fixed)?;
    let mut segments: Vec<Segment> = chosen.iter().flat_map(|e| e.segments()).collect();
    segments.extend(test);
    Ok(GuidancePrompt {
        prompt: Prompt::new(segments, chosen.len()),
        gui,
    })
}

fn id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\[\s*id\s*=\s*(\d+)\s*\]").expect("static regex"))
}

fn missing_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\[\s*missing\s*\]").expect("static regex"))
}

/// Reads `[id=N]` (last one wins) and `[MISSING]` out of a model answer.
pub fn parse_guidance_response(text: &str) -> Result<GuidanceResult, GuidanceError> {
    let component_id = id_re()
        .captures_iter(text)
        .filter_map(|c| c[1].parse::<usize>().ok())
        .last();
    let missing = missing_re().is_match(text);
    if component_id.is_none() && !missing {
        return Err(GuidanceError::NoActionableAnswer { raw: text.to_string() });
    }
    Ok(GuidanceResult {
        component_id,
        missing,
        raw: text.to_string(),
    })
}
