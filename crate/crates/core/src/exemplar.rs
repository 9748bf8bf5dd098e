//! Few-shot exemplar corpora and token-budgeted selection.
//!
//! Corpus files are TOML with two arrays of tables:
//!
//! ```toml
//! [[extraction]]
//! input = "1. Open bookmark ..."
//! cot = "1st step is ..."
//! output = "1. [Tap] [\"bookmark\"] ..."
//!
//! [[guidance]]
//! gui_html = "<div id=0> ... </div>"
//! query = "[Tap] [\"Sign in\"]"
//! cot = "There is no explicit ..."
//! output = "[id=6]"
//! ```
//!
//! Records are kept in file order, most representative first.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use crate::entity::{Step, StepError};
use crate::extraction::{parse_extraction_response, parse_primitive, ExtractionError};
use crate::guidance::{parse_guidance_response, query_text, GuidanceResult};
use crate::prompt::{Segment, SegmentKind};

/// Hard ceiling on few-shot exemplars per prompt.
pub const MAX_EXEMPLARS: usize = 3;

const BUILTIN_CORPUS: &str = include_str!("../data/corpus.toml");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corpus is not valid TOML: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("extraction exemplar {index}: {reason}")]
    Extraction { index: usize, reason: String },
    #[error("guidance exemplar {index}: {reason}")]
    Guidance { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("no exemplars available")]
    EmptyCorpus,
    #[error("prompt needs {required} tokens but the budget is {budget}")]
    BudgetUnsatisfiable { required: usize, budget: usize },
}

/// Anything that contributes a block of segments to a few-shot prompt.
pub trait PromptExemplar {
    fn segments(&self) -> Vec<Segment>;

    fn estimated_tokens(&self) -> usize {
        self.segments().iter().map(Segment::estimated_tokens).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionExemplar {
    pub input_report: String,
    pub chain_of_thought: String,
    /// Output block exactly as authored.
    pub output_text: String,
    pub output_steps: Vec<Step>,
}

impl PromptExemplar for ExtractionExemplar {
    fn segments(&self) -> Vec<Segment> {
        vec![
            Segment::new(SegmentKind::ExemplarInput, self.input_report.clone()),
            Segment::new(SegmentKind::ChainOfThought, self.chain_of_thought.clone()),
            Segment::new(SegmentKind::ExemplarOutput, self.output_text.clone()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuidanceExemplar {
    pub gui_html: String,
    pub query_step: Step,
    pub chain_of_thought: String,
    pub output: GuidanceResult,
}

impl PromptExemplar for GuidanceExemplar {
    fn segments(&self) -> Vec<Segment> {
        vec![
            Segment::new(SegmentKind::GuiEncoding, wrap_html(&self.gui_html)),
            Segment::new(SegmentKind::ExemplarInput, query_text(&self.query_step, &[])),
            Segment::new(SegmentKind::ChainOfThought, self.chain_of_thought.clone()),
            Segment::new(SegmentKind::ExemplarOutput, self.output.raw.clone()),
        ]
    }
}

/// Encoded screens appear in prompts inside an `<html>` element.
pub fn wrap_html(html: &str) -> String {
    format!("<html>\n{}\n</html>", html.trim_end())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExemplarCorpus {
    pub extraction: Vec<ExtractionExemplar>,
    pub guidance: Vec<GuidanceExemplar>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    #[serde(default)]
    extraction: Vec<ExtractionRecord>,
    #[serde(default)]
    guidance: Vec<GuidanceRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtractionRecord {
    input: String,
    cot: String,
    output: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GuidanceRecord {
    gui_html: String,
    query: String,
    cot: String,
    output: String,
}

impl ExemplarCorpus {
    /// The corpus compiled into the crate.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_CORPUS).expect("builtin corpus is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CorpusError> {
        let file: CorpusFile = toml::from_str(text)?;
        let extraction = file
            .extraction
            .into_iter()
            .enumerate()
            .map(|(index, r)| extraction_exemplar(r).map_err(|reason| CorpusError::Extraction { index, reason }))
            .collect::<Result<_, _>>()?;
        let guidance = file
            .guidance
            .into_iter()
            .enumerate()
            .map(|(index, r)| guidance_exemplar(r).map_err(|reason| CorpusError::Guidance { index, reason }))
            .collect::<Result<_, _>>()?;
        Ok(ExemplarCorpus { extraction, guidance })
    }

    /// Appends another corpus after this one.
    pub fn extend(&mut self, other: ExemplarCorpus) {
        self.extraction.extend(other.extraction);
        self.guidance.extend(other.guidance);
    }
}

fn extraction_exemplar(r: ExtractionRecord) -> Result<ExtractionExemplar, String> {
    if r.input.trim().is_empty() {
        return Err("input is empty".into());
    }
    if r.cot.trim().is_empty() {
        return Err("cot is empty".into());
    }
    let output_steps = parse_extraction_response(&r.output).map_err(|e: ExtractionError| e.to_string())?;
    Ok(ExtractionExemplar {
        input_report: r.input,
        chain_of_thought: r.cot,
        output_text: r.output,
        output_steps,
    })
}

fn guidance_exemplar(r: GuidanceRecord) -> Result<GuidanceExemplar, String> {
    if r.cot.trim().is_empty() {
        return Err("cot is empty".into());
    }
    let query_step = parse_primitive(r.query.trim())
        .map_err(|e| e.to_string())
        .and_then(|mut s| {
            s.index = 1;
            s.validate().map_err(|e: StepError| e.to_string())?;
            Ok(s)
        })?;
    if !query_step.action.needs_component() {
        return Err(format!("query {} has no component to look up", query_step));
    }
    let output = parse_guidance_response(&r.output).map_err(|e| e.to_string())?;
    if let Some(id) = output.component_id {
        if !html_ids(&r.gui_html).contains(&id) {
            return Err(format!("output id {id} does not appear in gui_html"));
        }
    }
    Ok(GuidanceExemplar {
        gui_html: r.gui_html,
        query_step,
        chain_of_thought: r.cot,
        output,
    })
}

/// Every `id=N` attribute value in encoded html, in document order.
pub fn html_ids(html: &str) -> Vec<usize> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"<[a-z]+ id=(\d+)").expect("static regex"));
    re.captures_iter(html).filter_map(|c| c[1].parse().ok()).collect()
}

/// Greedily takes exemplars in corpus order while they fit.
///
/// `test_prompt_size` is the token estimate of every non-exemplar part of the
/// prompt. At most [`MAX_EXEMPLARS`] are returned and never fewer than one;
/// exemplars are never truncated.
pub fn select_exemplars<T: PromptExemplar>(
    corpus: &[T],
    budget: usize,
    test_prompt_size: usize,
) -> Result<Vec<&T>, SelectionError> {
    if corpus.is_empty() {
        return Err(SelectionError::EmptyCorpus);
    }
    let costs: Vec<usize> = corpus.iter().map(PromptExemplar::estimated_tokens).collect();
    select_by_cost(&costs, budget, test_prompt_size).map(|picked| picked.into_iter().map(|i| &corpus[i]).collect())
}

/// Index form of [`select_exemplars`] over precomputed costs.
pub fn select_by_cost(costs: &[usize], budget: usize, test_prompt_size: usize) -> Result<Vec<usize>, SelectionError> {
    if costs.is_empty() {
        return Err(SelectionError::EmptyCorpus);
    }
    let mut used = test_prompt_size;
    let mut picked = Vec::with_capacity(MAX_EXEMPLARS);
    for (i, &cost) in costs.iter().enumerate() {
        if picked.len() == MAX_EXEMPLARS {
            break;
        }
        if used + cost <= budget {
            used += cost;
            picked.push(i);
        }
    }
    if picked.is_empty() {
        let smallest = costs.iter().copied().min().unwrap_or(0);
        return Err(SelectionError::BudgetUnsatisfiable {
            required: test_prompt_size + smallest,
            budget,
        });
    }
    Ok(picked)
}
