//! Labeled prompt segments and their rendered text.

use serde::{Deserialize, Serialize};

/// Approximate token count: characters divided by four, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    ActionsSpec,
    PrimitivesSpec,
    ExemplarInput,
    ChainOfThought,
    ExemplarOutput,
    GuiEncoding,
    TestGui,
    TestInput,
}

impl SegmentKind {
    pub fn label(self) -> &'static str {
        match self {
            SegmentKind::ActionsSpec => "Available actions",
            SegmentKind::PrimitivesSpec => "Action primitives",
            SegmentKind::ExemplarInput => "Example input",
            SegmentKind::ChainOfThought => "Chain-of-Thought",
            SegmentKind::ExemplarOutput => "Example output",
            SegmentKind::GuiEncoding => "GUI encoding",
            SegmentKind::TestGui => "Current GUI encoding",
            SegmentKind::TestInput => "Test input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
}

impl Segment {
    pub fn new(kind: SegmentKind, text: impl Into<String>) -> Self {
        Segment {
            kind,
            text: text.into(),
        }
    }

    /// `Label:` line, the body, then a blank line.
    pub fn render(&self) -> String {
        format!("{}:\n{}\n\n", self.kind.label(), self.text.trim_end())
    }

    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(&self.render())
    }
}

/// An ordered prompt together with its rendered text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    segments: Vec<Segment>,
    rendered: String,
    exemplars: usize,
}

impl Prompt {
    pub fn new(segments: Vec<Segment>, exemplars: usize) -> Self {
        let rendered = segments.iter().map(Segment::render).collect();
        Prompt {
            segments,
            rendered,
            exemplars,
        }
    }

    /// A prompt made of one raw block, mostly for tests and ad hoc calls.
    pub fn raw(text: impl Into<String>) -> Self {
        let text = text.into();
        Prompt {
            segments: vec![Segment::new(SegmentKind::TestInput, text.clone())],
            rendered: text,
            exemplars: 0,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    /// Number of few-shot exemplars embedded.
    pub fn exemplar_count(&self) -> usize {
        self.exemplars
    }

    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(&self.rendered)
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == kind)
    }

    /// Hex SHA-256 of the rendered text.
    pub fn digest(&self) -> String {
        digest_text(&self.rendered)
    }
}

pub fn digest_text(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(text.as_bytes()))
}
