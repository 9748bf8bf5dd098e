//! View hierarchies and their HTML encoding.
//!
//! Every node becomes one HTML element carrying a numeric `id` assigned in
//! depth-first preorder starting at 0. The encoding is deterministic: one
//! element per line, two spaces of indentation per level, attributes in the
//! order `id`, `class`, `alt`.
//!
//! ```text
//! <div id=0 class="root">
//!   <p id=1>Hello</p>
//!   <button id=2 class="submit_btn">Submit</button>
//!   <input id=3 class="name" type="text"><label for=3>Name</label>
//!   <img id=4 alt="settings icon">
//! </div>
//! ```

mod uiautomator;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use uiautomator::{parse_dump, to_dump_xml, DumpError};

/// Screen rectangle in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl From<[i32; 4]> for Bounds {
    fn from([left, top, right, bottom]: [i32; 4]) -> Self {
        Bounds {
            left,
            top,
            right,
            bottom,
        }
    }
}

impl From<Bounds> for [i32; 4] {
    fn from(b: Bounds) -> Self {
        [b.left, b.top, b.right, b.bottom]
    }
}

impl Bounds {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Bounds {
            left,
            top,
            right,
            bottom,
        }
    }

    /// Integer center, rounding toward the top-left.
    pub fn center(&self) -> (i32, i32) {
        (
            self.left + (self.right - self.left) / 2,
            self.top + (self.bottom - self.top) / 2,
        )
    }

    pub fn width(&self) -> i32 {
        self.right - self.left
    }

    pub fn height(&self) -> i32 {
        self.bottom - self.top
    }

    /// Half-open containment: right and bottom edges are outside.
    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.left && x < self.right && y >= self.top && y < self.bottom
    }

    pub fn is_valid(&self) -> bool {
        self.left >= 0 && self.top >= 0 && self.right >= self.left && self.bottom >= self.top
    }

    pub fn union(&self, other: &Bounds) -> Bounds {
        Bounds {
            left: self.left.min(other.left),
            top: self.top.min(other.top),
            right: self.right.max(other.right),
            bottom: self.bottom.max(other.bottom),
        }
    }
}

/// One node of a GUI view hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ViewNode {
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    pub bounds: Bounds,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ViewNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("node {path} ({class}) has invalid bounds {bounds:?}")]
pub struct InvalidBounds {
    pub path: String,
    pub class: String,
    pub bounds: Bounds,
}

impl ViewNode {
    pub fn new(class_name: impl Into<String>, bounds: Bounds) -> Self {
        ViewNode {
            class_name: class_name.into(),
            bounds,
            ..ViewNode::default()
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_resource_id(mut self, id: impl Into<String>) -> Self {
        self.resource_id = Some(id.into());
        self
    }

    pub fn with_content_desc(mut self, desc: impl Into<String>) -> Self {
        self.content_desc = Some(desc.into());
        self
    }

    pub fn with_children(mut self, children: Vec<ViewNode>) -> Self {
        self.children = children;
        self
    }

    /// The node's own properties without its subtree.
    pub fn shallow(&self) -> ViewNode {
        ViewNode {
            class_name: self.class_name.clone(),
            resource_id: self.resource_id.clone(),
            text: self.text.clone(),
            content_desc: self.content_desc.clone(),
            bounds: self.bounds,
            children: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.preorder().count()
    }

    /// Depth-first preorder walk, iterative.
    pub fn preorder(&self) -> impl Iterator<Item = &ViewNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    /// Checks every node's bounds.
    pub fn validate(&self) -> Result<(), InvalidBounds> {
        let mut stack = vec![(self, "0".to_string())];
        while let Some((node, path)) = stack.pop() {
            if !node.bounds.is_valid() {
                return Err(InvalidBounds {
                    path,
                    class: node.class_name.clone(),
                    bounds: node.bounds,
                });
            }
            for (i, child) in node.children.iter().enumerate() {
                stack.push((child, format!("{path}.{i}")));
            }
        }
        Ok(())
    }

    /// Short human description: text, then content description, then the
    /// resource id leaf, then the class.
    pub fn label(&self) -> String {
        clean(self.text.as_deref())
            .or_else(|| clean(self.content_desc.as_deref()))
            .or_else(|| self.resource_id.as_deref().and_then(resource_leaf).map(str::to_string))
            .unwrap_or_else(|| class_suffix(&self.class_name).to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagSpec {
    Paragraph,
    Button,
    Image,
    Div,
    /// `<input type=...>` followed by a `<label>` carrying the text.
    InputLabel {
        input_type: &'static str,
    },
}

impl TagSpec {
    pub fn tag(self) -> &'static str {
        match self {
            TagSpec::Paragraph => "p",
            TagSpec::Button => "button",
            TagSpec::Image => "img",
            TagSpec::Div => "div",
            TagSpec::InputLabel { .. } => "input",
        }
    }
}

fn class_suffix(class_name: &str) -> &str {
    class_name.rsplit(['.', '$']).next().unwrap_or(class_name)
}

/// Maps a native widget class to an HTML tag by its unqualified name.
pub fn map_class_to_tag(class_name: &str) -> TagSpec {
    match class_suffix(class_name) {
        "TextView" => TagSpec::Paragraph,
        "Button" | "ImageButton" => TagSpec::Button,
        "ImageView" => TagSpec::Image,
        "EditText" => TagSpec::InputLabel { input_type: "text" },
        "CheckBox" | "Switch" => TagSpec::InputLabel { input_type: "checkbox" },
        "RadioButton" => TagSpec::InputLabel { input_type: "radio" },
        _ => TagSpec::Div,
    }
}

/// Leaf of a resource id: `com.app:id/submit_btn` becomes `submit_btn`.
fn resource_leaf(resource_id: &str) -> Option<&str> {
    let leaf = resource_id.rsplit('/').next().unwrap_or(resource_id).trim();
    (!leaf.is_empty()).then_some(leaf)
}

/// Whitespace runs collapse to one space; blank text counts as absent.
fn clean(text: Option<&str>) -> Option<String> {
    let joined = text?.split_whitespace().collect::<Vec<_>>().join(" ");
    (!joined.is_empty()).then_some(joined)
}

fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    out
}

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '<' => out.push_str("&lt;"),
            c => out.push(c),
        }
    }
    out
}

/// HTML text of a screen plus the id → node index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedGui {
    html: String,
    index: Vec<ViewNode>,
    /// Preorder position of each indexed node in the full tree.
    canonical: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("component id {id} is not on this screen ({count} components)")]
pub struct UnknownId {
    pub id: i64,
    pub count: usize,
}

impl EncodedGui {
    pub fn html(&self) -> &str {
        &self.html
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Indexed nodes, position = id. Entries carry no children.
    pub fn nodes(&self) -> &[ViewNode] {
        &self.index
    }

    /// Preorder position in the unreduced tree of the node with this id.
    pub fn canonical_id(&self, id: usize) -> Option<usize> {
        self.canonical.get(id).copied()
    }

    /// Hex SHA-256 of the html.
    pub fn digest(&self) -> String {
        crate::prompt::digest_text(&self.html)
    }

    pub fn resolve(&self, id: i64) -> Result<&ViewNode, UnknownId> {
        usize::try_from(id)
            .ok()
            .and_then(|i| self.index.get(i))
            .ok_or(UnknownId {
                id,
                count: self.index.len(),
            })
    }
}

/// Looks up the node behind a component id from the model.
pub fn resolve_component(encoded: &EncodedGui, id: i64) -> Result<&ViewNode, UnknownId> {
    encoded.resolve(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EncodeOptions {
    /// Drop text-less `div` elements that only wrap children, promoting the
    /// children one level. Ids are assigned after the drop.
    pub elide_wrappers: bool,
}

/// Encodes a hierarchy with default options.
pub fn encode_gui(root: &ViewNode) -> EncodedGui {
    encode_gui_with(root, EncodeOptions::default())
}

fn is_wrapper(node: &ViewNode) -> bool {
    map_class_to_tag(&node.class_name) == TagSpec::Div
        && !node.children.is_empty()
        && clean(node.text.as_deref()).is_none()
        && clean(node.content_desc.as_deref()).is_none()
}

enum Work<'a> {
    Visit { node: &'a ViewNode, depth: usize },
    Close { tag: &'static str, depth: usize },
}

pub fn encode_gui_with(root: &ViewNode, options: EncodeOptions) -> EncodedGui {
    let mut html = String::new();
    let mut index = Vec::new();
    let mut canonical = Vec::new();
    let mut canonical_next = 0usize;
    let mut stack = vec![Work::Visit { node: root, depth: 0 }];

    while let Some(work) = stack.pop() {
        let (node, depth) = match work {
            Work::Close { tag, depth } => {
                let _ = writeln!(html, "{:indent$}</{tag}>", "", indent = depth * 2);
                continue;
            }
            Work::Visit { node, depth } => (node, depth),
        };
        let canonical_id = canonical_next;
        canonical_next += 1;

        if options.elide_wrappers && is_wrapper(node) {
            // children take this node's place; their canonical ids still advance
            for child in node.children.iter().rev() {
                stack.push(Work::Visit { node: child, depth });
            }
            continue;
        }

        let id = index.len();
        index.push(node.shallow());
        canonical.push(canonical_id);

        let spec = map_class_to_tag(&node.class_name);
        let text = clean(node.text.as_deref()).map(|t| escape_text(&t)).unwrap_or_default();
        let mut open = format!("<{} id={id}", spec.tag());
        if let Some(leaf) = node.resource_id.as_deref().and_then(resource_leaf) {
            let _ = write!(open, " class=\"{}\"", escape_attr(leaf));
        }
        let _ = write!(html, "{:indent$}", "", indent = depth * 2);
        let mut close = None;
        match spec {
            TagSpec::Image => {
                if let Some(desc) = clean(node.content_desc.as_deref()) {
                    let _ = write!(open, " alt=\"{}\"", escape_attr(&desc));
                }
                let _ = write!(html, "{open}>");
            }
            TagSpec::InputLabel { input_type } => {
                let _ = write!(html, "{open} type=\"{input_type}\"><label for={id}>{text}</label>");
            }
            TagSpec::Paragraph | TagSpec::Button | TagSpec::Div => {
                let _ = write!(html, "{open}>{text}");
                if node.children.is_empty() {
                    let _ = write!(html, "</{}>", spec.tag());
                } else {
                    close = Some(spec.tag());
                }
            }
        }
        html.push('\n');

        if let Some(tag) = close {
            stack.push(Work::Close { tag, depth });
        }
        for child in node.children.iter().rev() {
            stack.push(Work::Visit {
                node: child,
                depth: depth + 1,
            });
        }
    }

    if html.ends_with('\n') {
        html.pop();
    }
    EncodedGui { html, index, canonical }
}
