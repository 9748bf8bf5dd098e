//! UIAutomator window dumps (`uiautomator dump`) to and from [`ViewNode`].

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::{Bounds, ViewNode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DumpError {
    #[error("dump is not well-formed XML: {0}")]
    Xml(String),
    #[error("dump contains no <node> elements")]
    Empty,
    #[error("node {class:?} has unparsable bounds {raw:?}")]
    Bounds { class: String, raw: String },
}

fn bounds_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\[(-?\d+),(-?\d+)\]\s*\[(-?\d+),(-?\d+)\]\s*$").expect("static regex"))
}

fn parse_bounds(class: &str, raw: &str) -> Result<Bounds, DumpError> {
    let err = || DumpError::Bounds {
        class: class.to_string(),
        raw: raw.to_string(),
    };
    let caps = bounds_re().captures(raw).ok_or_else(err)?;
    let n = |i: usize| caps[i].parse::<i32>().map_err(|_| err());
    let (l, t, r, b) = (n(1)?, n(2)?, n(3)?, n(4)?);
    // devices occasionally report off-screen or inverted rectangles
    let left = l.max(0);
    let top = t.max(0);
    Ok(Bounds::new(left, top, r.max(left), b.max(top)))
}

fn non_empty(node: roxmltree::Node<'_, '_>, attr: &str) -> Option<String> {
    node.attribute(attr).filter(|v| !v.is_empty()).map(str::to_string)
}

fn convert(node: roxmltree::Node<'_, '_>) -> Result<ViewNode, DumpError> {
    let class_name = node.attribute("class").unwrap_or_default().to_string();
    let bounds = match node.attribute("bounds") {
        Some(raw) => parse_bounds(&class_name, raw)?,
        None => {
            return Err(DumpError::Bounds {
                class: class_name,
                raw: String::new(),
            })
        }
    };
    let children = node
        .children()
        .filter(|c| c.has_tag_name("node"))
        .map(convert)
        .collect::<Result<_, _>>()?;
    Ok(ViewNode {
        resource_id: non_empty(node, "resource-id"),
        text: non_empty(node, "text"),
        content_desc: non_empty(node, "content-desc"),
        class_name,
        bounds,
        children,
    })
}

/// Parses a dump into a single tree.
///
/// A `<hierarchy>` with several top-level windows gets a synthetic root of
/// class `hierarchy` whose bounds cover them all.
pub fn parse_dump(xml: &str) -> Result<ViewNode, DumpError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| DumpError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.has_tag_name("node") {
        return convert(root);
    }
    let mut tops: Vec<ViewNode> = root
        .children()
        .filter(|c| c.has_tag_name("node"))
        .map(convert)
        .collect::<Result<_, _>>()?;
    match tops.len() {
        0 => Err(DumpError::Empty),
        1 => Ok(tops.pop().expect("one element")),
        _ => {
            let bounds = tops
                .iter()
                .map(|n| n.bounds)
                .reduce(|a, b| a.union(&b))
                .unwrap_or_default();
            Ok(ViewNode::new("hierarchy", bounds).with_children(tops))
        }
    }
}

fn xml_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

/// Writes a tree in the dump grammar, wrapped in `<hierarchy>`.
pub fn to_dump_xml(root: &ViewNode) -> String {
    fn write_node(out: &mut String, node: &ViewNode, index: usize, depth: usize) {
        let b = node.bounds;
        let _ = write!(
            out,
            "{:indent$}<node index=\"{index}\" text=\"{}\" resource-id=\"{}\" class=\"{}\" content-desc=\"{}\" bounds=\"[{},{}][{},{}]\"",
            "",
            xml_attr(node.text.as_deref().unwrap_or_default()),
            xml_attr(node.resource_id.as_deref().unwrap_or_default()),
            xml_attr(&node.class_name),
            xml_attr(node.content_desc.as_deref().unwrap_or_default()),
            b.left,
            b.top,
            b.right,
            b.bottom,
            indent = depth * 2,
        );
        if node.children.is_empty() {
            out.push_str(" />\n");
            return;
        }
        out.push_str(">\n");
        for (i, child) in node.children.iter().enumerate() {
            write_node(out, child, i, depth + 1);
        }
        let _ = writeln!(out, "{:indent$}</node>", "", indent = depth * 2);
    }
    let mut out =
        String::from("<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>\n<hierarchy rotation=\"0\">\n");
    write_node(&mut out, root, 0, 1);
    out.push_str("</hierarchy>\n");
    out
}
