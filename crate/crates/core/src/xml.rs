//! Small owned XML tree shared by every codec in the crate.
//!
//! Parsing is namespace-agnostic: element and attribute names are stored by
//! local name, `xmlns` declarations are dropped, and no DTD is ever fetched.
//! Serialization is deterministic (two-space indentation, attributes in
//! insertion order, text written verbatim apart from required escaping), so
//! that every emitter built on top of it produces byte-stable output.

use std::ops::Range;

use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

/// Malformed XML input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("XML syntax error at byte {position}: {message}")]
pub struct XmlSyntaxError {
    pub position: usize,
    pub message: String,
}

impl XmlSyntaxError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        XmlSyntaxError {
            position,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Element(Element),
    Text(String),
    /// Pre-serialized markup written out untouched.
    Raw(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Node>,
    /// Byte range of the element in the parsed input; empty for built elements.
    pub span: Range<usize>,
}

impl Element {
    pub fn new(name: impl Into<String>) -> Self {
        Element {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.set_attr(key, value);
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.children.push(Node::Text(text.into()));
        self
    }

    pub fn with_child(mut self, child: Element) -> Self {
        self.children.push(Node::Element(child));
        self
    }

    pub fn push(&mut self, child: Element) {
        self.children.push(Node::Element(child));
    }

    pub fn push_text(&mut self, text: impl Into<String>) {
        self.children.push(Node::Text(text.into()));
    }

    pub fn set_attr(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.attrs.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.attrs.push((key, value)),
        }
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            _ => None,
        })
    }

    pub fn elements_mut(&mut self) -> impl Iterator<Item = &mut Element> {
        self.children.iter_mut().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            _ => None,
        })
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.elements().filter(move |e| e.name == name)
    }

    pub fn child(&self, name: &str) -> Option<&Element> {
        self.elements().find(|e| e.name == name)
    }

    /// Concatenated character data of the direct text children.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for node in &self.children {
            if let Node::Text(t) = node {
                out.push_str(t);
            }
        }
        out
    }

    pub fn child_text(&self, name: &str) -> Option<String> {
        self.child(name).map(Element::text)
    }

    fn is_leaf(&self) -> bool {
        self.children.iter().all(|n| matches!(n, Node::Text(_)))
    }
}

/// Parses a complete document and returns its root element.
pub fn parse(input: &[u8]) -> Result<Element, XmlSyntaxError> {
    std::str::from_utf8(input).map_err(|e| {
        XmlSyntaxError::new(e.valid_up_to(), "input is not valid UTF-8")
    })?;
    let mut reader = Reader::from_reader(input);
    reader.config_mut().expand_empty_elements = true;
    reader.config_mut().trim_text(false);

    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let before = reader.buffer_position() as usize;
        let event = reader
            .read_event()
            .map_err(|e| XmlSyntaxError::new(reader.error_position() as usize, e.to_string()))?;
        match event {
            Event::Start(start) => {
                if root.is_some() {
                    return Err(XmlSyntaxError::new(before, "content after the root element"));
                }
                let mut el = Element::new(local(start.local_name().as_ref()));
                el.span = before..before;
                for attr in start.attributes() {
                    let attr = attr.map_err(|e| XmlSyntaxError::new(before, e.to_string()))?;
                    let full = attr.key.as_ref();
                    if full == b"xmlns" || full.starts_with(b"xmlns:") {
                        continue;
                    }
                    let value = attr
                        .unescape_value()
                        .map_err(|e| XmlSyntaxError::new(before, e.to_string()))?;
                    el.attrs
                        .push((local(attr.key.local_name().as_ref()), value.into_owned()));
                }
                stack.push(el);
            }
            Event::End(_) => {
                let mut el = stack
                    .pop()
                    .ok_or_else(|| XmlSyntaxError::new(before, "unbalanced end tag"))?;
                el.span.end = reader.buffer_position() as usize;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(el)),
                    None => root = Some(el),
                }
            }
            Event::Text(text) => {
                let value = text
                    .unescape()
                    .map_err(|e| XmlSyntaxError::new(before, e.to_string()))?;
                match stack.last_mut() {
                    Some(parent) => push_text(parent, &value),
                    None if value.trim().is_empty() => {}
                    None => {
                        return Err(XmlSyntaxError::new(before, "text outside the root element"))
                    }
                }
            }
            Event::CData(data) => {
                let value = String::from_utf8(data.into_inner().into_owned())
                    .map_err(|_| XmlSyntaxError::new(before, "CDATA is not valid UTF-8"))?;
                match stack.last_mut() {
                    Some(parent) => push_text(parent, &value),
                    None => return Err(XmlSyntaxError::new(before, "CDATA outside the root element")),
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(XmlSyntaxError::new(input.len(), "unexpected end of input"));
    }
    root.ok_or_else(|| XmlSyntaxError::new(0, "document has no root element"))
}

fn push_text(parent: &mut Element, value: &str) {
    if let Some(Node::Text(prev)) = parent.children.last_mut() {
        prev.push_str(value);
    } else {
        parent.children.push(Node::Text(value.to_string()));
    }
}

fn local(name: &[u8]) -> String {
    String::from_utf8_lossy(name).into_owned()
}

/// Serializes `root` as a standalone UTF-8 document with an XML declaration.
pub fn to_document(root: &Element) -> Vec<u8> {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    write_element(&mut out, root, 0);
    out.into_bytes()
}

/// Serializes a fragment without the XML declaration.
pub fn to_fragment(root: &Element) -> String {
    let mut out = String::new();
    write_element(&mut out, root, 0);
    out
}

fn write_element(out: &mut String, el: &Element, depth: usize) {
    indent(out, depth);
    out.push('<');
    out.push_str(&el.name);
    for (k, v) in &el.attrs {
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        escape_attr(out, v);
        out.push('"');
    }
    out.push('>');
    if el.is_leaf() {
        for node in &el.children {
            if let Node::Text(t) = node {
                escape_text(out, t);
            }
        }
    } else {
        out.push('\n');
        for node in &el.children {
            match node {
                Node::Element(child) => write_element(out, child, depth + 1),
                Node::Text(t) if t.trim().is_empty() => {}
                Node::Text(t) => {
                    indent(out, depth + 1);
                    escape_text(out, t);
                    out.push('\n');
                }
                Node::Raw(raw) => {
                    indent(out, depth + 1);
                    out.push_str(raw);
                    out.push('\n');
                }
            }
        }
        indent(out, depth);
    }
    out.push_str("</");
    out.push_str(&el.name);
    out.push_str(">\n");
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn escape_text(out: &mut String, text: &str) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(c),
        }
    }
}

fn escape_attr(out: &mut String, text: &str) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\r' => out.push_str("&#13;"),
            '\n' => out.push_str("&#10;"),
            '\t' => out.push_str("&#9;"),
            _ => out.push(c),
        }
    }
}

/// Characters that XML 1.0 allows in text content.
pub fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..='\u{10FFFF}')
}
