//! Constrained HTML documents: strict parsing, canonical serialization,
//! integer element refs and persistent edits.
//!
//! The canonical text form is the observation payload handed to agents and
//! the `html` field of dataset records, so [`serialize`] is bit-exact:
//! lowercase tags, attributes in stored order, `ref` rendered last, no
//! whitespace between tags, and the entities `&amp; &lt; &gt; &quot; &#39;`
//! escaped in both text and attribute values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Every tag the parser accepts.
pub const SUPPORTED_TAGS: [&str; 15] = [
    "body", "div", "span", "label", "input", "button", "a", "ul", "li", "t", "select", "option",
    "h3", "p", "img",
];

/// Elements that may self-close and never carry content.
pub const VOID_TAGS: [&str; 2] = ["input", "img"];

/// Tags that receive no ref by default (text wrappers).
pub const DEFAULT_NON_REFERABLE: [&str; 1] = ["t"];

/// Element ref: the positive integer an action addresses.
pub type Ref = u32;

pub fn is_supported_tag(tag: &str) -> bool {
    SUPPORTED_TAGS.contains(&tag)
}

pub fn is_void_tag(tag: &str) -> bool {
    VOID_TAGS.contains(&tag)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomError {
    #[error("unsupported tag <{0}>")]
    UnsupportedTag(String),
    #[error("document root must be <body>, found <{0}>")]
    RootNotBody(String),
    #[error("ref {0} not found")]
    RefNotFound(Ref),
    #[error("ref {0} appears more than once")]
    DuplicateRef(Ref),
    #[error("attribute `ref` is managed by assign_refs and cannot be set directly")]
    ReservedAttribute,
    #[error("void element <{0}> cannot have content")]
    VoidWithContent(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnclosedTag { tag: String },
    MismatchedClose { expected: String, found: String },
    MalformedAttribute { detail: String },
    UnsupportedTag { tag: String },
    MalformedEntity { entity: String },
    UnexpectedText,
    UnexpectedCharacter { found: char },
    UnexpectedEof,
    RootNotBody { tag: String },
    VoidWithContent { tag: String },
    DuplicateRef { r#ref: Ref },
    TrailingContent,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnclosedTag { tag } => write!(f, "unclosed tag <{tag}>"),
            ParseErrorKind::MismatchedClose { expected, found } => {
                write!(f, "mismatched close: expected </{expected}>, found </{found}>")
            }
            ParseErrorKind::MalformedAttribute { detail } => write!(f, "malformed attribute: {detail}"),
            ParseErrorKind::UnsupportedTag { tag } => write!(f, "unsupported tag <{tag}>"),
            ParseErrorKind::MalformedEntity { entity } => write!(f, "malformed entity {entity:?}"),
            ParseErrorKind::UnexpectedText => write!(f, "text after a child element"),
            ParseErrorKind::UnexpectedCharacter { found } => write!(f, "unexpected character {found:?}"),
            ParseErrorKind::UnexpectedEof => write!(f, "unexpected end of input"),
            ParseErrorKind::RootNotBody { tag } => write!(f, "document root must be <body>, found <{tag}>"),
            ParseErrorKind::VoidWithContent { tag } => write!(f, "void element <{tag}> cannot have content"),
            ParseErrorKind::DuplicateRef { r#ref } => write!(f, "ref {ref} appears more than once"),
            ParseErrorKind::TrailingContent => write!(f, "content after the closing </body>"),
        }
    }
}

/// Parse failure with a 1-based line/column position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at line {line}, column {column}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
}

/// One element of a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomNode {
    tag: String,
    attributes: Vec<(String, String)>,
    text: Option<String>,
    children: Vec<DomNode>,
    node_ref: Option<Ref>,
}

impl DomNode {
    pub fn new(tag: &str) -> Result<Self, DomError> {
        let tag = tag.to_ascii_lowercase();
        if !is_supported_tag(&tag) {
            return Err(DomError::UnsupportedTag(tag));
        }
        Ok(Self {
            tag,
            attributes: Vec::new(),
            text: None,
            children: Vec::new(),
            node_ref: None,
        })
    }

    /// Builder shortcut for tags known to be supported.
    ///
    /// # Panics
    /// On an unsupported tag.
    pub fn element(tag: &str) -> Self {
        Self::new(tag).expect("unsupported tag in element()")
    }

    /// Sets (or replaces in place) an attribute.
    ///
    /// # Panics
    /// When `name` is `ref`; refs are owned by [`assign_refs`].
    pub fn with_attr(mut self, name: &str, value: impl Into<String>) -> Self {
        self.set_attr(name, value.into()).expect("`ref` is not a settable attribute");
        self
    }

    /// Text is stored trimmed; whitespace-only text is dropped.
    pub fn with_text(mut self, text: impl AsRef<str>) -> Self {
        self.text = normalize_text(text.as_ref());
        self
    }

    /// # Panics
    /// When called on a void element.
    pub fn with_child(mut self, child: DomNode) -> Self {
        assert!(!is_void_tag(&self.tag), "void element <{}> cannot have children", self.tag);
        self.children.push(child);
        self
    }

    pub fn with_children(mut self, children: impl IntoIterator<Item = DomNode>) -> Self {
        for child in children {
            self = self.with_child(child);
        }
        self
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn attributes(&self) -> &[(String, String)] {
        &self.attributes
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn id(&self) -> Option<&str> {
        self.attr("id")
    }

    pub fn text(&self) -> Option<&str> {
        self.text.as_deref()
    }

    pub fn children(&self) -> &[DomNode] {
        &self.children
    }

    pub fn node_ref(&self) -> Option<Ref> {
        self.node_ref
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.attr("class")
            .is_some_and(|c| c.split_ascii_whitespace().any(|c| c == class))
    }

    /// Own text followed by the text of every descendant, in document order.
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        self.walk(&mut |n| {
            if let Some(t) = n.text() {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(t);
            }
        });
        out
    }

    /// Pre-order visit of this node and its descendants.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a DomNode)) {
        visit(self);
        for child in &self.children {
            child.walk(visit);
        }
    }

    /// Number of nodes in this subtree that would receive a ref.
    pub fn count_referable(&self, non_referable: &BTreeSet<String>) -> usize {
        let mut count = 0;
        self.walk(&mut |n| {
            if !non_referable.contains(n.tag()) {
                count += 1;
            }
        });
        count
    }

    pub(crate) fn set_attr(&mut self, name: &str, value: String) -> Result<(), DomError> {
        let name = name.to_ascii_lowercase();
        if name == "ref" {
            return Err(DomError::ReservedAttribute);
        }
        match self.attributes.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.attributes.push((name, value)),
        }
        Ok(())
    }

    pub(crate) fn walk_mut(&mut self, visit: &mut impl FnMut(&mut DomNode)) {
        visit(self);
        for child in &mut self.children {
            child.walk_mut(visit);
        }
    }

    fn clear_refs(&mut self) {
        self.node_ref = None;
        for child in &mut self.children {
            child.clear_refs();
        }
    }

    fn number(&mut self, next: &mut Ref, non_referable: &BTreeSet<String>) {
        if non_referable.contains(&self.tag) {
            self.node_ref = None;
        } else {
            self.node_ref = Some(*next);
            *next += 1;
        }
        for child in &mut self.children {
            child.number(next, non_referable);
        }
    }

    fn node_at_mut(&mut self, path: &[usize]) -> &mut DomNode {
        path.iter().fold(self, |node, &i| &mut node.children[i])
    }
}

fn normalize_text(text: &str) -> Option<String> {
    let trimmed = text.trim();
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

/// A document rooted at `<body>` with an index from ref to node path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomTree {
    root: DomNode,
    ref_index: BTreeMap<Ref, Vec<usize>>,
}

impl DomTree {
    pub fn new(root: DomNode) -> Result<Self, DomError> {
        if root.tag != "body" {
            return Err(DomError::RootNotBody(root.tag));
        }
        let ref_index = build_index(&root)?;
        Ok(Self { root, ref_index })
    }

    /// `<body></body>`
    pub fn empty() -> Self {
        Self::new(DomNode::element("body")).expect("body is a valid root")
    }

    pub fn root(&self) -> &DomNode {
        &self.root
    }

    pub fn into_root(self) -> DomNode {
        self.root
    }

    /// Refs in ascending order.
    pub fn refs(&self) -> impl Iterator<Item = Ref> + '_ {
        self.ref_index.keys().copied()
    }

    pub fn path_of(&self, r: Ref) -> Option<&[usize]> {
        self.ref_index.get(&r).map(Vec::as_slice)
    }

    pub fn node_at(&self, path: &[usize]) -> Option<&DomNode> {
        let mut node = &self.root;
        for &i in path {
            node = node.children.get(i)?;
        }
        Some(node)
    }

    /// Refs of the element nodes in pre-order (document order).
    pub fn preorder_refs(&self) -> Vec<Ref> {
        let mut out = Vec::new();
        self.root.walk(&mut |n| {
            if let Some(r) = n.node_ref {
                out.push(r);
            }
        });
        out
    }

    /// First node in pre-order that satisfies `pred`.
    pub fn find(&self, pred: impl Fn(&DomNode) -> bool) -> Option<&DomNode> {
        fn go<'a>(n: &'a DomNode, pred: &dyn Fn(&DomNode) -> bool) -> Option<&'a DomNode> {
            if pred(n) {
                return Some(n);
            }
            n.children.iter().find_map(|c| go(c, pred))
        }
        go(&self.root, &pred)
    }

    pub fn find_by_id(&self, id: &str) -> Option<&DomNode> {
        self.find(|n| n.id() == Some(id))
    }
}

fn build_index(root: &DomNode) -> Result<BTreeMap<Ref, Vec<usize>>, DomError> {
    fn go(
        node: &DomNode,
        path: &mut Vec<usize>,
        index: &mut BTreeMap<Ref, Vec<usize>>,
    ) -> Result<(), DomError> {
        if let Some(r) = node.node_ref {
            if index.insert(r, path.clone()).is_some() {
                return Err(DomError::DuplicateRef(r));
            }
        }
        for (i, child) in node.children.iter().enumerate() {
            path.push(i);
            go(child, path, index)?;
            path.pop();
        }
        Ok(())
    }
    let mut index = BTreeMap::new();
    go(root, &mut Vec::new(), &mut index)?;
    Ok(index)
}

/// Default non-referable set, `{t}`.
pub fn default_non_referable() -> BTreeSet<String> {
    DEFAULT_NON_REFERABLE.iter().map(|s| s.to_string()).collect()
}

/// Discards existing refs and numbers every element whose tag is not in
/// `non_referable` as 1, 2, 3, … in pre-order.
pub fn assign_refs(tree: &DomTree, non_referable: &BTreeSet<String>) -> DomTree {
    let mut root = tree.root.clone();
    root.clear_refs();
    let mut next = 1;
    root.number(&mut next, non_referable);
    DomTree::new(root).expect("fresh numbering is unique")
}

/// [`assign_refs`] with [`DEFAULT_NON_REFERABLE`].
pub fn assign_default_refs(tree: &DomTree) -> DomTree {
    assign_refs(tree, &default_non_referable())
}

pub fn find_by_ref(tree: &DomTree, r: Ref) -> Result<&DomNode, DomError> {
    tree.path_of(r)
        .and_then(|p| tree.node_at(p))
        .ok_or(DomError::RefNotFound(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertPosition {
    FirstChildOfBody,
    LastChildOfBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    SetAttribute { target: Ref, name: String, value: String },
    /// Shorthand for setting the `value` attribute.
    SetValue { target: Ref, value: String },
    /// Inserts a copy of `subtree` with its refs stripped. Existing refs are
    /// left untouched; run [`assign_refs`] afterwards to number the new nodes.
    InsertSubtree { position: InsertPosition, subtree: DomNode },
}

/// Applies `edit` to a copy of `tree`; the input is never modified.
pub fn mutate(tree: &DomTree, edit: Edit) -> Result<DomTree, DomError> {
    let mut root = tree.root.clone();
    match edit {
        Edit::SetAttribute { target, name, value } => {
            let path = tree.path_of(target).ok_or(DomError::RefNotFound(target))?;
            root.node_at_mut(path).set_attr(&name, value)?;
        }
        Edit::SetValue { target, value } => {
            let path = tree.path_of(target).ok_or(DomError::RefNotFound(target))?;
            root.node_at_mut(path).set_attr("value", value)?;
        }
        Edit::InsertSubtree { position, mut subtree } => {
            subtree.clear_refs();
            match position {
                InsertPosition::FirstChildOfBody => root.children.insert(0, subtree),
                InsertPosition::LastChildOfBody => root.children.push(subtree),
            }
        }
    }
    DomTree::new(root)
}

// ---------------------------------------------------------------------------
// Serialization

pub fn serialize(tree: &DomTree) -> String {
    let mut out = String::with_capacity(256);
    write_node(&tree.root, &mut out);
    out
}

/// Canonical text of a single subtree.
pub fn serialize_node(node: &DomNode) -> String {
    let mut out = String::new();
    write_node(node, &mut out);
    out
}

fn write_node(node: &DomNode, out: &mut String) {
    out.push('<');
    out.push_str(&node.tag);
    for (name, value) in &node.attributes {
        write_attr(out, name, value);
    }
    if let Some(r) = node.node_ref {
        write_attr(out, "ref", &r.to_string());
    }
    out.push('>');
    if let Some(text) = &node.text {
        escape_into(text, out);
    }
    for child in &node.children {
        write_node(child, out);
    }
    out.push_str("</");
    out.push_str(&node.tag);
    out.push('>');
}

fn write_attr(out: &mut String, name: &str, value: &str) {
    out.push(' ');
    out.push_str(name);
    out.push_str("=\"");
    escape_into(value, out);
    out.push('"');
}

fn escape_into(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

/// Strict parser for the constrained grammar: properly nested supported tags,
/// double-quoted attribute values, and self-closing only on void elements.
///
/// A `ref` attribute with an integer value is loaded as the node's ref; the
/// display value `ref="None"` means "no ref".
pub fn parse_html(source: &str) -> Result<DomTree, ParseError> {
    let mut parser = Parser::new(source);
    parser.skip_ws();
    let open_pos = parser.pos();
    let root = parser.element()?;
    if root.tag != "body" {
        return Err(open_pos.error(ParseErrorKind::RootNotBody { tag: root.tag }));
    }
    parser.skip_ws();
    if parser.peek().is_some() {
        return Err(parser.error(ParseErrorKind::TrailingContent));
    }
    match DomTree::new(root) {
        Ok(tree) => Ok(tree),
        Err(DomError::DuplicateRef(r)) => Err(open_pos.error(ParseErrorKind::DuplicateRef { r#ref: r })),
        Err(other) => unreachable!("root validated above: {other}"),
    }
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

impl Pos {
    fn error(self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            kind,
            line: self.line,
            column: self.column,
        }
    }
}

struct Parser<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Parser<'a> {
    fn new(source: &'a str) -> Self {
        Self {
            chars: source.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        self.pos().error(kind)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => Err(self.error(ParseErrorKind::UnexpectedCharacter { found: c })),
            None => Err(self.error(ParseErrorKind::UnexpectedEof)),
        }
    }

    fn name(&mut self) -> String {
        let mut name = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | ':' | '.') {
                name.push(c.to_ascii_lowercase());
                self.bump();
            } else {
                break;
            }
        }
        name
    }

    /// Parses `<tag attrs…>content</tag>` or `<void …/>`; the cursor is on `<`.
    fn element(&mut self) -> Result<DomNode, ParseError> {
        let open = self.pos();
        self.expect('<')?;
        let tag = self.name();
        if tag.is_empty() {
            return Err(match self.peek() {
                Some(c) => self.error(ParseErrorKind::UnexpectedCharacter { found: c }),
                None => self.error(ParseErrorKind::UnexpectedEof),
            });
        }
        if !is_supported_tag(&tag) {
            return Err(open.error(ParseErrorKind::UnsupportedTag { tag }));
        }
        let mut node = DomNode::element(&tag);
        let mut seen_ref = false;

        loop {
            let had_ws = self.peek().is_some_and(char::is_whitespace);
            self.skip_ws();
            match self.peek() {
                None => return Err(open.error(ParseErrorKind::UnclosedTag { tag })),
                Some('>') => {
                    self.bump();
                    break;
                }
                Some('/') => {
                    self.bump();
                    if !is_void_tag(&tag) {
                        return Err(open.error(ParseErrorKind::MalformedAttribute {
                            detail: format!("<{tag}> is not a void element and cannot self-close"),
                        }));
                    }
                    self.expect('>')?;
                    return Ok(node);
                }
                Some(_) => {
                    let at = self.pos();
                    if !had_ws {
                        return Err(at.error(ParseErrorKind::MalformedAttribute {
                            detail: "attributes must be separated by whitespace".into(),
                        }));
                    }
                    let (name, value) = self.attribute()?;
                    if name == "ref" {
                        if seen_ref {
                            return Err(at.error(ParseErrorKind::MalformedAttribute {
                                detail: "duplicate attribute `ref`".into(),
                            }));
                        }
                        seen_ref = true;
                        node.node_ref = parse_ref_value(&value).map_err(|detail| {
                            at.error(ParseErrorKind::MalformedAttribute { detail })
                        })?;
                    } else {
                        if node.attr(&name).is_some() {
                            return Err(at.error(ParseErrorKind::MalformedAttribute {
                                detail: format!("duplicate attribute `{name}`"),
                            }));
                        }
                        node.attributes.push((name, value));
                    }
                }
            }
        }

        self.content(open, &mut node)?;
        Ok(node)
    }

    fn attribute(&mut self) -> Result<(String, String), ParseError> {
        let at = self.pos();
        let name = self.name();
        if name.is_empty() {
            let found = self.peek().unwrap_or(' ');
            return Err(at.error(ParseErrorKind::MalformedAttribute {
                detail: format!("expected attribute name, found {found:?}"),
            }));
        }
        if self.peek() != Some('=') {
            return Err(self.error(ParseErrorKind::MalformedAttribute {
                detail: format!("attribute `{name}` has no value"),
            }));
        }
        self.bump();
        if self.peek() != Some('"') {
            return Err(self.error(ParseErrorKind::MalformedAttribute {
                detail: format!("value of `{name}` must be double-quoted"),
            }));
        }
        self.bump();
        let mut raw = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(at.error(ParseErrorKind::MalformedAttribute {
                        detail: format!("unterminated value for `{name}`"),
                    }))
                }
                Some('"') => break,
                Some('<') => {
                    return Err(at.error(ParseErrorKind::MalformedAttribute {
                        detail: format!("`<` inside value of `{name}`"),
                    }))
                }
                Some(c) => raw.push(c),
            }
        }
        let value = decode_entities(&raw).map_err(|entity| {
            at.error(ParseErrorKind::MalformedAttribute {
                detail: format!("bad entity {entity:?} in `{name}`"),
            })
        })?;
        Ok((name, value))
    }

    fn content(&mut self, open: Pos, node: &mut DomNode) -> Result<(), ParseError> {
        let tag = node.tag.clone();
        let void = is_void_tag(&tag);
        loop {
            let text_start = self.pos();
            let mut raw = String::new();
            while let Some(c) = self.peek() {
                if c == '<' {
                    break;
                }
                raw.push(c);
                self.bump();
            }
            if let Some(text) = normalize_text(&raw) {
                if void {
                    return Err(text_start.error(ParseErrorKind::VoidWithContent { tag }));
                }
                if !node.children.is_empty() || node.text.is_some() {
                    return Err(text_start.error(ParseErrorKind::UnexpectedText));
                }
                let decoded = decode_entities(&text)
                    .map_err(|entity| text_start.error(ParseErrorKind::MalformedEntity { entity }))?;
                node.text = normalize_text(&decoded);
            }

            let at = self.pos();
            match self.peek() {
                None => return Err(open.error(ParseErrorKind::UnclosedTag { tag })),
                Some(_) => {
                    // On '<': either a close tag or a child.
                    let mut look = self.chars.clone();
                    look.next();
                    if look.peek() == Some(&'/') {
                        self.bump();
                        self.bump();
                        let found = self.name();
                        self.skip_ws();
                        if self.peek() != Some('>') {
                            return match self.peek() {
                                Some(c) => Err(self.error(ParseErrorKind::UnexpectedCharacter { found: c })),
                                None => Err(open.error(ParseErrorKind::UnclosedTag { tag })),
                            };
                        }
                        if found != tag {
                            return Err(at.error(ParseErrorKind::MismatchedClose {
                                expected: tag,
                                found,
                            }));
                        }
                        self.bump();
                        return Ok(());
                    }
                    if void {
                        return Err(at.error(ParseErrorKind::VoidWithContent { tag }));
                    }
                    let child = self.element()?;
                    node.children.push(child);
                }
            }
        }
    }
}

fn parse_ref_value(value: &str) -> Result<Option<Ref>, String> {
    if value == "None" {
        return Ok(None);
    }
    match value.parse::<Ref>() {
        Ok(0) | Err(_) => Err(format!("ref must be a positive integer or \"None\", got {value:?}")),
        Ok(r) => Ok(Some(r)),
    }
}

fn decode_entities(raw: &str) -> Result<String, String> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let semi = rest.find(';').ok_or_else(|| rest.chars().take(8).collect::<String>())?;
        let entity = &rest[..=semi];
        out.push(match entity {
            "&amp;" => '&',
            "&lt;" => '<',
            "&gt;" => '>',
            "&quot;" => '"',
            "&#39;" => '\'',
            other => return Err(other.to_string()),
        });
        rest = &rest[semi + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<body><div id="area"><button id="subbtn">Submit</button></div></body>"#;

    fn fixture_five() -> DomTree {
        // body > div#wrap > (label > input + t) , button
        let root = DomNode::element("body").with_child(
            DomNode::element("div")
                .with_attr("id", "wrap")
                .with_child(
                    DomNode::element("label")
                        .with_child(
                            DomNode::element("input")
                                .with_attr("type", "checkbox")
                                .with_attr("value", "False"),
                        )
                        .with_child(DomNode::element("t").with_attr("class", "TEXT_CLASS").with_text("xj")),
                )
                .with_child(DomNode::element("button").with_text("Submit")),
        );
        DomTree::new(root).unwrap()
    }

    #[test]
    fn parses_minimal_nesting() {
        let tree = parse_html(MINIMAL).unwrap();
        let mut count = 0;
        tree.root().walk(&mut |_| count += 1);
        assert_eq!(count, 3);
        let button = tree.find(|n| n.tag() == "button").unwrap();
        assert_eq!(button.text(), Some("Submit"));
        assert_eq!(button.id(), Some("subbtn"));
    }

    #[test]
    fn canonical_input_serializes_to_itself() {
        assert_eq!(serialize(&parse_html(MINIMAL).unwrap()), MINIMAL);
    }

    #[test]
    fn empty_body() {
        assert_eq!(serialize(&DomTree::empty()), "<body></body>");
        assert_eq!(serialize(&parse_html("  <body>\n</body>\n").unwrap()), "<body></body>");
    }

    #[test]
    fn ref_rendering_on_five_node_fixture() {
        let tree = assign_default_refs(&fixture_five());
        let expected = concat!(
            r#"<body ref="1"><div id="wrap" ref="2"><label ref="3">"#,
            r#"<input type="checkbox" value="False" ref="4"></input>"#,
            r#"<t class="TEXT_CLASS">xj</t></label>"#,
            r#"<button ref="5">Submit</button></div></body>"#
        );
        assert_eq!(serialize(&tree), expected);
    }

    #[test]
    fn loads_refs_from_dump() {
        let src = concat!(
            r#"<body ref="1"><div id="wrap" ref="2"><div id="area" ref="3"><div id="boxes-left" ref="4">"#,
            r#"<label ref="5"><input type="checkbox" id="ch0" ref="6" value="False"></input>"#,
            r#"<t class="TEXT_CLASS" ref="None">KLv</t></label></div></div></div></body>"#
        );
        let tree = parse_html(src).unwrap();
        assert_eq!(tree.root().node_ref(), Some(1));
        assert_eq!(tree.root().children()[0].node_ref(), Some(2));
        assert_eq!(tree.root().children()[0].children()[0].node_ref(), Some(3));
        assert_eq!(find_by_ref(&tree, 3).unwrap().id(), Some("area"));
        assert_eq!(find_by_ref(&tree, 6).unwrap().attr("value"), Some("False"));
        let t = tree.find(|n| n.tag() == "t").unwrap();
        assert_eq!(t.node_ref(), None);
        // Renumbering reproduces the dump's numbering.
        assert_eq!(assign_default_refs(&tree), tree);
    }

    #[test]
    fn mismatched_close_points_at_the_close_tag() {
        let err = parse_html("<body><div></span></body>").unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::MismatchedClose {
                expected: "div".into(),
                found: "span".into()
            }
        );
        assert_eq!((err.line, err.column), (1, 12));
    }

    #[test]
    fn error_positions_track_lines() {
        let err = parse_html("<body>\n  <div>\n  </p>\n</body>").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MismatchedClose { .. }));
        assert_eq!((err.line, err.column), (3, 3));
    }

    #[test]
    fn unclosed_tag() {
        let err = parse_html("<body><div>").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnclosedTag { tag: "div".into() });
        assert_eq!((err.line, err.column), (1, 7));
        let err = parse_html("<body><div id=\"a\"").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnclosedTag { tag: "div".into() });
    }

    #[test]
    fn malformed_attributes() {
        for src in [
            "<body><div id=area></div></body>",
            "<body><div id='a'></div></body>",
            "<body><div id></div></body>",
            "<body><div id=\"a\" id=\"b\"></div></body>",
            "<body><div id=\"a\"class=\"b\"></div></body>",
            "<body><div id=\"a&bogus;\"></div></body>",
            "<body><div ref=\"x\"></div></body>",
            "<body><div ref=\"0\"></div></body>",
            "<body><div/></body>",
        ] {
            let err = parse_html(src).unwrap_err();
            assert!(
                matches!(err.kind, ParseErrorKind::MalformedAttribute { .. }),
                "{src}: {err}"
            );
        }
    }

    #[test]
    fn other_strictness_errors() {
        type Case = (&'static str, fn(&ParseErrorKind) -> bool);
        let cases: [Case; 7] = [
            ("<body><table></table></body>", |k| matches!(k, ParseErrorKind::UnsupportedTag { .. })),
            ("<div></div>", |k| matches!(k, ParseErrorKind::RootNotBody { .. })),
            ("<body></body><div></div>", |k| matches!(k, ParseErrorKind::TrailingContent)),
            ("<body><p><span>a</span>b</p></body>", |k| matches!(k, ParseErrorKind::UnexpectedText)),
            ("<body><input>x</input></body>", |k| matches!(k, ParseErrorKind::VoidWithContent { .. })),
            ("<body><p>a &copy; b</p></body>", |k| matches!(k, ParseErrorKind::MalformedEntity { .. })),
            ("<body ref=\"1\"><div ref=\"1\"></div></body>", |k| matches!(k, ParseErrorKind::DuplicateRef { .. })),
        ];
        for (src, check) in cases {
            let err = parse_html(src).unwrap_err();
            assert!(check(&err.kind), "{src}: {err}");
        }
    }

    #[test]
    fn void_elements_self_close_or_close_explicitly() {
        let a = parse_html(r#"<body><input type="text"/><img/></body>"#).unwrap();
        let b = parse_html(r#"<body><input type="text"></input><img></img></body>"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(serialize(&a), r#"<body><input type="text"></input><img></img></body>"#);
    }

    #[test]
    fn entities_round_trip() {
        let node = DomNode::element("body")
            .with_child(DomNode::element("p").with_attr("title", "a\"b'c<&>").with_text("x < y & 'z'"));
        let tree = DomTree::new(node).unwrap();
        let text = serialize(&tree);
        assert_eq!(
            text,
            r#"<body><p title="a&quot;b&#39;c&lt;&amp;&gt;">x &lt; y &amp; &#39;z&#39;</p></body>"#
        );
        assert_eq!(parse_html(&text).unwrap(), tree);
    }

    #[test]
    fn uppercase_tags_are_canonicalised() {
        let tree = parse_html(r#"<BODY><DIV ID="x">hi</div></BODY>"#).unwrap();
        assert_eq!(serialize(&tree), r#"<body><div id="x">hi</div></body>"#);
    }

    #[test]
    fn assign_refs_chain_and_non_referable() {
        let tree = parse_html(r#"<body><div><button>b</button></div></body>"#).unwrap();
        let numbered = assign_refs(&tree, &BTreeSet::new());
        assert_eq!(numbered.preorder_refs(), vec![1, 2, 3]);

        let numbered = assign_default_refs(&fixture_five());
        let t = numbered.find(|n| n.tag() == "t").unwrap();
        assert_eq!(t.node_ref(), None);
        assert_eq!(numbered.preorder_refs(), vec![1, 2, 3, 4, 5]);

        let single = assign_default_refs(&DomTree::empty());
        assert_eq!(single.preorder_refs(), vec![1]);
    }

    #[test]
    fn assign_refs_discards_existing_numbering() {
        let tree = parse_html(r#"<body ref="7"><div ref="3"></div></body>"#).unwrap();
        assert_eq!(assign_default_refs(&tree).preorder_refs(), vec![1, 2]);
    }

    #[test]
    fn find_by_ref_misses() {
        let tree = assign_default_refs(&fixture_five());
        assert_eq!(find_by_ref(&tree, 0), Err(DomError::RefNotFound(0)));
        assert_eq!(find_by_ref(&tree, 99), Err(DomError::RefNotFound(99)));
        assert_eq!(find_by_ref(&tree, 5).unwrap().tag(), "button");
    }

    #[test]
    fn set_value_toggles_checkbox_and_is_persistent() {
        let tree = assign_default_refs(&fixture_five());
        let before = serialize(&tree);
        let after = mutate(&tree, Edit::SetValue { target: 4, value: "True".into() }).unwrap();
        assert_eq!(find_by_ref(&after, 4).unwrap().attr("value"), Some("True"));
        assert_eq!(serialize(&tree), before);
    }

    #[test]
    fn set_attribute_appends_new_names() {
        let tree = assign_default_refs(&fixture_five());
        let after = mutate(
            &tree,
            Edit::SetAttribute { target: 5, name: "class".into(), value: "primary".into() },
        )
        .unwrap();
        assert_eq!(
            serialize_node(find_by_ref(&after, 5).unwrap()),
            r#"<button class="primary" ref="5">Submit</button>"#
        );
        assert_eq!(
            mutate(&tree, Edit::SetAttribute { target: 5, name: "ref".into(), value: "9".into() }),
            Err(DomError::ReservedAttribute)
        );
    }

    #[test]
    fn edits_on_missing_refs_fail() {
        let tree = assign_default_refs(&fixture_five());
        assert_eq!(
            mutate(&tree, Edit::SetAttribute { target: 42, name: "x".into(), value: "y".into() }),
            Err(DomError::RefNotFound(42))
        );
        assert_eq!(
            mutate(&tree, Edit::SetValue { target: 42, value: "y".into() }),
            Err(DomError::RefNotFound(42))
        );
    }

    #[test]
    fn insert_subtree_then_renumber_shifts_refs() {
        let tree = assign_default_refs(&fixture_five());
        // Enumerate (id-or-text, ref) before and after by hand.
        let nav = DomNode::element("div")
            .with_attr("id", "nav")
            .with_child(DomNode::element("a").with_text("one"))
            .with_child(DomNode::element("a").with_text("two"));
        let k = nav.count_referable(&default_non_referable());
        assert_eq!(k, 3);

        let inserted = mutate(
            &tree,
            Edit::InsertSubtree { position: InsertPosition::FirstChildOfBody, subtree: nav.clone() },
        )
        .unwrap();
        // No renumbering yet: the new nodes carry no refs.
        assert_eq!(inserted.preorder_refs(), vec![1, 2, 3, 4, 5]);
        let renumbered = assign_default_refs(&inserted);
        assert_eq!(find_by_ref(&renumbered, 1).unwrap().tag(), "body");
        assert_eq!(find_by_ref(&renumbered, 2).unwrap().id(), Some("nav"));
        assert_eq!(find_by_ref(&renumbered, 5).unwrap().id(), Some("wrap"));
        assert_eq!(find_by_ref(&renumbered, 8).unwrap().text(), Some("Submit"));

        let bottom = assign_default_refs(
            &mutate(&tree, Edit::InsertSubtree { position: InsertPosition::LastChildOfBody, subtree: nav })
                .unwrap(),
        );
        assert_eq!(find_by_ref(&bottom, 5).unwrap().text(), Some("Submit"));
        assert_eq!(find_by_ref(&bottom, 6).unwrap().id(), Some("nav"));
    }

    #[test]
    fn text_is_trimmed_on_build_and_parse() {
        let built = DomNode::element("body").with_child(DomNode::element("p").with_text("  hi "));
        let parsed = parse_html("<body><p>\n  hi\n</p></body>").unwrap();
        assert_eq!(DomTree::new(built).unwrap(), parsed);
        assert_eq!(DomNode::element("p").with_text("   ").text(), None);
    }
}
