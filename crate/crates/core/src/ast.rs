//! The typed tree shared by every pipeline stage.
//!
//! Every representation from the top-level Dockerfile parse down to the
//! abstracted trees is built from the same node shape: an uppercase
//! dash-separated type tag, an optional literal value, and an ordered list
//! of children. Trees are immutable values; every rewrite returns a new
//! tree, which keeps per-file processing trivially parallel.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// First segments a node-type tag may start with.
///
/// `MAYBE` covers `MAYBE-SEMANTIC-COMMAND`, the phase-II wrapper for simple
/// commands that no command schema has (yet) claimed.
pub const ALLOWED_TYPE_PREFIXES: &[&str] = &["DOCKER", "BASH", "SC", "ABS", "UNKNOWN", "MAYBE"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AstError {
    #[error("invalid node type `{0}`: expected [A-Z0-9]+(-[A-Z0-9]+)* starting with one of DOCKER, BASH, SC, ABS, UNKNOWN, MAYBE")]
    InvalidNodeType(String),
    #[error("invalid file sha `{0}`: expected 64 lowercase hex characters")]
    InvalidSha(String),
    #[error("path {path:?} does not address a node (no child {index} at depth {depth})")]
    InvalidPath {
        path: Vec<usize>,
        depth: usize,
        index: usize,
    },
    #[error("document root must have type DOCKER-FILE, got `{0}`")]
    BadRoot(String),
}

/// Checks the node-type grammar: dash-separated uppercase alphanumeric
/// segments, first segment from [`ALLOWED_TYPE_PREFIXES`].
pub fn is_valid_node_type(tag: &str) -> bool {
    let mut segments = tag.split('-');
    let first = match segments.next() {
        Some(s) => s,
        None => return false,
    };
    if !ALLOWED_TYPE_PREFIXES.contains(&first) {
        return false;
    }
    std::iter::once(first).chain(segments).all(|seg| {
        !seg.is_empty()
            && seg
                .bytes()
                .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
    })
}

/// Child-index sequence addressing a node from the root.
pub type NodePath = Vec<usize>;

/// One node of the universal tree.
///
/// The type tag is validated at construction, so a tree reachable through
/// safe code never holds a tag outside the grammar. `extras` carries
/// unknown JSON keys preserved by the permissive decoder; trees built by
/// the parsers never have any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    node_type: String,
    value: Option<String>,
    children: Vec<AstNode>,
    extras: BTreeMap<String, Value>,
}

impl AstNode {
    pub fn new(
        node_type: impl Into<String>,
        value: Option<String>,
        children: Vec<AstNode>,
    ) -> Result<Self, AstError> {
        let node_type = node_type.into();
        if !is_valid_node_type(&node_type) {
            return Err(AstError::InvalidNodeType(node_type));
        }
        Ok(AstNode {
            node_type,
            value,
            children,
            extras: BTreeMap::new(),
        })
    }

    /// Leaf carrying a literal value.
    ///
    /// Panics on an invalid tag; use only with tags that are compile-time
    /// constants.
    pub fn leaf(node_type: &str, value: impl Into<String>) -> Self {
        Self::new(node_type, Some(value.into()), Vec::new()).expect("invalid node type literal")
    }

    /// Interior node without a value. Panics on an invalid tag.
    pub fn branch(node_type: &str, children: Vec<AstNode>) -> Self {
        Self::new(node_type, None, children).expect("invalid node type literal")
    }

    /// Childless, valueless marker node. Panics on an invalid tag.
    pub fn bare(node_type: &str) -> Self {
        Self::branch(node_type, Vec::new())
    }

    pub fn node_type(&self) -> &str {
        &self.node_type
    }

    pub fn value(&self) -> Option<&str> {
        self.value.as_deref()
    }

    pub fn children(&self) -> &[AstNode] {
        &self.children
    }

    pub fn extras(&self) -> &BTreeMap<String, Value> {
        &self.extras
    }

    pub(crate) fn set_extras(&mut self, extras: BTreeMap<String, Value>) {
        self.extras = extras;
    }

    /// First dash-separated segment of the type tag.
    pub fn type_prefix(&self) -> &str {
        self.node_type.split('-').next().unwrap_or("")
    }

    /// Consuming builder used while assembling trees.
    pub fn with_child(mut self, child: AstNode) -> Self {
        self.children.push(child);
        self
    }

    pub fn with_value(mut self, value: impl Into<String>) -> Self {
        self.value = Some(value.into());
        self
    }

    /// Node addressed by `path`, if it exists.
    pub fn get(&self, path: &[usize]) -> Option<&AstNode> {
        let mut cur = self;
        for &idx in path {
            cur = cur.children.get(idx)?;
        }
        Some(cur)
    }

    /// Total node count including `self`.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(AstNode::node_count).sum::<usize>()
    }

    /// Pre-order traversal yielding `(path, node)` pairs, `self` first.
    pub fn pre_order(&self) -> PreOrder<'_> {
        PreOrder {
            stack: vec![(Vec::new(), self)],
        }
    }

    /// All `(path, node)` pairs whose node satisfies `predicate`, in
    /// pre-order.
    pub fn find_subtrees<F>(&self, predicate: F) -> Vec<(NodePath, &AstNode)>
    where
        F: Fn(&AstNode) -> bool,
    {
        self.pre_order().filter(|(_, n)| predicate(n)).collect()
    }

    /// Returns a copy of `self` with the node at `path` swapped for
    /// `replacement`. `self` is left untouched.
    pub fn replace_subtree(
        &self,
        path: &[usize],
        replacement: AstNode,
    ) -> Result<AstNode, AstError> {
        fn go(
            node: &AstNode,
            path: &[usize],
            depth: usize,
            replacement: AstNode,
        ) -> Result<AstNode, AstError> {
            match path.split_first() {
                None => Ok(replacement),
                Some((&idx, rest)) => {
                    if idx >= node.children.len() {
                        return Err(AstError::InvalidPath {
                            path: path.to_vec(),
                            depth,
                            index: idx,
                        });
                    }
                    let mut out = node.clone();
                    out.children[idx] = go(&node.children[idx], rest, depth + 1, replacement)?;
                    Ok(out)
                }
            }
        }
        go(self, path, 0, replacement)
    }
}

impl fmt::Display for AstNode {
    /// Compact s-expression style rendering, used in error messages and
    /// test diagnostics.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.node_type)?;
        if let Some(v) = &self.value {
            write!(f, " {v:?}")?;
        }
        for c in &self.children {
            write!(f, " {c}")?;
        }
        write!(f, ")")
    }
}

pub struct PreOrder<'a> {
    stack: Vec<(NodePath, &'a AstNode)>,
}

impl<'a> Iterator for PreOrder<'a> {
    type Item = (NodePath, &'a AstNode);

    fn next(&mut self) -> Option<Self::Item> {
        let (path, node) = self.stack.pop()?;
        for (i, child) in node.children.iter().enumerate().rev() {
            let mut child_path = path.clone();
            child_path.push(i);
            self.stack.push((child_path, child));
        }
        Some((path, node))
    }
}

/// Lowercase hex SHA-256 digest naming one source file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FileSha(String);

impl FileSha {
    pub fn new(s: impl Into<String>) -> Result<Self, AstError> {
        let s = s.into();
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(FileSha(s))
        } else {
            Err(AstError::InvalidSha(s))
        }
    }

    pub fn of_bytes(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut out = String::with_capacity(64);
        for b in digest {
            use fmt::Write;
            write!(out, "{b:02x}").unwrap();
        }
        FileSha(out)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FileSha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for FileSha {
    type Err = AstError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FileSha::new(s)
    }
}

/// Pipeline stage that produced a serialized document.
///
/// The numbering follows the representation chain: 2 = top-level parse,
/// 3 = embedded shell parsed, 4 = command invocations schema-parsed,
/// 5 = abstraction tags inserted. Representations 0 and 1 are raw source
/// archives and never appear as trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rep {
    Phase1,
    Phase2,
    Phase3,
    Abstracted,
}

impl Rep {
    pub fn number(self) -> u8 {
        match self {
            Rep::Phase1 => 2,
            Rep::Phase2 => 3,
            Rep::Phase3 => 4,
            Rep::Abstracted => 5,
        }
    }

    pub fn from_number(n: u64) -> Option<Rep> {
        match n {
            2 => Some(Rep::Phase1),
            3 => Some(Rep::Phase2),
            4 => Some(Rep::Phase3),
            5 => Some(Rep::Abstracted),
            _ => None,
        }
    }
}

impl fmt::Display for Rep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rep{}", self.number())
    }
}

/// One Dockerfile's tree plus the identity of the source it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRoot {
    file_sha: FileSha,
    rep: Option<Rep>,
    root: AstNode,
}

impl DocumentRoot {
    pub fn new(file_sha: FileSha, root: AstNode) -> Result<Self, AstError> {
        if root.node_type() != "DOCKER-FILE" {
            return Err(AstError::BadRoot(root.node_type().to_string()));
        }
        Ok(DocumentRoot {
            file_sha,
            rep: None,
            root,
        })
    }

    pub fn with_rep(mut self, rep: Rep) -> Self {
        self.rep = Some(rep);
        self
    }

    pub fn file_sha(&self) -> &FileSha {
        &self.file_sha
    }

    pub fn rep(&self) -> Option<Rep> {
        self.rep
    }

    pub fn root(&self) -> &AstNode {
        &self.root
    }

    /// Same document with a rewritten tree. The sha is carried over: the
    /// identity of a document never changes across phases.
    pub fn map_root(&self, root: AstNode) -> Result<Self, AstError> {
        let mut out = DocumentRoot::new(self.file_sha.clone(), root)?;
        out.rep = self.rep;
        Ok(out)
    }
}
