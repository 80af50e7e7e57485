//! Final representation: named regular expressions over literal values.
//!
//! Each table entry whose pattern matches a node's value appends one
//! ABS-<NAME> child after the node's existing children, in table order.
//! The pass is additive and fully reversible; it deliberately stops short
//! of being another parsing phase.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::ast::{is_valid_node_type, AstNode, DocumentRoot};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("failed to read abstraction table: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `NAME<TAB>pattern`")]
    BadLine { line: usize },
    #[error("line {line}: `{name}` does not form a valid ABS node type")]
    BadName { line: usize, name: String },
    #[error("line {line}: duplicate abstraction `{name}`")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: invalid pattern: {source}")]
    BadPattern {
        line: usize,
        #[source]
        source: regex::Error,
    },
}

#[derive(Debug, Clone)]
pub struct AbstractionEntry {
    pub name: String,
    pub node_name: String,
    pub pattern: Regex,
}

/// Ordered list of named regular expressions.
#[derive(Debug, Clone, Default)]
pub struct AbstractionTable {
    entries: Vec<AbstractionEntry>,
}

impl AbstractionTable {
    /// Parses the `NAME<TAB>pattern` line format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut entries: Vec<AbstractionEntry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (name, pattern) = trimmed
                .split_once('\t')
                .ok_or(TableError::BadLine { line })?;
            let name = name.trim().to_string();
            let node_name = format!("ABS-{name}");
            if !is_valid_node_type(&node_name) {
                return Err(TableError::BadName { line, name });
            }
            if entries.iter().any(|e| e.name == name) {
                return Err(TableError::DuplicateName { line, name });
            }
            let pattern = Regex::new(pattern.trim())
                .map_err(|source| TableError::BadPattern { line, source })?;
            entries.push(AbstractionEntry {
                name,
                node_name,
                pattern,
            });
        }
        Ok(AbstractionTable { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TableError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The default table shipped with the library.
    pub fn bundled() -> &'static AbstractionTable {
        static BUNDLED: OnceLock<AbstractionTable> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            AbstractionTable::parse(include_str!("../assets/abstractions.tsv"))
                .expect("bundled table")
        })
    }

    pub fn entries(&self) -> &[AbstractionEntry] {
        &self.entries
    }

    /// Node names of every entry matching `value`, in table order.
    pub fn matches(&self, value: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.pattern.is_match(value))
            .map(|e| e.node_name.as_str())
            .collect()
    }
}

fn abstract_node(node: &AstNode, table: &AbstractionTable) -> AstNode {
    let mut children: Vec<AstNode> = node
        .children()
        .iter()
        .map(|c| abstract_node(c, table))
        .collect();
    if let Some(value) = node.value() {
        for tag in table.matches(value) {
            children.push(AstNode::bare(tag));
        }
    }
    let mut out = AstNode::new(node.node_type(), node.value().map(str::to_string), children)
        .expect("type already validated");
    out.set_extras(node.extras().clone());
    out
}

/// Applies the table to every literal-bearing node of the document.
pub fn abstract_document(doc: &DocumentRoot, table: &AbstractionTable) -> DocumentRoot {
    doc.map_root(abstract_node(doc.root(), table))
        .expect("root type unchanged")
}

fn strip_node(node: &AstNode) -> AstNode {
    let children: Vec<AstNode> = node
        .children()
        .iter()
        .filter(|c| c.type_prefix() != "ABS")
        .map(strip_node)
        .collect();
    let mut out = AstNode::new(node.node_type(), node.value().map(str::to_string), children)
        .expect("type already validated");
    out.set_extras(node.extras().clone());
    out
}

/// Removes every ABS-* node; inverse of [`abstract_document`] on its
/// image.
pub fn strip_abstractions(doc: &DocumentRoot) -> DocumentRoot {
    doc.map_root(strip_node(doc.root()))
        .expect("root type unchanged")
}
