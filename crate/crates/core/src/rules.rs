//! Tree-implication rules over abstracted documents.
//!
//! A rule fires wherever its antecedent pattern matches; each firing
//! without a consequent match inside the matched sub-tree is one
//! violation. Pattern children match unordered, anywhere among the
//! matched node's descendants.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{is_valid_node_type, AstNode, DocumentRoot, NodePath};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("failed to read rule file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid rule JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rule `{rule}`: invalid pattern node type `{tag}`")]
    InvalidNodeType { rule: String, tag: String },
    #[error("rule `{rule}`: `{tag}` is not an ABS tag")]
    BadAbsTag { rule: String, tag: String },
    #[error("duplicate rule id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

/// Pattern over tree nodes: a type tag, an optional exact value, an
/// optional required ABS child tag, and child patterns with containment
/// semantics (each must match somewhere below the matched node).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreePattern {
    #[serde(rename = "type")]
    pub node_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreePattern>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeRule {
    pub id: String,
    pub severity: Severity,
    pub message: String,
    pub antecedent: TreePattern,
    pub consequent: TreePattern,
}

impl TreePattern {
    fn validate(&self, rule: &str) -> Result<(), RuleError> {
        if !is_valid_node_type(&self.node_type) {
            return Err(RuleError::InvalidNodeType {
                rule: rule.to_string(),
                tag: self.node_type.clone(),
            });
        }
        if let Some(abs) = &self.abs {
            if !abs.starts_with("ABS-") || !is_valid_node_type(abs) {
                return Err(RuleError::BadAbsTag {
                    rule: rule.to_string(),
                    tag: abs.clone(),
                });
            }
        }
        for child in &self.children {
            child.validate(rule)?;
        }
        Ok(())
    }

    fn self_matches(&self, node: &AstNode) -> bool {
        node.node_type() == self.node_type
            && self
                .value
                .as_deref()
                .is_none_or(|v| node.value() == Some(v))
            && self
                .abs
                .as_deref()
                .is_none_or(|tag| node.children().iter().any(|c| c.node_type() == tag))
    }

    fn pattern_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(TreePattern::pattern_count)
            .sum::<usize>()
    }
}

/// Parses and validates a JSON rule list.
pub fn load_rules(text: &str) -> Result<Vec<TreeRule>, RuleError> {
    let rules: Vec<TreeRule> = serde_json::from_str(text)?;
    let mut seen = std::collections::BTreeSet::new();
    for rule in &rules {
        if !seen.insert(rule.id.clone()) {
            return Err(RuleError::DuplicateId(rule.id.clone()));
        }
        rule.antecedent.validate(&rule.id)?;
        rule.consequent.validate(&rule.id)?;
    }
    Ok(rules)
}

pub fn load_rules_file(path: &std::path::Path) -> Result<Vec<TreeRule>, RuleError> {
    load_rules(&std::fs::read_to_string(path)?)
}

/// The rule set shipped with the library.
pub fn bundled_rules() -> &'static [TreeRule] {
    static BUNDLED: OnceLock<Vec<TreeRule>> = OnceLock::new();
    BUNDLED.get_or_init(|| load_rules(include_str!("../assets/rules.json")).expect("bundled rules"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule_id: String,
    pub path: NodePath,
}

// ---------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------

/// Pre-order flattening: node `i`'s subtree occupies indices
/// `i..subtree_end[i]`, which makes descendant scans index ranges.
struct FlatTree<'a> {
    nodes: Vec<&'a AstNode>,
    subtree_end: Vec<usize>,
    paths: Vec<NodePath>,
}

impl<'a> FlatTree<'a> {
    fn build(root: &'a AstNode) -> Self {
        let mut flat = FlatTree {
            nodes: Vec::new(),
            subtree_end: Vec::new(),
            paths: Vec::new(),
        };
        fn go<'a>(node: &'a AstNode, path: &mut NodePath, flat: &mut FlatTree<'a>) {
            let idx = flat.nodes.len();
            flat.nodes.push(node);
            flat.subtree_end.push(0);
            flat.paths.push(path.clone());
            for (i, child) in node.children().iter().enumerate() {
                path.push(i);
                go(child, path, flat);
                path.pop();
            }
            flat.subtree_end[idx] = flat.nodes.len();
        }
        go(root, &mut Vec::new(), &mut flat);
        flat
    }
}

/// Memoized matcher for one pattern over one flattened tree.
struct Matcher<'p, 'a> {
    pattern_nodes: Vec<&'p TreePattern>,
    tree: &'a FlatTree<'a>,
    memo: Vec<Vec<Option<bool>>>,
}

impl<'p, 'a> Matcher<'p, 'a> {
    fn new(pattern: &'p TreePattern, tree: &'a FlatTree<'a>) -> Self {
        fn collect<'p>(p: &'p TreePattern, out: &mut Vec<&'p TreePattern>) {
            out.push(p);
            for c in &p.children {
                collect(c, out);
            }
        }
        let mut pattern_nodes = Vec::with_capacity(pattern.pattern_count());
        collect(pattern, &mut pattern_nodes);
        let memo = vec![vec![None; tree.nodes.len()]; pattern_nodes.len()];
        Matcher {
            pattern_nodes,
            tree,
            memo,
        }
    }

    fn pattern_id(&self, p: &TreePattern) -> usize {
        self.pattern_nodes
            .iter()
            .position(|q| std::ptr::eq(*q, p))
            .expect("pattern node collected")
    }

    fn matches_at(&mut self, p: &'p TreePattern, node_idx: usize) -> bool {
        let pid = self.pattern_id(p);
        if let Some(hit) = self.memo[pid][node_idx] {
            return hit;
        }
        let mut result = p.self_matches(self.tree.nodes[node_idx]);
        if result {
            for child in &p.children {
                let mut found = false;
                for j in node_idx + 1..self.tree.subtree_end[node_idx] {
                    if self.matches_at(child, j) {
                        found = true;
                        break;
                    }
                }
                if !found {
                    result = false;
                    break;
                }
            }
        }
        self.memo[pid][node_idx] = Some(result);
        result
    }
}

/// All violations of `rules` in one document, ordered by tree path then
/// rule id.
pub fn check_document(doc: &DocumentRoot, rules: &[TreeRule]) -> Vec<Violation> {
    let tree = FlatTree::build(doc.root());
    let mut violations = Vec::new();
    for rule in rules {
        let mut antecedent = Matcher::new(&rule.antecedent, &tree);
        let mut consequent = Matcher::new(&rule.consequent, &tree);
        for i in 0..tree.nodes.len() {
            if !antecedent.matches_at(&rule.antecedent, i) {
                continue;
            }
            let satisfied =
                (i..tree.subtree_end[i]).any(|j| consequent.matches_at(&rule.consequent, j));
            if !satisfied {
                violations.push(Violation {
                    rule_id: rule.id.clone(),
                    path: tree.paths[i].clone(),
                });
            }
        }
    }
    violations.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.rule_id.cmp(&b.rule_id)));
    violations
}

// ---------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamStats {
    pub files: usize,
    pub violations: u64,
    pub mean_per_file: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleRow {
    pub rule_id: String,
    pub severity: Severity,
    pub gold: u64,
    pub corpus: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<RuleRow>,
    pub gold: StreamStats,
    pub corpus: StreamStats,
    /// corpus mean over gold mean; `None` when either stream is empty or
    /// the gold stream has no violations.
    pub ratio: Option<f64>,
}

fn stream_stats(docs: &[DocumentRoot], rules: &[TreeRule], per_rule: &mut [u64]) -> StreamStats {
    let mut total = 0u64;
    for doc in docs {
        for v in check_document(doc, rules) {
            total += 1;
            if let Some(idx) = rules.iter().position(|r| r.id == v.rule_id) {
                per_rule[idx] += 1;
            }
        }
    }
    StreamStats {
        files: docs.len(),
        violations: total,
        mean_per_file: if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        },
    }
}

/// Per-rule counts and per-stream means, plus the corpus/gold ratio
/// computed by cross-multiplication so integer-exact ratios stay exact.
pub fn corpus_report(
    gold_docs: &[DocumentRoot],
    corpus_docs: &[DocumentRoot],
    rules: &[TreeRule],
) -> Report {
    let mut gold_counts = vec![0u64; rules.len()];
    let mut corpus_counts = vec![0u64; rules.len()];
    let gold = stream_stats(gold_docs, rules, &mut gold_counts);
    let corpus = stream_stats(corpus_docs, rules, &mut corpus_counts);
    let rows = rules
        .iter()
        .zip(gold_counts.iter().zip(&corpus_counts))
        .map(|(rule, (&g, &c))| RuleRow {
            rule_id: rule.id.clone(),
            severity: rule.severity,
            gold: g,
            corpus: c,
        })
        .collect();
    let ratio = if gold.files == 0 || corpus.files == 0 || gold.violations == 0 {
        None
    } else {
        let num = corpus.violations as f64 * gold.files as f64;
        let den = gold.violations as f64 * corpus.files as f64;
        Some(num / den)
    };
    Report {
        rows,
        gold,
        corpus,
        ratio,
    }
}
