//! Shared helpers for the integration and acceptance suites: the golden
//! tree matcher, randomized generators, and the brute-force rule-checker
//! oracle.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use dockast_core::ast::{AstNode, DocumentRoot, FileSha};
use dockast_core::corpus::{CorpusRecord, Tag};
use dockast_core::rules::{TreePattern, TreeRule, Violation};

// ---------------------------------------------------------------------
// Golden fixtures
// ---------------------------------------------------------------------

/// One element of a golden children list: either a concrete node or the
/// `"..."` sentinel standing for any (possibly empty) run of nodes.
#[derive(Debug, Clone)]
pub enum Golden {
    Gap,
    Node(GoldenNode),
}

/// A golden node constrains the type always, the value only when the
/// fixture spells one, and the children (with gaps) when present.
#[derive(Debug, Clone)]
pub struct GoldenNode {
    pub node_type: String,
    pub value: Option<String>,
    pub children: Option<Vec<Golden>>,
}

pub fn load_golden(path: &Path) -> GoldenNode {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    let value: serde_json::Value = serde_json::from_str(&text).expect("fixture is valid JSON");
    golden_node(&value)
}

fn golden_node(value: &serde_json::Value) -> GoldenNode {
    let obj = value.as_object().expect("golden node is an object");
    let node_type = obj
        .get("type")
        .and_then(|v| v.as_str())
        .expect("golden node has a type")
        .to_string();
    let value_field = obj
        .get("value")
        .and_then(|v| v.as_str())
        .map(str::to_string);
    let children = obj.get("children").map(|c| {
        c.as_array()
            .expect("children is an array")
            .iter()
            .map(|item| match item {
                serde_json::Value::String(s) if s == "..." => Golden::Gap,
                other => Golden::Node(golden_node(other)),
            })
            .collect()
    });
    GoldenNode {
        node_type,
        value: value_field,
        children,
    }
}

pub fn golden_matches(golden: &GoldenNode, node: &AstNode) -> bool {
    if golden.node_type != node.node_type() {
        return false;
    }
    if let Some(v) = &golden.value {
        if node.value() != Some(v.as_str()) {
            return false;
        }
    }
    match &golden.children {
        None => true,
        Some(patterns) => seq_matches(patterns, node.children()),
    }
}

fn seq_matches(patterns: &[Golden], nodes: &[AstNode]) -> bool {
    match patterns.split_first() {
        None => nodes.is_empty(),
        Some((Golden::Gap, rest)) => (0..=nodes.len()).any(|k| seq_matches(rest, &nodes[k..])),
        Some((Golden::Node(g), rest)) => match nodes.split_first() {
            Some((first, tail)) => golden_matches(g, first) && seq_matches(rest, tail),
            None => false,
        },
    }
}

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn testdata_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../testdata")
        .join(name)
}

/// Renders a node compactly for assertion messages.
pub fn describe(node: &AstNode) -> String {
    format!("{node}")
}

// ---------------------------------------------------------------------
// Random trees and documents
// ---------------------------------------------------------------------

pub const TYPE_POOL: &[&str] = &[
    "DOCKER-RUN",
    "DOCKER-FROM",
    "DOCKER-IMAGE-NAME",
    "BASH-SCRIPT",
    "BASH-LITERAL",
    "BASH-SINGLE-QUOTED",
    "BASH-COMMAND-COMMAND",
    "BASH-COMMAND-ARGS",
    "MAYBE-SEMANTIC-COMMAND",
    "SC-NPM-INSTALL",
    "SC-NPM-F-PRODUCTION",
    "SC-APT-GET-INSTALL",
    "SC-APT-GET-F-YES",
    "UNKNOWN-BASH-FRAGMENT",
];

pub const VALUE_POOL: &[&str] = &[
    "npm",
    "install",
    "--production",
    "42",
    "https://example.com/pkg.tar.gz",
    "/usr/local/bin",
    "./relative",
    "plain word with spaces",
    "quote\"inside",
    "back\\slash",
    "unicode ↯ λ",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tree with at most `budget` nodes (at least one).
pub fn gen_tree(rng: &mut ChaCha8Rng, budget: usize) -> AstNode {
    fn go(rng: &mut ChaCha8Rng, budget: &mut usize, depth: usize) -> AstNode {
        *budget = budget.saturating_sub(1);
        let node_type = TYPE_POOL[rng.gen_range(0..TYPE_POOL.len())];
        let value = if rng.gen_bool(0.5) {
            Some(VALUE_POOL[rng.gen_range(0..VALUE_POOL.len())].to_string())
        } else {
            None
        };
        let mut children = Vec::new();
        if depth < 6 {
            while *budget > 0 && rng.gen_bool(0.6) && children.len() < 4 {
                children.push(go(rng, budget, depth + 1));
            }
        }
        AstNode::new(node_type, value, children).expect("pool tags are valid")
    }
    let mut budget = budget.max(1);
    go(rng, &mut budget, 0)
}

pub fn gen_doc(rng: &mut ChaCha8Rng, budget: usize) -> DocumentRoot {
    let mut children = Vec::new();
    let mut remaining = budget;
    while remaining > 1 && rng.gen_bool(0.7) && children.len() < 5 {
        let child_budget = rng.gen_range(1..=remaining.max(2) - 1);
        children.push(gen_tree(rng, child_budget));
        remaining = remaining.saturating_sub(child_budget);
    }
    let root = AstNode::branch("DOCKER-FILE", children);
    let sha_seed: u64 = rng.gen();
    DocumentRoot::new(FileSha::of_bytes(&sha_seed.to_le_bytes()), root).unwrap()
}

// ---------------------------------------------------------------------
// Synthetic Dockerfiles and corpora
// ---------------------------------------------------------------------

const RUN_PAYLOADS: &[&str] = &[
    "npm install --production",
    "npm install",
    "apt-get update && apt-get install -y curl",
    "apt-get install vim",
    "pip install --no-cache-dir flask",
    "apk add --no-cache git",
    "curl -f https://example.com/x -o /tmp/x",
    "curl http://example.com/y",
    "tar -xzf /tmp/x -C /opt",
    "mkdir -p /srv/data",
    "VERSION=1.2.3",
    "echo \"building $APP\"",
    "wget -q https://example.org/a.tar.gz",
    "git clone --depth 1 https://github.com/a/b /src",
];

/// A small, always-valid synthetic Dockerfile.
pub fn gen_dockerfile(rng: &mut ChaCha8Rng) -> String {
    let mut out = format!("FROM base:{}\n", rng.gen_range(1..40));
    for _ in 0..rng.gen_range(0..6) {
        match rng.gen_range(0..5) {
            0 => out.push_str(&format!(
                "RUN {}\n",
                RUN_PAYLOADS[rng.gen_range(0..RUN_PAYLOADS.len())]
            )),
            1 => out.push_str(&format!("EXPOSE {}\n", rng.gen_range(1..9999))),
            2 => out.push_str(&format!(
                "ENV K{}=v{}\n",
                rng.gen_range(0..9),
                rng.gen_range(0..9)
            )),
            3 => out.push_str("COPY src /dst\n"),
            _ => out.push_str("WORKDIR /app\n"),
        }
    }
    if rng.gen_bool(0.5) {
        out.push_str("CMD [\"start\"]\n");
    }
    out
}

/// Synthetic ingestion records: a few distinct files, deliberate
/// duplicates, and sometimes an invalid file.
pub fn gen_corpus_records(rng: &mut ChaCha8Rng) -> Vec<CorpusRecord> {
    let mut records = Vec::new();
    let n = rng.gen_range(1..=6);
    let mut contents: Vec<Vec<u8>> = Vec::new();
    for i in 0..n {
        let content: Vec<u8> = if !contents.is_empty() && rng.gen_bool(0.3) {
            contents[rng.gen_range(0..contents.len())].clone() // duplicate
        } else if rng.gen_bool(0.15) {
            format!("BOGUS{} directive\n", rng.gen_range(0..9)).into_bytes()
        } else {
            gen_dockerfile(rng).into_bytes()
        };
        contents.push(content.clone());
        records.push(CorpusRecord {
            file_sha: FileSha::of_bytes(&content),
            source_path: format!("dir{}/app{}/Dockerfile", rng.gen_range(0..4), i),
            tag: if rng.gen_bool(0.3) {
                Tag::Gold
            } else {
                Tag::Corpus
            },
            bytes: content,
            ingest_time: "1970-01-01T00:00:00Z".to_string(),
        });
    }
    records
}

// ---------------------------------------------------------------------
// Brute-force rule oracle
// ---------------------------------------------------------------------

fn proper_descendants(node: &AstNode) -> Vec<&AstNode> {
    let mut out = Vec::new();
    fn collect<'a>(node: &'a AstNode, out: &mut Vec<&'a AstNode>) {
        for child in node.children() {
            out.push(child);
            collect(child, out);
        }
    }
    collect(node, &mut out);
    out
}

fn bf_self_matches(p: &TreePattern, node: &AstNode) -> bool {
    node.node_type() == p.node_type
        && p.value.as_deref().is_none_or(|v| node.value() == Some(v))
        && p.abs
            .as_deref()
            .is_none_or(|tag| node.children().iter().any(|c| c.node_type() == tag))
}

/// Naive embedding search: enumerates every assignment of child patterns
/// to descendants, recomputing matches without memoization.
pub fn bf_matches(p: &TreePattern, node: &AstNode) -> bool {
    if !bf_self_matches(p, node) {
        return false;
    }
    let descendants = proper_descendants(node);
    fn assign(children: &[TreePattern], descendants: &[&AstNode]) -> bool {
        match children.split_first() {
            None => true,
            Some((first, rest)) => descendants
                .iter()
                .any(|d| bf_matches(first, d) && assign(rest, descendants)),
        }
    }
    assign(&p.children, &descendants)
}

/// Oracle counterpart of `rules::check_document`, written as a direct
/// recursive search over every sub-tree embedding.
pub fn brute_force_check(doc: &DocumentRoot, rules: &[TreeRule]) -> Vec<Violation> {
    let mut violations = Vec::new();
    fn subtree_nodes(node: &AstNode) -> Vec<&AstNode> {
        let mut all = vec![node];
        all.extend(proper_descendants(node));
        all
    }
    fn walk(node: &AstNode, path: &mut Vec<usize>, rules: &[TreeRule], out: &mut Vec<Violation>) {
        for rule in rules {
            if bf_matches(&rule.antecedent, node)
                && !subtree_nodes(node)
                    .iter()
                    .any(|n| bf_matches(&rule.consequent, n))
            {
                out.push(Violation {
                    rule_id: rule.id.clone(),
                    path: path.clone(),
                });
            }
        }
        for (i, child) in node.children().iter().enumerate() {
            path.push(i);
            walk(child, path, rules, out);
            path.pop();
        }
    }
    walk(doc.root(), &mut Vec::new(), rules, &mut violations);
    violations.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.rule_id.cmp(&b.rule_id)));
    violations
}

/// Random rules over the generator vocabulary, including value and abs
/// constraints and nested children.
pub fn gen_rules(rng: &mut ChaCha8Rng, count: usize) -> Vec<TreeRule> {
    fn gen_pattern(rng: &mut ChaCha8Rng, depth: usize) -> TreePattern {
        let node_type = TYPE_POOL[rng.gen_range(0..TYPE_POOL.len())].to_string();
        let value = if rng.gen_bool(0.25) {
            Some(VALUE_POOL[rng.gen_range(0..VALUE_POOL.len())].to_string())
        } else {
            None
        };
        let abs = if rng.gen_bool(0.1) {
            Some(["ABS-NUMBER", "ABS-PROBABLY-URL"][rng.gen_range(0..2)].to_string())
        } else {
            None
        };
        let mut children = Vec::new();
        if depth < 2 {
            for _ in 0..rng.gen_range(0..=2) {
                if rng.gen_bool(0.5) {
                    children.push(gen_pattern(rng, depth + 1));
                }
            }
        }
        TreePattern {
            node_type,
            value,
            abs,
            children,
        }
    }
    (0..count)
        .map(|i| TreeRule {
            id: format!("generated-{i}"),
            severity: dockast_core::rules::Severity::Warning,
            message: "generated".to_string(),
            antecedent: gen_pattern(rng, 0),
            consequent: gen_pattern(rng, 1),
        })
        .collect()
}

// ---------------------------------------------------------------------
// Independent counters used as oracles
// ---------------------------------------------------------------------

/// Line-oriented instruction counter: joins `\` continuations, skips
/// comments and blank lines. Independent of the Phase-I parser.
pub fn count_instructions(source: &str) -> usize {
    let mut count = 0;
    let mut continuing = false;
    for line in source.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !continuing {
            count += 1;
        }
        continuing = trimmed.ends_with('\\');
    }
    count
}

/// Quote-aware whitespace tokenizer, independent of the shell lexer.
pub fn shell_token_count(command: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    let mut chars = command.chars();
    while let Some(c) = chars.next() {
        match c {
            ' ' | '\t' => in_word = false,
            '\'' => {
                if !in_word {
                    count += 1;
                    in_word = true;
                }
                for q in chars.by_ref() {
                    if q == '\'' {
                        break;
                    }
                }
            }
            '"' => {
                if !in_word {
                    count += 1;
                    in_word = true;
                }
                while let Some(q) = chars.next() {
                    match q {
                        '"' => break,
                        '\\' => {
                            chars.next();
                        }
                        _ => {}
                    }
                }
            }
            _ => {
                if !in_word {
                    count += 1;
                    in_word = true;
                }
            }
        }
    }
    count
}
