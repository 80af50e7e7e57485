//! Golden-tree equivalence: the committed representation shapes must be
//! reproduced by the pipeline from the committed source inputs. `"..."`
//! entries in a fixture's children stand for elided runs and match any
//! sequence; where a fixture spells types, values, and child order, the
//! comparison is exact.

mod common;

use common::{fixture_path, golden_matches, load_golden};
use dockast_core::abstraction::{abstract_document, AbstractionTable};
use dockast_core::ast::{DocumentRoot, FileSha};
use dockast_core::codec::deserialize_jsonl;
use dockast_core::docker::parse_dockerfile;
use dockast_core::schema::{enrich, SchemaSet};
use dockast_core::shell::expand_run_nodes;

fn source_doc(name: &str) -> DocumentRoot {
    let path = fixture_path("sources").join(name);
    let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    let parsed = parse_dockerfile(std::str::from_utf8(&bytes).unwrap()).unwrap();
    DocumentRoot::new(FileSha::of_bytes(&bytes), parsed.root).unwrap()
}

#[test]
fn rep2_golden_matches_parsed_solaris_source() {
    let golden = load_golden(&fixture_path("rep2.json"));
    let doc = source_doc("solaris.Dockerfile");
    assert!(
        golden_matches(&golden, doc.root()),
        "phase-1 tree diverges from golden: {}",
        doc.root()
    );
}

#[test]
fn rep3_golden_matches_shell_expanded_npm_source() {
    let golden = load_golden(&fixture_path("rep3.json"));
    let doc = expand_run_nodes(&source_doc("npm-app.Dockerfile")).doc;
    assert!(
        golden_matches(&golden, doc.root()),
        "phase-2 tree diverges from golden: {}",
        doc.root()
    );
}

#[test]
fn rep4_golden_matches_enriched_npm_source() {
    let golden = load_golden(&fixture_path("rep4.json"));
    let phase2 = expand_run_nodes(&source_doc("npm-app.Dockerfile")).doc;
    let doc = enrich(&phase2, SchemaSet::bundled()).doc;
    assert!(
        golden_matches(&golden, doc.root()),
        "phase-3 tree diverges from golden: {}",
        doc.root()
    );
}

#[test]
fn rep5_golden_matches_abstracted_urls_source() {
    let golden = load_golden(&fixture_path("rep5.json"));
    let phase2 = expand_run_nodes(&source_doc("urls.Dockerfile")).doc;
    let phase3 = enrich(&phase2, SchemaSet::bundled()).doc;
    let doc = abstract_document(&phase3, AbstractionTable::bundled());
    assert!(
        golden_matches(&golden, doc.root()),
        "abstracted tree diverges from golden: {}",
        doc.root()
    );
}

#[test]
fn replacing_the_command_subtree_yields_the_phase3_golden() {
    // The enrichment step is a plain sub-tree substitution: swapping the
    // MAYBE-SEMANTIC-COMMAND for its SC tree by hand produces the same
    // golden shape.
    let phase2 = expand_run_nodes(&source_doc("npm-app.Dockerfile")).doc;
    let hits = phase2
        .root()
        .find_subtrees(|n| n.node_type() == "MAYBE-SEMANTIC-COMMAND");
    assert_eq!(hits.len(), 1);
    let path = hits[0].0.clone();
    let replacement = dockast_core::ast::AstNode::branch(
        "SC-NPM-INSTALL",
        vec![dockast_core::ast::AstNode::bare("SC-NPM-F-PRODUCTION")],
    );
    let rewritten = phase2.root().replace_subtree(&path, replacement).unwrap();
    let golden = load_golden(&fixture_path("rep4.json"));
    assert!(golden_matches(&golden, &rewritten), "{rewritten}");
}

#[test]
fn stats_ranking_matches_text_level_count() {
    // Independent oracle: count the first token of every connector-split
    // RUN segment across the unique bundled sources.
    use std::collections::BTreeMap;
    let root = common::testdata_path("mini-corpus");
    let mut contents: Vec<String> = Vec::new();
    for entry in walkdir(&root) {
        let text = std::fs::read_to_string(&entry).unwrap();
        if !contents.contains(&text) {
            contents.push(text);
        }
    }
    let mut expected: BTreeMap<String, u64> = BTreeMap::new();
    for text in &contents {
        if text.lines().any(|l| l.starts_with("FRMO")) {
            continue; // rejected file never reaches phase 2
        }
        for line in text.lines() {
            let Some(payload) = line.strip_prefix("RUN ") else {
                continue;
            };
            for segment in payload.split([';', '|']).flat_map(|s| s.split("&&")) {
                if let Some(first) = segment.split_whitespace().next() {
                    *expected.entry(first.to_string()).or_insert(0) += 1;
                }
            }
        }
    }
    let top_expected = expected
        .iter()
        .max_by_key(|(name, count)| (**count, std::cmp::Reverse(name.as_str())))
        .unwrap();

    let mut docs = Vec::new();
    for entry in walkdir(&root) {
        let bytes = std::fs::read(&entry).unwrap();
        let Ok(parsed) = parse_dockerfile(std::str::from_utf8(&bytes).unwrap()) else {
            continue;
        };
        let doc = DocumentRoot::new(FileSha::of_bytes(&bytes), parsed.root).unwrap();
        docs.push(expand_run_nodes(&doc).doc);
    }
    // Mirror the pipeline's dedup before ranking.
    docs.sort_by(|a, b| a.file_sha().cmp(b.file_sha()));
    docs.dedup_by(|a, b| a.file_sha() == b.file_sha());
    let ranking = dockast_core::schema::rank_commands(&docs, 3);
    assert_eq!(ranking[0].0, *top_expected.0);
    assert_eq!(ranking[0].1, *top_expected.1);
}

fn walkdir(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    fn go(dir: &std::path::Path, out: &mut Vec<std::path::PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                go(&path, out);
            } else {
                out.push(path);
            }
        }
    }
    go(root, &mut out);
    out.sort();
    out
}

#[test]
fn golden_matcher_rejects_structural_divergence() {
    let golden = load_golden(&fixture_path("rep2.json"));
    // Same source but with the final CMD argument changed.
    let source = "FROM solaris\nEXPOSE 80/tcp\nCMD [\"./other\"]\n";
    let parsed = parse_dockerfile(source).unwrap();
    assert!(!golden_matches(&golden, &parsed.root));
    // And with the CMD missing entirely.
    let parsed = parse_dockerfile("FROM solaris\nEXPOSE 80/tcp\n").unwrap();
    assert!(!golden_matches(&golden, &parsed.root));
}

#[test]
fn rep2_style_line_deserializes_to_expected_tree() {
    // The phase-1 wire shape, re-flowed to one line with a full sha.
    let line = format!(
        concat!(
            r#"{{"type":"DOCKER-FILE","children":["#,
            r#"{{"type":"DOCKER-FROM","children":[{{"type":"DOCKER-IMAGE-NAME","value":"solaris","children":[]}}]}},"#,
            r#"{{"type":"DOCKER-CMD","children":[{{"type":"DOCKER-CMD-ARG","value":"./httpserver","children":[]}}]}}"#,
            r#"],"file_sha":"{}"}}"#
        ),
        "3d".repeat(32)
    );
    let doc = deserialize_jsonl(&line).unwrap();
    let from = &doc.root().children()[0];
    assert_eq!(from.node_type(), "DOCKER-FROM");
    assert_eq!(from.children()[0].node_type(), "DOCKER-IMAGE-NAME");
    assert_eq!(from.children()[0].value(), Some("solaris"));
}
