//! Ingestion, deduplication, metadata, and the pipeline orchestrator.
//!
//! The pipeline produces one artifact per representation, each split into
//! a gold and a corpus stream. Artifacts are assembled fully in memory
//! (documents are sorted by sha before emission), so equal inputs produce
//! byte-identical outputs regardless of ingestion order or parallelism.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::abstraction::{abstract_document, AbstractionTable};
use crate::ast::{AstNode, DocumentRoot, FileSha, Rep};
use crate::codec::serialize_jsonl;
use crate::docker::parse_dockerfile;
use crate::par::{map_vec, Parallelism};
use crate::schema::{enrich, SchemaSet};
use crate::shell::expand_run_nodes;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid manifest line {line}: {message}")]
    Manifest { line: u64, message: String },
}

/// Stream assignment, fixed at ingestion and never mutated downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Gold,
    Corpus,
}

impl Tag {
    pub fn stream_name(self) -> &'static str {
        match self {
            Tag::Gold => "gold",
            Tag::Corpus => "corpus",
        }
    }
}

/// One ingested Dockerfile: raw bytes plus identity and provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub file_sha: FileSha,
    /// Path relative to the ingestion root, `/`-separated.
    pub source_path: String,
    pub tag: Tag,
    pub bytes: Vec<u8>,
    /// RFC 3339 UTC timestamp. Derived from the file's mtime so reruns
    /// over unchanged inputs stay byte-identical.
    pub ingest_time: String,
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub records: Vec<CorpusRecord>,
    /// Unreadable files, skipped with their error text.
    pub skipped: Vec<(PathBuf, String)>,
}

fn rfc3339_utc(secs: i64) -> String {
    chrono::DateTime::<chrono::Utc>::from_timestamp(secs, 0)
        .unwrap_or_default()
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

/// Walks `dir` and ingests every regular file whose name contains
/// `dockerfile` case-insensitively. `is_gold` decides the stream from the
/// relative path. `epoch_override` pins every ingest_time (useful for
/// reproducible archives); otherwise the file mtime is used.
pub fn ingest(
    dir: &Path,
    is_gold: impl Fn(&Path) -> bool,
    epoch_override: Option<i64>,
) -> Result<IngestOutcome, CorpusError> {
    let mut out = IngestOutcome::default();
    let walker = walkdir::WalkDir::new(dir).sort_by_file_name();
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let path = e.path().map(Path::to_path_buf).unwrap_or_default();
                out.skipped.push((path, e.to_string()));
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().to_ascii_lowercase();
        if !name.contains("dockerfile") {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
        let bytes = match std::fs::read(entry.path()) {
            Ok(b) => b,
            Err(e) => {
                out.skipped
                    .push((entry.path().to_path_buf(), e.to_string()));
                continue;
            }
        };
        let ingest_secs = match epoch_override {
            Some(secs) => secs,
            None => entry
                .metadata()
                .ok()
                .and_then(|m| m.modified().ok())
                .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0),
        };
        let source_path = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        out.records.push(CorpusRecord {
            file_sha: FileSha::of_bytes(&bytes),
            source_path,
            tag: if is_gold(rel) { Tag::Gold } else { Tag::Corpus },
            bytes,
            ingest_time: rfc3339_utc(ingest_secs),
        });
    }
    out.records
        .sort_by(|a, b| a.source_path.cmp(&b.source_path));
    Ok(out)
}

/// One record per distinct sha; the representative is the file with the
/// lexicographically smallest source path. Output is sorted by sha.
pub fn deduplicate(records: Vec<CorpusRecord>) -> Vec<CorpusRecord> {
    let mut by_sha: BTreeMap<FileSha, CorpusRecord> = BTreeMap::new();
    for record in records {
        match by_sha.get(&record.file_sha) {
            Some(kept) if kept.source_path <= record.source_path => {}
            _ => {
                by_sha.insert(record.file_sha.clone(), record);
            }
        }
    }
    by_sha.into_values().collect()
}

// ---------------------------------------------------------------------
// Metadata
// ---------------------------------------------------------------------

/// Extra metadata supplied alongside the corpus, keyed by sha or source
/// path. Fields are passed through verbatim, never synthesized.
#[derive(Debug, Default, Clone)]
pub struct Manifest {
    by_sha: BTreeMap<String, BTreeMap<String, Value>>,
    by_path: BTreeMap<String, BTreeMap<String, Value>>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut manifest = Manifest::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx as u64 + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::Manifest {
                line: line_no,
                message: e.to_string(),
            })?;
            let Value::Object(map) = value else {
                return Err(CorpusError::Manifest {
                    line: line_no,
                    message: "expected a JSON object".to_string(),
                });
            };
            let mut fields: BTreeMap<String, Value> = map.into_iter().collect();
            let sha = fields.remove("file_sha");
            let path = fields.remove("source_path");
            match (&sha, &path) {
                (Some(Value::String(s)), _) => {
                    manifest.by_sha.insert(s.clone(), fields);
                }
                (None, Some(Value::String(p))) => {
                    manifest.by_path.insert(p.clone(), fields);
                }
                _ => {
                    return Err(CorpusError::Manifest {
                        line: line_no,
                        message: "each entry needs a string `file_sha` or `source_path`"
                            .to_string(),
                    })
                }
            }
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn lookup(&self, record: &CorpusRecord) -> Option<&BTreeMap<String, Value>> {
        self.by_sha
            .get(record.file_sha.as_str())
            .or_else(|| self.by_path.get(&record.source_path))
    }
}

/// One metadata line per retained (deduplicated) file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataRecord {
    pub file_sha: String,
    pub source_path: String,
    pub ingest_time: String,
    pub extras: BTreeMap<String, Value>,
}

impl Serialize for MetadataRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("file_sha", &self.file_sha)?;
        map.serialize_entry("source_path", &self.source_path)?;
        map.serialize_entry("ingest_time", &self.ingest_time)?;
        for (k, v) in &self.extras {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

// ---------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub file_sha: String,
    pub source_path: String,
    pub reason: String,
}

/// A RUN whose embedded shell could not be parsed; the file flows on
/// with its raw literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShellIssue {
    pub file_sha: String,
    pub source_path: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamCounts {
    pub ingested: usize,
    pub unique: usize,
    pub parsed: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineStats {
    pub gold: StreamCounts,
    pub corpus: StreamCounts,
}

#[derive(Debug, Default)]
pub struct PipelineOutput {
    /// Relative artifact path -> file bytes.
    pub artifacts: BTreeMap<String, Vec<u8>>,
    pub rejects: Vec<Reject>,
    pub shell_issues: Vec<ShellIssue>,
    pub stats: PipelineStats,
}

pub struct PipelineConfig<'a> {
    pub schemas: &'a SchemaSet,
    pub table: &'a AbstractionTable,
    pub manifest: Option<&'a Manifest>,
    pub parallelism: Parallelism,
}

impl Default for PipelineConfig<'_> {
    fn default() -> Self {
        PipelineConfig {
            schemas: SchemaSet::bundled(),
            table: AbstractionTable::bundled(),
            manifest: None,
            parallelism: Parallelism::default(),
        }
    }
}

/// Deterministic plain-tar encoding: fixed mode/uid/gid/mtime, members in
/// the order given.
fn tar_bytes(members: &[(String, &[u8])]) -> Vec<u8> {
    let mut builder = tar::Builder::new(Vec::new());
    for (name, data) in members {
        let mut header = tar::Header::new_ustar();
        header.set_size(data.len() as u64);
        header.set_mode(0o644);
        header.set_uid(0);
        header.set_gid(0);
        header.set_mtime(0);
        header.set_cksum();
        builder
            .append_data(&mut header, name, *data)
            .expect("in-memory tar write cannot fail");
    }
    builder
        .into_inner()
        .expect("in-memory tar finish cannot fail")
}

fn jsonl_bytes(lines: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut out = Vec::new();
    for line in lines {
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    out
}

/// Per-file result of the Phase I..III + abstraction chain.
struct FileOutcome {
    record: CorpusRecord,
    result: Result<PhaseLines, String>,
    shell_errors: Vec<String>,
}

struct PhaseLines {
    rep2: String,
    rep3: String,
    rep4: String,
    rep5: String,
}

fn process_record(
    record: CorpusRecord,
    schemas: &SchemaSet,
    table: &AbstractionTable,
) -> FileOutcome {
    let source = match std::str::from_utf8(&record.bytes) {
        Ok(s) => s,
        Err(_) => {
            return FileOutcome {
                record,
                result: Err("invalid-utf8".to_string()),
                shell_errors: Vec::new(),
            }
        }
    };
    let parsed = match parse_dockerfile(source) {
        Ok(p) => p,
        Err(e) => {
            return FileOutcome {
                record,
                result: Err(e.reason()),
                shell_errors: Vec::new(),
            }
        }
    };
    if let Err(report) = crate::docker::validate_known_directives(&parsed.root) {
        return FileOutcome {
            record,
            result: Err(format!(
                "unknown-directive-nodes:{}",
                report.offending.join(",")
            )),
            shell_errors: Vec::new(),
        };
    }
    let rep2 = DocumentRoot::new(record.file_sha.clone(), parsed.root)
        .expect("parser emits DOCKER-FILE roots")
        .with_rep(Rep::Phase1);
    let expanded = expand_run_nodes(&rep2);
    let rep3 = expanded.doc.with_rep(Rep::Phase2);
    let rep4 = enrich(&rep3, schemas).doc.with_rep(Rep::Phase3);
    let rep5 = abstract_document(&rep4, table).with_rep(Rep::Abstracted);
    FileOutcome {
        record,
        result: Ok(PhaseLines {
            rep2: serialize_jsonl(&rep2),
            rep3: serialize_jsonl(&rep3),
            rep4: serialize_jsonl(&rep4),
            rep5: serialize_jsonl(&rep5),
        }),
        shell_errors: expanded.flags.iter().map(|f| f.error.to_string()).collect(),
    }
}

/// Runs the whole chain over ingested records and assembles every
/// artifact in memory. Records may still contain duplicates: the raw set
/// feeds the rep-0 archives, the deduplicated set everything else.
/// Per-file failures are isolated into the rejects report; the pipeline
/// always completes.
pub fn run_pipeline(records: Vec<CorpusRecord>, config: &PipelineConfig) -> PipelineOutput {
    let mut output = PipelineOutput::default();

    let mut raw: Vec<&CorpusRecord> = records.iter().collect();
    raw.sort_by(|a, b| a.source_path.cmp(&b.source_path));
    for tag in [Tag::Gold, Tag::Corpus] {
        let members: Vec<(String, &[u8])> = raw
            .iter()
            .filter(|r| r.tag == tag)
            .enumerate()
            .map(|(id, r)| (format!("{id}.Dockerfile"), r.bytes.as_slice()))
            .collect();
        let counts = match tag {
            Tag::Gold => &mut output.stats.gold,
            Tag::Corpus => &mut output.stats.corpus,
        };
        counts.ingested = members.len();
        output.artifacts.insert(
            format!("0a-original-dockerfile-sources/{}.tar", tag.stream_name()),
            tar_bytes(&members),
        );
    }

    let unique = deduplicate(records);
    for tag in [Tag::Gold, Tag::Corpus] {
        let members: Vec<(String, &[u8])> = unique
            .iter()
            .filter(|r| r.tag == tag)
            .map(|r| (format!("{}.Dockerfile", r.file_sha), r.bytes.as_slice()))
            .collect();
        let counts = match tag {
            Tag::Gold => &mut output.stats.gold,
            Tag::Corpus => &mut output.stats.corpus,
        };
        counts.unique = members.len();
        output.artifacts.insert(
            format!(
                "0b-deduplicated-dockerfile-sources/{}.tar",
                tag.stream_name()
            ),
            tar_bytes(&members),
        );
    }

    // Metadata covers every retained file, parsed or not.
    for tag in [Tag::Gold, Tag::Corpus] {
        let lines = unique.iter().filter(|r| r.tag == tag).map(|r| {
            let record = MetadataRecord {
                file_sha: r.file_sha.to_string(),
                source_path: r.source_path.clone(),
                ingest_time: r.ingest_time.clone(),
                extras: config
                    .manifest
                    .and_then(|m| m.lookup(r))
                    .cloned()
                    .unwrap_or_default(),
            };
            serde_json::to_string(&record).expect("metadata serialization cannot fail")
        });
        output.artifacts.insert(
            format!("5-dockerfile-metadata/{}.jsonl", tag.stream_name()),
            jsonl_bytes(lines),
        );
    }

    let outcomes = map_vec(config.parallelism, unique, |record| {
        process_record(record, config.schemas, config.table)
    });

    let mut streams: BTreeMap<(&str, Tag), Vec<String>> = BTreeMap::new();
    for tag in [Tag::Gold, Tag::Corpus] {
        for rep in ["rep2", "rep3", "rep4", "rep5"] {
            streams.insert((rep, tag), Vec::new());
        }
    }
    for outcome in &outcomes {
        let record = &outcome.record;
        let counts = match record.tag {
            Tag::Gold => &mut output.stats.gold,
            Tag::Corpus => &mut output.stats.corpus,
        };
        match &outcome.result {
            Ok(lines) => {
                counts.parsed += 1;
                streams
                    .get_mut(&("rep2", record.tag))
                    .unwrap()
                    .push(lines.rep2.clone());
                streams
                    .get_mut(&("rep3", record.tag))
                    .unwrap()
                    .push(lines.rep3.clone());
                streams
                    .get_mut(&("rep4", record.tag))
                    .unwrap()
                    .push(lines.rep4.clone());
                streams
                    .get_mut(&("rep5", record.tag))
                    .unwrap()
                    .push(lines.rep5.clone());
                for error in &outcome.shell_errors {
                    output.shell_issues.push(ShellIssue {
                        file_sha: record.file_sha.to_string(),
                        source_path: record.source_path.clone(),
                        error: error.clone(),
                    });
                }
            }
            Err(reason) => {
                counts.rejected += 1;
                output.rejects.push(Reject {
                    file_sha: record.file_sha.to_string(),
                    source_path: record.source_path.clone(),
                    reason: reason.clone(),
                });
            }
        }
    }

    let dirs = [
        ("rep2", "1-phase-1-asts"),
        ("rep3", "2-phase-2-asts"),
        ("rep4", "3-phase-3-asts"),
        ("rep5", "4-abstracted-asts"),
    ];
    for (rep, dir) in dirs {
        for tag in [Tag::Gold, Tag::Corpus] {
            let lines = streams.remove(&(rep, tag)).unwrap();
            output.artifacts.insert(
                format!("{dir}/{}.jsonl", tag.stream_name()),
                jsonl_bytes(lines),
            );
        }
    }

    output.rejects.sort_by(|a, b| a.file_sha.cmp(&b.file_sha));
    output.artifacts.insert(
        "rejects.jsonl".to_string(),
        jsonl_bytes(
            output
                .rejects
                .iter()
                .map(|r| serde_json::to_string(r).expect("reject serialization cannot fail")),
        ),
    );
    output.shell_issues.sort_by(|a, b| {
        a.file_sha
            .cmp(&b.file_sha)
            .then_with(|| a.error.cmp(&b.error))
    });

    debug_assert_eq!(
        output.artifacts["1-phase-1-asts/gold.jsonl"]
            .iter()
            .filter(|b| **b == b'\n')
            .count(),
        output.stats.gold.parsed
    );
    output
}

/// Writes an in-memory artifact map under `dir`.
pub fn write_artifacts(output: &PipelineOutput, dir: &Path) -> Result<(), CorpusError> {
    for (rel, bytes) in &output.artifacts {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| CorpusError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(&path, bytes).map_err(|source| CorpusError::Io { path, source })?;
    }
    Ok(())
}

/// Runs Phase I over one record: parse, then the known-directive check.
pub fn phase1_document(record: &CorpusRecord) -> Result<DocumentRoot, String> {
    let source = std::str::from_utf8(&record.bytes).map_err(|_| "invalid-utf8".to_string())?;
    let parsed = parse_dockerfile(source).map_err(|e| e.reason())?;
    crate::docker::validate_known_directives(&parsed.root)
        .map_err(|r| format!("unknown-directive-nodes:{}", r.offending.join(",")))?;
    Ok(DocumentRoot::new(record.file_sha.clone(), parsed.root)
        .expect("parser emits DOCKER-FILE roots")
        .with_rep(Rep::Phase1))
}

/// Collects every MAYBE-SEMANTIC-COMMAND word sequence in a document;
/// used by throughput checks and the stats subcommand.
pub fn command_nodes(doc: &DocumentRoot) -> Vec<AstNode> {
    doc.root()
        .find_subtrees(|n| n.node_type() == "MAYBE-SEMANTIC-COMMAND")
        .into_iter()
        .map(|(_, n)| n.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, rel: &str, content: &str) {
        let path = dir.join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, content).unwrap();
    }

    #[test]
    fn ingest_filters_by_name_and_assigns_tags() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "Dockerfile", "FROM a\n");
        write(tmp.path(), "api.dockerfile", "FROM b\n");
        write(tmp.path(), "README.md", "not docker\n");
        let out = ingest(tmp.path(), |_| false, Some(0)).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.skipped.is_empty());
        assert_eq!(out.records[0].source_path, "Dockerfile");
        assert_eq!(out.records[0].tag, Tag::Corpus);
        assert_eq!(out.records[0].ingest_time, "1970-01-01T00:00:00Z");
    }

    #[test]
    fn ingest_empty_dir() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(ingest(tmp.path(), |_| false, None)
            .unwrap()
            .records
            .is_empty());
    }

    #[test]
    fn ingest_traverses_nested_directories() {
        let tmp = tempfile::tempdir().unwrap();
        let rels = [
            "Dockerfile",
            "a/Dockerfile",
            "a/b/Dockerfile",
            "a/b/c/Dockerfile",
            "x/service.dockerfile",
            "x/y/Dockerfile.alpine",
            "gold/app/Dockerfile",
        ];
        for (i, rel) in rels.iter().enumerate() {
            write(tmp.path(), rel, &format!("FROM base{i}\n"));
        }
        let out = ingest(
            tmp.path(),
            |p| p.components().any(|c| c.as_os_str() == "gold"),
            Some(0),
        )
        .unwrap();
        assert_eq!(out.records.len(), 7);
        assert_eq!(out.records.iter().filter(|r| r.tag == Tag::Gold).count(), 1);
    }

    #[test]
    fn dedup_keeps_one_per_sha_with_smallest_path() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "b/Dockerfile", "FROM same\n");
        write(tmp.path(), "a/Dockerfile", "FROM same\n");
        write(tmp.path(), "c/Dockerfile", "FROM same\n\n"); // one extra byte
        let out = ingest(tmp.path(), |_| false, Some(0)).unwrap();
        let unique = deduplicate(out.records);
        assert_eq!(unique.len(), 2);
        let same = unique.iter().find(|r| r.bytes == b"FROM same\n").unwrap();
        assert_eq!(same.source_path, "a/Dockerfile");
        // Sorted by sha and idempotent.
        let shas: Vec<_> = unique.iter().map(|r| r.file_sha.clone()).collect();
        let mut sorted = shas.clone();
        sorted.sort();
        assert_eq!(shas, sorted);
        assert_eq!(deduplicate(unique.clone()), unique);
    }

    #[test]
    fn sha_matches_frozen_external_digest() {
        // sha256 of the four-line busybox file, precomputed with an
        // independent implementation (python hashlib).
        let content = "FROM busybox\nEXPOSE 80/tcp\nCOPY httpserver .\nCMD [\"./httpserver\"]\n";
        assert_eq!(
            FileSha::of_bytes(content.as_bytes()).as_str(),
            "ce4249967fc2fbfcc613c3cbd07ee10c545bf89ea73bfbd9dc5988efa0562c6d"
        );
    }

    #[test]
    fn pipeline_on_mixed_corpus() {
        let tmp = tempfile::tempdir().unwrap();
        write(
            tmp.path(),
            "a/Dockerfile",
            "FROM a\nRUN npm install --production\n",
        );
        write(tmp.path(), "b/Dockerfile", "FROM b\nRUN apt-get update\n");
        write(
            tmp.path(),
            "c/Dockerfile",
            "FROM c\nRUN curl https://example.com/x\n",
        );
        write(tmp.path(), "d/Dockerfile", "FROM d\n");
        write(tmp.path(), "e/Dockerfile", "FROM e\nCMD [\"run\"]\n");
        write(tmp.path(), "f/Dockerfile", "FRMO broken\n");
        let out = ingest(tmp.path(), |_| false, Some(0)).unwrap();
        let result = run_pipeline(out.records, &PipelineConfig::default());

        let rep2 = &result.artifacts["1-phase-1-asts/corpus.jsonl"];
        assert_eq!(rep2.iter().filter(|b| **b == b'\n').count(), 5);
        assert_eq!(result.rejects.len(), 1);
        assert_eq!(result.rejects[0].reason, "unknown-directive:FRMO");
        assert_eq!(result.stats.corpus.ingested, 6);
        assert_eq!(result.stats.corpus.unique, 6);
        assert_eq!(result.stats.corpus.parsed, 5);
        assert_eq!(result.stats.corpus.rejected, 1);
        // Empty gold stream still has (empty) artifacts.
        assert_eq!(result.artifacts["1-phase-1-asts/gold.jsonl"].len(), 0);

        // Monotone sha chain: rep2..rep5 carry identical sha sets.
        let shas = |name: &str| -> Vec<String> {
            String::from_utf8(result.artifacts[name].clone())
                .unwrap()
                .lines()
                .map(|l| {
                    crate::codec::deserialize_jsonl(l)
                        .unwrap()
                        .file_sha()
                        .to_string()
                })
                .collect()
        };
        let r2 = shas("1-phase-1-asts/corpus.jsonl");
        assert_eq!(r2, shas("2-phase-2-asts/corpus.jsonl"));
        assert_eq!(r2, shas("3-phase-3-asts/corpus.jsonl"));
        assert_eq!(r2, shas("4-abstracted-asts/corpus.jsonl"));
        let mut sorted = r2.clone();
        sorted.sort();
        asserts_sorted_unique(&sorted, &r2);
    }

    fn asserts_sorted_unique(sorted: &[String], actual: &[String]) {
        assert_eq!(sorted, actual, "lines must be sha-ordered");
        let mut dedup = sorted.to_vec();
        dedup.dedup();
        assert_eq!(dedup.len(), sorted.len(), "shas must be unique");
    }

    #[test]
    fn pipeline_is_permutation_invariant() {
        let tmp = tempfile::tempdir().unwrap();
        write(
            tmp.path(),
            "z/Dockerfile",
            "FROM z\nRUN apk add --no-cache git\n",
        );
        write(tmp.path(), "m/Dockerfile", "FROM m\n");
        write(tmp.path(), "a/Dockerfile", "FROM a\nRUN npm install\n");
        let mut records = ingest(tmp.path(), |_| false, Some(0)).unwrap().records;
        let forward = run_pipeline(records.clone(), &PipelineConfig::default());
        records.reverse();
        let reversed = run_pipeline(records, &PipelineConfig::default());
        assert_eq!(forward.artifacts, reversed.artifacts);

        // Sequential and parallel runs agree byte for byte.
        let tmp2 = ingest(tmp.path(), |_| false, Some(0)).unwrap().records;
        let seq = run_pipeline(
            tmp2,
            &PipelineConfig {
                parallelism: Parallelism::Sequential,
                ..Default::default()
            },
        );
        assert_eq!(forward.artifacts, seq.artifacts);
    }

    #[test]
    fn metadata_passthrough_from_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "app/Dockerfile", "FROM a\n");
        let records = ingest(tmp.path(), |_| false, Some(42)).unwrap().records;
        let sha = records[0].file_sha.to_string();
        let manifest = Manifest::parse(&format!(
            r#"{{"file_sha":"{sha}","repo_full_name":"example/app","repo_branch":"master"}}"#
        ))
        .unwrap();
        let config = PipelineConfig {
            manifest: Some(&manifest),
            ..Default::default()
        };
        let out = run_pipeline(records, &config);
        let metadata =
            String::from_utf8(out.artifacts["5-dockerfile-metadata/corpus.jsonl"].clone()).unwrap();
        assert_eq!(
            metadata.trim_end(),
            format!(
                r#"{{"file_sha":"{sha}","source_path":"app/Dockerfile","ingest_time":"1970-01-01T00:00:42Z","repo_branch":"master","repo_full_name":"example/app"}}"#
            )
        );
    }

    #[test]
    fn manifest_rejects_entries_without_keys() {
        assert!(Manifest::parse(r#"{"repo":"x"}"#).is_err());
        assert!(Manifest::parse("not json").is_err());
        assert!(Manifest::parse(r#"{"source_path":"a","stars":3}"#).is_ok());
    }

    #[test]
    fn tar_encoding_is_deterministic() {
        let members = vec![("0.Dockerfile".to_string(), b"FROM a\n".as_slice())];
        assert_eq!(tar_bytes(&members), tar_bytes(&members));
    }

    #[test]
    fn write_artifacts_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "in/Dockerfile", "FROM a\n");
        let records = ingest(&tmp.path().join("in"), |_| false, Some(0))
            .unwrap()
            .records;
        let out = run_pipeline(records, &PipelineConfig::default());
        let dest = tmp.path().join("out");
        write_artifacts(&out, &dest).unwrap();
        for (rel, bytes) in &out.artifacts {
            assert_eq!(&fs::read(dest.join(rel)).unwrap(), bytes, "{rel}");
        }
    }
}
