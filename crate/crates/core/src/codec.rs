//! Canonical JSONL codec for document trees.
//!
//! One document per line. Keys are emitted in a fixed order — `file_sha`,
//! `type`, `value` (only when present), `children`, then the `rep` stage
//! marker and any preserved extras — with no insignificant whitespace, so
//! equal documents always serialize to byte-equal lines. The decoder is
//! tolerant of key order and whitespace; unknown keys are rejected by
//! default and preserved in permissive mode.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::ser::{Serialize, SerializeMap, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::ast::{AstError, AstNode, DocumentRoot, FileSha, Rep};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: u64,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: expected a JSON object")]
    NotAnObject { line: u64 },
    #[error("line {line}: missing required key `{key}`")]
    MissingKey { line: u64, key: &'static str },
    #[error("line {line}: key `{key}` has the wrong type (expected {expected})")]
    WrongType {
        line: u64,
        key: &'static str,
        expected: &'static str,
    },
    #[error("line {line}: unknown key `{key}` (decoder is strict)")]
    UnknownKey { line: u64, key: String },
    #[error("line {line}: unknown representation marker {rep}")]
    UnknownRep { line: u64, rep: u64 },
    #[error("line {line}: {source}")]
    Ast {
        line: u64,
        #[source]
        source: AstError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Decoder behavior for keys outside the canonical schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Reject unknown keys. When false they are preserved on the node and
    /// re-emitted (sorted) on serialization.
    pub strict: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { strict: true }
    }
}

impl DecodeOptions {
    pub fn permissive() -> Self {
        DecodeOptions { strict: false }
    }
}

struct NodeFields<'a>(&'a AstNode);

impl Serialize for NodeFields<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let n = self.0;
        let mut extra = n.extras().len();
        if n.value().is_some() {
            extra += 1;
        }
        let mut map = serializer.serialize_map(Some(2 + extra))?;
        serialize_node_fields(&mut map, n)?;
        map.end()
    }
}

fn serialize_node_fields<M: SerializeMap>(map: &mut M, n: &AstNode) -> Result<(), M::Error> {
    map.serialize_entry("type", n.node_type())?;
    if let Some(v) = n.value() {
        map.serialize_entry("value", v)?;
    }
    map.serialize_entry("children", &Children(n.children()))?;
    for (k, v) in n.extras() {
        map.serialize_entry(k, v)?;
    }
    Ok(())
}

struct Children<'a>(&'a [AstNode]);

impl Serialize for Children<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(NodeFields))
    }
}

struct DocFields<'a>(&'a DocumentRoot);

impl Serialize for DocFields<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let d = self.0;
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("file_sha", d.file_sha().as_str())?;
        map.serialize_entry("type", d.root().node_type())?;
        if let Some(v) = d.root().value() {
            map.serialize_entry("value", v)?;
        }
        map.serialize_entry("children", &Children(d.root().children()))?;
        if let Some(rep) = d.rep() {
            map.serialize_entry("rep", &rep.number())?;
        }
        for (k, v) in d.root().extras() {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// Serializes one document to its canonical single-line form (no trailing
/// newline). Equal documents yield byte-equal lines.
pub fn serialize_jsonl(doc: &DocumentRoot) -> String {
    serde_json::to_string(&DocFields(doc)).expect("document serialization cannot fail")
}

/// Decodes one line with the default strict options.
pub fn deserialize_jsonl(line: &str) -> Result<DocumentRoot, DecodeError> {
    deserialize_jsonl_at(line, 1, DecodeOptions::default())
}

/// Decodes one line, attributing errors to `line_no`.
pub fn deserialize_jsonl_at(
    line: &str,
    line_no: u64,
    opts: DecodeOptions,
) -> Result<DocumentRoot, DecodeError> {
    let value: Value = serde_json::from_str(line).map_err(|source| DecodeError::Json {
        line: line_no,
        source,
    })?;
    let mut obj = match value {
        Value::Object(m) => m,
        _ => return Err(DecodeError::NotAnObject { line: line_no }),
    };

    let sha_raw = take_string(&mut obj, "file_sha", line_no)?.ok_or(DecodeError::MissingKey {
        line: line_no,
        key: "file_sha",
    })?;
    let file_sha = FileSha::new(sha_raw).map_err(|source| DecodeError::Ast {
        line: line_no,
        source,
    })?;

    let rep = match obj.remove("rep") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => {
            let raw = n.as_u64().ok_or(DecodeError::WrongType {
                line: line_no,
                key: "rep",
                expected: "integer 2..=5",
            })?;
            Some(Rep::from_number(raw).ok_or(DecodeError::UnknownRep {
                line: line_no,
                rep: raw,
            })?)
        }
        Some(_) => {
            return Err(DecodeError::WrongType {
                line: line_no,
                key: "rep",
                expected: "integer 2..=5",
            })
        }
    };

    let root = node_from_map(obj, line_no, opts)?;
    let mut doc = DocumentRoot::new(file_sha, root).map_err(|source| DecodeError::Ast {
        line: line_no,
        source,
    })?;
    if let Some(rep) = rep {
        doc = doc.with_rep(rep);
    }
    Ok(doc)
}

fn take_string(
    obj: &mut Map<String, Value>,
    key: &'static str,
    line: u64,
) -> Result<Option<String>, DecodeError> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(DecodeError::WrongType {
            line,
            key,
            expected: "string",
        }),
    }
}

fn node_from_map(
    mut obj: Map<String, Value>,
    line: u64,
    opts: DecodeOptions,
) -> Result<AstNode, DecodeError> {
    let node_type = take_string(&mut obj, "type", line)?
        .ok_or(DecodeError::MissingKey { line, key: "type" })?;
    let value = take_string(&mut obj, "value", line)?;
    let children = match obj.remove("children") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::Object(m) => out.push(node_from_map(m, line, opts)?),
                    _ => {
                        return Err(DecodeError::WrongType {
                            line,
                            key: "children",
                            expected: "array of objects",
                        })
                    }
                }
            }
            out
        }
        Some(_) => {
            return Err(DecodeError::WrongType {
                line,
                key: "children",
                expected: "array of objects",
            })
        }
    };

    let mut node = AstNode::new(node_type, value, children)
        .map_err(|source| DecodeError::Ast { line, source })?;
    if !obj.is_empty() {
        if opts.strict {
            let key = obj.keys().next().expect("nonempty").clone();
            return Err(DecodeError::UnknownKey { line, key });
        }
        node.set_extras(obj.into_iter().collect());
    }
    Ok(node)
}

/// Opens a possibly compressed file for reading; `.gz` and `.xz` suffixes
/// are decompressed transparently.
pub fn open_reader(path: &Path) -> io::Result<Box<dyn Read>> {
    let file = File::open(path)?;
    Ok(match extension(path) {
        Some("gz") => Box::new(flate2::read::GzDecoder::new(file)),
        Some("xz") => Box::new(xz2::read::XzDecoder::new(file)),
        _ => Box::new(file),
    })
}

/// Creates a file for writing; `.gz` and `.xz` suffixes select the
/// matching compressor, anything else is written plain.
pub fn create_writer(path: &Path) -> io::Result<Box<dyn Write>> {
    let file = File::create(path)?;
    Ok(match extension(path) {
        Some("gz") => Box::new(flate2::write::GzEncoder::new(
            file,
            flate2::Compression::default(),
        )),
        Some("xz") => Box::new(xz2::write::XzEncoder::new(file, 6)),
        _ => Box::new(BufWriter::new(file)),
    })
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}

/// Streaming JSONL reader with line-number error attribution and
/// transparent decompression.
pub struct JsonlReader {
    lines: io::Lines<BufReader<Box<dyn Read>>>,
    line_no: u64,
    opts: DecodeOptions,
    path: PathBuf,
}

impl JsonlReader {
    pub fn open(path: &Path, opts: DecodeOptions) -> io::Result<Self> {
        Ok(JsonlReader {
            lines: BufReader::new(open_reader(path)?).lines(),
            line_no: 0,
            opts,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Iterator for JsonlReader {
    type Item = Result<DocumentRoot, DecodeError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(DecodeError::Io(e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(deserialize_jsonl_at(&line, self.line_no, self.opts));
        }
    }
}

/// Writes canonical lines to a possibly compressed sink.
pub struct JsonlWriter {
    out: Box<dyn Write>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(JsonlWriter {
            out: create_writer(path)?,
        })
    }

    pub fn from_writer(out: Box<dyn Write>) -> Self {
        JsonlWriter { out }
    }

    pub fn write_doc(&mut self, doc: &DocumentRoot) -> io::Result<()> {
        self.out.write_all(serialize_jsonl(doc).as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}
