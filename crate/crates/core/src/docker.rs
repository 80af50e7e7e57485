//! Phase-I parser: Dockerfile source text to a DOCKER-* tree.
//!
//! The parser is deliberately permissive about instruction payloads (the
//! corpus spans a decade of files) but strict about directive keywords:
//! a file using a keyword outside the known catalog is rejected outright,
//! which is the validity filter applied during corpus construction.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ast::AstNode;

/// Recognized top-level directive keywords. Lookup is case-insensitive;
/// the catalog is closed.
pub const DIRECTIVE_NAMES: &[&str] = &[
    "FROM",
    "RUN",
    "CMD",
    "COPY",
    "ADD",
    "EXPOSE",
    "ENV",
    "ARG",
    "LABEL",
    "WORKDIR",
    "USER",
    "VOLUME",
    "ENTRYPOINT",
    "ONBUILD",
    "STOPSIGNAL",
    "HEALTHCHECK",
    "SHELL",
    "MAINTAINER",
];

pub fn is_known_directive(keyword: &str) -> bool {
    DIRECTIVE_NAMES
        .iter()
        .any(|d| d.eq_ignore_ascii_case(keyword))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DockerParseError {
    #[error("file contains no instructions after comment removal")]
    EmptyFile,
    #[error("line {line}: unknown directive `{keyword}`")]
    UnknownDirective { keyword: String, line: usize },
    #[error("line {line}: malformed {keyword} instruction: {message}")]
    Malformed {
        keyword: String,
        line: usize,
        message: String,
    },
}

impl DockerParseError {
    /// Short machine-facing reason used in rejects reports.
    pub fn reason(&self) -> String {
        match self {
            DockerParseError::EmptyFile => "empty-file".to_string(),
            DockerParseError::UnknownDirective { keyword, .. } => {
                format!("unknown-directive:{keyword}")
            }
            DockerParseError::Malformed { keyword, .. } => format!("malformed:{keyword}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWarning {
    /// The first instruction is neither FROM nor ARG. Accepted anyway.
    FirstInstructionNotFrom { keyword: String, line: usize },
}

/// Result of a Phase-I parse: the tree, non-fatal warnings, and any
/// parser directives (`# escape=`, `# syntax=`) found at the head of the
/// file. Directives affect lexing and are recorded here rather than in
/// the tree.
#[derive(Debug, Clone)]
pub struct Parse {
    pub root: AstNode,
    pub warnings: Vec<ParseWarning>,
    pub directives: BTreeMap<String, String>,
}

/// One instruction after continuation joining and comment removal.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Logical {
    line: usize,
    text: String,
}

/// Scans leading `# key=value` parser directives. Scanning stops at the
/// first line that is not a directive, matching the builder's rule.
fn scan_parser_directives(source: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for raw in source.lines() {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            break;
        }
        let Some(body) = trimmed.strip_prefix('#') else {
            break;
        };
        let Some((key, value)) = body.split_once('=') else {
            break;
        };
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric()) {
            break;
        }
        out.insert(key, value.trim().to_string());
    }
    out
}

/// Joins continuations and drops comment/blank lines. The escape char and
/// the newline are removed; everything else is preserved verbatim.
fn preprocess(source: &str, escape: char) -> Vec<Logical> {
    let mut out: Vec<Logical> = Vec::new();
    let mut current: Option<Logical> = None;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            // Blank lines end nothing mid-continuation; outside one they
            // are simply skipped.
            continue;
        }
        let (content, continues) = match raw.trim_end().strip_suffix(escape) {
            Some(stripped) => (stripped.to_string(), true),
            None => (raw.to_string(), false),
        };
        match current.as_mut() {
            Some(cur) => cur.text.push_str(&content),
            None => {
                current = Some(Logical {
                    line: line_no,
                    text: content,
                })
            }
        }
        if !continues {
            out.push(current.take().unwrap());
        }
    }
    if let Some(cur) = current {
        out.push(cur); // dangling continuation at EOF
    }
    out
}

/// Splits a payload into words, honoring single/double quotes and
/// backslash escapes inside double quotes. Quotes are stripped.
fn split_quoted(s: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let mut started = false;
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ' ' | '\t' => {
                if started {
                    words.push(std::mem::take(&mut cur));
                    started = false;
                }
            }
            '\'' => {
                started = true;
                for q in chars.by_ref() {
                    if q == '\'' {
                        break;
                    }
                    cur.push(q);
                }
            }
            '"' => {
                started = true;
                while let Some(q) = chars.next() {
                    match q {
                        '"' => break,
                        '\\' => {
                            if let Some(&esc) = chars.peek() {
                                if esc == '"' || esc == '\\' {
                                    cur.push(esc);
                                    chars.next();
                                } else {
                                    cur.push('\\');
                                }
                            } else {
                                cur.push('\\');
                            }
                        }
                        _ => cur.push(q),
                    }
                }
            }
            _ => {
                started = true;
                cur.push(c);
            }
        }
    }
    if started {
        words.push(cur);
    }
    words
}

/// Exec-form detection: a payload that starts with `[` and parses as a
/// JSON array of strings is exec form; anything else falls back to shell
/// form, mirroring the builder's own behavior.
fn try_exec_array(payload: &str) -> Option<Vec<String>> {
    let trimmed = payload.trim();
    if !trimmed.starts_with('[') {
        return None;
    }
    serde_json::from_str::<Vec<String>>(trimmed).ok()
}

pub fn parse_dockerfile(source: &str) -> Result<Parse, DockerParseError> {
    let source = source.strip_prefix('\u{feff}').unwrap_or(source);
    let directives = scan_parser_directives(source);
    let escape = match directives.get("escape").map(String::as_str) {
        Some("`") => '`',
        _ => '\\',
    };
    let instructions = preprocess(source, escape);
    if instructions.is_empty() {
        return Err(DockerParseError::EmptyFile);
    }

    let mut warnings = Vec::new();
    let mut children = Vec::with_capacity(instructions.len());
    for (i, inst) in instructions.iter().enumerate() {
        let (keyword, payload) = split_instruction(&inst.text);
        let keyword = keyword.to_ascii_uppercase();
        if !is_known_directive(&keyword) {
            return Err(DockerParseError::UnknownDirective {
                keyword,
                line: inst.line,
            });
        }
        if i == 0 && keyword != "FROM" && keyword != "ARG" {
            warnings.push(ParseWarning::FirstInstructionNotFrom {
                keyword: keyword.clone(),
                line: inst.line,
            });
        }
        children.push(parse_instruction(&keyword, payload, inst.line)?);
    }

    Ok(Parse {
        root: AstNode::branch("DOCKER-FILE", children),
        warnings,
        directives,
    })
}

fn split_instruction(text: &str) -> (&str, &str) {
    let trimmed = text.trim_start();
    match trimmed.find(|c: char| c.is_whitespace()) {
        Some(pos) => (&trimmed[..pos], trimmed[pos..].trim()),
        None => (trimmed, ""),
    }
}

fn parse_instruction(
    keyword: &str,
    payload: &str,
    line: usize,
) -> Result<AstNode, DockerParseError> {
    let node = match keyword {
        "FROM" => parse_from(payload, line)?,
        "RUN" => parse_command_like("DOCKER-RUN", "DOCKER-RUN-ARG", payload),
        "CMD" => parse_command_like("DOCKER-CMD", "DOCKER-CMD-ARG", payload),
        "ENTRYPOINT" => parse_command_like("DOCKER-ENTRYPOINT", "DOCKER-ENTRYPOINT-ARG", payload),
        "COPY" => parse_paths("DOCKER-COPY", "DOCKER-COPY-FLAG", payload),
        "ADD" => parse_paths("DOCKER-ADD", "DOCKER-ADD-FLAG", payload),
        "EXPOSE" => AstNode::branch(
            "DOCKER-EXPOSE",
            payload
                .split_whitespace()
                .map(|p| AstNode::leaf("DOCKER-PORT", p))
                .collect(),
        ),
        "ENV" => AstNode::branch("DOCKER-ENV", parse_pairs(payload)),
        "ARG" => AstNode::branch("DOCKER-ARG", parse_pairs(payload)),
        "LABEL" => AstNode::branch("DOCKER-LABEL", parse_pairs(payload)),
        "WORKDIR" => AstNode::branch("DOCKER-WORKDIR", single_value("DOCKER-PATH", payload)),
        "USER" => AstNode::branch("DOCKER-USER", single_value("DOCKER-USER-NAME", payload)),
        "STOPSIGNAL" => {
            AstNode::branch("DOCKER-STOPSIGNAL", single_value("DOCKER-SIGNAL", payload))
        }
        "MAINTAINER" => AstNode::branch("DOCKER-MAINTAINER", single_value("DOCKER-NAME", payload)),
        "VOLUME" => {
            let paths = match try_exec_array(payload) {
                Some(items) => items,
                None => split_quoted(payload),
            };
            AstNode::branch(
                "DOCKER-VOLUME",
                paths
                    .iter()
                    .map(|p| AstNode::leaf("DOCKER-PATH", p))
                    .collect(),
            )
        }
        "SHELL" => {
            let args = match try_exec_array(payload) {
                Some(items) => items,
                None => vec![payload.to_string()],
            };
            AstNode::branch(
                "DOCKER-SHELL",
                args.iter()
                    .map(|a| AstNode::leaf("DOCKER-SHELL-ARG", a))
                    .collect(),
            )
        }
        "HEALTHCHECK" => parse_healthcheck(payload, line)?,
        "ONBUILD" => {
            let (nested_kw, nested_payload) = split_instruction(payload);
            let nested_kw = nested_kw.to_ascii_uppercase();
            if nested_kw == "ONBUILD" {
                // Chaining ONBUILD is rejected by the builder itself, and
                // allowing it here would make instruction parsing
                // unboundedly recursive.
                return Err(DockerParseError::Malformed {
                    keyword: "ONBUILD".to_string(),
                    line,
                    message: "ONBUILD cannot be chained".to_string(),
                });
            }
            if !is_known_directive(&nested_kw) {
                return Err(DockerParseError::UnknownDirective {
                    keyword: nested_kw,
                    line,
                });
            }
            AstNode::branch(
                "DOCKER-ONBUILD",
                vec![parse_instruction(&nested_kw, nested_payload, line)?],
            )
        }
        _ => unreachable!("caller checked the catalog"),
    };
    Ok(node)
}

fn single_value(tag: &str, payload: &str) -> Vec<AstNode> {
    if payload.is_empty() {
        Vec::new()
    } else {
        vec![AstNode::leaf(tag, payload)]
    }
}

fn parse_from(payload: &str, line: usize) -> Result<AstNode, DockerParseError> {
    let malformed = |message: &str| DockerParseError::Malformed {
        keyword: "FROM".to_string(),
        line,
        message: message.to_string(),
    };
    let mut children = Vec::new();
    let mut tokens = payload.split_whitespace().peekable();
    while let Some(tok) = tokens.peek() {
        if tok.starts_with("--") {
            children.push(AstNode::leaf("DOCKER-FROM-FLAG", *tok));
            tokens.next();
        } else {
            break;
        }
    }
    let image = tokens
        .next()
        .ok_or_else(|| malformed("missing image reference"))?;

    let (name_and_tag, digest) = match image.split_once('@') {
        Some((n, d)) => (n, Some(d)),
        None => (image, None),
    };
    // A colon after the last slash separates the tag; a colon before it
    // belongs to a registry host:port.
    let slash = name_and_tag.rfind('/').map(|i| i + 1).unwrap_or(0);
    let (name, tag) = match name_and_tag[slash..].rfind(':') {
        Some(rel) => {
            let split = slash + rel;
            (&name_and_tag[..split], Some(&name_and_tag[split + 1..]))
        }
        None => (name_and_tag, None),
    };
    if name.is_empty() {
        return Err(malformed("empty image name"));
    }
    children.push(AstNode::leaf("DOCKER-IMAGE-NAME", name));
    if let Some(tag) = tag {
        children.push(AstNode::leaf("DOCKER-IMAGE-TAG", tag));
    }
    if let Some(digest) = digest {
        children.push(AstNode::leaf("DOCKER-IMAGE-DIGEST", digest));
    }

    match (tokens.next(), tokens.next()) {
        (None, _) => {}
        (Some(kw), Some(alias)) if kw.eq_ignore_ascii_case("as") => {
            children.push(AstNode::leaf("DOCKER-FROM-ALIAS", alias));
            if tokens.next().is_some() {
                return Err(malformed("trailing tokens after stage alias"));
            }
        }
        _ => return Err(malformed("expected `AS <name>` after image reference")),
    }
    Ok(AstNode::branch("DOCKER-FROM", children))
}

/// RUN/CMD/ENTRYPOINT. Exec form becomes one arg node per element; shell
/// form keeps the raw payload in a single BASH-LITERAL for Phase II.
fn parse_command_like(tag: &str, arg_tag: &str, payload: &str) -> AstNode {
    match try_exec_array(payload) {
        Some(args) => AstNode::branch(
            tag,
            args.iter().map(|a| AstNode::leaf(arg_tag, a)).collect(),
        ),
        None => AstNode::branch(tag, vec![AstNode::leaf("BASH-LITERAL", payload)]),
    }
}

fn parse_paths(tag: &str, flag_tag: &str, payload: &str) -> AstNode {
    let mut children = Vec::new();
    let mut rest = payload.trim_start();
    while rest.starts_with("--") {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        children.push(AstNode::leaf(flag_tag, &rest[..end]));
        rest = rest[end..].trim_start();
    }
    let paths = match try_exec_array(rest) {
        Some(items) => items,
        None => split_quoted(rest),
    };
    if let Some((dst, srcs)) = paths.split_last() {
        for src in srcs {
            children.push(AstNode::leaf("DOCKER-PATH-SRC", src));
        }
        if srcs.is_empty() {
            // One path only: record it as a source and leave the
            // destination missing rather than rejecting the file.
            children.push(AstNode::leaf("DOCKER-PATH-SRC", dst));
        } else {
            children.push(AstNode::leaf("DOCKER-PATH-DST", dst));
        }
    }
    AstNode::branch(tag, children)
}

/// `k=v` pair lists (and the legacy space-separated single pair) shared
/// by ENV, ARG, and LABEL.
fn parse_pairs(payload: &str) -> Vec<AstNode> {
    if payload.is_empty() {
        return Vec::new();
    }
    let first = payload.split_whitespace().next().unwrap_or("");
    let mut out = Vec::new();
    if first.contains('=') {
        for word in split_quoted(payload) {
            match word.split_once('=') {
                Some((k, v)) => {
                    out.push(AstNode::leaf("DOCKER-NAME", k));
                    out.push(AstNode::leaf("DOCKER-VALUE", v));
                }
                None => out.push(AstNode::leaf("DOCKER-NAME", word)),
            }
        }
    } else {
        match payload.split_once(char::is_whitespace) {
            Some((name, value)) => {
                out.push(AstNode::leaf("DOCKER-NAME", name));
                out.push(AstNode::leaf("DOCKER-VALUE", value.trim()));
            }
            None => out.push(AstNode::leaf("DOCKER-NAME", payload)),
        }
    }
    out
}

fn parse_healthcheck(payload: &str, line: usize) -> Result<AstNode, DockerParseError> {
    let trimmed = payload.trim();
    if trimmed.eq_ignore_ascii_case("none") {
        return Ok(AstNode::branch(
            "DOCKER-HEALTHCHECK",
            vec![AstNode::bare("DOCKER-HEALTHCHECK-NONE")],
        ));
    }
    let mut children = Vec::new();
    let mut rest = trimmed;
    while rest.starts_with("--") {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        children.push(AstNode::leaf("DOCKER-HEALTHCHECK-FLAG", &rest[..end]));
        rest = rest[end..].trim_start();
    }
    let (kw, cmd_payload) = split_instruction(rest);
    if !kw.eq_ignore_ascii_case("cmd") {
        return Err(DockerParseError::Malformed {
            keyword: "HEALTHCHECK".to_string(),
            line,
            message: "expected CMD or NONE".to_string(),
        });
    }
    children.push(parse_command_like(
        "DOCKER-CMD",
        "DOCKER-CMD-ARG",
        cmd_payload,
    ));
    Ok(AstNode::branch("DOCKER-HEALTHCHECK", children))
}

/// Rejection report listing children of a DOCKER-FILE whose type does not
/// strip to a catalog directive.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown directive nodes: {}", offending.join(", "))]
pub struct RejectionReport {
    pub offending: Vec<String>,
}

pub fn validate_known_directives(root: &AstNode) -> Result<(), RejectionReport> {
    let offending: Vec<String> = root
        .children()
        .iter()
        .filter(|c| {
            !c.node_type()
                .strip_prefix("DOCKER-")
                .is_some_and(|name| DIRECTIVE_NAMES.contains(&name))
        })
        .map(|c| c.node_type().to_string())
        .collect();
    if offending.is_empty() {
        Ok(())
    } else {
        Err(RejectionReport { offending })
    }
}

/// Reconstructs Dockerfile text from a Phase-I tree. Inverse of
/// [`parse_dockerfile`] for trees the parser itself produced.
pub fn render_dockerfile(root: &AstNode) -> String {
    let mut out = String::new();
    for child in root.children() {
        out.push_str(&render_instruction(child));
        out.push('\n');
    }
    out
}

fn render_instruction(node: &AstNode) -> String {
    let keyword = node
        .node_type()
        .strip_prefix("DOCKER-")
        .unwrap_or(node.node_type());
    match keyword {
        "FROM" => {
            let mut parts = vec!["FROM".to_string()];
            let mut image = String::new();
            let mut alias = None;
            for c in node.children() {
                let v = c.value().unwrap_or("");
                match c.node_type() {
                    "DOCKER-FROM-FLAG" => parts.push(v.to_string()),
                    "DOCKER-IMAGE-NAME" => image.push_str(v),
                    "DOCKER-IMAGE-TAG" => {
                        image.push(':');
                        image.push_str(v);
                    }
                    "DOCKER-IMAGE-DIGEST" => {
                        image.push('@');
                        image.push_str(v);
                    }
                    "DOCKER-FROM-ALIAS" => alias = Some(v.to_string()),
                    _ => {}
                }
            }
            parts.push(image);
            if let Some(a) = alias {
                parts.push("AS".to_string());
                parts.push(a);
            }
            parts.join(" ")
        }
        "RUN" | "CMD" | "ENTRYPOINT" => render_command_like(keyword, node),
        "COPY" | "ADD" => {
            let mut parts = vec![keyword.to_string()];
            let mut paths = Vec::new();
            for c in node.children() {
                match c.node_type() {
                    t if t.ends_with("-FLAG") => parts.push(c.value().unwrap_or("").to_string()),
                    _ => paths.push(c.value().unwrap_or("").to_string()),
                }
            }
            if paths.iter().any(|p| p.chars().any(char::is_whitespace)) {
                parts.push(serde_json::to_string(&paths).unwrap());
            } else {
                parts.extend(paths);
            }
            parts.join(" ")
        }
        "EXPOSE" => {
            let mut parts = vec!["EXPOSE".to_string()];
            parts.extend(
                node.children()
                    .iter()
                    .map(|c| c.value().unwrap_or("").to_string()),
            );
            parts.join(" ")
        }
        "ENV" | "ARG" | "LABEL" => {
            let mut parts = vec![keyword.to_string()];
            let mut children = node.children().iter().peekable();
            while let Some(c) = children.next() {
                let name = c.value().unwrap_or("");
                if children.peek().map(|n| n.node_type()) == Some("DOCKER-VALUE") {
                    let value = children.next().unwrap().value().unwrap_or("");
                    parts.push(format!("{name}={}", quote_if_needed(value)));
                } else {
                    parts.push(name.to_string());
                }
            }
            parts.join(" ")
        }
        "WORKDIR" | "USER" | "STOPSIGNAL" | "MAINTAINER" => {
            let value = node
                .children()
                .first()
                .and_then(|c| c.value())
                .unwrap_or("");
            format!("{keyword} {value}").trim_end().to_string()
        }
        "VOLUME" | "SHELL" => {
            let items: Vec<&str> = node.children().iter().filter_map(|c| c.value()).collect();
            format!("{keyword} {}", serde_json::to_string(&items).unwrap())
        }
        "HEALTHCHECK" => {
            let mut parts = vec!["HEALTHCHECK".to_string()];
            for c in node.children() {
                match c.node_type() {
                    "DOCKER-HEALTHCHECK-NONE" => parts.push("NONE".to_string()),
                    "DOCKER-HEALTHCHECK-FLAG" => parts.push(c.value().unwrap_or("").to_string()),
                    "DOCKER-CMD" => parts.push(render_command_like("CMD", c)),
                    _ => {}
                }
            }
            parts.join(" ")
        }
        "ONBUILD" => match node.children().first() {
            Some(inner) => format!("ONBUILD {}", render_instruction(inner)),
            None => "ONBUILD".to_string(),
        },
        _ => keyword.to_string(),
    }
}

fn render_command_like(keyword: &str, node: &AstNode) -> String {
    let children = node.children();
    if children.len() == 1 && children[0].node_type() == "BASH-LITERAL" {
        return format!("{keyword} {}", children[0].value().unwrap_or(""));
    }
    let args: Vec<&str> = children.iter().filter_map(|c| c.value()).collect();
    format!("{keyword} {}", serde_json::to_string(&args).unwrap())
}

fn quote_if_needed(value: &str) -> String {
    let needs = value.is_empty()
        || value
            .chars()
            .any(|c| c.is_whitespace() || c == '"' || c == '\'' || c == '\\');
    if !needs {
        return value.to_string();
    }
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}
