//! Phase-III: declarative command schemas and the invocation parsers
//! interpreted from them.
//!
//! A schema describes one utility: its usage scenarios (mostly
//! sub-commands), each scenario's typed flags, and its positional
//! parameters. Loading a schema yields a parser value directly — there is
//! no code generation step, the interpreted parser has the same
//! observable behavior.
//!
//! Schema files are YAML with top-level keys `command`, `scenarios`, and
//! `flag-groups`. Flag groups are merged into scenarios with YAML merge
//! keys (`<<: *anchor`); sequence-valued keys concatenate (group entries
//! first), so a scenario can both inherit a group and add its own flags.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use serde_yaml::{Mapping, Value};
use thiserror::Error;

use crate::ast::{is_valid_node_type, AstNode, DocumentRoot, NodePath};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to read schema file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid YAML: {0}")]
    Yaml(#[from] serde_yaml::Error),
    #[error("schema is missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("unexpected key `{0}` in {1}")]
    UnexpectedKey(String, &'static str),
    #[error("expected {expected} for `{key}`")]
    WrongType { key: String, expected: &'static str },
    #[error("unknown value type `{0}` (expected boolean, scalar, or array)")]
    UnknownValueType(String),
    #[error("flag must declare a long or a short name")]
    FlagWithoutName,
    #[error("duplicate flag `{flag}` in scenario `{scenario}` after merge")]
    Conflict { scenario: String, flag: String },
    #[error("duplicate scenario node `{0}`")]
    DuplicateScenario(String),
    #[error("unknown positional arity `{0}` (expected one, optional, or many)")]
    UnknownArity(String),
    #[error("derived node name `{0}` violates the node-type grammar")]
    BadNodeName(String),
    #[error("schema file `{file}` declares utility `{utility}`; expected `<utility>.yaml`")]
    FilenameMismatch { file: String, utility: String },
    #[error("duplicate schema for utility `{0}`")]
    DuplicateUtility(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueType {
    Boolean,
    Scalar,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    One,
    Optional,
    Many,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlagSpec {
    pub long: Option<String>,
    pub short: Option<char>,
    pub value_type: ValueType,
    pub node_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionalSpec {
    pub name: String,
    pub arity: Arity,
    pub node_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub match_words: Vec<String>,
    pub node_name: String,
    pub flags: Vec<FlagSpec>,
    pub positionals: Vec<PositionalSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandSchema {
    pub utility: String,
    pub scenarios: Vec<Scenario>,
}

/// Uppercases a name into a tag component: non-alphanumerics become
/// dashes, runs collapse, edges trim.
fn tag_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut dash = true;
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_uppercase());
            dash = false;
        } else if !dash {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

// ---------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------

fn as_mapping(value: Value, what: &'static str) -> Result<Mapping, SchemaError> {
    match value {
        Value::Mapping(m) => Ok(m),
        _ => Err(SchemaError::WrongType {
            key: what.to_string(),
            expected: "a mapping",
        }),
    }
}

fn take_str(map: &mut Mapping, key: &str) -> Result<Option<String>, SchemaError> {
    match map.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(Value::Bool(b)) => Ok(Some(b.to_string())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(_) => Err(SchemaError::WrongType {
            key: key.to_string(),
            expected: "a string",
        }),
    }
}

fn take_seq(map: &mut Mapping, key: &str) -> Result<Vec<Value>, SchemaError> {
    match map.remove(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Sequence(s)) => Ok(s),
        Some(_) => Err(SchemaError::WrongType {
            key: key.to_string(),
            expected: "a sequence",
        }),
    }
}

/// Resolves a `<<` merge key. Sources apply in order, then local keys;
/// sequence values concatenate (sources first), scalars are overridden by
/// local values.
fn resolve_merge(mut map: Mapping) -> Result<Mapping, SchemaError> {
    let sources = match map.remove("<<") {
        None => Vec::new(),
        Some(Value::Mapping(m)) => vec![m],
        Some(Value::Sequence(seq)) => {
            let mut out = Vec::new();
            for v in seq {
                out.push(as_mapping(v, "merge source")?);
            }
            out
        }
        Some(_) => {
            return Err(SchemaError::WrongType {
                key: "<<".to_string(),
                expected: "a mapping or sequence of mappings",
            })
        }
    };
    let mut out = Mapping::new();
    for source in sources {
        for (k, v) in source {
            match (out.get_mut(&k), v) {
                (Some(Value::Sequence(dst)), Value::Sequence(src)) => dst.extend(src),
                (Some(_), _) => {} // first source wins for scalars
                (None, v) => {
                    out.insert(k, v);
                }
            }
        }
    }
    for (k, v) in map {
        match (out.get_mut(&k), v) {
            (Some(Value::Sequence(dst)), Value::Sequence(src)) => dst.extend(src),
            (_, v) => {
                out.insert(k, v);
            }
        }
    }
    Ok(out)
}

fn parse_flag(value: Value, utility_tag: &str) -> Result<FlagSpec, SchemaError> {
    let mut map = as_mapping(value, "flag")?;
    let long = take_str(&mut map, "long")?.map(|s| s.trim_start_matches('-').to_string());
    let short_raw = take_str(&mut map, "short")?;
    let value_type = match take_str(&mut map, "type")?.ok_or(SchemaError::MissingKey("type"))? {
        t if t == "boolean" => ValueType::Boolean,
        t if t == "scalar" => ValueType::Scalar,
        t if t == "array" => ValueType::Array,
        other => return Err(SchemaError::UnknownValueType(other)),
    };
    if let Some((k, _)) = map.into_iter().next() {
        return Err(SchemaError::UnexpectedKey(format!("{k:?}"), "flag"));
    }
    let short = match short_raw {
        None => None,
        Some(s) => {
            let stripped = s.trim_start_matches('-');
            let mut chars = stripped.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Some(c),
                _ => {
                    return Err(SchemaError::WrongType {
                        key: "short".to_string(),
                        expected: "a single character",
                    })
                }
            }
        }
    };
    let name_source = long
        .clone()
        .or_else(|| short.map(|c| c.to_string()))
        .ok_or(SchemaError::FlagWithoutName)?;
    let node_name = format!("SC-{utility_tag}-F-{}", tag_component(&name_source));
    if !is_valid_node_type(&node_name) {
        return Err(SchemaError::BadNodeName(node_name));
    }
    Ok(FlagSpec {
        long,
        short,
        value_type,
        node_name,
    })
}

fn parse_positional(value: Value, utility_tag: &str) -> Result<PositionalSpec, SchemaError> {
    let mut map = as_mapping(value, "positional")?;
    let name = take_str(&mut map, "name")?.ok_or(SchemaError::MissingKey("name"))?;
    let arity = match take_str(&mut map, "arity")?.ok_or(SchemaError::MissingKey("arity"))? {
        a if a == "one" => Arity::One,
        a if a == "optional" => Arity::Optional,
        a if a == "many" => Arity::Many,
        other => return Err(SchemaError::UnknownArity(other)),
    };
    if let Some((k, _)) = map.into_iter().next() {
        return Err(SchemaError::UnexpectedKey(format!("{k:?}"), "positional"));
    }
    let node_name = format!("SC-{utility_tag}-{}", tag_component(&name));
    if !is_valid_node_type(&node_name) {
        return Err(SchemaError::BadNodeName(node_name));
    }
    Ok(PositionalSpec {
        name,
        arity,
        node_name,
    })
}

pub fn load_schema(text: &str) -> Result<CommandSchema, SchemaError> {
    let value: Value = serde_yaml::from_str(text)?;
    let mut map = as_mapping(value, "schema document")?;
    let utility = take_str(&mut map, "command")?.ok_or(SchemaError::MissingKey("command"))?;
    if utility.is_empty() {
        return Err(SchemaError::MissingKey("command"));
    }
    let utility_tag = tag_component(&utility);
    let scenarios_raw = take_seq(&mut map, "scenarios")?;
    map.remove("flag-groups"); // groups act through their anchors
    if let Some((k, _)) = map.into_iter().next() {
        return Err(SchemaError::UnexpectedKey(
            format!("{k:?}"),
            "schema document",
        ));
    }

    let mut scenarios = Vec::with_capacity(scenarios_raw.len());
    let mut seen_names = BTreeSet::new();
    for raw in scenarios_raw {
        let mut smap = resolve_merge(as_mapping(raw, "scenario")?)?;
        let match_words: Vec<String> = take_seq(&mut smap, "match")?
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                _ => Err(SchemaError::WrongType {
                    key: "match".to_string(),
                    expected: "a sequence of strings",
                }),
            })
            .collect::<Result<_, _>>()?;
        let explicit_name = take_str(&mut smap, "name")?;
        let flags_raw = take_seq(&mut smap, "flags")?;
        let positionals_raw = take_seq(&mut smap, "positionals")?;
        if let Some((k, _)) = smap.into_iter().next() {
            return Err(SchemaError::UnexpectedKey(format!("{k:?}"), "scenario"));
        }

        let suffix = match explicit_name {
            Some(n) => tag_component(&n),
            None => match_words
                .iter()
                .map(|w| tag_component(w))
                .collect::<Vec<_>>()
                .join("-"),
        };
        let node_name = if suffix.is_empty() {
            format!("SC-{utility_tag}")
        } else {
            format!("SC-{utility_tag}-{suffix}")
        };
        if !is_valid_node_type(&node_name) {
            return Err(SchemaError::BadNodeName(node_name));
        }
        if !seen_names.insert(node_name.clone()) {
            return Err(SchemaError::DuplicateScenario(node_name));
        }

        let mut flags = Vec::with_capacity(flags_raw.len());
        let mut longs = BTreeSet::new();
        let mut shorts = BTreeSet::new();
        for raw in flags_raw {
            let flag = parse_flag(raw, &utility_tag)?;
            if let Some(l) = &flag.long {
                if !longs.insert(l.clone()) {
                    return Err(SchemaError::Conflict {
                        scenario: node_name.clone(),
                        flag: format!("--{l}"),
                    });
                }
            }
            if let Some(s) = flag.short {
                if !shorts.insert(s) {
                    return Err(SchemaError::Conflict {
                        scenario: node_name.clone(),
                        flag: format!("-{s}"),
                    });
                }
            }
            flags.push(flag);
        }
        let positionals = positionals_raw
            .into_iter()
            .map(|raw| parse_positional(raw, &utility_tag))
            .collect::<Result<Vec<_>, _>>()?;

        scenarios.push(Scenario {
            match_words,
            node_name,
            flags,
            positionals,
        });
    }

    Ok(CommandSchema { utility, scenarios })
}

impl CommandSchema {
    /// Scenario whose match sequence is the longest prefix of
    /// `words[1..]`; ties resolve to declaration order.
    pub fn select_scenario(&self, sub_words: &[&str]) -> Option<&Scenario> {
        let mut best: Option<&Scenario> = None;
        for scenario in &self.scenarios {
            let m = &scenario.match_words;
            if m.len() <= sub_words.len()
                && m.iter().zip(sub_words).all(|(a, b)| a == b)
                && best.is_none_or(|b| m.len() > b.match_words.len())
            {
                best = Some(scenario);
            }
        }
        best
    }
}

impl Scenario {
    fn find_long(&self, name: &str) -> Option<&FlagSpec> {
        self.flags.iter().find(|f| f.long.as_deref() == Some(name))
    }

    fn find_short(&self, c: char) -> Option<&FlagSpec> {
        self.flags.iter().find(|f| f.short == Some(c))
    }
}

/// Parses one literal invocation against a schema. `None` means the
/// invocation does not fit (unknown flag, missing value or positional):
/// callers leave the original sub-tree untouched.
pub fn parse_invocation(schema: &CommandSchema, words: &[&str]) -> Option<AstNode> {
    if words.first() != Some(&schema.utility.as_str()) {
        return None;
    }
    let scenario = schema.select_scenario(&words[1..])?;
    let rest = &words[1 + scenario.match_words.len()..];

    let mut children: Vec<AstNode> = Vec::new();
    let mut positional_idx = 0usize;
    let mut filled = 0usize; // words consumed by the current positional
    let mut after_separator = false;
    let mut i = 0usize;

    let push_flag = |flag: &FlagSpec, value: Option<&str>| {
        let mut node = AstNode::bare(&flag.node_name);
        if let Some(v) = value {
            node = node.with_child(AstNode::leaf("BASH-LITERAL", v));
        }
        node
    };

    while i < rest.len() {
        let word = rest[i];
        if !after_separator && word == "--" {
            after_separator = true;
            i += 1;
            continue;
        }
        if !after_separator && word.len() > 2 && word.starts_with("--") {
            let body = &word[2..];
            let (name, inline) = match body.split_once('=') {
                Some((n, v)) => (n, Some(v)),
                None => (body, None),
            };
            let flag = scenario.find_long(name)?;
            match flag.value_type {
                ValueType::Boolean => {
                    if inline.is_some() {
                        return None;
                    }
                    children.push(push_flag(flag, None));
                }
                ValueType::Scalar | ValueType::Array => {
                    let value = match inline {
                        Some(v) => v.to_string(),
                        None => {
                            i += 1;
                            rest.get(i)?.to_string()
                        }
                    };
                    children.push(push_flag(flag, Some(&value)));
                }
            }
        } else if !after_separator && word.len() > 1 && word.starts_with('-') && word != "-" {
            let letters: Vec<char> = word[1..].chars().collect();
            if letters.iter().any(|c| !c.is_ascii_alphanumeric()) {
                return None;
            }
            // Every letter must be a known flag; only the trailing one may
            // consume a value (`-xzf archive.tar`).
            for (idx, &c) in letters.iter().enumerate() {
                let flag = scenario.find_short(c)?;
                match flag.value_type {
                    ValueType::Boolean => children.push(push_flag(flag, None)),
                    ValueType::Scalar | ValueType::Array => {
                        if idx + 1 != letters.len() {
                            return None;
                        }
                        i += 1;
                        let value = rest.get(i)?;
                        children.push(push_flag(flag, Some(value)));
                    }
                }
            }
        } else {
            let spec = scenario.positionals.get(positional_idx)?;
            children.push(AstNode::leaf(&spec.node_name, word));
            filled += 1;
            match spec.arity {
                Arity::One | Arity::Optional => {
                    positional_idx += 1;
                    filled = 0;
                }
                Arity::Many => {}
            }
        }
        i += 1;
    }

    // Unfilled required positionals fail the parse. A `many` positional
    // accepts zero words.
    let start = if filled > 0 {
        positional_idx + 1
    } else {
        positional_idx
    };
    for spec in &scenario.positionals[start.min(scenario.positionals.len())..] {
        if spec.arity == Arity::One {
            return None;
        }
    }

    Some(AstNode::new(scenario.node_name.clone(), None, children).expect("validated node name"))
}

// ---------------------------------------------------------------------
// Schema sets
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct SchemaSet {
    by_utility: BTreeMap<String, CommandSchema>,
}

impl SchemaSet {
    pub fn new(schemas: impl IntoIterator<Item = CommandSchema>) -> Result<Self, SchemaError> {
        let mut by_utility = BTreeMap::new();
        for schema in schemas {
            if by_utility.insert(schema.utility.clone(), schema).is_some() {
                return Err(SchemaError::DuplicateUtility(
                    by_utility.keys().last().unwrap().clone(),
                ));
            }
        }
        Ok(SchemaSet { by_utility })
    }

    /// Loads every `*.yaml` in a directory; filenames must match the
    /// utility each file declares.
    pub fn load_dir(dir: &Path) -> Result<Self, SchemaError> {
        let mut schemas = Vec::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("yaml"))
            .collect();
        entries.sort();
        for path in entries {
            let schema = load_schema(&std::fs::read_to_string(&path)?)?;
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            if stem != schema.utility {
                return Err(SchemaError::FilenameMismatch {
                    file: path.display().to_string(),
                    utility: schema.utility,
                });
            }
            schemas.push(schema);
        }
        SchemaSet::new(schemas)
    }

    pub fn get(&self, utility: &str) -> Option<&CommandSchema> {
        self.by_utility.get(utility)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CommandSchema> {
        self.by_utility.values()
    }

    pub fn len(&self) -> usize {
        self.by_utility.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_utility.is_empty()
    }

    /// The schema set shipped with the library.
    pub fn bundled() -> &'static SchemaSet {
        static BUNDLED: OnceLock<SchemaSet> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            let sources = [
                include_str!("../assets/schemas/apk.yaml"),
                include_str!("../assets/schemas/apt-get.yaml"),
                include_str!("../assets/schemas/curl.yaml"),
                include_str!("../assets/schemas/git.yaml"),
                include_str!("../assets/schemas/mkdir.yaml"),
                include_str!("../assets/schemas/npm.yaml"),
                include_str!("../assets/schemas/pip.yaml"),
                include_str!("../assets/schemas/tar.yaml"),
                include_str!("../assets/schemas/wget.yaml"),
                include_str!("../assets/schemas/yum.yaml"),
            ];
            SchemaSet::new(
                sources
                    .iter()
                    .map(|s| load_schema(s).expect("bundled schema")),
            )
            .expect("bundled schemas are distinct")
        })
    }
}

// ---------------------------------------------------------------------
// Enrichment
// ---------------------------------------------------------------------

/// Record of one replaced sub-tree, sufficient to undo the enrichment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    pub path: NodePath,
    pub original: AstNode,
}

#[derive(Debug, Clone)]
pub struct EnrichOutcome {
    pub doc: DocumentRoot,
    pub substitutions: Vec<Substitution>,
}

/// Extracts the literal word sequence of a simple command, or `None` if
/// any word is not fully literal (variables, substitutions), the command
/// carries an environment prefix, or it has redirections — those
/// invocations stay unenriched.
fn invocation_words(node: &AstNode) -> Option<Vec<String>> {
    let mut words = Vec::new();
    for child in node.children() {
        match child.node_type() {
            "BASH-COMMAND-COMMAND" => {
                words.push(literal_word(child.children().first()?)?);
            }
            "BASH-COMMAND-ARGS" => {
                for arg in child.children() {
                    words.push(literal_word(arg)?);
                }
            }
            _ => return None, // BASH-ASSIGN prefix or BASH-REDIRECT
        }
    }
    if words.is_empty() {
        None
    } else {
        Some(words)
    }
}

fn literal_word(node: &AstNode) -> Option<String> {
    match node.node_type() {
        "BASH-LITERAL" | "BASH-SINGLE-QUOTED" => {
            let v = node.value()?;
            if v.contains('$') {
                // A mixed word that kept its raw interpolated spelling is
                // not a literal for matching purposes.
                if node.node_type() == "BASH-LITERAL" {
                    return None;
                }
            }
            Some(v.to_string())
        }
        "BASH-DOUBLE-QUOTED" => {
            let mut out = String::new();
            for part in node.children() {
                if part.node_type() != "BASH-LITERAL" {
                    return None;
                }
                out.push_str(part.value().unwrap_or(""));
            }
            Some(out)
        }
        _ => None,
    }
}

/// Phase III: every MAYBE-SEMANTIC-COMMAND whose command matches a schema
/// utility and parses cleanly is replaced by its SC-* tree. Everything
/// else is left verbatim; the operation is total.
pub fn enrich(doc: &DocumentRoot, schemas: &SchemaSet) -> EnrichOutcome {
    let mut root = doc.root().clone();
    let mut substitutions = Vec::new();
    let targets: Vec<NodePath> = root
        .find_subtrees(|n| n.node_type() == "MAYBE-SEMANTIC-COMMAND")
        .into_iter()
        .map(|(path, _)| path)
        .collect();
    for path in targets {
        let node = root.get(&path).expect("path from traversal");
        let Some(words) = invocation_words(node) else {
            continue;
        };
        let Some(schema) = schemas.get(&words[0]) else {
            continue;
        };
        let word_refs: Vec<&str> = words.iter().map(String::as_str).collect();
        if let Some(replacement) = parse_invocation(schema, &word_refs) {
            let original = node.clone();
            root = root
                .replace_subtree(&path, replacement)
                .expect("path from traversal");
            substitutions.push(Substitution { path, original });
        }
    }
    EnrichOutcome {
        doc: doc.map_root(root).expect("root type unchanged"),
        substitutions,
    }
}

/// Undoes an enrichment using its substitution log.
pub fn restore(doc: &DocumentRoot, substitutions: &[Substitution]) -> DocumentRoot {
    let mut root = doc.root().clone();
    for sub in substitutions {
        root = root
            .replace_subtree(&sub.path, sub.original.clone())
            .expect("log path addresses a node");
    }
    doc.map_root(root).expect("root type unchanged")
}

/// Descending frequency of command names over Phase-II documents; ties
/// break lexicographically.
pub fn rank_commands(docs: &[DocumentRoot], n: usize) -> Vec<(String, u64)> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        for (_, node) in doc.root().pre_order() {
            if node.node_type() == "BASH-COMMAND-COMMAND" {
                if let Some(name) = node.children().first().and_then(|c| c.value()) {
                    *counts.entry(name.to_string()).or_insert(0) += 1;
                }
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}

/// Reconstructs the word multiset of a parsed invocation: utility,
/// scenario match words, flag spellings with their values, and positional
/// values. Used to check that parsing loses and invents nothing.
pub fn invocation_to_words(schema: &CommandSchema, node: &AstNode) -> Option<Vec<String>> {
    let scenario = schema
        .scenarios
        .iter()
        .find(|s| s.node_name == node.node_type())?;
    let mut words = vec![schema.utility.clone()];
    words.extend(scenario.match_words.iter().cloned());
    for child in node.children() {
        if let Some(flag) = scenario
            .flags
            .iter()
            .find(|f| f.node_name == child.node_type())
        {
            words.push(match (&flag.long, flag.short) {
                (Some(l), _) => format!("--{l}"),
                (None, Some(s)) => format!("-{s}"),
                (None, None) => unreachable!("validated at load"),
            });
            for value in child.children() {
                words.push(value.value().unwrap_or("").to_string());
            }
        } else {
            words.push(child.value().unwrap_or("").to_string());
        }
    }
    Some(words)
}
