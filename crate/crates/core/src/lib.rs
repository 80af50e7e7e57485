//! Dockerfile corpus pipeline.
//!
//! Transforms a directory of Dockerfiles through five representations:
//! raw sources, deduplicated sources, top-level ASTs, ASTs with embedded
//! shell parsed, ASTs with schema-parsed command invocations, and finally
//! abstraction-tagged ASTs — then evaluates tree-implication rules over
//! the result.

pub mod abstraction;
pub mod ast;
pub mod codec;
pub mod corpus;
pub mod docker;
pub mod par;
pub mod rules;
pub mod schema;
pub mod shell;

pub use ast::{AstError, AstNode, DocumentRoot, FileSha, NodePath, Rep};
pub use codec::{deserialize_jsonl, serialize_jsonl, DecodeError, DecodeOptions};
pub use par::Parallelism;
