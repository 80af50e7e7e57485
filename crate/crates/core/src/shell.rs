//! Phase-II parser: RUN payloads to BASH-* trees.
//!
//! Covers a deliberate subset of shell: command lists over `;`, `&&`,
//! `||`, pipelines, simple commands with redirections, variable
//! assignments (scalar and array), quoting, and subshell/brace grouping.
//! Anything outside the subset degrades to an UNKNOWN-BASH-FRAGMENT leaf
//! carrying the raw text — the parser never fails on content, only on
//! unterminated quotes.

use thiserror::Error;

use crate::ast::{AstNode, DocumentRoot, NodePath};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShellParseError {
    #[error("unterminated {kind} quote starting at byte {at}")]
    UnterminatedQuote { kind: &'static str, at: usize },
}

/// Words a POSIX shell treats as keywords when they appear in command
/// position. They introduce control flow the subset does not model.
const RESERVED: &[&str] = &[
    "if", "then", "elif", "else", "fi", "for", "while", "until", "do", "done", "case", "esac",
    "function", "select", "time", "coproc", "!", "[[", "]]", "in",
];

// ---------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum DqPart {
    Lit(String),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Bare(String),
    SingleQuoted(String),
    DoubleQuoted(Vec<DqPart>),
    Variable(String),
    /// Command substitution, arithmetic, parameter operators, process
    /// substitution. Poisons the word.
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TokKind {
    Word(Vec<Segment>),
    AndIf,
    OrIf,
    Pipe,
    Semi,
    Newline,
    OpenParen,
    CloseParen,
    /// `&`, `;;`, heredocs — recognized but outside the subset.
    Outside,
    Redirect {
        op: String,
        needs_target: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    kind: TokKind,
    start: usize,
    end: usize,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn tokenize(mut self) -> Result<Vec<Token>, ShellParseError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.peek(), Some(b' ') | Some(b'\t') | Some(b'\r')) {
                self.pos += 1;
            }
            let start = self.pos;
            let Some(b) = self.peek() else { break };
            let kind = match b {
                b'\n' => {
                    self.pos += 1;
                    TokKind::Newline
                }
                b'#' => {
                    while !matches!(self.peek(), None | Some(b'\n')) {
                        self.pos += 1;
                    }
                    continue;
                }
                b'&' => {
                    self.pos += 1;
                    if self.peek() == Some(b'&') {
                        self.pos += 1;
                        TokKind::AndIf
                    } else if self.peek() == Some(b'>') {
                        // &> and &>>
                        self.pos += 1;
                        if self.peek() == Some(b'>') {
                            self.pos += 1;
                        }
                        TokKind::Redirect {
                            op: self.text(start),
                            needs_target: true,
                        }
                    } else {
                        TokKind::Outside
                    }
                }
                b'|' => {
                    self.pos += 1;
                    if self.peek() == Some(b'|') {
                        self.pos += 1;
                        TokKind::OrIf
                    } else {
                        TokKind::Pipe
                    }
                }
                b';' => {
                    self.pos += 1;
                    if self.peek() == Some(b';') {
                        self.pos += 1;
                        TokKind::Outside
                    } else {
                        TokKind::Semi
                    }
                }
                b'(' => {
                    self.pos += 1;
                    TokKind::OpenParen
                }
                b')' => {
                    self.pos += 1;
                    TokKind::CloseParen
                }
                b'<' | b'>' => self.lex_redirect(None),
                b'0'..=b'9' if self.digits_then_redirect() => {
                    let mut digits = String::new();
                    while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                        digits.push(self.bump().unwrap() as char);
                    }
                    self.lex_redirect(Some(digits))
                }
                _ => self.lex_word(start)?,
            };
            let end = self.pos;
            out.push(Token { kind, start, end });
        }
        Ok(out)
    }

    fn text(&self, start: usize) -> String {
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    /// True when the chars from here are digits immediately followed by a
    /// redirect operator — an fd prefix like `2>`.
    fn digits_then_redirect(&self) -> bool {
        let mut off = 0;
        while matches!(self.peek_at(off), Some(d) if d.is_ascii_digit()) {
            off += 1;
        }
        off > 0 && matches!(self.peek_at(off), Some(b'<') | Some(b'>'))
    }

    fn lex_redirect(&mut self, fd: Option<String>) -> TokKind {
        let mut op = fd.unwrap_or_default();
        let first = self.bump().unwrap();
        op.push(first as char);
        if self.peek() == Some(first) {
            // >> or <<
            self.pos += 1;
            op.push(first as char);
            if first == b'<' {
                // heredocs (and <<-, <<<) are outside the subset
                while matches!(self.peek(), Some(b'-') | Some(b'<')) {
                    self.pos += 1;
                }
                return TokKind::Outside;
            }
            return TokKind::Redirect {
                op,
                needs_target: true,
            };
        }
        if self.peek() == Some(b'&') {
            self.pos += 1;
            op.push('&');
            // m>&n / m<&- complete duplications carry their target inline
            let mut had_digit = false;
            while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                op.push(self.bump().unwrap() as char);
                had_digit = true;
            }
            if !had_digit && self.peek() == Some(b'-') {
                op.push(self.bump().unwrap() as char);
                had_digit = true;
            }
            return TokKind::Redirect {
                op,
                needs_target: !had_digit,
            };
        }
        if first == b'<' && self.peek() == Some(b'(') {
            // process substitution
            self.pos += 1;
            self.consume_balanced_parens();
            return TokKind::Outside;
        }
        TokKind::Redirect {
            op,
            needs_target: true,
        }
    }

    fn consume_balanced_parens(&mut self) {
        let mut depth = 1;
        while depth > 0 {
            match self.bump() {
                None => break,
                Some(b'(') => depth += 1,
                Some(b')') => depth -= 1,
                _ => {}
            }
        }
    }

    /// Slices `src[from..self.pos]` as text. All delimiter bytes are
    /// ASCII, so byte scanning never lands inside a multi-byte char and
    /// slices stay on char boundaries.
    fn slice(&self, from: usize) -> &str {
        std::str::from_utf8(&self.src[from..self.pos]).expect("slices follow ASCII delimiters")
    }

    fn lex_word(&mut self, _start: usize) -> Result<TokKind, ShellParseError> {
        let mut segments: Vec<Segment> = Vec::new();
        let mut bare = String::new();
        let mut run_start = self.pos;
        macro_rules! flush_run {
            () => {
                if run_start < self.pos {
                    bare.push_str(self.slice(run_start));
                }
            };
        }
        // Callers reset `run_start` after consuming their delimiter.
        macro_rules! flush_bare {
            () => {
                flush_run!();
                if !bare.is_empty() {
                    segments.push(Segment::Bare(std::mem::take(&mut bare)));
                }
            };
        }
        loop {
            match self.peek() {
                None
                | Some(
                    b' ' | b'\t' | b'\r' | b'\n' | b'|' | b'&' | b';' | b'(' | b')' | b'<' | b'>',
                ) => break,
                Some(b'\'') => {
                    flush_bare!();
                    let at = self.pos;
                    self.pos += 1;
                    let content_start = self.pos;
                    loop {
                        match self.bump() {
                            None => {
                                return Err(ShellParseError::UnterminatedQuote {
                                    kind: "single",
                                    at,
                                })
                            }
                            Some(b'\'') => break,
                            _ => {}
                        }
                    }
                    let text = std::str::from_utf8(&self.src[content_start..self.pos - 1])
                        .expect("quote delimiters are ASCII")
                        .to_string();
                    run_start = self.pos;
                    segments.push(Segment::SingleQuoted(text));
                }
                Some(b'"') => {
                    flush_bare!();
                    let at = self.pos;
                    self.pos += 1;
                    segments.push(self.lex_double_quoted(at)?);
                    run_start = self.pos;
                }
                Some(b'`') => {
                    flush_bare!();
                    let at = self.pos;
                    self.pos += 1;
                    loop {
                        match self.bump() {
                            None => {
                                return Err(ShellParseError::UnterminatedQuote {
                                    kind: "backtick",
                                    at,
                                })
                            }
                            Some(b'\\') => {
                                self.pos += 1;
                            }
                            Some(b'`') => break,
                            _ => {}
                        }
                    }
                    run_start = self.pos;
                    segments.push(Segment::Unsupported);
                }
                Some(b'$') => {
                    flush_bare!();
                    self.pos += 1;
                    segments.push(self.lex_dollar());
                    run_start = self.pos;
                }
                Some(b'\\') => {
                    flush_run!();
                    self.pos += 1;
                    let escaped_start = self.pos;
                    match self.peek() {
                        Some(_) => {
                            // Skip one full char, not one byte.
                            let rest = std::str::from_utf8(&self.src[escaped_start..])
                                .expect("escape delimiter is ASCII");
                            let len = rest.chars().next().map_or(0, char::len_utf8);
                            self.pos += len;
                            bare.push_str(self.slice(escaped_start));
                        }
                        None => bare.push('\\'),
                    }
                    run_start = self.pos;
                }
                Some(_) => {
                    self.pos += 1;
                }
            }
        }
        flush_bare!();
        Ok(TokKind::Word(segments))
    }

    fn lex_dollar(&mut self) -> Segment {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.consume_balanced_parens();
                Segment::Unsupported
            }
            Some(b'{') => {
                let start = self.pos + 1;
                let mut end = start;
                while let Some(c) = self.src.get(end) {
                    if *c == b'}' {
                        break;
                    }
                    end += 1;
                }
                let inner = &self.src[start..end.min(self.src.len())];
                self.pos = (end + 1).min(self.src.len());
                if !inner.is_empty()
                    && inner
                        .iter()
                        .all(|c| c.is_ascii_alphanumeric() || *c == b'_')
                {
                    Segment::Variable(String::from_utf8_lossy(inner).into_owned())
                } else {
                    Segment::Unsupported
                }
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                Segment::Variable(self.text(start))
            }
            Some(c)
                if c.is_ascii_digit() || matches!(c, b'@' | b'*' | b'?' | b'#' | b'$' | b'!') =>
            {
                self.pos += 1;
                Segment::Variable((c as char).to_string())
            }
            _ => Segment::Bare("$".to_string()),
        }
    }

    fn lex_double_quoted(&mut self, at: usize) -> Result<Segment, ShellParseError> {
        let mut parts: Vec<DqPart> = Vec::new();
        let mut lit = String::new();
        let mut unsupported = false;
        let mut run_start = self.pos;
        macro_rules! flush_run {
            () => {
                // The current byte (delimiter) is already consumed; the
                // run ends one byte before it.
                if run_start < self.pos - 1 {
                    lit.push_str(
                        std::str::from_utf8(&self.src[run_start..self.pos - 1])
                            .expect("delimiters are ASCII"),
                    );
                }
            };
        }
        macro_rules! flush_lit {
            () => {
                if !lit.is_empty() {
                    parts.push(DqPart::Lit(std::mem::take(&mut lit)));
                }
            };
        }
        loop {
            match self.bump() {
                None => return Err(ShellParseError::UnterminatedQuote { kind: "double", at }),
                Some(b'"') => {
                    flush_run!();
                    break;
                }
                Some(b'\\') => {
                    flush_run!();
                    match self.peek() {
                        Some(c @ (b'$' | b'`' | b'"' | b'\\')) => {
                            lit.push(c as char);
                            self.pos += 1;
                        }
                        Some(_) => lit.push('\\'),
                        None => {
                            return Err(ShellParseError::UnterminatedQuote { kind: "double", at })
                        }
                    }
                    run_start = self.pos;
                }
                Some(b'`') => {
                    flush_run!();
                    loop {
                        match self.bump() {
                            None => {
                                return Err(ShellParseError::UnterminatedQuote {
                                    kind: "backtick",
                                    at,
                                })
                            }
                            Some(b'`') => break,
                            Some(b'\\') => {
                                self.pos += 1;
                            }
                            _ => {}
                        }
                    }
                    run_start = self.pos;
                    unsupported = true;
                }
                Some(b'$') => {
                    flush_run!();
                    flush_lit!();
                    match self.lex_dollar() {
                        Segment::Variable(name) => parts.push(DqPart::Var(name)),
                        Segment::Bare(text) => lit.push_str(&text),
                        _ => unsupported = true,
                    }
                    run_start = self.pos;
                }
                Some(_) => {}
            }
        }
        if unsupported {
            return Ok(Segment::Unsupported);
        }
        flush_lit!();
        Ok(Segment::DoubleQuoted(parts))
    }
}

// ---------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------

/// Nested subshell/brace-group levels beyond this degrade to fragments.
/// Keeps emitted JSON within downstream parsers' nesting limits; real
/// payloads sit at one or two levels.
const MAX_GROUP_DEPTH: usize = 20;

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    group_depth: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&TokKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_statement_end(&self, in_group: bool) -> bool {
        match self.peek() {
            None | Some(TokKind::Newline) => true,
            Some(TokKind::CloseParen) if in_group => true,
            Some(TokKind::Word(segs)) if in_group => is_bare(segs, "}"),
            _ => false,
        }
    }

    fn parse_script(&mut self, in_group: bool) -> Vec<AstNode> {
        let mut stmts = Vec::new();
        loop {
            while matches!(self.peek(), Some(TokKind::Newline)) {
                self.pos += 1;
            }
            match self.peek() {
                None => break,
                Some(TokKind::CloseParen) if in_group => break,
                Some(TokKind::Word(segs)) if in_group && is_bare(segs, "}") => break,
                _ => {}
            }
            let before = self.pos;
            stmts.extend(self.parse_statement(in_group));
            if self.pos == before {
                // A token no statement can start with (e.g. a stray `)`
                // at top level): degrade it to a fragment so the parse
                // always advances.
                stmts.push(self.recover_fragment(in_group));
                if self.pos == before {
                    self.pos += 1;
                }
            }
        }
        stmts
    }

    /// One statement: and-or lists joined by `;` into one BASH-SEMI node
    /// wrapping its operands in order. Multiple standalone assignments
    /// flatten into the same node since they execute sequentially.
    fn parse_statement(&mut self, in_group: bool) -> Vec<AstNode> {
        let mut nodes = self.parse_and_or(in_group);
        while matches!(self.peek(), Some(TokKind::Semi)) {
            self.pos += 1;
            if self.at_statement_end(in_group) || matches!(self.peek(), Some(TokKind::Semi)) {
                continue; // trailing or doubled separator
            }
            nodes.extend(self.parse_and_or(in_group));
        }
        match nodes.len() {
            0 | 1 => nodes,
            _ => vec![AstNode::branch("BASH-SEMI", nodes)],
        }
    }

    fn parse_and_or(&mut self, in_group: bool) -> Vec<AstNode> {
        let mut nodes = self.parse_pipeline(in_group);
        loop {
            let tag = match self.peek() {
                Some(TokKind::AndIf) => "BASH-AND-IF",
                Some(TokKind::OrIf) => "BASH-OR-IF",
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_pipeline(in_group);
            nodes = combine_binary(tag, nodes, rhs);
        }
        nodes
    }

    fn parse_pipeline(&mut self, in_group: bool) -> Vec<AstNode> {
        let mut nodes = self.parse_command(in_group);
        while matches!(self.peek(), Some(TokKind::Pipe)) {
            self.pos += 1;
            let rhs = self.parse_command(in_group);
            nodes = combine_binary("BASH-PIPE", nodes, rhs);
        }
        nodes
    }

    /// One command. Returns a vector because a run of standalone
    /// assignments produces one node each.
    fn parse_command(&mut self, in_group: bool) -> Vec<AstNode> {
        match self.peek() {
            None => return Vec::new(),
            Some(TokKind::OpenParen) => {
                if self.group_depth >= MAX_GROUP_DEPTH {
                    return vec![self.recover_fragment(in_group)];
                }
                self.pos += 1;
                self.group_depth += 1;
                let body = self.parse_script(true);
                self.group_depth -= 1;
                if matches!(self.peek(), Some(TokKind::CloseParen)) {
                    self.pos += 1;
                }
                return vec![AstNode::branch(
                    "BASH-SUBSHELL",
                    vec![AstNode::branch("BASH-SCRIPT", body)],
                )];
            }
            Some(TokKind::Word(segs)) if is_bare(segs, "{") => {
                if self.group_depth >= MAX_GROUP_DEPTH {
                    return vec![self.recover_fragment(in_group)];
                }
                self.pos += 1;
                self.group_depth += 1;
                let body = self.parse_script(true);
                self.group_depth -= 1;
                if matches!(self.peek(), Some(TokKind::Word(segs)) if is_bare(segs, "}")) {
                    self.pos += 1;
                }
                return vec![AstNode::branch(
                    "BASH-BRACE-GROUP",
                    vec![AstNode::branch("BASH-SCRIPT", body)],
                )];
            }
            Some(TokKind::Outside) => return vec![self.recover_fragment(in_group)],
            _ => {}
        }

        // Reserved words introduce control flow outside the subset.
        if let Some(TokKind::Word(segs)) = self.peek() {
            if let Some(word) = bare_text(segs) {
                if RESERVED.contains(&word.as_str()) {
                    return vec![self.recover_fragment(in_group)];
                }
            }
        }

        let mut assigns: Vec<AstNode> = Vec::new();
        let mut command: Option<AstNode> = None;
        let mut args: Vec<AstNode> = Vec::new();
        let mut redirects: Vec<AstNode> = Vec::new();

        loop {
            match self.peek() {
                Some(TokKind::Word(_)) => {
                    let tok_end;
                    let segs = match self.bump() {
                        Some(Token {
                            kind: TokKind::Word(s),
                            end,
                            ..
                        }) => {
                            tok_end = *end;
                            s.clone()
                        }
                        _ => unreachable!(),
                    };
                    if command.is_none() {
                        if let Some((lhs, rhs_segs)) = split_assignment(&segs) {
                            assigns.push(self.parse_assignment(lhs, rhs_segs, tok_end));
                            continue;
                        }
                    }
                    let raw = self.raw_for_prev();
                    let node = word_node(&segs, &raw);
                    if command.is_none() {
                        command = Some(node);
                    } else {
                        args.push(node);
                    }
                }
                Some(TokKind::Redirect { .. }) => {
                    let (op, needs_target) = match self.bump() {
                        Some(Token {
                            kind: TokKind::Redirect { op, needs_target },
                            ..
                        }) => (op.clone(), *needs_target),
                        _ => unreachable!(),
                    };
                    let mut node = AstNode::leaf("BASH-REDIRECT", op);
                    if needs_target {
                        if let Some(TokKind::Word(_)) = self.peek() {
                            let segs = match self.bump() {
                                Some(Token {
                                    kind: TokKind::Word(s),
                                    ..
                                }) => s.clone(),
                                _ => unreachable!(),
                            };
                            let raw = self.raw_for_prev();
                            node = node.with_child(word_node(&segs, &raw));
                        }
                    }
                    redirects.push(node);
                }
                _ => break,
            }
        }

        let mut out = assigns;
        if let Some(cmd) = command {
            let mut children = std::mem::take(&mut out);
            children.push(AstNode::branch("BASH-COMMAND-COMMAND", vec![cmd]));
            if !args.is_empty() {
                children.push(AstNode::branch("BASH-COMMAND-ARGS", args));
            }
            children.extend(redirects);
            return vec![AstNode::branch("MAYBE-SEMANTIC-COMMAND", children)];
        }
        out.extend(redirects);
        out
    }

    fn parse_assignment(&mut self, lhs: String, rhs_segs: Vec<Segment>, lhs_end: usize) -> AstNode {
        let lhs_node = AstNode::leaf("BASH-ASSIGN-LHS", lhs);
        // Array form: `NAME=( ... )` — the paren must touch the `=`.
        if rhs_segs.is_empty() {
            if let Some(Token {
                kind: TokKind::OpenParen,
                start,
                ..
            }) = self.tokens.get(self.pos)
            {
                if *start == lhs_end {
                    self.pos += 1;
                    let mut items = Vec::new();
                    loop {
                        match self.peek() {
                            Some(TokKind::Word(_)) => {
                                let segs = match self.bump() {
                                    Some(Token {
                                        kind: TokKind::Word(s),
                                        ..
                                    }) => s.clone(),
                                    _ => unreachable!(),
                                };
                                let raw = self.raw_for_prev();
                                items.push(word_node(&segs, &raw));
                            }
                            Some(TokKind::Newline) => {
                                self.pos += 1;
                            }
                            Some(TokKind::CloseParen) => {
                                self.pos += 1;
                                break;
                            }
                            _ => break, // anything stranger ends the array
                        }
                    }
                    return AstNode::branch(
                        "BASH-ASSIGN",
                        vec![
                            lhs_node,
                            AstNode::branch(
                                "BASH-ASSIGN-RHS",
                                vec![AstNode::branch("BASH-ARRAY", items)],
                            ),
                        ],
                    );
                }
            }
        }
        let rhs_children = if rhs_segs.is_empty() {
            Vec::new()
        } else {
            let raw = raw_of_segments(&rhs_segs);
            vec![word_node(&rhs_segs, &raw)]
        };
        AstNode::branch(
            "BASH-ASSIGN",
            vec![lhs_node, AstNode::branch("BASH-ASSIGN-RHS", rhs_children)],
        )
    }

    /// Raw source for the token just consumed.
    fn raw_for_prev(&self) -> String {
        let tok = &self.tokens[self.pos - 1];
        self.src[tok.start..tok.end].to_string()
    }

    /// Consumes to the next top-level separator and returns the raw text
    /// as an UNKNOWN-BASH-FRAGMENT leaf.
    fn recover_fragment(&mut self, in_group: bool) -> AstNode {
        let start_tok = self.pos;
        if start_tok >= self.tokens.len() {
            return AstNode::leaf("UNKNOWN-BASH-FRAGMENT", "");
        }
        let mut depth = 0usize;
        while let Some(kind) = self.peek() {
            match kind {
                TokKind::Semi
                | TokKind::AndIf
                | TokKind::OrIf
                | TokKind::Pipe
                | TokKind::Newline
                    if depth == 0 =>
                {
                    break
                }
                TokKind::CloseParen if depth == 0 && in_group => break,
                TokKind::OpenParen => {
                    depth += 1;
                    self.pos += 1;
                }
                TokKind::CloseParen => {
                    depth = depth.saturating_sub(1);
                    self.pos += 1;
                }
                _ => {
                    self.pos += 1;
                }
            }
        }
        let start = self.tokens[start_tok].start;
        let end = self
            .tokens
            .get(self.pos.saturating_sub(1))
            .map(|t| t.end)
            .unwrap_or(start);
        AstNode::leaf("UNKNOWN-BASH-FRAGMENT", self.src[start..end].trim())
    }
}

/// Joins two operand groups under a connector node. Runs of the same
/// operator flatten into one n-ary node (`a && b && c` has three
/// operands), which keeps long chains shallow; mixed operators nest
/// left-associatively like the shell evaluates them.
fn combine_binary(tag: &str, lhs: Vec<AstNode>, rhs: Vec<AstNode>) -> Vec<AstNode> {
    // Operands that came back as several nodes (standalone assignment
    // runs) fold into a BASH-SEMI so each side is a single operand.
    let fold = |mut nodes: Vec<AstNode>| -> Option<AstNode> {
        match nodes.len() {
            0 => None,
            1 => nodes.pop(),
            _ => Some(AstNode::branch("BASH-SEMI", nodes)),
        }
    };
    match (fold(lhs), fold(rhs)) {
        (Some(l), Some(r)) => {
            if l.node_type() == tag {
                vec![l.with_child(r)]
            } else {
                vec![AstNode::branch(tag, vec![l, r])]
            }
        }
        (Some(l), None) => vec![l],
        (None, Some(r)) => vec![r],
        (None, None) => Vec::new(),
    }
}

fn is_bare(segs: &[Segment], text: &str) -> bool {
    matches!(segs, [Segment::Bare(t)] if t == text)
}

fn bare_text(segs: &[Segment]) -> Option<String> {
    match segs {
        [Segment::Bare(t)] => Some(t.clone()),
        _ => None,
    }
}

/// Splits `NAME=rest` (or `NAME+=rest`) at the first `=` of the leading
/// bare segment.
fn split_assignment(segs: &[Segment]) -> Option<(String, Vec<Segment>)> {
    let Segment::Bare(first) = segs.first()? else {
        return None;
    };
    let eq = first.find('=')?;
    let name = first[..eq].strip_suffix('+').unwrap_or(&first[..eq]);
    if name.is_empty()
        || !name.chars().next().unwrap().is_ascii_alphabetic() && !name.starts_with('_')
        || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return None;
    }
    let mut rhs = Vec::new();
    let tail = &first[eq + 1..];
    if !tail.is_empty() {
        rhs.push(Segment::Bare(tail.to_string()));
    }
    rhs.extend(segs[1..].iter().cloned());
    Some((first[..eq].to_string(), rhs))
}

fn raw_of_segments(segs: &[Segment]) -> String {
    let mut out = String::new();
    for seg in segs {
        match seg {
            Segment::Bare(t) => out.push_str(t),
            Segment::SingleQuoted(t) => {
                out.push('\'');
                out.push_str(t);
                out.push('\'');
            }
            Segment::DoubleQuoted(parts) => {
                out.push('"');
                for p in parts {
                    match p {
                        DqPart::Lit(t) => out.push_str(t),
                        DqPart::Var(n) => {
                            out.push('$');
                            out.push_str(n);
                        }
                    }
                }
                out.push('"');
            }
            Segment::Variable(n) => {
                out.push('$');
                out.push_str(n);
            }
            Segment::Unsupported => out.push('?'),
        }
    }
    out
}

/// Builds the tree node for one word.
///
/// Single-segment words keep their quoting kind; words mixing literal
/// pieces collapse to a BASH-LITERAL holding the concatenated text; any
/// unsupported construct turns the word into an UNKNOWN-BASH-FRAGMENT
/// carrying the raw source.
fn word_node(segs: &[Segment], raw: &str) -> AstNode {
    if segs.iter().any(|s| matches!(s, Segment::Unsupported)) {
        return AstNode::leaf("UNKNOWN-BASH-FRAGMENT", raw);
    }
    match segs {
        [] => AstNode::leaf("BASH-LITERAL", ""),
        [Segment::Bare(t)] => AstNode::leaf("BASH-LITERAL", t.clone()),
        [Segment::SingleQuoted(t)] => AstNode::leaf("BASH-SINGLE-QUOTED", t.clone()),
        [Segment::Variable(n)] => AstNode::leaf("BASH-VARIABLE", n.clone()),
        [Segment::DoubleQuoted(parts)] => dq_node(parts),
        _ => {
            if segs.iter().any(|s| matches!(s, Segment::Variable(_))) {
                // Mixed word with interpolation, e.g. `$HOME/bin`: keep
                // the raw spelling so downstream consumers see the `$`.
                AstNode::leaf("BASH-LITERAL", raw)
            } else {
                let mut text = String::new();
                for seg in segs {
                    match seg {
                        Segment::Bare(t) | Segment::SingleQuoted(t) => text.push_str(t),
                        Segment::DoubleQuoted(parts) => {
                            for p in parts {
                                if let DqPart::Lit(t) = p {
                                    text.push_str(t);
                                }
                            }
                        }
                        _ => {}
                    }
                }
                AstNode::leaf("BASH-LITERAL", text)
            }
        }
    }
}

fn dq_node(parts: &[DqPart]) -> AstNode {
    AstNode::branch(
        "BASH-DOUBLE-QUOTED",
        parts
            .iter()
            .map(|p| match p {
                DqPart::Lit(t) => AstNode::leaf("BASH-LITERAL", t.clone()),
                DqPart::Var(n) => AstNode::leaf("BASH-VARIABLE", n.clone()),
            })
            .collect(),
    )
}

/// Parses one RUN payload into a BASH-SCRIPT tree.
pub fn parse_shell(payload: &str) -> Result<AstNode, ShellParseError> {
    let tokens = Lexer::new(payload).tokenize()?;
    let mut parser = Parser {
        src: payload,
        tokens,
        pos: 0,
        group_depth: 0,
    };
    let stmts = parser.parse_script(false);
    Ok(AstNode::branch("BASH-SCRIPT", stmts))
}

/// A RUN whose payload could not be shell-parsed: the literal is kept and
/// the document flagged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShellFlag {
    pub path: NodePath,
    pub error: ShellParseError,
}

#[derive(Debug, Clone)]
pub struct ExpandOutcome {
    pub doc: DocumentRoot,
    pub flags: Vec<ShellFlag>,
}

/// Phase II: replaces the BASH-LITERAL payload of every shell-form RUN
/// with its parsed BASH-SCRIPT. Exec-form RUNs and everything outside
/// DOCKER-RUN are untouched. Parse failures keep the raw literal and are
/// reported as flags; the transformation itself never fails.
pub fn expand_run_nodes(doc: &DocumentRoot) -> ExpandOutcome {
    let mut root = doc.root().clone();
    let mut flags = Vec::new();
    let targets: Vec<NodePath> = root
        .find_subtrees(|n| n.node_type() == "DOCKER-RUN")
        .into_iter()
        .filter(|(_, n)| n.children().len() == 1 && n.children()[0].node_type() == "BASH-LITERAL")
        .map(|(path, _)| path)
        .collect();
    for path in targets {
        let payload = root
            .get(&path)
            .and_then(|n| n.children().first())
            .and_then(|c| c.value())
            .unwrap_or("")
            .to_string();
        match parse_shell(&payload) {
            Ok(script) => {
                let run = AstNode::branch("DOCKER-RUN", vec![script]);
                root = root
                    .replace_subtree(&path, run)
                    .expect("path from traversal");
            }
            Err(error) => flags.push(ShellFlag { path, error }),
        }
    }
    ExpandOutcome {
        doc: doc.map_root(root).expect("root type unchanged"),
        flags,
    }
}
