//! Line-oriented text format for graphs.
//!
//! ```text
//! # comment
//! V 1 entry def x d1
//! V 2 assign y = x + 1 ; use y
//! E 1 2
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::{Operand, Stmt, Stmts, SuperGraph, VertexAttribute, VertexId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: duplicate vertex {id}")]
    DuplicateVertex { id: VertexId, line: usize },
    #[error("line {line}: unknown vertex {id}")]
    UnknownVertex { id: VertexId, line: usize },
}

impl ParseError {
    pub(crate) fn malformed(line: usize, msg: impl Into<String>) -> Self {
        ParseError::Malformed {
            line,
            msg: msg.into(),
        }
    }
}

/// Strip a trailing `#` comment and surrounding whitespace.
pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => line[..i].trim(),
        None => line.trim(),
    }
}

pub(crate) fn parse_id(tok: Option<&str>, line: usize) -> Result<VertexId, ParseError> {
    let tok = tok.ok_or_else(|| ParseError::malformed(line, "missing vertex id"))?;
    tok.parse::<u64>()
        .map(VertexId)
        .map_err(|_| ParseError::malformed(line, format!("invalid vertex id `{tok}`")))
}

fn parse_operand(tok: &str) -> Operand {
    match tok.parse::<i64>() {
        Ok(c) => Operand::Const(c),
        Err(_) => Operand::Var(tok.to_string()),
    }
}

fn is_ident(tok: &str) -> bool {
    let mut chars = tok.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_stmt(text: &str) -> Result<Stmt, String> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let ident = |t: &str| -> Result<String, String> {
        if is_ident(t) {
            Ok(t.to_string())
        } else {
            Err(format!("invalid variable name `{t}`"))
        }
    };
    let operand = |t: &str| -> Result<Operand, String> {
        if t.parse::<i64>().is_ok() || is_ident(t) {
            Ok(parse_operand(t))
        } else {
            Err(format!("invalid operand `{t}`"))
        }
    };
    match toks.as_slice() {
        ["def", var, def_id] => Ok(Stmt::Def {
            var: ident(var)?,
            def_id: def_id.to_string(),
        }),
        ["use", var] => Ok(Stmt::Use { var: ident(var)? }),
        ["assign", dst, "=", value] => Ok(Stmt::Assign {
            dst: ident(dst)?,
            value: operand(value)?,
        }),
        ["assign", dst, "=", lhs, op, rhs] => Ok(Stmt::AssignOp {
            dst: ident(dst)?,
            lhs: operand(lhs)?,
            op: op.to_string(),
            rhs: operand(rhs)?,
        }),
        ["access", block] => block
            .parse::<u64>()
            .map(|block| Stmt::Access { block })
            .map_err(|_| format!("invalid block id `{block}`")),
        [] => Err("empty statement".to_string()),
        [kw, ..] => Err(format!("malformed statement starting with `{kw}`")),
    }
}

/// Parse a statement payload: `nop`, or statements separated by `;`.
pub fn parse_stmts(text: &str) -> Result<Stmts, String> {
    let text = text.trim();
    if text == "nop" {
        return Ok(Stmts::nop());
    }
    text.split(';')
        .map(parse_stmt)
        .collect::<Result<Vec<_>, _>>()
        .map(Stmts)
}

/// Parse `[entry] <payload>` after the id of a `V`, `AN` or `CN` line.
pub(crate) fn parse_attr(rest: &str, line: usize) -> Result<VertexAttribute, ParseError> {
    let rest = rest.trim();
    let (entry, payload) = match rest.strip_prefix("entry") {
        Some(tail) if tail.is_empty() || tail.starts_with(char::is_whitespace) => (true, tail),
        _ => (false, rest),
    };
    if payload.trim().is_empty() {
        return Err(ParseError::malformed(line, "missing statement payload"));
    }
    let stmts = parse_stmts(payload).map_err(|m| ParseError::malformed(line, m))?;
    Ok(VertexAttribute { stmts, entry })
}

/// Split `<keyword> <id> <rest>` into its parts.
pub(crate) fn split_head(text: &str) -> (&str, Option<&str>, &str) {
    let mut it = text.splitn(3, char::is_whitespace);
    let kw = it.next().unwrap_or("");
    let id = it.next().filter(|s| !s.is_empty());
    let rest = it.next().unwrap_or("");
    (kw, id, rest)
}

impl SuperGraph {
    pub fn parse(text: &str) -> Result<SuperGraph, ParseError> {
        let mut vertices = BTreeMap::new();
        let mut edges = BTreeSet::new();
        let mut edge_lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw);
            if content.is_empty() {
                continue;
            }
            let (kw, id, rest) = split_head(content);
            match kw {
                "V" => {
                    let id = parse_id(id, line)?;
                    let attr = parse_attr(rest, line)?;
                    if vertices.insert(id, attr).is_some() {
                        return Err(ParseError::DuplicateVertex { id, line });
                    }
                }
                "E" => {
                    let src = parse_id(id, line)?;
                    let mut tail = rest.split_whitespace();
                    let dst = parse_id(tail.next(), line)?;
                    if tail.next().is_some() {
                        return Err(ParseError::malformed(line, "trailing tokens after edge"));
                    }
                    edges.insert((src, dst));
                    edge_lines.push((src, dst, line));
                }
                other => {
                    return Err(ParseError::malformed(
                        line,
                        format!("unknown record `{other}`"),
                    ))
                }
            }
        }
        for (src, dst, line) in edge_lines {
            for id in [src, dst] {
                if !vertices.contains_key(&id) {
                    return Err(ParseError::UnknownVertex { id, line });
                }
            }
        }
        Ok(SuperGraph::new(vertices, edges).expect("edges validated above"))
    }

    /// Render in the text format; `parse(render(g)) == g` for graphs built
    /// with [`SuperGraph::new`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (id, attr) in self.vertices() {
            let _ = writeln!(out, "V {id} {attr}");
        }
        for (src, dst) in self.edges() {
            let _ = writeln!(out, "E {src} {dst}");
        }
        out
    }
}
