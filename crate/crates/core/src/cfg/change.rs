//! Atomic CFG edits, batch application, graph diffing and the change file
//! format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::text::{parse_attr, parse_id, split_head, strip_comment, ParseError};
use super::{SuperGraph, VertexAttribute, VertexId};

/// The eight shapes an edit can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChangeKind {
    AddEdgeExisting,
    AddSourceNode,
    AddDestNode,
    DeleteEdgeExisting,
    DeleteSourceNode,
    DeleteDestNode,
    ChangeSourceNode,
    ChangeDestNode,
}

impl ChangeKind {
    pub const ALL: [ChangeKind; 8] = [
        ChangeKind::AddEdgeExisting,
        ChangeKind::AddSourceNode,
        ChangeKind::AddDestNode,
        ChangeKind::DeleteEdgeExisting,
        ChangeKind::DeleteSourceNode,
        ChangeKind::DeleteDestNode,
        ChangeKind::ChangeSourceNode,
        ChangeKind::ChangeDestNode,
    ];
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One edit of a supergraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomicChange {
    /// New edge between two vertices that already exist.
    AddEdgeExisting {
        src: VertexId,
        dst: VertexId,
    },
    /// New vertex `src` together with its edge to the existing `dst`.
    AddSourceNode {
        src: VertexId,
        attr: VertexAttribute,
        dst: VertexId,
    },
    /// New vertex `dst`, reached from the existing `src` (or isolated).
    AddDestNode {
        src: Option<VertexId>,
        dst: VertexId,
        attr: VertexAttribute,
    },
    DeleteEdgeExisting {
        src: VertexId,
        dst: VertexId,
    },
    /// Vertex `src` is removed; this records its edge to `dst`.
    DeleteSourceNode {
        src: VertexId,
        dst: VertexId,
    },
    /// Vertex `dst` is removed; this records its edge from `src` (if any).
    DeleteDestNode {
        src: Option<VertexId>,
        dst: VertexId,
    },
    /// Statements of a vertex with successors changed.
    ChangeSourceNode {
        node: VertexId,
        attr: VertexAttribute,
    },
    /// Statements of a vertex without successors changed.
    ChangeDestNode {
        node: VertexId,
        attr: VertexAttribute,
    },
}

impl AtomicChange {
    pub fn kind(&self) -> ChangeKind {
        match self {
            AtomicChange::AddEdgeExisting { .. } => ChangeKind::AddEdgeExisting,
            AtomicChange::AddSourceNode { .. } => ChangeKind::AddSourceNode,
            AtomicChange::AddDestNode { .. } => ChangeKind::AddDestNode,
            AtomicChange::DeleteEdgeExisting { .. } => ChangeKind::DeleteEdgeExisting,
            AtomicChange::DeleteSourceNode { .. } => ChangeKind::DeleteSourceNode,
            AtomicChange::DeleteDestNode { .. } => ChangeKind::DeleteDestNode,
            AtomicChange::ChangeSourceNode { .. } => ChangeKind::ChangeSourceNode,
            AtomicChange::ChangeDestNode { .. } => ChangeKind::ChangeDestNode,
        }
    }

    /// The edge this change adds or removes, if any.
    pub fn edge(&self) -> Option<(VertexId, VertexId)> {
        match *self {
            AtomicChange::AddEdgeExisting { src, dst }
            | AtomicChange::AddSourceNode { src, dst, .. }
            | AtomicChange::DeleteEdgeExisting { src, dst }
            | AtomicChange::DeleteSourceNode { src, dst } => Some((src, dst)),
            AtomicChange::AddDestNode { src, dst, .. }
            | AtomicChange::DeleteDestNode { src, dst } => src.map(|s| (s, dst)),
            AtomicChange::ChangeSourceNode { .. } | AtomicChange::ChangeDestNode { .. } => None,
        }
    }

    /// The vertex this change removes, if any.
    pub fn deleted_vertex(&self) -> Option<VertexId> {
        match *self {
            AtomicChange::DeleteSourceNode { src, .. } => Some(src),
            AtomicChange::DeleteDestNode { dst, .. } => Some(dst),
            _ => None,
        }
    }
}

impl fmt::Display for AtomicChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<VertexId>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        match self {
            AtomicChange::AddEdgeExisting { src, dst } => write!(f, "AddEdgeExisting({src},{dst})"),
            AtomicChange::AddSourceNode { src, dst, .. } => write!(f, "AddSourceNode({src},{dst})"),
            AtomicChange::AddDestNode { src, dst, .. } => {
                write!(f, "AddDestNode({},{dst})", opt(*src))
            }
            AtomicChange::DeleteEdgeExisting { src, dst } => {
                write!(f, "DeleteEdgeExisting({src},{dst})")
            }
            AtomicChange::DeleteSourceNode { src, dst } => {
                write!(f, "DeleteSourceNode({src},{dst})")
            }
            AtomicChange::DeleteDestNode { src, dst } => {
                write!(f, "DeleteDestNode({},{dst})", opt(*src))
            }
            AtomicChange::ChangeSourceNode { node, .. } => write!(f, "ChangeSourceNode({node})"),
            AtomicChange::ChangeDestNode { node, .. } => write!(f, "ChangeDestNode({node})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChangeError {
    #[error("change #{index} ({change}) cannot be applied: {reason}")]
    Conflict {
        index: usize,
        change: String,
        reason: String,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: change does not match the updated graph: {reason}")]
    Inconsistent { line: usize, reason: String },
}

/// An ordered sequence of atomic changes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeBatch(pub Vec<AtomicChange>);

impl ChangeBatch {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AtomicChange> {
        self.0.iter()
    }

    pub fn kinds(&self) -> BTreeSet<ChangeKind> {
        self.0.iter().map(AtomicChange::kind).collect()
    }

    /// Vertices removed by the batch.
    pub fn deleted_vertices(&self) -> BTreeSet<VertexId> {
        self.0
            .iter()
            .filter_map(AtomicChange::deleted_vertex)
            .collect()
    }

    /// Parse a change file. `new_graph` is the graph after the edits; it is
    /// used to classify `CN` lines and to check the file against it.
    ///
    /// ```text
    /// DE 2 7        # edge of a deleted vertex
    /// DN 2
    /// CN 5 def z d9
    /// AN 9 use z    # new vertex; its edges follow
    /// AE 9 4
    /// AE 1 4
    /// ```
    pub fn parse(text: &str, new_graph: &SuperGraph) -> Result<ChangeBatch, ChangeError> {
        enum Line {
            AddEdge(VertexId, VertexId),
            AddNode(VertexId),
            DelEdge(VertexId, VertexId),
            DelNode(VertexId),
            Change(VertexId, VertexAttribute),
        }

        let inconsistent = |line: usize, reason: String| ChangeError::Inconsistent { line, reason };

        // First pass: tokenize and collect the node declarations, which
        // decide how edge lines are classified.
        let mut lines = Vec::new();
        let mut added: BTreeMap<VertexId, VertexAttribute> = BTreeMap::new();
        let mut deleted: BTreeSet<VertexId> = BTreeSet::new();
        let mut add_mentions = BTreeSet::new();
        let mut del_mentions = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw);
            if content.is_empty() {
                continue;
            }
            let (kw, id, rest) = split_head(content);
            let edge = |rest: &str| -> Result<(VertexId, VertexId), ParseError> {
                let src = parse_id(id, line)?;
                let mut tail = rest.split_whitespace();
                let dst = parse_id(tail.next(), line)?;
                if tail.next().is_some() {
                    return Err(ParseError::malformed(line, "trailing tokens after edge"));
                }
                Ok((src, dst))
            };
            let parsed = match kw {
                "AE" => {
                    let (s, d) = edge(rest)?;
                    add_mentions.extend([s, d]);
                    Line::AddEdge(s, d)
                }
                "DE" => {
                    let (s, d) = edge(rest)?;
                    del_mentions.extend([s, d]);
                    Line::DelEdge(s, d)
                }
                "AN" => {
                    let v = parse_id(id, line)?;
                    let attr = parse_attr(rest, line)?;
                    if added.insert(v, attr).is_some() {
                        return Err(inconsistent(line, format!("vertex {v} added twice")));
                    }
                    Line::AddNode(v)
                }
                "DN" => {
                    let v = parse_id(id, line)?;
                    if !rest.trim().is_empty() {
                        return Err(ParseError::malformed(line, "trailing tokens after DN").into());
                    }
                    if !deleted.insert(v) {
                        return Err(inconsistent(line, format!("vertex {v} deleted twice")));
                    }
                    Line::DelNode(v)
                }
                "CN" => {
                    let v = parse_id(id, line)?;
                    Line::Change(v, parse_attr(rest, line)?)
                }
                other => {
                    return Err(
                        ParseError::malformed(line, format!("unknown change `{other}`")).into(),
                    )
                }
            };
            lines.push((line, parsed));
        }

        // Second pass: classify, in file order.
        let mut out = Vec::new();
        let mut created: BTreeSet<VertexId> = BTreeSet::new();
        for (line, parsed) in lines {
            match parsed {
                Line::AddEdge(src, dst) => {
                    if !new_graph.has_edge(src, dst) {
                        return Err(inconsistent(
                            line,
                            format!("edge {src} -> {dst} is not in the graph"),
                        ));
                    }
                    let pending = |v: VertexId, created: &BTreeSet<VertexId>| {
                        added.contains_key(&v) && !created.contains(&v)
                    };
                    let (ps, pd) = (pending(src, &created), pending(dst, &created));
                    if ps && pd {
                        out.push(AtomicChange::AddDestNode {
                            src: None,
                            dst,
                            attr: added[&dst].clone(),
                        });
                        created.insert(dst);
                        if src == dst {
                            out.push(AtomicChange::AddEdgeExisting { src, dst });
                        } else {
                            out.push(AtomicChange::AddSourceNode {
                                src,
                                attr: added[&src].clone(),
                                dst,
                            });
                            created.insert(src);
                        }
                    } else if ps {
                        out.push(AtomicChange::AddSourceNode {
                            src,
                            attr: added[&src].clone(),
                            dst,
                        });
                        created.insert(src);
                    } else if pd {
                        out.push(AtomicChange::AddDestNode {
                            src: Some(src),
                            dst,
                            attr: added[&dst].clone(),
                        });
                        created.insert(dst);
                    } else {
                        out.push(AtomicChange::AddEdgeExisting { src, dst });
                    }
                }
                Line::AddNode(v) => {
                    if new_graph.attr(v) != Some(&added[&v]) {
                        return Err(inconsistent(
                            line,
                            format!("vertex {v} differs from the graph"),
                        ));
                    }
                    if !add_mentions.contains(&v) {
                        out.push(AtomicChange::AddDestNode {
                            src: None,
                            dst: v,
                            attr: added[&v].clone(),
                        });
                        created.insert(v);
                    }
                }
                Line::DelEdge(src, dst) => {
                    if new_graph.has_edge(src, dst) {
                        return Err(inconsistent(
                            line,
                            format!("edge {src} -> {dst} is still in the graph"),
                        ));
                    }
                    out.push(if deleted.contains(&src) {
                        AtomicChange::DeleteSourceNode { src, dst }
                    } else if deleted.contains(&dst) {
                        AtomicChange::DeleteDestNode {
                            src: Some(src),
                            dst,
                        }
                    } else {
                        AtomicChange::DeleteEdgeExisting { src, dst }
                    });
                }
                Line::DelNode(v) => {
                    if new_graph.contains(v) {
                        return Err(inconsistent(
                            line,
                            format!("vertex {v} is still in the graph"),
                        ));
                    }
                    if !del_mentions.contains(&v) {
                        out.push(AtomicChange::DeleteDestNode { src: None, dst: v });
                    }
                }
                Line::Change(node, attr) => {
                    if new_graph.attr(node) != Some(&attr) {
                        return Err(inconsistent(
                            line,
                            format!("vertex {node} differs from the graph"),
                        ));
                    }
                    out.push(if new_graph.succs(node).is_empty() {
                        AtomicChange::ChangeDestNode { node, attr }
                    } else {
                        AtomicChange::ChangeSourceNode { node, attr }
                    });
                }
            }
        }
        Ok(ChangeBatch(out))
    }

    /// Render in the change file format. For batches produced by
    /// [`diff_graphs`], `ChangeBatch::parse(&b.render(), new)` returns `b`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let last_del_mention: BTreeMap<VertexId, usize> = self
            .0
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                c.deleted_vertex()
                    .filter(|_| c.edge().is_some())
                    .map(|v| (v, i))
            })
            .collect();
        let mut declared = BTreeSet::new();
        let mut declare = |out: &mut String, v: VertexId, attr: &VertexAttribute| {
            if declared.insert(v) {
                let _ = writeln!(out, "AN {v} {attr}");
            }
        };
        for (i, change) in self.0.iter().enumerate() {
            match change {
                AtomicChange::AddEdgeExisting { src, dst } => {
                    let _ = writeln!(out, "AE {src} {dst}");
                }
                AtomicChange::AddSourceNode { src, attr, dst } => {
                    declare(&mut out, *src, attr);
                    let _ = writeln!(out, "AE {src} {dst}");
                }
                AtomicChange::AddDestNode { src, dst, attr } => {
                    declare(&mut out, *dst, attr);
                    if let Some(src) = src {
                        let _ = writeln!(out, "AE {src} {dst}");
                    }
                }
                AtomicChange::DeleteEdgeExisting { src, dst }
                | AtomicChange::DeleteSourceNode { src, dst }
                | AtomicChange::DeleteDestNode {
                    src: Some(src),
                    dst,
                } => {
                    let _ = writeln!(out, "DE {src} {dst}");
                }
                AtomicChange::DeleteDestNode { src: None, dst } => {
                    if !last_del_mention.contains_key(dst) {
                        let _ = writeln!(out, "DN {dst}");
                    }
                }
                AtomicChange::ChangeSourceNode { node, attr }
                | AtomicChange::ChangeDestNode { node, attr } => {
                    let _ = writeln!(out, "CN {node} {attr}");
                }
            }
            for (v, last) in &last_del_mention {
                if *last == i {
                    let _ = writeln!(out, "DN {v}");
                }
            }
        }
        out
    }
}

impl FromIterator<AtomicChange> for ChangeBatch {
    fn from_iter<T: IntoIterator<Item = AtomicChange>>(iter: T) -> Self {
        ChangeBatch(iter.into_iter().collect())
    }
}

/// Apply `batch` to `graph`. Deleted vertices are removed at the end together
/// with any incident edge the batch did not mention; entries are recomputed.
pub fn apply_changes(graph: &SuperGraph, batch: &ChangeBatch) -> Result<SuperGraph, ChangeError> {
    let mut vertices = graph.vertices().clone();
    let mut edges = graph.edges().clone();
    let mut doomed = BTreeSet::new();

    for (index, change) in batch.iter().enumerate() {
        let conflict = |reason: String| ChangeError::Conflict {
            index,
            change: change.to_string(),
            reason,
        };
        let live = |v: &VertexId, vertices: &BTreeMap<VertexId, VertexAttribute>| {
            vertices.contains_key(v) && !doomed.contains(v)
        };
        let need_live = |v: VertexId, vertices: &BTreeMap<VertexId, VertexAttribute>| {
            if live(&v, vertices) {
                Ok(())
            } else {
                Err(conflict(format!("vertex {v} does not exist")))
            }
        };
        let need_absent = |v: VertexId, vertices: &BTreeMap<VertexId, VertexAttribute>| {
            if vertices.contains_key(&v) {
                Err(conflict(format!("vertex {v} already exists")))
            } else {
                Ok(())
            }
        };
        let add_edge = |edges: &mut BTreeSet<(VertexId, VertexId)>, s, d| {
            if edges.insert((s, d)) {
                Ok(())
            } else {
                Err(conflict(format!("edge {s} -> {d} already exists")))
            }
        };
        match change {
            AtomicChange::AddEdgeExisting { src, dst } => {
                need_live(*src, &vertices)?;
                need_live(*dst, &vertices)?;
                add_edge(&mut edges, *src, *dst)?;
            }
            AtomicChange::AddSourceNode { src, attr, dst } => {
                need_absent(*src, &vertices)?;
                need_live(*dst, &vertices)?;
                vertices.insert(*src, attr.clone());
                add_edge(&mut edges, *src, *dst)?;
            }
            AtomicChange::AddDestNode { src, dst, attr } => {
                need_absent(*dst, &vertices)?;
                if let Some(src) = src {
                    need_live(*src, &vertices)?;
                }
                vertices.insert(*dst, attr.clone());
                if let Some(src) = src {
                    add_edge(&mut edges, *src, *dst)?;
                }
            }
            AtomicChange::DeleteEdgeExisting { .. }
            | AtomicChange::DeleteSourceNode { .. }
            | AtomicChange::DeleteDestNode { .. } => {
                if let Some((s, d)) = change.edge() {
                    if !edges.remove(&(s, d)) {
                        return Err(conflict(format!("edge {s} -> {d} does not exist")));
                    }
                }
                if let Some(v) = change.deleted_vertex() {
                    if !vertices.contains_key(&v) {
                        return Err(conflict(format!("vertex {v} does not exist")));
                    }
                    doomed.insert(v);
                }
            }
            AtomicChange::ChangeSourceNode { node, attr }
            | AtomicChange::ChangeDestNode { node, attr } => {
                need_live(*node, &vertices)?;
                vertices.insert(*node, attr.clone());
            }
        }
    }

    for v in &doomed {
        vertices.remove(v);
    }
    edges.retain(|(s, d)| !doomed.contains(s) && !doomed.contains(d));
    Ok(SuperGraph::new(vertices, edges).expect("edits keep edges closed over vertices"))
}

/// Compute a batch turning `old` into `new`. Vertices are matched by id.
///
/// Order: deletions, then statement changes, then additions. A vertex counts
/// as changed when its attribute differs or its resolved entry status does.
pub fn diff_graphs(old: &SuperGraph, new: &SuperGraph) -> ChangeBatch {
    let mut out = Vec::new();

    let deleted: BTreeSet<VertexId> = old.vertex_ids().filter(|v| !new.contains(*v)).collect();
    let mut mentioned = BTreeSet::new();
    for &(src, dst) in old.edges().difference(new.edges()) {
        if deleted.contains(&src) {
            mentioned.insert(src);
            out.push(AtomicChange::DeleteSourceNode { src, dst });
        } else if deleted.contains(&dst) {
            mentioned.insert(dst);
            out.push(AtomicChange::DeleteDestNode {
                src: Some(src),
                dst,
            });
        } else {
            out.push(AtomicChange::DeleteEdgeExisting { src, dst });
        }
    }
    for &v in deleted.difference(&mentioned) {
        out.push(AtomicChange::DeleteDestNode { src: None, dst: v });
    }

    for (&node, attr) in new.vertices() {
        let Some(old_attr) = old.attr(node) else {
            continue;
        };
        if old_attr != attr || old.is_entry(node) != new.is_entry(node) {
            let attr = attr.clone();
            out.push(if new.succs(node).is_empty() {
                AtomicChange::ChangeDestNode { node, attr }
            } else {
                AtomicChange::ChangeSourceNode { node, attr }
            });
        }
    }

    let added: BTreeSet<VertexId> = new.vertex_ids().filter(|v| !old.contains(*v)).collect();
    let mut created = BTreeSet::new();
    let attr = |v: VertexId| {
        new.attr(v)
            .expect("added vertex is in the new graph")
            .clone()
    };
    for &(src, dst) in new.edges().difference(old.edges()) {
        let ps = added.contains(&src) && !created.contains(&src);
        let pd = added.contains(&dst) && !created.contains(&dst);
        if ps && pd {
            out.push(AtomicChange::AddDestNode {
                src: None,
                dst,
                attr: attr(dst),
            });
            created.insert(dst);
            if src == dst {
                out.push(AtomicChange::AddEdgeExisting { src, dst });
            } else {
                out.push(AtomicChange::AddSourceNode {
                    src,
                    attr: attr(src),
                    dst,
                });
                created.insert(src);
            }
        } else if ps {
            out.push(AtomicChange::AddSourceNode {
                src,
                attr: attr(src),
                dst,
            });
            created.insert(src);
        } else if pd {
            out.push(AtomicChange::AddDestNode {
                src: Some(src),
                dst,
                attr: attr(dst),
            });
            created.insert(dst);
        } else {
            out.push(AtomicChange::AddEdgeExisting { src, dst });
        }
    }
    for &v in added.difference(&created) {
        out.push(AtomicChange::AddDestNode {
            src: None,
            dst: v,
            attr: attr(v),
        });
    }

    ChangeBatch(out)
}
