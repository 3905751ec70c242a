//! Interprocedural supergraph model, its text format, and change batches.

mod change;
mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use change::{apply_changes, diff_graphs, AtomicChange, ChangeBatch, ChangeError, ChangeKind};
pub use text::{parse_stmts, ParseError};

/// Stable identifier of a program point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub u64);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for VertexId {
    fn from(v: u64) -> Self {
        VertexId(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Var(String),
    Const(i64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Const(c) => write!(f, "{c}"),
        }
    }
}

/// One statement attached to a vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stmt {
    /// `def <var> <defid>`: a named definition of `var`.
    Def { var: String, def_id: String },
    /// `use <var>`
    Use { var: String },
    /// `assign <var> = <operand>`
    Assign { dst: String, value: Operand },
    /// `assign <var> = <operand> <op> <operand>`; `op` is kept verbatim and
    /// interpreted by the analysis.
    AssignOp {
        dst: String,
        lhs: Operand,
        op: String,
        rhs: Operand,
    },
    /// `access <blockid>`: a memory access to a cache block.
    Access { block: u64 },
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Def { var, def_id } => write!(f, "def {var} {def_id}"),
            Stmt::Use { var } => write!(f, "use {var}"),
            Stmt::Assign { dst, value } => write!(f, "assign {dst} = {value}"),
            Stmt::AssignOp { dst, lhs, op, rhs } => write!(f, "assign {dst} = {lhs} {op} {rhs}"),
            Stmt::Access { block } => write!(f, "access {block}"),
        }
    }
}

/// Ordered statements of one vertex. Empty means a no-op vertex.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stmts(pub Vec<Stmt>);

impl Stmts {
    pub fn nop() -> Self {
        Stmts(Vec::new())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Stmt> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<Stmt>> for Stmts {
    fn from(v: Vec<Stmt>) -> Self {
        Stmts(v)
    }
}

impl fmt::Display for Stmts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("nop");
        }
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ; ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VertexAttribute {
    pub stmts: Stmts,
    /// Explicitly flagged entry.
    pub entry: bool,
}

impl VertexAttribute {
    pub fn new(stmts: impl Into<Stmts>) -> Self {
        VertexAttribute {
            stmts: stmts.into(),
            entry: false,
        }
    }

    pub fn entry(stmts: impl Into<Stmts>) -> Self {
        VertexAttribute {
            stmts: stmts.into(),
            entry: true,
        }
    }
}

impl fmt::Display for VertexAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entry {
            f.write_str("entry ")?;
        }
        write!(f, "{}", self.stmts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge {src} -> {dst} references unknown vertex {missing}")]
    UnknownVertex {
        src: VertexId,
        dst: VertexId,
        missing: VertexId,
    },
    #[error("entry {0} is not a vertex of the graph")]
    UnknownEntry(VertexId),
}

/// A pre-cloned interprocedural CFG.
///
/// Immutable once built; adjacency is precomputed and kept sorted by id so
/// every traversal order is canonical.
#[derive(Debug, Clone)]
pub struct SuperGraph {
    vertices: BTreeMap<VertexId, VertexAttribute>,
    edges: BTreeSet<(VertexId, VertexId)>,
    entries: BTreeSet<VertexId>,
    preds: BTreeMap<VertexId, Vec<VertexId>>,
    succs: BTreeMap<VertexId, Vec<VertexId>>,
}

impl PartialEq for SuperGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.edges == other.edges
            && self.entries == other.entries
    }
}

impl Eq for SuperGraph {}

impl SuperGraph {
    /// Build a graph, resolving entries: the flagged vertices, or every
    /// in-degree-0 vertex when none is flagged.
    pub fn new(
        vertices: BTreeMap<VertexId, VertexAttribute>,
        edges: BTreeSet<(VertexId, VertexId)>,
    ) -> Result<Self, GraphError> {
        let mut g = Self::unchecked(vertices, edges, BTreeSet::new())?;
        let flagged: BTreeSet<VertexId> = g
            .vertices
            .iter()
            .filter(|(_, a)| a.entry)
            .map(|(id, _)| *id)
            .collect();
        g.entries = if flagged.is_empty() {
            g.vertices
                .keys()
                .filter(|v| g.preds[v].is_empty())
                .copied()
                .collect()
        } else {
            flagged
        };
        Ok(g)
    }

    /// Build a graph with an explicit entry set (used for induced sub-CFGs,
    /// whose entries are inherited from the enclosing graph).
    pub fn with_entries(
        vertices: BTreeMap<VertexId, VertexAttribute>,
        edges: BTreeSet<(VertexId, VertexId)>,
        entries: BTreeSet<VertexId>,
    ) -> Result<Self, GraphError> {
        if let Some(bad) = entries.iter().find(|e| !vertices.contains_key(e)) {
            return Err(GraphError::UnknownEntry(*bad));
        }
        Self::unchecked(vertices, edges, entries)
    }

    fn unchecked(
        vertices: BTreeMap<VertexId, VertexAttribute>,
        edges: BTreeSet<(VertexId, VertexId)>,
        entries: BTreeSet<VertexId>,
    ) -> Result<Self, GraphError> {
        let mut preds: BTreeMap<VertexId, Vec<VertexId>> =
            vertices.keys().map(|v| (*v, Vec::new())).collect();
        let mut succs = preds.clone();
        for &(src, dst) in &edges {
            for end in [src, dst] {
                if !vertices.contains_key(&end) {
                    return Err(GraphError::UnknownVertex {
                        src,
                        dst,
                        missing: end,
                    });
                }
            }
            succs.get_mut(&src).unwrap().push(dst);
            preds.get_mut(&dst).unwrap().push(src);
        }
        for list in preds.values_mut() {
            list.sort_unstable();
        }
        Ok(SuperGraph {
            vertices,
            edges,
            entries,
            preds,
            succs,
        })
    }

    pub fn empty() -> Self {
        SuperGraph::new(BTreeMap::new(), BTreeSet::new()).unwrap()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.vertices.contains_key(&v)
    }

    pub fn has_edge(&self, src: VertexId, dst: VertexId) -> bool {
        self.edges.contains(&(src, dst))
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.keys().copied()
    }

    pub fn vertices(&self) -> &BTreeMap<VertexId, VertexAttribute> {
        &self.vertices
    }

    pub fn attr(&self, v: VertexId) -> Option<&VertexAttribute> {
        self.vertices.get(&v)
    }

    pub fn stmts(&self, v: VertexId) -> Option<&Stmts> {
        self.vertices.get(&v).map(|a| &a.stmts)
    }

    pub fn edges(&self) -> &BTreeSet<(VertexId, VertexId)> {
        &self.edges
    }

    pub fn entries(&self) -> &BTreeSet<VertexId> {
        &self.entries
    }

    pub fn is_entry(&self, v: VertexId) -> bool {
        self.entries.contains(&v)
    }

    /// Predecessors sorted by id. Empty for unknown vertices.
    pub fn preds(&self, v: VertexId) -> &[VertexId] {
        self.preds.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Successors sorted by id. Empty for unknown vertices.
    pub fn succs(&self, v: VertexId) -> &[VertexId] {
        self.succs.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sub-graph induced on `keep`, with entries inherited from `self`.
    pub fn induced(&self, keep: &BTreeSet<VertexId>) -> SuperGraph {
        let vertices = self
            .vertices
            .iter()
            .filter(|(v, _)| keep.contains(v))
            .map(|(v, a)| (*v, a.clone()))
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|(s, d)| keep.contains(s) && keep.contains(d))
            .copied()
            .collect();
        let entries = self.entries.intersection(keep).copied().collect();
        SuperGraph::with_entries(vertices, edges, entries).expect("induced sub-graph is closed")
    }
}
