//! Incremental re-analysis after a batch of CFG edits.
//!
//! The pipeline is: seed the affected set from the atomic changes, close it
//! under successors (as a job on the partitioned runtime), build the sub-graph
//! induced on the affected vertices, seed its boundary with stored facts, run
//! the optimized engine on it, and commit the new facts of affected vertices.
//!
//! In [`Mode::Naive`] every affected vertex restarts from the initial
//! element. In [`Mode::Optimized`] vertices reachable only from additions
//! keep their stored facts as a starting point, since edge and vertex
//! additions can only move facts further in the analysis direction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::cfg::{AtomicChange, ChangeBatch, SuperGraph, VertexId};
use crate::engine::runtime::{execute, Ctx, Outcome, Start, Topology, VertexProgram};
use crate::engine::{
    seed_and_run, AnalysisResult, EngineConfig, EngineError, RunReport, RunStats, Seed, SeedMessage,
};
use crate::lattice::Analysis;
use crate::store::{FactStore, StoreError, StoreKey, WriteBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Naive,
    #[serde(rename = "opt")]
    Optimized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Naive => "naive",
            Mode::Optimized => "opt",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(Mode::Naive),
            "opt" | "optimized" => Ok(Mode::Optimized),
            other => Err(format!("unknown incremental mode `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IncrementalError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("store is inconsistent with the graph at vertex {vertex}: {reason}")]
    StoreInconsistent { vertex: VertexId, reason: String },
}

const ADD: u8 = 0b001;
const DELETE: u8 = 0b010;
const CHANGE: u8 = 0b100;

/// Directly affected vertices of a single change, with the kind of impact.
fn change_seeds(change: &AtomicChange) -> Vec<(VertexId, u8)> {
    match *change {
        AtomicChange::AddEdgeExisting { dst, .. } => vec![(dst, ADD)],
        AtomicChange::AddSourceNode { src, dst, .. } => vec![(src, ADD), (dst, ADD)],
        AtomicChange::AddDestNode { dst, .. } => vec![(dst, ADD)],
        AtomicChange::DeleteEdgeExisting { dst, .. } => vec![(dst, DELETE)],
        AtomicChange::DeleteSourceNode { dst, .. } => vec![(dst, DELETE)],
        AtomicChange::DeleteDestNode { .. } => vec![],
        AtomicChange::ChangeSourceNode { node, .. } => vec![(node, CHANGE)],
        AtomicChange::ChangeDestNode { node, .. } => vec![(node, CHANGE)],
    }
}

fn labelled_seeds(batch: &ChangeBatch) -> BTreeMap<VertexId, u8> {
    let mut labels = BTreeMap::new();
    for change in batch.iter() {
        for (v, bit) in change_seeds(change) {
            *labels.entry(v).or_insert(0) |= bit;
        }
    }
    labels
}

/// Vertices directly affected by the batch (before closure).
pub fn seed_affected(batch: &ChangeBatch) -> BTreeSet<VertexId> {
    labelled_seeds(batch).into_keys().collect()
}

/// Directly affected vertices split by the kind of change: additions,
/// deletions and statement changes.
pub fn seed_affected_by_kind(
    batch: &ChangeBatch,
) -> (BTreeSet<VertexId>, BTreeSet<VertexId>, BTreeSet<VertexId>) {
    split_labels(&labelled_seeds(batch))
}

fn split_labels(
    labels: &BTreeMap<VertexId, u8>,
) -> (BTreeSet<VertexId>, BTreeSet<VertexId>, BTreeSet<VertexId>) {
    let with = |bit: u8| {
        labels
            .iter()
            .filter(|(_, l)| *l & bit != 0)
            .map(|(v, _)| *v)
            .collect()
    };
    (with(ADD), with(DELETE), with(CHANGE))
}

/// Label propagation along successor edges: every vertex ends with the union
/// of the labels of all seeds that reach it.
struct Closure;

struct ClosureState {
    label: u8,
    sent: u8,
}

impl VertexProgram for Closure {
    type State = ClosureState;
    type Msg = u8;
    type Pub = ();

    fn compute(
        &self,
        _ctx: &Ctx<'_, ()>,
        state: &mut ClosureState,
        inbox: &[(VertexId, u8)],
    ) -> Result<Outcome<u8, ()>, EngineError> {
        for (_, l) in inbox {
            state.label |= l;
        }
        let mut out = Outcome::quiet();
        if state.label != state.sent {
            state.sent = state.label;
            out.broadcast = Some(state.label);
            out.updated = true;
        }
        Ok(out)
    }
}

fn labelled_closure(
    graph: &SuperGraph,
    seeds: &BTreeMap<VertexId, u8>,
    workers: usize,
) -> Result<(BTreeMap<VertexId, u8>, RunStats), EngineError> {
    let topo = Topology::new(graph);
    let mut states: Vec<ClosureState> = (0..topo.len())
        .map(|_| ClosureState { label: 0, sent: 0 })
        .collect();
    let mut active = Vec::new();
    for (v, l) in seeds {
        if let Some(&idx) = topo.index.get(v) {
            states[idx].label |= l;
            active.push(idx);
        }
    }
    let start = Start {
        states,
        snapshot: vec![None; topo.len()],
        messages: Vec::new(),
        active,
    };
    // Each vertex sends at most once per label bit.
    let cap = topo.len().saturating_mul(3).max(1) + 1;
    let finish = execute(&Closure, &topo, workers, cap, false, start)?;
    let labels = finish
        .states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label != 0)
        .map(|(i, s)| (topo.ids[i], s.label))
        .collect();
    Ok((labels, finish.stats))
}

/// Smallest superset of `seed` closed under successors in `graph`. Seeds
/// that are not vertices of `graph` are ignored.
pub fn transitive_closure(
    seed: &BTreeSet<VertexId>,
    graph: &SuperGraph,
    workers: usize,
) -> Result<BTreeSet<VertexId>, EngineError> {
    let seeds = seed.iter().map(|v| (*v, ADD)).collect();
    Ok(labelled_closure(graph, &seeds, workers)?
        .0
        .into_keys()
        .collect())
}

/// Affected sets and the sub-graph to re-analyze.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpactResult {
    pub mode: Mode,
    /// All affected vertices.
    pub affected: BTreeSet<VertexId>,
    /// Per-kind closures; in naive mode all three are empty.
    pub affected_add: BTreeSet<VertexId>,
    pub affected_delete: BTreeSet<VertexId>,
    pub affected_change: BTreeSet<VertexId>,
    /// Vertices that keep their stored facts (optimized mode only): affected
    /// by additions and by nothing else.
    pub reused: BTreeSet<VertexId>,
    /// Vertices removed by the batch.
    pub deleted: BTreeSet<VertexId>,
    /// Graph induced on `affected`; its entries are the affected entries of
    /// the updated graph.
    pub sub_graph: SuperGraph,
    /// For each affected vertex, the vertices whose stored OUT is sent to it
    /// before the first superstep.
    pub boundary: BTreeMap<VertexId, BTreeSet<VertexId>>,
    pub closure_stats: RunStats,
}

impl ImpactResult {
    /// Union of all boundary sources.
    pub fn boundary_sources(&self) -> BTreeSet<VertexId> {
        self.boundary.values().flatten().copied().collect()
    }
}

/// Impact analysis of `batch` on the updated graph.
pub fn impact(
    new_graph: &SuperGraph,
    batch: &ChangeBatch,
    mode: Mode,
    workers: usize,
) -> Result<ImpactResult, EngineError> {
    let mut seeds = labelled_seeds(batch);
    seeds.retain(|v, _| new_graph.contains(*v));
    if mode == Mode::Naive {
        for l in seeds.values_mut() {
            *l = ADD;
        }
    }
    let (labels, closure_stats) = labelled_closure(new_graph, &seeds, workers)?;
    let affected: BTreeSet<VertexId> = labels.keys().copied().collect();
    let (affected_add, affected_delete, affected_change, reused) = match mode {
        Mode::Naive => Default::default(),
        Mode::Optimized => {
            let (add, del, chg) = split_labels(&labels);
            let reused = labels
                .iter()
                .filter(|(_, l)| **l == ADD)
                .map(|(v, _)| *v)
                .collect();
            (add, del, chg, reused)
        }
    };
    Ok(build_sub_graph(
        new_graph,
        batch,
        mode,
        affected,
        (affected_add, affected_delete, affected_change),
        reused,
        closure_stats,
    ))
}

fn build_sub_graph(
    new_graph: &SuperGraph,
    batch: &ChangeBatch,
    mode: Mode,
    affected: BTreeSet<VertexId>,
    (affected_add, affected_delete, affected_change): (
        BTreeSet<VertexId>,
        BTreeSet<VertexId>,
        BTreeSet<VertexId>,
    ),
    reused: BTreeSet<VertexId>,
    closure_stats: RunStats,
) -> ImpactResult {
    let added_edges: BTreeSet<(VertexId, VertexId)> = batch
        .iter()
        .filter(|c| {
            matches!(
                c,
                AtomicChange::AddEdgeExisting { .. }
                    | AtomicChange::AddSourceNode { .. }
                    | AtomicChange::AddDestNode { .. }
            )
        })
        .filter_map(AtomicChange::edge)
        .collect();
    let provides_old_fact = |p: &VertexId| !affected.contains(p) || reused.contains(p);
    let mut boundary = BTreeMap::new();
    for &k in &affected {
        let sources: BTreeSet<VertexId> = match mode {
            Mode::Naive => new_graph
                .preds(k)
                .iter()
                .filter(|p| !affected.contains(p))
                .copied()
                .collect(),
            Mode::Optimized if reused.contains(&k) => new_graph
                .preds(k)
                .iter()
                .filter(|p| added_edges.contains(&(**p, k)) && provides_old_fact(p))
                .copied()
                .collect(),
            Mode::Optimized => new_graph
                .preds(k)
                .iter()
                .filter(|p| provides_old_fact(p))
                .copied()
                .collect(),
        };
        if !sources.is_empty() {
            boundary.insert(k, sources);
        }
    }
    ImpactResult {
        mode,
        sub_graph: new_graph.induced(&affected),
        affected,
        affected_add,
        affected_delete,
        affected_change,
        reused,
        deleted: batch.deleted_vertices(),
        boundary,
        closure_stats,
    }
}

/// Sizes of an incremental update, as written to reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactReport {
    pub mode: Mode,
    pub changes: usize,
    pub changes_by_kind: BTreeMap<String, usize>,
    pub affected: usize,
    pub affected_add: usize,
    pub affected_delete: usize,
    pub affected_change: usize,
    pub reused: usize,
    pub deleted: usize,
    pub boundary_sources: Vec<VertexId>,
    pub graph_vertices: usize,
    pub graph_edges: usize,
    pub sub_vertices: usize,
    pub sub_edges: usize,
    /// Sub-graph vertices as a percentage of the updated graph.
    pub sub_vertex_pct: f64,
    pub sub_edge_pct: f64,
    pub closure_supersteps: usize,
}

impl ImpactReport {
    pub fn new(impact: &ImpactResult, batch: &ChangeBatch, graph: &SuperGraph) -> Self {
        let pct = |part: usize, whole: usize| {
            if whole == 0 {
                0.0
            } else {
                (part as f64 * 10000.0 / whole as f64).round() / 100.0
            }
        };
        let mut changes_by_kind = BTreeMap::new();
        for c in batch.iter() {
            *changes_by_kind.entry(c.kind().to_string()).or_insert(0) += 1;
        }
        ImpactReport {
            mode: impact.mode,
            changes: batch.len(),
            changes_by_kind,
            affected: impact.affected.len(),
            affected_add: impact.affected_add.len(),
            affected_delete: impact.affected_delete.len(),
            affected_change: impact.affected_change.len(),
            reused: impact.reused.len(),
            deleted: impact.deleted.len(),
            boundary_sources: impact.boundary_sources().into_iter().collect(),
            graph_vertices: graph.len(),
            graph_edges: graph.edge_count(),
            sub_vertices: impact.sub_graph.len(),
            sub_edges: impact.sub_graph.edge_count(),
            sub_vertex_pct: pct(impact.sub_graph.len(), graph.len()),
            sub_edge_pct: pct(impact.sub_graph.edge_count(), graph.edge_count()),
            closure_supersteps: impact.closure_stats.supersteps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementalReport {
    pub impact: ImpactReport,
    /// Absent when the batch is empty and nothing ran.
    pub run: Option<RunReport>,
}

#[derive(Debug, Clone)]
pub struct IncrementalOutcome<F> {
    pub impact: ImpactResult,
    /// Facts on the sub-graph; `None` when the batch was empty.
    pub result: Option<AnalysisResult<F>>,
    pub report: IncrementalReport,
}

/// Build the superstep-0 state of the sub-graph run from the store.
fn seed_from_store<A: Analysis>(
    impact: &ImpactResult,
    new_vertices: &BTreeSet<VertexId>,
    store: &FactStore,
    analysis: &A,
) -> Result<Seed<A::Fact>, IncrementalError> {
    let sub = &impact.sub_graph;
    let sources = impact.boundary_sources();
    let mut wanted: Vec<StoreKey> = Vec::new();
    for &v in impact.reused.iter().chain(&sources) {
        wanted.push(StoreKey::input(v));
        wanted.push(StoreKey::output(v));
    }
    wanted.sort();
    wanted.dedup();
    let fetched: BTreeMap<StoreKey, A::Fact> = wanted
        .iter()
        .copied()
        .zip(store.batch_get(analysis, &wanted)?)
        .filter_map(|(k, f)| f.map(|f| (k, f)))
        .collect();
    type Stored<'a, F> = Option<(&'a F, Option<&'a F>)>;
    let stored = |v: VertexId| -> Result<Stored<'_, A::Fact>, IncrementalError> {
        match fetched.get(&StoreKey::input(v)) {
            Some(i) => Ok(Some((i, fetched.get(&StoreKey::output(v))))),
            None if new_vertices.contains(&v) => Ok(None),
            None => Err(IncrementalError::StoreInconsistent {
                vertex: v,
                reason: "no stored facts for a vertex of the previous graph".into(),
            }),
        }
    };

    let mut seed = Seed {
        in_facts: BTreeMap::new(),
        out_facts: BTreeMap::new(),
        messages: Vec::new(),
        active: BTreeSet::new(),
    };
    for v in sub.vertex_ids() {
        let fresh = if sub.is_entry(v) {
            analysis.entry_fact()
        } else {
            analysis.initial()
        };
        if sub.is_entry(v) {
            seed.active.insert(v);
        }
        if impact.reused.contains(&v) {
            if let Some((input, out)) = stored(v)? {
                seed.in_facts.insert(v, input.clone());
                if let Some(out) = out {
                    seed.out_facts.insert(v, out.clone());
                    seed.active.insert(v);
                }
                continue;
            }
        }
        seed.in_facts.insert(v, fresh);
    }
    for (&dst, srcs) in &impact.boundary {
        for &src in srcs {
            if let Some((_, Some(out))) = stored(src)? {
                seed.messages.push(SeedMessage {
                    dst,
                    src,
                    fact: out.clone(),
                });
                seed.active.insert(dst);
            }
        }
    }
    Ok(seed)
}

/// Update `store`, which holds the facts of the graph before `batch`, to the
/// facts of `new_graph`.
///
/// On error the store is left untouched.
pub fn run_incremental<A: Analysis>(
    new_graph: &SuperGraph,
    batch: &ChangeBatch,
    store: &mut FactStore,
    analysis: &A,
    mode: Mode,
    config: &EngineConfig,
) -> Result<IncrementalOutcome<A::Fact>, IncrementalError> {
    store.check(analysis)?;
    let impact = impact(new_graph, batch, mode, config.workers)?;
    if batch.is_empty() {
        let report = IncrementalReport {
            impact: ImpactReport::new(&impact, batch, new_graph),
            run: None,
        };
        return Ok(IncrementalOutcome {
            impact,
            result: None,
            report,
        });
    }

    let new_vertices: BTreeSet<VertexId> = batch
        .iter()
        .filter_map(|c| match c {
            AtomicChange::AddSourceNode { src, .. } => Some(*src),
            AtomicChange::AddDestNode { dst, .. } => Some(*dst),
            _ => None,
        })
        .collect();
    let seed = seed_from_store(&impact, &new_vertices, store, analysis)?;
    let result = seed_and_run(&impact.sub_graph, analysis, config, seed)?;

    let mut write = WriteBatch {
        purge: impact.deleted.clone(),
        ..WriteBatch::default()
    };
    for v in impact.sub_graph.vertex_ids() {
        write.put::<A>(StoreKey::input(v), &result.in_facts[&v]);
        if result.computed.contains(&v) {
            write.put::<A>(StoreKey::output(v), &result.out_facts[&v]);
        } else {
            write.deletes.push(StoreKey::output(v));
        }
    }
    store.commit(write)?;

    let run_config = EngineConfig {
        algorithm: crate::engine::Algorithm::Optimized,
        ..config.clone()
    };
    let report = IncrementalReport {
        impact: ImpactReport::new(&impact, batch, new_graph),
        run: Some(RunReport::new(
            &impact.sub_graph,
            &run_config,
            &result.stats,
        )),
    };
    Ok(IncrementalOutcome {
        impact,
        result: Some(result),
        report,
    })
}

/// The write batch replacing a store's contents with `result`: IN for every
/// vertex, OUT for computed ones.
pub fn result_batch<A: Analysis>(result: &AnalysisResult<A::Fact>) -> WriteBatch {
    let mut write = WriteBatch {
        clear: true,
        ..WriteBatch::default()
    };
    for (v, f) in &result.in_facts {
        write.put::<A>(StoreKey::input(*v), f);
    }
    for v in &result.computed {
        write.put::<A>(StoreKey::output(*v), &result.out_facts[v]);
    }
    write
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u64]) -> BTreeSet<VertexId> {
        v.iter().copied().map(VertexId).collect()
    }

    #[test]
    fn closure_follows_successors() {
        let g =
            SuperGraph::parse("V 1 nop\nV 2 nop\nV 3 nop\nV 4 nop\nE 1 2\nE 2 3\nE 3 2\n").unwrap();
        assert_eq!(transitive_closure(&ids(&[2]), &g, 2).unwrap(), ids(&[2, 3]));
        assert_eq!(transitive_closure(&ids(&[]), &g, 1).unwrap(), ids(&[]));
        assert_eq!(
            transitive_closure(&ids(&[1, 9]), &g, 4).unwrap(),
            ids(&[1, 2, 3])
        );
    }

    #[test]
    fn seeds_per_kind() {
        let batch = ChangeBatch(vec![
            AtomicChange::AddEdgeExisting {
                src: VertexId(1),
                dst: VertexId(4),
            },
            AtomicChange::DeleteSourceNode {
                src: VertexId(2),
                dst: VertexId(7),
            },
            AtomicChange::DeleteDestNode {
                src: Some(VertexId(3)),
                dst: VertexId(9),
            },
        ]);
        assert_eq!(seed_affected(&batch), ids(&[4, 7]));
        let (a, d, c) = seed_affected_by_kind(&batch);
        assert_eq!((a, d, c), (ids(&[4]), ids(&[7]), ids(&[])));
        assert!(seed_affected(&ChangeBatch::default()).is_empty());
    }

    fn fixture(name: &str) -> String {
        std::fs::read_to_string(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    fn worked_example() -> (SuperGraph, SuperGraph, ChangeBatch) {
        let old = SuperGraph::parse(&fixture("edit_old.cfg")).unwrap();
        let new = SuperGraph::parse(&fixture("edit_new.cfg")).unwrap();
        let batch = ChangeBatch::parse(&fixture("edit.changes"), &new).unwrap();
        (old, new, batch)
    }

    #[test]
    fn worked_example_impact() {
        let (_, new, batch) = worked_example();
        let naive = impact(&new, &batch, Mode::Naive, 3).unwrap();
        assert_eq!(naive.affected, ids(&[1, 4, 5, 6, 7, 8]));
        assert_eq!(naive.boundary, BTreeMap::from([(VertexId(4), ids(&[3]))]));
        assert_eq!(naive.deleted, ids(&[2]));

        let opt = impact(&new, &batch, Mode::Optimized, 2).unwrap();
        assert_eq!(opt.affected, naive.affected);
        assert_eq!(opt.affected_add, ids(&[1, 4, 7, 8]));
        assert_eq!(opt.affected_delete, ids(&[7]));
        assert_eq!(opt.affected_change, ids(&[5, 6, 7]));
        assert_eq!(opt.reused, ids(&[1, 4, 8]));
        assert_eq!(
            opt.boundary,
            BTreeMap::from([(VertexId(4), ids(&[1])), (VertexId(7), ids(&[4]))])
        );
    }

    fn scratch_store<A: Analysis>(g: &SuperGraph, a: &A) -> FactStore {
        let result = crate::engine::run(g, a, &EngineConfig::default()).unwrap();
        let mut store = FactStore::in_memory(a.fingerprint());
        store.commit(result_batch::<A>(&result)).unwrap();
        store
    }

    #[test]
    fn worked_example_matches_scratch() {
        let (old, new, batch) = worked_example();
        let a = crate::clients::ReachingDefs;
        let expected = scratch_store(&new, &a);
        for mode in [Mode::Naive, Mode::Optimized] {
            let mut store = scratch_store(&old, &a);
            let before = store.clone();
            let out = run_incremental(&new, &batch, &mut store, &a, mode, &EngineConfig::default())
                .unwrap();
            assert_eq!(store.to_bytes(), expected.to_bytes(), "{mode}");
            assert_eq!(
                store.raw(StoreKey::input(VertexId(3))),
                before.raw(StoreKey::input(VertexId(3)))
            );
            assert!(store.raw(StoreKey::input(VertexId(2))).is_none());
            assert!(out.report.run.is_some());
        }
    }

    #[test]
    fn empty_batch_leaves_store_untouched() {
        let (old, _, _) = worked_example();
        let a = crate::clients::ReachingDefs;
        let mut store = scratch_store(&old, &a);
        let before = store.to_bytes();
        let out = run_incremental(
            &old,
            &ChangeBatch::default(),
            &mut store,
            &a,
            Mode::Optimized,
            &EngineConfig::default(),
        )
        .unwrap();
        assert!(out.result.is_none());
        assert_eq!(out.report.impact.affected, 0);
        assert_eq!(store.to_bytes(), before);
    }

    #[test]
    fn missing_boundary_facts_are_reported() {
        let (old, new, batch) = worked_example();
        let a = crate::clients::ReachingDefs;
        let mut store = scratch_store(&old, &a);
        store.purge(&ids(&[3])).unwrap();
        let err = run_incremental(
            &new,
            &batch,
            &mut store,
            &a,
            Mode::Naive,
            &EngineConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            IncrementalError::StoreInconsistent {
                vertex: VertexId(3),
                ..
            }
        ));
    }
}
