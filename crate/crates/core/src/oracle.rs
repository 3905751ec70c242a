//! Single-threaded reference solvers.
//!
//! These are deliberately naive: every evaluation recomputes IN from the
//! current OUT of all predecessors. They serve as ground truth for the
//! partitioned engine and the incremental pipeline.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cfg::{SuperGraph, VertexId};
use crate::engine::{AnalysisResult, EngineError, RunStats};
use crate::lattice::Analysis;

/// Where the next vertex to evaluate comes from.
trait Worklist {
    fn push(&mut self, v: VertexId);
    fn pop(&mut self) -> Option<VertexId>;
}

struct Fifo {
    queue: VecDeque<VertexId>,
    queued: BTreeSet<VertexId>,
}

impl Worklist for Fifo {
    fn push(&mut self, v: VertexId) {
        if self.queued.insert(v) {
            self.queue.push_back(v);
        }
    }

    fn pop(&mut self) -> Option<VertexId> {
        let v = self.queue.pop_front()?;
        self.queued.remove(&v);
        Some(v)
    }
}

struct Random {
    pending: Vec<VertexId>,
    queued: BTreeSet<VertexId>,
    rng: ChaCha8Rng,
}

impl Worklist for Random {
    fn push(&mut self, v: VertexId) {
        if self.queued.insert(v) {
            self.pending.push(v);
        }
    }

    fn pop(&mut self) -> Option<VertexId> {
        if self.pending.is_empty() {
            return None;
        }
        let i = self.rng.gen_range(0..self.pending.len());
        let v = self.pending.swap_remove(i);
        self.queued.remove(&v);
        Some(v)
    }
}

/// FIFO worklist solver seeded with the entry vertices.
pub fn run_sequential<A: Analysis>(
    graph: &SuperGraph,
    analysis: &A,
) -> Result<AnalysisResult<A::Fact>, EngineError> {
    let wl = Fifo {
        queue: VecDeque::new(),
        queued: BTreeSet::new(),
    };
    solve(graph, analysis, wl)
}

/// Same fixed point, evaluating worklist members in an order drawn from `seed`.
pub fn run_chaotic<A: Analysis>(
    graph: &SuperGraph,
    analysis: &A,
    seed: u64,
) -> Result<AnalysisResult<A::Fact>, EngineError> {
    let wl = Random {
        pending: Vec::new(),
        queued: BTreeSet::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    solve(graph, analysis, wl)
}

fn solve<A: Analysis, W: Worklist>(
    graph: &SuperGraph,
    analysis: &A,
    mut worklist: W,
) -> Result<AnalysisResult<A::Fact>, EngineError> {
    if !graph.is_empty() && graph.entries().is_empty() {
        return Err(EngineError::NoEntries);
    }
    let cap = graph
        .len()
        .saturating_mul(10)
        .saturating_mul(analysis.height_hint(graph).max(1))
        .max(1);
    let mut in_facts: BTreeMap<VertexId, A::Fact> = BTreeMap::new();
    let mut out_facts: BTreeMap<VertexId, A::Fact> = BTreeMap::new();
    for &e in graph.entries() {
        worklist.push(e);
    }
    let mut iterations = 0usize;
    while let Some(k) = worklist.pop() {
        if iterations >= cap {
            return Err(EngineError::NonConvergence {
                cap,
                supersteps: iterations,
            });
        }
        iterations += 1;
        let base = if graph.is_entry(k) {
            analysis.entry_fact()
        } else {
            analysis.initial()
        };
        let preds: Vec<&A::Fact> = graph
            .preds(k)
            .iter()
            .filter_map(|p| out_facts.get(p))
            .collect();
        let input = analysis.merge(&preds, &base);
        let stmts = graph.stmts(k).expect("worklist holds graph vertices");
        let out = analysis
            .transfer(stmts, &input)
            .map_err(|source| EngineError::Analysis { vertex: k, source })?;
        in_facts.insert(k, input);
        if analysis.propagate(out_facts.get(&k), &out) {
            out_facts.insert(k, out);
            for &s in graph.succs(k) {
                worklist.push(s);
            }
        }
    }

    let computed: BTreeSet<VertexId> = out_facts.keys().copied().collect();
    for v in graph.vertex_ids() {
        in_facts.entry(v).or_insert_with(|| analysis.initial());
        out_facts.entry(v).or_insert_with(|| analysis.initial());
    }
    Ok(AnalysisResult {
        in_facts,
        out_facts,
        computed,
        stats: RunStats {
            supersteps: iterations,
            ..RunStats::default()
        },
        trace: Vec::new(),
    })
}

/// Check that `result` is a fixed point of `analysis` on `graph`: for every
/// computed vertex, IN is the merge of the computed predecessors' OUT and
/// OUT is the transfer of IN. Returns the first vertex where it is not.
pub fn check_fixed_point<A: Analysis>(
    graph: &SuperGraph,
    analysis: &A,
    result: &AnalysisResult<A::Fact>,
) -> Result<(), VertexId> {
    for v in graph.vertex_ids() {
        if !result.computed.contains(&v) {
            if graph.is_entry(v) || graph.preds(v).iter().any(|p| result.computed.contains(p)) {
                return Err(v);
            }
            continue;
        }
        let base = if graph.is_entry(v) {
            analysis.entry_fact()
        } else {
            analysis.initial()
        };
        let preds: Vec<&A::Fact> = graph
            .preds(v)
            .iter()
            .filter(|p| result.computed.contains(p))
            .map(|p| &result.out_facts[p])
            .collect();
        let input = analysis.merge(&preds, &base);
        let stmts = graph.stmts(v).expect("vertex of graph");
        if input != result.in_facts[&v] {
            return Err(v);
        }
        match analysis.transfer(stmts, &input) {
            Ok(out) if out == result.out_facts[&v] => {}
            _ => return Err(v),
        }
    }
    Ok(())
}
