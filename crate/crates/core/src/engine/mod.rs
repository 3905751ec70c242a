//! Partitioned, superstep-synchronous execution of an analysis.
//!
//! Two algorithms are provided. [`Algorithm::Classic`] pulls the full set
//! of predecessor facts at every activation; [`Algorithm::Optimized`] keeps
//! each vertex's IN and only merges the facts that changed since the last
//! barrier. Both reach the same fixed point.

mod dataflow;
pub(crate) mod runtime;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::cfg::{SuperGraph, VertexId};
use crate::lattice::{Analysis, AnalysisError, Fact};

use dataflow::{Classic, Optimized, VertexState};
use runtime::{execute, Start, Topology};

pub use runtime::owner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Classic,
    #[serde(rename = "opt")]
    Optimized,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Classic => "classic",
            Algorithm::Optimized => "opt",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classic" => Ok(Algorithm::Classic),
            "opt" | "optimized" => Ok(Algorithm::Optimized),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    pub workers: usize,
    pub algorithm: Algorithm,
    /// Maximum number of supersteps; `None` means ten per vertex.
    pub superstep_cap: Option<usize>,
    /// Record every OUT update per superstep in [`AnalysisResult::trace`].
    pub trace: bool,
    /// Test hook: the optimized merge silently drops one incoming message.
    #[cfg(feature = "fault-injection")]
    pub drop_last_message: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 1,
            algorithm: Algorithm::Optimized,
            superstep_cap: None,
            trace: false,
            #[cfg(feature = "fault-injection")]
            drop_last_message: false,
        }
    }
}

impl EngineConfig {
    pub fn new(algorithm: Algorithm, workers: usize) -> Self {
        EngineConfig {
            algorithm,
            workers,
            ..EngineConfig::default()
        }
    }

    pub fn cap_for(&self, vertices: usize) -> usize {
        self.superstep_cap
            .unwrap_or_else(|| vertices.saturating_mul(10).max(1))
    }

    fn drop_last_message(&self) -> bool {
        #[cfg(feature = "fault-injection")]
        {
            self.drop_last_message
        }
        #[cfg(not(feature = "fault-injection"))]
        {
            false
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("no convergence after {supersteps} supersteps (cap {cap})")]
    NonConvergence { cap: usize, supersteps: usize },
    #[error("analysis failed at vertex {vertex}: {source}")]
    Analysis {
        vertex: VertexId,
        source: AnalysisError,
    },
    #[error("seed does not match the graph: {0}")]
    SeedMismatch(String),
    #[error("graph has vertices but no entry vertex")]
    NoEntries,
}

/// Counters collected during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub supersteps: usize,
    /// Facts moved between vertices: pushed messages plus pulled
    /// predecessor facts.
    pub messages_sent: u64,
    /// Vertex computations whose OUT changed.
    pub out_updates: u64,
    pub active_per_superstep: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisResult<F> {
    pub in_facts: BTreeMap<VertexId, F>,
    /// OUT of every vertex; never-computed vertices hold the initial element.
    pub out_facts: BTreeMap<VertexId, F>,
    /// Vertices that have an OUT value, i.e. were reached from an entry.
    pub computed: BTreeSet<VertexId>,
    pub stats: RunStats,
    pub trace: Vec<Vec<(VertexId, F)>>,
}

impl<F: Fact> AnalysisResult<F> {
    pub fn supersteps(&self) -> usize {
        self.stats.supersteps
    }

    pub fn messages_sent(&self) -> u64 {
        self.stats.messages_sent
    }

    /// Equality of the fact maps and of the computed sets, ignoring counters.
    pub fn same_facts(&self, other: &AnalysisResult<F>) -> bool {
        self.in_facts == other.in_facts
            && self.out_facts == other.out_facts
            && self.computed == other.computed
    }
}

/// Machine-readable summary of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub workers: usize,
    pub vertices: usize,
    pub edges: usize,
    pub supersteps: usize,
    pub messages_sent: u64,
    pub out_updates: u64,
    pub active_per_superstep: Vec<usize>,
}

impl RunReport {
    pub fn new(graph: &SuperGraph, config: &EngineConfig, stats: &RunStats) -> Self {
        RunReport {
            algorithm: config.algorithm,
            workers: config.workers,
            vertices: graph.len(),
            edges: graph.edge_count(),
            supersteps: stats.supersteps,
            messages_sent: stats.messages_sent,
            out_updates: stats.out_updates,
            active_per_superstep: stats.active_per_superstep.clone(),
        }
    }
}

/// Initial state for [`seed_and_run`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seed<F> {
    /// IN of every vertex of the graph.
    pub in_facts: BTreeMap<VertexId, F>,
    /// OUT of vertices that already have one; the rest count as never computed.
    pub out_facts: BTreeMap<VertexId, F>,
    /// Messages pending at superstep 0.
    pub messages: Vec<SeedMessage<F>>,
    pub active: BTreeSet<VertexId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedMessage<F> {
    pub dst: VertexId,
    /// Sender; may be a vertex outside the graph being run.
    pub src: VertexId,
    pub fact: F,
}

impl<F: Fact> Seed<F> {
    /// The superstep-0 state of a whole-program run.
    pub fn from_scratch<A: Analysis<Fact = F>>(graph: &SuperGraph, analysis: &A) -> Self {
        Seed {
            in_facts: graph
                .vertex_ids()
                .map(|v| {
                    let f = if graph.is_entry(v) {
                        analysis.entry_fact()
                    } else {
                        analysis.initial()
                    };
                    (v, f)
                })
                .collect(),
            out_facts: BTreeMap::new(),
            messages: Vec::new(),
            active: graph.entries().clone(),
        }
    }
}

/// Run the configured algorithm from scratch.
pub fn run<A: Analysis>(
    graph: &SuperGraph,
    analysis: &A,
    config: &EngineConfig,
) -> Result<AnalysisResult<A::Fact>, EngineError> {
    if !graph.is_empty() && graph.entries().is_empty() {
        return Err(EngineError::NoEntries);
    }
    let seed = Seed::from_scratch(graph, analysis);
    match config.algorithm {
        Algorithm::Optimized => seed_and_run(graph, analysis, config, seed),
        Algorithm::Classic => {
            let topo = Topology::new(graph);
            let prog = Classic {
                analysis,
                stmts: stmts_of(graph, &topo),
                entry: topo.ids.iter().map(|v| graph.is_entry(*v)).collect(),
            };
            let start = dense_start(&topo, seed)?;
            let start = Start {
                states: start.states,
                snapshot: start.snapshot,
                messages: Vec::new(),
                active: start.active,
            };
            let finish = execute(
                &prog,
                &topo,
                config.workers,
                config.cap_for(graph.len()),
                config.trace,
                start,
            )?;
            Ok(collect(&topo, analysis, finish))
        }
    }
}

pub fn run_classic<A: Analysis>(
    graph: &SuperGraph,
    analysis: &A,
    workers: usize,
) -> Result<AnalysisResult<A::Fact>, EngineError> {
    run(
        graph,
        analysis,
        &EngineConfig::new(Algorithm::Classic, workers),
    )
}

pub fn run_optimized<A: Analysis>(
    graph: &SuperGraph,
    analysis: &A,
    workers: usize,
) -> Result<AnalysisResult<A::Fact>, EngineError> {
    run(
        graph,
        analysis,
        &EngineConfig::new(Algorithm::Optimized, workers),
    )
}

/// Run the optimized algorithm from a caller-supplied superstep-0 state.
/// `config.algorithm` is ignored.
pub fn seed_and_run<A: Analysis>(
    graph: &SuperGraph,
    analysis: &A,
    config: &EngineConfig,
    seed: Seed<A::Fact>,
) -> Result<AnalysisResult<A::Fact>, EngineError> {
    let topo = Topology::new(graph);
    let prog = Optimized {
        analysis,
        stmts: stmts_of(graph, &topo),
        trace: config.trace,
        drop_last_message: config.drop_last_message(),
    };
    let start = dense_start(&topo, seed)?;
    let finish = execute(
        &prog,
        &topo,
        config.workers,
        config.cap_for(graph.len()),
        config.trace,
        start,
    )?;
    Ok(collect(&topo, analysis, finish))
}

fn stmts_of<'g>(graph: &'g SuperGraph, topo: &Topology) -> Vec<&'g crate::cfg::Stmts> {
    topo.ids
        .iter()
        .map(|v| graph.stmts(*v).expect("topology built from graph"))
        .collect()
}

type DenseStart<F> = Start<VertexState<F>, F, F>;

fn dense_start<F: Fact>(topo: &Topology, seed: Seed<F>) -> Result<DenseStart<F>, EngineError> {
    let lookup = |v: &VertexId, what: &str| {
        topo.index
            .get(v)
            .copied()
            .ok_or_else(|| EngineError::SeedMismatch(format!("{what} names unknown vertex {v}")))
    };
    if seed.in_facts.len() != topo.len() {
        return Err(EngineError::SeedMismatch(format!(
            "IN seeds cover {} vertices, graph has {}",
            seed.in_facts.len(),
            topo.len()
        )));
    }
    let mut states: Vec<Option<VertexState<F>>> = (0..topo.len()).map(|_| None).collect();
    for (v, f) in seed.in_facts {
        states[lookup(&v, "IN seed")?] = Some(VertexState {
            input: f,
            out: None,
        });
    }
    let mut snapshot = vec![None; topo.len()];
    for (v, f) in seed.out_facts {
        let idx = lookup(&v, "OUT seed")?;
        snapshot[idx] = Some(f.clone());
        if let Some(s) = states[idx].as_mut() {
            s.out = Some(f);
        }
    }
    let messages = seed
        .messages
        .into_iter()
        .map(|m| Ok((lookup(&m.dst, "message")?, m.src, m.fact)))
        .collect::<Result<Vec<_>, EngineError>>()?;
    let active = seed
        .active
        .iter()
        .map(|v| lookup(v, "active set"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Start {
        states: states
            .into_iter()
            .map(|s| s.expect("length checked and keys unique"))
            .collect(),
        snapshot,
        messages,
        active,
    })
}

fn collect<A: Analysis>(
    topo: &Topology,
    analysis: &A,
    finish: runtime::Finish<VertexState<A::Fact>, A::Fact>,
) -> AnalysisResult<A::Fact> {
    let mut in_facts = BTreeMap::new();
    let mut out_facts = BTreeMap::new();
    let mut computed = BTreeSet::new();
    for (idx, state) in finish.states.into_iter().enumerate() {
        let id = topo.ids[idx];
        in_facts.insert(id, state.input);
        match state.out {
            Some(out) => {
                computed.insert(id);
                out_facts.insert(id, out);
            }
            None => {
                out_facts.insert(id, analysis.initial());
            }
        }
    }
    AnalysisResult {
        in_facts,
        out_facts,
        computed,
        stats: finish.stats,
        trace: finish.trace,
    }
}
