//! Cross-checking the two engine algorithms against the sequential solvers.

use std::fmt;

use crate::cfg::{SuperGraph, VertexId};
use crate::engine::{run, Algorithm, AnalysisResult, EngineConfig, EngineError};
use crate::lattice::Analysis;
use crate::oracle::{run_chaotic, run_sequential};
use crate::store::Slot;

pub const SOLVERS: [&str; 4] = ["classic", "opt", "sequential", "chaotic"];

/// The first vertex (in id order) where the solvers disagree, with the value
/// each solver computed for the slot, rendered with the fact's `Display`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub vertex: VertexId,
    pub slot: Slot,
    pub values: Vec<(&'static str, String)>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "divergence at vertex {} {}:", self.vertex, self.slot)?;
        for (solver, value) in &self.values {
            write!(f, "\n  {solver:<10} {value}")?;
        }
        Ok(())
    }
}

/// Solve `graph` four ways and compare every IN and OUT fact.
///
/// `config` supplies the worker count, superstep cap and test hooks for the
/// two engine runs; its algorithm field is ignored.
pub fn verify<A: Analysis>(
    graph: &SuperGraph,
    analysis: &A,
    config: &EngineConfig,
    chaotic_seed: u64,
) -> Result<Option<Divergence>, EngineError> {
    let classic = run(
        graph,
        analysis,
        &EngineConfig {
            algorithm: Algorithm::Classic,
            ..config.clone()
        },
    )?;
    let opt = run(
        graph,
        analysis,
        &EngineConfig {
            algorithm: Algorithm::Optimized,
            ..config.clone()
        },
    )?;
    let sequential = run_sequential(graph, analysis)?;
    let chaotic = run_chaotic(graph, analysis, chaotic_seed)?;
    Ok(first_divergence(
        graph,
        [&classic, &opt, &sequential, &chaotic],
    ))
}

fn first_divergence<F: crate::lattice::Fact>(
    graph: &SuperGraph,
    results: [&AnalysisResult<F>; 4],
) -> Option<Divergence> {
    for v in graph.vertex_ids() {
        for slot in [Slot::In, Slot::Out] {
            let pick = |r: &AnalysisResult<F>| match slot {
                Slot::In => r.in_facts.get(&v).cloned(),
                Slot::Out => r.out_facts.get(&v).cloned(),
            };
            let first = pick(results[0]);
            if results[1..].iter().any(|r| pick(r) != first) {
                let values = SOLVERS
                    .iter()
                    .zip(results)
                    .map(|(name, r)| {
                        let shown =
                            pick(r).map_or_else(|| "<missing>".to_string(), |f| f.to_string());
                        (*name, shown)
                    })
                    .collect();
                return Some(Divergence {
                    vertex: v,
                    slot,
                    values,
                });
            }
        }
    }
    None
}
