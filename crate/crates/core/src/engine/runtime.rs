//! Generic synchronous vertex-centric runtime.
//!
//! Vertices are hash-partitioned over workers. In each superstep every
//! partition runs its active vertices on its own thread; messages, published
//! values and activations are buffered and only become visible after the
//! barrier. Nothing a vertex observes depends on the partitioning, which is
//! what makes results identical for every worker count.

use std::collections::HashMap;

use crate::cfg::{SuperGraph, VertexId};

use super::{EngineError, RunStats};

/// Dense, sorted view of a graph's adjacency.
pub(crate) struct Topology {
    pub ids: Vec<VertexId>,
    pub index: HashMap<VertexId, usize>,
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(graph: &SuperGraph) -> Self {
        let ids: Vec<VertexId> = graph.vertex_ids().collect();
        let index: HashMap<VertexId, usize> =
            ids.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let dense = |list: &[VertexId]| list.iter().map(|v| index[v]).collect::<Vec<_>>();
        let preds = ids.iter().map(|v| dense(graph.preds(*v))).collect();
        let succs = ids.iter().map(|v| dense(graph.succs(*v))).collect();
        Topology {
            ids,
            index,
            preds,
            succs,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }
}

/// Worker owning a vertex: a fixed 64-bit mix of the id, modulo the worker
/// count. Stable across runs and platforms.
pub fn owner(v: VertexId, workers: usize) -> usize {
    let mut z = v.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z % workers as u64) as usize
}

/// What a vertex sees while computing.
pub(crate) struct Ctx<'a, P> {
    pub idx: usize,
    pub id: VertexId,
    topo: &'a Topology,
    snapshot: &'a [Option<P>],
}

impl<'a, P> Ctx<'a, P> {
    /// Values predecessors published up to the last barrier, in id order.
    /// Predecessors that never published are skipped.
    pub fn pred_published(&self) -> impl Iterator<Item = &'a P> + 'a {
        let snapshot = self.snapshot;
        self.topo.preds[self.idx]
            .iter()
            .filter_map(move |p| snapshot[*p].as_ref())
    }
}

/// Result of one vertex computation.
pub(crate) struct Outcome<M, P> {
    /// Replaces this vertex's published value after the barrier.
    pub publish: Option<P>,
    /// Sent to every successor, which are then activated.
    pub broadcast: Option<M>,
    /// Activate successors without sending anything.
    pub activate_successors: bool,
    /// Predecessor values read from the snapshot.
    pub pulls: usize,
    /// Whether the vertex's output changed.
    pub updated: bool,
}

impl<M, P> Outcome<M, P> {
    pub fn quiet() -> Self {
        Outcome {
            publish: None,
            broadcast: None,
            activate_successors: false,
            pulls: 0,
            updated: false,
        }
    }
}

pub(crate) trait VertexProgram: Sync {
    type State: Send;
    type Msg: Clone + Send + Sync;
    type Pub: Clone + Send + Sync;

    /// `inbox` holds the messages delivered at the last barrier, sorted by
    /// sender id.
    fn compute(
        &self,
        ctx: &Ctx<'_, Self::Pub>,
        state: &mut Self::State,
        inbox: &[(VertexId, Self::Msg)],
    ) -> Result<Outcome<Self::Msg, Self::Pub>, EngineError>;
}

/// Superstep-0 configuration of a run.
pub(crate) struct Start<S, M, P> {
    /// Dense per-vertex state.
    pub states: Vec<S>,
    pub snapshot: Vec<Option<P>>,
    /// `(dst, src, msg)`; `src` may lie outside the topology.
    pub messages: Vec<(usize, VertexId, M)>,
    pub active: Vec<usize>,
}

pub(crate) struct Finish<S, P> {
    pub states: Vec<S>,
    pub stats: RunStats,
    /// Published values per superstep, when tracing.
    pub trace: Vec<Vec<(VertexId, P)>>,
}

struct Partition<S, M> {
    members: Vec<usize>,
    states: Vec<S>,
    inbox: Vec<Vec<(VertexId, M)>>,
    active: Vec<bool>,
}

struct StepOutput<M, P> {
    publishes: Vec<(usize, P)>,
    sends: Vec<(usize, VertexId, M)>,
    activations: Vec<usize>,
    computed: usize,
    messages: u64,
    updates: u64,
    error: Option<(VertexId, EngineError)>,
}

fn step<Prog: VertexProgram>(
    prog: &Prog,
    topo: &Topology,
    snapshot: &[Option<Prog::Pub>],
    part: &mut Partition<Prog::State, Prog::Msg>,
) -> StepOutput<Prog::Msg, Prog::Pub> {
    let mut out = StepOutput {
        publishes: Vec::new(),
        sends: Vec::new(),
        activations: Vec::new(),
        computed: 0,
        messages: 0,
        updates: 0,
        error: None,
    };
    for local in 0..part.members.len() {
        if !std::mem::take(&mut part.active[local]) {
            continue;
        }
        let idx = part.members[local];
        let mut inbox = std::mem::take(&mut part.inbox[local]);
        inbox.sort_by_key(|(src, _)| *src);
        let ctx = Ctx {
            idx,
            id: topo.ids[idx],
            topo,
            snapshot,
        };
        out.computed += 1;
        let outcome = match prog.compute(&ctx, &mut part.states[local], &inbox) {
            Ok(o) => o,
            Err(e) => {
                out.error = Some((ctx.id, e));
                return out;
            }
        };
        out.messages += outcome.pulls as u64;
        if outcome.updated {
            out.updates += 1;
        }
        if let Some(p) = outcome.publish {
            out.publishes.push((idx, p));
        }
        let succs = &topo.succs[idx];
        if let Some(msg) = outcome.broadcast {
            out.messages += succs.len() as u64;
            for &s in succs {
                out.sends.push((s, ctx.id, msg.clone()));
            }
            out.activations.extend_from_slice(succs);
        } else if outcome.activate_successors {
            out.activations.extend_from_slice(succs);
        }
    }
    out
}

/// Run `prog` to quiescence, or fail once `cap` supersteps have executed
/// with work still pending.
pub(crate) fn execute<Prog: VertexProgram>(
    prog: &Prog,
    topo: &Topology,
    workers: usize,
    cap: usize,
    trace: bool,
    start: Start<Prog::State, Prog::Msg, Prog::Pub>,
) -> Result<Finish<Prog::State, Prog::Pub>, EngineError> {
    let workers = workers.max(1);
    let n = topo.len();
    let mut placement = vec![(0usize, 0usize); n];
    let mut parts: Vec<Partition<Prog::State, Prog::Msg>> = (0..workers)
        .map(|_| Partition {
            members: Vec::new(),
            states: Vec::new(),
            inbox: Vec::new(),
            active: Vec::new(),
        })
        .collect();
    for (idx, state) in start.states.into_iter().enumerate() {
        let w = owner(topo.ids[idx], workers);
        let part = &mut parts[w];
        placement[idx] = (w, part.members.len());
        part.members.push(idx);
        part.states.push(state);
        part.inbox.push(Vec::new());
        part.active.push(false);
    }
    let mut snapshot = start.snapshot;
    let mut any_active = false;
    for idx in start.active {
        let (w, l) = placement[idx];
        parts[w].active[l] = true;
        any_active = true;
    }
    for (dst, src, msg) in start.messages {
        let (w, l) = placement[dst];
        parts[w].inbox[l].push((src, msg));
        parts[w].active[l] = true;
        any_active = true;
    }

    let mut stats = RunStats::default();
    let mut traced = Vec::new();
    while any_active {
        if stats.supersteps >= cap {
            return Err(EngineError::NonConvergence {
                cap,
                supersteps: stats.supersteps,
            });
        }
        let outputs: Vec<StepOutput<Prog::Msg, Prog::Pub>> = if workers == 1 {
            parts
                .iter_mut()
                .map(|p| step(prog, topo, &snapshot, p))
                .collect()
        } else {
            let snap = &snapshot;
            std::thread::scope(|scope| {
                let handles: Vec<_> = parts
                    .iter_mut()
                    .map(|p| scope.spawn(move || step(prog, topo, snap, p)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker thread panicked"))
                    .collect()
            })
        };

        // Barrier.
        if let Some((_, err)) = outputs
            .iter()
            .filter_map(|o| o.error.as_ref())
            .min_by_key(|(v, _)| *v)
        {
            return Err(err.clone());
        }
        stats.supersteps += 1;
        let mut computed = 0;
        let mut step_trace = Vec::new();
        any_active = false;
        for out in outputs {
            computed += out.computed;
            stats.messages_sent += out.messages;
            stats.out_updates += out.updates;
            for (idx, p) in out.publishes {
                if trace {
                    step_trace.push((topo.ids[idx], p.clone()));
                }
                snapshot[idx] = Some(p);
            }
            for (dst, src, msg) in out.sends {
                let (w, l) = placement[dst];
                parts[w].inbox[l].push((src, msg));
            }
            for idx in out.activations {
                let (w, l) = placement[idx];
                parts[w].active[l] = true;
                any_active = true;
            }
        }
        stats.active_per_superstep.push(computed);
        if trace {
            step_trace.sort_by_key(|(v, _)| *v);
            traced.push(step_trace);
        }
    }

    let mut states: Vec<Option<Prog::State>> = (0..n).map(|_| None).collect();
    for part in parts {
        for (idx, state) in part.members.into_iter().zip(part.states) {
            states[idx] = Some(state);
        }
    }
    Ok(Finish {
        states: states
            .into_iter()
            .map(|s| s.expect("every vertex is owned"))
            .collect(),
        stats,
        trace: traced,
    })
}
