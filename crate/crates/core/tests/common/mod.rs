//! Random generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use flowstep_core::cfg::{Operand, Stmt, Stmts, SuperGraph, VertexAttribute, VertexId};
use flowstep_core::clients::{
    CacheFact, ConstFact, ConstValue, Definition, MustCache, ReachingFact,
};
use flowstep_core::engine::{run, EngineConfig};
use flowstep_core::incremental::result_batch;
use flowstep_core::lattice::Analysis;
use flowstep_core::store::FactStore;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn fixture_graph(name: &str) -> SuperGraph {
    SuperGraph::parse(&fixture(name)).unwrap()
}

pub const CFG_FIXTURES: [&str; 6] = [
    "diamond.cfg",
    "chain10.cfg",
    "edit_old.cfg",
    "edit_new.cfg",
    "cp_diamond.cfg",
    "cache_diamond.cfg",
];

const VARS: [&str; 3] = ["x", "y", "z"];
const OPS: [&str; 3] = ["+", "-", "*"];

fn operand(rng: &mut TestRng) -> Operand {
    if rng.gen_bool(0.5) {
        Operand::Const(rng.gen_range(-2..=3))
    } else {
        Operand::Var(VARS.choose(rng).unwrap().to_string())
    }
}

pub fn random_stmt(rng: &mut TestRng) -> Stmt {
    let var = VARS.choose(rng).unwrap().to_string();
    match rng.gen_range(0..6) {
        0 | 1 => Stmt::Def {
            var,
            def_id: format!("d{}", rng.gen_range(0..12)),
        },
        2 => Stmt::Use { var },
        3 => Stmt::Assign {
            dst: var,
            value: operand(rng),
        },
        4 => Stmt::AssignOp {
            dst: var,
            lhs: operand(rng),
            op: OPS.choose(rng).unwrap().to_string(),
            rhs: operand(rng),
        },
        _ => Stmt::Access {
            block: rng.gen_range(0..10),
        },
    }
}

pub fn random_stmts(rng: &mut TestRng) -> Stmts {
    let n = rng.gen_range(0..=3);
    Stmts((0..n).map(|_| random_stmt(rng)).collect())
}

/// Flag one vertex as an entry if the graph has vertices but no entry.
fn ensure_entry(
    rng: &mut TestRng,
    vertices: &mut BTreeMap<VertexId, VertexAttribute>,
    edges: &BTreeSet<(VertexId, VertexId)>,
) -> SuperGraph {
    let g = SuperGraph::new(vertices.clone(), edges.clone()).unwrap();
    if !g.is_empty() && g.entries().is_empty() {
        let ids: Vec<VertexId> = vertices.keys().copied().collect();
        let pick = *ids.choose(rng).unwrap();
        vertices.get_mut(&pick).unwrap().entry = true;
        return SuperGraph::new(vertices.clone(), edges.clone()).unwrap();
    }
    g
}

/// A random CFG with 1..=`max_v` vertices and at most `max_e` edges. Ids are
/// sparse, cycles and self-loops occur, and about a third of the graphs flag
/// explicit entries.
pub fn random_graph(rng: &mut TestRng, max_v: usize, max_e: usize) -> SuperGraph {
    let n = rng.gen_range(1..=max_v);
    let mut pool: Vec<u64> = (1..=(3 * n as u64)).collect();
    pool.shuffle(rng);
    let ids: Vec<VertexId> = pool[..n].iter().copied().map(VertexId).collect();
    let mut vertices = BTreeMap::new();
    for id in &ids {
        vertices.insert(*id, VertexAttribute::new(random_stmts(rng)));
    }
    let m = rng.gen_range(0..=max_e.min(n * n));
    let mut edges = BTreeSet::new();
    for _ in 0..m {
        edges.insert((*ids.choose(rng).unwrap(), *ids.choose(rng).unwrap()));
    }
    if rng.gen_bool(1.0 / 3.0) {
        for _ in 0..rng.gen_range(1..=3) {
            vertices.get_mut(ids.choose(rng).unwrap()).unwrap().entry = true;
        }
    }
    ensure_entry(rng, &mut vertices, &edges)
}

/// Edits applied by [`mutate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edit {
    AddEdge,
    AddNodeBefore,
    AddNodeAfter,
    AddIsolatedNode,
    DeleteEdge,
    DeleteNode,
    ChangeNode,
}

pub const EDITS: [Edit; 7] = [
    Edit::AddEdge,
    Edit::AddNodeBefore,
    Edit::AddNodeAfter,
    Edit::AddIsolatedNode,
    Edit::DeleteEdge,
    Edit::DeleteNode,
    Edit::ChangeNode,
];

/// A modified copy of `g`: `first` is applied, followed by up to three
/// random edits. The result always has an entry unless it is empty.
pub fn mutate(rng: &mut TestRng, g: &SuperGraph, first: Edit) -> SuperGraph {
    let mut vertices = g.vertices().clone();
    let mut edges = g.edges().clone();
    let mut next_id = vertices.keys().last().map_or(1, |v| v.0 + 1);
    let extra = rng.gen_range(0..=3);
    let mut plan = vec![first];
    plan.extend((0..extra).map(|_| *EDITS.choose(rng).unwrap()));
    for edit in plan {
        let ids: Vec<VertexId> = vertices.keys().copied().collect();
        let pick = |rng: &mut TestRng| ids.choose(rng).copied();
        match edit {
            Edit::AddEdge => {
                if let (Some(a), Some(b)) = (pick(rng), pick(rng)) {
                    edges.insert((a, b));
                }
            }
            Edit::AddNodeBefore | Edit::AddNodeAfter | Edit::AddIsolatedNode => {
                let new = VertexId(next_id);
                next_id += 1;
                vertices.insert(new, VertexAttribute::new(random_stmts(rng)));
                if let Some(old) = pick(rng) {
                    match edit {
                        Edit::AddNodeBefore => {
                            edges.insert((new, old));
                        }
                        Edit::AddNodeAfter => {
                            edges.insert((old, new));
                        }
                        _ => {}
                    }
                }
            }
            Edit::DeleteEdge => {
                let list: Vec<_> = edges.iter().copied().collect();
                if let Some(e) = list.choose(rng) {
                    edges.remove(e);
                }
            }
            Edit::DeleteNode => {
                if ids.len() > 1 {
                    let v = pick(rng).unwrap();
                    vertices.remove(&v);
                    edges.retain(|(a, b)| *a != v && *b != v);
                }
            }
            Edit::ChangeNode => {
                if let Some(v) = pick(rng) {
                    let attr = vertices.get_mut(&v).unwrap();
                    let mut stmts = random_stmts(rng);
                    if stmts == attr.stmts {
                        stmts.0.push(Stmt::Use { var: "x".into() });
                    }
                    attr.stmts = stmts;
                }
            }
        }
    }
    ensure_entry(rng, &mut vertices, &edges)
}

/// Facts of a from-scratch optimized run, as a store.
pub fn scratch_store<A: Analysis>(g: &SuperGraph, a: &A) -> FactStore {
    let result = run(g, a, &EngineConfig::default()).unwrap();
    let mut store = FactStore::in_memory(a.fingerprint());
    store.commit(result_batch::<A>(&result)).unwrap();
    store
}

/// Random ordered fact pairs `(f, g)` with `f <= g`.
pub fn reaching_pair(rng: &mut TestRng) -> (ReachingFact, ReachingFact) {
    let universe: Vec<Definition> = (0..12)
        .map(|i| Definition::new(format!("d{i}"), VARS[i % 3]))
        .collect();
    let g: ReachingFact = universe
        .iter()
        .filter(|_| rng.gen_bool(0.5))
        .cloned()
        .collect();
    let f: ReachingFact = g.0.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
    (f, g)
}

fn const_value(rng: &mut TestRng) -> ConstValue {
    if rng.gen_bool(0.3) {
        ConstValue::Top
    } else {
        ConstValue::Const(rng.gen_range(-2..=3))
    }
}

pub fn const_pair(rng: &mut TestRng) -> (ConstFact, ConstFact) {
    let mut f = BTreeMap::new();
    let mut g = BTreeMap::new();
    for var in VARS {
        if rng.gen_bool(0.25) {
            continue;
        }
        let gv = const_value(rng);
        g.insert(var.to_string(), gv);
        match rng.gen_range(0..3) {
            0 => {}
            1 => {
                f.insert(var.to_string(), gv);
            }
            _ => {
                if gv == ConstValue::Top {
                    f.insert(var.to_string(), const_value(rng));
                }
            }
        }
    }
    (ConstFact(f), ConstFact(g))
}

fn cache_fact(rng: &mut TestRng, c: &MustCache) -> CacheFact {
    let sets = (0..c.sets())
        .map(|s| {
            (0..3u64)
                .map(|k| s as u64 + k * c.sets() as u64)
                .filter_map(|b| {
                    if rng.gen_bool(0.5) {
                        Some((b, rng.gen_range(0..c.assoc())))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    CacheFact::Reached(sets)
}

/// `f <= g` in the must-cache order: `f` guarantees a subset of `g`'s
/// blocks, each with an age bound at least as large.
pub fn cache_pair(rng: &mut TestRng, c: &MustCache) -> (CacheFact, CacheFact) {
    if rng.gen_bool(0.1) {
        return (cache_fact(rng, c), CacheFact::Unreached);
    }
    let g = cache_fact(rng, c);
    let CacheFact::Reached(gs) = &g else {
        unreachable!()
    };
    let fs = gs
        .iter()
        .map(|set| {
            set.iter()
                .filter_map(|(b, age)| {
                    if rng.gen_bool(0.7) {
                        Some((*b, rng.gen_range(*age..c.assoc())))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    (CacheFact::Reached(fs), g)
}

/// Straight-line CFG `1 -> 2 -> ... -> n` with one access per vertex.
pub fn access_chain(blocks: &[u64]) -> SuperGraph {
    let vertices = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            (
                VertexId(i as u64 + 1),
                VertexAttribute::new(vec![Stmt::Access { block: *b }]),
            )
        })
        .collect();
    let edges = (1..blocks.len() as u64)
        .map(|i| (VertexId(i), VertexId(i + 1)))
        .collect();
    SuperGraph::new(vertices, edges).unwrap()
}

/// Chain `1 -> ... -> n`; vertex 1 defines x, the rest are no-ops.
pub fn def_chain(n: u64) -> SuperGraph {
    let mut text = String::from("V 1 def x d1\n");
    for v in 2..=n {
        text.push_str(&format!("V {v} nop\nE {} {v}\n", v - 1));
    }
    SuperGraph::parse(&text).unwrap()
}
