mod common;

use common::*;
use flowstep_core::cfg::{
    apply_changes, diff_graphs, ChangeBatch, ChangeKind, ParseError, SuperGraph, VertexId,
};
use proptest::prelude::*;

#[test]
fn diamond_adjacency() {
    let g = fixture_graph("diamond.cfg");
    assert_eq!(g.preds(VertexId(4)), &[VertexId(2), VertexId(3)]);
    assert_eq!(g.succs(VertexId(1)), &[VertexId(2), VertexId(3)]);
    assert_eq!(
        g.entries().iter().copied().collect::<Vec<_>>(),
        vec![VertexId(1)]
    );
}

#[test]
fn worked_example_diff_and_apply() {
    let old = fixture_graph("edit_old.cfg");
    let new = fixture_graph("edit_new.cfg");
    let batch = diff_graphs(&old, &new);
    assert_eq!(
        batch.kinds(),
        [
            ChangeKind::AddEdgeExisting,
            ChangeKind::DeleteSourceNode,
            ChangeKind::ChangeSourceNode
        ]
        .into_iter()
        .collect()
    );
    assert_eq!(apply_changes(&old, &batch).unwrap(), new);
    let parsed = ChangeBatch::parse(&fixture("edit.changes"), &new).unwrap();
    assert_eq!(apply_changes(&old, &parsed).unwrap(), new);
    assert_eq!(parsed.kinds(), batch.kinds());
}

#[test]
fn disjoint_graphs_diff_to_deletions_and_additions() {
    let old = SuperGraph::parse("V 1 nop\nV 2 nop\nE 1 2\n").unwrap();
    let new = SuperGraph::parse("V 5 nop\nV 6 use x\nE 5 6\n").unwrap();
    let batch = diff_graphs(&old, &new);
    assert_eq!(apply_changes(&old, &batch).unwrap(), new);
    let additions = diff_graphs(&SuperGraph::empty(), &new);
    assert!(additions.kinds().iter().all(|k| matches!(
        k,
        ChangeKind::AddEdgeExisting | ChangeKind::AddSourceNode | ChangeKind::AddDestNode
    )));
    assert!(diff_graphs(&new, &new).is_empty());
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = SuperGraph::parse("V 1 nop\nV 1 nop\n").unwrap_err();
    assert!(matches!(err, ParseError::DuplicateVertex { line: 2, .. }));
    let err = SuperGraph::parse("V 1 nop\n\nE 1 3\n").unwrap_err();
    assert!(matches!(err, ParseError::UnknownVertex { line: 3, .. }));
    assert!(SuperGraph::parse("V 1 frobnicate\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn render_parse_round_trip(seed in any::<u64>()) {
        let g = random_graph(&mut rng(seed), 25, 60);
        prop_assert_eq!(SuperGraph::parse(&g.render()).unwrap(), g);
    }

    #[test]
    fn diff_apply_and_change_files(seed in any::<u64>(), edit in 0usize..7) {
        let mut r = rng(seed);
        let old = random_graph(&mut r, 25, 60);
        let new = mutate(&mut r, &old, EDITS[edit]);
        let batch = diff_graphs(&old, &new);
        prop_assert_eq!(apply_changes(&old, &batch).unwrap(), new.clone());
        let reparsed = ChangeBatch::parse(&batch.render(), &new).unwrap();
        prop_assert_eq!(reparsed, batch);
    }
}
