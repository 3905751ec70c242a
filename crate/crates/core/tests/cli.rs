mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use common::*;
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn flowstep(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_flowstep"))
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn fx(name: &str) -> String {
    fixture_path(name).to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn analyze(cfg: &str, analysis: &str, workers: usize, store: &Path) -> Run {
    flowstep(&[
        "analyze",
        "--cfg",
        cfg,
        "--analysis",
        analysis,
        "--workers",
        &workers.to_string(),
        "--store",
        s(store),
    ])
}

#[test]
fn analyze_writes_store_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("d.fst");
    let r = analyze(&fx("diamond.cfg"), "rd", 4, &store);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("supersteps"));
    let shown = flowstep(&["show", "--store", s(&store)]);
    assert!(
        shown.stdout.contains("4:IN {d1(x), d2(y), d3(z)}"),
        "{}",
        shown.stdout
    );

    let report: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("d.fst.report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["command"], "analyze");
    assert_eq!(report["run"]["workers"], 4);
    assert!(report["run"]["messages_sent"].is_u64());
    assert!(report["run"]["supersteps"].is_u64());
    let text = report.to_string();
    assert!(!text.contains("time") && !text.contains("elapsed"));
}

#[test]
fn worker_count_does_not_change_store_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for analysis in ["rd", "cp", "cache"] {
        let one = dir.path().join(format!("{analysis}1.fst"));
        let eight = dir.path().join(format!("{analysis}8.fst"));
        assert_eq!(analyze(&fx("chain10.cfg"), analysis, 1, &one).code, 0);
        assert_eq!(analyze(&fx("chain10.cfg"), analysis, 8, &eight).code, 0);
        assert_eq!(std::fs::read(one).unwrap(), std::fs::read(eight).unwrap());
    }
}

#[test]
fn usage_and_io_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("x.fst");
    let missing = analyze("/nonexistent/graph.cfg", "rd", 1, &store);
    assert_eq!(missing.code, 2);
    assert!(missing.stderr.contains("graph.cfg"));
    assert_eq!(analyze(&fx("diamond.cfg"), "liveness", 1, &store).code, 2);
    assert_eq!(analyze(&fx("diamond.cfg"), "rd", 0, &store).code, 2);
    assert_eq!(flowstep(&["analyze", "--cfg", &fx("diamond.cfg")]).code, 2);
    assert_eq!(flowstep(&["frobnicate"]).code, 2);
    assert_eq!(flowstep(&["show", "--store", s(&store)]).code, 2);
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "V 1 nop\nE 1 2\n").unwrap();
    let r = analyze(s(&bad), "rd", 1, &store);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 2"), "{}", r.stderr);
    assert_eq!(flowstep(&["--help"]).code, 0);
}

#[test]
fn analysis_failure_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.cfg");
    std::fs::write(&cfg, "V 1 assign x = 1 / 2\n").unwrap();
    let r = analyze(s(&cfg), "cp", 1, &dir.path().join("s.fst"));
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("vertex 1"));
}

#[test]
fn diff_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.txt");
    let r = flowstep(&[
        "diff",
        "--old",
        &fx("diamond.cfg"),
        "--new",
        &fx("diamond.cfg"),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");

    flowstep(&[
        "diff",
        "--old",
        &fx("edit_old.cfg"),
        "--new",
        &fx("edit_new.cfg"),
        "--out",
        s(&out),
    ]);
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        fixture("edit.changes")
    );

    let empty = dir.path().join("empty.cfg");
    std::fs::write(&empty, "").unwrap();
    flowstep(&[
        "diff",
        "--old",
        s(&empty),
        "--new",
        &fx("diamond.cfg"),
        "--out",
        s(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(
        text.lines()
            .all(|l| l.starts_with("AN ") || l.starts_with("AE ")),
        "{text}"
    );
}

fn incremental(cfg: &str, changes: &Path, store: &Path, mode: &str) -> Run {
    flowstep(&[
        "incremental",
        "--cfg",
        cfg,
        "--changes",
        s(changes),
        "--store",
        s(store),
        "--mode",
        mode,
    ])
}

#[test]
fn incremental_matches_fresh_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let changes = PathBuf::from(fx("edit.changes"));
    for analysis in ["rd", "cp", "cache"] {
        let fresh = dir.path().join(format!("{analysis}-fresh.fst"));
        assert_eq!(analyze(&fx("edit_new.cfg"), analysis, 2, &fresh).code, 0);
        for mode in ["naive", "opt"] {
            let store = dir.path().join(format!("{analysis}-{mode}.fst"));
            assert_eq!(analyze(&fx("edit_old.cfg"), analysis, 1, &store).code, 0);
            let r = incremental(&fx("edit_new.cfg"), &changes, &store, mode);
            assert_eq!(r.code, 0, "{}", r.stderr);
            assert_eq!(
                std::fs::read(&store).unwrap(),
                std::fs::read(&fresh).unwrap()
            );
            let report: Value = serde_json::from_str(
                &std::fs::read_to_string(format!("{}.report.json", s(&store))).unwrap(),
            )
            .unwrap();
            assert_eq!(report["impact"]["affected"], 6);
            assert_eq!(report["impact"]["sub_vertex_pct"], 85.71);
        }
    }
}

#[test]
fn empty_change_file_leaves_store_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.fst");
    let changes = dir.path().join("none.txt");
    std::fs::write(&changes, "# nothing\n").unwrap();
    analyze(&fx("chain10.cfg"), "rd", 1, &store);
    let before = std::fs::read(&store).unwrap();
    let r = incremental(&fx("chain10.cfg"), &changes, &store, "opt");
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("0 affected"), "{}", r.stdout);
    assert_eq!(std::fs::read(&store).unwrap(), before);
}

#[test]
fn incremental_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.fst");
    analyze(&fx("diamond.cfg"), "rd", 1, &store);
    let before = std::fs::read(&store).unwrap();
    let changes = PathBuf::from(fx("edit.changes"));
    // Optimized mode reads the stored facts of reused vertices, which this
    // store does not have.
    let r = incremental(&fx("edit_new.cfg"), &changes, &store, "opt");
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("inconsistent"), "{}", r.stderr);
    assert_eq!(std::fs::read(&store).unwrap(), before);
    // The change file does not describe the given graph.
    assert_eq!(
        incremental(&fx("diamond.cfg"), &changes, &store, "opt").code,
        2
    );
    assert_eq!(
        incremental(&fx("edit_new.cfg"), &changes, &store, "fast").code,
        2
    );
}

#[test]
fn verify_fixtures() {
    for name in CFG_FIXTURES {
        for analysis in ["rd", "cp", "cache"] {
            let r = flowstep(&[
                "verify",
                "--cfg",
                &fx(name),
                "--analysis",
                analysis,
                "--workers",
                "3",
            ]);
            assert_eq!(r.code, 0, "{name} {analysis}: {}{}", r.stdout, r.stderr);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.cfg");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(
        flowstep(&["verify", "--cfg", s(&empty), "--analysis", "rd"]).code,
        0
    );
}

#[test]
fn verify_reports_injected_fault() {
    let r = flowstep(&[
        "verify",
        "--cfg",
        &fx("diamond.cfg"),
        "--analysis",
        "rd",
        "--inject-fault",
    ]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    // Vertex 2's only incoming message is dropped.
    assert!(
        r.stdout.contains("divergence at vertex 2 IN"),
        "{}",
        r.stdout
    );
    assert!(r.stdout.contains("opt"));
}

#[test]
fn non_convergence_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.fst");
    let r = flowstep(&[
        "analyze",
        "--cfg",
        &fx("chain10.cfg"),
        "--analysis",
        "diverge",
        "--algo",
        "classic",
        "--max-supersteps",
        "40",
        "--store",
        s(&store),
    ]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("cap 40"), "{}", r.stderr);
    assert!(!store.exists());
    let v = flowstep(&[
        "verify",
        "--cfg",
        &fx("chain10.cfg"),
        "--analysis",
        "diverge",
    ]);
    assert_eq!(v.code, 3);
}
