//! C interface to the flowstep engine.
//!
//! All objects are opaque handles created and destroyed by this library.
//! Every fallible function returns an [`FsStatus`]; on failure a message is
//! available from [`fs_last_error`] on the calling thread until the next call
//! into the library from that thread. Strings returned through `char **`
//! out-parameters are owned by the caller and must be released with
//! [`fs_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flowstep_core::cfg::{ChangeBatch, SuperGraph, VertexId};
use flowstep_core::clients::{ClientSpec, ConstProp, MustCache, ReachingDefs};
use flowstep_core::engine::{run, Algorithm, EngineConfig, EngineError, RunStats};
use flowstep_core::incremental::{result_batch, run_incremental, IncrementalError, Mode};
use flowstep_core::lattice::{Analysis, Fingerprint};
use flowstep_core::store::{FactStore, WriteBatch};
use flowstep_core::verify::verify;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Analysis = 5,
    NonConvergence = 6,
    Store = 7,
    Io = 8,
    NotFound = 9,
    Panic = 10,
}

/// `algorithm` argument of [`fs_analyze`].
pub const FS_ALGO_CLASSIC: u32 = 0;
pub const FS_ALGO_OPT: u32 = 1;
/// `mode` argument of [`fs_incremental`].
pub const FS_MODE_NAIVE: u32 = 0;
pub const FS_MODE_OPT: u32 = 1;
/// `slot` argument of [`fs_result_fact`].
pub const FS_SLOT_IN: u32 = 0;
pub const FS_SLOT_OUT: u32 = 1;

/// A parsed control-flow graph.
pub struct FsGraph {
    graph: SuperGraph,
}

/// Converged facts of one analysis run.
pub struct FsResult {
    fingerprint: Fingerprint,
    facts: BTreeMap<(u64, u32), CString>,
    batch: WriteBatch,
    stats: RunStats,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(FsStatus, String);

impl Failure {
    fn new(status: FsStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::NonConvergence { .. } => FsStatus::NonConvergence,
            _ => FsStatus::Analysis,
        };
        Failure::new(status, e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FsStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            FsStatus::NullArgument,
            format!("{name} is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(FsStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(FsStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(FsStatus::NullArgument, format!("{name} is null")))
}

fn client(name: &str, sets: u32, assoc: u32) -> Result<ClientSpec, Failure> {
    ClientSpec::from_name(name, sets as usize, assoc)
        .map_err(|m| Failure::new(FsStatus::InvalidArgument, m))
}

fn c_string(s: String) -> CString {
    CString::new(s.replace('\0', " ")).unwrap_or_default()
}

/// Message describing the last failure on this thread; empty after a
/// successful call. Never null; owned by the library.
#[no_mangle]
pub extern "C" fn fs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse a CFG from its text form.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_parse(text: *const c_char, out: *mut *mut FsGraph) -> FsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let graph = SuperGraph::parse(str_arg(text, "text")?)
            .map_err(|e| Failure::new(FsStatus::Parse, e))?;
        *out = Box::into_raw(Box::new(FsGraph { graph }));
        Ok(())
    })
}

/// Release a graph. Null is ignored.
///
/// # Safety
/// `graph` must come from [`fs_graph_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_free(graph: *mut FsGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of vertices, or 0 for a null graph.
///
/// # Safety
/// `graph` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_vertex_count(graph: *const FsGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.len())
}

/// Number of edges, or 0 for a null graph.
///
/// # Safety
/// `graph` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn fs_graph_edge_count(graph: *const FsGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.edge_count())
}

fn analyze_with<A: Analysis>(
    graph: &SuperGraph,
    a: &A,
    config: &EngineConfig,
) -> Result<FsResult, Failure> {
    let result = run(graph, a, config)?;
    let mut facts = BTreeMap::new();
    for (v, f) in &result.in_facts {
        facts.insert((v.0, FS_SLOT_IN), c_string(f.to_string()));
    }
    for (v, f) in &result.out_facts {
        facts.insert((v.0, FS_SLOT_OUT), c_string(f.to_string()));
    }
    Ok(FsResult {
        fingerprint: a.fingerprint(),
        facts,
        batch: result_batch::<A>(&result),
        stats: result.stats,
    })
}

/// Evaluate `$body` with `$a` bound to the analysis selected by `$spec`.
macro_rules! with_analysis {
    ($spec:expr, |$a:ident| $body:expr) => {
        match $spec {
            ClientSpec::Reaching => {
                let $a = &ReachingDefs;
                $body
            }
            ClientSpec::ConstProp => {
                let $a = &ConstProp;
                $body
            }
            ClientSpec::Cache(c) => {
                let $a = &c;
                $body
            }
            other => Err(Failure::new(
                FsStatus::InvalidArgument,
                format!("analysis `{other}` is not exported"),
            )),
        }
    };
}

/// Analyze `graph` with the analysis named `analysis` (`rd`, `cp` or
/// `cache`; `sets`/`assoc` only matter for `cache`). `algorithm` is
/// `FS_ALGO_CLASSIC` or `FS_ALGO_OPT`; `workers` must be at least 1.
///
/// # Safety
/// `graph` must be a live graph handle, `analysis` a NUL-terminated string
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_analyze(
    graph: *const FsGraph,
    analysis: *const c_char,
    sets: u32,
    assoc: u32,
    algorithm: u32,
    workers: u32,
    out: *mut *mut FsResult,
) -> FsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let graph = &ref_arg(graph, "graph")?.graph;
        let spec = client(str_arg(analysis, "analysis")?, sets, assoc)?;
        let algorithm = match algorithm {
            FS_ALGO_CLASSIC => Algorithm::Classic,
            FS_ALGO_OPT => Algorithm::Optimized,
            other => {
                return Err(Failure::new(
                    FsStatus::InvalidArgument,
                    format!("unknown algorithm {other}"),
                ))
            }
        };
        if workers == 0 {
            return Err(Failure::new(
                FsStatus::InvalidArgument,
                "workers must be at least 1",
            ));
        }
        let config = EngineConfig::new(algorithm, workers as usize);
        let result = with_analysis!(spec, |a| analyze_with(graph, a, &config))?;
        *out = Box::into_raw(Box::new(result));
        Ok(())
    })
}

/// Release a result. Null is ignored.
///
/// # Safety
/// `result` must come from [`fs_analyze`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fs_result_free(result: *mut FsResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Supersteps the run took, or 0 for a null result.
///
/// # Safety
/// `result` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn fs_result_supersteps(result: *const FsResult) -> u64 {
    result.as_ref().map_or(0, |r| r.stats.supersteps as u64)
}

/// Messages the run sent, or 0 for a null result.
///
/// # Safety
/// `result` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn fs_result_messages(result: *const FsResult) -> u64 {
    result.as_ref().map_or(0, |r| r.stats.messages_sent)
}

/// Text form of the fact at `vertex` (`slot` is `FS_SLOT_IN` or
/// `FS_SLOT_OUT`). Free the string with [`fs_string_free`].
///
/// # Safety
/// `result` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_result_fact(
    result: *const FsResult,
    vertex: u64,
    slot: u32,
    out: *mut *mut c_char,
) -> FsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let result = ref_arg(result, "result")?;
        if slot != FS_SLOT_IN && slot != FS_SLOT_OUT {
            return Err(Failure::new(
                FsStatus::InvalidArgument,
                format!("unknown slot {slot}"),
            ));
        }
        let fact = result.facts.get(&(vertex, slot)).ok_or_else(|| {
            Failure::new(
                FsStatus::NotFound,
                format!("no vertex {}", VertexId(vertex)),
            )
        })?;
        *out = fact.clone().into_raw();
        Ok(())
    })
}

/// Write the result to a store file at `path`, replacing any existing file.
///
/// # Safety
/// `result` must be a live result handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fs_result_save(result: *const FsResult, path: *const c_char) -> FsStatus {
    guard(|| {
        let result = ref_arg(result, "result")?;
        let path = str_arg(path, "path")?;
        FactStore::create_with(path, result.fingerprint.clone(), result.batch.clone())
            .map_err(|e| Failure::new(FsStatus::Store, e))?;
        Ok(())
    })
}

/// Bring the store at `store_path` up to date with `new_graph` after the
/// edits in `changes` (change-file text). `mode` is `FS_MODE_NAIVE` or
/// `FS_MODE_OPT`. On success `*report_json` receives the JSON report.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fs_incremental(
    new_graph: *const FsGraph,
    changes: *const c_char,
    store_path: *const c_char,
    mode: u32,
    workers: u32,
    report_json: *mut *mut c_char,
) -> FsStatus {
    guard(|| {
        let report_json = out_arg(report_json, "report_json")?;
        *report_json = ptr::null_mut();
        let graph = &ref_arg(new_graph, "new_graph")?.graph;
        let batch = ChangeBatch::parse(str_arg(changes, "changes")?, graph)
            .map_err(|e| Failure::new(FsStatus::Parse, e))?;
        let path = str_arg(store_path, "store_path")?;
        let mode = match mode {
            FS_MODE_NAIVE => Mode::Naive,
            FS_MODE_OPT => Mode::Optimized,
            other => {
                return Err(Failure::new(
                    FsStatus::InvalidArgument,
                    format!("unknown mode {other}"),
                ))
            }
        };
        if workers == 0 {
            return Err(Failure::new(
                FsStatus::InvalidArgument,
                "workers must be at least 1",
            ));
        }
        let mut store = FactStore::open(path).map_err(|e| Failure::new(FsStatus::Store, e))?;
        let spec = ClientSpec::from_fingerprint(store.fingerprint())
            .map_err(|m| Failure::new(FsStatus::Store, m))?;
        let config = EngineConfig::new(Algorithm::Optimized, workers as usize);
        let report = with_analysis!(spec, |a| {
            run_incremental(graph, &batch, &mut store, a, mode, &config)
                .map(|o| o.report)
                .map_err(|e| match e {
                    IncrementalError::Engine(e) => Failure::from(e),
                    other => Failure::new(FsStatus::Store, other),
                })
        })?;
        let json = serde_json::to_string(&report).map_err(|e| Failure::new(FsStatus::Io, e))?;
        *report_json = c_string(json).into_raw();
        Ok(())
    })
}

/// Solve `graph` with both engine algorithms and both sequential solvers.
/// `*agree` is set to 1 if all four agree and 0 otherwise, in which case
/// [`fs_last_error`] describes the first divergence.
///
/// # Safety
/// Pointers must be valid; `analysis` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fs_verify(
    graph: *const FsGraph,
    analysis: *const c_char,
    workers: u32,
    agree: *mut i32,
) -> FsStatus {
    let mut divergence = None;
    let status = guard(|| {
        let agree = out_arg(agree, "agree")?;
        *agree = 0;
        let graph = &ref_arg(graph, "graph")?.graph;
        let spec = client(
            str_arg(analysis, "analysis")?,
            MustCache::DEFAULT_SETS as u32,
            MustCache::DEFAULT_ASSOC,
        )?;
        let config = EngineConfig::new(Algorithm::Optimized, workers.max(1) as usize);
        let found = with_analysis!(spec, |a| Ok(
            verify(graph, a, &config, 0)?.map(|d| d.to_string())
        ))?;
        *agree = i32::from(found.is_none());
        divergence = found;
        Ok(())
    });
    if let Some(d) = divergence {
        set_error(d);
    }
    status
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
