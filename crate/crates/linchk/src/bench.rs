//! Curated benchmark models with expected verdicts.
//!
//! The registry holds a fixed set of concurrent-object models, each with
//! the verdicts the checker is expected to produce at a default client
//! configuration: classic nonblocking structures that are linearizable and
//! lock-free, lock-based structures that are linearizable but not
//! lock-free, and a seeded-bug variant that is not linearizable at all.
//! `run_benchmark` runs the applicable checks on one entry and reports
//! state-space sizes before and after quotienting, the reduction factor,
//! wall time, and whether the verdicts matched the expectations.
//!
//! Linked structures are modeled over bounded node pools because the
//! modeling language has no dynamic allocation; a pool of total ops + 1
//! nodes (one per possible insertion plus a dummy) is exact at the default
//! configuration. `scaled_source` rewrites the bounds for larger op
//! budgets so that growth trends can be measured.

use std::collections::BTreeMap;
use std::time::Instant;

use thiserror::Error;

use crate::explorer::ClientConfig;
use crate::lts::Value;
use crate::modelir::parse_model;
use crate::progress::{check_lockfree, ProgressCheckRequest};
use crate::refine::{check_linearizability, RefineError, Verdict};

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Shape of a benchmark's sequential specification.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SpecKind {
    /// FIFO queue.
    Queue,
    /// LIFO stack.
    Stack,
    /// Membership set.
    Set,
}

/// One registry entry: a model source with its expected verdicts.
#[derive(Clone, Copy, Debug)]
pub struct Benchmark {
    pub name: &'static str,
    /// Repository-relative path of the model source.
    pub source_path: &'static str,
    /// Embedded model text; `source_path` holds the same bytes.
    pub source: &'static str,
    pub kind: SpecKind,
    pub expected_linearizable: bool,
    /// Expected lock-freedom verdict against the atomic-block
    /// specification, or `None` when the check is not part of the entry.
    pub expected_lockfree: Option<bool>,
}

const TREIBER_STACK: &str = include_str!("../../../models/treiber_stack.obj");
const MS_QUEUE: &str = include_str!("../../../models/ms_queue.obj");
const COARSE_LIST: &str = include_str!("../../../models/coarse_list.obj");
const MS_TWO_LOCK_QUEUE: &str = include_str!("../../../models/ms_two_lock_queue.obj");
const HW_QUEUE: &str = include_str!("../../../models/hw_queue.obj");
const BUGGY_HW_QUEUE: &str = include_str!("../../../models/buggy_hw_queue.obj");
const SPINLOCK_QUEUE: &str = include_str!("../../../models/spinlock_queue.obj");

/// The static registry.
pub fn list_benchmarks() -> &'static [Benchmark] {
    &[
        Benchmark {
            name: "treiber_stack",
            source_path: "models/treiber_stack.obj",
            source: TREIBER_STACK,
            kind: SpecKind::Stack,
            expected_linearizable: true,
            expected_lockfree: Some(true),
        },
        Benchmark {
            name: "ms_queue",
            source_path: "models/ms_queue.obj",
            source: MS_QUEUE,
            kind: SpecKind::Queue,
            expected_linearizable: true,
            expected_lockfree: Some(true),
        },
        Benchmark {
            name: "coarse_list",
            source_path: "models/coarse_list.obj",
            source: COARSE_LIST,
            kind: SpecKind::Set,
            expected_linearizable: true,
            expected_lockfree: None,
        },
        Benchmark {
            name: "ms_two_lock_queue",
            source_path: "models/ms_two_lock_queue.obj",
            source: MS_TWO_LOCK_QUEUE,
            kind: SpecKind::Queue,
            expected_linearizable: true,
            expected_lockfree: None,
        },
        Benchmark {
            name: "hw_queue",
            source_path: "models/hw_queue.obj",
            source: HW_QUEUE,
            kind: SpecKind::Queue,
            expected_linearizable: true,
            expected_lockfree: None,
        },
        Benchmark {
            name: "buggy_hw_queue",
            source_path: "models/buggy_hw_queue.obj",
            source: BUGGY_HW_QUEUE,
            kind: SpecKind::Queue,
            expected_linearizable: false,
            expected_lockfree: None,
        },
        Benchmark {
            name: "spinlock_queue",
            source_path: "models/spinlock_queue.obj",
            source: SPINLOCK_QUEUE,
            kind: SpecKind::Queue,
            expected_linearizable: true,
            expected_lockfree: Some(false),
        },
    ]
}

/// Look up one registry entry by name.
pub fn find_benchmark(name: &str) -> Option<&'static Benchmark> {
    list_benchmarks().iter().find(|b| b.name == name)
}

impl Benchmark {
    /// Client configuration the expected verdicts are stated at: two
    /// threads, two ops per thread, with per-benchmark argument choices.
    pub fn default_config(&self) -> ClientConfig {
        let mut config = ClientConfig::default();
        match self.name {
            // Both set keys from both threads, at every call slot; the
            // distinct-values default would keep the threads apart and miss
            // every add/add collision.
            "coarse_list" => {
                for m in ["add", "remove", "contains"] {
                    config
                        .arg_domain
                        .insert(m.into(), vec![vec![Value::Int(1)], vec![Value::Int(2)]]);
                }
            }
            // The seeded bug needs three enqueuers and a double dequeue to
            // surface: two slot-colliding enqueues, a third to land behind
            // the overwritten slot, and two dequeues to exhibit the gap.
            "buggy_hw_queue" => {
                let enq = |v: &str| ("Enq".into(), vec![Value::Sym(v.into())]);
                let deq = || ("Deq".into(), vec![]);
                config.scenario = Some(vec![
                    vec![enq("a"), enq("c")],
                    vec![enq("b"), deq(), deq()],
                ]);
            }
            _ => {}
        }
        config
    }
}

// ---------------------------------------------------------------------------
// Scaled sources
// ---------------------------------------------------------------------------

/// Rewrite a pool-bounded benchmark source for a total op budget of `ops`
/// calls, so reduction trends can be measured at growing bounds. Returns
/// `None` for benchmarks whose bounds do not depend on the op budget.
///
/// The committed sources are sized for the default configuration's four
/// total ops; the rewrite substitutes the handful of bound literals and is
/// the identity at `ops = 4`.
pub fn scaled_source(name: &str, ops: u32) -> Option<String> {
    let pool = ops + 1;
    match name {
        "ms_queue" => Some(
            MS_QUEUE
                .replace("[1..5]", &format!("[1..{pool}]"))
                .replace("[0..5]", &format!("[0..{pool}]"))
                .replace("[5]", &format!("[{pool}]"))
                .replace("[4]", &format!("[{ops}]"))
                .replace("tl <= 4", &format!("tl <= {ops}")),
        ),
        "hw_queue" => Some(
            HW_QUEUE
                .replace("[1..6]", &format!("[1..{}]", pool + 1))
                .replace("[0..5]", &format!("[0..{pool}]"))
                .replace("[5]", &format!("[{pool}]"))
                .replace("tail <= 5", &format!("tail <= {pool}")),
        ),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

/// Outcome of one registry run: verdicts, the sizes behind them, and the
/// comparison against the entry's expectations.
#[derive(Clone, Debug)]
pub struct BenchReport {
    pub name: String,
    pub lin: Verdict,
    /// Present when the entry carries a lock-freedom expectation.
    pub lockfree: Option<Verdict>,
    /// Implementation state space before quotienting.
    pub states_before: usize,
    pub transitions_before: usize,
    /// After quotienting by branching bisimilarity.
    pub states_after: usize,
    pub transitions_after: usize,
    /// `states_before / states_after`; at least 1 (quotients never grow).
    pub reduction_factor: f64,
    pub wall_ms: u64,
    /// Every produced verdict matched the registry expectation.
    pub as_expected: bool,
}

#[derive(Error, Debug)]
pub enum BenchError {
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error(transparent)]
    Check(#[from] RefineError),
}

/// Run one registry entry: the linearizability check always, the
/// lock-freedom check when the entry carries an expectation for it.
/// `overrides` replaces the default client configuration wholesale.
pub fn run_benchmark(
    name: &str,
    overrides: Option<&ClientConfig>,
) -> Result<BenchReport, BenchError> {
    let bench = find_benchmark(name)
        .ok_or_else(|| BenchError::UnknownBenchmark(name.to_string()))?;
    let config = overrides.cloned().unwrap_or_else(|| bench.default_config());
    let model = parse_model(bench.source).map_err(RefineError::from)?;

    let start = Instant::now();
    let lin = check_linearizability(&model, &config)?;
    let lockfree = match bench.expected_lockfree {
        Some(_) => {
            let req = ProgressCheckRequest {
                concrete: model,
                abstract_model: None,
                config: config.clone(),
            };
            Some(check_lockfree(&req)?)
        }
        None => None,
    };
    let wall_ms = start.elapsed().as_millis() as u64;

    let sizes: BTreeMap<&str, (usize, usize)> = lin
        .stats
        .iter()
        .map(|s| (s.stage, (s.states, s.transitions)))
        .collect();
    let (states_before, transitions_before) = sizes["impl"];
    let (states_after, transitions_after) = sizes["impl-quotient"];
    let as_expected = lin.pass == bench.expected_linearizable
        && match (&lockfree, bench.expected_lockfree) {
            (Some(v), Some(want)) => v.pass == want,
            (None, None) => true,
            _ => false,
        };

    Ok(BenchReport {
        name: bench.name.to_string(),
        lin,
        lockfree,
        states_before,
        transitions_before,
        states_after,
        transitions_after,
        reduction_factor: states_before as f64 / states_after as f64,
        wall_ms,
        as_expected,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
