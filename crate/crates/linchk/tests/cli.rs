//! End-to-end tests of the command-line interface: exit codes, output
//! shapes for both report styles, the `.aut` side channel, and
//! byte-identical reruns on identical inputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use linchk::lts::Lts;

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn model(name: &str) -> PathBuf {
    manifest(&format!("../../models/{name}.obj"))
}

fn fixture(name: &str) -> PathBuf {
    manifest(&format!("tests/fixtures/{name}"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("linchk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn linchk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linchk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Record output with the wall-clock lines dropped; everything else must be
/// reproducible byte for byte.
fn stable(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("wall_ms="))
        .collect::<Vec<_>>()
        .join("\n")
}

// ---------------------------------------------------------------------------
// lts
// ---------------------------------------------------------------------------

#[test]
fn lts_of_empty_object_is_the_one_state_system() {
    let out = linchk(&["lts", fixture("empty.obj").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_of(&out), "des (0, 0, 1)\n");
}

#[test]
fn lts_writes_parseable_aut_and_reruns_byte_identically() {
    let (a, b) = (scratch("hw1.aut"), scratch("hw2.aut"));
    for f in [&a, &b] {
        let out = linchk(&["lts", model("hw_queue").to_str().unwrap(), "-o", f.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb, "rerun changed the .aut output");
    let lts = Lts::load_aut(std::str::from_utf8(&ta).unwrap()).unwrap();
    assert_eq!(lts.state_count(), 1092);
    assert_eq!(lts.transition_count(), 2048);
}

#[test]
fn lts_spec_side_is_smaller_than_the_implementation() {
    let out = linchk(&["lts", "--spec", model("hw_queue").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    let lts = Lts::load_aut(&text).unwrap();
    assert!(lts.state_count() < 1092, "spec side has {} states", lts.state_count());
}

#[test]
fn lts_honours_client_flags() {
    let out = linchk(&["lts", model("hw_queue").to_str().unwrap(), "-k", "1", "--ops", "1"]);
    assert_eq!(code(&out), 0);
    let small = Lts::load_aut(&stdout_of(&out)).unwrap();
    assert!(small.state_count() < 100, "one op of one thread stays tiny");
}

#[test]
fn lts_rejects_a_model_with_diagnostics() {
    let out = linchk(&["lts", fixture("overflowing_counter.obj").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("outside the domain"), "stderr: {err}");
}

// ---------------------------------------------------------------------------
// minimize
// ---------------------------------------------------------------------------

#[test]
fn minimize_reports_the_reduction_and_is_idempotent() {
    let full = scratch("hw_full.aut");
    let min = scratch("hw_min.aut");
    linchk(&["lts", model("hw_queue").to_str().unwrap(), "-o", full.to_str().unwrap()]);

    let out = linchk(&["minimize", full.to_str().unwrap(), "-o", min.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let line = stdout_of(&out);
    assert!(
        line.starts_with("states: 1092 -> 112, transitions: 2048 -> "),
        "line: {line}"
    );
    assert!(line.trim_end().ends_with("factor: 9.75"), "line: {line}");

    let again = linchk(&["minimize", min.to_str().unwrap()]);
    assert_eq!(code(&again), 0);
    let line = stdout_of(&again);
    assert!(line.starts_with("states: 112 -> 112, "), "line: {line}");
    assert!(line.trim_end().ends_with("factor: 1.00"), "line: {line}");
}

#[test]
fn minimize_accepts_each_equivalence() {
    let full = scratch("hw_eq.aut");
    linchk(&["lts", model("hw_queue").to_str().unwrap(), "-o", full.to_str().unwrap()]);
    for eq in ["strong", "branching", "branching-div", "weak"] {
        let out = linchk(&["minimize", full.to_str().unwrap(), "--eq", eq]);
        assert_eq!(code(&out), 0, "--eq {eq}");
    }
    let out = linchk(&["minimize", full.to_str().unwrap(), "--eq", "bogus"]);
    assert_eq!(code(&out), 2, "unknown equivalence must be a usage error");
}

// ---------------------------------------------------------------------------
// check-lin
// ---------------------------------------------------------------------------

#[test]
fn check_lin_passes_hw_queue() {
    let out = linchk(&["check-lin", model("hw_queue").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_of(&out), "LINEARIZABLE: yes\n");
}

#[test]
fn check_lin_reports_a_violating_history() {
    let out = linchk(&["check-lin", fixture("racy_counter.obj").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let text = stdout_of(&out);
    assert!(text.starts_with("LINEARIZABLE: no\n"), "got: {text}");
    // Both threads fetch the same value; the numbered history replays it.
    assert!(text.contains("call fai"), "got: {text}");
    assert!(text.contains("ret fai 0"), "got: {text}");
}

#[test]
fn check_lin_record_output() {
    let out = linchk(&[
        "check-lin",
        fixture("racy_counter.obj").to_str().unwrap(),
        "--report",
        "records",
    ]);
    assert_eq!(code(&out), 1);
    let text = stdout_of(&out);
    assert!(text.starts_with("check=lin\nmodel=racy_counter\n"), "got: {text}");
    assert!(text.contains("\nverdict=fail\n"), "got: {text}");
    assert!(text.contains("\nimpl_states="), "got: {text}");
    assert!(text.contains("\nspec_quotient_states="), "got: {text}");
    assert!(text.ends_with("\n\n"), "records end with a blank line");
}

#[test]
fn check_lin_hits_the_state_ceiling() {
    let out = linchk(&["check-lin", model("hw_queue").to_str().unwrap(), "--max-states", "10"]);
    assert_eq!(code(&out), 3);
}

// ---------------------------------------------------------------------------
// check-lockfree
// ---------------------------------------------------------------------------

#[test]
fn check_lockfree_requires_an_abstraction_source() {
    let out = linchk(&["check-lockfree", model("treiber_stack").to_str().unwrap()]);
    assert_eq!(code(&out), 2, "no abstract model and no --static-lp is a usage error");
}

#[test]
fn check_lockfree_passes_treiber_stack() {
    let out = linchk(&["check-lockfree", "--static-lp", model("treiber_stack").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_of(&out);
    assert_eq!(text, "LOCK-FREE: yes (relative to abstract model treiber_stack_spec)\n");
}

#[test]
fn check_lockfree_rejects_spinlock_queue_with_a_tau_lasso() {
    let out = linchk(&["check-lockfree", "--static-lp", model("spinlock_queue").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let text = stdout_of(&out);
    assert!(
        text.starts_with("LOCK-FREE: no (relative to abstract model spinlock_queue_spec)\n"),
        "got: {text}"
    );
    let cycle = text.lines().find(|l| l.starts_with("cycle: ")).expect("cycle line");
    assert!(cycle.contains("-tau("), "cycle steps are τ: {cycle}");
    assert!(text.lines().any(|l| l.starts_with("stem: ")), "got: {text}");
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[test]
fn bench_runs_a_subset_and_reports_ok() {
    let out = linchk(&["bench", "hw_queue", "spinlock_queue"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_of(&out);
    assert!(text.lines().count() >= 3, "header plus two rows: {text}");
    for needle in ["benchmark", "hw_queue", "spinlock_queue", "ok"] {
        assert!(text.contains(needle), "missing {needle}: {text}");
    }
    assert!(!text.contains("MISMATCH"), "got: {text}");
}

#[test]
fn bench_rejects_unknown_names_and_empty_selections() {
    assert_eq!(code(&linchk(&["bench", "no_such_benchmark"])), 2);
    assert_eq!(code(&linchk(&["bench"])), 2);
}

#[test]
fn bench_records_are_stable_across_reruns() {
    let args = ["bench", "coarse_list", "buggy_hw_queue", "--report", "records"];
    let first = linchk(&args);
    let second = linchk(&args);
    assert_eq!(code(&first), 0);
    let (a, b) = (stdout_of(&first), stdout_of(&second));
    assert_eq!(stable(&a), stable(&b), "rerun changed record output");
    assert!(a.contains("check=lin\nmodel=coarse_list\n"), "got: {a}");
    assert!(a.contains("model=buggy_hw_queue\nexpected=fail\n"), "got: {a}");
    assert!(a.contains("wall_ms="), "records carry wall time");
}
