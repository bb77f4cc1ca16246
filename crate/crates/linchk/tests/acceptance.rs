//! Acceptance gate: one test per shipping criterion, each ending in a
//! single `ACCEPTANCE n: PASS` line. Every check here is asserted, so a
//! failing criterion fails the target; the printed lines give the one-look
//! summary under `--nocapture`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use linchk::bench::{find_benchmark, list_benchmarks, scaled_source};
use linchk::bisim::{
    branching_partition, naive_branching_relation, partition, quotient, weak_partition,
    EquivalenceKind, Lasso,
};
use linchk::explorer::{self, ClientConfig};
use linchk::lts::{ActionLabel, Lts, Name, Value};
use linchk::modelir::parse_model;
use linchk::progress::{check_lockfree, divergent_states, ProgressCheckRequest};
use linchk::refine::{
    accepts_trace, brute_force_linearizable, check_linearizability, lin_relation, Counterexample,
    Event, History,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn call(t: u32, m: &str, v: Value) -> Event {
    Event::Call { thread: t, method: Name::from(m), arg: v }
}

fn ret(t: u32, m: &str, v: Value) -> Event {
    Event::Ret { thread: t, method: Name::from(m), retval: v }
}

fn benchmark_instance(name: &str) -> (linchk::modelir::ObjectModel, ClientConfig) {
    let b = find_benchmark(name).unwrap();
    (parse_model(b.source).unwrap(), b.default_config())
}

// ---------------------------------------------------------------------------
// 1: the worked linearizable history and its thread projections
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_linearizable_history_example() {
    let h = History(vec![
        call(1, "Enq", Value::sym("a")),
        call(2, "Enq", Value::sym("b")),
        ret(1, "Enq", Value::Void),
        ret(2, "Enq", Value::Void),
        call(1, "Deq", Value::Void),
        ret(1, "Deq", Value::sym("a")),
    ]);
    let s = History(vec![
        call(1, "Enq", Value::sym("a")),
        ret(1, "Enq", Value::Void),
        call(2, "Enq", Value::sym("b")),
        ret(2, "Enq", Value::Void),
        call(1, "Deq", Value::Void),
        ret(1, "Deq", Value::sym("a")),
    ]);
    assert!(lin_relation(&h, &s), "H must linearize to S");

    let t1 = History(vec![
        call(1, "Enq", Value::sym("a")),
        ret(1, "Enq", Value::Void),
        call(1, "Deq", Value::Void),
        ret(1, "Deq", Value::sym("a")),
    ]);
    let t2 = History(vec![call(2, "Enq", Value::sym("b")), ret(2, "Enq", Value::Void)]);
    assert_eq!(h.projection(1), t1, "projection onto thread 1");
    assert_eq!(h.projection(2), t2, "projection onto thread 2");

    println!("ACCEPTANCE 1: PASS - worked queue history linearizes; thread projections exact");
}

// ---------------------------------------------------------------------------
// 2: weak merges what branching separates on the committed fixture
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_weak_vs_branching_separation() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/dequeue_race.aut"
    ))
    .unwrap();
    let lts = Lts::load_aut(&text).unwrap();
    // State ids 1..5 play the roles s1..s5 of the dequeue race.
    let weak = weak_partition(&lts);
    let branching = branching_partition(&lts);
    assert!(weak.same_block(1, 3));
    assert!(!weak.same_block(2, 4));
    assert!(weak.same_block(2, 5));
    assert!(!branching.same_block(1, 3));
    assert!(!branching.same_block(2, 4));
    assert!(branching.same_block(2, 5));

    println!(
        "ACCEPTANCE 2: PASS - weak merges s1,s3; branching separates them; \
         s2/s4 split and s2/s5 merged under both"
    );
}

// ---------------------------------------------------------------------------
// 3: verdicts on the five linearizable benchmarks, plus lock-freedom of
//    the Treiber stack against its atomic-block abstraction
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_benchmark_verdicts() {
    let names = ["hw_queue", "ms_queue", "treiber_stack", "ms_two_lock_queue", "coarse_list"];
    for name in names {
        let (model, config) = benchmark_instance(name);
        assert_eq!(config.threads, 2, "{name} runs at two threads");
        assert_eq!(config.max_ops_per_thread, 2, "{name} runs at two ops per thread");
        let v = check_linearizability(&model, &config).unwrap();
        assert!(v.pass, "{name} must be linearizable");
    }

    let (treiber, config) = benchmark_instance("treiber_stack");
    let req = ProgressCheckRequest { concrete: treiber, abstract_model: None, config };
    let v = check_lockfree(&req).unwrap();
    assert!(v.pass, "treiber_stack must be lock-free against its abstraction");

    println!(
        "ACCEPTANCE 3: PASS - hw_queue, ms_queue, treiber_stack, ms_two_lock_queue, \
         coarse_list linearizable at k=2, 2 ops; treiber_stack lock-free"
    );
}

// ---------------------------------------------------------------------------
// 4: counterexamples, validated by replay
// ---------------------------------------------------------------------------

/// Every lasso step must be a τ edge of the system, the steps must chain,
/// and the cycle must close on itself and be nonempty.
fn assert_lasso_replays(lts: &Lts, l: &Lasso) {
    let has_tau_edge = |src: u32, dst: u32| {
        lts.out(src).iter().any(|e| e.is_tau() && e.dst == dst)
    };
    let mut at = l.start;
    for step in l.stem.iter().chain(&l.cycle) {
        assert_eq!(step.src, at, "lasso steps must chain");
        assert!(has_tau_edge(step.src, step.dst), "no τ edge {} -> {}", step.src, step.dst);
        at = step.dst;
    }
    let entry = l.cycle.first().expect("cycle is nonempty");
    assert_eq!(at, entry.src, "cycle must close");
}

#[test]
fn acceptance_4_counterexamples_replay() {
    // A queue that loses an enqueued value under the seeded interleaving.
    let (buggy, config) = benchmark_instance("buggy_hw_queue");
    let v = check_linearizability(&buggy, &config).unwrap();
    assert!(!v.pass, "buggy_hw_queue must fail");
    let Some(Counterexample::History(h)) = &v.counterexample else {
        panic!("expected a violating history, got {:?}", v.counterexample);
    };
    let lts = explorer::explore(&buggy, &config).unwrap();
    assert!(accepts_trace(&lts, &h.to_labels()), "history must replay on the implementation");
    let oracle = brute_force_linearizable(&lts, buggy.seqspec.as_ref().unwrap()).unwrap();
    assert!(!oracle.pass, "brute-force oracle must confirm the violation");

    // A blocking queue: the spinning thread yields a τ-only cycle.
    let (spin, config) = benchmark_instance("spinlock_queue");
    let req =
        ProgressCheckRequest { concrete: spin.clone(), abstract_model: None, config: config.clone() };
    let v = check_lockfree(&req).unwrap();
    assert!(!v.pass, "spinlock_queue must fail lock-freedom");
    let Some(Counterexample::Lasso(l)) = &v.counterexample else {
        panic!("expected a divergent lasso, got {:?}", v.counterexample);
    };
    let concrete = explorer::explore(&spin, &config).unwrap();
    assert_lasso_replays(&concrete, l);

    println!(
        "ACCEPTANCE 4: PASS - buggy_hw_queue violation replays and the oracle \
         confirms it; spinlock_queue yields a replayable τ-only lasso"
    );
}

// ---------------------------------------------------------------------------
// 5: oracle agreement, random and benchmark-sized
// ---------------------------------------------------------------------------

fn random_lts(seed: u64, tau_density: f64) -> Lts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=30usize);
    let letters = ["a", "b", "c", "d"];
    let width = rng.random_range(1..=letters.len());
    let edges = rng.random_range(n..=3 * n);
    let mut transitions = Vec::with_capacity(edges);
    for _ in 0..edges {
        let src = rng.random_range(0..n) as u32;
        let dst = rng.random_range(0..n) as u32;
        let label = if rng.random_bool(tau_density) {
            ActionLabel::tau(None)
        } else {
            ActionLabel::Ret {
                thread: 1,
                method: Name::from(letters[rng.random_range(0..width)]),
                retval: Value::Void,
            }
        };
        transitions.push((src, label, dst));
    }
    Lts::new(n, 0, transitions)
}

#[test]
fn acceptance_5_oracle_agreement() {
    for case in 0..1000u64 {
        let lts = random_lts(case, (case % 6) as f64 * 0.1);
        let fast = branching_partition(&lts).pairs();
        let naive = naive_branching_relation(&lts).unwrap();
        assert_eq!(fast, naive, "case {case}");
    }

    let mut small = 0usize;
    for b in list_benchmarks() {
        let model = parse_model(b.source).unwrap();
        let config = b.default_config();
        let lts = explorer::explore(&model, &config).unwrap();
        if lts.state_count() > 10_000 {
            continue;
        }
        let engine = check_linearizability(&model, &config).unwrap();
        let oracle = brute_force_linearizable(&lts, model.seqspec.as_ref().unwrap()).unwrap();
        assert_eq!(engine.pass, oracle.pass, "{} disagrees with the oracle", b.name);
        small += 1;
    }
    assert!(small >= 5, "expected at least five small benchmark instances");

    println!(
        "ACCEPTANCE 5: PASS - 1000 random LTSs match the naive relation; \
         {small} benchmark instances within 10^4 states match the brute-force oracle"
    );
}

// ---------------------------------------------------------------------------
// 6: quotient laws on every benchmark
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_quotient_laws() {
    for b in list_benchmarks() {
        let model = parse_model(b.source).unwrap();
        let lts = explorer::explore(&model, &b.default_config()).unwrap();
        let name = b.name;

        let strong = partition(&lts, EquivalenceKind::Strong);
        let div = partition(&lts, EquivalenceKind::BranchingDiv);
        let branching = partition(&lts, EquivalenceKind::Branching);
        let weak = partition(&lts, EquivalenceKind::Weak);
        assert!(strong.refines(&div) && div.refines(&branching) && branching.refines(&weak),
            "{name}: refinement chain broken");

        let reference = lts.traces_up_to(6);
        for p in [&branching, &div] {
            assert_eq!(reference, quotient(&lts, p).traces_up_to(6), "{name}: traces changed");
        }

        for p in [&strong, &div, &branching, &weak] {
            let q = quotient(&lts, p);
            for src in 0..q.state_count() as u32 {
                assert!(!q.out(src).iter().any(|e| e.is_tau() && e.dst == src),
                    "{name}: τ self-loop in quotient");
            }
        }

        let q = quotient(&lts, &branching);
        let qq = quotient(&q, &partition(&q, EquivalenceKind::Branching));
        assert!(qq.isomorphic_to(&q), "{name}: quotient not idempotent");

        // Stuttering: a τ-walk (length ≤ 5) returning to its start block
        // never leaves that block in between.
        fn walk(lts: &Lts, p: &linchk::bisim::Partition, start: u32, path: &mut Vec<u32>) {
            let here = *path.last().unwrap();
            for e in lts.out(here) {
                if !e.is_tau() {
                    continue;
                }
                path.push(e.dst);
                if p.same_block(start, e.dst) {
                    for &mid in &path[1..path.len() - 1] {
                        assert!(p.same_block(start, mid), "stuttering violated at {mid}");
                    }
                }
                if path.len() <= 5 {
                    walk(lts, p, start, path);
                }
                path.pop();
            }
        }
        for s in 0..lts.state_count() as u32 {
            walk(&lts, &branching, s, &mut vec![s]);
        }

        let d = divergent_states(&lts, &div);
        for block in div.blocks() {
            let flagged = block.iter().filter(|s| d.contains(s)).count();
            assert!(flagged == 0 || flagged == block.len(), "{name}: divergence not block-constant");
        }
    }

    println!(
        "ACCEPTANCE 6: PASS - traces preserved to depth 6, no τ self-loops, \
         idempotent branching quotient, refinement chain, stuttering, \
         block-constant divergence on all 7 benchmarks"
    );
}

// ---------------------------------------------------------------------------
// 7: reduction factors grow with the operation budget
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_reduction_trend() {
    let expect: BTreeMap<&str, [&str; 3]> = BTreeMap::from([
        ("ms_queue", ["73.18", "264.81", "883.88"]),
        ("hw_queue", ["9.75", "17.94", "29.32"]),
    ]);
    for (name, frozen) in expect {
        let mut factors = Vec::new();
        for ops in [2u32, 3, 4] {
            let source = scaled_source(name, 2 * ops).unwrap();
            let model = parse_model(&source).unwrap();
            let config = ClientConfig {
                max_ops_per_thread: ops,
                max_states: 100_000_000,
                max_transitions: 100_000_000,
                ..ClientConfig::default()
            };
            let lts = explorer::explore(&model, &config).unwrap();
            let q = quotient(&lts, &partition(&lts, EquivalenceKind::Branching));
            factors.push(lts.state_count() as f64 / q.state_count() as f64);
        }
        assert!(factors[0] >= 2.0, "{name}: factor below 2 at two ops");
        assert!(
            factors.windows(2).all(|w| w[0] <= w[1]),
            "{name}: factors not monotone: {factors:?}"
        );
        let formatted: Vec<String> = factors.iter().map(|f| format!("{f:.2}")).collect();
        assert_eq!(formatted, frozen, "{name}: factors drifted from the recorded table");
        println!("ACCEPTANCE 7 [{name}]: factors at 2/3/4 ops per thread: {}", formatted.join(", "));
    }

    println!(
        "ACCEPTANCE 7: PASS - reduction factor >= 2 at two ops and monotone \
         over the operation sweep on ms_queue and hw_queue"
    );
}

// ---------------------------------------------------------------------------
// 8: byte-identical reruns
// ---------------------------------------------------------------------------

fn linchk_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linchk")).args(args).output().unwrap()
}

fn stable(text: &[u8]) -> String {
    String::from_utf8_lossy(text)
        .lines()
        .filter(|l| !l.starts_with("wall_ms="))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn acceptance_8_deterministic_outputs() {
    let model = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/hw_queue.obj");
    let model = model.to_str().unwrap();
    let dir = std::env::temp_dir().join(format!("linchk-acc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let aut = |n: &str| -> PathBuf { dir.join(n) };

    for (first, second) in [("a1.aut", "a2.aut")] {
        linchk_cmd(&["lts", model, "-o", aut(first).to_str().unwrap()]);
        linchk_cmd(&["lts", model, "-o", aut(second).to_str().unwrap()]);
        let (a, b) = (std::fs::read(aut(first)).unwrap(), std::fs::read(aut(second)).unwrap());
        assert_eq!(a, b, "lts output must be byte-identical across reruns");
    }

    let m1 = linchk_cmd(&["minimize", aut("a1.aut").to_str().unwrap()]);
    let m2 = linchk_cmd(&["minimize", aut("a1.aut").to_str().unwrap()]);
    assert_eq!(m1.stdout, m2.stdout, "minimize output must be byte-identical");

    let r1 = linchk_cmd(&["check-lin", model, "--report", "records"]);
    let r2 = linchk_cmd(&["check-lin", model, "--report", "records"]);
    assert_eq!(r1.stdout, r2.stdout, "check-lin records must be byte-identical");

    let b1 = linchk_cmd(&["bench", "hw_queue", "--report", "records"]);
    let b2 = linchk_cmd(&["bench", "hw_queue", "--report", "records"]);
    assert_eq!(
        stable(&b1.stdout),
        stable(&b2.stdout),
        "bench records must be byte-identical apart from wall time"
    );

    println!("ACCEPTANCE 8: PASS - .aut and record outputs byte-identical across reruns");
}
