//! Quotient laws checked on every registered benchmark at its default
//! client configuration: trace preservation under the branching and
//! divergence-sensitive quotients, absence of τ self-loops, quotient
//! idempotence, the refinement chain between the four equivalences, the
//! stuttering property of the branching partition, and block-constant
//! divergence under the divergence-sensitive partition.

use linchk::bench::list_benchmarks;
use linchk::bisim::{partition, quotient, EquivalenceKind, Partition};
use linchk::explorer;
use linchk::lts::Lts;
use linchk::modelir::parse_model;
use linchk::progress::divergent_states;

const ALL_KINDS: [EquivalenceKind; 4] = [
    EquivalenceKind::Strong,
    EquivalenceKind::BranchingDiv,
    EquivalenceKind::Branching,
    EquivalenceKind::Weak,
];

fn benchmark_ltss() -> Vec<(&'static str, Lts)> {
    list_benchmarks()
        .iter()
        .map(|b| {
            let model = parse_model(b.source).unwrap();
            let lts = explorer::explore(&model, &b.default_config()).unwrap();
            (b.name, lts)
        })
        .collect()
}

#[test]
fn quotients_preserve_traces_to_depth_six() {
    for (name, lts) in benchmark_ltss() {
        let reference = lts.traces_up_to(6);
        for kind in [EquivalenceKind::Branching, EquivalenceKind::BranchingDiv] {
            let q = quotient(&lts, &partition(&lts, kind));
            assert_eq!(
                reference,
                q.traces_up_to(6),
                "{name}: {kind:?} quotient changed the trace set"
            );
        }
    }
}

#[test]
fn quotients_have_no_tau_self_loops() {
    for (name, lts) in benchmark_ltss() {
        for kind in ALL_KINDS {
            let q = quotient(&lts, &partition(&lts, kind));
            for src in 0..q.state_count() as u32 {
                for e in q.out(src) {
                    assert!(
                        !(e.is_tau() && e.dst == src),
                        "{name}: {kind:?} quotient keeps a τ self-loop at {src}"
                    );
                }
            }
        }
    }
}

/// Idempotence is a law of the branching quotient. The same construction
/// applied to the strong or divergence-sensitive partitions abstracts
/// in-block τ structure (internal cycles, divergence) that those finer
/// equivalences can see, so re-partitioning their quotients legitimately
/// coarsens.
#[test]
fn quotienting_is_idempotent() {
    for (name, lts) in benchmark_ltss() {
        let q = quotient(&lts, &partition(&lts, EquivalenceKind::Branching));
        let qq = quotient(&q, &partition(&q, EquivalenceKind::Branching));
        assert!(qq.isomorphic_to(&q), "{name}: branching quotient is not idempotent");
    }
}

#[test]
fn partitions_form_a_refinement_chain() {
    for (name, lts) in benchmark_ltss() {
        let strong = partition(&lts, EquivalenceKind::Strong);
        let div = partition(&lts, EquivalenceKind::BranchingDiv);
        let branching = partition(&lts, EquivalenceKind::Branching);
        let weak = partition(&lts, EquivalenceKind::Weak);
        assert!(strong.refines(&div), "{name}: strong does not refine div");
        assert!(div.refines(&branching), "{name}: div does not refine branching");
        assert!(branching.refines(&weak), "{name}: branching does not refine weak");
    }
}

/// On a τ-path whose endpoints share a block, every intermediate state must
/// share it too. Checked by walking all τ-walks of length at most 5.
fn assert_stuttering(name: &str, lts: &Lts, p: &Partition) {
    fn walk(
        lts: &Lts,
        p: &Partition,
        name: &str,
        start: u32,
        path: &mut Vec<u32>,
    ) {
        let here = *path.last().unwrap();
        for e in lts.out(here) {
            if !e.is_tau() {
                continue;
            }
            path.push(e.dst);
            if p.same_block(start, e.dst) {
                for &mid in &path[1..path.len() - 1] {
                    assert!(
                        p.same_block(start, mid),
                        "{name}: τ-path from {start} to {} strays at {mid}",
                        e.dst
                    );
                }
            }
            if path.len() <= 5 {
                walk(lts, p, name, start, path);
            }
            path.pop();
        }
    }

    for s in 0..lts.state_count() as u32 {
        let mut path = vec![s];
        walk(lts, p, name, s, &mut path);
    }
}

#[test]
fn branching_partition_satisfies_stuttering() {
    for (name, lts) in benchmark_ltss() {
        let p = partition(&lts, EquivalenceKind::Branching);
        assert_stuttering(name, &lts, &p);
    }
}

#[test]
fn divergence_is_block_constant_under_div_partition() {
    for (name, lts) in benchmark_ltss() {
        let p = partition(&lts, EquivalenceKind::BranchingDiv);
        let divergent = divergent_states(&lts, &p);
        for block in p.blocks() {
            let flagged = block.iter().filter(|s| divergent.contains(s)).count();
            assert!(
                flagged == 0 || flagged == block.len(),
                "{name}: divergence differs inside a block of size {}",
                block.len()
            );
        }
    }
}
