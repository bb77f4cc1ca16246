//! Lock-freedom checking via divergence-sensitive branching bisimilarity.
//!
//! A concrete object is compared against an abstract object whose
//! lock-freedom is known. When they are divergence-sensitive branching
//! bisimilar, lock-freedom transfers. The atomic-block specification serves
//! as the default abstract object; it is divergence-free by construction,
//! but standing in for the concrete object it is only sound for objects
//! with static linearization points, so callers must acknowledge that mode
//! explicitly. Wait-freedom is out of scope: it needs a fairness assumption
//! on the transition system; the verdict type leaves room for such checks,
//! but none is constructed here.

use std::collections::BTreeSet;

use crate::bisim::{self, EquivalenceKind, Partition};
use crate::explorer::{self, ClientConfig, ExploreError};
use crate::lts::{Lts, StateId};
use crate::modelir::{make_spec, ObjectModel};
use crate::refine::{Counterexample, RefineError, StageStat, Verdict};

/// A lock-freedom check: a concrete model against an abstract one, explored
/// at one client configuration. Without an abstract model the concrete
/// object's atomic-block specification is compared against.
#[derive(Clone, Debug)]
pub struct ProgressCheckRequest {
    pub concrete: ObjectModel,
    pub abstract_model: Option<ObjectModel>,
    pub config: ClientConfig,
}

/// States with an internal lasso inside their own block: a τ-path within
/// the block reaching a τ-cycle within the block. These are exactly the
/// states whose divergence the equivalence must preserve.
pub fn divergent_states(lts: &Lts, p: &Partition) -> BTreeSet<StateId> {
    bisim::in_block_divergent(lts, p)
        .iter()
        .enumerate()
        .filter(|(_, d)| **d)
        .map(|(s, _)| s as StateId)
        .collect()
}

/// Decides lock-freedom of the concrete object relative to the abstract
/// one: both are explored at the request's configuration and compared under
/// divergence-sensitive branching bisimilarity. On failure where divergence
/// is the separator, the counterexample is a divergent internal lasso of
/// the side that diverges.
pub fn check_lockfree(req: &ProgressCheckRequest) -> Result<Verdict, RefineError> {
    let spec_default;
    let abstract_model = match &req.abstract_model {
        Some(m) => m,
        None => {
            spec_default = make_spec(&req.concrete)?;
            &spec_default
        }
    };
    check_signatures(&req.concrete, abstract_model)?;
    let concrete = explorer::explore(&req.concrete, &req.config)?;
    let abstracted = explorer::explore(abstract_model, &req.config)?;
    let stats = vec![
        StageStat::of("concrete", &concrete),
        StageStat::of("abstract", &abstracted),
    ];
    let v = bisim::bisimilar(&concrete, &abstracted, EquivalenceKind::BranchingDiv);
    if v.equivalent {
        return Ok(Verdict { pass: true, counterexample: None, stats });
    }
    let counterexample =
        v.divergence_witness.map(|(_, lasso)| Counterexample::Lasso(lasso));
    Ok(Verdict { pass: false, counterexample, stats })
}

/// Both models must expose the same methods with the same parameter and
/// return domains; anything else compares unrelated objects.
fn check_signatures(a: &ObjectModel, b: &ObjectModel) -> Result<(), RefineError> {
    let sig = |m: &ObjectModel| {
        m.methods
            .iter()
            .map(|m| (m.name.clone(), m.params.clone(), m.returns.clone()))
            .collect::<Vec<_>>()
    };
    if sig(a) != sig(b) {
        return Err(RefineError::Explore(ExploreError::Config(format!(
            "method signatures of {} and {} differ",
            a.name, b.name
        ))));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lts::{ActionLabel, Name, Value};
    use crate::modelir::parse_model;

    // The read method snapshots the counter at an internal step and returns
    // the snapshot: both methods take effect at one static internal point,
    // which is the shape the default abstract model is sound for.
    const COUNTER: &str = r#"
        object counter {
            shared n : int[0..4] = 0;
            method inc() {
                I: atomic { n := n + 1; } goto J;
                J: return;
            }
            method get() returns int[0..4] {
                local g : int[0..4] = 0;
                S: atomic { g := n; } goto R;
                R: return g;
            }
            spec {
                state c : int[0..4] = 0;
                on inc() { c := c + 1; }
                on get() -> c { }
            }
        }
    "#;

    /// A test-and-set lock around an empty critical section: a thread that
    /// misses the lock spins until the holder releases, so a suspended
    /// holder starves the spinner.
    const SPIN: &str = r#"
        object spin {
            shared lock : bool = false;
            method work() {
                local b : bool = false;
                A: atomic { b := cas(lock, false, true); } goto C;
                C: atomic { when b; lock := false; } goto D;
                C: atomic { when not b; } goto A;
                D: return;
            }
            spec {
                on work() { }
            }
        }
    "#;

    #[test]
    fn tau_acyclic_has_no_divergent_states() {
        let a = ActionLabel::Call { thread: 1, method: Name::from("f"), arg: Value::Void };
        let lts = Lts::new(3, 0, vec![(0, ActionLabel::tau(None), 1), (1, a, 2)]);
        let p = bisim::partition(&lts, EquivalenceKind::BranchingDiv);
        assert!(divergent_states(&lts, &p).is_empty());
    }

    #[test]
    fn tau_self_loop_is_divergent() {
        let lts = Lts::new(1, 0, vec![(0, ActionLabel::tau(None), 0)]);
        let p = bisim::partition(&lts, EquivalenceKind::BranchingDiv);
        assert_eq!(divergent_states(&lts, &p), BTreeSet::from([0]));
    }

    #[test]
    fn divergence_is_block_constant() {
        let m = parse_model(SPIN).unwrap();
        let lts = explorer::explore(&m, &ClientConfig::default()).unwrap();
        let p = bisim::partition(&lts, EquivalenceKind::BranchingDiv);
        let div = divergent_states(&lts, &p);
        for block in p.blocks() {
            let flags: BTreeSet<bool> =
                block.iter().map(|s| div.contains(s)).collect();
            assert_eq!(flags.len(), 1, "divergence varies inside a block");
        }
    }

    #[test]
    fn spec_exploration_is_divergence_free() {
        for src in [COUNTER, SPIN] {
            let m = parse_model(src).unwrap();
            let lts = explorer::explore_spec(&m, &ClientConfig::default()).unwrap();
            let p = bisim::partition(&lts, EquivalenceKind::BranchingDiv);
            assert!(divergent_states(&lts, &p).is_empty());
        }
    }

    #[test]
    fn lockfree_is_reflexive() {
        for src in [COUNTER, SPIN] {
            let m = parse_model(src).unwrap();
            let req = ProgressCheckRequest {
                concrete: m.clone(),
                abstract_model: Some(m),
                config: ClientConfig::default(),
            };
            let v = check_lockfree(&req).unwrap();
            assert!(v.pass);
            assert!(v.counterexample.is_none());
        }
    }

    #[test]
    fn counter_is_lockfree_against_its_spec() {
        let m = parse_model(COUNTER).unwrap();
        let req = ProgressCheckRequest {
            concrete: m,
            abstract_model: None,
            config: ClientConfig::default(),
        };
        let v = check_lockfree(&req).unwrap();
        assert!(v.pass);
        let stages: Vec<&str> = v.stats.iter().map(|s| s.stage).collect();
        assert_eq!(stages, vec!["concrete", "abstract"]);
    }

    #[test]
    fn spinlock_fails_with_a_divergent_lasso() {
        let m = parse_model(SPIN).unwrap();
        let req = ProgressCheckRequest {
            concrete: m,
            abstract_model: None,
            config: ClientConfig::default(),
        };
        let v = check_lockfree(&req).unwrap();
        assert!(!v.pass);
        let Some(Counterexample::Lasso(lasso)) = &v.counterexample else {
            panic!("expected a divergent lasso");
        };
        // The lasso is a real cycle of internal steps, each annotated with
        // the spinning thread's location.
        assert!(!lasso.cycle.is_empty());
        for step in lasso.stem.iter().chain(&lasso.cycle) {
            assert!(step.origin.is_some());
        }
        let first = &lasso.cycle[0];
        let last = lasso.cycle.last().unwrap();
        assert_eq!(last.dst, first.src);
    }

    #[test]
    fn mismatched_signatures_are_rejected() {
        let a = parse_model(COUNTER).unwrap();
        let b = parse_model(SPIN).unwrap();
        let req = ProgressCheckRequest {
            concrete: a,
            abstract_model: Some(b),
            config: ClientConfig::default(),
        };
        assert!(check_lockfree(&req).is_err());
    }
}
