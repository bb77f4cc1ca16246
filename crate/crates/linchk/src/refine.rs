//! Linearizability checking: histories and the linearizability relation, a
//! brute-force oracle over maximal bounded runs, determinization, trace
//! inclusion, and the quotient-based refinement pipeline.
//!
//! The pipeline reduces linearizability to an inclusion of visible traces:
//! explore the implementation and its atomic-block specification, quotient
//! both by branching bisimilarity, and decide trace inclusion between the
//! quotients. The brute-force oracle decides the same property directly
//! from the history definition and exists to cross-check the pipeline on
//! small instances.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::bisim::{self, EquivalenceKind, Lasso};
use crate::explorer::{self, CallChoices, ClientConfig, ExploreError};
use crate::lts::{ActionLabel, Lts, Name, StateId, Value, TAU_ID};
use crate::modelir::{init_state, spec_step, ModelError, ObjectModel, SequentialSpec};

/// Work budget for the brute-force run enumeration, counted in edge visits.
const ORACLE_WORK_LIMIT: u64 = 200_000_000;

/// Largest history the brute-force witness search accepts, in operations.
const ORACLE_MAX_OPS: usize = 62;

/// Ceiling on subset states built by `determinize`.
const DFA_CEILING: usize = 1_000_000;

/// Ceiling on product states visited by `trace_included`.
const PRODUCT_CEILING: usize = 10_000_000;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Failures of the refinement layer. Verdicts report counterexamples; these
/// errors report exhausted bounds and malformed inputs.
#[derive(Error, Debug)]
pub enum RefineError {
    #[error("oracle bound exceeded after {visited} steps (limit {limit})")]
    OracleBound { visited: u64, limit: u64 },
    #[error("history has {count} operations, oracle limit is {limit}")]
    TooManyOperations { count: usize, limit: usize },
    #[error("determinization ceiling exceeded: more than {limit} subset states")]
    DfaCeiling { limit: usize },
    #[error("product ceiling exceeded: more than {limit} states")]
    ProductCeiling { limit: usize },
    #[error("malformed history: {0}")]
    MalformedHistory(String),
    #[error(transparent)]
    Explore(#[from] ExploreError),
}

impl From<ModelError> for RefineError {
    fn from(e: ModelError) -> RefineError {
        RefineError::Explore(ExploreError::Model(e))
    }
}

// ---------------------------------------------------------------------------
// Events and histories
// ---------------------------------------------------------------------------

/// A visible event: an invocation or a response of a method by a thread.
/// Multi-argument calls carry their arguments as one tuple value, exactly
/// as call labels do.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Event {
    Call { thread: u32, method: Name, arg: Value },
    Ret { thread: u32, method: Name, retval: Value },
}

impl Event {
    pub fn thread(&self) -> u32 {
        match self {
            Event::Call { thread, .. } | Event::Ret { thread, .. } => *thread,
        }
    }

    pub fn method(&self) -> &Name {
        match self {
            Event::Call { method, .. } | Event::Ret { method, .. } => method,
        }
    }

    /// The visible event of a transition label; `None` for internal steps.
    pub fn from_label(label: &ActionLabel) -> Option<Event> {
        match label {
            ActionLabel::Call { thread, method, arg } => Some(Event::Call {
                thread: *thread,
                method: method.clone(),
                arg: arg.clone(),
            }),
            ActionLabel::Ret { thread, method, retval } => Some(Event::Ret {
                thread: *thread,
                method: method.clone(),
                retval: retval.clone(),
            }),
            ActionLabel::Tau { .. } => None,
        }
    }

    pub fn to_label(&self) -> ActionLabel {
        match self {
            Event::Call { thread, method, arg } => ActionLabel::Call {
                thread: *thread,
                method: method.clone(),
                arg: arg.clone(),
            },
            Event::Ret { thread, method, retval } => ActionLabel::Ret {
                thread: *thread,
                method: method.clone(),
                retval: retval.clone(),
            },
        }
    }
}

fn fmt_args(arg: &Value) -> String {
    match arg {
        Value::Void => "()".to_string(),
        Value::Tuple(vs) => {
            let inner: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
            format!("({})", inner.join(", "))
        }
        v => format!("({v})"),
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Call { thread, method, arg } => {
                write!(f, "t{thread} call {method}{}", fmt_args(arg))
            }
            Event::Ret { thread, method, retval: Value::Void } => {
                write!(f, "t{thread} ret {method}")
            }
            Event::Ret { thread, method, retval } => {
                write!(f, "t{thread} ret {method} {retval}")
            }
        }
    }
}

/// One completed operation of a history: the positions of its invocation
/// and matching response, plus the payload both events carry.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OperationPair {
    pub thread: u32,
    pub method: Name,
    pub arg: Value,
    pub retval: Value,
    /// Index of the call event in the history.
    pub call: usize,
    /// Index of the matching return event; always greater than `call`.
    pub ret: usize,
}

/// A sequence of visible events. Well-formed histories alternate call and
/// return per thread, each return closing that thread's open call.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct History(pub Vec<Event>);

impl History {
    /// Converts a visible trace into a history. Internal steps are
    /// rejected: traces of quotients and counterexamples are visible-only.
    pub fn from_labels(labels: &[ActionLabel]) -> Result<History, RefineError> {
        let mut events = Vec::with_capacity(labels.len());
        for l in labels {
            match Event::from_label(l) {
                Some(e) => events.push(e),
                None => {
                    return Err(RefineError::MalformedHistory(
                        "internal step in a visible trace".to_string(),
                    ))
                }
            }
        }
        Ok(History(events))
    }

    pub fn to_labels(&self) -> Vec<ActionLabel> {
        self.0.iter().map(Event::to_label).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn threads(&self) -> BTreeSet<u32> {
        self.0.iter().map(Event::thread).collect()
    }

    /// The subhistory of one thread, order preserved.
    pub fn projection(&self, thread: u32) -> History {
        History(self.0.iter().filter(|e| e.thread() == thread).cloned().collect())
    }

    /// Indices of calls still open at the end, keyed by thread. Errors on
    /// overlapping calls within a thread or returns without an open call.
    fn open_calls(&self) -> Result<BTreeMap<u32, usize>, RefineError> {
        let mut open: BTreeMap<u32, (usize, Name)> = BTreeMap::new();
        for (i, e) in self.0.iter().enumerate() {
            match e {
                Event::Call { thread, method, .. } => {
                    if open.contains_key(thread) {
                        return Err(RefineError::MalformedHistory(format!(
                            "thread {thread} calls {method} with a call still open"
                        )));
                    }
                    open.insert(*thread, (i, method.clone()));
                }
                Event::Ret { thread, method, .. } => match open.remove(thread) {
                    Some((_, m)) if m == *method => {}
                    Some((_, m)) => {
                        return Err(RefineError::MalformedHistory(format!(
                            "thread {thread} returns from {method} but {m} is open"
                        )))
                    }
                    None => {
                        return Err(RefineError::MalformedHistory(format!(
                            "thread {thread} returns from {method} without a call"
                        )))
                    }
                },
            }
        }
        Ok(open.into_iter().map(|(t, (i, _))| (t, i)).collect())
    }

    pub fn well_formed(&self) -> Result<(), RefineError> {
        self.open_calls().map(|_| ())
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.open_calls(), Ok(open) if open.is_empty())
    }

    /// Deletes all pending calls.
    pub fn complete(&self) -> Result<History, RefineError> {
        let open = self.open_calls()?;
        let pending: BTreeSet<usize> = open.into_values().collect();
        Ok(History(
            self.0
                .iter()
                .enumerate()
                .filter(|(i, _)| !pending.contains(i))
                .map(|(_, e)| e.clone())
                .collect(),
        ))
    }

    /// Pairs every call with its return. Requires a complete history.
    pub fn operations(&self) -> Result<Vec<OperationPair>, RefineError> {
        let open = self.open_calls()?;
        if !open.is_empty() {
            let ts: Vec<String> = open.keys().map(|t| format!("t{t}")).collect();
            return Err(RefineError::MalformedHistory(format!(
                "pending calls on {}",
                ts.join(", ")
            )));
        }
        let mut started: BTreeMap<u32, (usize, Name, Value)> = BTreeMap::new();
        let mut ops = Vec::new();
        for (i, e) in self.0.iter().enumerate() {
            match e {
                Event::Call { thread, method, arg } => {
                    started.insert(*thread, (i, method.clone(), arg.clone()));
                }
                Event::Ret { thread, method, retval } => {
                    let (call, m, arg) = started.remove(thread).expect("checked by open_calls");
                    debug_assert_eq!(&m, method);
                    ops.push(OperationPair {
                        thread: *thread,
                        method: m,
                        arg,
                        retval: retval.clone(),
                        call,
                        ret: i,
                    });
                }
            }
        }
        Ok(ops)
    }

    /// A history is sequential when every return immediately follows its
    /// call: operations never overlap.
    pub fn is_sequential(&self) -> bool {
        match self.operations() {
            Ok(ops) => ops.iter().all(|o| o.ret == o.call + 1),
            Err(_) => false,
        }
    }

    /// Numbered display lines, one event each.
    pub fn render_lines(&self) -> Vec<String> {
        self.0.iter().enumerate().map(|(i, e)| format!("{}. {e}", i + 1)).collect()
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.render_lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// The linearizability relation between histories: `s` is sequential, both
/// agree per thread, and every precedence of `h` is kept in `s`. Both
/// histories must be complete; anything else is rejected.
pub fn lin_relation(h: &History, s: &History) -> bool {
    let (Ok(hops), Ok(sops)) = (h.operations(), s.operations()) else {
        return false;
    };
    if !sops.iter().all(|o| o.ret == o.call + 1) {
        return false;
    }
    let mut threads = h.threads();
    threads.extend(s.threads());
    for t in &threads {
        if h.projection(*t).0 != s.projection(*t).0 {
            return false;
        }
    }
    // Identify operations across the two histories by (thread, occurrence):
    // per-thread orders agree, so the k-th operation of a thread is the same
    // operation on both sides.
    let occurrence = |ops: &[OperationPair]| -> HashMap<(u32, usize), usize> {
        let mut by_thread: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, o) in ops.iter().enumerate() {
            by_thread.entry(o.thread).or_default().push(i);
        }
        let mut occ = HashMap::new();
        for (t, mut list) in by_thread {
            list.sort_by_key(|&i| ops[i].call);
            for (k, i) in list.into_iter().enumerate() {
                occ.insert((t, k), i);
            }
        }
        occ
    };
    let hocc = occurrence(&hops);
    let socc = occurrence(&sops);
    // h-op index -> s-op index through the shared (thread, occurrence) key.
    let mut to_s = vec![usize::MAX; hops.len()];
    for ((t, k), &hi) in &hocc {
        match socc.get(&(*t, *k)) {
            Some(&si) => to_s[hi] = si,
            None => return false,
        }
    }
    for (a, pa) in hops.iter().enumerate() {
        for (b, pb) in hops.iter().enumerate() {
            if pa.ret < pb.call {
                let (sa, sb) = (&sops[to_s[a]], &sops[to_s[b]]);
                if sa.ret > sb.call {
                    return false;
                }
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

/// Sizes of one pipeline stage.
#[derive(Clone, PartialEq, Debug)]
pub struct StageStat {
    pub stage: &'static str,
    pub states: usize,
    pub transitions: usize,
}

impl StageStat {
    pub fn of(stage: &'static str, lts: &Lts) -> StageStat {
        StageStat { stage, states: lts.state_count(), transitions: lts.transition_count() }
    }
}

/// Evidence for a failed check: a violating history, or a divergent lasso
/// for progress checks.
#[derive(Clone, PartialEq, Debug)]
pub enum Counterexample {
    History(History),
    Lasso(Lasso),
}

/// Outcome of a check. A passing verdict never carries a counterexample.
#[derive(Clone, PartialEq, Debug)]
pub struct Verdict {
    pub pass: bool,
    pub counterexample: Option<Counterexample>,
    pub stats: Vec<StageStat>,
}

impl Verdict {
    fn pass(stats: Vec<StageStat>) -> Verdict {
        Verdict { pass: true, counterexample: None, stats }
    }

    fn fail(ce: Counterexample, stats: Vec<StageStat>) -> Verdict {
        Verdict { pass: false, counterexample: Some(ce), stats }
    }
}

// ---------------------------------------------------------------------------
// Legal sequential histories
// ---------------------------------------------------------------------------

/// All legal sequential histories of the model's sequential specification
/// with at most `depth` operations, threads and argument choices drawn from
/// `config` exactly as the explorer draws them. The set is prefix-closed at
/// operation granularity and contains the empty history.
pub fn legal_sequential_histories(
    model: &ObjectModel,
    config: &ClientConfig,
    depth: u32,
) -> Result<BTreeSet<History>, RefineError> {
    let spec = model.seqspec.as_ref().ok_or(ModelError::MissingSpec)?;
    let plan = explorer::call_plan(model, config)?;
    let k = config.threads;
    let mut out = BTreeSet::new();
    let mut events: Vec<Event> = Vec::new();
    let mut used = vec![0u32; k as usize];
    let state = init_state(&spec.state);

    // Depth-first over operation sequences; every node records its history.
    fn go(
        model: &ObjectModel,
        spec: &SequentialSpec,
        plan: &[CallChoices],
        config: &ClientConfig,
        depth: u32,
        state: &BTreeMap<Name, Value>,
        used: &mut Vec<u32>,
        events: &mut Vec<Event>,
        out: &mut BTreeSet<History>,
    ) {
        out.insert(History(events.clone()));
        let total: u32 = used.iter().sum();
        if total == depth {
            return;
        }
        for t in 0..used.len() {
            if used[t] >= config.max_ops_per_thread {
                continue;
            }
            let slot = t as u64 * config.max_ops_per_thread as u64 + used[t] as u64;
            for (mi, choices) in plan.iter().enumerate() {
                let method = &model.methods[mi];
                let vectors: Vec<Vec<Value>> = match choices {
                    CallChoices::Explicit(vs) => vs.clone(),
                    CallChoices::Pools(pools) => {
                        vec![pools.iter().map(|p| p[slot as usize % p.len()].clone()).collect()]
                    }
                };
                for args in vectors {
                    let mut next = state.clone();
                    let Ok(rv) = spec_step(spec, &mut next, &method.name, &args) else {
                        // No enabled case: the operation is not legal here.
                        continue;
                    };
                    let thread = (t + 1) as u32;
                    events.push(Event::Call {
                        thread,
                        method: method.name.clone(),
                        arg: explorer::label_value(&args),
                    });
                    events.push(Event::Ret { thread, method: method.name.clone(), retval: rv });
                    used[t] += 1;
                    go(model, spec, plan, config, depth, &next, used, events, out);
                    used[t] -= 1;
                    events.pop();
                    events.pop();
                }
            }
        }
    }

    go(model, spec, &plan, config, depth, &state, &mut used, &mut events, &mut out);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

/// Decides linearizability directly from the definition: every maximal
/// history of the bounded object system must be linearizable, after
/// completion, w.r.t. some legal sequential history of the spec. Maximal
/// histories are the visible projections of runs that cannot be extended
/// without repeating a state, which covers all runs of a bounded client up
/// to the point where only internal cycles remain.
pub fn brute_force_linearizable(
    lts: &Lts,
    spec: &SequentialSpec,
) -> Result<Verdict, RefineError> {
    let histories = maximal_histories(lts)?;
    let stats = vec![StageStat::of("impl", lts)];
    for h in &histories {
        let hc = h.complete()?;
        if !witness_exists(&hc, spec)? {
            return Ok(Verdict::fail(Counterexample::History(h.clone()), stats));
        }
    }
    Ok(Verdict::pass(stats))
}

/// Visible projections of all maximal simple-path runs, deduplicated.
///
/// Every visible step of a bounded most-general client reaches a globally
/// fresh state: a call spends budget and a return flips a thread idle, and
/// internal steps change neither, so the (budget, idleness) profile
/// strictly advances at each visible event. Repeating a state is therefore
/// only possible inside the internal region between two visible events,
/// and maximality decomposes per region: a run can end at its current
/// region exactly when some simple internal walk from the region's entry
/// gets trapped, and it can emit a visible event exactly when some region
/// state carries it. The enumeration walks deduplicated (entry, history)
/// nodes instead of individual paths, which collapses the factorially many
/// internal interleavings the path-by-path search would revisit.
fn maximal_histories(lts: &Lts) -> Result<BTreeSet<History>, RefineError> {
    struct Region {
        /// Some simple internal walk from the entry ends in a state with
        /// no visible edge and no internal edge leaving the walk.
        traps: bool,
        /// Visible events available in the region, with their targets.
        succ: Vec<(Event, StateId)>,
    }

    fn bump(work: &mut u64, n: u64) -> Result<(), RefineError> {
        *work += n;
        if *work > ORACLE_WORK_LIMIT {
            return Err(RefineError::OracleBound { visited: *work, limit: ORACLE_WORK_LIMIT });
        }
        Ok(())
    }

    /// Simple-path DFS over internal edges; reports whether any walk from
    /// `s` gets stuck at a state whose visible choices are absent and
    /// whose internal successors all lie on the walk.
    fn trap_walk(
        lts: &Lts,
        s: StateId,
        on_path: &mut HashSet<StateId>,
        work: &mut u64,
    ) -> Result<bool, RefineError> {
        on_path.insert(s);
        let mut stuck = true;
        let mut visible = false;
        for i in lts.out_range(s) {
            bump(work, 1)?;
            let e = lts.edges()[i];
            if e.label != TAU_ID {
                visible = true;
            } else if !on_path.contains(&e.dst) {
                stuck = false;
            }
        }
        if stuck && !visible {
            on_path.remove(&s);
            return Ok(true);
        }
        for i in lts.out_range(s) {
            let e = lts.edges()[i];
            if e.label == TAU_ID && !on_path.contains(&e.dst) {
                if trap_walk(lts, e.dst, on_path, work)? {
                    on_path.remove(&s);
                    return Ok(true);
                }
            }
        }
        on_path.remove(&s);
        Ok(false)
    }

    /// Internal closure of `entry`, its visible successors, and whether a
    /// run may end inside it. Depends on the entry alone, so it is cached.
    fn survey(lts: &Lts, entry: StateId, work: &mut u64) -> Result<Region, RefineError> {
        let members = lts.tau_closure_of(entry);
        let mut succ = BTreeSet::new();
        for &u in &members {
            for i in lts.out_range(u) {
                bump(work, 1)?;
                let e = lts.edges()[i];
                if e.label != TAU_ID {
                    if let Some(ev) = Event::from_label(&lts.label_of(&e)) {
                        succ.insert((ev, e.dst));
                    }
                }
            }
        }
        let traps = trap_walk(lts, entry, &mut HashSet::new(), work)?;
        Ok(Region { traps, succ: succ.into_iter().collect() })
    }

    let mut work: u64 = 0;
    let mut regions: HashMap<StateId, Rc<Region>> = HashMap::new();
    let mut seen: HashSet<(StateId, Vec<Event>)> = HashSet::new();
    let mut out = BTreeSet::new();
    let root = (lts.initial(), Vec::new());
    seen.insert(root.clone());
    let mut stack = vec![root];
    while let Some((entry, events)) = stack.pop() {
        let region = match regions.get(&entry) {
            Some(r) => Rc::clone(r),
            None => {
                let r = Rc::new(survey(lts, entry, &mut work)?);
                regions.insert(entry, Rc::clone(&r));
                r
            }
        };
        if region.traps {
            out.insert(History(events.clone()));
        }
        for (ev, dst) in &region.succ {
            bump(&mut work, 1)?;
            let mut next = events.clone();
            next.push(ev.clone());
            let node = (*dst, next);
            if seen.insert(node.clone()) {
                stack.push(node);
            }
        }
    }
    Ok(out)
}

/// Splits a call-label argument back into the argument vector.
fn arg_vector(arg: &Value) -> Vec<Value> {
    match arg {
        Value::Void => Vec::new(),
        Value::Tuple(vs) => vs.clone(),
        v => vec![v.clone()],
    }
}

/// Searches for a legal sequential witness of a complete history: place its
/// operations one by one, keeping per-thread order, respecting precedence,
/// and stepping the sequential spec. Memoizes failed (placed-set, state)
/// pairs.
fn witness_exists(h: &History, spec: &SequentialSpec) -> Result<bool, RefineError> {
    let ops = h.operations()?;
    let n = ops.len();
    if n > ORACLE_MAX_OPS {
        return Err(RefineError::TooManyOperations { count: n, limit: ORACLE_MAX_OPS });
    }
    let mut by_thread: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, o) in ops.iter().enumerate() {
        by_thread.entry(o.thread).or_default().push(i);
    }
    for list in by_thread.values_mut() {
        list.sort_by_key(|&i| ops[i].call);
    }
    // preds[i]: operations whose return precedes i's call.
    let preds: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| ops[j].ret < ops[i].call).collect())
        .collect();
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut dead: HashSet<(u64, BTreeMap<Name, Value>)> = HashSet::new();

    fn search(
        ops: &[OperationPair],
        by_thread: &BTreeMap<u32, Vec<usize>>,
        preds: &[Vec<usize>],
        spec: &SequentialSpec,
        full: u64,
        mask: u64,
        state: &BTreeMap<Name, Value>,
        dead: &mut HashSet<(u64, BTreeMap<Name, Value>)>,
    ) -> bool {
        if mask == full {
            return true;
        }
        if dead.contains(&(mask, state.clone())) {
            return false;
        }
        for list in by_thread.values() {
            let placed = list.iter().take_while(|&&i| mask & (1 << i) != 0).count();
            let Some(&i) = list.get(placed) else { continue };
            if !preds[i].iter().all(|&j| mask & (1 << j) != 0) {
                continue;
            }
            let mut next = state.clone();
            match spec_step(spec, &mut next, &ops[i].method, &arg_vector(&ops[i].arg)) {
                Ok(rv) if rv == ops[i].retval => {
                    if search(ops, by_thread, preds, spec, full, mask | (1 << i), &next, dead) {
                        return true;
                    }
                }
                _ => {}
            }
        }
        dead.insert((mask, state.clone()));
        false
    }

    let state = init_state(&spec.state);
    Ok(search(&ops, &by_thread, &preds, spec, full, 0, &state, &mut dead))
}

// ---------------------------------------------------------------------------
// Determinization
// ---------------------------------------------------------------------------

/// A deterministic visible-action automaton with every state accepting: the
/// language is exactly the trace set of the source system.
#[derive(Clone, Debug)]
pub struct Dfa {
    labels: Vec<ActionLabel>,
    index: HashMap<ActionLabel, u32>,
    delta: Vec<BTreeMap<u32, u32>>,
}

impl Dfa {
    pub fn state_count(&self) -> usize {
        self.delta.len()
    }

    pub fn initial(&self) -> u32 {
        0
    }

    pub fn transition_count(&self) -> usize {
        self.delta.iter().map(BTreeMap::len).sum()
    }

    /// The successor under one visible label, if the trace stays alive.
    pub fn step(&self, q: u32, label: &ActionLabel) -> Option<u32> {
        let l = self.index.get(label)?;
        self.delta[q as usize].get(l).copied()
    }

    /// Whether the automaton accepts the trace; all states accept, so this
    /// is a pure liveness walk.
    pub fn accepts(&self, trace: &[ActionLabel]) -> bool {
        let mut q = self.initial();
        for label in trace {
            match self.step(q, label) {
                Some(q2) => q = q2,
                None => return false,
            }
        }
        true
    }

    /// All accepted label texts up to the given depth, for cross-checks
    /// against `Lts::traces_up_to`.
    pub fn traces_up_to(&self, depth: usize) -> BTreeSet<Vec<String>> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![(self.initial(), Vec::new())];
        out.insert(Vec::new());
        for _ in 0..depth {
            let mut next = Vec::new();
            for (q, trace) in frontier {
                for (l, q2) in &self.delta[q as usize] {
                    let mut t2: Vec<String> = trace.clone();
                    t2.push(self.labels[*l as usize].wire_text());
                    out.insert(t2.clone());
                    next.push((*q2, t2));
                }
            }
            frontier = next;
        }
        out
    }
}

/// Subset construction over visible labels with internal closure: the
/// automaton accepts exactly the traces of the system.
pub fn determinize(lts: &Lts) -> Result<Dfa, RefineError> {
    let closures = lts.tau_closures();
    let visible: Vec<ActionLabel> =
        lts.alphabet().iter().filter(|l| !l.is_tau()).cloned().collect();
    let index: HashMap<ActionLabel, u32> =
        visible.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();

    let mut ids: HashMap<Box<[StateId]>, u32> = HashMap::new();
    let mut subsets: Vec<Box<[StateId]>> = Vec::new();
    let start: Box<[StateId]> = closures[lts.initial() as usize].clone().into_boxed_slice();
    ids.insert(start.clone(), 0);
    subsets.push(start);
    let mut delta: Vec<BTreeMap<u32, u32>> = Vec::new();

    let mut head = 0;
    while head < subsets.len() {
        let subset = subsets[head].clone();
        head += 1;
        // Group visible successors by label, closing each target set.
        let mut targets: BTreeMap<u32, BTreeSet<StateId>> = BTreeMap::new();
        for &s in subset.iter() {
            for e in lts.out(s) {
                if e.label == TAU_ID {
                    continue;
                }
                targets.entry(e.label).or_default().extend(
                    closures[e.dst as usize].iter().copied(),
                );
            }
        }
        let mut row = BTreeMap::new();
        for (label, set) in targets {
            let key: Box<[StateId]> = set.into_iter().collect();
            let id = match ids.get(&key) {
                Some(&id) => id,
                None => {
                    if subsets.len() >= DFA_CEILING {
                        return Err(RefineError::DfaCeiling { limit: DFA_CEILING });
                    }
                    let id = subsets.len() as u32;
                    ids.insert(key.clone(), id);
                    subsets.push(key);
                    id
                }
            };
            // Visible labels precede the internal label in the alphabet, so
            // the source label id is already the automaton's label id.
            row.insert(label, id);
        }
        delta.push(row);
    }
    Ok(Dfa { labels: visible, index, delta })
}

// ---------------------------------------------------------------------------
// Trace inclusion
// ---------------------------------------------------------------------------

/// Whether the spec automaton stays alive under every visible trace of the
/// implementation. The counterexample is the shortest offending trace,
/// ties broken lexicographically by label text.
pub fn trace_included(implementation: &Lts, spec: &Lts) -> Result<Verdict, RefineError> {
    let dfa = determinize(spec)?;
    let closures = implementation.tau_closures();
    let alphabet = implementation.alphabet();
    let stats =
        vec![StageStat::of("impl", implementation), StageStat::of("spec", spec)];

    let mut visited: HashSet<(StateId, u32)> = HashSet::new();
    let start = (implementation.initial(), dfa.initial());
    visited.insert(start);
    // One layer per visible length; traces keyed by label ids, whose order
    // is the lexicographic label-text order of the alphabet.
    let mut layer: BTreeMap<Vec<u32>, BTreeSet<(StateId, u32)>> = BTreeMap::new();
    layer.insert(Vec::new(), [start].into());

    while !layer.is_empty() {
        let mut next: BTreeMap<Vec<u32>, BTreeSet<(StateId, u32)>> = BTreeMap::new();
        for (trace, nodes) in &layer {
            // First pass: the least offending label of this trace, if any.
            let mut offending: Option<u32> = None;
            for &(s, q) in nodes {
                for &s2 in &closures[s as usize] {
                    for e in implementation.out(s2) {
                        if e.label == TAU_ID {
                            continue;
                        }
                        if dfa.step(q, &alphabet[e.label as usize]).is_none() {
                            offending =
                                Some(offending.map_or(e.label, |o| o.min(e.label)));
                        }
                    }
                }
            }
            if let Some(l) = offending {
                let mut labels: Vec<ActionLabel> =
                    trace.iter().map(|&i| alphabet[i as usize].clone()).collect();
                labels.push(alphabet[l as usize].clone());
                let ce = History::from_labels(&labels)?;
                return Ok(Verdict::fail(Counterexample::History(ce), stats));
            }
            // Second pass: expand.
            for &(s, q) in nodes {
                for &s2 in &closures[s as usize] {
                    for e in implementation.out(s2) {
                        if e.label == TAU_ID {
                            continue;
                        }
                        let q2 = dfa
                            .step(q, &alphabet[e.label as usize])
                            .expect("offense handled above");
                        if visited.insert((e.dst, q2)) {
                            if visited.len() > PRODUCT_CEILING {
                                return Err(RefineError::ProductCeiling {
                                    limit: PRODUCT_CEILING,
                                });
                            }
                            let mut t2 = trace.clone();
                            t2.push(e.label);
                            next.entry(t2).or_default().insert((e.dst, q2));
                        }
                    }
                }
            }
        }
        layer = next;
    }
    Ok(Verdict::pass(stats))
}

/// Whether the system can perform the given visible trace, internal steps
/// interleaved freely. Used to replay counterexamples.
pub fn accepts_trace(lts: &Lts, trace: &[ActionLabel]) -> bool {
    let closures = lts.tau_closures();
    let mut current: BTreeSet<StateId> =
        closures[lts.initial() as usize].iter().copied().collect();
    for label in trace {
        let mut next = BTreeSet::new();
        for &s in &current {
            for e in lts.out(s) {
                if &lts.label_of(&e) == label {
                    next.extend(closures[e.dst as usize].iter().copied());
                }
            }
        }
        if next.is_empty() {
            return false;
        }
        current = next;
    }
    true
}

// ---------------------------------------------------------------------------
// The pipeline
// ---------------------------------------------------------------------------

/// The full linearizability check: explore the implementation and its
/// atomic-block specification, quotient both by branching bisimilarity, and
/// decide trace inclusion between the quotients. The verdict reports sizes
/// before and after quotienting; a counterexample is a violating history.
pub fn check_linearizability(
    model: &ObjectModel,
    config: &ClientConfig,
) -> Result<Verdict, RefineError> {
    let delta = explorer::explore(model, config)?;
    let theta = explorer::explore_spec(model, config)?;
    let dq = bisim::quotient(&delta, &bisim::partition(&delta, EquivalenceKind::Branching));
    let tq = bisim::quotient(&theta, &bisim::partition(&theta, EquivalenceKind::Branching));
    let mut verdict = trace_included(&dq, &tq)?;
    verdict.stats = vec![
        StageStat::of("impl", &delta),
        StageStat::of("impl-quotient", &dq),
        StageStat::of("spec", &theta),
        StageStat::of("spec-quotient", &tq),
    ];
    Ok(verdict)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
