//! Finite labeled transition systems and the Aldebaran `.aut` interchange
//! format.
//!
//! States are dense `u32` ids. Visible labels are interned into a sorted
//! alphabet; internal steps are a single τ label whose per-edge annotation
//! (e.g. `"t1.E2"`) is diagnostic only and never takes part in equality.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

pub type StateId = u32;
pub type Name = Arc<str>;

/// Label id used on edges for τ; visible labels index into the alphabet.
pub const TAU_ID: u32 = u32::MAX;

// ---------------------------------------------------------------------------
// Values
// ---------------------------------------------------------------------------

/// A ground value carried by call/return labels and by model variables.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Value {
    /// Absent argument or return value of a void method.
    Void,
    Bool(bool),
    Int(i64),
    /// Enum member, including the distinguished `null`.
    Sym(Name),
    /// Argument vector of a method with more than one parameter.
    Tuple(Vec<Value>),
}

impl Value {
    pub fn sym(s: &str) -> Value {
        Value::Sym(Arc::from(s))
    }

    /// Parse a single wire token (no `!` separators).
    fn parse_token(tok: &str) -> Value {
        match tok {
            "VOID" => Value::Void,
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => match tok.parse::<i64>() {
                Ok(n) => Value::Int(n),
                Err(_) => Value::sym(tok),
            },
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Void => write!(f, "VOID"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Sym(s) => write!(f, "{s}"),
            Value::Tuple(vs) => {
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " !")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Action labels
// ---------------------------------------------------------------------------

/// One action of the system: a visible call or return, or an internal step.
///
/// τ annotations record which thread and program location produced the step;
/// they are ignored by `Eq`, `Hash` and the equivalence engines.
#[derive(Clone, Debug)]
pub enum ActionLabel {
    Call { thread: u32, method: Name, arg: Value },
    Ret { thread: u32, method: Name, retval: Value },
    Tau { origin: Option<Name> },
}

impl ActionLabel {
    pub fn is_tau(&self) -> bool {
        matches!(self, ActionLabel::Tau { .. })
    }

    pub fn tau(origin: Option<&str>) -> ActionLabel {
        ActionLabel::Tau {
            origin: origin.map(Arc::from),
        }
    }

    /// Wire syntax: `CALL !T<k> !<M> !<v>`, `RET !T<k> !<M> !<v>`, or `i`.
    pub fn wire_text(&self) -> String {
        match self {
            ActionLabel::Call { thread, method, arg } => {
                format!("CALL !T{thread} !{method} !{arg}")
            }
            ActionLabel::Ret { thread, method, retval } => {
                format!("RET !T{thread} !{method} !{retval}")
            }
            ActionLabel::Tau { .. } => "i".to_string(),
        }
    }

    /// Parse a wire label. Anything that is not a well-formed CALL/RET is τ;
    /// the raw text is kept as the annotation except for the τ spellings
    /// themselves (`i`, `tau`).
    pub fn parse_wire(raw: &str) -> ActionLabel {
        if raw == "i" || raw == "tau" {
            return ActionLabel::Tau { origin: None };
        }
        let call = raw.strip_prefix("CALL !");
        let ret = raw.strip_prefix("RET !");
        if let Some(rest) = call.or(ret) {
            if let Some((thread, method, value)) = Self::parse_wire_fields(rest) {
                return if call.is_some() {
                    ActionLabel::Call { thread, method, arg: value }
                } else {
                    ActionLabel::Ret { thread, method, retval: value }
                };
            }
        }
        ActionLabel::Tau { origin: Some(Arc::from(raw)) }
    }

    fn parse_wire_fields(rest: &str) -> Option<(u32, Name, Value)> {
        let mut toks = rest.split(" !");
        let thread = toks.next()?.strip_prefix('T')?.parse::<u32>().ok()?;
        if thread == 0 {
            return None;
        }
        let method = toks.next()?;
        if method.is_empty() {
            return None;
        }
        let vals: Vec<Value> = toks.map(Value::parse_token).collect();
        let value = match vals.len() {
            0 => Value::Void,
            1 => vals.into_iter().next().unwrap(),
            _ => Value::Tuple(vals),
        };
        Some((thread, Arc::from(method), value))
    }
}

impl PartialEq for ActionLabel {
    fn eq(&self, other: &Self) -> bool {
        use ActionLabel::*;
        match (self, other) {
            (
                Call { thread: t1, method: m1, arg: a1 },
                Call { thread: t2, method: m2, arg: a2 },
            ) => t1 == t2 && m1 == m2 && a1 == a2,
            (
                Ret { thread: t1, method: m1, retval: a1 },
                Ret { thread: t2, method: m2, retval: a2 },
            ) => t1 == t2 && m1 == m2 && a1 == a2,
            // Annotations are diagnostic only.
            (Tau { .. }, Tau { .. }) => true,
            _ => false,
        }
    }
}

impl Eq for ActionLabel {}

impl Hash for ActionLabel {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            ActionLabel::Call { thread, method, arg } => {
                0u8.hash(state);
                thread.hash(state);
                method.hash(state);
                arg.hash(state);
            }
            ActionLabel::Ret { thread, method, retval } => {
                1u8.hash(state);
                thread.hash(state);
                method.hash(state);
                retval.hash(state);
            }
            ActionLabel::Tau { .. } => 2u8.hash(state),
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionLabel::Tau { origin: Some(o) } => write!(f, "i ({o})"),
            _ => write!(f, "{}", self.wire_text()),
        }
    }
}

// ---------------------------------------------------------------------------
// The LTS proper
// ---------------------------------------------------------------------------

/// One transition. `label` is an alphabet index or `TAU_ID`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Edge {
    pub src: StateId,
    pub label: u32,
    pub dst: StateId,
}

impl Edge {
    pub fn is_tau(&self) -> bool {
        self.label == TAU_ID
    }
}

/// A finite LTS: states `0..state_count`, a distinguished initial state, and
/// a deduplicated transition set. All states are reachable from the initial
/// state; construction prunes anything else (order-preserving renumbering).
#[derive(Clone, PartialEq, Debug)]
pub struct Lts {
    state_count: u32,
    initial: StateId,
    /// Sorted by `(src, label, dst)`. Since the alphabet is sorted by wire
    /// text and `TAU_ID` is maximal, this is also `(src, label text, dst)`
    /// order with τ edges last per state.
    edges: Vec<Edge>,
    /// τ annotations, parallel to `edges`; `None` for visible edges.
    origins: Vec<Option<Name>>,
    /// `out_index[s]..out_index[s+1]` is the edge range of state `s`.
    out_index: Vec<u32>,
    /// Distinct visible labels, sorted by wire text.
    alphabet: Vec<ActionLabel>,
}

impl Lts {
    /// Build an LTS, pruning states unreachable from `initial`.
    ///
    /// Panics if `initial` or a transition endpoint is out of range; callers
    /// constructing from parsed input must range-check first.
    pub fn new(
        state_count: usize,
        initial: StateId,
        transitions: Vec<(StateId, ActionLabel, StateId)>,
    ) -> Lts {
        assert!((initial as usize) < state_count, "initial state out of range");
        for &(s, _, t) in &transitions {
            assert!(
                (s as usize) < state_count && (t as usize) < state_count,
                "transition endpoint out of range"
            );
        }

        // Reachability over the raw transition list.
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); state_count];
        for &(s, _, t) in &transitions {
            adj[s as usize].push(t);
        }
        let mut seen = vec![false; state_count];
        let mut queue = VecDeque::from([initial]);
        seen[initial as usize] = true;
        while let Some(s) = queue.pop_front() {
            for &t in &adj[s as usize] {
                if !seen[t as usize] {
                    seen[t as usize] = true;
                    queue.push_back(t);
                }
            }
        }
        // Order-preserving compaction: kept states keep their relative order.
        let mut renum = vec![u32::MAX; state_count];
        let mut kept = 0u32;
        for s in 0..state_count {
            if seen[s] {
                renum[s] = kept;
                kept += 1;
            }
        }

        let transitions: Vec<(StateId, ActionLabel, StateId)> = transitions
            .into_iter()
            .filter(|&(s, _, t)| seen[s as usize] && seen[t as usize])
            .map(|(s, l, t)| (renum[s as usize], l, renum[t as usize]))
            .collect();

        Self::assemble(kept as usize, renum[initial as usize], transitions)
    }

    /// Build without reachability pruning. Used where unreachable states are
    /// intentional (disjoint unions for equivalence checking).
    pub(crate) fn assemble(
        state_count: usize,
        initial: StateId,
        transitions: Vec<(StateId, ActionLabel, StateId)>,
    ) -> Lts {
        // Intern visible labels, sorted by wire text.
        let mut alphabet: Vec<ActionLabel> = {
            let mut set: HashSet<&ActionLabel> = HashSet::new();
            transitions
                .iter()
                .filter(|(_, l, _)| !l.is_tau() && set.insert(l))
                .map(|(_, l, _)| l.clone())
                .collect()
        };
        alphabet.sort_by_cached_key(|l| l.wire_text());
        let label_id: HashMap<&ActionLabel, u32> = alphabet
            .iter()
            .enumerate()
            .map(|(i, l)| (l, i as u32))
            .collect();

        // Dedup on (src, label, dst); for τ duplicates the first annotation
        // wins, so input order decides and stays deterministic.
        let mut seen_edges: HashSet<(u32, u32, u32)> = HashSet::new();
        let mut pairs: Vec<(Edge, Option<Name>)> = Vec::with_capacity(transitions.len());
        for (s, l, t) in transitions {
            let (id, origin) = match l {
                ActionLabel::Tau { origin } => (TAU_ID, origin),
                ref vis => (label_id[vis], None),
            };
            if seen_edges.insert((s, id, t)) {
                pairs.push((Edge { src: s, label: id, dst: t }, origin));
            }
        }
        pairs.sort_by_key(|(e, _)| *e);

        let mut out_index = vec![0u32; state_count + 1];
        for (e, _) in &pairs {
            out_index[e.src as usize + 1] += 1;
        }
        for i in 0..state_count {
            out_index[i + 1] += out_index[i];
        }

        let (edges, origins) = pairs.into_iter().unzip();
        Lts {
            state_count: state_count as u32,
            initial,
            edges,
            origins,
            out_index,
            alphabet,
        }
    }

    pub fn state_count(&self) -> usize {
        self.state_count as usize
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn transition_count(&self) -> usize {
        self.edges.len()
    }

    pub fn alphabet(&self) -> &[ActionLabel] {
        &self.alphabet
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out(&self, s: StateId) -> &[Edge] {
        &self.edges[self.out_range(s)]
    }

    /// Edge index range of `s`, usable with `edges()` and `origin()`.
    pub fn out_range(&self, s: StateId) -> std::ops::Range<usize> {
        self.out_index[s as usize] as usize..self.out_index[s as usize + 1] as usize
    }

    /// τ annotation of the edge at `edge_index`, if any.
    pub fn origin(&self, edge_index: usize) -> Option<&str> {
        self.origins[edge_index].as_deref()
    }

    /// The label of an edge; τ edges come back without annotation.
    pub fn label_of(&self, e: &Edge) -> ActionLabel {
        if e.is_tau() {
            ActionLabel::Tau { origin: None }
        } else {
            self.alphabet[e.label as usize].clone()
        }
    }

    /// Wire text of a label id (`"i"` for `TAU_ID`).
    pub fn wire_label(&self, label: u32) -> String {
        if label == TAU_ID {
            "i".to_string()
        } else {
            self.alphabet[label as usize].wire_text()
        }
    }

    // -----------------------------------------------------------------------
    // Aldebaran format
    // -----------------------------------------------------------------------

    /// Parse the `.aut` format: a `des (<init>, <m>, <n>)` header followed by
    /// one `(<src>, "<label>", <dst>)` line per transition.
    pub fn load_aut(text: &str) -> Result<Lts, AutError> {
        let mut lines = text.lines().enumerate();
        let (header_idx, header) = lines
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or(AutError::Empty)?;
        let header_line = header_idx + 1;
        let (init, m, n) =
            parse_header(header).ok_or(AutError::Header { line: header_line })?;
        if n == 0 {
            return Err(AutError::Header { line: header_line });
        }
        if init >= n {
            return Err(AutError::StateRange { line: header_line, state: init, count: n });
        }

        let mut transitions = Vec::with_capacity(m as usize);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if transitions.len() == m as usize {
                return Err(AutError::TransitionCount {
                    expected: m as usize,
                    found: transitions.len() + 1,
                });
            }
            let (src, label, dst) = parse_transition(line, lineno)?;
            for s in [src, dst] {
                if s >= n {
                    return Err(AutError::StateRange { line: lineno, state: s, count: n });
                }
            }
            transitions.push((src, ActionLabel::parse_wire(label), dst));
        }
        if transitions.len() != m as usize {
            return Err(AutError::TransitionCount {
                expected: m as usize,
                found: transitions.len(),
            });
        }
        Ok(Lts::new(n as usize, init, transitions))
    }

    /// Emit the `.aut` format: transitions sorted by `(src, label text, dst)`,
    /// τ written as `i`, single newline terminators. No renumbering.
    pub fn store_aut(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "des ({}, {}, {})\n",
            self.initial,
            self.edges.len(),
            self.state_count
        ));
        // Internal edge order is already (src, label text, dst): the alphabet
        // is text-sorted and "i" sorts after every CALL/RET label.
        for e in &self.edges {
            out.push_str(&format!(
                "({}, \"{}\", {})\n",
                e.src,
                self.wire_label(e.label),
                e.dst
            ));
        }
        out
    }

    // -----------------------------------------------------------------------
    // Traces
    // -----------------------------------------------------------------------

    /// All visible-action sequences of length ≤ `depth` from the initial
    /// state, as wire-text sequences. Exponential; intended as a test oracle.
    pub fn traces_up_to(&self, depth: usize) -> BTreeSet<Vec<String>> {
        self.traces_from(self.initial, depth)
    }

    /// As `traces_up_to`, but from an arbitrary start state.
    pub fn traces_from(&self, start: StateId, depth: usize) -> BTreeSet<Vec<String>> {
        let closure = self.tau_closures();
        // level[s] = visible traces of length ≤ d from s, rebuilt per level.
        let mut level: Vec<BTreeSet<Vec<u32>>> =
            vec![BTreeSet::from([Vec::new()]); self.state_count()];
        for _ in 0..depth {
            let mut next = vec![BTreeSet::from([Vec::new()]); self.state_count()];
            for s in 0..self.state_count() {
                for &c in &closure[s] {
                    for e in self.out(c) {
                        if e.is_tau() {
                            continue;
                        }
                        for w in &level[e.dst as usize] {
                            let mut t = Vec::with_capacity(w.len() + 1);
                            t.push(e.label);
                            t.extend_from_slice(w);
                            next[s].insert(t);
                        }
                    }
                }
            }
            level = next;
        }
        level[start as usize]
            .iter()
            .map(|w| w.iter().map(|&l| self.wire_label(l)).collect())
            .collect()
    }

    /// Forward τ-closure (reflexive) of every state, each sorted ascending.
    pub(crate) fn tau_closures(&self) -> Vec<Vec<StateId>> {
        (0..self.state_count as u32)
            .map(|s| self.tau_closure_of(s))
            .collect()
    }

    /// Forward τ-closure (reflexive) of one state, sorted ascending.
    pub(crate) fn tau_closure_of(&self, s: StateId) -> Vec<StateId> {
        let mut seen: BTreeSet<StateId> = BTreeSet::from([s]);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for e in self.out(u) {
                if e.is_tau() && seen.insert(e.dst) {
                    queue.push_back(e.dst);
                }
            }
        }
        seen.into_iter().collect()
    }

    // -----------------------------------------------------------------------
    // Isomorphism (test support)
    // -----------------------------------------------------------------------

    /// Isomorphism check by canonical BFS renumbering from the initial
    /// states. Sound always; complete when BFS order is forced (in particular
    /// for the deterministically numbered LTSs this crate produces).
    pub fn isomorphic_to(&self, other: &Lts) -> bool {
        if self.state_count != other.state_count
            || self.edges.len() != other.edges.len()
            || self.alphabet.len() != other.alphabet.len()
        {
            return false;
        }
        let texts: Vec<String> = self.alphabet.iter().map(|l| l.wire_text()).collect();
        let other_texts: Vec<String> = other.alphabet.iter().map(|l| l.wire_text()).collect();
        if texts != other_texts {
            return false;
        }
        self.canonical_edges() == other.canonical_edges()
    }

    fn canonical_edges(&self) -> Option<Vec<Edge>> {
        let mut renum = vec![u32::MAX; self.state_count()];
        let mut order = Vec::with_capacity(self.state_count());
        renum[self.initial as usize] = 0;
        order.push(self.initial);
        let mut queue = VecDeque::from([self.initial]);
        while let Some(s) = queue.pop_front() {
            for e in self.out(s) {
                if renum[e.dst as usize] == u32::MAX {
                    renum[e.dst as usize] = order.len() as u32;
                    order.push(e.dst);
                    queue.push_back(e.dst);
                }
            }
        }
        if order.len() != self.state_count() {
            return None; // unreachable states: no canonical form
        }
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge {
                src: renum[e.src as usize],
                label: e.label,
                dst: renum[e.dst as usize],
            })
            .collect();
        edges.sort();
        Some(edges)
    }
}

fn parse_header(line: &str) -> Option<(u32, u32, u32)> {
    let rest = line.trim().strip_prefix("des")?.trim_start();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    let mut parts = inner.split(',');
    let init = parts.next()?.trim().parse().ok()?;
    let m = parts.next()?.trim().parse().ok()?;
    let n = parts.next()?.trim().parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some((init, m, n))
}

fn parse_transition(line: &str, lineno: usize) -> Result<(u32, &str, u32), AutError> {
    let bad = || AutError::Transition { line: lineno };
    let inner = line
        .strip_prefix('(')
        .and_then(|l| l.strip_suffix(')'))
        .ok_or_else(bad)?;
    let (src_txt, rest) = inner.split_once(',').ok_or_else(bad)?;
    let src = src_txt.trim().parse().map_err(|_| bad())?;
    let rest = rest.trim_start();
    let rest = rest
        .strip_prefix('"')
        .ok_or(AutError::Quotes { line: lineno })?;
    let (label, rest) = rest
        .rsplit_once('"')
        .ok_or(AutError::Quotes { line: lineno })?;
    let rest = rest.trim_start();
    let dst_txt = rest.strip_prefix(',').ok_or_else(bad)?;
    let dst = dst_txt.trim().parse().map_err(|_| bad())?;
    Ok((src, label, dst))
}

/// Parse errors for the `.aut` format, with 1-based line numbers.
#[derive(Error, Debug, PartialEq, Eq)]
pub enum AutError {
    #[error("empty input")]
    Empty,
    #[error("line {line}: malformed des header")]
    Header { line: usize },
    #[error("line {line}: malformed transition")]
    Transition { line: usize },
    #[error("line {line}: unbalanced quotes")]
    Quotes { line: usize },
    #[error("line {line}: state {state} out of range (header declares {count})")]
    StateRange { line: usize, state: u32, count: u32 },
    #[error("header declares {expected} transitions, found {found}")]
    TransitionCount { expected: usize, found: usize },
}
