//! Equivalence engines: strong, branching, divergence-sensitive branching,
//! and weak bisimulation partitions, plus quotient construction and a naive
//! fixpoint oracle for branching bisimilarity.
//!
//! The workhorse is signature-based partition refinement run after τ-SCC
//! condensation. States on a common τ-cycle are branching bisimilar (one can
//! always sit still or walk the cycle to the partner), and they are uniformly
//! divergent, so collapsing τ-SCCs up front is sound for every τ-abstracting
//! equivalence here and leaves the inert τ edges acyclic. Signatures are then
//! propagated through inert τ edges in reverse topological order.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::lts::{ActionLabel, Edge, Lts, Name, StateId, TAU_ID};

/// Which equivalence an operation should use.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EquivalenceKind {
    Strong,
    Branching,
    BranchingDiv,
    Weak,
}

impl std::str::FromStr for EquivalenceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strong" => Ok(EquivalenceKind::Strong),
            "branching" => Ok(EquivalenceKind::Branching),
            "branching-div" => Ok(EquivalenceKind::BranchingDiv),
            "weak" => Ok(EquivalenceKind::Weak),
            _ => Err(format!(
                "unknown equivalence {s:?} (expected strong|branching|branching-div|weak)"
            )),
        }
    }
}

impl std::fmt::Display for EquivalenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EquivalenceKind::Strong => "strong",
            EquivalenceKind::Branching => "branching",
            EquivalenceKind::BranchingDiv => "branching-div",
            EquivalenceKind::Weak => "weak",
        })
    }
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum BisimError {
    #[error("naive oracle limited to {bound} states, got {states}")]
    OracleBound { states: usize, bound: usize },
}

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

/// A partition of the states of one LTS into equivalence blocks.
///
/// Canonical form: blocks are numbered by ascending minimal member, members
/// sorted ascending. Two runs over the same LTS yield identical numbering.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Partition {
    block_of: Vec<u32>,
    blocks: Vec<Vec<StateId>>,
}

impl Partition {
    /// Canonicalize an arbitrary block-id assignment.
    pub fn from_block_of(raw: &[u32]) -> Partition {
        let mut renum: HashMap<u32, u32> = HashMap::new();
        let mut block_of = Vec::with_capacity(raw.len());
        let mut blocks: Vec<Vec<StateId>> = Vec::new();
        for (s, &b) in raw.iter().enumerate() {
            let id = *renum.entry(b).or_insert_with(|| {
                blocks.push(Vec::new());
                (blocks.len() - 1) as u32
            });
            block_of.push(id);
            blocks[id as usize].push(s as StateId);
        }
        Partition { block_of, blocks }
    }

    pub fn state_count(&self) -> usize {
        self.block_of.len()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, s: StateId) -> u32 {
        self.block_of[s as usize]
    }

    pub fn blocks(&self) -> &[Vec<StateId>] {
        &self.blocks
    }

    pub fn same_block(&self, a: StateId, b: StateId) -> bool {
        self.block_of[a as usize] == self.block_of[b as usize]
    }

    /// The partition read as a relation: all same-block pairs, including the
    /// diagonal, both orders. Matches the naive oracle's output shape.
    pub fn pairs(&self) -> BTreeSet<(StateId, StateId)> {
        let mut out = BTreeSet::new();
        for block in &self.blocks {
            for &a in block {
                for &b in block {
                    out.insert((a, b));
                }
            }
        }
        out
    }

    /// True when every block of `self` lies inside one block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.blocks.iter().all(|block| {
            let b0 = coarser.block_of(block[0]);
            block.iter().all(|&s| coarser.block_of(s) == b0)
        })
    }
}

// ---------------------------------------------------------------------------
// τ-SCC condensation
// ---------------------------------------------------------------------------

/// The LTS with τ-strongly-connected components collapsed. SCCs are numbered
/// by ascending minimal member; τ self-edges inside an SCC are dropped and
/// recorded in `divergent`.
struct Condensed {
    n: usize,
    scc_of: Vec<u32>,
    edges: Vec<Edge>,
    out_index: Vec<u32>,
    /// SCC contains a τ-cycle (size ≥ 2 or a τ self-loop).
    divergent: Vec<bool>,
    /// SCC ids with every cross-SCC τ successor before its predecessors.
    rev_topo: Vec<u32>,
}

impl Condensed {
    fn out(&self, s: u32) -> &[Edge] {
        &self.edges[self.out_index[s as usize] as usize..self.out_index[s as usize + 1] as usize]
    }
}

fn condense(lts: &Lts) -> Condensed {
    let n_states = lts.state_count();
    let (raw_scc, scc_count) = tau_sccs(lts);

    // Renumber SCCs by minimal member for stable ids.
    let mut min_member = vec![u32::MAX; scc_count];
    for s in 0..n_states {
        let c = raw_scc[s] as usize;
        min_member[c] = min_member[c].min(s as u32);
    }
    let mut order: Vec<u32> = (0..scc_count as u32).collect();
    order.sort_by_key(|&c| min_member[c as usize]);
    let mut renum = vec![0u32; scc_count];
    for (new, &old) in order.iter().enumerate() {
        renum[old as usize] = new as u32;
    }
    let scc_of: Vec<u32> = raw_scc.iter().map(|&c| renum[c as usize]).collect();

    let mut size = vec![0u32; scc_count];
    for &c in &scc_of {
        size[c as usize] += 1;
    }
    let mut divergent: Vec<bool> = size.iter().map(|&s| s >= 2).collect();

    let mut edges: Vec<Edge> = Vec::with_capacity(lts.transition_count());
    for e in lts.edges() {
        let (cs, cd) = (scc_of[e.src as usize], scc_of[e.dst as usize]);
        if e.is_tau() && cs == cd {
            divergent[cs as usize] = true; // covers τ self-loops
            continue;
        }
        edges.push(Edge { src: cs, label: e.label, dst: cd });
    }
    edges.sort_unstable();
    edges.dedup();

    let mut out_index = vec![0u32; scc_count + 1];
    for e in &edges {
        out_index[e.src as usize + 1] += 1;
    }
    for i in 0..scc_count {
        out_index[i + 1] += out_index[i];
    }

    // Topological order of the cross-SCC τ DAG, then reversed so that
    // signature propagation sees successors first.
    let mut indeg = vec![0u32; scc_count];
    for e in &edges {
        if e.is_tau() {
            indeg[e.dst as usize] += 1;
        }
    }
    let mut stack: Vec<u32> = (0..scc_count as u32).filter(|&c| indeg[c as usize] == 0).collect();
    let mut topo = Vec::with_capacity(scc_count);
    let mut head = 0;
    while head < stack.len() {
        let c = stack[head];
        head += 1;
        topo.push(c);
        for e in &edges[out_index[c as usize] as usize..out_index[c as usize + 1] as usize] {
            if e.is_tau() {
                indeg[e.dst as usize] -= 1;
                if indeg[e.dst as usize] == 0 {
                    stack.push(e.dst);
                }
            }
        }
    }
    debug_assert_eq!(topo.len(), scc_count, "condensed tau graph must be acyclic");
    topo.reverse();

    Condensed { n: scc_count, scc_of, edges, out_index, divergent, rev_topo: topo }
}

/// Iterative Tarjan over the τ-subgraph. Returns raw SCC ids and their count.
fn tau_sccs(lts: &Lts) -> (Vec<u32>, usize) {
    let n = lts.state_count();
    const UNSET: u32 = u32::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut scc_of = vec![UNSET; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut next_index = 0u32;
    let mut scc_count = 0usize;

    // Frame: (state, edge cursor into out range).
    let mut frames: Vec<(u32, usize)> = Vec::new();
    for root in 0..n as u32 {
        if index[root as usize] != UNSET {
            continue;
        }
        frames.push((root, lts.out_range(root).start));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;

        while let Some(&mut (v, ref mut cursor)) = frames.last_mut() {
            let range = lts.out_range(v);
            let mut advanced = false;
            while *cursor < range.end {
                let e = lts.edges()[*cursor];
                *cursor += 1;
                if !e.is_tau() {
                    continue;
                }
                let w = e.dst;
                if index[w as usize] == UNSET {
                    index[w as usize] = next_index;
                    low[w as usize] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w as usize] = true;
                    frames.push((w, lts.out_range(w).start));
                    advanced = true;
                    break;
                } else if on_stack[w as usize] {
                    low[v as usize] = low[v as usize].min(index[w as usize]);
                }
            }
            if advanced {
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent as usize] = low[parent as usize].min(low[v as usize]);
            }
            if low[v as usize] == index[v as usize] {
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w as usize] = false;
                    scc_of[w as usize] = scc_count as u32;
                    if w == v {
                        break;
                    }
                }
                scc_count += 1;
            }
        }
    }
    (scc_of, scc_count)
}

// ---------------------------------------------------------------------------
// Signature refinement
// ---------------------------------------------------------------------------

/// Refine `block_of` over the condensed graph until it is stable under
/// branching splitting: states are split by the set of (label, target block)
/// pairs reachable through inert τ edges. Block ids stay first-occurrence
/// canonical. Returns the block count.
fn stabilize(c: &Condensed, block_of: &mut [u32]) -> usize {
    let mut count = renumber(block_of);
    loop {
        let mut sig: Vec<Vec<(u32, u32)>> = vec![Vec::new(); c.n];
        for &s in &c.rev_topo {
            let mut acc: Vec<(u32, u32)> = Vec::new();
            for e in c.out(s) {
                if e.is_tau() && block_of[e.dst as usize] == block_of[s as usize] {
                    acc.extend_from_slice(&sig[e.dst as usize]);
                } else {
                    acc.push((e.label, block_of[e.dst as usize]));
                }
            }
            acc.sort_unstable();
            acc.dedup();
            sig[s as usize] = acc;
        }

        let mut key_id: HashMap<(u32, Vec<(u32, u32)>), u32> = HashMap::new();
        let mut next = 0u32;
        let mut new_block = vec![0u32; c.n];
        for s in 0..c.n {
            let key = (block_of[s], std::mem::take(&mut sig[s]));
            let id = *key_id.entry(key).or_insert_with(|| {
                let id = next;
                next += 1;
                id
            });
            new_block[s] = id;
        }
        if next as usize == count {
            return count;
        }
        block_of.copy_from_slice(&new_block);
        count = next as usize;
    }
}

/// Renumber block ids to first-occurrence order; returns the block count.
fn renumber(block_of: &mut [u32]) -> usize {
    let mut renum: HashMap<u32, u32> = HashMap::new();
    let mut next = 0u32;
    for b in block_of.iter_mut() {
        let id = *renum.entry(*b).or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        *b = id;
    }
    next as usize
}

/// In-block divergence over the condensed graph: a node is flagged when it
/// can reach, via inert τ edges, a condensed τ-cycle in its own block.
fn div_reach(c: &Condensed, block_of: &[u32]) -> Vec<bool> {
    let mut div = vec![false; c.n];
    for &s in &c.rev_topo {
        let mut d = c.divergent[s as usize];
        if !d {
            for e in c.out(s) {
                if e.is_tau()
                    && block_of[e.dst as usize] == block_of[s as usize]
                    && div[e.dst as usize]
                {
                    d = true;
                    break;
                }
            }
        }
        div[s as usize] = d;
    }
    div
}

fn expand(lts: &Lts, c: &Condensed, block_of: &[u32]) -> Partition {
    let per_state: Vec<u32> = (0..lts.state_count())
        .map(|s| block_of[c.scc_of[s] as usize])
        .collect();
    Partition::from_block_of(&per_state)
}

// ---------------------------------------------------------------------------
// Public partition operations
// ---------------------------------------------------------------------------

/// The partition of the largest branching bisimulation ≈.
pub fn branching_partition(lts: &Lts) -> Partition {
    let c = condense(lts);
    let mut block_of = vec![0u32; c.n];
    stabilize(&c, &mut block_of);
    expand(lts, &c, &block_of)
}

/// The partition of divergence-sensitive branching bisimilarity ≈_div.
///
/// Fixpoint: stabilize under branching splitting, mark states that can reach
/// an in-block τ-cycle without leaving their block, split by the mark,
/// re-stabilize, until nothing changes. Each split only separates states any
/// divergence-aware refinement must separate, so the limit is the coarsest
/// stable partition.
pub fn divergence_partition(lts: &Lts) -> Partition {
    let c = condense(lts);
    let mut block_of = vec![0u32; c.n];
    let mut count = stabilize(&c, &mut block_of);
    loop {
        let div = div_reach(&c, &block_of);
        let mut key_id: HashMap<(u32, bool), u32> = HashMap::new();
        let mut next = 0u32;
        let mut new_block = vec![0u32; c.n];
        for s in 0..c.n {
            let id = *key_id.entry((block_of[s], div[s])).or_insert_with(|| {
                let id = next;
                next += 1;
                id
            });
            new_block[s] = id;
        }
        if next as usize == count {
            break;
        }
        block_of.copy_from_slice(&new_block);
        count = stabilize(&c, &mut block_of);
    }
    expand(lts, &c, &block_of)
}

/// The partition of weak bisimilarity ≈_w.
///
/// Computed on the branching quotient and pulled back: ≈ is finer than ≈_w
/// and every state is weakly bisimilar to its ≈-class, so the ≈_w classes of
/// the original are exactly the preimages of the ≈_w classes of the quotient.
/// On the (small) quotient, ≈_w itself is τ-closure saturation followed by
/// strong refinement of the saturated system.
pub fn weak_partition(lts: &Lts) -> Partition {
    let pbr = branching_partition(lts);
    let q = quotient(lts, &pbr);
    let pw = weak_saturated(&q);
    let per_state: Vec<u32> = (0..lts.state_count())
        .map(|s| pw.block_of(pbr.block_of(s as StateId)))
        .collect();
    Partition::from_block_of(&per_state)
}

/// Direct weak bisimilarity: saturate (s ⇒ t and s ⇒ -a-> ⇒ t become single
/// edges, with reflexive τ) and refine strongly. Quadratic; callers keep the
/// input small.
pub(crate) fn weak_saturated(lts: &Lts) -> Partition {
    let n = lts.state_count();
    let closure = lts.tau_closures();
    let mut sat: Vec<BTreeSet<(u32, u32)>> = vec![BTreeSet::new(); n];
    for s in 0..n {
        for &u in &closure[s] {
            sat[s].insert((TAU_ID, u));
            for e in lts.out(u) {
                if e.is_tau() {
                    continue;
                }
                for &v in &closure[e.dst as usize] {
                    sat[s].insert((e.label, v));
                }
            }
        }
    }
    let adj: Vec<Vec<(u32, u32)>> = sat.into_iter().map(|s| s.into_iter().collect()).collect();
    strong_refine(n, &adj)
}

/// Classical strong bisimulation partition by signature refinement.
pub fn strong_partition(lts: &Lts) -> Partition {
    let n = lts.state_count();
    let adj: Vec<Vec<(u32, u32)>> = (0..n)
        .map(|s| lts.out(s as StateId).iter().map(|e| (e.label, e.dst)).collect())
        .collect();
    strong_refine(n, &adj)
}

fn strong_refine(n: usize, adj: &[Vec<(u32, u32)>]) -> Partition {
    let mut block_of = vec![0u32; n];
    let mut count = 1usize;
    loop {
        let mut key_id: HashMap<(u32, Vec<(u32, u32)>), u32> = HashMap::new();
        let mut next = 0u32;
        let mut new_block = vec![0u32; n];
        for s in 0..n {
            let mut sig: Vec<(u32, u32)> = adj[s]
                .iter()
                .map(|&(l, t)| (l, block_of[t as usize]))
                .collect();
            sig.sort_unstable();
            sig.dedup();
            let id = *key_id.entry((block_of[s], sig)).or_insert_with(|| {
                let id = next;
                next += 1;
                id
            });
            new_block[s] = id;
        }
        if next as usize == count {
            return Partition::from_block_of(&block_of);
        }
        block_of = new_block;
        count = next as usize;
    }
}

/// Dispatch on the equivalence kind.
pub fn partition(lts: &Lts, kind: EquivalenceKind) -> Partition {
    match kind {
        EquivalenceKind::Strong => strong_partition(lts),
        EquivalenceKind::Branching => branching_partition(lts),
        EquivalenceKind::BranchingDiv => divergence_partition(lts),
        EquivalenceKind::Weak => weak_partition(lts),
    }
}

// ---------------------------------------------------------------------------
// Quotient
// ---------------------------------------------------------------------------

/// The quotient LTS: states are blocks, visible edges are kept, τ edges are
/// kept only between distinct blocks (so the quotient never has a τ
/// self-loop). Block numbering follows the partition's canonical order.
pub fn quotient(lts: &Lts, p: &Partition) -> Lts {
    assert_eq!(p.state_count(), lts.state_count(), "partition does not fit");
    let mut transitions: Vec<(StateId, ActionLabel, StateId)> = Vec::new();
    let mut seen: BTreeSet<(u32, u32, u32)> = BTreeSet::new();
    for e in lts.edges() {
        let (bs, bd) = (p.block_of(e.src), p.block_of(e.dst));
        if e.is_tau() && bs == bd {
            continue;
        }
        if seen.insert((bs, e.label, bd)) {
            transitions.push((bs, lts.label_of(e), bd));
        }
    }
    Lts::new(p.block_count(), p.block_of(lts.initial()), transitions)
}

// ---------------------------------------------------------------------------
// Bisimilarity of two systems
// ---------------------------------------------------------------------------

/// A τ-lasso inside one equivalence block: from `start`, the stem τ-steps
/// reach a τ-cycle; every state on stem and cycle shares `start`'s block.
#[derive(Clone, PartialEq, Debug)]
pub struct Lasso {
    pub start: StateId,
    pub stem: Vec<LassoStep>,
    pub cycle: Vec<LassoStep>,
}

#[derive(Clone, PartialEq, Debug)]
pub struct LassoStep {
    pub src: StateId,
    pub dst: StateId,
    pub origin: Option<Name>,
}

/// Outcome of comparing two systems' initial states.
#[derive(Clone, Debug)]
pub struct BisimVerdict {
    pub equivalent: bool,
    /// Block ids of the two initial states in the union partition (differ
    /// exactly when not equivalent).
    pub init_blocks: (u32, u32),
    /// For failed branching-div checks where plain branching succeeds: a
    /// divergent τ-lasso in the side that diverges (0 = left, 1 = right).
    pub divergence_witness: Option<(usize, Lasso)>,
}

/// Compare `a` and `b` under `kind` by computing the partition of their
/// disjoint union and testing whether the initial states share a block.
pub fn bisimilar(a: &Lts, b: &Lts, kind: EquivalenceKind) -> BisimVerdict {
    let (union, offset) = disjoint_union(a, b);
    let p = partition(&union, kind);
    let (ia, ib) = (a.initial(), b.initial() + offset);
    let equivalent = p.same_block(ia, ib);
    let init_blocks = (p.block_of(ia), p.block_of(ib));
    let mut divergence_witness = None;

    if !equivalent && kind == EquivalenceKind::BranchingDiv {
        let pbr = branching_partition(&union);
        if pbr.same_block(ia, ib) {
            // Divergence is the separator: find the nearest divergent state
            // in a side whose counterpart side has none.
            let div = in_block_divergent(&union, &p);
            let left: Vec<bool> = div[..offset as usize].to_vec();
            let right: Vec<bool> = div[offset as usize..].to_vec();
            let side = match (left.iter().any(|&d| d), right.iter().any(|&d| d)) {
                (true, false) => Some(0),
                (false, true) => Some(1),
                (true, true) => Some(0), // both diverge; report the left side
                (false, false) => None,
            };
            if let Some(side) = side {
                let (lts, flags) = if side == 0 { (a, &left) } else { (b, &right) };
                let side_blocks: Vec<u32> = (0..lts.state_count())
                    .map(|s| p.block_of(s as u32 + if side == 0 { 0 } else { offset }))
                    .collect();
                let sp = Partition::from_block_of(&side_blocks);
                if let Some(start) = nearest_flagged(lts, flags) {
                    divergence_witness = Some((side, find_lasso(lts, &sp, start)));
                }
            }
        }
    }

    BisimVerdict { equivalent, init_blocks, divergence_witness }
}

/// Disjoint union of two systems; `b`'s states are shifted by the returned
/// offset. Both halves are kept even though only `a`'s is reachable from the
/// union's initial state.
pub(crate) fn disjoint_union(a: &Lts, b: &Lts) -> (Lts, u32) {
    let offset = a.state_count() as u32;
    let mut transitions: Vec<(StateId, ActionLabel, StateId)> =
        Vec::with_capacity(a.transition_count() + b.transition_count());
    for e in a.edges() {
        transitions.push((e.src, a.label_of(e), e.dst));
    }
    for e in b.edges() {
        transitions.push((e.src + offset, b.label_of(e), e.dst + offset));
    }
    let union = Lts::assemble(
        a.state_count() + b.state_count(),
        a.initial(),
        transitions,
    );
    (union, offset)
}

/// States that can reach, via τ steps inside their own block, a τ-cycle
/// lying inside that block.
pub(crate) fn in_block_divergent(lts: &Lts, p: &Partition) -> Vec<bool> {
    let c = condense(lts);
    // First state seen per SCC is its minimal member.
    let mut rep = vec![u32::MAX; c.n];
    for s in 0..lts.state_count() {
        let cc = c.scc_of[s] as usize;
        if rep[cc] == u32::MAX {
            rep[cc] = s as u32;
        }
    }
    let block_of: Vec<u32> = (0..c.n).map(|cc| p.block_of(rep[cc])).collect();
    // All states of one SCC share a block only if the partition respects τ-
    // cycles; for the equivalences here it does, but guard anyway: an SCC
    // spanning blocks cannot certify in-block divergence by itself.
    let mut scc_blocks_ok = vec![true; c.n];
    for s in 0..lts.state_count() {
        let cc = c.scc_of[s] as usize;
        if p.block_of(s as u32) != block_of[cc] {
            scc_blocks_ok[cc] = false;
        }
    }
    let mut div = vec![false; c.n];
    for &s in &c.rev_topo {
        let mut d = c.divergent[s as usize] && scc_blocks_ok[s as usize];
        if !d {
            for e in c.out(s) {
                if e.is_tau()
                    && block_of[e.dst as usize] == block_of[s as usize]
                    && div[e.dst as usize]
                {
                    d = true;
                    break;
                }
            }
        }
        div[s as usize] = d;
    }
    (0..lts.state_count())
        .map(|s| div[c.scc_of[s] as usize])
        .collect()
}

/// Nearest flagged state by BFS distance from the initial state (ties by
/// discovery order over sorted edges).
pub(crate) fn nearest_flagged(lts: &Lts, flags: &[bool]) -> Option<StateId> {
    let mut seen = vec![false; lts.state_count()];
    let mut queue = VecDeque::from([lts.initial()]);
    seen[lts.initial() as usize] = true;
    while let Some(s) = queue.pop_front() {
        if flags[s as usize] {
            return Some(s);
        }
        for e in lts.out(s) {
            if !seen[e.dst as usize] {
                seen[e.dst as usize] = true;
                queue.push_back(e.dst);
            }
        }
    }
    None
}

/// Shortest τ-lasso inside `start`'s block: BFS over in-block τ edges to a
/// state on an in-block τ-cycle, then the shortest such cycle through it.
/// `start` must be in-block divergent.
pub(crate) fn find_lasso(lts: &Lts, p: &Partition, start: StateId) -> Lasso {
    let block = p.block_of(start);
    let members: Vec<StateId> = p.blocks()[block as usize].clone();
    let inside: std::collections::HashSet<StateId> = members.iter().copied().collect();

    // τ-SCCs of the in-block subgraph, to locate cycle states.
    let mut local_id: HashMap<StateId, u32> = HashMap::new();
    for (i, &s) in members.iter().enumerate() {
        local_id.insert(s, i as u32);
    }
    let mut ladj: Vec<Vec<u32>> = vec![Vec::new(); members.len()];
    let mut self_loop = vec![false; members.len()];
    for (&s, &i) in &local_id {
        for e in lts.out(s) {
            if e.is_tau() && inside.contains(&e.dst) {
                if e.dst == s {
                    self_loop[i as usize] = true;
                }
                ladj[i as usize].push(local_id[&e.dst]);
            }
        }
    }
    for l in &mut ladj {
        l.sort_unstable();
    }
    let (scc_of, scc_count) = local_sccs(&ladj);
    let mut scc_size = vec![0u32; scc_count];
    for &c in &scc_of {
        scc_size[c as usize] += 1;
    }
    let on_cycle: Vec<bool> = (0..members.len())
        .map(|i| scc_size[scc_of[i] as usize] >= 2 || self_loop[i])
        .collect();

    // Stem: BFS from start via in-block τ edges to the nearest cycle state.
    let step = |e: &Edge, idx: usize| LassoStep {
        src: e.src,
        dst: e.dst,
        origin: lts.origin(idx).map(std::sync::Arc::from),
    };
    let bfs_path = |from: StateId, goal: &dyn Fn(StateId) -> bool, within_scc: Option<u32>| {
        let mut parent: HashMap<StateId, (StateId, usize)> = HashMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen: std::collections::HashSet<StateId> = [from].into();
        while let Some(s) = queue.pop_front() {
            for (idx, e) in lts.edges()[lts.out_range(s)]
                .iter()
                .zip(lts.out_range(s))
                .map(|(e, i)| (i, e))
            {
                if !e.is_tau() || !inside.contains(&e.dst) {
                    continue;
                }
                if let Some(cc) = within_scc {
                    if scc_of[local_id[&e.dst] as usize] != cc {
                        continue;
                    }
                }
                if goal(e.dst) {
                    let mut path = vec![step(e, idx)];
                    let mut cur = s;
                    while cur != from {
                        let (prev, pidx) = parent[&cur];
                        let pe = lts.edges()[pidx];
                        path.push(step(&pe, pidx));
                        cur = prev;
                    }
                    path.reverse();
                    return Some(path);
                }
                if seen.insert(e.dst) {
                    parent.insert(e.dst, (s, idx));
                    queue.push_back(e.dst);
                }
            }
        }
        None
    };

    let stem = if on_cycle[local_id[&start] as usize] {
        Vec::new()
    } else {
        bfs_path(start, &|s| on_cycle[local_id[&s] as usize], None)
            .expect("divergent state must reach an in-block tau cycle")
    };
    let anchor = stem.last().map(|s| s.dst).unwrap_or(start);
    let anchor_scc = scc_of[local_id[&anchor] as usize];
    let cycle = bfs_path(anchor, &|s| s == anchor, Some(anchor_scc))
        .expect("cycle state must close a tau cycle");
    Lasso { start, stem, cycle }
}

/// Tarjan over a small local adjacency list.
fn local_sccs(adj: &[Vec<u32>]) -> (Vec<u32>, usize) {
    let n = adj.len();
    const UNSET: u32 = u32::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut scc_of = vec![UNSET; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut frames: Vec<(u32, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut count = 0usize;
    for root in 0..n as u32 {
        if index[root as usize] != UNSET {
            continue;
        }
        frames.push((root, 0));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        while let Some(&mut (v, ref mut cursor)) = frames.last_mut() {
            let mut advanced = false;
            while *cursor < adj[v as usize].len() {
                let w = adj[v as usize][*cursor];
                *cursor += 1;
                if index[w as usize] == UNSET {
                    index[w as usize] = next_index;
                    low[w as usize] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w as usize] = true;
                    frames.push((w, 0));
                    advanced = true;
                    break;
                } else if on_stack[w as usize] {
                    low[v as usize] = low[v as usize].min(index[w as usize]);
                }
            }
            if advanced {
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent as usize] = low[parent as usize].min(low[v as usize]);
            }
            if low[v as usize] == index[v as usize] {
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w as usize] = false;
                    scc_of[w as usize] = count as u32;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    (scc_of, count)
}

// ---------------------------------------------------------------------------
// Naive fixpoint oracle
// ---------------------------------------------------------------------------

/// Default state bound for the naive oracle.
pub const NAIVE_BOUND: usize = 500;

/// Greatest branching bisimulation by direct fixpoint on the definition:
/// start from S×S and delete pairs until every surviving pair (s, t)
/// satisfies, for each move s -a-> s', either a = τ and (s', t) survives, or
/// t ⇒ t̂ -a-> t' with (s, t̂) and (s', t') surviving; and symmetrically.
/// Oracle for `branching_partition`; quadratic state, exponential patience.
pub fn naive_branching_relation(lts: &Lts) -> Result<BTreeSet<(StateId, StateId)>, BisimError> {
    let n = lts.state_count();
    if n > NAIVE_BOUND {
        return Err(BisimError::OracleBound { states: n, bound: NAIVE_BOUND });
    }
    let closure = lts.tau_closures();
    let mut rel = vec![true; n * n];
    let ok = |rel: &[bool], s: u32, t: u32| -> bool {
        for e in lts.out(s) {
            if e.is_tau() && rel[e.dst as usize * n + t as usize] {
                continue;
            }
            let matched = closure[t as usize].iter().any(|&th| {
                rel[s as usize * n + th as usize]
                    && lts.out(th).iter().any(|e2| {
                        e2.label == e.label && rel[e.dst as usize * n + e2.dst as usize]
                    })
            });
            if !matched {
                return false;
            }
        }
        true
    };
    loop {
        let mut changed = false;
        for s in 0..n as u32 {
            for t in 0..n as u32 {
                if rel[s as usize * n + t as usize] && !(ok(&rel, s, t) && ok(&rel, t, s)) {
                    rel[s as usize * n + t as usize] = false;
                    rel[t as usize * n + s as usize] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = BTreeSet::new();
    for s in 0..n as u32 {
        for t in 0..n as u32 {
            if rel[s as usize * n + t as usize] {
                out.insert((s, t));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lts::Value;
    use std::sync::Arc;

    fn vis(name: &str) -> ActionLabel {
        ActionLabel::Ret { thread: 1, method: Arc::from(name), retval: Value::Void }
    }

    fn tau() -> ActionLabel {
        ActionLabel::tau(None)
    }

    #[test]
    fn single_state_relation() {
        let lts = Lts::new(1, 0, vec![]);
        let rel = naive_branching_relation(&lts).unwrap();
        assert_eq!(rel, BTreeSet::from([(0, 0)]));
        assert_eq!(branching_partition(&lts).block_count(), 1);
    }

    #[test]
    fn inert_tau_collapses() {
        // 0 -τ-> 1, nothing else: both states are equivalent.
        let lts = Lts::new(2, 0, vec![(0, tau(), 1)]);
        let rel = naive_branching_relation(&lts).unwrap();
        assert_eq!(rel, BTreeSet::from([(0, 0), (0, 1), (1, 0), (1, 1)]));
        assert_eq!(branching_partition(&lts).block_count(), 1);
    }

    #[test]
    fn tau_free_branching_equals_strong() {
        let a = vis("a");
        let b = vis("b");
        let lts = Lts::new(
            4,
            0,
            vec![(0, a.clone(), 1), (0, b.clone(), 2), (1, a.clone(), 3), (2, a.clone(), 3)],
        );
        assert_eq!(branching_partition(&lts), strong_partition(&lts));
        assert_eq!(weak_partition(&lts), strong_partition(&lts));
    }

    #[test]
    fn divergence_separates_tau_loop() {
        // 0 has a τ self-loop and visible a to 2; 1 has only a to 2.
        // Branching merges 0 and 1; branching-div keeps them apart.
        let a = vis("a");
        let lts = Lts::assemble(
            3,
            0,
            vec![(0, tau(), 0), (0, a.clone(), 2), (1, a.clone(), 2)],
        );
        let pb = branching_partition(&lts);
        assert!(pb.same_block(0, 1));
        let pd = divergence_partition(&lts);
        assert!(!pd.same_block(0, 1));
        assert!(pd.refines(&pb));
    }

    #[test]
    fn quotient_drops_tau_self_loops_only() {
        let a = vis("a");
        let lts = Lts::new(2, 0, vec![(0, tau(), 0), (0, a.clone(), 1)]);
        let singletons = Partition::from_block_of(&[0, 1]);
        let q = quotient(&lts, &singletons);
        assert_eq!(q.state_count(), 2);
        assert_eq!(q.transition_count(), 1);
        assert!(!q.edges()[0].is_tau());
    }

    #[test]
    fn quotient_of_branching_partition_preserves_traces() {
        let a = vis("a");
        let b = vis("b");
        let lts = Lts::new(
            5,
            0,
            vec![
                (0, tau(), 1),
                (1, a.clone(), 2),
                (0, a.clone(), 3),
                (3, b.clone(), 4),
                (1, b.clone(), 4),
            ],
        );
        let q = quotient(&lts, &branching_partition(&lts));
        for d in 0..=4 {
            assert_eq!(lts.traces_up_to(d), q.traces_up_to(d));
        }
    }

    #[test]
    fn bisimilar_reflexive() {
        let a = vis("a");
        let lts = Lts::new(2, 0, vec![(0, a, 1), (0, tau(), 1)]);
        for kind in [
            EquivalenceKind::Strong,
            EquivalenceKind::Branching,
            EquivalenceKind::BranchingDiv,
            EquivalenceKind::Weak,
        ] {
            assert!(bisimilar(&lts, &lts, kind).equivalent, "{kind}");
        }
    }

    #[test]
    fn divergence_witness_lasso_shape() {
        let a = vis("a");
        // Left: τ loop 0<->1 plus a-exit; right: plain a.
        let left = Lts::new(
            3,
            0,
            vec![(0, tau(), 1), (1, tau(), 0), (0, a.clone(), 2), (1, a.clone(), 2)],
        );
        let right = Lts::new(2, 0, vec![(0, a.clone(), 1)]);
        let v = bisimilar(&left, &right, EquivalenceKind::BranchingDiv);
        assert!(!v.equivalent);
        assert!(bisimilar(&left, &right, EquivalenceKind::Branching).equivalent);
        let (side, lasso) = v.divergence_witness.expect("lasso expected");
        assert_eq!(side, 0);
        assert!(lasso.stem.is_empty());
        assert_eq!(lasso.cycle.len(), 2);
        assert_eq!(lasso.cycle[0].src, lasso.start);
        assert_eq!(lasso.cycle.last().unwrap().dst, lasso.start);
    }

    #[test]
    fn partition_canonical_numbering() {
        let p = Partition::from_block_of(&[7, 3, 7, 1]);
        assert_eq!(p.block_of(0), 0);
        assert_eq!(p.block_of(1), 1);
        assert_eq!(p.block_of(2), 0);
        assert_eq!(p.block_of(3), 2);
        assert_eq!(p.blocks()[0], vec![0, 2]);
    }
}
