//! Exhaustive interleaving exploration: builds the object-system LTS from a
//! model and a bounded most-general client.
//!
//! A global state is one canonical `u16` vector: the shared valuation
//! followed by one record per thread (current method or idle, current
//! location, remaining operation budget or script position, and a frame of
//! parameter/local slots sized for the widest method). Equal states have
//! byte-equal encodings, so states are hash-consed and numbered in BFS
//! discovery order; two runs on identical inputs produce identical LTSs.
//!
//! From each state, successors are generated thread by thread in ascending
//! order. An idle thread with budget calls every method (declaration order)
//! with every argument choice (canonical order); an in-method thread fires
//! every enabled atomic edge, giving a τ step annotated `t<i>.<loc>` for
//! goto edges and a visible Ret for return edges. Threads with exhausted
//! budgets quiesce.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

use crate::lts::{ActionLabel, Lts, Name, Value};
use crate::modelir::{
    self, Domain, EvalError, Next, ObjectModel, Stmt,
};

/// Default state and transition ceiling.
pub const DEFAULT_CEILING: usize = 10_000_000;

/// Argument values never picked by the default most-general client: these
/// conventionally mark "no value" sentinels in models.
pub const RESERVED_VALUES: [&str; 2] = ["EMPTY", "null"];

/// A bounded most-general client: `threads` threads each perform up to
/// `max_ops_per_thread` operations, drawing arguments from per-method
/// choices, or follow a fixed per-thread script when `scenario` is set.
#[derive(Clone, PartialEq, Debug)]
pub struct ClientConfig {
    pub threads: u32,
    pub max_ops_per_thread: u32,
    /// Cap on the default argument pools (the CLI's value-count knob).
    pub value_limit: Option<usize>,
    /// Explicit argument vectors per method; methods not listed use the
    /// distinct-values default, one vector per call slot.
    pub arg_domain: BTreeMap<Name, Vec<Vec<Value>>>,
    /// Fixed call script per thread; overrides budgets and argument pools.
    pub scenario: Option<Vec<Vec<(Name, Vec<Value>)>>>,
    pub max_states: usize,
    pub max_transitions: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            threads: 2,
            max_ops_per_thread: 2,
            value_limit: None,
            arg_domain: BTreeMap::new(),
            scenario: None,
            max_states: DEFAULT_CEILING,
            max_transitions: DEFAULT_CEILING,
        }
    }
}

impl ClientConfig {
    pub fn with_threads(mut self, k: u32) -> Self {
        self.threads = k;
        self
    }

    pub fn with_ops(mut self, ops: u32) -> Self {
        self.max_ops_per_thread = ops;
        self
    }
}

#[derive(Error, Debug)]
pub enum ExploreError {
    #[error("state ceiling {limit} exceeded ({frontier} states on the frontier)")]
    StateCeiling { limit: usize, frontier: usize },
    #[error("transition ceiling {limit} exceeded ({frontier} states on the frontier)")]
    TransitionCeiling { limit: usize, frontier: usize },
    #[error(
        "stuck at non-return location `{location}` of {method} (thread {thread}): \
         no outgoing edge is enabled"
    )]
    Stuck { method: String, location: String, thread: u32 },
    #[error("client configuration: {0}")]
    Config(String),
    #[error("evaluation failed at {context}: {source}")]
    Eval { context: String, source: EvalError },
    #[error(transparent)]
    Model(#[from] modelir::ModelError),
}

// ---------------------------------------------------------------------------
// State layout
// ---------------------------------------------------------------------------

/// Slot width of a domain in the state vector.
fn width(d: &Domain) -> usize {
    match d {
        Domain::Array { len, .. } => *len as usize,
        _ => 1,
    }
}

fn scalar_card(d: &Domain) -> u64 {
    match d {
        Domain::Array { elem, .. } => elem.cardinality(),
        other => other.cardinality(),
    }
}

/// Encode one scalar value of domain `d` (or of `d`'s element domain).
fn enc(d: &Domain, v: &Value) -> u16 {
    match (d, v) {
        (Domain::Int { lo, .. }, Value::Int(i)) => (i - lo) as u16,
        (Domain::Bool, Value::Bool(b)) => *b as u16,
        (Domain::Enum { variants }, Value::Sym(s)) => {
            variants.iter().position(|x| x == s).expect("variant in domain") as u16
        }
        _ => unreachable!("encode type mismatch"),
    }
}

fn dec(d: &Domain, s: u16) -> Value {
    match d {
        Domain::Int { lo, .. } => Value::Int(lo + s as i64),
        Domain::Bool => Value::Bool(s != 0),
        Domain::Enum { variants } => Value::Sym(variants[s as usize].clone()),
        Domain::Array { .. } => unreachable!("decode of array slot"),
    }
}

struct SlotVar {
    dom: Domain,
    offset: usize,
}

struct MethodLayout {
    /// Params then locals, with frame-relative offsets.
    vars: Vec<SlotVar>,
    var_index: HashMap<Name, usize>,
    loc_index: HashMap<Name, u16>,
}

struct Layout {
    shared: Vec<SlotVar>,
    shared_index: HashMap<Name, usize>,
    shared_width: usize,
    frame_width: usize,
    methods: Vec<MethodLayout>,
}

/// Thread record: [method (0 = idle, else 1 + index), location, budget or
/// script position, frame slots].
const T_METHOD: usize = 0;
const T_LOC: usize = 1;
const T_OPS: usize = 2;
const T_FRAME: usize = 3;

impl Layout {
    fn build(model: &ObjectModel) -> Result<Layout, ExploreError> {
        let check_card = |name: &Name, d: &Domain| -> Result<(), ExploreError> {
            if scalar_card(d) > u16::MAX as u64 + 1 {
                return Err(ExploreError::Config(format!(
                    "domain of `{name}` too large to encode ({d})"
                )));
            }
            Ok(())
        };
        let mut shared = Vec::new();
        let mut shared_index = HashMap::new();
        let mut off = 0usize;
        for v in &model.shared {
            check_card(&v.name, &v.dom)?;
            shared_index.insert(v.name.clone(), shared.len());
            shared.push(SlotVar { dom: v.dom.clone(), offset: off });
            off += width(&v.dom);
        }
        let shared_width = off;

        let mut methods = Vec::new();
        let mut frame_width = 0usize;
        for m in &model.methods {
            let mut vars = Vec::new();
            let mut var_index = HashMap::new();
            let mut foff = 0usize;
            for (p, d) in &m.params {
                check_card(p, d)?;
                var_index.insert(p.clone(), vars.len());
                vars.push(SlotVar { dom: d.clone(), offset: foff });
                foff += width(d);
            }
            for l in &m.locals {
                check_card(&l.name, &l.dom)?;
                var_index.insert(l.name.clone(), vars.len());
                vars.push(SlotVar { dom: l.dom.clone(), offset: foff });
                foff += width(&l.dom);
            }
            frame_width = frame_width.max(foff);
            let loc_index = m
                .locations
                .iter()
                .enumerate()
                .map(|(i, l)| (l.label.clone(), i as u16))
                .collect();
            methods.push(MethodLayout { vars, var_index, loc_index });
        }
        Ok(Layout { shared, shared_index, shared_width, frame_width, methods })
    }

    fn thread_width(&self) -> usize {
        T_FRAME + self.frame_width
    }

    fn thread_base(&self, t: usize) -> usize {
        self.shared_width + t * self.thread_width()
    }
}

fn encode_into(slots: &mut [u16], dom: &Domain, v: &Value) {
    match (dom, v) {
        (Domain::Array { elem, .. }, Value::Tuple(vs)) => {
            for (slot, v) in slots.iter_mut().zip(vs) {
                *slot = enc(elem, v);
            }
        }
        (d, v) => slots[0] = enc(d, v),
    }
}

fn decode_from(slots: &[u16], dom: &Domain) -> Value {
    match dom {
        Domain::Array { len, elem } => Value::Tuple(
            (0..*len as usize).map(|i| dec(elem, slots[i])).collect(),
        ),
        d => dec(d, slots[0]),
    }
}

// ---------------------------------------------------------------------------
// Exploration
// ---------------------------------------------------------------------------

/// Build the interleaving LTS of `model` under `config`. Stuck non-return
/// locations and domain overflows are hard errors; `validate` reports the
/// same conditions as diagnostics instead.
pub fn explore(model: &ObjectModel, config: &ClientConfig) -> Result<Lts, ExploreError> {
    let (lts, _diags) = run(model, config, false)?;
    Ok(lts)
}

/// Explore the atomic-block specification: `explore(make_spec(model))`.
pub fn explore_spec(model: &ObjectModel, config: &ClientConfig) -> Result<Lts, ExploreError> {
    let spec = modelir::make_spec(model)?;
    explore(&spec, config)
}

/// Model sanity at a client bound: reports stuck non-return locations and
/// domain overflows reachable under `config`, for both the model and (when
/// a sequential spec is present) its atomic-block specification. An empty
/// list means the model is clean at this bound.
pub fn validate(
    model: &ObjectModel,
    config: &ClientConfig,
) -> Result<Vec<String>, ExploreError> {
    let (_, mut diags) = run(model, config, true)?;
    if model.seqspec.is_some() {
        let spec = modelir::make_spec(model)?;
        let (_, spec_diags) = run(&spec, config, true)?;
        diags.extend(spec_diags.into_iter().map(|d| format!("spec: {d}")));
    }
    Ok(diags)
}

fn check_config(model: &ObjectModel, config: &ClientConfig) -> Result<(), ExploreError> {
    let fail = |msg: String| Err(ExploreError::Config(msg));
    if config.threads < 1 {
        return fail("at least one thread is required".to_string());
    }
    let check_args = |method: &Name, args: &[Value]| -> Result<(), ExploreError> {
        let Some(m) = model.method(method) else {
            return fail(format!("unknown method `{method}`"));
        };
        if args.len() != m.params.len() {
            return fail(format!(
                "method {method} takes {} arguments, got {}",
                m.params.len(),
                args.len()
            ));
        }
        for ((p, d), v) in m.params.iter().zip(args) {
            if !d.contains(v) {
                return fail(format!(
                    "argument {v} for parameter `{p}` of {method} is outside {d}"
                ));
            }
        }
        Ok(())
    };
    match &config.scenario {
        Some(scripts) => {
            if scripts.len() != config.threads as usize {
                return fail(format!(
                    "scenario has {} scripts for {} threads",
                    scripts.len(),
                    config.threads
                ));
            }
            for script in scripts {
                if script.len() > u16::MAX as usize {
                    return fail("scenario script too long".to_string());
                }
                for (m, args) in script {
                    check_args(m, args)?;
                }
            }
        }
        None => {
            if config.max_ops_per_thread < 1 {
                return fail("max_ops_per_thread must be at least 1".to_string());
            }
            if config.max_ops_per_thread > u16::MAX as u32 {
                return fail("max_ops_per_thread too large".to_string());
            }
        }
    }
    for (method, vectors) in &config.arg_domain {
        if vectors.is_empty() {
            return fail(format!("empty argument set for method `{method}`"));
        }
        for args in vectors {
            check_args(method, args)?;
        }
    }
    Ok(())
}

/// The default argument pool for one parameter: its scalar domain minus
/// reserved sentinel values, optionally truncated to the configured value
/// count.
fn default_pool(dom: &Domain, limit: Option<usize>) -> Vec<Value> {
    let mut pool: Vec<Value> = dom
        .scalar_values()
        .into_iter()
        .filter(|v| !matches!(v, Value::Sym(s) if RESERVED_VALUES.contains(&&**s)))
        .collect();
    if let Some(n) = limit {
        pool.truncate(n.max(1));
    }
    pool
}

/// Per-method call choices for the most-general client.
pub(crate) enum CallChoices {
    /// Explicit vectors, tried in order, independent of the call slot.
    Explicit(Vec<Vec<Value>>),
    /// Distinct-values default: parameter pools indexed by global call slot.
    Pools(Vec<Vec<Value>>),
}

pub(crate) fn call_plan(
    model: &ObjectModel,
    config: &ClientConfig,
) -> Result<Vec<CallChoices>, ExploreError> {
    let mut plan = Vec::new();
    for m in &model.methods {
        if let Some(vectors) = config.arg_domain.get(&m.name) {
            plan.push(CallChoices::Explicit(vectors.clone()));
            continue;
        }
        let mut pools = Vec::new();
        for (p, d) in &m.params {
            let pool = default_pool(d, config.value_limit);
            if pool.is_empty() {
                return Err(ExploreError::Config(format!(
                    "no usable argument values for parameter `{p}` of {}",
                    m.name
                )));
            }
            pools.push(pool);
        }
        plan.push(CallChoices::Pools(pools));
    }
    Ok(plan)
}

pub(crate) fn label_value(args: &[Value]) -> Value {
    match args.len() {
        0 => Value::Void,
        1 => args[0].clone(),
        _ => Value::Tuple(args.to_vec()),
    }
}

fn run(
    model: &ObjectModel,
    config: &ClientConfig,
    lenient: bool,
) -> Result<(Lts, Vec<String>), ExploreError> {
    check_config(model, config)?;
    let layout = Layout::build(model)?;
    let plan = call_plan(model, config)?;
    let k = config.threads as usize;
    let mut diags: BTreeSet<String> = BTreeSet::new();

    // Initial state: shared initializers, all threads idle with full budget.
    let state_len = layout.shared_width + k * layout.thread_width();
    let mut init = vec![0u16; state_len];
    for (sv, decl) in layout.shared.iter().zip(&model.shared) {
        encode_into(&mut init[sv.offset..sv.offset + width(&sv.dom)], &sv.dom, &decl.init);
    }
    for t in 0..k {
        let tb = layout.thread_base(t);
        init[tb + T_OPS] = match &config.scenario {
            Some(_) => 0,
            None => config.max_ops_per_thread as u16,
        };
    }

    let mut ids: HashMap<Box<[u16]>, u32> = HashMap::new();
    let mut states: Vec<Box<[u16]>> = Vec::new();
    ids.insert(init.clone().into_boxed_slice(), 0);
    states.push(init.into_boxed_slice());
    let mut transitions: Vec<(u32, ActionLabel, u32)> = Vec::new();

    let mut head = 0usize;
    while head < states.len() {
        let src = head as u32;
        let sv: Box<[u16]> = states[head].clone();
        head += 1;

        for t in 0..k {
            let tb = layout.thread_base(t);
            let thread_no = (t + 1) as u32;
            if sv[tb + T_METHOD] == 0 {
                // Idle: call choices.
                let calls: Vec<(usize, Vec<Value>)> = match &config.scenario {
                    Some(scripts) => {
                        let pos = sv[tb + T_OPS] as usize;
                        match scripts[t].get(pos) {
                            None => Vec::new(),
                            Some((name, args)) => {
                                let mi = model
                                    .methods
                                    .iter()
                                    .position(|m| m.name == *name)
                                    .expect("scenario method checked");
                                vec![(mi, args.clone())]
                            }
                        }
                    }
                    None => {
                        let ops_left = sv[tb + T_OPS] as u32;
                        if ops_left == 0 {
                            Vec::new()
                        } else {
                            // Global call slot: thread-major, then op index.
                            let slot = t as u64 * config.max_ops_per_thread as u64
                                + (config.max_ops_per_thread - ops_left) as u64;
                            let mut out = Vec::new();
                            for (mi, choices) in plan.iter().enumerate() {
                                match choices {
                                    CallChoices::Explicit(vectors) => {
                                        for v in vectors {
                                            out.push((mi, v.clone()));
                                        }
                                    }
                                    CallChoices::Pools(pools) => {
                                        let args: Vec<Value> = pools
                                            .iter()
                                            .map(|p| p[slot as usize % p.len()].clone())
                                            .collect();
                                        out.push((mi, args));
                                    }
                                }
                            }
                            out
                        }
                    }
                };
                for (mi, args) in calls {
                    let method = &model.methods[mi];
                    let ml = &layout.methods[mi];
                    let mut new = sv.clone().into_vec();
                    new[tb + T_METHOD] = (mi + 1) as u16;
                    new[tb + T_LOC] = 0;
                    for (slot_var, arg) in ml.vars.iter().zip(args.iter()) {
                        let off = tb + T_FRAME + slot_var.offset;
                        encode_into(
                            &mut new[off..off + width(&slot_var.dom)],
                            &slot_var.dom,
                            arg,
                        );
                    }
                    for (slot_var, decl) in
                        ml.vars.iter().skip(method.params.len()).zip(&method.locals)
                    {
                        let off = tb + T_FRAME + slot_var.offset;
                        encode_into(
                            &mut new[off..off + width(&slot_var.dom)],
                            &slot_var.dom,
                            &decl.init,
                        );
                    }
                    let label = ActionLabel::Call {
                        thread: thread_no,
                        method: method.name.clone(),
                        arg: label_value(&args),
                    };
                    push_edge(
                        &mut ids, &mut states, &mut transitions, config, head, src, label,
                        new,
                    )?;
                }
            } else {
                // In-method: fire enabled edges.
                let mi = (sv[tb + T_METHOD] - 1) as usize;
                let method = &model.methods[mi];
                let ml = &layout.methods[mi];
                let loc = &method.locations[sv[tb + T_LOC] as usize];
                let context = || {
                    format!(
                        "method {}, location {}, thread {}",
                        method.name, loc.label, thread_no
                    )
                };
                let read = |name: &str| -> Result<Value, EvalError> {
                    if let Some(&vi) = ml.var_index.get(name) {
                        let v = &ml.vars[vi];
                        let off = tb + T_FRAME + v.offset;
                        return Ok(decode_from(&sv[off..off + width(&v.dom)], &v.dom));
                    }
                    if let Some(&si) = layout.shared_index.get(name) {
                        let v = &layout.shared[si];
                        return Ok(decode_from(
                            &sv[v.offset..v.offset + width(&v.dom)],
                            &v.dom,
                        ));
                    }
                    Err(EvalError::UnknownVar(name.to_string()))
                };

                let mut any_enabled = false;
                for edge in &loc.edges {
                    let enabled = modelir::guard_holds(edge, &read).map_err(|e| {
                        ExploreError::Eval { context: context(), source: e }
                    })?;
                    if !enabled {
                        continue;
                    }
                    any_enabled = true;
                    match step_edge(
                        model, &layout, config, &sv, tb, t, mi, edge, &read,
                    ) {
                        Ok((label, new)) => {
                            push_edge(
                                &mut ids, &mut states, &mut transitions, config, head,
                                src, label, new,
                            )?;
                        }
                        Err(
                            e @ (EvalError::OutOfDomain { .. } | EvalError::Index { .. }),
                        ) if lenient => {
                            diags.insert(format!("{} at {}", e, context()));
                        }
                        Err(e) => {
                            return Err(ExploreError::Eval { context: context(), source: e })
                        }
                    }
                }
                if !any_enabled && !loc.is_return() {
                    if lenient {
                        diags.insert(format!(
                            "stuck at non-return location `{}` of {}",
                            loc.label, method.name
                        ));
                    } else {
                        return Err(ExploreError::Stuck {
                            method: method.name.to_string(),
                            location: loc.label.to_string(),
                            thread: thread_no,
                        });
                    }
                }
            }
        }
    }

    let lts = Lts::new(states.len(), 0, transitions);
    Ok((lts, diags.into_iter().collect()))
}

/// Apply one enabled edge for thread `t`; returns the transition label and
/// successor vector. Domain violations surface as EvalError so validate can
/// downgrade them.
#[allow(clippy::too_many_arguments)]
fn step_edge(
    model: &ObjectModel,
    layout: &Layout,
    config: &ClientConfig,
    sv: &[u16],
    tb: usize,
    t: usize,
    mi: usize,
    edge: &Stmt,
    read: &crate::modelir::ReadFn<'_>,
) -> Result<(ActionLabel, Vec<u16>), EvalError> {
    let method = &model.methods[mi];
    let ml = &layout.methods[mi];
    let loc_label = &method.locations[sv[tb + T_LOC] as usize].label;
    match &edge.next {
        Next::Goto(target) => {
            let writes = modelir::stmt_writes(edge, read)?;
            let mut new = sv.to_vec();
            for (name, idx, value) in writes {
                write_slot(layout, ml, &mut new, tb, &name, idx, value)?;
            }
            new[tb + T_LOC] = ml.loc_index[target];
            let origin = format!("t{}.{}", t + 1, loc_label);
            Ok((ActionLabel::tau(Some(&origin)), new))
        }
        Next::Return(expr) => {
            let retval = match expr {
                None => Value::Void,
                Some(e) => {
                    let v = modelir::eval(e, read)?;
                    let dom = method.returns.as_ref().expect("checked: return with value");
                    if !dom.contains(&v) {
                        return Err(EvalError::OutOfDomain {
                            name: format!("return value of {}", method.name),
                            value: v.to_string(),
                        });
                    }
                    v
                }
            };
            let mut new = sv.to_vec();
            new[tb + T_METHOD] = 0;
            new[tb + T_LOC] = 0;
            for s in &mut new[tb + T_FRAME..tb + T_FRAME + layout.frame_width] {
                *s = 0;
            }
            new[tb + T_OPS] = match &config.scenario {
                Some(_) => sv[tb + T_OPS] + 1,
                None => sv[tb + T_OPS] - 1,
            };
            let label = ActionLabel::Ret {
                thread: (t + 1) as u32,
                method: method.name.clone(),
                retval,
            };
            Ok((label, new))
        }
    }
}

fn write_slot(
    layout: &Layout,
    ml: &MethodLayout,
    new: &mut [u16],
    tb: usize,
    name: &Name,
    idx: Option<i64>,
    value: Value,
) -> Result<(), EvalError> {
    let (dom, base) = if let Some(&vi) = ml.var_index.get(name) {
        let v = &ml.vars[vi];
        (&v.dom, tb + T_FRAME + v.offset)
    } else if let Some(&si) = layout.shared_index.get(name) {
        let v = &layout.shared[si];
        (&v.dom, v.offset)
    } else {
        return Err(EvalError::UnknownVar(name.to_string()));
    };
    match (idx, dom) {
        (None, d) => {
            if !d.contains(&value) {
                return Err(EvalError::OutOfDomain {
                    name: name.to_string(),
                    value: value.to_string(),
                });
            }
            encode_into(&mut new[base..base + width(d)], d, &value);
        }
        (Some(i), Domain::Array { len, elem }) => {
            if i < 1 || i > *len as i64 {
                return Err(EvalError::Index {
                    name: name.to_string(),
                    index: i,
                    len: *len,
                });
            }
            if !elem.contains(&value) {
                return Err(EvalError::OutOfDomain {
                    name: name.to_string(),
                    value: value.to_string(),
                });
            }
            new[base + (i - 1) as usize] = enc(elem, &value);
        }
        (Some(_), _) => return Err(EvalError::NotArray(name.to_string())),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn push_edge(
    ids: &mut HashMap<Box<[u16]>, u32>,
    states: &mut Vec<Box<[u16]>>,
    transitions: &mut Vec<(u32, ActionLabel, u32)>,
    config: &ClientConfig,
    head: usize,
    src: u32,
    label: ActionLabel,
    new: Vec<u16>,
) -> Result<(), ExploreError> {
    let boxed = new.into_boxed_slice();
    let dst = match ids.get(&boxed) {
        Some(&id) => id,
        None => {
            let id = states.len() as u32;
            if states.len() + 1 > config.max_states {
                return Err(ExploreError::StateCeiling {
                    limit: config.max_states,
                    frontier: states.len() - head,
                });
            }
            ids.insert(boxed.clone(), id);
            states.push(boxed);
            id
        }
    };
    if transitions.len() + 1 > config.max_transitions {
        return Err(ExploreError::TransitionCeiling {
            limit: config.max_transitions,
            frontier: states.len() - head,
        });
    }
    transitions.push((src, label, dst));
    Ok(())
}
