//! Modeling language for concurrent objects: parser, typed IR, expression
//! evaluation, and construction of the atomic-block specification Θ_sp.
//!
//! Grammar (line comments start with `//`):
//!
//! ```text
//! object    := "object" IDENT "{" (shared | method | spec)* "}"
//! shared    := "shared" IDENT ":" domain "=" const ";"
//! domain    := "int" "[" INT ".." INT "]" | "bool"
//!            | "enum" "{" IDENT ("," IDENT)* "}"
//!            | "array" "[" INT "]" "of" domain
//! method    := "method" IDENT "(" (IDENT ":" domain ("," ...)*)? ")"
//!              ("returns" domain)? "{" local* edge* "}"
//! local     := "local" IDENT ":" domain "=" const ";"
//! edge      := IDENT ":" ("atomic" "{" ("when" expr ";")? stmt* "}")? next
//! next      := "goto" IDENT ";" | "return" expr? ";"
//! stmt      := lval ":=" "cas" "(" lval "," expr "," expr ")" ";"
//!            | "(" lval ("," lval)* ")" ":=" "(" expr ("," expr)* ")" ";"
//!            | lval ":=" expr ";"
//! lval      := IDENT ("[" expr "]")?
//! spec      := "spec" "{" state* case* "}"
//! state     := "state" IDENT ":" domain "=" const ";"
//! case      := "on" IDENT "(" (IDENT ("," IDENT)*)? ")" ("when" expr)?
//!              ("->" expr)? "{" stmt* "}"
//! ```
//!
//! Expressions use `and`, `or`, `not`, comparisons `= != < <= > >=`, and
//! integer `+ -`. Several edges may share a source label; they are the
//! guarded alternatives of that location, tried in declaration order by
//! nothing (all enabled edges are explored). All updates of one atomic edge
//! are simultaneous: every right-hand side and every index evaluates in the
//! pre-state. Array indices are 1-based. Return edges carry no updates:
//! returning is a visible step, not also an internal one. Spec cases are
//! first-match-wins and their result and updates also read the pre-state.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lts::{Name, Value};

// ---------------------------------------------------------------------------
// IR types
// ---------------------------------------------------------------------------

/// A parsed and type-checked concurrent object model.
#[derive(Clone, PartialEq, Debug)]
pub struct ObjectModel {
    pub name: Name,
    pub shared: Vec<VarDecl>,
    pub methods: Vec<Method>,
    pub seqspec: Option<SequentialSpec>,
}

impl ObjectModel {
    pub fn method(&self, name: &str) -> Option<&Method> {
        self.methods.iter().find(|m| &*m.name == name)
    }
}

/// A variable declaration with a finite domain and constant initializer.
/// Array initializers broadcast a scalar constant to every element.
#[derive(Clone, PartialEq, Debug)]
pub struct VarDecl {
    pub name: Name,
    pub dom: Domain,
    pub init: Value,
}

/// A finite value domain.
#[derive(Clone, PartialEq, Debug)]
pub enum Domain {
    Int { lo: i64, hi: i64 },
    Bool,
    Enum { variants: Vec<Name> },
    Array { len: u32, elem: Box<Domain> },
}

impl Domain {
    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (Domain::Int { lo, hi }, Value::Int(i)) => lo <= i && i <= hi,
            (Domain::Bool, Value::Bool(_)) => true,
            (Domain::Enum { variants }, Value::Sym(s)) => variants.contains(s),
            (Domain::Array { len, elem }, Value::Tuple(vs)) => {
                vs.len() == *len as usize && vs.iter().all(|v| elem.contains(v))
            }
            _ => false,
        }
    }

    /// A canonical member: range minimum, false, first variant.
    pub fn default_value(&self) -> Value {
        match self {
            Domain::Int { lo, .. } => Value::Int(*lo),
            Domain::Bool => Value::Bool(false),
            Domain::Enum { variants } => Value::Sym(variants[0].clone()),
            Domain::Array { len, elem } => {
                Value::Tuple(vec![elem.default_value(); *len as usize])
            }
        }
    }

    /// Number of values (scalar domains only are small; arrays multiply out).
    pub fn cardinality(&self) -> u64 {
        match self {
            Domain::Int { lo, hi } => (hi - lo + 1) as u64,
            Domain::Bool => 2,
            Domain::Enum { variants } => variants.len() as u64,
            Domain::Array { len, elem } => elem.cardinality().saturating_pow(*len),
        }
    }

    /// All values of a scalar domain, in canonical order.
    pub fn scalar_values(&self) -> Vec<Value> {
        match self {
            Domain::Int { lo, hi } => (*lo..=*hi).map(Value::Int).collect(),
            Domain::Bool => vec![Value::Bool(false), Value::Bool(true)],
            Domain::Enum { variants } => {
                variants.iter().map(|v| Value::Sym(v.clone())).collect()
            }
            Domain::Array { .. } => panic!("scalar_values on array domain"),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Int { lo, hi } => write!(f, "int[{lo}..{hi}]"),
            Domain::Bool => write!(f, "bool"),
            Domain::Enum { variants } => {
                write!(f, "enum{{")?;
                for (i, v) in variants.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "}}")
            }
            Domain::Array { len, elem } => write!(f, "array[{len}] of {elem}"),
        }
    }
}

/// One method: parameters, optional return domain, locals, and a control
/// graph of atomic edges between labeled locations. The first location is
/// the entry point.
#[derive(Clone, PartialEq, Debug)]
pub struct Method {
    pub name: Name,
    pub params: Vec<(Name, Domain)>,
    pub returns: Option<Domain>,
    pub locals: Vec<VarDecl>,
    pub locations: Vec<Location>,
}

impl Method {
    pub fn location(&self, label: &str) -> Option<&Location> {
        self.locations.iter().find(|l| &*l.label == label)
    }
}

/// A program location and its outgoing atomic edges.
#[derive(Clone, PartialEq, Debug)]
pub struct Location {
    pub label: Name,
    pub edges: Vec<Stmt>,
}

impl Location {
    /// A location with a return edge is exempt from the stuck-location rule.
    pub fn is_return(&self) -> bool {
        self.edges.iter().any(|e| matches!(e.next, Next::Return(_)))
    }
}

/// One atomic edge: optional guard, simultaneous updates, optional cas, and
/// a successor (goto another location, or a visible return).
#[derive(Clone, PartialEq, Debug)]
pub struct Stmt {
    pub guard: Option<Expr>,
    pub updates: Vec<(LValue, Expr)>,
    pub cas: Option<CasOp>,
    pub next: Next,
}

/// Atomic compare-and-swap: if target = expected then target := new and
/// result := true, else result := false; one step either way.
#[derive(Clone, PartialEq, Debug)]
pub struct CasOp {
    pub result: Name,
    pub target: LValue,
    pub expected: Expr,
    pub new: Expr,
}

#[derive(Clone, PartialEq, Debug)]
pub enum Next {
    Goto(Name),
    Return(Option<Expr>),
}

#[derive(Clone, PartialEq, Debug)]
pub enum LValue {
    Var(Name),
    Index(Name, Expr),
}

impl LValue {
    pub fn name(&self) -> &Name {
        match self {
            LValue::Var(n) | LValue::Index(n, _) => n,
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub enum Expr {
    Const(Value),
    Var(Name),
    Index(Name, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum BinOp {
    Add,
    Sub,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

/// The sequential specification: finite abstract state plus per-method
/// cases. For a call, the first case (in declaration order) whose guard
/// holds fires; its result and updates all read the pre-state. The step
/// function is deterministic by construction and must be total, which
/// `validate` checks over the reachable abstract states.
#[derive(Clone, PartialEq, Debug)]
pub struct SequentialSpec {
    pub state: Vec<VarDecl>,
    pub cases: Vec<SpecCase>,
}

#[derive(Clone, PartialEq, Debug)]
pub struct SpecCase {
    pub method: Name,
    pub params: Vec<Name>,
    pub guard: Option<Expr>,
    pub result: Option<Expr>,
    pub updates: Vec<(LValue, Expr)>,
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Error, Debug, PartialEq)]
pub enum ModelError {
    #[error("line {line}, col {col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("undeclared identifier `{name}` in {context}")]
    Undeclared { name: String, context: String },
    #[error("domain mismatch in {context}: {msg}")]
    DomainMismatch { context: String, msg: String },
    #[error("unbounded domain for `{name}`: integer domains require an explicit range")]
    Unbounded { name: String },
    #[error("duplicate declaration of `{name}` in {context}")]
    Duplicate { name: String, context: String },
    #[error("unknown goto target `{label}` in method {method}")]
    NoSuchLabel { label: String, method: String },
    #[error("location `{label}` in method {method} is unreachable from entry")]
    UnreachableLocation { label: String, method: String },
    #[error("return edge at `{label}` in method {method} must not update state")]
    ReturnWithUpdates { label: String, method: String },
    #[error("spec case refers to unknown method `{method}`")]
    NoSuchMethod { method: String },
    #[error("spec case for {method} binds {got} parameters, the method declares {want}")]
    SpecArity { method: String, got: usize, want: usize },
    #[error("initializer for `{name}` must be a constant in its domain")]
    BadInit { name: String },
    #[error("assignment to read-only `{name}` in {context}")]
    ReadOnly { name: String, context: String },
    #[error("model has no sequential specification")]
    MissingSpec,
}

#[derive(Error, Debug, PartialEq)]
pub enum EvalError {
    #[error("unknown variable `{0}`")]
    UnknownVar(String),
    #[error("`{0}` is not an array")]
    NotArray(String),
    #[error("index {index} out of range 1..={len} for `{name}`")]
    Index { name: String, index: i64, len: u32 },
    #[error("type error: {0}")]
    Type(String),
    #[error("value {value} outside the domain of `{name}`")]
    OutOfDomain { name: String, value: String },
    #[error("conflicting writes to `{0}` in one atomic step")]
    WriteConflict(String),
    #[error("integer overflow")]
    Overflow,
    #[error("no spec case matches {method} in the current abstract state")]
    NoSpecCase { method: String },
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Debug)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
        }
    }
}

const SYMBOLS: [&str; 20] = [
    ":=", "..", "->", "<=", ">=", "!=", "{", "}", "(", ")", "[", "]", ",", ";", ":", "=", "<",
    ">", "+", "-",
];

const KEYWORDS: [&str; 23] = [
    "object", "shared", "method", "returns", "local", "atomic", "when", "goto", "return",
    "spec", "state", "on", "int", "bool", "enum", "array", "of", "true", "false", "cas",
    "and", "or", "not",
];

fn lex(text: &str) -> Result<Vec<(Tok, u32, u32)>, ModelError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    'outer: while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            toks.push((Tok::Ident(word.to_string()), line, col));
            col += (i - start) as u32;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let word = &text[start..i];
            let v: i64 = word.parse().map_err(|_| ModelError::Syntax {
                line,
                col,
                msg: format!("integer literal `{word}` out of range"),
            })?;
            toks.push((Tok::Int(v), line, col));
            col += (i - start) as u32;
            continue;
        }
        for sym in SYMBOLS {
            if text[i..].starts_with(sym) {
                toks.push((Tok::Sym(sym), line, col));
                i += sym.len();
                col += sym.len() as u32;
                continue 'outer;
            }
        }
        return Err(ModelError::Syntax {
            line,
            col,
            msg: format!("unexpected character `{}`", char::from(c)),
        });
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, u32, u32)>,
    pos: usize,
}

impl Parser {
    fn here(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|&(_, l, c)| (l, c))
            .unwrap_or((1, 1))
    }

    fn err(&self, msg: impl Into<String>) -> ModelError {
        let (line, col) = self.here();
        ModelError::Syntax { line, col, msg: msg.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == kw)
    }

    fn try_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn try_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ModelError> {
        if self.try_sym(s) {
            Ok(())
        } else {
            match self.peek() {
                Some(t) => Err(self.err(format!("expected `{s}`, found {t}"))),
                None => Err(self.err(format!("expected `{s}`, found end of input"))),
            }
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ModelError> {
        if self.try_kw(kw) {
            Ok(())
        } else {
            match self.peek() {
                Some(t) => Err(self.err(format!("expected `{kw}`, found {t}"))),
                None => Err(self.err(format!("expected `{kw}`, found end of input"))),
            }
        }
    }

    /// A declared name: identifier, not a keyword, not `__`-reserved.
    fn decl_name(&mut self, what: &str) -> Result<Name, ModelError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) if KEYWORDS.contains(&s.as_str()) => {
                Err(self.err(format!("`{s}` is a keyword, not a valid {what} name")))
            }
            Some(Tok::Ident(s)) if s.starts_with("__") => {
                Err(self.err(format!("names starting with `__` are reserved ({what} `{s}`)")))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(Arc::from(s.as_str()))
            }
            Some(t) => Err(self.err(format!("expected {what} name, found {t}"))),
            None => Err(self.err(format!("expected {what} name, found end of input"))),
        }
    }

    fn int(&mut self) -> Result<i64, ModelError> {
        let neg = self.try_sym("-");
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(if neg { -v } else { v })
            }
            Some(t) => Err(self.err(format!("expected integer, found {t}"))),
            None => Err(self.err("expected integer, found end of input")),
        }
    }

    fn domain(&mut self, owner: &str) -> Result<Domain, ModelError> {
        if self.try_kw("int") {
            if !self.at_sym("[") {
                return Err(ModelError::Unbounded { name: owner.to_string() });
            }
            self.expect_sym("[")?;
            let lo = self.int()?;
            self.expect_sym("..")?;
            let hi = self.int()?;
            self.expect_sym("]")?;
            if lo > hi {
                return Err(self.err(format!("empty integer range [{lo}..{hi}]")));
            }
            Ok(Domain::Int { lo, hi })
        } else if self.try_kw("bool") {
            Ok(Domain::Bool)
        } else if self.try_kw("enum") {
            self.expect_sym("{")?;
            let mut variants = vec![self.decl_name("enum variant")?];
            while self.try_sym(",") {
                variants.push(self.decl_name("enum variant")?);
            }
            self.expect_sym("}")?;
            let mut seen = HashSet::new();
            for v in &variants {
                if !seen.insert(v.clone()) {
                    return Err(ModelError::Duplicate {
                        name: v.to_string(),
                        context: format!("enum domain of `{owner}`"),
                    });
                }
            }
            Ok(Domain::Enum { variants })
        } else if self.try_kw("array") {
            self.expect_sym("[")?;
            let len = self.int()?;
            self.expect_sym("]")?;
            self.expect_kw("of")?;
            if len < 1 || len > u32::MAX as i64 {
                return Err(self.err(format!("array length {len} out of range")));
            }
            let elem = self.domain(owner)?;
            if matches!(elem, Domain::Array { .. }) {
                return Err(self.err("nested array domains are not supported"));
            }
            Ok(Domain::Array { len: len as u32, elem: Box::new(elem) })
        } else {
            match self.peek() {
                Some(t) => Err(self.err(format!("expected a domain, found {t}"))),
                None => Err(self.err("expected a domain, found end of input")),
            }
        }
    }

    fn var_decl(&mut self, kw: &str) -> Result<VarDecl, ModelError> {
        self.expect_kw(kw)?;
        let name = self.decl_name("variable")?;
        self.expect_sym(":")?;
        let dom = self.domain(&name)?;
        self.expect_sym("=")?;
        let raw = self.expr()?;
        self.expect_sym(";")?;
        // Initializers are constants; variant literals come from the decl's
        // own domain, and array initializers broadcast a scalar element.
        let own_variants: HashSet<Name> = match &dom {
            Domain::Enum { variants } => variants.iter().cloned().collect(),
            Domain::Array { elem, .. } => match &**elem {
                Domain::Enum { variants } => variants.iter().cloned().collect(),
                _ => HashSet::new(),
            },
            _ => HashSet::new(),
        };
        let folded = fold_const(&raw, &own_variants)
            .ok_or_else(|| ModelError::BadInit { name: name.to_string() })?;
        let init = match (&dom, folded) {
            (Domain::Array { len, elem }, scalar) if elem.contains(&scalar) => {
                Value::Tuple(vec![scalar; *len as usize])
            }
            (d, scalar) if d.contains(&scalar) => scalar,
            _ => return Err(ModelError::BadInit { name: name.to_string() }),
        };
        Ok(VarDecl { name, dom, init })
    }

    fn lvalue(&mut self) -> Result<LValue, ModelError> {
        let name = match self.bump() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => Arc::from(s.as_str()),
            Some(t) => return Err(self.err(format!("expected a variable, found {t}"))),
            None => return Err(self.err("expected a variable, found end of input")),
        };
        if self.try_sym("[") {
            let idx = self.expr()?;
            self.expect_sym("]")?;
            Ok(LValue::Index(name, idx))
        } else {
            Ok(LValue::Var(name))
        }
    }

    // Expression precedence: or < and < not < comparison < additive < unary.
    fn expr(&mut self) -> Result<Expr, ModelError> {
        let mut e = self.and_expr()?;
        while self.try_kw("or") {
            let rhs = self.and_expr()?;
            e = Expr::Binary(BinOp::Or, Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> Result<Expr, ModelError> {
        let mut e = self.not_expr()?;
        while self.try_kw("and") {
            let rhs = self.not_expr()?;
            e = Expr::Binary(BinOp::And, Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> Result<Expr, ModelError> {
        if self.try_kw("not") {
            let e = self.not_expr()?;
            Ok(Expr::Unary(UnOp::Not, Box::new(e)))
        } else {
            self.cmp_expr()
        }
    }

    fn cmp_expr(&mut self) -> Result<Expr, ModelError> {
        let lhs = self.add_expr()?;
        let op = if self.try_sym("=") {
            BinOp::Eq
        } else if self.try_sym("!=") {
            BinOp::Ne
        } else if self.try_sym("<=") {
            BinOp::Le
        } else if self.try_sym(">=") {
            BinOp::Ge
        } else if self.try_sym("<") {
            BinOp::Lt
        } else if self.try_sym(">") {
            BinOp::Gt
        } else {
            return Ok(lhs);
        };
        let rhs = self.add_expr()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn add_expr(&mut self) -> Result<Expr, ModelError> {
        let mut e = self.unary_expr()?;
        loop {
            let op = if self.try_sym("+") {
                BinOp::Add
            } else if self.try_sym("-") {
                BinOp::Sub
            } else {
                return Ok(e);
            };
            let rhs = self.unary_expr()?;
            e = Expr::Binary(op, Box::new(e), Box::new(rhs));
        }
    }

    fn unary_expr(&mut self) -> Result<Expr, ModelError> {
        if self.try_sym("-") {
            let e = self.unary_expr()?;
            Ok(Expr::Unary(UnOp::Neg, Box::new(e)))
        } else {
            self.primary_expr()
        }
    }

    fn primary_expr(&mut self) -> Result<Expr, ModelError> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Expr::Const(Value::Int(v)))
            }
            Some(Tok::Ident(s)) if s == "true" => {
                self.pos += 1;
                Ok(Expr::Const(Value::Bool(true)))
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.pos += 1;
                Ok(Expr::Const(Value::Bool(false)))
            }
            Some(Tok::Ident(s)) if KEYWORDS.contains(&s.as_str()) => {
                Err(self.err(format!("keyword `{s}` cannot appear in an expression")))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                let name: Name = Arc::from(s.as_str());
                if self.try_sym("[") {
                    let idx = self.expr()?;
                    self.expect_sym("]")?;
                    Ok(Expr::Index(name, Box::new(idx)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Some(t) => Err(self.err(format!("expected an expression, found {t}"))),
            None => Err(self.err("expected an expression, found end of input")),
        }
    }

    /// One statement inside an atomic block or a spec case body.
    /// Returns either update pairs or a cas.
    fn stmt(&mut self, allow_cas: bool) -> Result<ParsedStmt, ModelError> {
        if self.try_sym("(") {
            let mut lhs = vec![self.lvalue()?];
            while self.try_sym(",") {
                lhs.push(self.lvalue()?);
            }
            self.expect_sym(")")?;
            self.expect_sym(":=")?;
            self.expect_sym("(")?;
            let mut rhs = vec![self.expr()?];
            while self.try_sym(",") {
                rhs.push(self.expr()?);
            }
            self.expect_sym(")")?;
            self.expect_sym(";")?;
            if lhs.len() != rhs.len() {
                return Err(self.err(format!(
                    "simultaneous assignment arity mismatch: {} targets, {} values",
                    lhs.len(),
                    rhs.len()
                )));
            }
            return Ok(ParsedStmt::Updates(lhs.into_iter().zip(rhs).collect()));
        }
        let lv = self.lvalue()?;
        self.expect_sym(":=")?;
        if self.at_kw("cas") {
            if !allow_cas {
                return Err(self.err("cas is not allowed in spec cases"));
            }
            self.pos += 1;
            self.expect_sym("(")?;
            let target = self.lvalue()?;
            self.expect_sym(",")?;
            let expected = self.expr()?;
            self.expect_sym(",")?;
            let new = self.expr()?;
            self.expect_sym(")")?;
            self.expect_sym(";")?;
            let result = match lv {
                LValue::Var(n) => n,
                LValue::Index(n, _) => {
                    return Err(self.err(format!(
                        "cas result must be a plain local variable, not an element of `{n}`"
                    )))
                }
            };
            return Ok(ParsedStmt::Cas(CasOp { result, target, expected, new }));
        }
        let rhs = self.expr()?;
        self.expect_sym(";")?;
        Ok(ParsedStmt::Updates(vec![(lv, rhs)]))
    }

    fn edge(&mut self, method: &str) -> Result<Stmt, ModelError> {
        let (mut guard, mut updates, mut cas) = (None, Vec::new(), None);
        if self.try_kw("atomic") {
            self.expect_sym("{")?;
            if self.try_kw("when") {
                guard = Some(self.expr()?);
                self.expect_sym(";")?;
            }
            while !self.at_sym("}") {
                match self.stmt(true)? {
                    ParsedStmt::Updates(mut u) => updates.append(&mut u),
                    ParsedStmt::Cas(c) => {
                        if cas.is_some() {
                            return Err(
                                self.err("at most one cas per atomic step".to_string())
                            );
                        }
                        cas = Some(c);
                    }
                }
            }
            self.expect_sym("}")?;
        }
        let next = if self.try_kw("goto") {
            let label = self.decl_name("location")?;
            self.expect_sym(";")?;
            Next::Goto(label)
        } else if self.try_kw("return") {
            let value = if self.at_sym(";") { None } else { Some(self.expr()?) };
            self.expect_sym(";")?;
            Next::Return(value)
        } else {
            return Err(self.err(format!(
                "expected `goto` or `return` after atomic block in method {method}"
            )));
        };
        Ok(Stmt { guard, updates, cas, next })
    }

    fn method(&mut self) -> Result<Method, ModelError> {
        self.expect_kw("method")?;
        let name = self.decl_name("method")?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.at_sym(")") {
            loop {
                let p = self.decl_name("parameter")?;
                self.expect_sym(":")?;
                let dom = self.domain(&p)?;
                params.push((p, dom));
                if !self.try_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        let returns = if self.try_kw("returns") {
            Some(self.domain(&format!("return value of {name}"))?)
        } else {
            None
        };
        self.expect_sym("{")?;
        let mut locals = Vec::new();
        while self.at_kw("local") {
            locals.push(self.var_decl("local")?);
        }
        let mut locations: Vec<Location> = Vec::new();
        let mut index: HashMap<Name, usize> = HashMap::new();
        while !self.at_sym("}") {
            let label = self.decl_name("location")?;
            self.expect_sym(":")?;
            let edge = self.edge(&name)?;
            match index.get(&label) {
                Some(&i) => locations[i].edges.push(edge),
                None => {
                    index.insert(label.clone(), locations.len());
                    locations.push(Location { label, edges: vec![edge] });
                }
            }
        }
        self.expect_sym("}")?;
        Ok(Method { name, params, returns, locals, locations })
    }

    fn spec(&mut self) -> Result<SequentialSpec, ModelError> {
        self.expect_kw("spec")?;
        self.expect_sym("{")?;
        let mut state = Vec::new();
        while self.at_kw("state") {
            state.push(self.var_decl("state")?);
        }
        let mut cases = Vec::new();
        while self.at_kw("on") {
            self.pos += 1;
            let method = self.decl_name("method")?;
            self.expect_sym("(")?;
            let mut params = Vec::new();
            if !self.at_sym(")") {
                loop {
                    params.push(self.decl_name("parameter")?);
                    if !self.try_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
            let guard = if self.try_kw("when") { Some(self.expr()?) } else { None };
            let result = if self.try_sym("->") { Some(self.expr()?) } else { None };
            self.expect_sym("{")?;
            let mut updates = Vec::new();
            while !self.at_sym("}") {
                match self.stmt(false)? {
                    ParsedStmt::Updates(mut u) => updates.append(&mut u),
                    ParsedStmt::Cas(_) => unreachable!("cas rejected in spec cases"),
                }
            }
            self.expect_sym("}")?;
            cases.push(SpecCase { method, params, guard, result, updates });
        }
        self.expect_sym("}")?;
        Ok(SequentialSpec { state, cases })
    }

    fn object(&mut self) -> Result<ObjectModel, ModelError> {
        self.expect_kw("object")?;
        let name = self.decl_name("object")?;
        self.expect_sym("{")?;
        let mut model =
            ObjectModel { name, shared: Vec::new(), methods: Vec::new(), seqspec: None };
        while !self.at_sym("}") {
            if self.at_kw("shared") {
                model.shared.push(self.var_decl("shared")?);
            } else if self.at_kw("method") {
                model.methods.push(self.method()?);
            } else if self.at_kw("spec") {
                if model.seqspec.is_some() {
                    return Err(self.err("duplicate spec block"));
                }
                model.seqspec = Some(self.spec()?);
            } else {
                match self.peek() {
                    Some(t) => {
                        return Err(self.err(format!(
                            "expected `shared`, `method`, or `spec`, found {t}"
                        )))
                    }
                    None => return Err(self.err("unclosed object block")),
                }
            }
        }
        self.expect_sym("}")?;
        if self.pos != self.toks.len() {
            return Err(self.err("trailing input after object definition"));
        }
        Ok(model)
    }
}

enum ParsedStmt {
    Updates(Vec<(LValue, Expr)>),
    Cas(CasOp),
}

// ---------------------------------------------------------------------------
// Resolution and checking
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Debug)]
enum Ty {
    Int,
    Bool,
    Sym,
}

fn ty_of(d: &Domain) -> Option<Ty> {
    match d {
        Domain::Int { .. } => Some(Ty::Int),
        Domain::Bool => Some(Ty::Bool),
        Domain::Enum { .. } => Some(Ty::Sym),
        Domain::Array { .. } => None,
    }
}

/// Parse and fully check a model. The returned IR is structurally
/// deterministic: parsing the same text twice yields equal models.
pub fn parse_model(text: &str) -> Result<ObjectModel, ModelError> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(ModelError::Syntax { line: 1, col: 1, msg: "empty input".to_string() });
    }
    let mut parser = Parser { toks, pos: 0 };
    let mut model = parser.object()?;
    finish(&mut model)?;
    Ok(model)
}

/// Post-parse pass: resolve enum variant literals, enforce declaration
/// rules, and type-check every expression.
fn finish(model: &mut ObjectModel) -> Result<(), ModelError> {
    // All enum variant names declared anywhere act as literals.
    let mut variants: HashSet<Name> = HashSet::new();
    {
        let mut add = |d: &Domain| {
            let scan = match d {
                Domain::Array { elem, .. } => elem,
                other => other,
            };
            if let Domain::Enum { variants: vs } = scan {
                variants.extend(vs.iter().cloned());
            }
        };
        for v in &model.shared {
            add(&v.dom);
        }
        for m in &model.methods {
            for (_, d) in &m.params {
                add(d);
            }
            if let Some(d) = &m.returns {
                add(d);
            }
            for l in &m.locals {
                add(&l.dom);
            }
        }
        if let Some(spec) = &model.seqspec {
            for v in &spec.state {
                add(&v.dom);
            }
        }
    }

    // Method name uniqueness.
    let mut seen = HashSet::new();
    for m in &model.methods {
        if !seen.insert(m.name.clone()) {
            return Err(ModelError::Duplicate {
                name: m.name.to_string(),
                context: "object".to_string(),
            });
        }
    }

    let shared: Vec<VarDecl> = model.shared.clone();
    let shared_scope = scope_of(&shared);

    for m in &mut model.methods {
        check_method(m, &shared_scope, &variants)?;
    }
    let methods = model.methods.clone();
    if let Some(spec) = &mut model.seqspec {
        check_spec(spec, &methods, &variants)?;
    }
    Ok(())
}

fn scope_of(decls: &[VarDecl]) -> HashMap<Name, Domain> {
    decls.iter().map(|v| (v.name.clone(), v.dom.clone())).collect()
}

fn fold_const(e: &Expr, variants: &HashSet<Name>) -> Option<Value> {
    match e {
        Expr::Const(v) => Some(v.clone()),
        Expr::Var(n) if variants.contains(n) => Some(Value::Sym(n.clone())),
        Expr::Unary(UnOp::Neg, inner) => match fold_const(inner, variants)? {
            Value::Int(i) => Some(Value::Int(-i)),
            _ => None,
        },
        _ => None,
    }
}

struct ExprCx<'a> {
    scopes: Vec<&'a HashMap<Name, Domain>>,
    variants: &'a HashSet<Name>,
    context: String,
}

impl ExprCx<'_> {
    fn lookup(&self, name: &str) -> Option<&Domain> {
        self.scopes.iter().find_map(|s| s.get(name))
    }

    /// Resolve variant literals in place and return the expression's type.
    fn check(&self, e: &mut Expr) -> Result<Ty, ModelError> {
        match e {
            Expr::Const(Value::Int(_)) => Ok(Ty::Int),
            Expr::Const(Value::Bool(_)) => Ok(Ty::Bool),
            Expr::Const(Value::Sym(_)) => Ok(Ty::Sym),
            Expr::Const(_) => Err(self.mismatch("non-scalar constant")),
            Expr::Var(n) => {
                if let Some(d) = self.lookup(n) {
                    ty_of(d).ok_or_else(|| {
                        self.mismatch(format!("array `{n}` used as a scalar"))
                    })
                } else if self.variants.contains(n) {
                    let sym = Value::Sym(n.clone());
                    *e = Expr::Const(sym);
                    Ok(Ty::Sym)
                } else {
                    Err(ModelError::Undeclared {
                        name: n.to_string(),
                        context: self.context.clone(),
                    })
                }
            }
            Expr::Index(n, idx) => {
                let dom = self.lookup(n).cloned().ok_or_else(|| ModelError::Undeclared {
                    name: n.to_string(),
                    context: self.context.clone(),
                })?;
                let Domain::Array { elem, .. } = dom else {
                    return Err(self.mismatch(format!("`{n}` indexed but is not an array")));
                };
                self.expect(idx, Ty::Int, "array index")?;
                Ok(ty_of(&elem).expect("array elements are scalar"))
            }
            Expr::Unary(UnOp::Not, inner) => {
                self.expect(inner, Ty::Bool, "operand of not")?;
                Ok(Ty::Bool)
            }
            Expr::Unary(UnOp::Neg, inner) => {
                self.expect(inner, Ty::Int, "operand of unary -")?;
                Ok(Ty::Int)
            }
            Expr::Binary(op, a, b) => {
                use BinOp::*;
                match op {
                    Add | Sub => {
                        self.expect(a, Ty::Int, "arithmetic operand")?;
                        self.expect(b, Ty::Int, "arithmetic operand")?;
                        Ok(Ty::Int)
                    }
                    Lt | Le | Gt | Ge => {
                        self.expect(a, Ty::Int, "comparison operand")?;
                        self.expect(b, Ty::Int, "comparison operand")?;
                        Ok(Ty::Bool)
                    }
                    Eq | Ne => {
                        let ta = self.check(a)?;
                        let tb = self.check(b)?;
                        if ta != tb {
                            return Err(self.mismatch(format!(
                                "cannot compare {ta:?} with {tb:?}"
                            )));
                        }
                        Ok(Ty::Bool)
                    }
                    And | Or => {
                        self.expect(a, Ty::Bool, "logical operand")?;
                        self.expect(b, Ty::Bool, "logical operand")?;
                        Ok(Ty::Bool)
                    }
                }
            }
        }
    }

    fn expect(&self, e: &mut Expr, want: Ty, what: &str) -> Result<(), ModelError> {
        let got = self.check(e)?;
        if got == want {
            Ok(())
        } else {
            Err(self.mismatch(format!("{what} must be {want:?}, got {got:?}")))
        }
    }

    fn mismatch(&self, msg: impl Into<String>) -> ModelError {
        ModelError::DomainMismatch { context: self.context.clone(), msg: msg.into() }
    }
}

fn check_method(
    m: &mut Method,
    shared: &HashMap<Name, Domain>,
    variants: &HashSet<Name>,
) -> Result<(), ModelError> {
    let mctx = format!("method {}", m.name);
    // Unique names across params, locals, shared.
    let mut names: HashSet<Name> = shared.keys().cloned().collect();
    for (p, d) in &m.params {
        if ty_of(d).is_none() {
            return Err(ModelError::DomainMismatch {
                context: mctx.clone(),
                msg: format!("parameter `{p}` must have a scalar domain"),
            });
        }
        if !names.insert(p.clone()) {
            return Err(ModelError::Duplicate { name: p.to_string(), context: mctx.clone() });
        }
    }
    for l in &m.locals {
        if !names.insert(l.name.clone()) {
            return Err(ModelError::Duplicate {
                name: l.name.to_string(),
                context: mctx.clone(),
            });
        }
    }
    if let Some(d) = &m.returns {
        if ty_of(d).is_none() {
            return Err(ModelError::DomainMismatch {
                context: mctx.clone(),
                msg: "return domain must be scalar".to_string(),
            });
        }
    }
    if m.locations.is_empty() {
        return Err(ModelError::DomainMismatch {
            context: mctx.clone(),
            msg: "method body has no locations".to_string(),
        });
    }

    let params_scope: HashMap<Name, Domain> = m.params.iter().cloned().collect();
    let locals_scope = scope_of(&m.locals);
    let writable: HashSet<Name> = shared
        .keys()
        .chain(locals_scope.keys())
        .cloned()
        .collect();

    let labels: HashSet<Name> = m.locations.iter().map(|l| l.label.clone()).collect();
    for loc in &mut m.locations {
        for (ei, edge) in loc.edges.iter_mut().enumerate() {
            let cx = ExprCx {
                scopes: vec![&locals_scope, &params_scope, shared],
                variants,
                context: format!("{mctx}, location {} (edge {})", loc.label, ei + 1),
            };
            if let Some(g) = &mut edge.guard {
                cx.expect(g, Ty::Bool, "guard")?;
            }
            if matches!(edge.next, Next::Return(_))
                && (!edge.updates.is_empty() || edge.cas.is_some())
            {
                return Err(ModelError::ReturnWithUpdates {
                    label: loc.label.to_string(),
                    method: m.name.to_string(),
                });
            }
            for (lv, rhs) in &mut edge.updates {
                check_update(lv, rhs, &cx, &writable)?;
            }
            if let Some(cas) = &mut edge.cas {
                let Some(rd) = locals_scope.get(&cas.result) else {
                    return Err(ModelError::DomainMismatch {
                        context: cx.context.clone(),
                        msg: format!("cas result `{}` must be a local", cas.result),
                    });
                };
                if !matches!(rd, Domain::Bool) {
                    return Err(ModelError::DomainMismatch {
                        context: cx.context.clone(),
                        msg: format!("cas result `{}` must be bool", cas.result),
                    });
                }
                let tty = lvalue_ty(&cas.target, &cx, &writable)?;
                cx.expect(&mut cas.expected, tty, "cas expected value")?;
                cx.expect(&mut cas.new, tty, "cas new value")?;
                if let LValue::Index(_, idx) = &mut cas.target {
                    cx.expect(idx, Ty::Int, "array index")?;
                }
            }
            match &mut edge.next {
                Next::Goto(label) => {
                    if !labels.contains(label) {
                        return Err(ModelError::NoSuchLabel {
                            label: label.to_string(),
                            method: m.name.to_string(),
                        });
                    }
                }
                Next::Return(value) => match (&m.returns, value) {
                    (Some(d), Some(v)) => {
                        cx.expect(v, ty_of(d).expect("scalar"), "return value")?
                    }
                    (None, None) => {}
                    (Some(_), None) => {
                        return Err(ModelError::DomainMismatch {
                            context: cx.context.clone(),
                            msg: "method declares a return domain but returns nothing"
                                .to_string(),
                        })
                    }
                    (None, Some(_)) => {
                        return Err(ModelError::DomainMismatch {
                            context: cx.context.clone(),
                            msg: "method has no return domain but returns a value"
                                .to_string(),
                        })
                    }
                },
            }
        }
    }

    // Every location reachable from entry.
    let mut reach: HashSet<Name> = HashSet::new();
    let mut stack = vec![m.locations[0].label.clone()];
    while let Some(l) = stack.pop() {
        if !reach.insert(l.clone()) {
            continue;
        }
        if let Some(loc) = m.locations.iter().find(|x| x.label == l) {
            for e in &loc.edges {
                if let Next::Goto(t) = &e.next {
                    stack.push(t.clone());
                }
            }
        }
    }
    for loc in &m.locations {
        if !reach.contains(&loc.label) {
            return Err(ModelError::UnreachableLocation {
                label: loc.label.to_string(),
                method: m.name.to_string(),
            });
        }
    }
    Ok(())
}

fn lvalue_ty(
    lv: &LValue,
    cx: &ExprCx<'_>,
    writable: &HashSet<Name>,
) -> Result<Ty, ModelError> {
    let name = lv.name();
    if !writable.contains(name) {
        return Err(if cx.lookup(name).is_some() || cx.variants.contains(name) {
            ModelError::ReadOnly { name: name.to_string(), context: cx.context.clone() }
        } else {
            ModelError::Undeclared { name: name.to_string(), context: cx.context.clone() }
        });
    }
    let dom = cx.lookup(name).expect("writable implies declared");
    match (lv, dom) {
        (LValue::Var(_), d) => ty_of(d).ok_or_else(|| {
            cx.mismatch(format!("cannot assign whole array `{name}`"))
        }),
        (LValue::Index(..), Domain::Array { elem, .. }) => {
            Ok(ty_of(elem).expect("array elements are scalar"))
        }
        (LValue::Index(..), _) => {
            Err(cx.mismatch(format!("`{name}` indexed but is not an array")))
        }
    }
}

fn check_update(
    lv: &mut LValue,
    rhs: &mut Expr,
    cx: &ExprCx<'_>,
    writable: &HashSet<Name>,
) -> Result<(), ModelError> {
    let want = lvalue_ty(lv, cx, writable)?;
    if let LValue::Index(_, idx) = lv {
        cx.expect(idx, Ty::Int, "array index")?;
    }
    cx.expect(rhs, want, "assigned value")?;
    Ok(())
}

fn check_spec(
    spec: &mut SequentialSpec,
    methods: &[Method],
    variants: &HashSet<Name>,
) -> Result<(), ModelError> {
    let state_scope = scope_of(&spec.state);
    for (ci, case) in spec.cases.iter_mut().enumerate() {
        let method = methods
            .iter()
            .find(|m| m.name == case.method)
            .ok_or_else(|| ModelError::NoSuchMethod { method: case.method.to_string() })?;
        if case.params.len() != method.params.len() {
            return Err(ModelError::SpecArity {
                method: case.method.to_string(),
                got: case.params.len(),
                want: method.params.len(),
            });
        }
        let cctx = format!("spec case {} for {}", ci + 1, case.method);
        let mut params_scope: HashMap<Name, Domain> = HashMap::new();
        for (p, (_, d)) in case.params.iter().zip(&method.params) {
            if state_scope.contains_key(p) || params_scope.insert(p.clone(), d.clone()).is_some()
            {
                return Err(ModelError::Duplicate { name: p.to_string(), context: cctx });
            }
        }
        let cx = ExprCx {
            scopes: vec![&params_scope, &state_scope],
            variants,
            context: cctx.clone(),
        };
        if let Some(g) = &mut case.guard {
            cx.expect(g, Ty::Bool, "guard")?;
        }
        match (&method.returns, &mut case.result) {
            (Some(d), Some(r)) => cx.expect(r, ty_of(d).expect("scalar"), "case result")?,
            (None, None) => {}
            (Some(_), None) => {
                return Err(ModelError::DomainMismatch {
                    context: cctx,
                    msg: format!("{} returns a value, case must provide `->`", case.method),
                })
            }
            (None, Some(_)) => {
                return Err(ModelError::DomainMismatch {
                    context: cctx,
                    msg: format!("{} returns nothing, case must not use `->`", case.method),
                })
            }
        }
        let writable: HashSet<Name> = state_scope.keys().cloned().collect();
        for (lv, rhs) in &mut case.updates {
            check_update(lv, rhs, &cx, &writable)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Read access to a variable environment: returns the whole value of a
/// variable (arrays come back as tuples).
pub type ReadFn<'a> = dyn Fn(&str) -> Result<Value, EvalError> + 'a;

/// Read closure over a map, for spec-side evaluation.
pub fn map_reader(map: &BTreeMap<Name, Value>) -> impl Fn(&str) -> Result<Value, EvalError> + '_ {
    |name: &str| {
        map.get(name).cloned().ok_or_else(|| EvalError::UnknownVar(name.to_string()))
    }
}

pub fn eval(e: &Expr, read: &ReadFn<'_>) -> Result<Value, EvalError> {
    match e {
        Expr::Const(v) => Ok(v.clone()),
        Expr::Var(n) => read(n),
        Expr::Index(n, idx) => {
            let arr = read(n)?;
            let i = as_int(eval(idx, read)?)?;
            index_tuple(n, &arr, i)
        }
        Expr::Unary(UnOp::Not, inner) => Ok(Value::Bool(!as_bool(eval(inner, read)?)?)),
        Expr::Unary(UnOp::Neg, inner) => {
            Ok(Value::Int(as_int(eval(inner, read)?)?.checked_neg().ok_or(EvalError::Overflow)?))
        }
        Expr::Binary(op, a, b) => {
            use BinOp::*;
            match op {
                And => {
                    // Short-circuit, mirroring guard evaluation order.
                    if !as_bool(eval(a, read)?)? {
                        return Ok(Value::Bool(false));
                    }
                    Ok(Value::Bool(as_bool(eval(b, read)?)?))
                }
                Or => {
                    if as_bool(eval(a, read)?)? {
                        return Ok(Value::Bool(true));
                    }
                    Ok(Value::Bool(as_bool(eval(b, read)?)?))
                }
                Add | Sub => {
                    let x = as_int(eval(a, read)?)?;
                    let y = as_int(eval(b, read)?)?;
                    let r = if *op == Add { x.checked_add(y) } else { x.checked_sub(y) };
                    Ok(Value::Int(r.ok_or(EvalError::Overflow)?))
                }
                Lt | Le | Gt | Ge => {
                    let x = as_int(eval(a, read)?)?;
                    let y = as_int(eval(b, read)?)?;
                    Ok(Value::Bool(match op {
                        Lt => x < y,
                        Le => x <= y,
                        Gt => x > y,
                        _ => x >= y,
                    }))
                }
                Eq | Ne => {
                    let x = eval(a, read)?;
                    let y = eval(b, read)?;
                    same_kind(&x, &y)?;
                    Ok(Value::Bool((x == y) == (*op == Eq)))
                }
            }
        }
    }
}

fn as_int(v: Value) -> Result<i64, EvalError> {
    match v {
        Value::Int(i) => Ok(i),
        other => Err(EvalError::Type(format!("expected an integer, got {other}"))),
    }
}

fn as_bool(v: Value) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(EvalError::Type(format!("expected a boolean, got {other}"))),
    }
}

fn same_kind(a: &Value, b: &Value) -> Result<(), EvalError> {
    let kind = |v: &Value| match v {
        Value::Int(_) => 0,
        Value::Bool(_) => 1,
        Value::Sym(_) => 2,
        _ => 3,
    };
    if kind(a) == kind(b) && kind(a) != 3 {
        Ok(())
    } else {
        Err(EvalError::Type(format!("cannot compare {a} with {b}")))
    }
}

fn index_tuple(name: &str, arr: &Value, i: i64) -> Result<Value, EvalError> {
    let Value::Tuple(vs) = arr else {
        return Err(EvalError::NotArray(name.to_string()));
    };
    if i < 1 || i as usize > vs.len() {
        return Err(EvalError::Index {
            name: name.to_string(),
            index: i,
            len: vs.len() as u32,
        });
    }
    Ok(vs[i as usize - 1].clone())
}

/// True when the edge's guard holds (absent guard = true).
pub fn guard_holds(stmt: &Stmt, read: &ReadFn<'_>) -> Result<bool, EvalError> {
    match &stmt.guard {
        None => Ok(true),
        Some(g) => as_bool(eval(g, read)?),
    }
}

/// One pending write: variable, optional 1-based index, new value.
pub type Write = (Name, Option<i64>, Value);

/// Compute the simultaneous write set of an edge in the pre-state: all
/// right-hand sides, indices, and the cas comparison read the same state.
/// Conflicting writes (same variable and element) are an error.
pub fn stmt_writes(stmt: &Stmt, read: &ReadFn<'_>) -> Result<Vec<Write>, EvalError> {
    let mut writes: Vec<Write> = Vec::new();
    for (lv, rhs) in &stmt.updates {
        let value = eval(rhs, read)?;
        writes.push(resolve_lvalue(lv, read, value)?);
    }
    if let Some(cas) = &stmt.cas {
        let current = match &cas.target {
            LValue::Var(n) => read(n)?,
            LValue::Index(n, idx) => {
                let arr = read(n)?;
                let i = as_int(eval(idx, read)?)?;
                index_tuple(n, &arr, i)?
            }
        };
        let expected = eval(&cas.expected, read)?;
        same_kind(&current, &expected)?;
        if current == expected {
            let new = eval(&cas.new, read)?;
            writes.push(resolve_lvalue(&cas.target, read, new)?);
            writes.push((cas.result.clone(), None, Value::Bool(true)));
        } else {
            writes.push((cas.result.clone(), None, Value::Bool(false)));
        }
    }
    for (i, (name, idx, _)) in writes.iter().enumerate() {
        for (name2, idx2, _) in &writes[i + 1..] {
            if name == name2 && (idx.is_none() || idx2.is_none() || idx == idx2) {
                return Err(EvalError::WriteConflict(name.to_string()));
            }
        }
    }
    Ok(writes)
}

fn resolve_lvalue(lv: &LValue, read: &ReadFn<'_>, value: Value) -> Result<Write, EvalError> {
    match lv {
        LValue::Var(n) => Ok((n.clone(), None, value)),
        LValue::Index(n, idx) => {
            let arr = read(n)?;
            let i = as_int(eval(idx, read)?)?;
            // Bounds-check now so the error names the index expression's site.
            index_tuple(n, &arr, i)?;
            Ok((n.clone(), Some(i), value))
        }
    }
}

/// Apply writes to a map-backed state, checking domains. `domains` maps each
/// writable variable to its declared domain.
pub fn apply_writes(
    state: &mut BTreeMap<Name, Value>,
    domains: &HashMap<Name, Domain>,
    writes: Vec<Write>,
) -> Result<(), EvalError> {
    for (name, idx, value) in writes {
        let dom = domains
            .get(&name)
            .ok_or_else(|| EvalError::UnknownVar(name.to_string()))?;
        match idx {
            None => {
                if !dom.contains(&value) {
                    return Err(EvalError::OutOfDomain {
                        name: name.to_string(),
                        value: value.to_string(),
                    });
                }
                state.insert(name, value);
            }
            Some(i) => {
                let Domain::Array { len, elem } = dom else {
                    return Err(EvalError::NotArray(name.to_string()));
                };
                if !elem.contains(&value) {
                    return Err(EvalError::OutOfDomain {
                        name: name.to_string(),
                        value: value.to_string(),
                    });
                }
                let entry = state
                    .get_mut(&name)
                    .ok_or_else(|| EvalError::UnknownVar(name.to_string()))?;
                let Value::Tuple(vs) = entry else {
                    return Err(EvalError::NotArray(name.to_string()));
                };
                if i < 1 || i as usize > vs.len() {
                    return Err(EvalError::Index {
                        name: name.to_string(),
                        index: i,
                        len: *len,
                    });
                }
                vs[i as usize - 1] = value;
            }
        }
    }
    Ok(())
}

/// Initial state map for a declaration list.
pub fn init_state(decls: &[VarDecl]) -> BTreeMap<Name, Value> {
    decls.iter().map(|v| (v.name.clone(), v.init.clone())).collect()
}

/// Apply the sequential specification to an abstract state: the first case
/// for `method` whose guard holds fires; result and updates read the
/// pre-state. Returns the result value (Void for void methods).
pub fn spec_step(
    spec: &SequentialSpec,
    state: &mut BTreeMap<Name, Value>,
    method: &str,
    args: &[Value],
) -> Result<Value, EvalError> {
    let domains: HashMap<Name, Domain> =
        spec.state.iter().map(|v| (v.name.clone(), v.dom.clone())).collect();
    for case in spec.cases.iter().filter(|c| &*c.method == method) {
        let read = |name: &str| -> Result<Value, EvalError> {
            if let Some(i) = case.params.iter().position(|p| &**p == name) {
                return Ok(args[i].clone());
            }
            state
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError::UnknownVar(name.to_string()))
        };
        let enabled = match &case.guard {
            None => true,
            Some(g) => as_bool(eval(g, &read)?)?,
        };
        if !enabled {
            continue;
        }
        let result = match &case.result {
            None => Value::Void,
            Some(r) => eval(r, &read)?,
        };
        let pseudo = Stmt {
            guard: None,
            updates: case.updates.clone(),
            cas: None,
            next: Next::Goto(Arc::from("_")),
        };
        let writes = stmt_writes(&pseudo, &read)?;
        apply_writes(state, &domains, writes)?;
        return Ok(result);
    }
    Err(EvalError::NoSpecCase { method: method.to_string() })
}

// ---------------------------------------------------------------------------
// Θ_sp construction
// ---------------------------------------------------------------------------

/// Build the atomic-block specification model Θ_sp: every method keeps its
/// signature but its body becomes call, one atomic τ applying the
/// sequential spec, and a visible return of the spec's result. Spec cases
/// become guarded alternatives of the single internal step; guards are made
/// disjoint so the step stays deterministic (first match wins). The result
/// is a full model carrying the same seqspec, so the construction is
/// idempotent up to exploration isomorphism.
pub fn make_spec(model: &ObjectModel) -> Result<ObjectModel, ModelError> {
    let spec = model.seqspec.as_ref().ok_or(ModelError::MissingSpec)?;
    let res_name: Name = Arc::from("__res");
    let b_label: Name = Arc::from("B");
    let r_label: Name = Arc::from("R");
    let mut methods = Vec::new();
    for m in &model.methods {
        let mut edges = Vec::new();
        let mut priors: Vec<Expr> = Vec::new();
        for case in spec.cases.iter().filter(|c| c.method == m.name) {
            let rename: HashMap<&str, Name> = case
                .params
                .iter()
                .zip(&m.params)
                .map(|(cp, (mp, _))| (&**cp, mp.clone()))
                .collect();
            let guard = case.guard.as_ref().map(|g| rename_expr(g, &rename));
            let mut updates: Vec<(LValue, Expr)> = Vec::new();
            if let Some(r) = &case.result {
                updates.push((LValue::Var(res_name.clone()), rename_expr(r, &rename)));
            }
            for (lv, rhs) in &case.updates {
                let lv = match lv {
                    LValue::Var(n) => LValue::Var(n.clone()),
                    LValue::Index(n, idx) => {
                        LValue::Index(n.clone(), rename_expr(idx, &rename))
                    }
                };
                updates.push((lv, rename_expr(rhs, &rename)));
            }
            // Effective guard: this case's guard and no earlier case's.
            let mut eff = guard.clone();
            for p in &priors {
                let neg = Expr::Unary(UnOp::Not, Box::new(p.clone()));
                eff = Some(match eff {
                    None => neg,
                    Some(g) => Expr::Binary(BinOp::And, Box::new(g), Box::new(neg)),
                });
            }
            priors.push(guard.unwrap_or(Expr::Const(Value::Bool(true))));
            edges.push(Stmt {
                guard: eff,
                updates,
                cas: None,
                next: Next::Goto(r_label.clone()),
            });
        }
        let ret = m.returns.as_ref().map(|_| Expr::Var(res_name.clone()));
        let locations = vec![
            Location { label: b_label.clone(), edges },
            Location {
                label: r_label.clone(),
                edges: vec![Stmt { guard: None, updates: vec![], cas: None, next: Next::Return(ret) }],
            },
        ];
        let locals = m
            .returns
            .as_ref()
            .map(|d| VarDecl {
                name: res_name.clone(),
                dom: d.clone(),
                init: d.default_value(),
            })
            .into_iter()
            .collect();
        methods.push(Method {
            name: m.name.clone(),
            params: m.params.clone(),
            returns: m.returns.clone(),
            locals,
            locations,
        });
    }
    Ok(ObjectModel {
        name: Arc::from(format!("{}_spec", model.name).as_str()),
        shared: spec.state.clone(),
        methods,
        seqspec: Some(spec.clone()),
    })
}

fn rename_expr(e: &Expr, map: &HashMap<&str, Name>) -> Expr {
    match e {
        Expr::Const(v) => Expr::Const(v.clone()),
        Expr::Var(n) => match map.get(&**n) {
            Some(r) => Expr::Var(r.clone()),
            None => Expr::Var(n.clone()),
        },
        Expr::Index(n, idx) => {
            let n = map.get(&**n).cloned().unwrap_or_else(|| n.clone());
            Expr::Index(n, Box::new(rename_expr(idx, map)))
        }
        Expr::Unary(op, inner) => Expr::Unary(*op, Box::new(rename_expr(inner, map))),
        Expr::Binary(op, a, b) => {
            Expr::Binary(*op, Box::new(rename_expr(a, map)), Box::new(rename_expr(b, map)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
        // Two-step counter with a bounded value.
        object mini {
            shared n : int[0..3] = 0;
            method inc() {
                I1: atomic { n := n + 1; } goto I2;
                I2: return;
            }
            method get() returns int[0..3] {
                G1: return n;
            }
            spec {
                state c : int[0..3] = 0;
                on inc() { c := c + 1; }
                on get() -> c { }
            }
        }
    "#;

    #[test]
    fn parse_mini_model() {
        let m = parse_model(MINI).unwrap();
        assert_eq!(&*m.name, "mini");
        assert_eq!(m.shared.len(), 1);
        assert_eq!(m.shared[0].init, Value::Int(0));
        assert_eq!(m.methods.len(), 2);
        assert_eq!(&*m.methods[0].name, "inc");
        assert_eq!(m.methods[1].returns, Some(Domain::Int { lo: 0, hi: 3 }));
        let spec = m.seqspec.as_ref().unwrap();
        assert_eq!(spec.cases.len(), 2);
    }

    #[test]
    fn parse_is_deterministic() {
        assert_eq!(parse_model(MINI).unwrap(), parse_model(MINI).unwrap());
    }

    #[test]
    fn undeclared_identifier_is_named() {
        let text = r#"
            object bad {
                method m() { L: atomic { x := 1; } goto L; }
            }
        "#;
        match parse_model(text) {
            Err(ModelError::Undeclared { name, .. }) => assert_eq!(name, "x"),
            other => panic!("expected undeclared error, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_int_rejected() {
        let text = "object bad { shared n : int = 0; }";
        match parse_model(text) {
            Err(ModelError::Unbounded { name }) => assert_eq!(name, "n"),
            other => panic!("expected unbounded error, got {other:?}"),
        }
    }

    #[test]
    fn domain_mismatch_rejected() {
        let text = r#"
            object bad {
                shared b : bool = false;
                method m() { L: atomic { b := 3; } goto L; }
            }
        "#;
        assert!(matches!(parse_model(text), Err(ModelError::DomainMismatch { .. })));
    }

    #[test]
    fn return_with_updates_rejected() {
        let text = r#"
            object bad {
                shared n : int[0..1] = 0;
                method m() {
                    L: atomic { n := 1; } return;
                }
            }
        "#;
        assert!(matches!(parse_model(text), Err(ModelError::ReturnWithUpdates { .. })));
    }

    #[test]
    fn unreachable_location_rejected() {
        let text = r#"
            object bad {
                method m() {
                    A: return;
                    B: goto B;
                }
            }
        "#;
        assert!(matches!(parse_model(text), Err(ModelError::UnreachableLocation { .. })));
    }

    #[test]
    fn enum_literals_resolve_and_arrays_broadcast() {
        let text = r#"
            object lits {
                shared slots : array[3] of enum{v1,v2,null} = null;
                method put() {
                    P1: atomic { slots[1] := v1; } goto P2;
                    P2: return;
                }
            }
        "#;
        let m = parse_model(text).unwrap();
        let null = Value::sym("null");
        assert_eq!(
            m.shared[0].init,
            Value::Tuple(vec![null.clone(), null.clone(), null])
        );
        // The rhs literal resolved to a constant.
        let edge = &m.methods[0].locations[0].edges[0];
        assert_eq!(edge.updates[0].1, Expr::Const(Value::sym("v1")));
    }

    #[test]
    fn simultaneous_updates_read_pre_state() {
        let text = r#"
            object swapper {
                shared a : int[0..5] = 1;
                shared b : int[0..5] = 2;
                method swap() {
                    S1: atomic { (a, b) := (b, a); } goto S2;
                    S2: return;
                }
            }
        "#;
        let m = parse_model(text).unwrap();
        let mut state = init_state(&m.shared);
        let domains: HashMap<Name, Domain> =
            m.shared.iter().map(|v| (v.name.clone(), v.dom.clone())).collect();
        let edge = &m.methods[0].locations[0].edges[0];
        let writes = stmt_writes(edge, &map_reader(&state)).unwrap();
        apply_writes(&mut state, &domains, writes).unwrap();
        assert_eq!(state[&Name::from("a")], Value::Int(2));
        assert_eq!(state[&Name::from("b")], Value::Int(1));
    }

    #[test]
    fn cas_succeeds_and_fails_atomically() {
        let text = r#"
            object caser {
                shared top : int[0..5] = 3;
                method bump() {
                    local ok : bool = false;
                    C1: atomic { ok := cas(top, 3, 4); } goto C2;
                    C2: return;
                }
            }
        "#;
        let m = parse_model(text).unwrap();
        let mut state = init_state(&m.shared);
        state.insert(Name::from("ok"), Value::Bool(false));
        let mut domains: HashMap<Name, Domain> =
            m.shared.iter().map(|v| (v.name.clone(), v.dom.clone())).collect();
        domains.insert(Name::from("ok"), Domain::Bool);
        let edge = &m.methods[0].locations[0].edges[0];

        let writes = stmt_writes(edge, &map_reader(&state)).unwrap();
        apply_writes(&mut state, &domains, writes).unwrap();
        assert_eq!(state[&Name::from("top")], Value::Int(4));
        assert_eq!(state[&Name::from("ok")], Value::Bool(true));

        // Second run: expected no longer matches, top unchanged.
        let writes = stmt_writes(edge, &map_reader(&state)).unwrap();
        apply_writes(&mut state, &domains, writes).unwrap();
        assert_eq!(state[&Name::from("top")], Value::Int(4));
        assert_eq!(state[&Name::from("ok")], Value::Bool(false));
    }

    #[test]
    fn write_conflict_detected() {
        let text = r#"
            object conflict {
                shared n : int[0..5] = 0;
                method m() {
                    L: atomic { (n, n) := (1, 2); } goto D;
                    D: return;
                }
            }
        "#;
        let m = parse_model(text).unwrap();
        let state = init_state(&m.shared);
        let edge = &m.methods[0].locations[0].edges[0];
        assert_eq!(
            stmt_writes(edge, &map_reader(&state)),
            Err(EvalError::WriteConflict("n".to_string()))
        );
    }

    #[test]
    fn spec_step_first_match_wins() {
        let m = parse_model(
            r#"
            object q {
                shared dummy : bool = false;
                method deq() returns enum{v1,EMPTY} {
                    D: return EMPTY;
                }
                spec {
                    state full : bool = true;
                    on deq() when full -> v1 { full := false; }
                    on deq() -> EMPTY { }
                }
            }
            "#,
        )
        .unwrap();
        let spec = m.seqspec.as_ref().unwrap();
        let mut state = init_state(&spec.state);
        assert_eq!(spec_step(spec, &mut state, "deq", &[]).unwrap(), Value::sym("v1"));
        assert_eq!(spec_step(spec, &mut state, "deq", &[]).unwrap(), Value::sym("EMPTY"));
        assert_eq!(
            spec_step(spec, &mut state, "enq", &[]),
            Err(EvalError::NoSpecCase { method: "enq".to_string() })
        );
    }

    #[test]
    fn make_spec_builds_three_step_methods() {
        let m = parse_model(MINI).unwrap();
        let sp = make_spec(&m).unwrap();
        assert_eq!(&*sp.name, "mini_spec");
        assert_eq!(sp.shared.len(), 1);
        for method in &sp.methods {
            assert_eq!(method.locations.len(), 2);
            assert_eq!(&*method.locations[0].label, "B");
            assert!(method.locations[1].is_return());
        }
        // get's B step loads __res from the spec result.
        let get = sp.method("get").unwrap();
        assert_eq!(get.locals.len(), 1);
        assert_eq!(&*get.locals[0].name, "__res");
        assert!(sp.seqspec.is_some());
        // Idempotent at IR level: methods of the double spec have the same shape.
        let sp2 = make_spec(&sp).unwrap();
        assert_eq!(sp2.methods.len(), sp.methods.len());
    }

    #[test]
    fn make_spec_guards_are_disjoint() {
        let m = parse_model(
            r#"
            object g {
                shared dummy : bool = false;
                method f() returns int[0..1] { L: return 0; }
                spec {
                    state flag : bool = false;
                    on f() when flag -> 1 { }
                    on f() -> 0 { }
                }
            }
            "#,
        )
        .unwrap();
        let sp = make_spec(&m).unwrap();
        let b = &sp.method("f").unwrap().locations[0];
        assert_eq!(b.edges.len(), 2);
        // Second edge's guard must include the negation of the first's.
        let state: BTreeMap<Name, Value> = [(Name::from("flag"), Value::Bool(true))].into();
        let read = map_reader(&state);
        assert!(guard_holds(&b.edges[0], &read).unwrap());
        assert!(!guard_holds(&b.edges[1], &read).unwrap());
    }

    #[test]
    fn missing_spec_reported() {
        let m = parse_model("object bare { method m() { L: return; } }").unwrap();
        assert_eq!(make_spec(&m).unwrap_err(), ModelError::MissingSpec);
    }

    #[test]
    fn empty_object_parses() {
        let m = parse_model("object empty { spec { } }").unwrap();
        assert!(m.methods.is_empty());
        assert!(m.seqspec.is_some());
        assert!(make_spec(&m).unwrap().methods.is_empty());
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse_model("object x {\n  shared n : bool = false\n}") {
            Err(ModelError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }
}
