//! Core term representation: identifiers, constants, terms, programs,
//! substitutions, pattern matching, and free variables.
//!
//! A single [`Term`] type doubles as value, pattern, sub-expression and main
//! expression; which subset a given node may use is enforced by
//! [`crate::validate`], not by the type. All types are immutable values.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;

/// Natural number reduced modulo 2^256. Arithmetic wraps, matching the
/// unsigned 256-bit integers of the compilation target.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nat256(BigUint);

impl Nat256 {
    pub fn new(raw: BigUint) -> Self {
        Nat256(raw % Self::modulus())
    }

    pub fn modulus() -> BigUint {
        BigUint::from(1u8) << 256
    }

    pub fn wrapping_add(&self, other: &Nat256) -> Nat256 {
        Nat256::new(&self.0 + &other.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }

    /// The value as a u64 when it fits (client addresses, tags).
    pub fn to_u64(&self) -> Option<u64> {
        u64::try_from(&self.0).ok()
    }
}

impl From<u64> for Nat256 {
    fn from(n: u64) -> Self {
        Nat256(BigUint::from(n))
    }
}

impl fmt::Display for Nat256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Nat256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The fixed set of compiler-generated mutable variables.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Synth {
    Who,
    State,
    Clfn,
    Cofn,
    Sender,
}

impl Synth {
    pub fn name(self) -> &'static str {
        match self {
            Synth::Who => "who",
            Synth::State => "state",
            Synth::Clfn => "clfn",
            Synth::Cofn => "cofn",
            Synth::Sender => "sender",
        }
    }

    pub fn from_name(s: &str) -> Option<Synth> {
        match s {
            "who" => Some(Synth::Who),
            "state" => Some(Synth::State),
            "clfn" => Some(Synth::Clfn),
            "cofn" => Some(Synth::Cofn),
            "sender" => Some(Synth::Sender),
            _ => None,
        }
    }
}

/// An identifier. The three namespaces are disjoint: a pure `x` and a
/// mutable `x` never compare equal.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Ident {
    /// Let/lambda-bound, substituted away during evaluation.
    Pure(String),
    /// Heap variable, read and written through the trace.
    Mutable(String),
    /// Compiler-introduced heap variable.
    Synthetic(Synth),
}

impl Ident {
    pub fn pure(s: impl Into<String>) -> Ident {
        Ident::Pure(s.into())
    }

    pub fn mutable(s: impl Into<String>) -> Ident {
        Ident::Mutable(s.into())
    }

    pub fn name(&self) -> &str {
        match self {
            Ident::Pure(s) | Ident::Mutable(s) => s,
            Ident::Synthetic(j) => j.name(),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self, Ident::Synthetic(_))
    }
}

/// Constants: numerals, booleans, unit, built-in operators, and the
/// intermediate/target-only markers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Const {
    Nat(Nat256),
    True,
    False,
    Unit,
    And,
    Add,
    Eq,
    Lt,
    Try,
    Bind,
    Trmp,
    Done,
    More,
}

impl Const {
    pub fn nat(n: u64) -> Const {
        Const::Nat(Nat256::from(n))
    }

    /// Operator constants that reduce when applied to an evaluated tuple.
    pub fn is_operator(&self) -> bool {
        matches!(self, Const::And | Const::Add | Const::Eq | Const::Lt)
    }
}

/// A term of the hybrid calculus.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Const(Const),
    /// `head :: tail`; tuples are right-nested pairs ending in unit.
    Pair(Box<Term>, Box<Term>),
    /// `pattern -> body`
    Lambda(Box<Term>, Box<Term>),
    /// A pure identifier occurrence.
    Var(Ident),
    /// `pattern = bound; body`
    Let(Box<Term>, Box<Term>, Box<Term>),
    App(Box<Term>, Box<Term>),
    /// `this.i`
    Get(Ident),
    /// `this.i := rhs`
    Set(Ident, Box<Term>),
    /// `↓s(pred, thunk)`: await an answer from a client accepted by `pred`.
    RemoteS(Box<Term>, Box<Term>),
    /// `↓t(client, thunk)`: run the thunk body at a fixed client.
    /// Arises only during evaluation and mid-pipeline.
    RemoteT(Nat256, Box<Term>),
    /// `if let pattern = scrutinee then .. else ..` — the core conditional.
    IfLet(Box<Term>, Box<Term>, Box<Term>, Box<Term>),
}

impl Term {
    pub fn nat(n: u64) -> Term {
        Term::Const(Const::nat(n))
    }

    pub fn var(s: impl Into<String>) -> Term {
        Term::Var(Ident::pure(s))
    }

    pub fn unit() -> Term {
        Term::Const(Const::Unit)
    }

    pub fn pair(head: Term, tail: Term) -> Term {
        Term::Pair(Box::new(head), Box::new(tail))
    }

    pub fn lambda(pattern: Term, body: Term) -> Term {
        Term::Lambda(Box::new(pattern), Box::new(body))
    }

    pub fn app(f: Term, arg: Term) -> Term {
        Term::App(Box::new(f), Box::new(arg))
    }

    pub fn let_in(pattern: Term, bound: Term, body: Term) -> Term {
        Term::Let(Box::new(pattern), Box::new(bound), Box::new(body))
    }

    pub fn if_let(pattern: Term, scrutinee: Term, then: Term, els: Term) -> Term {
        Term::IfLet(
            Box::new(pattern),
            Box::new(scrutinee),
            Box::new(then),
            Box::new(els),
        )
    }

    /// `()-> body`: unit-pattern lambda, the remote-expression thunk form.
    pub fn thunk(body: Term) -> Term {
        Term::lambda(Term::unit(), body)
    }

    /// Right-nested tuple `(t0, .., tn)` = `t0 :: .. :: tn :: ()`.
    pub fn tuple(items: Vec<Term>) -> Term {
        items
            .into_iter()
            .rev()
            .fold(Term::unit(), |acc, t| Term::pair(t, acc))
    }

    /// Infix operator application `m0 op m1` = `op (m0, m1)`.
    pub fn binop(op: Const, lhs: Term, rhs: Term) -> Term {
        Term::app(Term::Const(op), Term::tuple(vec![lhs, rhs]))
    }

    /// `m0; m1` = `() = m0; m1`
    pub fn seq(first: Term, second: Term) -> Term {
        Term::let_in(Term::unit(), first, second)
    }

    /// `assert(m0); m1` = `true = m0; m1`
    pub fn assert_then(cond: Term, rest: Term) -> Term {
        Term::let_in(Term::Const(Const::True), cond, rest)
    }

    /// `assert(false)` with an unreachable unit body.
    pub fn assert_false() -> Term {
        Term::assert_then(Term::Const(Const::False), Term::unit())
    }

    /// Values are constants, pairs of values, and lambdas.
    pub fn is_value(&self) -> bool {
        match self {
            Term::Const(_) | Term::Lambda(_, _) => true,
            Term::Pair(a, b) => a.is_value() && b.is_value(),
            _ => false,
        }
    }

    /// Patterns are constants, pairs of patterns, and pure identifiers.
    pub fn is_pattern(&self) -> bool {
        match self {
            Term::Const(_) => true,
            Term::Var(Ident::Pure(_)) => true,
            Term::Pair(a, b) => a.is_pattern() && b.is_pattern(),
            _ => false,
        }
    }

    /// The pure identifiers bound by this term read as a pattern, in
    /// left-to-right order.
    pub fn pattern_vars(&self) -> Vec<Ident> {
        let mut out = Vec::new();
        fn walk(t: &Term, out: &mut Vec<Ident>) {
            match t {
                Term::Var(id @ Ident::Pure(_)) => out.push(id.clone()),
                Term::Pair(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                _ => {}
            }
        }
        walk(self, &mut out);
        out
    }

    /// A linear pattern binds each identifier at most once.
    pub fn is_linear_pattern(&self) -> bool {
        if !self.is_pattern() {
            return false;
        }
        let vars = self.pattern_vars();
        let mut seen = std::collections::BTreeSet::new();
        vars.iter().all(|v| seen.insert(v.clone()))
    }

    /// Node count, used by generators and size sanity checks.
    pub fn size(&self) -> usize {
        match self {
            Term::Const(_) | Term::Var(_) | Term::Get(_) => 1,
            Term::Pair(a, b) | Term::Lambda(a, b) | Term::App(a, b) | Term::RemoteS(a, b) => {
                1 + a.size() + b.size()
            }
            Term::Set(_, r) | Term::RemoteT(_, r) => 1 + r.size(),
            Term::Let(p, b, c) => 1 + p.size() + b.size() + c.size(),
            Term::IfLet(p, s, t, e) => 1 + p.size() + s.size() + t.size() + e.size(),
        }
    }
}

/// Whether a definition lives on the contract or on every client.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Location {
    Contract,
    Client,
}

/// One `@co this.i = v;` or `@cl this.i = v;` definition.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Definition {
    pub location: Location,
    pub var: Ident,
    pub value: Term,
}

/// A program `d; b; m`: definitions, synthetic definitions, main expression.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Program {
    pub defs: Vec<Definition>,
    pub syndefs: Vec<Definition>,
    pub main: Term,
}

impl Program {
    pub fn from_main(main: Term) -> Program {
        Program {
            defs: Vec::new(),
            syndefs: Vec::new(),
            main,
        }
    }
}

/// A finite map from pure identifiers to values. Composes right-to-left:
/// `(σ σ') x = σ (σ' x)`.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Substitution {
    bindings: BTreeMap<String, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    pub fn singleton(id: &Ident, value: Term) -> Substitution {
        let mut s = Substitution::new();
        s.bind(id, value);
        s
    }

    pub fn bind(&mut self, id: &Ident, value: Term) {
        debug_assert!(matches!(id, Ident::Pure(_)));
        debug_assert!(value.is_value());
        self.bindings.insert(id.name().to_string(), value);
    }

    pub fn lookup(&self, name: &str) -> Option<&Term> {
        self.bindings.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Term> {
        self.bindings.remove(name)
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Term)> {
        self.bindings.iter()
    }

    /// `self ∘ other`: apply `other` first. `(σ σ') x = σ (σ' x)`.
    pub fn compose(&self, other: &Substitution) -> Substitution {
        let mut out = Substitution::new();
        for (name, v) in &other.bindings {
            out.bindings
                .insert(name.clone(), substitute(self, v.clone()));
        }
        for (name, v) in &self.bindings {
            out.bindings.entry(name.clone()).or_insert_with(|| v.clone());
        }
        out
    }
}

/// Pattern match failure. A normal outcome, not an error.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MatchFailure;

/// Match a pattern against a value: constants match themselves, identifiers
/// match anything and bind, pairs match componentwise. Anything else fails.
pub fn match_pattern(pattern: &Term, value: &Term) -> Result<Substitution, MatchFailure> {
    debug_assert!(value.is_value(), "match_pattern takes a value");
    match (pattern, value) {
        (Term::Const(c), Term::Const(c2)) if c == c2 => Ok(Substitution::new()),
        (Term::Var(id @ Ident::Pure(_)), v) => Ok(Substitution::singleton(id, v.clone())),
        (Term::Pair(p0, p1), Term::Pair(v0, v1)) => {
            let s0 = match_pattern(p0, v0)?;
            let s1 = match_pattern(p1, v1)?;
            Ok(s0.compose(&s1))
        }
        _ => Err(MatchFailure),
    }
}

/// Free pure identifiers of a term, first occurrence left-to-right,
/// duplicates removed. Get/Set targets are heap variables, not free
/// identifiers; lambda and let patterns bind. Defunctionalization relies on
/// this order when building closure records.
pub fn free_vars(term: &Term) -> Vec<Ident> {
    let mut out = Vec::new();
    let mut bound: Vec<String> = Vec::new();
    collect_free(term, &mut bound, &mut out);
    out
}

fn collect_free(term: &Term, bound: &mut Vec<String>, out: &mut Vec<Ident>) {
    match term {
        Term::Const(_) | Term::Get(_) => {}
        Term::Var(id @ Ident::Pure(_)) => {
            if !bound.iter().any(|b| b == id.name()) && !out.contains(id) {
                out.push(id.clone());
            }
        }
        Term::Var(_) => {}
        Term::Pair(a, b) | Term::App(a, b) | Term::RemoteS(a, b) => {
            collect_free(a, bound, out);
            collect_free(b, bound, out);
        }
        Term::Lambda(pattern, body) => {
            let n = bound.len();
            bound.extend(pattern.pattern_vars().iter().map(|v| v.name().to_string()));
            collect_free(body, bound, out);
            bound.truncate(n);
        }
        Term::Let(pattern, rhs, body) => {
            collect_free(rhs, bound, out);
            let n = bound.len();
            bound.extend(pattern.pattern_vars().iter().map(|v| v.name().to_string()));
            collect_free(body, bound, out);
            bound.truncate(n);
        }
        Term::Set(_, rhs) | Term::RemoteT(_, rhs) => collect_free(rhs, bound, out),
        Term::IfLet(pattern, scrutinee, then, els) => {
            collect_free(scrutinee, bound, out);
            let n = bound.len();
            bound.extend(pattern.pattern_vars().iter().map(|v| v.name().to_string()));
            collect_free(then, bound, out);
            bound.truncate(n);
            collect_free(els, bound, out);
        }
    }
}

/// Capture-avoiding substitution of values for free pure identifiers.
/// Binders are renamed only when a binder variable occurs free in a
/// substituted value; runtime values are closed so this never fires during
/// evaluation.
pub fn substitute(subst: &Substitution, term: Term) -> Term {
    if subst.is_empty() {
        return term;
    }
    match term {
        Term::Const(_) | Term::Get(_) => term,
        Term::Var(ref id) => match id {
            Ident::Pure(name) => subst.lookup(name).cloned().unwrap_or(term),
            _ => term,
        },
        Term::Pair(a, b) => Term::pair(substitute(subst, *a), substitute(subst, *b)),
        Term::App(a, b) => Term::app(substitute(subst, *a), substitute(subst, *b)),
        Term::RemoteS(p, t) => {
            Term::RemoteS(Box::new(substitute(subst, *p)), Box::new(substitute(subst, *t)))
        }
        Term::RemoteT(c, t) => Term::RemoteT(c, Box::new(substitute(subst, *t))),
        Term::Set(i, rhs) => Term::Set(i, Box::new(substitute(subst, *rhs))),
        Term::Lambda(pattern, body) => {
            let (pattern, body, inner) = enter_binder(subst, *pattern, *body);
            Term::lambda(pattern, substitute(&inner, body))
        }
        Term::Let(pattern, rhs, body) => {
            let rhs = substitute(subst, *rhs);
            let (pattern, body, inner) = enter_binder(subst, *pattern, *body);
            Term::let_in(pattern, rhs, substitute(&inner, body))
        }
        Term::IfLet(pattern, scrutinee, then, els) => {
            let scrutinee = substitute(subst, *scrutinee);
            let els = substitute(subst, *els);
            let (pattern, then, inner) = enter_binder(subst, *pattern, *then);
            Term::if_let(pattern, scrutinee, substitute(&inner, then), els)
        }
    }
}

/// Drop shadowed bindings and α-rename the binder if a remaining bound value
/// mentions one of the binder's variables.
fn enter_binder(subst: &Substitution, pattern: Term, body: Term) -> (Term, Term, Substitution) {
    let pvars = pattern.pattern_vars();
    let mut inner = subst.clone();
    for v in &pvars {
        inner.remove(v.name());
    }
    if inner.is_empty() {
        return (pattern, body, inner);
    }
    let captured: Vec<Ident> = pvars
        .iter()
        .filter(|pv| inner.iter().any(|(_, v)| free_vars(v).contains(pv)))
        .cloned()
        .collect();
    if captured.is_empty() {
        return (pattern, body, inner);
    }
    // Rename each captured binder variable to a name unused anywhere in sight.
    let mut avoid: std::collections::BTreeSet<String> = free_vars(&body)
        .iter()
        .chain(pvars.iter())
        .map(|i| i.name().to_string())
        .collect();
    for (_, v) in inner.iter() {
        avoid.extend(free_vars(v).iter().map(|i| i.name().to_string()));
    }
    let mut pattern = pattern;
    let mut body = body;
    for old in captured {
        let mut n = 0usize;
        let fresh = loop {
            let cand = format!("{}_{}", old.name(), n);
            if !avoid.contains(&cand) {
                break cand;
            }
            n += 1;
        };
        avoid.insert(fresh.clone());
        pattern = rename_in_pattern(pattern, old.name(), &fresh);
        body = rename_free(body, old.name(), &fresh);
    }
    (pattern, body, inner)
}

/// Rename free occurrences of a pure identifier, respecting shadowing.
fn rename_free(term: Term, old: &str, new: &str) -> Term {
    match term {
        Term::Var(Ident::Pure(ref s)) if s == old => Term::var(new),
        Term::Const(_) | Term::Var(_) | Term::Get(_) => term,
        Term::Pair(a, b) => Term::pair(rename_free(*a, old, new), rename_free(*b, old, new)),
        Term::App(a, b) => Term::app(rename_free(*a, old, new), rename_free(*b, old, new)),
        Term::Set(i, r) => Term::Set(i, Box::new(rename_free(*r, old, new))),
        Term::RemoteS(a, b) => {
            Term::RemoteS(Box::new(rename_free(*a, old, new)), Box::new(rename_free(*b, old, new)))
        }
        Term::RemoteT(c, b) => Term::RemoteT(c, Box::new(rename_free(*b, old, new))),
        Term::Lambda(p, b) => {
            if p.pattern_vars().iter().any(|v| v.name() == old) {
                Term::Lambda(p, b)
            } else {
                Term::lambda(*p, rename_free(*b, old, new))
            }
        }
        Term::Let(p, rhs, b) => {
            let rhs = rename_free(*rhs, old, new);
            if p.pattern_vars().iter().any(|v| v.name() == old) {
                Term::let_in(*p, rhs, *b)
            } else {
                Term::let_in(*p, rhs, rename_free(*b, old, new))
            }
        }
        Term::IfLet(p, s, t, e) => {
            let s = rename_free(*s, old, new);
            let e = rename_free(*e, old, new);
            if p.pattern_vars().iter().any(|v| v.name() == old) {
                Term::if_let(*p, s, *t, e)
            } else {
                Term::if_let(*p, s, rename_free(*t, old, new), e)
            }
        }
    }
}

fn rename_in_pattern(pattern: Term, old: &str, new: &str) -> Term {
    match pattern {
        Term::Var(Ident::Pure(ref s)) if s == old => Term::var(new),
        Term::Pair(a, b) => Term::pair(
            rename_in_pattern(*a, old, new),
            rename_in_pattern(*b, old, new),
        ),
        other => other,
    }
}

/// Normalize fully-applied `try` triples to the core IfLet node; identity on
/// everything else. `try(m, x -> e1, () -> e2)` is the surface reading of
/// `if let x = m then e1 else e2`.
pub fn desugar(term: Term) -> Term {
    match term {
        Term::App(f, arg) => {
            let f = desugar(*f);
            let arg = desugar(*arg);
            if let (Term::Const(Const::Try), Term::Pair(m, rest)) = (&f, &arg) {
                if let Term::Pair(then_fn, rest2) = &**rest {
                    if let Term::Pair(else_fn, unit) = &**rest2 {
                        if let (
                            Term::Lambda(pat, then_body),
                            Term::Lambda(else_pat, else_body),
                            Term::Const(Const::Unit),
                        ) = (&**then_fn, &**else_fn, &**unit)
                        {
                            if matches!(**else_pat, Term::Const(Const::Unit)) {
                                return Term::if_let(
                                    (**pat).clone(),
                                    (**m).clone(),
                                    (**then_body).clone(),
                                    (**else_body).clone(),
                                );
                            }
                        }
                    }
                }
            }
            Term::app(f, arg)
        }
        Term::Const(_) | Term::Var(_) | Term::Get(_) => term,
        Term::Pair(a, b) => Term::pair(desugar(*a), desugar(*b)),
        Term::Lambda(p, b) => Term::lambda(*p, desugar(*b)),
        Term::Let(p, r, b) => Term::let_in(*p, desugar(*r), desugar(*b)),
        Term::Set(i, r) => Term::Set(i, Box::new(desugar(*r))),
        Term::RemoteS(p, t) => Term::RemoteS(Box::new(desugar(*p)), Box::new(desugar(*t))),
        Term::RemoteT(c, t) => Term::RemoteT(c, Box::new(desugar(*t))),
        Term::IfLet(p, s, t, e) => Term::if_let(*p, desugar(*s), desugar(*t), desugar(*e)),
    }
}
