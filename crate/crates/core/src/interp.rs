//! Small-step operational semantics over configurations `(τ; ς; loc; m)`.
//!
//! A configuration carries two append-only event traces: the normal trace τ
//! (heap writes and client messages — the observable behavior) and the
//! synthetic trace ς (writes to compiler-introduced variables). Reduction is
//! deterministic except where clients act: the good mode runs the code a
//! client was handed, the bad mode lets an attacker answer with arbitrary
//! values from arbitrary eligible addresses.

use std::fmt;

use thiserror::Error;

use crate::ast::{match_pattern, substitute, Const, Ident, Location, Nat256, Program, Synth, Term};
use crate::pretty;

/// An observable event.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Event {
    /// `wr(loc, var, value)`: a heap write at a location.
    Write { loc: u64, var: Ident, value: Term },
    /// `msg(loc, value)`: a client-to-contract message.
    Msg { loc: u64, value: Term },
}

impl Event {
    pub fn is_synthetic(&self) -> bool {
        matches!(self, Event::Write { var, .. } if var.is_synthetic())
    }
}

/// One execution state: normal trace, synthetic trace, evaluating location
/// (0 is the contract), and the term under evaluation.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Configuration {
    pub normal_trace: Vec<Event>,
    pub synthetic_trace: Vec<Event>,
    pub location: u64,
    pub term: Term,
}

/// Finite bounds for exploring the nondeterministic semantics.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Bounds {
    /// Client addresses, ascending, all ≥ 1.
    pub clients: Vec<u64>,
    /// Values a malicious client may answer with.
    pub universe: Vec<Term>,
    /// Maximum reductions along one path.
    pub step_budget: u64,
    /// Maximum configurations visited per exploration.
    pub path_limit: u64,
}

impl Bounds {
    pub fn new(clients: Vec<u64>, universe: Vec<Term>) -> Bounds {
        Bounds {
            clients,
            universe,
            step_budget: 10_000,
            path_limit: 200_000,
        }
    }
}

/// Result of one step.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum StepOutcome {
    /// Successor configurations (singleton for deterministic rules).
    Next(Vec<Configuration>),
    /// The term is a value; no rule applies.
    Value(Configuration),
    /// No rule applies and the term is not a value. Models a revert.
    Stuck(String),
    /// A nested evaluation ran out of budget.
    BudgetExceeded,
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum InterpError {
    #[error("client set must be non-empty")]
    EmptyClients,
    #[error("client addresses must be ≥ 1 (0 is the contract)")]
    ContractAddressAsClient,
    #[error("duplicate definition for location {loc} variable {var}")]
    DuplicateDefinition { loc: u64, var: String },
}

/// Build the initial configuration: one write event per definition — at the
/// contract for `@co`, at every client for `@cl` — normal definitions into
/// τ, synthetic ones into ς; the main expression is left untouched.
pub fn init(clients: &[u64], program: &Program) -> Result<Configuration, InterpError> {
    if clients.is_empty() {
        return Err(InterpError::EmptyClients);
    }
    let mut clients: Vec<u64> = clients.to_vec();
    clients.sort_unstable();
    clients.dedup();
    if clients[0] == 0 {
        return Err(InterpError::ContractAddressAsClient);
    }

    let mut normal = Vec::new();
    let mut synthetic = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut push = |loc: u64,
                    var: &Ident,
                    value: &Term,
                    normal: &mut Vec<Event>,
                    synthetic: &mut Vec<Event>|
     -> Result<(), InterpError> {
        if !seen.insert((loc, var.clone())) {
            return Err(InterpError::DuplicateDefinition {
                loc,
                var: var.name().to_string(),
            });
        }
        let ev = Event::Write {
            loc,
            var: var.clone(),
            value: value.clone(),
        };
        if var.is_synthetic() {
            synthetic.push(ev);
        } else {
            normal.push(ev);
        }
        Ok(())
    };

    for d in program.defs.iter().filter(|d| d.location == Location::Contract) {
        push(0, &d.var, &d.value, &mut normal, &mut synthetic)?;
    }
    for d in program
        .syndefs
        .iter()
        .filter(|d| d.location == Location::Contract)
    {
        push(0, &d.var, &d.value, &mut normal, &mut synthetic)?;
    }
    for d in program.defs.iter().filter(|d| d.location == Location::Client) {
        for &c in &clients {
            push(c, &d.var, &d.value, &mut normal, &mut synthetic)?;
        }
    }
    for d in program
        .syndefs
        .iter()
        .filter(|d| d.location == Location::Client)
    {
        for &c in &clients {
            push(c, &d.var, &d.value, &mut normal, &mut synthetic)?;
        }
    }

    Ok(Configuration {
        normal_trace: normal,
        synthetic_trace: synthetic,
        location: 0,
        term: program.main.clone(),
    })
}

// ─── Redex decomposition ────────────────────────────────────────────────

/// One evaluation-context frame; the hole is the position being reduced.
#[derive(Clone, Debug)]
enum Frame {
    AppFn(Term),
    AppArg(Term),
    PairHead(Term),
    PairTail(Term),
    LetBound(Term, Term),
    SetRhs(Ident),
    IfLetScrut(Term, Term, Term),
    RemoteSPred(Term),
}

fn plug(frames: Vec<Frame>, mut t: Term) -> Term {
    for f in frames.into_iter().rev() {
        t = match f {
            Frame::AppFn(arg) => Term::app(t, arg),
            Frame::AppArg(func) => Term::app(func, t),
            Frame::PairHead(tail) => Term::pair(t, tail),
            Frame::PairTail(head) => Term::pair(head, t),
            Frame::LetBound(pat, body) => Term::let_in(pat, t, body),
            Frame::SetRhs(id) => Term::Set(id, Box::new(t)),
            Frame::IfLetScrut(pat, then, els) => Term::if_let(pat, t, then, els),
            Frame::RemoteSPred(thunk) => Term::RemoteS(Box::new(t), Box::new(thunk)),
        };
    }
    t
}

enum Decomposition {
    Value,
    Redex(Vec<Frame>, Term),
}

/// Leftmost-innermost decomposition into context and redex.
fn decompose(term: &Term) -> Decomposition {
    let mut frames = Vec::new();
    let mut cur = term.clone();
    loop {
        match cur {
            ref v if v.is_value() => {
                debug_assert!(frames.is_empty(), "descended into a value");
                return Decomposition::Value;
            }
            Term::Pair(a, b) => {
                if !a.is_value() {
                    frames.push(Frame::PairHead(*b));
                    cur = *a;
                } else {
                    frames.push(Frame::PairTail(*a));
                    cur = *b;
                }
            }
            Term::App(f, a) => {
                if !f.is_value() {
                    frames.push(Frame::AppFn(*a));
                    cur = *f;
                } else if !a.is_value() {
                    frames.push(Frame::AppArg(*f));
                    cur = *a;
                } else {
                    return Decomposition::Redex(frames, Term::App(f, a));
                }
            }
            Term::Let(p, rhs, body) => {
                if !rhs.is_value() {
                    frames.push(Frame::LetBound(*p, *body));
                    cur = *rhs;
                } else {
                    return Decomposition::Redex(frames, Term::Let(p, rhs, body));
                }
            }
            Term::Set(id, rhs) => {
                if !rhs.is_value() {
                    frames.push(Frame::SetRhs(id));
                    cur = *rhs;
                } else {
                    return Decomposition::Redex(frames, Term::Set(id, rhs));
                }
            }
            Term::IfLet(p, s, then, els) => {
                if !s.is_value() {
                    frames.push(Frame::IfLetScrut(*p, *then, *els));
                    cur = *s;
                } else {
                    return Decomposition::Redex(frames, Term::IfLet(p, s, then, els));
                }
            }
            Term::RemoteS(pred, thunk) => {
                if !pred.is_value() {
                    frames.push(Frame::RemoteSPred(*thunk));
                    cur = *pred;
                } else {
                    return Decomposition::Redex(frames, Term::RemoteS(pred, thunk));
                }
            }
            t @ (Term::Var(_) | Term::Get(_) | Term::RemoteT(_, _)) => {
                return Decomposition::Redex(frames, t);
            }
            Term::Const(_) | Term::Lambda(_, _) => unreachable!("values handled above"),
        }
    }
}

// ─── Shared reduction rules ─────────────────────────────────────────────

enum RedexResult {
    Reduced {
        term: Term,
        normal: Option<Event>,
        synthetic: Option<Event>,
    },
    /// `↓s(v, thunk)` — the client choice is up to the mode.
    SourceRemote { pred: Term, thunk: Term },
    /// `↓t(c, thunk)` — the answer is up to the mode.
    TargetRemote { client: Nat256, thunk: Term },
    /// `trmp (More, comp1, comp2)` — the invoking client is up to the mode.
    Trampoline { comp1: Term, comp2: Term },
    Stuck(String),
}

fn latest_write<'a>(trace: &'a [Event], loc: u64, var: &Ident) -> Option<&'a Term> {
    trace.iter().rev().find_map(|e| match e {
        Event::Write {
            loc: l,
            var: v,
            value,
        } if *l == loc && v == var => Some(value),
        _ => None,
    })
}

fn contains_lambda(t: &Term) -> bool {
    match t {
        Term::Lambda(_, _) => true,
        Term::Pair(a, b) => contains_lambda(a) || contains_lambda(b),
        _ => false,
    }
}

/// Split an evaluated operator operand `(a, b)` into its two components.
fn as_pair_tuple(v: &Term) -> Option<(&Term, &Term)> {
    if let Term::Pair(a, rest) = v {
        if let Term::Pair(b, unit) = &**rest {
            if matches!(**unit, Term::Const(Const::Unit)) {
                return Some((a, b));
            }
        }
    }
    None
}

fn delta(op: &Const, operand: &Term) -> Result<Term, String> {
    let (a, b) = as_pair_tuple(operand)
        .ok_or_else(|| format!("operator {op:?} applied to a non-tuple"))?;
    match op {
        Const::Add => match (a, b) {
            (Term::Const(Const::Nat(x)), Term::Const(Const::Nat(y))) => {
                Ok(Term::Const(Const::Nat(x.wrapping_add(y))))
            }
            _ => Err("+ on non-numeric values".to_string()),
        },
        Const::Lt => match (a, b) {
            (Term::Const(Const::Nat(x)), Term::Const(Const::Nat(y))) => Ok(Term::Const(if x < y {
                Const::True
            } else {
                Const::False
            })),
            (x, y) if contains_lambda(x) || contains_lambda(y) => {
                Err("< on function values".to_string())
            }
            _ => Err("< on non-numeric values".to_string()),
        },
        Const::Eq => {
            if contains_lambda(a) || contains_lambda(b) {
                Err("== on function values".to_string())
            } else {
                Ok(Term::Const(if a == b { Const::True } else { Const::False }))
            }
        }
        Const::And => match (a, b) {
            (Term::Const(x @ (Const::True | Const::False)), Term::Const(y @ (Const::True | Const::False))) => {
                Ok(Term::Const(
                    if *x == Const::True && *y == Const::True {
                        Const::True
                    } else {
                        Const::False
                    },
                ))
            }
            _ => Err("&& on non-boolean values".to_string()),
        },
        _ => unreachable!("delta is called on operators only"),
    }
}

fn reduce_redex(cfg: &Configuration, redex: Term) -> RedexResult {
    let loc = cfg.location;
    match redex {
        Term::Var(id) => RedexResult::Stuck(format!("unbound variable {}", id.name())),
        Term::Get(id) => {
            let trace = if id.is_synthetic() {
                &cfg.synthetic_trace
            } else {
                &cfg.normal_trace
            };
            match latest_write(trace, loc, &id) {
                Some(v) => RedexResult::Reduced {
                    term: v.clone(),
                    normal: None,
                    synthetic: None,
                },
                None => RedexResult::Stuck(format!("unbound variable this.{}", id.name())),
            }
        }
        Term::Set(id, rhs) => {
            let ev = Event::Write {
                loc,
                var: id.clone(),
                value: *rhs,
            };
            let (normal, synthetic) = if id.is_synthetic() {
                (None, Some(ev))
            } else {
                (Some(ev), None)
            };
            RedexResult::Reduced {
                term: Term::unit(),
                normal,
                synthetic,
            }
        }
        Term::Let(pattern, value, body) => match match_pattern(&pattern, &value) {
            Ok(subst) => RedexResult::Reduced {
                term: substitute(&subst, *body),
                normal: None,
                synthetic: None,
            },
            Err(_) => RedexResult::Stuck("let-match failed".to_string()),
        },
        Term::IfLet(pattern, scrutinee, then, els) => match match_pattern(&pattern, &scrutinee) {
            Ok(subst) => RedexResult::Reduced {
                term: substitute(&subst, *then),
                normal: None,
                synthetic: None,
            },
            Err(_) => RedexResult::Reduced {
                term: *els,
                normal: None,
                synthetic: None,
            },
        },
        Term::App(f, arg) => match *f {
            Term::Lambda(pattern, body) => match match_pattern(&pattern, &arg) {
                Ok(subst) => RedexResult::Reduced {
                    term: substitute(&subst, *body),
                    normal: None,
                    synthetic: None,
                },
                Err(_) => RedexResult::Stuck("apply-match failed".to_string()),
            },
            Term::Const(ref op) if op.is_operator() => match delta(op, &arg) {
                Ok(v) => RedexResult::Reduced {
                    term: v,
                    normal: None,
                    synthetic: None,
                },
                Err(reason) => RedexResult::Stuck(reason),
            },
            Term::Const(Const::Trmp) => reduce_trampoline(*arg),
            Term::Const(Const::Bind) => {
                RedexResult::Stuck("bind has no evaluation rule".to_string())
            }
            _ => RedexResult::Stuck("application of non-function value".to_string()),
        },
        Term::RemoteS(pred, thunk) => {
            if loc != 0 {
                RedexResult::Stuck("remote expression away from the contract".to_string())
            } else {
                RedexResult::SourceRemote {
                    pred: *pred,
                    thunk: *thunk,
                }
            }
        }
        Term::RemoteT(client, thunk) => {
            if loc != 0 {
                RedexResult::Stuck("remote expression away from the contract".to_string())
            } else {
                RedexResult::TargetRemote {
                    client,
                    thunk: *thunk,
                }
            }
        }
        other => RedexResult::Stuck(format!("no rule for redex {other:?}")),
    }
}

/// `trmp (Done, v)` collapses; `trmp (More, c1, c2)` is a trampoline choice.
fn reduce_trampoline(record: Term) -> RedexResult {
    match record {
        Term::Pair(head, rest) => match (*head, *rest) {
            (Term::Const(Const::Done), Term::Pair(v, unit))
                if matches!(*unit, Term::Const(Const::Unit)) =>
            {
                RedexResult::Reduced {
                    term: *v,
                    normal: None,
                    synthetic: None,
                }
            }
            (Term::Const(Const::More), Term::Pair(comp1, rest2)) => match *rest2 {
                Term::Pair(comp2, unit) if matches!(*unit, Term::Const(Const::Unit)) => {
                    if matches!(*comp1, Term::Pair(_, _)) && matches!(*comp2, Term::Pair(_, _)) {
                        RedexResult::Trampoline {
                            comp1: *comp1,
                            comp2: *comp2,
                        }
                    } else {
                        RedexResult::Stuck("trampoline on a malformed More record".to_string())
                    }
                }
                _ => RedexResult::Stuck("trampoline on a malformed More record".to_string()),
            },
            _ => RedexResult::Stuck("trampoline on a non-record value".to_string()),
        },
        _ => RedexResult::Stuck("trampoline on a non-record value".to_string()),
    }
}

// ─── Pure predicate evaluation ──────────────────────────────────────────

enum PureEval {
    Value(Term),
    Stuck,
    Impure,
    Budget,
}

/// Reduce a closed term using only trace-independent rules. Heap access,
/// remote expressions, and trampolines count as impure.
fn eval_pure(term: Term, budget: u64) -> PureEval {
    let mut cur = term;
    for _ in 0..budget {
        match decompose(&cur) {
            Decomposition::Value => return PureEval::Value(cur),
            Decomposition::Redex(frames, redex) => match redex {
                Term::Get(_) | Term::Set(_, _) => return PureEval::Impure,
                Term::RemoteS(_, _) | Term::RemoteT(_, _) => return PureEval::Impure,
                Term::App(ref f, _) if matches!(**f, Term::Const(Const::Trmp)) => {
                    return PureEval::Impure
                }
                redex => {
                    let dummy = Configuration {
                        normal_trace: Vec::new(),
                        synthetic_trace: Vec::new(),
                        location: 0,
                        term: Term::unit(),
                    };
                    match reduce_redex(&dummy, redex) {
                        RedexResult::Reduced { term, .. } => cur = plug(frames, term),
                        RedexResult::Stuck(_) => return PureEval::Stuck,
                        _ => return PureEval::Impure,
                    }
                }
            },
        }
    }
    PureEval::Budget
}

/// Which clients a stored predicate accepts, in ascending order.
/// `Err` when the predicate does not evaluate purely on some client.
fn eligible_clients(pred: &Term, bounds: &Bounds) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for &c in &bounds.clients {
        let applied = Term::app(pred.clone(), Term::Const(Const::Nat(Nat256::from(c))));
        match eval_pure(applied, bounds.step_budget) {
            PureEval::Value(Term::Const(Const::True)) => out.push(c),
            PureEval::Value(_) | PureEval::Stuck => {}
            PureEval::Impure => return Err("impure predicate".to_string()),
            PureEval::Budget => return Err("predicate exceeded the step budget".to_string()),
        }
    }
    Ok(out)
}

// ─── Mode drivers ───────────────────────────────────────────────────────

fn reduced_config(
    cfg: &Configuration,
    frames: Vec<Frame>,
    term: Term,
    normal: Option<Event>,
    synthetic: Option<Event>,
) -> Configuration {
    let mut next = cfg.clone();
    next.term = plug(frames, term);
    if let Some(e) = normal {
        next.normal_trace.push(e);
    }
    if let Some(e) = synthetic {
        next.synthetic_trace.push(e);
    }
    next
}

/// Apply one deterministic shared rule. Remote and trampoline redexes need
/// a mode driver and are reported as stuck here.
pub fn step_shared(cfg: &Configuration) -> StepOutcome {
    match decompose(&cfg.term) {
        Decomposition::Value => StepOutcome::Value(cfg.clone()),
        Decomposition::Redex(frames, redex) => match reduce_redex(cfg, redex) {
            RedexResult::Reduced {
                term,
                normal,
                synthetic,
            } => StepOutcome::Next(vec![reduced_config(cfg, frames, term, normal, synthetic)]),
            RedexResult::Stuck(reason) => StepOutcome::Stuck(reason),
            RedexResult::SourceRemote { .. }
            | RedexResult::TargetRemote { .. }
            | RedexResult::Trampoline { .. } => {
                StepOutcome::Stuck("client interaction requires a mode driver".to_string())
            }
        },
    }
}

/// Evaluate a client's body at its location with the current traces; the
/// traces it produces are discarded, only the value crosses back.
fn eval_client_body(cfg: &Configuration, client: u64, body: Term, budget: u64) -> StepOutcome {
    let mut sub = Configuration {
        normal_trace: cfg.normal_trace.clone(),
        synthetic_trace: cfg.synthetic_trace.clone(),
        location: client,
        term: body,
    };
    for _ in 0..budget {
        match decompose(&sub.term) {
            Decomposition::Value => return StepOutcome::Value(sub),
            Decomposition::Redex(frames, redex) => match redex {
                Term::RemoteS(_, _) | Term::RemoteT(_, _) => {
                    return StepOutcome::Stuck("nested remote inside a client body".to_string())
                }
                Term::App(ref f, _) if matches!(**f, Term::Const(Const::Trmp)) => {
                    return StepOutcome::Stuck("trampoline inside a client body".to_string())
                }
                redex => match reduce_redex(&sub, redex) {
                    RedexResult::Reduced {
                        term,
                        normal,
                        synthetic,
                    } => {
                        sub = reduced_config(&sub, frames, term, normal, synthetic);
                    }
                    RedexResult::Stuck(reason) => {
                        return StepOutcome::Stuck(format!("client body stuck: {reason}"))
                    }
                    _ => unreachable!("remote redexes handled above"),
                },
            },
        }
    }
    StepOutcome::BudgetExceeded
}

/// The message and sender bookkeeping both remote rules emit: `msg(c, v)`
/// into the normal trace, `wr(0, sender, c)` into the synthetic trace.
fn answer_config(cfg: &Configuration, frames: Vec<Frame>, client: u64, value: Term) -> Configuration {
    let mut next = cfg.clone();
    next.term = plug(frames, value.clone());
    next.normal_trace.push(Event::Msg { loc: client, value });
    next.synthetic_trace.push(Event::Write {
        loc: 0,
        var: Ident::Synthetic(Synth::Sender),
        value: Term::Const(Const::Nat(Nat256::from(client))),
    });
    next
}

/// The term Rtm hands back: ask `client` to interpret the clfn record, then
/// trampoline the cofn record with the answer spliced in. Every spliced
/// value is closed, so the fixed binder cannot capture.
fn trampoline_term(client: u64, comp1: &Term, comp2: &Term) -> Term {
    let ret = Ident::pure("ret");
    let (v2, e2) = match comp2 {
        Term::Pair(v2, e2) => (v2.clone(), e2.clone()),
        _ => unreachable!("record shape checked by reduce_trampoline"),
    };
    let ask = Term::RemoteT(
        Nat256::from(client),
        Box::new(Term::thunk(Term::app(
            Term::Get(Ident::Synthetic(Synth::Clfn)),
            comp1.clone(),
        ))),
    );
    let dispatch = Term::app(
        Term::Get(Ident::Synthetic(Synth::Cofn)),
        Term::Pair(v2, Box::new(Term::Pair(Box::new(Term::Var(ret.clone())), e2))),
    );
    Term::let_in(
        Term::Var(ret),
        ask,
        Term::app(Term::Const(Const::Trmp), dispatch),
    )
}

/// The client the honest trampoline picks: the minimal one accepted by the
/// stored `who` predicate, or the minimal client when none qualifies or no
/// predicate was stored.
fn good_trampoline_client(cfg: &Configuration, bounds: &Bounds) -> Result<u64, String> {
    match latest_write(&cfg.synthetic_trace, 0, &Ident::Synthetic(Synth::Who)) {
        Some(pred) => {
            let eligible = eligible_clients(&pred.clone(), bounds)?;
            Ok(eligible.first().copied().unwrap_or(bounds.clients[0]))
        }
        None => Ok(bounds.clients[0]),
    }
}

/// One honest-mode step. Remote requests go to clients accepted by the
/// predicate; clients run the body they are handed.
pub fn step_good(cfg: &Configuration, bounds: &Bounds) -> StepOutcome {
    match decompose(&cfg.term) {
        Decomposition::Value => StepOutcome::Value(cfg.clone()),
        Decomposition::Redex(frames, redex) => match reduce_redex(cfg, redex) {
            RedexResult::Reduced {
                term,
                normal,
                synthetic,
            } => StepOutcome::Next(vec![reduced_config(cfg, frames, term, normal, synthetic)]),
            RedexResult::Stuck(reason) => StepOutcome::Stuck(reason),
            RedexResult::SourceRemote { pred, thunk } => {
                let eligible = match eligible_clients(&pred, bounds) {
                    Ok(e) => e,
                    Err(reason) => return StepOutcome::Stuck(reason),
                };
                if eligible.is_empty() {
                    return StepOutcome::Stuck("no client satisfies the predicate".to_string());
                }
                let succs = eligible
                    .into_iter()
                    .map(|c| {
                        let mut next = cfg.clone();
                        next.term = plug(
                            frames.clone(),
                            Term::RemoteT(Nat256::from(c), Box::new(thunk.clone())),
                        );
                        next
                    })
                    .collect();
                StepOutcome::Next(succs)
            }
            RedexResult::TargetRemote { client, thunk } => {
                let client = match client.to_u64() {
                    Some(c) => c,
                    None => return StepOutcome::Stuck("client address out of range".to_string()),
                };
                let body = match thunk {
                    Term::Lambda(_, b) => *b,
                    _ => return StepOutcome::Stuck("remote body must be a thunk".to_string()),
                };
                match eval_client_body(cfg, client, body, bounds.step_budget) {
                    StepOutcome::Value(sub) => {
                        StepOutcome::Next(vec![answer_config(cfg, frames, client, sub.term)])
                    }
                    other => other,
                }
            }
            RedexResult::Trampoline { comp1, comp2 } => {
                let client = match good_trampoline_client(cfg, bounds) {
                    Ok(c) => c,
                    Err(reason) => return StepOutcome::Stuck(reason),
                };
                let mut next = cfg.clone();
                next.term = plug(frames, trampoline_term(client, &comp1, &comp2));
                StepOutcome::Next(vec![next])
            }
        },
    }
}

/// One attacked-mode step. Clients accepted by the source predicate may
/// answer with any value of the universe; the trampoline can be invoked by
/// any client. Client bodies are never run.
pub fn step_bad(cfg: &Configuration, bounds: &Bounds) -> StepOutcome {
    match decompose(&cfg.term) {
        Decomposition::Value => StepOutcome::Value(cfg.clone()),
        Decomposition::Redex(frames, redex) => match reduce_redex(cfg, redex) {
            RedexResult::Reduced {
                term,
                normal,
                synthetic,
            } => StepOutcome::Next(vec![reduced_config(cfg, frames, term, normal, synthetic)]),
            RedexResult::Stuck(reason) => StepOutcome::Stuck(reason),
            RedexResult::SourceRemote { pred, thunk } => {
                let eligible = match eligible_clients(&pred, bounds) {
                    Ok(e) => e,
                    Err(reason) => return StepOutcome::Stuck(reason),
                };
                if eligible.is_empty() {
                    return StepOutcome::Stuck("no client satisfies the predicate".to_string());
                }
                let succs = eligible
                    .into_iter()
                    .map(|c| {
                        let mut next = cfg.clone();
                        next.term = plug(
                            frames.clone(),
                            Term::RemoteT(Nat256::from(c), Box::new(thunk.clone())),
                        );
                        next
                    })
                    .collect();
                StepOutcome::Next(succs)
            }
            RedexResult::TargetRemote { client, .. } => {
                let client = match client.to_u64() {
                    Some(c) => c,
                    None => return StepOutcome::Stuck("client address out of range".to_string()),
                };
                let succs = bounds
                    .universe
                    .iter()
                    .map(|v| answer_config(cfg, frames.clone(), client, v.clone()))
                    .collect();
                StepOutcome::Next(succs)
            }
            RedexResult::Trampoline { comp1, comp2 } => {
                let succs = bounds
                    .clients
                    .iter()
                    .map(|&c| {
                        let mut next = cfg.clone();
                        next.term = plug(frames.clone(), trampoline_term(c, &comp1, &comp2));
                        next
                    })
                    .collect();
                StepOutcome::Next(succs)
            }
        },
    }
}

/// Result of a deterministic honest run.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RunOutcome {
    Value {
        trace: Vec<Event>,
        synthetic: Vec<Event>,
        value: Term,
    },
    Stuck {
        reason: String,
    },
    BudgetExceeded,
}

/// Iterate [`step_good`] with the minimal-client policy at every choice
/// point until a value, a stuck state, or budget exhaustion.
pub fn run_det(start: Configuration, bounds: &Bounds) -> RunOutcome {
    let mut cfg = start;
    for _ in 0..bounds.step_budget {
        match step_good(&cfg, bounds) {
            StepOutcome::Value(c) => {
                return RunOutcome::Value {
                    trace: c.normal_trace,
                    synthetic: c.synthetic_trace,
                    value: c.term,
                }
            }
            StepOutcome::Next(mut succs) => {
                debug_assert!(!succs.is_empty());
                cfg = succs.remove(0);
            }
            StepOutcome::Stuck(reason) => return RunOutcome::Stuck { reason },
            StepOutcome::BudgetExceeded => return RunOutcome::BudgetExceeded,
        }
    }
    RunOutcome::BudgetExceeded
}

// ─── JSON encoding ──────────────────────────────────────────────────────

/// Encode a value for the trace JSON interface: naturals as decimal
/// strings, booleans natively, `"unit"`, pairs as `["::", a, b]`, lambdas
/// as `{"fun": <pretty>}`, remaining constants by name.
pub fn value_to_json(t: &Term) -> serde_json::Value {
    use serde_json::{json, Value};
    match t {
        Term::Const(Const::Nat(n)) => Value::String(n.to_string()),
        Term::Const(Const::True) => Value::Bool(true),
        Term::Const(Const::False) => Value::Bool(false),
        Term::Const(Const::Unit) => Value::String("unit".to_string()),
        Term::Const(Const::And) => Value::String("&&".to_string()),
        Term::Const(Const::Add) => Value::String("+".to_string()),
        Term::Const(Const::Eq) => Value::String("==".to_string()),
        Term::Const(Const::Lt) => Value::String("<".to_string()),
        Term::Const(Const::Try) => Value::String("try".to_string()),
        Term::Const(Const::Bind) => Value::String(">>=".to_string()),
        Term::Const(Const::Trmp) => Value::String("trmp".to_string()),
        Term::Const(Const::Done) => Value::String("Done".to_string()),
        Term::Const(Const::More) => Value::String("More".to_string()),
        Term::Pair(a, b) => json!(["::", value_to_json(a), value_to_json(b)]),
        Term::Lambda(_, _) => json!({ "fun": pretty::term_to_string(t) }),
        other => json!({ "term": pretty::term_to_string(other) }),
    }
}

pub fn event_to_json(e: &Event) -> serde_json::Value {
    use serde_json::json;
    match e {
        Event::Write { loc, var, value } => json!({
            "kind": "wr",
            "loc": loc,
            "var": var.name(),
            "value": value_to_json(value),
        }),
        Event::Msg { loc, value } => json!({
            "kind": "msg",
            "loc": loc,
            "value": value_to_json(value),
        }),
    }
}

pub fn trace_to_json(events: &[Event]) -> serde_json::Value {
    serde_json::Value::Array(events.iter().map(event_to_json).collect())
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Write { loc, var, value } => {
                write!(f, "wr({loc},{},{})", var.name(), pretty::term_to_string(value))
            }
            Event::Msg { loc, value } => {
                write!(f, "msg({loc},{})", pretty::term_to_string(value))
            }
        }
    }
}
