//! The compiler pipeline: monadic normal form, guard insertion,
//! continuation-passing style, and defunctionalization into a trampolined
//! first-order dispatch.
//!
//! Every pass is a pure term-to-term transformation. `compile` is the full
//! composition used for source programs: `defun ∘ cps ∘ guard ∘ mnf`.
//! `compile_fused` is an independent single-walk formulation of the last
//! three stages kept as a cross-check; the two agree after
//! [`crate::canon::canonicalize`].

use thiserror::Error;

use crate::ast::{free_vars, Const, Definition, Ident, Location, Nat256, Program, Synth, Term};
use crate::validate::{validate_subset, Subset};

/// Deterministic supply of fresh pure identifiers and numeric tags.
///
/// Generated identifiers are `tmp0`, `tmp1`, ... — the parser reserves that
/// family, so they cannot collide with program identifiers. Tags start at 1;
/// 0 is the reserved "no phase" state value the guards reset to.
#[derive(Clone, Debug)]
pub struct FreshSupply {
    next_ident: u64,
    next_tag: u64,
}

impl FreshSupply {
    pub fn new() -> FreshSupply {
        FreshSupply::with_seed(0)
    }

    /// Offset both counters; outputs for different seeds differ only in
    /// fresh-name/tag choice and compare equal after canonicalization.
    pub fn with_seed(seed: u64) -> FreshSupply {
        FreshSupply {
            next_ident: seed,
            next_tag: seed + 1,
        }
    }

    pub fn fresh_ident(&mut self) -> Ident {
        let id = Ident::pure(format!("tmp{}", self.next_ident));
        self.next_ident += 1;
        id
    }

    pub fn fresh_tag(&mut self) -> Nat256 {
        let t = Nat256::from(self.next_tag);
        self.next_tag += 1;
        t
    }
}

impl Default for FreshSupply {
    fn default() -> Self {
        FreshSupply::new()
    }
}

/// Errors raised by pass preconditions.
#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum PassError {
    #[error("input is not in the source subset: {0}")]
    NotSource(String),
    #[error("input is not in MNF shape: {0}")]
    NotMnf(String),
    #[error("remote predicate was not reduced to the trivial thunk by guarding")]
    UnguardedRemote,
    #[error("bind applied to a non-thunk left operand")]
    MalformedBind,
}

/// The dispatcher parameter shared by the synthesized clfn/cofn definitions.
pub const DISPATCH_PARAM: &str = "_disp";

fn is_atom(t: &Term) -> bool {
    matches!(
        t,
        Term::Const(_) | Term::Var(_) | Term::Get(_) | Term::Lambda(_, _)
    )
}

/// Flatten nested lets: `x0 = (x1 = m1; m0); m2` rotates to
/// `x1 = m1; (x0 = m0; m2)`, recursively. Identity on everything else.
pub fn assoc(term: Term) -> Term {
    match term {
        Term::Let(x0, rhs, m2) => match *rhs {
            Term::Let(x1, m1, m0) => assoc(Term::Let(x1, m1, Box::new(assoc(Term::Let(x0, m0, m2))))),
            other => Term::Let(x0, Box::new(other), m2),
        },
        other => other,
    }
}

/// A-normalize a main expression: every non-atomic sub-expression in frame
/// position is bound to a fresh identifier, producing a flat let chain whose
/// binder right-hand sides are built from atoms. Lambda bodies and if-let
/// branches are atoms' insides and are not entered; remote predicates are
/// frame positions and are normalized.
pub fn mnf_expr(term: Term, fresh: &mut FreshSupply) -> Term {
    match term {
        t @ (Term::Const(_) | Term::Var(_) | Term::Get(_) | Term::Lambda(_, _)) => t,
        Term::Let(p, rhs, body) => assoc(Term::let_in(
            *p,
            mnf_expr(*rhs, fresh),
            mnf_expr(*body, fresh),
        )),
        Term::Pair(a, b) => bind_operands(vec![*a, *b], fresh, |mut ops| {
            let b = ops.pop().unwrap();
            let a = ops.pop().unwrap();
            Term::pair(a, b)
        }),
        Term::App(f, a) => bind_operands(vec![*f, *a], fresh, |mut ops| {
            let a = ops.pop().unwrap();
            let f = ops.pop().unwrap();
            Term::app(f, a)
        }),
        Term::Set(i, rhs) => bind_operands(vec![*rhs], fresh, move |mut ops| {
            Term::Set(i.clone(), Box::new(ops.pop().unwrap()))
        }),
        Term::RemoteS(pred, thunk) => {
            let thunk = *thunk;
            bind_operands(vec![*pred], fresh, move |mut ops| {
                Term::RemoteS(Box::new(ops.pop().unwrap()), Box::new(thunk.clone()))
            })
        }
        Term::RemoteT(c, thunk) => Term::RemoteT(c, thunk),
        Term::IfLet(p, scrutinee, then, els) => {
            bind_operands(vec![*scrutinee], fresh, move |mut ops| {
                Term::IfLet(
                    p.clone(),
                    Box::new(ops.pop().unwrap()),
                    then.clone(),
                    els.clone(),
                )
            })
        }
    }
}

/// Normalize each operand; non-atoms become fresh let bindings wrapped
/// around the rebuilt head, flattened with assoc.
fn bind_operands(
    operands: Vec<Term>,
    fresh: &mut FreshSupply,
    rebuild: impl Fn(Vec<Term>) -> Term,
) -> Term {
    let mut bindings: Vec<(Ident, Term)> = Vec::new();
    let mut atoms = Vec::new();
    for op in operands {
        if is_atom(&op) {
            atoms.push(op);
        } else {
            let id = fresh.fresh_ident();
            bindings.push((id.clone(), mnf_expr(op, fresh)));
            atoms.push(Term::Var(id));
        }
    }
    let mut out = rebuild(atoms);
    for (id, rhs) in bindings.into_iter().rev() {
        out = assoc(Term::let_in(Term::Var(id), rhs, out));
    }
    out
}

/// MNF shape predicate: a right-nested let chain whose binder right-hand
/// sides contain no lets and whose operands are atoms. Lambda bodies and
/// if-let branches are opaque.
pub fn is_mnf(term: &Term) -> bool {
    fn head_ok(t: &Term) -> bool {
        if is_atom(t) {
            return true;
        }
        match t {
            Term::Pair(a, b) | Term::App(a, b) => is_atom(a) && is_atom(b),
            Term::Set(_, rhs) => is_atom(rhs),
            Term::RemoteS(pred, _) => is_atom(pred),
            Term::RemoteT(_, _) => true,
            Term::IfLet(_, scrutinee, _, _) => is_atom(scrutinee),
            _ => false,
        }
    }
    match term {
        Term::Let(_, rhs, body) => head_ok(rhs) && !matches!(**rhs, Term::Let(..)) && is_mnf(body),
        other => head_ok(other),
    }
}

/// Program-level MNF: wrap the main expression as `trmp (Done, m)` and
/// normalize. Definitions pass through unchanged.
pub fn mnf_program(program: Program, fresh: &mut FreshSupply) -> Result<Program, PassError> {
    validate_subset(&program, Subset::Source)
        .map_err(|v| PassError::NotSource(v[0].to_string()))?;
    let wrapped = Term::tuple(vec![Term::Const(Const::Done), program.main]);
    let main = Term::app(Term::Const(Const::Trmp), mnf_expr(wrapped, fresh));
    Ok(Program { main, ..program })
}

fn set_synth(var: Synth, value: Term) -> Term {
    Term::Set(Ident::Synthetic(var), Box::new(value))
}

fn get_synth(var: Synth) -> Term {
    Term::Get(Ident::Synthetic(var))
}

/// The guard assertion `this.state == c && this.who(this.sender)`.
fn guard_assert(tag: &Nat256) -> Term {
    Term::binop(
        Const::And,
        Term::binop(
            Const::Eq,
            get_synth(Synth::State),
            Term::Const(Const::Nat(tag.clone())),
        ),
        Term::app(get_synth(Synth::Who), get_synth(Synth::Sender)),
    )
}

/// Insert access-control guards around every remote binding of an MNF
/// program. `x ←s (e0, ()→e1); m2` becomes
///
/// ```text
/// this.who := e0; this.state := c;
/// x ←s (()→true, ()→e1);
/// assert(this.state == c && this.who(this.sender));
/// this.state := 0; guard(m2)
/// ```
///
/// with a fresh tag `c` per remote expression, distinct across the program.
pub fn guard_program(program: Program) -> Result<Program, PassError> {
    let (defs, syndefs) = (program.defs, program.syndefs);
    let chain = match program.main {
        Term::App(f, arg) if matches!(*f, Term::Const(Const::Trmp)) => *arg,
        other => {
            return Err(PassError::NotMnf(format!(
                "main is not a trampoline application: {other:?}"
            )))
        }
    };
    if !is_mnf(&chain) {
        return Err(PassError::NotMnf("trampoline argument".to_string()));
    }
    let mut next_tag = 1u64;
    let guarded = guard_expr(chain, &mut next_tag);
    Ok(Program {
        defs,
        syndefs,
        main: Term::app(Term::Const(Const::Trmp), guarded),
    })
}

fn guard_expr(term: Term, next_tag: &mut u64) -> Term {
    match term {
        Term::Let(pattern, rhs, body) => match *rhs {
            Term::RemoteS(pred, thunk) => {
                let tag = Nat256::from(*next_tag);
                *next_tag += 1;
                let rest = guard_expr(*body, next_tag);
                let trivial = Term::thunk(Term::Const(Const::True));
                Term::seq(
                    set_synth(Synth::Who, *pred),
                    Term::seq(
                        set_synth(Synth::State, Term::Const(Const::Nat(tag.clone()))),
                        Term::let_in(
                            *pattern,
                            Term::RemoteS(Box::new(trivial), thunk),
                            Term::assert_then(
                                guard_assert(&tag),
                                Term::seq(set_synth(Synth::State, Term::nat(0)), rest),
                            ),
                        ),
                    ),
                )
            }
            other => Term::let_in(*pattern, other, guard_expr(*body, next_tag)),
        },
        other => other,
    }
}

/// Rewrite guarded remote bindings to explicit binds:
/// `x ←s (()→true, e0); m1` becomes `e0 >>= (x → cps(m1))`, encoded as the
/// curried application `(>>= e0) (x → ..)`. No ↓s remains afterwards.
pub fn cps_program(program: Program) -> Result<Program, PassError> {
    let chain = match program.main {
        Term::App(f, arg) if matches!(*f, Term::Const(Const::Trmp)) => *arg,
        other => {
            return Err(PassError::NotMnf(format!(
                "main is not a trampoline application: {other:?}"
            )))
        }
    };
    let rewritten = cps_expr(chain)?;
    Ok(Program {
        main: Term::app(Term::Const(Const::Trmp), rewritten),
        ..program
    })
}

fn cps_expr(term: Term) -> Result<Term, PassError> {
    match term {
        Term::Let(pattern, rhs, body) => match *rhs {
            Term::RemoteS(pred, thunk) => {
                if !matches!(
                    &*pred,
                    Term::Lambda(p, b)
                        if matches!(**p, Term::Const(Const::Unit))
                            && matches!(**b, Term::Const(Const::True))
                ) {
                    return Err(PassError::UnguardedRemote);
                }
                let rest = cps_expr(*body)?;
                Ok(Term::app(
                    Term::app(Term::Const(Const::Bind), *thunk),
                    Term::Lambda(pattern, Box::new(rest)),
                ))
            }
            other => Ok(Term::let_in(*pattern, other, cps_expr(*body)?)),
        },
        other => Ok(other),
    }
}

/// One synthesized dispatcher: peel/extend the `id -> if let (tag :: ..) = id`
/// clause chain of a clfn or cofn definition.
fn wrap_clause(dispatcher_body: Term, clause_pattern: Term, clause_body: Term) -> Term {
    Term::if_let(
        clause_pattern,
        Term::var(DISPATCH_PARAM),
        clause_body,
        dispatcher_body,
    )
}

/// The free-variable tuple of a term: `v1 :: .. :: vn :: ()` over
/// [`free_vars`] order. Used both as record payload and, read as a pattern,
/// as the matching clause pattern.
fn fv_tuple(t: &Term) -> Term {
    Term::tuple(free_vars(t).into_iter().map(Term::Var).collect())
}

/// Defunctionalize a CPS program. Prepends the synthetic dispatcher
/// definitions `@cl this.clfn = id -> assert(false)` and
/// `@co this.cofn = id -> assert(false)`, then walks the chain bottom-up:
/// each `(()→e1) >>= (x→e2)` becomes the record
/// `(More, c :: fv(()→e1), c :: fv(x→e2'))` with a fresh tag `c`, while the
/// dispatchers gain matching clauses for `c` answering with `e1` (client
/// side) and `e2'` (contract side). Output is in the target subset.
pub fn defun_program(program: Program, fresh: &mut FreshSupply) -> Result<Program, PassError> {
    let chain = match program.main {
        Term::App(f, arg) if matches!(*f, Term::Const(Const::Trmp)) => *arg,
        other => {
            return Err(PassError::NotMnf(format!(
                "main is not a trampoline application: {other:?}"
            )))
        }
    };
    let mut state = CoClfn {
        clfn_body: Term::assert_false(),
        cofn_body: Term::assert_false(),
    };
    let main_chain = defun_expr(chain, &mut state, fresh)?;
    let mut syndefs = vec![
        Definition {
            location: Location::Client,
            var: Ident::Synthetic(Synth::Clfn),
            value: Term::lambda(Term::var(DISPATCH_PARAM), state.clfn_body),
        },
        Definition {
            location: Location::Contract,
            var: Ident::Synthetic(Synth::Cofn),
            value: Term::lambda(Term::var(DISPATCH_PARAM), state.cofn_body),
        },
    ];
    syndefs.extend(program.syndefs);
    Ok(Program {
        defs: program.defs,
        syndefs,
        main: Term::app(Term::Const(Const::Trmp), main_chain),
    })
}

struct CoClfn {
    clfn_body: Term,
    cofn_body: Term,
}

fn defun_expr(term: Term, state: &mut CoClfn, fresh: &mut FreshSupply) -> Result<Term, PassError> {
    match term {
        Term::Let(p, rhs, body) => Ok(Term::Let(p, rhs, Box::new(defun_expr(*body, state, fresh)?))),
        Term::App(outer_fn, continuation) => {
            // (Bind thunk) k — the only application shape cps leaves in chain
            // tail position.
            let thunk = match *outer_fn {
                Term::App(head, thunk) if matches!(*head, Term::Const(Const::Bind)) => thunk,
                other => {
                    return Ok(Term::App(Box::new(other), continuation));
                }
            };
            if !matches!(&*thunk, Term::Lambda(p, _) if matches!(**p, Term::Const(Const::Unit))) {
                return Err(PassError::MalformedBind);
            }
            let (answer_pattern, cont_body) = match *continuation {
                Term::Lambda(p, b) => (p, b),
                _ => return Err(PassError::MalformedBind),
            };
            // Inner continuations first, so their clauses sit deeper in the
            // dispatcher and their tags are allocated first.
            let cont_body = defun_expr(*cont_body, state, fresh)?;
            let tag = fresh.fresh_tag();
            let tag_term = Term::Const(Const::Nat(tag));

            let client_record = Term::pair(tag_term.clone(), fv_tuple(&thunk));
            let thunk_body = match *thunk {
                Term::Lambda(_, b) => *b,
                _ => unreachable!("shape checked above"),
            };
            state.clfn_body = wrap_clause(
                std::mem::replace(&mut state.clfn_body, Term::unit()),
                client_record.clone(),
                thunk_body,
            );

            let cont_fn = Term::Lambda(answer_pattern.clone(), Box::new(cont_body.clone()));
            let cont_fvs = fv_tuple(&cont_fn);
            let contract_record = Term::pair(tag_term.clone(), cont_fvs.clone());
            state.cofn_body = wrap_clause(
                std::mem::replace(&mut state.cofn_body, Term::unit()),
                Term::pair(tag_term, Term::Pair(answer_pattern, Box::new(cont_fvs))),
                cont_body,
            );

            Ok(Term::tuple(vec![
                Term::Const(Const::More),
                client_record,
                contract_record,
            ]))
        }
        other => Ok(other),
    }
}

/// The full pipeline on a source program:
/// `defun_program ∘ cps_program ∘ guard_program ∘ mnf_program`.
/// Deterministic given the supply's seed.
pub fn compile(program: Program, fresh: &mut FreshSupply) -> Result<Program, PassError> {
    let p = mnf_program(program, fresh)?;
    let p = guard_program(p)?;
    let p = cps_program(p)?;
    defun_program(p, fresh)
}

/// Seed assert-false clfn/cofn definitions without compiling, mirroring the
/// dispatcher environment `defun_program` starts from. Used by the
/// pass-equivalence harness.
pub fn seed_dispatchers(program: &Program) -> Program {
    let mut syndefs = vec![
        Definition {
            location: Location::Client,
            var: Ident::Synthetic(Synth::Clfn),
            value: Term::lambda(Term::var(DISPATCH_PARAM), Term::assert_false()),
        },
        Definition {
            location: Location::Contract,
            var: Ident::Synthetic(Synth::Cofn),
            value: Term::lambda(Term::var(DISPATCH_PARAM), Term::assert_false()),
        },
    ];
    syndefs.extend(program.syndefs.clone());
    Program {
        defs: program.defs.clone(),
        syndefs,
        main: program.main.clone(),
    }
}

/// Single-walk formulation of guard+cps+defun that allocates one shared tag
/// per remote binding, used for both the state guard and the dispatch
/// records. Kept as an independent cross-check of the composed pipeline.
pub fn compile_fused(program: Program, fresh: &mut FreshSupply) -> Result<Program, PassError> {
    let p = mnf_program(program, fresh)?;
    let chain = match p.main {
        Term::App(f, arg) if matches!(*f, Term::Const(Const::Trmp)) => *arg,
        _ => unreachable!("mnf_program wraps main in trmp"),
    };
    let mut state = CoClfn {
        clfn_body: Term::assert_false(),
        cofn_body: Term::assert_false(),
    };
    let main_chain = fused_expr(chain, &mut state, fresh)?;
    let mut syndefs = vec![
        Definition {
            location: Location::Client,
            var: Ident::Synthetic(Synth::Clfn),
            value: Term::lambda(Term::var(DISPATCH_PARAM), state.clfn_body),
        },
        Definition {
            location: Location::Contract,
            var: Ident::Synthetic(Synth::Cofn),
            value: Term::lambda(Term::var(DISPATCH_PARAM), state.cofn_body),
        },
    ];
    syndefs.extend(p.syndefs);
    Ok(Program {
        defs: p.defs,
        syndefs,
        main: Term::app(Term::Const(Const::Trmp), main_chain),
    })
}

fn fused_expr(term: Term, state: &mut CoClfn, fresh: &mut FreshSupply) -> Result<Term, PassError> {
    match term {
        Term::Let(pattern, rhs, body) => match *rhs {
            Term::RemoteS(pred, thunk) => {
                let cont = fused_expr(*body, state, fresh)?;
                let tag = fresh.fresh_tag();
                let tag_term = Term::Const(Const::Nat(tag.clone()));

                let client_record = Term::pair(tag_term.clone(), fv_tuple(&thunk));
                let thunk_body = match *thunk {
                    Term::Lambda(p, b) if matches!(*p, Term::Const(Const::Unit)) => *b,
                    _ => return Err(PassError::MalformedBind),
                };
                state.clfn_body = wrap_clause(
                    std::mem::replace(&mut state.clfn_body, Term::unit()),
                    client_record.clone(),
                    thunk_body,
                );

                let guarded_cont = Term::assert_then(
                    guard_assert(&tag),
                    Term::seq(set_synth(Synth::State, Term::nat(0)), cont),
                );
                let cont_fn = Term::Lambda(pattern.clone(), Box::new(guarded_cont.clone()));
                let cont_fvs = fv_tuple(&cont_fn);
                let contract_record = Term::pair(tag_term.clone(), cont_fvs.clone());
                state.cofn_body = wrap_clause(
                    std::mem::replace(&mut state.cofn_body, Term::unit()),
                    Term::pair(tag_term, Term::Pair(pattern, Box::new(cont_fvs))),
                    guarded_cont,
                );

                Ok(Term::seq(
                    set_synth(Synth::Who, *pred),
                    Term::seq(
                        set_synth(Synth::State, Term::Const(Const::Nat(tag))),
                        Term::tuple(vec![
                            Term::Const(Const::More),
                            client_record,
                            contract_record,
                        ]),
                    ),
                ))
            }
            other => Ok(Term::let_in(*pattern, other, fused_expr(*body, state, fresh)?)),
        },
        other => Ok(other),
    }
}

/// Count the remote expressions of a source program (one guard tag and one
/// dispatcher clause pair each).
pub fn count_awaits(term: &Term) -> usize {
    match term {
        Term::RemoteS(p, t) => 1 + count_awaits(p) + count_awaits(t),
        Term::RemoteT(_, t) => count_awaits(t),
        Term::Const(_) | Term::Var(_) | Term::Get(_) => 0,
        Term::Pair(a, b) | Term::App(a, b) | Term::Lambda(a, b) => {
            count_awaits(a) + count_awaits(b)
        }
        Term::Set(_, r) => count_awaits(r),
        Term::Let(p, r, b) => count_awaits(p) + count_awaits(r) + count_awaits(b),
        Term::IfLet(p, s, t, e) => {
            count_awaits(p) + count_awaits(s) + count_awaits(t) + count_awaits(e)
        }
    }
}

/// Dispatcher clauses of a compiled definition body, outermost first:
/// `(tag, clause_pattern, clause_body)` triples over the if-let chain.
pub fn dispatcher_clauses(value: &Term) -> Vec<(Nat256, Term, Term)> {
    let mut out = Vec::new();
    let mut body = match value {
        Term::Lambda(_, b) => (**b).clone(),
        _ => return out,
    };
    while let Term::IfLet(pattern, scrutinee, then, els) = body {
        if !matches!(&*scrutinee, Term::Var(Ident::Pure(_))) {
            break;
        }
        if let Term::Pair(head, _) = &*pattern {
            if let Term::Const(Const::Nat(tag)) = &**head {
                out.push((tag.clone(), (*pattern).clone(), (*then).clone()));
                body = *els;
                continue;
            }
        }
        break;
    }
    out
}

/// Remove the guard assertion from the `index`-th (outermost-first) cofn
/// clause of a compiled program. Mutation-testing helper: the weakened
/// program must leak attacker traces the source forbids.
pub fn strip_guard_assert(program: &Program, index: usize) -> Option<Program> {
    let mut p = program.clone();
    let def = p
        .syndefs
        .iter_mut()
        .find(|d| d.var == Ident::Synthetic(Synth::Cofn))?;
    let (param, mut body) = match &def.value {
        Term::Lambda(param, b) => ((**param).clone(), (**b).clone()),
        _ => return None,
    };

    fn strip(body: Term, depth: usize, index: usize) -> Option<Term> {
        match body {
            Term::IfLet(pat, scrut, then, els) => {
                if depth == index {
                    // Clause body starts with `assert(..); rest`.
                    let stripped = match *then {
                        Term::Let(p, cond, rest)
                            if matches!(*p, Term::Const(Const::True)) =>
                        {
                            let _ = cond;
                            *rest
                        }
                        _ => return None,
                    };
                    Some(Term::if_let(*pat, *scrut, stripped, *els))
                } else {
                    let els = strip(*els, depth + 1, index)?;
                    Some(Term::if_let(*pat, *scrut, *then, els))
                }
            }
            _ => None,
        }
    }

    body = strip(body, 0, index)?;
    def.value = Term::lambda(param, body);
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Program;

    fn tvar(s: &str) -> Term {
        Term::var(s)
    }

    #[test]
    fn assoc_rotates_nested_let() {
        // let x0 = (let x1 = 1; x1); x0  →  let x1 = 1; let x0 = x1; x0
        let input = Term::let_in(
            tvar("x0"),
            Term::let_in(tvar("x1"), Term::nat(1), tvar("x1")),
            tvar("x0"),
        );
        let expected = Term::let_in(
            tvar("x1"),
            Term::nat(1),
            Term::let_in(tvar("x0"), tvar("x1"), tvar("x0")),
        );
        assert_eq!(assoc(input), expected);
    }

    #[test]
    fn assoc_identity_on_atoms() {
        assert_eq!(assoc(Term::nat(3)), Term::nat(3));
    }

    #[test]
    fn mnf_binds_nested_application() {
        // f (g 1) with f,g variables: inner application bound first.
        let mut fs = FreshSupply::new();
        let t = Term::app(tvar("f"), Term::app(tvar("g"), Term::nat(1)));
        let out = mnf_expr(t, &mut fs);
        assert!(is_mnf(&out));
        let expected = Term::let_in(
            tvar("tmp0"),
            Term::app(tvar("g"), Term::nat(1)),
            Term::app(tvar("f"), tvar("tmp0")),
        );
        assert_eq!(out, expected);
    }

    #[test]
    fn mnf_identity_on_atoms() {
        let mut fs = FreshSupply::new();
        assert_eq!(mnf_expr(tvar("x"), &mut fs), tvar("x"));
    }

    #[test]
    fn mnf_program_wraps_in_trampoline() {
        let mut fs = FreshSupply::new();
        let p = mnf_program(Program::from_main(Term::nat(5)), &mut fs).unwrap();
        match &p.main {
            Term::App(f, arg) => {
                assert_eq!(**f, Term::Const(Const::Trmp));
                assert!(is_mnf(arg));
            }
            other => panic!("expected trmp application, got {other:?}"),
        }
    }

    #[test]
    fn guard_inserts_one_tag_per_await() {
        let mut fs = FreshSupply::new();
        let pred = Term::lambda(tvar("a"), Term::Const(Const::True));
        let body = Term::thunk(Term::nat(1));
        let p = Program::from_main(Term::let_in(
            tvar("r"),
            Term::RemoteS(Box::new(pred), Box::new(body)),
            tvar("r"),
        ));
        let guarded = guard_program(mnf_program(p, &mut fs).unwrap()).unwrap();
        let mut state_writes = 0;
        let mut who_writes = 0;
        let mut trivial_preds = 0;
        fn walk(t: &Term, f: &mut impl FnMut(&Term)) {
            f(t);
            match t {
                Term::Pair(a, b)
                | Term::App(a, b)
                | Term::Lambda(a, b)
                | Term::RemoteS(a, b) => {
                    walk(a, f);
                    walk(b, f);
                }
                Term::Set(_, r) | Term::RemoteT(_, r) => walk(r, f),
                Term::Let(p, r, b) => {
                    walk(p, f);
                    walk(r, f);
                    walk(b, f);
                }
                Term::IfLet(p, s, t2, e) => {
                    walk(p, f);
                    walk(s, f);
                    walk(t2, f);
                    walk(e, f);
                }
                _ => {}
            }
        }
        walk(&guarded.main, &mut |t| match t {
            Term::Set(Ident::Synthetic(Synth::State), rhs) => {
                if !matches!(&**rhs, Term::Const(Const::Nat(n)) if n.is_zero()) {
                    state_writes += 1;
                }
            }
            Term::Set(Ident::Synthetic(Synth::Who), _) => who_writes += 1,
            Term::RemoteS(pred, _) => {
                if matches!(&**pred, Term::Lambda(p, b)
                    if matches!(**p, Term::Const(Const::Unit)) && matches!(**b, Term::Const(Const::True)))
                {
                    trivial_preds += 1;
                }
            }
            _ => {}
        });
        assert_eq!(state_writes, 1);
        assert_eq!(who_writes, 1);
        assert_eq!(trivial_preds, 1);
    }

    #[test]
    fn guard_identity_without_awaits() {
        let mut fs = FreshSupply::new();
        let p = mnf_program(Program::from_main(Term::nat(5)), &mut fs).unwrap();
        assert_eq!(guard_program(p.clone()).unwrap(), p);
    }

    #[test]
    fn cps_eliminates_remote_s() {
        let mut fs = FreshSupply::new();
        let pred = Term::lambda(tvar("a"), Term::Const(Const::True));
        let p = Program::from_main(Term::let_in(
            tvar("r"),
            Term::RemoteS(Box::new(pred), Box::new(Term::thunk(Term::nat(1)))),
            tvar("r"),
        ));
        let out = cps_program(guard_program(mnf_program(p, &mut fs).unwrap()).unwrap()).unwrap();
        assert_eq!(count_awaits(&out.main), 0);
        let mut binds = 0;
        fn count_binds(t: &Term, n: &mut usize) {
            if let Term::Const(Const::Bind) = t {
                *n += 1;
            }
            match t {
                Term::Pair(a, b) | Term::App(a, b) | Term::Lambda(a, b) | Term::RemoteS(a, b) => {
                    count_binds(a, n);
                    count_binds(b, n);
                }
                Term::Set(_, r) | Term::RemoteT(_, r) => count_binds(r, n),
                Term::Let(p, r, b) => {
                    count_binds(p, n);
                    count_binds(r, n);
                    count_binds(b, n);
                }
                Term::IfLet(p, s, t2, e) => {
                    count_binds(p, n);
                    count_binds(s, n);
                    count_binds(t2, n);
                    count_binds(e, n);
                }
                _ => {}
            }
        }
        count_binds(&out.main, &mut binds);
        assert_eq!(binds, 1);
    }

    #[test]
    fn defun_zero_awaits_keeps_assert_false_dispatchers() {
        let mut fs = FreshSupply::new();
        let p = compile(Program::from_main(Term::nat(7)), &mut fs).unwrap();
        for d in &p.syndefs {
            assert_eq!(
                d.value,
                Term::lambda(tvar(DISPATCH_PARAM), Term::assert_false())
            );
        }
        assert!(validate_subset(&p, Subset::Target).is_ok());
    }

    #[test]
    fn defun_two_awaits_two_clauses_sharing_tags() {
        let mut fs = FreshSupply::new();
        let pred = || Term::lambda(tvar("a"), Term::Const(Const::True));
        let await1 = Term::RemoteS(Box::new(pred()), Box::new(Term::thunk(Term::nat(1))));
        let await2 = Term::RemoteS(Box::new(pred()), Box::new(Term::thunk(Term::nat(2))));
        let main = Term::let_in(
            tvar("x"),
            await1,
            Term::let_in(
                tvar("y"),
                await2,
                Term::binop(Const::Add, tvar("x"), tvar("y")),
            ),
        );
        let p = compile(Program::from_main(main), &mut fs).unwrap();
        assert!(validate_subset(&p, Subset::Target).is_ok());
        let clfn = p
            .syndefs
            .iter()
            .find(|d| d.var == Ident::Synthetic(Synth::Clfn))
            .unwrap();
        let cofn = p
            .syndefs
            .iter()
            .find(|d| d.var == Ident::Synthetic(Synth::Cofn))
            .unwrap();
        let clauses_cl = dispatcher_clauses(&clfn.value);
        let clauses_co = dispatcher_clauses(&cofn.value);
        assert_eq!(clauses_cl.len(), 2);
        assert_eq!(clauses_co.len(), 2);
        // Clause pairs share the fresh tag allocated for their bind.
        for (a, b) in clauses_cl.iter().zip(clauses_co.iter()) {
            assert_eq!(a.0, b.0);
        }
        // The More record in main carries the outermost clause's tag twice.
        fn find_more(t: &Term) -> Option<(&Term, &Term)> {
            if let Term::Pair(h, rest) = t {
                if matches!(**h, Term::Const(Const::More)) {
                    if let Term::Pair(r1, rest2) = &**rest {
                        if let Term::Pair(r2, _) = &**rest2 {
                            return Some((r1, r2));
                        }
                    }
                }
            }
            match t {
                Term::Let(_, r, b) => find_more(r).or_else(|| find_more(b)),
                _ => None,
            }
        }
        let chain = match &p.main {
            Term::App(_, arg) => arg,
            _ => unreachable!(),
        };
        let (r1, r2) = find_more(chain).expect("compiled main ends in a More record");
        match (r1, r2) {
            (Term::Pair(t1, _), Term::Pair(t2, _)) => assert_eq!(t1, t2),
            other => panic!("malformed More record: {other:?}"),
        }
    }

    #[test]
    fn strip_guard_assert_removes_one_assert() {
        let mut fs = FreshSupply::new();
        let pred = Term::lambda(tvar("a"), Term::Const(Const::True));
        let main = Term::let_in(
            tvar("r"),
            Term::RemoteS(Box::new(pred), Box::new(Term::thunk(Term::nat(1)))),
            tvar("r"),
        );
        let p = compile(Program::from_main(main), &mut fs).unwrap();
        let stripped = strip_guard_assert(&p, 0).unwrap();
        assert_ne!(p, stripped);
        assert!(strip_guard_assert(&p, 1).is_none());
    }
}
