//! Canonical form for comparing pipeline outputs.
//!
//! Two programs that differ only in fresh-name or fresh-tag choice become
//! equal: pure binders are α-renamed in traversal order, and the two
//! compiler tag families — guard state tags (state writes and compares) and
//! dispatch tags (clause patterns and More records) — are renumbered with
//! independent first-occurrence maps. The families occupy disjoint AST
//! positions, so renumbering them separately also reconciles the fused
//! compiler (one shared tag per await) with the composed pipeline.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{Const, Definition, Ident, Nat256, Program, Synth, Term};

/// α-rename and renumber; idempotent.
pub fn canonicalize(program: &Program) -> Program {
    let remapped = renumber_tags(program);
    rename_program(&remapped)
}

/// All tag values of a program (both families), for attacker-universe
/// extension.
pub fn program_tags(program: &Program) -> BTreeSet<Nat256> {
    let (guard, dispatch) = collect_tags(program);
    guard.into_iter().chain(dispatch).collect()
}

// ─── Tag scanning ───────────────────────────────────────────────────────

fn collect_tags(program: &Program) -> (Vec<Nat256>, Vec<Nat256>) {
    let mut guard = Vec::new();
    let mut dispatch = Vec::new();
    for d in &program.defs {
        scan_term(&d.value, None, &mut guard, &mut dispatch);
    }
    for d in &program.syndefs {
        let clause_param = dispatcher_param(d);
        scan_term(&d.value, clause_param.as_deref(), &mut guard, &mut dispatch);
    }
    scan_term(&program.main, None, &mut guard, &mut dispatch);
    (guard, dispatch)
}

fn dispatcher_param(d: &Definition) -> Option<String> {
    if !matches!(d.var, Ident::Synthetic(Synth::Clfn | Synth::Cofn)) {
        return None;
    }
    match &d.value {
        Term::Lambda(p, _) => match &**p {
            Term::Var(Ident::Pure(name)) => Some(name.clone()),
            _ => None,
        },
        _ => None,
    }
}

fn push_tag(list: &mut Vec<Nat256>, tag: &Nat256) {
    if !tag.is_zero() && !list.contains(tag) {
        list.push(tag.clone());
    }
}

/// Guard tags: `this.state := t` and `this.state == t`. Dispatch tags: the
/// heads of More-record components and of clause patterns scrutinizing the
/// dispatcher parameter.
fn scan_term(t: &Term, param: Option<&str>, guard: &mut Vec<Nat256>, dispatch: &mut Vec<Nat256>) {
    if let Some((t1, t2)) = more_record_tags(t) {
        push_tag(dispatch, t1);
        push_tag(dispatch, t2);
    }
    match t {
        Term::Set(Ident::Synthetic(Synth::State), rhs) => {
            if let Term::Const(Const::Nat(n)) = &**rhs {
                push_tag(guard, n);
            }
            scan_term(rhs, param, guard, dispatch);
        }
        Term::App(f, arg) => {
            if let Some(n) = state_compare_tag(f, arg) {
                push_tag(guard, n);
            }
            scan_term(f, param, guard, dispatch);
            scan_term(arg, param, guard, dispatch);
        }
        Term::IfLet(pattern, scrutinee, then, els) => {
            if let (Some(p), Term::Var(Ident::Pure(s))) = (param, &**scrutinee) {
                if s == p {
                    if let Term::Pair(head, _) = &**pattern {
                        if let Term::Const(Const::Nat(n)) = &**head {
                            push_tag(dispatch, n);
                        }
                    }
                }
            }
            scan_term(pattern, param, guard, dispatch);
            scan_term(scrutinee, param, guard, dispatch);
            scan_term(then, param, guard, dispatch);
            scan_term(els, param, guard, dispatch);
        }
        Term::Pair(a, b) | Term::Lambda(a, b) | Term::RemoteS(a, b) => {
            scan_term(a, param, guard, dispatch);
            scan_term(b, param, guard, dispatch);
        }
        Term::Let(p, r, b) => {
            scan_term(p, param, guard, dispatch);
            scan_term(r, param, guard, dispatch);
            scan_term(b, param, guard, dispatch);
        }
        Term::Set(_, r) | Term::RemoteT(_, r) => scan_term(r, param, guard, dispatch),
        Term::Const(_) | Term::Var(_) | Term::Get(_) => {}
    }
}

fn state_compare_tag<'a>(f: &'a Term, arg: &'a Term) -> Option<&'a Nat256> {
    if !matches!(f, Term::Const(Const::Eq)) {
        return None;
    }
    if let Term::Pair(a, rest) = arg {
        if matches!(**a, Term::Get(Ident::Synthetic(Synth::State))) {
            if let Term::Pair(b, unit) = &**rest {
                if matches!(**unit, Term::Const(Const::Unit)) {
                    if let Term::Const(Const::Nat(n)) = &**b {
                        return Some(n);
                    }
                }
            }
        }
    }
    None
}

fn more_record_tags(t: &Term) -> Option<(&Nat256, &Nat256)> {
    let Term::Pair(head, rest) = t else { return None };
    if !matches!(**head, Term::Const(Const::More)) {
        return None;
    }
    let Term::Pair(c1, rest2) = &**rest else { return None };
    let Term::Pair(c2, unit) = &**rest2 else { return None };
    if !matches!(**unit, Term::Const(Const::Unit)) {
        return None;
    }
    let Term::Pair(h1, _) = &**c1 else { return None };
    let Term::Pair(h2, _) = &**c2 else { return None };
    match (&**h1, &**h2) {
        (Term::Const(Const::Nat(a)), Term::Const(Const::Nat(b))) => Some((a, b)),
        _ => None,
    }
}

fn renumber_tags(program: &Program) -> Program {
    let (guard, dispatch) = collect_tags(program);
    if guard.is_empty() && dispatch.is_empty() {
        return program.clone();
    }
    let guard_map: BTreeMap<Nat256, Nat256> = guard
        .into_iter()
        .enumerate()
        .map(|(k, t)| (t, Nat256::from(k as u64 + 1)))
        .collect();
    let dispatch_map: BTreeMap<Nat256, Nat256> = dispatch
        .into_iter()
        .enumerate()
        .map(|(k, t)| (t, Nat256::from(k as u64 + 1)))
        .collect();
    let rw = |d: &Definition| Definition {
        location: d.location,
        var: d.var.clone(),
        value: rewrite_term(&d.value, dispatcher_param(d).as_deref(), &guard_map, &dispatch_map),
    };
    Program {
        defs: program.defs.iter().map(rw).collect(),
        syndefs: program.syndefs.iter().map(rw).collect(),
        main: rewrite_term(&program.main, None, &guard_map, &dispatch_map),
    }
}

fn rewrite_term(
    t: &Term,
    param: Option<&str>,
    guard: &BTreeMap<Nat256, Nat256>,
    dispatch: &BTreeMap<Nat256, Nat256>,
) -> Term {
    // More records first: their component heads are dispatch positions.
    if more_record_tags(t).is_some() {
        if let Term::Pair(head, rest) = t {
            if let Term::Pair(c1, rest2) = &**rest {
                if let Term::Pair(c2, unit) = &**rest2 {
                    let fix = |comp: &Term| {
                        let Term::Pair(h, tail) = comp else { unreachable!() };
                        let Term::Const(Const::Nat(n)) = &**h else { unreachable!() };
                        Term::pair(
                            Term::Const(Const::Nat(dispatch.get(n).cloned().unwrap_or_else(|| n.clone()))),
                            rewrite_term(tail, param, guard, dispatch),
                        )
                    };
                    return Term::pair(
                        (**head).clone(),
                        Term::pair(fix(c1), Term::pair(fix(c2), (**unit).clone())),
                    );
                }
            }
        }
    }
    match t {
        Term::Set(id @ Ident::Synthetic(Synth::State), rhs) => {
            let rhs = match &**rhs {
                Term::Const(Const::Nat(n)) => {
                    Term::Const(Const::Nat(guard.get(n).cloned().unwrap_or_else(|| n.clone())))
                }
                other => rewrite_term(other, param, guard, dispatch),
            };
            Term::Set(id.clone(), Box::new(rhs))
        }
        Term::App(f, arg) => {
            if let Some(n) = state_compare_tag(f, arg) {
                let renamed = guard.get(n).cloned().unwrap_or_else(|| n.clone());
                return Term::app(
                    (**f).clone(),
                    Term::tuple(vec![
                        Term::Get(Ident::Synthetic(Synth::State)),
                        Term::Const(Const::Nat(renamed)),
                    ]),
                );
            }
            Term::app(
                rewrite_term(f, param, guard, dispatch),
                rewrite_term(arg, param, guard, dispatch),
            )
        }
        Term::IfLet(pattern, scrutinee, then, els) => {
            let mut pattern2 = rewrite_term(pattern, param, guard, dispatch);
            if let (Some(p), Term::Var(Ident::Pure(s))) = (param, &**scrutinee) {
                if s == p {
                    if let Term::Pair(head, tail) = &pattern2 {
                        if let Term::Const(Const::Nat(n)) = &**head {
                            pattern2 = Term::pair(
                                Term::Const(Const::Nat(
                                    dispatch.get(n).cloned().unwrap_or_else(|| n.clone()),
                                )),
                                (**tail).clone(),
                            );
                        }
                    }
                }
            }
            Term::if_let(
                pattern2,
                rewrite_term(scrutinee, param, guard, dispatch),
                rewrite_term(then, param, guard, dispatch),
                rewrite_term(els, param, guard, dispatch),
            )
        }
        Term::Pair(a, b) => Term::pair(
            rewrite_term(a, param, guard, dispatch),
            rewrite_term(b, param, guard, dispatch),
        ),
        Term::Lambda(a, b) => Term::lambda(
            rewrite_term(a, param, guard, dispatch),
            rewrite_term(b, param, guard, dispatch),
        ),
        Term::RemoteS(a, b) => Term::RemoteS(
            Box::new(rewrite_term(a, param, guard, dispatch)),
            Box::new(rewrite_term(b, param, guard, dispatch)),
        ),
        Term::Let(p, r, b) => Term::let_in(
            rewrite_term(p, param, guard, dispatch),
            rewrite_term(r, param, guard, dispatch),
            rewrite_term(b, param, guard, dispatch),
        ),
        Term::Set(id, r) => Term::Set(id.clone(), Box::new(rewrite_term(r, param, guard, dispatch))),
        Term::RemoteT(c, r) => {
            Term::RemoteT(c.clone(), Box::new(rewrite_term(r, param, guard, dispatch)))
        }
        Term::Const(_) | Term::Var(_) | Term::Get(_) => t.clone(),
    }
}

// ─── α-renaming ─────────────────────────────────────────────────────────

struct Renamer {
    counter: usize,
    avoid: BTreeSet<String>,
}

impl Renamer {
    fn fresh(&mut self) -> String {
        loop {
            let name = format!("x{}", self.counter);
            self.counter += 1;
            if !self.avoid.contains(&name) {
                return name;
            }
        }
    }
}

fn rename_program(program: &Program) -> Program {
    // Binder names may not collide with names left free anywhere.
    let mut avoid = BTreeSet::new();
    for d in program.defs.iter().chain(program.syndefs.iter()) {
        avoid.extend(
            crate::ast::free_vars(&d.value)
                .iter()
                .map(|i| i.name().to_string()),
        );
    }
    avoid.extend(
        crate::ast::free_vars(&program.main)
            .iter()
            .map(|i| i.name().to_string()),
    );
    let mut r = Renamer { counter: 0, avoid };
    let mut env: Vec<(String, String)> = Vec::new();
    let rw = |d: &Definition, r: &mut Renamer, env: &mut Vec<(String, String)>| Definition {
        location: d.location,
        var: d.var.clone(),
        value: rename_term(&d.value, env, r),
    };
    Program {
        defs: program.defs.iter().map(|d| rw(d, &mut r, &mut env)).collect(),
        syndefs: program
            .syndefs
            .iter()
            .map(|d| rw(d, &mut r, &mut env))
            .collect(),
        main: rename_term(&program.main, &mut env, &mut r),
    }
}

fn rename_pattern(p: &Term, env: &mut Vec<(String, String)>, r: &mut Renamer) -> Term {
    match p {
        Term::Var(Ident::Pure(name)) => {
            let fresh = r.fresh();
            env.push((name.clone(), fresh.clone()));
            Term::var(fresh)
        }
        Term::Pair(a, b) => {
            let a = rename_pattern(a, env, r);
            let b = rename_pattern(b, env, r);
            Term::pair(a, b)
        }
        other => other.clone(),
    }
}

fn rename_term(t: &Term, env: &mut Vec<(String, String)>, r: &mut Renamer) -> Term {
    match t {
        Term::Var(Ident::Pure(name)) => match env.iter().rev().find(|(old, _)| old == name) {
            Some((_, new)) => Term::var(new.clone()),
            None => t.clone(),
        },
        Term::Var(_) | Term::Const(_) | Term::Get(_) => t.clone(),
        Term::Pair(a, b) => Term::pair(rename_term(a, env, r), rename_term(b, env, r)),
        Term::App(a, b) => Term::app(rename_term(a, env, r), rename_term(b, env, r)),
        Term::Set(id, rhs) => Term::Set(id.clone(), Box::new(rename_term(rhs, env, r))),
        Term::Lambda(p, body) => {
            let depth = env.len();
            let p = rename_pattern(p, env, r);
            let body = rename_term(body, env, r);
            env.truncate(depth);
            Term::lambda(p, body)
        }
        Term::Let(p, rhs, body) => {
            let rhs = rename_term(rhs, env, r);
            let depth = env.len();
            let p = rename_pattern(p, env, r);
            let body = rename_term(body, env, r);
            env.truncate(depth);
            Term::let_in(p, rhs, body)
        }
        Term::IfLet(p, s, then, els) => {
            let s = rename_term(s, env, r);
            let depth = env.len();
            let p = rename_pattern(p, env, r);
            let then = rename_term(then, env, r);
            env.truncate(depth);
            let els = rename_term(els, env, r);
            Term::if_let(p, s, then, els)
        }
        Term::RemoteS(a, b) => Term::RemoteS(
            Box::new(rename_term(a, env, r)),
            Box::new(rename_term(b, env, r)),
        ),
        Term::RemoteT(c, b) => Term::RemoteT(c.clone(), Box::new(rename_term(b, env, r))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Term;

    #[test]
    fn idempotent() {
        let p = Program::from_main(Term::let_in(
            Term::var("a"),
            Term::nat(1),
            Term::lambda(Term::var("b"), Term::var("a")),
        ));
        let once = canonicalize(&p);
        assert_eq!(once, canonicalize(&once));
    }

    #[test]
    fn alpha_variants_identified() {
        let mk = |x: &str, y: &str| {
            Program::from_main(Term::let_in(
                Term::var(x),
                Term::nat(1),
                Term::lambda(Term::var(y), Term::binop(Const::Add, Term::var(x), Term::var(y))),
            ))
        };
        assert_eq!(canonicalize(&mk("a", "b")), canonicalize(&mk("u", "v")));
    }

    #[test]
    fn shadowing_preserved() {
        // let x = 1; let x = 2; x  must keep reading the inner binding.
        let p = Program::from_main(Term::let_in(
            Term::var("x"),
            Term::nat(1),
            Term::let_in(Term::var("x"), Term::nat(2), Term::var("x")),
        ));
        let c = canonicalize(&p);
        match &c.main {
            Term::Let(_, _, body) => match &**body {
                Term::Let(p2, _, body2) => assert_eq!(**body2, (**p2).clone()),
                other => panic!("expected inner let, got {other:?}"),
            },
            other => panic!("expected let, got {other:?}"),
        }
    }

    #[test]
    fn user_tuple_patterns_not_tag_rewritten() {
        // `if let (1, x) = y ...` in user code is not a dispatch clause.
        let p = Program::from_main(Term::let_in(
            Term::var("y"),
            Term::tuple(vec![Term::nat(1), Term::nat(5)]),
            Term::if_let(
                Term::tuple(vec![Term::nat(1), Term::var("x")]),
                Term::var("y"),
                Term::var("x"),
                Term::nat(0),
            ),
        ));
        let c = canonicalize(&p);
        match &c.main {
            Term::Let(_, _, body) => match &**body {
                Term::IfLet(pat, _, _, _) => match &**pat {
                    Term::Pair(head, _) => assert_eq!(**head, Term::nat(1)),
                    other => panic!("expected pair pattern, got {other:?}"),
                },
                other => panic!("expected if-let, got {other:?}"),
            },
            other => panic!("expected let, got {other:?}"),
        }
    }
}
