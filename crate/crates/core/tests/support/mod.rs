//! Shared test support: corpus loading, an independent environment-based
//! evaluator (the oracle the substitution interpreter is checked against),
//! and seeded random generators for terms and source programs.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use miniprisma::ast::{Const, Definition, Ident, Location, Nat256, Program, Term};
use miniprisma::parser::parse;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Every `.mp` program in the corpus, sorted by name.
pub fn load_corpus() -> Vec<(String, Program)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(corpus_dir()).expect("corpus directory") {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("mp") {
            continue;
        }
        let name = path.file_stem().unwrap().to_string_lossy().to_string();
        let text = std::fs::read_to_string(&path).unwrap();
        let program = parse(&text)
            .unwrap_or_else(|errs| panic!("corpus program {name} does not parse: {errs:?}"));
        out.push((name, program));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    assert!(out.len() >= 10, "corpus must hold at least 10 programs");
    out
}

/// Corpus programs whose attacked exploration terminates (everything but
/// the deliberate diverger).
pub fn terminating_corpus() -> Vec<(String, Program)> {
    load_corpus()
        .into_iter()
        .filter(|(name, _)| name != "loop_forever")
        .collect()
}

// ─── Environment-based oracle evaluator ─────────────────────────────────
//
// Big-step, closure-based, with a mutable store — deliberately a different
// architecture from the substitution-based small-step interpreter it
// cross-checks. Only the await-free fragment is supported.

#[derive(Clone, Debug)]
enum OValue {
    Const(Const),
    Pair(Rc<OValue>, Rc<OValue>),
    Closure(Env, Term, Term),
}

type Env = Vec<(String, Rc<OValue>)>;

#[derive(Debug)]
pub enum OracleOutcome {
    Value(Term),
    Stuck,
}

struct Oracle {
    store: BTreeMap<Ident, Rc<OValue>>,
    fuel: u64,
}

struct OStuck;

impl Oracle {
    fn eval(&mut self, env: &Env, t: &Term) -> Result<Rc<OValue>, OStuck> {
        if self.fuel == 0 {
            panic!("oracle out of fuel: generator must produce terminating terms");
        }
        self.fuel -= 1;
        match t {
            Term::Const(c) => Ok(Rc::new(OValue::Const(c.clone()))),
            Term::Var(Ident::Pure(name)) => env
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .ok_or(OStuck),
            Term::Var(_) => Err(OStuck),
            Term::Lambda(p, b) => Ok(Rc::new(OValue::Closure(
                env.clone(),
                (**p).clone(),
                (**b).clone(),
            ))),
            Term::Pair(a, b) => {
                let va = self.eval(env, a)?;
                let vb = self.eval(env, b)?;
                Ok(Rc::new(OValue::Pair(va, vb)))
            }
            Term::Get(id) => self.store.get(id).cloned().ok_or(OStuck),
            Term::Set(id, rhs) => {
                let v = self.eval(env, rhs)?;
                self.store.insert(id.clone(), v);
                Ok(Rc::new(OValue::Const(Const::Unit)))
            }
            Term::Let(p, rhs, body) => {
                let v = self.eval(env, rhs)?;
                let mut env2 = env.clone();
                self.bind_pattern(p, &v, &mut env2)?;
                self.eval(&env2, body)
            }
            Term::IfLet(p, s, then, els) => {
                let v = self.eval(env, s)?;
                let mut env2 = env.clone();
                match self.bind_pattern(p, &v, &mut env2) {
                    Ok(()) => self.eval(&env2, then),
                    Err(OStuck) => self.eval(env, els),
                }
            }
            Term::App(f, a) => {
                let vf = self.eval(env, f)?;
                let va = self.eval(env, a)?;
                match &*vf {
                    OValue::Closure(cenv, p, body) => {
                        let mut env2 = cenv.clone();
                        self.bind_pattern(p, &va, &mut env2)?;
                        self.eval(&env2, body)
                    }
                    OValue::Const(op)
                        if matches!(op, Const::And | Const::Add | Const::Eq | Const::Lt) =>
                    {
                        self.delta(op.clone(), &va)
                    }
                    OValue::Const(Const::Trmp) => match &*va {
                        OValue::Pair(head, rest) => match (&**head, &**rest) {
                            (OValue::Const(Const::Done), OValue::Pair(v, unit))
                                if matches!(&**unit, OValue::Const(Const::Unit)) =>
                            {
                                Ok(v.clone())
                            }
                            _ => Err(OStuck),
                        },
                        _ => Err(OStuck),
                    },
                    _ => Err(OStuck),
                }
            }
            Term::RemoteS(_, _) | Term::RemoteT(_, _) => {
                panic!("oracle covers the await-free fragment only")
            }
        }
    }

    fn bind_pattern(&self, p: &Term, v: &Rc<OValue>, env: &mut Env) -> Result<(), OStuck> {
        match (p, &**v) {
            (Term::Const(c), OValue::Const(c2)) if c == c2 => Ok(()),
            (Term::Var(Ident::Pure(name)), _) => {
                env.push((name.clone(), v.clone()));
                Ok(())
            }
            (Term::Pair(p0, p1), OValue::Pair(v0, v1)) => {
                self.bind_pattern(p0, v0, env)?;
                self.bind_pattern(p1, v1, env)
            }
            _ => Err(OStuck),
        }
    }

    fn delta(&self, op: Const, arg: &OValue) -> Result<Rc<OValue>, OStuck> {
        let OValue::Pair(a, rest) = arg else { return Err(OStuck) };
        let OValue::Pair(b, unit) = &**rest else { return Err(OStuck) };
        if !matches!(&**unit, OValue::Const(Const::Unit)) {
            return Err(OStuck);
        }
        let c = |k: Const| Ok(Rc::new(OValue::Const(k)));
        match (op, &**a, &**b) {
            (Const::Add, OValue::Const(Const::Nat(x)), OValue::Const(Const::Nat(y))) => {
                c(Const::Nat(x.wrapping_add(y)))
            }
            (Const::Lt, OValue::Const(Const::Nat(x)), OValue::Const(Const::Nat(y))) => {
                c(if x < y { Const::True } else { Const::False })
            }
            (Const::Eq, x, y) => {
                if contains_closure(x) || contains_closure(y) {
                    Err(OStuck)
                } else {
                    c(if ovalue_eq(x, y) { Const::True } else { Const::False })
                }
            }
            (Const::And, OValue::Const(x), OValue::Const(y))
                if matches!(x, Const::True | Const::False)
                    && matches!(y, Const::True | Const::False) =>
            {
                c(if *x == Const::True && *y == Const::True {
                    Const::True
                } else {
                    Const::False
                })
            }
            _ => Err(OStuck),
        }
    }
}

fn contains_closure(v: &OValue) -> bool {
    match v {
        OValue::Closure(_, _, _) => true,
        OValue::Pair(a, b) => contains_closure(a) || contains_closure(b),
        OValue::Const(_) => false,
    }
}

fn ovalue_eq(a: &OValue, b: &OValue) -> bool {
    match (a, b) {
        (OValue::Const(x), OValue::Const(y)) => x == y,
        (OValue::Pair(a0, a1), OValue::Pair(b0, b1)) => ovalue_eq(a0, b0) && ovalue_eq(a1, b1),
        _ => false,
    }
}

/// Read a value back into a term; closure environments are substituted
/// into the body by hand, independent of the library's substitution.
fn readback(v: &OValue) -> Term {
    match v {
        OValue::Const(c) => Term::Const(c.clone()),
        OValue::Pair(a, b) => Term::pair(readback(a), readback(b)),
        OValue::Closure(env, p, body) => {
            let shadowed: Vec<String> = p.pattern_vars().iter().map(|i| i.name().into()).collect();
            Term::lambda((*p).clone(), apply_env(body, env, &shadowed))
        }
    }
}

fn apply_env(t: &Term, env: &Env, shadowed: &[String]) -> Term {
    match t {
        Term::Var(Ident::Pure(name)) if !shadowed.contains(name) => {
            match env.iter().rev().find(|(n, _)| n == name) {
                Some((_, v)) => readback(v),
                None => t.clone(),
            }
        }
        Term::Var(_) | Term::Const(_) | Term::Get(_) => t.clone(),
        Term::Pair(a, b) => Term::pair(apply_env(a, env, shadowed), apply_env(b, env, shadowed)),
        Term::App(a, b) => Term::app(apply_env(a, env, shadowed), apply_env(b, env, shadowed)),
        Term::Set(i, r) => Term::Set(i.clone(), Box::new(apply_env(r, env, shadowed))),
        Term::Lambda(p, b) => {
            let mut inner = shadowed.to_vec();
            inner.extend(p.pattern_vars().iter().map(|i| i.name().to_string()));
            Term::lambda((**p).clone(), apply_env(b, env, &inner))
        }
        Term::Let(p, r, b) => {
            let r2 = apply_env(r, env, shadowed);
            let mut inner = shadowed.to_vec();
            inner.extend(p.pattern_vars().iter().map(|i| i.name().to_string()));
            Term::let_in((**p).clone(), r2, apply_env(b, env, &inner))
        }
        Term::IfLet(p, s, then, els) => {
            let s2 = apply_env(s, env, shadowed);
            let e2 = apply_env(els, env, shadowed);
            let mut inner = shadowed.to_vec();
            inner.extend(p.pattern_vars().iter().map(|i| i.name().to_string()));
            Term::if_let((**p).clone(), s2, apply_env(then, env, &inner), e2)
        }
        Term::RemoteS(a, b) => Term::RemoteS(
            Box::new(apply_env(a, env, shadowed)),
            Box::new(apply_env(b, env, shadowed)),
        ),
        Term::RemoteT(c, b) => Term::RemoteT(c.clone(), Box::new(apply_env(b, env, shadowed))),
    }
}

/// Evaluate a closed await-free term with the oracle.
pub fn oracle_eval(term: &Term) -> OracleOutcome {
    let mut o = Oracle {
        store: BTreeMap::new(),
        fuel: 1_000_000,
    };
    match o.eval(&Vec::new(), term) {
        Ok(v) => OracleOutcome::Value(readback(&v)),
        Err(OStuck) => OracleOutcome::Stuck,
    }
}

// ─── Random generators ──────────────────────────────────────────────────

/// Shapes the typed expression generator can aim for.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Ty {
    Nat,
    Bool,
    Unit,
    PairNat,
}

pub struct Gen {
    rng: ChaCha8Rng,
    counter: usize,
}

impl Gen {
    pub fn new(seed: u64) -> Gen {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            counter: 0,
        }
    }

    fn fresh_name(&mut self) -> String {
        self.counter += 1;
        format!("g{}", self.counter)
    }

    fn pick<T: Copy>(&mut self, xs: &[T]) -> T {
        xs[self.rng.gen_range(0..xs.len())]
    }

    fn literal(&mut self, ty: Ty) -> Term {
        match ty {
            Ty::Nat => Term::nat(self.rng.gen_range(0..3)),
            Ty::Bool => {
                if self.rng.gen_bool(0.5) {
                    Term::Const(Const::True)
                } else {
                    Term::Const(Const::False)
                }
            }
            Ty::Unit => Term::unit(),
            Ty::PairNat => Term::tuple(vec![
                Term::nat(self.rng.gen_range(0..2)),
                Term::nat(self.rng.gen_range(0..2)),
            ]),
        }
    }

    /// A closed, terminating expression of the given shape. Lambdas are
    /// only ever applied where they are visible or let-bound (never passed
    /// to themselves), so every application strictly shrinks.
    fn expr(&mut self, ty: Ty, depth: u32, scope: &mut Vec<(String, Ty)>) -> Term {
        if depth == 0 || self.rng.gen_bool(0.25) {
            let candidates: Vec<String> = scope
                .iter()
                .filter(|(_, t)| *t == ty)
                .map(|(n, _)| n.clone())
                .collect();
            if !candidates.is_empty() && self.rng.gen_bool(0.6) {
                let k = self.rng.gen_range(0..candidates.len());
                return Term::var(candidates[k].clone());
            }
            return self.literal(ty);
        }
        match ty {
            Ty::Nat => match self.rng.gen_range(0..4u8) {
                0 => Term::binop(
                    Const::Add,
                    self.expr(Ty::Nat, depth - 1, scope),
                    self.expr(Ty::Nat, depth - 1, scope),
                ),
                1 => self.let_chain(ty, depth, scope),
                2 => self.if_let(ty, depth, scope),
                _ => self.beta(ty, depth, scope),
            },
            Ty::Bool => match self.rng.gen_range(0..5u8) {
                0 => Term::binop(
                    Const::Eq,
                    self.expr(Ty::Nat, depth - 1, scope),
                    self.expr(Ty::Nat, depth - 1, scope),
                ),
                1 => Term::binop(
                    Const::Lt,
                    self.expr(Ty::Nat, depth - 1, scope),
                    self.expr(Ty::Nat, depth - 1, scope),
                ),
                2 => Term::binop(
                    Const::And,
                    self.expr(Ty::Bool, depth - 1, scope),
                    self.expr(Ty::Bool, depth - 1, scope),
                ),
                3 => self.let_chain(ty, depth, scope),
                _ => self.if_let(ty, depth, scope),
            },
            Ty::Unit => self.let_chain(ty, depth, scope),
            Ty::PairNat => Term::tuple(vec![
                self.expr(Ty::Nat, depth - 1, scope),
                self.expr(Ty::Nat, depth - 1, scope),
            ]),
        }
    }

    fn let_chain(&mut self, ty: Ty, depth: u32, scope: &mut Vec<(String, Ty)>) -> Term {
        let bound_ty = self.pick(&[Ty::Nat, Ty::Bool, Ty::PairNat]);
        let bound = self.expr(bound_ty, depth - 1, scope);
        let name = self.fresh_name();
        scope.push((name.clone(), bound_ty));
        let body = self.expr(ty, depth - 1, scope);
        scope.pop();
        Term::let_in(Term::var(name), bound, body)
    }

    fn if_let(&mut self, ty: Ty, depth: u32, scope: &mut Vec<(String, Ty)>) -> Term {
        let scrut_ty = self.pick(&[Ty::Nat, Ty::Bool, Ty::PairNat]);
        let scrutinee = self.expr(scrut_ty, depth - 1, scope);
        let (pattern, bound): (Term, Vec<(String, Ty)>) = match scrut_ty {
            Ty::Nat => {
                if self.rng.gen_bool(0.5) {
                    (Term::nat(self.rng.gen_range(0..3)), vec![])
                } else {
                    let n = self.fresh_name();
                    (Term::var(n.clone()), vec![(n, Ty::Nat)])
                }
            }
            Ty::Bool => (self.literal(Ty::Bool), vec![]),
            Ty::Unit => (Term::unit(), vec![]),
            Ty::PairNat => {
                let a = self.fresh_name();
                let b = self.fresh_name();
                (
                    Term::tuple(vec![Term::var(a.clone()), Term::var(b.clone())]),
                    vec![(a, Ty::Nat), (b, Ty::Nat)],
                )
            }
        };
        let depth_in = scope.len();
        scope.extend(bound);
        let then = self.expr(ty, depth - 1, scope);
        scope.truncate(depth_in);
        let els = self.expr(ty, depth - 1, scope);
        Term::if_let(pattern, scrutinee, then, els)
    }

    /// A visible beta redex `(fun x -> body) arg`.
    fn beta(&mut self, ty: Ty, depth: u32, scope: &mut Vec<(String, Ty)>) -> Term {
        let arg_ty = self.pick(&[Ty::Nat, Ty::Bool]);
        let arg = self.expr(arg_ty, depth - 1, scope);
        let name = self.fresh_name();
        scope.push((name.clone(), arg_ty));
        let body = self.expr(ty, depth - 1, scope);
        scope.pop();
        Term::app(Term::lambda(Term::var(name), body), arg)
    }

    /// A closed await-free term for the oracle cross-check.
    pub fn closed_await_free_term(&mut self) -> Term {
        let ty = self.pick(&[Ty::Nat, Ty::Bool, Ty::PairNat]);
        let mut scope = Vec::new();
        self.expr(ty, 4, &mut scope)
    }

    /// A predicate over client addresses; always satisfiable within
    /// `clients`.
    fn predicate(&mut self, clients: &[u64]) -> Term {
        let a = "a".to_string();
        match self.rng.gen_range(0..3u8) {
            0 => Term::lambda(Term::var(a), Term::Const(Const::True)),
            1 => {
                let c = self.pick(clients);
                Term::lambda(
                    Term::var(a.clone()),
                    Term::binop(Const::Eq, Term::var(a), Term::nat(c)),
                )
            }
            _ => {
                let limit = clients.iter().max().unwrap() + 1;
                Term::lambda(
                    Term::var(a.clone()),
                    Term::binop(Const::Lt, Term::var(a), Term::nat(limit)),
                )
            }
        }
    }

    /// An honest client answer whose value lies in the default universe.
    fn client_body(&mut self) -> Term {
        match self.rng.gen_range(0..4u8) {
            0 => Term::nat(self.rng.gen_range(0..3)),
            1 => Term::Const(Const::True),
            2 => Term::binop(Const::Add, Term::nat(0), Term::nat(self.rng.gen_range(0..2))),
            _ => Term::tuple(vec![Term::nat(0), Term::nat(1)]),
        }
    }

    /// A well-formed source program: optional contract state, a statement
    /// chain with up to `max_awaits` remote expressions, terminating by
    /// construction.
    pub fn source_program(&mut self, clients: &[u64], max_awaits: usize) -> Program {
        let mut defs = Vec::new();
        let mut mutables = Vec::new();
        for k in 0..self.rng.gen_range(0..3usize) {
            let name = format!("s{k}");
            defs.push(Definition {
                location: Location::Contract,
                var: Ident::mutable(name.clone()),
                value: Term::nat(self.rng.gen_range(0..2)),
            });
            mutables.push(name);
        }
        let awaits = self.rng.gen_range(0..=max_awaits);
        let mut scope: Vec<(String, Ty)> = Vec::new();
        let main = self.chain(awaits, clients, &mutables, &mut scope);
        let program = Program {
            defs,
            syndefs: Vec::new(),
            main,
        };
        debug_assert!(
            miniprisma::validate::validate_subset(&program, miniprisma::validate::Subset::Source)
                .is_ok()
        );
        program
    }

    fn chain(
        &mut self,
        awaits: usize,
        clients: &[u64],
        mutables: &[String],
        scope: &mut Vec<(String, Ty)>,
    ) -> Term {
        if awaits == 0 {
            // Wind down with a couple of plain statements and a result.
            let tail_ty = self.pick(&[Ty::Nat, Ty::Bool]);
            let mut tail = self.expr(tail_ty, 2, scope);
            if !mutables.is_empty() && self.rng.gen_bool(0.5) {
                let var = mutables[self.rng.gen_range(0..mutables.len())].clone();
                let rhs = self.expr(Ty::Nat, 2, scope);
                tail = Term::seq(Term::Set(Ident::mutable(var), Box::new(rhs)), tail);
            }
            return tail;
        }
        let pred = self.predicate(clients);
        let body = self.client_body();
        let name = self.fresh_name();
        let await_term = Term::RemoteS(Box::new(pred), Box::new(Term::thunk(body)));
        scope.push((name.clone(), Ty::Nat));
        let mut rest = self.chain(awaits - 1, clients, mutables, scope);
        scope.pop();
        if !mutables.is_empty() && self.rng.gen_bool(0.7) {
            let var = mutables[self.rng.gen_range(0..mutables.len())].clone();
            rest = Term::seq(
                Term::Set(
                    Ident::mutable(var),
                    Box::new(Term::var(name.clone())),
                ),
                rest,
            );
        }
        Term::let_in(Term::var(name), await_term, rest)
    }
}

/// The nat literal helper generators share with assertions.
pub fn nat(n: u64) -> Term {
    Term::Const(Const::Nat(Nat256::from(n)))
}
