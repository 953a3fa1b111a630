//! Language-subset and structural validation.
//!
//! The hybrid calculus has a source fragment (no binds, trampolines,
//! Done/More tags, ↓t, or synthetic identifiers) and a target fragment (no
//! remote expressions or binds). Validation walks the whole program and
//! reports every violation with a path into the AST.

use std::fmt;

use crate::ast::{Const, Definition, Ident, Program, Term};

/// Which fragment of the hybrid language to check against.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Subset {
    Source,
    Target,
    Hybrid,
}

/// A single violation, with a human-readable path to the offending node.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Check a program against a subset. Structural invariants (pattern shape
/// and linearity, value-ness of definitions, remote placement, definition
/// namespaces) are checked for every subset; the source and target checks
/// add their constant/node exclusions.
pub fn validate_subset(program: &Program, subset: Subset) -> Result<(), Vec<Violation>> {
    let mut v = Validator {
        subset,
        violations: Vec::new(),
    };
    v.program(program);
    if v.violations.is_empty() {
        Ok(())
    } else {
        Err(v.violations)
    }
}

struct Validator {
    subset: Subset,
    violations: Vec<Violation>,
}

/// Positions a term can sit in; remotes are only legal in main-expression
/// position (not under lambdas, remote bodies/predicates, or if-let
/// branches, which are all sub-expressions).
#[derive(Clone, Copy, PartialEq, Eq)]
enum Pos {
    Main,
    Sub,
}

impl Validator {
    fn flag(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn program(&mut self, p: &Program) {
        for (k, d) in p.defs.iter().enumerate() {
            let path = format!("defs[{k}]");
            if !matches!(d.var, Ident::Mutable(_)) {
                self.flag(&path, "d-definitions bind mutable identifiers only");
            }
            self.definition(d, &path);
        }
        for (k, d) in p.syndefs.iter().enumerate() {
            let path = format!("syndefs[{k}]");
            if !matches!(d.var, Ident::Synthetic(_)) {
                self.flag(&path, "b-definitions bind synthetic identifiers only");
            }
            if self.subset == Subset::Source {
                self.flag(&path, "synthetic definitions are not in the source subset");
            }
            self.definition(d, &path);
        }
        self.term(&p.main, Pos::Main, "main");
    }

    fn definition(&mut self, d: &Definition, path: &str) {
        if !d.value.is_value() {
            self.flag(path, "definition right-hand sides must be values");
        }
        self.term(&d.value, Pos::Sub, path);
    }

    fn constant(&mut self, c: &Const, path: &str) {
        if self.subset == Subset::Source {
            match c {
                Const::Bind => self.flag(path, ">>= not in source subset"),
                Const::Trmp => self.flag(path, "trmp not in source subset"),
                Const::Done => self.flag(path, "Done not in source subset"),
                Const::More => self.flag(path, "More not in source subset"),
                _ => {}
            }
        }
        if self.subset == Subset::Target && *c == Const::Bind {
            self.flag(path, ">>= not in target subset");
        }
    }

    fn heap_var(&mut self, id: &Ident, path: &str) {
        match id {
            Ident::Mutable(_) => {}
            Ident::Synthetic(_) => {
                if self.subset == Subset::Source {
                    self.flag(path, "synthetic identifiers not in source subset");
                }
            }
            Ident::Pure(_) => self.flag(path, "heap access through a pure identifier"),
        }
    }

    fn pattern(&mut self, t: &Term, path: &str) {
        if !t.is_pattern() {
            self.flag(path, "patterns contain only constants, pairs, identifiers");
        } else if !t.is_linear_pattern() {
            self.flag(path, "pattern binds an identifier more than once");
        }
        // Subset exclusions apply to constants inside patterns too.
        fn consts<'a>(t: &'a Term, out: &mut Vec<&'a Const>) {
            match t {
                Term::Const(c) => out.push(c),
                Term::Pair(a, b) => {
                    consts(a, out);
                    consts(b, out);
                }
                _ => {}
            }
        }
        let mut cs = Vec::new();
        consts(t, &mut cs);
        for c in cs {
            self.constant(c, path);
        }
    }

    fn term(&mut self, t: &Term, pos: Pos, path: &str) {
        match t {
            Term::Const(c) => self.constant(c, path),
            Term::Var(id) => {
                if !matches!(id, Ident::Pure(_)) {
                    self.flag(path, "variable occurrence of a non-pure identifier");
                }
            }
            Term::Get(id) => self.heap_var(id, path),
            Term::Set(id, rhs) => {
                self.heap_var(id, path);
                self.term(rhs, pos, &format!("{path}/set.rhs"));
            }
            Term::Pair(a, b) => {
                self.term(a, pos, &format!("{path}/pair.head"));
                self.term(b, pos, &format!("{path}/pair.tail"));
            }
            Term::Lambda(p, b) => {
                self.pattern(p, &format!("{path}/fun.pattern"));
                self.term(b, Pos::Sub, &format!("{path}/fun.body"));
            }
            Term::App(f, a) => {
                self.term(f, pos, &format!("{path}/app.fn"));
                self.term(a, pos, &format!("{path}/app.arg"));
            }
            Term::Let(p, rhs, body) => {
                self.pattern(p, &format!("{path}/let.pattern"));
                self.term(rhs, pos, &format!("{path}/let.bound"));
                self.term(body, pos, &format!("{path}/let.body"));
            }
            Term::IfLet(p, s, then, els) => {
                self.pattern(p, &format!("{path}/iflet.pattern"));
                self.term(s, pos, &format!("{path}/iflet.scrutinee"));
                self.term(then, Pos::Sub, &format!("{path}/iflet.then"));
                self.term(els, Pos::Sub, &format!("{path}/iflet.else"));
            }
            Term::RemoteS(pred, thunk) => {
                if self.subset == Subset::Target {
                    self.flag(path, "↓s not in target subset");
                }
                if pos != Pos::Main {
                    self.flag(path, "↓s outside main-expression position");
                }
                self.term(pred, Pos::Sub, &format!("{path}/awaits.pred"));
                self.thunk(thunk, &format!("{path}/awaits.body"));
            }
            Term::RemoteT(_, thunk) => {
                match self.subset {
                    Subset::Source => self.flag(path, "↓t not in source subset"),
                    Subset::Target => self.flag(path, "↓t not in target subset"),
                    Subset::Hybrid => {}
                }
                if pos != Pos::Main {
                    self.flag(path, "↓t outside main-expression position");
                }
                self.thunk(thunk, &format!("{path}/awaitt.body"));
            }
        }
    }

    fn thunk(&mut self, t: &Term, path: &str) {
        match t {
            Term::Lambda(p, body) => {
                if !matches!(**p, Term::Const(Const::Unit)) {
                    self.flag(path, "remote body must be a unit thunk");
                }
                self.term(body, Pos::Sub, path);
            }
            _ => self.flag(path, "remote body must be a unit thunk"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Const, Program, Term};

    #[test]
    fn source_allows_remote_s() {
        let p = Program::from_main(Term::let_in(
            Term::var("r"),
            Term::RemoteS(
                Box::new(Term::lambda(Term::var("a"), Term::Const(Const::True))),
                Box::new(Term::thunk(Term::nat(1))),
            ),
            Term::var("r"),
        ));
        assert!(validate_subset(&p, Subset::Source).is_ok());
    }

    #[test]
    fn source_rejects_trmp() {
        let p = Program::from_main(Term::app(Term::Const(Const::Trmp), Term::nat(1)));
        let errs = validate_subset(&p, Subset::Source).unwrap_err();
        assert!(errs.iter().any(|v| v.message.contains("trmp")));
    }

    #[test]
    fn source_rejects_synthetic_access() {
        let p = Program::from_main(Term::Get(Ident::Synthetic(crate::ast::Synth::State)));
        assert!(validate_subset(&p, Subset::Source).is_err());
    }

    #[test]
    fn remote_under_lambda_rejected() {
        let remote = Term::RemoteS(
            Box::new(Term::lambda(Term::var("a"), Term::Const(Const::True))),
            Box::new(Term::thunk(Term::nat(1))),
        );
        let p = Program::from_main(Term::lambda(Term::var("x"), remote));
        let errs = validate_subset(&p, Subset::Source).unwrap_err();
        assert!(errs.iter().any(|v| v.message.contains("main-expression")));
    }

    #[test]
    fn nonlinear_pattern_rejected() {
        let p = Program::from_main(Term::let_in(
            Term::pair(Term::var("x"), Term::var("x")),
            Term::pair(Term::nat(1), Term::nat(2)),
            Term::var("x"),
        ));
        let errs = validate_subset(&p, Subset::Hybrid).unwrap_err();
        assert!(errs.iter().any(|v| v.message.contains("more than once")));
    }
}
