//! Deterministic pretty-printer for every pipeline stage.
//!
//! Source-stage output reparses to the same program (up to
//! canonicalization). Mid-pipeline and target programs render the
//! constructs the grammar has no surface form for (`awaitT`, `this.state`,
//! `>>=`, `trmp`, `More`/`Done`) and are not meant to be parsed back.

use crate::ast::{Const, Ident, Program, Term};

/// Pipeline stage markers for dumps.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Stage {
    Source,
    Hybrid,
    Target,
}

impl Stage {
    fn label(self) -> &'static str {
        match self {
            Stage::Source => "source",
            Stage::Hybrid => "hybrid",
            Stage::Target => "target",
        }
    }
}

// Binding tightness: statements 0, cons 1, operators 2, application 3,
// atoms 4. A node is parenthesized when rendered at a level above its own.
fn prec(t: &Term) -> u8 {
    match t {
        Term::Const(_) | Term::Var(_) | Term::Get(_) => 4,
        Term::RemoteS(_, _) | Term::RemoteT(_, _) => 4,
        Term::Pair(_, _) => {
            if tuple_items(t).is_some() {
                4
            } else {
                1
            }
        }
        Term::App(f, arg) => {
            if operator_form(f, arg).is_some() || bind_form(t).is_some() {
                2
            } else {
                3
            }
        }
        Term::Lambda(_, _) | Term::Let(_, _, _) | Term::IfLet(_, _, _, _) | Term::Set(_, _) => 0,
    }
}

/// `(a, b, ..)` when the pair chain is right-nested, unit-terminated, and
/// has at least two elements.
fn tuple_items(t: &Term) -> Option<Vec<&Term>> {
    let mut items = Vec::new();
    let mut cur = t;
    while let Term::Pair(head, tail) = cur {
        items.push(&**head);
        cur = tail;
    }
    if matches!(cur, Term::Const(Const::Unit)) && items.len() >= 2 {
        Some(items)
    } else {
        None
    }
}

fn operator_form<'a>(f: &'a Term, arg: &'a Term) -> Option<(&'static str, &'a Term, &'a Term)> {
    let op = match f {
        Term::Const(Const::Add) => "+",
        Term::Const(Const::Eq) => "==",
        Term::Const(Const::Lt) => "<",
        Term::Const(Const::And) => "&&",
        _ => return None,
    };
    if let Term::Pair(a, rest) = arg {
        if let Term::Pair(b, unit) = &**rest {
            if matches!(**unit, Term::Const(Const::Unit)) {
                return Some((op, a, b));
            }
        }
    }
    None
}

fn bind_form(t: &Term) -> Option<(&Term, &Term)> {
    if let Term::App(outer, k) = t {
        if let Term::App(head, m) = &**outer {
            if matches!(**head, Term::Const(Const::Bind)) {
                return Some((m, k));
            }
        }
    }
    None
}

fn const_str(c: &Const) -> String {
    match c {
        Const::Nat(n) => n.to_string(),
        Const::True => "true".into(),
        Const::False => "false".into(),
        Const::Unit => "unit".into(),
        Const::And => "(&&)".into(),
        Const::Add => "(+)".into(),
        Const::Eq => "(==)".into(),
        Const::Lt => "(<)".into(),
        Const::Try => "try".into(),
        Const::Bind => "(>>=)".into(),
        Const::Trmp => "trmp".into(),
        Const::Done => "Done".into(),
        Const::More => "More".into(),
    }
}

fn render_pattern(p: &Term) -> String {
    if let Some(items) = tuple_items(p) {
        let inner: Vec<String> = items.into_iter().map(render_pattern).collect();
        return format!("({})", inner.join(", "));
    }
    match p {
        Term::Const(c) => const_str(c),
        Term::Var(id) => id.name().to_string(),
        Term::Pair(a, b) => format!("{} :: {}", render_pattern(a), render_pattern(b)),
        other => format!("<bad-pattern {other:?}>"),
    }
}

/// Statement operands the parser accepts undelimited (assignments and
/// lambdas); everything else statement-level needs parentheses there.
fn render_stmt_operand(t: &Term, out: &mut String) {
    match t {
        Term::Set(_, _) | Term::Lambda(_, _) => render(t, 0, out),
        _ => render(t, 1, out),
    }
}

fn render(t: &Term, min_level: u8, out: &mut String) {
    let level = prec(t);
    if level < min_level {
        out.push('(');
        render_at(t, out);
        out.push(')');
    } else {
        render_at(t, out);
    }
}

fn render_at(t: &Term, out: &mut String) {
    match t {
        Term::Const(c) => out.push_str(&const_str(c)),
        Term::Var(id) => out.push_str(id.name()),
        Term::Get(id) => {
            out.push_str("this.");
            out.push_str(id.name());
        }
        Term::Set(id, rhs) => {
            out.push_str("this.");
            out.push_str(id.name());
            out.push_str(" := ");
            render(rhs, 1, out);
        }
        Term::Pair(_, _) => {
            if let Some(items) = tuple_items(t) {
                out.push('(');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    render(item, 0, out);
                }
                out.push(')');
            } else if let Term::Pair(a, b) = t {
                render(a, 2, out);
                out.push_str(" :: ");
                render(b, 1, out);
            }
        }
        Term::Lambda(p, body) => {
            out.push_str("fun ");
            out.push_str(&render_pattern(p));
            out.push_str(" -> ");
            render(body, 1, out);
        }
        Term::App(f, arg) => {
            if let Some((op, a, b)) = operator_form(f, arg) {
                render(a, 3, out);
                out.push(' ');
                out.push_str(op);
                out.push(' ');
                render(b, 3, out);
            } else if let Some((m, k)) = bind_form(t) {
                render(m, 3, out);
                out.push_str(" >>= ");
                render(k, 3, out);
            } else {
                render(f, 3, out);
                out.push(' ');
                render(arg, 4, out);
            }
        }
        Term::Let(p, bound, body) => {
            match &**p {
                Term::Const(Const::Unit) => {
                    render_stmt_operand(bound, out);
                    out.push_str("; ");
                    render(body, 0, out);
                }
                Term::Const(Const::True) => {
                    out.push_str("assert(");
                    render(bound, 0, out);
                    out.push_str("); ");
                    render(body, 0, out);
                }
                _ => {
                    out.push_str("let ");
                    out.push_str(&render_pattern(p));
                    out.push_str(" = ");
                    render_stmt_operand(bound, out);
                    out.push_str("; ");
                    render(body, 0, out);
                }
            }
        }
        Term::IfLet(p, s, then, els) => {
            out.push_str("if let ");
            out.push_str(&render_pattern(p));
            out.push_str(" = ");
            render_stmt_operand(s, out);
            out.push_str(" then ");
            render(then, 0, out);
            out.push_str(" else ");
            render(els, 0, out);
        }
        Term::RemoteS(pred, thunk) => {
            out.push_str("await(");
            render(pred, 0, out);
            out.push_str(") { ");
            match &**thunk {
                Term::Lambda(p, body) if matches!(**p, Term::Const(Const::Unit)) => {
                    render(body, 0, out)
                }
                other => render(other, 0, out),
            }
            out.push_str(" }");
        }
        Term::RemoteT(client, thunk) => {
            out.push_str("awaitT(");
            out.push_str(&client.to_string());
            out.push_str(") { ");
            match &**thunk {
                Term::Lambda(p, body) if matches!(**p, Term::Const(Const::Unit)) => {
                    render(body, 0, out)
                }
                other => render(other, 0, out),
            }
            out.push_str(" }");
        }
    }
}

/// Render one term on a single line.
pub fn term_to_string(t: &Term) -> String {
    let mut out = String::new();
    render(t, 0, &mut out);
    out
}

/// Render a whole program with a stage marker. The main expression's
/// statement spine gets one line per binding.
pub fn pretty(program: &Program, stage: Stage) -> String {
    let mut out = String::new();
    out.push_str("-- stage: ");
    out.push_str(stage.label());
    out.push('\n');
    for d in program.defs.iter().chain(program.syndefs.iter()) {
        out.push_str(match d.location {
            crate::ast::Location::Contract => "@co this.",
            crate::ast::Location::Client => "@cl this.",
        });
        out.push_str(d.var.name());
        out.push_str(" = ");
        render(&d.value, 1, &mut out);
        out.push_str(";\n");
    }
    out.push_str("main {\n");
    render_spine(&program.main, &mut out);
    out.push_str("}\n");
    out
}

/// One statement per line down the let chain of a main expression.
fn render_spine(t: &Term, out: &mut String) {
    let mut cur = t;
    loop {
        match cur {
            Term::Let(p, bound, body) => {
                out.push_str("  ");
                match &**p {
                    Term::Const(Const::Unit) => render_stmt_operand(bound, out),
                    Term::Const(Const::True) => {
                        out.push_str("assert(");
                        render(bound, 0, out);
                        out.push(')');
                    }
                    _ => {
                        out.push_str("let ");
                        out.push_str(&render_pattern(p));
                        out.push_str(" = ");
                        render_stmt_operand(bound, out);
                    }
                }
                out.push_str(";\n");
                cur = body;
            }
            last => {
                out.push_str("  ");
                render(last, 0, out);
                out.push('\n');
                return;
            }
        }
    }
}

/// Mutable-vs-synthetic display helper for events and reports.
pub fn ident_to_string(id: &Ident) -> String {
    id.name().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Const, Term};
    use crate::parser::parse;

    #[test]
    fn nat_renders_bare() {
        assert_eq!(term_to_string(&Term::nat(0)), "0");
    }

    #[test]
    fn operator_renders_infix() {
        let t = Term::binop(Const::Add, Term::nat(2), Term::nat(3));
        assert_eq!(term_to_string(&t), "2 + 3");
    }

    #[test]
    fn nested_operators_parenthesized() {
        let t = Term::binop(
            Const::Add,
            Term::binop(Const::Add, Term::nat(1), Term::nat(2)),
            Term::nat(3),
        );
        assert_eq!(term_to_string(&t), "(1 + 2) + 3");
    }

    #[test]
    fn remote_t_renders_as_await_t() {
        let t = Term::RemoteT(crate::ast::Nat256::from(3), Box::new(Term::thunk(Term::nat(1))));
        assert_eq!(term_to_string(&t), "awaitT(3) { 1 }");
    }

    #[test]
    fn statement_chain_round_trips() {
        let src = "@co this.i = 0;\nmain {\n  let r = await(fun a -> true) { 1 };\n  this.i := r;\n  r\n}";
        let p = parse(src).unwrap();
        let printed = pretty(&p, Stage::Source);
        let p2 = parse(&printed).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn sequence_head_let_is_parenthesized() {
        // (let x = 1; x); 2 must not reassociate on reparse.
        let t = Term::seq(
            Term::let_in(Term::var("x"), Term::nat(1), Term::var("x")),
            Term::nat(2),
        );
        let printed = term_to_string(&t);
        let reparsed = parse(&format!("main {{ {printed} }}")).unwrap();
        assert_eq!(reparsed.main, t);
    }
}
