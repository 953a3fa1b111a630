//! Render a compiled program as a human-readable FSM-style contract
//! skeleton and client stub.
//!
//! The compiled form already is a state machine: one cofn dispatch clause
//! per source await (the contract-side continuation, opening with its
//! access-control assertion) and one clfn clause (the client body). The
//! emitter prints one contract function per cofn clause — a `require` line
//! first, then the continuation statements — and one client function per
//! clfn clause. Output is Solidity-flavored pseudocode for documentation,
//! not compilable source.

use thiserror::Error;

use crate::ast::{Const, Ident, Nat256, Program, Synth, Term};
use crate::passes::dispatcher_clauses;
use crate::pretty::term_to_string;
use crate::validate::{validate_subset, Subset};

#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum EmitError {
    #[error("program is not in the target subset: {0}")]
    NotTarget(String),
    #[error("malformed compiled program: {0}")]
    Malformed(String),
}

/// One protocol phase: a contract continuation and the client code that
/// answers it, joined by the guard's state tag.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Phase {
    pub tag: Nat256,
    pub contract_clause: Term,
    pub client_clause: Term,
    /// The clause's bound answer variable, for the rendered parameter.
    pub answer_param: String,
}

/// Structured view of a compiled program.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FsmView {
    pub phases: Vec<Phase>,
    /// The trampolined chain: constructor statements ending in the first
    /// dispatch record (or the final result for await-free programs).
    pub constructor_prefix: Term,
    pub final_expr: Term,
}

/// Build the FSM view of a target-stage program.
pub fn fsm_view(program: &Program) -> Result<FsmView, EmitError> {
    validate_subset(program, Subset::Target)
        .map_err(|v| EmitError::NotTarget(v[0].to_string()))?;
    let clfn = program
        .syndefs
        .iter()
        .find(|d| d.var == Ident::Synthetic(Synth::Clfn))
        .ok_or_else(|| EmitError::Malformed("no clfn definition".into()))?;
    let cofn = program
        .syndefs
        .iter()
        .find(|d| d.var == Ident::Synthetic(Synth::Cofn))
        .ok_or_else(|| EmitError::Malformed("no cofn definition".into()))?;
    let client_clauses = dispatcher_clauses(&clfn.value);
    let contract_clauses = dispatcher_clauses(&cofn.value);
    if client_clauses.len() != contract_clauses.len() {
        return Err(EmitError::Malformed(
            "clfn/cofn clause counts differ".into(),
        ));
    }
    let mut phases = Vec::new();
    for ((cl_tag, _, cl_body), (co_tag, co_pattern, co_body)) in
        client_clauses.into_iter().zip(contract_clauses)
    {
        if cl_tag != co_tag {
            return Err(EmitError::Malformed(
                "clfn/cofn clauses disagree on dispatch tags".into(),
            ));
        }
        // The phase is identified by the guard's state tag; the dispatch
        // tag backs it up for hand-built programs without guards.
        let tag = guard_tag_of(&co_body).unwrap_or(co_tag);
        phases.push(Phase {
            tag,
            answer_param: answer_param_of(&co_pattern),
            contract_clause: co_body,
            client_clause: cl_body,
        });
    }
    let chain = match &program.main {
        Term::App(f, arg) if matches!(**f, Term::Const(Const::Trmp)) => (**arg).clone(),
        other => {
            return Err(EmitError::Malformed(format!(
                "main is not a trampoline application: {}",
                term_to_string(other)
            )))
        }
    };
    let final_expr = chain_tail(&chain).clone();
    Ok(FsmView {
        phases,
        constructor_prefix: chain,
        final_expr,
    })
}

fn chain_tail(t: &Term) -> &Term {
    match t {
        Term::Let(_, _, body) => chain_tail(body),
        other => other,
    }
}

/// The state tag compared by a clause's opening guard assertion.
fn guard_tag_of(clause_body: &Term) -> Option<Nat256> {
    if let Term::Let(pat, cond, _) = clause_body {
        if matches!(**pat, Term::Const(Const::True)) {
            return assert_state_tag(cond);
        }
    }
    None
}

fn assert_state_tag(cond: &Term) -> Option<Nat256> {
    // state == t && who(sender)
    if let Term::App(f, arg) = cond {
        if matches!(**f, Term::Const(Const::And)) {
            if let Term::Pair(lhs, _) = &**arg {
                if let Term::App(f2, arg2) = &**lhs {
                    if matches!(**f2, Term::Const(Const::Eq)) {
                        if let Term::Pair(a, rest) = &**arg2 {
                            if matches!(**a, Term::Get(Ident::Synthetic(Synth::State))) {
                                if let Term::Pair(b, _) = &**rest {
                                    if let Term::Const(Const::Nat(n)) = &**b {
                                        return Some(n.clone());
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    None
}

/// Whether a term is the guard assertion shape, for the `require` rendering.
fn is_guard_assert(cond: &Term) -> Option<Nat256> {
    assert_state_tag(cond)
}

/// The answer slot of a cofn clause pattern `tag :: x :: fvs`.
fn answer_param_of(pattern: &Term) -> String {
    if let Term::Pair(_, rest) = pattern {
        if let Term::Pair(x, _) = &**rest {
            if let Term::Var(Ident::Pure(name)) = &**x {
                return name.clone();
            }
        }
    }
    "answer".to_string()
}

fn dispatch_tag_of_record(comp: &Term) -> Option<&Nat256> {
    if let Term::Pair(head, _) = comp {
        if let Term::Const(Const::Nat(n)) = &**head {
            return Some(n);
        }
    }
    None
}

fn render_variable(id: &Ident) -> String {
    id.name().to_string()
}

/// Render one statement-spine term as indented pseudocode lines, ending
/// with the chain's tail expression.
fn render_body(t: &Term, indent: &str, out: &mut String) {
    let mut cur = t;
    loop {
        match cur {
            Term::Let(pat, bound, body) => {
                match &**pat {
                    Term::Const(Const::True) => {
                        if let Some(tag) = is_guard_assert(bound) {
                            out.push_str(indent);
                            out.push_str(&format!("require(state == {tag} && who(sender));\n"));
                        } else {
                            out.push_str(indent);
                            out.push_str(&format!("require({});\n", term_to_string(bound)));
                        }
                    }
                    Term::Const(Const::Unit) => match &**bound {
                        Term::Set(var, rhs) => {
                            out.push_str(indent);
                            out.push_str(&format!(
                                "{} = {};\n",
                                render_variable(var),
                                term_to_string(rhs)
                            ));
                        }
                        other => {
                            out.push_str(indent);
                            out.push_str(&format!("{};\n", term_to_string(other)));
                        }
                    },
                    pat_term => {
                        out.push_str(indent);
                        out.push_str(&format!(
                            "var {} = {};\n",
                            term_to_string(pat_term),
                            term_to_string(bound)
                        ));
                    }
                }
                cur = body;
            }
            last => {
                render_tail(last, indent, out);
                return;
            }
        }
    }
}

fn render_tail(t: &Term, indent: &str, out: &mut String) {
    // Done record: the machine halts with a result.
    if let Term::Pair(head, rest) = t {
        if matches!(**head, Term::Const(Const::Done)) {
            out.push_str(indent);
            out.push_str(&format!(
                "return {}; // done\n",
                term_to_string(&Term::pair((**head).clone(), (**rest).clone()))
            ));
            return;
        }
        // More record: hand off to the next phase.
        if matches!(**head, Term::Const(Const::More)) {
            if let Term::Pair(c1, rest2) = &**rest {
                if let Term::Pair(c2, _) = &**rest2 {
                    let next = dispatch_tag_of_record(c2)
                        .map(|t| t.to_string())
                        .unwrap_or_else(|| "?".to_string());
                    out.push_str(indent);
                    out.push_str(&format!(
                        "// awaiting client: clfn record {}\n",
                        term_to_string(c1)
                    ));
                    out.push_str(indent);
                    out.push_str(&format!("// next continuation: cofn record {next}\n"));
                    return;
                }
            }
        }
    }
    out.push_str(indent);
    out.push_str(&format!("return {};\n", term_to_string(t)));
}

/// Render a compiled program as `(contract_text, client_text)`.
/// One contract function per phase, opening with its require clause; one
/// client function per phase; the constructor from the pre-dispatch prefix.
pub fn emit_fsm(program: &Program) -> Result<(String, String), EmitError> {
    let view = fsm_view(program)?;

    let mut contract = String::new();
    contract.push_str("// trampolined FSM contract (generated pseudocode)\n");
    for d in &program.defs {
        if d.location == crate::ast::Location::Contract {
            contract.push_str(&format!(
                "var {} = {};\n",
                render_variable(&d.var),
                term_to_string(&d.value)
            ));
        }
    }
    contract.push_str("var state = 0;\nvar who;\nvar sender;\n\n");
    contract.push_str("constructor() {\n");
    render_body(&view.constructor_prefix, "  ", &mut contract);
    contract.push_str("}\n");
    for (k, phase) in view.phases.iter().enumerate() {
        contract.push_str(&format!(
            "\nfunction phase_{}({}) {{\n",
            k + 1,
            phase.answer_param
        ));
        render_body(&phase.contract_clause, "  ", &mut contract);
        contract.push_str("}\n");
    }

    let mut client = String::new();
    client.push_str("// client stubs (generated pseudocode)\n");
    for d in &program.defs {
        if d.location == crate::ast::Location::Client {
            client.push_str(&format!(
                "var {} = {};\n",
                render_variable(&d.var),
                term_to_string(&d.value)
            ));
        }
    }
    if view.phases.is_empty() {
        client.push_str("// no client interaction\n");
    }
    for (k, phase) in view.phases.iter().enumerate() {
        client.push_str(&format!("\nfunction phase_{}() {{\n", k + 1));
        render_body(&phase.client_clause, "  ", &mut client);
        client.push_str("}\n");
    }

    Ok((contract, client))
}
