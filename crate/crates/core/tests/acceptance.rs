//! Acceptance suite: every criterion runs sequentially from one test,
//! printing one PASS/FAIL line each; the test fails if any criterion does.
//! Run with `cargo test --test acceptance -- --nocapture` for the summary.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use miniprisma::ast::{Program, Term};
use miniprisma::canon::canonicalize;
use miniprisma::equiv::{
    check_against_compiled, check_pass_equiv, check_secure, default_universe, nondisagree,
    trace_set, Pass,
};
use miniprisma::interp::{step_shared, Bounds, Configuration, StepOutcome};
use miniprisma::parser::parse;
use miniprisma::passes::{
    compile, count_awaits, dispatcher_clauses, is_mnf, mnf_program, strip_guard_assert,
    FreshSupply,
};
use miniprisma::pretty::{pretty, Stage};
use miniprisma::validate::{validate_subset, Subset};
use miniprisma::{Const, Ident, Synth};

use support::{load_corpus, terminating_corpus, Gen};

const CLIENTS: [u64; 2] = [1, 2];
const STEP_BUDGET: u64 = 10_000;

fn default_bounds() -> Bounds {
    let mut b = Bounds::new(CLIENTS.to_vec(), default_universe(&CLIENTS));
    b.step_budget = STEP_BUDGET;
    b
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(&str, fn() -> String)> = vec![
        ("theorem-1-desk-scale", theorem_1_at_desk_scale),
        ("lemmas-1-5", lemmas_1_to_5),
        ("guard-mutation", guard_mutation_detected),
        ("structural-pipeline", structural_pipeline_checks),
        ("interpreter-oracle", interpreter_oracle_equivalence),
        ("monotonicity-and-exclusion", monotonicity_and_synthetic_exclusion),
        ("step-indexed", step_indexed_agrees_with_trace_equality),
        ("parser-round-trip", parser_round_trip),
        ("emit-fsm-goldens", emit_fsm_goldens),
    ];
    let mut failures = Vec::new();
    let quiet = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    for (name, run) in criteria {
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".to_string());
                println!("[FAIL] {name}: {msg}");
                failures.push(name);
            }
        }
    }
    std::panic::set_hook(quiet);
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

/// 100 seeded random source programs, ≤ 40 main-expression nodes, ≤ 3
/// awaits each.
fn random_programs() -> Vec<(String, Program)> {
    let mut g = Gen::new(0xC0FFEE);
    let mut out = Vec::new();
    while out.len() < 100 {
        let p = g.source_program(&CLIENTS, 3);
        if p.main.size() <= 40 {
            out.push((format!("random_{:03}", out.len()), p));
        }
    }
    out
}

fn theorem_1_at_desk_scale() -> String {
    let bounds = default_bounds();
    let started = Instant::now();
    let mut checked = 0usize;
    let mut slowest = (String::new(), 0u128);
    for (name, p) in load_corpus().into_iter().chain(random_programs()) {
        let t0 = Instant::now();
        let report = check_secure(&p, &bounds, 0).unwrap();
        let elapsed = t0.elapsed().as_millis();
        if elapsed > slowest.1 {
            slowest = (name.clone(), elapsed);
        }
        assert!(
            report.conclusive,
            "{name}: exploration inconclusive (budget or path limit)"
        );
        assert!(
            report.equal,
            "{name}: trace sets differ; left_only={:?} right_only={:?}",
            report.left_only, report.right_only
        );
        assert!(
            elapsed < 5_000,
            "{name}: took {elapsed} ms, budget is 5 s per program"
        );
        checked += 1;
    }
    assert!(checked >= 110, "only {checked} programs checked");
    format!(
        "{checked} programs equal+conclusive in {:?} (slowest: {} at {} ms)",
        started.elapsed(),
        slowest.0,
        slowest.1
    )
}

fn lemmas_1_to_5() -> String {
    let bounds = default_bounds();
    let passes = [
        Pass::Assoc,
        Pass::Mnf,
        Pass::MnfProgram,
        Pass::Comp,
        Pass::CompPrime,
    ];
    let programs: Vec<_> = load_corpus().into_iter().chain(random_programs()).collect();
    let started = Instant::now();
    let mut checked = 0usize;
    for pass in passes {
        for (name, p) in &programs {
            let report = check_pass_equiv(p, pass, &bounds, 0).unwrap();
            assert!(
                report.conclusive && report.equal,
                "{} on {name}: equal={} conclusive={} left_only={:?} right_only={:?}",
                pass.name(),
                report.equal,
                report.conclusive,
                report.left_only,
                report.right_only
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 5 * programs.len());
    format!("{checked} pass instances equal+conclusive in {:?}", started.elapsed())
}

fn guard_mutation_detected() -> String {
    let bounds = default_bounds();
    let mut mutants = 0usize;
    for name in ["two_phase", "gatekeepers"] {
        let (_, p) = load_corpus()
            .into_iter()
            .find(|(n, _)| n == name)
            .unwrap();
        let mut fresh = FreshSupply::new();
        let compiled = compile(p.clone(), &mut fresh).unwrap();
        let phases = count_awaits(&p.main);
        for k in 0..phases {
            let weakened = strip_guard_assert(&compiled, k)
                .unwrap_or_else(|| panic!("{name}: no assert in clause {k}"));
            let report = check_against_compiled(&p, &weakened, &bounds).unwrap();
            assert!(report.conclusive, "{name} clause {k}: inconclusive");
            assert!(
                !report.equal,
                "{name}: stripping the clause-{k} assert went undetected"
            );
            assert!(
                !report.right_only.is_empty(),
                "{name} clause {k}: no attack witness on the weakened side"
            );
            mutants += 1;
        }
    }
    assert_eq!(mutants, 5);
    format!("{mutants} single-assert mutants all detected with witnesses")
}

fn structural_pipeline_checks() -> String {
    let programs: Vec<_> = load_corpus().into_iter().chain(random_programs()).collect();
    let mut checked = 0usize;
    for (name, p) in &programs {
        let awaits = count_awaits(&p.main);
        let mut fresh = FreshSupply::new();

        let staged = mnf_program(p.clone(), &mut fresh).unwrap();
        let chain = match &staged.main {
            Term::App(f, arg) if matches!(**f, Term::Const(Const::Trmp)) => arg,
            other => panic!("{name}: MNF main is not a trampoline application: {other:?}"),
        };
        assert!(is_mnf(chain), "{name}: mnf_program output violates is_mnf");

        let compiled = compile(p.clone(), &mut FreshSupply::new()).unwrap();
        assert!(
            validate_subset(&compiled, Subset::Target).is_ok(),
            "{name}: compiled program leaves the target subset"
        );

        // Guard tags: one per await, pairwise distinct.
        let tags = guard_tags(&compiled);
        assert_eq!(tags.len(), awaits, "{name}: guard tag count != await count");
        let mut dedup = tags.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), tags.len(), "{name}: guard tags not distinct");

        for synth in [Synth::Clfn, Synth::Cofn] {
            let def = compiled
                .syndefs
                .iter()
                .find(|d| d.var == Ident::Synthetic(synth))
                .unwrap_or_else(|| panic!("{name}: missing dispatcher"));
            let clauses = dispatcher_clauses(&def.value);
            assert_eq!(
                clauses.len(),
                awaits,
                "{name}: dispatcher clause count != await count"
            );
        }
        checked += 1;
    }
    assert_eq!(checked, programs.len());
    format!("{checked} programs: target-valid, MNF shape, unique tags, clause counts")
}

/// Non-zero state tags written anywhere in a program, in syntactic order.
fn guard_tags(p: &Program) -> Vec<miniprisma::Nat256> {
    fn walk(t: &Term, out: &mut Vec<miniprisma::Nat256>) {
        if let Term::Set(Ident::Synthetic(Synth::State), rhs) = t {
            if let Term::Const(Const::Nat(n)) = &**rhs {
                if !n.is_zero() {
                    out.push(n.clone());
                }
            }
        }
        match t {
            Term::Pair(a, b) | Term::App(a, b) | Term::Lambda(a, b) | Term::RemoteS(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Term::Set(_, r) | Term::RemoteT(_, r) => walk(r, out),
            Term::Let(p2, r, b) => {
                walk(p2, out);
                walk(r, out);
                walk(b, out);
            }
            Term::IfLet(p2, s, t2, e) => {
                walk(p2, out);
                walk(s, out);
                walk(t2, out);
                walk(e, out);
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    for d in &p.syndefs {
        walk(&d.value, &mut out);
    }
    walk(&p.main, &mut out);
    out
}

fn interpreter_oracle_equivalence() -> String {
    let mut g = Gen::new(0xBEEF);
    let mut agreed = 0usize;
    for k in 0..100 {
        let term = g.closed_await_free_term();
        let subst_result = run_substitution_evaluator(term.clone());
        let oracle_result = support::oracle_eval(&term);
        let ok = match (&subst_result, &oracle_result) {
            (Ok(v), support::OracleOutcome::Value(w)) => v == w,
            (Err(_), support::OracleOutcome::Stuck) => true,
            _ => false,
        };
        assert!(
            ok,
            "term {k} diverges between evaluators:\n  term: {term:?}\n  substitution: {subst_result:?}\n  oracle: {oracle_result:?}"
        );
        agreed += 1;
    }
    assert_eq!(agreed, 100);
    "substitution and environment evaluators agree on 100 random closed terms".to_string()
}

fn run_substitution_evaluator(term: Term) -> Result<Term, String> {
    let mut cfg = Configuration {
        normal_trace: Vec::new(),
        synthetic_trace: Vec::new(),
        location: 0,
        term,
    };
    for _ in 0..1_000_000 {
        match step_shared(&cfg) {
            StepOutcome::Value(c) => return Ok(c.term),
            StepOutcome::Next(mut s) => cfg = s.remove(0),
            StepOutcome::Stuck(r) => return Err(r),
            StepOutcome::BudgetExceeded => return Err("budget".into()),
        }
    }
    Err("fuel exhausted".into())
}

fn monotonicity_and_synthetic_exclusion() -> String {
    let mut checked = 0usize;
    for (name, p) in terminating_corpus() {
        // Budget monotonicity.
        let mut small = default_bounds();
        small.step_budget = 60;
        let mut large = default_bounds();
        large.step_budget = 120;
        let ts_small = trace_set(&p, &small).unwrap();
        let ts_large = trace_set(&p, &large).unwrap();
        assert!(
            ts_small.entries.is_subset(&ts_large.entries),
            "{name}: entries lost when the budget grew"
        );

        // Universe monotonicity.
        let b1 = default_bounds();
        let mut b2 = default_bounds();
        b2.universe.push(Term::nat(17));
        b2.universe.sort();
        b2.universe.dedup();
        let ts1 = trace_set(&p, &b1).unwrap();
        let ts2 = trace_set(&p, &b2).unwrap();
        assert!(
            ts1.entries.is_subset(&ts2.entries),
            "{name}: entries lost when the universe grew"
        );

        // Synthetic events never stored.
        for (trace, _) in ts2.entries.iter().chain(ts1.entries.iter()) {
            assert!(
                trace.iter().all(|e| !e.is_synthetic()),
                "{name}: a stored trace contains a synthetic write"
            );
        }
        checked += 1;
    }
    assert_eq!(checked, terminating_corpus().len());
    format!("{checked} corpus programs: budget/universe monotone, synthetic-free traces")
}

fn step_indexed_agrees_with_trace_equality() -> String {
    let bounds = default_bounds();
    let mut checked = 0usize;
    for (name, p) in terminating_corpus() {
        let mut fresh = FreshSupply::new();
        let compiled = compile(p.clone(), &mut fresh).unwrap();
        let equal = check_secure(&p, &bounds, 0).unwrap().equal;
        let nd = nondisagree(&p, &compiled, STEP_BUDGET, &bounds).unwrap();
        assert_eq!(
            nd, equal,
            "{name}: nondisagree at n=budget disagrees with trace equality"
        );
        checked += 1;
    }
    // The divergent program never disagrees with its compilation.
    let (_, looping) = load_corpus()
        .into_iter()
        .find(|(n, _)| n == "loop_forever")
        .unwrap();
    let mut fresh = FreshSupply::new();
    let compiled = compile(looping.clone(), &mut fresh).unwrap();
    for n in [100, 1000] {
        assert!(
            nondisagree(&looping, &compiled, n, &bounds).unwrap(),
            "loop_forever disagrees with its compilation at n={n}"
        );
    }
    assert_eq!(checked, terminating_corpus().len());
    format!("{checked} terminating programs agree; diverger non-disagrees at 100 and 1000")
}

fn parser_round_trip() -> String {
    let mut checked = 0usize;
    for (name, p) in load_corpus() {
        let printed = pretty(&p, Stage::Source);
        let reparsed = parse(&printed)
            .unwrap_or_else(|e| panic!("{name}: pretty output does not reparse: {e:?}\n{printed}"));
        assert_eq!(
            canonicalize(&reparsed),
            canonicalize(&p),
            "{name}: round trip changed the program\n{printed}"
        );
        checked += 1;
    }
    assert_eq!(checked, load_corpus().len());
    format!("{checked} corpus programs reparse to their canonical forms")
}

fn emit_fsm_goldens() -> String {
    let goldens_dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/goldens");
    let mut checked = 0usize;
    for name in ["counter", "one_await", "two_phase"] {
        let (_, p) = load_corpus().into_iter().find(|(n, _)| n == name).unwrap();
        let mut fresh = FreshSupply::new();
        let compiled = compile(p.clone(), &mut fresh).unwrap();
        let (contract, client) = miniprisma::emit::emit_fsm(&compiled).unwrap();

        let awaits = count_awaits(&p.main);
        assert_eq!(
            contract.matches("function phase_").count(),
            awaits,
            "{name}: phase function count != await count"
        );
        for k in 1..=awaits {
            let marker = format!("function phase_{k}(");
            let at = contract
                .find(&marker)
                .unwrap_or_else(|| panic!("{name}: missing phase_{k}"));
            let mut lines = contract[at..].lines();
            lines.next();
            let first = lines.next().unwrap().trim_start();
            assert!(
                first.starts_with("require(state == "),
                "{name} phase_{k}: first line is not the require clause: {first}"
            );
        }

        let contract_path = goldens_dir.join(format!("{name}.contract.txt"));
        let client_path = goldens_dir.join(format!("{name}.client.txt"));
        if std::env::var_os("UPDATE_GOLDENS").is_some() {
            std::fs::create_dir_all(&goldens_dir).unwrap();
            std::fs::write(&contract_path, &contract).unwrap();
            std::fs::write(&client_path, &client).unwrap();
        }
        let expect_contract = std::fs::read_to_string(&contract_path).unwrap();
        let expect_client = std::fs::read_to_string(&client_path).unwrap();
        assert_eq!(contract, expect_contract, "{name}: contract text drifted from golden");
        assert_eq!(client, expect_client, "{name}: client text drifted from golden");
        checked += 1;
    }
    assert_eq!(checked, 3);
    "phase counts, require-first lines, and golden texts all match".to_string()
}
