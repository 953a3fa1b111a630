//! Bounded trace-set computation under the attacked semantics, trace-set
//! equality, the step-indexed non-disagreement relation, and the
//! theorem/lemma checking harness.
//!
//! A trace set is the set of (final normal trace, final value) pairs over
//! all terminating, non-stuck attacked runs — stuck runs model reverts and
//! are dropped, synthetic events are never stored. Exploration is
//! depth-first with per-path cycle pruning: a configuration equal to one of
//! its ancestors proves the path silent-diverges (traces only grow, so a
//! cycle can emit nothing), which keeps the set complete. Paths cut off by
//! the step budget or the path limit poison completeness instead.

use std::collections::BTreeSet;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::ast::{Const, Program, Term};
use crate::canon::program_tags;
use crate::interp::{init, step_bad, Bounds, Configuration, Event, InterpError, StepOutcome};
use crate::passes::{
    compile, cps_program, defun_program, guard_program, mnf_expr, mnf_program, seed_dispatchers,
    FreshSupply, PassError,
};

/// One observable outcome of a terminating attacked run.
pub type TraceEntry = (Vec<Event>, Term);

/// Exploration counters, reported alongside verdicts.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct ExploreStats {
    /// Terminating non-stuck paths (before deduplication).
    pub paths: u64,
    /// Paths that ended stuck (reverted).
    pub stuck: u64,
    /// Paths cut off by the step budget.
    pub budget_hits: u64,
    /// Paths pruned as provably divergent (cycle to an ancestor).
    pub cycles: u64,
    /// Configurations visited.
    pub visited: u64,
}

/// The set of (final trace, final value) pairs reachable within bounds.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TraceSet {
    pub entries: BTreeSet<TraceEntry>,
    /// False when any path hit the step budget or the path limit.
    pub complete: bool,
    pub stats: ExploreStats,
    bounds_key: u64,
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum EquivError {
    #[error("interpreter error: {0}")]
    Interp(#[from] InterpError),
    #[error("compiler error: {0}")]
    Pass(#[from] PassError),
    #[error("trace sets were computed with different bounds")]
    BoundsMismatch,
}

fn bounds_key(bounds: &Bounds) -> u64 {
    let mut h = DefaultHasher::new();
    bounds.clients.hash(&mut h);
    bounds.universe.hash(&mut h);
    bounds.step_budget.hash(&mut h);
    bounds.path_limit.hash(&mut h);
    h.finish()
}

/// The finitized attacker value universe: small atoms, the client
/// addresses, and one representative of each composite shape (pair,
/// Done-record, More-record).
pub fn default_universe(clients: &[u64]) -> Vec<Term> {
    let mut out = vec![
        Term::unit(),
        Term::Const(Const::True),
        Term::Const(Const::False),
        Term::nat(0),
        Term::nat(1),
        Term::nat(2),
    ];
    for &c in clients {
        out.push(Term::nat(c));
    }
    out.push(Term::tuple(vec![Term::nat(0), Term::nat(1)]));
    out.push(Term::tuple(vec![Term::Const(Const::Done), Term::nat(1)]));
    out.push(Term::tuple(vec![
        Term::Const(Const::More),
        Term::nat(1),
        Term::nat(1),
    ]));
    out.sort();
    out.dedup();
    out
}

/// Extend a universe with every tag of a compiled program, so that guard
/// and dispatch tags are attacker-injectable. Applied identically to both
/// sides of an equivalence check to keep ≈ meaningful.
pub fn extend_universe_with_tags(bounds: &Bounds, program: &Program) -> Bounds {
    let mut out = bounds.clone();
    for tag in program_tags(program) {
        out.universe.push(Term::Const(Const::Nat(tag)));
    }
    out.universe.sort();
    out.universe.dedup();
    out
}

enum Recorded {
    /// Only terminating non-stuck paths contribute (trace sets).
    Final,
    /// Step-indexed frontier: values reached within the budget, plus paths
    /// still running at the cutoff and proven-divergent cycles. Stuck paths
    /// are reverts and contribute nothing here either.
    Frontier,
}

struct Explorer<'a> {
    bounds: &'a Bounds,
    mode: Recorded,
    entries: BTreeSet<TraceEntry>,
    complete: bool,
    stats: ExploreStats,
}

impl<'a> Explorer<'a> {
    fn record(&mut self, cfg: &Configuration) {
        self.entries
            .insert((cfg.normal_trace.clone(), cfg.term.clone()));
    }

    /// Iterative DFS; `path` mirrors the recursion stack for cycle checks.
    fn run(&mut self, start: Configuration) {
        enum Work {
            Enter(Configuration, u64),
            Leave,
        }
        let mut path: Vec<(u64, Configuration)> = Vec::new();
        let mut stack = vec![Work::Enter(start, 0)];
        while let Some(item) = stack.pop() {
            match item {
                Work::Leave => {
                    path.pop();
                }
                Work::Enter(cfg, depth) => {
                    if self.stats.visited >= self.bounds.path_limit {
                        self.complete = false;
                        continue;
                    }
                    self.stats.visited += 1;

                    let mut h = DefaultHasher::new();
                    cfg.hash(&mut h);
                    let digest = h.finish();
                    if path.iter().any(|(d, c)| *d == digest && *c == cfg) {
                        self.stats.cycles += 1;
                        if matches!(self.mode, Recorded::Frontier) {
                            self.record(&cfg);
                        }
                        continue;
                    }

                    match step_bad(&cfg, self.bounds) {
                        StepOutcome::Value(c) => {
                            self.stats.paths += 1;
                            self.record(&c);
                        }
                        StepOutcome::Stuck(_) => {
                            self.stats.stuck += 1;
                        }
                        StepOutcome::BudgetExceeded => {
                            self.stats.budget_hits += 1;
                            match self.mode {
                                Recorded::Final => self.complete = false,
                                Recorded::Frontier => self.record(&cfg),
                            }
                        }
                        StepOutcome::Next(succs) => {
                            if depth >= self.bounds.step_budget {
                                self.stats.budget_hits += 1;
                                match self.mode {
                                    Recorded::Final => self.complete = false,
                                    Recorded::Frontier => self.record(&cfg),
                                }
                                continue;
                            }
                            path.push((digest, cfg));
                            stack.push(Work::Leave);
                            for s in succs.into_iter().rev() {
                                stack.push(Work::Enter(s, depth + 1));
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Exhaustively explore the attacked semantics from the initial
/// configuration of a program.
pub fn trace_set(program: &Program, bounds: &Bounds) -> Result<TraceSet, EquivError> {
    let start = init(&bounds.clients, program)?;
    let mut e = Explorer {
        bounds,
        mode: Recorded::Final,
        entries: BTreeSet::new(),
        complete: true,
        stats: ExploreStats::default(),
    };
    e.run(start);
    Ok(TraceSet {
        entries: e.entries,
        complete: e.complete,
        stats: e.stats,
        bounds_key: bounds_key(bounds),
    })
}

/// Verdict of a trace-set comparison.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EquivReport {
    pub equal: bool,
    /// Equality is only meaningful when both sides explored completely.
    pub conclusive: bool,
    /// Sample entries present on one side only (up to [`MAX_WITNESSES`]).
    pub left_only: Vec<TraceEntry>,
    pub right_only: Vec<TraceEntry>,
    pub left_stats: ExploreStats,
    pub right_stats: ExploreStats,
    pub left_complete: bool,
    pub right_complete: bool,
}

pub const MAX_WITNESSES: usize = 5;

/// Set equality of entries; conclusive iff both sides are complete.
pub fn trace_equal(left: &TraceSet, right: &TraceSet) -> Result<EquivReport, EquivError> {
    if left.bounds_key != right.bounds_key {
        return Err(EquivError::BoundsMismatch);
    }
    let left_only: Vec<TraceEntry> = left
        .entries
        .difference(&right.entries)
        .take(MAX_WITNESSES)
        .cloned()
        .collect();
    let right_only: Vec<TraceEntry> = right
        .entries
        .difference(&left.entries)
        .take(MAX_WITNESSES)
        .cloned()
        .collect();
    Ok(EquivReport {
        equal: left_only.is_empty() && right_only.is_empty(),
        conclusive: left.complete && right.complete,
        left_only,
        right_only,
        left_stats: left.stats,
        right_stats: right.stats,
        left_complete: left.complete,
        right_complete: right.complete,
    })
}

// ─── Step-indexed non-disagreement ──────────────────────────────────────

/// Trace compatibility: equal up to the shorter's end.
fn trace_compatible(a: &[Event], b: &[Event]) -> bool {
    let n = a.len().min(b.len());
    a[..n] == b[..n]
}

fn set_compatible(left: &BTreeSet<Vec<Event>>, right: &BTreeSet<Vec<Event>>) -> bool {
    left.iter()
        .all(|t| right.iter().any(|s| trace_compatible(t, s)))
        && right
            .iter()
            .all(|s| left.iter().any(|t| trace_compatible(t, s)))
}

fn frontier_traces(
    program: &Program,
    n: u64,
    bounds: &Bounds,
) -> Result<BTreeSet<Vec<Event>>, EquivError> {
    let mut b = bounds.clone();
    b.step_budget = n;
    let start = init(&b.clients, program)?;
    let mut e = Explorer {
        bounds: &b,
        mode: Recorded::Frontier,
        entries: BTreeSet::new(),
        complete: true,
        stats: ExploreStats::default(),
    };
    e.run(start);
    Ok(e.entries.into_iter().map(|(t, _)| t).collect())
}

/// Step-indexed non-disagreement: every trace reachable on one side within
/// n steps has a prefix-compatible trace on the other. Unlike trace-set
/// equality this is meaningful for looping and stuck programs.
pub fn nondisagree(
    p1: &Program,
    p2: &Program,
    n: u64,
    bounds: &Bounds,
) -> Result<bool, EquivError> {
    let b = extend_universe_with_tags(&extend_universe_with_tags(bounds, p1), p2);
    let f1 = frontier_traces(p1, n, &b)?;
    let f2 = frontier_traces(p2, n, &b)?;
    Ok(set_compatible(&f1, &f2))
}

// ─── Pass and theorem harnesses ─────────────────────────────────────────

/// Which transformation to check for trace preservation.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Pass {
    /// Let-flattening on the main expression.
    Assoc,
    /// Expression-level A-normalization (no trampoline wrap).
    Mnf,
    /// Program-level MNF including the trampoline wrap.
    MnfProgram,
    /// guard+cps+defun on the trampolined program, dispatchers pre-seeded
    /// on both sides.
    Comp,
    /// Same, compared against the unseeded program.
    CompPrime,
}

impl Pass {
    pub fn name(self) -> &'static str {
        match self {
            Pass::Assoc => "assoc",
            Pass::Mnf => "mnf",
            Pass::MnfProgram => "mnf2",
            Pass::Comp => "comp",
            Pass::CompPrime => "comp2",
        }
    }
}

/// Trace-set equality between a source program and the result of one
/// compiler stage (or stage composition), at identical bounds.
pub fn check_pass_equiv(
    program: &Program,
    pass: Pass,
    bounds: &Bounds,
    seed: u64,
) -> Result<EquivReport, EquivError> {
    let mut fresh = FreshSupply::with_seed(seed);
    let (left, right) = match pass {
        Pass::Assoc => {
            let transformed = Program {
                main: crate::passes::assoc(program.main.clone()),
                ..program.clone()
            };
            (program.clone(), transformed)
        }
        Pass::Mnf => {
            let transformed = Program {
                main: mnf_expr(program.main.clone(), &mut fresh),
                ..program.clone()
            };
            (program.clone(), transformed)
        }
        Pass::MnfProgram => {
            let transformed = mnf_program(program.clone(), &mut fresh)?;
            (program.clone(), transformed)
        }
        Pass::Comp => {
            let staged = mnf_program(program.clone(), &mut fresh)?;
            let compiled =
                defun_program(cps_program(guard_program(staged.clone())?)?, &mut fresh)?;
            (seed_dispatchers(&staged), compiled)
        }
        Pass::CompPrime => {
            let staged = mnf_program(program.clone(), &mut fresh)?;
            let compiled =
                defun_program(cps_program(guard_program(staged.clone())?)?, &mut fresh)?;
            (staged, compiled)
        }
    };
    let b = extend_universe_with_tags(&extend_universe_with_tags(bounds, &left), &right);
    let ls = trace_set(&left, &b)?;
    let rs = trace_set(&right, &b)?;
    trace_equal(&ls, &rs)
}

/// The secure-compilation theorem at the given bounds: the attacked trace
/// set of the source program equals the attacked trace set of its
/// compilation.
pub fn check_secure(program: &Program, bounds: &Bounds, seed: u64) -> Result<EquivReport, EquivError> {
    let mut fresh = FreshSupply::with_seed(seed);
    let compiled = compile(program.clone(), &mut fresh)?;
    check_against_compiled(program, &compiled, bounds)
}

/// Compare a source program against an arbitrary compiled form (used for
/// mutation testing weakened compilers).
pub fn check_against_compiled(
    source: &Program,
    compiled: &Program,
    bounds: &Bounds,
) -> Result<EquivReport, EquivError> {
    let b = extend_universe_with_tags(bounds, compiled);
    let ls = trace_set(source, &b)?;
    let rs = trace_set(compiled, &b)?;
    trace_equal(&ls, &rs)
}

// ─── JSON encoding ──────────────────────────────────────────────────────

pub fn entry_to_json(entry: &TraceEntry) -> serde_json::Value {
    serde_json::json!({
        "trace": crate::interp::trace_to_json(&entry.0),
        "value": crate::interp::value_to_json(&entry.1),
        "value_text": crate::pretty::term_to_string(&entry.1),
    })
}

pub fn trace_set_to_json(ts: &TraceSet) -> serde_json::Value {
    serde_json::json!({
        "entries": ts.entries.iter().map(entry_to_json).collect::<Vec<_>>(),
        "complete": ts.complete,
        "stats": stats_to_json(&ts.stats),
    })
}

pub fn stats_to_json(s: &ExploreStats) -> serde_json::Value {
    serde_json::json!({
        "paths": s.paths,
        "stuck": s.stuck,
        "budget_hits": s.budget_hits,
        "cycles": s.cycles,
        "visited": s.visited,
    })
}

pub fn report_to_json(r: &EquivReport) -> serde_json::Value {
    serde_json::json!({
        "equal": r.equal,
        "conclusive": r.conclusive,
        "witnesses": {
            "left_only": r.left_only.iter().map(entry_to_json).collect::<Vec<_>>(),
            "right_only": r.right_only.iter().map(entry_to_json).collect::<Vec<_>>(),
        },
        "stats": {
            "left": stats_to_json(&r.left_stats),
            "right": stats_to_json(&r.right_stats),
            "left_complete": r.left_complete,
            "right_complete": r.right_complete,
        },
    })
}
