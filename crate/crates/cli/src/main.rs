//! `miniprisma` — parse, compile, run, explore, and verify programs.
//!
//! Machine-readable JSON goes to stdout, diagnostics to stderr. Exit codes:
//! 0 success (or equal and conclusive), 1 violation/inequality/stuck,
//! 2 inconclusive (budget or path limit), 64 usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use miniprisma::ast::Program;
use miniprisma::equiv::{
    self, check_pass_equiv, check_secure, default_universe, extend_universe_with_tags, trace_set,
    Pass,
};
use miniprisma::interp::{self, init, run_det, Bounds, RunOutcome};
use miniprisma::parser::{parse, parse_value};
use miniprisma::passes::{compile, cps_program, guard_program, mnf_program, FreshSupply};
use miniprisma::pretty::{pretty, Stage};

#[derive(Parser)]
#[command(name = "miniprisma", version, about = "MiniPrisma compiler and trace-equivalence checker")]
struct Cli {
    #[command(flatten)]
    config: ConfigFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigFlags {
    /// Client addresses (comma separated, e.g. `--clients 1,2`).
    #[arg(long, global = true, value_delimiter = ',')]
    clients: Vec<u64>,
    /// Attacker-injectable value literal; repeat for several.
    #[arg(long = "universe", global = true)]
    universe: Vec<String>,
    /// Maximum reductions per explored path.
    #[arg(long = "budget", global = true)]
    step_budget: Option<u64>,
    /// Maximum configurations per exploration.
    #[arg(long, global = true)]
    path_limit: Option<u64>,
    /// Seed for fresh names and tags.
    #[arg(long = "seed", global = true)]
    fresh_seed: Option<u64>,
    /// Config file (default: ./miniprisma.toml when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a source file and validate the source subset.
    Check { file: PathBuf },
    /// Compile a source file and print the requested stage.
    Compile {
        file: PathBuf,
        /// Stop after one stage: mnf, guard, cps, or defun.
        #[arg(long, value_parser = ["mnf", "guard", "cps", "defun"])]
        stop_after: Option<String>,
        /// Write `<name>.contract.txt` and `<name>.client.txt` here.
        #[arg(long)]
        emit_fsm: Option<PathBuf>,
    },
    /// Deterministic honest run; prints the trace and value as JSON.
    Run {
        file: PathBuf,
        /// Run the compiled program instead of the source.
        #[arg(long)]
        compiled: bool,
    },
    /// Exhaustive attacked exploration; prints the trace set as JSON.
    Explore {
        file: PathBuf,
        #[arg(long)]
        compiled: bool,
    },
    /// Check a lemma or the secure-compilation theorem; prints the report.
    Verify {
        file: PathBuf,
        /// One of: assoc, mnf, mnf2, comp, comp2.
        #[arg(long, value_parser = ["assoc", "mnf", "mnf2", "comp", "comp2"], conflicts_with = "theorem")]
        lemma: Option<String>,
        /// Check the full theorem (source vs compiled under attack).
        #[arg(long)]
        theorem: bool,
    },
}

/// Bounds and seed, resolved from defaults, miniprisma.toml, MP_SEED, and
/// flags — later sources win.
struct RunConfig {
    bounds: Bounds,
    fresh_seed: u64,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn load_config(flags: &ConfigFlags) -> Result<RunConfig, String> {
    let mut clients = vec![1, 2];
    let mut universe_literals: Option<Vec<String>> = None;
    let mut step_budget = 10_000u64;
    let mut path_limit = 200_000u64;
    let mut fresh_seed = 0u64;

    let path = flags
        .config
        .clone()
        .or_else(|| Path::new("miniprisma.toml").exists().then(|| "miniprisma.toml".into()));
    if let Some(path) = path {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let bad = |k: &str| format!("{}: invalid `{k}`", path.display());
        if let Some(v) = table.get("clients") {
            clients = v
                .as_array()
                .ok_or_else(|| bad("clients"))?
                .iter()
                .map(|x| x.as_integer().map(|n| n as u64).ok_or_else(|| bad("clients")))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = table.get("universe") {
            universe_literals = Some(
                v.as_array()
                    .ok_or_else(|| bad("universe"))?
                    .iter()
                    .map(|x| x.as_str().map(String::from).ok_or_else(|| bad("universe")))
                    .collect::<Result<_, _>>()?,
            );
        }
        if let Some(v) = table.get("step_budget") {
            step_budget = v.as_integer().ok_or_else(|| bad("step_budget"))? as u64;
        }
        if let Some(v) = table.get("path_limit") {
            path_limit = v.as_integer().ok_or_else(|| bad("path_limit"))? as u64;
        }
        if let Some(v) = table.get("fresh_seed") {
            fresh_seed = v.as_integer().ok_or_else(|| bad("fresh_seed"))? as u64;
        }
    }

    if let Ok(seed) = std::env::var("MP_SEED") {
        fresh_seed = seed
            .parse()
            .map_err(|_| format!("MP_SEED is not a number: {seed}"))?;
    }

    if !flags.clients.is_empty() {
        clients = flags.clients.clone();
    }
    if !flags.universe.is_empty() {
        universe_literals = Some(flags.universe.clone());
    }
    if let Some(b) = flags.step_budget {
        step_budget = b;
    }
    if let Some(l) = flags.path_limit {
        path_limit = l;
    }
    if let Some(s) = flags.fresh_seed {
        fresh_seed = s;
    }

    let universe = match universe_literals {
        None => default_universe(&clients),
        Some(lits) => {
            let mut out = Vec::new();
            for lit in lits {
                let v = parse_value(&lit)
                    .map_err(|e| format!("universe literal `{lit}`: {}", e[0]))?;
                out.push(v);
            }
            out.sort();
            out.dedup();
            out
        }
    };

    let mut bounds = Bounds::new(clients, universe);
    bounds.step_budget = step_budget;
    bounds.path_limit = path_limit;
    Ok(RunConfig { bounds, fresh_seed })
}

fn load_program(file: &Path) -> Result<Program, ExitCode> {
    let text = std::fs::read_to_string(file).map_err(|e| {
        eprintln!("error: {}: {e}", file.display());
        ExitCode::from(1)
    })?;
    parse(&text).map_err(|errs| {
        for e in &errs {
            eprintln!("{}: {e}", file.display());
        }
        println!(
            "{}",
            serde_json::json!({
                "ok": false,
                "errors": errs.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
            })
        );
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(64),
            };
        }
    };
    let config = match load_config(&cli.config) {
        Ok(c) => c,
        Err(msg) => return fail(msg),
    };
    match cli.command {
        Command::Check { file } => cmd_check(&file),
        Command::Compile {
            file,
            stop_after,
            emit_fsm,
        } => cmd_compile(&file, stop_after.as_deref(), emit_fsm.as_deref(), &config),
        Command::Run { file, compiled } => cmd_run(&file, compiled, &config),
        Command::Explore { file, compiled } => cmd_explore(&file, compiled, &config),
        Command::Verify {
            file,
            lemma,
            theorem,
        } => cmd_verify(&file, lemma.as_deref(), theorem, &config),
    }
}

fn cmd_check(file: &Path) -> ExitCode {
    match load_program(file) {
        Ok(p) => {
            println!(
                "{}",
                serde_json::json!({
                    "ok": true,
                    "definitions": p.defs.len(),
                    "awaits": miniprisma::passes::count_awaits(&p.main),
                })
            );
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn cmd_compile(
    file: &Path,
    stop_after: Option<&str>,
    emit_dir: Option<&Path>,
    config: &RunConfig,
) -> ExitCode {
    let program = match load_program(file) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let mut fresh = FreshSupply::with_seed(config.fresh_seed);
    let staged = match stop_after {
        Some("mnf") => mnf_program(program, &mut fresh).map(|p| (p, Stage::Hybrid)),
        Some("guard") => mnf_program(program, &mut fresh)
            .and_then(guard_program)
            .map(|p| (p, Stage::Hybrid)),
        Some("cps") => mnf_program(program, &mut fresh)
            .and_then(guard_program)
            .and_then(cps_program)
            .map(|p| (p, Stage::Hybrid)),
        _ => compile(program, &mut fresh).map(|p| (p, Stage::Target)),
    };
    let (compiled, stage) = match staged {
        Ok(x) => x,
        Err(e) => return fail(e),
    };
    print!("{}", pretty(&compiled, stage));
    if let Some(dir) = emit_dir {
        if stage != Stage::Target {
            return fail("--emit-fsm needs the full pipeline (drop --stop-after)");
        }
        let (contract, client) = match miniprisma::emit::emit_fsm(&compiled) {
            Ok(x) => x,
            Err(e) => return fail(e),
        };
        let stem = file.file_stem().unwrap_or_default().to_string_lossy();
        if let Err(e) = std::fs::create_dir_all(dir) {
            return fail(format!("{}: {e}", dir.display()));
        }
        let cpath = dir.join(format!("{stem}.contract.txt"));
        let kpath = dir.join(format!("{stem}.client.txt"));
        if let Err(e) = std::fs::write(&cpath, contract) {
            return fail(format!("{}: {e}", cpath.display()));
        }
        if let Err(e) = std::fs::write(&kpath, client) {
            return fail(format!("{}: {e}", kpath.display()));
        }
        eprintln!("wrote {} and {}", cpath.display(), kpath.display());
    }
    ExitCode::SUCCESS
}

fn prepare(file: &Path, compiled: bool, config: &RunConfig) -> Result<(Program, Bounds), ExitCode> {
    let program = load_program(file)?;
    let mut bounds = config.bounds.clone();
    let program = if compiled {
        let mut fresh = FreshSupply::with_seed(config.fresh_seed);
        let p = compile(program, &mut fresh).map_err(|e| fail(e))?;
        bounds = extend_universe_with_tags(&bounds, &p);
        p
    } else {
        program
    };
    Ok((program, bounds))
}

fn cmd_run(file: &Path, compiled: bool, config: &RunConfig) -> ExitCode {
    let (program, bounds) = match prepare(file, compiled, config) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let start = match init(&bounds.clients, &program) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run_det(start, &bounds) {
        RunOutcome::Value { trace, value, .. } => {
            println!(
                "{}",
                serde_json::json!({
                    "status": "value",
                    "trace": interp::trace_to_json(&trace),
                    "value": interp::value_to_json(&value),
                })
            );
            ExitCode::SUCCESS
        }
        RunOutcome::Stuck { reason } => {
            println!(
                "{}",
                serde_json::json!({ "status": "stuck", "reason": reason })
            );
            ExitCode::from(1)
        }
        RunOutcome::BudgetExceeded => {
            println!("{}", serde_json::json!({ "status": "budget_exceeded" }));
            ExitCode::from(2)
        }
    }
}

fn cmd_explore(file: &Path, compiled: bool, config: &RunConfig) -> ExitCode {
    let (program, bounds) = match prepare(file, compiled, config) {
        Ok(x) => x,
        Err(code) => return code,
    };
    match trace_set(&program, &bounds) {
        Ok(ts) => {
            println!("{}", equiv::trace_set_to_json(&ts));
            if ts.complete {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => fail(e),
    }
}

fn cmd_verify(file: &Path, lemma: Option<&str>, theorem: bool, config: &RunConfig) -> ExitCode {
    let program = match load_program(file) {
        Ok(p) => p,
        Err(code) => return code,
    };
    if !theorem && lemma.is_none() {
        eprintln!("error: pass --theorem or --lemma <name>");
        return ExitCode::from(64);
    }
    let report = if theorem {
        check_secure(&program, &config.bounds, config.fresh_seed)
    } else {
        let pass = match lemma.unwrap() {
            "assoc" => Pass::Assoc,
            "mnf" => Pass::Mnf,
            "mnf2" => Pass::MnfProgram,
            "comp" => Pass::Comp,
            "comp2" => Pass::CompPrime,
            other => {
                eprintln!("error: unknown lemma {other}");
                return ExitCode::from(64);
            }
        };
        check_pass_equiv(&program, pass, &config.bounds, config.fresh_seed)
    };
    match report {
        Ok(r) => {
            println!("{}", equiv::report_to_json(&r));
            if !r.conclusive {
                ExitCode::from(2)
            } else if r.equal {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => fail(e),
    }
}
