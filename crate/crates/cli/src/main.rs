//! `lmt`: command-line front-end to the interpreter and analyses.
//!
//! Exit codes: 0 on success, 1 when an analysis rejects its input, 2 on usage,
//! parse or i/o errors.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lmt::bounds::{unfold, verify_bound, BoundError};
use lmt::corpus::REFS_EXT;
use lmt::depth::{check_wf, explain, VarContext};
use lmt::encodings::{build_run, build_run_threads, decode_nat, normalize};
use lmt::programs::{zprime_chain, zprime_regions};
use lmt::reduce::{run, run_with, top_stores, Relation, Strategy};
use lmt::refs::{run_nu, simulate_source, strip_prefix, translate_source, NuMode};
use lmt::reorder::{is_shallow_first, reorder_shallow_first};
use lmt::syntax::{depth, depth_of, occurrences, size};
use lmt::trace::Trace;
use lmt::typing::typecheck_source;
use lmt::{parse_source, print_source, Loc, Modality, SizeConvention, Source, Term};

#[derive(Parser)]
#[command(name = "lmt", version, about = "Modal λ-calculus with threads and regions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a program and list its occurrences with their depths.
    Parse { file: PathBuf },
    /// Check well-formedness in the depth system and print the derivation.
    Depthcheck {
        file: PathBuf,
        /// Only report the verdict.
        #[arg(long)]
        quiet: bool,
    },
    /// Type-check a program.
    Typecheck {
        file: PathBuf,
        /// Print the derivation tree.
        #[arg(long)]
        tree: bool,
    },
    /// Reduce a program, optionally recording a JSONL trace.
    Eval {
        file: PathBuf,
        #[arg(long, default_value = "cbv")]
        relation: Relation,
        #[arg(long, default_value = "cbv")]
        strategy: String,
        #[arg(long, env = "LMT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        fuel: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Reference programs: reduce under λ bodies as well.
        #[arg(long)]
        under_binders: bool,
    },
    /// Reorder a recorded trace into a shallow-first one.
    Reorder {
        trace: PathBuf,
        /// Output file; standard output by default.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run a program and compare steps and sizes with the polynomial bound.
    Bound {
        file: PathBuf,
        #[arg(long, default_value = "shallow")]
        strategy: String,
        #[arg(long, default_value = "outer")]
        relation: Relation,
        #[arg(long, env = "LMT_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Print the unfolding of a program at a depth.
    Unfold {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        depth: usize,
    },
    /// Translate a reference program into a region program.
    TranslateRefs {
        file: PathBuf,
        /// Also check that every reference step is matched by region steps.
        #[arg(long)]
        simulate: bool,
    },
    /// Built-in demonstrations.
    Demo {
        which: Demo,
        /// Chain length for zprime; first counter value for run and run-threads.
        #[arg(short, long)]
        n: Option<usize>,
        #[arg(long, default_value = "deepfirst")]
        strategy: String,
        /// Scheduler seeds tried by run-threads.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    Zprime,
    Run,
    RunThreads,
}

enum Failure {
    Rejected(String),
    Usage(String),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn rejected(e: impl std::fmt::Display) -> Failure {
    Failure::Rejected(e.to_string())
}

fn read_input(path: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text).map_err(usage)?;
        Ok(text)
    } else {
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

fn load(path: &Path) -> Result<Source, Failure> {
    parse_source(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn is_refs(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == REFS_EXT)
}

fn strategy(name: &str, seed: u64) -> Result<Strategy, Failure> {
    Strategy::parse(name, seed).map_err(usage)
}

fn cmd_parse(file: &Path) -> Outcome {
    let src = load(file)?;
    println!("{}", print_source(&src));
    for (addr, kind) in occurrences(&src.program) {
        let d = depth_of(&src.program, &addr, &src.regions).map_or("-".to_string(), |d| d.to_string());
        println!("{:<12} {d:>3}  {kind}", addr.to_string());
    }
    Ok(())
}

fn cmd_depthcheck(file: &Path, quiet: bool) -> Outcome {
    let src = load(file)?;
    match check_wf(&src.program, &src.regions, &VarContext::new(), 0) {
        Ok(d) => {
            if !quiet {
                print!("{}", d.render(&src.regions));
            }
            let dp = depth(&src.program, &src.regions).map_err(usage)?;
            println!("well-formed, depth {dp}");
            Ok(())
        }
        Err(e) => Err(rejected(format!("not well-formed: {}", explain(&e)))),
    }
}

fn cmd_typecheck(file: &Path, tree: bool) -> Outcome {
    let src = load(file)?;
    let d = typecheck_source(&src).map_err(|e| rejected(format!("ill-typed: {e}")))?;
    if tree {
        print!("{}", d.render());
    }
    println!("type: {}", d.ty);
    Ok(())
}

fn write_trace(t: &Trace, path: &Path) -> Outcome {
    let f = File::create(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    t.write_jsonl(BufWriter::new(f)).map_err(usage)
}

struct EvalArgs<'a> {
    relation: Relation,
    strategy: &'a str,
    seed: u64,
    fuel: u64,
    trace: Option<&'a Path>,
    under_binders: bool,
}

fn cmd_eval(file: &Path, a: EvalArgs) -> Outcome {
    let src = load(file)?;
    let s = strategy(a.strategy, a.seed)?;
    if is_refs(file) {
        if a.trace.is_some() {
            return Err(usage("traces are recorded for region programs only"));
        }
        let mode = if a.under_binders { NuMode::UnderBinders } else { NuMode::Cbv };
        let r = run_nu(&src.program, mode, s, a.fuel).map_err(rejected)?;
        for (i, st) in r.trace.steps.iter().enumerate() {
            println!("{:>4} {:<4} {:<10} {}", i + 1, st.rule.to_string(), st.address.to_string(), st.program);
        }
        println!("final: {}", r.final_program);
        println!("steps: {}, halted: {}", r.trace.steps.len(), r.halted);
        for (addr, x) in r.stuck.unassigned {
            println!("blocked read of {x} at {addr}");
        }
        return Ok(());
    }
    let r = run(&src.program, a.relation, s, &src.regions, a.fuel).map_err(rejected)?;
    if let Some(path) = a.trace {
        write_trace(&r.trace, path)?;
    }
    println!("final: {}", r.final_program);
    println!(
        "steps: {}, halted: {}, max size: {} (weighted {})",
        r.trace.steps.len(),
        r.halted,
        r.max_plain_size,
        r.max_weighted_size
    );
    Ok(())
}

fn cmd_reorder(path: &Path, out: Option<&Path>) -> Outcome {
    let f = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let t = Trace::read_jsonl(BufReader::new(f)).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let r = reorder_shallow_first(&t).map_err(rejected)?;
    match out {
        Some(p) => write_trace(&r.trace, p)?,
        None => r.trace.write_jsonl(io::stdout().lock()).map_err(usage)?,
    }
    eprintln!(
        "{} steps, {} swaps in {} passes, shallow-first: {}",
        r.trace.steps.len(),
        r.swaps,
        r.passes,
        is_shallow_first(&r.trace)
    );
    Ok(())
}

fn cmd_bound(file: &Path, strat: &str, relation: Relation, seed: u64) -> Outcome {
    let src = load(file)?;
    let s = strategy(strat, seed)?;
    let report = verify_bound(&src.program, s, relation, &src.regions).map_err(|e| match e {
        BoundError::NotWellFormed(m) => rejected(format!("not well-formed: {m}")),
        BoundError::Reduce(e) => rejected(e),
    })?;
    println!("{report}");
    if report.pass() {
        Ok(())
    } else {
        Err(rejected("bound violated"))
    }
}

fn cmd_unfold(file: &Path, i: usize) -> Outcome {
    let src = load(file)?;
    let u = unfold(&src.program, i);
    println!("{u}");
    println!("size: {} (program {})", u.size(), size(&src.program, SizeConvention::Weighted));
    Ok(())
}

fn cmd_translate(file: &Path, simulate: bool) -> Outcome {
    let src = load(file)?;
    let out = translate_source(&src).map_err(|e| rejected(format!("cannot translate: {e}")))?;
    println!("{}", print_source(&out));
    if !simulate {
        return Ok(());
    }
    let (_, report) = simulate_source(&src, NuMode::Cbv, 100_000).map_err(rejected)?;
    for m in &report.steps {
        let matched = m.region_steps.map_or("none".to_string(), |n| n.to_string());
        println!("step {:>3} {:<4} region steps: {matched}", m.index + 1, m.rule.to_string());
    }
    if report.holds() {
        println!("simulation holds");
        Ok(())
    } else {
        Err(rejected("simulation fails"))
    }
}

/// Numerals held by the stores of `p`, as `x=n` pairs.
fn counters(p: &Term) -> String {
    let mut out: Vec<String> = top_stores(strip_prefix(p).1)
        .into_iter()
        .map(|(_, l, v)| {
            let (Loc::Region(x) | Loc::Var(x)) = l;
            let n = match v.peel() {
                Term::Modal(Modality::Bang, n) => normalize(n).ok().and_then(|n| decode_nat(&n).ok()),
                _ => None,
            };
            format!("{x}={}", n.map_or("?".to_string(), |n| n.to_string()))
        })
        .collect();
    out.sort();
    out.join(", ")
}

fn demo_zprime(n: usize, strat: &str) -> Outcome {
    let s = strategy(strat, 0)?;
    let rc = zprime_regions();
    println!("{:>3} {:>8} {:>10} {:>10}", "n", "steps", "final", "max");
    for k in 1..=n {
        let r = run_with(&zprime_chain(k), Relation::Full, s, &rc, 10_000_000, false).map_err(rejected)?;
        println!(
            "{k:>3} {:>8} {:>10} {:>10}",
            r.trace.steps.len(),
            size(&r.final_program, SizeConvention::Plain),
            r.max_plain_size
        );
    }
    Ok(())
}

fn demo_run(m: usize) -> Outcome {
    let src = build_run([m, m + 1, m + 2]);
    let r = run_nu(&src.program, NuMode::UnderBinders, Strategy::CbvLeftmost, 1_000_000).map_err(rejected)?;
    println!("steps: {}, halted: {}", r.trace.steps.len(), r.halted);
    println!("stores: {}", counters(&r.final_program));
    Ok(())
}

fn demo_run_threads(m: usize, seeds: u64) -> Outcome {
    let src = build_run_threads([m, m + 1, m + 2]);
    println!("{:>5}  {:<24} {:<24}", "seed", "reference semantics", "region semantics");
    for seed in 0..seeds {
        let nu = run_nu(&src.program, NuMode::UnderBinders, Strategy::Random(seed), 1_000_000).map_err(rejected)?;
        let region =
            run_with(&src.program, Relation::OuterBang, Strategy::Random(seed), &src.regions, 1_000_000, false)
                .map_err(rejected)?;
        println!("{seed:>5}  {:<24} {:<24}", counters(&nu.final_program), counters(&region.final_program));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Parse { file } => cmd_parse(&file),
        Command::Depthcheck { file, quiet } => cmd_depthcheck(&file, quiet),
        Command::Typecheck { file, tree } => cmd_typecheck(&file, tree),
        Command::Eval { file, relation, strategy, seed, fuel, trace, under_binders } => cmd_eval(
            &file,
            EvalArgs { relation, strategy: &strategy, seed, fuel, trace: trace.as_deref(), under_binders },
        ),
        Command::Reorder { trace, out } => cmd_reorder(&trace, out.as_deref()),
        Command::Bound { file, strategy, relation, seed } => cmd_bound(&file, &strategy, relation, seed),
        Command::Unfold { file, depth } => cmd_unfold(&file, depth),
        Command::TranslateRefs { file, simulate } => cmd_translate(&file, simulate),
        Command::Demo { which, n, strategy, seeds } => match which {
            Demo::Zprime => demo_zprime(n.unwrap_or(8), &strategy),
            Demo::Run => demo_run(n.unwrap_or(0)),
            Demo::RunThreads => demo_run_threads(n.unwrap_or(0), seeds),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = dispatch(cli);
    let _ = io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
