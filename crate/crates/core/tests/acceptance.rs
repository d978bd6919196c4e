//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use lmt::bounds::{check_quadratic, check_squaring, check_unfold_monotone, polynomial_bound, verify_bound};
use lmt::corpus::{load_dir, load_file, region_programs, Entry, REFS_EXT};
use lmt::depth::{check_wf, well_formed, VarContext};
use lmt::encodings::{build_run, build_run_threads, decode_nat, normalize};
use lmt::programs;
use lmt::reduce::{run, run_with, top_stores, Redex, Relation, Strategy};
use lmt::refs::{check_typing_preserved, run_nu, simulate_source, strip_prefix, NuMode};
use lmt::reorder::{is_shallow_first, reorder_shallow_first, validate_trace, ReorderError};
use lmt::syntax::{depth, depth_of, occurrences, size, struct_equiv, Address, Modality};
use lmt::trace::Trace;
use lmt::typing::{admits, progress_check, type_of, Locations};
use lmt::{parse_term, RegionContext, SizeConvention, Term, Type};

const SEEDS: u64 = 20;
const FUEL: u64 = 100_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

fn refs_dir() -> PathBuf {
    corpus_dir().join("refs")
}

fn corpus() -> Vec<Entry> {
    region_programs(&corpus_dir(), &refs_dir()).expect("corpus loads")
}

/// Leftmost and seeded call-by-value strategies.
fn cbv_strategies() -> Vec<Strategy> {
    let mut out = vec![Strategy::CbvLeftmost];
    out.extend((0..SEEDS).map(Strategy::Random));
    out
}

/// Every call-by-value trace of the corpus, plus one shallow-first outer-bang trace per program.
fn recorded_traces(entries: &[Entry]) -> Vec<(String, Trace)> {
    let mut out = Vec::new();
    for e in entries {
        let (p, rc) = (&e.source.program, &e.source.regions);
        for s in cbv_strategies() {
            let r = run(p, Relation::Cbv, s, rc, FUEL).expect("corpus runs under cbv");
            out.push((format!("{} {s}", e.name), r.trace));
        }
        let r = run(p, Relation::OuterBang, Strategy::ShallowFirst, rc, FUEL).expect("corpus runs shallow-first");
        out.push((format!("{} outer shallow", e.name), r.trace));
    }
    out
}

/// Programs before each step, paired with the step's redex.
fn steps_of(t: &Trace) -> Vec<(Term, Redex, Term)> {
    let mut prev = t.initial.clone();
    t.steps
        .iter()
        .map(|s| {
            let r = Redex { rule: s.rule, address: s.address.clone(), depth: s.depth, store: s.store.clone() };
            let before = std::mem::replace(&mut prev, s.program.clone());
            (before, r, s.program.clone())
        })
        .collect()
}

fn first<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().take(3).map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

fn apply_stored_reproduction() -> Verdict {
    let entry = load_file(&corpus_dir().join("apply_stored.lmt")).expect("apply_stored parses");
    let p = &entry.source.program;
    if *p != programs::apply_stored() {
        return verdict(false, "parsed apply_stored differs from the built program");
    }
    let r0 = RegionContext::from_depths([("r", 0)]);
    let deep = ["01000", "01010", "100", "1000", "10000", "10001"];
    let mut wrong = Vec::new();
    for addr in occurrences(p).keys() {
        let want = usize::from(deep.contains(&addr.to_string().as_str()));
        let got = depth_of(p, addr, &r0).expect("valid address");
        if got != want {
            wrong.push(format!("d({addr}) = {got}, expected {want}"));
        }
    }
    let k = 2;
    let rk = RegionContext::from_depths([("r", k)]);
    let revised =
        [("01000", 1), ("01010", 1), ("10", k), ("100", k + 1), ("1000", k + 1), ("10000", k + 1), ("10001", k + 1)];
    for (a, want) in revised {
        let addr: Address = a.parse().expect("bit string");
        let got = depth_of(p, &addr, &rk).expect("valid address");
        if got != want {
            wrong.push(format!("revised d({a}) = {got}, expected {want}"));
        }
    }
    let d = depth(p, &r0).expect("depth");
    let wf = check_wf(p, &r0, &VarContext::new(), 0);
    let typed = RegionContext::new().with("r", 0, Some(programs::apply_stored_region_type()));
    let ty = type_of(p, &typed, &Locations::new());
    let depth_ok = wrong.is_empty() && d == 1;
    let ty_ok = matches!(&ty, Ok(Type::Unit));
    let detail = format!(
        "depths {} (d(P) = {d}{}); depthcheck {}; typecheck at 1: {}",
        if wrong.is_empty() { "match" } else { "differ" },
        if wrong.is_empty() { String::new() } else { format!(": {}", wrong.join(", ")) },
        if wf.is_ok() { "ok" } else { "rejected" },
        match &ty {
            Ok(t) => format!("type {t}"),
            Err(e) => format!("rejected ({e})"),
        }
    );
    verdict(depth_ok && wf.is_ok() && ty_ok, detail)
}

fn counterexamples() -> Verdict {
    let empty = RegionContext::new();
    let z_rejected = well_formed(&programs::z(), &empty).is_err();
    let y_wf = well_formed(&programs::y(), &empty).is_ok();
    let annotations = ["!(t -o t)", "!(1 -o 1)", "!(forall t. t -o t)", "!!(1 -o 1)", "!t"];
    let mut y_typed = Vec::new();
    let unannotated = type_of(&programs::y(), &empty, &Locations::new()).is_ok();
    if unannotated {
        y_typed.push("unannotated".to_string());
    }
    for a in annotations {
        let y = parse_term(&format!("\\!x:{a}. $(x x)")).expect("annotated Y");
        if let Ok(t) = type_of(&y, &empty, &Locations::new()) {
            y_typed.push(format!("{a} gives {t}"));
        }
    }
    let seq_rejected: Vec<bool> = (0..4)
        .map(|d| well_formed(&programs::unstratified(), &RegionContext::from_depths([("r", d)])).is_err())
        .collect();
    let pass = z_rejected && y_wf && y_typed.is_empty() && seq_rejected.iter().all(|b| *b);
    verdict(
        pass,
        format!(
            "Z rejected: {z_rejected}; Y well-formed: {y_wf}; Y typable with: [{}]; unstratified write rejected for R(r) = 0..3: {seq_rejected:?}",
            y_typed.join(", ")
        ),
    )
}

fn exponential_demo() -> Verdict {
    let rc = programs::zprime_regions();
    let mut rows = Vec::new();
    let mut ok = true;
    let mut shallow_max = Vec::new();
    for n in 4..=10usize {
        let p = programs::zprime_chain(n);
        let deep = run_with(&p, Relation::Full, Strategy::DeepFirst, &rc, FUEL, false).expect("deep-first run");
        let shallow =
            run_with(&p, Relation::Full, Strategy::ShallowFirst, &rc, FUEL, false).expect("shallow-first run");
        let final_size = size(&deep.final_program, SizeConvention::Plain);
        ok &= deep.halted && shallow.halted && final_size >= 1 << (n - 1);
        shallow_max.push((n, shallow.max_plain_size));
        rows.push(format!("n={n}: deep final {final_size}, shallow max {}", shallow.max_plain_size));
    }
    let c = shallow_max[0].1 as f64 / 4.0;
    let linear = shallow_max.iter().all(|&(n, m)| m as f64 <= c * n as f64);
    verdict(ok && linear, format!("c = {c}; {}", rows.join(", ")))
}

fn simulation() -> Verdict {
    let entries = corpus();
    let (mut traces, mut no_swap, mut bad) = (0, 0, Vec::new());
    for e in &entries {
        let (p, rc) = (&e.source.program, &e.source.regions);
        for s in cbv_strategies() {
            let r = run(p, Relation::Cbv, s, rc, FUEL).expect("corpus runs under cbv");
            traces += 1;
            match reorder_shallow_first(&r.trace) {
                Ok(out) => {
                    let same_len = out.trace.steps.len() == r.trace.steps.len();
                    let same_end = struct_equiv(out.trace.last_program(), &r.final_program);
                    let replays = validate_trace(&out.trace).is_ok_and(|q| struct_equiv(&q, &r.final_program));
                    if !(r.halted && same_len && same_end && replays && is_shallow_first(&out.trace)) {
                        bad.push(format!("{} {s}", e.name));
                    }
                }
                Err(err @ ReorderError::NoSwapFound { .. }) => {
                    no_swap += 1;
                    bad.push(format!("{} {s}: {err}", e.name));
                }
                Err(err) => bad.push(format!("{} {s}: {err}", e.name)),
            }
        }
    }
    verdict(
        entries.len() >= 30 && bad.is_empty(),
        format!(
            "{} programs, {traces} traces, {no_swap} NoSwapFound, {} failures {}",
            entries.len(),
            bad.len(),
            first(&bad)
        ),
    )
}

fn bounds() -> Verdict {
    let entries = corpus();
    let (mut runs, mut bad) = (0, Vec::new());
    for e in &entries {
        let (p, rc) = (&e.source.program, &e.source.regions);
        let mut check = |label: String, pass: bool| {
            runs += 1;
            if !pass {
                bad.push(label);
            }
        };
        let r = verify_bound(p, Strategy::ShallowFirst, Relation::OuterBang, rc).expect("well-formed corpus");
        check(format!("{} shallow", e.name), r.pass());
        let bound = polynomial_bound(size(p, SizeConvention::Weighted), depth(p, rc).expect("depth"));
        for s in cbv_strategies() {
            let r = verify_bound(p, s, Relation::Cbv, rc).expect("well-formed corpus");
            check(format!("{} cbv {s}", e.name), r.pass());
            // The reordered trace is a shallow-first run of the same length.
            let t = run(p, Relation::Cbv, s, rc, FUEL).expect("cbv run").trace;
            if let Ok(out) = reorder_shallow_first(&t) {
                let max = std::iter::once(&out.trace.initial)
                    .chain(out.trace.steps.iter().map(|s| &s.program))
                    .map(|q| size(q, SizeConvention::Weighted) as u128)
                    .max()
                    .unwrap_or(0);
                check(format!("{} shallow from {s}", e.name), out.trace.steps.len() as u128 <= bound && max <= bound);
            }
        }
    }
    verdict(
        bad.is_empty(),
        format!("{runs} runs over {} programs, {} over the bound {}", entries.len(), bad.len(), first(&bad)),
    )
}

fn unfolding_measures() -> Verdict {
    let entries = corpus();
    let (mut steps, mut mono_bad) = (0, Vec::new());
    for (label, t) in recorded_traces(&entries) {
        for (k, (before, r, _)) in steps_of(&t).into_iter().enumerate() {
            steps += 1;
            match check_unfold_monotone(&before, &r) {
                Ok(m) if m.holds() => {}
                Ok(m) => mono_bad.push(format!("{label} step {} ({}): {} > {}", k + 1, r.rule, m.after, m.before)),
                Err(e) => mono_bad.push(format!("{label}: {e}")),
            }
        }
    }
    let (mut levels, mut quad_bad, mut sq_bad) = (0, Vec::new(), Vec::new());
    for e in &entries {
        let (p, rc) = (&e.source.program, &e.source.regions);
        let q = check_quadratic(p, rc).expect("measures");
        if !q.holds() {
            quad_bad.push(e.name.clone());
        }
        for i in 0..=depth(p, rc).expect("depth") {
            levels += 1;
            let s = check_squaring(p, i, rc).expect("squaring run");
            if !s.holds() {
                sq_bad.push(format!("{} depth {i}", e.name));
            }
        }
    }
    let pass = mono_bad.is_empty() && quad_bad.is_empty() && sq_bad.is_empty();
    verdict(
        pass,
        format!(
            "monotonicity {}/{steps} steps; quadratic {}/{} programs; squaring {}/{levels} levels {}",
            steps - mono_bad.len(),
            entries.len() - quad_bad.len(),
            entries.len(),
            levels - sq_bad.len(),
            first(&[mono_bad, quad_bad, sq_bad].concat())
        ),
    )
}

fn subject_reduction() -> Verdict {
    let entries = corpus();
    let (mut steps, mut typed_steps, mut bad) = (0, 0, Vec::new());
    for e in &entries {
        let rc = &e.source.regions;
        let locs = &e.source.locations;
        for (label, t) in recorded_traces(std::slice::from_ref(e)) {
            for (k, (before, _, after)) in steps_of(&t).into_iter().enumerate() {
                steps += 1;
                if well_formed(&before, rc).is_ok() && well_formed(&after, rc).is_err() {
                    bad.push(format!("{label} step {}: well-formedness lost", k + 1));
                }
                if depth(&after, rc).expect("depth") > depth(&before, rc).expect("depth") {
                    bad.push(format!("{label} step {}: depth grew", k + 1));
                }
                if let Ok(alpha) = type_of(&before, rc, locs) {
                    typed_steps += 1;
                    if !admits(&after, &alpha, rc, locs) {
                        bad.push(format!("{label} step {}: type {alpha} lost", k + 1));
                    }
                }
            }
        }
    }
    verdict(bad.is_empty(), format!("{steps} steps ({typed_steps} typed), {} violations {}", bad.len(), first(&bad)))
}

fn progress() -> Verdict {
    let entries = corpus();
    let (mut runs, mut programs_checked, mut bad) = (0, 0, Vec::new());
    for e in &entries {
        let (p, rc, locs) = (&e.source.program, &e.source.regions, &e.source.locations);
        if type_of(p, rc, locs).is_err() || lmt::syntax::free_vars(p).iter().any(|x| !locs.contains_key(x)) {
            continue;
        }
        programs_checked += 1;
        for s in cbv_strategies() {
            let r = run(p, Relation::Cbv, s, rc, FUEL).expect("cbv run");
            runs += 1;
            match progress_check(&r.final_program, rc, locs) {
                Ok(report) if report.is_progress_shape() => {}
                Ok(report) => bad.push(format!("{} {s}: threads {:?}", e.name, report.violations)),
                Err(err) => bad.push(format!("{} {s}: {err}", e.name)),
            }
        }
    }
    verdict(
        bad.is_empty() && programs_checked > 0,
        format!("{programs_checked} typable programs, {runs} stuck states, {} violations {}", bad.len(), first(&bad)),
    )
}

/// Decoded numerals held by the stores of `p`, by location.
fn store_values(p: &Term) -> Vec<(String, Option<usize>)> {
    let mut out: Vec<(String, Option<usize>)> = top_stores(strip_prefix(p).1)
        .into_iter()
        .map(|(_, l, v)| {
            let (lmt::Loc::Region(x) | lmt::Loc::Var(x)) = l;
            let n = match v.peel() {
                Term::Modal(Modality::Bang, n) => normalize(n).ok().and_then(|n| decode_nat(&n).ok()),
                _ => None,
            };
            (x.to_string(), n)
        })
        .collect();
    out.sort();
    out
}

fn counters_are(p: &Term, want: [usize; 3]) -> bool {
    let got = store_values(p);
    got.len() == 3 && got.iter().zip(["x", "y", "z"]).zip(want).all(|(((l, v), name), w)| l == name && *v == Some(w))
}

fn end_to_end() -> Verdict {
    let start = [0, 1, 2];
    let run_src = build_run(start);
    let r = run_nu(&run_src.program, NuMode::UnderBinders, Strategy::CbvLeftmost, FUEL).expect("run reduces");
    let run_ok = r.halted && counters_are(&r.final_program, [2, 3, 4]);
    let threads = build_run_threads(start);
    let mut nu_ok = 0;
    let mut outcomes = Vec::new();
    for seed in 0..SEEDS {
        let r =
            run_nu(&threads.program, NuMode::UnderBinders, Strategy::Random(seed), FUEL).expect("run_threads reduces");
        if r.halted && counters_are(&r.final_program, [6, 7, 8]) {
            nu_ok += 1;
        } else {
            let vals: Vec<String> = store_values(&r.final_program)
                .into_iter()
                .map(|(l, v)| format!("{l}={}", v.map_or("?".into(), |v| v.to_string())))
                .collect();
            outcomes.push(format!("seed {seed}: {}", vals.join(",")));
        }
    }
    let region_ok = (0..SEEDS)
        .filter(|&seed| {
            run_with(&threads.program, Relation::OuterBang, Strategy::Random(seed), &threads.regions, FUEL, false)
                .is_ok_and(|r| r.halted && counters_are(&r.final_program, [6, 7, 8]))
        })
        .count();
    verdict(
        run_ok && nu_ok == SEEDS,
        format!(
            "run: {}; run_threads under reference semantics: {nu_ok}/{SEEDS} seeds reach (6,7,8) [{}]; with consuming reads: {region_ok}/{SEEDS}",
            if run_ok { "(2,3,4)" } else { "wrong stores" },
            first(&outcomes)
        ),
    )
}

fn reference_simulation() -> Verdict {
    let entries = load_dir(&refs_dir(), REFS_EXT).expect("reference programs load");
    let mut bad = Vec::new();
    for e in &entries {
        match simulate_source(&e.source, NuMode::Cbv, FUEL) {
            Ok((_, report)) if report.holds() => {}
            Ok((_, report)) => {
                let unmatched: Vec<String> = report
                    .steps
                    .iter()
                    .filter(|s| !s.ok())
                    .map(|s| format!("{} step {} matched by {:?}", s.rule, s.index + 1, s.region_steps))
                    .collect();
                bad.push(format!("{}: {}", e.name, unmatched.join(", ")));
            }
            Err(err) => bad.push(format!("{}: {err}", e.name)),
        }
        match check_typing_preserved(&e.source.program, &e.source.locations, &e.source.regions) {
            Ok(t) if t.holds() => {}
            Ok(t) => bad.push(format!("{}: type {} became {}", e.name, t.source, t.translated)),
            Err(err) => bad.push(format!("{}: {err}", e.name)),
        }
    }
    verdict(
        entries.len() == 10 && bad.is_empty(),
        format!("{} programs, {} failing {}", entries.len(), bad.len(), first(&bad)),
    )
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "apply_stored reproduction", Some(Duration::from_secs(1)), apply_stored_reproduction),
        (2, "counterexample gate", Some(Duration::from_secs(1)), counterexamples),
        (3, "exponential demo", Some(Duration::from_secs(10)), exponential_demo),
        (4, "shallow-first simulation", Some(Duration::from_secs(30)), simulation),
        (5, "polynomial bounds", Some(Duration::from_secs(60)), bounds),
        (6, "unfolding measures", Some(Duration::from_secs(30)), unfolding_measures),
        (7, "subject reduction", None, subject_reduction),
        (8, "progress", None, progress),
        (9, "end-to-end counters", Some(Duration::from_secs(60)), end_to_end),
        (10, "reference simulation", None, reference_simulation),
    ];
    let mut failed = Vec::new();
    for (n, name, limit, f) in criteria {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = v.pass && in_time;
        let limit = limit.map_or("none".to_string(), |l| format!("{l:?}"));
        println!(
            "criterion {n:>2} {name}: {} [{elapsed:.2?}, limit {limit}] {}",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
