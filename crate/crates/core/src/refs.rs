//! Call-by-value front-end with dynamic memory locations.
//!
//! Programs use location variables (`get(x)`, `set(x, V)`, `x <= V`) bound
//! by `nu x : Reg #r !A. M` or declared free in the header. Reads copy the
//! stored value, writes overwrite it. Binders in evaluation position are
//! extruded to a prefix at the top of the program after every step.
//!
//! [`translate`] maps locations to their regions; [`check_simulation`]
//! replays a reference trace on the translated program.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use crate::parse::Source;
use crate::reduce::{find_redexes, step, top_stores, Redex, ReduceError, Relation, Rule, Scheduler, Strategy};
use crate::syntax::{all_names, canonical, fresh_name, name, Address, Loc, Modality, Name, RegionContext, Term};
use crate::types::Type;
use crate::typing::{type_of, Locations, TypeError};

/// Which contexts the reference reduction uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NuMode {
    /// Call-by-value evaluation contexts.
    Cbv,
    /// Outer-bang contexts, reducing under λ when needed.
    UnderBinders,
}

impl NuMode {
    /// The region relation the translated program is run with.
    pub fn relation(self) -> Relation {
        match self {
            NuMode::Cbv => Relation::Cbv,
            NuMode::UnderBinders => Relation::OuterBang,
        }
    }
}

impl fmt::Display for NuMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NuMode::Cbv => "cbv",
            NuMode::UnderBinders => "under-binders",
        })
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NuError {
    #[error("region constant #{0} in a reference program")]
    RegionConstant(Name),
    #[error("location {0} has {1} stores")]
    MultipleStores(Name, usize),
    #[error("location {0} needs a type annotation")]
    Unannotated(Name),
    #[error("location {0} has type {1}, expected Reg #r !A")]
    NotDuplicable(Name, Type),
    #[error("location {0} shadows another location")]
    Shadowing(Name),
    #[error("location {0} is bound by a λ or let and cannot be mapped to a region")]
    BoundLocation(Name),
    #[error("region #{0} is not declared")]
    MissingRegion(Name),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

fn loc_name(l: &Loc) -> &Name {
    let (Loc::Region(x) | Loc::Var(x)) = l;
    x
}

/// Rejects region constants and location variables with more than one store.
pub fn check_nu_program(p: &Term) -> Result<(), NuError> {
    fn go(t: &Term) -> Result<(), NuError> {
        match t.peel() {
            Term::Region(r)
            | Term::Get(Loc::Region(r))
            | Term::Set(Loc::Region(r), _)
            | Term::Store(Loc::Region(r), _) => return Err(NuError::RegionConstant(r.clone())),
            _ => {}
        }
        t.peel().children().into_iter().try_for_each(go)
    }
    go(p)?;
    let mut counts: BTreeMap<Name, usize> = BTreeMap::new();
    for (_, l, _) in top_stores(strip_prefix(p).1) {
        *counts.entry(loc_name(&l).clone()).or_default() += 1;
    }
    match counts.into_iter().find(|(_, n)| *n > 1) {
        Some((x, n)) => Err(NuError::MultipleStores(x, n)),
        None => Ok(()),
    }
}

/// Splits the leading `nu` binders from the body.
pub fn strip_prefix(p: &Term) -> (Vec<(Name, Option<Type>)>, &Term) {
    let mut binders = Vec::new();
    let mut t = p;
    while let Term::Nu(x, ty, b) = t {
        binders.push((x.clone(), ty.clone()));
        t = b;
    }
    (binders, t)
}

fn wrap_prefix(binders: &[(Name, Option<Type>)], body: Term) -> Term {
    binders.iter().rev().fold(body, |acc, (x, ty)| Term::Nu(x.clone(), ty.clone(), Box::new(acc)))
}

/// First `nu` reachable through the contexts of `mode`, relative to the body.
fn extrusion_site(t: &Term, mode: NuMode, addr: &mut Vec<u8>) -> Option<Vec<u8>> {
    let t = t.peel();
    if let Term::Nu(..) = t {
        return Some(addr.clone());
    }
    let cbv = mode == NuMode::Cbv;
    let visit = |i: u8, c: &Term, addr: &mut Vec<u8>| {
        addr.push(i);
        let r = extrusion_site(c, mode, addr);
        addr.pop();
        r
    };
    match t {
        Term::Lam(_, _, b) if !cbv => visit(0, b, addr),
        Term::App(a, b) if cbv => visit(0, a, addr).or_else(|| if a.is_value() { visit(1, b, addr) } else { None }),
        Term::App(a, b) | Term::Par(a, b) => visit(0, a, addr).or_else(|| visit(1, b, addr)),
        Term::Modal(Modality::Para, b) => visit(0, b, addr),
        Term::Let(_, _, a, b) => visit(0, a, addr).or_else(|| if cbv { None } else { visit(1, b, addr) }),
        Term::Set(_, b) => visit(0, b, addr),
        Term::Store(_, b) if !cbv => visit(0, b, addr),
        _ => None,
    }
}

/// Hoists every `nu` in evaluation position to the top prefix, renaming
/// each binder apart from the rest of the program.
pub fn extrude(p: &Term, mode: NuMode) -> Term {
    let (mut binders, body) = strip_prefix(p);
    let mut body = body.clone();
    while let Some(site) = extrusion_site(&body, mode, &mut Vec::new()) {
        let mut avoid = BTreeSet::new();
        all_names(&body, &mut avoid);
        avoid.extend(binders.iter().map(|(x, _)| x.clone()));
        let mut hoisted = None;
        body = body
            .replace_at(&site, &mut |t| match t {
                Term::Nu(x, ty, inner) => {
                    let fresh = fresh_name(x, &avoid);
                    hoisted = Some((fresh.clone(), ty.clone()));
                    crate::syntax::substitute(inner, x, &Term::Var(fresh))
                }
                other => other.clone(),
            })
            .expect("site found in body");
        binders.push(hoisted.expect("site is a nu binder"));
    }
    wrap_prefix(&binders, body)
}

/// One reference step.
#[derive(Clone, Debug, PartialEq)]
pub struct NuStep {
    pub rule: Rule,
    /// Address in the body below the `nu` prefix.
    pub address: Address,
    pub program: Term,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NuTrace {
    pub initial: Term,
    pub mode: NuMode,
    pub steps: Vec<NuStep>,
}

impl NuTrace {
    pub fn last_program(&self) -> &Term {
        self.steps.last().map_or(&self.initial, |s| &s.program)
    }
}

/// Redexes of the body below the prefix, under the contexts of `mode`.
pub fn nu_redexes(p: &Term, mode: NuMode) -> Result<Vec<Redex>, NuError> {
    let (_, body) = strip_prefix(p);
    let rel = mode.relation();
    // Region depths play no role for location stores.
    let out = find_redexes(body, rel, &RegionContext::new())?;
    Ok(out.into_iter().filter(|r| r.rule != Rule::Get || r.store.is_some()).collect())
}

/// Contracts one redex; reads copy and writes overwrite.
pub fn step_nu(p: &Term, redex: &Redex, mode: NuMode) -> Result<Term, NuError> {
    let (binders, body) = strip_prefix(p);
    let stale = || ReduceError::StaleRedex { rule: redex.rule, address: redex.address.clone() };
    let next = match redex.rule {
        Rule::Get => {
            let Some(Term::Get(l)) = body.at(&redex.address) else { return Err(stale().into()) };
            let s = redex.store.as_ref().ok_or_else(stale)?;
            let content = match body.at(s) {
                Some(Term::Store(sl, v)) if sl == l => (**v).clone(),
                _ => return Err(stale().into()),
            };
            body.replace_at(&redex.address.0, &mut |_| content.clone()).map_err(|_| stale())?
        }
        Rule::Set => {
            let Some(Term::Set(l, v)) = body.at(&redex.address) else { return Err(stale().into()) };
            let (l, v) = (l.clone(), (**v).clone());
            let q = body.replace_at(&redex.address.0, &mut |_| Term::Unit).map_err(|_| stale())?;
            let existing: Vec<Address> =
                top_stores(&q).into_iter().filter(|(_, sl, _)| *sl == l).map(|(a, _, _)| a).collect();
            match existing.as_slice() {
                [] => Term::par(q, Term::Store(l, Box::new(v))),
                [a] => q.replace_at(&a.0, &mut |_| Term::Store(l.clone(), Box::new(v.clone()))).map_err(|_| stale())?,
                more => return Err(NuError::MultipleStores(loc_name(&l).clone(), more.len())),
            }
        }
        _ => step(body, redex)?,
    };
    Ok(extrude(&wrap_prefix(&binders, next), mode))
}

/// Why a reference run stopped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NuStuck {
    /// Reads of locations that hold no value.
    pub unassigned: Vec<(Address, Name)>,
}

#[derive(Clone, Debug)]
pub struct NuRun {
    pub trace: NuTrace,
    pub final_program: Term,
    pub halted: bool,
    pub stuck: NuStuck,
}

/// Reads in reducible position whose location has no store.
pub fn unassigned_reads(p: &Term, mode: NuMode) -> NuStuck {
    let (_, body) = strip_prefix(p);
    let stored: BTreeSet<Loc> = top_stores(body).into_iter().map(|(_, l, _)| l).collect();
    let mut out = Vec::new();
    fn go(t: &Term, mode: NuMode, addr: &mut Vec<u8>, stored: &BTreeSet<Loc>, out: &mut Vec<(Address, Name)>) {
        let t = t.peel();
        if let Term::Get(l) = t {
            if !stored.contains(l) {
                out.push((Address(addr.clone()), loc_name(l).clone()));
            }
            return;
        }
        let cbv = mode == NuMode::Cbv;
        let children: Vec<(u8, &Term)> = match t {
            Term::Lam(_, _, b) if !cbv => vec![(0, b)],
            Term::App(a, b) if cbv => {
                if a.is_value() {
                    vec![(0, a), (1, b)]
                } else {
                    vec![(0, a)]
                }
            }
            Term::App(a, b) | Term::Par(a, b) => vec![(0, a), (1, b)],
            Term::Modal(Modality::Para, b) | Term::Set(_, b) | Term::Nu(_, _, b) => vec![(0, b)],
            Term::Let(_, _, a, b) => {
                if cbv {
                    vec![(0, a)]
                } else {
                    vec![(0, a), (1, b)]
                }
            }
            Term::Store(_, b) if !cbv => vec![(0, b)],
            _ => vec![],
        };
        for (i, c) in children {
            addr.push(i);
            go(c, mode, addr, stored, out);
            addr.pop();
        }
    }
    go(body, mode, &mut Vec::new(), &stored, &mut out);
    NuStuck { unassigned: out }
}

/// Runs the reference reduction until no redex is left or fuel runs out.
pub fn run_nu(p: &Term, mode: NuMode, strategy: Strategy, fuel: u64) -> Result<NuRun, NuError> {
    check_nu_program(p)?;
    let initial = extrude(p, mode);
    let mut trace = NuTrace { initial: initial.clone(), mode, steps: Vec::new() };
    let mut sched = Scheduler::new(strategy);
    let mut cur = initial;
    let mut halted = false;
    for _ in 0..fuel {
        let redexes = nu_redexes(&cur, mode)?;
        if redexes.is_empty() {
            halted = true;
            break;
        }
        let r = &redexes[sched.choose(&redexes)?];
        cur = step_nu(&cur, r, mode)?;
        trace.steps.push(NuStep { rule: r.rule, address: r.address.clone(), program: cur.clone() });
    }
    let stuck = unassigned_reads(&cur, mode);
    Ok(NuRun { trace, final_program: cur, halted, stuck })
}

/// Region of a location type `Reg #r !A`.
fn location_region(x: &Name, ty: &Type) -> Result<Name, NuError> {
    match ty {
        Type::Reg(r, content) if matches!(**content, Type::Modal(Modality::Bang, _)) => Ok(r.clone()),
        other => Err(NuError::NotDuplicable(x.clone(), other.clone())),
    }
}

struct Translator<'a> {
    rc: &'a RegionContext,
    env: BTreeMap<Name, Name>,
    /// Names bound by λ or let at the current point.
    bound: Vec<Name>,
    avoid: BTreeSet<Name>,
}

impl Translator<'_> {
    fn region(&self, l: &Loc) -> Result<Name, NuError> {
        let x = loc_name(l);
        if let Loc::Region(r) = l {
            return Err(NuError::RegionConstant(r.clone()));
        }
        if self.bound.contains(x) {
            return Err(NuError::BoundLocation(x.clone()));
        }
        self.env.get(x).cloned().ok_or_else(|| NuError::BoundLocation(x.clone()))
    }

    fn binder<R>(&mut self, x: &Name, f: impl FnOnce(&mut Self) -> R) -> R {
        self.bound.push(x.clone());
        let r = f(self);
        self.bound.pop();
        r
    }

    fn go(&mut self, t: &Term) -> Result<Term, NuError> {
        let rec = |this: &mut Self, b: &Term| this.go(b).map(Box::new);
        Ok(match t {
            Term::Var(x) if !self.bound.contains(x) && self.env.contains_key(x) => Term::Region(self.env[x].clone()),
            Term::Var(_) | Term::Unit => t.clone(),
            Term::Region(r) => return Err(NuError::RegionConstant(r.clone())),
            Term::Lam(x, ty, b) => Term::Lam(x.clone(), ty.clone(), self.binder(x, |s| rec(s, b))?),
            Term::App(a, b) => Term::App(rec(self, a)?, rec(self, b)?),
            Term::Par(a, b) => Term::Par(rec(self, a)?, rec(self, b)?),
            Term::Modal(m, b) => Term::Modal(*m, rec(self, b)?),
            Term::Let(m, x, a, b) => {
                let a = rec(self, a)?;
                Term::Let(*m, x.clone(), a, self.binder(x, |s| rec(s, b))?)
            }
            Term::Gen(tv, b) => Term::Gen(tv.clone(), rec(self, b)?),
            Term::Inst(b, ty) => Term::Inst(rec(self, b)?, ty.clone()),
            Term::Get(l) => {
                let r = self.region(l)?;
                let y = fresh_name("y", &self.avoid);
                self.avoid.insert(y.clone());
                Term::let_bang(
                    &y,
                    Term::get(&r),
                    Term::par(Term::set(&r, Term::bang(Term::Var(y.clone()))), Term::bang(Term::Var(y.clone()))),
                )
            }
            Term::Set(l, b) => Term::Set(Loc::Region(self.region(l)?), rec(self, b)?),
            Term::Store(l, b) => Term::Store(Loc::Region(self.region(l)?), rec(self, b)?),
            Term::Nu(x, ty, b) => {
                if self.env.contains_key(x) {
                    return Err(NuError::Shadowing(x.clone()));
                }
                let ty = ty.as_ref().ok_or_else(|| NuError::Unannotated(x.clone()))?;
                let r = location_region(x, ty)?;
                if !self.rc.contains(&r) {
                    return Err(NuError::MissingRegion(r));
                }
                self.env.insert(x.clone(), r);
                let out = self.go(b);
                self.env.remove(x);
                out?
            }
        })
    }
}

/// Maps every location to its region: reads become a read followed by a
/// write-back of the same value, `nu` binders disappear.
pub fn translate(p: &Term, locs: &Locations, rc: &RegionContext) -> Result<Term, NuError> {
    let mut env = BTreeMap::new();
    for (x, ty) in locs {
        let r = location_region(x, ty)?;
        if !rc.contains(&r) {
            return Err(NuError::MissingRegion(r));
        }
        env.insert(x.clone(), r);
    }
    let mut avoid = BTreeSet::new();
    all_names(p, &mut avoid);
    avoid.extend(locs.keys().cloned());
    Translator { rc, env, bound: Vec::new(), avoid }.go(p)
}

/// Translates a whole source file; the result has no location declarations.
pub fn translate_source(src: &Source) -> Result<Source, NuError> {
    Ok(Source {
        regions: src.regions.clone(),
        locations: BTreeMap::new(),
        program: translate(&src.program, &src.locations, &src.regions)?,
    })
}

/// Types of a program before and after translation.
#[derive(Clone, Debug, PartialEq)]
pub struct TypingPreservation {
    pub source: Type,
    pub translated: Type,
}

impl TypingPreservation {
    pub fn holds(&self) -> bool {
        self.source.equiv(&self.translated)
    }
}

pub fn check_typing_preserved(
    p: &Term,
    locs: &Locations,
    rc: &RegionContext,
) -> Result<TypingPreservation, SimulationError> {
    let source = type_of(p, rc, locs)?;
    let q = translate(p, locs, rc)?;
    let translated = type_of(&q, rc, &Locations::new())?;
    Ok(TypingPreservation { source, translated })
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error(transparent)]
    Nu(#[from] NuError),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// How one reference step was matched on the region side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchedStep {
    pub index: usize,
    pub rule: Rule,
    /// Fewest region steps reaching the translated state, if any within the search bound.
    pub region_steps: Option<usize>,
}

impl MatchedStep {
    pub fn ok(&self) -> bool {
        match (self.rule, self.region_steps) {
            (_, None) => false,
            (Rule::Set, Some(n)) => n == 1,
            (_, Some(n)) => n >= 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulationReport {
    pub steps: Vec<MatchedStep>,
}

impl SimulationReport {
    pub fn holds(&self) -> bool {
        self.steps.iter().all(MatchedStep::ok)
    }
}

/// Region steps searched per reference step.
pub const SEARCH_DEPTH: usize = 8;

/// Fewest steps (at least one) from `from` to a program equivalent to `to`.
pub fn region_distance(
    from: &Term,
    to: &Term,
    rel: Relation,
    rc: &RegionContext,
    max_depth: usize,
) -> Result<Option<usize>, ReduceError> {
    let target = canonical(to);
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(from.clone(), 0usize)]);
    while let Some((t, d)) = queue.pop_front() {
        if d >= max_depth {
            continue;
        }
        for r in find_redexes(&t, rel, rc)? {
            let next = step(&t, &r)?;
            let c = canonical(&next);
            if c == target {
                return Ok(Some(d + 1));
            }
            if seen.insert(c) {
                queue.push_back((next, d + 1));
            }
        }
    }
    Ok(None)
}

/// Replays a reference trace on the translated program: each translated
/// state must be reachable from the previous one in the region language.
pub fn check_simulation(trace: &NuTrace, locs: &Locations, rc: &RegionContext) -> Result<SimulationReport, NuError> {
    let rel = trace.mode.relation();
    let mut prev = translate(&trace.initial, locs, rc)?;
    let mut steps = Vec::with_capacity(trace.steps.len());
    for (index, s) in trace.steps.iter().enumerate() {
        let next = translate(&s.program, locs, rc)?;
        let region_steps = region_distance(&prev, &next, rel, rc, SEARCH_DEPTH)?;
        steps.push(MatchedStep { index, rule: s.rule, region_steps });
        prev = next;
    }
    Ok(SimulationReport { steps })
}

/// Runs a reference program and checks the simulation and typing preservation.
pub fn simulate_source(src: &Source, mode: NuMode, fuel: u64) -> Result<(NuRun, SimulationReport), NuError> {
    let run = run_nu(&src.program, mode, Strategy::CbvLeftmost, fuel)?;
    let report = check_simulation(&run.trace, &src.locations, &src.regions)?;
    Ok((run, report))
}

/// Location declared free with a region type, for building test programs.
pub fn location(x: &str, r: &str, content: Type) -> (Name, Type) {
    (name(x), Type::Reg(name(r), Box::new(Type::Modal(Modality::Bang, Box::new(content)))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_source, parse_term};
    use crate::syntax::struct_equiv;

    fn nu(src: &str) -> Term {
        parse_term(src).unwrap()
    }

    fn header() -> &'static str {
        "region #r : depth = 0, type = !1\nloc x : Reg #r !1\n"
    }

    #[test]
    fn read_copies() {
        let p = nu("(\\z. z) get(x) || x <= !*");
        let out = run_nu(&p, NuMode::Cbv, Strategy::CbvLeftmost, 10).unwrap();
        assert!(out.halted);
        assert!(struct_equiv(&out.final_program, &nu("!* || x <= !*")));
    }

    #[test]
    fn write_overwrites() {
        let p = nu("set(x, !!*) || x <= !*");
        let out = run_nu(&p, NuMode::Cbv, Strategy::CbvLeftmost, 10).unwrap();
        assert!(struct_equiv(&out.final_program, &nu("* || x <= !!*")));
        assert_eq!(out.trace.steps.iter().filter(|s| s.rule == Rule::Set).count(), 1);
    }

    #[test]
    fn write_creates_store() {
        let out = run_nu(&nu("set(x, !*)"), NuMode::Cbv, Strategy::CbvLeftmost, 10).unwrap();
        assert!(struct_equiv(&out.final_program, &nu("* || x <= !*")));
    }

    #[test]
    fn value_under_binder_is_final() {
        let out = run_nu(&nu("nu x : Reg #r !1. *"), NuMode::Cbv, Strategy::CbvLeftmost, 10).unwrap();
        assert!(out.halted);
        assert!(out.trace.steps.is_empty());
    }

    #[test]
    fn unassigned_read_is_reported() {
        let out = run_nu(&nu("(\\z. z) get(x)"), NuMode::Cbv, Strategy::CbvLeftmost, 10).unwrap();
        assert!(out.halted);
        assert_eq!(out.stuck.unassigned, vec![(Address(vec![1]), name("x"))]);
    }

    #[test]
    fn extrusion_renames_apart() {
        let p = nu("(\\z. z) (nu x : Reg #r !1. set(x, !*)) || nu x : Reg #r !1. get(x)");
        let q = extrude(&p, NuMode::Cbv);
        let (binders, body) = strip_prefix(&q);
        assert_eq!(binders.len(), 2);
        assert_ne!(binders[0].0, binders[1].0);
        assert!(extrusion_site(body, NuMode::Cbv, &mut Vec::new()).is_none());
    }

    #[test]
    fn no_extrusion_under_lambda_in_cbv() {
        let p = nu("\\z. nu x : Reg #r !1. set(x, z)");
        assert_eq!(extrude(&p, NuMode::Cbv), p);
        assert!(matches!(extrude(&p, NuMode::UnderBinders), Term::Nu(..)));
    }

    #[test]
    fn region_constants_rejected() {
        assert_eq!(check_nu_program(&nu("get(#r)")), Err(NuError::RegionConstant(name("r"))));
    }

    #[test]
    fn read_translation_shape() {
        let src = parse_source(&format!("{}get(x)", header())).unwrap();
        let q = translate(&src.program, &src.locations, &src.regions).unwrap();
        assert!(struct_equiv(&q, &nu("let !y = get(#r) in (set(#r, !y) || !y)")));
    }

    #[test]
    fn location_free_term_is_unchanged() {
        let p = nu("(\\z. z) !*");
        assert_eq!(translate(&p, &Locations::new(), &RegionContext::new()).unwrap(), p);
    }

    #[test]
    fn non_duplicable_content_rejected() {
        let locs = Locations::from([(name("x"), Type::Reg(name("r"), Box::new(Type::Unit)))]);
        let rc = RegionContext::from_depths([("r", 0)]);
        assert!(matches!(translate(&nu("get(x)"), &locs, &rc), Err(NuError::NotDuplicable(..))));
    }

    #[test]
    fn bound_location_rejected() {
        let src = parse_source(&format!("{}\\w. get(w)", header())).unwrap();
        assert_eq!(translate(&src.program, &src.locations, &src.regions), Err(NuError::BoundLocation(name("w"))));
    }

    #[test]
    fn shadowing_rejected() {
        let src = parse_source(&format!("{}nu x : Reg #r !1. get(x)", header())).unwrap();
        assert_eq!(translate(&src.program, &src.locations, &src.regions), Err(NuError::Shadowing(name("x"))));
    }

    #[test]
    fn set_then_get_simulates() {
        let src = parse_source(&format!("{}(\\u. (\\z. z) get(x)) set(x, !*)", header())).unwrap();
        let (run, report) = simulate_source(&src, NuMode::Cbv, 20).unwrap();
        assert!(run.halted);
        assert!(report.holds(), "{report:?}");
        let rules: Vec<Rule> = report.steps.iter().map(|s| s.rule).collect();
        assert!(rules.contains(&Rule::Get) && rules.contains(&Rule::Set));
        let get = report.steps.iter().find(|s| s.rule == Rule::Get).unwrap();
        assert!(get.region_steps.unwrap() >= 1);
    }

    #[test]
    fn empty_trace_simulates() {
        let t = NuTrace { initial: Term::Unit, mode: NuMode::Cbv, steps: vec![] };
        assert!(check_simulation(&t, &Locations::new(), &RegionContext::new()).unwrap().holds());
    }

    #[test]
    fn typing_is_preserved() {
        let src = parse_source(&format!("{}set(x, !*) || get(x)", header())).unwrap();
        let t = check_typing_preserved(&src.program, &src.locations, &src.regions).unwrap();
        assert!(t.holds(), "{t:?}");
    }

    #[test]
    fn run_program_counts_up() {
        use crate::encodings::{build_run, decode_nat, normalize};
        let src = build_run([1, 2, 3]);
        let out = run_nu(&src.program, NuMode::UnderBinders, Strategy::CbvLeftmost, 100_000).unwrap();
        assert!(out.halted);
        let mut got = BTreeMap::new();
        for (_, l, v) in top_stores(strip_prefix(&out.final_program).1) {
            let Term::Modal(Modality::Bang, n) = v.peel() else { panic!("store holds {v:?}") };
            got.insert(loc_name(&l).to_string(), decode_nat(&normalize(n).unwrap()).unwrap());
        }
        let want: BTreeMap<String, usize> = [("x", 3), ("y", 4), ("z", 5)].map(|(k, v)| (k.to_string(), v)).into();
        assert_eq!(got, want);
    }

    #[test]
    fn overwriting_a_stored_location_is_not_matched() {
        // The region write adds a second store next to the written-back old value.
        let src = parse_source(&format!("{}set(x, let !y = get(x) in !y) || x <= !*", header())).unwrap();
        let (_, report) = simulate_source(&src, NuMode::UnderBinders, 20).unwrap();
        let get = report.steps.iter().find(|s| s.rule == Rule::Get).unwrap();
        assert_eq!(get.region_steps, Some(4));
        let set = report.steps.iter().find(|s| s.rule == Rule::Set).unwrap();
        assert_eq!(set.region_steps, None);
        assert!(!report.holds());
    }
}
