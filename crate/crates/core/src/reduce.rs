//! The three reduction relations, redex enumeration, contraction, seeded
//! scheduling and stuck-state classification.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::syntax::{
    free_vars, par_components, resolve_head, size, substitute, Address, Loc, MeasureError, Modality, Name,
    RegionContext, SizeConvention, Term,
};
use crate::trace::{Trace, TraceStep};

pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Reduction in any context.
    Full,
    /// Any context that does not enter a `!`-term.
    OuterBang,
    /// Left-to-right call-by-value.
    Cbv,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Full => "full",
            Relation::OuterBang => "outer",
            Relation::Cbv => "cbv",
        })
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Relation::Full),
            "outer" | "outer_bang" | "outer-bang" => Ok(Relation::OuterBang),
            "cbv" => Ok(Relation::Cbv),
            _ => Err(format!("unknown relation `{s}` (expected full, outer or cbv)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Beta,
    Bang,
    Para,
    Get,
    Set,
    Gc,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Beta => "beta",
            Rule::Bang => "bang",
            Rule::Para => "para",
            Rule::Get => "get",
            Rule::Set => "set",
            Rule::Gc => "gc",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Redex {
    pub rule: Rule,
    pub address: Address,
    pub depth: usize,
    /// For `get`: address of the consumed store.
    pub store: Option<Address>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "seed")]
pub enum Strategy {
    CbvLeftmost,
    ShallowFirst,
    Random(u64),
    DeepFirst,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::CbvLeftmost => write!(f, "cbv"),
            Strategy::ShallowFirst => write!(f, "shallow"),
            Strategy::Random(s) => write!(f, "random({s})"),
            Strategy::DeepFirst => write!(f, "deepfirst"),
        }
    }
}

impl Strategy {
    /// Parses a strategy name; `random` takes its seed from `seed`.
    pub fn parse(s: &str, seed: u64) -> Result<Strategy, String> {
        match s {
            "cbv" | "leftmost" => Ok(Strategy::CbvLeftmost),
            "shallow" | "shallow-first" => Ok(Strategy::ShallowFirst),
            "random" => Ok(Strategy::Random(seed)),
            "deepfirst" | "deep-first" => Ok(Strategy::DeepFirst),
            _ => Err(format!("unknown strategy `{s}` (expected cbv, shallow, random or deepfirst)")),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Strategy::Random(s) => Some(*s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ReduceError {
    #[error("program is not in call-by-value syntax at {address}: {reason}")]
    CbvSyntax { address: Address, reason: String },
    #[error("redex {rule} at {address} does not apply to this program")]
    StaleRedex { rule: Rule, address: Address },
    #[error("shallow-first invariant violated: redex at depth {found} after reaching depth {level}")]
    ShallowFirstViolation { level: usize, found: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Checks the call-by-value syntax: `!M` only on values, stores hold values.
pub fn check_cbv_syntax(p: &Term) -> Result<(), ReduceError> {
    fn go(t: &Term, addr: &mut Address) -> Result<(), ReduceError> {
        let t = t.peel();
        let bad =
            |addr: &Address, reason: &str| Err(ReduceError::CbvSyntax { address: addr.clone(), reason: reason.into() });
        match t {
            Term::Modal(Modality::Bang, b) if !b.is_value() => return bad(addr, "!M requires M to be a value"),
            Term::Store(_, b) if !b.is_value() => return bad(addr, "stores must hold values"),
            _ => {}
        }
        for (i, c) in t.children().into_iter().enumerate() {
            addr.0.push(i as u8);
            go(c, addr)?;
            addr.0.pop();
        }
        Ok(())
    }
    go(p, &mut Address::root())
}

/// Stores on the top-level parallel chain, with their addresses.
pub fn top_stores(p: &Term) -> Vec<(Address, Loc, &Term)> {
    fn go<'a>(t: &'a Term, addr: &mut Address, out: &mut Vec<(Address, Loc, &'a Term)>) {
        match t.peel() {
            Term::Par(a, b) => {
                addr.0.push(0);
                go(a, addr, out);
                addr.0.pop();
                addr.0.push(1);
                go(b, addr, out);
                addr.0.pop();
            }
            Term::Store(l, body) => out.push((addr.clone(), l.clone(), body)),
            _ => {}
        }
    }
    let mut out = Vec::new();
    go(p, &mut Address::root(), &mut out);
    out
}

fn is_unit(t: &Term) -> bool {
    matches!(t.peel(), Term::Unit)
}

struct Finder<'a> {
    rel: Relation,
    rc: &'a RegionContext,
    stores: Vec<(Address, Loc, &'a Term)>,
    out: Vec<Redex>,
    /// Non-store components of the parallel chain being walked.
    chain: Option<usize>,
    /// Binders crossed so far; a location variable they bind is not a location.
    bound: Vec<Name>,
}

/// Number of components of the chain rooted at `t` that are not stores.
fn chain_terms(t: &Term) -> usize {
    par_components(t).into_iter().filter(|c| !c.is_store()).count()
}

impl Finder<'_> {
    fn redex_here(&mut self, t: &Term, addr: &Address, depth: usize, chain_terms: usize) {
        let cbv = self.rel == Relation::Cbv;
        let is_bound = |l: &Loc| matches!(l, Loc::Var(x) if self.bound.contains(x));
        match t {
            Term::Get(l) | Term::Set(l, _) if is_bound(l) => return,
            _ => {}
        }
        let mut push = |rule, store| {
            self.out.push(Redex { rule, address: addr.clone(), depth, store });
        };
        match t {
            Term::App(f, a) => {
                if matches!(f.peel(), Term::Lam(..)) && (!cbv || a.is_value()) {
                    push(Rule::Beta, None);
                }
            }
            Term::Let(m, _, bound, _) => {
                if let Term::Modal(m2, inner) = bound.peel() {
                    if m == m2 && (!cbv || inner.is_value()) {
                        push(if *m == Modality::Bang { Rule::Bang } else { Rule::Para }, None);
                    }
                }
            }
            Term::Set(_, body) => {
                let ok = if cbv { body.is_value() } else { free_vars(body).is_empty() };
                if ok {
                    push(Rule::Set, None);
                }
            }
            Term::Par(a, b) => {
                // `⋆ ∥ M` erases ⋆ next to a term, never next to stores alone.
                if (is_unit(a) || is_unit(b)) && chain_terms >= 2 {
                    push(Rule::Gc, None);
                }
            }
            Term::Get(l) => {
                let matching: Vec<Address> = self
                    .stores
                    .iter()
                    .filter(|(s, sl, _)| sl == l && !s.is_prefix_of(addr))
                    .map(|(s, _, _)| s.clone())
                    .collect();
                for s in matching {
                    self.out.push(Redex { rule: Rule::Get, address: addr.clone(), depth, store: Some(s) });
                }
            }
            _ => {}
        }
    }

    fn under<R>(&mut self, x: &Name, f: impl FnOnce(&mut Self) -> R) -> R {
        self.bound.push(x.clone());
        let r = f(self);
        self.bound.pop();
        r
    }

    fn walk(&mut self, t: &Term, addr: &mut Address, depth: usize) -> Result<(), MeasureError> {
        let t = t.peel();
        let inherited = self.chain.take();
        let chain = match t {
            Term::Par(..) => Some(inherited.unwrap_or_else(|| chain_terms(t))),
            _ => None,
        };
        self.redex_here(t, addr, depth, chain.unwrap_or(0));
        let mut visit = |this: &mut Self, i: u8, c: &Term, d: usize| {
            this.chain = chain;
            addr.0.push(i);
            let r = this.walk(c, addr, d);
            addr.0.pop();
            r
        };
        match (self.rel, t) {
            (_, Term::Var(_) | Term::Region(_) | Term::Unit | Term::Get(_)) => Ok(()),
            (Relation::Cbv, Term::Lam(..)) => Ok(()),
            (_, Term::Lam(x, _, b)) => self.under(x, |this| visit(this, 0, b, depth)),
            (Relation::Cbv, Term::App(a, b)) => {
                visit(self, 0, a, depth)?;
                if a.is_value() {
                    visit(self, 1, b, depth)?;
                }
                Ok(())
            }
            (_, Term::App(a, b) | Term::Par(a, b)) => {
                visit(self, 0, a, depth)?;
                visit(self, 1, b, depth)
            }
            (Relation::Full, Term::Modal(_, b)) => visit(self, 0, b, depth + 1),
            (_, Term::Modal(Modality::Bang, _)) => Ok(()),
            (_, Term::Modal(Modality::Para, b)) => visit(self, 0, b, depth + 1),
            (Relation::Cbv, Term::Let(_, _, a, _)) => visit(self, 0, a, depth),
            (_, Term::Let(_, x, a, b)) => {
                visit(self, 0, a, depth)?;
                self.under(x, |this| visit(this, 1, b, depth))
            }
            (_, Term::Set(_, b)) => visit(self, 0, b, depth),
            (Relation::Cbv, Term::Store(..)) => Ok(()),
            (_, Term::Store(l, b)) => {
                let d = match l {
                    Loc::Region(r) => depth + self.rc.depth(r).ok_or_else(|| MeasureError::MissingRegion(r.clone()))?,
                    Loc::Var(_) => depth,
                };
                visit(self, 0, b, d)
            }
            (_, Term::Nu(x, _, b)) => self.under(x, |this| visit(this, 0, b, depth)),
            (_, Term::Gen(..) | Term::Inst(..)) => unreachable!("peeled"),
        }
    }
}

/// All redexes of `p` for the relation, sorted leftmost-first (pre-order).
pub fn find_redexes(p: &Term, rel: Relation, rc: &RegionContext) -> Result<Vec<Redex>, ReduceError> {
    if rel == Relation::Cbv {
        check_cbv_syntax(p)?;
    }
    let mut f = Finder { rel, rc, stores: top_stores(p), out: Vec::new(), chain: None, bound: Vec::new() };
    f.walk(p, &mut Address::root(), 0)?;
    let mut out = f.out;
    out.sort_by(|a, b| (&a.address, &a.store).cmp(&(&b.address, &b.store)));
    Ok(out)
}

/// Removes the node at `addr` from its parent `||`, keeping the sibling.
fn remove_from_par(p: &Term, addr: &Address) -> Result<Term, ReduceError> {
    let stale = || ReduceError::StaleRedex { rule: Rule::Get, address: addr.clone() };
    let (&last, parent) = addr.0.split_last().ok_or_else(stale)?;
    p.replace_at(parent, &mut |t| match t {
        Term::Par(a, b) => {
            if last == 0 {
                (**b).clone()
            } else {
                (**a).clone()
            }
        }
        other => other.clone(),
    })
    .map_err(|_| stale())
}

/// Contracts one redex.
pub fn step(p: &Term, redex: &Redex) -> Result<Term, ReduceError> {
    let stale = || ReduceError::StaleRedex { rule: redex.rule, address: redex.address.clone() };
    let node = p.at(&redex.address).ok_or_else(stale)?.clone();
    let mut failed = false;
    let mut contract = |t: &Term| -> Term {
        match (redex.rule, t) {
            (Rule::Beta, Term::App(f, a)) => match resolve_head(f).peel() {
                Term::Lam(x, _, body) => substitute(body, x, a),
                _ => {
                    failed = true;
                    t.clone()
                }
            },
            (Rule::Bang | Rule::Para, Term::Let(_, x, bound, body)) => match resolve_head(bound).peel() {
                Term::Modal(_, n) => substitute(body, x, n),
                _ => {
                    failed = true;
                    t.clone()
                }
            },
            (Rule::Set, Term::Set(..)) => Term::Unit,
            (Rule::Gc, Term::Par(a, b)) => {
                if is_unit(a) {
                    (**b).clone()
                } else if is_unit(b) {
                    (**a).clone()
                } else {
                    failed = true;
                    t.clone()
                }
            }
            _ => {
                failed = true;
                t.clone()
            }
        }
    };
    match redex.rule {
        Rule::Get => {
            let Term::Get(l) = node else { return Err(stale()) };
            let s = redex.store.as_ref().ok_or_else(stale)?;
            let content = match p.at(s) {
                Some(Term::Store(sl, body)) if *sl == l && !s.is_prefix_of(&redex.address) => (**body).clone(),
                _ => return Err(stale()),
            };
            let replaced = p.replace_at(&redex.address.0, &mut |_| content.clone()).map_err(|_| stale())?;
            remove_from_par(&replaced, s)
        }
        Rule::Set => {
            let Term::Set(l, body) = &node else { return Err(stale()) };
            let q = p.replace_at(&redex.address.0, &mut contract).map_err(|_| stale())?;
            Ok(Term::par(q, Term::Store(l.clone(), body.clone())))
        }
        _ => {
            let q = p.replace_at(&redex.address.0, &mut contract).map_err(|_| stale())?;
            if failed {
                Err(stale())
            } else {
                Ok(q)
            }
        }
    }
}

/// Outcome of [`run`].
#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: Trace,
    pub final_program: Term,
    /// True when no redex is left; false when fuel ran out.
    pub halted: bool,
    pub max_plain_size: usize,
    pub max_weighted_size: usize,
}

/// Picks redexes according to a strategy.
pub struct Scheduler {
    strategy: Strategy,
    rng: Option<ChaCha8Rng>,
    level: usize,
}

impl Scheduler {
    pub fn new(strategy: Strategy) -> Self {
        let rng = strategy.seed().map(ChaCha8Rng::seed_from_u64);
        Scheduler { strategy, rng, level: 0 }
    }

    /// Chooses among redexes sorted leftmost-first.
    pub fn choose(&mut self, redexes: &[Redex]) -> Result<usize, ReduceError> {
        assert!(!redexes.is_empty());
        Ok(match self.strategy {
            Strategy::CbvLeftmost => 0,
            Strategy::ShallowFirst => {
                let min = redexes.iter().map(|r| r.depth).min().expect("non-empty");
                if min < self.level {
                    return Err(ReduceError::ShallowFirstViolation { level: self.level, found: min });
                }
                self.level = min;
                redexes.iter().position(|r| r.depth == min).expect("present")
            }
            Strategy::DeepFirst => {
                let max = redexes.iter().map(|r| r.depth).max().expect("non-empty");
                redexes.iter().position(|r| r.depth == max).expect("present")
            }
            Strategy::Random(_) => {
                let rng = self.rng.as_mut().expect("random strategy has a generator");
                rng.gen_range(0..redexes.len())
            }
        })
    }
}

/// Runs `p` until no redex is left or `fuel` steps were taken.
pub fn run(
    p: &Term,
    rel: Relation,
    strategy: Strategy,
    rc: &RegionContext,
    fuel: u64,
) -> Result<RunResult, ReduceError> {
    run_with(p, rel, strategy, rc, fuel, true)
}

/// Like [`run`]; when `record` is false the trace keeps step metadata but
/// stores `*` in place of intermediate programs.
pub fn run_with(
    p: &Term,
    rel: Relation,
    strategy: Strategy,
    rc: &RegionContext,
    fuel: u64,
    record: bool,
) -> Result<RunResult, ReduceError> {
    let mut sched = Scheduler::new(strategy);
    let mut cur = p.clone();
    let mut trace = Trace::new(cur.clone(), rc.clone(), rel, strategy);
    let mut max_plain = size(&cur, SizeConvention::Plain);
    let mut max_weighted = size(&cur, SizeConvention::Weighted);
    let mut steps = 0u64;
    loop {
        let redexes = find_redexes(&cur, rel, rc)?;
        if redexes.is_empty() {
            return Ok(RunResult {
                trace,
                final_program: cur,
                halted: true,
                max_plain_size: max_plain,
                max_weighted_size: max_weighted,
            });
        }
        if steps >= fuel {
            return Ok(RunResult {
                trace,
                final_program: cur,
                halted: false,
                max_plain_size: max_plain,
                max_weighted_size: max_weighted,
            });
        }
        let chosen = &redexes[sched.choose(&redexes)?];
        cur = step(&cur, chosen)?;
        steps += 1;
        max_plain = max_plain.max(size(&cur, SizeConvention::Plain));
        max_weighted = max_weighted.max(size(&cur, SizeConvention::Weighted));
        trace.steps.push(TraceStep {
            step: steps,
            rule: chosen.rule,
            address: chosen.address.clone(),
            depth: chosen.depth,
            store: chosen.store.clone(),
            program: if record { cur.clone() } else { Term::Unit },
            seed: strategy.seed(),
        });
    }
}

/// Shape of a stuck program.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StuckReport {
    pub values: Vec<Address>,
    /// Threads blocked on reading a region with no assignment.
    pub blocked: Vec<(Address, Name)>,
    pub stores: Vec<Address>,
    /// Threads fitting neither shape.
    pub violations: Vec<Address>,
}

impl StuckReport {
    pub fn is_progress_shape(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Subterms in hole position of every call-by-value decomposition of a
/// non-value thread.
fn cbv_foci<'a>(t: &'a Term, addr: &mut Address, out: &mut Vec<(Address, &'a Term)>) {
    let t = t.peel();
    let mut sub = |i: u8, c: &'a Term, out: &mut Vec<(Address, &'a Term)>| {
        addr.0.push(i);
        cbv_foci(c, addr, out);
        addr.0.pop();
    };
    match t {
        Term::App(a, b) if !a.is_value() => sub(0, a, out),
        Term::App(_, b) if !b.is_value() => sub(1, b, out),
        Term::Modal(Modality::Para, b) if !b.is_value() => sub(0, b, out),
        Term::Let(_, _, a, _) if !a.is_value() => sub(0, a, out),
        Term::Set(_, b) if !b.is_value() => sub(0, b, out),
        Term::Par(a, b) => {
            if !a.is_value() {
                sub(0, a, out)
            }
            if !b.is_value() {
                sub(1, b, out)
            }
            if a.is_value() && b.is_value() {
                out.push((addr.clone(), t))
            }
        }
        _ => out.push((addr.clone(), t)),
    }
}

/// Splits a stuck call-by-value program into values, blocked reads and stores.
pub fn classify_stuck(p: &Term) -> StuckReport {
    let mut report = StuckReport::default();
    let stores = top_stores(p);
    let mut threads = Vec::new();
    fn chain<'a>(t: &'a Term, addr: &mut Address, out: &mut Vec<(Address, &'a Term)>) {
        match t.peel() {
            Term::Par(a, b) => {
                addr.0.push(0);
                chain(a, addr, out);
                addr.0.pop();
                addr.0.push(1);
                chain(b, addr, out);
                addr.0.pop();
            }
            other => out.push((addr.clone(), other)),
        }
    }
    chain(p, &mut Address::root(), &mut threads);
    for (addr, t) in threads {
        if t.is_store() {
            report.stores.push(addr);
            continue;
        }
        if t.is_value() {
            report.values.push(addr);
            continue;
        }
        let mut foci = Vec::new();
        cbv_foci(t, &mut addr.clone(), &mut foci);
        let mut blocked_on = None;
        let all_blocked = foci.iter().all(|(_, f)| match f {
            Term::Get(l) => {
                let empty = !stores.iter().any(|(_, sl, _)| sl == l);
                if empty {
                    let (Loc::Region(r) | Loc::Var(r)) = l;
                    blocked_on.get_or_insert(r.clone());
                }
                empty
            }
            _ => false,
        });
        match (all_blocked, blocked_on) {
            (true, Some(r)) => report.blocked.push((addr, r)),
            _ => report.violations.push(addr),
        }
    }
    report
}
