//! Unfolding at a depth, the size measures built on it, and checks of the
//! polynomial bounds on concrete runs.

use std::fmt;

use serde::Serialize;

use crate::depth::well_formed;
use crate::reduce::{find_redexes, run_with, step, Redex, ReduceError, Relation, Strategy};
use crate::syntax::{count_occ, depth, size, Loc, MeasureError, Modality, Name, RegionContext, SizeConvention, Term};

/// Largest fuel handed to a bounded run, whatever the bound says.
pub const FUEL_CAP: u64 = 10_000_000;

/// A program after unfolding. Only measured, never reduced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Unfolded {
    /// Copied unchanged.
    Verbatim(Term),
    Lam(Name, Box<Unfolded>),
    App(Box<Unfolded>, Box<Unfolded>),
    Modal(Modality, Box<Unfolded>),
    Let(Modality, Name, Box<Unfolded>, Box<Unfolded>),
    Set(Loc, Box<Unfolded>),
    Store(Loc, Box<Unfolded>),
    Par(Box<Unfolded>, Box<Unfolded>),
    Nu(Name, Box<Unfolded>),
    /// `k` copies of a `!`-term standing for its future duplicates.
    Bag(usize, Term),
}

/// `⟨p⟩ᵢ`.
pub fn unfold(p: &Term, i: usize) -> Unfolded {
    let b = |t: &Term, i| Box::new(unfold(t, i));
    match p.peel() {
        t @ (Term::Var(_) | Term::Region(_) | Term::Unit | Term::Get(_)) => Unfolded::Verbatim(t.clone()),
        Term::Lam(x, _, m) => Unfolded::Lam(x.clone(), b(m, i)),
        Term::App(m, n) => Unfolded::App(b(m, i), b(n, i)),
        t @ Term::Modal(_, _) if i == 0 => Unfolded::Verbatim(t.clone()),
        Term::Modal(m, body) => Unfolded::Modal(*m, b(body, i - 1)),
        Term::Let(Modality::Bang, x, bound, body)
            if i == 0 && matches!(bound.peel(), Term::Modal(Modality::Bang, _)) =>
        {
            let body = unfold(body, 0);
            let k = body.count_occ(x);
            Unfolded::Let(Modality::Bang, x.clone(), Box::new(Unfolded::Bag(k, bound.peel().clone())), Box::new(body))
        }
        Term::Let(m, x, bound, body) => Unfolded::Let(*m, x.clone(), b(bound, i), b(body, i)),
        Term::Set(l, m) => Unfolded::Set(l.clone(), b(m, i)),
        Term::Store(l, m) => Unfolded::Store(l.clone(), b(m, i)),
        Term::Par(m, n) => Unfolded::Par(b(m, i), b(n, i)),
        Term::Nu(x, _, m) => Unfolded::Nu(x.clone(), b(m, i)),
        Term::Gen(..) | Term::Inst(..) => unreachable!("peeled"),
    }
}

impl Unfolded {
    /// Weighted size; a bag weighs its number of copies times the copy.
    pub fn size(&self) -> usize {
        let w = SizeConvention::Weighted;
        match self {
            Unfolded::Verbatim(t) => size(t, w),
            Unfolded::Lam(_, m) | Unfolded::Modal(_, m) | Unfolded::Nu(_, m) => 1 + m.size(),
            Unfolded::App(m, n) | Unfolded::Let(_, _, m, n) => 1 + m.size() + n.size(),
            Unfolded::Set(_, m) => 2 + m.size(),
            Unfolded::Store(_, m) => m.size(),
            Unfolded::Par(m, n) => m.size() + n.size(),
            Unfolded::Bag(k, t) => k * size(t, w),
        }
    }

    /// Free occurrences of `x`, copies in bags counted with multiplicity.
    pub fn count_occ(&self, x: &str) -> usize {
        let loc = |l: &Loc| usize::from(matches!(l, Loc::Var(y) if &**y == x));
        match self {
            Unfolded::Verbatim(t) => count_occ(x, t),
            Unfolded::Lam(y, m) | Unfolded::Nu(y, m) => {
                if &**y == x {
                    0
                } else {
                    m.count_occ(x)
                }
            }
            Unfolded::Modal(_, m) => m.count_occ(x),
            Unfolded::App(m, n) | Unfolded::Par(m, n) => m.count_occ(x) + n.count_occ(x),
            Unfolded::Let(_, y, m, n) => m.count_occ(x) + if &**y == x { 0 } else { n.count_occ(x) },
            Unfolded::Set(l, m) | Unfolded::Store(l, m) => loc(l) + m.count_occ(x),
            Unfolded::Bag(k, t) => k * count_occ(x, t),
        }
    }

    /// `fo(⟨p⟩ᵢ)`: total number of free occurrences.
    pub fn count_all_free(&self) -> usize {
        let mut names = std::collections::BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut names);
        names.iter().map(|x| self.count_occ(x)).sum()
    }

    fn collect_free(&self, bound: &mut Vec<Name>, out: &mut std::collections::BTreeSet<Name>) {
        let mut add_term = |t: &Term, bound: &Vec<Name>| {
            out.extend(crate::syntax::free_vars(t).into_iter().filter(|x| !bound.contains(x)));
        };
        match self {
            Unfolded::Verbatim(t) | Unfolded::Bag(_, t) => add_term(t, bound),
            Unfolded::Lam(y, m) | Unfolded::Nu(y, m) => {
                bound.push(y.clone());
                m.collect_free(bound, out);
                bound.pop();
            }
            Unfolded::Modal(_, m) => m.collect_free(bound, out),
            Unfolded::App(m, n) | Unfolded::Par(m, n) => {
                m.collect_free(bound, out);
                n.collect_free(bound, out);
            }
            Unfolded::Let(_, y, m, n) => {
                m.collect_free(bound, out);
                bound.push(y.clone());
                n.collect_free(bound, out);
                bound.pop();
            }
            Unfolded::Set(l, m) | Unfolded::Store(l, m) => {
                if let Loc::Var(y) = l {
                    if !bound.contains(y) {
                        out.insert(y.clone());
                    }
                }
                m.collect_free(bound, out);
            }
        }
    }
}

impl fmt::Display for Unfolded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let loc = |l: &Loc| match l {
            Loc::Region(r) => format!("#{r}"),
            Loc::Var(x) => x.to_string(),
        };
        match self {
            Unfolded::Verbatim(t) => match t {
                Term::Var(_) | Term::Region(_) | Term::Unit | Term::Get(_) => write!(f, "{t}"),
                _ => write!(f, "({t})"),
            },
            Unfolded::Lam(x, m) => write!(f, "(\\{x}. {m})"),
            Unfolded::App(m, n) => write!(f, "({m} {n})"),
            Unfolded::Modal(m, b) => write!(f, "{}{b}", m.symbol()),
            Unfolded::Let(m, x, a, b) => write!(f, "(let {}{x} = {a} in {b})", m.symbol()),
            Unfolded::Set(l, m) => write!(f, "set({}, {m})", loc(l)),
            Unfolded::Store(l, m) => write!(f, "({} <= {m})", loc(l)),
            Unfolded::Par(m, n) => write!(f, "({m} || {n})"),
            Unfolded::Nu(x, m) => write!(f, "(nu {x}. {m})"),
            Unfolded::Bag(k, t) => write!(f, "[{k} x ({t})]"),
        }
    }
}

/// Sizes of `⟨p⟩ᵢ` before and after contracting `redex` at its depth `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Monotonicity {
    pub before: usize,
    pub after: usize,
}

impl Monotonicity {
    pub fn holds(&self) -> bool {
        self.after <= self.before
    }
}

/// Measures `|⟨p'⟩ᵢ| ≤ |⟨p⟩ᵢ|` for `p → p'` at depth `i`.
pub fn check_unfold_monotone(p: &Term, redex: &Redex) -> Result<Monotonicity, ReduceError> {
    let q = step(p, redex)?;
    let i = redex.depth;
    Ok(Monotonicity { before: unfold(p, i).size(), after: unfold(&q, i).size() })
}

/// Per-depth quadratic measures of `⟨p⟩ᵢ` against `|p|`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QuadraticRow {
    pub depth: usize,
    pub free_occurrences: usize,
    pub unfolded_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QuadraticReport {
    pub size: usize,
    pub rows: Vec<QuadraticRow>,
}

impl QuadraticReport {
    pub fn occurrences_hold(&self) -> bool {
        self.rows.iter().all(|r| r.free_occurrences <= self.size)
    }

    pub fn size_holds(&self) -> bool {
        let n = self.size;
        self.rows.iter().all(|r| r.unfolded_size <= n * n.saturating_sub(1))
    }

    pub fn holds(&self) -> bool {
        self.occurrences_hold() && self.size_holds()
    }
}

/// Measures `fo(⟨p⟩ᵢ)` and `|⟨p⟩ᵢ|` for every `i ≤ d(p)`.
pub fn check_quadratic(p: &Term, rc: &RegionContext) -> Result<QuadraticReport, MeasureError> {
    let d = depth(p, rc)?;
    let rows = (0..=d)
        .map(|i| {
            let u = unfold(p, i);
            QuadraticRow { depth: i, free_occurrences: u.count_all_free(), unfolded_size: u.size() }
        })
        .collect();
    Ok(QuadraticReport { size: size(p, SizeConvention::Weighted), rows })
}

/// Result of exhausting the redexes of one depth.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SquaringReport {
    pub depth: usize,
    pub initial_size: usize,
    pub final_size: usize,
    pub steps: usize,
    /// False when the run was cut off after more than `initial_size` steps.
    pub exhausted: bool,
}

impl SquaringReport {
    pub fn holds(&self) -> bool {
        let n = self.initial_size;
        self.exhausted && self.final_size <= n * n.saturating_sub(1) && self.steps <= n
    }
}

/// Reduces leftmost outer-bang redexes of depth `i` until none is left.
pub fn check_squaring(p: &Term, i: usize, rc: &RegionContext) -> Result<SquaringReport, ReduceError> {
    let n = size(p, SizeConvention::Weighted);
    let mut cur = p.erase();
    let mut steps = 0;
    let exhausted = loop {
        let next = find_redexes(&cur, Relation::OuterBang, rc)?.into_iter().find(|r| r.depth == i);
        match next {
            None => break true,
            Some(_) if steps > n => break false,
            Some(r) => {
                cur = step(&cur, &r)?;
                steps += 1;
            }
        }
    };
    Ok(SquaringReport { depth: i, initial_size: n, final_size: size(&cur, SizeConvention::Weighted), steps, exhausted })
}

/// `n^(2^d)`, saturating.
pub fn polynomial_bound(n: usize, d: usize) -> u128 {
    let mut b = n as u128;
    for _ in 0..d {
        b = b.saturating_mul(b);
    }
    b
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundReport {
    pub relation: String,
    pub strategy: String,
    pub size: usize,
    pub plain_size: usize,
    pub depth: usize,
    pub bound: u128,
    pub steps: u64,
    pub final_size: usize,
    pub max_size: usize,
    pub max_plain_size: usize,
    pub terminated: bool,
    pub steps_within_bound: bool,
    pub size_within_bound: bool,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.terminated && self.steps_within_bound && self.size_within_bound
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "relation: {}", self.relation)?;
        writeln!(f, "strategy: {}", self.strategy)?;
        writeln!(f, "size: {}", self.size)?;
        writeln!(f, "plain_size: {}", self.plain_size)?;
        writeln!(f, "depth: {}", self.depth)?;
        writeln!(f, "bound: {}", self.bound)?;
        writeln!(f, "steps: {}", self.steps)?;
        writeln!(f, "final_size: {}", self.final_size)?;
        writeln!(f, "max_size: {}", self.max_size)?;
        writeln!(f, "max_plain_size: {}", self.max_plain_size)?;
        writeln!(f, "terminated: {}", self.terminated)?;
        writeln!(f, "steps_within_bound: {}", self.steps_within_bound)?;
        writeln!(f, "size_within_bound: {}", self.size_within_bound)?;
        write!(f, "pass: {}", self.pass())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BoundError {
    #[error("program is not well-formed: {0}")]
    NotWellFormed(String),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

/// Runs a well-formed program with fuel `n^(2^d) + 1` and compares the
/// step count and every intermediate weighted size with the bound.
pub fn verify_bound(
    p: &Term,
    strategy: Strategy,
    rel: Relation,
    rc: &RegionContext,
) -> Result<BoundReport, BoundError> {
    well_formed(p, rc).map_err(|e| BoundError::NotWellFormed(e.to_string()))?;
    let n = size(p, SizeConvention::Weighted);
    let d = depth(p, rc).map_err(ReduceError::from)?;
    let bound = polynomial_bound(n, d);
    let fuel = bound.saturating_add(1).min(FUEL_CAP as u128) as u64;
    let r = run_with(p, rel, strategy, rc, fuel, false)?;
    let steps = r.trace.steps.len() as u64;
    Ok(BoundReport {
        relation: rel.to_string(),
        strategy: strategy.to_string(),
        size: n,
        plain_size: size(p, SizeConvention::Plain),
        depth: d,
        bound,
        steps,
        final_size: size(&r.final_program, SizeConvention::Weighted),
        max_size: r.max_weighted_size,
        max_plain_size: r.max_plain_size,
        terminated: r.halted,
        steps_within_bound: (steps as u128) <= bound,
        size_within_bound: (r.max_weighted_size as u128) <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_term;
    use crate::programs;
    use crate::reduce::Rule;

    fn rc() -> RegionContext {
        RegionContext::from_depths([("r", 0)])
    }

    #[test]
    fn unit_and_bang() {
        assert_eq!(unfold(&Term::Unit, 3), Unfolded::Verbatim(Term::Unit));
        let m = parse_term("!(f x)").unwrap();
        assert_eq!(unfold(&m, 0), Unfolded::Verbatim(m.clone()));
    }

    #[test]
    fn four_copies() {
        let p = programs::four_copies(parse_term("m").unwrap());
        let u = unfold(&p, 0);
        let Unfolded::Let(_, _, bag, body) = &u else { panic!("{u}") };
        assert_eq!(**bag, Unfolded::Bag(4, parse_term("!m").unwrap()));
        assert_eq!(body.count_occ("x"), 4);
        // Contracting the outer `let !` lowers the measure.
        let redexes = find_redexes(&p, Relation::OuterBang, &rc()).unwrap();
        let outer = redexes.iter().find(|r| r.rule == Rule::Bang && r.address.is_empty()).unwrap();
        let m = check_unfold_monotone(&p, outer).unwrap();
        assert!(m.after < m.before, "{m:?}");
    }

    #[test]
    fn set_strictly_decreases() {
        let p = parse_term("set(#r, *)").unwrap();
        let r = &find_redexes(&p, Relation::Full, &rc()).unwrap()[0];
        let m = check_unfold_monotone(&p, r).unwrap();
        assert!(m.after < m.before);
    }

    #[test]
    fn quadratic_apply_stored() {
        let q = check_quadratic(&programs::apply_stored(), &rc()).unwrap();
        assert_eq!(q.rows.len(), 2);
        assert!(q.holds(), "{q:?}");
    }

    #[test]
    fn quadratic_unit_is_tight() {
        // |⋆| = 1 gives 1·0 = 0, but ⟨⋆⟩ has size 1.
        let q = check_quadratic(&Term::Unit, &rc()).unwrap();
        assert!(q.occurrences_hold());
        assert!(!q.size_holds());
    }

    #[test]
    fn squaring() {
        let s = check_squaring(&programs::apply_stored(), 0, &rc()).unwrap();
        assert!(s.holds(), "{s:?}");
        let s = check_squaring(&parse_term("\\x. x").unwrap(), 0, &rc()).unwrap();
        assert_eq!(s.steps, 0);
    }

    #[test]
    fn bounds() {
        let r = verify_bound(&Term::Unit, Strategy::ShallowFirst, Relation::OuterBang, &rc()).unwrap();
        assert_eq!((r.steps, r.bound), (0, 1));
        assert!(r.pass());
        let r = verify_bound(&programs::apply_stored(), Strategy::ShallowFirst, Relation::OuterBang, &rc()).unwrap();
        assert!(r.pass(), "{r}");
        assert_eq!(r.depth, 1);
        assert!(verify_bound(&programs::z_chain(2), Strategy::ShallowFirst, Relation::OuterBang, &rc()).is_err());
    }

    #[test]
    fn saturating_bound() {
        assert_eq!(polynomial_bound(3, 2), 81);
        assert_eq!(polynomial_bound(1000, 10), u128::MAX);
    }
}
