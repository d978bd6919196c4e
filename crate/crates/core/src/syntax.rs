//! Abstract syntax of programs, occurrence addresses, depth and size measures,
//! substitution and structural equivalence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::types::Type;

/// Variable, region and type-variable names.
pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

/// The two modalities: `!` (duplicable) and `§` (written `$` in source).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Bang,
    Para,
}

impl Modality {
    pub fn symbol(self) -> &'static str {
        match self {
            Modality::Bang => "!",
            Modality::Para => "$",
        }
    }
}

/// Target of a read, write or store: a region constant, or a memory-location
/// variable in the reference front-end.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Loc {
    Region(Name),
    Var(Name),
}

impl Loc {
    pub fn region(&self) -> Option<&Name> {
        match self {
            Loc::Region(r) => Some(r),
            Loc::Var(_) => None,
        }
    }
}

/// Terms, stores and programs share one tree type; stores are `Store` nodes
/// sitting on the top-level parallel chain.
///
/// `Gen`/`Inst` (explicit type abstraction and application) and the optional
/// binder annotations only matter to the type checker. They are transparent
/// for addressing, sizes and depths and are erased before reduction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Term {
    Var(Name),
    Region(Name),
    #[default]
    Unit,
    Lam(Name, Option<Type>, Box<Term>),
    App(Box<Term>, Box<Term>),
    Modal(Modality, Box<Term>),
    Let(Modality, Name, Box<Term>, Box<Term>),
    Get(Loc),
    Set(Loc, Box<Term>),
    Store(Loc, Box<Term>),
    Par(Box<Term>, Box<Term>),
    Gen(Name, Box<Term>),
    Inst(Box<Term>, Type),
    Nu(Name, Option<Type>, Box<Term>),
}

/// Node labels reported by [`occurrences`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Var(Name),
    Region(Name),
    Unit,
    Lam(Name),
    App,
    Modal(Modality),
    Let(Modality, Name),
    Get(Loc),
    Set(Loc),
    Store(Loc),
    Par,
    Nu(Name),
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Var(x) => write!(f, "{x}"),
            NodeKind::Region(r) => write!(f, "#{r}"),
            NodeKind::Unit => write!(f, "*"),
            NodeKind::Lam(x) => write!(f, "\\{x}"),
            NodeKind::App => write!(f, "@"),
            NodeKind::Modal(m) => write!(f, "{}", m.symbol()),
            NodeKind::Let(m, x) => write!(f, "let {}{x}", m.symbol()),
            NodeKind::Get(l) => write!(f, "get({})", LocDisplay(l)),
            NodeKind::Set(l) => write!(f, "set({})", LocDisplay(l)),
            NodeKind::Store(l) => write!(f, "{} <=", LocDisplay(l)),
            NodeKind::Par => write!(f, "||"),
            NodeKind::Nu(x) => write!(f, "nu {x}"),
        }
    }
}

pub(crate) struct LocDisplay<'a>(pub &'a Loc);

impl fmt::Display for LocDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Loc::Region(r) => write!(f, "#{r}"),
            Loc::Var(x) => write!(f, "{x}"),
        }
    }
}

/// Occurrence address: a word over {0,1} read from the root.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub Vec<u8>);

impl Address {
    pub fn root() -> Self {
        Address(Vec::new())
    }

    pub fn child(&self, i: u8) -> Self {
        let mut v = self.0.clone();
        v.push(i);
        Address(v)
    }

    pub fn is_prefix_of(&self, other: &Address) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "ε");
        }
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "ε" || s == "e" {
            return Ok(Address::root());
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(format!("invalid address character `{c}` in `{s}`")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Address)
    }
}

/// Region declarations: depth, plus an optional content type for typing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegionContext {
    entries: BTreeMap<Name, RegionInfo>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionInfo {
    pub depth: usize,
    pub ty: Option<Type>,
}

impl RegionContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an untyped context from `(region, depth)` pairs.
    pub fn from_depths<'a>(pairs: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        let mut rc = Self::new();
        for (r, d) in pairs {
            rc.insert(name(r), d, None);
        }
        rc
    }

    pub fn insert(&mut self, region: Name, depth: usize, ty: Option<Type>) {
        self.entries.insert(region, RegionInfo { depth, ty });
    }

    pub fn with(mut self, region: &str, depth: usize, ty: Option<Type>) -> Self {
        self.insert(name(region), depth, ty);
        self
    }

    pub fn get(&self, region: &str) -> Option<&RegionInfo> {
        self.entries.get(region)
    }

    pub fn depth(&self, region: &str) -> Option<usize> {
        self.entries.get(region).map(|i| i.depth)
    }

    pub fn contains(&self, region: &str) -> bool {
        self.entries.contains_key(region)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &RegionInfo)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SizeConvention {
    /// Every node counts 1.
    Plain,
    /// `||` and `r <=` count 0, `set(r, _)` counts 2, everything else 1.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MeasureError {
    #[error("address {0} does not denote an occurrence")]
    InvalidAddress(Address),
    #[error("region #{0} is missing from the region context")]
    MissingRegion(Name),
}

impl Term {
    pub fn var(x: &str) -> Term {
        Term::Var(name(x))
    }

    pub fn region(r: &str) -> Term {
        Term::Region(name(r))
    }

    pub fn lam(x: &str, body: Term) -> Term {
        Term::Lam(name(x), None, Box::new(body))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    pub fn bang(t: Term) -> Term {
        Term::Modal(Modality::Bang, Box::new(t))
    }

    pub fn para(t: Term) -> Term {
        Term::Modal(Modality::Para, Box::new(t))
    }

    pub fn let_bang(x: &str, bound: Term, body: Term) -> Term {
        Term::Let(Modality::Bang, name(x), Box::new(bound), Box::new(body))
    }

    pub fn let_para(x: &str, bound: Term, body: Term) -> Term {
        Term::Let(Modality::Para, name(x), Box::new(bound), Box::new(body))
    }

    pub fn get(r: &str) -> Term {
        Term::Get(Loc::Region(name(r)))
    }

    pub fn set(r: &str, t: Term) -> Term {
        Term::Set(Loc::Region(name(r)), Box::new(t))
    }

    pub fn store(r: &str, t: Term) -> Term {
        Term::Store(Loc::Region(name(r)), Box::new(t))
    }

    pub fn par(a: Term, b: Term) -> Term {
        Term::Par(Box::new(a), Box::new(b))
    }

    /// Right-nested parallel composition of a non-empty list.
    pub fn par_all(mut items: Vec<Term>) -> Term {
        let mut acc = items.pop().expect("par_all needs at least one component");
        while let Some(t) = items.pop() {
            acc = Term::par(t, acc);
        }
        acc
    }

    /// Strips type abstraction/application wrappers.
    pub fn peel(&self) -> &Term {
        let mut t = self;
        loop {
            match t {
                Term::Gen(_, b) => t = b,
                Term::Inst(b, _) => t = b,
                _ => return t,
            }
        }
    }

    /// Immediate subterms, wrappers included.
    pub fn direct_children(&self) -> Vec<&Term> {
        match self {
            Term::Var(_) | Term::Region(_) | Term::Unit | Term::Get(_) => vec![],
            Term::Lam(_, _, b) | Term::Modal(_, b) | Term::Nu(_, _, b) => vec![b],
            Term::Set(_, b) | Term::Store(_, b) | Term::Gen(_, b) | Term::Inst(b, _) => vec![b],
            Term::App(a, b) | Term::Let(_, _, a, b) | Term::Par(a, b) => vec![a, b],
        }
    }

    /// Children in address order, with wrappers peeled.
    pub fn children(&self) -> Vec<&Term> {
        match self.peel() {
            Term::Var(_) | Term::Region(_) | Term::Unit | Term::Get(_) => vec![],
            Term::Lam(_, _, b) | Term::Modal(_, b) | Term::Nu(_, _, b) => vec![b.peel()],
            Term::Set(_, b) | Term::Store(_, b) => vec![b.peel()],
            Term::App(a, b) | Term::Let(_, _, a, b) | Term::Par(a, b) => vec![a.peel(), b.peel()],
            Term::Gen(..) | Term::Inst(..) => unreachable!("peeled"),
        }
    }

    pub fn kind(&self) -> NodeKind {
        match self.peel() {
            Term::Var(x) => NodeKind::Var(x.clone()),
            Term::Region(r) => NodeKind::Region(r.clone()),
            Term::Unit => NodeKind::Unit,
            Term::Lam(x, _, _) => NodeKind::Lam(x.clone()),
            Term::App(..) => NodeKind::App,
            Term::Modal(m, _) => NodeKind::Modal(*m),
            Term::Let(m, x, _, _) => NodeKind::Let(*m, x.clone()),
            Term::Get(l) => NodeKind::Get(l.clone()),
            Term::Set(l, _) => NodeKind::Set(l.clone()),
            Term::Store(l, _) => NodeKind::Store(l.clone()),
            Term::Par(..) => NodeKind::Par,
            Term::Nu(x, _, _) => NodeKind::Nu(x.clone()),
            Term::Gen(..) | Term::Inst(..) => unreachable!("peeled"),
        }
    }

    /// Values of the call-by-value fragment: `x | * | r | \x.M | †V`.
    pub fn is_value(&self) -> bool {
        match self.peel() {
            Term::Var(_) | Term::Unit | Term::Region(_) | Term::Lam(..) => true,
            Term::Modal(_, v) => v.is_value(),
            _ => false,
        }
    }

    pub fn is_store(&self) -> bool {
        matches!(self.peel(), Term::Store(..))
    }

    /// Removes type abstractions, applications and binder annotations.
    pub fn erase(&self) -> Term {
        match self {
            Term::Var(_) | Term::Region(_) | Term::Unit | Term::Get(_) => self.clone(),
            Term::Lam(x, _, b) => Term::Lam(x.clone(), None, Box::new(b.erase())),
            Term::App(a, b) => Term::app(a.erase(), b.erase()),
            Term::Modal(m, b) => Term::Modal(*m, Box::new(b.erase())),
            Term::Let(m, x, a, b) => Term::Let(*m, x.clone(), Box::new(a.erase()), Box::new(b.erase())),
            Term::Set(l, b) => Term::Set(l.clone(), Box::new(b.erase())),
            Term::Store(l, b) => Term::Store(l.clone(), Box::new(b.erase())),
            Term::Par(a, b) => Term::par(a.erase(), b.erase()),
            Term::Gen(_, b) => b.erase(),
            Term::Inst(b, _) => b.erase(),
            Term::Nu(x, _, b) => Term::Nu(x.clone(), None, Box::new(b.erase())),
        }
    }

    /// Subterm at an address, wrappers peeled.
    pub fn at(&self, addr: &Address) -> Option<&Term> {
        let mut t = self.peel();
        for &i in &addr.0 {
            t = *t.children().get(i as usize)?;
        }
        Some(t)
    }

    /// Replaces the subterm at `addr` by `f(subterm)`.
    pub fn replace_at(&self, addr: &[u8], f: &mut dyn FnMut(&Term) -> Term) -> Result<Term, MeasureError> {
        let bad = || MeasureError::InvalidAddress(Address(addr.to_vec()));
        let Some((&i, rest)) = addr.split_first() else {
            // Wrappers belong to the enclosing position and survive the rewrite.
            return Ok(match self {
                Term::Gen(t, b) => Term::Gen(t.clone(), Box::new(b.replace_at(addr, f)?)),
                Term::Inst(b, ty) => Term::Inst(Box::new(b.replace_at(addr, f)?), ty.clone()),
                _ => f(self),
            });
        };
        let mut rec = |b: &Term| b.replace_at(rest, f);
        Ok(match self {
            Term::Gen(t, b) => Term::Gen(t.clone(), Box::new(b.replace_at(addr, f)?)),
            Term::Inst(b, ty) => Term::Inst(Box::new(b.replace_at(addr, f)?), ty.clone()),
            Term::Lam(x, ty, b) if i == 0 => Term::Lam(x.clone(), ty.clone(), Box::new(rec(b)?)),
            Term::Modal(m, b) if i == 0 => Term::Modal(*m, Box::new(rec(b)?)),
            Term::Nu(x, ty, b) if i == 0 => Term::Nu(x.clone(), ty.clone(), Box::new(rec(b)?)),
            Term::Set(l, b) if i == 0 => Term::Set(l.clone(), Box::new(rec(b)?)),
            Term::Store(l, b) if i == 0 => Term::Store(l.clone(), Box::new(rec(b)?)),
            Term::App(a, b) => match i {
                0 => Term::App(Box::new(rec(a)?), b.clone()),
                1 => Term::App(a.clone(), Box::new(rec(b)?)),
                _ => return Err(bad()),
            },
            Term::Par(a, b) => match i {
                0 => Term::Par(Box::new(rec(a)?), b.clone()),
                1 => Term::Par(a.clone(), Box::new(rec(b)?)),
                _ => return Err(bad()),
            },
            Term::Let(m, x, a, b) => match i {
                0 => Term::Let(*m, x.clone(), Box::new(rec(a)?), b.clone()),
                1 => Term::Let(*m, x.clone(), a.clone(), Box::new(rec(b)?)),
                _ => return Err(bad()),
            },
            _ => return Err(bad()),
        })
    }
}

/// All occurrences of `p`, keyed by address.
pub fn occurrences(p: &Term) -> BTreeMap<Address, NodeKind> {
    fn go(t: &Term, addr: &mut Vec<u8>, out: &mut BTreeMap<Address, NodeKind>) {
        out.insert(Address(addr.clone()), t.kind());
        for (i, c) in t.children().into_iter().enumerate() {
            addr.push(i as u8);
            go(c, addr, out);
            addr.pop();
        }
    }
    let mut out = BTreeMap::new();
    go(p, &mut Vec::new(), &mut out);
    out
}

fn store_weight(l: &Loc, rc: &RegionContext) -> Result<usize, MeasureError> {
    match l {
        Loc::Region(r) => rc.depth(r).ok_or_else(|| MeasureError::MissingRegion(r.clone())),
        // Location stores are not stratified.
        Loc::Var(_) => Ok(0),
    }
}

/// Revised depth of the occurrence at `addr`: modality labels strictly above
/// it plus `R(r)` for each store label `r <=` crossed.
pub fn depth_of(p: &Term, addr: &Address, rc: &RegionContext) -> Result<usize, MeasureError> {
    let mut t = p.peel();
    let mut d = 0;
    for &i in &addr.0 {
        match t {
            Term::Modal(..) => d += 1,
            Term::Store(l, _) => d += store_weight(l, rc)?,
            _ => {}
        }
        t = *t.children().get(i as usize).ok_or_else(|| MeasureError::InvalidAddress(addr.clone()))?;
    }
    Ok(d)
}

/// Calls `f(term, address, depth)` on every occurrence in pre-order.
pub fn walk_depths(
    p: &Term,
    rc: &RegionContext,
    f: &mut dyn FnMut(&Term, &Address, usize),
) -> Result<(), MeasureError> {
    fn go(
        t: &Term,
        addr: &mut Address,
        d: usize,
        rc: &RegionContext,
        f: &mut dyn FnMut(&Term, &Address, usize),
    ) -> Result<(), MeasureError> {
        f(t, addr, d);
        let inner = match t {
            Term::Modal(..) => d + 1,
            Term::Store(l, _) => d + store_weight(l, rc)?,
            _ => d,
        };
        for (i, c) in t.children().into_iter().enumerate() {
            addr.0.push(i as u8);
            go(c, addr, inner, rc, f)?;
            addr.0.pop();
        }
        Ok(())
    }
    go(p.peel(), &mut Address::root(), 0, rc, f)
}

/// Maximum revised depth over all occurrences.
pub fn depth(p: &Term, rc: &RegionContext) -> Result<usize, MeasureError> {
    let mut max = 0;
    walk_depths(p, rc, &mut |_, _, d| max = max.max(d))?;
    Ok(max)
}

fn node_weight(t: &Term, c: SizeConvention) -> usize {
    match c {
        SizeConvention::Plain => 1,
        SizeConvention::Weighted => match t {
            Term::Par(..) | Term::Store(..) => 0,
            Term::Set(..) => 2,
            _ => 1,
        },
    }
}

pub fn size(p: &Term, c: SizeConvention) -> usize {
    let t = p.peel();
    node_weight(t, c) + t.children().into_iter().map(|k| size(k, c)).sum::<usize>()
}

/// Size restricted to occurrences of depth exactly `i`.
pub fn size_at(p: &Term, i: usize, rc: &RegionContext, c: SizeConvention) -> Result<usize, MeasureError> {
    let mut n = 0;
    walk_depths(p, rc, &mut |t, _, d| {
        if d == i {
            n += node_weight(t, c)
        }
    })?;
    Ok(n)
}

/// Occurrences counted by binders: variables and location targets.
fn visit_free(t: &Term, bound: &mut Vec<Name>, f: &mut dyn FnMut(&Name)) {
    let binder = |x: &Name, body: &Term, bound: &mut Vec<Name>, f: &mut dyn FnMut(&Name)| {
        bound.push(x.clone());
        visit_free(body, bound, f);
        bound.pop();
    };
    let loc = |l: &Loc, bound: &Vec<Name>, f: &mut dyn FnMut(&Name)| {
        if let Loc::Var(x) = l {
            if !bound.contains(x) {
                f(x)
            }
        }
    };
    match t {
        Term::Var(x) => {
            if !bound.contains(x) {
                f(x)
            }
        }
        Term::Region(_) | Term::Unit => {}
        Term::Get(l) => loc(l, bound, f),
        Term::Set(l, b) | Term::Store(l, b) => {
            loc(l, bound, f);
            visit_free(b, bound, f);
        }
        Term::Lam(x, _, b) | Term::Nu(x, _, b) => binder(x, b, bound, f),
        Term::Let(_, x, a, b) => {
            visit_free(a, bound, f);
            binder(x, b, bound, f);
        }
        Term::App(a, b) | Term::Par(a, b) => {
            visit_free(a, bound, f);
            visit_free(b, bound, f);
        }
        Term::Modal(_, b) | Term::Gen(_, b) | Term::Inst(b, _) => visit_free(b, bound, f),
    }
}

pub fn free_vars(p: &Term) -> BTreeSet<Name> {
    let mut s = BTreeSet::new();
    visit_free(p, &mut Vec::new(), &mut |x| {
        s.insert(x.clone());
    });
    s
}

/// `fo(x, p)`: number of free occurrences of `x`.
pub fn count_occ(x: &str, p: &Term) -> usize {
    let mut n = 0;
    visit_free(p, &mut Vec::new(), &mut |y| {
        if &**y == x {
            n += 1
        }
    });
    n
}

/// Total number of free occurrences.
pub fn count_all_free(p: &Term) -> usize {
    let mut n = 0;
    visit_free(p, &mut Vec::new(), &mut |_| n += 1);
    n
}

/// All names occurring anywhere (bound, free or binding), used for freshness.
pub fn all_names(p: &Term, out: &mut BTreeSet<Name>) {
    match p {
        Term::Var(x) => {
            out.insert(x.clone());
        }
        Term::Region(_) | Term::Unit => {}
        Term::Get(l) => {
            if let Loc::Var(x) = l {
                out.insert(x.clone());
            }
        }
        Term::Set(l, b) | Term::Store(l, b) => {
            if let Loc::Var(x) = l {
                out.insert(x.clone());
            }
            all_names(b, out);
        }
        Term::Lam(x, _, b) | Term::Nu(x, _, b) => {
            out.insert(x.clone());
            all_names(b, out);
        }
        Term::Let(_, x, a, b) => {
            out.insert(x.clone());
            all_names(a, out);
            all_names(b, out);
        }
        Term::App(a, b) | Term::Par(a, b) => {
            all_names(a, out);
            all_names(b, out);
        }
        Term::Modal(_, b) | Term::Gen(_, b) | Term::Inst(b, _) => all_names(b, out),
    }
}

/// A variant of `base` not in `avoid`. Deterministic: `x'1`, `x'2`, ...
pub fn fresh_name(base: &str, avoid: &BTreeSet<Name>) -> Name {
    let stem = base.split('\'').next().unwrap_or(base);
    let stem = if stem.is_empty() { "v" } else { stem };
    (1..)
        .map(|i| format!("{stem}'{i}"))
        .find(|c| !avoid.contains(c.as_str()))
        .map(|c| name(&c))
        .expect("unbounded search")
}

/// Capture-avoiding `m[n/x]`.
pub fn substitute(m: &Term, x: &str, n: &Term) -> Term {
    let fv_n = free_vars(n);
    subst(m, x, n, &fv_n)
}

fn subst_loc(l: &Loc, x: &str, n: &Term) -> Loc {
    match l {
        Loc::Var(y) if &**y == x => match n.peel() {
            Term::Var(z) => Loc::Var(z.clone()),
            Term::Region(r) => Loc::Region(r.clone()),
            // Only locations and region constants are meaningful targets;
            // anything else leaves the (now dangling) target in place.
            _ => l.clone(),
        },
        _ => l.clone(),
    }
}

/// Renames binder `y` of `body` away from `fv_n` if needed; returns the binder
/// to use and the (possibly renamed) body.
fn avoid_capture(y: &Name, body: &Term, x: &str, fv_n: &BTreeSet<Name>) -> (Name, Term) {
    if fv_n.contains(y) && count_occ(x, body) > 0 {
        let mut avoid = fv_n.clone();
        all_names(body, &mut avoid);
        avoid.insert(name(x));
        let y2 = fresh_name(y, &avoid);
        let renamed = subst(body, y, &Term::Var(y2.clone()), &BTreeSet::from([y2.clone()]));
        (y2, renamed)
    } else {
        (y.clone(), body.clone())
    }
}

fn subst(m: &Term, x: &str, n: &Term, fv_n: &BTreeSet<Name>) -> Term {
    let go = |t: &Term| subst(t, x, n, fv_n);
    match m {
        Term::Var(y) if &**y == x => n.clone(),
        Term::Var(_) | Term::Region(_) | Term::Unit => m.clone(),
        Term::Get(l) => Term::Get(subst_loc(l, x, n)),
        Term::Set(l, b) => Term::Set(subst_loc(l, x, n), Box::new(go(b))),
        Term::Store(l, b) => Term::Store(subst_loc(l, x, n), Box::new(go(b))),
        Term::App(a, b) => Term::app(go(a), go(b)),
        Term::Par(a, b) => Term::par(go(a), go(b)),
        Term::Modal(md, b) => Term::Modal(*md, Box::new(go(b))),
        Term::Gen(t, b) => Term::Gen(t.clone(), Box::new(go(b))),
        Term::Inst(b, ty) => Term::Inst(Box::new(go(b)), ty.clone()),
        Term::Lam(y, ty, b) | Term::Nu(y, ty, b) => {
            let rebuild = |y: Name, b: Term| match m {
                Term::Lam(..) => Term::Lam(y, ty.clone(), Box::new(b)),
                _ => Term::Nu(y, ty.clone(), Box::new(b)),
            };
            if &**y == x {
                return m.clone();
            }
            let (y2, b2) = avoid_capture(y, b, x, fv_n);
            rebuild(y2, go(&b2))
        }
        Term::Let(md, y, a, b) => {
            let a2 = go(a);
            if &**y == x {
                return Term::Let(*md, y.clone(), Box::new(a2), b.clone());
            }
            let (y2, b2) = avoid_capture(y, b, x, fv_n);
            Term::Let(*md, y2, Box::new(a2), Box::new(go(&b2)))
        }
    }
}

/// `m[b/t]` on the type annotations of a term.
pub fn subst_type_in_term(m: &Term, t: &str, b: &Type) -> Term {
    let go = |x: &Term| subst_type_in_term(x, t, b);
    let ann = |a: &Option<Type>| a.as_ref().map(|a| a.subst(t, b));
    match m {
        Term::Var(_) | Term::Region(_) | Term::Unit | Term::Get(_) => m.clone(),
        Term::Lam(x, a, body) => Term::Lam(x.clone(), ann(a), Box::new(go(body))),
        Term::Nu(x, a, body) => Term::Nu(x.clone(), ann(a), Box::new(go(body))),
        Term::App(x, y) => Term::app(go(x), go(y)),
        Term::Par(x, y) => Term::par(go(x), go(y)),
        Term::Modal(md, x) => Term::Modal(*md, Box::new(go(x))),
        Term::Let(md, x, y, z) => Term::Let(*md, x.clone(), Box::new(go(y)), Box::new(go(z))),
        Term::Set(l, x) => Term::Set(l.clone(), Box::new(go(x))),
        Term::Store(l, x) => Term::Store(l.clone(), Box::new(go(x))),
        Term::Inst(x, ty) => Term::Inst(Box::new(go(x)), ty.subst(t, b)),
        Term::Gen(s, body) => {
            if &**s == t {
                return m.clone();
            }
            let fv = b.free_vars();
            if fv.contains(s) {
                let mut avoid = fv;
                avoid.insert(name(t));
                term_type_vars(body, &mut avoid);
                let s2 = crate::types::fresh_type_var(s, &avoid);
                let renamed = subst_type_in_term(body, s, &Type::Var(s2.clone()));
                Term::Gen(s2, Box::new(go(&renamed)))
            } else {
                Term::Gen(s.clone(), Box::new(go(body)))
            }
        }
    }
}

/// Type variables mentioned in annotations, bound or free.
pub fn term_type_vars(m: &Term, out: &mut BTreeSet<Name>) {
    let mut ty = |a: &Type| out.extend(a.free_vars());
    match m {
        Term::Lam(_, Some(a), _) | Term::Nu(_, Some(a), _) | Term::Inst(_, a) => ty(a),
        Term::Gen(s, _) => {
            out.insert(s.clone());
        }
        _ => {}
    }
    for c in m.direct_children() {
        term_type_vars(c, out);
    }
}

/// Contracts type applications `(gen t. M) [B]` at the head of `m`.
pub fn resolve_head(m: &Term) -> Term {
    match m {
        Term::Inst(inner, b) => match resolve_head(inner) {
            Term::Gen(t, body) => resolve_head(&subst_type_in_term(&body, &t, b)),
            other => Term::Inst(Box::new(other), b.clone()),
        },
        _ => m.clone(),
    }
}

/// Canonical representative of a `≡`-class: bound names become de Bruijn
/// levels, annotations are dropped and parallel chains become sorted multisets.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Canon {
    Bound(usize),
    Free(Name),
    Region(Name),
    Unit,
    Lam(Box<Canon>),
    App(Box<Canon>, Box<Canon>),
    Modal(Modality, Box<Canon>),
    Let(Modality, Box<Canon>, Box<Canon>),
    Get(CanonLoc),
    Set(CanonLoc, Box<Canon>),
    Store(CanonLoc, Box<Canon>),
    Par(Vec<Canon>),
    Nu(Box<Canon>),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CanonLoc {
    Region(Name),
    Bound(usize),
    Free(Name),
}

pub fn canonical(p: &Term) -> Canon {
    fn var(x: &Name, env: &[Name]) -> Option<usize> {
        env.iter().rposition(|y| y == x)
    }
    fn loc(l: &Loc, env: &[Name]) -> CanonLoc {
        match l {
            Loc::Region(r) => CanonLoc::Region(r.clone()),
            Loc::Var(x) => match var(x, env) {
                Some(i) => CanonLoc::Bound(i),
                None => CanonLoc::Free(x.clone()),
            },
        }
    }
    fn flatten(t: &Term, env: &mut Vec<Name>, out: &mut Vec<Canon>) {
        match t.peel() {
            Term::Par(a, b) => {
                flatten(a, env, out);
                flatten(b, env, out);
            }
            other => out.push(go(other, env)),
        }
    }
    fn under(x: &Name, b: &Term, env: &mut Vec<Name>) -> Box<Canon> {
        env.push(x.clone());
        let c = go(b, env);
        env.pop();
        Box::new(c)
    }
    fn go(t: &Term, env: &mut Vec<Name>) -> Canon {
        match t.peel() {
            Term::Var(x) => match var(x, env) {
                Some(i) => Canon::Bound(i),
                None => Canon::Free(x.clone()),
            },
            Term::Region(r) => Canon::Region(r.clone()),
            Term::Unit => Canon::Unit,
            Term::Lam(x, _, b) => Canon::Lam(under(x, b, env)),
            Term::Nu(x, _, b) => Canon::Nu(under(x, b, env)),
            Term::App(a, b) => Canon::App(Box::new(go(a, env)), Box::new(go(b, env))),
            Term::Modal(m, b) => Canon::Modal(*m, Box::new(go(b, env))),
            Term::Let(m, x, a, b) => {
                let a = Box::new(go(a, env));
                Canon::Let(*m, a, under(x, b, env))
            }
            Term::Get(l) => Canon::Get(loc(l, env)),
            Term::Set(l, b) => Canon::Set(loc(l, env), Box::new(go(b, env))),
            Term::Store(l, b) => Canon::Store(loc(l, env), Box::new(go(b, env))),
            par @ Term::Par(..) => {
                let mut items = Vec::new();
                flatten(par, env, &mut items);
                items.sort();
                Canon::Par(items)
            }
            Term::Gen(..) | Term::Inst(..) => unreachable!("peeled"),
        }
    }
    go(p, &mut Vec::new())
}

/// Structural equivalence: α-renaming plus commutativity and associativity of `||`.
pub fn struct_equiv(p: &Term, q: &Term) -> bool {
    canonical(p) == canonical(q)
}

/// Flattens the parallel chain rooted at `p` into its components.
pub fn par_components(p: &Term) -> Vec<&Term> {
    let mut out = Vec::new();
    fn go<'a>(t: &'a Term, out: &mut Vec<&'a Term>) {
        match t.peel() {
            Term::Par(a, b) => {
                go(a, out);
                go(b, out);
            }
            other => out.push(other),
        }
    }
    go(p, &mut out);
    out
}

/// Regions mentioned by the program (targets and constants).
pub fn regions_of(p: &Term) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    fn go(t: &Term, out: &mut BTreeSet<Name>) {
        match t {
            Term::Region(r) => {
                out.insert(r.clone());
            }
            Term::Get(Loc::Region(r)) => {
                out.insert(r.clone());
            }
            Term::Set(Loc::Region(r), _) | Term::Store(Loc::Region(r), _) => {
                out.insert(r.clone());
            }
            _ => {}
        }
        match t {
            Term::Gen(_, b) | Term::Inst(b, _) => go(b, out),
            _ => {
                for c in t.children() {
                    go(c, out)
                }
            }
        }
    }
    go(p, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::programs::apply_stored;

    fn addr(s: &str) -> Address {
        s.parse().unwrap()
    }

    #[test]
    fn apply_stored_addresses() {
        let occ = occurrences(&apply_stored());
        assert_eq!(occ[&addr("01000")], NodeKind::Var(name("x")));
        assert_eq!(occ[&addr("10001")], NodeKind::Unit);
        assert_eq!(occ[&addr("1")], NodeKind::Store(Loc::Region(name("r"))));
        assert_eq!(occ.len(), 15);
        assert_eq!(occ.len(), size(&apply_stored(), SizeConvention::Plain));
    }

    #[test]
    fn trivial_occurrences() {
        let occ = occurrences(&Term::Unit);
        assert_eq!(occ.len(), 1);
        assert_eq!(occ[&Address::root()], NodeKind::Unit);
        let occ = occurrences(&Term::par(Term::Unit, Term::Unit));
        let keys: Vec<String> = occ.keys().map(|a| a.to_string()).collect();
        assert_eq!(keys, ["ε", "0", "1"]);
    }

    #[test]
    fn apply_stored_depths() {
        let p = apply_stored();
        let r0 = RegionContext::from_depths([("r", 0)]);
        for a in ["01000", "01010", "100", "1000", "10000", "10001"] {
            assert_eq!(depth_of(&p, &addr(a), &r0).unwrap(), 1, "{a}");
        }
        for a in ["", "0", "00", "01", "010", "0100", "0101", "1", "10"] {
            assert_eq!(depth_of(&p, &addr(a), &r0).unwrap(), 0, "{a}");
        }
        assert_eq!(depth(&p, &r0).unwrap(), 1);
        let r3 = RegionContext::from_depths([("r", 3)]);
        assert_eq!(depth_of(&p, &addr("10"), &r3).unwrap(), 3);
        assert_eq!(depth_of(&p, &addr("10001"), &r3).unwrap(), 4);
        assert_eq!(depth(&p, &r3).unwrap(), 4);
    }

    #[test]
    fn depth_errors() {
        let p = apply_stored();
        let r0 = RegionContext::from_depths([("r", 0)]);
        assert!(matches!(depth_of(&p, &addr("0000"), &r0), Err(MeasureError::InvalidAddress(_))));
        assert!(matches!(depth_of(&p, &addr("10"), &RegionContext::new()), Err(MeasureError::MissingRegion(_))));
    }

    #[test]
    fn small_depths() {
        let rc = RegionContext::new();
        assert_eq!(depth(&Term::Unit, &rc).unwrap(), 0);
        assert_eq!(depth(&Term::para(Term::para(Term::Unit)), &rc).unwrap(), 2);
    }

    #[test]
    fn weighted_sizes() {
        let w = SizeConvention::Weighted;
        assert_eq!(size(&Term::par(Term::Unit, Term::Unit), w), 2);
        assert_eq!(size(&Term::set("r", Term::Unit), w), 3);
        assert_eq!(size(&Term::store("r", Term::Unit), w), 1);
        let p = apply_stored();
        let rc = RegionContext::from_depths([("r", 0)]);
        let total: usize =
            (0..=depth(&p, &rc).unwrap()).map(|i| size_at(&p, i, &rc, SizeConvention::Plain).unwrap()).sum();
        assert_eq!(total, size(&p, SizeConvention::Plain));
    }

    #[test]
    fn occurrence_counts() {
        let t = Term::lam("y", Term::app(Term::var("x"), Term::var("x")));
        assert_eq!(count_occ("x", &t), 2);
        assert_eq!(count_occ("x", &Term::lam("x", Term::var("x"))), 0);
        assert_eq!(count_all_free(&Term::bang(Term::app(Term::var("x"), Term::var("y")))), 2);
        let s = Term::Set(Loc::Var(name("l")), Box::new(Term::var("l")));
        assert_eq!(count_occ("l", &s), 2);
    }

    #[test]
    fn substitution_basics() {
        assert_eq!(substitute(&Term::var("x"), "x", &Term::Unit), Term::Unit);
        let t = Term::lam("y", Term::var("x"));
        let r = substitute(&t, "x", &Term::var("y"));
        match &r {
            Term::Lam(b, _, body) => {
                assert_ne!(&**b, "y");
                assert_eq!(**body, Term::var("y"));
            }
            _ => panic!("{r:?}"),
        }
        assert!(free_vars(&r).contains("y"));
    }

    #[test]
    fn substitution_under_paragraph() {
        let m = Term::lam("z", Term::app(Term::var("z"), Term::Unit));
        let t = Term::para(Term::app(Term::var("x"), Term::var("x")));
        assert_eq!(substitute(&t, "x", &m), Term::para(Term::app(m.clone(), m)));
    }

    #[test]
    fn structural_equivalence() {
        let a = Term::var("a");
        let b = Term::get("r");
        let c = Term::Unit;
        assert!(struct_equiv(&Term::par(a.clone(), b.clone()), &Term::par(b.clone(), a.clone())));
        assert!(struct_equiv(
            &Term::par(Term::par(a.clone(), b.clone()), c.clone()),
            &Term::par(a.clone(), Term::par(b.clone(), c.clone()))
        ));
        assert!(struct_equiv(&Term::lam("x", Term::var("x")), &Term::lam("y", Term::var("y"))));
        assert!(!struct_equiv(&Term::lam("x", Term::var("x")), &Term::lam("y", Term::var("x"))));
    }
}
