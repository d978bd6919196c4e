//! The polynomial type system: well-formedness of types against a region
//! context, a syntax-directed checker over annotated programs, and the
//! hooks used to test subject reduction and progress.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::depth::Usage;
use crate::parse::Source;
use crate::reduce::{check_cbv_syntax, classify_stuck, find_redexes, Relation, StuckReport};
use crate::syntax::{
    count_occ, free_vars, subst_type_in_term, term_type_vars, Address, Loc, Modality, Name, RegionContext, Term,
};
use crate::types::{fresh_type_var, Type};

/// Free memory locations and their `Reg r A` types.
pub type Locations = BTreeMap<Name, Type>;

/// A type or region context that is not well-formed against `R`.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TypeWfError(pub String);

fn compatible(rc: &RegionContext, ty: &Type, bound: &BTreeSet<Name>) -> Result<(), TypeWfError> {
    match ty {
        Type::Behaviour | Type::Unit | Type::Var(_) => Ok(()),
        Type::Arrow(a, b, _) => {
            compatible(rc, a, bound)?;
            compatible(rc, b, bound)
        }
        Type::Modal(_, a) => compatible(rc, a, bound),
        Type::Reg(r, a) => {
            let info = rc.get(r).ok_or_else(|| TypeWfError(format!("type {ty} mentions undeclared region #{r}")))?;
            let declared = info.ty.as_ref().ok_or_else(|| TypeWfError(format!("region #{r} has no content type")))?;
            if !declared.equiv(a) {
                return Err(TypeWfError(format!(
                    "type {ty} disagrees with the content type {declared} of region #{r}"
                )));
            }
            compatible(rc, a, bound)
        }
        Type::Forall(t, a) => {
            if bound.contains(t) {
                return Err(TypeWfError(format!("type variable {t} of {ty} occurs free in the region context")));
            }
            compatible(rc, a, bound)
        }
    }
}

fn region_type_vars(rc: &RegionContext) -> BTreeSet<Name> {
    rc.iter().filter_map(|(_, i)| i.ty.as_ref()).flat_map(Type::free_vars).collect()
}

/// `R ⊢`: every region has a content type compatible with `R`.
pub fn check_region_ctx(rc: &RegionContext) -> Result<(), TypeWfError> {
    let bound = region_type_vars(rc);
    for (r, info) in rc.iter() {
        let ty = info.ty.as_ref().ok_or_else(|| TypeWfError(format!("region #{r} has no content type")))?;
        if !ty.is_result() {
            return Err(TypeWfError(format!("region #{r} cannot hold the behaviour type")));
        }
        compatible(rc, ty, &bound)?;
    }
    Ok(())
}

/// `R ⊢ α`.
pub fn check_type(rc: &RegionContext, ty: &Type) -> Result<(), TypeWfError> {
    check_region_ctx(rc)?;
    compatible(rc, ty, &region_type_vars(rc))
}

/// `R ⊢ Γ`.
pub fn check_ctx(rc: &RegionContext, gamma: &[(Name, Usage, Type)]) -> Result<(), TypeWfError> {
    check_region_ctx(rc)?;
    let bound = region_type_vars(rc);
    gamma.iter().try_for_each(|(_, _, ty)| compatible(rc, ty, &bound))
}

/// Capture-avoiding `a[b/t]`.
pub fn subst_type(a: &Type, b: &Type, t: &str) -> Type {
    a.subst(t, b)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDerivation {
    pub rule: &'static str,
    pub context: Vec<(Name, Usage, Type)>,
    pub depth: usize,
    pub term: Term,
    pub ty: Type,
    pub premises: Vec<TypeDerivation>,
}

impl TypeDerivation {
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, indent: usize, out: &mut String) {
        let ctx = if self.context.is_empty() {
            "-".to_string()
        } else {
            self.context.iter().map(|(x, u, a)| format!("{x}:({u}, {a})")).collect::<Vec<_>>().join(", ")
        };
        out.push_str(&"  ".repeat(indent));
        out.push_str(&format!("{ctx} ⊢^{} {} : {}   ({})\n", self.depth, self.term, self.ty, self.rule));
        for p in &self.premises {
            p.render_into(indent + 1, out);
        }
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(TypeDerivation::size).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("at {address} ({rule}): {message}")]
pub struct TypeError {
    pub address: Address,
    pub rule: &'static str,
    pub message: String,
}

#[derive(Clone, Debug)]
struct Entry {
    usage: Usage,
    ty: Type,
    /// Set when a modality made the entry unusable.
    hidden_by: Option<Modality>,
}

type Ctx = BTreeMap<Name, Entry>;

struct Checker<'a> {
    rc: &'a RegionContext,
    locs: Locations,
}

fn mismatch(expected: impl fmt::Display, actual: &Type) -> String {
    format!("expected {expected}, found {actual}")
}

impl Checker<'_> {
    fn err(&self, addr: &Address, rule: &'static str, message: String) -> TypeError {
        TypeError { address: addr.clone(), rule, message }
    }

    fn wf(&self, addr: &Address, rule: &'static str, ty: &Type) -> Result<(), TypeError> {
        compatible(self.rc, ty, &region_type_vars(self.rc)).map_err(|e| self.err(addr, rule, e.0))
    }

    fn visible(ctx: &Ctx) -> Vec<(Name, Usage, Type)> {
        ctx.iter().filter(|(_, e)| e.hidden_by.is_none()).map(|(x, e)| (x.clone(), e.usage, e.ty.clone())).collect()
    }

    /// Type of a variable occurrence: a visible λ entry, or a location constant.
    fn lookup(&self, x: &Name, ctx: &Ctx, addr: &Address, rule: &'static str) -> Result<Type, TypeError> {
        match ctx.get(x) {
            Some(Entry { usage: Usage::Lambda, ty, hidden_by: None }) => Ok(ty.clone()),
            Some(Entry { usage, hidden_by: None, .. }) => {
                Err(self.err(addr, rule, format!("variable {x} has usage {usage} and must occur under a modality")))
            }
            Some(Entry { usage, hidden_by: Some(m), .. }) => Err(self.err(
                addr,
                rule,
                format!("variable {x} with usage {usage} cannot be used inside this {}-term", m.symbol()),
            )),
            None => match self.locs.get(x) {
                Some(ty) => Ok(ty.clone()),
                None => Err(self.err(addr, rule, format!("variable {x} is not bound"))),
            },
        }
    }

    /// Region and content type behind a `get`, `set` or store target.
    fn target(&self, l: &Loc, ctx: &Ctx, addr: &Address, rule: &'static str) -> Result<(Name, usize, Type), TypeError> {
        let region_info = |r: &Name| -> Result<(usize, Type), TypeError> {
            let info = self.rc.get(r).ok_or_else(|| self.err(addr, rule, format!("region #{r} is not declared")))?;
            let ty = info.ty.clone().ok_or_else(|| self.err(addr, rule, format!("region #{r} has no content type")))?;
            Ok((info.depth, ty))
        };
        match l {
            Loc::Region(r) => {
                let (d, ty) = region_info(r)?;
                Ok((r.clone(), d, ty))
            }
            Loc::Var(x) => {
                let lty = self.lookup(x, ctx, addr, rule)?;
                let Type::Reg(r, content) = &lty else {
                    return Err(self.err(addr, rule, mismatch("a region type Reg #r !A", &lty)));
                };
                let (d, ty) = region_info(r)?;
                if !matches!(ty, Type::Modal(Modality::Bang, _)) {
                    return Err(self.err(
                        addr,
                        rule,
                        format!("location {x} must refer to a region of duplicable content, found {ty}"),
                    ));
                }
                if !ty.equiv(content) {
                    return Err(self.err(addr, rule, mismatch(&ty, content)));
                }
                Ok((r.clone(), d, ty))
            }
        }
    }

    fn count_ctx_free(&self, t: &Term, ctx: &Ctx) -> usize {
        let fv = free_vars(t);
        fv.iter().filter(|x| ctx.contains_key(*x)).map(|x| count_occ(x, t)).sum()
    }

    fn node(
        rule: &'static str,
        ctx: &Ctx,
        depth: usize,
        term: &Term,
        ty: Type,
        premises: Vec<TypeDerivation>,
    ) -> TypeDerivation {
        TypeDerivation { rule, context: Self::visible(ctx), depth, term: term.clone(), ty, premises }
    }

    fn result(&self, d: &TypeDerivation, addr: &Address, rule: &'static str) -> Result<(), TypeError> {
        if d.ty.is_result() {
            Ok(())
        } else {
            Err(self.err(addr, rule, "a result type is required here, not the behaviour type B".into()))
        }
    }

    fn sub(
        &mut self,
        addr: &mut Address,
        i: Option<u8>,
        c: &Term,
        ctx: &Ctx,
        d: usize,
    ) -> Result<TypeDerivation, TypeError> {
        if let Some(i) = i {
            addr.0.push(i);
        }
        let r = self.check(c, ctx, d, addr);
        if i.is_some() {
            addr.0.pop();
        }
        r
    }

    fn check(&mut self, t: &Term, ctx: &Ctx, delta: usize, addr: &mut Address) -> Result<TypeDerivation, TypeError> {
        match t {
            Term::Var(x) => {
                let ty = self.lookup(x, ctx, addr, "var")?;
                Ok(Self::node("var", ctx, delta, t, ty, vec![]))
            }
            Term::Unit => Ok(Self::node("unit", ctx, delta, t, Type::Unit, vec![])),
            Term::Region(r) => {
                let (_, _, ty) = self.target(&Loc::Region(r.clone()), ctx, addr, "region")?;
                Ok(Self::node("region", ctx, delta, t, Type::reg(r, ty), vec![]))
            }
            Term::Lam(x, ann, body) => {
                let a =
                    ann.clone().ok_or_else(|| self.err(addr, "lam", format!("binder {x} needs a type annotation")))?;
                if !a.is_result() {
                    return Err(self.err(addr, "lam", "a λ cannot take an argument of type B".into()));
                }
                self.wf(addr, "lam", &a)?;
                let n = count_occ(x, body);
                if n != 1 {
                    return Err(self.err(addr, "lam", format!("{x} must occur exactly once in the body, found {n}")));
                }
                let mut inner = ctx.clone();
                inner.insert(x.clone(), Entry { usage: Usage::Lambda, ty: a.clone(), hidden_by: None });
                self.locs_shadow(x, |this| {
                    let d = this.sub(addr, Some(0), body, &inner, delta)?;
                    let ty = Type::arrow(a, d.ty.clone());
                    Ok(Self::node("lam", ctx, delta, t, ty, vec![d]))
                })
            }
            Term::App(m, n) => {
                let dm = self.sub(addr, Some(0), m, ctx, delta)?;
                let dn = self.sub(addr, Some(1), n, ctx, delta)?;
                let Type::Arrow(a, alpha, _) = &dm.ty else {
                    return Err(self.err(addr, "app", mismatch("a function type", &dm.ty)));
                };
                if !a.equiv(&dn.ty) {
                    return Err(self.err(addr, "app", format!("argument: {}", mismatch(a, &dn.ty))));
                }
                let ty = (**alpha).clone();
                Ok(Self::node("app", ctx, delta, t, ty, vec![dm, dn]))
            }
            Term::Modal(m, body) => {
                let rule = if *m == Modality::Bang { "bang" } else { "para" };
                if *m == Modality::Bang {
                    let n = self.count_ctx_free(body, ctx);
                    if n > 1 {
                        return Err(self.err(
                            addr,
                            rule,
                            format!("a !-term may contain at most one occurrence of free variable, found {n}"),
                        ));
                    }
                }
                let inner: Ctx = ctx
                    .iter()
                    .map(|(x, e)| {
                        let promoted = e.hidden_by.is_none()
                            && match m {
                                Modality::Bang => e.usage == Usage::Bang,
                                Modality::Para => e.usage != Usage::Lambda,
                            };
                        let e2 = if promoted {
                            Entry { usage: Usage::Lambda, ty: e.ty.clone(), hidden_by: None }
                        } else {
                            Entry { hidden_by: Some(e.hidden_by.unwrap_or(*m)), ..e.clone() }
                        };
                        (x.clone(), e2)
                    })
                    .collect();
                let d = self.sub(addr, Some(0), body, &inner, delta + 1)?;
                self.result(&d, addr, rule)?;
                let ty = Type::Modal(*m, Box::new(d.ty.clone()));
                Ok(Self::node(rule, ctx, delta, t, ty, vec![d]))
            }
            Term::Let(m, x, bound, body) => {
                let rule = if *m == Modality::Bang { "let!" } else { "let§" };
                let db = self.sub(addr, Some(0), bound, ctx, delta)?;
                let Type::Modal(m2, a) = &db.ty else {
                    return Err(self.err(addr, rule, mismatch(format!("a {}-type", m.symbol()), &db.ty)));
                };
                if m2 != m {
                    return Err(self.err(addr, rule, mismatch(format!("a {}-type", m.symbol()), &db.ty)));
                }
                let n = count_occ(x, body);
                match m {
                    Modality::Bang if n == 0 => {
                        return Err(self.err(addr, rule, format!("binder binds zero occurrences of {x}")))
                    }
                    Modality::Para if n != 1 => {
                        return Err(self.err(addr, rule, format!("{x} must occur exactly once, found {n}")))
                    }
                    _ => {}
                }
                let usage = if *m == Modality::Bang { Usage::Bang } else { Usage::Para };
                let mut inner = ctx.clone();
                inner.insert(x.clone(), Entry { usage, ty: (**a).clone(), hidden_by: None });
                self.locs_shadow(x, |this| {
                    let dn = this.sub(addr, Some(1), body, &inner, delta)?;
                    let ty = dn.ty.clone();
                    Ok(Self::node(rule, ctx, delta, t, ty, vec![db, dn]))
                })
            }
            Term::Gen(tv, body) => {
                let mut ftv = region_type_vars(self.rc);
                ftv.extend(ctx.values().flat_map(|e| e.ty.free_vars()));
                ftv.extend(self.locs.values().flat_map(Type::free_vars));
                // A binder that clashes with the context is renamed, as after substitution.
                let (tv, body) = if ftv.contains(tv) {
                    let mut avoid = ftv;
                    term_type_vars(body, &mut avoid);
                    let fresh = fresh_type_var(tv, &avoid);
                    let renamed = subst_type_in_term(body, tv, &Type::Var(fresh.clone()));
                    (fresh, std::borrow::Cow::Owned(renamed))
                } else {
                    (tv.clone(), std::borrow::Cow::Borrowed(&**body))
                };
                let d = self.sub(addr, None, &body, ctx, delta)?;
                self.result(&d, addr, "gen")?;
                let ty = Type::Forall(tv, Box::new(d.ty.clone()));
                Ok(Self::node("gen", ctx, delta, t, ty, vec![d]))
            }
            Term::Inst(body, b) => {
                if !b.is_result() {
                    return Err(self.err(addr, "inst", "cannot instantiate with the behaviour type B".into()));
                }
                self.wf(addr, "inst", b)?;
                let d = self.sub(addr, None, body, ctx, delta)?;
                let Type::Forall(tv, a) = &d.ty else {
                    return Err(self.err(addr, "inst", mismatch("a polymorphic type", &d.ty)));
                };
                let ty = a.subst(tv, b);
                Ok(Self::node("inst", ctx, delta, t, ty, vec![d]))
            }
            Term::Get(l) => {
                let (r, rd, ty) = self.target(l, ctx, addr, "get")?;
                if rd != delta {
                    return Err(self.err(
                        addr,
                        "get",
                        format!("region #{r} is accessed at depth {delta}, declared {rd}"),
                    ));
                }
                Ok(Self::node("get", ctx, delta, t, ty, vec![]))
            }
            Term::Set(l, body) => {
                let (r, rd, ty) = self.target(l, ctx, addr, "set")?;
                if rd != delta {
                    return Err(self.err(
                        addr,
                        "set",
                        format!("region #{r} is accessed at depth {delta}, declared {rd}"),
                    ));
                }
                let d = self.sub(addr, Some(0), body, ctx, delta)?;
                if !ty.equiv(&d.ty) {
                    return Err(self.err(addr, "set", mismatch(&ty, &d.ty)));
                }
                Ok(Self::node("set", ctx, delta, t, Type::Unit, vec![d]))
            }
            Term::Store(l, body) => {
                if delta != 0 {
                    return Err(self.err(addr, "store", format!("a store must occur at depth 0, found {delta}")));
                }
                let (_, rd, ty) = self.target(l, ctx, addr, "store")?;
                let d = self.sub(addr, Some(0), body, ctx, rd)?;
                if !ty.equiv(&d.ty) {
                    return Err(self.err(addr, "store", mismatch(&ty, &d.ty)));
                }
                Ok(Self::node("store", ctx, delta, t, Type::Behaviour, vec![d]))
            }
            Term::Par(..) => self.check_par(t, ctx, delta, addr),
            Term::Nu(x, ann, body) => {
                let a =
                    ann.clone().ok_or_else(|| self.err(addr, "nu", format!("location {x} needs a type annotation")))?;
                let Type::Reg(..) = &a else {
                    return Err(self.err(addr, "nu", mismatch("a region type", &a)));
                };
                self.wf(addr, "nu", &a)?;
                let mut inner = ctx.clone();
                inner.remove(x);
                let saved = self.locs.insert(x.clone(), a);
                let d = self.sub(addr, Some(0), body, &inner, delta);
                match saved {
                    Some(old) => self.locs.insert(x.clone(), old),
                    None => self.locs.remove(x),
                };
                let d = d?;
                let ty = d.ty.clone();
                Ok(Self::node("nu", ctx, delta, t, ty, vec![d]))
            }
        }
    }

    /// Runs `f` with `x` no longer naming a location constant.
    fn locs_shadow<R>(&mut self, x: &Name, f: impl FnOnce(&mut Self) -> R) -> R {
        let saved = self.locs.remove(x);
        let r = f(self);
        if let Some(old) = saved {
            self.locs.insert(x.clone(), old);
        }
        r
    }

    /// A parallel chain has the type of its only component that is neither a
    /// store nor of type 1; with no such component it has type 1 if some
    /// thread is a term, and B otherwise; with several it has type B.
    fn check_par(
        &mut self,
        t: &Term,
        ctx: &Ctx,
        delta: usize,
        addr: &mut Address,
    ) -> Result<TypeDerivation, TypeError> {
        fn chain<'a>(t: &'a Term, addr: &mut Address, out: &mut Vec<(Address, &'a Term)>) {
            match t {
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
        let mut parts = Vec::new();
        chain(t, &mut addr.clone(), &mut parts);
        let mut premises = Vec::new();
        let mut results = Vec::new();
        let mut any_term = false;
        for (mut a, c) in parts {
            let d = self.check(c, ctx, delta, &mut a)?;
            let neutral = c.is_store() || d.ty == Type::Unit;
            any_term |= !c.is_store();
            if !neutral {
                results.push(d.ty.clone());
            }
            premises.push(d);
        }
        let ty = match results.as_slice() {
            [one] => one.clone(),
            [] if any_term => Type::Unit,
            _ => Type::Behaviour,
        };
        Ok(Self::node("par", ctx, delta, t, ty, premises))
    }
}

/// Checks `R; Γ ⊢^δ p : α` and returns the derivation.
pub fn typecheck_in(
    p: &Term,
    rc: &RegionContext,
    locs: &Locations,
    gamma: &[(Name, Usage, Type)],
    delta: usize,
) -> Result<TypeDerivation, TypeError> {
    let root_err = |message: String| TypeError { address: Address::root(), rule: "context", message };
    check_ctx(rc, gamma).map_err(|e| root_err(e.0))?;
    let bound = region_type_vars(rc);
    for (x, ty) in locs {
        compatible(rc, ty, &bound).map_err(|e| root_err(format!("location {x}: {}", e.0)))?;
    }
    let ctx: Ctx =
        gamma.iter().map(|(x, u, ty)| (x.clone(), Entry { usage: *u, ty: ty.clone(), hidden_by: None })).collect();
    let mut c = Checker { rc, locs: locs.clone() };
    c.check(p, &ctx, delta, &mut Address::root())
}

/// Checks a closed program at depth 0.
pub fn typecheck(p: &Term, rc: &RegionContext, locs: &Locations) -> Result<TypeDerivation, TypeError> {
    typecheck_in(p, rc, locs, &[], 0)
}

pub fn typecheck_source(src: &Source) -> Result<TypeDerivation, TypeError> {
    typecheck(&src.program, &src.regions, &src.locations)
}

pub fn type_of(p: &Term, rc: &RegionContext, locs: &Locations) -> Result<Type, TypeError> {
    typecheck(p, rc, locs).map(|d| d.ty)
}

/// Whether `p` can be given `alpha`: its computed type, or B for any
/// parallel composition or store.
pub fn admits(p: &Term, alpha: &Type, rc: &RegionContext, locs: &Locations) -> bool {
    match type_of(p, rc, locs) {
        Ok(ty) => ty.equiv(alpha) || (*alpha == Type::Behaviour && matches!(p.peel(), Term::Par(..) | Term::Store(..))),
        Err(_) => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ProgressError {
    #[error("program is not closed: {0:?}")]
    NotClosed(Vec<Name>),
    #[error(transparent)]
    Untypable(#[from] TypeError),
    #[error("{0}")]
    NotCbv(String),
    #[error("program can still reduce")]
    Reducible,
}

/// For a closed, typable, call-by-value program with no redex, the shape of
/// its threads.
pub fn progress_check(p: &Term, rc: &RegionContext, locs: &Locations) -> Result<StuckReport, ProgressError> {
    let open: Vec<Name> = free_vars(p).into_iter().filter(|x| !locs.contains_key(x)).collect();
    if !open.is_empty() {
        return Err(ProgressError::NotClosed(open));
    }
    typecheck(p, rc, locs)?;
    check_cbv_syntax(p).map_err(|e| ProgressError::NotCbv(e.to_string()))?;
    let redexes = find_redexes(p, Relation::Cbv, rc).map_err(|e| ProgressError::NotCbv(e.to_string()))?;
    if !redexes.is_empty() {
        return Err(ProgressError::Reducible);
    }
    Ok(classify_stuck(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::well_formed;
    use crate::parse::{parse_source, parse_term, parse_type};
    use crate::programs;

    fn ty(s: &str) -> Type {
        parse_type(s).unwrap()
    }

    fn rc_with(r: &str, depth: usize, content: &str) -> RegionContext {
        RegionContext::new().with(r, depth, Some(ty(content)))
    }

    #[test]
    fn compatibility_examples() {
        let good = rc_with("r", 0, "1 -o 1");
        assert!(check_type(&good, &ty("Reg #r (1 -o 1)")).is_ok());
        let bad = rc_with("r", 0, "1");
        assert!(check_type(&bad, &ty("Reg #r (1 -o 1)")).is_err());
        let cyclic = rc_with("r", 0, "Reg #r 1");
        assert!(check_type(&cyclic, &Type::Unit).is_err());
        assert!(check_type(&RegionContext::new(), &Type::Unit).is_ok());
    }

    #[test]
    fn forall_needs_variable_absent_from_regions() {
        let rc = rc_with("r", 0, "t -o t");
        assert!(check_type(&rc, &ty("forall t. t")).is_err());
        assert!(check_type(&rc, &ty("forall s. s")).is_ok());
    }

    #[test]
    fn substitution() {
        assert_eq!(subst_type(&ty("t"), &Type::Unit, "t"), Type::Unit);
        let a = ty("forall s. t -o s");
        let out = subst_type(&a, &ty("s"), "t");
        assert!(out.equiv(&ty("forall u. s -o u")));
    }

    #[test]
    fn unit_and_identity() {
        let rc = RegionContext::new();
        let locs = Locations::new();
        assert_eq!(type_of(&Term::Unit, &rc, &locs).unwrap(), Type::Unit);
        let id = parse_term("gen t. \\x:t. x").unwrap();
        assert!(type_of(&id, &rc, &locs).unwrap().equiv(&ty("forall t. t -o t")));
        let applied = parse_term("(gen t. \\x:t. x) [1] *").unwrap();
        assert_eq!(type_of(&applied, &rc, &locs).unwrap(), Type::Unit);
    }

    #[test]
    fn missing_annotation() {
        let e = typecheck(&parse_term("\\x. x").unwrap(), &RegionContext::new(), &Locations::new()).unwrap_err();
        assert_eq!(e.rule, "lam");
    }

    #[test]
    fn modal_rules() {
        let rc = RegionContext::new();
        let locs = Locations::new();
        let p = parse_term("\\y:!1. let !x = y in $x").unwrap();
        assert!(type_of(&p, &rc, &locs).unwrap().equiv(&ty("!1 -o $1")));
        let p = parse_term("\\y:!1. let !x = y in x").unwrap();
        assert!(typecheck(&p, &rc, &locs).is_err());
        let p = parse_term("\\y:$1. let $x = y in !x").unwrap();
        assert!(typecheck(&p, &rc, &locs).is_err());
    }

    #[test]
    fn apply_stored_as_written_is_rejected() {
        // `(!x)(§x)` applies a !-typed term.
        let p = parse_term("let !x = get(#r) [B0] in set(#r, (!x) ($x)) || #r <= gen t. !(\\x:1 -o t. x *)").unwrap();
        let rc = RegionContext::new().with("r", 0, Some(programs::apply_stored_region_type()));
        let err = typecheck(&p, &rc, &Locations::new()).unwrap_err();
        assert_eq!(err.rule, "app");
    }

    #[test]
    fn y_chain_rejected() {
        let rc = RegionContext::new();
        let p = parse_term("(\\x:!(t -o t). let !x = x in $(x x)) ((\\x:!(t -o t). let !x = x in $(x x)) !y)").unwrap();
        assert!(typecheck_in(&p, &rc, &Locations::new(), &[(crate::syntax::name("y"), Usage::Bang, ty("t -o t"))], 0)
            .is_err());
    }

    #[test]
    fn store_and_parallel() {
        let src = parse_source("region #r : depth = 0, type = !1\nset(#r, !*) || #r <= !* || *").unwrap();
        let d = typecheck_source(&src).unwrap();
        assert_eq!(d.ty, Type::Unit);
        assert!(well_formed(&src.program, &src.regions).is_ok());
        let src = parse_source("region #r : depth = 0, type = !1\n#r <= !*").unwrap();
        assert_eq!(typecheck_source(&src).unwrap().ty, Type::Behaviour);
        let src = parse_source("region #r : depth = 1, type = 1\n$(#r <= *)").unwrap();
        assert_eq!(typecheck_source(&src).unwrap_err().rule, "store");
    }

    #[test]
    fn get_depth() {
        let src = parse_source("region #r : depth = 1, type = 1\nget(#r)").unwrap();
        assert_eq!(typecheck_source(&src).unwrap_err().rule, "get");
        let src = parse_source("region #r : depth = 1, type = 1\n$get(#r)").unwrap();
        assert!(typecheck_source(&src).unwrap().ty.equiv(&ty("$1")));
    }

    #[test]
    fn progress_shapes() {
        let src = parse_source("region #r : depth = 0, type = 1\nget(#r)").unwrap();
        let r = progress_check(&src.program, &src.regions, &src.locations).unwrap();
        assert_eq!(r.blocked.len(), 1);
        let r = progress_check(&Term::Unit, &RegionContext::new(), &Locations::new()).unwrap();
        assert_eq!(r.values.len(), 1);
    }

    #[test]
    fn locations() {
        let src = parse_source("region #r : depth = 0, type = !1\nloc l : Reg #r !1\nset(l, !*) || l <= !* || get(l)")
            .unwrap();
        assert!(typecheck_source(&src).unwrap().ty.equiv(&ty("!1")));
        let src = parse_source("region #r : depth = 0, type = !1\nnu l:Reg #r !1. set(l, !*)").unwrap();
        assert_eq!(typecheck_source(&src).unwrap().ty, Type::Unit);
    }
}
