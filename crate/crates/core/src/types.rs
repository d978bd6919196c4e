//! Types, effect annotations, type substitution and type equality.

use std::collections::BTreeSet;
use std::fmt;

use crate::syntax::{name, Modality, Name};

/// Effect annotations on arrows. Carried and printed, never constrained.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Effects {
    pub pre: BTreeSet<Name>,
    pub post: BTreeSet<Name>,
}

impl Effects {
    pub fn is_empty(&self) -> bool {
        self.pre.is_empty() && self.post.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    /// The behaviour type `B` of stores and parallel compositions.
    Behaviour,
    Var(Name),
    Unit,
    Arrow(Box<Type>, Box<Type>, Effects),
    Modal(Modality, Box<Type>),
    Forall(Name, Box<Type>),
    Reg(Name, Box<Type>),
}

impl Type {
    pub fn var(t: &str) -> Type {
        Type::Var(name(t))
    }

    pub fn arrow(a: Type, b: Type) -> Type {
        Type::Arrow(Box::new(a), Box::new(b), Effects::default())
    }

    pub fn bang(a: Type) -> Type {
        Type::Modal(Modality::Bang, Box::new(a))
    }

    pub fn para(a: Type) -> Type {
        Type::Modal(Modality::Para, Box::new(a))
    }

    pub fn forall(t: &str, a: Type) -> Type {
        Type::Forall(name(t), Box::new(a))
    }

    pub fn reg(r: &str, a: Type) -> Type {
        Type::Reg(name(r), Box::new(a))
    }

    /// `Nat = ∀t. !(t ⊸ t) ⊸ §(t ⊸ t)`.
    pub fn nat() -> Type {
        let tt = || Type::arrow(Type::var("t"), Type::var("t"));
        Type::forall("t", Type::arrow(Type::bang(tt()), Type::para(tt())))
    }

    /// `BNat = ∀t. !(t ⊸ t) ⊸ !(t ⊸ t) ⊸ §(t ⊸ t)`.
    pub fn bnat() -> Type {
        let tt = || Type::arrow(Type::var("t"), Type::var("t"));
        Type::forall("t", Type::arrow(Type::bang(tt()), Type::arrow(Type::bang(tt()), Type::para(tt()))))
    }

    /// `List A = ∀t. !(A ⊸ t ⊸ t) ⊸ §(t ⊸ t)`, with `t` chosen fresh for `A`.
    pub fn list(a: Type) -> Type {
        let t = fresh_type_var("t", &a.free_vars());
        let tv = || Type::Var(t.clone());
        let step = Type::arrow(a, Type::arrow(tv(), tv()));
        Type::Forall(t.clone(), Box::new(Type::arrow(Type::bang(step), Type::para(Type::arrow(tv(), tv())))))
    }

    /// Everything except `B` is a result type.
    pub fn is_result(&self) -> bool {
        !matches!(self, Type::Behaviour)
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        match self {
            Type::Behaviour | Type::Unit => {}
            Type::Var(t) => {
                if !bound.contains(t) {
                    out.insert(t.clone());
                }
            }
            Type::Arrow(a, b, _) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Type::Modal(_, a) | Type::Reg(_, a) => a.collect_free(bound, out),
            Type::Forall(t, a) => {
                bound.push(t.clone());
                a.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    fn all_vars(&self, out: &mut BTreeSet<Name>) {
        match self {
            Type::Behaviour | Type::Unit => {}
            Type::Var(t) => {
                out.insert(t.clone());
            }
            Type::Arrow(a, b, _) => {
                a.all_vars(out);
                b.all_vars(out);
            }
            Type::Modal(_, a) | Type::Reg(_, a) => a.all_vars(out),
            Type::Forall(t, a) => {
                out.insert(t.clone());
                a.all_vars(out);
            }
        }
    }

    /// Region constants occurring anywhere in the type.
    pub fn regions(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.visit_regs(&mut |r, _| {
            out.insert(r.clone());
        });
        out
    }

    /// Calls `f(r, A)` on every `Reg r A` subterm.
    pub fn visit_regs(&self, f: &mut dyn FnMut(&Name, &Type)) {
        match self {
            Type::Behaviour | Type::Unit | Type::Var(_) => {}
            Type::Arrow(a, b, _) => {
                a.visit_regs(f);
                b.visit_regs(f);
            }
            Type::Modal(_, a) | Type::Forall(_, a) => a.visit_regs(f),
            Type::Reg(r, a) => {
                f(r, a);
                a.visit_regs(f);
            }
        }
    }

    /// Capture-avoiding `self[b/t]`.
    pub fn subst(&self, t: &str, b: &Type) -> Type {
        let fv = b.free_vars();
        self.subst_with(t, b, &fv)
    }

    fn subst_with(&self, t: &str, b: &Type, fv_b: &BTreeSet<Name>) -> Type {
        match self {
            Type::Behaviour | Type::Unit => self.clone(),
            Type::Var(u) if &**u == t => b.clone(),
            Type::Var(_) => self.clone(),
            Type::Arrow(x, y, e) => {
                Type::Arrow(Box::new(x.subst_with(t, b, fv_b)), Box::new(y.subst_with(t, b, fv_b)), e.clone())
            }
            Type::Modal(m, a) => Type::Modal(*m, Box::new(a.subst_with(t, b, fv_b))),
            Type::Reg(r, a) => Type::Reg(r.clone(), Box::new(a.subst_with(t, b, fv_b))),
            Type::Forall(u, a) => {
                if &**u == t || !a.free_vars().contains(t) {
                    return self.clone();
                }
                if fv_b.contains(u) {
                    let mut avoid = fv_b.clone();
                    a.all_vars(&mut avoid);
                    avoid.insert(name(t));
                    let u2 = fresh_type_var(u, &avoid);
                    let renamed = a.subst(u, &Type::Var(u2.clone()));
                    Type::Forall(u2, Box::new(renamed.subst_with(t, b, fv_b)))
                } else {
                    Type::Forall(u.clone(), Box::new(a.subst_with(t, b, fv_b)))
                }
            }
        }
    }

    /// Equality up to renaming of bound type variables, ignoring effects.
    pub fn equiv(&self, other: &Type) -> bool {
        fn go(a: &Type, b: &Type, env: &mut Vec<(Name, Name)>) -> bool {
            match (a, b) {
                (Type::Behaviour, Type::Behaviour) | (Type::Unit, Type::Unit) => true,
                (Type::Var(x), Type::Var(y)) => match env.iter().rev().find(|(l, r)| l == x || r == y) {
                    Some((l, r)) => l == x && r == y,
                    None => x == y,
                },
                (Type::Arrow(a1, b1, _), Type::Arrow(a2, b2, _)) => go(a1, a2, env) && go(b1, b2, env),
                (Type::Modal(m1, a1), Type::Modal(m2, a2)) => m1 == m2 && go(a1, a2, env),
                (Type::Reg(r1, a1), Type::Reg(r2, a2)) => r1 == r2 && go(a1, a2, env),
                (Type::Forall(x, a1), Type::Forall(y, a2)) => {
                    env.push((x.clone(), y.clone()));
                    let ok = go(a1, a2, env);
                    env.pop();
                    ok
                }
                _ => false,
            }
        }
        go(self, other, &mut Vec::new())
    }
}

pub fn fresh_type_var(base: &str, avoid: &BTreeSet<Name>) -> Name {
    if !avoid.contains(base) {
        return name(base);
    }
    let stem = base.split('\'').next().unwrap_or(base);
    (1..)
        .map(|i| format!("{stem}'{i}"))
        .find(|c| !avoid.contains(c.as_str()))
        .map(|c| name(&c))
        .expect("unbounded search")
}

fn write_effects(f: &mut fmt::Formatter<'_>, e: &Effects) -> fmt::Result {
    let set = |s: &BTreeSet<Name>| s.iter().map(|r| format!("#{r}")).collect::<Vec<_>>().join(",");
    write!(f, "{{{};{}}}", set(&e.pre), set(&e.post))
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Precedence levels: 0 = arrow/forall, 1 = prefix, 2 = atom.
        fn go(t: &Type, level: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match t {
                Type::Behaviour => write!(f, "B"),
                Type::Unit => write!(f, "1"),
                Type::Var(x) => write!(f, "{x}"),
                Type::Modal(m, a) => {
                    write!(f, "{}", m.symbol())?;
                    go(a, 1, f)
                }
                Type::Reg(r, a) => {
                    if level > 1 {
                        write!(f, "(")?;
                    }
                    write!(f, "Reg #{r} ")?;
                    go(a, 1, f)?;
                    if level > 1 {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
                Type::Arrow(a, b, e) => {
                    if level > 0 {
                        write!(f, "(")?;
                    }
                    go(a, 1, f)?;
                    write!(f, " -o")?;
                    if !e.is_empty() {
                        write_effects(f, e)?;
                    }
                    write!(f, " ")?;
                    go(b, 0, f)?;
                    if level > 0 {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
                Type::Forall(x, a) => {
                    if level > 0 {
                        write!(f, "(")?;
                    }
                    write!(f, "forall {x}. ")?;
                    go(a, 0, f)?;
                    if level > 0 {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
            }
        }
        go(self, 0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subst_simple() {
        let a = Type::forall("t", Type::var("t"));
        if let Type::Forall(t, body) = &a {
            assert_eq!(body.subst(t, &Type::Unit), Type::Unit);
        }
    }

    #[test]
    fn subst_avoids_capture() {
        // (∀u. t ⊸ u)[u/t] must not capture the substituted u.
        let a = Type::forall("u", Type::arrow(Type::var("t"), Type::var("u")));
        let r = a.subst("t", &Type::var("u"));
        match &r {
            Type::Forall(v, body) => {
                assert_ne!(&**v, "u");
                assert_eq!(**body, Type::arrow(Type::var("u"), Type::Var(v.clone())));
            }
            _ => panic!("{r}"),
        }
        assert!(r.free_vars().contains("u"));
    }

    #[test]
    fn alpha_equivalence() {
        let a = Type::forall("t", Type::arrow(Type::var("t"), Type::var("t")));
        let b = Type::forall("s", Type::arrow(Type::var("s"), Type::var("s")));
        assert!(a.equiv(&b));
        let c = Type::forall("s", Type::arrow(Type::var("s"), Type::var("t")));
        assert!(!a.equiv(&c));
    }

    #[test]
    fn effects_ignored_by_equality() {
        let mut e = Effects::default();
        e.post.insert(name("r"));
        let a = Type::Arrow(Box::new(Type::Unit), Box::new(Type::Unit), e);
        assert!(a.equiv(&Type::arrow(Type::Unit, Type::Unit)));
    }

    #[test]
    fn display() {
        assert_eq!(Type::nat().to_string(), "forall t. !(t -o t) -o $(t -o t)");
        assert_eq!(Type::reg("r", Type::bang(Type::nat())).to_string(), "Reg #r !(forall t. !(t -o t) -o $(t -o t))");
    }
}
