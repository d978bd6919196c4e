//! The polynomial depth system: a syntax-directed checker producing
//! derivation trees or a located error.

use std::collections::BTreeMap;
use std::fmt;

use crate::syntax::{count_all_free, count_occ, Address, Loc, Modality, Name, RegionContext, Term};

/// Binder discipline of a context entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Usage {
    Lambda,
    Para,
    Bang,
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Usage::Lambda => "λ",
            Usage::Para => "§",
            Usage::Bang => "!",
        })
    }
}

pub type VarContext = BTreeMap<Name, Usage>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub rule: &'static str,
    pub context: Vec<(Name, Usage)>,
    pub depth: usize,
    pub term: Term,
    pub premises: Vec<Derivation>,
}

impl Derivation {
    /// Renders the tree with the conclusion first and premises indented below.
    pub fn render(&self, rc: &RegionContext) -> String {
        let regions = rc.iter().map(|(r, i)| format!("{r}:{}", i.depth)).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        self.render_into(&regions, 0, &mut out);
        out
    }

    fn render_into(&self, regions: &str, indent: usize, out: &mut String) {
        let ctx = if self.context.is_empty() {
            "-".to_string()
        } else {
            self.context.iter().map(|(x, u)| format!("{x}:{u}")).collect::<Vec<_>>().join(", ")
        };
        out.push_str(&"  ".repeat(indent));
        out.push_str(&format!("{regions}; {ctx} ⊢^{} {}   ({})\n", self.depth, self.term, self.rule));
        for p in &self.premises {
            p.render_into(regions, indent + 1, out);
        }
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WfErrorKind {
    UnboundVariable(Name),
    /// A variable occurs at the wrong depth for its usage.
    MisplacedVariable {
        var: Name,
        usage: Usage,
        inside: Option<Modality>,
    },
    LambdaOccurrences {
        var: Name,
        count: usize,
    },
    LetBangOccurrences {
        var: Name,
    },
    LetParaOccurrences {
        var: Name,
        count: usize,
    },
    BangFreeOccurrences {
        count: usize,
    },
    RegionDepth {
        region: Name,
        declared: usize,
        actual: usize,
    },
    UnknownRegion(Name),
    StoreNotAtTop {
        region: Name,
    },
    /// Memory-location variables and `nu` belong to the reference front-end.
    ReferenceConstruct,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("at {address}: {}", explain_kind(kind))]
pub struct WfError {
    pub address: Address,
    pub kind: WfErrorKind,
}

fn explain_kind(kind: &WfErrorKind) -> String {
    use WfErrorKind::*;
    match kind {
        UnboundVariable(x) => format!("variable {x} is not bound"),
        MisplacedVariable { var, usage, inside } => match (usage, inside) {
            (Usage::Lambda, Some(m)) => format!(
                "variable {var} is λ-bound, so it must occur at the depth of its binder, \
                 not inside a {}-term",
                m.symbol()
            ),
            (u, Some(Modality::Bang)) => {
                format!("variable {var} has usage {u}; a !-term may only use variables bound by let !")
            }
            (u, Some(Modality::Para)) => {
                format!("variable {var} has usage {u} and cannot cross a second modality")
            }
            (u, None) => format!(
                "variable {var} is let {u}-bound, so it must occur at depth 1 under a \
                 modality, not at the depth of its binder"
            ),
        },
        LambdaOccurrences { var, count: 0 } => format!(
            "λ-abstraction binder binds zero occurrences of {var}; strict linearity \
             forbids discarding data"
        ),
        LambdaOccurrences { var, count } => {
            format!("λ-abstraction must bind exactly one occurrence of {var}, found {count}")
        }
        LetBangOccurrences { var } => {
            format!("let ! binder binds zero occurrences of {var}; it must bind at least one")
        }
        LetParaOccurrences { var, count: 0 } => {
            format!("let § binder binds zero occurrences of {var}; it must bind exactly one")
        }
        LetParaOccurrences { var, count } => {
            format!("let § binder must bind exactly one occurrence of {var}, found {count}")
        }
        BangFreeOccurrences { count } => {
            format!("a !-term may contain at most one occurrence of free variable, found {count}")
        }
        RegionDepth { region, declared, actual } => {
            format!("region #{region} is declared at depth {declared} but accessed at depth {actual}")
        }
        UnknownRegion(r) => format!("region #{r} is not in the region context"),
        StoreNotAtTop { region } => {
            format!("store #{region} <= _ must occur in parallel at the top level of the program")
        }
        ReferenceConstruct => "memory locations and nu belong to the reference language; translate first".into(),
    }
}

/// Human-readable rendering of an error, including the violated criterion.
pub fn explain(err: &WfError) -> String {
    err.to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Entry {
    Visible(Usage),
    /// Dropped by a modality rule; kept to report a precise error.
    Hidden(Usage, Modality),
}

struct Checker<'a> {
    rc: &'a RegionContext,
    build: bool,
}

type Ctx = BTreeMap<Name, Entry>;

fn visible(ctx: &Ctx) -> Vec<(Name, Usage)> {
    ctx.iter()
        .filter_map(|(x, e)| match e {
            Entry::Visible(u) => Some((x.clone(), *u)),
            Entry::Hidden(..) => None,
        })
        .collect()
}

impl Checker<'_> {
    fn node(
        &self,
        rule: &'static str,
        ctx: &Ctx,
        depth: usize,
        term: &Term,
        premises: Vec<Option<Derivation>>,
    ) -> Option<Derivation> {
        self.build.then(|| Derivation {
            rule,
            context: visible(ctx),
            depth,
            term: term.clone(),
            premises: premises.into_iter().flatten().collect(),
        })
    }

    fn with<T>(&self, ctx: &mut Ctx, x: &Name, e: Entry, f: impl FnOnce(&mut Ctx) -> T) -> T {
        let old = ctx.insert(x.clone(), e);
        let r = f(ctx);
        match old {
            Some(o) => ctx.insert(x.clone(), o),
            None => ctx.remove(x),
        };
        r
    }

    fn region_at(&self, r: &Name, depth: usize, addr: &Address) -> Result<(), WfError> {
        match self.rc.depth(r) {
            None => Err(WfError { address: addr.clone(), kind: WfErrorKind::UnknownRegion(r.clone()) }),
            Some(d) if d != depth => Err(WfError {
                address: addr.clone(),
                kind: WfErrorKind::RegionDepth { region: r.clone(), declared: d, actual: depth },
            }),
            Some(_) => Ok(()),
        }
    }

    fn check(
        &self,
        t: &Term,
        ctx: &mut Ctx,
        depth: usize,
        top: bool,
        addr: &mut Address,
    ) -> Result<Option<Derivation>, WfError> {
        let t = t.peel();
        let err = |addr: &Address, kind| Err(WfError { address: addr.clone(), kind });
        match t {
            Term::Var(x) => match ctx.get(x) {
                None => err(addr, WfErrorKind::UnboundVariable(x.clone())),
                Some(Entry::Visible(Usage::Lambda)) => Ok(self.node("var", ctx, depth, t, vec![])),
                Some(Entry::Visible(u)) => {
                    err(addr, WfErrorKind::MisplacedVariable { var: x.clone(), usage: *u, inside: None })
                }
                Some(Entry::Hidden(u, m)) => {
                    err(addr, WfErrorKind::MisplacedVariable { var: x.clone(), usage: *u, inside: Some(*m) })
                }
            },
            Term::Unit => Ok(self.node("unit", ctx, depth, t, vec![])),
            Term::Region(_) => Ok(self.node("region", ctx, depth, t, vec![])),
            Term::Lam(x, _, m) => {
                let count = count_occ(x, m);
                if count != 1 {
                    return err(addr, WfErrorKind::LambdaOccurrences { var: x.clone(), count });
                }
                addr.0.push(0);
                let p = self.with(ctx, x, Entry::Visible(Usage::Lambda), |ctx| self.check(m, ctx, depth, false, addr));
                addr.0.pop();
                Ok(self.node("lam", ctx, depth, t, vec![p?]))
            }
            Term::App(a, b) | Term::Par(a, b) => {
                let keep_top = top && matches!(t, Term::Par(..));
                addr.0.push(0);
                let pa = self.check(a, ctx, depth, keep_top, addr);
                addr.0.pop();
                let pa = pa?;
                addr.0.push(1);
                let pb = self.check(b, ctx, depth, keep_top, addr);
                addr.0.pop();
                let rule = if matches!(t, Term::Par(..)) { "par" } else { "app" };
                Ok(self.node(rule, ctx, depth, t, vec![pa, pb?]))
            }
            Term::Modal(m, body) => {
                if *m == Modality::Bang {
                    let count = count_all_free(body);
                    if count > 1 {
                        return err(addr, WfErrorKind::BangFreeOccurrences { count });
                    }
                }
                let mut inner: Ctx = ctx
                    .iter()
                    .map(|(x, e)| {
                        let e = match (*m, *e) {
                            (Modality::Bang, Entry::Visible(Usage::Bang)) => Entry::Visible(Usage::Lambda),
                            (Modality::Para, Entry::Visible(Usage::Bang | Usage::Para)) => {
                                Entry::Visible(Usage::Lambda)
                            }
                            (_, Entry::Visible(u)) => Entry::Hidden(u, *m),
                            (_, h) => h,
                        };
                        (x.clone(), e)
                    })
                    .collect();
                addr.0.push(0);
                let p = self.check(body, &mut inner, depth + 1, false, addr);
                addr.0.pop();
                let rule = if *m == Modality::Bang { "bang" } else { "para" };
                Ok(self.node(rule, ctx, depth, t, vec![p?]))
            }
            Term::Let(m, x, bound, body) => {
                let count = count_occ(x, body);
                match m {
                    Modality::Bang if count == 0 => {
                        return err(addr, WfErrorKind::LetBangOccurrences { var: x.clone() })
                    }
                    Modality::Para if count != 1 => {
                        return err(addr, WfErrorKind::LetParaOccurrences { var: x.clone(), count })
                    }
                    _ => {}
                }
                addr.0.push(0);
                let pa = self.check(bound, ctx, depth, false, addr);
                addr.0.pop();
                let pa = pa?;
                let u = if *m == Modality::Bang { Usage::Bang } else { Usage::Para };
                addr.0.push(1);
                let pb = self.with(ctx, x, Entry::Visible(u), |ctx| self.check(body, ctx, depth, false, addr));
                addr.0.pop();
                let rule = if *m == Modality::Bang { "let!" } else { "let§" };
                Ok(self.node(rule, ctx, depth, t, vec![pa, pb?]))
            }
            Term::Get(Loc::Region(r)) => {
                self.region_at(r, depth, addr)?;
                Ok(self.node("get", ctx, depth, t, vec![]))
            }
            Term::Set(Loc::Region(r), body) => {
                self.region_at(r, depth, addr)?;
                addr.0.push(0);
                let p = self.check(body, ctx, depth, false, addr);
                addr.0.pop();
                Ok(self.node("set", ctx, depth, t, vec![p?]))
            }
            Term::Store(Loc::Region(r), body) => {
                if !top || depth != 0 {
                    return err(addr, WfErrorKind::StoreNotAtTop { region: r.clone() });
                }
                let Some(rd) = self.rc.depth(r) else {
                    return err(addr, WfErrorKind::UnknownRegion(r.clone()));
                };
                addr.0.push(0);
                let p = self.check(body, ctx, rd, false, addr);
                addr.0.pop();
                Ok(self.node("store", ctx, depth, t, vec![p?]))
            }
            Term::Get(Loc::Var(_)) | Term::Set(Loc::Var(_), _) | Term::Store(Loc::Var(_), _) | Term::Nu(..) => {
                err(addr, WfErrorKind::ReferenceConstruct)
            }
            Term::Gen(..) | Term::Inst(..) => unreachable!("peeled"),
        }
    }
}

/// Decides `R; Γ ⊢^δ p`, returning the derivation.
pub fn check_wf(p: &Term, rc: &RegionContext, gamma: &VarContext, delta: usize) -> Result<Derivation, WfError> {
    run(p, rc, gamma, delta, true).map(|d| d.expect("derivation requested"))
}

/// Same judgement as [`check_wf`] without materialising the derivation.
pub fn is_wf(p: &Term, rc: &RegionContext, gamma: &VarContext, delta: usize) -> Result<(), WfError> {
    run(p, rc, gamma, delta, false).map(|_| ())
}

/// Top-level well-formedness: empty variable context, depth 0.
pub fn well_formed(p: &Term, rc: &RegionContext) -> Result<(), WfError> {
    is_wf(p, rc, &VarContext::new(), 0)
}

fn run(
    p: &Term,
    rc: &RegionContext,
    gamma: &VarContext,
    delta: usize,
    build: bool,
) -> Result<Option<Derivation>, WfError> {
    let checker = Checker { rc, build };
    let mut ctx: Ctx = gamma.iter().map(|(x, u)| (x.clone(), Entry::Visible(*u))).collect();
    checker.check(p, &mut ctx, delta, delta == 0, &mut Address::root())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_term;
    use crate::programs;
    use crate::syntax::name;

    fn r0() -> RegionContext {
        RegionContext::from_depths([("r", 0)])
    }

    #[test]
    fn apply_stored_derivation() {
        let d = check_wf(&programs::apply_stored(), &r0(), &VarContext::new(), 0).unwrap();
        assert_eq!(d.rule, "par");
        let let_node = &d.premises[0];
        assert_eq!(let_node.rule, "let!");
        let set_node = &let_node.premises[1];
        assert_eq!(set_node.rule, "set");
        assert_eq!(set_node.context, vec![(name("x"), Usage::Bang)]);
        let bang_x = &set_node.premises[0].premises[0];
        assert_eq!(bang_x.rule, "bang");
        assert_eq!(bang_x.premises[0].depth, 1);
        assert_eq!(bang_x.premises[0].context, vec![(name("x"), Usage::Lambda)]);
        let store = &d.premises[1];
        assert_eq!(store.rule, "store");
        assert_eq!(store.premises[0].rule, "bang");
        assert_eq!(store.premises[0].premises[0].rule, "lam");
        assert_eq!(store.premises[0].premises[0].depth, 1);
        assert!(d.render(&r0()).contains("r:0; x:! ⊢^0 !x"));
    }

    #[test]
    fn z_rejected_with_criterion() {
        let e = is_wf(&programs::z(), &r0(), &VarContext::new(), 0).unwrap_err();
        assert_eq!(e.kind, WfErrorKind::BangFreeOccurrences { count: 2 });
        assert!(explain(&e).contains("at most one occurrence of free variable"));
    }

    #[test]
    fn y_accepted() {
        assert!(is_wf(&programs::y(), &r0(), &VarContext::new(), 0).is_ok());
        let mut g = VarContext::new();
        g.insert(name("y"), Usage::Bang);
        assert!(is_wf(&programs::y_chain(3), &r0(), &g, 0).is_ok());
    }

    #[test]
    fn discarding_binder() {
        let t = parse_term("(\\z. *) *").unwrap();
        let e = is_wf(&t, &r0(), &VarContext::new(), 0).unwrap_err();
        assert!(explain(&e).contains("binder binds zero occurrences"), "{}", explain(&e));
    }

    #[test]
    fn unstratified_rejected_for_all_depths() {
        for d in 0..4 {
            let rc = RegionContext::from_depths([("r", d)]);
            let e = is_wf(&programs::unstratified(), &rc, &VarContext::new(), 0).unwrap_err();
            assert!(matches!(e.kind, WfErrorKind::RegionDepth { .. }), "{d}: {e}");
        }
    }

    #[test]
    fn usages() {
        let rc = RegionContext::new();
        // λ-bound variable inside a modality.
        let t = parse_term("\\x. $x").unwrap();
        assert!(matches!(
            is_wf(&t, &rc, &VarContext::new(), 0).unwrap_err().kind,
            WfErrorKind::MisplacedVariable { inside: Some(Modality::Para), .. }
        ));
        // let !-bound variable at depth 0.
        let t = parse_term("\\y. let !x = y in x").unwrap();
        assert!(matches!(
            is_wf(&t, &rc, &VarContext::new(), 0).unwrap_err().kind,
            WfErrorKind::MisplacedVariable { inside: None, .. }
        ));
        // let §-bound variable under !.
        let t = parse_term("\\y. let $x = y in !x").unwrap();
        assert!(is_wf(&t, &rc, &VarContext::new(), 0).is_err());
        let t = parse_term("\\y. let $x = y in $x").unwrap();
        assert!(is_wf(&t, &rc, &VarContext::new(), 0).is_ok());
        assert!(is_wf(&Term::Unit, &rc, &VarContext::new(), 0).is_ok());
    }

    #[test]
    fn shadowing_does_not_reveal_outer_binding() {
        let t = parse_term("\\y. let !x = y in \\x. !x").unwrap();
        assert!(is_wf(&t, &RegionContext::new(), &VarContext::new(), 0).is_err());
    }

    #[test]
    fn stores_only_at_top() {
        let t = parse_term("\\x. (x || #r <= *)").unwrap();
        let e = is_wf(&t, &r0(), &VarContext::new(), 0).unwrap_err();
        assert!(matches!(e.kind, WfErrorKind::StoreNotAtTop { .. }));
        let t = parse_term("* || (* || #r <= *)").unwrap();
        assert!(is_wf(&t, &r0(), &VarContext::new(), 0).is_ok());
    }

    #[test]
    fn zprime_well_formed() {
        let p = programs::zprime_chain(3);
        is_wf(&p, &programs::zprime_regions(), &VarContext::new(), 0).unwrap();
    }
}
