//! Printer producing surface syntax that parses back to an α-equivalent program.

use std::fmt::{self, Write};

use crate::parse::Source;
use crate::syntax::{LocDisplay, Term};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ctx {
    /// Anything, including `||` and open binders.
    Top,
    /// No `||`; binders must be closed.
    Unit,
    /// Head of an application.
    Head,
    /// Argument, prefix body or postfix operand.
    Atom,
}

fn is_binder(t: &Term) -> bool {
    matches!(t, Term::Lam(..) | Term::Let(..) | Term::Nu(..) | Term::Gen(..))
}

fn go(t: &Term, ctx: Ctx, out: &mut String) -> fmt::Result {
    let needs_parens = match t {
        Term::Par(..) => ctx > Ctx::Top,
        Term::Let(..) => ctx > Ctx::Unit,
        _ if is_binder(t) => ctx > Ctx::Top,
        Term::Store(..) => ctx > Ctx::Unit,
        Term::App(..) => ctx > Ctx::Head,
        Term::Modal(..) | Term::Inst(..) => false,
        _ => false,
    };
    if needs_parens {
        out.push('(');
        go(t, Ctx::Top, out)?;
        out.push(')');
        return Ok(());
    }
    match t {
        Term::Var(x) => write!(out, "{x}")?,
        Term::Region(r) => write!(out, "#{r}")?,
        Term::Unit => out.push('*'),
        Term::Lam(x, ty, b) => {
            write!(out, "\\{x}")?;
            if let Some(ty) = ty {
                write!(out, ":{ty}")?;
            }
            out.push_str(". ");
            go(b, Ctx::Top, out)?;
        }
        Term::Nu(x, ty, b) => {
            write!(out, "nu {x}")?;
            if let Some(ty) = ty {
                write!(out, ":{ty}")?;
            }
            out.push_str(". ");
            go(b, Ctx::Top, out)?;
        }
        Term::Gen(x, b) => {
            write!(out, "gen {x}. ")?;
            go(b, Ctx::Top, out)?;
        }
        Term::Let(m, x, a, b) => {
            write!(out, "let {}{x} = ", m.symbol())?;
            go(a, Ctx::Top, out)?;
            out.push_str(" in ");
            go(b, Ctx::Unit, out)?;
        }
        Term::App(a, b) => {
            go(a, Ctx::Head, out)?;
            out.push(' ');
            go(b, Ctx::Atom, out)?;
        }
        Term::Modal(m, b) => {
            out.push_str(m.symbol());
            go(b, Ctx::Atom, out)?;
        }
        Term::Inst(b, ty) => {
            // A postfix instantiation attaches to an atom, not to a prefix term.
            if matches!(**b, Term::Modal(..)) {
                out.push('(');
                go(b, Ctx::Top, out)?;
                out.push(')');
            } else {
                go(b, Ctx::Atom, out)?;
            }
            write!(out, " [{ty}]")?;
        }
        Term::Get(l) => write!(out, "get({})", LocDisplay(l))?,
        Term::Set(l, b) => {
            write!(out, "set({}, ", LocDisplay(l))?;
            go(b, Ctx::Top, out)?;
            out.push(')');
        }
        Term::Store(l, b) => {
            write!(out, "{} <= ", LocDisplay(l))?;
            go(b, Ctx::Unit, out)?;
        }
        Term::Par(a, b) => {
            go(a, Ctx::Unit, out)?;
            out.push_str(" || ");
            go(b, Ctx::Top, out)?;
        }
    }
    Ok(())
}

pub fn print(t: &Term) -> String {
    let mut s = String::new();
    go(t, Ctx::Top, &mut s).expect("writing to a String cannot fail");
    s
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self))
    }
}

/// Prints header declarations followed by the program.
pub fn print_source(src: &Source) -> String {
    let mut s = String::new();
    for (r, info) in src.regions.iter() {
        let _ = write!(s, "region #{r} : depth = {}", info.depth);
        if let Some(ty) = &info.ty {
            let _ = write!(s, ", type = {ty}");
        }
        s.push('\n');
    }
    for (x, ty) in &src.locations {
        let _ = writeln!(s, "loc {x} : {ty}");
    }
    s.push_str(&print(&src.program));
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_term;
    use crate::programs;
    use crate::syntax::struct_equiv;

    fn roundtrip(src: &str) {
        let t = parse_term(src).unwrap();
        let printed = print(&t);
        let back = parse_term(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
        assert_eq!(back, t, "{printed}");
    }

    #[test]
    fn unit() {
        assert_eq!(print(&Term::Unit), "*");
    }

    #[test]
    fn apply_stored_roundtrip() {
        let p = programs::apply_stored();
        assert!(struct_equiv(&parse_term(&print(&p)).unwrap(), &p));
    }

    #[test]
    fn tricky_shapes() {
        for s in [
            "(\\x. x) || y",
            "f (\\x. x)",
            "(a || b) || c",
            "#r <= (\\x. x) || get(#r)",
            "!(f x) y",
            "(!x) [t]",
            "(f x) [t] y",
            "let !x = (a || b) in x",
            "let !x = a in (b || c)",
            "let !x = a in b || c",
            "(let !x = a in \\y. y) || c",
            "let !x = a in b ; c",
            "set(#r, a || b)",
            "!!$*",
            "gen t. \\x:forall s. s -o s. x [t]",
            "nu l:Reg #r !1. set(l, !*) || l <= !*",
            "f \\x. x",
        ] {
            roundtrip(s);
        }
    }
}
