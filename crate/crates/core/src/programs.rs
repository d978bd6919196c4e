//! Small programs used throughout the test-suite, demos and documentation.

use crate::parse::{parse_term, parse_type};
use crate::syntax::{RegionContext, Term};
use crate::types::Type;

fn term(src: &str) -> Term {
    parse_term(src).unwrap_or_else(|e| panic!("built-in program does not parse: {e}"))
}

/// `let !x = get(r) in set(r, (!x)(§x)) ∥ r ⇐ !(λx. x ⋆)`.
pub fn apply_stored() -> Term {
    term("let !x = get(#r) in set(#r, (!x) ($x)) || #r <= !(\\x. x *)")
}

/// Region type `∀t. !((1 ⊸ t) ⊸ t)` given to `#r` when typing [`apply_stored`].
pub fn apply_stored_region_type() -> Type {
    parse_type("forall t. !((1 -o t) -o t)").expect("valid type")
}

/// Duplicator violating the one-free-occurrence rule for `!`-terms.
pub fn z() -> Term {
    term("\\x. let !x = x in !(x x)")
}

/// Same shape as [`z`] but returning a `§`-term.
pub fn y() -> Term {
    term("\\x. let !x = x in $(x x)")
}

fn chain(f: &Term, n: usize, seed: Term) -> Term {
    (0..n).fold(seed, |acc, _| Term::app(f.clone(), acc))
}

/// `Z (Z (… (Z !y)))` with `n` copies of `Z`.
pub fn z_chain(n: usize) -> Term {
    chain(&z(), n, Term::bang(Term::var("y")))
}

/// `Y (Y (… (Y !y)))` with `n` copies of `Y`.
pub fn y_chain(n: usize) -> Term {
    chain(&y(), n, Term::bang(Term::var("y")))
}

/// Write at depth 1, read at depth 0: moves the stored term deeper.
pub fn unstratified() -> Term {
    term("(\\x. set(#r, x) || $get(#r)) !*")
}

/// A read duplicated by a `let !` before it happens.
pub fn dup_get() -> Term {
    term("let !x = !get(#r) in $(x x) || #r <= *")
}

/// Turns a `§`-term into a `!`-term through the store (uses `#r` and `#gr`).
pub fn para_to_bang() -> Term {
    term("\\x. let $x = x in $set(#r, x) ; !get(#r)")
}

/// `Z' = λx. let !x = x in F §(x x)` with `F` = [`para_to_bang`].
pub fn zprime() -> Term {
    let f = para_to_bang();
    Term::lam(
        "x",
        Term::let_bang("x", Term::var("x"), Term::app(f, Term::para(Term::app(Term::var("x"), Term::var("x"))))),
    )
}

/// `Z' (Z' (… (Z' !⋆)))` with `n` copies.
pub fn zprime_chain(n: usize) -> Term {
    chain(&zprime(), n, Term::bang(Term::Unit))
}

/// Region context for [`zprime_chain`]: garbage at depth 0, `#r` at depth 1.
pub fn zprime_regions() -> RegionContext {
    RegionContext::from_depths([("gr", 0), ("r", 1)])
}

/// The duplication example: `let !x = !M in (let !y = !x in §(y y) ∥ let !y = !x in §(y y))`.
pub fn four_copies(m: Term) -> Term {
    let inner =
        || Term::let_bang("y", Term::bang(Term::var("x")), Term::para(Term::app(Term::var("y"), Term::var("y"))));
    Term::let_bang("x", Term::bang(m), Term::par(inner(), inner()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{count_occ, size, SizeConvention};

    #[test]
    fn shapes() {
        assert_eq!(size(&apply_stored(), SizeConvention::Plain), 15);
        assert_eq!(count_occ("y", &z_chain(3)), 1);
        let p = four_copies(Term::Unit);
        assert_eq!(count_occ("x", &p), 0);
    }
}
