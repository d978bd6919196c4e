//! Church encodings of naturals, binary words and lists, their iterators,
//! the increment-through-references programs, and decoders.

use crate::parse::{parse_term, Source};
use crate::reduce::{run, ReduceError, Relation, Strategy, DEFAULT_FUEL};
use crate::syntax::{all_names, fresh_name, name, term_type_vars, Modality, Name, RegionContext, Term};
use crate::types::{fresh_type_var, Type};

fn term(src: &str) -> Term {
    parse_term(src).unwrap_or_else(|e| panic!("encoding does not parse: {e}\n{src}"))
}

/// `f (f (… (f x)))` with `n` applications.
fn iterate(f: &str, n: usize, x: &str) -> String {
    let mut s = x.to_string();
    for _ in 0..n {
        s = format!("{f} ({s})");
    }
    s
}

/// `⌜n⌝ = λ!f. §(λx. f (… (f x)))`, annotated at type `Nat`.
pub fn nat(n: usize) -> Term {
    term(&format!("gen t. \\!f:!(t -o t). $(\\x:t. {})", iterate("f", n, "x")))
}

/// `⌜w⌝ = λ!x0. λ!x1. §(λz. x_{i0} (… (x_{in} z)))` at type `BNat`.
pub fn word(w: &str) -> Term {
    let mut body = "z".to_string();
    for c in w.chars().rev() {
        assert!(c == '0' || c == '1', "binary words use 0 and 1, found {c:?}");
        body = format!("x{c} ({body})");
    }
    term(&format!("gen t. \\!x0:!(t -o t). \\!x1:!(t -o t). $(\\z:t. {body})"))
}

/// `⌜u1, …, un⌝ = λ!f. §(λx. f u1 (… (f un x)))` at type `List A`.
pub fn list(items: &[Term], elem: &Type) -> Term {
    let mut tyvars = elem.free_vars();
    let mut names = std::collections::BTreeSet::new();
    for u in items {
        term_type_vars(u, &mut tyvars);
        all_names(u, &mut names);
    }
    let t = fresh_type_var("t", &tyvars);
    let pick = |b: &str| if names.contains(b) { fresh_name(b, &names) } else { name(b) };
    let (f, x) = (pick("f"), pick("x"));
    let mut body = x.to_string();
    for u in items.iter().rev() {
        body = format!("{f} ({u}) ({body})");
    }
    term(&format!("gen {t}. \\!{f}:!(({elem}) -o {t} -o {t}). $(\\{x}:{t}. {body})"))
}

/// `add = λm. λn. λ!f. let §y = m !f in let §z = n !f in §(λx. y (z x))`.
pub fn add() -> Term {
    term(
        "\\m:Nat. \\n:Nat. gen t. \\!f:!(t -o t). \
         let $y = m [t] !f in let $z = n [t] !f in $(\\x:t. y (z x))",
    )
}

/// `list_it = λf. λl. λ§x. let §y = l f in §(y x)`.
pub fn list_it() -> Term {
    term(
        "gen u. gen t. \\f:!(u -o t -o t). \\l:List u. \\$x:$t. \
         let $y = l [t] f in $(y x)",
    )
}

/// Region holding the counters: depth 3, content `!Nat`.
pub fn counter_regions() -> RegionContext {
    RegionContext::new().with("r", 3, Some(Type::bang(Type::nat())))
}

/// `Reg r !Nat`.
pub fn counter_type() -> Type {
    Type::reg("r", Type::bang(Type::nat()))
}

/// `update = λ!x. λ§z. §(set(x, let !y = get(x) in !(add ⌜2⌝ y)) ∥ z)`.
pub fn update() -> Term {
    term(&format!(
        "\\!x:!({reg}). \\$z:$1. \
         $(set(x, let !y = get(x) in !(({add}) ({two}) y)) || z)",
        reg = counter_type(),
        add = add(),
        two = nat(2),
    ))
}

/// `⌜!x, !y, !z⌝` over the given locations.
pub fn location_list(locs: &[&str]) -> Term {
    let items: Vec<Term> = locs.iter().map(|l| Term::bang(Term::var(l))).collect();
    list(&items, &Type::bang(counter_type()))
}

/// `list_it !update ⌜!x, !y, !z⌝ §§⋆`; typed at depth 1 with type `§§1`.
pub fn run_program() -> Term {
    let elem = Type::bang(counter_type());
    term(&format!(
        "({it}) [{elem}] [$1] !({upd}) ({l}) $$*",
        it = list_it(),
        upd = update(),
        l = location_list(&["x", "y", "z"]),
    ))
}

/// `gen_threads = λ!f. λ!x. §(f x) ∥ §(f x) ∥ §(f x)`.
pub fn gen_threads() -> Term {
    term(
        "gen t. gen t2. \\!f:!(t -o t2). \\!x:!t. \
         $(f x) || $(f x) || $(f x)",
    )
}

/// `F = λl. list_it !update l §§⋆`.
pub fn run_functional() -> Term {
    let elem = Type::bang(counter_type());
    term(&format!("\\l:List ({elem}). ({it}) [{elem}] [$1] !({upd}) l $$*", it = list_it(), upd = update(),))
}

/// `run_threads = gen_threads !F !⌜!x, !y, !z⌝`; typed at depth 0 with type `B`.
pub fn run_threads_program() -> Term {
    let elem = Type::bang(counter_type());
    term(&format!(
        "({g}) [List ({elem})] [$$1] !({f}) !({l})",
        g = gen_threads(),
        f = run_functional(),
        l = location_list(&["x", "y", "z"]),
    ))
}

fn with_counters(program: Term, start: [usize; 3]) -> Source {
    let locs = ["x", "y", "z"];
    let stores = locs
        .iter()
        .zip(start)
        .map(|(l, v)| Term::Store(crate::syntax::Loc::Var(name(l)), Box::new(Term::bang(nat(v)))));
    let mut items = vec![program];
    items.extend(stores);
    Source {
        regions: counter_regions(),
        locations: locs.iter().map(|l| (name(l), counter_type())).collect(),
        program: Term::par_all(items),
    }
}

/// `run ∥ x ⇐ !⌜m⌝ ∥ y ⇐ !⌜n⌝ ∥ z ⇐ !⌜p⌝`.
pub fn build_run(start: [usize; 3]) -> Source {
    with_counters(run_program(), start)
}

/// `run_threads ∥ x ⇐ !⌜m⌝ ∥ y ⇐ !⌜n⌝ ∥ z ⇐ !⌜p⌝`.
pub fn build_run_threads(start: [usize; 3]) -> Source {
    with_counters(run_threads_program(), start)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("not a numeral: {0}")]
    NotNumeral(String),
    #[error("not a binary word: {0}")]
    NotWord(String),
    #[error("normalization did not finish")]
    Diverged,
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

/// Full normal form, leftmost-first.
pub fn normalize(t: &Term) -> Result<Term, DecodeError> {
    let r = run(&t.erase(), Relation::Full, Strategy::CbvLeftmost, &RegionContext::new(), DEFAULT_FUEL)?;
    if r.halted {
        Ok(r.final_program)
    } else {
        Err(DecodeError::Diverged)
    }
}

fn strip_modalities(mut t: &Term) -> &Term {
    while let Term::Modal(_, b) = t.peel() {
        t = b;
    }
    t.peel()
}

/// `λf. let !f' = f in body` with the bound name returned.
fn bang_binder(t: &Term) -> Option<(&Name, &Term)> {
    let Term::Lam(f, _, body) = t.peel() else { return None };
    let Term::Let(Modality::Bang, g, bound, body) = body.peel() else { return None };
    match bound.peel() {
        Term::Var(h) if h == f => Some((g, body)),
        _ => None,
    }
}

/// Counts `f (f (… x))` where every head is one of `heads`; returns the heads in order.
fn spine(mut t: &Term, heads: &[&Name], x: &Name) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    loop {
        match t.peel() {
            Term::Var(v) if v == x => return Some(out),
            Term::App(f, a) => {
                let Term::Var(h) = f.peel() else { return None };
                out.push(heads.iter().position(|k| *k == h)?);
                t = a;
            }
            _ => return None,
        }
    }
}

/// Reads a Church numeral off a term's normal form, ignoring outer modalities.
pub fn decode_nat(t: &Term) -> Result<usize, DecodeError> {
    let nf = normalize(t)?;
    let fail = || DecodeError::NotNumeral(nf.to_string());
    let (f, body) = bang_binder(strip_modalities(&nf)).ok_or_else(fail)?;
    let Term::Modal(Modality::Para, inner) = body.peel() else { return Err(fail()) };
    let Term::Lam(x, _, inner) = inner.peel() else { return Err(fail()) };
    if x == f {
        return Err(fail());
    }
    spine(inner, &[f], x).map(|v| v.len()).ok_or_else(fail)
}

/// Reads a binary word off a term's normal form.
pub fn decode_word(t: &Term) -> Result<String, DecodeError> {
    let nf = normalize(t)?;
    let fail = || DecodeError::NotWord(nf.to_string());
    let (x0, body) = bang_binder(strip_modalities(&nf)).ok_or_else(fail)?;
    let (x1, body) = bang_binder(body).ok_or_else(fail)?;
    let Term::Modal(Modality::Para, inner) = body.peel() else { return Err(fail()) };
    let Term::Lam(z, _, inner) = inner.peel() else { return Err(fail()) };
    if z == x0 || z == x1 || x0 == x1 {
        return Err(fail());
    }
    let digits = spine(inner, &[x0, x1], z).ok_or_else(fail)?;
    Ok(digits.iter().map(|d| if *d == 0 { '0' } else { '1' }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typing::{type_of, typecheck_in, Locations};

    fn ty_of(t: &Term) -> Type {
        type_of(t, &RegionContext::new(), &Locations::new()).unwrap()
    }

    #[test]
    fn numerals() {
        for n in 1..6 {
            assert!(ty_of(&nat(n)).equiv(&Type::nat()), "{n}");
            assert_eq!(decode_nat(&nat(n)).unwrap(), n);
        }
        // Zero discards its argument, which the `let !` rule forbids.
        assert!(type_of(&nat(0), &RegionContext::new(), &Locations::new()).is_err());
        assert_eq!(decode_nat(&nat(0)).unwrap(), 0);
    }

    #[test]
    fn words() {
        assert!(ty_of(&word("0110")).equiv(&Type::bnat()));
        assert_eq!(decode_word(&word("0110")).unwrap(), "0110");
        assert_eq!(decode_word(&word("")).unwrap(), "");
    }

    #[test]
    fn addition() {
        let add_ty = Type::arrow(Type::nat(), Type::arrow(Type::nat(), Type::nat()));
        assert!(ty_of(&add()).equiv(&add_ty));
        let sum = Term::app(Term::app(add(), nat(2)), nat(3));
        assert!(ty_of(&sum).equiv(&Type::nat()));
        assert_eq!(decode_nat(&sum).unwrap(), 5);
    }

    #[test]
    fn lists() {
        let it = list_it();
        let want = crate::parse::parse_type("forall u. forall t. !(u -o t -o t) -o List u -o $t -o $t").unwrap();
        assert!(ty_of(&it).equiv(&want));
        let l = list(&[nat(1), nat(2)], &Type::nat());
        assert!(ty_of(&l).equiv(&Type::list(Type::nat())));
    }

    #[test]
    fn update_and_run_types() {
        let rc = counter_regions();
        let locs: Locations = ["x", "y", "z"].iter().map(|l| (name(l), counter_type())).collect();
        let upd = typecheck_in(&update(), &rc, &locs, &[], 2).unwrap();
        let want = crate::parse::parse_type("!(Reg #r !Nat) -o $1 -o $1").unwrap();
        assert!(upd.ty.equiv(&want), "{}", upd.ty);
        let run = typecheck_in(&run_program(), &rc, &locs, &[], 1).unwrap();
        assert!(run.ty.equiv(&crate::parse::parse_type("$$1").unwrap()));
        let threads = build_run_threads([1, 2, 3]);
        let d = crate::typing::typecheck_source(&threads).unwrap();
        assert_eq!(d.ty, Type::Behaviour);
    }
}
