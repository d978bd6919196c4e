//! Surface syntax: lexer and recursive-descent parser for programs, types and
//! source headers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::syntax::{all_names, fresh_name, name, regions_of, Loc, Modality, Name, RegionContext, Term};
use crate::types::{Effects, Type};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Region(String),
    Int(u64),
    Star,
    Backslash,
    Dot,
    Colon,
    Comma,
    Semi,
    Bang,
    Dollar,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Par,
    Lolli,
    StoreArrow,
    Eq,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Region(s) => write!(f, "`#{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Backslash => write!(f, "`\\`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Dollar => write!(f, "`$`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::Par => write!(f, "`||`"),
            Tok::Lolli => write!(f, "`-o`"),
            Tok::StoreArrow => write!(f, "`<=`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, message: String| ParseError { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let tok = match two.as_str() {
            "||" => Some(Tok::Par),
            "-o" if !chars.get(i + 2).is_some_and(|&c| is_ident_char(c)) => Some(Tok::Lolli),
            "<=" => Some(Tok::StoreArrow),
            _ => None,
        };
        if let Some(tok) = tok {
            out.push(Spanned { tok, line: l0, col: c0 });
            advance(2, &mut i, &mut col);
            continue;
        }
        let single = match c {
            '*' => Some(Tok::Star),
            '\\' | 'λ' => Some(Tok::Backslash),
            '.' => Some(Tok::Dot),
            ':' => Some(Tok::Colon),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            '!' => Some(Tok::Bang),
            '$' | '§' => Some(Tok::Dollar),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '=' => Some(Tok::Eq),
            '⋆' => Some(Tok::Star),
            '∥' => Some(Tok::Par),
            '⊸' => Some(Tok::Lolli),
            '⇐' => Some(Tok::StoreArrow),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, line: l0, col: c0 });
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '#' {
            let start = i + 1;
            let mut j = start;
            if j < chars.len() && is_ident_start(chars[j]) {
                while j < chars.len() && is_ident_char(chars[j]) {
                    j += 1;
                }
            }
            if j == start {
                return Err(err(l0, c0, "expected a region name after `#`".into()));
            }
            let s: String = chars[start..j].iter().collect();
            out.push(Spanned { tok: Tok::Region(s), line: l0, col: c0 });
            advance(j - i, &mut i, &mut col);
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let s: String = chars[i..j].iter().collect();
            let n = s.parse().map_err(|_| err(l0, c0, format!("number `{s}` is too large")))?;
            out.push(Spanned { tok: Tok::Int(n), line: l0, col: c0 });
            advance(j - i, &mut i, &mut col);
            continue;
        }
        if is_ident_start(c) {
            let mut j = i;
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            let s: String = chars[i..j].iter().collect();
            out.push(Spanned { tok: Tok::Ident(s), line: l0, col: c0 });
            advance(j - i, &mut i, &mut col);
            continue;
        }
        return Err(err(l0, c0, format!("unexpected character `{c}`")));
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

const RESERVED: &[&str] = &["let", "in", "get", "set", "nu", "gen", "region", "loc"];

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser { toks: lex(src)?, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let s = &self.toks[self.pos];
        Err(ParseError { line: s.line, col: s.col, message: message.into() })
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {t}, found {}", self.peek()))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", self.peek()))
        }
    }

    fn ident(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                self.bump();
                Ok(name(&s))
            }
            t => self.error(format!("expected an identifier, found {t}")),
        }
    }

    fn region_name(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Region(s) => {
                self.bump();
                Ok(name(&s))
            }
            t => self.error(format!("expected a region `#r`, found {t}")),
        }
    }

    // ---- types ----

    fn ty(&mut self) -> PResult<Type> {
        if self.is_kw("forall") {
            self.bump();
            let t = self.ident()?;
            self.expect(Tok::Dot)?;
            let body = self.ty()?;
            return Ok(Type::Forall(t, Box::new(body)));
        }
        let a = self.ty_prefix()?;
        if *self.peek() == Tok::Lolli {
            self.bump();
            let eff = if *self.peek() == Tok::LBrace { self.effects()? } else { Effects::default() };
            let b = self.ty()?;
            return Ok(Type::Arrow(Box::new(a), Box::new(b), eff));
        }
        Ok(a)
    }

    fn effects(&mut self) -> PResult<Effects> {
        self.expect(Tok::LBrace)?;
        let pre = self.region_set(Tok::Semi)?;
        self.expect(Tok::Semi)?;
        let post = self.region_set(Tok::RBrace)?;
        self.expect(Tok::RBrace)?;
        Ok(Effects { pre, post })
    }

    fn region_set(&mut self, stop: Tok) -> PResult<BTreeSet<Name>> {
        let mut out = BTreeSet::new();
        while *self.peek() != stop {
            out.insert(self.region_name()?);
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        Ok(out)
    }

    fn ty_prefix(&mut self) -> PResult<Type> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                Ok(Type::bang(self.ty_prefix()?))
            }
            Tok::Dollar => {
                self.bump();
                Ok(Type::para(self.ty_prefix()?))
            }
            Tok::Ident(s) if s == "Reg" => {
                self.bump();
                let r = self.region_name()?;
                Ok(Type::Reg(r, Box::new(self.ty_prefix()?)))
            }
            Tok::Ident(s) if s == "List" => {
                self.bump();
                Ok(Type::list(self.ty_prefix()?))
            }
            _ => self.ty_atom(),
        }
    }

    fn ty_atom(&mut self) -> PResult<Type> {
        match self.peek().clone() {
            Tok::Int(1) => {
                self.bump();
                Ok(Type::Unit)
            }
            Tok::LParen => {
                self.bump();
                let t = self.ty()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Tok::Ident(s) => {
                let t = match s.as_str() {
                    "B" => Type::Behaviour,
                    "Nat" => Type::nat(),
                    "BNat" => Type::bnat(),
                    "forall" | "Reg" | "List" => return self.error(format!("unexpected `{s}`")),
                    _ if RESERVED.contains(&s.as_str()) => {
                        return self.error(format!("unexpected keyword `{s}` in type"))
                    }
                    _ => Type::Var(name(&s)),
                };
                self.bump();
                Ok(t)
            }
            t => self.error(format!("expected a type, found {t}")),
        }
    }

    // ---- terms ----

    fn program(&mut self) -> PResult<Term> {
        let left = self.seq()?;
        if *self.peek() == Tok::Par {
            self.bump();
            let right = self.program()?;
            return Ok(Term::par(left, right));
        }
        Ok(left)
    }

    fn seq(&mut self) -> PResult<Term> {
        let first = self.unit()?;
        if *self.peek() == Tok::Semi {
            self.bump();
            let rest = self.seq()?;
            return Ok(sequence(first, rest));
        }
        Ok(first)
    }

    fn starts_binder(&self) -> bool {
        *self.peek() == Tok::Backslash || self.is_kw("let") || self.is_kw("nu") || self.is_kw("gen")
    }

    fn unit(&mut self) -> PResult<Term> {
        if self.starts_binder() {
            return self.binder();
        }
        if matches!(self.peek(), Tok::Region(_)) && *self.peek_at(1) == Tok::StoreArrow {
            let r = self.region_name()?;
            self.bump();
            let body = self.unit()?;
            return Ok(Term::Store(Loc::Region(r), Box::new(body)));
        }
        if matches!(self.peek(), Tok::Ident(s) if !RESERVED.contains(&s.as_str()))
            && *self.peek_at(1) == Tok::StoreArrow
        {
            let x = self.ident()?;
            self.bump();
            let body = self.unit()?;
            return Ok(Term::Store(Loc::Var(x), Box::new(body)));
        }
        self.app()
    }

    fn binder(&mut self) -> PResult<Term> {
        if *self.peek() == Tok::Backslash {
            self.bump();
            let modal = match self.peek() {
                Tok::Bang => Some(Modality::Bang),
                Tok::Dollar => Some(Modality::Para),
                _ => None,
            };
            if modal.is_some() {
                self.bump();
            }
            let x = self.ident()?;
            let ann = if *self.peek() == Tok::Colon {
                self.bump();
                Some(self.ty()?)
            } else {
                None
            };
            self.expect(Tok::Dot)?;
            let body = self.program()?;
            let body = match modal {
                // λ†x.M abbreviates λx.let †x = x in M.
                Some(m) => Term::Let(m, x.clone(), Box::new(Term::Var(x.clone())), Box::new(body)),
                None => body,
            };
            return Ok(Term::Lam(x, ann, Box::new(body)));
        }
        if self.is_kw("let") {
            self.bump();
            let m = match self.bump() {
                Tok::Bang => Modality::Bang,
                Tok::Dollar => Modality::Para,
                _ => {
                    self.pos -= 1;
                    return self.error("expected `!` or `$` after `let`");
                }
            };
            let x = self.ident()?;
            self.expect(Tok::Eq)?;
            let bound = self.program()?;
            self.expect_kw("in")?;
            // A let body stops at `||`, unlike λ-bodies.
            let body = self.seq()?;
            return Ok(Term::Let(m, x, Box::new(bound), Box::new(body)));
        }
        if self.is_kw("nu") {
            self.bump();
            let x = self.ident()?;
            let ann = if *self.peek() == Tok::Colon {
                self.bump();
                Some(self.ty()?)
            } else {
                None
            };
            self.expect(Tok::Dot)?;
            let body = self.program()?;
            return Ok(Term::Nu(x, ann, Box::new(body)));
        }
        self.expect_kw("gen")?;
        let t = self.ident()?;
        self.expect(Tok::Dot)?;
        let body = self.program()?;
        Ok(Term::Gen(t, Box::new(body)))
    }

    fn starts_prefix(&self) -> bool {
        match self.peek() {
            Tok::Ident(s) => !RESERVED.contains(&s.as_str()) || s == "get" || s == "set",
            Tok::Region(_) => *self.peek_at(1) != Tok::StoreArrow,
            Tok::Star | Tok::LParen | Tok::Bang | Tok::Dollar => true,
            _ => false,
        }
    }

    fn app(&mut self) -> PResult<Term> {
        if !self.starts_prefix() {
            return self.error(format!("expected a term, found {}", self.peek()));
        }
        let mut acc = self.prefix()?;
        loop {
            if self.starts_binder() {
                let arg = self.binder()?;
                return Ok(Term::app(acc, arg));
            }
            if !self.starts_prefix() {
                return Ok(acc);
            }
            // `x <= M` after an application head would be ambiguous.
            if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::StoreArrow {
                return Ok(acc);
            }
            let arg = self.prefix()?;
            acc = Term::app(acc, arg);
        }
    }

    fn prefix(&mut self) -> PResult<Term> {
        let m = match self.peek() {
            Tok::Bang => Some(Modality::Bang),
            Tok::Dollar => Some(Modality::Para),
            _ => None,
        };
        if let Some(m) = m {
            self.bump();
            let body = if self.starts_binder() { self.binder()? } else { self.prefix()? };
            return Ok(Term::Modal(m, Box::new(body)));
        }
        let mut t = self.atom()?;
        while *self.peek() == Tok::LBracket {
            self.bump();
            let ty = self.ty()?;
            self.expect(Tok::RBracket)?;
            t = Term::Inst(Box::new(t), ty);
        }
        Ok(t)
    }

    fn loc(&mut self) -> PResult<Loc> {
        match self.peek() {
            Tok::Region(_) => Ok(Loc::Region(self.region_name()?)),
            _ => Ok(Loc::Var(self.ident()?)),
        }
    }

    fn atom(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Star => {
                self.bump();
                Ok(Term::Unit)
            }
            Tok::Region(r) => {
                self.bump();
                Ok(Term::Region(name(&r)))
            }
            Tok::LParen => {
                self.bump();
                let t = self.program()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Tok::Ident(s) if s == "get" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let l = self.loc()?;
                self.expect(Tok::RParen)?;
                Ok(Term::Get(l))
            }
            Tok::Ident(s) if s == "set" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let l = self.loc()?;
                self.expect(Tok::Comma)?;
                let body = self.program()?;
                self.expect(Tok::RParen)?;
                Ok(Term::Set(l, Box::new(body)))
            }
            Tok::Ident(_) => Ok(Term::Var(self.ident()?)),
            t => self.error(format!("expected a term, found {t}")),
        }
    }

    fn decl(&mut self, src: &mut Source) -> PResult<()> {
        if self.is_kw("region") {
            self.bump();
            let r = self.region_name()?;
            self.expect(Tok::Colon)?;
            self.expect_kw("depth")?;
            self.expect(Tok::Eq)?;
            let depth = match self.bump() {
                Tok::Int(n) => n as usize,
                t => {
                    self.pos -= 1;
                    return self.error(format!("expected a depth, found {t}"));
                }
            };
            let mut ty = None;
            if *self.peek() == Tok::Comma {
                self.bump();
                self.expect_kw("type")?;
                self.expect(Tok::Eq)?;
                ty = Some(self.ty()?);
            }
            if src.regions.contains(&r) {
                return self.error(format!("region #{r} declared twice"));
            }
            src.regions.insert(r, depth, ty);
        } else {
            self.expect_kw("loc")?;
            let x = self.ident()?;
            self.expect(Tok::Colon)?;
            let ty = self.ty()?;
            if src.locations.insert(x.clone(), ty).is_some() {
                return self.error(format!("location {x} declared twice"));
            }
        }
        if *self.peek() == Tok::Semi {
            self.bump();
        }
        Ok(())
    }
}

/// `M ; N` is `(λz. set(#gr, z) ∥ N) M` with `z` fresh.
pub fn sequence(m: Term, n: Term) -> Term {
    let mut avoid = BTreeSet::new();
    all_names(&n, &mut avoid);
    all_names(&m, &mut avoid);
    let z = if avoid.contains("z") { fresh_name("z", &avoid) } else { name("z") };
    let body = Term::par(Term::Set(Loc::Region(name("gr")), Box::new(Term::Var(z.clone()))), n);
    Term::app(Term::Lam(z, None, Box::new(body)), m)
}

/// A parsed source file: header declarations plus one program.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Source {
    pub regions: RegionContext,
    /// Free memory locations of the reference front-end, with their types.
    pub locations: BTreeMap<Name, Type>,
    pub program: Term,
}

/// Parses a bare program (no header, no region check).
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(src)?;
    let t = p.program()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after program", p.peek()));
    }
    Ok(t)
}

pub fn parse_type(src: &str) -> Result<Type, ParseError> {
    let mut p = Parser::new(src)?;
    let t = p.ty()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after type", p.peek()));
    }
    Ok(t)
}

/// Parses a header followed by a program; every region used must be declared.
pub fn parse_source(src: &str) -> Result<Source, ParseError> {
    let mut p = Parser::new(src)?;
    let mut out = Source::default();
    while p.is_kw("region") || (p.is_kw("loc") && matches!(p.peek_at(1), Tok::Ident(_))) {
        p.decl(&mut out)?;
    }
    let (line, col) = (p.toks[p.pos].line, p.toks[p.pos].col);
    out.program = p.program()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after program", p.peek()));
    }
    let undeclared = |r: &Name| ParseError { line, col, message: format!("region #{r} is not declared in the header") };
    for r in regions_of(&out.program) {
        if !out.regions.contains(&r) {
            return Err(undeclared(&r));
        }
    }
    let mut types: Vec<&Type> = out.locations.values().collect();
    types.extend(out.regions.iter().filter_map(|(_, i)| i.ty.as_ref()));
    for ty in types {
        for r in ty.regions() {
            if !out.regions.contains(&r) {
                return Err(undeclared(&r));
            }
        }
    }
    Ok(out)
}
