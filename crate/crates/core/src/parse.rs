//! Lexer and recursive-descent parser for the `.lh` surface syntax.
//!
//! Sugar is removed here: lists, `if`, non-recursive `let`, unit, integer
//! operators. What comes out is the plain core AST.

use std::collections::HashMap;

use thiserror::Error;

use crate::syntax::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { msg: String, span: Span, line: usize, col: usize },
    #[error("constructor `{tag}` used with {found} argument(s) at {line}:{col}, expected {expected}")]
    Arity { tag: String, expected: usize, found: usize, span: Span, line: usize, col: usize },
    #[error("duplicate top-level definition `{name}` at {line}:{col}")]
    Duplicate { name: String, span: Span, line: usize, col: usize },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::Arity { span, .. }
            | ParseError::Duplicate { span, .. } => *span,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Upper(String),
    Int(i64),
    Kw(&'static str),
    Sym(&'static str),
    Eof,
}

const KEYWORDS: &[&str] = &["let", "rec", "in", "fun", "case", "of", "if", "then", "else"];
// longest first
const SYMBOLS: &[&str] =
    &["->", "::", ">=", "(", ")", "{", "}", "[", "]", ";", ",", "=", "+", "-", "*", ">"];

fn line_col(src: &str, pos: usize) -> (usize, usize) {
    let before = &src[..pos.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    let err = |msg: String, start: usize, end: usize| {
        let (line, col) = line_col(src, start);
        ParseError::Syntax { msg, span: Span { start, end }, line, col }
    };
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if src[i..].starts_with("--") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let v = src[start..i]
                .parse::<i64>()
                .map_err(|_| err("integer literal out of range".into(), start, i))?;
            out.push((Tok::Int(v), Span { start, end: i }));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'\'')
            {
                i += 1;
            }
            let word = &src[start..i];
            let tok = if let Some(k) = KEYWORDS.iter().find(|k| **k == word) {
                Tok::Kw(k)
            } else if c.is_ascii_uppercase() {
                Tok::Upper(word.to_string())
            } else if word == "_" {
                return Err(err("wildcard patterns are not supported".into(), start, i));
            } else {
                Tok::Ident(word.to_string())
            };
            out.push((tok, Span { start, end: i }));
            continue;
        }
        if let Some(s) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            i += s.len();
            out.push((Tok::Sym(s), Span { start, end: i }));
            continue;
        }
        let ch = src[i..].chars().next().unwrap_or('?');
        return Err(err(format!("unexpected character `{ch}`"), start, start + ch.len_utf8()));
    }
    out.push((Tok::Eof, Span { start: src.len(), end: src.len() }));
    Ok(out)
}

/// Surface parameter: a name or the unit pattern `()`.
fn param_name(p: &Option<String>) -> &str {
    p.as_deref().unwrap_or(UNIT_PARAM)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, Span)>,
    pos: usize,
    ids: IdGen,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let span = self.span();
        let (line, col) = line_col(self.src, span.start);
        let msg = if *self.peek() == Tok::Eof {
            format!("{} (unexpected end of input)", msg.into())
        } else {
            msg.into()
        };
        Err(ParseError::Syntax { msg, span, line, col })
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn at_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Kw(x) if *x == s)
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.at_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{s}`"))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.at_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{s}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("expected identifier"),
        }
    }

    fn node(&mut self, kind: Kind, start: usize) -> Term {
        let end = self.toks[self.pos.saturating_sub(1)].1.end.max(start);
        Term { id: self.ids.next(), span: Some(Span { start, end }), kind }
    }

    /// Zero or more parameters: identifiers or `()`.
    fn params(&mut self) -> PResult<Vec<Option<String>>> {
        let mut ps = Vec::new();
        loop {
            match self.peek() {
                Tok::Ident(_) => ps.push(Some(self.ident()?)),
                Tok::Sym("(") if matches!(self.peek_at(1), Tok::Sym(")")) => {
                    self.bump();
                    self.bump();
                    ps.push(None);
                }
                _ => return Ok(ps),
            }
        }
    }

    fn lams(&mut self, ps: &[Option<String>], body: Term, start: usize) -> Term {
        ps.iter().rev().fold(body, |acc, p| {
            let kind = Kind::Lam { param: param_name(p).to_string(), body: Box::new(acc), thunk: false };
            self.node(kind, start)
        })
    }

    fn program(&mut self) -> PResult<Program> {
        let mut defs: Vec<Def> = Vec::new();
        let mut seen: HashMap<String, Span> = HashMap::new();
        loop {
            let start = self.span().start;
            self.expect_kw("let")?;
            let recursive = if self.at_kw("rec") {
                self.bump();
                true
            } else {
                false
            };
            let name_span = self.span();
            let name = self.ident()?;
            if seen.insert(name.clone(), name_span).is_some() {
                let (line, col) = line_col(self.src, name_span.start);
                return Err(ParseError::Duplicate { name, span: name_span, line, col });
            }
            let ps = self.params()?;
            self.expect_sym("=")?;
            let body = self.expr()?;
            let body = self.lams(&ps, body, start);
            if name == "main" {
                if *self.peek() != Tok::Eof {
                    return self.error("`main` must be the last definition");
                }
                return Ok(Program { defs, main: body, next_id: self.ids.0 });
            }
            defs.push(Def { name, recursive, body });
            if *self.peek() == Tok::Eof {
                return self.error("expected `let main = ...`");
            }
        }
    }

    fn expr(&mut self) -> PResult<Term> {
        let start = self.span().start;
        match self.peek() {
            Tok::Kw("fun") => {
                self.bump();
                let ps = self.params()?;
                if ps.is_empty() {
                    return self.error("expected lambda parameter");
                }
                self.expect_sym("->")?;
                let body = self.expr()?;
                Ok(self.lams(&ps, body, start))
            }
            Tok::Kw("let") => {
                self.bump();
                let rec = if self.at_kw("rec") {
                    self.bump();
                    true
                } else {
                    false
                };
                let name = self.ident()?;
                let ps = self.params()?;
                self.expect_sym("=")?;
                let bound = self.expr()?;
                let bound = self.lams(&ps, bound, start);
                self.expect_kw("in")?;
                let body = self.expr()?;
                if rec {
                    Ok(self.node(Kind::LetRec(name, Box::new(bound), Box::new(body)), start))
                } else {
                    let lam = self.node(
                        Kind::Lam { param: name, body: Box::new(body), thunk: false },
                        start,
                    );
                    Ok(self.node(Kind::App(Box::new(lam), Box::new(bound)), start))
                }
            }
            Tok::Kw("if") => {
                self.bump();
                let c = self.expr()?;
                self.expect_kw("then")?;
                let a = self.expr()?;
                self.expect_kw("else")?;
                let b = self.expr()?;
                let arms = vec![
                    Arm { tag: TRUE.into(), binders: vec![], body: a },
                    Arm { tag: FALSE.into(), binders: vec![], body: b },
                ];
                Ok(self.node(Kind::Case { scrut: Box::new(c), arms, mark: None }, start))
            }
            Tok::Kw("case") => {
                self.bump();
                let s = self.expr()?;
                self.expect_kw("of")?;
                self.expect_sym("{")?;
                let mut arms: Vec<Arm> = Vec::new();
                while !self.at_sym("}") {
                    let pat_span = self.span();
                    let (tag, binders) = self.pattern()?;
                    if arms.iter().any(|a| a.tag == tag) {
                        return Err(self.syntax_at(pat_span, format!("duplicate case arm `{tag}`")));
                    }
                    self.expect_sym("->")?;
                    let body = self.expr()?;
                    arms.push(Arm { tag, binders, body });
                    if self.at_sym(";") {
                        self.bump();
                    } else if !self.at_sym("}") {
                        return self.error("expected `;` or `}`");
                    }
                }
                self.bump();
                if arms.is_empty() {
                    return self.error("case needs at least one arm");
                }
                Ok(self.node(Kind::Case { scrut: Box::new(s), arms, mark: None }, start))
            }
            _ => self.cmp(),
        }
    }

    fn syntax_at(&self, span: Span, msg: String) -> ParseError {
        let (line, col) = line_col(self.src, span.start);
        ParseError::Syntax { msg, span, line, col }
    }

    fn pattern(&mut self) -> PResult<(String, Vec<String>)> {
        let binder = |p: &mut Self| -> PResult<String> {
            match p.peek() {
                Tok::Ident(_) => p.ident(),
                _ => p.error("nested patterns are not supported; expected a variable"),
            }
        };
        match self.peek().clone() {
            Tok::Sym("[") => {
                self.bump();
                self.expect_sym("]")?;
                Ok((NIL.into(), vec![]))
            }
            Tok::Sym("(") => {
                self.bump();
                self.expect_sym(")")?;
                Ok((UNIT.into(), vec![]))
            }
            Tok::Upper(tag) => {
                self.bump();
                let mut bs = Vec::new();
                while !self.at_sym("->") {
                    let sp = self.span();
                    let b = binder(self)?;
                    if bs.contains(&b) {
                        return Err(self.syntax_at(sp, format!("duplicate pattern variable `{b}`")));
                    }
                    bs.push(b);
                }
                Ok((tag, bs))
            }
            Tok::Ident(_) => {
                let x = self.ident()?;
                self.expect_sym("::")?;
                let sp = self.span();
                let xs = binder(self)?;
                if xs == x {
                    return Err(self.syntax_at(sp, format!("duplicate pattern variable `{x}`")));
                }
                Ok((CONS.into(), vec![x, xs]))
            }
            _ => self.error("expected a constructor pattern"),
        }
    }

    fn prim(&mut self, op: &str, a: Term, b: Term, start: usize) -> Term {
        let f = self.node(Kind::Var(op.into()), start);
        let fa = self.node(Kind::App(Box::new(f), Box::new(a)), start);
        self.node(Kind::App(Box::new(fa), Box::new(b)), start)
    }

    fn cmp(&mut self) -> PResult<Term> {
        let start = self.span().start;
        let a = self.cons()?;
        let op = match self.peek() {
            Tok::Sym(">=") => "#ge",
            Tok::Sym(">") => "#gt",
            _ => return Ok(a),
        };
        self.bump();
        let b = self.cons()?;
        Ok(self.prim(op, a, b, start))
    }

    fn cons(&mut self) -> PResult<Term> {
        let start = self.span().start;
        let a = self.add()?;
        if self.at_sym("::") {
            self.bump();
            let b = self.cons()?;
            return Ok(self.node(Kind::Ctor(CONS.into(), vec![a, b]), start));
        }
        Ok(a)
    }

    fn add(&mut self) -> PResult<Term> {
        let start = self.span().start;
        let mut a = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => "#add",
                Tok::Sym("-") => "#sub",
                _ => return Ok(a),
            };
            self.bump();
            let b = self.mul()?;
            a = self.prim(op, a, b, start);
        }
    }

    fn mul(&mut self) -> PResult<Term> {
        let start = self.span().start;
        let mut a = self.app()?;
        while self.at_sym("*") {
            self.bump();
            let b = self.app()?;
            a = self.prim("#mul", a, b, start);
        }
        Ok(a)
    }

    fn starts_atom(&self) -> bool {
        matches!(self.peek(), Tok::Ident(_) | Tok::Upper(_) | Tok::Int(_) | Tok::Sym("(") | Tok::Sym("["))
    }

    fn app(&mut self) -> PResult<Term> {
        let start = self.span().start;
        if let Tok::Upper(tag) = self.peek().clone() {
            self.bump();
            let mut args = Vec::new();
            while self.starts_atom() {
                args.push(self.atom()?);
            }
            return Ok(self.node(Kind::Ctor(tag, args), start));
        }
        let mut f = self.atom()?;
        while self.starts_atom() {
            let a = self.atom()?;
            f = self.node(Kind::App(Box::new(f), Box::new(a)), start);
        }
        Ok(f)
    }

    fn atom(&mut self) -> PResult<Term> {
        let start = self.span().start;
        match self.bump() {
            Tok::Ident(x) => {
                let x = if x == "error" { "#error".to_string() } else { x };
                Ok(self.node(Kind::Var(x), start))
            }
            Tok::Int(v) => Ok(self.node(Kind::Lit(v), start)),
            Tok::Upper(tag) => Ok(self.node(Kind::Ctor(tag, vec![]), start)),
            Tok::Sym("(") => {
                if self.at_sym(")") {
                    self.bump();
                    return Ok(self.node(Kind::Ctor(UNIT.into(), vec![]), start));
                }
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("[") => {
                let mut items = Vec::new();
                if !self.at_sym("]") {
                    items.push(self.expr()?);
                    while self.at_sym(",") {
                        self.bump();
                        items.push(self.expr()?);
                    }
                }
                self.expect_sym("]")?;
                let nil = self.node(Kind::Ctor(NIL.into(), vec![]), start);
                Ok(items
                    .into_iter()
                    .rev()
                    .fold(nil, |acc, x| self.node(Kind::Ctor(CONS.into(), vec![x, acc]), start)))
            }
            _ => {
                self.pos -= 1;
                self.error("expected an expression")
            }
        }
    }
}

fn check_arities<'t>(src: &str, terms: impl Iterator<Item = &'t Term>) -> Result<(), ParseError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut res = Ok(());
    let mut check = |tag: &str, n: usize, span: Option<Span>| {
        if res.is_err() {
            return;
        }
        let expected = builtin_arity(tag).or_else(|| seen.get(tag).copied());
        match expected {
            Some(e) if e != n => {
                let span = span.unwrap_or(Span { start: 0, end: 0 });
                let (line, col) = line_col(src, span.start);
                res = Err(ParseError::Arity { tag: tag.into(), expected: e, found: n, span, line, col });
            }
            Some(_) => {}
            None => {
                seen.insert(tag.to_string(), n);
            }
        }
    };
    for t in terms {
        t.walk(&mut |n| match &n.kind {
            Kind::Ctor(tag, args) => check(tag, args.len(), n.span),
            Kind::Case { arms, .. } => {
                for a in arms {
                    check(&a.tag, a.binders.len(), n.span);
                }
            }
            _ => {}
        });
    }
    res
}

pub fn parse(src: &str) -> Result<Program, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { src, toks, pos: 0, ids: IdGen(0) };
    let prog = p.program()?;
    check_arities(src, prog.defs.iter().map(|d| &d.body).chain(std::iter::once(&prog.main)))?;
    Ok(prog)
}

/// Parses a standalone expression (used for CLI inputs).
pub fn parse_expr(src: &str) -> Result<Term, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { src, toks, pos: 0, ids: IdGen(0) };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error("trailing input after expression");
    }
    check_arities(src, std::iter::once(&e))?;
    Ok(e)
}

/// Parses a whitespace-separated sequence of atomic arguments,
/// e.g. `10 [1, 2] True`. A leading `main` is ignored.
pub fn parse_args(src: &str) -> Result<Vec<Term>, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { src, toks, pos: 0, ids: IdGen(0) };
    if matches!(p.peek(), Tok::Ident(m) if m == "main") {
        p.bump();
    }
    let mut out = Vec::new();
    while *p.peek() != Tok::Eof {
        out.push(p.atom()?);
    }
    Ok(out)
}

/// Names that cannot be used as identifiers.
pub fn is_reserved(name: &str) -> bool {
    KEYWORDS.contains(&name) || name == "error" || name == "main"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_main() {
        let p = parse("let main = fun x -> x").unwrap();
        assert!(p.defs.is_empty());
        match &p.main.kind {
            Kind::Lam { param, body, .. } => {
                assert_eq!(param, "x");
                assert!(body.is_var("x"));
            }
            k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn eof_error() {
        let e = parse("let main = case y of").unwrap_err();
        match e {
            ParseError::Syntax { msg, span, .. } => {
                assert!(msg.contains("end of input"), "{msg}");
                assert_eq!(span.start, "let main = case y of".len());
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn map_def_shape() {
        let p = parse(
            "let rec map f xs = case xs of { [] -> []; x :: xs -> f x :: map f xs }\n\
             let incr x = x + 1\nlet double x = x * 2\nlet main ls = map incr (map double ls)",
        )
        .unwrap();
        let m = &p.defs[0];
        assert!(m.recursive);
        let (ps, body) = peel_lams(&m.body);
        assert_eq!(ps, vec!["f", "xs"]);
        match &body.kind {
            Kind::Case { arms, .. } => assert_eq!(arms.len(), 2),
            k => panic!("{k:?}"),
        }
        assert!(p.is_closed());
        assert!(p.duplicate_id().is_none());
    }

    #[test]
    fn arity_and_duplicates() {
        assert!(matches!(
            parse("let main = case Some 1 of { Some -> 0 }"),
            Err(ParseError::Arity { .. })
        ));
        assert!(matches!(parse("let f = 1 let f = 2 let main = f"), Err(ParseError::Duplicate { .. })));
        assert!(matches!(parse("let main = Cons 1"), Err(ParseError::Arity { .. })));
    }

    #[test]
    fn rejects_wildcards_and_nested() {
        assert!(parse("let main = case 1 of { _ -> 0 }").is_err());
        assert!(parse("let main = case [] of { Cons (Some x) y -> 0 }").is_err());
    }

    #[test]
    fn comments_and_lists() {
        let p = parse("-- hello\nlet main = [1, 2] -- trailing").unwrap();
        assert_eq!(p.main.size(), 5);
    }
}
