//! Core AST and structural utilities.
//!
//! Every node carries a [`NodeId`]; ids are unique within a [`Program`] and
//! minted through an [`IdGen`] so passes can build new nodes without clashes.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::Serialize;

pub type Name = String;
pub type NodeId = u32;

/// Parameter name used by unit lambdas `fun () -> e`; never referenced.
pub const UNIT_PARAM: &str = "()";

pub const CONS: &str = "Cons";
pub const NIL: &str = "Nil";
pub const UNIT: &str = "Unit";
pub const TRUE: &str = "True";
pub const FALSE: &str = "False";

/// Byte range in the source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Records that a case was wrapped by the thunking pass: every arm body is
/// `fun ā -> t` and the case is applied to `ā` (or to `()` when `ā` is empty).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThunkMark {
    pub captured: Vec<Name>,
    pub introduced_by_pass: bool,
}

#[derive(Clone, Debug)]
pub struct Term {
    pub id: NodeId,
    pub span: Option<Span>,
    pub kind: Kind,
}

#[derive(Clone, Debug)]
pub enum Kind {
    Var(Name),
    /// Integer literal; opaque to fusion.
    Lit(i64),
    App(Box<Term>, Box<Term>),
    Ctor(Name, Vec<Term>),
    /// `thunk` is set on lambdas introduced by the thunking pass.
    Lam {
        param: Name,
        body: Box<Term>,
        thunk: bool,
    },
    Case {
        scrut: Box<Term>,
        arms: Vec<Arm>,
        mark: Option<ThunkMark>,
    },
    LetRec(Name, Box<Term>, Box<Term>),
}

#[derive(Clone, Debug)]
pub struct Arm {
    pub tag: Name,
    pub binders: Vec<Name>,
    pub body: Term,
}

#[derive(Clone, Debug)]
pub struct Def {
    pub name: Name,
    pub recursive: bool,
    pub body: Term,
}

#[derive(Clone, Debug)]
pub struct Program {
    pub defs: Vec<Def>,
    pub main: Term,
    /// First id not yet used by any node.
    pub next_id: NodeId,
}

/// Fresh node-id source.
#[derive(Clone, Debug)]
pub struct IdGen(pub NodeId);

impl IdGen {
    pub fn for_program(p: &Program) -> Self {
        IdGen(p.next_id)
    }

    pub fn next(&mut self) -> NodeId {
        let id = self.0;
        self.0 += 1;
        id
    }

    pub fn mk(&mut self, kind: Kind) -> Term {
        Term { id: self.next(), span: None, kind }
    }

    pub fn var(&mut self, n: &str) -> Term {
        self.mk(Kind::Var(n.to_string()))
    }

    pub fn lit(&mut self, v: i64) -> Term {
        self.mk(Kind::Lit(v))
    }

    pub fn app(&mut self, f: Term, a: Term) -> Term {
        self.mk(Kind::App(Box::new(f), Box::new(a)))
    }

    pub fn apps(&mut self, f: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(f, |acc, a| self.app(acc, a))
    }

    pub fn lam(&mut self, param: &str, body: Term) -> Term {
        self.mk(Kind::Lam { param: param.to_string(), body: Box::new(body), thunk: false })
    }

    pub fn ctor(&mut self, tag: &str, args: Vec<Term>) -> Term {
        self.mk(Kind::Ctor(tag.to_string(), args))
    }

    pub fn unit(&mut self) -> Term {
        self.ctor(UNIT, vec![])
    }

    /// `let x = a in b`, encoded as an immediately-applied lambda.
    pub fn let_(&mut self, x: &str, a: Term, b: Term) -> Term {
        let l = self.lam(x, b);
        self.app(l, a)
    }

    pub fn prim2(&mut self, op: &str, a: Term, b: Term) -> Term {
        let f = self.var(op);
        self.apps(f, [a, b])
    }

    /// Deep copy with fresh ids for every node.
    pub fn refresh(&mut self, t: &Term) -> Term {
        let mut t = t.clone();
        t.walk_mut(&mut |n| n.id = self.next());
        t
    }
}

pub fn is_prim(name: &str) -> bool {
    name.starts_with('#')
}

/// Built-in constructor arities.
pub fn builtin_arity(tag: &str) -> Option<usize> {
    match tag {
        CONS => Some(2),
        NIL | UNIT | TRUE | FALSE => Some(0),
        _ => None,
    }
}

impl Term {
    pub fn is_var(&self, n: &str) -> bool {
        matches!(&self.kind, Kind::Var(v) if v == n)
    }

    pub fn as_var(&self) -> Option<&str> {
        match &self.kind {
            Kind::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(&self.kind, Kind::Ctor(t, a) if t == UNIT && a.is_empty())
    }

    /// Splits an application spine into head and arguments.
    pub fn spine(&self) -> (&Term, Vec<&Term>) {
        let mut args = Vec::new();
        let mut cur = self;
        while let Kind::App(f, a) = &cur.kind {
            args.push(&**a);
            cur = f;
        }
        args.reverse();
        (cur, args)
    }

    /// Pre-order visit of every node.
    pub fn walk(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        match &self.kind {
            Kind::Var(_) | Kind::Lit(_) => {}
            Kind::App(a, b) | Kind::LetRec(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            Kind::Ctor(_, args) => args.iter().for_each(|a| a.walk(f)),
            Kind::Lam { body, .. } => body.walk(f),
            Kind::Case { scrut, arms, .. } => {
                scrut.walk(f);
                arms.iter().for_each(|a| a.body.walk(f));
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Term)) {
        f(self);
        match &mut self.kind {
            Kind::Var(_) | Kind::Lit(_) => {}
            Kind::App(a, b) | Kind::LetRec(_, a, b) => {
                a.walk_mut(f);
                b.walk_mut(f);
            }
            Kind::Ctor(_, args) => args.iter_mut().for_each(|a| a.walk_mut(f)),
            Kind::Lam { body, .. } => body.walk_mut(f),
            Kind::Case { scrut, arms, .. } => {
                scrut.walk_mut(f);
                arms.iter_mut().for_each(|a| a.body.walk_mut(f));
            }
        }
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        fv(self, &mut Vec::new(), &mut out);
        out
    }

    /// Occurrences of free variable `x`.
    pub fn count_free(&self, x: &str) -> usize {
        match &self.kind {
            Kind::Var(v) => usize::from(v == x),
            Kind::Lit(_) => 0,
            Kind::App(a, b) => a.count_free(x) + b.count_free(x),
            Kind::Ctor(_, args) => args.iter().map(|a| a.count_free(x)).sum(),
            Kind::Lam { param, body, .. } => {
                if param == x {
                    0
                } else {
                    body.count_free(x)
                }
            }
            Kind::Case { scrut, arms, .. } => {
                scrut.count_free(x)
                    + arms
                        .iter()
                        .filter(|a| !a.binders.iter().any(|b| b == x))
                        .map(|a| a.body.count_free(x))
                        .sum::<usize>()
            }
            Kind::LetRec(n, a, b) => {
                if n == x {
                    0
                } else {
                    a.count_free(x) + b.count_free(x)
                }
            }
        }
    }
}

fn fv(t: &Term, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match &t.kind {
        Kind::Var(v) => {
            if !bound.iter().any(|b| b == v) && !is_prim(v) {
                out.insert(v.clone());
            }
        }
        Kind::Lit(_) => {}
        Kind::App(a, b) => {
            fv(a, bound, out);
            fv(b, bound, out);
        }
        Kind::Ctor(_, args) => args.iter().for_each(|a| fv(a, bound, out)),
        Kind::Lam { param, body, .. } => {
            bound.push(param.clone());
            fv(body, bound, out);
            bound.pop();
        }
        Kind::Case { scrut, arms, .. } => {
            fv(scrut, bound, out);
            for arm in arms {
                let n = bound.len();
                bound.extend(arm.binders.iter().cloned());
                fv(&arm.body, bound, out);
                bound.truncate(n);
            }
        }
        Kind::LetRec(n, a, b) => {
            bound.push(n.clone());
            fv(a, bound, out);
            fv(b, bound, out);
            bound.pop();
        }
    }
}

/// Structural equality modulo consistent renaming of bound variables.
pub fn alpha_eq(a: &Term, b: &Term) -> bool {
    alpha_eq_in(a, b, &mut Vec::new())
}

/// `env` pairs bound names of `a` with those of `b`; innermost last.
fn alpha_eq_in(a: &Term, b: &Term, env: &mut Vec<(Name, Name)>) -> bool {
    match (&a.kind, &b.kind) {
        (Kind::Var(x), Kind::Var(y)) => {
            let lx = env.iter().rposition(|(l, _)| l == x);
            let ly = env.iter().rposition(|(_, r)| r == y);
            match (lx, ly) {
                (Some(i), Some(j)) => i == j,
                (None, None) => x == y,
                _ => false,
            }
        }
        (Kind::Lit(x), Kind::Lit(y)) => x == y,
        (Kind::App(f1, a1), Kind::App(f2, a2)) => {
            alpha_eq_in(f1, f2, env) && alpha_eq_in(a1, a2, env)
        }
        (Kind::Ctor(t1, a1), Kind::Ctor(t2, a2)) => {
            t1 == t2
                && a1.len() == a2.len()
                && a1.iter().zip(a2).all(|(x, y)| alpha_eq_in(x, y, env))
        }
        (Kind::Lam { param: p1, body: b1, .. }, Kind::Lam { param: p2, body: b2, .. }) => {
            env.push((p1.clone(), p2.clone()));
            let r = alpha_eq_in(b1, b2, env);
            env.pop();
            r
        }
        (
            Kind::Case { scrut: s1, arms: r1, .. },
            Kind::Case { scrut: s2, arms: r2, .. },
        ) => {
            if !alpha_eq_in(s1, s2, env) || r1.len() != r2.len() {
                return false;
            }
            // arms compared by tag, order-insensitive
            r1.iter().all(|x| {
                r2.iter().find(|y| y.tag == x.tag).is_some_and(|y| {
                    if x.binders.len() != y.binders.len() {
                        return false;
                    }
                    let n = env.len();
                    env.extend(x.binders.iter().cloned().zip(y.binders.iter().cloned()));
                    let r = alpha_eq_in(&x.body, &y.body, env);
                    env.truncate(n);
                    r
                })
            })
        }
        (Kind::LetRec(n1, a1, b1), Kind::LetRec(n2, a2, b2)) => {
            env.push((n1.clone(), n2.clone()));
            let r = alpha_eq_in(a1, a2, env) && alpha_eq_in(b1, b2, env);
            env.pop();
            r
        }
        _ => false,
    }
}

impl Program {
    pub fn top_names(&self) -> HashSet<Name> {
        self.defs.iter().map(|d| d.name.clone()).collect()
    }

    pub fn def(&self, name: &str) -> Option<&Def> {
        self.defs.iter().find(|d| d.name == name)
    }

    /// Free variables not bound at top level.
    pub fn free_vars(&self) -> BTreeSet<Name> {
        let tops = self.top_names();
        let mut out = self.main.free_vars();
        for d in &self.defs {
            out.extend(d.body.free_vars());
        }
        out.retain(|v| !tops.contains(v));
        out
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    pub fn size(&self) -> usize {
        self.defs.iter().map(|d| d.body.size()).sum::<usize>() + self.main.size()
    }

    /// Desugars to nested `LetRec` around main (top-level names scope over
    /// everything that follows).
    pub fn to_term(&self) -> Term {
        let mut g = IdGen::for_program(self);
        self.defs.iter().rev().fold(self.main.clone(), |acc, d| {
            g.mk(Kind::LetRec(d.name.clone(), Box::new(d.body.clone()), Box::new(acc)))
        })
    }

    /// Reports the first duplicated node id, if any.
    pub fn duplicate_id(&self) -> Option<NodeId> {
        let mut seen = HashSet::new();
        let mut dup = None;
        let mut visit = |t: &Term| {
            if dup.is_none() && !seen.insert(t.id) {
                dup = Some(t.id);
            }
        };
        for d in &self.defs {
            d.body.walk(&mut visit);
        }
        self.main.walk(&mut visit);
        dup.or_else(|| seen.iter().find(|&&i| i >= self.next_id).copied())
    }

    /// Reassigns ids densely in traversal order.
    pub fn renumber(&mut self) {
        let mut g = IdGen(0);
        for d in &mut self.defs {
            d.body.walk_mut(&mut |t| t.id = g.next());
        }
        self.main.walk_mut(&mut |t| t.id = g.next());
        self.next_id = g.0;
    }

    /// Map from node id to a reference to the node.
    pub fn index(&self) -> HashMap<NodeId, &Term> {
        fn go<'t>(t: &'t Term, m: &mut HashMap<NodeId, &'t Term>) {
            m.insert(t.id, t);
            match &t.kind {
                Kind::Var(_) | Kind::Lit(_) => {}
                Kind::App(a, b) | Kind::LetRec(_, a, b) => {
                    go(a, m);
                    go(b, m);
                }
                Kind::Ctor(_, args) => args.iter().for_each(|a| go(a, m)),
                Kind::Lam { body, .. } => go(body, m),
                Kind::Case { scrut, arms, .. } => {
                    go(scrut, m);
                    arms.iter().for_each(|a| go(&a.body, m));
                }
            }
        }
        let mut m = HashMap::new();
        for d in &self.defs {
            go(&d.body, &mut m);
        }
        go(&self.main, &mut m);
        m
    }
}

/// Program equality modulo α-renaming of bound *and* top-level names
/// (definitions are paired positionally).
pub fn program_alpha_eq(a: &Program, b: &Program) -> bool {
    if a.defs.len() != b.defs.len() {
        return false;
    }
    let mut env: Vec<(Name, Name)> =
        a.defs.iter().zip(&b.defs).map(|(x, y)| (x.name.clone(), y.name.clone())).collect();
    a.defs.iter().zip(&b.defs).all(|(x, y)| alpha_eq_in(&x.body, &y.body, &mut env))
        && alpha_eq_in(&a.main, &b.main, &mut env)
}

/// Peels leading lambdas: `fun a b -> e` gives (["a","b"], e).
pub fn peel_lams(t: &Term) -> (Vec<&str>, &Term) {
    let mut ps = Vec::new();
    let mut cur = t;
    while let Kind::Lam { param, body, .. } = &cur.kind {
        ps.push(param.as_str());
        cur = body;
    }
    (ps, cur)
}

/// Picks a name based on `base` not in `avoid`.
pub fn fresh_name(base: &str, avoid: &impl Fn(&str) -> bool) -> Name {
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit());
    let stem = if stem.is_empty() { "v" } else { stem };
    (1..)
        .map(|i| format!("{stem}{i}"))
        .find(|n| !avoid(n))
        .expect("infinite supply")
}

/// Capture-avoiding substitution `t[x := v]`; every inserted copy of `v`
/// gets fresh ids.
pub fn subst(t: &Term, x: &str, v: &Term, g: &mut IdGen) -> Term {
    let fv_v = v.free_vars();
    subst_in(t, x, v, &fv_v, g)
}

fn subst_in(t: &Term, x: &str, v: &Term, fv_v: &BTreeSet<Name>, g: &mut IdGen) -> Term {
    if t.count_free(x) == 0 {
        return t.clone();
    }
    let kind = match &t.kind {
        Kind::Var(y) if y == x => return g.refresh(v),
        Kind::Var(_) | Kind::Lit(_) => return t.clone(),
        Kind::App(a, b) => Kind::App(
            Box::new(subst_in(a, x, v, fv_v, g)),
            Box::new(subst_in(b, x, v, fv_v, g)),
        ),
        Kind::Ctor(tag, args) => {
            Kind::Ctor(tag.clone(), args.iter().map(|a| subst_in(a, x, v, fv_v, g)).collect())
        }
        Kind::Lam { param, body, thunk } => {
            let (param, body) = avoid_capture(param, body, x, fv_v, g);
            Kind::Lam { param, body: Box::new(subst_in(&body, x, v, fv_v, g)), thunk: *thunk }
        }
        Kind::Case { scrut, arms, mark } => {
            let scrut = Box::new(subst_in(scrut, x, v, fv_v, g));
            let arms = arms
                .iter()
                .map(|arm| {
                    if arm.binders.iter().any(|b| b == x) {
                        return arm.clone();
                    }
                    let mut binders = arm.binders.clone();
                    let mut body = arm.body.clone();
                    for b in binders.iter_mut() {
                        if fv_v.contains(b) {
                            let avoid = |n: &str| {
                                n == x || fv_v.contains(n) || body.count_free(n) > 0
                                    || arm.binders.iter().any(|o| o == n)
                            };
                            let nb = fresh_name(b, &avoid);
                            body = rename_free(&body, b, &nb);
                            *b = nb;
                        }
                    }
                    Arm { tag: arm.tag.clone(), binders, body: subst_in(&body, x, v, fv_v, g) }
                })
                .collect();
            Kind::Case { scrut, arms, mark: mark.clone() }
        }
        Kind::LetRec(n, a, b) => {
            let (n2, a2) = avoid_capture(n, a, x, fv_v, g);
            let b2 = if &n2 != n { rename_free(b, n, &n2) } else { (**b).clone() };
            Kind::LetRec(
                n2,
                Box::new(subst_in(&a2, x, v, fv_v, g)),
                Box::new(subst_in(&b2, x, v, fv_v, g)),
            )
        }
    };
    Term { id: t.id, span: t.span, kind }
}

fn avoid_capture(
    param: &str,
    body: &Term,
    x: &str,
    fv_v: &BTreeSet<Name>,
    _g: &mut IdGen,
) -> (Name, Term) {
    if !fv_v.contains(param) {
        return (param.to_string(), body.clone());
    }
    let avoid = |n: &str| n == x || fv_v.contains(n) || body.count_free(n) > 0;
    let np = fresh_name(param, &avoid);
    let body = rename_free(body, param, &np);
    (np, body)
}

/// Renames free occurrences of `from` to `to`; `to` must not be captured
/// (callers pick it fresh).
pub fn rename_free(t: &Term, from: &str, to: &str) -> Term {
    let mut g = IdGen(0);
    let v = Term { id: 0, span: None, kind: Kind::Var(to.to_string()) };
    let mut out = subst(t, from, &v, &mut g);
    // keep the original ids of renamed occurrences stable is unnecessary;
    // only the inserted vars carry placeholder ids, fix them up from `t`
    fix_ids(&mut out, t);
    out
}

/// Copies ids from `orig` onto `t` where the shapes line up, so renaming
/// never disturbs node identity.
fn fix_ids(t: &mut Term, orig: &Term) {
    t.id = orig.id;
    match (&mut t.kind, &orig.kind) {
        (Kind::App(a, b), Kind::App(c, d)) | (Kind::LetRec(_, a, b), Kind::LetRec(_, c, d)) => {
            fix_ids(a, c);
            fix_ids(b, d);
        }
        (Kind::Ctor(_, xs), Kind::Ctor(_, ys)) => {
            xs.iter_mut().zip(ys).for_each(|(x, y)| fix_ids(x, y));
        }
        (Kind::Lam { body: a, .. }, Kind::Lam { body: b, .. }) => fix_ids(a, b),
        (Kind::Case { scrut: a, arms: xs, .. }, Kind::Case { scrut: b, arms: ys, .. }) => {
            fix_ids(a, b);
            xs.iter_mut().zip(ys).for_each(|(x, y)| fix_ids(&mut x.body, &y.body));
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> IdGen {
        IdGen(0)
    }

    #[test]
    fn free_vars_basic() {
        let mut g = g();
        let body = {
            let f = g.var("f");
            let x = g.var("x");
            g.app(f, x)
        };
        let t = g.lam("x", body);
        assert_eq!(t.free_vars().into_iter().collect::<Vec<_>>(), vec!["f".to_string()]);

        let a = g.var("g");
        let b = g.var("g");
        let lr = g.mk(Kind::LetRec("g".into(), Box::new(a), Box::new(b)));
        assert!(lr.free_vars().is_empty());
    }

    #[test]
    fn alpha_basic() {
        let mut g = g();
        let x = g.var("x");
        let id1 = g.lam("x", x);
        let y = g.var("y");
        let id2 = g.lam("y", y);
        assert!(alpha_eq(&id1, &id2));
        let f = g.var("f");
        let x = g.var("x");
        let fx = g.app(f, x);
        let k = g.lam("x", fx);
        assert!(!alpha_eq(&id1, &k));
    }

    #[test]
    fn alpha_respects_shadowing() {
        let mut g = g();
        // fun x -> fun y -> x   vs   fun x -> fun x -> x
        let x = g.var("x");
        let inner = g.lam("y", x);
        let a = g.lam("x", inner);
        let x = g.var("x");
        let inner = g.lam("x", x);
        let b = g.lam("x", inner);
        assert!(!alpha_eq(&a, &b));
    }

    #[test]
    fn subst_avoids_capture() {
        let mut g = g();
        // (fun y -> x y)[x := y]  ==  fun y1 -> y y1
        let x = g.var("x");
        let y = g.var("y");
        let body = g.app(x, y);
        let t = g.lam("y", body);
        let v = g.var("y");
        let r = subst(&t, "x", &v, &mut g);
        let y = g.var("y");
        let z = g.var("z");
        let body = g.app(y, z);
        let expect = g.lam("z", body);
        assert!(alpha_eq(&r, &expect));
        assert_eq!(r.free_vars().into_iter().collect::<Vec<_>>(), vec!["y".to_string()]);
    }

    #[test]
    fn fresh_name_skips_taken() {
        let taken = ["x1", "x2"];
        assert_eq!(fresh_name("x", &|n| taken.contains(&n)), "x3");
    }
}
