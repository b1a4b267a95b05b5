//! Cleanup after fusion.
//!
//! Fusion leaves arm bodies behind thunk lambdas (`fun ā -> …`) that are now
//! built at constructor sites. This module floats those lambdas outwards,
//! inlines the wrapper consumers that fusion reduced to `p ā`, β-reduces the
//! resulting lets, and finally drops `()` parameters that are always supplied.
//! Only lambdas introduced by thunking are ever floated or stripped.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::Serialize;

use crate::infer::{infer, NegType, PosType, TypeVar};
use crate::solver::solve;
use crate::syntax::*;

pub const FIXPOINT_BOUND: usize = 50;

/// Stage toggles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimplifyOptions {
    pub float: bool,
    pub inline: bool,
}

impl Default for SimplifyOptions {
    fn default() -> Self {
        SimplifyOptions { float: true, inline: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CardInfo {
    /// Lambdas whose every closure is applied at most once.
    pub one_shot: BTreeSet<NodeId>,
}

// ---------------------------------------------------------------------------
// a read-only view with parent links

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pos {
    AppFun,
    AppArg,
    CtorArg,
    LamBody,
    CaseScrut,
    CaseArm,
    LetRecDef,
    LetRecBody,
}

struct View<'a> {
    nodes: HashMap<NodeId, &'a Term>,
    parent: HashMap<NodeId, (NodeId, Pos)>,
    /// lambda id → (definition, position in its parameter chain)
    chain: HashMap<NodeId, (Name, usize)>,
    /// definition → parameter names and the body under them
    defs: HashMap<Name, (Vec<Name>, &'a Term)>,
    /// occurrences of top-level names (not shadowed)
    top_occ: HashMap<Name, Vec<NodeId>>,
    /// root node → its definition (`None` for main)
    roots: HashMap<NodeId, Option<Name>>,
    main_params: usize,
}

impl<'a> View<'a> {
    fn new(p: &'a Program) -> Self {
        let tops = p.top_names();
        let mut v = View {
            nodes: HashMap::new(),
            parent: HashMap::new(),
            chain: HashMap::new(),
            defs: HashMap::new(),
            top_occ: HashMap::new(),
            roots: HashMap::new(),
            main_params: 0,
        };
        for d in &p.defs {
            v.roots.insert(d.body.id, Some(d.name.clone()));
            v.build(&d.body, &tops, &mut Vec::new());
            let mut cur = &d.body;
            let mut params = Vec::new();
            while let Kind::Lam { param, body, .. } = &cur.kind {
                v.chain.insert(cur.id, (d.name.clone(), params.len()));
                params.push(param.clone());
                cur = body;
            }
            v.defs.insert(d.name.clone(), (params, cur));
        }
        v.build(&p.main, &tops, &mut Vec::new());
        v.roots.insert(p.main.id, None);
        // main is applied exactly once, by the caller of the program
        let mut cur = &p.main;
        while let Kind::Lam { body, .. } = &cur.kind {
            v.chain.insert(cur.id, ("main".into(), v.main_params));
            v.main_params += 1;
            cur = body;
        }
        v
    }

    fn build(&mut self, t: &'a Term, tops: &HashSet<Name>, bound: &mut Vec<Name>) {
        self.nodes.insert(t.id, t);
        let link = |me: &mut Self, c: &'a Term, pos| {
            me.parent.insert(c.id, (t.id, pos));
        };
        match &t.kind {
            Kind::Var(x) => {
                if tops.contains(x) && !bound.contains(x) {
                    self.top_occ.entry(x.clone()).or_default().push(t.id);
                }
            }
            Kind::Lit(_) => {}
            Kind::App(f, a) => {
                link(self, f, Pos::AppFun);
                link(self, a, Pos::AppArg);
                self.build(f, tops, bound);
                self.build(a, tops, bound);
            }
            Kind::Ctor(_, args) => {
                for a in args {
                    link(self, a, Pos::CtorArg);
                    self.build(a, tops, bound);
                }
            }
            Kind::Lam { param, body, .. } => {
                link(self, body, Pos::LamBody);
                bound.push(param.clone());
                self.build(body, tops, bound);
                bound.pop();
            }
            Kind::Case { scrut, arms, .. } => {
                link(self, scrut, Pos::CaseScrut);
                self.build(scrut, tops, bound);
                for arm in arms {
                    link(self, &arm.body, Pos::CaseArm);
                    let n = bound.len();
                    bound.extend(arm.binders.iter().cloned());
                    self.build(&arm.body, tops, bound);
                    bound.truncate(n);
                }
            }
            Kind::LetRec(n, a, b) => {
                link(self, a, Pos::LetRecDef);
                link(self, b, Pos::LetRecBody);
                bound.push(n.clone());
                self.build(a, tops, bound);
                self.build(b, tops, bound);
                bound.pop();
            }
        }
    }

    fn is_let_lambda(&self, id: NodeId) -> bool {
        matches!(self.nodes[&id].kind, Kind::Lam { .. }) && matches!(self.parent.get(&id), Some((_, Pos::AppFun)))
    }

    /// Climbs through positions that pass a value on unchanged: case arms,
    /// let bodies and letrec bodies.
    fn climb(&self, mut id: NodeId) -> NodeId {
        loop {
            match self.parent.get(&id) {
                Some((p, Pos::CaseArm | Pos::LetRecBody)) => id = *p,
                Some((p, Pos::LamBody)) if self.is_let_lambda(*p) => id = self.parent[p].0,
                _ => return id,
            }
        }
    }

    /// The application node that supplies argument `depth` to an occurrence
    /// of a top-level name.
    fn call_at(&self, occ: NodeId, depth: usize) -> Option<NodeId> {
        let mut cur = occ;
        for _ in 0..=depth {
            match self.parent.get(&cur) {
                Some((p, Pos::AppFun)) => cur = *p,
                _ => return None,
            }
        }
        Some(cur)
    }

    /// For an argument node, the known definition it is passed to (saturated)
    /// and the parameter index.
    fn known_param(&self, arg: NodeId) -> Option<(Name, usize)> {
        let (app, _) = self.parent.get(&arg).filter(|(_, pos)| *pos == Pos::AppArg)?;
        let Kind::App(f, _) = &self.nodes[app].kind else { return None };
        let (head, args) = f.spine();
        let g = head.as_var()?;
        if is_prim(g) || !self.top_occ.get(g).is_some_and(|o| o.contains(&head.id)) {
            return None;
        }
        let k = args.len();
        let (params, _) = self.defs.get(g)?;
        // the call must reach the body
        self.call_at(head.id, params.len().checked_sub(1)?)?;
        (k < params.len()).then(|| (g.to_string(), k))
    }

    /// Free occurrences of `x` in `t`, each with the non-let lambdas crossed
    /// and whether it is evaluated whenever `t` is.
    fn occurrences(&self, t: &Term, x: &str) -> Vec<(NodeId, Vec<NodeId>, bool)> {
        let mut out = Vec::new();
        self.occ_go(t, x, &mut Vec::new(), true, &mut out);
        out
    }

    fn occ_go(&self, t: &Term, x: &str, lams: &mut Vec<NodeId>, strict: bool, out: &mut Vec<(NodeId, Vec<NodeId>, bool)>) {
        match &t.kind {
            Kind::Var(v) => {
                if v == x {
                    out.push((t.id, lams.clone(), strict));
                }
            }
            Kind::Lit(_) => {}
            Kind::App(f, a) => {
                self.occ_go(f, x, lams, strict, out);
                self.occ_go(a, x, lams, strict, out);
            }
            Kind::Ctor(_, args) => args.iter().for_each(|a| self.occ_go(a, x, lams, strict, out)),
            Kind::Lam { param, body, .. } => {
                if param == x {
                    return;
                }
                if self.is_let_lambda(t.id) {
                    self.occ_go(body, x, lams, strict, out);
                } else {
                    lams.push(t.id);
                    self.occ_go(body, x, lams, false, out);
                    lams.pop();
                }
            }
            Kind::Case { scrut, arms, .. } => {
                self.occ_go(scrut, x, lams, strict, out);
                for a in arms {
                    if !a.binders.iter().any(|b| b == x) {
                        self.occ_go(&a.body, x, lams, false, out);
                    }
                }
            }
            Kind::LetRec(n, a, b) => {
                if n == x {
                    return;
                }
                self.occ_go(a, x, lams, false, out);
                self.occ_go(b, x, lams, strict, out);
            }
        }
    }

    /// The scope in which the value of node `n` gets bound, if `n` is passed
    /// to a let or a known function: (body, parameter).
    fn binding_of(&self, n: NodeId) -> Option<(&'a Term, Name)> {
        let (app, pos) = self.parent.get(&n)?;
        if *pos != Pos::AppArg {
            return None;
        }
        let Kind::App(f, _) = &self.nodes[app].kind else { return None };
        if let Kind::Lam { param, body, .. } = &f.kind {
            return Some((&**body, param.clone()));
        }
        let (g, k) = self.known_param(n)?;
        let (params, body) = &self.defs[&g];
        // a later parameter with the same name shadows this one
        if params[k + 1..].contains(&params[k]) {
            return None;
        }
        Some((*body, params[k].clone()))
    }
}

// ---------------------------------------------------------------------------
// cardinality

/// Longest argument chain followed before giving up.
const MAX_PENDING: usize = 32;

struct Card<'v, 'a> {
    v: &'v View<'a>,
    assumed: &'v BTreeSet<NodeId>,
    visiting: HashSet<(NodeId, usize)>,
}

impl Card<'_, '_> {
    /// Is every value of node `e`, once given `r - 1` further arguments,
    /// applied at most once more?
    fn at_most_once(&mut self, e: NodeId, r: usize) -> bool {
        if r > MAX_PENDING {
            return false;
        }
        if !self.visiting.insert((e, r)) {
            return true;
        }
        let n = self.v.climb(e);
        let ok = match self.v.parent.get(&n) {
            None => match self.v.roots.get(&n) {
                Some(Some(g)) => {
                    let occs = self.v.top_occ.get(g).cloned().unwrap_or_default();
                    occs.iter().all(|o| self.at_most_once(*o, r))
                }
                // main runs once
                Some(None) => true,
                None => false,
            },
            Some((app, Pos::AppFun)) => r == 1 || self.at_most_once(*app, r - 1),
            Some((_, Pos::AppArg)) => match self.v.binding_of(n) {
                Some((body, x)) => {
                    let occs = self.v.occurrences(body, &x);
                    uses_per_path(body, &x) <= 1
                        && occs
                            .iter()
                            .all(|(o, lams, _)| lams.iter().all(|l| self.assumed.contains(l)) && self.at_most_once(*o, r))
                }
                None => false,
            },
            Some((m, Pos::LamBody)) => self.at_most_once(*m, r + 1),
            _ => false,
        };
        self.visiting.remove(&(e, r));
        ok
    }
}

pub fn analyze_cardinality(p: &Program) -> CardInfo {
    let v = View::new(p);
    let mut set: BTreeSet<NodeId> =
        v.nodes.values().filter(|t| matches!(t.kind, Kind::Lam { .. })).map(|t| t.id).collect();
    for _ in 0..FIXPOINT_BOUND * 4 {
        let before = set.len();
        let current = set.clone();
        set.retain(|l| Card { v: &v, assumed: &current, visiting: HashSet::new() }.at_most_once(*l, 1));
        if set.len() == before {
            break;
        }
    }
    CardInfo { one_shot: set }
}

/// Is every value of node `e`, once given `r - 1` further arguments, applied
/// once more on every path of a finishing run? Cycles are accepted: a value
/// passed around forever belongs to a run that does not finish.
fn applied_at_least_once(v: &View, e: NodeId, r: usize, visiting: &mut HashSet<(NodeId, usize)>) -> bool {
    if r > MAX_PENDING {
        return false;
    }
    if !visiting.insert((e, r)) {
        return true;
    }
    let n = v.climb(e);
    let ok = match v.parent.get(&n) {
        None => match v.roots.get(&n) {
            Some(Some(g)) => {
                let occs = v.top_occ.get(g).cloned().unwrap_or_default();
                occs.iter().all(|o| applied_at_least_once(v, *o, r, visiting))
            }
            // the caller of the program supplies main's parameters
            Some(None) => r <= v.main_params,
            None => false,
        },
        Some((app, Pos::AppFun)) => r == 1 || applied_at_least_once(v, *app, r - 1, visiting),
        Some((_, Pos::AppArg)) => match v.binding_of(n) {
            Some((body, x)) => must_apply(v, body, &x, r, visiting),
            None => false,
        },
        Some((m, Pos::LamBody)) => applied_at_least_once(v, *m, r + 1, visiting),
        _ => false,
    };
    visiting.remove(&(e, r));
    ok
}

/// Does every finishing evaluation of `t` apply the value bound to `x`
/// (after `r - 1` further arguments)?
fn must_apply(v: &View, t: &Term, x: &str, r: usize, visiting: &mut HashSet<(NodeId, usize)>) -> bool {
    match &t.kind {
        Kind::Var(y) => y == x && applied_at_least_once(v, t.id, r, visiting),
        Kind::Lit(_) => false,
        Kind::App(f, a) => must_apply(v, f, x, r, visiting) || must_apply(v, a, x, r, visiting),
        Kind::Ctor(_, args) => args.iter().any(|a| must_apply(v, a, x, r, visiting)),
        Kind::Lam { param, body, .. } => {
            param != x
                && (v.is_let_lambda(t.id) || applied_at_least_once(v, t.id, 1, visiting))
                && must_apply(v, body, x, r, visiting)
        }
        Kind::Case { scrut, arms, .. } => {
            must_apply(v, scrut, x, r, visiting)
                || (!arms.is_empty()
                    && arms
                        .iter()
                        .all(|a| !a.binders.iter().any(|b| b == x) && must_apply(v, &a.body, x, r, visiting)))
        }
        Kind::LetRec(n, _, b) => n != x && must_apply(v, b, x, r, visiting),
    }
}

/// How many times `x` may be evaluated on one path through `t`: case arms
/// are alternatives, everything else adds up. Lambda bodies count once.
fn uses_per_path(t: &Term, x: &str) -> usize {
    match &t.kind {
        Kind::Var(v) => usize::from(v == x),
        Kind::Lit(_) => 0,
        Kind::App(f, a) => uses_per_path(f, x) + uses_per_path(a, x),
        Kind::Ctor(_, args) => args.iter().map(|a| uses_per_path(a, x)).sum(),
        Kind::Lam { param, body, .. } => {
            if param == x {
                0
            } else {
                uses_per_path(body, x)
            }
        }
        Kind::Case { scrut, arms, .. } => {
            uses_per_path(scrut, x)
                + arms
                    .iter()
                    .filter(|a| !a.binders.iter().any(|b| b == x))
                    .map(|a| uses_per_path(&a.body, x))
                    .max()
                    .unwrap_or(0)
        }
        Kind::LetRec(n, a, b) => {
            if n == x {
                0
            } else {
                uses_per_path(a, x) + uses_per_path(b, x)
            }
        }
    }
}

fn cheap(t: &Term) -> bool {
    match &t.kind {
        Kind::Var(_) | Kind::Lit(_) | Kind::Lam { .. } => true,
        Kind::Ctor(_, args) => args.iter().all(|a| matches!(a.kind, Kind::Var(_) | Kind::Lit(_)) || a.is_unit()),
        _ => false,
    }
}

fn atom(t: &Term) -> bool {
    matches!(t.kind, Kind::Var(_) | Kind::Lit(_)) || t.is_unit()
}

// ---------------------------------------------------------------------------
// floating

/// One bottom-up pass floating thunk lambdas out of lets and cases.
fn float_pass(t: &Term, info: &CardInfo, changed: &mut bool) -> Term {
    let kind = match &t.kind {
        Kind::Var(_) | Kind::Lit(_) => return t.clone(),
        Kind::App(f, a) => Kind::App(Box::new(float_pass(f, info, changed)), Box::new(float_pass(a, info, changed))),
        Kind::Ctor(tag, args) => Kind::Ctor(tag.clone(), args.iter().map(|a| float_pass(a, info, changed)).collect()),
        Kind::Lam { param, body, thunk } => {
            Kind::Lam { param: param.clone(), body: Box::new(float_pass(body, info, changed)), thunk: *thunk }
        }
        Kind::LetRec(n, a, b) => {
            Kind::LetRec(n.clone(), Box::new(float_pass(a, info, changed)), Box::new(float_pass(b, info, changed)))
        }
        Kind::Case { scrut, arms, mark } => Kind::Case {
            scrut: Box::new(float_pass(scrut, info, changed)),
            arms: arms
                .iter()
                .map(|a| Arm { tag: a.tag.clone(), binders: a.binders.clone(), body: float_pass(&a.body, info, changed) })
                .collect(),
            mark: mark.clone(),
        },
    };
    let t = Term { id: t.id, span: t.span, kind };
    if let Some(r) = float_let(&t, info).or_else(|| float_case(&t, info)) {
        *changed = true;
        return r;
    }
    t
}

/// `let x = e in fun a -> b` ⇒ `fun a -> let x = e in b`
fn float_let(t: &Term, info: &CardInfo) -> Option<Term> {
    let Kind::App(f, e) = &t.kind else { return None };
    let Kind::Lam { param: x, body: inner, thunk: let_thunk } = &f.kind else { return None };
    let Kind::Lam { param: a, body: b, thunk: true } = &inner.kind else { return None };
    if !(cheap(e) || info.one_shot.contains(&inner.id)) {
        return None;
    }
    let fv_e = e.free_vars();
    let (a, b) = if a == x || fv_e.contains(a) {
        let n = fresh_name(a, &|c: &str| c == x || fv_e.contains(c) || b.count_free(c) > 0 || crate::parse::is_reserved(c));
        (n.clone(), rename_free(b, a, &n))
    } else {
        (a.clone(), (**b).clone())
    };
    let new_let = Term {
        id: t.id,
        span: t.span,
        kind: Kind::App(
            Box::new(Term { id: f.id, span: f.span, kind: Kind::Lam { param: x.clone(), body: Box::new(b), thunk: *let_thunk } }),
            e.clone(),
        ),
    };
    Some(Term { id: inner.id, span: inner.span, kind: Kind::Lam { param: a, body: Box::new(new_let), thunk: true } })
}

/// `case s of { cᵢ x̄ᵢ -> fun a -> bᵢ }` ⇒ `fun a -> case s of { cᵢ x̄ᵢ -> bᵢ }`
fn float_case(t: &Term, info: &CardInfo) -> Option<Term> {
    let Kind::Case { scrut, arms, mark } = &t.kind else { return None };
    let mut lams = Vec::new();
    for arm in arms {
        match &arm.body.kind {
            Kind::Lam { param, body, thunk: true } => lams.push((arm.body.id, param, body)),
            _ => return None,
        }
    }
    let (first_id, first_param, _) = lams.first()?;
    let unit = *first_param == UNIT_PARAM;
    if lams.iter().any(|(_, p, _)| (*p == UNIT_PARAM) != unit) {
        return None;
    }
    if !(cheap(scrut) || lams.iter().all(|(id, _, _)| info.one_shot.contains(id))) {
        return None;
    }
    let fv_s = scrut.free_vars();
    let clashes = |c: &str| {
        fv_s.contains(c)
            || arms.iter().any(|a| a.binders.iter().any(|b| b == c))
            || lams.iter().any(|(_, p, b)| *p != c && b.count_free(c) > 0)
    };
    let a = if unit || !clashes(first_param) {
        (*first_param).clone()
    } else {
        fresh_name(first_param, &|c: &str| {
            clashes(c) || lams.iter().any(|(_, _, b)| b.count_free(c) > 0) || crate::parse::is_reserved(c)
        })
    };
    let new_arms = arms
        .iter()
        .zip(&lams)
        .map(|(arm, (_, p, body))| {
            let body = if unit || *p == &a { (***body).clone() } else { rename_free(body, p, &a) };
            Arm { tag: arm.tag.clone(), binders: arm.binders.clone(), body }
        })
        .collect();
    let case = Term { id: t.id, span: t.span, kind: Kind::Case { scrut: scrut.clone(), arms: new_arms, mark: mark.clone() } };
    Some(Term { id: *first_id, span: None, kind: Kind::Lam { param: a, body: Box::new(case), thunk: true } })
}

pub fn float_out(p: &Program, info: &CardInfo) -> Program {
    let mut changed = false;
    map_program(p, |t| float_pass(t, info, &mut changed))
}

fn map_program(p: &Program, mut f: impl FnMut(&Term) -> Term) -> Program {
    let defs = p.defs.iter().map(|d| Def { name: d.name.clone(), recursive: d.recursive, body: f(&d.body) }).collect();
    let main = f(&p.main);
    let mut q = Program { defs, main, next_id: p.next_id };
    q.next_id = q.next_id.max(max_id(&q) + 1);
    q
}

fn max_id(p: &Program) -> NodeId {
    let mut m = 0;
    p.defs.iter().for_each(|d| d.body.walk(&mut |t| m = m.max(t.id)));
    p.main.walk(&mut |t| m = m.max(t.id));
    m
}

// ---------------------------------------------------------------------------
// β-reduction and inlining

fn beta_pass(t: &Term, g: &mut IdGen, changed: &mut bool) -> Term {
    let kind = match &t.kind {
        Kind::Var(_) | Kind::Lit(_) => return t.clone(),
        Kind::App(f, a) => Kind::App(Box::new(beta_pass(f, g, changed)), Box::new(beta_pass(a, g, changed))),
        Kind::Ctor(tag, args) => Kind::Ctor(tag.clone(), args.iter().map(|a| beta_pass(a, g, changed)).collect()),
        Kind::Lam { param, body, thunk } => {
            Kind::Lam { param: param.clone(), body: Box::new(beta_pass(body, g, changed)), thunk: *thunk }
        }
        Kind::LetRec(n, a, b) => {
            Kind::LetRec(n.clone(), Box::new(beta_pass(a, g, changed)), Box::new(beta_pass(b, g, changed)))
        }
        Kind::Case { scrut, arms, mark } => Kind::Case {
            scrut: Box::new(beta_pass(scrut, g, changed)),
            arms: arms
                .iter()
                .map(|a| Arm { tag: a.tag.clone(), binders: a.binders.clone(), body: beta_pass(&a.body, g, changed) })
                .collect(),
            mark: mark.clone(),
        },
    };
    let t = Term { id: t.id, span: t.span, kind };
    if let Some(r) = beta(&t, g) {
        *changed = true;
        return r;
    }
    t
}

/// Occurrences of `x` in `t` that sit under a (non-let) lambda.
fn under_lambda(t: &Term, x: &str) -> bool {
    fn go(t: &Term, x: &str, under: bool, in_fun: bool) -> bool {
        match &t.kind {
            Kind::Var(v) => under && v == x,
            Kind::Lit(_) => false,
            Kind::App(f, a) => go(f, x, under, true) || go(a, x, under, false),
            Kind::Ctor(_, args) => args.iter().any(|a| go(a, x, under, false)),
            Kind::Lam { param, body, .. } => param != x && go(body, x, under || !in_fun, false),
            Kind::Case { scrut, arms, .. } => {
                go(scrut, x, under, false)
                    || arms.iter().any(|a| !a.binders.iter().any(|b| b == x) && go(&a.body, x, under, false))
            }
            Kind::LetRec(n, a, b) => n != x && (go(a, x, true, false) || go(b, x, under, false)),
        }
    }
    go(t, x, false, false)
}

fn beta(t: &Term, g: &mut IdGen) -> Option<Term> {
    let Kind::App(f, v) = &t.kind else { return None };
    let Kind::Lam { param: x, body, .. } = &f.kind else { return None };
    if x == UNIT_PARAM {
        return v.is_unit().then(|| (**body).clone());
    }
    let uses = body.count_free(x);
    let ok = atom(v) || (uses == 0 && cheap(v)) || (uses == 1 && !under_lambda(body, x));
    ok.then(|| subst(body, x, v, g))
}

/// A wrapper definition `f p̄ = pᵢ ā` where every parameter occurs once.
fn trivial_body(params: &[Name], body: &Term) -> bool {
    let (head, args) = body.spine();
    let Some(h) = head.as_var() else { return false };
    if !params.iter().any(|p| p == h) || !args.iter().all(|a| atom(a)) {
        return false;
    }
    let distinct: HashSet<&Name> = params.iter().collect();
    distinct.len() == params.len() && params.iter().all(|p| body.count_free(p) == 1)
}

/// Inlines wrapper definitions at every call site, when every call site is
/// saturated and evaluated whenever its enclosing definition body is.
fn inline_trivial(p: &Program) -> Option<Program> {
    let mut p = p.clone();
    p.renumber();
    let p = &p;
    let v = View::new(p);
    for d in &p.defs {
        let (params, body) = &v.defs[&d.name];
        let alias = params.is_empty() && body.as_var().is_some_and(|h| !is_prim(h) && h != d.name);
        if !alias && !trivial_body(params, body) {
            continue;
        }
        let occs = v.top_occ.get(&d.name).cloned().unwrap_or_default();
        if occs.is_empty() {
            continue;
        }
        let saturated = occs.iter().all(|o| params.is_empty() || v.call_at(*o, params.len() - 1).is_some());
        let strict = occs.iter().all(|o| strict_in_def(&v, *o));
        // a def calling itself cannot be inlined away
        let self_ref = d.body.count_free(&d.name) > 0;
        if !saturated || !strict || self_ref {
            continue;
        }
        let params = params.clone();
        let body = (*body).clone();
        let name = d.name.clone();
        let mut g = IdGen::for_program(p);
        let mut q = p.clone();
        q.defs.retain(|x| x.name != name);
        let rewrite = |t: &Term, g: &mut IdGen| replace_calls(t, &name, &params, &body, g);
        q.defs = q.defs.iter().map(|x| Def { name: x.name.clone(), recursive: x.recursive, body: rewrite(&x.body, &mut g) }).collect();
        q.main = rewrite(&q.main, &mut g);
        q.next_id = g.0;
        return Some(q);
    }
    None
}

/// Is this node reached without entering a (non-let) lambda below the
/// parameter chain of its definition?
fn strict_in_def(v: &View, mut id: NodeId) -> bool {
    while let Some((p, pos)) = v.parent.get(&id) {
        if *pos == Pos::LamBody && !v.is_let_lambda(*p) && !v.chain.contains_key(p) {
            return false;
        }
        if *pos == Pos::LetRecDef {
            return false;
        }
        id = *p;
    }
    true
}

fn replace_calls(t: &Term, name: &str, params: &[Name], body: &Term, g: &mut IdGen) -> Term {
    let (head, args) = t.spine();
    if head.is_var(name) && args.len() >= params.len() {
        let mut out = g.refresh(body);
        // substitute all at once via fresh intermediates to avoid clashes
        let args: Vec<Term> = args.iter().map(|a| replace_calls(a, name, params, body, g)).collect();
        let taken: HashSet<Name> = args.iter().flat_map(|a| a.free_vars()).chain(out.free_vars()).collect();
        let mut temps = Vec::new();
        for p in params {
            let tmp = fresh_name(&format!("{p}_"), &|c: &str| taken.contains(c) || temps.contains(&c.to_string()));
            out = rename_free(&out, p, &tmp);
            temps.push(tmp);
        }
        for (tmp, a) in temps.iter().zip(&args) {
            out = subst(&out, tmp, a, g);
        }
        return g.apps(out, args.into_iter().skip(params.len()));
    }
    let kind = match &t.kind {
        Kind::Var(_) | Kind::Lit(_) => return t.clone(),
        Kind::App(f, a) => Kind::App(Box::new(replace_calls(f, name, params, body, g)), Box::new(replace_calls(a, name, params, body, g))),
        Kind::Ctor(tag, args) => Kind::Ctor(tag.clone(), args.iter().map(|a| replace_calls(a, name, params, body, g)).collect()),
        Kind::Lam { param, body: b, thunk } => {
            if param == name {
                return t.clone();
            }
            Kind::Lam { param: param.clone(), body: Box::new(replace_calls(b, name, params, body, g)), thunk: *thunk }
        }
        Kind::LetRec(n, a, b) => {
            if n == name {
                return t.clone();
            }
            Kind::LetRec(n.clone(), Box::new(replace_calls(a, name, params, body, g)), Box::new(replace_calls(b, name, params, body, g)))
        }
        Kind::Case { scrut, arms, mark } => Kind::Case {
            scrut: Box::new(replace_calls(scrut, name, params, body, g)),
            arms: arms
                .iter()
                .map(|a| {
                    let b = if a.binders.iter().any(|x| x == name) {
                        a.body.clone()
                    } else {
                        replace_calls(&a.body, name, params, body, g)
                    };
                    Arm { tag: a.tag.clone(), binders: a.binders.clone(), body: b }
                })
                .collect(),
            mark: mark.clone(),
        },
    };
    Term { id: t.id, span: t.span, kind }
}

// ---------------------------------------------------------------------------
// dropping unit parameters

fn find(parent: &mut HashMap<NodeId, NodeId>, v: NodeId) -> NodeId {
    let p = *parent.get(&v).unwrap_or(&v);
    if p == v {
        return v;
    }
    let r = find(parent, p);
    parent.insert(v, r);
    r
}

/// Removes `fun () ->` from thunk lambdas whose closures are always applied
/// to `()` (and only there), along with those applications.
fn drop_units(p: &Program) -> Option<Program> {
    let mut p = p.clone();
    p.renumber();
    let (_, cs) = infer(&p).ok()?;
    let solved = solve(&cs).ok()?;
    let v = View::new(&p);

    let mut lam_of: HashMap<(TypeVar, TypeVar), NodeId> = HashMap::new();
    let mut app_of: HashMap<(TypeVar, TypeVar), NodeId> = HashMap::new();
    for (id, idxs) in &cs.emitted_at {
        for &i in idxs {
            let c = &cs.constraints[i];
            match (&v.nodes.get(id).map(|t| &t.kind), &c.lhs, &c.rhs) {
                (Some(Kind::Lam { .. }), PosType::Fun(a, b), _) => {
                    lam_of.insert((*a, *b), *id);
                }
                (Some(Kind::App(..)), PosType::Var(_), NegType::Fun(a, b)) => {
                    app_of.insert((*a, *b), *id);
                }
                _ => {}
            }
        }
    }
    let mut parent: HashMap<NodeId, NodeId> = HashMap::new();
    let mut tainted: HashSet<NodeId> = HashSet::new();
    let mut members: HashSet<NodeId> = HashSet::new();
    for c in &solved.checks {
        match (&c.lhs, &c.rhs) {
            (PosType::Fun(a, b), NegType::Fun(c2, d)) => {
                let (Some(l), Some(ap)) = (lam_of.get(&(*a, *b)), app_of.get(&(*c2, *d))) else { continue };
                members.insert(*l);
                members.insert(*ap);
                let (rl, ra) = (find(&mut parent, *l), find(&mut parent, *ap));
                if rl != ra {
                    parent.insert(rl, ra);
                }
            }
            (PosType::Fun(a, b), NegType::Opaque) => {
                if let Some(l) = lam_of.get(&(*a, *b)) {
                    tainted.insert(*l);
                }
            }
            (PosType::Opaque, NegType::Fun(a, b)) => {
                if let Some(ap) = app_of.get(&(*a, *b)) {
                    tainted.insert(*ap);
                }
            }
            _ => {}
        }
    }
    let lam_ids: HashSet<NodeId> = lam_of.values().copied().collect();
    let mut groups: HashMap<NodeId, (Vec<NodeId>, Vec<NodeId>)> = HashMap::new();
    for m in &members {
        let r = find(&mut parent, *m);
        let e = groups.entry(r).or_default();
        if lam_ids.contains(m) {
            e.0.push(*m);
        } else {
            e.1.push(*m);
        }
    }
    let droppable_lam = |id: NodeId| {
        let t = v.nodes[&id];
        let Kind::Lam { param, thunk: true, .. } = &t.kind else { return false };
        if param != UNIT_PARAM || tainted.contains(&id) {
            return false;
        }
        // only a parameter of a definition that directly follows one of its
        // original parameters
        match v.chain.get(&id) {
            Some((g, d)) if g != "main" && *d >= 1 => {}
            _ => return false,
        }
        if let Some((par, Pos::LamBody)) = v.parent.get(&id) {
            if matches!(v.nodes[par].kind, Kind::Lam { thunk: true, .. }) {
                return false;
            }
        }
        applied_at_least_once(&v, id, 1, &mut HashSet::new())
    };
    let droppable_app = |id: NodeId| {
        matches!(&v.nodes[&id].kind, Kind::App(_, a) if a.is_unit()) && !tainted.contains(&id)
    };
    let mut lams = HashSet::new();
    let mut apps = HashSet::new();
    for (ls, aps) in groups.values() {
        if !ls.is_empty() && !aps.is_empty() && ls.iter().all(|l| droppable_lam(*l)) && aps.iter().all(|a| droppable_app(*a)) {
            lams.extend(ls.iter().copied());
            apps.extend(aps.iter().copied());
        }
    }
    if lams.is_empty() {
        return None;
    }
    Some(map_program(&p, |t| strip_units(t, &lams, &apps)))
}

fn strip_units(t: &Term, lams: &HashSet<NodeId>, apps: &HashSet<NodeId>) -> Term {
    let kind = match &t.kind {
        Kind::Var(_) | Kind::Lit(_) => return t.clone(),
        Kind::App(f, a) => {
            if apps.contains(&t.id) {
                return strip_units(f, lams, apps);
            }
            Kind::App(Box::new(strip_units(f, lams, apps)), Box::new(strip_units(a, lams, apps)))
        }
        Kind::Ctor(tag, args) => Kind::Ctor(tag.clone(), args.iter().map(|a| strip_units(a, lams, apps)).collect()),
        Kind::Lam { param, body, thunk } => {
            if lams.contains(&t.id) {
                return strip_units(body, lams, apps);
            }
            Kind::Lam { param: param.clone(), body: Box::new(strip_units(body, lams, apps)), thunk: *thunk }
        }
        Kind::LetRec(n, a, b) => {
            Kind::LetRec(n.clone(), Box::new(strip_units(a, lams, apps)), Box::new(strip_units(b, lams, apps)))
        }
        Kind::Case { scrut, arms, mark } => Kind::Case {
            scrut: Box::new(strip_units(scrut, lams, apps)),
            arms: arms
                .iter()
                .map(|a| Arm { tag: a.tag.clone(), binders: a.binders.clone(), body: strip_units(&a.body, lams, apps) })
                .collect(),
            mark: mark.clone(),
        },
    };
    Term { id: t.id, span: t.span, kind }
}

// ---------------------------------------------------------------------------
// stages

pub fn inline_and_beta(p: &Program) -> Program {
    let mut cur = p.clone();
    for _ in 0..FIXPOINT_BOUND {
        let mut changed = false;
        let mut g = IdGen::for_program(&cur);
        let mut next = map_program(&cur, |t| beta_pass(t, &mut g, &mut changed));
        next.next_id = next.next_id.max(g.0);
        if let Some(q) = inline_trivial(&next) {
            next = q;
            changed = true;
        }
        if !changed {
            if let Some(q) = drop_units(&next) {
                next = q;
                changed = true;
            }
        }
        cur = next;
        if !changed {
            break;
        }
    }
    cur
}

fn float_fixpoint(p: &Program) -> Program {
    let mut cur = p.clone();
    for _ in 0..FIXPOINT_BOUND {
        cur.renumber();
        let info = analyze_cardinality(&cur);
        let mut changed = false;
        let floated = map_program(&cur, |t| float_pass(t, &info, &mut changed));
        let mut g = IdGen::for_program(&floated);
        let mut beta_changed = false;
        let mut next = map_program(&floated, |t| beta_pass(t, &mut g, &mut beta_changed));
        next.next_id = next.next_id.max(g.0);
        cur = next;
        if !changed {
            break;
        }
    }
    cur
}

/// The full cleanup sequence.
pub fn simplify(p: &Program, opts: SimplifyOptions) -> Program {
    simplify_checked(p, opts).0
}

/// Like [`simplify`], also telling whether the outer iteration converged
/// within [`FIXPOINT_BOUND`] rounds.
pub fn simplify_checked(p: &Program, opts: SimplifyOptions) -> (Program, bool) {
    let stage_inline = |q: &Program| if opts.inline { inline_and_beta(q) } else { q.clone() };
    let mut cur = p.clone();
    let mut converged = false;
    for _ in 0..FIXPOINT_BOUND {
        let before = cur.clone();
        cur = stage_inline(&cur);
        if opts.float {
            cur = float_fixpoint(&cur);
        }
        cur = stage_inline(&cur);
        cur = crate::thunk::unthunk(&cur);
        cur = stage_inline(&cur);
        if program_alpha_eq(&before, &cur) {
            converged = true;
            break;
        }
    }
    cur.renumber();
    (cur, converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{diff_check_with, Verdict};
    use crate::parse::{parse, parse_args};
    use crate::pretty::pretty;

    #[test]
    fn beta_rules() {
        let p = parse("let main y = (fun x -> x) y").unwrap();
        let q = inline_and_beta(&p);
        assert!(program_alpha_eq(&q, &parse("let main y = y").unwrap()));
        // duplicating work is refused
        let p = parse("let f u = u + 1\nlet main y = (fun x -> x + x) (f y)").unwrap();
        let q = inline_and_beta(&p);
        assert!(program_alpha_eq(&q, &p), "{}", pretty(&q));
    }

    #[test]
    fn one_shot_immediate() {
        let p = parse("let main = (fun x -> x) 1").unwrap();
        let info = analyze_cardinality(&p);
        assert_eq!(info.one_shot.len(), 1);
        let p = parse("let main = let f = fun x -> x in f (f 1)").unwrap();
        let info = analyze_cardinality(&p);
        // the let lambda is applied once; `f` is applied twice
        assert_eq!(info.one_shot.len(), 1);
    }

    #[test]
    fn one_shot_two_args() {
        let p = parse("let foo a b = fun n -> a + b + n\nlet main = foo 1 2 3 + foo 3 4 5").unwrap();
        let info = analyze_cardinality(&p);
        let v = View::new(&p);
        let inner = v.nodes.values().find(|t| matches!(&t.kind, Kind::Lam { param, .. } if param == "n")).unwrap();
        assert!(info.one_shot.contains(&inner.id));
    }

    #[test]
    fn identity_on_plain_programs() {
        for src in [
            "let main = 1 + 2",
            "let rec map f xs = case xs of { [] -> []; x :: xs -> f x :: map f xs }\nlet main ls = map (fun x -> x) ls",
        ] {
            let p = parse(src).unwrap();
            let q = simplify(&p, SimplifyOptions::default());
            assert!(program_alpha_eq(&p, &q), "{}", pretty(&q));
        }
    }

    #[test]
    fn thunked_programs_come_back() {
        let src = "let rec map f xs = case xs of { [] -> []; x :: xs -> f x :: map f xs }\n\
                   let main ls = case ls of { [] -> 0; y :: ys -> case ys of { [] -> y; z :: zs -> z } }";
        let p = parse(src).unwrap();
        let t = crate::thunk::thunk(&p);
        let q = simplify(&t, SimplifyOptions::default());
        assert!(program_alpha_eq(&p, &q), "{}", pretty(&q));
        let args = parse_args("[1, 2]").unwrap();
        assert_eq!(diff_check_with(&p, &q, &args, 10_000).verdict, Verdict::Equal);
    }
}
