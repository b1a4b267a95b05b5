//! Fusion strategies from solved bounds.
//!
//! Every type variable gets one strategy node whose children are again type
//! variables, so recursive strategies are plain cycles in the map. Equality of
//! strategies is bisimilarity of these graphs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write;

use serde::Serialize;

use crate::infer::*;
use crate::solver::Solved;
use crate::syntax::{Name, NodeId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FuseArm {
    pub binders: Vec<Name>,
    pub fields: Vec<TypeVar>,
    /// The arm body moved to each constructor site.
    pub body: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Strategy {
    /// Leave the producer as it is.
    Top,
    Fun(TypeVar, TypeVar),
    /// Keep constructors, with field strategies.
    CtorId(BTreeMap<Name, Vec<TypeVar>>),
    /// Replace constructors by the consuming case's arm bodies.
    CtorFuse { arms: BTreeMap<Name, FuseArm>, case_id: NodeId, result: TypeVar },
}

/// The uppers-only unifier over ordered concrete upper bounds.
#[derive(Clone, Debug, PartialEq)]
pub enum Unif {
    Top,
    Fun(TypeVar, TypeVar),
    Fuse(ShapeId),
    /// Identity form of the given shape.
    Id(ShapeId),
}

/// `unif(σ̄)`; `None` when the bounds cannot be reconciled.
pub fn unif(cs: &ConstraintSet, uppers: &[NegType]) -> Option<Unif> {
    let mut acc: Option<Unif> = None;
    for u in uppers {
        let next = match (&acc, u) {
            (_, NegType::Var(_)) => continue,
            (None, NegType::Fun(a, b)) => Unif::Fun(*a, *b),
            (None, NegType::Case(s)) => Unif::Fuse(*s),
            (Some(f @ Unif::Fun(..)), NegType::Fun(..)) => f.clone(),
            (Some(Unif::Fuse(s1) | Unif::Id(s1)), NegType::Case(s2)) if cs.shape(*s1).same_tags(cs.shape(*s2)) => {
                Unif::Id(*s1)
            }
            _ => return None,
        };
        acc = Some(next);
    }
    Some(acc.unwrap_or(Unif::Top))
}

#[derive(Clone, Debug, Default)]
pub struct Strategies {
    pub map: HashMap<TypeVar, Strategy>,
    /// Variables whose upper bounds could not be unified (left at ⊤).
    pub failed: HashSet<TypeVar>,
    /// Variables connected to the program boundary (never fused).
    pub opaque: HashSet<TypeVar>,
}

const TOP: Strategy = Strategy::Top;

impl Strategies {
    pub fn get(&self, v: TypeVar) -> &Strategy {
        self.map.get(&v).unwrap_or(&TOP)
    }

    /// Bisimilarity of `a` in `self` and `b` in `other`.
    pub fn bisim(&self, a: TypeVar, other: &Strategies, b: TypeVar) -> bool {
        let mut assumed = HashSet::new();
        bisim_go(self, a, other, b, &mut assumed)
    }

    pub fn eq(&self, a: TypeVar, b: TypeVar) -> bool {
        a == b || self.bisim(a, self, b)
    }

    /// Number of distinct nodes reachable from `v`.
    pub fn reachable(&self, v: TypeVar) -> usize {
        let mut seen = HashSet::new();
        let mut stack = vec![v];
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(children(self.get(v)));
            }
        }
        seen.len()
    }

    /// Renders `φ(v)`, naming recursion points `μaN.`.
    pub fn render(&self, v: TypeVar) -> String {
        let mut cyclic = HashSet::new();
        find_cycles(self, v, &mut Vec::new(), &mut HashSet::new(), &mut cyclic);
        let mut s = String::new();
        render_go(self, v, &cyclic, &mut Vec::new(), &mut s);
        s
    }
}

fn children(s: &Strategy) -> Vec<TypeVar> {
    match s {
        Strategy::Top => vec![],
        Strategy::Fun(a, b) => vec![*a, *b],
        Strategy::CtorId(m) => m.values().flatten().copied().collect(),
        Strategy::CtorFuse { arms, result, .. } => {
            arms.values().flat_map(|a| a.fields.iter().copied()).chain([*result]).collect()
        }
    }
}

fn bisim_go(x: &Strategies, a: TypeVar, y: &Strategies, b: TypeVar, assumed: &mut HashSet<(TypeVar, TypeVar)>) -> bool {
    if !assumed.insert((a, b)) {
        return true;
    }
    let pairs: Vec<(TypeVar, TypeVar)> = match (x.get(a), y.get(b)) {
        (Strategy::Top, Strategy::Top) => vec![],
        (Strategy::Fun(a1, a2), Strategy::Fun(b1, b2)) => vec![(*a1, *b1), (*a2, *b2)],
        (Strategy::CtorId(m1), Strategy::CtorId(m2)) => {
            if m1.len() != m2.len() {
                return false;
            }
            let mut out = Vec::new();
            for (tag, f1) in m1 {
                let Some(f2) = m2.get(tag) else { return false };
                if f1.len() != f2.len() {
                    return false;
                }
                out.extend(f1.iter().copied().zip(f2.iter().copied()));
            }
            out
        }
        (
            Strategy::CtorFuse { arms: m1, result: r1, .. },
            Strategy::CtorFuse { arms: m2, result: r2, .. },
        ) => {
            if m1.len() != m2.len() {
                return false;
            }
            let mut out = vec![(*r1, *r2)];
            for (tag, a1) in m1 {
                let Some(a2) = m2.get(tag) else { return false };
                if a1.body != a2.body || a1.fields.len() != a2.fields.len() {
                    return false;
                }
                out.extend(a1.fields.iter().copied().zip(a2.fields.iter().copied()));
            }
            out
        }
        _ => return false,
    };
    pairs.into_iter().all(|(p, q)| bisim_go(x, p, y, q, assumed))
}

fn find_cycles(
    s: &Strategies,
    v: TypeVar,
    path: &mut Vec<TypeVar>,
    done: &mut HashSet<TypeVar>,
    cyclic: &mut HashSet<TypeVar>,
) {
    if path.contains(&v) {
        cyclic.insert(v);
        return;
    }
    if !done.insert(v) {
        return;
    }
    path.push(v);
    for c in children(s.get(v)) {
        find_cycles(s, c, path, done, cyclic);
    }
    path.pop();
}

fn render_go(s: &Strategies, v: TypeVar, cyclic: &HashSet<TypeVar>, open: &mut Vec<TypeVar>, out: &mut String) {
    if open.contains(&v) {
        let _ = write!(out, "{v}");
        return;
    }
    if cyclic.contains(&v) {
        let _ = write!(out, "μ{v}.");
    }
    open.push(v);
    match s.get(v) {
        Strategy::Top => out.push('⊤'),
        Strategy::Fun(a, b) => {
            out.push('(');
            render_go(s, *a, cyclic, open, out);
            out.push_str(" -> ");
            render_go(s, *b, cyclic, open, out);
            out.push(')');
        }
        Strategy::CtorId(m) => {
            out.push('{');
            for (i, (tag, fs)) in m.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                let _ = write!(out, "{tag}<");
                for (j, f) in fs.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    render_go(s, *f, cyclic, open, out);
                }
                out.push('>');
            }
            out.push('}');
        }
        Strategy::CtorFuse { arms, result, .. } => {
            out.push('{');
            for (i, (tag, arm)) in arms.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                let _ = write!(out, "{tag}<");
                for (j, (x, f)) in arm.binders.iter().zip(&arm.fields).enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    let _ = write!(out, "{x}: ");
                    render_go(s, *f, cyclic, open, out);
                }
                let _ = write!(out, "> => #{}", arm.body);
            }
            out.push_str("} : ");
            render_go(s, *result, cyclic, open, out);
        }
    }
    open.pop();
}

fn find(parent: &mut HashMap<TypeVar, TypeVar>, v: TypeVar) -> TypeVar {
    let p = *parent.get(&v).unwrap_or(&v);
    if p == v {
        return v;
    }
    let r = find(parent, p);
    parent.insert(v, r);
    r
}

/// Variables in the same var-var component as a boundary bound.
fn opaque_vars(xi: &[Constraint]) -> HashSet<TypeVar> {
    let mut parent: HashMap<TypeVar, TypeVar> = HashMap::new();
    for c in xi {
        if let (Some(a), Some(b)) = (c.lhs.as_var(), c.rhs.as_var()) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent.insert(ra, rb);
            }
        }
    }
    let mut roots = HashSet::new();
    for c in xi {
        let v = match (&c.lhs, &c.rhs) {
            (PosType::Opaque, NegType::Var(v)) | (PosType::Var(v), NegType::Opaque) => *v,
            _ => continue,
        };
        roots.insert(find(&mut parent, v));
    }
    let mut out = HashSet::new();
    for c in xi {
        for v in [c.lhs.as_var(), c.rhs.as_var()].into_iter().flatten() {
            if roots.contains(&find(&mut parent, v)) {
                out.insert(v);
            }
        }
    }
    out
}

fn shape_strategy(cs: &ConstraintSet, u: Unif, opaque: bool) -> Strategy {
    match u {
        Unif::Top => Strategy::Top,
        Unif::Fun(a, b) => Strategy::Fun(a, b),
        Unif::Id(s) => identity(cs.shape(s)),
        Unif::Fuse(s) if opaque => identity(cs.shape(s)),
        Unif::Fuse(s) => {
            let shape = cs.shape(s);
            Strategy::CtorFuse {
                arms: shape
                    .arms
                    .iter()
                    .map(|a| {
                        let arm = FuseArm {
                            binders: a.binders.iter().map(|(x, _)| x.clone()).collect(),
                            fields: a.binders.iter().map(|(_, v)| *v).collect(),
                            body: a.body,
                        };
                        (a.tag.clone(), arm)
                    })
                    .collect(),
                case_id: shape.case_id,
                result: shape.result,
            }
        }
    }
}

fn identity(shape: &CaseShape) -> Strategy {
    Strategy::CtorId(shape.arms.iter().map(|a| (a.tag.clone(), a.binders.iter().map(|(_, v)| *v).collect())).collect())
}

/// `φ` for every variable mentioned in Ξ; other variables are ⊤.
pub fn unify(cs: &ConstraintSet, solved: &Solved) -> Strategies {
    let opaque = opaque_vars(&solved.xi);
    let mut uppers: HashMap<TypeVar, Vec<NegType>> = HashMap::new();
    for c in &solved.xi {
        if let (Some(a), None) = (c.lhs.as_var(), c.rhs.as_var()) {
            if c.rhs != NegType::Opaque {
                uppers.entry(a).or_default().push(c.rhs.clone());
            }
        }
    }
    let mut out = Strategies { opaque, ..Default::default() };
    for (&v, us) in &uppers {
        let s = match unif(cs, us) {
            Some(u) => shape_strategy(cs, u, out.opaque.contains(&v)),
            None => {
                out.failed.insert(v);
                Strategy::Top
            }
        };
        out.map.insert(v, s);
    }
    // keeping only the first function bound relies on the solver having
    // linked all of them component-wise
    #[cfg(debug_assertions)]
    for us in uppers.values() {
        let funs: Vec<_> = us.iter().filter_map(|u| if let NegType::Fun(a, b) = u { Some((*a, *b)) } else { None }).collect();
        for w in funs.windows(2) {
            debug_assert!(out.eq(w[0].0, w[1].0) && out.eq(w[0].1, w[1].1), "unmerged function bounds {w:?}");
        }
    }
    out
}

/// Checks that every constraint of Δ is respected by the strategies.
pub fn check_consistent(cs: &ConstraintSet, st: &Strategies) -> Result<(), String> {
    let bad = |c: &Constraint| Err(format!("{} <= {}", cs.render_pos(&c.lhs), cs.render_neg(&c.rhs)));
    for c in &cs.constraints {
        let ok = match (&c.lhs, &c.rhs) {
            (PosType::Opaque, _) | (_, NegType::Opaque) => true,
            (PosType::Var(g), NegType::Case(sid)) => {
                let shape = cs.shape(*sid);
                let fields_ok = |tag: &str, fs: &[TypeVar]| {
                    shape.arm(tag).is_some_and(|a| {
                        a.binders.len() == fs.len() && a.binders.iter().zip(fs).all(|((_, b), f)| st.eq(*f, *b))
                    })
                };
                match st.get(*g) {
                    Strategy::CtorId(m) => {
                        m.len() == shape.arms.len() && m.iter().all(|(t, fs)| fields_ok(t, fs))
                    }
                    Strategy::CtorFuse { arms, result, .. } => {
                        arms.len() == shape.arms.len()
                            && arms.iter().all(|(t, a)| fields_ok(t, &a.fields))
                            && st.eq(*result, shape.result)
                    }
                    Strategy::Top => st.failed.contains(g),
                    Strategy::Fun(..) => false,
                }
            }
            (PosType::Var(g), NegType::Fun(a, b)) => match st.get(*g) {
                Strategy::Fun(s1, s2) => st.eq(*s1, *a) && st.eq(*s2, *b),
                Strategy::Top => st.failed.contains(g),
                _ => false,
            },
            (PosType::Ctor(tag, args), NegType::Var(t)) => {
                let fields_ok = |fs: &[TypeVar]| fs.len() == args.len() && fs.iter().zip(args).all(|(f, a)| st.eq(*f, *a));
                match st.get(*t) {
                    Strategy::Top => true,
                    Strategy::CtorId(m) => m.get(tag).is_some_and(|fs| fields_ok(fs)),
                    Strategy::CtorFuse { arms, .. } => arms.get(tag).is_some_and(|a| fields_ok(&a.fields)),
                    Strategy::Fun(..) => false,
                }
            }
            (PosType::Fun(a, b), NegType::Var(t)) => match st.get(*t) {
                Strategy::Top => true,
                Strategy::Fun(s1, s2) => st.eq(*s1, *a) && st.eq(*s2, *b),
                _ => false,
            },
            (PosType::Var(a), NegType::Var(b)) => st.eq(*a, *b) || *st.get(*b) == Strategy::Top,
            _ => true,
        };
        if !ok {
            return bad(c);
        }
    }
    Ok(())
}

/// JSON lines `{"var":"aN","strategy":"…"}` for every non-⊤ variable.
pub fn dump_json_lines(st: &Strategies) -> String {
    let mut vars: Vec<&TypeVar> = st.map.keys().collect();
    vars.sort();
    let mut out = String::new();
    for v in vars {
        if st.map[v] != Strategy::Top {
            out.push_str(&serde_json::json!({"var": v.to_string(), "strategy": st.render(*v)}).to_string());
            out.push('\n');
        }
    }
    out
}
