//! Constraint solving. Produces a closed, merged bound set Ξ from Δ.
//!
//! [`solve`] is the indexed engine used by the pipeline: every constraint is
//! matched against the bounds already present on its variable at insertion
//! time. [`solve_reference`] rewrites Ξ as an ordered list and is kept to
//! cross-check the indexed engine in tests.

use std::collections::{HashMap, HashSet, VecDeque};

use indexmap::IndexSet;
use thiserror::Error;

use crate::infer::*;

pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("constructor/shape clash: {lhs} <= {rhs}")]
    Clash { lhs: String, rhs: String },
    #[error("solver budget of {0} rule firings exceeded")]
    BudgetExceeded(u64),
}

#[derive(Clone, Debug, Default)]
pub struct Solved {
    /// Ξ in normal order: nonvar upper bounds, var-var bounds, nonvar lower bounds.
    pub xi: Vec<Constraint>,
    /// Every producer/consumer pair that was checked.
    pub checks: HashSet<Constraint>,
    pub firings: u64,
}

impl Solved {
    /// Nonvar upper bounds of `v`, in Ξ order.
    pub fn uppers(&self, v: TypeVar) -> impl Iterator<Item = &NegType> {
        self.xi.iter().filter(move |c| c.lhs == PosType::Var(v) && c.rhs.as_var().is_none()).map(|c| &c.rhs)
    }

    pub fn var_bounds(&self) -> impl Iterator<Item = (TypeVar, TypeVar)> + '_ {
        self.xi.iter().filter_map(|c| Some((c.lhs.as_var()?, c.rhs.as_var()?)))
    }
}

fn clash(cs: &ConstraintSet, l: &PosType, r: &NegType) -> SolveError {
    SolveError::Clash { lhs: cs.render_pos(l), rhs: cs.render_neg(r) }
}

/// Decomposes a constraint between a concrete producer and a concrete
/// consumer into the constraints it implies.
fn decompose(cs: &ConstraintSet, l: &PosType, r: &NegType) -> Result<Vec<Constraint>, SolveError> {
    use NegType as N;
    use PosType as P;
    Ok(match (l, r) {
        (P::Fun(a1, a2), N::Fun(b1, b2)) => vec![Constraint::vv(*b1, *a1), Constraint::vv(*a2, *b2)],
        (P::Ctor(tag, args), N::Case(s)) => {
            let arm = cs.shape(*s).arm(tag).ok_or_else(|| clash(cs, l, r))?;
            if arm.binders.len() != args.len() {
                return Err(clash(cs, l, r));
            }
            args.iter().zip(&arm.binders).map(|(g, (_, b))| Constraint::vv(*g, *b)).collect()
        }
        (P::Opaque, N::Fun(a, b)) => {
            vec![Constraint::new(P::Var(*a), N::Opaque), Constraint::new(P::Opaque, N::Var(*b))]
        }
        (P::Opaque, N::Case(s)) => cs
            .shape(*s)
            .arms
            .iter()
            .flat_map(|a| a.binders.iter().map(|(_, b)| Constraint::new(P::Opaque, N::Var(*b))))
            .collect(),
        (P::Ctor(_, args), N::Opaque) => args.iter().map(|g| Constraint::new(P::Var(*g), N::Opaque)).collect(),
        (P::Fun(a, b), N::Opaque) => {
            vec![Constraint::new(P::Opaque, N::Var(*a)), Constraint::new(P::Var(*b), N::Opaque)]
        }
        (P::Opaque, N::Opaque) => vec![],
        _ => return Err(clash(cs, l, r)),
    })
}

/// Links implied by two concrete upper bounds on the same variable.
fn merge_links(cs: &ConstraintSet, u1: &NegType, u2: &NegType) -> Vec<Constraint> {
    match (u1, u2) {
        (NegType::Fun(b1, g1), NegType::Fun(b2, g2)) => {
            [(*b1, *b2), (*g1, *g2)].into_iter().filter(|(x, y)| x != y).map(|(x, y)| Constraint::vv(x, y)).collect()
        }
        (NegType::Case(s1), NegType::Case(s2)) if s1 != s2 => {
            let (s1, s2) = (cs.shape(*s1), cs.shape(*s2));
            if !s1.same_tags(s2) {
                return vec![];
            }
            let mut out = Vec::new();
            for a in &s1.arms {
                let b = s2.arm(&a.tag).expect("same tags");
                for ((_, x), (_, y)) in a.binders.iter().zip(&b.binders) {
                    if x != y {
                        out.push(Constraint::vv(*x, *y));
                    }
                }
            }
            out
        }
        _ => vec![],
    }
}

fn is_reflexive(c: &Constraint) -> bool {
    matches!((&c.lhs, &c.rhs), (PosType::Var(a), NegType::Var(b)) if a == b)
}

#[derive(Default)]
struct Index {
    seen: HashSet<Constraint>,
    uppers: HashMap<TypeVar, Vec<NegType>>,
    lowers: HashMap<TypeVar, Vec<PosType>>,
    preds: HashMap<TypeVar, Vec<TypeVar>>,
    upper_order: IndexSet<Constraint>,
    var_order: IndexSet<Constraint>,
    lower_order: IndexSet<Constraint>,
}

pub fn solve(cs: &ConstraintSet) -> Result<Solved, SolveError> {
    solve_with_budget(cs, DEFAULT_BUDGET)
}

pub fn solve_with_budget(cs: &ConstraintSet, budget: u64) -> Result<Solved, SolveError> {
    let mut ix = Index::default();
    let mut checks = HashSet::new();
    let mut work: Vec<Constraint> = cs.constraints.iter().rev().cloned().collect();
    let mut firings = 0u64;
    while let Some(c) = work.pop() {
        firings += 1;
        if firings > budget {
            return Err(SolveError::BudgetExceeded(budget));
        }
        if is_reflexive(&c) || !ix.seen.insert(c.clone()) {
            continue;
        }
        let mut new = Vec::new();
        match (c.lhs.as_var(), c.rhs.as_var()) {
            (None, None) => {
                new = decompose(cs, &c.lhs, &c.rhs)?;
                checks.insert(c);
            }
            (None, Some(a)) => {
                for u in ix.uppers.get(&a).into_iter().flatten() {
                    new.push(Constraint::new(c.lhs.clone(), u.clone()));
                }
                ix.lowers.entry(a).or_default().push(c.lhs.clone());
                ix.lower_order.insert(c);
            }
            (Some(a), None) => {
                for l in ix.lowers.get(&a).into_iter().flatten() {
                    new.push(Constraint::new(l.clone(), c.rhs.clone()));
                }
                for g in ix.preds.get(&a).into_iter().flatten() {
                    new.push(Constraint::new(PosType::Var(*g), c.rhs.clone()));
                }
                for u in ix.uppers.get(&a).into_iter().flatten() {
                    new.extend(merge_links(cs, u, &c.rhs));
                }
                ix.uppers.entry(a).or_default().push(c.rhs.clone());
                ix.upper_order.insert(c);
            }
            (Some(a), Some(b)) => {
                for u in ix.uppers.get(&b).into_iter().flatten() {
                    new.push(Constraint::new(PosType::Var(a), u.clone()));
                }
                new.push(Constraint::vv(b, a));
                ix.preds.entry(b).or_default().push(a);
                ix.var_order.insert(c);
            }
        }
        work.extend(new.into_iter().rev());
    }
    let xi = ix.upper_order.into_iter().chain(ix.var_order).chain(ix.lower_order).collect();
    Ok(Solved { xi, checks, firings })
}

/// Ordered-list rewriting engine. Slow; used as a test oracle.
pub fn solve_reference(cs: &ConstraintSet, budget: u64) -> Result<Solved, SolveError> {
    let mut xi: Vec<Constraint> = Vec::new();
    let mut work: VecDeque<Constraint> = cs.constraints.iter().cloned().collect();
    let mut checks = HashSet::new();
    let mut firings = 0u64;
    let lower_var = |c: &Constraint| c.rhs.as_var();
    let upper_var = |c: &Constraint| c.lhs.as_var();
    let both_vars = |c: &Constraint| c.lhs.as_var().is_some() && c.rhs.as_var().is_some();
    loop {
        firings += 1;
        if firings > budget {
            return Err(SolveError::BudgetExceeded(budget));
        }
        if let Some(c) = work.pop_front() {
            if is_reflexive(&c) || xi.contains(&c) {
                continue;
            }
            match (c.lhs.as_var(), c.rhs.as_var()) {
                (_, Some(_)) => xi.insert(0, c),
                (Some(_), None) => xi.push(c),
                (None, None) => {
                    let new = decompose(cs, &c.lhs, &c.rhs)?;
                    checks.insert(c);
                    for n in new.into_iter().rev() {
                        work.push_front(n);
                    }
                }
            }
            continue;
        }
        // pass / match on the leftmost adjacent lower·upper pair
        let mut fired = false;
        for i in 0..xi.len().saturating_sub(1) {
            let (l, u) = (&xi[i], &xi[i + 1]);
            let (Some(a), Some(b)) = (lower_var(l), upper_var(u)) else { continue };
            if l.lhs.as_var().is_some() && u.rhs.as_var().is_some() {
                continue;
            }
            if a == b {
                work.push_back(Constraint::new(l.lhs.clone(), u.rhs.clone()));
            }
            xi.swap(i, i + 1);
            fired = true;
            break;
        }
        if fired {
            continue;
        }
        let present: HashSet<&Constraint> = xi.iter().collect();
        let missing = |c: &Constraint| !present.contains(c);
        // var merge
        if let Some(c) = xi.iter().filter(|c| both_vars(c)).map(|c| Constraint::vv(c.rhs.as_var().unwrap(), c.lhs.as_var().unwrap())).find(|c| missing(c)) {
            work.push_back(c);
            continue;
        }
        // fun merge, then ctor merge
        let mut links = Vec::new();
        'outer: for want_fun in [true, false] {
            for (i, c1) in xi.iter().enumerate() {
                for c2 in &xi[i + 1..] {
                    let (Some(v1), Some(v2)) = (upper_var(c1), upper_var(c2)) else { continue };
                    if v1 != v2 || c1.rhs.as_var().is_some() || c2.rhs.as_var().is_some() {
                        continue;
                    }
                    if matches!(c1.rhs, NegType::Fun(..)) != want_fun {
                        continue;
                    }
                    let ls = merge_links(cs, &c1.rhs, &c2.rhs);
                    if ls.iter().any(|l| missing(l)) {
                        links = ls;
                        break 'outer;
                    }
                }
            }
        }
        if !links.is_empty() {
            work.extend(links);
            continue;
        }
        break;
    }
    Ok(Solved { xi, checks, firings })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvalidOutput {
    #[error("bound {0} out of order")]
    Order(usize),
    #[error("var bound {0} <= {1} without its converse")]
    Asymmetric(TypeVar, TypeVar),
    #[error("function upper bounds of {0} are not merged")]
    FunUnmerged(TypeVar),
    #[error("case upper bounds of {0} are not merged")]
    CaseUnmerged(TypeVar),
}

/// Checks the shape of a solved Ξ: ordering, symmetric var bounds and
/// fully merged upper bounds.
pub fn validate_output(cs: &ConstraintSet, xi: &[Constraint]) -> Result<(), InvalidOutput> {
    let class = |c: &Constraint| match (c.lhs.as_var(), c.rhs.as_var()) {
        (Some(_), None) => 0,
        (Some(_), Some(_)) => 1,
        _ => 2,
    };
    for (i, w) in xi.windows(2).enumerate() {
        if class(&w[0]) > class(&w[1]) {
            return Err(InvalidOutput::Order(i + 1));
        }
    }
    let present: HashSet<&Constraint> = xi.iter().collect();
    for c in xi {
        if let (Some(a), Some(b)) = (c.lhs.as_var(), c.rhs.as_var()) {
            if !present.contains(&Constraint::vv(b, a)) {
                return Err(InvalidOutput::Asymmetric(a, b));
            }
        }
    }
    let linked = |x: TypeVar, y: TypeVar| x == y || present.contains(&Constraint::vv(x, y));
    let mut by_var: HashMap<TypeVar, Vec<&NegType>> = HashMap::new();
    for c in xi {
        if let (Some(a), None) = (c.lhs.as_var(), c.rhs.as_var()) {
            by_var.entry(a).or_default().push(&c.rhs);
        }
    }
    for (v, us) in by_var {
        for (i, u1) in us.iter().enumerate() {
            for u2 in &us[i + 1..] {
                let ok = merge_links(cs, u1, u2).iter().all(|l| linked(l.lhs.as_var().unwrap(), l.rhs.as_var().unwrap()));
                if !ok {
                    return Err(match u1 {
                        NegType::Fun(..) => InvalidOutput::FunUnmerged(v),
                        _ => InvalidOutput::CaseUnmerged(v),
                    });
                }
            }
        }
    }
    Ok(())
}
