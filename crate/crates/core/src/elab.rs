//! Rewriting a program under fusion strategies.
//!
//! Each node is rewritten under the strategy of its own type variable, so the
//! rewrite of a subterm does not depend on where it is reached from. Fusion is
//! decided per case expression: a case is fused when every arm passes the
//! free-variable check and importing its arms does not loop. Its producers
//! then become `let`-bound arm bodies and the case collapses to its scrutinee.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::Serialize;

use crate::infer::ConstraintSet;
use crate::syntax::*;
use crate::unify::{Strategies, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SkipReason {
    /// An arm, once rewritten, mentions variables other than its binders.
    FreeVarEscape,
    /// No usable strategy (e.g. the solver reported a clash).
    StrategyClash,
    /// Rewriting an arm re-enters the same fusion site.
    Cycle,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RewriteReport {
    /// (constructor node, case node it was fused into)
    pub fused_ctors: Vec<(NodeId, NodeId)>,
    pub collapsed_cases: Vec<NodeId>,
    /// Fusible cases that sit in arms no constructor selects; they vanish
    /// with their enclosing arm.
    pub dropped_cases: Vec<NodeId>,
    pub skipped: Vec<(NodeId, SkipReason)>,
}

impl RewriteReport {
    pub fn fused_sites(&self) -> usize {
        self.fused_ctors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fused_ctors.is_empty() && self.collapsed_cases.is_empty() && self.dropped_cases.is_empty() && self.skipped.is_empty()
    }
}

struct Elab<'a> {
    index: HashMap<NodeId, &'a Term>,
    cs: &'a ConstraintSet,
    st: &'a Strategies,
    tops: HashSet<Name>,
    fusible: BTreeSet<NodeId>,
    g: IdGen,
    /// constructor sites currently being expanded
    stack: Vec<NodeId>,
    cycle: Option<NodeId>,
    memo: HashMap<NodeId, Term>,
    report: RewriteReport,
}

impl Elab<'_> {
    /// The case a constructor node fuses into, if any.
    fn ctor_target(&self, t: &Term, tag: &str) -> Option<(NodeId, NodeId, Vec<Name>)> {
        let v = self.cs.term_vars.get(&t.id)?;
        match self.st.get(*v) {
            Strategy::CtorFuse { arms, case_id, .. } if self.fusible.contains(case_id) => {
                let arm = arms.get(tag)?;
                Some((*case_id, arm.body, arm.binders.clone()))
            }
            _ => None,
        }
    }

    fn collapses(&self, case: &Term, scrut: &Term) -> bool {
        if !self.fusible.contains(&case.id) {
            return false;
        }
        let Some(v) = self.cs.term_vars.get(&scrut.id) else { return false };
        matches!(self.st.get(*v), Strategy::CtorFuse { case_id, .. } if *case_id == case.id)
    }

    /// Rewritten arm body, shared by every import site.
    fn arm(&mut self, body: NodeId) -> Term {
        if let Some(t) = self.memo.get(&body) {
            return t.clone();
        }
        let src = self.index[&body];
        let out = self.term(src);
        self.memo.insert(body, out.clone());
        out
    }

    fn term(&mut self, t: &Term) -> Term {
        if self.cycle.is_some() {
            return t.clone();
        }
        let kind = match &t.kind {
            Kind::Var(_) | Kind::Lit(_) => return t.clone(),
            Kind::App(a, b) => Kind::App(Box::new(self.term(a)), Box::new(self.term(b))),
            Kind::Lam { param, body, thunk } => {
                Kind::Lam { param: param.clone(), body: Box::new(self.term(body)), thunk: *thunk }
            }
            Kind::LetRec(n, a, b) => Kind::LetRec(n.clone(), Box::new(self.term(a)), Box::new(self.term(b))),
            Kind::Ctor(tag, args) => {
                if let Some((case_id, body, binders)) = self.ctor_target(t, tag) {
                    if self.stack.contains(&t.id) {
                        self.cycle = Some(case_id);
                        return t.clone();
                    }
                    self.stack.push(t.id);
                    let args: Vec<Term> = args.iter().map(|a| self.term(a)).collect();
                    let l = self.arm(body);
                    self.stack.pop();
                    self.report.fused_ctors.push((t.id, case_id));
                    return self.bind(&binders, args, l);
                }
                Kind::Ctor(tag.clone(), args.iter().map(|a| self.term(a)).collect())
            }
            Kind::Case { scrut, arms, mark } => {
                if self.collapses(t, scrut) {
                    self.report.collapsed_cases.push(t.id);
                    return self.term(scrut);
                }
                Kind::Case {
                    scrut: Box::new(self.term(scrut)),
                    arms: arms
                        .iter()
                        .map(|a| Arm { tag: a.tag.clone(), binders: a.binders.clone(), body: self.term(&a.body) })
                        .collect(),
                    mark: mark.clone(),
                }
            }
        };
        Term { id: t.id, span: t.span, kind }
    }

    /// `let x̄ = t̄ in l`, with binders renamed away from the arguments'
    /// free variables.
    fn bind(&mut self, binders: &[Name], args: Vec<Term>, l: Term) -> Term {
        let mut l = self.g.refresh(&l);
        let mut avoid: HashSet<Name> = args.iter().flat_map(|a| a.free_vars()).collect();
        avoid.extend(self.tops.iter().cloned());
        let mut names = Vec::with_capacity(binders.len());
        for x in binders {
            let fresh = if avoid.contains(x) || names.contains(x) {
                let n = fresh_name(x, &|c: &str| {
                    avoid.contains(c) || binders.iter().any(|b| b == c) || l.count_free(c) > 0 || crate::parse::is_reserved(c)
                });
                l = rename_free(&l, x, &n);
                n
            } else {
                x.clone()
            };
            avoid.insert(fresh.clone());
            names.push(fresh);
        }
        names.iter().zip(args).rev().fold(l, |acc, (x, a)| self.g.let_(x, a, acc))
    }
}

/// Rewrites `p` under `st`. `p` must be the program the constraints were
/// inferred from.
pub fn elaborate(p: &Program, cs: &ConstraintSet, st: &Strategies) -> (Program, RewriteReport) {
    let tops = p.top_names();
    let mut candidates: BTreeSet<NodeId> = st
        .map
        .values()
        .filter_map(|s| match s {
            Strategy::CtorFuse { case_id, .. } => Some(*case_id),
            _ => None,
        })
        .collect();
    let index = p.index();
    let mut skipped = Vec::new();
    // drop cases until every remaining one passes its side conditions
    loop {
        let mut el = Elab {
            index: index.clone(),
            cs,
            st,
            tops: tops.clone(),
            fusible: candidates.clone(),
            g: IdGen::for_program(p),
            stack: Vec::new(),
            cycle: None,
            memo: HashMap::new(),
            report: RewriteReport::default(),
        };
        let mut reject = None;
        'cases: for &c in &candidates {
            let Some(Kind::Case { arms, .. }) = index.get(&c).map(|t| &t.kind) else {
                reject = Some((c, SkipReason::StrategyClash));
                break;
            };
            for arm in arms {
                let l2 = el.arm(arm.body.id);
                if let Some(cyc) = el.cycle {
                    reject = Some((cyc, SkipReason::Cycle));
                    break 'cases;
                }
                let ok = |t: &Term| t.free_vars().iter().all(|v| arm.binders.contains(v) || tops.contains(v));
                if !ok(&arm.body) || !ok(&l2) {
                    reject = Some((c, SkipReason::FreeVarEscape));
                    break 'cases;
                }
            }
        }
        match reject {
            Some((c, why)) => {
                candidates.remove(&c);
                skipped.push((c, why));
            }
            None => break,
        }
    }

    let mut el = Elab {
        index,
        cs,
        st,
        tops,
        fusible: candidates.clone(),
        g: IdGen::for_program(p),
        stack: Vec::new(),
        cycle: None,
        memo: HashMap::new(),
        report: RewriteReport::default(),
    };
    let defs: Vec<Def> = p
        .defs
        .iter()
        .map(|d| Def { name: d.name.clone(), recursive: d.recursive, body: el.term(&d.body) })
        .collect();
    let main = el.term(&p.main);
    debug_assert!(el.cycle.is_none());
    let mut report = el.report;
    report.fused_ctors.sort_unstable();
    report.fused_ctors.dedup();
    report.collapsed_cases.sort_unstable();
    report.collapsed_cases.dedup();
    report.dropped_cases = candidates.into_iter().filter(|c| report.collapsed_cases.binary_search(c).is_err()).collect();
    report.skipped = skipped;
    (Program { defs, main, next_id: el.g.0 }, report)
}

/// Cross-checks a report: every fused constructor targets a case that was
/// collapsed or dropped as unreachable.
pub fn check_pairing(report: &RewriteReport) -> bool {
    let collapsed: HashSet<NodeId> = report.collapsed_cases.iter().chain(&report.dropped_cases).copied().collect();
    report.fused_ctors.iter().all(|(_, c)| collapsed.contains(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::infer;
    use crate::interp::{diff_check_with, Verdict};
    use crate::parse::{parse, parse_args};
    use crate::solver::solve;
    use crate::unify::unify;

    fn run(src: &str) -> (Program, Program, RewriteReport) {
        let p = parse(src).unwrap();
        let t = crate::thunk::thunk(&p);
        let (_, cs) = infer(&t).unwrap();
        let s = solve(&cs).unwrap();
        let st = unify(&cs, &s);
        let (q, r) = elaborate(&t, &cs, &st);
        (p, q, r)
    }

    #[test]
    fn no_fusion_is_identity() {
        let (p, q, r) = run("let main = 1 + 2");
        assert!(program_alpha_eq(&p, &crate::thunk::unthunk(&q)));
        assert!(r.is_empty());
    }

    #[test]
    fn all_top_is_identity() {
        let p = parse("let rec map f xs = case xs of { [] -> []; x :: xs -> f x :: map f xs }\nlet main = map (fun x -> x) [1, 2]").unwrap();
        let t = crate::thunk::thunk(&p);
        let (_, cs) = infer(&t).unwrap();
        let (q, r) = elaborate(&t, &cs, &Strategies::default());
        assert!(program_alpha_eq(&t, &q));
        assert!(r.is_empty());
    }

    #[test]
    fn toy_fuses_option() {
        let (p, q, r) = run(
            "let foo x = x * 10\nlet bar = 3 > 2\n\
             let consumer x = foo (case x of { Some v -> v + 1; None -> 0 })\n\
             let producer y = if y then Some 123 else None\nlet main = consumer (producer bar)",
        );
        assert_eq!(r.fused_ctors.len(), 2);
        assert_eq!(r.collapsed_cases.len(), 1);
        assert!(check_pairing(&r));
        assert!(q.is_closed());
        assert_eq!(diff_check_with(&p, &q, &[], 10_000).verdict, Verdict::Equal);
    }

    #[test]
    fn self_feeding_case_is_a_cycle() {
        let (p, q, r) = run(
            "let rec loop xs = case xs of { x :: t -> loop (x :: t); [] -> 0 }\nlet main = loop []",
        );
        assert!(r.skipped.iter().any(|(_, why)| *why == SkipReason::Cycle), "{r:?}");
        assert!(q.is_closed());
        assert_eq!(diff_check_with(&p, &q, &[], 10_000).verdict, Verdict::Equal);
    }

    #[test]
    fn sum_enumerate_sound() {
        let (p, q, r) = run(
            "let rec enumerate n = if n >= 0 then n :: enumerate (n - 1) else []\n\
             let rec sum xs = case xs of { [] -> 0; x :: xs -> x + sum xs }\nlet main x = sum (enumerate x)",
        );
        assert_eq!(r.fused_ctors.len(), 2);
        let args = parse_args("10").unwrap();
        let d = diff_check_with(&p, &q, &args, 100_000);
        assert_eq!(d.verdict, Verdict::Equal);
        // only the thunks' unit arguments remain; no list cell is built
        assert!(!crate::pretty::pretty(&q).contains("::"));
    }
}
