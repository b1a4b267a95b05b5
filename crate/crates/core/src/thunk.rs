//! Thunking of case arms and its inverse.
//!
//! `case s of { cᵢ x̄ᵢ -> tᵢ }` becomes `(case s of { cᵢ x̄ᵢ -> fun ā -> tᵢ }) ā`
//! where `ā` are the arms' captured local variables in sorted order (a single
//! `()` when there are none). Fusion can then move an arm body to a
//! constructor site without changing evaluation order or leaking variables.

use std::collections::{BTreeSet, HashSet};

use crate::syntax::*;

pub fn thunk(p: &Program) -> Program {
    let tops = p.top_names();
    let mut g = IdGen::for_program(p);
    let defs = p
        .defs
        .iter()
        .map(|d| Def { name: d.name.clone(), recursive: d.recursive, body: thunk_term(&d.body, &tops, &mut g) })
        .collect();
    let main = thunk_term(&p.main, &tops, &mut g);
    Program { defs, main, next_id: g.0 }
}

fn thunk_term(t: &Term, tops: &HashSet<Name>, g: &mut IdGen) -> Term {
    let kind = match &t.kind {
        Kind::Var(_) | Kind::Lit(_) => return t.clone(),
        Kind::App(a, b) => Kind::App(Box::new(thunk_term(a, tops, g)), Box::new(thunk_term(b, tops, g))),
        Kind::Ctor(tag, args) => Kind::Ctor(tag.clone(), args.iter().map(|a| thunk_term(a, tops, g)).collect()),
        Kind::Lam { param, body, thunk } => {
            Kind::Lam { param: param.clone(), body: Box::new(thunk_term(body, tops, g)), thunk: *thunk }
        }
        Kind::LetRec(n, a, b) => {
            Kind::LetRec(n.clone(), Box::new(thunk_term(a, tops, g)), Box::new(thunk_term(b, tops, g)))
        }
        Kind::Case { scrut, arms, .. } => return thunk_case(t, scrut, arms, tops, g),
    };
    Term { id: t.id, span: t.span, kind }
}

fn thunk_case(t: &Term, scrut: &Term, arms: &[Arm], tops: &HashSet<Name>, g: &mut IdGen) -> Term {
    let scrut = thunk_term(scrut, tops, g);
    let bodies: Vec<Term> = arms.iter().map(|a| thunk_term(&a.body, tops, g)).collect();
    let mut captured = BTreeSet::new();
    for (arm, body) in arms.iter().zip(&bodies) {
        for v in body.free_vars() {
            if !arm.binders.contains(&v) && !tops.contains(&v) {
                captured.insert(v);
            }
        }
    }
    let captured: Vec<Name> = captured.into_iter().collect();
    let new_arms = arms
        .iter()
        .zip(bodies)
        .map(|(arm, mut body)| {
            // a pattern binder named like a captured variable would be
            // shadowed by the new lambda; rename it first
            let mut binders = arm.binders.clone();
            for b in binders.iter_mut() {
                if captured.contains(b) {
                    let avoid = |n: &str| {
                        captured.iter().any(|c| c == n)
                            || body.count_free(n) > 0
                            || arm.binders.iter().any(|o| o == n)
                            || tops.contains(n)
                    };
                    let nb = fresh_name(b, &avoid);
                    body = rename_free(&body, b, &nb);
                    *b = nb;
                }
            }
            Arm { tag: arm.tag.clone(), binders, body: wrap(&captured, body, g) }
        })
        .collect();
    let case = Term {
        id: t.id,
        span: t.span,
        kind: Kind::Case {
            scrut: Box::new(scrut),
            arms: new_arms,
            mark: Some(ThunkMark { captured: captured.clone(), introduced_by_pass: true }),
        },
    };
    if captured.is_empty() {
        let u = g.unit();
        g.app(case, u)
    } else {
        let args: Vec<Term> = captured.iter().map(|c| g.var(c)).collect();
        g.apps(case, args)
    }
}

fn wrap(captured: &[Name], body: Term, g: &mut IdGen) -> Term {
    let params: Vec<&str> = if captured.is_empty() { vec![UNIT_PARAM] } else { captured.iter().map(|s| s.as_str()).collect() };
    params.iter().rev().fold(body, |acc, p| {
        g.mk(Kind::Lam { param: p.to_string(), body: Box::new(acc), thunk: true })
    })
}

/// Strips `n` leading thunk lambdas whose params are `params`.
fn strip<'t>(body: &'t Term, params: &[&str]) -> Option<&'t Term> {
    let mut cur = body;
    for p in params {
        match &cur.kind {
            Kind::Lam { param, body, thunk: true } if param == p => cur = body,
            _ => return None,
        }
    }
    Some(cur)
}

/// Reverts marked cases that are still in thunked form.
pub fn unthunk(p: &Program) -> Program {
    let mut g = IdGen::for_program(p);
    let defs = p
        .defs
        .iter()
        .map(|d| Def { name: d.name.clone(), recursive: d.recursive, body: unthunk_term(&d.body, &mut g) })
        .collect();
    let main = unthunk_term(&p.main, &mut g);
    Program { defs, main, next_id: g.0 }
}

fn try_revert(t: &Term, g: &mut IdGen) -> Option<Term> {
    let (head, args) = t.spine();
    let Kind::Case { scrut, arms, mark: Some(mark) } = &head.kind else { return None };
    let params: Vec<&str> = if mark.captured.is_empty() {
        vec![UNIT_PARAM]
    } else {
        mark.captured.iter().map(|s| s.as_str()).collect()
    };
    if args.len() != params.len() {
        return None;
    }
    // arguments must be atoms so substituting them cannot change evaluation
    let atom_ok = |a: &Term| matches!(a.kind, Kind::Var(_) | Kind::Lit(_)) || a.is_unit();
    if !args.iter().all(|a| atom_ok(a)) {
        return None;
    }
    let mut new_arms = Vec::with_capacity(arms.len());
    for arm in arms {
        let mut body = strip(&arm.body, &params)?.clone();
        for (p, a) in params.iter().zip(&args) {
            if *p == UNIT_PARAM {
                continue;
            }
            if a.is_var(p) {
                continue;
            }
            if let Some(v) = a.as_var() {
                if arm.binders.iter().any(|b| b == v) {
                    return None;
                }
            }
            body = subst(&body, p, a, g);
        }
        new_arms.push(Arm { tag: arm.tag.clone(), binders: arm.binders.clone(), body });
    }
    Some(Term { id: head.id, span: head.span, kind: Kind::Case { scrut: scrut.clone(), arms: new_arms, mark: None } })
}

fn unthunk_term(t: &Term, g: &mut IdGen) -> Term {
    let t = match try_revert(t, g) {
        Some(r) => r,
        None => t.clone(),
    };
    let kind = match &t.kind {
        Kind::Var(_) | Kind::Lit(_) => return t,
        Kind::App(a, b) => Kind::App(Box::new(unthunk_term(a, g)), Box::new(unthunk_term(b, g))),
        Kind::Ctor(tag, args) => Kind::Ctor(tag.clone(), args.iter().map(|a| unthunk_term(a, g)).collect()),
        Kind::Lam { param, body, thunk } => {
            Kind::Lam { param: param.clone(), body: Box::new(unthunk_term(body, g)), thunk: *thunk }
        }
        Kind::LetRec(n, a, b) => Kind::LetRec(n.clone(), Box::new(unthunk_term(a, g)), Box::new(unthunk_term(b, g))),
        Kind::Case { scrut, arms, mark } => Kind::Case {
            scrut: Box::new(unthunk_term(scrut, g)),
            arms: arms
                .iter()
                .map(|a| Arm { tag: a.tag.clone(), binders: a.binders.clone(), body: unthunk_term(&a.body, g) })
                .collect(),
            mark: mark.clone(),
        },
    };
    Term { id: t.id, span: t.span, kind }
}

/// Number of arguments a marked case is applied to.
pub fn mark_arity(m: &ThunkMark) -> usize {
    m.captured.len().max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{eval_profiled, Verdict};
    use crate::parse::{parse, parse_args};
    use crate::pretty::pretty;

    const MAP_MAP: &str = "let rec map f xs = case xs of { [] -> []; x :: xs -> f x :: map f xs }\n\
        let incr x = x + 1\nlet double x = x * 2\nlet main ls = map incr (map double ls)";

    fn marks(p: &Program) -> Vec<(NodeId, ThunkMark)> {
        let mut out = Vec::new();
        let mut visit = |t: &Term| {
            if let Kind::Case { mark: Some(m), .. } = &t.kind {
                out.push((t.id, m.clone()));
            }
        };
        p.defs.iter().for_each(|d| d.body.walk(&mut visit));
        p.main.walk(&mut visit);
        out
    }

    #[test]
    fn unit_thunk_for_closed_arms() {
        let p = parse("let foo x y = if x then case y of { () -> error () } else 0\nlet main x = foo x ()").unwrap();
        let t = thunk(&p);
        let printed = pretty(&t);
        assert!(printed.contains("(case y of { () -> fun () -> error () }) ()"), "{printed}");
    }

    #[test]
    fn map_arm_captures_f() {
        let p = parse(MAP_MAP).unwrap();
        let t = thunk(&p);
        let ms = marks(&t);
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].1.captured, vec!["f".to_string()]);
        assert!(t.is_closed());
        assert!(t.duplicate_id().is_none());
    }

    #[test]
    fn round_trip_and_cost() {
        let p = parse(MAP_MAP).unwrap();
        let t = thunk(&p);
        let u = unthunk(&t);
        assert!(program_alpha_eq(&p, &u), "{}", pretty(&u));

        let args = parse_args("[1, 2, 3, 4]").unwrap();
        let (a, hits) = eval_profiled(&p, &args, 100_000);
        let (b, _) = eval_profiled(&t, &args, 100_000);
        assert_eq!(a.finished(), b.finished());
        assert_eq!(a.counters.ctor_allocs, b.counters.ctor_allocs);
        let expected_extra: u64 = marks(&t)
            .iter()
            .map(|(id, m)| hits.get(id).copied().unwrap_or(0) * mark_arity(m) as u64)
            .sum();
        assert_eq!(b.counters.steps, a.counters.steps + expected_extra);
        let d = crate::interp::diff_check_with(&p, &t, &args, 100_000);
        assert_eq!(d.verdict, Verdict::Equal);
    }

    #[test]
    fn shadowed_binder_is_renamed() {
        // arm 1 binds x, arm 2 captures the outer x
        let p = parse("let main x = case Some 1 of { Some x -> x; None -> x }").unwrap();
        let t = thunk(&p);
        let args = parse_args("7").unwrap();
        let d = crate::interp::diff_check_with(&p, &t, &args, 1000);
        assert_eq!(d.verdict, Verdict::Equal);
        assert!(program_alpha_eq(&p, &unthunk(&t)));
    }

    #[test]
    fn lambda_arms_still_wrapped() {
        let p = parse("let main = case True of { True -> fun y -> y; False -> fun y -> y }").unwrap();
        let t = thunk(&p);
        assert_eq!(marks(&t).len(), 1);
        assert!(program_alpha_eq(&p, &unthunk(&t)));
    }
}
