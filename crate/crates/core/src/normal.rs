//! Let-layout normalization for comparing programs.
//!
//! Two programs that differ only in how their `let`s are laid out (an atom
//! bound to a name vs. used in place, nested vs. sequenced lets) normalize to
//! α-equivalent programs.

use crate::syntax::*;

fn is_atom(t: &Term) -> bool {
    matches!(t.kind, Kind::Var(_) | Kind::Lit(_)) || t.is_unit()
}

fn step(t: &Term, g: &mut IdGen) -> Term {
    let kind = match &t.kind {
        Kind::Var(_) | Kind::Lit(_) => return t.clone(),
        Kind::App(f, a) => Kind::App(Box::new(step(f, g)), Box::new(step(a, g))),
        Kind::Ctor(tag, args) => Kind::Ctor(tag.clone(), args.iter().map(|a| step(a, g)).collect()),
        Kind::Lam { param, body, thunk } => Kind::Lam { param: param.clone(), body: Box::new(step(body, g)), thunk: *thunk },
        Kind::LetRec(n, a, b) => Kind::LetRec(n.clone(), Box::new(step(a, g)), Box::new(step(b, g))),
        Kind::Case { scrut, arms, mark } => Kind::Case {
            scrut: Box::new(step(scrut, g)),
            arms: arms.iter().map(|a| Arm { tag: a.tag.clone(), binders: a.binders.clone(), body: step(&a.body, g) }).collect(),
            mark: mark.clone(),
        },
    };
    let t = Term { id: t.id, span: t.span, kind };
    let Kind::App(f, e) = &t.kind else { return t };
    let Kind::Lam { param: x, body: c, .. } = &f.kind else { return t };
    if x == UNIT_PARAM {
        return t;
    }
    if is_atom(e) {
        return subst(c, x, e, g);
    }
    // let x = (let y = a in b) in c  ⇒  let y = a in let x = b in c
    if let Kind::App(f2, a) = &e.kind {
        if let Kind::Lam { param: y, body: b, .. } = &f2.kind {
            if y != UNIT_PARAM {
                let (y, b) = if y == x || c.count_free(y) > 0 {
                    let n = fresh_name(y, &|n: &str| n == x || c.count_free(n) > 0 || b.count_free(n) > 0);
                    (n.clone(), rename_free(b, y, &n))
                } else {
                    (y.clone(), (**b).clone())
                };
                let inner = g.let_(x, b, (**c).clone());
                return g.let_(&y, (**a).clone(), inner);
            }
        }
    }
    t
}

/// Inlines atom-bound lets and flattens nested lets, to a fixpoint.
pub fn normalize_lets(p: &Program) -> Program {
    let mut cur = p.clone();
    for _ in 0..100 {
        let mut g = IdGen::for_program(&cur);
        let defs = cur.defs.iter().map(|d| Def { name: d.name.clone(), recursive: d.recursive, body: step(&d.body, &mut g) }).collect();
        let main = step(&cur.main, &mut g);
        let next = Program { defs, main, next_id: g.0 };
        if program_alpha_eq(&next, &cur) {
            return next;
        }
        cur = next;
    }
    cur
}

/// α-equivalence modulo let layout.
pub fn golden_eq(a: &Program, b: &Program) -> bool {
    program_alpha_eq(&normalize_lets(a), &normalize_lets(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    #[test]
    fn atom_lets_vanish() {
        let a = parse("let main y = let v = 123 in v + y").unwrap();
        let b = parse("let main z = 123 + z").unwrap();
        assert!(golden_eq(&a, &b));
    }

    #[test]
    fn nested_lets_flatten() {
        let a = parse("let f u = u\nlet main y = let x = (let z = f y in f z) in f x").unwrap();
        let b = parse("let f u = u\nlet main y = let z = f y in let x = f z in f x").unwrap();
        assert!(golden_eq(&a, &b));
        let c = parse("let f u = u\nlet main y = let x = f y in f (f x)").unwrap();
        assert!(!golden_eq(&a, &c));
    }
}
