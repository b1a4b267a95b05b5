//! Surface-syntax printer. Output re-parses to an α-equivalent program.

use std::fmt::Write;

use crate::syntax::*;

// precedence levels, loosest first
const OPEN: u8 = 0;
const CMP: u8 = 1;
const CONS_L: u8 = 2;
const ADD: u8 = 3;
const MUL: u8 = 4;
const APP: u8 = 5;
const ATOM: u8 = 6;

fn infix(op: &str) -> Option<(&'static str, u8, u8, u8)> {
    // (symbol, own level, left operand level, right operand level)
    Some(match op {
        "#ge" => (">=", CMP, CONS_L, CONS_L),
        "#gt" => (">", CMP, CONS_L, CONS_L),
        "#add" => ("+", ADD, ADD, MUL),
        "#sub" => ("-", ADD, ADD, MUL),
        "#mul" => ("*", MUL, MUL, APP),
        _ => return None,
    })
}

pub fn pretty_term(t: &Term) -> String {
    let mut s = String::new();
    go(t, OPEN, &mut s);
    s
}

pub fn pretty(p: &Program) -> String {
    let mut s = String::new();
    for d in &p.defs {
        def(&d.name, d.recursive, &d.body, &mut s);
        s.push('\n');
    }
    def("main", false, &p.main, &mut s);
    s.push('\n');
    s
}

fn def(name: &str, rec: bool, body: &Term, s: &mut String) {
    let (ps, b) = peel_lams(body);
    s.push_str(if rec { "let rec " } else { "let " });
    s.push_str(name);
    for p in ps {
        s.push(' ');
        s.push_str(p);
    }
    s.push_str(" = ");
    go(b, OPEN, s);
}

fn paren(need: bool, s: &mut String, f: impl FnOnce(&mut String)) {
    if need {
        s.push('(');
    }
    f(s);
    if need {
        s.push(')');
    }
}

fn pattern(arm: &Arm, s: &mut String) {
    match (arm.tag.as_str(), arm.binders.as_slice()) {
        (CONS, [x, xs]) => {
            let _ = write!(s, "{x} :: {xs}");
        }
        (NIL, []) => s.push_str("[]"),
        (UNIT, []) => s.push_str("()"),
        (tag, bs) => {
            s.push_str(tag);
            for b in bs {
                s.push(' ');
                s.push_str(b);
            }
        }
    }
}

fn go(t: &Term, lvl: u8, s: &mut String) {
    match &t.kind {
        Kind::Var(v) => s.push_str(if v == "#error" { "error" } else { v }),
        Kind::Lit(v) => {
            if *v < 0 {
                let _ = write!(s, "(0 - {})", v.unsigned_abs());
            } else {
                let _ = write!(s, "{v}");
            }
        }
        Kind::App(f, a) => {
            if let Kind::Lam { param: x, body, .. } = &f.kind {
                if x != UNIT_PARAM {
                    return paren(lvl > OPEN, s, |s| {
                        let _ = write!(s, "let {x} = ");
                        go(a, OPEN, s);
                        s.push_str(" in ");
                        go(body, OPEN, s);
                    });
                }
            }
            if let Kind::App(op, l) = &f.kind {
                if let Some((sym, own, ll, rl)) = op.as_var().and_then(infix) {
                    return paren(lvl > own, s, |s| {
                        go(l, ll, s);
                        let _ = write!(s, " {sym} ");
                        go(a, rl, s);
                    });
                }
            }
            paren(lvl > APP, s, |s| {
                go(f, APP, s);
                s.push(' ');
                go(a, ATOM, s);
            })
        }
        Kind::Ctor(tag, args) => match (tag.as_str(), args.as_slice()) {
            (CONS, [h, tl]) => paren(lvl > CONS_L, s, |s| {
                go(h, ADD, s);
                s.push_str(" :: ");
                go(tl, CONS_L, s);
            }),
            (NIL, []) => s.push_str("[]"),
            (UNIT, []) => s.push_str("()"),
            (_, []) => s.push_str(tag),
            _ => paren(lvl > APP, s, |s| {
                s.push_str(tag);
                for a in args {
                    s.push(' ');
                    go(a, ATOM, s);
                }
            }),
        },
        Kind::Lam { .. } => paren(lvl > OPEN, s, |s| {
            let (ps, b) = peel_lams(t);
            s.push_str("fun");
            for p in ps {
                s.push(' ');
                s.push_str(p);
            }
            s.push_str(" -> ");
            go(b, OPEN, s);
        }),
        Kind::Case { scrut, arms, .. } => paren(lvl > OPEN, s, |s| {
            let t_arm = arms.iter().find(|a| a.tag == TRUE);
            let f_arm = arms.iter().find(|a| a.tag == FALSE);
            if let (2, Some(ta), Some(fa)) = (arms.len(), t_arm, f_arm) {
                s.push_str("if ");
                go(scrut, OPEN, s);
                s.push_str(" then ");
                go(&ta.body, OPEN, s);
                s.push_str(" else ");
                go(&fa.body, OPEN, s);
                return;
            }
            s.push_str("case ");
            go(scrut, OPEN, s);
            s.push_str(" of { ");
            for (i, arm) in arms.iter().enumerate() {
                if i > 0 {
                    s.push_str("; ");
                }
                pattern(arm, s);
                s.push_str(" -> ");
                go(&arm.body, OPEN, s);
            }
            s.push_str(" }");
        }),
        Kind::LetRec(n, a, b) => paren(lvl > OPEN, s, |s| {
            let (ps, body) = peel_lams(a);
            let _ = write!(s, "let rec {n}");
            for p in ps {
                s.push(' ');
                s.push_str(p);
            }
            s.push_str(" = ");
            go(body, OPEN, s);
            s.push_str(" in ");
            go(b, OPEN, s);
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    #[test]
    fn trivial_forms() {
        let mut g = IdGen(0);
        let x = g.var("x");
        assert_eq!(pretty_term(&g.lam("x", x)), "fun x -> x");
        let one = g.lit(1);
        let nil = g.ctor(NIL, vec![]);
        assert_eq!(pretty_term(&g.ctor(CONS, vec![one, nil])), "1 :: []");
    }

    #[test]
    fn precedence_round_trips() {
        for src in [
            "let main = (1 + 2) * 3",
            "let main = 1 - (2 - 3)",
            "let main = (1 :: []) :: []",
            "let main = (fun x -> x) 1",
            "let f x = x let main = f (f 1) + f 2",
            "let main = Some (1 + 2)",
            "let main = (if True then 1 else 2) + 1",
            "let main = let x = 1 in let y = x in y",
            "let main = (fun () -> 1) ()",
            "let main = let rec f n = if n > 0 then f (n - 1) else 0 in f 3",
            "let main = case Some 1 of { Some x -> x; None -> 0 }",
            "let main = 1 >= 2",
        ] {
            let p = parse(src).unwrap();
            let printed = pretty(&p);
            let q = parse(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
            assert!(program_alpha_eq(&p, &q), "{src} => {printed}");
        }
    }
}
