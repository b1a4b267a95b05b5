//! Seeded random programs for differential testing.
//!
//! Programs are built from a small library of list/option functions that
//! recurse structurally, glued together by a random, well-typed `main`.
//! Integer producers only ever count down from a small literal, so every
//! generated program terminates.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::parse::parse;
use crate::syntax::Program;

/// Upper bound accepted for the `size` argument.
pub const MAX_SIZE: usize = 200;
/// Step budget every generated program is designed to fit in.
pub const STEP_BUDGET: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Lib {
    Map,
    Sum,
    Len,
    Upto,
    Filter,
    Head,
    FromOpt,
    Append,
    Rev,
    Fold,
    Incr,
    Dbl,
    Add,
}

impl Lib {
    fn source(self) -> &'static str {
        match self {
            Lib::Map => "let rec map f xs = case xs of { [] -> []; x :: xs -> f x :: map f xs }",
            Lib::Sum => "let rec sum xs = case xs of { [] -> 0; x :: xs -> x + sum xs }",
            Lib::Len => "let rec len xs = case xs of { [] -> 0; x :: xs -> 1 + len xs }",
            Lib::Upto => "let rec upto n = if n > 0 then n :: upto (n - 1) else []",
            Lib::Filter => {
                "let rec filter p xs = case xs of { [] -> []; x :: xs -> if p x then x :: filter p xs else filter p xs }"
            }
            Lib::Head => "let head xs = case xs of { [] -> None; x :: xs -> Some x }",
            Lib::FromOpt => "let from d o = case o of { None -> d; Some v -> v }",
            Lib::Append => "let rec append xs ys = case xs of { [] -> ys; x :: xs -> x :: append xs ys }",
            Lib::Rev => "let rec rev xs acc = case xs of { [] -> acc; x :: xs -> rev xs (x :: acc) }",
            Lib::Fold => "let rec fold f z xs = case xs of { [] -> z; x :: xs -> f x (fold f z xs) }",
            Lib::Incr => "let incr x = x + 1",
            Lib::Dbl => "let dbl x = x * 2",
            Lib::Add => "let add a b = a + b",
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    used: BTreeSet<Lib>,
    ints: Vec<String>,
    lists: Vec<String>,
    fresh: usize,
}

impl Gen {
    fn name(&mut self, base: &str) -> String {
        self.fresh += 1;
        format!("{base}{}", self.fresh)
    }

    fn lib(&mut self, l: Lib, call: String) -> String {
        self.used.insert(l);
        call
    }

    fn small(&mut self) -> i64 {
        self.rng.gen_range(0..10)
    }

    fn int(&mut self, d: u32) -> String {
        if d == 0 || (d < 3 && self.rng.gen_bool(0.2)) {
            return match self.ints.choose(&mut self.rng) {
                Some(v) if self.rng.gen_bool(0.6) => v.clone(),
                _ => self.small().to_string(),
            };
        }
        match self.rng.gen_range(0..11) {
            0 => format!("({} + {})", self.int(d - 1), self.int(d - 1)),
            1 => format!("({} - {})", self.int(d - 1), self.int(d - 1)),
            2 => {
                let l = self.list(d - 1);
                self.lib(Lib::Sum, format!("(sum {l})"))
            }
            3 => {
                let l = self.list(d - 1);
                self.lib(Lib::Len, format!("(len {l})"))
            }
            4 => {
                let (dflt, l) = (self.int(d - 1), self.list(d - 1));
                self.used.insert(Lib::Head);
                self.lib(Lib::FromOpt, format!("(from {dflt} (head {l}))"))
            }
            5 => {
                let (f, z, l) = (self.fun2(d - 1), self.int(d - 1), self.list(d - 1));
                self.lib(Lib::Fold, format!("(fold {f} {z} {l})"))
            }
            6 => format!("(if {} then {} else {})", self.bool(d - 1), self.int(d - 1), self.int(d - 1)),
            7 => {
                let o = self.opt(d - 1);
                let none = self.int(d - 1);
                let v = self.name("v");
                self.ints.push(v.clone());
                let some = self.int(d - 1);
                self.ints.pop();
                format!("(case {o} of {{ None -> {none}; Some {v} -> {some} }})")
            }
            8 => {
                let l = self.list(d - 1);
                let nil = self.int(d - 1);
                let (x, xs) = (self.name("x"), self.name("xs"));
                self.ints.push(x.clone());
                self.lists.push(xs.clone());
                let cons = self.int(d - 1);
                self.ints.pop();
                self.lists.pop();
                format!("(case {l} of {{ [] -> {nil}; {x} :: {xs} -> {cons} }})")
            }
            9 => {
                let x = self.name("n");
                let rhs = self.int(d - 1);
                self.ints.push(x.clone());
                let body = self.int(d - 1);
                self.ints.pop();
                format!("(let {x} = {rhs} in {body})")
            }
            _ => format!("({} {})", self.fun(d - 1), self.int(d - 1)),
        }
    }

    fn list(&mut self, d: u32) -> String {
        if d == 0 || self.rng.gen_bool(0.15) {
            return match self.lists.choose(&mut self.rng) {
                Some(v) if self.rng.gen_bool(0.5) => v.clone(),
                _ => {
                    let n = self.rng.gen_range(0..5);
                    let items: Vec<String> = (0..n).map(|_| self.small().to_string()).collect();
                    format!("[{}]", items.join(", "))
                }
            };
        }
        match self.rng.gen_range(0..8) {
            0 => format!("({} :: {})", self.int(d - 1), self.list(d - 1)),
            1 => {
                let (f, l) = (self.fun(d - 1), self.list(d - 1));
                self.lib(Lib::Map, format!("(map {f} {l})"))
            }
            2 => {
                let (p, l) = (self.pred(d - 1), self.list(d - 1));
                self.lib(Lib::Filter, format!("(filter {p} {l})"))
            }
            3 => {
                let n = self.rng.gen_range(0..7);
                self.lib(Lib::Upto, format!("(upto {n})"))
            }
            4 => {
                let (a, b) = (self.list(d - 1), self.list(d - 1));
                self.lib(Lib::Append, format!("(append {a} {b})"))
            }
            5 => {
                let l = self.list(d - 1);
                self.lib(Lib::Rev, format!("(rev {l} [])"))
            }
            6 => {
                // a list consumed twice
                let x = self.name("ys");
                let rhs = self.list(d - 1);
                self.lists.push(x.clone());
                let body = self.list(d - 1);
                self.lists.pop();
                format!("(let {x} = {rhs} in {body})")
            }
            _ => format!("(if {} then {} else {})", self.bool(d - 1), self.list(d - 1), self.list(d - 1)),
        }
    }

    fn opt(&mut self, d: u32) -> String {
        match self.rng.gen_range(0..3) {
            0 => "None".into(),
            1 => format!("(Some {})", self.int(d)),
            _ => {
                let l = self.list(d);
                self.lib(Lib::Head, format!("(head {l})"))
            }
        }
    }

    fn bool(&mut self, d: u32) -> String {
        match self.rng.gen_range(0..3) {
            0 => format!("({} > {})", self.int(d), self.int(d)),
            1 => format!("({} >= {})", self.int(d), self.int(d)),
            _ => format!("({} {})", self.pred(d), self.int(d)),
        }
    }

    fn fun(&mut self, d: u32) -> String {
        match self.rng.gen_range(0..4) {
            0 => self.lib(Lib::Incr, "incr".into()),
            1 => self.lib(Lib::Dbl, "dbl".into()),
            2 => {
                let a = self.int(d);
                self.lib(Lib::Add, format!("(add {a})"))
            }
            _ => {
                let y = self.name("y");
                self.ints.push(y.clone());
                let body = self.int(d);
                self.ints.pop();
                format!("(fun {y} -> {body})")
            }
        }
    }

    fn fun2(&mut self, d: u32) -> String {
        if self.rng.gen_bool(0.5) {
            return self.lib(Lib::Add, "add".into());
        }
        let (a, b) = (self.name("a"), self.name("b"));
        self.ints.push(a.clone());
        self.ints.push(b.clone());
        let body = self.int(d);
        self.ints.truncate(self.ints.len() - 2);
        format!("(fun {a} {b} -> {body})")
    }

    fn pred(&mut self, d: u32) -> String {
        let y = self.name("y");
        self.ints.push(y.clone());
        let c = self.int(d);
        self.ints.pop();
        format!("(fun {y} -> {y} > {c})")
    }
}

/// The source text of the program for `seed`; see [`gen_program`].
pub fn gen_source(seed: u64, size: usize) -> String {
    let size = size.min(MAX_SIZE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..64u32 {
        let depth = 4u32.saturating_sub(attempt / 16).max(1);
        let mut g = Gen { rng, used: BTreeSet::new(), ints: Vec::new(), lists: Vec::new(), fresh: 0 };
        let main = g.int(depth);
        let mut src: String = g.used.iter().map(|l| format!("{}\n", l.source())).collect();
        src.push_str(&format!("let main = {main}\n"));
        rng = g.rng;
        let p = parse(&src).expect("generated source parses");
        if p.size() <= size {
            return src;
        }
    }
    "let main = 0\n".into()
}

/// A closed, terminating program of at most `size` nodes, determined by
/// `seed`.
pub fn gen_program(seed: u64, size: usize) -> Program {
    parse(&gen_source(seed, size)).expect("generated source parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::eval;

    #[test]
    fn deterministic() {
        assert_eq!(gen_source(7, 120), gen_source(7, 120));
        let distinct: BTreeSet<String> = (0..20).map(|s| gen_source(s, 120)).collect();
        assert!(distinct.len() > 15);
    }

    #[test]
    fn closed_small_and_terminating() {
        for seed in 0..200 {
            let p = gen_program(seed, MAX_SIZE);
            assert!(p.is_closed(), "seed {seed}");
            assert!(p.size() <= MAX_SIZE, "seed {seed}");
            let r = eval(&p, STEP_BUDGET);
            assert!(r.finished().is_some(), "seed {seed}: {:?}\n{}", r.outcome, gen_source(seed, MAX_SIZE));
        }
    }
}
