//! Call-by-value reference interpreter with allocation counters.
//!
//! A CEK-style machine: the continuation is an explicit stack, so deep
//! recursion in the object program never overflows the host stack. Each β,
//! case match and primitive operation is one step; each evaluated `Ctor`
//! node is one constructor allocation and each evaluated `Lam` one closure
//! allocation. Primitive results (including booleans from comparisons) and
//! input arguments are not counted.

use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use serde::Serialize;

use crate::syntax::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EvalCounters {
    pub steps: u64,
    pub ctor_allocs: u64,
    pub closure_allocs: u64,
}

/// A result value detached from the running machine.
#[derive(Clone, Debug)]
pub enum Value {
    Ctor(Name, Vec<Value>),
    Closure { param: Name, body: Box<Term> },
    Int(i64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Finished(Value),
    StepLimit,
    RuntimeError(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub outcome: Outcome,
    pub counters: EvalCounters,
}

impl EvalResult {
    pub fn finished(&self) -> Option<&Value> {
        match &self.outcome {
            Outcome::Finished(v) => Some(v),
            _ => None,
        }
    }
}

/// First-order equality: any two closures compare equal.
impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Closure { .. }, Value::Closure { .. }) => true,
            (Value::Ctor(t1, a1), Value::Ctor(t2, a2)) => t1 == t2 && a1 == a2,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    /// First-order rendering; closures print as `<fun>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Closure { .. } => write!(f, "<fun>"),
            Value::Ctor(tag, args) => {
                if tag == CONS || tag == NIL {
                    let mut items = Vec::new();
                    let mut cur = self;
                    loop {
                        match cur {
                            Value::Ctor(t, a) if t == CONS && a.len() == 2 => {
                                items.push(a[0].to_string());
                                cur = &a[1];
                            }
                            Value::Ctor(t, a) if t == NIL && a.is_empty() => {
                                return write!(f, "[{}]", items.join(", "));
                            }
                            other => {
                                items.push(format!("..{other}"));
                                return write!(f, "[{}]", items.join(", "));
                            }
                        }
                    }
                }
                if tag == UNIT && args.is_empty() {
                    return write!(f, "()");
                }
                if args.is_empty() {
                    return write!(f, "{tag}");
                }
                write!(f, "({tag}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// machine

#[derive(Clone)]
enum RVal<'a> {
    Int(i64),
    Ctor(Rc<(&'a str, Vec<RVal<'a>>)>),
    Clo(Rc<Clo<'a>>),
    /// Primitive, possibly partially applied.
    Prim(&'a str, Option<Box<RVal<'a>>>),
}

struct Clo<'a> {
    param: &'a str,
    body: &'a Term,
    env: Env<'a>,
    self_name: Option<&'a str>,
}

type Env<'a> = Option<Rc<EnvNode<'a>>>;

struct EnvNode<'a> {
    name: &'a str,
    val: RVal<'a>,
    next: Env<'a>,
}

fn extend<'a>(env: &Env<'a>, name: &'a str, val: RVal<'a>) -> Env<'a> {
    Some(Rc::new(EnvNode { name, val, next: env.clone() }))
}

fn lookup<'a>(env: &Env<'a>, name: &str) -> Option<RVal<'a>> {
    let mut cur = env.as_ref();
    while let Some(n) = cur {
        if n.name == name {
            return Some(n.val.clone());
        }
        cur = n.next.as_ref();
    }
    None
}

enum Frame<'a> {
    AppArg { arg: &'a Term, env: Env<'a> },
    AppCall { fun: RVal<'a> },
    CtorArgs { tag: &'a str, rest: &'a [Term], done: Vec<RVal<'a>>, env: Env<'a> },
    Case { arms: &'a [Arm], env: Env<'a> },
}

enum Ctl<'a> {
    Eval(&'a Term, Env<'a>),
    Ret(RVal<'a>),
}

struct Machine<'a> {
    globals: HashMap<&'a str, RVal<'a>>,
    counters: EvalCounters,
    limit: u64,
    case_hits: Option<HashMap<NodeId, u64>>,
}

enum Stop {
    Limit,
    Error(String),
}

fn prim_arity(op: &str) -> Option<usize> {
    match op {
        "#add" | "#sub" | "#mul" | "#ge" | "#gt" => Some(2),
        "#error" => Some(1),
        _ => None,
    }
}

static TRUE_TAG: &str = TRUE;
static FALSE_TAG: &str = FALSE;

impl<'a> Machine<'a> {
    fn step(&mut self) -> Result<(), Stop> {
        self.counters.steps += 1;
        if self.counters.steps > self.limit {
            Err(Stop::Limit)
        } else {
            Ok(())
        }
    }

    fn run(&mut self, t: &'a Term, env: Env<'a>) -> Result<RVal<'a>, Stop> {
        let mut stack: Vec<Frame<'a>> = Vec::new();
        let mut ctl = Ctl::Eval(t, env);
        loop {
            ctl = match ctl {
                Ctl::Eval(t, env) => self.eval_node(t, env, &mut stack)?,
                Ctl::Ret(v) => match stack.pop() {
                    None => return Ok(v),
                    Some(Frame::AppArg { arg, env }) => {
                        stack.push(Frame::AppCall { fun: v });
                        Ctl::Eval(arg, env)
                    }
                    Some(Frame::AppCall { fun }) => self.apply(fun, v)?,
                    Some(Frame::CtorArgs { tag, rest, mut done, env }) => {
                        done.push(v);
                        match rest.split_first() {
                            Some((next, rest)) => {
                                stack.push(Frame::CtorArgs { tag, rest, done, env: env.clone() });
                                Ctl::Eval(next, env)
                            }
                            None => {
                                self.counters.ctor_allocs += 1;
                                Ctl::Ret(RVal::Ctor(Rc::new((tag, done))))
                            }
                        }
                    }
                    Some(Frame::Case { arms, env }) => {
                        self.step()?;
                        let RVal::Ctor(c) = v else {
                            return Err(Stop::Error("case on a non-constructor value".into()));
                        };
                        let arm = arms
                            .iter()
                            .find(|a| a.tag == c.0)
                            .ok_or_else(|| Stop::Error(format!("no case arm for `{}`", c.0)))?;
                        if arm.binders.len() != c.1.len() {
                            return Err(Stop::Error(format!("arity mismatch on `{}`", c.0)));
                        }
                        let mut env = env;
                        for (b, v) in arm.binders.iter().zip(c.1.iter()) {
                            env = extend(&env, b, v.clone());
                        }
                        Ctl::Eval(&arm.body, env)
                    }
                },
            };
        }
    }

    fn eval_node(
        &mut self,
        t: &'a Term,
        env: Env<'a>,
        stack: &mut Vec<Frame<'a>>,
    ) -> Result<Ctl<'a>, Stop> {
        Ok(match &t.kind {
            Kind::Var(x) => {
                if let Some(v) = lookup(&env, x) {
                    Ctl::Ret(v)
                } else if let Some(v) = self.globals.get(x.as_str()) {
                    Ctl::Ret(v.clone())
                } else if prim_arity(x).is_some() {
                    Ctl::Ret(RVal::Prim(x, None))
                } else {
                    return Err(Stop::Error(format!("unbound variable `{x}`")));
                }
            }
            Kind::Lit(v) => Ctl::Ret(RVal::Int(*v)),
            Kind::Lam { param, body, .. } => {
                self.counters.closure_allocs += 1;
                Ctl::Ret(RVal::Clo(Rc::new(Clo { param, body, env, self_name: None })))
            }
            Kind::App(f, a) => {
                stack.push(Frame::AppArg { arg: a, env: env.clone() });
                Ctl::Eval(f, env)
            }
            Kind::Ctor(tag, args) => match args.split_first() {
                None => {
                    self.counters.ctor_allocs += 1;
                    Ctl::Ret(RVal::Ctor(Rc::new((tag, Vec::new()))))
                }
                Some((first, rest)) => {
                    stack.push(Frame::CtorArgs {
                        tag,
                        rest,
                        done: Vec::with_capacity(args.len()),
                        env: env.clone(),
                    });
                    Ctl::Eval(first, env)
                }
            },
            Kind::Case { scrut, arms, .. } => {
                if let Some(h) = &mut self.case_hits {
                    *h.entry(t.id).or_default() += 1;
                }
                stack.push(Frame::Case { arms, env: env.clone() });
                Ctl::Eval(scrut, env)
            }
            Kind::LetRec(name, bound, body) => {
                let Kind::Lam { param, body: lam_body, .. } = &bound.kind else {
                    return Err(Stop::Error(format!("recursive binding `{name}` is not a function")));
                };
                self.counters.closure_allocs += 1;
                let clo = Clo { param, body: lam_body, env: env.clone(), self_name: Some(name) };
                let env = extend(&env, name, RVal::Clo(Rc::new(clo)));
                Ctl::Eval(body, env)
            }
        })
    }

    fn apply(&mut self, f: RVal<'a>, arg: RVal<'a>) -> Result<Ctl<'a>, Stop> {
        match f {
            RVal::Clo(c) => {
                self.step()?;
                let mut env = c.env.clone();
                if let Some(n) = c.self_name {
                    env = extend(&env, n, RVal::Clo(c.clone()));
                }
                let env = extend(&env, c.param, arg);
                Ok(Ctl::Eval(c.body, env))
            }
            RVal::Prim(op, None) if prim_arity(op) == Some(2) => Ok(Ctl::Ret(RVal::Prim(op, Some(Box::new(arg))))),
            RVal::Prim(op, prev) => {
                self.step()?;
                self.prim(op, prev.map(|b| *b), arg).map(Ctl::Ret)
            }
            _ => Err(Stop::Error("application of a non-function".into())),
        }
    }

    fn prim(&mut self, op: &'a str, a: Option<RVal<'a>>, b: RVal<'a>) -> Result<RVal<'a>, Stop> {
        if op == "#error" {
            return Err(Stop::Error("error called".into()));
        }
        let (Some(RVal::Int(x)), RVal::Int(y)) = (a, b) else {
            return Err(Stop::Error(format!("primitive `{op}` applied to non-integers")));
        };
        let boolean = |c: bool| RVal::Ctor(Rc::new((if c { TRUE_TAG } else { FALSE_TAG }, Vec::new())));
        Ok(match op {
            "#add" => RVal::Int(x.wrapping_add(y)),
            "#sub" => RVal::Int(x.wrapping_sub(y)),
            "#mul" => RVal::Int(x.wrapping_mul(y)),
            "#ge" => boolean(x >= y),
            "#gt" => boolean(x > y),
            _ => return Err(Stop::Error(format!("unknown primitive `{op}`"))),
        })
    }
}

fn input_value(t: &Term) -> Result<RVal<'_>, String> {
    match &t.kind {
        Kind::Lit(v) => Ok(RVal::Int(*v)),
        Kind::Ctor(tag, args) => {
            let vs = args.iter().map(input_value).collect::<Result<Vec<_>, _>>()?;
            Ok(RVal::Ctor(Rc::new((tag.as_str(), vs))))
        }
        _ => Err("input arguments must be literal values".into()),
    }
}

fn detach(v: &RVal<'_>) -> Value {
    match v {
        RVal::Int(i) => Value::Int(*i),
        RVal::Ctor(c) => Value::Ctor(c.0.to_string(), c.1.iter().map(detach).collect()),
        RVal::Clo(c) => Value::Closure { param: c.param.to_string(), body: Box::new(c.body.clone()) },
        RVal::Prim(op, _) => Value::Closure { param: "_".into(), body: Box::new(IdGen(0).var(op)) },
    }
}

const STACK_BYTES: usize = 512 << 20;

fn run_program(
    p: &Program,
    args: &[Term],
    limit: u64,
    profile: bool,
) -> (EvalResult, Option<HashMap<NodeId, u64>>) {
    // Dropping or detaching very long lists recurses; give it room.
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(STACK_BYTES)
            .spawn_scoped(s, || run_inner(p, args, limit, profile))
            .expect("spawn evaluator thread")
            .join()
            .expect("evaluator thread panicked")
    })
}

fn run_inner(
    p: &Program,
    args: &[Term],
    limit: u64,
    profile: bool,
) -> (EvalResult, Option<HashMap<NodeId, u64>>) {
    let mut m = Machine {
        globals: HashMap::new(),
        counters: EvalCounters::default(),
        limit,
        case_hits: profile.then(HashMap::new),
    };
    let outcome = (|| -> Result<Value, Stop> {
        for d in &p.defs {
            // top-level functions reach every top-level name through globals
            let v = m.run(&d.body, None)?;
            m.globals.insert(&d.name, v);
        }
        let mut v = m.run(&p.main, None)?;
        for a in args {
            let a = input_value(a).map_err(Stop::Error)?;
            v = match m.apply(v, a)? {
                Ctl::Ret(v) => v,
                Ctl::Eval(t, env) => m.run(t, env)?,
            };
        }
        Ok(detach(&v))
    })();
    let outcome = match outcome {
        Ok(v) => Outcome::Finished(v),
        Err(Stop::Limit) => Outcome::StepLimit,
        Err(Stop::Error(e)) => Outcome::RuntimeError(e),
    };
    let counters = EvalCounters { steps: m.counters.steps.min(limit), ..m.counters };
    (EvalResult { outcome, counters }, m.case_hits.take())
}

pub fn eval(p: &Program, step_limit: u64) -> EvalResult {
    eval_with(p, &[], step_limit)
}

/// Evaluates `main` applied to `args` (literal values, not counted as
/// allocations).
pub fn eval_with(p: &Program, args: &[Term], step_limit: u64) -> EvalResult {
    run_program(p, args, step_limit, false).0
}

/// Like [`eval_with`], also returning how often each case node was entered.
pub fn eval_profiled(p: &Program, args: &[Term], step_limit: u64) -> (EvalResult, HashMap<NodeId, u64>) {
    let (r, h) = run_program(p, args, step_limit, true);
    (r, h.unwrap_or_default())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "detail")]
pub enum Verdict {
    Equal,
    Mismatch { original: String, optimized: String },
    OriginalDiverged,
    OptimizedDiverged { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffReport {
    pub verdict: Verdict,
    pub original: EvalCounters,
    pub optimized: EvalCounters,
}

impl DiffReport {
    /// Acceptable under the asymmetric contract.
    pub fn is_sound(&self) -> bool {
        matches!(self.verdict, Verdict::Equal | Verdict::OriginalDiverged)
    }
}

pub fn diff_check(original: &Program, optimized: &Program, step_limit: u64) -> DiffReport {
    diff_check_with(original, optimized, &[], step_limit)
}

/// Compares first-order results. An original that does not finish (step
/// limit or runtime error) imposes no obligation.
pub fn diff_check_with(original: &Program, optimized: &Program, args: &[Term], step_limit: u64) -> DiffReport {
    let a = eval_with(original, args, step_limit);
    let Some(va) = a.finished() else {
        let b = eval_with(optimized, args, step_limit);
        return DiffReport { verdict: Verdict::OriginalDiverged, original: a.counters, optimized: b.counters };
    };
    let b = eval_with(optimized, args, step_limit);
    let verdict = match &b.outcome {
        Outcome::Finished(vb) => {
            let (ra, rb) = (va.to_string(), vb.to_string());
            if ra == rb {
                Verdict::Equal
            } else {
                Verdict::Mismatch { original: ra, optimized: rb }
            }
        }
        Outcome::StepLimit => Verdict::OptimizedDiverged { reason: "step limit".into() },
        Outcome::RuntimeError(e) => Verdict::OptimizedDiverged { reason: e.clone() },
    };
    DiffReport { verdict, original: a.counters, optimized: b.counters }
}
