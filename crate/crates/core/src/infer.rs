//! Constraint generation: one fresh type variable per term, polarized
//! subtyping constraints Δ describing how producers flow into consumers.
//!
//! Primitives and the program boundary are modelled with an opaque
//! producer/consumer (`PosType::Opaque`, `NegType::Opaque`): data coming
//! from outside must never be treated as fusible, and data leaving the
//! program must be materialized.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::syntax::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TypeVar(pub u32);

impl fmt::Display for TypeVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Issues never-repeating type variables; remembers each variable's origin.
#[derive(Clone, Debug, Default)]
pub struct VarSupply {
    origins: Vec<Option<NodeId>>,
}

impl VarSupply {
    pub fn fresh_var(&mut self, origin: Option<NodeId>) -> TypeVar {
        self.origins.push(origin);
        TypeVar(u32::try_from(self.origins.len() - 1).expect("type variable overflow"))
    }

    pub fn origin(&self, v: TypeVar) -> Option<NodeId> {
        self.origins.get(v.0 as usize).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

pub type ShapeId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ShapeArm {
    pub tag: Name,
    pub binders: Vec<(Name, TypeVar)>,
    /// The arm body `l` (a thunk lambda after thunking).
    pub body: NodeId,
    /// Variable of the arm body.
    pub body_var: TypeVar,
}

/// `{ cᵢ⟨xᵢⱼ ↦ βᵢⱼ⟩ → lᵢ } : δ`, emitted once per case expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CaseShape {
    pub case_id: NodeId,
    pub arms: Vec<ShapeArm>,
    pub result: TypeVar,
}

impl CaseShape {
    pub fn arm(&self, tag: &str) -> Option<&ShapeArm> {
        self.arms.iter().find(|a| a.tag == tag)
    }

    pub fn same_tags(&self, other: &CaseShape) -> bool {
        self.arms.len() == other.arms.len() && self.arms.iter().all(|a| other.arm(&a.tag).is_some())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PosType {
    Var(TypeVar),
    Fun(TypeVar, TypeVar),
    Ctor(Name, Vec<TypeVar>),
    /// Produced outside the analysed program (inputs, primitive results).
    Opaque,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum NegType {
    Var(TypeVar),
    Fun(TypeVar, TypeVar),
    Case(ShapeId),
    /// Consumed outside the analysed program (output, primitive arguments).
    Opaque,
}

impl PosType {
    pub fn as_var(&self) -> Option<TypeVar> {
        match self {
            PosType::Var(v) => Some(*v),
            _ => None,
        }
    }
}

impl NegType {
    pub fn as_var(&self) -> Option<TypeVar> {
        match self {
            NegType::Var(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Constraint {
    pub lhs: PosType,
    pub rhs: NegType,
}

impl Constraint {
    pub fn new(lhs: PosType, rhs: NegType) -> Self {
        Constraint { lhs, rhs }
    }

    pub fn vv(a: TypeVar, b: TypeVar) -> Self {
        Constraint { lhs: PosType::Var(a), rhs: NegType::Var(b) }
    }
}

/// Δ together with everything needed to interpret it.
#[derive(Clone, Debug, Default)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
    pub shapes: Vec<CaseShape>,
    /// Variable of every term node.
    pub term_vars: HashMap<NodeId, TypeVar>,
    pub supply: VarSupply,
    /// Constraints emitted while inferring each node (indices into
    /// `constraints`), used to check self-containedness.
    pub emitted_at: HashMap<NodeId, Vec<usize>>,
}

impl ConstraintSet {
    pub fn shape(&self, id: ShapeId) -> &CaseShape {
        &self.shapes[id as usize]
    }

    pub fn render_pos(&self, t: &PosType) -> String {
        match t {
            PosType::Var(v) => v.to_string(),
            PosType::Fun(a, b) => format!("{a} -> {b}"),
            PosType::Ctor(c, args) => {
                format!("{c}<{}>", args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "))
            }
            PosType::Opaque => "?".into(),
        }
    }

    pub fn render_neg(&self, t: &NegType) -> String {
        match t {
            NegType::Var(v) => v.to_string(),
            NegType::Fun(a, b) => format!("{a} -> {b}"),
            NegType::Opaque => "?".into(),
            NegType::Case(s) => {
                let s = self.shape(*s);
                let arms: Vec<String> = s
                    .arms
                    .iter()
                    .map(|a| {
                        let bs: Vec<String> = a.binders.iter().map(|(x, v)| format!("{x}:{v}")).collect();
                        format!("{}<{}> -> #{}", a.tag, bs.join(", "), a.body)
                    })
                    .collect();
                format!("{{{}}} : {}", arms.join("; "), s.result)
            }
        }
    }

    /// JSON lines `{"lhs":…,"rhs":…}`.
    pub fn dump_json_lines(&self) -> String {
        let mut out = String::new();
        for c in &self.constraints {
            let line = serde_json::json!({"lhs": self.render_pos(&c.lhs), "rhs": self.render_neg(&c.rhs)});
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferError {
    #[error("unbound variable `{name}`")]
    UnboundVariable { name: Name, span: Option<Span> },
}

struct Infer {
    cs: ConstraintSet,
    env: Vec<(Name, TypeVar)>,
}

impl Infer {
    fn emit(&mut self, at: NodeId, c: Constraint) {
        self.cs.emitted_at.entry(at).or_default().push(self.cs.constraints.len());
        self.cs.constraints.push(c);
    }

    fn fresh(&mut self, origin: NodeId) -> TypeVar {
        self.cs.supply.fresh_var(Some(origin))
    }

    fn lookup(&self, x: &str) -> Option<TypeVar> {
        self.env.iter().rev().find(|(n, _)| n == x).map(|(_, v)| *v)
    }

    fn term(&mut self, t: &Term) -> Result<TypeVar, InferError> {
        let v = match &t.kind {
            Kind::Var(x) if is_prim(x) => {
                // each primitive occurrence is an opaque producer of functions
                let a = self.fresh(t.id);
                self.emit(t.id, Constraint::new(PosType::Opaque, NegType::Var(a)));
                a
            }
            Kind::Var(x) => self
                .lookup(x)
                .ok_or_else(|| InferError::UnboundVariable { name: x.clone(), span: t.span })?,
            Kind::Lit(_) => self.fresh(t.id),
            Kind::Lam { param, body, .. } => {
                let a = self.fresh(t.id);
                self.env.push((param.clone(), a));
                let b = self.term(body);
                self.env.pop();
                let b = b?;
                let g = self.fresh(t.id);
                self.emit(t.id, Constraint::new(PosType::Fun(a, b), NegType::Var(g)));
                g
            }
            Kind::App(f, x) => {
                let a1 = self.term(f)?;
                let a2 = self.term(x)?;
                let b = self.fresh(t.id);
                self.emit(t.id, Constraint::new(PosType::Var(a1), NegType::Fun(a2, b)));
                b
            }
            Kind::Ctor(tag, args) => {
                let vs = args.iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>()?;
                let b = self.fresh(t.id);
                self.emit(t.id, Constraint::new(PosType::Ctor(tag.clone(), vs), NegType::Var(b)));
                b
            }
            Kind::Case { scrut, arms, .. } => {
                let a = self.term(scrut)?;
                let mut shape_arms = Vec::with_capacity(arms.len());
                for arm in arms {
                    let n = self.env.len();
                    let binders: Vec<(Name, TypeVar)> =
                        arm.binders.iter().map(|x| (x.clone(), self.fresh(t.id))).collect();
                    self.env.extend(binders.iter().cloned());
                    let g = self.term(&arm.body);
                    self.env.truncate(n);
                    shape_arms.push(ShapeArm { tag: arm.tag.clone(), binders, body: arm.body.id, body_var: g? });
                }
                let d = self.fresh(t.id);
                let sid = self.cs.shapes.len() as ShapeId;
                let links: Vec<TypeVar> = shape_arms.iter().map(|a| a.body_var).collect();
                self.cs.shapes.push(CaseShape { case_id: t.id, arms: shape_arms, result: d });
                self.emit(t.id, Constraint::new(PosType::Var(a), NegType::Case(sid)));
                for g in links {
                    self.emit(t.id, Constraint::vv(g, d));
                }
                d
            }
            Kind::LetRec(x, t1, t2) => {
                let a = self.fresh(t.id);
                self.env.push((x.clone(), a));
                let b1 = self.term(t1);
                self.env.pop();
                let b1 = b1?;
                self.env.push((x.clone(), b1));
                let b2 = self.term(t2);
                self.env.pop();
                let b2 = b2?;
                self.emit(t.id, Constraint::vv(b1, a));
                b2
            }
        };
        self.cs.term_vars.insert(t.id, v);
        Ok(v)
    }
}

/// Infers Δ for a whole program. Top-level names are in scope everywhere;
/// each definition's body flows into its name's variable. The program's
/// result is consumed opaquely.
pub fn infer(p: &Program) -> Result<(TypeVar, ConstraintSet), InferError> {
    let mut inf = Infer { cs: ConstraintSet::default(), env: Vec::new() };
    let def_vars: Vec<TypeVar> = p.defs.iter().map(|d| inf.fresh(d.body.id)).collect();
    for (d, v) in p.defs.iter().zip(&def_vars) {
        inf.env.push((d.name.clone(), *v));
    }
    for (d, v) in p.defs.iter().zip(&def_vars) {
        let b = inf.term(&d.body)?;
        inf.emit(d.body.id, Constraint::vv(b, *v));
    }
    let root = inf.term(&p.main)?;
    inf.emit(p.main.id, Constraint::new(PosType::Var(root), NegType::Opaque));
    Ok((root, inf.cs))
}

/// Every case-shape constraint's arm-body constraints and result links are
/// present in Δ.
pub fn is_self_contained(p: &Program, cs: &ConstraintSet) -> bool {
    let index = p.index();
    let present: std::collections::HashSet<&Constraint> = cs.constraints.iter().collect();
    for c in &cs.constraints {
        let NegType::Case(sid) = &c.rhs else { continue };
        let shape = cs.shape(*sid);
        for arm in &shape.arms {
            let Some(body) = index.get(&arm.body) else { return false };
            let mut ok = true;
            body.walk(&mut |n| {
                for &i in cs.emitted_at.get(&n.id).map(|v| v.as_slice()).unwrap_or(&[]) {
                    ok &= present.contains(&cs.constraints[i]);
                }
            });
            if !ok || !present.contains(&Constraint::vv(arm.body_var, shape.result)) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    #[test]
    fn identity_lambda() {
        let p = parse("let main = fun x -> x").unwrap();
        let (root, cs) = infer(&p).unwrap();
        // the lambda's own constraint plus the boundary
        let own: Vec<_> = cs.constraints.iter().filter(|c| c.rhs != NegType::Opaque).collect();
        assert_eq!(own.len(), 1);
        match &own[0].lhs {
            PosType::Fun(a, b) => assert_eq!(a, b),
            t => panic!("{t:?}"),
        }
        assert_eq!(own[0].rhs, NegType::Var(root));
    }

    #[test]
    fn producer_bounds() {
        let p = parse("let bar = 3 > 2\nlet producer y = if y then Some 123 else None\nlet main = producer bar").unwrap();
        let (_, cs) = infer(&p).unwrap();
        let some = cs.constraints.iter().find(|c| matches!(&c.lhs, PosType::Ctor(t, a) if t == "Some" && a.len() == 1));
        let none = cs.constraints.iter().find(|c| matches!(&c.lhs, PosType::Ctor(t, a) if t == "None" && a.is_empty()));
        let (some, none) = (some.unwrap(), none.unwrap());
        let (NegType::Var(b1), NegType::Var(b2)) = (&some.rhs, &none.rhs) else { panic!() };
        assert_ne!(b1, b2);
        // both branch results flow into the if's result
        let shape = cs.shapes.iter().find(|s| s.arms.len() == 2 && s.arm("True").is_some()).unwrap();
        for arm in &shape.arms {
            assert!(cs.constraints.contains(&Constraint::vv(arm.body_var, shape.result)));
        }
        assert!(is_self_contained(&p, &cs));
    }

    #[test]
    fn closedness_iff() {
        assert!(infer(&parse("let main = fun x -> y").unwrap()).is_err());
        assert!(infer(&parse("let main = fun x -> x").unwrap()).is_ok());
        assert!(infer(&parse("let f x = g x\nlet g x = f x\nlet main = f").unwrap()).is_ok());
    }

    #[test]
    fn fresh_vars_distinct() {
        let mut s = VarSupply::default();
        let a = s.fresh_var(Some(3));
        let b = s.fresh_var(Some(3));
        assert_ne!(a, b);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1_000_000 {
            assert!(seen.insert(s.fresh_var(None)));
        }
    }
}
