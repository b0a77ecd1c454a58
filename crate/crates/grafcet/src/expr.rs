//! Condition and assignment expressions: boolean/integer AST with
//! rising/falling edge atoms, plus type checking and evaluation.
//!
//! Expressions are evaluated against a snapshot of the variable valuation
//! and active-step set, never against the live state of the evolution in
//! progress, together with the edge context of the current evolution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::ids::{StepId, VarId};

/// A read target inside an expression: a declared variable or the implicit
/// step activity variable `X<stepId>`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum VarRef {
    Var(VarId),
    StepActivity(StepId),
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarRef::Var(v) => write!(f, "{v}"),
            VarRef::StepActivity(s) => write!(f, "X{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    BoolLit(bool),
    IntLit(i64),
    Read(VarRef),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Rising(VarRef),
    Falling(VarRef),
}

impl Expr {
    pub fn read(r: impl Into<VarId>) -> Self {
        Expr::Read(VarRef::Var(r.into()))
    }

    /// True if the expression contains a rising/falling atom anywhere.
    pub fn has_edge_atom(&self) -> bool {
        match self {
            Expr::Rising(_) | Expr::Falling(_) => true,
            Expr::BoolLit(_) | Expr::IntLit(_) | Expr::Read(_) => false,
            Expr::Not(e) => e.has_edge_atom(),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.has_edge_atom() || b.has_edge_atom()
            }
            Expr::Cmp(_, a, b) => a.has_edge_atom() || b.has_edge_atom(),
        }
    }

    /// Visits every variable reference (reads and edge atoms alike).
    pub fn visit_reads(&self, f: &mut impl FnMut(&VarRef)) {
        match self {
            Expr::Read(r) | Expr::Rising(r) | Expr::Falling(r) => f(r),
            Expr::BoolLit(_) | Expr::IntLit(_) => {}
            Expr::Not(e) => e.visit_reads(f),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.visit_reads(f);
                b.visit_reads(f);
            }
            Expr::Cmp(_, a, b) => {
                a.visit_reads(f);
                b.visit_reads(f);
            }
        }
    }

    /// Mutable counterpart of [`Expr::visit_reads`], used when step ids are
    /// rewritten (macro expansion prefixes).
    pub fn visit_reads_mut(&mut self, f: &mut impl FnMut(&mut VarRef)) {
        match self {
            Expr::Read(r) | Expr::Rising(r) | Expr::Falling(r) => f(r),
            Expr::BoolLit(_) | Expr::IntLit(_) => {}
            Expr::Not(e) => e.visit_reads_mut(f),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.visit_reads_mut(f);
                b.visit_reads_mut(f);
            }
            Expr::Cmp(_, a, b) => {
                a.visit_reads_mut(f);
                b.visit_reads_mut(f);
            }
        }
    }
}

/// A runtime value; integers are 64-bit with wrapping arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
}

impl Value {
    pub fn ty(&self) -> ExprType {
        match self {
            Value::Bool(_) => ExprType::Bool,
            Value::Int(_) => ExprType::Int,
        }
    }

    pub fn as_bool(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            Value::Int(_) => panic!("expected a boolean value; expressions must be type-checked"),
        }
    }

    pub fn as_int(&self) -> i64 {
        match self {
            Value::Int(n) => *n,
            Value::Bool(_) => panic!("expected an integer value; expressions must be type-checked"),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExprType {
    Bool,
    Int,
}

impl fmt::Display for ExprType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExprType::Bool => "bool",
            ExprType::Int => "int",
        })
    }
}

/// Infers the type of an expression, or explains why it is ill-typed.
/// `lookup` resolves the type of a reference (step activity is always bool,
/// so callers only need to map declared variables).
pub fn type_of(
    expr: &Expr,
    lookup: &impl Fn(&VarRef) -> Option<ExprType>,
) -> Result<ExprType, String> {
    let expect = |e: &Expr, want: ExprType| -> Result<(), String> {
        let got = type_of(e, lookup)?;
        if got == want {
            Ok(())
        } else {
            Err(format!("expected {want} operand, found {got}"))
        }
    };
    match expr {
        Expr::BoolLit(_) => Ok(ExprType::Bool),
        Expr::IntLit(_) => Ok(ExprType::Int),
        Expr::Read(r) => lookup(r).ok_or_else(|| format!("unknown identifier `{r}`")),
        Expr::Not(e) => expect(e, ExprType::Bool).map(|()| ExprType::Bool),
        Expr::And(a, b) | Expr::Or(a, b) => {
            expect(a, ExprType::Bool)?;
            expect(b, ExprType::Bool)?;
            Ok(ExprType::Bool)
        }
        Expr::Cmp(_, a, b) => {
            expect(a, ExprType::Int)?;
            expect(b, ExprType::Int)?;
            Ok(ExprType::Bool)
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            expect(a, ExprType::Int)?;
            expect(b, ExprType::Int)?;
            Ok(ExprType::Int)
        }
        Expr::Rising(r) | Expr::Falling(r) => {
            match lookup(r).ok_or_else(|| format!("unknown identifier `{r}`"))? {
                ExprType::Bool => Ok(ExprType::Bool),
                ExprType::Int => Err(format!("edge atom applied to integer variable `{r}`")),
            }
        }
    }
}

/// Direction of a variable change; also the meaning of an edge atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeDir {
    Rising,
    Falling,
}

/// Key of an edge-context entry: the variable (declared or step activity)
/// whose value changed.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKey {
    Var(VarId),
    Step(StepId),
}

impl EventKey {
    pub fn of(r: &VarRef) -> Self {
        match r {
            VarRef::Var(v) => EventKey::Var(v.clone()),
            VarRef::StepActivity(s) => EventKey::Step(s.clone()),
        }
    }
}

impl fmt::Display for EventKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKey::Var(v) => write!(f, "{v}"),
            EventKey::Step(s) => write!(f, "X{s}"),
        }
    }
}

/// Everything an expression may read: a snapshot of step activity and
/// variable values, plus the edges valid for the current evolution.
#[derive(Clone, Copy)]
pub struct EvalCtx<'a> {
    pub active: &'a BTreeSet<StepId>,
    pub valuation: &'a BTreeMap<VarId, Value>,
    pub edges: &'a BTreeMap<EventKey, EdgeDir>,
}

impl EvalCtx<'_> {
    fn read(&self, r: &VarRef) -> Value {
        match r {
            VarRef::Var(v) => *self
                .valuation
                .get(v)
                .unwrap_or_else(|| panic!("read of undeclared variable `{v}`")),
            VarRef::StepActivity(s) => Value::Bool(self.active.contains(s)),
        }
    }

    fn edge(&self, r: &VarRef, dir: EdgeDir) -> bool {
        self.edges.get(&EventKey::of(r)) == Some(&dir)
    }
}

/// Evaluates a type-checked expression. Panics on reads of undeclared
/// variables or type mismatches; both are ruled out by parsing/analysis.
pub fn eval(expr: &Expr, cx: &EvalCtx<'_>) -> Value {
    match expr {
        Expr::BoolLit(b) => Value::Bool(*b),
        Expr::IntLit(n) => Value::Int(*n),
        Expr::Read(r) => cx.read(r),
        Expr::Not(e) => Value::Bool(!eval(e, cx).as_bool()),
        Expr::And(a, b) => Value::Bool(eval(a, cx).as_bool() && eval(b, cx).as_bool()),
        Expr::Or(a, b) => Value::Bool(eval(a, cx).as_bool() || eval(b, cx).as_bool()),
        Expr::Cmp(op, a, b) => {
            let (x, y) = (eval(a, cx).as_int(), eval(b, cx).as_int());
            Value::Bool(match op {
                CmpOp::Eq => x == y,
                CmpOp::Ne => x != y,
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Gt => x > y,
                CmpOp::Ge => x >= y,
            })
        }
        Expr::Add(a, b) => Value::Int(eval(a, cx).as_int().wrapping_add(eval(b, cx).as_int())),
        Expr::Sub(a, b) => Value::Int(eval(a, cx).as_int().wrapping_sub(eval(b, cx).as_int())),
        Expr::Rising(r) => Value::Bool(cx.edge(r, EdgeDir::Rising)),
        Expr::Falling(r) => Value::Bool(cx.edge(r, EdgeDir::Falling)),
    }
}

pub fn eval_bool(expr: &Expr, cx: &EvalCtx<'_>) -> bool {
    eval(expr, cx).as_bool()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx<'a>(
        active: &'a BTreeSet<StepId>,
        valuation: &'a BTreeMap<VarId, Value>,
        edges: &'a BTreeMap<EventKey, EdgeDir>,
    ) -> EvalCtx<'a> {
        EvalCtx { active, valuation, edges }
    }

    #[test]
    fn edges_resolve_against_the_edge_context_only() {
        let active = BTreeSet::new();
        let mut valuation = BTreeMap::new();
        valuation.insert(VarId::from("a"), Value::Bool(true));
        let mut edges = BTreeMap::new();
        edges.insert(EventKey::Var(VarId::from("a")), EdgeDir::Rising);

        let rising = Expr::Rising(VarRef::Var(VarId::from("a")));
        let falling = Expr::Falling(VarRef::Var(VarId::from("a")));
        let cx = ctx(&active, &valuation, &edges);
        assert!(eval_bool(&rising, &cx));
        assert!(!eval_bool(&falling, &cx));

        let no_edges = BTreeMap::new();
        let cx = ctx(&active, &valuation, &no_edges);
        assert!(!eval_bool(&rising, &cx));
    }

    #[test]
    fn step_activity_reads_the_active_set() {
        let mut active = BTreeSet::new();
        active.insert(StepId::from("2"));
        let valuation = BTreeMap::new();
        let edges = BTreeMap::new();
        let cx = ctx(&active, &valuation, &edges);

        let x2 = Expr::Read(VarRef::StepActivity(StepId::from("2")));
        let x1 = Expr::Read(VarRef::StepActivity(StepId::from("1")));
        assert!(eval_bool(&x2, &cx));
        assert!(!eval_bool(&x1, &cx));
    }

    #[test]
    fn type_checking_rejects_edge_atoms_on_integers() {
        let lookup = |r: &VarRef| match r {
            VarRef::Var(v) if v.as_str() == "n" => Some(ExprType::Int),
            VarRef::Var(v) if v.as_str() == "b" => Some(ExprType::Bool),
            VarRef::StepActivity(_) => Some(ExprType::Bool),
            _ => None,
        };
        let bad = Expr::Rising(VarRef::Var(VarId::from("n")));
        assert!(type_of(&bad, &lookup).is_err());
        let good = Expr::And(
            Box::new(Expr::Rising(VarRef::Var(VarId::from("b")))),
            Box::new(Expr::Cmp(
                CmpOp::Le,
                Box::new(Expr::read("n")),
                Box::new(Expr::IntLit(3)),
            )),
        );
        assert_eq!(type_of(&good, &lookup), Ok(ExprType::Bool));
    }
}
