//! Symbolic expression trees over a small arithmetic grammar.
//!
//! Trees are immutable values. Constant leaves carry the numeric parameters
//! of a model; [`ParamTemplate`] replaces them by indexed slots so the
//! structure can be optimized independently of its constants.

mod compile;
mod diff;
mod format;
mod simplify;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compile::Program;
pub use format::{format, parse, parse_with_variables, ParseError, ParseErrorKind};

/// Operators admitted by an expression grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
    Exp,
}

impl Operator {
    pub const ARITHMETIC: [Operator; 4] = [Operator::Add, Operator::Sub, Operator::Mul, Operator::Div];

    pub fn arity(self) -> usize {
        match self {
            Operator::Exp => 1,
            _ => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Add => "+",
            Operator::Sub => "-",
            Operator::Mul => "*",
            Operator::Div => "/",
            Operator::Exp => "exp",
        }
    }

    #[inline]
    pub(crate) fn apply_binary(self, a: f64, b: f64) -> f64 {
        match self {
            Operator::Add => a + b,
            Operator::Sub => a - b,
            Operator::Mul => a * b,
            Operator::Div => a / b,
            Operator::Exp => unreachable!("exp is unary"),
        }
    }

    #[inline]
    pub(crate) fn apply_unary(self, a: f64) -> f64 {
        match self {
            Operator::Exp => a.exp(),
            _ => unreachable!("{self:?} is binary"),
        }
    }
}

/// An expression tree node.
///
/// `Param` leaves only appear inside a [`ParamTemplate`] skeleton; they are
/// numbered depth-first, left to right.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Param(usize),
    Unary(Operator, Box<Expr>),
    Binary(Operator, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("grammar must declare at least one variable")]
    NoVariables,
    #[error("constant range [{0}, {1}] is empty")]
    EmptyConstantRange(f64, f64),
    #[error("complexity cap must be at least 1")]
    ZeroComplexityCap,
    #[error("grammar must declare at least one operator")]
    NoOperators,
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn var(index: usize) -> Self {
        Expr::Var(index)
    }

    pub fn binary(op: Operator, left: Expr, right: Expr) -> Self {
        debug_assert_eq!(op.arity(), 2);
        Expr::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn unary(op: Operator, child: Expr) -> Self {
        debug_assert_eq!(op.arity(), 1);
        Expr::Unary(op, Box::new(child))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Self {
        Self::binary(Operator::Add, a, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Self {
        Self::binary(Operator::Sub, a, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Self {
        Self::binary(Operator::Mul, a, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Expr, b: Expr) -> Self {
        Self::binary(Operator::Div, a, b)
    }

    pub fn exp(a: Expr) -> Self {
        Self::unary(Operator::Exp, a)
    }

    /// Evaluates the tree at `vars`. Parameter slots evaluate to NaN; use
    /// [`Expr::evaluate_with`] for templates.
    ///
    /// Division by zero and overflow follow IEEE semantics, so a singular
    /// expression yields a non-finite value rather than an error.
    pub fn evaluate(&self, vars: &[f64]) -> f64 {
        self.evaluate_with(vars, &[])
    }

    pub fn evaluate_with(&self, vars: &[f64], params: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => vars[*i],
            Expr::Param(i) => params.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Unary(op, a) => op.apply_unary(a.evaluate_with(vars, params)),
            Expr::Binary(op, a, b) => {
                op.apply_binary(a.evaluate_with(vars, params), b.evaluate_with(vars, params))
            }
        }
    }

    /// Node count. Every leaf and every operator counts once.
    pub fn complexity(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => 1,
            Expr::Unary(_, a) => 1 + a.complexity(),
            Expr::Binary(_, a, b) => 1 + a.complexity() + b.complexity(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => 1,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Constant leaf values in depth-first, left-to-right order.
    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Const(c) = e {
                out.push(*c);
            }
        });
        out
    }

    /// Highest variable index plus one, or zero for variable-free trees.
    pub fn variable_span(&self) -> usize {
        let mut span = 0;
        self.visit(&mut |e| {
            if let Expr::Var(i) = e {
                span = span.max(i + 1);
            }
        });
        span
    }

    pub fn uses_variable(&self, var: usize) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Var(i) if *i == var));
        found
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, a) => a.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Returns the `index`-th node in pre-order.
    pub fn node(&self, index: usize) -> Option<&Expr> {
        let mut seen = 0;
        let mut hit = None;
        self.visit(&mut |e| {
            if seen == index {
                hit = Some(e);
            }
            seen += 1;
        });
        hit
    }

    /// Returns a copy with the `index`-th pre-order node replaced.
    pub fn replace_node(&self, index: usize, replacement: &Expr) -> Expr {
        fn go(e: &Expr, target: usize, counter: &mut usize, rep: &Expr) -> Expr {
            let here = *counter;
            *counter += 1;
            if here == target {
                // still advance the counter past the replaced subtree
                *counter += e.complexity() - 1;
                return rep.clone();
            }
            match e {
                Expr::Unary(op, a) => Expr::Unary(*op, Box::new(go(a, target, counter, rep))),
                Expr::Binary(op, a, b) => {
                    let a = go(a, target, counter, rep);
                    let b = go(b, target, counter, rep);
                    Expr::Binary(*op, Box::new(a), Box::new(b))
                }
                leaf => leaf.clone(),
            }
        }
        go(self, index, &mut 0, replacement)
    }

    /// Replaces constant leaves, in slot order, with `values`.
    pub fn with_constants(&self, values: &[f64]) -> Result<Expr, ExprError> {
        let expected = self.constants().len();
        if expected != values.len() {
            return Err(ExprError::ParamCount { expected, got: values.len() });
        }
        let mut it = values.iter();
        Ok(self.map_leaves(&mut |leaf| match leaf {
            Expr::Const(_) => Expr::Const(*it.next().unwrap()),
            other => other.clone(),
        }))
    }

    fn map_leaves(&self, f: &mut impl FnMut(&Expr) -> Expr) -> Expr {
        match self {
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.map_leaves(f))),
            Expr::Binary(op, a, b) => {
                let a = a.map_leaves(f);
                let b = b.map_leaves(f);
                Expr::Binary(*op, Box::new(a), Box::new(b))
            }
            leaf => f(leaf),
        }
    }

    /// Exact symbolic derivative with respect to variable `var`.
    pub fn differentiate(&self, var: usize) -> Expr {
        simplify::simplify(&diff::derivative(self, var))
    }

    /// Constant folding plus the identities `x+0`, `x-0`, `x*1`, `x/1`, `0*x`.
    pub fn simplify(&self) -> Expr {
        simplify::simplify(self)
    }

    pub fn compile(&self) -> Program {
        Program::new(self)
    }
}

/// Construction rules for candidate expressions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExprGrammar {
    pub operators: Vec<Operator>,
    pub variables: Vec<String>,
    pub constant_range: (f64, f64),
    pub complexity_cap: usize,
}

impl ExprGrammar {
    pub const DEFAULT_CONSTANT_RANGE: (f64, f64) = (-10.0, 10.0);

    pub fn new(
        operators: Vec<Operator>,
        variables: Vec<String>,
        constant_range: (f64, f64),
        complexity_cap: usize,
    ) -> Result<Self, ExprError> {
        if variables.is_empty() {
            return Err(ExprError::NoVariables);
        }
        if operators.is_empty() {
            return Err(ExprError::NoOperators);
        }
        if !(constant_range.0 <= constant_range.1) {
            return Err(ExprError::EmptyConstantRange(constant_range.0, constant_range.1));
        }
        if complexity_cap == 0 {
            return Err(ExprError::ZeroComplexityCap);
        }
        let mut operators = operators;
        operators.sort();
        operators.dedup();
        Ok(Self { operators, variables, constant_range, complexity_cap })
    }

    /// Concentration-profile grammar: `{+,-,*,/,exp}` over time `t`.
    pub fn profile(complexity_cap: usize) -> Self {
        Self::new(
            vec![Operator::Add, Operator::Sub, Operator::Mul, Operator::Div, Operator::Exp],
            vec!["t".to_string()],
            Self::DEFAULT_CONSTANT_RANGE,
            complexity_cap,
        )
        .expect("static grammar is valid")
    }

    /// Rate-model grammar: `{+,-,*,/}` over species concentrations.
    pub fn rate<S: AsRef<str>>(species: &[S], complexity_cap: usize) -> Result<Self, ExprError> {
        Self::new(
            Operator::ARITHMETIC.to_vec(),
            species.iter().map(|s| s.as_ref().to_string()).collect(),
            Self::DEFAULT_CONSTANT_RANGE,
            complexity_cap,
        )
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn binary_operators(&self) -> impl Iterator<Item = Operator> + '_ {
        self.operators.iter().copied().filter(|op| op.arity() == 2)
    }

    pub fn unary_operators(&self) -> impl Iterator<Item = Operator> + '_ {
        self.operators.iter().copied().filter(|op| op.arity() == 1)
    }

    /// True when the tree only uses this grammar's operators and variables
    /// and respects the complexity cap.
    pub fn admits(&self, expr: &Expr) -> bool {
        let mut ok = expr.complexity() <= self.complexity_cap;
        expr.visit(&mut |e| match e {
            Expr::Var(i) => ok &= *i < self.variables.len(),
            Expr::Unary(op, _) | Expr::Binary(op, _, _) => ok &= self.operators.contains(op),
            _ => {}
        });
        ok
    }

    pub fn format(&self, expr: &Expr) -> String {
        format::format(expr, &self.variables)
    }

    pub fn parse(&self, text: &str) -> Result<Expr, ParseError> {
        format::parse(text, self)
    }
}

/// A model structure with its constants lifted into indexed parameter slots.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTemplate {
    skeleton: Expr,
    dim: usize,
}

impl ParamTemplate {
    /// Lifts every constant leaf of `expr` into a parameter slot.
    pub fn extract(expr: &Expr) -> Self {
        let mut next = 0;
        let skeleton = expr.map_leaves(&mut |leaf| match leaf {
            Expr::Const(_) => {
                next += 1;
                Expr::Param(next - 1)
            }
            other => other.clone(),
        });
        Self { skeleton, dim: next }
    }

    /// Wraps a hand-written skeleton. Parameter slots must be numbered
    /// `0..dim` (each slot may appear once); remaining constant leaves stay
    /// fixed.
    pub fn from_skeleton(skeleton: Expr) -> Self {
        let mut dim = 0;
        skeleton.visit(&mut |e| {
            if let Expr::Param(i) = e {
                dim = dim.max(i + 1);
            }
        });
        Self { skeleton, dim }
    }

    pub fn skeleton(&self) -> &Expr {
        &self.skeleton
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn complexity(&self) -> usize {
        self.skeleton.complexity()
    }

    /// Substitutes `theta` into the slots, yielding a concrete tree.
    pub fn substitute(&self, theta: &[f64]) -> Result<Expr, ExprError> {
        if theta.len() != self.dim {
            return Err(ExprError::ParamCount { expected: self.dim, got: theta.len() });
        }
        Ok(self.skeleton.map_leaves(&mut |leaf| match leaf {
            Expr::Param(i) => Expr::Const(theta[*i]),
            other => other.clone(),
        }))
    }

    pub fn evaluate(&self, vars: &[f64], theta: &[f64]) -> f64 {
        self.skeleton.evaluate_with(vars, theta)
    }

    pub fn compile(&self) -> Program {
        Program::new(&self.skeleton)
    }
}

impl From<&Expr> for ParamTemplate {
    fn from(expr: &Expr) -> Self {
        Self::extract(expr)
    }
}

/// Formats with generic `x0, x1, ...` variable names.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.variable_span()).map(|i| format!("x{i}")).collect();
        f.write_str(&format::format(self, &names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toluene_grammar() -> ExprGrammar {
        ExprGrammar::rate(&["C_T", "C_H", "C_B", "C_M"], 25).unwrap()
    }

    #[test]
    fn constant_leaf_evaluates_to_itself() {
        assert_eq!(Expr::Const(3.5).evaluate(&[1.0, 2.0]), 3.5);
    }

    #[test]
    fn product_of_rate_and_concentrations() {
        let g = toluene_grammar();
        let e = g.parse("2*C_T*C_H").unwrap();
        assert_eq!(e.evaluate(&[1.0, 1.0, 0.0, 0.0]), 2.0);
        assert_eq!(e.complexity(), 5);
    }

    #[test]
    fn isomerization_rate_at_pure_reactant() {
        let g = ExprGrammar::rate(&["C_A", "C_B"], 25).unwrap();
        let e = g.parse("(7*C_A-3*C_B)/(4*C_A+2*C_B+6)").unwrap();
        assert_eq!(e.evaluate(&[2.0, 0.0]), 1.0);
    }

    #[test]
    fn singular_expression_is_non_finite_not_panic() {
        let e = Expr::div(Expr::Const(1.0), Expr::sub(Expr::Var(0), Expr::Var(0)));
        assert!(!e.evaluate(&[3.0]).is_finite());
        let big = Expr::exp(Expr::Const(1000.0));
        assert_eq!(big.evaluate(&[]), f64::INFINITY);
    }

    #[test]
    fn complexity_counts() {
        assert_eq!(Expr::Const(1.0).complexity(), 1);
        let g = ExprGrammar::profile(15);
        assert_eq!(g.parse("p1/(p2+t)").unwrap().complexity(), 5);
    }

    #[test]
    fn template_dimensions() {
        let g = toluene_grammar();
        let e = g.parse("2*C_T").unwrap();
        assert_eq!(ParamTemplate::extract(&e).dim(), 1);
        let e = g.parse("1*C_T*C_H/(2+3*C_T+4*C_B)").unwrap();
        assert_eq!(ParamTemplate::extract(&e).dim(), 4);
        let e = ExprGrammar::profile(5).parse("t").unwrap();
        assert_eq!(ParamTemplate::extract(&e).dim(), 0);
    }

    #[test]
    fn template_substitution_reproduces_expression() {
        let g = toluene_grammar();
        let e = g.parse("1.5*C_T*C_H/(2+3*C_T+4*C_B)").unwrap();
        let t = ParamTemplate::extract(&e);
        assert_eq!(t.substitute(&e.constants()).unwrap(), e);
        assert_eq!(e.constants(), vec![1.5, 2.0, 3.0, 4.0]);
        assert!(t.substitute(&[1.0]).is_err());
    }

    #[test]
    fn template_slots_follow_preorder() {
        let g = ExprGrammar::rate(&["C_A", "C_B"], 25).unwrap();
        let e = g.parse("(7*C_A-3*C_B)/(4*C_A+2*C_B+6)").unwrap();
        let t = ParamTemplate::extract(&e);
        let text = g.format(t.skeleton());
        assert_eq!(text, "(p1*C_A-p2*C_B)/(p3*C_A+p4*C_B+p5)");
    }

    #[test]
    fn grammar_validation() {
        assert_eq!(
            ExprGrammar::new(vec![Operator::Add], vec![], (0.0, 1.0), 3).unwrap_err(),
            ExprError::NoVariables
        );
        assert!(ExprGrammar::new(vec![Operator::Add], vec!["x".into()], (1.0, 0.0), 3).is_err());
        assert!(ExprGrammar::new(vec![Operator::Add], vec!["x".into()], (0.0, 1.0), 0).is_err());
    }

    #[test]
    fn admits_checks_operators_and_cap() {
        let g = toluene_grammar();
        let e = Expr::exp(Expr::Var(0));
        assert!(!g.admits(&e));
        assert!(ExprGrammar::profile(15).admits(&e));
        assert!(!ExprGrammar::profile(1).admits(&e));
    }

    #[test]
    fn node_replacement() {
        let g = ExprGrammar::rate(&["a", "b"], 25).unwrap();
        let e = g.parse("a*b+2").unwrap();
        // pre-order: +, *, a, b, 2
        let r = e.replace_node(3, &Expr::Const(5.0));
        assert_eq!(g.format(&r), "a*5+2");
        assert_eq!(e.node(1).unwrap().complexity(), 3);
        assert!(e.node(5).is_none());
    }
}
