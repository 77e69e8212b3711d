use super::{Expr, Operator};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Instr {
    Const(f64),
    Var(usize),
    Param(usize),
    Add,
    Sub,
    Mul,
    Div,
    Exp,
}

const INLINE_STACK: usize = 32;

/// Postfix form of an expression for repeated evaluation in inner loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    code: Vec<Instr>,
    max_stack: usize,
}

impl Program {
    pub fn new(expr: &Expr) -> Self {
        let mut code = Vec::with_capacity(expr.complexity());
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        emit(expr, &mut code, &mut depth, &mut max_stack);
        Self { code, max_stack }
    }

    /// Evaluates with `params` filling the parameter slots.
    #[inline]
    pub fn eval(&self, vars: &[f64], params: &[f64]) -> f64 {
        if self.max_stack <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            self.run(&mut stack, vars, params)
        } else {
            let mut stack = vec![0.0f64; self.max_stack];
            self.run(&mut stack, vars, params)
        }
    }

    #[inline]
    fn run(&self, stack: &mut [f64], vars: &[f64], params: &[f64]) -> f64 {
        let mut sp = 0usize;
        for ins in &self.code {
            match *ins {
                Instr::Const(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Instr::Var(i) => {
                    stack[sp] = vars[i];
                    sp += 1;
                }
                Instr::Param(i) => {
                    stack[sp] = params.get(i).copied().unwrap_or(f64::NAN);
                    sp += 1;
                }
                Instr::Exp => stack[sp - 1] = stack[sp - 1].exp(),
                bin => {
                    sp -= 1;
                    let b = stack[sp];
                    let a = stack[sp - 1];
                    stack[sp - 1] = match bin {
                        Instr::Add => a + b,
                        Instr::Sub => a - b,
                        Instr::Mul => a * b,
                        _ => a / b,
                    };
                }
            }
        }
        stack[0]
    }
}

fn emit(e: &Expr, code: &mut Vec<Instr>, depth: &mut usize, max: &mut usize) {
    let mut push = |code: &mut Vec<Instr>, ins: Instr, depth: &mut usize| {
        code.push(ins);
        *depth += 1;
        *max = (*max).max(*depth);
    };
    match e {
        Expr::Const(c) => push(code, Instr::Const(*c), depth),
        Expr::Var(i) => push(code, Instr::Var(*i), depth),
        Expr::Param(i) => push(code, Instr::Param(*i), depth),
        Expr::Unary(_, a) => {
            emit(a, code, depth, max);
            code.push(Instr::Exp);
        }
        Expr::Binary(op, a, b) => {
            emit(a, code, depth, max);
            emit(b, code, depth, max);
            code.push(match op {
                Operator::Add => Instr::Add,
                Operator::Sub => Instr::Sub,
                Operator::Mul => Instr::Mul,
                Operator::Div => Instr::Div,
                Operator::Exp => unreachable!(),
            });
            *depth -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{ExprGrammar, ParamTemplate};

    #[test]
    fn matches_tree_evaluation() {
        let g = ExprGrammar::rate(&["C_A", "C_B"], 25).unwrap();
        let e = g.parse("(7*C_A-3*C_B)/(4*C_A+2*C_B+6)").unwrap();
        let p = e.compile();
        for (a, b) in [(2.0, 0.0), (1.0, 3.0), (0.0, 0.0)] {
            assert_eq!(p.eval(&[a, b], &[]), e.evaluate(&[a, b]));
        }
        let t = ParamTemplate::extract(&e);
        let theta = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(t.compile().eval(&[1.5, 0.5], &theta), t.evaluate(&[1.5, 0.5], &theta));
    }

    #[test]
    fn deep_trees_fall_back_to_heap_stack() {
        // right-leaning chain needs a stack as deep as the chain
        let mut e = Expr::Var(0);
        for _ in 0..40 {
            e = Expr::add(Expr::Const(1.0), e);
        }
        assert_eq!(e.compile().eval(&[2.0], &[]), 42.0);
    }
}
