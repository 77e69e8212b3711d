use super::{Expr, Operator};

/// Raw derivative by the sum, product, quotient and chain rules.
pub(super) fn derivative(e: &Expr, var: usize) -> Expr {
    match e {
        Expr::Const(_) | Expr::Param(_) => Expr::Const(0.0),
        Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
        Expr::Unary(Operator::Exp, a) => Expr::mul(derivative(a, var), e.clone()),
        Expr::Unary(op, _) => unreachable!("{op:?} is not unary"),
        Expr::Binary(op, a, b) => {
            let da = derivative(a, var);
            let db = derivative(b, var);
            let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
            match op {
                Operator::Add => Expr::add(da, db),
                Operator::Sub => Expr::sub(da, db),
                Operator::Mul => Expr::add(Expr::mul(da, b), Expr::mul(a, db)),
                Operator::Div => Expr::div(
                    Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a, db)),
                    Expr::mul(b.clone(), b),
                ),
                Operator::Exp => unreachable!("exp is unary"),
            }
        }
    }
}
