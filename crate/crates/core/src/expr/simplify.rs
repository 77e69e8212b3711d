use super::{Expr, Operator};

pub(super) fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => e.clone(),
        Expr::Unary(op, a) => {
            let a = simplify(a);
            if let Expr::Const(c) = a {
                let v = op.apply_unary(c);
                if v.is_finite() {
                    return Expr::Const(v);
                }
            }
            Expr::Unary(*op, Box::new(a))
        }
        Expr::Binary(op, a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                let v = op.apply_binary(*x, *y);
                if v.is_finite() {
                    return Expr::Const(v);
                }
            }
            let is = |e: &Expr, k: f64| matches!(e, Expr::Const(c) if *c == k);
            match op {
                Operator::Add if is(&b, 0.0) => a,
                Operator::Add if is(&a, 0.0) => b,
                Operator::Sub if is(&b, 0.0) => a,
                Operator::Mul if is(&a, 0.0) || is(&b, 0.0) => Expr::Const(0.0),
                Operator::Mul if is(&b, 1.0) => a,
                Operator::Mul if is(&a, 1.0) => b,
                Operator::Div if is(&b, 1.0) => a,
                _ => Expr::Binary(*op, Box::new(a), Box::new(b)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{Expr, ExprGrammar};

    #[test]
    fn identities() {
        let g = ExprGrammar::rate(&["C_A"], 10).unwrap();
        let e = g.parse("1*C_A+0").unwrap();
        assert_eq!(e.simplify(), Expr::Var(0));
        let e = g.parse("0*C_A+C_A/1-0").unwrap();
        assert_eq!(e.simplify(), Expr::Var(0));
    }

    #[test]
    fn folding() {
        let g = ExprGrammar::rate(&["C_A"], 10).unwrap();
        assert_eq!(g.parse("2*3").unwrap().simplify(), Expr::Const(6.0));
        // division by zero is not folded
        let e = g.parse("1/(2-2)").unwrap();
        assert_eq!(e.simplify(), Expr::div(Expr::Const(1.0), Expr::Const(0.0)));
    }

    #[test]
    fn nothing_to_do() {
        let g = ExprGrammar::profile(15);
        let e = g.parse("p1/(exp(p2)+t)").unwrap();
        assert_eq!(e.simplify(), e);
    }
}
