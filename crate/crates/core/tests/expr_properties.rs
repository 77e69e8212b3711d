use kinfer::expr::{format, parse_with_variables, Expr, Operator, ParamTemplate};
use proptest::prelude::*;

const VARS: [&str; 3] = ["C_A", "C_B", "t"];

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0usize..3).prop_map(Expr::var),
        (-10.0f64..10.0).prop_map(Expr::constant),
        (1u32..20).prop_map(|k| Expr::constant(k as f64 / 4.0)),
    ]
}

fn tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(a, b)),
            inner.prop_map(Expr::exp),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..3.0, 3)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    if !a.is_finite() || !b.is_finite() {
        return true;
    }
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn format_parse_round_trip(e in tree()) {
        let text = format(&e, &VARS);
        let back = parse_with_variables(&text, &VARS).unwrap();
        prop_assert_eq!(&back, &e, "text {}", text);
        prop_assert_eq!(format(&back, &VARS), text);
    }

    #[test]
    fn complexity_is_additive(a in tree(), b in tree()) {
        for op in [Operator::Add, Operator::Sub, Operator::Mul, Operator::Div] {
            prop_assert_eq!(Expr::binary(op, a.clone(), b.clone()).complexity(), a.complexity() + b.complexity() + 1);
        }
        prop_assert_eq!(Expr::exp(a.clone()).complexity(), a.complexity() + 1);
    }

    #[test]
    fn simplify_preserves_value(e in tree(), x in point()) {
        let s = e.simplify();
        prop_assert!(s.complexity() <= e.complexity());
        prop_assert!(close(e.evaluate(&x), s.evaluate(&x), 1e-9), "{} vs {}", format(&e, &VARS), format(&s, &VARS));
    }

    #[test]
    fn template_round_trip(e in tree(), x in point()) {
        let t = ParamTemplate::extract(&e);
        prop_assert_eq!(t.dim(), e.constants().len());
        let back = t.substitute(&e.constants()).unwrap();
        prop_assert_eq!(&back, &e);
        let v = e.evaluate(&x);
        let w = t.evaluate(&x, &e.constants());
        prop_assert!(v.to_bits() == w.to_bits() || (v.is_nan() && w.is_nan()));
    }

    #[test]
    fn compiled_matches_tree(e in tree(), x in point()) {
        let v = e.evaluate(&x);
        let w = e.compile().eval(&x, &[]);
        prop_assert!(v.to_bits() == w.to_bits() || (v.is_nan() && w.is_nan()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn derivative_matches_central_difference(e in tree(), x in point(), var in 0usize..3) {
        let d = e.differentiate(var);
        let h = 1e-5;
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[var] += h;
        lo[var] -= h;
        let (fh, fl, f0) = (e.evaluate(&hi), e.evaluate(&lo), e.evaluate(&x));
        let exact = d.evaluate(&x);
        // skip points near singularities or with huge curvature
        prop_assume!(fh.is_finite() && fl.is_finite() && f0.is_finite() && exact.is_finite());
        prop_assume!(f0.abs() < 1e6 && exact.abs() < 1e6);
        let fd = (fh - fl) / (2.0 * h);
        let second = (fh - 2.0 * f0 + fl) / (h * h);
        prop_assume!(second.abs() < 1e4);
        prop_assert!(close(exact, fd, 1e-5), "{}: exact {} fd {}", format(&e, &VARS), exact, fd);
    }
}
