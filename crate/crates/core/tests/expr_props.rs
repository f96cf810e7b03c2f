use std::collections::BTreeMap;

use itosym::expr::{
    evaluate, evaluate_with_magnitude, is_identically_zero, parse, Context, Expr, Func, Node,
    Point, VarId, ZeroTestConfig,
};
use proptest::prelude::*;

fn ctx() -> Context {
    Context::new(2, 1).unwrap()
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::state(0)),
        Just(Expr::state(1)),
        Just(Expr::time()),
        Just(Expr::wiener(0)),
        (-3i64..=3).prop_map(Expr::int),
        (1i64..=4, 2i64..=5).prop_map(|(a, b)| Expr::rational(a, b)),
    ]
}

fn func() -> impl Strategy<Value = Func> {
    prop::sample::select(Func::ALL.to_vec())
}

/// Random raw trees (not normalised), at most 6 levels deep.
fn tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(|v| Expr::from_node(Node::Sum(v))),
            prop::collection::vec(inner.clone(), 2..=3)
                .prop_map(|v| Expr::from_node(Node::Product(v))),
            (inner.clone(), -2i64..=3)
                .prop_map(|(b, k)| Expr::from_node(Node::Pow(b, Expr::int(k)))),
            inner.clone().prop_map(|a| Expr::from_node(Node::Neg(a))),
            (func(), inner.clone()).prop_map(|(f, a)| Expr::apply(f, a)),
            // fractional powers of a positive base
            inner.prop_map(|a| Expr::from_node(Node::Pow(
                Expr::from_node(Node::Sum(vec![Expr::int(2), a.clone().sin()])),
                Expr::rational(1, 2)
            ))),
        ]
    })
}

fn points() -> Vec<Point> {
    let mut s: u64 = 0x1234_5678;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..8)
        .map(|_| {
            Point::new(
                vec![0.4 + 1.6 * next(), 0.4 + 1.6 * next()],
                0.1 + 1.9 * next(),
                vec![-1.5 + 3.0 * next()],
            )
        })
        .collect()
}

fn eval(e: &Expr, p: &Point) -> Option<f64> {
    evaluate(e, p, &BTreeMap::new())
        .ok()
        .filter(|v| v.abs() < 1e8)
}

fn shifted(p: &Point, v: VarId, h: f64) -> Point {
    let mut q = p.clone();
    match v {
        VarId::State(i) => q.x[i] += h,
        VarId::Time => q.t += h,
        VarId::Wiener(k) => q.w[k] += h,
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn derivative_matches_finite_differences(e in tree(), vi in 0usize..4) {
        let v = ctx().all_vars()[vi];
        let d = e.diff(v);
        let h = 1e-5;
        for p in points() {
            let fd = |h: f64| -> Option<f64> {
                Some((eval(&e, &shifted(&p, v, h))? - eval(&e, &shifted(&p, v, -h))?) / (2.0 * h))
            };
            let (Some(f1), Some(f2)) = (fd(h), fd(2.0 * h)) else { continue };
            // only smooth neighbourhoods: the two step sizes must agree
            if (f1 - f2).abs() > 1e-6 * f1.abs().max(1.0) {
                continue;
            }
            let sym = evaluate(&d, &p, &BTreeMap::new());
            let sym = sym.unwrap_or_else(|err| panic!("{d} failed at {p:?}: {err}"));
            prop_assert!(
                (sym - f1).abs() <= 1e-4 * sym.abs().max(1.0),
                "d/d{v:?} {e} = {d}: symbolic {sym} vs fd {f1} at {p:?}"
            );
        }
    }

    #[test]
    fn simplify_preserves_values(e in tree()) {
        let s = e.simplified();
        for p in points() {
            let Ok((a, mag)) = evaluate_with_magnitude(&e, &p, &BTreeMap::new()) else { continue };
            if mag > 1e8 {
                continue;
            }
            let b = evaluate(&s, &p, &BTreeMap::new())
                .unwrap_or_else(|err| panic!("{e} -> {s} fails at {p:?}: {err}"));
            prop_assert!(
                (a - b).abs() <= 1e-12 * mag.max(1.0) * 16.0,
                "{e} = {a} but {s} = {b} at {p:?}"
            );
        }
    }

    #[test]
    fn print_parse_fixpoint(e in tree()) {
        let c = ctx();
        let once = parse(&e.to_string(), &c).unwrap();
        let twice = parse(&once.to_string(), &c).unwrap();
        prop_assert_eq!(&once, &twice, "printed {} then {}", e, once);
    }

    #[test]
    fn difference_with_itself_is_zero(e in tree()) {
        let diff = e.clone() - e.clone();
        prop_assert!(is_identically_zero(&diff, &ctx(), &ZeroTestConfig::default()).is_zero());
    }
}
