use itosym::expr::{is_identically_zero, Context, Expr, ParamValue, ZeroTestConfig};
use itosym::model::System;
use itosym::sde::{ito_laplacian, ito_to_strat, strat_to_ito, Diffusion, ItoSystem};
use itosym::suite::{bundled_model, BUNDLED};
use proptest::prelude::*;

fn ctx() -> Context {
    Context::new(2, 2).unwrap().with_param("c", ParamValue::Numeric(0.8)).unwrap()
}

/// Smooth expressions in x1, x2, t, w1, w2 (no domain restrictions).
fn smooth() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::state(0)),
        Just(Expr::state(1)),
        Just(Expr::time()),
        Just(Expr::wiener(0)),
        Just(Expr::wiener(1)),
        Just(Expr::param("c")),
        (-3i64..=3).prop_map(Expr::int),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::product),
            (inner.clone(), 1i64..=3).prop_map(|(b, k)| b.powi(k)),
            inner.clone().prop_map(Expr::sin),
            inner.prop_map(|a| (Expr::rational(1, 3) * a).exp()),
        ]
    })
}

/// Same, without Wiener variables: valid SDE coefficients.
fn coefficient() -> impl Strategy<Value = Expr> {
    smooth().prop_map(|e| {
        e.substitute(itosym::expr::VarId::Wiener(0), &Expr::rational(1, 2))
            .substitute(itosym::expr::VarId::Wiener(1), &Expr::rational(-1, 3))
            .simplified()
    })
}

fn system() -> ItoSystem {
    let c = ctx();
    let p = |s: &str| itosym::expr::parse(s, &c).unwrap();
    ItoSystem::new(
        c.clone(),
        vec![p("c*x1 - x2"), p("sin(x1)")],
        vec![vec![p("x1*x2"), p("1")], vec![p("t"), p("x2^2 + c")]],
    )
    .unwrap()
}

fn zero(e: &Expr) -> bool {
    is_identically_zero(e, &ctx(), &ZeroTestConfig::default()).is_zero()
}

#[test]
fn conversion_round_trip_on_bundled_models() {
    for (name, _) in BUNDLED {
        let m = bundled_model(name).unwrap().unwrap();
        match &m.system {
            System::Ito(s) => {
                let back = strat_to_ito(&ito_to_strat(s));
                for (a, b) in back.f().iter().zip(s.f()) {
                    assert_eq!(a.simplified(), b.simplified(), "{name}");
                }
                assert_eq!(back.sigma(), s.sigma());
            }
            System::Strat(s) => {
                let back = ito_to_strat(&strat_to_ito(s));
                for (a, b) in back.b().iter().zip(s.b()) {
                    assert_eq!(a.simplified(), b.simplified(), "{name}");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_is_linear(u in smooth(), v in smooth(), a in -3i64..=3, b in -3i64..=3) {
        let sys = system();
        let lhs = ito_laplacian(&(Expr::int(a) * &u + Expr::int(b) * &v), &sys);
        let rhs = Expr::int(a) * ito_laplacian(&u, &sys) + Expr::int(b) * ito_laplacian(&v, &sys);
        prop_assert!(zero(&(lhs - rhs)));
    }

    #[test]
    fn constant_sigma_keeps_drift(f1 in coefficient(), f2 in coefficient(), s in prop::array::uniform4(-2i64..=2)) {
        let sys = ItoSystem::new(
            ctx(),
            vec![f1.clone(), f2.clone()],
            vec![vec![Expr::int(s[0]), Expr::int(s[1])], vec![Expr::int(s[2]), Expr::param("c")]],
        )
        .unwrap();
        let strat = ito_to_strat(&sys);
        prop_assert!(zero(&(&strat.b()[0] - &f1)));
        prop_assert!(zero(&(&strat.b()[1] - &f2)));
    }

    #[test]
    fn round_trip_on_random_systems(f in coefficient(), s in coefficient()) {
        let c = Context::scalar();
        let rename = |e: &Expr| e.substitute(itosym::expr::VarId::State(1), &Expr::state(0)).substitute_params(&|_| Some(Expr::rational(4, 5))).simplified();
        let sys = ItoSystem::new(c, vec![rename(&f)], vec![vec![rename(&s)]]).unwrap();
        let back = strat_to_ito(&ito_to_strat(&sys));
        prop_assert_eq!(back.f()[0].simplified(), sys.f()[0].simplified());
    }
}
