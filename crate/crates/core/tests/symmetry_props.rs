use itosym::expr::{is_identically_zero, Context, Expr, ParamValue, VarId, ZeroTestConfig};
use itosym::model::Model;
use itosym::sde::{ito_to_strat, Diffusion, ItoSystem};
use itosym::suite::{bundled_model, BUNDLED};
use itosym::symmetry::{
    conformal_check, lie_bracket, residual_standard_ito, residual_w_ito, residual_w_strat, theorem1_analysis,
    Agreement, ResidualOptions, Verdict, VectorField,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn scalar_ctx() -> Context {
    Context::scalar().with_param("c", ParamValue::Numeric(0.7)).unwrap()
}

/// Smooth scalar expressions in x, t and (optionally) w.
fn smooth(with_w: bool) -> impl Strategy<Value = Expr> {
    let mut leaves = vec![
        Just(Expr::state(0)).boxed(),
        Just(Expr::time()).boxed(),
        Just(Expr::param("c")).boxed(),
        (-3i64..=3).prop_map(Expr::int).boxed(),
    ];
    if with_w {
        leaves.push(Just(Expr::wiener(0)).boxed());
    }
    proptest::strategy::Union::new(leaves).prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::product),
            (inner.clone(), 1i64..=3).prop_map(|(b, k)| b.powi(k)),
            inner.clone().prop_map(Expr::cos),
            inner.prop_map(|a| (Expr::rational(1, 4) * a).exp()),
        ]
    })
}

fn zero(e: &Expr, ctx: &Context) -> bool {
    is_identically_zero(e, ctx, &ZeroTestConfig::default()).is_zero()
}

fn scalar_sys(f: Expr, s: Expr) -> ItoSystem {
    ItoSystem::new(scalar_ctx(), vec![f], vec![vec![s]]).unwrap()
}

fn ratio() -> impl Strategy<Value = f64> {
    (-4i32..=4).prop_map(|k| k as f64 / 2.0)
}

fn matrix(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(ratio(), m * m).prop_map(move |v| DMatrix::from_row_slice(m, m, &v))
}

fn example7() -> Model {
    bundled_model("example7").unwrap().unwrap()
}

fn same_field(a: &VectorField, b: &VectorField, ctx: &Context) -> bool {
    let m = ctx.m;
    a.phi.iter().zip(&b.phi).all(|(p, q)| zero(&(p - q), ctx))
        && a.h(m).iter().zip(b.h(m).iter()).all(|(p, q)| zero(&(p - q), ctx))
}

fn negated(x: &VectorField) -> VectorField {
    let m = x.h(2).len();
    VectorField::general_h(x.phi.iter().map(|p| -p).collect(), x.h(m).iter().map(|h| -h).collect())
}

fn sum3(a: &VectorField, b: &VectorField, c: &VectorField) -> VectorField {
    let m = a.h(2).len();
    let add = |u: &[Expr], v: &[Expr], w: &[Expr]| -> Vec<Expr> {
        u.iter().zip(v).zip(w).map(|((x, y), z)| Expr::sum(vec![x.clone(), y.clone(), z.clone()])).collect()
    };
    VectorField::general_h(add(&a.phi, &b.phi, &c.phi), add(&a.h(m), &b.h(m), &c.h(m)))
}

#[test]
fn bracket_antisymmetry_and_jacobi() {
    let model = example7();
    let ctx = model.ctx();
    let fields: Vec<&VectorField> = model.fields.values().collect();
    for x in &fields {
        for y in &fields {
            let xy = lie_bracket(x, y).unwrap();
            let yx = lie_bracket(y, x).unwrap();
            assert!(same_field(&xy, &negated(&yx), ctx));
        }
    }
    let zero_field = VectorField::general_h(vec![Expr::zero(); 2], vec![Expr::zero(); 2]);
    for a in 0..4 {
        for b in a + 1..4 {
            for c in b + 1..4 {
                let (x, y, z) = (fields[a], fields[b], fields[c]);
                let j1 = lie_bracket(x, &lie_bracket(y, z).unwrap()).unwrap();
                let j2 = lie_bracket(y, &lie_bracket(z, x).unwrap()).unwrap();
                let j3 = lie_bracket(z, &lie_bracket(x, y).unwrap()).unwrap();
                assert!(same_field(&sum3(&j1, &j2, &j3), &zero_field, ctx), "{a}{b}{c}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn diffusion_family_is_calculus_free(f in smooth(false), s in smooth(false), phi in smooth(true), r in ratio()) {
        let sys = scalar_sys(f, s);
        let x = VectorField::linear_w(vec![phi], DMatrix::from_element(1, 1, r));
        let opts = ResidualOptions::default();
        let ito = residual_w_ito(&x, &sys, &opts).unwrap();
        let strat = residual_w_strat(&x, &ito_to_strat(&sys), &opts).unwrap();
        let a = &ito.family("diffusion").unwrap().residuals[0].expr;
        let b = &strat.family("diffusion").unwrap().residuals[0].expr;
        prop_assert!(zero(&(a - b), sys.ctx()));
    }

    #[test]
    fn w_residuals_reduce_to_standard(f in smooth(false), s in smooth(false), phi in smooth(false)) {
        let sys = scalar_sys(f, s);
        let opts = ResidualOptions::default();
        let w = residual_w_ito(&VectorField::linear_w(vec![phi.clone()], DMatrix::zeros(1, 1)), &sys, &opts).unwrap();
        let std = residual_standard_ito(&VectorField::simple(vec![phi]), &sys, &opts).unwrap();
        for fam in ["drift", "diffusion"] {
            let a = &w.family(fam).unwrap().residuals[0].expr;
            let b = &std.family(fam).unwrap().residuals[0].expr;
            prop_assert!(zero(&(a - b), sys.ctx()), "{fam}");
        }
    }

    #[test]
    fn conformal_closure(a in matrix(3), b in matrix(3), l1 in ratio(), l2 in ratio()) {
        let skew = |m: &DMatrix<f64>| (m - m.transpose()) * 0.5;
        let id = DMatrix::<f64>::identity(3, 3);
        let (p, q) = (skew(&a) + &id * l1, skew(&b) + &id * l2);
        prop_assert!(conformal_check(&p).is_admissible());
        prop_assert!(conformal_check(&(&p + &q)).is_admissible());
        prop_assert!(conformal_check(&p.transpose()).is_admissible());
        prop_assert!(conformal_check(&(&p * 2.5)).is_admissible());
        // symmetric with unequal diagonal
        let mut s = &a + a.transpose();
        s[(0, 0)] = s[(1, 1)] + 1.0;
        prop_assert!(!conformal_check(&s).is_admissible());
    }

    #[test]
    fn scalar_agreement_guaranteed_iff_trivial(f in smooth(false), s in smooth(false), phi in smooth(true), r in ratio()) {
        let sys = scalar_sys(f, s.clone());
        let ctx = sys.ctx().clone();
        let constant_sigma = zero(&s.diff(VarId::State(0)), &ctx);
        let x = VectorField::linear_w(vec![phi], DMatrix::from_element(1, 1, r));
        let rep = theorem1_analysis(&x, &sys, &ResidualOptions::default()).unwrap();
        prop_assert!(rep.raw_identity.is_zero());
        let guaranteed = matches!(rep.agreement, Agreement::Guaranteed { .. });
        prop_assert_eq!(guaranteed, constant_sigma || r == 0.0);
    }

    #[test]
    fn appendix_b_shapes_are_never_symmetries(lam in 1i32..=8, neg in any::<bool>(), mu in 1i32..=8, r in 1i32..=6) {
        let lam = if neg { -(lam as f64) / 4.0 } else { lam as f64 / 4.0 };
        let text = BUNDLED.iter().find(|(n, _)| *n == "appendix_b").unwrap().1
            .replace("lam = -1.0", &format!("lam = {lam}"))
            .replace("mu = 0.5", &format!("mu = {}", mu as f64 / 4.0))
            .replace("R = [[1.0]]", &format!("R = [[{}]]", r as f64 / 2.0));
        let model = Model::from_str(&text).unwrap();
        let sys = model.system.ito();
        for (name, x) in &model.fields {
            let rep = residual_w_ito(x, &sys, &ResidualOptions::default()).unwrap();
            prop_assert!(matches!(rep.verdict, Verdict::NotSymmetry { .. }), "{} {:?}", name, rep.verdict);
        }
    }
}
