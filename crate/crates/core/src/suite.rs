//! Regression suite over the bundled example models.

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{check_field, FieldReport};
use crate::expr::{is_identically_zero, parse, Context, Expr, VarId};
use crate::kozlov::{bcomp_check, integrate_scalar, transform_ito, transform_w, GeneralSde};
use crate::model::{Model, ModelError};
use crate::symmetry::{solvability_check, Agreement, ResidualOptions, Solvability, Verdict};

/// Model sources compiled into the library, keyed by example name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("example1", include_str!("../models/example01.toml")),
    ("example2", include_str!("../models/example02.toml")),
    ("example3", include_str!("../models/example03.toml")),
    ("example4", include_str!("../models/example04.toml")),
    ("example5", include_str!("../models/example05.toml")),
    ("example6", include_str!("../models/example06.toml")),
    ("example7", include_str!("../models/example07.toml")),
    ("example8", include_str!("../models/example08.toml")),
    ("example9", include_str!("../models/example09.toml")),
    ("example10", include_str!("../models/example10.toml")),
    ("example11", include_str!("../models/example11.toml")),
    ("example12", include_str!("../models/example12.toml")),
    ("appendix_b", include_str!("../models/appendix_b.toml")),
    ("linear", include_str!("../models/linear.toml")),
    ("geometric", include_str!("../models/geometric.toml")),
];

pub fn bundled_model(name: &str) -> Option<Result<Model, ModelError>> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, src)| Model::from_str(src))
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown example '{0}' (known: {1})")]
    UnknownExample(String, String),
    #[error("{0}: {1}")]
    Model(String, ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub what: String,
    pub expected: String,
    pub got: String,
    pub pass: bool,
    pub inconclusive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleEntry {
    pub name: String,
    pub model_hash: String,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub inconclusive: bool,
}

type Runner = fn(&Model, &ResidualOptions) -> Vec<Check>;

const EXAMPLES: &[(&str, Runner)] = &[
    ("example1", example1),
    ("example2", example2),
    ("example3", example3),
    ("example4", example4),
    ("example5", example5),
    ("example6", example6),
    ("example7", example7),
    ("example8", example8),
    ("example9", example9),
    ("example10", example10),
    ("example11", example11),
    ("example12", example12),
    ("appendix_b", appendix_b),
];

pub fn example_names() -> Vec<&'static str> {
    EXAMPLES.iter().map(|(n, _)| *n).collect()
}

/// Runs every example, or only `only`.
pub fn run_examples(only: Option<&str>) -> Result<Vec<ExampleEntry>, SuiteError> {
    let selected: Vec<&(&str, Runner)> = match only {
        None => EXAMPLES.iter().collect(),
        Some(name) => {
            let e = EXAMPLES
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| SuiteError::UnknownExample(name.to_string(), example_names().join(", ")))?;
            vec![e]
        }
    };
    let mut out = Vec::new();
    for (name, run) in selected {
        let model = bundled_model(name)
            .expect("every example has a bundled model")
            .map_err(|e| SuiteError::Model(name.to_string(), e))?;
        let opts = ResidualOptions {
            zero: model.zero.clone(),
            force: false,
        };
        let checks = run(&model, &opts);
        out.push(ExampleEntry {
            name: name.to_string(),
            model_hash: model.hash.clone(),
            pass: checks.iter().all(|c| c.pass),
            inconclusive: checks.iter().any(|c| c.inconclusive),
            checks,
        });
    }
    Ok(out)
}

fn check(what: impl Into<String>, expected: impl Into<String>, got: impl Into<String>, pass: bool) -> Check {
    Check {
        what: what.into(),
        expected: expected.into(),
        got: got.into(),
        pass,
        inconclusive: false,
    }
}

fn word(b: bool) -> &'static str {
    if b {
        "symmetry"
    } else {
        "not a symmetry"
    }
}

fn verdict_text(r: Option<&crate::symmetry::SymmetryReport>, errors: &[String]) -> String {
    match r {
        Some(r) => match &r.verdict {
            Verdict::Symmetry => "symmetry".into(),
            Verdict::NotSymmetry { .. } => "not a symmetry".into(),
            Verdict::Inconclusive => "inconclusive".into(),
        },
        None => format!("not evaluated ({})", errors.join("; ")),
    }
}

/// Verdict checks; `None` skips a calculus.
fn verdicts(fr: &FieldReport, ito: Option<bool>, strat: Option<bool>) -> Vec<Check> {
    let mut out = Vec::new();
    for (calc, want, rep) in [("Ito", ito, fr.ito.as_ref()), ("Stratonovich", strat, fr.strat.as_ref())] {
        let Some(want) = want else { continue };
        let got = verdict_text(rep, &fr.errors);
        let pass = rep.is_some_and(|r| r.is_symmetry() == want && !matches!(r.verdict, Verdict::Inconclusive));
        let mut c = check(format!("{} in {calc} calculus", fr.name), word(want), got, pass);
        c.inconclusive = rep.is_some_and(|r| matches!(r.verdict, Verdict::Inconclusive));
        out.push(c);
    }
    out
}

fn field_checks(model: &Model, name: &str, opts: &ResidualOptions, ito: Option<bool>, strat: Option<bool>) -> Vec<Check> {
    match model.field(name) {
        Ok(x) => verdicts(&check_field(name, x, &model.system, opts), ito, strat),
        Err(e) => vec![check(name, "field present", e.to_string(), false)],
    }
}

fn rejected(model: &Model, name: &str, opts: &ResidualOptions) -> Check {
    let fr = check_field(name, model.field(name).expect("bundled field"), &model.system, opts);
    let admissible = fr.classification.admissible;
    check(
        format!("{name} admissibility"),
        "rejected (R not conformal)",
        if admissible { "admissible".to_string() } else { fr.classification.reasons.join("; ") },
        !admissible,
    )
}

fn admissible(model: &Model, name: &str, opts: &ResidualOptions) -> Check {
    let fr = check_field(name, model.field(name).expect("bundled field"), &model.system, opts);
    let ok = fr.classification.admissible;
    check(
        format!("{name} admissibility"),
        "admissible",
        if ok { "admissible".to_string() } else { fr.classification.reasons.join("; ") },
        ok,
    )
}

fn forced(opts: &ResidualOptions) -> ResidualOptions {
    ResidualOptions {
        zero: opts.zero.clone(),
        force: true,
    }
}

/// `got - expected` vanishes (expression parsed in `ctx`).
fn same(what: &str, got: &Expr, expected: &str, ctx: &Context, opts: &ResidualOptions) -> Check {
    let text = got.display(ctx).to_string();
    match parse(expected, ctx) {
        Ok(e) => {
            let z = is_identically_zero(&(got - e), ctx, &opts.zero);
            let mut c = check(what, expected, text, z.is_zero());
            c.inconclusive = z.is_inconclusive();
            c
        }
        Err(e) => check(what, expected, format!("bad expected expression: {e}"), false),
    }
}

fn transformed(what: &str, r: Result<GeneralSde, crate::kozlov::KozlovError>) -> Result<GeneralSde, Check> {
    r.map_err(|e| check(what, "transformation succeeds", e.to_string(), false))
}

fn example1(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let mut out = field_checks(model, "X", opts, Some(true), None);
    let cov = model.cov("kozlov").expect("bundled cov");
    match transformed("Kozlov variable", transform_ito(&model.system.ito(), cov, &opts.zero)) {
        Ok(t) => {
            out.push(same("reduced drift", &t.drift[0], "1", &t.ctx, opts));
            out.push(same("reduced diffusion", &t.diffusion[0][0], "1", &t.ctx, opts));
            out.push(check("reduced equation is Ito", "true", t.is_ito_like().to_string(), t.is_ito_like()));
            let sf = integrate_scalar(&t, Some(cov), &opts.zero);
            out.push(check(
                "explicit solution",
                "x0 + t + w(t), mapped back by log(x - K)",
                match &sf {
                    Ok(sf) => format!("F = {}, S = {:?}, back map {:?}", sf.drift_text, sf.diffusion_text, sf.to_old_text),
                    Err(e) => e.to_string(),
                },
                sf.is_ok(),
            ));
        }
        Err(c) => out.push(c),
    }
    out
}

fn example2(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let mut out = field_checks(model, "X", opts, Some(true), None);
    out.extend(field_checks(model, "Xdet", opts, Some(false), None));
    let sys = model.system.ito();
    let ctx = model.ctx();
    match bcomp_check(&sys, &model.field("X").expect("bundled").phi[0], &opts.zero) {
        Ok(b) => {
            out.push(same("compatibility lhs", &b.lhs_expr, "0", ctx, opts));
            out.push(same("compatibility rhs", &b.rhs_expr, "exp(w)", ctx, opts));
            out.push(check("compatibility holds", "false", b.compatible().to_string(), !b.compatible()));
        }
        Err(e) => out.push(check("compatibility", "evaluated", e.to_string(), false)),
    }
    match transformed("random change of variables", transform_ito(&sys, model.cov("kozlov").expect("bundled"), &opts.zero)) {
        Ok(t) => {
            out.push(same("transformed drift", &t.drift[0], "exp(w)", &t.ctx, opts));
            out.push(same("transformed diffusion", &t.diffusion[0][0], "0", &t.ctx, opts));
            out.push(check("transformed equation is Ito", "false", t.is_ito_like().to_string(), !t.is_ito_like()));
        }
        Err(c) => out.push(c),
    }
    let x1 = model.field("X1").expect("bundled");
    let c = crate::symmetry::classify(x1, ctx, &opts.zero);
    out.push(check(
        "X1 = d_w with h = 1",
        "W-acting, not of the form R w",
        format!("w_acting = {}, linear = {}", c.w_acting, crate::symmetry::linear_w_matrix(&x1.h(1), ctx, &opts.zero).is_some()),
        c.w_acting && crate::symmetry::linear_w_matrix(&x1.h(1), ctx, &opts.zero).is_none(),
    ));
    out
}

fn example3(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let x = model.field("X").expect("bundled");
    let fr = check_field("X", x, &model.system, opts);
    let mut out = verdicts(&fr, Some(true), Some(true));
    if let Some(t1) = &fr.theorem1 {
        let g = matches!(t1.agreement, Agreement::Guaranteed { .. });
        out.push(check("calculi agree", "guaranteed (constant sigma)", format!("{:?}", t1.agreement), g));
    }
    match transformed("scaling coordinates", transform_w(&model.system.ito(), model.cov("scaling").expect("bundled"), &opts.zero)) {
        Ok(t) => {
            out.push(same("adapted diffusion", &t.diffusion[0][0], "mu/(1 - mu*zeta)", &t.ctx, opts));
            out.push(same(
                "adapted drift",
                &t.drift[0],
                "(lam + mu^2/(2*(1 - mu*zeta)))/(1 - mu*zeta)",
                &t.ctx,
                opts,
            ));
            out.push(check("adapted equation is Ito", "false", t.is_ito_like().to_string(), !t.is_ito_like()));
            let free = t.independent_of(VarId::State(0), &opts.zero);
            out.push(check("coefficients free of xi", "true", free.is_zero().to_string(), free.is_zero()));
        }
        Err(c) => out.push(c),
    }
    out
}

fn example4(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let x = model.field("X").expect("bundled");
    let fr = check_field("X", x, &model.system, opts);
    let mut out = verdicts(&fr, Some(true), Some(false));
    if let Some(s) = &fr.strat {
        let r = &s.family("drift").expect("drift family").residuals[0].expr;
        out.push(same("Stratonovich drift residual", r, "alpha*(alpha - 1)*mu^2*x^(2*alpha - 1)", model.ctx(), opts));
    }
    if let Some(t1) = &fr.theorem1 {
        let broken = matches!(t1.agreement, Agreement::Broken { .. });
        out.push(check("calculi agree", "broken", format!("{:?}", t1.agreement), broken));
    }
    out
}

fn example5(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    field_checks(model, "X", opts, Some(true), Some(false))
}

fn example6(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let mut out = vec![admissible(model, "X1", opts), rejected(model, "X2", opts)];
    out.extend(field_checks(model, "X1", opts, Some(true), Some(true)));
    out.extend(field_checks(model, "X2", &forced(opts), Some(true), Some(true)));
    out
}

fn example7(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let mut out = vec![
        admissible(model, "X1", opts),
        rejected(model, "X2", opts),
        rejected(model, "X3", opts),
        admissible(model, "X4", opts),
    ];
    let f = forced(opts);
    for name in ["X1", "X2", "X3", "X4"] {
        out.extend(field_checks(model, name, &f, Some(true), Some(true)));
    }
    let gens: Vec<_> = ["X1", "X2", "X3", "X4"].iter().map(|n| model.field(n).expect("bundled").clone()).collect();
    let mut expected = vec![vec![vec![0.0; 4]; 4]; 4];
    let mut set = |i: usize, j: usize, k: usize, v: f64| {
        expected[i][j][k] = v;
        expected[j][i][k] = -v;
    };
    set(1, 2, 3, -2.0);
    set(1, 3, 2, -2.0);
    set(2, 3, 1, 2.0);
    match solvability_check(&gens, model.ctx(), &opts.zero) {
        Ok(Solvability::NotSolvable { constants, .. }) | Ok(Solvability::Solvable { constants, .. }) => {
            let dev = constants
                .0
                .iter()
                .flatten()
                .flatten()
                .zip(expected.iter().flatten().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            out.push(check("commutator table", "entries 0, +-2", format!("max deviation {dev:.1e}"), dev < 1e-9));
        }
        Ok(other) => out.push(check("commutator table", "structure constants", format!("{other:?}"), false)),
        Err(e) => out.push(check("commutator table", "structure constants", e.to_string(), false)),
    }
    match solvability_check(&[gens[0].clone(), gens[3].clone()], model.ctx(), &opts.zero) {
        Ok(Solvability::Solvable { abelian, .. }) => {
            out.push(check("{X1, X4} subalgebra", "abelian", if abelian { "abelian" } else { "solvable" }, abelian))
        }
        other => out.push(check("{X1, X4} subalgebra", "abelian", format!("{other:?}"), false)),
    }
    out
}

fn example8(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    field_checks(model, "X", opts, Some(true), Some(true))
}

fn example9(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let mut out = field_checks(model, "Xh", opts, Some(true), Some(true));
    out.extend(field_checks(model, "Xshift", opts, Some(true), None));
    out
}

fn example10(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    field_checks(model, "X", opts, Some(true), Some(true))
}

fn example11(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let mut out = field_checks(model, "Xtheta", opts, Some(true), None);
    out.extend(field_checks(model, "Xsin", opts, Some(true), None));
    out.extend(field_checks(model, "Xprinted", opts, Some(false), None));
    let x = model.field("Xtheta").expect("bundled");
    out.push(same("X_theta with Theta(y) = B R y", &x.phi[0], "B*w", model.ctx(), opts));
    let c = crate::symmetry::classify(x, model.ctx(), &opts.zero);
    out.push(check("X_theta is non-split", "phi depends on w", c.random.to_string(), c.random));
    out
}

fn example12(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let mut out = field_checks(model, "X", opts, None, Some(true));
    match transformed("log variable", transform_ito(&model.system.ito(), model.cov("log").expect("bundled"), &opts.zero)) {
        Ok(t) => {
            let dep = t.independent_of(VarId::State(0), &opts.zero);
            out.push(check(
                "coefficients after xi = log x depend on xi",
                "true",
                format!("F = {}, S = {}", t.drift_text[0], t.diffusion_text[0][0]),
                dep.is_nonzero(),
            ));
        }
        Err(c) => out.push(c),
    }
    out
}

fn appendix_b(model: &Model, opts: &ResidualOptions) -> Vec<Check> {
    let mut out = Vec::new();
    for name in ["B1", "B2", "B3"] {
        let fr = check_field(name, model.field(name).expect("bundled"), &model.system, opts);
        let witness = match fr.ito.as_ref().map(|r| &r.verdict) {
            Some(Verdict::NotSymmetry { witness }) => format!("witness {:.3e} at {:?}", witness.value, witness.point),
            _ => verdict_text(fr.ito.as_ref(), &fr.errors),
        };
        let pass = matches!(fr.ito.as_ref().map(|r| &r.verdict), Some(Verdict::NotSymmetry { .. }));
        out.push(check(format!("{name} in Ito calculus"), "not a symmetry (nonzero witness)", witness, pass));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_unknown() {
        let one = run_examples(Some("example4")).unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(run_examples(Some("example99")), Err(SuiteError::UnknownExample(..))));
    }

    #[test]
    fn full_suite_passes() {
        let all = run_examples(None).unwrap();
        let failed: Vec<_> = all
            .iter()
            .flat_map(|e| e.checks.iter().filter(|c| !c.pass).map(move |c| (e.name.clone(), c.clone())))
            .collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }
}
