//! One-call symmetry analysis of a vector field against a model, in both
//! calculi, as used by the command-line `check` and the examples suite.

use serde::Serialize;

use crate::expr::Expr;
use crate::model::System;
use crate::symmetry::{
    classify, residual_standard_ito, residual_w_ito, residual_w_strat, theorem1_analysis, Classification,
    DiscrepancyReport, Noise, ResidualOptions, SymmetryReport, VectorField,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldReport {
    pub name: String,
    pub classification: Classification,
    /// Determining equations of the Ito form.
    pub ito: Option<SymmetryReport>,
    /// Determining equations of the Stratonovich form.
    pub strat: Option<SymmetryReport>,
    /// Ito versus Stratonovich comparison for linear W-fields.
    pub theorem1: Option<DiscrepancyReport>,
    /// Why a family of equations was not evaluated.
    pub errors: Vec<String>,
}

impl FieldReport {
    pub fn ito_symmetry(&self) -> bool {
        self.ito.as_ref().is_some_and(SymmetryReport::is_symmetry)
    }

    pub fn strat_symmetry(&self) -> bool {
        self.strat.as_ref().is_some_and(SymmetryReport::is_symmetry)
    }

    pub fn inconclusive(&self) -> bool {
        self.ito.iter().chain(&self.strat).any(|r| matches!(r.verdict, crate::symmetry::Verdict::Inconclusive))
    }
}

/// Runs every applicable set of determining equations. Fields without a
/// noise part use the standard equations for the Ito form and the
/// `h = 0` W-equations for the Stratonovich form.
pub fn check_field(name: &str, x: &VectorField, system: &System, opts: &ResidualOptions) -> FieldReport {
    let ctx = system.ctx();
    let ito_sys = system.ito();
    let strat_sys = system.strat();
    let mut errors = Vec::new();
    let classification = classify(x, ctx, &opts.zero);
    let (ito, strat) = match &x.noise {
        Noise::None => {
            let as_w = VectorField::general_h(x.phi.clone(), vec![Expr::zero(); ctx.m]).with_tau(x.tau.clone());
            (residual_standard_ito(x, &ito_sys, opts), residual_w_strat(&as_w, &strat_sys, opts))
        }
        _ => (residual_w_ito(x, &ito_sys, opts), residual_w_strat(x, &strat_sys, opts)),
    };
    let mut keep = |r: Result<SymmetryReport, _>, what: &str| match r {
        Ok(r) => Some(r),
        Err(e) => {
            errors.push(format!("{what}: {e}"));
            None
        }
    };
    let ito = keep(ito, "ito");
    let strat = keep(strat, "stratonovich");
    let theorem1 = match &x.noise {
        Noise::LinearW(_) if ito.is_some() => match theorem1_analysis(x, &ito_sys, opts) {
            Ok(r) => Some(r),
            Err(e) => {
                errors.push(format!("theorem1: {e}"));
                None
            }
        },
        _ => None,
    };
    FieldReport {
        name: name.to_string(),
        classification,
        ito,
        strat,
        theorem1,
        errors,
    }
}
