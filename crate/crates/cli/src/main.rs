use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use itosym::analysis::check_field;
use itosym::expr::Context;
use itosym::kozlov::{
    integrate_scalar, reduce_sequence, reduce_step, transform_ito, ChangeOfVariables, KozlovError, StepOutcome,
};
use itosym::model::{Model, ModelError, System};
use itosym::montecarlo::{
    euler_maruyama, heun_stratonovich, pipeline_check, symmetry_validation, GridSpec, McError, SimOptions, StatVerdict,
};
use itosym::sde::Diffusion;
use itosym::suite::{bundled_model, run_examples, SuiteError};
use itosym::symmetry::{classify, ResidualOptions, Verdict};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_DT: f64 = 1e-3;
const DEFAULT_PATHS: usize = 2000;
const DEFAULT_HORIZON: f64 = 1.0;

/// Symmetry analysis and reduction of Ito and Stratonovich equations.
#[derive(Parser)]
#[command(name = "itosym", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Print the full report as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Exit with status 3 when any verdict is inconclusive.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Args, Clone)]
struct ModelArg {
    /// Model file, or the name of a bundled model (e.g. example4).
    #[arg(long)]
    model: String,
}

#[derive(Args, Clone, Default)]
struct SimArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Group parameter for symmetry validation.
    #[arg(long, allow_hyphen_values = true)]
    s: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify fields and evaluate the determining equations.
    Check {
        #[command(flatten)]
        model: ModelArg,
        /// Field to verify; without any, only classifications are reported.
        #[arg(long)]
        field: Vec<String>,
        /// Analyze fields whose R is not conformal.
        #[arg(long)]
        force: bool,
    },
    /// Rewrite the equation in the other calculus.
    Convert {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Reduce a scalar equation by one symmetry and integrate it.
    Integrate {
        #[command(flatten)]
        model: ModelArg,
        /// Symmetry to reduce by; needs --cov.
        #[arg(long, requires = "cov")]
        field: Option<String>,
        /// Change of variables rectifying the field; needs --field.
        #[arg(long, requires = "field")]
        cov: Option<String>,
        #[arg(long)]
        force: bool,
        /// Compare the explicit solution with Euler-Maruyama paths.
        #[arg(long)]
        validate: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Reduce by an ordered list of symmetries.
    Reduce {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, required = true)]
        field: Vec<String>,
        #[arg(long, required = true)]
        cov: Vec<String>,
        /// Coordinate rectified at each step (default 0).
        #[arg(long)]
        target: Vec<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Simulate the model; with --field, also validate the symmetry.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        field: Option<String>,
        #[command(flatten)]
        sim: SimArgs,
        /// Write mean/variance/SE per time to this CSV file.
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
    /// Run the bundled example suite.
    Examples {
        #[arg(long)]
        only: Option<String>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kozlov(#[from] KozlovError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("writing csv: {0}")]
    Csv(#[from] csv_error::Error),
    #[error("{0}")]
    Usage(String),
}

mod csv_error {
    /// Wrapper so the binary does not need its own csv dependency.
    #[derive(Debug, thiserror::Error)]
    #[error("{0}")]
    pub struct Error(pub String);
}

/// What the command found, beyond plain success.
#[derive(Default)]
struct Outcome {
    failed: bool,
    inconclusive: bool,
}

struct Loaded {
    model: Model,
    source: String,
}

fn load(arg: &ModelArg) -> Result<Loaded, CliError> {
    let path = Path::new(&arg.model);
    if !path.exists() {
        if let Some(m) = bundled_model(&arg.model) {
            return Ok(Loaded {
                model: m?,
                source: format!("bundled:{}", arg.model),
            });
        }
    }
    Ok(Loaded {
        model: Model::load(path)?,
        source: path.display().to_string(),
    })
}

fn residual_options(model: &Model, force: bool) -> ResidualOptions {
    ResidualOptions {
        zero: model.zero.clone(),
        force,
    }
}

fn header(cmd: &str, l: &Loaded, force: bool) -> Value {
    json!({
        "command": cmd,
        "model": { "name": l.model.name, "source": l.source, "sha256": l.model.hash },
        "zero_test": l.model.zero,
        "force": force,
    })
}

fn sim_options(model: &Model, a: &SimArgs, keep_paths: bool) -> Result<(SimOptions, Vec<f64>, Option<f64>), CliError> {
    let d = &model.simulation;
    let spec = GridSpec::new(
        0.0,
        a.horizon.or(d.horizon).unwrap_or(DEFAULT_HORIZON),
        a.dt.or(d.dt).unwrap_or(DEFAULT_DT),
    )?;
    let opts = SimOptions {
        spec,
        paths: a.paths.or(d.paths).unwrap_or(DEFAULT_PATHS),
        seed: a.seed.or(d.seed).unwrap_or(DEFAULT_SEED),
        keep_paths,
    };
    let x0 = a
        .x0
        .clone()
        .or_else(|| d.x0.clone())
        .ok_or_else(|| CliError::Usage("no initial state: pass --x0 or set simulation.x0 in the model".into()))?;
    if x0.len() != model.ctx().n {
        return Err(CliError::Usage(format!("--x0 needs {} components", model.ctx().n)));
    }
    Ok((opts, x0, a.s.or(d.s)))
}

fn verdict_word(v: &Verdict) -> &'static str {
    match v {
        Verdict::Symmetry => "symmetry",
        Verdict::NotSymmetry { .. } => "not a symmetry",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn cmd_check(model: &ModelArg, fields: &[String], force: bool, text: &mut String) -> Result<(Value, Outcome), CliError> {
    let l = load(model)?;
    let m = &l.model;
    let opts = residual_options(m, force);
    let mut out = Outcome::default();
    let mut report = header("check", &l, force);
    if fields.is_empty() {
        let mut list = serde_json::Map::new();
        for (name, x) in &m.fields {
            let c = classify(x, m.ctx(), &m.zero);
            text.push_str(&format!(
                "{name}: random={} w_acting={} admissible={}\n",
                c.random, c.w_acting, c.admissible
            ));
            list.insert(name.clone(), json!(c));
        }
        report["classifications"] = Value::Object(list);
        return Ok((report, out));
    }
    let mut reports = Vec::new();
    for name in fields {
        let fr = check_field(name, m.field(name)?, &m.system, &opts);
        out.inconclusive |= fr.inconclusive();
        let show = |r: &Option<itosym::symmetry::SymmetryReport>| {
            r.as_ref().map_or("not evaluated", |r| verdict_word(&r.verdict))
        };
        text.push_str(&format!(
            "{name}: admissible={} ito: {} stratonovich: {}\n",
            fr.classification.admissible,
            show(&fr.ito),
            show(&fr.strat)
        ));
        for e in &fr.errors {
            text.push_str(&format!("  {e}\n"));
        }
        if let Some(t) = &fr.theorem1 {
            text.push_str(&format!("  calculi: {:?}\n", t.agreement));
        }
        reports.push(json!(fr));
    }
    report["fields"] = Value::Array(reports);
    Ok((report, out))
}

fn exprs<S: Diffusion>(sys: &S) -> Value {
    let ctx = sys.ctx();
    json!({
        "drift": sys.drift().iter().map(|e| e.display(ctx).to_string()).collect::<Vec<_>>(),
        "sigma": sys.sigma().iter().map(|r| r.iter().map(|e| e.display(ctx).to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

fn describe(ctx: &Context, label: &str, v: &Value, text: &mut String) {
    text.push_str(&format!("{label}\n"));
    for (i, f) in v["drift"].as_array().into_iter().flatten().enumerate() {
        text.push_str(&format!("  d{} = ({}) dt", ctx.state_name(i), f.as_str().unwrap_or_default()));
        for (k, s) in v["sigma"][i].as_array().into_iter().flatten().enumerate() {
            text.push_str(&format!(" + ({}) d{}", s.as_str().unwrap_or_default(), ctx.wiener_name(k)));
        }
        text.push('\n');
    }
}

fn cmd_convert(model: &ModelArg, text: &mut String) -> Result<(Value, Outcome), CliError> {
    let l = load(model)?;
    let mut report = header("convert", &l, false);
    let ctx = l.model.ctx();
    let (to, v) = match &l.model.system {
        System::Ito(s) => ("stratonovich", exprs(&s.to_strat())),
        System::Strat(s) => ("ito", exprs(&s.to_ito())),
    };
    describe(ctx, &format!("{to} form:"), &v, text);
    report["calculus"] = json!(to);
    report["system"] = v;
    Ok((report, Outcome::default()))
}

fn cmd_integrate(
    model: &ModelArg,
    reduce: Option<(&str, &str)>,
    force: bool,
    validate: bool,
    sim: &SimArgs,
    text: &mut String,
) -> Result<(Value, Outcome), CliError> {
    let l = load(model)?;
    let m = &l.model;
    let opts = residual_options(m, force);
    let sys = m.system.ito();
    let mut out = Outcome::default();
    let mut report = header("integrate", &l, force);
    let identity;
    let (cov, t) = match reduce {
        Some((field, cov_name)) => {
            let cov = m.cov(cov_name)?;
            let red = reduce_step(&sys, m.field(field)?, cov, 0, &opts)?;
            out.inconclusive = matches!(red.symmetry, Verdict::Inconclusive) || red.independent.is_inconclusive();
            text.push_str(&format!(
                "{field}: {}; reduced drift {}, diffusion {:?}\n",
                verdict_word(&red.symmetry),
                red.transformed.drift_text.join(", "),
                red.transformed.diffusion_text
            ));
            let t = red.transformed.clone();
            report["reduction"] = json!(red);
            (cov, t)
        }
        None => {
            identity = ChangeOfVariables::identity(m.ctx());
            (&identity, transform_ito(&sys, &identity, &m.zero)?)
        }
    };
    let sf = integrate_scalar(&t, Some(cov), &m.zero)?;
    text.push_str(&format!(
        "solution: y(t) = y0 + int {} dt + int {:?} dw; {} = {}\n",
        sf.drift_text,
        sf.diffusion_text,
        m.ctx().state_name(0),
        sf.to_old_text.as_deref().unwrap_or("y")
    ));
    report["solution"] = json!(sf);
    if validate {
        let (sopts, x0, _) = sim_options(m, sim, false)?;
        let p = pipeline_check(&sf, &sys, x0[0], &sopts)?;
        text.push_str(&format!(
            "validation: {:?} (max z = {:.2}, {} paths, excluded {:.1}%)\n",
            p.verdict,
            p.comparison.z.iter().copied().fold(0.0, f64::max),
            p.included,
            100.0 * p.excluded_fraction
        ));
        out.inconclusive |= p.verdict == StatVerdict::Inconclusive;
        out.failed |= p.verdict == StatVerdict::Fail;
        report["validation"] = json!(p);
    }
    Ok((report, out))
}

fn cmd_reduce(
    model: &ModelArg,
    fields: &[String],
    covs: &[String],
    targets: &[usize],
    force: bool,
    text: &mut String,
) -> Result<(Value, Outcome), CliError> {
    let l = load(model)?;
    let m = &l.model;
    if fields.len() != covs.len() {
        return Err(CliError::Usage("give one --cov per --field".into()));
    }
    let targets: Vec<usize> = match targets.len() {
        0 => vec![0; fields.len()],
        n if n == fields.len() => targets.to_vec(),
        _ => return Err(CliError::Usage("give one --target per --field, or none".into())),
    };
    let gens = fields.iter().map(|f| m.field(f).cloned()).collect::<Result<Vec<_>, _>>()?;
    let cs = covs.iter().map(|c| m.cov(c).cloned()).collect::<Result<Vec<_>, _>>()?;
    let chain = reduce_sequence(&m.system.ito(), &gens, &cs, &targets, &residual_options(m, force))?;
    let mut out = Outcome {
        failed: !chain.completed,
        ..Outcome::default()
    };
    for (q, s) in chain.steps.iter().enumerate() {
        match s {
            StepOutcome::Reduced(r) => {
                out.inconclusive |= matches!(r.symmetry, Verdict::Inconclusive) || r.independent.is_inconclusive();
                text.push_str(&format!(
                    "step {}: drift {}, diffusion {:?}\n",
                    q + 1,
                    r.transformed.drift_text.join(", "),
                    r.transformed.diffusion_text
                ));
            }
            StepOutcome::Failed { reason } => text.push_str(&format!("step {}: failed: {reason}\n", q + 1)),
        }
    }
    if let Some(a) = &chain.aborted {
        text.push_str(&format!("aborted: {a}\n"));
    }
    let mut report = header("reduce", &l, force);
    report["chain"] = json!(chain);
    Ok((report, out))
}

fn cmd_simulate(
    model: &ModelArg,
    field: Option<&str>,
    sim: &SimArgs,
    csv_out: Option<&Path>,
    text: &mut String,
) -> Result<(Value, Outcome), CliError> {
    let l = load(model)?;
    let m = &l.model;
    let (opts, x0, s) = sim_options(m, sim, false)?;
    let ens = match &m.system {
        System::Ito(sys) => euler_maruyama(sys, &x0, &opts)?,
        System::Strat(sys) => heun_stratonovich(sys, &x0, &opts)?,
    };
    if let Some(path) = csv_out {
        let f = File::create(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        ens.stats.write_csv(f).map_err(|e| csv_error::Error(e.to_string()))?;
    }
    text.push_str(&format!(
        "{:?}: {} paths, terminal mean {:?}, variance {:?}\n",
        ens.scheme,
        ens.stats.n_effective,
        ens.stats.terminal_mean(),
        ens.stats.terminal_var()
    ));
    let mut out = Outcome::default();
    let mut report = header("simulate", &l, false);
    report["options"] = json!(opts);
    report["x0"] = json!(x0);
    report["ensemble"] = json!(ens);
    if let Some(name) = field {
        let s = s.ok_or_else(|| CliError::Usage("validation needs --s or simulation.s in the model".into()))?;
        let v = symmetry_validation(&m.system.dynamics(), m.field(name)?, s, &x0, &opts, &m.zero)?;
        text.push_str(&format!(
            "{name} at s = {s}: {:?} (max z = {:.2}, KS D = {:.4}, excluded {:.1}%)\n",
            v.verdict,
            v.comparison.z.iter().copied().fold(0.0, f64::max),
            v.comparison.ks.iter().map(|k| k.statistic).fold(0.0, f64::max),
            100.0 * v.excluded_fraction
        ));
        out.inconclusive |= v.verdict == StatVerdict::Inconclusive;
        out.failed |= v.verdict == StatVerdict::Fail;
        report["validation"] = json!(v);
    }
    Ok((report, out))
}

fn cmd_examples(only: Option<&str>, text: &mut String) -> Result<(Value, Outcome), CliError> {
    let entries = run_examples(only)?;
    let mut out = Outcome::default();
    for e in &entries {
        text.push_str(&format!("{:<11} {}\n", e.name, if e.pass { "PASS" } else { "FAIL" }));
        for c in e.checks.iter().filter(|c| !c.pass) {
            text.push_str(&format!("  {}: expected {}, got {}\n", c.what, c.expected, c.got));
        }
        out.failed |= !e.pass;
        out.inconclusive |= e.inconclusive;
    }
    Ok((json!({ "command": "examples", "entries": entries }), out))
}

fn run(cli: &Cli) -> Result<(Value, Outcome, String), CliError> {
    let mut text = String::new();
    let (report, outcome) = match &cli.cmd {
        Cmd::Check { model, field, force } => cmd_check(model, field, *force, &mut text)?,
        Cmd::Convert { model } => cmd_convert(model, &mut text)?,
        Cmd::Integrate {
            model,
            field,
            cov,
            force,
            validate,
            sim,
        } => {
            let reduce = field.as_deref().zip(cov.as_deref());
            cmd_integrate(model, reduce, *force, *validate, sim, &mut text)?
        }
        Cmd::Reduce {
            model,
            field,
            cov,
            target,
            force,
        } => cmd_reduce(model, field, cov, target, *force, &mut text)?,
        Cmd::Simulate {
            model,
            field,
            sim,
            csv_out,
        } => cmd_simulate(model, field.as_deref(), sim, csv_out.as_deref(), &mut text)?,
        Cmd::Examples { only } => cmd_examples(only.as_deref(), &mut text)?,
    };
    Ok((report, outcome, text))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok((report, outcome, text)) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{text}");
            }
            let examples = matches!(cli.cmd, Cmd::Examples { .. });
            if examples && outcome.failed {
                ExitCode::from(2)
            } else if cli.strict && outcome.inconclusive {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
