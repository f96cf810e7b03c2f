use itosym::expr::{Context, Expr, ParamValue};
use itosym::montecarlo::{euler_maruyama, heun_stratonovich, Ensemble, GridSpec, SimOptions};
use itosym::sde::{ito_to_strat, ItoSystem};
use itosym::suite::bundled_model;
use proptest::prelude::*;

fn opts(dt: f64, paths: usize, seed: u64, keep_paths: bool) -> SimOptions {
    SimOptions {
        spec: GridSpec::new(0.0, 1.0, dt).unwrap(),
        paths,
        seed,
        keep_paths,
    }
}

fn constant(a: f64, b: f64) -> ItoSystem {
    let ctx = Context::scalar()
        .with_param("A", ParamValue::Numeric(a))
        .unwrap()
        .with_param("B", ParamValue::Numeric(b))
        .unwrap();
    ItoSystem::new(ctx, vec![Expr::param("A")], vec![vec![Expr::param("B")]]).unwrap()
}

fn z(a: &Ensemble, b: &Ensemble) -> f64 {
    let (ma, mb) = (a.stats.terminal_mean()[0], b.stats.terminal_mean()[0]);
    let (sa, sb) = (a.stats.terminal_se()[0], b.stats.terminal_se()[0]);
    (ma - mb).abs() / (sa * sa + sb * sb).sqrt()
}

#[test]
fn seeds_reproduce() {
    let m = bundled_model("geometric").unwrap().unwrap();
    let sys = m.system.ito();
    let a = euler_maruyama(&sys, &[1.0], &opts(1e-2, 700, 5, false)).unwrap();
    let b = euler_maruyama(&sys, &[1.0], &opts(1e-2, 700, 5, false)).unwrap();
    let c = euler_maruyama(&sys, &[1.0], &opts(1e-2, 700, 6, false)).unwrap();
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.terminal, b.terminal);
    assert_ne!(a.terminal, c.terminal);
}

#[test]
fn em_and_heun_agree_for_state_dependent_noise() {
    for name in ["geometric", "example1"] {
        let m = bundled_model(name).unwrap().unwrap();
        let sys = m.system.ito();
        let x0 = m.simulation.x0.clone().unwrap_or_else(|| vec![1.0]);
        let o = opts(1e-3, 2000, 11, false);
        let em = euler_maruyama(&sys, &x0, &o).unwrap();
        let heun = heun_stratonovich(&ito_to_strat(&sys), &x0, &o).unwrap();
        assert!(z(&em, &heun) < 4.0, "{name}: z = {}", z(&em, &heun));
    }
}

#[test]
fn em_and_heun_pathwise_close_for_constant_noise() {
    let m = bundled_model("linear").unwrap().unwrap();
    let sys = m.system.ito();
    let dt = 1e-3;
    let o = opts(dt, 200, 2, true);
    let em = euler_maruyama(&sys, &[1.0], &o).unwrap();
    let heun = heun_stratonovich(&ito_to_strat(&sys), &[1.0], &o).unwrap();
    let (pa, pb) = (em.paths.unwrap(), heun.paths.unwrap());
    let worst = pa
        .iter()
        .zip(&pb)
        .flat_map(|(a, b)| a.x.iter().zip(&b.x).map(|(u, v)| (u[0] - v[0]).abs()))
        .fold(0.0, f64::max);
    assert!(worst < 5.0 * dt, "max pathwise gap {worst}");
}

/// Error in `E[x_T^2]` of EM against exact OU steps driven by the same increments.
fn second_moment_error(dt: f64) -> f64 {
    let (lam, mu) = (-1.0, 0.5);
    let m = bundled_model("linear").unwrap().unwrap();
    let ens = euler_maruyama(&m.system.ito(), &[1.0], &opts(dt, 4000, 99, true)).unwrap();
    let decay = (lam * dt).exp();
    let scale = mu * ((1.0 - (2.0 * lam * dt).exp()) / (-2.0 * lam * dt)).sqrt();
    let mut sum = 0.0;
    let paths = ens.paths.unwrap();
    for p in &paths {
        let mut x = 1.0;
        for s in 0..p.grid.steps() {
            x = decay * x + scale * p.grid.increment(s)[0];
        }
        let em = p.x.last().unwrap()[0];
        sum += em * em - x * x;
    }
    (sum / paths.len() as f64).abs()
}

#[test]
fn em_weak_order_on_linear_problem() {
    let dts = [4e-3, 2e-3, 1e-3];
    let errs: Vec<f64> = dts.iter().map(|&dt| second_moment_error(dt)).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = dts.iter().zip(&errs).map(|(d, e)| (d.ln(), e.ln())).unzip();
    let (mx, my) = (x.iter().sum::<f64>() / 3.0, y.iter().sum::<f64>() / 3.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    assert!(slope >= 0.9, "weak order {slope}, errors {errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn em_is_exact_for_constant_coefficients(a in -2.0f64..2.0, b in 0.1f64..2.0, x0 in -3.0f64..3.0, seed in any::<u64>()) {
        let ens = euler_maruyama(&constant(a, b), &[x0], &opts(1e-2, 20, seed, true)).unwrap();
        for p in ens.paths.unwrap() {
            let w = p.grid.w_path();
            for (s, x) in p.x.iter().enumerate() {
                let exact = x0 + a * p.grid.spec.time(s) + b * w[s][0];
                prop_assert!((x[0] - exact).abs() < 1e-10 * (1.0 + exact.abs()));
            }
        }
    }
}
