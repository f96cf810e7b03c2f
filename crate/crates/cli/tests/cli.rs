use std::process::{Command, Output};

use serde_json::Value;

fn itosym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itosym")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = itosym(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

#[test]
fn check_example1_standard_symmetry() {
    let r = json(&["check", "--model", "example1", "--field", "X"]);
    let f = &r["fields"][0];
    assert_eq!(f["ito"]["verdict"]["verdict"], "symmetry", "{f:#}");
    assert_eq!(r["model"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["zero_test"]["samples"], 64);
}

#[test]
fn check_example6_conformal_gate() {
    let r = json(&["check", "--model", "example6", "--field", "X1", "--field", "X2"]);
    assert_eq!(r["fields"][0]["classification"]["admissible"], true);
    assert_eq!(r["fields"][1]["classification"]["admissible"], false);
    assert!(r["fields"][1]["ito"].is_null());
    let forced = json(&["check", "--model", "example6", "--field", "X2", "--force"]);
    assert_eq!(forced["fields"][0]["ito"]["verdict"]["verdict"], "symmetry");
}

#[test]
fn check_without_fields_only_classifies() {
    let r = json(&["check", "--model", "example7"]);
    assert!(r.get("fields").is_none());
    assert_eq!(r["classifications"].as_object().unwrap().len(), 4);
}

#[test]
fn convert_examples() {
    let r = json(&["convert", "--model", "example3"]);
    assert_eq!(r["calculus"], "stratonovich");
    assert_eq!(r["system"]["drift"][0], "x1*lam");
    let r = json(&["convert", "--model", "example4"]);
    let b = r["system"]["drift"][0].as_str().unwrap();
    assert!(b.contains("alpha") && b.contains("mu^2"), "{b}");
    let back = json(&["convert", "--model", "example12"]);
    assert_eq!(back["calculus"], "ito");
}

#[test]
fn integrate_pipelines() {
    for (model, extra) in [
        ("example1", &["--field", "X", "--cov", "kozlov"][..]),
        ("example2", &["--field", "X", "--cov", "kozlov"][..]),
        ("example11", &[][..]),
    ] {
        let mut args = vec!["integrate", "--model", model, "--validate", "--paths", "1000", "--seed", "7"];
        args.extend_from_slice(extra);
        let r = json(&args);
        assert_eq!(r["validation"]["verdict"], "pass", "{model}: {:#}", r["validation"]["comparison"]);
        assert!(r["validation"]["excluded_fraction"].as_f64().unwrap() <= 0.05);
    }
}

#[test]
fn reduce_chains() {
    let r = json(&["reduce", "--model", "example8", "--field", "X", "--cov", "polar_psi", "--target", "3"]);
    assert_eq!(r["chain"]["completed"], true);
    assert_eq!(r["chain"]["steps"][0]["independent"]["verdict"], "zero");
    // the W-map leaves a non-Ito equation, so the second step cannot run
    let r = json(&[
        "reduce", "--model", "example7", "--field", "X1", "--field", "X4", "--cov", "scaling", "--cov", "scaling",
        "--target", "0", "--target", "1",
    ]);
    assert_eq!(r["chain"]["completed"], false);
    assert_eq!(r["chain"]["steps"].as_array().unwrap().len(), 1);
    let r = json(&["reduce", "--model", "example1", "--field", "X", "--cov", "kozlov"]);
    assert_eq!(r["chain"]["completed"], true);
}

#[test]
fn simulate_is_deterministic_and_writes_csv() {
    let dir = std::env::temp_dir().join(format!("itosym-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("stats.csv");
    let args = [
        "simulate", "--model", "linear", "--paths", "500", "--seed", "3", "--csv-out", csv.to_str().unwrap(),
    ];
    let a = json(&args);
    let b = json(&args);
    assert_eq!(a["ensemble"]["stats"], b["ensemble"]["stats"]);
    assert_eq!(a["options"]["seed"], 3);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,mean_1,var_1,se_1"));
    assert_eq!(text.lines().count(), 1002);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_identity_map() {
    let r = json(&["simulate", "--model", "example3", "--field", "X", "--s", "0", "--paths", "200"]);
    assert_eq!(r["validation"]["verdict"], "pass");
    assert!(r["validation"]["comparison"]["paired_max"].as_f64().unwrap() < 1e-12);
}

#[test]
fn examples_suite_and_exit_codes() {
    let all = itosym(&["examples"]);
    assert_eq!(all.status.code(), Some(0), "{}", String::from_utf8_lossy(&all.stdout));
    assert_eq!(String::from_utf8_lossy(&all.stdout).lines().count(), 13);
    let one = json(&["examples", "--only", "example4"]);
    assert_eq!(one["entries"].as_array().unwrap().len(), 1);
    assert_eq!(itosym(&["examples", "--only", "example99"]).status.code(), Some(1));
    assert_eq!(itosym(&["nonsense"]).status.code(), Some(1));
    assert_eq!(itosym(&["check", "--model", "/no/such/file.toml"]).status.code(), Some(1));
    assert_eq!(itosym(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_model_reports_position() {
    let dir = std::env::temp_dir().join(format!("itosym-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("bad.toml");
    std::fs::write(&p, "name = \"bad\"\n[system]\nn = 1\nm = 1\ntype = \"ito\"\nf1 = \"x +* 2\"\nsigma_1_1 = \"1\"\n").unwrap();
    let out = itosym(&["check", "--model", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("f1"), "{err}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn strict_turns_inconclusive_into_exit_3() {
    let dir = std::env::temp_dir().join(format!("itosym-inc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("inc.toml");
    // every sample point is outside the domain of log and sqrt
    std::fs::write(
        &p,
        "name = \"inc\"\n[system]\nn = 1\nm = 1\ntype = \"ito\"\nf1 = \"log(x)\"\nsigma_1_1 = \"1\"\n\
         [vectorfield.X]\nphi1 = \"sqrt(x)\"\n[sampling]\nstate = [-2.0, -1.0]\n",
    )
    .unwrap();
    let path = p.to_str().unwrap();
    assert_eq!(itosym(&["check", "--model", path, "--field", "X"]).status.code(), Some(0));
    assert_eq!(itosym(&["--strict", "check", "--model", path, "--field", "X"]).status.code(), Some(3));
    std::fs::remove_dir_all(&dir).ok();
}
