use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smfg")).args(args).output().unwrap()
}

fn run_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smfg"))
        .args(args)
        .env(key, val)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("reproduce"));
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn report_goes_to_stdout_and_summary_to_stderr() {
    let o = run(&[
        "solve",
        "--model",
        &config("predator.json"),
        "--epsilon",
        "0.3",
        "--mesh",
        "0.125",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["command"], "solve");
    assert_eq!(v["model_kind"], "builtin:predator");
    assert!(v["timestamp"].is_u64());
    assert!(v["result"]["seconds"].is_f64());
    assert_eq!(v["result"]["value"], 0.0);
    assert_eq!(v["result"]["guarantee"], "exact-over-mesh");
    assert!(stderr(&o).starts_with("solve: J = 0.0000000"));
}

#[test]
fn out_file_receives_the_report() {
    let dir = tmp();
    let path = dir.path().join("r.json");
    let p = path.to_str().unwrap();
    let o = run(&[
        "outer",
        "--model",
        &config("two-action.json"),
        "--epsilon",
        "0.2",
        "--out",
        p,
        "--no-timestamp",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("outer: V = 0.2666667 at action l"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v.get("timestamp").is_none());
    assert!(v["result"]["reports"][0].get("seconds").is_none());
    assert_eq!(v["result"]["best_action_label"], "l");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn no_timestamp_runs_are_byte_identical() {
    let args = [
        "outer",
        "--model",
        &config("congestion.json"),
        "--epsilon",
        "0.1",
        "--mesh",
        "0.5",
        "--no-timestamp",
    ];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn sweep_writes_csv() {
    let o = run(&[
        "sweep",
        "--model",
        &config("predator.json"),
        "--mesh",
        "0.0625",
        "--grid",
        "0:0.3:0.1",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,value,action,guarantee");
    assert_eq!(lines.len(), 5);
    assert!(lines[3].starts_with("0.2,0,0,"));
    assert!(stderr(&o).contains("jump at 0.2"));
}

#[test]
fn sweep_accepts_explicit_epsilons() {
    let o = run(&[
        "sweep",
        "--model",
        &config("predator.json"),
        "--mesh",
        "0.0625",
        "--epsilons",
        "0.1,0.3",
        "--no-timestamp",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = json(&o)["result"]["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 2);
    let o = run(&["sweep", "--model", &config("predator.json"), "--epsilons", "0.3,0.1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn invalid_input_exits_one() {
    let cases: Vec<Vec<String>> = vec![
        vec!["solve".into()],
        vec!["solve".into(), "--model".into(), "/nonexistent.json".into()],
        vec![
            "solve".into(),
            "--model".into(),
            config("predator.json"),
            "--mesh".into(),
            "0.3".into(),
        ],
        vec![
            "solve".into(),
            "--model".into(),
            config("predator.json"),
            "--epsilon".into(),
            "-1".into(),
        ],
        vec![
            "solve".into(),
            "--model".into(),
            config("predator.json"),
            "--action".into(),
            "4".into(),
        ],
        vec![
            "solve".into(),
            "--model".into(),
            config("predator.json"),
            "--format".into(),
            "csv".into(),
        ],
        vec![
            "solve".into(),
            "--model".into(),
            config("predator.json"),
            "--threads".into(),
            "0".into(),
        ],
        vec![
            "sweep".into(),
            "--model".into(),
            config("predator.json"),
            "--grid".into(),
            "0:1".into(),
        ],
        vec!["frobnicate".into()],
        vec![
            "relaxed".into(),
            "--model".into(),
            config("two-action.json"),
            "--delta-r".into(),
            "0.05".into(),
        ],
    ];
    for args in cases {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = run(&a);
        assert_eq!(code(&o), 1, "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn config_errors_name_the_file_and_field() {
    let dir = tmp();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"kind": "builtin:predator", "params": {"epsilon0": 0.2, "n": 2}}"#,
    )
    .unwrap();
    let o = run(&["solve", "--model", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("bad.json") && err.contains("params.n"), "{err}");
}

#[test]
fn policy_cap_comes_from_the_environment() {
    let args = ["solve", "--model", &config("predator.json"), "--mesh", "0.125"];
    let o = run_env(&args, "SMFG_CAP_POLICIES", "10");
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("cap"), "{}", stderr(&o));
    assert_eq!(code(&run_env(&args, "SMFG_CAP_POLICIES", "many")), 1);
    assert_eq!(code(&run_env(&args, "SMFG_CAP_POLICIES", "100000")), 0);
}

#[test]
fn empty_candidate_set_exits_two() {
    let o = run(&[
        "solve",
        "--model",
        &config("congestion.json"),
        "--action",
        "1",
        "--epsilon",
        "0.1",
        "--strategy",
        "enumerate",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("no feasible"));
}

#[test]
fn solve_witness_certifies() {
    let dir = tmp();
    let report = dir.path().join("solve.json");
    let r = report.to_str().unwrap();
    let o = run(&[
        "solve",
        "--model",
        &config("congestion.json"),
        "--epsilon",
        "0.1",
        "--mesh",
        "0.1",
        "--out",
        r,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&[
        "certify",
        "--model",
        &config("congestion.json"),
        "--policy",
        r,
        "--epsilon",
        "0.1",
        "--include-lp",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["result"]["passed"], true);
    assert_eq!(v["result"]["member"], true);
    assert!(v["result"]["exploitability"].as_f64().unwrap() <= 0.1 + 1e-10);
    assert!(v["result"]["lp"].is_object());
    assert!(v["result"]["certificate"].is_object());
    // The same policy is far from a 0-equilibrium.
    let o = run(&[
        "certify",
        "--model",
        &config("congestion.json"),
        "--policy",
        r,
        "--epsilon",
        "0",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("NOT a member"));
}

#[test]
fn certify_reads_bare_and_wrapped_policies() {
    let dir = tmp();
    let bare: PathBuf = dir.path().join("bare.json");
    let policy = "[[[0,1],[1,0]],[[0.5,0.5],[0.5,0.5]]]";
    std::fs::write(&bare, policy).unwrap();
    let wrapped = dir.path().join("wrapped.json");
    std::fs::write(&wrapped, format!("{{\"policy\": {policy}}}")).unwrap();
    let outputs: Vec<Value> = [&bare, &wrapped]
        .iter()
        .map(|p| {
            let o = run(&[
                "certify",
                "--model",
                &config("predator.json"),
                "--policy",
                p.to_str().unwrap(),
                "--no-timestamp",
            ]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            json(&o)
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0]["result"]["member"].is_null());

    let short = dir.path().join("short.json");
    std::fs::write(&short, "[[[1,0],[1,0]]]").unwrap();
    let o = run(&[
        "certify",
        "--model",
        &config("predator.json"),
        "--policy",
        short.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let o = run(&[
        "certify",
        "--model",
        &config("predator.json"),
        "--policy",
        "/nonexistent.json",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn reproduce_prints_the_closed_form_values() {
    let o = run(&["reproduce", "--example", "two-action"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("V^l = 0.2666667, a* = l"), "{}", stderr(&o));
    let o = run(&["reproduce", "--example", "majority"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["reproduce", "--example", "predator", "--mesh", "0.00390625"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&o)["result"]["matches"], true);
}

#[test]
fn perturb_runs_the_bound_checks() {
    let o = run(&[
        "perturb",
        "--model",
        &config("congestion.json"),
        "--delta-p",
        "0.01",
        "--delta-r",
        "0.02",
        "--policies",
        "3",
        "--no-timestamp",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    let r = &v["result"];
    assert_eq!(r["passed"], true);
    assert_eq!(r["lipschitz_method"], "analytic-affine");
    // Uniform, two constant and three random policies, for two leader actions.
    assert_eq!(r["flow_deviation"].as_array().unwrap().len(), 12);
    assert!(r["sandwich"].as_array().unwrap().is_empty());
    assert!(r["perturbation"]["observed_transition"].as_f64().unwrap() <= 0.01);
}

#[test]
fn perturb_sandwich_refuses_inadmissible_budgets() {
    let base = [
        "perturb",
        "--model",
        &config("two-action.json"),
        "--delta-r",
        "0.05",
        "--perturbation",
        "builtin-example3",
    ];
    let mut ok = base.to_vec();
    ok.extend(["--epsilon", "0.2", "--epsilon-prime", "0.2", "--mesh", "0.0625"]);
    let o = run(&ok);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&o)["result"]["sandwich"].as_array().unwrap().len(), 2);
    let mut bad = base.to_vec();
    bad.extend(["--epsilon", "0.2", "--epsilon-prime", "0.1"]);
    let o = run(&bad);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("premise"), "{}", stderr(&o));
}

#[test]
fn relaxed_reports_both_choices() {
    let o = run(&[
        "relaxed",
        "--model",
        &config("two-action.json"),
        "--delta-r",
        "0.05",
        "--perturbation",
        "builtin-example3",
        "--epsilon",
        "0.2",
        "--epsilon-prime",
        "0.2",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = &json(&o)["result"];
    assert_eq!(r["relaxed_action"], "l");
    assert_eq!(r["unrelaxed_action"], "g");
}
