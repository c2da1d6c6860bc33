use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transserial"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let o = run(&full);
    (
        o.status.code().unwrap(),
        serde_json::from_str(&stdout(&o)).expect("json on stdout"),
    )
}

#[test]
fn successful_commands_exit_zero() {
    for (args, out) in [
        (&["derive", "x^3"][..], "3*x^2\n"),
        (&["logderiv", "x^2*exp(x)"], "1 + 2*x^-1\n"),
        (&["ai", "x^2"], "1/3*x^3\n"),
        (&["log", "3*x^2"], "2*log(x) + log(3)\n"),
        (&["compare", "x", "log(x)^5"], "order: >\ndominance: ≻\n"),
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        assert_eq!(stdout(&o), out, "{args:?}");
        assert_eq!(stderr(&o), "");
    }
}

#[test]
fn usage_and_syntax_errors_exit_one() {
    for args in [
        &["derive", "log("][..],
        &["frobnicate"],
        &["--budget", "0", "derive", "x"],
        &["--chain", "nope", "derive", "x"],
        &["derive"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert_eq!(stdout(&o), "", "{args:?}");
        assert!(stderr(&o).starts_with("error"), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(
        stderr(&run(&["derive", "log("])),
        "error: syntax error at 4: unexpected end of input\n"
    );
}

#[test]
fn engine_refusals_exit_two() {
    for (args, kind) in [
        (&["ai", "@theta_hat"][..], "AtThetaHat"),
        (&["log", "-x"], "NotPositiveLogArg"),
        (&["derive", "exp(1 + x)"], "ConstantInExpArg"),
        (
            &["--depth", "1", "derive", "exp(exp(x^2))"],
            "TowerDepthExceeded",
        ),
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stdout(&o));
        let (code, v) = json(args);
        assert_eq!(code, 2);
        assert_eq!(v["ok"], false);
        assert_eq!(v["error"]["kind"], kind, "{args:?}");
    }
}

#[test]
fn failed_validation_exits_two() {
    let o = run(&["--prelog", "basic", "validate", "hl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("HL2_HL3: FAIL"), "{}", stdout(&o));
    let (_, v) = json(&["--prelog", "basic", "validate", "hl"]);
    assert_eq!(v["result"]["passed"], false);
}

#[test]
fn json_envelope() {
    let (code, v) = json(&["--budget", "5", "integrate", "1/log(x)"]);
    assert_eq!(code, 0);
    assert_eq!(v["command"], "integrate");
    assert_eq!(v["input"], serde_json::json!(["1/log(x)"]));
    assert_eq!(v["config"]["budget"], 5);
    assert_eq!(v["ok"], true);
    assert_eq!(v["result"]["kind"], "integration");
    assert_eq!(v["result"]["exact"], false);
    assert_eq!(v["result"]["terms"].as_array().unwrap().len(), 5);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = std::env::temp_dir().join(format!("transserial-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cfg.toml");
    std::fs::write(&path, "budget = 3\nformat = \"json\"\nprelog = \"basic\"\n").unwrap();
    let p = path.to_str().unwrap();

    let o = run(&["--config", p, "derive", "x^2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["config"]["budget"], 3);
    assert_eq!(v["config"]["prelog"], "basic");

    let o = run(&[
        "--config",
        p,
        "--format",
        "text",
        "--budget",
        "4",
        "--prelog",
        "sigma",
        "integrate",
        "1/log(x)",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "x*log(x)^-1 + x*log(x)^-2 + 2*x*log(x)^-3 + 6*x*log(x)^-4  [truncated]\n"
    );

    std::fs::write(&path, "budgett = 3\n").unwrap();
    assert_eq!(run(&["--config", p, "derive", "x"]).status.code(), Some(1));
    assert_eq!(
        run(&[
            "--config",
            dir.join("missing.toml").to_str().unwrap(),
            "derive",
            "x"
        ])
        .status
        .code(),
        Some(1)
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn help_and_version() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("integrate"));
    let o = run(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("transserial "));
}
