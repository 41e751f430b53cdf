use std::process::{Command, Output};

use serde_json::Value;

fn pfactor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfactor"))
        .args(args)
        .env_remove("PFACTOR_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stripped(out: &Output) -> String {
    let mut v = json(out);
    v.as_object_mut().unwrap().remove("timings");
    pfactor_cli::report::to_json(&v)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn pfnewton_ex1_converges() {
    let out = pfactor(&["pfnewton", "--builtin", "ex1", "--h", "1,-1", "--x0", "0.05,0.03"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["subcommand"], "pfnewton");
    assert_eq!(v["result"]["runs"][0]["status"], "converged");
    assert!(v["result"]["runs"][0]["rate"]["ratios"].as_array().unwrap().len() >= 2);
    assert!(v["timings"]["total_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn newton_rejection_step() {
    let out = pfactor(&["newton", "--builtin", "ex1", "--x0", "1e-5+1e-15,1e-5", "--max-iter", "1"]);
    // one iteration does not reach the root
    assert_eq!(out.status.code(), Some(3));
    let x1 = &json(&out)["result"]["runs"][0]["history"][1]["x"];
    let t = 1e-5;
    for (got, want) in [(x1[0].as_f64().unwrap(), -1.0 / t - t), (x1[1].as_f64().unwrap(), 1.0 / t + t)] {
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn exit_codes() {
    // usage
    assert_eq!(pfactor(&["analyze"]).status.code(), Some(2));
    assert_eq!(pfactor(&["bogus"]).status.code(), Some(2));
    assert_eq!(pfactor(&["analyze", "--builtin", "ex1", "--h", "1,2,3"]).status.code(), Some(2));
    assert_eq!(pfactor(&["analyze", "--builtin", "ex1", "--tol", "-1"]).status.code(), Some(2));
    assert_eq!(pfactor(&["newton", "--builtin", "planar"]).status.code(), Some(2));
    // numeric
    assert_eq!(pfactor(&["pfnewton", "--builtin", "ex1", "--h", "1,1"]).status.code(), Some(3));
    // problem definition
    let out = pfactor(&["analyze", "--builtin", "nope"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("unknown problem"));
    let out = pfactor(&["analyze", "--problem", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn problem_files() {
    let dir = std::env::temp_dir().join(format!("pfactor-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    let good = dir.join("cusp.json");
    std::fs::write(
        &good,
        r#"{"name": "cusp", "variables": ["x", "y"], "equations": ["x^2 - y^3", "x*y"], "point": [0, 0], "seed": 11}"#,
    )
    .unwrap();
    let out = pfactor(&["analyze", "--problem", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["problem"]["source"], good.to_str().unwrap());
    assert_eq!(v["config"]["seed"], 11);

    let cases = [
        ("unknown.json", r#"{"name": "a", "variables": ["x"], "equations": ["x + y"], "point": [0]}"#),
        ("dims.json", r#"{"name": "a", "variables": ["x"], "equations": ["x"], "point": [0, 1]}"#),
        ("syntax.json", r#"{"name": "a", "variables": ["x"], "equations": ["x +"], "point": [0]}"#),
        ("truncated.json", r#"{"name": "a", "#),
        ("field.json", r#"{"name": "a", "variables": ["x"], "equations": ["x"], "point": [0], "extra": 1}"#),
    ];
    for (name, text) in cases {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        let out = pfactor(&["analyze", "--problem", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(4), "{name}: {}", stderr(&out));
        assert!(stderr(&out).contains("problem definition"), "{name}");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn infeasible_candidate_is_a_problem_error() {
    let dir = std::env::temp_dir().join(format!("pfactor-cli-infeasible-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("p.json");
    std::fs::write(
        &path,
        r#"{"name": "p", "variables": ["x"], "objective": "x^2", "constraints": [{"expr": "x - 1", "sense": ">="}], "point": [0]}"#,
    )
    .unwrap();
    let out = pfactor(&["conlag", "--problem", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn output_file_and_formats() {
    let path = std::env::temp_dir().join(format!("pfactor-out-{}.csv", std::process::id()));
    let out = pfactor(&[
        "pfnewton", "--builtin", "ex1", "--starts", "2", "--format", "csv", "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("run,index,residual,step_norm,distance_to_root,condition,x1,x2"));
    assert!(lines.clone().any(|l| l.starts_with("result.runs.1,0,")));
    assert!(lines.all(|l| l.split(',').count() == 8));

    let out = pfactor(&["analyze", "--builtin", "eq20a_F", "--format", "table"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("decomposition:") && text.contains("order: 2"), "{text}");

    let out = pfactor(&["list", "--format", "table"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("name: ex_9"));
}

#[test]
fn seed_from_environment() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_pfactor"));
        cmd.args(["newton", "--builtin", "ex1"]);
        match env {
            Some(s) => cmd.env("PFACTOR_SEED", s),
            None => cmd.env_remove("PFACTOR_SEED"),
        };
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        json(&cmd.output().unwrap())
    };
    assert_eq!(run(None, None)["config"]["seed"], pfactor_cli::args::DEFAULT_SEED);
    let env = run(Some("99"), None);
    assert_eq!(env["config"]["seed"], 99);
    assert_eq!(run(Some("99"), Some("5"))["config"]["seed"], 5);
    assert_ne!(env["result"]["runs"][0]["start"], run(None, None)["result"]["runs"][0]["start"]);
}

#[test]
fn reports_are_deterministic() {
    let runs: [&[&str]; 5] = [
        &["analyze", "--builtin", "eq20a"],
        &["pfnewton", "--builtin", "phi3", "--starts", "5"],
        &["optcheck", "--builtin", "eq20a"],
        &["conlag", "--builtin", "ex_9", "--starts", "5"],
        &["tangent", "--builtin", "planar"],
    ];
    for args in runs {
        let a = pfactor(args);
        let b = pfactor(args);
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", stderr(&a));
        assert_eq!(stripped(&a), stripped(&b), "{args:?}");
    }
}

#[test]
fn warns_when_base_point_is_not_a_root() {
    let dir = std::env::temp_dir().join(format!("pfactor-cli-warn-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("p.json");
    std::fs::write(
        &path,
        r#"{"name": "p", "variables": ["x", "y"], "equations": ["x + y - 1", "x*y"], "point": [0, 0]}"#,
    )
    .unwrap();
    let out = pfactor(&["analyze", "--problem", path.to_str().unwrap()]);
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("not a root"));
    assert_eq!(json(&out)["warnings"].as_array().unwrap().len(), 1);
}
