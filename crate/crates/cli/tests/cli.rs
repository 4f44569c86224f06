use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn drsys(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drsys"))
        .args(args)
        .output()
        .expect("run drsys")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_spec(dir: &Path, name: &str, p: &str) -> String {
    let path = dir.join(name);
    fs::write(
        &path,
        format!(r#"{{"m": 2, "star": {{"kind": "dirac", "k0": 2}}, "p": "{p}"}}"#),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn missing_spec_exits_with_usage_code() {
    let o = drsys(&["iterate", "--spec", "/nonexistent/spec.json", "--n", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read spec file"));
}

#[test]
fn zero_p_stays_at_zero() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "s.json", "0");
    let out = dir.path().join("run");
    let o = drsys(&[
        "iterate",
        "--spec",
        &spec,
        "--n",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for n in 0..=3 {
        let rows = data_rows(&fs::read_to_string(out.join(format!("gen_{n:03}.csv"))).unwrap());
        assert_eq!(rows[0][0..3], ["0", "1", "1"]);
        assert!(rows[1..].iter().all(|r| r[1] == "0"));
    }
    let moments = data_rows(&fs::read_to_string(out.join("moments.csv")).unwrap());
    assert_eq!(moments.len(), 4);
    assert!(moments.iter().all(|r| r[1] == "0/1"));
}

#[test]
fn full_p_bracket_is_exact() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "s.json", "1");
    let o = drsys(&["free-energy", "--spec", &spec, "--N", "10"]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    let last = rows.last().unwrap();
    assert_eq!(last[0], "10");
    assert_eq!(last[1], "1/1");
    assert_eq!(last[2], "1025/1024");
}

#[test]
fn empty_grid_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "s.json", "1/5");
    let o = drsys(&[
        "free-energy",
        "--spec",
        &spec,
        "--N",
        "4",
        "--p-grid",
        "0:1:0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn grid_rows_cover_the_endpoints() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "s.json", "1/5");
    let o = drsys(&[
        "free-energy",
        "--spec",
        &spec,
        "--N",
        "5",
        "--p-grid",
        "0:1:5",
    ]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    let ps: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ps, ["0/1", "1/4", "1/2", "3/4", "1/1"]);
}

#[test]
fn tree_suite_passes() {
    let o = drsys(&["verify", "--suite", "tree", "--format", "json"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["header"]["seed"], "1");
    let rows = v["checks"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["suite"] == "tree"));
    assert!(rows.iter().all(|r| r["status"] == "pass"));
}

#[test]
fn corrupted_golden_value_fails_by_name() {
    let dir = TempDir::new().unwrap();
    let golden = dir.path().join("golden.json");
    fs::write(
        &golden,
        r#"{"critical_p/m=2/dirac2": "1/5", "mean/n=1/m=2/dirac2/p=1/5": "12/25"}"#,
    )
    .unwrap();
    let o = drsys(&[
        "verify",
        "--suite",
        "golden",
        "--golden",
        golden.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("# seed=1"));
    let failed: Vec<&str> = text.lines().filter(|l| l.contains(",fail,")).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].starts_with("golden,mean/n=1/m=2/dirac2/p=1/5,fail"));
}

#[test]
fn builtin_golden_values_pass() {
    let o = drsys(&["verify", "--suite", "golden"]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn unknown_suite_is_rejected() {
    assert_eq!(drsys(&["verify", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn identical_mixture_laws_are_rejected() {
    let o = drsys(&[
        "question5",
        "--mu",
        "0:4/5,2:1/5",
        "--lambda",
        "0:4/5,2:1/5",
        "--n",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu = lambda"));
}

#[test]
fn generated_lambda_is_critical() {
    let o = drsys(&[
        "question5",
        "--mu",
        "0:4/5,2:1/5",
        "--lambda-support",
        "0,1,3",
        "--n",
        "1",
        "--p-grid",
        "1/3:1/3:1",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# lambda=0:8/9 1:1/18 3:1/18"));
    assert_eq!(data_rows(&text)[0][2], "-8/45");
}

#[test]
fn first_derivative_at_generation_zero_is_minus_one() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "s.json", "1/5");
    let o = drsys(&["derivative", "--spec", &spec, "--n", "1", "--k", "1"]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    let row = rows.iter().find(|r| r[0] == "0" && r[1] == "1").unwrap();
    assert_eq!(row[3], "-1/1");
    let row = rows.iter().find(|r| r[0] == "1" && r[1] == "1").unwrap();
    assert_eq!(row[3], "-8/5");
}

#[test]
fn exact_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "s.json", "2/7");
    let run = |name: &str| {
        let out = dir.path().join(name);
        assert!(drsys(&[
            "iterate",
            "--spec",
            &spec,
            "--n",
            "5",
            "--out",
            out.to_str().unwrap()
        ])
        .status
        .success());
        (0..=5)
            .map(|n| fs::read_to_string(out.join(format!("gen_{n:03}.csv"))).unwrap())
            .chain([fs::read_to_string(out.join("moments.csv")).unwrap()])
            .collect::<Vec<_>>()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn float_mode_json_reports_tail() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "s.json", "1/2");
    let o = drsys(&[
        "iterate", "--spec", &spec, "--n", "4", "--mode", "float", "--cap", "8", "--format", "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["header"]["tail_policy"], "lump_at_cap");
    let gens = v["generations"].as_array().unwrap();
    assert_eq!(gens.len(), 5);
    assert!(gens[4]["lumped_tail"].as_f64().unwrap() > 0.0);
}

#[test]
fn default_verify_has_no_failures() {
    let o = drsys(&["verify", "--samples", "20000"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains(",fail,"));
}

#[test]
fn iterated_zero_mass_matches_derivative_table_at_order_zero() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "s.json", "1/5");
    let out = dir.path().join("run");
    assert!(drsys(&[
        "iterate",
        "--spec",
        &spec,
        "--n",
        "3",
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let derivs = data_rows(&stdout(&drsys(&[
        "derivative",
        "--spec",
        &spec,
        "--n",
        "3",
        "--k",
        "0",
    ])));
    for n in 0..=3 {
        let gen = data_rows(&fs::read_to_string(out.join(format!("gen_{n:03}.csv"))).unwrap());
        let from_engine = format!("{}/{}", gen[0][1], gen[0][2]);
        let from_poly = &derivs.iter().find(|r| r[0] == n.to_string()).unwrap()[3];
        let reduce = |s: &str| {
            let (a, b) = s.split_once('/').unwrap();
            let (a, b): (u128, u128) = (a.parse().unwrap(), b.parse().unwrap());
            let g = (1..=a.min(b))
                .rev()
                .find(|d| a % d == 0 && b % d == 0)
                .unwrap_or(1);
            (a / g, b / g)
        };
        assert_eq!(reduce(&from_engine), reduce(from_poly), "n={n}");
    }
}
