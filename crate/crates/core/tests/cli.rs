use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mtsql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtsql")).args(args).output().expect("run mtsql")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn sql_file(dir: &Path, text: &str) -> String {
    let p = dir.join("q.sql");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn rewrite_prints_the_canonical_form() {
    let dir = tempfile::tempdir().unwrap();
    let q = sql_file(dir.path(), "SELECT E_name, E_salary FROM Employees WHERE E_salary > 100000;");
    let cat = fixtures().join("example/catalog.json");
    let out = mtsql(&["rewrite", "--catalog", cat.to_str().unwrap(), "--client", "0", "--scope", "IN (0,1)", &q]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("currencyFromUniversal(currencyToUniversal(E_salary, E_ttid), 0)"), "{text}");
    assert!(text.contains("E_ttid IN (0,1)"), "{text}");
}

#[test]
fn run_and_explain() {
    let dir = tempfile::tempdir().unwrap();
    let q = sql_file(dir.path(), "SELECT SUM(E_salary) AS total FROM Employees;");
    let out = mtsql(&["run", "--client", "1", "--scope", "IN ()", &q]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("total"), "{}", stdout(&out));

    let cat = fixtures().join("example/catalog.json");
    let args = ["optimize", "--catalog", cat.to_str().unwrap(), "--client", "0", "--scope", "IN (0,1)"];
    let out = mtsql(&[&args[..], &["--level", "o3", "--explain", &q]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("mt_dist"), "{}", stdout(&out));
}

#[test]
fn error_categories_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let q = sql_file(dir.path(), "SELECT E_name FROM Employees;");
    let out = mtsql(&["rewrite", "--client", "99", &q]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error[UnknownTenant]"), "{}", stderr(&out));

    let out = mtsql(&["rewrite", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error[UsageError]"), "{}", stderr(&out));

    let bad = sql_file(dir.path(), "SELEC E_name;");
    let out = mtsql(&["rewrite", "--client", "0", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error[SyntaxError]"), "{}", stderr(&out));
}

#[test]
fn oracle_check_over_the_corpus() {
    let cat = fixtures().join("example/catalog.json");
    let fx = fixtures().join("example/fixture.json");
    let corpus = fixtures().join("corpus");
    let out = mtsql(&[
        "oracle-check",
        "--catalog",
        cat.to_str().unwrap(),
        "--fixture",
        fx.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
}

#[test]
fn gen_then_bench_with_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = mtsql(&["gen", "--sf", "0.001", "--tenants", "4", "--dist", "zipf", "--seed", "3", "--out", d.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let p = |n: &str| d.join(n).to_string_lossy().into_owned();
    let out = mtsql(&[
        "bench",
        "--catalog",
        &p("catalog.json"),
        "--fixture",
        &p("fixture.json"),
        "--levels",
        "o1,o3",
        "--baseline",
        &p("baseline.json"),
        "--baseline-catalog",
        &p("baseline-catalog.json"),
    ]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("Q1"), "{}", stdout(&out));

    let out = mtsql(&["gen", "--sf=-1", "--out", d.to_str().unwrap()]);
    assert!(stderr(&out).contains("error[ConfigError]"), "{}", stderr(&out));
}

#[test]
fn validate_pair_reports_clauses() {
    let out = mtsql(&["validate-pair"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("round trip"), "{}", stdout(&out));
}
