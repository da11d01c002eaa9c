//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use mtsql::ast::Statement;
use mtsql::parser::parse_statements;
use mtsql::tenant::TenantId;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn set(ts: &[u32]) -> BTreeSet<TenantId> {
    ts.iter().map(|&t| TenantId(t)).collect()
}

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// Every statement of the example corpus, with its file name.
pub fn corpus() -> Vec<(String, Statement)> {
    let dir = fixture_path("corpus");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .expect("corpus directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "sql"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).expect("corpus file");
        let name = f.file_name().unwrap().to_string_lossy().into_owned();
        for s in parse_statements(&text).unwrap_or_else(|e| panic!("{name}: {e}")) {
            out.push((name.clone(), s));
        }
    }
    out
}

/// (client, dataset) combinations over the two example tenants.
pub fn client_datasets() -> Vec<(TenantId, BTreeSet<TenantId>)> {
    let mut v = Vec::new();
    for c in [0, 1] {
        for d in [&[0u32][..], &[1], &[0, 1]] {
            v.push((TenantId(c), set(d)));
        }
    }
    v
}

const SALARIES: [&str; 9] = ["50000", "72000", "80000", "100000", "100K", "135000", "180000", "200000", "900000"];
const OPS: [&str; 6] = ["=", "<>", "<", "<=", ">", ">="];
const NAMES: [&str; 5] = ["'Alice'", "'Ed'", "'Nancy'", "'John'", "'Zoe'"];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty")
}

fn atom<R: Rng>(rng: &mut R, q: &str) -> String {
    match rng.gen_range(0..7) {
        0 | 1 => format!("{q}E_salary {} {}", pick(rng, &OPS), pick(rng, &SALARIES)),
        2 => format!("{q}E_age {} {}", pick(rng, &OPS), rng.gen_range(20..75)),
        3 => format!("{q}E_reg_id IN ({}, {})", rng.gen_range(0..6), rng.gen_range(0..6)),
        4 => format!("{q}E_name = {}", pick(rng, &NAMES)),
        5 => format!(
            "{q}E_salary BETWEEN {} AND {}",
            rng.gen_range(4..10) * 10_000,
            rng.gen_range(10..120) * 10_000
        ),
        _ => format!("{q}E_salary * 2 > {q}E_age * {}", rng.gen_range(1..9) * 1000),
    }
}

fn predicate<R: Rng>(rng: &mut R, q: &str) -> String {
    let a = atom(rng, q);
    match rng.gen_range(0..5) {
        0 => format!("{a} AND {}", atom(rng, q)),
        1 => format!("({a} OR {})", atom(rng, q)),
        2 => format!("NOT ({a})"),
        _ => a,
    }
}

fn opt_where<R: Rng>(rng: &mut R, q: &str) -> String {
    if rng.gen_bool(0.6) {
        format!(" WHERE {}", predicate(rng, q))
    } else {
        String::new()
    }
}

fn projection<R: Rng>(rng: &mut R) -> String {
    let cols = ["E_name", "E_salary", "E_age", "E_reg_id", "E_salary * 1.5 AS boosted", "E_salary + E_age AS mixed"];
    let n = rng.gen_range(1..=3);
    let mut picked: Vec<&str> = cols.choose_multiple(rng, n).copied().collect();
    picked.sort();
    picked.join(", ")
}

fn aggregates<R: Rng>(rng: &mut R) -> String {
    let aggs = [
        "COUNT(*) AS n",
        "SUM(E_salary) AS s",
        "AVG(E_salary) AS a",
        "MIN(E_salary) AS lo",
        "MAX(E_salary) AS hi",
        "MAX(E_age) AS oldest",
        "COUNT(E_salary) AS ns",
        "SUM(E_salary * 2) AS s2",
    ];
    let n = rng.gen_range(1..=3);
    let mut picked: Vec<&str> = aggs.choose_multiple(rng, n).copied().collect();
    picked.sort();
    picked.join(", ")
}

/// A random query over the example schema.
pub fn random_query<R: Rng>(rng: &mut R) -> String {
    match rng.gen_range(0..12) {
        0 => format!("SELECT {} FROM Employees{}", projection(rng), opt_where(rng, "")),
        1 => format!(
            "SELECT E_name, R_name, E_salary FROM Employees, Roles WHERE E_role_id = R_role_id{}",
            if rng.gen_bool(0.5) { format!(" AND {}", predicate(rng, "")) } else { String::new() }
        ),
        2 => format!(
            "SELECT Re_name, E_name FROM Employees, Regions WHERE E_reg_id = Re_reg_id{}",
            if rng.gen_bool(0.5) { format!(" AND {}", predicate(rng, "")) } else { String::new() }
        ),
        3 => {
            let key = pick(rng, &["E_reg_id", "E_age", "E_name"]);
            let having = if rng.gen_bool(0.4) {
                format!(" HAVING COUNT(*) > {}", rng.gen_range(0..2))
            } else if rng.gen_bool(0.3) {
                format!(" HAVING SUM(E_salary) > {}", pick(rng, &SALARIES))
            } else {
                String::new()
            };
            format!("SELECT {key}, {} FROM Employees{} GROUP BY {key}{having}", aggregates(rng), opt_where(rng, ""))
        }
        4 => format!("SELECT {} FROM Employees{}", aggregates(rng), opt_where(rng, "")),
        5 => format!(
            "SELECT E1.E_name, E2.E_name FROM Employees E1, Employees E2 WHERE E1.E_salary {} E2.E_salary AND E1.E_age > {}",
            pick(rng, &OPS[2..]),
            rng.gen_range(20..50)
        ),
        6 => format!(
            "SELECT E_name FROM Employees WHERE E_salary {} (SELECT {}(E2.E_salary) FROM Employees E2{})",
            pick(rng, &OPS),
            pick(rng, &["AVG", "MIN", "MAX"]),
            opt_where(rng, "E2.")
        ),
        7 => format!(
            "SELECT E_name, E_salary FROM Employees WHERE E_reg_id {}IN (SELECT Re_reg_id FROM Regions WHERE Re_name {} 'EUROPE')",
            if rng.gen_bool(0.3) { "NOT " } else { "" },
            pick(rng, &OPS)
        ),
        8 => format!(
            "SELECT X.n, X.s FROM (SELECT E_name AS n, E_salary AS s FROM Employees{}) AS X WHERE X.s {} {}",
            opt_where(rng, ""),
            pick(rng, &OPS),
            pick(rng, &SALARIES)
        ),
        9 => format!("SELECT DISTINCT {} FROM Employees{}", pick(rng, &["E_reg_id", "E_age", "E_salary"]), opt_where(rng, "")),
        10 => format!(
            "SELECT R_name, COUNT(*) AS n, AVG(E_salary) AS a FROM Employees, Roles WHERE E_role_id = R_role_id{} GROUP BY R_name",
            if rng.gen_bool(0.5) { format!(" AND {}", predicate(rng, "")) } else { String::new() }
        ),
        _ => format!(
            "SELECT R_name FROM Roles WHERE {}EXISTS (SELECT E_emp_id FROM Employees WHERE E_role_id = R_role_id AND E_salary > {})",
            if rng.gen_bool(0.3) { "NOT " } else { "" },
            pick(rng, &SALARIES)
        ),
    }
}
