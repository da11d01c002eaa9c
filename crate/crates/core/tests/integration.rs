mod common;

use std::collections::BTreeMap;

use mtsql::ast::{ScopeSpec, Statement};
use mtsql::catalog::Catalog;
use mtsql::conversion::{ConversionPair, LinearParams, TenantParams};
use mtsql::fixtures::{example, example_database};
use mtsql::optimizer::OptimizationLevel;
use mtsql::parser::{parse, parse_query};
use mtsql::refdb::Database;
use mtsql::session::{open_session, oracle_compare, run_query};
use mtsql::tenant::TenantId;
use mtsql::value::Value;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{client_datasets, corpus, fixture_path, random_query, set};

#[test]
fn shipped_example_matches_builtin() {
    let shipped = Catalog::load(&fixture_path("example/catalog.json")).unwrap();
    let (mut builtin, _) = example();
    builtin.grant_all_to_all();
    assert_eq!(shipped.to_json_string(), builtin.to_json_string());

    let db = Database::load(&fixture_path("example/fixture.json")).unwrap();
    let want = example_database(&builtin);
    for name in ["Employees", "Roles", "Regions"] {
        let (a, b) = (db.table(name).unwrap(), want.table(name).unwrap());
        assert_eq!(a.multiset_diff(b), None, "{name}");
    }
}

#[test]
fn corpus_agrees_with_direct_evaluation() {
    let (c, db) = example();
    let (mut shared, _) = example();
    shared.grant_all_to_all();
    for (file, stmt) in corpus() {
        // without grants, cross-tenant DML is refused rather than rewritten
        let catalogs = if matches!(stmt, Statement::Query(_)) { vec![&c, &shared] } else { vec![&shared] };
        for catalog in catalogs {
            for (client, dataset) in client_datasets() {
                let diff = oracle_compare(catalog, &db, client, &dataset, &stmt)
                    .unwrap_or_else(|e| panic!("{file}: {stmt}: {e}"));
                assert_eq!(diff, None, "{file} C={client} D={dataset:?}: {stmt}");
            }
        }
    }
}

#[test]
fn random_queries_are_not_vacuous() {
    let (catalog, db) = example();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let all = set(&[0, 1]);
    let mut non_empty = 0;
    for _ in 0..300 {
        let q = parse_query(&random_query(&mut rng)).unwrap();
        let (_, rel) = run_query(&catalog, &db, TenantId(0), &all, &q, OptimizationLevel::Canonical).unwrap();
        if !rel.is_empty() {
            non_empty += 1;
        }
    }
    assert!(non_empty > 200, "{non_empty} of 300 non-empty");
}

#[test]
fn oracle_detects_a_wrong_dataset() {
    // the rewrite for D = {0} must not agree with direct evaluation over {0,1}
    let (catalog, db) = example();
    let q = parse_query("SELECT E_name FROM Employees").unwrap();
    let (_, narrow) = run_query(&catalog, &db, TenantId(0), &set(&[0]), &q, OptimizationLevel::O4).unwrap();
    let (_, wide) = run_query(&catalog, &db, TenantId(0), &set(&[0, 1]), &q, OptimizationLevel::O4).unwrap();
    assert!(narrow.multiset_diff(&wide).is_some());
}

#[test]
fn session_pipeline_over_the_example() {
    let (mut c, mut db) = example();
    let mut s = open_session(&c, TenantId(1)).unwrap();
    let r = s
        .execute(&mut c, &mut db, &parse("SELECT SUM(E_salary) FROM Employees").unwrap(), OptimizationLevel::O4)
        .unwrap();
    let v = r.relation.unwrap().scalar().unwrap().as_f64().unwrap();
    assert!((v - 1_280_000.0).abs() < 1e-6, "{v}");

    s.set_scope(ScopeSpec::Simple(vec![]));
    let r = s
        .execute(&mut c, &mut db, &parse("SELECT COUNT(*) FROM Employees").unwrap(), OptimizationLevel::O4)
        .unwrap();
    // tenant 0 has not shared its employees
    assert_eq!(r.dataset, set(&[1]));
    assert_eq!(r.relation.unwrap().scalar(), Some(&Value::Int(3)));

    let grant = parse("GRANT READ ON Employees TO 1").unwrap();
    let mut zero = open_session(&c, TenantId(0)).unwrap();
    zero.execute(&mut c, &mut db, &grant, OptimizationLevel::Canonical).unwrap();
    let r = s
        .execute(&mut c, &mut db, &parse("SELECT COUNT(*) FROM Employees").unwrap(), OptimizationLevel::O4)
        .unwrap();
    assert_eq!(r.dataset, set(&[0, 1]));
    assert_eq!(r.relation.unwrap().scalar(), Some(&Value::Int(6)));
}

#[test]
fn dml_through_the_session() {
    let (mut c, mut db) = example();
    let mut s = open_session(&c, TenantId(1)).unwrap();
    let stmts = [
        "INSERT INTO Employees VALUES (7, 'Zoe', 0, 3, 90000, 33)",
        "UPDATE Employees SET E_salary = E_salary * 2 WHERE E_name = 'Zoe'",
    ];
    for sql in stmts {
        s.execute(&mut c, &mut db, &parse(sql).unwrap(), OptimizationLevel::O4).unwrap();
    }
    let r = s
        .execute(
            &mut c,
            &mut db,
            &parse("SELECT E_salary FROM Employees WHERE E_name = 'Zoe'").unwrap(),
            OptimizationLevel::Canonical,
        )
        .unwrap();
    let v = r.relation.unwrap().scalar().unwrap().as_f64().unwrap();
    assert!((v - 180_000.0).abs() < 1e-6, "{v}");
    let Statement::Query(q) = parse("SELECT E_salary FROM Employees WHERE E_name = 'Zoe'").unwrap() else { panic!() };
    let (_, as_zero) = run_query(&c, &db, TenantId(0), &set(&[1]), &q, OptimizationLevel::O4).unwrap();
    let v = as_zero.scalar().unwrap().as_f64().unwrap();
    assert!((v - 200_000.0).abs() < 1e-6, "{v}");
}

fn linear_pair(rates: &[(f64, f64)]) -> ConversionPair {
    let mut p = ConversionPair::linear("m");
    for (i, &(rate, offset)) in rates.iter().enumerate() {
        p.set_tenant(TenantId(i as u32), TenantParams::Linear(LinearParams { rate, offset })).unwrap();
    }
    p
}

proptest! {
    #[test]
    fn linear_round_trip(rate in 0.001f64..1000.0, offset in -1e4f64..1e4, x in -1e9f64..1e9) {
        let p = linear_pair(&[(1.0, 0.0), (rate, offset)]);
        let t = TenantId(1);
        let back = p.from_universal(t, &p.to_universal(t, &Value::Dec(x)).unwrap()).unwrap();
        let b = back.as_f64().unwrap();
        prop_assert!((b - x).abs() <= 1e-9 * x.abs().max(offset.abs()).max(1.0));
    }

    #[test]
    fn prefix_round_trip(prefix in "[+0-9#()-]{0,5}", digits in "[0-9]{0,12}") {
        let mut p = ConversionPair::prefix("phone");
        p.set_tenant(TenantId(0), TenantParams::Prefix(prefix.clone())).unwrap();
        p.set_tenant(TenantId(1), TenantParams::Prefix("+".into())).unwrap();
        let x = Value::text(format!("{prefix}{digits}"));
        let moved = p.convert(TenantId(0), TenantId(1), &x).unwrap();
        let home = p.convert(TenantId(1), TenantId(0), &moved).unwrap();
        prop_assert_eq!(home.as_str(), x.as_str());
    }

    #[test]
    fn simple_scope_is_clipped_to_registered_tenants(list in proptest::collection::vec(0u32..6, 0..6)) {
        let mut c = Catalog::new();
        c.register_pair(ConversionPair::linear("currency")).unwrap();
        for t in [0, 2, 4] {
            let params = BTreeMap::from([("currency".to_string(), TenantParams::Linear(LinearParams::IDENTITY))]);
            c.register_tenant(TenantId(t), params).unwrap();
        }
        let db = Database::new(mtsql::refdb::Layout::SharedTables);
        let mut s = open_session(&c, TenantId(0)).unwrap();
        s.set_scope(ScopeSpec::Simple(list.iter().map(|&t| TenantId(t)).collect()));
        let got = s.resolve_scope(&c, &db).unwrap();
        let want = if list.is_empty() {
            c.tenants.clone()
        } else {
            list.iter().map(|&t| TenantId(t)).filter(|t| c.is_tenant(*t)).collect()
        };
        prop_assert_eq!(got, want);
    }
}
