use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::catalog::Catalog;
use crate::conversion::{ConversionPair, TenantParams};
use crate::fixtures::{apply_ddl, example};
use crate::parser::parse_query;
use crate::refdb::{execute, Database, Relation};

fn set(ts: &[u32]) -> BTreeSet<TenantId> {
    ts.iter().map(|&t| TenantId(t)).collect()
}

fn canonical(ctx: &RewriteContext<'_>, sql: &str) -> Query {
    ctx.rewrite_query(&parse_query(sql).unwrap()).unwrap().query().unwrap().clone()
}

fn run(db: &Database, c: &Catalog, q: &Query) -> Relation {
    execute(db, c, q).unwrap_or_else(|e| panic!("{e}\n{q}"))
}

#[test]
fn level_parsing_and_composition() {
    for l in OptimizationLevel::ALL {
        assert_eq!(l.to_string().parse::<OptimizationLevel>().unwrap(), l);
    }
    assert!(OptimizationLevel::Canonical.passes().is_empty());
    assert_eq!(OptimizationLevel::InlOnly.passes(), &[Pass::Trivial, Pass::Inlining]);
    assert_eq!(OptimizationLevel::O4.passes().len(), 5);
}

#[test]
fn trivial_cases() {
    let (c, _) = example();
    let all = RewriteContext::new(&c, TenantId(0), set(&[0, 1]));
    let q = apply_trivial(&all, canonical(&all, "SELECT E_age FROM Employees"));
    assert_eq!(q.to_string(), "SELECT E_age FROM Employees");

    let two = RewriteContext::new(&c, TenantId(0), set(&[1]));
    let q = apply_trivial(&two, canonical(&two, "SELECT E_age, R_name FROM Employees, Roles WHERE E_role_id = R_role_id"));
    assert_eq!(
        q.to_string(),
        "SELECT E_age, R_name FROM Employees, Roles WHERE E_role_id = R_role_id AND E_ttid IN (1) AND R_ttid IN (1)"
    );

    let own = RewriteContext::new(&c, TenantId(0), set(&[0]));
    let q = apply_trivial(&own, canonical(&own, "SELECT E_salary FROM Employees"));
    assert_eq!(q.to_string(), "SELECT E_salary AS E_salary FROM Employees WHERE E_ttid IN (0)");
}

#[test]
fn client_presentation_push_up() {
    let (c, db) = example();
    let ctx = RewriteContext::new(&c, TenantId(0), set(&[0, 1]));
    let sql = "SELECT Dom.name1, Dom.sal1 AS sal, COUNT(*) AS cnt FROM (SELECT E1.E_name AS name1, E1.E_salary AS sal1 FROM Employees E1, Employees E2 WHERE E1.E_salary > E2.E_salary) AS Dom GROUP BY Dom.name1, Dom.sal1";
    let q = canonical(&ctx, sql);
    let pushed = push_up_client_presentation(&ctx, q.clone());
    let text = pushed.to_string();
    assert!(
        text.contains("WHERE currencyToUniversal(E1.E_salary, E1.E_ttid) > currencyToUniversal(E2.E_salary, E2.E_ttid)"),
        "{text}"
    );
    assert!(text.starts_with("SELECT Dom.name1, currencyFromUniversal(Dom.sal1, 0) AS sal"), "{text}");
    assert!(run(&db, &c, &q).multiset_eq(&run(&db, &c, &pushed)));

    let plain = canonical(&ctx, "SELECT E_name FROM Employees WHERE E_age > 30");
    assert_eq!(push_up_client_presentation(&ctx, plain.clone()), plain);
}

#[test]
fn conversion_push_up() {
    let (c, db) = example();
    let ctx = RewriteContext::new(&c, TenantId(0), set(&[0, 1]));
    let q = canonical(
        &ctx,
        "SELECT AVG(X.sal) FROM (SELECT E_salary AS sal FROM Employees WHERE E_age >= 45 AND E_salary > 100K) AS X",
    );
    let o = optimize(&ctx, q.clone(), OptimizationLevel::O2).unwrap();
    let text = o.to_string();
    assert!(text.contains("SELECT E_salary AS sal, E_ttid AS sal_ttid FROM Employees"), "{text}");
    assert!(
        text.contains("E_salary > currencyFromUniversal(currencyToUniversal(100000, 0), E_ttid)"),
        "{text}"
    );
    assert!(
        text.starts_with("SELECT AVG(currencyFromUniversal(currencyToUniversal(X.sal, X.sal_ttid), 0))"),
        "{text}"
    );
    assert!(run(&db, &c, &q).multiset_eq(&run(&db, &c, &o)));
}

fn phone_catalog() -> Catalog {
    let mut c = Catalog::new();
    c.register_pair(ConversionPair::prefix("phone")).unwrap();
    for (t, p) in [(0, "+"), (1, "00")] {
        c.register_tenant(TenantId(t), BTreeMap::from([("phone".to_string(), TenantParams::Prefix(p.into()))]))
            .unwrap();
    }
    apply_ddl(
        &mut c,
        "CREATE TABLE Contacts SPECIFIC (K_id INTEGER NOT NULL SPECIFIC, K_phone VARCHAR(20) CONVERTIBLE @phoneToUniversal @phoneFromUniversal)",
    )
    .unwrap();
    c
}

#[test]
fn phone_gates() {
    let c = phone_catalog();
    let ctx = RewriteContext::new(&c, TenantId(0), set(&[0, 1]));
    let q = canonical(&ctx, "SELECT MIN(K_phone) FROM Contacts");
    assert_eq!(distribute_aggregates(&ctx, q.clone()), q);
    let q = canonical(&ctx, "SELECT K_id FROM Contacts WHERE K_phone > '+41'");
    assert_eq!(push_up_conversion(&ctx, q.clone()), q);
    let q = canonical(&ctx, "SELECT K_id FROM Contacts WHERE K_phone = '+41'");
    let flipped = push_up_conversion(&ctx, q.clone()).to_string();
    assert!(flipped.contains("K_phone = phoneFromUniversal(phoneToUniversal('+41', 0), K_ttid)"), "{flipped}");
    // a constant outside the client's format is left alone
    let q = canonical(&ctx, "SELECT K_id FROM Contacts WHERE K_phone = '0041'");
    assert_eq!(push_up_conversion(&ctx, q.clone()), q);
    assert!(matches!(
        inline_call(&ctx, &Expr::convert("phone", Direction::ToUniversal, Expr::col("K_phone"), Expr::col("K_ttid"))),
        Err(NotInlinable { .. })
    ));
}

#[test]
fn distribution_shapes_and_values() {
    let (c, db) = example();
    let ctx = RewriteContext::new(&c, TenantId(0), set(&[0, 1]));
    let q = canonical(&ctx, "SELECT SUM(E_salary) AS sum_sal FROM Employees");
    let d = distribute_aggregates(&ctx, q.clone());
    assert_eq!(
        d.to_string(),
        "SELECT currencyFromUniversal(SUM(mt_dist.p1), 0) AS sum_sal FROM (SELECT E_ttid AS t1, currencyToUniversal(SUM(E_salary), E_ttid) AS p1 FROM Employees WHERE E_ttid IN (0,1) GROUP BY E_ttid) AS mt_dist"
    );
    assert!(run(&db, &c, &q).multiset_eq(&run(&db, &c, &d)));

    let q = canonical(&ctx, "SELECT AVG(E_salary) FROM Employees");
    let d = optimize(&ctx, q.clone(), OptimizationLevel::O3).unwrap();
    assert_ne!(d, q);
    let v = run(&db, &c, &d).scalar().unwrap().as_f64().unwrap();
    assert!(((v - 282_037.04) / 282_037.04).abs() < 1e-6, "{v}");

    let q = canonical(
        &ctx,
        "SELECT E_reg_id, COUNT(*), MIN(E_salary), MAX(E_age), SUM(E_salary) FROM Employees GROUP BY E_reg_id HAVING COUNT(*) > 0",
    );
    let d = distribute_aggregates(&ctx, q.clone());
    assert_ne!(d, q);
    assert!(run(&db, &c, &q).multiset_eq(&run(&db, &c, &d)));
}

#[test]
fn conversion_economy() {
    let (c, db) = example();
    let ctx = RewriteContext::new(&c, TenantId(0), set(&[0, 1]));
    let q = canonical(&ctx, "SELECT SUM(E_salary) FROM Employees");
    db.reset_counters();
    run(&db, &c, &q);
    assert_eq!(db.total_conversions(), 12);
    let o3 = optimize(&ctx, q, OptimizationLevel::O3).unwrap();
    db.reset_counters();
    run(&db, &c, &o3);
    assert!(db.total_conversions() <= 3, "{}", db.total_conversions());
}

#[test]
fn inlining_shape() {
    let (c, db) = example();
    let ctx = RewriteContext::new(&c, TenantId(0), set(&[0, 1]));
    let q = canonical(&ctx, "SELECT E_salary FROM Employees");
    let i = inline_conversions(&ctx, q.clone());
    assert_eq!(
        i.to_string(),
        "SELECT C1.CT_from_universal * C2.CT_to_universal * E_salary AS E_salary FROM Employees, Tenant T1, CurrencyTransform C1, Tenant T2, CurrencyTransform C2 WHERE E_ttid IN (0,1) AND T1.T_tenant_key = 0 AND T1.T_currency_key = C1.CT_currency_key AND T2.T_tenant_key = E_ttid AND T2.T_currency_key = C2.CT_currency_key"
    );
    db.reset_counters();
    assert!(run(&db, &c, &q).multiset_eq(&run(&db, &c, &i)));
    let plain = canonical(&ctx, "SELECT E_name FROM Employees");
    assert_eq!(inline_conversions(&ctx, plain.clone()), plain);
}

#[test]
fn all_levels_agree_on_examples() {
    let (mut c, _) = example();
    c.grant_all_to_all();
    let db = crate::fixtures::example_database(&c);
    let queries = [
        "SELECT E_name, E_salary FROM Employees WHERE E_salary > 100000",
        "SELECT E_name, R_name FROM Employees, Roles WHERE E_role_id = R_role_id",
        "SELECT R_name, AVG(E_salary) AS a, COUNT(*) FROM Employees, Roles WHERE E_role_id = R_role_id GROUP BY R_name",
        "SELECT E1.E_name, E2.E_name FROM Employees E1, Employees E2 WHERE E1.E_salary < E2.E_salary",
        "SELECT E_name FROM Employees WHERE E_salary IN (SELECT MAX(E_salary) FROM Employees)",
        "SELECT X.n, X.s FROM (SELECT E_name AS n, E_salary AS s FROM Employees WHERE E_age > 26) AS X WHERE X.s >= 80000",
        "SELECT Re_name, SUM(E_salary) FROM Employees, Regions WHERE E_reg_id = Re_reg_id GROUP BY Re_name ORDER BY Re_name",
        "SELECT DISTINCT E_role_id FROM Employees",
        "SELECT COUNT(*) FROM Employees WHERE E_salary < 60000",
    ];
    for (client, d) in [(0, vec![0, 1]), (1, vec![0, 1]), (0, vec![0]), (1, vec![0])] {
        let ctx = RewriteContext::new(&c, TenantId(client), set(&d));
        for sql in queries {
            let out = ctx.rewrite_query(&parse_query(sql).unwrap()).unwrap();
            let q = out.query().unwrap().clone();
            let mut base = run(&db, &c, &q);
            base.truncate_columns(base.columns.len() - out.hidden_columns);
            for level in OptimizationLevel::ALL {
                let o = optimize(&ctx, q.clone(), level).unwrap();
                let mut r = run(&db, &c, &o);
                r.truncate_columns(r.columns.len() - out.hidden_columns);
                assert!(
                    base.multiset_eq(&r),
                    "{level} C={client} D={d:?}: {sql}\n{o}\n{:?}",
                    base.multiset_diff(&r)
                );
            }
        }
    }
}
