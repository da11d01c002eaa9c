//! The running-example database: Employees and Roles per tenant, Regions shared.

use std::collections::BTreeMap;

use crate::ast::Statement;
use crate::catalog::{Catalog, TableDef};
use crate::conversion::{ConversionPair, LinearParams, TenantParams};
use crate::parser;
use crate::refdb::{Column, Database, Layout, Relation};
use crate::tenant::TenantId;
use crate::value::Value;

pub const EXAMPLE_DDL: &str = "
CREATE TABLE Regions (
  Re_reg_id INTEGER     NOT NULL,
  Re_name   VARCHAR(25) NOT NULL,
  CONSTRAINT pk_reg PRIMARY KEY (Re_reg_id)
);
CREATE TABLE Roles SPECIFIC (
  R_role_id INTEGER     NOT NULL SPECIFIC,
  R_name    VARCHAR(25) NOT NULL COMPARABLE,
  CONSTRAINT pk_role PRIMARY KEY (R_role_id)
);
CREATE TABLE Employees SPECIFIC (
  E_emp_id  INTEGER       NOT NULL SPECIFIC,
  E_name    VARCHAR(25)   NOT NULL COMPARABLE,
  E_role_id INTEGER       NOT NULL SPECIFIC,
  E_reg_id  INTEGER       NOT NULL COMPARABLE,
  E_salary  DECIMAL(15,2) NOT NULL CONVERTIBLE @currencyToUniversal @currencyFromUniversal,
  E_age     INTEGER       NOT NULL COMPARABLE,
  CONSTRAINT pk_emp PRIMARY KEY (E_emp_id),
  CONSTRAINT fk_emp FOREIGN KEY (E_role_id) REFERENCES Roles (R_role_id)
);
";

/// Exchange rate from universal (USD) into tenant 1's currency (EUR).
pub const EUR_RATE: f64 = 0.9;

/// Apply `CREATE TABLE` statements to a catalog.
pub fn apply_ddl(catalog: &mut Catalog, ddl: &str) -> Result<(), String> {
    for stmt in parser::parse_statements(ddl).map_err(|e| e.to_string())? {
        match stmt {
            Statement::CreateTable(ct) => {
                let def = TableDef::from_ast(&ct).map_err(|e| e.to_string())?;
                catalog.define_table(def).map_err(|e| e.to_string())?;
            }
            other => return Err(format!("expected CREATE TABLE, got {other}")),
        }
    }
    Ok(())
}

pub fn example_catalog() -> Catalog {
    let mut c = Catalog::new();
    c.register_pair(ConversionPair::linear("currency")).expect("fresh catalog");
    let rates = [(0, LinearParams::IDENTITY), (1, LinearParams { rate: EUR_RATE, offset: 0.0 })];
    for (t, p) in rates {
        let choices = BTreeMap::from([("currency".to_string(), TenantParams::Linear(p))]);
        c.register_tenant(TenantId(t), choices).expect("fresh tenant");
    }
    apply_ddl(&mut c, EXAMPLE_DDL).expect("fixture DDL is valid");
    c
}

fn int(i: i64) -> Value {
    Value::Int(i)
}

/// Shared-table layout of the running example.
pub fn example_database(catalog: &Catalog) -> Database {
    let mut db = Database::new(Layout::SharedTables);
    let cols = |name: &str| -> Vec<Column> {
        catalog
            .table(name)
            .expect("fixture table")
            .shared_columns()
            .into_iter()
            .map(|(n, t)| Column::new(n, Some(t)))
            .collect()
    };
    let emps = [
        (0, 0, "Patrick", 1, 3, 50_000.0, 30),
        (0, 1, "John", 0, 3, 70_000.0, 28),
        (0, 2, "Alice", 2, 3, 150_000.0, 46),
        (1, 0, "Allan", 1, 2, 80_000.0, 25),
        (1, 1, "Nancy", 2, 4, 200_000.0, 72),
        (1, 2, "Ed", 0, 4, 1_000_000.0, 46),
    ];
    let rows = emps
        .iter()
        .map(|&(t, id, name, role, reg, sal, age)| {
            vec![int(t), int(id), Value::text(name), int(role), int(reg), Value::Dec(sal), int(age)]
        })
        .collect();
    db.insert_table("Employees", Relation::with_rows(cols("Employees"), rows));
    let roles = [
        (0, 0, "phD stud."),
        (0, 1, "postdoc"),
        (0, 2, "professor"),
        (1, 0, "intern"),
        (1, 1, "researcher"),
        (1, 2, "executive"),
    ];
    let rows = roles
        .iter()
        .map(|&(t, id, name)| vec![int(t), int(id), Value::text(name)])
        .collect();
    db.insert_table("Roles", Relation::with_rows(cols("Roles"), rows));
    let regions = ["AFRICA", "ASIA", "AUSTRALIA", "EUROPE", "N-AMERICA", "S-AMERICA"];
    let rows = regions
        .iter()
        .enumerate()
        .map(|(i, n)| vec![int(i as i64), Value::text(n)])
        .collect();
    db.insert_table("Regions", Relation::with_rows(cols("Regions"), rows));
    db
}

/// Catalog and shared-layout database of the running example.
pub fn example() -> (Catalog, Database) {
    let c = example_catalog();
    let db = example_database(&c);
    (c, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refdb::direct::execute_mtsql_direct;
    use crate::refdb::execute;
    use std::collections::BTreeSet;

    fn set(ts: &[u32]) -> BTreeSet<TenantId> {
        ts.iter().map(|&t| TenantId(t)).collect()
    }

    #[test]
    fn shared_layout_queries() {
        let (c, db) = example();
        let q = parser::parse_query("SELECT COUNT(*) FROM Employees WHERE E_ttid IN (0,1)").unwrap();
        assert_eq!(execute(&db, &c, &q).unwrap().scalar(), Some(&Value::Int(6)));
        let q = parser::parse_query("SELECT AVG(E_age) FROM Employees WHERE E_ttid IN (0,1)").unwrap();
        let avg = execute(&db, &c, &q).unwrap().scalar().unwrap().as_f64().unwrap();
        assert!((avg - 41.1666667).abs() < 1e-6);
    }

    #[test]
    fn direct_oracle_examples() {
        let (c, db) = example();
        let ss = db.to_private_layout(&c);
        let q = |sql: &str| parser::parse(sql).unwrap();
        let r = execute_mtsql_direct(
            TenantId(1),
            &set(&[0, 1]),
            &q("SELECT E_name, R_name FROM Employees, Roles WHERE E_role_id = R_role_id"),
            &ss,
            &c,
        )
        .unwrap()
        .relation;
        let mut pairs: Vec<(String, String)> = r
            .rows
            .iter()
            .map(|r| (r[0].as_str().unwrap().to_string(), r[1].as_str().unwrap().to_string()))
            .collect();
        pairs.sort();
        assert_eq!(pairs.len(), 6);
        assert!(pairs.contains(&("Ed".into(), "intern".into())));
        assert!(!pairs.contains(&("Ed".into(), "professor".into())));

        let r = execute_mtsql_direct(
            TenantId(0),
            &set(&[0, 1]),
            &q("SELECT E1.E_name, E2.E_name FROM Employees E1, Employees E2 WHERE E1.E_age = E2.E_age AND E1.E_name < E2.E_name"),
            &ss,
            &c,
        )
        .unwrap()
        .relation;
        assert!(r.rows.contains(&vec![Value::text("Alice"), Value::text("Ed")]));

        let r = execute_mtsql_direct(TenantId(0), &set(&[0, 1]), &q("SELECT AVG(E_salary) FROM Employees"), &ss, &c)
            .unwrap()
            .relation;
        let avg = r.scalar().unwrap().as_f64().unwrap();
        assert!(((avg - 282_037.04) / 282_037.04).abs() < 1e-6, "{avg}");

        let err = execute_mtsql_direct(
            TenantId(0),
            &set(&[0]),
            &q("SELECT E_name FROM Employees WHERE E_role_id = E_age"),
            &ss,
            &c,
        )
        .unwrap_err();
        assert!(matches!(err, crate::refdb::direct::DirectError::IncomparableAttributes(_)));
    }

    #[test]
    fn direct_complex_scope_and_dml() {
        let (c, db) = example();
        let ss = db.to_private_layout(&c);
        let it = crate::refdb::direct::Interpreter::new(&ss, &c, TenantId(0), &set(&[0])).unwrap();
        let Statement::SetScope(crate::ast::ScopeSpec::Complex { from, where_clause }) =
            parser::parse("SET SCOPE = \"FROM Employees WHERE E_salary > 180K\"").unwrap()
        else {
            panic!()
        };
        assert_eq!(it.resolve_complex_scope(&from, where_clause.as_ref()).unwrap(), set(&[1]));

        let del = parser::parse("DELETE FROM Employees WHERE E_age > 40").unwrap();
        let out = execute_mtsql_direct(TenantId(0), &set(&[0, 1]), &del, &ss, &c).unwrap();
        assert_eq!(out.affected, 3);
        assert!(out.relation.is_empty());
        assert_eq!(ss.private_table("Employees", TenantId(0)).unwrap().len(), 3);
    }
}
