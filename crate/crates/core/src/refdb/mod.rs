//! In-memory reference database: shared-table execution with conversion
//! counters, and a direct interpreter over private tables.

pub mod direct;
pub mod exec;
pub mod relation;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ast::Direction;
use crate::catalog::Catalog;
use crate::tenant::TenantId;
use crate::value::{round2, ScalarType, Value};

pub use exec::{execute, ExecError};
pub use relation::{Column, Relation, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    SharedTables,
    PrivateTables,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FixtureFormatError {
    #[error("fixture: {0}")]
    Parse(String),
    #[error("fixture table {table}: row {row} has {got} values, expected {expected}")]
    Arity {
        table: String,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("fixture table {table}: row {row}, column {column}: {reason}")]
    BadValue {
        table: String,
        row: usize,
        column: String,
        reason: String,
    },
    #[error("fixture: {0}")]
    Invalid(String),
}

pub type CounterKey = (String, Direction);

/// Stored data plus conversion-invocation tallies.
#[derive(Debug)]
pub struct Database {
    pub layout: Layout,
    /// Shared layout: every table. Private layout: global tables only.
    pub tables: BTreeMap<String, Relation>,
    /// Private layout: one instance per (table, owner).
    pub private: BTreeMap<(String, TenantId), Relation>,
    counters: Mutex<BTreeMap<CounterKey, u64>>,
}

impl Clone for Database {
    fn clone(&self) -> Database {
        Database {
            layout: self.layout,
            tables: self.tables.clone(),
            private: self.private.clone(),
            counters: Mutex::new(self.counters()),
        }
    }
}

impl PartialEq for Database {
    fn eq(&self, other: &Database) -> bool {
        self.layout == other.layout && self.tables == other.tables && self.private == other.private
    }
}

pub(crate) fn key(name: &str) -> String {
    name.to_ascii_lowercase()
}

impl Database {
    pub fn new(layout: Layout) -> Database {
        Database {
            layout,
            tables: BTreeMap::new(),
            private: BTreeMap::new(),
            counters: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Relation> {
        self.tables.get(&key(name))
    }

    pub fn table_mut(&mut self, name: &str) -> Option<&mut Relation> {
        self.tables.get_mut(&key(name))
    }

    pub fn insert_table(&mut self, name: &str, rel: Relation) {
        self.tables.insert(key(name), rel);
    }

    pub fn private_table(&self, name: &str, owner: TenantId) -> Option<&Relation> {
        self.private.get(&(key(name), owner))
    }

    pub fn counters(&self) -> BTreeMap<CounterKey, u64> {
        self.counters.lock().expect("counter lock").clone()
    }

    /// Sum over all pairs and directions.
    pub fn total_conversions(&self) -> u64 {
        self.counters().values().sum()
    }

    pub fn reset_counters(&self) {
        self.counters.lock().expect("counter lock").clear();
    }

    pub(crate) fn add_counts(&self, counts: &BTreeMap<CounterKey, u64>) {
        let mut c = self.counters.lock().expect("counter lock");
        for (k, v) in counts {
            *c.entry(k.clone()).or_insert(0) += v;
        }
    }

    /// Split shared tables by owner. Tenants of the catalog without rows get
    /// empty instances.
    pub fn to_private_layout(&self, catalog: &Catalog) -> Database {
        assert_eq!(self.layout, Layout::SharedTables, "already private");
        let mut out = Database::new(Layout::PrivateTables);
        for (name, rel) in &self.tables {
            let def = catalog.table(name);
            match def.and_then(|d| d.ttid_column.as_ref().map(|t| (d, t))) {
                Some((def, ttid)) => {
                    let idx = rel.column_index(ttid).expect("shared table has its ttid column");
                    let columns: Vec<Column> = rel
                        .columns
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != idx)
                        .map(|(_, c)| c.clone())
                        .collect();
                    for t in &catalog.tenants {
                        out.private.insert((key(&def.name), *t), Relation::new(columns.clone()));
                    }
                    for row in &rel.rows {
                        let owner = TenantId(row[idx].as_i64().expect("integer ttid") as u32);
                        let mut r = row.clone();
                        r.remove(idx);
                        out.private
                            .entry((key(&def.name), owner))
                            .or_insert_with(|| Relation::new(columns.clone()))
                            .rows
                            .push(r);
                    }
                }
                None => {
                    out.tables.insert(name.clone(), rel.clone());
                }
            }
        }
        out
    }

    /// Union private instances back into shared tables (ttid first, rows
    /// grouped by owner in ascending order).
    pub fn to_shared_layout(&self, catalog: &Catalog) -> Database {
        assert_eq!(self.layout, Layout::PrivateTables, "already shared");
        let mut out = Database::new(Layout::SharedTables);
        for (name, rel) in &self.tables {
            out.tables.insert(name.clone(), rel.clone());
        }
        for ((name, owner), rel) in &self.private {
            let def = catalog.table(name).expect("private instance of a known table");
            let ttid = def.ttid_column.clone().expect("tenant-specific table");
            let shared = out.tables.entry(name.clone()).or_insert_with(|| {
                let mut cols = vec![Column::new(ttid, Some(ScalarType::Int))];
                cols.extend(rel.columns.iter().cloned());
                Relation::new(cols)
            });
            for r in &rel.rows {
                let mut row = vec![Value::Int(owner.0 as i64)];
                row.extend(r.iter().cloned());
                shared.rows.push(row);
            }
        }
        out
    }

    /// Stable-sort tenant-specific shared tables by owner, the canonical
    /// row order produced by `to_shared_layout`.
    pub fn normalize(&mut self, catalog: &Catalog) {
        for (name, rel) in self.tables.iter_mut() {
            if let Some(ttid) = catalog.table(name).and_then(|d| d.ttid_column.as_ref()) {
                if let Some(idx) = rel.column_index(ttid) {
                    rel.rows.sort_by_key(|r| r[idx].as_i64().unwrap_or(i64::MAX));
                }
            }
        }
    }

    /// Empty shared tables for every catalog table not yet present.
    pub fn ensure_tables(&mut self, catalog: &Catalog) {
        for def in &catalog.tables {
            let cols = def
                .shared_columns()
                .into_iter()
                .map(|(n, t)| Column::new(n, Some(t)))
                .collect();
            self.tables.entry(key(&def.name)).or_insert_with(|| Relation::new(cols));
        }
    }

    pub fn from_json_str(s: &str) -> Result<Database, FixtureFormatError> {
        let f: FixtureFile = serde_json::from_str(s).map_err(|e| FixtureFormatError::Parse(e.to_string()))?;
        f.into_database()
    }

    pub fn load(path: &Path) -> Result<Database, FixtureFormatError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FixtureFormatError::Parse(format!("{}: {e}", path.display())))?;
        Database::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let mut tables = Vec::new();
        let mut push = |name: &str, tenant: Option<TenantId>, rel: &Relation| {
            tables.push(FixtureTable {
                name: name.to_string(),
                tenant,
                columns: rel
                    .columns
                    .iter()
                    .map(|c| FixtureColumn {
                        name: c.name.clone(),
                        ty: c.ty.unwrap_or(ScalarType::Text),
                    })
                    .collect(),
                rows: rel
                    .rows
                    .iter()
                    .map(|r| r.iter().map(fixture_value).collect())
                    .collect(),
            });
        };
        for (name, rel) in &self.tables {
            push(name, None, rel);
        }
        for ((name, t), rel) in &self.private {
            push(name, Some(*t), rel);
        }
        let f = FixtureFile {
            layout: self.layout,
            tables,
        };
        serde_json::to_string(&f).expect("fixture serializes")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_string())
    }
}

fn fixture_value(v: &Value) -> serde_json::Value {
    match v {
        Value::Null => serde_json::Value::Null,
        Value::Int(i) => serde_json::Value::from(*i),
        Value::Dec(d) => serde_json::Value::String(format!("{d:.2}")),
        Value::Text(s) => serde_json::Value::String(s.to_string()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureColumn {
    name: String,
    #[serde(rename = "type")]
    ty: ScalarType,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureTable {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tenant: Option<TenantId>,
    columns: Vec<FixtureColumn>,
    #[serde(default)]
    rows: Vec<Vec<serde_json::Value>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureFile {
    layout: Layout,
    tables: Vec<FixtureTable>,
}

impl FixtureFile {
    fn into_database(self) -> Result<Database, FixtureFormatError> {
        let mut db = Database::new(self.layout);
        for t in self.tables {
            let columns: Vec<Column> = t.columns.iter().map(|c| Column::new(c.name.clone(), Some(c.ty))).collect();
            let mut rel = Relation::new(columns);
            for (ri, raw) in t.rows.into_iter().enumerate() {
                if raw.len() != t.columns.len() {
                    return Err(FixtureFormatError::Arity {
                        table: t.name.clone(),
                        row: ri,
                        got: raw.len(),
                        expected: t.columns.len(),
                    });
                }
                let mut row = Vec::with_capacity(raw.len());
                for (v, c) in raw.into_iter().zip(&t.columns) {
                    row.push(parse_cell(v, c.ty).map_err(|reason| FixtureFormatError::BadValue {
                        table: t.name.clone(),
                        row: ri,
                        column: c.name.clone(),
                        reason,
                    })?);
                }
                rel.rows.push(row);
            }
            match (self.layout, t.tenant) {
                (_, None) => {
                    if db.tables.insert(key(&t.name), rel).is_some() {
                        return Err(FixtureFormatError::Invalid(format!("duplicate table {}", t.name)));
                    }
                }
                (Layout::PrivateTables, Some(owner)) => {
                    if db.private.insert((key(&t.name), owner), rel).is_some() {
                        return Err(FixtureFormatError::Invalid(format!(
                            "duplicate instance {} of tenant {owner}",
                            t.name
                        )));
                    }
                }
                (Layout::SharedTables, Some(_)) => {
                    return Err(FixtureFormatError::Invalid(format!(
                        "table {}: tenant instances require the private layout",
                        t.name
                    )))
                }
            }
        }
        Ok(db)
    }
}

fn parse_cell(v: serde_json::Value, ty: ScalarType) -> Result<Value, String> {
    use serde_json::Value as J;
    match (v, ty) {
        (J::Null, _) => Ok(Value::Null),
        (J::Number(n), ScalarType::Int) => n.as_i64().map(Value::Int).ok_or_else(|| format!("{n} is not an integer")),
        (J::String(s), ScalarType::Int) => s.trim().parse().map(Value::Int).map_err(|_| format!("'{s}' is not an integer")),
        (J::Number(n), ScalarType::Decimal) => n
            .as_f64()
            .map(|d| Value::Dec(round2(d)))
            .ok_or_else(|| format!("{n} is not a decimal")),
        (J::String(s), ScalarType::Decimal) => s
            .trim()
            .parse::<f64>()
            .map(|d| Value::Dec(round2(d)))
            .map_err(|_| format!("'{s}' is not a decimal")),
        (J::String(s), ScalarType::Text) => Ok(Value::text(s)),
        (other, ty) => Err(format!("{other} does not fit type {ty}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_mismatch_is_reported() {
        let json = r#"{"layout":"shared_tables","tables":[{"name":"t","columns":[{"name":"a","type":"int"}],"rows":[[1,2]]}]}"#;
        assert!(matches!(Database::from_json_str(json), Err(FixtureFormatError::Arity { .. })));
    }

    #[test]
    fn empty_tables_load_and_decimals_parse_from_strings() {
        let json = r#"{"layout":"shared_tables","tables":[
            {"name":"e","columns":[{"name":"x","type":"decimal"}],"rows":[["135000.00"]]},
            {"name":"empty","columns":[{"name":"a","type":"int"}]}]}"#;
        let db = Database::from_json_str(json).unwrap();
        assert_eq!(db.table("E").unwrap().rows[0][0], Value::Dec(135_000.0));
        assert!(db.table("empty").unwrap().is_empty());
        let again = Database::from_json_str(&db.to_json_string()).unwrap();
        assert_eq!(again, db);
    }
}
