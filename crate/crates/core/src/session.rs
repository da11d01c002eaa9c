//! Per-connection state: the client, its scope, and the statement pipeline
//! (scope resolution, privilege pruning, rewrite, optimization, execution).

use std::collections::BTreeSet;

use crate::ast::*;
use crate::catalog::{column_from_ast, Catalog, CatalogError, ConstraintDef, ConstraintScope, TableDef, ViewDef};
use crate::optimizer::{self, OptimizationLevel, OptimizeError};
use crate::refdb::direct::{DirectError, Interpreter};
use crate::refdb::exec::execute_statement;
use crate::refdb::{execute, Column, Database, ExecError, Layout, Relation};
use crate::rewriter::{RewriteContext, RewriteError, ScopeQuery};
use crate::tenant::{Right, TenantId};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown tenant {0}")]
    UnknownTenant(TenantId),
    #[error("scope evaluation failed: {0}")]
    ScopeEvaluation(String),
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Execution(#[from] ExecError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Direct(#[from] DirectError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionContext {
    pub client: TenantId,
    pub scope: ScopeSpec,
}

pub fn open_session(catalog: &Catalog, client: TenantId) -> Result<SessionContext, SessionError> {
    if !catalog.is_tenant(client) {
        return Err(SessionError::UnknownTenant(client));
    }
    Ok(SessionContext {
        client,
        scope: ScopeSpec::Simple(vec![client]),
    })
}

/// Tables a statement touches and the right each needs.
pub fn required_rights(s: &Statement) -> Vec<(String, Right)> {
    let mut out: Vec<(String, Right)> = Vec::new();
    let mut push = |t: &str, r: Right| {
        if !out.iter().any(|(n, x)| n.eq_ignore_ascii_case(t) && *x == r) {
            out.push((t.to_string(), r));
        }
    };
    let reads = |q: &Query, push: &mut dyn FnMut(&str, Right)| {
        for t in q.base_tables() {
            push(&t, Right::Read);
        }
    };
    let expr_reads = |e: &Expr, push: &mut dyn FnMut(&str, Right)| {
        for q in e.subqueries() {
            reads(q, push);
        }
    };
    match s {
        Statement::Query(q) => reads(q, &mut push),
        Statement::Insert(i) => {
            push(&i.table, Right::Insert);
            if let InsertSource::Query(q) = &i.source {
                reads(q, &mut push);
            }
        }
        Statement::Update(u) => {
            push(&u.table, Right::Update);
            for (_, e) in &u.assignments {
                expr_reads(e, &mut push);
            }
            if let Some(w) = &u.where_clause {
                expr_reads(w, &mut push);
            }
        }
        Statement::Delete(d) => {
            push(&d.table, Right::Delete);
            if let Some(w) = &d.where_clause {
                expr_reads(w, &mut push);
            }
        }
        _ => {}
    }
    out
}

impl SessionContext {
    pub fn set_scope(&mut self, scope: ScopeSpec) {
        self.scope = scope;
    }

    /// Tenants addressed by the current scope.
    pub fn resolve_scope(&self, catalog: &Catalog, db: &Database) -> Result<BTreeSet<TenantId>, SessionError> {
        match &self.scope {
            ScopeSpec::Simple(list) if list.is_empty() => Ok(catalog.tenants.clone()),
            ScopeSpec::Simple(list) => Ok(list.iter().copied().filter(|t| catalog.is_tenant(*t)).collect()),
            ScopeSpec::Complex { from, where_clause } => {
                let err = |e: &dyn std::fmt::Display| SessionError::ScopeEvaluation(e.to_string());
                match db.layout {
                    Layout::PrivateTables => Interpreter::new(db, catalog, self.client, &catalog.tenants)
                        .and_then(|it| it.resolve_complex_scope(from, where_clause.as_ref()))
                        .map_err(|e| err(&e)),
                    Layout::SharedTables => {
                        let ctx = RewriteContext::new(catalog, self.client, catalog.tenants.clone());
                        match ctx.rewrite_scope(from, where_clause.as_ref()).map_err(|e| err(&e))? {
                            ScopeQuery::Owners(q) => {
                                let rel = execute(db, catalog, &q).map_err(|e| err(&e))?;
                                Ok(rel
                                    .rows
                                    .iter()
                                    .filter_map(|r| r[0].as_i64())
                                    .map(|t| TenantId(t as u32))
                                    .collect())
                            }
                            ScopeQuery::Count(q) => {
                                let rel = execute(db, catalog, &q).map_err(|e| err(&e))?;
                                let n = rel.scalar().and_then(Value::as_i64).unwrap_or(0);
                                Ok(if n > 0 { catalog.tenants.clone() } else { BTreeSet::new() })
                            }
                        }
                    }
                }
            }
        }
    }

    /// Keep the tenants on whose instances of every listed tenant-specific
    /// table the client holds the listed right.
    pub fn prune_by_privilege(
        &self,
        catalog: &Catalog,
        dataset: &BTreeSet<TenantId>,
        tables: &[(String, Right)],
    ) -> BTreeSet<TenantId> {
        dataset
            .iter()
            .copied()
            .filter(|&d| {
                tables.iter().all(|(t, r)| match catalog.table(t) {
                    Some(def) if def.is_tenant_specific() => catalog.has_privilege(self.client, d, &def.name, *r),
                    _ => true,
                })
            })
            .collect()
    }

    /// D′ for a statement: the resolved scope pruned by its required rights.
    pub fn dataset_for(
        &self,
        catalog: &Catalog,
        db: &Database,
        s: &Statement,
    ) -> Result<BTreeSet<TenantId>, SessionError> {
        let d = self.resolve_scope(catalog, db)?;
        Ok(self.prune_by_privilege(catalog, &d, &required_rights(s)))
    }
}

/// Result of one statement run through the full pipeline.
#[derive(Debug, Clone, Default)]
pub struct StatementResult {
    pub dataset: BTreeSet<TenantId>,
    /// Plain SQL that was executed.
    pub sql: Vec<Statement>,
    pub relation: Option<Relation>,
    pub affected: usize,
    pub diagnostics: Vec<String>,
}

/// Rewrite, optimize and execute a query on the shared layout, dropping
/// internal columns.
pub fn run_query(
    catalog: &Catalog,
    db: &Database,
    client: TenantId,
    dataset: &BTreeSet<TenantId>,
    q: &Query,
    level: OptimizationLevel,
) -> Result<(Query, Relation), RunError> {
    let ctx = RewriteContext::new(catalog, client, dataset.clone());
    let out = ctx.rewrite_query(q)?;
    let canonical = out.query().expect("query rewrite").clone();
    let optimized = optimizer::optimize(&ctx, canonical, level)?;
    let mut rel = execute(db, catalog, &optimized)?;
    let visible = rel.columns.len() - out.hidden_columns;
    rel.truncate_columns(visible);
    Ok((optimized, rel))
}

fn apply_alter(catalog: &mut Catalog, db: &mut Database, table: &str, action: &AlterAction, client: TenantId) -> Result<(), RunError> {
    let def = catalog.require_table(table)?.clone();
    match action {
        AlterAction::AddColumn(c) => {
            let meta = column_from_ast(&def.name, c, def.generality)?;
            let fill = meta.default.clone().unwrap_or(Value::Null);
            let col = Column::new(meta.name.clone(), Some(meta.ty));
            catalog.add_column(&def.name, meta)?;
            let rels: Vec<&mut Relation> = match db.layout {
                Layout::SharedTables => db.table_mut(&def.name).into_iter().collect(),
                Layout::PrivateTables if def.is_tenant_specific() => db
                    .private
                    .iter_mut()
                    .filter(|((n, _), _)| n.eq_ignore_ascii_case(&def.name))
                    .map(|(_, r)| r)
                    .collect(),
                Layout::PrivateTables => db.table_mut(&def.name).into_iter().collect(),
            };
            for rel in rels {
                rel.columns.push(col.clone());
                for row in rel.rows.iter_mut() {
                    row.push(fill.clone());
                }
            }
        }
        AlterAction::DropColumn(name) => {
            catalog.drop_column(&def.name, name)?;
            let key = def.name.to_ascii_lowercase();
            let Database { tables, private, .. } = db;
            let mut rels: Vec<&mut Relation> = tables.get_mut(&key).into_iter().collect();
            rels.extend(
                private
                    .iter_mut()
                    .filter(|((n, _), _)| n.eq_ignore_ascii_case(&def.name))
                    .map(|(_, r)| r),
            );
            for rel in rels {
                if let Some(i) = rel.column_index(name) {
                    rel.columns.remove(i);
                    for row in rel.rows.iter_mut() {
                        row.remove(i);
                    }
                }
            }
        }
        AlterAction::AddConstraint(c) => {
            let scope = if def.is_tenant_specific() {
                ConstraintScope::Tenant(client)
            } else {
                ConstraintScope::Global
            };
            catalog.add_constraint(&def.name, ConstraintDef::from_ast(c, scope))?;
        }
    }
    Ok(())
}

impl SessionContext {
    /// Run one MTSQL statement against a shared-layout database, updating
    /// catalog and data as needed.
    pub fn execute(
        &mut self,
        catalog: &mut Catalog,
        db: &mut Database,
        s: &Statement,
        level: OptimizationLevel,
    ) -> Result<StatementResult, RunError> {
        let mut res = StatementResult::default();
        match s {
            Statement::SetScope(scope) => {
                self.set_scope(scope.clone());
                res.dataset = self.resolve_scope(catalog, db)?;
                res.diagnostics.push(format!("scope resolves to {}", fmt_set(&res.dataset)));
            }
            Statement::Grant(p) | Statement::Revoke(p) => {
                let d = self.resolve_scope(catalog, db)?;
                if matches!(s, Statement::Grant(_)) {
                    catalog.grant(self.client, &d, &p.rights, &p.table, p.grantee)?;
                } else {
                    catalog.revoke(self.client, &d, &p.rights, &p.table, p.grantee)?;
                }
                res.dataset = d;
            }
            Statement::Query(q) => {
                let d = self.dataset_for(catalog, db, s)?;
                let (optimized, rel) = run_query(catalog, db, self.client, &d, q, level)?;
                res.sql = vec![Statement::Query(optimized)];
                res.relation = Some(rel);
                res.dataset = d;
            }
            Statement::Insert(_) | Statement::Update(_) | Statement::Delete(_) => {
                let d = self.dataset_for(catalog, db, s)?;
                let ctx = RewriteContext::new(catalog, self.client, d.clone());
                let out = ctx.rewrite_statement(s, Some(db))?;
                for stmt in &out.sql {
                    res.affected += execute_statement(db, catalog, stmt)?.affected;
                }
                res.sql = out.sql;
                res.diagnostics = out.diagnostics;
                res.diagnostics.push(format!("{} row(s) affected", res.affected));
                res.dataset = d;
            }
            Statement::CreateTable(ct) => {
                let ctx = RewriteContext::new(catalog, self.client, [self.client].into());
                res.sql = ctx.rewrite_statement(s, None)?.sql;
                catalog.define_table(TableDef::from_ast(ct)?)?;
                db.ensure_tables(catalog);
            }
            Statement::AlterTable { name, action } => {
                let ctx = RewriteContext::new(catalog, self.client, [self.client].into());
                res.sql = ctx.rewrite_statement(s, None)?.sql;
                apply_alter(catalog, db, name, action, self.client)?;
            }
            Statement::CreateView { name, query } => {
                let d = self.dataset_for(catalog, db, &Statement::Query((**query).clone()))?;
                let ctx = RewriteContext::new(catalog, self.client, d.clone());
                let out = ctx.rewrite_statement(s, None)?;
                let Some(Statement::CreateView { query: body, .. }) = out.sql.first() else {
                    unreachable!("view rewrite")
                };
                let columns = body
                    .select
                    .iter()
                    .enumerate()
                    .map(|(i, item)| match item {
                        SelectItem::Expr { expr, alias } => output_name(expr, alias.as_deref(), i),
                        _ => unreachable!("wildcards are expanded by the rewrite"),
                    })
                    .collect();
                catalog.define_view(ViewDef {
                    name: name.clone(),
                    sql: body.to_string(),
                    columns,
                })?;
                res.sql = out.sql;
                res.dataset = d;
            }
            Statement::DropTable { name } => {
                res.sql = vec![s.clone()];
                catalog.drop_table(name)?;
                db.tables.remove(&name.to_ascii_lowercase());
            }
            Statement::DropView { name } => {
                res.sql = vec![s.clone()];
                catalog.drop_view(name)?;
            }
        }
        Ok(res)
    }
}

/// Compare the shared-layout rewrite of `s` with direct evaluation on the
/// private layout. `None` when both agree; otherwise a description of the
/// first difference. DML is compared on the resulting table contents.
pub fn oracle_compare(
    catalog: &Catalog,
    st: &Database,
    client: TenantId,
    dataset: &BTreeSet<TenantId>,
    s: &Statement,
) -> Result<Option<String>, RunError> {
    let ss = st.to_private_layout(catalog);
    let direct = crate::refdb::direct::execute_mtsql_direct(client, dataset, s, &ss, catalog)?;
    match s {
        Statement::Query(q) => {
            let (_, rel) = run_query(catalog, st, client, dataset, q, OptimizationLevel::Canonical)?;
            Ok(direct.relation.multiset_diff(&rel))
        }
        Statement::Insert(_) | Statement::Update(_) | Statement::Delete(_) => {
            let mut db = st.clone();
            let ctx = RewriteContext::new(catalog, client, dataset.clone());
            let mut affected = 0;
            for stmt in ctx.rewrite_statement(s, Some(&db))?.sql {
                affected += execute_statement(&mut db, catalog, &stmt)?.affected;
            }
            if affected != direct.affected {
                return Ok(Some(format!("affected rows: rewrite {affected}, direct {}", direct.affected)));
            }
            let after = db.to_private_layout(catalog);
            let want = direct.snapshot.unwrap_or(ss);
            for (k, rel) in &want.private {
                let got = after.private.get(k).map(|r| r.multiset_diff(rel));
                match got {
                    Some(None) => {}
                    Some(Some(d)) => return Ok(Some(format!("{} of tenant {}: {d}", k.0, k.1))),
                    None => return Ok(Some(format!("{} of tenant {} missing", k.0, k.1))),
                }
            }
            Ok(None)
        }
        _ => Ok(None),
    }
}

pub fn fmt_set(s: &BTreeSet<TenantId>) -> String {
    let items: Vec<String> = s.iter().map(|t| t.to_string()).collect();
    format!("{{{}}}", items.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::example;
    use crate::parser::parse;

    fn set(ts: &[u32]) -> BTreeSet<TenantId> {
        ts.iter().map(|&t| TenantId(t)).collect()
    }

    #[test]
    fn open_and_resolve() {
        let (c, db) = example();
        assert_eq!(open_session(&c, TenantId(99)), Err(SessionError::UnknownTenant(TenantId(99))));
        let mut s = open_session(&c, TenantId(1)).unwrap();
        assert_eq!(s.resolve_scope(&c, &db).unwrap(), set(&[1]));
        s.set_scope(ScopeSpec::Simple(vec![]));
        assert_eq!(s.resolve_scope(&c, &db).unwrap(), set(&[0, 1]));
        s.set_scope(ScopeSpec::Simple(vec![TenantId(1), TenantId(3), TenantId(42)]));
        assert_eq!(s.resolve_scope(&c, &db).unwrap(), set(&[1]));

        let mut s = open_session(&c, TenantId(0)).unwrap();
        let Statement::SetScope(scope) = parse("SET SCOPE = \"FROM Employees WHERE E_salary > 180K\"").unwrap() else {
            panic!()
        };
        s.set_scope(scope);
        assert_eq!(s.resolve_scope(&c, &db).unwrap(), set(&[1]));
        assert_eq!(s.resolve_scope(&c, &db.to_private_layout(&c)).unwrap(), set(&[1]));

        let Statement::SetScope(bad) = parse("SET SCOPE = \"FROM Nowhere WHERE x = 1\"").unwrap() else { panic!() };
        s.set_scope(bad);
        assert!(matches!(s.resolve_scope(&c, &db), Err(SessionError::ScopeEvaluation(_))));
    }

    #[test]
    fn pruning() {
        let (mut c, mut db) = example();
        let mut s = open_session(&c, TenantId(0)).unwrap();
        let read = [("Employees".to_string(), Right::Read)];
        assert_eq!(s.prune_by_privilege(&c, &set(&[0, 1]), &read), set(&[0]));
        let mut one = open_session(&c, TenantId(1)).unwrap();
        one.execute(&mut c, &mut db, &parse("GRANT READ ON Employees TO 0").unwrap(), OptimizationLevel::Canonical)
            .unwrap();
        assert_eq!(s.prune_by_privilege(&c, &set(&[0, 1]), &read), set(&[0, 1]));
        assert_eq!(s.prune_by_privilege(&c, &set(&[0]), &read), set(&[0]));

        s.set_scope(ScopeSpec::Simple(vec![]));
        let r = s
            .execute(&mut c, &mut db, &parse("SELECT COUNT(*) FROM Employees").unwrap(), OptimizationLevel::O3)
            .unwrap();
        assert_eq!(r.relation.unwrap().scalar(), Some(&Value::Int(6)));
        // Roles of tenant 1 are still private
        let r = s
            .execute(
                &mut c,
                &mut db,
                &parse("SELECT COUNT(*) FROM Employees, Roles WHERE E_role_id = R_role_id").unwrap(),
                OptimizationLevel::O1,
            )
            .unwrap();
        assert_eq!(r.dataset, set(&[0]));
        assert_eq!(r.relation.unwrap().scalar(), Some(&Value::Int(3)));
    }

    #[test]
    fn ddl_and_dml_pipeline() {
        let (mut c, mut db) = example();
        let mut s = open_session(&c, TenantId(0)).unwrap();
        let run = |s: &mut SessionContext, c: &mut Catalog, db: &mut Database, sql: &str| {
            s.execute(c, db, &parse(sql).unwrap(), OptimizationLevel::O2).unwrap()
        };
        run(&mut s, &mut c, &mut db, "ALTER TABLE Employees ADD COLUMN E_bonus INTEGER COMPARABLE DEFAULT 5");
        let r = run(&mut s, &mut c, &mut db, "SELECT SUM(E_bonus) FROM Employees");
        assert_eq!(r.relation.unwrap().scalar(), Some(&Value::Int(15)));
        let r = run(&mut s, &mut c, &mut db, "UPDATE Employees SET E_salary = E_salary + 1000 WHERE E_age < 30");
        assert_eq!(r.affected, 1);
        run(&mut s, &mut c, &mut db, "CREATE VIEW Rich AS SELECT E_name, E_salary FROM Employees WHERE E_salary > 60000");
        let r = run(&mut s, &mut c, &mut db, "SELECT COUNT(*) FROM Rich");
        assert_eq!(r.relation.unwrap().scalar(), Some(&Value::Int(2)));
        let r = run(&mut s, &mut c, &mut db, "DELETE FROM Employees WHERE E_age > 40");
        assert_eq!(r.affected, 1);
    }
}
