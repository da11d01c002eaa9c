//! Canonical MTSQL-to-SQL rewrite.
//!
//! Output runs on the shared-table layout: convertible attributes are
//! wrapped as `fromUniversal(toUniversal(col, ttid), C)`, every
//! tenant-specific base table gets a `ttid IN (D')` filter, and comparisons
//! between tenant-specific attributes of different owners gain a ttid
//! equality. Sub-queries export `<column>_ttid` for tenant-specific outputs.

use std::collections::BTreeSet;

use crate::ast::*;
use crate::catalog::{Catalog, CatalogError, Comparability, TableDef};
use crate::conversion::ConversionError;
use crate::refdb::{self, Database, ExecError};
use crate::tenant::{Right, TenantId};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewriteError {
    #[error("incomparable attributes: {0}")]
    IncomparableAttributes(String),
    #[error("unknown table '{0}'")]
    UnknownTable(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("ambiguous column '{0}'")]
    AmbiguousColumn(String),
    #[error("tenant {client} lacks {right} on {table} of tenant {owner}")]
    MissingPrivilege {
        client: TenantId,
        owner: TenantId,
        table: String,
        right: Right,
    },
    #[error("column {table}.{column} is NOT NULL and has no value or default")]
    NotNullWithoutValue { table: String, column: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Conversion(#[from] ConversionError),
    #[error(transparent)]
    Execution(#[from] ExecError),
}

type RResult<T> = Result<T, RewriteError>;

/// Who asks (`client`) and whose data is addressed (`dataset`, already
/// pruned by privileges).
#[derive(Debug, Clone)]
pub struct RewriteContext<'a> {
    pub catalog: &'a Catalog,
    pub client: TenantId,
    pub dataset: BTreeSet<TenantId>,
}

/// Plain SQL statements plus notes. For queries, the trailing
/// `hidden_columns` result columns are internal and must be dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RewriteOutput {
    pub sql: Vec<Statement>,
    pub hidden_columns: usize,
    pub diagnostics: Vec<String>,
}

impl RewriteOutput {
    fn single(s: Statement) -> RewriteOutput {
        RewriteOutput {
            sql: vec![s],
            hidden_columns: 0,
            diagnostics: Vec::new(),
        }
    }

    /// The rewritten query, for query outputs.
    pub fn query(&self) -> Option<&Query> {
        match self.sql.as_slice() {
            [Statement::Query(q)] => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum RKind {
    Const,
    Plain,
    /// Tenant-specific, with an expression yielding the owner.
    Specific(Expr),
}

#[derive(Debug, Clone, PartialEq)]
enum RClass {
    Comparable,
    Specific,
    Convertible(String),
    /// Tenant-specific output of a sub-query; owner in `<name>_ttid`.
    Exported,
}

#[derive(Debug, Clone)]
struct RCol {
    name: String,
    class: RClass,
    hidden: bool,
}

#[derive(Debug, Clone)]
struct RSource {
    qualifier: String,
    ttid: Option<String>,
    cols: Vec<RCol>,
}

#[derive(Debug, Clone, Default)]
struct RScope {
    sources: Vec<RSource>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Top,
    /// FROM-clause sub-query, IN or scalar sub-query: tenant-specific outputs
    /// export their owner.
    Nested,
    Exists,
}

struct RQuery {
    query: Query,
    /// Visible output columns with their kinds (owners at the query's level).
    cols: Vec<(String, RKind)>,
    hidden: usize,
}

pub fn export_name(column: &str) -> String {
    format!("{column}_ttid")
}

fn combine(a: RKind, b: RKind, what: &dyn Fn() -> String) -> RResult<RKind> {
    Ok(match (a, b) {
        (RKind::Const, k) | (k, RKind::Const) => k,
        (RKind::Plain, RKind::Plain) => RKind::Plain,
        _ => return Err(RewriteError::IncomparableAttributes(what())),
    })
}

fn check_comparable(a: &RKind, b: &RKind, what: &dyn Fn() -> String) -> RResult<()> {
    match (a, b) {
        (RKind::Specific(_), RKind::Plain) | (RKind::Plain, RKind::Specific(_)) => {
            Err(RewriteError::IncomparableAttributes(what()))
        }
        _ => Ok(()),
    }
}

fn lookup(scopes: &[RScope], c: &ColumnRef, hidden: bool) -> RResult<Option<(usize, usize, usize)>> {
    for (depth, scope) in scopes.iter().rev().enumerate() {
        let mut found = None;
        for (si, s) in scope.sources.iter().enumerate() {
            if c.qualifier.as_ref().is_some_and(|q| !s.qualifier.eq_ignore_ascii_case(q)) {
                continue;
            }
            for (ci, col) in s.cols.iter().enumerate() {
                if (hidden || !col.hidden) && col.name.eq_ignore_ascii_case(&c.name) {
                    if found.is_some() {
                        return Err(RewriteError::AmbiguousColumn(c.to_string()));
                    }
                    found = Some((depth, si, ci));
                }
            }
        }
        if found.is_some() {
            return Ok(found);
        }
    }
    Ok(None)
}

/// Reference to column `name` of source `si` at `depth`, unqualified when
/// that resolves unambiguously to the same source.
fn source_ref(scopes: &[RScope], depth: usize, si: usize, name: &str, prefer_qualified: bool) -> Expr {
    let src = &scopes[scopes.len() - 1 - depth].sources[si];
    if !prefer_qualified {
        let c = ColumnRef {
            qualifier: None,
            name: name.to_string(),
        };
        if let Ok(Some((d, s, _))) = lookup(scopes, &c, true) {
            if d == depth && s == si {
                return Expr::Column(c);
            }
        }
    }
    Expr::qcol(Some(&src.qualifier), name)
}

fn flatten_from<'q>(f: &'q FromItem, out: &mut Vec<&'q FromItem>) {
    match f {
        FromItem::Join { left, right, .. } => {
            flatten_from(left, out);
            flatten_from(right, out);
        }
        other => out.push(other),
    }
}

fn lit(v: &Value) -> Expr {
    match v {
        Value::Int(i) if *i < 0 => Expr::Unary {
            op: UnaryOp::Neg,
            expr: Box::new(Expr::int(-i)),
        },
        Value::Dec(d) if *d < 0.0 => Expr::Unary {
            op: UnaryOp::Neg,
            expr: Box::new(Expr::Literal(Literal::Dec(-d))),
        },
        other => Expr::Literal(Literal::from_value(other)),
    }
}

fn literal_value(e: &Expr) -> Option<Value> {
    match e {
        Expr::Literal(l) => Some(l.to_value()),
        Expr::Unary { op: UnaryOp::Neg, expr } => literal_value(expr).and_then(|v| v.neg().ok()),
        _ => None,
    }
}

fn tenant_expr(t: TenantId) -> Expr {
    Expr::int(t.0 as i64)
}

impl<'a> RewriteContext<'a> {
    pub fn new(catalog: &'a Catalog, client: TenantId, dataset: BTreeSet<TenantId>) -> Self {
        RewriteContext {
            catalog,
            client,
            dataset,
        }
    }

    fn with_dataset(&self, dataset: BTreeSet<TenantId>) -> RewriteContext<'a> {
        RewriteContext {
            catalog: self.catalog,
            client: self.client,
            dataset,
        }
    }

    /// `pairFromUniversal(pairToUniversal(x, owner), C)`
    fn to_client(&self, pair: &str, x: Expr, owner: Expr) -> Expr {
        Expr::convert(
            pair,
            Direction::FromUniversal,
            Expr::convert(pair, Direction::ToUniversal, x, owner),
            tenant_expr(self.client),
        )
    }

    /// Convert a client-format value into tenant `d`'s format, folding
    /// literals.
    fn client_to_tenant(&self, pair: &str, x: Expr, d: TenantId) -> RResult<Expr> {
        if let Some(v) = literal_value(&x) {
            let p = self.catalog.require_pair(pair)?;
            let u = p.to_universal(self.client, &v)?;
            return Ok(lit(&p.from_universal(d, &u)?));
        }
        Ok(Expr::convert(
            pair,
            Direction::FromUniversal,
            Expr::convert(pair, Direction::ToUniversal, x, tenant_expr(self.client)),
            tenant_expr(d),
        ))
    }

    fn table_source(&self, def: &TableDef, qualifier: String) -> RSource {
        let mut cols: Vec<RCol> = def
            .columns
            .iter()
            .map(|c| RCol {
                name: c.name.clone(),
                class: match &c.comparability {
                    _ if !def.is_tenant_specific() => RClass::Comparable,
                    Comparability::Comparable => RClass::Comparable,
                    Comparability::TenantSpecific => RClass::Specific,
                    Comparability::Convertible(p) => RClass::Convertible(p.clone()),
                },
                hidden: false,
            })
            .collect();
        if let Some(t) = &def.ttid_column {
            cols.push(RCol {
                name: t.clone(),
                class: RClass::Comparable,
                hidden: true,
            });
        }
        RSource {
            qualifier,
            ttid: def.ttid_column.clone(),
            cols,
        }
    }

    // -- expressions ----------------------------------------------------------

    fn rw_column(&self, c: &ColumnRef, scopes: &[RScope]) -> RResult<(Expr, RKind)> {
        let (depth, si, ci) = lookup(scopes, c, false)?.ok_or_else(|| RewriteError::UnknownColumn(c.to_string()))?;
        let src = &scopes[scopes.len() - 1 - depth].sources[si];
        let col = &src.cols[ci];
        let qualified = c.qualifier.is_some();
        let e = Expr::Column(c.clone());
        Ok(match &col.class {
            RClass::Comparable => (e, RKind::Plain),
            RClass::Specific => {
                let owner = source_ref(scopes, depth, si, src.ttid.as_deref().expect("specific table"), qualified);
                (e, RKind::Specific(owner))
            }
            RClass::Exported => {
                let owner = source_ref(scopes, depth, si, &export_name(&col.name), qualified);
                (e, RKind::Specific(owner))
            }
            RClass::Convertible(p) => {
                let owner = source_ref(scopes, depth, si, src.ttid.as_deref().expect("specific table"), qualified);
                (self.to_client(p, e, owner), RKind::Plain)
            }
        })
    }

    fn rw_expr(&self, e: &Expr, scopes: &[RScope], agg: bool) -> RResult<(Expr, RKind)> {
        let desc = || e.to_string();
        let b = Box::new;
        Ok(match e {
            Expr::Column(c) => self.rw_column(c, scopes)?,
            Expr::Literal(_) => (e.clone(), RKind::Const),
            Expr::Unary { op, expr } => {
                let (x, k) = self.rw_expr(expr, scopes, agg)?;
                let k = if *op == UnaryOp::Not { RKind::Plain } else { k };
                (Expr::Unary { op: *op, expr: b(x) }, k)
            }
            Expr::Binary { op, left, right } => {
                let (l, lk) = self.rw_expr(left, scopes, agg)?;
                let (r, rk) = self.rw_expr(right, scopes, agg)?;
                if op.is_arithmetic() {
                    let k = combine(lk, rk, &desc)?;
                    (Expr::binary(*op, l, r), k)
                } else if op.is_comparison() {
                    check_comparable(&lk, &rk, &desc)?;
                    let cmp = Expr::binary(*op, l, r);
                    match (lk, rk) {
                        (RKind::Specific(o1), RKind::Specific(o2)) if o1 != o2 => {
                            (Expr::and(cmp, Expr::eq(o1, o2)), RKind::Plain)
                        }
                        _ => (cmp, RKind::Plain),
                    }
                } else {
                    (Expr::binary(*op, l, r), RKind::Plain)
                }
            }
            Expr::IsNull { expr, negated } => {
                let (x, _) = self.rw_expr(expr, scopes, agg)?;
                (
                    Expr::IsNull {
                        expr: b(x),
                        negated: *negated,
                    },
                    RKind::Plain,
                )
            }
            Expr::InList { expr, list, negated } => {
                let (x, xk) = self.rw_expr(expr, scopes, agg)?;
                let mut items = Vec::new();
                let mut owners = Vec::new();
                for it in list {
                    let (i, ik) = self.rw_expr(it, scopes, agg)?;
                    check_comparable(&xk, &ik, &desc)?;
                    if let RKind::Specific(o) = ik {
                        owners.push(o);
                    }
                    items.push(i);
                }
                if !owners.is_empty() {
                    // tenant-specific list items: expand to a disjunction so
                    // each equality carries its owner check
                    let mut alts = Vec::new();
                    for it in list {
                        let probe = Expr::binary(BinaryOp::Eq, (**expr).clone(), it.clone());
                        alts.push(self.rw_expr(&probe, scopes, agg)?.0);
                    }
                    let any = alts.into_iter().reduce(|a, c| Expr::binary(BinaryOp::Or, a, c)).expect("non-empty");
                    let out = if *negated {
                        Expr::Unary {
                            op: UnaryOp::Not,
                            expr: b(any),
                        }
                    } else {
                        any
                    };
                    return Ok((out, RKind::Plain));
                }
                (
                    Expr::InList {
                        expr: b(x),
                        list: items,
                        negated: *negated,
                    },
                    RKind::Plain,
                )
            }
            Expr::InSubquery { expr, query, negated } => {
                let (x, xk) = self.rw_expr(expr, scopes, agg)?;
                let sub = self.rw_query(query, scopes, Role::Nested)?;
                if sub.cols.len() != 1 {
                    return Err(ExecError::SubqueryArity(sub.cols.len()).into());
                }
                check_comparable(&xk, &sub.cols[0].1, &desc)?;
                let q = match (&sub.cols[0].1, xk) {
                    (RKind::Specific(_), xk) => {
                        let owner = match xk {
                            RKind::Specific(o) => Some(o),
                            _ => None,
                        };
                        wrap_exported(sub.query, &sub.cols[0].0, owner, false)
                    }
                    _ => sub.query,
                };
                (
                    Expr::InSubquery {
                        expr: b(x),
                        query: Box::new(q),
                        negated: *negated,
                    },
                    RKind::Plain,
                )
            }
            Expr::Exists { query, negated } => {
                let sub = self.rw_query(query, scopes, Role::Exists)?;
                (
                    Expr::Exists {
                        query: Box::new(sub.query),
                        negated: *negated,
                    },
                    RKind::Plain,
                )
            }
            Expr::Subquery(query) => {
                let sub = self.rw_query(query, scopes, Role::Nested)?;
                if sub.cols.len() != 1 {
                    return Err(ExecError::SubqueryArity(sub.cols.len()).into());
                }
                match &sub.cols[0].1 {
                    RKind::Specific(_) => {
                        let name = sub.cols[0].0.clone();
                        let value = wrap_exported(sub.query.clone(), &name, None, false);
                        let owner = wrap_exported(sub.query, &name, None, true);
                        (Expr::Subquery(Box::new(value)), RKind::Specific(Expr::Subquery(Box::new(owner))))
                    }
                    k => {
                        let k = if *k == RKind::Const { RKind::Plain } else { k.clone() };
                        (Expr::Subquery(Box::new(sub.query)), k)
                    }
                }
            }
            Expr::Aggregate { func, arg, distinct } => {
                if !agg {
                    return Err(RewriteError::Unsupported(format!(
                        "aggregate {} outside SELECT/HAVING",
                        func.name()
                    )));
                }
                let arg = match arg {
                    Some(a) => {
                        let (x, k) = self.rw_expr(a, scopes, false)?;
                        if matches!(k, RKind::Specific(_)) && (*func != AggFunc::Count || *distinct) {
                            return Err(RewriteError::IncomparableAttributes(format!(
                                "{e} over a tenant-specific attribute"
                            )));
                        }
                        Some(b(x))
                    }
                    None => None,
                };
                (
                    Expr::Aggregate {
                        func: *func,
                        arg,
                        distinct: *distinct,
                    },
                    RKind::Plain,
                )
            }
            Expr::Function { name, args } => {
                let mut k = RKind::Const;
                let mut out = Vec::new();
                for a in args {
                    let (x, ak) = self.rw_expr(a, scopes, agg)?;
                    k = combine(k, ak, &desc)?;
                    out.push(x);
                }
                (
                    Expr::Function {
                        name: name.clone(),
                        args: out,
                    },
                    k,
                )
            }
            Expr::Convert { .. } => return Err(RewriteError::Unsupported("explicit conversion calls in MTSQL input".into())),
            Expr::Case {
                operand,
                branches,
                else_expr,
            } => {
                let op = match operand {
                    Some(o) => Some(self.rw_expr(o, scopes, agg)?),
                    None => None,
                };
                let mut k = RKind::Const;
                let mut bs = Vec::new();
                for (w, t) in branches {
                    let (w2, wk) = self.rw_expr(w, scopes, agg)?;
                    if let Some((_, ok)) = &op {
                        check_comparable(ok, &wk, &desc)?;
                        if matches!((ok, &wk), (RKind::Specific(_), RKind::Specific(_))) {
                            return Err(RewriteError::Unsupported(
                                "CASE operand and WHEN values both tenant-specific".into(),
                            ));
                        }
                    }
                    let (t2, tk) = self.rw_expr(t, scopes, agg)?;
                    k = combine(k, tk, &desc)?;
                    bs.push((w2, t2));
                }
                let else_expr = match else_expr {
                    Some(x) => {
                        let (x2, xk) = self.rw_expr(x, scopes, agg)?;
                        k = combine(k, xk, &desc)?;
                        Some(b(x2))
                    }
                    None => None,
                };
                (
                    Expr::Case {
                        operand: op.map(|(o, _)| b(o)),
                        branches: bs,
                        else_expr,
                    },
                    k,
                )
            }
        })
    }

    // -- queries ----------------------------------------------------------------

    fn rw_query(&self, q: &Query, outer: &[RScope], role: Role) -> RResult<RQuery> {
        // sources, in FROM order; sub-queries see only the outer scopes
        let mut flat = Vec::new();
        for f in &q.from {
            flatten_from(f, &mut flat);
        }
        let mut scope = RScope::default();
        let mut derived: Vec<Query> = Vec::new();
        let mut dfilters: Vec<(usize, &TableDef)> = Vec::new();
        for item in &flat {
            match item {
                FromItem::Table { name, alias } => {
                    if let Some(view) = self.catalog.view(name) {
                        scope.sources.push(RSource {
                            qualifier: alias.clone().unwrap_or_else(|| view.name.clone()),
                            ttid: None,
                            cols: view
                                .columns
                                .iter()
                                .map(|c| RCol {
                                    name: c.clone(),
                                    class: RClass::Comparable,
                                    hidden: false,
                                })
                                .collect(),
                        });
                        continue;
                    }
                    let def = self
                        .catalog
                        .table(name)
                        .ok_or_else(|| RewriteError::UnknownTable(name.clone()))?;
                    if def.is_tenant_specific() {
                        dfilters.push((scope.sources.len(), def));
                    }
                    scope
                        .sources
                        .push(self.table_source(def, alias.clone().unwrap_or_else(|| def.name.clone())));
                }
                FromItem::Derived { query, alias } => {
                    let sub = self.rw_query(query, outer, Role::Nested)?;
                    let mut cols = Vec::new();
                    for (n, k) in &sub.cols {
                        cols.push(RCol {
                            name: n.clone(),
                            class: if matches!(k, RKind::Specific(_)) {
                                RClass::Exported
                            } else {
                                RClass::Comparable
                            },
                            hidden: false,
                        });
                    }
                    for (n, k) in &sub.cols {
                        if matches!(k, RKind::Specific(_)) {
                            cols.push(RCol {
                                name: export_name(n),
                                class: RClass::Comparable,
                                hidden: true,
                            });
                        }
                    }
                    scope.sources.push(RSource {
                        qualifier: alias.clone(),
                        ttid: None,
                        cols,
                    });
                    derived.push(sub.query);
                }
                FromItem::Join { .. } => unreachable!("flattened"),
            }
        }
        let mut scopes = outer.to_vec();
        scopes.push(scope.clone());

        // FROM items with rewritten ON conditions
        let mut derived_iter = derived.into_iter();
        let mut from = Vec::new();
        for f in &q.from {
            from.push(self.rw_from_item(f, &scopes, &mut derived_iter)?);
        }

        // WHERE plus D-filters
        let mut conj = Vec::new();
        if let Some(w) = &q.where_clause {
            conj.push(self.rw_expr(w, &scopes, false)?.0);
        }
        for (si, def) in &dfilters {
            let ttid = def.ttid_column.as_deref().expect("specific");
            let has_alias = matches!(flat[*si], FromItem::Table { alias: Some(_), .. });
            let col = source_ref(&scopes, 0, *si, ttid, has_alias);
            conj.push(Expr::tenant_list(col, self.dataset.iter().copied()));
        }
        let where_clause = conjoin(conj);

        let aggregated = q.is_aggregated();
        let mut select = Vec::new();
        let mut cols: Vec<(String, RKind)> = Vec::new();
        let mut shifted = false;
        for (pos, item) in q.select.iter().enumerate() {
            match item {
                SelectItem::Wildcard | SelectItem::QualifiedWildcard(_) => {
                    let qual = match item {
                        SelectItem::QualifiedWildcard(q) => Some(q.as_str()),
                        _ => None,
                    };
                    let mut matched = false;
                    for s in &scope.sources {
                        if qual.is_some_and(|q| !s.qualifier.eq_ignore_ascii_case(q)) {
                            continue;
                        }
                        matched = true;
                        for c in s.cols.iter().filter(|c| !c.hidden) {
                            let cref = ColumnRef {
                                qualifier: Some(s.qualifier.clone()),
                                name: c.name.clone(),
                            };
                            let (x, k) = self.rw_column(&cref, &scopes)?;
                            let x = unqualify_if_unique(x, &scopes);
                            let alias = (!matches!(x, Expr::Column(_))).then(|| c.name.clone());
                            select.push(SelectItem::Expr { expr: x, alias });
                            cols.push((c.name.clone(), k));
                        }
                    }
                    if !matched {
                        return Err(RewriteError::UnknownTable(qual.unwrap_or("*").to_string()));
                    }
                    shifted = true;
                }
                SelectItem::Expr { expr, alias } => {
                    let (x, k) = self.rw_expr(expr, &scopes, aggregated)?;
                    let name = output_name(expr, alias.as_deref(), pos);
                    let alias = match alias {
                        Some(a) => Some(a.clone()),
                        None if matches!(expr, Expr::Column(_)) && !matches!(x, Expr::Column(_)) => Some(name.clone()),
                        None if shifted && !matches!(expr, Expr::Column(_)) => Some(name.clone()),
                        None => None,
                    };
                    let k = if k == RKind::Const { RKind::Plain } else { k };
                    select.push(SelectItem::Expr { expr: x, alias });
                    cols.push((name, k));
                }
            }
        }

        let mut group_by = Vec::new();
        let mut owner_keys = Vec::new();
        for g in &q.group_by {
            let (x, k) = self.rw_expr(g, &scopes, false)?;
            group_by.push(x);
            if let RKind::Specific(o) = k {
                owner_keys.push(o);
            }
        }
        for o in owner_keys {
            if !group_by.contains(&o) {
                group_by.push(o);
            }
        }
        let having = match &q.having {
            Some(h) => Some(self.rw_expr(h, &scopes, true)?.0),
            None => None,
        };

        let mut hidden = 0;
        let owners: Vec<(String, Expr)> = cols
            .iter()
            .filter_map(|(n, k)| match k {
                RKind::Specific(o) => Some((n.clone(), o.clone())),
                _ => None,
            })
            .collect();
        match role {
            Role::Nested => {
                for (n, o) in &owners {
                    select.push(SelectItem::Expr {
                        expr: o.clone(),
                        alias: Some(export_name(n)),
                    });
                }
            }
            Role::Top if q.distinct => {
                for (n, o) in &owners {
                    select.push(SelectItem::Expr {
                        expr: o.clone(),
                        alias: Some(export_name(n)),
                    });
                    hidden += 1;
                }
            }
            _ => {}
        }

        Ok(RQuery {
            query: Query {
                distinct: q.distinct,
                select,
                from,
                where_clause,
                group_by,
                having,
                order_by: q.order_by.clone(),
            },
            cols,
            hidden,
        })
    }

    fn rw_from_item(
        &self,
        f: &FromItem,
        scopes: &[RScope],
        derived: &mut impl Iterator<Item = Query>,
    ) -> RResult<FromItem> {
        Ok(match f {
            FromItem::Table { .. } => f.clone(),
            FromItem::Derived { alias, .. } => FromItem::Derived {
                query: Box::new(derived.next().expect("one rewritten query per derived table")),
                alias: alias.clone(),
            },
            FromItem::Join { left, right, on } => {
                let left = self.rw_from_item(left, scopes, derived)?;
                let right = self.rw_from_item(right, scopes, derived)?;
                let on = self.rw_expr(on, scopes, false)?.0;
                FromItem::Join {
                    left: Box::new(left),
                    right: Box::new(right),
                    on,
                }
            }
        })
    }

    /// Rewrite a query for the client.
    pub fn rewrite_query(&self, q: &Query) -> RResult<RewriteOutput> {
        let r = self.rw_query(q, &[], Role::Top)?;
        let mut out = RewriteOutput::single(Statement::Query(r.query));
        out.hidden_columns = r.hidden;
        if r.hidden > 0 {
            out.diagnostics
                .push(format!("{} trailing owner column(s) added for DISTINCT", r.hidden));
        }
        Ok(out)
    }

    /// Query listing the owners selected by a complex scope, evaluated over
    /// this context's dataset. When no tenant-specific table is involved the
    /// query counts qualifying rows instead.
    pub fn rewrite_scope(&self, from: &[FromItem], where_clause: Option<&Expr>) -> RResult<ScopeQuery> {
        let mut q = Query::new(vec![SelectItem::Wildcard], from.to_vec());
        q.where_clause = where_clause.cloned();
        let mut r = self.rw_query(&q, &[], Role::Exists)?.query;
        let mut flat = Vec::new();
        for f in from {
            flatten_from(f, &mut flat);
        }
        let owner = flat.iter().find_map(|f| match f {
            FromItem::Table { name, alias } => self
                .catalog
                .table(name)
                .and_then(|d| d.ttid_column.clone())
                .map(|t| Expr::qcol(Some(alias.as_deref().unwrap_or(name)), &t)),
            _ => None,
        });
        Ok(match owner {
            Some(o) => {
                r.select = vec![SelectItem::Expr { expr: o, alias: None }];
                r.distinct = true;
                ScopeQuery::Owners(r)
            }
            None => {
                r.select = vec![SelectItem::Expr {
                    expr: Expr::Aggregate {
                        func: AggFunc::Count,
                        arg: None,
                        distinct: false,
                    },
                    alias: None,
                }];
                ScopeQuery::Count(r)
            }
        })
    }

    // -- DDL ----------------------------------------------------------------

    fn check_privilege(&self, d: TenantId, table: &TableDef, right: Right) -> RResult<()> {
        if table.is_tenant_specific() && !self.catalog.has_privilege(self.client, d, &table.name, right) {
            return Err(RewriteError::MissingPrivilege {
                client: self.client,
                owner: d,
                table: table.name.clone(),
                right,
            });
        }
        Ok(())
    }

    fn plain_column(c: &ColumnDef) -> ColumnDef {
        ColumnDef {
            annotation: None,
            ..c.clone()
        }
    }

    fn ttid_column_def(name: &str) -> ColumnDef {
        ColumnDef {
            name: name.to_string(),
            data_type: DataType::new("INTEGER", vec![]),
            not_null: true,
            default: None,
            annotation: None,
        }
    }

    fn rw_global_constraint(&self, table_ttid: Option<&str>, c: &TableConstraint) -> TableConstraint {
        let kind = match (&c.kind, table_ttid) {
            (ConstraintKind::PrimaryKey(cols), Some(t)) => {
                let mut cols = cols.clone();
                cols.push(t.to_string());
                ConstraintKind::PrimaryKey(cols)
            }
            (
                ConstraintKind::ForeignKey {
                    columns,
                    ref_table,
                    ref_columns,
                },
                Some(t),
            ) => match self.catalog.table(ref_table).and_then(|r| r.ttid_column.clone()) {
                Some(rt) => {
                    let mut columns = columns.clone();
                    columns.push(t.to_string());
                    let mut ref_columns = ref_columns.clone();
                    ref_columns.push(rt);
                    ConstraintKind::ForeignKey {
                        columns,
                        ref_table: ref_table.clone(),
                        ref_columns,
                    }
                }
                None => c.kind.clone(),
            },
            _ => c.kind.clone(),
        };
        TableConstraint {
            name: c.name.clone(),
            kind,
        }
    }

    /// A constraint only tenant `owner` declared, as a CHECK over the shared table.
    fn tenant_constraint(&self, def: &TableDef, c: &TableConstraint, owner: TenantId) -> RResult<TableConstraint> {
        let ttid = def.ttid_column.as_deref().expect("specific");
        let own = |col: &str| Expr::eq(Expr::col(col), tenant_expr(owner));
        let name = c.name.as_ref().map(|n| format!("{n}_{owner}"));
        let check = match &c.kind {
            ConstraintKind::ForeignKey {
                columns,
                ref_table,
                ref_columns,
            } => {
                if columns.len() != 1 || ref_columns.len() != 1 {
                    return Err(RewriteError::Unsupported("tenant-specific composite foreign key".into()));
                }
                let rdef = self
                    .catalog
                    .table(ref_table)
                    .ok_or_else(|| RewriteError::UnknownTable(ref_table.clone()))?;
                let mut inner = Query::new(
                    vec![SelectItem::expr(Expr::col(&ref_columns[0]), None)],
                    vec![FromItem::table(&rdef.name, None)],
                );
                if let Some(rt) = &rdef.ttid_column {
                    inner.where_clause = Some(own(rt));
                }
                let mut count = Query::new(
                    vec![SelectItem::expr(
                        Expr::Aggregate {
                            func: AggFunc::Count,
                            arg: Some(Box::new(Expr::col(&columns[0]))),
                            distinct: false,
                        },
                        None,
                    )],
                    vec![FromItem::table(&def.name, None)],
                );
                count.where_clause = Some(Expr::and(
                    own(ttid),
                    Expr::InSubquery {
                        expr: Box::new(Expr::col(&columns[0])),
                        query: Box::new(inner),
                        negated: true,
                    },
                ));
                Expr::eq(Expr::Subquery(Box::new(count)), Expr::int(0))
            }
            ConstraintKind::Check(pred) => Expr::binary(
                BinaryOp::Or,
                Expr::binary(BinaryOp::NotEq, Expr::col(ttid), tenant_expr(owner)),
                pred.clone(),
            ),
            ConstraintKind::PrimaryKey(_) => {
                return Err(RewriteError::Unsupported("tenant-specific primary key".into()))
            }
        };
        Ok(TableConstraint {
            name,
            kind: ConstraintKind::Check(check),
        })
    }

    fn rewrite_ddl(&self, s: &Statement) -> RResult<RewriteOutput> {
        Ok(match s {
            Statement::CreateTable(ct) => {
                let ttid = if ct.generality == Some(Generality::Specific) {
                    let def = TableDef::from_ast(ct)?;
                    Some(crate::catalog::ttid_column_name(&def.name, &def.columns))
                } else {
                    None
                };
                let mut columns = Vec::new();
                if let Some(t) = &ttid {
                    columns.push(Self::ttid_column_def(t));
                }
                columns.extend(ct.columns.iter().map(Self::plain_column));
                let constraints = ct
                    .constraints
                    .iter()
                    .map(|c| self.rw_global_constraint(ttid.as_deref(), c))
                    .collect();
                RewriteOutput::single(Statement::CreateTable(CreateTable {
                    name: ct.name.clone(),
                    generality: None,
                    columns,
                    constraints,
                }))
            }
            Statement::AlterTable { name, action } => {
                let def = self
                    .catalog
                    .table(name)
                    .ok_or_else(|| RewriteError::UnknownTable(name.clone()))?;
                let action = match action {
                    AlterAction::AddColumn(c) => AlterAction::AddColumn(Self::plain_column(c)),
                    AlterAction::DropColumn(c) => AlterAction::DropColumn(c.clone()),
                    AlterAction::AddConstraint(c) if def.is_tenant_specific() => {
                        AlterAction::AddConstraint(self.tenant_constraint(def, c, self.client)?)
                    }
                    AlterAction::AddConstraint(c) => AlterAction::AddConstraint(c.clone()),
                };
                RewriteOutput::single(Statement::AlterTable {
                    name: name.clone(),
                    action,
                })
            }
            Statement::CreateView { name, query } => {
                let r = self.rw_query(query, &[], Role::Top)?;
                RewriteOutput::single(Statement::CreateView {
                    name: name.clone(),
                    query: Box::new(r.query),
                })
            }
            Statement::DropTable { .. } | Statement::DropView { .. } => RewriteOutput::single(s.clone()),
            _ => unreachable!("DDL only"),
        })
    }

    // -- DML ----------------------------------------------------------------

    fn rewrite_insert(&self, ins: &Insert, db: Option<&Database>) -> RResult<RewriteOutput> {
        let def = self
            .catalog
            .table(&ins.table)
            .ok_or_else(|| RewriteError::UnknownTable(ins.table.clone()))?;
        let targets: Vec<usize> = if ins.columns.is_empty() {
            (0..def.columns.len()).collect()
        } else {
            ins.columns
                .iter()
                .map(|c| def.column_index(c).ok_or_else(|| RewriteError::UnknownColumn(c.clone())))
                .collect::<RResult<_>>()?
        };
        for (i, c) in def.columns.iter().enumerate() {
            if c.not_null && c.default.is_none() && !targets.contains(&i) {
                return Err(RewriteError::NotNullWithoutValue {
                    table: def.name.clone(),
                    column: c.name.clone(),
                });
            }
        }
        let target_names: Vec<String> = targets.iter().map(|&i| def.columns[i].name.clone()).collect();
        let own = self.with_dataset([self.client].into_iter().collect());
        let mut diagnostics = Vec::new();
        if !def.is_tenant_specific() {
            let source = match &ins.source {
                InsertSource::Values(rows) => {
                    let mut out = Vec::new();
                    for r in rows {
                        out.push(r.iter().map(|e| own.rw_expr(e, &[], false).map(|x| x.0)).collect::<RResult<_>>()?);
                    }
                    InsertSource::Values(out)
                }
                InsertSource::Query(q) => {
                    let r = own.rw_query(q, &[], Role::Exists)?;
                    InsertSource::Query(Box::new(r.query))
                }
            };
            return Ok(RewriteOutput {
                sql: vec![Statement::Insert(Insert {
                    table: def.name.clone(),
                    columns: target_names,
                    source,
                })],
                hidden_columns: 0,
                diagnostics,
            });
        }

        // rows in the client's format
        let rows: Vec<Vec<Expr>> = match &ins.source {
            InsertSource::Values(rows) => {
                let mut out = Vec::new();
                for r in rows {
                    let mut row = Vec::new();
                    for e in r {
                        row.push(own.rw_expr(e, &[], false)?.0);
                    }
                    out.push(row);
                }
                out
            }
            InsertSource::Query(q) => {
                let db = db.ok_or_else(|| {
                    RewriteError::Unsupported("INSERT with a sub-query needs the database to evaluate it".into())
                })?;
                let r = own.rewrite_query(q)?;
                let mut rel = refdb::execute(db, self.catalog, r.query().expect("query output"))?;
                let visible = rel.columns.len() - r.hidden_columns;
                rel.truncate_columns(visible);
                diagnostics.push(format!("sub-query evaluated for tenant {}: {} row(s)", self.client, rel.len()));
                rel.rows.iter().map(|r| r.iter().map(lit).collect()).collect()
            }
        };
        for r in &rows {
            if r.len() != targets.len() {
                return Err(RewriteError::Unsupported(format!(
                    "INSERT supplies {} values for {} columns",
                    r.len(),
                    targets.len()
                )));
            }
        }
        let ttid = def.ttid_column.clone().expect("specific");
        let specific_targets = targets
            .iter()
            .any(|&i| def.columns[i].comparability == Comparability::TenantSpecific);
        let mut sql = Vec::new();
        for &d in &self.dataset {
            self.check_privilege(d, def, Right::Insert)?;
            if specific_targets && d != self.client {
                diagnostics.push(format!(
                    "warning: tenant-specific values inserted on behalf of tenant {d}"
                ));
            }
            let mut out_rows = Vec::new();
            for r in &rows {
                let mut row = vec![tenant_expr(d)];
                for (e, &i) in r.iter().zip(&targets) {
                    row.push(match &def.columns[i].comparability {
                        Comparability::Convertible(p) => self.client_to_tenant(p, e.clone(), d)?,
                        _ => e.clone(),
                    });
                }
                out_rows.push(row);
            }
            let mut columns = vec![ttid.clone()];
            columns.extend(target_names.iter().cloned());
            sql.push(Statement::Insert(Insert {
                table: def.name.clone(),
                columns,
                source: InsertSource::Values(out_rows),
            }));
        }
        Ok(RewriteOutput {
            sql,
            hidden_columns: 0,
            diagnostics,
        })
    }

    fn dml_scope(&self, def: &TableDef) -> Vec<RScope> {
        vec![RScope {
            sources: vec![self.table_source(def, def.name.clone())],
        }]
    }

    fn rewrite_update(&self, u: &Update) -> RResult<RewriteOutput> {
        let def = self
            .catalog
            .table(&u.table)
            .ok_or_else(|| RewriteError::UnknownTable(u.table.clone()))?;
        let scopes = self.dml_scope(def);
        let cond = match &u.where_clause {
            Some(w) => Some(self.rw_expr(w, &scopes, false)?.0),
            None => None,
        };
        let mut assigns = Vec::new();
        for (c, e) in &u.assignments {
            let meta = def.column(c).ok_or_else(|| RewriteError::UnknownColumn(c.clone()))?;
            let (x, k) = self.rw_expr(e, &scopes, false)?;
            let target = if def.is_tenant_specific() && meta.comparability == Comparability::TenantSpecific {
                RKind::Specific(Expr::int(-1))
            } else {
                RKind::Plain
            };
            check_comparable(&target, &k, &|| format!("{c} = {e}"))?;
            assigns.push((meta, x));
        }
        if !def.is_tenant_specific() {
            return Ok(RewriteOutput::single(Statement::Update(Update {
                table: def.name.clone(),
                assignments: assigns.into_iter().map(|(m, x)| (m.name.clone(), x)).collect(),
                where_clause: cond,
            })));
        }
        let ttid = def.ttid_column.as_deref().expect("specific");
        let mut sql = Vec::new();
        let mut diagnostics = Vec::new();
        for &d in &self.dataset {
            self.check_privilege(d, def, Right::Update)?;
            let mut assignments = Vec::new();
            for (meta, x) in &assigns {
                let v = match &meta.comparability {
                    Comparability::Convertible(p) => self.client_to_tenant(p, x.clone(), d)?,
                    Comparability::TenantSpecific => {
                        if d != self.client {
                            diagnostics.push(format!(
                                "warning: tenant-specific column {} updated on behalf of tenant {d}",
                                meta.name
                            ));
                        }
                        x.clone()
                    }
                    Comparability::Comparable => x.clone(),
                };
                assignments.push((meta.name.clone(), v));
            }
            let filter = Expr::eq(Expr::col(ttid), tenant_expr(d));
            sql.push(Statement::Update(Update {
                table: def.name.clone(),
                assignments,
                where_clause: Some(match &cond {
                    Some(c) => Expr::and(c.clone(), filter),
                    None => filter,
                }),
            }));
        }
        Ok(RewriteOutput {
            sql,
            hidden_columns: 0,
            diagnostics,
        })
    }

    fn rewrite_delete(&self, del: &Delete) -> RResult<RewriteOutput> {
        let def = self
            .catalog
            .table(&del.table)
            .ok_or_else(|| RewriteError::UnknownTable(del.table.clone()))?;
        let scopes = self.dml_scope(def);
        let cond = match &del.where_clause {
            Some(w) => Some(self.rw_expr(w, &scopes, false)?.0),
            None => None,
        };
        let Some(ttid) = def.ttid_column.as_deref() else {
            return Ok(RewriteOutput::single(Statement::Delete(Delete {
                table: def.name.clone(),
                where_clause: cond,
            })));
        };
        let mut sql = Vec::new();
        for &d in &self.dataset {
            self.check_privilege(d, def, Right::Delete)?;
            let filter = Expr::eq(Expr::col(ttid), tenant_expr(d));
            sql.push(Statement::Delete(Delete {
                table: def.name.clone(),
                where_clause: Some(match &cond {
                    Some(c) => Expr::and(c.clone(), filter),
                    None => filter,
                }),
            }));
        }
        Ok(RewriteOutput {
            sql,
            hidden_columns: 0,
            diagnostics: Vec::new(),
        })
    }

    /// Rewrite any statement. `db` is needed only for `INSERT ... SELECT`
    /// into tenant-specific tables, whose sub-query is evaluated first.
    /// GRANT, REVOKE and SET SCOPE produce no SQL.
    pub fn rewrite_statement(&self, s: &Statement, db: Option<&Database>) -> RResult<RewriteOutput> {
        match s {
            Statement::Query(q) => self.rewrite_query(q),
            Statement::CreateTable(_)
            | Statement::AlterTable { .. }
            | Statement::CreateView { .. }
            | Statement::DropTable { .. }
            | Statement::DropView { .. } => self.rewrite_ddl(s),
            Statement::Insert(i) => self.rewrite_insert(i, db),
            Statement::Update(u) => self.rewrite_update(u),
            Statement::Delete(d) => self.rewrite_delete(d),
            Statement::Grant(_) | Statement::Revoke(_) | Statement::SetScope(_) => Ok(RewriteOutput {
                sql: Vec::new(),
                hidden_columns: 0,
                diagnostics: vec!["handled by the catalog/session; no SQL emitted".into()],
            }),
        }
    }
}

/// Owner-listing or row-counting query for a complex scope.
#[derive(Debug, Clone, PartialEq)]
pub enum ScopeQuery {
    Owners(Query),
    Count(Query),
}

fn unqualify_if_unique(x: Expr, scopes: &[RScope]) -> Expr {
    // star expansion: prefer bare names where they resolve to the same column
    let unq = |e: Expr| -> Expr {
        if let Expr::Column(c) = &e {
            if c.qualifier.is_some() {
                let bare = ColumnRef {
                    qualifier: None,
                    name: c.name.clone(),
                };
                if let (Ok(Some(a)), Ok(Some(b))) = (lookup(scopes, c, true), lookup(scopes, &bare, true)) {
                    if a == b {
                        return Expr::Column(bare);
                    }
                }
            }
        }
        e
    };
    fn map(e: Expr, f: &dyn Fn(Expr) -> Expr) -> Expr {
        let e = f(e);
        e.map_children(&mut |c| map(c, f))
    }
    map(x, &unq)
}

/// `SELECT s.<name> FROM (q) AS mt_sub [WHERE mt_sub.<name>_ttid = owner]`,
/// or the export column itself when `owner_column`.
fn wrap_exported(q: Query, name: &str, owner: Option<Expr>, owner_column: bool) -> Query {
    const ALIAS: &str = "mt_sub";
    let col = if owner_column { export_name(name) } else { name.to_string() };
    let mut w = Query::new(
        vec![SelectItem::expr(Expr::qcol(Some(ALIAS), &col), None)],
        vec![FromItem::Derived {
            query: Box::new(q),
            alias: ALIAS.to_string(),
        }],
    );
    if let Some(o) = owner {
        w.where_clause = Some(Expr::eq(Expr::qcol(Some(ALIAS), &export_name(name)), o));
    }
    w
}

/// Structural check that a statement uses no MTSQL-only construct.
pub fn check_mt_free(s: &Statement) -> Result<(), String> {
    let mut problems = Vec::new();
    match s {
        Statement::CreateTable(ct) => {
            if ct.generality.is_some() {
                problems.push(format!("table {} keeps a GLOBAL/SPECIFIC keyword", ct.name));
            }
            for c in &ct.columns {
                if c.annotation.is_some() {
                    problems.push(format!("column {} keeps a comparability annotation", c.name));
                }
            }
        }
        Statement::AlterTable {
            action: AlterAction::AddColumn(c),
            ..
        } if c.annotation.is_some() => problems.push(format!("column {} keeps a comparability annotation", c.name)),
        Statement::SetScope(_) => problems.push("SET SCOPE".into()),
        Statement::Grant(_) | Statement::Revoke(_) => problems.push("GRANT/REVOKE".into()),
        _ => {}
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::example;
    use crate::parser::{parse, parse_query};

    fn set(ts: &[u32]) -> BTreeSet<TenantId> {
        ts.iter().map(|&t| TenantId(t)).collect()
    }

    fn rewrite(c: &Catalog, client: u32, d: &[u32], sql: &str) -> String {
        let ctx = RewriteContext::new(c, TenantId(client), set(d));
        ctx.rewrite_query(&parse_query(sql).unwrap()).unwrap().sql[0].to_string()
    }

    #[test]
    fn simple_select() {
        let (c, _) = example();
        assert_eq!(
            rewrite(&c, 0, &[0, 1], "SELECT E_salary FROM Employees"),
            "SELECT currencyFromUniversal(currencyToUniversal(E_salary, E_ttid), 0) AS E_salary FROM Employees WHERE E_ttid IN (0,1)"
        );
    }

    #[test]
    fn join_gets_ttid_equality_and_filters() {
        let (c, _) = example();
        let s = rewrite(&c, 0, &[3, 7], "SELECT E_name FROM Employees E, Roles R WHERE E.E_role_id = R.R_role_id");
        assert!(s.contains("E.E_role_id = R.R_role_id AND E.E_ttid = R.R_ttid"), "{s}");
        assert!(s.contains("E.E_ttid IN (3,7) AND R.R_ttid IN (3,7)"), "{s}");
        let err = RewriteContext::new(&c, TenantId(0), set(&[0]))
            .rewrite_query(&parse_query("SELECT E_name FROM Employees WHERE E_role_id = E_age").unwrap())
            .unwrap_err();
        assert!(matches!(err, RewriteError::IncomparableAttributes(_)));
    }

    #[test]
    fn star_hides_ttid() {
        let (c, _) = example();
        let s = rewrite(&c, 0, &[0], "SELECT * FROM Employees");
        assert!(s.starts_with("SELECT E_emp_id, E_name, E_role_id, E_reg_id, currencyFromUniversal"), "{s}");
        assert!(!s.contains("E_ttid,"), "{s}");
    }

    #[test]
    fn dml_expansion() {
        let (mut c, db) = example();
        c.grant_all_to_all();
        let ctx = RewriteContext::new(&c, TenantId(0), set(&[0, 1]));
        let out = ctx.rewrite_statement(&parse("DELETE FROM Employees WHERE E_age > 40").unwrap(), None).unwrap();
        assert_eq!(out.sql.len(), 2);
        assert!(out.sql[1].to_string().ends_with("E_ttid = 1"), "{}", out.sql[1]);

        let ins = parse(
            "INSERT INTO Employees VALUES E_name, E_reg_id, E_salary, E_age (SELECT E_name, E_reg_id, E_salary, E_age FROM Employees WHERE E_age > 40)",
        )
        .unwrap();
        let ctx = RewriteContext::new(&c, TenantId(0), set(&[1]));
        assert!(matches!(
            ctx.rewrite_statement(&ins, Some(&db)),
            Err(RewriteError::NotNullWithoutValue { .. })
        ));
        for t in c.tables.iter_mut() {
            for col in t.columns.iter_mut() {
                if col.name == "E_emp_id" || col.name == "E_role_id" {
                    col.default = Some(Value::Int(0));
                }
            }
        }
        let ctx = RewriteContext::new(&c, TenantId(0), set(&[1]));
        let out = ctx.rewrite_statement(&ins, Some(&db)).unwrap();
        assert_eq!(
            out.sql[0].to_string(),
            "INSERT INTO Employees (E_ttid, E_name, E_reg_id, E_salary, E_age) VALUES (1, 'Alice', 3, 135000.0, 46)"
        );
    }

    #[test]
    fn tenant_foreign_key_becomes_check() {
        let (c, _) = example();
        let ctx = RewriteContext::new(&c, TenantId(0), set(&[0]));
        let s = parse("ALTER TABLE Employees ADD CONSTRAINT fk_emp FOREIGN KEY (E_role_id) REFERENCES Roles (R_role_id)").unwrap();
        let out = ctx.rewrite_statement(&s, None).unwrap().sql[0].to_string();
        assert!(out.contains("CONSTRAINT fk_emp_0 CHECK"), "{out}");
        assert!(out.contains("NOT IN (SELECT R_role_id FROM Roles WHERE R_ttid = 0)"), "{out}");

        let ct = crate::fixtures::EXAMPLE_DDL.split(';').nth(2).unwrap();
        let mut c2 = Catalog::new();
        crate::fixtures::apply_ddl(&mut c2, "CREATE TABLE Roles SPECIFIC (R_role_id INTEGER NOT NULL SPECIFIC)").unwrap();
        c2.register_pair(crate::conversion::ConversionPair::linear("currency")).unwrap();
        let ctx = RewriteContext::new(&c2, TenantId(0), set(&[0]));
        let out = ctx.rewrite_statement(&parse(ct).unwrap(), None).unwrap().sql[0].to_string();
        assert!(out.contains("FOREIGN KEY (E_role_id, E_ttid) REFERENCES Roles (R_role_id, R_ttid)"), "{out}");
        check_mt_free(&parse(&out).unwrap()).unwrap();
    }
}
