//! Direct MTSQL interpreter over the private-table layout.
//!
//! Independent of the rewriter: tenant-specific tables are unions of the
//! private instances of the tenants in D', convertible values are turned
//! into the client's format while scanning, and tenant-specific values carry
//! their owner so that comparisons across owners fail. Evaluation is naive
//! (full cross products, no caching).

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::ast::*;
use crate::catalog::{Catalog, Comparability, TableDef};
use crate::conversion::ConversionError;
use crate::tenant::TenantId;
use crate::value::{GroupKey, Value, ValueError};

use super::exec::{statement_kind, ExecError};
use super::relation::{Column, Relation};
use super::{Database, Layout};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DirectError {
    #[error("incomparable attributes: {0}")]
    IncomparableAttributes(String),
    #[error("unknown table '{0}'")]
    UnknownTable(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("ambiguous column '{0}'")]
    AmbiguousColumn(String),
    #[error("column '{0}' is NOT NULL and has no value or default")]
    NotNullWithoutValue(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Execution(#[from] ExecError),
    #[error(transparent)]
    Conversion(#[from] ConversionError),
}

impl From<ValueError> for DirectError {
    fn from(e: ValueError) -> Self {
        DirectError::Execution(ExecError::Type(e))
    }
}

type DResult<T> = Result<T, DirectError>;

/// Value tagged with the owner of a tenant-specific attribute.
#[derive(Debug, Clone)]
struct DVal {
    v: Value,
    owner: Option<TenantId>,
}

impl DVal {
    fn plain(v: Value) -> DVal {
        DVal { v, owner: None }
    }

    fn key(&self) -> (GroupKey, Option<TenantId>) {
        (self.v.group_key(), self.owner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Const,
    Plain,
    Specific,
}

#[derive(Debug, Clone)]
struct DCol {
    name: String,
    kind: Kind,
    /// Owner marker appended to every tenant-specific base table scan.
    hidden: bool,
}

#[derive(Debug, Clone)]
struct SrcMeta {
    qualifier: String,
    cols: Vec<DCol>,
    offset: usize,
    /// Index of the owner marker column, for tenant-specific base tables.
    owner_col: Option<usize>,
}

#[derive(Debug, Clone, Default)]
struct Scope {
    sources: Vec<SrcMeta>,
}

impl Scope {
    fn lookup(&self, c: &ColumnRef) -> DResult<Option<(usize, Kind)>> {
        let mut found = None;
        for s in &self.sources {
            if c.qualifier.as_ref().is_some_and(|q| !s.qualifier.eq_ignore_ascii_case(q)) {
                continue;
            }
            for (i, col) in s.cols.iter().enumerate() {
                if !col.hidden && col.name.eq_ignore_ascii_case(&c.name) {
                    if found.is_some() {
                        return Err(DirectError::AmbiguousColumn(c.to_string()));
                    }
                    found = Some((s.offset + i, col.kind));
                }
            }
        }
        Ok(found)
    }

    fn width(&self) -> usize {
        self.sources.last().map(|s| s.offset + s.cols.len()).unwrap_or(0)
    }
}

struct Frame<'f> {
    scope: &'f Scope,
    row: &'f [DVal],
    group: Option<&'f Group>,
    parent: Option<&'f Frame<'f>>,
}

struct Group {
    keys: Vec<(Expr, DVal)>,
    rows: Vec<Vec<DVal>>,
}

pub struct Interpreter<'a> {
    db: &'a Database,
    catalog: &'a Catalog,
    client: TenantId,
    dataset: BTreeSet<TenantId>,
}

fn combine(a: Kind, b: Kind, what: &dyn Fn() -> String) -> DResult<Kind> {
    Ok(match (a, b) {
        (Kind::Const, k) | (k, Kind::Const) => k,
        (Kind::Plain, Kind::Plain) => Kind::Plain,
        _ => return Err(DirectError::IncomparableAttributes(what())),
    })
}

fn comparable(a: Kind, b: Kind, what: &dyn Fn() -> String) -> DResult<()> {
    match (a, b) {
        (Kind::Specific, Kind::Plain) | (Kind::Plain, Kind::Specific) => {
            Err(DirectError::IncomparableAttributes(what()))
        }
        _ => Ok(()),
    }
}

fn truth(v: &Value) -> Option<bool> {
    match v {
        Value::Null => None,
        Value::Int(i) => Some(*i != 0),
        Value::Dec(d) => Some(*d != 0.0),
        Value::Text(_) => Some(true),
    }
}

fn boolean(b: Option<bool>) -> DVal {
    DVal::plain(match b {
        None => Value::Null,
        Some(b) => Value::Int(b as i64),
    })
}

fn flatten<'q>(f: &'q FromItem, out: &mut Vec<&'q FromItem>, ons: &mut Vec<&'q Expr>) {
    match f {
        FromItem::Join { left, right, on } => {
            flatten(left, out, ons);
            flatten(right, out, ons);
            ons.push(on);
        }
        other => out.push(other),
    }
}

impl<'a> Interpreter<'a> {
    pub fn new(db: &'a Database, catalog: &'a Catalog, client: TenantId, dataset: &BTreeSet<TenantId>) -> DResult<Self> {
        if db.layout != Layout::PrivateTables {
            return Err(ExecError::Layout("direct evaluation needs the private-table layout".into()).into());
        }
        Ok(Interpreter {
            db,
            catalog,
            client,
            dataset: dataset.clone(),
        })
    }

    fn table_def(&self, name: &str) -> DResult<&'a TableDef> {
        if self.catalog.view(name).is_some() {
            return Err(DirectError::Unsupported(format!("view {name}")));
        }
        self.catalog.table(name).ok_or_else(|| DirectError::UnknownTable(name.to_string()))
    }

    fn column_kind(def: &TableDef, c: &crate::catalog::ColumnMeta) -> Kind {
        if def.is_tenant_specific() && c.comparability == Comparability::TenantSpecific {
            Kind::Specific
        } else {
            Kind::Plain
        }
    }

    /// Columns of a base table as seen by the client, plus the owner marker.
    fn base_cols(def: &TableDef) -> Vec<DCol> {
        let mut cols: Vec<DCol> = def
            .columns
            .iter()
            .map(|c| DCol {
                name: c.name.clone(),
                kind: Self::column_kind(def, c),
                hidden: false,
            })
            .collect();
        if def.is_tenant_specific() {
            cols.push(DCol {
                name: String::new(),
                kind: Kind::Plain,
                hidden: true,
            });
        }
        cols
    }

    fn scan(&self, def: &TableDef, dataset: &BTreeSet<TenantId>) -> DResult<Vec<Vec<DVal>>> {
        let mut out = Vec::new();
        if !def.is_tenant_specific() {
            let rel = self.db.table(&def.name);
            for r in rel.map(|r| r.rows.as_slice()).unwrap_or(&[]) {
                out.push(r.iter().cloned().map(DVal::plain).collect());
            }
            return Ok(out);
        }
        for &d in dataset {
            let Some(rel) = self.db.private_table(&def.name, d) else { continue };
            for r in &rel.rows {
                let mut row = Vec::with_capacity(r.len() + 1);
                for (v, c) in r.iter().zip(&def.columns) {
                    row.push(match &c.comparability {
                        Comparability::TenantSpecific => DVal { v: v.clone(), owner: Some(d) },
                        Comparability::Convertible(p) => {
                            let pair = self.catalog.require_pair(p).map_err(|e| DirectError::Unsupported(e.to_string()))?;
                            let u = pair.to_universal(d, v)?;
                            DVal::plain(pair.from_universal(self.client, &u)?)
                        }
                        Comparability::Comparable => DVal::plain(v.clone()),
                    });
                }
                row.push(DVal { v: Value::Null, owner: Some(d) });
                out.push(row);
            }
        }
        Ok(out)
    }

    // -- static checks ------------------------------------------------------

    fn kind(&self, e: &Expr, scopes: &[Scope], in_agg: bool) -> DResult<Kind> {
        let desc = || e.to_string();
        Ok(match e {
            Expr::Column(c) => {
                for s in scopes.iter().rev() {
                    if let Some((_, k)) = s.lookup(c)? {
                        return Ok(k);
                    }
                }
                return Err(DirectError::UnknownColumn(c.to_string()));
            }
            Expr::Literal(_) => Kind::Const,
            Expr::Unary { op: UnaryOp::Neg, expr } => self.kind(expr, scopes, in_agg)?,
            Expr::Unary { op: UnaryOp::Not, expr } => {
                self.kind(expr, scopes, in_agg)?;
                Kind::Plain
            }
            Expr::Binary { op, left, right } => {
                let l = self.kind(left, scopes, in_agg)?;
                let r = self.kind(right, scopes, in_agg)?;
                if op.is_arithmetic() {
                    combine(l, r, &desc)?
                } else if op.is_comparison() {
                    comparable(l, r, &desc)?;
                    Kind::Plain
                } else {
                    Kind::Plain
                }
            }
            Expr::IsNull { expr, .. } => {
                self.kind(expr, scopes, in_agg)?;
                Kind::Plain
            }
            Expr::InList { expr, list, .. } => {
                let x = self.kind(expr, scopes, in_agg)?;
                for it in list {
                    comparable(x, self.kind(it, scopes, in_agg)?, &desc)?;
                }
                Kind::Plain
            }
            Expr::InSubquery { expr, query, .. } => {
                let x = self.kind(expr, scopes, in_agg)?;
                let cols = self.check_query(query, scopes)?;
                if cols.len() != 1 {
                    return Err(ExecError::SubqueryArity(cols.len()).into());
                }
                comparable(x, cols[0].kind, &desc)?;
                Kind::Plain
            }
            Expr::Exists { query, .. } => {
                self.check_query(query, scopes)?;
                Kind::Plain
            }
            Expr::Subquery(query) => {
                let cols = self.check_query(query, scopes)?;
                if cols.len() != 1 {
                    return Err(ExecError::SubqueryArity(cols.len()).into());
                }
                cols[0].kind
            }
            Expr::Aggregate { func, arg, distinct } => {
                if !in_agg {
                    return Err(DirectError::Unsupported(format!("aggregate {} outside SELECT/HAVING", func.name())));
                }
                if let Some(a) = arg {
                    let k = self.kind(a, scopes, false)?;
                    if k == Kind::Specific && (*func != AggFunc::Count || *distinct) {
                        return Err(DirectError::IncomparableAttributes(format!(
                            "{} over a tenant-specific attribute",
                            e
                        )));
                    }
                }
                Kind::Plain
            }
            Expr::Function { args, .. } => {
                let mut k = Kind::Const;
                for a in args {
                    k = combine(k, self.kind(a, scopes, in_agg)?, &desc)?;
                }
                k
            }
            Expr::Convert { .. } => {
                return Err(DirectError::Unsupported("explicit conversion calls".into()));
            }
            Expr::Case {
                operand,
                branches,
                else_expr,
            } => {
                let op = match operand {
                    Some(o) => Some(self.kind(o, scopes, in_agg)?),
                    None => None,
                };
                let mut k = Kind::Const;
                for (w, t) in branches {
                    let wk = self.kind(w, scopes, in_agg)?;
                    if let Some(o) = op {
                        comparable(o, wk, &desc)?;
                    }
                    k = combine(k, self.kind(t, scopes, in_agg)?, &desc)?;
                }
                if let Some(x) = else_expr {
                    k = combine(k, self.kind(x, scopes, in_agg)?, &desc)?;
                }
                k
            }
        })
    }

    fn from_scope(&self, q: &Query, outer: &[Scope]) -> DResult<Scope> {
        let mut items = Vec::new();
        let mut ons = Vec::new();
        for f in &q.from {
            flatten(f, &mut items, &mut ons);
        }
        let mut scope = Scope::default();
        for item in items {
            let offset = scope.width();
            let (qualifier, cols, owner_col) = match item {
                FromItem::Table { name, alias } => {
                    let def = self.table_def(name)?;
                    let cols = Self::base_cols(def);
                    let owner = def.is_tenant_specific().then(|| offset + cols.len() - 1);
                    (alias.clone().unwrap_or_else(|| def.name.clone()), cols, owner)
                }
                FromItem::Derived { query, alias } => (alias.clone(), self.check_query(query, outer)?, None),
                FromItem::Join { .. } => unreachable!("flattened"),
            };
            scope.sources.push(SrcMeta {
                qualifier,
                cols,
                offset,
                owner_col,
            });
        }
        Ok(scope)
    }

    /// Validate a query and return its output columns.
    fn check_query(&self, q: &Query, outer: &[Scope]) -> DResult<Vec<DCol>> {
        let scope = self.from_scope(q, outer)?;
        let mut scopes = outer.to_vec();
        scopes.push(scope.clone());
        let mut items = Vec::new();
        let mut ons = Vec::new();
        for f in &q.from {
            flatten(f, &mut items, &mut ons);
        }
        for on in ons {
            self.kind(on, &scopes, false)?;
        }
        if let Some(w) = &q.where_clause {
            self.kind(w, &scopes, false)?;
        }
        let agg = q.is_aggregated();
        for g in &q.group_by {
            self.kind(g, &scopes, false)?;
        }
        if let Some(h) = &q.having {
            self.kind(h, &scopes, true)?;
        }
        let mut out = Vec::new();
        for (i, item) in q.select.iter().enumerate() {
            match item {
                SelectItem::Wildcard => {
                    for s in &scope.sources {
                        out.extend(s.cols.iter().filter(|c| !c.hidden).cloned());
                    }
                }
                SelectItem::QualifiedWildcard(qual) => {
                    let s = scope
                        .sources
                        .iter()
                        .find(|s| s.qualifier.eq_ignore_ascii_case(qual))
                        .ok_or_else(|| DirectError::UnknownTable(qual.clone()))?;
                    out.extend(s.cols.iter().filter(|c| !c.hidden).cloned());
                }
                SelectItem::Expr { expr, alias } => {
                    let k = self.kind(expr, &scopes, agg)?;
                    out.push(DCol {
                        name: output_name(expr, alias.as_deref(), i),
                        kind: if k == Kind::Const { Kind::Plain } else { k },
                        hidden: false,
                    });
                }
            }
        }
        for o in &q.order_by {
            let is_output = matches!(&o.expr, Expr::Column(ColumnRef { qualifier: None, name })
                if out.iter().any(|c| c.name.eq_ignore_ascii_case(name)));
            if !is_output {
                self.kind(&o.expr, &scopes, agg)?;
            }
        }
        Ok(out)
    }

    // -- evaluation ---------------------------------------------------------

    fn lookup_val(&self, c: &ColumnRef, frame: &Frame<'_>) -> DResult<DVal> {
        let mut f = Some(frame);
        while let Some(fr) = f {
            if let Some((idx, _)) = fr.scope.lookup(c)? {
                return Ok(fr.row[idx].clone());
            }
            f = fr.parent;
        }
        Err(DirectError::UnknownColumn(c.to_string()))
    }

    fn compare(&self, op: BinaryOp, l: &DVal, r: &DVal) -> DResult<DVal> {
        use std::cmp::Ordering::*;
        if let (Some(a), Some(b)) = (l.owner, r.owner) {
            if a != b {
                return Ok(boolean(Some(false)));
            }
        }
        let o = l.v.sql_cmp(&r.v)?;
        Ok(boolean(o.map(|o| match op {
            BinaryOp::Eq => o == Equal,
            BinaryOp::NotEq => o != Equal,
            BinaryOp::Lt => o == Less,
            BinaryOp::LtEq => o != Greater,
            BinaryOp::Gt => o == Greater,
            BinaryOp::GtEq => o != Less,
            _ => unreachable!(),
        })))
    }

    fn in_values<'v>(&self, x: &DVal, items: impl Iterator<Item = &'v DVal>, negated: bool) -> DResult<DVal> {
        if x.v.is_null() {
            return Ok(boolean(None));
        }
        let mut saw_null = false;
        for it in items {
            match truth(&self.compare(BinaryOp::Eq, x, it)?.v) {
                Some(true) => return Ok(boolean(Some(!negated))),
                None => saw_null = true,
                Some(false) => {}
            }
        }
        Ok(if saw_null { boolean(None) } else { boolean(Some(negated)) })
    }

    fn eval(&self, e: &Expr, frame: &Frame<'_>) -> DResult<DVal> {
        if let Some(g) = frame.group {
            if let Some((_, v)) = g.keys.iter().find(|(k, _)| k == e) {
                return Ok(v.clone());
            }
        }
        Ok(match e {
            Expr::Column(c) => self.lookup_val(c, frame)?,
            Expr::Literal(l) => DVal::plain(l.to_value()),
            Expr::Unary { op: UnaryOp::Neg, expr } => {
                let x = self.eval(expr, frame)?;
                DVal {
                    v: x.v.neg()?,
                    owner: x.owner,
                }
            }
            Expr::Unary { op: UnaryOp::Not, expr } => boolean(truth(&self.eval(expr, frame)?.v).map(|b| !b)),
            Expr::Binary { op: BinaryOp::And, left, right } => {
                let l = truth(&self.eval(left, frame)?.v);
                let r = truth(&self.eval(right, frame)?.v);
                boolean(match (l, r) {
                    (Some(false), _) | (_, Some(false)) => Some(false),
                    (Some(true), Some(true)) => Some(true),
                    _ => None,
                })
            }
            Expr::Binary { op: BinaryOp::Or, left, right } => {
                let l = truth(&self.eval(left, frame)?.v);
                let r = truth(&self.eval(right, frame)?.v);
                boolean(match (l, r) {
                    (Some(true), _) | (_, Some(true)) => Some(true),
                    (Some(false), Some(false)) => Some(false),
                    _ => None,
                })
            }
            Expr::Binary { op, left, right } => {
                let l = self.eval(left, frame)?;
                let r = self.eval(right, frame)?;
                if op.is_comparison() {
                    self.compare(*op, &l, &r)?
                } else {
                    let v = match op {
                        BinaryOp::Plus => l.v.add(&r.v)?,
                        BinaryOp::Minus => l.v.sub(&r.v)?,
                        BinaryOp::Multiply => l.v.mul(&r.v)?,
                        BinaryOp::Divide => l.v.div(&r.v)?,
                        _ => unreachable!(),
                    };
                    DVal {
                        v,
                        owner: l.owner.or(r.owner),
                    }
                }
            }
            Expr::IsNull { expr, negated } => boolean(Some(self.eval(expr, frame)?.v.is_null() != *negated)),
            Expr::InList { expr, list, negated } => {
                let x = self.eval(expr, frame)?;
                let items = list.iter().map(|i| self.eval(i, frame)).collect::<DResult<Vec<_>>>()?;
                self.in_values(&x, items.iter(), *negated)?
            }
            Expr::InSubquery { expr, query, negated } => {
                let x = self.eval(expr, frame)?;
                let (_, rows) = self.eval_query(query, Some(frame))?;
                self.in_values(&x, rows.iter().map(|r| &r[0]), *negated)?
            }
            Expr::Exists { query, negated } => {
                let (_, rows) = self.eval_query(query, Some(frame))?;
                boolean(Some(rows.is_empty() == *negated))
            }
            Expr::Subquery(query) => {
                let (_, rows) = self.eval_query(query, Some(frame))?;
                match rows.len() {
                    0 => DVal::plain(Value::Null),
                    1 => rows[0][0].clone(),
                    n => return Err(ExecError::Cardinality(n).into()),
                }
            }
            Expr::Aggregate { func, arg, distinct } => {
                let g = frame
                    .group
                    .ok_or_else(|| DirectError::Unsupported("aggregate outside a group".into()))?;
                self.aggregate(*func, arg.as_deref(), *distinct, g, frame)?
            }
            Expr::Function { name, args } => {
                let vals = args.iter().map(|a| self.eval(a, frame)).collect::<DResult<Vec<_>>>()?;
                let owner = vals.iter().find_map(|v| v.owner);
                let v = scalar_function(name, &vals.into_iter().map(|d| d.v).collect::<Vec<_>>())?;
                DVal { v, owner }
            }
            Expr::Convert { .. } => return Err(DirectError::Unsupported("explicit conversion calls".into())),
            Expr::Case {
                operand,
                branches,
                else_expr,
            } => {
                let op = operand.as_ref().map(|o| self.eval(o, frame)).transpose()?;
                for (w, t) in branches {
                    let wv = self.eval(w, frame)?;
                    let hit = match &op {
                        Some(o) => truth(&self.compare(BinaryOp::Eq, o, &wv)?.v) == Some(true),
                        None => truth(&wv.v) == Some(true),
                    };
                    if hit {
                        return self.eval(t, frame);
                    }
                }
                match else_expr {
                    Some(x) => self.eval(x, frame)?,
                    None => DVal::plain(Value::Null),
                }
            }
        })
    }

    fn aggregate(&self, func: AggFunc, arg: Option<&Expr>, distinct: bool, g: &Group, frame: &Frame<'_>) -> DResult<DVal> {
        let mut vals = Vec::new();
        let mut seen = HashSet::new();
        for r in &g.rows {
            let Some(a) = arg else {
                vals.push(Value::Int(1));
                continue;
            };
            let f = Frame {
                scope: frame.scope,
                row: r,
                group: None,
                parent: frame.parent,
            };
            let v = self.eval(a, &f)?;
            if v.v.is_null() || (distinct && !seen.insert(v.key())) {
                continue;
            }
            vals.push(v.v);
        }
        let v = match func {
            AggFunc::Count => Value::Int(vals.len() as i64),
            _ if vals.is_empty() => Value::Null,
            AggFunc::Sum => {
                if vals.iter().all(|v| matches!(v, Value::Int(_))) {
                    let mut s: i64 = 0;
                    for v in &vals {
                        s = s.checked_add(v.as_i64().unwrap()).ok_or(ValueError::Overflow("sum"))?;
                    }
                    Value::Int(s)
                } else {
                    Value::Dec(precise_sum(&vals)?)
                }
            }
            AggFunc::Avg => Value::Dec(precise_sum(&vals)? / vals.len() as f64),
            AggFunc::Min | AggFunc::Max => {
                let mut best = vals[0].clone();
                for v in &vals[1..] {
                    let o = v.sql_cmp(&best)?;
                    let better = match func {
                        AggFunc::Min => o == Some(std::cmp::Ordering::Less),
                        _ => o == Some(std::cmp::Ordering::Greater),
                    };
                    if better {
                        best = v.clone();
                    }
                }
                best
            }
        };
        Ok(DVal::plain(v))
    }

    /// Sources of a FROM clause, materialized.
    fn sources(&self, q: &Query, outer: Option<&Frame<'_>>, dataset: &BTreeSet<TenantId>) -> DResult<(Scope, Vec<Vec<Vec<DVal>>>)> {
        let outer_scopes = frame_scopes(outer);
        let scope = self.from_scope(q, &outer_scopes)?;
        let mut items = Vec::new();
        let mut ons = Vec::new();
        for f in &q.from {
            flatten(f, &mut items, &mut ons);
        }
        let mut data = Vec::new();
        for item in items {
            data.push(match item {
                FromItem::Table { name, .. } => self.scan(self.table_def(name)?, dataset)?,
                FromItem::Derived { query, .. } => self.eval_query(query, outer)?.1,
                FromItem::Join { .. } => unreachable!(),
            });
        }
        Ok((scope, data))
    }

    /// Cross product of all sources filtered by ON and WHERE conditions.
    fn joined_rows(
        &self,
        q: &Query,
        scope: &Scope,
        data: &[Vec<Vec<DVal>>],
        outer: Option<&Frame<'_>>,
    ) -> DResult<Vec<Vec<DVal>>> {
        let mut items = Vec::new();
        let mut ons = Vec::new();
        for f in &q.from {
            flatten(f, &mut items, &mut ons);
        }
        let mut conds: Vec<&Expr> = ons;
        if let Some(w) = &q.where_clause {
            conds.push(w);
        }
        let mut rows: Vec<Vec<DVal>> = vec![Vec::new()];
        for src in data {
            let mut next = Vec::with_capacity(rows.len() * src.len());
            for p in &rows {
                for r in src {
                    let mut row = p.clone();
                    row.extend(r.iter().cloned());
                    next.push(row);
                }
            }
            rows = next;
        }
        let mut out = Vec::new();
        for r in rows {
            let f = Frame {
                scope,
                row: &r,
                group: None,
                parent: outer,
            };
            let mut ok = true;
            for c in &conds {
                if truth(&self.eval(c, &f)?.v) != Some(true) {
                    ok = false;
                    break;
                }
            }
            if ok {
                out.push(r);
            }
        }
        Ok(out)
    }

    fn eval_query(&self, q: &Query, outer: Option<&Frame<'_>>) -> DResult<(Vec<DCol>, Vec<Vec<DVal>>)> {
        let outer_scopes = frame_scopes(outer);
        let cols = self.check_query(q, &outer_scopes)?;
        let (scope, data) = self.sources(q, outer, &self.dataset)?;
        let rows = self.joined_rows(q, &scope, &data, outer)?;

        let mut out: Vec<(Vec<DVal>, Vec<Value>)> = Vec::new();
        let project = |frame: &Frame<'_>| -> DResult<Vec<DVal>> {
            let mut row = Vec::new();
            for item in &q.select {
                match item {
                    SelectItem::Wildcard => {
                        for s in &scope.sources {
                            for (i, c) in s.cols.iter().enumerate() {
                                if !c.hidden {
                                    row.push(frame.row[s.offset + i].clone());
                                }
                            }
                        }
                    }
                    SelectItem::QualifiedWildcard(qual) => {
                        for s in scope.sources.iter().filter(|s| s.qualifier.eq_ignore_ascii_case(qual)) {
                            for (i, c) in s.cols.iter().enumerate() {
                                if !c.hidden {
                                    row.push(frame.row[s.offset + i].clone());
                                }
                            }
                        }
                    }
                    SelectItem::Expr { expr, .. } => row.push(self.eval(expr, frame)?),
                }
            }
            Ok(row)
        };
        let order_keys = |frame: &Frame<'_>, projected: &[DVal]| -> DResult<Vec<Value>> {
            let mut keys = Vec::new();
            for o in &q.order_by {
                let by_name = match &o.expr {
                    Expr::Column(ColumnRef { qualifier: None, name }) => {
                        cols.iter().position(|c| c.name.eq_ignore_ascii_case(name))
                    }
                    _ => None,
                };
                keys.push(match by_name {
                    Some(i) => projected[i].v.clone(),
                    None => self.eval(&o.expr, frame)?.v,
                });
            }
            Ok(keys)
        };
        if q.is_aggregated() {
            let mut index: HashMap<Vec<(GroupKey, Option<TenantId>)>, usize> = HashMap::new();
            let mut groups: Vec<Group> = Vec::new();
            for r in rows {
                let f = Frame {
                    scope: &scope,
                    row: &r,
                    group: None,
                    parent: outer,
                };
                let mut keys = Vec::new();
                for g in &q.group_by {
                    keys.push((g.clone(), self.eval(g, &f)?));
                }
                let k: Vec<_> = keys.iter().map(|(_, v)| v.key()).collect();
                let gi = *index.entry(k).or_insert_with(|| {
                    groups.push(Group { keys, rows: Vec::new() });
                    groups.len() - 1
                });
                groups[gi].rows.push(r);
            }
            if groups.is_empty() && q.group_by.is_empty() {
                groups.push(Group {
                    keys: Vec::new(),
                    rows: Vec::new(),
                });
            }
            let nulls = vec![DVal::plain(Value::Null); scope.width()];
            for g in &groups {
                let first = g.rows.first().unwrap_or(&nulls);
                let f = Frame {
                    scope: &scope,
                    row: first,
                    group: Some(g),
                    parent: outer,
                };
                if let Some(h) = &q.having {
                    if truth(&self.eval(h, &f)?.v) != Some(true) {
                        continue;
                    }
                }
                let row = project(&f)?;
                let keys = order_keys(&f, &row)?;
                out.push((row, keys));
            }
        } else {
            for r in &rows {
                let f = Frame {
                    scope: &scope,
                    row: r,
                    group: None,
                    parent: outer,
                };
                let row = project(&f)?;
                let keys = order_keys(&f, &row)?;
                out.push((row, keys));
            }
        }
        if q.distinct {
            let mut seen = HashSet::new();
            out.retain(|(r, _)| seen.insert(r.iter().map(DVal::key).collect::<Vec<_>>()));
        }
        if !q.order_by.is_empty() {
            out.sort_by(|(_, a), (_, b)| {
                for ((x, y), o) in a.iter().zip(b).zip(&q.order_by) {
                    let c = x.sort_cmp(y);
                    let c = if o.desc { c.reverse() } else { c };
                    if c != std::cmp::Ordering::Equal {
                        return c;
                    }
                }
                std::cmp::Ordering::Equal
            });
        }
        Ok((cols, out.into_iter().map(|(r, _)| r).collect()))
    }

    /// Evaluate a query for the client; owner tags are dropped.
    pub fn query(&self, q: &Query) -> DResult<Relation> {
        let (cols, rows) = self.eval_query(q, None)?;
        Ok(Relation {
            columns: cols.iter().map(|c| Column::new(c.name.clone(), None)).collect(),
            rows: rows.into_iter().map(|r| r.into_iter().map(|d| d.v).collect()).collect(),
            ordered: !q.order_by.is_empty(),
        })
    }

    /// Tenants owning at least one row of the first tenant-specific table in
    /// `from` that satisfies `where_clause`, evaluated over every tenant.
    pub fn resolve_complex_scope(&self, from: &[FromItem], where_clause: Option<&Expr>) -> DResult<BTreeSet<TenantId>> {
        let mut q = Query::new(vec![SelectItem::Wildcard], from.to_vec());
        q.where_clause = where_clause.cloned();
        let all: BTreeSet<TenantId> = self.catalog.tenants.iter().copied().collect();
        self.check_query(&q, &[])?;
        let (scope, data) = self.sources(&q, None, &all)?;
        let rows = self.joined_rows(&q, &scope, &data, None)?;
        let Some(owner_col) = scope.sources.iter().find_map(|s| s.owner_col) else {
            return Ok(if rows.is_empty() { BTreeSet::new() } else { all });
        };
        Ok(rows.iter().filter_map(|r| r[owner_col].owner).collect())
    }

    fn convert_for(&self, def: &TableDef, col: usize, v: Value, d: TenantId) -> DResult<Value> {
        let meta = &def.columns[col];
        let v = match &meta.comparability {
            Comparability::Convertible(p) if def.is_tenant_specific() => {
                let pair = self.catalog.require_pair(p).map_err(|e| DirectError::Unsupported(e.to_string()))?;
                let u = pair.to_universal(self.client, &v)?;
                pair.from_universal(d, &u)?
            }
            _ => v,
        };
        Ok(v.coerce_to(meta.ty)?)
    }

    /// Execute a data-modifying statement on a copy of the database.
    pub fn modify(&self, s: &Statement) -> DResult<DirectOutcome> {
        let mut snapshot = self.db.clone();
        let mut diagnostics = Vec::new();
        let affected = match s {
            Statement::Insert(ins) => {
                let def = self.table_def(&ins.table)?;
                let targets: Vec<usize> = if ins.columns.is_empty() {
                    (0..def.columns.len()).collect()
                } else {
                    ins.columns
                        .iter()
                        .map(|c| def.column_index(c).ok_or_else(|| DirectError::UnknownColumn(c.clone())))
                        .collect::<DResult<_>>()?
                };
                for c in &def.columns {
                    if c.not_null && c.default.is_none() && !targets.iter().any(|&i| def.columns[i].name == c.name) {
                        return Err(DirectError::NotNullWithoutValue(c.name.clone()));
                    }
                }
                let rows: Vec<Vec<Value>> = match &ins.source {
                    InsertSource::Values(vals) => {
                        let empty = Scope::default();
                        let f = Frame {
                            scope: &empty,
                            row: &[],
                            group: None,
                            parent: None,
                        };
                        vals.iter()
                            .map(|r| r.iter().map(|e| self.eval(e, &f).map(|d| d.v)).collect::<DResult<Vec<_>>>())
                            .collect::<DResult<_>>()?
                    }
                    InsertSource::Query(q) => {
                        let own = Interpreter {
                            db: self.db,
                            catalog: self.catalog,
                            client: self.client,
                            dataset: [self.client].into_iter().collect(),
                        };
                        own.query(q)?.rows
                    }
                };
                let owners: Vec<Option<TenantId>> = if def.is_tenant_specific() {
                    self.dataset.iter().copied().map(Some).collect()
                } else {
                    vec![None]
                };
                let specific_target = targets
                    .iter()
                    .any(|&i| Self::column_kind(def, &def.columns[i]) == Kind::Specific);
                let mut n = 0;
                for owner in owners {
                    if specific_target && owner.is_some_and(|d| d != self.client) {
                        diagnostics.push(format!(
                            "warning: tenant-specific values inserted on behalf of tenant {}",
                            owner.unwrap()
                        ));
                    }
                    let mut staged = Vec::new();
                    for r in &rows {
                        if r.len() != targets.len() {
                            return Err(DirectError::Unsupported(format!(
                                "INSERT supplies {} values for {} columns",
                                r.len(),
                                targets.len()
                            )));
                        }
                        let mut full: Vec<Value> =
                            def.columns.iter().map(|c| c.default.clone().unwrap_or(Value::Null)).collect();
                        for (v, &i) in r.iter().zip(&targets) {
                            full[i] = match owner {
                                Some(d) => self.convert_for(def, i, v.clone(), d)?,
                                None => v.coerce_to(def.columns[i].ty)?,
                            };
                        }
                        for (c, v) in def.columns.iter().zip(&full) {
                            if c.not_null && v.is_null() {
                                return Err(ExecError::NotNull(c.name.clone()).into());
                            }
                        }
                        staged.push(full);
                    }
                    n += staged.len();
                    let rel = match owner {
                        Some(d) => private_mut(&mut snapshot, def, d),
                        None => snapshot
                            .table_mut(&def.name)
                            .ok_or_else(|| DirectError::UnknownTable(def.name.clone()))?,
                    };
                    rel.rows.extend(staged);
                }
                n
            }
            Statement::Update(u) => {
                let def = self.table_def(&u.table)?;
                let targets: Vec<usize> = u
                    .assignments
                    .iter()
                    .map(|(c, _)| def.column_index(c).ok_or_else(|| DirectError::UnknownColumn(c.clone())))
                    .collect::<DResult<_>>()?;
                let scope = self.single_scope(def);
                if let Some(w) = &u.where_clause {
                    self.kind(w, &[scope.clone()], false)?;
                }
                for ((_, e), &i) in u.assignments.iter().zip(&targets) {
                    comparable(
                        Self::column_kind(def, &def.columns[i]),
                        self.kind(e, &[scope.clone()], false)?,
                        &|| e.to_string(),
                    )?;
                }
                let mut n = 0;
                for owner in self.owners(def) {
                    let ds: BTreeSet<TenantId> = owner.into_iter().collect();
                    let rows = self.scan(def, &ds)?;
                    let mut changes = Vec::new();
                    for (ri, r) in rows.iter().enumerate() {
                        let f = Frame {
                            scope: &scope,
                            row: r,
                            group: None,
                            parent: None,
                        };
                        if let Some(w) = &u.where_clause {
                            if truth(&self.eval(w, &f)?.v) != Some(true) {
                                continue;
                            }
                        }
                        let mut vals = Vec::new();
                        for ((_, e), &i) in u.assignments.iter().zip(&targets) {
                            let v = self.eval(e, &f)?.v;
                            let v = match owner {
                                Some(d) => self.convert_for(def, i, v, d)?,
                                None => v.coerce_to(def.columns[i].ty)?,
                            };
                            if v.is_null() && def.columns[i].not_null {
                                return Err(ExecError::NotNull(def.columns[i].name.clone()).into());
                            }
                            vals.push((i, v));
                        }
                        changes.push((ri, vals));
                    }
                    n += changes.len();
                    let rel = match owner {
                        Some(d) => private_mut(&mut snapshot, def, d),
                        None => snapshot.table_mut(&def.name).expect("scanned"),
                    };
                    for (ri, vals) in changes {
                        for (i, v) in vals {
                            rel.rows[ri][i] = v;
                        }
                    }
                }
                n
            }
            Statement::Delete(d) => {
                let def = self.table_def(&d.table)?;
                let scope = self.single_scope(def);
                if let Some(w) = &d.where_clause {
                    self.kind(w, &[scope.clone()], false)?;
                }
                let mut n = 0;
                for owner in self.owners(def) {
                    let ds: BTreeSet<TenantId> = owner.into_iter().collect();
                    let rows = self.scan(def, &ds)?;
                    let mut keep = Vec::new();
                    for r in &rows {
                        let f = Frame {
                            scope: &scope,
                            row: r,
                            group: None,
                            parent: None,
                        };
                        keep.push(match &d.where_clause {
                            Some(w) => truth(&self.eval(w, &f)?.v) != Some(true),
                            None => false,
                        });
                    }
                    n += keep.iter().filter(|k| !**k).count();
                    let rel = match owner {
                        Some(t) => private_mut(&mut snapshot, def, t),
                        None => snapshot.table_mut(&def.name).expect("scanned"),
                    };
                    let mut it = keep.iter();
                    rel.rows.retain(|_| *it.next().unwrap());
                }
                n
            }
            other => {
                return Err(DirectError::Unsupported(format!(
                    "direct evaluation of {}",
                    statement_kind(other)
                )))
            }
        };
        diagnostics.push(format!("{affected} row(s) affected"));
        let columns = Vec::new();
        Ok(DirectOutcome {
            relation: Relation::new(columns),
            snapshot: Some(snapshot),
            affected,
            diagnostics,
        })
    }

    fn owners(&self, def: &TableDef) -> Vec<Option<TenantId>> {
        if def.is_tenant_specific() {
            self.dataset.iter().copied().map(Some).collect()
        } else {
            vec![None]
        }
    }

    fn single_scope(&self, def: &TableDef) -> Scope {
        let cols = Self::base_cols(def);
        let owner_col = def.is_tenant_specific().then(|| cols.len() - 1);
        Scope {
            sources: vec![SrcMeta {
                qualifier: def.name.clone(),
                cols,
                offset: 0,
                owner_col,
            }],
        }
    }
}

fn private_mut<'d>(db: &'d mut Database, def: &TableDef, d: TenantId) -> &'d mut super::Relation {
    db.private.entry((super::key(&def.name), d)).or_insert_with(|| {
        Relation::new(
            def.visible_columns()
                .into_iter()
                .map(|(n, t)| Column::new(n, Some(t)))
                .collect(),
        )
    })
}

fn frame_scopes(frame: Option<&Frame<'_>>) -> Vec<Scope> {
    let mut out = Vec::new();
    let mut f = frame;
    while let Some(fr) = f {
        out.push(fr.scope.clone());
        f = fr.parent;
    }
    out.reverse();
    out
}

/// Compensated sum in the order the rows were produced.
fn precise_sum(vals: &[Value]) -> DResult<f64> {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in vals {
        let x = v.as_f64().ok_or(ValueError::TypeMismatch {
            op: "sum",
            left: "TEXT".into(),
            right: "-".into(),
        })?;
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    Ok(sum + comp)
}

fn scalar_function(name: &str, a: &[Value]) -> DResult<Value> {
    let bad = || DirectError::Unsupported(format!("{name}: bad arguments"));
    let upper = name.to_ascii_uppercase();
    if upper == "COALESCE" {
        return Ok(a.iter().find(|v| !v.is_null()).cloned().unwrap_or(Value::Null));
    }
    if a.iter().any(Value::is_null) {
        return Ok(Value::Null);
    }
    Ok(match upper.as_str() {
        "SUBSTRING" | "SUBSTR" => {
            let s: Vec<char> = a.first().and_then(Value::as_str).ok_or_else(bad)?.chars().collect();
            let start = a.get(1).and_then(Value::as_i64).ok_or_else(bad)?;
            let len = match a.get(2) {
                Some(l) => l.as_i64().ok_or_else(bad)?.max(0),
                None => s.len() as i64 + 1,
            };
            let taken: String = s
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let pos = *i as i64 + 1;
                    pos >= start && pos < start + len
                })
                .map(|(_, c)| *c)
                .collect();
            Value::text(taken)
        }
        "ABS" => match &a[0] {
            Value::Int(i) => Value::Int(i.abs()),
            Value::Dec(d) => Value::Dec(d.abs()),
            _ => return Err(bad()),
        },
        "UPPER" => Value::text(a[0].as_str().ok_or_else(bad)?.to_uppercase()),
        "LOWER" => Value::text(a[0].as_str().ok_or_else(bad)?.to_lowercase()),
        "LENGTH" => Value::Int(a[0].as_str().ok_or_else(bad)?.chars().count() as i64),
        "ROUND" => {
            let digits = a.get(1).map(|d| d.as_i64().ok_or_else(bad)).transpose()?.unwrap_or(0);
            match &a[0] {
                Value::Int(i) => Value::Int(*i),
                Value::Dec(d) => {
                    let m = 10f64.powi(digits as i32);
                    Value::Dec((d * m).round() / m)
                }
                _ => return Err(bad()),
            }
        }
        _ => return Err(DirectError::Unsupported(format!("function {name}"))),
    })
}

/// Result of direct statement evaluation.
#[derive(Debug, Clone)]
pub struct DirectOutcome {
    pub relation: Relation,
    /// Modified copy of the database, for DML.
    pub snapshot: Option<Database>,
    pub affected: usize,
    pub diagnostics: Vec<String>,
}

/// Evaluate `stmt` for client `client` over the tenants in `dataset`.
pub fn execute_mtsql_direct(
    client: TenantId,
    dataset: &BTreeSet<TenantId>,
    stmt: &Statement,
    db: &Database,
    catalog: &Catalog,
) -> DResult<DirectOutcome> {
    let it = Interpreter::new(db, catalog, client, dataset)?;
    match stmt {
        Statement::Query(q) => Ok(DirectOutcome {
            relation: it.query(q)?,
            snapshot: None,
            affected: 0,
            diagnostics: Vec::new(),
        }),
        other => it.modify(other),
    }
}
