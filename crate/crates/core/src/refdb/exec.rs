//! Executor for plain SQL over the shared-table layout.
//!
//! Queries are bound to flat column indices, then evaluated source by source
//! in FROM order. Each conjunct runs as soon as all of its sources are bound;
//! equi-conjuncts on integer or text keys use a hash index. Conversion calls
//! are tallied per (pair, direction).

use std::cell::{OnceCell, RefCell};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::rc::Rc;

use crate::ast::*;
use crate::catalog::Catalog;
use crate::conversion::ConversionError;
use crate::parser;
use crate::tenant::TenantId;
use crate::value::{GroupKey, ScalarType, Value, ValueError};

use super::relation::{Column, Relation, Row};
use super::{key, CounterKey, Database, Layout};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("unknown table '{0}'")]
    UnknownTable(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("ambiguous column '{0}'")]
    AmbiguousColumn(String),
    #[error(transparent)]
    Type(#[from] ValueError),
    #[error(transparent)]
    Conversion(#[from] ConversionError),
    #[error("scalar sub-query returned {0} rows")]
    Cardinality(usize),
    #[error("sub-query must return exactly one column, found {0}")]
    SubqueryArity(usize),
    #[error("column '{0}' does not allow NULL")]
    NotNull(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("database layout: {0}")]
    Layout(String),
}

type XResult<T> = Result<T, ExecError>;

#[derive(Debug, Clone, Copy)]
enum Func {
    Substring,
    Coalesce,
    Abs,
    Upper,
    Lower,
    Length,
    Round,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name.to_ascii_uppercase().as_str() {
            "SUBSTRING" | "SUBSTR" => Func::Substring,
            "COALESCE" => Func::Coalesce,
            "ABS" => Func::Abs,
            "UPPER" => Func::Upper,
            "LOWER" => Func::Lower,
            "LENGTH" => Func::Length,
            "ROUND" => Func::Round,
            _ => return None,
        })
    }
}

#[derive(Debug)]
enum CExpr {
    Col { depth: usize, idx: usize },
    Lit(Value),
    Neg(Box<CExpr>),
    Not(Box<CExpr>),
    Bin(BinaryOp, Box<CExpr>, Box<CExpr>),
    IsNull(Box<CExpr>, bool),
    InList(Box<CExpr>, Vec<CExpr>, bool),
    InSub(Box<CExpr>, Box<Plan>, bool),
    Exists(Box<Plan>, bool),
    Scalar(Box<Plan>),
    AggRef(usize),
    KeyRef(usize),
    Func(Func, Vec<CExpr>),
    Convert {
        pair: usize,
        dir: Direction,
        value: Box<CExpr>,
        tenant: Box<CExpr>,
    },
    Case {
        operand: Option<Box<CExpr>>,
        branches: Vec<(CExpr, CExpr)>,
        else_expr: Option<Box<CExpr>>,
    },
}

#[derive(Debug)]
struct AggCall {
    func: AggFunc,
    arg: Option<CExpr>,
    distinct: bool,
}

#[derive(Debug)]
struct AggPlan {
    keys: Vec<CExpr>,
    calls: Vec<AggCall>,
    having: Option<CExpr>,
    /// No GROUP BY: exactly one output group even on empty input.
    global: bool,
}

#[derive(Debug)]
enum OrderKey {
    Output(usize),
    Expr(CExpr),
}

#[derive(Debug)]
enum PlanSource {
    Base(String),
    Derived(Box<Plan>),
    Owned(Rc<Vec<Row>>),
}

#[derive(Debug, Default)]
struct Step {
    /// Conjuncts over this source alone, evaluated on the source row.
    prefilter: Vec<CExpr>,
    prefilter_correlated: bool,
    /// (probe expression over the partial row, column within this source)
    hash_keys: Vec<(CExpr, usize)>,
    /// Conjuncts evaluated on the joined row once this source is bound.
    residual: Vec<CExpr>,
}

#[derive(Debug)]
struct Plan {
    sources: Vec<PlanSource>,
    steps: Vec<Step>,
    /// Conjuncts referencing no column of this level.
    constant: Vec<CExpr>,
    width: usize,
    agg: Option<AggPlan>,
    projection: Vec<CExpr>,
    columns: Vec<Column>,
    distinct: bool,
    order: Vec<(OrderKey, bool)>,
    correlated: bool,
    result_cache: OnceCell<Rc<Vec<Row>>>,
    source_cache: Vec<OnceCell<Rc<Vec<Row>>>>,
    index_cache: Vec<OnceCell<Option<Rc<KeyIndex>>>>,
}

type KeyIndex = HashMap<Vec<GroupKey>, Vec<usize>>;

// ---------------------------------------------------------------------------
// binding

#[derive(Debug, Clone)]
struct ScopeSource {
    qualifier: String,
    columns: Vec<Column>,
    offset: usize,
}

#[derive(Debug, Clone, Default)]
struct Scope {
    sources: Vec<ScopeSource>,
}

impl Scope {
    fn width(&self) -> usize {
        self.sources.last().map(|s| s.offset + s.columns.len()).unwrap_or(0)
    }

    fn lookup(&self, c: &ColumnRef) -> XResult<Option<(usize, Option<ScalarType>)>> {
        let mut found = None;
        for s in &self.sources {
            if let Some(q) = &c.qualifier {
                if !s.qualifier.eq_ignore_ascii_case(q) {
                    continue;
                }
            }
            for (i, col) in s.columns.iter().enumerate() {
                if col.name.eq_ignore_ascii_case(&c.name) {
                    if found.is_some() {
                        return Err(ExecError::AmbiguousColumn(c.to_string()));
                    }
                    found = Some((s.offset + i, col.ty));
                }
            }
        }
        Ok(found)
    }
}

struct Compiler<'a> {
    db: &'a Database,
    catalog: &'a Catalog,
    meta: RefCell<Option<BTreeMap<String, (Vec<Column>, Rc<Vec<Row>>)>>>,
}

/// Compile-time knowledge about the current level when compiling post-aggregation expressions.
struct AggCtx<'q> {
    group_by: &'q [Expr],
    calls: Vec<AggCall>,
}

impl<'a> Compiler<'a> {
    fn meta_table(&self, name: &str) -> Option<(Vec<Column>, Rc<Vec<Row>>)> {
        let mut m = self.meta.borrow_mut();
        let map = m.get_or_insert_with(|| {
            self.catalog
                .meta_tables()
                .into_iter()
                .map(|t| {
                    let cols = t.columns.iter().map(|(n, ty)| Column::new(n.clone(), Some(*ty))).collect();
                    (key(&t.name), (cols, Rc::new(t.rows)))
                })
                .collect()
        });
        map.get(&key(name)).cloned()
    }

    fn resolve(&self, scopes: &[Scope], c: &ColumnRef) -> XResult<(CExpr, Option<ScalarType>)> {
        for (depth, scope) in scopes.iter().rev().enumerate() {
            if let Some((idx, ty)) = scope.lookup(c)? {
                return Ok((CExpr::Col { depth, idx }, ty));
            }
        }
        Err(ExecError::UnknownColumn(c.to_string()))
    }

    fn compile_query(&self, q: &Query, outer: &[Scope]) -> XResult<Plan> {
        // FROM: flatten inner joins, collecting ON conditions as conjuncts
        let mut flat: Vec<(&FromItem, Option<&Expr>)> = Vec::new();
        fn flatten<'q>(f: &'q FromItem, out: &mut Vec<(&'q FromItem, Option<&'q Expr>)>, ons: &mut Vec<&'q Expr>) {
            match f {
                FromItem::Join { left, right, on } => {
                    flatten(left, out, ons);
                    flatten(right, out, ons);
                    ons.push(on);
                }
                other => out.push((other, None)),
            }
        }
        let mut ons = Vec::new();
        for f in &q.from {
            flatten(f, &mut flat, &mut ons);
        }
        let mut scope = Scope::default();
        let mut sources = Vec::new();
        for (item, _) in &flat {
            let offset = scope.width();
            let (qualifier, columns, src) = match item {
                FromItem::Table { name, alias } => {
                    let qualifier = alias.clone().unwrap_or_else(|| name.clone());
                    if let Some(rel) = self.db.table(name) {
                        (qualifier, rel.columns.clone(), PlanSource::Base(key(name)))
                    } else if let Some(view) = self.catalog.view(name) {
                        let vq = parser::parse_query(&view.sql)
                            .map_err(|e| ExecError::Unsupported(format!("view {name}: {e}")))?;
                        let plan = self.compile_query(&vq, outer)?;
                        (qualifier, plan.columns.clone(), PlanSource::Derived(Box::new(plan)))
                    } else if let Some((cols, rows)) = self.meta_table(name) {
                        (qualifier, cols, PlanSource::Owned(rows))
                    } else if let Some(def) = self.catalog.table(name) {
                        let cols = def
                            .shared_columns()
                            .into_iter()
                            .map(|(n, t)| Column::new(n, Some(t)))
                            .collect();
                        (qualifier, cols, PlanSource::Owned(Rc::new(Vec::new())))
                    } else {
                        return Err(ExecError::UnknownTable(name.clone()));
                    }
                }
                FromItem::Derived { query, alias } => {
                    let plan = self.compile_query(query, outer)?;
                    (alias.clone(), plan.columns.clone(), PlanSource::Derived(Box::new(plan)))
                }
                FromItem::Join { .. } => unreachable!("flattened"),
            };
            scope.sources.push(ScopeSource {
                qualifier,
                columns,
                offset,
            });
            sources.push(src);
        }

        let mut scopes: Vec<Scope> = outer.to_vec();
        scopes.push(scope.clone());

        let mut conjunct_list: Vec<&Expr> = Vec::new();
        fn split<'q>(e: &'q Expr, out: &mut Vec<&'q Expr>) {
            match e {
                Expr::Binary {
                    op: BinaryOp::And,
                    left,
                    right,
                } => {
                    split(left, out);
                    split(right, out);
                }
                other => out.push(other),
            }
        }
        for on in ons {
            split(on, &mut conjunct_list);
        }
        if let Some(w) = &q.where_clause {
            split(w, &mut conjunct_list);
        }

        let n = sources.len();
        let mut steps: Vec<Step> = (0..n).map(|_| Step::default()).collect();
        let mut constant = Vec::new();
        let source_of = |idx: usize| -> usize {
            scope
                .sources
                .iter()
                .rposition(|s| s.offset <= idx)
                .expect("index within scope")
        };
        for c in conjunct_list {
            let compiled = self.compile_expr(c, &scopes, None)?;
            let mut refs = Vec::new();
            collect_level_refs(&compiled, 0, &mut refs);
            let used: std::collections::BTreeSet<usize> = refs.iter().map(|&i| source_of(i)).collect();
            match used.iter().next_back() {
                None => constant.push(compiled),
                Some(&last) if used.len() == 1 => {
                    // recompile against the lone source so it can run before joining
                    let mut lone = outer.to_vec();
                    lone.push(Scope {
                        sources: vec![ScopeSource {
                            offset: 0,
                            ..scope.sources[last].clone()
                        }],
                    });
                    let pre = self.compile_expr(c, &lone, None)?;
                    if expr_refs_above(&pre, 1) {
                        steps[last].prefilter_correlated = true;
                    }
                    steps[last].prefilter.push(pre);
                }
                Some(&last) => {
                    if let Some(k) = self.hash_key(c, &scopes, &scope, last, &source_of)? {
                        steps[last].hash_keys.push(k);
                    }
                    steps[last].residual.push(compiled);
                }
            }
        }

        // SELECT / GROUP BY / HAVING
        let aggregated = q.is_aggregated();
        let mut agg_ctx = AggCtx {
            group_by: &q.group_by,
            calls: Vec::new(),
        };
        let mut projection = Vec::new();
        let mut columns = Vec::new();
        for (i, item) in q.select.iter().enumerate() {
            match item {
                SelectItem::Wildcard | SelectItem::QualifiedWildcard(_) => {
                    let qual = match item {
                        SelectItem::QualifiedWildcard(q) => Some(q),
                        _ => None,
                    };
                    let mut matched = false;
                    for s in &scope.sources {
                        if qual.is_some_and(|q| !s.qualifier.eq_ignore_ascii_case(q)) {
                            continue;
                        }
                        matched = true;
                        for (j, c) in s.columns.iter().enumerate() {
                            projection.push(CExpr::Col {
                                depth: 0,
                                idx: s.offset + j,
                            });
                            columns.push(c.clone());
                        }
                    }
                    if !matched {
                        return Err(ExecError::UnknownTable(qual.cloned().unwrap_or_else(|| "*".into())));
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    let ty = match expr {
                        Expr::Column(c) => self.resolve(&scopes, c)?.1,
                        Expr::Literal(l) => l.to_value().scalar_type(),
                        _ => None,
                    };
                    let ce = if aggregated {
                        self.compile_expr(expr, &scopes, Some(&mut agg_ctx))?
                    } else {
                        self.compile_expr(expr, &scopes, None)?
                    };
                    projection.push(ce);
                    columns.push(Column::new(output_name(expr, alias.as_deref(), i), ty));
                }
            }
        }
        let mut order = Vec::new();
        for o in &q.order_by {
            let by_output = match &o.expr {
                Expr::Column(ColumnRef { qualifier: None, name }) => {
                    columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
                }
                _ => None,
            }
            .or_else(|| {
                q.select.iter().position(|s| matches!(s, SelectItem::Expr { expr, .. } if *expr == o.expr))
                    .filter(|_| !q.select.iter().any(|s| !matches!(s, SelectItem::Expr { .. })))
            });
            let k = match by_output {
                Some(i) => OrderKey::Output(i),
                None if aggregated => OrderKey::Expr(self.compile_expr(&o.expr, &scopes, Some(&mut agg_ctx))?),
                None => OrderKey::Expr(self.compile_expr(&o.expr, &scopes, None)?),
            };
            order.push((k, o.desc));
        }
        let agg = if aggregated {
            let having = match &q.having {
                Some(h) => Some(self.compile_expr(h, &scopes, Some(&mut agg_ctx))?),
                None => None,
            };
            let mut keys = Vec::new();
            for g in &q.group_by {
                keys.push(self.compile_expr(g, &scopes, None)?);
            }
            Some(AggPlan {
                keys,
                calls: agg_ctx.calls,
                having,
                global: q.group_by.is_empty(),
            })
        } else {
            None
        };

        let mut plan = Plan {
            source_cache: (0..n).map(|_| OnceCell::new()).collect(),
            index_cache: (0..n).map(|_| OnceCell::new()).collect(),
            sources,
            steps,
            constant,
            width: scope.width(),
            agg,
            projection,
            columns,
            distinct: q.distinct,
            order,
            correlated: false,
            result_cache: OnceCell::new(),
        };
        plan.correlated = plan_refs_above(&plan, 1);
        Ok(plan)
    }

    /// `a = b` where one side is a bare column of the last-bound source and
    /// the other side only uses earlier sources (or outer scopes).
    fn hash_key(
        &self,
        c: &Expr,
        scopes: &[Scope],
        scope: &Scope,
        last: usize,
        source_of: &dyn Fn(usize) -> usize,
    ) -> XResult<Option<(CExpr, usize)>> {
        let Expr::Binary {
            op: BinaryOp::Eq,
            left,
            right,
        } = c
        else {
            return Ok(None);
        };
        for (col_side, other) in [(left, right), (right, left)] {
            let Expr::Column(cr) = &**col_side else { continue };
            let (CExpr::Col { depth: 0, idx }, _) = self.resolve(scopes, cr)? else {
                continue;
            };
            if source_of(idx) != last {
                continue;
            }
            let probe = self.compile_expr(other, scopes, None)?;
            let mut refs = Vec::new();
            collect_level_refs(&probe, 0, &mut refs);
            if refs.iter().all(|&i| source_of(i) < last) {
                return Ok(Some((probe, idx - scope.sources[last].offset)));
            }
        }
        Ok(None)
    }

    fn compile_expr(&self, e: &Expr, scopes: &[Scope], mut agg: Option<&mut AggCtx<'_>>) -> XResult<CExpr> {
        if let Some(ctx) = agg.as_deref_mut() {
            if let Some(i) = ctx.group_by.iter().position(|g| g == e) {
                return Ok(CExpr::KeyRef(i));
            }
        }
        let rec = |x: &Expr, agg: &mut Option<&mut AggCtx<'_>>| -> XResult<Box<CExpr>> {
            Ok(Box::new(self.compile_expr(x, scopes, agg.as_deref_mut())?))
        };
        Ok(match e {
            Expr::Column(c) => self.resolve(scopes, c)?.0,
            Expr::Literal(l) => CExpr::Lit(l.to_value()),
            Expr::Unary { op: UnaryOp::Neg, expr } => CExpr::Neg(rec(expr, &mut agg)?),
            Expr::Unary { op: UnaryOp::Not, expr } => CExpr::Not(rec(expr, &mut agg)?),
            Expr::Binary { op, left, right } => {
                let l = rec(left, &mut agg)?;
                let r = rec(right, &mut agg)?;
                CExpr::Bin(*op, l, r)
            }
            Expr::IsNull { expr, negated } => CExpr::IsNull(rec(expr, &mut agg)?, *negated),
            Expr::InList { expr, list, negated } => {
                let x = rec(expr, &mut agg)?;
                let mut items = Vec::new();
                for it in list {
                    items.push(*rec(it, &mut agg)?);
                }
                CExpr::InList(x, items, *negated)
            }
            Expr::InSubquery { expr, query, negated } => {
                let x = rec(expr, &mut agg)?;
                let plan = self.compile_query(query, scopes)?;
                if plan.columns.len() != 1 {
                    return Err(ExecError::SubqueryArity(plan.columns.len()));
                }
                CExpr::InSub(x, Box::new(plan), *negated)
            }
            Expr::Exists { query, negated } => CExpr::Exists(Box::new(self.compile_query(query, scopes)?), *negated),
            Expr::Subquery(query) => {
                let plan = self.compile_query(query, scopes)?;
                if plan.columns.len() != 1 {
                    return Err(ExecError::SubqueryArity(plan.columns.len()));
                }
                CExpr::Scalar(Box::new(plan))
            }
            Expr::Aggregate { func, arg, distinct } => {
                let Some(ctx) = agg.as_deref_mut() else {
                    return Err(ExecError::Unsupported(format!("aggregate {} outside SELECT/HAVING", func.name())));
                };
                let arg = match arg {
                    Some(a) => Some(self.compile_expr(a, scopes, None)?),
                    None => None,
                };
                ctx.calls.push(AggCall {
                    func: *func,
                    arg,
                    distinct: *distinct,
                });
                CExpr::AggRef(ctx.calls.len() - 1)
            }
            Expr::Function { name, args } => {
                let f = Func::lookup(name).ok_or_else(|| ExecError::Unsupported(format!("function {name}")))?;
                let mut cargs = Vec::new();
                for a in args {
                    cargs.push(*rec(a, &mut agg)?);
                }
                CExpr::Func(f, cargs)
            }
            Expr::Convert {
                pair,
                direction,
                value,
                tenant,
            } => {
                let idx = self
                    .catalog
                    .pairs
                    .iter()
                    .position(|p| p.name.eq_ignore_ascii_case(pair))
                    .ok_or_else(|| ConversionError::UnknownConversionPair(pair.clone()))?;
                CExpr::Convert {
                    pair: idx,
                    dir: *direction,
                    value: rec(value, &mut agg)?,
                    tenant: rec(tenant, &mut agg)?,
                }
            }
            Expr::Case {
                operand,
                branches,
                else_expr,
            } => {
                let operand = match operand {
                    Some(o) => Some(rec(o, &mut agg)?),
                    None => None,
                };
                let mut bs = Vec::new();
                for (w, t) in branches {
                    bs.push((*rec(w, &mut agg)?, *rec(t, &mut agg)?));
                }
                let else_expr = match else_expr {
                    Some(x) => Some(rec(x, &mut agg)?),
                    None => None,
                };
                CExpr::Case {
                    operand,
                    branches: bs,
                    else_expr,
                }
            }
        })
    }
}

/// Column indices of the level `target` levels above `e`'s own.
fn collect_level_refs(e: &CExpr, target: usize, out: &mut Vec<usize>) {
    walk_cexpr(e, &mut |x, nest| {
        if let CExpr::Col { depth, idx } = x {
            if *depth == target + nest {
                out.push(*idx);
            }
        }
    });
}

fn expr_refs_above(e: &CExpr, k: usize) -> bool {
    let mut found = false;
    walk_cexpr(e, &mut |x, nest| {
        if let CExpr::Col { depth, .. } = x {
            if *depth >= k + nest {
                found = true;
            }
        }
    });
    found
}

fn plan_refs_above(p: &Plan, k: usize) -> bool {
    let mut found = false;
    walk_plan(p, 0, &mut |x, nest| {
        if let CExpr::Col { depth, .. } = x {
            if *depth >= k + nest {
                found = true;
            }
        }
    });
    found
}

/// Visit every expression node; `nest` counts how many query levels below
/// the starting level the node sits (derived tables skip their parent).
fn walk_cexpr(e: &CExpr, f: &mut dyn FnMut(&CExpr, usize)) {
    walk_cexpr_at(e, 0, f)
}

fn walk_cexpr_at(e: &CExpr, nest: usize, f: &mut dyn FnMut(&CExpr, usize)) {
    f(e, nest);
    match e {
        CExpr::Col { .. } | CExpr::Lit(_) | CExpr::AggRef(_) | CExpr::KeyRef(_) => {}
        CExpr::Neg(x) | CExpr::Not(x) | CExpr::IsNull(x, _) => walk_cexpr_at(x, nest, f),
        CExpr::Bin(_, a, b) => {
            walk_cexpr_at(a, nest, f);
            walk_cexpr_at(b, nest, f);
        }
        CExpr::InList(x, items, _) => {
            walk_cexpr_at(x, nest, f);
            for i in items {
                walk_cexpr_at(i, nest, f);
            }
        }
        CExpr::InSub(x, p, _) => {
            walk_cexpr_at(x, nest, f);
            walk_plan(p, nest + 1, f);
        }
        CExpr::Exists(p, _) | CExpr::Scalar(p) => walk_plan(p, nest + 1, f),
        CExpr::Func(_, args) => {
            for a in args {
                walk_cexpr_at(a, nest, f);
            }
        }
        CExpr::Convert { value, tenant, .. } => {
            walk_cexpr_at(value, nest, f);
            walk_cexpr_at(tenant, nest, f);
        }
        CExpr::Case {
            operand,
            branches,
            else_expr,
        } => {
            if let Some(o) = operand {
                walk_cexpr_at(o, nest, f);
            }
            for (w, t) in branches {
                walk_cexpr_at(w, nest, f);
                walk_cexpr_at(t, nest, f);
            }
            if let Some(x) = else_expr {
                walk_cexpr_at(x, nest, f);
            }
        }
    }
}

fn walk_plan(p: &Plan, nest: usize, f: &mut dyn FnMut(&CExpr, usize)) {
    for s in &p.sources {
        if let PlanSource::Derived(d) = s {
            // a derived table cannot see its parent level, so its depth 1 is
            // the parent's depth 1
            walk_plan_skip(d, nest, f);
        }
    }
    for st in &p.steps {
        for e in &st.prefilter {
            walk_cexpr_at(e, nest, f);
        }
        for (e, _) in &st.hash_keys {
            walk_cexpr_at(e, nest, f);
        }
        for e in &st.residual {
            walk_cexpr_at(e, nest, f);
        }
    }
    for e in &p.constant {
        walk_cexpr_at(e, nest, f);
    }
    if let Some(a) = &p.agg {
        for e in &a.keys {
            walk_cexpr_at(e, nest, f);
        }
        for c in &a.calls {
            if let Some(e) = &c.arg {
                walk_cexpr_at(e, nest, f);
            }
        }
        if let Some(h) = &a.having {
            walk_cexpr_at(h, nest, f);
        }
    }
    for e in &p.projection {
        walk_cexpr_at(e, nest, f);
    }
    for (k, _) in &p.order {
        if let OrderKey::Expr(e) = k {
            walk_cexpr_at(e, nest, f);
        }
    }
}

fn walk_plan_skip(d: &Plan, nest: usize, f: &mut dyn FnMut(&CExpr, usize)) {
    // Levels seen by `d` are: itself (0), then the parent's outer scopes.
    // Shift so that `depth >= k + nest` checks keep meaning "above the start".
    walk_plan(d, nest, &mut |x, n| {
        if let CExpr::Col { depth, idx } = x {
            if *depth >= 1 + n - nest {
                // depth counted from d equals depth counted from the parent
                let shifted = CExpr::Col {
                    depth: depth + 1,
                    idx: *idx,
                };
                f(&shifted, n + 1);
                return;
            }
        }
        f(x, n + 1);
    });
}

// ---------------------------------------------------------------------------
// evaluation

struct Env<'e> {
    row: &'e [Value],
    parent: Option<&'e Env<'e>>,
}

impl<'e> Env<'e> {
    fn get(&self, depth: usize, idx: usize) -> &Value {
        let mut env = self;
        for _ in 0..depth {
            env = env.parent.expect("binder guarantees scope depth");
        }
        &env.row[idx]
    }
}

struct GroupCtx<'g> {
    keys: &'g [Value],
    aggs: &'g [Value],
}

enum Acc {
    Count(i64),
    CountDistinct(HashSet<GroupKey>),
    Sum {
        int: i64,
        dec: Neumaier,
        is_dec: bool,
        any: bool,
        seen: Option<HashSet<GroupKey>>,
    },
    Avg {
        sum: Neumaier,
        n: i64,
        seen: Option<HashSet<GroupKey>>,
    },
    Min(Option<Value>),
    Max(Option<Value>),
}

#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Acc {
    fn new(c: &AggCall) -> Acc {
        let seen = || if c.distinct { Some(HashSet::new()) } else { None };
        match c.func {
            AggFunc::Count if c.distinct => Acc::CountDistinct(HashSet::new()),
            AggFunc::Count => Acc::Count(0),
            AggFunc::Sum => Acc::Sum {
                int: 0,
                dec: Neumaier::default(),
                is_dec: false,
                any: false,
                seen: seen(),
            },
            AggFunc::Avg => Acc::Avg {
                sum: Neumaier::default(),
                n: 0,
                seen: seen(),
            },
            AggFunc::Min => Acc::Min(None),
            AggFunc::Max => Acc::Max(None),
        }
    }

    fn update(&mut self, v: Option<Value>) -> XResult<()> {
        let Some(v) = v else {
            // COUNT(*)
            if let Acc::Count(n) = self {
                *n += 1;
            }
            return Ok(());
        };
        if v.is_null() {
            return Ok(());
        }
        match self {
            Acc::Count(n) => *n += 1,
            Acc::CountDistinct(s) => {
                s.insert(v.group_key());
            }
            Acc::Sum {
                int,
                dec,
                is_dec,
                any,
                seen,
            } => {
                if let Some(s) = seen {
                    if !s.insert(v.group_key()) {
                        return Ok(());
                    }
                }
                *any = true;
                match v {
                    Value::Int(i) if !*is_dec => match int.checked_add(i) {
                        Some(s) => *int = s,
                        None => {
                            *is_dec = true;
                            dec.add(*int as f64);
                            dec.add(i as f64);
                        }
                    },
                    Value::Int(i) => dec.add(i as f64),
                    Value::Dec(d) => {
                        if !*is_dec {
                            *is_dec = true;
                            dec.add(*int as f64);
                        }
                        dec.add(d);
                    }
                    Value::Text(_) | Value::Null => {
                        return Err(ValueError::TypeMismatch {
                            op: "sum",
                            left: "TEXT".into(),
                            right: "-".into(),
                        }
                        .into())
                    }
                }
            }
            Acc::Avg { sum, n, seen } => {
                if let Some(s) = seen {
                    if !s.insert(v.group_key()) {
                        return Ok(());
                    }
                }
                let x = v.as_f64().ok_or_else(|| ValueError::TypeMismatch {
                    op: "average",
                    left: "TEXT".into(),
                    right: "-".into(),
                })?;
                sum.add(x);
                *n += 1;
            }
            Acc::Min(_) | Acc::Max(_) => {
                let is_min = matches!(self, Acc::Min(_));
                let (Acc::Min(best) | Acc::Max(best)) = self else { unreachable!() };
                let replace = match best {
                    None => true,
                    Some(b) => matches!(
                        (v.sql_cmp(b)?, is_min),
                        (Some(std::cmp::Ordering::Less), true) | (Some(std::cmp::Ordering::Greater), false)
                    ),
                };
                if replace {
                    *best = Some(v);
                }
            }
        }
        Ok(())
    }

    fn finish(&self) -> Value {
        match self {
            Acc::Count(n) => Value::Int(*n),
            Acc::CountDistinct(s) => Value::Int(s.len() as i64),
            Acc::Sum {
                int, dec, is_dec, any, ..
            } => {
                if !*any {
                    Value::Null
                } else if *is_dec {
                    Value::Dec(dec.value())
                } else {
                    Value::Int(*int)
                }
            }
            Acc::Avg { sum, n, .. } => {
                if *n == 0 {
                    Value::Null
                } else {
                    Value::Dec(sum.value() / *n as f64)
                }
            }
            Acc::Min(b) | Acc::Max(b) => b.clone().unwrap_or(Value::Null),
        }
    }
}

enum Rows<'a> {
    Borrowed(&'a [Row]),
    Shared(Rc<Vec<Row>>),
}

impl Rows<'_> {
    fn as_slice(&self) -> &[Row] {
        match self {
            Rows::Borrowed(r) => r,
            Rows::Shared(r) => r,
        }
    }
}

struct Runner<'a> {
    db: &'a Database,
    catalog: &'a Catalog,
    counts: RefCell<Vec<[u64; 2]>>,
}

fn truth(v: &Value) -> Option<bool> {
    match v {
        Value::Null => None,
        Value::Int(i) => Some(*i != 0),
        Value::Dec(d) => Some(*d != 0.0),
        Value::Text(_) => Some(true),
    }
}

fn boolean(b: Option<bool>) -> Value {
    match b {
        None => Value::Null,
        Some(true) => Value::Int(1),
        Some(false) => Value::Int(0),
    }
}

fn tenant_arg(v: &Value) -> XResult<TenantId> {
    match v.as_i64() {
        Some(i) if i >= 0 && i <= u32::MAX as i64 => Ok(TenantId(i as u32)),
        _ => Err(ConversionError::BadTenantArgument(v.to_string()).into()),
    }
}

impl<'a> Runner<'a> {
    fn eval(&self, e: &CExpr, env: &Env<'_>, grp: Option<&GroupCtx<'_>>) -> XResult<Value> {
        Ok(match e {
            CExpr::Col { depth, idx } => env.get(*depth, *idx).clone(),
            CExpr::Lit(v) => v.clone(),
            CExpr::Neg(x) => self.eval(x, env, grp)?.neg()?,
            CExpr::Not(x) => boolean(truth(&self.eval(x, env, grp)?).map(|b| !b)),
            CExpr::Bin(op, a, b) => match op {
                BinaryOp::And => {
                    let l = truth(&self.eval(a, env, grp)?);
                    if l == Some(false) {
                        return Ok(boolean(Some(false)));
                    }
                    let r = truth(&self.eval(b, env, grp)?);
                    boolean(match (l, r) {
                        (_, Some(false)) => Some(false),
                        (Some(true), Some(true)) => Some(true),
                        _ => None,
                    })
                }
                BinaryOp::Or => {
                    let l = truth(&self.eval(a, env, grp)?);
                    if l == Some(true) {
                        return Ok(boolean(Some(true)));
                    }
                    let r = truth(&self.eval(b, env, grp)?);
                    boolean(match (l, r) {
                        (_, Some(true)) => Some(true),
                        (Some(false), Some(false)) => Some(false),
                        _ => None,
                    })
                }
                _ => {
                    let l = self.eval(a, env, grp)?;
                    let r = self.eval(b, env, grp)?;
                    binary(*op, &l, &r)?
                }
            },
            CExpr::IsNull(x, negated) => boolean(Some(self.eval(x, env, grp)?.is_null() != *negated)),
            CExpr::InList(x, items, negated) => {
                let v = self.eval(x, env, grp)?;
                let mut vals = Vec::with_capacity(items.len());
                for i in items {
                    vals.push(self.eval(i, env, grp)?);
                }
                in_values(&v, vals.iter(), *negated)?
            }
            CExpr::InSub(x, plan, negated) => {
                let v = self.eval(x, env, grp)?;
                let rows = self.run_sub(plan, env)?;
                in_values(&v, rows.iter().map(|r| &r[0]), *negated)?
            }
            CExpr::Exists(plan, negated) => {
                let rows = self.run_sub(plan, env)?;
                boolean(Some(rows.is_empty() == *negated))
            }
            CExpr::Scalar(plan) => {
                let rows = self.run_sub(plan, env)?;
                match rows.len() {
                    0 => Value::Null,
                    1 => rows[0][0].clone(),
                    n => return Err(ExecError::Cardinality(n)),
                }
            }
            CExpr::AggRef(i) => grp.expect("aggregate context").aggs[*i].clone(),
            CExpr::KeyRef(i) => grp.expect("aggregate context").keys[*i].clone(),
            CExpr::Func(f, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a, env, grp)?);
                }
                call(*f, &vals)?
            }
            CExpr::Convert {
                pair,
                dir,
                value,
                tenant,
            } => {
                let v = self.eval(value, env, grp)?;
                if v.is_null() {
                    return Ok(Value::Null);
                }
                let t = tenant_arg(&self.eval(tenant, env, grp)?)?;
                self.counts.borrow_mut()[*pair][*dir as usize] += 1;
                self.catalog.pairs[*pair].apply(*dir, t, &v)?
            }
            CExpr::Case {
                operand,
                branches,
                else_expr,
            } => {
                let op = match operand {
                    Some(o) => Some(self.eval(o, env, grp)?),
                    None => None,
                };
                for (w, t) in branches {
                    let wv = self.eval(w, env, grp)?;
                    let hit = match &op {
                        Some(o) => matches!(o.sql_cmp(&wv)?, Some(std::cmp::Ordering::Equal)),
                        None => truth(&wv) == Some(true),
                    };
                    if hit {
                        return self.eval(t, env, grp);
                    }
                }
                match else_expr {
                    Some(x) => self.eval(x, env, grp)?,
                    None => Value::Null,
                }
            }
        })
    }

    fn run_sub(&self, plan: &Plan, env: &Env<'_>) -> XResult<Rc<Vec<Row>>> {
        if !plan.correlated {
            if let Some(r) = plan.result_cache.get() {
                return Ok(r.clone());
            }
            let rows = Rc::new(self.run(plan, Some(env))?);
            let _ = plan.result_cache.set(rows.clone());
            return Ok(rows);
        }
        Ok(Rc::new(self.run(plan, Some(env))?))
    }

    fn source_rows(&self, plan: &Plan, k: usize, parent: Option<&Env<'_>>) -> XResult<Rows<'a>> {
        let step = &plan.steps[k];
        let cacheable = !step.prefilter_correlated
            && match &plan.sources[k] {
                PlanSource::Derived(d) => !d.correlated,
                _ => true,
            };
        if cacheable {
            if let Some(r) = plan.source_cache[k].get() {
                return Ok(Rows::Shared(r.clone()));
            }
        }
        let base: Rows<'a> = match &plan.sources[k] {
            PlanSource::Base(name) => Rows::Borrowed(
                &self
                    .db
                    .tables
                    .get(name)
                    .ok_or_else(|| ExecError::UnknownTable(name.clone()))?
                    .rows,
            ),
            // derived tables see the scopes above the current level only
            PlanSource::Derived(d) => Rows::Shared(Rc::new(self.run(d, parent)?)),
            PlanSource::Owned(r) => Rows::Shared(r.clone()),
        };
        if step.prefilter.is_empty() {
            if cacheable {
                if let Rows::Shared(r) = &base {
                    let _ = plan.source_cache[k].set(r.clone());
                }
            }
            return Ok(base);
        }
        let mut kept = Vec::new();
        for r in base.as_slice() {
            let env = Env { row: r, parent };
            let mut ok = true;
            for c in &step.prefilter {
                if truth(&self.eval(c, &env, None)?) != Some(true) {
                    ok = false;
                    break;
                }
            }
            if ok {
                kept.push(r.clone());
            }
        }
        let kept = Rc::new(kept);
        if cacheable {
            let _ = plan.source_cache[k].set(kept.clone());
        }
        Ok(Rows::Shared(kept))
    }

    fn build_index(&self, step: &Step, rows: &[Row]) -> Option<Rc<KeyIndex>> {
        let mut idx: KeyIndex = HashMap::new();
        for (i, r) in rows.iter().enumerate() {
            let mut key = Vec::with_capacity(step.hash_keys.len());
            for (_, c) in &step.hash_keys {
                match &r[*c] {
                    Value::Dec(_) => return None,
                    Value::Null => break,
                    v => key.push(v.group_key()),
                }
            }
            if key.len() == step.hash_keys.len() {
                idx.entry(key).or_default().push(i);
            }
        }
        Some(Rc::new(idx))
    }

    fn run(&self, plan: &Plan, parent: Option<&Env<'_>>) -> XResult<Vec<Row>> {
        let empty: [Value; 0] = [];
        {
            let env = Env { row: &empty, parent };
            for c in &plan.constant {
                if truth(&self.eval(c, &env, None)?) != Some(true) {
                    return self.finish(plan, Vec::new(), parent);
                }
            }
        }
        let mut partial: Vec<Row> = vec![Vec::new()];
        for k in 0..plan.sources.len() {
            let step = &plan.steps[k];
            let src = self.source_rows(plan, k, parent)?;
            let src = src.as_slice();
            let index = if step.hash_keys.is_empty() {
                None
            } else if !step.prefilter_correlated && !matches!(&plan.sources[k], PlanSource::Derived(d) if d.correlated) {
                plan.index_cache[k].get_or_init(|| self.build_index(step, src)).clone()
            } else {
                self.build_index(step, src)
            };
            let mut next = Vec::new();
            for p in &partial {
                let env = Env { row: p, parent };
                let probe: Option<Vec<GroupKey>> = match &index {
                    None => None,
                    Some(_) => {
                        let mut key = Vec::with_capacity(step.hash_keys.len());
                        let mut scan = false;
                        let mut null = false;
                        for (e, _) in &step.hash_keys {
                            match self.eval(e, &env, None)? {
                                Value::Null => null = true,
                                Value::Dec(_) => scan = true,
                                v => key.push(v.group_key()),
                            }
                        }
                        if null {
                            continue;
                        }
                        if scan {
                            None
                        } else {
                            Some(key)
                        }
                    }
                };
                let mut consider = |r: &Row| -> XResult<()> {
                    let mut row = Vec::with_capacity(p.len() + r.len());
                    row.extend_from_slice(p);
                    row.extend_from_slice(r);
                    let env = Env { row: &row, parent };
                    for c in &step.residual {
                        if truth(&self.eval(c, &env, None)?) != Some(true) {
                            return Ok(());
                        }
                    }
                    next.push(row);
                    Ok(())
                };
                match (&index, probe) {
                    (Some(ix), Some(key)) => {
                        if let Some(hits) = ix.get(&key) {
                            for &i in hits {
                                consider(&src[i])?;
                            }
                        }
                    }
                    _ => {
                        for r in src {
                            consider(r)?;
                        }
                    }
                }
            }
            partial = next;
            if partial.is_empty() {
                break;
            }
        }
        if partial.len() == 1 && partial[0].len() < plan.width {
            // some source was empty
            partial.clear();
        }
        self.finish(plan, partial, parent)
    }

    fn finish(&self, plan: &Plan, input: Vec<Row>, parent: Option<&Env<'_>>) -> XResult<Vec<Row>> {
        let input: Vec<Row> = if plan.sources.is_empty() || input.iter().all(|r| r.len() == plan.width) {
            input
        } else {
            Vec::new()
        };
        // (output row, order keys)
        let mut out: Vec<(Row, Vec<Value>)> = Vec::new();
        let order_exprs = |row: &Row, env: &Env<'_>, grp: Option<&GroupCtx<'_>>| -> XResult<Vec<Value>> {
            let mut keys = Vec::with_capacity(plan.order.len());
            for (k, _) in &plan.order {
                keys.push(match k {
                    OrderKey::Output(i) => row[*i].clone(),
                    OrderKey::Expr(e) => self.eval(e, env, grp)?,
                });
            }
            Ok(keys)
        };
        match &plan.agg {
            None => {
                for r in &input {
                    let env = Env { row: r, parent };
                    let mut row = Vec::with_capacity(plan.projection.len());
                    for e in &plan.projection {
                        row.push(self.eval(e, &env, None)?);
                    }
                    let keys = order_exprs(&row, &env, None)?;
                    out.push((row, keys));
                }
            }
            Some(agg) => {
                let mut index: HashMap<Vec<GroupKey>, usize> = HashMap::new();
                let mut groups: Vec<(Vec<Value>, usize, Vec<Acc>)> = Vec::new();
                for (ri, r) in input.iter().enumerate() {
                    let env = Env { row: r, parent };
                    let mut kv = Vec::with_capacity(agg.keys.len());
                    for k in &agg.keys {
                        kv.push(self.eval(k, &env, None)?);
                    }
                    let gk: Vec<GroupKey> = kv.iter().map(|v| v.group_key()).collect();
                    let gi = *index.entry(gk).or_insert_with(|| {
                        groups.push((kv, ri, agg.calls.iter().map(Acc::new).collect()));
                        groups.len() - 1
                    });
                    for (ci, c) in agg.calls.iter().enumerate() {
                        let v = match &c.arg {
                            Some(a) => Some(self.eval(a, &env, None)?),
                            None => None,
                        };
                        groups[gi].2[ci].update(v)?;
                    }
                }
                let null_row: Row = vec![Value::Null; plan.width];
                if groups.is_empty() && agg.global {
                    groups.push((Vec::new(), usize::MAX, agg.calls.iter().map(Acc::new).collect()));
                }
                for (kv, first, accs) in &groups {
                    let aggs: Vec<Value> = accs.iter().map(Acc::finish).collect();
                    let grp = GroupCtx { keys: kv, aggs: &aggs };
                    let row_ref: &Row = if *first == usize::MAX { &null_row } else { &input[*first] };
                    let env = Env { row: row_ref, parent };
                    if let Some(h) = &agg.having {
                        if truth(&self.eval(h, &env, Some(&grp))?) != Some(true) {
                            continue;
                        }
                    }
                    let mut row = Vec::with_capacity(plan.projection.len());
                    for e in &plan.projection {
                        row.push(self.eval(e, &env, Some(&grp))?);
                    }
                    let keys = order_exprs(&row, &env, Some(&grp))?;
                    out.push((row, keys));
                }
            }
        }
        if plan.distinct {
            let mut seen = HashSet::new();
            out.retain(|(r, _)| seen.insert(r.iter().map(Value::group_key).collect::<Vec<_>>()));
        }
        if !plan.order.is_empty() {
            out.sort_by(|(_, a), (_, b)| {
                for ((x, y), (_, desc)) in a.iter().zip(b).zip(&plan.order) {
                    let o = x.sort_cmp(y);
                    let o = if *desc { o.reverse() } else { o };
                    if o != std::cmp::Ordering::Equal {
                        return o;
                    }
                }
                std::cmp::Ordering::Equal
            });
        }
        Ok(out.into_iter().map(|(r, _)| r).collect())
    }

    fn flush(&self) {
        let counts = self.counts.borrow();
        let mut m: BTreeMap<CounterKey, u64> = BTreeMap::new();
        for (i, c) in counts.iter().enumerate() {
            let name = &self.catalog.pairs[i].name;
            if c[0] > 0 {
                m.insert((name.clone(), Direction::ToUniversal), c[0]);
            }
            if c[1] > 0 {
                m.insert((name.clone(), Direction::FromUniversal), c[1]);
            }
        }
        self.db.add_counts(&m);
    }
}

fn binary(op: BinaryOp, l: &Value, r: &Value) -> XResult<Value> {
    use std::cmp::Ordering::*;
    Ok(match op {
        BinaryOp::Plus => l.add(r)?,
        BinaryOp::Minus => l.sub(r)?,
        BinaryOp::Multiply => l.mul(r)?,
        BinaryOp::Divide => l.div(r)?,
        _ => {
            let o = l.sql_cmp(r)?;
            boolean(o.map(|o| match op {
                BinaryOp::Eq => o == Equal,
                BinaryOp::NotEq => o != Equal,
                BinaryOp::Lt => o == Less,
                BinaryOp::LtEq => o != Greater,
                BinaryOp::Gt => o == Greater,
                BinaryOp::GtEq => o != Less,
                _ => unreachable!("logical operators handled by caller"),
            }))
        }
    })
}

fn in_values<'v>(v: &Value, items: impl Iterator<Item = &'v Value>, negated: bool) -> XResult<Value> {
    if v.is_null() {
        return Ok(Value::Null);
    }
    let mut saw_null = false;
    for it in items {
        match v.sql_cmp(it)? {
            Some(std::cmp::Ordering::Equal) => return Ok(boolean(Some(!negated))),
            None => saw_null = true,
            _ => {}
        }
    }
    Ok(if saw_null { Value::Null } else { boolean(Some(negated)) })
}

fn call(f: Func, a: &[Value]) -> XResult<Value> {
    let bad = |what: &str| ExecError::Unsupported(format!("{what}: bad arguments"));
    Ok(match f {
        Func::Coalesce => a.iter().find(|v| !v.is_null()).cloned().unwrap_or(Value::Null),
        _ if a.iter().any(Value::is_null) => Value::Null,
        Func::Substring => {
            let s = a.first().and_then(|v| v.as_str()).ok_or_else(|| bad("SUBSTRING"))?;
            let start = a.get(1).and_then(|v| v.as_i64()).ok_or_else(|| bad("SUBSTRING"))?;
            let chars: Vec<char> = s.chars().collect();
            let end = match a.get(2) {
                Some(l) => start + l.as_i64().ok_or_else(|| bad("SUBSTRING"))?.max(0),
                None => chars.len() as i64 + 1,
            };
            let lo = start.max(1) as usize - 1;
            let hi = (end.max(1) as usize - 1).min(chars.len());
            Value::text(if lo < hi { chars[lo..hi].iter().collect::<String>() } else { String::new() })
        }
        Func::Abs => match a.first() {
            Some(Value::Int(i)) => Value::Int(i.checked_abs().ok_or(ValueError::Overflow("abs"))?),
            Some(Value::Dec(d)) => Value::Dec(d.abs()),
            _ => return Err(bad("ABS")),
        },
        Func::Upper => Value::text(a.first().and_then(|v| v.as_str()).ok_or_else(|| bad("UPPER"))?.to_uppercase()),
        Func::Lower => Value::text(a.first().and_then(|v| v.as_str()).ok_or_else(|| bad("LOWER"))?.to_lowercase()),
        Func::Length => Value::Int(a.first().and_then(|v| v.as_str()).ok_or_else(|| bad("LENGTH"))?.chars().count() as i64),
        Func::Round => {
            let digits = a.get(1).map(|d| d.as_i64().ok_or_else(|| bad("ROUND"))).transpose()?.unwrap_or(0);
            match a.first() {
                Some(Value::Int(i)) => Value::Int(*i),
                Some(Value::Dec(d)) => {
                    let m = 10f64.powi(digits as i32);
                    Value::Dec((d * m).round() / m)
                }
                _ => return Err(bad("ROUND")),
            }
        }
    })
}

// ---------------------------------------------------------------------------
// entry points

fn check_layout(db: &Database) -> XResult<()> {
    if db.layout != Layout::SharedTables {
        return Err(ExecError::Layout("plain SQL runs on the shared-table layout".into()));
    }
    Ok(())
}

/// Execute a plain SQL query. Conversion calls are added to `db`'s counters.
pub fn execute(db: &Database, catalog: &Catalog, q: &Query) -> XResult<Relation> {
    check_layout(db)?;
    let compiler = Compiler {
        db,
        catalog,
        meta: RefCell::new(None),
    };
    let plan = compiler.compile_query(q, &[])?;
    let runner = Runner {
        db,
        catalog,
        counts: RefCell::new(vec![[0, 0]; catalog.pairs.len()]),
    };
    let rows = runner.run(&plan, None);
    runner.flush();
    Ok(Relation {
        columns: plan.columns.clone(),
        rows: rows?,
        ordered: !q.order_by.is_empty(),
    })
}

/// Outcome of a data-modifying statement.
#[derive(Debug, Clone, PartialEq)]
pub struct StatementOutcome {
    pub relation: Option<Relation>,
    pub affected: usize,
}

/// Execute a plain SQL query or DML statement against the shared layout.
pub fn execute_statement(db: &mut Database, catalog: &Catalog, s: &Statement) -> XResult<StatementOutcome> {
    check_layout(db)?;
    match s {
        Statement::Query(q) => Ok(StatementOutcome {
            relation: Some(execute(db, catalog, q)?),
            affected: 0,
        }),
        Statement::Insert(ins) => {
            let rows: Vec<Row> = match &ins.source {
                InsertSource::Query(q) => execute(db, catalog, q)?.rows,
                InsertSource::Values(vals) => {
                    let compiler = Compiler {
                        db,
                        catalog,
                        meta: RefCell::new(None),
                    };
                    let runner = Runner {
                        db,
                        catalog,
                        counts: RefCell::new(vec![[0, 0]; catalog.pairs.len()]),
                    };
                    let mut out = Vec::new();
                    let env = Env { row: &[], parent: None };
                    for row in vals {
                        let mut r = Vec::new();
                        for e in row {
                            let c = compiler.compile_expr(e, &[Scope::default()], None)?;
                            r.push(runner.eval(&c, &env, None)?);
                        }
                        out.push(r);
                    }
                    runner.flush();
                    out
                }
            };
            let n = rows.len();
            insert_rows(db, catalog, &ins.table, &ins.columns, rows)?;
            Ok(StatementOutcome {
                relation: None,
                affected: n,
            })
        }
        Statement::Update(u) => {
            let (matches, new_values) = {
                let shared: &Database = db;
                let rel = shared.table(&u.table).ok_or_else(|| ExecError::UnknownTable(u.table.clone()))?;
                let scope = single_scope(&u.table, rel);
                let compiler = Compiler {
                    db: shared,
                    catalog,
                    meta: RefCell::new(None),
                };
                let cond = match &u.where_clause {
                    Some(w) => Some(compiler.compile_expr(w, &[scope.clone()], None)?),
                    None => None,
                };
                let mut assigns = Vec::new();
                for (col, e) in &u.assignments {
                    let idx = rel.column_index(col).ok_or_else(|| ExecError::UnknownColumn(col.clone()))?;
                    assigns.push((idx, compiler.compile_expr(e, &[scope.clone()], None)?));
                }
                let runner = Runner {
                    db: shared,
                    catalog,
                    counts: RefCell::new(vec![[0, 0]; catalog.pairs.len()]),
                };
                let mut matches = Vec::new();
                let mut new_values = Vec::new();
                for (i, r) in rel.rows.iter().enumerate() {
                    let env = Env { row: r, parent: None };
                    let hit = match &cond {
                        Some(c) => truth(&runner.eval(c, &env, None)?) == Some(true),
                        None => true,
                    };
                    if hit {
                        let mut vals = Vec::new();
                        for (idx, e) in &assigns {
                            let v = runner.eval(e, &env, None)?;
                            let ty = rel.columns[*idx].ty;
                            vals.push((*idx, coerce(v, ty)?));
                        }
                        matches.push(i);
                        new_values.push(vals);
                    }
                }
                runner.flush();
                (matches, new_values)
            };
            let rel = db.table_mut(&u.table).expect("checked");
            for (i, vals) in matches.iter().zip(new_values) {
                for (idx, v) in vals {
                    if v.is_null() && column_not_null(catalog, &u.table, &rel.columns[idx].name) {
                        return Err(ExecError::NotNull(rel.columns[idx].name.clone()));
                    }
                    rel.rows[*i][idx] = v;
                }
            }
            Ok(StatementOutcome {
                relation: None,
                affected: matches.len(),
            })
        }
        Statement::Delete(d) => {
            let doomed: Vec<bool> = {
                let shared: &Database = db;
                let rel = shared.table(&d.table).ok_or_else(|| ExecError::UnknownTable(d.table.clone()))?;
                let scope = single_scope(&d.table, rel);
                let compiler = Compiler {
                    db: shared,
                    catalog,
                    meta: RefCell::new(None),
                };
                let runner = Runner {
                    db: shared,
                    catalog,
                    counts: RefCell::new(vec![[0, 0]; catalog.pairs.len()]),
                };
                let cond = match &d.where_clause {
                    Some(w) => Some(compiler.compile_expr(w, &[scope], None)?),
                    None => None,
                };
                let mut out = Vec::new();
                for r in &rel.rows {
                    let env = Env { row: r, parent: None };
                    out.push(match &cond {
                        Some(c) => truth(&runner.eval(c, &env, None)?) == Some(true),
                        None => true,
                    });
                }
                runner.flush();
                out
            };
            let rel = db.table_mut(&d.table).expect("checked");
            let mut it = doomed.iter();
            let before = rel.rows.len();
            rel.rows.retain(|_| !*it.next().unwrap());
            Ok(StatementOutcome {
                relation: None,
                affected: before - rel.rows.len(),
            })
        }
        other => Err(ExecError::Unsupported(format!("statement kind: {}", statement_kind(other)))),
    }
}

pub(crate) fn statement_kind(s: &Statement) -> &'static str {
    match s {
        Statement::Query(_) => "SELECT",
        Statement::CreateTable(_) => "CREATE TABLE",
        Statement::CreateView { .. } => "CREATE VIEW",
        Statement::DropTable { .. } => "DROP TABLE",
        Statement::DropView { .. } => "DROP VIEW",
        Statement::AlterTable { .. } => "ALTER TABLE",
        Statement::Insert(_) => "INSERT",
        Statement::Update(_) => "UPDATE",
        Statement::Delete(_) => "DELETE",
        Statement::Grant(_) => "GRANT",
        Statement::Revoke(_) => "REVOKE",
        Statement::SetScope(_) => "SET SCOPE",
    }
}

fn single_scope(table: &str, rel: &Relation) -> Scope {
    Scope {
        sources: vec![ScopeSource {
            qualifier: table.to_string(),
            columns: rel.columns.clone(),
            offset: 0,
        }],
    }
}

fn coerce(v: Value, ty: Option<ScalarType>) -> XResult<Value> {
    Ok(match ty {
        Some(t) => v.coerce_to(t)?,
        None => v,
    })
}

fn column_not_null(catalog: &Catalog, table: &str, column: &str) -> bool {
    match catalog.table(table) {
        Some(def) => {
            def.ttid_column.as_deref().is_some_and(|t| t.eq_ignore_ascii_case(column))
                || def.column(column).is_some_and(|c| c.not_null)
        }
        None => false,
    }
}

fn insert_rows(db: &mut Database, catalog: &Catalog, table: &str, columns: &[String], rows: Vec<Row>) -> XResult<()> {
    let rel = db.table_mut(table).ok_or_else(|| ExecError::UnknownTable(table.to_string()))?;
    let targets: Vec<usize> = if columns.is_empty() {
        (0..rel.columns.len()).collect()
    } else {
        columns
            .iter()
            .map(|c| rel.column_index(c).ok_or_else(|| ExecError::UnknownColumn(c.clone())))
            .collect::<XResult<_>>()?
    };
    let def = catalog.table(table);
    let mut staged = Vec::new();
    for r in rows {
        if r.len() != targets.len() {
            return Err(ExecError::Unsupported(format!(
                "INSERT supplies {} values for {} columns",
                r.len(),
                targets.len()
            )));
        }
        let mut full: Row = rel
            .columns
            .iter()
            .map(|c| {
                def.and_then(|d| d.column(&c.name))
                    .and_then(|m| m.default.clone())
                    .unwrap_or(Value::Null)
            })
            .collect();
        for (v, &i) in r.into_iter().zip(&targets) {
            full[i] = coerce(v, rel.columns[i].ty)?;
        }
        for (i, c) in rel.columns.iter().enumerate() {
            if full[i].is_null() && column_not_null(catalog, table, &c.name) {
                return Err(ExecError::NotNull(c.name.clone()));
            }
        }
        staged.push(full);
    }
    rel.rows.extend(staged);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_query;

    fn db() -> (Database, Catalog) {
        let mut db = Database::new(Layout::SharedTables);
        db.insert_table(
            "t",
            Relation::with_rows(
                vec![Column::new("a", Some(ScalarType::Int)), Column::new("b", Some(ScalarType::Text))],
                vec![
                    vec![Value::Int(1), Value::text("x")],
                    vec![Value::Int(2), Value::text("y")],
                    vec![Value::Int(2), Value::Null],
                ],
            ),
        );
        db.insert_table(
            "s",
            Relation::with_rows(
                vec![Column::new("k", Some(ScalarType::Int)), Column::new("v", Some(ScalarType::Decimal))],
                vec![vec![Value::Int(2), Value::Dec(1.5)], vec![Value::Int(3), Value::Dec(2.5)]],
            ),
        );
        (db, Catalog::new())
    }

    fn run(sql: &str) -> Relation {
        let (db, cat) = db();
        execute(&db, &cat, &parse_query(sql).unwrap()).unwrap()
    }

    #[test]
    fn joins_filters_and_aggregates() {
        let r = run("SELECT a, COUNT(*) AS n, SUM(v) FROM t, s WHERE a = k GROUP BY a");
        assert_eq!(r.rows, vec![vec![Value::Int(2), Value::Int(2), Value::Dec(3.0)]]);
        let r = run("SELECT COUNT(b), COUNT(*), MAX(a), AVG(a) FROM t");
        assert_eq!(r.rows[0][0], Value::Int(2));
        assert_eq!(r.rows[0][1], Value::Int(3));
        assert_eq!(r.rows[0][2], Value::Int(2));
        let r = run("SELECT COUNT(*), SUM(a) FROM t WHERE a > 10");
        assert_eq!(r.rows, vec![vec![Value::Int(0), Value::Null]]);
        let r = run("SELECT a FROM t WHERE a > 10 GROUP BY a");
        assert!(r.is_empty());
    }

    #[test]
    fn subqueries_correlated_and_not() {
        let r = run("SELECT a FROM t WHERE EXISTS (SELECT * FROM s WHERE s.k = t.a)");
        assert_eq!(r.len(), 2);
        let r = run("SELECT a FROM t WHERE a IN (SELECT k FROM s) AND b IS NOT NULL");
        assert_eq!(r.rows, vec![vec![Value::Int(2)]]);
        let r = run("SELECT a, (SELECT MAX(v) FROM s WHERE k >= a) AS m FROM t ORDER BY a DESC, m");
        assert_eq!(r.rows[0][1], Value::Dec(2.5));
        assert!(r.ordered);
        let r = run("SELECT x.a FROM (SELECT DISTINCT a FROM t) AS x ORDER BY x.a");
        assert_eq!(r.rows, vec![vec![Value::Int(1)], vec![Value::Int(2)]]);
    }

    #[test]
    fn null_semantics_of_in() {
        let r = run("SELECT a FROM t WHERE b NOT IN ('x')");
        assert_eq!(r.rows, vec![vec![Value::Int(2)]]);
    }

    #[test]
    fn functions() {
        let r = run("SELECT SUBSTRING('0041791234567', 1, 2), COALESCE(NULL, 3), ROUND(2.345, 2), LENGTH('abc') FROM s WHERE k = 2");
        assert_eq!(
            r.rows[0],
            vec![Value::text("00"), Value::Int(3), Value::Dec(2.35), Value::Int(3)]
        );
    }

    #[test]
    fn dml_roundtrip() {
        let (mut db, cat) = db();
        let ins = crate::parser::parse("INSERT INTO s (k, v) VALUES (9, 1.005)").unwrap();
        execute_statement(&mut db, &cat, &ins).unwrap();
        assert_eq!(db.table("s").unwrap().len(), 3);
        let up = crate::parser::parse("UPDATE s SET v = v * 2 WHERE k = 9").unwrap();
        assert_eq!(execute_statement(&mut db, &cat, &up).unwrap().affected, 1);
        let del = crate::parser::parse("DELETE FROM s WHERE k > 2").unwrap();
        assert_eq!(execute_statement(&mut db, &cat, &del).unwrap().affected, 2);
    }
}
