//! Result-preserving passes over canonical rewrites, composed per level.

mod distribute;
mod inline;
mod pushup;
mod trivial;

use std::fmt;
use std::str::FromStr;

use crate::ast::*;
use crate::rewriter::{check_mt_free, RewriteContext};
use crate::tenant::TenantId;

pub use distribute::distribute_aggregates;
pub use inline::{inline_call, inline_conversions, NotInlinable};
pub use pushup::{push_up_client_presentation, push_up_conversion};
pub use trivial::apply_trivial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptimizationLevel {
    Canonical,
    O1,
    O2,
    O3,
    O4,
    InlOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pass {
    Trivial,
    ClientPresentation,
    ConversionPushUp,
    Distribution,
    Inlining,
}

impl OptimizationLevel {
    pub const ALL: [OptimizationLevel; 6] = [
        OptimizationLevel::Canonical,
        OptimizationLevel::O1,
        OptimizationLevel::O2,
        OptimizationLevel::O3,
        OptimizationLevel::O4,
        OptimizationLevel::InlOnly,
    ];

    pub fn passes(self) -> &'static [Pass] {
        use Pass::*;
        match self {
            OptimizationLevel::Canonical => &[],
            OptimizationLevel::O1 => &[Trivial],
            OptimizationLevel::O2 => &[Trivial, ClientPresentation, ConversionPushUp],
            OptimizationLevel::O3 => &[Trivial, ClientPresentation, ConversionPushUp, Distribution],
            OptimizationLevel::O4 => &[Trivial, ClientPresentation, ConversionPushUp, Distribution, Inlining],
            OptimizationLevel::InlOnly => &[Trivial, Inlining],
        }
    }
}

impl fmt::Display for OptimizationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizationLevel::Canonical => "canonical",
            OptimizationLevel::O1 => "o1",
            OptimizationLevel::O2 => "o2",
            OptimizationLevel::O3 => "o3",
            OptimizationLevel::O4 => "o4",
            OptimizationLevel::InlOnly => "inl-only",
        })
    }
}

impl FromStr for OptimizationLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "canonical" => OptimizationLevel::Canonical,
            "o1" => OptimizationLevel::O1,
            "o2" => OptimizationLevel::O2,
            "o3" => OptimizationLevel::O3,
            "o4" => OptimizationLevel::O4,
            "inl-only" | "inlonly" => OptimizationLevel::InlOnly,
            other => return Err(format!("unknown optimization level '{other}'")),
        })
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pass::Trivial => "trivial",
            Pass::ClientPresentation => "client-presentation push-up",
            Pass::ConversionPushUp => "conversion push-up",
            Pass::Distribution => "aggregation distribution",
            Pass::Inlining => "function inlining",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error("pass {pass} produced MTSQL-only constructs: {detail}")]
    NotMtFree { pass: String, detail: String },
}

/// One pass application, for `--explain`.
#[derive(Debug, Clone)]
pub struct PassReport {
    pub pass: Pass,
    pub before: String,
    pub after: String,
}

impl PassReport {
    pub fn changed(&self) -> bool {
        self.before != self.after
    }
}

pub fn apply_pass(ctx: &RewriteContext<'_>, pass: Pass, q: Query) -> Query {
    match pass {
        Pass::Trivial => apply_trivial(ctx, q),
        Pass::ClientPresentation => push_up_client_presentation(ctx, q),
        Pass::ConversionPushUp => push_up_conversion(ctx, q),
        Pass::Distribution => distribute_aggregates(ctx, q),
        Pass::Inlining => inline_conversions(ctx, q),
    }
}

/// Apply the passes of `level` to a canonical rewrite.
pub fn optimize(ctx: &RewriteContext<'_>, q: Query, level: OptimizationLevel) -> Result<Query, OptimizeError> {
    Ok(optimize_explained(ctx, q, level)?.0)
}

pub fn optimize_explained(
    ctx: &RewriteContext<'_>,
    mut q: Query,
    level: OptimizationLevel,
) -> Result<(Query, Vec<PassReport>), OptimizeError> {
    let mut reports = Vec::new();
    for &pass in level.passes() {
        let before = q.to_string();
        q = apply_pass(ctx, pass, q);
        let stmt = Statement::Query(q);
        check_mt_free(&stmt).map_err(|detail| OptimizeError::NotMtFree {
            pass: pass.to_string(),
            detail,
        })?;
        let Statement::Query(out) = stmt else { unreachable!() };
        q = out;
        reports.push(PassReport {
            pass,
            before,
            after: q.to_string(),
        });
    }
    Ok((q, reports))
}

// -- tree helpers -------------------------------------------------------------

/// Apply `f` to every query of the tree, innermost first.
pub(crate) fn map_query_tree(q: Query, f: &mut dyn FnMut(Query) -> Query) -> Query {
    let q = map_child_queries(q, f);
    f(q)
}

fn map_child_queries(q: Query, f: &mut dyn FnMut(Query) -> Query) -> Query {
    let Query {
        distinct,
        select,
        from,
        where_clause,
        group_by,
        having,
        order_by,
    } = q;
    let mut deep = |e: Expr| map_expr_queries(e, f);
    let select = select
        .into_iter()
        .map(|s| match s {
            SelectItem::Expr { expr, alias } => SelectItem::Expr {
                expr: deep(expr),
                alias,
            },
            other => other,
        })
        .collect();
    let where_clause = where_clause.map(&mut deep);
    let group_by = group_by.into_iter().map(&mut deep).collect();
    let having = having.map(&mut deep);
    drop(deep);
    let from = from.into_iter().map(|item| map_from_queries(item, f)).collect();
    Query {
        distinct,
        select,
        from,
        where_clause,
        group_by,
        having,
        order_by,
    }
}

fn map_from_queries(item: FromItem, f: &mut dyn FnMut(Query) -> Query) -> FromItem {
    match item {
        t @ FromItem::Table { .. } => t,
        FromItem::Derived { query, alias } => FromItem::Derived {
            query: Box::new(map_query_tree(*query, f)),
            alias,
        },
        FromItem::Join { left, right, on } => FromItem::Join {
            left: Box::new(map_from_queries(*left, f)),
            right: Box::new(map_from_queries(*right, f)),
            on: map_expr_queries(on, f),
        },
    }
}

fn map_expr_queries(e: Expr, f: &mut dyn FnMut(Query) -> Query) -> Expr {
    match e {
        Expr::Subquery(q) => Expr::Subquery(Box::new(map_query_tree(*q, f))),
        Expr::Exists { query, negated } => Expr::Exists {
            query: Box::new(map_query_tree(*query, f)),
            negated,
        },
        Expr::InSubquery { expr, query, negated } => Expr::InSubquery {
            expr: Box::new(map_expr_queries(*expr, f)),
            query: Box::new(map_query_tree(*query, f)),
            negated,
        },
        other => other.map_children(&mut |c| map_expr_queries(c, f)),
    }
}

/// Apply `g` to each expression owned by this query level (ORDER BY excluded).
pub(crate) fn map_level_exprs(mut q: Query, g: &mut dyn FnMut(Expr) -> Expr) -> Query {
    q.select = q
        .select
        .into_iter()
        .map(|s| match s {
            SelectItem::Expr { expr, alias } => SelectItem::Expr { expr: g(expr), alias },
            other => other,
        })
        .collect();
    fn on_exprs(item: FromItem, g: &mut dyn FnMut(Expr) -> Expr) -> FromItem {
        match item {
            FromItem::Join { left, right, on } => FromItem::Join {
                left: Box::new(on_exprs(*left, g)),
                right: Box::new(on_exprs(*right, g)),
                on: g(on),
            },
            other => other,
        }
    }
    q.from = q.from.into_iter().map(|f| on_exprs(f, g)).collect();
    q.where_clause = q.where_clause.map(&mut *g);
    q.group_by = q.group_by.into_iter().map(&mut *g).collect();
    q.having = q.having.map(&mut *g);
    q
}

/// Rewrite every node bottom-up. Nested queries are not entered.
pub(crate) fn rewrite_bottom_up(e: Expr, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
    let e = e.map_children(&mut |c| rewrite_bottom_up(c, f));
    f(e)
}

/// `pairFromUniversal(pairToUniversal(x, owner), C)` shape.
pub(crate) fn as_wrapped(e: &Expr, client: TenantId) -> Option<(&str, &Expr, &Expr)> {
    let (pair, inner) = as_from_client(e, client)?;
    match inner {
        Expr::Convert {
            pair: p2,
            direction: Direction::ToUniversal,
            value,
            tenant,
        } if p2 == pair => Some((pair, value, tenant)),
        _ => None,
    }
}

/// `pairFromUniversal(u, C)` shape.
pub(crate) fn as_from_client(e: &Expr, client: TenantId) -> Option<(&str, &Expr)> {
    match e {
        Expr::Convert {
            pair,
            direction: Direction::FromUniversal,
            value,
            tenant,
        } if is_tenant_literal(tenant, client) => Some((pair, value)),
        _ => None,
    }
}

pub(crate) fn is_tenant_literal(e: &Expr, t: TenantId) -> bool {
    matches!(e, Expr::Literal(Literal::Int(i)) if *i == t.0 as i64)
}

pub(crate) fn contains_convert(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |x| {
        if matches!(x, Expr::Convert { .. }) {
            found = true;
        }
    });
    found
}

pub(crate) fn contains_subquery(e: &Expr) -> bool {
    !e.subqueries().is_empty()
}

pub(crate) fn contains_column(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |x| {
        if matches!(x, Expr::Column(_)) {
            found = true;
        }
    });
    found
}

/// Literal-only expression (no columns, no sub-queries).
pub(crate) fn is_constant(e: &Expr) -> bool {
    !contains_column(e) && !contains_subquery(e) && !e.contains_aggregate()
}

#[cfg(test)]
mod tests;
