//! Special cases of C and D: full scope, single tenant, own data.

use std::collections::BTreeSet;

use super::{as_wrapped, map_level_exprs, map_query_tree, rewrite_bottom_up};
use crate::ast::*;
use crate::rewriter::RewriteContext;
use crate::tenant::TenantId;

fn ttid_names(ctx: &RewriteContext<'_>) -> BTreeSet<String> {
    ctx.catalog
        .tables
        .iter()
        .filter_map(|t| t.ttid_column.as_ref().map(|c| c.to_ascii_lowercase()))
        .collect()
}

fn is_owner_ref(e: &Expr, names: &BTreeSet<String>) -> bool {
    match e {
        Expr::Column(c) => {
            let n = c.name.to_ascii_lowercase();
            names.contains(&n) || n.ends_with("_ttid")
        }
        // owner of a tenant-specific scalar sub-query
        Expr::Subquery(q) => matches!(
            q.select.as_slice(),
            [SelectItem::Expr { expr, .. }] if is_owner_ref(expr, names) && !matches!(expr, Expr::Subquery(_))
        ),
        _ => false,
    }
}

fn is_dfilter(e: &Expr, names: &BTreeSet<String>, dataset: &BTreeSet<TenantId>) -> bool {
    let Expr::InList {
        expr,
        list,
        negated: false,
    } = e
    else {
        return false;
    };
    let Expr::Column(c) = expr.as_ref() else {
        return false;
    };
    if !names.contains(&c.name.to_ascii_lowercase()) {
        return false;
    }
    let mut ts = BTreeSet::new();
    for item in list {
        match item {
            Expr::Literal(Literal::Int(i)) if *i >= 0 => {
                ts.insert(TenantId(*i as u32));
            }
            _ => return false,
        }
    }
    &ts == dataset
}

/// Drop `owner = owner` conjuncts under AND; `None` when nothing remains.
fn drop_owner_equalities(e: Expr, names: &BTreeSet<String>) -> Option<Expr> {
    match e {
        Expr::Binary {
            op: BinaryOp::And,
            left,
            right,
        } => match (drop_owner_equalities(*left, names), drop_owner_equalities(*right, names)) {
            (Some(l), Some(r)) => Some(Expr::and(l, r)),
            (l, r) => l.or(r),
        },
        Expr::Binary {
            op: BinaryOp::Eq,
            ref left,
            ref right,
        } if is_owner_ref(left, names) && is_owner_ref(right, names) => None,
        other => Some(other.map_children(&mut |c| keep_or_true(c, names))),
    }
}

fn keep_or_true(e: Expr, names: &BTreeSet<String>) -> Expr {
    match e {
        Expr::Binary { op: BinaryOp::And, .. } => {
            // an AND whose every conjunct vanished is TRUE
            drop_owner_equalities(e, names).unwrap_or_else(|| Expr::eq(Expr::int(1), Expr::int(1)))
        }
        other => other.map_children(&mut |c| keep_or_true(c, names)),
    }
}

pub fn apply_trivial(ctx: &RewriteContext<'_>, q: Query) -> Query {
    let names = ttid_names(ctx);
    let all = ctx.dataset == ctx.catalog.tenants;
    let single = ctx.dataset.len() == 1;
    let own = single && ctx.dataset.contains(&ctx.client);
    let client = ctx.client;
    map_query_tree(q, &mut |mut q| {
        if all {
            q.where_clause = q
                .where_clause
                .and_then(|w| conjoin(conjuncts(w).into_iter().filter(|c| !is_dfilter(c, &names, &ctx.dataset))));
        }
        if single {
            q.where_clause = q.where_clause.and_then(|w| drop_owner_equalities(w, &names));
            q = map_level_exprs(q, &mut |e| keep_or_true(e, &names));
            q.from = q.from.into_iter().map(|f| strip_join_owner_eq(f, &names)).collect();
        }
        if own {
            q = map_level_exprs(q, &mut |e| {
                rewrite_bottom_up(e, &mut |x| match as_wrapped(&x, client) {
                    Some((_, v, _)) => v.clone(),
                    None => x,
                })
            });
        }
        q
    })
}

fn strip_join_owner_eq(f: FromItem, names: &BTreeSet<String>) -> FromItem {
    match f {
        FromItem::Join { left, right, on } => FromItem::Join {
            left: Box::new(strip_join_owner_eq(*left, names)),
            right: Box::new(strip_join_owner_eq(*right, names)),
            on: drop_owner_equalities(on, names).unwrap_or_else(|| Expr::eq(Expr::int(1), Expr::int(1))),
        },
        other => other,
    }
}
