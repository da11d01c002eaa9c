//! Deferring conversions: compare in universal format, convert constants
//! instead of attributes, and move conversions of derived-table outputs to
//! the consuming query.

use std::collections::BTreeSet;

use super::{as_from_client, as_wrapped, contains_subquery, is_constant, map_level_exprs, map_query_tree, rewrite_bottom_up};
use crate::ast::*;
use crate::conversion::{ConversionClass, PairKind};
use crate::value::Value;
use crate::rewriter::RewriteContext;

fn class(ctx: &RewriteContext<'_>, pair: &str) -> ConversionClass {
    ctx.catalog
        .pair(pair)
        .map(|p| p.classify())
        .unwrap_or(ConversionClass::EqualityPreserving)
}

/// Whether comparison `op` survives a change of format through `pair`.
fn gate(ctx: &RewriteContext<'_>, pair: &str, op: BinaryOp) -> bool {
    !op.is_ordering() || class(ctx, pair) >= ConversionClass::OrderPreserving
}

fn flipped(op: BinaryOp) -> BinaryOp {
    match op {
        BinaryOp::Lt => BinaryOp::Gt,
        BinaryOp::LtEq => BinaryOp::GtEq,
        BinaryOp::Gt => BinaryOp::Lt,
        BinaryOp::GtEq => BinaryOp::LtEq,
        other => other,
    }
}

fn to_universal(pair: &str, x: Expr, t: Expr) -> Expr {
    Expr::convert(pair, Direction::ToUniversal, x, t)
}

fn from_universal(pair: &str, x: Expr, t: Expr) -> Expr {
    Expr::convert(pair, Direction::FromUniversal, x, t)
}

fn client_expr(ctx: &RewriteContext<'_>) -> Expr {
    Expr::int(ctx.client.0 as i64)
}

/// `fromU(a, C) op fromU(b, C)` becomes `a op b`.
fn strip_client_presentation(ctx: &RewriteContext<'_>, e: Expr) -> Expr {
    rewrite_bottom_up(e, &mut |x| {
        if let Expr::Binary { op, left, right } = &x {
            if op.is_comparison() {
                if let (Some((p1, a)), Some((p2, b))) = (as_from_client(left, ctx.client), as_from_client(right, ctx.client)) {
                    if p1 == p2 && gate(ctx, p1, *op) {
                        return Expr::binary(*op, a.clone(), b.clone());
                    }
                }
            }
        }
        x
    })
}

fn literal(e: &Expr) -> Option<Value> {
    match e {
        Expr::Literal(l) => Some(l.to_value()),
        Expr::Unary { op: UnaryOp::Neg, expr } => literal(expr).and_then(|v| v.neg().ok()),
        _ => None,
    }
}

/// Converting the constant must not fail where converting the attribute
/// would not: linear pairs are total, prefix pairs only on the client's own
/// prefix.
fn flippable(ctx: &RewriteContext<'_>, pair: &str, k: &Expr) -> bool {
    let Some(p) = ctx.catalog.pair(pair) else { return false };
    match &p.kind {
        PairKind::Linear { .. } => true,
        PairKind::PrefixMap { .. } => literal(k).is_some_and(|v| p.to_universal(ctx.client, &v).is_ok()),
        PairKind::Opaque { .. } => false,
    }
}

/// Convert a constant into the format of the other side of a comparison.
fn flip_side(ctx: &RewriteContext<'_>, side: &Expr, k: &Expr, op: BinaryOp) -> Option<(Expr, Expr)> {
    if let Some((p, x, o)) = as_wrapped(side, ctx.client) {
        if gate(ctx, p, op) && flippable(ctx, p, k) {
            let k = from_universal(p, to_universal(p, k.clone(), client_expr(ctx)), o.clone());
            return Some((x.clone(), k));
        }
        return None;
    }
    if let Some((p, u)) = as_from_client(side, ctx.client) {
        if gate(ctx, p, op) && flippable(ctx, p, k) {
            return Some((u.clone(), to_universal(p, k.clone(), client_expr(ctx))));
        }
    }
    None
}

/// Comparisons against constants convert the constant.
fn flip_constants(ctx: &RewriteContext<'_>, e: Expr) -> Expr {
    rewrite_bottom_up(e, &mut |x| match &x {
        Expr::Binary { op, left, right } if op.is_comparison() => {
            if is_constant(right) {
                if let Some((l, k)) = flip_side(ctx, left, right, *op) {
                    return Expr::binary(*op, l, k);
                }
            }
            if is_constant(left) {
                if let Some((r, k)) = flip_side(ctx, right, left, flipped(*op)) {
                    return Expr::binary(*op, k, r);
                }
            }
            x
        }
        Expr::InList { expr, list, negated } if list.iter().all(is_constant) && !list.is_empty() => {
            let mut items = Vec::new();
            let mut side = None;
            for k in list {
                match flip_side(ctx, expr, k, BinaryOp::Eq) {
                    Some((s, k2)) => {
                        side = Some(s);
                        items.push(k2);
                    }
                    None => return x,
                }
            }
            Expr::InList {
                expr: Box::new(side.expect("non-empty list")),
                list: items,
                negated: *negated,
            }
        }
        _ => x,
    })
}

/// Output names of a query, position-based for unaliased expressions.
fn output_names(q: &Query) -> Option<Vec<String>> {
    q.select
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            SelectItem::Expr { expr, alias } => Some(output_name(expr, alias.as_deref(), i)),
            _ => None,
        })
        .collect()
}

/// Column names visible from each FROM source of `q`, `None` when unknown.
fn source_columns(ctx: &RewriteContext<'_>, q: &Query) -> Vec<(String, Option<Vec<String>>)> {
    let mut out = Vec::new();
    fn walk(ctx: &RewriteContext<'_>, f: &FromItem, out: &mut Vec<(String, Option<Vec<String>>)>) {
        match f {
            FromItem::Table { name, alias } => {
                let cols = if let Some(t) = ctx.catalog.table(name) {
                    Some(t.shared_columns().into_iter().map(|(n, _)| n).collect())
                } else if let Some(v) = ctx.catalog.view(name) {
                    Some(v.columns.clone())
                } else {
                    ctx.catalog
                        .meta_tables()
                        .into_iter()
                        .find(|m| m.name.eq_ignore_ascii_case(name))
                        .map(|m| m.columns.into_iter().map(|(n, _)| n).collect())
                };
                out.push((alias.clone().unwrap_or_else(|| name.clone()), cols));
            }
            FromItem::Derived { query, alias } => out.push((alias.clone(), output_names(query))),
            FromItem::Join { left, right, .. } => {
                walk(ctx, left, out);
                walk(ctx, right, out);
            }
        }
    }
    for f in &q.from {
        walk(ctx, f, &mut out);
    }
    out
}

/// Whether a nested query of `q` mentions a column called `name`.
fn nested_mentions(q: &Query, name: &str) -> bool {
    let mut found = false;
    for e in q.expressions() {
        for sub in e.subqueries() {
            sub.walk_queries(&mut |n| {
                for x in n.expressions() {
                    x.walk(&mut |c| {
                        if let Expr::Column(c) = c {
                            if c.name.eq_ignore_ascii_case(name) {
                                found = true;
                            }
                        }
                    });
                }
            });
        }
    }
    found
}

/// Replace references to `alias.name` in `q`'s own expressions.
fn substitute(q: Query, alias: &str, name: &str, unqualified_ok: bool, with: &dyn Fn(Expr) -> Expr) -> Query {
    let hits = |c: &ColumnRef| {
        c.name.eq_ignore_ascii_case(name)
            && match &c.qualifier {
                Some(qual) => qual.eq_ignore_ascii_case(alias),
                None => unqualified_ok,
            }
    };
    let mut q = q;
    // bare references keep their output name
    for s in q.select.iter_mut() {
        if let SelectItem::Expr { expr: Expr::Column(c), alias: a @ None } = s {
            if hits(c) {
                *a = Some(c.name.clone());
            }
        }
    }
    map_level_exprs(q, &mut |e| {
        rewrite_bottom_up(e, &mut |x| match &x {
            Expr::Column(c) if hits(c) => with(x),
            _ => x,
        })
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Delay {
    /// Inner keeps `toU(x, o)`; consumer applies `fromU(·, C)`.
    ClientPresentation,
    /// Inner keeps raw `x` and exports `o`; consumer converts.
    Conversion,
}

fn delay_derived(ctx: &RewriteContext<'_>, mut q: Query, mode: Delay) -> Query {
    let sources = source_columns(ctx, &q);
    let mut from = std::mem::take(&mut q.from);
    let mut subs: Vec<(String, String, bool, Box<dyn Fn(Expr) -> Expr>)> = Vec::new();
    for item in from.iter_mut() {
        collect_delays(ctx, item, &sources, &q, mode, &mut subs);
    }
    q.from = from;
    for (alias, name, unq, with) in subs {
        q = substitute(q, &alias, &name, unq, with.as_ref());
    }
    q
}

type Substitution = (String, String, bool, Box<dyn Fn(Expr) -> Expr>);

fn collect_delays(
    ctx: &RewriteContext<'_>,
    item: &mut FromItem,
    sources: &[(String, Option<Vec<String>>)],
    consumer: &Query,
    mode: Delay,
    subs: &mut Vec<Substitution>,
) {
    let (query, alias) = match item {
        FromItem::Derived { query, alias } => (query, alias.clone()),
        FromItem::Join { left, right, .. } => {
            collect_delays(ctx, left, sources, consumer, mode, subs);
            collect_delays(ctx, right, sources, consumer, mode, subs);
            return;
        }
        FromItem::Table { .. } => return,
    };
    if query.is_aggregated() || (mode == Delay::Conversion && query.distinct) {
        return;
    }
    let Some(names) = output_names(query) else { return };
    let mut taken: BTreeSet<String> = names.iter().map(|n| n.to_ascii_lowercase()).collect();
    let client = ctx.client;
    let mut extra = Vec::new();
    for (i, name) in names.iter().enumerate() {
        // unqualified references resolve here only if no other source has the name
        let shared = sources.iter().any(|(q, cols)| {
            !q.eq_ignore_ascii_case(&alias)
                && cols
                    .as_ref()
                    .is_none_or(|cs| cs.iter().any(|c| c.eq_ignore_ascii_case(name)))
        });
        if nested_mentions(consumer, name) {
            continue;
        }
        let SelectItem::Expr { expr, alias: item_alias } = &mut query.select[i] else { continue };
        if contains_subquery(expr) {
            continue;
        }
        let pair_of = |e: &Expr| as_wrapped(e, client).map(|(p, x, o)| (p.to_string(), x.clone(), o.clone()));
        match mode {
            Delay::ClientPresentation => {
                let Some((p, x, o)) = pair_of(expr) else { continue };
                *expr = to_universal(&p, x, o);
                *item_alias = Some(name.clone());
                let c = client;
                subs.push((
                    alias.clone(),
                    name.clone(),
                    !shared,
                    Box::new(move |r| from_universal(&p, r, Expr::int(c.0 as i64))),
                ));
            }
            Delay::Conversion => {
                let (p, x, o, wrapped) = if let Some((p, x, o)) = pair_of(expr) {
                    (p, x, o, true)
                } else if let Expr::Convert {
                    pair,
                    direction: Direction::ToUniversal,
                    value,
                    tenant,
                } = expr
                {
                    (pair.clone(), (**value).clone(), (**tenant).clone(), false)
                } else {
                    continue;
                };
                if !matches!(x, Expr::Column(_)) || !matches!(o, Expr::Column(_)) {
                    continue;
                }
                let mut owner_name = format!("{name}_ttid");
                while taken.contains(&owner_name.to_ascii_lowercase()) {
                    owner_name.push('_');
                }
                taken.insert(owner_name.to_ascii_lowercase());
                *expr = x;
                *item_alias = Some(name.clone());
                extra.push(SelectItem::expr(o, Some(&owner_name)));
                let (a, c) = (alias.clone(), client);
                subs.push((
                    alias.clone(),
                    name.clone(),
                    !shared,
                    Box::new(move |r| {
                        let owner = Expr::qcol(Some(&a), &owner_name);
                        let u = to_universal(&p, r, owner);
                        if wrapped {
                            from_universal(&p, u, Expr::int(c.0 as i64))
                        } else {
                            u
                        }
                    }),
                ));
            }
        }
    }
    query.select.extend(extra);
}

pub fn push_up_client_presentation(ctx: &RewriteContext<'_>, q: Query) -> Query {
    map_query_tree(q, &mut |q| {
        let q = delay_derived(ctx, q, Delay::ClientPresentation);
        map_level_exprs(q, &mut |e| strip_client_presentation(ctx, e))
    })
}

pub fn push_up_conversion(ctx: &RewriteContext<'_>, q: Query) -> Query {
    map_query_tree(q, &mut |q| {
        let q = delay_derived(ctx, q, Delay::Conversion);
        map_level_exprs(q, &mut |e| flip_constants(ctx, strip_client_presentation(ctx, e)))
    })
}
