//! Two-level aggregation: partial aggregates per owner in the owner's
//! format, merged after converting the partials.

use super::{as_wrapped, contains_column, contains_convert, contains_subquery};
use crate::ast::*;
use crate::conversion::ConversionClass;
use crate::rewriter::RewriteContext;

const INNER: &str = "mt_dist";

struct Builder<'c, 'a> {
    ctx: &'c RewriteContext<'a>,
    keys: Vec<Expr>,
    owners: Vec<Expr>,
    partials: Vec<Expr>,
    converted: bool,
}

fn agg(func: AggFunc, arg: Expr) -> Expr {
    Expr::Aggregate {
        func,
        arg: Some(Box::new(arg)),
        distinct: false,
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    Expr::binary(BinaryOp::Divide, a, b)
}

fn mul(a: Expr, b: Expr) -> Expr {
    Expr::binary(BinaryOp::Multiply, a, b)
}

/// A product chain with one wrapped factor: the pair, the chain with the
/// wrapper replaced by its argument, and the owner.
fn split_product(e: &Expr, client: crate::tenant::TenantId) -> Option<(String, Expr, Expr)> {
    if let Some((p, x, o)) = as_wrapped(e, client) {
        return Some((p.to_string(), x.clone(), o.clone()));
    }
    let Expr::Binary {
        op: BinaryOp::Multiply,
        left,
        right,
    } = e
    else {
        return None;
    };
    match (contains_convert(left), contains_convert(right)) {
        (true, false) => {
            let (p, x, o) = split_product(left, client)?;
            Some((p, mul(x, (**right).clone()), o))
        }
        (false, true) => {
            let (p, x, o) = split_product(right, client)?;
            Some((p, mul((**left).clone(), x), o))
        }
        _ => None,
    }
}

fn coalesce_zero(e: Expr) -> Expr {
    Expr::Function {
        name: "COALESCE".into(),
        args: vec![e, Expr::int(0)],
    }
}

impl Builder<'_, '_> {
    fn partial(&mut self, e: Expr) -> Expr {
        let name = format!("p{}", self.partials.len() + 1);
        self.partials.push(e);
        Expr::qcol(Some(INNER), &name)
    }

    fn owner(&mut self, o: &Expr) {
        if !self.owners.contains(o) && !self.keys.contains(o) {
            self.owners.push(o.clone());
        }
    }

    fn class(&self, pair: &str) -> ConversionClass {
        self.ctx
            .catalog
            .pair(pair)
            .map(|p| p.classify())
            .unwrap_or(ConversionClass::EqualityPreserving)
    }

    fn client(&self) -> Expr {
        Expr::int(self.ctx.client.0 as i64)
    }

    /// Merge expression for one aggregate, `None` when it does not distribute.
    fn aggregate(&mut self, func: AggFunc, arg: Option<&Expr>, distinct: bool) -> Option<Expr> {
        let Some(arg) = arg else {
            let p = self.partial(Expr::Aggregate {
                func: AggFunc::Count,
                arg: None,
                distinct: false,
            });
            return Some(coalesce_zero(agg(AggFunc::Sum, p)));
        };
        if contains_subquery(arg) || arg.contains_aggregate() {
            return None;
        }
        if !contains_convert(arg) {
            if distinct && !matches!(func, AggFunc::Min | AggFunc::Max) {
                return None;
            }
            return Some(match func {
                AggFunc::Count => coalesce_zero(agg(AggFunc::Sum, self.partial(agg(AggFunc::Count, arg.clone())))),
                AggFunc::Sum | AggFunc::Min | AggFunc::Max => agg(func, self.partial(agg(func, arg.clone()))),
                AggFunc::Avg => {
                    let s = self.partial(agg(AggFunc::Sum, arg.clone()));
                    let c = self.partial(agg(AggFunc::Count, arg.clone()));
                    div(agg(AggFunc::Sum, s), agg(AggFunc::Sum, c))
                }
            });
        }
        if distinct {
            return None;
        }
        let client = self.ctx.client;
        // W(x) directly, or W(x) times conversion-free factors for SUM
        let (pair, x, owner) = match as_wrapped(arg, client) {
            Some((p, x, o)) => (p.to_string(), x.clone(), o.clone()),
            None => {
                if func != AggFunc::Sum {
                    return None;
                }
                let (p, x, o) = split_product(arg, client)?;
                if self.class(&p) != ConversionClass::MultiplicativeLinear {
                    return None;
                }
                (p, x, o)
            }
        };
        if contains_convert(&x) || contains_convert(&owner) || contains_subquery(&owner) {
            return None;
        }
        let class = self.class(&pair);
        let to_u = |e: Expr| Expr::convert(&pair, Direction::ToUniversal, e, owner.clone());
        let from_c = |e: Expr, c: Expr| Expr::convert(&pair, Direction::FromUniversal, e, c);
        let merged = match func {
            AggFunc::Count => coalesce_zero(agg(AggFunc::Sum, self.partial(agg(AggFunc::Count, x)))),
            AggFunc::Min | AggFunc::Max if class >= ConversionClass::OrderPreserving => {
                let m = self.partial(to_u(agg(func, x)));
                from_c(agg(func, m), self.client())
            }
            AggFunc::Sum if class == ConversionClass::MultiplicativeLinear => {
                let s = self.partial(to_u(agg(AggFunc::Sum, x)));
                from_c(agg(AggFunc::Sum, s), self.client())
            }
            AggFunc::Sum | AggFunc::Avg if class >= ConversionClass::AffineLinear => {
                let a = self.partial(to_u(agg(AggFunc::Avg, x.clone())));
                let c = self.partial(agg(AggFunc::Count, x));
                let mean = div(agg(AggFunc::Sum, mul(a, c.clone())), agg(AggFunc::Sum, c.clone()));
                let avg = from_c(mean, self.client());
                if func == AggFunc::Sum {
                    mul(agg(AggFunc::Sum, c), avg)
                } else {
                    avg
                }
            }
            _ => return None,
        };
        self.owner(&owner);
        self.converted = true;
        Some(merged)
    }

    /// Outer form of a select/HAVING expression of the original query.
    fn outer(&mut self, e: &Expr) -> Option<Expr> {
        if let Some(i) = self.keys.iter().position(|k| k == e) {
            return Some(Expr::qcol(Some(INNER), &format!("k{}", i + 1)));
        }
        match e {
            Expr::Aggregate { func, arg, distinct } => self.aggregate(*func, arg.as_deref(), *distinct),
            Expr::Column(_) | Expr::Subquery(_) | Expr::Exists { .. } | Expr::InSubquery { .. } => None,
            Expr::Convert { .. } if contains_column(e) && !e.contains_aggregate() => None,
            other => {
                let mut ok = true;
                let out = other.clone().map_children(&mut |c| match self.outer(&c) {
                    Some(x) => x,
                    None => {
                        ok = false;
                        c
                    }
                });
                ok.then_some(out)
            }
        }
    }
}

fn distribute_one(ctx: &RewriteContext<'_>, q: &Query) -> Option<Query> {
    if !q.is_aggregated() || q.group_by.iter().any(|g| contains_subquery(g) || g.contains_aggregate()) {
        return None;
    }
    let mut b = Builder {
        ctx,
        keys: q.group_by.clone(),
        owners: Vec::new(),
        partials: Vec::new(),
        converted: false,
    };
    let mut select = Vec::new();
    for (i, item) in q.select.iter().enumerate() {
        let SelectItem::Expr { expr, alias } = item else { return None };
        let out = b.outer(expr)?;
        select.push(SelectItem::Expr {
            expr: out,
            alias: Some(output_name(expr, alias.as_deref(), i)),
        });
    }
    let having = match &q.having {
        Some(h) => Some(b.outer(h)?),
        None => None,
    };
    if !b.converted {
        return None;
    }
    let mut order_by = Vec::new();
    for o in &q.order_by {
        let expr = if let Some((i, _)) = q
            .select
            .iter()
            .enumerate()
            .find(|(_, s)| matches!(s, SelectItem::Expr { expr, .. } if *expr == o.expr))
        {
            let SelectItem::Expr { alias, .. } = &select[i] else { unreachable!() };
            Expr::col(alias.as_deref().expect("aliased above"))
        } else if let Some(i) = b.keys.iter().position(|k| *k == o.expr) {
            Expr::qcol(Some(INNER), &format!("k{}", i + 1))
        } else if let Expr::Column(ColumnRef { qualifier: None, name }) = &o.expr {
            if !select
                .iter()
                .any(|s| matches!(s, SelectItem::Expr { alias: Some(a), .. } if a.eq_ignore_ascii_case(name)))
            {
                return None;
            }
            o.expr.clone()
        } else {
            return None;
        };
        order_by.push(OrderByItem { expr, desc: o.desc });
    }

    let mut inner_select = Vec::new();
    for (i, k) in b.keys.iter().enumerate() {
        inner_select.push(SelectItem::expr(k.clone(), Some(&format!("k{}", i + 1))));
    }
    for (i, o) in b.owners.iter().enumerate() {
        inner_select.push(SelectItem::expr(o.clone(), Some(&format!("t{}", i + 1))));
    }
    for (i, p) in b.partials.iter().enumerate() {
        inner_select.push(SelectItem::expr(p.clone(), Some(&format!("p{}", i + 1))));
    }
    let mut inner = Query::new(inner_select, q.from.clone());
    inner.where_clause = q.where_clause.clone();
    inner.group_by = b.keys.iter().chain(&b.owners).cloned().collect();

    let group_by = (1..=b.keys.len())
        .map(|i| Expr::qcol(Some(INNER), &format!("k{i}")))
        .collect();
    Some(Query {
        distinct: q.distinct,
        select,
        from: vec![FromItem::Derived {
            query: Box::new(inner),
            alias: INNER.to_string(),
        }],
        where_clause: None,
        group_by,
        having,
        order_by,
    })
}

/// Distribute the top-level query and its derived tables. The whole query
/// stays unchanged when any aggregate misses its gate.
pub fn distribute_aggregates(ctx: &RewriteContext<'_>, mut q: Query) -> Query {
    fn from_item(ctx: &RewriteContext<'_>, f: FromItem) -> FromItem {
        match f {
            FromItem::Derived { query, alias } => FromItem::Derived {
                query: Box::new(distribute_aggregates(ctx, *query)),
                alias,
            },
            FromItem::Join { left, right, on } => FromItem::Join {
                left: Box::new(from_item(ctx, *left)),
                right: Box::new(from_item(ctx, *right)),
                on,
            },
            t => t,
        }
    }
    q.from = q.from.into_iter().map(|f| from_item(ctx, f)).collect();
    distribute_one(ctx, &q).unwrap_or(q)
}
