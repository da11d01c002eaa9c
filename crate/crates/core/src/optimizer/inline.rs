//! Replace linear conversion calls by arithmetic over joined meta tables.

use std::collections::BTreeSet;

use super::{as_wrapped, map_level_exprs, map_query_tree};
use crate::ast::*;
use crate::catalog::{TransformNames, TENANT_META_TABLE};
use crate::conversion::{ConversionPair, PairKind};
use crate::rewriter::RewriteContext;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("conversion pair '{pair}' has no relational definition")]
pub struct NotInlinable {
    pub pair: String,
}

/// Meta-table rows joined into one query.
struct Joins {
    taken: BTreeSet<String>,
    next: usize,
    tenants: Vec<(Expr, String)>,
    transforms: Vec<(Expr, String, String)>,
    from: Vec<FromItem>,
    predicates: Vec<Expr>,
}

fn initials(pair: &str) -> String {
    pair.split('_')
        .filter_map(|w| w.chars().next())
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

impl Joins {
    fn new(taken: BTreeSet<String>) -> Joins {
        Joins {
            taken,
            next: 1,
            tenants: Vec::new(),
            transforms: Vec::new(),
            from: Vec::new(),
            predicates: Vec::new(),
        }
    }

    fn fresh(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        while self.taken.contains(&name.to_ascii_lowercase()) {
            name = format!("mt_{name}");
        }
        self.taken.insert(name.to_ascii_lowercase());
        name
    }

    fn tenant_index(&mut self, tenant: &Expr) -> (usize, String) {
        if let Some(i) = self.tenants.iter().position(|(t, _)| t == tenant) {
            return (i + 1, self.tenants[i].1.clone());
        }
        let n = self.next;
        self.next += 1;
        let alias = self.fresh(&format!("T{n}"));
        self.from.push(FromItem::table(TENANT_META_TABLE, Some(&alias)));
        self.predicates
            .push(Expr::eq(Expr::qcol(Some(&alias), "T_tenant_key"), tenant.clone()));
        self.tenants.push((tenant.clone(), alias.clone()));
        (n, alias)
    }

    /// Alias of the transform row for `tenant` and `pair`.
    fn row(&mut self, tenant: &Expr, pair: &ConversionPair) -> Result<String, NotInlinable> {
        if !matches!(pair.kind, PairKind::Linear { .. }) {
            return Err(NotInlinable { pair: pair.name.clone() });
        }
        if !matches!(tenant, Expr::Column(_) | Expr::Literal(Literal::Int(_))) {
            return Err(NotInlinable { pair: pair.name.clone() });
        }
        if let Some((_, _, a)) = self
            .transforms
            .iter()
            .find(|(t, p, _)| t == tenant && p.eq_ignore_ascii_case(&pair.name))
        {
            return Ok(a.clone());
        }
        let (n, t_alias) = self.tenant_index(tenant);
        let names = TransformNames::for_pair(&pair.name);
        let alias = self.fresh(&format!("{}{n}", initials(&pair.name)));
        self.from.push(FromItem::table(&names.table, Some(&alias)));
        self.predicates.push(Expr::eq(
            Expr::qcol(Some(&t_alias), &names.tenant_key),
            Expr::qcol(Some(&alias), &names.key),
        ));
        self.transforms.push((tenant.clone(), pair.name.clone(), alias.clone()));
        Ok(alias)
    }
}

fn multiplicative(pair: &ConversionPair) -> bool {
    match &pair.kind {
        PairKind::Linear { params } => params.values().all(|p| p.offset == 0.0),
        _ => false,
    }
}

struct Inliner<'c, 'a> {
    ctx: &'c RewriteContext<'a>,
    joins: Joins,
    /// Meta columns outside aggregates of an aggregated query need wrapping.
    wrap: bool,
}

fn mul(a: Expr, b: Expr) -> Expr {
    Expr::binary(BinaryOp::Multiply, a, b)
}

impl Inliner<'_, '_> {
    fn meta(&self, alias: &str, col: &str, in_agg: bool) -> Expr {
        let c = Expr::qcol(Some(alias), col);
        if self.wrap && !in_agg {
            Expr::Aggregate {
                func: AggFunc::Min,
                arg: Some(Box::new(c)),
                distinct: false,
            }
        } else {
            c
        }
    }

    fn pair(&self, name: &str) -> Result<&ConversionPair, NotInlinable> {
        self.ctx
            .catalog
            .pair(name)
            .ok_or_else(|| NotInlinable { pair: name.to_string() })
    }

    fn to_universal(&mut self, p: &ConversionPair, x: Expr, t: &Expr, in_agg: bool) -> Result<Expr, NotInlinable> {
        let a = self.joins.row(t, p)?;
        let n = TransformNames::for_pair(&p.name);
        let to = self.meta(&a, &n.to_universal, in_agg);
        Ok(if multiplicative(p) {
            mul(to, x)
        } else {
            mul(Expr::binary(BinaryOp::Minus, x, self.meta(&a, &n.offset, in_agg)), to)
        })
    }

    fn from_universal(&mut self, p: &ConversionPair, u: Expr, t: &Expr, in_agg: bool) -> Result<Expr, NotInlinable> {
        let a = self.joins.row(t, p)?;
        let n = TransformNames::for_pair(&p.name);
        let from = self.meta(&a, &n.from_universal, in_agg);
        Ok(if multiplicative(p) {
            mul(from, u)
        } else {
            Expr::binary(BinaryOp::Plus, mul(from, u), self.meta(&a, &n.offset, in_agg))
        })
    }

    fn call(&mut self, e: &Expr, in_agg: bool) -> Result<Expr, NotInlinable> {
        if let Some((pair, x, owner)) = as_wrapped(e, self.ctx.client) {
            let p = self.pair(pair)?.clone();
            let x = self.expr(x.clone(), in_agg);
            let client = Expr::int(self.ctx.client.0 as i64);
            if multiplicative(&p) {
                // client row first so the factors read from-then-to
                let ca = self.joins.row(&client, &p)?;
                let oa = self.joins.row(owner, &p)?;
                let n = TransformNames::for_pair(&p.name);
                let factor = mul(self.meta(&ca, &n.from_universal, in_agg), self.meta(&oa, &n.to_universal, in_agg));
                return Ok(mul(factor, x));
            }
            self.joins.row(&client, &p)?;
            let u = self.to_universal(&p, x, owner, in_agg)?;
            return self.from_universal(&p, u, &client, in_agg);
        }
        let Expr::Convert {
            pair,
            direction,
            value,
            tenant,
        } = e
        else {
            unreachable!("conversion calls only")
        };
        let p = self.pair(pair)?.clone();
        self.joins.row(tenant, &p)?;
        let v = self.expr((**value).clone(), in_agg);
        match direction {
            Direction::ToUniversal => self.to_universal(&p, v, tenant, in_agg),
            Direction::FromUniversal => self.from_universal(&p, v, tenant, in_agg),
        }
    }

    fn expr(&mut self, e: Expr, in_agg: bool) -> Expr {
        match e {
            Expr::Convert { .. } => match self.call(&e, in_agg) {
                Ok(x) => x,
                Err(_) => e.map_children(&mut |c| self.expr(c, in_agg)),
            },
            Expr::Aggregate { .. } => e.map_children(&mut |c| self.expr(c, true)),
            other => other.map_children(&mut |c| self.expr(c, in_agg)),
        }
    }
}

fn qualifiers(q: &Query, out: &mut BTreeSet<String>) {
    q.walk_queries(&mut |n| {
        fn walk(f: &FromItem, out: &mut BTreeSet<String>) {
            match f {
                FromItem::Table { name, alias } => {
                    out.insert(alias.as_deref().unwrap_or(name).to_ascii_lowercase());
                }
                FromItem::Derived { alias, .. } => {
                    out.insert(alias.to_ascii_lowercase());
                }
                FromItem::Join { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        for f in &n.from {
            walk(f, out);
        }
    });
}

fn inline_query(ctx: &RewriteContext<'_>, q: Query, taken: &BTreeSet<String>) -> Query {
    let aggregated = q.is_aggregated();
    let keys = q.group_by.clone();
    let mut inl = Inliner {
        ctx,
        joins: Joins::new(taken.clone()),
        wrap: false,
    };
    // select and HAVING of an aggregated query evaluate per group
    let mut select = Vec::new();
    for s in &q.select {
        select.push(match s {
            SelectItem::Expr { expr, alias } => {
                inl.wrap = aggregated && !keys.contains(expr);
                let out = inl.expr(expr.clone(), false);
                inl.wrap = false;
                SelectItem::Expr {
                    expr: out,
                    alias: alias.clone(),
                }
            }
            other => other.clone(),
        })
    }
    let having = q.having.clone().map(|h| {
        inl.wrap = aggregated;
        let out = inl.expr(h, false);
        inl.wrap = false;
        out
    });
    let mut q = Query {
        select: q.select.clone(),
        having: None,
        ..q
    };
    q = map_level_exprs(q, &mut |e| inl.expr(e, false));
    q.select = select;
    q.having = having;
    let Joins { from, predicates, .. } = inl.joins;
    if from.is_empty() {
        return q;
    }
    q.from.extend(from);
    let mut conj: Vec<Expr> = q.where_clause.take().into_iter().collect();
    conj.extend(predicates);
    q.where_clause = conjoin(conj);
    q
}

pub fn inline_conversions(ctx: &RewriteContext<'_>, q: Query) -> Query {
    let mut taken = BTreeSet::new();
    qualifiers(&q, &mut taken);
    map_query_tree(q, &mut |n| inline_query(ctx, n, &taken))
}

/// Inline a single conversion expression: the arithmetic replacement plus
/// the meta-table sources and join predicates it needs.
pub fn inline_call(ctx: &RewriteContext<'_>, e: &Expr) -> Result<(Expr, Vec<FromItem>, Vec<Expr>), NotInlinable> {
    let mut inl = Inliner {
        ctx,
        joins: Joins::new(BTreeSet::new()),
        wrap: false,
    };
    let out = inl.call(e, false)?;
    Ok((out, inl.joins.from, inl.joins.predicates))
}
