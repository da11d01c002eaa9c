//! Statement tree of the supported MTSQL dialect.
//!
//! The same tree represents MTSQL input and the plain SQL produced by the
//! rewriter; MT-specific pieces (table generality, attribute comparability,
//! `SET SCOPE`, DCL) only occur on the input side.

use crate::tenant::{Right, TenantId};
use crate::value::{ScalarType, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Query(Query),
    CreateTable(CreateTable),
    CreateView { name: String, query: Box<Query> },
    DropTable { name: String },
    DropView { name: String },
    AlterTable { name: String, action: AlterAction },
    Insert(Insert),
    Update(Update),
    Delete(Delete),
    Grant(Privileges),
    Revoke(Privileges),
    SetScope(ScopeSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub distinct: bool,
    pub select: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub where_clause: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
    pub order_by: Vec<OrderByItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    QualifiedWildcard(String),
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FromItem {
    Table { name: String, alias: Option<String> },
    Derived { query: Box<Query>, alias: String },
    Join { left: Box<FromItem>, right: Box<FromItem>, on: Expr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderByItem {
    pub expr: Expr,
    pub desc: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Int(i64),
    Dec(f64),
    Str(String),
}

impl Literal {
    pub fn to_value(&self) -> Value {
        match self {
            Literal::Null => Value::Null,
            Literal::Int(i) => Value::Int(*i),
            Literal::Dec(d) => Value::Dec(*d),
            Literal::Str(s) => Value::text(s),
        }
    }

    pub fn from_value(v: &Value) -> Literal {
        match v {
            Value::Null => Literal::Null,
            Value::Int(i) => Literal::Int(*i),
            Value::Dec(d) => Literal::Dec(*d),
            Value::Text(s) => Literal::Str(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    And,
    Or,
    Plus,
    Minus,
    Multiply,
    Divide,
}

impl BinaryOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq
        )
    }

    /// Comparisons other than `=` / `<>` need an order-preserving conversion
    /// before they may be moved across it.
    pub fn is_ordering(self) -> bool {
        matches!(self, BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq)
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinaryOp::Plus | BinaryOp::Minus | BinaryOp::Multiply | BinaryOp::Divide)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Multiply => "*",
            BinaryOp::Divide => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }

    pub fn from_name(s: &str) -> Option<AggFunc> {
        [AggFunc::Count, AggFunc::Sum, AggFunc::Avg, AggFunc::Min, AggFunc::Max]
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
    }
}

/// Direction of a conversion-function call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToUniversal,
    FromUniversal,
}

impl Direction {
    pub fn suffix(self) -> &'static str {
        match self {
            Direction::ToUniversal => "ToUniversal",
            Direction::FromUniversal => "FromUniversal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Literal),
    Unary {
        op: UnaryOp,
        expr: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
    InSubquery {
        expr: Box<Expr>,
        query: Box<Query>,
        negated: bool,
    },
    Exists {
        query: Box<Query>,
        negated: bool,
    },
    Subquery(Box<Query>),
    Aggregate {
        func: AggFunc,
        /// `None` encodes `COUNT(*)`.
        arg: Option<Box<Expr>>,
        distinct: bool,
    },
    Function {
        name: String,
        args: Vec<Expr>,
    },
    /// `<pair>ToUniversal(value, tenant)` / `<pair>FromUniversal(value, tenant)`.
    Convert {
        pair: String,
        direction: Direction,
        value: Box<Expr>,
        tenant: Box<Expr>,
    },
    Case {
        operand: Option<Box<Expr>>,
        branches: Vec<(Expr, Expr)>,
        else_expr: Option<Box<Expr>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreateTable {
    pub name: String,
    pub generality: Option<Generality>,
    pub columns: Vec<ColumnDef>,
    pub constraints: Vec<TableConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generality {
    Global,
    Specific,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataType {
    /// Upper-cased type name as written (`INTEGER`, `VARCHAR`, ...).
    pub name: String,
    pub params: Vec<u32>,
}

impl DataType {
    pub fn new(name: &str, params: Vec<u32>) -> DataType {
        DataType {
            name: name.to_ascii_uppercase(),
            params,
        }
    }

    pub fn scalar_type(&self) -> Option<ScalarType> {
        match self.name.as_str() {
            "INTEGER" | "INT" | "BIGINT" | "SMALLINT" => Some(ScalarType::Int),
            "DECIMAL" | "NUMERIC" | "REAL" | "DOUBLE" | "FLOAT" => Some(ScalarType::Decimal),
            "VARCHAR" | "CHAR" | "TEXT" => Some(ScalarType::Text),
            _ => None,
        }
    }

    pub fn for_scalar(ty: ScalarType) -> DataType {
        match ty {
            ScalarType::Int => DataType::new("INTEGER", vec![]),
            ScalarType::Decimal => DataType::new("DECIMAL", vec![15, 2]),
            ScalarType::Text => DataType::new("VARCHAR", vec![]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnAnnotation {
    Comparable,
    Specific,
    Convertible { to_fn: String, from_fn: String },
}

impl ColumnAnnotation {
    /// Conversion pair name derived from `@<pair>ToUniversal`.
    pub fn pair_name(&self) -> Option<String> {
        match self {
            ColumnAnnotation::Convertible { to_fn, .. } => Some(strip_suffix_ci(to_fn, "ToUniversal")
                .unwrap_or(to_fn)
                .to_string()),
            _ => None,
        }
    }
}

pub(crate) fn strip_suffix_ci<'a>(s: &'a str, suffix: &str) -> Option<&'a str> {
    if s.len() > suffix.len() && s[s.len() - suffix.len()..].eq_ignore_ascii_case(suffix) {
        Some(&s[..s.len() - suffix.len()])
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDef {
    pub name: String,
    pub data_type: DataType,
    pub not_null: bool,
    pub default: Option<Expr>,
    pub annotation: Option<ColumnAnnotation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableConstraint {
    pub name: Option<String>,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    PrimaryKey(Vec<String>),
    ForeignKey {
        columns: Vec<String>,
        ref_table: String,
        ref_columns: Vec<String>,
    },
    Check(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlterAction {
    AddColumn(ColumnDef),
    DropColumn(String),
    AddConstraint(TableConstraint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Insert {
    pub table: String,
    pub columns: Vec<String>,
    pub source: InsertSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InsertSource {
    Values(Vec<Vec<Expr>>),
    Query(Box<Query>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub table: String,
    pub assignments: Vec<(String, Expr)>,
    pub where_clause: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delete {
    pub table: String,
    pub where_clause: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Privileges {
    pub rights: Vec<Right>,
    pub table: String,
    pub grantee: Grantee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grantee {
    Tenant(TenantId),
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScopeSpec {
    /// Explicit ttid list; an empty list means every tenant.
    Simple(Vec<TenantId>),
    Complex {
        from: Vec<FromItem>,
        where_clause: Option<Expr>,
    },
}

// ---------------------------------------------------------------------------
// construction helpers

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column(ColumnRef {
            qualifier: None,
            name: name.to_string(),
        })
    }

    pub fn qcol(qualifier: Option<&str>, name: &str) -> Expr {
        Expr::Column(ColumnRef {
            qualifier: qualifier.map(str::to_string),
            name: name.to_string(),
        })
    }

    pub fn int(i: i64) -> Expr {
        Expr::Literal(Literal::Int(i))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn eq(left: Expr, right: Expr) -> Expr {
        Expr::binary(BinaryOp::Eq, left, right)
    }

    pub fn and(left: Expr, right: Expr) -> Expr {
        Expr::binary(BinaryOp::And, left, right)
    }

    pub fn convert(pair: &str, direction: Direction, value: Expr, tenant: Expr) -> Expr {
        Expr::Convert {
            pair: pair.to_string(),
            direction,
            value: Box::new(value),
            tenant: Box::new(tenant),
        }
    }

    pub fn tenant_list(expr: Expr, tenants: impl IntoIterator<Item = TenantId>) -> Expr {
        Expr::InList {
            expr: Box::new(expr),
            list: tenants.into_iter().map(|t| Expr::int(t.0 as i64)).collect(),
            negated: false,
        }
    }

    pub fn is_literal(&self) -> bool {
        match self {
            Expr::Literal(_) => true,
            Expr::Unary {
                op: UnaryOp::Neg,
                expr,
            } => expr.is_literal(),
            _ => false,
        }
    }

    /// Visit this expression and every sub-expression, without descending
    /// into nested queries.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Column(_) | Expr::Literal(_) | Expr::Exists { .. } | Expr::Subquery(_) => {}
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } => expr.walk(f),
            Expr::Binary { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            Expr::InList { expr, list, .. } => {
                expr.walk(f);
                for e in list {
                    e.walk(f);
                }
            }
            Expr::InSubquery { expr, .. } => expr.walk(f),
            Expr::Aggregate { arg, .. } => {
                if let Some(a) = arg {
                    a.walk(f);
                }
            }
            Expr::Function { args, .. } => {
                for a in args {
                    a.walk(f);
                }
            }
            Expr::Convert { value, tenant, .. } => {
                value.walk(f);
                tenant.walk(f);
            }
            Expr::Case {
                operand,
                branches,
                else_expr,
            } => {
                if let Some(o) = operand {
                    o.walk(f);
                }
                for (w, t) in branches {
                    w.walk(f);
                    t.walk(f);
                }
                if let Some(e) = else_expr {
                    e.walk(f);
                }
            }
        }
    }

    /// Nested queries directly referenced by this expression tree.
    pub fn subqueries(&self) -> Vec<&Query> {
        let mut out = Vec::new();
        self.walk(&mut |e| match e {
            Expr::Exists { query, .. } | Expr::Subquery(query) | Expr::InSubquery { query, .. } => {
                out.push(query.as_ref())
            }
            _ => {}
        });
        out
    }

    pub fn contains_aggregate(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, Expr::Aggregate { .. }) {
                found = true;
            }
        });
        found
    }

    /// Transform children bottom-up (nested queries are left untouched).
    pub fn map_children(self, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let bx = |e: Box<Expr>, f: &mut dyn FnMut(Expr) -> Expr| Box::new(f(*e));
        match self {
            e @ (Expr::Column(_) | Expr::Literal(_) | Expr::Exists { .. } | Expr::Subquery(_)) => e,
            Expr::Unary { op, expr } => Expr::Unary { op, expr: bx(expr, f) },
            Expr::IsNull { expr, negated } => Expr::IsNull {
                expr: bx(expr, f),
                negated,
            },
            Expr::Binary { op, left, right } => Expr::Binary {
                op,
                left: bx(left, f),
                right: bx(right, f),
            },
            Expr::InList { expr, list, negated } => Expr::InList {
                expr: bx(expr, f),
                list: list.into_iter().map(&mut *f).collect(),
                negated,
            },
            Expr::InSubquery { expr, query, negated } => Expr::InSubquery {
                expr: bx(expr, f),
                query,
                negated,
            },
            Expr::Aggregate { func, arg, distinct } => Expr::Aggregate {
                func,
                arg: arg.map(|a| bx(a, f)),
                distinct,
            },
            Expr::Function { name, args } => Expr::Function {
                name,
                args: args.into_iter().map(&mut *f).collect(),
            },
            Expr::Convert {
                pair,
                direction,
                value,
                tenant,
            } => Expr::Convert {
                pair,
                direction,
                value: bx(value, f),
                tenant: bx(tenant, f),
            },
            Expr::Case {
                operand,
                branches,
                else_expr,
            } => Expr::Case {
                operand: operand.map(|o| bx(o, f)),
                branches: branches.into_iter().map(|(w, t)| (f(w), f(t))).collect(),
                else_expr: else_expr.map(|e| bx(e, f)),
            },
        }
    }
}

/// Split a predicate into its top-level conjuncts.
pub fn conjuncts(expr: Expr) -> Vec<Expr> {
    match expr {
        Expr::Binary {
            op: BinaryOp::And,
            left,
            right,
        } => {
            let mut v = conjuncts(*left);
            v.extend(conjuncts(*right));
            v
        }
        e => vec![e],
    }
}

/// Left-deep conjunction; `None` for an empty list.
pub fn conjoin(parts: impl IntoIterator<Item = Expr>) -> Option<Expr> {
    parts.into_iter().reduce(Expr::and)
}

impl Query {
    pub fn new(select: Vec<SelectItem>, from: Vec<FromItem>) -> Query {
        Query {
            distinct: false,
            select,
            from,
            where_clause: None,
            group_by: vec![],
            having: None,
            order_by: vec![],
        }
    }

    pub fn is_aggregated(&self) -> bool {
        !self.group_by.is_empty()
            || self.having.is_some()
            || self.select.iter().any(|s| match s {
                SelectItem::Expr { expr, .. } => expr.contains_aggregate(),
                _ => false,
            })
    }

    /// Every expression owned directly by this query level.
    pub fn expressions(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        for s in &self.select {
            if let SelectItem::Expr { expr, .. } = s {
                out.push(expr);
            }
        }
        fn from_exprs<'a>(f: &'a FromItem, out: &mut Vec<&'a Expr>) {
            if let FromItem::Join { left, right, on } = f {
                from_exprs(left, out);
                from_exprs(right, out);
                out.push(on);
            }
        }
        for f in &self.from {
            from_exprs(f, &mut out);
        }
        out.extend(self.where_clause.iter());
        out.extend(self.group_by.iter());
        out.extend(self.having.iter());
        out.extend(self.order_by.iter().map(|o| &o.expr));
        out
    }

    /// Queries nested one level below this one (derived tables and
    /// expression sub-queries).
    pub fn child_queries(&self) -> Vec<&Query> {
        let mut out = Vec::new();
        fn from_q<'a>(f: &'a FromItem, out: &mut Vec<&'a Query>) {
            match f {
                FromItem::Table { .. } => {}
                FromItem::Derived { query, .. } => out.push(query),
                FromItem::Join { left, right, .. } => {
                    from_q(left, out);
                    from_q(right, out);
                }
            }
        }
        for f in &self.from {
            from_q(f, &mut out);
        }
        for e in self.expressions() {
            out.extend(e.subqueries());
        }
        out
    }

    /// Visit this query and every nested query.
    pub fn walk_queries<'a>(&'a self, f: &mut dyn FnMut(&'a Query)) {
        f(self);
        for q in self.child_queries() {
            q.walk_queries(f);
        }
    }

    /// Names of all base tables referenced anywhere in the query tree.
    pub fn base_tables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.walk_queries(&mut |q| {
            fn tables(f: &FromItem, out: &mut Vec<String>) {
                match f {
                    FromItem::Table { name, .. } => {
                        if !out.iter().any(|n| n.eq_ignore_ascii_case(name)) {
                            out.push(name.clone());
                        }
                    }
                    FromItem::Derived { .. } => {}
                    FromItem::Join { left, right, .. } => {
                        tables(left, out);
                        tables(right, out);
                    }
                }
            }
            for item in &q.from {
                tables(item, &mut out);
            }
        });
        out
    }
}

impl FromItem {
    pub fn table(name: &str, alias: Option<&str>) -> FromItem {
        FromItem::Table {
            name: name.to_string(),
            alias: alias.map(str::to_string),
        }
    }
}

impl SelectItem {
    pub fn expr(expr: Expr, alias: Option<&str>) -> SelectItem {
        SelectItem::Expr {
            expr,
            alias: alias.map(str::to_string),
        }
    }
}

/// Output name of a select item: the alias, the column name for plain
/// column references, otherwise a positional `_c<n>` (1-based).
pub fn output_name(expr: &Expr, alias: Option<&str>, position: usize) -> String {
    if let Some(a) = alias {
        return a.to_string();
    }
    match expr {
        Expr::Column(c) => c.name.clone(),
        _ => format!("_c{}", position + 1),
    }
}
