//! Canonical SQL text for statement trees. `parse(print(s)) == s` for every
//! tree the parser can produce.

use std::fmt::{self, Display, Formatter, Write};

use crate::ast::*;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => match op {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Plus | BinaryOp::Minus => 5,
            BinaryOp::Multiply | BinaryOp::Divide => 6,
            _ => 4,
        },
        Expr::Unary { op: UnaryOp::Not, .. } => 3,
        Expr::IsNull { .. } | Expr::InList { .. } | Expr::InSubquery { .. } => 4,
        Expr::Unary { op: UnaryOp::Neg, .. } => 7,
        Expr::Literal(Literal::Int(i)) if *i < 0 => 7,
        Expr::Literal(Literal::Dec(d)) if d.is_sign_negative() => 7,
        _ => 8,
    }
}

struct Wrapped<'a>(&'a Expr, bool);

impl Display for Wrapped<'_> {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

fn sep<T: Display>(f: &mut Formatter<'_>, items: &[T], s: &str) -> fmt::Result {
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(s)?;
        }
        write!(f, "{it}")?;
    }
    Ok(())
}

impl Display for Literal {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Null => f.write_str("NULL"),
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Dec(d) => write!(f, "{d:?}"),
            Literal::Str(s) => {
                f.write_char('\'')?;
                f.write_str(&s.replace('\'', "''"))?;
                f.write_char('\'')
            }
        }
    }
}

impl Display for ColumnRef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Literal(l) => write!(f, "{l}"),
            Expr::Unary { op: UnaryOp::Neg, expr } => {
                let paren = precedence(expr) < 8 || matches!(**expr, Expr::Literal(_));
                write!(f, "-{}", Wrapped(expr, paren))
            }
            Expr::Unary { op: UnaryOp::Not, expr } => {
                let paren = precedence(expr) < 3 || matches!(**expr, Expr::Exists { .. });
                write!(f, "NOT {}", Wrapped(expr, paren))
            }
            Expr::Binary { op, left, right } => {
                let p = precedence(self);
                let (lp, rp) = if p == 4 {
                    (precedence(left) <= 4, precedence(right) <= 4)
                } else {
                    (precedence(left) < p, precedence(right) <= p)
                };
                write!(f, "{} {} {}", Wrapped(left, lp), op.symbol(), Wrapped(right, rp))
            }
            Expr::IsNull { expr, negated } => {
                write!(
                    f,
                    "{} IS {}NULL",
                    Wrapped(expr, precedence(expr) <= 4),
                    if *negated { "NOT " } else { "" }
                )
            }
            Expr::InList { expr, list, negated } => {
                write!(
                    f,
                    "{} {}IN (",
                    Wrapped(expr, precedence(expr) <= 4),
                    if *negated { "NOT " } else { "" }
                )?;
                sep(f, list, ",")?;
                f.write_str(")")
            }
            Expr::InSubquery { expr, query, negated } => write!(
                f,
                "{} {}IN ({query})",
                Wrapped(expr, precedence(expr) <= 4),
                if *negated { "NOT " } else { "" }
            ),
            Expr::Exists { query, negated } => {
                write!(f, "{}EXISTS ({query})", if *negated { "NOT " } else { "" })
            }
            Expr::Subquery(q) => write!(f, "({q})"),
            Expr::Aggregate { func, arg, distinct } => match arg {
                None => write!(f, "{}(*)", func.name()),
                Some(a) => write!(f, "{}({}{a})", func.name(), if *distinct { "DISTINCT " } else { "" }),
            },
            Expr::Function { name, args } => {
                write!(f, "{name}(")?;
                sep(f, args, ", ")?;
                f.write_str(")")
            }
            Expr::Convert {
                pair,
                direction,
                value,
                tenant,
            } => write!(f, "{pair}{}({value}, {tenant})", direction.suffix()),
            Expr::Case {
                operand,
                branches,
                else_expr,
            } => {
                f.write_str("CASE")?;
                if let Some(o) = operand {
                    write!(f, " {o}")?;
                }
                for (w, t) in branches {
                    write!(f, " WHEN {w} THEN {t}")?;
                }
                if let Some(e) = else_expr {
                    write!(f, " ELSE {e}")?;
                }
                f.write_str(" END")
            }
        }
    }
}

impl Display for SelectItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            SelectItem::Wildcard => f.write_str("*"),
            SelectItem::QualifiedWildcard(q) => write!(f, "{q}.*"),
            SelectItem::Expr { expr, alias: None } => write!(f, "{expr}"),
            SelectItem::Expr { expr, alias: Some(a) } => write!(f, "{expr} AS {a}"),
        }
    }
}

impl Display for FromItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            FromItem::Table { name, alias: None } => f.write_str(name),
            FromItem::Table { name, alias: Some(a) } => write!(f, "{name} {a}"),
            FromItem::Derived { query, alias } => write!(f, "({query}) AS {alias}"),
            FromItem::Join { left, right, on } => {
                write!(f, "{left} JOIN ")?;
                if matches!(**right, FromItem::Join { .. }) {
                    write!(f, "({right})")?;
                } else {
                    write!(f, "{right}")?;
                }
                write!(f, " ON {on}")
            }
        }
    }
}

impl Display for OrderByItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.expr, if self.desc { " DESC" } else { "" })
    }
}

impl Display for Query {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        sep(f, &self.select, ", ")?;
        if !self.from.is_empty() {
            f.write_str(" FROM ")?;
            sep(f, &self.from, ", ")?;
        }
        if let Some(w) = &self.where_clause {
            write!(f, " WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            f.write_str(" GROUP BY ")?;
            sep(f, &self.group_by, ", ")?;
        }
        if let Some(h) = &self.having {
            write!(f, " HAVING {h}")?;
        }
        if !self.order_by.is_empty() {
            f.write_str(" ORDER BY ")?;
            sep(f, &self.order_by, ", ")?;
        }
        Ok(())
    }
}

impl Display for DataType {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.params.is_empty() {
            f.write_str("(")?;
            sep(f, &self.params, ",")?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl Display for ColumnDef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.data_type)?;
        if self.not_null {
            f.write_str(" NOT NULL")?;
        }
        if let Some(d) = &self.default {
            let paren = precedence(d) < 7;
            write!(f, " DEFAULT {}", Wrapped(d, paren))?;
        }
        match &self.annotation {
            None => Ok(()),
            Some(ColumnAnnotation::Comparable) => f.write_str(" COMPARABLE"),
            Some(ColumnAnnotation::Specific) => f.write_str(" SPECIFIC"),
            Some(ColumnAnnotation::Convertible { to_fn, from_fn }) => {
                write!(f, " CONVERTIBLE @{to_fn} @{from_fn}")
            }
        }
    }
}

struct Idents<'a>(&'a [String]);

impl Display for Idents<'_> {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        sep(f, self.0, ", ")?;
        f.write_str(")")
    }
}

impl Display for TableConstraint {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if let Some(n) = &self.name {
            write!(f, "CONSTRAINT {n} ")?;
        }
        match &self.kind {
            ConstraintKind::PrimaryKey(cols) => write!(f, "PRIMARY KEY {}", Idents(cols)),
            ConstraintKind::ForeignKey {
                columns,
                ref_table,
                ref_columns,
            } => write!(
                f,
                "FOREIGN KEY {} REFERENCES {ref_table} {}",
                Idents(columns),
                Idents(ref_columns)
            ),
            ConstraintKind::Check(e) => write!(f, "CHECK ({e})"),
        }
    }
}

impl Display for ScopeSpec {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            ScopeSpec::Simple(ids) => {
                f.write_str("IN (")?;
                sep(f, ids, ",")?;
                f.write_str(")")
            }
            ScopeSpec::Complex { from, where_clause } => {
                f.write_str("FROM ")?;
                sep(f, from, ", ")?;
                if let Some(w) = where_clause {
                    write!(f, " WHERE {w}")?;
                }
                Ok(())
            }
        }
    }
}

impl Display for Statement {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Query(q) => write!(f, "{q}"),
            Statement::CreateTable(ct) => {
                write!(f, "CREATE TABLE {}", ct.name)?;
                match ct.generality {
                    Some(Generality::Global) => f.write_str(" GLOBAL")?,
                    Some(Generality::Specific) => f.write_str(" SPECIFIC")?,
                    None => {}
                }
                f.write_str(" (")?;
                sep(f, &ct.columns, ", ")?;
                if !ct.constraints.is_empty() {
                    if !ct.columns.is_empty() {
                        f.write_str(", ")?;
                    }
                    sep(f, &ct.constraints, ", ")?;
                }
                f.write_str(")")
            }
            Statement::CreateView { name, query } => write!(f, "CREATE VIEW {name} AS {query}"),
            Statement::DropTable { name } => write!(f, "DROP TABLE {name}"),
            Statement::DropView { name } => write!(f, "DROP VIEW {name}"),
            Statement::AlterTable { name, action } => {
                write!(f, "ALTER TABLE {name} ")?;
                match action {
                    AlterAction::AddColumn(c) => write!(f, "ADD COLUMN {c}"),
                    AlterAction::DropColumn(c) => write!(f, "DROP COLUMN {c}"),
                    AlterAction::AddConstraint(c) => write!(f, "ADD {c}"),
                }
            }
            Statement::Insert(ins) => {
                write!(f, "INSERT INTO {}", ins.table)?;
                if !ins.columns.is_empty() {
                    write!(f, " {}", Idents(&ins.columns))?;
                }
                match &ins.source {
                    InsertSource::Values(rows) => {
                        f.write_str(" VALUES ")?;
                        for (i, row) in rows.iter().enumerate() {
                            if i > 0 {
                                f.write_str(", ")?;
                            }
                            f.write_str("(")?;
                            sep(f, row, ", ")?;
                            f.write_str(")")?;
                        }
                        Ok(())
                    }
                    InsertSource::Query(q) => write!(f, " {q}"),
                }
            }
            Statement::Update(u) => {
                write!(f, "UPDATE {} SET ", u.table)?;
                for (i, (c, e)) in u.assignments.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c} = {e}")?;
                }
                if let Some(w) = &u.where_clause {
                    write!(f, " WHERE {w}")?;
                }
                Ok(())
            }
            Statement::Delete(d) => {
                write!(f, "DELETE FROM {}", d.table)?;
                if let Some(w) = &d.where_clause {
                    write!(f, " WHERE {w}")?;
                }
                Ok(())
            }
            Statement::Grant(p) | Statement::Revoke(p) => {
                let grant = matches!(self, Statement::Grant(_));
                f.write_str(if grant { "GRANT " } else { "REVOKE " })?;
                sep(f, &p.rights, ", ")?;
                write!(f, " ON {} {} ", p.table, if grant { "TO" } else { "FROM" })?;
                match p.grantee {
                    Grantee::All => f.write_str("ALL"),
                    Grantee::Tenant(t) => write!(f, "{t}"),
                }
            }
            Statement::SetScope(s) => write!(f, "SET SCOPE = \"{s}\""),
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::parser::{parse, parse_expr};

    fn roundtrip(sql: &str) {
        let a = parse(sql).unwrap();
        let printed = a.to_string();
        let b = parse(&printed).unwrap_or_else(|e| panic!("reparse of {printed}: {e}"));
        assert_eq!(a, b, "{printed}");
        assert_eq!(printed, b.to_string());
    }

    #[test]
    fn canonical_text_for_simple_select() {
        assert_eq!(parse("select E_salary   from Employees").unwrap().to_string(), "SELECT E_salary FROM Employees");
    }

    #[test]
    fn in_list_prints_compactly() {
        assert_eq!(parse_expr("E_ttid IN (3, 7)").unwrap().to_string(), "E_ttid IN (3,7)");
    }

    #[test]
    fn statements_roundtrip() {
        for sql in [
            "SELECT a - (b - c), (a + b) * c, -x, -(5), - 5, NOT (a = 1 OR b = 2) FROM t",
            "SELECT * FROM a JOIN (b JOIN c ON b.x = c.x) ON a.y = b.y, d",
            "SELECT x FROM t WHERE NOT EXISTS (SELECT 1 FROM s WHERE s.a = t.a) AND y NOT IN (1,2)",
            "SELECT CASE WHEN a > 1 THEN 'x''y' ELSE NULL END AS c FROM t GROUP BY a HAVING COUNT(*) > 1 ORDER BY c DESC",
            "SELECT COUNT(DISTINCT a), currencyFromUniversal(currencyToUniversal(E_salary, E_ttid), 0) FROM t",
            "SELECT 150000.0, 1e-7, x FROM (SELECT x FROM t) AS d WHERE x BETWEEN 1 AND 2",
            "CREATE TABLE R GLOBAL (a INTEGER NOT NULL DEFAULT -1 COMPARABLE, b VARCHAR(25), CONSTRAINT pk PRIMARY KEY (a), CHECK ((SELECT COUNT(a) FROM R) = 0))",
            "INSERT INTO t (a, b) VALUES (1, 'x'), (2, NULL)",
            "INSERT INTO t (a) SELECT a FROM s",
            "UPDATE t SET a = a + 1 WHERE b = 'x'",
            "DELETE FROM t",
            "GRANT READ, INSERT ON Employees TO 42",
            "REVOKE ALL ON Employees FROM ALL",
            "SET SCOPE = \"FROM Employees E WHERE E.E_salary > 180K\"",
            "ALTER TABLE t ADD CONSTRAINT fk FOREIGN KEY (a) REFERENCES s (b)",
            "CREATE VIEW v AS SELECT a FROM t",
        ] {
            roundtrip(sql);
        }
    }
}
