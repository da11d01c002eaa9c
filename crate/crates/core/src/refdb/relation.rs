use std::cmp::Ordering;
use std::fmt;

use crate::value::{ScalarType, Value, DECIMAL_REL_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    /// `None` for computed columns whose type is not known statically.
    pub ty: Option<ScalarType>,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: Option<ScalarType>) -> Column {
        Column { name: name.into(), ty }
    }
}

pub type Row = Vec<Value>;

/// Bag of rows with column metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Relation {
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    /// Set when the rows carry the order of an ORDER BY clause.
    pub ordered: bool,
}

impl Relation {
    pub fn new(columns: Vec<Column>) -> Relation {
        Relation {
            columns,
            rows: Vec::new(),
            ordered: false,
        }
    }

    pub fn with_rows(columns: Vec<Column>, rows: Vec<Row>) -> Relation {
        Relation {
            columns,
            rows,
            ordered: false,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Single value of a 1x1 relation.
    pub fn scalar(&self) -> Option<&Value> {
        match (self.columns.len(), self.rows.len()) {
            (1, 1) => self.rows[0].first(),
            _ => None,
        }
    }

    /// Project onto the first `n` columns (drops trailing hidden columns).
    pub fn truncate_columns(&mut self, n: usize) {
        self.columns.truncate(n);
        for r in &mut self.rows {
            r.truncate(n);
        }
    }

    /// Multiset equality with tolerant numeric comparison. Column names are
    /// not compared; arities must agree.
    pub fn multiset_eq(&self, other: &Relation) -> bool {
        self.multiset_diff(other).is_none()
    }

    /// `None` when equal as multisets; otherwise a short description of
    /// the first difference.
    pub fn multiset_diff(&self, other: &Relation) -> Option<String> {
        self.multiset_diff_within(other, DECIMAL_REL_TOLERANCE)
    }

    /// `multiset_diff` with an explicit relative tolerance for decimals.
    pub fn multiset_diff_within(&self, other: &Relation, rel: f64) -> Option<String> {
        let row_eq = |a: &Row, b: &Row| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.eq_within(y, rel));
        if self.columns.len() != other.columns.len() {
            return Some(format!("arity {} vs {}", self.columns.len(), other.columns.len()));
        }
        if self.rows.len() != other.rows.len() {
            return Some(format!("row count {} vs {}", self.rows.len(), other.rows.len()));
        }
        let mut a: Vec<&Row> = self.rows.iter().collect();
        let mut b: Vec<&Row> = other.rows.iter().collect();
        a.sort_by(|x, y| row_cmp(x, y));
        b.sort_by(|x, y| row_cmp(x, y));
        if a.iter().zip(&b).all(|(x, y)| row_eq(x, y)) {
            return None;
        }
        // tolerance can perturb the sort order; fall back to greedy matching
        let mut used = vec![false; b.len()];
        for x in &a {
            match (0..b.len()).find(|&j| !used[j] && row_eq(x, b[j])) {
                Some(j) => used[j] = true,
                None => return Some(format!("row {} has no counterpart", fmt_row(x))),
            }
        }
        None
    }
}

pub fn row_cmp(a: &Row, b: &Row) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.sort_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

pub fn row_eq(a: &Row, b: &Row) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.group_eq(y))
}

fn fmt_row(r: &Row) -> String {
    let parts: Vec<String> = r.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(", "))
}

impl Relation {
    /// Aligned text table. Decimals get two fractional digits unless
    /// `full_precision` is set.
    pub fn render(&self, full_precision: bool) -> String {
        let cell = |v: &Value| match v {
            Value::Dec(d) if full_precision => format!("{d}"),
            other => other.to_string(),
        };
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(cell).collect()).collect();
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.name.len()).collect();
        for r in &cells {
            for (i, c) in r.iter().enumerate() {
                if i < widths.len() {
                    widths[i] = widths[i].max(c.len());
                }
            }
        }
        let mut out = String::new();
        let mut line = |vals: Vec<&str>| {
            let parts: Vec<String> = vals
                .iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:<w$}"))
                .collect();
            out.push_str(parts.join(" | ").trim_end());
            out.push('\n');
        };
        line(self.columns.iter().map(|c| c.name.as_str()).collect());
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let rule = rule.join("-+-");
        line(vec![rule.as_str()]);
        for r in &cells {
            line(r.iter().map(String::as_str).collect());
        }
        out.push_str(&format!("({} row{})\n", self.rows.len(), if self.rows.len() == 1 { "" } else { "s" }));
        out
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiset_equality_ignores_order_and_tolerates_rounding() {
        let cols = vec![Column::new("a", None), Column::new("b", None)];
        let x = Relation::with_rows(
            cols.clone(),
            vec![vec![Value::Int(1), Value::Dec(0.1 + 0.2)], vec![Value::Int(2), Value::Null]],
        );
        let y = Relation::with_rows(cols, vec![vec![Value::Int(2), Value::Null], vec![Value::Dec(1.0), Value::Dec(0.3)]]);
        assert!(x.multiset_eq(&y));
        let mut z = y.clone();
        z.rows.push(vec![Value::Int(2), Value::Null]);
        assert!(!x.multiset_eq(&z));
    }
}
