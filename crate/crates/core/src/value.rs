//! Scalar values shared by the executor, the direct interpreter and the
//! conversion functions.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Relative tolerance used whenever a decimal takes part in a comparison.
pub const DECIMAL_REL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    Int,
    Decimal,
    Text,
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarType::Int => write!(f, "INTEGER"),
            ScalarType::Decimal => write!(f, "DECIMAL"),
            ScalarType::Text => write!(f, "VARCHAR"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Int(i64),
    Dec(f64),
    Text(Arc<str>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValueError {
    #[error("type mismatch: cannot {op} {left} and {right}")]
    TypeMismatch {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error("integer overflow in {0}")]
    Overflow(&'static str),
}

impl Value {
    pub fn text(s: impl AsRef<str>) -> Value {
        Value::Text(Arc::from(s.as_ref()))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn scalar_type(&self) -> Option<ScalarType> {
        match self {
            Value::Null => None,
            Value::Int(_) => Some(ScalarType::Int),
            Value::Dec(_) => Some(ScalarType::Decimal),
            Value::Text(_) => Some(ScalarType::Text),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Dec(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Dec(d) if d.fract() == 0.0 => Some(*d as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Null => "NULL",
            Value::Int(_) => "INTEGER",
            Value::Dec(_) => "DECIMAL",
            Value::Text(_) => "TEXT",
        }
    }

    /// SQL comparison. `None` when either side is NULL.
    pub fn sql_cmp(&self, other: &Value) -> Result<Option<Ordering>, ValueError> {
        match (self, other) {
            (Value::Null, _) | (_, Value::Null) => Ok(None),
            (Value::Int(a), Value::Int(b)) => Ok(Some(a.cmp(b))),
            (Value::Text(a), Value::Text(b)) => Ok(Some(a.as_ref().cmp(b.as_ref()))),
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => Ok(Some(approx_cmp(x, y))),
                _ => Err(ValueError::TypeMismatch {
                    op: "compare",
                    left: a.kind().into(),
                    right: b.kind().into(),
                }),
            },
        }
    }

    /// Equality used for grouping and multiset comparison: NULL equals NULL.
    pub fn group_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Null, Value::Null) => true,
            (Value::Null, _) | (_, Value::Null) => false,
            _ => matches!(self.sql_cmp(other), Ok(Some(Ordering::Equal))),
        }
    }

    /// Equality with relative tolerance `rel` on numbers; NULL equals NULL.
    pub fn eq_within(&self, other: &Value, rel: f64) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(x), Some(y)) => x == y || (x - y).abs() <= rel * x.abs().max(y.abs()),
            _ => self.group_eq(other),
        }
    }

    /// Total order for sorting: NULLs first, then numbers, then text.
    pub fn sort_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Int(_) | Value::Dec(_) => 1,
                Value::Text(_) => 2,
            }
        }
        match rank(self).cmp(&rank(other)) {
            Ordering::Equal => self
                .sql_cmp(other)
                .ok()
                .flatten()
                .unwrap_or(Ordering::Equal),
            o => o,
        }
    }

    /// Hashable key; numbers are snapped to six fractional digits so that
    /// values equal within tolerance land in the same bucket.
    pub fn group_key(&self) -> GroupKey {
        match self {
            Value::Null => GroupKey::Null,
            Value::Int(i) => GroupKey::Num(*i as i128 * 1_000_000),
            Value::Dec(d) => GroupKey::Num((d * 1e6).round() as i128),
            Value::Text(s) => GroupKey::Text(s.clone()),
        }
    }

    pub fn add(&self, other: &Value) -> Result<Value, ValueError> {
        self.arith(other, "add", i64::checked_add, |a, b| a + b)
    }

    pub fn sub(&self, other: &Value) -> Result<Value, ValueError> {
        self.arith(other, "subtract", i64::checked_sub, |a, b| a - b)
    }

    pub fn mul(&self, other: &Value) -> Result<Value, ValueError> {
        self.arith(other, "multiply", i64::checked_mul, |a, b| a * b)
    }

    /// Division always yields a decimal; division by zero yields NULL.
    pub fn div(&self, other: &Value) -> Result<Value, ValueError> {
        if self.is_null() || other.is_null() {
            return Ok(Value::Null);
        }
        match (self.as_f64(), other.as_f64()) {
            (Some(_), Some(y)) if y == 0.0 => Ok(Value::Null),
            (Some(x), Some(y)) => Ok(Value::Dec(x / y)),
            _ => Err(ValueError::TypeMismatch {
                op: "divide",
                left: self.kind().into(),
                right: other.kind().into(),
            }),
        }
    }

    pub fn neg(&self) -> Result<Value, ValueError> {
        match self {
            Value::Null => Ok(Value::Null),
            Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(ValueError::Overflow("negate")),
            Value::Dec(d) => Ok(Value::Dec(-d)),
            Value::Text(_) => Err(ValueError::TypeMismatch {
                op: "negate",
                left: "TEXT".into(),
                right: "-".into(),
            }),
        }
    }

    fn arith(
        &self,
        other: &Value,
        op: &'static str,
        int_op: fn(i64, i64) -> Option<i64>,
        dec_op: fn(f64, f64) -> f64,
    ) -> Result<Value, ValueError> {
        match (self, other) {
            (Value::Null, _) | (_, Value::Null) => Ok(Value::Null),
            (Value::Int(a), Value::Int(b)) => int_op(*a, *b)
                .map(Value::Int)
                .ok_or(ValueError::Overflow(op)),
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => Ok(Value::Dec(dec_op(x, y))),
                _ => Err(ValueError::TypeMismatch {
                    op,
                    left: a.kind().into(),
                    right: b.kind().into(),
                }),
            },
        }
    }

    /// Coerce into a column of the given type at the storage boundary.
    /// Decimals are stored with two fractional digits.
    pub fn coerce_to(&self, ty: ScalarType) -> Result<Value, ValueError> {
        let mismatch = || ValueError::TypeMismatch {
            op: "store",
            left: self.kind().into(),
            right: ty.to_string(),
        };
        match (self, ty) {
            (Value::Null, _) => Ok(Value::Null),
            (Value::Int(i), ScalarType::Int) => Ok(Value::Int(*i)),
            (Value::Dec(d), ScalarType::Int) if d.fract() == 0.0 => Ok(Value::Int(*d as i64)),
            (Value::Int(_) | Value::Dec(_), ScalarType::Decimal) => {
                Ok(Value::Dec(round2(self.as_f64().unwrap())))
            }
            (Value::Text(s), ScalarType::Text) => Ok(Value::Text(s.clone())),
            _ => Err(mismatch()),
        }
    }
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn approx_eq(x: f64, y: f64) -> bool {
    if x == y {
        return true;
    }
    let scale = x.abs().max(y.abs());
    (x - y).abs() <= DECIMAL_REL_TOLERANCE * scale.max(1e-300)
}

fn approx_cmp(x: f64, y: f64) -> Ordering {
    if approx_eq(x, y) {
        Ordering::Equal
    } else if x < y {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Int(i) => s.serialize_i64(*i),
            Value::Dec(d) => s.serialize_f64(*d),
            Value::Text(t) => s.serialize_str(t),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Null => Ok(Value::Null),
            serde_json::Value::String(s) => Ok(Value::text(s)),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => Ok(Value::Int(i)),
                None => n.as_f64().map(Value::Dec).ok_or_else(|| D::Error::custom("bad number")),
            },
            other => Err(D::Error::custom(format!("expected scalar, found {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupKey {
    Null,
    Num(i128),
    Text(Arc<str>),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.group_eq(other)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "NULL"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Dec(d) => write!(f, "{d:.2}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_numeric_comparison_uses_tolerance() {
        let a = Value::Dec(79999.99999999999);
        let b = Value::Int(80000);
        assert_eq!(a.sql_cmp(&b).unwrap(), Some(Ordering::Equal));
        assert_eq!(a.group_key(), b.group_key());
    }

    #[test]
    fn null_propagates_and_division_by_zero_is_null() {
        assert!(Value::Null.add(&Value::Int(1)).unwrap().is_null());
        assert!(Value::Int(1).div(&Value::Int(0)).unwrap().is_null());
        assert_eq!(Value::Int(7).div(&Value::Int(2)).unwrap(), Value::Dec(3.5));
    }

    #[test]
    fn text_and_number_do_not_compare() {
        assert!(Value::text("a").sql_cmp(&Value::Int(1)).is_err());
    }

    #[test]
    fn decimal_storage_rounds_to_cents() {
        let v = Value::Dec(88888.888888).coerce_to(ScalarType::Decimal).unwrap();
        assert_eq!(v.as_f64(), Some(88888.89));
    }
}
