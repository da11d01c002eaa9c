//! Conversion function pairs: per-tenant `toUniversal` / `fromUniversal`
//! partial functions through a shared universal format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::Direction;
use crate::tenant::TenantId;
use crate::value::{ScalarType, Value, DECIMAL_REL_TOLERANCE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConversionError {
    #[error("unknown conversion pair '{0}'")]
    UnknownConversionPair(String),
    #[error("tenant {tenant} has no parameters for conversion pair '{pair}'")]
    UnknownTenant { pair: String, tenant: TenantId },
    #[error("value {value} is outside the domain of {pair} for tenant {tenant}")]
    DomainError { pair: String, tenant: TenantId, value: String },
    #[error("invalid parameters for conversion pair '{pair}': {reason}")]
    InvalidParameters { pair: String, reason: String },
    #[error("tenant id {0} is not an integer tenant id")]
    BadTenantArgument(String),
}

/// Algebraic strength of a pair, weakest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConversionClass {
    EqualityPreserving,
    OrderPreserving,
    AffineLinear,
    MultiplicativeLinear,
}

impl ConversionClass {
    pub const ALL: [ConversionClass; 4] = [
        ConversionClass::MultiplicativeLinear,
        ConversionClass::AffineLinear,
        ConversionClass::OrderPreserving,
        ConversionClass::EqualityPreserving,
    ];
}

impl fmt::Display for ConversionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConversionClass::MultiplicativeLinear => "multiplicative-linear",
            ConversionClass::AffineLinear => "affine-linear",
            ConversionClass::OrderPreserving => "order-preserving",
            ConversionClass::EqualityPreserving => "equality-preserving",
        };
        f.write_str(s)
    }
}

/// `fromUniversal(u) = rate * u + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub rate: f64,
    #[serde(default)]
    pub offset: f64,
}

impl LinearParams {
    pub const IDENTITY: LinearParams = LinearParams { rate: 1.0, offset: 0.0 };

    pub fn scale(rate: f64) -> LinearParams {
        LinearParams { rate, offset: 0.0 }
    }
}

/// Explicit finite mapping tables. Kept separate per direction so that
/// ill-formed pairs can be expressed (and caught by validation).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OpaqueMap {
    pub to_universal: Vec<(Value, Value)>,
    pub from_universal: Vec<(Value, Value)>,
}

impl OpaqueMap {
    /// A mapping and its exact inverse.
    pub fn bijection(entries: impl IntoIterator<Item = (Value, Value)>) -> OpaqueMap {
        let to_universal: Vec<_> = entries.into_iter().collect();
        let from_universal = to_universal.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
        OpaqueMap {
            to_universal,
            from_universal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairKind {
    Linear {
        #[serde(default, with = "tenant_keys")]
        params: BTreeMap<TenantId, LinearParams>,
    },
    PrefixMap {
        #[serde(default, with = "tenant_keys")]
        params: BTreeMap<TenantId, String>,
    },
    Opaque {
        #[serde(default)]
        monotone: bool,
        #[serde(default, with = "tenant_keys")]
        params: BTreeMap<TenantId, OpaqueMap>,
    },
}

/// Tenant-keyed maps with string keys, so they survive buffering inside
/// tagged or flattened enums.
pub(crate) mod tenant_keys {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::tenant::TenantId;

    pub fn serialize<T: Serialize, S: Serializer>(m: &BTreeMap<TenantId, T>, s: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, &T> = m.iter().map(|(k, v)| (k.0.to_string(), v)).collect();
        // keep numeric ordering stable in the output
        let mut entries: Vec<_> = keyed.into_iter().collect();
        entries.sort_by_key(|(k, _)| k.parse::<u32>().unwrap_or(u32::MAX));
        s.collect_map(entries)
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<TenantId, T>, D::Error> {
        let raw = BTreeMap::<String, T>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                k.parse::<u32>()
                    .map(|id| (TenantId(id), v))
                    .map_err(|_| D::Error::custom(format!("bad tenant id '{k}'")))
            })
            .collect()
    }
}

/// Per-tenant parameter choice handed to tenant registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TenantParams {
    Linear(LinearParams),
    Prefix(String),
    Opaque(OpaqueMap),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionPair {
    pub name: String,
    pub value_type: ScalarType,
    #[serde(flatten)]
    pub kind: PairKind,
}

impl ConversionPair {
    pub fn linear(name: &str) -> ConversionPair {
        ConversionPair {
            name: name.to_string(),
            value_type: ScalarType::Decimal,
            kind: PairKind::Linear { params: BTreeMap::new() },
        }
    }

    pub fn prefix(name: &str) -> ConversionPair {
        ConversionPair {
            name: name.to_string(),
            value_type: ScalarType::Text,
            kind: PairKind::PrefixMap { params: BTreeMap::new() },
        }
    }

    pub fn opaque(name: &str, value_type: ScalarType, monotone: bool) -> ConversionPair {
        ConversionPair {
            name: name.to_string(),
            value_type,
            kind: PairKind::Opaque {
                monotone,
                params: BTreeMap::new(),
            },
        }
    }

    pub fn tenants(&self) -> BTreeSet<TenantId> {
        match &self.kind {
            PairKind::Linear { params } => params.keys().copied().collect(),
            PairKind::PrefixMap { params } => params.keys().copied().collect(),
            PairKind::Opaque { params, .. } => params.keys().copied().collect(),
        }
    }

    pub fn has_tenant(&self, t: TenantId) -> bool {
        self.tenants().contains(&t)
    }

    /// Install (or replace) the parameters of one tenant.
    pub fn set_tenant(&mut self, t: TenantId, p: TenantParams) -> Result<(), ConversionError> {
        let invalid = |reason: &str| ConversionError::InvalidParameters {
            pair: self.name.clone(),
            reason: reason.to_string(),
        };
        match (&mut self.kind, p) {
            (PairKind::Linear { params }, TenantParams::Linear(lp)) => {
                if lp.rate == 0.0 || !lp.rate.is_finite() || !lp.offset.is_finite() {
                    return Err(invalid("rate must be finite and non-zero"));
                }
                params.insert(t, lp);
            }
            (PairKind::PrefixMap { params }, TenantParams::Prefix(p)) => {
                params.insert(t, p);
            }
            (PairKind::Opaque { params, .. }, TenantParams::Opaque(m)) => {
                params.insert(t, m);
            }
            _ => return Err(invalid("parameter shape does not match pair kind")),
        }
        Ok(())
    }

    pub fn linear_params(&self, t: TenantId) -> Option<LinearParams> {
        match &self.kind {
            PairKind::Linear { params } => params.get(&t).copied(),
            _ => None,
        }
    }

    fn unknown(&self, t: TenantId) -> ConversionError {
        ConversionError::UnknownTenant {
            pair: self.name.clone(),
            tenant: t,
        }
    }

    fn domain(&self, t: TenantId, x: &Value) -> ConversionError {
        ConversionError::DomainError {
            pair: self.name.clone(),
            tenant: t,
            value: x.to_string(),
        }
    }

    pub fn to_universal(&self, t: TenantId, x: &Value) -> Result<Value, ConversionError> {
        self.apply(Direction::ToUniversal, t, x)
    }

    pub fn from_universal(&self, t: TenantId, u: &Value) -> Result<Value, ConversionError> {
        self.apply(Direction::FromUniversal, t, u)
    }

    pub fn apply(&self, dir: Direction, t: TenantId, x: &Value) -> Result<Value, ConversionError> {
        match &self.kind {
            PairKind::Linear { params } => {
                let p = params.get(&t).ok_or_else(|| self.unknown(t))?;
                if x.is_null() {
                    return Ok(Value::Null);
                }
                let v = x.as_f64().ok_or_else(|| self.domain(t, x))?;
                Ok(Value::Dec(match dir {
                    Direction::ToUniversal => (v - p.offset) / p.rate,
                    Direction::FromUniversal => p.rate * v + p.offset,
                }))
            }
            PairKind::PrefixMap { params } => {
                let prefix = params.get(&t).ok_or_else(|| self.unknown(t))?;
                if x.is_null() {
                    return Ok(Value::Null);
                }
                let s = x.as_str().ok_or_else(|| self.domain(t, x))?;
                match dir {
                    Direction::ToUniversal => s
                        .strip_prefix(prefix.as_str())
                        .map(Value::text)
                        .ok_or_else(|| self.domain(t, x)),
                    Direction::FromUniversal => Ok(Value::text(format!("{prefix}{s}"))),
                }
            }
            PairKind::Opaque { params, .. } => {
                let m = params.get(&t).ok_or_else(|| self.unknown(t))?;
                if x.is_null() {
                    return Ok(Value::Null);
                }
                let table = match dir {
                    Direction::ToUniversal => &m.to_universal,
                    Direction::FromUniversal => &m.from_universal,
                };
                table
                    .iter()
                    .find(|(k, _)| k.group_eq(x))
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| self.domain(t, x))
            }
        }
    }

    /// `fromUniversal(toUniversal(x, from), to)`; the identity when `from == to`.
    pub fn convert(&self, from: TenantId, to: TenantId, x: &Value) -> Result<Value, ConversionError> {
        if !self.has_tenant(from) {
            return Err(self.unknown(from));
        }
        if !self.has_tenant(to) {
            return Err(self.unknown(to));
        }
        if from == to {
            return Ok(x.clone());
        }
        let u = self.to_universal(from, x)?;
        self.from_universal(to, &u)
    }

    /// Strongest class provable from the pair's definition.
    pub fn classify(&self) -> ConversionClass {
        match &self.kind {
            PairKind::Linear { params } => {
                if params.values().all(|p| p.rate > 0.0) {
                    if params.values().all(|p| p.offset == 0.0) {
                        ConversionClass::MultiplicativeLinear
                    } else {
                        ConversionClass::AffineLinear
                    }
                } else {
                    ConversionClass::EqualityPreserving
                }
            }
            PairKind::PrefixMap { .. } => ConversionClass::EqualityPreserving,
            PairKind::Opaque { monotone, params } => {
                if *monotone && params.values().all(opaque_is_monotone) {
                    ConversionClass::OrderPreserving
                } else {
                    ConversionClass::EqualityPreserving
                }
            }
        }
    }

    /// Check the three validity clauses on a finite sample domain.
    pub fn validate(&self, tenants: &[TenantId], samples: &[Value]) -> ValidationReport {
        let mut report = ValidationReport::default();

        // (i) every universal value reached by some tenant is reachable by all
        let mut images: Vec<Value> = Vec::new();
        for &t in tenants {
            for x in samples {
                if let Ok(u) = self.to_universal(t, x) {
                    if !u.is_null() && !images.iter().any(|v| v.group_eq(&u)) {
                        images.push(u);
                    }
                }
            }
        }
        let mut witness = None;
        'outer: for u in &images {
            for &t in tenants {
                let back = self
                    .from_universal(t, u)
                    .and_then(|x| self.to_universal(t, &x).map(|u2| (x, u2)));
                match back {
                    Ok((x, u2)) if same_value(&u2, u, &x) => {}
                    _ => {
                        witness = Some(format!("universal value {u} not in image of tenant {t}"));
                        break 'outer;
                    }
                }
            }
        }
        report.push(Clause::SharedImage, witness);

        // (ii) injective on the sampled domain
        let mut witness = None;
        'inj: for &t in tenants {
            let mapped: Vec<(&Value, Value)> = samples
                .iter()
                .filter_map(|x| self.to_universal(t, x).ok().map(|u| (x, u)))
                .collect();
            for (i, (x, ux)) in mapped.iter().enumerate() {
                for (y, uy) in &mapped[i + 1..] {
                    if !x.group_eq(y) && ux.group_eq(uy) {
                        witness = Some(format!("tenant {t}: {x} and {y} both map to {ux}"));
                        break 'inj;
                    }
                }
            }
        }
        report.push(Clause::Bijective, witness);

        // (iii) fromUniversal inverts toUniversal
        let mut witness = None;
        'rt: for &t in tenants {
            for x in samples {
                if let Ok(u) = self.to_universal(t, x) {
                    match self.from_universal(t, &u) {
                        Ok(back) if same_value(&back, x, &u) => {}
                        Ok(back) => {
                            witness = Some(format!("tenant {t}: {x} -> {u} -> {back}"));
                            break 'rt;
                        }
                        Err(e) => {
                            witness = Some(format!("tenant {t}: {x} -> {u} -> error: {e}"));
                            break 'rt;
                        }
                    }
                }
            }
        }
        report.push(Clause::RoundTrip, witness);
        report
    }

    /// Values suitable as a default validation domain for this pair.
    pub fn standard_samples(&self) -> Vec<Value> {
        match &self.kind {
            PairKind::Linear { .. } => [0.0, 1.0, -3.5, 50_000.0, 135_000.0, 1_000_000.0, 0.01]
                .into_iter()
                .map(Value::Dec)
                .collect(),
            PairKind::PrefixMap { params } => {
                let mut out = Vec::new();
                for p in params.values() {
                    for n in ["41791234567", "15550100", "0", ""] {
                        out.push(Value::text(format!("{p}{n}")));
                    }
                }
                out
            }
            PairKind::Opaque { params, .. } => params
                .values()
                .flat_map(|m| m.to_universal.iter().map(|(k, _)| k.clone()))
                .collect(),
        }
    }
}

/// Exact for text; for numbers, within the decimal tolerance of the largest
/// magnitude seen along the conversion, `via` included.
fn same_value(a: &Value, b: &Value, via: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => {
            let scale = x.abs().max(y.abs()).max(via.as_f64().map_or(0.0, f64::abs));
            x == y || (x - y).abs() <= DECIMAL_REL_TOLERANCE * scale
        }
        _ => a.group_eq(b),
    }
}

fn opaque_is_monotone(m: &OpaqueMap) -> bool {
    let mut entries = m.to_universal.clone();
    entries.sort_by(|a, b| a.0.sort_cmp(&b.0));
    entries
        .windows(2)
        .all(|w| matches!(w[0].1.sql_cmp(&w[1].1), Ok(Some(std::cmp::Ordering::Less))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    /// All tenants' partial functions share one image.
    SharedImage,
    /// Each partial function is injective on its domain.
    Bijective,
    /// `fromUniversal` inverts `toUniversal`.
    RoundTrip,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clause::SharedImage => "(i) shared image",
            Clause::Bijective => "(ii) bijective",
            Clause::RoundTrip => "(iii) round trip",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseResult {
    pub clause: Clause,
    pub passed: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub clauses: Vec<ClauseResult>,
}

impl ValidationReport {
    fn push(&mut self, clause: Clause, witness: Option<String>) {
        self.clauses.push(ClauseResult {
            clause,
            passed: witness.is_none(),
            witness,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, c: Clause) -> &ClauseResult {
        self.clauses.iter().find(|r| r.clause == c).expect("all clauses are reported")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            write!(f, "{}: {}", c.clause, if c.passed { "pass" } else { "FAIL" })?;
            if let Some(w) = &c.witness {
                write!(f, " ({w})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn currency() -> ConversionPair {
        let mut p = ConversionPair::linear("currency");
        p.set_tenant(TenantId(0), TenantParams::Linear(LinearParams::IDENTITY)).unwrap();
        p.set_tenant(TenantId(1), TenantParams::Linear(LinearParams::scale(0.9))).unwrap();
        p
    }

    fn phone() -> ConversionPair {
        let mut p = ConversionPair::prefix("phone");
        p.set_tenant(TenantId(0), TenantParams::Prefix("00".into())).unwrap();
        p.set_tenant(TenantId(1), TenantParams::Prefix("+".into())).unwrap();
        p
    }

    #[test]
    fn linear_directions() {
        let c = currency();
        assert_eq!(c.from_universal(TenantId(1), &Value::Int(150_000)).unwrap(), Value::Int(135_000));
        assert_eq!(c.to_universal(TenantId(1), &Value::Int(135_000)).unwrap(), Value::Int(150_000));
        let x = c.convert(TenantId(1), TenantId(0), &Value::Int(200_000)).unwrap();
        assert!((x.as_f64().unwrap() - 200_000.0 / 0.9).abs() < 1e-6);
        assert_eq!(c.classify(), ConversionClass::MultiplicativeLinear);
    }

    #[test]
    fn prefix_directions_and_domain_errors() {
        let p = phone();
        assert_eq!(
            p.to_universal(TenantId(0), &Value::text("0041791234567")).unwrap(),
            Value::text("41791234567")
        );
        assert_eq!(
            p.from_universal(TenantId(1), &Value::text("41791234567")).unwrap(),
            Value::text("+41791234567")
        );
        assert!(matches!(
            p.to_universal(TenantId(1), &Value::text("0041")),
            Err(ConversionError::DomainError { .. })
        ));
        assert_eq!(p.classify(), ConversionClass::EqualityPreserving);
    }

    #[test]
    fn null_passes_through() {
        assert!(currency().to_universal(TenantId(1), &Value::Null).unwrap().is_null());
    }

    #[test]
    fn validation_of_good_and_broken_pairs() {
        let c = currency();
        let samples = [Value::Int(0), Value::Int(1), Value::Int(50_000)];
        assert!(c.validate(&[TenantId(0), TenantId(1)], &samples).all_passed());

        let mut broken = ConversionPair::opaque("broken", ScalarType::Int, false);
        broken
            .set_tenant(
                TenantId(0),
                TenantParams::Opaque(OpaqueMap {
                    to_universal: vec![(Value::Int(1), Value::Int(10))],
                    from_universal: vec![(Value::Int(10), Value::Int(2))],
                }),
            )
            .unwrap();
        let r = broken.validate(&[TenantId(0)], &[Value::Int(1)]);
        let rt = r.clause(Clause::RoundTrip);
        assert!(!rt.passed && rt.witness.is_some());

        let mut disjoint = ConversionPair::opaque("disjoint", ScalarType::Int, false);
        disjoint
            .set_tenant(TenantId(0), TenantParams::Opaque(OpaqueMap::bijection([(Value::Int(1), Value::Int(10))])))
            .unwrap();
        disjoint
            .set_tenant(TenantId(1), TenantParams::Opaque(OpaqueMap::bijection([(Value::Int(1), Value::Int(20))])))
            .unwrap();
        let r = disjoint.validate(&[TenantId(0), TenantId(1)], &[Value::Int(1)]);
        assert!(!r.clause(Clause::SharedImage).passed);
        assert!(r.clause(Clause::RoundTrip).passed);
    }

    #[test]
    fn classification_ladder() {
        let mut affine = ConversionPair::linear("temp");
        affine
            .set_tenant(TenantId(0), TenantParams::Linear(LinearParams { rate: 1.8, offset: 32.0 }))
            .unwrap();
        assert_eq!(affine.classify(), ConversionClass::AffineLinear);
        let mut neg = ConversionPair::linear("neg");
        neg.set_tenant(TenantId(0), TenantParams::Linear(LinearParams::scale(-1.0))).unwrap();
        assert_eq!(neg.classify(), ConversionClass::EqualityPreserving);
        let mut mono = ConversionPair::opaque("grade", ScalarType::Int, true);
        mono.set_tenant(
            TenantId(0),
            TenantParams::Opaque(OpaqueMap::bijection([
                (Value::Int(1), Value::Int(10)),
                (Value::Int(2), Value::Int(30)),
            ])),
        )
        .unwrap();
        assert_eq!(mono.classify(), ConversionClass::OrderPreserving);
        let mut liar = ConversionPair::opaque("liar", ScalarType::Int, true);
        liar.set_tenant(
            TenantId(0),
            TenantParams::Opaque(OpaqueMap::bijection([
                (Value::Int(1), Value::Int(30)),
                (Value::Int(2), Value::Int(10)),
            ])),
        )
        .unwrap();
        assert_eq!(liar.classify(), ConversionClass::EqualityPreserving);
        assert!(ConversionClass::MultiplicativeLinear > ConversionClass::EqualityPreserving);
    }

    #[test]
    fn pair_serializes_with_kind_tag() {
        let c = currency();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"kind\":\"linear\""));
        let back: ConversionPair = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
