//! Tenant registry, table metadata, constraints and the privilege matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ast::{self, ColumnAnnotation, ConstraintKind, CreateTable, Generality, Literal};
use crate::conversion::{ConversionError, ConversionPair, TenantParams};
use crate::tenant::{Right, TenantId};
use crate::value::{ScalarType, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("tenant {0} is already registered")]
    DuplicateTenant(TenantId),
    #[error("unknown tenant {0}")]
    UnknownTenant(TenantId),
    #[error("unknown conversion pair '{0}'")]
    UnknownConversionPair(String),
    #[error("conversion pair '{0}' is already registered")]
    DuplicatePair(String),
    #[error("table '{0}' already exists")]
    DuplicateTable(String),
    #[error("duplicate column '{column}' in table '{table}'")]
    DuplicateColumn { table: String, column: String },
    #[error("global table '{table}' cannot have convertible column '{column}'")]
    ConvertibleOnGlobalTable { table: String, column: String },
    #[error("global table '{table}' cannot have tenant-specific column '{column}'")]
    SpecificOnGlobalTable { table: String, column: String },
    #[error("unknown table '{0}'")]
    UnknownTable(String),
    #[error("unknown column '{column}' in table '{table}'")]
    UnknownColumn { table: String, column: String },
    #[error("tenant {client} is not authorized to {action} on '{table}'")]
    NotAuthorized { client: TenantId, action: String, table: String },
    #[error("invalid definition: {0}")]
    InvalidDefinition(String),
    #[error(transparent)]
    Conversion(#[from] ConversionError),
    #[error("catalog file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableGenerality {
    Global,
    TenantSpecific,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparability {
    Comparable,
    TenantSpecific,
    Convertible(String),
}

impl Comparability {
    pub fn pair(&self) -> Option<&str> {
        match self {
            Comparability::Convertible(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub ty: ScalarType,
    /// Declared SQL type, kept for faithful DDL output.
    pub sql_type: String,
    #[serde(default)]
    pub not_null: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    pub comparability: Comparability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintScope {
    Global,
    Tenant(TenantId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintBody {
    PrimaryKey {
        columns: Vec<String>,
    },
    ForeignKey {
        columns: Vec<String>,
        ref_table: String,
        ref_columns: Vec<String>,
    },
    /// Predicate as SQL text.
    Check {
        predicate: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub body: ConstraintBody,
    pub scope: ConstraintScope,
}

impl ConstraintDef {
    pub fn from_ast(c: &ast::TableConstraint, scope: ConstraintScope) -> ConstraintDef {
        let body = match &c.kind {
            ConstraintKind::PrimaryKey(cols) => ConstraintBody::PrimaryKey { columns: cols.clone() },
            ConstraintKind::ForeignKey {
                columns,
                ref_table,
                ref_columns,
            } => ConstraintBody::ForeignKey {
                columns: columns.clone(),
                ref_table: ref_table.clone(),
                ref_columns: ref_columns.clone(),
            },
            ConstraintKind::Check(e) => ConstraintBody::Check { predicate: e.to_string() },
        };
        ConstraintDef {
            name: c.name.clone(),
            body,
            scope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub generality: TableGenerality,
    pub columns: Vec<ColumnMeta>,
    #[serde(default)]
    pub constraints: Vec<ConstraintDef>,
    /// Hidden owner column; synthesized for tenant-specific tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttid_column: Option<String>,
}

impl TableDef {
    pub fn is_tenant_specific(&self) -> bool {
        self.generality == TableGenerality::TenantSpecific
    }

    pub fn column(&self, name: &str) -> Option<&ColumnMeta> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Columns in the shared layout: the ttid first, then the declared ones.
    pub fn shared_columns(&self) -> Vec<(String, ScalarType)> {
        let mut out = Vec::new();
        if let Some(t) = &self.ttid_column {
            out.push((t.clone(), ScalarType::Int));
        }
        out.extend(self.columns.iter().map(|c| (c.name.clone(), c.ty)));
        out
    }

    pub fn visible_columns(&self) -> Vec<(String, ScalarType)> {
        self.columns.iter().map(|c| (c.name.clone(), c.ty)).collect()
    }

    /// Build a definition from `CREATE TABLE`, applying comparability defaults.
    pub fn from_ast(ct: &CreateTable) -> Result<TableDef, CatalogError> {
        let generality = match ct.generality {
            Some(Generality::Specific) => TableGenerality::TenantSpecific,
            _ => TableGenerality::Global,
        };
        let mut columns = Vec::new();
        for c in &ct.columns {
            columns.push(column_from_ast(&ct.name, c, generality)?);
        }
        let mut constraints = Vec::new();
        for c in &ct.constraints {
            let def = ConstraintDef::from_ast(c, ConstraintScope::Global);
            if let ConstraintBody::PrimaryKey { columns: pk } = &def.body {
                for k in pk {
                    if let Some(col) = columns.iter_mut().find(|m: &&mut ColumnMeta| m.name.eq_ignore_ascii_case(k)) {
                        col.not_null = true;
                    }
                }
            }
            constraints.push(def);
        }
        Ok(TableDef {
            name: ct.name.clone(),
            generality,
            columns,
            constraints,
            ttid_column: None,
        })
    }
}

pub(crate) fn column_from_ast(
    table: &str,
    c: &ast::ColumnDef,
    generality: TableGenerality,
) -> Result<ColumnMeta, CatalogError> {
    let ty = c
        .data_type
        .scalar_type()
        .ok_or_else(|| CatalogError::InvalidDefinition(format!("unsupported type {}", c.data_type)))?;
    let comparability = match &c.annotation {
        None => match generality {
            TableGenerality::Global => Comparability::Comparable,
            TableGenerality::TenantSpecific => Comparability::TenantSpecific,
        },
        Some(ColumnAnnotation::Comparable) => Comparability::Comparable,
        Some(ColumnAnnotation::Specific) => Comparability::TenantSpecific,
        Some(a @ ColumnAnnotation::Convertible { from_fn, .. }) => {
            let pair = a.pair_name().unwrap_or_default();
            let from_pair = ast::strip_suffix_ci(from_fn, "FromUniversal");
            if pair.is_empty() || !from_pair.is_some_and(|p| p.eq_ignore_ascii_case(&pair)) {
                return Err(CatalogError::InvalidDefinition(format!(
                    "column {}: conversion functions must be <pair>ToUniversal and <pair>FromUniversal",
                    c.name
                )));
            }
            Comparability::Convertible(pair)
        }
    };
    let default = match &c.default {
        None => None,
        Some(e) => Some(literal_value(e).ok_or_else(|| {
            CatalogError::InvalidDefinition(format!("{table}.{}: DEFAULT must be a literal", c.name))
        })?),
    };
    Ok(ColumnMeta {
        name: c.name.clone(),
        ty,
        sql_type: c.data_type.to_string(),
        not_null: c.not_null,
        default,
        comparability,
    })
}

fn literal_value(e: &ast::Expr) -> Option<Value> {
    match e {
        ast::Expr::Literal(l) => Some(l.to_value()),
        ast::Expr::Unary {
            op: ast::UnaryOp::Neg,
            expr,
        } => match &**expr {
            ast::Expr::Literal(Literal::Int(i)) => Some(Value::Int(-i)),
            ast::Expr::Literal(Literal::Dec(d)) => Some(Value::Dec(-d)),
            _ => None,
        },
        _ => None,
    }
}

/// Hidden owner column name: `<prefix>_ttid`, where the prefix is the text
/// before the first underscore of the first column (`E_emp_id` -> `E_ttid`).
pub fn ttid_column_name(table: &str, columns: &[ColumnMeta]) -> String {
    match columns.first().and_then(|c| c.name.split_once('_')) {
        Some((prefix, _)) if !prefix.is_empty() => format!("{prefix}_ttid"),
        _ => format!("{table}_ttid"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Privilege {
    pub grantee: TenantId,
    /// Owner of the table instance; `None` for global tables.
    pub owner: Option<TenantId>,
    pub table: String,
    pub right: Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDef {
    pub name: String,
    /// Rewritten (plain SQL) body.
    pub sql: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Catalog {
    #[serde(default)]
    pub version: u64,
    #[serde(default)]
    pub tenants: BTreeSet<TenantId>,
    #[serde(default)]
    pub pairs: Vec<ConversionPair>,
    #[serde(default)]
    pub tables: Vec<TableDef>,
    #[serde(default)]
    pub views: Vec<ViewDef>,
    #[serde(default)]
    pub privileges: BTreeSet<Privilege>,
}

/// Meta relation used by conversion inlining.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaTable {
    pub name: String,
    pub columns: Vec<(String, ScalarType)>,
    pub rows: Vec<Vec<Value>>,
}

pub const TENANT_META_TABLE: &str = "Tenant";

impl Catalog {
    pub fn new() -> Catalog {
        Catalog::default()
    }

    fn bump(&mut self) {
        self.version += 1;
    }

    pub fn register_pair(&mut self, pair: ConversionPair) -> Result<(), CatalogError> {
        if self.pair(&pair.name).is_some() {
            return Err(CatalogError::DuplicatePair(pair.name));
        }
        self.pairs.push(pair);
        self.bump();
        Ok(())
    }

    pub fn pair(&self, name: &str) -> Option<&ConversionPair> {
        self.pairs.iter().find(|p| p.name.eq_ignore_ascii_case(name))
    }

    pub fn require_pair(&self, name: &str) -> Result<&ConversionPair, CatalogError> {
        self.pair(name)
            .ok_or_else(|| CatalogError::UnknownConversionPair(name.to_string()))
    }

    pub fn register_tenant(
        &mut self,
        id: TenantId,
        choices: BTreeMap<String, TenantParams>,
    ) -> Result<(), CatalogError> {
        if self.tenants.contains(&id) {
            return Err(CatalogError::DuplicateTenant(id));
        }
        for name in choices.keys() {
            self.require_pair(name)?;
        }
        for (name, params) in choices {
            let pair = self
                .pairs
                .iter_mut()
                .find(|p| p.name.eq_ignore_ascii_case(&name))
                .expect("checked above");
            pair.set_tenant(id, params)?;
        }
        self.tenants.insert(id);
        let tables: Vec<(String, bool)> = self
            .tables
            .iter()
            .map(|t| (t.name.clone(), t.is_tenant_specific()))
            .collect();
        for (table, specific) in tables {
            self.install_defaults(id, &table, specific);
        }
        self.bump();
        Ok(())
    }

    fn install_defaults(&mut self, t: TenantId, table: &str, specific: bool) {
        if specific {
            for right in Right::ALL {
                self.privileges.insert(Privilege {
                    grantee: t,
                    owner: Some(t),
                    table: table.to_string(),
                    right,
                });
            }
        } else {
            self.privileges.insert(Privilege {
                grantee: t,
                owner: None,
                table: table.to_string(),
                right: Right::Read,
            });
        }
    }

    pub fn is_tenant(&self, t: TenantId) -> bool {
        self.tenants.contains(&t)
    }

    pub fn define_table(&mut self, mut def: TableDef) -> Result<(), CatalogError> {
        if self.table(&def.name).is_some() || self.view(&def.name).is_some() {
            return Err(CatalogError::DuplicateTable(def.name));
        }
        let mut seen = BTreeSet::new();
        for c in &def.columns {
            if !seen.insert(c.name.to_ascii_lowercase()) {
                return Err(CatalogError::DuplicateColumn {
                    table: def.name.clone(),
                    column: c.name.clone(),
                });
            }
            match (&c.comparability, def.generality) {
                (Comparability::Convertible(_), TableGenerality::Global) => {
                    return Err(CatalogError::ConvertibleOnGlobalTable {
                        table: def.name.clone(),
                        column: c.name.clone(),
                    })
                }
                (Comparability::TenantSpecific, TableGenerality::Global) => {
                    return Err(CatalogError::SpecificOnGlobalTable {
                        table: def.name.clone(),
                        column: c.name.clone(),
                    })
                }
                (Comparability::Convertible(p), _) => {
                    self.require_pair(p)?;
                }
                _ => {}
            }
        }
        if def.columns.is_empty() {
            return Err(CatalogError::InvalidDefinition(format!("table {} has no columns", def.name)));
        }
        for con in &def.constraints {
            let cols: Vec<&String> = match &con.body {
                ConstraintBody::PrimaryKey { columns } => columns.iter().collect(),
                ConstraintBody::ForeignKey { columns, .. } => columns.iter().collect(),
                ConstraintBody::Check { .. } => vec![],
            };
            for k in cols {
                if def.column(k).is_none() {
                    return Err(CatalogError::UnknownColumn {
                        table: def.name.clone(),
                        column: k.clone(),
                    });
                }
            }
        }
        let pk: Vec<String> = def
            .constraints
            .iter()
            .filter_map(|c| match &c.body {
                ConstraintBody::PrimaryKey { columns } => Some(columns.clone()),
                _ => None,
            })
            .flatten()
            .collect();
        for c in def.columns.iter_mut() {
            if pk.iter().any(|k| k.eq_ignore_ascii_case(&c.name)) {
                c.not_null = true;
            }
        }
        def.ttid_column = if def.is_tenant_specific() {
            let name = ttid_column_name(&def.name, &def.columns);
            if def.column(&name).is_some() {
                return Err(CatalogError::InvalidDefinition(format!(
                    "column {name} collides with the hidden owner column"
                )));
            }
            Some(name)
        } else {
            None
        };
        let name = def.name.clone();
        let specific = def.is_tenant_specific();
        self.tables.push(def);
        for t in self.tenants.clone() {
            self.install_defaults(t, &name, specific);
        }
        self.bump();
        Ok(())
    }

    pub fn drop_table(&mut self, name: &str) -> Result<TableDef, CatalogError> {
        let idx = self
            .tables
            .iter()
            .position(|t| t.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))?;
        let def = self.tables.remove(idx);
        self.privileges.retain(|p| !p.table.eq_ignore_ascii_case(name));
        self.bump();
        Ok(def)
    }

    pub fn add_column(&mut self, table: &str, col: ColumnMeta) -> Result<(), CatalogError> {
        let t = self.table_mut(table)?;
        if t.column(&col.name).is_some() {
            return Err(CatalogError::DuplicateColumn {
                table: t.name.clone(),
                column: col.name,
            });
        }
        if !t.is_tenant_specific() && col.comparability != Comparability::Comparable {
            return Err(CatalogError::ConvertibleOnGlobalTable {
                table: t.name.clone(),
                column: col.name,
            });
        }
        t.columns.push(col);
        self.bump();
        Ok(())
    }

    pub fn drop_column(&mut self, table: &str, column: &str) -> Result<(), CatalogError> {
        let t = self.table_mut(table)?;
        let idx = t.column_index(column).ok_or_else(|| CatalogError::UnknownColumn {
            table: t.name.clone(),
            column: column.to_string(),
        })?;
        t.columns.remove(idx);
        self.bump();
        Ok(())
    }

    pub fn add_constraint(&mut self, table: &str, c: ConstraintDef) -> Result<(), CatalogError> {
        let t = self.table_mut(table)?;
        t.constraints.push(c);
        self.bump();
        Ok(())
    }

    pub fn define_view(&mut self, view: ViewDef) -> Result<(), CatalogError> {
        if self.table(&view.name).is_some() || self.view(&view.name).is_some() {
            return Err(CatalogError::DuplicateTable(view.name));
        }
        self.views.push(view);
        self.bump();
        Ok(())
    }

    pub fn drop_view(&mut self, name: &str) -> Result<(), CatalogError> {
        let before = self.views.len();
        self.views.retain(|v| !v.name.eq_ignore_ascii_case(name));
        if self.views.len() == before {
            return Err(CatalogError::UnknownTable(name.to_string()));
        }
        self.bump();
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn require_table(&self, name: &str) -> Result<&TableDef, CatalogError> {
        self.table(name).ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    fn table_mut(&mut self, name: &str) -> Result<&mut TableDef, CatalogError> {
        self.tables
            .iter_mut()
            .find(|t| t.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    pub fn view(&self, name: &str) -> Option<&ViewDef> {
        self.views.iter().find(|v| v.name.eq_ignore_ascii_case(name))
    }

    pub fn lookup_comparability(&self, table: &str, column: &str) -> Result<Comparability, CatalogError> {
        let t = self.require_table(table)?;
        t.column(column)
            .map(|c| c.comparability.clone())
            .ok_or_else(|| CatalogError::UnknownColumn {
                table: t.name.clone(),
                column: column.to_string(),
            })
    }

    pub fn has_privilege(&self, grantee: TenantId, owner: TenantId, table: &str, right: Right) -> bool {
        let Some(def) = self.table(table) else {
            return false;
        };
        let owner = if def.is_tenant_specific() { Some(owner) } else { None };
        self.privileges.contains(&Privilege {
            grantee,
            owner,
            table: def.name.clone(),
            right,
        })
    }

    fn grantees(&self, grantee: ast::Grantee, dataset: &BTreeSet<TenantId>) -> Vec<TenantId> {
        match grantee {
            ast::Grantee::Tenant(t) => vec![t],
            ast::Grantee::All => dataset.iter().copied().collect(),
        }
    }

    /// Grant `rights` on the client's instance of `table`. With grantee
    /// `ALL` every tenant of the (already resolved) dataset receives them.
    pub fn grant(
        &mut self,
        client: TenantId,
        dataset: &BTreeSet<TenantId>,
        rights: &[Right],
        table: &str,
        grantee: ast::Grantee,
    ) -> Result<(), CatalogError> {
        let def = self.require_table(table)?;
        let name = def.name.clone();
        if !self.has_privilege(client, client, &name, Right::Grant) {
            return Err(CatalogError::NotAuthorized {
                client,
                action: "GRANT".into(),
                table: name,
            });
        }
        let owner = if def.is_tenant_specific() { Some(client) } else { None };
        for g in self.grantees(grantee, dataset) {
            for &right in rights {
                self.privileges.insert(Privilege {
                    grantee: g,
                    owner,
                    table: name.clone(),
                    right,
                });
            }
        }
        self.bump();
        Ok(())
    }

    /// Every tenant grants every right on its tenant-specific tables to every tenant.
    pub fn grant_all_to_all(&mut self) {
        let tenants: BTreeSet<TenantId> = self.tenants.clone();
        let tables: Vec<String> = self
            .tables
            .iter()
            .filter(|t| t.is_tenant_specific())
            .map(|t| t.name.clone())
            .collect();
        for t in &tenants {
            for name in &tables {
                self.grant(*t, &tenants, &Right::ALL, name, ast::Grantee::All)
                    .expect("owners hold GRANT on their tables");
            }
        }
    }

    pub fn revoke(
        &mut self,
        client: TenantId,
        dataset: &BTreeSet<TenantId>,
        rights: &[Right],
        table: &str,
        grantee: ast::Grantee,
    ) -> Result<(), CatalogError> {
        let def = self.require_table(table)?;
        let name = def.name.clone();
        if !self.has_privilege(client, client, &name, Right::Revoke) {
            return Err(CatalogError::NotAuthorized {
                client,
                action: "REVOKE".into(),
                table: name,
            });
        }
        let owner = if def.is_tenant_specific() { Some(client) } else { None };
        for g in self.grantees(grantee, dataset) {
            for &right in rights {
                self.privileges.remove(&Privilege {
                    grantee: g,
                    owner,
                    table: name.clone(),
                    right,
                });
            }
        }
        self.bump();
        Ok(())
    }

    /// Meta relations backing conversion inlining for every linear pair:
    /// `Tenant(T_tenant_key, T_<pair>_key, ..)` and one
    /// `<Pair>Transform(<P>T_<pair>_key, <P>T_to_universal, <P>T_from_universal, <P>T_offset)`
    /// per pair.
    pub fn meta_tables(&self) -> Vec<MetaTable> {
        let linear: Vec<&ConversionPair> = self
            .pairs
            .iter()
            .filter(|p| matches!(p.kind, crate::conversion::PairKind::Linear { .. }))
            .collect();
        if linear.is_empty() {
            return vec![];
        }
        let mut tenant_cols = vec![("T_tenant_key".to_string(), ScalarType::Int)];
        for p in &linear {
            tenant_cols.push((format!("T_{}_key", p.name), ScalarType::Int));
        }
        let tenant_rows = self
            .tenants
            .iter()
            .map(|t| {
                let mut row = vec![Value::Int(t.0 as i64)];
                for p in &linear {
                    row.push(if p.has_tenant(*t) {
                        Value::Int(t.0 as i64)
                    } else {
                        Value::Null
                    });
                }
                row
            })
            .collect();
        let mut out = vec![MetaTable {
            name: TENANT_META_TABLE.to_string(),
            columns: tenant_cols,
            rows: tenant_rows,
        }];
        for p in linear {
            let names = TransformNames::for_pair(&p.name);
            let rows = p
                .tenants()
                .into_iter()
                .map(|t| {
                    let lp = p.linear_params(t).expect("linear pair");
                    vec![
                        Value::Int(t.0 as i64),
                        Value::Dec(1.0 / lp.rate),
                        Value::Dec(lp.rate),
                        Value::Dec(lp.offset),
                    ]
                })
                .collect();
            out.push(MetaTable {
                name: names.table.clone(),
                columns: vec![
                    (names.key.clone(), ScalarType::Int),
                    (names.to_universal.clone(), ScalarType::Decimal),
                    (names.from_universal.clone(), ScalarType::Decimal),
                    (names.offset.clone(), ScalarType::Decimal),
                ],
                rows,
            });
        }
        out
    }

    pub fn from_json_str(s: &str) -> Result<Catalog, CatalogError> {
        serde_json::from_str(s).map_err(|e| CatalogError::Format(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn load(path: &Path) -> Result<Catalog, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Format(format!("{}: {e}", path.display())))?;
        Catalog::from_json_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        std::fs::write(path, self.to_json_string()).map_err(|e| CatalogError::Format(format!("{}: {e}", path.display())))
    }
}

/// Column and table names of the transform meta table of one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformNames {
    pub table: String,
    pub tenant_key: String,
    pub key: String,
    pub to_universal: String,
    pub from_universal: String,
    pub offset: String,
}

impl TransformNames {
    pub fn for_pair(pair: &str) -> TransformNames {
        let pascal: String = pair
            .split('_')
            .filter(|w| !w.is_empty())
            .map(|w| {
                let mut cs = w.chars();
                let first = cs.next().unwrap().to_ascii_uppercase();
                std::iter::once(first).chain(cs).collect::<String>()
            })
            .collect();
        let initials: String = pascal.chars().filter(|c| c.is_ascii_uppercase()).collect();
        let prefix = format!("{initials}T");
        TransformNames {
            table: format!("{pascal}Transform"),
            tenant_key: format!("T_{pair}_key"),
            key: format!("{prefix}_{pair}_key"),
            to_universal: format!("{prefix}_to_universal"),
            from_universal: format!("{prefix}_from_universal"),
            offset: format!("{prefix}_offset"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversion::LinearParams;
    use crate::parser::parse;

    fn create(sql: &str) -> TableDef {
        match parse(sql).unwrap() {
            ast::Statement::CreateTable(ct) => TableDef::from_ast(&ct).unwrap(),
            _ => panic!(),
        }
    }

    fn base() -> Catalog {
        let mut c = Catalog::new();
        c.register_pair(ConversionPair::linear("currency")).unwrap();
        c.define_table(create(
            "CREATE TABLE Employees SPECIFIC (E_emp_id INTEGER NOT NULL SPECIFIC, E_name VARCHAR(25) NOT NULL COMPARABLE,
             E_role_id INTEGER NOT NULL, E_salary DECIMAL(15,2) NOT NULL CONVERTIBLE @currencyToUniversal @currencyFromUniversal,
             E_age INTEGER COMPARABLE, CONSTRAINT pk_emp PRIMARY KEY (E_emp_id))",
        ))
        .unwrap();
        c.define_table(create("CREATE TABLE Regions (Re_reg_id INTEGER NOT NULL, Re_name VARCHAR(25))"))
            .unwrap();
        c
    }

    fn usd() -> BTreeMap<String, TenantParams> {
        [("currency".to_string(), TenantParams::Linear(LinearParams::IDENTITY))].into()
    }

    #[test]
    fn defaults_and_ttid_synthesis() {
        let c = base();
        let e = c.table("employees").unwrap();
        assert_eq!(e.ttid_column.as_deref(), Some("E_ttid"));
        assert_eq!(c.lookup_comparability("Employees", "E_role_id").unwrap(), Comparability::TenantSpecific);
        assert_eq!(
            c.lookup_comparability("Employees", "E_salary").unwrap(),
            Comparability::Convertible("currency".into())
        );
        assert_eq!(c.lookup_comparability("Regions", "Re_name").unwrap(), Comparability::Comparable);
        assert!(matches!(
            c.lookup_comparability("Regions", "nope"),
            Err(CatalogError::UnknownColumn { .. })
        ));
        assert!(c.table("Regions").unwrap().ttid_column.is_none());
        assert!(!e.visible_columns().iter().any(|(n, _)| n == "E_ttid"));
    }

    #[test]
    fn convertible_on_global_rejected() {
        let mut c = base();
        let def = TableDef {
            name: "G".into(),
            generality: TableGenerality::Global,
            columns: vec![ColumnMeta {
                name: "g_x".into(),
                ty: ScalarType::Decimal,
                sql_type: "DECIMAL".into(),
                not_null: false,
                default: None,
                comparability: Comparability::Convertible("currency".into()),
            }],
            constraints: vec![],
            ttid_column: None,
        };
        assert!(matches!(c.define_table(def), Err(CatalogError::ConvertibleOnGlobalTable { .. })));
        let dup = create("CREATE TABLE Regions (x INTEGER)");
        assert!(matches!(c.define_table(dup), Err(CatalogError::DuplicateTable(_))));
    }

    #[test]
    fn default_privileges_and_grants() {
        let mut c = base();
        c.register_tenant(TenantId(0), usd()).unwrap();
        c.register_tenant(TenantId(1), usd()).unwrap();
        assert!(matches!(c.register_tenant(TenantId(0), usd()), Err(CatalogError::DuplicateTenant(_))));
        for r in Right::ALL {
            assert!(c.has_privilege(TenantId(0), TenantId(0), "Employees", r));
            assert!(!c.has_privilege(TenantId(0), TenantId(1), "Employees", r));
        }
        assert!(c.has_privilege(TenantId(1), TenantId(0), "Regions", Right::Read));

        let before = c.privileges.clone();
        let d: BTreeSet<TenantId> = [TenantId(0)].into();
        c.grant(TenantId(0), &d, &[Right::Read], "Employees", ast::Grantee::Tenant(TenantId(42)))
            .unwrap();
        assert!(c.privileges.contains(&Privilege {
            grantee: TenantId(42),
            owner: Some(TenantId(0)),
            table: "Employees".into(),
            right: Right::Read
        }));
        c.revoke(TenantId(0), &d, &[Right::Read], "Employees", ast::Grantee::Tenant(TenantId(42)))
            .unwrap();
        assert_eq!(c.privileges, before);
        c.revoke(TenantId(0), &d, &[Right::Update], "Employees", ast::Grantee::Tenant(TenantId(9)))
            .unwrap();
        assert_eq!(c.privileges, before);
    }

    #[test]
    fn unknown_pair_in_registration() {
        let mut c = base();
        let choices = [("phone".to_string(), TenantParams::Prefix("+".into()))].into();
        assert!(matches!(
            c.register_tenant(TenantId(3), choices),
            Err(CatalogError::UnknownConversionPair(_))
        ));
        assert!(!c.is_tenant(TenantId(3)));
    }

    #[test]
    fn json_roundtrip() {
        let mut c = base();
        c.register_tenant(TenantId(0), usd()).unwrap();
        let back = Catalog::from_json_str(&c.to_json_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn transform_names() {
        let n = TransformNames::for_pair("currency");
        assert_eq!(n.table, "CurrencyTransform");
        assert_eq!(n.to_universal, "CT_to_universal");
        assert_eq!(n.key, "CT_currency_key");
    }
}
