//! MT-H-mini: a scaled-down multi-tenant TPC-H generator, its query suite,
//! and the validation protocol against a single-tenant baseline.
//!
//! Dates are stored as `YYYYMMDD` integers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::conversion::{ConversionPair, LinearParams, TenantParams};
use crate::fixtures::apply_ddl;
use crate::optimizer::OptimizationLevel;
use crate::parser::parse_query;
use crate::refdb::{execute, Column, Database, Layout, Relation};
use crate::session::{run_query, RunError};
use crate::tenant::TenantId;
use crate::value::{round2, Value, DECIMAL_REL_TOLERANCE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("scale factor must be positive and finite, got {0}")]
    ScaleFactor(f64),
    #[error("tenant count must be at least 1")]
    NoTenants,
    #[error("{tenants} tenants need at least as many customers, sf gives {customers}")]
    TooManyTenants { tenants: u32, customers: usize },
    #[error("unknown distribution '{0}'")]
    Distribution(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShareDistribution {
    Uniform,
    /// Zipf with exponent 1: tenant `r` gets a share proportional to `1/r`.
    Zipf,
}

impl FromStr for ShareDistribution {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(ShareDistribution::Uniform),
            "zipf" => Ok(ShareDistribution::Zipf),
            _ => Err(ConfigError::Distribution(s.to_string())),
        }
    }
}

impl fmt::Display for ShareDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShareDistribution::Uniform => "uniform",
            ShareDistribution::Zipf => "zipf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sf: f64,
    pub tenants: u32,
    pub dist: ShareDistribution,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(sf: f64, tenants: u32, dist: ShareDistribution, seed: u64) -> BenchConfig {
        BenchConfig { sf, tenants, dist, seed }
    }

    fn count(&self, per_sf: f64) -> usize {
        ((per_sf * self.sf).round() as usize).max(1)
    }

    pub fn customers(&self) -> usize {
        self.count(150_000.0)
    }

    pub fn orders(&self) -> usize {
        self.count(1_500_000.0)
    }

    pub fn lineitems(&self) -> usize {
        self.orders() * LINES_PER_ORDER
    }

    pub fn suppliers(&self) -> usize {
        self.count(10_000.0)
    }

    pub fn parts(&self) -> usize {
        self.count(200_000.0)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.sf.is_finite() && self.sf > 0.0) {
            return Err(ConfigError::ScaleFactor(self.sf));
        }
        if self.tenants == 0 {
            return Err(ConfigError::NoTenants);
        }
        if (self.tenants as usize) > self.customers() {
            return Err(ConfigError::TooManyTenants {
                tenants: self.tenants,
                customers: self.customers(),
            });
        }
        Ok(())
    }
}

/// Relative tolerance against the baseline. Tenant-format money is stored
/// rounded to cents, so universal values read back differ from the baseline
/// by up to half a cent over the exchange rate.
pub const BASELINE_REL_TOLERANCE: f64 = 1e-5;

pub const LINES_PER_ORDER: usize = 4;
const SUPPLIERS_PER_PART: usize = 4;

/// Exchange rates out of USD a tenant may draw.
pub const CURRENCY_RATES: [(&str, f64); 10] = [
    ("USD", 1.0),
    ("EUR", 0.92),
    ("GBP", 0.79),
    ("JPY", 151.3),
    ("CNY", 7.24),
    ("CAD", 1.36),
    ("AUD", 1.52),
    ("CHF", 0.88),
    ("INR", 83.1),
    ("SEK", 10.9),
];

/// Phone-number prefixes a tenant may draw; the universal format has none.
pub const PHONE_PREFIXES: [&str; 8] = ["+", "00", "011-", "+00-", "0", "tel:", "(+)", "#"];

const REGIONS: [&str; 5] = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"];
const NATIONS: [(&str, i64); 25] = [
    ("ALGERIA", 0),
    ("ARGENTINA", 1),
    ("BRAZIL", 1),
    ("CANADA", 1),
    ("EGYPT", 4),
    ("ETHIOPIA", 0),
    ("FRANCE", 3),
    ("GERMANY", 3),
    ("INDIA", 2),
    ("INDONESIA", 2),
    ("IRAN", 4),
    ("IRAQ", 4),
    ("JAPAN", 2),
    ("JORDAN", 4),
    ("KENYA", 0),
    ("MOROCCO", 0),
    ("MOZAMBIQUE", 0),
    ("PERU", 1),
    ("CHINA", 2),
    ("ROMANIA", 3),
    ("SAUDI ARABIA", 4),
    ("VIETNAM", 2),
    ("RUSSIA", 3),
    ("UNITED KINGDOM", 3),
    ("UNITED STATES", 1),
];
const SEGMENTS: [&str; 5] = ["AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD", "MACHINERY"];
const PRIORITIES: [&str; 5] = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"];
const SHIP_MODES: [&str; 7] = ["AIR", "FOB", "MAIL", "RAIL", "REG AIR", "SHIP", "TRUCK"];
const TYPE_SIZES: [&str; 6] = ["STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO"];
const TYPE_FINISHES: [&str; 5] = ["ANODIZED", "BURNISHED", "PLATED", "POLISHED", "BRUSHED"];

/// Schema with or without multi-tenant annotations.
pub fn schema_ddl(multi_tenant: bool) -> String {
    let (specific, key, cmp) = if multi_tenant {
        (" SPECIFIC", " SPECIFIC", " COMPARABLE")
    } else {
        ("", "", "")
    };
    let conv = |pair: &str| {
        if multi_tenant {
            format!(" CONVERTIBLE @{pair}ToUniversal @{pair}FromUniversal")
        } else {
            String::new()
        }
    };
    let money = conv("currency");
    let phone = conv("phone");
    format!(
        "
CREATE TABLE Region (R_regionkey INTEGER NOT NULL, R_name VARCHAR(25) NOT NULL,
  CONSTRAINT pk_region PRIMARY KEY (R_regionkey));
CREATE TABLE Nation (N_nationkey INTEGER NOT NULL, N_name VARCHAR(25) NOT NULL, N_regionkey INTEGER NOT NULL,
  CONSTRAINT pk_nation PRIMARY KEY (N_nationkey));
CREATE TABLE Supplier (S_suppkey INTEGER NOT NULL, S_name VARCHAR(25) NOT NULL, S_nationkey INTEGER NOT NULL,
  S_acctbal DECIMAL(15,2) NOT NULL, CONSTRAINT pk_supplier PRIMARY KEY (S_suppkey));
CREATE TABLE Part (P_partkey INTEGER NOT NULL, P_name VARCHAR(55) NOT NULL, P_brand VARCHAR(10) NOT NULL,
  P_type VARCHAR(25) NOT NULL, P_size INTEGER NOT NULL, P_retailprice DECIMAL(15,2) NOT NULL,
  CONSTRAINT pk_part PRIMARY KEY (P_partkey));
CREATE TABLE Partsupp (PS_partkey INTEGER NOT NULL, PS_suppkey INTEGER NOT NULL, PS_availqty INTEGER NOT NULL,
  PS_supplycost DECIMAL(15,2) NOT NULL, CONSTRAINT pk_partsupp PRIMARY KEY (PS_partkey, PS_suppkey));
CREATE TABLE Customer{specific} (
  C_custkey INTEGER NOT NULL{key},
  C_name VARCHAR(25) NOT NULL{cmp},
  C_nationkey INTEGER NOT NULL{cmp},
  C_phone VARCHAR(20) NOT NULL{phone},
  C_acctbal DECIMAL(15,2) NOT NULL{money},
  C_mktsegment VARCHAR(10) NOT NULL{cmp},
  CONSTRAINT pk_customer PRIMARY KEY (C_custkey));
CREATE TABLE Orders{specific} (
  O_orderkey INTEGER NOT NULL{key},
  O_custkey INTEGER NOT NULL{key},
  O_orderstatus VARCHAR(1) NOT NULL{cmp},
  O_totalprice DECIMAL(15,2) NOT NULL{money},
  O_orderdate INTEGER NOT NULL{cmp},
  O_orderpriority VARCHAR(15) NOT NULL{cmp},
  O_shippriority INTEGER NOT NULL{cmp},
  CONSTRAINT pk_orders PRIMARY KEY (O_orderkey),
  CONSTRAINT fk_orders_cust FOREIGN KEY (O_custkey) REFERENCES Customer (C_custkey));
CREATE TABLE Lineitem{specific} (
  L_orderkey INTEGER NOT NULL{key},
  L_partkey INTEGER NOT NULL{cmp},
  L_suppkey INTEGER NOT NULL{cmp},
  L_linenumber INTEGER NOT NULL{cmp},
  L_quantity INTEGER NOT NULL{cmp},
  L_extendedprice DECIMAL(15,2) NOT NULL{money},
  L_discount DECIMAL(15,2) NOT NULL{cmp},
  L_tax DECIMAL(15,2) NOT NULL{cmp},
  L_returnflag VARCHAR(1) NOT NULL{cmp},
  L_linestatus VARCHAR(1) NOT NULL{cmp},
  L_shipdate INTEGER NOT NULL{cmp},
  L_commitdate INTEGER NOT NULL{cmp},
  L_receiptdate INTEGER NOT NULL{cmp},
  L_shipmode VARCHAR(10) NOT NULL{cmp},
  CONSTRAINT pk_lineitem PRIMARY KEY (L_orderkey, L_linenumber),
  CONSTRAINT fk_lineitem_order FOREIGN KEY (L_orderkey) REFERENCES Orders (O_orderkey));
"
    )
}

/// Per-tenant conversion choices of a generated fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenantFormat {
    pub tenant: TenantId,
    pub currency: String,
    pub rate: f64,
    pub phone_prefix: String,
}

/// A generated fixture: multi-tenant catalog and data, plus the
/// single-tenant baseline built from the same records in universal format.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: BenchConfig,
    pub catalog: Catalog,
    pub db: Database,
    pub baseline_catalog: Catalog,
    pub baseline: Database,
    pub formats: Vec<TenantFormat>,
}

/// Row counts per tenant, heaviest first. Every tenant gets at least one.
pub fn tenant_shares(n: usize, tenants: u32, dist: ShareDistribution) -> Vec<usize> {
    let t = tenants as usize;
    assert!(n >= t, "fewer rows than tenants");
    let weights: Vec<f64> = match dist {
        ShareDistribution::Uniform => vec![1.0; t],
        ShareDistribution::Zipf => (1..=t).map(|r| 1.0 / r as f64).collect(),
    };
    let total: f64 = weights.iter().sum();
    let spare = n - t;
    let mut out: Vec<usize> = weights
        .iter()
        .map(|w| 1 + (spare as f64 * w / total).floor() as usize)
        .collect();
    let left = n - out.iter().sum::<usize>();
    for c in out.iter_mut().take(left) {
        *c += 1;
    }
    out
}

fn owners(shares: &[usize]) -> Vec<TenantId> {
    shares
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat(TenantId(i as u32 + 1)).take(c))
        .collect()
}

fn date(d: NaiveDate) -> i64 {
    d.format("%Y%m%d").to_string().parse().expect("numeric date")
}

fn money(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    round2(rng.gen_range(lo..hi))
}

fn int(i: i64) -> Value {
    Value::Int(i)
}

fn text(s: impl AsRef<str>) -> Value {
    Value::text(s)
}

fn relation(catalog: &Catalog, table: &str, rows: Vec<Vec<Value>>) -> Relation {
    let cols = catalog
        .table(table)
        .expect("schema table")
        .shared_columns()
        .into_iter()
        .map(|(n, t)| Column::new(n, Some(t)))
        .collect();
    Relation::with_rows(cols, rows)
}

pub fn generate(cfg: &BenchConfig) -> Result<Fixture, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // tenant formats; tenant 1 keeps the universal ones
    let formats: Vec<TenantFormat> = (1..=cfg.tenants)
        .map(|t| {
            let (currency, rate) = if t == 1 {
                CURRENCY_RATES[0]
            } else {
                *CURRENCY_RATES.choose(&mut rng).expect("non-empty")
            };
            let phone_prefix = if t == 1 {
                String::new()
            } else {
                PHONE_PREFIXES.choose(&mut rng).expect("non-empty").to_string()
            };
            TenantFormat {
                tenant: TenantId(t),
                currency: currency.to_string(),
                rate,
                phone_prefix,
            }
        })
        .collect();

    let mut catalog = Catalog::new();
    catalog.register_pair(ConversionPair::linear("currency")).expect("fresh catalog");
    catalog.register_pair(ConversionPair::prefix("phone")).expect("fresh catalog");
    apply_ddl(&mut catalog, &schema_ddl(true)).expect("schema DDL is valid");
    for f in &formats {
        let choices = BTreeMap::from([
            ("currency".to_string(), TenantParams::Linear(LinearParams::scale(f.rate))),
            ("phone".to_string(), TenantParams::Prefix(f.phone_prefix.clone())),
        ]);
        catalog.register_tenant(f.tenant, choices).expect("distinct tenants");
    }
    catalog.grant_all_to_all();
    let mut baseline_catalog = Catalog::new();
    apply_ddl(&mut baseline_catalog, &schema_ddl(false)).expect("schema DDL is valid");

    // global tables
    let regions: Vec<Vec<Value>> = REGIONS
        .iter()
        .enumerate()
        .map(|(i, n)| vec![int(i as i64), text(n)])
        .collect();
    let nations: Vec<Vec<Value>> = NATIONS
        .iter()
        .enumerate()
        .map(|(i, (n, r))| vec![int(i as i64), text(n), int(*r)])
        .collect();
    let n_supp = cfg.suppliers();
    let suppliers: Vec<Vec<Value>> = (1..=n_supp as i64)
        .map(|s| {
            vec![
                int(s),
                text(format!("Supplier#{s:09}")),
                int(rng.gen_range(0..25)),
                Value::Dec(money(&mut rng, -999.99, 9999.99)),
            ]
        })
        .collect();
    let n_part = cfg.parts();
    let mut retail = Vec::with_capacity(n_part);
    let parts: Vec<Vec<Value>> = (1..=n_part as i64)
        .map(|p| {
            let price = (90_000 + (p / 10) % 20_001 + 100 * (p % 1_000)) as f64 / 100.0;
            retail.push(price);
            vec![
                int(p),
                text(format!("part {p}")),
                text(format!("Brand#{}{}", rng.gen_range(1..=5), rng.gen_range(1..=5))),
                text(format!(
                    "{} {}",
                    TYPE_SIZES.choose(&mut rng).expect("non-empty"),
                    TYPE_FINISHES.choose(&mut rng).expect("non-empty")
                )),
                int(rng.gen_range(1..=50)),
                Value::Dec(price),
            ]
        })
        .collect();
    let supp_of = |p: usize, i: usize| ((p + i * (n_supp / SUPPLIERS_PER_PART).max(1)) % n_supp) as i64 + 1;
    let mut partsupp = Vec::new();
    for p in 1..=n_part {
        let mut seen = BTreeSet::new();
        for i in 0..SUPPLIERS_PER_PART {
            let s = supp_of(p, i);
            if seen.insert(s) {
                partsupp.push(vec![
                    int(p as i64),
                    int(s),
                    int(rng.gen_range(1..10_000)),
                    Value::Dec(money(&mut rng, 1.0, 1000.0)),
                ]);
            }
        }
    }

    // single-tenant records in universal format
    let n_cust = cfg.customers();
    let customers: Vec<(i64, String, i64, String, f64, &str)> = (1..=n_cust as i64)
        .map(|c| {
            let nation = rng.gen_range(0..25);
            let phone = format!(
                "{}-{:03}-{:03}-{:04}",
                nation + 10,
                rng.gen_range(100..1000),
                rng.gen_range(100..1000),
                rng.gen_range(1000..10_000)
            );
            (
                c,
                format!("Customer#{c:09}"),
                nation,
                phone,
                money(&mut rng, -999.99, 9999.99),
                *SEGMENTS.choose(&mut rng).expect("non-empty"),
            )
        })
        .collect();
    let start = NaiveDate::from_ymd_opt(1992, 1, 1).expect("valid date");
    let cutoff = date(NaiveDate::from_ymd_opt(1995, 6, 17).expect("valid date"));
    let n_ord = cfg.orders();
    let mut orders = Vec::with_capacity(n_ord);
    let mut lines = Vec::with_capacity(n_ord * LINES_PER_ORDER);
    for o in 1..=n_ord as i64 {
        let odate = start + Days::new(rng.gen_range(0..2_405));
        let mut total = 0.0;
        let mut statuses = BTreeSet::new();
        for l in 1..=LINES_PER_ORDER as i64 {
            let part = rng.gen_range(1..=n_part);
            let supp = supp_of(part, rng.gen_range(0..SUPPLIERS_PER_PART));
            let qty: i64 = rng.gen_range(1..=50);
            let price = round2(qty as f64 * retail[part - 1]);
            let disc = rng.gen_range(0..=10) as f64 / 100.0;
            let tax = rng.gen_range(0..=8) as f64 / 100.0;
            let ship = odate + Days::new(rng.gen_range(1..=121));
            let commit = odate + Days::new(rng.gen_range(30..=90));
            let receipt = ship + Days::new(rng.gen_range(1..=30));
            let rflag = if date(receipt) <= cutoff {
                if rng.gen_bool(0.5) {
                    "R"
                } else {
                    "A"
                }
            } else {
                "N"
            };
            let lstatus = if date(ship) > cutoff { "O" } else { "F" };
            statuses.insert(lstatus);
            total += price * (1.0 + tax) * (1.0 - disc);
            lines.push(vec![
                int(o),
                int(part as i64),
                int(supp),
                int(l),
                int(qty),
                Value::Dec(price),
                Value::Dec(disc),
                Value::Dec(tax),
                text(rflag),
                text(lstatus),
                int(date(ship)),
                int(date(commit)),
                int(date(receipt)),
                text(SHIP_MODES.choose(&mut rng).expect("non-empty")),
            ]);
        }
        let status = match (statuses.contains("O"), statuses.contains("F")) {
            (true, false) => "O",
            (false, true) => "F",
            _ => "P",
        };
        orders.push(vec![
            int(o),
            int(rng.gen_range(1..=n_cust as i64)),
            text(status),
            Value::Dec(round2(total)),
            int(date(odate)),
            text(PRIORITIES.choose(&mut rng).expect("non-empty")),
            int(0),
        ]);
    }

    let mut baseline = Database::new(Layout::SharedTables);
    for (name, rows) in [
        ("Region", &regions),
        ("Nation", &nations),
        ("Supplier", &suppliers),
        ("Part", &parts),
        ("Partsupp", &partsupp),
    ] {
        baseline.insert_table(name, relation(&baseline_catalog, name, rows.clone()));
    }
    let cust_rows: Vec<Vec<Value>> = customers
        .iter()
        .map(|(k, n, nat, ph, bal, seg)| {
            vec![int(*k), text(n), int(*nat), text(ph), Value::Dec(*bal), text(seg)]
        })
        .collect();
    baseline.insert_table("Customer", relation(&baseline_catalog, "Customer", cust_rows));
    baseline.insert_table("Orders", relation(&baseline_catalog, "Orders", orders.clone()));
    baseline.insert_table("Lineitem", relation(&baseline_catalog, "Lineitem", lines.clone()));

    // assign records to tenants in contiguous blocks, keeping FKs local
    let cust_owner = owners(&tenant_shares(n_cust, cfg.tenants, cfg.dist));
    let ord_owner = owners(&tenant_shares(n_ord, cfg.tenants, cfg.dist));
    let mut cust_of: BTreeMap<TenantId, Vec<i64>> = BTreeMap::new();
    for (i, t) in cust_owner.iter().enumerate() {
        cust_of.entry(*t).or_default().push(i as i64 + 1);
    }
    let fmt = |t: TenantId| &formats[(t.0 - 1) as usize];

    let mut db = Database::new(Layout::SharedTables);
    for (name, rows) in [
        ("Region", regions),
        ("Nation", nations),
        ("Supplier", suppliers),
        ("Part", parts),
        ("Partsupp", partsupp),
    ] {
        db.insert_table(name, relation(&catalog, name, rows));
    }
    let cust_rows = customers
        .iter()
        .zip(&cust_owner)
        .map(|((k, n, nat, ph, bal, seg), &t)| {
            let f = fmt(t);
            vec![
                int(t.0 as i64),
                int(*k),
                text(n),
                int(*nat),
                text(format!("{}{ph}", f.phone_prefix)),
                Value::Dec(round2(bal * f.rate)),
                text(seg),
            ]
        })
        .collect();
    db.insert_table("Customer", relation(&catalog, "Customer", cust_rows));
    let ord_rows = orders
        .iter()
        .zip(&ord_owner)
        .map(|(row, &t)| {
            let mine = &cust_of[&t];
            let base_cust = row[1].as_i64().expect("custkey");
            let mut r = vec![int(t.0 as i64)];
            r.extend(row.iter().cloned());
            r[2] = int(mine[(base_cust as usize - 1) % mine.len()]);
            r[4] = Value::Dec(round2(row[3].as_f64().expect("price") * fmt(t).rate));
            r
        })
        .collect();
    db.insert_table("Orders", relation(&catalog, "Orders", ord_rows));
    let line_rows = lines
        .iter()
        .map(|row| {
            let t = ord_owner[row[0].as_i64().expect("orderkey") as usize - 1];
            let mut r = vec![int(t.0 as i64)];
            r.extend(row.iter().cloned());
            r[6] = Value::Dec(round2(row[5].as_f64().expect("price") * fmt(t).rate));
            r
        })
        .collect();
    db.insert_table("Lineitem", relation(&catalog, "Lineitem", line_rows));

    Ok(Fixture {
        config: *cfg,
        catalog,
        db,
        baseline_catalog,
        baseline,
        formats,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteQuery {
    pub name: &'static str,
    pub sql: &'static str,
    /// Joins orders to customers, so the baseline mapping no longer holds.
    pub custkey_join: bool,
}

/// The single-aggregate core of Q1.
pub const Q1_CORE: &str = "SELECT SUM(L_extendedprice) AS sum_base_price FROM Lineitem";

pub fn query_suite() -> Vec<SuiteQuery> {
    let q = |name, sql, custkey_join| SuiteQuery { name, sql, custkey_join };
    vec![
        q(
            "Q1",
            "SELECT L_returnflag, L_linestatus, SUM(L_quantity) AS sum_qty, SUM(L_extendedprice) AS sum_base_price, \
             SUM(L_extendedprice * (1 - L_discount)) AS sum_disc_price, \
             SUM(L_extendedprice * (1 - L_discount) * (1 + L_tax)) AS sum_charge, AVG(L_quantity) AS avg_qty, \
             AVG(L_extendedprice) AS avg_price, AVG(L_discount) AS avg_disc, COUNT(*) AS count_order \
             FROM Lineitem WHERE L_shipdate <= 19980902 GROUP BY L_returnflag, L_linestatus \
             ORDER BY L_returnflag, L_linestatus",
            false,
        ),
        q(
            "Q3",
            "SELECT L_orderkey, SUM(L_extendedprice * (1 - L_discount)) AS revenue, O_orderdate, O_shippriority \
             FROM Customer, Orders, Lineitem WHERE C_mktsegment = 'BUILDING' AND C_custkey = O_custkey \
             AND L_orderkey = O_orderkey AND O_orderdate < 19950315 AND L_shipdate > 19950315 \
             GROUP BY L_orderkey, O_orderdate, O_shippriority ORDER BY revenue DESC, O_orderdate",
            true,
        ),
        q(
            "Q4",
            "SELECT O_orderpriority, COUNT(*) AS order_count FROM Orders \
             WHERE O_orderdate >= 19930701 AND O_orderdate < 19931001 \
             AND EXISTS (SELECT * FROM Lineitem WHERE L_orderkey = O_orderkey AND L_commitdate < L_receiptdate) \
             GROUP BY O_orderpriority ORDER BY O_orderpriority",
            false,
        ),
        q(
            "Q5",
            "SELECT N_name, SUM(L_extendedprice * (1 - L_discount)) AS revenue \
             FROM Region, Nation, Customer, Orders, Lineitem, Supplier \
             WHERE R_name = 'ASIA' AND N_regionkey = R_regionkey AND C_nationkey = N_nationkey \
             AND C_custkey = O_custkey AND L_orderkey = O_orderkey AND L_suppkey = S_suppkey \
             AND S_nationkey = C_nationkey AND O_orderdate >= 19940101 AND O_orderdate < 19950101 \
             GROUP BY N_name ORDER BY revenue DESC",
            true,
        ),
        q(
            "Q6",
            "SELECT SUM(L_extendedprice * L_discount) AS revenue FROM Lineitem \
             WHERE L_shipdate >= 19940101 AND L_shipdate < 19950101 AND L_discount BETWEEN 0.05 AND 0.07 \
             AND L_quantity < 24",
            false,
        ),
        q(
            "Q9",
            "SELECT N_name, SUM(L_extendedprice * (1 - L_discount) - PS_supplycost * L_quantity) AS profit \
             FROM Lineitem, Partsupp, Supplier, Nation WHERE PS_partkey = L_partkey AND PS_suppkey = L_suppkey \
             AND S_suppkey = L_suppkey AND S_nationkey = N_nationkey GROUP BY N_name ORDER BY N_name",
            false,
        ),
        q(
            "Q10",
            "SELECT C_custkey, C_name, SUM(L_extendedprice * (1 - L_discount)) AS revenue, C_acctbal, N_name \
             FROM Orders, Customer, Lineitem, Nation WHERE O_orderdate >= 19931001 AND O_orderdate < 19940101 \
             AND C_custkey = O_custkey AND L_orderkey = O_orderkey AND L_returnflag = 'R' \
             AND C_nationkey = N_nationkey GROUP BY C_custkey, C_name, C_acctbal, N_name ORDER BY revenue DESC",
            true,
        ),
        q(
            "Q12",
            "SELECT L_shipmode, \
             SUM(CASE WHEN O_orderpriority = '1-URGENT' OR O_orderpriority = '2-HIGH' THEN 1 ELSE 0 END) AS high_line_count, \
             SUM(CASE WHEN O_orderpriority <> '1-URGENT' AND O_orderpriority <> '2-HIGH' THEN 1 ELSE 0 END) AS low_line_count \
             FROM Orders, Lineitem WHERE O_orderkey = L_orderkey AND L_shipmode IN ('MAIL', 'SHIP') \
             AND L_commitdate < L_receiptdate AND L_shipdate < L_commitdate \
             AND L_receiptdate >= 19940101 AND L_receiptdate < 19950101 GROUP BY L_shipmode ORDER BY L_shipmode",
            false,
        ),
        q(
            "Q13",
            "SELECT X.c_count, COUNT(*) AS custdist FROM \
             (SELECT C_custkey AS ck, COUNT(*) AS c_count FROM Customer, Orders WHERE C_custkey = O_custkey \
             GROUP BY C_custkey) AS X GROUP BY X.c_count ORDER BY custdist DESC, X.c_count DESC",
            true,
        ),
        q(
            "Q14",
            "SELECT 100.00 * SUM(CASE WHEN P_type IN ('PROMO ANODIZED', 'PROMO BURNISHED', 'PROMO PLATED', \
             'PROMO POLISHED', 'PROMO BRUSHED') THEN L_extendedprice * (1 - L_discount) ELSE 0 END) \
             / SUM(L_extendedprice * (1 - L_discount)) AS promo_revenue FROM Lineitem, Part \
             WHERE L_partkey = P_partkey AND L_shipdate >= 19950901 AND L_shipdate < 19951001",
            false,
        ),
        q(
            "Q17",
            "SELECT SUM(L_extendedprice) / 7.0 AS avg_yearly FROM Part, Lineitem \
             WHERE P_partkey = L_partkey AND P_brand = 'Brand#23' \
             AND L_quantity < (SELECT 0.2 * AVG(L2.L_quantity) FROM Lineitem L2 WHERE L2.L_partkey = P_partkey)",
            false,
        ),
        q(
            "Q22",
            // custkey anti-join of the original left out so the query validates against the baseline
            concat!(
                "SELECT SUBSTRING(C_phone, 1, 2) AS cntrycode, COUNT(*) AS numcust, SUM(C_acctbal) AS totacctbal ",
                "FROM Customer WHERE SUBSTRING(C_phone, 1, 2) IN ('13', '31', '23', '29', '30', '18', '17') ",
                "AND C_acctbal > (SELECT AVG(C_acctbal) FROM Customer WHERE C_acctbal > 0.00 ",
                "AND SUBSTRING(C_phone, 1, 2) IN ('13', '31', '23', '29', '30', '18', '17')) ",
                "GROUP BY SUBSTRING(C_phone, 1, 2) ORDER BY cntrycode"
            ),
            false,
        ),
    ]
}

/// One (query, level) cell of a validation run.
#[derive(Debug, Clone)]
pub struct ReportLine {
    pub query: String,
    pub level: OptimizationLevel,
    /// Compared against the canonical rewrite rather than the baseline.
    pub gold_standard: bool,
    pub passed: bool,
    pub conversions: u64,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub lines: Vec<ReportLine>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        !self.lines.is_empty() && self.lines.iter().all(|l| l.passed)
    }

    pub fn failures(&self) -> Vec<&ReportLine> {
        self.lines.iter().filter(|l| !l.passed).collect()
    }

    /// Fixed-width table: query, level, reference, pass flag, conversion calls.
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {:<10} {:<9} {:<5} {:>12}\n", "query", "level", "reference", "equal", "conversions");
        for l in &self.lines {
            out.push_str(&format!(
                "{:<6} {:<10} {:<9} {:<5} {:>12}\n",
                l.query,
                l.level.to_string(),
                if l.gold_standard { "canonical" } else { "baseline" },
                if l.passed { "yes" } else { "NO" },
                l.conversions
            ));
        }
        out
    }
}

/// Run `sql` with C=1 and D=all tenants at `level`.
pub fn run_mt(fx: &Fixture, sql: &str, level: OptimizationLevel) -> Result<(Relation, u64), RunError> {
    run_mt_on(&fx.catalog, &fx.db, sql, level)
}

pub fn run_mt_on(catalog: &Catalog, db: &Database, sql: &str, level: OptimizationLevel) -> Result<(Relation, u64), RunError> {
    let q = parse_query(sql).map_err(|e| RunError::Rewrite(crate::rewriter::RewriteError::Unsupported(e.to_string())))?;
    db.reset_counters();
    let (_, rel) = run_query(catalog, db, TenantId(1), &catalog.tenants, &q, level)?;
    Ok((rel, db.total_conversions()))
}

/// The same query on the single-tenant baseline, without any rewriting.
pub fn run_baseline(fx: &Fixture, sql: &str) -> Result<Relation, RunError> {
    run_baseline_on(&fx.baseline_catalog, &fx.baseline, sql)
}

pub fn run_baseline_on(catalog: &Catalog, db: &Database, sql: &str) -> Result<Relation, RunError> {
    let q = parse_query(sql).map_err(|e| RunError::Rewrite(crate::rewriter::RewriteError::Unsupported(e.to_string())))?;
    Ok(execute(db, catalog, &q)?)
}

/// Validation protocol: every query at every level with C=1 and D=all,
/// compared with the baseline, or with the canonical rewrite for custkey joins.
pub fn validate(fx: &Fixture, suite: &[SuiteQuery], levels: &[OptimizationLevel]) -> Report {
    validate_on(&fx.catalog, &fx.db, &fx.baseline_catalog, &fx.baseline, suite, levels)
}

pub fn validate_on(
    catalog: &Catalog,
    db: &Database,
    baseline_catalog: &Catalog,
    baseline: &Database,
    suite: &[SuiteQuery],
    levels: &[OptimizationLevel],
) -> Report {
    let mut report = Report::default();
    for sq in suite {
        let (reference, tol) = if sq.custkey_join {
            let r = run_mt_on(catalog, db, sq.sql, OptimizationLevel::Canonical).map(|r| r.0);
            (r, DECIMAL_REL_TOLERANCE)
        } else {
            (run_baseline_on(baseline_catalog, baseline, sq.sql), BASELINE_REL_TOLERANCE)
        };
        for &level in levels {
            let (passed, conversions, detail) = match (&reference, run_mt_on(catalog, db, sq.sql, level)) {
                (Ok(want), Ok((got, n))) => match want.multiset_diff_within(&got, tol) {
                    None => (true, n, None),
                    Some(d) => (false, n, Some(d)),
                },
                (Err(e), _) => (false, 0, Some(format!("reference failed: {e}"))),
                (_, Err(e)) => (false, 0, Some(e.to_string())),
            };
            report.lines.push(ReportLine {
                query: sq.name.to_string(),
                level,
                gold_standard: sq.custkey_join,
                passed,
                conversions,
                detail,
            });
        }
    }
    report
}

/// Each level against the canonical rewrite on the same fixture, with
/// conversion-call counts. Queries failing under canonical are reported
/// as failures at every level.
pub fn compare_levels(catalog: &Catalog, db: &Database, suite: &[SuiteQuery], levels: &[OptimizationLevel]) -> Report {
    let mut report = Report::default();
    for sq in suite {
        let reference = run_mt_on(catalog, db, sq.sql, OptimizationLevel::Canonical);
        for &level in levels {
            let (passed, conversions, detail) = match (&reference, run_mt_on(catalog, db, sq.sql, level)) {
                (Ok((want, _)), Ok((got, n))) => match want.multiset_diff(&got) {
                    None => (true, n, None),
                    Some(d) => (false, n, Some(d)),
                },
                (Err(e), _) => (false, 0, Some(format!("canonical failed: {e}"))),
                (_, Err(e)) => (false, 0, Some(e.to_string())),
            };
            report.lines.push(ReportLine {
                query: sq.name.to_string(),
                level,
                gold_standard: true,
                passed,
                conversions,
                detail,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_by_owner(db: &Database, table: &str, ttid: &str) -> BTreeMap<i64, usize> {
        let rel = db.table(table).unwrap();
        let i = rel.column_index(ttid).unwrap();
        let mut m = BTreeMap::new();
        for r in &rel.rows {
            *m.entry(r[i].as_i64().unwrap()).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn shares() {
        assert_eq!(tenant_shares(6000, 10, ShareDistribution::Uniform), vec![600; 10]);
        let z = tenant_shares(1500, 10, ShareDistribution::Zipf);
        assert_eq!(z.iter().sum::<usize>(), 1500);
        assert!(z.windows(2).all(|w| w[0] > w[1]), "{z:?}");
        let z = tenant_shares(150, 100, ShareDistribution::Zipf);
        assert_eq!(z.iter().sum::<usize>(), 150);
        assert!(z.iter().all(|&c| c >= 1) && z.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn config_errors() {
        assert_eq!(
            generate(&BenchConfig::new(0.0, 10, ShareDistribution::Uniform, 1)).unwrap_err(),
            ConfigError::ScaleFactor(0.0)
        );
        assert_eq!(
            generate(&BenchConfig::new(0.001, 0, ShareDistribution::Uniform, 1)).unwrap_err(),
            ConfigError::NoTenants
        );
        assert!(matches!(
            generate(&BenchConfig::new(0.001, 151, ShareDistribution::Uniform, 1)),
            Err(ConfigError::TooManyTenants { .. })
        ));
        assert!("pareto".parse::<ShareDistribution>().is_err());
    }

    #[test]
    fn generation_shape_and_determinism() {
        let cfg = BenchConfig::new(0.001, 10, ShareDistribution::Uniform, 7);
        let fx = generate(&cfg).unwrap();
        let li = count_by_owner(&fx.db, "Lineitem", "L_ttid");
        assert_eq!(li.len(), 10);
        assert!(li.values().all(|&n| n.abs_diff(600) <= 1), "{li:?}");
        assert_eq!(fx.formats[0].rate, 1.0);
        assert_eq!(fx.formats[0].phone_prefix, "");
        let again = generate(&cfg).unwrap();
        assert_eq!(fx.db.to_json_string(), again.db.to_json_string());
        assert_eq!(fx.catalog.to_json_string(), again.catalog.to_json_string());

        let z = generate(&BenchConfig::new(0.001, 10, ShareDistribution::Zipf, 7)).unwrap();
        let li = count_by_owner(&z.db, "Lineitem", "L_ttid");
        let counts: Vec<usize> = (1..=10).map(|t| li[&t]).collect();
        assert!(counts.windows(2).all(|w| w[0] > w[1]), "{counts:?}");
    }

    #[test]
    fn orders_link_to_own_customers() {
        let fx = generate(&BenchConfig::new(0.001, 10, ShareDistribution::Zipf, 3)).unwrap();
        let cust: BTreeSet<(i64, i64)> = fx
            .db
            .table("Customer")
            .unwrap()
            .rows
            .iter()
            .map(|r| (r[0].as_i64().unwrap(), r[1].as_i64().unwrap()))
            .collect();
        for r in &fx.db.table("Orders").unwrap().rows {
            assert!(cust.contains(&(r[0].as_i64().unwrap(), r[2].as_i64().unwrap())));
        }
    }

    #[test]
    fn small_validation() {
        let fx = generate(&BenchConfig::new(0.0002, 3, ShareDistribution::Uniform, 11)).unwrap();
        let report = validate(&fx, &query_suite(), &OptimizationLevel::ALL);
        for l in report.failures() {
            panic!("{} {}: {}", l.query, l.level, l.detail.as_deref().unwrap_or(""));
        }
        assert!(report.all_passed());
    }
}
