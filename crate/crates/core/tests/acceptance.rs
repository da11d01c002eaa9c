//! Acceptance criteria 1 to 9. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mtsql::ast::{AggFunc, Expr, Query, Statement};
use mtsql::bench::{self, BenchConfig, ShareDistribution, PHONE_PREFIXES, Q1_CORE};
use mtsql::catalog::Catalog;
use mtsql::conversion::{ConversionClass, ConversionPair, LinearParams, OpaqueMap, TenantParams};
use mtsql::fixtures::{apply_ddl, example};
use mtsql::optimizer::{distribute_aggregates, optimize, OptimizationLevel};
use mtsql::parser::{parse, parse_query};
use mtsql::refdb::direct::execute_mtsql_direct;
use mtsql::refdb::{execute, Column, Database, Layout, Relation};
use mtsql::rewriter::RewriteContext;
use mtsql::session::{fmt_set, open_session, oracle_compare, run_query};
use mtsql::tenant::TenantId;
use mtsql::value::{ScalarType, Value, DECIMAL_REL_TOLERANCE};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{client_datasets, corpus, random_query, set};

type Outcome = Result<String, String>;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn dec(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    if took > limit {
        Err(format!("took {:.1}s, limit {}s", took.as_secs_f64(), limit.as_secs()))
    } else {
        Ok(())
    }
}

// -- 1 ------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tenants: Vec<TenantId> = (0..20).map(TenantId).collect();

    let mut currency = ConversionPair::linear("currency");
    let mut affine = ConversionPair::linear("temperature");
    let mut phone = ConversionPair::prefix("phone");
    for &t in &tenants {
        let rate = 10f64.powf(rng.gen_range(-2.0..2.0));
        currency.set_tenant(t, TenantParams::Linear(LinearParams::scale(rate))).unwrap();
        let p = LinearParams {
            rate: rng.gen_range(0.2..5.0),
            offset: rng.gen_range(-500.0..500.0),
        };
        affine.set_tenant(t, TenantParams::Linear(p)).unwrap();
        let prefix = format!("{}{}", PHONE_PREFIXES[t.0 as usize % PHONE_PREFIXES.len()], t.0);
        phone.set_tenant(t, TenantParams::Prefix(prefix)).unwrap();
    }
    for p in [&currency, &affine, &phone] {
        let report = p.validate(&tenants, &p.standard_samples());
        if !report.all_passed() {
            return Err(format!("{}: {report}", p.name));
        }
    }

    let mut triples = 0usize;
    let pairs = [&currency, &affine, &phone];
    for i in 0..12_000 {
        let pair = pairs[i % 3];
        let t = *tenants.choose(&mut rng).unwrap();
        let other = *tenants.choose(&mut rng).unwrap();
        let third = *tenants.choose(&mut rng).unwrap();
        let is_text = pair.value_type == ScalarType::Text;
        let sample = |rng: &mut ChaCha8Rng| -> Value {
            if is_text {
                let digits: String = (0..rng.gen_range(1..12)).map(|_| char::from(b'0' + rng.gen_range(0..10))).collect();
                pair.from_universal(t, &Value::text(digits)).unwrap()
            } else {
                Value::Dec(rng.gen_range(-1e6..1e6))
            }
        };
        let x = sample(&mut rng);
        let y = if rng.gen_bool(0.2) { x.clone() } else { sample(&mut rng) };
        let same = |a: &Value, b: &Value| -> bool {
            if is_text {
                a.group_eq(b)
            } else {
                rel_close(dec(a), dec(b), DECIMAL_REL_TOLERANCE)
            }
        };
        let fail = |what: &str| Err(format!("{} tenant {t}: {what} for {x}", pair.name));

        let u = pair.to_universal(t, &x).unwrap();
        let back = pair.from_universal(t, &u).unwrap();
        if !same(&back, &x) {
            return fail("round trip");
        }
        let uy = pair.to_universal(t, &y).unwrap();
        if x.group_eq(&y) != u.group_eq(&uy) {
            return fail("equality preservation");
        }
        let direct = pair.convert(t, third, &x).unwrap();
        let via = pair.convert(other, third, &pair.convert(t, other, &x).unwrap()).unwrap();
        if !same(&direct, &via) {
            return fail("composition");
        }
        let home = pair.convert(other, t, &pair.convert(t, other, &x).unwrap()).unwrap();
        if !same(&home, &x) {
            return fail("cross-tenant round trip");
        }
        triples += 1;
    }
    within(Duration::from_secs(5), started)?;
    Ok(format!("{triples} triples over currency, affine and prefix pairs"))
}

// -- 2 ------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let (catalog, db) = example();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut statements: Vec<String> = corpus()
        .into_iter()
        .filter(|(_, s)| matches!(s, Statement::Query(_)))
        .map(|(_, s)| s.to_string())
        .collect();
    let fixed = statements.len();
    statements.extend((0..600).map(|_| random_query(&mut rng)));
    let combos = client_datasets();
    let mut checked = 0;
    for (i, sql) in statements.iter().enumerate() {
        let stmt = parse(sql).map_err(|e| format!("{sql}: {e}"))?;
        let (client, dataset) = &combos[i % combos.len()];
        match oracle_compare(&catalog, &db, *client, dataset, &stmt) {
            Ok(None) => checked += 1,
            Ok(Some(diff)) => return Err(format!("C={client} D={}: {sql}: {diff}", fmt_set(dataset))),
            Err(e) => return Err(format!("C={client} D={}: {sql}: {e}", fmt_set(dataset))),
        }
    }
    within(Duration::from_secs(60), started)?;
    Ok(format!("{checked} queries ({fixed} fixed, {} random) equal to direct evaluation", statements.len() - fixed))
}

// -- 3 ------------------------------------------------------------------------

const OPTIMIZED: [OptimizationLevel; 5] = [
    OptimizationLevel::O1,
    OptimizationLevel::O2,
    OptimizationLevel::O3,
    OptimizationLevel::O4,
    OptimizationLevel::InlOnly,
];

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let (mut catalog, _) = example();
    catalog.grant_all_to_all();
    let db = mtsql::fixtures::example_database(&catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut queries: Vec<Query> = corpus()
        .into_iter()
        .filter_map(|(_, s)| match s {
            Statement::Query(q) => Some(q),
            _ => None,
        })
        .collect();
    queries.extend((0..200).map(|_| parse_query(&random_query(&mut rng)).unwrap()));
    let mut cells = 0;
    for q in &queries {
        for (client, dataset) in client_datasets() {
            let (_, want) = run_query(&catalog, &db, client, &dataset, q, OptimizationLevel::Canonical)
                .map_err(|e| format!("canonical {q}: {e}"))?;
            for level in OPTIMIZED {
                let (_, got) =
                    run_query(&catalog, &db, client, &dataset, q, level).map_err(|e| format!("{level} {q}: {e}"))?;
                if let Some(d) = want.multiset_diff(&got) {
                    return Err(format!("{level} C={client} D={}: {q}: {d}", fmt_set(&dataset)));
                }
                cells += 1;
            }
        }
    }
    let suite = bench::query_suite();
    for dist in [ShareDistribution::Uniform, ShareDistribution::Zipf] {
        let fx = bench::generate(&BenchConfig::new(0.001, 10, dist, 3)).map_err(|e| e.to_string())?;
        let report = bench::compare_levels(&fx.catalog, &fx.db, &suite, &OPTIMIZED);
        if let Some(f) = report.failures().first() {
            return Err(format!("MT-H {dist} {} {}: {}", f.query, f.level, f.detail.as_deref().unwrap_or("")));
        }
        cells += report.lines.len();
    }
    within(Duration::from_secs(120), started)?;
    Ok(format!("{cells} (query, level) cells equal to canonical"))
}

// -- 4 ------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let fx = bench::generate(&BenchConfig::new(0.001, 10, ShareDistribution::Uniform, 4)).map_err(|e| e.to_string())?;
    let n = fx.db.table("Lineitem").map(Relation::len).unwrap_or(0);
    if n != 6000 {
        return Err(format!("expected 6000 Lineitem rows, got {n}"));
    }
    let (canon_rel, canon) = bench::run_mt(&fx, Q1_CORE, OptimizationLevel::Canonical).map_err(|e| e.to_string())?;
    let (o3_rel, o3) = bench::run_mt(&fx, Q1_CORE, OptimizationLevel::O3).map_err(|e| e.to_string())?;
    if let Some(d) = canon_rel.multiset_diff(&o3_rel) {
        return Err(format!("o3 result differs: {d}"));
    }
    if canon != 12_000 || o3 > 11 {
        return Err(format!("canonical {canon} (want 12000), o3 {o3} (want <= 11)"));
    }
    Ok(format!("N={n}, T=10: canonical {canon} calls, o3 {o3} calls"))
}

// -- 5 ------------------------------------------------------------------------

fn has_conversion(q: &Query) -> bool {
    let mut found = false;
    q.walk_queries(&mut |sub| {
        for e in sub.expressions() {
            e.walk(&mut |x| found |= matches!(x, Expr::Convert { .. }));
        }
    });
    let text = q.to_string();
    found || text.contains("ToUniversal(") || text.contains("FromUniversal(")
}

fn criterion_5() -> Outcome {
    let (catalog, db) = example();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut queries: Vec<Query> = corpus()
        .into_iter()
        .filter_map(|(_, s)| match s {
            Statement::Query(q) => Some(q),
            _ => None,
        })
        .collect();
    queries.extend((0..200).map(|_| parse_query(&random_query(&mut rng)).unwrap()));
    let mut checked = 0;
    let mut run_all = |catalog: &Catalog, db: &Database, client: TenantId, qs: &[Query]| -> Result<(), String> {
        for q in qs {
            let (o1, _) = run_query(catalog, db, TenantId(client.0), &BTreeSet::from([client]), q, OptimizationLevel::O1)
                .map_err(|e| format!("{q}: {e}"))?;
            if has_conversion(&o1) {
                return Err(format!("C={client}: conversion left in o1 output: {o1}"));
            }
            db.reset_counters();
            execute(db, catalog, &o1).map_err(|e| e.to_string())?;
            if db.total_conversions() != 0 {
                return Err(format!("C={client}: counter {} for {o1}", db.total_conversions()));
            }
            checked += 1;
        }
        Ok(())
    };
    for c in [0, 1] {
        run_all(&catalog, &db, TenantId(c), &queries)?;
    }
    let fx = bench::generate(&BenchConfig::new(0.001, 10, ShareDistribution::Zipf, 5)).map_err(|e| e.to_string())?;
    let suite: Vec<Query> = bench::query_suite().iter().map(|s| parse_query(s.sql).unwrap()).collect();
    for c in [1, 4] {
        run_all(&fx.catalog, &fx.db, TenantId(c), &suite)?;
    }
    Ok(format!("{checked} o1 rewrites with D={{C}}: no conversion calls, counter 0"))
}

// -- 6 ------------------------------------------------------------------------

/// Catalog with one convertible column `I_v` whose pair has the given class.
fn injected_catalog(class: ConversionClass, tenants: u32, rng: &mut ChaCha8Rng) -> (Catalog, Vec<Vec<f64>>) {
    let mut c = Catalog::new();
    let domain: Vec<f64> = {
        let mut u: Vec<f64> = (0..8).map(|i| (i * 10 + rng.gen_range(1..9)) as f64).collect();
        u.sort_by(f64::total_cmp);
        u
    };
    let pair = match class {
        ConversionClass::MultiplicativeLinear | ConversionClass::AffineLinear => ConversionPair::linear("val"),
        ConversionClass::OrderPreserving => ConversionPair::opaque("val", ScalarType::Decimal, true),
        ConversionClass::EqualityPreserving => ConversionPair::opaque("val", ScalarType::Decimal, false),
    };
    c.register_pair(pair).unwrap();
    let mut domains = Vec::new();
    for t in 0..tenants {
        let (params, local) = match class {
            ConversionClass::MultiplicativeLinear | ConversionClass::AffineLinear => {
                let offset = if class == ConversionClass::AffineLinear && t > 0 { rng.gen_range(1.0..50.0) } else { 0.0 };
                let p = LinearParams {
                    rate: rng.gen_range(0.5..3.0),
                    offset,
                };
                let local = (0..8).map(|_| (rng.gen_range(1..100_000) as f64) / 100.0).collect();
                (TenantParams::Linear(p), local)
            }
            _ => {
                // a strictly increasing re-encoding of the universal domain,
                // paired in reverse for the non-monotone case
                let scale = rng.gen_range(1.0..4.0);
                let local: Vec<f64> = domain.iter().map(|u| (u * scale + t as f64).round()).collect();
                let mut universal = domain.clone();
                if class == ConversionClass::EqualityPreserving {
                    universal.reverse();
                }
                let m = OpaqueMap::bijection(local.iter().zip(&universal).map(|(&x, &u)| (Value::Dec(x), Value::Dec(u))));
                (TenantParams::Opaque(m), local)
            }
        };
        c.register_tenant(TenantId(t), BTreeMap::from([("val".to_string(), params)])).unwrap();
        domains.push(local);
    }
    apply_ddl(
        &mut c,
        "CREATE TABLE Items SPECIFIC (I_id INTEGER NOT NULL SPECIFIC, I_g INTEGER NOT NULL COMPARABLE, \
         I_v DECIMAL(15,2) NOT NULL CONVERTIBLE @valToUniversal @valFromUniversal)",
    )
    .unwrap();
    (c, domains)
}

fn items_db(catalog: &Catalog, domains: &[Vec<f64>], rows: usize, rng: &mut ChaCha8Rng) -> Database {
    let def = catalog.table("Items").unwrap();
    let columns: Vec<Column> = def.shared_columns().into_iter().map(|(n, t)| Column::new(n, Some(t))).collect();
    let mut data = Vec::new();
    for (t, dom) in domains.iter().enumerate() {
        for id in 0..rng.gen_range(1..=rows) {
            let v = *dom.choose(rng).unwrap();
            let row: Vec<Value> = columns
                .iter()
                .map(|c| match c.name.as_str() {
                    "I_ttid" => Value::Int(t as i64),
                    "I_id" => Value::Int(id as i64),
                    "I_g" => Value::Int(rng.gen_range(0..3)),
                    _ => Value::Dec(v),
                })
                .collect();
            data.push(row);
        }
    }
    let mut db = Database::new(Layout::SharedTables);
    db.insert_table("Items", Relation::with_rows(columns, data));
    db
}

/// Ticks in the distributability matrix.
fn gate(class: ConversionClass, func: AggFunc) -> bool {
    match func {
        AggFunc::Count => true,
        AggFunc::Min | AggFunc::Max => class >= ConversionClass::OrderPreserving,
        AggFunc::Sum | AggFunc::Avg => class >= ConversionClass::AffineLinear,
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let funcs = [AggFunc::Count, AggFunc::Min, AggFunc::Max, AggFunc::Sum, AggFunc::Avg];
    let mut cases = 0;
    for round in 0..25 {
        for class in ConversionClass::ALL {
            let tenants = rng.gen_range(2..5);
            let (catalog, domains) = injected_catalog(class, tenants, &mut rng);
            if catalog.pair("val").unwrap().classify() != class {
                return Err(format!("injected pair classified as {}, wanted {class}", catalog.pair("val").unwrap().classify()));
            }
            let db = items_db(&catalog, &domains, 12, &mut rng);
            let client = TenantId(rng.gen_range(0..tenants));
            let ctx = RewriteContext::new(&catalog, client, (0..tenants).map(TenantId).collect());
            for func in funcs {
                let sql = if round % 2 == 0 {
                    format!("SELECT {}(I_v) AS x FROM Items", func.name())
                } else {
                    format!("SELECT I_g, {}(I_v) AS x FROM Items GROUP BY I_g", func.name())
                };
                let canonical = ctx.rewrite_query(&parse_query(&sql).unwrap()).unwrap().query().unwrap().clone();
                let distributed = distribute_aggregates(&ctx, canonical.clone());
                let fired = distributed != canonical;
                if fired != gate(class, func) {
                    return Err(format!("{class} x {}: fired={fired}, expected {}", func.name(), gate(class, func)));
                }
                let want = execute(&db, &catalog, &canonical).map_err(|e| e.to_string())?;
                let got = execute(&db, &catalog, &distributed).map_err(|e| e.to_string())?;
                if let Some(d) = want.multiset_diff(&got) {
                    return Err(format!("{class} x {}: {d}\n{distributed}", func.name()));
                }
                cases += 1;
            }
        }
    }

    // phone numbers: value-carrying aggregates stay put
    let mut c = Catalog::new();
    c.register_pair(ConversionPair::prefix("phone")).unwrap();
    for (t, p) in [(0, "+"), (1, "00"), (2, "011-")] {
        c.register_tenant(TenantId(t), BTreeMap::from([("phone".to_string(), TenantParams::Prefix(p.into()))]))
            .unwrap();
    }
    apply_ddl(
        &mut c,
        "CREATE TABLE Contacts SPECIFIC (K_id INTEGER NOT NULL SPECIFIC, \
         K_phone VARCHAR(20) CONVERTIBLE @phoneToUniversal @phoneFromUniversal)",
    )
    .unwrap();
    let ctx = RewriteContext::new(&c, TenantId(0), set(&[0, 1, 2]));
    for sql in [
        "SELECT MIN(K_phone) FROM Contacts",
        "SELECT MAX(K_phone) FROM Contacts",
        "SELECT K_id, MIN(K_phone) FROM Contacts GROUP BY K_id",
        "SELECT COUNT(DISTINCT K_phone) FROM Contacts",
    ] {
        let canonical = ctx.rewrite_query(&parse_query(sql).unwrap()).unwrap().query().unwrap().clone();
        for level in [OptimizationLevel::O3, OptimizationLevel::O4] {
            let o = optimize(&ctx, canonical.clone(), level).map_err(|e| e.to_string())?;
            if o.to_string().contains("mt_dist") {
                return Err(format!("phone aggregate distributed at {level}: {o}"));
            }
        }
        cases += 1;
    }
    Ok(format!("{cases} (class, aggregate) cases match the gate; phone MIN/MAX never distribute"))
}

// -- 7 ------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0f64;
    for i in 0..1000 {
        let parts = rng.gen_range(1..6);
        let mut total_n = 0f64;
        let mut sum_f = 0f64;
        let mut weighted = 0f64;
        let mut reconstructed = 0f64;
        let mut magnitude = 0f64;
        for _ in 0..parts {
            let a = rng.gen_range(-5.0..5.0);
            let b = rng.gen_range(-1000.0..1000.0);
            let xs: Vec<f64> = (0..rng.gen_range(1..40)).map(|_| rng.gen_range(-1e4..1e4)).collect();
            let fx: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let n = xs.len() as f64;
            let mean_x = xs.iter().sum::<f64>() / n;
            let partial_avg = fx.iter().sum::<f64>() / n;
            total_n += n;
            sum_f += fx.iter().sum::<f64>();
            magnitude += fx.iter().map(|v| v.abs()).sum::<f64>();
            weighted += n * (a * mean_x + b);
            reconstructed += n * partial_avg;
        }
        // relative to the mean magnitude of the summands, so near-zero
        // totals do not blow up the ratio
        let mean_direct = sum_f / total_n;
        let mean_weighted = weighted / total_n;
        let err_avg = (mean_direct - mean_weighted).abs() / (magnitude / total_n).max(mean_direct.abs());
        let err_sum = (sum_f - reconstructed).abs() / magnitude.max(sum_f.abs());
        worst = worst.max(err_avg).max(err_sum);
        if err_avg > 1e-9 || err_sum > 1e-9 {
            return Err(format!("instance {i}: avg error {err_avg:e}, sum error {err_sum:e}"));
        }
    }

    // the same law through the optimizer on affine pairs
    for i in 0..200 {
        let tenants = rng.gen_range(2..5);
        let (catalog, domains) = injected_catalog(ConversionClass::AffineLinear, tenants, &mut rng);
        let db = items_db(&catalog, &domains, 15, &mut rng);
        let client = TenantId(rng.gen_range(0..tenants));
        let dataset: BTreeSet<TenantId> = (0..tenants).map(TenantId).collect();
        let q = parse_query("SELECT AVG(I_v) AS a, SUM(I_v) AS s FROM Items").unwrap();
        let (_, want) = run_query(&catalog, &db, client, &dataset, &q, OptimizationLevel::Canonical).map_err(|e| e.to_string())?;
        let (o3, got) = run_query(&catalog, &db, client, &dataset, &q, OptimizationLevel::O3).map_err(|e| e.to_string())?;
        if !o3.to_string().contains("mt_dist") {
            return Err(format!("instance {i}: affine SUM/AVG did not distribute: {o3}"));
        }
        for c in 0..2 {
            let (w, g) = (dec(&want.rows[0][c]), dec(&got.rows[0][c]));
            if !rel_close(w, g, 1e-9) {
                return Err(format!("instance {i}, column {c}: canonical {w}, distributed {g}"));
            }
        }
    }
    Ok(format!("1000 instances within 1e-9 (worst {worst:.1e}); 200 distributed rewrites agree"))
}

// -- 8 ------------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let started = Instant::now();
    let suite = bench::query_suite();
    let mut cells = 0;
    for tenants in [1, 10, 100] {
        for dist in [ShareDistribution::Uniform, ShareDistribution::Zipf] {
            let fx = bench::generate(&BenchConfig::new(0.001, tenants, dist, 8)).map_err(|e| e.to_string())?;
            let report = bench::validate(&fx, &suite, &OptimizationLevel::ALL);
            if let Some(f) = report.failures().first() {
                return Err(format!("T={tenants} {dist}: {} at {} against {}: {}", f.query, f.level, f.gold_standard, f.detail.as_deref().unwrap_or("")));
            }
            cells += report.lines.len();
        }
    }
    within(Duration::from_secs(300), started)?;
    Ok(format!("{cells} cells pass at T in {{1,10,100}}, both distributions"))
}

// -- 9 ------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let (catalog, db) = example();
    let mut s = open_session(&catalog, TenantId(0)).map_err(|e| e.to_string())?;
    let Statement::SetScope(scope) = parse("SET SCOPE = \"FROM Employees WHERE E_salary > 180K\"").unwrap() else {
        return Err("not a scope statement".into());
    };
    s.set_scope(scope.clone());
    let shared = s.resolve_scope(&catalog, &db).map_err(|e| e.to_string())?;
    let private = s.resolve_scope(&catalog, &db.to_private_layout(&catalog)).map_err(|e| e.to_string())?;
    if shared != set(&[1]) || private != set(&[1]) {
        return Err(format!("complex scope: shared {}, private {}", fmt_set(&shared), fmt_set(&private)));
    }
    // the oracle's own owner computation
    let q = parse_query("SELECT E_name FROM Employees WHERE E_salary > 180K").unwrap();
    let ss = db.to_private_layout(&catalog);
    let direct = execute_mtsql_direct(TenantId(0), &catalog.tenants, &Statement::Query(q), &ss, &catalog)
        .map_err(|e| e.to_string())?;
    if direct.relation.is_empty() {
        return Err("oracle found no qualifying rows".into());
    }
    s.set_scope(mtsql::ast::ScopeSpec::Simple(vec![]));
    let all = s.resolve_scope(&catalog, &db).map_err(|e| e.to_string())?;
    if all != catalog.tenants {
        return Err(format!("Simple([]) gave {}", fmt_set(&all)));
    }
    Ok(format!("complex scope {}, Simple([]) {}", fmt_set(&shared), fmt_set(&all)))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "conversion algebra", criterion_1),
        (2, "canonical correctness", criterion_2),
        (3, "optimizer soundness", criterion_3),
        (4, "conversion-call economy", criterion_4),
        (5, "trivial-opt completeness", criterion_5),
        (6, "distributability gating", criterion_6),
        (7, "weighted-average law", criterion_7),
        (8, "MT-H-mini validation", criterion_8),
        (9, "scope resolution", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {detail} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
