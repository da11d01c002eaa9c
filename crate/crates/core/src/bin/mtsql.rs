use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mtsql::ast::Statement;
use mtsql::bench::{self, BenchConfig, ConfigError, ShareDistribution};
use mtsql::catalog::{Catalog, CatalogError};
use mtsql::fixtures;
use mtsql::optimizer::{optimize_explained, OptimizationLevel};
use mtsql::parser::{self, SyntaxError};
use mtsql::refdb::{Database, FixtureFormatError, Layout};
use mtsql::rewriter::{RewriteContext, RewriteError};
use mtsql::session::{fmt_set, open_session, oracle_compare, RunError, SessionContext, SessionError};
use mtsql::tenant::TenantId;

#[derive(Parser)]
#[command(name = "mtsql", version, about = "Multi-tenant SQL rewriter, optimizer and reference executor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Sources {
    /// Catalog JSON; defaults to the built-in Employees/Roles/Regions example.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Database fixture JSON; defaults to the example data when no catalog is given.
    #[arg(long)]
    fixture: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SessionArgs {
    /// Client tenant id (C).
    #[arg(long)]
    client: u32,
    /// Scope: `IN (0,1)` or a `FROM … WHERE …` complex scope.
    #[arg(long)]
    scope: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the rewritten SQL of each statement.
    Rewrite {
        #[command(flatten)]
        sources: Sources,
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value = "canonical")]
        level: OptimizationLevel,
        file: PathBuf,
    },
    /// Rewrite and optimize; `--explain` prints every pass.
    Optimize {
        #[command(flatten)]
        sources: Sources,
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value = "o4")]
        level: OptimizationLevel,
        #[arg(long)]
        explain: bool,
        file: PathBuf,
    },
    /// Execute statements and print result tables.
    Run {
        #[command(flatten)]
        sources: Sources,
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value = "o4")]
        level: OptimizationLevel,
        /// Print decimals without rounding.
        #[arg(long)]
        full_precision: bool,
        file: PathBuf,
    },
    /// Compare shared-table rewrites with direct private-table evaluation.
    OracleCheck {
        #[command(flatten)]
        sources: Sources,
        /// Directory of `.sql` files.
        #[arg(long)]
        corpus: PathBuf,
        /// Restrict to one client; all tenants otherwise.
        #[arg(long)]
        client: Option<u32>,
    },
    /// Generate an MT-H-mini fixture directory.
    Gen {
        #[arg(long, default_value_t = 0.001)]
        sf: f64,
        #[arg(long, default_value_t = 10)]
        tenants: u32,
        #[arg(long, default_value = "uniform")]
        dist: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the MT-H-mini suite per level with C=1, D=all.
    Bench {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "canonical,o1,o2,o3,o4,inl-only")]
        levels: Vec<OptimizationLevel>,
        /// Single-tenant baseline catalog and data from `gen`; enables the validation protocol.
        #[arg(long, requires = "baseline_catalog")]
        baseline: Option<PathBuf>,
        #[arg(long, requires = "baseline")]
        baseline_catalog: Option<PathBuf>,
    },
    /// Check the well-formedness clauses of conversion pairs.
    ValidatePair {
        #[command(flatten)]
        sources: Sources,
        /// Pair name; all pairs otherwise.
        #[arg(long)]
        pair: Option<String>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Fixture(#[from] FixtureFormatError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Mismatch(String),
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> CliError {
        CliError::Run(e.into())
    }
}

impl From<RewriteError> for CliError {
    fn from(e: RewriteError) -> CliError {
        CliError::Run(e.into())
    }
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Io(_) => "IoError",
            CliError::Syntax(_) => "SyntaxError",
            CliError::Catalog(_) => "CatalogError",
            CliError::Fixture(_) => "FixtureFormatError",
            CliError::Config(_) => "ConfigError",
            CliError::Mismatch(_) => "Mismatch",
            CliError::Run(r) => match r {
                RunError::Session(SessionError::UnknownTenant(_)) => "UnknownTenant",
                RunError::Session(SessionError::ScopeEvaluation(_)) => "ScopeEvaluationError",
                RunError::Rewrite(RewriteError::IncomparableAttributes(_)) => "IncomparableAttributes",
                RunError::Rewrite(RewriteError::MissingPrivilege { .. }) => "NotAuthorized",
                RunError::Rewrite(_) => "RewriteError",
                RunError::Optimize(_) => "OptimizeError",
                RunError::Execution(_) => "ExecutionError",
                RunError::Catalog(_) => "CatalogError",
                RunError::Direct(_) => "OracleError",
            },
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Mismatch(_) => 3,
            _ => 1,
        }
    }
}

type CResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load(sources: &Sources) -> CResult<(Catalog, Database)> {
    let catalog = match &sources.catalog {
        Some(p) => Catalog::load(p)?,
        None => fixtures::example_catalog(),
    };
    let mut db = match (&sources.fixture, &sources.catalog) {
        (Some(p), _) => Database::load(p)?,
        (None, None) => fixtures::example_database(&catalog),
        (None, Some(_)) => Database::new(Layout::SharedTables),
    };
    if db.layout == Layout::PrivateTables {
        db = db.to_shared_layout(&catalog);
    }
    db.ensure_tables(&catalog);
    Ok((catalog, db))
}

fn open(catalog: &Catalog, args: &SessionArgs) -> CResult<SessionContext> {
    let mut s = open_session(catalog, TenantId(args.client))?;
    if let Some(text) = &args.scope {
        s.set_scope(parser::parse_scope(text)?);
    }
    Ok(s)
}

fn statements(path: &Path) -> CResult<Vec<Statement>> {
    Ok(parser::parse_statements(&read(path)?)?)
}

/// Keep scope, DDL and DCL effects so later statements of the file see them.
fn track_state(
    s: &Statement,
    session: &mut SessionContext,
    catalog: &mut Catalog,
    db: &mut Database,
) -> CResult<bool> {
    match s {
        Statement::Query(_) | Statement::Insert(_) | Statement::Update(_) | Statement::Delete(_) => Ok(false),
        _ => {
            session.execute(catalog, db, s, OptimizationLevel::Canonical)?;
            Ok(true)
        }
    }
}

fn rewrite_file(
    sources: &Sources,
    session: &SessionArgs,
    level: OptimizationLevel,
    explain: bool,
    file: &Path,
) -> CResult<()> {
    let (mut catalog, mut db) = load(sources)?;
    let mut sess = open(&catalog, session)?;
    for s in statements(file)? {
        if let Statement::SetScope(_) = s {
            track_state(&s, &mut sess, &mut catalog, &mut db)?;
            println!("-- scope resolves to {}", fmt_set(&sess.resolve_scope(&catalog, &db)?));
            continue;
        }
        let dataset = sess.dataset_for(&catalog, &db, &s)?;
        let ctx = RewriteContext::new(&catalog, sess.client, dataset);
        match &s {
            Statement::Query(q) => {
                let out = ctx.rewrite_query(q)?;
                let canonical = out.query().expect("query rewrite").clone();
                let (optimized, reports) = optimize_explained(&ctx, canonical.clone(), level).map_err(RunError::from)?;
                if explain {
                    println!("-- canonical: {canonical}");
                    for r in &reports {
                        if r.changed() {
                            println!("-- {}:\n--   before: {}\n--   after:  {}", r.pass, r.before, r.after);
                        } else {
                            println!("-- {}: no change", r.pass);
                        }
                    }
                }
                println!("{optimized};");
            }
            _ => {
                let out = ctx.rewrite_statement(&s, Some(&db))?;
                for d in &out.diagnostics {
                    println!("-- {d}");
                }
                for stmt in &out.sql {
                    println!("{stmt};");
                }
                drop(ctx);
                track_state(&s, &mut sess, &mut catalog, &mut db)?;
            }
        }
    }
    Ok(())
}

fn run_file(
    sources: &Sources,
    session: &SessionArgs,
    level: OptimizationLevel,
    full_precision: bool,
    file: &Path,
) -> CResult<()> {
    let (mut catalog, mut db) = load(sources)?;
    let mut sess = open(&catalog, session)?;
    for s in statements(file)? {
        let res = sess.execute(&mut catalog, &mut db, &s, level)?;
        for d in &res.diagnostics {
            println!("-- {d}");
        }
        if let Some(rel) = &res.relation {
            print!("{}", rel.render(full_precision));
        }
    }
    Ok(())
}

fn oracle_check(sources: &Sources, corpus: &Path, client: Option<u32>) -> CResult<()> {
    let (catalog, db) = load(sources)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus)
        .map_err(|e| CliError::Io(format!("{}: {e}", corpus.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "sql"))
        .collect();
    files.sort();
    let clients: Vec<TenantId> = match client {
        Some(c) => {
            open_session(&catalog, TenantId(c))?;
            vec![TenantId(c)]
        }
        None => catalog.tenants.iter().copied().collect(),
    };
    let (mut pass, mut fail) = (0, 0);
    for f in &files {
        let name = f.file_name().expect("file entry").to_string_lossy().to_string();
        for (i, s) in statements(f)?.iter().enumerate() {
            for &c in &clients {
                let all = catalog.tenants.clone();
                for d in [BTreeSet::from([c]), all] {
                    let label = format!("{name}#{} C={c} D={}", i + 1, fmt_set(&d));
                    match oracle_compare(&catalog, &db, c, &d, s) {
                        Ok(None) => {
                            pass += 1;
                            println!("PASS {label}");
                        }
                        Ok(Some(diff)) => {
                            fail += 1;
                            println!("FAIL {label}: {diff}");
                        }
                        Err(e) => {
                            fail += 1;
                            println!("FAIL {label}: {e}");
                        }
                    }
                }
            }
        }
    }
    println!("{pass} passed, {fail} failed");
    if fail > 0 {
        return Err(CliError::Mismatch(format!("{fail} oracle mismatch(es)")));
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> CResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn gen(sf: f64, tenants: u32, dist: &str, seed: u64, out: &Path) -> CResult<()> {
    let cfg = BenchConfig::new(sf, tenants, dist.parse::<ShareDistribution>()?, seed);
    let fx = bench::generate(&cfg)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    write(&out.join("catalog.json"), &fx.catalog.to_json_string())?;
    write(&out.join("fixture.json"), &fx.db.to_json_string())?;
    write(&out.join("baseline-catalog.json"), &fx.baseline_catalog.to_json_string())?;
    write(&out.join("baseline.json"), &fx.baseline.to_json_string())?;
    println!(
        "generated sf={sf} tenants={tenants} dist={} seed={seed}: {} customers, {} orders, {} lineitems",
        cfg.dist,
        cfg.customers(),
        cfg.orders(),
        cfg.lineitems()
    );
    for f in &fx.formats {
        println!("tenant {}: {} (rate {}), phone prefix '{}'", f.tenant, f.currency, f.rate, f.phone_prefix);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run_bench(
    catalog: &Path,
    fixture: &Path,
    levels: &[OptimizationLevel],
    baseline: Option<&Path>,
    baseline_catalog: Option<&Path>,
) -> CResult<()> {
    let (catalog, db) = load(&Sources {
        catalog: Some(catalog.to_path_buf()),
        fixture: Some(fixture.to_path_buf()),
    })?;
    let suite = bench::query_suite();
    let report = match (baseline, baseline_catalog) {
        (Some(b), Some(bc)) => {
            let bcat = Catalog::load(bc)?;
            let bdb = Database::load(b)?;
            bench::validate_on(&catalog, &db, &bcat, &bdb, &suite, levels)
        }
        _ => bench::compare_levels(&catalog, &db, &suite, levels),
    };
    print!("{}", report.table());
    for l in report.failures() {
        println!("{} {}: {}", l.query, l.level, l.detail.as_deref().unwrap_or("mismatch"));
    }
    if !report.all_passed() {
        return Err(CliError::Mismatch(format!("{} failing cell(s)", report.failures().len())));
    }
    Ok(())
}

fn validate_pair(sources: &Sources, pair: Option<&str>) -> CResult<()> {
    let (catalog, _) = load(sources)?;
    let pairs: Vec<_> = match pair {
        Some(name) => vec![catalog.require_pair(name)?.clone()],
        None => catalog.pairs.clone(),
    };
    let tenants: Vec<TenantId> = catalog.tenants.iter().copied().collect();
    let mut ok = true;
    for p in pairs {
        let report = p.validate(&tenants, &p.standard_samples());
        println!("pair {} ({})", p.name, p.classify());
        print!("{report}");
        ok &= report.all_passed();
    }
    if !ok {
        return Err(CliError::Mismatch("ill-formed conversion pair".into()));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CResult<()> {
    match cli.command {
        Command::Rewrite {
            sources,
            session,
            level,
            file,
        } => rewrite_file(&sources, &session, level, false, &file),
        Command::Optimize {
            sources,
            session,
            level,
            explain,
            file,
        } => rewrite_file(&sources, &session, level, explain, &file),
        Command::Run {
            sources,
            session,
            level,
            full_precision,
            file,
        } => run_file(&sources, &session, level, full_precision, &file),
        Command::OracleCheck { sources, corpus, client } => oracle_check(&sources, &corpus, client),
        Command::Gen {
            sf,
            tenants,
            dist,
            seed,
            out,
        } => gen(sf, tenants, &dist, seed, &out),
        Command::Bench {
            catalog,
            fixture,
            levels,
            baseline,
            baseline_catalog,
        } => run_bench(&catalog, &fixture, &levels, baseline.as_deref(), baseline_catalog.as_deref()),
        Command::ValidatePair { sources, pair } => validate_pair(&sources, pair.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let err = CliError::Usage(text.trim_start_matches("error: ").trim_end().to_string());
            eprintln!("error[{}]: {err}", err.category());
            return ExitCode::from(err.exit_code());
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
