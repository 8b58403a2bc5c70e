use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rusqlite::types::Value;
use sqlglm::simbench::{efficiency_experiment, generate_table, CategoricalDesign, ExperimentConfig, SimDesign};
use sqlglm::sql::query::quote_ident;
use sqlglm::sql::count_rows;
use sqlglm::{fit_onestep, report, DbConnection, Family, Link};

use crate::args::{BenchArgs, Command, DesignArgs, FitArgs, LoadArgs, SimulateArgs};
use crate::config::CliConfig;
use crate::failure::Failure;

/// Rows per transaction when importing CSV.
const LOAD_BATCH: usize = 10_000;

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
        Command::Load(a) => load(a),
    }
}

fn fit(args: FitArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    cfg.overlay(&args);
    let plan = cfg.plan()?;
    let db = DbConnection::open_existing(&plan.db)?;
    let result = fit_onestep(&db, &plan.spec, &plan.options)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", report(&result, plan.format, plan.timings));
    Ok(())
}

fn parse_categorical(s: &str) -> Result<CategoricalDesign, Failure> {
    let bad = || Failure::config("invalid_option", format!("expected NAME:LEVELS[:RARE], got {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let (name, levels) = match parts.as_slice() {
        [name, levels] | [name, levels, _] => (*name, levels.parse::<usize>().map_err(|_| bad())?),
        _ => return Err(bad()),
    };
    if name.is_empty() || levels < 2 {
        return Err(bad());
    }
    match parts.get(2) {
        Some(rare) => {
            let rare: f64 = rare.parse().map_err(|_| bad())?;
            if !(rare > 0.0 && rare < 1.0) {
                return Err(bad());
            }
            Ok(CategoricalDesign::with_rare_level(name, levels, rare))
        }
        None => Ok(CategoricalDesign::uniform(name, levels)),
    }
}

/// Numeric predictors `x1..xk` take whatever coefficients the categoricals leave over.
fn design(a: &DesignArgs) -> Result<SimDesign, Failure> {
    let family: Family = a.family.parse()?;
    let link: Link = match &a.link {
        Some(l) => l.parse()?,
        None => family.canonical_link(),
    };
    let categorical = a
        .categorical
        .iter()
        .map(|s| parse_categorical(s))
        .collect::<Result<Vec<_>, _>>()?;
    let indicators: usize = categorical.iter().map(|c| c.levels - 1).sum();
    let k = a
        .beta
        .len()
        .checked_sub(1 + indicators)
        .ok_or_else(|| {
            Failure::config(
                "dimension_mismatch",
                format!("{} coefficients cannot cover an intercept and {indicators} indicators", a.beta.len()),
            )
        })?;
    if !(a.dispersion > 0.0 && a.dispersion.is_finite()) {
        return Err(Failure::config("invalid_option", "dispersion must be positive"));
    }
    let d = SimDesign {
        table: a.table.clone(),
        rows: a.rows,
        numeric: (1..=k).map(|i| format!("x{i}")).collect(),
        categorical,
        beta_true: a.beta.clone(),
        family,
        link,
        dispersion: a.dispersion,
        seed: a.seed,
    };
    d.validate()?;
    Ok(d)
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let design = design(&a.design)?;
    let mut db = DbConnection::open(&a.db)?;
    generate_table(&mut db, &design)?;
    let rows = count_rows(&db, &design.model_spec())?;
    println!("{}: {rows} rows", design.table);
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let config = ExperimentConfig {
        design: design(&a.design)?,
        replicates: a.replicates,
        exponents: a.exponents.clone(),
        parallel: !a.serial,
    };
    let rep = efficiency_experiment(&config)?;
    for f in &rep.failures {
        eprintln!(
            "warning: replicate {} ({}) failed: {}",
            f.replicate,
            f.estimator.name(),
            f.message
        );
    }
    if let Some(path) = &a.csv {
        let out = BufWriter::new(File::create(path)?);
        rep.write_csv(out)?;
    }
    println!("{}", rep.summary_json());
    Ok(())
}

/// Column is numeric when every non-empty field parses as a number.
fn infer_numeric(path: &Path) -> Result<(Vec<String>, Vec<bool>), Failure> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut numeric = vec![true; headers.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (j, field) in rec.iter().enumerate() {
            if numeric[j] && !field.is_empty() && field.trim().parse::<f64>().is_err() {
                numeric[j] = false;
            }
        }
    }
    Ok((headers, numeric))
}

fn load(a: LoadArgs) -> Result<(), Failure> {
    let (headers, numeric) = infer_numeric(&a.file)?;
    if headers.is_empty() {
        return Err(Failure::database("csv", "no header row"));
    }
    let table = quote_ident(&a.table);
    let columns: Vec<String> = headers
        .iter()
        .zip(&numeric)
        .map(|(h, &num)| format!("{} {}", quote_ident(h), if num { "REAL" } else { "TEXT" }))
        .collect();
    let mut db = DbConnection::open(&a.db)?;
    let drop = if a.replace {
        format!("DROP TABLE IF EXISTS {table}; ")
    } else {
        String::new()
    };
    db.execute_batch(&format!("{drop}CREATE TABLE {table} ({});", columns.join(", ")))?;

    let placeholders = (1..=headers.len()).map(|i| format!("?{i}")).collect::<Vec<_>>().join(", ");
    let insert = format!("INSERT INTO {table} VALUES ({placeholders})");
    let mut rdr = csv::Reader::from_path(&a.file)?;
    let mut records = rdr.records();
    let mut loaded = 0u64;
    let conn = db.raw_mut();
    loop {
        let tx = conn.transaction()?;
        let mut in_batch = 0;
        {
            let mut stmt = tx.prepare_cached(&insert)?;
            for rec in records.by_ref() {
                let rec = rec?;
                let values = rec.iter().zip(&numeric).map(|(f, &num)| match (f.is_empty(), num) {
                    (true, _) => Value::Null,
                    (false, true) => Value::Real(f.trim().parse().expect("checked numeric")),
                    (false, false) => Value::Text(f.to_string()),
                });
                stmt.execute(rusqlite::params_from_iter(values))?;
                in_batch += 1;
                if in_batch == LOAD_BATCH {
                    break;
                }
            }
        }
        tx.commit()?;
        loaded += in_batch as u64;
        if in_batch < LOAD_BATCH {
            break;
        }
    }
    println!("{}: {loaded} rows loaded", a.table);
    Ok(())
}
