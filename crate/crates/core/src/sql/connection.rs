use std::cell::RefCell;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::functions::FunctionFlags;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

use super::dialect::Dialect;
use crate::error::Result;

/// Name of the seeded uniform-random SQL function registered on each connection.
pub const UNIFORM_FUNCTION: &str = "sqlglm_uniform";

/// Statements issued through a [`DbConnection`], by purpose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementCounts {
    pub count: u64,
    pub distinct: u64,
    pub sample: u64,
    pub aggregate: u64,
    pub fetch: u64,
    pub write: u64,
}

impl StatementCounts {
    pub fn total(&self) -> u64 {
        self.count + self.distinct + self.sample + self.aggregate + self.fetch + self.write
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum StatementKind {
    Count,
    Distinct,
    Sample,
    Aggregate,
    Fetch,
    Write,
}

/// A single database session plus the dialect used to talk to it.
///
/// Not `Sync`: one fit at a time per connection.
pub struct DbConnection {
    conn: Connection,
    dialect: Dialect,
    counts: RefCell<StatementCounts>,
    rng: Arc<Mutex<ChaCha8Rng>>,
}

impl std::fmt::Debug for DbConnection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DbConnection")
            .field("path", &self.conn.path())
            .field("dialect", &self.dialect)
            .field("counts", &self.counts.borrow())
            .finish()
    }
}

impl DbConnection {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_connection(Connection::open(path)?, Dialect::sqlite())
    }

    /// Opens an existing database read-only; a missing file is an error.
    pub fn open_existing(path: impl AsRef<Path>) -> Result<Self> {
        let flags = OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_URI | OpenFlags::SQLITE_OPEN_NO_MUTEX;
        Self::from_connection(Connection::open_with_flags(path, flags)?, Dialect::sqlite())
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::from_connection(Connection::open_in_memory()?, Dialect::sqlite())
    }

    /// Wraps an open SQLite connection and registers the uniform function.
    pub fn from_connection(conn: Connection, dialect: Dialect) -> Result<Self> {
        let rng = Arc::new(Mutex::new(ChaCha8Rng::seed_from_u64(0)));
        let shared = Arc::clone(&rng);
        conn.create_scalar_function(UNIFORM_FUNCTION, 0, FunctionFlags::SQLITE_UTF8, move |_| {
            let mut rng = shared.lock().expect("rng lock poisoned");
            Ok(rng.random::<f64>())
        })?;
        Ok(Self {
            conn,
            dialect,
            counts: RefCell::new(StatementCounts::default()),
            rng,
        })
    }

    pub fn with_dialect(mut self, dialect: Dialect) -> Self {
        self.dialect = dialect;
        self
    }

    pub fn dialect(&self) -> &Dialect {
        &self.dialect
    }

    /// Reseeds the uniform function; `None` draws a seed from the OS.
    pub fn reseed(&self, seed: Option<u64>) {
        let seed = seed.unwrap_or_else(rand::random);
        *self.rng.lock().expect("rng lock poisoned") = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn statement_counts(&self) -> StatementCounts {
        *self.counts.borrow()
    }

    pub fn reset_counts(&self) {
        *self.counts.borrow_mut() = StatementCounts::default();
    }

    /// The underlying connection. Statements issued here are not counted.
    pub fn raw(&self) -> &Connection {
        &self.conn
    }

    pub fn raw_mut(&mut self) -> &mut Connection {
        &mut self.conn
    }

    /// Runs one or more write statements.
    pub fn execute_batch(&self, sql: &str) -> Result<()> {
        self.record(StatementKind::Write);
        self.conn.execute_batch(sql)?;
        Ok(())
    }

    pub fn table_exists(&self, table: &str) -> Result<bool> {
        let n: i64 = self.conn.query_row(
            "SELECT COUNT(*) FROM sqlite_master WHERE type IN ('table', 'view') AND name = ?1",
            [table],
            |r| r.get(0),
        )?;
        Ok(n > 0)
    }

    pub(crate) fn record(&self, kind: StatementKind) {
        let mut c = self.counts.borrow_mut();
        match kind {
            StatementKind::Count => c.count += 1,
            StatementKind::Distinct => c.distinct += 1,
            StatementKind::Sample => c.sample += 1,
            StatementKind::Aggregate => c.aggregate += 1,
            StatementKind::Fetch => c.fetch += 1,
            StatementKind::Write => c.write += 1,
        }
    }
}
