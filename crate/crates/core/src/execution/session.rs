//! Persistent session history backed by SQLite.
//!
//! Node results are only ever inserted; `seq` gives the commit order of a
//! session. Templates live in the same database.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::NodeResult;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("store: corrupt record: {0}")]
    Corrupt(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub seq: i64,
    pub execution_id: String,
    pub result: NodeResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredTemplate {
    pub template_id: String,
    pub name: String,
    pub workflow_json: String,
    pub content_hash: String,
    pub lineage: Option<String>,
    pub created_at: String,
}

pub struct SessionStore {
    conn: Mutex<Connection>,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS history (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    session_id TEXT NOT NULL,
    execution_id TEXT NOT NULL,
    node_name TEXT NOT NULL,
    result TEXT NOT NULL,
    UNIQUE (session_id, execution_id, node_name)
);
CREATE INDEX IF NOT EXISTS history_session ON history (session_id, seq);
CREATE TRIGGER IF NOT EXISTS history_no_update BEFORE UPDATE ON history
    BEGIN SELECT RAISE(ABORT, 'history is append-only'); END;
CREATE TRIGGER IF NOT EXISTS history_no_delete BEFORE DELETE ON history
    BEGIN SELECT RAISE(ABORT, 'history is append-only'); END;
CREATE TABLE IF NOT EXISTS templates (
    template_id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    workflow TEXT NOT NULL,
    content_hash TEXT NOT NULL,
    lineage TEXT,
    created_at TEXT NOT NULL
);
";

impl SessionStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        Self::init(conn)
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.execute_batch(SCHEMA)?;
        Ok(SessionStore {
            conn: Mutex::new(conn),
        })
    }

    /// Appends one result; returns its sequence number.
    pub fn append(&self, session_id: &str, execution_id: &str, result: &NodeResult) -> Result<i64, StoreError> {
        let json = serde_json::to_string(result)?;
        let conn = self.conn.lock().unwrap();
        conn.execute(
            "INSERT INTO history (session_id, execution_id, node_name, result) VALUES (?1, ?2, ?3, ?4)",
            params![session_id, execution_id, result.node_name, json],
        )?;
        Ok(conn.last_insert_rowid())
    }

    pub fn history(&self, session_id: &str) -> Result<Vec<HistoryEntry>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt =
            conn.prepare("SELECT seq, execution_id, result FROM history WHERE session_id = ?1 ORDER BY seq")?;
        let rows = stmt.query_map(params![session_id], |r| {
            Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (seq, execution_id, json) = row?;
            out.push(HistoryEntry {
                seq,
                execution_id,
                result: serde_json::from_str(&json)?,
            });
        }
        Ok(out)
    }

    /// Results map of one execution rebuilt from history.
    pub fn replay(&self, session_id: &str, execution_id: &str) -> Result<BTreeMap<String, NodeResult>, StoreError> {
        Ok(self
            .history(session_id)?
            .into_iter()
            .filter(|e| e.execution_id == execution_id)
            .map(|e| (e.result.node_name.clone(), e.result))
            .collect())
    }

    pub fn put_template(&self, t: &StoredTemplate) -> Result<(), StoreError> {
        self.conn.lock().unwrap().execute(
            "INSERT INTO templates (template_id, name, workflow, content_hash, lineage, created_at) \
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![t.template_id, t.name, t.workflow_json, t.content_hash, t.lineage, t.created_at],
        )?;
        Ok(())
    }

    pub fn get_template(&self, template_id: &str) -> Result<Option<StoredTemplate>, StoreError> {
        let conn = self.conn.lock().unwrap();
        Ok(conn
            .query_row(
                "SELECT template_id, name, workflow, content_hash, lineage, created_at FROM templates \
                 WHERE template_id = ?1",
                params![template_id],
                template_row,
            )
            .optional()?)
    }

    pub fn list_templates(&self) -> Result<Vec<StoredTemplate>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(
            "SELECT template_id, name, workflow, content_hash, lineage, created_at FROM templates \
             ORDER BY created_at, template_id",
        )?;
        let rows = stmt.query_map([], template_row)?;
        Ok(rows.collect::<Result<_, _>>()?)
    }
}

fn template_row(r: &rusqlite::Row<'_>) -> rusqlite::Result<StoredTemplate> {
    Ok(StoredTemplate {
        template_id: r.get(0)?,
        name: r.get(1)?,
        workflow_json: r.get(2)?,
        content_hash: r.get(3)?,
        lineage: r.get(4)?,
        created_at: r.get(5)?,
    })
}

/// A session id bound to its store.
#[derive(Clone)]
pub struct Session {
    pub id: String,
    pub store: Arc<SessionStore>,
}

impl Session {
    pub fn new(id: impl Into<String>, store: Arc<SessionStore>) -> Self {
        Session { id: id.into(), store }
    }

    pub fn in_memory(id: impl Into<String>) -> Result<Self, StoreError> {
        Ok(Session::new(id, Arc::new(SessionStore::in_memory()?)))
    }
}
