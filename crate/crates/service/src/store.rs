//! Append-only session persistence.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use warmline_core::dialogue::{SelectionHistory, TranscriptEvent};
use warmline_core::{Engine, Error, Result, Session, SessionState};

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Created {
        id: String,
        engine: Engine,
        seed: u64,
        created_at: String,
    },
    Event(TranscriptEvent),
    /// Mutable session fields after an exchange.
    Snapshot {
        state: SessionState,
        flagged: bool,
        replies: u64,
        disclaimer_shown: bool,
        history: SelectionHistory,
    },
}

fn records_after(session: &Session, from_event: usize) -> Vec<LogRecord> {
    let mut out: Vec<LogRecord> = session.transcript[from_event..]
        .iter()
        .cloned()
        .map(LogRecord::Event)
        .collect();
    out.push(LogRecord::Snapshot {
        state: session.state,
        flagged: session.flagged,
        replies: session.replies,
        disclaimer_shown: session.disclaimer_shown,
        history: session.history.clone(),
    });
    out
}

/// Rebuilds a session from its log. A torn final line is skipped.
pub fn replay(records: impl IntoIterator<Item = LogRecord>) -> Result<Session> {
    let mut session: Option<Session> = None;
    for r in records {
        match (r, session.as_mut()) {
            (LogRecord::Created { id, engine, seed, created_at }, None) => {
                session = Some(Session::new(id, engine, seed, created_at));
            }
            (LogRecord::Event(e), Some(s)) => {
                if e.seq != s.transcript.len() {
                    return Err(Error::InvalidInput(format!("event {} out of order in log of {}", e.seq, s.id)));
                }
                s.transcript.push(e);
            }
            (
                LogRecord::Snapshot {
                    state,
                    flagged,
                    replies,
                    disclaimer_shown,
                    history,
                },
                Some(s),
            ) => {
                s.state = state;
                s.flagged = flagged;
                s.replies = replies;
                s.disclaimer_shown = disclaimer_shown;
                s.history = history;
            }
            (r, _) => return Err(Error::InvalidInput(format!("unexpected log record {r:?}"))),
        }
    }
    session.ok_or_else(|| Error::InvalidInput("empty session log".into()))
}

pub trait SessionStore: Send + Sync {
    fn create(&self, session: &Session) -> Result<()>;

    /// Persists events `from_event..` and the current session fields.
    fn append(&self, session: &Session, from_event: usize) -> Result<()>;

    fn load(&self, id: &str) -> Result<Option<Session>>;
}

/// Keeps logs in memory; for tests and throwaway servers.
#[derive(Debug, Default)]
pub struct MemoryStore {
    logs: Mutex<HashMap<String, Vec<LogRecord>>>,
}

impl SessionStore for MemoryStore {
    fn create(&self, session: &Session) -> Result<()> {
        let mut logs = self.logs.lock().expect("store lock");
        let mut log = vec![LogRecord::Created {
            id: session.id.clone(),
            engine: session.engine,
            seed: session.seed,
            created_at: session.created_at.clone(),
        }];
        log.extend(records_after(session, 0));
        logs.insert(session.id.clone(), log);
        Ok(())
    }

    fn append(&self, session: &Session, from_event: usize) -> Result<()> {
        let mut logs = self.logs.lock().expect("store lock");
        let log = logs
            .get_mut(&session.id)
            .ok_or_else(|| Error::InvalidInput(format!("no log for session {}", session.id)))?;
        log.extend(records_after(session, from_event));
        Ok(())
    }

    fn load(&self, id: &str) -> Result<Option<Session>> {
        let logs = self.logs.lock().expect("store lock");
        logs.get(id).map(|l| replay(l.iter().cloned())).transpose()
    }
}

/// One `<id>.jsonl` file per session under a directory. Every write is
/// flushed and synced before the request returns.
#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::InvalidInput(format!("malformed session id `{id}`")));
        }
        Ok(self.dir.join(format!("{id}.jsonl")))
    }

    fn write(&self, file: &mut File, records: &[LogRecord]) -> Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        file.write_all(&buf)?;
        file.sync_data()?;
        Ok(())
    }
}

impl SessionStore for FileStore {
    fn create(&self, session: &Session) -> Result<()> {
        let mut file = OpenOptions::new().create_new(true).append(true).open(self.path(&session.id)?)?;
        let mut records = vec![LogRecord::Created {
            id: session.id.clone(),
            engine: session.engine,
            seed: session.seed,
            created_at: session.created_at.clone(),
        }];
        records.extend(records_after(session, 0));
        self.write(&mut file, &records)
    }

    fn append(&self, session: &Session, from_event: usize) -> Result<()> {
        let mut file = OpenOptions::new().append(true).open(self.path(&session.id)?)?;
        self.write(&mut file, &records_after(session, from_event))
    }

    fn load(&self, id: &str) -> Result<Option<Session>> {
        let path = match self.path(id) {
            Ok(p) => p,
            Err(_) => return Ok(None),
        };
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
        let mut records = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            match serde_json::from_str::<LogRecord>(line) {
                Ok(r) => records.push(r),
                Err(e) if i + 1 == lines.len() => {
                    tracing::warn!(session = id, error = %e, "ignoring torn final log line");
                }
                Err(e) => return Err(e.into()),
            }
        }
        replay(records).map(Some)
    }
}
