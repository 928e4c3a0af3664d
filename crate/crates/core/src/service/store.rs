use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use super::{ServiceError, Session};

/// Sessions kept in memory and, when a spool directory is configured,
/// mirrored to one pretty-printed JSON file per session.
///
/// Each session sits behind its own mutex, so operations on one session are
/// serialized while different sessions proceed independently.
#[derive(Debug, Default)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

fn storage(path: &Path, err: impl std::fmt::Display) -> ServiceError {
    ServiceError::StorageUnavailable(format!("{}: {err}", path.display()))
}

pub(crate) fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl SessionStore {
    /// Store without persistence, for offline runs and tests.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a spool directory and reloads every session
    /// file in it. Unreadable session files are skipped with a warning.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
        let mut sessions = HashMap::new();
        let entries = std::fs::read_dir(&dir).map_err(|e| storage(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| storage(&dir, e))?.path();
            if path.extension().is_none_or(|ext| ext != "json") {
                continue;
            }
            let parsed = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|text| serde_json::from_str::<Session>(&text).map_err(|e| e.to_string()));
            match parsed {
                Ok(session) => {
                    sessions.insert(session.session_id.clone(), Arc::new(Mutex::new(session)));
                }
                Err(e) => log::warn!("skipping unreadable session file {}: {e}", path.display()),
            }
        }
        log::info!("loaded {} sessions from {}", sessions.len(), dir.display());
        Ok(Self { dir: Some(dir), sessions: RwLock::new(sessions) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, session: Session) -> Result<(), ServiceError> {
        self.persist(&session)?;
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(session.session_id.clone(), Arc::new(Mutex::new(session)));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn snapshot(&self, id: &str) -> Result<Session, ServiceError> {
        let cell = self.get(id)?;
        let session = lock(&cell).clone();
        Ok(session)
    }

    /// Runs `f` on a copy of the session under its lock; the copy replaces the
    /// stored session only if `f` succeeds and the result is persisted.
    pub fn update<R>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<R, ServiceError>,
    ) -> Result<R, ServiceError> {
        let cell = self.get(id)?;
        let mut guard = lock(&cell);
        let mut next = guard.clone();
        let out = f(&mut next)?;
        if next != *guard {
            self.persist(&next)?;
            *guard = next;
        }
        Ok(out)
    }

    fn persist(&self, session: &Session) -> Result<(), ServiceError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let target = dir.join(format!("{}.json", session.session_id));
        let text = serde_json::to_string_pretty(session).map_err(|e| storage(&target, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| storage(dir, e))?;
        tmp.write_all(text.as_bytes()).map_err(|e| storage(&target, e))?;
        tmp.as_file().sync_all().map_err(|e| storage(&target, e))?;
        tmp.persist(&target).map_err(|e| storage(&target, e.error))?;
        Ok(())
    }
}
