//! Append-only JSONL event log.
//!
//! Every state change is an event; the in-memory state is whatever replaying
//! the log produces. Appends are fsynced before the caller acknowledges.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use noncomp_core::study::QualityReport;
use noncomp_core::Response;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::state::SessionState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        study_id: String,
        participant_token: String,
        participant_slot: usize,
        ts: u64,
    },
    ResponseRecorded {
        session_id: String,
        response: Response,
    },
    SessionStateChanged {
        session_id: String,
        state: SessionState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gate: Option<QualityReport>,
        ts: u64,
    },
}

pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Open (or create) the log and return the events already in it.
    ///
    /// A final line without a newline is a write that never completed, so it
    /// was never acknowledged; it is cut off. Any other unparsable line is an
    /// error.
    pub fn open(path: &Path) -> Result<(EventLog, Vec<Event>), ServiceError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir, e))?;
        }
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(ServiceError::io(path, e)),
        };
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        let mut events = Vec::new();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(line).map_err(|e| ServiceError::CorruptLog {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(event);
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ServiceError::io(path, e))?;
        if complete < text.len() {
            log::warn!(
                "{}: dropping {} bytes of an incomplete final event",
                path.display(),
                text.len() - complete
            );
            file.set_len(complete as u64).map_err(|e| ServiceError::io(path, e))?;
        }
        Ok((
            EventLog {
                path: path.to_path_buf(),
                file,
            },
            events,
        ))
    }

    pub fn append(&mut self, events: &[Event]) -> Result<(), ServiceError> {
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).map_err(|e| ServiceError::Study(e.to_string()))?;
            buf.push(b'\n');
        }
        self.file
            .write_all(&buf)
            .and_then(|()| self.file.sync_data())
            .map_err(|e| ServiceError::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn created(id: &str) -> Event {
        Event::SessionCreated {
            session_id: id.into(),
            study_id: "study1".into(),
            participant_token: format!("tok-{id}"),
            participant_slot: 0,
            ts: 1,
        }
    }

    #[test]
    fn round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log/events.jsonl");
        {
            let (mut log, events) = EventLog::open(&path).unwrap();
            assert!(events.is_empty());
            log.append(&[created("a"), created("b")]).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"event":"session_cr"#).unwrap();
        drop(f);

        let (mut log, events) = EventLog::open(&path).unwrap();
        assert_eq!(events, vec![created("a"), created("b")]);
        log.append(&[created("c")]).unwrap();
        let (_, events) = EventLog::open(&path).unwrap();
        assert_eq!(events.len(), 3);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        fs::write(&path, "not json\n").unwrap();
        assert!(matches!(EventLog::open(&path), Err(ServiceError::CorruptLog { line: 1, .. })));
    }
}
