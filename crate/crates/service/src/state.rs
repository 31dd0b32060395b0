//! Studies, sessions and the event-sourced registry behind the endpoints.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use noncomp_core::study::{
    quality_gate, responses_to_jsonl, BatchFile, BatchItem, GateThresholds, PracticeSet, QualityReport, MAX_LABEL,
};
use noncomp_core::Response;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::eventlog::{Event, EventLog};

/// One study as served: practice questions plus one batch per participant slot.
#[derive(Debug, Clone)]
pub struct Study {
    pub study_id: String,
    pub practice: PracticeSet,
    /// Indexed by participant slot.
    pub batches: Vec<Vec<BatchItem>>,
}

impl Study {
    pub fn new(file: BatchFile, practice: PracticeSet) -> Result<Study, ServiceError> {
        if !practice.study_id.is_empty() && practice.study_id != file.study_id {
            return Err(ServiceError::Study(format!(
                "practice set belongs to {:?}, batches to {:?}",
                practice.study_id, file.study_id
            )));
        }
        let n = file.batches.len();
        let mut batches: Vec<Option<Vec<BatchItem>>> = vec![None; n];
        for b in file.batches {
            let slot = b.participant_slot;
            match batches.get_mut(slot) {
                Some(cell @ None) => *cell = Some(b.items),
                Some(Some(_)) => return Err(ServiceError::Study(format!("{}: slot {slot} appears twice", file.study_id))),
                None => {
                    return Err(ServiceError::Study(format!(
                        "{}: slot {slot} out of range for {n} batches",
                        file.study_id
                    )))
                }
            }
        }
        Ok(Study {
            study_id: file.study_id,
            practice,
            batches: batches.into_iter().map(Option::unwrap_or_default).collect(),
        })
    }

    fn practice_item(&self, i: usize) -> Option<BatchItem> {
        self.practice.items.get(i).map(|p| BatchItem {
            item_id: p.item_id.clone(),
            segments: vec![p.text.clone()],
            allow_flag: false,
        })
    }
}

/// Load every `<name>.batches.json` in `dir` together with its `<name>.practice.json`.
pub fn load_study_dir(dir: &Path) -> Result<BTreeMap<String, Study>, ServiceError> {
    let mut studies = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| ServiceError::io(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .filter_map(|n| n.strip_suffix(".batches.json").map(str::to_string))
        .collect();
    names.sort();
    for name in names {
        let read = |suffix: &str| -> Result<String, ServiceError> {
            let p = dir.join(format!("{name}.{suffix}"));
            fs::read_to_string(&p).map_err(|e| ServiceError::io(p, e))
        };
        let file: BatchFile =
            serde_json::from_str(&read("batches.json")?).map_err(|e| ServiceError::Study(format!("{name}: {e}")))?;
        let practice: PracticeSet =
            serde_json::from_str(&read("practice.json")?).map_err(|e| ServiceError::Study(format!("{name}: {e}")))?;
        let study = Study::new(file, practice)?;
        if studies.contains_key(&study.study_id) {
            return Err(ServiceError::Study(format!("study {:?} defined twice", study.study_id)));
        }
        studies.insert(study.study_id.clone(), study);
    }
    Ok(studies)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Practice,
    Annotating,
    Done,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub session_id: String,
    pub study_id: String,
    pub participant_token: String,
    pub participant_slot: usize,
    pub state: SessionState,
    /// Next batch item.
    pub cursor: usize,
    pub practice_responses: Vec<(String, u8)>,
    pub gate: Option<QualityReport>,
}

/// State rebuilt from events. `apply` is the only mutator.
#[derive(Debug, Default, PartialEq)]
pub struct Registry {
    sessions: HashMap<String, Session>,
    by_token: HashMap<(String, String), String>,
    slots: HashMap<String, BTreeMap<usize, String>>,
    responses: HashMap<String, Vec<Response>>,
}

impl Registry {
    pub fn apply(&mut self, event: &Event) -> Result<(), ServiceError> {
        let bad = |m: String| ServiceError::Study(format!("replay: {m}"));
        match event {
            Event::SessionCreated {
                session_id,
                study_id,
                participant_token,
                participant_slot,
                ..
            } => {
                let slots = self.slots.entry(study_id.clone()).or_default();
                if let Some(other) = slots.get(participant_slot) {
                    return Err(bad(format!("slot {participant_slot} of {study_id} already held by {other}")));
                }
                slots.insert(*participant_slot, session_id.clone());
                self.by_token
                    .insert((study_id.clone(), participant_token.clone()), session_id.clone());
                self.sessions.insert(
                    session_id.clone(),
                    Session {
                        session_id: session_id.clone(),
                        study_id: study_id.clone(),
                        participant_token: participant_token.clone(),
                        participant_slot: *participant_slot,
                        state: SessionState::Practice,
                        cursor: 0,
                        practice_responses: Vec::new(),
                        gate: None,
                    },
                );
            }
            Event::ResponseRecorded { session_id, response } => {
                let s = self
                    .sessions
                    .get_mut(session_id)
                    .ok_or_else(|| bad(format!("response for unknown session {session_id}")))?;
                match s.state {
                    SessionState::Practice => s.practice_responses.push((response.item_id.clone(), response.label)),
                    SessionState::Annotating => s.cursor += 1,
                    other => return Err(bad(format!("response for session {session_id} in state {other:?}"))),
                }
                self.responses.entry(s.study_id.clone()).or_default().push(response.clone());
            }
            Event::SessionStateChanged {
                session_id, state, gate, ..
            } => {
                let s = self
                    .sessions
                    .get_mut(session_id)
                    .ok_or_else(|| bad(format!("state change for unknown session {session_id}")))?;
                let allowed = matches!(
                    (s.state, state),
                    (SessionState::Practice, SessionState::Annotating | SessionState::Rejected)
                        | (SessionState::Annotating, SessionState::Done)
                );
                if !allowed {
                    return Err(bad(format!("session {session_id}: {:?} -> {state:?}", s.state)));
                }
                s.state = *state;
                if gate.is_some() {
                    s.gate = gate.clone();
                }
            }
        }
        Ok(())
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn responses(&self, study_id: &str) -> &[Response] {
        self.responses.get(study_id).map_or(&[], Vec::as_slice)
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// The reference label of a practice item, shown after the participant answers it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feedback {
    pub item_id: String,
    pub text: String,
    pub your_label: u8,
    pub reference: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Next {
    Practice {
        item: BatchItem,
        position: usize,
        total: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        feedback: Option<Feedback>,
    },
    Item {
        item: BatchItem,
        position: usize,
        total: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        feedback: Option<Feedback>,
    },
    Done {
        completed: usize,
    },
    Rejected {
        report: Option<QualityReport>,
        #[serde(skip_serializing_if = "Option::is_none")]
        feedback: Option<Feedback>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub participant_slot: usize,
    pub practice_count: usize,
    pub batch_size: usize,
    pub state: SessionState,
    pub resumed: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub item_id: String,
    pub label: i64,
    #[serde(default)]
    pub ungrammatical: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ack {
    pub item_id: String,
    pub state: SessionState,
    /// Items answered so far in the current phase.
    pub answered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotProgress {
    pub participant_slot: usize,
    pub state: Option<SessionState>,
    pub practice_answered: usize,
    pub completed: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyProgress {
    pub study_id: String,
    pub sessions: usize,
    pub done: usize,
    pub rejected: usize,
    pub responses: usize,
    pub slots: Vec<SlotProgress>,
}

struct Inner {
    log: EventLog,
    registry: Registry,
}

impl Inner {
    fn commit(&mut self, events: &[Event]) -> Result<(), ServiceError> {
        self.log.append(events)?;
        for e in events {
            self.registry.apply(e)?;
        }
        Ok(())
    }

    /// Apply any state change a session is due, e.g. the gate after its last
    /// practice answer.
    fn settle(&mut self, study: &Study, session_id: &str, thresholds: GateThresholds) -> Result<(), ServiceError> {
        loop {
            let s = &self.registry.sessions[session_id];
            let change = match s.state {
                SessionState::Practice if s.practice_responses.len() >= study.practice.items.len() => {
                    if s.practice_responses.len() < 2 {
                        Some((SessionState::Annotating, None))
                    } else {
                        let refs = study
                            .practice
                            .items
                            .iter()
                            .map(|p| (p.item_id.clone(), p.reference))
                            .collect();
                        let report = quality_gate(&s.participant_token, &s.practice_responses, &refs, thresholds)?;
                        let to = if report.pass {
                            SessionState::Annotating
                        } else {
                            SessionState::Rejected
                        };
                        Some((to, Some(report)))
                    }
                }
                SessionState::Annotating if s.cursor >= study.batches[s.participant_slot].len() => {
                    Some((SessionState::Done, None))
                }
                _ => None,
            };
            let Some((state, gate)) = change else {
                return Ok(());
            };
            self.commit(&[Event::SessionStateChanged {
                session_id: session_id.to_string(),
                state,
                gate,
                ts: now_ms(),
            }])?;
        }
    }
}

/// Study data is immutable and read without locking; every write goes through
/// the single mutex-guarded appender.
pub struct Service {
    studies: BTreeMap<String, Study>,
    thresholds: GateThresholds,
    inner: Mutex<Inner>,
}

impl Service {
    /// Replay the log at `log_path`, then settle any session whose last
    /// transition was not written before a crash.
    pub fn open(
        studies: BTreeMap<String, Study>,
        log_path: &Path,
        thresholds: GateThresholds,
    ) -> Result<Service, ServiceError> {
        let (log, events) = EventLog::open(log_path)?;
        let mut registry = Registry::default();
        for e in &events {
            registry.apply(e)?;
        }
        for (sid, slots) in &registry.slots {
            let study = studies
                .get(sid)
                .ok_or_else(|| ServiceError::Study(format!("event log refers to study {sid:?}, which is not loaded")))?;
            if let Some(slot) = slots.keys().find(|&&s| s >= study.batches.len()) {
                return Err(ServiceError::Study(format!("event log uses slot {slot} of {sid}, which does not exist")));
            }
        }
        log::info!("replayed {} events from {}", events.len(), log.path().display());
        let mut inner = Inner { log, registry };
        let mut ids: Vec<String> = inner.registry.sessions.keys().cloned().collect();
        ids.sort();
        for id in ids {
            let study = &studies[&inner.registry.sessions[&id].study_id];
            inner.settle(study, &id, thresholds)?;
        }
        Ok(Service {
            studies,
            thresholds,
            inner: Mutex::new(inner),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // A panic mid-commit leaves the registry matching the log prefix it applied.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn study(&self, study_id: &str) -> Result<&Study, ServiceError> {
        self.studies
            .get(study_id)
            .ok_or_else(|| ServiceError::UnknownStudy(study_id.to_string()))
    }

    pub fn studies(&self) -> impl Iterator<Item = &Study> {
        self.studies.values()
    }

    pub fn create_session(&self, study_id: &str, token: &str) -> Result<SessionInfo, ServiceError> {
        let study = self.study(study_id)?;
        if token.trim().is_empty() {
            return Err(ServiceError::Unprocessable("participant_token must not be empty".into()));
        }
        let mut inner = self.lock();
        let key = (study_id.to_string(), token.to_string());
        let (session_id, resumed) = match inner.registry.by_token.get(&key) {
            Some(id) => (id.clone(), true),
            None => {
                let taken = inner.registry.slots.get(study_id);
                let slot = (0..study.batches.len())
                    .find(|s| taken.map_or(true, |t| !t.contains_key(s)))
                    .ok_or_else(|| ServiceError::NoSlots(study_id.to_string()))?;
                let session_id = uuid::Uuid::new_v4().simple().to_string();
                inner.commit(&[Event::SessionCreated {
                    session_id: session_id.clone(),
                    study_id: study_id.to_string(),
                    participant_token: token.to_string(),
                    participant_slot: slot,
                    ts: now_ms(),
                }])?;
                inner.settle(study, &session_id, self.thresholds)?;
                (session_id, false)
            }
        };
        let s = &inner.registry.sessions[&session_id];
        Ok(SessionInfo {
            session_id,
            participant_slot: s.participant_slot,
            practice_count: study.practice.items.len(),
            batch_size: study.batches[s.participant_slot].len(),
            state: s.state,
            resumed,
        })
    }

    fn feedback(study: &Study, s: &Session) -> Option<Feedback> {
        let (item_id, label) = s.practice_responses.last()?;
        let p = study.practice.items.iter().find(|p| &p.item_id == item_id)?;
        Some(Feedback {
            item_id: item_id.clone(),
            text: p.text.clone(),
            your_label: *label,
            reference: p.reference,
        })
    }

    pub fn next(&self, session_id: &str) -> Result<Next, ServiceError> {
        let inner = self.lock();
        let s = inner
            .registry
            .session(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))?;
        let study = self.study(&s.study_id)?;
        let batch = &study.batches[s.participant_slot];
        Ok(match s.state {
            SessionState::Practice => {
                let i = s.practice_responses.len();
                Next::Practice {
                    item: study
                        .practice_item(i)
                        .ok_or_else(|| ServiceError::Study(format!("session {session_id} has no practice item {i}")))?,
                    position: i + 1,
                    total: study.practice.items.len(),
                    feedback: Self::feedback(study, s),
                }
            }
            SessionState::Annotating => Next::Item {
                item: batch[s.cursor].clone(),
                position: s.cursor + 1,
                total: batch.len(),
                feedback: if s.cursor == 0 { Self::feedback(study, s) } else { None },
            },
            SessionState::Done => Next::Done { completed: s.cursor },
            SessionState::Rejected => Next::Rejected {
                report: s.gate.clone(),
                feedback: Self::feedback(study, s),
            },
        })
    }

    pub fn submit(&self, session_id: &str, sub: Submission) -> Result<Ack, ServiceError> {
        let mut inner = self.lock();
        let s = inner
            .registry
            .session(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))?;
        let study = self.study(&s.study_id)?;
        let current = match s.state {
            SessionState::Practice => study.practice_item(s.practice_responses.len()),
            SessionState::Annotating => study.batches[s.participant_slot].get(s.cursor).cloned(),
            SessionState::Done | SessionState::Rejected => None,
        }
        .ok_or_else(|| ServiceError::Conflict(format!("session {session_id} is {:?}; nothing to answer", s.state)))?;
        if sub.item_id != current.item_id {
            return Err(ServiceError::Conflict(format!(
                "expected a response for {}, got {}",
                current.item_id, sub.item_id
            )));
        }
        let label = u8::try_from(sub.label)
            .ok()
            .filter(|&l| l <= MAX_LABEL)
            .ok_or_else(|| ServiceError::Unprocessable(format!("label {} is outside 0..={MAX_LABEL}", sub.label)))?;
        let ungrammatical = sub.ungrammatical.unwrap_or(false);
        if ungrammatical && !current.allow_flag {
            return Err(ServiceError::Unprocessable(format!(
                "item {} does not accept an ungrammaticality flag",
                current.item_id
            )));
        }
        let response = Response {
            participant_id: s.participant_token.clone(),
            item_id: current.item_id.clone(),
            label,
            ungrammatical,
            ts: now_ms(),
        };
        inner.commit(&[Event::ResponseRecorded {
            session_id: session_id.to_string(),
            response,
        }])?;
        inner.settle(study, session_id, self.thresholds)?;
        let s = &inner.registry.sessions[session_id];
        Ok(Ack {
            item_id: current.item_id,
            state: s.state,
            answered: match s.state {
                SessionState::Practice => s.practice_responses.len(),
                _ => s.cursor,
            },
        })
    }

    /// All responses of a study, practice included, in log order.
    pub fn export(&self, study_id: &str) -> Result<String, ServiceError> {
        self.study(study_id)?;
        Ok(responses_to_jsonl(self.lock().registry.responses(study_id)))
    }

    pub fn progress(&self, study_id: Option<&str>) -> Result<Vec<StudyProgress>, ServiceError> {
        let studies: Vec<&Study> = match study_id {
            Some(id) => vec![self.study(id)?],
            None => self.studies.values().collect(),
        };
        let inner = self.lock();
        Ok(studies
            .into_iter()
            .map(|study| {
                let held = inner.registry.slots.get(&study.study_id);
                let slots: Vec<SlotProgress> = study
                    .batches
                    .iter()
                    .enumerate()
                    .map(|(slot, batch)| {
                        let s = held.and_then(|h| h.get(&slot)).map(|id| &inner.registry.sessions[id]);
                        SlotProgress {
                            participant_slot: slot,
                            state: s.map(|s| s.state),
                            practice_answered: s.map_or(0, |s| s.practice_responses.len()),
                            completed: s.map_or(0, |s| s.cursor),
                            batch_size: batch.len(),
                        }
                    })
                    .collect();
                let count = |st| slots.iter().filter(|p| p.state == Some(st)).count();
                StudyProgress {
                    study_id: study.study_id.clone(),
                    sessions: slots.iter().filter(|p| p.state.is_some()).count(),
                    done: count(SessionState::Done),
                    rejected: count(SessionState::Rejected),
                    responses: inner.registry.responses(&study.study_id).len(),
                    slots,
                }
            })
            .collect())
    }

    /// Registry rebuilt from the log file alone, for checking replay.
    pub fn replayed_matches_live(&self) -> Result<bool, ServiceError> {
        let inner = self.lock();
        let (_, events) = EventLog::open(inner.log.path())?;
        let mut fresh = Registry::default();
        for e in &events {
            fresh.apply(e)?;
        }
        Ok(fresh == inner.registry)
    }
}
