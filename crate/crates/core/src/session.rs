//! Pseudonymous students, resumable exam attempts and immutable submissions.
//!
//! A student is known only by a salted digest of their normalized email. An
//! attempt is a [`SessionState`] document whose store version doubles as the
//! optimistic-concurrency token: every accepted write bumps it by exactly one,
//! and a writer holding a stale version is turned away with
//! [`SessionError::VersionConflict`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::corpus::{Corpus, CorpusError, Exam, Question, QuestionKind};
use crate::store::{DocumentStore, Expect, JsonStore, StoreError};

pub(crate) const SESSIONS: &str = "sessions";
pub(crate) const ACTIVE: &str = "active_sessions";
pub(crate) const SUBMISSIONS: &str = "submissions";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentKey(String);

impl StudentKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Accepts only the 64-char lowercase hex form produced by [`identify`].
    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 64
            && s.bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
        .then(|| StudentKey(s.to_string()))
    }
}

impl fmt::Display for StudentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn normalize_email(email: &str) -> Option<String> {
    let email = email.trim().to_lowercase();
    let (local, domain) = email.split_once('@')?;
    let ok = !local.is_empty()
        && !domain.is_empty()
        && !domain.contains('@')
        && !email.chars().any(char::is_whitespace);
    ok.then_some(email)
}

/// Salted SHA-256 of the trimmed, lowercased address. Nothing is stored.
pub fn identify(email: &str, salt: &[u8]) -> Result<StudentKey, SessionError> {
    let normalized = normalize_email(email).ok_or(SessionError::InvalidEmail)?;
    let mut h = Sha256::new();
    h.update(b"student-key/v1\0");
    h.update((salt.len() as u64).to_be_bytes());
    h.update(salt);
    h.update(normalized.as_bytes());
    Ok(StudentKey(hex::encode(h.finalize())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    InProgress,
    Submitted,
    Evaluated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnswerPayload {
    Choice { selected: BTreeSet<String> },
    Text { text: String },
}

impl AnswerPayload {
    pub fn is_blank(&self) -> bool {
        match self {
            AnswerPayload::Choice { selected } => selected.is_empty(),
            AnswerPayload::Text { text } => text.trim().is_empty(),
        }
    }

    /// Check the payload against the question it answers.
    pub fn check(&self, question: &Question) -> Result<(), SessionError> {
        let qid = &question.question_id;
        match (self, question.kind) {
            (AnswerPayload::Choice { selected }, kind) if kind.is_choice() => {
                let labels = question.option_labels();
                if let Some(bad) = selected.iter().find(|s| !labels.contains(s.as_str())) {
                    return Err(SessionError::InvalidAnswer(format!(
                        "{bad:?} is not an option of question {qid}"
                    )));
                }
                if kind == QuestionKind::SingleChoice && selected.len() > 1 {
                    return Err(SessionError::InvalidAnswer(format!(
                        "question {qid} accepts a single option"
                    )));
                }
                Ok(())
            }
            (AnswerPayload::Text { .. }, QuestionKind::OpenText) => Ok(()),
            _ => Err(SessionError::InvalidAnswer(format!(
                "answer type does not match question {qid}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedAnswer {
    #[serde(flatten)]
    pub payload: AnswerPayload,
    pub answered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub student_key: StudentKey,
    pub exam_id: String,
    pub status: SessionStatus,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<DateTime<Utc>>,
    pub answers: BTreeMap<String, RecordedAnswer>,
    pub version: u64,
}

impl SessionState {
    /// Seconds spent so far, or until submission. The time limit is advisory
    /// and never enforced, so this can exceed it.
    pub fn elapsed_seconds(&self, now: DateTime<Utc>) -> i64 {
        let end = self.submitted_at.unwrap_or(now);
        (end - self.started_at).num_seconds().max(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub submission_id: String,
    pub session_id: String,
    pub student_key: StudentKey,
    pub exam_id: String,
    pub question_id: String,
    /// `None` for an unanswered question.
    pub answer: Option<RecordedAnswer>,
    /// Explicit omission marker; graders score these as 0.
    pub empty: bool,
    pub created_at: DateTime<Utc>,
}

impl Submission {
    pub fn payload(&self) -> Option<&AnswerPayload> {
        self.answer.as_ref().map(|a| &a.payload)
    }
}

/// Stable per (session, question), so submitting is naturally idempotent.
pub fn submission_id(session_id: &str, question_id: &str) -> String {
    let mut h = Sha256::new();
    h.update(session_id.as_bytes());
    h.update([0]);
    h.update(question_id.as_bytes());
    format!("sub-{}", &hex::encode(h.finalize())[..24])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ActivePointer {
    session_id: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid email address")]
    InvalidEmail,
    #[error("{0} not found")]
    NotFound(String),
    #[error("stale version: session is at version {current}")]
    VersionConflict { current: u64 },
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
    #[error("session {0} has not been submitted")]
    NotSubmitted(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone)]
pub struct Sessions {
    store: Arc<dyn DocumentStore>,
    corpus: Corpus,
    clock: Arc<dyn Clock>,
}

fn active_key(student: &StudentKey, exam_id: &str) -> String {
    format!("{}~{}", student.as_str(), exam_id)
}

impl Sessions {
    pub fn new(store: Arc<dyn DocumentStore>, corpus: Corpus, clock: Arc<dyn Clock>) -> Self {
        Self {
            store,
            corpus,
            clock,
        }
    }

    pub fn get(&self, session_id: &str) -> Result<SessionState, SessionError> {
        self.load(session_id)?
            .ok_or_else(|| SessionError::NotFound(format!("session {session_id}")))
    }

    fn load(&self, session_id: &str) -> Result<Option<SessionState>, SessionError> {
        Ok(self
            .store
            .get_json::<SessionState>(SESSIONS, session_id)?
            .map(|(v, mut s)| {
                s.version = v;
                s
            }))
    }

    fn write(&self, state: &SessionState, expect: Expect) -> Result<u64, StoreError> {
        self.store
            .put_json(SESSIONS, &state.session_id, state, expect)
    }

    fn fresh_session(
        &self,
        session_id: String,
        student: &StudentKey,
        exam_id: &str,
    ) -> SessionState {
        SessionState {
            session_id,
            student_key: student.clone(),
            exam_id: exam_id.to_string(),
            status: SessionStatus::InProgress,
            started_at: self.clock.now(),
            submitted_at: None,
            answers: BTreeMap::new(),
            version: 1,
        }
    }

    /// Return the student's open attempt at this exam, or open a new one.
    pub fn start_or_resume(
        &self,
        student: &StudentKey,
        exam_id: &str,
    ) -> Result<SessionState, SessionError> {
        self.corpus.get_exam(exam_id)?;
        let key = active_key(student, exam_id);
        loop {
            match self.store.get_json::<ActivePointer>(ACTIVE, &key)? {
                Some((pv, ptr)) => match self.load(&ptr.session_id)? {
                    Some(s) if s.status == SessionStatus::InProgress => return Ok(s),
                    Some(_) => {
                        // Closed attempt whose pointer outlived it.
                        match self.store.delete(ACTIVE, &key, Expect::Version(pv)) {
                            Ok(()) => {}
                            Err(e) if e.is_conflict() => {}
                            Err(e) => return Err(e.into()),
                        }
                    }
                    None => {
                        // Pointer claimed but session document not yet written.
                        let s = self.fresh_session(ptr.session_id, student, exam_id);
                        match self.write(&s, Expect::Absent) {
                            Ok(_) => return Ok(s),
                            Err(e) if e.is_conflict() => {}
                            Err(e) => return Err(e.into()),
                        }
                    }
                },
                None => {
                    let session_id = format!("ses-{}", uuid::Uuid::new_v4().simple());
                    let ptr = ActivePointer {
                        session_id: session_id.clone(),
                    };
                    match self.store.put_json(ACTIVE, &key, &ptr, Expect::Absent) {
                        Ok(_) => {}
                        Err(e) if e.is_conflict() => continue,
                        Err(e) => return Err(e.into()),
                    }
                    let s = self.fresh_session(session_id, student, exam_id);
                    match self.write(&s, Expect::Absent) {
                        Ok(_) => return Ok(s),
                        Err(e) if e.is_conflict() => {}
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
    }

    pub fn record_answer(
        &self,
        session_id: &str,
        question_id: &str,
        payload: AnswerPayload,
        expected_version: u64,
    ) -> Result<SessionState, SessionError> {
        let mut state = self.get(session_id)?;
        if state.status != SessionStatus::InProgress {
            return Err(SessionError::SessionClosed(session_id.to_string()));
        }
        if state.version != expected_version {
            return Err(SessionError::VersionConflict {
                current: state.version,
            });
        }
        let exam = self.corpus.get_exam(&state.exam_id)?;
        let question = exam
            .question(question_id)
            .ok_or_else(|| SessionError::NotFound(format!("question {question_id}")))?;
        payload.check(question)?;

        state.answers.insert(
            question_id.to_string(),
            RecordedAnswer {
                payload,
                answered_at: self.clock.now(),
            },
        );
        state.version = expected_version + 1;
        match self.write(&state, Expect::Version(expected_version)) {
            Ok(v) => {
                debug_assert_eq!(v, state.version);
                Ok(state)
            }
            Err(e) if e.is_conflict() => {
                let current = self.get(session_id)?;
                if current.status != SessionStatus::InProgress {
                    Err(SessionError::SessionClosed(session_id.to_string()))
                } else {
                    Err(SessionError::VersionConflict {
                        current: current.version,
                    })
                }
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Close the attempt and write one immutable submission per question,
    /// answered or not, in exam order.
    pub fn submit(&self, session_id: &str) -> Result<Vec<Submission>, SessionError> {
        let state = loop {
            let mut state = self.get(session_id)?;
            if state.status != SessionStatus::InProgress {
                return Err(SessionError::SessionClosed(session_id.to_string()));
            }
            let expected = state.version;
            state.status = SessionStatus::Submitted;
            state.submitted_at = Some(self.clock.now());
            state.version = expected + 1;
            match self.write(&state, Expect::Version(expected)) {
                Ok(_) => break state,
                // An answer landed in between; submit what is there now.
                Err(e) if e.is_conflict() => continue,
                Err(e) => return Err(e.into()),
            }
        };

        let key = active_key(&state.student_key, &state.exam_id);
        if let Some((pv, ptr)) = self.store.get_json::<ActivePointer>(ACTIVE, &key)? {
            if ptr.session_id == state.session_id {
                match self.store.delete(ACTIVE, &key, Expect::Version(pv)) {
                    Ok(()) => {}
                    Err(e) if e.is_conflict() => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }

        let exam = self.corpus.get_exam(&state.exam_id)?;
        self.materialize(&state, &exam)
    }

    fn materialize(
        &self,
        state: &SessionState,
        exam: &Exam,
    ) -> Result<Vec<Submission>, SessionError> {
        let created_at = state.submitted_at.unwrap_or(state.started_at);
        let mut out = Vec::new();
        for (_, q) in exam.questions() {
            let answer = state.answers.get(&q.question_id).cloned();
            let sub = Submission {
                submission_id: submission_id(&state.session_id, &q.question_id),
                session_id: state.session_id.clone(),
                student_key: state.student_key.clone(),
                exam_id: state.exam_id.clone(),
                question_id: q.question_id.clone(),
                empty: answer.is_none(),
                answer,
                created_at,
            };
            match self
                .store
                .put_json(SUBMISSIONS, &sub.submission_id, &sub, Expect::Absent)
            {
                Ok(_) => {}
                // Written by an earlier, interrupted submit from the same frozen state.
                Err(e) if e.is_conflict() => {}
                Err(e) => return Err(e.into()),
            }
            out.push(sub);
        }
        Ok(out)
    }

    /// Submissions of a closed attempt, in exam order. Re-creates any that
    /// an interrupted submit did not get to write.
    pub fn submissions_for(&self, session_id: &str) -> Result<Vec<Submission>, SessionError> {
        let state = self.get(session_id)?;
        if state.status == SessionStatus::InProgress {
            return Ok(Vec::new());
        }
        let exam = self.corpus.get_exam(&state.exam_id)?;
        let mut out = Vec::new();
        let mut missing = false;
        for (_, q) in exam.questions() {
            let id = submission_id(session_id, &q.question_id);
            match self.get_submission(&id)? {
                Some(s) => out.push(s),
                None => missing = true,
            }
        }
        if missing {
            return self.materialize(&state, &exam);
        }
        Ok(out)
    }

    pub fn get_submission(&self, submission_id: &str) -> Result<Option<Submission>, SessionError> {
        Ok(self
            .store
            .get_json::<Submission>(SUBMISSIONS, submission_id)?
            .map(|(_, s)| s))
    }

    pub fn all_submissions(&self) -> Result<Vec<Submission>, SessionError> {
        Ok(self
            .store
            .list_json::<Submission>(SUBMISSIONS)?
            .into_iter()
            .map(|(_, _, s)| s)
            .collect())
    }

    /// submitted → evaluated. No-op if already evaluated.
    pub fn mark_evaluated(&self, session_id: &str) -> Result<SessionState, SessionError> {
        loop {
            let mut state = self.get(session_id)?;
            match state.status {
                SessionStatus::Evaluated => return Ok(state),
                SessionStatus::InProgress => {
                    return Err(SessionError::NotSubmitted(session_id.to_string()))
                }
                SessionStatus::Submitted => {}
            }
            let expected = state.version;
            state.status = SessionStatus::Evaluated;
            state.version = expected + 1;
            match self.write(&state, Expect::Version(expected)) {
                Ok(_) => return Ok(state),
                Err(e) if e.is_conflict() => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Write a submission restored from a dataset export. Identical existing
    /// records are accepted; different ones are a conflict.
    pub(crate) fn restore_submission(&self, sub: &Submission) -> Result<(), SessionError> {
        match self
            .store
            .put_json(SUBMISSIONS, &sub.submission_id, sub, Expect::Absent)
        {
            Ok(_) => Ok(()),
            Err(e) if e.is_conflict() => match self.get_submission(&sub.submission_id)? {
                Some(existing) if existing == *sub => Ok(()),
                _ => Err(e.into()),
            },
            Err(e) => Err(e.into()),
        }
    }
}
