//! Rubric assessment of submissions.
//!
//! Choice questions are scored deterministically. Open-text answers go
//! through a model: [`build_prompt`], one gateway call, [`parse_assessment`],
//! with a single retry when the output has no usable score block. A failed
//! model assessment is stored as pending; the submission itself is untouched.

mod parse;
mod prompt;
mod scoring;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::corpus::{Corpus, CorpusError, Exam, Question, SchemeItem};
use crate::gateway::{CompletionRecord, Gateway, GatewayError};
use crate::session::{SessionError, SessionStatus, Sessions, Submission};
use crate::store::{DocumentStore, Expect, JsonStore, StoreError};

pub use parse::{
    emit_score_block, find_score_block, parse_assessment, ScoreBlock, SCORE_CLOSE, SCORE_OPEN,
};
pub use prompt::{
    build_prompt, extract_blocks, prompt_hash, scheme_points, Language, PromptBlocks,
    PromptDocument, STRICT_INSTRUCTION_EN, STRICT_INSTRUCTION_RO,
};
pub use scoring::score_choice;

pub(crate) const ASSESSMENTS: &str = "assessments";

/// Shown next to every model-sourced assessment.
pub const EXPERIMENTAL_DISCLAIMER: &str = "This feedback was generated automatically by a language model. It is experimental, may be wrong, and is not an official grade.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownLine {
    pub label: String,
    pub awarded: u32,
    pub possible: u32,
}

/// Score, breakdown and explanation, before attribution to a source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub score: u32,
    pub breakdown: Vec<BreakdownLine>,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum AssessmentError {
    #[error("question {0}: question kind, scheme item and answer do not match")]
    KindMismatch(String),
    #[error("unparseable model output: {0}")]
    UnparseableOutput(String),
    #[error("assessment of {submission_id} unavailable: {reason}")]
    Unavailable {
        submission_id: String,
        reason: String,
    },
    #[error("{0} not found")]
    NotFound(String),
    #[error("session {0} has not been submitted")]
    NotSubmitted(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// `deterministic` or `model:<provider/model>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AssessmentSource {
    Deterministic,
    Model(String),
}

impl AssessmentSource {
    pub fn is_model(&self) -> bool {
        matches!(self, AssessmentSource::Model(_))
    }
}

impl std::fmt::Display for AssessmentSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AssessmentSource::Deterministic => f.write_str("deterministic"),
            AssessmentSource::Model(id) => write!(f, "model:{id}"),
        }
    }
}

impl std::str::FromStr for AssessmentSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(AssessmentSource::Deterministic),
            _ => match s.strip_prefix("model:") {
                Some(id) if !id.is_empty() => Ok(AssessmentSource::Model(id.to_string())),
                _ => Err(format!("unknown assessment source {s:?}")),
            },
        }
    }
}

impl Serialize for AssessmentSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AssessmentSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentResult {
    pub submission_id: String,
    pub question_id: String,
    pub source: AssessmentSource,
    pub score: u32,
    pub max_points: u32,
    pub breakdown: Vec<BreakdownLine>,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// True iff the source is a model.
    pub experimental: bool,
    /// Empty for deterministic results.
    pub raw_output: String,
    pub latency_ms: u64,
    /// False when no model was consulted (choice items, empty answers).
    pub model_called: bool,
    pub created_at: DateTime<Utc>,
}

impl AssessmentResult {
    fn deterministic(sub: &Submission, max_points: u32, a: Assessment, now: DateTime<Utc>) -> Self {
        Self {
            submission_id: sub.submission_id.clone(),
            question_id: sub.question_id.clone(),
            source: AssessmentSource::Deterministic,
            score: a.score,
            max_points,
            breakdown: a.breakdown,
            explanation: a.explanation,
            warnings: a.warnings,
            experimental: false,
            raw_output: String::new(),
            latency_ms: 0,
            model_called: false,
            created_at: now,
        }
    }
}

/// What the store holds per submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AssessmentRecord {
    Complete(AssessmentResult),
    Pending {
        submission_id: String,
        question_id: String,
        reason: String,
        attempts: u32,
        updated_at: DateTime<Utc>,
    },
}

impl AssessmentRecord {
    pub fn result(&self) -> Option<&AssessmentResult> {
        match self {
            AssessmentRecord::Complete(r) => Some(r),
            AssessmentRecord::Pending { .. } => None,
        }
    }
}

/// Zero on every criterion, used for omitted open answers.
pub fn empty_open_assessment(item: &SchemeItem) -> Assessment {
    let breakdown = match item {
        SchemeItem::OpenText { criteria } => criteria
            .iter()
            .map(|c| BreakdownLine {
                label: c.text.clone(),
                awarded: 0,
                possible: c.points,
            })
            .collect(),
        SchemeItem::Choice { points, .. } => vec![BreakdownLine {
            label: "answer".to_string(),
            awarded: 0,
            possible: *points,
        }],
    };
    Assessment {
        score: 0,
        breakdown,
        explanation: "No answer was submitted.".to_string(),
        warnings: Vec::new(),
    }
}

/// Outcome of querying one provider for one prompt.
#[derive(Debug, Clone)]
pub struct ModelFailure {
    pub reason: String,
    /// Raw output of the last reply, if any reply arrived.
    pub raw_output: Option<String>,
    pub calls: u32,
}

/// Query a provider and parse its reply, retrying once on output that has no
/// valid score block.
pub fn query_model(
    gateway: &Gateway,
    provider_id: &str,
    prompt: &PromptDocument,
    item: &SchemeItem,
) -> Result<(Assessment, CompletionRecord, u32), ModelFailure> {
    let mut last_unparseable = None;
    for call in 1..=2 {
        let record = match gateway.complete(provider_id, prompt) {
            Ok(r) => r,
            Err(GatewayError::Provider { record }) => {
                return Err(ModelFailure {
                    reason: record
                        .error
                        .clone()
                        .unwrap_or_else(|| "provider failed".into()),
                    raw_output: None,
                    calls: call,
                })
            }
            Err(e) => {
                return Err(ModelFailure {
                    reason: e.to_string(),
                    raw_output: None,
                    calls: call,
                })
            }
        };
        match parse_assessment(&record.raw_output, item) {
            Ok(a) => return Ok((a, record, call)),
            Err(e) => {
                log::warn!("{provider_id}: {e} (call {call})");
                last_unparseable = Some((e.to_string(), record.raw_output));
            }
        }
    }
    let (reason, raw) = last_unparseable.expect("loop ran");
    Err(ModelFailure {
        reason,
        raw_output: Some(raw),
        calls: 2,
    })
}

/// Per-question line of a [`SessionReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportItem {
    pub question_id: String,
    pub section_label: String,
    pub max_points: u32,
    pub submission_id: String,
    pub empty: bool,
    /// Counted as 0 in the total.
    pub pending: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<AssessmentResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub exam_id: String,
    pub status: SessionStatus,
    pub office_points: u32,
    /// office_points plus the scores of completed items.
    pub total_score: u32,
    pub total_points: u32,
    pub pending_count: usize,
    pub items: Vec<ReportItem>,
}

#[derive(Clone)]
pub struct Assessor {
    store: Arc<dyn DocumentStore>,
    corpus: Corpus,
    sessions: Sessions,
    gateway: Arc<Gateway>,
    clock: Arc<dyn Clock>,
    /// Provider used for live open-text assessment; none means open answers
    /// stay pending.
    provider_id: Option<String>,
    language: Language,
}

impl Assessor {
    pub fn new(
        store: Arc<dyn DocumentStore>,
        corpus: Corpus,
        sessions: Sessions,
        gateway: Arc<Gateway>,
        clock: Arc<dyn Clock>,
        provider_id: Option<String>,
    ) -> Self {
        Self {
            store,
            corpus,
            sessions,
            gateway,
            clock,
            provider_id,
            language: Language::Ro,
        }
    }

    pub fn with_language(mut self, language: Language) -> Self {
        self.language = language;
        self
    }

    pub fn record(&self, submission_id: &str) -> Result<Option<AssessmentRecord>, AssessmentError> {
        Ok(self
            .store
            .get_json::<AssessmentRecord>(ASSESSMENTS, submission_id)?
            .map(|(_, r)| r))
    }

    fn save(
        &self,
        record: &AssessmentRecord,
        submission_id: &str,
    ) -> Result<AssessmentRecord, AssessmentError> {
        loop {
            let expect = match self
                .store
                .get_json::<AssessmentRecord>(ASSESSMENTS, submission_id)?
            {
                // A completed result is final.
                Some((_, existing @ AssessmentRecord::Complete(_))) => return Ok(existing),
                Some((v, AssessmentRecord::Pending { .. })) => Expect::Version(v),
                None => Expect::Absent,
            };
            match self
                .store
                .put_json(ASSESSMENTS, submission_id, record, expect)
            {
                Ok(_) => return Ok(record.clone()),
                Err(e) if e.is_conflict() => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn pending_attempts(&self, submission_id: &str) -> Result<u32, AssessmentError> {
        Ok(match self.record(submission_id)? {
            Some(AssessmentRecord::Pending { attempts, .. }) => attempts,
            _ => 0,
        })
    }

    /// Assess one submission and persist the outcome. Already-completed
    /// submissions are returned as stored; pending ones are retried.
    pub fn assess_submission(
        &self,
        submission_id: &str,
    ) -> Result<AssessmentResult, AssessmentError> {
        if let Some(AssessmentRecord::Complete(r)) = self.record(submission_id)? {
            return Ok(r);
        }
        let sub = self
            .sessions
            .get_submission(submission_id)?
            .ok_or_else(|| AssessmentError::NotFound(format!("submission {submission_id}")))?;
        let record = self.corpus.get_record(&sub.exam_id)?;
        let question = record
            .exam
            .question(&sub.question_id)
            .ok_or_else(|| AssessmentError::NotFound(format!("question {}", sub.question_id)))?;
        let item =
            record.scheme.items.get(&sub.question_id).ok_or_else(|| {
                AssessmentError::NotFound(format!("scheme item {}", sub.question_id))
            })?;

        let outcome = self.evaluate(&sub, question, item)?;
        match self.save(&outcome, submission_id)? {
            AssessmentRecord::Complete(r) => Ok(r),
            AssessmentRecord::Pending { reason, .. } => Err(AssessmentError::Unavailable {
                submission_id: submission_id.to_string(),
                reason,
            }),
        }
    }

    fn evaluate(
        &self,
        sub: &Submission,
        question: &Question,
        item: &SchemeItem,
    ) -> Result<AssessmentRecord, AssessmentError> {
        let now = self.clock.now();
        if question.kind.is_choice() {
            let a = score_choice(sub.payload(), question, item)?;
            return Ok(AssessmentRecord::Complete(AssessmentResult::deterministic(
                sub,
                question.max_points,
                a,
                now,
            )));
        }
        let answer = match sub.payload() {
            Some(p) if !p.is_blank() => p,
            _ => {
                return Ok(AssessmentRecord::Complete(AssessmentResult::deterministic(
                    sub,
                    question.max_points,
                    empty_open_assessment(item),
                    now,
                )))
            }
        };
        let prior = self.pending_attempts(&sub.submission_id)?;
        let pending = |reason: String, calls: u32| AssessmentRecord::Pending {
            submission_id: sub.submission_id.clone(),
            question_id: sub.question_id.clone(),
            reason,
            attempts: prior + calls,
            updated_at: self.clock.now(),
        };
        let Some(provider_id) = &self.provider_id else {
            return Ok(pending(
                "no assessment provider is configured".to_string(),
                0,
            ));
        };
        let prompt = build_prompt(question, answer, item, self.language)?;
        match query_model(&self.gateway, provider_id, &prompt, item) {
            Ok((a, rec, _)) => Ok(AssessmentRecord::Complete(AssessmentResult {
                submission_id: sub.submission_id.clone(),
                question_id: sub.question_id.clone(),
                source: AssessmentSource::Model(format!("{}/{}", rec.provider_id, rec.model_name)),
                score: a.score,
                max_points: question.max_points,
                breakdown: a.breakdown,
                explanation: a.explanation,
                warnings: a.warnings,
                experimental: true,
                raw_output: rec.raw_output,
                latency_ms: rec.latency_ms,
                model_called: true,
                created_at: self.clock.now(),
            })),
            Err(f) => Ok(pending(f.reason, f.calls)),
        }
    }

    fn submitted_state(
        &self,
        session_id: &str,
    ) -> Result<crate::session::SessionState, AssessmentError> {
        let state = self.sessions.get(session_id)?;
        if state.status == SessionStatus::InProgress {
            return Err(AssessmentError::NotSubmitted(session_id.to_string()));
        }
        Ok(state)
    }

    /// Assess every submission of a closed session; marks it evaluated once
    /// nothing is pending.
    pub fn assess_session(&self, session_id: &str) -> Result<SessionReport, AssessmentError> {
        self.submitted_state(session_id)?;
        let mut all_done = true;
        for sub in self.sessions.submissions_for(session_id)? {
            match self.assess_submission(&sub.submission_id) {
                Ok(_) => {}
                Err(AssessmentError::Unavailable { .. }) => all_done = false,
                Err(e) => return Err(e),
            }
        }
        if all_done {
            self.sessions.mark_evaluated(session_id)?;
        }
        self.session_report(session_id)
    }

    /// Totals and per-question results in exam order. Pending or not yet
    /// assessed items count as 0 and are flagged.
    pub fn session_report(&self, session_id: &str) -> Result<SessionReport, AssessmentError> {
        let state = self.submitted_state(session_id)?;
        let exam: Exam = self.corpus.get_exam(&state.exam_id)?;
        let subs = self.sessions.submissions_for(session_id)?;
        let mut items = Vec::with_capacity(subs.len());
        let mut total = exam.office_points;
        let mut pending_count = 0;
        for sub in subs {
            let question = exam.question(&sub.question_id).ok_or_else(|| {
                AssessmentError::NotFound(format!("question {}", sub.question_id))
            })?;
            let (result, reason) = match self.record(&sub.submission_id)? {
                Some(AssessmentRecord::Complete(r)) => (Some(r), None),
                Some(AssessmentRecord::Pending { reason, .. }) => (None, Some(reason)),
                None => (None, Some("assessment not yet available".to_string())),
            };
            let pending = result.is_none();
            if pending {
                pending_count += 1;
            }
            total += result.as_ref().map_or(0, |r| r.score);
            items.push(ReportItem {
                question_id: sub.question_id.clone(),
                section_label: exam
                    .section_of(&sub.question_id)
                    .unwrap_or_default()
                    .to_string(),
                max_points: question.max_points,
                submission_id: sub.submission_id,
                empty: sub.empty,
                pending,
                pending_reason: reason,
                result,
            });
        }
        Ok(SessionReport {
            session_id: state.session_id,
            exam_id: state.exam_id,
            status: state.status,
            office_points: exam.office_points,
            total_score: total,
            total_points: exam.total_points,
            pending_count,
            items,
        })
    }

    /// Every stored assessment record, keyed by submission id.
    pub fn all_records(&self) -> Result<Vec<AssessmentRecord>, AssessmentError> {
        Ok(self
            .store
            .list_json::<AssessmentRecord>(ASSESSMENTS)?
            .into_iter()
            .map(|(_, _, r)| r)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimulatedClock;
    use crate::corpus::CorpusConfig;
    use crate::gateway::{GatewaySettings, MockBehavior, MockProvider, MockReply};
    use crate::session::{identify, AnswerPayload};
    use crate::store::MemoryStore;
    use crate::synth;
    use std::collections::BTreeSet;

    struct Fixture {
        sessions: Sessions,
        assessor: Assessor,
        mock: Arc<MockProvider>,
    }

    fn fixture(mock: MockProvider, provider: Option<&str>) -> Fixture {
        let store: Arc<dyn DocumentStore> = Arc::new(MemoryStore::new());
        let clock = Arc::new(SimulatedClock::at_epoch());
        let corpus = Corpus::new(store.clone(), CorpusConfig::default());
        corpus
            .ingest_exam(synth::small_cs_exam_json().as_bytes())
            .unwrap();
        let sessions = Sessions::new(store.clone(), corpus.clone(), clock.clone());
        let gateway = Arc::new(Gateway::new(clock.clone(), GatewaySettings::default()));
        let mock = Arc::new(mock);
        gateway
            .register_with_adapter(MockProvider::config("mock", 60), mock.clone())
            .unwrap();
        let assessor = Assessor::new(
            store,
            corpus,
            sessions.clone(),
            gateway,
            clock,
            provider.map(str::to_string),
        );
        Fixture {
            sessions,
            assessor,
            mock,
        }
    }

    fn submitted(f: &Fixture, answers: &[(&str, AnswerPayload)]) -> String {
        let key = identify("elev@liceu.ro", b"salt").unwrap();
        let mut s = f.sessions.start_or_resume(&key, "info-2023-test").unwrap();
        for (qid, p) in answers {
            s = f
                .sessions
                .record_answer(&s.session_id, qid, p.clone(), s.version)
                .unwrap();
        }
        f.sessions.submit(&s.session_id).unwrap();
        s.session_id
    }

    fn choice(l: &str) -> AnswerPayload {
        AnswerPayload::Choice {
            selected: BTreeSet::from([l.to_string()]),
        }
    }

    fn text(t: &str) -> AnswerPayload {
        AnswerPayload::Text { text: t.into() }
    }

    #[test]
    fn source_round_trips_as_string() {
        let s = AssessmentSource::Model("gemini/gemini-2.0-flash".into());
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            "\"model:gemini/gemini-2.0-flash\""
        );
        let back: AssessmentSource = serde_json::from_str("\"deterministic\"").unwrap();
        assert_eq!(back, AssessmentSource::Deterministic);
        assert!("model:".parse::<AssessmentSource>().is_err());
    }

    #[test]
    fn choice_submission_matches_score_choice() {
        let f = fixture(MockProvider::new(MockBehavior::FullMarks), Some("mock"));
        let sid = submitted(&f, &[("I.1", choice("b"))]);
        let subs = f.sessions.submissions_for(&sid).unwrap();
        let r = f
            .assessor
            .assess_submission(&subs[0].submission_id)
            .unwrap();
        assert_eq!(r.source, AssessmentSource::Deterministic);
        assert_eq!(r.score, 6);
        assert!(!r.experimental && r.raw_output.is_empty());
    }

    #[test]
    fn empty_open_answer_scores_zero_without_a_model_call() {
        let f = fixture(MockProvider::new(MockBehavior::FullMarks), Some("mock"));
        let sid = submitted(&f, &[("II.1", text("   \n"))]);
        let report = f.assessor.assess_session(&sid).unwrap();
        assert_eq!(f.mock.calls(), 0);
        let open = &report.items[1];
        let r = open.result.as_ref().unwrap();
        assert_eq!((r.score, r.model_called, r.experimental), (0, false, false));
        assert_eq!(r.breakdown.len(), 3);
        // Office points only.
        assert_eq!(report.total_score, 10);
        assert_eq!(report.status, SessionStatus::Evaluated);
    }

    #[test]
    fn open_answer_via_canned_block_is_experimental() {
        let canned =
            "Citirea e corectă, suma parțial.\n===SCORE===\n1: 4\n2: 1\n3: 3\nTOTAL: 8\n===END===";
        let f = fixture(
            MockProvider::new(MockBehavior::Text {
                text: canned.into(),
            }),
            Some("mock"),
        );
        let sid = submitted(
            &f,
            &[("I.1", choice("b")), ("II.1", text("int main(){...}"))],
        );
        let report = f.assessor.assess_session(&sid).unwrap();
        let r = report.items[1].result.as_ref().unwrap();
        assert_eq!(r.score, 8);
        assert!(r.experimental && r.model_called);
        assert_eq!(r.source.to_string(), "model:mock/mock");
        assert_eq!(r.raw_output, canned);
        assert_eq!(report.total_score, 10 + 6 + 8);
        assert_eq!(report.total_points, 26);
        // Stored, not recomputed.
        f.assessor.assess_session(&sid).unwrap();
        assert_eq!(f.mock.calls(), 1);
    }

    #[test]
    fn unparseable_output_is_retried_once_then_pending() {
        let f = fixture(
            MockProvider::new(MockBehavior::Text {
                text: "Nu pot evalua.".into(),
            }),
            Some("mock"),
        );
        let sid = submitted(&f, &[("I.1", choice("a")), ("II.1", text("ceva"))]);
        let report = f.assessor.assess_session(&sid).unwrap();
        assert_eq!(f.mock.calls(), 2);
        assert_eq!(report.pending_count, 1);
        assert!(report.items[1].pending);
        assert_eq!(report.total_score, 10);
        assert_eq!(report.status, SessionStatus::Submitted);
        // Submissions survive a failed assessment.
        assert_eq!(f.sessions.submissions_for(&sid).unwrap().len(), 2);
    }

    #[test]
    fn retry_succeeds_on_second_reply() {
        let f = fixture(MockProvider::new(MockBehavior::ZeroMarks), Some("mock"));
        let sid = submitted(&f, &[("II.1", text("x"))]);
        let sub = f.sessions.submissions_for(&sid).unwrap()[1].clone();
        let record = f.assessor.corpus.get_record("info-2023-test").unwrap();
        let q = record.exam.question("II.1").unwrap();
        let item = &record.scheme.items["II.1"];
        let p = build_prompt(q, sub.payload().unwrap(), item, Language::Ro).unwrap();
        f.mock.script(
            &p.hash(),
            vec![
                MockReply::Text("fără bloc".into()),
                MockReply::Text(emit_score_block(&[4, 3, 0], 7)),
            ],
        );
        let r = f.assessor.assess_submission(&sub.submission_id).unwrap();
        assert_eq!(r.score, 7);
        assert_eq!(f.mock.calls_for(&p.hash()), 2);
    }

    #[test]
    fn pending_is_retried_later_and_overwritten() {
        let f = fixture(MockProvider::new(MockBehavior::FullMarks), None);
        let sid = submitted(&f, &[("II.1", text("x"))]);
        let sub = f.sessions.submissions_for(&sid).unwrap()[1].clone();
        assert!(matches!(
            f.assessor.assess_submission(&sub.submission_id),
            Err(AssessmentError::Unavailable { .. })
        ));
        let mut live = f.assessor.clone();
        live.provider_id = Some("mock".into());
        assert_eq!(
            live.assess_submission(&sub.submission_id).unwrap().score,
            10
        );
        assert_eq!(live.all_records().unwrap().len(), 1);
    }

    #[test]
    fn report_of_in_progress_session_is_not_submitted() {
        let f = fixture(MockProvider::new(MockBehavior::FullMarks), Some("mock"));
        let key = identify("x@y.ro", b"salt").unwrap();
        let s = f.sessions.start_or_resume(&key, "info-2023-test").unwrap();
        assert!(matches!(
            f.assessor.session_report(&s.session_id),
            Err(AssessmentError::NotSubmitted(_))
        ));
        assert!(matches!(
            f.assessor.session_report("ses-missing"),
            Err(AssessmentError::Session(SessionError::NotFound(_)))
        ));
    }
}
