//! Student-facing response shapes. None of them carries scheme content
//! before submission.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use examlab_core::assessment::{BreakdownLine, SessionReport, EXPERIMENTAL_DISCLAIMER};
use examlab_core::corpus::{Exam, QuestionKind};
use examlab_core::session::{AnswerPayload, SessionState, SessionStatus, Submission};

#[derive(Debug, Deserialize)]
pub struct IdentifyBody {
    pub email: String,
}

#[derive(Debug, Deserialize)]
pub struct StartBody {
    pub student_key: String,
    pub exam_id: String,
}

#[derive(Debug, Deserialize)]
pub struct AnswerBody {
    pub payload: AnswerPayload,
    pub expected_version: u64,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub session: SessionState,
    pub exam: Exam,
    pub elapsed_seconds: i64,
    /// Advisory; never enforced.
    pub remaining_seconds: i64,
    pub overtime: bool,
}

impl SessionView {
    pub fn new(session: SessionState, exam: Exam, now: DateTime<Utc>) -> Self {
        let elapsed = session.elapsed_seconds(now);
        let limit = i64::from(exam.time_limit_minutes) * 60;
        Self {
            remaining_seconds: (limit - elapsed).max(0),
            overtime: elapsed > limit,
            elapsed_seconds: elapsed,
            session,
            exam,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SubmittedItem {
    pub submission_id: String,
    pub question_id: String,
    pub empty: bool,
}

#[derive(Debug, Serialize)]
pub struct SubmitView {
    pub session_id: String,
    pub status: SessionStatus,
    pub submissions: Vec<SubmittedItem>,
}

impl SubmitView {
    pub fn new(session_id: &str, subs: Vec<Submission>) -> Self {
        Self {
            session_id: session_id.to_string(),
            status: SessionStatus::Submitted,
            submissions: subs
                .into_iter()
                .map(|s| SubmittedItem {
                    submission_id: s.submission_id,
                    question_id: s.question_id,
                    empty: s.empty,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ResultItem {
    pub question_id: String,
    pub section_label: String,
    pub kind: QuestionKind,
    pub max_points: u32,
    pub submission_id: String,
    pub empty: bool,
    pub pending: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pending_reason: Option<String>,
    pub score: Option<u32>,
    /// Choice questions only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    pub breakdown: Vec<BreakdownLine>,
    pub explanation: String,
    pub source: Option<String>,
    pub experimental: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disclaimer: Option<&'static str>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ResultsView {
    pub session_id: String,
    pub exam_id: String,
    pub status: SessionStatus,
    pub office_points: u32,
    pub total_score: u32,
    pub total_points: u32,
    pub pending_count: usize,
    pub items: Vec<ResultItem>,
}

impl ResultsView {
    pub fn new(report: SessionReport, exam: &Exam) -> Self {
        let items = report
            .items
            .into_iter()
            .map(|i| {
                let kind = exam
                    .question(&i.question_id)
                    .map(|q| q.kind)
                    .unwrap_or(QuestionKind::OpenText);
                let r = i.result;
                let experimental = r.as_ref().is_some_and(|r| r.experimental);
                ResultItem {
                    correct: r
                        .as_ref()
                        .filter(|_| kind.is_choice())
                        .map(|r| r.score == r.max_points),
                    score: r.as_ref().map(|r| r.score),
                    breakdown: r.as_ref().map(|r| r.breakdown.clone()).unwrap_or_default(),
                    explanation: r
                        .as_ref()
                        .map(|r| r.explanation.clone())
                        .unwrap_or_default(),
                    source: r.as_ref().map(|r| r.source.to_string()),
                    warnings: r.map(|r| r.warnings).unwrap_or_default(),
                    disclaimer: experimental.then_some(EXPERIMENTAL_DISCLAIMER),
                    experimental,
                    question_id: i.question_id,
                    section_label: i.section_label,
                    kind,
                    max_points: i.max_points,
                    submission_id: i.submission_id,
                    empty: i.empty,
                    pending: i.pending,
                    pending_reason: i.pending_reason,
                }
            })
            .collect();
        Self {
            session_id: report.session_id,
            exam_id: report.exam_id,
            status: report.status,
            office_points: report.office_points,
            total_score: report.total_score,
            total_points: report.total_points,
            pending_count: report.pending_count,
            items,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct EvalRunBody {
    #[serde(default)]
    pub run_id: Option<String>,
    pub submission_ids: Vec<String>,
    pub providers: Vec<String>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub language: examlab_core::assessment::Language,
}

fn default_concurrency() -> usize {
    4
}
