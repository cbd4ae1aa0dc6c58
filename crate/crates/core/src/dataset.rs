//! Research dataset export: newline-delimited JSON, one record per
//! submission, ordered by `(created_at, submission_id)`.
//!
//! Each record is self-describing (question, scheme item, answer, live
//! assessment) and carries `format_version`. Identity is limited to the
//! pseudonymous student key.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::assessment::{AssessmentRecord, ASSESSMENTS};
use crate::corpus::{Corpus, CorpusError, ExamRecord, Question, SchemeItem};
use crate::session::{RecordedAnswer, SessionError, Sessions, StudentKey, Submission};
use crate::store::{DocumentStore, Expect, JsonStore, StoreError};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub format_version: u32,
    pub submission_id: String,
    pub session_id: String,
    pub student_key: StudentKey,
    pub exam_id: String,
    pub subject: String,
    pub year: i32,
    pub variant_label: String,
    pub section_label: String,
    pub question_id: String,
    pub question: Question,
    pub scheme_item: SchemeItem,
    /// `None` for an omitted question.
    pub answer: Option<RecordedAnswer>,
    pub empty: bool,
    pub created_at: DateTime<Utc>,
    /// Live assessment logged for this submission, if any.
    pub assessment: Option<AssessmentRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportFilter {
    pub exam_id: Option<String>,
    pub subject: Option<String>,
    /// Inclusive lower bound on `created_at`.
    pub from: Option<DateTime<Utc>>,
    /// Exclusive upper bound on `created_at`.
    pub until: Option<DateTime<Utc>>,
}

impl ExportFilter {
    fn admits(&self, sub: &Submission, exam: &ExamRecord) -> bool {
        self.exam_id.as_ref().is_none_or(|e| *e == sub.exam_id)
            && self
                .subject
                .as_ref()
                .is_none_or(|s| *s == exam.exam.subject)
            && self.from.is_none_or(|t| sub.created_at >= t)
            && self.until.is_none_or(|t| sub.created_at < t)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: record for {submission_id} does not match the stored corpus or data")]
    Mismatch { line: usize, submission_id: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone)]
pub struct Dataset {
    store: Arc<dyn DocumentStore>,
    corpus: Corpus,
    sessions: Sessions,
}

impl Dataset {
    pub fn new(store: Arc<dyn DocumentStore>, corpus: Corpus, sessions: Sessions) -> Self {
        Self {
            store,
            corpus,
            sessions,
        }
    }

    pub fn records(&self, filter: &ExportFilter) -> Result<Vec<DatasetRecord>, DatasetError> {
        let mut subs = self.sessions.all_submissions()?;
        subs.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.submission_id.cmp(&b.submission_id))
        });
        let mut exams: BTreeMap<String, ExamRecord> = BTreeMap::new();
        let mut out = Vec::new();
        for sub in subs {
            if !exams.contains_key(&sub.exam_id) {
                let rec = self.corpus.get_record(&sub.exam_id)?;
                exams.insert(sub.exam_id.clone(), rec);
            }
            let exam = &exams[&sub.exam_id];
            if !filter.admits(&sub, exam) {
                continue;
            }
            let question = exam
                .exam
                .question(&sub.question_id)
                .cloned()
                .ok_or_else(|| {
                    CorpusError::NotFound(format!("{}/{}", sub.exam_id, sub.question_id))
                })?;
            let scheme_item = exam
                .scheme
                .items
                .get(&sub.question_id)
                .cloned()
                .ok_or_else(|| {
                    CorpusError::NotFound(format!("{}/{} scheme", sub.exam_id, sub.question_id))
                })?;
            let assessment = self
                .store
                .get_json::<AssessmentRecord>(ASSESSMENTS, &sub.submission_id)?
                .map(|(_, a)| a);
            out.push(DatasetRecord {
                format_version: DATASET_FORMAT_VERSION,
                section_label: exam
                    .exam
                    .section_of(&sub.question_id)
                    .unwrap_or_default()
                    .to_string(),
                question_id: sub.question_id.clone(),
                submission_id: sub.submission_id,
                session_id: sub.session_id,
                student_key: sub.student_key,
                exam_id: sub.exam_id,
                subject: exam.exam.subject.clone(),
                year: exam.exam.year,
                variant_label: exam.exam.variant_label.clone(),
                question,
                scheme_item,
                answer: sub.answer,
                empty: sub.empty,
                created_at: sub.created_at,
                assessment,
            });
        }
        Ok(out)
    }

    /// The export stream: one JSON object per line, each line ending in `\n`.
    pub fn export(&self, filter: &ExportFilter) -> Result<Vec<u8>, DatasetError> {
        let mut out = Vec::new();
        for r in self.records(filter)? {
            serde_json::to_writer(&mut out, &r).expect("record serializes");
            out.push(b'\n');
        }
        Ok(out)
    }

    /// Restore submissions and assessments from an export. The exams must
    /// already be ingested and must agree with each record. Returns the
    /// number of records restored.
    pub fn import(&self, ndjson: &[u8]) -> Result<usize, DatasetError> {
        let text = std::str::from_utf8(ndjson).map_err(|e| DatasetError::Malformed {
            line: 0,
            message: e.to_string(),
        })?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: DatasetRecord =
                serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if r.format_version != DATASET_FORMAT_VERSION {
                return Err(DatasetError::Malformed {
                    line: i + 1,
                    message: format!("unsupported format_version {}", r.format_version),
                });
            }
            let exam = self.corpus.get_record(&r.exam_id)?;
            let matches = exam.exam.question(&r.question_id) == Some(&r.question)
                && exam.scheme.items.get(&r.question_id) == Some(&r.scheme_item)
                && exam.exam.subject == r.subject
                && r.submission_id == crate::session::submission_id(&r.session_id, &r.question_id);
            if !matches {
                return Err(DatasetError::Mismatch {
                    line: i + 1,
                    submission_id: r.submission_id,
                });
            }
            records.push(r);
        }
        for r in &records {
            let sub = Submission {
                submission_id: r.submission_id.clone(),
                session_id: r.session_id.clone(),
                student_key: r.student_key.clone(),
                exam_id: r.exam_id.clone(),
                question_id: r.question_id.clone(),
                answer: r.answer.clone(),
                empty: r.empty,
                created_at: r.created_at,
            };
            self.sessions.restore_submission(&sub)?;
            if let Some(a) = &r.assessment {
                match self
                    .store
                    .put_json(ASSESSMENTS, &r.submission_id, a, Expect::Absent)
                {
                    Ok(_) => {}
                    Err(e) if e.is_conflict() => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(records.len())
    }
}
