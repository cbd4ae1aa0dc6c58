//! Exam corpus: the versioned database of exams and their official grading
//! schemes (bareme).
//!
//! Exams and schemes are stored together as one [`ExamRecord`] per exam, but
//! they are only ever handed out separately: [`Corpus::get_exam`] is the
//! student-facing projection and never carries answers or rubric criteria.

mod format;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::store::{DocumentStore, Expect, JsonStore, StoreError};

pub use format::{
    parse_exam_file, CriterionFile, ExamFile, OptionFile, QuestionFile, SchemeEntryFile,
    SectionFile, FORMAT_VERSION,
};
pub use validate::{validate_record, Violation};

pub(crate) const EXAMS: &str = "exams";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    SingleChoice,
    MultipleChoice,
    OpenText,
}

impl QuestionKind {
    pub fn is_choice(self) -> bool {
        !matches!(self, QuestionKind::OpenText)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub kind: QuestionKind,
    /// May embed preformatted code listings or text fragments.
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<ChoiceOption>>,
    pub max_points: u32,
}

impl Question {
    pub fn option_labels(&self) -> BTreeSet<&str> {
        self.options
            .iter()
            .flatten()
            .map(|o| o.label.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub section_label: String,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exam {
    pub exam_id: String,
    pub subject: String,
    pub year: i32,
    pub variant_label: String,
    pub sections: Vec<Section>,
    pub time_limit_minutes: u32,
    pub office_points: u32,
    pub total_points: u32,
}

impl Exam {
    /// Questions in exam order, paired with their section label.
    pub fn questions(&self) -> impl Iterator<Item = (&str, &Question)> {
        self.sections.iter().flat_map(|s| {
            s.questions
                .iter()
                .map(move |q| (s.section_label.as_str(), q))
        })
    }

    pub fn question(&self, question_id: &str) -> Option<&Question> {
        self.questions()
            .map(|(_, q)| q)
            .find(|q| q.question_id == question_id)
    }

    pub fn section_of(&self, question_id: &str) -> Option<&str> {
        self.questions()
            .find(|(_, q)| q.question_id == question_id)
            .map(|(s, _)| s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub text: String,
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeItem {
    Choice {
        correct_options: BTreeSet<String>,
        points: u32,
    },
    OpenText {
        criteria: Vec<Criterion>,
    },
}

impl SchemeItem {
    pub fn total_points(&self) -> u32 {
        match self {
            SchemeItem::Choice { points, .. } => *points,
            SchemeItem::OpenText { criteria } => criteria.iter().map(|c| c.points).sum(),
        }
    }

    /// Per-criterion maxima. A choice item counts as one criterion.
    pub fn criterion_points(&self) -> Vec<u32> {
        match self {
            SchemeItem::Choice { points, .. } => vec![*points],
            SchemeItem::OpenText { criteria } => criteria.iter().map(|c| c.points).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradingScheme {
    pub exam_id: String,
    pub items: BTreeMap<String, SchemeItem>,
}

/// What the store holds for one exam.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamRecord {
    pub exam: Exam,
    pub scheme: GradingScheme,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamSummary {
    pub exam_id: String,
    pub subject: String,
    pub year: i32,
    pub variant_label: String,
    pub time_limit_minutes: u32,
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub admissible_years: RangeInclusive<i32>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            admissible_years: 2019..=2026,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub exam_id: String,
    /// False when an identical document was already stored.
    pub created: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed exam document: {0}")]
    Parse(String),
    #[error("exam failed validation: {}", join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("exam {0} already exists with different content")]
    Conflict(String),
    #[error("exam {0} not found")]
    NotFound(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Clone)]
pub struct Corpus {
    store: Arc<dyn DocumentStore>,
    config: CorpusConfig,
}

impl Corpus {
    pub fn new(store: Arc<dyn DocumentStore>, config: CorpusConfig) -> Self {
        Self { store, config }
    }

    pub fn ingest_exam(&self, document: &[u8]) -> Result<IngestOutcome, CorpusError> {
        let file = parse_exam_file(document)?;
        let record = file.into_record(&self.config)?;
        let exam_id = record.exam.exam_id.clone();
        loop {
            match self.store.get_json::<ExamRecord>(EXAMS, &exam_id) {
                Ok(Some((_, existing))) => {
                    return if existing == record {
                        Ok(IngestOutcome {
                            exam_id,
                            created: false,
                        })
                    } else {
                        Err(CorpusError::Conflict(exam_id))
                    };
                }
                Ok(None) => {}
                // An unreadable stored record is never silently replaced.
                Err(StoreError::Corrupt(_)) => return Err(CorpusError::Conflict(exam_id)),
                Err(e) => return Err(e.into()),
            }
            match self
                .store
                .put_json(EXAMS, &exam_id, &record, Expect::Absent)
            {
                Ok(_) => {
                    return Ok(IngestOutcome {
                        exam_id,
                        created: true,
                    })
                }
                // A concurrent ingest of the same exam won; compare against it.
                Err(e) if e.is_conflict() => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn list_exams(&self, subject: Option<&str>) -> Result<Vec<ExamSummary>, CorpusError> {
        let mut out: Vec<ExamSummary> = self
            .store
            .list_json::<ExamRecord>(EXAMS)?
            .into_iter()
            .map(|(_, _, r)| r.exam)
            .filter(|e| subject.is_none_or(|s| e.subject == s))
            .map(|e| ExamSummary {
                exam_id: e.exam_id,
                subject: e.subject,
                year: e.year,
                variant_label: e.variant_label,
                time_limit_minutes: e.time_limit_minutes,
            })
            .collect();
        out.sort_by(|a, b| {
            a.subject
                .cmp(&b.subject)
                .then(b.year.cmp(&a.year))
                .then(a.variant_label.cmp(&b.variant_label))
                .then(a.exam_id.cmp(&b.exam_id))
        });
        Ok(out)
    }

    pub fn get_record(&self, exam_id: &str) -> Result<ExamRecord, CorpusError> {
        self.store
            .get_json::<ExamRecord>(EXAMS, exam_id)?
            .map(|(_, r)| r)
            .ok_or_else(|| CorpusError::NotFound(exam_id.to_string()))
    }

    /// Student-facing exam structure: no correct options, no criteria.
    pub fn get_exam(&self, exam_id: &str) -> Result<Exam, CorpusError> {
        self.get_record(exam_id).map(|r| r.exam)
    }

    pub fn get_scheme(&self, exam_id: &str) -> Result<GradingScheme, CorpusError> {
        self.get_record(exam_id).map(|r| r.scheme)
    }

    /// Re-check every stored exam. Empty iff the corpus is sound.
    pub fn validate_corpus(&self, exec: Execution) -> Result<Vec<Violation>, CorpusError> {
        let docs = self.store.list(EXAMS)?;
        let per_exam = exec::map(&docs, exec, |(key, doc)| {
            match serde_json::from_slice::<ExamRecord>(&doc.body) {
                Ok(record) => {
                    let mut v = validate_record(&record, &self.config);
                    if record.exam.exam_id != *key {
                        v.push(Violation::exam(
                            key,
                            "exam_id",
                            "stored under a different key",
                        ));
                    }
                    v
                }
                Err(e) => vec![Violation::exam(key, "record", format!("unreadable: {e}"))],
            }
        });
        Ok(per_exam.into_iter().flatten().collect())
    }
}
