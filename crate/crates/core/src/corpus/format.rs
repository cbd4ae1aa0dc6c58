//! The exam file format: one JSON document per exam, transcribed by hand
//! from the official exam sheet and its barem. Unknown keys are rejected.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "exam_id": "info-2023-oficial",
//!   "subject": "Computer Science",
//!   "year": 2023,
//!   "variant_label": "2023 official",
//!   "time_limit_minutes": 180,
//!   "office_points": 10,
//!   "total_points": 100,
//!   "sections": [
//!     { "section_label": "SUBIECTUL I",
//!       "questions": [
//!         { "question_id": "I.1", "kind": "single_choice", "prompt": "...",
//!           "options": [{"label": "a", "text": "..."}, {"label": "b", "text": "..."}],
//!           "max_points": 6 } ] } ],
//!   "scheme": {
//!     "I.1": { "correct_options": ["b"] },
//!     "II.3": { "criteria": [{"text": "...", "points": 4}] }
//!   }
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    validate_record, ChoiceOption, CorpusConfig, CorpusError, Criterion, Exam, ExamRecord,
    GradingScheme, Question, QuestionKind, SchemeItem, Section, Violation,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExamFile {
    pub format_version: u32,
    pub exam_id: String,
    pub subject: String,
    pub year: i64,
    pub variant_label: String,
    pub time_limit_minutes: i64,
    #[serde(default)]
    pub office_points: i64,
    pub total_points: i64,
    pub sections: Vec<SectionFile>,
    pub scheme: BTreeMap<String, SchemeEntryFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionFile {
    pub section_label: String,
    pub questions: Vec<QuestionFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionFile {
    pub question_id: String,
    pub kind: QuestionKind,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<OptionFile>>,
    pub max_points: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionFile {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeEntryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<CriterionFile>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionFile {
    pub text: String,
    pub points: i64,
}

pub fn parse_exam_file(document: &[u8]) -> Result<ExamFile, CorpusError> {
    let text =
        std::str::from_utf8(document).map_err(|e| CorpusError::Parse(format!("not UTF-8: {e}")))?;
    let file: ExamFile =
        serde_json::from_str(text).map_err(|e| CorpusError::Parse(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(CorpusError::Parse(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    Ok(file)
}

fn non_negative(
    value: i64,
    exam_id: &str,
    question_id: Option<&str>,
    field: &str,
    out: &mut Vec<Violation>,
) -> u32 {
    match u32::try_from(value) {
        Ok(v) => v,
        Err(_) => {
            out.push(Violation {
                exam_id: exam_id.to_string(),
                question_id: question_id.map(str::to_string),
                field: field.to_string(),
                message: format!("{value} is not a non-negative 32-bit integer"),
            });
            0
        }
    }
}

impl ExamFile {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("exam file serializes")
    }

    /// Convert to the stored form, checking every invariant. All violations
    /// are reported together.
    pub fn into_record(self, config: &CorpusConfig) -> Result<ExamRecord, CorpusError> {
        let mut violations = Vec::new();
        let id = self.exam_id.clone();

        let year = i32::try_from(self.year).unwrap_or_else(|_| {
            violations.push(Violation::exam(&id, "year", "out of range"));
            0
        });
        let time_limit_minutes = non_negative(
            self.time_limit_minutes,
            &id,
            None,
            "time_limit_minutes",
            &mut violations,
        );
        let office_points = non_negative(
            self.office_points,
            &id,
            None,
            "office_points",
            &mut violations,
        );
        let total_points = non_negative(
            self.total_points,
            &id,
            None,
            "total_points",
            &mut violations,
        );

        let mut max_points_by_id = BTreeMap::new();
        let sections = self
            .sections
            .into_iter()
            .map(|s| Section {
                section_label: s.section_label,
                questions: s
                    .questions
                    .into_iter()
                    .map(|q| {
                        let max_points = non_negative(
                            q.max_points,
                            &id,
                            Some(&q.question_id),
                            "max_points",
                            &mut violations,
                        );
                        max_points_by_id.insert(q.question_id.clone(), max_points);
                        Question {
                            question_id: q.question_id,
                            kind: q.kind,
                            prompt: q.prompt,
                            options: q.options.map(|opts| {
                                opts.into_iter()
                                    .map(|o| ChoiceOption {
                                        label: o.label,
                                        text: o.text,
                                    })
                                    .collect()
                            }),
                            max_points,
                        }
                    })
                    .collect(),
            })
            .collect();

        let mut items = BTreeMap::new();
        for (qid, entry) in self.scheme {
            let item = match (entry.correct_options, entry.criteria) {
                (Some(correct), None) => {
                    let set: BTreeSet<String> = correct.iter().cloned().collect();
                    if set.len() != correct.len() {
                        violations.push(Violation::question(
                            &id,
                            &qid,
                            "scheme.correct_options",
                            "duplicate option labels",
                        ));
                    }
                    SchemeItem::Choice {
                        correct_options: set,
                        points: max_points_by_id.get(&qid).copied().unwrap_or(0),
                    }
                }
                (None, Some(criteria)) => SchemeItem::OpenText {
                    criteria: criteria
                        .into_iter()
                        .map(|c| Criterion {
                            points: non_negative(
                                c.points,
                                &id,
                                Some(&qid),
                                "scheme.criteria.points",
                                &mut violations,
                            ),
                            text: c.text,
                        })
                        .collect(),
                },
                _ => {
                    violations.push(Violation::question(
                        &id,
                        &qid,
                        "scheme",
                        "entry must have exactly one of correct_options or criteria",
                    ));
                    continue;
                }
            };
            items.insert(qid, item);
        }

        let record = ExamRecord {
            exam: Exam {
                exam_id: self.exam_id,
                subject: self.subject,
                year,
                variant_label: self.variant_label,
                sections,
                time_limit_minutes,
                office_points,
                total_points,
            },
            scheme: GradingScheme { exam_id: id, items },
        };
        violations.extend(validate_record(&record, config));
        if violations.is_empty() {
            Ok(record)
        } else {
            Err(CorpusError::Validation(violations))
        }
    }
}
