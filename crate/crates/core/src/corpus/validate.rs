use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CorpusConfig, ExamRecord, QuestionKind, SchemeItem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub exam_id: String,
    pub question_id: Option<String>,
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn exam(exam_id: &str, field: &str, message: impl Into<String>) -> Self {
        Self {
            exam_id: exam_id.to_string(),
            question_id: None,
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn question(
        exam_id: &str,
        question_id: &str,
        field: &str,
        message: impl Into<String>,
    ) -> Self {
        Self {
            exam_id: exam_id.to_string(),
            question_id: Some(question_id.to_string()),
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exam {}", self.exam_id)?;
        if let Some(q) = &self.question_id {
            write!(f, " question {q}")?;
        }
        write!(f, " field {}: {}", self.field, self.message)
    }
}

/// Every structural and point-conservation rule an exam and its scheme must
/// satisfy. Violations come out in a stable order.
pub fn validate_record(record: &ExamRecord, config: &CorpusConfig) -> Vec<Violation> {
    let exam = &record.exam;
    let id = exam.exam_id.as_str();
    let mut out = Vec::new();

    if id.trim().is_empty() {
        out.push(Violation::exam(id, "exam_id", "must not be empty"));
    }
    if exam.subject.trim().is_empty() {
        out.push(Violation::exam(id, "subject", "must not be empty"));
    }
    if exam.variant_label.trim().is_empty() {
        out.push(Violation::exam(id, "variant_label", "must not be empty"));
    }
    if !config.admissible_years.contains(&exam.year) {
        out.push(Violation::exam(
            id,
            "year",
            format!(
                "{} outside admissible range {}..={}",
                exam.year,
                config.admissible_years.start(),
                config.admissible_years.end()
            ),
        ));
    }
    if exam.time_limit_minutes == 0 {
        out.push(Violation::exam(
            id,
            "time_limit_minutes",
            "must be positive",
        ));
    }
    if exam.total_points == 0 {
        out.push(Violation::exam(id, "total_points", "must be positive"));
    }
    if exam.sections.is_empty() {
        out.push(Violation::exam(id, "sections", "must not be empty"));
    }

    let mut labels = BTreeSet::new();
    let mut question_ids = BTreeSet::new();
    let mut points_sum: u64 = 0;
    for section in &exam.sections {
        if !labels.insert(section.section_label.as_str()) {
            out.push(Violation::exam(
                id,
                "section_label",
                format!("duplicate section label {:?}", section.section_label),
            ));
        }
        if section.questions.is_empty() {
            out.push(Violation::exam(
                id,
                "questions",
                format!("section {:?} has no questions", section.section_label),
            ));
        }
        for q in &section.questions {
            let qid = q.question_id.as_str();
            if qid.trim().is_empty() {
                out.push(Violation::question(
                    id,
                    qid,
                    "question_id",
                    "must not be empty",
                ));
            }
            if !question_ids.insert(qid) {
                out.push(Violation::question(
                    id,
                    qid,
                    "question_id",
                    "duplicate question id",
                ));
            }
            if q.max_points == 0 {
                out.push(Violation::question(
                    id,
                    qid,
                    "max_points",
                    "must be positive",
                ));
            }
            points_sum += u64::from(q.max_points);
            match (q.kind.is_choice(), &q.options) {
                (true, None) => out.push(Violation::question(
                    id,
                    qid,
                    "options",
                    "choice question needs options",
                )),
                (true, Some(opts)) => {
                    if opts.len() < 2 {
                        out.push(Violation::question(
                            id,
                            qid,
                            "options",
                            format!(
                                "choice question needs at least 2 options, has {}",
                                opts.len()
                            ),
                        ));
                    }
                    let mut seen = BTreeSet::new();
                    for o in opts {
                        if o.label.trim().is_empty() {
                            out.push(Violation::question(id, qid, "options.label", "empty label"));
                        }
                        if !seen.insert(o.label.as_str()) {
                            out.push(Violation::question(
                                id,
                                qid,
                                "options.label",
                                format!("duplicate option label {:?}", o.label),
                            ));
                        }
                    }
                }
                (false, Some(_)) => out.push(Violation::question(
                    id,
                    qid,
                    "options",
                    "open_text question must not have options",
                )),
                (false, None) => {}
            }
        }
    }

    let expected_total = u64::from(exam.office_points) + points_sum;
    if expected_total != u64::from(exam.total_points) {
        out.push(Violation::exam(
            id,
            "total_points",
            format!(
                "office_points {} + question points {} = {} but total_points is {}",
                exam.office_points, points_sum, expected_total, exam.total_points
            ),
        ));
    }

    let scheme = &record.scheme;
    if scheme.exam_id != exam.exam_id {
        out.push(Violation::exam(
            id,
            "scheme.exam_id",
            format!("scheme belongs to {:?}", scheme.exam_id),
        ));
    }
    for qid in scheme.items.keys() {
        if !question_ids.contains(qid.as_str()) {
            out.push(Violation::question(
                id,
                qid,
                "scheme",
                "entry for a question not in the exam",
            ));
        }
    }

    for (_, q) in exam.questions() {
        let qid = q.question_id.as_str();
        let Some(item) = scheme.items.get(qid) else {
            out.push(Violation::question(
                id,
                qid,
                "scheme",
                "no scheme entry for question",
            ));
            continue;
        };
        match (q.kind, item) {
            (QuestionKind::OpenText, SchemeItem::OpenText { criteria }) => {
                if criteria.is_empty() {
                    out.push(Violation::question(
                        id,
                        qid,
                        "scheme.criteria",
                        "must not be empty",
                    ));
                }
                for (i, c) in criteria.iter().enumerate() {
                    if c.points == 0 {
                        out.push(Violation::question(
                            id,
                            qid,
                            "scheme.criteria.points",
                            format!("criterion {} must be worth at least 1 point", i + 1),
                        ));
                    }
                    if c.text.trim().is_empty() {
                        out.push(Violation::question(
                            id,
                            qid,
                            "scheme.criteria.text",
                            format!("criterion {} has no text", i + 1),
                        ));
                    }
                }
                let sum: u64 = criteria.iter().map(|c| u64::from(c.points)).sum();
                if sum != u64::from(q.max_points) {
                    out.push(Violation::question(
                        id,
                        qid,
                        "scheme.criteria.points",
                        format!("criteria sum to {sum} but max_points is {}", q.max_points),
                    ));
                }
            }
            (
                QuestionKind::SingleChoice | QuestionKind::MultipleChoice,
                SchemeItem::Choice {
                    correct_options,
                    points,
                },
            ) => {
                if correct_options.is_empty() {
                    out.push(Violation::question(
                        id,
                        qid,
                        "scheme.correct_options",
                        "must not be empty",
                    ));
                }
                if q.kind == QuestionKind::SingleChoice && correct_options.len() > 1 {
                    out.push(Violation::question(
                        id,
                        qid,
                        "scheme.correct_options",
                        format!(
                            "single_choice needs exactly one correct option, has {}",
                            correct_options.len()
                        ),
                    ));
                }
                let labels = q.option_labels();
                for c in correct_options {
                    if !labels.contains(c.as_str()) {
                        out.push(Violation::question(
                            id,
                            qid,
                            "scheme.correct_options",
                            format!("{c:?} is not an option label"),
                        ));
                    }
                }
                if *points != q.max_points {
                    out.push(Violation::question(
                        id,
                        qid,
                        "scheme.points",
                        format!("item worth {points} but max_points is {}", q.max_points),
                    ));
                }
            }
            _ => out.push(Violation::question(
                id,
                qid,
                "scheme",
                "scheme entry shape does not match question kind",
            )),
        }
    }
    out
}
