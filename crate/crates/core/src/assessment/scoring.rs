use std::collections::BTreeSet;

use crate::corpus::{Question, SchemeItem};
use crate::session::AnswerPayload;

use super::{Assessment, AssessmentError, BreakdownLine};

fn join(set: &BTreeSet<String>) -> String {
    set.iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(", ")
}

/// All-or-nothing grid scoring: full points iff the selected set equals the
/// correct set exactly, otherwise zero. `None` is an unanswered question.
pub fn score_choice(
    answer: Option<&AnswerPayload>,
    question: &Question,
    item: &SchemeItem,
) -> Result<Assessment, AssessmentError> {
    let SchemeItem::Choice {
        correct_options,
        points,
    } = item
    else {
        return Err(AssessmentError::KindMismatch(question.question_id.clone()));
    };
    if !question.kind.is_choice() {
        return Err(AssessmentError::KindMismatch(question.question_id.clone()));
    }
    let empty = BTreeSet::new();
    let selected = match answer {
        None => &empty,
        Some(AnswerPayload::Choice { selected }) => selected,
        Some(AnswerPayload::Text { .. }) => {
            return Err(AssessmentError::KindMismatch(question.question_id.clone()))
        }
    };

    let correct = selected == correct_options;
    let score = if correct { *points } else { 0 };
    let explanation = if selected.is_empty() {
        format!(
            "No option selected. Correct option(s): {}.",
            join(correct_options)
        )
    } else if correct {
        format!("Correct. Correct option(s): {}.", join(correct_options))
    } else {
        format!(
            "Incorrect: selected {}. Correct option(s): {}.",
            join(selected),
            join(correct_options)
        )
    };
    Ok(Assessment {
        score,
        breakdown: vec![BreakdownLine {
            label: format!("correct option(s): {}", join(correct_options)),
            awarded: score,
            possible: *points,
        }],
        explanation,
        warnings: Vec::new(),
    })
}
