#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use examlab_core::clock::SimulatedClock;
use examlab_core::corpus::{Exam, Question, QuestionKind};
use examlab_core::session::AnswerPayload;
use examlab_core::store::{DocumentStore, MemoryStore};
use examlab_core::{Platform, PlatformConfig};

pub fn platform_on(
    store: Arc<dyn DocumentStore>,
    live: Option<&str>,
) -> (Platform, Arc<SimulatedClock>) {
    let clock = Arc::new(SimulatedClock::at_epoch());
    let config = PlatformConfig {
        salt: b"test-salt".to_vec(),
        live_provider: live.map(str::to_string),
        ..Default::default()
    };
    (Platform::new(store, clock.clone(), config), clock)
}

pub fn platform(live: Option<&str>) -> (Platform, Arc<SimulatedClock>) {
    platform_on(Arc::new(MemoryStore::new()), live)
}

/// A valid answer for any question; `salt` varies the text and choice.
pub fn answer_for(q: &Question, salt: usize) -> AnswerPayload {
    match q.kind {
        QuestionKind::OpenText => AnswerPayload::Text {
            text: format!(
                "Răspunsul {salt} la {}: citesc n, calculez și afișez.",
                q.question_id
            ),
        },
        QuestionKind::SingleChoice | QuestionKind::MultipleChoice => {
            let opts = q.options.as_ref().unwrap();
            let pick = &opts[salt % opts.len()].label;
            AnswerPayload::Choice {
                selected: BTreeSet::from([pick.clone()]),
            }
        }
    }
}

pub fn open_questions(exam: &Exam) -> Vec<Question> {
    exam.questions()
        .map(|(_, q)| q.clone())
        .filter(|q| q.kind == QuestionKind::OpenText)
        .collect()
}
