//! One error type across modules, each case carrying a stable
//! machine-readable tag.

use crate::assessment::AssessmentError;
use crate::corpus::CorpusError;
use crate::dataset::DatasetError;
use crate::gateway::GatewayError;
use crate::harness::HarnessError;
use crate::session::SessionError;
use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("admin principal required")]
    Forbidden,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Assessment(#[from] AssessmentError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Every tag [`Error::tag`] can return.
pub const ALL_TAGS: &[&str] = &[
    "forbidden",
    "parse_error",
    "validation_error",
    "conflict",
    "not_found",
    "invalid_email",
    "version_conflict",
    "session_closed",
    "invalid_answer",
    "not_submitted",
    "kind_mismatch",
    "unparseable_output",
    "assessment_unavailable",
    "duplicate_provider",
    "invalid_config",
    "unknown_provider",
    "rate_budget_exhausted",
    "provider_error",
    "run_mismatch",
    "empty_intersection",
    "invalid_request",
    "store_error",
];

fn store_tag(e: &StoreError) -> &'static str {
    match e {
        StoreError::Conflict { .. } => "conflict",
        _ => "store_error",
    }
}

fn corpus_tag(e: &CorpusError) -> &'static str {
    match e {
        CorpusError::Parse(_) => "parse_error",
        CorpusError::Validation(_) => "validation_error",
        CorpusError::Conflict(_) => "conflict",
        CorpusError::NotFound(_) => "not_found",
        CorpusError::Store(s) => store_tag(s),
    }
}

fn session_tag(e: &SessionError) -> &'static str {
    match e {
        SessionError::InvalidEmail => "invalid_email",
        SessionError::NotFound(_) => "not_found",
        SessionError::VersionConflict { .. } => "version_conflict",
        SessionError::SessionClosed(_) => "session_closed",
        SessionError::InvalidAnswer(_) => "invalid_answer",
        SessionError::NotSubmitted(_) => "not_submitted",
        SessionError::Corpus(c) => corpus_tag(c),
        SessionError::Store(s) => store_tag(s),
    }
}

impl Error {
    /// Field- or row-level messages behind a validation failure.
    pub fn details(&self) -> Vec<String> {
        let corpus = |e: &CorpusError| match e {
            CorpusError::Validation(v) => v.iter().map(|v| v.to_string()).collect(),
            _ => Vec::new(),
        };
        match self {
            Error::Corpus(e) => corpus(e),
            Error::Harness(HarnessError::GradeValidation(rows)) => {
                rows.iter().map(|r| r.to_string()).collect()
            }
            Error::Harness(HarnessError::Corpus(e)) => corpus(e),
            _ => Vec::new(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Error::Forbidden => "forbidden",
            Error::Corpus(e) => corpus_tag(e),
            Error::Session(e) => session_tag(e),
            Error::Assessment(e) => match e {
                AssessmentError::KindMismatch(_) => "kind_mismatch",
                AssessmentError::UnparseableOutput(_) => "unparseable_output",
                AssessmentError::Unavailable { .. } => "assessment_unavailable",
                AssessmentError::NotFound(_) => "not_found",
                AssessmentError::NotSubmitted(_) => "not_submitted",
                AssessmentError::Session(s) => session_tag(s),
                AssessmentError::Corpus(c) => corpus_tag(c),
                AssessmentError::Store(s) => store_tag(s),
            },
            Error::Gateway(e) => match e {
                GatewayError::DuplicateProvider(_) => "duplicate_provider",
                GatewayError::InvalidConfig(_) => "invalid_config",
                GatewayError::UnknownProvider(_) => "unknown_provider",
                GatewayError::RateBudgetExhausted { .. } => "rate_budget_exhausted",
                GatewayError::Provider { .. } => "provider_error",
            },
            Error::Harness(e) => match e {
                HarnessError::GradeValidation(_) => "validation_error",
                HarnessError::NotFound(_) => "not_found",
                HarnessError::UnknownProvider(_) => "unknown_provider",
                HarnessError::RunMismatch(_) => "run_mismatch",
                HarnessError::EmptyIntersection(_) => "empty_intersection",
                HarnessError::InvalidRequest(_) => "invalid_request",
                HarnessError::Session(s) => session_tag(s),
                HarnessError::Corpus(c) => corpus_tag(c),
                HarnessError::Store(s) => store_tag(s),
            },
            Error::Dataset(e) => match e {
                DatasetError::Malformed { .. } => "parse_error",
                DatasetError::Mismatch { .. } => "conflict",
                DatasetError::Session(s) => session_tag(s),
                DatasetError::Corpus(c) => corpus_tag(c),
                DatasetError::Store(s) => store_tag(s),
            },
            Error::Store(e) => store_tag(e),
        }
    }
}
