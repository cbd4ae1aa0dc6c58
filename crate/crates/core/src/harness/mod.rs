//! Offline evaluation against expert ground truth.
//!
//! Expert grades come in as delimited files and are reduced to one consensus
//! score per submission. A run replays a fixed set of submissions through a
//! fixed set of providers; every (submission, provider) pair is persisted as
//! soon as it finishes, so an interrupted run resumes where it stopped.
//! Agreement metrics and error analysis are pure functions of the stored
//! pairs and the ground truth.

mod grades;
pub mod metrics;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assessment::{build_prompt, query_model, BreakdownLine, Language, PromptDocument};
use crate::clock::Clock;
use crate::corpus::{Corpus, CorpusError, SchemeItem};
use crate::exec::{self, Execution};
use crate::gateway::Gateway;
use crate::session::{SessionError, Sessions};
use crate::store::{DocumentStore, Expect, JsonStore, StoreError};

pub use grades::{consensus, ConsensusPolicy, ExpertGrade, GroundTruth, RowError, GRADE_COLUMNS};
pub use metrics::Metrics;
pub use report::{ReportFormat, SUMMARY_COLUMNS};

use grades::{parse_grade_file, EXPERT_GRADES};

const EVAL_RUNS: &str = "eval_runs";
const EVAL_RESULTS: &str = "eval_results";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("grade file rejected: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    GradeValidation(Vec<RowError>),
    #[error("{0} not found")]
    NotFound(String),
    #[error("unknown provider {0}")]
    UnknownProvider(String),
    #[error("run {0} already exists with a different submission or provider set")]
    RunMismatch(String),
    #[error("no submission is both evaluated in run {0} and present in the ground truth")]
    EmptyIntersection(String),
    #[error("invalid run request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRun {
    pub run_id: String,
    /// Sorted, deduplicated.
    pub submission_ids: Vec<String>,
    /// Sorted, deduplicated.
    pub providers: Vec<String>,
    pub language: Language,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Ok,
    Failed,
    /// Not model-assessable: choice questions and empty answers.
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairResult {
    pub run_id: String,
    pub submission_id: String,
    pub exam_id: String,
    pub question_id: String,
    pub provider_id: String,
    pub model_name: String,
    pub status: PairStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<u32>,
    pub max_points: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakdown: Vec<BreakdownLine>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub explanation: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw_output: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub prompt_hash: String,
    /// Provider queries made for this pair in the invocation that settled it.
    pub calls: u32,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PairResult {
    pub fn source_id(&self) -> String {
        format!("{}/{}", self.provider_id, self.model_name)
    }
}

#[derive(Debug, Clone)]
pub struct EvalRequest {
    /// Derived from the submission and provider sets when absent.
    pub run_id: Option<String>,
    pub submission_ids: Vec<String>,
    pub providers: Vec<String>,
    pub concurrency: usize,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub n_pairs: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub n_excluded: usize,
    /// Pairs already settled before this invocation and not re-queried.
    pub n_skipped: usize,
    /// Pairs left untouched because the run was cancelled.
    pub n_unfinished: usize,
}

/// One scored pair joined with its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub submission_id: String,
    pub exam_id: String,
    pub question_id: String,
    pub source: String,
    pub model_score: u32,
    pub expert_score: u32,
    /// model − expert.
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAggregate {
    pub source: String,
    pub exam_id: String,
    pub question_id: String,
    pub n: usize,
    pub exact: usize,
    pub mean_abs_delta: f64,
    pub max_abs_delta: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    pub top: Vec<Disagreement>,
    pub per_question: Vec<QuestionAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderAgreement {
    pub source: String,
    pub provider_id: String,
    pub model_name: String,
    pub n: usize,
    #[serde(flatten)]
    pub metrics: Option<Metrics>,
    pub n_failed: usize,
    pub n_excluded: usize,
    /// Ok pairs whose submission has no ground truth.
    pub n_without_ground_truth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub run_id: String,
    pub policy: ConsensusPolicy,
    /// Upper end of the integer scale `[0, scale_max]` used for QWK.
    pub scale_max: u32,
    pub providers: Vec<ProviderAgreement>,
    pub flags: Vec<String>,
    pub error_analysis: ErrorAnalysis,
}

#[derive(Clone)]
pub struct Harness {
    store: Arc<dyn DocumentStore>,
    corpus: Corpus,
    sessions: Sessions,
    gateway: Arc<Gateway>,
    #[allow(dead_code)]
    clock: Arc<dyn Clock>,
}

/// Work prepared for one submission before fan-out.
enum Prepared {
    Excluded(&'static str),
    Prompt(PromptDocument, SchemeItem),
}

struct PairMeta {
    exam_id: String,
    question_id: String,
    max_points: u32,
    work: Prepared,
}

fn derived_run_id(submissions: &[String], providers: &[String], language: Language) -> String {
    let mut h = Sha256::new();
    for s in submissions {
        h.update(s.as_bytes());
        h.update([0]);
    }
    h.update([1]);
    for p in providers {
        h.update(p.as_bytes());
        h.update([0]);
    }
    h.update(language.to_string().as_bytes());
    format!("run-{}", &hex::encode(h.finalize())[..16])
}

fn pair_key(run_id: &str, submission_id: &str, provider_id: &str) -> String {
    format!("{run_id}~{submission_id}~{provider_id}")
}

impl Harness {
    pub fn new(
        store: Arc<dyn DocumentStore>,
        corpus: Corpus,
        sessions: Sessions,
        gateway: Arc<Gateway>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            store,
            corpus,
            sessions,
            gateway,
            clock,
        }
    }

    /// Validate and store a grade file. All rows or none.
    pub fn ingest_expert_grades(&self, bytes: &[u8]) -> Result<usize, HarnessError> {
        let rows = parse_grade_file(bytes).map_err(HarnessError::GradeValidation)?;
        let mut errors = Vec::new();
        let mut cache: BTreeMap<String, Option<SchemeItem>> = BTreeMap::new();
        for (row, g) in &rows {
            let item = match cache.get(&g.submission_id) {
                Some(i) => i.clone(),
                None => {
                    let item = match self.sessions.get_submission(&g.submission_id)? {
                        None => None,
                        Some(sub) => self
                            .corpus
                            .get_scheme(&sub.exam_id)?
                            .items
                            .get(&sub.question_id)
                            .cloned(),
                    };
                    cache.insert(g.submission_id.clone(), item.clone());
                    item
                }
            };
            let Some(item) = item else {
                errors.push(RowError {
                    row: *row,
                    message: format!("unknown submission {}", g.submission_id),
                });
                continue;
            };
            let max = item.total_points();
            if g.score > max {
                errors.push(RowError {
                    row: *row,
                    message: format!("score {} exceeds max_points {max}", g.score),
                });
                continue;
            }
            if !g.breakdown.is_empty() {
                let caps = item.criterion_points();
                if g.breakdown.len() != caps.len() {
                    errors.push(RowError {
                        row: *row,
                        message: format!(
                            "breakdown has {} entries, scheme has {} criteria",
                            g.breakdown.len(),
                            caps.len()
                        ),
                    });
                } else if let Some(i) = (0..caps.len()).find(|&i| g.breakdown[i] > caps[i]) {
                    errors.push(RowError {
                        row: *row,
                        message: format!(
                            "breakdown entry {} is {} but the criterion is worth {}",
                            i + 1,
                            g.breakdown[i],
                            caps[i]
                        ),
                    });
                } else if g.breakdown.iter().sum::<u32>() != g.score {
                    errors.push(RowError {
                        row: *row,
                        message: format!(
                            "breakdown sums to {}, score is {}",
                            g.breakdown.iter().sum::<u32>(),
                            g.score
                        ),
                    });
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (row, g) in &rows {
            if !seen.insert(g.key()) {
                errors.push(RowError {
                    row: *row,
                    message: format!("duplicate grade by {} for {}", g.grader_id, g.submission_id),
                });
            }
        }
        if !errors.is_empty() {
            errors.sort_by_key(|e| e.row);
            return Err(HarnessError::GradeValidation(errors));
        }
        for (_, g) in &rows {
            self.store
                .put_json(EXPERT_GRADES, &g.key(), g, Expect::Any)?;
        }
        Ok(rows.len())
    }

    pub fn expert_grades(&self) -> Result<Vec<ExpertGrade>, HarnessError> {
        Ok(self
            .store
            .list_json::<ExpertGrade>(EXPERT_GRADES)?
            .into_iter()
            .map(|(_, _, g)| g)
            .collect())
    }

    pub fn build_ground_truth(&self, policy: ConsensusPolicy) -> Result<GroundTruth, HarnessError> {
        let mut by_sub: BTreeMap<String, Vec<ExpertGrade>> = BTreeMap::new();
        for g in self.expert_grades()? {
            by_sub.entry(g.submission_id.clone()).or_default().push(g);
        }
        let mut consensus_map = BTreeMap::new();
        let mut graders = BTreeMap::new();
        for (sid, gs) in &by_sub {
            consensus_map.insert(sid.clone(), consensus(policy, gs));
            let mut list: Vec<(String, u32)> =
                gs.iter().map(|g| (g.grader_id.clone(), g.score)).collect();
            list.sort();
            graders.insert(sid.clone(), list);
        }
        let excluded = self
            .sessions
            .all_submissions()?
            .into_iter()
            .map(|s| s.submission_id)
            .filter(|id| !by_sub.contains_key(id))
            .collect();
        Ok(GroundTruth {
            policy,
            consensus: consensus_map,
            graders,
            excluded,
        })
    }

    pub fn get_run(&self, run_id: &str) -> Result<EvalRun, HarnessError> {
        self.store
            .get_json::<EvalRun>(EVAL_RUNS, run_id)?
            .map(|(_, r)| r)
            .ok_or_else(|| HarnessError::NotFound(format!("run {run_id}")))
    }

    pub fn list_runs(&self) -> Result<Vec<EvalRun>, HarnessError> {
        Ok(self
            .store
            .list_json::<EvalRun>(EVAL_RUNS)?
            .into_iter()
            .map(|(_, _, r)| r)
            .collect())
    }

    /// Stored pair results of a run, ordered by submission then provider.
    pub fn run_results(&self, run_id: &str) -> Result<Vec<PairResult>, HarnessError> {
        let run = self.get_run(run_id)?;
        let mut out = Vec::new();
        for sid in &run.submission_ids {
            for pid in &run.providers {
                if let Some((_, r)) = self
                    .store
                    .get_json::<PairResult>(EVAL_RESULTS, &pair_key(run_id, sid, pid))?
                {
                    out.push(r);
                }
            }
        }
        Ok(out)
    }

    fn open_run(&self, req: &EvalRequest) -> Result<EvalRun, HarnessError> {
        let submissions: Vec<String> = req
            .submission_ids
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let providers: Vec<String> = req
            .providers
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if submissions.is_empty() || providers.is_empty() {
            return Err(HarnessError::InvalidRequest(
                "a run needs at least one submission and one provider".into(),
            ));
        }
        if let Some(p) = providers
            .iter()
            .find(|p| self.gateway.provider_config(p).is_none())
        {
            return Err(HarnessError::UnknownProvider(p.clone()));
        }
        for s in &submissions {
            if self.sessions.get_submission(s)?.is_none() {
                return Err(HarnessError::NotFound(format!("submission {s}")));
            }
        }
        let run_id = req
            .run_id
            .clone()
            .unwrap_or_else(|| derived_run_id(&submissions, &providers, req.language));
        if run_id.is_empty() || run_id.contains('~') {
            return Err(HarnessError::InvalidRequest(format!(
                "bad run id {run_id:?}"
            )));
        }
        let run = EvalRun {
            run_id: run_id.clone(),
            submission_ids: submissions,
            providers,
            language: req.language,
        };
        match self
            .store
            .put_json(EVAL_RUNS, &run_id, &run, Expect::Absent)
        {
            Ok(_) => Ok(run),
            Err(e) if e.is_conflict() => {
                let existing = self.get_run(&run_id)?;
                if existing == run {
                    Ok(existing)
                } else {
                    Err(HarnessError::RunMismatch(run_id))
                }
            }
            Err(e) => Err(e.into()),
        }
    }

    fn prepare(&self, submission_id: &str, language: Language) -> Result<PairMeta, HarnessError> {
        let sub = self
            .sessions
            .get_submission(submission_id)?
            .ok_or_else(|| HarnessError::NotFound(format!("submission {submission_id}")))?;
        let record = self.corpus.get_record(&sub.exam_id)?;
        let question = record
            .exam
            .question(&sub.question_id)
            .ok_or_else(|| HarnessError::NotFound(format!("question {}", sub.question_id)))?;
        let item =
            record.scheme.items.get(&sub.question_id).ok_or_else(|| {
                HarnessError::NotFound(format!("scheme item {}", sub.question_id))
            })?;
        let work = if question.kind.is_choice() {
            Prepared::Excluded("choice question, scored deterministically")
        } else {
            match sub.payload() {
                Some(p) if !p.is_blank() => match build_prompt(question, p, item, language) {
                    Ok(prompt) => Prepared::Prompt(prompt, item.clone()),
                    Err(_) => Prepared::Excluded("answer does not match the question kind"),
                },
                _ => Prepared::Excluded("empty answer"),
            }
        };
        Ok(PairMeta {
            exam_id: sub.exam_id,
            question_id: sub.question_id,
            max_points: question.max_points,
            work,
        })
    }

    /// Run or resume an evaluation. Settled pairs (ok or excluded) are never
    /// re-queried; failed ones are retried. Setting `cancel` stops new pairs
    /// from starting; in-flight pairs finish and are stored.
    pub fn run_offline_eval(
        &self,
        req: &EvalRequest,
        cancel: &AtomicBool,
    ) -> Result<RunSummary, HarnessError> {
        let run = self.open_run(req)?;
        let mut metas = BTreeMap::new();
        for sid in &run.submission_ids {
            metas.insert(sid.clone(), self.prepare(sid, run.language)?);
        }

        let mut todo = Vec::new();
        let mut settled = Vec::new();
        for sid in &run.submission_ids {
            for pid in &run.providers {
                let existing = self
                    .store
                    .get_json::<PairResult>(EVAL_RESULTS, &pair_key(&run.run_id, sid, pid))?
                    .map(|(_, r)| r);
                match existing {
                    Some(r) if r.status != PairStatus::Failed => settled.push(r),
                    _ => todo.push((sid.clone(), pid.clone())),
                }
            }
        }
        let n_skipped = settled.len();

        let exec = Execution::bounded(req.concurrency);
        let outcomes = exec::map(
            &todo,
            exec,
            |(sid, pid)| -> Result<Option<PairResult>, StoreError> {
                if cancel.load(Ordering::SeqCst) {
                    return Ok(None);
                }
                let meta = &metas[sid];
                let model_name = self
                    .gateway
                    .provider_config(pid)
                    .map(|c| c.model_name)
                    .unwrap_or_default();
                let mut r = PairResult {
                    run_id: run.run_id.clone(),
                    submission_id: sid.clone(),
                    exam_id: meta.exam_id.clone(),
                    question_id: meta.question_id.clone(),
                    provider_id: pid.clone(),
                    model_name,
                    status: PairStatus::Excluded,
                    score: None,
                    max_points: meta.max_points,
                    breakdown: Vec::new(),
                    explanation: String::new(),
                    raw_output: String::new(),
                    prompt_hash: String::new(),
                    calls: 0,
                    latency_ms: 0,
                    note: None,
                };
                match &meta.work {
                    Prepared::Excluded(why) => r.note = Some(why.to_string()),
                    Prepared::Prompt(prompt, item) => {
                        r.prompt_hash = prompt.hash();
                        match query_model(&self.gateway, pid, prompt, item) {
                            Ok((a, rec, calls)) => {
                                r.status = PairStatus::Ok;
                                r.score = Some(a.score);
                                r.breakdown = a.breakdown;
                                r.explanation = a.explanation;
                                r.raw_output = rec.raw_output;
                                r.latency_ms = rec.latency_ms;
                                r.calls = calls;
                                if !a.warnings.is_empty() {
                                    r.note = Some(a.warnings.join("; "));
                                }
                            }
                            Err(f) => {
                                r.status = PairStatus::Failed;
                                r.raw_output = f.raw_output.unwrap_or_default();
                                r.calls = f.calls;
                                r.note = Some(f.reason);
                            }
                        }
                    }
                }
                self.store.put_json(
                    EVAL_RESULTS,
                    &pair_key(&run.run_id, sid, pid),
                    &r,
                    Expect::Any,
                )?;
                Ok(Some(r))
            },
        );

        let mut summary = RunSummary {
            run_id: run.run_id.clone(),
            n_pairs: run.submission_ids.len() * run.providers.len(),
            n_ok: 0,
            n_failed: 0,
            n_excluded: 0,
            n_skipped,
            n_unfinished: 0,
        };
        let mut count = |r: &PairResult| match r.status {
            PairStatus::Ok => summary.n_ok += 1,
            PairStatus::Failed => summary.n_failed += 1,
            PairStatus::Excluded => summary.n_excluded += 1,
        };
        settled.iter().for_each(&mut count);
        let mut unfinished = 0;
        for o in outcomes {
            match o? {
                Some(r) => count(&r),
                None => unfinished += 1,
            }
        }
        summary.n_unfinished = unfinished;
        Ok(summary)
    }

    fn joined(
        &self,
        run_id: &str,
        truth: &GroundTruth,
    ) -> Result<(Vec<PairResult>, Vec<Disagreement>), HarnessError> {
        let results = self.run_results(run_id)?;
        let joined = results
            .iter()
            .filter(|r| r.status == PairStatus::Ok)
            .filter_map(|r| {
                let expert = *truth.consensus.get(&r.submission_id)?;
                let model = r.score?;
                Some(Disagreement {
                    submission_id: r.submission_id.clone(),
                    exam_id: r.exam_id.clone(),
                    question_id: r.question_id.clone(),
                    source: r.source_id(),
                    model_score: model,
                    expert_score: expert,
                    delta: i64::from(model) - i64::from(expert),
                })
            })
            .collect();
        Ok((results, joined))
    }

    pub fn compute_agreement(
        &self,
        run_id: &str,
        truth: &GroundTruth,
        top_k: usize,
    ) -> Result<AgreementReport, HarnessError> {
        let run = self.get_run(run_id)?;
        let (results, joined) = self.joined(run_id, truth)?;
        if joined.is_empty() {
            return Err(HarnessError::EmptyIntersection(run_id.to_string()));
        }
        let scale_max = results
            .iter()
            .filter(|r| {
                r.status == PairStatus::Ok && truth.consensus.contains_key(&r.submission_id)
            })
            .map(|r| r.max_points)
            .max()
            .unwrap_or(0);

        let mut providers = Vec::new();
        let mut flags = Vec::new();
        for pid in &run.providers {
            let mine: Vec<&PairResult> = results.iter().filter(|r| &r.provider_id == pid).collect();
            let model_name = mine
                .first()
                .map(|r| r.model_name.clone())
                .or_else(|| self.gateway.provider_config(pid).map(|c| c.model_name))
                .unwrap_or_default();
            let source = format!("{pid}/{model_name}");
            let pairs: Vec<(u32, u32)> = joined
                .iter()
                .filter(|d| d.source == source)
                .map(|d| (d.model_score, d.expert_score))
                .collect();
            let m = metrics::compute(&pairs);
            if m.as_ref().is_some_and(|m| m.qwk_degenerate) {
                flags.push(format!("{source}: qwk_degenerate"));
            }
            let n_ok = mine.iter().filter(|r| r.status == PairStatus::Ok).count();
            providers.push(ProviderAgreement {
                source,
                provider_id: pid.clone(),
                model_name,
                n: pairs.len(),
                metrics: m,
                n_failed: mine
                    .iter()
                    .filter(|r| r.status == PairStatus::Failed)
                    .count(),
                n_excluded: mine
                    .iter()
                    .filter(|r| r.status == PairStatus::Excluded)
                    .count(),
                n_without_ground_truth: n_ok - pairs.len(),
            });
        }
        Ok(AgreementReport {
            run_id: run_id.to_string(),
            policy: truth.policy,
            scale_max,
            providers,
            flags,
            error_analysis: analyse(joined, top_k),
        })
    }

    pub fn error_analysis(
        &self,
        run_id: &str,
        truth: &GroundTruth,
        top_k: usize,
    ) -> Result<ErrorAnalysis, HarnessError> {
        self.get_run(run_id)?;
        let (_, joined) = self.joined(run_id, truth)?;
        Ok(analyse(joined, top_k))
    }
}

/// Top-k disagreements by |Δ| desc, then submission id, then source; plus
/// per-question aggregates.
fn analyse(joined: Vec<Disagreement>, top_k: usize) -> ErrorAnalysis {
    let mut per: BTreeMap<(String, String, String), Vec<u64>> = BTreeMap::new();
    for d in &joined {
        per.entry((d.source.clone(), d.exam_id.clone(), d.question_id.clone()))
            .or_default()
            .push(d.delta.unsigned_abs());
    }
    let per_question = per
        .into_iter()
        .map(
            |((source, exam_id, question_id), deltas)| QuestionAggregate {
                source,
                exam_id,
                question_id,
                n: deltas.len(),
                exact: deltas.iter().filter(|&&d| d == 0).count(),
                mean_abs_delta: deltas.iter().sum::<u64>() as f64 / deltas.len() as f64,
                max_abs_delta: deltas.iter().copied().max().unwrap_or(0),
            },
        )
        .collect();
    let mut top: Vec<Disagreement> = joined.into_iter().filter(|d| d.delta != 0).collect();
    top.sort_by(|a, b| {
        b.delta
            .unsigned_abs()
            .cmp(&a.delta.unsigned_abs())
            .then_with(|| a.submission_id.cmp(&b.submission_id))
            .then_with(|| a.source.cmp(&b.source))
    });
    top.truncate(top_k);
    ErrorAnalysis { top, per_question }
}
