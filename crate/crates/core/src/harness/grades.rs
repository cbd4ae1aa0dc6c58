//! Expert grades and the consensus built from them.

use std::collections::BTreeMap;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub(crate) const EXPERT_GRADES: &str = "expert_grades";

pub const GRADE_COLUMNS: [&str; 5] = [
    "submission_id",
    "grader_id",
    "score",
    "breakdown",
    "graded_at",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertGrade {
    pub submission_id: String,
    pub grader_id: String,
    pub score: u32,
    /// Per-criterion awards; may be empty when the grader gave a total only.
    pub breakdown: Vec<u32>,
    pub graded_at: DateTime<Utc>,
}

impl ExpertGrade {
    pub(crate) fn key(&self) -> String {
        format!("{}~{}", self.submission_id, self.grader_id)
    }
}

/// One rejected row. `row` is the 1-based line number in the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub row: u64,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

/// Rows parsed from a grade file, before checking them against the store.
pub(crate) fn parse_grade_file(bytes: &[u8]) -> Result<Vec<(u64, ExpertGrade)>, Vec<RowError>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header_ok = match reader.headers() {
        Ok(h) => h.iter().eq(GRADE_COLUMNS.iter().copied()),
        Err(e) => {
            return Err(vec![RowError {
                row: 1,
                message: e.to_string(),
            }])
        }
    };
    if !header_ok {
        return Err(vec![RowError {
            row: 1,
            message: format!("header must be {}", GRADE_COLUMNS.join(",")),
        }]);
    }

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for rec in reader.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let row = e.position().map_or(0, |p| p.line());
                errors.push(RowError {
                    row,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let row = rec.position().map_or(0, |p| p.line());
        let mut fail = |m: String| errors.push(RowError { row, message: m });
        let field = |i: usize| rec.get(i).unwrap_or_default();
        if field(0).is_empty() || field(1).is_empty() {
            fail("submission_id and grader_id are required".into());
            continue;
        }
        let Ok(score) = u32::from_str(field(2)) else {
            fail(format!(
                "score {:?} is not a non-negative integer",
                field(2)
            ));
            continue;
        };
        let breakdown: Result<Vec<u32>, _> = if field(3).is_empty() {
            Ok(Vec::new())
        } else {
            field(3)
                .split(';')
                .map(|s| u32::from_str(s.trim()))
                .collect()
        };
        let Ok(breakdown) = breakdown else {
            fail(format!(
                "breakdown {:?} must be semicolon-joined integers",
                field(3)
            ));
            continue;
        };
        let graded_at = match DateTime::parse_from_rfc3339(field(4)) {
            Ok(t) => t.with_timezone(&Utc),
            Err(e) => {
                fail(format!("graded_at {:?}: {e}", field(4)));
                continue;
            }
        };
        rows.push((
            row,
            ExpertGrade {
                submission_id: field(0).to_string(),
                grader_id: field(1).to_string(),
                score,
                breakdown,
                graded_at,
            },
        ));
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusPolicy {
    /// The earliest grade; ties broken by grader id.
    Single,
    /// Mean, rounded half up.
    MeanRounded,
    /// Middle grade; for an even count the mean of the two middle grades,
    /// rounded half up.
    #[default]
    Median,
}

impl FromStr for ConsensusPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(ConsensusPolicy::Single),
            "mean_rounded" => Ok(ConsensusPolicy::MeanRounded),
            "median" => Ok(ConsensusPolicy::Median),
            _ => Err(format!(
                "unknown consensus policy {s:?} (single, mean_rounded, median)"
            )),
        }
    }
}

fn half_up(sum: u64, n: u64) -> u32 {
    ((2 * sum + n) / (2 * n)) as u32
}

/// Consensus over one submission's grades. `grades` must be non-empty.
pub fn consensus(policy: ConsensusPolicy, grades: &[ExpertGrade]) -> u32 {
    assert!(!grades.is_empty(), "consensus over no grades");
    match policy {
        ConsensusPolicy::Single => {
            grades
                .iter()
                .min_by(|a, b| {
                    a.graded_at
                        .cmp(&b.graded_at)
                        .then(a.grader_id.cmp(&b.grader_id))
                })
                .unwrap()
                .score
        }
        ConsensusPolicy::MeanRounded => {
            let sum: u64 = grades.iter().map(|g| u64::from(g.score)).sum();
            half_up(sum, grades.len() as u64)
        }
        ConsensusPolicy::Median => {
            let mut s: Vec<u32> = grades.iter().map(|g| g.score).collect();
            s.sort_unstable();
            let n = s.len();
            if n % 2 == 1 {
                s[n / 2]
            } else {
                half_up(u64::from(s[n / 2 - 1]) + u64::from(s[n / 2]), 2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub policy: ConsensusPolicy,
    /// submission_id → consensus score.
    pub consensus: BTreeMap<String, u32>,
    /// submission_id → (grader_id, score), sorted by grader.
    pub graders: BTreeMap<String, Vec<(String, u32)>>,
    /// Submissions with no grade at all.
    pub excluded: Vec<String>,
}

impl GroundTruth {
    pub fn is_empty(&self) -> bool {
        self.consensus.is_empty()
    }
}
