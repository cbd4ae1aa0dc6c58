//! Score-block grammar for model output.
//!
//! ```text
//! ===SCORE===
//! 1: 3
//! 2: 2
//! 3: 0
//! TOTAL: 5
//! ===END===
//! ```
//!
//! One line per criterion, indices 1..=n in order. Leading and trailing
//! whitespace on each line is ignored; any other deviation invalidates the
//! block. Prose before and after is the explanation. When several valid
//! blocks appear, the last one counts.

use crate::corpus::SchemeItem;

use super::{Assessment, AssessmentError, BreakdownLine};

pub const SCORE_OPEN: &str = "===SCORE===";
pub const SCORE_CLOSE: &str = "===END===";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreBlock {
    pub awards: Vec<i64>,
    pub total: i64,
    /// Line range `[start, end]` of the block in the input, inclusive.
    pub lines: (usize, usize),
}

fn parse_int(s: &str) -> Option<i64> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn try_block(lines: &[&str], start: usize) -> Option<ScoreBlock> {
    let mut awards = Vec::new();
    let mut i = start + 1;
    loop {
        let line = lines.get(i)?.trim();
        if let Some(total) = line.strip_prefix("TOTAL: ") {
            let total = parse_int(total)?;
            if lines.get(i + 1)?.trim() != SCORE_CLOSE {
                return None;
            }
            return Some(ScoreBlock {
                awards,
                total,
                lines: (start, i + 1),
            });
        }
        let (idx, value) = line.split_once(": ")?;
        let idx = idx
            .parse::<usize>()
            .ok()
            .filter(|_| idx.bytes().all(|b| b.is_ascii_digit()))?;
        if idx != awards.len() + 1 {
            return None;
        }
        awards.push(parse_int(value)?);
        i += 1;
    }
}

/// The last well-formed score block in `raw`, if any.
pub fn find_score_block(raw: &str) -> Option<ScoreBlock> {
    let lines: Vec<&str> = raw.lines().collect();
    (0..lines.len())
        .rev()
        .filter(|&i| lines[i].trim() == SCORE_OPEN)
        .find_map(|i| try_block(&lines, i))
}

pub fn emit_score_block(awards: &[i64], total: i64) -> String {
    let mut out = String::from(SCORE_OPEN);
    out.push('\n');
    for (i, a) in awards.iter().enumerate() {
        out.push_str(&format!("{}: {a}\n", i + 1));
    }
    out.push_str(&format!("TOTAL: {total}\n{SCORE_CLOSE}"));
    out
}

fn criterion_labels(item: &SchemeItem) -> Vec<(String, u32)> {
    match item {
        SchemeItem::OpenText { criteria } => criteria
            .iter()
            .map(|c| (c.text.clone(), c.points))
            .collect(),
        SchemeItem::Choice {
            correct_options,
            points,
        } => {
            let labels: Vec<&str> = correct_options.iter().map(String::as_str).collect();
            vec![(format!("correct option(s): {}", labels.join(", ")), *points)]
        }
    }
}

/// Extract, clamp and total a model's awards. Out-of-range awards are
/// clamped into `[0, criterion points]` with a warning rather than rejected.
pub fn parse_assessment(raw: &str, item: &SchemeItem) -> Result<Assessment, AssessmentError> {
    let criteria = criterion_labels(item);
    let block = find_score_block(raw)
        .ok_or_else(|| AssessmentError::UnparseableOutput("no valid score block".to_string()))?;
    if block.awards.len() != criteria.len() {
        return Err(AssessmentError::UnparseableOutput(format!(
            "score block has {} criterion lines, scheme has {}",
            block.awards.len(),
            criteria.len()
        )));
    }

    let mut warnings = Vec::new();
    let mut breakdown = Vec::with_capacity(criteria.len());
    for (i, ((label, possible), &raw_award)) in criteria.into_iter().zip(&block.awards).enumerate()
    {
        let awarded = raw_award.clamp(0, i64::from(possible)) as u32;
        if i64::from(awarded) != raw_award {
            warnings.push(format!(
                "criterion {}: award {raw_award} outside [0, {possible}], clamped to {awarded}",
                i + 1
            ));
        }
        breakdown.push(BreakdownLine {
            label,
            awarded,
            possible,
        });
    }
    let raw_sum: i128 = block.awards.iter().map(|&a| i128::from(a)).sum();
    if raw_sum != i128::from(block.total) {
        warnings.push(format!(
            "stated TOTAL {} differs from criterion sum {raw_sum}",
            block.total
        ));
    }
    let score = breakdown.iter().map(|b| b.awarded).sum();

    let lines: Vec<&str> = raw.lines().collect();
    let (a, b) = block.lines;
    let before = lines[..a].join("\n");
    let after = lines[b + 1..].join("\n");
    let explanation = format!("{}\n{}", before.trim(), after.trim())
        .trim()
        .to_string();

    Ok(Assessment {
        score,
        breakdown,
        explanation,
        warnings,
    })
}
