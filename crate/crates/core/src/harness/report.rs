use std::str::FromStr;

use super::AgreementReport;

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "source",
    "provider_id",
    "model_name",
    "n",
    "exact_agreement",
    "mae",
    "rmse",
    "qwk",
    "qwk_degenerate",
    "n_failed",
    "n_excluded",
    "n_without_ground_truth",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    /// One summary row per provider.
    Delimited,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "delimited" | "csv" => Ok(ReportFormat::Delimited),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!(
                "unknown report format {s:?} (text, delimited, json)"
            )),
        }
    }
}

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

impl AgreementReport {
    /// Byte-deterministic for a fixed report.
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            ReportFormat::Delimited => self.render_delimited(),
            ReportFormat::Text => self.render_text(),
        }
    }

    fn render_delimited(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SUMMARY_COLUMNS).expect("in-memory write");
        for p in &self.providers {
            let (ea, mae, rmse, qwk, deg) = match &p.metrics {
                Some(m) => (
                    fixed(m.exact_agreement),
                    fixed(m.mae),
                    fixed(m.rmse),
                    fixed(m.qwk),
                    m.qwk_degenerate.to_string(),
                ),
                None => Default::default(),
            };
            w.write_record([
                p.source.clone(),
                p.provider_id.clone(),
                p.model_name.clone(),
                p.n.to_string(),
                ea,
                mae,
                rmse,
                qwk,
                deg,
                p.n_failed.to_string(),
                p.n_excluded.to_string(),
                p.n_without_ground_truth.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    fn render_text(&self) -> String {
        let mut out = format!(
            "Agreement report for run {}\nConsensus policy: {}\nScore scale: 0..={}\n\n",
            self.run_id,
            serde_json::to_value(self.policy)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            self.scale_max
        );
        for p in &self.providers {
            out.push_str(&format!("{}\n", p.source));
            match &p.metrics {
                Some(m) => out.push_str(&format!(
                    "  n={}  exact={}  mae={}  rmse={}  qwk={}{}\n",
                    m.n,
                    fixed(m.exact_agreement),
                    fixed(m.mae),
                    fixed(m.rmse),
                    fixed(m.qwk),
                    if m.qwk_degenerate {
                        " (degenerate)"
                    } else {
                        ""
                    }
                )),
                None => out.push_str("  n=0  no scored pairs with ground truth\n"),
            }
            out.push_str(&format!(
                "  failed={}  excluded={}  without ground truth={}\n",
                p.n_failed, p.n_excluded, p.n_without_ground_truth
            ));
        }
        if !self.flags.is_empty() {
            out.push_str("\nFlags:\n");
            for f in &self.flags {
                out.push_str(&format!("  {f}\n"));
            }
        }
        out.push_str("\nLargest disagreements (model - expert):\n");
        if self.error_analysis.top.is_empty() {
            out.push_str("  none\n");
        }
        for d in &self.error_analysis.top {
            out.push_str(&format!(
                "  {:+}  {}  {} {}  model {} / expert {}  [{}]\n",
                d.delta,
                d.submission_id,
                d.exam_id,
                d.question_id,
                d.model_score,
                d.expert_score,
                d.source
            ));
        }
        out.push_str("\nPer question:\n");
        for q in &self.error_analysis.per_question {
            out.push_str(&format!(
                "  {} {}  n={} exact={} mean|d|={} max|d|={}  [{}]\n",
                q.exam_id,
                q.question_id,
                q.n,
                q.exact,
                fixed(q.mean_abs_delta),
                q.max_abs_delta,
                q.source
            ));
        }
        out
    }
}
