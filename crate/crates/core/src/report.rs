//! Markdown and CSV renderings of a [`ResultTable`].
//!
//! The markdown table has a `Model` column followed by one column per
//! dataset; rows are the prompt variants, then `baseline`, then reference
//! models, then `Improvement`. Scores are shown with two decimals.
//!
//! The CSV is a long-format mirror that parses back into an equal table:
//! `kind,variant,dataset,metric,value,note`, where `kind` is one of
//! `result`, `reference`, `failure` or `improvement`, and `value` uses the
//! shortest representation that round-trips the `f64`.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{CellFailure, Metric, ReferenceRow, ResultRow, ResultTable, BASELINE};
use crate::store::CacheStats;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("CSV record {record}: {message}")]
    Format { record: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// SHA-256 of the experiment configuration bytes.
    pub config_digest: String,
    pub chat_provider: String,
    pub embed_provider: String,
    pub cache: CacheStats,
    pub fallback_count: usize,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub result_table: ResultTable,
    pub run_metadata: Option<RunMetadata>,
    pub markdown: String,
    pub csv: String,
}

impl ReportDocument {
    pub fn new(table: ResultTable, metadata: Option<RunMetadata>) -> Self {
        Self {
            markdown: render_markdown(&table),
            csv: render_csv(&table),
            result_table: table,
            run_metadata: metadata,
        }
    }
}

pub fn render_report(table: &ResultTable) -> ReportDocument {
    ReportDocument::new(table.clone(), None)
}

fn cell(score: Option<f64>, failed: bool) -> String {
    match (score, failed) {
        (Some(s), _) => format!("{s:.2}"),
        (None, true) => "FAILED".to_owned(),
        (None, false) => "n/a".to_owned(),
    }
}

pub fn render_markdown(table: &ResultTable) -> String {
    let datasets = table.datasets();
    let mut lines = Vec::new();
    let header: Vec<&str> = std::iter::once("Model")
        .chain(datasets.iter().map(String::as_str))
        .collect();
    lines.push(format!("| {} |", header.join(" | ")));
    lines.push(format!("|{}", "---|".repeat(header.len())));

    let failed = |v: &str, d: &str| {
        table
            .failures
            .iter()
            .any(|f| f.variant_id == v && f.dataset == d)
    };
    let mut variants: Vec<String> = table
        .variants()
        .into_iter()
        .filter(|v| v != BASELINE)
        .collect();
    for f in &table.failures {
        if f.variant_id != BASELINE && !variants.contains(&f.variant_id) {
            variants.push(f.variant_id.clone());
        }
    }
    let has_baseline = table.rows.iter().any(|r| r.variant_id == BASELINE)
        || table.failures.iter().any(|f| f.variant_id == BASELINE);
    if has_baseline {
        variants.push(BASELINE.to_owned());
    }
    for v in &variants {
        let cells: Vec<String> = datasets
            .iter()
            .map(|d| cell(table.score(v, d), failed(v, d)))
            .collect();
        lines.push(format!("| {v} | {} |", cells.join(" | ")));
    }
    for model in table.reference_models() {
        let cells: Vec<String> = datasets
            .iter()
            .map(|d| {
                let s = table
                    .references
                    .iter()
                    .find(|r| r.model == model && &r.dataset == d)
                    .map(|r| r.score);
                cell(s, false)
            })
            .collect();
        lines.push(format!("| {model} | {} |", cells.join(" | ")));
    }
    if !table.improvement.is_empty() {
        let cells: Vec<String> = datasets
            .iter()
            .map(|d| cell(table.improvement_for(d), false))
            .collect();
        lines.push(format!("| Improvement | {} |", cells.join(" | ")));
    }
    lines.join("\n") + "\n"
}

const CSV_HEADER: [&str; 6] = ["kind", "variant", "dataset", "metric", "value", "note"];

pub fn render_csv(table: &ResultTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut write = |rec: [&str; 6]| w.write_record(rec).expect("writing CSV to memory");
    write(CSV_HEADER);
    for r in &table.rows {
        write([
            "result",
            &r.variant_id,
            &r.dataset,
            r.metric.as_str(),
            &r.score.to_string(),
            "",
        ]);
    }
    for r in &table.references {
        write([
            "reference",
            &r.model,
            &r.dataset,
            r.metric.as_str(),
            &r.score.to_string(),
            "",
        ]);
    }
    for f in &table.failures {
        write(["failure", &f.variant_id, &f.dataset, "", "", &f.error]);
    }
    for i in &table.improvement {
        let metric = table
            .metric_for(&i.dataset)
            .map(Metric::as_str)
            .unwrap_or("");
        write([
            "improvement",
            &i.best_variant,
            &i.dataset,
            metric,
            &i.value.to_string(),
            "",
        ]);
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

pub fn parse_csv(text: &str) -> Result<ResultTable, ReportError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(ReportError::Format {
            record: 0,
            message: format!("unexpected header {headers:?}"),
        });
    }
    let mut rows = Vec::new();
    let mut references = Vec::new();
    let mut failures = Vec::new();
    let mut improvements = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let record = i + 1;
        let bad = |message: String| ReportError::Format { record, message };
        let field = |n: usize| rec.get(n).unwrap_or("");
        let metric =
            || Metric::parse(field(3)).ok_or_else(|| bad(format!("unknown metric {:?}", field(3))));
        let value = || {
            field(4)
                .parse::<f64>()
                .map_err(|e| bad(format!("bad value {:?}: {e}", field(4))))
        };
        match field(0) {
            "result" => rows.push(ResultRow {
                variant_id: field(1).to_owned(),
                dataset: field(2).to_owned(),
                metric: metric()?,
                score: value()?,
            }),
            "reference" => references.push(ReferenceRow {
                model: field(1).to_owned(),
                dataset: field(2).to_owned(),
                metric: metric()?,
                score: value()?,
            }),
            "failure" => failures.push(CellFailure {
                variant_id: field(1).to_owned(),
                dataset: field(2).to_owned(),
                error: field(5).to_owned(),
            }),
            "improvement" => improvements.push((field(2).to_owned(), value()?)),
            other => return Err(bad(format!("unknown kind {other:?}"))),
        }
    }
    let table = ResultTable::new(rows, references, failures);
    let derived: Vec<(String, f64)> = table
        .improvement
        .iter()
        .map(|i| (i.dataset.clone(), i.value))
        .collect();
    if derived != improvements {
        return Err(ReportError::Format {
            record: 0,
            message: "improvement rows disagree with the result rows".into(),
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_table_markdown() {
        let md = render_markdown(&ResultTable::published());
        let expected = "\
| Model | B77C | TwitterSemEval | AmazonCF |
|---|---|---|---|
| paper-1 | 82.24 | 84.84 | 68.90 |
| paper-2 | 78.73 | 82.95 | 71.90 |
| paper-3 | 75.50 | 83.10 | 76.20 |
| paper-4 | 79.71 | 85.34 | 68.00 |
| baseline | 85.69 | 77.13 | 78.93 |
| SFR-Embedding-Mistral | 88.81 | 81.52 | 77.93 |
| Improvement | -3.45 | 8.21 | -2.73 |
";
        assert_eq!(md, expected);
    }

    #[test]
    fn single_row_markdown() {
        let table = ResultTable::new(
            vec![ResultRow {
                variant_id: "paper-1".into(),
                dataset: "d".into(),
                metric: Metric::CosineAp,
                score: 12.345,
            }],
            vec![],
            vec![],
        );
        assert_eq!(
            render_markdown(&table),
            "| Model | d |\n|---|---|\n| paper-1 | 12.35 |\n"
        );
    }

    #[test]
    fn failures_are_marked() {
        let table = ResultTable::new(
            vec![ResultRow {
                variant_id: BASELINE.into(),
                dataset: "d".into(),
                metric: Metric::Accuracy,
                score: 50.0,
            }],
            vec![],
            vec![CellFailure {
                variant_id: "paper-2".into(),
                dataset: "d".into(),
                error: "HTTP 500, \"boom\"".into(),
            }],
        );
        let md = render_markdown(&table);
        assert!(md.contains("| paper-2 | FAILED |"), "{md}");
        assert_eq!(parse_csv(&render_csv(&table)).unwrap(), table);
    }

    #[test]
    fn csv_round_trip() {
        let table = ResultTable::published();
        assert_eq!(parse_csv(&render_csv(&table)).unwrap(), table);
        let mut odd = table.clone();
        odd.rows[0].score = 0.1 + 0.2;
        let odd = ResultTable::new(odd.rows, odd.references, vec![]);
        assert_eq!(parse_csv(&render_csv(&odd)).unwrap(), odd);
    }

    #[test]
    fn csv_rejects_tampering() {
        let csv = render_csv(&ResultTable::published()).replace(
            "improvement,paper-4,TwitterSemEval,cosine_ap,8.21",
            "improvement,paper-4,TwitterSemEval,cosine_ap,9.99",
        );
        assert!(parse_csv(&csv).is_err());
        assert!(parse_csv("a,b\n1,2\n").is_err());
    }
}
