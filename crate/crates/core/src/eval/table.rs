use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Variant id of the no-enrichment rows.
pub const BASELINE: &str = "baseline";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    CosineAp,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::CosineAp => "cosine_ap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accuracy" => Some(Metric::Accuracy),
            "cosine_ap" => Some(Metric::CosineAp),
            _ => None,
        }
    }
}

/// Score of one (variant, dataset) cell, on a 0–100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variant_id: String,
    pub dataset: String,
    pub metric: Metric,
    pub score: f64,
}

/// A published score for an external model, shown for comparison only and
/// never used when computing improvements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub model: String,
    pub dataset: String,
    pub metric: Metric,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub variant_id: String,
    pub dataset: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub dataset: String,
    pub best_variant: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    #[serde(default)]
    pub references: Vec<ReferenceRow>,
    #[serde(default)]
    pub failures: Vec<CellFailure>,
    /// Best prompt variant minus baseline, per dataset that has both.
    #[serde(default)]
    pub improvement: Vec<Improvement>,
}

/// Rounds to two decimals, halves toward +∞.
///
/// The input is first snapped to 1e-6 of a cent so that binary noise such
/// as `8.210000000000008` or `-3.4499999999999886` rounds like the decimal
/// value it stands for.
pub fn round_half_up_2(x: f64) -> f64 {
    let cents = (x * 100.0 * 1e6).round() / 1e6;
    let r = (cents + 0.5).floor() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// `best − baseline`, rounded half-up to two decimals.
pub fn improvement(best: f64, baseline: f64) -> f64 {
    round_half_up_2(best - baseline)
}

impl ResultTable {
    /// Builds a table and derives its improvement row.
    ///
    /// Panics if two rows share a (variant, dataset) cell.
    pub fn new(
        rows: Vec<ResultRow>,
        references: Vec<ReferenceRow>,
        failures: Vec<CellFailure>,
    ) -> Self {
        let mut seen = HashSet::new();
        for r in &rows {
            assert!(
                seen.insert((r.variant_id.as_str(), r.dataset.as_str())),
                "duplicate cell ({}, {})",
                r.variant_id,
                r.dataset
            );
        }
        let mut table = Self {
            rows,
            references,
            failures,
            improvement: Vec::new(),
        };
        table.improvement = table.compute_improvement();
        table
    }

    fn compute_improvement(&self) -> Vec<Improvement> {
        let mut out = Vec::new();
        for dataset in self.datasets() {
            let Some(base) = self.score(BASELINE, &dataset) else {
                continue;
            };
            let mut best: Option<&ResultRow> = None;
            for r in self
                .rows
                .iter()
                .filter(|r| r.dataset == dataset && r.variant_id != BASELINE)
            {
                if best.is_none_or(|b| r.score > b.score) {
                    best = Some(r);
                }
            }
            if let Some(b) = best {
                out.push(Improvement {
                    dataset: dataset.clone(),
                    best_variant: b.variant_id.clone(),
                    value: improvement(b.score, base),
                });
            }
        }
        out
    }

    pub fn score(&self, variant: &str, dataset: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant_id == variant && r.dataset == dataset)
            .map(|r| r.score)
    }

    pub fn improvement_for(&self, dataset: &str) -> Option<f64> {
        self.improvement
            .iter()
            .find(|i| i.dataset == dataset)
            .map(|i| i.value)
    }

    /// Dataset names in order of first appearance (rows, then references).
    pub fn datasets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let names = self
            .rows
            .iter()
            .map(|r| &r.dataset)
            .chain(self.references.iter().map(|r| &r.dataset));
        for name in names {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
        out
    }

    /// Variant ids in order of first appearance, baseline included.
    pub fn variants(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.variant_id) {
                out.push(r.variant_id.clone());
            }
        }
        out
    }

    pub fn reference_models(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.references {
            if !out.contains(&r.model) {
                out.push(r.model.clone());
            }
        }
        out
    }

    pub fn metric_for(&self, dataset: &str) -> Option<Metric> {
        self.rows
            .iter()
            .map(|r| (&r.dataset, r.metric))
            .chain(self.references.iter().map(|r| (&r.dataset, r.metric)))
            .find(|(d, _)| *d == dataset)
            .map(|(_, m)| m)
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// The published comparison table: four prompt variants and the
    /// unenriched embedding model as baseline, with the leaderboard leader
    /// as a reference row.
    pub fn published() -> Self {
        const DATASETS: [(&str, Metric); 3] = [
            ("B77C", Metric::Accuracy),
            ("TwitterSemEval", Metric::CosineAp),
            ("AmazonCF", Metric::Accuracy),
        ];
        let variants: [(&str, [f64; 3]); 5] = [
            ("paper-1", [82.24, 84.84, 68.9]),
            ("paper-2", [78.73, 82.95, 71.9]),
            ("paper-3", [75.50, 83.10, 76.20]),
            ("paper-4", [79.71, 85.34, 68.00]),
            (BASELINE, [85.69, 77.13, 78.93]),
        ];
        let sfr = [88.81, 81.52, 77.93];
        let rows = variants
            .iter()
            .flat_map(|(v, scores)| {
                DATASETS.iter().zip(scores).map(|((d, m), s)| ResultRow {
                    variant_id: (*v).to_owned(),
                    dataset: (*d).to_owned(),
                    metric: *m,
                    score: *s,
                })
            })
            .collect();
        let references = DATASETS
            .iter()
            .zip(sfr)
            .map(|((d, m), s)| ReferenceRow {
                model: "SFR-Embedding-Mistral".to_owned(),
                dataset: (*d).to_owned(),
                metric: *m,
                score: s,
            })
            .collect();
        Self::new(rows, references, Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_examples() {
        assert_eq!(improvement(85.34, 77.13), 8.21);
        assert_eq!(improvement(82.24, 85.69), -3.45);
        assert_eq!(improvement(76.20, 78.93), -2.73);
        assert_eq!(improvement(42.0, 42.0), 0.0);
        assert!(improvement(42.0, 42.0).is_sign_positive());
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up_2(0.125), 0.13);
        assert_eq!(round_half_up_2(-0.125), -0.12);
        assert_eq!(round_half_up_2(1.005), 1.01);
        assert_eq!(round_half_up_2(2.0), 2.0);
    }

    #[test]
    fn published_improvements() {
        let t = ResultTable::published();
        assert_eq!(t.improvement_for("TwitterSemEval"), Some(8.21));
        assert_eq!(t.improvement_for("B77C"), Some(-3.45));
        assert_eq!(t.improvement_for("AmazonCF"), Some(-2.73));
        assert_eq!(t.improvement[1].best_variant, "paper-4");
        assert_eq!(t.datasets(), ["B77C", "TwitterSemEval", "AmazonCF"]);
        assert_eq!(t.reference_models(), ["SFR-Embedding-Mistral"]);
    }

    #[test]
    fn baseline_only_has_no_improvement() {
        let t = ResultTable::new(
            vec![ResultRow {
                variant_id: BASELINE.into(),
                dataset: "d".into(),
                metric: Metric::CosineAp,
                score: 70.0,
            }],
            vec![],
            vec![],
        );
        assert!(t.improvement.is_empty());
        assert_eq!(t.metric_for("d"), Some(Metric::CosineAp));
    }

    #[test]
    #[should_panic(expected = "duplicate cell")]
    fn duplicate_cells_rejected() {
        let row = ResultRow {
            variant_id: "v".into(),
            dataset: "d".into(),
            metric: Metric::Accuracy,
            score: 1.0,
        };
        ResultTable::new(vec![row.clone(), row], vec![], vec![]);
    }
}
