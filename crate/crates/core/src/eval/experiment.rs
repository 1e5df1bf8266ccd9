//! Config-driven comparison of prompt variants against the unenriched
//! baseline, one cell per (variant, dataset).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::classifier::{accuracy, fit_classifier, Hyperparameters};
use super::metrics::pair_task_score;
use super::table::{CellFailure, Metric, ReferenceRow, ResultRow, ResultTable, BASELINE};
use super::EvalError;
use crate::datasets::{self, ClassificationDataset, PairDataset};
use crate::embed::{EmbedProviderConfig, Embedder};
use crate::enrich::{ChatProviderConfig, EnrichInput, Enricher, PromptRegistry, PromptTemplate};
use crate::provider::bounded_map;
use crate::store::Cache;
use crate::textprep::{CleanText, PreprocessConfig, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Pair,
    Classification,
}

impl TaskKind {
    pub fn metric(self) -> Metric {
        match self {
            TaskKind::Pair => Metric::CosineAp,
            TaskKind::Classification => Metric::Accuracy,
        }
    }

    pub fn default_preprocess(self) -> PreprocessConfig {
        match self {
            TaskKind::Pair => PreprocessConfig::PAIRS,
            TaskKind::Classification => PreprocessConfig::CLASSIFICATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_pos: usize,
    pub n_neg: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Path { path: PathBuf },
    Synthetic { synthetic: SyntheticSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub task: TaskKind,
    #[serde(flatten)]
    pub source: DatasetSource,
    /// Must agree with the task when given.
    #[serde(default)]
    pub metric: Option<Metric>,
    /// Steps to run; the task's default when absent.
    #[serde(default)]
    pub preprocess: Option<Vec<Step>>,
}

impl DatasetSpec {
    pub fn preprocess_config(&self) -> PreprocessConfig {
        self.preprocess
            .as_deref()
            .map(PreprocessConfig::from_steps)
            .unwrap_or_else(|| self.task.default_preprocess())
    }
}

/// Whether cleanup runs on the text the model sees or on its output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessStage {
    #[default]
    BeforeEnrichment,
    AfterEnrichment,
}

/// Which sides of each pair are rewritten.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSides {
    #[default]
    Both,
    A,
    B,
}

impl PairSides {
    fn covers(self, side_a: bool) -> bool {
        matches!(
            (self, side_a),
            (PairSides::Both, _) | (PairSides::A, true) | (PairSides::B, false)
        )
    }
}

fn default_parallel_cells() -> usize {
    2
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default)]
    pub table_json: Option<PathBuf>,
    #[serde(default)]
    pub markdown: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSpec>,
    /// Prompt ids, plus `"baseline"` for the unenriched rows.
    pub variants: Vec<String>,
    pub chat: ChatProviderConfig,
    pub embed: EmbedProviderConfig,
    /// Extra prompts on top of the built-in registry.
    #[serde(default)]
    pub prompts: Vec<PromptTemplate>,
    #[serde(default)]
    pub preprocess_stage: PreprocessStage,
    #[serde(default)]
    pub pair_sides: PairSides,
    #[serde(default)]
    pub classifier: Hyperparameters,
    #[serde(default = "default_parallel_cells")]
    pub max_parallel_cells: usize,
    #[serde(default)]
    pub references: Vec<ReferenceRow>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    /// Makes relative dataset and output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            if let DatasetSource::Path { path } = &mut d.source {
                fix(path);
            }
        }
        for p in [
            &mut self.output.table_json,
            &mut self.output.markdown,
            &mut self.output.csv,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn registry(&self) -> Result<PromptRegistry, EvalError> {
        let mut registry = PromptRegistry::builtin();
        for p in &self.prompts {
            registry.insert(p.clone())?;
        }
        Ok(registry)
    }

    pub fn validate(&self) -> Result<PromptRegistry, EvalError> {
        let invalid = |m: String| Err(EvalError::InvalidConfig(m));
        if self.datasets.is_empty() {
            return invalid("no datasets".into());
        }
        if self.variants.is_empty() {
            return invalid("no variants".into());
        }
        let registry = self.registry()?;
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(v) {
                return invalid(format!("variant {v:?} listed twice"));
            }
            if v != BASELINE && registry.get(v).is_none() {
                return invalid(format!("unknown prompt id {v:?}"));
            }
        }
        for (i, d) in self.datasets.iter().enumerate() {
            if self.datasets[..i].iter().any(|o| o.name == d.name) {
                return invalid(format!("dataset {:?} listed twice", d.name));
            }
            if let Some(m) = d.metric {
                if m != d.task.metric() {
                    return invalid(format!(
                        "dataset {:?}: metric {} does not fit its task",
                        d.name,
                        m.as_str()
                    ));
                }
            }
        }
        if self.max_parallel_cells == 0 {
            return invalid("max_parallel_cells must be >= 1".into());
        }
        self.chat.validate()?;
        self.embed.validate()?;
        Ok(registry)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub table: ResultTable,
    /// Documents whose rewrite fell back to the original text.
    pub fallback_count: usize,
}

enum Loaded {
    Pair(PairDataset),
    Classification(ClassificationDataset),
}

fn load(spec: &DatasetSpec) -> Result<Loaded, EvalError> {
    Ok(match (&spec.source, spec.task) {
        (DatasetSource::Synthetic { synthetic: s }, TaskKind::Pair) => {
            if s.n_pos == 0 || s.n_neg == 0 {
                return Err(EvalError::InvalidConfig(format!(
                    "dataset {:?}: synthetic sets need n_pos, n_neg >= 1",
                    spec.name
                )));
            }
            Loaded::Pair(datasets::synthetic_pairset(s.n_pos, s.n_neg, s.seed))
        }
        (DatasetSource::Synthetic { .. }, TaskKind::Classification) => {
            return Err(EvalError::InvalidConfig(format!(
                "dataset {:?}: synthetic data is only available for pair tasks",
                spec.name
            )))
        }
        (DatasetSource::Path { path }, TaskKind::Pair) => Loaded::Pair(datasets::load_pairs(path)?),
        (DatasetSource::Path { path }, TaskKind::Classification) => {
            Loaded::Classification(datasets::load_classification(path)?)
        }
    })
}

/// Applies `pp`; if that empties a non-empty text, only the lowercase step
/// (when enabled) is kept so the document still has something to embed.
fn clean(raw: &str, pp: PreprocessConfig) -> String {
    let out = pp.apply(raw);
    if out.value.trim().is_empty() && !raw.trim().is_empty() {
        log::warn!(
            "preprocessing removed all text from {raw:?}; keeping it without noise stripping"
        );
        return PreprocessConfig {
            strip_noise: false,
            ..pp
        }
        .apply(raw)
        .value;
    }
    out.value
}

struct Cell<'a> {
    variant: &'a str,
    prompt: Option<&'a PromptTemplate>,
    dataset: usize,
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    enricher: Enricher,
    embedder: Embedder,
    cache: &'a Cache,
}

/// Output of a cell: its score and how many documents fell back.
type CellResult = Result<(f64, usize), EvalError>;

impl Runner<'_> {
    /// Texts as they will be embedded for this variant, in input order.
    fn texts(
        &self,
        raws: &[(String, String, bool)],
        pp: PreprocessConfig,
        prompt: Option<&PromptTemplate>,
    ) -> Result<(Vec<String>, usize), EvalError> {
        let cleaned: Vec<String> = raws.iter().map(|(_, raw, _)| clean(raw, pp)).collect();
        let Some(prompt) = prompt else {
            return Ok((cleaned, 0));
        };
        let before = self.cfg.preprocess_stage == PreprocessStage::BeforeEnrichment;
        let mut inputs = Vec::new();
        let mut slots = Vec::new();
        for (i, ((id, raw, rewrite), cleaned)) in raws.iter().zip(&cleaned).enumerate() {
            if !rewrite || cleaned.is_empty() {
                continue;
            }
            let text = if before {
                CleanText {
                    value: cleaned.clone(),
                    applied_steps: pp.steps(),
                }
            } else {
                CleanText::untouched(raw.clone())
            };
            inputs.push(EnrichInput::new(id.clone(), text));
            slots.push(i);
        }
        let mut out = cleaned;
        if inputs.is_empty() {
            return Ok((out, 0));
        }
        let records = self.enricher.enrich_batch(&inputs, prompt, self.cache)?;
        let mut fallbacks = 0;
        for (slot, rec) in slots.into_iter().zip(records) {
            fallbacks += usize::from(rec.fallback_used);
            let text = if before {
                rec.enriched
            } else {
                clean(&rec.enriched, pp)
            };
            if !text.trim().is_empty() {
                out[slot] = text;
            }
        }
        Ok((out, fallbacks))
    }

    fn run_pair(
        &self,
        ds: &PairDataset,
        pp: PreprocessConfig,
        prompt: Option<&PromptTemplate>,
    ) -> CellResult {
        let sides = self.cfg.pair_sides;
        let raws: Vec<(String, String, bool)> = ds
            .pairs
            .iter()
            .flat_map(|p| {
                [
                    (format!("{}:a", p.id), p.text_a.clone(), sides.covers(true)),
                    (format!("{}:b", p.id), p.text_b.clone(), sides.covers(false)),
                ]
            })
            .collect();
        let (texts, fallbacks) = self.texts(&raws, pp, prompt)?;
        let pairs: Vec<(String, String)> = texts
            .chunks_exact(2)
            .map(|ab| (ab[0].clone(), ab[1].clone()))
            .collect();
        Ok((
            pair_task_score(ds, &pairs, &self.embedder, self.cache)?,
            fallbacks,
        ))
    }

    fn run_classification(
        &self,
        ds: &ClassificationDataset,
        pp: PreprocessConfig,
        prompt: Option<&PromptTemplate>,
    ) -> CellResult {
        let mut fallbacks = 0;
        let mut embedded = Vec::new();
        for (split, rows) in [("train", &ds.train), ("test", &ds.test)] {
            let raws: Vec<(String, String, bool)> = rows
                .iter()
                .map(|r| (format!("{split}:{}", r.id), r.text.clone(), true))
                .collect();
            let (texts, fb) = self.texts(&raws, pp, prompt)?;
            fallbacks += fb;
            let vectors = self.embedder.embed_batch(&texts, self.cache)?;
            embedded.push(
                vectors
                    .into_iter()
                    .zip(rows.iter().map(|r| r.label.clone()))
                    .collect::<Vec<_>>(),
            );
        }
        let fit = fit_classifier(&embedded[0], &self.cfg.classifier)?;
        Ok((accuracy(&fit.classifier, &embedded[1])?, fallbacks))
    }
}

/// Runs every (variant, dataset) cell. Dataset and configuration problems are
/// returned as errors; provider or metric failures inside a cell are recorded
/// in the table's `failures` and the remaining cells still run.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    cache: &Cache,
) -> Result<ExperimentOutcome, EvalError> {
    let registry = cfg.validate()?;
    let loaded = cfg
        .datasets
        .iter()
        .map(load)
        .collect::<Result<Vec<_>, _>>()?;
    let runner = Runner {
        cfg,
        enricher: Enricher::from_config(cfg.chat.clone())?,
        embedder: Embedder::from_config(cfg.embed.clone())?,
        cache,
    };

    let cells: Vec<Cell<'_>> = (0..cfg.datasets.len())
        .flat_map(|dataset| cfg.variants.iter().map(move |v| (dataset, v)))
        .map(|(dataset, variant)| Cell {
            variant,
            prompt: registry.get(variant),
            dataset,
        })
        .collect();
    let results: Vec<CellResult> = bounded_map(&cells, cfg.max_parallel_cells, |_, cell| {
        let spec = &cfg.datasets[cell.dataset];
        let pp = spec.preprocess_config();
        match &loaded[cell.dataset] {
            Loaded::Pair(ds) => runner.run_pair(ds, pp, cell.prompt),
            Loaded::Classification(ds) => runner.run_classification(ds, pp, cell.prompt),
        }
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut fallback_count = 0;
    for (cell, result) in cells.iter().zip(results) {
        let spec = &cfg.datasets[cell.dataset];
        match result {
            Ok((score, fallbacks)) => {
                fallback_count += fallbacks;
                rows.push(ResultRow {
                    variant_id: cell.variant.to_owned(),
                    dataset: spec.name.clone(),
                    metric: spec.task.metric(),
                    score,
                });
            }
            Err(e) => {
                log::error!("cell ({}, {}) failed: {e}", cell.variant, spec.name);
                failures.push(CellFailure {
                    variant_id: cell.variant.to_owned(),
                    dataset: spec.name.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(ExperimentOutcome {
        table: ResultTable::new(rows, cfg.references.clone(), failures),
        fallback_count,
    })
}
