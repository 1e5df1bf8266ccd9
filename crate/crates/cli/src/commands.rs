use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::Utc;
use enrichbench::datasets::{self, DatasetError};
use enrichbench::embed::{EmbedError, EmbedProviderConfig, Embedder};
use enrichbench::enrich::{
    prompt_fingerprint, ChatProviderConfig, EnrichError, EnrichInput, Enricher, PromptRegistry,
    PromptTemplate,
};
use enrichbench::eval::{run_experiment, EvalError, ExperimentConfig, ResultTable};
use enrichbench::hashing::{content_hash, sha256_hex};
use enrichbench::report::{parse_csv, ReportDocument, RunMetadata};
use enrichbench::store::Cache;
use enrichbench::textprep::{PreprocessConfig, Step};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::{Cli, Command, Format};

pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PROVIDER: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<enrichbench::store::StoreError> for CliError {
    fn from(e: enrichbench::store::StoreError) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<EnrichError> for CliError {
    fn from(e: EnrichError) -> Self {
        let code = match &e {
            EnrichError::Provider { .. } => EXIT_PROVIDER,
            EnrichError::Batch { failures, .. }
                if failures
                    .iter()
                    .any(|f| matches!(f, EnrichError::Provider { .. })) =>
            {
                EXIT_PROVIDER
            }
            EnrichError::Store(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        let code = match &e {
            EmbedError::Provider(_) => EXIT_PROVIDER,
            EmbedError::Store(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            fs::write(p, content).map_err(|e| CliError::io(p, e))
        }
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn open_cache(dir: &Path) -> Result<Cache, CliError> {
    Ok(Cache::open(dir)?)
}

fn parse_steps(names: &[String]) -> Result<PreprocessConfig, CliError> {
    let mut steps = Vec::new();
    for name in names
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty() && *s != "none")
    {
        steps.push(
            Step::parse(name).ok_or_else(|| CliError::usage(format!("unknown step {name:?}")))?,
        );
    }
    Ok(PreprocessConfig::from_steps(&steps))
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Prompts => {
            let mut out = String::new();
            for p in PromptRegistry::builtin().iter() {
                writeln!(
                    out,
                    "{}\t{}\t{}",
                    p.id,
                    sha256_hex(&p.system_text),
                    p.description
                )
                .ok();
            }
            emit(None, &out)?;
            Ok(0)
        }
        Command::Preprocess { input, out, steps } => {
            cmd_preprocess(&input, out.as_deref(), parse_steps(&steps)?)
        }
        Command::Enrich {
            input,
            prompt,
            prompt_file,
            provider_config,
            out,
            max_in_flight,
            fallback,
        } => {
            let mut cfg: ChatProviderConfig = read_json(&provider_config)?;
            if let Some(n) = max_in_flight {
                cfg.max_in_flight = n;
            }
            if let Some(f) = fallback {
                cfg.fallback = f.into();
            }
            let prompt = resolve_prompt(prompt.as_deref(), prompt_file.as_deref())?;
            cmd_enrich(&input, &prompt, cfg, &cli.cache_dir, out.as_deref())
        }
        Command::Embed {
            input,
            provider_config,
            out,
            max_in_flight,
        } => {
            let mut cfg: EmbedProviderConfig = read_json(&provider_config)?;
            if let Some(n) = max_in_flight {
                cfg.max_in_flight = n;
            }
            cmd_embed(&input, cfg, &cli.cache_dir, out.as_deref())
        }
        Command::Eval {
            config,
            out,
            seed,
            max_in_flight,
            fallback,
        } => {
            let raw = read_text(&config)?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&raw)
                .map_err(|e| CliError::usage(format!("{}: {e}", config.display())))?;
            cfg.resolve_paths(config.parent().unwrap_or(Path::new(".")));
            if let Some(s) = seed {
                cfg.classifier.seed = s;
            }
            if let Some(n) = max_in_flight {
                cfg.chat.max_in_flight = n;
                cfg.embed.max_in_flight = n;
            }
            if let Some(f) = fallback {
                cfg.chat.fallback = f.into();
            }
            cmd_eval(&cfg, &content_hash(&raw), &cli.cache_dir, out.as_deref())
        }
        Command::Report {
            table,
            published,
            format,
            out,
        } => {
            let table = if published {
                ResultTable::published()
            } else {
                let path = table.expect("clap requires --table without --published");
                if path.extension().is_some_and(|e| e == "csv") {
                    parse_csv(&read_text(&path)?).map_err(|e| CliError::usage(e.to_string()))?
                } else {
                    read_json(&path)?
                }
            };
            let doc = ReportDocument::new(table, None);
            let text = match format {
                Format::Markdown => doc.markdown,
                Format::Csv => doc.csv,
                Format::Json => to_json(&doc.result_table),
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn resolve_prompt(id: Option<&str>, file: Option<&Path>) -> Result<PromptTemplate, CliError> {
    match (id, file) {
        (id, Some(path)) => {
            let system_text = read_text(path)?.trim().to_owned();
            if system_text.is_empty() {
                return Err(CliError::usage(format!(
                    "{}: prompt file is empty",
                    path.display()
                )));
            }
            let id = id
                .map(str::to_owned)
                .unwrap_or_else(|| format!("file-{}", prompt_fingerprint(&system_text)));
            Ok(PromptTemplate {
                id,
                system_text,
                description: format!("loaded from {}", path.display()),
            })
        }
        (Some(id), None) => PromptRegistry::builtin()
            .get(id)
            .cloned()
            .ok_or_else(|| CliError::usage(format!("unknown prompt id {id:?}"))),
        (None, None) => Err(CliError::usage(
            "either --prompt or --prompt-file is required",
        )),
    }
}

const TEXT_FIELDS: [&str; 3] = ["text", "text_a", "text_b"];

/// Cleans the `text`, `text_a` and `text_b` string fields of every row,
/// leaving all other fields untouched.
pub fn cmd_preprocess(
    input: &Path,
    out: Option<&Path>,
    pp: PreprocessConfig,
) -> Result<u8, CliError> {
    let rows = datasets::jsonl_objects(&read_text(input)?)?;
    let mut changed = [0usize; 2];
    let mut buf = String::new();
    for (_, mut row) in rows.iter().cloned() {
        for field in TEXT_FIELDS {
            let Some(Value::String(raw)) = row.get(field) else {
                continue;
            };
            let stripped = if pp.strip_noise {
                enrichbench::textprep::strip_noise(raw)
            } else {
                enrichbench::textprep::CleanText::untouched(raw.clone())
            };
            changed[0] += usize::from(stripped.value != *raw);
            let before = stripped.value.clone();
            let cleaned = if pp.lowercase {
                enrichbench::textprep::lowercase(stripped)
            } else {
                stripped
            };
            changed[1] += usize::from(cleaned.value != before);
            row.insert(field.to_owned(), Value::String(cleaned.value));
        }
        writeln!(buf, "{}", Value::Object(row)).ok();
    }
    emit(out, &buf)?;
    eprintln!("rows: {}", rows.len());
    for step in pp.steps() {
        let idx = usize::from(step == Step::Lowercase);
        eprintln!("{step}: {} field(s) changed", changed[idx]);
    }
    Ok(0)
}

pub fn cmd_enrich(
    input: &Path,
    prompt: &PromptTemplate,
    cfg: ChatProviderConfig,
    cache_dir: &Path,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let docs = datasets::load_documents(input)?;
    let cache = open_cache(cache_dir)?;
    let enricher = Enricher::from_config(cfg)?;
    let inputs: Vec<EnrichInput> = docs.iter().map(EnrichInput::from).collect();
    let mut buf = String::new();
    if !inputs.is_empty() {
        for rec in enricher.enrich_batch(&inputs, prompt, &cache)? {
            writeln!(
                buf,
                "{}",
                serde_json::to_string(&rec).expect("record serializes")
            )
            .ok();
        }
    }
    emit(out, &buf)?;
    Ok(0)
}

#[derive(serde::Serialize)]
struct EmbeddingLine<'a> {
    id: &'a str,
    provider_id: &'a str,
    model_id: &'a str,
    source_hash: &'a str,
    dim: usize,
    values: &'a [f64],
}

pub fn cmd_embed(
    input: &Path,
    cfg: EmbedProviderConfig,
    cache_dir: &Path,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let docs = datasets::load_documents(input)?;
    let cache = open_cache(cache_dir)?;
    let embedder = Embedder::from_config(cfg).map_err(|e| CliError::usage(e.to_string()))?;
    let mut buf = String::new();
    if !docs.is_empty() {
        let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
        for (doc, v) in docs.iter().zip(embedder.embed_batch(&texts, &cache)?) {
            let line = EmbeddingLine {
                id: &doc.id,
                provider_id: &v.provider_id,
                model_id: &v.model_id,
                source_hash: &v.source_hash,
                dim: v.dim(),
                values: v.values(),
            };
            writeln!(
                buf,
                "{}",
                serde_json::to_string(&line).expect("line serializes")
            )
            .ok();
        }
    }
    emit(out, &buf)?;
    Ok(0)
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    config_digest: &str,
    cache_dir: &Path,
    out_dir: Option<&Path>,
) -> Result<u8, CliError> {
    let cache = open_cache(cache_dir)?;
    let started_at = Utc::now();
    let outcome = run_experiment(cfg, &cache).map_err(|e| match e {
        EvalError::Enrich(e) => CliError::from(e),
        EvalError::Embed(e) => CliError::from(e),
        other => CliError::usage(other.to_string()),
    })?;
    let metadata = RunMetadata {
        config_digest: config_digest.to_owned(),
        chat_provider: format!("{}/{}", cfg.chat.provider_id, cfg.chat.model_id),
        embed_provider: format!("{}/{}", cfg.embed.provider_id, cfg.embed.model_id),
        cache: cache.stats()?,
        fallback_count: outcome.fallback_count,
        started_at,
        finished_at: Utc::now(),
    };
    let complete = outcome.table.is_complete();
    let doc = ReportDocument::new(outcome.table, Some(metadata));

    let mut targets: Vec<(PathBuf, String)> = Vec::new();
    if let Some(p) = &cfg.output.table_json {
        targets.push((p.clone(), to_json(&doc.result_table)));
    }
    if let Some(p) = &cfg.output.markdown {
        targets.push((p.clone(), doc.markdown.clone()));
    }
    if let Some(p) = &cfg.output.csv {
        targets.push((p.clone(), doc.csv.clone()));
    }
    if let Some(dir) = out_dir {
        targets.push((dir.join("results.json"), to_json(&doc.result_table)));
        targets.push((dir.join("report.json"), to_json(&doc)));
        targets.push((dir.join("results.md"), doc.markdown.clone()));
        targets.push((dir.join("results.csv"), doc.csv.clone()));
    }
    if out_dir.is_none() {
        emit(None, &doc.markdown)?;
    }
    for (path, content) in &targets {
        emit(Some(path), content)?;
    }
    if let Some(meta) = &doc.run_metadata {
        eprintln!(
            "cache: {} hit(s), {} miss(es); {} fallback(s)",
            meta.cache.hit_count, meta.cache.miss_count, meta.fallback_count
        );
    }
    if complete {
        Ok(0)
    } else {
        for f in &doc.result_table.failures {
            eprintln!("cell ({}, {}) failed: {}", f.variant_id, f.dataset, f.error);
        }
        Ok(EXIT_PARTIAL)
    }
}
