//! JSONL ingestion for the two task shapes: single-text classification and
//! sentence-pair classification.
//!
//! Classification rows are `{"id", "text", "label", "split"}` with `split`
//! either `"train"` or `"test"`. Pair rows are `{"id", "text_a", "text_b",
//! "label"}` with `label` 0 or 1. Ids and class labels may be JSON strings
//! or integers; they are kept as strings.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("split {0:?} has no rows")]
    EmptySplit(String),
    #[error("pair labels must include both 0 and 1")]
    DegenerateLabels,
}

/// One corpus item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub id: String,
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationDataset {
    pub name: String,
    pub train: Vec<LabeledText>,
    pub test: Vec<LabeledText>,
    /// Sorted, distinct.
    pub label_set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPair {
    pub id: String,
    pub text_a: String,
    pub text_b: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDataset {
    pub name: String,
    pub pairs: Vec<TextPair>,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn name_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// A JSON object together with its 1-based line number.
pub type JsonRow = (usize, Map<String, Value>);

/// Non-blank lines parsed as JSON objects.
pub fn jsonl_objects(text: &str) -> Result<Vec<JsonRow>, DatasetError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        match value {
            Value::Object(map) => rows.push((line_no, map)),
            _ => {
                return Err(DatasetError::Schema {
                    line: line_no,
                    message: "expected a JSON object".into(),
                })
            }
        }
    }
    Ok(rows)
}

fn schema(line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        line,
        message: message.into(),
    }
}

fn string_field(
    row: &Map<String, Value>,
    line: usize,
    field: &str,
) -> Result<String, DatasetError> {
    match row.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(schema(line, format!("field {field:?} must be a string"))),
        None => Err(schema(line, format!("missing field {field:?}"))),
    }
}

fn key_field(row: &Map<String, Value>, line: usize, field: &str) -> Result<String, DatasetError> {
    match row.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) if n.is_i64() || n.is_u64() => Ok(n.to_string()),
        Some(_) => Err(schema(
            line,
            format!("field {field:?} must be a string or integer"),
        )),
        None => Err(schema(line, format!("missing field {field:?}"))),
    }
}

/// Reads `{id, text, label?}` rows.
pub fn load_documents(path: &Path) -> Result<Vec<Document>, DatasetError> {
    parse_documents(&read(path)?)
}

pub fn parse_documents(text: &str) -> Result<Vec<Document>, DatasetError> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (line, row) in jsonl_objects(text)? {
        let id = key_field(&row, line, "id")?;
        if !seen.insert(id.clone()) {
            return Err(schema(line, format!("duplicate id {id:?}")));
        }
        let label = match row.get("label") {
            None | Some(Value::Null) => None,
            Some(_) => Some(key_field(&row, line, "label")?),
        };
        docs.push(Document {
            id,
            text: string_field(&row, line, "text")?,
            label,
        });
    }
    Ok(docs)
}

pub fn load_classification(path: &Path) -> Result<ClassificationDataset, DatasetError> {
    parse_classification(&name_of(path), &read(path)?)
}

pub fn parse_classification(name: &str, text: &str) -> Result<ClassificationDataset, DatasetError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut train_ids = HashSet::new();
    let mut test_ids = HashSet::new();
    let mut labels = BTreeSet::new();
    for (line, row) in jsonl_objects(text)? {
        let item = LabeledText {
            id: key_field(&row, line, "id")?,
            text: string_field(&row, line, "text")?,
            label: key_field(&row, line, "label")?,
        };
        let (split, ids) = match string_field(&row, line, "split")?.as_str() {
            "train" => (&mut train, &mut train_ids),
            "test" => (&mut test, &mut test_ids),
            other => return Err(schema(line, format!("unknown split {other:?}"))),
        };
        if !ids.insert(item.id.clone()) {
            return Err(schema(
                line,
                format!("duplicate id {:?} within split", item.id),
            ));
        }
        labels.insert(item.label.clone());
        split.push(item);
    }
    if train.is_empty() {
        return Err(DatasetError::EmptySplit("train".into()));
    }
    if test.is_empty() {
        return Err(DatasetError::EmptySplit("test".into()));
    }
    Ok(ClassificationDataset {
        name: name.to_owned(),
        train,
        test,
        label_set: labels.into_iter().collect(),
    })
}

impl ClassificationDataset {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (split, rows) in [("train", &self.train), ("test", &self.test)] {
            for r in rows {
                let row = serde_json::json!({"id": r.id, "text": r.text, "label": r.label, "split": split});
                writeln!(out, "{row}").expect("writing to a String");
            }
        }
        out
    }
}

pub fn load_pairs(path: &Path) -> Result<PairDataset, DatasetError> {
    parse_pairs(&name_of(path), &read(path)?)
}

pub fn parse_pairs(name: &str, text: &str) -> Result<PairDataset, DatasetError> {
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (line, row) in jsonl_objects(text)? {
        let id = key_field(&row, line, "id")?;
        if !seen.insert(id.clone()) {
            return Err(schema(line, format!("duplicate id {id:?}")));
        }
        let label = match row.get("label").and_then(Value::as_u64) {
            Some(l @ (0 | 1)) => l as u8,
            Some(_) | None if row.contains_key("label") => {
                return Err(schema(line, "label must be 0 or 1"))
            }
            _ => return Err(schema(line, "missing field \"label\"")),
        };
        pairs.push(TextPair {
            id,
            text_a: string_field(&row, line, "text_a")?,
            text_b: string_field(&row, line, "text_b")?,
            label,
        });
    }
    let dataset = PairDataset {
        name: name.to_owned(),
        pairs,
    };
    dataset.check_labels()?;
    Ok(dataset)
}

impl PairDataset {
    pub fn check_labels(&self) -> Result<(), DatasetError> {
        let positives = self.pairs.iter().filter(|p| p.label == 1).count();
        if positives == 0 || positives == self.pairs.len() {
            return Err(DatasetError::DegenerateLabels);
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            writeln!(
                out,
                "{}",
                serde_json::to_string(p).expect("pair serializes")
            )
            .expect("writing to a String");
        }
        out
    }
}

const VOCAB: &[&str] = &[
    "account",
    "balance",
    "card",
    "transfer",
    "payment",
    "refund",
    "deposit",
    "loan",
    "branch",
    "limit",
    "fee",
    "charge",
    "statement",
    "savings",
    "credit",
    "debit",
    "cash",
    "wallet",
    "phone",
    "app",
    "login",
    "password",
    "email",
    "address",
    "delivery",
    "order",
    "package",
    "courier",
    "weather",
    "rain",
    "storm",
    "sunny",
    "winter",
    "summer",
    "beach",
    "mountain",
    "river",
    "forest",
    "garden",
    "flower",
    "coffee",
    "tea",
    "breakfast",
    "dinner",
    "recipe",
    "kitchen",
    "oven",
    "bread",
    "cheese",
    "apple",
    "orange",
    "banana",
    "music",
    "guitar",
    "piano",
    "concert",
    "album",
    "singer",
    "movie",
    "actor",
    "camera",
    "scene",
    "ticket",
    "theater",
    "football",
    "goal",
    "team",
    "coach",
    "season",
    "match",
    "player",
    "stadium",
    "election",
    "vote",
    "senate",
    "policy",
    "mayor",
    "city",
    "bridge",
    "traffic",
    "train",
    "station",
    "airport",
    "flight",
    "hotel",
    "island",
    "museum",
    "painting",
    "library",
    "novel",
    "poem",
    "author",
    "teacher",
    "school",
    "exam",
    "lesson",
    "student",
    "science",
    "planet",
    "rocket",
    "galaxy",
    "ocean",
    "whale",
    "dolphin",
    "tiger",
    "lion",
    "horse",
    "puppy",
    "kitten",
    "bird",
    "nest",
    "engine",
    "battery",
    "laptop",
    "screen",
    "keyboard",
    "server",
    "network",
    "update",
    "virus",
    "doctor",
    "nurse",
    "clinic",
    "medicine",
    "fever",
    "vaccine",
    "market",
    "stock",
    "price",
    "profit",
    "company",
    "startup",
    "office",
    "meeting",
    "deadline",
    "project",
    "budget",
];

const FILLERS: &[&str] = &[
    "the", "a", "my", "is", "was", "very", "today", "again", "so", "really",
];

fn sentence(rng: &mut ChaCha8Rng, len: usize) -> Vec<&'static str> {
    (0..len)
        .map(|_| *VOCAB.choose(rng).expect("vocab non-empty"))
        .collect()
}

/// Seeded synthetic pair set.
///
/// Positives share most content words (two of eight to eleven words are
/// replaced and a filler word is inserted); negatives are two independent
/// sentences. Pairs are shuffled so labels are interleaved.
pub fn synthetic_pairset(n_pos: usize, n_neg: usize, seed: u64) -> PairDataset {
    assert!(
        n_pos >= 1 && n_neg >= 1,
        "need at least one pair of each label"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pos + n_neg);
    for _ in 0..n_pos {
        let len = rng.gen_range(8..12);
        let a = sentence(&mut rng, len);
        let mut b = a.clone();
        for _ in 0..2 {
            let i = rng.gen_range(0..b.len());
            b[i] = VOCAB.choose(&mut rng).expect("vocab non-empty");
        }
        let at = rng.gen_range(0..=b.len());
        b.insert(at, FILLERS.choose(&mut rng).expect("fillers non-empty"));
        pairs.push((a.join(" "), b.join(" "), 1));
    }
    for _ in 0..n_neg {
        let (la, lb) = (rng.gen_range(8..12), rng.gen_range(8..12));
        let a = sentence(&mut rng, la);
        let b = sentence(&mut rng, lb);
        pairs.push((a.join(" "), b.join(" "), 0));
    }
    pairs.shuffle(&mut rng);
    PairDataset {
        name: format!("synthetic-{n_pos}-{n_neg}-{seed}"),
        pairs: pairs
            .into_iter()
            .enumerate()
            .map(|(i, (text_a, text_b, label))| TextPair {
                id: format!("syn-{i:05}"),
                text_a,
                text_b,
                label,
            })
            .collect(),
    }
}
