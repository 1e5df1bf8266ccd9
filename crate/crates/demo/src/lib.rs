//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes and returns plain strings (JSON where structured) so
//! the page needs no generated typings.

use enrichbench::datasets::synthetic_pairset;
use enrichbench::embed::{cosine, EmbedProvider, MockEmbedder};
use enrichbench::eval::{average_precision, ScoredPair};
use enrichbench::textprep::{PreprocessConfig, Step};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Preview {
    cleaned: String,
    applied_steps: Vec<&'static str>,
    tokens: usize,
}

/// Cleans `text` with the chosen steps and reports what was applied.
#[wasm_bindgen]
pub fn preprocess(text: &str, strip_noise: bool, lowercase: bool) -> String {
    let cfg = PreprocessConfig {
        strip_noise,
        lowercase,
    };
    let clean = cfg.apply(text);
    let preview = Preview {
        tokens: enrichbench::textprep::tokenize(&clean.value).len(),
        applied_steps: clean
            .applied_steps
            .iter()
            .map(|s: &Step| s.name())
            .collect(),
        cleaned: clean.value,
    };
    serde_json::to_string(&preview).expect("preview serializes")
}

fn mock_vectors(texts: &[&str], dim: usize, seed: u64) -> Result<Vec<Vec<f64>>, JsError> {
    MockEmbedder::new(dim, seed)
        .map_err(|e| JsError::new(&e.to_string()))?
        .embed("demo", texts)
        .map_err(|e| JsError::new(&e.to_string()))
}

/// Cosine similarity of two texts under the hashing mock embedder.
#[wasm_bindgen]
pub fn mock_cosine(a: &str, b: &str, dim: usize, seed: u64) -> Result<f64, JsError> {
    let v = mock_vectors(&[a, b], dim, seed)?;
    cosine(&v[0], &v[1]).map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Serialize)]
struct PairRun {
    dataset: String,
    pairs: usize,
    ap_percent: f64,
    top: Vec<RankedPair>,
}

#[derive(Serialize)]
struct RankedPair {
    text_a: String,
    text_b: String,
    gold: u8,
    score: f64,
}

/// Generates a synthetic paraphrase set, scores it with the mock embedder
/// and returns average precision plus the ten highest-ranked pairs.
#[wasm_bindgen]
pub fn synthetic_ap(
    positives: usize,
    negatives: usize,
    data_seed: u64,
    dim: usize,
    embed_seed: u64,
) -> Result<String, JsError> {
    let set = synthetic_pairset(positives, negatives, data_seed);
    let mut ranked = Vec::with_capacity(set.pairs.len());
    for pair in &set.pairs {
        let v = mock_vectors(&[&pair.text_a, &pair.text_b], dim, embed_seed)?;
        let score = cosine(&v[0], &v[1]).map_err(|e| JsError::new(&e.to_string()))?;
        ranked.push(RankedPair {
            text_a: pair.text_a.clone(),
            text_b: pair.text_b.clone(),
            gold: pair.label,
            score,
        });
    }
    let scored: Vec<ScoredPair> = ranked
        .iter()
        .zip(&set.pairs)
        .map(|(r, p)| ScoredPair {
            pair_id: p.id.clone(),
            score: r.score,
            gold: r.gold,
        })
        .collect();
    let ap = average_precision(&scored).map_err(|e| JsError::new(&e.to_string()))?;
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(10);
    let run = PairRun {
        dataset: set.name,
        pairs: scored.len(),
        ap_percent: ap * 100.0,
        top: ranked,
    };
    Ok(serde_json::to_string(&run).expect("run serializes"))
}
